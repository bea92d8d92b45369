//! HIT composition, the annotation server, label aggregation and agreement.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use vlogvis_core::annotation::service::{AnnotationService, ClipFrames};
use vlogvis_core::annotation::{
    aggregate, build_hits, fleiss_kappa, vote_matrix, KappaError, AnnotationRecord, BinaryLabel, ClipActions,
    GroundTruthClip, Hit,
};
use vlogvis_core::segmentation::Miniclip;
use vlogvis_core::seed::stage_seed;

use super::Ctx;
use crate::error::{CliError, Result};
use crate::formats::{ActionRecord, LabelRecord, VideoRecord};
use crate::io::{read_json, read_jsonl, write_atomic, write_jsonl};

pub const DEFAULT_PER_HIT: usize = 5;
pub const DEFAULT_MAX_ACTIONS: usize = 7;
const RATERS: usize = 3;

/// Splits the kept miniclips into HITs, each with one ground-truth clip.
pub fn hits(ctx: &Ctx) -> Result<()> {
    let s = &ctx.settings;
    let clips_path = s.input("miniclips")?;
    let actions_path = s.input("actions")?;
    let gt_path = s.input("ground_truth")?;
    let out = s.output("out")?;
    let per_hit: usize = s.value("per_hit", DEFAULT_PER_HIT)?;
    let max_actions: usize = s.value("max_actions", DEFAULT_MAX_ACTIONS)?;
    if per_hit < 2 || max_actions == 0 {
        return Err(CliError::Config("per_hit must be ≥ 2 and max_actions ≥ 1".into()));
    }
    let clips: Vec<Miniclip> = read_jsonl(&clips_path)?;
    let actions: Vec<ActionRecord> = read_jsonl(&actions_path)?;
    let gt: Vec<GroundTruthClip> = read_jsonl(&gt_path)?;
    let times: HashMap<&str, f64> = actions.iter().map(|a| (a.action_id.as_str(), a.time_s)).collect();
    let gt_ids: BTreeSet<&str> = gt.iter().map(|g| g.miniclip_id.as_str()).collect();
    let mut regular = Vec::new();
    for c in &clips {
        let id = c.id();
        if gt_ids.contains(id.as_str()) {
            continue;
        }
        let actions = c
            .action_ids
            .iter()
            .map(|a| {
                times.get(a.as_str()).map(|&t| (a.clone(), t)).ok_or_else(|| {
                    CliError::input(&clips_path, format!("miniclip {id} lists unknown action {a}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        regular.push(ClipActions { miniclip_id: id, actions });
    }
    regular.sort_by(|a, b| a.miniclip_id.cmp(&b.miniclip_id));
    let hits = build_hits(&regular, &gt, per_hit, max_actions, stage_seed(ctx.seed, "hits"))
        .map_err(|e| CliError::input(&gt_path, e))?;
    eprintln!("hits: {} HITs from {} miniclips", hits.len(), regular.len());
    write_jsonl(&out, &hits)
}

/// Builds the service from pipeline artifacts and replays `log` if it exists.
pub fn build_service(ctx: &Ctx) -> Result<AnnotationService> {
    let s = &ctx.settings;
    let hits: Vec<Hit> = read_jsonl(&s.input("hits")?)?;
    let videos: Vec<VideoRecord> = read_jsonl(&s.input("videos")?)?;
    let clips: Vec<Miniclip> = read_jsonl(&s.input("miniclips")?)?;
    let actions: Vec<ActionRecord> = read_jsonl(&s.input("actions")?)?;
    let gt: Vec<GroundTruthClip> = read_jsonl(&s.input("ground_truth")?)?;

    let gt_labels: HashMap<String, BinaryLabel> = gt
        .iter()
        .flat_map(|g| g.labels.iter().map(|(a, _, l)| (a.clone(), *l)))
        .collect();
    let action_text = actions.into_iter().map(|a| (a.action_id, a.text)).collect();
    let by_video: HashMap<&str, &VideoRecord> =
        videos.iter().map(|v| (v.video_id.as_str(), v)).collect();
    let frames = clips
        .iter()
        .filter_map(|c| {
            by_video.get(c.video_id.as_str()).map(|v| {
                (
                    c.id(),
                    ClipFrames {
                        frames_dir: PathBuf::from(&v.frames_dir),
                        fps: v.fps,
                        start_s: c.start_s,
                        end_s: c.end_s,
                    },
                )
            })
        })
        .collect();
    let svc = AnnotationService::new(hits, gt_labels, action_text, frames);
    let Some(log_path) = s.opt_output("log") else {
        return Ok(svc);
    };
    if log_path.exists() {
        let previous: Vec<AnnotationRecord> = read_jsonl(&log_path)?;
        eprintln!("serve: restored {} records", previous.len());
        svc.restore(previous);
    }
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", log_path.display())))?;
    Ok(svc.with_log(Box::new(file)))
}

pub fn serve(ctx: &Ctx) -> Result<()> {
    let svc = Arc::new(build_service(ctx)?);
    let host = ctx.settings.get("host").unwrap_or("127.0.0.1").to_string();
    let port: u16 = ctx.settings.value("port", 8080)?;
    let rt = tokio::runtime::Runtime::new().map_err(CliError::runtime)?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host.as_str(), port))
            .await
            .map_err(|e| CliError::runtime(format!("bind {host}:{port}: {e}")))?;
        eprintln!("serve: listening on http://{host}:{port}");
        axum::serve(listener, crate::server::router(svc))
            .await
            .map_err(CliError::runtime)
    })
}

/// Keeps only (miniclip, action) groups with exactly three records.
fn complete_only(records: Vec<AnnotationRecord>) -> (Vec<AnnotationRecord>, usize) {
    let mut sizes: BTreeMap<(String, String), usize> = BTreeMap::new();
    for r in &records {
        *sizes.entry((r.miniclip_id.clone(), r.action_id.clone())).or_default() += 1;
    }
    let skipped = sizes.values().filter(|&&n| n != RATERS).count();
    let kept = records
        .into_iter()
        .filter(|r| sizes[&(r.miniclip_id.clone(), r.action_id.clone())] == RATERS)
        .collect();
    (kept, skipped)
}

/// Majority vote over the accepted annotation records.
pub fn aggregate_cmd(ctx: &Ctx) -> Result<()> {
    let s = &ctx.settings;
    let records_path = s.input("records")?;
    let out = s.output("out")?;
    let mut records: Vec<AnnotationRecord> = read_jsonl(&records_path)?;
    if s.flag("skip_incomplete")? {
        let (kept, skipped) = complete_only(records);
        if skipped > 0 {
            eprintln!("aggregate: skipped {skipped} actions without three annotations");
        }
        records = kept;
    }
    let labels: Vec<LabelRecord> = aggregate(&records)
        .map_err(|e| CliError::input(&records_path, e))?
        .into_iter()
        .map(|a| LabelRecord {
            miniclip_id: a.miniclip_id,
            action_id: a.action_id,
            label: a.label,
        })
        .collect();
    eprintln!("aggregate: {} labels", labels.len());
    write_jsonl(&out, &labels)
}

#[derive(Serialize)]
struct KappaReport {
    kappa: f64,
    items: usize,
    raters: u32,
}

fn count_rows(path: &Path) -> Result<Vec<Vec<u32>>> {
    read_json(path)
}

/// Fleiss' kappa over annotation records (binarized labels) or a count
/// matrix. Prints the value; undefined kappa is a runtime failure.
pub fn kappa(ctx: &Ctx) -> Result<()> {
    let s = &ctx.settings;
    let (source, counts) = match (s.opt_input("records")?, s.opt_input("matrix")?) {
        (Some(p), None) => {
            let counts = vote_matrix(&read_jsonl::<AnnotationRecord>(&p)?);
            (p, counts)
        }
        (None, Some(p)) => {
            let counts = count_rows(&p)?;
            (p, counts)
        }
        _ => return Err(CliError::Config("give exactly one of records or matrix".into())),
    };
    let default_raters = counts.first().map_or(RATERS as u32, |r| r.iter().sum());
    let raters: u32 = s.value("raters", default_raters)?;
    let k = fleiss_kappa(&counts, raters).map_err(|e| match e {
        KappaError::DegenerateAgreement => CliError::runtime(format!("kappa undefined: {e}")),
        other => CliError::input(&source, other),
    })?;
    println!("{k:?}");
    if let Some(p) = s.opt_output("out") {
        let report = KappaReport { kappa: k, items: counts.len(), raters };
        let mut bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
        bytes.push(b'\n');
        write_atomic(&p, &bytes)?;
    }
    Ok(())
}
