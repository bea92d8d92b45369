//! Corpus construction: ingest → extract → segment → motion-filter.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use vlogvis_core::extraction::{
    extract_actions, read_pos_sidecar, split_sentences, split_sentences_at, tag_from_sidecar,
    tag_with_lexicon, transcript_tokens, ChunkRules, Lexicon,
};
use vlogvis_core::segmentation::{
    filter_static, frame_file_name, motion_score, segment, Frame, Miniclip, SegmentationError,
};
use vlogvis_core::transcript::{filter_by_density, parse_transcript, read_manifest, ManifestEntry};

use super::Ctx;
use crate::error::{CliError, Result};
use crate::formats::{ActionRecord, MotionRecord, VideoRecord};
use crate::io::{read_jsonl, read_text, write_jsonl};

pub const DEFAULT_PAD_S: f64 = 15.0;
pub const DEFAULT_MAX_CORE_S: f64 = 60.0;
pub const DEFAULT_MOTION_THRESHOLD: f64 = 0.8;
pub const DEFAULT_STRIDE: usize = 100;

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn load_video(entry: &ManifestEntry, base: &Path) -> Result<VideoRecord> {
    let path = resolve(base, &entry.transcript_path);
    let raw = std::fs::read(&path)
        .map_err(|e| CliError::Config(format!("transcript {}: {e}", path.display())))?;
    let t = parse_transcript(&raw, &entry.video_id, entry.duration_s)
        .map_err(|e| CliError::input(&path, e))?;
    Ok(VideoRecord {
        video_id: entry.video_id.clone(),
        channel: entry.channel.clone(),
        duration_s: entry.duration_s,
        frames_dir: resolve(base, &entry.frames_dir).display().to_string(),
        fps: entry.fps(),
        words: t.word_count() as u64,
        cues: t.cues,
    })
}

/// Parses every transcript in the manifest and keeps videos whose speech
/// rate meets `min_rate`.
pub fn ingest(ctx: &Ctx) -> Result<()> {
    let s = &ctx.settings;
    let manifest = s.input("manifest")?;
    let out = s.output("out")?;
    let min_rate = s.bounded(
        "min_rate",
        vlogvis_core::transcript::DEFAULT_MIN_RATE,
        0.0,
        f64::MAX,
    )?;
    let entries = read_manifest(read_text(&manifest)?.as_bytes())
        .map_err(|e| CliError::input(&manifest, e))?;
    let mut ids = BTreeSet::new();
    if let Some(dup) = entries.iter().find(|e| !ids.insert(e.video_id.as_str())) {
        return Err(CliError::input(&manifest, format!("duplicate video_id {:?}", dup.video_id)));
    }
    let base = manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut videos: Vec<VideoRecord> = ctx.pool.install(|| {
        entries
            .par_iter()
            .map(|e| load_video(e, &base))
            .collect::<Result<_>>()
    })?;
    videos.sort_by(|a, b| a.video_id.cmp(&b.video_id));

    let transcripts = videos
        .iter()
        .map(VideoRecord::transcript)
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| CliError::input(&manifest, e))?;
    let (kept, dropped) =
        filter_by_density(transcripts, min_rate).map_err(|e| CliError::input(&manifest, e))?;
    let kept: BTreeSet<String> = kept.into_iter().map(|t| t.video_id).collect();
    videos.retain(|v| kept.contains(&v.video_id));
    eprintln!(
        "ingest: kept {} videos, dropped {} below {min_rate} words/s",
        videos.len(),
        dropped.len()
    );
    write_jsonl(&out, &videos)
}

fn load_rules(ctx: &Ctx) -> Result<ChunkRules> {
    match ctx.settings.opt_input("rules")? {
        Some(p) => ChunkRules::parse(&read_text(&p)?).map_err(|e| CliError::input(&p, e)),
        None => Ok(ChunkRules::default()),
    }
}

fn load_lexicon(ctx: &Ctx) -> Result<Lexicon> {
    match ctx.settings.opt_input("lexicon")? {
        Some(p) => Lexicon::parse_tsv(&read_text(&p)?).map_err(|e| CliError::input(&p, e)),
        None => Ok(Lexicon::builtin()),
    }
}

fn actions_for(
    v: &VideoRecord,
    rules: &ChunkRules,
    lexicon: &Lexicon,
    pos_dir: Option<&Path>,
    source: &Path,
) -> Result<Vec<ActionRecord>> {
    let t = v.transcript().map_err(|e| CliError::input(source, e))?;
    let sidecar = pos_dir
        .map(|d| d.join(format!("{}.pos", v.video_id)))
        .filter(|p| p.exists());
    let sentences = match sidecar {
        Some(p) => {
            let parsed = read_pos_sidecar(&read_text(&p)?).map_err(|e| CliError::input(&p, e))?;
            let (tags, starts) = tag_from_sidecar(&t, &parsed).map_err(|e| CliError::input(&p, e))?;
            split_sentences_at(&t, &tags, rules.gap_s, &starts)
        }
        None => {
            let tags = tag_with_lexicon(&transcript_tokens(&t), lexicon);
            split_sentences(&t, &tags, rules.gap_s)
        }
    }
    .map_err(|e| CliError::input(source, e))?;
    let candidates = extract_actions(&t, &sentences, rules).map_err(|e| CliError::input(source, e))?;
    Ok(candidates
        .into_iter()
        .enumerate()
        .map(|(n, a)| ActionRecord {
            action_id: format!("{}_a{n:04}", v.video_id),
            video_id: v.video_id.clone(),
            text: a.text(),
            tokens: a.surfaces(),
            tags: a.tags().iter().map(|t| t.as_str().to_string()).collect(),
            time_s: a.time_s.expect("extract_actions stamps times"),
            sentence_index: a.sentence_index,
            span: a.span,
            sentence: sentences[a.sentence_index]
                .tokens
                .iter()
                .map(|t| t.surface.clone())
                .collect(),
        })
        .collect())
}

/// Tags each transcript (POS sidecar when present, lexicon otherwise) and
/// chunks it into timestamped candidate actions.
pub fn extract(ctx: &Ctx) -> Result<()> {
    let s = &ctx.settings;
    let source = s.input("videos")?;
    let out = s.output("out")?;
    let rules = load_rules(ctx)?;
    let lexicon = load_lexicon(ctx)?;
    let pos_dir = s.opt_input("pos_dir")?;
    let videos: Vec<VideoRecord> = read_jsonl(&source)?;
    let per_video: Vec<Vec<ActionRecord>> = ctx.pool.install(|| {
        videos
            .par_iter()
            .map(|v| actions_for(v, &rules, &lexicon, pos_dir.as_deref(), &source))
            .collect::<Result<_>>()
    })?;
    let mut actions: Vec<ActionRecord> = per_video.into_iter().flatten().collect();
    actions.sort_by(|a, b| a.action_id.cmp(&b.action_id));
    eprintln!("extract: {} actions from {} videos", actions.len(), videos.len());
    write_jsonl(&out, &actions)
}

/// Groups each video's actions into padded miniclips.
pub fn segment_cmd(ctx: &Ctx) -> Result<()> {
    let s = &ctx.settings;
    let videos_path = s.input("videos")?;
    let actions_path = s.input("actions")?;
    let out = s.output("out")?;
    let pad_s = s.bounded("pad_s", DEFAULT_PAD_S, 0.0, f64::MAX)?;
    let max_core_s = s.bounded("max_core_s", DEFAULT_MAX_CORE_S, 0.0, f64::MAX)?;
    let videos: Vec<VideoRecord> = read_jsonl(&videos_path)?;
    let actions: Vec<ActionRecord> = read_jsonl(&actions_path)?;
    let durations: BTreeMap<&str, f64> =
        videos.iter().map(|v| (v.video_id.as_str(), v.duration_s)).collect();
    let mut by_video: BTreeMap<&str, Vec<(String, f64)>> = BTreeMap::new();
    for a in &actions {
        if !durations.contains_key(a.video_id.as_str()) {
            return Err(CliError::input(
                &actions_path,
                format!("action {} refers to unknown video {}", a.action_id, a.video_id),
            ));
        }
        by_video
            .entry(a.video_id.as_str())
            .or_default()
            .push((a.action_id.clone(), a.time_s));
    }
    for list in by_video.values_mut() {
        list.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    }
    let groups: Vec<(&str, Vec<(String, f64)>)> = by_video.into_iter().collect();
    let per_video: Vec<Vec<Miniclip>> = ctx.pool.install(|| {
        groups
            .par_iter()
            .map(|(vid, list)| {
                segment(vid, durations[vid], list, max_core_s, pad_s).map_err(CliError::runtime)
            })
            .collect::<Result<_>>()
    })?;
    let mut clips: Vec<Miniclip> = per_video.into_iter().flatten().collect();
    clips.sort_by(|a, b| (&a.video_id, a.index).cmp(&(&b.video_id, b.index)));
    eprintln!("segment: {} miniclips", clips.len());
    write_jsonl(&out, &clips)
}

/// Reads every `stride`-th native frame inside the clip, stopping at the
/// first frame file that does not exist.
fn sampled_frames(clip: &Miniclip, v: &VideoRecord, stride: usize) -> Result<Vec<Frame>> {
    let dir = Path::new(&v.frames_dir);
    let first = (clip.start_s * v.fps).round() as usize;
    let last = (clip.end_s * v.fps).round() as usize;
    let mut frames = Vec::new();
    for idx in (first..=last).step_by(stride.max(1)) {
        let path = dir.join(frame_file_name(idx));
        let Ok(file) = std::fs::File::open(&path) else {
            break;
        };
        let f = Frame::read_pgm(std::io::BufReader::new(file))
            .map_err(|e| CliError::input(&path, e))?;
        frames.push(f);
    }
    Ok(frames)
}

/// Scores each miniclip's motion and drops those above the threshold.
pub fn motion_filter(ctx: &Ctx) -> Result<()> {
    let s = &ctx.settings;
    let videos_path = s.input("videos")?;
    let clips_path = s.input("miniclips")?;
    let out = s.output("out")?;
    let threshold = s.bounded("threshold", DEFAULT_MOTION_THRESHOLD, -1.0, 1.0)?;
    let stride: usize = s.value("stride", DEFAULT_STRIDE)?;
    if stride == 0 {
        return Err(CliError::Config("stride must be positive".into()));
    }
    let videos: Vec<VideoRecord> = read_jsonl(&videos_path)?;
    let by_id: BTreeMap<&str, &VideoRecord> =
        videos.iter().map(|v| (v.video_id.as_str(), v)).collect();
    let mut clips: Vec<Miniclip> = read_jsonl(&clips_path)?;
    clips.sort_by_key(Miniclip::id);
    for c in &clips {
        if !by_id.contains_key(c.video_id.as_str()) {
            return Err(CliError::input(
                &clips_path,
                format!("miniclip {} refers to unknown video {}", c.id(), c.video_id),
            ));
        }
    }
    // Ok(Some) scored, Ok(None) too short to score, Err(NoScorablePairs) static.
    let outcomes: Vec<Result<std::result::Result<Option<f64>, ()>>> = ctx.pool.install(|| {
        clips
            .par_iter()
            .map(|c| {
                let frames = sampled_frames(c, by_id[c.video_id.as_str()], stride)?;
                match motion_score(&frames, 1) {
                    Ok(r) => Ok(Ok(Some(r))),
                    Err(SegmentationError::TooFewFrames { .. }) => Ok(Ok(None)),
                    Err(SegmentationError::NoScorablePairs) => Ok(Err(())),
                    Err(e) => Err(CliError::input(Path::new(&by_id[c.video_id.as_str()].frames_dir), e)),
                }
            })
            .collect()
    });
    let mut report = Vec::with_capacity(clips.len());
    let mut scored = Vec::new();
    let mut scores = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o? {
            Ok(Some(r)) => {
                scored.push(i);
                scores.push(r);
                report.push(MotionRecord { miniclip_id: clips[i].id(), score: Some(r), kept: false });
            }
            Ok(None) => report.push(MotionRecord { miniclip_id: clips[i].id(), score: None, kept: true }),
            Err(()) => report.push(MotionRecord { miniclip_id: clips[i].id(), score: None, kept: false }),
        }
    }
    let (kept_scored, _) = filter_static(scored, &scores, threshold).map_err(CliError::runtime)?;
    for i in kept_scored {
        report[i].kept = true;
    }
    let kept: Vec<Miniclip> = clips
        .into_iter()
        .zip(&report)
        .filter(|(_, r)| r.kept)
        .map(|(c, _)| c)
        .collect();
    eprintln!("motion-filter: kept {} of {} miniclips", kept.len(), report.len());
    if let Some(p) = s.opt_output("scores_out") {
        write_jsonl(&p, &report)?;
    }
    write_jsonl(&out, &kept)
}
