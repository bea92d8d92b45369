//! Per-(miniclip, action) feature records for the classifiers.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use vlogvis_core::annotation::{split_by_channel, ChannelSplit};
use vlogvis_core::classifiers::{object_match_score, SimilarityMode};
use vlogvis_core::evaluation::Split;
use vlogvis_core::extraction::PosTag;
use vlogvis_core::features::{
    action_embedding, concreteness_score, context_features, pos_embedding, read_detections,
    ConcretenessLexicon, EmbeddingTable, Taxonomy, CONTEXT_WINDOW,
};
use vlogvis_core::neural::Extra;
use vlogvis_core::segmentation::Miniclip;

use super::Ctx;
use crate::error::{CliError, Result};
use crate::formats::{
    ActionRecord, ActionVector, FeatureRecord, LabelRecord, MatrixRow, VideoRecord,
};
use crate::io::{read_jsonl, read_text, write_jsonl};

/// Names accepted in `inputs` lists: `action` plus every extra.
pub fn parse_inputs(names: &[String]) -> Result<(bool, Vec<Extra>)> {
    let mut action = false;
    let mut extras = BTreeSet::new();
    for n in names {
        if n == "action" {
            action = true;
        } else {
            let e: Extra = n
                .parse()
                .map_err(|_| CliError::Config(format!("unknown input feature {n:?}")))?;
            extras.insert(e);
        }
    }
    Ok((action, extras.into_iter().collect()))
}

/// The values an extra contributes. A missing concreteness score is 0.
pub fn extra_values(r: &FeatureRecord, e: Extra) -> Vec<f64> {
    match e {
        Extra::Pos => r.pos.clone(),
        Extra::ContextS => r.context_s.clone(),
        Extra::ContextA => r.context_a.clone(),
        Extra::Concreteness => vec![r.concreteness.unwrap_or(0.0)],
    }
}

/// Concatenation of the selected inputs, action vector first.
pub fn input_vector(r: &FeatureRecord, action: bool, extras: &[Extra]) -> Vec<f64> {
    let mut v = if action { r.action.clone() } else { Vec::new() };
    for &e in extras {
        v.extend(extra_values(r, e));
    }
    v
}

fn load_table(ctx: &Ctx, key: &str) -> Result<Option<EmbeddingTable>> {
    ctx.settings
        .opt_input(key)?
        .map(|p| EmbeddingTable::parse_text(&read_text(&p)?).map_err(|e| CliError::input(&p, e)))
        .transpose()
}

fn channel_split(ctx: &Ctx, videos: &[VideoRecord]) -> Result<ChannelSplit> {
    let s = &ctx.settings;
    let channels = match s.list("channels") {
        Some(c) => c,
        None => videos
            .iter()
            .map(|v| v.channel.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let n_train: usize = s.value("train_channels", 8)?;
    let n_val: usize = s.value("validation_channels", 1)?;
    Ok(ChannelSplit::with_sizes(&channels, n_train, n_val))
}

pub fn features(ctx: &Ctx) -> Result<()> {
    let s = &ctx.settings;
    let videos_path = s.input("videos")?;
    let actions_path = s.input("actions")?;
    let clips_path = s.input("miniclips")?;
    let labels_path = s.input("labels")?;
    let out = s.output("out")?;
    let window: usize = s.value("context_window", CONTEXT_WINDOW)?;
    let min_conf = s.bounded("min_confidence", 0.0, 0.0, 1.0)?;

    let table = load_table(ctx, "embeddings")?
        .ok_or_else(|| CliError::Config("missing required setting \"embeddings\"".into()))?;
    let pos_table = load_table(ctx, "pos_embeddings")?;
    let lexicon = s
        .opt_input("concreteness")?
        .map(|p| ConcretenessLexicon::parse_tsv(&read_text(&p)?).map_err(|e| CliError::input(&p, e)))
        .transpose()?;
    let taxonomy = s
        .opt_input("taxonomy")?
        .map(|p| Taxonomy::parse_tsv(&read_text(&p)?).map_err(|e| CliError::input(&p, e)))
        .transpose()?;
    let detections = s
        .opt_input("detections")?
        .map(|p| {
            let f = std::fs::File::open(&p).map_err(CliError::runtime)?;
            read_detections(std::io::BufReader::new(f), min_conf).map_err(|e| CliError::input(&p, e))
        })
        .transpose()?;
    let vectors: HashMap<String, Vec<f64>> = match s.opt_input("action_vectors")? {
        Some(p) => read_jsonl::<ActionVector>(&p)?
            .into_iter()
            .map(|v| (v.action_id, v.vector))
            .collect(),
        None => HashMap::new(),
    };

    let videos: Vec<VideoRecord> = read_jsonl(&videos_path)?;
    let actions: Vec<ActionRecord> = read_jsonl(&actions_path)?;
    let clips: Vec<Miniclip> = read_jsonl(&clips_path)?;
    let labels: Vec<LabelRecord> = read_jsonl(&labels_path)?;
    let video_by_id: HashMap<&str, &VideoRecord> =
        videos.iter().map(|v| (v.video_id.as_str(), v)).collect();
    let clip_ids: BTreeSet<String> = clips.iter().map(Miniclip::id).collect();

    // Neighbouring actions in transcript order, per video.
    let mut ordered: BTreeMap<&str, Vec<&ActionRecord>> = BTreeMap::new();
    for a in &actions {
        ordered.entry(a.video_id.as_str()).or_default().push(a);
    }
    let mut neighbours: HashMap<&str, (Option<&ActionRecord>, Option<&ActionRecord>)> = HashMap::new();
    for list in ordered.values_mut() {
        list.sort_by(|a, b| a.action_id.cmp(&b.action_id));
        for (i, a) in list.iter().enumerate() {
            let prev = i.checked_sub(1).map(|j| list[j]);
            neighbours.insert(a.action_id.as_str(), (prev, list.get(i + 1).copied()));
        }
    }
    let by_action: HashMap<&str, &ActionRecord> =
        actions.iter().map(|a| (a.action_id.as_str(), a)).collect();

    let mut records = Vec::with_capacity(labels.len());
    for l in &labels {
        let a = by_action.get(l.action_id.as_str()).ok_or_else(|| {
            CliError::input(&labels_path, format!("unknown action {}", l.action_id))
        })?;
        if !clip_ids.contains(&l.miniclip_id) {
            return Err(CliError::input(&labels_path, format!("unknown miniclip {}", l.miniclip_id)));
        }
        let v = video_by_id.get(a.video_id.as_str()).ok_or_else(|| {
            CliError::input(&actions_path, format!("unknown video {}", a.video_id))
        })?;
        let tags = a
            .tags
            .iter()
            .map(|t| t.parse::<PosTag>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| CliError::input(&actions_path, e))?;
        let action = match vectors.get(&a.action_id) {
            Some(v) => v.clone(),
            None => action_embedding(&a.tokens, &table).vector,
        };
        let (prev, next) = neighbours[a.action_id.as_str()];
        let ctx_f = context_features(
            &a.sentence,
            a.span,
            prev.map(|p| p.tokens.as_slice()),
            next.map(|n| n.tokens.as_slice()),
            &table,
            window,
        );
        let nouns: Vec<&str> = a
            .tokens
            .iter()
            .zip(&tags)
            .filter(|(_, t)| t.is_noun())
            .map(|(w, _)| w.as_str())
            .collect();
        let detected = detections.as_ref().map(|d| {
            d.get(&l.miniclip_id).map(Vec::as_slice).unwrap_or_default()
        });
        records.push(FeatureRecord {
            miniclip_id: l.miniclip_id.clone(),
            action_id: l.action_id.clone(),
            video_id: a.video_id.clone(),
            channel: v.channel.clone(),
            split: Split::Train,
            text: a.text.clone(),
            tokens: a.tokens.clone(),
            label: l.label.is_visible(),
            action,
            pos: pos_table.as_ref().map(|t| pos_embedding(&tags, t).vector).unwrap_or_default(),
            context_s: [ctx_f.sentence_before, ctx_f.sentence_after].concat(),
            context_a: [ctx_f.action_prev, ctx_f.action_next].concat(),
            concreteness: lexicon.as_ref().and_then(|lx| concreteness_score(&a.tokens, &tags, lx)),
            object_wup: match (&taxonomy, detected) {
                (Some(t), Some(d)) => object_match_score(&nouns, d, &SimilarityMode::Wup(t)),
                _ => None,
            },
            object_cosine: detected
                .and_then(|d| object_match_score(&nouns, d, &SimilarityMode::Cosine(&table))),
        });
    }

    let split = channel_split(ctx, &videos)?;
    let parts = split_by_channel(records, |r| r.channel.as_str(), &split)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut records = Vec::new();
    for (which, part) in [
        (Split::Train, parts.train),
        (Split::Validation, parts.validation),
        (Split::Test, parts.test),
    ] {
        records.extend(part.into_iter().map(|mut r| {
            r.split = which;
            r
        }));
    }
    records.sort_by(|a, b| (&a.miniclip_id, &a.action_id).cmp(&(&b.miniclip_id, &b.action_id)));
    eprintln!("features: {} labeled pairs", records.len());

    if let Some(p) = s.opt_output("matrix_out") {
        let names = s.list("inputs").unwrap_or_else(|| vec!["action".into()]);
        let (action, extras) = parse_inputs(&names)?;
        let rows: Vec<MatrixRow> = records
            .iter()
            .map(|r| MatrixRow {
                action_id: r.action_id.clone(),
                features: input_vector(r, action, &extras),
                label: r.label as u8,
            })
            .collect();
        write_jsonl(&p, &rows)?;
    }
    write_jsonl(&out, &records)
}
