use vlogvis_core::evaluation::{ambiguous_actions, dataset_stats, LabeledAction, VideoSummary};

use super::Ctx;
use crate::error::{CliError, Result};
use crate::formats::{FeatureRecord, VideoRecord};
use crate::io::{read_jsonl, write_atomic};

/// Corpus statistics as Markdown, or CSV when the output ends in `.csv`
/// (or `format = csv`).
pub fn stats(ctx: &Ctx) -> Result<()> {
    let s = &ctx.settings;
    let videos: Vec<VideoRecord> = read_jsonl(&s.input("videos")?)?;
    let records: Vec<FeatureRecord> = read_jsonl(&s.input("features")?)?;
    let out = s.output("out")?;
    let format = match s.get("format") {
        Some(f) => f.to_string(),
        None if out.extension().is_some_and(|e| e == "csv") => "csv".into(),
        None => "md".into(),
    };
    let summaries: Vec<VideoSummary> = videos
        .iter()
        .map(|v| VideoSummary {
            video_id: v.video_id.clone(),
            duration_s: v.duration_s,
            transcript_words: v.words,
        })
        .collect();
    let labeled: Vec<LabeledAction> = records
        .iter()
        .map(|r| LabeledAction {
            miniclip_id: r.miniclip_id.clone(),
            action_id: r.action_id.clone(),
            text: r.text.clone(),
            visible: r.label,
            split: r.split,
        })
        .collect();
    let report = dataset_stats(&summaries, &labeled);
    let ambiguous = ambiguous_actions(
        &records.iter().map(|r| (r.text.as_str(), r.label)).collect::<Vec<_>>(),
    );
    let body = match format.as_str() {
        "csv" => report.to_csv(),
        "md" | "markdown" => format!(
            "{}\nAmbiguous actions (labeled both ways): {}\n",
            report.to_markdown(),
            ambiguous.len()
        ),
        other => return Err(CliError::Config(format!("unknown stats format {other:?}"))),
    };
    write_atomic(&out, body.as_bytes())?;
    if let Some(p) = s.opt_output("ambiguous_out") {
        let mut bytes = serde_json::to_vec_pretty(&ambiguous).expect("strings serialize");
        bytes.push(b'\n');
        write_atomic(&p, &bytes)?;
    }
    eprintln!(
        "stats: {} videos, {} labeled actions, {} ambiguous",
        report.videos,
        report.actions,
        ambiguous.len()
    );
    Ok(())
}
