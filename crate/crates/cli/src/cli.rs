//! Argument definitions. Every option is also a settings key (the flag name
//! with `-` replaced by `_`), so any of them can live in the `--config` file.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::commands::{annotate, features, models, pipeline, stats, Ctx};
use crate::config::Settings;
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "vlogvis", version, about = "Visible-action corpus pipeline and classifiers")]
pub struct Cli {
    /// Flat `key = value` settings file; command-line flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Root seed; each stage derives its own seed from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for per-video and per-miniclip stages.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Report failures as one JSON object on stderr.
    #[arg(long, global = true)]
    pub json_errors: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse transcripts listed in a manifest and drop low-speech videos.
    Ingest(IngestArgs),
    /// Tag transcripts and extract timestamped candidate actions.
    Extract(ExtractArgs),
    /// Group actions into padded miniclips.
    Segment(SegmentArgs),
    /// Drop miniclips whose frames barely change.
    MotionFilter(MotionArgs),
    /// Compose annotation HITs with one ground-truth miniclip each.
    Hits(HitsArgs),
    /// Serve HITs to annotators over HTTP.
    Serve(ServeArgs),
    /// Majority-vote accepted annotations into binary labels.
    Aggregate(AggregateArgs),
    /// Fleiss' kappa over annotations or a count matrix.
    Kappa(KappaArgs),
    /// Build per-(miniclip, action) feature records.
    Features(FeaturesArgs),
    /// Train one classifier.
    Train(TrainArgs),
    /// Score the majority baseline and trained models on the test split.
    Evaluate(EvaluateArgs),
    /// Corpus statistics report.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// JSON-lines manifest of videos.
    #[arg(long)]
    pub manifest: Option<String>,
    /// Output: JSON-lines video records.
    #[arg(long)]
    pub out: Option<String>,
    /// Minimum transcript words per second (default 0.5).
    #[arg(long)]
    pub min_rate: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Video records from `ingest`.
    #[arg(long)]
    pub videos: Option<String>,
    /// Output: JSON-lines action records.
    #[arg(long)]
    pub out: Option<String>,
    /// Chunker rules file (key = value).
    #[arg(long)]
    pub rules: Option<String>,
    /// Tag lexicon TSV (word, tag) replacing the built-in one.
    #[arg(long)]
    pub lexicon: Option<String>,
    /// Directory of `{video_id}.pos` tagger sidecars.
    #[arg(long)]
    pub pos_dir: Option<String>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub videos: Option<String>,
    /// Action records from `extract`.
    #[arg(long)]
    pub actions: Option<String>,
    /// Output: JSON-lines miniclips.
    #[arg(long)]
    pub out: Option<String>,
    /// Seconds added before and after each group (default 15).
    #[arg(long)]
    pub pad_s: Option<String>,
    /// Longest span of action times in one miniclip (default 60).
    #[arg(long)]
    pub max_core_s: Option<String>,
}

#[derive(Debug, Args)]
pub struct MotionArgs {
    #[arg(long)]
    pub videos: Option<String>,
    /// Miniclips from `segment`.
    #[arg(long)]
    pub miniclips: Option<String>,
    /// Output: kept miniclips.
    #[arg(long)]
    pub out: Option<String>,
    /// Drop miniclips scoring above this correlation (default 0.8).
    #[arg(long)]
    pub threshold: Option<String>,
    /// Sample every n-th native frame (default 100).
    #[arg(long)]
    pub stride: Option<String>,
    /// Optional per-miniclip score report.
    #[arg(long)]
    pub scores_out: Option<String>,
}

#[derive(Debug, Args)]
pub struct HitsArgs {
    #[arg(long)]
    pub miniclips: Option<String>,
    #[arg(long)]
    pub actions: Option<String>,
    /// Ground-truth miniclips, JSON lines.
    #[arg(long)]
    pub ground_truth: Option<String>,
    /// Output: JSON-lines HITs.
    #[arg(long)]
    pub out: Option<String>,
    /// Miniclips per HIT including the ground-truth one (default 5).
    #[arg(long)]
    pub per_hit: Option<String>,
    /// Actions shown per miniclip (default 7).
    #[arg(long)]
    pub max_actions: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub hits: Option<String>,
    #[arg(long)]
    pub videos: Option<String>,
    #[arg(long)]
    pub miniclips: Option<String>,
    #[arg(long)]
    pub actions: Option<String>,
    #[arg(long)]
    pub ground_truth: Option<String>,
    /// Append-only record log; replayed on start.
    #[arg(long)]
    pub log: Option<String>,
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<String>,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// Accepted annotation records, JSON lines.
    #[arg(long)]
    pub records: Option<String>,
    /// Output: JSON-lines labels.
    #[arg(long)]
    pub out: Option<String>,
    /// Ignore actions that do not have exactly three annotations.
    #[arg(long)]
    pub skip_incomplete: bool,
}

#[derive(Debug, Args)]
pub struct KappaArgs {
    /// Annotation records, JSON lines.
    #[arg(long)]
    pub records: Option<String>,
    /// JSON array of per-item category counts.
    #[arg(long)]
    pub matrix: Option<String>,
    /// Raters per item (default: first row's sum).
    #[arg(long)]
    pub raters: Option<String>,
    /// Optional JSON report.
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub videos: Option<String>,
    #[arg(long)]
    pub actions: Option<String>,
    #[arg(long)]
    pub miniclips: Option<String>,
    /// Labels from `aggregate`.
    #[arg(long)]
    pub labels: Option<String>,
    /// Word embedding table (`word v1 … vD`).
    #[arg(long)]
    pub embeddings: Option<String>,
    /// POS-tag embedding table.
    #[arg(long)]
    pub pos_embeddings: Option<String>,
    /// Concreteness lexicon TSV.
    #[arg(long)]
    pub concreteness: Option<String>,
    /// Object label taxonomy TSV (child, parent).
    #[arg(long)]
    pub taxonomy: Option<String>,
    /// Object detections, JSON lines.
    #[arg(long)]
    pub detections: Option<String>,
    /// Ignore detections below this confidence (default 0).
    #[arg(long)]
    pub min_confidence: Option<String>,
    /// Precomputed contextual action vectors, JSON lines.
    #[arg(long)]
    pub action_vectors: Option<String>,
    /// Channel order for the split (default: sorted names).
    #[arg(long)]
    pub channels: Option<String>,
    /// Number of leading channels used for training (default 8).
    #[arg(long)]
    pub train_channels: Option<String>,
    /// Number of channels used for validation (default 1).
    #[arg(long)]
    pub validation_channels: Option<String>,
    /// Words of sentence context on each side (default 5).
    #[arg(long)]
    pub context_window: Option<String>,
    /// Output: JSON-lines feature records.
    #[arg(long)]
    pub out: Option<String>,
    /// Also write a linear-classifier feature matrix.
    #[arg(long)]
    pub matrix_out: Option<String>,
    /// Inputs for the matrix: action, pos, context_s, context_a, concreteness.
    #[arg(long)]
    pub inputs: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// concreteness, object-wup, object-cosine, linear, text, multimodal, action or video.
    #[arg(long)]
    pub model: Option<String>,
    /// Feature records from `features`.
    #[arg(long)]
    pub features: Option<String>,
    /// Directory of `{miniclip_id}.vfb` video feature files.
    #[arg(long)]
    pub video_features: Option<String>,
    /// Output model file.
    #[arg(long)]
    pub out: Option<String>,
    /// Training log CSV (neural models).
    #[arg(long)]
    pub log: Option<String>,
    /// Test-split results CSV.
    #[arg(long)]
    pub eval_out: Option<String>,
    /// Extra fusion inputs: pos, context_s, context_a, concreteness.
    #[arg(long)]
    pub extras: Option<String>,
    /// Linear-model inputs: action plus any extras.
    #[arg(long)]
    pub inputs: Option<String>,
    /// Pretrained word embeddings for the text model.
    #[arg(long)]
    pub embeddings: Option<String>,
    #[arg(long)]
    pub embed_dim: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<String>,
    #[arg(long)]
    pub rho: Option<String>,
    #[arg(long)]
    pub epsilon: Option<String>,
    #[arg(long)]
    pub dropout: Option<String>,
    /// One value or a comma-separated grid.
    #[arg(long)]
    pub epochs: Option<String>,
    /// One value or a comma-separated grid.
    #[arg(long)]
    pub batch_size: Option<String>,
    /// One value or a comma-separated grid.
    #[arg(long)]
    pub hidden_dim: Option<String>,
    /// Layer sizes like `64,32`; grid points separated by `;`.
    #[arg(long)]
    pub fc_sizes: Option<String>,
    /// Regularization grid for the linear model.
    #[arg(long)]
    pub c_grid: Option<String>,
    #[arg(long)]
    pub folds: Option<String>,
    #[arg(long)]
    pub linear_epochs: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub features: Option<String>,
    /// Comma-separated model files; the first is the t-test reference.
    #[arg(long)]
    pub models: Option<String>,
    #[arg(long)]
    pub video_features: Option<String>,
    /// Output: results CSV.
    #[arg(long)]
    pub out: Option<String>,
    /// Optional results table in Markdown.
    #[arg(long)]
    pub markdown: Option<String>,
    /// Optional paired t-tests against the first model.
    #[arg(long)]
    pub ttest_out: Option<String>,
    /// Optional per-item predictions, JSON lines.
    #[arg(long)]
    pub predictions_out: Option<String>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub videos: Option<String>,
    #[arg(long)]
    pub features: Option<String>,
    /// Output report (.md or .csv).
    #[arg(long)]
    pub out: Option<String>,
    /// md or csv; overrides the extension.
    #[arg(long)]
    pub format: Option<String>,
    /// Optional JSON list of actions labeled both ways.
    #[arg(long)]
    pub ambiguous_out: Option<String>,
}

/// Overlays every flag given on the command line onto the settings.
fn overlay(settings: &mut Settings, m: &ArgMatches) {
    for id in m.ids() {
        let id = id.as_str();
        if m.value_source(id) != Some(ValueSource::CommandLine) {
            continue;
        }
        if let Ok(Some(raw)) = m.try_get_raw(id) {
            let values: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
            settings.set(id, values.join(","));
        }
    }
}

/// Parses arguments and runs one subcommand. `Ok(None)` means clap printed
/// help or version.
pub fn run<I, T>(args: I) -> Result<Option<()>>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return Ok(None);
        }
        Err(e) => return Err(CliError::Config(e.render().to_string().trim_end().to_string())),
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| CliError::Config(e.to_string()))?;
    let mut settings = Settings::load(cli.config.as_deref())?;
    overlay(&mut settings, &matches);
    if let Some((_, sub)) = matches.subcommand() {
        overlay(&mut settings, sub);
    }
    let seed: u64 = settings.value("seed", 0)?;
    let jobs: usize = settings.value("jobs", 1)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(CliError::runtime)?;
    let ctx = Ctx { settings, seed, pool };
    match cli.command {
        Command::Ingest(_) => pipeline::ingest(&ctx),
        Command::Extract(_) => pipeline::extract(&ctx),
        Command::Segment(_) => pipeline::segment_cmd(&ctx),
        Command::MotionFilter(_) => pipeline::motion_filter(&ctx),
        Command::Hits(_) => annotate::hits(&ctx),
        Command::Serve(_) => annotate::serve(&ctx),
        Command::Aggregate(_) => annotate::aggregate_cmd(&ctx),
        Command::Kappa(_) => annotate::kappa(&ctx),
        Command::Features(_) => features::features(&ctx),
        Command::Train(_) => models::train_cmd(&ctx),
        Command::Evaluate(_) => models::evaluate(&ctx),
        Command::Stats(_) => stats::stats(&ctx),
    }
    .map(Some)
}
