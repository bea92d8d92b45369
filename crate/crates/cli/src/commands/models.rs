//! Training and evaluating every classifier family on feature records.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::Value;

use vlogvis_core::classifiers::{
    concreteness_grid, similarity_grid, train_linear, tune_threshold, LinearModel,
    LinearTrainConfig, ModelFile, ThresholdModel, DEFAULT_C_GRID,
};
use vlogvis_core::evaluation::{
    majority_baseline, metrics, paired_ttest, results_csv, results_markdown, ResultRow, Split,
};
use vlogvis_core::features::{EmbeddingTable, VideoFeatureBank};
use vlogvis_core::neural::{
    grid_search, load_checkpoint, save_checkpoint, train, AnyModel, Extra, FusionInput,
    FusionModel, FusionSpec, GridPoint, Network, TextModel, TrainConfig, TrainLog, Vocab,
};
use vlogvis_core::seed::stage_seed;

use super::features::{extra_values, input_vector, parse_inputs};
use super::Ctx;
use crate::error::{CliError, Result};
use crate::formats::FeatureRecord;
use crate::io::{read_bytes, read_jsonl, read_text, write_atomic, write_jsonl};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Concreteness,
    ObjectWup,
    ObjectCosine,
    Linear,
    Text,
    Multimodal,
    /// Fusion model without the video branch.
    ActionOnly,
    /// Fusion model without the action vector.
    VideoOnly,
}

impl ModelKind {
    const NAMES: [(&'static str, ModelKind); 8] = [
        ("concreteness", ModelKind::Concreteness),
        ("object-wup", ModelKind::ObjectWup),
        ("object-cosine", ModelKind::ObjectCosine),
        ("linear", ModelKind::Linear),
        ("text", ModelKind::Text),
        ("multimodal", ModelKind::Multimodal),
        ("action", ModelKind::ActionOnly),
        ("video", ModelKind::VideoOnly),
    ];
}

impl FromStr for ModelKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Self::NAMES
            .iter()
            .find(|(n, _)| *n == s)
            .map(|(_, k)| *k)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::NAMES.iter().map(|(n, _)| *n).collect();
                CliError::Config(format!("unknown model {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = Self::NAMES.iter().find(|(_, k)| k == self).unwrap().0;
        f.write_str(name)
    }
}

/// Which per-record score a threshold model reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreFeature {
    Concreteness,
    ObjectWup,
    ObjectCosine,
}

impl ScoreFeature {
    fn as_str(self) -> &'static str {
        match self {
            ScoreFeature::Concreteness => "concreteness",
            ScoreFeature::ObjectWup => "object_wup",
            ScoreFeature::ObjectCosine => "object_cosine",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Self::Concreteness, Self::ObjectWup, Self::ObjectCosine]
            .into_iter()
            .find(|f| f.as_str() == s)
    }

    fn score(self, r: &FeatureRecord) -> Option<f64> {
        match self {
            ScoreFeature::Concreteness => r.concreteness,
            ScoreFeature::ObjectWup => r.object_wup,
            ScoreFeature::ObjectCosine => r.object_cosine,
        }
    }

    fn label(self) -> &'static str {
        match self {
            ScoreFeature::Concreteness => "Concreteness",
            ScoreFeature::ObjectWup => "Object detection (WUP)",
            ScoreFeature::ObjectCosine => "Object detection (cosine)",
        }
    }
}

/// Any trained model, as loaded from disk.
pub enum Trained {
    Threshold(ThresholdModel, ScoreFeature),
    Linear(LinearModel, bool, Vec<Extra>),
    Neural(AnyModel),
}

fn extras_label(action: bool, extras: &[Extra], video: bool) -> String {
    let mut parts: Vec<&str> = Vec::new();
    if action {
        parts.push("Action");
    }
    for e in extras {
        parts.push(match e {
            Extra::Pos => "POS",
            Extra::ContextS => "Context_S",
            Extra::ContextA => "Context_A",
            Extra::Concreteness => "Concreteness",
        });
    }
    if video {
        parts.push("Video");
    }
    parts.join(" + ")
}

impl Trained {
    /// `(method, input-features)` for results tables.
    pub fn describe(&self) -> (String, String) {
        match self {
            Trained::Threshold(_, f) => ("Threshold".into(), f.label().into()),
            Trained::Linear(_, a, e) => ("Linear SVM".into(), extras_label(*a, e, false)),
            Trained::Neural(AnyModel::Text(_)) => ("LSTM".into(), "Action".into()),
            Trained::Neural(AnyModel::Fusion(m)) => {
                let s = &m.spec;
                let extras: Vec<Extra> = s.extras.iter().map(|(e, _)| *e).collect();
                let method = match (s.use_video, s.use_text) {
                    (true, true) => "Multimodal",
                    (true, false) => "Video LSTM",
                    _ => "MLP",
                };
                (method.into(), extras_label(s.use_text, &extras, s.use_video))
            }
        }
    }

    pub fn needs_video(&self) -> bool {
        matches!(self, Trained::Neural(AnyModel::Fusion(m)) if m.spec.use_video)
    }

    pub fn to_bytes(&self, seed: u64) -> Vec<u8> {
        let (file, key, extra): (ModelFile, &str, Value) = match self {
            Trained::Neural(m) => return save_checkpoint(m, seed),
            Trained::Threshold(m, f) => (ModelFile::Threshold(*m), "feature", f.as_str().into()),
            Trained::Linear(m, a, e) => {
                let mut names: Vec<Value> = Vec::new();
                if *a {
                    names.push("action".into());
                }
                names.extend(e.iter().map(|x| Value::from(x.as_str())));
                (ModelFile::Linear(m.clone()), "inputs", Value::Array(names))
            }
        };
        let mut v = serde_json::to_value(file).expect("model serializes");
        v.as_object_mut().expect("tagged object").insert(key.into(), extra);
        let mut bytes = serde_json::to_vec_pretty(&v).expect("model serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_bytes(path)?;
        if bytes.starts_with(vlogvis_core::neural::checkpoint::MAGIC) {
            let (m, _) = load_checkpoint(&bytes).map_err(|e| CliError::input(path, e))?;
            return Ok(Trained::Neural(m));
        }
        let v: Value = serde_json::from_slice(&bytes).map_err(|e| CliError::input(path, e))?;
        let file: ModelFile = serde_json::from_value(v.clone()).map_err(|e| CliError::input(path, e))?;
        match file {
            ModelFile::Threshold(m) => {
                let f = v
                    .get("feature")
                    .and_then(Value::as_str)
                    .and_then(ScoreFeature::parse)
                    .ok_or_else(|| CliError::input(path, "threshold model without a known \"feature\""))?;
                Ok(Trained::Threshold(m, f))
            }
            ModelFile::Linear(m) => {
                let names: Vec<String> = v
                    .get("inputs")
                    .and_then(|x| serde_json::from_value(x.clone()).ok())
                    .ok_or_else(|| CliError::input(path, "linear model without \"inputs\""))?;
                let (a, e) = parse_inputs(&names).map_err(|e| CliError::input(path, e))?;
                Ok(Trained::Linear(m, a, e))
            }
        }
    }

    /// Visible/not-visible decisions for each record.
    pub fn predict(&self, records: &[&FeatureRecord], bank: Option<&VideoFeatureBank>) -> Result<Vec<bool>> {
        match self {
            Trained::Threshold(m, f) => Ok(records.iter().map(|r| m.predict(f.score(r)).visible).collect()),
            Trained::Linear(m, a, e) => records
                .iter()
                .map(|r| m.predict(&input_vector(r, *a, e)).map(|d| d.visible))
                .collect::<std::result::Result<_, _>>()
                .map_err(CliError::runtime),
            Trained::Neural(AnyModel::Text(m)) => records
                .iter()
                .map(|r| m.predict(&m.encode(&r.tokens)).map(|p| p >= 0.5))
                .collect::<std::result::Result<_, _>>()
                .map_err(CliError::runtime),
            Trained::Neural(AnyModel::Fusion(m)) => records
                .iter()
                .map(|r| {
                    let x = fusion_input(r, &m.spec, bank)?;
                    m.predict(&x).map(|p| p >= 0.5).map_err(CliError::runtime)
                })
                .collect(),
        }
    }
}

fn fusion_input(r: &FeatureRecord, spec: &FusionSpec, bank: Option<&VideoFeatureBank>) -> Result<FusionInput> {
    let video = if spec.use_video {
        let rows = bank.and_then(|b| b.get(&r.miniclip_id)).ok_or_else(|| {
            CliError::runtime(format!("no video features for miniclip {}", r.miniclip_id))
        })?;
        (0..rows.rows()).map(|i| rows.concatenated(i)).collect()
    } else {
        Vec::new()
    };
    Ok(FusionInput {
        video,
        action: if spec.use_text { r.action.clone() } else { Vec::new() },
        extras: spec.extras.iter().map(|&(e, _)| (e, extra_values(r, e))).collect(),
    })
}

struct Splits<'a> {
    train: Vec<&'a FeatureRecord>,
    validation: Vec<&'a FeatureRecord>,
    test: Vec<&'a FeatureRecord>,
}

fn splits(records: &[FeatureRecord]) -> Splits<'_> {
    let pick = |s: Split| records.iter().filter(|r| r.split == s).collect::<Vec<_>>();
    Splits {
        train: pick(Split::Train),
        validation: pick(Split::Validation),
        test: pick(Split::Test),
    }
}

fn labels(rs: &[&FeatureRecord]) -> Vec<bool> {
    rs.iter().map(|r| r.label).collect()
}

fn load_bank(ctx: &Ctx) -> Result<Option<VideoFeatureBank>> {
    ctx.settings
        .opt_input("video_features")?
        .map(|p| VideoFeatureBank::load_dir(&p).map_err(|e| CliError::input(&p, e)))
        .transpose()
}

/// `fc_sizes` grid: layer sizes separated by `,` or `x`, grid points by `;`.
fn fc_grid(s: &str) -> Result<Vec<Vec<usize>>> {
    s.split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.split([',', 'x'])
                .map(str::trim)
                .filter(|x| !x.is_empty())
                .map(|x| x.parse().map_err(|_| CliError::Config(format!("fc_sizes: cannot parse {x:?}"))))
                .collect()
        })
        .collect()
}

fn train_settings(ctx: &Ctx) -> Result<(TrainConfig, Vec<GridPoint>)> {
    let s = &ctx.settings;
    let d = TrainConfig::default();
    let base = TrainConfig {
        learning_rate: s.value("learning_rate", d.learning_rate)?,
        rho: s.value("rho", d.rho)?,
        epsilon: s.value("epsilon", d.epsilon)?,
        dropout: s.value("dropout", d.dropout)?,
        seed: stage_seed(ctx.seed, "train"),
        ..d
    };
    let epochs = s.values("epochs", &[base.epochs])?;
    let batches = s.values("batch_size", &[base.batch_size])?;
    let hidden = s.values("hidden_dim", &[base.hidden_dim])?;
    let fcs = match s.get("fc_sizes") {
        Some(v) => fc_grid(v)?,
        None => vec![base.fc_sizes.clone()],
    };
    let mut grid = Vec::new();
    for &e in &epochs {
        for &b in &batches {
            for &h in &hidden {
                for fc in &fcs {
                    grid.push(GridPoint { epochs: e, batch_size: b, hidden_dim: h, fc_sizes: fc.clone() });
                }
            }
        }
    }
    if grid.is_empty() {
        return Err(CliError::Config("empty hyperparameter grid".into()));
    }
    let first = grid[0].apply(&base);
    first.check().map_err(|e| CliError::Config(e.to_string()))?;
    Ok((first, grid))
}

/// Trains one network, grid-searching on validation accuracy when the
/// settings list more than one hyperparameter combination.
fn fit<N, F>(
    build: F,
    train_set: &[(N::Input, bool)],
    validation: &[(N::Input, bool)],
    base: &TrainConfig,
    grid: &[GridPoint],
) -> Result<(N, TrainLog)>
where
    N: Network,
    F: Fn(&TrainConfig) -> std::result::Result<N, vlogvis_core::neural::NeuralError>,
{
    if grid.len() > 1 {
        let r = grid_search(build, train_set, validation, grid, base).map_err(CliError::runtime)?;
        eprintln!("train: grid scores {:?}; picked {:?}", r.scores, r.config);
        return Ok((r.model, r.log));
    }
    let val = (!validation.is_empty()).then_some(validation);
    train(build(base).map_err(CliError::runtime)?, train_set, val, base).map_err(CliError::runtime)
}

fn train_model(ctx: &Ctx, kind: ModelKind, records: &[FeatureRecord], bank: Option<&VideoFeatureBank>) -> Result<(Trained, Option<TrainLog>)> {
    let s = &ctx.settings;
    let sp = splits(records);
    if sp.train.is_empty() {
        return Err(CliError::runtime("train split is empty"));
    }
    let tune = |f: ScoreFeature, grid: Vec<f64>| -> Result<Trained> {
        if sp.validation.is_empty() {
            return Err(CliError::runtime("validation split is empty; thresholds are tuned on it"));
        }
        let scores: Vec<Option<f64>> = sp.validation.iter().map(|r| f.score(r)).collect();
        let m = tune_threshold(&scores, &labels(&sp.validation), &grid).map_err(CliError::runtime)?;
        Ok(Trained::Threshold(m, f))
    };
    match kind {
        ModelKind::Concreteness => Ok((tune(ScoreFeature::Concreteness, concreteness_grid())?, None)),
        ModelKind::ObjectWup => Ok((tune(ScoreFeature::ObjectWup, similarity_grid())?, None)),
        ModelKind::ObjectCosine => Ok((tune(ScoreFeature::ObjectCosine, similarity_grid())?, None)),
        ModelKind::Linear => {
            let names = s.list("inputs").unwrap_or_else(|| vec!["action".into()]);
            let (a, e) = parse_inputs(&names)?;
            let xs: Vec<Vec<f64>> = sp.train.iter().map(|r| input_vector(r, a, &e)).collect();
            let c_grid: Vec<f64> = s.values("c_grid", DEFAULT_C_GRID)?;
            let cfg = LinearTrainConfig {
                folds: s.value("folds", LinearTrainConfig::default().folds)?,
                epochs: s.value("linear_epochs", LinearTrainConfig::default().epochs)?,
            };
            let fit = train_linear(&xs, &labels(&sp.train), &c_grid, cfg, stage_seed(ctx.seed, "train"))
                .map_err(CliError::runtime)?;
            eprintln!("train: cross-validation accuracy by C {:?}", fit.cv_accuracy);
            Ok((Trained::Linear(fit.model, a, e), None))
        }
        ModelKind::Text => {
            let (base, grid) = train_settings(ctx)?;
            let pretrained = match s.opt_input("embeddings")? {
                Some(p) => Some(EmbeddingTable::parse_text(&read_text(&p)?).map_err(|e| CliError::input(&p, e))?),
                None => None,
            };
            let embed_dim = match &pretrained {
                Some(t) => t.dim(),
                None => s.value("embed_dim", 50usize)?,
            };
            let vocab = Arc::new(Vocab::new(records.iter().flat_map(|r| r.tokens.iter())));
            let encode = |rs: &[&FeatureRecord]| -> Vec<(Vec<usize>, bool)> {
                rs.iter().map(|r| (vocab.encode(&r.tokens, 0), r.label)).collect()
            };
            let (tr, va) = (encode(&sp.train), encode(&sp.validation));
            let build = |cfg: &TrainConfig| {
                TextModel::new(
                    vocab.clone(),
                    embed_dim,
                    cfg.hidden_dim,
                    &cfg.fc_sizes,
                    cfg.dropout,
                    pretrained.as_ref(),
                    &mut ChaCha8Rng::seed_from_u64(cfg.seed),
                )
            };
            let (m, log) = fit(build, &tr, &va, &base, &grid)?;
            Ok((Trained::Neural(AnyModel::Text(m)), Some(log)))
        }
        ModelKind::Multimodal | ModelKind::ActionOnly | ModelKind::VideoOnly => {
            let (base, grid) = train_settings(ctx)?;
            let use_video = kind != ModelKind::ActionOnly;
            let use_text = kind != ModelKind::VideoOnly;
            let extras = match s.get("extras") {
                Some(v) if v != "none" => Extra::parse_list(v).map_err(|e| CliError::Config(e.to_string()))?,
                _ => Vec::new(),
            };
            let first = sp.train[0];
            let video_dim = if use_video {
                let (f, q) = bank
                    .and_then(VideoFeatureBank::dims)
                    .ok_or_else(|| CliError::Config("video_features is required for models with video".into()))?;
                f + q
            } else {
                0
            };
            let spec = FusionSpec {
                video_dim,
                hidden_dim: base.hidden_dim,
                action_dim: if use_text { first.action.len() } else { 0 },
                use_video,
                use_text,
                extras: extras.iter().map(|&e| (e, extra_values(first, e).len())).collect(),
                fc_sizes: base.fc_sizes.clone(),
                dropout: base.dropout,
            };
            let inputs = |rs: &[&FeatureRecord]| -> Result<Vec<(FusionInput, bool)>> {
                rs.iter().map(|r| Ok((fusion_input(r, &spec, bank)?, r.label))).collect()
            };
            let (tr, va) = (inputs(&sp.train)?, inputs(&sp.validation)?);
            let build = |cfg: &TrainConfig| {
                let spec = FusionSpec {
                    hidden_dim: cfg.hidden_dim,
                    fc_sizes: cfg.fc_sizes.clone(),
                    dropout: cfg.dropout,
                    ..spec.clone()
                };
                FusionModel::new(spec, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
            };
            let (m, log) = fit(build, &tr, &va, &base, &grid)?;
            Ok((Trained::Neural(AnyModel::Fusion(m)), Some(log)))
        }
    }
}

fn result_row(model: &Trained, test: &[&FeatureRecord], bank: Option<&VideoFeatureBank>) -> Result<(ResultRow, Vec<bool>)> {
    let pred = model.predict(test, bank)?;
    let m = metrics(&pred, &labels(test)).map_err(CliError::runtime)?;
    let (method, input_features) = model.describe();
    Ok((ResultRow { method, input_features, metrics: m }, pred))
}

pub fn train_cmd(ctx: &Ctx) -> Result<()> {
    let s = &ctx.settings;
    let kind: ModelKind = s.require("model")?.parse()?;
    let features_path = s.input("features")?;
    let out = s.output("out")?;
    let records: Vec<FeatureRecord> = read_jsonl(&features_path)?;
    let bank = load_bank(ctx)?;
    let (model, log) = train_model(ctx, kind, &records, bank.as_ref())?;
    write_atomic(&out, &model.to_bytes(stage_seed(ctx.seed, "train")))?;
    if let (Some(p), Some(log)) = (s.opt_output("log"), &log) {
        write_atomic(&p, log.to_csv().as_bytes())?;
    }
    if let Some(p) = s.opt_output("eval_out") {
        let test = splits(&records).test;
        if test.is_empty() {
            return Err(CliError::runtime("test split is empty"));
        }
        let (row, _) = result_row(&model, &test, bank.as_ref())?;
        eprintln!("train: {kind} test accuracy {:.3}", row.metrics.accuracy);
        write_atomic(&p, results_csv(&[row]).as_bytes())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct PredictionRow<'a> {
    method: &'a str,
    input_features: &'a str,
    miniclip_id: &'a str,
    action_id: &'a str,
    visible: bool,
    label: bool,
}

/// Scores the majority baseline and every listed model on the test split.
pub fn evaluate(ctx: &Ctx) -> Result<()> {
    let s = &ctx.settings;
    let features_path = s.input("features")?;
    let out = s.output("out")?;
    let model_paths = s
        .list("models")
        .ok_or_else(|| CliError::Config("missing required setting \"models\"".into()))?;
    let records: Vec<FeatureRecord> = read_jsonl(&features_path)?;
    let sp = splits(&records);
    if sp.test.is_empty() {
        return Err(CliError::runtime("test split is empty"));
    }
    let gold = labels(&sp.test);
    let majority = majority_baseline(&labels(&sp.train)).map_err(CliError::runtime)?;
    let maj_pred = majority.predict(gold.len());
    let mut rows = vec![ResultRow {
        method: "Majority".into(),
        input_features: "Action".into(),
        metrics: metrics(&maj_pred, &gold).map_err(CliError::runtime)?,
    }];
    let mut correctness: Vec<Vec<f64>> = Vec::new();
    let mut predictions = Vec::new();
    let models = model_paths
        .iter()
        .map(|p| {
            let path = Path::new(p);
            if !path.exists() {
                return Err(CliError::Config(format!("models: {p} does not exist")));
            }
            Trained::load(path)
        })
        .collect::<Result<Vec<_>>>()?;
    let bank = if models.iter().any(Trained::needs_video) { load_bank(ctx)? } else { None };
    for m in &models {
        let (row, pred) = result_row(m, &sp.test, bank.as_ref())?;
        correctness.push(pred.iter().zip(&gold).map(|(p, g)| f64::from(u8::from(p == g))).collect());
        predictions.push(pred);
        rows.push(row);
    }
    write_atomic(&out, results_csv(&rows).as_bytes())?;
    if let Some(p) = s.opt_output("markdown") {
        write_atomic(&p, results_markdown(&rows).as_bytes())?;
    }
    if let Some(p) = s.opt_output("ttest_out") {
        let mut csv = String::from("method_a,method_b,t_statistic,dof,p_two_tailed,infinite_t\n");
        for i in 1..models.len() {
            let t = paired_ttest(&correctness[0], &correctness[i]).map_err(CliError::runtime)?;
            let (a, b) = (&rows[1], &rows[i + 1]);
            csv.push_str(&format!(
                "{} [{}],{} [{}],{:.6},{},{:.6e},{}\n",
                a.method, a.input_features, b.method, b.input_features,
                t.t_statistic, t.dof, t.p_two_tailed, t.infinite_t
            ));
        }
        write_atomic(&p, csv.as_bytes())?;
    }
    if let Some(p) = s.opt_output("predictions_out") {
        let mut out_rows = Vec::new();
        for (row, pred) in rows[1..].iter().zip(&predictions) {
            for ((r, &v), &g) in sp.test.iter().zip(pred).zip(&gold) {
                out_rows.push(PredictionRow {
                    method: &row.method,
                    input_features: &row.input_features,
                    miniclip_id: &r.miniclip_id,
                    action_id: &r.action_id,
                    visible: v,
                    label: g,
                });
            }
        }
        write_jsonl(&p, &out_rows)?;
    }
    for r in &rows {
        eprintln!("evaluate: {} [{}] accuracy {:.3} f1 {:.3}", r.method, r.input_features, r.metrics.accuracy, r.metrics.f1);
    }
    Ok(())
}
