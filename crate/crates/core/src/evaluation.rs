//! Metrics, the majority baseline, paired t-tests and corpus statistics.
//! Visible is the positive class.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {0} predictions vs {1} gold labels")]
    LengthMismatch(usize, usize),
    #[error("nothing to evaluate")]
    Empty,
    #[error("a paired t-test needs at least two pairs, found {0}")]
    DegeneratePairs(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn from_predictions(pred: &[bool], gold: &[bool]) -> Result<Self, EvalError> {
        if pred.len() != gold.len() {
            return Err(EvalError::LengthMismatch(pred.len(), gold.len()));
        }
        if pred.is_empty() {
            return Err(EvalError::Empty);
        }
        let mut c = Self::default();
        for (&p, &g) in pred.iter().zip(gold) {
            match (p, g) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn metrics(&self) -> Metrics {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Metrics {
            accuracy: ratio(self.tp + self.tn, self.total()),
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn metrics(pred: &[bool], gold: &[bool]) -> Result<Metrics, EvalError> {
    Ok(ConfusionCounts::from_predictions(pred, gold)?.metrics())
}

/// Constant predictor of the most frequent training label (ties → visible).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MajorityBaseline {
    pub label: bool,
}

impl MajorityBaseline {
    pub fn fit(train: &[bool]) -> Result<Self, EvalError> {
        if train.is_empty() {
            return Err(EvalError::Empty);
        }
        let visible = train.iter().filter(|&&y| y).count();
        Ok(Self {
            label: 2 * visible >= train.len(),
        })
    }

    pub fn predict(&self, n: usize) -> Vec<bool> {
        vec![self.label; n]
    }
}

pub fn majority_baseline(train: &[bool]) -> Result<MajorityBaseline, EvalError> {
    MajorityBaseline::fit(train)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_statistic: f64,
    pub dof: u64,
    pub p_two_tailed: f64,
    /// Differences had zero variance but a non-zero mean.
    pub infinite_t: bool,
}

/// Paired two-tailed Student t-test on `a − b`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTestResult, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(EvalError::DegeneratePairs(n));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let dof = (n - 1) as u64;
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTestResult {
                t_statistic: 0.0,
                dof,
                p_two_tailed: 1.0,
                infinite_t: false,
            }
        } else {
            TTestResult {
                t_statistic: f64::INFINITY.copysign(mean),
                dof,
                p_two_tailed: 0.0,
                infinite_t: true,
            }
        });
    }
    let t = mean / (var / n as f64).sqrt();
    Ok(TTestResult {
        t_statistic: t,
        dof,
        p_two_tailed: student_t_two_tailed(t, dof as f64),
        infinite_t: false,
    })
}

/// `P(|T| ≥ |t|)` for `ν` degrees of freedom, via `I_{ν/(ν+t²)}(ν/2, 1/2)`.
pub fn student_t_two_tailed(t: f64, nu: f64) -> f64 {
    let x = nu / (nu + t * t);
    regularized_incomplete_beta(x, nu / 2.0, 0.5).clamp(0.0, 1.0)
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos approximation, g = 7, n = 9
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

const CF_TOLERANCE: f64 = 1e-12;
const CF_MAX_ITER: usize = 10_000;

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_TOLERANCE {
            break;
        }
    }
    h
}

/// `I_x(a, b)`.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - front * beta_cf(1.0 - x, b, a) / b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSummary {
    pub video_id: String,
    pub duration_s: f64,
    pub transcript_words: u64,
}

/// One aggregated (miniclip, action) label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledAction {
    pub miniclip_id: String,
    pub action_id: String,
    pub text: String,
    pub visible: bool,
    pub split: Split,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub miniclips: u64,
    pub actions: u64,
    pub actions_per_miniclip: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub videos: u64,
    pub hours: f64,
    pub transcript_words: u64,
    pub miniclips: u64,
    pub actions: u64,
    pub visible: u64,
    pub not_visible: u64,
    pub per_split: BTreeMap<Split, SplitStats>,
}

pub fn dataset_stats(videos: &[VideoSummary], labels: &[LabeledAction]) -> DatasetStats {
    let clips: BTreeSet<&str> = labels.iter().map(|l| l.miniclip_id.as_str()).collect();
    let visible = labels.iter().filter(|l| l.visible).count() as u64;
    let per_split = Split::ALL
        .into_iter()
        .map(|s| {
            let in_split: Vec<&LabeledAction> = labels.iter().filter(|l| l.split == s).collect();
            let clips: BTreeSet<&str> = in_split.iter().map(|l| l.miniclip_id.as_str()).collect();
            let stats = SplitStats {
                miniclips: clips.len() as u64,
                actions: in_split.len() as u64,
                actions_per_miniclip: if clips.is_empty() {
                    0.0
                } else {
                    in_split.len() as f64 / clips.len() as f64
                },
            };
            (s, stats)
        })
        .collect();
    DatasetStats {
        videos: videos.len() as u64,
        hours: videos.iter().map(|v| v.duration_s).sum::<f64>() / 3600.0,
        transcript_words: videos.iter().map(|v| v.transcript_words).sum(),
        miniclips: clips.len() as u64,
        actions: labels.len() as u64,
        visible,
        not_visible: labels.len() as u64 - visible,
        per_split,
    }
}

impl DatasetStats {
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| statistic | value |\n|---|---|\n");
        for (k, v) in self.rows() {
            let _ = writeln!(s, "| {k} | {v} |");
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("statistic,value\n");
        for (k, v) in self.rows() {
            let _ = writeln!(s, "{k},{v}");
        }
        s
    }

    fn rows(&self) -> Vec<(String, String)> {
        let mut rows = vec![
            ("videos".to_string(), self.videos.to_string()),
            ("hours".to_string(), format!("{:.2}", self.hours)),
            ("transcript_words".to_string(), self.transcript_words.to_string()),
            ("miniclips".to_string(), self.miniclips.to_string()),
            ("actions".to_string(), self.actions.to_string()),
            ("visible".to_string(), self.visible.to_string()),
            ("not_visible".to_string(), self.not_visible.to_string()),
        ];
        for (split, st) in &self.per_split {
            let p = split.as_str();
            rows.push((format!("{p}_miniclips"), st.miniclips.to_string()));
            rows.push((format!("{p}_actions"), st.actions.to_string()));
            rows.push((format!("{p}_actions_per_miniclip"), format!("{:.2}", st.actions_per_miniclip)));
        }
        rows
    }
}

fn normalize_action(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Action strings (case-folded, whitespace-normalized) that carry both
/// labels somewhere in the data, sorted.
pub fn ambiguous_actions<S: AsRef<str>>(items: &[(S, bool)]) -> Vec<String> {
    let mut seen: BTreeMap<String, (bool, bool)> = BTreeMap::new();
    for (text, visible) in items {
        let e = seen.entry(normalize_action(text.as_ref())).or_default();
        if *visible {
            e.0 = true;
        } else {
            e.1 = true;
        }
    }
    seen.into_iter()
        .filter(|(_, (v, n))| *v && *n)
        .map(|(k, _)| k)
        .collect()
}

/// One row of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub input_features: String,
    pub metrics: Metrics,
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from("method,input-features,accuracy,precision,recall,f1\n");
    for r in rows {
        let m = r.metrics;
        let _ = writeln!(
            s,
            "{},{},{:.3},{:.3},{:.3},{:.3}",
            csv_field(&r.method),
            csv_field(&r.input_features),
            m.accuracy,
            m.precision,
            m.recall,
            m.f1
        );
    }
    s
}

pub fn results_markdown(rows: &[ResultRow]) -> String {
    let mut s = String::from(
        "| Method | Input | Accuracy | Precision | Recall | F1 |\n|---|---|---|---|---|---|\n",
    );
    for r in rows {
        let m = r.metrics;
        let _ = writeln!(
            s,
            "| {} | {} | {:.3} | {:.3} | {:.3} | {:.3} |",
            r.method, r.input_features, m.accuracy, m.precision, m.recall, m.f1
        );
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
