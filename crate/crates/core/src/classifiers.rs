//! Non-neural baselines: score thresholds, object-detection matching and a
//! linear hinge-loss classifier. Labels are `bool`, `true` meaning visible.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{cosine, EmbeddingTable, Taxonomy};

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("threshold grid is empty")]
    EmptyGrid,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("expected {expected} features, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("need at least {folds} examples for {folds}-fold CV, found {n}")]
    TooFewExamples { n: usize, folds: usize },
    #[error("regularization C must be positive, found {0}")]
    InvalidC(f64),
}

/// Inclusive grid `start, start+step, …, stop`, rounded to 1e-9 so that
/// decimal steps land exactly on their printed values.
pub fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).round() as i64;
    (0..=n.max(0))
        .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
        .collect()
}

pub fn concreteness_grid() -> Vec<f64> {
    grid(3.0, 5.0, 0.05)
}

pub fn similarity_grid() -> Vec<f64> {
    grid(0.0, 1.0, 0.05)
}

/// Predicted label with the score or margin behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub visible: bool,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdModel {
    pub theta: f64,
}

impl ThresholdModel {
    /// `score ≥ theta` is visible; an absent score is not.
    pub fn predict(&self, score: Option<f64>) -> Decision {
        Decision {
            visible: score.is_some_and(|s| s >= self.theta),
            score,
        }
    }
}

/// Grid value with the best accuracy on `(scores, labels)`; ties go to the
/// smallest theta.
pub fn tune_threshold(
    scores: &[Option<f64>],
    labels: &[bool],
    grid: &[f64],
) -> Result<ThresholdModel, ClassifierError> {
    if scores.len() != labels.len() {
        return Err(ClassifierError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(ClassifierError::EmptyValidation);
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(usize, f64)> = None;
    for &theta in &sorted {
        let model = ThresholdModel { theta };
        let correct = scores
            .iter()
            .zip(labels)
            .filter(|(s, &y)| model.predict(**s).visible == y)
            .count();
        if best.is_none_or(|(c, _)| correct > c) {
            best = Some((correct, theta));
        }
    }
    best.map(|(_, theta)| ThresholdModel { theta })
        .ok_or(ClassifierError::EmptyGrid)
}

pub enum SimilarityMode<'a> {
    Wup(&'a Taxonomy),
    Cosine(&'a EmbeddingTable),
}

/// Best similarity between any action noun and any detected object label.
/// Identical strings score 1. Pairs the resource cannot score are skipped;
/// `None` when nothing could be scored.
pub fn object_match_score<S: AsRef<str>, T: AsRef<str>>(
    nouns: &[S],
    detected: &[T],
    mode: &SimilarityMode<'_>,
) -> Option<f64> {
    let mut best: Option<f64> = None;
    for noun in nouns {
        let noun = noun.as_ref();
        for label in detected {
            let label = label.as_ref();
            let sim = if noun.eq_ignore_ascii_case(label) {
                Some(1.0)
            } else {
                match mode {
                    SimilarityMode::Wup(t) => t.wup_similarity(noun, label).ok(),
                    SimilarityMode::Cosine(e) => match (e.get(noun), e.get(label)) {
                        (Some(a), Some(b)) => cosine(a, b).ok(),
                        _ => None,
                    },
                }
            };
            if let Some(s) = sim {
                best = Some(best.map_or(s, |b: f64| b.max(s)));
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    #[serde(rename = "C")]
    pub c: f64,
}

impl LinearModel {
    pub fn margin(&self, x: &[f64]) -> Result<f64, ClassifierError> {
        if x.len() != self.weights.len() {
            return Err(ClassifierError::DimMismatch {
                expected: self.weights.len(),
                found: x.len(),
            });
        }
        Ok(self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias)
    }

    /// Visible when `w·x + b ≥ 0`.
    pub fn predict(&self, x: &[f64]) -> Result<Decision, ClassifierError> {
        let m = self.margin(x)?;
        Ok(Decision {
            visible: m >= 0.0,
            score: Some(m),
        })
    }

    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Decision>, ClassifierError> {
        xs.iter().map(|x| self.predict(x)).collect()
    }
}

/// Serialized model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelFile {
    Threshold(ThresholdModel),
    Linear(LinearModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearTrainConfig {
    pub folds: usize,
    pub epochs: usize,
}

impl Default for LinearTrainConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            epochs: 20,
        }
    }
}

pub const DEFAULT_C_GRID: &[f64] = &[0.01, 0.1, 1.0, 10.0, 100.0];

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub model: LinearModel,
    /// Mean CV accuracy for each C, in grid order.
    pub cv_accuracy: Vec<(f64, f64)>,
    /// Set when every training label was identical; the model is then a
    /// constant predictor of that label.
    pub singular_data: bool,
}

impl LinearFit {
    pub fn best_cv_accuracy(&self) -> Option<f64> {
        self.cv_accuracy.iter().map(|&(_, a)| a).reduce(f64::max)
    }
}

/// Pegasos stochastic sub-gradient descent on the hinge loss with
/// `λ = 1/(n·C)`. The bias is learned as the weight of a constant feature.
fn pegasos(xs: &[&[f64]], ys: &[bool], c: f64, epochs: usize, seed: u64) -> LinearModel {
    let n = xs.len();
    let dim = xs.first().map_or(0, |x| x.len());
    let lambda = 1.0 / (n as f64 * c);
    let radius = 1.0 / lambda.sqrt();
    let mut w = vec![0.0; dim + 1];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0u64;
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let y = if ys[i] { 1.0 } else { -1.0 };
            let score = xs[i].iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[dim];
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            if y * score < 1.0 {
                for (wj, xj) in w.iter_mut().zip(xs[i]) {
                    *wj += eta * y * xj;
                }
                w[dim] += eta * y;
            }
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > radius {
                w.iter_mut().for_each(|v| *v *= radius / norm);
            }
        }
    }
    let bias = w.pop().unwrap_or(0.0);
    LinearModel {
        weights: w,
        bias,
        c,
    }
}

/// Chooses C by k-fold cross-validation (ties to the smaller C), then
/// retrains on all data.
pub fn train_linear(
    xs: &[Vec<f64>],
    ys: &[bool],
    c_grid: &[f64],
    cfg: LinearTrainConfig,
    seed: u64,
) -> Result<LinearFit, ClassifierError> {
    if xs.len() != ys.len() {
        return Err(ClassifierError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < cfg.folds.max(2) {
        return Err(ClassifierError::TooFewExamples {
            n: xs.len(),
            folds: cfg.folds,
        });
    }
    if c_grid.is_empty() {
        return Err(ClassifierError::EmptyGrid);
    }
    if let Some(&c) = c_grid.iter().find(|c| !(**c > 0.0)) {
        return Err(ClassifierError::InvalidC(c));
    }
    let dim = xs[0].len();
    if let Some(x) = xs.iter().find(|x| x.len() != dim) {
        return Err(ClassifierError::DimMismatch {
            expected: dim,
            found: x.len(),
        });
    }
    let mut grid_sorted = c_grid.to_vec();
    grid_sorted.sort_by(f64::total_cmp);
    grid_sorted.dedup();

    if ys.iter().all(|&y| y == ys[0]) {
        let c = grid_sorted[0];
        return Ok(LinearFit {
            model: LinearModel {
                weights: vec![0.0; dim],
                bias: if ys[0] { 1.0 } else { -1.0 },
                c,
            },
            cv_accuracy: grid_sorted.iter().map(|&c| (c, 1.0)).collect(),
            singular_data: true,
        });
    }

    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let fold_of = |pos: usize| pos % cfg.folds;

    let mut cv_accuracy = Vec::with_capacity(grid_sorted.len());
    for &c in &grid_sorted {
        let mut total = 0.0;
        for k in 0..cfg.folds {
            let (mut tx, mut ty, mut vx, mut vy) = (vec![], vec![], vec![], vec![]);
            for (pos, &i) in order.iter().enumerate() {
                if fold_of(pos) == k {
                    vx.push(xs[i].as_slice());
                    vy.push(ys[i]);
                } else {
                    tx.push(xs[i].as_slice());
                    ty.push(ys[i]);
                }
            }
            let m = pegasos(&tx, &ty, c, cfg.epochs, seed.wrapping_add(k as u64 + 1));
            let correct = vx
                .iter()
                .zip(&vy)
                .filter(|(x, &y)| (m.margin(x).unwrap() >= 0.0) == y)
                .count();
            total += correct as f64 / vx.len() as f64;
        }
        cv_accuracy.push((c, total / cfg.folds as f64));
    }
    let mut best = cv_accuracy[0];
    for &(c, acc) in &cv_accuracy[1..] {
        if acc > best.1 {
            best = (c, acc);
        }
    }
    let all: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    Ok(LinearFit {
        model: pegasos(&all, ys, best.0, cfg.epochs, seed),
        cv_accuracy,
        singular_data: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn grids() {
        let g = concreteness_grid();
        assert_eq!(g.len(), 41);
        assert_eq!(g[0], 3.0);
        assert_eq!(g[19], 3.95);
        assert_eq!(*g.last().unwrap(), 5.0);
        assert_eq!(similarity_grid().len(), 21);
    }

    #[test]
    fn separated_scores() {
        let scores = [Some(3.9), Some(3.9), Some(4.1), Some(4.1), None];
        let labels = [false, false, true, true, false];
        // oracle: scan every grid value, keep the first with the max count
        let g = concreteness_grid();
        let acc = |t: f64| {
            scores
                .iter()
                .zip(&labels)
                .filter(|(s, &y)| (s.map_or(false, |s| s >= t)) == y)
                .count()
        };
        let best = g.iter().map(|&t| acc(t)).max().unwrap();
        let oracle = *g.iter().find(|&&t| acc(t) == best).unwrap();
        assert_eq!(oracle, 3.95);
        assert_eq!(tune_threshold(&scores, &labels, &g).unwrap().theta, 3.95);
    }

    #[test]
    fn threshold_edges() {
        let g = concreteness_grid();
        let all_visible = tune_threshold(&[Some(3.5), Some(4.5)], &[true, true], &g).unwrap();
        assert_eq!(all_visible.theta, 3.0);
        assert!(ThresholdModel { theta: 4.0 }.predict(Some(4.0)).visible);
        assert!(!ThresholdModel { theta: 1.0 }.predict(None).visible);
        assert_eq!(tune_threshold(&[], &[], &g), Err(ClassifierError::EmptyValidation));
        assert_eq!(tune_threshold(&[Some(1.0)], &[true], &[]), Err(ClassifierError::EmptyGrid));
    }

    #[test]
    fn object_matching() {
        let tax = Taxonomy::parse_tsv("R\tR\nA\tR\nB\tA\nC\tA\n").unwrap();
        let wup = SimilarityMode::Wup(&tax);
        assert!((object_match_score(&["B"], &["C"], &wup).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(object_match_score(&["bowl"], &["Bowl"], &wup), Some(1.0));
        assert_eq!(object_match_score::<&str, &str>(&["B"], &[], &wup), None);
        assert_eq!(object_match_score::<&str, &str>(&[], &["B"], &wup), None);
        let emb = EmbeddingTable::parse_text("cup 1 0\nmug 1 1\n").unwrap();
        let cos = SimilarityMode::Cosine(&emb);
        let s = object_match_score(&["cup"], &["mug", "ghost"], &cos).unwrap();
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    fn blobs(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = vec![];
        let mut ys = vec![];
        for i in 0..n {
            let y = i % 2 == 0;
            let c = if y { 1.5 } else { -1.5 };
            xs.push(vec![c + rng.random_range(-1.0..1.0) * 0.5, c + rng.random_range(-1.0..1.0) * 0.5]);
            ys.push(y);
        }
        (xs, ys)
    }

    #[test]
    fn separable_blobs() {
        let (xs, ys) = blobs(200, 3);
        let fit = train_linear(&xs, &ys, DEFAULT_C_GRID, LinearTrainConfig::default(), 9).unwrap();
        assert!(fit.best_cv_accuracy().unwrap() >= 0.98, "{:?}", fit.cv_accuracy);
        assert!(!fit.singular_data);
    }

    #[test]
    fn constant_labels() {
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let fit = train_linear(&xs, &[false; 10], DEFAULT_C_GRID, LinearTrainConfig::default(), 1).unwrap();
        assert!(fit.singular_data);
        assert!(xs.iter().all(|x| !fit.model.predict(x).unwrap().visible));
    }

    #[test]
    fn noise_labels() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let xs: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random(), rng.random()]).collect();
            let ys: Vec<bool> = (0..200).map(|_| rng.random()).collect();
            let fit = train_linear(&xs, &ys, &[1.0], LinearTrainConfig::default(), seed).unwrap();
            let acc = fit.cv_accuracy[0].1;
            assert!((0.4..=0.6).contains(&acc), "seed {seed}: {acc}");
        }
    }

    #[test]
    fn deterministic_and_plumbing() {
        let (xs, ys) = blobs(50, 5);
        let a = train_linear(&xs, &ys, DEFAULT_C_GRID, LinearTrainConfig::default(), 4).unwrap();
        let b = train_linear(&xs, &ys, DEFAULT_C_GRID, LinearTrainConfig::default(), 4).unwrap();
        assert_eq!(a.model, b.model);
        let batch = a.model.predict_batch(&xs).unwrap();
        for (x, d) in xs.iter().zip(&batch) {
            assert_eq!(a.model.predict(x).unwrap(), *d);
        }
        let origin = LinearModel { weights: vec![0.0, 0.0], bias: 0.5, c: 1.0 };
        assert!(origin.predict(&[0.0, 0.0]).unwrap().visible);
        assert!(matches!(origin.predict(&[0.0]), Err(ClassifierError::DimMismatch { .. })));
        assert!(matches!(
            train_linear(&xs[..3], &ys[..3], &[1.0], LinearTrainConfig::default(), 0),
            Err(ClassifierError::TooFewExamples { .. })
        ));
    }

    #[test]
    fn model_json() {
        let t = ModelFile::Threshold(ThresholdModel { theta: 3.95 });
        assert_eq!(serde_json::to_string(&t).unwrap(), r#"{"kind":"threshold","theta":3.95}"#);
        let l = ModelFile::Linear(LinearModel { weights: vec![1.0], bias: -0.5, c: 10.0 });
        let s = serde_json::to_string(&l).unwrap();
        assert_eq!(s, r#"{"kind":"linear","weights":[1.0],"bias":-0.5,"C":10.0}"#);
        assert_eq!(serde_json::from_str::<ModelFile>(&s).unwrap(), l);
    }

    proptest! {
        #[test]
        fn positive_rescaling(
            w in prop::collection::vec(-3.0f64..3.0, 3),
            b in -3.0f64..3.0,
            k in 0.001f64..1000.0,
            x in prop::collection::vec(-3.0f64..3.0, 3),
        ) {
            let m = LinearModel { weights: w.clone(), bias: b, c: 1.0 };
            let scaled = LinearModel { weights: w.iter().map(|v| v * k).collect(), bias: b * k, c: 1.0 };
            let margin = m.margin(&x).unwrap();
            prop_assume!(margin.abs() > 1e-9);
            prop_assert_eq!(m.predict(&x).unwrap().visible, scaled.predict(&x).unwrap().visible);
        }

        #[test]
        fn tuned_threshold_is_monotone(
            data in prop::collection::vec((prop::option::of(1.0f64..5.0), any::<bool>()), 1..40)
        ) {
            let (scores, labels): (Vec<_>, Vec<_>) = data.into_iter().unzip();
            let m = tune_threshold(&scores, &labels, &concreteness_grid()).unwrap();
            for s in scores.iter().flatten() {
                prop_assert_eq!(m.predict(Some(*s)).visible, *s >= m.theta);
            }
        }
    }
}
