//! Small from-scratch networks with analytic gradients: an LSTM, a ReLU MLP
//! with inverted dropout and a sigmoid head, RMSprop, and the text-only and
//! video+text fusion classifiers built from them.

pub mod checkpoint;
pub mod fusion;
pub mod lstm;
pub mod mlp;
pub mod synthetic;
pub mod text;
pub mod train;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, AnyModel};
pub use fusion::{Extra, FusionInput, FusionModel, FusionSpec};
pub use lstm::Lstm;
pub use mlp::Mlp;
pub use text::{TextModel, TextSpec, Vocab};
pub use train::{grid_search, train, GridPoint, LogRow, TrainConfig, TrainLog};

#[derive(Debug, Error, PartialEq)]
pub enum NeuralError {
    #[error("empty input sequence")]
    EmptySequence,
    #[error("{what}: expected dimension {expected}, found {found}")]
    DimMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("video features missing for a model that uses them")]
    MissingFeatureBank,
    #[error("extra feature {extra}: expected dimension {expected}, found {found}")]
    ExtrasDimMismatch {
        extra: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Uniform in ±√(6/(fan_in+fan_out)) with `fan_in = cols`, `fan_out = rows`.
    pub fn glorot<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        Self {
            rows,
            cols,
            data: (0..rows * cols)
                .map(|_| rng.random_range(-limit..=limit))
                .collect(),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `A·x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `Aᵀ·y`.
    pub fn t_matvec(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                for (o, a) in out.iter_mut().zip(self.row(i)) {
                    *o += a * yi;
                }
            }
        }
        out
    }

    /// `A += a·bᵀ`.
    pub fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        for (i, &ai) in a.iter().enumerate() {
            if ai != 0.0 {
                for (d, bj) in self.row_mut(i).iter_mut().zip(b) {
                    *d += ai * bj;
                }
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub const BCE_CLAMP: f64 = 1e-7;

/// Binary cross-entropy and its derivative with respect to `p`, after
/// clamping `p` to `[1e-7, 1 − 1e-7]`.
pub fn bce_loss(p: f64, y: bool) -> (f64, f64) {
    let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    if y {
        (-p.ln(), -1.0 / p)
    } else {
        (-(1.0 - p).ln(), 1.0 / (1.0 - p))
    }
}

/// Loss and gradient with respect to the logit `z`, where `p = σ(z)`.
pub fn bce_with_logit(z: f64, y: bool) -> (f64, f64) {
    let p = sigmoid(z);
    let (loss, dp) = bce_loss(p, y);
    (loss, dp * p * (1.0 - p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            rho: 0.9,
            epsilon: 1e-8,
        }
    }
}

/// `s ← ρs + (1−ρ)g²;  θ ← θ − lr·g/√(s+ε)`, elementwise.
pub fn rmsprop_step(param: &mut [f64], grad: &[f64], state: &mut [f64], cfg: &RmsPropConfig) {
    for ((p, &g), s) in param.iter_mut().zip(grad).zip(state.iter_mut()) {
        *s = cfg.rho * *s + (1.0 - cfg.rho) * g * g;
        *p -= cfg.learning_rate * g / (*s + cfg.epsilon).sqrt();
    }
}

/// Whether dropout masks are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A binary classifier whose parameters are a fixed list of flat tensors.
/// A value of the same type holds gradients.
pub trait Network: Clone {
    type Input;
    type Cache;

    fn validate(&self, input: &Self::Input) -> Result<(), NeuralError>;

    /// Logit for `input`. `rng` is only drawn from in train mode.
    fn forward<R: Rng>(&self, input: &Self::Input, mode: Mode, rng: &mut R) -> (f64, Self::Cache);

    /// Accumulates `dL/dθ` into `grads`, given `dL/dlogit`.
    fn backward(&self, cache: &Self::Cache, dlogit: f64, grads: &mut Self);

    fn zeros_like(&self) -> Self;

    fn tensors(&self) -> Vec<&[f64]>;

    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    /// Called after each optimizer step (e.g. to re-zero frozen rows).
    fn after_step(&mut self) {}

    /// Eval-mode probability of the visible class.
    fn predict(&self, input: &Self::Input) -> Result<f64, NeuralError> {
        self.validate(input)?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        Ok(sigmoid(self.forward(input, Mode::Eval, &mut rng).0))
    }

    /// Eval-mode loss and parameter gradients for one example.
    fn loss_and_grad(&self, input: &Self::Input, y: bool) -> Result<(f64, Self), NeuralError> {
        self.validate(input)?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let (z, cache) = self.forward(input, Mode::Eval, &mut rng);
        let (loss, dz) = bce_with_logit(z, y);
        let mut g = self.zeros_like();
        self.backward(&cache, dz, &mut g);
        Ok((loss, g))
    }

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// Model output for one (miniclip, action) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub action_id: String,
    pub miniclip_id: String,
    pub p_visible: f64,
}

impl Prediction {
    pub fn visible(&self) -> bool {
        self.p_visible >= 0.5
    }
}

/// Eval-mode prediction for one pair.
pub fn predict_visibility<N: Network>(
    model: &N,
    input: &N::Input,
    miniclip_id: &str,
    action_id: &str,
) -> Result<Prediction, NeuralError> {
    Ok(Prediction {
        action_id: action_id.to_string(),
        miniclip_id: miniclip_id.to_string(),
        p_visible: model.predict(input)?,
    })
}
