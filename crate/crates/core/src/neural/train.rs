use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{bce_with_logit, rmsprop_step, sigmoid, Mode, Network, NeuralError, RmsPropConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub hidden_dim: usize,
    pub fc_sizes: Vec<usize>,
    pub dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            rho: 0.9,
            epsilon: 1e-8,
            epochs: 20,
            batch_size: 32,
            seed: 0,
            hidden_dim: 32,
            fc_sizes: vec![64, 32],
            dropout: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<(), NeuralError> {
        let bad = |m: &str| Err(NeuralError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho must lie in (0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn rmsprop(&self) -> RmsPropConfig {
        RmsPropConfig {
            learning_rate: self.learning_rate,
            rho: self.rho,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,split,loss,accuracy\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{:.6},{:.6}\n", r.epoch, r.split, r.loss, r.accuracy));
        }
        out
    }

    pub fn last(&self, split: &str) -> Option<&LogRow> {
        self.rows.iter().rev().find(|r| r.split == split)
    }
}

/// Mean eval-mode loss and accuracy (threshold 0.5). Inputs must be valid.
pub fn evaluate<N: Network>(model: &N, data: &[(N::Input, bool)]) -> (f64, f64) {
    if data.is_empty() {
        return (0.0, 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mut loss, mut correct) = (0.0, 0usize);
    for (x, y) in data {
        let z = model.forward(x, Mode::Eval, &mut rng).0;
        loss += bce_with_logit(z, *y).0;
        if (sigmoid(z) >= 0.5) == *y {
            correct += 1;
        }
    }
    (loss / data.len() as f64, correct as f64 / data.len() as f64)
}

/// One optimizer step on a mini-batch; returns the mean train-mode loss.
fn step<N: Network>(
    model: &mut N,
    batch: &[&(N::Input, bool)],
    state: &mut [Vec<f64>],
    opt: &RmsPropConfig,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let mut grads = model.zeros_like();
    let mut loss = 0.0;
    for (x, y) in batch.iter().map(|e| (&e.0, e.1)) {
        let (z, cache) = model.forward(x, Mode::Train, rng);
        let (l, dz) = bce_with_logit(z, y);
        loss += l;
        model.backward(&cache, dz, &mut grads);
    }
    let scale = 1.0 / batch.len() as f64;
    for ((p, g), s) in model.tensors_mut().into_iter().zip(grads.tensors()).zip(state.iter_mut()) {
        let g: Vec<f64> = g.iter().map(|v| v * scale).collect();
        rmsprop_step(p, &g, s, opt);
    }
    model.after_step();
    loss * scale
}

/// Mini-batch RMSprop on binary cross-entropy. Shuffling and dropout draw
/// from one generator seeded by `cfg.seed`, so runs are reproducible.
pub fn train<N: Network>(
    mut model: N,
    train: &[(N::Input, bool)],
    validation: Option<&[(N::Input, bool)]>,
    cfg: &TrainConfig,
) -> Result<(N, TrainLog), NeuralError> {
    cfg.check()?;
    if train.is_empty() {
        return Err(NeuralError::EmptyDataset);
    }
    for (x, _) in train.iter().chain(validation.unwrap_or(&[])) {
        model.validate(x)?;
    }
    let opt = cfg.rmsprop();
    let mut state: Vec<Vec<f64>> = model.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = TrainLog::default();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&(N::Input, bool)> = chunk.iter().map(|&i| &train[i]).collect();
            step(&mut model, &batch, &mut state, &opt, &mut rng);
        }
        let (loss, accuracy) = evaluate(&model, train);
        log.rows.push(LogRow {
            epoch,
            split: "train".into(),
            loss,
            accuracy,
        });
        if let Some(val) = validation.filter(|v| !v.is_empty()) {
            let (loss, accuracy) = evaluate(&model, val);
            log.rows.push(LogRow {
                epoch,
                split: "validation".into(),
                loss,
                accuracy,
            });
        }
    }
    Ok((model, log))
}

/// One hyperparameter combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden_dim: usize,
    pub fc_sizes: Vec<usize>,
}

impl GridPoint {
    pub fn apply(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            hidden_dim: self.hidden_dim,
            fc_sizes: self.fc_sizes.clone(),
            ..base.clone()
        }
    }
}

pub struct GridResult<N> {
    pub model: N,
    pub config: TrainConfig,
    pub log: TrainLog,
    /// Validation accuracy for every grid point, in order.
    pub scores: Vec<f64>,
}

/// Trains one model per grid point (built by `build`) and keeps the one
/// with the best validation accuracy; ties go to the earlier point.
pub fn grid_search<N, F>(
    build: F,
    train_set: &[(N::Input, bool)],
    validation: &[(N::Input, bool)],
    grid: &[GridPoint],
    base: &TrainConfig,
) -> Result<GridResult<N>, NeuralError>
where
    N: Network,
    F: Fn(&TrainConfig) -> Result<N, NeuralError>,
{
    if grid.is_empty() {
        return Err(NeuralError::InvalidConfig("empty hyperparameter grid".into()));
    }
    if validation.is_empty() {
        return Err(NeuralError::EmptyDataset);
    }
    let mut best: Option<(f64, N, TrainConfig, TrainLog)> = None;
    let mut scores = Vec::with_capacity(grid.len());
    for point in grid {
        let cfg = point.apply(base);
        let (model, log) = train(build(&cfg)?, train_set, Some(validation), &cfg)?;
        let acc = evaluate(&model, validation).1;
        scores.push(acc);
        if best.as_ref().is_none_or(|b| acc > b.0) {
            best = Some((acc, model, cfg, log));
        }
    }
    let (_, model, config, log) = best.expect("non-empty grid");
    Ok(GridResult {
        model,
        config,
        log,
        scores,
    })
}
