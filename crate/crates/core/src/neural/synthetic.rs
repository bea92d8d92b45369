//! Planted datasets for exercising the models without a real corpus.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Extra, FusionInput};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XorShape {
    pub frames: usize,
    pub video_dim: usize,
    pub action_dim: usize,
    pub pos_dim: usize,
    pub context_dim: usize,
    /// Half-width of the uniform noise on every non-marker value.
    pub noise: f64,
}

impl Default for XorShape {
    fn default() -> Self {
        Self {
            frames: 4,
            video_dim: 6,
            action_dim: 6,
            pos_dim: 3,
            context_dim: 4,
            noise: 1.0,
        }
    }
}

/// Examples whose label is the XOR of a text marker (sign of `action[0]`)
/// and a video marker (sign of column 0 in every frame). Each marker alone
/// carries no information about the label. Extras are pure noise.
pub fn xor_dataset(n: usize, shape: XorShape, seed: u64) -> Vec<(FusionInput, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = move |k: usize| -> Vec<f64> {
        (0..k).map(|_| rng.random_range(-shape.noise..=shape.noise)).collect()
    };
    let mut flips = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (0..n)
        .map(|_| {
            let t: bool = flips.random();
            let v: bool = flips.random();
            let sign = |b: bool| if b { 1.0 } else { -1.0 };
            let mut action = noise(shape.action_dim);
            action[0] = sign(t) * (1.0 + 0.2 * action[0].abs());
            let video = (0..shape.frames)
                .map(|_| {
                    let mut row = noise(shape.video_dim);
                    row[0] = sign(v) * (1.0 + 0.2 * row[0].abs());
                    row
                })
                .collect();
            let extras = BTreeMap::from([
                (Extra::Pos, noise(shape.pos_dim)),
                (Extra::ContextS, noise(2 * shape.context_dim)),
                (Extra::ContextA, noise(2 * shape.context_dim)),
                (Extra::Concreteness, noise(1)),
            ]);
            (
                FusionInput {
                    video,
                    action,
                    extras,
                },
                t ^ v,
            )
        })
        .collect()
}


#[cfg(test)]
mod xor_training {
    use super::*;
    use crate::neural::train::evaluate;
    use crate::neural::{train, FusionModel, FusionSpec, TrainConfig};

    fn accuracy(use_video: bool, use_text: bool) -> f64 {
        let shape = XorShape::default();
        let (tr, te) = (xor_dataset(600, shape, 1), xor_dataset(200, shape, 2));
        let cfg = TrainConfig {
            learning_rate: 0.005,
            epochs: 30,
            batch_size: 32,
            seed: 3,
            hidden_dim: 8,
            fc_sizes: vec![16, 8],
            dropout: 0.1,
            ..TrainConfig::default()
        };
        let spec = FusionSpec {
            video_dim: shape.video_dim,
            hidden_dim: cfg.hidden_dim,
            action_dim: shape.action_dim,
            use_video,
            use_text,
            extras: vec![],
            fc_sizes: cfg.fc_sizes.clone(),
            dropout: cfg.dropout,
        };
        let m = FusionModel::new(spec, &mut ChaCha8Rng::seed_from_u64(cfg.seed)).unwrap();
        evaluate(&train(m, &tr, None, &cfg).unwrap().0, &te).1
    }

    #[test]
    fn needs_both_modalities() {
        assert!(accuracy(true, true) >= 0.9);
        assert!(accuracy(false, true) <= 0.65);
        assert!(accuracy(true, false) <= 0.65);
    }
}
