use rand::Rng;

use super::{Mat, Mode, NeuralError};

/// ReLU hidden layers, each followed by inverted dropout, then a linear
/// head producing one logit.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub weights: Vec<Mat>,
    pub biases: Vec<Vec<f64>>,
    pub dropout: Vec<f64>,
    pub head_w: Vec<f64>,
    pub head_b: f64,
}

#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    /// Input to each hidden layer and to the head.
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    masks: Vec<Option<Vec<f64>>>,
}

impl Mlp {
    pub fn zeros(input_dim: usize, hidden: &[usize], dropout: f64) -> Self {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        Self {
            weights: dims.windows(2).map(|w| Mat::zeros(w[1], w[0])).collect(),
            biases: hidden.iter().map(|&h| vec![0.0; h]).collect(),
            dropout: vec![dropout; hidden.len()],
            head_w: vec![0.0; *dims.last().unwrap()],
            head_b: 0.0,
        }
    }

    pub fn new<R: Rng>(input_dim: usize, hidden: &[usize], dropout: f64, rng: &mut R) -> Self {
        let mut m = Self::zeros(input_dim, hidden, dropout);
        for w in &mut m.weights {
            *w = Mat::glorot(w.rows, w.cols, rng);
        }
        m.head_w = Mat::glorot(1, m.head_w.len(), rng).data;
        m
    }

    pub fn input_dim(&self) -> usize {
        self.weights.first().map_or(self.head_w.len(), |w| w.cols)
    }

    pub fn check_config(&self) -> Result<(), NeuralError> {
        if let Some(r) = self.dropout.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return Err(NeuralError::InvalidConfig(format!("dropout rate {r} outside [0, 1)")));
        }
        Ok(())
    }

    pub fn validate(&self, x: &[f64]) -> Result<(), NeuralError> {
        if x.len() != self.input_dim() {
            return Err(NeuralError::DimMismatch {
                what: "mlp input",
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Logit for `x`. Masks are drawn from `rng` only in train mode.
    pub fn forward<R: Rng>(&self, x: &[f64], mode: Mode, rng: &mut R) -> (f64, MlpCache) {
        let mut cache = MlpCache::default();
        let mut a = x.to_vec();
        for ((w, b), &rate) in self.weights.iter().zip(&self.biases).zip(&self.dropout) {
            let mut z = w.matvec(&a);
            for (zi, bi) in z.iter_mut().zip(b) {
                *zi += bi;
            }
            let mut out: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
            let mask = (mode == Mode::Train && rate > 0.0).then(|| {
                let keep = 1.0 / (1.0 - rate);
                (0..out.len())
                    .map(|_| if rng.random::<f64>() >= rate { keep } else { 0.0 })
                    .collect::<Vec<f64>>()
            });
            if let Some(m) = &mask {
                out.iter_mut().zip(m).for_each(|(o, k)| *o *= k);
            }
            cache.inputs.push(std::mem::replace(&mut a, out));
            cache.pre.push(z);
            cache.masks.push(mask);
        }
        let logit = self.head_w.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>() + self.head_b;
        cache.inputs.push(a);
        (logit, cache)
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&self, cache: &MlpCache, dlogit: f64, grads: &mut Mlp) -> Vec<f64> {
        let last = cache.inputs.last().expect("forward cache");
        for (g, a) in grads.head_w.iter_mut().zip(last) {
            *g += dlogit * a;
        }
        grads.head_b += dlogit;
        let mut da: Vec<f64> = self.head_w.iter().map(|w| w * dlogit).collect();
        for l in (0..self.weights.len()).rev() {
            let mut dz = da;
            if let Some(m) = &cache.masks[l] {
                dz.iter_mut().zip(m).for_each(|(d, k)| *d *= k);
            }
            for (d, z) in dz.iter_mut().zip(&cache.pre[l]) {
                if *z <= 0.0 {
                    *d = 0.0;
                }
            }
            grads.weights[l].add_outer(&dz, &cache.inputs[l]);
            for (gb, d) in grads.biases[l].iter_mut().zip(&dz) {
                *gb += d;
            }
            da = self.weights[l].t_matvec(&dz);
        }
        da
    }

    pub fn zeros_like(&self) -> Self {
        let hidden: Vec<usize> = self.biases.iter().map(Vec::len).collect();
        let mut m = Self::zeros(self.input_dim(), &hidden, 0.0);
        m.dropout = self.dropout.clone();
        m
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(&w.data);
            out.push(b);
        }
        out.push(&self.head_w);
        out.push(std::slice::from_ref(&self.head_b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(&mut w.data);
            out.push(b);
        }
        out.push(&mut self.head_w);
        out.push(std::slice::from_mut(&mut self.head_b));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{bce_with_logit, sigmoid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_is_half() {
        let m = Mlp::zeros(4, &[3, 2], 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sigmoid(m.forward(&[1.0, 2.0, 3.0, 4.0], Mode::Eval, &mut rng).0), 0.5);
    }

    #[test]
    fn no_dropout_train_equals_eval() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = Mlp::new(3, &[5, 4], 0.0, &mut rng);
        let x = [0.2, -0.4, 0.9];
        let (a, _) = m.forward(&x, Mode::Train, &mut rng);
        let (b, _) = m.forward(&x, Mode::Eval, &mut rng);
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_is_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = Mlp::new(4, &[16], 0.5, &mut rng);
        m.biases[0].iter_mut().for_each(|b| *b = 0.3);
        m.head_w.iter_mut().for_each(|w| *w = w.abs());
        let x = [0.5, -0.25, 1.0, 0.75];
        let (eval, _) = m.forward(&x, Mode::Eval, &mut rng);
        let draws = 100_000;
        let mean = (0..draws)
            .map(|_| m.forward(&x, Mode::Train, &mut rng).0)
            .sum::<f64>()
            / draws as f64;
        assert!(((mean - eval) / eval).abs() < 0.01, "{mean} vs {eval}");
    }

    #[test]
    fn config_checks() {
        let mut m = Mlp::zeros(2, &[2], 1.0);
        assert!(m.check_config().is_err());
        m.dropout = vec![0.5];
        assert!(m.check_config().is_ok());
        assert!(m.validate(&[1.0]).is_err());
    }

    #[test]
    fn gradients_match_central_differences() {
        let eps = 1e-5;
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(1..=8);
            let layers: Vec<usize> = (0..rng.random_range(1..=3)).map(|_| rng.random_range(1..=8)).collect();
            let mut m = Mlp::new(n, &layers, 0.0, &mut rng);
            for b in &mut m.biases {
                b.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
            }
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: bool = rng.random();
            let loss = |m: &Mlp, x: &[f64]| bce_with_logit(m.forward(x, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0)).0, y).0;
            let (z, cache) = m.forward(&x, Mode::Eval, &mut rng);
            let mut g = m.zeros_like();
            let dx = m.backward(&cache, bce_with_logit(z, y).1, &mut g);
            let count = m.tensors().len();
            for ti in 0..count {
                for j in 0..m.tensors()[ti].len() {
                    let mut p = m.clone();
                    p.tensors_mut()[ti][j] += eps;
                    let mut q = m.clone();
                    q.tensors_mut()[ti][j] -= eps;
                    let numeric = (loss(&p, &x) - loss(&q, &x)) / (2.0 * eps);
                    let analytic = g.tensors()[ti][j];
                    let rel = (numeric - analytic).abs() / (numeric.abs() + analytic.abs()).max(1e-8);
                    assert!(rel < 1e-4 || (numeric - analytic).abs() < 1e-9,
                        "seed {seed} tensor {ti}[{j}]: {numeric} vs {analytic}");
                }
            }
            for k in 0..n {
                let mut xp = x.clone();
                xp[k] += eps;
                let mut xm = x.clone();
                xm[k] -= eps;
                let numeric = (loss(&m, &xp) - loss(&m, &xm)) / (2.0 * eps);
                assert!((numeric - dx[k]).abs() / (numeric.abs() + dx[k].abs()).max(1e-8) < 1e-4
                    || (numeric - dx[k]).abs() < 1e-9);
            }
        }
    }
}
