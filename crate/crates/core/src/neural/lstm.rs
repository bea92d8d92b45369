use rand::Rng;

use super::{sigmoid, Mat, NeuralError};

/// Single-layer LSTM. Gate pre-activations are `W·[x; h_prev] + b` with
/// rows ordered input, forget, output, candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w: Mat,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Step {
    xh: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// Activations kept from a forward pass.
#[derive(Debug, Clone, Default)]
pub struct LstmCache {
    steps: Vec<Step>,
}

impl LstmCache {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

pub const FORGET_BIAS: f64 = 1.0;

impl Lstm {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            w: Mat::zeros(4 * hidden_dim, input_dim + hidden_dim),
            b: vec![0.0; 4 * hidden_dim],
        }
    }

    /// Glorot-uniform weights per gate block, zero biases except the
    /// forget gate at 1.
    pub fn new<R: Rng>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let mut l = Self::zeros(input_dim, hidden_dim);
        let cols = input_dim + hidden_dim;
        let mut data = Vec::with_capacity(4 * hidden_dim * cols);
        for _ in 0..4 {
            data.extend(Mat::glorot(hidden_dim, cols, rng).data);
        }
        l.w.data = data;
        l.b[hidden_dim..2 * hidden_dim].fill(FORGET_BIAS);
        l
    }

    pub fn validate<S: AsRef<[f64]>>(&self, seq: &[S]) -> Result<(), NeuralError> {
        if seq.is_empty() {
            return Err(NeuralError::EmptySequence);
        }
        for x in seq {
            if x.as_ref().len() != self.input_dim {
                return Err(NeuralError::DimMismatch {
                    what: "lstm input",
                    expected: self.input_dim,
                    found: x.as_ref().len(),
                });
            }
        }
        Ok(())
    }

    /// Final hidden state, starting from `h₀ = c₀ = 0`. Call [`Lstm::validate`] first.
    pub fn forward<S: AsRef<[f64]>>(&self, seq: &[S]) -> (Vec<f64>, LstmCache) {
        let hd = self.hidden_dim;
        let mut h = vec![0.0; hd];
        let mut c = vec![0.0; hd];
        let mut steps = Vec::with_capacity(seq.len());
        for x in seq {
            let mut xh = x.as_ref().to_vec();
            xh.extend_from_slice(&h);
            let mut a = self.w.matvec(&xh);
            for (ai, bi) in a.iter_mut().zip(&self.b) {
                *ai += bi;
            }
            let i: Vec<f64> = a[..hd].iter().map(|&v| sigmoid(v)).collect();
            let f: Vec<f64> = a[hd..2 * hd].iter().map(|&v| sigmoid(v)).collect();
            let o: Vec<f64> = a[2 * hd..3 * hd].iter().map(|&v| sigmoid(v)).collect();
            let g: Vec<f64> = a[3 * hd..].iter().map(|&v| v.tanh()).collect();
            let c_prev = c;
            c = (0..hd).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
            let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
            h = (0..hd).map(|k| o[k] * tanh_c[k]).collect();
            steps.push(Step {
                xh,
                c_prev,
                i,
                f,
                o,
                g,
                tanh_c,
            });
        }
        (h, LstmCache { steps })
    }

    /// Back-propagates `dL/dh_T` through time, accumulating parameter
    /// gradients into `grads`. Returns `dL/dx_t` for every step.
    pub fn backward(&self, cache: &LstmCache, dh_last: &[f64], grads: &mut Lstm) -> Vec<Vec<f64>> {
        let hd = self.hidden_dim;
        let mut dh = dh_last.to_vec();
        let mut dc = vec![0.0; hd];
        let mut dxs = vec![Vec::new(); cache.steps.len()];
        for (t, s) in cache.steps.iter().enumerate().rev() {
            let mut da = vec![0.0; 4 * hd];
            for k in 0..hd {
                let do_ = dh[k] * s.tanh_c[k];
                dc[k] += dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
                let di = dc[k] * s.g[k];
                let df = dc[k] * s.c_prev[k];
                let dg = dc[k] * s.i[k];
                da[k] = di * s.i[k] * (1.0 - s.i[k]);
                da[hd + k] = df * s.f[k] * (1.0 - s.f[k]);
                da[2 * hd + k] = do_ * s.o[k] * (1.0 - s.o[k]);
                da[3 * hd + k] = dg * (1.0 - s.g[k] * s.g[k]);
                dc[k] *= s.f[k];
            }
            grads.w.add_outer(&da, &s.xh);
            for (gb, d) in grads.b.iter_mut().zip(&da) {
                *gb += d;
            }
            let dxh = self.w.t_matvec(&da);
            dxs[t] = dxh[..self.input_dim].to_vec();
            dh = dxh[self.input_dim..].to_vec();
        }
        dxs
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        vec![&self.w.data, &self.b]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.w.data, &mut self.b]
    }
}
