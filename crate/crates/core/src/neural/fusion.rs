use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lstm::LstmCache;
use super::mlp::MlpCache;
use super::{Lstm, Mlp, Mode, Network, NeuralError};

/// Optional text-side inputs appended after the action vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extra {
    Pos,
    ContextS,
    ContextA,
    Concreteness,
}

impl Extra {
    pub const ALL: [Extra; 4] = [Extra::Pos, Extra::ContextS, Extra::ContextA, Extra::Concreteness];

    pub fn as_str(self) -> &'static str {
        match self {
            Extra::Pos => "pos",
            Extra::ContextS => "context_s",
            Extra::ContextA => "context_a",
            Extra::Concreteness => "concreteness",
        }
    }

    /// Parses a comma-separated list such as `pos,context_s`.
    pub fn parse_list(s: &str) -> Result<Vec<Extra>, NeuralError> {
        let mut out: Vec<Extra> = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()?;
        out.sort();
        out.dedup();
        Ok(out)
    }
}

impl fmt::Display for Extra {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Extra {
    type Err = NeuralError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Extra::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| NeuralError::InvalidConfig(format!("unknown extra feature {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionSpec {
    /// Width of one video row (frame features followed by sequence features).
    pub video_dim: usize,
    pub hidden_dim: usize,
    pub action_dim: usize,
    pub use_video: bool,
    pub use_text: bool,
    /// Extra inputs and their widths, in [`Extra`] order.
    pub extras: Vec<(Extra, usize)>,
    pub fc_sizes: Vec<usize>,
    pub dropout: f64,
}

impl FusionSpec {
    pub fn mlp_input_dim(&self) -> usize {
        let mut d = self.extras.iter().map(|(_, n)| n).sum::<usize>();
        if self.use_video {
            d += self.hidden_dim;
        }
        if self.use_text {
            d += self.action_dim;
        }
        d
    }

    fn check(&self) -> Result<(), NeuralError> {
        if self.mlp_input_dim() == 0 {
            return Err(NeuralError::InvalidConfig("model has no inputs".into()));
        }
        if self.use_video && (self.video_dim == 0 || self.hidden_dim == 0) {
            return Err(NeuralError::InvalidConfig("video branch needs non-zero dims".into()));
        }
        if self.extras.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(NeuralError::InvalidConfig("extras must be sorted and unique".into()));
        }
        Ok(())
    }
}

/// One (miniclip, action) pair.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FusionInput {
    /// Per-segment video rows; empty when no features exist.
    pub video: Vec<Vec<f64>>,
    pub action: Vec<f64>,
    pub extras: BTreeMap<Extra, Vec<f64>>,
}

/// Video rows → LSTM → final hidden state, concatenated with the action
/// vector and extras, then an MLP with a sigmoid head. Either modality can
/// be switched off to obtain single-modality baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub spec: FusionSpec,
    pub lstm: Option<Lstm>,
    pub mlp: Mlp,
}

pub struct FusionCache {
    lstm: Option<LstmCache>,
    mlp: MlpCache,
}

impl FusionModel {
    pub fn zeros(spec: FusionSpec) -> Result<Self, NeuralError> {
        spec.check()?;
        Ok(Self {
            lstm: spec.use_video.then(|| Lstm::zeros(spec.video_dim, spec.hidden_dim)),
            mlp: Mlp::zeros(spec.mlp_input_dim(), &spec.fc_sizes, spec.dropout),
            spec,
        })
    }

    pub fn new<R: Rng>(spec: FusionSpec, rng: &mut R) -> Result<Self, NeuralError> {
        let mut m = Self::zeros(spec)?;
        if m.spec.use_video {
            m.lstm = Some(Lstm::new(m.spec.video_dim, m.spec.hidden_dim, rng));
        }
        m.mlp = Mlp::new(m.spec.mlp_input_dim(), &m.spec.fc_sizes, m.spec.dropout, rng);
        m.mlp.check_config()?;
        Ok(m)
    }

    fn assemble(&self, input: &FusionInput, h: Option<&[f64]>) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.spec.mlp_input_dim());
        if let Some(h) = h {
            x.extend_from_slice(h);
        }
        if self.spec.use_text {
            x.extend_from_slice(&input.action);
        }
        for (e, _) in &self.spec.extras {
            x.extend_from_slice(&input.extras[e]);
        }
        x
    }
}

impl Network for FusionModel {
    type Input = FusionInput;
    type Cache = FusionCache;

    fn validate(&self, input: &FusionInput) -> Result<(), NeuralError> {
        if let Some(lstm) = &self.lstm {
            if input.video.is_empty() {
                return Err(NeuralError::MissingFeatureBank);
            }
            lstm.validate(&input.video)?;
        }
        if self.spec.use_text && input.action.len() != self.spec.action_dim {
            return Err(NeuralError::DimMismatch {
                what: "action vector",
                expected: self.spec.action_dim,
                found: input.action.len(),
            });
        }
        for &(e, n) in &self.spec.extras {
            let found = input.extras.get(&e).map_or(0, Vec::len);
            if found != n {
                return Err(NeuralError::ExtrasDimMismatch {
                    extra: e.to_string(),
                    expected: n,
                    found,
                });
            }
        }
        Ok(())
    }

    fn forward<R: Rng>(&self, input: &FusionInput, mode: Mode, rng: &mut R) -> (f64, FusionCache) {
        let (h, lstm) = match &self.lstm {
            Some(l) => {
                let (h, c) = l.forward(&input.video);
                (Some(h), Some(c))
            }
            None => (None, None),
        };
        let x = self.assemble(input, h.as_deref());
        let (z, mlp) = self.mlp.forward(&x, mode, rng);
        (z, FusionCache { lstm, mlp })
    }

    fn backward(&self, cache: &FusionCache, dlogit: f64, grads: &mut Self) {
        let dx = self.mlp.backward(&cache.mlp, dlogit, &mut grads.mlp);
        if let (Some(l), Some(c), Some(gl)) = (&self.lstm, &cache.lstm, grads.lstm.as_mut()) {
            l.backward(c, &dx[..self.spec.hidden_dim], gl);
        }
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.spec.clone()).expect("spec already validated")
    }

    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.lstm.as_ref().map(Lstm::tensors).unwrap_or_default();
        t.extend(self.mlp.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.lstm.as_mut().map(Lstm::tensors_mut).unwrap_or_default();
        t.extend(self.mlp.tensors_mut());
        t
    }
}
