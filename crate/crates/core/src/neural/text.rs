use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lstm::LstmCache;
use super::mlp::MlpCache;
use super::{Lstm, Mat, Mlp, Mode, Network, NeuralError};
use crate::features::EmbeddingTable;

pub const PAD: usize = 0;
pub const UNK: usize = 1;

/// Token ids: 0 is padding, 1 is unknown, the rest follow sorted order.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let set: BTreeSet<String> = words.into_iter().map(|w| w.as_ref().to_lowercase()).collect();
        let mut all = vec!["<pad>".to_string(), "<unk>".to_string()];
        all.extend(set.into_iter().filter(|w| w != "<pad>" && w != "<unk>"));
        Self::from_list(all)
    }

    fn from_list(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(&word.to_lowercase()).copied().unwrap_or(UNK)
    }

    /// Ids for `tokens`, right-padded with [`PAD`] to `max_len`.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S], max_len: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = tokens.iter().map(|t| self.id(t.as_ref())).collect();
        if ids.len() < max_len {
            ids.resize(max_len, PAD);
        }
        ids
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextSpec {
    pub vocab: Vec<String>,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub fc_sizes: Vec<usize>,
    pub dropout: f64,
}

/// Trainable embeddings → LSTM → MLP head. Padding ids are dropped before
/// the LSTM and their embedding row stays zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TextModel {
    pub vocab: Arc<Vocab>,
    pub embedding: Mat,
    pub lstm: Lstm,
    pub mlp: Mlp,
}

pub struct TextCache {
    ids: Vec<usize>,
    lstm: LstmCache,
    mlp: MlpCache,
}

impl TextModel {
    pub fn zeros(vocab: Arc<Vocab>, embed_dim: usize, hidden_dim: usize, fc: &[usize], dropout: f64) -> Self {
        Self {
            embedding: Mat::zeros(vocab.len(), embed_dim),
            vocab,
            lstm: Lstm::zeros(embed_dim, hidden_dim),
            mlp: Mlp::zeros(hidden_dim, fc, dropout),
        }
    }

    /// Random initialization; rows for words found in `pretrained` are
    /// copied from it.
    pub fn new<R: Rng>(
        vocab: Arc<Vocab>,
        embed_dim: usize,
        hidden_dim: usize,
        fc: &[usize],
        dropout: f64,
        pretrained: Option<&EmbeddingTable>,
        rng: &mut R,
    ) -> Result<Self, NeuralError> {
        if let Some(t) = pretrained {
            if t.dim() != embed_dim {
                return Err(NeuralError::InvalidConfig(format!(
                    "embedding table has dimension {}, model expects {embed_dim}",
                    t.dim()
                )));
            }
        }
        let mut m = Self::zeros(vocab.clone(), embed_dim, hidden_dim, fc, dropout);
        m.embedding = Mat::glorot(vocab.len(), embed_dim, rng);
        if let Some(t) = pretrained {
            for (i, w) in vocab.words().iter().enumerate().skip(2) {
                if let Some(v) = t.get(w) {
                    m.embedding.row_mut(i).copy_from_slice(v);
                }
            }
        }
        m.embedding.row_mut(PAD).fill(0.0);
        m.lstm = Lstm::new(embed_dim, hidden_dim, rng);
        m.mlp = Mlp::new(hidden_dim, fc, dropout, rng);
        m.mlp.check_config()?;
        Ok(m)
    }

    pub fn spec(&self) -> TextSpec {
        TextSpec {
            vocab: self.vocab.words().to_vec(),
            embed_dim: self.embedding.cols,
            hidden_dim: self.lstm.hidden_dim,
            fc_sizes: self.mlp.biases.iter().map(Vec::len).collect(),
            dropout: self.mlp.dropout.first().copied().unwrap_or(0.0),
        }
    }

    pub fn from_spec(spec: &TextSpec) -> Self {
        let vocab = Arc::new(Vocab::from_list(spec.vocab.clone()));
        Self::zeros(vocab, spec.embed_dim, spec.hidden_dim, &spec.fc_sizes, spec.dropout)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        self.vocab.encode(tokens, 0)
    }
}

impl Network for TextModel {
    type Input = Vec<usize>;
    type Cache = TextCache;

    fn validate(&self, ids: &Vec<usize>) -> Result<(), NeuralError> {
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.vocab.len()) {
            return Err(NeuralError::DimMismatch {
                what: "token id",
                expected: self.vocab.len(),
                found: bad,
            });
        }
        if ids.iter().all(|&i| i == PAD) {
            return Err(NeuralError::EmptySequence);
        }
        Ok(())
    }

    fn forward<R: Rng>(&self, ids: &Vec<usize>, mode: Mode, rng: &mut R) -> (f64, TextCache) {
        let ids: Vec<usize> = ids.iter().copied().filter(|&i| i != PAD).collect();
        let rows: Vec<&[f64]> = ids.iter().map(|&i| self.embedding.row(i)).collect();
        let (h, lstm) = self.lstm.forward(&rows);
        let (z, mlp) = self.mlp.forward(&h, mode, rng);
        (z, TextCache { ids, lstm, mlp })
    }

    fn backward(&self, cache: &TextCache, dlogit: f64, grads: &mut Self) {
        let dh = self.mlp.backward(&cache.mlp, dlogit, &mut grads.mlp);
        let dx = self.lstm.backward(&cache.lstm, &dh, &mut grads.lstm);
        for (&id, d) in cache.ids.iter().zip(&dx) {
            for (g, v) in grads.embedding.row_mut(id).iter_mut().zip(d) {
                *g += v;
            }
        }
    }

    fn zeros_like(&self) -> Self {
        let mut m = Self::zeros(
            self.vocab.clone(),
            self.embedding.cols,
            self.lstm.hidden_dim,
            &self.mlp.biases.iter().map(Vec::len).collect::<Vec<_>>(),
            0.0,
        );
        m.mlp.dropout = self.mlp.dropout.clone();
        m
    }

    fn tensors(&self) -> Vec<&[f64]> {
        let mut t: Vec<&[f64]> = vec![&self.embedding.data];
        t.extend(self.lstm.tensors());
        t.extend(self.mlp.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t: Vec<&mut [f64]> = vec![&mut self.embedding.data];
        t.extend(self.lstm.tensors_mut());
        t.extend(self.mlp.tensors_mut());
        t
    }

    fn after_step(&mut self) {
        self.embedding.row_mut(PAD).fill(0.0);
    }
}
