//! `VNF1` checkpoints: magic, u32-LE header length, JSON header, then every
//! parameter tensor as little-endian f64 in declaration order.

use serde::{Deserialize, Serialize};

use super::{FusionModel, FusionSpec, Network, NeuralError, TextModel, TextSpec};

pub const MAGIC: &[u8; 4] = b"VNF1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "architecture", rename_all = "snake_case")]
pub enum Architecture {
    TextLstm(TextSpec),
    Fusion(FusionSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    #[serde(flatten)]
    pub architecture: Architecture,
    pub seed: u64,
    pub tensor_lengths: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Text(TextModel),
    Fusion(FusionModel),
}

impl AnyModel {
    fn tensors(&self) -> Vec<&[f64]> {
        match self {
            AnyModel::Text(m) => m.tensors(),
            AnyModel::Fusion(m) => m.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            AnyModel::Text(m) => m.tensors_mut(),
            AnyModel::Fusion(m) => m.tensors_mut(),
        }
    }

    pub fn architecture(&self) -> Architecture {
        match self {
            AnyModel::Text(m) => Architecture::TextLstm(m.spec()),
            AnyModel::Fusion(m) => Architecture::Fusion(m.spec.clone()),
        }
    }
}

pub fn save_checkpoint(model: &AnyModel, seed: u64) -> Vec<u8> {
    let tensors = model.tensors();
    let header = Header {
        architecture: model.architecture(),
        seed,
        tensor_lengths: tensors.iter().map(|t| t.len()).collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(8 + json.len() + 8 * header.tensor_lengths.iter().sum::<usize>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for t in tensors {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Rebuilds the model and returns it with the recorded seed.
pub fn load_checkpoint(bytes: &[u8]) -> Result<(AnyModel, u64), NeuralError> {
    let bad = |m: String| NeuralError::Checkpoint(m);
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(bad("missing VNF1 magic".into()));
    }
    let len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = bytes
        .get(8..8 + len)
        .ok_or_else(|| bad("header truncated".into()))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| bad(e.to_string()))?;
    let mut model = match &header.architecture {
        Architecture::TextLstm(spec) => AnyModel::Text(TextModel::from_spec(spec)),
        Architecture::Fusion(spec) => AnyModel::Fusion(FusionModel::zeros(spec.clone())?),
    };
    let lengths: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
    if lengths != header.tensor_lengths {
        return Err(bad(format!(
            "tensor lengths {:?} do not match architecture {:?}",
            header.tensor_lengths, lengths
        )));
    }
    let mut values = bytes[8 + len..].chunks_exact(8);
    let expected = lengths.iter().sum::<usize>() * 8;
    if bytes.len() - 8 - len != expected {
        return Err(bad(format!(
            "expected {expected} parameter bytes, found {}",
            bytes.len() - 8 - len
        )));
    }
    for t in model.tensors_mut() {
        for (v, chunk) in t.iter_mut().zip(values.by_ref()) {
            *v = f64::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    Ok((model, header.seed))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::neural::{Extra, Vocab};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let vocab = Arc::new(Vocab::new(["a", "b"]));
        let text = AnyModel::Text(TextModel::new(vocab, 3, 2, &[4], 0.5, None, &mut rng).unwrap());
        let bytes = save_checkpoint(&text, 42);
        assert_eq!(&bytes[..4], b"VNF1");
        assert_eq!(load_checkpoint(&bytes).unwrap(), (text, 42));

        let spec = FusionSpec {
            video_dim: 3,
            hidden_dim: 2,
            action_dim: 2,
            use_video: true,
            use_text: true,
            extras: vec![(Extra::Pos, 2), (Extra::Concreteness, 1)],
            fc_sizes: vec![4, 3],
            dropout: 0.5,
        };
        let fusion = AnyModel::Fusion(FusionModel::new(spec, &mut rng).unwrap());
        let bytes = save_checkpoint(&fusion, 1);
        let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[8..8 + header_len]).unwrap();
        assert_eq!(header["architecture"], "fusion");
        assert_eq!(header["extras"][0][0], "pos");
        assert_eq!(load_checkpoint(&bytes).unwrap().0, fusion);
    }

    #[test]
    fn rejects_damage() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let vocab = Arc::new(Vocab::new(["a"]));
        let m = AnyModel::Text(TextModel::new(vocab, 2, 2, &[2], 0.0, None, &mut rng).unwrap());
        let bytes = save_checkpoint(&m, 0);
        assert!(load_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        assert!(load_checkpoint(b"VNF0\0\0\0\0").is_err());
        let mut extra = bytes.clone();
        extra.extend_from_slice(&[0; 8]);
        assert!(load_checkpoint(&extra).is_err());
    }
}
