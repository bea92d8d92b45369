use std::collections::BTreeMap;
use std::io::{self, BufRead, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const VFB_MAGIC: &[u8; 4] = b"VFB1";
pub const DEFAULT_FRAME_DIM: usize = 2048;
pub const DEFAULT_SEQUENCE_DIM: usize = 4096;

#[derive(Debug, Error)]
pub enum VideoFeatureError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("file truncated: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("detections line {line}: {source}")]
    Detection {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Per-clip visual features: one frame-level and one sequence-level vector
/// per sampled segment.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRows {
    pub dim_frame: usize,
    pub dim_seq: usize,
    pub frame: Vec<Vec<f32>>,
    pub sequence: Vec<Vec<f32>>,
}

impl FeatureRows {
    pub fn new(
        dim_frame: usize,
        dim_seq: usize,
        frame: Vec<Vec<f32>>,
        sequence: Vec<Vec<f32>>,
    ) -> Result<Self, VideoFeatureError> {
        if frame.len() != sequence.len() {
            return Err(VideoFeatureError::DimMismatch(format!(
                "{} frame rows vs {} sequence rows",
                frame.len(),
                sequence.len()
            )));
        }
        for (f, s) in frame.iter().zip(&sequence) {
            if f.len() != dim_frame || s.len() != dim_seq {
                return Err(VideoFeatureError::DimMismatch(format!(
                    "row of {}+{} values, header says {dim_frame}+{dim_seq}",
                    f.len(),
                    s.len()
                )));
            }
        }
        Ok(Self {
            dim_frame,
            dim_seq,
            frame,
            sequence,
        })
    }

    pub fn rows(&self) -> usize {
        self.frame.len()
    }

    /// Row `i` as frame features followed by sequence features.
    pub fn concatenated(&self, i: usize) -> Vec<f64> {
        self.frame[i]
            .iter()
            .chain(&self.sequence[i])
            .map(|&x| x as f64)
            .collect()
    }

    /// Column-wise mean of the concatenated rows.
    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_frame + self.dim_seq];
        for i in 0..self.rows() {
            for (o, x) in out.iter_mut().zip(self.concatenated(i)) {
                *o += x;
            }
        }
        if self.rows() > 0 {
            let n = self.rows() as f64;
            out.iter_mut().for_each(|o| *o /= n);
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.rows() * (self.dim_frame + self.dim_seq));
        out.extend_from_slice(VFB_MAGIC);
        for v in [self.dim_frame, self.dim_seq, self.rows()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for (f, s) in self.frame.iter().zip(&self.sequence) {
            for x in f.iter().chain(s) {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, VideoFeatureError> {
        if bytes.len() < 4 || &bytes[..4] != VFB_MAGIC {
            return Err(VideoFeatureError::BadMagic);
        }
        if bytes.len() < 16 {
            return Err(VideoFeatureError::TruncatedFile {
                expected: 16,
                found: bytes.len(),
            });
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let (dim_frame, dim_seq, rows) = (word(4), word(8), word(12));
        let expected = 16 + 4 * rows * (dim_frame + dim_seq);
        if bytes.len() < expected {
            return Err(VideoFeatureError::TruncatedFile {
                expected,
                found: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(VideoFeatureError::DimMismatch(format!(
                "{} trailing bytes after {rows} rows",
                bytes.len() - expected
            )));
        }
        let mut values = bytes[16..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
        let mut frame = Vec::with_capacity(rows);
        let mut sequence = Vec::with_capacity(rows);
        for _ in 0..rows {
            frame.push(values.by_ref().take(dim_frame).collect());
            sequence.push(values.by_ref().take(dim_seq).collect());
        }
        Self::new(dim_frame, dim_seq, frame, sequence)
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self, VideoFeatureError> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf).map_err(|source| VideoFeatureError::Io {
            path: "<reader>".into(),
            source,
        })?;
        Self::from_bytes(&buf)
    }

    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(&self.to_bytes())
    }
}

/// Features for many clips, loaded from `{miniclip_id}.vfb` files.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VideoFeatureBank {
    pub clips: BTreeMap<String, FeatureRows>,
}

impl VideoFeatureBank {
    pub fn load_dir(dir: &Path) -> Result<Self, VideoFeatureError> {
        let io_err = |source| VideoFeatureError::Io {
            path: dir.display().to_string(),
            source,
        };
        let mut clips = BTreeMap::new();
        let mut dims: Option<(usize, usize)> = None;
        for entry in std::fs::read_dir(dir).map_err(io_err)? {
            let path = entry.map_err(io_err)?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("vfb") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let bytes = std::fs::read(&path).map_err(|source| VideoFeatureError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let rows = FeatureRows::from_bytes(&bytes)?;
            let d = (rows.dim_frame, rows.dim_seq);
            if *dims.get_or_insert(d) != d {
                return Err(VideoFeatureError::DimMismatch(format!(
                    "{id} has dims {d:?}, expected {:?}",
                    dims.unwrap()
                )));
            }
            clips.insert(id.to_string(), rows);
        }
        Ok(Self { clips })
    }

    pub fn get(&self, miniclip_id: &str) -> Option<&FeatureRows> {
        self.clips.get(miniclip_id)
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.clips.values().next().map(|r| (r.dim_frame, r.dim_seq))
    }
}

/// One detected object in a sampled frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub miniclip_id: String,
    pub frame: u32,
    pub label: String,
    pub confidence: f64,
}

/// Reads JSONL detections, keeping those at or above `min_confidence`.
/// Labels per clip are deduplicated and sorted.
pub fn read_detections<R: BufRead>(
    reader: R,
    min_confidence: f64,
) -> Result<BTreeMap<String, Vec<String>>, VideoFeatureError> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| VideoFeatureError::Io {
            path: "<detections>".into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let d: Detection = serde_json::from_str(&line)
            .map_err(|source| VideoFeatureError::Detection { line: i + 1, source })?;
        let labels = out.entry(d.miniclip_id).or_default();
        if d.confidence >= min_confidence {
            labels.push(d.label);
        }
    }
    for labels in out.values_mut() {
        labels.sort();
        labels.dedup();
    }
    Ok(out)
}
