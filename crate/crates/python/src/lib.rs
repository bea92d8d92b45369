//! Python bindings. Structured values cross the boundary as plain dicts and
//! lists with the same field names as the JSON artifacts.

use std::collections::HashMap;
use std::fmt::Display;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList, PyString};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use vlogvis_core::annotation::{self, AnnotationRecord, BinaryLabel, ClipActions, GroundTruthClip, Hit, LabelEntry};
use vlogvis_core::evaluation;
use vlogvis_core::extraction::{self, ChunkRules, Lexicon};
use vlogvis_core::features::{self, ConcretenessLexicon};
use vlogvis_core::neural::synthetic::{xor_dataset as planted_xor, XorShape};
use vlogvis_core::neural::{
    load_checkpoint, save_checkpoint, AnyModel, FusionInput, FusionModel, FusionSpec, Network, TrainConfig,
};
use vlogvis_core::segmentation::{self, Frame};
use vlogvis_core::transcript::{self, Transcript};

fn err(e: impl Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn value_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => PyString::new(py, s).into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(value_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, value_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    value_to_py(py, &serde_json::to_value(v).map_err(err)?)
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let json = obj.py().import("json")?;
    let text: String = json.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(err)
}

fn read_transcript(text: &str, video_id: &str, duration_s: f64) -> PyResult<Transcript> {
    transcript::parse_transcript(text.as_bytes(), video_id, duration_s).map_err(err)
}

fn frame(pgm: &[u8]) -> PyResult<Frame> {
    Frame::read_pgm(pgm).map_err(err)
}

/// Parses a WebVTT or SRT transcript into `{video_id, duration_s, cues}`.
#[pyfunction]
fn parse_transcript<'py>(py: Python<'py>, text: &str, video_id: &str, duration_s: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &read_transcript(text, video_id, duration_s)?)
}

#[pyfunction]
fn words_per_second(text: &str, video_id: &str, duration_s: f64) -> PyResult<f64> {
    transcript::words_per_second(&read_transcript(text, video_id, duration_s)?).map_err(err)
}

/// Candidate actions from a transcript, tagged with the built-in lexicon
/// and the default chunking rules.
#[pyfunction]
fn extract_actions<'py>(py: Python<'py>, text: &str, video_id: &str, duration_s: f64) -> PyResult<Bound<'py, PyList>> {
    let t = read_transcript(text, video_id, duration_s)?;
    let rules = ChunkRules::default();
    let tags = extraction::tag_with_lexicon(&extraction::transcript_tokens(&t), &Lexicon::builtin());
    let sentences = extraction::split_sentences(&t, &tags, rules.gap_s).map_err(err)?;
    let out = PyList::empty(py);
    for a in extraction::extract_actions(&t, &sentences, &rules).map_err(err)? {
        let d = PyDict::new(py);
        d.set_item("text", a.text())?;
        d.set_item("tokens", a.surfaces())?;
        d.set_item("tags", a.tags().iter().map(|t| t.as_str()).collect::<Vec<_>>())?;
        d.set_item("time_s", a.time_s)?;
        d.set_item("sentence_index", a.sentence_index)?;
        d.set_item("span", a.span)?;
        out.append(d)?;
    }
    Ok(out)
}

/// Groups `(action_id, time_s)` pairs into padded miniclips.
#[pyfunction]
#[pyo3(signature = (video_id, duration_s, actions, max_core_s = segmentation::DEFAULT_MAX_CORE_S, pad_s = segmentation::DEFAULT_PAD_S))]
fn segment<'py>(
    py: Python<'py>,
    video_id: &str,
    duration_s: f64,
    actions: Vec<(String, f64)>,
    max_core_s: f64,
    pad_s: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let clips = segmentation::segment(video_id, duration_s, &actions, max_core_s, pad_s).map_err(err)?;
    to_py(py, &clips)
}

#[pyfunction]
fn pearson_2d(a: &[u8], b: &[u8]) -> PyResult<f64> {
    segmentation::pearson_2d(&frame(a)?, &frame(b)?).map_err(err)
}

/// Median correlation of every `stride`-th frame, given PGM bytes.
#[pyfunction]
#[pyo3(signature = (frames, stride = segmentation::DEFAULT_STRIDE))]
fn motion_score(frames: Vec<Vec<u8>>, stride: usize) -> PyResult<f64> {
    let frames = frames.iter().map(|f| frame(f)).collect::<PyResult<Vec<_>>>()?;
    segmentation::motion_score(&frames, stride).map_err(err)
}

#[pyfunction]
fn fleiss_kappa(counts: Vec<Vec<u32>>, raters: u32) -> PyResult<f64> {
    annotation::fleiss_kappa(&counts, raters).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (miniclips, ground_truth, per_hit = 5, max_actions = annotation::MAX_ACTIONS_PER_CLIP, seed = 0))]
fn build_hits<'py>(
    miniclips: &Bound<'py, PyAny>,
    ground_truth: &Bound<'py, PyAny>,
    per_hit: usize,
    max_actions: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let clips: Vec<ClipActions> = from_py(miniclips)?;
    let gt: Vec<GroundTruthClip> = from_py(ground_truth)?;
    let hits = annotation::build_hits(&clips, &gt, per_hit, max_actions, seed).map_err(err)?;
    to_py(miniclips.py(), &hits)
}

/// Returns `"Accept"`, `"RejectUniform"` or `"RejectLowAccuracy"`.
#[pyfunction]
fn detect_spam(hit: &Bound<'_, PyAny>, labels: &Bound<'_, PyAny>, ground_truth: &Bound<'_, PyAny>) -> PyResult<String> {
    let hit: Hit = from_py(hit)?;
    let labels: Vec<LabelEntry> = from_py(labels)?;
    let gt: HashMap<String, BinaryLabel> = from_py(ground_truth)?;
    let verdict = annotation::detect_spam(&hit, &labels, &gt).map_err(err)?;
    Ok(format!("{verdict:?}"))
}

#[pyfunction]
fn aggregate<'py>(records: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let parsed: Vec<AnnotationRecord> = from_py(records)?;
    to_py(records.py(), &annotation::aggregate(&parsed).map_err(err)?)
}

#[pyfunction]
fn metrics<'py>(py: Python<'py>, predicted: Vec<bool>, gold: Vec<bool>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &evaluation::metrics(&predicted, &gold).map_err(err)?)
}

#[pyfunction]
fn paired_ttest<'py>(py: Python<'py>, a: Vec<f64>, b: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &evaluation::paired_ttest(&a, &b).map_err(err)?)
}

#[pyclass(name = "Taxonomy")]
struct PyTaxonomy(features::Taxonomy);

#[pymethods]
impl PyTaxonomy {
    /// `child<TAB>parent` rows; the root is its own parent.
    #[new]
    fn new(tsv: &str) -> PyResult<Self> {
        features::Taxonomy::parse_tsv(tsv).map(Self).map_err(err)
    }

    fn depth(&self, label: &str) -> PyResult<usize> {
        self.0.depth(label).map_err(err)
    }

    fn wup(&self, a: &str, b: &str) -> PyResult<f64> {
        self.0.wup_similarity(a, b).map_err(err)
    }
}

#[pyclass(name = "ConcretenessLexicon")]
struct PyLexicon(ConcretenessLexicon);

#[pymethods]
impl PyLexicon {
    #[new]
    fn new(tsv: &str) -> PyResult<Self> {
        ConcretenessLexicon::parse_tsv(tsv).map(Self).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn lookup(&self, word: &str) -> Option<f64> {
        self.0.lookup(word)
    }

    /// Concreteness of an action phrase, or `None` when no content word is
    /// rated.
    fn score(&self, action: &str) -> Option<f64> {
        let tokens: Vec<(String, usize)> = extraction::tokenize(action).into_iter().map(|t| (t, 0)).collect();
        let tagged = extraction::tag_with_lexicon(&tokens, &Lexicon::builtin());
        let words: Vec<&str> = tagged.iter().map(|t| t.surface.as_str()).collect();
        let tags: Vec<_> = tagged.iter().map(|t| t.pos).collect();
        features::concreteness_score(&words, &tags, &self.0)
    }
}

/// A trained network restored from, or saved to, checkpoint bytes.
#[pyclass(name = "Model")]
struct PyModel(AnyModel);

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(data: &[u8]) -> PyResult<Self> {
        load_checkpoint(data).map(|(m, _)| Self(m)).map_err(err)
    }

    #[pyo3(signature = (seed = 0))]
    fn to_bytes(&self, seed: u64) -> Vec<u8> {
        save_checkpoint(&self.0, seed)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.0 {
            AnyModel::Text(_) => "text",
            AnyModel::Fusion(_) => "fusion",
        }
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        match &self.0 {
            AnyModel::Text(m) => m.parameter_count(),
            AnyModel::Fusion(m) => m.parameter_count(),
        }
    }

    /// Probability that the action is visible. Text models take a token
    /// list; fusion models take a dict with `video`, `action` and `extras`.
    fn predict(&self, input: &Bound<'_, PyAny>) -> PyResult<f64> {
        match &self.0 {
            AnyModel::Text(m) => {
                let tokens: Vec<String> = input.extract()?;
                m.predict(&m.encode(&tokens)).map_err(err)
            }
            AnyModel::Fusion(m) => {
                let x: FusionInput = from_py(input)?;
                m.predict(&x).map_err(err)
            }
        }
    }
}

/// Planted examples whose label is the XOR of a text and a video marker.
#[pyfunction]
#[pyo3(signature = (n, seed = 0))]
fn xor_dataset<'py>(py: Python<'py>, n: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &planted_xor(n, XorShape::default(), seed))
}

/// Trains a fusion model on `[(input, label), ...]`; extras are taken from
/// the first example.
#[pyfunction]
#[pyo3(signature = (
    data, use_video = true, use_text = true, epochs = 20, learning_rate = 0.005, batch_size = 32,
    hidden_dim = 8, fc_sizes = vec![16, 8], dropout = 0.1, seed = 0
))]
#[allow(clippy::too_many_arguments)]
fn train_fusion(
    data: &Bound<'_, PyAny>,
    use_video: bool,
    use_text: bool,
    epochs: usize,
    learning_rate: f64,
    batch_size: usize,
    hidden_dim: usize,
    fc_sizes: Vec<usize>,
    dropout: f64,
    seed: u64,
) -> PyResult<PyModel> {
    let mut data: Vec<(FusionInput, bool)> = from_py(data)?;
    let first = &data.first().ok_or_else(|| err("no training examples"))?.0;
    let spec = FusionSpec {
        video_dim: first.video.first().map_or(0, Vec::len),
        hidden_dim,
        action_dim: first.action.len(),
        use_video,
        use_text,
        extras: first.extras.iter().map(|(&e, v)| (e, v.len())).collect(),
        fc_sizes: fc_sizes.clone(),
        dropout,
    };
    for (x, _) in &mut data {
        if !use_video {
            x.video.clear();
        }
        if !use_text {
            x.action.clear();
        }
    }
    let cfg = TrainConfig {
        learning_rate,
        epochs,
        batch_size,
        hidden_dim,
        fc_sizes,
        dropout,
        seed,
        ..TrainConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = FusionModel::new(spec, &mut rng).map_err(err)?;
    let (model, _) = vlogvis_core::neural::train(model, &data, None, &cfg).map_err(err)?;
    Ok(PyModel(AnyModel::Fusion(model)))
}

#[pymodule]
fn vlogvis(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(parse_transcript, m)?)?;
    m.add_function(wrap_pyfunction!(words_per_second, m)?)?;
    m.add_function(wrap_pyfunction!(extract_actions, m)?)?;
    m.add_function(wrap_pyfunction!(segment, m)?)?;
    m.add_function(wrap_pyfunction!(pearson_2d, m)?)?;
    m.add_function(wrap_pyfunction!(motion_score, m)?)?;
    m.add_function(wrap_pyfunction!(fleiss_kappa, m)?)?;
    m.add_function(wrap_pyfunction!(build_hits, m)?)?;
    m.add_function(wrap_pyfunction!(detect_spam, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(paired_ttest, m)?)?;
    m.add_function(wrap_pyfunction!(xor_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(train_fusion, m)?)?;
    m.add_class::<PyTaxonomy>()?;
    m.add_class::<PyLexicon>()?;
    m.add_class::<PyModel>()?;
    Ok(())
}
