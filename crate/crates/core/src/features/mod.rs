//! Text and visual feature extraction.

pub mod concreteness;
pub mod embeddings;
pub mod taxonomy;
pub mod video;

pub use concreteness::{concreteness_score, ConcretenessLexicon, LexiconError};
pub use embeddings::{
    action_embedding, context_features, cosine, pos_embedding, ContextFeatures, EmbeddingError,
    EmbeddingTable, Pooled,
};
pub use taxonomy::{Taxonomy, TaxonomyError};
pub use video::{read_detections, Detection, FeatureRows, VideoFeatureBank, VideoFeatureError};

/// Default window of context words on each side of an action.
pub const CONTEXT_WINDOW: usize = 5;
