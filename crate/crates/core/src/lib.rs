//! Building and classifying a corpus of actions mentioned in lifestyle-vlog
//! transcripts, labeled by whether each action is visible in the video.
//!
//! The pipeline runs transcript ingestion ([`transcript`]), candidate-action
//! chunking ([`extraction`]), miniclip segmentation and motion filtering
//! ([`segmentation`]), crowd annotation ([`annotation`]), feature building
//! ([`features`]), baselines ([`classifiers`]), from-scratch neural models
//! ([`neural`]) and evaluation ([`evaluation`]).

pub mod annotation;
pub mod classifiers;
pub mod evaluation;
pub mod extraction;
pub mod features;
pub mod kv;
pub mod neural;
pub mod seed;
pub mod segmentation;
pub mod transcript;
