//! Core data model and feature extraction for translation-difficulty
//! analysis: segment index algebra, study-table ingest, the model dump
//! interchange format, and surprisal/attention/control features.

pub mod error;
pub mod features;
pub mod index;
pub mod ingest;
pub mod model_io;

pub use error::{CoreError, MappingError, Result};
pub use index::{complement_source, preceding_context, prefix_through, IndexSet, SegmentRef, SentencePair, Side};
