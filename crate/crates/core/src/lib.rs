//! Multi-view text/image alignment features for multi-modal recommendation.
//!
//! Item metadata fields become view prompts; aligned text and image embeddings of those
//! views are scored against the item image with a temperature softmax, fused into one
//! text representation and fed, with the image embedding, into a graph collaborative
//! filtering backbone evaluated by all-item Recall@K and NDCG@K.

pub mod alignment;
pub mod backbone;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod fusion;
pub mod jsonl;
pub mod linalg;
pub mod prompt;
pub mod store;

pub use error::{Error, Result};
