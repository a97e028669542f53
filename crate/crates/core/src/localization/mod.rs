//! Inverted-file retrieval over map sub-images: weak (single ROI) and
//! strong (rank-fused) localization.

mod index;
mod query;
mod ranked;
pub mod ransac;

pub use index::{Document, IndexBuilder, InvertedIndex, Posting};
pub use query::{islands, tfidf_image_scores, weak_query, QueryParams, StageFlags};
pub use ranked::{strong_query, RankedList};
pub(crate) use ranked::canonical_sum;
