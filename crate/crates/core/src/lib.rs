//! Image change detection from localization inconsistency.
//!
//! Query images are localized against a map of bag-of-words sub-images.
//! Each region of interest runs its own weak retrieval; the ensemble of all
//! regions gives the strong localization. Regions whose weak ranking
//! disagrees with the strong result are likely changed. Two further channels
//! (reconstruction-error anomaly detection and pairwise descriptor
//! comparison) can be fused with it by reciprocal rank.
//!
//! # Feature flags
//! - `parallel` (default): per-ROI queries, per-query evaluation and
//!   feature quantization run on the rayon pool. Without it every loop runs
//!   sequentially with identical results.

pub mod anomaly;
pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod fault;
pub mod imaging;
pub mod loc;
pub mod localization;
pub mod pairwise;
pub mod pipeline;
pub mod roi;
mod par;

pub use error::{Error, Result};
pub use par::is_parallel;
