//! Cell pooling, masking, channel fusion, top-X accuracy and the
//! synthetic dataset generator.

mod metrics;
mod synth;

pub use metrics::*;
pub use synth::{synth_dataset, SynthDataset, SynthQuery, SynthSpec};
