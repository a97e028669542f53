//! Keypoints, binary descriptors, the incrementally grown vocabulary and
//! the bag-of-words image built from them.

mod bow;
mod descriptor;
mod detector;
mod vocabulary;

pub use bow::{extract_bow, extract_bow_frozen, BowEntry, BowImage};
pub use descriptor::{compute_descriptor, describe_all, Descriptor, DESCRIPTOR_BITS, PATCH_RADIUS};
pub use detector::{detect_keypoints, detect_keypoints_with, Keypoint, MIN_IMAGE_SIDE, BORDER};
pub use vocabulary::{Vocabulary, WordId, DEFAULT_RADIUS};

/// Detector and extraction parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureParams {
    /// Intensity difference a circle pixel needs to count as brighter/darker.
    pub fast_threshold: u8,
    pub max_keypoints: usize,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            fast_threshold: 20,
            max_keypoints: 500,
        }
    }
}
