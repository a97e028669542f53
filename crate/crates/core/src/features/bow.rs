use crate::error::Result;
use crate::imaging::{Image, Rect};
use crate::par;

use super::{describe_all, detect_keypoints_with, Descriptor, FeatureParams, Keypoint, Vocabulary, WordId};

/// One quantized local feature. `word` is `None` when the descriptor did
/// not map to any vocabulary word.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BowEntry {
    pub word: Option<WordId>,
    pub keypoint: Keypoint,
    pub descriptor: Descriptor,
}

/// An image as visual words anchored at keypoint locations. Cropping by an
/// ROI yields the sub-image BoW without recomputing features.
#[derive(Clone, Debug, PartialEq)]
pub struct BowImage {
    pub image_id: u32,
    pub width: usize,
    pub height: usize,
    pub entries: Vec<BowEntry>,
}

impl BowImage {
    pub fn new(image_id: u32, width: usize, height: usize, entries: Vec<BowEntry>) -> Self {
        Self {
            image_id,
            width,
            height,
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn mapped_count(&self) -> usize {
        self.entries.iter().filter(|e| e.word.is_some()).count()
    }

    /// Entries whose keypoint lies inside `rect`, still in full-image
    /// coordinates.
    pub fn crop(&self, rect: &Rect) -> BowImage {
        BowImage {
            entries: self
                .entries
                .iter()
                .filter(|e| rect.contains(e.keypoint.x as usize, e.keypoint.y as usize))
                .copied()
                .collect(),
            ..*self
        }
    }
}

/// Detect, describe and quantize. With `grow` the vocabulary absorbs unseen
/// descriptors; without it quantization runs read-only and in parallel.
pub fn extract_bow(
    img: &Image,
    image_id: u32,
    voc: &mut Vocabulary,
    grow: bool,
    params: &FeatureParams,
) -> Result<BowImage> {
    let kps = detect_keypoints_with(img, params)?;
    let descs = describe_all(img, &kps)?;
    let words: Vec<Option<WordId>> = if grow {
        descs.iter().map(|d| Some(voc.insert_or_lookup(d))).collect()
    } else {
        let voc = &*voc;
        par::map(&descs, |d| voc.lookup(d))
    };
    let entries = kps
        .into_iter()
        .zip(descs)
        .zip(words)
        .map(|((keypoint, descriptor), word)| BowEntry {
            word,
            keypoint,
            descriptor,
        })
        .collect();
    Ok(BowImage::new(image_id, img.width(), img.height(), entries))
}

/// Read-only extraction against a frozen vocabulary.
pub fn extract_bow_frozen(img: &Image, image_id: u32, voc: &Vocabulary, params: &FeatureParams) -> Result<BowImage> {
    let kps = detect_keypoints_with(img, params)?;
    let descs = describe_all(img, &kps)?;
    let words = par::map(&descs, |d| voc.lookup(d));
    let entries = kps
        .into_iter()
        .zip(descs)
        .zip(words)
        .map(|((keypoint, descriptor), word)| BowEntry {
            word,
            keypoint,
            descriptor,
        })
        .collect();
    Ok(BowImage::new(image_id, img.width(), img.height(), entries))
}
