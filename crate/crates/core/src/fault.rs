//! Fault diagnosis: change as disagreement between weak (single ROI) and
//! strong (fused) localization.
//!
//! For each ROI the inconsistency is the best weak rank achieved by any of
//! the strong top-Y hypotheses (min pooling, since retrieval noise only ever
//! inflates ranks). Per pixel, the ranks of all ROIs covering it are merged
//! by their harmonic mean.

use crate::error::{Error, Result};
use crate::features::BowImage;
use crate::localization::{strong_query, weak_query, InvertedIndex, QueryParams, RankedList};
use crate::loc::LocMap;
use crate::par;
use crate::roi::Roi;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdConfig {
    /// Number of strong hypotheses whose weak ranks are pooled.
    pub y: usize,
    pub query: QueryParams,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            y: 10,
            query: QueryParams::default(),
        }
    }
}

/// Minimum weak rank over the strong top-`y` ids (absent ids take the weak
/// list's missing rank). `y` is clamped to the strong list length.
pub fn obb_inconsistency(strong: &RankedList, weak: &RankedList, y: usize) -> usize {
    let y = y.max(1).min(strong.len());
    strong
        .ids()
        .take(y)
        .map(|id| weak.rank_or_missing(id))
        .min()
        .unwrap_or_else(|| weak.missing_rank())
}

/// Per-pixel harmonic mean of the ranks of every ROI containing the pixel;
/// uncovered pixels get 0.
pub fn fuse_pixel_ranks(rois: &[Roi], ranks: &[f64], dims: (usize, usize)) -> Result<LocMap> {
    if rois.len() != ranks.len() {
        return Err(Error::LengthMismatch {
            left: rois.len(),
            right: ranks.len(),
        });
    }
    if let Some(r) = ranks.iter().find(|r| !(**r >= 1.0 && r.is_finite())) {
        return Err(Error::InvalidArgument(format!("rank {r} is below 1")));
    }
    let (w, h) = dims;
    let mut count = vec![0u32; w * h];
    let mut inv_sum = vec![0.0f64; w * h];
    for (roi, &r) in rois.iter().zip(ranks) {
        let rect = roi.rect;
        let inv = 1.0 / r;
        for y in rect.y..rect.bottom().min(h) {
            let row = y * w;
            for x in rect.x..rect.right().min(w) {
                count[row + x] += 1;
                inv_sum[row + x] += inv;
            }
        }
    }
    let values = count
        .iter()
        .zip(&inv_sum)
        .map(|(&c, &s)| if c == 0 { 0.0 } else { f64::from(c) / s })
        .collect();
    Ok(LocMap::from_values(w, h, values))
}

/// Result of a fault-diagnosis run.
#[derive(Clone, Debug)]
pub struct FdOutput {
    pub loc: LocMap,
    /// Strong localization: the viewpoint half of the joint prediction.
    pub strong: RankedList,
    /// ROIs that carried keypoints, with their inconsistency ranks.
    pub roi_ranks: Vec<(Roi, usize)>,
}

/// Weak query per ROI, strong fusion over all of them, per-ROI
/// inconsistency and pixel fusion.
///
/// ROIs without keypoints carry no evidence and are skipped. ROIs whose
/// keypoints all fall outside the vocabulary get an empty weak list, so
/// every strong hypothesis takes the worst rank there.
pub fn fd_loc_map(idx: &InvertedIndex, query: &BowImage, rois: &[Roi], cfg: &FdConfig) -> Result<FdOutput> {
    if idx.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if rois.is_empty() {
        return Err(Error::EmptyInput("no ROIs"));
    }
    let crops: Vec<(usize, BowImage)> = rois
        .iter()
        .enumerate()
        .map(|(i, r)| (i, query.crop(&r.rect)))
        .filter(|(_, c)| !c.is_empty())
        .collect();
    let weak: Vec<RankedList> = par::map(&crops, |(_, crop)| {
        if crop.mapped_count() == 0 {
            Ok(RankedList::default().with_universe(idx.n_images()))
        } else {
            weak_query(idx, crop, &cfg.query)
        }
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let informative: Vec<RankedList> = weak.iter().filter(|l| !l.is_empty()).cloned().collect();
    if informative.is_empty() {
        return Err(Error::Unlocalizable);
    }
    let strong = strong_query(&informative)?;

    let roi_ranks: Vec<(Roi, usize)> = crops
        .iter()
        .zip(&weak)
        .map(|((i, _), w)| (rois[*i].clone(), obb_inconsistency(&strong, w, cfg.y)))
        .collect();
    let (used, ranks): (Vec<Roi>, Vec<f64>) = roi_ranks.iter().map(|(r, k)| (r.clone(), *k as f64)).unzip();
    let loc = fuse_pixel_ranks(&used, &ranks, query.dims())?;
    Ok(FdOutput { loc, strong, roi_ranks })
}
