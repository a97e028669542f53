use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::features::{BowImage, WordId};

use super::ransac::{max_inliers, Point, RansacParams};
use super::{InvertedIndex, RankedList};

/// Which refinement stages run after TF-IDF scoring.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StageFlags {
    pub ratio_test: bool,
    pub geometric: bool,
    pub islands: bool,
}

impl StageFlags {
    pub const ALL: StageFlags = StageFlags {
        ratio_test: true,
        geometric: true,
        islands: true,
    };
    pub const TFIDF_ONLY: StageFlags = StageFlags {
        ratio_test: false,
        geometric: false,
        islands: false,
    };
}

impl Default for StageFlags {
    fn default() -> Self {
        Self::ALL
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QueryParams {
    pub stages: StageFlags,
    /// Accept a match when best < ratio · second-best (second from another image).
    pub ratio: f64,
    /// Number of TF-IDF candidates that get geometric verification.
    pub top_v: usize,
    pub ransac: RansacParams,
    /// Map ids within this distance join the same island.
    pub island_gap: u32,
}

impl Default for QueryParams {
    fn default() -> Self {
        Self {
            stages: StageFlags::ALL,
            ratio: 0.8,
            top_v: 20,
            ransac: RansacParams::default(),
            island_gap: 3,
        }
    }
}

/// Cosine similarity of TF-IDF vectors per document, reduced to a per-image
/// maximum. Only images with a positive score appear. Keyed by image
/// position in the index.
pub fn tfidf_image_scores(idx: &InvertedIndex, query: &BowImage) -> BTreeMap<u32, f64> {
    let mut counts: BTreeMap<WordId, u32> = BTreeMap::new();
    for e in &query.entries {
        if let Some(w) = e.word {
            *counts.entry(w).or_default() += 1;
        }
    }
    let q_len: u32 = counts.values().sum();
    let mut q_norm_sq = 0.0;
    let mut dot: HashMap<u32, f64> = HashMap::new();
    for (&w, &c) in &counts {
        let idf = idx.idf(w);
        let qw = f64::from(c) / f64::from(q_len) * idf;
        q_norm_sq += qw * qw;
        for p in idx.postings(w) {
            let len = f64::from(idx.docs()[p.doc as usize].length);
            let dw = f64::from(p.count) / len * idf;
            *dot.entry(p.doc).or_insert(0.0) += qw * dw;
        }
    }
    let q_norm = q_norm_sq.sqrt();
    let mut best: BTreeMap<u32, f64> = BTreeMap::new();
    if q_norm == 0.0 {
        return best;
    }
    for (doc, d) in dot {
        let dn = idx.doc_norm(doc as usize);
        if dn == 0.0 {
            continue;
        }
        let cos = d / (q_norm * dn);
        if cos > 0.0 {
            let image = idx.docs()[doc as usize].image;
            let slot = best.entry(image).or_insert(0.0);
            if cos > *slot {
                *slot = cos;
            }
        }
    }
    best
}

type Correspondences = HashMap<u32, Vec<(Point, Point)>>;

fn kp_point(x: u32, y: u32) -> Point {
    (f64::from(x), f64::from(y))
}

/// Ratio-test matches: each query feature goes to its single best map
/// keypoint when that beats the best keypoint of any other image.
fn ratio_matches(idx: &InvertedIndex, query: &BowImage, ratio: f64) -> Correspondences {
    let mut out: Correspondences = HashMap::new();
    for e in &query.entries {
        let Some(w) = e.word else { continue };
        let mut per_image: BTreeMap<u32, (u32, u32)> = BTreeMap::new();
        for &(img, ent) in idx.keypoints_with_word(w) {
            let d = idx.images()[img as usize].entries[ent as usize].descriptor.hamming(&e.descriptor);
            let slot = per_image.entry(img).or_insert((u32::MAX, ent));
            if d < slot.0 {
                *slot = (d, ent);
            }
        }
        let mut ranked: Vec<(u32, u32, u32)> = per_image.into_iter().map(|(img, (d, ent))| (d, img, ent)).collect();
        ranked.sort_unstable();
        let Some(&(d1, img, ent)) = ranked.first() else { continue };
        let accept = match ranked.get(1) {
            None => true,
            Some(&(d2, _, _)) => f64::from(d1) < ratio * f64::from(d2),
        };
        if accept {
            let kp = idx.images()[img as usize].entries[ent as usize].keypoint;
            out.entry(img)
                .or_default()
                .push((kp_point(e.keypoint.x, e.keypoint.y), kp_point(kp.x, kp.y)));
        }
    }
    out
}

/// Word matches into one image without the ratio test: every query feature
/// pairs with its nearest same-word keypoint in that image.
fn word_matches(idx: &InvertedIndex, query: &BowImage, image: u32) -> Vec<(Point, Point)> {
    let mut out = Vec::new();
    for e in &query.entries {
        let Some(w) = e.word else { continue };
        let best = idx
            .keypoints_with_word(w)
            .iter()
            .filter(|&&(img, _)| img == image)
            .map(|&(_, ent)| {
                let m = &idx.images()[image as usize].entries[ent as usize];
                (m.descriptor.hamming(&e.descriptor), ent)
            })
            .min();
        if let Some((_, ent)) = best {
            let kp = idx.images()[image as usize].entries[ent as usize].keypoint;
            out.push((kp_point(e.keypoint.x, e.keypoint.y), kp_point(kp.x, kp.y)));
        }
    }
    out
}

/// Weak localization from one (cropped) query BoW.
///
/// Stages: TF-IDF cosine against every sub-image document (an image scores
/// its best document); optional ratio-test pruning; optional similarity
/// RANSAC over the top candidates, re-scored by inlier count with TF-IDF as
/// tiebreak; optional island grouping of neighbouring map ids.
pub fn weak_query(idx: &InvertedIndex, query: &BowImage, params: &QueryParams) -> Result<RankedList> {
    if idx.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if query.mapped_count() == 0 {
        return Err(Error::Unlocalizable);
    }
    let tfidf = tfidf_image_scores(idx, query);
    let mut candidates: Vec<(u32, f64)> = tfidf.into_iter().collect();

    let ratio = params
        .stages
        .ratio_test
        .then(|| ratio_matches(idx, query, params.ratio));
    if let Some(m) = &ratio {
        candidates.retain(|(img, _)| m.contains_key(img));
    }

    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    if params.stages.geometric {
        let v = params.top_v.min(candidates.len());
        for (img, score) in candidates.iter_mut().take(v) {
            let pairs = match &ratio {
                Some(m) => m.get(img).cloned().unwrap_or_default(),
                None => word_matches(idx, query, *img),
            };
            let image_id = idx.images()[*img as usize].image_id;
            let ransac = RansacParams {
                seed: params.ransac.seed ^ u64::from(image_id).wrapping_mul(0x9e37_79b9_7f4a_7c15),
                ..params.ransac
            };
            // verified candidates sit above every unverified cosine (≤ 1)
            *score += 1.0 + max_inliers(&pairs, &ransac) as f64;
        }
    }

    let scored: Vec<(u32, f64)> = candidates
        .into_iter()
        .map(|(img, s)| (idx.images()[img as usize].image_id, s))
        .collect();
    let list = if params.stages.islands {
        islands(scored, params.island_gap)
    } else {
        RankedList::from_scores(scored)
    };
    Ok(list.with_universe(idx.n_images()))
}

/// Group ids whose consecutive gaps are at most `gap`. Islands rank by the
/// sum of member scores; members rank by their own score inside an island.
/// Each item carries its island's score.
pub fn islands(mut scored: Vec<(u32, f64)>, gap: u32) -> RankedList {
    scored.sort_by_key(|&(id, _)| id);
    let mut groups: Vec<Vec<(u32, f64)>> = Vec::new();
    for item in scored {
        match groups.last_mut() {
            Some(g) if item.0 - g.last().unwrap().0 <= gap => g.push(item),
            _ => groups.push(vec![item]),
        }
    }
    let mut groups: Vec<(f64, Vec<(u32, f64)>)> = groups
        .into_iter()
        .map(|mut g| {
            let total = super::ranked::canonical_sum(g.iter().map(|x| x.1));
            g.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            (total, g)
        })
        .collect();
    groups.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1[0].0.cmp(&b.1[0].0)));
    RankedList::from_ordered(
        groups
            .into_iter()
            .flat_map(|(total, g)| g.into_iter().map(move |(id, _)| (id, total)))
            .collect(),
    )
}
