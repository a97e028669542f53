//! Pairwise-comparison channel: each query keypoint scores the L2 distance
//! from its gradient histogram to the nearest one in the paired map image.

use crate::error::{Error, Result};
use crate::features::{detect_keypoints_with, FeatureParams, Keypoint};
use crate::imaging::Image;
use crate::loc::LocMap;
use crate::par;

pub const GRAD_DIMS: usize = 128;
const HALF: i64 = 8;
/// Splat radius of keypoint scores in the LoC raster.
pub const DEFAULT_SPLAT_RADIUS: usize = 8;

/// 4×4 spatial cells × 8 orientations over a 16×16 patch, L2-normalized
/// (all zero for a flat patch).
#[derive(Clone, Debug, PartialEq)]
pub struct GradDescriptor(pub [f64; GRAD_DIMS]);

impl GradDescriptor {
    pub fn distance(&self, other: &GradDescriptor) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|a| a * a).sum::<f64>().sqrt()
    }
}

/// Orientation octant of an integer gradient; rotating the gradient by 90°
/// shifts the octant by exactly 2.
pub fn octant(mut gx: i32, mut gy: i32) -> Option<usize> {
    if gx == 0 && gy == 0 {
        return None;
    }
    let mut q = 0;
    while !(gx > 0 && gy >= 0) {
        (gx, gy) = (gy, -gx);
        q += 1;
    }
    Some(2 * q + usize::from(gy >= gx))
}

/// Patch pixels are `x-8..x+8` by `y-8..y+8`; central differences need one
/// more pixel on each side.
pub fn grad_descriptor(img: &Image, kp: &Keypoint) -> Result<GradDescriptor> {
    let (x, y) = (i64::from(kp.x), i64::from(kp.y));
    let (w, h) = (img.width() as i64, img.height() as i64);
    if x - HALF - 1 < 0 || y - HALF - 1 < 0 || x + HALF >= w || y + HALF >= h {
        return Err(Error::PatchOutOfBounds { x: kp.x as usize, y: kp.y as usize });
    }
    let px = |x: i64, y: i64| i32::from(img.get(x as usize, y as usize));
    let mut hist = [0.0f64; GRAD_DIMS];
    for dy in -HALF..HALF {
        for dx in -HALF..HALF {
            let (u, v) = (x + dx, y + dy);
            let gx = px(u + 1, v) - px(u - 1, v);
            let gy = px(u, v + 1) - px(u, v - 1);
            let Some(o) = octant(gx, gy) else { continue };
            let cell = ((dy + HALF) / 4 * 4 + (dx + HALF) / 4) as usize;
            hist[cell * 8 + o] += f64::from(gx * gx + gy * gy).sqrt();
        }
    }
    let norm = hist.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm > 0.0 {
        hist.iter_mut().for_each(|a| *a /= norm);
    }
    Ok(GradDescriptor(hist))
}

pub fn grad_descriptors(img: &Image, kps: &[Keypoint]) -> Result<Vec<GradDescriptor>> {
    par::map(kps, |kp| grad_descriptor(img, kp)).into_iter().collect()
}

/// Distance from each query descriptor to its nearest reference descriptor.
pub fn nearest_distances(query: &[GradDescriptor], reference: &[GradDescriptor]) -> Vec<f64> {
    par::map(query, |q| {
        reference
            .iter()
            .map(|r| q.distance(r))
            .fold(f64::INFINITY, f64::min)
    })
}

/// Per-keypoint LoC of the query against the paired map image.
pub fn pc_scores(query: &Image, map_img: &Image, params: &FeatureParams) -> Result<Vec<(Keypoint, f64)>> {
    let mk = detect_keypoints_with(map_img, params)?;
    if mk.is_empty() {
        return Err(Error::NoReferenceFeatures);
    }
    let md = grad_descriptors(map_img, &mk)?;
    let qk = detect_keypoints_with(query, params)?;
    let qd = grad_descriptors(query, &qk)?;
    Ok(qk.into_iter().zip(nearest_distances(&qd, &md)).collect())
}

/// Keypoint scores splatted as filled disks (max-combined); pixels outside
/// every disk are 0.
pub fn splat(dims: (usize, usize), scores: &[(Keypoint, f64)], radius: usize) -> LocMap {
    let (w, h) = dims;
    let mut values = vec![0.0f64; w * h];
    let r = radius as i64;
    for (kp, s) in scores {
        let (cx, cy) = (i64::from(kp.x), i64::from(kp.y));
        for y in (cy - r).max(0)..=(cy + r).min(h as i64 - 1) {
            for x in (cx - r).max(0)..=(cx + r).min(w as i64 - 1) {
                if (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r {
                    let slot = &mut values[y as usize * w + x as usize];
                    *slot = slot.max(*s);
                }
            }
        }
    }
    LocMap::from_values(w, h, values)
}

pub fn pc_loc_map(query: &Image, map_img: &Image, params: &FeatureParams) -> Result<LocMap> {
    let scores = pc_scores(query, map_img, params)?;
    Ok(splat(query.dims(), &scores, DEFAULT_SPLAT_RADIUS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn textured(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = Image::filled(w, h, 90).unwrap();
        for _ in 0..w * h / 150 {
            let (rw, rh) = (rng.random_range(4..14), rng.random_range(4..14));
            let (x, y) = (rng.random_range(0..w - rw), rng.random_range(0..h - rh));
            let v: u8 = rng.random();
            for yy in y..y + rh {
                for xx in x..x + rw {
                    img.set(xx, yy, v);
                }
            }
        }
        img
    }

    fn kp(x: u32, y: u32) -> Keypoint {
        Keypoint { x, y, response: 1.0 }
    }

    #[test]
    fn flat_patch_is_zero() {
        let img = Image::filled(40, 40, 77).unwrap();
        let d = grad_descriptor(&img, &kp(20, 20)).unwrap();
        assert!(d.0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn descriptors_are_unit_and_deterministic() {
        let img = textured(80, 80, 1);
        let d1 = grad_descriptor(&img, &kp(40, 40)).unwrap();
        let d2 = grad_descriptor(&img, &kp(40, 40)).unwrap();
        assert_eq!(d1, d2);
        assert!((d1.norm() - 1.0).abs() < 1e-6);
        assert!(grad_descriptor(&img, &kp(8, 40)).is_err());
        assert!(grad_descriptor(&img, &kp(40, 72)).is_err());
        assert!(grad_descriptor(&img, &kp(9, 71)).is_ok());
    }

    #[test]
    fn octants_rotate_by_two() {
        for gx in -5..=5 {
            for gy in -5..=5 {
                let Some(o) = octant(gx, gy) else { continue };
                // (gx, gy) -> (gy, -gx) is a quarter turn
                assert_eq!(octant(gy, -gx), Some((o + 6) % 8));
            }
        }
        assert_eq!(octant(0, 0), None);
    }

    #[test]
    fn quarter_turn_permutes_bins() {
        let img = textured(60, 50, 3);
        let (w, h) = img.dims();
        // pixel (x, y) moves to (y, w-1-x)
        let rot = Image::from_fn(h, w, |u, v| img.get(w - 1 - v, u)).unwrap();
        for &(x, y) in &[(20u32, 20u32), (30, 25), (41, 33)] {
            let d = grad_descriptor(&img, &kp(x, y)).unwrap();
            let r = grad_descriptor(&rot, &kp(y, w as u32 - x)).unwrap();
            for cy in 0..4 {
                for cx in 0..4 {
                    for o in 0..8 {
                        let src = (cy * 4 + cx) * 8 + o;
                        let dst = ((3 - cx) * 4 + cy) * 8 + (o + 6) % 8;
                        assert!((d.0[src] - r.0[dst]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn nearest_distances_match_exhaustive_search() {
        let a = textured(120, 90, 4);
        let b = textured(120, 90, 5);
        let params = FeatureParams::default();
        let qa = grad_descriptors(&a, &detect_keypoints_with(&a, &params).unwrap()).unwrap();
        let qb = grad_descriptors(&b, &detect_keypoints_with(&b, &params).unwrap()).unwrap();
        let fast = nearest_distances(&qa, &qb);
        for (i, q) in qa.iter().enumerate() {
            let mut best = f64::INFINITY;
            for r in &qb {
                let mut s = 0.0;
                for k in 0..GRAD_DIMS {
                    s += (q.0[k] - r.0[k]).powi(2);
                }
                best = best.min(s.sqrt());
            }
            assert_eq!(fast[i], best);
        }
    }

    #[test]
    fn identical_pair_scores_zero() {
        let img = textured(100, 80, 6);
        let params = FeatureParams::default();
        let scores = pc_scores(&img, &img, &params).unwrap();
        assert!(!scores.is_empty());
        assert!(scores.iter().all(|(_, s)| *s == 0.0));
        assert!(pc_loc_map(&img, &img, &params).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn featureless_map_is_an_error() {
        let img = textured(100, 80, 7);
        let flat = Image::filled(100, 80, 10).unwrap();
        assert!(matches!(
            pc_loc_map(&img, &flat, &FeatureParams::default()),
            Err(Error::NoReferenceFeatures)
        ));
    }

    #[test]
    fn planted_rectangle_scores_higher() {
        let map = textured(160, 120, 8);
        let mut q = map.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (x0, y0, rw, rh) = (50, 40, 50, 40);
        for _ in 0..25 {
            let (bw, bh) = (rng.random_range(4..12), rng.random_range(4..12));
            let (x, y) = (x0 + rng.random_range(0..rw - bw), y0 + rng.random_range(0..rh - bh));
            let v: u8 = rng.random();
            for yy in y..y + bh {
                for xx in x..x + bw {
                    q.set(xx, yy, v);
                }
            }
        }
        let scores = pc_scores(&q, &map, &FeatureParams::default()).unwrap();
        let inside = |k: &Keypoint| (x0..x0 + rw).contains(&(k.x as usize)) && (y0..y0 + rh).contains(&(k.y as usize));
        let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
        let ins = mean(scores.iter().filter(|(k, _)| inside(k)).map(|(_, s)| *s).collect());
        let out = mean(scores.iter().filter(|(k, _)| !inside(k)).map(|(_, s)| *s).collect());
        assert!(ins > out, "{ins} <= {out}");
    }

    #[test]
    fn splat_is_max_combined_disks() {
        let scores = vec![(kp(10, 10), 2.0), (kp(14, 10), 5.0)];
        let m = splat((30, 20), &scores, 3);
        assert_eq!(m.get(10, 10), 2.0);
        assert_eq!(m.get(12, 10), 5.0);
        assert_eq!(m.get(10, 13), 2.0);
        assert_eq!(m.get(12, 13), 0.0);
        assert_eq!(m.get(25, 5), 0.0);
    }
}
