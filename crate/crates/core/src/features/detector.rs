use crate::error::{Error, Result};
use crate::imaging::Image;

use super::descriptor::PATCH_RADIUS;
use super::FeatureParams;

/// Smallest accepted image side.
pub const MIN_IMAGE_SIDE: usize = 16;

/// Keypoints are only reported this far from the border so that the
/// smoothed descriptor patch always fits.
pub const BORDER: usize = PATCH_RADIUS + 2;

const CIRCLE: [(i32, i32); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

const ARC: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keypoint {
    pub x: u32,
    pub y: u32,
    pub response: f32,
}

impl Keypoint {
    pub fn new(x: u32, y: u32, response: f32) -> Self {
        Self { x, y, response }
    }
}

/// FAST-9 corners with default parameters, capped at `max_n`.
pub fn detect_keypoints(img: &Image, max_n: usize) -> Result<Vec<Keypoint>> {
    detect_keypoints_with(
        img,
        &FeatureParams {
            max_keypoints: max_n,
            ..FeatureParams::default()
        },
    )
}

pub fn detect_keypoints_with(img: &Image, params: &FeatureParams) -> Result<Vec<Keypoint>> {
    let (w, h) = img.dims();
    if w < MIN_IMAGE_SIDE || h < MIN_IMAGE_SIDE {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min: MIN_IMAGE_SIDE,
        });
    }
    if w <= 2 * BORDER || h <= 2 * BORDER || params.max_keypoints == 0 {
        return Ok(Vec::new());
    }
    let t = i32::from(params.fast_threshold);
    let mut score = vec![0u32; w * h];
    for y in BORDER..h - BORDER {
        for x in BORDER..w - BORDER {
            score[y * w + x] = corner_response(img, x, y, t);
        }
    }

    let mut kps = Vec::new();
    for y in BORDER..h - BORDER {
        for x in BORDER..w - BORDER {
            let s = score[y * w + x];
            if s == 0 {
                continue;
            }
            let mut is_max = true;
            'nbr: for dy in -1i32..=1 {
                for dx in -1i32..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let n = score[(y as i32 + dy) as usize * w + (x as i32 + dx) as usize];
                    // plateaus keep their first pixel in raster order
                    let earlier = dy < 0 || (dy == 0 && dx < 0);
                    if n > s || (n == s && earlier) {
                        is_max = false;
                        break 'nbr;
                    }
                }
            }
            if is_max {
                kps.push(Keypoint::new(x as u32, y as u32, s as f32));
            }
        }
    }
    kps.sort_by(|a, b| {
        b.response
            .total_cmp(&a.response)
            .then(a.y.cmp(&b.y))
            .then(a.x.cmp(&b.x))
    });
    kps.truncate(params.max_keypoints);
    Ok(kps)
}

/// Sum of absolute differences over the passing circle pixels, or 0 when
/// no run of 9 contiguous pixels is uniformly brighter or darker by `t`.
fn corner_response(img: &Image, x: usize, y: usize, t: i32) -> u32 {
    let c = i32::from(img.get(x, y));
    let mut diffs = [0i32; 16];
    for (d, &(dx, dy)) in diffs.iter_mut().zip(CIRCLE.iter()) {
        *d = i32::from(img.get((x as i32 + dx) as usize, (y as i32 + dy) as usize)) - c;
    }
    for sign in [1i32, -1] {
        let pass = diffs.map(|d| sign * d > t);
        if has_arc(&pass) {
            return pass
                .iter()
                .zip(diffs.iter())
                .filter(|(p, _)| **p)
                .map(|(_, d)| d.unsigned_abs())
                .sum();
        }
    }
    0
}

fn has_arc(pass: &[bool; 16]) -> bool {
    let mut run = 0;
    for i in 0..32 {
        if pass[i % 16] {
            run += 1;
            if run >= ARC {
                return true;
            }
        } else {
            run = 0;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_image() -> Image {
        Image::from_fn(64, 64, |x, y| {
            if (22..42).contains(&x) && (22..42).contains(&y) {
                255
            } else {
                0
            }
        })
        .unwrap()
    }

    /// Direct segment test: brightness of all 16 circle pixels, any 9-run.
    fn brute_is_corner(img: &Image, x: usize, y: usize, t: i32) -> bool {
        let c = i32::from(img.get(x, y));
        let vals: Vec<i32> = CIRCLE
            .iter()
            .map(|&(dx, dy)| i32::from(img.get((x as i32 + dx) as usize, (y as i32 + dy) as usize)))
            .collect();
        (0..16).any(|start| {
            (0..9).all(|k| vals[(start + k) % 16] > c + t) || (0..9).all(|k| vals[(start + k) % 16] < c - t)
        })
    }

    #[test]
    fn constant_image_has_no_keypoints() {
        let img = Image::filled(64, 64, 128).unwrap();
        assert!(detect_keypoints(&img, 100).unwrap().is_empty());
    }

    #[test]
    fn square_corners_are_top_responses() {
        let img = square_image();
        // Brute force: corner pixels are exactly the 4 inner square corners
        // plus edge-adjacent pixels near them.
        let mut brute = Vec::new();
        for y in 3..61 {
            for x in 3..61 {
                if brute_is_corner(&img, x, y, 20) {
                    brute.push((x, y));
                }
            }
        }
        for c in [(22, 22), (41, 22), (22, 41), (41, 41)] {
            assert!(brute.contains(&c), "brute force misses {c:?}");
        }
        let kps = detect_keypoints(&img, 4).unwrap();
        let mut got: Vec<(u32, u32)> = kps.iter().map(|k| (k.x, k.y)).collect();
        got.sort();
        assert_eq!(got, vec![(22, 22), (22, 41), (41, 22), (41, 41)]);
        for k in &kps {
            assert!(brute.contains(&(k.x as usize, k.y as usize)));
        }
    }

    #[test]
    fn cap_is_respected_and_order_descends() {
        let img = Image::from_fn(96, 96, |x, y| if x % 16 < 7 && y % 16 < 7 { 220 } else { 20 }).unwrap();
        let all = detect_keypoints(&img, 1000).unwrap();
        assert!(all.len() > 5);
        assert!(all.windows(2).all(|w| w[0].response >= w[1].response));
        assert_eq!(detect_keypoints(&img, 5).unwrap().len(), 5);
    }

    #[test]
    fn too_small_is_error() {
        let img = Image::filled(15, 40, 0).unwrap();
        assert!(matches!(detect_keypoints(&img, 10), Err(Error::ImageTooSmall { .. })));
    }

    #[test]
    fn deterministic() {
        let img = square_image();
        assert_eq!(detect_keypoints(&img, 50).unwrap(), detect_keypoints(&img, 50).unwrap());
    }
}
