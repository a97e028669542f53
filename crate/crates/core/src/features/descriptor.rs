use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imaging::Image;

use super::Keypoint;

pub const DESCRIPTOR_BITS: usize = 256;

/// Half-size of the 31×31 sampling patch.
pub const PATCH_RADIUS: usize = 15;

const SMOOTH_RADIUS: usize = 2;
const PATTERN_SEED: u64 = 0x0b1e_f5ee_d000_0256;

/// 256-bit binary descriptor compared by Hamming distance.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Descriptor(pub [u64; 4]);

impl std::fmt::Debug for Descriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Descriptor(")?;
        for w in self.0 {
            write!(f, "{w:016x}")?;
        }
        write!(f, ")")
    }
}

impl Descriptor {
    #[inline]
    pub fn hamming(&self, other: &Descriptor) -> u32 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }

    #[inline]
    pub fn bit(&self, k: usize) -> bool {
        self.0[k / 64] >> (k % 64) & 1 == 1
    }

    #[inline]
    pub fn set_bit(&mut self, k: usize) {
        self.0[k / 64] |= 1 << (k % 64);
    }

    pub fn flip_bit(&mut self, k: usize) {
        self.0[k / 64] ^= 1 << (k % 64);
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        for (i, w) in self.0.iter().enumerate() {
            out[i * 8..i * 8 + 8].copy_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8; 32]) -> Self {
        let mut words = [0u64; 4];
        for (i, w) in words.iter_mut().enumerate() {
            *w = u64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().unwrap());
        }
        Descriptor(words)
    }
}

type Pair = ((i32, i32), (i32, i32));

/// Fixed pseudo-random comparison pairs inside the patch.
pub(crate) fn pattern() -> &'static [Pair; DESCRIPTOR_BITS] {
    static PATTERN: OnceLock<[Pair; DESCRIPTOR_BITS]> = OnceLock::new();
    PATTERN.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(PATTERN_SEED);
        let r = PATCH_RADIUS as i32;
        let mut out = [((0, 0), (0, 0)); DESCRIPTOR_BITS];
        for pair in out.iter_mut() {
            loop {
                let p = (rng.random_range(-r..=r), rng.random_range(-r..=r));
                let q = (rng.random_range(-r..=r), rng.random_range(-r..=r));
                if p != q {
                    *pair = (p, q);
                    break;
                }
            }
        }
        out
    })
}

fn check_fits(img: &Image, kp: &Keypoint) -> Result<()> {
    let m = PATCH_RADIUS + SMOOTH_RADIUS;
    let (x, y) = (kp.x as usize, kp.y as usize);
    if x < m || y < m || x + m >= img.width() || y + m >= img.height() {
        return Err(Error::PatchOutOfBounds { x, y });
    }
    Ok(())
}

fn box_sum(img: &Image, x: i32, y: i32) -> u32 {
    let r = SMOOTH_RADIUS as i32;
    let mut s = 0u32;
    for yy in y - r..=y + r {
        for xx in x - r..=x + r {
            s += u32::from(img.get(xx as usize, yy as usize));
        }
    }
    s
}

/// BRIEF-style descriptor: bit k is set when the 5×5-smoothed intensity at
/// the first point of pair k is below that at the second point.
pub fn compute_descriptor(img: &Image, kp: &Keypoint) -> Result<Descriptor> {
    check_fits(img, kp)?;
    let (cx, cy) = (kp.x as i32, kp.y as i32);
    let mut d = Descriptor::default();
    for (k, &((px, py), (qx, qy))) in pattern().iter().enumerate() {
        if box_sum(img, cx + px, cy + py) < box_sum(img, cx + qx, cy + qy) {
            d.set_bit(k);
        }
    }
    Ok(d)
}

/// Integral image for fast 5×5 box sums.
struct Integral {
    stride: usize,
    sums: Vec<u32>,
}

impl Integral {
    fn new(img: &Image) -> Self {
        let (w, h) = img.dims();
        let stride = w + 1;
        let mut sums = vec![0u32; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0u32;
            for x in 0..w {
                row += u32::from(img.get(x, y));
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self { stride, sums }
    }

    #[inline]
    fn box_sum(&self, x: i32, y: i32) -> u32 {
        let r = SMOOTH_RADIUS as i32;
        let (x0, y0) = ((x - r) as usize, (y - r) as usize);
        let (x1, y1) = ((x + r + 1) as usize, (y + r + 1) as usize);
        let s = self.stride;
        self.sums[y1 * s + x1] + self.sums[y0 * s + x0] - self.sums[y0 * s + x1] - self.sums[y1 * s + x0]
    }
}

/// Descriptors for many keypoints of one image; equal to calling
/// [`compute_descriptor`] per keypoint.
pub fn describe_all(img: &Image, kps: &[Keypoint]) -> Result<Vec<Descriptor>> {
    let integral = Integral::new(img);
    kps.iter()
        .map(|kp| {
            check_fits(img, kp)?;
            let (cx, cy) = (kp.x as i32, kp.y as i32);
            let mut d = Descriptor::default();
            for (k, &((px, py), (qx, qy))) in pattern().iter().enumerate() {
                if integral.box_sum(cx + px, cy + py) < integral.box_sum(cx + qx, cy + qy) {
                    d.set_bit(k);
                }
            }
            Ok(d)
        })
        .collect()
}
