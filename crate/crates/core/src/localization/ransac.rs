//! Similarity-transform RANSAC over point correspondences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Point = (f64, f64);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RansacParams {
    pub inlier_radius: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            inlier_radius: 5.0,
            iterations: 200,
            seed: 0x5eed,
        }
    }
}

/// `dst ≈ a·src + b` with `a`, `b` complex: rotation+scale and translation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Similarity {
    pub a: (f64, f64),
    pub b: (f64, f64),
}

impl Similarity {
    pub fn from_pairs(p1: (Point, Point), p2: (Point, Point)) -> Option<Self> {
        let ds = (p2.0 .0 - p1.0 .0, p2.0 .1 - p1.0 .1);
        let dd = (p2.1 .0 - p1.1 .0, p2.1 .1 - p1.1 .1);
        let den = ds.0 * ds.0 + ds.1 * ds.1;
        if den < 1e-12 {
            return None;
        }
        // a = dd / ds (complex division)
        let a = ((dd.0 * ds.0 + dd.1 * ds.1) / den, (dd.1 * ds.0 - dd.0 * ds.1) / den);
        let s = p1.0;
        let b = (p1.1 .0 - (a.0 * s.0 - a.1 * s.1), p1.1 .1 - (a.0 * s.1 + a.1 * s.0));
        Some(Self { a, b })
    }

    pub fn apply(&self, p: Point) -> Point {
        (
            self.a.0 * p.0 - self.a.1 * p.1 + self.b.0,
            self.a.0 * p.1 + self.a.1 * p.0 + self.b.1,
        )
    }
}

fn inliers(t: &Similarity, pairs: &[(Point, Point)], r2: f64) -> usize {
    pairs
        .iter()
        .filter(|(s, d)| {
            let p = t.apply(*s);
            let (dx, dy) = (p.0 - d.0, p.1 - d.1);
            dx * dx + dy * dy <= r2
        })
        .count()
}

/// Largest inlier count over similarity hypotheses. When all pairs of
/// correspondences fit in the iteration budget they are enumerated
/// exhaustively; otherwise minimal samples are drawn from a seeded RNG.
pub fn max_inliers(pairs: &[(Point, Point)], params: &RansacParams) -> usize {
    let n = pairs.len();
    if n < 2 {
        return n;
    }
    let r2 = params.inlier_radius * params.inlier_radius;
    let consider = |i: usize, j: usize| {
        Similarity::from_pairs(pairs[i], pairs[j]).map_or(1, |t| inliers(&t, pairs, r2))
    };
    let mut best = 1;
    if n * (n - 1) / 2 <= params.iterations {
        for i in 0..n {
            for j in i + 1..n {
                best = best.max(consider(i, j));
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        for _ in 0..params.iterations {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            best = best.max(consider(i, j));
            if best == n {
                break;
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_similarity() {
        let t = Similarity {
            a: (0.8, 0.3),
            b: (5.0, -2.0),
        };
        let pts: Vec<Point> = (0..30).map(|i| (f64::from(i * 7 % 50), f64::from(i * 13 % 40))).collect();
        let mut pairs: Vec<(Point, Point)> = pts.iter().map(|&p| (p, t.apply(p))).collect();
        for k in 0..10 {
            pairs[k].1 = (pairs[k].1 .0 + 40.0, pairs[k].1 .1 - 33.0);
        }
        let got = max_inliers(&pairs, &RansacParams::default());
        assert_eq!(got, 20);
    }

    #[test]
    fn fit_is_exact_on_its_sample() {
        let p1 = ((1.0, 2.0), (10.0, 4.0));
        let p2 = ((5.0, -1.0), (2.0, 9.0));
        let t = Similarity::from_pairs(p1, p2).unwrap();
        for (s, d) in [p1, p2] {
            let q = t.apply(s);
            assert!((q.0 - d.0).abs() < 1e-9 && (q.1 - d.1).abs() < 1e-9);
        }
        assert!(Similarity::from_pairs(p1, (p1.0, (0.0, 0.0))).is_none());
    }

    #[test]
    fn small_sets() {
        let p = RansacParams::default();
        assert_eq!(max_inliers(&[], &p), 0);
        assert_eq!(max_inliers(&[((0.0, 0.0), (3.0, 3.0))], &p), 1);
    }
}
