//! Anomaly-detection channel: map images are clustered into places, each
//! place gets a linear principal-subspace reconstructor, and query pixels
//! are scored by their normalized reconstruction error.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imaging::{resample_bilinear, Image, Rect};
use crate::loc::LocMap;
use crate::par;

const MAGIC: &[u8; 5] = b"CSPM1";

/// Side of the intensity vectors used for clustering.
pub const CLUSTER_SIDE: usize = 32;
const MAX_ITERATIONS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdParams {
    /// Side of the square working resolution of place models.
    pub working_side: usize,
    /// Normalizer coefficient.
    pub c: f64,
    /// Lower bound applied to the fitted RE standard deviation.
    pub sigma_floor: f64,
}

impl Default for AdParams {
    fn default() -> Self {
        Self {
            working_side: 64,
            c: 0.8,
            sigma_floor: 1.0,
        }
    }
}

fn downscaled(img: &Image, side: usize) -> Vec<f64> {
    resample_bilinear(&img.to_f64(), img.width(), img.height(), side, side)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_centroid(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.iter().enumerate() {
        let d = sq_dist(p, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Result of partitioning the map into places.
#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    /// Place of each input image, in input order.
    pub assignments: Vec<usize>,
    /// Centroids in the 32×32 clustering space.
    pub centroids: Vec<Vec<f64>>,
}

/// Seeded k-means++ over 32×32 downscaled intensities. Every cluster ends
/// up non-empty.
pub fn cluster_places(images: &[Image], k: usize, seed: u64) -> Result<Clustering> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if k > images.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {} map images",
            images.len()
        )));
    }
    let points: Vec<Vec<f64>> = par::map(images, |img| downscaled(img, CLUSTER_SIDE));
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    while centroids.len() < k {
        let d: Vec<f64> = points.iter().map(|p| nearest_centroid(p, &centroids).1).collect();
        let total: f64 = d.iter().sum();
        let pick = if total <= 0.0 {
            // all points coincide with centroids: take the first unused one
            (0..n).find(|&i| !centroids.contains(&points[i])).unwrap_or(0)
        } else {
            let mut t = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, di) in d.iter().enumerate() {
                if t < *di {
                    pick = i;
                    break;
                }
                t -= di;
            }
            pick
        };
        centroids.push(points[pick].clone());
    }

    let mut assignments = vec![usize::MAX; n];
    for _ in 0..MAX_ITERATIONS {
        let next: Vec<usize> = points.iter().map(|p| nearest_centroid(p, &centroids).0).collect();
        let mut next = next;
        // re-seed empty clusters from the point farthest from its centroid
        loop {
            let mut sizes = vec![0usize; k];
            for &a in &next {
                sizes[a] += 1;
            }
            let Some(empty) = sizes.iter().position(|&s| s == 0) else {
                break;
            };
            let far = (0..n)
                .filter(|&i| sizes[next[i]] > 1)
                .max_by(|&a, &b| {
                    sq_dist(&points[a], &centroids[next[a]])
                        .total_cmp(&sq_dist(&points[b], &centroids[next[b]]))
                        .then(b.cmp(&a))
                })
                .expect("k <= n leaves a cluster with two members");
            next[far] = empty;
            centroids[empty] = points[far].clone();
        }
        let converged = next == assignments;
        assignments = next;
        for (c, cen) in centroids.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&assignments).filter(|(_, &a)| a == c).map(|(p, _)| p).collect();
            for (j, v) in cen.iter_mut().enumerate() {
                *v = members.iter().map(|m| m[j]).sum::<f64>() / members.len() as f64;
            }
        }
        if converged {
            break;
        }
    }
    Ok(Clustering { assignments, centroids })
}

/// Linear normal model of one place.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaceModel {
    pub place_id: u32,
    pub centroid: Vec<f64>,
    pub width: usize,
    pub height: usize,
    pub mean: Vec<f64>,
    /// Orthonormal principal components, each of length `width * height`.
    pub basis: Vec<Vec<f64>>,
    pub mu: f64,
    pub sigma: f64,
    pub c: f64,
}

/// Per-pixel reconstruction error at working resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ReMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl ReMap {
    /// Summed error over a region (clipped to the map).
    pub fn region_sum(&self, r: &Rect) -> f64 {
        let (x1, y1) = (r.right().min(self.width), r.bottom().min(self.height));
        let mut s = 0.0;
        for y in r.y.min(y1)..y1 {
            for x in r.x.min(x1)..x1 {
                s += self.values[y * self.width + x];
            }
        }
        s
    }
}

impl PlaceModel {
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn components(&self) -> usize {
        self.basis.len()
    }

    /// `mean + B Bᵀ (v − mean)`
    pub fn reconstruct(&self, v: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = v.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        let mut out = self.mean.clone();
        for b in &self.basis {
            let coef: f64 = b.iter().zip(&centered).map(|(x, y)| x * y).sum();
            for (o, bj) in out.iter_mut().zip(b) {
                *o += coef * bj;
            }
        }
        out
    }

    /// Reconstruction error of a vector already at working resolution.
    pub fn re_values(&self, v: &[f64]) -> Vec<f64> {
        self.reconstruct(v).iter().zip(v).map(|(r, a)| (a - r).abs()).collect()
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        for v in [self.place_id, self.width as u32, self.height as u32, self.basis.len() as u32, self.centroid.len() as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        let floats = self.centroid.iter().chain(&self.mean).chain(self.basis.iter().flatten());
        for &v in floats {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        for v in [self.mu, self.sigma, self.c] {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a place model file".into()));
        }
        let mut u32s = [0u32; 5];
        for v in &mut u32s {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *v = u32::from_le_bytes(b);
        }
        let [place_id, width, height, d, clen] = u32s;
        let (width, height) = (width as usize, height as usize);
        let mut read_f32s = |n: usize| -> Result<Vec<f64>> {
            let mut buf = vec![0u8; n * 4];
            r.read_exact(&mut buf)?;
            Ok(buf.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]))).collect())
        };
        let centroid = read_f32s(clen as usize)?;
        let mean = read_f32s(width * height)?;
        let basis = (0..d).map(|_| read_f32s(width * height)).collect::<Result<Vec<_>>>()?;
        let mut f64s = [0f64; 3];
        for v in &mut f64s {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *v = f64::from_le_bytes(b);
        }
        let [mu, sigma, c] = f64s;
        Ok(Self {
            place_id,
            centroid,
            width,
            height,
            mean,
            basis,
            mu,
            sigma,
            c,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Fit mean and top-`d` principal components of the cluster at working
/// resolution. Components with vanishing variance are dropped, so the basis
/// may be shorter than `d`. `mu`/`sigma` come from the per-pixel REs of the
/// training images themselves.
pub fn train_place_model(place_id: u32, images: &[Image], d: usize, params: &AdParams) -> Result<PlaceModel> {
    if images.is_empty() {
        return Err(Error::EmptyInput("place has no images"));
    }
    let side = params.working_side;
    if side == 0 {
        return Err(Error::InvalidArgument("working resolution must be positive".into()));
    }
    let p = side * side;
    if d > images.len().min(p) {
        return Err(Error::InvalidArgument(format!(
            "{d} components requested from {} images",
            images.len()
        )));
    }
    let vectors: Vec<Vec<f64>> = images.iter().map(|img| downscaled(img, side)).collect();
    let centroid = {
        let small: Vec<Vec<f64>> = images.iter().map(|img| downscaled(img, CLUSTER_SIDE)).collect();
        (0..CLUSTER_SIDE * CLUSTER_SIDE)
            .map(|j| small.iter().map(|v| v[j]).sum::<f64>() / small.len() as f64)
            .collect()
    };
    let n = vectors.len();
    let mean: Vec<f64> = (0..p).map(|j| vectors.iter().map(|v| v[j]).sum::<f64>() / n as f64).collect();
    let centered = DMatrix::from_fn(n, p, |i, j| vectors[i][j] - mean[j]);
    let basis = principal_components(&centered, d);

    let mut model = PlaceModel {
        place_id,
        centroid,
        width: side,
        height: side,
        mean,
        basis,
        mu: 0.0,
        sigma: 0.0,
        c: params.c,
    };
    let res: Vec<f64> = vectors.iter().flat_map(|v| model.re_values(v)).collect();
    let mu = res.iter().sum::<f64>() / res.len() as f64;
    let var = res.iter().map(|r| (r - mu) * (r - mu)).sum::<f64>() / res.len() as f64;
    model.mu = mu;
    model.sigma = var.sqrt().max(params.sigma_floor);
    Ok(model)
}

/// Top-`d` right singular vectors of the row-centered `n × p` matrix via
/// the `n × n` Gram matrix.
fn principal_components(x: &DMatrix<f64>, d: usize) -> Vec<Vec<f64>> {
    if d == 0 {
        return Vec::new();
    }
    let gram = x * x.transpose();
    let trace = gram.trace();
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let tol = 1e-10 * trace.max(1.0);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for &i in order.iter().take(d) {
        let lambda = eig.eigenvalues[i];
        if lambda <= tol {
            break;
        }
        let u = eig.eigenvectors.column(i);
        let mut v: Vec<f64> = (x.transpose() * u).iter().map(|a| a / lambda.sqrt()).collect();
        // re-orthogonalize against earlier components
        for b in &basis {
            let dot: f64 = b.iter().zip(&v).map(|(a, c)| a * c).sum();
            for (vj, bj) in v.iter_mut().zip(b) {
                *vj -= dot * bj;
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm <= 1e-12 {
            continue;
        }
        v.iter_mut().for_each(|a| *a /= norm);
        // deterministic sign: largest-magnitude entry positive
        let (_, &pivot) = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .expect("non-empty");
        if pivot < 0.0 {
            v.iter_mut().for_each(|a| *a = -*a);
        }
        basis.push(v);
    }
    basis
}

/// Per-pixel RE of a query resampled to the model's working resolution.
pub fn re_map(model: &PlaceModel, query: &Image) -> ReMap {
    let v = resample_bilinear(&query.to_f64(), query.width(), query.height(), model.width, model.height);
    ReMap {
        width: model.width,
        height: model.height,
        values: model.re_values(&v),
    }
}

/// `(v − μ) / (σ·c)`
pub fn normalize_re(v: f64, model: &PlaceModel) -> Result<f64> {
    if model.sigma <= 0.0 || model.c <= 0.0 {
        return Err(Error::DegeneratePlace);
    }
    Ok((v - model.mu) / (model.sigma * model.c))
}

/// Trained models plus the place of every map image.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlaceModels {
    pub models: Vec<PlaceModel>,
    /// Map image id → index into `models`.
    pub assignments: BTreeMap<u32, usize>,
}

impl PlaceModels {
    pub fn model_for(&self, map_image_id: u32) -> Result<&PlaceModel> {
        self.assignments
            .get(&map_image_id)
            .and_then(|&p| self.models.get(p))
            .ok_or(Error::UnknownMapImage(map_image_id))
    }
}

/// Cluster the map and train one model per place.
pub fn train_places(map: &[(u32, Image)], k: usize, d: usize, seed: u64, params: &AdParams) -> Result<PlaceModels> {
    let images: Vec<Image> = map.iter().map(|(_, img)| img.clone()).collect();
    let clustering = cluster_places(&images, k, seed)?;
    let places: Vec<usize> = (0..k).collect();
    let models = par::map(&places, |&place| {
        let members: Vec<Image> = images
            .iter()
            .zip(&clustering.assignments)
            .filter(|(_, &a)| a == place)
            .map(|(img, _)| img.clone())
            .collect();
        train_place_model(place as u32, &members, d.min(members.len()), params)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let assignments = map.iter().zip(&clustering.assignments).map(|((id, _), &a)| (*id, a)).collect();
    Ok(PlaceModels { models, assignments })
}

/// Normalized RE of the linked place model, clamped at 0 and upsampled to
/// the query resolution.
pub fn ad_loc_map(models: &PlaceModels, query: &Image, map_image_id: u32) -> Result<LocMap> {
    let model = models.model_for(map_image_id)?;
    let re = re_map(model, query);
    let z: Vec<f64> = re
        .values
        .iter()
        .map(|&v| normalize_re(v, model).map(|z| z.max(0.0)))
        .collect::<Result<_>>()?;
    let (w, h) = query.dims();
    let up = resample_bilinear(&z, re.width, re.height, w, h);
    Ok(LocMap::from_values(w, h, up.into_iter().map(|v| v.max(0.0)).collect()))
}
