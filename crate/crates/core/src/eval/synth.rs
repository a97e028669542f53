//! Seeded desk-scale datasets: textured rectangle scenes as the map, and
//! queries made from perturbed map scenes with planted change rectangles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imaging::{Image, Rect};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub scenes: usize,
    pub queries: usize,
    pub changes_min: usize,
    pub changes_max: usize,
    /// Change area as a fraction of the frame.
    pub change_area_min: f64,
    pub change_area_max: f64,
    /// Uniform per-pixel noise amplitude.
    pub noise: u8,
    /// Maximum absolute global brightness shift.
    pub brightness: u8,
    /// Fraction of rows at the top rendered as featureless sky and masked.
    pub sky_fraction: f64,
    /// Class-agnostic random boxes written per query.
    pub proposals_min: usize,
    pub proposals_max: usize,
    /// Share of proposals anchored on visible objects.
    pub proposal_object_fraction: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            width: 160,
            height: 120,
            scenes: 50,
            queries: 30,
            changes_min: 1,
            changes_max: 3,
            change_area_min: 0.08,
            change_area_max: 0.20,
            noise: 5,
            brightness: 10,
            sky_fraction: 0.15,
            proposals_min: 42,
            proposals_max: 50,
            proposal_object_fraction: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthQuery {
    pub name: String,
    pub image: Image,
    /// Map scene the query was generated from.
    pub scene: u32,
    pub changes: Vec<Rect>,
    /// Non-interesting region mask (255 = ignore).
    pub mask: Image,
    pub proposals: Vec<Rect>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthDataset {
    pub map: Vec<Image>,
    pub queries: Vec<SynthQuery>,
}

impl SynthSpec {
    fn sky_rows(&self) -> usize {
        (self.height as f64 * self.sky_fraction).round() as usize
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InfeasibleSpec(m.to_string()));
        if self.width < 64 || self.height < 64 {
            return bad("image must be at least 64x64");
        }
        if self.scenes == 0 && self.queries > 0 {
            return bad("queries need at least one scene");
        }
        if self.changes_min > self.changes_max {
            return bad("changes_min exceeds changes_max");
        }
        if !(self.change_area_min > 0.0 && self.change_area_min <= self.change_area_max) {
            return bad("change area range is empty");
        }
        if !(0.0..0.5).contains(&self.sky_fraction) {
            return bad("sky_fraction must be in [0, 0.5)");
        }
        let ground = (self.height - self.sky_rows()) as f64 / self.height as f64;
        if self.change_area_max > ground || self.change_area_max >= 1.0 {
            return bad("change larger than image");
        }
        if self.proposals_min > self.proposals_max {
            return bad("proposals_min exceeds proposals_max");
        }
        if !(0.0..=1.0).contains(&self.proposal_object_fraction) {
            return bad("proposal_object_fraction must be in [0, 1]");
        }
        Ok(())
    }
}

const RESTARTS: usize = 1000;
const ATTEMPTS_PER_BOX: usize = 50;

fn clamp_u8(v: i32) -> u8 {
    v.clamp(0, 255) as u8
}

fn fill(img: &mut Image, r: &Rect, v: u8) {
    for y in r.y..r.bottom() {
        for x in r.x..r.right() {
            img.set(x, y, v);
        }
    }
}

/// Textured scene: smooth background, flat sky band, random rectangles.
fn scene(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> (Image, Vec<Rect>) {
    let (w, h) = (spec.width, spec.height);
    let sky = spec.sky_rows();
    let base = rng.random_range(80..160) as f64;
    let (fx, fy) = (rng.random_range(0.01..0.05), rng.random_range(0.01..0.05));
    let (px, py) = (rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.0..std::f64::consts::TAU));
    let sky_level = rng.random_range(190..230) as f64;
    let mut img = Image::from_fn(w, h, |x, y| {
        if y < sky {
            (sky_level - y as f64 * 0.5) as u8
        } else {
            let v = base + 25.0 * (x as f64 * fx + px).sin() + 25.0 * (y as f64 * fy + py).cos();
            clamp_u8(v as i32)
        }
    })
    .expect("valid dims");
    let ground = h - sky;
    let n_rects = w * ground / 220;
    let mut objects = Vec::with_capacity(n_rects);
    for _ in 0..n_rects {
        let rw = rng.random_range(5..26);
        let rh = rng.random_range(5..26);
        let x = rng.random_range(0..w - rw);
        let y = sky + rng.random_range(0..ground - rh.min(ground - 1));
        let r = Rect::new(x, y, rw, rh.min(h - y));
        fill(&mut img, &r, rng.random());
        objects.push(r);
    }
    (img, objects)
}

/// Texture painted over a planted change: its own base tone plus small
/// random blocks.
fn paint_change(img: &mut Image, r: &Rect, rng: &mut ChaCha8Rng) {
    fill(img, r, rng.random());
    let n = r.area() / 90 + 4;
    for _ in 0..n {
        let bw = rng.random_range(3..12).min(r.w);
        let bh = rng.random_range(3..12).min(r.h);
        let x = r.x + rng.random_range(0..=r.w - bw);
        let y = r.y + rng.random_range(0..=r.h - bh);
        fill(img, &Rect::new(x, y, bw, bh), rng.random());
    }
}

fn perturb(img: &Image, spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Image {
    let b = i32::from(spec.brightness);
    let shift = if b > 0 { rng.random_range(-b..=b) } else { 0 };
    let n = i32::from(spec.noise);
    let mut out = img.clone();
    for p in out.pixels_mut() {
        let noise = if n > 0 { rng.random_range(-n..=n) } else { 0 };
        *p = clamp_u8(i32::from(*p) + shift + noise);
    }
    out
}

fn plant_boxes(spec: &SynthSpec, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Rect>> {
    let (w, h) = (spec.width, spec.height);
    let sky = spec.sky_rows();
    let frame = (w * h) as f64;
    // restart the whole layout when a box does not fit next to earlier ones
    for _ in 0..RESTARTS {
        let mut out: Vec<Rect> = Vec::new();
        for _ in 0..count * ATTEMPTS_PER_BOX {
            if out.len() == count {
                break;
            }
            let area = rng.random_range(spec.change_area_min..=spec.change_area_max) * frame;
            let aspect: f64 = rng.random_range(0.6..1.6);
            let bw = ((area * aspect).sqrt().round() as usize).clamp(4, w);
            let bh = ((area / bw as f64).round() as usize).clamp(4, h - sky);
            let x = rng.random_range(0..=w - bw);
            let y = sky + rng.random_range(0..=h - sky - bh);
            let r = Rect::new(x, y, bw, bh);
            if out.iter().all(|o| o.intersection(&r).is_none()) {
                out.push(r);
            }
        }
        if out.len() == count {
            return Ok(out);
        }
    }
    Err(Error::InfeasibleSpec("could not place non-overlapping changes".into()))
}

fn random_box(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Rect {
    let (w, h) = (spec.width, spec.height);
    let bw = rng.random_range(w / 8..=w / 2);
    let bh = rng.random_range(h / 8..=h / 2);
    Rect::new(rng.random_range(0..=w - bw), rng.random_range(0..=h - bh), bw, bh)
}

/// Objectness-style proposals: a share of boxes hug visible objects (picked
/// with probability proportional to area, sides jittered by up to 20%), the
/// rest are random windows.
fn proposals(spec: &SynthSpec, objects: &[Rect], rng: &mut ChaCha8Rng) -> Vec<Rect> {
    let n = rng.random_range(spec.proposals_min..=spec.proposals_max);
    let total: usize = objects.iter().map(Rect::area).sum();
    let (w, h) = (spec.width as i64, spec.height as i64);
    (0..n)
        .map(|_| {
            if total == 0 || rng.random::<f64>() >= spec.proposal_object_fraction {
                return random_box(spec, rng);
            }
            let mut t = rng.random_range(0..total);
            let o = objects
                .iter()
                .find(|o| {
                    let hit = t < o.area();
                    t = t.saturating_sub(o.area());
                    hit
                })
                .expect("t < total");
            let jitter = |len: usize, rng: &mut ChaCha8Rng| {
                let j = (len as i64 / 5).max(1);
                rng.random_range(-j..=j)
            };
            let x0 = (o.x as i64 + jitter(o.w, rng)).clamp(0, w - 1);
            let y0 = (o.y as i64 + jitter(o.h, rng)).clamp(0, h - 1);
            let x1 = (o.right() as i64 + jitter(o.w, rng)).clamp(x0 + 1, w);
            let y1 = (o.bottom() as i64 + jitter(o.h, rng)).clamp(y0 + 1, h);
            Rect::new(x0 as usize, y0 as usize, (x1 - x0) as usize, (y1 - y0) as usize)
        })
        .collect()
}

/// Generate a dataset; identical output for identical `(spec, seed)`.
pub fn synth_dataset(spec: &SynthSpec, seed: u64) -> Result<SynthDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (map, scene_objects): (Vec<Image>, Vec<Vec<Rect>>) = (0..spec.scenes).map(|_| scene(spec, &mut rng)).unzip();
    let sky = spec.sky_rows();
    let mask = Image::from_fn(spec.width, spec.height, |_, y| if y < sky { 255 } else { 0 })?;
    let mut queries = Vec::with_capacity(spec.queries);
    for q in 0..spec.queries {
        let scene_id = rng.random_range(0..spec.scenes) as u32;
        let count = rng.random_range(spec.changes_min..=spec.changes_max);
        let changes = plant_boxes(spec, count, &mut rng)?;
        let mut img = map[scene_id as usize].clone();
        for r in &changes {
            paint_change(&mut img, r, &mut rng);
        }
        let image = perturb(&img, spec, &mut rng);
        // scene objects hidden under a planted change are no longer visible
        let visible: Vec<Rect> = scene_objects[scene_id as usize]
            .iter()
            .filter(|o| !changes.iter().any(|c| c.contains_rect(o)))
            .chain(&changes)
            .copied()
            .collect();
        let proposals = proposals(spec, &visible, &mut rng);
        queries.push(SynthQuery {
            name: format!("q{q:03}"),
            image,
            scene: scene_id,
            changes,
            mask: mask.clone(),
            proposals,
        });
    }
    Ok(SynthDataset { map, queries })
}
