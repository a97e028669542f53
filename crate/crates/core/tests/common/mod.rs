//! Independent reference implementations and invariant suites over the
//! public API. Each check returns a short summary or a failure message.

#![allow(dead_code)]

use std::collections::BTreeMap;

use fdchange::anomaly::{normalize_re, re_map, train_place_model, AdParams};
use fdchange::eval::{fuse_channels, pool_cells, top_x_accuracy, Criterion};
use fdchange::fault::fuse_pixel_ranks;
use fdchange::features::{extract_bow, BowEntry, BowImage, Descriptor, FeatureParams, Keypoint, Vocabulary, WordId};
use fdchange::imaging::{cells_of, CellGrid, Image, Rect};
use fdchange::loc::LocMap;
use fdchange::localization::{strong_query, tfidf_image_scores, IndexBuilder, RankedList};
use fdchange::pairwise::{nearest_distances, GradDescriptor, GRAD_DIMS};
use fdchange::roi::{crop_bow, Roi, RoiSource};
use proptest::prelude::*;
use proptest::test_runner::{Config as PtConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

pub fn roi(rect: Rect, id: u32) -> Roi {
    Roi {
        rect,
        source: RoiSource::Template("T".into()),
        roi_id: id,
    }
}

pub fn random_rect(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Rect {
    let rw = rng.random_range(1..=w);
    let rh = rng.random_range(1..=h);
    Rect::new(rng.random_range(0..=w - rw), rng.random_range(0..=h - rh), rw, rh)
}

pub fn random_bow(rng: &mut ChaCha8Rng, id: u32, w: usize, h: usize, n: usize, vocab: u32) -> BowImage {
    let entries = (0..n)
        .map(|_| BowEntry {
            word: if rng.random_bool(0.9) { Some(WordId(rng.random_range(0..vocab))) } else { None },
            keypoint: Keypoint::new(rng.random_range(0..w as u32), rng.random_range(0..h as u32), 1.0),
            descriptor: Descriptor([rng.random(), rng.random(), rng.random(), rng.random()]),
        })
        .collect();
    BowImage::new(id, w, h, entries)
}

pub fn textured(w: usize, h: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = Image::filled(w, h, rng.random_range(60..180)).unwrap();
    for _ in 0..w * h / 120 {
        let (rw, rh) = (rng.random_range(3..12), rng.random_range(3..12));
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

fn word_counts(entries: &[BowEntry], rect: Option<&Rect>) -> BTreeMap<u32, f64> {
    let mut m = BTreeMap::new();
    for e in entries {
        let (x, y) = (e.keypoint.x as usize, e.keypoint.y as usize);
        let inside = rect.is_none_or(|r| x >= r.x && x < r.x + r.w && y >= r.y && y < r.y + r.h);
        if let (true, Some(w)) = (inside, e.word) {
            *m.entry(w.0).or_insert(0.0) += 1.0;
        }
    }
    m
}

/// Cosine of TF-IDF vectors against every sub-image, maximum per image,
/// computed from dense per-document counts.
fn brute_tfidf(images: &[(BowImage, Vec<Rect>)], query: &BowImage) -> BTreeMap<u32, f64> {
    let docs: Vec<(u32, BTreeMap<u32, f64>)> = images
        .iter()
        .flat_map(|(b, rects)| rects.iter().map(move |r| (b.image_id, word_counts(&b.entries, Some(r)))))
        .collect();
    let n = docs.len() as f64;
    let idf = |w: u32| {
        let df = docs.iter().filter(|(_, c)| c.contains_key(&w)).count();
        if df == 0 {
            0.0
        } else {
            (n / df as f64).ln()
        }
    };
    let weights = |c: &BTreeMap<u32, f64>| -> BTreeMap<u32, f64> {
        let len: f64 = c.values().sum();
        c.iter().map(|(&w, &k)| (w, k / len * idf(w))).collect()
    };
    let q = weights(&word_counts(&query.entries, None));
    let qn = q.values().map(|v| v * v).sum::<f64>().sqrt();
    let mut best = BTreeMap::new();
    if qn == 0.0 {
        return best;
    }
    for (image, c) in &docs {
        if c.is_empty() {
            continue;
        }
        let d = weights(c);
        let dn = d.values().map(|v| v * v).sum::<f64>().sqrt();
        if dn == 0.0 {
            continue;
        }
        let dot: f64 = q.iter().map(|(w, a)| a * d.get(w).copied().unwrap_or(0.0)).sum();
        let cos = dot / (qn * dn);
        if cos > 0.0 {
            let slot = best.entry(*image).or_insert(0.0);
            if cos > *slot {
                *slot = cos;
            }
        }
    }
    best
}

pub fn tfidf_oracle(instances: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut docs_total = 0;
    for inst in 0..instances {
        let vocab = rng.random_range(5..=200);
        let n_images = rng.random_range(1..=10);
        let mut builder = IndexBuilder::new();
        let mut images = Vec::new();
        let mut n_docs = 0;
        for id in 0..n_images as u32 {
            let n = rng.random_range(0..60);
            let b = random_bow(&mut rng, id, 80, 60, n, vocab);
            let max_rois = (50 - n_docs).min(5);
            if max_rois == 0 {
                break;
            }
            let rects: Vec<Rect> = (0..rng.random_range(1..=max_rois)).map(|_| random_rect(&mut rng, 80, 60)).collect();
            n_docs += rects.len();
            let rois: Vec<Roi> = rects.iter().enumerate().map(|(i, r)| roi(*r, i as u32)).collect();
            builder.add(id, &rois, &b).map_err(|e| e.to_string())?;
            images.push((b, rects));
        }
        docs_total += n_docs;
        let idx = builder.freeze();
        let n = rng.random_range(1..80);
        let query = random_bow(&mut rng, 999, 80, 60, n, vocab);
        let got = tfidf_image_scores(&idx, &query);
        let want = brute_tfidf(&images, &query);
        ensure(got.keys().eq(want.keys()), || format!("instance {inst}: image sets differ"))?;
        for (k, v) in &want {
            ensure(close(got[k], *v, 1e-9), || format!("instance {inst}: image {k} {} vs {v}", got[k]))?;
        }
        let a: Vec<u32> = RankedList::from_scores(got).ids().collect();
        let b: Vec<u32> = RankedList::from_scores(want).ids().collect();
        ensure(a == b, || format!("instance {inst}: ranking differs"))?;
    }
    Ok(format!("{instances} TF-IDF instances ({docs_total} documents)"))
}

pub fn harmonic_fusion_oracle(layouts: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for lay in 0..layouts {
        let (w, h) = (rng.random_range(5..60), rng.random_range(5..60));
        let n = rng.random_range(1..12);
        let rois: Vec<Roi> = (0..n).map(|i| roi(random_rect(&mut rng, w, h), i as u32)).collect();
        let ranks: Vec<f64> = (0..n).map(|_| rng.random_range(1..60) as f64).collect();
        let got = fuse_pixel_ranks(&rois, &ranks, (w, h)).map_err(|e| e.to_string())?;
        for y in 0..h {
            for x in 0..w {
                let mut count = 0.0;
                let mut inv = 0.0;
                for (r, k) in rois.iter().zip(&ranks) {
                    if r.rect.contains(x, y) {
                        count += 1.0;
                        inv += 1.0 / k;
                    }
                }
                let want = if count == 0.0 { 0.0 } else { count / inv };
                ensure(close(got.get(x, y), want, 1e-9), || format!("layout {lay}: pixel ({x},{y})"))?;
            }
        }
    }
    Ok(format!("{layouts} pixel-fusion layouts"))
}

fn random_lists(rng: &mut ChaCha8Rng) -> Vec<RankedList> {
    let universe = rng.random_range(1..30);
    (0..rng.random_range(1..8))
        .map(|_| {
            let mut ids: Vec<u32> = (0..universe as u32).collect();
            for i in (1..ids.len()).rev() {
                ids.swap(i, rng.random_range(0..=i));
            }
            ids.truncate(rng.random_range(0..=universe));
            RankedList::from_ids(&ids).with_universe(universe)
        })
        .collect()
}

pub fn strong_fusion_oracle(instances: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for inst in 0..instances {
        let lists = random_lists(&mut rng);
        let fused = strong_query(&lists).map_err(|e| e.to_string())?;
        let mut all: Vec<u32> = Vec::new();
        for l in &lists {
            for id in l.ids() {
                if !all.contains(&id) {
                    all.push(id);
                }
            }
        }
        ensure(fused.len() == all.len(), || format!("instance {inst}: length"))?;
        for id in all {
            let mut s = 0.0;
            for l in &lists {
                let pos = l.items().iter().position(|&(i, _)| i == id);
                let rank = match pos {
                    Some(p) => p + 1,
                    None => l.universe().unwrap().max(l.len()) + 1,
                };
                s += 1.0 / rank as f64;
            }
            let got = fused.items()[fused.rank_of(id).unwrap() - 1].1;
            ensure(close(got, s, 1e-9), || format!("instance {inst}: id {id} {got} vs {s}"))?;
        }
        ensure(fused.items().windows(2).all(|p| p[0].1 >= p[1].1), || format!("instance {inst}: unsorted"))?;
    }
    Ok(format!("{instances} strong fusions"))
}

pub fn pooling_oracle(instances: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for inst in 0..instances {
        let (w, h, cell) = (rng.random_range(1..70), rng.random_range(1..70), rng.random_range(1..15));
        let vals: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.0..10.0)).collect();
        let m = LocMap::from_values(w, h, vals.clone());
        let g = pool_cells(&m, cell).map_err(|e| e.to_string())?;
        for row in 0..h.div_ceil(cell) {
            for col in 0..w.div_ceil(cell) {
                let mut best = f64::NEG_INFINITY;
                for y in row * cell..((row + 1) * cell).min(h) {
                    for x in col * cell..((col + 1) * cell).min(w) {
                        best = best.max(vals[y * w + x]);
                    }
                }
                ensure(g.get(col, row) == best, || format!("instance {inst}: cell ({col},{row})"))?;
            }
        }
    }
    Ok(format!("{instances} poolings"))
}

pub fn nearest_neighbour_oracle(instances: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let desc = |rng: &mut ChaCha8Rng| {
        let mut a = [0.0; GRAD_DIMS];
        a.iter_mut().for_each(|v| *v = rng.random_range(0.0..1.0));
        GradDescriptor(a)
    };
    for inst in 0..instances {
        let q: Vec<GradDescriptor> = (0..rng.random_range(1..40)).map(|_| desc(&mut rng)).collect();
        let r: Vec<GradDescriptor> = (0..rng.random_range(1..40)).map(|_| desc(&mut rng)).collect();
        let got = nearest_distances(&q, &r);
        for (i, qd) in q.iter().enumerate() {
            let mut best = f64::INFINITY;
            for rd in &r {
                let s: f64 = (0..GRAD_DIMS).map(|k| (qd.0[k] - rd.0[k]).powi(2)).sum();
                best = best.min(s.sqrt());
            }
            ensure(close(got[i], best, 1e-9), || format!("instance {inst}: query {i}"))?;
        }
    }
    Ok(format!("{instances} nearest-neighbour searches"))
}

fn run_prop<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let mut runner = TestRunner::new_with_rng(
        PtConfig {
            cases,
            failure_persistence: None,
            ..PtConfig::default()
        },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

/// Cropping a real image's BoW keeps exactly the entries inside the ROI.
pub fn crop_filter_equivalence(cases: u32) -> Check {
    let params = FeatureParams::default();
    run_prop(cases, (any::<u64>(), any::<u64>()), |(img_seed, roi_seed)| {
        let img = textured(96, 72, img_seed);
        let mut voc = Vocabulary::new(64);
        let b = extract_bow(&img, 0, &mut voc, true, &params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(roi_seed);
        let r = roi(random_rect(&mut rng, 96, 72), 0);
        let crop = crop_bow(&b, &r);
        let want: Vec<BowEntry> = b.entries.iter().filter(|e| r.rect.contains(e.keypoint.x as usize, e.keypoint.y as usize)).copied().collect();
        prop_assert_eq!(&crop.entries, &want);
        prop_assert_eq!(crop.dims(), b.dims());
        prop_assert_eq!(crop_bow(&crop, &r), crop);
        Ok(())
    })?;
    Ok(format!("{cases} images/ROIs"))
}

fn layout() -> impl Strategy<Value = (Vec<Roi>, Vec<f64>)> {
    prop::collection::vec(((0usize..30, 0usize..30, 1usize..30, 1usize..30), 1.0f64..80.0), 1..10).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, ((x, y, w, h), r))| (roi(Rect::new(x, y, w.min(30 - x), h.min(30 - y)), i as u32), r))
            .unzip()
    })
}

pub fn harmonic_bounds_and_monotonicity(cases: u32) -> Check {
    run_prop(cases, (layout(), any::<prop::sample::Index>(), 0.0f64..40.0), |((rois, ranks), pick, bump)| {
        let m = fuse_pixel_ranks(&rois, &ranks, (30, 30)).unwrap();
        for y in 0..30 {
            for x in 0..30 {
                let cover: Vec<f64> = rois.iter().zip(&ranks).filter(|(r, _)| r.rect.contains(x, y)).map(|(_, k)| *k).collect();
                let v = m.get(x, y);
                if cover.is_empty() {
                    prop_assert_eq!(v, 0.0);
                } else {
                    let lo = cover.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = cover.iter().copied().fold(0.0, f64::max);
                    prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
                }
            }
        }
        let mut raised = ranks.clone();
        raised[pick.index(ranks.len())] += bump;
        let m2 = fuse_pixel_ranks(&rois, &raised, (30, 30)).unwrap();
        prop_assert!(m.values().iter().zip(m2.values()).all(|(a, b)| b >= &(a - 1e-12)));
        Ok(())
    })?;
    Ok(format!("{cases} layouts"))
}

pub fn strong_fusion_permutation(cases: u32) -> Check {
    run_prop(cases, (any::<u64>(), any::<u64>()), |(seed, perm)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lists = random_lists(&mut rng);
        let mut shuffled = lists.clone();
        let mut prng = ChaCha8Rng::seed_from_u64(perm);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, prng.random_range(0..=i));
        }
        prop_assert_eq!(strong_query(&lists).unwrap(), strong_query(&shuffled).unwrap());
        Ok(())
    })?;
    Ok(format!("{cases} permutations"))
}

fn grid(vals: &[f64]) -> CellGrid {
    cells_of((40, 30), 10).unwrap().with_values(vals.to_vec())
}

fn order(g: &CellGrid) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..g.len()).collect();
    idx.sort_by(|&a, &b| g.values()[b].total_cmp(&g.values()[a]).then(a.cmp(&b)));
    idx
}

pub fn rank_fusion_rescaling(cases: u32) -> Check {
    let s = (prop::collection::vec(0.0f64..10.0, 12), prop::collection::vec(0.0f64..10.0, 12), 0.1f64..5.0, -3.0f64..3.0);
    run_prop(cases, s, |(a, b, scale, shift)| {
        let fused = fuse_channels(&[grid(&a), grid(&b)]).unwrap();
        // strictly increasing transforms of one channel
        let a2: Vec<f64> = a.iter().map(|v| (v * scale + shift).exp()).collect();
        let fused2 = fuse_channels(&[grid(&a2), grid(&b)]).unwrap();
        prop_assert_eq!(order(&fused), order(&fused2));
        Ok(())
    })?;
    Ok(format!("{cases} rescalings"))
}

pub fn accuracy_monotone(cases: u32) -> Check {
    let boxes = prop::collection::vec((0usize..30, 0usize..20, 1usize..10, 1usize..10), 1..4);
    let s = (prop::collection::vec(0.0f64..10.0, 12), boxes, prop::collection::vec(1.0f64..=100.0, 2..6));
    run_prop(cases, s, |(vals, boxes, mut xs)| {
        let g = grid(&vals);
        let rects: Vec<Rect> = boxes.into_iter().map(|(x, y, w, h)| Rect::new(x, y, w, h)).collect();
        xs.sort_by(f64::total_cmp);
        let accs: Vec<f64> = xs
            .iter()
            .map(|&x| top_x_accuracy(&[(&g, &rects[..])], x, Criterion::Coverage).unwrap())
            .collect();
        prop_assert!(accs.windows(2).all(|p| p[0] <= p[1]));
        Ok(())
    })?;
    Ok(format!("{cases} X sweeps"))
}

fn noise_image(w: usize, h: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let px = (0..w * h).map(|_| rng.random()).collect();
    Image::new(w, h, px).unwrap()
}

pub fn ad_projection(cases: u32) -> Check {
    let params = AdParams {
        working_side: 8,
        ..AdParams::default()
    };
    run_prop(cases, (any::<u64>(), 2usize..7), |(seed, n)| {
        let imgs: Vec<Image> = (0..n as u64).map(|s| noise_image(8, 8, seed.wrapping_add(s))).collect();
        let full = train_place_model(0, &imgs, n - 1, &params).unwrap();
        for img in &imgs {
            prop_assert!(re_map(&full, img).values.iter().all(|&v| v <= 1e-6));
        }
        let partial = train_place_model(0, &imgs, (n - 1) / 2, &params).unwrap();
        let r = partial.reconstruct(&noise_image(8, 8, !seed).to_f64());
        let rr = partial.reconstruct(&r);
        prop_assert!(r.iter().zip(&rr).all(|(a, b)| (a - b).abs() <= 1e-6));
        Ok(())
    })?;
    Ok(format!("{cases} place models"))
}

pub fn normalize_re_arithmetic() -> Check {
    let mut m = train_place_model(0, &[noise_image(8, 8, 1)], 0, &AdParams::default()).map_err(|e| e.to_string())?;
    m.mu = 3.0;
    m.sigma = 2.0;
    m.c = 0.8;
    let v = normalize_re(5.0, &m).map_err(|e| e.to_string())?;
    ensure(v == 1.25, || format!("(5-3)/(2*0.8) gave {v}"))?;
    Ok("(5-3)/(2*0.8) = 1.25".into())
}

/// Every check of the oracle criterion, in order.
pub fn oracle_suite() -> Vec<(&'static str, Check)> {
    vec![
        ("tf-idf", tfidf_oracle(30)),
        ("pixel fusion", harmonic_fusion_oracle(20)),
        ("strong fusion", strong_fusion_oracle(50)),
        ("cell pooling", pooling_oracle(50)),
        ("nearest neighbour", nearest_neighbour_oracle(30)),
    ]
}

pub fn invariant_suite() -> Vec<(&'static str, Check)> {
    vec![
        ("crop filter", crop_filter_equivalence(100)),
        ("harmonic mean", harmonic_bounds_and_monotonicity(64)),
        ("fusion permutation", strong_fusion_permutation(64)),
        ("rank rescaling", rank_fusion_rescaling(64)),
        ("top-X monotone", accuracy_monotone(64)),
        ("AD projection", ad_projection(32)),
        ("normalize_re", normalize_re_arithmetic()),
    ]
}
