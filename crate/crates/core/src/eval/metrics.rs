use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::imaging::{cells_of, intersect, CellGrid, Image, Rect};
use crate::localization::canonical_sum;
use crate::loc::LocMap;

/// X thresholds of the standard report, in percent of cells.
pub const STANDARD_X: [f64; 4] = [5.0, 10.0, 15.0, 20.0];

/// Annotated change objects of one query.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GroundTruth {
    pub query_id: String,
    pub change_boxes: Vec<Rect>,
}

/// Parse `query_id x y w h` lines, grouped by query in first-seen order.
pub fn parse_ground_truth(text: &str) -> Result<Vec<GroundTruth>> {
    let mut order: Vec<String> = Vec::new();
    let mut boxes: BTreeMap<String, Vec<Rect>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::Format(format!("ground truth line {}: expected `query_id x y w h`", i + 1));
        if f.len() != 5 {
            return Err(bad());
        }
        let n: Vec<usize> = f[1..].iter().map(|s| s.parse::<usize>()).collect::<Result<_, _>>().map_err(|_| bad())?;
        if n[2] == 0 || n[3] == 0 {
            return Err(bad());
        }
        if !boxes.contains_key(f[0]) {
            order.push(f[0].to_string());
        }
        boxes.entry(f[0].to_string()).or_default().push(Rect::new(n[0], n[1], n[2], n[3]));
    }
    Ok(order
        .into_iter()
        .map(|q| GroundTruth {
            change_boxes: boxes.remove(&q).unwrap_or_default(),
            query_id: q,
        })
        .collect())
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruth>> {
    parse_ground_truth(&std::fs::read_to_string(path)?)
}

pub fn format_ground_truth(gts: &[GroundTruth]) -> String {
    let mut s = String::new();
    for gt in gts {
        for r in &gt.change_boxes {
            s.push_str(&format!("{} {} {} {} {}\n", gt.query_id, r.x, r.y, r.w, r.h));
        }
    }
    s
}

/// Max-pool a LoC map into square cells.
pub fn pool_cells(loc: &LocMap, cell_size: usize) -> Result<CellGrid> {
    let mut grid = cells_of(loc.dims(), cell_size)?;
    let cols = grid.cols();
    for y in 0..loc.height() {
        let row = y / cell_size;
        for x in 0..loc.width() {
            let c = row * cols + x / cell_size;
            let v = loc.get(x, y);
            let slot = &mut grid.values_mut()[c];
            if v > *slot {
                *slot = v;
            }
        }
    }
    Ok(grid)
}

/// Things that can have non-interesting regions zeroed by a mask image
/// (mask pixel > 0 means ignore).
pub trait Maskable: Sized {
    fn apply_mask(&self, mask: &Image) -> Result<Self>;
}

impl Maskable for LocMap {
    fn apply_mask(&self, mask: &Image) -> Result<Self> {
        if mask.dims() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                got: mask.dims(),
            });
        }
        let values = self
            .values()
            .iter()
            .zip(mask.pixels())
            .map(|(&v, &m)| if m > 0 { 0.0 } else { v })
            .collect();
        Ok(LocMap::from_values(self.width(), self.height(), values))
    }
}

impl Maskable for CellGrid {
    /// The mask is given per cell (`cols × rows`).
    fn apply_mask(&self, mask: &Image) -> Result<Self> {
        if mask.dims() != (self.cols(), self.rows()) {
            return Err(Error::DimensionMismatch {
                expected: (self.cols(), self.rows()),
                got: mask.dims(),
            });
        }
        let values = self
            .values()
            .iter()
            .zip(mask.pixels())
            .map(|(&v, &m)| if m > 0 { 0.0 } else { v })
            .collect();
        Ok(self.with_values(values))
    }
}

pub fn apply_mask<T: Maskable>(target: &T, mask: &Image) -> Result<T> {
    target.apply_mask(mask)
}

/// Cell indices ordered most-changed first; ties by row-major index.
pub fn cell_order(grid: &CellGrid) -> Vec<usize> {
    let v = grid.values();
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    idx
}

/// Reciprocal-rank fusion of channels: each cell scores `Σ 1/rank` over
/// channels, rank 1 being the most changed cell of that channel.
pub fn fuse_channels(grids: &[CellGrid]) -> Result<CellGrid> {
    let first = grids.first().ok_or(Error::EmptyInput("no channels to fuse"))?;
    for g in &grids[1..] {
        if !g.same_shape(first) {
            return Err(Error::DimensionMismatch {
                expected: (first.cols(), first.rows()),
                got: (g.cols(), g.rows()),
            });
        }
    }
    let ranks: Vec<Vec<usize>> = grids
        .iter()
        .map(|g| {
            let mut rank = vec![0usize; g.len()];
            for (r, i) in cell_order(g).into_iter().enumerate() {
                rank[i] = r + 1;
            }
            rank
        })
        .collect();
    let fused = (0..first.len())
        .map(|c| canonical_sum(ranks.iter().map(|r| 1.0 / r[c] as f64)))
        .collect();
    Ok(first.with_values(fused))
}

/// How selected cells must cover a ground-truth box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize)]
pub enum Criterion {
    /// `|cells ∩ box| / |box| ≥ 0.5`
    #[default]
    Coverage,
    /// `|cells ∩ box| / |cells ∪ box| ≥ 0.5`
    Iou,
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coverage" => Ok(Criterion::Coverage),
            "iou" => Ok(Criterion::Iou),
            other => Err(Error::Config(format!("unknown criterion {other:?}"))),
        }
    }
}

fn selection_size(n_cells: usize, x: f64) -> usize {
    ((x / 100.0 * n_cells as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Detection flag per box for the top-`x` percent of cells.
pub fn detected_boxes(grid: &CellGrid, boxes: &[Rect], x: f64, criterion: Criterion) -> Vec<bool> {
    let selected: Vec<Rect> = cell_order(grid)
        .into_iter()
        .take(selection_size(grid.len(), x))
        .map(|i| grid.cell_rect(i))
        .collect();
    let sel_area: usize = selected.iter().map(Rect::area).sum();
    boxes
        .iter()
        .map(|b| {
            let inter: usize = selected.iter().map(|c| intersect(c, b)).sum();
            match criterion {
                Criterion::Coverage => 2 * inter >= b.area(),
                Criterion::Iou => 2 * inter >= sel_area + b.area() - inter,
            }
        })
        .collect()
}

fn check_x(x: f64) -> Result<()> {
    if x > 0.0 && x <= 100.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("X must be in (0, 100], got {x}")))
    }
}

/// Percentage of ground-truth objects detected by the top-`x` percent of
/// each query's cells.
pub fn top_x_accuracy(items: &[(&CellGrid, &[Rect])], x: f64, criterion: Criterion) -> Result<f64> {
    check_x(x)?;
    let total: usize = items.iter().map(|(_, b)| b.len()).sum();
    if total == 0 {
        return Err(Error::NoGroundTruth);
    }
    let hits: usize = items
        .iter()
        .map(|(g, b)| detected_boxes(g, b, x, criterion).into_iter().filter(|d| *d).count())
        .sum();
    Ok(hits as f64 / total as f64 * 100.0)
}

/// Smallest X among `buckets` at which at least half of the query's
/// objects are detected; `None` when no bucket suffices.
pub fn query_grade(grid: &CellGrid, boxes: &[Rect], buckets: &[f64], criterion: Criterion) -> Option<f64> {
    if boxes.is_empty() {
        return None;
    }
    buckets.iter().copied().find(|&x| {
        let hits = detected_boxes(grid, boxes, x, criterion).into_iter().filter(|d| *d).count();
        2 * hits >= boxes.len()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LeaderStat {
    /// Fraction of queries where the method alone has the best grade.
    pub solo: f64,
    /// Fraction of queries where the method shares the best grade.
    pub co: f64,
}

/// `grades[q][m]` is method `m`'s grade on query `q` (lower X is better,
/// `None` is worst).
pub fn leader_stats(grades: &[Vec<Option<f64>>]) -> Result<Vec<LeaderStat>> {
    let methods = grades.first().map_or(0, Vec::len);
    if methods < 2 {
        return Err(Error::InvalidArgument("leader stats need at least two methods".into()));
    }
    let key = |g: Option<f64>| g.unwrap_or(f64::INFINITY);
    let mut solo = vec![0usize; methods];
    let mut co = vec![0usize; methods];
    for row in grades {
        if row.len() != methods {
            return Err(Error::LengthMismatch {
                left: row.len(),
                right: methods,
            });
        }
        let best = row.iter().map(|&g| key(g)).fold(f64::INFINITY, f64::min);
        let leaders: Vec<usize> = (0..methods).filter(|&m| key(row[m]) == best).collect();
        if leaders.len() == 1 {
            solo[leaders[0]] += 1;
        } else {
            for m in leaders {
                co[m] += 1;
            }
        }
    }
    let n = grades.len().max(1) as f64;
    Ok((0..methods)
        .map(|m| LeaderStat {
            solo: solo[m] as f64 / n,
            co: co[m] as f64 / n,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodRow {
    pub method: String,
    /// Accuracy in percent per X.
    pub accuracy: Vec<f64>,
    pub solo_leader: f64,
    pub co_leader: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub queries: usize,
    pub objects: usize,
    pub x_values: Vec<f64>,
    pub criterion: Criterion,
    pub methods: Vec<MethodRow>,
    /// Fraction of queries whose strong rank-1 is the true scene, when known.
    pub localization_top1: Option<f64>,
}

impl MetricsReport {
    pub fn row(&self, method: &str) -> Option<&MethodRow> {
        self.methods.iter().find(|r| r.method == method)
    }

    /// Aligned text table: one row per method, one column per X.
    pub fn table(&self) -> String {
        let name_w = self.methods.iter().map(|r| r.method.len()).max().unwrap_or(0).max(5);
        let mut s = format!("{:>name_w$}", "X [%]");
        for x in &self.x_values {
            s.push_str(&format!(" {:>6}", format_x(*x)));
        }
        s.push_str(&format!(" {:>6} {:>6}\n", "solo", "co"));
        for r in &self.methods {
            s.push_str(&format!("{:>name_w$}", r.method));
            for a in &r.accuracy {
                s.push_str(&format!(" {a:>6.1}"));
            }
            s.push_str(&format!(" {:>6.2} {:>6.2}\n", r.solo_leader, r.co_leader));
        }
        s
    }
}

fn format_x(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{x:.0}")
    } else {
        format!("{x}")
    }
}
