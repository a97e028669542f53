//! Object bounding boxes: fixed grid templates plus ingested detector
//! proposals, and cropping of bag-of-words images by them.

use std::path::Path;

use crate::error::{Error, Result};
use crate::features::BowImage;
use crate::imaging::Rect;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum RoiSource {
    Template(String),
    /// Class-labelled detector box.
    Yolo,
    /// Class-agnostic proposal.
    Bing,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Roi {
    pub rect: Rect,
    pub source: RoiSource,
    /// Dense index within the ROI list of one image.
    pub roi_id: u32,
}

/// A span of grid cells, in cell units.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellSpan {
    pub col: usize,
    pub row: usize,
    pub cols: usize,
    pub rows: usize,
}

const fn span(col: usize, row: usize, cols: usize, rows: usize) -> CellSpan {
    CellSpan { col, row, cols, rows }
}

/// Named family of cell-combination rectangles over a `cols`×`rows` grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemplateSet {
    pub name: String,
    pub grid: (usize, usize),
    pub members: Vec<CellSpan>,
}

/// Names accepted by [`TemplateSet::builtin`].
pub const BUILTIN_SETS: &[&str] = &["J", "B", "H", "V", "C", "G", "W", "F", "E"];

impl TemplateSet {
    /// Built-in sets. `J`, `B`, `H`, `V`, `C` live on a 4×4 grid (full
    /// frame, quadrants, halves, centered half-size box); `G` and `W` are the
    /// single cells and overlapping 2×2 blocks of that grid; `F` and `E` are
    /// the same pair on an 8×8 grid.
    pub fn builtin(name: &str) -> Result<TemplateSet> {
        let (grid, members) = match name {
            "J" => ((4, 4), vec![span(0, 0, 4, 4)]),
            "B" => (
                (4, 4),
                vec![span(0, 0, 2, 2), span(2, 0, 2, 2), span(0, 2, 2, 2), span(2, 2, 2, 2)],
            ),
            "H" => ((4, 4), vec![span(0, 0, 2, 4), span(2, 0, 2, 4)]),
            "V" => ((4, 4), vec![span(0, 0, 4, 2), span(0, 2, 4, 2)]),
            "C" => ((4, 4), vec![span(1, 1, 2, 2)]),
            "G" => ((4, 4), blocks(4, 1)),
            "W" => ((4, 4), blocks(4, 2)),
            "F" => ((8, 8), blocks(8, 1)),
            "E" => ((8, 8), blocks(8, 2)),
            other => return Err(Error::UnknownTemplateSet(other.to_string())),
        };
        Ok(TemplateSet {
            name: name.to_string(),
            grid,
            members,
        })
    }

    /// Member rectangles in pixels; grid lines fall at `floor(i·w/cols)`.
    pub fn rects(&self, dims: (usize, usize)) -> Vec<Rect> {
        let (w, h) = dims;
        let (gc, gr) = self.grid;
        let xs = |i: usize| i * w / gc;
        let ys = |i: usize| i * h / gr;
        self.members
            .iter()
            .map(|s| {
                let (x0, x1) = (xs(s.col), xs(s.col + s.cols));
                let (y0, y1) = (ys(s.row), ys(s.row + s.rows));
                Rect::new(x0, y0, x1 - x0, y1 - y0)
            })
            .filter(|r| r.w > 0 && r.h > 0)
            .collect()
    }
}

/// Every `size`×`size` block of an `n`×`n` grid at unit stride, row-major.
fn blocks(n: usize, size: usize) -> Vec<CellSpan> {
    let mut out = Vec::new();
    for row in 0..=n - size {
        for col in 0..=n - size {
            out.push(span(col, row, size, size));
        }
    }
    out
}

/// ROIs for the named template sets, in the order given.
pub fn template_rois<S: AsRef<str>>(dims: (usize, usize), set_names: &[S]) -> Result<Vec<Roi>> {
    let mut out = Vec::new();
    for name in set_names {
        let set = TemplateSet::builtin(name.as_ref())?;
        for rect in set.rects(dims) {
            out.push(Roi {
                rect,
                source: RoiSource::Template(set.name.clone()),
                roi_id: out.len() as u32,
            });
        }
    }
    Ok(out)
}

/// Parse template set names joined by `+` or `,` (e.g. `J+B+H`).
pub fn parse_set_names(spec: &str) -> Result<Vec<String>> {
    let names: Vec<String> = spec
        .split(['+', ','])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    for n in &names {
        TemplateSet::builtin(n)?;
    }
    Ok(names)
}

/// Parse proposal lines `image_id x y w h score [label]`, keeping those for
/// `image_id`. Boxes are clamped to the frame; boxes entirely outside are
/// dropped.
pub fn parse_proposals(text: &str, image_id: &str, dims: (usize, usize)) -> Result<Vec<Roi>> {
    let (iw, ih) = (dims.0 as i64, dims.1 as i64);
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let malformed = |reason: &str| Error::MalformedProposal {
            line: lineno,
            reason: reason.to_string(),
        };
        if fields.len() < 6 || fields.len() > 7 {
            return Err(malformed("expected `image_id x y w h score [label]`"));
        }
        let num = |s: &str| s.parse::<i64>().map_err(|_| malformed("non-integer coordinate"));
        let (x, y, w, h) = (num(fields[1])?, num(fields[2])?, num(fields[3])?, num(fields[4])?);
        fields[5]
            .parse::<f64>()
            .map_err(|_| malformed("non-numeric score"))?;
        if w <= 0 || h <= 0 {
            return Err(malformed("negative extent"));
        }
        if fields[0] != image_id {
            continue;
        }
        let (x0, y0) = (x.max(0), y.max(0));
        let (x1, y1) = ((x + w).min(iw), (y + h).min(ih));
        if x1 <= x0 || y1 <= y0 {
            continue;
        }
        let source = if fields.len() == 7 {
            RoiSource::Yolo
        } else {
            RoiSource::Bing
        };
        out.push(Roi {
            rect: Rect::new(x0 as usize, y0 as usize, (x1 - x0) as usize, (y1 - y0) as usize),
            source,
            roi_id: out.len() as u32,
        });
    }
    Ok(out)
}

pub fn load_proposals(path: impl AsRef<Path>, image_id: &str, dims: (usize, usize)) -> Result<Vec<Roi>> {
    let text = std::fs::read_to_string(path)?;
    parse_proposals(&text, image_id, dims)
}

/// Concatenate ROI lists and renumber ids densely.
pub fn combine(lists: impl IntoIterator<Item = Vec<Roi>>) -> Vec<Roi> {
    let mut out: Vec<Roi> = lists.into_iter().flatten().collect();
    for (i, r) in out.iter_mut().enumerate() {
        r.roi_id = i as u32;
    }
    out
}

/// Sub-image BoW: the entries whose keypoints fall inside the ROI.
pub fn crop_bow(b: &BowImage, r: &Roi) -> BowImage {
    b.crop(&r.rect)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{BowEntry, Descriptor, Keypoint, WordId};
    use proptest::prelude::*;

    #[test]
    fn template_examples() {
        let j = template_rois((120, 160), &["J"]).unwrap();
        assert_eq!(j.len(), 1);
        assert_eq!(j[0].rect, Rect::new(0, 0, 120, 160));
        let b = template_rois((120, 160), &["B"]).unwrap();
        assert_eq!(b.len(), 4);
        assert!(b.iter().all(|r| (r.rect.w, r.rect.h) == (60, 80)));
        let jb = template_rois((120, 160), &["J", "B"]).unwrap();
        assert_eq!(jb.len(), 5);
        assert_eq!(jb.iter().map(|r| r.roi_id).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
        assert!(template_rois((120, 160), &["Q"]).is_err());
    }

    #[test]
    fn all_builtins_fit_frame() {
        for dims in [(160, 120), (97, 61), (16, 16)] {
            let rois = template_rois(dims, BUILTIN_SETS).unwrap();
            assert!(rois.iter().all(|r| r.rect.fits(dims.0, dims.1)));
        }
        assert_eq!(template_rois((160, 120), &["G"]).unwrap().len(), 16);
        assert_eq!(template_rois((160, 120), &["W"]).unwrap().len(), 9);
        assert_eq!(template_rois((160, 120), &["F"]).unwrap().len(), 64);
        assert_eq!(template_rois((160, 120), &["E"]).unwrap().len(), 49);
    }

    #[test]
    fn set_name_parsing() {
        assert_eq!(parse_set_names("J+B, H").unwrap(), vec!["J", "B", "H"]);
        assert!(parse_set_names("J+Z").is_err());
    }

    #[test]
    fn proposal_examples() {
        let r = parse_proposals("img7 10 20 30 40 0.9 car\n", "img7", (200, 200)).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].rect, Rect::new(10, 20, 30, 40));
        assert_eq!(r[0].source, RoiSource::Yolo);

        let r = parse_proposals("img7 180 20 30 40 0.5\n", "img7", (200, 200)).unwrap();
        assert_eq!(r[0].rect, Rect::new(180, 20, 20, 40));
        assert_eq!(r[0].source, RoiSource::Bing);

        let e = parse_proposals("img7 10 20 -5 40 0.9 car\n", "img7", (200, 200)).unwrap_err();
        assert!(matches!(e, Error::MalformedProposal { line: 1, .. }));
        assert!(parse_proposals("img7 10 20\n", "img7", (200, 200)).is_err());
        assert!(parse_proposals("", "img7", (200, 200)).unwrap().is_empty());
        let other = parse_proposals("img8 1 1 5 5 0.1\nimg7 2 2 5 5 0.2\n", "img7", (50, 50)).unwrap();
        assert_eq!(other.len(), 1);
        assert_eq!(other[0].roi_id, 0);
    }

    fn random_bow(points: &[(u32, u32)]) -> BowImage {
        let entries = points
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| BowEntry {
                word: Some(WordId(i as u32 % 7)),
                keypoint: Keypoint::new(x, y, 1.0),
                descriptor: Descriptor([i as u64, 0, 0, 0]),
            })
            .collect();
        BowImage::new(0, 100, 80, entries)
    }

    fn roi(rect: Rect) -> Roi {
        Roi {
            rect,
            source: RoiSource::Bing,
            roi_id: 0,
        }
    }

    #[test]
    fn crop_examples() {
        let b = random_bow(&[(1, 1), (50, 40), (99, 79)]);
        assert_eq!(crop_bow(&b, &roi(Rect::new(0, 0, 100, 80))), b);
        assert!(crop_bow(&b, &roi(Rect::new(10, 10, 5, 5))).is_empty());
    }

    proptest! {
        #[test]
        fn disjoint_halves_partition_entries(
            pts in prop::collection::vec((0u32..100, 0u32..80), 0..60),
            split in 1usize..100,
        ) {
            let b = random_bow(&pts);
            let left = crop_bow(&b, &roi(Rect::new(0, 0, split, 80)));
            let right = crop_bow(&b, &roi(Rect::new(split, 0, 100 - split, 80)));
            prop_assert_eq!(left.len() + right.len(), b.len());
        }

        #[test]
        fn crop_is_monotone(
            pts in prop::collection::vec((0u32..100, 0u32..80), 0..60),
            (x, y, w, h) in (0usize..50, 0usize..40, 1usize..50, 1usize..40),
            (gx, gy) in (0usize..=50, 0usize..=40),
        ) {
            let b = random_bow(&pts);
            let inner = Rect::new(x, y, w, h);
            let outer = Rect::new(x.saturating_sub(gx), y.saturating_sub(gy), w + gx.min(x) + gx, h + gy.min(y) + gy);
            prop_assert!(outer.contains_rect(&inner));
            let a = crop_bow(&b, &roi(inner));
            let c = crop_bow(&b, &roi(outer));
            for e in &a.entries {
                prop_assert!(c.entries.contains(e));
            }
        }
    }
}
