//! Grayscale images, rectangles and the cell grid shared by every channel.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use image::{DynamicImage, GrayImage};

use crate::error::{Error, Result};

/// Row-major 8-bit grayscale image.
#[derive(Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Image")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroDimension);
        }
        if pixels.len() != width * height {
            return Err(Error::LengthMismatch {
                left: pixels.len(),
                right: width * height,
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn frame(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }

    /// Pixel intensities as `f64`, row-major.
    pub fn to_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| f64::from(p)).collect()
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let buf = GrayImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .expect("buffer length matches dimensions");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| match e {
                image::ImageError::IoError(io) => Error::Io(io),
                other => Error::Format(other.to_string()),
            })
    }
}

/// Load a PGM or PNG file. Color input is reduced to gray by the unweighted
/// channel mean.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let unreadable = |reason: String| Error::Unreadable {
        path: path.to_path_buf(),
        reason,
    };
    let dynamic = image::ImageReader::open(path)
        .map_err(|e| unreadable(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| unreadable(e.to_string()))?
        .decode()
        .map_err(|e| unreadable(e.to_string()))?;
    from_dynamic(dynamic)
}

fn from_dynamic(dynamic: DynamicImage) -> Result<Image> {
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::ZeroDimension);
    }
    let pixels = if dynamic.color().has_color() {
        dynamic
            .to_rgb8()
            .pixels()
            .map(|p| {
                let sum = u16::from(p[0]) + u16::from(p[1]) + u16::from(p[2]);
                ((sum + 1) / 3) as u8
            })
            .collect()
    } else {
        dynamic.to_luma8().into_raw()
    };
    Image::new(w, h, pixels)
}

/// Records every image file path read through an [`ImageReader`].
#[derive(Clone, Debug, Default)]
pub struct FileAccessLog {
    paths: Arc<Mutex<Vec<PathBuf>>>,
}

impl FileAccessLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, path: &Path) {
        self.paths.lock().unwrap().push(path.to_path_buf());
    }

    pub fn paths(&self) -> Vec<PathBuf> {
        self.paths.lock().unwrap().clone()
    }

    /// Number of recorded reads that fall under `dir`.
    pub fn reads_under(&self, dir: &Path) -> usize {
        let dir = dir.canonicalize().unwrap_or_else(|_| dir.to_path_buf());
        self.paths()
            .iter()
            .filter(|p| {
                let p = p.canonicalize().unwrap_or_else(|_| p.to_path_buf());
                p.starts_with(&dir)
            })
            .count()
    }
}

/// Image loader that optionally records what it reads.
#[derive(Clone, Debug, Default)]
pub struct ImageReader {
    log: Option<FileAccessLog>,
}

impl ImageReader {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_log(log: FileAccessLog) -> Self {
        Self { log: Some(log) }
    }

    pub fn load(&self, path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        if let Some(log) = &self.log {
            log.record(path);
        }
        load_image(path)
    }
}

/// Axis-aligned pixel rectangle, origin top-left.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub const fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    #[inline]
    pub fn area(&self) -> usize {
        self.w * self.h
    }

    #[inline]
    pub fn right(&self) -> usize {
        self.x + self.w
    }

    #[inline]
    pub fn bottom(&self) -> usize {
        self.y + self.h
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.w > 0 && self.h > 0 && self.right() <= width && self.bottom() <= height
    }

    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x1 > x0 && y1 > y0).then(|| Rect::new(x0, y0, x1 - x0, y1 - y0))
    }
}

/// Area of the geometric intersection of two rectangles; 0 when disjoint.
pub fn intersect(a: &Rect, b: &Rect) -> usize {
    a.intersection(b).map_or(0, |r| r.area())
}

/// Per-cell scores over a grid of square cells imposed on an image.
///
/// Border cells may be partial; they cover whatever pixels remain.
#[derive(Clone, Debug, PartialEq)]
pub struct CellGrid {
    cell_size: usize,
    width: usize,
    height: usize,
    cols: usize,
    rows: usize,
    values: Vec<f64>,
}

impl CellGrid {
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cell_size(&self) -> usize {
        self.cell_size
    }

    pub fn image_dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, v: f64) {
        self.values[row * self.cols + col] = v;
    }

    /// Pixel rectangle of cell `index` (row-major), clipped to the image.
    pub fn cell_rect(&self, index: usize) -> Rect {
        let (col, row) = (index % self.cols, index / self.cols);
        let x = col * self.cell_size;
        let y = row * self.cell_size;
        Rect::new(
            x,
            y,
            self.cell_size.min(self.width - x),
            self.cell_size.min(self.height - y),
        )
    }

    pub fn same_shape(&self, other: &CellGrid) -> bool {
        self.cols == other.cols
            && self.rows == other.rows
            && self.width == other.width
            && self.height == other.height
            && self.cell_size == other.cell_size
    }

    pub fn with_values(&self, values: Vec<f64>) -> CellGrid {
        assert_eq!(values.len(), self.values.len());
        CellGrid {
            values,
            ..self.clone()
        }
    }
}

/// Zero-initialized grid of `cell_size` cells covering a `width`×`height` image.
pub fn cells_of(dims: (usize, usize), cell_size: usize) -> Result<CellGrid> {
    let (width, height) = dims;
    if cell_size == 0 {
        return Err(Error::InvalidArgument("cell_size must be >= 1".into()));
    }
    if width == 0 || height == 0 {
        return Err(Error::ZeroDimension);
    }
    let cols = width.div_ceil(cell_size);
    let rows = height.div_ceil(cell_size);
    Ok(CellGrid {
        cell_size,
        width,
        height,
        cols,
        rows,
        values: vec![0.0; cols * rows],
    })
}

/// Bilinear resampling of a row-major `f64` raster (pixel centers aligned).
pub fn resample_bilinear(src: &[f64], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f64> {
    assert_eq!(src.len(), sw * sh);
    if sw == dw && sh == dh {
        return src.to_vec();
    }
    let sx = sw as f64 / dw as f64;
    let sy = sh as f64 / dh as f64;
    let mut out = Vec::with_capacity(dw * dh);
    for y in 0..dh {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (sh - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let ty = fy - y0 as f64;
        for x in 0..dw {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (sw - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let tx = fx - x0 as f64;
            let top = src[y0 * sw + x0] * (1.0 - tx) + src[y0 * sw + x1] * tx;
            let bot = src[y1 * sw + x0] * (1.0 - tx) + src[y1 * sw + x1] * tx;
            out.push(top * (1.0 - ty) + bot * ty);
        }
    }
    out
}
