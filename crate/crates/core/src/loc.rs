//! Likelihood-of-change rasters.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::Image;

const MAGIC: &[u8; 6] = b"CSLOC1";

/// Per-pixel likelihood of change; higher means more likely changed.
#[derive(Clone, Debug, PartialEq)]
pub struct LocMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl LocMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    /// Panics when the length does not match or a value is negative or
    /// non-finite.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), width * height);
        assert!(values.iter().all(|v| v.is_finite() && *v >= 0.0), "LoC values must be finite and >= 0");
        Self { width, height, values }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.width as u32).to_le_bytes())?;
        w.write_all(&(self.height as u32).to_le_bytes())?;
        for &v in &self.values {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a CSLOC1 raster".into()));
        }
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        let width = u32::from_le_bytes(b) as usize;
        r.read_exact(&mut b)?;
        let height = u32::from_le_bytes(b) as usize;
        let mut values = Vec::with_capacity(width * height);
        for _ in 0..width * height {
            r.read_exact(&mut b)?;
            values.push(f64::from(f32::from_le_bytes(b)));
        }
        Ok(Self { width, height, values })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    /// 8-bit preview, min→0 and max→255.
    pub fn preview(&self) -> Image {
        let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        let px = self
            .values
            .iter()
            .map(|&v| if span > 0.0 { ((v - lo) / span * 255.0).round() as u8 } else { 0 })
            .collect();
        Image::new(self.width, self.height, px).expect("non-empty raster")
    }
}
