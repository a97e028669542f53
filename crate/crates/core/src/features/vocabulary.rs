use std::io::{Read, Write};

use crate::error::{Error, Result};

use super::Descriptor;

/// Default Hamming assignment radius (a quarter of the descriptor length).
pub const DEFAULT_RADIUS: u32 = 128;

const MAGIC: &[u8; 6] = b"CSVOC1";

/// Dense visual word identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WordId(pub u32);

impl WordId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Flat vocabulary grown online: a descriptor farther than `radius` from
/// every existing word becomes a new word.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    words: Vec<Descriptor>,
    radius: u32,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new(DEFAULT_RADIUS)
    }
}

impl Vocabulary {
    pub fn new(radius: u32) -> Self {
        Self {
            words: Vec::new(),
            radius,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn word(&self, id: WordId) -> &Descriptor {
        &self.words[id.index()]
    }

    /// Nearest word and its distance; ties go to the lowest id.
    pub fn nearest(&self, d: &Descriptor) -> Option<(WordId, u32)> {
        let mut best: Option<(WordId, u32)> = None;
        for (i, w) in self.words.iter().enumerate() {
            let dist = w.hamming(d);
            if best.is_none_or(|(_, b)| dist < b) {
                best = Some((WordId(i as u32), dist));
                if dist == 0 {
                    break;
                }
            }
        }
        best
    }

    /// Read-only assignment; `None` means unmapped.
    pub fn lookup(&self, d: &Descriptor) -> Option<WordId> {
        self.nearest(d)
            .filter(|&(_, dist)| dist <= self.radius)
            .map(|(id, _)| id)
    }

    /// Assign `d`, appending it as a new word when nothing is within radius.
    pub fn insert_or_lookup(&mut self, d: &Descriptor) -> WordId {
        if let Some(id) = self.lookup(d) {
            return id;
        }
        self.words.push(*d);
        WordId(self.words.len() as u32 - 1)
    }

    /// Quantize with optional growth; `None` only when `grow` is false and
    /// no word lies within the radius.
    pub fn quantize(&mut self, d: &Descriptor, grow: bool) -> Option<WordId> {
        if grow {
            Some(self.insert_or_lookup(d))
        } else {
            self.lookup(d)
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.words.len() as u32).to_le_bytes())?;
        w.write_all(&self.radius.to_le_bytes())?;
        for d in &self.words {
            w.write_all(&d.to_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a CSVOC1 vocabulary".into()));
        }
        let mut u = [0u8; 4];
        r.read_exact(&mut u)?;
        let n = u32::from_le_bytes(u) as usize;
        r.read_exact(&mut u)?;
        let radius = u32::from_le_bytes(u);
        let mut words = Vec::with_capacity(n);
        let mut buf = [0u8; 32];
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            words.push(Descriptor::from_bytes(&buf));
        }
        Ok(Self { words, radius })
    }
}
