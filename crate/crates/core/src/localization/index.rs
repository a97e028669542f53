use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::features::{BowEntry, BowImage, Descriptor, Keypoint, WordId};
use crate::imaging::Rect;
use crate::roi::Roi;

const MAGIC: &[u8; 6] = b"CSIDX1";
const UNMAPPED: u32 = u32::MAX;

/// One indexed sub-image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Document {
    /// Position of the owning map image in [`InvertedIndex::images`].
    pub image: u32,
    pub roi_id: u32,
    pub rect: Rect,
    /// Number of mapped words in the sub-image.
    pub length: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub count: u32,
}

/// Collects map images and their ROIs; [`IndexBuilder::freeze`] produces
/// the read-only [`InvertedIndex`].
#[derive(Default)]
pub struct IndexBuilder {
    images: Vec<(BowImage, Vec<Rect>)>,
    ids: HashSet<u32>,
}

impl IndexBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a map image with one document per ROI.
    pub fn add(&mut self, map_image_id: u32, rois: &[Roi], bow: &BowImage) -> Result<()> {
        if !self.ids.insert(map_image_id) {
            return Err(Error::DuplicateImage(map_image_id));
        }
        let mut bow = bow.clone();
        bow.image_id = map_image_id;
        self.images.push((bow, rois.iter().map(|r| r.rect).collect()));
        Ok(())
    }

    pub fn n_docs(&self) -> usize {
        self.images.iter().map(|(_, r)| r.len()).sum()
    }

    pub fn doc_freq(&self, w: WordId) -> usize {
        self.images
            .iter()
            .flat_map(|(bow, rects)| rects.iter().map(move |r| bow.crop(r)))
            .filter(|crop| crop.entries.iter().any(|e| e.word == Some(w)))
            .count()
    }

    pub fn freeze(mut self) -> InvertedIndex {
        self.images.sort_by_key(|(b, _)| b.image_id);
        let mut docs = Vec::new();
        let mut postings: Vec<Vec<Posting>> = Vec::new();
        for (img_idx, (bow, rects)) in self.images.iter().enumerate() {
            for (roi_id, rect) in rects.iter().enumerate() {
                let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
                for e in bow.crop(rect).entries {
                    if let Some(w) = e.word {
                        *counts.entry(w.0).or_default() += 1;
                    }
                }
                let doc = docs.len() as u32;
                docs.push(Document {
                    image: img_idx as u32,
                    roi_id: roi_id as u32,
                    rect: *rect,
                    length: counts.values().sum(),
                });
                for (w, count) in counts {
                    let w = w as usize;
                    if postings.len() <= w {
                        postings.resize_with(w + 1, Vec::new);
                    }
                    postings[w].push(Posting { doc, count });
                }
            }
        }
        let images = self.images.into_iter().map(|(b, _)| b).collect();
        InvertedIndex::assemble(images, docs, postings)
    }
}

/// Frozen inverted file over map sub-images. Read-only; safe to query
/// from many threads.
#[derive(Debug)]
pub struct InvertedIndex {
    images: Vec<BowImage>,
    docs: Vec<Document>,
    postings: Vec<Vec<Posting>>,
    /// word → (image position, entry position) for descriptor matching
    keypoints: Vec<Vec<(u32, u32)>>,
    idf: Vec<f64>,
    doc_norms: Vec<f64>,
}

impl InvertedIndex {
    fn assemble(images: Vec<BowImage>, docs: Vec<Document>, postings: Vec<Vec<Posting>>) -> Self {
        let n_docs = docs.len() as f64;
        let idf: Vec<f64> = postings
            .iter()
            .map(|p| if p.is_empty() { 0.0 } else { (n_docs / p.len() as f64).ln() })
            .collect();
        // norms accumulate in ascending word order
        let mut norm_sq = vec![0.0f64; docs.len()];
        for (w, plist) in postings.iter().enumerate() {
            for p in plist {
                let len = f64::from(docs[p.doc as usize].length);
                let weight = f64::from(p.count) / len * idf[w];
                norm_sq[p.doc as usize] += weight * weight;
            }
        }
        let mut keypoints: Vec<Vec<(u32, u32)>> = vec![Vec::new(); postings.len()];
        for (i, img) in images.iter().enumerate() {
            for (j, e) in img.entries.iter().enumerate() {
                if let Some(w) = e.word {
                    if w.index() >= keypoints.len() {
                        keypoints.resize_with(w.index() + 1, Vec::new);
                    }
                    keypoints[w.index()].push((i as u32, j as u32));
                }
            }
        }
        Self {
            images,
            docs,
            postings,
            keypoints,
            idf,
            doc_norms: norm_sq.into_iter().map(f64::sqrt).collect(),
        }
    }

    pub fn n_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn n_images(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn images(&self) -> &[BowImage] {
        &self.images
    }

    pub fn image_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.images.iter().map(|b| b.image_id)
    }

    pub fn image_by_id(&self, id: u32) -> Option<&BowImage> {
        self.images
            .binary_search_by_key(&id, |b| b.image_id)
            .ok()
            .map(|i| &self.images[i])
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn postings(&self, w: WordId) -> &[Posting] {
        self.postings.get(w.index()).map_or(&[], Vec::as_slice)
    }

    pub fn doc_freq(&self, w: WordId) -> usize {
        self.postings(w).len()
    }

    pub fn idf(&self, w: WordId) -> f64 {
        self.idf.get(w.index()).copied().unwrap_or(0.0)
    }

    pub fn doc_norm(&self, doc: usize) -> f64 {
        self.doc_norms[doc]
    }

    pub(crate) fn keypoints_with_word(&self, w: WordId) -> &[(u32, u32)] {
        self.keypoints.get(w.index()).map_or(&[], Vec::as_slice)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        put_u32(&mut w, self.images.len() as u32)?;
        for img in &self.images {
            put_u32(&mut w, img.image_id)?;
            put_u32(&mut w, img.width as u32)?;
            put_u32(&mut w, img.height as u32)?;
            put_u32(&mut w, img.entries.len() as u32)?;
            for e in &img.entries {
                put_u32(&mut w, e.word.map_or(UNMAPPED, |x| x.0))?;
                w.write_all(&(e.keypoint.x as u16).to_le_bytes())?;
                w.write_all(&(e.keypoint.y as u16).to_le_bytes())?;
                w.write_all(&e.keypoint.response.to_le_bytes())?;
                w.write_all(&e.descriptor.to_bytes())?;
            }
        }
        put_u32(&mut w, self.docs.len() as u32)?;
        for d in &self.docs {
            for v in [d.image, d.roi_id, d.rect.x as u32, d.rect.y as u32, d.rect.w as u32, d.rect.h as u32] {
                put_u32(&mut w, v)?;
            }
        }
        put_u32(&mut w, self.postings.len() as u32)?;
        for plist in &self.postings {
            put_varint(&mut w, plist.len() as u64)?;
            let mut prev = 0u32;
            for p in plist {
                put_varint(&mut w, u64::from(p.doc - prev))?;
                put_varint(&mut w, u64::from(p.count))?;
                prev = p.doc;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a CSIDX1 index".into()));
        }
        let n_images = get_u32(&mut r)? as usize;
        let mut images = Vec::with_capacity(n_images);
        for _ in 0..n_images {
            let image_id = get_u32(&mut r)?;
            let width = get_u32(&mut r)? as usize;
            let height = get_u32(&mut r)? as usize;
            let n = get_u32(&mut r)? as usize;
            let mut entries = Vec::with_capacity(n);
            for _ in 0..n {
                let word = get_u32(&mut r)?;
                let mut b2 = [0u8; 2];
                r.read_exact(&mut b2)?;
                let x = u16::from_le_bytes(b2);
                r.read_exact(&mut b2)?;
                let y = u16::from_le_bytes(b2);
                let mut b4 = [0u8; 4];
                r.read_exact(&mut b4)?;
                let response = f32::from_le_bytes(b4);
                let mut b32 = [0u8; 32];
                r.read_exact(&mut b32)?;
                entries.push(BowEntry {
                    word: (word != UNMAPPED).then_some(WordId(word)),
                    keypoint: Keypoint::new(u32::from(x), u32::from(y), response),
                    descriptor: Descriptor::from_bytes(&b32),
                });
            }
            images.push(BowImage::new(image_id, width, height, entries));
        }
        let n_docs = get_u32(&mut r)? as usize;
        let mut docs = Vec::with_capacity(n_docs);
        for _ in 0..n_docs {
            let v: Vec<u32> = (0..6).map(|_| get_u32(&mut r)).collect::<Result<_>>()?;
            if v[0] as usize >= images.len() {
                return Err(Error::Format("document references unknown image".into()));
            }
            docs.push(Document {
                image: v[0],
                roi_id: v[1],
                rect: Rect::new(v[2] as usize, v[3] as usize, v[4] as usize, v[5] as usize),
                length: 0,
            });
        }
        let n_words = get_u32(&mut r)? as usize;
        let mut postings = Vec::with_capacity(n_words);
        for _ in 0..n_words {
            let n = get_varint(&mut r)? as usize;
            let mut plist = Vec::with_capacity(n);
            let mut doc = 0u64;
            for _ in 0..n {
                doc += get_varint(&mut r)?;
                let count = get_varint(&mut r)? as u32;
                if doc as usize >= docs.len() {
                    return Err(Error::Format("posting references unknown document".into()));
                }
                docs[doc as usize].length += count;
                plist.push(Posting { doc: doc as u32, count });
            }
            postings.push(plist);
        }
        Ok(Self::assemble(images, docs, postings))
    }
}

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn put_varint(w: &mut impl Write, mut v: u64) -> Result<()> {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            w.write_all(&[byte])?;
            return Ok(());
        }
        w.write_all(&[byte | 0x80])?;
    }
}

fn get_varint(r: &mut impl Read) -> Result<u64> {
    let mut v = 0u64;
    for shift in (0..64).step_by(7) {
        let mut b = [0u8; 1];
        r.read_exact(&mut b)?;
        v |= u64::from(b[0] & 0x7f) << shift;
        if b[0] & 0x80 == 0 {
            return Ok(v);
        }
    }
    Err(Error::Format("varint overflow".into()))
}
