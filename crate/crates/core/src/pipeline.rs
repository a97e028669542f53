//! End-to-end commands over on-disk datasets and artifact directories.
//!
//! Dataset layout: `map/*.png`, `queries/*.png`, `proposals/<query>.txt`,
//! `masks/<query>.png`, `gt.txt`, and optionally `scenes.txt` (lines
//! `query_id map_stem` naming the true place of each query).
//!
//! Artifact layout: `vocab.csvoc`, `index.csidx`, `places/place_NN.cspm`,
//! `places.tsv`, `config.txt`, `manifest.json`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::anomaly::{ad_loc_map, train_places, PlaceModel, PlaceModels};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::eval::{
    apply_mask, format_ground_truth, fuse_channels, leader_stats, load_ground_truth, pool_cells, query_grade,
    top_x_accuracy, MethodRow, MetricsReport, SynthDataset,
};
use crate::fault::fd_loc_map;
use crate::features::{extract_bow, extract_bow_frozen, Vocabulary};
use crate::imaging::{intersect, CellGrid, Image, ImageReader, Rect};
use crate::loc::LocMap;
use crate::localization::{IndexBuilder, InvertedIndex, RankedList};
use crate::pairwise::{pc_scores, splat};
use crate::par;
use crate::roi::{combine, load_proposals, parse_set_names, template_rois, Roi};

pub const VOCAB_FILE: &str = "vocab.csvoc";
pub const INDEX_FILE: &str = "index.csidx";
pub const PLACES_DIR: &str = "places";
pub const PLACES_TSV: &str = "places.tsv";
pub const CONFIG_FILE: &str = "config.txt";
pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT: &str = "fdchange-artifacts/1";
const IMAGE_EXTS: [&str; 4] = ["png", "pgm", "ppm", "pnm"];

/// The method combinations of the standard report.
pub const STANDARD_METHODS: [&str; 6] = ["FD", "AD", "PC", "FD+AD", "FD+PC", "FD+AD+PC"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapEntry {
    pub id: u32,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config_hash: String,
    pub seed: u64,
    /// Directory the map images were read from; PC looks there at detect time.
    pub map_dir: String,
    pub images: Vec<MapEntry>,
    pub places: usize,
    pub files: Vec<FileEntry>,
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Image files directly inside `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::Unreadable {
        path: dir.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut out = Vec::new();
    for e in entries {
        let p = e?.path();
        let ext = p.extension().map(|s| s.to_string_lossy().to_ascii_lowercase());
        if p.is_file() && ext.is_some_and(|x| IMAGE_EXTS.contains(&x.as_str())) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn proposals_for(path: &Path, image_id: &str, dims: (usize, usize)) -> Result<Vec<Roi>> {
    if path.is_file() {
        load_proposals(path, image_id, dims)
    } else {
        Ok(Vec::new())
    }
}

/// Index a directory of map images. Proposal files named `<stem>.txt` next
/// to the images add extra documents when `use_proposals` is set.
pub fn build(map_dir: &Path, out_dir: &Path, cfg: &Config) -> Result<Manifest> {
    cfg.validate()?;
    let paths = list_images(map_dir)?;
    if paths.is_empty() {
        return Err(Error::Unreadable {
            path: map_dir.to_path_buf(),
            reason: "no images".into(),
        });
    }
    let reader = ImageReader::new();
    let images: Vec<Image> = paths.iter().map(|p| reader.load(p)).collect::<Result<_>>()?;
    let params = cfg.feature_params();
    let sets = parse_set_names(&cfg.map_templates)?;

    let mut vocab = Vocabulary::new(cfg.vocab_radius);
    let mut builder = IndexBuilder::new();
    for (i, (path, img)) in paths.iter().zip(&images).enumerate() {
        let id = i as u32;
        let bow = extract_bow(img, id, &mut vocab, true, &params)?;
        let mut rois = template_rois(img.dims(), &sets)?;
        if cfg.use_proposals {
            let props = proposals_for(&path.with_extension("txt"), &stem(path), img.dims())?;
            rois = combine([rois, props]);
        }
        builder.add(id, &rois, &bow)?;
    }
    let index = builder.freeze();

    let map: Vec<(u32, Image)> = images.into_iter().enumerate().map(|(i, img)| (i as u32, img)).collect();
    let k = cfg.k_places.min(map.len());
    let places = train_places(&map, k, cfg.ad_components, cfg.seed, &cfg.ad_params())?;

    fs::create_dir_all(out_dir.join(PLACES_DIR))?;
    let mut written: Vec<String> = Vec::new();
    write_file(&out_dir.join(VOCAB_FILE), |w| vocab.write_to(w))?;
    written.push(VOCAB_FILE.into());
    write_file(&out_dir.join(INDEX_FILE), |w| index.write_to(w))?;
    written.push(INDEX_FILE.into());
    for m in &places.models {
        let name = format!("{PLACES_DIR}/place_{:02}.cspm", m.place_id);
        write_file(&out_dir.join(&name), |w| m.write_to(w))?;
        written.push(name);
    }
    let tsv: String = places.assignments.iter().map(|(id, p)| format!("{id}\t{p}\n")).collect();
    fs::write(out_dir.join(PLACES_TSV), tsv)?;
    written.push(PLACES_TSV.into());
    fs::write(out_dir.join(CONFIG_FILE), cfg.effective())?;
    written.push(CONFIG_FILE.into());

    let files = written
        .into_iter()
        .map(|name| {
            let sha256 = sha256_file(&out_dir.join(&name))?;
            Ok(FileEntry { name, sha256 })
        })
        .collect::<Result<_>>()?;
    let map_dir_abs = map_dir.canonicalize()?;
    let manifest = Manifest {
        format: FORMAT.into(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        map_dir: map_dir_abs.to_string_lossy().into_owned(),
        images: paths
            .iter()
            .enumerate()
            .map(|(i, p)| MapEntry {
                id: i as u32,
                file: p.file_name().unwrap().to_string_lossy().into_owned(),
            })
            .collect(),
        places: places.models.len(),
        files,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(out_dir.join(MANIFEST_FILE), json + "\n")?;
    Ok(manifest)
}

/// One change-detection channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Channel {
    Fd,
    Ad,
    Pc,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Fd => "FD",
            Channel::Ad => "AD",
            Channel::Pc => "PC",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A method is a `+`-joined channel combination such as `FD+AD+PC`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Method(pub Vec<Channel>);

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut chans = Vec::new();
        for part in s.split('+') {
            let c = match part.trim().to_ascii_uppercase().as_str() {
                "FD" => Channel::Fd,
                "AD" => Channel::Ad,
                "PC" => Channel::Pc,
                other => return Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
            };
            if !chans.contains(&c) {
                chans.push(c);
            }
        }
        Ok(Method(chans))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.0.iter().map(|c| c.name()).collect();
        f.write_str(&names.join("+"))
    }
}

/// Loaded artifacts, ready to answer queries.
pub struct Artifacts {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub config: Config,
    pub vocab: Vocabulary,
    pub index: InvertedIndex,
    pub places: PlaceModels,
}

impl Artifacts {
    /// Reads only the artifact files; no map imagery is touched.
    pub fn open(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
        if manifest.format != FORMAT {
            return Err(Error::Format(format!("unsupported artifact format {:?}", manifest.format)));
        }
        let config = Config::load(dir.join(CONFIG_FILE))?;
        let vocab = Vocabulary::read_from(BufReader::new(fs::File::open(dir.join(VOCAB_FILE))?))?;
        let index = InvertedIndex::read_from(BufReader::new(fs::File::open(dir.join(INDEX_FILE))?))?;
        let mut models = Vec::with_capacity(manifest.places);
        for p in 0..manifest.places {
            models.push(PlaceModel::load(dir.join(PLACES_DIR).join(format!("place_{p:02}.cspm")))?);
        }
        let mut assignments = BTreeMap::new();
        for line in fs::read_to_string(dir.join(PLACES_TSV))?.lines() {
            let bad = || Error::Format(format!("bad {PLACES_TSV} line {line:?}"));
            let (id, p) = line.split_once('\t').ok_or_else(bad)?;
            assignments.insert(id.parse().map_err(|_| bad())?, p.parse().map_err(|_| bad())?);
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            config,
            vocab,
            index,
            places: PlaceModels { models, assignments },
        })
    }

    pub fn map_file(&self, id: u32) -> Option<PathBuf> {
        self.manifest
            .images
            .iter()
            .find(|e| e.id == id)
            .map(|e| Path::new(&self.manifest.map_dir).join(&e.file))
    }

    pub fn map_stem(&self, id: u32) -> Option<String> {
        self.map_file(id).map(|p| stem(&p))
    }

    /// Localize the query and compute the requested channels. The FD
    /// channel reads nothing but the index; AD reads place models; PC loads
    /// the localized map image through `reader`.
    pub fn detect(
        &self,
        query: &Image,
        proposals: &[Roi],
        mask: Option<&Image>,
        channels: &[Channel],
        reader: &ImageReader,
    ) -> Result<Detection> {
        let cfg = &self.config;
        let bow = extract_bow_frozen(query, 0, &self.vocab, &cfg.feature_params())?;
        let mut rois = template_rois(query.dims(), &parse_set_names(&cfg.query_templates)?)?;
        if cfg.use_proposals {
            rois = combine([rois, proposals.to_vec()]);
        }
        let fd = fd_loc_map(&self.index, &bow, &rois, &cfg.fd_config())?;
        let localized = fd.strong.ids().next().ok_or(Error::Unlocalizable)?;

        let mut maps: Vec<(Channel, LocMap)> = Vec::new();
        let mut wanted: Vec<Channel> = channels.to_vec();
        wanted.sort();
        wanted.dedup();
        for c in wanted {
            let loc = match c {
                Channel::Fd => fd.loc.clone(),
                Channel::Ad => ad_loc_map(&self.places, query, localized)?,
                Channel::Pc => {
                    let path = self.map_file(localized).ok_or(Error::UnknownMapImage(localized))?;
                    if !path.is_file() {
                        return Err(Error::Unavailable(format!(
                            "PC (map image {} is not on disk)",
                            path.display()
                        )));
                    }
                    let map_img = reader.load(&path)?;
                    let scores = pc_scores(query, &map_img, &cfg.feature_params())?;
                    splat(query.dims(), &scores, cfg.pc_radius)
                }
            };
            let loc = match mask {
                Some(m) => apply_mask(&loc, m)?,
                None => loc,
            };
            maps.push((c, loc));
        }
        let cells: Vec<(Channel, CellGrid)> = maps
            .iter()
            .map(|(c, m)| Ok((*c, pool_cells(m, cfg.cell_size)?)))
            .collect::<Result<_>>()?;
        let fused = if cells.is_empty() {
            None
        } else {
            let grids: Vec<CellGrid> = cells.iter().map(|(_, g)| g.clone()).collect();
            Some(fuse_channels(&grids)?)
        };
        Ok(Detection {
            strong: fd.strong,
            localized,
            maps,
            cells,
            fused,
        })
    }
}

pub struct Detection {
    pub strong: RankedList,
    /// Strong rank-1 map image id.
    pub localized: u32,
    pub maps: Vec<(Channel, LocMap)>,
    pub cells: Vec<(Channel, CellGrid)>,
    /// Reciprocal-rank fusion of all computed channels.
    pub fused: Option<CellGrid>,
}

impl Detection {
    pub fn cells_of(&self, c: Channel) -> Option<&CellGrid> {
        self.cells.iter().find(|(k, _)| *k == c).map(|(_, g)| g)
    }

    /// Cell grid of a method: the channel itself, or the fusion of several.
    pub fn method_cells(&self, m: &Method) -> Result<CellGrid> {
        let grids: Vec<CellGrid> = m
            .0
            .iter()
            .map(|c| {
                self.cells_of(*c)
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument(format!("channel {c} was not computed")))
            })
            .collect::<Result<_>>()?;
        match grids.as_slice() {
            [single] => Ok(single.clone()),
            _ => fuse_channels(&grids),
        }
    }
}

/// Paths of one query inside a dataset directory.
#[derive(Clone, Debug)]
pub struct QueryFiles {
    pub id: String,
    pub image: PathBuf,
    pub proposals: PathBuf,
    pub mask: PathBuf,
}

pub fn dataset_queries(dataset: &Path) -> Result<Vec<QueryFiles>> {
    Ok(list_images(&dataset.join("queries"))?
        .into_iter()
        .map(|image| {
            let id = stem(&image);
            QueryFiles {
                proposals: dataset.join("proposals").join(format!("{id}.txt")),
                mask: dataset.join("masks").join(format!("{id}.png")),
                id,
                image,
            }
        })
        .collect())
}

/// Load a query image plus its optional proposals and mask.
pub fn load_query(q: &QueryFiles, reader: &ImageReader) -> Result<(Image, Vec<Roi>, Option<Image>)> {
    let img = reader.load(&q.image)?;
    let props = proposals_for(&q.proposals, &q.id, img.dims())?;
    let mask = if q.mask.is_file() { Some(reader.load(&q.mask)?) } else { None };
    Ok((img, props, mask))
}

/// Reference channel computed from the ground truth: each cell scores the
/// fraction of it covered by annotated boxes.
pub fn oracle_cells(template: &CellGrid, boxes: &[Rect]) -> CellGrid {
    let values = (0..template.len())
        .map(|i| {
            let r = template.cell_rect(i);
            let covered: usize = boxes.iter().map(|b| intersect(&r, b)).sum();
            covered as f64 / r.area() as f64
        })
        .collect();
    template.with_values(values)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EvalMethod {
    Channels(Method),
    Oracle,
}

impl FromStr for EvalMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("ORACLE") {
            Ok(EvalMethod::Oracle)
        } else {
            s.parse().map(EvalMethod::Channels)
        }
    }
}

impl fmt::Display for EvalMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalMethod::Channels(m) => m.fmt(f),
            EvalMethod::Oracle => f.write_str("ORACLE"),
        }
    }
}

fn read_scenes(path: &Path) -> Result<Option<BTreeMap<String, String>>> {
    if !path.is_file() {
        return Ok(None);
    }
    let mut out = BTreeMap::new();
    for line in fs::read_to_string(path)?.lines() {
        let mut f = line.split_whitespace();
        if let (Some(q), Some(m)) = (f.next(), f.next()) {
            out.insert(q.to_string(), m.to_string());
        }
    }
    Ok(Some(out))
}

/// Score every method on every annotated query of a dataset.
pub fn evaluate(dataset: &Path, artifacts: &Artifacts, methods: &[EvalMethod], x_values: &[f64]) -> Result<MetricsReport> {
    if methods.is_empty() {
        return Err(Error::EmptyInput("no methods to evaluate"));
    }
    let gt_path = dataset.join("gt.txt");
    if !gt_path.is_file() {
        return Err(Error::NoGroundTruth);
    }
    let gt: BTreeMap<String, Vec<Rect>> = load_ground_truth(&gt_path)?
        .into_iter()
        .map(|g| (g.query_id, g.change_boxes))
        .collect();
    let queries = dataset_queries(dataset)?;
    let mut channels: Vec<Channel> = methods
        .iter()
        .filter_map(|m| match m {
            EvalMethod::Channels(m) => Some(m.0.clone()),
            EvalMethod::Oracle => None,
        })
        .flatten()
        .collect();
    channels.sort();
    channels.dedup();

    let reader = ImageReader::new();
    let cell_size = artifacts.config.cell_size;
    // per query: localized map stem and one grid per method
    let per_query: Vec<(String, Vec<CellGrid>)> = par::map(&queries, |q| -> Result<_> {
        let (img, props, mask) = load_query(q, &reader)?;
        let det = artifacts.detect(&img, &props, mask.as_ref(), &channels, &reader)?;
        let boxes = gt.get(&q.id).map_or(&[][..], Vec::as_slice);
        let grids = methods
            .iter()
            .map(|m| match m {
                EvalMethod::Channels(m) => det.method_cells(m),
                EvalMethod::Oracle => Ok(oracle_cells(&crate::imaging::cells_of(img.dims(), cell_size)?, boxes)),
            })
            .collect::<Result<_>>()?;
        Ok((artifacts.map_stem(det.localized).unwrap_or_default(), grids))
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let empty: Vec<Rect> = Vec::new();
    let boxes: Vec<&[Rect]> = queries
        .iter()
        .map(|q| gt.get(&q.id).unwrap_or(&empty).as_slice())
        .collect();
    let objects: usize = boxes.iter().map(|b| b.len()).sum();
    if objects == 0 {
        return Err(Error::NoGroundTruth);
    }

    let criterion = artifacts.config.criterion;
    let mut rows = Vec::with_capacity(methods.len());
    for (mi, m) in methods.iter().enumerate() {
        let items: Vec<(&CellGrid, &[Rect])> = per_query.iter().zip(&boxes).map(|((_, g), b)| (&g[mi], *b)).collect();
        let accuracy = x_values
            .iter()
            .map(|&x| top_x_accuracy(&items, x, criterion))
            .collect::<Result<Vec<_>>>()?;
        rows.push(MethodRow {
            method: m.to_string(),
            accuracy,
            solo_leader: 0.0,
            co_leader: 0.0,
        });
    }
    if methods.len() >= 2 {
        let grades: Vec<Vec<Option<f64>>> = per_query
            .iter()
            .zip(&boxes)
            .filter(|(_, b)| !b.is_empty())
            .map(|((_, g), b)| g.iter().map(|grid| query_grade(grid, b, x_values, criterion)).collect())
            .collect();
        for (row, s) in rows.iter_mut().zip(leader_stats(&grades)?) {
            row.solo_leader = s.solo;
            row.co_leader = s.co;
        }
    }

    let localization_top1 = read_scenes(&dataset.join("scenes.txt"))?.map(|scenes| {
        let hits = queries
            .iter()
            .zip(&per_query)
            .filter(|(q, (loc, _))| scenes.get(&q.id) == Some(loc))
            .count();
        hits as f64 / queries.len().max(1) as f64
    });

    Ok(MetricsReport {
        queries: queries.len(),
        objects,
        x_values: x_values.to_vec(),
        criterion,
        methods: rows,
        localization_top1,
    })
}

/// Write a generated dataset in the standard layout.
pub fn write_dataset(ds: &SynthDataset, dir: &Path) -> Result<()> {
    for sub in ["map", "queries", "proposals", "masks"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    for (i, img) in ds.map.iter().enumerate() {
        img.save_png(dir.join("map").join(format!("m{i:03}.png")))?;
    }
    let mut gt = Vec::new();
    let mut scenes = String::new();
    for q in &ds.queries {
        q.image.save_png(dir.join("queries").join(format!("{}.png", q.name)))?;
        q.mask.save_png(dir.join("masks").join(format!("{}.png", q.name)))?;
        let props: String = q
            .proposals
            .iter()
            .map(|r| format!("{} {} {} {} {} 1.0\n", q.name, r.x, r.y, r.w, r.h))
            .collect();
        fs::write(dir.join("proposals").join(format!("{}.txt", q.name)), props)?;
        gt.push(crate::eval::GroundTruth {
            query_id: q.name.clone(),
            change_boxes: q.changes.clone(),
        });
        scenes.push_str(&format!("{} m{:03}\n", q.name, q.scene));
    }
    fs::write(dir.join("gt.txt"), format_ground_truth(&gt))?;
    fs::write(dir.join("scenes.txt"), scenes)?;
    Ok(())
}
