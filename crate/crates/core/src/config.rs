//! Plain-text `key = value` configuration holding every tunable default.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::anomaly::AdParams;
use crate::error::{Error, Result};
use crate::eval::Criterion;
use crate::fault::FdConfig;
use crate::features::{FeatureParams, DEFAULT_RADIUS};
use crate::localization::ransac::RansacParams;
use crate::localization::{QueryParams, StageFlags};

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub fast_threshold: u8,
    pub max_keypoints: usize,
    pub vocab_radius: u32,
    /// Template sets used for map documents.
    pub map_templates: String,
    /// Template sets used for query ROIs.
    pub query_templates: String,
    /// Add per-image proposal boxes to the query ROIs when available.
    pub use_proposals: bool,
    pub y: usize,
    pub ratio_test: bool,
    pub geometric: bool,
    pub islands: bool,
    pub ratio: f64,
    pub top_v: usize,
    pub ransac_radius: f64,
    pub ransac_iterations: usize,
    pub island_gap: u32,
    pub k_places: usize,
    pub ad_components: usize,
    pub ad_c: f64,
    pub ad_working_side: usize,
    pub ad_sigma_floor: f64,
    /// Binary decision threshold on normalized RE; ranked evaluation does
    /// not use it.
    pub re_threshold: f64,
    pub pc_radius: usize,
    pub cell_size: usize,
    pub criterion: Criterion,
    pub x_values: Vec<f64>,
}

impl Default for Config {
    fn default() -> Self {
        let q = QueryParams::default();
        let ad = AdParams::default();
        let f = FeatureParams::default();
        Self {
            seed: 0x5eed,
            fast_threshold: f.fast_threshold,
            max_keypoints: f.max_keypoints,
            vocab_radius: DEFAULT_RADIUS,
            map_templates: "J,B,H,V,C,G,W,F,E".into(),
            query_templates: "J,B,H,V,C,G,W,F,E".into(),
            use_proposals: true,
            y: FdConfig::default().y,
            ratio_test: q.stages.ratio_test,
            geometric: q.stages.geometric,
            islands: q.stages.islands,
            ratio: q.ratio,
            top_v: q.top_v,
            ransac_radius: q.ransac.inlier_radius,
            ransac_iterations: q.ransac.iterations,
            island_gap: q.island_gap,
            k_places: 10,
            ad_components: 4,
            ad_c: ad.c,
            ad_working_side: ad.working_side,
            ad_sigma_floor: ad.sigma_floor,
            re_threshold: 3.0,
            pc_radius: crate::pairwise::DEFAULT_SPLAT_RADIUS,
            cell_size: 10,
            criterion: Criterion::Coverage,
            x_values: crate::eval::STANDARD_X.to_vec(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, v)?,
            "fast_threshold" => self.fast_threshold = parse(key, v)?,
            "max_keypoints" => self.max_keypoints = parse(key, v)?,
            "vocab_radius" => self.vocab_radius = parse(key, v)?,
            "map_templates" => self.map_templates = v.to_string(),
            "query_templates" => self.query_templates = v.to_string(),
            "use_proposals" => self.use_proposals = parse(key, v)?,
            "y" => self.y = parse(key, v)?,
            "ratio_test" => self.ratio_test = parse(key, v)?,
            "geometric" => self.geometric = parse(key, v)?,
            "islands" => self.islands = parse(key, v)?,
            "ratio" => self.ratio = parse(key, v)?,
            "top_v" => self.top_v = parse(key, v)?,
            "ransac_radius" => self.ransac_radius = parse(key, v)?,
            "ransac_iterations" => self.ransac_iterations = parse(key, v)?,
            "island_gap" => self.island_gap = parse(key, v)?,
            "k_places" => self.k_places = parse(key, v)?,
            "ad_components" => self.ad_components = parse(key, v)?,
            "ad_c" => self.ad_c = parse(key, v)?,
            "ad_working_side" => self.ad_working_side = parse(key, v)?,
            "ad_sigma_floor" => self.ad_sigma_floor = parse(key, v)?,
            "re_threshold" => self.re_threshold = parse(key, v)?,
            "pc_radius" => self.pc_radius = parse(key, v)?,
            "cell_size" => self.cell_size = parse(key, v)?,
            "criterion" => self.criterion = v.parse()?,
            "x_values" => self.x_values = parse_list(key, v)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.y == 0 {
            return bad("y must be at least 1");
        }
        if self.cell_size == 0 {
            return bad("cell_size must be positive");
        }
        if self.k_places == 0 {
            return bad("k_places must be at least 1");
        }
        if self.ad_c.is_nan() || self.ad_c <= 0.0 {
            return bad("ad_c must be positive");
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return bad("ratio must be in (0, 1]");
        }
        if self.x_values.is_empty() || self.x_values.iter().any(|x| !(*x > 0.0 && *x <= 100.0)) {
            return bad("x_values must lie in (0, 100]");
        }
        crate::roi::parse_set_names(&self.map_templates)?;
        crate::roi::parse_set_names(&self.query_templates)?;
        Ok(())
    }

    /// Every key with its effective value, one `key = value` per line.
    pub fn effective(&self) -> String {
        let criterion = match self.criterion {
            Criterion::Coverage => "coverage",
            Criterion::Iou => "iou",
        };
        let xs: Vec<String> = self.x_values.iter().map(|x| x.to_string()).collect();
        let rows: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("fast_threshold", self.fast_threshold.to_string()),
            ("max_keypoints", self.max_keypoints.to_string()),
            ("vocab_radius", self.vocab_radius.to_string()),
            ("map_templates", self.map_templates.clone()),
            ("query_templates", self.query_templates.clone()),
            ("use_proposals", self.use_proposals.to_string()),
            ("y", self.y.to_string()),
            ("ratio_test", self.ratio_test.to_string()),
            ("geometric", self.geometric.to_string()),
            ("islands", self.islands.to_string()),
            ("ratio", self.ratio.to_string()),
            ("top_v", self.top_v.to_string()),
            ("ransac_radius", self.ransac_radius.to_string()),
            ("ransac_iterations", self.ransac_iterations.to_string()),
            ("island_gap", self.island_gap.to_string()),
            ("k_places", self.k_places.to_string()),
            ("ad_components", self.ad_components.to_string()),
            ("ad_c", self.ad_c.to_string()),
            ("ad_working_side", self.ad_working_side.to_string()),
            ("ad_sigma_floor", self.ad_sigma_floor.to_string()),
            ("re_threshold", self.re_threshold.to_string()),
            ("pc_radius", self.pc_radius.to_string()),
            ("cell_size", self.cell_size.to_string()),
            ("criterion", criterion.to_string()),
            ("x_values", xs.join(",")),
        ];
        rows.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of the effective dump, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.effective().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn feature_params(&self) -> FeatureParams {
        FeatureParams {
            fast_threshold: self.fast_threshold,
            max_keypoints: self.max_keypoints,
        }
    }

    pub fn query_params(&self) -> QueryParams {
        QueryParams {
            stages: StageFlags {
                ratio_test: self.ratio_test,
                geometric: self.geometric,
                islands: self.islands,
            },
            ratio: self.ratio,
            top_v: self.top_v,
            ransac: RansacParams {
                inlier_radius: self.ransac_radius,
                iterations: self.ransac_iterations,
                seed: self.seed,
            },
            island_gap: self.island_gap,
        }
    }

    pub fn fd_config(&self) -> FdConfig {
        FdConfig {
            y: self.y,
            query: self.query_params(),
        }
    }

    pub fn ad_params(&self) -> AdParams {
        AdParams {
            working_side: self.ad_working_side,
            c: self.ad_c,
            sigma_floor: self.ad_sigma_floor,
        }
    }
}
