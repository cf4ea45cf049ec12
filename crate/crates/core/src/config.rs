//! Pipeline configuration and its flat `section.key = value` text format.
//!
//! Lines starting with `#` and blank lines are ignored. Every key is
//! optional; missing keys keep their defaults. Optional values use `none`.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::confidence::ConfidenceParams;
use crate::error::{Error, Result};
use crate::features::WindowSchedule;
use crate::forest::{FeatureSubset, ForestConfig};
use crate::seeds::{SeedMode, SeedPolicy};
use crate::walker::WalkerParams;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub data_root: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub model_path: Option<PathBuf>,
    /// Millimetres per Cartesian pixel; Hausdorff distances are reported in
    /// mm when set and in pixels otherwise.
    pub pixel_spacing_mm: Option<f64>,
    /// Catheter centre override `(x, y)`; the image centre otherwise.
    pub catheter_center: Option<(f64, f64)>,
    pub n_scanlines: usize,
    pub n_depth: usize,
    pub schedule: WindowSchedule,
    pub nakagami_features: bool,
    pub confidence: ConfidenceParams,
    pub forest: ForestConfig,
    pub seeds: SeedPolicy,
    pub walker: WalkerParams,
    pub topology: bool,
    pub rng_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            data_root: None,
            output_dir: None,
            model_path: None,
            pixel_spacing_mm: None,
            catheter_center: None,
            n_scanlines: 256,
            n_depth: 256,
            schedule: WindowSchedule::default(),
            nakagami_features: false,
            confidence: ConfidenceParams::default(),
            forest: ForestConfig::default(),
            seeds: SeedPolicy::default(),
            walker: WalkerParams::default(),
            topology: true,
            rng_seed: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_opt<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn show_opt<T: ToString>(value: &Option<T>) -> String {
    value.as_ref().map_or_else(|| "none".to_string(), T::to_string)
}

fn show_path(value: &Option<PathBuf>) -> String {
    value.as_ref().map_or_else(|| "none".to_string(), |p| p.display().to_string())
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.confidence.validate()?;
        self.forest.validate()?;
        self.seeds.validate()?;
        self.walker.validate()?;
        if let Some(s) = self.pixel_spacing_mm {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Config(format!("pixel spacing {s} must be positive")));
            }
        }
        if self.n_scanlines < crate::data::MIN_SCANLINES || self.n_depth < crate::data::MIN_DEPTH {
            return Err(Error::Config(format!(
                "polar grid {}x{} below the minimum",
                self.n_scanlines, self.n_depth
            )));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |key: &str, value: String| {
            let _ = writeln!(out, "{key} = {value}");
        };
        put("paths.data_root", show_path(&self.data_root));
        put("paths.output_dir", show_path(&self.output_dir));
        put("paths.model", show_path(&self.model_path));
        put("frame.pixel_spacing_mm", show_opt(&self.pixel_spacing_mm));
        put("frame.center_x", show_opt(&self.catheter_center.map(|c| c.0)));
        put("frame.center_y", show_opt(&self.catheter_center.map(|c| c.1)));
        put("polar.n_scanlines", self.n_scanlines.to_string());
        put("polar.n_depth", self.n_depth.to_string());
        put("features.windows", self.schedule.to_text());
        put("features.nakagami", self.nakagami_features.to_string());
        put("confidence.alpha", self.confidence.alpha.to_string());
        put("confidence.beta", self.confidence.beta.to_string());
        put("confidence.gamma", self.confidence.gamma.to_string());
        put("confidence.tolerance", self.confidence.tolerance.to_string());
        put("forest.n_trees", self.forest.n_trees.to_string());
        put("forest.min_leaf", self.forest.min_leaf.to_string());
        put("forest.max_depth", show_opt(&self.forest.max_depth));
        put("forest.percent_to_sample", self.forest.percent_to_sample.to_string());
        put("forest.samples_per_class", self.forest.samples_per_class.to_string());
        put("forest.bootstrap", self.forest.bootstrap.to_string());
        let subset = match self.forest.feature_subset {
            FeatureSubset::Sqrt => "sqrt",
            FeatureSubset::All => "all",
        };
        put("forest.feature_subset", subset.to_string());
        put("forest.rng_seed", self.forest.rng_seed.to_string());
        put("seeds.mode", self.seeds.mode.to_string());
        put("seeds.threshold", self.seeds.threshold.to_string());
        put("seeds.erosion_radius", self.seeds.erosion_radius.to_string());
        put("seeds.relax_step", self.seeds.relax_step.to_string());
        put("seeds.min_threshold", self.seeds.min_threshold.to_string());
        put("walker.beta", self.walker.beta.to_string());
        put("walker.epsilon", self.walker.epsilon.to_string());
        put("walker.tolerance", self.walker.tolerance.to_string());
        put("walker.topology", self.topology.to_string());
        put("run.rng_seed", self.rng_seed.to_string());
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        let (mut cx, mut cy) = (None, None);
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(key.trim(), value.trim(), &mut cx, &mut cy)?;
        }
        cfg.catheter_center = match (cx, cy) {
            (Some(x), Some(y)) => Some((x, y)),
            (None, None) => None,
            _ => return Err(Error::Config("frame.center_x and frame.center_y go together".into())),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str, cx: &mut Option<f64>, cy: &mut Option<f64>) -> Result<()> {
        let path = |v: &str| (v != "none").then(|| PathBuf::from(v));
        match key {
            "paths.data_root" => self.data_root = path(v),
            "paths.output_dir" => self.output_dir = path(v),
            "paths.model" => self.model_path = path(v),
            "frame.pixel_spacing_mm" => self.pixel_spacing_mm = parse_opt(key, v)?,
            "frame.center_x" => *cx = parse_opt(key, v)?,
            "frame.center_y" => *cy = parse_opt(key, v)?,
            "polar.n_scanlines" => self.n_scanlines = parse(key, v)?,
            "polar.n_depth" => self.n_depth = parse(key, v)?,
            "features.windows" => self.schedule = WindowSchedule::parse(v)?,
            "features.nakagami" => self.nakagami_features = parse(key, v)?,
            "confidence.alpha" => self.confidence.alpha = parse(key, v)?,
            "confidence.beta" => self.confidence.beta = parse(key, v)?,
            "confidence.gamma" => self.confidence.gamma = parse(key, v)?,
            "confidence.tolerance" => self.confidence.tolerance = parse(key, v)?,
            "forest.n_trees" => self.forest.n_trees = parse(key, v)?,
            "forest.min_leaf" => self.forest.min_leaf = parse(key, v)?,
            "forest.max_depth" => self.forest.max_depth = parse_opt(key, v)?,
            "forest.percent_to_sample" => self.forest.percent_to_sample = parse(key, v)?,
            "forest.samples_per_class" => self.forest.samples_per_class = parse(key, v)?,
            "forest.bootstrap" => self.forest.bootstrap = parse(key, v)?,
            "forest.feature_subset" => {
                self.forest.feature_subset = match v {
                    "sqrt" => FeatureSubset::Sqrt,
                    "all" => FeatureSubset::All,
                    _ => return Err(Error::Config(format!("{key}: expected sqrt or all"))),
                }
            }
            "forest.rng_seed" => self.forest.rng_seed = parse(key, v)?,
            "seeds.mode" => self.seeds.mode = SeedMode::from_str(v)?,
            "seeds.threshold" => self.seeds.threshold = parse(key, v)?,
            "seeds.erosion_radius" => self.seeds.erosion_radius = parse(key, v)?,
            "seeds.relax_step" => self.seeds.relax_step = parse(key, v)?,
            "seeds.min_threshold" => self.seeds.min_threshold = parse(key, v)?,
            "walker.beta" => self.walker.beta = parse(key, v)?,
            "walker.epsilon" => self.walker.epsilon = parse(key, v)?,
            "walker.tolerance" => self.walker.tolerance = parse(key, v)?,
            "walker.topology" => self.topology = parse(key, v)?,
            "run.rng_seed" => self.rng_seed = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }
}
