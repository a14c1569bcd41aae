//! Experiment configuration documents.
//!
//! An experiment is a JSON file with `schema_version` 1. The map is either
//! inline or a path relative to the configuration file. Every random draw
//! derives from the top-level `seed`.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Matrix4};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::fusion_filters::{FilterConfig, FilterMode, DEFAULT_CHI2_THRESHOLD, DEFAULT_P0, DEFAULT_Q0, DEFAULT_R0};
use crate::sensor_simulator::{
    generate_truth, synthesize_log, CameraModel, MapSpec, SensorLog, SensorNoiseSpec, SensorRates,
    SimulatedTruth, SpeedProfile,
};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Chi-square threshold that also accepts `"inf"` (JSON has no infinity).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold(pub f64);

impl Serialize for Threshold {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Threshold(v)),
            Raw::Text(s) if matches!(s.as_str(), "inf" | "infinity" | "+inf") => Ok(Threshold(f64::INFINITY)),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("invalid threshold `{s}`"))),
        }
    }
}

/// One filter to run. Omitted fields take the default hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub mode: FilterMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q0: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi2_threshold: Option<Threshold>,
}

impl FilterSpec {
    pub fn new(mode: FilterMode) -> Self {
        FilterSpec {
            mode,
            q0: None,
            r0: None,
            p0: None,
            alpha_q: None,
            alpha_r: None,
            chi2_threshold: None,
        }
    }

    /// Fills in every default so the spec documents the exact run.
    pub fn resolved(&self) -> FilterSpec {
        let cfg = FilterConfig::with_mode(self.mode);
        FilterSpec {
            mode: self.mode,
            q0: Some(self.q0.unwrap_or(DEFAULT_Q0)),
            r0: Some(self.r0.unwrap_or(DEFAULT_R0)),
            p0: Some(self.p0.unwrap_or(DEFAULT_P0)),
            alpha_q: Some(self.alpha_q.unwrap_or(cfg.alpha_q)),
            alpha_r: Some(self.alpha_r.unwrap_or(cfg.alpha_r)),
            chi2_threshold: Some(self.chi2_threshold.unwrap_or(Threshold(cfg.chi2_threshold))),
        }
    }

    pub fn to_config(&self, index: usize) -> Result<FilterConfig> {
        let r = self.resolved();
        let cfg = FilterConfig {
            q0: Matrix4::from_diagonal(&r.q0.unwrap().into()),
            r0: Matrix3::from_diagonal(&r.r0.unwrap().into()),
            p0: Matrix4::from_diagonal(&r.p0.unwrap().into()),
            alpha_q: r.alpha_q.unwrap(),
            alpha_r: r.alpha_r.unwrap(),
            chi2_threshold: r.chi2_threshold.unwrap().0,
            mode: self.mode,
        };
        cfg.validate().map_err(|e| match e {
            Error::Config { field, reason } => Error::config(format!("filters[{index}].{field}"), reason),
            other => other,
        })?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MapSource {
    Path(PathBuf),
    Inline(Box<MapSpec>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_sweep_mode")]
    pub mode: FilterMode,
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
}

fn default_sweep_mode() -> FilterMode {
    FilterMode::Aekf
}
fn default_grid_step() -> f64 {
    0.1
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            mode: default_sweep_mode(),
            grid_step: default_grid_step(),
        }
    }
}

fn default_laps() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    pub map: MapSource,
    #[serde(default)]
    pub noise: SensorNoiseSpec,
    #[serde(default)]
    pub rates: SensorRates,
    #[serde(default)]
    pub camera: CameraModel,
    pub speed: SpeedProfile,
    #[serde(default = "default_laps")]
    pub laps: usize,
    pub filters: Vec<FilterSpec>,
    /// Pair estimates with the truth by time (plus this offset) instead of
    /// by nearest point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_offset: Option<f64>,
    #[serde(default)]
    pub sweep: SweepSpec,
}

/// A validated configuration with its map loaded.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub map: MapSpec,
}

impl ExperimentConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Experiment> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config = ExperimentConfig::from_json(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve(base)
    }

    /// Loads the map (relative to `base`) and validates everything.
    pub fn resolve(mut self, base: &Path) -> Result<Experiment> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        let map = match &self.map {
            MapSource::Inline(m) => (**m).clone(),
            MapSource::Path(p) => {
                let full = base.join(p);
                let text = std::fs::read_to_string(&full).map_err(|e| Error::io(&full, e))?;
                serde_json::from_str(&text).map_err(|source| Error::Json { path: full, source })?
            }
        };
        map.validate()?;
        self.noise.seed = self.seed;
        self.noise.validate()?;
        self.rates.validate()?;
        self.camera.validate()?;
        self.speed.validate()?;
        if self.laps == 0 {
            return Err(Error::config("laps", "must be >= 1"));
        }
        if self.filters.is_empty() {
            return Err(Error::config("filters", "at least one filter is required"));
        }
        for (i, f) in self.filters.iter().enumerate() {
            f.to_config(i)?;
            if self.filters[..i].iter().any(|g| g.mode == f.mode) {
                // outputs are named after the mode
                return Err(Error::config(format!("filters[{i}].mode"), format!("`{}` is listed twice", f.mode)));
            }
        }
        if !self.sweep.mode.is_adaptive() {
            return Err(Error::config("sweep.mode", "must be an adaptive mode"));
        }
        crate::evaluation::alpha_grid(self.sweep.grid_step)
            .map_err(|_| Error::config("sweep.grid_step", "must lie in (0, 1] and divide 1 evenly"))?;
        if let Some(off) = self.time_offset {
            if !off.is_finite() {
                return Err(Error::config("time_offset", "must be finite"));
            }
        }
        Ok(Experiment { config: self, map })
    }
}

impl Experiment {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.config.seed = seed;
        self.config.noise.seed = seed;
        self
    }

    pub fn filter_configs(&self) -> Result<Vec<FilterConfig>> {
        self.config
            .filters
            .iter()
            .enumerate()
            .map(|(i, f)| f.to_config(i))
            .collect()
    }

    pub fn sweep_base(&self) -> FilterConfig {
        // reuse the noise settings of the first filter of the sweep mode, if any
        let spec = self
            .config
            .filters
            .iter()
            .find(|f| f.mode == self.config.sweep.mode)
            .cloned()
            .unwrap_or_else(|| FilterSpec::new(self.config.sweep.mode));
        let mut cfg = spec.to_config(0).expect("validated in resolve");
        if !cfg.mode.is_gated() {
            cfg.chi2_threshold = f64::INFINITY;
        } else if spec.chi2_threshold.is_none() {
            cfg.chi2_threshold = DEFAULT_CHI2_THRESHOLD;
        }
        cfg
    }

    pub fn simulate(&self) -> Result<(SimulatedTruth, SensorLog)> {
        let c = &self.config;
        let track = self.map.track.repeated(c.laps);
        let truth = generate_truth(&track, &c.speed, c.rates.dt())?;
        let log = synthesize_log(&truth, &self.map, &c.camera, &c.noise, &c.rates)?;
        Ok((truth, log))
    }

    /// The configuration with the map inlined and every default written out.
    pub fn resolved_json(&self) -> String {
        let mut c = self.config.clone();
        c.map = MapSource::Inline(Box::new(self.map.clone()));
        c.filters = c.filters.iter().map(FilterSpec::resolved).collect();
        serde_json::to_string_pretty(&c).expect("config serializes") + "\n"
    }

    pub fn association(&self) -> crate::evaluation::Association {
        match self.config.time_offset {
            Some(off) => crate::evaluation::Association::TimeOffset(off),
            None => crate::evaluation::Association::Nearest,
        }
    }
}
