use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::blur::{LaplacianKind, DEFAULT_THRESHOLD};
use crate::deconv::{parse_dims, DEFAULT_ITERATIONS};
use crate::detector::{DetectorSource, PerturbationSpec, DEFAULT_TIMEOUT};
use crate::eval::MatchMode;
use crate::exec::default_workers;

use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Detect on the input images as they are.
    #[default]
    Baseline,
    /// Deconvolve every image before detection.
    DeblurAll,
    /// Deconvolve only images classified as blurry.
    DeblurBlurryOnly,
}

impl std::str::FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "baseline" => Ok(RunMode::Baseline),
            "deblur_all" | "all" => Ok(RunMode::DeblurAll),
            "deblur_blurry_only" | "blurry_only" | "blurry" => Ok(RunMode::DeblurBlurryOnly),
            other => Err(format!(
                "unknown mode `{other}` (expected baseline, deblur-all or deblur-blurry-only)"
            )),
        }
    }
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunMode::Baseline => "baseline",
            RunMode::DeblurAll => "deblur_all",
            RunMode::DeblurBlurryOnly => "deblur_blurry_only",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset_dir: PathBuf,
    pub detector: DetectorSource,
    pub mode: RunMode,
    /// `(rows, cols)` of the starting PSF.
    pub psf_dims: Option<(usize, usize)>,
    /// Grid used by `sweep` when no explicit grid is passed.
    pub sweep_grid: Vec<(usize, usize)>,
    pub threshold: f64,
    pub iterations: usize,
    pub match_mode: MatchMode,
    pub output_dir: Option<PathBuf>,
    pub parallelism: usize,
    pub symmetric_psf: bool,
    pub laplacian: LaplacianKind,
    pub timeout_secs: u64,
    pub cache_dir: Option<PathBuf>,
    /// Detector failures tolerated before the run counts as failed.
    pub failure_budget: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset_dir: PathBuf::from("."),
            detector: DetectorSource::Mock(PerturbationSpec::identity()),
            mode: RunMode::default(),
            psf_dims: None,
            sweep_grid: square_grid(3),
            threshold: DEFAULT_THRESHOLD,
            iterations: DEFAULT_ITERATIONS,
            match_mode: MatchMode::default(),
            output_dir: None,
            parallelism: default_workers(),
            symmetric_psf: false,
            laplacian: LaplacianKind::default(),
            timeout_secs: DEFAULT_TIMEOUT.as_secs(),
            cache_dir: None,
            failure_budget: 0,
        }
    }
}

/// All `(x, y)` with `1 <= x, y <= n`, row-major.
pub fn square_grid(n: usize) -> Vec<(usize, usize)> {
    (1..=n).flat_map(|x| (1..=n).map(move |y| (x, y))).collect()
}

/// Parses `3` (the square grid up to 3) or a list like `1x1,1x3,2x2`.
pub fn parse_grid(s: &str) -> Result<Vec<(usize, usize)>, String> {
    let s = s.trim();
    if let Ok(n) = s.parse::<usize>() {
        if !(1..=crate::deconv::MAX_PSF_DIM).contains(&n) {
            return Err(format!("grid size {n} outside 1..=7"));
        }
        return Ok(square_grid(n));
    }
    s.split([';', ' '])
        .filter(|t| !t.is_empty())
        .flat_map(|t| t.split(',').collect::<Vec<_>>())
        .filter(|t| !t.is_empty())
        .map(parse_dims)
        .collect()
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(format!("expected a boolean, got `{other}`")),
    }
}

fn optional_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty() && v != "none").then(|| PathBuf::from(v))
}

impl RunConfig {
    /// Sets one field by its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        let v = value.trim();
        let err = |msg: String| PipelineError::Config(format!("{key}: {msg}"));
        match key.trim() {
            "dataset_dir" => self.dataset_dir = PathBuf::from(v),
            "detector" => self.detector = DetectorSource::parse(v).map_err(|e| err(e.to_string()))?,
            "mode" => self.mode = v.parse().map_err(err)?,
            "psf" | "psf_dims" => {
                self.psf_dims = if v.is_empty() || v == "none" {
                    None
                } else {
                    Some(parse_dims(v).map_err(err)?)
                }
            }
            "grid" | "sweep_grid" => self.sweep_grid = parse_grid(v).map_err(err)?,
            "threshold" => {
                self.threshold = v
                    .parse()
                    .map_err(|_| err(format!("invalid number `{v}`")))?
            }
            "iterations" | "iters" => {
                self.iterations = v
                    .parse()
                    .map_err(|_| err(format!("invalid count `{v}`")))?
            }
            "match_mode" => self.match_mode = v.parse().map_err(err)?,
            "output_dir" => self.output_dir = optional_path(v),
            "parallelism" => {
                self.parallelism = v
                    .parse()
                    .map_err(|_| err(format!("invalid count `{v}`")))?
            }
            "symmetric_psf" => self.symmetric_psf = parse_bool(v).map_err(err)?,
            "laplacian" => self.laplacian = v.parse().map_err(err)?,
            "timeout_secs" => {
                self.timeout_secs = v
                    .parse()
                    .map_err(|_| err(format!("invalid count `{v}`")))?
            }
            "cache_dir" => self.cache_dir = optional_path(v),
            "failure_budget" => {
                self.failure_budget = v
                    .parse()
                    .map_err(|_| err(format!("invalid count `{v}`")))?
            }
            other => return Err(PipelineError::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file; `#` starts a comment. Values may be quoted.
    pub fn apply_file_text(&mut self, text: &str) -> Result<(), PipelineError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(a, _)| a).trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                PipelineError::Config(format!("config line {}: expected `key = value`", i + 1))
            })?;
            let v = v.trim();
            let v = v
                .strip_prefix('"')
                .and_then(|s| s.strip_suffix('"'))
                .unwrap_or(v);
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file_text(text: &str) -> Result<Self, PipelineError> {
        let mut c = Self::default();
        c.apply_file_text(text)?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(PipelineError::Config(format!(
                "threshold must be positive, got {}",
                self.threshold
            )));
        }
        if self.iterations == 0 {
            return Err(PipelineError::Config("iterations must be at least 1".into()));
        }
        if self.mode != RunMode::Baseline && self.psf_dims.is_none() {
            return Err(PipelineError::Config(format!(
                "mode {} needs psf dims (e.g. psf = 1x3)",
                self.mode
            )));
        }
        if self.timeout_secs == 0 {
            return Err(PipelineError::Config("timeout_secs must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_round_trip() {
        let text = r#"
            # comment
            dataset_dir = /data/icdar
            detector = "cmd:python shim.py --input {input_image} --output {output_file}"
            mode = deblur-blurry-only
            psf = 1x3
            threshold = 100
            iterations = 12   # trailing comment
            match_mode = best-match
            parallelism = 4
            symmetric_psf = yes
            laplacian = 8
            failure_budget = 5
        "#;
        let c = RunConfig::from_file_text(text).unwrap();
        assert_eq!(c.dataset_dir, PathBuf::from("/data/icdar"));
        assert!(matches!(c.detector, DetectorSource::ExternalCommand(_)));
        assert_eq!(c.mode, RunMode::DeblurBlurryOnly);
        assert_eq!(c.psf_dims, Some((1, 3)));
        assert_eq!(c.iterations, 12);
        assert_eq!(c.match_mode, MatchMode::BestMatch);
        assert_eq!(c.parallelism, 4);
        assert!(c.symmetric_psf);
        assert_eq!(c.laplacian, LaplacianKind::EightNeighbor);
        assert_eq!(c.failure_budget, 5);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::from_file_text("colour = red").is_err());
        assert!(RunConfig::from_file_text("threshold = abc").is_err());
        assert!(RunConfig::from_file_text("just a line").is_err());
        assert!(RunConfig::from_file_text("psf = 9x1").is_err());
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::default();
        c.validate().unwrap();
        c.mode = RunMode::DeblurAll;
        assert!(c.validate().is_err());
        c.psf_dims = Some((1, 2));
        c.validate().unwrap();
        c.threshold = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn grids() {
        assert_eq!(parse_grid("3").unwrap().len(), 9);
        assert_eq!(parse_grid("1x1,1x3;2x2").unwrap(), vec![(1, 1), (1, 3), (2, 2)]);
        assert!(parse_grid("8").is_err());
        assert_eq!(square_grid(2), vec![(1, 1), (1, 2), (2, 1), (2, 2)]);
    }
}
