//! End-to-end runs: classify, conditionally deblur, detect, score, report.

mod config;
mod dataset;
mod evaluate;
mod report;

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use thiserror::Error;

use crate::blur::{verdict, BlurLabel, FocusVerdict};
use crate::deconv::{blind_deconvolve_with, init_psf, DeconvError, DeconvOptions};
use crate::detector::{DetectionCache, Detector};
use crate::eval::{aggregate, score_image_detailed, ImageAnnotations};
use crate::exec::{with_workers, Exec};
use crate::raster::Raster;

pub use config::{parse_grid, square_grid, RunConfig, RunMode};
pub use evaluate::{evaluate_dirs, EvaluatedImage, EvaluationReport};
pub use dataset::{discover, load_dataset, DatasetEntry, LoadedDataset, PreparedImage};
pub use report::{
    pct, render_ranking, report_ranking, ConfigEcho, ImageRow, InputHash, Manifest, RankingEntry,
    RunReport, RuntimeInfo, SweepRow, SweepTable, PER_IMAGE_CSV_HEADER,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no usable image/ground-truth pairs in {0}")]
    EmptyDataset(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("deconvolution of {image_id} failed: {source}")]
    Deconvolution {
        image_id: String,
        source: DeconvError,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Process exit code for this error: 1 for configuration, 2 for data.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            _ => 2,
        }
    }
}

/// Text recorded in the manifest describing what the detector is fed.
const DETECTOR_INPUT: &str = "grayscale raster (restored where deconvolved), 8-bit PNG";

fn build_detector(config: &RunConfig) -> Result<Detector, PipelineError> {
    let mut detector = Detector::new(config.detector.clone())
        .with_timeout(Duration::from_secs(config.timeout_secs));
    if config.detector.reads_pixels() {
        let cache = match &config.cache_dir {
            Some(dir) => DetectionCache::on_disk(dir).map_err(|e| PipelineError::io(dir, e))?,
            None => DetectionCache::in_memory(),
        };
        detector = detector.with_cache(cache);
    }
    Ok(detector)
}

/// Runs the configured pipeline over the dataset and persists the report
/// when an output directory is set.
pub fn run(config: &RunConfig) -> Result<RunReport, PipelineError> {
    config.validate()?;
    let started = now();
    with_workers(config.parallelism, || {
        let data = load_dataset(config)?;
        let detector = build_detector(config)?;
        let report = run_loaded(config, &data, &detector, started)?;
        if let Some(dir) = &config.output_dir {
            report.write_to(dir)?;
        }
        Ok(report)
    })
}

/// One pass over an already loaded dataset.
pub fn run_loaded(
    config: &RunConfig,
    data: &LoadedDataset,
    detector: &Detector,
    started_at: String,
) -> Result<RunReport, PipelineError> {
    config.validate()?;
    let exec = Exec::for_workers(config.parallelism);
    let cache_hits = AtomicUsize::new(0);
    let rows: Vec<Result<ImageRow, PipelineError>> = exec.map(&data.images, |img| {
        process_image(config, img, detector, exec, &cache_hits)
    });
    let per_image = rows.into_iter().collect::<Result<Vec<_>, _>>()?;

    let tallies: Vec<_> = per_image.iter().map(|r| r.scores).collect();
    let aggregate = aggregate(&tallies).map_err(|_| {
        PipelineError::EmptyDataset(config.dataset_dir.display().to_string())
    })?;
    let detector_failures = per_image.iter().filter(|r| r.detector_error.is_some()).count();

    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: echo(config),
        inputs: data
            .images
            .iter()
            .map(|i| InputHash {
                image_id: i.image_id.clone(),
                image_sha256: i.image_sha256.clone(),
                gt_sha256: i.gt_sha256.clone(),
            })
            .collect(),
        warnings: data.warnings.clone(),
        detector_failures,
        runtime: Some(RuntimeInfo {
            started_at,
            finished_at: now(),
            parallelism: config.parallelism,
            output_dir: config.output_dir.as_ref().map(|p| p.display().to_string()),
            cache_hits: cache_hits.load(Ordering::Relaxed),
        }),
    };
    Ok(RunReport {
        per_image,
        aggregate,
        manifest,
    })
}

fn process_image(
    config: &RunConfig,
    img: &PreparedImage,
    detector: &Detector,
    exec: Exec,
    cache_hits: &AtomicUsize,
) -> Result<ImageRow, PipelineError> {
    let deblur = match config.mode {
        RunMode::Baseline => false,
        RunMode::DeblurAll => true,
        RunMode::DeblurBlurryOnly => img.verdict.label == BlurLabel::Blurry,
    };
    let (processed, psf_label, descriptor) = if deblur {
        let dims = config.psf_dims.expect("validated: deblurring modes carry psf dims");
        let (restored, descriptor) = restore(config, img, dims, exec)?;
        (restored, Some(format!("{}x{}", dims.0, dims.1)), descriptor)
    } else {
        (img.image.clone(), None, "none".to_string())
    };

    let (detections, detector_error) =
        match detector.detect(&img.image_id, &processed, Some(&img.ground_truth), &descriptor) {
            Ok(d) => {
                if d.from_cache {
                    cache_hits.fetch_add(1, Ordering::Relaxed);
                }
                (d.annotations, None)
            }
            Err(e) => {
                log::warn!("detector failed on {}: {e}", img.image_id);
                (ImageAnnotations::new(img.image_id.clone(), Vec::new()), Some(e.to_string()))
            }
        };
    let evaluation = score_image_detailed(&img.ground_truth, &detections, config.match_mode);
    Ok(ImageRow {
        image_id: img.image_id.clone(),
        measure: img.verdict.measure,
        label: img.verdict.label,
        psf: psf_label,
        scores: evaluation.scores,
        detections: detections.boxes.len(),
        ignored_detections: evaluation.ignored_detections.len(),
        detector_error,
    })
}

fn restore(
    config: &RunConfig,
    img: &PreparedImage,
    dims: (usize, usize),
    exec: Exec,
) -> Result<(Raster, String), PipelineError> {
    let wrap = |source| PipelineError::Deconvolution {
        image_id: img.image_id.clone(),
        source,
    };
    let psf0 = init_psf(dims.0, dims.1).map_err(wrap)?;
    let opts = DeconvOptions {
        iterations: config.iterations,
        symmetric: config.symmetric_psf,
        exec,
    };
    let result = blind_deconvolve_with(&img.image, &psf0, &opts).map_err(wrap)?;
    let descriptor = format!(
        "blind_rl psf={}x{} iters={} symmetric={}",
        dims.0, dims.1, config.iterations, config.symmetric_psf
    );
    Ok((result.restored, descriptor))
}

fn echo(config: &RunConfig) -> ConfigEcho {
    ConfigEcho {
        dataset_dir: config.dataset_dir.display().to_string(),
        detector: config.detector.describe(),
        mode: config.mode.to_string(),
        psf: config.psf_dims.map(|(x, y)| format!("{x}x{y}")),
        threshold: config.threshold,
        iterations: config.iterations,
        match_mode: config.match_mode.to_string(),
        symmetric_psf: config.symmetric_psf,
        laplacian: format!("{:?}", config.laplacian),
        timeout_secs: config.timeout_secs,
        failure_budget: config.failure_budget,
        detector_input: DETECTOR_INPUT.to_string(),
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

/// One run per PSF in `grid`, sharing the loaded dataset and the detector
/// cache. Rows come back sorted by h-mean with the best flagged.
pub fn sweep(config: &RunConfig, grid: &[(usize, usize)]) -> Result<SweepTable, PipelineError> {
    if grid.is_empty() {
        return Err(PipelineError::Config("sweep grid is empty".into()));
    }
    if config.mode == RunMode::Baseline {
        return Err(PipelineError::Config(
            "sweep needs a deblurring mode (deblur-all or deblur-blurry-only)".into(),
        ));
    }
    for (i, dims) in grid.iter().enumerate() {
        init_psf(dims.0, dims.1).map_err(|e| PipelineError::Config(e.to_string()))?;
        if grid[..i].contains(dims) {
            return Err(PipelineError::Config(format!(
                "PSF ({},{}) repeated in sweep grid",
                dims.0, dims.1
            )));
        }
    }
    let mut base = config.clone();
    base.psf_dims = Some(grid[0]);
    base.validate()?;

    with_workers(config.parallelism, || {
        let data = load_dataset(&base)?;
        let detector = build_detector(&base)?;
        let mut rows = Vec::with_capacity(grid.len());
        for &dims in grid {
            let mut cell = base.clone();
            cell.psf_dims = Some(dims);
            let report = run_loaded(&cell, &data, &detector, now())?;
            if let Some(dir) = &config.output_dir {
                report.write_to(&dir.join(format!("psf_{}x{}", dims.0, dims.1)))?;
            }
            rows.push(SweepRow {
                psf: dims,
                scores: report.aggregate,
                best: false,
            });
        }
        rows.sort_by(|a, b| b.scores.hmean.total_cmp(&a.scores.hmean));
        rows[0].best = true;
        let table = SweepTable {
            mode: config.mode.to_string(),
            rows,
        };
        if let Some(dir) = &config.output_dir {
            let csv = dir.join("sweep.csv");
            std::fs::write(&csv, table.to_csv()).map_err(|e| PipelineError::io(&csv, e))?;
            let json = dir.join("sweep.json");
            let text = serde_json::to_string_pretty(&table).expect("sweep serializes") + "\n";
            std::fs::write(&json, text).map_err(|e| PipelineError::io(&json, e))?;
        }
        Ok(table)
    })
}

/// Focus verdict for one image under the run's settings.
pub fn classify_image(config: &RunConfig, image: &Raster) -> Result<FocusVerdict, PipelineError> {
    let measure = crate::blur::focus_measure_with(image, config.laplacian)
        .map_err(|e| PipelineError::Data(e.to_string()))?;
    verdict(measure, config.threshold).map_err(|e| PipelineError::Config(e.to_string()))
}

