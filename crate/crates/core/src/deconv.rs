//! Blind Richardson-Lucy deconvolution with alternating image and PSF updates.
//!
//! Each iteration first refines the image estimate with the current PSF,
//! then refines the PSF against the refined image. Both updates are
//! multiplicative, so non-negativity is preserved up to rounding; the PSF is
//! clamped and renormalized to unit sum after every update.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::raster::{convolve2d_with, correlate2d_with, BorderPolicy, Kernel, Raster, RasterError};

/// Floor applied to ratio denominators and to the shifted observation.
pub const EPSILON: f64 = 1e-6;
pub const DEFAULT_ITERATIONS: usize = 10;
pub const MAX_PSF_DIM: usize = 7;

const UNIT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeconvError {
    #[error("PSF dimensions must be within 1..={MAX_PSF_DIM}, got {rows}x{cols}")]
    PsfDims { rows: usize, cols: usize },
    #[error("PSF weights must be non-negative and sum to 1")]
    PsfNotNormalized,
    #[error("PSF is all zero after clamping negatives")]
    DegeneratePsf,
    #[error("iteration count must be at least 1")]
    ZeroIterations,
    #[error("non-finite value in the {stage} estimate at iteration {iteration}")]
    NonFinite { iteration: usize, stage: &'static str },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Non-negative, unit-sum blur kernel of at most 7x7.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PsfRepr", into = "PsfRepr")]
pub struct Psf {
    kernel: Kernel,
}

/// JSON sidecar layout: `{"kw":..,"kh":..,"weights":[..]}`.
#[derive(Serialize, Deserialize)]
struct PsfRepr {
    kw: usize,
    kh: usize,
    weights: Vec<f64>,
}

impl TryFrom<PsfRepr> for Psf {
    type Error = DeconvError;

    fn try_from(r: PsfRepr) -> Result<Self, Self::Error> {
        Psf::from_kernel(Kernel::new(r.kw, r.kh, r.weights)?)
    }
}

impl From<Psf> for PsfRepr {
    fn from(p: Psf) -> Self {
        PsfRepr {
            kw: p.kernel.kw(),
            kh: p.kernel.kh(),
            weights: p.kernel.weights().to_vec(),
        }
    }
}

impl Psf {
    /// Validates an existing kernel as a PSF.
    pub fn from_kernel(kernel: Kernel) -> Result<Self, DeconvError> {
        check_dims(kernel.kh(), kernel.kw())?;
        let w = kernel.weights();
        if w.iter().any(|&v| v < 0.0) || (kernel.sum() - 1.0).abs() > UNIT_SUM_TOLERANCE {
            return Err(DeconvError::PsfNotNormalized);
        }
        Ok(Self { kernel })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn kw(&self) -> usize {
        self.kernel.kw()
    }

    pub fn kh(&self) -> usize {
        self.kernel.kh()
    }

    pub fn weights(&self) -> &[f64] {
        self.kernel.weights()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("PSF serializes")
    }
}

fn check_dims(rows: usize, cols: usize) -> Result<(), DeconvError> {
    if (1..=MAX_PSF_DIM).contains(&rows) && (1..=MAX_PSF_DIM).contains(&cols) {
        Ok(())
    } else {
        Err(DeconvError::PsfDims { rows, cols })
    }
}

/// Uniform starting PSF for an `(x, y)` pair: `x` rows by `y` columns.
pub fn init_psf(x: usize, y: usize) -> Result<Psf, DeconvError> {
    check_dims(x, y)?;
    let kernel = Kernel::new(y, x, vec![1.0 / (x * y) as f64; x * y])?;
    Ok(Psf { kernel })
}

/// Clamps negatives, optionally averages with the 180-degree rotation, and
/// renormalizes to unit sum.
pub fn enforce_psf_constraints(raw: &Kernel, symmetric: bool) -> Result<Psf, DeconvError> {
    check_dims(raw.kh(), raw.kw())?;
    let mut w: Vec<f64> = raw.weights().iter().map(|&v| v.max(0.0)).collect();
    if symmetric {
        let rotated: Vec<f64> = w.iter().rev().copied().collect();
        w.iter_mut().zip(&rotated).for_each(|(a, b)| *a = 0.5 * (*a + b));
    }
    let total: f64 = w.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(DeconvError::DegeneratePsf);
    }
    w.iter_mut().for_each(|v| *v /= total);
    Ok(Psf {
        kernel: Kernel::new(raw.kw(), raw.kh(), w)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeconvOptions {
    pub iterations: usize,
    pub symmetric: bool,
    pub exec: Exec,
}

impl Default for DeconvOptions {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            symmetric: false,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeconvResult {
    pub restored: Raster,
    pub psf_estimate: Psf,
    pub iterations_run: usize,
    /// Mean absolute re-blur residual `mean|d - f * h|` after each iteration.
    pub objective_trace: Vec<f64>,
}

pub fn blind_deconvolve(
    img: &Raster,
    psf0: &Psf,
    iterations: usize,
) -> Result<DeconvResult, DeconvError> {
    blind_deconvolve_with(
        img,
        psf0,
        &DeconvOptions {
            iterations,
            ..DeconvOptions::default()
        },
    )
}

pub fn blind_deconvolve_with(
    img: &Raster,
    psf0: &Psf,
    opts: &DeconvOptions,
) -> Result<DeconvResult, DeconvError> {
    if opts.iterations == 0 {
        return Err(DeconvError::ZeroIterations);
    }
    let exec = opts.exec;
    let border = BorderPolicy::Replicate;

    // Lift the observation so its minimum is at least EPSILON; undone at the end.
    let min = img.samples().iter().copied().fold(f64::INFINITY, f64::min);
    let shift = if min < EPSILON { EPSILON - min } else { 0.0 };
    let observed = if shift > 0.0 {
        img.map(|v| v + shift)
    } else {
        img.clone()
    };

    let mut estimate = observed.clone();
    let mut psf = psf0.clone();
    let mut trace = Vec::with_capacity(opts.iterations);

    for iteration in 1..=opts.iterations {
        // Image step.
        let reblurred = convolve2d_with(&estimate, psf.kernel(), border, exec)?;
        let ratio = divide(&observed, &reblurred);
        let correction = correlate2d_with(&ratio, psf.kernel(), border, exec)?;
        let next: Vec<f64> = estimate
            .samples()
            .iter()
            .zip(correction.samples())
            .map(|(f, c)| (f * c).max(0.0))
            .collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(DeconvError::NonFinite {
                iteration,
                stage: "image",
            });
        }
        estimate = Raster::from_parts(img.width(), img.height(), next);

        // PSF step against the refined image.
        let reblurred = convolve2d_with(&estimate, psf.kernel(), border, exec)?;
        let ratio = divide(&observed, &reblurred);
        let raw = psf_update(&estimate, &ratio, psf.kernel(), exec);
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(DeconvError::NonFinite {
                iteration,
                stage: "psf",
            });
        }
        psf = enforce_psf_constraints(&Kernel::new(psf.kw(), psf.kh(), raw)?, opts.symmetric)?;

        let reblurred = convolve2d_with(&estimate, psf.kernel(), border, exec)?;
        trace.push(mean_abs_diff(&observed, &reblurred));
    }

    let restored = estimate.map(|v| (v - shift).clamp(0.0, 1.0));
    Ok(DeconvResult {
        restored,
        psf_estimate: psf,
        iterations_run: opts.iterations,
        objective_trace: trace,
    })
}

fn divide(num: &Raster, den: &Raster) -> Raster {
    let samples = num
        .samples()
        .iter()
        .zip(den.samples())
        .map(|(n, d)| n / d.max(EPSILON))
        .collect();
    Raster::from_parts(num.width(), num.height(), samples)
}

/// Multiplicative PSF update over the valid region: for each tap,
/// `h <- h * sum(ratio * f_shifted) / sum(f_shifted)`, where `f_shifted` are
/// the image samples that tap reads without leaving the image.
fn psf_update(estimate: &Raster, ratio: &Raster, psf: &Kernel, exec: Exec) -> Vec<f64> {
    let (w, h) = (estimate.width() as i64, estimate.height() as i64);
    let (kw, kh) = (psf.kw(), psf.kh());
    let (cx, cy) = ((kw / 2) as i64, (kh / 2) as i64);
    let f = estimate.samples();
    let r = ratio.samples();
    exec.map_range(kw * kh, |tap| {
        let (u, v) = ((tap % kw) as i64, (tap / kw) as i64);
        // Output (x, y) reads f(x - u + cx, y - v + cy).
        let (dx, dy) = (cx - u, cy - v);
        let x0 = (-dx).max(0);
        let x1 = (w - dx).min(w);
        let y0 = (-dy).max(0);
        let y1 = (h - dy).min(h);
        let mut num = 0.0;
        let mut den = 0.0;
        for y in y0..y1 {
            let out_row = (y * w) as usize;
            let src_row = ((y + dy) * w) as usize;
            for x in x0..x1 {
                let fv = f[src_row + (x + dx) as usize];
                num += r[out_row + x as usize] * fv;
                den += fv;
            }
        }
        psf.weights()[tap] * num / den.max(EPSILON)
    })
}

fn mean_abs_diff(a: &Raster, b: &Raster) -> f64 {
    a.samples()
        .iter()
        .zip(b.samples())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / a.len() as f64
}

/// Parses `"RxC"` (e.g. `1x3`) into an `(x, y)` pair.
pub fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(['x', 'X', ','])
        .ok_or_else(|| format!("expected PSF dims like 1x3, got `{s}`"))?;
    let parse = |t: &str| {
        t.trim()
            .trim_matches(|c| c == '(' || c == ')')
            .parse::<usize>()
            .map_err(|_| format!("invalid PSF dimension in `{s}`"))
    };
    let dims = (parse(a)?, parse(b)?);
    check_dims(dims.0, dims.1).map_err(|e| e.to_string())?;
    Ok(dims)
}
