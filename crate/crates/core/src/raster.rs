//! Single-channel floating-point images and direct 2-D convolution.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("raster dimensions must be at least 1x1, got {width}x{height}")]
    EmptyDimensions { width: usize, height: usize },
    #[error("expected {expected} samples for the given dimensions, got {actual}")]
    SampleCount { expected: usize, actual: usize },
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
    #[error("channel dimensions differ: {0}")]
    DimensionMismatch(String),
    #[error("{kw}x{kh} kernel is larger than twice the {width}x{height} image; reflect border is undefined")]
    KernelTooLarge {
        kw: usize,
        kh: usize,
        width: usize,
        height: usize,
    },
}

/// Row-major grid of finite intensities, nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    samples: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, samples: Vec<f64>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyDimensions { width, height });
        }
        let expected = width * height;
        if samples.len() != expected {
            return Err(RasterError::SampleCount {
                expected,
                actual: samples.len(),
            });
        }
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(RasterError::NonFinite { index });
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self, RasterError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> f64,
    ) -> Result<Self, RasterError> {
        let mut samples = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                samples.push(f(x, y));
            }
        }
        Self::new(width, height, samples)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.samples[y * self.width + x]
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Applies `f` to every sample. Panics if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Raster {
        let samples: Vec<f64> = self.samples.iter().map(|&v| f(v)).collect();
        assert!(samples.iter().all(|v| v.is_finite()), "map produced a non-finite sample");
        Raster {
            width: self.width,
            height: self.height,
            samples,
        }
    }

    pub fn flip_horizontal(&self) -> Raster {
        let mut samples = Vec::with_capacity(self.samples.len());
        for row in self.samples.chunks(self.width) {
            samples.extend(row.iter().rev());
        }
        Raster {
            width: self.width,
            height: self.height,
            samples,
        }
    }

    pub fn flip_vertical(&self) -> Raster {
        let mut samples = Vec::with_capacity(self.samples.len());
        for row in self.samples.chunks(self.width).rev() {
            samples.extend_from_slice(row);
        }
        Raster {
            width: self.width,
            height: self.height,
            samples,
        }
    }

    /// Raster built from already-validated parts.
    pub(crate) fn from_parts(width: usize, height: usize, samples: Vec<f64>) -> Raster {
        debug_assert_eq!(samples.len(), width * height);
        debug_assert!(samples.iter().all(|v| v.is_finite()));
        Raster {
            width,
            height,
            samples,
        }
    }
}

/// Small row-major filter kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    kw: usize,
    kh: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn new(kw: usize, kh: usize, weights: Vec<f64>) -> Result<Self, RasterError> {
        if kw == 0 || kh == 0 {
            return Err(RasterError::EmptyDimensions {
                width: kw,
                height: kh,
            });
        }
        if weights.len() != kw * kh {
            return Err(RasterError::SampleCount {
                expected: kw * kh,
                actual: weights.len(),
            });
        }
        if let Some(index) = weights.iter().position(|v| !v.is_finite()) {
            return Err(RasterError::NonFinite { index });
        }
        Ok(Self { kw, kh, weights })
    }

    pub fn identity() -> Self {
        Self {
            kw: 1,
            kh: 1,
            weights: vec![1.0],
        }
    }

    /// Uniform `kw x kh` averaging kernel.
    pub fn box_blur(kw: usize, kh: usize) -> Result<Self, RasterError> {
        let n = kw * kh;
        Self::new(kw, kh, vec![1.0 / n as f64; n])
    }

    /// Normalized Gaussian with radius `ceil(3 sigma)`.
    pub fn gaussian(sigma: f64) -> Result<Self, RasterError> {
        let radius = (3.0 * sigma).ceil().max(1.0) as usize;
        let size = 2 * radius + 1;
        let mut weights = Vec::with_capacity(size * size);
        for v in 0..size {
            for u in 0..size {
                let dx = u as f64 - radius as f64;
                let dy = v as f64 - radius as f64;
                weights.push((-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp());
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Self::new(size, size, weights)
    }

    pub fn kw(&self) -> usize {
        self.kw
    }

    pub fn kh(&self) -> usize {
        self.kh
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.weights[v * self.kw + u]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Kernel rotated by 180 degrees.
    pub fn flip180(&self) -> Kernel {
        Kernel {
            kw: self.kw,
            kh: self.kh,
            weights: self.weights.iter().rev().copied().collect(),
        }
    }
}

/// How reads outside the image are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BorderPolicy {
    /// Nearest edge sample.
    #[default]
    Replicate,
    /// Mirror with the edge sample repeated (`cba|abcd|dcb`).
    Reflect,
    /// Zero outside the image.
    ZeroPad,
}

impl BorderPolicy {
    /// Source index for a possibly out-of-range coordinate, `None` for zero.
    fn resolve(self, i: i64, n: usize) -> Option<usize> {
        let n_i = n as i64;
        if (0..n_i).contains(&i) {
            return Some(i as usize);
        }
        match self {
            BorderPolicy::Replicate => Some(i.clamp(0, n_i - 1) as usize),
            BorderPolicy::ZeroPad => None,
            BorderPolicy::Reflect => {
                let period = 2 * n_i;
                let m = i.rem_euclid(period);
                Some(if m < n_i { m } else { period - 1 - m } as usize)
            }
        }
    }
}

/// BT.601 luma from three equally sized channels.
pub fn to_grayscale(r: &Raster, g: &Raster, b: &Raster) -> Result<Raster, RasterError> {
    if !r.same_shape(g) || !r.same_shape(b) {
        return Err(RasterError::DimensionMismatch(format!(
            "r {}x{}, g {}x{}, b {}x{}",
            r.width, r.height, g.width, g.height, b.width, b.height
        )));
    }
    let samples = r
        .samples
        .iter()
        .zip(&g.samples)
        .zip(&b.samples)
        .map(|((&r, &g), &b)| 0.299 * r + 0.587 * g + 0.114 * b)
        .collect();
    Raster::new(r.width, r.height, samples)
}

/// Same-size convolution with the kernel centered at `(kw/2, kh/2)`:
/// `out(x, y) = sum k(u, v) * img(x - u + cx, y - v + cy)`.
pub fn convolve2d(img: &Raster, k: &Kernel, border: BorderPolicy) -> Result<Raster, RasterError> {
    convolve2d_with(img, k, border, Exec::default())
}

pub fn convolve2d_with(
    img: &Raster,
    k: &Kernel,
    border: BorderPolicy,
    exec: Exec,
) -> Result<Raster, RasterError> {
    if border == BorderPolicy::Reflect && (k.kw > 2 * img.width || k.kh > 2 * img.height) {
        return Err(RasterError::KernelTooLarge {
            kw: k.kw,
            kh: k.kh,
            width: img.width,
            height: img.height,
        });
    }
    let (w, h) = (img.width, img.height);
    let (kw, kh) = (k.kw, k.kh);
    let xs = source_table(w, kw, border);
    let ys = source_table(h, kh, border);

    let mut out = vec![0.0; w * h];
    exec.for_each_row(&mut out, w, |y, row| {
        let taps_y = &ys[y * kh..(y + 1) * kh];
        for (x, px) in row.iter_mut().enumerate() {
            let taps_x = &xs[x * kw..(x + 1) * kw];
            let mut acc = 0.0;
            for (v, sy) in taps_y.iter().enumerate() {
                let Some(sy) = *sy else { continue };
                let src_row = &img.samples[sy * w..(sy + 1) * w];
                let k_row = &k.weights[v * kw..(v + 1) * kw];
                for (kv, sx) in k_row.iter().zip(taps_x) {
                    if let Some(sx) = *sx {
                        acc += kv * src_row[sx];
                    }
                }
            }
            *px = acc;
        }
    });
    Raster::new(w, h, out)
}

/// Correlation, defined so that `correlate2d(img, k) == convolve2d(img, k.flip180())`
/// exactly, for odd and even kernel sizes alike.
pub fn correlate2d(img: &Raster, k: &Kernel, border: BorderPolicy) -> Result<Raster, RasterError> {
    correlate2d_with(img, k, border, Exec::default())
}

pub fn correlate2d_with(
    img: &Raster,
    k: &Kernel,
    border: BorderPolicy,
    exec: Exec,
) -> Result<Raster, RasterError> {
    convolve2d_with(img, &k.flip180(), border, exec)
}

/// `table[i * k + u]` is the source index read by output `i` for kernel tap `u`.
fn source_table(n: usize, k: usize, border: BorderPolicy) -> Vec<Option<usize>> {
    let c = (k / 2) as i64;
    let mut table = Vec::with_capacity(n * k);
    for i in 0..n as i64 {
        for u in 0..k as i64 {
            table.push(border.resolve(i - u + c, n));
        }
    }
    table
}
