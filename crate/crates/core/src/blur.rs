//! Variance-of-Laplacian focus measure and the blurry/non-blurry verdict.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{Kernel, Raster};

pub const DEFAULT_THRESHOLD: f64 = 100.0;

/// Scale factor from `[0, 1]` intensities to the 8-bit range the threshold is tuned for.
const INTENSITY_SCALE: f64 = 255.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlurError {
    #[error("focus measure needs at least 2 pixels")]
    TooSmall,
    #[error("threshold must be positive and finite, got {0}")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianKind {
    /// `[[0,1,0],[1,-4,1],[0,1,0]]`
    #[default]
    FourNeighbor,
    /// `[[1,1,1],[1,-8,1],[1,1,1]]`
    EightNeighbor,
}

impl LaplacianKind {
    pub fn kernel(self) -> Kernel {
        let w = match self {
            LaplacianKind::FourNeighbor => vec![0.0, 1.0, 0.0, 1.0, -4.0, 1.0, 0.0, 1.0, 0.0],
            LaplacianKind::EightNeighbor => vec![1.0, 1.0, 1.0, 1.0, -8.0, 1.0, 1.0, 1.0, 1.0],
        };
        Kernel::new(3, 3, w).expect("static kernel")
    }
}

impl std::str::FromStr for LaplacianKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "4" | "four" | "four_neighbor" => Ok(LaplacianKind::FourNeighbor),
            "8" | "eight" | "eight_neighbor" => Ok(LaplacianKind::EightNeighbor),
            other => Err(format!("unknown laplacian variant `{other}` (expected 4 or 8)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlurLabel {
    Blurry,
    NonBlurry,
}

impl BlurLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            BlurLabel::Blurry => "blurry",
            BlurLabel::NonBlurry => "non-blurry",
        }
    }
}

impl std::fmt::Display for BlurLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocusVerdict {
    pub measure: f64,
    pub threshold: f64,
    pub label: BlurLabel,
}

/// Laplacian response under replicate border, on the input's own scale.
///
/// Neighbours are summed in mirror-image pairs so that flipping the input
/// flips the response bit for bit. The result equals
/// `convolve2d(img, kind.kernel(), Replicate)` up to rounding.
pub fn laplacian_response(img: &Raster, kind: LaplacianKind) -> Raster {
    let (w, h) = (img.width(), img.height());
    let s = img.samples();
    let at = |x: usize, y: usize| s[y * w + x];
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let up = y.saturating_sub(1);
        let down = (y + 1).min(h - 1);
        for x in 0..w {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(w - 1);
            let c = at(x, y);
            let v = match kind {
                LaplacianKind::FourNeighbor => {
                    (at(left, y) + at(right, y)) + (at(x, up) + at(x, down)) - 4.0 * c
                }
                LaplacianKind::EightNeighbor => {
                    let edges = (at(left, y) + at(right, y)) + (at(x, up) + at(x, down));
                    let corners = (at(left, up) + at(right, down)) + (at(right, up) + at(left, down));
                    edges + corners - 8.0 * c
                }
            };
            out.push(v);
        }
    }
    Raster::from_parts(w, h, out)
}

/// Population variance of the Laplacian response on the 0-255 scale.
pub fn focus_measure(img: &Raster) -> Result<f64, BlurError> {
    focus_measure_with(img, LaplacianKind::default())
}

pub fn focus_measure_with(img: &Raster, kind: LaplacianKind) -> Result<f64, BlurError> {
    if img.len() < 2 {
        return Err(BlurError::TooSmall);
    }
    let scaled = img.map(|v| v * INTENSITY_SCALE);
    let response = laplacian_response(&scaled, kind);
    Ok(population_variance(response.samples()))
}

/// Two-pass variance over the values in sorted order, so the result depends
/// only on the multiset of values and not on their layout.
pub(crate) fn population_variance(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.max(0.0)
}

pub fn verdict(measure: f64, threshold: f64) -> Result<FocusVerdict, BlurError> {
    check_threshold(threshold)?;
    let label = if measure > threshold {
        BlurLabel::NonBlurry
    } else {
        BlurLabel::Blurry
    };
    Ok(FocusVerdict {
        measure,
        threshold,
        label,
    })
}

pub fn classify(img: &Raster, threshold: f64) -> Result<FocusVerdict, BlurError> {
    classify_with(img, threshold, LaplacianKind::default())
}

pub fn classify_with(
    img: &Raster,
    threshold: f64,
    kind: LaplacianKind,
) -> Result<FocusVerdict, BlurError> {
    check_threshold(threshold)?;
    verdict(focus_measure_with(img, kind)?, threshold)
}

fn check_threshold(threshold: f64) -> Result<(), BlurError> {
    if threshold.is_finite() && threshold > 0.0 {
        Ok(())
    } else {
        Err(BlurError::InvalidThreshold(threshold))
    }
}

/// Threshold maximizing agreement with known labels: candidates are the
/// midpoints between consecutive sorted measures. Returns `(threshold, accuracy)`.
pub fn calibrate_threshold(samples: &[(f64, BlurLabel)]) -> Option<(f64, f64)> {
    if samples.is_empty() {
        return None;
    }
    let mut measures: Vec<f64> = samples.iter().map(|s| s.0).collect();
    measures.sort_unstable_by(f64::total_cmp);
    measures.dedup();
    let mut candidates: Vec<f64> = measures.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    candidates.push(measures[0] * 0.5);
    candidates.push(measures[measures.len() - 1] * 2.0 + 1.0);

    let accuracy = |t: f64| {
        let hits = samples
            .iter()
            .filter(|(m, label)| (*m > t) == (*label == BlurLabel::NonBlurry))
            .count();
        hits as f64 / samples.len() as f64
    };
    candidates
        .into_iter()
        .filter(|t| *t > 0.0)
        .map(|t| (t, accuracy(t)))
        .fold(None, |best: Option<(f64, f64)>, cur| match best {
            Some(b) if b.1 >= cur.1 => Some(b),
            _ => Some(cur),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{convolve2d, BorderPolicy};

    #[test]
    fn constant_image_has_zero_measure() {
        let img = Raster::filled(9, 7, 0.42).unwrap();
        assert!(laplacian_response(&img, LaplacianKind::FourNeighbor)
            .samples()
            .iter()
            .all(|&v| v == 0.0));
        assert_eq!(focus_measure(&img).unwrap(), 0.0);
    }

    #[test]
    fn ramp_interior_is_flat() {
        let img = Raster::from_fn(8, 6, |x, y| 0.05 * x as f64 + 0.02 * y as f64).unwrap();
        let r = laplacian_response(&img, LaplacianKind::FourNeighbor);
        for y in 1..5 {
            for x in 1..7 {
                assert!(r.get(x, y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn impulse_response() {
        let mut v = vec![0.0; 9];
        v[4] = 1.0;
        let img = Raster::new(3, 3, v).unwrap();
        let r = laplacian_response(&img, LaplacianKind::FourNeighbor);
        // Sliding-window readout: centre -4, edge neighbours see the impulse once, corners never.
        assert_eq!(r.samples(), &[0.0, 1.0, 0.0, 1.0, -4.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn stencil_matches_generic_convolution() {
        let img = Raster::from_fn(11, 7, |x, y| ((x * 7 + y * 13) % 10) as f64 / 9.0).unwrap();
        for kind in [LaplacianKind::FourNeighbor, LaplacianKind::EightNeighbor] {
            let a = laplacian_response(&img, kind);
            let b = convolve2d(&img, &kind.kernel(), BorderPolicy::Replicate).unwrap();
            for (x, y) in a.samples().iter().zip(b.samples()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_pixel_fixture_has_unit_variance() {
        // Response on the 8-bit scale is (+1, -1).
        let img = Raster::new(2, 1, vec![0.0, 1.0 / 255.0]).unwrap();
        assert!((focus_measure(&img).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_pixel_is_rejected() {
        let img = Raster::filled(1, 1, 0.5).unwrap();
        assert_eq!(focus_measure(&img), Err(BlurError::TooSmall));
    }

    #[test]
    fn threshold_boundary_is_strict() {
        assert_eq!(verdict(7.97, 100.0).unwrap().label, BlurLabel::Blurry);
        assert_eq!(verdict(28.99, 100.0).unwrap().label, BlurLabel::Blurry);
        assert_eq!(verdict(265.99, 100.0).unwrap().label, BlurLabel::NonBlurry);
        assert_eq!(verdict(693.66, 100.0).unwrap().label, BlurLabel::NonBlurry);
        assert_eq!(verdict(100.0, 100.0).unwrap().label, BlurLabel::Blurry);
    }

    #[test]
    fn bad_thresholds_are_rejected() {
        let img = Raster::filled(2, 2, 0.0).unwrap();
        assert!(matches!(classify(&img, 0.0), Err(BlurError::InvalidThreshold(_))));
        assert!(matches!(classify(&img, -5.0), Err(BlurError::InvalidThreshold(_))));
        assert!(matches!(classify(&img, f64::NAN), Err(BlurError::InvalidThreshold(_))));
    }

    #[test]
    fn calibration_separates_clean_split() {
        let data = [
            (10.0, BlurLabel::Blurry),
            (20.0, BlurLabel::Blurry),
            (300.0, BlurLabel::NonBlurry),
            (500.0, BlurLabel::NonBlurry),
        ];
        let (t, acc) = calibrate_threshold(&data).unwrap();
        assert_eq!(acc, 1.0);
        assert!(t > 20.0 && t < 300.0);
        assert!(calibrate_threshold(&[]).is_none());
    }

    #[test]
    fn parses_kind() {
        assert_eq!("8".parse::<LaplacianKind>().unwrap(), LaplacianKind::EightNeighbor);
        assert!("5".parse::<LaplacianKind>().is_err());
    }
}
