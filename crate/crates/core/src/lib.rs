//! Preprocessing and evaluation toolkit for scene-text detection.
//!
//! The crate classifies images as blurry or sharp with the variance of the
//! Laplacian, restores blurry ones with blind Richardson-Lucy
//! deconvolution, hands images to an external text detector and scores
//! the detections against ground truth.
//!
//! The data-parallel loops (convolution rows, per-image pipeline stages,
//! PSF tap updates) use rayon when the default `parallel` feature is on and
//! fall back to plain iterators otherwise; both paths give identical
//! results.

pub mod blur;
pub mod deconv;
pub mod detector;
pub mod eval;
pub mod exec;
pub mod io;
pub mod pipeline;
pub mod raster;
pub mod synth;

pub use blur::{classify, focus_measure, laplacian_response, BlurLabel, FocusVerdict};
pub use deconv::{blind_deconvolve, enforce_psf_constraints, init_psf, DeconvResult, Psf};
pub use eval::{
    aggregate, hmean, parse_detections, parse_gt_icdar2013, score_image, AnnotatedBox,
    EvalScores, ImageAnnotations, MatchMode,
};
pub use exec::Exec;
pub use raster::{convolve2d, correlate2d, to_grayscale, BorderPolicy, Kernel, Raster};
