#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use textdeblur_core::eval::{AnnotatedBox, ImageAnnotations};
use textdeblur_core::pipeline::RunConfig;
use textdeblur_core::raster::{convolve2d, BorderPolicy, Kernel, Raster};
use textdeblur_core::synth::{generate_corpus, SynthImage};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_raster(rng: &mut impl Rng, w: usize, h: usize) -> Raster {
    let samples = (0..w * h).map(|_| rng.random_range(0.0..1.0)).collect();
    Raster::new(w, h, samples).unwrap()
}

pub fn random_box(rng: &mut impl Rng, extent: f64) -> AnnotatedBox {
    let x0 = rng.random_range(0.0..extent);
    let y0 = rng.random_range(0.0..extent);
    let w = rng.random_range(1.0..extent / 2.0);
    let h = rng.random_range(1.0..extent / 2.0);
    AnnotatedBox::new(x0, y0, x0 + w, y0 + h)
}

/// Up to `max` boxes; about one in eight carries the don't-care marker.
pub fn random_annotations(rng: &mut impl Rng, id: &str, max: usize, extent: f64) -> ImageAnnotations {
    let n = rng.random_range(0..=max);
    let boxes = (0..n)
        .map(|_| {
            let b = random_box(rng, extent);
            if rng.random_ratio(1, 8) {
                b.with_transcription("###")
            } else {
                b
            }
        })
        .collect();
    ImageAnnotations::new(id, boxes)
}

/// Direct evaluation of the scoring formulas, written without the library's
/// geometry helpers. Returns `(precision_num, precision_den, recall_num, recall_den)`.
pub struct BruteForce;

impl BruteForce {
    fn overlap(a: &AnnotatedBox, b: &AnnotatedBox) -> f64 {
        let w = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
        let h = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
        w * h
    }

    fn area(a: &AnnotatedBox) -> f64 {
        (a.x_max - a.x_min) * (a.y_max - a.y_min)
    }

    fn dice(a: &AnnotatedBox, b: &AnnotatedBox) -> f64 {
        let denom = Self::area(a) + Self::area(b);
        if Self::area(a) == 0.0 || denom == 0.0 {
            0.0
        } else {
            2.0 * Self::overlap(a, b) / denom
        }
    }

    fn iou(a: &AnnotatedBox, b: &AnnotatedBox) -> f64 {
        let i = Self::overlap(a, b);
        let u = Self::area(a) + Self::area(b) - i;
        if u <= 0.0 {
            0.0
        } else {
            i / u
        }
    }

    fn filtered(gt: &ImageAnnotations, det: &ImageAnnotations) -> (Vec<AnnotatedBox>, Vec<AnnotatedBox>) {
        let care: Vec<_> = gt.boxes.iter().filter(|b| !b.dont_care).cloned().collect();
        let dc: Vec<_> = gt.boxes.iter().filter(|b| b.dont_care).collect();
        let kept = det
            .boxes
            .iter()
            .filter(|d| !dc.iter().any(|g| Self::iou(g, d) >= 0.5))
            .cloned()
            .collect();
        (care, kept)
    }

    pub fn best_match(gt: &ImageAnnotations, det: &ImageAnnotations) -> (f64, f64, f64, f64) {
        let (g, d) = Self::filtered(gt, det);
        let mut p = 0.0;
        for dj in &d {
            let mut best = 0.0f64;
            for gi in &g {
                best = best.max(Self::dice(dj, gi));
            }
            p += best;
        }
        let mut r = 0.0;
        for gi in &g {
            let mut best = 0.0f64;
            for dj in &d {
                best = best.max(Self::dice(gi, dj));
            }
            r += best;
        }
        (p, d.len() as f64, r, g.len() as f64)
    }

    /// Greedy one-to-one matching by repeated global maximum search.
    pub fn iou_at_50(gt: &ImageAnnotations, det: &ImageAnnotations) -> (f64, f64, f64, f64) {
        let (g, d) = Self::filtered(gt, det);
        let mut g_used = vec![false; g.len()];
        let mut d_used = vec![false; d.len()];
        let mut matched = 0usize;
        loop {
            let mut best: Option<(f64, usize, usize)> = None;
            for (i, gi) in g.iter().enumerate() {
                for (j, dj) in d.iter().enumerate() {
                    if g_used[i] || d_used[j] {
                        continue;
                    }
                    let v = Self::iou(gi, dj);
                    if v >= 0.5 && best.is_none_or(|b| v > b.0) {
                        best = Some((v, i, j));
                    }
                }
            }
            match best {
                Some((_, i, j)) => {
                    g_used[i] = true;
                    d_used[j] = true;
                    matched += 1;
                }
                None => break,
            }
        }
        (matched as f64, d.len() as f64, matched as f64, g.len() as f64)
    }

    pub fn ratios(t: (f64, f64, f64, f64)) -> (f64, f64, f64) {
        let (pn, pd, rn, rd) = t;
        let (p, r) = match (pd > 0.0, rd > 0.0) {
            (false, false) => (1.0, 1.0),
            (true, true) => (pn / pd, rn / rd),
            (true, false) => (pn / pd, 0.0),
            (false, true) => (0.0, rn / rd),
        };
        let h = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        (p, r, h)
    }
}

pub fn corpus(n: usize, seed: u64) -> Vec<SynthImage> {
    generate_corpus(n, seed).unwrap()
}

/// Sharp renders blurred in turn by 1x3, 3x1 and 3x3 boxes, with the
/// matching `(rows, cols)` for the initial PSF.
pub fn forward_blurred(n: usize, seed: u64) -> Vec<(Raster, Raster, (usize, usize))> {
    let dims = [(1, 3), (3, 1), (3, 3)];
    corpus(n, seed)
        .into_iter()
        .enumerate()
        .map(|(i, img)| {
            let (rows, cols) = dims[i % dims.len()];
            let k = Kernel::box_blur(cols, rows).unwrap();
            let blurred = convolve2d(&img.sharp, &k, BorderPolicy::Replicate).unwrap();
            (img.sharp, blurred, (rows, cols))
        })
        .collect()
}

/// A synthetic corpus written to a fresh directory plus a config pointing at it.
pub fn corpus_config(n: usize, seed: u64) -> (tempfile::TempDir, RunConfig) {
    let dir = tempfile::tempdir().unwrap();
    textdeblur_core::synth::generate_synthetic_corpus(n, seed, dir.path()).unwrap();
    let config = RunConfig {
        dataset_dir: dir.path().to_path_buf(),
        ..RunConfig::default()
    };
    (dir, config)
}
