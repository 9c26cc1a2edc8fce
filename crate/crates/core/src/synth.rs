//! Seeded synthetic scene-text corpus with exact ground truth.
//!
//! Each image is a light background carrying dark glyph-like blocks grouped
//! into words; the word rectangles are the ground truth. Every second image
//! is additionally blurred with a recorded kernel.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{AnnotatedBox, ImageAnnotations};
use crate::io::{save_png, ImageIoError};
use crate::raster::{convolve2d, BorderPolicy, Kernel, Raster, RasterError};

pub const WIDTH: usize = 256;
pub const HEIGHT: usize = 192;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("corpus size must be at least 1")]
    Empty,
    #[error("cannot write corpus to {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Image(#[from] ImageIoError),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlurKernel {
    Box { rows: usize, cols: usize },
    Gaussian { sigma: f64 },
}

impl BlurKernel {
    pub fn kernel(&self) -> Kernel {
        match *self {
            BlurKernel::Box { rows, cols } => Kernel::box_blur(cols, rows).expect("non-empty box"),
            BlurKernel::Gaussian { sigma } => Kernel::gaussian(sigma).expect("positive sigma"),
        }
    }
}

/// Kernels applied to the blurred half, in rotation.
const CORPUS_BLURS: [BlurKernel; 4] = [
    BlurKernel::Box { rows: 5, cols: 5 },
    BlurKernel::Gaussian { sigma: 2.0 },
    BlurKernel::Box { rows: 5, cols: 7 },
    BlurKernel::Gaussian { sigma: 2.5 },
];

#[derive(Debug, Clone)]
pub struct SynthImage {
    pub image_id: String,
    /// Unblurred, unquantized rendering.
    pub sharp: Raster,
    /// What gets written: blurred if `blur` is set, quantized to 8 bits.
    pub observed: Raster,
    pub ground_truth: ImageAnnotations,
    pub blur: Option<BlurKernel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub image_id: String,
    pub image_file: String,
    pub gt_file: String,
    pub blur: Option<BlurKernel>,
    pub boxes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub images: Vec<CorpusEntry>,
}

fn image_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Renders one sharp scene and its word boxes.
pub fn render_scene(image_id: &str, rng: &mut impl Rng) -> (Raster, ImageAnnotations) {
    let background = rng.random_range(0.78..0.95);
    let ink = rng.random_range(0.04..0.2);
    let mut pixels = vec![background; WIDTH * HEIGHT];
    let mut boxes = Vec::new();

    let mut y = rng.random_range(6..12);
    while boxes.len() < 6 {
        let glyph_h = rng.random_range(10..16);
        if y + glyph_h + 4 > HEIGHT {
            break;
        }
        let mut x = rng.random_range(4..12);
        loop {
            let glyphs = rng.random_range(2..6);
            let glyph_ws: Vec<usize> = (0..glyphs).map(|_| rng.random_range(5..9)).collect();
            let word_w = glyph_ws.iter().sum::<usize>() + 2 * (glyphs - 1);
            if x + word_w + 4 > WIDTH {
                break;
            }
            let mut gx = x;
            let mut text = String::new();
            for &gw in &glyph_ws {
                let shape = rng.random_range(0..5u8);
                draw_glyph(&mut pixels, gx, y, gw, glyph_h, shape, ink);
                text.push((b'A' + shape * 5 + rng.random_range(0..5u8)) as char);
                gx += gw + 2;
            }
            boxes.push(
                AnnotatedBox::new(x as f64, y as f64, (x + word_w) as f64, (y + glyph_h) as f64)
                    .with_transcription(text),
            );
            x += word_w + rng.random_range(6..14);
            if boxes.len() >= 6 {
                break;
            }
        }
        y += glyph_h + rng.random_range(8..16);
    }
    let raster = Raster::new(WIDTH, HEIGHT, pixels).expect("finite synthetic pixels");
    (raster, ImageAnnotations::new(image_id, boxes))
}

/// Stroke patterns loosely shaped like block letters.
fn draw_glyph(px: &mut [f64], x0: usize, y0: usize, w: usize, h: usize, shape: u8, ink: f64) {
    let t = 2; // stroke width
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            let (dx, dy) = (x - x0, y - y0);
            let left = dx < t;
            let right = dx >= w - t;
            let top = dy < t;
            let bottom = dy >= h - t;
            let middle = dy >= h / 2 - 1 && dy <= h / 2;
            let on = match shape {
                0 => true,
                1 => left || right || top || bottom,
                2 => left || top || middle || bottom,
                3 => left || right || middle,
                _ => left || bottom,
            };
            if on {
                px[y * WIDTH + x] = ink;
            }
        }
    }
}

fn quantize(img: &Raster) -> Raster {
    img.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
}

/// Generates `n` images; odd indices are blurred.
pub fn generate_corpus(n: usize, seed: u64) -> Result<Vec<SynthImage>, SynthError> {
    if n == 0 {
        return Err(SynthError::Empty);
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let image_id = format!("img_{}", i + 1);
        let mut rng = image_rng(seed, i);
        let (sharp, ground_truth) = render_scene(&image_id, &mut rng);
        let blur = (i % 2 == 1).then(|| CORPUS_BLURS[(i / 2) % CORPUS_BLURS.len()]);
        let observed = match blur {
            Some(k) => quantize(&convolve2d(&sharp, &k.kernel(), BorderPolicy::Replicate)?),
            None => quantize(&sharp),
        };
        out.push(SynthImage {
            image_id,
            sharp,
            observed,
            ground_truth,
            blur,
        });
    }
    Ok(out)
}

pub fn format_ground_truth(ann: &ImageAnnotations) -> String {
    let mut s = String::new();
    for b in &ann.boxes {
        s.push_str(&format!(
            "{}, {}, {}, {}, \"{}\"\n",
            b.x_min,
            b.y_min,
            b.x_max,
            b.y_max,
            b.transcription.as_deref().unwrap_or("")
        ));
    }
    s
}

/// Writes `img_<k>.png`, `gt_img_<k>.txt` and `manifest.json` into `out`.
pub fn generate_synthetic_corpus(n: usize, seed: u64, out: &Path) -> Result<CorpusManifest, SynthError> {
    let images = generate_corpus(n, seed)?;
    let write_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SynthError::Write { path, source }
    };
    std::fs::create_dir_all(out).map_err(write_err(out))?;
    let mut entries = Vec::with_capacity(images.len());
    for img in &images {
        let image_file = format!("{}.png", img.image_id);
        let gt_file = format!("gt_{}.txt", img.image_id);
        save_png(&img.observed, &out.join(&image_file))?;
        let gt_path = out.join(&gt_file);
        std::fs::write(&gt_path, format_ground_truth(&img.ground_truth)).map_err(write_err(&gt_path))?;
        entries.push(CorpusEntry {
            image_id: img.image_id.clone(),
            image_file,
            gt_file,
            blur: img.blur,
            boxes: img.ground_truth.boxes.len(),
        });
    }
    let manifest = CorpusManifest {
        seed,
        width: WIDTH,
        height: HEIGHT,
        images: entries,
    };
    let path = out.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, json + "\n").map_err(write_err(&path))?;
    Ok(manifest)
}
