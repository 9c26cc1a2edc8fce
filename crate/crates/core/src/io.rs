//! PNG/JPEG decoding into grayscale rasters and 8-bit PNG encoding.

use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat, Luma};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::raster::{to_grayscale, Raster, RasterError};

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("failed to read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to decode {path}: {source}")]
    Decode {
        path: String,
        source: image::ImageError,
    },
    #[error("failed to encode PNG: {0}")]
    Encode(#[from] image::ImageError),
    #[error("failed to write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Decodes a PNG or JPEG, scales 8-bit RGB to `[0, 1]` and converts to luma.
pub fn load_grayscale(path: &Path) -> Result<Raster, ImageIoError> {
    let bytes = std::fs::read(path).map_err(|source| ImageIoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    decode_grayscale(&bytes).map_err(|e| match e {
        ImageIoError::Decode { source, .. } => ImageIoError::Decode {
            path: path.display().to_string(),
            source,
        },
        other => other,
    })
}

pub fn decode_grayscale(bytes: &[u8]) -> Result<Raster, ImageIoError> {
    let rgb = image::load_from_memory(bytes)
        .map_err(|source| ImageIoError::Decode {
            path: "<memory>".into(),
            source,
        })?
        .to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut channels = [
        Vec::with_capacity(w * h),
        Vec::with_capacity(w * h),
        Vec::with_capacity(w * h),
    ];
    for px in rgb.pixels() {
        for (c, chan) in channels.iter_mut().enumerate() {
            chan.push(px.0[c] as f64 / 255.0);
        }
    }
    let [r, g, b] = channels;
    let r = Raster::new(w, h, r)?;
    let g = Raster::new(w, h, g)?;
    let b = Raster::new(w, h, b)?;
    Ok(to_grayscale(&r, &g, &b)?)
}

/// Quantizes to 8 bits (clamped, rounded to nearest).
pub fn to_gray8(img: &Raster) -> GrayImage {
    let mut out = GrayImage::new(img.width() as u32, img.height() as u32);
    for (i, px) in out.pixels_mut().enumerate() {
        let v = (img.samples()[i].clamp(0.0, 1.0) * 255.0).round() as u8;
        *px = Luma([v]);
    }
    out
}

pub fn encode_png(img: &Raster) -> Result<Vec<u8>, ImageIoError> {
    let mut buf = Cursor::new(Vec::new());
    to_gray8(img).write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn save_png(img: &Raster, path: &Path) -> Result<(), ImageIoError> {
    let bytes = encode_png(img)?;
    std::fs::write(path, bytes).map_err(|source| ImageIoError::Write {
        path: path.display().to_string(),
        source,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the raster's exact sample bits and shape.
pub fn raster_digest(img: &Raster) -> String {
    let mut hasher = Sha256::new();
    hasher.update((img.width() as u64).to_le_bytes());
    hasher.update((img.height() as u64).to_le_bytes());
    for v in img.samples() {
        hasher.update(v.to_bits().to_le_bytes());
    }
    hex::encode(hasher.finalize())
}
