use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use crate::blur::FocusVerdict;
use crate::eval::{parse_gt_icdar2013, ImageAnnotations};
use crate::exec::Exec;
use crate::io::{decode_grayscale, sha256_hex};
use crate::raster::Raster;

use super::{classify_image, PipelineError, RunConfig};

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetEntry {
    pub image_id: String,
    pub image_path: PathBuf,
    pub gt_path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct PreparedImage {
    pub image_id: String,
    pub image: Raster,
    pub ground_truth: ImageAnnotations,
    pub verdict: FocusVerdict,
    pub image_sha256: String,
    pub gt_sha256: String,
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub images: Vec<PreparedImage>,
    pub warnings: Vec<String>,
}

/// `img_2` sorts before `img_10`.
pub(crate) fn natural_cmp(a: &str, b: &str) -> Ordering {
    fn split(s: &str) -> (&str, Option<u64>) {
        let digits = s.len() - s.trim_end_matches(|c: char| c.is_ascii_digit()).len();
        let (head, tail) = s.split_at(s.len() - digits);
        (head, tail.parse().ok())
    }
    let (ha, na) = split(a);
    let (hb, nb) = split(b);
    ha.cmp(hb).then(na.cmp(&nb)).then(a.cmp(b))
}

/// Pairs `<id>.{png,jpg,jpeg}` with `gt_<id>.txt`. Unpaired files become warnings.
pub fn discover(dir: &Path) -> Result<(Vec<DatasetEntry>, Vec<String>), PipelineError> {
    let listing = std::fs::read_dir(dir).map_err(|e| PipelineError::io(dir, e))?;
    let mut images = Vec::new();
    let mut gts = Vec::new();
    for entry in listing {
        let path = entry.map_err(|e| PipelineError::io(dir, e))?.path();
        if !path.is_file() {
            continue;
        }
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        if let Some(id) = name.strip_prefix("gt_").and_then(|n| n.strip_suffix(".txt")) {
            gts.push(id.to_string());
        } else if IMAGE_EXTENSIONS.contains(&ext.as_str()) {
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            images.push((id.to_string(), path.clone()));
        }
    }
    images.sort_by(|a, b| natural_cmp(&a.0, &b.0).then(a.1.cmp(&b.1)));
    gts.sort_by(|a, b| natural_cmp(a, b));

    let mut warnings = Vec::new();
    let mut entries: Vec<DatasetEntry> = Vec::new();
    for (id, image_path) in images {
        if entries.last().is_some_and(|e| e.image_id == id) {
            warnings.push(format!("duplicate image for {id}: {} skipped", image_path.display()));
            continue;
        }
        if gts.binary_search_by(|g| natural_cmp(g, &id)).is_ok() {
            entries.push(DatasetEntry {
                gt_path: dir.join(format!("gt_{id}.txt")),
                image_id: id,
                image_path,
            });
        } else {
            warnings.push(format!("no ground truth for image {}", image_path.display()));
        }
    }
    for id in &gts {
        if !entries.iter().any(|e| &e.image_id == id) {
            warnings.push(format!("no image for ground truth gt_{id}.txt"));
        }
    }
    Ok((entries, warnings))
}

pub fn load_dataset(config: &RunConfig) -> Result<LoadedDataset, PipelineError> {
    let (entries, mut warnings) = discover(&config.dataset_dir)?;
    let exec = Exec::for_workers(config.parallelism);
    let loaded = exec.map(&entries, |e| prepare(config, e));
    let mut images = Vec::with_capacity(loaded.len());
    for item in loaded {
        match item {
            Ok(img) => images.push(img),
            Err(w) => warnings.push(w),
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    if images.is_empty() {
        return Err(PipelineError::EmptyDataset(config.dataset_dir.display().to_string()));
    }
    Ok(LoadedDataset { images, warnings })
}

fn prepare(config: &RunConfig, entry: &DatasetEntry) -> Result<PreparedImage, String> {
    let bytes = std::fs::read(&entry.image_path)
        .map_err(|e| format!("skipped {}: {e}", entry.image_path.display()))?;
    let image = decode_grayscale(&bytes)
        .map_err(|e| format!("skipped {}: {e}", entry.image_path.display()))?;
    let gt_text = std::fs::read_to_string(&entry.gt_path)
        .map_err(|e| format!("skipped {}: {e}", entry.gt_path.display()))?;
    let ground_truth = parse_gt_icdar2013(&entry.image_id, &gt_text)
        .map_err(|e| format!("skipped {}: {e}", entry.gt_path.display()))?;
    let verdict = classify_image(config, &image)
        .map_err(|e| format!("skipped {}: {e}", entry.image_path.display()))?;
    Ok(PreparedImage {
        image_id: entry.image_id.clone(),
        image,
        ground_truth,
        verdict,
        image_sha256: sha256_hex(&bytes),
        gt_sha256: sha256_hex(gt_text.as_bytes()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn natural_order() {
        let mut ids = vec!["img_10", "img_2", "img_1", "abc"];
        ids.sort_by(|a, b| natural_cmp(a, b));
        assert_eq!(ids, ["abc", "img_1", "img_2", "img_10"]);
    }

    #[test]
    fn pairs_and_warnings() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path();
        for f in ["img_1.png", "img_2.jpg", "img_3.png", "gt_img_1.txt", "gt_img_2.txt", "gt_img_9.txt", "notes.md"] {
            std::fs::write(p.join(f), b"").unwrap();
        }
        let (entries, warnings) = discover(p).unwrap();
        let ids: Vec<_> = entries.iter().map(|e| e.image_id.as_str()).collect();
        assert_eq!(ids, ["img_1", "img_2"]);
        assert_eq!(warnings.len(), 2);
        assert!(warnings.iter().any(|w| w.contains("img_3")));
        assert!(warnings.iter().any(|w| w.contains("gt_img_9")));
    }

    #[test]
    fn undecodable_images_are_skipped_with_warning() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("img_1.png"), b"garbage").unwrap();
        std::fs::write(dir.path().join("gt_img_1.txt"), b"1,2,3,4,\"a\"").unwrap();
        let config = RunConfig {
            dataset_dir: dir.path().to_path_buf(),
            ..RunConfig::default()
        };
        assert!(matches!(load_dataset(&config), Err(PipelineError::EmptyDataset(_))));
    }

    #[test]
    fn missing_directory_is_an_io_error() {
        let config = RunConfig {
            dataset_dir: PathBuf::from("/definitely/not/here"),
            ..RunConfig::default()
        };
        assert!(matches!(load_dataset(&config), Err(PipelineError::Io { .. })));
    }
}
