//! Text detectors behind one contract: precomputed result files, an external
//! command speaking a file protocol, or a seeded mock fed with ground truth.

use std::collections::HashMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::time::Duration;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::eval::{parse_detections, AnnotatedBox, ImageAnnotations, ParseError};
use crate::io::{encode_png, raster_digest, ImageIoError};
use crate::raster::Raster;

pub const INPUT_PLACEHOLDER: &str = "{input_image}";
pub const OUTPUT_PLACEHOLDER: &str = "{output_file}";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("detection file {0} not found")]
    MissingFile(PathBuf),
    #[error("command template must contain {INPUT_PLACEHOLDER} and {OUTPUT_PLACEHOLDER}: `{0}`")]
    BadTemplate(String),
    #[error("failed to launch `{program}`: {source}")]
    Spawn {
        program: String,
        source: std::io::Error,
    },
    #[error("detector exited with {status}: {stderr}")]
    NonZeroExit { status: String, stderr: String },
    #[error("detector timed out after {0:?}")]
    Timeout(Duration),
    #[error("detector produced no output file {0}")]
    NoOutput(PathBuf),
    #[error("malformed detections for {image_id}: {source}")]
    Parse {
        image_id: String,
        source: ParseError,
    },
    #[error("mock detector needs ground truth for {0}")]
    MissingGroundTruth(String),
    #[error("invalid perturbation spec: {0}")]
    BadPerturbation(String),
    #[error(transparent)]
    Image(#[from] ImageIoError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Shell-free command template, e.g. `python craft.py --input {input_image} --output {output_file}`.
/// Arguments are split on whitespace; placeholders are substituted per argument.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandTemplate(String);

impl CommandTemplate {
    pub fn new(template: impl Into<String>) -> Result<Self, DetectorError> {
        let t = template.into();
        if !t.contains(INPUT_PLACEHOLDER) || !t.contains(OUTPUT_PLACEHOLDER) || t.trim().is_empty()
        {
            return Err(DetectorError::BadTemplate(t));
        }
        Ok(Self(t))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn argv(&self, input: &Path, output: &Path) -> Vec<String> {
        self.0
            .split_whitespace()
            .map(|tok| {
                tok.replace(INPUT_PLACEHOLDER, &input.to_string_lossy())
                    .replace(OUTPUT_PLACEHOLDER, &output.to_string_lossy())
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub drop_fraction: f64,
    pub jitter_px: f64,
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn identity() -> Self {
        Self {
            drop_fraction: 0.0,
            jitter_px: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        if !(0.0..=1.0).contains(&self.drop_fraction) {
            return Err(DetectorError::BadPerturbation(format!(
                "drop_fraction {} outside [0, 1]",
                self.drop_fraction
            )));
        }
        if !self.jitter_px.is_finite() || self.jitter_px < 0.0 {
            return Err(DetectorError::BadPerturbation(format!(
                "jitter_px {} must be non-negative",
                self.jitter_px
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorSource {
    Precomputed(PathBuf),
    ExternalCommand(CommandTemplate),
    Mock(PerturbationSpec),
}

impl DetectorSource {
    /// Parses `mock`, `mock:DROP:JITTER:SEED`, `precomputed:DIR` or `cmd:TEMPLATE`.
    pub fn parse(s: &str) -> Result<Self, DetectorError> {
        let s = s.trim();
        if s == "mock" {
            return Ok(DetectorSource::Mock(PerturbationSpec::identity()));
        }
        if let Some(rest) = s.strip_prefix("mock:") {
            let parts: Vec<&str> = rest.split(':').collect();
            let bad = || DetectorError::BadPerturbation(format!("expected mock:DROP:JITTER:SEED, got `{s}`"));
            if parts.len() != 3 {
                return Err(bad());
            }
            let spec = PerturbationSpec {
                drop_fraction: parts[0].parse().map_err(|_| bad())?,
                jitter_px: parts[1].parse().map_err(|_| bad())?,
                seed: parts[2].parse().map_err(|_| bad())?,
            };
            spec.validate()?;
            return Ok(DetectorSource::Mock(spec));
        }
        if let Some(dir) = s.strip_prefix("precomputed:") {
            return Ok(DetectorSource::Precomputed(PathBuf::from(dir)));
        }
        if let Some(cmd) = s.strip_prefix("cmd:") {
            return Ok(DetectorSource::ExternalCommand(CommandTemplate::new(cmd)?));
        }
        Err(DetectorError::BadTemplate(format!(
            "unknown detector `{s}` (expected mock, mock:DROP:JITTER:SEED, precomputed:DIR or cmd:TEMPLATE)"
        )))
    }

    pub fn describe(&self) -> String {
        match self {
            DetectorSource::Precomputed(dir) => format!("precomputed:{}", dir.display()),
            DetectorSource::ExternalCommand(t) => format!("cmd:{}", t.as_str()),
            DetectorSource::Mock(p) if *p == PerturbationSpec::identity() => "mock".to_string(),
            DetectorSource::Mock(p) => format!("mock:{}:{}:{}", p.drop_fraction, p.jitter_px, p.seed),
        }
    }

    /// Whether the detector's output depends on the image pixels.
    pub fn reads_pixels(&self) -> bool {
        matches!(self, DetectorSource::ExternalCommand(_))
    }
}

/// Result of one detection call.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub annotations: ImageAnnotations,
    pub from_cache: bool,
}

/// Detector outputs keyed by image content and preprocessing descriptor.
/// Entries live in memory and, when a directory is given, on disk.
#[derive(Debug, Default)]
pub struct DetectionCache {
    dir: Option<PathBuf>,
    entries: Mutex<HashMap<String, String>>,
    writes: Mutex<()>,
}

impl DetectionCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir: Some(dir),
            ..Self::default()
        })
    }

    pub fn key(image: &Raster, descriptor: &str, detector: &str) -> String {
        let mut h = Sha256::new();
        h.update(raster_digest(image).as_bytes());
        h.update(b"\0");
        h.update(descriptor.as_bytes());
        h.update(b"\0");
        h.update(detector.as_bytes());
        hex::encode(h.finalize())
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.txt")))
    }

    pub fn get(&self, key: &str) -> Option<String> {
        if let Some(v) = self.entries.lock().expect("cache lock").get(key) {
            return Some(v.clone());
        }
        let text = std::fs::read_to_string(self.path(key)?).ok()?;
        self.entries
            .lock()
            .expect("cache lock")
            .insert(key.to_string(), text.clone());
        Some(text)
    }

    pub fn put(&self, key: &str, text: &str) -> std::io::Result<()> {
        let _guard = self.writes.lock().expect("cache write lock");
        if let (Some(dir), Some(path)) = (&self.dir, self.path(key)) {
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            std::io::Write::write_all(&mut tmp, text.as_bytes())?;
            tmp.persist(path).map_err(|e| e.error)?;
        }
        self.entries
            .lock()
            .expect("cache lock")
            .insert(key.to_string(), text.to_string());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug)]
pub struct Detector {
    source: DetectorSource,
    timeout: Duration,
    cache: Option<DetectionCache>,
}

impl Detector {
    pub fn new(source: DetectorSource) -> Self {
        Self {
            source,
            timeout: DEFAULT_TIMEOUT,
            cache: None,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_cache(mut self, cache: DetectionCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn source(&self) -> &DetectorSource {
        &self.source
    }

    pub fn cache(&self) -> Option<&DetectionCache> {
        self.cache.as_ref()
    }

    /// Runs the detector on one image. `preprocessing` names what was done to
    /// the pixels and participates in the cache key; `ground_truth` feeds the mock.
    pub fn detect(
        &self,
        image_id: &str,
        image: &Raster,
        ground_truth: Option<&ImageAnnotations>,
        preprocessing: &str,
    ) -> Result<Detection, DetectorError> {
        match &self.source {
            DetectorSource::Precomputed(dir) => {
                let path = dir.join(format!("res_{image_id}.txt"));
                if !path.is_file() {
                    return Err(DetectorError::MissingFile(path));
                }
                let text = std::fs::read_to_string(&path)?;
                Ok(Detection {
                    annotations: parse(image_id, &text)?,
                    from_cache: false,
                })
            }
            DetectorSource::Mock(spec) => {
                let gt = ground_truth.ok_or_else(|| DetectorError::MissingGroundTruth(image_id.into()))?;
                Ok(Detection {
                    annotations: mock_detections(gt, spec)?,
                    from_cache: false,
                })
            }
            DetectorSource::ExternalCommand(template) => {
                let key = DetectionCache::key(image, preprocessing, template.as_str());
                if let Some(text) = self.cache.as_ref().and_then(|c| c.get(&key)) {
                    return Ok(Detection {
                        annotations: parse(image_id, &text)?,
                        from_cache: true,
                    });
                }
                let text = run_external(template, image, self.timeout)?;
                let annotations = parse(image_id, &text)?;
                if let Some(cache) = &self.cache {
                    cache.put(&key, &text)?;
                }
                Ok(Detection {
                    annotations,
                    from_cache: false,
                })
            }
        }
    }
}

fn parse(image_id: &str, text: &str) -> Result<ImageAnnotations, DetectorError> {
    parse_detections(image_id, text).map_err(|source| DetectorError::Parse {
        image_id: image_id.to_string(),
        source,
    })
}

fn run_external(
    template: &CommandTemplate,
    image: &Raster,
    timeout: Duration,
) -> Result<String, DetectorError> {
    let work = tempfile::tempdir()?;
    let input = work.path().join("input.png");
    let output = work.path().join("detections.txt");
    std::fs::write(&input, encode_png(image)?)?;

    let argv = template.argv(&input, &output);
    let (program, args) = argv.split_first().expect("validated template is non-empty");
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|source| DetectorError::Spawn {
            program: program.clone(),
            source,
        })?;

    let mut stderr_pipe = child.stderr.take().expect("piped stderr");
    let reader = std::thread::spawn(move || {
        let mut buf = String::new();
        let _ = stderr_pipe.read_to_string(&mut buf);
        buf
    });

    let status = match child.wait_timeout(timeout)? {
        Some(status) => status,
        None => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(DetectorError::Timeout(timeout));
        }
    };
    let stderr = reader.join().unwrap_or_default();
    if !status.success() {
        return Err(DetectorError::NonZeroExit {
            status: status.to_string(),
            stderr: stderr.trim().to_string(),
        });
    }
    if !output.is_file() {
        return Err(DetectorError::NoOutput(output));
    }
    Ok(std::fs::read_to_string(&output)?)
}

/// Ground truth with a seeded subset of boxes dropped and the rest jittered.
/// Exactly `round(drop_fraction * n)` boxes are dropped.
pub fn mock_detections(
    gt: &ImageAnnotations,
    spec: &PerturbationSpec,
) -> Result<ImageAnnotations, DetectorError> {
    spec.validate()?;
    let n = gt.boxes.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ fingerprint(&gt.boxes));
    let n_drop = ((spec.drop_fraction * n as f64).round() as usize).min(n);
    let mut dropped = vec![false; n];
    for i in index::sample(&mut rng, n, n_drop) {
        dropped[i] = true;
    }
    let mut boxes = Vec::with_capacity(n - n_drop);
    for (b, _) in gt.boxes.iter().zip(&dropped).filter(|(_, d)| !**d) {
        let mut jitter = || {
            if spec.jitter_px > 0.0 {
                rng.random_range(-spec.jitter_px..=spec.jitter_px)
            } else {
                0.0
            }
        };
        let (x0, y0, x1, y1) = (
            b.x_min + jitter(),
            b.y_min + jitter(),
            b.x_max + jitter(),
            b.y_max + jitter(),
        );
        boxes.push(AnnotatedBox::new(x0, y0, x1, y1));
    }
    Ok(ImageAnnotations::new(gt.image_id.clone(), boxes))
}

/// FNV-1a over the box coordinates; stable across platforms and releases.
fn fingerprint(boxes: &[AnnotatedBox]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in boxes {
        for v in [b.x_min, b.y_min, b.x_max, b.y_max] {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
    }
    h
}

/// Writes detections in the `x_min,y_min,x_max,y_max[,confidence]` format.
pub fn format_detections(ann: &ImageAnnotations) -> String {
    let mut out = String::new();
    for b in &ann.boxes {
        out.push_str(&format!("{},{},{},{}", b.x_min, b.y_min, b.x_max, b.y_max));
        if let Some(c) = b.confidence {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
    }
    out
}
