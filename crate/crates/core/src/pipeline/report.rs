use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blur::BlurLabel;
use crate::eval::EvalScores;

use super::PipelineError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRow {
    pub image_id: String,
    pub measure: f64,
    pub label: BlurLabel,
    /// `"RxC"` of the starting PSF when the image was deconvolved.
    pub psf: Option<String>,
    pub scores: EvalScores,
    pub detections: usize,
    pub ignored_detections: usize,
    pub detector_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub dataset_dir: String,
    pub detector: String,
    pub mode: String,
    pub psf: Option<String>,
    pub threshold: f64,
    pub iterations: usize,
    pub match_mode: String,
    pub symmetric_psf: bool,
    pub laplacian: String,
    pub timeout_secs: u64,
    pub failure_budget: usize,
    /// What the detector receives.
    pub detector_input: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    pub image_id: String,
    pub image_sha256: String,
    pub gt_sha256: String,
}

/// Fields that legitimately differ between otherwise identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeInfo {
    pub started_at: String,
    pub finished_at: String,
    pub parallelism: usize,
    pub output_dir: Option<String>,
    pub cache_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub config: ConfigEcho,
    pub inputs: Vec<InputHash>,
    pub warnings: Vec<String>,
    pub detector_failures: usize,
    pub runtime: Option<RuntimeInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub per_image: Vec<ImageRow>,
    pub aggregate: EvalScores,
    pub manifest: Manifest,
}

pub const PER_IMAGE_CSV_HEADER: &str = "image_id,measure,label,precision,recall,hmean";

/// Percentage with two decimals, as in published result tables.
pub fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

impl RunReport {
    pub fn exceeds_failure_budget(&self) -> bool {
        self.manifest.detector_failures > self.manifest.config.failure_budget
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// JSON with the runtime section removed; equal for equal inputs.
    pub fn deterministic_json(&self) -> String {
        let mut copy = self.clone();
        copy.manifest.runtime = None;
        copy.to_json()
    }

    pub fn per_image_csv(&self) -> String {
        let mut s = String::from(PER_IMAGE_CSV_HEADER);
        s.push('\n');
        for r in &self.per_image {
            let _ = writeln!(
                s,
                "{},{:.7},{},{},{},{}",
                r.image_id,
                r.measure,
                r.label,
                pct(r.scores.precision),
                pct(r.scores.recall),
                pct(r.scores.hmean)
            );
        }
        s
    }

    /// Writes `report.json` and `per_image.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), PipelineError> {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        let json = dir.join("report.json");
        std::fs::write(&json, self.to_json()).map_err(|e| PipelineError::io(&json, e))?;
        let csv = dir.join("per_image.csv");
        std::fs::write(&csv, self.per_image_csv()).map_err(|e| PipelineError::io(&csv, e))?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub psf: (usize, usize),
    pub scores: EvalScores,
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub mode: String,
    /// Sorted by h-mean, best first.
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn best(&self) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.best)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("psf,precision,recall,hmean,best\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "({},{}),{},{},{},{}",
                r.psf.0,
                r.psf.1,
                pct(r.scores.precision),
                pct(r.scores.recall),
                pct(r.scores.hmean),
                r.best
            );
        }
        s
    }

    pub fn render(&self) -> String {
        let mut s = format!("{:<12} {:>10} {:>10} {:>10}\n", "PSF", "Precision", "Recall", "H-Mean");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<12} {:>9}% {:>9}% {:>9}%{}",
                format!("({},{})", r.psf.0, r.psf.1),
                pct(r.scores.precision),
                pct(r.scores.recall),
                pct(r.scores.hmean),
                if r.best { "  *" } else { "" }
            );
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingEntry {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub hmean: f64,
}

impl RankingEntry {
    pub fn from_scores(name: impl Into<String>, s: &EvalScores) -> Self {
        Self {
            name: name.into(),
            precision: s.precision,
            recall: s.recall,
            hmean: s.hmean,
        }
    }
}

/// Sorts by h-mean, highest first; equal h-means are ordered by name.
pub fn report_ranking(mut entries: Vec<RankingEntry>) -> Vec<RankingEntry> {
    entries.sort_by(|a, b| b.hmean.total_cmp(&a.hmean).then_with(|| a.name.cmp(&b.name)));
    entries
}

pub fn render_ranking(ranked: &[RankingEntry]) -> String {
    let width = ranked.iter().map(|e| e.name.len()).max().unwrap_or(6).max(6);
    let mut s = format!(
        "{:>4}  {:<width$}  {:>9}  {:>9}  {:>9}\n",
        "Rank", "Method", "Precision", "Recall", "H-Mean"
    );
    for (i, e) in ranked.iter().enumerate() {
        let _ = writeln!(
            s,
            "{:>4}  {:<width$}  {:>8}%  {:>8}%  {:>8}%",
            i + 1,
            e.name,
            pct(e.precision),
            pct(e.recall),
            pct(e.hmean)
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(name: &str, h: f64) -> RankingEntry {
        RankingEntry {
            name: name.into(),
            precision: h,
            recall: h,
            hmean: h,
        }
    }

    #[test]
    fn ranking_order() {
        let ranked = report_ranking(vec![
            entry("c", 0.9142),
            entry("a", 0.9447),
            entry("b", 0.9362),
        ]);
        let names: Vec<_> = ranked.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, ["a", "b", "c"]);
        assert_eq!(report_ranking(vec![entry("solo", 0.5)]).len(), 1);
        let tied = report_ranking(vec![entry("zeta", 0.9), entry("alpha", 0.9)]);
        assert_eq!(tied[0].name, "alpha");
    }

    #[test]
    fn two_decimal_rendering() {
        assert_eq!(pct(0.944738), "94.47");
        assert_eq!(pct(1.0), "100.00");
        let table = render_ranking(&[entry("x", 0.91419)]);
        assert!(table.contains("91.42%"));
    }
}
