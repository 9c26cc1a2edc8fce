use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eval::{aggregate, parse_detections, parse_gt_icdar2013, score_image, EvalScores, ImageAnnotations, MatchMode};

use super::{pct, PipelineError, PER_IMAGE_CSV_HEADER};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedImage {
    pub image_id: String,
    pub scores: EvalScores,
    pub missing_detections: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub match_mode: MatchMode,
    pub per_image: Vec<EvaluatedImage>,
    pub aggregate: EvalScores,
    pub warnings: Vec<String>,
}

impl EvaluationReport {
    /// Same columns as the run CSV; measure and label stay empty because no
    /// pixels are involved.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(PER_IMAGE_CSV_HEADER);
        s.push('\n');
        for r in &self.per_image {
            let _ = writeln!(
                s,
                "{},,,{},{},{}",
                r.image_id,
                pct(r.scores.precision),
                pct(r.scores.recall),
                pct(r.scores.hmean)
            );
        }
        s
    }
}

/// Scores every `gt_<id>.txt` in `gt_dir` against `res_<id>.txt` in
/// `det_dir`. A missing result file counts as zero detections.
pub fn evaluate_dirs(gt_dir: &Path, det_dir: &Path, mode: MatchMode) -> Result<EvaluationReport, PipelineError> {
    let mut ids: Vec<String> = std::fs::read_dir(gt_dir)
        .map_err(|e| PipelineError::io(gt_dir, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_str()?.to_string();
            Some(name.strip_prefix("gt_")?.strip_suffix(".txt")?.to_string())
        })
        .collect();
    ids.sort_by(|a, b| super::dataset::natural_cmp(a, b));
    if ids.is_empty() {
        return Err(PipelineError::EmptyDataset(gt_dir.display().to_string()));
    }

    let mut warnings = Vec::new();
    let mut per_image = Vec::with_capacity(ids.len());
    for id in ids {
        let gt_path = gt_dir.join(format!("gt_{id}.txt"));
        let gt_text = std::fs::read_to_string(&gt_path).map_err(|e| PipelineError::io(&gt_path, e))?;
        let gt = parse_gt_icdar2013(&id, &gt_text)
            .map_err(|e| PipelineError::Data(format!("{}: {e}", gt_path.display())))?;
        let det_path = det_dir.join(format!("res_{id}.txt"));
        let (det, missing) = if det_path.is_file() {
            let text = std::fs::read_to_string(&det_path).map_err(|e| PipelineError::io(&det_path, e))?;
            let det = parse_detections(&id, &text)
                .map_err(|e| PipelineError::Data(format!("{}: {e}", det_path.display())))?;
            (det, false)
        } else {
            warnings.push(format!("no detections for {id}; scored as empty"));
            (ImageAnnotations::new(id.clone(), Vec::new()), true)
        };
        per_image.push(EvaluatedImage {
            scores: score_image(&gt, &det, mode),
            image_id: id,
            missing_detections: missing,
        });
    }
    let tallies: Vec<_> = per_image.iter().map(|r| r.scores).collect();
    let aggregate = aggregate(&tallies).expect("non-empty");
    Ok(EvaluationReport {
        match_mode: mode,
        per_image,
        aggregate,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scores_directory_pairs() {
        let gt = tempfile::tempdir().unwrap();
        let det = tempfile::tempdir().unwrap();
        std::fs::write(gt.path().join("gt_img_1.txt"), "0, 0, 10, 10, \"A\"\n").unwrap();
        std::fs::write(gt.path().join("gt_img_2.txt"), "0, 0, 10, 10, \"B\"\n").unwrap();
        std::fs::write(det.path().join("res_img_1.txt"), "0,0,10,10,0.9\n").unwrap();
        let r = evaluate_dirs(gt.path(), det.path(), MatchMode::IouAt50).unwrap();
        assert_eq!(r.per_image.len(), 2);
        assert!(r.per_image[1].missing_detections);
        assert_eq!(r.aggregate.precision, 1.0);
        assert_eq!(r.aggregate.recall, 0.5);
        assert_eq!(r.warnings.len(), 1);
        assert!(r.to_csv().contains("img_1,,,100.00,100.00,100.00"));
    }

    #[test]
    fn empty_gt_dir_is_rejected() {
        let gt = tempfile::tempdir().unwrap();
        assert!(matches!(
            evaluate_dirs(gt.path(), gt.path(), MatchMode::BestMatch),
            Err(PipelineError::EmptyDataset(_))
        ));
    }
}
