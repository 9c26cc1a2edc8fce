use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AnnotatedBox, EvalScores, ImageAnnotations};

/// IoU at which a detection counts as a hit, and at which a detection
/// overlapping a don't-care region is dropped.
pub const IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Continuous overlap sums: each box scores `2|A n B| / (|A| + |B|)`
    /// against its best counterpart.
    BestMatch,
    /// Greedy one-to-one matching, a pair counts when IoU >= 0.5.
    #[default]
    IouAt50,
}

impl std::str::FromStr for MatchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "bestmatch" | "best_match" => Ok(MatchMode::BestMatch),
            "iou" | "iou50" | "iou_at_50" | "iouat50" => Ok(MatchMode::IouAt50),
            other => Err(format!("unknown match mode `{other}` (expected best-match or iou50)")),
        }
    }
}

impl std::fmt::Display for MatchMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MatchMode::BestMatch => "best_match",
            MatchMode::IouAt50 => "iou_at_50",
        })
    }
}

pub fn intersection_area(a: &AnnotatedBox, b: &AnnotatedBox) -> f64 {
    let w = a.x_max.min(b.x_max) - a.x_min.max(b.x_min);
    let h = a.y_max.min(b.y_max) - a.y_min.max(b.y_min);
    w.max(0.0) * h.max(0.0)
}

pub fn iou(a: &AnnotatedBox, b: &AnnotatedBox) -> f64 {
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

fn overlap_score(a: &AnnotatedBox, b: &AnnotatedBox) -> f64 {
    let den = a.area() + b.area();
    if den > 0.0 {
        2.0 * intersection_area(a, b) / den
    } else {
        0.0
    }
}

fn best_overlap(target: &AnnotatedBox, others: &[AnnotatedBox]) -> f64 {
    if target.area() <= 0.0 {
        return 0.0;
    }
    others
        .iter()
        .map(|o| overlap_score(target, o))
        .fold(0.0, f64::max)
}

/// Best overlap of a ground-truth box against any detection; 0 for an empty
/// detection list or a zero-area box.
pub fn best_match_g(gi: &AnnotatedBox, detections: &[AnnotatedBox]) -> f64 {
    best_overlap(gi, detections)
}

/// Best overlap of a detection against any ground-truth box.
pub fn best_match_d(dj: &AnnotatedBox, ground_truth: &[AnnotatedBox]) -> f64 {
    best_overlap(dj, ground_truth)
}

pub fn hmean(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Scores plus what happened along the way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEvaluation {
    pub scores: EvalScores,
    /// Detection indices dropped for covering a don't-care region.
    pub ignored_detections: Vec<usize>,
    /// Scored ground-truth indices with zero area; they contribute 0.
    pub zero_area_gt: Vec<usize>,
    /// `(gt index, detection index)` pairs matched in IoU mode, original indexing.
    pub matches: Vec<(usize, usize)>,
}

pub fn score_image(gt: &ImageAnnotations, det: &ImageAnnotations, mode: MatchMode) -> EvalScores {
    score_image_detailed(gt, det, mode).scores
}

pub fn score_image_detailed(
    gt: &ImageAnnotations,
    det: &ImageAnnotations,
    mode: MatchMode,
) -> ImageEvaluation {
    let (care_idx, dont_care): (Vec<usize>, Vec<usize>) =
        (0..gt.boxes.len()).partition(|&i| !gt.boxes[i].dont_care);
    let care: Vec<AnnotatedBox> = care_idx.iter().map(|&i| gt.boxes[i].clone()).collect();

    let mut ignored_detections = Vec::new();
    let mut kept_idx = Vec::new();
    for (j, d) in det.boxes.iter().enumerate() {
        if dont_care.iter().any(|&i| iou(d, &gt.boxes[i]) >= IOU_THRESHOLD) {
            ignored_detections.push(j);
        } else {
            kept_idx.push(j);
        }
    }
    let kept: Vec<AnnotatedBox> = kept_idx.iter().map(|&j| det.boxes[j].clone()).collect();

    let zero_area_gt = care_idx
        .iter()
        .copied()
        .filter(|&i| gt.boxes[i].area() <= 0.0)
        .collect();

    let (scores, matches) = match mode {
        MatchMode::BestMatch => {
            let precision_num: f64 = kept.iter().map(|d| best_match_d(d, &care)).sum();
            let recall_num: f64 = care.iter().map(|g| best_match_g(g, &kept)).sum();
            (
                EvalScores::from_tallies(
                    precision_num,
                    kept.len() as f64,
                    recall_num,
                    care.len() as f64,
                ),
                Vec::new(),
            )
        }
        MatchMode::IouAt50 => {
            let pairs = greedy_match(&care, &kept);
            let matched = pairs.len() as f64;
            let matches = pairs
                .into_iter()
                .map(|(g, d)| (care_idx[g], kept_idx[d]))
                .collect();
            (
                EvalScores::from_tallies(matched, kept.len() as f64, matched, care.len() as f64),
                matches,
            )
        }
    };
    ImageEvaluation {
        scores,
        ignored_detections,
        zero_area_gt,
        matches,
    }
}

/// Greedy one-to-one assignment in descending IoU order; ties go to the
/// lowest `(gt, det)` index pair.
fn greedy_match(gt: &[AnnotatedBox], det: &[AnnotatedBox]) -> Vec<(usize, usize)> {
    let mut candidates = Vec::new();
    for (g, gb) in gt.iter().enumerate() {
        for (d, db) in det.iter().enumerate() {
            let v = iou(gb, db);
            if v >= IOU_THRESHOLD {
                candidates.push((v, g, d));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut gt_used = vec![false; gt.len()];
    let mut det_used = vec![false; det.len()];
    let mut pairs = Vec::new();
    for (_, g, d) in candidates {
        if !gt_used[g] && !det_used[d] {
            gt_used[g] = true;
            det_used[d] = true;
            pairs.push((g, d));
        }
    }
    assert!(pairs.len() <= gt.len().min(det.len()), "one-to-one matching violated");
    pairs
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("cannot aggregate an empty list of scores")]
pub struct AggregateError;

/// Micro-average: tallies are summed in order, then the ratios recomputed.
pub fn aggregate(per_image: &[EvalScores]) -> Result<EvalScores, AggregateError> {
    if per_image.is_empty() {
        return Err(AggregateError);
    }
    let mut t = [0.0; 4];
    for s in per_image {
        t[0] += s.precision_num;
        t[1] += s.precision_den;
        t[2] += s.recall_num;
        t[3] += s.recall_den;
    }
    Ok(EvalScores::from_tallies(t[0], t[1], t[2], t[3]))
}
