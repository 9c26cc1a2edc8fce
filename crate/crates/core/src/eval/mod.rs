//! Ground-truth parsing, box matching and precision/recall/h-mean scoring.

mod parse;
mod score;

use serde::{Deserialize, Serialize};

pub use parse::{parse_detections, parse_gt_icdar2013, ParseError};
pub use score::{
    aggregate, best_match_d, best_match_g, hmean, intersection_area, iou, score_image,
    score_image_detailed, AggregateError, ImageEvaluation, MatchMode,
};

/// Axis-aligned box shared by ground truth and detections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcription: Option<String>,
    #[serde(default)]
    pub dont_care: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl AnnotatedBox {
    /// Plain detection box. Swapped corners are reordered.
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            x_min: x0.min(x1),
            y_min: y0.min(y1),
            x_max: x0.max(x1),
            y_max: y0.max(y1),
            transcription: None,
            dont_care: false,
            confidence: None,
        }
    }

    pub fn with_transcription(mut self, text: impl Into<String>) -> Self {
        let text = text.into();
        self.dont_care = text == DONT_CARE;
        self.transcription = Some(text);
        self
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
            ..self.clone()
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            x_min: self.x_min * s,
            y_min: self.y_min * s,
            x_max: self.x_max * s,
            y_max: self.y_max * s,
            ..self.clone()
        }
    }
}

/// Transcription marking a region excluded from scoring.
pub const DONT_CARE: &str = "###";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageAnnotations {
    pub image_id: String,
    pub boxes: Vec<AnnotatedBox>,
}

impl ImageAnnotations {
    pub fn new(image_id: impl Into<String>, boxes: Vec<AnnotatedBox>) -> Self {
        Self {
            image_id: image_id.into(),
            boxes,
        }
    }
}

/// Precision/recall/h-mean with the tallies they were computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalScores {
    pub precision: f64,
    pub recall: f64,
    pub hmean: f64,
    pub precision_num: f64,
    pub precision_den: f64,
    pub recall_num: f64,
    pub recall_den: f64,
}

impl EvalScores {
    /// Scores from raw tallies. With no detections and no ground truth all
    /// three scores are 1; if only one side is empty the other ratio is 0.
    pub fn from_tallies(
        precision_num: f64,
        precision_den: f64,
        recall_num: f64,
        recall_den: f64,
    ) -> Self {
        let (precision, recall) = match (precision_den > 0.0, recall_den > 0.0) {
            (true, true) => (precision_num / precision_den, recall_num / recall_den),
            (false, false) => (1.0, 1.0),
            (true, false) => (precision_num / precision_den, 0.0),
            (false, true) => (0.0, recall_num / recall_den),
        };
        Self {
            precision,
            recall,
            hmean: hmean(precision, recall),
            precision_num,
            precision_den,
            recall_num,
            recall_den,
        }
    }

    pub fn perfect_empty() -> Self {
        Self::from_tallies(0.0, 0.0, 0.0, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_conventions() {
        let s = EvalScores::perfect_empty();
        assert_eq!((s.precision, s.recall, s.hmean), (1.0, 1.0, 1.0));
        let s = EvalScores::from_tallies(0.0, 0.0, 0.0, 4.0);
        assert_eq!((s.precision, s.recall, s.hmean), (0.0, 0.0, 0.0));
        let s = EvalScores::from_tallies(0.0, 3.0, 0.0, 0.0);
        assert_eq!((s.precision, s.recall, s.hmean), (0.0, 0.0, 0.0));
    }

    #[test]
    fn box_helpers() {
        let b = AnnotatedBox::new(10.0, 5.0, 0.0, 0.0);
        assert_eq!((b.x_min, b.y_min, b.x_max, b.y_max), (0.0, 0.0, 10.0, 5.0));
        assert_eq!(b.area(), 50.0);
        assert!(AnnotatedBox::new(0.0, 0.0, 1.0, 1.0).with_transcription("###").dont_care);
        assert!(!AnnotatedBox::new(0.0, 0.0, 1.0, 1.0).with_transcription("EXIT").dont_care);
    }
}
