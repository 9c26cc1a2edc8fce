use thiserror::Error;

use super::{AnnotatedBox, ImageAnnotations, DONT_CARE};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

/// Parses a ground-truth file with one `x_min, y_min, x_max, y_max, "text"`
/// per line. Comma and whitespace separators are both accepted; the
/// transcription `###` marks a don't-care region.
pub fn parse_gt_icdar2013(image_id: &str, text: &str) -> Result<ImageAnnotations, ParseError> {
    let mut boxes = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_start_matches('\u{feff}').trim();
        if line.is_empty() {
            continue;
        }
        let (coords, transcription) = match line.find('"') {
            Some(open) => {
                let rest = &line[open + 1..];
                let inner = match rest.rfind('"') {
                    Some(close) => &rest[..close],
                    None => return Err(ParseError::new(line_no, "unterminated transcription quote")),
                };
                (&line[..open], Some(inner.to_string()))
            }
            None => {
                let fields = split_fields(line);
                if fields.len() < 4 {
                    return Err(ParseError::new(
                        line_no,
                        format!("expected 4 coordinates, found {}", fields.len()),
                    ));
                }
                let tail = fields[4..].join(" ");
                let transcription = (!tail.is_empty()).then_some(tail);
                // Re-split only the numeric head below.
                let head_end = nth_field_end(line, 4);
                (&line[..head_end], transcription)
            }
        };
        let nums = parse_numbers(coords, line_no)?;
        if nums.len() != 4 {
            return Err(ParseError::new(
                line_no,
                format!("expected 4 coordinates, found {}", nums.len()),
            ));
        }
        let mut b = checked_box(&nums, line_no)?;
        if let Some(t) = transcription {
            b.dont_care = t == DONT_CARE;
            b.transcription = Some(t);
        }
        boxes.push(b);
    }
    Ok(ImageAnnotations::new(image_id, boxes))
}

/// Parses a detection file with one `x_min,y_min,x_max,y_max[,confidence]`
/// per line.
pub fn parse_detections(image_id: &str, text: &str) -> Result<ImageAnnotations, ParseError> {
    let mut boxes = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_start_matches('\u{feff}').trim();
        if line.is_empty() {
            continue;
        }
        let nums = parse_numbers(line, line_no)?;
        if nums.len() != 4 && nums.len() != 5 {
            return Err(ParseError::new(
                line_no,
                format!("expected 4 coordinates and an optional confidence, found {} fields", nums.len()),
            ));
        }
        let mut b = checked_box(&nums[..4], line_no)?;
        b.confidence = nums.get(4).copied();
        boxes.push(b);
    }
    Ok(ImageAnnotations::new(image_id, boxes))
}

fn split_fields(s: &str) -> Vec<&str> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Byte offset just past the `n`-th field of `s`.
fn nth_field_end(s: &str, n: usize) -> usize {
    let mut seen = 0;
    let mut in_field = false;
    for (i, c) in s.char_indices() {
        let sep = c == ',' || c.is_whitespace();
        if !sep && !in_field {
            in_field = true;
        } else if sep && in_field {
            in_field = false;
            seen += 1;
            if seen == n {
                return i;
            }
        }
    }
    s.len()
}

fn parse_numbers(s: &str, line_no: usize) -> Result<Vec<f64>, ParseError> {
    split_fields(s)
        .into_iter()
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| ParseError::new(line_no, format!("invalid number `{t}`")))
        })
        .collect()
}

fn checked_box(nums: &[f64], line_no: usize) -> Result<AnnotatedBox, ParseError> {
    let (x0, y0, x1, y1) = (nums[0], nums[1], nums[2], nums[3]);
    if x0 > x1 {
        return Err(ParseError::new(line_no, format!("x_min {x0} exceeds x_max {x1}")));
    }
    if y0 > y1 {
        return Err(ParseError::new(line_no, format!("y_min {y0} exceeds y_max {y1}")));
    }
    Ok(AnnotatedBox::new(x0, y0, x1, y1))
}
