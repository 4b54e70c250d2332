//! Per-frame segmentation accuracy against reference masks.
//!
//! IoU is `tp / (tp + fp + fn)`, precision `tp / (tp + fp)` and recall
//! `tp / (tp + fn)`. When a denominator is zero the score is 1.0 if the
//! other mask is empty too and 0.0 otherwise, and the frame is flagged.

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// A score plus whether it came from a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub value: f64,
    pub degenerate: bool,
}

impl Score {
    fn ratio(num: usize, den: usize, empty_value: f64) -> Score {
        if den == 0 {
            Score {
                value: empty_value,
                degenerate: true,
            }
        } else {
            Score {
                value: num as f64 / den as f64,
                degenerate: false,
            }
        }
    }
}

pub fn confusion(pred: &BinaryMask, truth: &BinaryMask) -> Result<ConfusionCounts> {
    pred.check_same_shape(truth)?;
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.bits().iter().zip(truth.bits()) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn iou(c: &ConfusionCounts) -> Score {
    Score::ratio(c.tp, c.tp + c.fp + c.fn_, 1.0)
}

pub fn precision(c: &ConfusionCounts) -> Score {
    // Zero denominator means pred is empty; score by whether truth is too.
    Score::ratio(c.tp, c.tp + c.fp, if c.fn_ == 0 { 1.0 } else { 0.0 })
}

pub fn recall(c: &ConfusionCounts) -> Score {
    Score::ratio(c.tp, c.tp + c.fn_, if c.fp == 0 { 1.0 } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegenerateFlag {
    /// Both masks empty.
    IouEmpty,
    /// Prediction empty.
    PrecisionEmpty,
    /// Reference empty.
    RecallEmpty,
}

impl DegenerateFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            DegenerateFlag::IouEmpty => "iou_empty",
            DegenerateFlag::PrecisionEmpty => "precision_empty",
            DegenerateFlag::RecallEmpty => "recall_empty",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub index: usize,
    #[serde(default)]
    pub date: Option<NaiveDate>,
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
    pub flags: Vec<DegenerateFlag>,
}

impl FrameMetrics {
    pub fn from_counts(index: usize, date: Option<NaiveDate>, c: &ConfusionCounts) -> Self {
        let (i, p, r) = (iou(c), precision(c), recall(c));
        let flags = [
            (i.degenerate, DegenerateFlag::IouEmpty),
            (p.degenerate, DegenerateFlag::PrecisionEmpty),
            (r.degenerate, DegenerateFlag::RecallEmpty),
        ]
        .into_iter()
        .filter_map(|(on, f)| on.then_some(f))
        .collect();
        FrameMetrics {
            index,
            date,
            iou: i.value,
            precision: p.value,
            recall: r.value,
            flags,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        !self.flags.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub frames: Vec<FrameMetrics>,
    pub mean_iou: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub degenerate_frames: usize,
}

/// Scores each prediction against its reference and averages over frames
/// (unweighted, degenerate frames included).
pub fn evaluate_sequence(
    pred: &[BinaryMask],
    truth: &[BinaryMask],
    dates: Option<&[NaiveDate]>,
) -> Result<MetricsReport> {
    if pred.len() != truth.len() {
        return Err(Error::Pairing(format!(
            "{} predicted masks vs {} reference masks",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Pairing("no frames to evaluate".into()));
    }
    if let Some(d) = dates {
        if d.len() != pred.len() {
            return Err(Error::Pairing(format!("{} dates for {} frames", d.len(), pred.len())));
        }
    }
    let frames = pred
        .par_iter()
        .zip(truth)
        .enumerate()
        .map(|(i, (p, t))| {
            let c = confusion(p, t).map_err(|e| Error::Dimension(format!("frame {i}: {e}")))?;
            Ok(FrameMetrics::from_counts(i, dates.map(|d| d[i]), &c))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = frames.len() as f64;
    let mean = |f: fn(&FrameMetrics) -> f64| frames.iter().map(f).sum::<f64>() / n;
    Ok(MetricsReport {
        mean_iou: mean(|f| f.iou),
        mean_precision: mean(|f| f.precision),
        mean_recall: mean(|f| f.recall),
        degenerate_frames: frames.iter().filter(|f| f.is_degenerate()).count(),
        frames,
    })
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// CSV mirror: `index,date,iou,precision,recall,flags` with `;`-joined flags.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["index", "date", "iou", "precision", "recall", "flags"])
            .expect("in-memory write");
        for f in &self.frames {
            let flags: Vec<&str> = f.flags.iter().map(|f| f.as_str()).collect();
            w.write_record([
                f.index.to_string(),
                f.date.map(|d| d.to_string()).unwrap_or_default(),
                f.iou.to_string(),
                f.precision.to_string(),
                f.recall.to_string(),
                flags.join(";"),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}
