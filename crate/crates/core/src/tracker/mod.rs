//! Prompt-driven scar tracking across a frame sequence.
//!
//! A [`TrackSession`] is initialised from positive/negative prompt points on
//! frame 0, propagated forward frame by frame with the previous mask as
//! memory, and refined by adding prompts at any later frame, after which
//! everything from that frame onward is recomputed.
//!
//! Segmentation itself is delegated to a [`SegmentBackend`]. The built-in
//! [`NativeBackend`] is deterministic; [`HttpBackend`] forwards each frame
//! to an external service speaking the JSON protocol in [`protocol`].

mod backend;
pub mod components;
mod native;
pub mod protocol;
mod session;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use backend::{BackendError, FrameRequest, SegmentBackend, Segmentation};
pub use components::{label_components, Components, Connectivity};
pub use native::{segment_frame, NativeBackend};
pub use protocol::HttpBackend;
pub use session::{FrameResult, TrackSession};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

/// A click annotation pinned to one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptPoint {
    #[serde(rename = "frame")]
    pub frame_index: usize,
    pub row: usize,
    pub col: usize,
    pub polarity: Polarity,
}

impl PromptPoint {
    pub fn positive(frame_index: usize, row: usize, col: usize) -> Self {
        PromptPoint {
            frame_index,
            row,
            col,
            polarity: Polarity::Positive,
        }
    }

    pub fn negative(frame_index: usize, row: usize, col: usize) -> Self {
        PromptPoint {
            frame_index,
            row,
            col,
            polarity: Polarity::Negative,
        }
    }

    pub fn is_positive(&self) -> bool {
        self.polarity == Polarity::Positive
    }
}

/// Prompts grouped by frame, in registration order within a frame.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromptSet {
    by_frame: BTreeMap<usize, Vec<PromptPoint>>,
}

impl PromptSet {
    pub fn at(&self, frame: usize) -> &[PromptPoint] {
        self.by_frame.get(&frame).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Every prompt registered on frames `0..=frame`.
    pub fn through(&self, frame: usize) -> Vec<PromptPoint> {
        self.by_frame.range(..=frame).flat_map(|(_, v)| v.iter().copied()).collect()
    }

    pub fn all(&self) -> Vec<PromptPoint> {
        self.by_frame.values().flatten().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.by_frame.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn extend(&mut self, prompts: &[PromptPoint]) {
        for p in prompts {
            self.by_frame.entry(p.frame_index).or_default().push(*p);
        }
    }
}

/// Prompt file layout: `{"prompts": [{"frame", "row", "col", "polarity"}]}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptFile {
    pub prompts: Vec<PromptPoint>,
}

pub fn read_prompts(path: impl AsRef<Path>) -> Result<Vec<PromptPoint>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let file: PromptFile = serde_json::from_str(&text).map_err(Error::json)?;
    Ok(file.prompts)
}

pub fn write_prompts(prompts: &[PromptPoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = PromptFile {
        prompts: prompts.to_vec(),
    };
    let text = serde_json::to_string_pretty(&file).expect("prompts serialize") + "\n";
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Tuning knobs of the native tracker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerParams {
    /// NDVI at or below this value counts as bare ground.
    pub threshold: f64,
    /// Per-frame threshold overrides, e.g. for dense summer vegetation.
    pub frame_thresholds: BTreeMap<usize, f64>,
    pub connectivity: Connectivity,
    /// Minimum fraction of a component covered by the previous mask for it
    /// to be carried forward.
    pub memory_overlap: f64,
    /// Components smaller than this many cells are ignored.
    pub min_component_area: usize,
    /// Service only: recompute masks immediately after prompts are added.
    pub auto_propagate: bool,
}

impl Default for TrackerParams {
    fn default() -> Self {
        TrackerParams {
            threshold: 0.1,
            frame_thresholds: BTreeMap::new(),
            connectivity: Connectivity::Eight,
            memory_overlap: 0.05,
            min_component_area: 0,
            auto_propagate: false,
        }
    }
}

impl TrackerParams {
    pub fn validate(&self) -> Result<()> {
        let check = |name: String, t: f64| {
            if (-1.0..=1.0).contains(&t) {
                Ok(())
            } else {
                Err(Error::Argument(format!("{name} {t} outside [-1, 1]")))
            }
        };
        check("threshold".into(), self.threshold)?;
        for (frame, t) in &self.frame_thresholds {
            check(format!("threshold for frame {frame}"), *t)?;
        }
        if !(self.memory_overlap > 0.0 && self.memory_overlap <= 1.0) {
            return Err(Error::Argument(format!(
                "memory_overlap {} outside (0, 1]",
                self.memory_overlap
            )));
        }
        Ok(())
    }

    pub fn threshold_for(&self, frame: usize) -> f64 {
        self.frame_thresholds.get(&frame).copied().unwrap_or(self.threshold)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let params: TrackerParams = serde_json::from_str(text).map_err(Error::json)?;
        params.validate()?;
        Ok(params)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        TrackerParams::from_json(&text)
    }
}
