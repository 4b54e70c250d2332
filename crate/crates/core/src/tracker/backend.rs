use thiserror::Error;

use crate::raster::{BinaryMask, NdviFrame};

use super::{PromptPoint, TrackerParams};

/// Everything a backend sees when segmenting one frame.
#[derive(Debug, Clone, Copy)]
pub struct FrameRequest<'a> {
    pub frame_index: usize,
    pub frame: &'a NdviFrame,
    /// Prompts registered on frames `0..=frame_index`, oldest frame first.
    pub prompts: &'a [PromptPoint],
    pub prev_mask: Option<&'a BinaryMask>,
    pub params: &'a TrackerParams,
}

impl FrameRequest<'_> {
    /// Prompts pinned to the frame being segmented.
    pub fn prompts_at_frame(&self) -> Vec<PromptPoint> {
        self.prompts
            .iter()
            .filter(|p| p.frame_index == self.frame_index)
            .copied()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub mask: BinaryMask,
    /// In `[0, 1]`; the native backend always reports 1.
    pub confidence: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("backend rejected request: {0}")]
    Rejected(String),
}

/// Anything that can produce a mask for one frame.
pub trait SegmentBackend: Send + Sync {
    fn segment(&self, request: &FrameRequest<'_>) -> Result<Segmentation, BackendError>;

    /// Short identifier recorded with persisted sessions.
    fn name(&self) -> String;
}
