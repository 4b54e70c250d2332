use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::raster::BinaryMask;
use crate::sequence::VideoSequence;

use super::components::label_components;
use super::{FrameRequest, PromptPoint, PromptSet, SegmentBackend, Segmentation, TrackerParams};
use crate::raster::threshold_mask;

/// Backend output kept for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub mask: BinaryMask,
    pub confidence: f64,
    pub warnings: Vec<String>,
}

/// Interactive tracking state over one sequence.
///
/// Masks exist for frames `0..=cursor` and nowhere else. Each public
/// mutation bumps `revision` by exactly one, so replaying the same
/// operations reproduces the same revision.
#[derive(Clone)]
pub struct TrackSession {
    sequence: Arc<VideoSequence>,
    params: TrackerParams,
    prompts: PromptSet,
    results: Vec<FrameResult>,
    backend: Arc<dyn SegmentBackend>,
    revision: u64,
}

impl fmt::Debug for TrackSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrackSession")
            .field("frames", &self.sequence.len())
            .field("params", &self.params)
            .field("prompts", &self.prompts.len())
            .field("cursor", &self.cursor())
            .field("backend", &self.backend.name())
            .field("revision", &self.revision)
            .finish()
    }
}

impl TrackSession {
    /// Segments frame 0 from its prompts. Needs at least one positive prompt,
    /// and every prompt must be on frame 0.
    pub fn init(
        sequence: Arc<VideoSequence>,
        params: TrackerParams,
        frame0_prompts: &[PromptPoint],
        backend: Arc<dyn SegmentBackend>,
    ) -> Result<Self> {
        params.validate()?;
        if let Some(p) = frame0_prompts.iter().find(|p| p.frame_index != 0) {
            return Err(Error::Initialization(format!(
                "initial prompts must be on frame 0, found one on frame {}",
                p.frame_index
            )));
        }
        if !frame0_prompts.iter().any(PromptPoint::is_positive) {
            return Err(Error::Initialization("at least one positive prompt is required".into()));
        }
        let mut session = TrackSession {
            sequence,
            params,
            prompts: PromptSet::default(),
            results: Vec::new(),
            backend,
            revision: 0,
        };
        session.check_placement(frame0_prompts)?;
        session.prompts.extend(frame0_prompts);
        session.run(0, 1)?;
        session.revision = 1;
        Ok(session)
    }

    pub fn sequence(&self) -> &Arc<VideoSequence> {
        &self.sequence
    }

    pub fn params(&self) -> &TrackerParams {
        &self.params
    }

    pub fn prompts(&self) -> &PromptSet {
        &self.prompts
    }

    pub fn backend(&self) -> &Arc<dyn SegmentBackend> {
        &self.backend
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    /// Highest frame index with a valid mask.
    pub fn cursor(&self) -> Option<usize> {
        self.results.len().checked_sub(1)
    }

    pub fn is_complete(&self) -> bool {
        self.results.len() == self.sequence.len()
    }

    pub fn mask(&self, frame: usize) -> Option<&BinaryMask> {
        self.results.get(frame).map(|r| &r.mask)
    }

    pub fn frame_result(&self, frame: usize) -> Option<&FrameResult> {
        self.results.get(frame)
    }

    pub fn masks(&self) -> Vec<&BinaryMask> {
        self.results.iter().map(|r| &r.mask).collect()
    }

    /// Recomputes every frame from `from_frame` to the end of the sequence.
    ///
    /// On backend failure at frame `t` the masks for `from_frame..t` are
    /// kept, the cursor ends at `t - 1` and the error carries `t`.
    pub fn propagate(&mut self, from_frame: usize) -> Result<()> {
        self.propagate_range(from_frame, self.sequence.len())
    }

    /// Like [`propagate`](Self::propagate) but stops before frame `end`.
    pub fn propagate_range(&mut self, from_frame: usize, end: usize) -> Result<()> {
        self.check_propagation_start(from_frame)?;
        if end > self.sequence.len() || end < from_frame {
            return Err(Error::Precondition(format!(
                "propagation end {end} outside {from_frame}..={}",
                self.sequence.len()
            )));
        }
        self.revision += 1;
        self.run(from_frame, end)
    }

    /// Registers prompts on one frame without recomputing. Masks from that
    /// frame onward become stale and are dropped.
    pub fn add_prompts(&mut self, prompts: &[PromptPoint]) -> Result<usize> {
        let k = self.check_prompt_batch(prompts)?;
        self.prompts.extend(prompts);
        self.results.truncate(k);
        self.revision += 1;
        Ok(k)
    }

    /// Adds prompts on frame `k` and re-propagates from `k`. Masks for frames
    /// before `k` are untouched.
    pub fn refine(&mut self, prompts: &[PromptPoint]) -> Result<()> {
        self.refine_range(prompts, self.sequence.len())
    }

    /// Like [`refine`](Self::refine) but stops before frame `end`.
    pub fn refine_range(&mut self, prompts: &[PromptPoint], end: usize) -> Result<()> {
        let k = self.check_prompt_batch(prompts)?;
        self.check_propagation_start(k)?;
        if end > self.sequence.len() || end < k {
            return Err(Error::Precondition(format!(
                "refinement end {end} outside {k}..={}",
                self.sequence.len()
            )));
        }
        self.prompts.extend(prompts);
        self.revision += 1;
        self.run(k, end)
    }

    fn check_propagation_start(&self, from_frame: usize) -> Result<()> {
        let next = self.results.len();
        if from_frame > next {
            return Err(Error::Precondition(format!(
                "cannot propagate from frame {from_frame}: masks exist only up to frame {}",
                self.cursor().map_or("none".to_string(), |c| c.to_string())
            )));
        }
        Ok(())
    }

    /// Validates a prompt batch and returns its common frame.
    fn check_prompt_batch(&self, prompts: &[PromptPoint]) -> Result<usize> {
        let Some(first) = prompts.first() else {
            return Err(Error::Argument("no prompts given".into()));
        };
        let k = first.frame_index;
        if let Some(p) = prompts.iter().find(|p| p.frame_index != k) {
            return Err(Error::Argument(format!(
                "prompts span frames {k} and {}; refine one frame at a time",
                p.frame_index
            )));
        }
        self.check_placement(prompts)?;
        Ok(k)
    }

    /// Bounds for every prompt; positive prompts must also sit on bare
    /// ground inside a component large enough to be selectable.
    fn check_placement(&self, prompts: &[PromptPoint]) -> Result<()> {
        let n = self.sequence.len();
        let template = self.sequence.template();
        for p in prompts {
            if p.frame_index >= n {
                return Err(Error::PromptPlacement {
                    point: *p,
                    reason: format!("frame outside 0..{n}"),
                });
            }
            if !template.contains(p.row, p.col) {
                return Err(Error::PromptPlacement {
                    point: *p,
                    reason: format!("cell outside the {}x{} frame", template.width, template.height),
                });
            }
            if !p.is_positive() {
                continue;
            }
            let frame = &self.sequence.frames()[p.frame_index];
            let threshold = self.params.threshold_for(p.frame_index);
            match frame.grid.get(p.row, p.col) {
                None => {
                    return Err(Error::PromptPlacement {
                        point: *p,
                        reason: "positive prompt on a nodata cell".into(),
                    })
                }
                Some(v) if v > threshold => {
                    return Err(Error::PromptPlacement {
                        point: *p,
                        reason: format!("positive prompt on vegetated cell (NDVI {v} > threshold {threshold})"),
                    })
                }
                Some(_) => {}
            }
            if self.params.min_component_area > 1 {
                let comps = label_components(&threshold_mask(frame, threshold)?, self.params.connectivity);
                let size = comps.size_of(comps.label_at(p.row, p.col));
                if size < self.params.min_component_area {
                    return Err(Error::PromptPlacement {
                        point: *p,
                        reason: format!(
                            "bare patch of {size} cells is below min_component_area {}",
                            self.params.min_component_area
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    fn run(&mut self, from: usize, end: usize) -> Result<()> {
        self.results.truncate(from);
        let template = *self.sequence.template();
        for t in from..end {
            let frame = &self.sequence.frames()[t];
            let history = self.prompts.through(t);
            let request = FrameRequest {
                frame_index: t,
                frame,
                prompts: &history,
                prev_mask: t.checked_sub(1).map(|p| &self.results[p].mask),
                params: &self.params,
            };
            let seg = self
                .backend
                .segment(&request)
                .map_err(|source| Error::Backend { frame: t, source })?;
            let Segmentation {
                mask,
                confidence,
                warnings,
            } = seg;
            if mask.width() != template.width || mask.height() != template.height {
                return Err(Error::Backend {
                    frame: t,
                    source: super::BackendError::Protocol(format!(
                        "mask is {}x{}, frame is {}x{}",
                        mask.width(),
                        mask.height(),
                        template.width,
                        template.height
                    )),
                });
            }
            let mask = BinaryMask::from_bits(template.width, template.height, template.cell_size, mask.bits().to_vec())?;
            self.results.push(FrameResult {
                mask,
                confidence,
                warnings,
            });
        }
        Ok(())
    }
}
