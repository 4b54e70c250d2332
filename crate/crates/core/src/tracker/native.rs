use crate::error::{Error, Result};
use crate::raster::{threshold_mask, BinaryMask, NdviFrame};

use super::components::label_components;
use super::{BackendError, FrameRequest, Polarity, PromptPoint, SegmentBackend, Segmentation, TrackerParams};

/// Component-selection segmentation of one frame.
///
/// The frame is thresholded into bare ground and split into connected
/// components (components below `min_component_area` are dropped). A
/// component is kept when it holds a positive prompt, or when at least
/// `memory_overlap` of its cells were in `prev_mask`. A component holding a
/// negative prompt and no positive prompt is always dropped; one holding
/// both is kept with a warning.
pub fn segment_frame(
    ndvi: &NdviFrame,
    prompts_at_frame: &[PromptPoint],
    prev_mask: Option<&BinaryMask>,
    params: &TrackerParams,
) -> Result<Segmentation> {
    let template = ndvi.template();
    if let Some(prev) = prev_mask {
        if !prev.fits(template) {
            return Err(Error::Dimension(format!(
                "previous mask {}x{} does not match frame {}x{}",
                prev.width(),
                prev.height(),
                template.width,
                template.height
            )));
        }
    }
    for p in prompts_at_frame {
        if !template.contains(p.row, p.col) {
            return Err(Error::PromptPlacement {
                point: *p,
                reason: format!("outside the {}x{} frame", template.width, template.height),
            });
        }
    }

    let threshold = params.threshold_for(ndvi.frame_index.unwrap_or(0));
    let bare = threshold_mask(ndvi, threshold)?;
    let comps = label_components(&bare, params.connectivity);
    let n = comps.count();

    let mut positive = vec![false; n + 1];
    let mut negative = vec![false; n + 1];
    let mut first_dual: Vec<Option<PromptPoint>> = vec![None; n + 1];
    for p in prompts_at_frame {
        let label = comps.label_at(p.row, p.col) as usize;
        if label == 0 {
            continue;
        }
        match p.polarity {
            Polarity::Positive => positive[label] = true,
            Polarity::Negative => negative[label] = true,
        }
        if first_dual[label].is_none() {
            first_dual[label] = Some(*p);
        }
    }

    let mut overlap = vec![0usize; n + 1];
    if let Some(prev) = prev_mask {
        for (label, &was) in comps.labels.iter().zip(prev.bits()) {
            if was && *label != 0 {
                overlap[*label as usize] += 1;
            }
        }
    }

    let mut keep = vec![false; n + 1];
    let mut warnings = Vec::new();
    for label in 1..=n {
        let size = comps.sizes[label - 1];
        if size < params.min_component_area {
            continue;
        }
        let remembered = prev_mask.is_some() && overlap[label] as f64 / size as f64 >= params.memory_overlap;
        keep[label] = if positive[label] {
            if negative[label] {
                let p = first_dual[label].expect("prompted component");
                warnings.push(format!(
                    "component at row {}, col {} has both positive and negative prompts; kept",
                    p.row, p.col
                ));
            }
            true
        } else if negative[label] {
            false
        } else {
            remembered
        };
    }

    let bits = comps.labels.iter().map(|&l| keep[l as usize]).collect();
    let mask = BinaryMask::from_bits(template.width, template.height, template.cell_size, bits)?;
    Ok(Segmentation {
        mask,
        confidence: 1.0,
        warnings,
    })
}

/// In-process deterministic backend built on [`segment_frame`].
#[derive(Debug, Clone, Copy, Default)]
pub struct NativeBackend;

impl SegmentBackend for NativeBackend {
    fn segment(&self, request: &FrameRequest<'_>) -> std::result::Result<Segmentation, BackendError> {
        segment_frame(
            request.frame,
            &request.prompts_at_frame(),
            request.prev_mask,
            request.params,
        )
        .map_err(|e| BackendError::Rejected(e.to_string()))
    }

    fn name(&self) -> String {
        "native".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{GeoGrid, GridTemplate};
    use chrono::NaiveDate;

    /// `#` bare (NDVI 0.0), `.` vegetated (0.8), `x` nodata.
    fn frame(rows: &[&str]) -> NdviFrame {
        let t = GridTemplate::new(rows[0].len(), rows.len(), 2.0, 0.0, 0.0).unwrap();
        let chars: Vec<Vec<char>> = rows.iter().map(|r| r.chars().collect()).collect();
        let grid = GeoGrid::from_fn(t, |r, c| match chars[r][c] {
            '#' => Some(0.0),
            'x' => None,
            _ => Some(0.8),
        })
        .unwrap();
        NdviFrame::new(grid, NaiveDate::from_ymd_opt(2018, 1, 1).unwrap()).unwrap()
    }

    fn mask_of(rows: &[&str]) -> BinaryMask {
        let bits = rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect();
        BinaryMask::from_bits(rows[0].len(), rows.len(), 2.0, bits).unwrap()
    }

    #[test]
    fn positive_prompt_selects_its_patch() {
        let f = frame(&["......", ".##...", ".##.##", "....##"]);
        let out = segment_frame(&f, &[PromptPoint::positive(0, 1, 1)], None, &TrackerParams::default()).unwrap();
        assert_eq!(out.mask, mask_of(&["......", ".##...", ".##...", "......"]));
        assert_eq!(out.confidence, 1.0);
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn memory_overlap_carries_component() {
        let f = frame(&["####", "####", "....", "#..."]);
        let prev = mask_of(&["##..", "##..", "....", "...."]);
        let out = segment_frame(&f, &[], Some(&prev), &TrackerParams::default()).unwrap();
        // 4 of 8 cells remembered; the lone corner cell is fresh.
        assert_eq!(out.mask, mask_of(&["####", "####", "....", "...."]));
    }

    #[test]
    fn overlap_below_tau_is_dropped() {
        let f = frame(&["##########", "##########"]);
        let prev = mask_of(&["#.........", ".........."]);
        let params = TrackerParams {
            memory_overlap: 0.1,
            ..TrackerParams::default()
        };
        // 1/20 = 0.05 < 0.1
        assert!(segment_frame(&f, &[], Some(&prev), &params).unwrap().mask.is_empty());
        let params = TrackerParams {
            memory_overlap: 0.05,
            ..TrackerParams::default()
        };
        assert_eq!(segment_frame(&f, &[], Some(&prev), &params).unwrap().mask.count(), 20);
    }

    #[test]
    fn negative_vetoes_full_overlap() {
        let f = frame(&["##..", "##..", "...."]);
        let prev = mask_of(&["##..", "##..", "...."]);
        let out = segment_frame(&f, &[PromptPoint::negative(0, 0, 0)], Some(&prev), &TrackerParams::default()).unwrap();
        assert!(out.mask.is_empty());
    }

    #[test]
    fn dual_polarity_keeps_with_warning() {
        let f = frame(&["###.", "...."]);
        let prompts = [PromptPoint::negative(0, 0, 2), PromptPoint::positive(0, 0, 0)];
        let out = segment_frame(&f, &prompts, None, &TrackerParams::default()).unwrap();
        assert_eq!(out.mask.count(), 3);
        assert_eq!(out.warnings.len(), 1);
        assert!(out.warnings[0].contains("row 0, col 2"));
    }

    #[test]
    fn connectivity_and_min_area() {
        let f = frame(&["#...", ".#..", "...#"]);
        let p = [PromptPoint::positive(0, 0, 0)];
        let eight = segment_frame(&f, &p, None, &TrackerParams::default()).unwrap();
        assert_eq!(eight.mask.count(), 2);
        let four = TrackerParams {
            connectivity: crate::tracker::Connectivity::Four,
            ..TrackerParams::default()
        };
        assert_eq!(segment_frame(&f, &p, None, &four).unwrap().mask.count(), 1);
        let big = TrackerParams {
            min_component_area: 3,
            ..TrackerParams::default()
        };
        assert!(segment_frame(&f, &p, None, &big).unwrap().mask.is_empty());
    }

    #[test]
    fn nodata_never_selected() {
        let f = frame(&["#x#", "..."]);
        let p = [PromptPoint::positive(0, 0, 0)];
        let four = TrackerParams {
            connectivity: crate::tracker::Connectivity::Four,
            ..TrackerParams::default()
        };
        let out = segment_frame(&f, &p, None, &four).unwrap();
        assert_eq!(out.mask.bits(), &[true, false, false, false, false, false]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = frame(&["##", ".."]);
        assert!(segment_frame(&f, &[PromptPoint::positive(0, 5, 0)], None, &TrackerParams::default()).is_err());
        let prev = mask_of(&["###"]);
        assert!(matches!(
            segment_frame(&f, &[], Some(&prev), &TrackerParams::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn per_frame_threshold_override() {
        let t = GridTemplate::new(2, 1, 1.0, 0.0, 0.0).unwrap();
        let mut f = NdviFrame::new(
            GeoGrid::new(t, vec![0.15, 0.15]).unwrap(),
            NaiveDate::from_ymd_opt(2018, 7, 1).unwrap(),
        )
        .unwrap();
        f.frame_index = Some(4);
        let p = [PromptPoint::positive(4, 0, 0)];
        let mut params = TrackerParams::default();
        assert!(segment_frame(&f, &p, None, &params).unwrap().mask.is_empty());
        params.frame_thresholds.insert(4, 0.2);
        assert_eq!(segment_frame(&f, &p, None, &params).unwrap().mask.count(), 2);
    }
}
