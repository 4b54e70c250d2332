//! JSON wire protocol for external segmentation backends.
//!
//! ```text
//! POST /segment
//! {"frame": {"index", "width", "height", "cell_size", "date", "ndvi_b64" | "path"},
//!  "prompts": [{"frame", "row", "col", "polarity"}, ...],
//!  "prev_mask_b64": "...",            // optional
//!  "params": {...}}
//! -> {"mask_b64": "...", "confidence": 0.0..=1.0, "warnings": [...]}
//! ```
//!
//! `ndvi_b64` wraps the ESRI ASCII grid bytes of the frame and the mask
//! fields wrap binary PGM bytes, both as produced by [`crate::raster::io`].
//! Prompts carry the full history up to and including the frame.

use std::path::PathBuf;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::raster::io::{decode_grid, decode_mask, encode_grid, encode_mask, read_grid};
use crate::raster::{BinaryMask, NdviFrame};

use super::{BackendError, FrameRequest, PromptPoint, SegmentBackend, Segmentation, TrackerParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireFrame {
    pub index: usize,
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ndvi_b64: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub frame: WireFrame,
    pub prompts: Vec<PromptPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prev_mask_b64: Option<String>,
    #[serde(default)]
    pub params: TrackerParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub mask_b64: String,
    pub confidence: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Owned form of a decoded [`SegmentRequest`].
#[derive(Debug, Clone)]
pub struct DecodedRequest {
    pub frame: NdviFrame,
    pub prompts: Vec<PromptPoint>,
    pub prev_mask: Option<BinaryMask>,
    pub params: TrackerParams,
}

impl DecodedRequest {
    pub fn as_request(&self) -> FrameRequest<'_> {
        FrameRequest {
            frame_index: self.frame.frame_index.unwrap_or(0),
            frame: &self.frame,
            prompts: &self.prompts,
            prev_mask: self.prev_mask.as_ref(),
            params: &self.params,
        }
    }
}

fn protocol(msg: impl std::fmt::Display) -> BackendError {
    BackendError::Protocol(msg.to_string())
}

/// Builds the wire request for one frame with the grid inlined.
pub fn encode_request(request: &FrameRequest<'_>) -> Result<SegmentRequest, BackendError> {
    let grid = &request.frame.grid;
    let ndvi = encode_grid(grid).map_err(protocol)?;
    Ok(SegmentRequest {
        frame: WireFrame {
            index: request.frame_index,
            width: grid.width(),
            height: grid.height(),
            cell_size: grid.cell_size(),
            date: Some(request.frame.date),
            ndvi_b64: Some(STANDARD.encode(ndvi)),
            path: None,
        },
        prompts: request.prompts.to_vec(),
        prev_mask_b64: request.prev_mask.map(|m| STANDARD.encode(encode_mask(m))),
        params: request.params.clone(),
    })
}

pub fn decode_request(body: &SegmentRequest) -> Result<DecodedRequest, BackendError> {
    let wf = &body.frame;
    let grid = match (&wf.ndvi_b64, &wf.path) {
        (Some(b64), _) => {
            let bytes = STANDARD.decode(b64).map_err(|e| protocol(format!("ndvi_b64: {e}")))?;
            decode_grid(&bytes).map_err(|e| protocol(format!("ndvi_b64: {e}")))?
        }
        (None, Some(path)) => read_grid(PathBuf::from(path)).map_err(|e| protocol(format!("frame path: {e}")))?,
        (None, None) => return Err(protocol("frame carries neither ndvi_b64 nor path")),
    };
    if grid.width() != wf.width || grid.height() != wf.height {
        return Err(protocol(format!(
            "frame payload is {}x{}, header says {}x{}",
            grid.width(),
            grid.height(),
            wf.width,
            wf.height
        )));
    }
    let date = wf.date.unwrap_or_default();
    let mut frame = NdviFrame::new(grid, date).map_err(protocol)?;
    frame.frame_index = Some(wf.index);

    let prev_mask = body
        .prev_mask_b64
        .as_ref()
        .map(|b64| {
            let bytes = STANDARD.decode(b64).map_err(|e| protocol(format!("prev_mask_b64: {e}")))?;
            let mask = decode_mask(&bytes).map_err(|e| protocol(format!("prev_mask_b64: {e}")))?;
            if mask.width() != wf.width || mask.height() != wf.height {
                return Err(protocol("prev_mask dimensions differ from frame"));
            }
            Ok(mask)
        })
        .transpose()?;
    if let Some(p) = body.prompts.iter().find(|p| p.frame_index > wf.index) {
        return Err(protocol(format!("prompt for frame {} sent with frame {}", p.frame_index, wf.index)));
    }
    body.params.validate().map_err(protocol)?;
    Ok(DecodedRequest {
        frame,
        prompts: body.prompts.clone(),
        prev_mask,
        params: body.params.clone(),
    })
}

pub fn encode_response(seg: &Segmentation) -> SegmentResponse {
    SegmentResponse {
        mask_b64: STANDARD.encode(encode_mask(&seg.mask)),
        confidence: seg.confidence,
        warnings: seg.warnings.clone(),
    }
}

/// Decodes a response and enforces the dimension and confidence contract.
/// The returned mask takes `cell_size` from the frame, not the payload.
pub fn decode_response(
    body: &SegmentResponse,
    width: usize,
    height: usize,
    cell_size: f64,
) -> Result<Segmentation, BackendError> {
    let bytes = STANDARD.decode(&body.mask_b64).map_err(|e| protocol(format!("mask_b64: {e}")))?;
    let mask = decode_mask(&bytes).map_err(|e| protocol(format!("mask_b64: {e}")))?;
    if mask.width() != width || mask.height() != height {
        return Err(protocol(format!(
            "response mask is {}x{}, frame is {width}x{height}",
            mask.width(),
            mask.height()
        )));
    }
    if !(0.0..=1.0).contains(&body.confidence) {
        return Err(protocol(format!("confidence {} outside [0, 1]", body.confidence)));
    }
    let mask = BinaryMask::from_bits(width, height, cell_size, mask.bits().to_vec()).map_err(protocol)?;
    Ok(Segmentation {
        mask,
        confidence: body.confidence,
        warnings: body.warnings.clone(),
    })
}

/// Server side of the protocol: decode, segment, encode.
pub fn handle_segment(backend: &dyn SegmentBackend, body: &SegmentRequest) -> Result<SegmentResponse, BackendError> {
    let decoded = decode_request(body)?;
    let seg = backend.segment(&decoded.as_request())?;
    let t = decoded.frame.template();
    if !seg.mask.fits(t) {
        return Err(protocol(format!(
            "backend produced a {}x{} mask for a {}x{} frame",
            seg.mask.width(),
            seg.mask.height(),
            t.width,
            t.height
        )));
    }
    Ok(encode_response(&seg))
}

/// Client for a backend reachable over HTTP.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    base_url: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            agent,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    /// Sends an already encoded request.
    pub fn send(&self, body: &SegmentRequest) -> Result<SegmentResponse, BackendError> {
        let url = format!("{}/segment", self.base_url);
        let payload = serde_json::to_string(body).map_err(protocol)?;
        let mut resp = self
            .agent
            .post(&url)
            .header("content-type", "application/json")
            .send(payload)
            .map_err(|e| BackendError::Unavailable(format!("{url}: {e}")))?;
        let status = resp.status();
        let text = resp
            .body_mut()
            .with_config()
            .limit(u64::MAX)
            .read_to_string()
            .map_err(|e| BackendError::Unavailable(format!("{url}: {e}")))?;
        if status.is_server_error() {
            return Err(BackendError::Unavailable(format!("{url}: HTTP {status}: {text}")));
        }
        if !status.is_success() {
            return Err(BackendError::Rejected(format!("HTTP {status}: {text}")));
        }
        serde_json::from_str(&text).map_err(|e| protocol(format!("response body: {e}")))
    }
}

impl SegmentBackend for HttpBackend {
    fn segment(&self, request: &FrameRequest<'_>) -> Result<Segmentation, BackendError> {
        let body = encode_request(request)?;
        let resp = self.send(&body)?;
        let grid = &request.frame.grid;
        decode_response(&resp, grid.width(), grid.height(), grid.cell_size())
    }

    fn name(&self) -> String {
        self.base_url.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{GeoGrid, GridTemplate};
    use crate::tracker::NativeBackend;

    fn frame() -> NdviFrame {
        let t = GridTemplate::new(6, 4, 2.0, 100.0, 50.0).unwrap();
        let grid = GeoGrid::from_fn(t, |r, c| Some(if (1..3).contains(&r) && c < 3 { 0.05 } else { 0.7 })).unwrap();
        let mut f = NdviFrame::new(grid, NaiveDate::from_ymd_opt(2019, 3, 1).unwrap()).unwrap();
        f.frame_index = Some(2);
        f
    }

    #[test]
    fn native_through_wire_is_identical() {
        let f = frame();
        let prev = BinaryMask::from_fn(f.template(), |r, c| r == 1 && c == 0);
        let prompts = [PromptPoint::positive(0, 3, 3), PromptPoint::negative(2, 0, 5)];
        let params = TrackerParams::default();
        let req = FrameRequest {
            frame_index: 2,
            frame: &f,
            prompts: &prompts,
            prev_mask: Some(&prev),
            params: &params,
        };
        let direct = NativeBackend.segment(&req).unwrap();
        let wire = encode_request(&req).unwrap();
        let json = serde_json::to_string(&wire).unwrap();
        let parsed: SegmentRequest = serde_json::from_str(&json).unwrap();
        let resp = handle_segment(&NativeBackend, &parsed).unwrap();
        let resp: SegmentResponse = serde_json::from_str(&serde_json::to_string(&resp).unwrap()).unwrap();
        let via = decode_response(&resp, 6, 4, 2.0).unwrap();
        assert_eq!(encode_mask(&via.mask), encode_mask(&direct.mask));
        assert_eq!(via.confidence, 1.0);
        assert_eq!(via.mask.count(), 6);
    }

    #[test]
    fn wrong_dimensions_rejected() {
        let seg = Segmentation {
            mask: BinaryMask::empty(5, 4, 2.0),
            confidence: 0.5,
            warnings: vec![],
        };
        let resp = encode_response(&seg);
        assert!(matches!(decode_response(&resp, 6, 4, 2.0), Err(BackendError::Protocol(_))));
    }

    #[test]
    fn confidence_range_enforced() {
        let seg = Segmentation {
            mask: BinaryMask::empty(6, 4, 2.0),
            confidence: 1.5,
            warnings: vec![],
        };
        assert!(matches!(
            decode_response(&encode_response(&seg), 6, 4, 2.0),
            Err(BackendError::Protocol(_))
        ));
    }

    #[test]
    fn garbage_payloads_rejected() {
        let resp = SegmentResponse {
            mask_b64: "***".into(),
            confidence: 1.0,
            warnings: vec![],
        };
        assert!(matches!(decode_response(&resp, 1, 1, 1.0), Err(BackendError::Protocol(_))));
        let f = frame();
        let params = TrackerParams::default();
        let req = FrameRequest {
            frame_index: 2,
            frame: &f,
            prompts: &[],
            prev_mask: None,
            params: &params,
        };
        let mut wire = encode_request(&req).unwrap();
        wire.frame.width = 7;
        assert!(decode_request(&wire).is_err());
        wire.frame.width = 6;
        wire.frame.ndvi_b64 = None;
        assert!(decode_request(&wire).is_err());
    }

    #[test]
    fn frame_by_path() {
        let dir = tempfile::tempdir().unwrap();
        let f = frame();
        let path = dir.path().join("f.asc");
        crate::raster::io::write_grid(&f.grid, &path).unwrap();
        let body = SegmentRequest {
            frame: WireFrame {
                index: 0,
                width: 6,
                height: 4,
                cell_size: 2.0,
                date: None,
                ndvi_b64: None,
                path: Some(path.display().to_string()),
            },
            prompts: vec![PromptPoint::positive(0, 1, 1)],
            prev_mask_b64: None,
            params: TrackerParams::default(),
        };
        let resp = handle_segment(&NativeBackend, &body).unwrap();
        assert_eq!(decode_response(&resp, 6, 4, 2.0).unwrap().mask.count(), 6);
    }

    #[test]
    fn unreachable_backend_is_unavailable() {
        let backend = HttpBackend::new("http://127.0.0.1:9", Duration::from_millis(500));
        let f = frame();
        let params = TrackerParams::default();
        let req = FrameRequest {
            frame_index: 0,
            frame: &f,
            prompts: &[],
            prev_mask: None,
            params: &params,
        };
        assert!(matches!(backend.segment(&req), Err(BackendError::Unavailable(_))));
    }
}
