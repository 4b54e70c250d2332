//! Ordered NDVI frame sequences and their on-disk manifest.
//!
//! A sequence directory holds one `.asc` NDVI grid and one 8-bit display
//! frame per date plus `manifest.json`. Display pixels use a fixed map
//! `round(255 * (ndvi + 1) / 2)` so equal NDVI renders equally in every frame.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::io::{encode_gray_pgm, encode_gray_png, read_grid, write_grid};
use crate::raster::{GridTemplate, NdviFrame};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Gap (in days) above which consecutive frames trigger a warning.
pub const DEFAULT_GAP_WARNING_DAYS: i64 = 180;

#[derive(Debug, Clone, PartialEq)]
pub struct VideoSequence {
    frames: Vec<NdviFrame>,
    template: GridTemplate,
}

/// Long interval between two consecutive frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapWarning {
    pub after_frame: usize,
    pub from: NaiveDate,
    pub to: NaiveDate,
    pub days: i64,
}

/// Sorts frames by date, assigns indices `0..n` and checks that all frames
/// share one geometry. Spacing between dates may be irregular.
pub fn build_sequence(mut frames: Vec<NdviFrame>) -> Result<VideoSequence> {
    if frames.is_empty() {
        return Err(Error::Argument("a sequence needs at least one frame".into()));
    }
    frames.sort_by_key(|f| f.date);
    for pair in frames.windows(2) {
        if pair[0].date == pair[1].date {
            return Err(Error::Ordering(format!("duplicate date {}", pair[0].date)));
        }
    }
    let template = *frames[0].template();
    for f in &frames[1..] {
        if let Some(m) = template.describe_mismatch(f.template()) {
            return Err(Error::Template {
                frame: format!("frame dated {}", f.date),
                message: m,
            });
        }
    }
    for (i, f) in frames.iter_mut().enumerate() {
        f.frame_index = Some(i);
    }
    Ok(VideoSequence { frames, template })
}

impl VideoSequence {
    pub fn frames(&self) -> &[NdviFrame] {
        &self.frames
    }

    pub fn frame(&self, index: usize) -> Option<&NdviFrame> {
        self.frames.get(index)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn template(&self) -> &GridTemplate {
        &self.template
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.frames.iter().map(|f| f.date).collect()
    }

    /// Consecutive frame pairs further apart than `max_days`.
    pub fn long_gaps(&self, max_days: i64) -> Vec<GapWarning> {
        self.frames
            .windows(2)
            .enumerate()
            .filter_map(|(i, w)| {
                let days = (w[1].date - w[0].date).num_days();
                (days > max_days).then_some(GapWarning {
                    after_frame: i,
                    from: w[0].date,
                    to: w[1].date,
                    days,
                })
            })
            .collect()
    }
}

/// Grayscale display value for an NDVI sample; nodata renders black.
pub fn display_pixel(ndvi: Option<f64>) -> u8 {
    match ndvi {
        Some(v) => (255.0 * (v.clamp(-1.0, 1.0) + 1.0) / 2.0).round() as u8,
        None => 0,
    }
}

pub fn display_pixels(frame: &NdviFrame) -> Vec<u8> {
    frame
        .grid
        .values()
        .iter()
        .map(|&v| display_pixel((!v.is_nan()).then_some(v)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisplayFormat {
    #[default]
    Png,
    Pgm,
}

impl DisplayFormat {
    pub fn extension(self) -> &'static str {
        match self {
            DisplayFormat::Png => "png",
            DisplayFormat::Pgm => "pgm",
        }
    }

    pub fn encode(self, frame: &NdviFrame) -> Result<Vec<u8>> {
        let pixels = display_pixels(frame);
        match self {
            DisplayFormat::Png => encode_gray_png(frame.grid.width(), frame.grid.height(), &pixels),
            DisplayFormat::Pgm => Ok(encode_gray_pgm(frame.grid.width(), frame.grid.height(), &pixels)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFrame {
    pub index: usize,
    pub date: NaiveDate,
    pub ndvi_path: String,
    pub display_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub version: u32,
    pub cell_size_m: f64,
    pub width: usize,
    pub height: usize,
    pub origin_x: f64,
    pub origin_y: f64,
    #[serde(default)]
    pub display_format: DisplayFormat,
    pub frames: Vec<ManifestFrame>,
}

impl SequenceManifest {
    pub fn template(&self) -> GridTemplate {
        GridTemplate {
            width: self.width,
            height: self.height,
            cell_size: self.cell_size_m,
            origin_x: self.origin_x,
            origin_y: self.origin_y,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

/// Writes NDVI grids, display frames and `manifest.json` into `directory`.
pub fn export_sequence(seq: &VideoSequence, directory: impl AsRef<Path>, format: DisplayFormat) -> Result<SequenceManifest> {
    let dir = directory.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let entries: Vec<ManifestFrame> = seq
        .frames
        .par_iter()
        .enumerate()
        .map(|(i, frame)| {
            let ndvi_path = format!("ndvi_{i:04}.asc");
            let display_path = format!("display_{i:04}.{}", format.extension());
            write_grid(&frame.grid, dir.join(&ndvi_path))?;
            let target = dir.join(&display_path);
            fs::write(&target, format.encode(frame)?).map_err(|e| Error::io(format!("writing {}", target.display()), e))?;
            Ok(ManifestFrame {
                index: i,
                date: frame.date,
                ndvi_path,
                display_path,
            })
        })
        .collect::<Result<_>>()?;
    let t = seq.template;
    let manifest = SequenceManifest {
        version: MANIFEST_VERSION,
        cell_size_m: t.cell_size,
        width: t.width,
        height: t.height,
        origin_x: t.origin_x,
        origin_y: t.origin_y,
        display_format: format,
        frames: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_json()).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(manifest)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<SequenceManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let manifest: SequenceManifest = serde_json::from_str(&text).map_err(Error::json)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Argument(format!(
            "unsupported manifest version {} (expected {MANIFEST_VERSION})",
            manifest.version
        )));
    }
    Ok(manifest)
}

/// Resolves a manifest-relative path.
pub fn resolve(manifest_path: &Path, relative: &str) -> PathBuf {
    manifest_path.parent().unwrap_or_else(|| Path::new(".")).join(relative)
}

/// Loads and re-validates a sequence from its manifest.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<VideoSequence> {
    let path = path.as_ref();
    let manifest = read_manifest(path)?;
    validate_entries(&manifest)?;
    let template = manifest.template();
    template
        .validate()
        .map_err(|e| Error::Load {
            frame: 0,
            message: format!("manifest geometry: {e}"),
        })?;

    let frames = manifest
        .frames
        .par_iter()
        .map(|entry| {
            let load_err = |message: String| Error::Load {
                frame: entry.index,
                message,
            };
            let grid_path = resolve(path, &entry.ndvi_path);
            let grid = read_grid(&grid_path).map_err(|e| load_err(format!("{}: {e}", grid_path.display())))?;
            if let Some(m) = template.describe_mismatch(grid.template()) {
                return Err(Error::Template {
                    frame: format!("frame {}", entry.index),
                    message: m,
                });
            }
            let mut frame = NdviFrame::new(grid, entry.date).map_err(|e| load_err(e.to_string()))?;
            frame.frame_index = Some(entry.index);
            Ok(frame)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VideoSequence { frames, template })
}

fn validate_entries(manifest: &SequenceManifest) -> Result<()> {
    if manifest.frames.is_empty() {
        return Err(Error::Load {
            frame: 0,
            message: "manifest lists no frames".into(),
        });
    }
    for (expected, entry) in manifest.frames.iter().enumerate() {
        if entry.index != expected {
            return Err(Error::Load {
                frame: expected,
                message: format!("index gap: expected frame {expected}, found {}", entry.index),
            });
        }
    }
    for pair in manifest.frames.windows(2) {
        if pair[1].date <= pair[0].date {
            return Err(Error::Ordering(format!(
                "frame {} ({}) is not after frame {} ({})",
                pair[1].index, pair[1].date, pair[0].index, pair[0].date
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::GeoGrid;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn frame(date: &str, width: usize, value: f64) -> NdviFrame {
        let t = GridTemplate::new(width, 3, 2.0, 0.0, 6.0).unwrap();
        NdviFrame::new(GeoGrid::filled(t, value).unwrap(), d(date)).unwrap()
    }

    #[test]
    fn indices_follow_dates() {
        let seq = build_sequence(vec![
            frame("2017-03-07", 4, 0.3),
            frame("2017-01-16", 4, 0.1),
            frame("2017-02-05", 4, 0.2),
        ])
        .unwrap();
        assert_eq!(seq.dates(), vec![d("2017-01-16"), d("2017-02-05"), d("2017-03-07")]);
        let idx: Vec<_> = seq.frames().iter().map(|f| f.frame_index).collect();
        assert_eq!(idx, vec![Some(0), Some(1), Some(2)]);
        assert_eq!(seq.frame(1).unwrap().grid.get(0, 0), Some(0.2));
    }

    #[test]
    fn singleton() {
        let seq = build_sequence(vec![frame("2020-01-01", 2, 0.0)]).unwrap();
        assert_eq!(seq.len(), 1);
        assert_eq!(seq.frames()[0].frame_index, Some(0));
    }

    #[test]
    fn width_mismatch_names_frame() {
        let err = build_sequence(vec![frame("2020-01-01", 2, 0.0), frame("2020-02-01", 3, 0.0)]).unwrap_err();
        match err {
            Error::Template { frame, .. } => assert!(frame.contains("2020-02-01")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_dates_rejected() {
        let err = build_sequence(vec![frame("2020-01-01", 2, 0.0), frame("2020-01-01", 2, 0.5)]).unwrap_err();
        assert!(matches!(err, Error::Ordering(_)));
        assert!(build_sequence(vec![]).is_err());
    }

    #[test]
    fn idempotent_on_sorted_input() {
        let seq = build_sequence(vec![frame("2017-01-16", 4, 0.1), frame("2017-02-05", 4, 0.2)]).unwrap();
        let again = build_sequence(seq.frames().to_vec()).unwrap();
        assert_eq!(seq, again);
    }

    #[test]
    fn gap_warnings() {
        let seq = build_sequence(vec![
            frame("2017-01-16", 2, 0.1),
            frame("2017-02-05", 2, 0.2),
            frame("2017-12-05", 2, 0.2),
        ])
        .unwrap();
        let gaps = seq.long_gaps(DEFAULT_GAP_WARNING_DAYS);
        assert_eq!(gaps.len(), 1);
        assert_eq!(gaps[0].after_frame, 1);
        assert_eq!(gaps[0].days, 303);
    }

    #[test]
    fn display_mapping() {
        assert_eq!(display_pixel(Some(1.0)), 255);
        assert_eq!(display_pixel(Some(-1.0)), 0);
        assert_eq!(display_pixel(Some(0.0)), 128);
        assert_eq!(display_pixel(None), 0);
        let mut prev = 0;
        for i in -100..=100 {
            let p = display_pixel(Some(i as f64 / 100.0));
            assert!(p >= prev);
            prev = p;
        }
    }

    #[test]
    fn export_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let seq = build_sequence(vec![frame("2018-06-05", 4, 0.123456789), frame("2018-11-07", 4, -0.5)]).unwrap();
        for format in [DisplayFormat::Png, DisplayFormat::Pgm] {
            let manifest = export_sequence(&seq, dir.path(), format).unwrap();
            assert_eq!(manifest.frames[1].display_path, format!("display_0001.{}", format.extension()));
            let loaded = load_manifest(dir.path().join(MANIFEST_FILE)).unwrap();
            assert_eq!(loaded, seq);
        }
    }

    fn write_manifest(dir: &Path, edit: impl FnOnce(&mut SequenceManifest)) -> PathBuf {
        let seq = build_sequence(vec![
            frame("2018-06-05", 2, 0.1),
            frame("2018-07-05", 2, 0.2),
            frame("2018-08-05", 2, 0.3),
        ])
        .unwrap();
        let mut manifest = export_sequence(&seq, dir, DisplayFormat::Pgm).unwrap();
        edit(&mut manifest);
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, manifest.to_json()).unwrap();
        path
    }

    #[test]
    fn index_gap_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(dir.path(), |m| {
            m.frames.remove(1);
            m.frames[1].index = 2;
        });
        match load_manifest(path).unwrap_err() {
            Error::Load { frame, message } => {
                assert_eq!(frame, 1);
                assert!(message.contains("gap"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn decreasing_dates_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(dir.path(), |m| m.frames[2].date = d("2018-01-01"));
        assert!(matches!(load_manifest(path), Err(Error::Ordering(_))));
    }

    #[test]
    fn missing_file_names_frame() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(dir.path(), |m| m.frames[2].ndvi_path = "nope.asc".into());
        assert!(matches!(load_manifest(path), Err(Error::Load { frame: 2, .. })));
    }

    #[test]
    fn geometry_mismatch_against_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(dir.path(), |m| m.cell_size_m = 3.0);
        assert!(matches!(load_manifest(path), Err(Error::Template { .. })));
    }
}
