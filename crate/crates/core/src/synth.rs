//! Deterministic synthetic scar sequences with known ground truth.
//!
//! An elliptical bare patch grows linearly in area on vegetated background.
//! Two small bare decoys sit away from the scar and never belong to it. An
//! optional second scar appears part way through the sequence.

use std::fs;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::io::write_mask;
use crate::raster::{BinaryMask, GeoGrid, GridTemplate, NdviFrame};
use crate::sequence::{build_sequence, export_sequence, DisplayFormat, SequenceManifest, MANIFEST_FILE};
use crate::tracker::{write_prompts, PromptPoint, TrackerParams};
use crate::VideoSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub start_date: NaiveDate,
    /// Scar area in cells at the first and last frame.
    pub start_cells: f64,
    pub end_cells: f64,
    pub background_ndvi: f64,
    pub scar_ndvi: f64,
    /// Half-width of the uniform noise added to every cell.
    pub noise: f64,
    /// Frame at which a second, disjoint scar appears.
    pub second_patch_from: Option<usize>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            frames: 24,
            width: 256,
            height: 256,
            cell_size: 2.0,
            start_date: NaiveDate::from_ymd_opt(2017, 1, 16).expect("valid date"),
            start_cells: 500.0,
            end_cells: 5000.0,
            background_ndvi: 0.6,
            scar_ndvi: 0.0,
            noise: 0.05,
            second_patch_from: None,
        }
    }
}

impl SynthConfig {
    pub fn two_patch() -> Self {
        SynthConfig {
            second_patch_from: Some(8),
            ..SynthConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::Argument("synthetic sequence needs at least 2 frames".into()));
        }
        if self.width < 64 || self.height < 64 {
            return Err(Error::Argument(format!(
                "synthetic grid must be at least 64x64, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.start_cells > 0.0 && self.end_cells >= self.start_cells) {
            return Err(Error::Argument("scar area must be positive and nondecreasing".into()));
        }
        // The scar ellipse must stay clear of the decoys and the second patch.
        let (a, b) = semi_axes(self.end_cells);
        if a > 0.4 * self.width as f64 || b > 0.28 * self.height as f64 {
            return Err(Error::Argument(format!(
                "{} cells do not fit a {}x{} grid",
                self.end_cells, self.width, self.height
            )));
        }
        if !(self.noise >= 0.0 && self.background_ndvi - self.noise > self.scar_ndvi + self.noise) {
            return Err(Error::Argument("noise bands of scar and background overlap".into()));
        }
        for v in [self.background_ndvi + self.noise, self.scar_ndvi - self.noise] {
            if !(-1.0..=1.0).contains(&v) {
                return Err(Error::Argument(format!("NDVI {v} outside [-1, 1]")));
            }
        }
        if let Some(k) = self.second_patch_from {
            if k == 0 || k >= self.frames {
                return Err(Error::Argument(format!("second patch frame {k} outside 1..{}", self.frames)));
            }
        }
        Ok(())
    }
}

/// Semi-axes (columns, rows) of the 1.4:1 ellipse with the given area.
fn semi_axes(cells: f64) -> (f64, f64) {
    let b = (cells / (1.4 * std::f64::consts::PI)).sqrt();
    (1.4 * b, b)
}

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    row: f64,
    col: f64,
    a: f64,
    b: f64,
}

impl Ellipse {
    fn contains(&self, r: usize, c: usize) -> bool {
        let dx = (c as f64 - self.col) / self.a;
        let dy = (r as f64 - self.row) / self.b;
        dx * dx + dy * dy <= 1.0
    }
}

#[derive(Debug, Clone)]
pub struct SynthScenario {
    pub config: SynthConfig,
    pub sequence: VideoSequence,
    pub truth: Vec<BinaryMask>,
    /// One positive prompt in the scar and one negative prompt on each decoy,
    /// all on frame 0.
    pub prompts: Vec<PromptPoint>,
    /// Positive prompt on the second scar at its first frame, when present.
    pub refine_prompts: Vec<PromptPoint>,
    pub params: TrackerParams,
}

impl SynthScenario {
    /// Truth restricted to the main scar (no second patch).
    pub fn main_truth(&self, frame: usize) -> BinaryMask {
        let t = self.sequence.template();
        let e = self.main_ellipse(frame);
        BinaryMask::from_fn(t, |r, c| e.contains(r, c))
    }

    fn main_ellipse(&self, frame: usize) -> Ellipse {
        main_ellipse(&self.config, frame)
    }
}

fn main_ellipse(cfg: &SynthConfig, frame: usize) -> Ellipse {
    let f = frame as f64 / (cfg.frames - 1) as f64;
    let (a, b) = semi_axes(cfg.start_cells + f * (cfg.end_cells - cfg.start_cells));
    Ellipse {
        row: cfg.height as f64 / 2.0,
        col: cfg.width as f64 / 2.0,
        a,
        b,
    }
}

fn second_ellipse(cfg: &SynthConfig, frame: usize) -> Option<Ellipse> {
    let from = cfg.second_patch_from?;
    if frame < from {
        return None;
    }
    let grow = (frame - from) as f64 / (cfg.frames - from).max(1) as f64;
    let radius = 4.0 + 6.0 * grow;
    Some(Ellipse {
        row: 0.12 * cfg.height as f64,
        col: 0.78 * cfg.width as f64,
        a: radius,
        b: radius,
    })
}

fn decoys(cfg: &SynthConfig) -> [Ellipse; 2] {
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    [
        Ellipse {
            row: 0.86 * h,
            col: 0.14 * w,
            a: 5.0,
            b: 5.0,
        },
        Ellipse {
            row: 0.84 * h,
            col: 0.82 * w,
            a: 6.0,
            b: 4.0,
        },
    ]
}

fn centre(e: &Ellipse) -> (usize, usize) {
    (e.row.round() as usize, e.col.round() as usize)
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthScenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let origin_x = 500_000.0;
    let origin_y = 3_400_000.0;
    let template = GridTemplate::new(cfg.width, cfg.height, cfg.cell_size, origin_x, origin_y)?;
    let decoys = decoys(cfg);

    let mut date = cfg.start_date;
    let mut frames = Vec::with_capacity(cfg.frames);
    let mut truth = Vec::with_capacity(cfg.frames);
    for k in 0..cfg.frames {
        if k > 0 {
            date += Duration::days(rng.random_range(8..=40));
        }
        let main = main_ellipse(cfg, k);
        let second = second_ellipse(cfg, k);
        let is_scar = |r: usize, c: usize| main.contains(r, c) || second.is_some_and(|e| e.contains(r, c));
        let mask = BinaryMask::from_fn(&template, is_scar);
        let grid = GeoGrid::from_fn(template, |r, c| {
            let bare = mask.get(r, c) || decoys.iter().any(|d| d.contains(r, c));
            let base = if bare { cfg.scar_ndvi } else { cfg.background_ndvi };
            let noise = if cfg.noise > 0.0 {
                rng.random_range(-cfg.noise..=cfg.noise)
            } else {
                0.0
            };
            Some(base + noise)
        })?;
        frames.push(NdviFrame::new(grid, date)?);
        truth.push(mask);
    }
    let sequence = build_sequence(frames)?;

    let (sr, sc) = centre(&main_ellipse(cfg, 0));
    let mut prompts = vec![PromptPoint::positive(0, sr, sc)];
    for d in &decoys {
        let (r, c) = centre(d);
        prompts.push(PromptPoint::negative(0, r, c));
    }
    let refine_prompts = match cfg.second_patch_from {
        Some(k) => {
            let (r, c) = centre(&second_ellipse(cfg, k).expect("patch exists from its first frame"));
            vec![PromptPoint::positive(k, r, c)]
        }
        None => Vec::new(),
    };
    Ok(SynthScenario {
        config: cfg.clone(),
        sequence,
        truth,
        prompts,
        refine_prompts,
        params: TrackerParams::default(),
    })
}

/// Writes the scenario as a working directory:
///
/// ```text
/// manifest.json, ndvi_*.asc, display_*.{png,pgm}
/// truth/mask_0000.pgm ...
/// prompts.json, refine_prompts.json, params.json, synth.json
/// ```
pub fn write_scenario(scenario: &SynthScenario, dir: impl AsRef<Path>, format: DisplayFormat) -> Result<SequenceManifest> {
    let dir = dir.as_ref();
    let manifest = export_sequence(&scenario.sequence, dir, format)?;
    let truth_dir = dir.join("truth");
    fs::create_dir_all(&truth_dir).map_err(|e| Error::io(format!("creating {}", truth_dir.display()), e))?;
    for (k, m) in scenario.truth.iter().enumerate() {
        write_mask(m, truth_dir.join(mask_file_name(k)))?;
    }
    write_prompts(&scenario.prompts, dir.join("prompts.json"))?;
    write_prompts(&scenario.refine_prompts, dir.join("refine_prompts.json"))?;
    let write_json = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    };
    write_json(
        "params.json",
        serde_json::to_string_pretty(&scenario.params).expect("params serialize") + "\n",
    )?;
    write_json(
        "synth.json",
        serde_json::to_string_pretty(&scenario.config).expect("config serializes") + "\n",
    )?;
    debug_assert!(dir.join(MANIFEST_FILE).exists());
    Ok(manifest)
}

/// `mask_{index:04}.pgm`, the layout shared by tracked and reference masks.
pub fn mask_file_name(index: usize) -> String {
    format!("mask_{index:04}.pgm")
}
