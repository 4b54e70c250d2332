use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::NaiveDate;
use lsvt_core::analysis::{
    area_series, detect_spikes, expansion_diff, interannual_pairs, seasonal_split, AreaSeries, MonthWindow,
};
use lsvt_core::metrics::evaluate_sequence;
use lsvt_core::raster::io::{read_grid, read_mask, write_grid, write_mask};
use lsvt_core::raster::{compute_ndvi, resample_bilinear, BinaryMask, NdviFrame, SpectralFrame};
use lsvt_core::sequence::{build_sequence, export_sequence, load_manifest, DisplayFormat, MANIFEST_FILE};
use lsvt_core::store::{execute, Execution, ReplayContext, SessionOp, SessionRecord, SessionStore};
use lsvt_core::synth::{generate, mask_file_name, write_scenario, SynthConfig};
use lsvt_core::tracker::{read_prompts, HttpBackend, NativeBackend, PromptPoint, SegmentBackend};
use lsvt_core::{Error, TrackSession, TrackerParams};

use crate::{Analyze, Cli, Command, Display};

pub struct CliError {
    pub code: u8,
    pub message: String,
}

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_BACKEND: u8 = 4;

fn usage(message: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn data(message: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_DATA,
        message: message.into(),
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Argument(_)
            | Error::PromptPlacement { .. }
            | Error::Initialization(_)
            | Error::Precondition(_)
            | Error::Pairing(_) => EXIT_USAGE,
            Error::Backend { .. } => EXIT_BACKEND,
            _ => EXIT_DATA,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

struct Ctx {
    verbose: bool,
}

impl Ctx {
    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }
}

pub fn run(cli: &Cli) -> CliResult {
    let ctx = Ctx { verbose: cli.verbose };
    match &cli.command {
        Command::Ndvi { red, nir, scale, out } => ndvi(&ctx, red, nir, *scale, out),
        Command::Resample { input, cell, out } => resample(&ctx, input, *cell, out),
        Command::Build {
            frames,
            dates,
            out,
            display,
            gap_days,
        } => build(&ctx, frames, dates, out, *display, *gap_days),
        Command::Track {
            manifest,
            prompts,
            params,
            out,
            backend_url,
        } => track(&ctx, manifest, prompts, params.as_deref(), out, backend_url.as_deref()),
        Command::Refine { session, prompts } => refine(&ctx, session, prompts),
        Command::Eval {
            pred,
            truth,
            out,
            manifest,
            json,
        } => eval(&ctx, pred, truth, out, manifest.as_deref(), *json),
        Command::Analyze(a) => analyze(&ctx, &a.command, a.json),
        Command::Synth {
            out,
            seed,
            frames,
            size,
            second_patch,
            display,
        } => synth(&ctx, out, *seed, *frames, *size, *second_patch, *display),
    }
}

fn display_format(d: Display) -> DisplayFormat {
    match d {
        Display::Png => DisplayFormat::Png,
        Display::Pgm => DisplayFormat::Pgm,
    }
}

fn write_text(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| data(format!("writing {}: {e}", path.display())))
}

fn ndvi(ctx: &Ctx, red: &Path, nir: &Path, scale: f64, out: &Path) -> CliResult {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(usage(format!("--scale must be positive, got {scale}")));
    }
    let red = read_grid(red)?;
    let nir = read_grid(nir)?;
    // The date is irrelevant to a single NDVI grid.
    let frame = SpectralFrame::new(red, nir, NaiveDate::default(), scale).map_err(|e| data(e.to_string()))?;
    let ndvi = compute_ndvi(&frame)?;
    write_grid(&ndvi.grid, out)?;
    ctx.log(format!("wrote {} ({}x{})", out.display(), ndvi.grid.width(), ndvi.grid.height()));
    Ok(())
}

fn resample(ctx: &Ctx, input: &Path, cell: f64, out: &Path) -> CliResult {
    if !(cell.is_finite() && cell > 0.0) {
        return Err(usage(format!("--cell must be positive, got {cell}")));
    }
    let grid = read_grid(input)?;
    let res = resample_bilinear(&grid, cell)?;
    write_grid(&res, out)?;
    ctx.log(format!(
        "resampled {}x{} @ {} m to {}x{} @ {cell} m",
        grid.width(),
        grid.height(),
        grid.cell_size(),
        res.width(),
        res.height()
    ));
    Ok(())
}

/// Reads a `filename,date` sidecar.
fn read_dates(path: &Path) -> CliResult<Vec<(String, NaiveDate)>> {
    let text = fs::read_to_string(path).map_err(|e| data(format!("reading {}: {e}", path.display())))?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| data(format!("{}: {e}", path.display())))?
        .clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["filename", "date"] {
        return Err(data(format!("{}: expected header filename,date", path.display())));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| data(format!("{} line {line}: {e}", path.display())))?;
        let date = record[1]
            .trim()
            .parse()
            .map_err(|e| data(format!("{} line {line}: invalid date {:?}: {e}", path.display(), &record[1])))?;
        rows.push((record[0].trim().to_string(), date));
    }
    if rows.is_empty() {
        return Err(data(format!("{}: no frames listed", path.display())));
    }
    Ok(rows)
}

fn build(ctx: &Ctx, frames: &Path, dates: &Path, out: &Path, display: Display, gap_days: i64) -> CliResult {
    if gap_days <= 0 {
        return Err(usage("--gap-days must be positive"));
    }
    let rows = read_dates(dates)?;
    let mut ndvi = Vec::with_capacity(rows.len());
    for (name, date) in rows {
        let grid = read_grid(frames.join(&name)).map_err(|e| data(format!("{name}: {e}")))?;
        ndvi.push(NdviFrame::new(grid, date).map_err(|e| data(format!("{name}: {e}")))?);
    }
    let seq = build_sequence(ndvi)?;
    for gap in seq.long_gaps(gap_days) {
        eprintln!(
            "warning: {} days between frame {} ({}) and frame {} ({})",
            gap.days,
            gap.after_frame,
            gap.from,
            gap.after_frame + 1,
            gap.to
        );
    }
    let dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    export_sequence(&seq, dir, display_format(display))?;
    let written = dir.join(MANIFEST_FILE);
    if out.file_name() != Some(MANIFEST_FILE.as_ref()) {
        fs::rename(&written, out).map_err(|e| data(format!("renaming to {}: {e}", out.display())))?;
    }
    ctx.log(format!("{} frames -> {}", seq.len(), out.display()));
    Ok(())
}

fn backend_for(url: Option<&str>) -> Arc<dyn SegmentBackend> {
    match url {
        Some(u) if !u.is_empty() && u != "native" => Arc::new(HttpBackend::new(u, HttpBackend::DEFAULT_TIMEOUT)),
        _ => Arc::new(NativeBackend),
    }
}

/// Prompts grouped by frame, ascending.
fn group_prompts(prompts: Vec<PromptPoint>) -> BTreeMap<usize, Vec<PromptPoint>> {
    let mut groups: BTreeMap<usize, Vec<PromptPoint>> = BTreeMap::new();
    for p in prompts {
        groups.entry(p.frame_index).or_default().push(p);
    }
    groups
}

/// Executes ops in order, persisting each to the store.
fn apply_ops(
    ctx: &Ctx,
    store: &SessionStore,
    record: &mut SessionRecord,
    mut state: Option<TrackSession>,
    ops: Vec<SessionOp>,
    replay: &ReplayContext,
) -> (Option<TrackSession>, CliResult) {
    for op in ops {
        match execute(state.as_ref(), &op, replay) {
            Execution::Rejected(e) => return (state, Err(e.into())),
            Execution::Applied { session, logged, error } => {
                let persisted = store
                    .append(&logged)
                    .and_then(|_| store.write_masks(&session))
                    .and_then(|_| {
                        record.sync(&session);
                        record.last_error = error.as_ref().map(|e| e.to_string());
                        store.write_record(record)
                    });
                let label = match &op {
                    SessionOp::Init { .. } => "init".to_string(),
                    SessionOp::AddPrompts { prompts } | SessionOp::Refine { prompts, .. } => {
                        format!("refine at frame {}", prompts[0].frame_index)
                    }
                    SessionOp::Propagate { from_frame, .. } => format!("propagate from frame {from_frame}"),
                };
                let cursor = session.cursor().map_or("none".to_string(), |c| c.to_string());
                ctx.log(format!("{label}: cursor {cursor}, revision {}", session.revision()));
                state = Some(session);
                if let Err(e) = persisted {
                    return (state, Err(e.into()));
                }
                if let Some(e) = error {
                    return (state, Err(e.into()));
                }
            }
        }
    }
    (state, Ok(()))
}

/// Writes `mask_{k:04}.pgm` for every tracked frame and removes stale ones.
fn write_outputs(out: &Path, session: &TrackSession) -> CliResult {
    let masks = session.masks();
    for (k, m) in masks.iter().enumerate() {
        write_mask(m, out.join(mask_file_name(k)))?;
    }
    for k in masks.len()..session.sequence().len() {
        let stale = out.join(mask_file_name(k));
        if stale.exists() {
            fs::remove_file(&stale).map_err(|e| data(format!("removing {}: {e}", stale.display())))?;
        }
    }
    Ok(())
}

fn track(ctx: &Ctx, manifest: &Path, prompts: &Path, params: Option<&Path>, out: &Path, backend_url: Option<&str>) -> CliResult {
    let params = match params {
        Some(p) => TrackerParams::read(p)?,
        None => TrackerParams::default(),
    };
    let mut groups = group_prompts(read_prompts(prompts)?);
    let frame0 = groups
        .remove(&0)
        .ok_or_else(|| usage(format!("{}: no prompts on frame 0", prompts.display())))?;
    let manifest = std::path::absolute(manifest).map_err(|e| data(format!("{}: {e}", manifest.display())))?;
    let sequence = Arc::new(load_manifest(&manifest)?);
    if let Some(&k) = groups.keys().next_back().filter(|&&k| k >= sequence.len()) {
        return Err(usage(format!("prompt on frame {k}, sequence has {} frames", sequence.len())));
    }
    let backend = backend_for(backend_url);

    fs::create_dir_all(out).map_err(|e| data(format!("creating {}: {e}", out.display())))?;
    let session_dir = out.join("session");
    if session_dir.exists() {
        fs::remove_dir_all(&session_dir).map_err(|e| data(format!("clearing {}: {e}", session_dir.display())))?;
    }
    let mut record = SessionRecord::new("track", manifest, params.clone(), backend.name(), sequence.len());
    let store = SessionStore::create(&session_dir, &record)?;
    let replay = ReplayContext {
        sequence,
        params,
        backend,
    };
    let mut ops = vec![
        SessionOp::Init { prompts: frame0 },
        SessionOp::Propagate {
            from_frame: 1,
            halted_at: None,
        },
    ];
    ops.extend(groups.into_values().map(|prompts| SessionOp::Refine { prompts, halted_at: None }));
    let (state, result) = apply_ops(ctx, &store, &mut record, None, ops, &replay);
    if let Some(s) = &state {
        write_outputs(out, s)?;
        ctx.log(format!("wrote {} masks to {}", s.masks().len(), out.display()));
    }
    result
}

fn refine(ctx: &Ctx, session: &Path, prompts: &Path) -> CliResult {
    let (store_dir, out) = if session.join("session").join(lsvt_core::store::RECORD_FILE).is_file() {
        (session.join("session"), session.to_path_buf())
    } else if session.join(lsvt_core::store::RECORD_FILE).is_file() {
        let parent = session.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        (session.to_path_buf(), parent.to_path_buf())
    } else {
        return Err(data(format!("{} is not a tracking session", session.display())));
    };
    let groups = group_prompts(read_prompts(prompts)?);
    if groups.is_empty() {
        return Err(usage(format!("{}: no prompts", prompts.display())));
    }
    let store = SessionStore::open(&store_dir)?;
    let mut record = store.read_record()?;
    let backend = backend_for(Some(&record.backend));
    let (_, sequence, state) = store.restore(backend.clone())?;
    if state.is_none() {
        return Err(data("session has no initialized masks"));
    }
    let replay = ReplayContext {
        sequence,
        params: record.params.clone(),
        backend,
    };
    let ops = groups
        .into_values()
        .map(|prompts| SessionOp::Refine { prompts, halted_at: None })
        .collect();
    let (state, result) = apply_ops(ctx, &store, &mut record, state, ops, &replay);
    if let Some(s) = &state {
        write_outputs(&out, s)?;
    }
    result
}

/// `mask_0000.pgm, mask_0001.pgm, ...`; indices must be contiguous from 0.
fn read_mask_dir(dir: &Path) -> CliResult<Vec<BinaryMask>> {
    let entries = fs::read_dir(dir).map_err(|e| data(format!("reading {}: {e}", dir.display())))?;
    let mut indices = Vec::new();
    for entry in entries {
        let name = entry.map_err(|e| data(e.to_string()))?.file_name();
        let name = name.to_string_lossy();
        if let Some(k) = name
            .strip_prefix("mask_")
            .and_then(|s| s.strip_suffix(".pgm"))
            .and_then(|s| s.parse::<usize>().ok())
        {
            indices.push(k);
        }
    }
    indices.sort_unstable();
    if let Some((pos, k)) = indices.iter().enumerate().find(|(i, k)| i != *k) {
        return Err(data(format!("{}: mask for frame {pos} missing (next is {k})", dir.display())));
    }
    indices
        .iter()
        .map(|&k| read_mask(dir.join(mask_file_name(k))).map_err(CliError::from))
        .collect()
}

fn eval(ctx: &Ctx, pred: &Path, truth: &Path, out: &Path, manifest: Option<&Path>, json: bool) -> CliResult {
    let pred = read_mask_dir(pred)?;
    let truth = read_mask_dir(truth)?;
    if pred.len() != truth.len() {
        return Err(usage(format!(
            "{} predicted masks but {} reference masks",
            pred.len(),
            truth.len()
        )));
    }
    let dates = manifest.map(load_manifest).transpose()?.map(|s| s.dates());
    let report = evaluate_sequence(&pred, &truth, dates.as_deref())?;
    let is_csv = out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    write_text(out, &if is_csv { report.to_csv() } else { report.to_json() })?;
    if json {
        print!("{}", report.to_json());
    } else {
        println!(
            "frames {}  mean IoU {:.4}  precision {:.4}  recall {:.4}  degenerate {}",
            report.frames.len(),
            report.mean_iou,
            report.mean_precision,
            report.mean_recall,
            report.degenerate_frames
        );
    }
    ctx.log(format!("wrote {}", out.display()));
    Ok(())
}

fn read_series(path: &Path) -> CliResult<AreaSeries> {
    let text = fs::read_to_string(path).map_err(|e| data(format!("reading {}: {e}", path.display())))?;
    AreaSeries::from_csv(&text).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn analyze(ctx: &Ctx, command: &Analyze, json: bool) -> CliResult {
    match command {
        Analyze::Area { masks, manifest, out } => {
            let sequence = load_manifest(manifest)?;
            let masks = read_mask_dir(masks)?;
            let series = area_series(&masks, &sequence)?;
            let csv = series.to_csv();
            if let Some(out) = out {
                write_text(out, &csv)?;
                ctx.log(format!("wrote {}", out.display()));
            }
            if json {
                print_json(&series);
            } else if out.is_none() {
                print!("{csv}");
            }
        }
        Analyze::Diff {
            reference,
            current,
            out_new,
            out_lost,
        } => {
            let diff = expansion_diff(&read_mask(reference)?, &read_mask(current)?)?;
            if let Some(p) = out_new {
                write_mask(&diff.new_area, p)?;
            }
            if let Some(p) = out_lost {
                write_mask(&diff.lost_area, p)?;
            }
            let s = diff.summary();
            if json {
                print_json(&s);
            } else {
                println!("new_m2 {}  lost_m2 {}  net_m2 {}", s.new_m2, s.lost_m2, s.net_m2);
            }
        }
        Analyze::Spikes { series, factor, window } => {
            if !(factor.is_finite() && *factor > 1.0) {
                return Err(usage(format!("--factor must exceed 1, got {factor}")));
            }
            if *window == 0 {
                return Err(usage("--window must be at least 1"));
            }
            let series = read_series(series)?;
            let events = detect_spikes(&series, *factor, *window)?;
            if json {
                print_json(&events);
            } else {
                println!("frame_index,date,area_m2,baseline_m2,ratio");
                for e in &events {
                    println!("{},{},{},{},{}", e.frame_index, e.date, e.area_m2, e.baseline_m2, e.ratio);
                }
            }
        }
        Analyze::Seasons {
            series,
            out_summer,
            out_winter,
        } => {
            let split = seasonal_split(&read_series(series)?);
            if let Some(p) = out_summer {
                write_text(p, &split.summer_autumn.to_csv())?;
            }
            if let Some(p) = out_winter {
                write_text(p, &split.winter_spring.to_csv())?;
            }
            if json {
                print_json(&split);
            } else {
                println!(
                    "summer_autumn {} frames  winter_spring {} frames",
                    split.summer_autumn.len(),
                    split.winter_spring.len()
                );
            }
        }
        Analyze::Pairs {
            series,
            from_month,
            to_month,
        } => {
            let window = MonthWindow::new(*from_month, to_month.unwrap_or(*from_month))?;
            let pairs = interannual_pairs(&read_series(series)?, window);
            if json {
                print_json(&pairs);
            } else {
                println!("earlier_frame,earlier_date,later_frame,later_date");
                for p in &pairs {
                    println!(
                        "{},{},{},{}",
                        p.earlier.frame_index, p.earlier.date, p.later.frame_index, p.later.date
                    );
                }
            }
        }
    }
    Ok(())
}

fn synth(ctx: &Ctx, out: &PathBuf, seed: u64, frames: usize, size: usize, second: Option<usize>, display: Display) -> CliResult {
    let cfg = SynthConfig {
        seed,
        frames,
        width: size,
        height: size,
        second_patch_from: second,
        ..SynthConfig::default()
    };
    let scenario = generate(&cfg)?;
    write_scenario(&scenario, out, display_format(display))?;
    ctx.log(format!("wrote {frames}-frame scenario to {}", out.display()));
    Ok(())
}
