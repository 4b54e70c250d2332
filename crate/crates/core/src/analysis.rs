//! Evolution analytics over a mask sequence: area series, seasonal
//! subsets, spike detection, boundaries and year-over-year expansion.

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Location, Result};
use crate::raster::BinaryMask;
use crate::sequence::VideoSequence;

/// Scar area in square metres.
pub fn area(mask: &BinaryMask) -> f64 {
    mask.area_m2()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaEntry {
    pub frame_index: usize,
    pub date: NaiveDate,
    pub area_m2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaSeries {
    pub entries: Vec<AreaEntry>,
    /// Cell size the areas were computed with, when known.
    pub cell_size: Option<f64>,
}

impl AreaSeries {
    pub fn new(entries: Vec<AreaEntry>, cell_size: Option<f64>) -> Result<Self> {
        for pair in entries.windows(2) {
            if pair[1].date <= pair[0].date {
                return Err(Error::Ordering(format!(
                    "frame {} ({}) is not after frame {} ({})",
                    pair[1].frame_index, pair[1].date, pair[0].frame_index, pair[0].date
                )));
            }
        }
        if let Some(e) = entries.iter().find(|e| !(e.area_m2.is_finite() && e.area_m2 >= 0.0)) {
            return Err(Error::Argument(format!("frame {} has invalid area {}", e.frame_index, e.area_m2)));
        }
        Ok(AreaSeries { entries, cell_size })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn areas(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.area_m2).collect()
    }

    /// CSV with header `frame_index,date,area_m2`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["frame_index", "date", "area_m2"]).expect("in-memory write");
        for e in &self.entries {
            w.write_record([e.frame_index.to_string(), e.date.to_string(), e.area_m2.to_string()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::format(Location::Line(1), e.to_string()))?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["frame_index", "date", "area_m2"] {
            return Err(Error::format(
                Location::Line(1),
                "expected header frame_index,date,area_m2",
            ));
        }
        let mut entries = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| Error::format(Location::Line(line), e.to_string()))?;
            let bad = |what: &str| Error::format(Location::Line(line), format!("invalid {what}"));
            entries.push(AreaEntry {
                frame_index: record[0].trim().parse().map_err(|_| bad("frame_index"))?,
                date: record[1].trim().parse().map_err(|_| bad("date"))?,
                area_m2: record[2].trim().parse().map_err(|_| bad("area_m2"))?,
            });
        }
        AreaSeries::new(entries, None)
    }
}

/// One entry per frame, in frame order. `masks[k]` is the mask of frame `k`.
pub fn area_series(masks: &[BinaryMask], sequence: &VideoSequence) -> Result<AreaSeries> {
    if masks.len() < sequence.len() {
        return Err(Error::Gap(masks.len()));
    }
    if masks.len() > sequence.len() {
        return Err(Error::Pairing(format!(
            "{} masks for a {}-frame sequence",
            masks.len(),
            sequence.len()
        )));
    }
    let template = sequence.template();
    let entries = sequence
        .frames()
        .iter()
        .zip(masks)
        .enumerate()
        .map(|(k, (frame, mask))| {
            if !mask.fits(template) {
                return Err(Error::Dimension(format!(
                    "mask for frame {k} is {}x{}, sequence is {}x{}",
                    mask.width(),
                    mask.height(),
                    template.width,
                    template.height
                )));
            }
            Ok(AreaEntry {
                frame_index: k,
                date: frame.date,
                area_m2: area(mask),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    AreaSeries::new(entries, Some(template.cell_size))
}

/// `100 * |pred - reference| / reference`.
pub fn relative_error(pred_m2: f64, ref_m2: f64) -> Result<f64> {
    if !(ref_m2.is_finite() && ref_m2 > 0.0) || !pred_m2.is_finite() {
        return Err(Error::Argument(format!(
            "relative error needs a positive reference, got {ref_m2}"
        )));
    }
    Ok(100.0 * (pred_m2 - ref_m2).abs() / ref_m2)
}

/// Signed `100 * (a1 - a0) / a0`.
pub fn percent_change(a0_m2: f64, a1_m2: f64) -> Result<f64> {
    if !(a0_m2.is_finite() && a0_m2 > 0.0) || !a1_m2.is_finite() {
        return Err(Error::Argument(format!("percent change needs a positive base, got {a0_m2}")));
    }
    Ok(100.0 * (a1_m2 - a0_m2) / a0_m2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalSplit {
    /// June through October.
    pub summer_autumn: AreaSeries,
    /// January to May plus November and December.
    pub winter_spring: AreaSeries,
}

pub fn is_summer_autumn(date: NaiveDate) -> bool {
    (6..=10).contains(&date.month())
}

pub fn seasonal_split(series: &AreaSeries) -> SeasonalSplit {
    let (summer, winter): (Vec<_>, Vec<_>) = series.entries.iter().partition(|e| is_summer_autumn(e.date));
    SeasonalSplit {
        summer_autumn: AreaSeries {
            entries: summer,
            cell_size: series.cell_size,
        },
        winter_spring: AreaSeries {
            entries: winter,
            cell_size: series.cell_size,
        },
    }
}

pub const DEFAULT_SPIKE_FACTOR: f64 = 2.0;
pub const DEFAULT_SPIKE_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeEvent {
    pub frame_index: usize,
    pub date: NaiveDate,
    pub area_m2: f64,
    pub baseline_m2: f64,
    /// `area_m2 / baseline_m2`; infinite when the baseline is zero.
    pub ratio: f64,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Flags entries whose area is at least `factor` times the median of the
/// `window` entries before them. The first `window` entries have no full
/// baseline and are never flagged; a zero baseline flags any positive area.
pub fn detect_spikes(series: &AreaSeries, factor: f64, window: usize) -> Result<Vec<SpikeEvent>> {
    if !(factor.is_finite() && factor > 1.0) {
        return Err(Error::Argument(format!("spike factor must exceed 1, got {factor}")));
    }
    if window == 0 || window >= series.len() {
        return Err(Error::Argument(format!(
            "spike window must be in 1..{}, got {window}",
            series.len()
        )));
    }
    let areas = series.areas();
    let mut buf = Vec::with_capacity(window);
    let mut events = Vec::new();
    for t in window..areas.len() {
        buf.clear();
        buf.extend_from_slice(&areas[t - window..t]);
        let baseline = median(&mut buf);
        let a = areas[t];
        let spike = if baseline > 0.0 { a >= factor * baseline } else { a > 0.0 };
        if spike {
            let e = &series.entries[t];
            events.push(SpikeEvent {
                frame_index: e.frame_index,
                date: e.date,
                area_m2: a,
                baseline_m2: baseline,
                ratio: if baseline > 0.0 { a / baseline } else { f64::INFINITY },
            });
        }
    }
    Ok(events)
}

/// Scar cells with at least one background or out-of-grid 4-neighbour.
pub fn boundary(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let mut out = BinaryMask::empty(w, h, mask.cell_size());
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            let edge = r == 0
                || c == 0
                || r + 1 == h
                || c + 1 == w
                || !mask.get(r - 1, c)
                || !mask.get(r + 1, c)
                || !mask.get(r, c - 1)
                || !mask.get(r, c + 1);
            if edge {
                out.set(r, c, true);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionDiff {
    /// In `current` but not in `reference`.
    pub new_area: BinaryMask,
    /// In `reference` but not in `current`.
    pub lost_area: BinaryMask,
    pub net_m2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffSummary {
    pub new_m2: f64,
    pub lost_m2: f64,
    pub net_m2: f64,
}

impl ExpansionDiff {
    pub fn summary(&self) -> DiffSummary {
        DiffSummary {
            new_m2: area(&self.new_area),
            lost_m2: area(&self.lost_area),
            net_m2: self.net_m2,
        }
    }
}

pub fn expansion_diff(reference: &BinaryMask, current: &BinaryMask) -> Result<ExpansionDiff> {
    if !crate::raster::approx_eq(reference.cell_size(), current.cell_size()) {
        return Err(Error::Dimension(format!(
            "cell sizes differ: {} vs {}",
            reference.cell_size(),
            current.cell_size()
        )));
    }
    Ok(ExpansionDiff {
        new_area: current.difference(reference)?,
        lost_area: reference.difference(current)?,
        net_m2: area(current) - area(reference),
    })
}

/// Inclusive calendar-month range within one year, e.g. June..=October.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthWindow {
    pub start: u32,
    pub end: u32,
}

impl MonthWindow {
    pub fn new(start: u32, end: u32) -> Result<Self> {
        if !(1..=12).contains(&start) || !(1..=12).contains(&end) || start > end {
            return Err(Error::Argument(format!(
                "month window {start}..={end} must satisfy 1 <= start <= end <= 12"
            )));
        }
        Ok(MonthWindow { start, end })
    }

    pub fn single(month: u32) -> Result<Self> {
        MonthWindow::new(month, month)
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        (self.start..=self.end).contains(&date.month())
    }

    /// Midpoint of the window in `year` (earlier day when the span is even).
    pub fn midpoint(&self, year: i32) -> NaiveDate {
        let first = NaiveDate::from_ymd_opt(year, self.start, 1).expect("valid month");
        let after = if self.end == 12 {
            NaiveDate::from_ymd_opt(year + 1, 1, 1)
        } else {
            NaiveDate::from_ymd_opt(year, self.end + 1, 1)
        }
        .expect("valid month");
        let last = after - Duration::days(1);
        first + Duration::days((last - first).num_days() / 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearFrame {
    pub year: i32,
    pub frame_index: usize,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterannualPair {
    pub earlier: YearFrame,
    pub later: YearFrame,
}

/// For every pair of years that both have a frame inside `window`, pairs
/// the frames closest to the window midpoint of their year (ties go to the
/// earlier date).
pub fn interannual_pairs(series: &AreaSeries, window: MonthWindow) -> Vec<InterannualPair> {
    let mut picks: Vec<YearFrame> = Vec::new();
    for e in series.entries.iter().filter(|e| window.contains(e.date)) {
        let year = e.date.year();
        let mid = window.midpoint(year);
        let candidate = YearFrame {
            year,
            frame_index: e.frame_index,
            date: e.date,
        };
        let dist = |d: NaiveDate| (d - mid).num_days().abs();
        match picks.iter_mut().find(|p| p.year == year) {
            Some(best) => {
                if (dist(e.date), e.date) < (dist(best.date), best.date) {
                    *best = candidate;
                }
            }
            None => picks.push(candidate),
        }
    }
    picks.sort_by_key(|p| p.year);
    let mut pairs = Vec::new();
    for (i, a) in picks.iter().enumerate() {
        for b in &picks[i + 1..] {
            pairs.push(InterannualPair { earlier: *a, later: *b });
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{GeoGrid, GridTemplate, NdviFrame};
    use crate::sequence::build_sequence;
    use proptest::prelude::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn series(values: &[f64]) -> AreaSeries {
        let start = d("2017-01-01");
        let entries = values
            .iter()
            .enumerate()
            .map(|(i, &a)| AreaEntry {
                frame_index: i,
                date: start + Duration::days(16 * i as i64),
                area_m2: a,
            })
            .collect();
        AreaSeries::new(entries, Some(2.0)).unwrap()
    }

    fn dated(dates: &[&str]) -> AreaSeries {
        let entries = dates
            .iter()
            .enumerate()
            .map(|(i, s)| AreaEntry {
                frame_index: i,
                date: d(s),
                area_m2: 1.0,
            })
            .collect();
        AreaSeries::new(entries, None).unwrap()
    }

    fn mask(rows: &[&str], cell: f64) -> BinaryMask {
        let bits = rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect();
        BinaryMask::from_bits(rows[0].len(), rows.len(), cell, bits).unwrap()
    }

    #[test]
    fn area_examples() {
        assert_eq!(area(&BinaryMask::empty(4, 4, 2.0)), 0.0);
        assert_eq!(area(&mask(&["#####", "#####", "....."], 2.0)), 40.0);
        let full = BinaryMask::from_bits(3, 5, 10.0, vec![true; 15]).unwrap();
        assert_eq!(area(&full), 1500.0);
    }

    #[test]
    fn area_series_follows_frames() {
        let t = GridTemplate::new(3, 1, 2.0, 0.0, 0.0).unwrap();
        let frames = ["2018-03-01", "2018-01-01", "2018-02-01"]
            .iter()
            .map(|s| NdviFrame::new(GeoGrid::filled(t, 0.0).unwrap(), d(s)).unwrap())
            .collect();
        let seq = build_sequence(frames).unwrap();
        let masks = vec![mask(&["#.."], 2.0), mask(&["##."], 2.0), mask(&["###"], 2.0)];
        let s = area_series(&masks, &seq).unwrap();
        assert_eq!(s.areas(), vec![4.0, 8.0, 12.0]);
        assert_eq!(s.entries[0].date, d("2018-01-01"));
        assert!(matches!(area_series(&masks[..2], &seq), Err(Error::Gap(2))));
        let csv = s.to_csv();
        assert!(csv.starts_with("frame_index,date,area_m2\n0,2018-01-01,4\n"));
        let back = AreaSeries::from_csv(&csv).unwrap();
        assert_eq!(back.entries, s.entries);
    }

    #[test]
    fn area_csv_errors() {
        assert!(AreaSeries::from_csv("a,b,c\n").is_err());
        match AreaSeries::from_csv("frame_index,date,area_m2\n0,2018-01-01,4\n1,notadate,5\n") {
            Err(Error::Format { location, .. }) => assert_eq!(location, Location::Line(3)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reported_relative_error() {
        let e = relative_error(2.32e5, 2.28e5).unwrap();
        assert!((e - 1.75).abs() <= 0.01, "{e}");
        assert_eq!(relative_error(5.0, 5.0).unwrap(), 0.0);
        assert!(relative_error(1.0, 0.0).is_err());
    }

    #[test]
    fn reported_percent_changes() {
        assert!((percent_change(2.32e5, 3.55e5).unwrap() - 53.0).abs() <= 0.5);
        assert!((percent_change(2.823e4, 1.212e5).unwrap() - 329.3).abs() <= 1.0);
        assert_eq!(percent_change(7.0, 7.0).unwrap(), 0.0);
        assert!(percent_change(-1.0, 2.0).is_err());
        assert!(percent_change(10.0, 5.0).unwrap() < 0.0);
    }

    #[test]
    fn seasons() {
        let s = dated(&["2018-05-31", "2018-06-05", "2018-10-31", "2018-11-07", "2019-01-02"]);
        let split = seasonal_split(&s);
        let idx = |a: &AreaSeries| a.entries.iter().map(|e| e.frame_index).collect::<Vec<_>>();
        assert_eq!(idx(&split.summer_autumn), vec![1, 2]);
        assert_eq!(idx(&split.winter_spring), vec![0, 3, 4]);
    }

    #[test]
    fn spike_examples() {
        let s = series(&[100.0, 105.0, 110.0, 108.0, 112.0, 400.0]);
        let ev = detect_spikes(&s, 2.0, 5).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].frame_index, 5);
        assert_eq!(ev[0].baseline_m2, 108.0);
        assert!((ev[0].ratio - 400.0 / 108.0).abs() < 1e-12);
        assert!(detect_spikes(&series(&[50.0; 20]), 2.0, 5).unwrap().is_empty());
        let growth: Vec<f64> = (0..60).map(|i| 1000.0 * 1.01f64.powi(i)).collect();
        assert!(detect_spikes(&series(&growth), 2.0, 5).unwrap().is_empty());
    }

    #[test]
    fn spike_argument_checks() {
        let s = series(&[1.0, 2.0, 3.0]);
        assert!(detect_spikes(&s, 1.0, 1).is_err());
        assert!(detect_spikes(&s, 2.0, 0).is_err());
        assert!(detect_spikes(&s, 2.0, 3).is_err());
        assert!(detect_spikes(&s, 2.0, 2).is_ok());
    }

    #[test]
    fn zero_baseline() {
        let ev = detect_spikes(&series(&[0.0, 0.0, 0.0, 5.0, 0.0]), 2.0, 2).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].ratio, f64::INFINITY);
    }

    #[test]
    fn boundary_examples() {
        let single = mask(&["...", ".#.", "..."], 1.0);
        assert_eq!(boundary(&single), single);
        let block = mask(&[".....", ".###.", ".###.", ".###.", "....."], 1.0);
        let b = boundary(&block);
        assert_eq!(b.count(), 8);
        assert!(!b.get(2, 2));
        assert!(boundary(&BinaryMask::empty(3, 3, 1.0)).is_empty());
        let full = BinaryMask::from_bits(4, 3, 1.0, vec![true; 12]).unwrap();
        assert_eq!(boundary(&full).count(), 10);
    }

    #[test]
    fn diff_examples() {
        let a = mask(&["##..", "##.."], 2.0);
        let same = expansion_diff(&a, &a).unwrap();
        assert!(same.new_area.is_empty() && same.lost_area.is_empty());
        assert_eq!(same.net_m2, 0.0);

        let bigger = mask(&["###.", "###."], 2.0);
        let grow = expansion_diff(&a, &bigger).unwrap();
        assert!(grow.lost_area.is_empty());
        assert_eq!(grow.new_area, mask(&["..#.", "..#."], 2.0));
        assert_eq!(grow.net_m2, 8.0);

        let shrink = expansion_diff(&bigger, &a).unwrap();
        assert_eq!(shrink.lost_area, grow.new_area);
        assert_eq!(shrink.new_area, grow.lost_area);
        assert_eq!(shrink.net_m2, -grow.net_m2);
        assert!(expansion_diff(&a, &mask(&["#"], 2.0)).is_err());
    }

    #[test]
    fn interannual_november_pairing() {
        let s = dated(&["2018-10-05", "2018-11-27", "2019-06-01", "2019-11-27", "2020-03-03"]);
        let pairs = interannual_pairs(&s, MonthWindow::single(11).unwrap());
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].earlier.date, d("2018-11-27"));
        assert_eq!(pairs[0].later.date, d("2019-11-27"));
    }

    #[test]
    fn interannual_nearest_to_midpoint() {
        let w = MonthWindow::new(6, 10).unwrap();
        assert_eq!(w.midpoint(2018), d("2018-08-16"));
        let s = dated(&["2018-06-05", "2018-08-09", "2018-10-10", "2019-07-01", "2019-09-30", "2021-08-16"]);
        let pairs = interannual_pairs(&s, w);
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[0].earlier.date, d("2018-08-09"));
        assert_eq!(pairs[0].later.date, d("2019-09-30"));
        assert_eq!(pairs[2].later.year, 2021);
        assert!(MonthWindow::new(11, 2).is_err());
    }

    #[test]
    fn interannual_skips_years_without_frames() {
        let s = dated(&["2018-11-01", "2019-12-01", "2020-11-15"]);
        let pairs = interannual_pairs(&s, MonthWindow::single(11).unwrap());
        assert_eq!(pairs.len(), 1);
        assert_eq!((pairs[0].earlier.year, pairs[0].later.year), (2018, 2020));
    }

    #[test]
    fn interannual_equidistant_tie_goes_earlier() {
        // Midpoint of November is the 15th.
        let s = dated(&["2018-11-10", "2018-11-20", "2019-11-15"]);
        let pairs = interannual_pairs(&s, MonthWindow::single(11).unwrap());
        assert_eq!(pairs[0].earlier.date, d("2018-11-10"));
    }

    /// Literal re-implementation used to cross-check `detect_spikes`.
    fn brute_force_spikes(areas: &[f64], k: f64, w: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for t in w..areas.len() {
            let mut win: Vec<f64> = areas[t - w..t].to_vec();
            win.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let med = if w % 2 == 1 { win[w / 2] } else { 0.5 * (win[w / 2 - 1] + win[w / 2]) };
            let hit = if med == 0.0 { areas[t] > 0.0 } else { areas[t] >= k * med };
            if hit {
                out.push(t);
            }
        }
        out
    }

    proptest! {
        #[test]
        fn spikes_match_brute_force(
            areas in proptest::collection::vec(prop_oneof![Just(0.0), 0.0f64..1e6], 2..200),
            k in 1.01f64..5.0,
            w_seed in 0usize..1000,
        ) {
            let w = 1 + w_seed % (areas.len() - 1);
            let s = series(&areas);
            let got: Vec<usize> = detect_spikes(&s, k, w).unwrap().iter().map(|e| e.frame_index).collect();
            prop_assert_eq!(got, brute_force_spikes(&areas, k, w));
        }

        #[test]
        fn seasonal_split_partitions(days in proptest::collection::btree_set(0i64..4000, 1..80)) {
            let start = d("2017-01-01");
            let entries: Vec<AreaEntry> = days.iter().enumerate().map(|(i, &o)| AreaEntry {
                frame_index: i, date: start + Duration::days(o), area_m2: i as f64,
            }).collect();
            let s = AreaSeries::new(entries, None).unwrap();
            let split = seasonal_split(&s);
            prop_assert_eq!(split.summer_autumn.len() + split.winter_spring.len(), s.len());
            let mut all: Vec<usize> = split.summer_autumn.entries.iter().chain(&split.winter_spring.entries).map(|e| e.frame_index).collect();
            all.sort();
            prop_assert_eq!(all, (0..s.len()).collect::<Vec<_>>());
        }

        #[test]
        fn mask_area_laws(w in 1usize..12, h in 1usize..12, a in proptest::collection::vec(any::<bool>(), 144), b in proptest::collection::vec(any::<bool>(), 144), cell in 1u32..5) {
            let cs = cell as f64;
            let ma = BinaryMask::from_bits(w, h, cs, a[..w * h].to_vec()).unwrap();
            let mb = BinaryMask::from_bits(w, h, cs, b[..w * h].to_vec()).unwrap();
            // Additive over disjoint parts, monotone under inclusion.
            let only_a = ma.difference(&mb).unwrap();
            let both = ma.intersection(&mb).unwrap();
            prop_assert_eq!(area(&only_a) + area(&both), area(&ma));
            prop_assert!(area(&both) <= area(&ma));
            let diff = expansion_diff(&ma, &mb).unwrap();
            prop_assert_eq!(area(&diff.new_area) - area(&diff.lost_area), diff.net_m2);
            prop_assert!(boundary(&ma).is_subset_of(&ma));
        }
    }
}
