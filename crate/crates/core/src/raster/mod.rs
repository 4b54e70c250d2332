//! Georeferenced rasters, NDVI frames and binary scar masks.
//!
//! Grids are north-up and row-major: row 0 is the northern edge and the
//! origin is the map coordinate of the top-left corner. Nodata cells are
//! stored as NaN in memory and as the grid's sentinel value on disk.

mod crop;
pub mod io;
mod ndvi;
mod resample;
mod threshold;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use crop::crop_register;
pub use ndvi::{compute_ndvi, DEFAULT_REFLECTANCE_SCALE};
pub use resample::{resample_bilinear, sample_bilinear};
pub use threshold::{threshold_grid, threshold_mask};

/// Sentinel written for nodata cells unless a grid declares its own.
pub const DEFAULT_NODATA: f64 = -9999.0;

/// Relative tolerance used when comparing cell sizes and lattice offsets.
pub(crate) const GEOMETRY_EPS: f64 = 1e-9;

/// Geometry shared by every raster in a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridTemplate {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub origin_x: f64,
    pub origin_y: f64,
}

impl GridTemplate {
    pub fn new(width: usize, height: usize, cell_size: f64, origin_x: f64, origin_y: f64) -> Result<Self> {
        let t = GridTemplate {
            width,
            height,
            cell_size,
            origin_x,
            origin_y,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Argument(format!(
                "grid must be at least 1x1, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return Err(Error::Argument(format!("cell size must be positive, got {}", self.cell_size)));
        }
        if !self.origin_x.is_finite() || !self.origin_y.is_finite() {
            return Err(Error::Argument("origin must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row < self.height && col < self.width
    }

    /// Map coordinates of the centre of a cell.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.cell_size,
            self.origin_y - (row as f64 + 0.5) * self.cell_size,
        )
    }

    /// Map extent as `(min_x, min_y, max_x, max_y)`.
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        (
            self.origin_x,
            self.origin_y - self.height as f64 * self.cell_size,
            self.origin_x + self.width as f64 * self.cell_size,
            self.origin_y,
        )
    }

    pub fn same_cell_size(&self, other: &GridTemplate) -> bool {
        approx_eq(self.cell_size, other.cell_size)
    }

    /// Same dimensions, cell size and origin (up to floating tolerance).
    pub fn matches(&self, other: &GridTemplate) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.same_cell_size(other)
            && approx_eq_scaled(self.origin_x, other.origin_x, self.cell_size)
            && approx_eq_scaled(self.origin_y, other.origin_y, self.cell_size)
    }

    /// Human-readable difference against another template, or `None` if they match.
    pub fn describe_mismatch(&self, other: &GridTemplate) -> Option<String> {
        if self.width != other.width || self.height != other.height {
            return Some(format!(
                "size {}x{} differs from {}x{}",
                other.width, other.height, self.width, self.height
            ));
        }
        if !self.same_cell_size(other) {
            return Some(format!("cell size {} differs from {}", other.cell_size, self.cell_size));
        }
        if !self.matches(other) {
            return Some(format!(
                "origin ({}, {}) differs from ({}, {})",
                other.origin_x, other.origin_y, self.origin_x, self.origin_y
            ));
        }
        None
    }
}

pub(crate) fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= GEOMETRY_EPS * a.abs().max(b.abs()).max(1.0)
}

fn approx_eq_scaled(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= GEOMETRY_EPS * scale.max(a.abs()).max(b.abs()).max(1.0)
}

/// Single-band georeferenced raster of reals. NaN marks nodata.
#[derive(Debug, Clone)]
pub struct GeoGrid {
    template: GridTemplate,
    values: Vec<f64>,
    nodata_value: f64,
}

impl GeoGrid {
    /// Builds a grid from row-major values; NaN entries are nodata.
    pub fn new(template: GridTemplate, values: Vec<f64>) -> Result<Self> {
        template.validate()?;
        if values.len() != template.len() {
            return Err(Error::Dimension(format!(
                "{} values for a {}x{} grid",
                values.len(),
                template.width,
                template.height
            )));
        }
        if let Some(i) = values.iter().position(|v| v.is_infinite()) {
            return Err(Error::Argument(format!(
                "value at row {}, col {} is not finite",
                i / template.width,
                i % template.width
            )));
        }
        Ok(GeoGrid {
            template,
            values,
            nodata_value: DEFAULT_NODATA,
        })
    }

    pub fn filled(template: GridTemplate, value: f64) -> Result<Self> {
        GeoGrid::new(template, vec![value; template.len()])
    }

    pub fn from_fn(template: GridTemplate, mut f: impl FnMut(usize, usize) -> Option<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(template.len());
        for row in 0..template.height {
            for col in 0..template.width {
                values.push(f(row, col).unwrap_or(f64::NAN));
            }
        }
        GeoGrid::new(template, values)
    }

    /// Sets the on-disk sentinel used for nodata cells.
    pub fn with_nodata_value(mut self, nodata_value: f64) -> Result<Self> {
        if !nodata_value.is_finite() {
            return Err(Error::Argument("nodata sentinel must be finite".into()));
        }
        self.nodata_value = nodata_value;
        Ok(self)
    }

    pub fn template(&self) -> &GridTemplate {
        &self.template
    }

    pub fn width(&self) -> usize {
        self.template.width
    }

    pub fn height(&self) -> usize {
        self.template.height
    }

    pub fn cell_size(&self) -> f64 {
        self.template.cell_size
    }

    pub fn nodata_value(&self) -> f64 {
        self.nodata_value
    }

    /// Raw row-major values with NaN for nodata.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let v = self.values[self.template.index(row, col)];
        (!v.is_nan()).then_some(v)
    }

    pub fn is_nodata(&self, row: usize, col: usize) -> bool {
        self.values[self.template.index(row, col)].is_nan()
    }

    pub fn set(&mut self, row: usize, col: usize, value: Option<f64>) {
        let i = self.template.index(row, col);
        self.values[i] = value.unwrap_or(f64::NAN);
    }

    pub fn nodata_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    /// Minimum and maximum over valid cells.
    pub fn min_max(&self) -> Option<(f64, f64)> {
        self.values.iter().filter(|v| !v.is_nan()).fold(None, |acc, &v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }
}

impl PartialEq for GeoGrid {
    fn eq(&self, other: &Self) -> bool {
        self.template == other.template
            && self.nodata_value == other.nodata_value
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| (a.is_nan() && b.is_nan()) || a == b)
    }
}

/// Red and near-infrared surface reflectance bands of one acquisition.
#[derive(Debug, Clone)]
pub struct SpectralFrame {
    pub red: GeoGrid,
    pub nir: GeoGrid,
    pub date: NaiveDate,
    /// Divisor turning stored integers into reflectance.
    pub reflectance_scale: f64,
}

impl SpectralFrame {
    /// Upper bound tolerated for scaled reflectance.
    pub const MAX_REFLECTANCE: f64 = 1.5;

    pub fn new(red: GeoGrid, nir: GeoGrid, date: NaiveDate, reflectance_scale: f64) -> Result<Self> {
        let frame = SpectralFrame {
            red,
            nir,
            date,
            reflectance_scale,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<()> {
        check_scale(self.reflectance_scale)?;
        if let Some(m) = self.red.template().describe_mismatch(self.nir.template()) {
            return Err(Error::Dimension(format!("nir band {m}")));
        }
        for (name, band) in [("red", &self.red), ("nir", &self.nir)] {
            for (i, v) in band.values().iter().enumerate() {
                if v.is_nan() {
                    continue;
                }
                let r = v / self.reflectance_scale;
                if !(0.0..=Self::MAX_REFLECTANCE).contains(&r) {
                    return Err(Error::Argument(format!(
                        "{name} reflectance {r} at row {}, col {} outside [0, {}]",
                        i / band.width(),
                        i % band.width(),
                        Self::MAX_REFLECTANCE
                    )));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn check_scale(scale: f64) -> Result<()> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Argument(format!("reflectance scale must be positive, got {scale}")));
    }
    Ok(())
}

/// Dated NDVI raster; `frame_index` is assigned when the frame joins a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct NdviFrame {
    pub grid: GeoGrid,
    pub date: NaiveDate,
    pub frame_index: Option<usize>,
}

impl NdviFrame {
    pub fn new(grid: GeoGrid, date: NaiveDate) -> Result<Self> {
        if let Some(i) = grid.values().iter().position(|v| !v.is_nan() && !(-1.0..=1.0).contains(v)) {
            return Err(Error::Argument(format!(
                "NDVI {} at row {}, col {} outside [-1, 1]",
                grid.values()[i],
                i / grid.width(),
                i % grid.width()
            )));
        }
        Ok(NdviFrame {
            grid,
            date,
            frame_index: None,
        })
    }

    pub fn template(&self) -> &GridTemplate {
        self.grid.template()
    }
}

/// Row-major boolean scar mask.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    cell_size: f64,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(width: usize, height: usize, cell_size: f64) -> Self {
        BinaryMask {
            width,
            height,
            cell_size,
            bits: vec![false; width * height],
        }
    }

    pub fn for_template(template: &GridTemplate) -> Self {
        BinaryMask::empty(template.width, template.height, template.cell_size)
    }

    pub fn from_bits(width: usize, height: usize, cell_size: f64, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Argument(format!("mask must be at least 1x1, got {width}x{height}")));
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(Error::Argument(format!("cell size must be positive, got {cell_size}")));
        }
        if bits.len() != width * height {
            return Err(Error::Dimension(format!("{} bits for a {width}x{height} mask", bits.len())));
        }
        Ok(BinaryMask {
            width,
            height,
            cell_size,
            bits,
        })
    }

    pub fn from_fn(template: &GridTemplate, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut mask = BinaryMask::for_template(template);
        for row in 0..template.height {
            for col in 0..template.width {
                mask.bits[row * template.width + col] = f(row, col);
            }
        }
        mask
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Scar area in square metres.
    pub fn area_m2(&self) -> f64 {
        self.count() as f64 * self.cell_size * self.cell_size
    }

    pub fn same_shape(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn fits(&self, template: &GridTemplate) -> bool {
        self.width == template.width && self.height == template.height && approx_eq(self.cell_size, template.cell_size)
    }

    pub(crate) fn check_same_shape(&self, other: &BinaryMask) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Dimension(format!(
                "mask {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    /// Cells set in `self` but not in `other`.
    pub fn difference(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.check_same_shape(other)?;
        Ok(self.zip_with(other, |a, b| a && !b))
    }

    pub fn intersection(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.check_same_shape(other)?;
        Ok(self.zip_with(other, |a, b| a && b))
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.check_same_shape(other)?;
        Ok(self.zip_with(other, |a, b| a || b))
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.same_shape(other) && self.bits.iter().zip(&other.bits).all(|(a, b)| !a || *b)
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            cell_size: self.cell_size,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| f(*a, *b)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn template(w: usize, h: usize) -> GridTemplate {
        GridTemplate::new(w, h, 10.0, 500.0, 1000.0).unwrap()
    }

    #[test]
    fn template_rejects_degenerate_geometry() {
        assert!(GridTemplate::new(0, 3, 1.0, 0.0, 0.0).is_err());
        assert!(GridTemplate::new(3, 3, 0.0, 0.0, 0.0).is_err());
        assert!(GridTemplate::new(3, 3, -2.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn row_major_addressing() {
        let t = template(4, 3);
        let grid = GeoGrid::from_fn(t, |r, c| Some((r * 10 + c) as f64)).unwrap();
        assert_eq!(grid.values()[t.index(2, 3)], 23.0);
        assert_eq!(grid.get(1, 2), Some(12.0));
        assert_eq!(t.cell_center(0, 0), (505.0, 995.0));
        assert_eq!(t.extent(), (500.0, 970.0, 540.0, 1000.0));
    }

    #[test]
    fn grid_rejects_infinite_values_and_wrong_length() {
        let t = template(2, 2);
        assert!(matches!(GeoGrid::new(t, vec![0.0; 3]), Err(Error::Dimension(_))));
        assert!(GeoGrid::new(t, vec![0.0, f64::INFINITY, 0.0, 0.0]).is_err());
        let g = GeoGrid::new(t, vec![0.0, f64::NAN, 0.0, 0.0]).unwrap();
        assert!(g.is_nodata(0, 1));
        assert_eq!(g.get(0, 1), None);
    }

    #[test]
    fn grid_equality_treats_nodata_as_equal() {
        let t = template(2, 1);
        let a = GeoGrid::new(t, vec![f64::NAN, 1.0]).unwrap();
        let b = GeoGrid::new(t, vec![f64::NAN, 1.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spectral_frame_checks_bands() {
        let date = NaiveDate::from_ymd_opt(2018, 6, 5).unwrap();
        let red = GeoGrid::filled(template(3, 3), 1000.0).unwrap();
        let nir = GeoGrid::filled(template(3, 2), 4000.0).unwrap();
        assert!(matches!(
            SpectralFrame::new(red.clone(), nir, date, 10000.0),
            Err(Error::Dimension(_))
        ));
        let nir = GeoGrid::filled(template(3, 3), 20000.0).unwrap();
        assert!(matches!(
            SpectralFrame::new(red, nir, date, 10000.0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn ndvi_frame_range_checked() {
        let date = NaiveDate::from_ymd_opt(2018, 6, 5).unwrap();
        let g = GeoGrid::filled(template(2, 2), 1.2).unwrap();
        assert!(NdviFrame::new(g, date).is_err());
    }

    #[test]
    fn mask_area_uses_cell_size() {
        let mut m = BinaryMask::empty(5, 4, 2.0);
        for c in 0..5 {
            m.set(0, c, true);
            m.set(1, c, true);
        }
        assert_eq!(m.count(), 10);
        assert_eq!(m.area_m2(), 40.0);
    }

    #[test]
    fn mask_set_operations() {
        let t = template(3, 1);
        let a = BinaryMask::from_fn(&t, |_, c| c < 2);
        let b = BinaryMask::from_fn(&t, |_, c| c > 0);
        assert_eq!(a.intersection(&b).unwrap().bits(), &[false, true, false]);
        assert_eq!(a.difference(&b).unwrap().bits(), &[true, false, false]);
        assert_eq!(a.union(&b).unwrap().count(), 3);
        assert!(a.intersection(&b).unwrap().is_subset_of(&a));
        assert!(a.union(&BinaryMask::empty(2, 1, 10.0)).is_err());
    }
}
