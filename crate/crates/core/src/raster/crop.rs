use crate::error::{Error, Result};

use super::{GeoGrid, GridTemplate, GEOMETRY_EPS};

/// Extracts the window described by `target` from `grid`.
///
/// Registration is window extraction on a shared lattice: cell sizes must
/// agree and the target origin must fall on a source cell corner. Target
/// cells outside the source extent become nodata.
pub fn crop_register(grid: &GeoGrid, target: &GridTemplate) -> Result<GeoGrid> {
    target.validate()?;
    let src = grid.template();
    if !src.same_cell_size(target) {
        return Err(Error::Registration(format!(
            "cell size {} does not match source cell size {}",
            target.cell_size, src.cell_size
        )));
    }
    let col_off = lattice_offset(target.origin_x - src.origin_x, src.cell_size, "x")?;
    let row_off = lattice_offset(src.origin_y - target.origin_y, src.cell_size, "y")?;

    let overlaps = |off: i64, len: usize, src_len: usize| off < src_len as i64 && off + len as i64 > 0;
    if !overlaps(col_off, target.width, src.width) || !overlaps(row_off, target.height, src.height) {
        return Err(Error::Coverage(format!(
            "target extent {:?} does not intersect source extent {:?}",
            target.extent(),
            src.extent()
        )));
    }

    let out = GridTemplate {
        cell_size: src.cell_size,
        ..*target
    };
    GeoGrid::from_fn(out, |row, col| {
        let r = row as i64 + row_off;
        let c = col as i64 + col_off;
        if (0..src.height as i64).contains(&r) && (0..src.width as i64).contains(&c) {
            grid.get(r as usize, c as usize)
        } else {
            None
        }
    })?
    .with_nodata_value(grid.nodata_value())
}

fn lattice_offset(delta: f64, cell_size: f64, axis: &str) -> Result<i64> {
    let cells = delta / cell_size;
    let rounded = cells.round();
    if (cells - rounded).abs() > GEOMETRY_EPS * cells.abs().max(1.0) * 1e3 {
        return Err(Error::Registration(format!(
            "{axis} origin is {cells} cells from the source lattice, not a whole number"
        )));
    }
    Ok(rounded as i64)
}
