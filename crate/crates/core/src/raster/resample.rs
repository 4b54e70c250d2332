use rayon::prelude::*;

use crate::error::{Error, Result};

use super::{GeoGrid, GridTemplate, GEOMETRY_EPS};

/// Resamples `grid` onto a lattice of `target_cell_size` covering the same
/// map extent (rounded up to whole output cells).
///
/// Each output cell centre is interpolated from the surrounding input cell
/// centres; samples past the outermost centres clamp to the border cells.
/// An output cell is nodata if any contributing neighbour is nodata.
pub fn resample_bilinear(grid: &GeoGrid, target_cell_size: f64) -> Result<GeoGrid> {
    if !(target_cell_size.is_finite() && target_cell_size > 0.0) {
        return Err(Error::Argument(format!(
            "target cell size must be positive, got {target_cell_size}"
        )));
    }
    let src = grid.template();
    let out = GridTemplate::new(
        output_cells(src.width, src.cell_size, target_cell_size),
        output_cells(src.height, src.cell_size, target_cell_size),
        target_cell_size,
        src.origin_x,
        src.origin_y,
    )?;
    let mut values = vec![f64::NAN; out.len()];
    values.par_chunks_mut(out.width).enumerate().for_each(|(row, line)| {
        for (col, slot) in line.iter_mut().enumerate() {
            let (x, y) = out.cell_center(row, col);
            *slot = sample_bilinear(grid, x, y).unwrap_or(f64::NAN);
        }
    });
    GeoGrid::new(out, values)?.with_nodata_value(grid.nodata_value())
}

fn output_cells(cells: usize, cell_size: f64, target: f64) -> usize {
    let span = cells as f64 * cell_size / target;
    ((span - GEOMETRY_EPS * span.max(1.0)).ceil() as usize).max(1)
}

/// Bilinear sample at map coordinates `(x, y)`; `None` if a contributing cell is nodata.
pub fn sample_bilinear(grid: &GeoGrid, x: f64, y: f64) -> Option<f64> {
    let t = grid.template();
    let u = ((x - t.origin_x) / t.cell_size - 0.5).clamp(0.0, (t.width - 1) as f64);
    let v = ((t.origin_y - y) / t.cell_size - 0.5).clamp(0.0, (t.height - 1) as f64);
    let (c0, fx) = split(u);
    let (r0, fy) = split(v);
    // Zero-weight neighbours are skipped so they cannot contaminate.
    let c1 = if fx > 0.0 { c0 + 1 } else { c0 };
    let r1 = if fy > 0.0 { r0 + 1 } else { r0 };

    let v00 = grid.get(r0, c0)?;
    let v01 = grid.get(r0, c1)?;
    let v10 = grid.get(r1, c0)?;
    let v11 = grid.get(r1, c1)?;

    let top = v00 + (v01 - v00) * fx;
    let bottom = v10 + (v11 - v10) * fx;
    let value = top + (bottom - top) * fy;

    // Keep rounding from stepping outside the convex hull of the neighbours.
    let lo = v00.min(v01).min(v10).min(v11);
    let hi = v00.max(v01).max(v10).max(v11);
    Some(value.clamp(lo, hi))
}

fn split(coord: f64) -> (usize, f64) {
    let base = coord.floor();
    (base as usize, coord - base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_grid_stays_constant() {
        let t = GridTemplate::new(7, 5, 10.0, 300.0, 900.0).unwrap();
        let g = GeoGrid::filled(t, 0.37).unwrap();
        for target in [1.0, 2.0, 3.0, 10.0, 25.0] {
            let r = resample_bilinear(&g, target).unwrap();
            assert!(r.values().iter().all(|&v| v == 0.37), "target {target}");
        }
    }

    #[test]
    fn horizontal_midpoint_of_two_by_two() {
        let t = GridTemplate::new(2, 2, 1.0, 0.0, 2.0).unwrap();
        let g = GeoGrid::new(t, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        // Midway between the two column centres (x = 0.5 and x = 1.5).
        assert_eq!(sample_bilinear(&g, 1.0, 1.5), Some(0.5));
        assert_eq!(sample_bilinear(&g, 1.0, 0.5), Some(0.5));
    }

    #[test]
    fn output_covers_same_extent() {
        let t = GridTemplate::new(4, 3, 10.0, 0.0, 30.0).unwrap();
        let g = GeoGrid::filled(t, 1.0).unwrap();
        let r = resample_bilinear(&g, 2.0).unwrap();
        assert_eq!((r.width(), r.height()), (20, 15));
        assert_eq!(r.template().extent(), t.extent());
        let r = resample_bilinear(&g, 3.0).unwrap();
        assert_eq!((r.width(), r.height()), (14, 10));
    }

    #[test]
    fn nodata_contaminates_neighbours_only_with_weight() {
        let t = GridTemplate::new(3, 1, 10.0, 0.0, 10.0).unwrap();
        let g = GeoGrid::new(t, vec![1.0, f64::NAN, 3.0]).unwrap();
        let same = resample_bilinear(&g, 10.0).unwrap();
        assert_eq!(same.get(0, 0), Some(1.0));
        assert_eq!(same.get(0, 1), None);
        assert_eq!(same.get(0, 2), Some(3.0));
        let fine = resample_bilinear(&g, 5.0).unwrap();
        // Centres at x = 2.5, 7.5 (between col 0 and 1), ...
        assert_eq!(fine.get(0, 0), Some(1.0));
        assert_eq!(fine.get(0, 1), None);
        assert_eq!(fine.get(0, 5), Some(3.0));
    }

    #[test]
    fn rejects_bad_target() {
        let g = GeoGrid::filled(GridTemplate::new(2, 2, 1.0, 0.0, 0.0).unwrap(), 0.0).unwrap();
        assert!(matches!(resample_bilinear(&g, 0.0), Err(Error::Argument(_))));
        assert!(matches!(resample_bilinear(&g, -1.0), Err(Error::Argument(_))));
        assert!(resample_bilinear(&g, f64::NAN).is_err());
    }

    #[test]
    fn identity_at_same_resolution() {
        let t = GridTemplate::new(9, 6, 2.0, 10.0, 50.0).unwrap();
        let g = GeoGrid::from_fn(t, |r, c| Some(((r * 31 + c * 17) % 13) as f64 * 0.1 - 0.6)).unwrap();
        let r = resample_bilinear(&g, 2.0).unwrap();
        for (a, b) in g.values().iter().zip(r.values()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    proptest! {
        #[test]
        fn extrema_bounded(
            w in 1usize..8, h in 1usize..8,
            seed in proptest::collection::vec(-1.0f64..1.0, 64),
            target in 0.5f64..25.0,
        ) {
            let t = GridTemplate::new(w, h, 10.0, 0.0, 0.0).unwrap();
            let g = GeoGrid::from_fn(t, |r, c| Some(seed[r * 8 + c])).unwrap();
            let (lo, hi) = g.min_max().unwrap();
            let r = resample_bilinear(&g, target).unwrap();
            let (rlo, rhi) = r.min_max().unwrap();
            prop_assert!(rlo >= lo && rhi <= hi);
        }
    }
}
