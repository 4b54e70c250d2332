use crate::error::{Error, Result};

use super::{BinaryMask, GeoGrid, NdviFrame};

/// Bare-ground mask: true where NDVI is at or below `threshold`. Nodata is never bare.
pub fn threshold_mask(frame: &NdviFrame, threshold: f64) -> Result<BinaryMask> {
    threshold_grid(&frame.grid, threshold)
}

pub fn threshold_grid(grid: &GeoGrid, threshold: f64) -> Result<BinaryMask> {
    if !(-1.0..=1.0).contains(&threshold) {
        return Err(Error::Argument(format!("threshold {threshold} outside [-1, 1]")));
    }
    // NaN compares false, so nodata falls out here.
    let bits = grid.values().iter().map(|&v| v <= threshold).collect();
    BinaryMask::from_bits(grid.width(), grid.height(), grid.cell_size(), bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::GridTemplate;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn frame(values: Vec<f64>) -> NdviFrame {
        let t = GridTemplate::new(values.len(), 1, 2.0, 0.0, 0.0).unwrap();
        NdviFrame::new(
            GeoGrid::new(t, values).unwrap(),
            NaiveDate::from_ymd_opt(2019, 11, 27).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn inclusive_comparison() {
        let m = threshold_mask(&frame(vec![-0.2, 0.1, 0.11]), 0.1).unwrap();
        assert_eq!(m.bits(), &[true, true, false]);
    }

    #[test]
    fn nodata_is_background() {
        let m = threshold_mask(&frame(vec![f64::NAN; 4]), 1.0).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn threshold_below_minimum() {
        let m = threshold_mask(&frame(vec![-0.9, 0.0, 0.5]), -1.0).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn out_of_range_threshold() {
        assert!(matches!(threshold_mask(&frame(vec![0.0]), 1.5), Err(Error::Argument(_))));
        assert!(threshold_mask(&frame(vec![0.0]), f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_threshold(
            values in proptest::collection::vec(prop_oneof![(-1.0f64..=1.0).prop_map(Some), Just(None)], 1..64),
            a in -1.0f64..=1.0,
            b in -1.0f64..=1.0,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let f = frame(values.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect());
            let m_lo = threshold_mask(&f, lo).unwrap();
            let m_hi = threshold_mask(&f, hi).unwrap();
            prop_assert!(m_lo.is_subset_of(&m_hi));
        }
    }
}
