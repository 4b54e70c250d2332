use crate::error::Result;

use super::{check_scale, GeoGrid, NdviFrame, SpectralFrame};
use crate::error::Error;

/// Sentinel-2 L2A stores reflectance as integers scaled by 10000.
pub const DEFAULT_REFLECTANCE_SCALE: f64 = 10000.0;

/// Normalised difference vegetation index, `(nir - red) / (nir + red)`.
///
/// A cell is nodata when either band is nodata or both reflectances sum to
/// zero. Results are clamped to `[-1, 1]`.
pub fn compute_ndvi(frame: &SpectralFrame) -> Result<NdviFrame> {
    check_scale(frame.reflectance_scale)?;
    if let Some(m) = frame.red.template().describe_mismatch(frame.nir.template()) {
        return Err(Error::Dimension(format!("nir band {m}")));
    }
    let scale = frame.reflectance_scale;
    let values = frame
        .red
        .values()
        .iter()
        .zip(frame.nir.values())
        .map(|(&red, &nir)| {
            if red.is_nan() || nir.is_nan() {
                return f64::NAN;
            }
            let (red, nir) = (red / scale, nir / scale);
            let sum = nir + red;
            if sum == 0.0 {
                f64::NAN
            } else {
                ((nir - red) / sum).clamp(-1.0, 1.0)
            }
        })
        .collect();
    let grid = GeoGrid::new(*frame.red.template(), values)?.with_nodata_value(frame.red.nodata_value())?;
    NdviFrame::new(grid, frame.date)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::GridTemplate;
    use chrono::NaiveDate;

    fn pixel_frame(red: f64, nir: f64, scale: f64) -> SpectralFrame {
        let t = GridTemplate::new(1, 1, 10.0, 0.0, 0.0).unwrap();
        SpectralFrame {
            red: GeoGrid::new(t, vec![red]).unwrap(),
            nir: GeoGrid::new(t, vec![nir]).unwrap(),
            date: NaiveDate::from_ymd_opt(2017, 1, 16).unwrap(),
            reflectance_scale: scale,
        }
    }

    #[test]
    fn symmetric_bands_give_zero() {
        let ndvi = compute_ndvi(&pixel_frame(0.5, 0.5, 1.0)).unwrap();
        assert_eq!(ndvi.grid.get(0, 0), Some(0.0));
    }

    #[test]
    fn hand_evaluated_pixel() {
        // 0.3 / 0.5
        let ndvi = compute_ndvi(&pixel_frame(1000.0, 4000.0, 10000.0)).unwrap();
        assert!((ndvi.grid.get(0, 0).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn zero_denominator_is_nodata() {
        let ndvi = compute_ndvi(&pixel_frame(0.0, 0.0, 10000.0)).unwrap();
        assert_eq!(ndvi.grid.get(0, 0), None);
    }

    #[test]
    fn nodata_band_propagates() {
        let ndvi = compute_ndvi(&pixel_frame(f64::NAN, 0.3, 1.0)).unwrap();
        assert_eq!(ndvi.grid.get(0, 0), None);
    }

    #[test]
    fn date_is_copied_and_index_unset() {
        let ndvi = compute_ndvi(&pixel_frame(0.1, 0.4, 1.0)).unwrap();
        assert_eq!(ndvi.date, NaiveDate::from_ymd_opt(2017, 1, 16).unwrap());
        assert_eq!(ndvi.frame_index, None);
    }

    #[test]
    fn rejects_nonpositive_scale() {
        assert!(matches!(compute_ndvi(&pixel_frame(0.1, 0.4, 0.0)), Err(Error::Argument(_))));
        assert!(matches!(compute_ndvi(&pixel_frame(0.1, 0.4, -3.0)), Err(Error::Argument(_))));
    }

    #[test]
    fn rejects_shape_mismatch() {
        let mut frame = pixel_frame(0.1, 0.4, 1.0);
        frame.nir = GeoGrid::filled(GridTemplate::new(2, 1, 10.0, 0.0, 0.0).unwrap(), 0.4).unwrap();
        assert!(matches!(compute_ndvi(&frame), Err(Error::Dimension(_))));
    }

    proptest::proptest! {
        #[test]
        fn output_is_bounded(red in 0.0f64..15000.0, nir in 0.0f64..15000.0) {
            let ndvi = compute_ndvi(&pixel_frame(red, nir, 10000.0)).unwrap();
            if let Some(v) = ndvi.grid.get(0, 0) {
                proptest::prop_assert!((-1.0..=1.0).contains(&v));
            } else {
                proptest::prop_assert_eq!(red + nir, 0.0);
            }
        }
    }
}
