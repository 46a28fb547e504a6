//! Turns raw station, AOD, QA and meteorological inputs into model-ready
//! [`Sample`](crate::datamodel::Sample) rows.

mod merge;
mod meteo;
mod samples;
mod window;

pub use merge::{
    fit_merge_coefficients, merge_aqua_terra, merge_rasters, AffineMap, MergeCoefficients, MergeCounts,
    MergeMode, SensorFit,
};
pub use meteo::{
    derive_meteo_features, relative_humidity, select_meteo_kriging, DerivedMeteo, MeteoField, MeteoSampler,
    MeteoValues, MeteoVar,
};
pub use samples::{
    assemble_features, build_samples, fit_scene_merge, prepare_day, screen_stations, DayInputs, PreparedDay,
    PreprocessConfig, PreprocessReport,
};
pub use window::{extract_aod_window, WindowCriteria, WindowExtract};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undoes the mass loss of heated-inlet instruments:
/// `pm / (1 - rh/100)`.
pub fn correct_pm(pm: f64, rh: f64) -> Result<f64> {
    if !(pm >= 0.0 && pm.is_finite()) {
        return Err(Error::Domain(format!("PM must be a finite value >= 0, got {pm}")));
    }
    if !(0.0..100.0).contains(&rh) {
        return Err(Error::Domain(format!(
            "relative humidity must lie in [0, 100), got {rh}"
        )));
    }
    Ok(pm / (1.0 - rh / 100.0))
}

/// Inverse of [`correct_pm`]: re-expresses a corrected value in
/// instrument-equivalent units.
pub fn uncorrect_pm(pm_c: f64, rh: f64) -> Result<f64> {
    if !(0.0..100.0).contains(&rh) {
        return Err(Error::Domain(format!(
            "relative humidity must lie in [0, 100), got {rh}"
        )));
    }
    Ok(pm_c * (1.0 - rh / 100.0))
}

/// AOD divided by the planetary boundary layer height (per meter).
pub fn normalize_aod(aod: f64, pblh: f64) -> Result<f64> {
    if !(pblh > 0.0 && pblh.is_finite()) {
        return Err(Error::Domain(format!("PBLH must be positive, got {pblh}")));
    }
    Ok(aod / pblh)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutlierMethod {
    #[serde(rename = "IQR")]
    Iqr,
    ThreeSigma,
}

/// Quantile by linear interpolation between order statistics (R type 7).
/// `sorted` must be ascending and non-empty.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Open acceptance interval `(lower, upper)` for a method.
pub fn outlier_bounds(values: &[f64], method: OutlierMethod) -> Result<(f64, f64)> {
    let need = match method {
        OutlierMethod::Iqr => 4,
        OutlierMethod::ThreeSigma => 2,
    };
    if values.len() < need {
        return Err(Error::InsufficientData(format!(
            "{method:?} outlier screening needs at least {need} values, got {}",
            values.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!(
            "non-finite value {v} in outlier screening"
        )));
    }
    Ok(match method {
        OutlierMethod::Iqr => {
            let mut s = values.to_vec();
            s.sort_by(f64::total_cmp);
            let q1 = quantile_type7(&s, 0.25);
            let q3 = quantile_type7(&s, 0.75);
            let iqr = q3 - q1;
            (q1 - iqr, q3 + iqr)
        }
        OutlierMethod::ThreeSigma => {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let sd = var.sqrt();
            (mean - 3.0 * sd, mean + 3.0 * sd)
        }
    })
}

/// Indices (ascending) of the values kept by a single screening pass.
///
/// Values must lie strictly inside the bounds. When the spread is zero the
/// interval collapses to a point and values equal to it are kept.
pub fn filter_outliers(values: &[f64], method: OutlierMethod) -> Result<Vec<usize>> {
    let (lo, hi) = outlier_bounds(values, method)?;
    Ok(values
        .iter()
        .enumerate()
        .filter(|&(_, &v)| (lo < v && v < hi) || (lo == hi && v == lo))
        .map(|(i, _)| i)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pm_correction() {
        assert!((correct_pm(50.0, 20.0).unwrap() - 62.5).abs() < 1e-12);
        assert_eq!(correct_pm(37.0, 0.0).unwrap(), 37.0);
        assert!(matches!(correct_pm(40.0, 100.0), Err(Error::Domain(_))));
        assert!(matches!(correct_pm(40.0, -1.0), Err(Error::Domain(_))));
        assert!(matches!(correct_pm(-1.0, 10.0), Err(Error::Domain(_))));
        let c = correct_pm(40.0, 35.0).unwrap();
        assert!((uncorrect_pm(c, 35.0).unwrap() - 40.0).abs() < 1e-12);
    }

    #[test]
    fn aod_normalization() {
        assert!((normalize_aod(0.5, 1000.0).unwrap() - 5.0e-4).abs() < 1e-18);
        assert_eq!(normalize_aod(0.0, 640.0).unwrap(), 0.0);
        assert!(matches!(normalize_aod(0.3, 0.0), Err(Error::Domain(_))));
        assert!(matches!(normalize_aod(0.3, -5.0), Err(Error::Domain(_))));
    }

    #[test]
    fn type7_quantiles() {
        let s = [10.0, 12.0, 14.0, 16.0, 18.0, 20.0, 200.0];
        // h = 6 * 0.25 = 1.5 -> between 12 and 14
        assert_eq!(quantile_type7(&s, 0.25), 13.0);
        assert_eq!(quantile_type7(&s, 0.75), 19.0);
        assert_eq!(quantile_type7(&s, 0.0), 10.0);
        assert_eq!(quantile_type7(&s, 1.0), 200.0);
    }

    #[test]
    fn iqr_removes_the_spike() {
        // Q1 = 13, Q3 = 19, IQR = 6 -> keep (7, 25)
        let v = [10.0, 12.0, 14.0, 16.0, 18.0, 20.0, 200.0];
        assert_eq!(
            filter_outliers(&v, OutlierMethod::Iqr).unwrap(),
            vec![0, 1, 2, 3, 4, 5]
        );
    }

    #[test]
    fn three_sigma_by_hand() {
        // mean 200, sample sd = sqrt(4 * 200^2 + 800^2) / 2 = 447.21 -> keeps all
        let v = [0.0, 0.0, 0.0, 0.0, 1000.0];
        let (lo, hi) = outlier_bounds(&v, OutlierMethod::ThreeSigma).unwrap();
        let sd = (4.0f64 * 200.0 * 200.0 + 800.0 * 800.0).sqrt() / 2.0;
        assert!((lo - (200.0 - 3.0 * sd)).abs() < 1e-9);
        assert!((hi - (200.0 + 3.0 * sd)).abs() < 1e-9);
        assert_eq!(filter_outliers(&v, OutlierMethod::ThreeSigma).unwrap().len(), 5);
    }

    #[test]
    fn identical_values_are_kept() {
        let v = [42.0; 9];
        assert_eq!(filter_outliers(&v, OutlierMethod::Iqr).unwrap().len(), 9);
        assert_eq!(filter_outliers(&v, OutlierMethod::ThreeSigma).unwrap().len(), 9);
        // zero IQR still rejects a value off the collapsed interval
        let w = [5.0, 5.0, 5.0, 5.0, 5.0, 100.0];
        assert_eq!(
            filter_outliers(&w, OutlierMethod::Iqr).unwrap(),
            vec![0, 1, 2, 3, 4]
        );
    }

    #[test]
    fn too_few_values() {
        assert!(filter_outliers(&[1.0, 2.0, 3.0], OutlierMethod::Iqr).is_err());
        assert!(filter_outliers(&[1.0], OutlierMethod::ThreeSigma).is_err());
        assert!(filter_outliers(&[1.0, 2.0], OutlierMethod::ThreeSigma).is_ok());
    }

    proptest! {
        #[test]
        fn correction_is_monotone_in_humidity(pm in 0.0f64..500.0, a in 0.0f64..99.9, b in 0.0f64..99.9) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let cl = correct_pm(pm, lo).unwrap();
            let ch = correct_pm(pm, hi).unwrap();
            prop_assert!(cl <= ch);
            prop_assert!(cl >= pm);
        }

        #[test]
        fn kept_values_respect_original_bounds(v in proptest::collection::vec(0.0f64..300.0, 4..60)) {
            for method in [OutlierMethod::Iqr, OutlierMethod::ThreeSigma] {
                let (lo, hi) = outlier_bounds(&v, method).unwrap();
                for i in filter_outliers(&v, method).unwrap() {
                    prop_assert!((lo < v[i] && v[i] < hi) || (lo == hi && v[i] == lo));
                }
            }
        }
    }
}
