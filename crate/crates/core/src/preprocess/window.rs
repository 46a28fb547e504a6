use serde::{Deserialize, Serialize};

use crate::datamodel::{QaRaster, Raster};

/// Validity rules applied to a window mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowCriteria {
    /// Odd window edge length in pixels.
    pub window: usize,
    /// A mean is valid only with strictly more valid pixels than this.
    pub min_valid_pixels: usize,
    /// Largest accepted sample standard deviation, physical AOD units.
    pub std_threshold: f64,
}

impl Default for WindowCriteria {
    fn default() -> Self {
        WindowCriteria {
            window: 3,
            min_valid_pixels: 3,
            std_threshold: 0.5,
        }
    }
}

/// Summary of the AOD pixels in a window around one location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowExtract {
    /// Mean of the non-missing AOD pixels (`NaN` when there are none).
    pub mean: f64,
    /// Sample standard deviation (n - 1); zero with fewer than two pixels.
    pub std: f64,
    pub n_valid: usize,
    /// Share of the window area whose pixel has an AOD and meets the
    /// medium-quality QA condition.
    pub prob_med: f64,
    /// Same for the best-quality condition.
    pub prob_best: f64,
    pub valid: bool,
}

impl WindowExtract {
    pub fn aod_mean(&self) -> Option<f64> {
        self.valid.then_some(self.mean)
    }
}

/// Windowed AOD statistics centered on (row, col). Pixels outside the grid
/// count as missing, and the probability denominator is the full window
/// area.
pub fn extract_aod_window(
    aod: &Raster,
    qa: &QaRaster,
    center: (usize, usize),
    criteria: &WindowCriteria,
) -> WindowExtract {
    assert!(criteria.window % 2 == 1, "window size must be odd");
    let half = (criteria.window / 2) as isize;
    let spec = &aod.spec;
    let (r0, c0) = (center.0 as isize, center.1 as isize);
    let mut vals = Vec::with_capacity(criteria.window * criteria.window);
    let (mut med, mut best) = (0usize, 0usize);
    for r in (r0 - half)..=(r0 + half) {
        for c in (c0 - half)..=(c0 + half) {
            if r < 0 || c < 0 || r >= spec.n_rows as isize || c >= spec.n_cols as isize {
                continue;
            }
            let (r, c) = (r as usize, c as usize);
            let Some(v) = aod.get(r, c) else { continue };
            vals.push(v);
            let px = qa.get(r, c);
            if px.meets_medium() {
                med += 1;
            }
            if px.meets_best() {
                best += 1;
            }
        }
    }
    let area = (criteria.window * criteria.window) as f64;
    let n = vals.len();
    let mean = if n > 0 {
        vals.iter().sum::<f64>() / n as f64
    } else {
        f64::NAN
    };
    let std = if n > 1 {
        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    WindowExtract {
        mean,
        std,
        n_valid: n,
        prob_med: med as f64 / area,
        prob_best: best as f64 / area,
        valid: n > criteria.min_valid_pixels && std <= criteria.std_threshold,
    }
}
