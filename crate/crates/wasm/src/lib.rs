//! JSON-in, JSON-out bindings for the demo page in `www/`. The plain
//! functions are what the page calls through the `#[wasm_bindgen]`
//! wrappers at the bottom; they are also usable natively.

use aeromap::datamodel::{GridSpec, QaPixel, QaRaster, Raster, Season};
use aeromap::geostat::{
    empirical_variogram, fallback_config, fit_kriging_config, fit_variogram, EmpiricalBin, Kriger,
    KrigingKind, SamplePoint, VariogramFamily, VariogramModel,
};
use aeromap::preprocess::{
    extract_aod_window, merge_aqua_terra, AffineMap, MergeCoefficients, MergeMode, SensorFit, WindowCriteria,
    WindowExtract,
};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
pub struct Station {
    pub lat: f64,
    pub lon: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
pub struct Frame {
    pub rows: usize,
    pub cols: usize,
    /// Center of the north-west cell.
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub cell_size: f64,
}

impl Frame {
    fn spec(&self) -> Result<GridSpec, String> {
        GridSpec::new(
            self.rows,
            self.cols,
            self.origin_lat,
            self.origin_lon,
            self.cell_size,
            demo_date(),
        )
        .map_err(|e| e.to_string())
    }
}

fn demo_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2018, 6, 1).unwrap()
}

fn points(stations: &[Station]) -> Vec<SamplePoint> {
    stations
        .iter()
        .map(|s| SamplePoint::new(s.lat, s.lon, s.value))
        .collect()
}

#[derive(Debug, Clone, Deserialize)]
pub struct MapRequest {
    pub stations: Vec<Station>,
    pub frame: Frame,
    pub kind: String,
    pub family: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct MapResponse {
    /// Row-major, north row first.
    pub values: Vec<f64>,
    pub variance: Vec<f64>,
    pub variogram: VariogramModel,
    pub kind: KrigingKind,
    /// The requested family could not be fitted; a linear variogram was used.
    pub fallback: bool,
    pub min: f64,
    pub max: f64,
}

/// Fits the requested variogram to the stations and kriges every cell center.
pub fn kriged_map(req: &MapRequest) -> Result<MapResponse, String> {
    let kind: KrigingKind = req.kind.parse().map_err(|e: aeromap::Error| e.to_string())?;
    let family: VariogramFamily = req.family.parse().map_err(|e: aeromap::Error| e.to_string())?;
    let spec = req.frame.spec()?;
    let pts = points(&req.stations);
    let (config, fallback) = match fit_kriging_config(&pts, kind, family) {
        Ok(c) => (c, false),
        Err(_) => (fallback_config(&pts), true),
    };
    let kriger = Kriger::new(config, &pts).map_err(|e| e.to_string())?;
    let preds = kriger.predict_many(&spec.centers()).map_err(|e| e.to_string())?;
    let values: Vec<f64> = preds.iter().map(|p| p.value).collect();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(MapResponse {
        variance: preds.iter().map(|p| p.variance.max(0.0)).collect(),
        values,
        variogram: config.variogram,
        kind: config.kind,
        fallback,
        min,
        max,
    })
}

#[derive(Debug, Clone, Deserialize)]
pub struct VariogramRequest {
    pub stations: Vec<Station>,
    pub n_bins: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Curve {
    pub family: VariogramFamily,
    pub model: Option<VariogramModel>,
    pub residual: Option<f64>,
    pub error: Option<String>,
    /// `(lag, gamma)` samples for plotting, lag in meters.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VariogramResponse {
    pub bins: Vec<EmpiricalBin>,
    pub curves: Vec<Curve>,
}

/// Empirical semivariogram plus a weighted fit of every family.
pub fn variogram_curves(req: &VariogramRequest) -> Result<VariogramResponse, String> {
    let bins = empirical_variogram(&points(&req.stations), req.n_bins, None).map_err(|e| e.to_string())?;
    let top = bins.iter().map(|b| b.lag).fold(0.0, f64::max) * 1.1;
    let curves = VariogramFamily::ALL
        .iter()
        .map(|&family| match fit_variogram(&bins, family) {
            Ok(fit) => Curve {
                family,
                model: Some(fit.model),
                residual: Some(fit.residual),
                error: None,
                points: (0..=60)
                    .map(|i| {
                        let h = top * i as f64 / 60.0;
                        (h, fit.model.gamma(h))
                    })
                    .collect(),
            },
            Err(e) => Curve {
                family,
                model: None,
                residual: None,
                error: Some(e.to_string()),
                points: Vec::new(),
            },
        })
        .collect();
    Ok(VariogramResponse { bins, curves })
}

#[derive(Debug, Clone, Deserialize)]
pub struct WindowRequest {
    pub size: usize,
    /// Row-major, `null` where the sensor has no retrieval.
    pub aqua: Vec<Option<f64>>,
    pub terra: Vec<Option<f64>>,
    /// Three-digit QA codes (adjacency, cloud mask, quality).
    pub qa: Vec<u16>,
    pub row: usize,
    pub col: usize,
    pub window: usize,
    pub warm: bool,
    /// Terra-to-Aqua map; the reverse map is its inverse.
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowResponse {
    pub merged: Vec<Option<f64>>,
    pub extract: WindowExtract,
}

/// Merges the two overpasses cell by cell, then summarizes one window.
pub fn merge_and_extract(req: &WindowRequest) -> Result<WindowResponse, String> {
    let n = req.size * req.size;
    if req.aqua.len() != n || req.terra.len() != n || req.qa.len() != n {
        return Err(format!("expected {n} values per layer"));
    }
    if req.slope == 0.0 || !req.slope.is_finite() {
        return Err("slope must be finite and nonzero".into());
    }
    let fit = SensorFit {
        terra_to_aqua: AffineMap {
            slope: req.slope,
            intercept: req.intercept,
        },
        aqua_to_terra: AffineMap {
            slope: 1.0 / req.slope,
            intercept: -req.intercept / req.slope,
        },
        r2: 1.0,
        n_pairs: 0,
    };
    let coeffs = MergeCoefficients {
        cold: None,
        warm: None,
        pooled: fit,
    };
    let season = if req.warm { Season::Warm } else { Season::Cold };
    let merged: Vec<Option<f64>> = (0..n)
        .map(|i| merge_aqua_terra(req.aqua[i], req.terra[i], season, &coeffs, MergeMode::Pooled))
        .collect();
    let spec = Frame {
        rows: req.size,
        cols: req.size,
        origin_lat: 35.8,
        origin_lon: 51.2,
        cell_size: 0.01,
    }
    .spec()?;
    let aod = Raster::new(
        spec,
        "aod",
        merged.iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
    )
    .map_err(|e| e.to_string())?;
    let pixels = req
        .qa
        .iter()
        .map(|&c| QaPixel::from_code(c).ok_or_else(|| format!("bad QA code {c:03}")))
        .collect::<Result<Vec<_>, _>>()?;
    let qa = QaRaster::new(spec, pixels).map_err(|e| e.to_string())?;
    if req.row >= req.size || req.col >= req.size {
        return Err("window center outside the grid".into());
    }
    let crit = WindowCriteria {
        window: req.window,
        ..WindowCriteria::default()
    };
    Ok(WindowResponse {
        extract: extract_aod_window(&aod, &qa, (req.row, req.col), &crit),
        merged,
    })
}

fn call<Q: for<'de> Deserialize<'de>, R: Serialize>(
    json: &str,
    f: impl Fn(&Q) -> Result<R, String>,
) -> Result<String, JsError> {
    let req: Q = serde_json::from_str(json).map_err(|e| JsError::new(&e.to_string()))?;
    let resp = f(&req).map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&resp).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = krigedMap)]
pub fn kriged_map_js(request: &str) -> Result<String, JsError> {
    call(request, kriged_map)
}

#[wasm_bindgen(js_name = variogramCurves)]
pub fn variogram_curves_js(request: &str) -> Result<String, JsError> {
    call(request, variogram_curves)
}

#[wasm_bindgen(js_name = mergeAndExtract)]
pub fn merge_and_extract_js(request: &str) -> Result<String, JsError> {
    call(request, merge_and_extract)
}
