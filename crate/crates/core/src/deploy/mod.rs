//! Grid-wide prediction, fusion with ground stations, and map products.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::datamodel::{FeatureTable, GridSpec, Raster, StationRecord};
use crate::error::{Error, Result};
use crate::geostat::{
    fallback_config, fit_kriging_config, Kriger, KrigingConfig, KrigingKind, SamplePoint, VariogramFamily,
};
use crate::models::Model;
use crate::par;
use crate::preprocess::{
    assemble_features, correct_pm, extract_aod_window, uncorrect_pm, MeteoField, PreparedDay, WindowCriteria,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuasiSource {
    Model,
    Ground,
}

/// A PM2.5 value (humidity-corrected, µg/m³) at a point, either modeled at
/// a cell center or measured by a ground station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiStation {
    pub lat: f64,
    pub lon: f64,
    pub date: NaiveDate,
    pub pm25_est: f64,
    pub source: QuasiSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPrediction {
    pub quasi: Vec<QuasiStation>,
    pub valid_windows: usize,
    /// Valid windows dropped for lack of meteorology or a usable PBLH.
    pub missing_features: usize,
    /// Negative model outputs set to zero.
    pub clamped: usize,
}

/// Predicts PM2.5 at every cell whose AOD window is valid.
pub fn predict_grid(model: &Model, day: &PreparedDay, criteria: &WindowCriteria) -> Result<GridPrediction> {
    let spec = day.aod.spec;
    let windows = par::map_range(spec.len(), |i| {
        extract_aod_window(&day.aod, &day.qa, spec.row_col(i), criteria)
    });
    let cells: Vec<usize> = (0..spec.len()).filter(|&i| windows[i].valid).collect();
    let centers: Vec<(f64, f64)> = cells
        .iter()
        .map(|&i| {
            let (r, c) = spec.row_col(i);
            spec.center_of(r, c)
        })
        .collect();
    let met = day.meteo.sample_many(&centers);
    let mut kept = Vec::new();
    let mut rows = Vec::new();
    for ((&i, &(lat, lon)), m) in cells.iter().zip(&centers).zip(&met) {
        let f = m
            .as_ref()
            .and_then(|m| assemble_features(lat, lon, day.date, &windows[i], m));
        if let Some(f) = f {
            kept.push((lat, lon));
            rows.extend_from_slice(&f.0);
        }
    }
    let table = FeatureTable::new(crate::datamodel::Feature::ALL.to_vec(), rows)?;
    let table = table.select(model.features())?;
    let preds = par::map_range(table.n_rows(), |i| model.predict_row(table.row(i)));
    let mut clamped = 0;
    let quasi = kept
        .into_iter()
        .zip(preds)
        .map(|((lat, lon), p)| {
            let pm25_est = if p < 0.0 {
                clamped += 1;
                0.0
            } else {
                p
            };
            QuasiStation {
                lat,
                lon,
                date: day.date,
                pm25_est,
                source: QuasiSource::Model,
            }
        })
        .collect::<Vec<_>>();
    Ok(GridPrediction {
        missing_features: cells.len() - quasi.len(),
        valid_windows: cells.len(),
        quasi,
        clamped,
    })
}

/// Ground readings of one date, humidity-corrected with the day's RH.
/// Records without a reading or without meteorology are skipped.
pub fn ground_stations(records: &[&StationRecord], day: &PreparedDay) -> Vec<QuasiStation> {
    let recs: Vec<&StationRecord> = records
        .iter()
        .copied()
        .filter(|r| r.date == day.date && r.pm25.is_some())
        .collect();
    let points: Vec<(f64, f64)> = recs.iter().map(|r| (r.lat, r.lon)).collect();
    let met = day.meteo.sample_many(&points);
    recs.into_iter()
        .zip(met)
        .filter_map(|(r, m)| {
            let pm = correct_pm(r.pm25?, m?.get(MeteoField::Rh)).ok()?;
            Some(QuasiStation {
                lat: r.lat,
                lon: r.lon,
                date: r.date,
                pm25_est: pm,
                source: QuasiSource::Ground,
            })
        })
        .collect()
}

/// Where a map cell's value came from. Stored in provenance rasters as the
/// numeric code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    ModelDirect = 0,
    Interpolated = 1,
    Ground = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapKriging {
    pub kind: KrigingKind,
    pub family: VariogramFamily,
    pub max_neighbors: Option<usize>,
}

impl Default for MapKriging {
    fn default() -> Self {
        MapKriging {
            kind: KrigingKind::Ordinary,
            family: VariogramFamily::Spherical,
            max_neighbors: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DailyMap {
    pub date: NaiveDate,
    pub pm25: Raster,
    /// [`Provenance`] codes per cell.
    pub provenance: Raster,
    pub n_quasi: usize,
    pub n_ground: usize,
    pub kriging: KrigingConfig,
    /// The configured variogram could not be fitted.
    pub kriging_fallback: bool,
}

/// Combines modeled and measured values into a gap-free map.
///
/// Cells holding ground stations take the mean of their readings, and
/// quasi-stations in those cells are dropped. Remaining quasi-station
/// cells keep the model value. Every other cell is kriged from the union.
pub fn fuse_and_interpolate(
    grid: &GridSpec,
    quasi: &[QuasiStation],
    ground: &[QuasiStation],
    kriging: &MapKriging,
) -> Result<DailyMap> {
    let n = grid.len();
    let mut values = vec![f64::NAN; n];
    let mut prov = vec![f64::NAN; n];
    let mut ground_cells: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for g in ground {
        if let Some((r, c)) = grid.cell_of(g.lat, g.lon).inside() {
            let e = ground_cells.entry(grid.index(r, c)).or_insert((0.0, 0));
            e.0 += g.pm25_est;
            e.1 += 1;
        }
    }
    for (&i, &(sum, k)) in &ground_cells {
        values[i] = sum / k as f64;
        prov[i] = Provenance::Ground as u8 as f64;
    }
    let mut points: Vec<SamplePoint> = ground
        .iter()
        .map(|g| SamplePoint::new(g.lat, g.lon, g.pm25_est))
        .collect();
    let mut n_quasi = 0;
    for q in quasi {
        let Some((r, c)) = grid.cell_of(q.lat, q.lon).inside() else {
            continue;
        };
        let i = grid.index(r, c);
        if ground_cells.contains_key(&i) {
            continue;
        }
        values[i] = q.pm25_est;
        prov[i] = Provenance::ModelDirect as u8 as f64;
        points.push(SamplePoint::new(q.lat, q.lon, q.pm25_est));
        n_quasi += 1;
    }
    let distinct = crate::geostat::dedup_locations(&points).len();
    if distinct < 2 {
        return Err(Error::InsufficientData(format!(
            "map of {}: {distinct} distinct locations, at least 2 are needed",
            grid.date
        )));
    }
    let (config, kriging_fallback) = match fit_kriging_config(&points, kriging.kind, kriging.family) {
        Ok(mut c) => {
            c.max_neighbors = kriging.max_neighbors;
            (c, false)
        }
        Err(_) => {
            let mut c = fallback_config(&points);
            c.max_neighbors = kriging.max_neighbors;
            (c, true)
        }
    };
    let kriger = Kriger::new(config, &points)?;
    let targets: Vec<usize> = (0..n).filter(|&i| values[i].is_nan()).collect();
    let centers: Vec<(f64, f64)> = targets
        .iter()
        .map(|&i| {
            let (r, c) = grid.row_col(i);
            grid.center_of(r, c)
        })
        .collect();
    let preds = kriger.predict_many(&centers)?;
    for (&i, p) in targets.iter().zip(preds) {
        values[i] = p.value;
        prov[i] = Provenance::Interpolated as u8 as f64;
    }
    Ok(DailyMap {
        date: grid.date,
        pm25: Raster::new(*grid, "pm25", values)?,
        provenance: Raster::new(*grid, "provenance", prov)?,
        n_quasi,
        n_ground: ground.len(),
        kriging: config,
        kriging_fallback,
    })
}

/// Per-day bookkeeping for the run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayMapReport {
    pub date: NaiveDate,
    pub valid_windows: usize,
    pub quasi_stations: usize,
    pub ground_stations: usize,
    pub clamped: usize,
    pub missing_features: usize,
    pub kriging: KrigingConfig,
    pub kriging_fallback: bool,
}

/// Predicts, fuses and (optionally) re-expresses one day's map.
pub fn map_day(
    model: &Model,
    day: &PreparedDay,
    stations: &[&StationRecord],
    criteria: &WindowCriteria,
    kriging: &MapKriging,
    uncorrected: bool,
) -> Result<(DailyMap, DayMapReport)> {
    let pred = predict_grid(model, day, criteria)?;
    let ground = ground_stations(stations, day);
    let mut map = fuse_and_interpolate(&day.aod.spec, &pred.quasi, &ground, kriging)?;
    if uncorrected {
        let centers = map.pm25.spec.centers();
        let met = day.meteo.sample_many(&centers);
        let vals = map
            .pm25
            .values()
            .iter()
            .zip(met)
            .map(|(&v, m)| {
                let rh = m.map(|m| m.get(MeteoField::Rh)).ok_or_else(|| {
                    Error::InsufficientData(format!("no humidity to uncorrect the map of {}", day.date))
                })?;
                uncorrect_pm(v, rh)
            })
            .collect::<Result<Vec<_>>>()?;
        map.pm25 = Raster::new(map.pm25.spec, "pm25", vals)?;
    }
    let report = DayMapReport {
        date: day.date,
        valid_windows: pred.valid_windows,
        quasi_stations: map.n_quasi,
        ground_stations: map.n_ground,
        clamped: pred.clamped,
        missing_features: pred.missing_features,
        kriging: map.kriging,
        kriging_fallback: map.kriging_fallback,
    };
    Ok((map, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Period {
    Month,
    Year,
}

/// Per-cell median over the non-missing values of each cell. The result
/// is stamped with the first raster's date.
pub fn median_raster(rasters: &[&Raster]) -> Result<Raster> {
    let first = rasters
        .first()
        .ok_or_else(|| Error::InsufficientData("no maps to aggregate".into()))?;
    let spec = first.spec;
    if let Some(r) = rasters.iter().find(|r| !r.spec.is_join_compatible(&spec)) {
        return Err(Error::Incompatible(format!(
            "map of {} is on a different grid",
            r.spec.date
        )));
    }
    let values = par::map_range(spec.len(), |i| {
        let mut v: Vec<f64> = rasters.iter().filter_map(|r| r.get_index(i)).collect();
        if v.is_empty() {
            return f64::NAN;
        }
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        if v.len() % 2 == 1 {
            v[m]
        } else {
            0.5 * (v[m - 1] + v[m])
        }
    });
    Raster::new(spec, first.variable.clone(), values)
}

/// Median maps per calendar month or year, keyed `YYYY-MM` or `YYYY`.
pub fn aggregate_maps(maps: &[&Raster], period: Period) -> Result<BTreeMap<String, Raster>> {
    let mut groups: BTreeMap<String, Vec<&Raster>> = BTreeMap::new();
    for r in maps {
        let d = r.spec.date;
        let key = match period {
            Period::Month => format!("{:04}-{:02}", d.year(), d.month()),
            Period::Year => format!("{:04}", d.year()),
        };
        groups.entry(key).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(k, rs)| {
            let mut m = median_raster(&rs)?;
            let d = rs[0].spec.date;
            let start = match period {
                Period::Month => d.with_day(1).unwrap(),
                Period::Year => NaiveDate::from_ymd_opt(d.year(), 1, 1).unwrap(),
            };
            m.spec.date = start;
            Ok((k, m))
        })
        .collect()
}

/// Band index per cell: the number of breakpoints strictly below the
/// value, so a value equal to a breakpoint falls in the lower band.
pub fn classify_aqi_band(map: &Raster, breakpoints: &[f64]) -> Result<Raster> {
    let values = map
        .values()
        .iter()
        .map(|&v| {
            if v.is_nan() {
                f64::NAN
            } else {
                breakpoints.iter().filter(|&&b| b < v).count() as f64
            }
        })
        .collect();
    Raster::new(map.spec, "aqi_band", values)
}
