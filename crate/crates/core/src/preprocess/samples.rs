use std::collections::{BTreeMap, HashMap};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{
    correct_pm, extract_aod_window, filter_outliers, fit_merge_coefficients, merge_rasters, normalize_aod,
    MergeCoefficients, MergeCounts, MergeMode, MeteoField, MeteoSampler, MeteoValues, MeteoVar,
    OutlierMethod, WindowCriteria, WindowExtract,
};
use crate::datamodel::{
    season_of, Feature, FeatureValues, GridSpec, QaRaster, Raster, Sample, Season, StationRecord,
};
use crate::error::{Error, Result};
use crate::geostat::{KrigingKind, VariogramFamily};
use crate::par;

/// Settings for turning raw inputs into samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub window: WindowCriteria,
    pub outlier_method: OutlierMethod,
    pub merge_mode: MergeMode,
    /// Interpolation setup per meteorological feature; absent fields use
    /// [`MeteoField::default_kriging`].
    pub meteo_kriging: BTreeMap<MeteoField, (KrigingKind, VariogramFamily)>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            window: WindowCriteria::default(),
            outlier_method: OutlierMethod::Iqr,
            merge_mode: MergeMode::Seasonal,
            meteo_kriging: MeteoField::ALL
                .iter()
                .map(|&f| (f, f.default_kriging()))
                .collect(),
        }
    }
}

/// All gridded inputs for one date. The AOD and QA rasters share one
/// registration; meteorology may sit on its own (coarser) grid.
#[derive(Debug, Clone)]
pub struct DayInputs {
    pub date: NaiveDate,
    pub aqua: Option<Raster>,
    pub terra: Option<Raster>,
    pub qa: Option<QaRaster>,
    pub meteo: BTreeMap<MeteoVar, Raster>,
}

impl DayInputs {
    fn aod_spec(&self) -> Option<GridSpec> {
        self.aqua.as_ref().or(self.terra.as_ref()).map(|r| r.spec)
    }
}

/// A day's merged AOD, QA and meteorology, ready for window extraction.
#[derive(Debug, Clone)]
pub struct PreparedDay {
    pub date: NaiveDate,
    pub aod: Raster,
    pub qa: QaRaster,
    pub meteo: MeteoSampler,
    pub merge_counts: MergeCounts,
}

/// Fits the Aqua/Terra maps from every cell where both sensors retrieved.
pub fn fit_scene_merge(days: &[DayInputs]) -> Result<MergeCoefficients> {
    let mut pairs = Vec::new();
    for d in days {
        if let (Some(a), Some(t)) = (&d.aqua, &d.terra) {
            if !a.spec.is_join_compatible(&t.spec) {
                continue;
            }
            for (x, y) in a.values().iter().zip(t.values()) {
                if x.is_finite() && y.is_finite() {
                    pairs.push((*x, *y, d.date));
                }
            }
        }
    }
    fit_merge_coefficients(&pairs)
}

/// Merges the sensors and sets up meteorological sampling for one day.
/// Fails when the day's rasters cannot be joined.
pub fn prepare_day(
    day: &DayInputs,
    coeffs: Option<&MergeCoefficients>,
    config: &PreprocessConfig,
) -> Result<PreparedDay> {
    let spec = day
        .aod_spec()
        .ok_or_else(|| Error::InsufficientData(format!("no AOD raster for {}", day.date)))?;
    let qa = day
        .qa
        .clone()
        .ok_or_else(|| Error::InsufficientData(format!("no QA raster for {}", day.date)))?;
    if !qa.spec.is_join_compatible(&spec) {
        return Err(Error::Incompatible(format!(
            "QA grid differs from AOD on {}",
            day.date
        )));
    }
    let (aod, merge_counts) = match coeffs {
        Some(c) => merge_rasters(day.aqua.as_ref(), day.terra.as_ref(), c, config.merge_mode)?,
        None => merge_without_coefficients(day.aqua.as_ref(), day.terra.as_ref())?,
    };
    let meteo = MeteoSampler::new(&day.meteo, &spec, &config.meteo_kriging)?;
    Ok(PreparedDay {
        date: day.date,
        aod,
        qa,
        meteo,
        merge_counts,
    })
}

/// Without a sensor regression only cells seen by both sensors can be
/// merged; single-sensor cells are left missing.
fn merge_without_coefficients(
    aqua: Option<&Raster>,
    terra: Option<&Raster>,
) -> Result<(Raster, MergeCounts)> {
    let spec = aqua.or(terra).map(|r| r.spec).expect("caller checked");
    let mut counts = MergeCounts::default();
    let values = (0..spec.len())
        .map(|i| {
            let a = aqua.and_then(|r| r.get_index(i));
            let t = terra.and_then(|r| r.get_index(i));
            match (a, t) {
                (Some(a), Some(t)) => {
                    counts.both += 1;
                    0.5 * (a + t)
                }
                _ => {
                    counts.missing += 1;
                    f64::NAN
                }
            }
        })
        .collect();
    Ok((Raster::new(spec, "aod", values)?, counts))
}

/// Assembles the full predictor vector for one location. Returns `None`
/// when normalization is impossible (non-positive PBLH).
pub fn assemble_features(
    lat: f64,
    lon: f64,
    date: NaiveDate,
    window: &WindowExtract,
    meteo: &MeteoValues,
) -> Option<FeatureValues> {
    let aod = window.aod_mean()?;
    let mut f = FeatureValues::default();
    meteo.write_into(&mut f);
    f[Feature::AodM] = aod;
    f[Feature::NAodM] = normalize_aod(aod, f[Feature::Blh]).ok()?;
    f[Feature::ProbBestM] = window.prob_best;
    f[Feature::ProbMedM] = window.prob_med;
    f[Feature::Lat] = lat;
    f[Feature::Long] = lon;
    f[Feature::Month] = date.month() as f64;
    f[Feature::Doy] = date.ordinal() as f64;
    f.first_missing().is_none().then_some(f)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub station_records: usize,
    pub records_with_pm: usize,
    pub outliers_removed: usize,
    /// Stations with too few readings to screen; all their readings are kept.
    pub stations_unscreened: usize,
    pub days_total: usize,
    pub days_skipped: usize,
    pub skipped_dates: Vec<String>,
    /// Readings whose date has no gridded inputs.
    pub records_without_day: usize,
    pub out_of_bounds: usize,
    pub invalid_windows: usize,
    pub missing_features: usize,
    pub samples: usize,
    pub merge: Option<MergeCoefficients>,
    pub merge_error: Option<String>,
    pub merge_counts_cold: MergeCounts,
    pub merge_counts_warm: MergeCounts,
    /// Per-day meteorological fields that fell back to a linear variogram.
    pub meteo_fallbacks: usize,
}

/// Drops readings outside each station's outlier bounds. Returns the
/// surviving records with a PM value, plus (removed, unscreened) counts.
/// Per-station outlier screening of the records with a reading. Returns
/// the kept records, the number removed and the number of stations with
/// too few readings to screen (kept as they are).
pub fn screen_stations(
    stations: &[StationRecord],
    method: OutlierMethod,
) -> (Vec<&StationRecord>, usize, usize) {
    let mut by_station: BTreeMap<&str, Vec<&StationRecord>> = BTreeMap::new();
    for r in stations.iter().filter(|r| r.pm25.is_some()) {
        by_station.entry(&r.station_id).or_default().push(r);
    }
    let (mut kept, mut removed, mut unscreened) = (Vec::new(), 0, 0);
    for recs in by_station.into_values() {
        let vals: Vec<f64> = recs.iter().map(|r| r.pm25.unwrap()).collect();
        match filter_outliers(&vals, method) {
            Ok(idx) => {
                removed += recs.len() - idx.len();
                kept.extend(idx.into_iter().map(|i| recs[i]));
            }
            Err(_) => {
                unscreened += 1;
                kept.extend(recs);
            }
        }
    }
    (kept, removed, unscreened)
}

/// Builds one sample per (station, date) with a PM reading, a valid AOD
/// window and complete meteorology. Output is sorted by (date, station).
pub fn build_samples(
    stations: &[StationRecord],
    days: &[DayInputs],
    config: &PreprocessConfig,
) -> Result<(Vec<Sample>, PreprocessReport)> {
    let mut report = PreprocessReport {
        station_records: stations.len(),
        records_with_pm: stations.iter().filter(|r| r.pm25.is_some()).count(),
        days_total: days.len(),
        ..Default::default()
    };
    let mut seen = std::collections::HashSet::new();
    for r in stations {
        if !seen.insert((r.station_id.as_str(), r.date)) {
            return Err(Error::DuplicateStation {
                station_id: r.station_id.clone(),
                date: r.date.to_string(),
            });
        }
    }
    let (kept, removed, unscreened) = screen_stations(stations, config.outlier_method);
    report.outliers_removed = removed;
    report.stations_unscreened = unscreened;

    match fit_scene_merge(days) {
        Ok(c) => report.merge = Some(c),
        Err(e) => report.merge_error = Some(e.to_string()),
    }

    let mut by_date: HashMap<NaiveDate, Vec<&StationRecord>> = HashMap::new();
    for r in kept {
        by_date.entry(r.date).or_default().push(r);
    }
    let day_dates: std::collections::HashSet<NaiveDate> = days.iter().map(|d| d.date).collect();
    report.records_without_day = by_date
        .iter()
        .filter(|(d, _)| !day_dates.contains(d))
        .map(|(_, v)| v.len())
        .sum();

    struct DayOut {
        samples: Vec<Sample>,
        skipped: bool,
        counts: MergeCounts,
        out_of_bounds: usize,
        invalid: usize,
        missing: usize,
        fallbacks: usize,
    }
    let coeffs = report.merge.as_ref();
    let outs = par::map_range(days.len(), |i| {
        let day = &days[i];
        let mut out = DayOut {
            samples: Vec::new(),
            skipped: false,
            counts: MergeCounts::default(),
            out_of_bounds: 0,
            invalid: 0,
            missing: 0,
            fallbacks: 0,
        };
        let prepared = match prepare_day(day, coeffs, config) {
            Ok(p) => p,
            Err(_) => {
                out.skipped = true;
                return out;
            }
        };
        out.counts = prepared.merge_counts;
        out.fallbacks = prepared.meteo.fallbacks.len();
        let recs = by_date.get(&day.date).map(Vec::as_slice).unwrap_or(&[]);
        let spec = prepared.aod.spec;
        let mut located = Vec::new();
        for r in recs {
            match spec.cell_of(r.lat, r.lon).inside() {
                Some(cell) => {
                    let w = extract_aod_window(&prepared.aod, &prepared.qa, cell, &config.window);
                    if w.valid {
                        located.push((*r, w));
                    } else {
                        out.invalid += 1;
                    }
                }
                None => out.out_of_bounds += 1,
            }
        }
        let points: Vec<(f64, f64)> = located.iter().map(|(r, _)| (r.lat, r.lon)).collect();
        let met = prepared.meteo.sample_many(&points);
        for ((r, w), m) in located.into_iter().zip(met) {
            let sample = m.and_then(|m| {
                let features = assemble_features(r.lat, r.lon, day.date, &w, &m)?;
                let target = correct_pm(r.pm25?, features[Feature::Rh]).ok()?;
                Some(Sample {
                    station_id: r.station_id.clone(),
                    date: day.date,
                    features,
                    target,
                })
            });
            match sample {
                Some(s) => out.samples.push(s),
                None => out.missing += 1,
            }
        }
        out
    });

    let mut samples = Vec::new();
    for (day, out) in days.iter().zip(outs) {
        if out.skipped {
            report.days_skipped += 1;
            report.skipped_dates.push(day.date.to_string());
            continue;
        }
        match season_of(day.date) {
            Season::Cold => report.merge_counts_cold.add(&out.counts),
            Season::Warm => report.merge_counts_warm.add(&out.counts),
        }
        report.out_of_bounds += out.out_of_bounds;
        report.invalid_windows += out.invalid;
        report.missing_features += out.missing;
        report.meteo_fallbacks += out.fallbacks;
        samples.extend(out.samples);
    }
    samples.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.station_id.cmp(&b.station_id)));
    report.samples = samples.len();
    Ok((samples, report))
}
