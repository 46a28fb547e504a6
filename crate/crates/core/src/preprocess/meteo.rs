use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datamodel::{Feature, FeatureValues, GridSpec, Raster};
use crate::error::{Error, Result};
use crate::geostat::{
    fallback_config, fit_kriging_config, grid_search_kriging, GridSearchResult, Kriger, KrigingKind,
    SamplePoint, VariogramFamily,
};

/// Raw gridded meteorological inputs, in reanalysis units (K, m, Pa, m/s,
/// m²/m², J/m²).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeteoVar {
    D2m,
    T2m,
    Blh,
    Sp,
    LaiHv,
    LaiLv,
    U10,
    V10,
    Cdir,
    Uvb,
}

impl MeteoVar {
    pub const ALL: [MeteoVar; 10] = [
        MeteoVar::D2m,
        MeteoVar::T2m,
        MeteoVar::Blh,
        MeteoVar::Sp,
        MeteoVar::LaiHv,
        MeteoVar::LaiLv,
        MeteoVar::U10,
        MeteoVar::V10,
        MeteoVar::Cdir,
        MeteoVar::Uvb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MeteoVar::D2m => "d2m",
            MeteoVar::T2m => "t2m",
            MeteoVar::Blh => "blh",
            MeteoVar::Sp => "sp",
            MeteoVar::LaiHv => "lai_hv",
            MeteoVar::LaiLv => "lai_lv",
            MeteoVar::U10 => "u10",
            MeteoVar::V10 => "v10",
            MeteoVar::Cdir => "cdir",
            MeteoVar::Uvb => "uvb",
        }
    }
}

impl fmt::Display for MeteoVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeteoVar {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        MeteoVar::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown meteorological variable `{s}`")))
    }
}

/// Meteorological model features. These are the quantities that get
/// interpolated to stations and cells; wind and humidity are derived on the
/// source grid first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MeteoField {
    D2m,
    T2m,
    Rh,
    Sp,
    Blh,
    LaiHv,
    LaiLv,
    Ws10,
    Wd10,
    Uvb,
    Cdir,
}

impl MeteoField {
    pub const ALL: [MeteoField; 11] = [
        MeteoField::D2m,
        MeteoField::T2m,
        MeteoField::Rh,
        MeteoField::Sp,
        MeteoField::Blh,
        MeteoField::LaiHv,
        MeteoField::LaiLv,
        MeteoField::Ws10,
        MeteoField::Wd10,
        MeteoField::Uvb,
        MeteoField::Cdir,
    ];

    pub fn feature(self) -> Feature {
        match self {
            MeteoField::D2m => Feature::D2m,
            MeteoField::T2m => Feature::T2m,
            MeteoField::Rh => Feature::Rh,
            MeteoField::Sp => Feature::Sp,
            MeteoField::Blh => Feature::Blh,
            MeteoField::LaiHv => Feature::LaiHv,
            MeteoField::LaiLv => Feature::LaiLv,
            MeteoField::Ws10 => Feature::Ws10,
            MeteoField::Wd10 => Feature::Wd10,
            MeteoField::Uvb => Feature::Uvb,
            MeteoField::Cdir => Feature::Cdir,
        }
    }

    pub fn name(self) -> &'static str {
        self.feature().name()
    }

    /// Interpolation setup used when none is configured.
    pub fn default_kriging(self) -> (KrigingKind, VariogramFamily) {
        use KrigingKind::*;
        use VariogramFamily::*;
        match self {
            MeteoField::D2m | MeteoField::T2m | MeteoField::Rh => (Universal, Spherical),
            MeteoField::Sp => (Universal, Power),
            _ => (Ordinary, Spherical),
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for MeteoField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeteoField {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        MeteoField::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown meteorological feature `{s}`")))
    }
}

impl Serialize for MeteoField {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for MeteoField {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedMeteo {
    /// m/s
    pub ws10: f64,
    /// Direction the wind blows from, degrees clockwise from north.
    pub wd10: f64,
    /// Percent, clamped to [0, 99.9].
    pub rh: f64,
}

/// Magnus relative humidity (percent) from dew point and air temperature
/// in kelvin, clamped to [0, 99.9].
pub fn relative_humidity(d2m: f64, t2m: f64) -> f64 {
    let es = |t_k: f64| {
        let t = t_k - 273.15;
        6.1094 * (17.625 * t / (t + 243.04)).exp()
    };
    (100.0 * es(d2m) / es(t2m)).clamp(0.0, 99.9)
}

pub fn derive_meteo_features(u10: f64, v10: f64, d2m: f64, t2m: f64) -> DerivedMeteo {
    let ws10 = u10.hypot(v10);
    let wd10 = ((-u10).atan2(-v10).to_degrees() + 360.0) % 360.0;
    DerivedMeteo {
        ws10,
        wd10,
        rh: relative_humidity(d2m, t2m),
    }
}

/// Interpolated meteorological features at one location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeteoValues([f64; 11]);

impl MeteoValues {
    pub fn get(&self, field: MeteoField) -> f64 {
        self.0[field.index()]
    }

    pub fn write_into(&self, features: &mut FeatureValues) {
        for f in MeteoField::ALL {
            features[f.feature()] = self.get(f);
        }
    }
}

/// Per-cell feature fields on the meteorological grid, one vector per
/// [`MeteoField`], with `NaN` where any required input is missing.
fn field_grids(meteo: &BTreeMap<MeteoVar, Raster>) -> Result<(GridSpec, Vec<Vec<f64>>)> {
    let get = |v: MeteoVar| {
        meteo
            .get(&v)
            .ok_or_else(|| Error::MissingFeature(v.name().to_string()))
    };
    let spec = get(MeteoVar::T2m)?.spec;
    for (v, r) in meteo {
        if !r.spec.is_join_compatible(&spec) {
            return Err(Error::Incompatible(format!("{v} grid differs from t2m")));
        }
    }
    let raw: BTreeMap<MeteoVar, &[f64]> = MeteoVar::ALL
        .iter()
        .map(|&v| Ok((v, get(v)?.values())))
        .collect::<Result<_>>()?;
    let mut out = vec![vec![f64::NAN; spec.len()]; MeteoField::ALL.len()];
    for i in 0..spec.len() {
        let r = |v: MeteoVar| raw[&v][i];
        let d = derive_meteo_features(
            r(MeteoVar::U10),
            r(MeteoVar::V10),
            r(MeteoVar::D2m),
            r(MeteoVar::T2m),
        );
        let vals = [
            r(MeteoVar::D2m),
            r(MeteoVar::T2m),
            d.rh,
            r(MeteoVar::Sp),
            r(MeteoVar::Blh),
            r(MeteoVar::LaiHv),
            r(MeteoVar::LaiLv),
            d.ws10,
            d.wd10,
            r(MeteoVar::Uvb),
            r(MeteoVar::Cdir),
        ];
        for (k, v) in vals.into_iter().enumerate() {
            // missing inputs propagate as NaN
            out[k][i] = v;
        }
    }
    Ok((spec, out))
}

#[derive(Debug, Clone)]
enum Source {
    /// Meteorology shares the target registration; values are read per cell.
    Direct { spec: GridSpec, fields: Vec<Vec<f64>> },
    /// One kriging system per field; `None` when the field has no data.
    Kriged(Vec<Option<Kriger>>),
}

/// Brings one day's meteorology to arbitrary locations. Built once per day
/// and reused for every station or grid cell.
#[derive(Debug, Clone)]
pub struct MeteoSampler {
    source: Source,
    /// Fields whose configured variogram could not be fitted and which use
    /// ordinary kriging with a linear variogram instead.
    pub fallbacks: Vec<MeteoField>,
}

impl MeteoSampler {
    /// `target` is the grid the values are requested on (the AOD grid).
    pub fn new(
        meteo: &BTreeMap<MeteoVar, Raster>,
        target: &GridSpec,
        settings: &BTreeMap<MeteoField, (KrigingKind, VariogramFamily)>,
    ) -> Result<Self> {
        let (spec, fields) = field_grids(meteo)?;
        if spec.is_join_compatible(target) {
            return Ok(MeteoSampler {
                source: Source::Direct { spec, fields },
                fallbacks: Vec::new(),
            });
        }
        let centers = spec.centers();
        let mut fallbacks = Vec::new();
        let mut krigers = Vec::with_capacity(fields.len());
        for field in MeteoField::ALL {
            let pts: Vec<SamplePoint> = centers
                .iter()
                .zip(&fields[field.index()])
                .filter(|(_, v)| v.is_finite())
                .map(|(&(lat, lon), &v)| SamplePoint::new(lat, lon, v))
                .collect();
            let (kind, family) = settings
                .get(&field)
                .copied()
                .unwrap_or_else(|| field.default_kriging());
            let kriger = fit_kriging_config(&pts, kind, family)
                .and_then(|c| Kriger::new(c, &pts))
                .or_else(|_| {
                    fallbacks.push(field);
                    fallback_kriger(&pts)
                })
                .ok();
            krigers.push(kriger);
        }
        Ok(MeteoSampler {
            source: Source::Kriged(krigers),
            fallbacks,
        })
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.source, Source::Direct { .. })
    }

    /// Values at each location; `None` where any field is unavailable.
    pub fn sample_many(&self, targets: &[(f64, f64)]) -> Vec<Option<MeteoValues>> {
        match &self.source {
            Source::Direct { spec, fields } => targets
                .iter()
                .map(|&(lat, lon)| {
                    let (r, c) = spec.cell_of(lat, lon).inside()?;
                    let i = spec.index(r, c);
                    let mut v = [0.0; 11];
                    for (k, f) in fields.iter().enumerate() {
                        v[k] = f[i];
                    }
                    v.iter().all(|x| x.is_finite()).then_some(MeteoValues(v))
                })
                .collect(),
            Source::Kriged(krigers) => {
                let mut out = vec![[0.0; 11]; targets.len()];
                let mut ok = vec![true; targets.len()];
                for (k, kriger) in krigers.iter().enumerate() {
                    let preds = kriger.as_ref().and_then(|kr| kr.predict_many(targets).ok());
                    match preds {
                        Some(p) => {
                            for (i, r) in p.iter().enumerate() {
                                out[i][k] = r.value;
                            }
                        }
                        None => ok.iter_mut().for_each(|o| *o = false),
                    }
                }
                out.into_iter()
                    .zip(ok)
                    .map(|(mut v, ok)| {
                        if !ok {
                            return None;
                        }
                        // interpolation can overshoot the physical range
                        let rh = MeteoField::Rh.index();
                        v[rh] = v[rh].clamp(0.0, 99.9);
                        let wd = MeteoField::Wd10.index();
                        v[wd] = v[wd].rem_euclid(360.0);
                        let ws = MeteoField::Ws10.index();
                        v[ws] = v[ws].max(0.0);
                        Some(MeteoValues(v))
                    })
                    .collect()
            }
        }
    }

    pub fn sample(&self, lat: f64, lon: f64) -> Option<MeteoValues> {
        self.sample_many(&[(lat, lon)]).pop().flatten()
    }
}

/// Picks each field's kriging setup by cross-validation over every
/// (kind, family) pair on one day's meteorological grid. Fields where no
/// candidate could be scored keep their default.
pub fn select_meteo_kriging(
    meteo: &BTreeMap<MeteoVar, Raster>,
    folds: usize,
    seed: u64,
) -> Result<BTreeMap<MeteoField, (KrigingKind, VariogramFamily, Option<GridSearchResult>)>> {
    let (spec, fields) = field_grids(meteo)?;
    let centers = spec.centers();
    let candidates: Vec<(KrigingKind, VariogramFamily)> = KrigingKind::ALL
        .iter()
        .flat_map(|&k| VariogramFamily::ALL.iter().map(move |&f| (k, f)))
        .collect();
    let mut out = BTreeMap::new();
    for field in MeteoField::ALL {
        let pts: Vec<SamplePoint> = centers
            .iter()
            .zip(&fields[field.index()])
            .filter(|(_, v)| v.is_finite())
            .map(|(&(lat, lon), &v)| SamplePoint::new(lat, lon, v))
            .collect();
        let entry = match grid_search_kriging(&pts, &candidates, folds, seed) {
            Ok(res) => (res.best.kind, res.best.variogram.family, Some(res)),
            Err(_) => {
                let (k, f) = field.default_kriging();
                (k, f, None)
            }
        };
        out.insert(field, entry);
    }
    Ok(out)
}

fn fallback_kriger(pts: &[SamplePoint]) -> Result<Kriger> {
    Kriger::new(fallback_config(pts), pts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wind_speed_and_direction() {
        let d = derive_meteo_features(3.0, 4.0, 280.0, 290.0);
        assert_eq!(d.ws10, 5.0);
        // wind from the north blows toward the south (v < 0)
        assert_eq!(derive_meteo_features(0.0, -5.0, 280.0, 290.0).wd10, 0.0);
        let cases = [
            ((-5.0, 0.0), 90.0),
            ((0.0, 5.0), 180.0),
            ((5.0, 0.0), 270.0),
            ((-1.0, -1.0), 45.0),
        ];
        for ((u, v), want) in cases {
            let got = derive_meteo_features(u, v, 280.0, 290.0).wd10;
            assert!((got - want).abs() < 1e-12, "u={u} v={v}: {got}");
        }
    }

    #[test]
    fn humidity() {
        assert_eq!(relative_humidity(290.0, 290.0), 99.9);
        // 10 C dew point at 20 C air: about 52.6 %
        let rh = relative_humidity(283.15, 293.15);
        let es = |t: f64| 6.1094 * (17.625 * t / (t + 243.04)).exp();
        assert!((rh - 100.0 * es(10.0) / es(20.0)).abs() < 1e-12);
        assert!((rh - 52.6).abs() < 0.2);
        assert!(relative_humidity(250.0, 300.0) >= 0.0);
    }

    fn meteo_on(spec: GridSpec, f: impl Fn(MeteoVar, f64, f64) -> f64) -> BTreeMap<MeteoVar, Raster> {
        MeteoVar::ALL
            .iter()
            .map(|&v| {
                let vals = spec.centers().iter().map(|&(la, lo)| f(v, la, lo)).collect();
                (v, Raster::new(spec, v.name(), vals).unwrap())
            })
            .collect()
    }

    fn smooth(v: MeteoVar, lat: f64, lon: f64) -> f64 {
        let base = match v {
            MeteoVar::D2m => 275.0,
            MeteoVar::T2m => 288.0,
            MeteoVar::Blh => 800.0,
            MeteoVar::Sp => 88000.0,
            MeteoVar::U10 => 1.0,
            MeteoVar::V10 => -2.0,
            _ => 1.0,
        };
        base + 3.0 * (lat * 20.0).sin() + 2.0 * (lon * 15.0).cos()
    }

    #[test]
    fn direct_sampling_on_shared_grid() {
        let spec = GridSpec::new(4, 5, 35.8, 51.2, 0.01, "2018-03-01".parse().unwrap()).unwrap();
        let m = meteo_on(spec, smooth);
        let s = MeteoSampler::new(&m, &spec, &BTreeMap::new()).unwrap();
        assert!(s.is_direct());
        let (lat, lon) = spec.center_of(2, 3);
        let v = s.sample(lat, lon).unwrap();
        assert_eq!(v.get(MeteoField::Blh), smooth(MeteoVar::Blh, lat, lon));
        assert!(s.sample(0.0, 0.0).is_none());
    }

    #[test]
    fn kriged_sampling_is_exact_at_nodes() {
        let coarse = GridSpec::new(5, 6, 35.9, 51.1, 0.05, "2018-03-01".parse().unwrap()).unwrap();
        let fine = GridSpec::new(20, 25, 35.85, 51.12, 0.01, "2018-03-01".parse().unwrap()).unwrap();
        let m = meteo_on(coarse, smooth);
        let s = MeteoSampler::new(&m, &fine, &BTreeMap::new()).unwrap();
        assert!(!s.is_direct());
        let (lat, lon) = coarse.center_of(2, 2);
        let v = s.sample(lat, lon).unwrap();
        let t = smooth(MeteoVar::T2m, lat, lon);
        assert!(
            (v.get(MeteoField::T2m) - t).abs() < 1e-2 * t.abs(),
            "{}",
            v.get(MeteoField::T2m)
        );
        let mid = s.sample(35.77, 51.2).unwrap();
        assert!(mid.get(MeteoField::Rh) >= 0.0 && mid.get(MeteoField::Rh) <= 99.9);
    }

    #[test]
    fn missing_input_is_reported() {
        let spec = GridSpec::new(3, 3, 35.8, 51.2, 0.01, "2018-03-01".parse().unwrap()).unwrap();
        let mut m = meteo_on(spec, smooth);
        m.remove(&MeteoVar::Uvb);
        assert!(matches!(
            MeteoSampler::new(&m, &spec, &BTreeMap::new()),
            Err(Error::MissingFeature(_))
        ));
    }
}
