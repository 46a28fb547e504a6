//! Value types shared by every stage: grids, stations, samples, QA codes
//! and the calendar logic used for seasonal splits.
//!
//! Grids are north-up: latitude decreases with row index, longitude
//! increases with column index, and `origin_lat`/`origin_lon` name the
//! center of cell (0, 0). Missing raster cells are stored as `NaN`.

use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial registration plus the timestamp of one gridded field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_rows: usize,
    pub n_cols: usize,
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub cell_size: f64,
    pub date: NaiveDate,
}

/// Result of mapping a coordinate onto a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellLookup {
    Inside { row: usize, col: usize },
    OutOfBounds,
}

impl CellLookup {
    pub fn inside(self) -> Option<(usize, usize)> {
        match self {
            CellLookup::Inside { row, col } => Some((row, col)),
            CellLookup::OutOfBounds => None,
        }
    }
}

impl GridSpec {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        origin_lat: f64,
        origin_lon: f64,
        cell_size: f64,
        date: NaiveDate,
    ) -> Result<Self> {
        let spec = GridSpec {
            n_rows,
            n_cols,
            origin_lat,
            origin_lon,
            cell_size,
            date,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rows == 0 || self.n_cols == 0 {
            return Err(Error::InvalidGrid(format!(
                "grid must have at least one row and column, got {}x{}",
                self.n_rows, self.n_cols
            )));
        }
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "cell_size must be positive, got {}",
                self.cell_size
            )));
        }
        if !self.origin_lat.is_finite() || !self.origin_lon.is_finite() {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_rows * self.n_cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same spatial registration; the timestamp is ignored.
    pub fn is_join_compatible(&self, other: &GridSpec) -> bool {
        self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && self.origin_lat == other.origin_lat
            && self.origin_lon == other.origin_lon
            && self.cell_size == other.cell_size
    }

    pub fn with_date(mut self, date: NaiveDate) -> Self {
        self.date = date;
        self
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        row * self.n_cols + col
    }

    pub fn row_col(&self, index: usize) -> (usize, usize) {
        (index / self.n_cols, index % self.n_cols)
    }

    /// Latitude/longitude of the center of cell (row, col).
    pub fn center_of(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_lat - row as f64 * self.cell_size,
            self.origin_lon + col as f64 * self.cell_size,
        )
    }

    /// Nearest cell center. Points more than half a cell beyond the outer
    /// cell centers are reported as out of bounds, never clamped.
    pub fn cell_of(&self, lat: f64, lon: f64) -> CellLookup {
        let row_f = (self.origin_lat - lat) / self.cell_size;
        let col_f = (lon - self.origin_lon) / self.cell_size;
        let in_axis = |x: f64, n: usize| x.is_finite() && x >= -0.5 && x < n as f64 - 0.5;
        if !in_axis(row_f, self.n_rows) || !in_axis(col_f, self.n_cols) {
            return CellLookup::OutOfBounds;
        }
        let row = ((row_f + 0.5).floor() as usize).min(self.n_rows - 1);
        let col = ((col_f + 0.5).floor() as usize).min(self.n_cols - 1);
        CellLookup::Inside { row, col }
    }

    /// All cell centers in row-major order.
    pub fn centers(&self) -> Vec<(f64, f64)> {
        (0..self.len())
            .map(|i| {
                let (r, c) = self.row_col(i);
                self.center_of(r, c)
            })
            .collect()
    }
}

/// A single-variable field on a grid. Missing cells hold `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub spec: GridSpec,
    pub variable: String,
    values: Vec<f64>,
}

impl Raster {
    pub fn new(spec: GridSpec, variable: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values for a {}x{} grid, got {}",
                spec.len(),
                spec.n_rows,
                spec.n_cols,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| v.is_infinite()) {
            return Err(Error::InvalidGrid(format!("infinite value at cell {i}")));
        }
        Ok(Raster {
            spec,
            variable: variable.into(),
            values,
        })
    }

    pub fn filled(spec: GridSpec, variable: impl Into<String>, value: f64) -> Result<Self> {
        Raster::new(spec, variable, vec![value; spec.len()])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let v = self.values[self.spec.index(row, col)];
        (!v.is_nan()).then_some(v)
    }

    pub fn get_index(&self, index: usize) -> Option<f64> {
        let v = self.values[index];
        (!v.is_nan()).then_some(v)
    }

    /// Stores `value`, or marks the cell missing when `None`.
    pub fn set(&mut self, row: usize, col: usize, value: Option<f64>) {
        let i = self.spec.index(row, col);
        self.values[i] = match value {
            Some(v) => {
                assert!(v.is_finite(), "raster values must be finite");
                v
            }
            None => f64::NAN,
        };
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    /// Value at the cell containing (lat, lon).
    pub fn sample(&self, lat: f64, lon: f64) -> Option<f64> {
        let (r, c) = self.spec.cell_of(lat, lon).inside()?;
        self.get(r, c)
    }
}

/// Cloud mask category of a QA pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CloudMask {
    Clear,
    PossiblyCloudy,
    Cloudy,
    Missing,
}

/// Adjacency mask category of a QA pixel (clouds or snow nearby).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AdjacencyMask {
    NormalClear,
    Adjacent,
    Missing,
}

/// Retrieval quality flag of the AOD value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AodQuality {
    Best,
    Medium,
    Low,
    Missing,
}

/// One QA pixel. On disk it is a three-digit code `CAQ` where each digit is
/// the ordinal of the cloud, adjacency and quality category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QaPixel {
    pub cloud: CloudMask,
    pub adjacency: AdjacencyMask,
    pub quality: AodQuality,
}

impl QaPixel {
    pub const MISSING: QaPixel = QaPixel {
        cloud: CloudMask::Missing,
        adjacency: AdjacencyMask::Missing,
        quality: AodQuality::Missing,
    };

    pub const BEST: QaPixel = QaPixel {
        cloud: CloudMask::Clear,
        adjacency: AdjacencyMask::NormalClear,
        quality: AodQuality::Best,
    };

    /// Clear adjacency and a clear or possibly cloudy sky.
    pub fn meets_medium(&self) -> bool {
        self.adjacency == AdjacencyMask::NormalClear
            && matches!(self.cloud, CloudMask::Clear | CloudMask::PossiblyCloudy)
    }

    /// Clear adjacency, clear sky and a best-quality retrieval.
    pub fn meets_best(&self) -> bool {
        self.adjacency == AdjacencyMask::NormalClear
            && self.cloud == CloudMask::Clear
            && self.quality == AodQuality::Best
    }

    pub fn is_missing(&self) -> bool {
        *self == QaPixel::MISSING
    }

    pub fn to_code(self) -> u16 {
        let c = match self.cloud {
            CloudMask::Clear => 0,
            CloudMask::PossiblyCloudy => 1,
            CloudMask::Cloudy => 2,
            CloudMask::Missing => 3,
        };
        let a = match self.adjacency {
            AdjacencyMask::NormalClear => 0,
            AdjacencyMask::Adjacent => 1,
            AdjacencyMask::Missing => 2,
        };
        let q = match self.quality {
            AodQuality::Best => 0,
            AodQuality::Medium => 1,
            AodQuality::Low => 2,
            AodQuality::Missing => 3,
        };
        c * 100 + a * 10 + q
    }

    pub fn from_code(code: u16) -> Option<Self> {
        let cloud = match code / 100 {
            0 => CloudMask::Clear,
            1 => CloudMask::PossiblyCloudy,
            2 => CloudMask::Cloudy,
            3 => CloudMask::Missing,
            _ => return None,
        };
        let adjacency = match (code / 10) % 10 {
            0 => AdjacencyMask::NormalClear,
            1 => AdjacencyMask::Adjacent,
            2 => AdjacencyMask::Missing,
            _ => return None,
        };
        let quality = match code % 10 {
            0 => AodQuality::Best,
            1 => AodQuality::Medium,
            2 => AodQuality::Low,
            3 => AodQuality::Missing,
            _ => return None,
        };
        Some(QaPixel {
            cloud,
            adjacency,
            quality,
        })
    }
}

/// Per-pixel QA categories for one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct QaRaster {
    pub spec: GridSpec,
    pixels: Vec<QaPixel>,
}

impl QaRaster {
    pub fn new(spec: GridSpec, pixels: Vec<QaPixel>) -> Result<Self> {
        spec.validate()?;
        if pixels.len() != spec.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} QA pixels, got {}",
                spec.len(),
                pixels.len()
            )));
        }
        Ok(QaRaster { spec, pixels })
    }

    pub fn filled(spec: GridSpec, pixel: QaPixel) -> Self {
        QaRaster {
            spec,
            pixels: vec![pixel; spec.len()],
        }
    }

    pub fn pixels(&self) -> &[QaPixel] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> QaPixel {
        self.pixels[self.spec.index(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, pixel: QaPixel) {
        let i = self.spec.index(row, col);
        self.pixels[i] = pixel;
    }
}

/// Daily mean PM2.5 at one ground station. `pm25` is `None` when fewer
/// than 80% of the hourly readings were valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationRecord {
    pub station_id: String,
    pub lat: f64,
    pub lon: f64,
    pub date: NaiveDate,
    pub pm25: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Season {
    Warm,
    Cold,
}

/// April through September is warm, October through March is cold.
pub fn season_of(date: NaiveDate) -> Season {
    match date.month() {
        4..=9 => Season::Warm,
        _ => Season::Cold,
    }
}

/// The model predictors, in canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Feature {
    AodM,
    NAodM,
    ProbBestM,
    ProbMedM,
    Lat,
    Long,
    D2m,
    T2m,
    Blh,
    Sp,
    LaiHv,
    LaiLv,
    Ws10,
    Wd10,
    Cdir,
    Uvb,
    Rh,
    Month,
    Doy,
}

pub const N_FEATURES: usize = 19;

impl Feature {
    pub const ALL: [Feature; N_FEATURES] = [
        Feature::AodM,
        Feature::NAodM,
        Feature::ProbBestM,
        Feature::ProbMedM,
        Feature::Lat,
        Feature::Long,
        Feature::D2m,
        Feature::T2m,
        Feature::Blh,
        Feature::Sp,
        Feature::LaiHv,
        Feature::LaiLv,
        Feature::Ws10,
        Feature::Wd10,
        Feature::Cdir,
        Feature::Uvb,
        Feature::Rh,
        Feature::Month,
        Feature::Doy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::AodM => "AODm",
            Feature::NAodM => "nAODm",
            Feature::ProbBestM => "Prob_bestm",
            Feature::ProbMedM => "Prob_medm",
            Feature::Lat => "lat",
            Feature::Long => "long",
            Feature::D2m => "d2m",
            Feature::T2m => "t2m",
            Feature::Blh => "blh",
            Feature::Sp => "sp",
            Feature::LaiHv => "lai_hv",
            Feature::LaiLv => "lai_lv",
            Feature::Ws10 => "ws10",
            Feature::Wd10 => "wd10",
            Feature::Cdir => "cdir",
            Feature::Uvb => "uvb",
            Feature::Rh => "RH",
            Feature::Month => "month",
            Feature::Doy => "DOY",
        }
    }

    pub fn ordinal(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Feature::ALL
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::MissingFeature(s.to_string()))
    }
}

impl Serialize for Feature {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Feature {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Values of all predictors for one sample, indexed by [`Feature`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureValues(pub [f64; N_FEATURES]);

impl Default for FeatureValues {
    fn default() -> Self {
        FeatureValues([f64::NAN; N_FEATURES])
    }
}

impl Index<Feature> for FeatureValues {
    type Output = f64;
    fn index(&self, f: Feature) -> &f64 {
        &self.0[f.ordinal()]
    }
}

impl IndexMut<Feature> for FeatureValues {
    fn index_mut(&mut self, f: Feature) -> &mut f64 {
        &mut self.0[f.ordinal()]
    }
}

impl FeatureValues {
    /// First feature that is still unset or non-finite.
    pub fn first_missing(&self) -> Option<Feature> {
        Feature::ALL.iter().copied().find(|&f| !self[f].is_finite())
    }
}

/// One model-ready row: predictors plus the humidity-corrected PM2.5 target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub station_id: String,
    pub date: NaiveDate,
    pub features: FeatureValues,
    pub target: f64,
}

impl Sample {
    pub fn check(&self) -> Result<()> {
        if let Some(f) = self.features.first_missing() {
            return Err(Error::MissingFeature(f.name().to_string()));
        }
        let month = self.features[Feature::Month];
        let doy = self.features[Feature::Doy];
        let rh = self.features[Feature::Rh];
        if !(1.0..=12.0).contains(&month) || !(1.0..=366.0).contains(&doy) {
            return Err(Error::Domain(format!(
                "bad calendar fields month={month} DOY={doy}"
            )));
        }
        if !(0.0..100.0).contains(&rh) {
            return Err(Error::Domain(format!("RH {rh} outside [0, 100)")));
        }
        Ok(())
    }
}

/// Row-major predictor matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub features: Vec<Feature>,
    data: Vec<f64>,
    n_rows: usize,
}

impl FeatureTable {
    pub fn new(features: Vec<Feature>, data: Vec<f64>) -> Result<Self> {
        let width = features.len();
        if width == 0 {
            if !data.is_empty() {
                return Err(Error::InvalidGrid(
                    "data given for a table without columns".into(),
                ));
            }
            return Ok(FeatureTable {
                features,
                data,
                n_rows: 0,
            });
        }
        if data.len() % width != 0 {
            return Err(Error::InvalidGrid(format!(
                "{} values do not fill rows of width {width}",
                data.len()
            )));
        }
        let n_rows = data.len() / width;
        Ok(FeatureTable {
            features,
            data,
            n_rows,
        })
    }

    pub fn from_samples(samples: &[Sample], features: &[Feature]) -> Self {
        let mut data = Vec::with_capacity(samples.len() * features.len());
        for s in samples {
            data.extend(features.iter().map(|&f| s.features[f]));
        }
        FeatureTable {
            features: features.to_vec(),
            data,
            n_rows: samples.len(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn width(&self) -> usize {
        self.features.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn column_of(&self, feature: Feature) -> Option<usize> {
        self.features.iter().position(|&f| f == feature)
    }

    /// Reorders columns to `wanted`; extra columns are dropped.
    pub fn select(&self, wanted: &[Feature]) -> Result<FeatureTable> {
        let cols = wanted
            .iter()
            .map(|&f| {
                self.column_of(f)
                    .ok_or_else(|| Error::MissingFeature(f.name().to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut data = Vec::with_capacity(self.n_rows * cols.len());
        for i in 0..self.n_rows {
            let row = self.row(i);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        Ok(FeatureTable {
            features: wanted.to_vec(),
            data,
            n_rows: self.n_rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn spec() -> GridSpec {
        GridSpec::new(10, 12, 35.8, 51.1, 0.01, date("2018-01-01")).unwrap()
    }

    #[test]
    fn season_boundaries() {
        assert_eq!(season_of(date("2018-01-01")), Season::Cold);
        assert_eq!(season_of(date("2018-04-01")), Season::Warm);
        assert_eq!(season_of(date("2018-09-30")), Season::Warm);
        assert_eq!(season_of(date("2018-10-01")), Season::Cold);
        assert_eq!(season_of(date("2018-03-31")), Season::Cold);
    }

    #[test]
    fn every_month_has_one_season() {
        for m in 1..=12 {
            let s = season_of(NaiveDate::from_ymd_opt(2019, m, 15).unwrap());
            assert_eq!(s == Season::Warm, (4..=9).contains(&m));
        }
    }

    #[test]
    fn grid_spec_rejects_degenerate() {
        let d = date("2018-01-01");
        assert!(GridSpec::new(0, 3, 0.0, 0.0, 0.1, d).is_err());
        assert!(GridSpec::new(3, 0, 0.0, 0.0, 0.1, d).is_err());
        assert!(GridSpec::new(3, 3, 0.0, 0.0, 0.0, d).is_err());
        assert!(GridSpec::new(3, 3, 0.0, 0.0, -1.0, d).is_err());
    }

    #[test]
    fn cell_of_origin_and_edges() {
        let s = spec();
        assert_eq!(s.cell_of(35.8, 51.1), CellLookup::Inside { row: 0, col: 0 });
        // two cells south of the origin on a north-up grid
        assert_eq!(
            s.cell_of(35.8 - 2.0 * 0.01, 51.1),
            CellLookup::Inside { row: 2, col: 0 }
        );
        // half a cell beyond the outer edge
        assert_eq!(s.cell_of(35.8 + 0.01, 51.1), CellLookup::OutOfBounds);
        assert_eq!(s.cell_of(35.8, 51.1 - 0.01), CellLookup::OutOfBounds);
        let (lat, lon) = s.center_of(9, 11);
        assert_eq!(s.cell_of(lat - 0.01, lon), CellLookup::OutOfBounds);
        assert_eq!(s.cell_of(lat, lon + 0.01), CellLookup::OutOfBounds);
        assert_eq!(s.cell_of(f64::NAN, lon), CellLookup::OutOfBounds);
    }

    #[test]
    fn join_compatibility_ignores_date() {
        let a = spec();
        let b = a.with_date(date("2019-05-05"));
        assert!(a.is_join_compatible(&b));
        let mut c = a;
        c.cell_size = 0.02;
        assert!(!a.is_join_compatible(&c));
    }

    #[test]
    fn raster_rejects_bad_length_and_infinity() {
        let s = spec();
        assert!(Raster::new(s, "x", vec![0.0; 3]).is_err());
        let mut v = vec![0.0; s.len()];
        v[4] = f64::INFINITY;
        assert!(Raster::new(s, "x", v).is_err());
        let mut r = Raster::filled(s, "x", 1.0).unwrap();
        r.set(1, 1, None);
        assert_eq!(r.get(1, 1), None);
        assert_eq!(r.missing_count(), 1);
    }

    #[test]
    fn qa_codes_round_trip() {
        for code in 0..400u16 {
            if let Some(px) = QaPixel::from_code(code) {
                assert_eq!(px.to_code(), code);
                assert!(!px.meets_best() || px.meets_medium());
            }
        }
        assert_eq!(QaPixel::MISSING.to_code(), 323);
    }

    #[test]
    fn feature_names_round_trip() {
        for f in Feature::ALL {
            assert_eq!(f.name().parse::<Feature>().unwrap(), f);
        }
        assert!("PM".parse::<Feature>().is_err());
    }

    #[test]
    fn table_select_reorders_and_reports_missing() {
        let t = FeatureTable::new(vec![Feature::Blh, Feature::Rh], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = t.select(&[Feature::Rh]).unwrap();
        assert_eq!(s.row(1), &[4.0]);
        match t.select(&[Feature::Sp]) {
            Err(Error::MissingFeature(name)) => assert_eq!(name, "sp"),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn cell_center_round_trip(rows in 1usize..40, cols in 1usize..40,
                                  lat in -60.0f64..60.0, lon in -170.0f64..170.0,
                                  cell in 0.001f64..0.5, r in 0usize..40, c in 0usize..40) {
            let s = GridSpec::new(rows, cols, lat, lon, cell, date("2018-01-01")).unwrap();
            let (r, c) = (r % rows, c % cols);
            let (clat, clon) = s.center_of(r, c);
            prop_assert_eq!(s.cell_of(clat, clon), CellLookup::Inside { row: r, col: c });
        }

        #[test]
        fn join_compatibility_is_symmetric_and_transitive(a in 1usize..4, b in 1usize..4, c in 1usize..4) {
            let mk = |n: usize| GridSpec::new(n, 2, 0.0, 0.0, 0.1, date("2018-01-01")).unwrap();
            let (x, y, z) = (mk(a), mk(b), mk(c));
            prop_assert!(x.is_join_compatible(&x));
            prop_assert_eq!(x.is_join_compatible(&y), y.is_join_compatible(&x));
            if x.is_join_compatible(&y) && y.is_join_compatible(&z) {
                prop_assert!(x.is_join_compatible(&z));
            }
        }
    }
}
