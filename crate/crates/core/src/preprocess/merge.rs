use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::datamodel::{season_of, Raster, Season};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub slope: f64,
    pub intercept: f64,
}

impl AffineMap {
    pub fn apply(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// Least-squares maps between the two sensors for one group of days.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorFit {
    /// Estimates Aqua AOD from Terra AOD.
    pub terra_to_aqua: AffineMap,
    /// Estimates Terra AOD from Aqua AOD.
    pub aqua_to_terra: AffineMap,
    /// Squared Pearson correlation of the pairs.
    pub r2: f64,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeMode {
    Seasonal,
    Pooled,
}

/// Seasonal and pooled sensor maps. A season without enough pairs has no
/// fit of its own and falls back to the pooled one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeCoefficients {
    pub cold: Option<SensorFit>,
    pub warm: Option<SensorFit>,
    pub pooled: SensorFit,
}

impl MergeCoefficients {
    pub fn for_season(&self, season: Season, mode: MergeMode) -> &SensorFit {
        let seasonal = match season {
            Season::Cold => self.cold.as_ref(),
            Season::Warm => self.warm.as_ref(),
        };
        match mode {
            MergeMode::Seasonal => seasonal.unwrap_or(&self.pooled),
            MergeMode::Pooled => &self.pooled,
        }
    }
}

fn fit_pairs(pairs: &[(f64, f64)]) -> Result<SensorFit> {
    let n = pairs.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "sensor regression needs at least 2 pairs, got {n}"
        )));
    }
    let nf = n as f64;
    let ma = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let mt = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut saa, mut stt, mut sat) = (0.0, 0.0, 0.0);
    for &(a, t) in pairs {
        saa += (a - ma) * (a - ma);
        stt += (t - mt) * (t - mt);
        sat += (a - ma) * (t - mt);
    }
    if !(saa > 0.0 && stt > 0.0) {
        return Err(Error::InsufficientData(
            "sensor regression needs at least 2 distinct values per sensor".into(),
        ));
    }
    let terra_to_aqua = AffineMap {
        slope: sat / stt,
        intercept: ma - sat / stt * mt,
    };
    let aqua_to_terra = AffineMap {
        slope: sat / saa,
        intercept: mt - sat / saa * ma,
    };
    Ok(SensorFit {
        terra_to_aqua,
        aqua_to_terra,
        r2: sat * sat / (saa * stt),
        n_pairs: n,
    })
}

/// Fits both regression directions per season and over all pairs.
/// Pairs are `(aqua, terra, date)`.
pub fn fit_merge_coefficients(pairs: &[(f64, f64, NaiveDate)]) -> Result<MergeCoefficients> {
    let all: Vec<(f64, f64)> = pairs.iter().map(|p| (p.0, p.1)).collect();
    let by = |s: Season| -> Vec<(f64, f64)> {
        pairs
            .iter()
            .filter(|p| season_of(p.2) == s)
            .map(|p| (p.0, p.1))
            .collect()
    };
    Ok(MergeCoefficients {
        cold: fit_pairs(&by(Season::Cold)).ok(),
        warm: fit_pairs(&by(Season::Warm)).ok(),
        pooled: fit_pairs(&all)?,
    })
}

/// Daily AOD from the two overpasses: the mean when both exist, otherwise
/// the available one averaged with its regression estimate of the other.
pub fn merge_aqua_terra(
    aqua: Option<f64>,
    terra: Option<f64>,
    season: Season,
    coeffs: &MergeCoefficients,
    mode: MergeMode,
) -> Option<f64> {
    match (aqua, terra) {
        (Some(a), Some(t)) => Some(0.5 * (a + t)),
        (None, Some(t)) => {
            let a = coeffs.for_season(season, mode).terra_to_aqua.apply(t);
            Some(0.5 * (a + t))
        }
        (Some(a), None) => {
            let t = coeffs.for_season(season, mode).aqua_to_terra.apply(a);
            Some(0.5 * (a + t))
        }
        (None, None) => None,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeCounts {
    pub both: usize,
    pub aqua_imputed: usize,
    pub terra_imputed: usize,
    pub missing: usize,
}

impl MergeCounts {
    pub fn add(&mut self, other: &MergeCounts) {
        self.both += other.both;
        self.aqua_imputed += other.aqua_imputed;
        self.terra_imputed += other.terra_imputed;
        self.missing += other.missing;
    }
}

/// Merges one day's Aqua and Terra rasters cell by cell. At least one of
/// them must be given; both must share a registration.
pub fn merge_rasters(
    aqua: Option<&Raster>,
    terra: Option<&Raster>,
    coeffs: &MergeCoefficients,
    mode: MergeMode,
) -> Result<(Raster, MergeCounts)> {
    let spec = match (aqua, terra) {
        (Some(a), Some(t)) => {
            if !a.spec.is_join_compatible(&t.spec) {
                return Err(Error::Incompatible("Aqua and Terra grids differ".into()));
            }
            a.spec
        }
        (Some(a), None) => a.spec,
        (None, Some(t)) => t.spec,
        (None, None) => return Err(Error::InsufficientData("no AOD raster for the day".into())),
    };
    let season = season_of(spec.date);
    let mut counts = MergeCounts::default();
    let values = (0..spec.len())
        .map(|i| {
            let a = aqua.and_then(|r| r.get_index(i));
            let t = terra.and_then(|r| r.get_index(i));
            match (a, t) {
                (Some(_), Some(_)) => counts.both += 1,
                (None, Some(_)) => counts.aqua_imputed += 1,
                (Some(_), None) => counts.terra_imputed += 1,
                (None, None) => counts.missing += 1,
            }
            merge_aqua_terra(a, t, season, coeffs, mode).unwrap_or(f64::NAN)
        })
        .collect();
    Ok((Raster::new(spec, "aod", values)?, counts))
}
