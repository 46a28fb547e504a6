use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    dedup_locations, empirical_variogram, fit_variogram, Kriger, KrigingConfig, KrigingKind, LocalFrame,
    SamplePoint, VariogramFamily, VariogramModel,
};
use crate::error::{Error, Result};
use crate::linalg::{solve, Matrix};
use crate::par;

/// Default number of lag classes for empirical variograms.
pub const DEFAULT_BINS: usize = 12;

/// Fits the variogram of the requested family and wraps it in a kriging
/// configuration. For universal kriging the variogram is fitted to the
/// residuals of a first-order trend surface.
pub fn fit_kriging_config(
    samples: &[SamplePoint],
    kind: KrigingKind,
    family: VariogramFamily,
) -> Result<KrigingConfig> {
    let points = dedup_locations(samples);
    let points = match kind {
        KrigingKind::Ordinary => points,
        KrigingKind::Universal => detrend(&points)?,
    };
    let bins = empirical_variogram(&points, DEFAULT_BINS, None)?;
    let fit = fit_variogram(&bins, family)?;
    Ok(KrigingConfig::new(kind, fit.model))
}

/// Ordinary kriging with a zero-nugget linear variogram. Used when a
/// configured variogram cannot be fitted; needs no parameters beyond a
/// positive slope, which does not change the weights.
pub fn fallback_config(samples: &[SamplePoint]) -> KrigingConfig {
    let n = samples.len().max(1) as f64;
    let mean = samples.iter().map(|p| p.value).sum::<f64>() / n;
    let var = samples.iter().map(|p| (p.value - mean).powi(2)).sum::<f64>() / n;
    KrigingConfig::new(KrigingKind::Ordinary, VariogramModel::linear(0.0, var.max(1e-12)))
}

/// Residuals of an ordinary least-squares plane in local coordinates.
fn detrend(points: &[SamplePoint]) -> Result<Vec<SamplePoint>> {
    if points.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "trend removal needs at least 4 locations, got {}",
            points.len()
        )));
    }
    let frame = LocalFrame::centered_on(points);
    let mut xtx = Matrix::zeros(3);
    let mut xty = [0.0; 3];
    for p in points {
        let (x, y) = frame.project(p.lat, p.lon);
        let f = [1.0, x, y];
        for i in 0..3 {
            xty[i] += f[i] * p.value;
            for j in 0..3 {
                xtx.add(i, j, f[i] * f[j]);
            }
        }
    }
    let beta = solve(&xtx, &xty)
        .map_err(|_| Error::Singular("sample locations are collinear; no trend plane exists".into()))?;
    Ok(points
        .iter()
        .map(|p| {
            let (x, y) = frame.project(p.lat, p.lon);
            SamplePoint {
                value: p.value - (beta[0] + beta[1] * x + beta[2] * y),
                ..*p
            }
        })
        .collect())
}

/// Cross-validation score of one (kind, family) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub kind: KrigingKind,
    pub family: VariogramFamily,
    /// `None` marks a fold whose fit or solve failed (scored as infinite).
    pub fold_rmse: Vec<Option<f64>>,
    pub mean_rmse: Option<f64>,
}

impl CvRow {
    pub fn score(&self) -> f64 {
        self.mean_rmse.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: KrigingConfig,
    pub table: Vec<CvRow>,
}

/// Scores every candidate (kind, family) by k-fold cross-validated RMSE
/// and refits the winner on all samples. Fold membership is a seeded
/// shuffle of the de-duplicated locations.
pub fn grid_search_kriging(
    samples: &[SamplePoint],
    candidates: &[(KrigingKind, VariogramFamily)],
    folds: usize,
    seed: u64,
) -> Result<GridSearchResult> {
    if candidates.is_empty() {
        return Err(Error::Config("no kriging candidates to search".into()));
    }
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    let points = dedup_locations(samples);
    if points.len() < folds {
        return Err(Error::InsufficientData(format!(
            "{} locations cannot fill {folds} folds",
            points.len()
        )));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0usize; points.len()];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }

    let table: Vec<CvRow> = par::map_range(candidates.len(), |c| {
        let (kind, family) = candidates[c];
        let fold_rmse: Vec<Option<f64>> = (0..folds)
            .map(|f| fold_score(&points, &fold_of, f, kind, family))
            .collect();
        let mean_rmse = fold_rmse
            .iter()
            .copied()
            .collect::<Option<Vec<f64>>>()
            .map(|v| v.iter().sum::<f64>() / v.len() as f64);
        CvRow {
            kind,
            family,
            fold_rmse,
            mean_rmse,
        }
    });

    let best_row = table
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.score().total_cmp(&b.1.score()).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .unwrap();
    if candidates.len() > 1 && !table[best_row].score().is_finite() {
        return Err(Error::InsufficientData(
            "every kriging candidate failed cross-validation".into(),
        ));
    }
    let best = fit_kriging_config(&points, table[best_row].kind, table[best_row].family)?;
    Ok(GridSearchResult { best, table })
}

fn fold_score(
    points: &[SamplePoint],
    fold_of: &[usize],
    fold: usize,
    kind: KrigingKind,
    family: VariogramFamily,
) -> Option<f64> {
    let (held, train): (Vec<_>, Vec<_>) = points.iter().zip(fold_of).partition(|(_, &f)| f == fold);
    let train: Vec<SamplePoint> = train.into_iter().map(|(p, _)| *p).collect();
    let held: Vec<SamplePoint> = held.into_iter().map(|(p, _)| *p).collect();
    let config = fit_kriging_config(&train, kind, family).ok()?;
    let kriger = Kriger::new(config, &train).ok()?;
    let mut sse = 0.0;
    for p in &held {
        let r = kriger.predict(p.lat, p.lon).ok()?;
        sse += (r.value - p.value).powi(2);
    }
    let rmse = (sse / held.len() as f64).sqrt();
    rmse.is_finite().then_some(rmse)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice(f: impl Fn(f64, f64) -> f64) -> Vec<SamplePoint> {
        let mut v = Vec::new();
        for i in 0..7 {
            for j in 0..7 {
                let lat = 35.6 + 0.02 * i as f64 + 0.003 * ((i * 3 + j) % 4) as f64;
                let lon = 51.2 + 0.025 * j as f64 + 0.002 * ((i + 2 * j) % 5) as f64;
                v.push(SamplePoint::new(lat, lon, f(lat, lon)));
            }
        }
        v
    }

    #[test]
    fn single_candidate_is_returned() {
        let pts = lattice(|lat, lon| (lat * 40.0).sin() + (lon * 30.0).cos());
        let res =
            grid_search_kriging(&pts, &[(KrigingKind::Ordinary, VariogramFamily::Spherical)], 5, 7).unwrap();
        assert_eq!(res.table.len(), 1);
        assert_eq!(res.best.kind, KrigingKind::Ordinary);
        assert_eq!(res.best.variogram.family, VariogramFamily::Spherical);
        assert_eq!(res.table[0].fold_rmse.len(), 5);
    }

    #[test]
    fn search_is_deterministic() {
        let pts = lattice(|lat, lon| 3.0 * lat - 2.0 * lon + (lat * 50.0).sin());
        let cands: Vec<_> = KrigingKind::ALL
            .iter()
            .flat_map(|&k| VariogramFamily::ALL.iter().map(move |&f| (k, f)))
            .collect();
        let a = grid_search_kriging(&pts, &cands, 4, 11).unwrap();
        let b = grid_search_kriging(&pts, &cands, 4, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.table.len(), 8);
    }

    #[test]
    fn detrend_removes_a_plane() {
        let pts = lattice(|lat, lon| 10.0 + 4.0 * lat - 7.0 * lon);
        let r = detrend(&pts).unwrap();
        assert!(r.iter().all(|p| p.value.abs() < 1e-6));
    }
}
