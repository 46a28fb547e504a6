use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{fit_model, ModelSpec, TreeEnsemble};
use crate::datamodel::{Feature, FeatureTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `train`, `test` or `cv-fold-k`.
    pub label: String,
    pub n: usize,
    pub rmse: f64,
    pub mae: f64,
    /// Squared Pearson correlation of predictions and observations.
    pub r2: f64,
    /// False when either side has zero variance; `r2` is then 0.
    pub r2_defined: bool,
    /// Mean of `predicted - observed`.
    pub mean_error: f64,
}

pub fn evaluate(predicted: &[f64], observed: &[f64], label: &str) -> Result<EvalReport> {
    if predicted.len() != observed.len() {
        return Err(Error::InsufficientData(format!(
            "{} predictions for {} observations",
            predicted.len(),
            observed.len()
        )));
    }
    let n = predicted.len();
    if n == 0 {
        return Err(Error::InsufficientData("nothing to evaluate".into()));
    }
    let nf = n as f64;
    let (mut se, mut ae, mut e) = (0.0, 0.0, 0.0);
    for (p, o) in predicted.iter().zip(observed) {
        let d = p - o;
        se += d * d;
        ae += d.abs();
        e += d;
    }
    let (r2, r2_defined) = match pearson(predicted, observed) {
        Some(r) => ((r * r).min(1.0), true),
        None => (0.0, false),
    };
    Ok(EvalReport {
        label: label.to_string(),
        n,
        rmse: (se / nf).sqrt(),
        mae: ae / nf,
        r2,
        r2_defined,
        mean_error: e / nf,
    })
}

/// Pearson correlation; `None` when either input is constant.
pub(crate) fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

fn train_count(n: usize, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    if n < 2 {
        return Err(Error::InsufficientData(format!("cannot split {n} rows")));
    }
    Ok(((n as f64 * fraction).round() as usize).clamp(1, n - 1))
}

/// Seeded uniform shuffle, then the first `fraction` of rows train. Both
/// index lists come back sorted.
pub fn split_train_test(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let k = train_count(n, fraction)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = idx.split_off(k);
    idx.sort_unstable();
    test.sort_unstable();
    Ok((idx, test))
}

/// The earliest `fraction` of rows (by date, stable) train.
pub fn split_train_test_temporal(dates: &[NaiveDate], fraction: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    let k = train_count(dates.len(), fraction)?;
    let mut idx: Vec<usize> = (0..dates.len()).collect();
    idx.sort_by_key(|&i| dates[i]);
    let mut test = idx.split_off(k);
    idx.sort_unstable();
    test.sort_unstable();
    Ok((idx, test))
}

fn take_rows(x: &FeatureTable, rows: &[usize]) -> FeatureTable {
    let mut data = Vec::with_capacity(rows.len() * x.width());
    for &i in rows {
        data.extend_from_slice(x.row(i));
    }
    FeatureTable::new(x.features.clone(), data).expect("same width")
}

/// k-fold cross-validation with seeded fold assignment; one report per
/// validation fold.
pub fn cross_validate(
    spec: &ModelSpec,
    x: &FeatureTable,
    y: &[f64],
    k: usize,
    seed: u64,
) -> Result<Vec<EvalReport>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    let n = y.len();
    if n < k {
        return Err(Error::InsufficientData(format!("{n} rows cannot fill {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    (0..k)
        .map(|f| {
            let (val, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| fold_of[i] == f);
            let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let model = fit_model(spec, &take_rows(x, &train), &ty)?;
            let pred = model.predict(&take_rows(x, &val))?;
            let obs: Vec<f64> = val.iter().map(|&i| y[i]).collect();
            evaluate(&pred, &obs, &format!("cv-fold-{}", f + 1))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    /// Features by decreasing share (ties keep column order).
    pub ranking: Vec<(Feature, f64)>,
    /// False when no tree has a split; the ranking is then empty.
    pub has_splits: bool,
}

impl ImportanceReport {
    pub fn share(&self, feature: Feature) -> f64 {
        self.ranking
            .iter()
            .find(|(f, _)| *f == feature)
            .map_or(0.0, |(_, s)| *s)
    }
}

/// Total split gain per feature over all trees, normalized to sum to one.
pub fn feature_importance(model: &TreeEnsemble) -> ImportanceReport {
    let totals = model.gain_totals();
    let sum: f64 = totals.iter().sum();
    if !(sum > 0.0) {
        return ImportanceReport {
            ranking: Vec::new(),
            has_splits: false,
        };
    }
    let mut ranking: Vec<(Feature, f64)> = model
        .features
        .iter()
        .zip(&totals)
        .map(|(&f, &g)| (f, g / sum))
        .collect();
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1));
    ImportanceReport {
        ranking,
        has_splits: true,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    /// Feature names followed by `PM_c`.
    pub names: Vec<String>,
    /// Absolute Pearson correlations, row-major; 0 for constant columns
    /// (except the diagonal, which is 1).
    pub values: Vec<Vec<f64>>,
}

pub fn correlation_matrix(x: &FeatureTable, y: &[f64]) -> CorrelationMatrix {
    let mut cols: Vec<Vec<f64>> = (0..x.width())
        .map(|j| (0..x.n_rows()).map(|i| x.row(i)[j]).collect())
        .collect();
    cols.push(y.to_vec());
    let m = cols.len();
    let mut values = vec![vec![0.0; m]; m];
    for i in 0..m {
        values[i][i] = 1.0;
        for j in i + 1..m {
            let r = pearson(&cols[i], &cols[j]).map_or(0.0, f64::abs);
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    let mut names: Vec<String> = x.features.iter().map(|f| f.name().to_string()).collect();
    names.push("PM_c".to_string());
    CorrelationMatrix { names, values }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSetting {
    pub name: String,
    pub removed: Vec<Feature>,
}

/// The cumulative removal settings S1 to S8, least important first.
pub fn default_ablation_settings() -> Vec<AblationSetting> {
    use Feature::*;
    let order = [LaiLv, Month, ProbMedM, Cdir, Sp, ProbBestM, Ws10, Wd10];
    (1..=order.len())
        .map(|k| AblationSetting {
            name: format!("S{k}"),
            removed: order[..k].to_vec(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub removed: Vec<Feature>,
    pub test_rmse: f64,
    /// `test_rmse / baseline - 1`.
    pub relative_change: f64,
}

/// Refits `spec` without each setting's features and scores it on the test
/// rows. The first row is the all-features baseline `S0`.
pub fn run_ablation(
    spec: &ModelSpec,
    train: (&FeatureTable, &[f64]),
    test: (&FeatureTable, &[f64]),
    settings: &[AblationSetting],
) -> Result<Vec<AblationRow>> {
    let score = |removed: &[Feature]| -> Result<f64> {
        let keep: Vec<Feature> = train
            .0
            .features
            .iter()
            .copied()
            .filter(|f| !removed.contains(f))
            .collect();
        let model = fit_model(spec, &train.0.select(&keep)?, train.1)?;
        let pred = model.predict(test.0)?;
        Ok(evaluate(&pred, test.1, "test")?.rmse)
    };
    let base = score(&[])?;
    let mut rows = vec![AblationRow {
        name: "S0".into(),
        removed: Vec::new(),
        test_rmse: base,
        relative_change: 0.0,
    }];
    for s in settings {
        let r = score(&s.removed)?;
        rows.push(AblationRow {
            name: s.name.clone(),
            removed: s.removed.clone(),
            test_rmse: r,
            relative_change: r / base - 1.0,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn metric_examples() {
        let r = evaluate(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], "t").unwrap();
        assert_eq!((r.rmse, r.mae, r.r2), (0.0, 0.0, 1.0));
        let r = evaluate(&[3.0, 4.0], &[0.0, 0.0], "t").unwrap();
        assert!((r.rmse - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.mae, 3.5);
        assert!(!r.r2_defined);
        let r = evaluate(&[5.0, 5.0, 5.0], &[1.0, 2.0, 9.0], "t").unwrap();
        assert_eq!(r.r2, 0.0);
        assert!(!r.r2_defined);
    }

    #[test]
    fn splits_are_disjoint_and_exhaustive() {
        let (a, b) = split_train_test(101, 0.7, 5).unwrap();
        assert_eq!(a.len(), 71);
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..101).collect::<Vec<_>>());
        assert_eq!(split_train_test(101, 0.7, 5).unwrap(), (a, b));
        assert!(split_train_test(10, 1.0, 0).is_err());
        let d: Vec<NaiveDate> = ["2018-03-01", "2018-01-01", "2018-02-01", "2018-04-01"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        assert_eq!(
            split_train_test_temporal(&d, 0.5).unwrap(),
            (vec![1, 2], vec![0, 3])
        );
    }

    #[test]
    fn ablation_settings_are_cumulative() {
        let s = default_ablation_settings();
        assert_eq!(s.len(), 8);
        assert_eq!(s[0].removed, vec![Feature::LaiLv]);
        assert_eq!(s[7].removed.len(), 8);
        assert_eq!(s[7].removed[7], Feature::Wd10);
    }

    proptest! {
        #[test]
        fn metrics_match_direct_formulas(pairs in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 2..50)) {
            let p: Vec<f64> = pairs.iter().map(|x| x.0).collect();
            let o: Vec<f64> = pairs.iter().map(|x| x.1).collect();
            let r = evaluate(&p, &o, "t").unwrap();
            prop_assert!(r.rmse >= 0.0 && r.mae >= 0.0 && (0.0..=1.0).contains(&r.r2));
            prop_assert!(r.rmse * r.rmse >= r.mean_error * r.mean_error - 1e-9);
        }
    }
}
