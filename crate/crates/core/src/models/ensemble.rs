use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, GrowParams, Presorted, SplitRule, Tree};
use crate::datamodel::{Feature, FeatureTable};
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    RandomForest,
    ExtraTrees,
    GradientBoosting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    /// Fraction of features examined at each node.
    pub max_features: f64,
    pub min_samples_leaf: usize,
}

impl ForestParams {
    pub fn random_forest() -> Self {
        ForestParams {
            n_estimators: 500,
            max_depth: 10,
            max_features: 0.5,
            min_samples_leaf: 1,
        }
    }

    pub fn extra_trees() -> Self {
        ForestParams {
            max_features: 0.8,
            ..Self::random_forest()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub max_features: f64,
    pub min_child_weight: f64,
    pub gamma: f64,
    /// L2 penalty on leaf values.
    pub reg_lambda: f64,
    /// Stop after this many stages without validation improvement.
    pub early_stopping_rounds: Option<usize>,
    /// Share of the training rows held out for early stopping.
    pub validation_fraction: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            n_estimators: 2000,
            learning_rate: 0.3,
            max_depth: 6,
            max_features: 1.0,
            min_child_weight: 1.0,
            gamma: 0.0,
            reg_lambda: 1.0,
            early_stopping_rounds: None,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnsembleParams {
    Forest(ForestParams),
    Boosting(GbtParams),
}

/// Forest: mean of tree outputs. Boosting: `base_score + learning_rate *
/// sum of tree outputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub kind: EnsembleKind,
    pub features: Vec<Feature>,
    pub base_score: f64,
    pub learning_rate: f64,
    pub params: EnsembleParams,
    pub seed: u64,
    pub trees: Vec<Tree>,
    /// Training MSE after each boosting stage (empty for forests).
    #[serde(default)]
    pub train_loss: Vec<f64>,
}

impl TreeEnsemble {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.kind {
            EnsembleKind::GradientBoosting => {
                let mut s = 0.0;
                for t in &self.trees {
                    s += t.predict_row(row);
                }
                self.base_score + self.learning_rate * s
            }
            _ => {
                let mut s = 0.0;
                for t in &self.trees {
                    s += t.predict_row(row);
                }
                s / self.trees.len() as f64
            }
        }
    }

    /// Total split gain per feature (in `self.features` order).
    pub fn gain_totals(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.features.len()];
        for t in &self.trees {
            t.accumulate_gain(&mut acc);
        }
        acc
    }
}

fn columns(x: &FeatureTable) -> Vec<Vec<f64>> {
    (0..x.width())
        .map(|j| (0..x.n_rows()).map(|i| x.row(i)[j]).collect())
        .collect()
}

fn n_features(frac: f64, p: usize) -> Result<usize> {
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::Config(format!(
            "max_features must lie in (0, 1], got {frac}"
        )));
    }
    Ok(((frac * p as f64).floor() as usize).max(1))
}

/// Independent generator for tree `index` of an ensemble seeded by `seed`.
fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

fn check_rows(x: &FeatureTable, y: &[f64]) -> Result<()> {
    if x.n_rows() != y.len() {
        return Err(Error::InsufficientData(format!(
            "{} rows but {} targets",
            x.n_rows(),
            y.len()
        )));
    }
    if y.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "tree ensembles need at least 2 rows, got {}",
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) || (0..x.n_rows()).any(|i| x.row(i).iter().any(|v| !v.is_finite())) {
        return Err(Error::Domain("non-finite training value".into()));
    }
    Ok(())
}

/// Random forest (bootstrap, best split over a feature subset) or extra
/// trees (all rows, one random threshold per candidate feature).
pub fn fit_forest(
    x: &FeatureTable,
    y: &[f64],
    kind: EnsembleKind,
    params: ForestParams,
    seed: u64,
) -> Result<TreeEnsemble> {
    check_rows(x, y)?;
    let (rule, bootstrap) = match kind {
        EnsembleKind::RandomForest => (SplitRule::Best, true),
        EnsembleKind::ExtraTrees => (SplitRule::Random, false),
        EnsembleKind::GradientBoosting => {
            return Err(Error::Config("use fit_gbt for gradient boosting".into()))
        }
    };
    if params.n_estimators == 0 {
        return Err(Error::Config("n_estimators must be at least 1".into()));
    }
    let data = Presorted::new(columns(x));
    let grow = GrowParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf.max(1) as f64,
        min_child_weight: 0.0,
        lambda: 0.0,
        gamma: 0.0,
        max_features: n_features(params.max_features, x.width())?,
        rule,
    };
    let n = y.len();
    let g: Vec<f64> = y.iter().map(|v| -v).collect();
    let h = vec![1.0; n];
    let trees = par::map_range(params.n_estimators, |t| {
        let mut rng = tree_rng(seed, t);
        let w = if bootstrap {
            let mut w = vec![0.0; n];
            for _ in 0..n {
                w[rng.random_range(0..n)] += 1.0;
            }
            w
        } else {
            vec![1.0; n]
        };
        grow_tree(&data, &g, &h, &w, grow, &mut rng).0
    });
    Ok(TreeEnsemble {
        kind,
        features: x.features.clone(),
        base_score: 0.0,
        learning_rate: 1.0,
        params: EnsembleParams::Forest(params),
        seed,
        trees,
        train_loss: Vec::new(),
    })
}

/// Least-squares gradient boosting. With early stopping, a seeded share of
/// the rows is held out and the ensemble is cut back to its best stage.
pub fn fit_gbt(x: &FeatureTable, y: &[f64], params: GbtParams, seed: u64) -> Result<TreeEnsemble> {
    check_rows(x, y)?;
    if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
        return Err(Error::Config(format!(
            "learning_rate must lie in (0, 1], got {}",
            params.learning_rate
        )));
    }
    if params.reg_lambda < 0.0 || params.gamma < 0.0 || params.min_child_weight < 0.0 {
        return Err(Error::Config(
            "reg_lambda, gamma and min_child_weight must be >= 0".into(),
        ));
    }
    let n = y.len();
    let mut fit_rows: Vec<usize> = (0..n).collect();
    let mut val_rows = Vec::new();
    if params.early_stopping_rounds.is_some() {
        let f = params.validation_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!(
                "validation_fraction must lie in (0, 1), got {f}"
            )));
        }
        let mut rng = tree_rng(seed, usize::MAX - 1);
        fit_rows.shuffle(&mut rng);
        let n_val = ((n as f64 * f).round() as usize).clamp(1, n - 1);
        val_rows = fit_rows.split_off(n - n_val);
        fit_rows.sort_unstable();
        val_rows.sort_unstable();
    }
    let mut w = vec![0.0; n];
    for &i in &fit_rows {
        w[i] = 1.0;
    }
    let data = Presorted::new(columns(x));
    let grow = GrowParams {
        max_depth: params.max_depth,
        min_samples_leaf: 1.0,
        min_child_weight: params.min_child_weight,
        lambda: params.reg_lambda,
        gamma: params.gamma,
        max_features: n_features(params.max_features, x.width())?,
        rule: SplitRule::Best,
    };
    let base = fit_rows.iter().map(|&i| y[i]).sum::<f64>() / fit_rows.len() as f64;
    let eta = params.learning_rate;
    let h = vec![1.0; n];
    let mut sum = vec![0.0; n];
    let mut trees = Vec::with_capacity(params.n_estimators);
    let mut train_loss = Vec::with_capacity(params.n_estimators);
    let mut best = (f64::INFINITY, 0usize);
    for t in 0..params.n_estimators {
        let g: Vec<f64> = (0..n).map(|i| base + eta * sum[i] - y[i]).collect();
        let mut rng = tree_rng(seed, t);
        let (tree, fitted) = grow_tree(&data, &g, &h, &w, grow, &mut rng);
        for i in 0..n {
            sum[i] += if w[i] > 0.0 {
                fitted[i]
            } else {
                tree.predict_row(&x.row(i)[..])
            };
        }
        trees.push(tree);
        let mse = fit_rows
            .iter()
            .map(|&i| (base + eta * sum[i] - y[i]).powi(2))
            .sum::<f64>()
            / fit_rows.len() as f64;
        train_loss.push(mse);
        if let Some(rounds) = params.early_stopping_rounds {
            let val = val_rows
                .iter()
                .map(|&i| (base + eta * sum[i] - y[i]).powi(2))
                .sum::<f64>();
            if val < best.0 {
                best = (val, t + 1);
            } else if t + 1 - best.1 >= rounds {
                break;
            }
        }
    }
    if params.early_stopping_rounds.is_some() {
        trees.truncate(best.1.max(1));
        train_loss.truncate(best.1.max(1));
    }
    Ok(TreeEnsemble {
        kind: EnsembleKind::GradientBoosting,
        features: x.features.clone(),
        base_score: base,
        learning_rate: eta,
        params: EnsembleParams::Boosting(params),
        seed,
        trees,
        train_loss,
    })
}
