//! Regression models, evaluation and feature analysis.

mod ensemble;
mod eval;
mod linear;
pub mod tree;

pub use ensemble::{
    fit_forest, fit_gbt, EnsembleKind, EnsembleParams, ForestParams, GbtParams, TreeEnsemble,
};
pub use eval::{
    correlation_matrix, cross_validate, default_ablation_settings, evaluate, feature_importance,
    run_ablation, split_train_test, split_train_test_temporal, AblationRow, AblationSetting,
    CorrelationMatrix, EvalReport, ImportanceReport,
};
pub use linear::{fit_linear, LinearKind, LinearModel, LASSO_MAX_SWEEPS, LASSO_TOL};

use serde::{Deserialize, Serialize};

use crate::datamodel::{Feature, FeatureTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Univariate,
    Multivariate,
    Ridge,
    Lasso,
    RandomForest,
    ExtraTrees,
    GradientBoosting,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Univariate,
        ModelKind::Multivariate,
        ModelKind::Ridge,
        ModelKind::Lasso,
        ModelKind::RandomForest,
        ModelKind::ExtraTrees,
        ModelKind::GradientBoosting,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Univariate => "univariate",
            ModelKind::Multivariate => "multivariate",
            ModelKind::Ridge => "ridge",
            ModelKind::Lasso => "lasso",
            ModelKind::RandomForest => "random_forest",
            ModelKind::ExtraTrees => "extra_trees",
            ModelKind::GradientBoosting => "gradient_boosting",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model `{s}`")))
    }
}

/// Everything needed to fit one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Regularization strength for ridge and lasso.
    pub lambda: f64,
    /// The single predictor of the univariate model.
    pub univariate_feature: Feature,
    pub random_forest: ForestParams,
    pub extra_trees: ForestParams,
    pub boosting: GbtParams,
    pub seed: u64,
}

impl ModelSpec {
    /// Default hyperparameters for `kind`.
    pub fn new(kind: ModelKind) -> Self {
        ModelSpec {
            kind,
            lambda: 0.1,
            univariate_feature: Feature::NAodM,
            random_forest: ForestParams::random_forest(),
            extra_trees: ForestParams::extra_trees(),
            boosting: GbtParams::default(),
            seed: 42,
        }
    }

    /// Columns the model is fitted on, given the available ones.
    pub fn input_features(&self, available: &[Feature]) -> Vec<Feature> {
        match self.kind {
            ModelKind::Univariate => vec![self.univariate_feature],
            _ => available.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Model {
    Linear(LinearModel),
    Trees(TreeEnsemble),
}

impl Model {
    pub fn features(&self) -> &[Feature] {
        match self {
            Model::Linear(m) => &m.features,
            Model::Trees(m) => &m.features,
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Linear(m) => match m.kind {
                LinearKind::Univariate => ModelKind::Univariate,
                LinearKind::Multivariate => ModelKind::Multivariate,
                LinearKind::Ridge => ModelKind::Ridge,
                LinearKind::Lasso => ModelKind::Lasso,
            },
            Model::Trees(m) => match m.kind {
                EnsembleKind::RandomForest => ModelKind::RandomForest,
                EnsembleKind::ExtraTrees => ModelKind::ExtraTrees,
                EnsembleKind::GradientBoosting => ModelKind::GradientBoosting,
            },
        }
    }

    /// Prediction for one row in `self.features()` order.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self {
            Model::Linear(m) => m.predict_row(row),
            Model::Trees(m) => m.predict_row(row),
        }
    }

    /// Predicts every row. Columns are matched by name; extra columns are
    /// ignored and a missing one is an error naming it.
    pub fn predict(&self, table: &FeatureTable) -> Result<Vec<f64>> {
        let t = table.select(self.features())?;
        Ok((0..t.n_rows()).map(|i| self.predict_row(t.row(i))).collect())
    }
}

/// Fits `spec` on the columns of `x` it uses.
pub fn fit_model(spec: &ModelSpec, x: &FeatureTable, y: &[f64]) -> Result<Model> {
    let x = x.select(&spec.input_features(&x.features))?;
    Ok(match spec.kind {
        ModelKind::Univariate => Model::Linear(fit_linear(&x, y, LinearKind::Univariate, 0.0)?),
        ModelKind::Multivariate => Model::Linear(fit_linear(&x, y, LinearKind::Multivariate, 0.0)?),
        ModelKind::Ridge => Model::Linear(fit_linear(&x, y, LinearKind::Ridge, spec.lambda)?),
        ModelKind::Lasso => Model::Linear(fit_linear(&x, y, LinearKind::Lasso, spec.lambda)?),
        ModelKind::RandomForest => Model::Trees(fit_forest(
            &x,
            y,
            EnsembleKind::RandomForest,
            spec.random_forest,
            spec.seed,
        )?),
        ModelKind::ExtraTrees => Model::Trees(fit_forest(
            &x,
            y,
            EnsembleKind::ExtraTrees,
            spec.extra_trees,
            spec.seed,
        )?),
        ModelKind::GradientBoosting => Model::Trees(fit_gbt(&x, y, spec.boosting, spec.seed)?),
    })
}
