use serde::{Deserialize, Serialize};

use crate::datamodel::{Feature, FeatureTable};
use crate::error::{Error, Result};
use crate::linalg::{Lu, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearKind {
    Univariate,
    Multivariate,
    Ridge,
    Lasso,
}

/// Linear regression on internally standardized predictors:
/// `intercept + sum(coef[j] * (x[j] - mean[j]) / scale[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: LinearKind,
    pub features: Vec<Feature>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub means: Vec<f64>,
    /// Population standard deviation per feature; 1 for constant columns.
    pub scales: Vec<f64>,
}

pub const LASSO_TOL: f64 = 1e-6;
pub const LASSO_MAX_SWEEPS: usize = 10_000;

struct Standardized {
    /// Column-major, centered and scaled.
    cols: Vec<Vec<f64>>,
    means: Vec<f64>,
    scales: Vec<f64>,
    y_mean: f64,
    yc: Vec<f64>,
}

fn standardize(x: &FeatureTable, y: &[f64]) -> Standardized {
    let n = x.n_rows();
    let nf = n as f64;
    let mut cols = Vec::with_capacity(x.width());
    let mut means = Vec::with_capacity(x.width());
    let mut scales = Vec::with_capacity(x.width());
    for j in 0..x.width() {
        let raw: Vec<f64> = (0..n).map(|i| x.row(i)[j]).collect();
        let m = raw.iter().sum::<f64>() / nf;
        let var = raw.iter().map(|v| (v - m).powi(2)).sum::<f64>() / nf;
        let s = if var > 0.0 { var.sqrt() } else { 1.0 };
        cols.push(raw.iter().map(|v| (v - m) / s).collect());
        means.push(m);
        scales.push(s);
    }
    let y_mean = y.iter().sum::<f64>() / nf;
    Standardized {
        cols,
        means,
        scales,
        y_mean,
        yc: y.iter().map(|v| v - y_mean).collect(),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fits the chosen linear model on every column of `x`. `lambda` is
/// ignored for the unpenalized kinds. Ridge minimizes
/// `|y - Xb|^2 + lambda |b|^2` and Lasso `|y - Xb|^2 / (2n) + lambda |b|_1`,
/// both on standardized columns with an unpenalized intercept.
pub fn fit_linear(x: &FeatureTable, y: &[f64], kind: LinearKind, lambda: f64) -> Result<LinearModel> {
    let n = x.n_rows();
    let p = x.width();
    if y.len() != n {
        return Err(Error::InsufficientData(format!(
            "{n} rows but {} targets",
            y.len()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!(
            "regularization strength must be >= 0, got {lambda}"
        )));
    }
    if kind == LinearKind::Univariate && p != 1 {
        return Err(Error::Config(format!(
            "univariate regression takes one feature, got {p}"
        )));
    }
    let min_rows = match kind {
        LinearKind::Lasso => 2,
        _ => p + 1,
    };
    if n < min_rows {
        return Err(Error::InsufficientData(format!(
            "{kind:?} regression on {p} features needs at least {min_rows} rows, got {n}"
        )));
    }
    let st = standardize(x, y);
    let coefficients = match kind {
        LinearKind::Univariate | LinearKind::Multivariate => normal_solve(&st, 0.0, kind)?,
        LinearKind::Ridge => normal_solve(&st, lambda, kind)?,
        LinearKind::Lasso => lasso(&st, lambda),
    };
    Ok(LinearModel {
        kind,
        features: x.features.clone(),
        intercept: st.y_mean,
        coefficients,
        lambda: if matches!(kind, LinearKind::Ridge | LinearKind::Lasso) {
            lambda
        } else {
            0.0
        },
        means: st.means,
        scales: st.scales,
    })
}

fn normal_solve(st: &Standardized, lambda: f64, kind: LinearKind) -> Result<Vec<f64>> {
    let p = st.cols.len();
    let mut a = Matrix::zeros(p);
    for i in 0..p {
        for j in i..p {
            let v = dot(&st.cols[i], &st.cols[j]);
            a.set(i, j, v);
            a.set(j, i, v);
        }
        a.add(i, i, lambda);
    }
    let b: Vec<f64> = st.cols.iter().map(|c| dot(c, &st.yc)).collect();
    // a standardized column has squared norm n, so a tiny relative pivot
    // means linear dependence (or a constant column)
    let lu = Lu::factorize(&a, 1e-10)
        .map_err(|_| Error::RankDeficient(format!("{kind:?} design over {p} features is singular")))?;
    Ok(lu.solve(&b))
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

fn lasso(st: &Standardized, lambda: f64) -> Vec<f64> {
    let p = st.cols.len();
    let n = st.yc.len() as f64;
    let norms: Vec<f64> = st.cols.iter().map(|c| dot(c, c) / n).collect();
    let mut beta = vec![0.0; p];
    let mut resid = st.yc.clone();
    for _ in 0..LASSO_MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            if norms[j] == 0.0 {
                continue;
            }
            let col = &st.cols[j];
            let rho = dot(col, &resid) / n + norms[j] * beta[j];
            let new = soft_threshold(rho, lambda) / norms[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                for (r, c) in resid.iter_mut().zip(col) {
                    *r -= delta * c;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < LASSO_TOL {
            break;
        }
    }
    beta
}

impl LinearModel {
    /// Prediction for one row laid out in `self.features` order.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut v = self.intercept;
        for j in 0..self.coefficients.len() {
            v += self.coefficients[j] * ((row[j] - self.means[j]) / self.scales[j]);
        }
        v
    }

    /// Coefficients on the original feature scale, with the matching
    /// intercept.
    pub fn raw_coefficients(&self) -> (f64, Vec<f64>) {
        let slopes: Vec<f64> = self
            .coefficients
            .iter()
            .zip(&self.scales)
            .map(|(c, s)| c / s)
            .collect();
        let shift: f64 = slopes.iter().zip(&self.means).map(|(b, m)| b * m).sum();
        (self.intercept - shift, slopes)
    }
}
