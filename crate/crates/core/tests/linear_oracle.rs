//! Linear models checked against dense nalgebra solves.

use aeromap::datamodel::{Feature, FeatureTable};
use aeromap::models::{fit_linear, LinearKind};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FEATS: [Feature; 4] = [Feature::AodM, Feature::Blh, Feature::T2m, Feature::Ws10];

fn dataset(seed: u64, n: usize) -> (FeatureTable, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * FEATS.len());
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row = [
            rng.random_range(0.0..1.5),
            rng.random_range(200.0..2500.0),
            rng.random_range(-5.0..35.0),
            rng.random_range(0.0..9.0),
        ];
        y.push(12.0 + 30.0 * row[0] - 0.01 * row[1] + 0.4 * row[2] + rng.random_range(-3.0..3.0));
        data.extend(row);
    }
    (FeatureTable::new(FEATS.to_vec(), data).unwrap(), y)
}

fn design(x: &FeatureTable) -> DMatrix<f64> {
    DMatrix::from_fn(x.n_rows(), x.width() + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            x.row(i)[j - 1]
        }
    })
}

#[test]
fn ols_matches_normal_equations() {
    let (x, y) = dataset(1, 120);
    let m = fit_linear(&x, &y, LinearKind::Multivariate, 0.0).unwrap();
    let a = design(&x);
    let yv = DVector::from_vec(y.clone());
    let beta = (a.transpose() * &a).lu().solve(&(a.transpose() * yv)).unwrap();
    let (b0, b) = m.raw_coefficients();
    assert!(
        (b0 - beta[0]).abs() <= 1e-8 * beta[0].abs().max(1.0),
        "{b0} vs {}",
        beta[0]
    );
    for j in 0..b.len() {
        assert!(
            (b[j] - beta[j + 1]).abs() <= 1e-8 * beta[j + 1].abs().max(1e-3),
            "coef {j}"
        );
    }
}

#[test]
fn univariate_is_simple_regression() {
    let (x, y) = dataset(2, 80);
    let col = FeatureTable::new(
        vec![Feature::AodM],
        (0..x.n_rows()).map(|i| x.row(i)[0]).collect(),
    )
    .unwrap();
    let m = fit_linear(&col, &y, LinearKind::Univariate, 0.0).unwrap();
    let xs: Vec<f64> = (0..x.n_rows()).map(|i| x.row(i)[0]).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = xs.iter().map(|a| (a - mx).powi(2)).sum();
    let (b0, b) = m.raw_coefficients();
    assert!((b[0] - sxy / sxx).abs() < 1e-9);
    assert!((b0 - (my - sxy / sxx * mx)).abs() < 1e-9);
}

/// Ridge in standardized space: (Z'Z + lambda I) b = Z'(y - ybar).
fn ridge_oracle(x: &FeatureTable, y: &[f64], lambda: f64) -> Vec<f64> {
    let n = x.n_rows();
    let p = x.width();
    let mut z = DMatrix::zeros(n, p);
    for j in 0..p {
        let col: Vec<f64> = (0..n).map(|i| x.row(i)[j]).collect();
        let m = col.iter().sum::<f64>() / n as f64;
        let s = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        for i in 0..n {
            z[(i, j)] = (col[i] - m) / s;
        }
    }
    let ym = y.iter().sum::<f64>() / n as f64;
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - ym));
    let lhs = z.transpose() * &z + DMatrix::identity(p, p) * lambda;
    lhs.lu()
        .solve(&(z.transpose() * yc))
        .unwrap()
        .iter()
        .copied()
        .collect()
}

#[test]
fn ridge_matches_closed_form() {
    let (x, y) = dataset(3, 150);
    for lambda in [0.1, 5.0, 250.0] {
        let m = fit_linear(&x, &y, LinearKind::Ridge, lambda).unwrap();
        let want = ridge_oracle(&x, &y, lambda);
        for (a, b) in m.coefficients.iter().zip(&want) {
            assert!(
                (a - b).abs() < 1e-8 * b.abs().max(1.0),
                "lambda {lambda}: {a} vs {b}"
            );
        }
    }
}

#[test]
fn lasso_satisfies_kkt() {
    let (x, y) = dataset(4, 200);
    let lambda = 0.8;
    let m = fit_linear(&x, &y, LinearKind::Lasso, lambda).unwrap();
    let n = x.n_rows();
    // residual on the standardized scale
    let r: Vec<f64> = (0..n).map(|i| y[i] - m.predict_row(x.row(i))).collect();
    for j in 0..x.width() {
        let g: f64 = (0..n)
            .map(|i| (x.row(i)[j] - m.means[j]) / m.scales[j] * r[i])
            .sum::<f64>()
            / n as f64;
        let b = m.coefficients[j];
        if b == 0.0 {
            assert!(g.abs() <= lambda + 1e-4, "inactive {j}: |g| {g}");
        } else {
            assert!((g - lambda * b.signum()).abs() < 1e-3, "active {j}: g {g}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ridge_norm_nonincreasing_in_lambda(seed in 0u64..1000, l1 in 0.0f64..50.0, dl in 0.0f64..50.0) {
        let (x, y) = dataset(seed, 40);
        let norm = |l: f64| {
            fit_linear(&x, &y, LinearKind::Ridge, l).unwrap().coefficients.iter().map(|c| c * c).sum::<f64>()
        };
        prop_assert!(norm(l1 + dl) <= norm(l1) * (1.0 + 1e-12) + 1e-12);
    }
}
