use serde::{Deserialize, Serialize};

use super::{distance_m, SamplePoint};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariogramFamily {
    Linear,
    Spherical,
    Gaussian,
    Power,
}

impl VariogramFamily {
    pub const ALL: [VariogramFamily; 4] = [
        VariogramFamily::Linear,
        VariogramFamily::Spherical,
        VariogramFamily::Gaussian,
        VariogramFamily::Power,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariogramFamily::Linear => "linear",
            VariogramFamily::Spherical => "spherical",
            VariogramFamily::Gaussian => "gaussian",
            VariogramFamily::Power => "power",
        }
    }

    fn is_bounded(self) -> bool {
        matches!(self, VariogramFamily::Spherical | VariogramFamily::Gaussian)
    }
}

impl std::str::FromStr for VariogramFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        VariogramFamily::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown variogram family `{s}`")))
    }
}

/// Semivariogram model. Distances are in meters.
///
/// Bounded families use `nugget`, total `sill` and `range` (the Gaussian
/// range is the practical range, where 95% of the partial sill is
/// reached). Linear and Power use `nugget + scale * h^exponent`, with the
/// exponent fixed at 1 for Linear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariogramModel {
    pub family: VariogramFamily,
    pub nugget: f64,
    #[serde(default)]
    pub sill: f64,
    #[serde(default)]
    pub range: f64,
    #[serde(default)]
    pub scale: f64,
    #[serde(default = "one")]
    pub exponent: f64,
}

fn one() -> f64 {
    1.0
}

impl VariogramModel {
    pub fn spherical(nugget: f64, sill: f64, range: f64) -> Self {
        VariogramModel {
            family: VariogramFamily::Spherical,
            nugget,
            sill,
            range,
            scale: 0.0,
            exponent: 1.0,
        }
    }

    pub fn gaussian(nugget: f64, sill: f64, range: f64) -> Self {
        VariogramModel {
            family: VariogramFamily::Gaussian,
            ..VariogramModel::spherical(nugget, sill, range)
        }
    }

    pub fn linear(nugget: f64, scale: f64) -> Self {
        VariogramModel {
            family: VariogramFamily::Linear,
            nugget,
            sill: 0.0,
            range: 0.0,
            scale,
            exponent: 1.0,
        }
    }

    pub fn power(nugget: f64, scale: f64, exponent: f64) -> Self {
        VariogramModel {
            family: VariogramFamily::Power,
            exponent,
            ..VariogramModel::linear(nugget, scale)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Domain(m));
        if !(self.nugget >= 0.0 && self.nugget.is_finite()) {
            return bad(format!("nugget must be >= 0, got {}", self.nugget));
        }
        if self.family.is_bounded() {
            if !(self.sill >= self.nugget && self.sill.is_finite()) {
                return bad(format!("sill {} below nugget {}", self.sill, self.nugget));
            }
            if !(self.range > 0.0 && self.range.is_finite()) {
                return bad(format!("range must be > 0, got {}", self.range));
            }
        } else {
            if !(self.scale >= 0.0 && self.scale.is_finite()) {
                return bad(format!("scale must be >= 0, got {}", self.scale));
            }
            if self.family == VariogramFamily::Power && !(self.exponent > 0.0 && self.exponent < 2.0) {
                return bad(format!(
                    "power exponent must lie in (0, 2), got {}",
                    self.exponent
                ));
            }
        }
        Ok(())
    }

    /// Semivariance at separation `h` meters; exactly zero at `h == 0`.
    pub fn gamma(&self, h: f64) -> f64 {
        if h <= 0.0 {
            return 0.0;
        }
        self.nugget + self.structure(h)
    }

    /// The part above the nugget, as used by the fitter.
    fn structure(&self, h: f64) -> f64 {
        match self.family {
            VariogramFamily::Spherical => (self.sill - self.nugget) * spherical_shape(h / self.range),
            VariogramFamily::Gaussian => (self.sill - self.nugget) * gaussian_shape(h / self.range),
            VariogramFamily::Linear => self.scale * h,
            VariogramFamily::Power => self.scale * h.powf(self.exponent),
        }
    }
}

fn spherical_shape(r: f64) -> f64 {
    if r >= 1.0 {
        1.0
    } else {
        1.5 * r - 0.5 * r * r * r
    }
}

fn gaussian_shape(r: f64) -> f64 {
    1.0 - (-3.0 * r * r).exp()
}

/// One lag class of an empirical semivariogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalBin {
    /// Mean separation of the pairs in the class, meters.
    pub lag: f64,
    pub semivariance: f64,
    pub pairs: usize,
}

/// Classical (Matheron) estimator over `n_bins` equal-width lag classes
/// covering `[0, max_dist]`. `max_dist` defaults to half the largest
/// pairwise separation. Empty classes are omitted.
pub fn empirical_variogram(
    points: &[SamplePoint],
    n_bins: usize,
    max_dist: Option<f64>,
) -> Result<Vec<EmpiricalBin>> {
    if points.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "empirical variogram needs at least 2 points, got {}",
            points.len()
        )));
    }
    if n_bins == 0 {
        return Err(Error::Domain("n_bins must be at least 1".into()));
    }
    let n = points.len();
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    let mut dmax = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (&points[i], &points[j]);
            let d = distance_m(a.lat, a.lon, b.lat, b.lon);
            dmax = dmax.max(d);
            let dv = a.value - b.value;
            pairs.push((d, 0.5 * dv * dv));
        }
    }
    if dmax <= 0.0 {
        return Err(Error::InsufficientData("all points are coincident".into()));
    }
    let max_dist = max_dist.unwrap_or(0.5 * dmax);
    if !(max_dist > 0.0) {
        return Err(Error::Domain(format!(
            "max_dist must be positive, got {max_dist}"
        )));
    }
    let width = max_dist / n_bins as f64;
    let mut sum_d = vec![0.0; n_bins];
    let mut sum_g = vec![0.0; n_bins];
    let mut count = vec![0usize; n_bins];
    for (d, g) in pairs {
        if d > max_dist {
            continue;
        }
        let b = ((d / width) as usize).min(n_bins - 1);
        sum_d[b] += d;
        sum_g[b] += g;
        count[b] += 1;
    }
    Ok((0..n_bins)
        .filter(|&b| count[b] > 0)
        .map(|b| EmpiricalBin {
            lag: sum_d[b] / count[b] as f64,
            semivariance: sum_g[b] / count[b] as f64,
            pairs: count[b],
        })
        .collect())
}

/// A fitted model and its pair-weighted RMS residual against the bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariogramFit {
    pub model: VariogramModel,
    pub residual: f64,
}

/// Weighted least squares fit (weights are pair counts).
///
/// For every family the model is linear in (nugget, partial sill or
/// scale) once the shape parameter (range or exponent) is fixed, so the
/// linear pair is solved exactly under non-negativity and the shape
/// parameter is found by a log-spaced scan followed by golden-section
/// refinement.
pub fn fit_variogram(bins: &[EmpiricalBin], family: VariogramFamily) -> Result<VariogramFit> {
    if bins.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "variogram fit needs at least 3 non-empty bins, got {}",
            bins.len()
        )));
    }
    let hmax = bins.iter().fold(0.0f64, |m, b| m.max(b.lag));
    if !(hmax > 0.0) {
        return Err(Error::InsufficientData("all lags are zero".into()));
    }
    let h: Vec<f64> = bins.iter().map(|b| b.lag / hmax).collect();
    let y: Vec<f64> = bins.iter().map(|b| b.semivariance).collect();
    let w: Vec<f64> = bins.iter().map(|b| b.pairs as f64).collect();
    let wsum: f64 = w.iter().sum();

    let shape_fn = |family: VariogramFamily, p: f64| -> Vec<f64> {
        h.iter()
            .map(|&x| match family {
                VariogramFamily::Spherical => spherical_shape(x / p),
                VariogramFamily::Gaussian => gaussian_shape(x / p),
                VariogramFamily::Linear => x,
                VariogramFamily::Power => x.powf(p),
            })
            .collect()
    };
    let eval = |p: f64| -> (f64, f64, f64) {
        let g = shape_fn(family, p);
        let (n, s) = nonneg_pair(&y, &g, &w);
        let sse: f64 = (0..y.len())
            .map(|i| {
                let r = y[i] - n - s * g[i];
                w[i] * r * r
            })
            .sum();
        (sse, n, s)
    };

    let (p, sse, nugget, part) = match family {
        VariogramFamily::Linear => {
            let (sse, n, s) = eval(1.0);
            (1.0, sse, n, s)
        }
        VariogramFamily::Spherical | VariogramFamily::Gaussian => {
            minimize_scalar(&eval, 1e-3f64.ln(), 5.0f64.ln(), true)
        }
        VariogramFamily::Power => minimize_scalar(&eval, 0.01, 1.99, false),
    };

    let mut model = match family {
        VariogramFamily::Spherical => VariogramModel::spherical(nugget, nugget + part, p * hmax),
        VariogramFamily::Gaussian => VariogramModel::gaussian(nugget, nugget + part, p * hmax),
        VariogramFamily::Linear => VariogramModel::linear(nugget, part / hmax),
        VariogramFamily::Power => VariogramModel::power(nugget, part / hmax.powf(p), p),
    };
    // A flat empirical variogram fits with zero structure; keep a vanishing
    // one so the kriging system stays well posed.
    let floor = 1e-12 * (1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    if part <= floor {
        match family {
            VariogramFamily::Spherical | VariogramFamily::Gaussian => model.sill = nugget + floor,
            _ => model.scale = floor / hmax.powf(model.exponent),
        }
    }
    let residual = (sse / wsum).sqrt();
    if !residual.is_finite() || model.validate().is_err() {
        return Err(Error::FitFailed {
            best_residual: residual,
            best: Some(model),
        });
    }
    Ok(VariogramFit { model, residual })
}

/// Weighted least squares of y on (1, g) with both coefficients >= 0.
fn nonneg_pair(y: &[f64], g: &[f64], w: &[f64]) -> (f64, f64) {
    let (mut sw, mut sg, mut sgg, mut sy, mut sgy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..y.len() {
        sw += w[i];
        sg += w[i] * g[i];
        sgg += w[i] * g[i] * g[i];
        sy += w[i] * y[i];
        sgy += w[i] * g[i] * y[i];
    }
    let sse = |n: f64, s: f64| -> f64 {
        (0..y.len())
            .map(|i| {
                let r = y[i] - n - s * g[i];
                w[i] * r * r
            })
            .sum()
    };
    let det = sw * sgg - sg * sg;
    if det > 1e-14 * sw * sgg.max(f64::MIN_POSITIVE) {
        let s = (sw * sgy - sg * sy) / det;
        let n = (sy - sg * s) / sw;
        if n >= 0.0 && s >= 0.0 {
            return (n, s);
        }
    }
    let candidates = [
        (0.0, if sgg > 0.0 { (sgy / sgg).max(0.0) } else { 0.0 }),
        ((sy / sw).max(0.0), 0.0),
    ];
    candidates
        .into_iter()
        .min_by(|a, b| sse(a.0, a.1).total_cmp(&sse(b.0, b.1)))
        .unwrap()
}

/// Scan plus golden section on `[lo, hi]` (in log space when `log`).
/// Returns (parameter, sse, nugget, partial).
fn minimize_scalar(
    eval: &dyn Fn(f64) -> (f64, f64, f64),
    lo: f64,
    hi: f64,
    log: bool,
) -> (f64, f64, f64, f64) {
    let to_p = |t: f64| if log { t.exp() } else { t };
    const N: usize = 240;
    let ts: Vec<f64> = (0..=N).map(|i| lo + (hi - lo) * i as f64 / N as f64).collect();
    let vals: Vec<f64> = ts.iter().map(|&t| eval(to_p(t)).0).collect();
    let best = (0..=N).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    let mut a = ts[best.saturating_sub(1)];
    let mut b = ts[(best + 1).min(N)];
    let phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = eval(to_p(c)).0;
    let mut fd = eval(to_p(d)).0;
    for _ in 0..200 {
        if (b - a).abs() <= 1e-14 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = eval(to_p(c)).0;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = eval(to_p(d)).0;
        }
    }
    let mut t = 0.5 * (a + b);
    let mut r = eval(to_p(t));
    if vals[best] < r.0 {
        t = ts[best];
        r = eval(to_p(t));
    }
    (to_p(t), r.0, r.1, r.2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geostat::meters_per_degree;

    fn bins_from(model: &VariogramModel, lags: &[f64]) -> Vec<EmpiricalBin> {
        lags.iter()
            .map(|&lag| EmpiricalBin {
                lag,
                semivariance: model.gamma(lag),
                pairs: 50,
            })
            .collect()
    }

    #[test]
    fn family_shapes() {
        let s = VariogramModel::spherical(0.1, 1.0, 1000.0);
        assert_eq!(s.gamma(0.0), 0.0);
        assert_eq!(s.gamma(1000.0), 1.0);
        assert_eq!(s.gamma(5000.0), 1.0);
        assert!((s.gamma(1e-9) - 0.1).abs() < 1e-9);

        let g = VariogramModel::gaussian(0.0, 2.0, 1000.0);
        // flat start: slope near zero is far below the spherical one
        let eps = 1.0;
        assert!(g.gamma(eps) / eps < 1e-5);
        assert!((g.gamma(1000.0) - 2.0 * 0.950_212_931_632_136).abs() < 1e-12);

        let l = VariogramModel::linear(0.2, 0.003);
        let p = VariogramModel::power(0.2, 0.003, 1.0);
        for h in [1.0, 10.0, 777.0] {
            assert_eq!(l.gamma(h), p.gamma(h));
        }
    }

    #[test]
    fn families_are_nondecreasing() {
        let models = [
            VariogramModel::spherical(0.1, 1.0, 500.0),
            VariogramModel::gaussian(0.1, 1.0, 500.0),
            VariogramModel::linear(0.1, 0.01),
            VariogramModel::power(0.1, 0.01, 1.5),
            VariogramModel::power(0.1, 0.01, 0.3),
        ];
        for m in models {
            let mut prev = 0.0;
            for i in 0..2000 {
                let g = m.gamma(i as f64);
                assert!(g >= prev, "{:?} decreases at {i}", m.family);
                prev = g;
            }
        }
    }

    #[test]
    fn validation() {
        assert!(VariogramModel::spherical(0.5, 0.2, 10.0).validate().is_err());
        assert!(VariogramModel::spherical(0.1, 0.2, 0.0).validate().is_err());
        assert!(VariogramModel::power(0.0, 1.0, 2.0).validate().is_err());
        assert!(VariogramModel::linear(-0.1, 1.0).validate().is_err());
        assert!(VariogramModel::gaussian(0.0, 1.0, 10.0).validate().is_ok());
    }

    #[test]
    fn constant_field_has_zero_semivariance() {
        let pts: Vec<_> = (0..20)
            .map(|i| SamplePoint::new(35.0 + 0.01 * (i % 5) as f64, 51.0 + 0.013 * (i / 5) as f64, 7.0))
            .collect();
        let bins = empirical_variogram(&pts, 6, None).unwrap();
        assert!(!bins.is_empty());
        assert!(bins.iter().all(|b| b.semivariance == 0.0));
    }

    #[test]
    fn two_points_one_bin() {
        let pts = [
            SamplePoint::new(35.0, 51.0, 3.0),
            SamplePoint::new(35.01, 51.0, 7.0),
        ];
        let bins = empirical_variogram(&pts, 1, Some(5000.0)).unwrap();
        assert_eq!(bins.len(), 1);
        assert_eq!(bins[0].semivariance, 8.0);
        assert_eq!(bins[0].pairs, 1);
        assert!((bins[0].lag - 0.01 * meters_per_degree()).abs() < 1e-6);
    }

    #[test]
    fn coincident_points_are_rejected() {
        let pts = [SamplePoint::new(1.0, 1.0, 1.0), SamplePoint::new(1.0, 1.0, 2.0)];
        assert!(matches!(
            empirical_variogram(&pts, 3, None),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn recovers_noiseless_spherical() {
        let truth = VariogramModel::spherical(0.1, 1.0, 5_560.0);
        let lags: Vec<f64> = (1..=15).map(|i| i as f64 * 600.0).collect();
        let fit = fit_variogram(&bins_from(&truth, &lags), VariogramFamily::Spherical).unwrap();
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(fit.model.nugget, 0.1) < 1e-6, "{:?}", fit.model);
        assert!(rel(fit.model.sill, 1.0) < 1e-6, "{:?}", fit.model);
        assert!(rel(fit.model.range, 5_560.0) < 1e-6, "{:?}", fit.model);
        assert!(fit.residual < 1e-8);
    }

    #[test]
    fn recovers_noiseless_gaussian_and_power() {
        let lags: Vec<f64> = (1..=12).map(|i| i as f64 * 500.0).collect();
        let truth = VariogramModel::gaussian(0.05, 0.8, 3_000.0);
        let fit = fit_variogram(&bins_from(&truth, &lags), VariogramFamily::Gaussian).unwrap();
        assert!(((fit.model.range - 3_000.0) / 3_000.0).abs() < 1e-6);

        let truth = VariogramModel::power(0.2, 0.001, 1.4);
        let fit = fit_variogram(&bins_from(&truth, &lags), VariogramFamily::Power).unwrap();
        assert!((fit.model.exponent - 1.4).abs() < 1e-6, "{:?}", fit.model);
        assert!((fit.model.nugget - 0.2).abs() < 1e-6);
    }

    #[test]
    fn power_on_linear_data_has_unit_exponent() {
        let lags: Vec<f64> = (1..=10).map(|i| i as f64 * 250.0).collect();
        let truth = VariogramModel::linear(0.3, 2e-4);
        let fit = fit_variogram(&bins_from(&truth, &lags), VariogramFamily::Power).unwrap();
        assert!((fit.model.exponent - 1.0).abs() < 1e-4, "{:?}", fit.model);
    }

    #[test]
    fn spherical_beats_gaussian_on_noisy_spherical() {
        let truth = VariogramModel::spherical(0.1, 1.0, 4_000.0);
        let lags: Vec<f64> = (1..=16).map(|i| i as f64 * 400.0).collect();
        // deterministic pseudo-noise of +/- 3%
        let bins: Vec<_> = lags
            .iter()
            .enumerate()
            .map(|(i, &lag)| EmpiricalBin {
                lag,
                semivariance: truth.gamma(lag) * (1.0 + 0.03 * ((i * 7919 % 13) as f64 / 6.0 - 1.0)),
                pairs: 40 + i,
            })
            .collect();
        let sph = fit_variogram(&bins, VariogramFamily::Spherical).unwrap();
        let gau = fit_variogram(&bins, VariogramFamily::Gaussian).unwrap();
        assert!(
            sph.residual < gau.residual,
            "{} vs {}",
            sph.residual,
            gau.residual
        );
    }

    #[test]
    fn too_few_bins() {
        let bins = [EmpiricalBin {
            lag: 1.0,
            semivariance: 1.0,
            pairs: 1,
        }; 2];
        assert!(matches!(
            fit_variogram(&bins, VariogramFamily::Spherical),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn flat_bins_keep_a_positive_structure() {
        let bins: Vec<_> = (1..6)
            .map(|i| EmpiricalBin {
                lag: i as f64 * 100.0,
                semivariance: 0.0,
                pairs: 10,
            })
            .collect();
        let fit = fit_variogram(&bins, VariogramFamily::Spherical).unwrap();
        assert!(fit.model.sill > fit.model.nugget);
    }
}
