use serde::{Deserialize, Serialize};

use super::{dedup_locations, distance_m, LocalFrame, SamplePoint, VariogramModel};
use crate::error::{Error, Result};
use crate::linalg::{Lu, Matrix};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KrigingKind {
    /// Unknown constant mean; weights sum to one.
    Ordinary,
    /// Mean is a first-order polynomial in the local east/north coordinates.
    Universal,
}

impl KrigingKind {
    pub const ALL: [KrigingKind; 2] = [KrigingKind::Ordinary, KrigingKind::Universal];

    pub fn name(self) -> &'static str {
        match self {
            KrigingKind::Ordinary => "ordinary",
            KrigingKind::Universal => "universal",
        }
    }

    fn n_drift(self) -> usize {
        match self {
            KrigingKind::Ordinary => 1,
            KrigingKind::Universal => 3,
        }
    }
}

impl std::str::FromStr for KrigingKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        KrigingKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown kriging kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrigingConfig {
    pub kind: KrigingKind,
    pub variogram: VariogramModel,
    /// Nearest samples used per target; `None` uses every sample.
    #[serde(default)]
    pub max_neighbors: Option<usize>,
}

impl KrigingConfig {
    pub fn new(kind: KrigingKind, variogram: VariogramModel) -> Self {
        KrigingConfig {
            kind,
            variogram,
            max_neighbors: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrigingResult {
    pub value: f64,
    pub variance: f64,
}

/// Sample weights and Lagrange multipliers for one target. Indices refer
/// to the de-duplicated sample list held by the [`Kriger`].
#[derive(Debug, Clone, PartialEq)]
pub struct KrigingWeights {
    pub samples: Vec<usize>,
    pub weights: Vec<f64>,
    pub multipliers: Vec<f64>,
}

/// A kriging system bound to one sample set. With a global neighborhood
/// the system is factorized once and shared across targets.
#[derive(Debug, Clone)]
pub struct Kriger {
    config: KrigingConfig,
    points: Vec<SamplePoint>,
    frame: LocalFrame,
    global: Option<System>,
}

#[derive(Debug, Clone)]
struct System {
    members: Vec<usize>,
    lu: Lu,
    /// Variogram entries are divided by this before solving; weights are
    /// invariant to it and the multipliers/variance are scaled back.
    gamma_scale: f64,
}

impl Kriger {
    pub fn new(config: KrigingConfig, samples: &[SamplePoint]) -> Result<Self> {
        config.variogram.validate()?;
        if let Some(bad) = samples
            .iter()
            .find(|p| !(p.lat.is_finite() && p.lon.is_finite() && p.value.is_finite()))
        {
            return Err(Error::Domain(format!("non-finite kriging sample {bad:?}")));
        }
        let points = dedup_locations(samples);
        let min_points = config.kind.n_drift().max(2);
        if points.len() < min_points {
            return Err(Error::InsufficientData(format!(
                "{} kriging needs at least {min_points} distinct locations, got {}",
                config.kind.name(),
                points.len()
            )));
        }
        let frame = LocalFrame::centered_on(&points);
        let mut kriger = Kriger {
            config,
            points,
            frame,
            global: None,
        };
        let neighbors = config.max_neighbors.unwrap_or(usize::MAX);
        if neighbors >= kriger.points.len() {
            let members: Vec<usize> = (0..kriger.points.len()).collect();
            kriger.global = Some(kriger.build(members)?);
        } else if neighbors < min_points {
            return Err(Error::Config(format!(
                "max_neighbors {neighbors} is below the {min_points} points the system needs"
            )));
        }
        Ok(kriger)
    }

    pub fn config(&self) -> &KrigingConfig {
        &self.config
    }

    /// The de-duplicated samples the system is built on.
    pub fn points(&self) -> &[SamplePoint] {
        &self.points
    }

    fn drift(&self, lat: f64, lon: f64) -> [f64; 3] {
        let (x, y) = self.frame.project(lat, lon);
        [1.0, x, y]
    }

    fn build(&self, members: Vec<usize>) -> Result<System> {
        let n = members.len();
        let m = self.config.kind.n_drift();
        let vg = &self.config.variogram;
        let mut gam = vec![0.0; n * n];
        let mut gamma_scale = 0.0f64;
        for a in 0..n {
            for b in (a + 1)..n {
                let (p, q) = (&self.points[members[a]], &self.points[members[b]]);
                let g = vg.gamma(distance_m(p.lat, p.lon, q.lat, q.lon));
                gam[a * n + b] = g;
                gam[b * n + a] = g;
                gamma_scale = gamma_scale.max(g);
            }
        }
        if !(gamma_scale > 0.0) {
            return Err(Error::Singular(
                "variogram is zero at every sample separation".into(),
            ));
        }
        let size = n + m;
        let mut a = Matrix::zeros(size);
        for i in 0..n {
            for j in 0..n {
                a.set(i, j, gam[i * n + j] / gamma_scale);
            }
            let p = &self.points[members[i]];
            let f = self.drift(p.lat, p.lon);
            for k in 0..m {
                a.set(i, n + k, f[k]);
                a.set(n + k, i, f[k]);
            }
        }
        let lu = Lu::factorize(&a, 1e-12).map_err(|e| match self.config.kind {
            KrigingKind::Universal => Error::Singular(format!(
                "universal kriging system is degenerate (collinear or too few sample locations): {e}"
            )),
            KrigingKind::Ordinary => e,
        })?;
        Ok(System {
            members,
            lu,
            gamma_scale,
        })
    }

    fn local_system(&self, lat: f64, lon: f64) -> Result<System> {
        let k = self
            .config
            .max_neighbors
            .unwrap_or(usize::MAX)
            .min(self.points.len());
        let mut order: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (distance_m(lat, lon, p.lat, p.lon), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut members: Vec<usize> = order[..k].iter().map(|&(_, i)| i).collect();
        members.sort_unstable();
        self.build(members)
    }

    fn solve_with(&self, sys: &System, lat: f64, lon: f64) -> (KrigingWeights, KrigingResult) {
        let n = sys.members.len();
        let m = self.config.kind.n_drift();
        let vg = &self.config.variogram;
        let mut rhs = Vec::with_capacity(n + m);
        for &i in &sys.members {
            let p = &self.points[i];
            rhs.push(vg.gamma(distance_m(lat, lon, p.lat, p.lon)) / sys.gamma_scale);
        }
        let f = self.drift(lat, lon);
        rhs.extend_from_slice(&f[..m]);
        let x = sys.lu.solve(&rhs);
        let weights = x[..n].to_vec();
        let multipliers: Vec<f64> = x[n..].iter().map(|v| v * sys.gamma_scale).collect();
        let value = sys
            .members
            .iter()
            .zip(&weights)
            .map(|(&i, w)| w * self.points[i].value)
            .sum();
        let variance = sys.gamma_scale
            * (weights.iter().zip(&rhs[..n]).map(|(w, g)| w * g).sum::<f64>()
                + x[n..].iter().zip(&f[..m]).map(|(mu, fk)| mu * fk).sum::<f64>());
        (
            KrigingWeights {
                samples: sys.members.clone(),
                weights,
                multipliers,
            },
            KrigingResult { value, variance },
        )
    }

    pub fn weights(&self, lat: f64, lon: f64) -> Result<KrigingWeights> {
        Ok(self.solve(lat, lon)?.0)
    }

    pub fn predict(&self, lat: f64, lon: f64) -> Result<KrigingResult> {
        Ok(self.solve(lat, lon)?.1)
    }

    fn solve(&self, lat: f64, lon: f64) -> Result<(KrigingWeights, KrigingResult)> {
        let (w, mut r) = match &self.global {
            Some(sys) => self.solve_with(sys, lat, lon),
            None => {
                let sys = self.local_system(lat, lon)?;
                self.solve_with(&sys, lat, lon)
            }
        };
        let tol = 1e-9 * self.variance_scale();
        if r.variance < 0.0 {
            if r.variance < -tol {
                return Err(Error::Singular(format!(
                    "negative kriging variance {:.3e} at ({lat}, {lon})",
                    r.variance
                )));
            }
            r.variance = 0.0;
        }
        Ok((w, r))
    }

    fn variance_scale(&self) -> f64 {
        match &self.global {
            Some(sys) => sys.gamma_scale.max(1.0),
            None => self
                .config
                .variogram
                .sill
                .max(self.config.variogram.nugget)
                .max(1.0),
        }
    }

    /// Predictions for many targets, in order.
    pub fn predict_many(&self, targets: &[(f64, f64)]) -> Result<Vec<KrigingResult>> {
        par::map_range(targets.len(), |i| self.predict(targets[i].0, targets[i].1))
            .into_iter()
            .collect()
    }
}

/// Kriges `samples` onto every target. Samples sharing coordinates are
/// averaged first.
pub fn krige(
    config: &KrigingConfig,
    samples: &[SamplePoint],
    targets: &[(f64, f64)],
) -> Result<Vec<KrigingResult>> {
    Kriger::new(*config, samples)?.predict_many(targets)
}
