//! Synthetic scenes with a known ground truth.
//!
//! Each day has a handful of slowly varying (AR(1)) drivers plus a seasonal
//! cycle `w = cos(2 pi (doy - 200) / 365.25)`, +1 in mid July. With `x` and
//! `y` the longitude and latitude scaled to [-1, 1] over the grid:
//!
//! * meteorology is smooth in space: `t2m = 290 + 11w + 3z_t - 4y`,
//!   `blh = 900 exp(0.45w + 0.35z_b) (1 + 0.08x - 0.05y)`, a dew point
//!   depression of at least 3 K, and so on (see `Drivers::meteo`);
//! * a surface aerosol factor `s = exp(ln 0.35 - 0.15w + 0.45z_s + 0.25h + 0.15f_s)`
//!   with `h` a fixed urban hot spot and `f_s` a smooth daily field;
//! * column AOD is `s * blh / 1000`, so that `AOD / blh` tracks `s`;
//! * humidity-corrected PM2.5 is
//!
//!   ```text
//!   8 + 60s + 80 exp(-blh/500) + 40 sig((600 - blh)/18) sig((s - 0.45)/0.015)
//!     + 15 RH/100 - 8 tanh((ws10 - 3)/1.5) - 3y + 4h + 0.4(t2m - 290) + 1.5 f_r
//!   ```
//!
//!   passed through a soft floor at 1 µg/m³. `f_r` is a smooth daily
//!   residual field no predictor can see.
//!
//! Terra retrieves `tau + e_1` and Aqua `a * terra + b + e_2`, with seasonal
//! `(a, b)` and independent Gaussian errors, so regressing Aqua on Terra
//! recovers `(a, b)` without attenuation.
//! Meteorology is written on a grid `meteo_stride` times coarser than the
//! AOD grid. Station readings are the latent field at the station cell
//! plus Gaussian noise, expressed in instrument units via the cell's RH.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::grid::{read_qa, read_raster, round_sig6, write_qa, write_raster};
use super::tables::{read_stations, write_stations};
use crate::datamodel::{
    season_of, AdjacencyMask, AodQuality, CloudMask, GridSpec, QaPixel, QaRaster, Raster, Season,
    StationRecord,
};
use crate::error::{Error, Result};
use crate::preprocess::{relative_humidity, AffineMap, DayInputs, MeteoVar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    /// AOD grid; its date is the first day of the scene.
    pub grid: GridSpec,
    pub n_stations: usize,
    pub n_days: usize,
    pub seed: u64,
    /// Chance that a sensor misses a clear pixel, independently per sensor.
    pub missing_fraction: f64,
    /// Mean share of cloudy pixels per day.
    pub cloud_fraction: f64,
    /// Meteorological cell size in AOD cells.
    pub meteo_stride: usize,
    /// Standard deviation of station measurement noise, µg/m³.
    pub station_noise: f64,
    /// Standard deviation of each AOD retrieval error term.
    pub retrieval_noise: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            grid: GridSpec {
                n_rows: 24,
                n_cols: 32,
                origin_lat: 35.81,
                origin_lon: 51.19,
                cell_size: 0.01,
                date: NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(),
            },
            n_stations: 40,
            n_days: 400,
            seed: 42,
            missing_fraction: 0.15,
            cloud_fraction: 0.25,
            meteo_stride: 6,
            station_noise: 1.0,
            retrieval_noise: 0.08,
        }
    }
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let interior = self.grid.n_rows.saturating_sub(2) * self.grid.n_cols.saturating_sub(2);
        if self.n_stations < 2 || self.n_stations > interior {
            return Err(Error::Config(format!(
                "need between 2 and {interior} stations, got {}",
                self.n_stations
            )));
        }
        if self.n_days == 0 || self.meteo_stride == 0 {
            return Err(Error::Config("n_days and meteo_stride must be positive".into()));
        }
        for (name, v) in [
            ("missing_fraction", self.missing_fraction),
            ("cloud_fraction", self.cloud_fraction),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if !(self.station_noise >= 0.0 && self.retrieval_noise >= 0.0) {
            return Err(Error::Config("noise levels must be non-negative".into()));
        }
        Ok(())
    }
}

/// Terra-to-Aqua maps used by the generator, in physical AOD units.
pub const TRUE_TERRA_TO_AQUA_COLD: AffineMap = AffineMap {
    slope: 0.83,
    intercept: 0.02106,
};
pub const TRUE_TERRA_TO_AQUA_WARM: AffineMap = AffineMap {
    slope: 0.81,
    intercept: 0.01581,
};

pub fn true_terra_to_aqua(season: Season) -> AffineMap {
    match season {
        Season::Cold => TRUE_TERRA_TO_AQUA_COLD,
        Season::Warm => TRUE_TERRA_TO_AQUA_WARM,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub station_id: String,
    pub lat: f64,
    pub lon: f64,
}

/// One day of inputs plus the fields they were generated from.
#[derive(Debug, Clone)]
pub struct SceneDay {
    pub inputs: DayInputs,
    /// Latent humidity-corrected PM2.5, µg/m³.
    pub truth_pm: Raster,
    /// Noise-free merged AOD, `(tau + a tau + b) / 2`.
    pub truth_aod: Raster,
    /// Relative humidity used to express station readings, percent.
    pub truth_rh: Raster,
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub params: SyntheticParams,
    pub sites: Vec<Site>,
    pub stations: Vec<StationRecord>,
    pub days: Vec<SceneDay>,
}

/// Sum of random cosines: a stationary field with unit variance and a
/// Gaussian covariance of length `scale` degrees.
struct SmoothField {
    waves: Vec<(f64, f64, f64)>,
}

impl SmoothField {
    const WAVES: usize = 48;

    fn new(rng: &mut ChaCha8Rng, scale: f64) -> Self {
        let waves = (0..Self::WAVES)
            .map(|_| {
                let kx: f64 = rng.sample::<f64, _>(StandardNormal) / scale;
                let ky: f64 = rng.sample::<f64, _>(StandardNormal) / scale;
                (kx, ky, rng.random_range(0.0..2.0 * PI))
            })
            .collect();
        SmoothField { waves }
    }

    fn at(&self, lat: f64, lon: f64) -> f64 {
        let s: f64 = self
            .waves
            .iter()
            .map(|(kx, ky, p)| (kx * lon + ky * lat + p).cos())
            .sum();
        s * (2.0 / Self::WAVES as f64).sqrt()
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Scaled coordinates, [-1, 1] across the AOD grid.
#[derive(Clone, Copy)]
struct Frame {
    lat_c: f64,
    lon_c: f64,
    half_lat: f64,
    half_lon: f64,
}

impl Frame {
    fn new(g: &GridSpec) -> Self {
        let half_lat = ((g.n_rows - 1) as f64 * g.cell_size / 2.0).max(g.cell_size);
        let half_lon = ((g.n_cols - 1) as f64 * g.cell_size / 2.0).max(g.cell_size);
        Frame {
            lat_c: g.origin_lat - (g.n_rows - 1) as f64 * g.cell_size / 2.0,
            lon_c: g.origin_lon + (g.n_cols - 1) as f64 * g.cell_size / 2.0,
            half_lat,
            half_lon,
        }
    }

    fn xy(&self, lat: f64, lon: f64) -> (f64, f64) {
        (
            (lon - self.lon_c) / self.half_lon,
            (lat - self.lat_c) / self.half_lat,
        )
    }
}

fn hot_spot(x: f64, y: f64) -> f64 {
    2.0 * (-((x - 0.2).powi(2) + (y + 0.1).powi(2)) / 0.3).exp() - 0.5
}

/// The day's large-scale state.
struct Drivers {
    w: f64,
    z_blh: f64,
    z_s: f64,
    z_t: f64,
    z_dew: f64,
    z_u: f64,
    z_v: f64,
    z_sp: f64,
    z_lai: f64,
    cloudiness: f64,
}

struct Met {
    d2m: f64,
    t2m: f64,
    blh: f64,
    sp: f64,
    lai_hv: f64,
    u10: f64,
    v10: f64,
    cdir: f64,
    uvb: f64,
}

impl Drivers {
    fn meteo(&self, x: f64, y: f64) -> Met {
        let w = self.w;
        let t2m = 290.0 + 11.0 * w + 3.0 * self.z_t - 4.0 * y + 0.8 * (PI * x).sin();
        let depression = 3.0 + softplus(6.0 + 5.0 * w + 3.0 * self.z_dew + x);
        Met {
            d2m: t2m - depression,
            t2m,
            blh: 900.0 * (0.45 * w + 0.35 * self.z_blh).exp() * (1.0 + 0.08 * x - 0.05 * y),
            sp: 86_500.0 - 900.0 * y - 100.0 * x - 120.0 * w + 150.0 * self.z_sp,
            lai_hv: 1.0 + 0.5 * w + 0.3 * x + 0.1 * y,
            u10: 1.5 + 2.0 * self.z_u + 0.5 * x,
            v10: -0.5 + 2.0 * self.z_v + 0.5 * y,
            cdir: 250.0 + 90.0 * w - 80.0 * self.cloudiness + 10.0 * y,
            uvb: 15.0 + 9.0 * w - 4.0 * self.cloudiness + 0.5 * x,
        }
    }
}

/// Latent humidity-corrected PM2.5 from the scene's documented formula.
fn latent_pm(s: f64, m: &Met, x: f64, y: f64, residual: f64) -> f64 {
    let rh = relative_humidity(m.d2m, m.t2m);
    let ws = m.u10.hypot(m.v10);
    let raw = 8.0
        + 60.0 * s
        + 80.0 * (-m.blh / 500.0).exp()
        + 40.0 * sigmoid((600.0 - m.blh) / 18.0) * sigmoid((s - 0.45) / 0.015)
        + 15.0 * rh / 100.0
        - 8.0 * ((ws - 3.0) / 1.5).tanh()
        - 3.0 * y
        + 4.0 * hot_spot(x, y)
        + 0.4 * (m.t2m - 290.0)
        + 1.5 * residual;
    1.0 + softplus(raw - 1.0)
}

/// The coarse grid carrying meteorology, centered on the AOD grid and
/// extending one coarse cell beyond it on every side.
pub fn meteo_grid(grid: &GridSpec, stride: usize) -> GridSpec {
    let cell = grid.cell_size * stride as f64;
    let rows = ((grid.n_rows - 1) as f64 * grid.cell_size / cell).ceil() as usize + 2;
    let cols = ((grid.n_cols - 1) as f64 * grid.cell_size / cell).ceil() as usize + 2;
    let f = Frame::new(grid);
    GridSpec {
        n_rows: rows,
        n_cols: cols,
        origin_lat: round_sig6(f.lat_c + (rows - 1) as f64 * cell / 2.0),
        origin_lon: round_sig6(f.lon_c - (cols - 1) as f64 * cell / 2.0),
        cell_size: round_sig6(cell),
        date: grid.date,
    }
}

fn place_stations(grid: &GridSpec, n: usize, rng: &mut ChaCha8Rng) -> Vec<Site> {
    let mut interior: Vec<(usize, usize)> = (1..grid.n_rows - 1)
        .flat_map(|r| (1..grid.n_cols - 1).map(move |c| (r, c)))
        .collect();
    interior.shuffle(rng);
    interior
        .into_iter()
        .take(n)
        .enumerate()
        .map(|(k, (r, c))| {
            let (lat, lon) = grid.center_of(r, c);
            Site {
                station_id: format!("S{:02}", k + 1),
                lat: round_sig6(lat + rng.random_range(-0.4..0.4) * grid.cell_size),
                lon: round_sig6(lon + rng.random_range(-0.4..0.4) * grid.cell_size),
            }
        })
        .collect()
}

struct Ar1 {
    state: f64,
    rho: f64,
}

impl Ar1 {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        Ar1 {
            state: normal(rng),
            rho: 0.7,
        }
    }

    fn step(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        let v = self.state;
        self.state = self.rho * self.state + (1.0 - self.rho * self.rho).sqrt() * normal(rng);
        v
    }
}

/// Deterministic in `params`: the same parameters give the same scene.
pub fn generate_synthetic_scene(params: &SyntheticParams) -> Result<SyntheticScene> {
    params.validate()?;
    let grid = params.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let sites = place_stations(&grid, params.n_stations, &mut rng);
    let site_cells: Vec<(usize, usize)> = sites
        .iter()
        .map(|s| {
            grid.cell_of(s.lat, s.lon)
                .inside()
                .expect("sites lie inside the grid")
        })
        .collect();
    let frame = Frame::new(&grid);
    let mgrid = meteo_grid(&grid, params.meteo_stride);
    let extent = grid.cell_size * grid.n_rows.max(grid.n_cols) as f64;

    let mut ar: Vec<Ar1> = (0..8).map(|_| Ar1::new(&mut rng)).collect();
    let mut days = Vec::with_capacity(params.n_days);
    let mut stations = Vec::with_capacity(params.n_days * sites.len());
    let sigma = params.retrieval_noise;

    for d in 0..params.n_days {
        let date = grid.date + Duration::days(d as i64);
        let spec = grid.with_date(date);
        let doy = date.ordinal() as f64;
        let mut z = [0.0; 8];
        for (k, a) in ar.iter_mut().enumerate() {
            z[k] = a.step(&mut rng);
        }
        let cloud_share = (params.cloud_fraction * (0.8 * z[7] - 0.32).exp()).min(1.0);
        let drivers = Drivers {
            w: (2.0 * PI * (doy - 200.0) / 365.25).cos(),
            z_blh: z[0],
            z_s: z[1],
            z_t: z[2],
            z_dew: z[3],
            z_u: z[4],
            z_v: z[5],
            z_sp: z[6],
            z_lai: normal(&mut rng),
            cloudiness: cloud_share,
        };
        let f_s = SmoothField::new(&mut rng, 0.25 * extent);
        let f_r = SmoothField::new(&mut rng, 0.2 * extent);
        let f_c = SmoothField::new(&mut rng, 0.15 * extent);

        // coarse meteorology
        let mspec = mgrid.with_date(date);
        let mut met_values: BTreeMap<MeteoVar, Vec<f64>> = MeteoVar::ALL
            .iter()
            .map(|&v| (v, Vec::with_capacity(mspec.len())))
            .collect();
        for (lat, lon) in mspec.centers() {
            let (x, y) = frame.xy(lat, lon);
            let m = drivers.meteo(x, y);
            let lai_lv = (0.8 + 0.1 * drivers.z_lai + 0.15 * normal(&mut rng)).max(0.05);
            for (v, value) in [
                (MeteoVar::D2m, m.d2m),
                (MeteoVar::T2m, m.t2m),
                (MeteoVar::Blh, m.blh),
                (MeteoVar::Sp, m.sp),
                (MeteoVar::LaiHv, m.lai_hv),
                (MeteoVar::LaiLv, lai_lv),
                (MeteoVar::U10, m.u10),
                (MeteoVar::V10, m.v10),
                (MeteoVar::Cdir, m.cdir),
                (MeteoVar::Uvb, m.uvb),
            ] {
                met_values.get_mut(&v).unwrap().push(round_sig6(value));
            }
        }
        let meteo = met_values
            .into_iter()
            .map(|(v, vals)| Ok((v, Raster::new(mspec, v.name(), vals)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;

        // fine-grid truth
        let centers = spec.centers();
        let n = spec.len();
        let map = true_terra_to_aqua(season_of(date));
        let mut pm = Vec::with_capacity(n);
        let mut rh = Vec::with_capacity(n);
        let mut tau = Vec::with_capacity(n);
        let mut cloud_score = Vec::with_capacity(n);
        for &(lat, lon) in &centers {
            let (x, y) = frame.xy(lat, lon);
            let m = drivers.meteo(x, y);
            let s = ((0.35f64).ln() - 0.15 * drivers.w
                + 0.45 * drivers.z_s
                + 0.25 * hot_spot(x, y)
                + 0.15 * f_s.at(lat, lon))
            .exp();
            pm.push(round_sig6(latent_pm(s, &m, x, y, f_r.at(lat, lon))));
            rh.push(round_sig6(relative_humidity(m.d2m, m.t2m)));
            tau.push(s * m.blh / 1000.0);
            cloud_score.push(f_c.at(lat, lon));
        }

        // cloud mask: the highest-scoring share of pixels is cloudy
        let n_cloudy = (cloud_share * n as f64).round() as usize;
        let threshold = if n_cloudy == 0 {
            f64::INFINITY
        } else {
            let mut sorted = cloud_score.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            sorted[n_cloudy - 1]
        };
        let cloudy: Vec<bool> = cloud_score.iter().map(|&c| c >= threshold).collect();

        let mut terra = Vec::with_capacity(n);
        let mut aqua = Vec::with_capacity(n);
        let mut truth_aod = Vec::with_capacity(n);
        let mut qa = Vec::with_capacity(n);
        for i in 0..n {
            let (r, c) = spec.row_col(i);
            let e_1 = sigma * normal(&mut rng);
            let e_2 = sigma * normal(&mut rng);
            let u_terra: f64 = rng.random();
            let u_aqua: f64 = rng.random();
            let u_quality: f64 = rng.random();
            truth_aod.push(round_sig6(0.5 * (tau[i] + map.apply(tau[i]))));
            if cloudy[i] {
                terra.push(f64::NAN);
                aqua.push(f64::NAN);
                qa.push(QaPixel {
                    cloud: CloudMask::Cloudy,
                    adjacency: AdjacencyMask::NormalClear,
                    quality: AodQuality::Missing,
                });
                continue;
            }
            let near_cloud = (r.saturating_sub(1)..=(r + 1).min(spec.n_rows - 1)).any(|rr| {
                (c.saturating_sub(1)..=(c + 1).min(spec.n_cols - 1)).any(|cc| cloudy[spec.index(rr, cc)])
            });
            let possibly = threshold.is_finite() && cloud_score[i] > threshold - 0.15;
            qa.push(QaPixel {
                cloud: if possibly {
                    CloudMask::PossiblyCloudy
                } else {
                    CloudMask::Clear
                },
                adjacency: if near_cloud {
                    AdjacencyMask::Adjacent
                } else {
                    AdjacencyMask::NormalClear
                },
                quality: if u_quality < 0.8 {
                    AodQuality::Best
                } else if u_quality < 0.95 {
                    AodQuality::Medium
                } else {
                    AodQuality::Low
                },
            });
            let t = tau[i] + e_1;
            terra.push(if u_terra < params.missing_fraction {
                f64::NAN
            } else {
                round_sig6(t)
            });
            aqua.push(if u_aqua < params.missing_fraction {
                f64::NAN
            } else {
                round_sig6(map.apply(t) + e_2)
            });
        }

        for (site, &(r, c)) in sites.iter().zip(&site_cells) {
            let i = spec.index(r, c);
            let noise = params.station_noise * normal(&mut rng);
            let lost: f64 = rng.random();
            let pm25 = (lost >= 0.03).then(|| {
                let corrected = (pm[i] + noise).max(0.5);
                round_sig6(corrected * (1.0 - rh[i] / 100.0))
            });
            stations.push(StationRecord {
                station_id: site.station_id.clone(),
                lat: site.lat,
                lon: site.lon,
                date,
                pm25,
            });
        }

        days.push(SceneDay {
            inputs: DayInputs {
                date,
                aqua: Some(Raster::new(spec, "aqua", aqua)?),
                terra: Some(Raster::new(spec, "terra", terra)?),
                qa: Some(QaRaster::new(spec, qa)?),
                meteo,
            },
            truth_pm: Raster::new(spec, "pm25_truth", pm)?,
            truth_aod: Raster::new(spec, "aod_truth", truth_aod)?,
            truth_rh: Raster::new(spec, "rh_truth", rh)?,
        });
    }
    Ok(SyntheticScene {
        params: *params,
        sites,
        stations,
        days,
    })
}

/// Scene description stored next to the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub params: SyntheticParams,
    pub sites: Vec<Site>,
    pub terra_to_aqua_cold: AffineMap,
    pub terra_to_aqua_warm: AffineMap,
}

fn day_dir(root: &Path, kind: &str, date: NaiveDate) -> PathBuf {
    root.join(kind).join(date.format("%Y-%m-%d").to_string())
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Writes the scene as a data directory:
///
/// ```text
/// stations.csv
/// scene.json
/// days/YYYY-MM-DD/{aqua,terra,qa,d2m,t2m,...}.grid
/// truth/YYYY-MM-DD/{pm25,aod,rh}.grid
/// ```
///
/// Returns the written files in write order.
pub fn write_scene(scene: &SyntheticScene, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    let mut written = Vec::new();
    let p = dir.join("stations.csv");
    write_stations(&scene.stations, &p)?;
    written.push(p);
    let meta = SceneMeta {
        params: scene.params,
        sites: scene.sites.clone(),
        terra_to_aqua_cold: TRUE_TERRA_TO_AQUA_COLD,
        terra_to_aqua_warm: TRUE_TERRA_TO_AQUA_WARM,
    };
    let p = dir.join("scene.json");
    super::write_atomic(&p, (serde_json::to_string_pretty(&meta)? + "\n").as_bytes())?;
    written.push(p);
    for day in &scene.days {
        let dd = day_dir(dir, "days", day.inputs.date);
        create_dir(&dd)?;
        for (name, r) in [("aqua", &day.inputs.aqua), ("terra", &day.inputs.terra)] {
            if let Some(r) = r {
                let p = dd.join(format!("{name}.grid"));
                write_raster(r, &p)?;
                written.push(p);
            }
        }
        if let Some(qa) = &day.inputs.qa {
            let p = dd.join("qa.grid");
            write_qa(qa, &p)?;
            written.push(p);
        }
        for (v, r) in &day.inputs.meteo {
            let p = dd.join(format!("{}.grid", v.name()));
            write_raster(r, &p)?;
            written.push(p);
        }
        let td = day_dir(dir, "truth", day.inputs.date);
        create_dir(&td)?;
        for (name, r) in [
            ("pm25", &day.truth_pm),
            ("aod", &day.truth_aod),
            ("rh", &day.truth_rh),
        ] {
            let p = td.join(format!("{name}.grid"));
            write_raster(r, &p)?;
            written.push(p);
        }
    }
    Ok(written)
}

pub fn read_scene_meta(dir: impl AsRef<Path>) -> Result<SceneMeta> {
    let p = dir.as_ref().join("scene.json");
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Dates with a `days/YYYY-MM-DD` directory, ascending.
pub fn list_days(dir: impl AsRef<Path>) -> Result<Vec<NaiveDate>> {
    let root = dir.as_ref().join("days");
    let entries = std::fs::read_dir(&root).map_err(|e| Error::io(&root, e))?;
    let mut dates = Vec::new();
    for e in entries {
        let e = e.map_err(|e| Error::io(&root, e))?;
        let name = e.file_name().to_string_lossy().into_owned();
        match name.parse::<NaiveDate>() {
            Ok(d) => dates.push(d),
            Err(_) => {
                return Err(Error::Config(format!(
                    "unexpected entry `{name}` in {}; day directories are named YYYY-MM-DD",
                    root.display()
                )))
            }
        }
    }
    dates.sort();
    Ok(dates)
}

/// Reads one day's inputs. Absent files become `None` or are left out of
/// the meteorology map.
pub fn load_day(dir: impl AsRef<Path>, date: NaiveDate) -> Result<DayInputs> {
    let dd = day_dir(dir.as_ref(), "days", date);
    let optional = |name: &str| {
        let p = dd.join(name);
        p.exists().then_some(p)
    };
    let aqua = optional("aqua.grid").map(read_raster).transpose()?;
    let terra = optional("terra.grid").map(read_raster).transpose()?;
    let qa = optional("qa.grid").map(read_qa).transpose()?;
    let mut meteo = BTreeMap::new();
    for v in MeteoVar::ALL {
        if let Some(p) = optional(&format!("{}.grid", v.name())) {
            meteo.insert(v, read_raster(p)?);
        }
    }
    Ok(DayInputs {
        date,
        aqua,
        terra,
        qa,
        meteo,
    })
}

pub fn load_days(dir: impl AsRef<Path>) -> Result<Vec<DayInputs>> {
    let dir = dir.as_ref();
    list_days(dir)?.into_iter().map(|d| load_day(dir, d)).collect()
}

pub fn load_stations(dir: impl AsRef<Path>) -> Result<Vec<StationRecord>> {
    read_stations(dir.as_ref().join("stations.csv"))
}

/// Latent PM2.5 and noise-free merged AOD for one date.
pub fn load_truth(dir: impl AsRef<Path>, date: NaiveDate) -> Result<(Raster, Raster)> {
    let td = day_dir(dir.as_ref(), "truth", date);
    Ok((
        read_raster(td.join("pm25.grid"))?,
        read_raster(td.join("aod.grid"))?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::grid::{format_raster, parse_raster};

    fn small(seed: u64) -> SyntheticParams {
        SyntheticParams {
            grid: GridSpec {
                n_rows: 12,
                n_cols: 14,
                ..SyntheticParams::default().grid
            },
            n_stations: 6,
            n_days: 30,
            seed,
            ..Default::default()
        }
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn same_seed_same_scene() {
        let a = generate_synthetic_scene(&small(3)).unwrap();
        let b = generate_synthetic_scene(&small(3)).unwrap();
        assert_eq!(a.stations, b.stations);
        for (x, y) in a.days.iter().zip(&b.days) {
            assert_eq!(format_raster(&x.truth_pm), format_raster(&y.truth_pm));
            assert_eq!(
                format_raster(x.inputs.aqua.as_ref().unwrap()),
                format_raster(y.inputs.aqua.as_ref().unwrap())
            );
        }
        let c = generate_synthetic_scene(&small(4)).unwrap();
        assert_ne!(a.stations, c.stations);
    }

    #[test]
    fn no_gaps_without_missingness_or_clouds() {
        let p = SyntheticParams {
            missing_fraction: 0.0,
            cloud_fraction: 0.0,
            ..small(1)
        };
        let s = generate_synthetic_scene(&p).unwrap();
        for d in &s.days {
            assert_eq!(d.inputs.aqua.as_ref().unwrap().missing_count(), 0);
            assert_eq!(d.inputs.terra.as_ref().unwrap().missing_count(), 0);
        }
    }

    #[test]
    fn sensors_correlate_within_band() {
        let s = generate_synthetic_scene(&small(42)).unwrap();
        let (mut a, mut t) = (Vec::new(), Vec::new());
        for d in &s.days {
            let (ra, rt) = (d.inputs.aqua.as_ref().unwrap(), d.inputs.terra.as_ref().unwrap());
            for (x, y) in ra.values().iter().zip(rt.values()) {
                if x.is_finite() && y.is_finite() {
                    a.push(*x);
                    t.push(*y);
                }
            }
        }
        let r = pearson(&a, &t);
        assert!((0.6..=0.95).contains(&r), "correlation {r}");
    }

    #[test]
    fn readings_are_latent_plus_noise() {
        let p = SyntheticParams {
            station_noise: 2.0,
            n_days: 120,
            ..small(9)
        };
        let s = generate_synthetic_scene(&p).unwrap();
        let mut resid = Vec::new();
        for (k, rec) in s.stations.iter().enumerate() {
            let day = &s.days[k / s.sites.len()];
            assert_eq!(day.inputs.date, rec.date);
            assert!(day.truth_pm.values().iter().all(|&v| v > 0.0));
            let Some(pm) = rec.pm25 else { continue };
            let (r, c) = p.grid.cell_of(rec.lat, rec.lon).inside().unwrap();
            let rh = day.truth_rh.get(r, c).unwrap();
            resid.push(pm / (1.0 - rh / 100.0) - day.truth_pm.get(r, c).unwrap());
        }
        let n = resid.len() as f64;
        let mean = resid.iter().sum::<f64>() / n;
        let sd = (resid.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 0.3, "mean {mean}");
        assert!((sd - 2.0).abs() < 0.2, "sd {sd}");
    }

    #[test]
    fn stored_values_are_canonical() {
        let s = generate_synthetic_scene(&small(5)).unwrap();
        let d = &s.days[0];
        for r in [
            d.inputs.aqua.as_ref().unwrap(),
            &d.truth_pm,
            &d.inputs.meteo[&MeteoVar::Sp],
        ] {
            let back = parse_raster(&format_raster(r), Path::new("mem")).unwrap();
            assert_eq!(format!("{:?}", back.values()), format!("{:?}", r.values()));
        }
    }

    #[test]
    fn scene_directory_round_trip() {
        let s = generate_synthetic_scene(&small(2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_scene(&s, dir.path()).unwrap();
        assert_eq!(load_stations(dir.path()).unwrap(), s.stations);
        let days = load_days(dir.path()).unwrap();
        assert_eq!(days.len(), s.days.len());
        let d0 = &days[3];
        assert_eq!(d0.qa, s.days[3].inputs.qa);
        assert_eq!(
            format!("{:?}", d0.terra.as_ref().unwrap().values()),
            format!("{:?}", s.days[3].inputs.terra.as_ref().unwrap().values())
        );
        assert_eq!(d0.meteo.len(), MeteoVar::ALL.len());
        let meta = read_scene_meta(dir.path()).unwrap();
        assert_eq!(meta.sites, s.sites);
        let (pm, _) = load_truth(dir.path(), d0.date).unwrap();
        assert_eq!(pm.values().len(), s.params.grid.len());
    }
}
