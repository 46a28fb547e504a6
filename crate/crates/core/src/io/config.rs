use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::synth::SyntheticParams;
use crate::datamodel::{Feature, GridSpec};
use crate::error::{Error, Result};
use crate::geostat::{KrigingKind, VariogramFamily};
use crate::models::{ForestParams, GbtParams, ModelKind, ModelSpec};
use crate::preprocess::{MergeMode, MeteoField, OutlierMethod, PreprocessConfig, WindowCriteria};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    Random,
    /// Earliest dates train, latest dates test.
    Temporal,
}

/// Every knob of the pipeline in one flat document. Missing keys take the
/// defaults below; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,

    pub window_size: usize,
    pub std_threshold: f64,
    pub min_valid_pixels: usize,
    pub outlier_method: OutlierMethod,
    pub merge_mode: MergeMode,
    /// `"kind/family"` per meteorological feature, e.g. `"universal/spherical"`.
    pub meteo_kriging: BTreeMap<String, String>,
    /// Pick each meteorological feature's kriging setup by cross-validation
    /// on the first complete day instead of using `meteo_kriging`.
    pub meteo_grid_search: bool,

    pub split_fraction: f64,
    pub split_mode: SplitMode,
    pub cv_folds: usize,
    pub model: ModelKind,
    pub lambda: f64,
    pub univariate_feature: Feature,

    pub rf_n_estimators: usize,
    pub rf_max_depth: usize,
    pub rf_max_features: f64,
    pub rf_min_samples_leaf: usize,
    pub et_n_estimators: usize,
    pub et_max_depth: usize,
    pub et_max_features: f64,
    pub et_min_samples_leaf: usize,
    pub gb_n_estimators: usize,
    pub gb_learning_rate: f64,
    pub gb_max_depth: usize,
    pub gb_max_features: f64,
    pub gb_min_child_weight: f64,
    pub gb_gamma: f64,
    pub gb_reg_lambda: f64,
    pub gb_early_stopping_rounds: Option<usize>,
    pub gb_validation_fraction: f64,

    /// `"kind/family"` for interpolating PM2.5 onto the map grid.
    pub pm_kriging: String,
    pub pm_kriging_max_neighbors: Option<usize>,
    /// Re-express maps in instrument (uncorrected) units.
    pub uncorrected_maps: bool,
    /// Upper edges of the AQI bands, ascending; one more label than edges.
    pub aqi_breakpoints: Vec<f64>,
    pub aqi_labels: Vec<String>,

    pub synth_rows: usize,
    pub synth_cols: usize,
    pub synth_origin_lat: f64,
    pub synth_origin_lon: f64,
    pub synth_cell_size: f64,
    pub synth_start_date: NaiveDate,
    pub synth_stations: usize,
    pub synth_days: usize,
    pub synth_missing_fraction: f64,
    pub synth_cloud_fraction: f64,
    pub synth_meteo_stride: usize,
    pub synth_station_noise: f64,
    pub synth_retrieval_noise: f64,

    /// Worker threads; `None` lets the runtime decide.
    pub threads: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let rf = ForestParams::random_forest();
        let et = ForestParams::extra_trees();
        let gb = GbtParams::default();
        let sp = SyntheticParams::default();
        PipelineConfig {
            seed: 42,
            window_size: 3,
            std_threshold: 0.5,
            min_valid_pixels: 3,
            outlier_method: OutlierMethod::Iqr,
            merge_mode: MergeMode::Seasonal,
            meteo_kriging: MeteoField::ALL
                .iter()
                .map(|f| {
                    let (k, v) = f.default_kriging();
                    (f.name().to_string(), format!("{}/{}", k.name(), v.name()))
                })
                .collect(),
            meteo_grid_search: false,
            split_fraction: 0.7,
            split_mode: SplitMode::Random,
            cv_folds: 5,
            model: ModelKind::GradientBoosting,
            lambda: 0.1,
            univariate_feature: Feature::NAodM,
            rf_n_estimators: rf.n_estimators,
            rf_max_depth: rf.max_depth,
            rf_max_features: rf.max_features,
            rf_min_samples_leaf: rf.min_samples_leaf,
            et_n_estimators: et.n_estimators,
            et_max_depth: et.max_depth,
            et_max_features: et.max_features,
            et_min_samples_leaf: et.min_samples_leaf,
            gb_n_estimators: gb.n_estimators,
            gb_learning_rate: gb.learning_rate,
            gb_max_depth: gb.max_depth,
            gb_max_features: gb.max_features,
            gb_min_child_weight: gb.min_child_weight,
            gb_gamma: gb.gamma,
            gb_reg_lambda: gb.reg_lambda,
            gb_early_stopping_rounds: gb.early_stopping_rounds,
            gb_validation_fraction: gb.validation_fraction,
            pm_kriging: "ordinary/spherical".into(),
            pm_kriging_max_neighbors: None,
            uncorrected_maps: false,
            aqi_breakpoints: vec![12.0, 35.4, 55.4, 150.4, 250.4],
            aqi_labels: [
                "Clean",
                "Moderate",
                "UnhealthySensitive",
                "Unhealthy",
                "VeryUnhealthy",
                "Hazardous",
            ]
            .map(String::from)
            .to_vec(),
            synth_rows: sp.grid.n_rows,
            synth_cols: sp.grid.n_cols,
            synth_origin_lat: sp.grid.origin_lat,
            synth_origin_lon: sp.grid.origin_lon,
            synth_cell_size: sp.grid.cell_size,
            synth_start_date: sp.grid.date,
            synth_stations: sp.n_stations,
            synth_days: sp.n_days,
            synth_missing_fraction: sp.missing_fraction,
            synth_cloud_fraction: sp.cloud_fraction,
            synth_meteo_stride: sp.meteo_stride,
            synth_station_noise: sp.station_noise,
            synth_retrieval_noise: sp.retrieval_noise,
            threads: None,
        }
    }
}

/// Parses `"kind/family"`.
pub fn parse_kriging_pair(s: &str) -> Result<(KrigingKind, VariogramFamily)> {
    let (k, f) = s
        .split_once('/')
        .ok_or_else(|| Error::Config(format!("expected `kind/family`, got `{s}`")))?;
    Ok((k.trim().parse()?, f.trim().parse()?))
}

fn unit_interval(name: &str, v: f64, closed_low: bool) -> Result<()> {
    let ok = if closed_low {
        (0.0..1.0).contains(&v)
    } else {
        v > 0.0 && v < 1.0
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{name} must lie in {}0, 1), got {v}",
            if closed_low { "[" } else { "(" }
        )))
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: PipelineConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable") + "\n"
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_size == 0 || self.window_size % 2 == 0 {
            return Err(Error::Config(format!(
                "window_size must be odd, got {}",
                self.window_size
            )));
        }
        if !(self.std_threshold > 0.0) {
            return Err(Error::Config(format!(
                "std_threshold must be positive, got {}",
                self.std_threshold
            )));
        }
        unit_interval("split_fraction", self.split_fraction, false)?;
        if self.cv_folds < 2 {
            return Err(Error::Config(format!(
                "cv_folds must be at least 2, got {}",
                self.cv_folds
            )));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        self.meteo_settings()?;
        parse_kriging_pair(&self.pm_kriging)?;
        if self.aqi_labels.len() != self.aqi_breakpoints.len() + 1 {
            return Err(Error::Config(format!(
                "{} AQI breakpoints need {} labels, got {}",
                self.aqi_breakpoints.len(),
                self.aqi_breakpoints.len() + 1,
                self.aqi_labels.len()
            )));
        }
        if self.aqi_breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config(
                "AQI breakpoints must be strictly increasing".into(),
            ));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        unit_interval("gb_validation_fraction", self.gb_validation_fraction, false)?;
        unit_interval("synth_missing_fraction", self.synth_missing_fraction, true)?;
        unit_interval("synth_cloud_fraction", self.synth_cloud_fraction, true)?;
        self.synthetic_params()?.validate()?;
        Ok(())
    }

    pub fn meteo_settings(&self) -> Result<BTreeMap<MeteoField, (KrigingKind, VariogramFamily)>> {
        let mut out: BTreeMap<MeteoField, _> = MeteoField::ALL
            .iter()
            .map(|&f| (f, f.default_kriging()))
            .collect();
        for (name, pair) in &self.meteo_kriging {
            let field: MeteoField = name.parse()?;
            out.insert(field, parse_kriging_pair(pair)?);
        }
        Ok(out)
    }

    pub fn preprocess_config(&self) -> Result<PreprocessConfig> {
        Ok(PreprocessConfig {
            window: WindowCriteria {
                window: self.window_size,
                min_valid_pixels: self.min_valid_pixels,
                std_threshold: self.std_threshold,
            },
            outlier_method: self.outlier_method,
            merge_mode: self.merge_mode,
            meteo_kriging: self.meteo_settings()?,
        })
    }

    /// Model settings for `kind` (the configured model when `None`).
    pub fn model_spec(&self, kind: Option<ModelKind>) -> ModelSpec {
        ModelSpec {
            kind: kind.unwrap_or(self.model),
            lambda: self.lambda,
            univariate_feature: self.univariate_feature,
            random_forest: ForestParams {
                n_estimators: self.rf_n_estimators,
                max_depth: self.rf_max_depth,
                max_features: self.rf_max_features,
                min_samples_leaf: self.rf_min_samples_leaf,
            },
            extra_trees: ForestParams {
                n_estimators: self.et_n_estimators,
                max_depth: self.et_max_depth,
                max_features: self.et_max_features,
                min_samples_leaf: self.et_min_samples_leaf,
            },
            boosting: GbtParams {
                n_estimators: self.gb_n_estimators,
                learning_rate: self.gb_learning_rate,
                max_depth: self.gb_max_depth,
                max_features: self.gb_max_features,
                min_child_weight: self.gb_min_child_weight,
                gamma: self.gb_gamma,
                reg_lambda: self.gb_reg_lambda,
                early_stopping_rounds: self.gb_early_stopping_rounds,
                validation_fraction: self.gb_validation_fraction,
            },
            seed: self.seed,
        }
    }

    pub fn synthetic_params(&self) -> Result<SyntheticParams> {
        Ok(SyntheticParams {
            grid: GridSpec::new(
                self.synth_rows,
                self.synth_cols,
                self.synth_origin_lat,
                self.synth_origin_lon,
                self.synth_cell_size,
                self.synth_start_date,
            )?,
            n_stations: self.synth_stations,
            n_days: self.synth_days,
            seed: self.seed,
            missing_fraction: self.synth_missing_fraction,
            cloud_fraction: self.synth_cloud_fraction,
            meteo_stride: self.synth_meteo_stride,
            station_noise: self.synth_station_noise,
            retrieval_noise: self.synth_retrieval_noise,
        })
    }

    pub fn pm_kriging_pair(&self) -> Result<(KrigingKind, VariogramFamily)> {
        parse_kriging_pair(&self.pm_kriging)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = PipelineConfig::from_json("{}").unwrap();
        assert_eq!(c, PipelineConfig::default());
        assert_eq!(c.window_size, 3);
        assert_eq!(c.cv_folds, 5);
        assert_eq!(c.split_fraction, 0.7);
        assert_eq!(c.model_spec(None).boosting.n_estimators, 2000);
        assert_eq!(c.preprocess_config().unwrap(), PreprocessConfig::default());
    }

    #[test]
    fn json_round_trip() {
        let c = PipelineConfig {
            seed: 7,
            gb_early_stopping_rounds: Some(20),
            ..Default::default()
        };
        assert_eq!(PipelineConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn invariants_are_enforced() {
        for bad in [
            r#"{"window_size": 4}"#,
            r#"{"split_fraction": 1.0}"#,
            r#"{"cv_folds": 1}"#,
            r#"{"pm_kriging": "ordinary"}"#,
            r#"{"meteo_kriging": {"blh": "ordinary/cubic"}}"#,
            r#"{"no_such_key": 1}"#,
            r#"{"aqi_labels": ["a"]}"#,
        ] {
            assert!(PipelineConfig::from_json(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn meteo_override_applies() {
        let c = PipelineConfig::from_json(r#"{"meteo_kriging": {"blh": "universal/gaussian"}}"#).unwrap();
        let m = c.meteo_settings().unwrap();
        assert_eq!(
            m[&MeteoField::Blh],
            (KrigingKind::Universal, VariogramFamily::Gaussian)
        );
        assert_eq!(
            m[&MeteoField::Sp],
            (KrigingKind::Universal, VariogramFamily::Power)
        );
    }
}
