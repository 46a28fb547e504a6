use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use aeromap::datamodel::{Feature, FeatureTable, Sample, StationRecord};
use aeromap::deploy::{aggregate_maps, classify_aqi_band, map_day, DayMapReport, MapKriging, Period};
use aeromap::geostat::GridSearchResult;
use aeromap::io::synth::{list_days, load_day, load_days, load_stations};
use aeromap::io::{
    generate_synthetic_scene, load_model, read_samples, save_model, write_raster, write_samples, write_scene,
    PipelineConfig, SplitMode,
};
use aeromap::models::{
    correlation_matrix, cross_validate, default_ablation_settings, evaluate, feature_importance, fit_model,
    run_ablation, split_train_test, split_train_test_temporal, AblationRow, CorrelationMatrix, EvalReport,
    ImportanceReport, Model, ModelKind,
};
use aeromap::preprocess::{
    build_samples, fit_scene_merge, prepare_day, screen_stations, select_meteo_kriging, MergeCoefficients,
    MeteoField, MeteoVar, PreprocessConfig,
};
use aeromap::{Error, Result};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::manifest::{write_json, Recorder};

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    })
}

fn start(command: &str, config: &PipelineConfig, config_path: Option<&Path>, out: &Path) -> Result<Recorder> {
    create_dir(out)?;
    let mut rec = Recorder::new(command, config, out);
    if let Some(p) = config_path {
        rec.input(p)?;
    }
    Ok(rec)
}

/// Every regular file below `dir`, sorted.
fn files_under(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = std::fs::read_dir(&d).map_err(|e| Error::Io {
            path: d.clone(),
            source: e,
        })?;
        for e in entries {
            let p = e
                .map_err(|e| Error::Io {
                    path: d.clone(),
                    source: e,
                })?
                .path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn synth(config: &PipelineConfig, config_path: Option<&Path>, out: &Path) -> Result<()> {
    let mut rec = start("synth", config, config_path, out)?;
    let scene = generate_synthetic_scene(&config.synthetic_params()?)?;
    rec.stage("generate");
    for p in write_scene(&scene, out)? {
        rec.output(&p)?;
    }
    rec.stage("write");
    rec.finish()?;
    Ok(())
}

/// Preprocessing choices that the map stage must repeat.
#[derive(Debug, Serialize, Deserialize)]
pub struct PreprocessState {
    pub merge: Option<MergeCoefficients>,
    /// `"kind/family"` per meteorological feature.
    pub meteo_kriging: BTreeMap<String, String>,
}

#[derive(Debug, Serialize)]
struct MeteoSearch {
    date: NaiveDate,
    fields: BTreeMap<String, Option<GridSearchResult>>,
}

fn pair_name(kind: aeromap::geostat::KrigingKind, family: aeromap::geostat::VariogramFamily) -> String {
    format!("{}/{}", kind.name(), family.name())
}

fn settings_to_names(pre: &PreprocessConfig) -> BTreeMap<String, String> {
    pre.meteo_kriging
        .iter()
        .map(|(f, &(k, v))| (f.name().to_string(), pair_name(k, v)))
        .collect()
}

pub fn preprocess(
    config: &PipelineConfig,
    config_path: Option<&Path>,
    data: &Path,
    out: &Path,
) -> Result<()> {
    let mut rec = start("preprocess", config, config_path, out)?;
    rec.input(&data.join("stations.csv"))?;
    for p in files_under(&data.join("days"))? {
        rec.input(&p)?;
    }
    let stations = load_stations(data)?;
    let days = load_days(data)?;
    rec.stage("load");

    let mut pre = config.preprocess_config()?;
    let mut search = None;
    if config.meteo_grid_search {
        let first = days
            .iter()
            .find(|d| MeteoVar::ALL.iter().all(|v| d.meteo.contains_key(v)))
            .ok_or_else(|| Error::InsufficientData("no day has every meteorological input".into()))?;
        let picked = select_meteo_kriging(&first.meteo, config.cv_folds, config.seed)?;
        let mut fields = BTreeMap::new();
        for (field, (kind, family, result)) in picked {
            pre.meteo_kriging.insert(field, (kind, family));
            fields.insert(field.name().to_string(), result);
        }
        search = Some(MeteoSearch {
            date: first.date,
            fields,
        });
        rec.stage("meteo grid search");
    }

    let (samples, report) = build_samples(&stations, &days, &pre)?;
    rec.stage("samples");
    eprintln!(
        "[preprocess] {} samples from {} readings ({} outliers, {} invalid windows)",
        samples.len(),
        report.records_with_pm,
        report.outliers_removed,
        report.invalid_windows
    );

    let p = out.join("samples.csv");
    write_samples(&samples, &p)?;
    rec.output(&p)?;
    let p = out.join("preprocess_report.json");
    write_json(&p, &report)?;
    rec.output(&p)?;
    let state = PreprocessState {
        merge: report.merge,
        meteo_kriging: settings_to_names(&pre),
    };
    let p = out.join("state.json");
    write_json(&p, &state)?;
    rec.output(&p)?;
    if let Some(s) = search {
        let p = out.join("meteo_grid_search.json");
        write_json(&p, &s)?;
        rec.output(&p)?;
    }
    rec.finish()?;
    Ok(())
}

struct Split {
    train_x: FeatureTable,
    train_y: Vec<f64>,
    test_x: FeatureTable,
    test_y: Vec<f64>,
}

fn rows(x: &FeatureTable, y: &[f64], idx: &[usize]) -> Result<(FeatureTable, Vec<f64>)> {
    let data: Vec<f64> = idx.iter().flat_map(|&i| x.row(i).iter().copied()).collect();
    Ok((
        FeatureTable::new(x.features.clone(), data)?,
        idx.iter().map(|&i| y[i]).collect(),
    ))
}

fn split_samples(config: &PipelineConfig, samples: &[Sample]) -> Result<Split> {
    let x = FeatureTable::from_samples(samples, &Feature::ALL);
    let y: Vec<f64> = samples.iter().map(|s| s.target).collect();
    let (tr, te) = match config.split_mode {
        SplitMode::Random => split_train_test(samples.len(), config.split_fraction, config.seed)?,
        SplitMode::Temporal => {
            let dates: Vec<NaiveDate> = samples.iter().map(|s| s.date).collect();
            split_train_test_temporal(&dates, config.split_fraction)?
        }
    };
    let (train_x, train_y) = rows(&x, &y, &tr)?;
    let (test_x, test_y) = rows(&x, &y, &te)?;
    Ok(Split {
        train_x,
        train_y,
        test_x,
        test_y,
    })
}

#[derive(Debug, Serialize)]
struct CvSummary {
    folds: Vec<EvalReport>,
    mean_rmse: f64,
    mean_mae: f64,
    mean_r2: f64,
}

#[derive(Debug, Serialize)]
struct TrainReport {
    model: ModelKind,
    features: Vec<Feature>,
    train: EvalReport,
    test: EvalReport,
    cv: CvSummary,
    importance: Option<ImportanceReport>,
}

pub fn train(config: &PipelineConfig, config_path: Option<&Path>, samples: &Path, out: &Path) -> Result<()> {
    let mut rec = start("train", config, config_path, out)?;
    rec.input(samples)?;
    let samples = read_samples(samples)?;
    let split = split_samples(config, &samples)?;
    rec.stage("load");

    let spec = config.model_spec(None);
    eprintln!(
        "[train] fitting {} on {} rows",
        spec.kind.name(),
        split.train_y.len()
    );
    let model = fit_model(&spec, &split.train_x, &split.train_y)?;
    rec.stage("fit");
    let train_eval = evaluate(&model.predict(&split.train_x)?, &split.train_y, "train")?;
    let test_eval = evaluate(&model.predict(&split.test_x)?, &split.test_y, "test")?;
    eprintln!("[train] test rmse {:.3} r2 {:.4}", test_eval.rmse, test_eval.r2);
    let folds = cross_validate(
        &spec,
        &split.train_x,
        &split.train_y,
        config.cv_folds,
        config.seed,
    )?;
    rec.stage("cross-validation");
    let k = folds.len() as f64;
    let cv = CvSummary {
        mean_rmse: folds.iter().map(|f| f.rmse).sum::<f64>() / k,
        mean_mae: folds.iter().map(|f| f.mae).sum::<f64>() / k,
        mean_r2: folds.iter().map(|f| f.r2).sum::<f64>() / k,
        folds,
    };
    let importance = match &model {
        Model::Trees(t) => Some(feature_importance(t)),
        Model::Linear(_) => None,
    };
    let report = TrainReport {
        model: model.kind(),
        features: model.features().to_vec(),
        train: train_eval,
        test: test_eval,
        cv,
        importance,
    };

    let p = out.join("model.json");
    save_model(&model, &p)?;
    rec.output(&p)?;
    let p = out.join("eval_report.json");
    write_json(&p, &report)?;
    rec.output(&p)?;
    rec.finish()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct AblationReport {
    model: ModelKind,
    rows: Vec<AblationRow>,
    correlation: CorrelationMatrix,
}

pub fn ablate(config: &PipelineConfig, config_path: Option<&Path>, samples: &Path, out: &Path) -> Result<()> {
    let mut rec = start("ablate", config, config_path, out)?;
    rec.input(samples)?;
    let samples = read_samples(samples)?;
    let split = split_samples(config, &samples)?;
    let spec = config.model_spec(None);
    let rows = run_ablation(
        &spec,
        (&split.train_x, &split.train_y),
        (&split.test_x, &split.test_y),
        &default_ablation_settings(),
    )?;
    rec.stage("ablation");
    let x = FeatureTable::from_samples(&samples, &Feature::ALL);
    let y: Vec<f64> = samples.iter().map(|s| s.target).collect();
    let report = AblationReport {
        model: spec.kind,
        rows,
        correlation: correlation_matrix(&x, &y),
    };
    let p = out.join("ablation.json");
    write_json(&p, &report)?;
    rec.output(&p)?;
    rec.finish()?;
    Ok(())
}

pub fn eval(
    config: &PipelineConfig,
    config_path: Option<&Path>,
    model: &Path,
    samples: &Path,
    out: &Path,
) -> Result<()> {
    let mut rec = start("eval", config, config_path, out)?;
    rec.input(model)?;
    rec.input(samples)?;
    let model = load_model(model)?;
    let samples = read_samples(samples)?;
    let x = FeatureTable::from_samples(&samples, &Feature::ALL);
    let y: Vec<f64> = samples.iter().map(|s| s.target).collect();
    let report = evaluate(&model.predict(&x)?, &y, "all")?;
    eprintln!(
        "[eval] rmse {:.3} mae {:.3} r2 {:.4}",
        report.rmse, report.mae, report.r2
    );
    let p = out.join("eval.json");
    write_json(&p, &report)?;
    rec.output(&p)?;
    rec.finish()?;
    Ok(())
}

pub struct MapArgs {
    pub model: PathBuf,
    pub data: PathBuf,
    pub out: PathBuf,
    pub state: Option<PathBuf>,
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
}

#[derive(Debug, Serialize)]
struct SkippedDay {
    date: NaiveDate,
    error: String,
}

#[derive(Debug, Serialize)]
struct MapReport {
    days: Vec<DayMapReport>,
    skipped: Vec<SkippedDay>,
    clamped_total: usize,
    uncorrected: bool,
    aqi_breakpoints: Vec<f64>,
    aqi_labels: Vec<String>,
    months: Vec<String>,
    years: Vec<String>,
}

pub fn map(config: &PipelineConfig, config_path: Option<&Path>, args: &MapArgs) -> Result<()> {
    let out = args.out.as_path();
    let mut rec = start("map", config, config_path, out)?;
    rec.input(&args.model)?;
    let model = load_model(&args.model)?;

    let mut pre = config.preprocess_config()?;
    let merge = match &args.state {
        Some(p) => {
            rec.input(p)?;
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            let state: PreprocessState = serde_json::from_str(&text)?;
            for (name, pair) in &state.meteo_kriging {
                let field: MeteoField = name.parse()?;
                pre.meteo_kriging
                    .insert(field, aeromap::io::parse_kriging_pair(pair)?);
            }
            state.merge
        }
        None => {
            eprintln!(
                "[map] no state file; refitting the sensor merge from {}",
                args.data.display()
            );
            fit_scene_merge(&load_days(&args.data)?).ok()
        }
    };

    let dates: Vec<NaiveDate> = list_days(&args.data)?
        .into_iter()
        .filter(|d| args.from.is_none_or(|f| *d >= f) && args.to.is_none_or(|t| *d <= t))
        .collect();
    if dates.is_empty() {
        return Err(Error::InsufficientData("no days in the requested range".into()));
    }
    let stations_path = args.data.join("stations.csv");
    rec.input(&stations_path)?;
    for d in &dates {
        for p in files_under(&args.data.join("days").join(d.to_string()))? {
            rec.input(&p)?;
        }
    }
    let stations = load_stations(&args.data)?;
    let (kept, _, _) = screen_stations(&stations, pre.outlier_method);
    let mut by_date: BTreeMap<NaiveDate, Vec<&StationRecord>> = BTreeMap::new();
    for r in kept {
        by_date.entry(r.date).or_default().push(r);
    }
    rec.stage("load");

    let (kind, family) = config.pm_kriging_pair()?;
    let kriging = MapKriging {
        kind,
        family,
        max_neighbors: config.pm_kriging_max_neighbors,
    };
    let mut report = MapReport {
        days: Vec::new(),
        skipped: Vec::new(),
        clamped_total: 0,
        uncorrected: config.uncorrected_maps,
        aqi_breakpoints: config.aqi_breakpoints.clone(),
        aqi_labels: config.aqi_labels.clone(),
        months: Vec::new(),
        years: Vec::new(),
    };
    let mut maps = Vec::new();
    for &date in &dates {
        let result = load_day(&args.data, date)
            .and_then(|day| prepare_day(&day, merge.as_ref(), &pre))
            .and_then(|day| {
                let recs = by_date.get(&date).map(Vec::as_slice).unwrap_or(&[]);
                map_day(&model, &day, recs, &pre.window, &kriging, config.uncorrected_maps)
            });
        match result {
            Ok((daily, day_report)) => {
                let stamp = date.format("%Y-%m-%d");
                let aqi = classify_aqi_band(&daily.pm25, &config.aqi_breakpoints)?;
                for (name, r) in [
                    ("pm25", &daily.pm25),
                    ("provenance", &daily.provenance),
                    ("aqi", &aqi),
                ] {
                    let p = out.join(format!("{name}_{stamp}.grid"));
                    write_raster(r, &p)?;
                    rec.output(&p)?;
                }
                report.clamped_total += day_report.clamped;
                report.days.push(day_report);
                maps.push(daily.pm25);
            }
            Err(e) => {
                eprintln!("[map] {date}: {e}");
                report.skipped.push(SkippedDay {
                    date,
                    error: e.to_string(),
                });
            }
        }
    }
    rec.stage("daily maps");

    if !maps.is_empty() {
        let refs: Vec<_> = maps.iter().collect();
        for (period, label, keys) in [
            (Period::Month, "month", &mut report.months),
            (Period::Year, "year", &mut report.years),
        ] {
            for (key, r) in aggregate_maps(&refs, period)? {
                let p = out.join(format!("pm25_{label}_{key}.grid"));
                write_raster(&r, &p)?;
                rec.output(&p)?;
                keys.push(key);
            }
        }
        rec.stage("aggregates");
    }

    let p = out.join("map_report.json");
    write_json(&p, &report)?;
    rec.output(&p)?;
    let skipped = report.skipped.len();
    rec.finish()?;
    if skipped > 0 {
        return Err(Error::InsufficientData(format!(
            "{skipped} of {} requested days could not be mapped; see map_report.json",
            dates.len()
        )));
    }
    Ok(())
}
