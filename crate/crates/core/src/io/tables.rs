//! CSV tables: station readings and model-ready samples.

use std::collections::HashSet;
use std::path::Path;

use chrono::NaiveDate;

use super::grid::format_value;
use crate::datamodel::{Feature, FeatureValues, Sample, StationRecord};
use crate::error::{Error, Result};

pub const STATIONS_HEADER: [&str; 5] = ["station_id", "lat", "lon", "date", "pm25"];

fn perr(path: &Path, line: u64, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        column,
        message: message.into(),
    }
}

fn check_header(rdr: &mut csv::Reader<&[u8]>, want: &[&str], path: &Path) -> Result<()> {
    let got = rdr.headers()?.clone();
    if got.len() != want.len() || got.iter().zip(want).any(|(a, b)| a.trim() != *b) {
        return Err(perr(path, 1, 1, format!("expected header `{}`", want.join(","))));
    }
    Ok(())
}

/// Parses `station_id,lat,lon,date,pm25`. An empty `pm25` is a missing
/// reading; negative readings and repeated (station, date) keys are errors.
pub fn parse_stations(text: &str, path: &Path) -> Result<Vec<StationRecord>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    check_header(&mut rdr, &STATIONS_HEADER, path)?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let real = |i: usize| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    perr(
                        path,
                        line,
                        i + 1,
                        format!("`{}` is not a finite number", field(i)),
                    )
                })
        };
        let station_id = field(0).to_string();
        if station_id.is_empty() {
            return Err(perr(path, line, 1, "empty station_id"));
        }
        let date: NaiveDate = field(3)
            .parse()
            .map_err(|_| perr(path, line, 4, format!("`{}` is not a YYYY-MM-DD date", field(3))))?;
        let pm25 = if field(4).is_empty() {
            None
        } else {
            let v = real(4)?;
            if v < 0.0 {
                return Err(perr(path, line, 5, format!("negative PM2.5 {v}")));
            }
            Some(v)
        };
        if !seen.insert((station_id.clone(), date)) {
            return Err(Error::DuplicateStation {
                station_id,
                date: date.to_string(),
            });
        }
        out.push(StationRecord {
            station_id,
            lat: real(1)?,
            lon: real(2)?,
            date,
            pm25,
        });
    }
    Ok(out)
}

pub fn format_stations(records: &[StationRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(STATIONS_HEADER)?;
    for r in records {
        w.write_record([
            r.station_id.clone(),
            format_value(r.lat),
            format_value(r.lon),
            r.date.to_string(),
            r.pm25.map(format_value).unwrap_or_default(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8"))
}

pub fn read_stations(path: impl AsRef<Path>) -> Result<Vec<StationRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_stations(&text, path)
}

pub fn write_stations(records: &[StationRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    super::write_atomic(path, format_stations(records)?.as_bytes())
}

/// Sample tables carry `station_id,date`, the 19 predictors by name and
/// `target`. Numbers are written in shortest round-trip form so that a
/// model trained from the file matches one trained in memory.
pub fn format_samples(samples: &[Sample]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["station_id", "date"];
    header.extend(Feature::ALL.iter().map(|f| f.name()));
    header.push("target");
    w.write_record(&header)?;
    for s in samples {
        let mut row = vec![s.station_id.clone(), s.date.to_string()];
        row.extend(Feature::ALL.iter().map(|&f| format!("{}", s.features[f])));
        row.push(format!("{}", s.target));
        w.write_record(&row)?;
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8"))
}

/// Reads a sample table. Columns are matched by name, so order and extra
/// columns do not matter; every predictor and `target` must be present.
pub fn parse_samples(text: &str, path: &Path) -> Result<Vec<Sample>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingFeature(name.to_string()))
    };
    let id_col = col("station_id")?;
    let date_col = col("date")?;
    let target_col = col("target")?;
    let feat_cols = Feature::ALL
        .iter()
        .map(|f| col(f.name()))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let real = |i: usize| -> Result<f64> {
            let t = rec.get(i).unwrap_or("").trim();
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| perr(path, line, i + 1, format!("`{t}` is not a finite number")))
        };
        let mut features = FeatureValues::default();
        for (f, &c) in Feature::ALL.iter().zip(&feat_cols) {
            features[*f] = real(c)?;
        }
        let date_text = rec.get(date_col).unwrap_or("").trim();
        out.push(Sample {
            station_id: rec.get(id_col).unwrap_or("").trim().to_string(),
            date: date_text
                .parse()
                .map_err(|_| perr(path, line, date_col + 1, format!("`{date_text}` is not a date")))?,
            features,
            target: real(target_col)?,
        });
    }
    Ok(out)
}

pub fn read_samples(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_samples(&text, path)
}

pub fn write_samples(samples: &[Sample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    super::write_atomic(path, format_samples(samples)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("stations.csv")
    }

    #[test]
    fn station_rows() {
        let t =
            "station_id,lat,lon,date,pm25\nS01,35.70,51.40,2018-01-01,73.2\nS02,35.71,51.41,2018-01-01,\n";
        let r = parse_stations(t, p()).unwrap();
        assert_eq!(r[0].pm25, Some(73.2));
        assert_eq!(r[0].station_id, "S01");
        assert_eq!(r[1].pm25, None);
        let again = parse_stations(&format_stations(&r).unwrap(), p()).unwrap();
        assert_eq!(again, r);
    }

    #[test]
    fn station_errors() {
        let dup = "station_id,lat,lon,date,pm25\nS01,35.7,51.4,2018-01-01,1\nS01,35.7,51.4,2018-01-01,2\n";
        assert!(matches!(
            parse_stations(dup, p()),
            Err(Error::DuplicateStation { .. })
        ));
        let neg = "station_id,lat,lon,date,pm25\nS01,35.7,51.4,2018-01-01,-3\n";
        assert!(matches!(
            parse_stations(neg, p()),
            Err(Error::Parse {
                line: 2,
                column: 5,
                ..
            })
        ));
        let hdr = "id,lat,lon,date,pm25\n";
        assert!(matches!(
            parse_stations(hdr, p()),
            Err(Error::Parse { line: 1, .. })
        ));
        let date = "station_id,lat,lon,date,pm25\nS01,35.7,51.4,2018-13-01,3\n";
        assert!(matches!(
            parse_stations(date, p()),
            Err(Error::Parse { column: 4, .. })
        ));
    }

    #[test]
    fn samples_round_trip_exactly() {
        let mut f = FeatureValues::default();
        for (i, x) in Feature::ALL.iter().enumerate() {
            f[*x] = 0.1 + i as f64 / 3.0;
        }
        let s = vec![Sample {
            station_id: "S07".into(),
            date: "2018-06-30".parse().unwrap(),
            features: f,
            target: 1.0 / 7.0,
        }];
        let back = parse_samples(&format_samples(&s).unwrap(), p()).unwrap();
        assert_eq!(back, s);
    }
}
