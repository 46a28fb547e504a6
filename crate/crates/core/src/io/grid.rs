//! Plain-text raster format.
//!
//! ```text
//! nrows 2
//! ncols 3
//! origin_lat 35.8
//! origin_lon 51.2
//! cell_size 0.01
//! date 2018-01-01
//! variable aod
//! 0.21 0.19 NA
//! 0.25 0.3 0.28
//! ```
//!
//! The origin is the center of row 0, column 0 and latitude decreases with
//! the row index. Values are row-major and whitespace separated; any line
//! layout is accepted on input. Writers emit one grid row per line, values
//! at 6 significant digits, and header numbers in shortest round-trip form.

use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;

use crate::datamodel::{GridSpec, QaPixel, QaRaster, Raster};
use crate::error::{Error, Result};

const HEADER: [&str; 7] = [
    "nrows",
    "ncols",
    "origin_lat",
    "origin_lon",
    "cell_size",
    "date",
    "variable",
];

/// Rounds to 6 significant digits, the on-disk precision.
pub fn round_sig6(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.5e}").parse().unwrap()
}

/// Canonical text for a grid value.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        format!("{}", round_sig6(v))
    }
}

fn perr(path: &Path, line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message: message.into(),
    }
}

/// Parses a grid document. `path` only labels errors.
pub fn parse_raster(text: &str, path: &Path) -> Result<Raster> {
    let (spec, variable, values) = parse_grid(text, path)?;
    Raster::new(spec, variable, values)
}

fn parse_grid(text: &str, path: &Path) -> Result<(GridSpec, String, Vec<f64>)> {
    let mut lines = text.lines().enumerate();
    let mut header: Vec<String> = Vec::with_capacity(HEADER.len());
    for key in HEADER {
        let (ln, line) = loop {
            match lines.next() {
                Some((_, l)) if l.trim().is_empty() => continue,
                Some((i, l)) => break (i + 1, l),
                None => {
                    return Err(perr(
                        path,
                        text.lines().count() + 1,
                        1,
                        format!("missing header `{key}`"),
                    ))
                }
            }
        };
        let mut parts = line.split_whitespace();
        let k = parts.next().unwrap_or("");
        if k != key {
            return Err(perr(path, ln, 1, format!("expected header `{key}`, found `{k}`")));
        }
        let v = parts
            .next()
            .ok_or_else(|| perr(path, ln, line.len() + 1, format!("header `{key}` has no value")))?;
        if parts.next().is_some() {
            return Err(perr(path, ln, 1, format!("header `{key}` has trailing tokens")));
        }
        header.push(v.to_string());
    }
    let int = |i: usize| -> Result<usize> {
        header[i].parse().map_err(|_| {
            perr(
                path,
                i + 1,
                HEADER[i].len() + 2,
                format!("`{}` is not a count", header[i]),
            )
        })
    };
    let real = |i: usize| -> Result<f64> {
        header[i].parse().map_err(|_| {
            perr(
                path,
                i + 1,
                HEADER[i].len() + 2,
                format!("`{}` is not a number", header[i]),
            )
        })
    };
    let date: NaiveDate = header[5]
        .parse()
        .map_err(|_| perr(path, 6, 6, format!("`{}` is not a YYYY-MM-DD date", header[5])))?;
    let spec = GridSpec::new(int(0)?, int(1)?, real(2)?, real(3)?, real(4)?, date)?;
    let n = spec.len();
    let mut values = Vec::with_capacity(n);
    let mut last_line = HEADER.len();
    for (i, line) in lines {
        last_line = i + 1;
        let mut col = 0;
        for tok in line.split_whitespace() {
            // byte offset of this token, 1-based
            let start = line[col..].find(tok).unwrap() + col;
            col = start + tok.len();
            if values.len() == n {
                return Err(perr(
                    path,
                    i + 1,
                    start + 1,
                    format!("more than the {n} declared values"),
                ));
            }
            let v = if tok == "NA" {
                f64::NAN
            } else {
                match tok.parse::<f64>() {
                    Ok(v) if v.is_finite() => v,
                    _ => {
                        return Err(perr(
                            path,
                            i + 1,
                            start + 1,
                            format!("`{tok}` is not a finite number or NA"),
                        ))
                    }
                }
            };
            values.push(v);
        }
    }
    if values.len() != n {
        return Err(perr(
            path,
            last_line,
            1,
            format!("expected {n} values, found {}", values.len()),
        ));
    }
    Ok((spec, header.pop().unwrap(), values))
}

fn header_text(spec: &GridSpec, variable: &str) -> String {
    let mut s = String::new();
    writeln!(s, "nrows {}", spec.n_rows).unwrap();
    writeln!(s, "ncols {}", spec.n_cols).unwrap();
    writeln!(s, "origin_lat {}", spec.origin_lat).unwrap();
    writeln!(s, "origin_lon {}", spec.origin_lon).unwrap();
    writeln!(s, "cell_size {}", spec.cell_size).unwrap();
    writeln!(s, "date {}", spec.date).unwrap();
    writeln!(s, "variable {variable}").unwrap();
    s
}

pub fn format_raster(r: &Raster) -> String {
    let mut s = header_text(&r.spec, &r.variable);
    for row in r.values().chunks(r.spec.n_cols) {
        let line: Vec<String> = row.iter().map(|&v| format_value(v)).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_raster(&text, path)
}

pub fn write_raster(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    super::write_atomic(path, format_raster(raster).as_bytes())
}

/// QA rasters use the same layout with three-digit pixel codes
/// (cloud, adjacency, quality) and `NA` for an all-missing pixel.
pub fn parse_qa(text: &str, path: &Path) -> Result<QaRaster> {
    let (spec, _, values) = parse_grid(text, path)?;
    let pixels = values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v.is_nan() {
                return Ok(QaPixel::MISSING);
            }
            let bad = || {
                let (r, c) = spec.row_col(i);
                Error::InvalidGrid(format!(
                    "{}: QA code {v} at row {r}, col {c} is invalid",
                    path.display()
                ))
            };
            if v.fract() != 0.0 || !(0.0..1000.0).contains(&v) {
                return Err(bad());
            }
            QaPixel::from_code(v as u16).ok_or_else(bad)
        })
        .collect::<Result<Vec<_>>>()?;
    QaRaster::new(spec, pixels)
}

pub fn format_qa(qa: &QaRaster) -> String {
    let mut s = header_text(&qa.spec, "qa");
    for row in qa.pixels().chunks(qa.spec.n_cols) {
        let line: Vec<String> = row
            .iter()
            .map(|p| {
                if p.is_missing() {
                    "NA".to_string()
                } else {
                    p.to_code().to_string()
                }
            })
            .collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub fn read_qa(path: impl AsRef<Path>) -> Result<QaRaster> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_qa(&text, path)
}

pub fn write_qa(qa: &QaRaster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    super::write_atomic(path, format_qa(qa).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("t.grid")
    }

    const ONE: &str = "nrows 1\nncols 1\norigin_lat 35.8\norigin_lon 51.2\ncell_size 0.01\ndate 2018-01-01\nvariable aod\n0.5\n";

    #[test]
    fn smallest_file() {
        let r = parse_raster(ONE, p()).unwrap();
        assert_eq!(r.values(), &[0.5]);
        assert_eq!(r.variable, "aod");
        assert_eq!(format_raster(&r), ONE);
    }

    #[test]
    fn na_token() {
        let t = ONE.replace("\n0.5\n", "\nNA\n");
        let r = parse_raster(&t, p()).unwrap();
        assert_eq!(r.get(0, 0), None);
    }

    #[test]
    fn too_many_values() {
        let t = ONE
            .replace("nrows 1\nncols 1", "nrows 2\nncols 2")
            .replace("\n0.5\n", "\n1 2\n3\n");
        assert!(parse_raster(&t, p()).is_err());
        let t = ONE
            .replace("nrows 1\nncols 1", "nrows 1\nncols 2")
            .replace("\n0.5\n", "\n1 2\n3\n");
        match parse_raster(&t, p()) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (9, 1)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_token_location() {
        let t = ONE
            .replace("nrows 1", "nrows 2")
            .replace("\n0.5\n", "\n0.5\n  x7\n");
        match parse_raster(&t, p()) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (9, 3)),
            other => panic!("{other:?}"),
        }
        let t = ONE.replace("cell_size", "cellsize");
        assert!(matches!(parse_raster(&t, p()), Err(Error::Parse { line: 5, .. })));
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(format_value(0.123456789), "0.123457");
        assert_eq!(format_value(1234567.0), "1234570");
        assert_eq!(format_value(-2.5e-7), "-0.00000025");
        assert_eq!(format_value(f64::NAN), "NA");
    }

    #[test]
    fn qa_round_trip() {
        let spec = GridSpec::new(2, 2, 35.8, 51.2, 0.01, "2018-01-01".parse().unwrap()).unwrap();
        let mut qa = QaRaster::filled(spec, QaPixel::BEST);
        qa.set(1, 0, QaPixel::MISSING);
        qa.set(0, 1, QaPixel::from_code(112).unwrap());
        let text = format_qa(&qa);
        assert!(text.ends_with("0 112\nNA 0\n"), "{text}");
        assert_eq!(parse_qa(&text, p()).unwrap(), qa);
        assert!(parse_qa(&text.replace("112", "999"), p()).is_err());
    }

    proptest! {
        #[test]
        fn canonical_files_round_trip(vals in proptest::collection::vec(proptest::option::of(-1e6f64..1e6), 12),
                                      lat in -80.0f64..80.0, cell in 0.0001f64..1.0) {
            let spec = GridSpec::new(3, 4, lat, 51.123456789, cell, "2019-07-04".parse().unwrap()).unwrap();
            let values = vals.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
            let r = Raster::new(spec, "blh", values).unwrap();
            let text = format_raster(&r);
            let back = parse_raster(&text, p()).unwrap();
            prop_assert_eq!(back.spec, spec);
            prop_assert_eq!(format_raster(&back), text);
            for (a, b) in back.values().iter().zip(r.values()) {
                prop_assert!(a.is_nan() == b.is_nan());
                if !a.is_nan() { prop_assert_eq!(*a, round_sig6(*b)); }
            }
        }
    }
}
