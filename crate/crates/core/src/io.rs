//! CSV / JSON plumbing with a fixed number format.
//!
//! Every float written by this crate uses 17 significant digits in
//! scientific notation so outputs are byte-stable across runs.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

use crate::error::{Error, Result};

/// Fixed 17-significant-digit scientific formatting.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Serialize an `f64` as a JSON number in the fixed format (`null` when
/// not finite). Only meaningful with `serde_json`.
pub fn fixed<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    Fixed(*x).serialize(s)
}

pub fn fixed_vec<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|&x| Fixed(x)))
}

pub fn fixed_opt<S: Serializer>(x: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match x {
        Some(x) => Fixed(*x).serialize(s),
        None => s.serialize_none(),
    }
}

/// An `f64` that serializes through [`fmt_f64`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fixed(pub f64);

impl Serialize for Fixed {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return s.serialize_none();
        }
        let raw = RawValue::from_string(fmt_f64(self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: "<memory>".into(),
        source,
    })?;
    text.push('\n');
    Ok(text)
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Read a headerless numeric CSV into a list of rows, tagging each row with
/// its 1-based line number. Ragged rows are reported, not padded.
pub fn read_csv_rows(path: &Path) -> Result<Vec<(u64, Vec<f64>)>> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::Io {
                path: display.clone(),
                source,
            },
            other => Error::Parse {
                path: display.clone(),
                line: 0,
                message: format!("{other:?}"),
            },
        })?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            path: display.clone(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let mut values = Vec::with_capacity(record.len());
        for (col, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| Error::Parse {
                path: display.clone(),
                line,
                message: format!("column {}: cannot parse {field:?} as a number", col + 1),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    path: display.clone(),
                    line,
                    message: format!("column {}: non-finite value {field:?}", col + 1),
                });
            }
            values.push(value);
        }
        rows.push((line, values));
    }
    Ok(rows)
}

/// Read a rectangular headerless CSV as a matrix (file rows become matrix rows).
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let rows = read_csv_rows(path)?;
    let display = path.display().to_string();
    let Some((_, first)) = rows.first() else {
        return Err(Error::Parse {
            path: display,
            line: 1,
            message: "file contains no data rows".into(),
        });
    };
    let ncols = first.len();
    for (line, row) in &rows {
        if row.len() != ncols {
            return Err(Error::Parse {
                path: display,
                line: *line,
                message: format!("expected {ncols} columns, found {}", row.len()),
            });
        }
    }
    let flat: Vec<f64> = rows.iter().flat_map(|(_, r)| r.iter().copied()).collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Write via a temporary sibling file and rename, so readers never see a
/// partially written file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::input(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, contents).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_atomic(path, matrix_to_csv(m).as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })
}
