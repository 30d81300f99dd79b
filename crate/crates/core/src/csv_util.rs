//! Shared CSV plumbing: header lookup, cell parsing and file handles.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use csv::StringRecord;

use crate::error::{Error, Result, RowError};

pub(crate) const DATE_FORMAT: &str = "%Y-%m-%d";

pub(crate) fn reader_from_path(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(reader(file))
}

pub(crate) fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(input)
}


pub(crate) fn csv_err(file: &str) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        file: file.to_string(),
        source,
    }
}

/// Resolve each required column to its index in the header row.
pub(crate) fn locate_columns<R: Read>(
    rdr: &mut csv::Reader<R>,
    file: &str,
    required: &[&str],
) -> Result<Vec<usize>> {
    let headers = rdr.headers().map_err(csv_err(file))?.clone();
    let names: Vec<String> = headers.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    let mut missing = Vec::new();
    let mut idx = Vec::with_capacity(required.len());
    for col in required {
        match names.iter().position(|n| n == col) {
            Some(i) => idx.push(i),
            None => missing.push(*col),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Schema {
            file: file.to_string(),
            message: format!("missing required column(s): {}", missing.join(", ")),
        });
    }
    Ok(idx)
}

pub(crate) fn line_of(record: &StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

pub(crate) fn parse_date(cell: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(cell, DATE_FORMAT).map_err(|e| format!("bad date '{cell}': {e}"))
}

pub(crate) fn parse_f64(cell: &str, column: &str) -> std::result::Result<f64, String> {
    let v: f64 = cell
        .parse()
        .map_err(|_| format!("{column}: not a number: '{cell}'"))?;
    if !v.is_finite() {
        return Err(format!("{column}: non-finite value '{cell}'"));
    }
    Ok(v)
}

pub(crate) fn parse_opt_f64(cell: &str, column: &str) -> std::result::Result<Option<f64>, String> {
    if cell.is_empty() {
        Ok(None)
    } else {
        parse_f64(cell, column).map(Some)
    }
}

pub(crate) fn row_error(record: &StringRecord, message: String) -> RowError {
    RowError {
        line: line_of(record),
        message,
    }
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub(crate) fn flush<W: Write>(w: &mut csv::Writer<W>, file: &str) -> Result<()> {
    w.flush().map_err(|e| Error::Io {
        path: file.into(),
        source: e,
    })
}
