//! CSV and JSON-lines output.
//!
//! Step log columns: `step, session, market_id, market_price,
//! fundamental_price, best_bid, best_ask, executed_volume, execution_count`.
//! Prices are in currency; an absent quote is an empty CSV field or `null`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{ticks_to_currency, StepLogRecord};

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl EmitError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        EmitError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        }
    }
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(format!("unknown format `{other}` (expected csv or jsonl)")),
        }
    }
}

/// Rows with a fixed column list, so that an empty table still gets a header.
pub trait Columns {
    const COLUMNS: &'static [&'static str];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub step: u64,
    pub session: String,
    pub market_id: usize,
    pub market_price: f64,
    pub fundamental_price: f64,
    pub best_bid: Option<f64>,
    pub best_ask: Option<f64>,
    pub executed_volume: u64,
    pub execution_count: u64,
}

impl Columns for StepRow {
    const COLUMNS: &'static [&'static str] = &[
        "step",
        "session",
        "market_id",
        "market_price",
        "fundamental_price",
        "best_bid",
        "best_ask",
        "executed_volume",
        "execution_count",
    ];
}

impl From<&StepLogRecord> for StepRow {
    fn from(r: &StepLogRecord) -> Self {
        let cur = |t| ticks_to_currency(t, r.tick_size);
        StepRow {
            step: r.step,
            session: r.session.clone(),
            market_id: r.market_id,
            market_price: cur(r.market_price),
            fundamental_price: cur(r.fundamental_price),
            best_bid: r.best_bid.map(cur),
            best_ask: r.best_ask.map(cur),
            executed_volume: r.executed_volume,
            execution_count: r.execution_count,
        }
    }
}

pub fn write_rows_to<W: Write, T: Serialize + Columns>(rows: &[T], format: Format, writer: W) -> Result<(), EmitError> {
    match format {
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
            w.write_record(T::COLUMNS)?;
            for row in rows {
                w.serialize(row)?;
            }
            w.flush().map_err(csv::Error::from)?;
        }
        Format::Jsonl => {
            let mut w = BufWriter::new(writer);
            for row in rows {
                serde_json::to_writer(&mut w, row)?;
                w.write_all(b"\n").map_err(serde_json::Error::io)?;
            }
            w.flush().map_err(serde_json::Error::io)?;
        }
    }
    Ok(())
}

pub fn write_rows<T: Serialize + Columns>(rows: &[T], format: Format, path: &Path) -> Result<(), EmitError> {
    let file = File::create(path).map_err(|e| EmitError::io(path, e))?;
    write_rows_to(rows, format, file)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), EmitError> {
    let file = File::create(path).map_err(|e| EmitError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| EmitError::io(path, e))?;
    w.flush().map_err(|e| EmitError::io(path, e))
}

/// JSON lines without a header (training reports and similar).
pub fn write_jsonl<T: Serialize>(rows: &[T], path: &Path) -> Result<(), EmitError> {
    let file = File::create(path).map_err(|e| EmitError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n").map_err(|e| EmitError::io(path, e))?;
    }
    w.flush().map_err(|e| EmitError::io(path, e))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, EmitError> {
    let file = File::open(path).map_err(|e| EmitError::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(EmitError::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<StepRow> {
        vec![
            StepRow {
                step: 0,
                session: "0".into(),
                market_id: 0,
                market_price: 300.0,
                fundamental_price: 300.0,
                best_bid: None,
                best_ask: Some(300.12345),
                executed_volume: 0,
                execution_count: 0,
            },
            StepRow {
                step: 1,
                session: "1".into(),
                market_id: 0,
                market_price: 299.99999,
                fundamental_price: 300.0,
                best_bid: Some(299.5),
                best_ask: Some(300.00001),
                executed_volume: 2,
                execution_count: 1,
            },
        ]
    }

    #[test]
    fn empty_table_is_header_only() {
        let mut buf = Vec::new();
        write_rows_to::<_, StepRow>(&[], Format::Csv, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "step,session,market_id,market_price,fundamental_price,best_bid,best_ask,executed_volume,execution_count\n"
        );
        let mut buf = Vec::new();
        write_rows_to::<_, StepRow>(&[], Format::Jsonl, &mut buf).unwrap();
        assert!(buf.is_empty());
    }

    #[test]
    fn csv_and_jsonl_agree() {
        let dir = tempfile::tempdir().unwrap();
        let (c, j) = (dir.path().join("a.csv"), dir.path().join("a.jsonl"));
        write_rows(&rows(), Format::Csv, &c).unwrap();
        write_rows(&rows(), Format::Jsonl, &j).unwrap();
        let from_csv: Vec<StepRow> = read_csv(&c).unwrap();
        let from_json: Vec<StepRow> = std::fs::read_to_string(&j)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(from_csv, rows());
        assert_eq!(from_json, rows());
    }

    #[test]
    fn bad_path_is_io_error() {
        let err = write_rows(&rows(), Format::Csv, Path::new("/nonexistent/dir/x.csv")).unwrap_err();
        assert!(matches!(err, EmitError::Io { .. }));
    }

    #[test]
    fn format_parse() {
        assert_eq!("csv".parse::<Format>(), Ok(Format::Csv));
        assert_eq!("jsonl".parse::<Format>(), Ok(Format::Jsonl));
        assert!("xml".parse::<Format>().is_err());
    }
}
