use std::io::Read;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// T×n daily log returns with asset names and the date closing each period.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsMatrix {
    pub assets: Vec<String>,
    pub dates: Vec<String>,
    pub values: DMatrix<f64>,
    /// price rows discarded because a cell was missing
    pub dropped_rows: usize,
}

impl ReturnsMatrix {
    pub fn new(assets: Vec<String>, dates: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if assets.len() != values.ncols() {
            return Err(Error::DimensionMismatch {
                expected: values.ncols(),
                found: assets.len(),
            });
        }
        if dates.len() != values.nrows() {
            return Err(Error::DimensionMismatch {
                expected: values.nrows(),
                found: dates.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("returns must be finite".into()));
        }
        Ok(ReturnsMatrix {
            assets,
            dates,
            values,
            dropped_rows: 0,
        })
    }

    /// Unnamed assets a1..an and dates 1..T, for synthetic data.
    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        let assets = (1..=values.ncols()).map(|i| format!("a{i}")).collect();
        let dates = (1..=values.nrows()).map(|i| i.to_string()).collect();
        Self::new(assets, dates, values)
    }

    pub fn observations(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }
}

fn parse_date(s: &str) -> Option<NaiveDateTime> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .or_else(|| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S").ok())
        .or_else(|| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S").ok())
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || ["na", "nan", "null"].iter().any(|m| cell.eq_ignore_ascii_case(m))
}

pub fn load_prices(path: impl AsRef<Path>) -> Result<ReturnsMatrix> {
    let file = std::fs::File::open(path)?;
    load_prices_from_reader(file)
}

/// Price CSV with header `date,<asset1>,...`; rows with any missing cell are dropped.
pub fn load_prices_from_reader<R: Read>(reader: R) -> Result<ReturnsMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
    if header.len() < 2 || !header[0].eq_ignore_ascii_case("date") {
        return Err(Error::Parse {
            line: 1,
            message: "header must be `date,<asset1>,...,<assetN>`".into(),
        });
    }
    let assets: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let n = assets.len();

    let mut dates = Vec::new();
    let mut prices: Vec<Vec<f64>> = Vec::new();
    let mut dropped = 0;
    let mut last_date: Option<NaiveDateTime> = None;
    for (idx, rec) in rdr.records().enumerate() {
        let fallback_line = idx + 2;
        let rec = rec.map_err(|e| csv_error(e, fallback_line))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(fallback_line);
        if rec.len() != n + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", n + 1, rec.len()),
            });
        }
        let date = parse_date(&rec[0]).ok_or_else(|| Error::Parse {
            line,
            message: format!("invalid ISO-8601 date `{}`", &rec[0]),
        })?;
        if let Some(prev) = last_date {
            if date <= prev {
                return Err(Error::Parse {
                    line,
                    message: "dates must be in ascending order".into(),
                });
            }
        }
        last_date = Some(date);
        if rec.iter().skip(1).any(is_missing) {
            dropped += 1;
            continue;
        }
        let mut row = Vec::with_capacity(n);
        for (j, cell) in rec.iter().skip(1).enumerate() {
            let p: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("invalid price `{cell}` for {}", assets[j]),
            })?;
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::NonPositivePrice {
                    line,
                    asset: assets[j].clone(),
                    price: p,
                });
            }
            row.push(p);
        }
        dates.push(rec[0].to_string());
        prices.push(row);
    }
    if prices.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 complete price rows, found {}",
            prices.len()
        )));
    }
    let t = prices.len() - 1;
    let values = DMatrix::from_fn(t, n, |i, j| (prices[i + 1][j] / prices[i][j]).ln());
    Ok(ReturnsMatrix {
        assets,
        dates: dates.split_off(1),
        values,
        dropped_rows: dropped,
    })
}

fn csv_error(e: csv::Error, fallback_line: usize) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(fallback_line);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssetSummary {
    pub asset: String,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Per-asset sample mean, std (T−1 denominator), min and max.
pub fn summarize(rm: &ReturnsMatrix) -> Result<Vec<AssetSummary>> {
    let t = rm.observations();
    if t < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 returns, found {t}")));
    }
    Ok(rm
        .values
        .column_iter()
        .zip(&rm.assets)
        .map(|(col, name)| {
            let mean = col.mean();
            let ss: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
            AssetSummary {
                asset: name.clone(),
                mean,
                std: (ss / (t - 1) as f64).sqrt(),
                min: col.min(),
                max: col.max(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(s: &str) -> Result<ReturnsMatrix> {
        load_prices_from_reader(s.as_bytes())
    }

    #[test]
    fn single_step_log_return() {
        let rm = load("date,A\n2020-01-01,100\n2020-01-02,110\n").unwrap();
        assert_eq!(rm.values.shape(), (1, 1));
        assert!((rm.values[(0, 0)] - 1.1f64.ln()).abs() < 1e-15);
        assert_eq!(rm.dates, vec!["2020-01-02"]);
    }

    #[test]
    fn constant_prices_zero_returns() {
        let rm = load("date,A,B\n2020-01-01,5,7\n2020-01-02,5,7\n2020-01-03,5,7\n").unwrap();
        assert!(rm.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn missing_cell_drops_row() {
        let rm = load("date,A,B\n2020-01-01,100,50\n2020-01-02,,51\n2020-01-03,102,52\n").unwrap();
        assert_eq!(rm.observations(), 1);
        assert_eq!(rm.dropped_rows, 1);
        assert!((rm.values[(0, 0)] - 1.02f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn parse_error_carries_line() {
        match load("date,A\n2020-01-01,100\n2020-01-02,abc\n2020-01-03,100\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match load("date,A\n2020-01-01,100\n2020-01-02,1,2\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match load("date,A\n2020-01-02,100\n2020-01-01,100\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(load("day,A\n2020-01-01,1\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn non_positive_price() {
        match load("date,A,B\n2020-01-01,100,1\n2020-01-02,100,0\n") {
            Err(Error::NonPositivePrice { line, asset, price }) => {
                assert_eq!((line, asset.as_str(), price), (3, "B", 0.0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn summary_statistics() {
        let rm = ReturnsMatrix::from_values(DMatrix::from_column_slice(2, 1, &[0.01, -0.01])).unwrap();
        let s = &summarize(&rm).unwrap()[0];
        assert_eq!((s.mean, s.min, s.max), (0.0, -0.01, 0.01));
        let rm = ReturnsMatrix::from_values(DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0])).unwrap();
        let s = &summarize(&rm).unwrap()[0];
        assert_eq!((s.mean, s.std), (2.0, 1.0));
        let rm = ReturnsMatrix::from_values(DMatrix::from_column_slice(1, 1, &[1.0])).unwrap();
        assert!(matches!(summarize(&rm), Err(Error::InsufficientData(_))));
    }
}
