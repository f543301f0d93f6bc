//! Price tables, return matrices and the radius-scaling rule.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;

use crate::domain::{ReturnKind, ReturnsMatrix};
use crate::error::{Error, Result};

const DATE_FORMAT: &str = "%Y-%m-%d";

/// Supported on-disk layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriceFormat {
    /// Header `date,<label>,...`; one row per period.
    #[default]
    WideCsv,
}

/// `T + 1` strictly increasing dates with positive prices for `n` assets.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    dates: Vec<NaiveDate>,
    /// Row-major, `(T + 1) × n`.
    prices: Vec<f64>,
    labels: Vec<String>,
}

impl PriceTable {
    pub fn new(dates: Vec<NaiveDate>, prices: Vec<f64>, labels: Vec<String>) -> Result<Self> {
        let n = labels.len();
        if n == 0 || dates.is_empty() {
            return Err(Error::InsufficientData("price table needs at least one row and one asset".into()));
        }
        if prices.len() != dates.len() * n {
            return Err(Error::DimensionMismatch {
                what: "price cells",
                expected: dates.len() * n,
                found: prices.len(),
            });
        }
        if let Some(k) = dates.windows(2).position(|d| d[1] <= d[0]) {
            return Err(Error::NonMonotoneDates {
                path: PathBuf::new(),
                line: k as u64 + 2,
            });
        }
        if let Some(k) = prices.iter().position(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::NonPositivePrice {
                path: PathBuf::new(),
                line: (k / n) as u64 + 2,
                column: labels[k % n].clone(),
                value: prices[k],
            });
        }
        Ok(Self { dates, prices, labels })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_assets(&self) -> usize {
        self.labels.len()
    }

    /// Number of return periods `T` (rows minus one).
    pub fn n_periods(&self) -> usize {
        self.dates.len() - 1
    }

    pub fn price(&self, t: usize, i: usize) -> f64 {
        self.prices[t * self.labels.len() + i]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let n = self.labels.len();
        &self.prices[t * n..(t + 1) * n]
    }

    /// Rows `start..end` (price rows, inclusive of both endpoints' prices).
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.dates.len() {
            return Err(Error::InsufficientData(format!(
                "row range {start}..{end} outside 0..{}",
                self.dates.len()
            )));
        }
        let n = self.labels.len();
        Ok(Self {
            dates: self.dates[start..end].to_vec(),
            prices: self.prices[start * n..end * n].to_vec(),
            labels: self.labels.clone(),
        })
    }

    pub fn select_assets(&self, columns: &[usize]) -> Result<Self> {
        let n = self.labels.len();
        if columns.is_empty() || columns.iter().any(|&c| c >= n) {
            return Err(Error::DimensionMismatch {
                what: "asset selection",
                expected: n,
                found: columns.iter().copied().max().map_or(0, |c| c + 1),
            });
        }
        let prices = (0..self.dates.len())
            .flat_map(|t| columns.iter().map(move |&c| self.price(t, c)))
            .collect();
        Ok(Self {
            dates: self.dates.clone(),
            prices,
            labels: columns.iter().map(|&c| self.labels[c].clone()).collect(),
        })
    }

    /// Writes the table in wide CSV form.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| Error::Io {
            path: PathBuf::from("<writer>"),
            source: e.into(),
        };
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header).map_err(io)?;
        for (t, d) in self.dates.iter().enumerate() {
            let mut rec = vec![d.format(DATE_FORMAT).to_string()];
            rec.extend(self.row(t).iter().map(|p| format!("{p}")));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: PathBuf::from("<writer>"),
            source: e,
        })
    }
}

pub fn load_prices(path: &Path, format: PriceFormat) -> Result<PriceTable> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
    parse_prices(&text, path, format)
}

/// Parses wide CSV text; `path` is only used in error locations.
pub fn parse_prices(text: &str, path: &Path, format: PriceFormat) -> Result<PriceTable> {
    let PriceFormat::WideCsv = format;
    let parse_err = |line: u64, message: String| Error::ParseError {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.get(0).map(str::to_ascii_lowercase).as_deref() != Some("date") {
        return Err(parse_err(1, "first header must be `date`".into()));
    }
    let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if labels.is_empty() {
        return Err(parse_err(1, "no asset columns".into()));
    }
    if let Some(bad) = labels.iter().position(|l| l.is_empty()) {
        return Err(parse_err(1, format!("empty asset label in column {}", bad + 2)));
    }
    let n = labels.len();
    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut prices = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != n + 1 {
            if record.len() < n + 1 && record.iter().all(|c| !c.is_empty()) {
                return Err(Error::MissingValue {
                    path: path.to_path_buf(),
                    line,
                    column: labels[record.len() - 1].clone(),
                });
            }
            return Err(parse_err(line, format!("expected {} fields, found {}", n + 1, record.len())));
        }
        let date = NaiveDate::parse_from_str(&record[0], DATE_FORMAT)
            .map_err(|e| parse_err(line, format!("bad date `{}`: {e}", &record[0])))?;
        if dates.last().is_some_and(|prev| date <= *prev) {
            return Err(Error::NonMonotoneDates {
                path: path.to_path_buf(),
                line,
            });
        }
        dates.push(date);
        for (c, cell) in record.iter().enumerate().skip(1) {
            if cell.is_empty() {
                return Err(Error::MissingValue {
                    path: path.to_path_buf(),
                    line,
                    column: labels[c - 1].clone(),
                });
            }
            let value: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("column `{}`: `{cell}` is not a number", labels[c - 1])))?;
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::NonPositivePrice {
                    path: path.to_path_buf(),
                    line,
                    column: labels[c - 1].clone(),
                    value,
                });
            }
            prices.push(value);
        }
    }
    if dates.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }
    Ok(PriceTable { dates, prices, labels })
}

fn returns_with(pt: &PriceTable, kind: ReturnKind, f: impl Fn(f64) -> f64) -> Result<ReturnsMatrix> {
    let t_count = pt.n_periods();
    if t_count < 1 {
        return Err(Error::InsufficientData("at least two price rows are needed".into()));
    }
    let n = pt.n_assets();
    let mut values = Vec::with_capacity(t_count * n);
    for t in 1..=t_count {
        for i in 0..n {
            values.push(f(pt.price(t, i) / pt.price(t - 1, i)));
        }
    }
    ReturnsMatrix::new(values, t_count, n, kind, pt.labels.clone())
}

/// `ln(S_t / S_{t−1})` per asset and period.
pub fn log_returns(pt: &PriceTable) -> Result<ReturnsMatrix> {
    returns_with(pt, ReturnKind::Log, f64::ln)
}

/// `S_t / S_{t−1} − 1` per asset and period.
pub fn simple_returns(pt: &PriceTable) -> Result<ReturnsMatrix> {
    returns_with(pt, ReturnKind::Simple, |x| x - 1.0)
}

/// Radius `ε = δ·R̄`, with `R̄` the mean absolute log-return.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsilonRule {
    pub delta_scale: f64,
    pub rbar: f64,
    pub epsilon: f64,
}

pub fn epsilon_from_delta(samples: &ReturnsMatrix, delta_scale: f64) -> Result<EpsilonRule> {
    samples.require_kind(ReturnKind::Log)?;
    if !(delta_scale >= 0.0) || !delta_scale.is_finite() {
        return Err(Error::InvalidBall(format!("delta must be finite and non-negative, got {delta_scale}")));
    }
    let values = samples.values();
    let rbar = values.iter().map(|x| x.abs()).sum::<f64>() / values.len() as f64;
    if rbar == 0.0 && delta_scale > 0.0 {
        return Err(Error::DegenerateData(
            "all log-returns are zero, so the radius scale is undefined".into(),
        ));
    }
    Ok(EpsilonRule {
        delta_scale,
        rbar,
        epsilon: delta_scale * rbar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(text: &str) -> Result<PriceTable> {
        parse_prices(text, Path::new("p.csv"), PriceFormat::WideCsv)
    }

    #[test]
    fn minimal_file() {
        let pt = table("date,A\n2020-01-01,100\n2020-01-02,110\n").unwrap();
        assert_eq!(pt.n_periods(), 1);
        let r = log_returns(&pt).unwrap();
        assert!((r.get(0, 0) - 1.1f64.ln()).abs() < 1e-15);
        assert!((simple_returns(&pt).unwrap().get(0, 0) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn missing_cell_is_located() {
        let err = table("date,A,B\n2020-01-01,100,5\n2020-01-02,,6\n").unwrap_err();
        match err {
            Error::MissingValue { line, column, .. } => assert_eq!((line, column.as_str()), (3, "A")),
            other => panic!("{other:?}"),
        }
        let err = table("date,A,B\n2020-01-01,100,5\n2020-01-02,101\n").unwrap_err();
        assert!(matches!(&err, Error::MissingValue { line: 3, column, .. } if column == "B"), "{err:?}");
    }

    #[test]
    fn unsorted_dates() {
        let err = table("date,A\n2020-01-02,100\n2020-01-01,110\n").unwrap_err();
        assert!(matches!(err, Error::NonMonotoneDates { line: 3, .. }));
    }

    #[test]
    fn bad_values() {
        assert!(matches!(
            table("date,A\n2020-01-01,0\n").unwrap_err(),
            Error::NonPositivePrice { line: 2, .. }
        ));
        assert!(matches!(table("date,A\n2020-01-01,abc\n").unwrap_err(), Error::ParseError { line: 2, .. }));
        assert!(matches!(table("day,A\n2020-01-01,1\n").unwrap_err(), Error::ParseError { line: 1, .. }));
        assert!(matches!(table("date,A\n2020-13-01,1\n").unwrap_err(), Error::ParseError { .. }));
    }

    #[test]
    fn returns_examples() {
        let pt = table("date,A\n2020-01-01,100\n2020-01-02,110\n2020-01-03,99\n").unwrap();
        let lr = log_returns(&pt).unwrap();
        assert!((lr.get(1, 0) - 0.9f64.ln()).abs() < 1e-15);
        let sr = simple_returns(&pt).unwrap();
        assert!((sr.get(1, 0) + 0.1).abs() < 1e-12);
        let flat = table("date,A\n2020-01-01,5\n2020-01-02,5\n").unwrap();
        assert_eq!(log_returns(&flat).unwrap().get(0, 0), 0.0);
        let single = table("date,A\n2020-01-01,5\n").unwrap();
        assert!(matches!(log_returns(&single), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn epsilon_rule() {
        let m = ReturnsMatrix::from_rows(&[vec![0.01, -0.03], vec![-0.01, 0.03]], ReturnKind::Log).unwrap();
        let e = epsilon_from_delta(&m, 0.1).unwrap();
        assert!((e.rbar - 0.02).abs() < 1e-15);
        assert!((e.epsilon - 0.002).abs() < 1e-15);
        assert_eq!(epsilon_from_delta(&m, 0.0).unwrap().epsilon, 0.0);
        let zero = ReturnsMatrix::from_rows(&[vec![0.0]], ReturnKind::Log).unwrap();
        assert!(matches!(epsilon_from_delta(&zero, 0.1), Err(Error::DegenerateData(_))));
        assert_eq!(epsilon_from_delta(&zero, 0.0).unwrap().epsilon, 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let pt = table("date,A,B\n2020-01-01,100,5.5\n2020-01-02,110,6\n").unwrap();
        let mut buf = Vec::new();
        pt.write_csv(&mut buf).unwrap();
        let back = table(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, pt);
    }
}
