//! Series ingestion, the NASDAQ increment transform and the chain dump.
//!
//! The two real datasets are not bundled. Expected sizes are
//! [`DANISH_ROWS`] losses and [`NASDAQ_PRICES`] closing prices (so
//! `NASDAQ_PRICES - 1` increments); a file whose name mentions either
//! dataset but has a different row count is accepted with a warning.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gpdthresh_core::{OrderedSample, PosteriorSamples};

use crate::{Error, Result};

pub const DANISH_ROWS: usize = 2167;
pub const NASDAQ_PRICES: usize = 4394;

/// Which column of a delimited file holds the series.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnSelector {
    /// Zero-based position.
    Index(usize),
    /// Header name; requires a header row.
    Name(String),
}

impl Default for ColumnSelector {
    fn default() -> Self {
        ColumnSelector::Index(0)
    }
}

impl FromStr for ColumnSelector {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => ColumnSelector::Index(i),
            Err(_) => ColumnSelector::Name(s.to_string()),
        })
    }
}

impl fmt::Display for ColumnSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnSelector::Index(i) => write!(f, "{i}"),
            ColumnSelector::Name(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeriesFile {
    pub path: PathBuf,
    pub column: ColumnSelector,
    pub delimiter: u8,
    pub has_header: bool,
}

impl SeriesFile {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into(), column: ColumnSelector::default(), delimiter: b',', has_header: false }
    }
}

/// Reads the selected column in file order. Blank lines are skipped; both
/// LF and CRLF line endings are accepted.
pub fn read_column(file: &SeriesFile) -> Result<Vec<f64>> {
    let path = &file.path;
    let handle = File::open(path).map_err(|source| Error::Read { path: path.clone(), source })?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(file.has_header)
        .delimiter(file.delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(handle));

    let col = match &file.column {
        ColumnSelector::Index(i) => *i,
        ColumnSelector::Name(name) => {
            if !file.has_header {
                return Err(Error::Usage(format!(
                    "column {name:?} selected by name but the file is read without a header"
                )));
            }
            let headers = rdr.headers().map_err(|e| csv_error(path, e))?;
            headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
                path: path.clone(),
                line: 1,
                msg: format!("no column named {name:?}"),
            })?
        }
    };

    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let field = rec.get(col).ok_or_else(|| Error::Parse {
            path: path.clone(),
            line,
            msg: format!("missing column {col}"),
        })?;
        let v: f64 = field.parse().map_err(|_| Error::Parse {
            path: path.clone(),
            line,
            msg: format!("not a number: {field:?}"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse { path: path.clone(), line, msg: format!("non-finite value {field:?}") });
        }
        out.push(v);
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Read { path: path.to_path_buf(), source },
        kind => Error::Parse { path: path.to_path_buf(), line, msg: format!("{kind:?}") },
    }
}

/// Reads, validates (at least three rows, all strictly positive) and sorts a
/// series.
pub fn read_series(file: &SeriesFile) -> Result<OrderedSample> {
    let values = read_column(file)?;
    let bad: Vec<String> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v <= 0.0)
        .map(|(i, v)| format!("row {}: {v}", i + 1))
        .collect();
    if !bad.is_empty() {
        let shown = bad.iter().take(10).cloned().collect::<Vec<_>>().join(", ");
        let more = if bad.len() > 10 { format!(" (and {} more)", bad.len() - 10) } else { String::new() };
        return Err(Error::Data(format!(
            "{}: {} non-positive value(s), the model needs x > 0: {shown}{more}",
            file.path.display(),
            bad.len()
        )));
    }
    if values.len() < 3 {
        return Err(Error::Data(format!(
            "{}: need at least 3 observations, found {}",
            file.path.display(),
            values.len()
        )));
    }
    Ok(OrderedSample::new(values)?)
}

/// Warning text when a file that looks like one of the reference datasets
/// has an unexpected number of rows.
pub fn row_count_warning(path: &Path, rows: usize) -> Option<String> {
    let name = path.file_name()?.to_string_lossy().to_lowercase();
    let (label, expected) = if name.contains("danish") {
        ("Danish fire losses", DANISH_ROWS)
    } else if name.contains("nasdaq") {
        ("NASDAQ", if rows + 1 == NASDAQ_PRICES { rows } else { NASDAQ_PRICES })
    } else {
        return None;
    };
    (rows != expected).then(|| {
        format!("{}: {rows} rows, the {label} dataset has {expected}", path.display())
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Increments {
    pub values: Vec<f64>,
    /// Positions (0-based, into `values`) of exact zeros. Zeros are ties in
    /// the data and get no mass under the KL threshold prior.
    pub zeros: Vec<usize>,
}

/// `z_t = |r_t / r_{t-1} - 1| * 100` for consecutive prices.
pub fn nasdaq_increments(prices: &[f64]) -> Result<Increments> {
    if prices.len() < 2 {
        return Err(Error::Data(format!("need at least 2 prices, found {}", prices.len())));
    }
    if let Some((i, p)) = prices.iter().enumerate().find(|(_, p)| !(**p > 0.0 && p.is_finite())) {
        return Err(Error::Data(format!("price {} is not positive: {p}", i + 1)));
    }
    let values: Vec<f64> = prices.windows(2).map(|w| (w[1] / w[0] - 1.0).abs() * 100.0).collect();
    let zeros = values.iter().enumerate().filter(|(_, z)| **z == 0.0).map(|(i, _)| i).collect();
    Ok(Increments { values, zeros })
}

/// Writes one value per line, 17 significant digits.
pub fn write_values(values: &[f64], path: &Path) -> Result<()> {
    write_with(path, |w| {
        for v in values {
            writeln!(w, "{}", fmt_f64(*v))?;
        }
        Ok(())
    })
}

/// Fixed float formatting used by every artifact: 17 significant digits in
/// lowercase scientific notation, which round-trips exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn write_with(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let wrap = |source| Error::Write { path: path.to_path_buf(), source };
    let mut w = BufWriter::new(File::create(path).map_err(wrap)?);
    body(&mut w).map_err(wrap)?;
    w.flush().map_err(wrap)
}

/// Chain dump: a header row, then one row per stored iteration. Columns are
/// `iteration`, the scalar parameters, the threshold index `k` and the
/// log-posterior.
pub fn write_chain(samples: &PosteriorSamples, path: &Path) -> Result<()> {
    let r = samples.config.components;
    let mut header = vec!["iteration".to_string()];
    header.extend(PosteriorSamples::parameter_names(r));
    header.extend(["k".to_string(), "log_posterior".to_string()]);
    let first = samples.config.burn_in;
    write_with(path, |w| {
        writeln!(w, "{}", header.join(","))?;
        for (i, d) in samples.draws.iter().enumerate() {
            let mut row = vec![(first + i).to_string()];
            let comps = d.state.bulk.components();
            row.extend(comps.iter().map(|c| fmt_f64(c.mean())));
            row.extend(comps.iter().map(|c| fmt_f64(c.shape())));
            row.extend(d.state.bulk.weights().iter().map(|v| fmt_f64(*v)));
            row.extend([d.threshold, d.state.xi, d.state.sigma].map(fmt_f64));
            row.push(d.state.k.to_string());
            row.push(fmt_f64(d.log_posterior));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl ChainTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn read_chain(path: &Path) -> Result<ChainTable> {
    let handle = File::open(path).map_err(|source| Error::Read { path: path.to_path_buf(), source })?;
    let mut lines = BufReader::new(handle).lines();
    let read_err = |source| Error::Read { path: path.to_path_buf(), source };
    let header = match lines.next() {
        Some(l) => l.map_err(read_err)?,
        None => return Err(Error::Format { path: path.to_path_buf(), msg: "missing header".into() }),
    };
    let columns: Vec<String> = header.trim_end().split(',').map(String::from).collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(read_err)?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse { path: path.to_path_buf(), line: i as u64 + 2, msg: e.to_string() })?;
        if row.len() != columns.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i as u64 + 2,
                msg: format!("expected {} fields, found {}", columns.len(), row.len()),
            });
        }
        rows.push(row);
    }
    Ok(ChainTable { columns, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn increments_by_hand() {
        let z = nasdaq_increments(&[100.0, 102.0, 101.0]).unwrap();
        assert_eq!(z.values.len(), 2);
        assert!((z.values[0] - 2.0).abs() < 1e-12);
        assert!((z.values[1] - 100.0 / 102.0).abs() < 1e-12);
        assert!(z.zeros.is_empty());

        let flat = nasdaq_increments(&[100.0, 100.0]).unwrap();
        assert_eq!(flat.values, vec![0.0]);
        assert_eq!(flat.zeros, vec![0]);
    }

    #[test]
    fn increments_reject_bad_prices() {
        assert!(nasdaq_increments(&[1.0]).is_err());
        assert!(nasdaq_increments(&[1.0, 0.0]).is_err());
        assert!(nasdaq_increments(&[1.0, -2.0, 3.0]).is_err());
    }

    #[test]
    fn increments_scale_free() {
        let p = [13.0, 13.5, 12.9, 14.2, 14.2, 11.0];
        let a = nasdaq_increments(&p).unwrap();
        let b = nasdaq_increments(&p.map(|x| x * 37.5)).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn number_format() {
        assert_eq!(fmt_f64(2.0), "2.0000000000000000e0");
        assert_eq!(fmt_f64(-0.001), "-1.0000000000000000e-3");
        for v in [0.1, 1.0 / 3.0, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn row_count_warnings() {
        assert!(row_count_warning(Path::new("danish.csv"), DANISH_ROWS).is_none());
        assert!(row_count_warning(Path::new("data/Danish.csv"), 2000).is_some());
        assert!(row_count_warning(Path::new("nasdaq.csv"), NASDAQ_PRICES).is_none());
        assert!(row_count_warning(Path::new("nasdaq_inc.csv"), NASDAQ_PRICES - 1).is_none());
        assert!(row_count_warning(Path::new("nasdaq.csv"), 10).is_some());
        assert!(row_count_warning(Path::new("other.csv"), 10).is_none());
    }
}
