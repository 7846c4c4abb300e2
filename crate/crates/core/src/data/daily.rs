use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::cells::TimedSequence;
use crate::error::{Error, Result};
use crate::numcore::Vector;

/// Known daily CSV layouts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schema {
    /// `date,meantemp,humidity,wind_speed,meanpressure`.
    Climate,
    /// `Date,Open,High,Low,Close,Volume,Name`; only Open, High and Low are kept.
    Stock,
}

impl Schema {
    pub fn date_column(self) -> &'static str {
        match self {
            Schema::Climate => "date",
            Schema::Stock => "Date",
        }
    }

    pub fn feature_columns(self) -> &'static [&'static str] {
        match self {
            Schema::Climate => &["meantemp", "humidity", "wind_speed", "meanpressure"],
            Schema::Stock => &["Open", "High", "Low"],
        }
    }

    fn required(self) -> Vec<&'static str> {
        let mut cols = vec![self.date_column()];
        cols.extend_from_slice(self.feature_columns());
        cols
    }

    pub fn name(self) -> &'static str {
        match self {
            Schema::Climate => "climate",
            Schema::Stock => "stock",
        }
    }
}

impl FromStr for Schema {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "climate" => Ok(Schema::Climate),
            "stock" => Ok(Schema::Stock),
            other => Err(format!(
                "unknown schema `{other}` (expected climate or stock)"
            )),
        }
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A daily multivariate series with time measured in days.
#[derive(Clone, Debug, PartialEq)]
pub struct DailySeries {
    pub dates: Vec<NaiveDate>,
    /// Days since `origin`.
    pub times: Vec<f64>,
    pub values: Vec<Vector>,
    pub feature_names: Vec<String>,
    pub origin: NaiveDate,
}

impl DailySeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_sequence(&self) -> Result<TimedSequence> {
        TimedSequence::new(self.times.clone(), self.values.clone())
    }

    /// Re-expresses the times as days since `origin`.
    pub fn rebased(&self, origin: NaiveDate) -> DailySeries {
        DailySeries {
            times: self
                .dates
                .iter()
                .map(|d| (*d - origin).num_days() as f64)
                .collect(),
            origin,
            ..self.clone()
        }
    }

    /// Chronological split: the first `round(fraction · len)` points and the rest.
    pub fn split(&self, fraction: f64) -> Result<(DailySeries, DailySeries)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::invalid(format!(
                "split fraction must be in (0, 1), got {fraction}"
            )));
        }
        let cut = (fraction * self.len() as f64).round() as usize;
        let part = |r: std::ops::Range<usize>| DailySeries {
            dates: self.dates[r.clone()].to_vec(),
            times: self.times[r.clone()].to_vec(),
            values: self.values[r].to_vec(),
            feature_names: self.feature_names.clone(),
            origin: self.origin,
        };
        Ok((part(0..cut), part(cut..self.len())))
    }

    /// Appends the rows of `later` dated after this series' last day,
    /// expressed on this series' time axis. Returns how many overlapping
    /// rows were skipped.
    pub fn extend_with(&self, later: &DailySeries) -> (DailySeries, usize) {
        let last = self.dates.last().copied();
        let mut out = self.clone();
        let mut skipped = 0;
        for (d, v) in later.dates.iter().zip(&later.values) {
            if last.is_some_and(|l| *d <= l) {
                skipped += 1;
                continue;
            }
            out.dates.push(*d);
            out.times.push((*d - self.origin).num_days() as f64);
            out.values.push(v.clone());
        }
        (out, skipped)
    }
}

fn find_columns(headers: &csv::StringRecord, schema: Schema) -> Result<Vec<usize>> {
    let found: Vec<&str> = headers.iter().map(str::trim).collect();
    let required = schema.required();
    let positions: Vec<Option<usize>> = required
        .iter()
        .map(|c| found.iter().position(|h| h == c))
        .collect();
    if positions.iter().any(Option::is_none) {
        return Err(Error::Schema {
            expected: required.join(","),
            found: found.join(","),
        });
    }
    Ok(positions.into_iter().flatten().collect())
}

/// Parses a daily CSV from any reader. With `ticker`, stock rows whose
/// `Name` differs are skipped.
pub fn parse_csv_daily<R: Read>(
    reader: R,
    schema: Schema,
    ticker: Option<&str>,
) -> Result<DailySeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    let cols = find_columns(&headers, schema)?;
    let name_col = headers.iter().position(|h| h.trim() == "Name");
    if ticker.is_some() && (schema != Schema::Stock || name_col.is_none()) {
        return Err(Error::invalid(
            "a ticker filter needs a stock file with a Name column",
        ));
    }

    let mut dates = Vec::new();
    let mut values = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let line = rdr.position().line() as usize;
        let more = rdr.read_record(&mut record).map_err(|e| Error::Parse {
            line: e.position().map_or(line, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        if !more {
            break;
        }
        let line = record.position().map_or(line, |p| p.line() as usize);
        if let (Some(want), Some(c)) = (ticker, name_col) {
            if record.get(c).map(str::trim) != Some(want) {
                continue;
            }
        }
        let field = |i: usize| record.get(cols[i]).map(str::trim).unwrap_or("");
        let date_str = field(0);
        let date = NaiveDate::parse_from_str(date_str, "%Y-%m-%d").map_err(|e| Error::Parse {
            line,
            msg: format!("bad date `{date_str}`: {e}"),
        })?;
        let mut row = Vec::with_capacity(cols.len() - 1);
        for (k, name) in schema.feature_columns().iter().enumerate() {
            let raw = field(k + 1);
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("column `{name}`: cannot parse `{raw}` as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    msg: format!("column `{name}`: non-finite value `{raw}`"),
                });
            }
            row.push(v);
        }
        if let Some(prev) = dates.last() {
            if date <= *prev {
                return Err(Error::Parse {
                    line,
                    msg: format!(
                        "date {date} does not follow {prev}; rows must be strictly chronological"
                    ),
                });
            }
        }
        dates.push(date);
        values.push(Vector::from(row));
    }
    let origin = *dates
        .first()
        .ok_or_else(|| Error::invalid("CSV contains no data rows"))?;
    Ok(DailySeries {
        times: dates
            .iter()
            .map(|d| (*d - origin).num_days() as f64)
            .collect(),
        dates,
        values,
        feature_names: schema
            .feature_columns()
            .iter()
            .map(|s| s.to_string())
            .collect(),
        origin,
    })
}

pub fn load_csv_daily(
    path: impl AsRef<Path>,
    schema: Schema,
    ticker: Option<&str>,
) -> Result<DailySeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv_daily(std::io::BufReader::new(file), schema, ticker)
}
