//! Aging indicator time series and the `timestamp_s,indicator,value` CSV.
//!
//! Indicator names follow a `kind:subject` convention: `launch_time:<activity>`
//! (milliseconds), `pss:<process>` (bytes), plus the unqualified `free_mem`
//! and `cache_mem` (bytes).

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IndicatorError {
    #[error("{name}: timestamp {next} does not follow {previous}")]
    NonIncreasingTimestamp {
        name: String,
        previous: f64,
        next: f64,
    },
    #[error("{name}: non-finite sample at {timestamp}")]
    NonFinite { name: String, timestamp: f64 },
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Direction in which an indicator's movement signals aging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degrades {
    Up,
    Down,
}

/// Kind prefix of an indicator name (`launch_time` for `launch_time:foo`).
pub fn indicator_kind(name: &str) -> &str {
    name.split_once(':').map_or(name, |(kind, _)| kind)
}

/// Default degradation direction: free and cache memory shrink as the
/// system ages, everything else grows.
pub fn default_degradation(name: &str) -> Degrades {
    match indicator_kind(name) {
        "free_mem" | "cache_mem" => Degrades::Down,
        _ => Degrades::Up,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSeries {
    name: String,
    samples: Vec<(f64, f64)>,
}

impl IndicatorSeries {
    pub fn new(name: impl Into<String>) -> Self {
        IndicatorSeries {
            name: name.into(),
            samples: Vec::new(),
        }
    }

    pub fn from_samples(
        name: impl Into<String>,
        samples: impl IntoIterator<Item = (f64, f64)>,
    ) -> Result<Self, IndicatorError> {
        let mut series = IndicatorSeries::new(name);
        for (t, v) in samples {
            series.push(t, v)?;
        }
        Ok(series)
    }

    pub fn push(&mut self, timestamp: f64, value: f64) -> Result<(), IndicatorError> {
        if !timestamp.is_finite() || !value.is_finite() {
            return Err(IndicatorError::NonFinite {
                name: self.name.clone(),
                timestamp,
            });
        }
        if let Some(&(previous, _)) = self.samples.last() {
            if timestamp <= previous {
                return Err(IndicatorError::NonIncreasingTimestamp {
                    name: self.name.clone(),
                    previous,
                    next: timestamp,
                });
            }
        }
        self.samples.push((timestamp, value));
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.1)
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSample {
    pub timestamp_s: f64,
    pub indicator: String,
    pub value: f64,
}

/// Indicator series keyed by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IndicatorSet {
    series: BTreeMap<String, IndicatorSeries>,
}

impl IndicatorSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: &str, timestamp: f64, value: f64) -> Result<(), IndicatorError> {
        self.series
            .entry(name.to_string())
            .or_insert_with(|| IndicatorSeries::new(name))
            .push(timestamp, value)
    }

    pub fn insert(&mut self, series: IndicatorSeries) {
        self.series.insert(series.name.clone(), series);
    }

    pub fn get(&self, name: &str) -> Option<&IndicatorSeries> {
        self.series.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &IndicatorSeries> {
        self.series.values()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(String::as_str)
    }

    /// Series whose kind prefix is `kind`.
    pub fn of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a IndicatorSeries> + 'a {
        self.series
            .values()
            .filter(move |s| indicator_kind(&s.name) == kind)
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }
}

pub fn read_indicator_csv<R: Read>(reader: R) -> Result<IndicatorSet, IndicatorError> {
    let mut csv_reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv_reader.headers().map_err(|e| csv_error(&e, 1))?.clone();
    let expected = ["timestamp_s", "indicator", "value"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(IndicatorError::Csv {
            line: 1,
            message: format!("expected header {}", expected.join(",")),
        });
    }
    let mut set = IndicatorSet::new();
    for row in csv_reader.deserialize::<IndicatorSample>() {
        let row = row.map_err(|e| csv_error(&e, 0))?;
        set.push(&row.indicator, row.timestamp_s, row.value)?;
    }
    Ok(set)
}

fn csv_error(e: &csv::Error, fallback_line: u64) -> IndicatorError {
    IndicatorError::Csv {
        line: e.position().map_or(fallback_line, |p| p.line()),
        message: e.to_string(),
    }
}

pub fn write_indicator_csv<W: Write>(
    writer: W,
    rows: &[IndicatorSample],
) -> Result<(), IndicatorError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp_s", "indicator", "value"])
        .map_err(|e| csv_error(&e, 0))?;
    for row in rows {
        w.write_record([
            row.timestamp_s.to_string(),
            row.indicator.clone(),
            row.value.to_string(),
        ])
        .map_err(|e| csv_error(&e, 0))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_and_directions() {
        assert_eq!(indicator_kind("launch_time:com.a.Main"), "launch_time");
        assert_eq!(indicator_kind("free_mem"), "free_mem");
        assert_eq!(default_degradation("pss:system_server"), Degrades::Up);
        assert_eq!(default_degradation("free_mem"), Degrades::Down);
    }

    #[test]
    fn series_rejects_non_increasing() {
        let mut s = IndicatorSeries::new("x");
        s.push(1.0, 0.0).unwrap();
        assert!(matches!(
            s.push(1.0, 2.0),
            Err(IndicatorError::NonIncreasingTimestamp { .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            IndicatorSample {
                timestamp_s: 0.0,
                indicator: "launch_time:a".into(),
                value: 412.5,
            },
            IndicatorSample {
                timestamp_s: 10.0,
                indicator: "pss:system_server".into(),
                value: 8.0e7,
            },
            IndicatorSample {
                timestamp_s: 20.0,
                indicator: "launch_time:a".into(),
                value: 413.25,
            },
        ];
        let mut buf = Vec::new();
        write_indicator_csv(&mut buf, &rows).unwrap();
        let set = read_indicator_csv(buf.as_slice()).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(
            set.get("launch_time:a").unwrap().samples(),
            &[(0.0, 412.5), (20.0, 413.25)]
        );
    }

    #[test]
    fn malformed_csv_reports_line() {
        let text = "timestamp_s,indicator,value\n0,a,1\n5,a,oops\n";
        match read_indicator_csv(text.as_bytes()) {
            Err(IndicatorError::Csv { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_header_rejected() {
        let text = "t,name,v\n0,a,1\n";
        assert!(matches!(
            read_indicator_csv(text.as_bytes()),
            Err(IndicatorError::Csv { line: 1, .. })
        ));
    }
}
