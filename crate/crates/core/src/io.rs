//! Observation files: CSV with a `position,accuracy` header, one observation
//! per row, positions strictly ascending.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Observation, ObservationSeries};

pub const OBSERVATION_HEADER: &str = "position,accuracy";

/// A parsed observation file. The field text of every row is kept so that
/// rendering a parsed file reproduces it byte for byte.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationFile {
    series: ObservationSeries,
    rows: Vec<(String, String)>,
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

impl ObservationFile {
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.strip_prefix('\u{feff}').unwrap_or(text);
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
        match lines.next() {
            Some((_, header)) if header.trim() == OBSERVATION_HEADER => {}
            Some((n, header)) => {
                return Err(parse_error(n, format!("expected header `{OBSERVATION_HEADER}`, found `{header}`")))
            }
            None => return Err(parse_error(1, "empty file")),
        }
        let mut points = Vec::new();
        let mut rows = Vec::new();
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let (Some(pos), Some(acc), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(parse_error(n, "expected two fields"));
            };
            let position: u64 = pos
                .trim()
                .parse()
                .map_err(|_| parse_error(n, format!("invalid position `{pos}`")))?;
            let accuracy: f64 = acc
                .trim()
                .parse()
                .map_err(|_| parse_error(n, format!("invalid accuracy `{acc}`")))?;
            if position == 0 {
                return Err(parse_error(n, "position must be positive"));
            }
            if !(accuracy > 0.0 && accuracy <= 100.0) {
                return Err(parse_error(n, format!("accuracy {accuracy} outside (0, 100]")));
            }
            if let Some(last) = points.last().map(|p: &Observation| p.position) {
                if position == last {
                    return Err(parse_error(n, format!("duplicate position {position}")));
                }
                if position < last {
                    return Err(parse_error(n, format!("position {position} follows {last}")));
                }
            }
            points.push(Observation { position, accuracy });
            rows.push((pos.to_string(), acc.to_string()));
        }
        if points.is_empty() {
            return Err(parse_error(1, "no observations"));
        }
        Ok(Self {
            series: ObservationSeries::from_points(points)?,
            rows,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Canonical rendering: integers for positions, shortest round-trip
    /// decimals for accuracies.
    pub fn from_series(series: &ObservationSeries) -> Self {
        let rows = series
            .points()
            .iter()
            .map(|p| (p.position.to_string(), p.accuracy.to_string()))
            .collect();
        Self {
            series: series.clone(),
            rows,
        }
    }

    pub fn series(&self) -> &ObservationSeries {
        &self.series
    }

    pub fn into_series(self) -> ObservationSeries {
        self.series
    }

    pub fn render(&self) -> String {
        let mut out = String::with_capacity(32 * (self.rows.len() + 1));
        out.push_str(OBSERVATION_HEADER);
        out.push('\n');
        for (pos, acc) in &self.rows {
            out.push_str(pos);
            out.push(',');
            out.push_str(acc);
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.render())?;
        Ok(())
    }
}

pub fn read_observations(path: impl AsRef<Path>) -> Result<ObservationSeries> {
    ObservationFile::read(path).map(ObservationFile::into_series)
}

pub fn write_observations(series: &ObservationSeries, path: impl AsRef<Path>) -> Result<()> {
    ObservationFile::from_series(series).write(path)
}
