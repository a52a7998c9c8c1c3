//! The estimator's data input: n triples (Y, X, W) of an outcome and two
//! noisy measures of the same latent regressor.

use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a sample came from. Recorded alongside derived artifacts so runs
/// stay traceable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Synthetic,
    PanelDerived,
}

/// Parallel arrays Y, X, W of equal length with all entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    y: Vec<f64>,
    x: Vec<f64>,
    w: Vec<f64>,
    provenance: Provenance,
}

impl Sample {
    pub fn new(y: Vec<f64>, x: Vec<f64>, w: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if y.len() != x.len() || y.len() != w.len() {
            return Err(Error::InvalidInput(format!(
                "Y, X, W must have equal lengths, got {}, {}, {}",
                y.len(),
                x.len(),
                w.len()
            )));
        }
        if y.is_empty() {
            return Err(Error::InvalidInput("sample is empty".into()));
        }
        for (name, col) in [("Y", &y), ("X", &x), ("W", &w)] {
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "non-finite value in column {name} at row {i}"
                )));
            }
        }
        Ok(Sample { y, x, w, provenance })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Read a 3-column CSV with header `Y,X,W` (any column order, matched by
    /// name, case-insensitive). Lines starting with `#` are ignored so that
    /// files carrying an embedded configuration re-parse cleanly.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref()).map_err(|e| {
            Error::InvalidInput(format!("cannot open {}: {e}", path.as_ref().display()))
        })?;
        Self::read_csv_from(file)
    }

    pub fn read_csv_from(reader: impl io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::Schema(format!("missing column {name} in sample CSV")))
        };
        let (iy, ix, iw) = (col("Y")?, col("X")?, col("W")?);
        let mut y = Vec::new();
        let mut x = Vec::new();
        let mut w = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize, name: &str| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::Schema(format!("row {row}: missing field {name}")))?
                    .parse::<f64>()
                    .map_err(|_| {
                        Error::InvalidInput(format!(
                            "row {row}: cannot parse {name} value {:?}",
                            rec.get(i).unwrap_or("")
                        ))
                    })
            };
            y.push(parse(iy, "Y")?);
            x.push(parse(ix, "X")?);
            w.push(parse(iw, "W")?);
        }
        Sample::new(y, x, w, Provenance::PanelDerived)
    }

    /// Write as `Y,X,W` CSV, optionally preceded by `# key = value` comment
    /// lines recording the configuration that produced the sample.
    pub fn write_csv(&self, mut writer: impl io::Write, comments: &[String]) -> Result<()> {
        for line in comments {
            writeln!(writer, "# {line}")?;
        }
        writeln!(writer, "Y,X,W")?;
        for j in 0..self.len() {
            writeln!(writer, "{},{},{}", self.y[j], self.x[j], self.w[j])?;
        }
        Ok(())
    }
}
