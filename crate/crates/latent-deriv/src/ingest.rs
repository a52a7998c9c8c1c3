//! Construction of the estimator's inputs from four waves of panel data.
//!
//! With log income ι observed in waves (t−2, t−1, t, t+1) and log
//! consumption C in the middle two, the two noisy measures of the permanent
//! shock and the outcome are
//!
//! ```text
//! X = ι(t) − ι(t−2),   W = ι(t+1) − ι(t−1),   Y = C(t) − C(t−1).
//! ```
//!
//! Units with a missing or non-finite component are dropped and counted.
//! Differences are taken on raw log levels; no residualization on
//! demographics and no trimming is applied.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::{Provenance, Sample};
use crate::stats;

/// Column-name map for a four-wave panel CSV: the unit id column plus four
/// income and four consumption columns in wave order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelSchema {
    pub unit: String,
    pub income: [String; 4],
    pub consumption: [String; 4],
    /// Wave labels (e.g. years). Must be strictly increasing when numeric.
    pub waves: [String; 4],
}

impl PanelSchema {
    pub fn new(
        unit: impl Into<String>,
        income: [&str; 4],
        consumption: [&str; 4],
        waves: [&str; 4],
    ) -> Result<Self> {
        let schema = PanelSchema {
            unit: unit.into(),
            income: income.map(String::from),
            consumption: consumption.map(String::from),
            waves: waves.map(String::from),
        };
        schema.validate()?;
        Ok(schema)
    }

    fn validate(&self) -> Result<()> {
        let numeric: Vec<Option<f64>> = self.waves.iter().map(|w| w.parse().ok()).collect();
        if numeric.iter().all(|v| v.is_some()) {
            for k in 1..4 {
                if numeric[k] <= numeric[k - 1] {
                    return Err(Error::InvalidConfig(format!(
                        "wave labels must be strictly increasing, got {:?}",
                        self.waves
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One unit's cells; `None` marks a missing or unparseable value.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelUnit {
    pub id: String,
    pub income: [Option<f64>; 4],
    pub consumption: [Option<f64>; 4],
}

/// A typed four-wave panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelTable {
    pub waves: [String; 4],
    pub units: Vec<PanelUnit>,
}

/// Parse a panel CSV against the schema. Unparseable numeric cells become
/// missing; a mapped column that is absent or a duplicated unit id is an
/// error.
pub fn parse_panel_csv(path: impl AsRef<Path>, schema: &PanelSchema) -> Result<PanelTable> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| {
        Error::InvalidInput(format!("cannot open {}: {e}", path.as_ref().display()))
    })?;
    parse_panel_from(file, schema)
}

pub fn parse_panel_from(reader: impl std::io::Read, schema: &PanelSchema) -> Result<PanelTable> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column {name:?} in panel CSV")))
    };
    let unit_idx = col(&schema.unit)?;
    let mut income_idx = [0usize; 4];
    let mut cons_idx = [0usize; 4];
    for k in 0..4 {
        income_idx[k] = col(&schema.income[k])?;
        cons_idx[k] = col(&schema.consumption[k])?;
    }

    let mut units = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let id = rec.get(unit_idx).unwrap_or("").to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::Schema(format!("duplicate unit id {id:?}")));
        }
        let cell = |i: usize| -> Option<f64> {
            rec.get(i).and_then(|s| if s.is_empty() { None } else { s.parse().ok() })
        };
        units.push(PanelUnit {
            id,
            income: income_idx.map(cell),
            consumption: cons_idx.map(cell),
        });
    }
    Ok(PanelTable { waves: schema.waves.clone(), units })
}

/// Counts of retained and dropped units, with per-reason totals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropReport {
    pub input_units: usize,
    pub retained: usize,
    pub dropped: usize,
    pub reasons: BTreeMap<String, usize>,
}

/// Construct (Y, X, W) differences and drop incomplete units.
pub fn build_differences(panel: &PanelTable) -> Result<(Sample, DropReport)> {
    let mut y = Vec::new();
    let mut x = Vec::new();
    let mut w = Vec::new();
    let mut reasons: BTreeMap<String, usize> = BTreeMap::new();
    let drop = |reasons: &mut BTreeMap<String, usize>, why: &str| {
        *reasons.entry(why.to_string()).or_insert(0) += 1;
    };
    for unit in &panel.units {
        let inc = &unit.income;
        let con = &unit.consumption;
        let (xi, wi, yi) = match (inc[0], inc[2], inc[1], inc[3], con[1], con[2]) {
            (Some(i0), Some(i2), Some(i1), Some(i3), Some(c1), Some(c2)) => {
                (i2 - i0, i3 - i1, c2 - c1)
            }
            (i0, i2, _, _, _, _) if i0.is_none() || i2.is_none() => {
                drop(&mut reasons, "missing X component");
                continue;
            }
            (_, _, i1, i3, _, _) if i1.is_none() || i3.is_none() => {
                drop(&mut reasons, "missing W component");
                continue;
            }
            _ => {
                drop(&mut reasons, "missing Y component");
                continue;
            }
        };
        if !(xi.is_finite() && wi.is_finite() && yi.is_finite()) {
            drop(&mut reasons, "non-finite value");
            continue;
        }
        x.push(xi);
        w.push(wi);
        y.push(yi);
    }
    let retained = y.len();
    let report = DropReport {
        input_units: panel.units.len(),
        retained,
        dropped: panel.units.len() - retained,
        reasons,
    };
    if retained == 0 {
        return Err(Error::InvalidInput(
            "no units retained after dropping missing/non-finite values".into(),
        ));
    }
    let sample = Sample::new(y, x, w, Provenance::PanelDerived)?;
    Ok((sample, report))
}

/// One line of a summary table: mean and (n−1)-denominator standard
/// deviation over the non-missing cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub name: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    /// Set when n == 1, where sd is reported as 0 by convention.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

fn summarize(name: &str, values: &[f64]) -> Result<SummaryRow> {
    if values.is_empty() {
        return Err(Error::InvalidInput(format!("column {name} has no observed values")));
    }
    Ok(SummaryRow {
        name: name.to_string(),
        n: values.len(),
        mean: stats::mean(values),
        sd: stats::sd(values),
        degenerate: values.len() == 1,
    })
}

/// Means and standard deviations of Y, X, W.
pub fn summary_stats_sample(sample: &Sample) -> Result<SummaryTable> {
    Ok(SummaryTable {
        rows: vec![
            summarize("X", sample.x())?,
            summarize("W", sample.w())?,
            summarize("Y", sample.y())?,
        ],
    })
}

/// Per-wave means and standard deviations of income and consumption levels,
/// over non-missing cells.
pub fn summary_stats_panel(panel: &PanelTable) -> Result<SummaryTable> {
    if panel.units.is_empty() {
        return Err(Error::InvalidInput("empty panel".into()));
    }
    let mut rows = Vec::new();
    for k in 0..4 {
        let inc: Vec<f64> = panel.units.iter().filter_map(|u| u.income[k]).collect();
        let con: Vec<f64> = panel.units.iter().filter_map(|u| u.consumption[k]).collect();
        rows.push(summarize(&format!("log_income_{}", panel.waves[k]), &inc)?);
        rows.push(summarize(&format!("log_consumption_{}", panel.waves[k]), &con)?);
    }
    Ok(SummaryTable { rows })
}

impl SummaryTable {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("column,n,mean,sd,degenerate\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{},{}\n", r.name, r.n, r.mean, r.sd, r.degenerate));
        }
        out
    }
}

impl fmt::Display for SummaryTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<24} {:>8} {:>12} {:>12}", "column", "n", "mean", "sd")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<24} {:>8} {:>12.4} {:>12.4}{}",
                r.name,
                r.n,
                r.mean,
                r.sd,
                if r.degenerate { "  (single obs)" } else { "" }
            )?;
        }
        Ok(())
    }
}
