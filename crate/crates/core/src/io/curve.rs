//! Learning-curve serialization. The CSV holds one row per increment with a
//! fixed column order; the JSON carries the same values plus stop points and
//! the resolved configuration.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{fmt_sig6, round_sig6};
use crate::error::{Error, Result};
use crate::sequential::{Comparator, IncrementRecord, LearningCurve, Metric, StoppingRule};

/// Metric columns, in file order. Pass flags (`pass_<rule label>`) and
/// `replicate_failures` follow.
pub const CURVE_COLUMNS: [&str; 15] = [
    "n",
    "apparent_c",
    "optimism_c",
    "corrected_c",
    "corrected_slope",
    "mean_ui_width",
    "ui_width_p2_5",
    "ui_width_p97_5",
    "mean_delta",
    "delta_p2_5",
    "delta_p97_5",
    "evpi",
    "mean_misclass",
    "misclass_p2_5",
    "misclass_p97_5",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveFormat {
    Csv,
    Json,
}

fn metric_values(r: &IncrementRecord) -> [f64; 14] {
    [
        r.apparent_c,
        r.optimism_c,
        r.corrected_c,
        r.corrected_slope,
        r.mean_ui_width,
        r.ui_width_p2_5,
        r.ui_width_p97_5,
        r.mean_delta,
        r.delta_p2_5,
        r.delta_p97_5,
        r.evpi,
        r.mean_misclass,
        r.misclass_p2_5,
        r.misclass_p97_5,
    ]
}

fn record_from_values(
    n: usize,
    v: [f64; 14],
    passes: Vec<bool>,
    replicate_failures: usize,
) -> IncrementRecord {
    IncrementRecord {
        n,
        usable: !v[0].is_nan(),
        apparent_c: v[0],
        optimism_c: v[1],
        corrected_c: v[2],
        corrected_slope: v[3],
        mean_ui_width: v[4],
        ui_width_p2_5: v[5],
        ui_width_p97_5: v[6],
        mean_delta: v[7],
        delta_p2_5: v[8],
        delta_p97_5: v[9],
        evpi: v[10],
        mean_misclass: v[11],
        misclass_p2_5: v[12],
        misclass_p97_5: v[13],
        passes,
        replicate_failures,
    }
}

/// Copy of `record` with every metric rounded as printed.
pub fn rounded_record(record: &IncrementRecord) -> IncrementRecord {
    IncrementRecord {
        usable: record.usable,
        ..record_from_values(
            record.n,
            metric_values(record).map(round_sig6),
            record.passes.clone(),
            record.replicate_failures,
        )
    }
}

pub fn pass_column(rule: &StoppingRule) -> String {
    format!("pass_{}", rule.label())
}

fn rule_from_column(column: &str) -> Result<StoppingRule> {
    let bad = || Error::InvalidInput(format!("unrecognised learning-curve column `{column}`"));
    let label = column.strip_prefix("pass_").ok_or_else(bad)?;
    let (body, k) = label.rsplit_once("_k").ok_or_else(bad)?;
    let k: usize = k.parse().map_err(|_| bad())?;
    for metric in Metric::ALL {
        let Some(rest) = body.strip_prefix(metric.name()) else {
            continue;
        };
        let (comparator, threshold) = if let Some(t) = rest.strip_prefix("_ge_") {
            (Comparator::Ge, t)
        } else if let Some(t) = rest.strip_prefix("_le_") {
            (Comparator::Le, t)
        } else {
            continue;
        };
        let threshold: f64 = threshold.parse().map_err(|_| bad())?;
        return StoppingRule::new(metric, comparator, threshold, k);
    }
    Err(bad())
}

pub fn curve_csv(curve: &LearningCurve) -> String {
    let mut header: Vec<String> = CURVE_COLUMNS.iter().map(|c| c.to_string()).collect();
    header.extend(curve.rules.iter().map(pass_column));
    header.push("replicate_failures".into());
    let mut out = header.join(",");
    out.push('\n');
    for r in &curve.records {
        let mut row = vec![r.n.to_string()];
        row.extend(metric_values(r).iter().map(|&v| fmt_sig6(v)));
        row.extend(r.passes.iter().map(|&p| u8::from(p).to_string()));
        row.push(r.replicate_failures.to_string());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn read_curve_csv<R: Read>(reader: R) -> Result<LearningCurve> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < CURVE_COLUMNS.len() + 1 {
        return Err(Error::MissingHeader(CURVE_COLUMNS.join(",")));
    }
    for (i, expected) in CURVE_COLUMNS.iter().enumerate() {
        if cols[i] != *expected {
            return Err(Error::MissingHeader((*expected).into()));
        }
    }
    if cols[cols.len() - 1] != "replicate_failures" {
        return Err(Error::MissingHeader("replicate_failures".into()));
    }
    let rule_cols = &cols[CURVE_COLUMNS.len()..cols.len() - 1];
    let rules = rule_cols
        .iter()
        .map(|c| rule_from_column(c))
        .collect::<Result<Vec<_>>>()?;
    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let cell = |j: usize| -> Result<&str> {
            rec.get(j)
                .filter(|v| !v.is_empty())
                .ok_or_else(|| Error::MissingValue {
                    row,
                    column: cols[j].to_string(),
                })
        };
        let parse_err = |j: usize| Error::MissingValue {
            row,
            column: cols[j].to_string(),
        };
        let n: usize = cell(0)?.parse().map_err(|_| parse_err(0))?;
        let mut values = [0.0; 14];
        for (k, v) in values.iter_mut().enumerate() {
            *v = cell(k + 1)?.parse().map_err(|_| parse_err(k + 1))?;
        }
        let passes = (0..rules.len())
            .map(|r| {
                let j = CURVE_COLUMNS.len() + r;
                match cell(j)? {
                    "1" => Ok(true),
                    "0" => Ok(false),
                    _ => Err(parse_err(j)),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let last = cols.len() - 1;
        let failures: usize = cell(last)?.parse().map_err(|_| parse_err(last))?;
        records.push(record_from_values(n, values, passes, failures));
    }
    Ok(LearningCurve::from_flagged(rules, records))
}

/// JSON form of a learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveDocument {
    /// The resolved run configuration.
    pub config: serde_json::Value,
    pub rules: Vec<String>,
    /// Stop point per rule, keyed by rule label.
    pub n_stop: BTreeMap<String, Option<usize>>,
    pub n_stop_overall: Option<usize>,
    pub records: Vec<IncrementRecord>,
}

impl CurveDocument {
    pub fn to_curve(&self) -> Result<LearningCurve> {
        let rules = self
            .rules
            .iter()
            .map(|r| r.parse())
            .collect::<Result<Vec<StoppingRule>>>()?;
        Ok(LearningCurve::from_flagged(rules, self.records.clone()))
    }
}

pub fn curve_json(curve: &LearningCurve, config: &serde_json::Value) -> CurveDocument {
    CurveDocument {
        config: config.clone(),
        rules: curve.rules.iter().map(|r| r.to_string()).collect(),
        n_stop: curve
            .rules
            .iter()
            .zip(&curve.n_stop_per_rule)
            .map(|(r, s)| (r.label(), *s))
            .collect(),
        n_stop_overall: curve.n_stop_overall,
        records: curve.records.iter().map(rounded_record).collect(),
    }
}

pub fn read_curve_json<R: Read>(reader: R) -> Result<CurveDocument> {
    Ok(serde_json::from_reader(reader)?)
}

pub fn write_learning_curve(
    curve: &LearningCurve,
    path: impl AsRef<Path>,
    format: CurveFormat,
    config: &serde_json::Value,
) -> Result<()> {
    if curve.records.is_empty() {
        return Err(Error::InsufficientPoints {
            needed: 1,
            found: 0,
        });
    }
    let text = match format {
        CurveFormat::Csv => curve_csv(curve),
        CurveFormat::Json => {
            let mut s = serde_json::to_string_pretty(&curve_json(curve, config))?;
            s.push('\n');
            s
        }
    };
    fs::write(path, text)?;
    Ok(())
}
