//! Cohort CSV: `id,order,outcome,<predictors...>`, with `order` optional.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::Cohort;

#[derive(Debug, Clone, PartialEq)]
pub struct CohortFile {
    /// Rows in file order. Without an `order` column the recruitment order
    /// is the row order and `has_order` is false.
    pub cohort: Cohort,
    pub has_order: bool,
}

pub fn read_cohort_csv(path: impl AsRef<Path>) -> Result<CohortFile> {
    read_cohort(File::open(path)?)
}

pub fn read_cohort<R: Read>(reader: R) -> Result<CohortFile> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::EmptyFile);
    }
    let find = |name: &str| header.iter().position(|h| h == name);
    let id_col = find("id").ok_or_else(|| Error::MissingHeader("id".into()))?;
    let outcome_col = find("outcome").ok_or_else(|| Error::MissingHeader("outcome".into()))?;
    let order_col = find("order");
    let predictor_cols: Vec<usize> = (0..header.len())
        .filter(|&j| j != id_col && j != outcome_col && Some(j) != order_col)
        .collect();
    let names: Vec<String> = predictor_cols
        .iter()
        .map(|&j| header[j].to_string())
        .collect();

    let mut ids = Vec::new();
    let mut order = Vec::new();
    let mut y = Vec::new();
    let mut x = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let field = |j: usize| -> Result<&str> {
            match record.get(j) {
                Some(v) if !v.is_empty() => Ok(v),
                _ => Err(Error::MissingValue {
                    row,
                    column: header[j].to_string(),
                }),
            }
        };
        ids.push(field(id_col)?.to_string());
        y.push(match field(outcome_col)? {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::NonBinaryOutcome {
                    row,
                    value: other.to_string(),
                })
            }
        });
        if let Some(j) = order_col {
            order.push(
                field(j)?
                    .parse::<usize>()
                    .map_err(|_| Error::MissingValue {
                        row,
                        column: "order".into(),
                    })?,
            );
        }
        for &j in &predictor_cols {
            let v: f64 = field(j)?.parse().map_err(|_| Error::MissingValue {
                row,
                column: header[j].to_string(),
            })?;
            x.push(v);
        }
    }
    let n = y.len();
    if n == 0 {
        return Err(Error::EmptyFile);
    }
    let has_order = order_col.is_some();
    if !has_order {
        order = (1..=n).collect();
    }
    let cohort = Cohort::new(ids, order, y, Matrix::new(n, names.len(), x)?, names)?;
    Ok(CohortFile { cohort, has_order })
}

pub fn write_cohort_csv(cohort: &Cohort, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    write_cohort(cohort, std::io::BufWriter::new(file))
}

/// Writes every row with its recruitment order. Predictor values use the
/// shortest text that parses back to the same float.
pub fn write_cohort<W: Write>(cohort: &Cohort, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), "order".to_string(), "outcome".to_string()];
    header.extend(cohort.predictor_names().iter().cloned());
    wtr.write_record(&header)?;
    for (i, id) in cohort.ids().enumerate() {
        let mut row = vec![
            id.to_string(),
            cohort.order()[i].to_string(),
            u8::from(cohort.y()[i]).to_string(),
        ];
        row.extend(cohort.x().row(i).iter().map(|v| v.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
