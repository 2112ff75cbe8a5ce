//! `results.csv`: one row per (mechanism, flexibility value).

use std::fs::File;
use std::path::Path;

use anyhow::{anyhow, Context, Result};

pub const COLUMNS: [&str; 11] = [
    "mechanism",
    "mu",
    "seed",
    "starts",
    "production_cost",
    "discounts_paid",
    "wasted_discounts",
    "total_cost",
    "savings_fraction",
    "dictatorial_savings_fraction",
    "wall_time_s",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub mechanism: String,
    /// Empty in the file when the scenario has no single flexibility value.
    pub mu: Option<f64>,
    pub seed: u64,
    pub starts: usize,
    pub production_cost: f64,
    pub discounts_paid: f64,
    pub wasted_discounts: f64,
    pub total_cost: f64,
    pub savings_fraction: f64,
    pub dictatorial_savings_fraction: f64,
    pub wall_time_s: f64,
}

impl Row {
    /// Cost of the scenario without any incentive, recovered from the row.
    pub fn baseline_total(&self) -> f64 {
        self.total_cost / (1.0 - self.savings_fraction)
    }

    fn record(&self) -> Vec<String> {
        vec![
            self.mechanism.clone(),
            self.mu.map(|m| m.to_string()).unwrap_or_default(),
            self.seed.to_string(),
            self.starts.to_string(),
            self.production_cost.to_string(),
            self.discounts_paid.to_string(),
            self.wasted_discounts.to_string(),
            self.total_cost.to_string(),
            self.savings_fraction.to_string(),
            self.dictatorial_savings_fraction.to_string(),
            format!("{:.3}", self.wall_time_s),
        ]
    }
}

/// Writes rows as they arrive, flushing each one so an interrupted run keeps
/// everything finished so far.
pub struct ResultsWriter {
    inner: csv::Writer<File>,
}

impl ResultsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut inner = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
        inner.write_record(COLUMNS)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &Row) -> Result<()> {
        self.inner.write_record(row.record())?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn read_results(path: &Path) -> Result<Vec<Row>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let headers = reader.headers()?.clone();
    if headers.iter().ne(COLUMNS) {
        return Err(anyhow!("{}: unexpected header {:?}", path.display(), headers));
    }
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let line = k + 2;
        let num = |col: usize| -> Result<f64> {
            record[col].parse::<f64>().map_err(|_| {
                anyhow!(
                    "{}:{line}: malformed {} '{}'",
                    path.display(),
                    COLUMNS[col],
                    &record[col]
                )
            })
        };
        let int = |col: usize| -> Result<u64> {
            record[col].parse::<u64>().map_err(|_| {
                anyhow!(
                    "{}:{line}: malformed {} '{}'",
                    path.display(),
                    COLUMNS[col],
                    &record[col]
                )
            })
        };
        rows.push(Row {
            mechanism: record[0].to_string(),
            mu: if record[1].is_empty() { None } else { Some(num(1)?) },
            seed: int(2)?,
            starts: int(3)? as usize,
            production_cost: num(4)?,
            discounts_paid: num(5)?,
            wasted_discounts: num(6)?,
            total_cost: num(7)?,
            savings_fraction: num(8)?,
            dictatorial_savings_fraction: num(9)?,
            wall_time_s: num(10)?,
        });
    }
    Ok(rows)
}
