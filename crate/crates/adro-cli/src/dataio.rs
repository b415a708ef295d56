//! Dataset CSV parsing and report CSV emission.
//!
//! The dataset wire format is a header row `x1,...,xd,y` followed by
//! comma-separated decimal rows, one sample per line.

use std::fs::File;
use std::path::Path;

use adro::dataset::{Dataset, LabelKind};
use adro::report::ReportOutput;
use anyhow::{bail, Context, Result};

pub fn read_dataset_csv(path: &Path, label_kind: LabelKind) -> Result<Dataset> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);

    let headers = reader.headers().context("reading CSV header")?.clone();
    if headers.len() < 2 {
        bail!("{}: header must be x1,...,xd,y with at least one feature", path.display());
    }
    let d = headers.len() - 1;
    for (j, name) in headers.iter().enumerate() {
        let expected = if j < d { format!("x{}", j + 1) } else { "y".to_string() };
        if name.trim() != expected {
            bail!(
                "{}: line 1: expected header column {} to be '{}', found '{}'",
                path.display(),
                j + 1,
                expected,
                name
            );
        }
    }

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // header is line 1
        let record = record.with_context(|| format!("{}: line {line}", path.display()))?;
        if record.len() != d + 1 {
            bail!(
                "{}: line {line}: expected {} fields, found {}",
                path.display(),
                d + 1,
                record.len()
            );
        }
        let mut row = Vec::with_capacity(d);
        for (j, field) in record.iter().enumerate() {
            let value: f64 = field.trim().parse().with_context(|| {
                format!("{}: line {line}: field {} ('{field}') is not a number", path.display(), j + 1)
            })?;
            if j < d {
                row.push(value);
            } else {
                labels.push(value);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    Dataset::from_rows(&rows, &labels, label_kind)
        .with_context(|| format!("{}: invalid dataset", path.display()))
}

/// Writes the two plot-data tables as flat CSV files under `dir`.
pub fn write_report_csv(output: &ReportOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;

    let mse_path = dir.join("mse_series.csv");
    let mut w = csv::Writer::from_path(&mse_path)
        .with_context(|| format!("creating {}", mse_path.display()))?;
    w.write_record(["estimator", "tau", "n", "log_n", "mean_sq_err", "replicates"])?;
    for series in &output.mse_series {
        for p in &series.points {
            w.write_record([
                series.estimator.clone(),
                series.tau.to_string(),
                p.n.to_string(),
                p.log_n.to_string(),
                p.mean_sq_err.to_string(),
                p.replicates.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let box_path = dir.join("diff_boxplots.csv");
    let mut w = csv::Writer::from_path(&box_path)
        .with_context(|| format!("creating {}", box_path.display()))?;
    w.write_record(["n", "tau", "min", "q1", "median", "q3", "max", "replicates"])?;
    for b in &output.diff_boxplots {
        w.write_record([
            b.n.to_string(),
            b.tau.to_string(),
            b.min.to_string(),
            b.q1.to_string(),
            b.median.to_string(),
            b.q3.to_string(),
            b.max.to_string(),
            b.replicates.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
