//! Fraud-schema CSV reading and writing.
//!
//! Columns may appear in any order; every schema column must be present and
//! nothing else. Numbers are parsed with `str::parse`, so only `.` is
//! accepted as the decimal separator regardless of locale.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ccnets_core::data::{fraud_feature_columns, TabularDataset, LABEL_COLUMN};
use ccnets_core::Tensor;

use crate::error::{CliError, Result};

pub fn load_csv(path: &Path, schema: &[String]) -> Result<TabularDataset> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_csv(BufReader::new(file), schema).map_err(|e| match e {
        CliError::Data(msg) => CliError::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Loads the credit-card schema: Time, V1..V28, Amount, Class.
pub fn load_fraud_csv(path: &Path) -> Result<TabularDataset> {
    load_csv(path, &fraud_feature_columns())
}

pub fn read_csv<R: Read>(reader: R, schema: &[String]) -> Result<TabularDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("cannot read header: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();

    let position = |name: &str| header.iter().position(|h| h == name);
    let mut missing: Vec<&str> = schema.iter().map(String::as_str).filter(|c| position(c).is_none()).collect();
    if position(LABEL_COLUMN).is_none() {
        missing.push(LABEL_COLUMN);
    }
    if !missing.is_empty() {
        return Err(CliError::Data(format!("schema error: missing column(s) {}", missing.join(", "))));
    }
    if let Some(extra) = header.iter().find(|h| *h != LABEL_COLUMN && !schema.contains(h)) {
        return Err(CliError::Data(format!("schema error: unexpected column '{extra}'")));
    }
    if let Some((i, dup)) = header.iter().enumerate().find(|(i, h)| header[..*i].contains(h)) {
        return Err(CliError::Data(format!("schema error: duplicate column '{dup}' at position {}", i + 1)));
    }
    let feature_idx: Vec<usize> = schema.iter().map(|c| position(c).expect("checked above")).collect();
    let label_idx = position(LABEL_COLUMN).expect("checked above");

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| CliError::Data(format!("row {row}: {e}")))?;
        let cell = |idx: usize| -> Result<f64> {
            let text = record.get(idx).unwrap_or("");
            text.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Data(format!("parse error at row {row}, column '{}': '{text}'", header[idx])))
        };
        for &idx in &feature_idx {
            features.push(cell(idx)?);
        }
        let label = cell(label_idx)?;
        if label != 0.0 && label != 1.0 {
            return Err(CliError::Data(format!("row {row}: label {label} is not 0 or 1")));
        }
        labels.push(label);
    }
    let n = labels.len();
    let features = Tensor::from_vec(n, schema.len(), features)?;
    let labels = Tensor::from_vec(n, 1, labels)?;
    Ok(TabularDataset::new(features, labels, schema.to_vec())?)
}

pub fn write_csv<W: Write>(writer: W, ds: &TabularDataset) -> Result<()> {
    let to_data = |e: csv::Error| CliError::Data(format!("csv write failed: {e}"));
    let mut w = csv::Writer::from_writer(writer);
    let mut header = ds.columns.clone();
    header.push(LABEL_COLUMN.to_owned());
    w.write_record(&header).map_err(to_data)?;
    let mut buf = Vec::with_capacity(header.len());
    for r in 0..ds.len() {
        buf.clear();
        buf.extend(ds.features.row(r).iter().map(|v| v.to_string()));
        buf.push(format!("{}", ds.labels.get(r, 0) as u8));
        w.write_record(&buf).map_err(to_data)?;
    }
    w.flush().map_err(|e| CliError::Data(format!("csv write failed: {e}")))?;
    Ok(())
}

pub fn save_csv(path: &Path, ds: &TabularDataset) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    write_csv(BufWriter::new(file), ds)
}
