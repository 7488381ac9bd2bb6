//! CSV ingestion and the predictions writer.

use std::fs::File;
use std::path::Path;

use timekan_core::data::RawDataset;

use crate::error::{CliError, CliResult};

/// Reads a headed, comma-separated table. With `timestamp == None` a leading
/// column named `date` (any case) is treated as a timestamp and skipped.
pub fn load_csv(path: &Path, timestamp: Option<bool>) -> CliResult<RawDataset> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let here = path.display();
    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{here}: unreadable header: {e}")))?
        .clone();
    if headers.is_empty() {
        return Err(CliError::Data(format!("{here}: missing header row")));
    }
    let skip = match timestamp {
        Some(flag) => flag,
        None => headers.get(0).is_some_and(|h| h.eq_ignore_ascii_case("date")),
    };
    let first = usize::from(skip);
    if skip && headers.len() < 2 {
        return Err(CliError::Data(format!(
            "{here}: a timestamped file needs at least 2 columns, found {}",
            headers.len()
        )));
    }
    let names: Vec<String> = headers.iter().skip(first).map(str::to_string).collect();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // header is line 1
        let line = i + 2;
        let record = record.map_err(|e| CliError::Data(format!("{here}: row {line}: {e}")))?;
        if record.len() != headers.len() {
            return Err(CliError::Data(format!(
                "{here}: row {line} has {} fields, expected {}",
                record.len(),
                headers.len()
            )));
        }
        for (c, cell) in record.iter().enumerate().skip(first) {
            let v: f64 = cell.parse().map_err(|_| {
                CliError::Data(format!(
                    "{here}: row {line}, column {} ({}): {cell:?} is not a number",
                    c + 1,
                    &headers[c]
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::Data(format!(
                    "{here}: row {line}, column {} ({}): value {cell:?} is not finite",
                    c + 1,
                    &headers[c]
                )));
            }
            values.push(v);
        }
    }
    if values.is_empty() {
        return Err(CliError::Data(format!("{here}: no data rows")));
    }
    Ok(RawDataset::new(names, values)?)
}

/// Writes one row per forecast step: `step,<variate>...`.
pub fn write_predictions(path: &Path, names: &[String], columns: &[Vec<f64>]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    let mut header = vec!["step".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(io)?;
    let steps = columns.first().map_or(0, Vec::len);
    for s in 0..steps {
        let mut row = vec![(s + 1).to_string()];
        row.extend(columns.iter().map(|c| format!("{}", c[s])));
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

/// Writes a dataset with a synthetic integer `date` column.
pub fn write_dataset(path: &Path, raw: &RawDataset) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    let mut header = vec!["date".to_string()];
    header.extend(raw.column_names().iter().cloned());
    w.write_record(&header).map_err(io)?;
    for (r, row) in raw.values().chunks_exact(raw.cols()).enumerate() {
        let mut rec = vec![r.to_string()];
        rec.extend(row.iter().map(|v| format!("{v}")));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}
