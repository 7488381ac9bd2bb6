//! Chronological splitting, train-only standardization and sliding-window
//! sampling. Parsing files is left to the caller.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Rng, Tensor};

/// A rectangular table of finite values: rows are timestamps in ascending
/// order, columns are variates.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    column_names: Vec<String>,
    values: Vec<f64>,
    rows: usize,
}

impl RawDataset {
    pub fn new(column_names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let cols = column_names.len();
        if cols == 0 {
            return Err(Error::Data("dataset has no value columns".into()));
        }
        if values.len() % cols != 0 {
            return Err(Error::Data(format!(
                "{} values do not fill {cols} columns",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at row {}, column {}",
                i / cols,
                i % cols
            )));
        }
        Ok(Self {
            rows: values.len() / cols,
            column_names,
            values,
        })
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.column_names.len()
    }

    /// Row-major values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.values.iter().skip(c).step_by(self.cols()).copied().collect()
    }
}

/// Split ratio family: ETT-style data uses 6:2:2, everything else 7:1:2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Ett,
    Other,
}

impl Family {
    /// (train, validation) tenths; the test split takes the remainder.
    fn tenths(self) -> (usize, usize) {
        match self {
            Family::Ett => (6, 2),
            Family::Other => (7, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Train,
    Val,
    Test,
}

/// Column statistics used for z-scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn standardize(&self, col: usize, v: f64) -> f64 {
        (v - self.mean[col]) / self.std[col]
    }

    pub fn destandardize(&self, col: usize, v: f64) -> f64 {
        v * self.std[col] + self.mean[col]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
    pub stats: Standardizer,
    /// Row-major standardized values, same layout as [`RawDataset::values`].
    standardized: Vec<f64>,
    cols: usize,
}

/// Splits chronologically at `floor(ratio * rows)` and z-scores every row
/// with statistics of the training rows only.
pub fn split_and_standardize(
    raw: &RawDataset,
    family: Family,
    lookback: usize,
    horizon: usize,
) -> Result<DatasetSplit> {
    let rows = raw.rows();
    let cols = raw.cols();
    let (tr, va) = family.tenths();
    let train_end = rows * tr / 10;
    let val_end = rows * (tr + va) / 10;
    let split = (0..train_end, train_end..val_end, val_end..rows);
    let need = lookback + horizon;
    for (name, r) in [("train", &split.0), ("val", &split.1), ("test", &split.2)] {
        if r.len() < need {
            return Err(Error::Data(format!(
                "{name} split has {} rows but needs at least lookback + horizon = {need} \
                 ({} total rows required for this ratio)",
                r.len(),
                // smallest row count whose floors give every split `need` rows
                (need..)
                    .map(|n| n * 10)
                    .find(|&n| {
                        let (a, b) = (n * tr / 10, n * (tr + va) / 10);
                        a >= need && b - a >= need && n - b >= need
                    })
                    .map(|n| n / 10)
                    .unwrap_or(0)
            )));
        }
    }
    let n = split.0.len() as f64;
    let mut mean = alloc::vec![0.0; cols];
    let mut std = alloc::vec![0.0; cols];
    for c in 0..cols {
        let col = raw.values()[..train_end * cols].iter().skip(c).step_by(cols);
        let m = col.clone().sum::<f64>() / n;
        let var = col.map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        if !(var > 0.0) {
            return Err(Error::Data(format!(
                "column {:?} is constant over the training rows",
                raw.column_names()[c]
            )));
        }
        mean[c] = m;
        std[c] = libm::sqrt(var);
    }
    let stats = Standardizer { mean, std };
    let standardized = raw
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| stats.standardize(i % cols, v))
        .collect();
    Ok(DatasetSplit {
        train: split.0,
        val: split.1,
        test: split.2,
        stats,
        standardized,
        cols,
    })
}

/// One window: look-back start row and variate column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowRef {
    pub start: usize,
    pub column: usize,
}

/// Flattened batch: each row is one variate's window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    /// (batch, lookback)
    pub inputs: Tensor,
    /// (batch, horizon)
    pub targets: Tensor,
}

impl DatasetSplit {
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.standardized.len() / self.cols
    }

    pub fn standardized(&self) -> &[f64] {
        &self.standardized
    }

    pub fn range(&self, part: Part) -> Range<usize> {
        match part {
            Part::Train => self.train.clone(),
            Part::Val => self.val.clone(),
            Part::Test => self.test.clone(),
        }
    }

    /// Every window fully inside `part`, ascending by start then column.
    pub fn windows(&self, part: Part, lookback: usize, horizon: usize, stride: usize) -> Vec<WindowRef> {
        let r = self.range(part);
        let stride = stride.max(1);
        let mut out = Vec::new();
        if r.len() < lookback + horizon {
            return out;
        }
        let mut start = r.start;
        while start + lookback + horizon <= r.end {
            for column in 0..self.cols {
                out.push(WindowRef { start, column });
            }
            start += stride;
        }
        out
    }

    /// Training windows in a fresh seeded order.
    pub fn shuffled_windows(
        &self,
        lookback: usize,
        horizon: usize,
        stride: usize,
        rng: &mut Rng,
    ) -> Vec<WindowRef> {
        let mut w = self.windows(Part::Train, lookback, horizon, stride);
        rng.shuffle(&mut w);
        w
    }

    pub fn batch(&self, refs: &[WindowRef], lookback: usize, horizon: usize) -> Result<WindowBatch> {
        if refs.is_empty() {
            return Err(Error::Data("empty window batch".into()));
        }
        let mut inputs = Vec::with_capacity(refs.len() * lookback);
        let mut targets = Vec::with_capacity(refs.len() * horizon);
        for w in refs {
            let at = |row: usize| self.standardized[row * self.cols + w.column];
            inputs.extend((w.start..w.start + lookback).map(at));
            targets.extend((w.start + lookback..w.start + lookback + horizon).map(at));
        }
        Ok(WindowBatch {
            inputs: Tensor::new(&[refs.len(), lookback], inputs)?,
            targets: Tensor::new(&[refs.len(), horizon], targets)?,
        })
    }
}
