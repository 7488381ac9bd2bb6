//! Effective-frequency statistics of raw series.

use serde::{Deserialize, Serialize};
use timekan_core::data::RawDataset;
use timekan_core::spectral::effective_frequency_count;
use timekan_core::Rng;

use crate::error::{CliError, CliResult};

/// Bins count as effective when their amplitude exceeds this fraction of
/// the window's largest amplitude.
pub const EFFECTIVE_RATIO: f64 = 0.1;
/// Windows drawn per variate.
pub const WINDOWS_PER_VARIATE: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveFrequency {
    pub window: usize,
    pub per_variate: Vec<f64>,
    pub mean: f64,
}

/// Mean effective-frequency count over up to [`WINDOWS_PER_VARIATE`]
/// seeded random windows of each column (all windows when there are fewer).
pub fn effective_frequency(raw: &RawDataset, window: usize, seed: u64) -> CliResult<EffectiveFrequency> {
    if window == 0 || raw.rows() < window {
        return Err(CliError::Data(format!(
            "effective-frequency window {window} needs at least that many rows, dataset has {}",
            raw.rows()
        )));
    }
    let starts_available = raw.rows() - window + 1;
    let mut rng = Rng::new(seed ^ window as u64);
    let starts: Vec<usize> = if starts_available <= WINDOWS_PER_VARIATE {
        (0..starts_available).collect()
    } else {
        (0..WINDOWS_PER_VARIATE).map(|_| rng.below(starts_available)).collect()
    };
    let per_variate: Vec<f64> = (0..raw.cols())
        .map(|c| {
            let col = raw.column(c);
            let total: usize = starts
                .iter()
                .map(|&s| effective_frequency_count(&col[s..s + window], EFFECTIVE_RATIO))
                .sum();
            total as f64 / starts.len() as f64
        })
        .collect();
    let mean = per_variate.iter().sum::<f64>() / per_variate.len() as f64;
    Ok(EffectiveFrequency { window, per_variate, mean })
}
