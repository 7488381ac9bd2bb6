use serde::{Deserialize, Serialize};

use super::{Branch, TimeKanModel, UpsamplerKind};

/// Multiply-accumulate estimate for one forward pass.
///
/// `total = batch * (fixed + blocks * per_block)`, so the estimate is exactly
/// proportional to the batch size and affine in the block count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacEstimate {
    /// Per sample, outside the repeated blocks: embeddings and head.
    pub fixed: u64,
    /// Per sample, per block: KANs, depthwise convs, resampling.
    pub per_block: u64,
    pub blocks: u64,
    pub batch: u64,
    pub total: u64,
}

/// Complex-multiply equivalents of one length-`len` FFT (the usual
/// 2.5 N log2 N estimate).
fn fft_macs(len: usize) -> f64 {
    if len <= 1 {
        0.0
    } else {
        2.5 * len as f64 * libm::log2(len as f64)
    }
}

impl TimeKanModel {
    pub fn estimate_macs(&self, batch: usize) -> MacEstimate {
        let c = &self.config;
        let d = c.embed_dim as u64;
        let lengths = c.level_lengths();
        let embed: u64 = lengths.iter().map(|&l| l as u64 * d).sum();
        let head = (c.lookback * c.horizon) as u64 * d + c.horizon as u64 * d;
        let fixed = embed + head;

        let mut learn = 0u64;
        for (learner, &l) in self.learners[0].iter().zip(&lengths) {
            let l = l as u64;
            learn += l * d * c.kernel_size as u64;
            learn += match &learner.branch {
                Branch::Kan(k) => l * d * d * (k.order() as u64 + 1),
                Branch::Mlp(_) => 2 * l * d * d,
            };
        }
        // one lift per adjacent pair in decompose and again in mix
        let mut resample = 0.0;
        for i in 0..lengths.len() - 1 {
            let per_channel = match c.upsampler {
                UpsamplerKind::Frequency => fft_macs(lengths[i + 1]) + fft_macs(lengths[i]),
                UpsamplerKind::LinearInterp => 2.0 * lengths[i] as f64,
            };
            resample += 2.0 * per_channel * d as f64;
        }
        let per_block = learn + libm::ceil(resample) as u64;
        let blocks = c.blocks as u64;
        let batch = batch as u64;
        MacEstimate {
            fixed,
            per_block,
            blocks,
            batch,
            total: batch * (fixed + blocks * per_block),
        }
    }
}
