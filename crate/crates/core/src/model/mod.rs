//! The full forecaster: hierarchical preprocessing, repeated
//! decompose / learn / mix blocks, and the forecast head.

mod config;
mod cost;

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

pub use config::{ModelConfig, OrderPolicy, UpsamplerKind};
pub use cost::MacEstimate;

use crate::layers::{Axis, ChebyKanLayer, DepthwiseConv, LinearMap, Mlp};
use crate::numerics::{Parameter, Rng};
use crate::spectral::{moving_average_downsample, FrequencyUpsampler, LinearInterpUpsampler};
use crate::{Error, Result, Tensor};

/// Added to the per-window standard deviation before dividing.
pub const INSTANCE_NORM_EPS: f64 = 1e-5;

/// Per-level sequences of one pass and their band residuals, each shaped
/// (batch, level length, embed_dim), highest frequency first.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelStack {
    pub levels: Vec<Tensor>,
    pub bands: Vec<Tensor>,
}

/// Representation branch of one level.
#[derive(Debug, Clone, PartialEq)]
pub enum Branch {
    Kan(ChebyKanLayer),
    Mlp(Mlp),
}

/// Dual-branch learner for one frequency band: depthwise conv for temporal
/// dependency plus a KAN (or MLP) for channel representation, summed.
#[derive(Debug, Clone, PartialEq)]
pub struct BandLearner {
    pub conv: DepthwiseConv,
    pub branch: Branch,
}

/// Dense (long, short) matrix of an upsampler, materialized once by pushing
/// unit vectors through it. Applying it along time is then a small GEMM per
/// batch row, and the adjoint is its transpose.
#[derive(Debug, Clone)]
struct Resampler {
    short: usize,
    long: usize,
    /// Row-major (long, short).
    matrix: Vec<f64>,
}

impl Resampler {
    fn new(kind: UpsamplerKind, short: usize, long: usize) -> Result<Self> {
        let mut matrix = vec![0.0; long * short];
        let mut unit = vec![0.0; short];
        let mut col = vec![0.0; long];
        let freq = FrequencyUpsampler::new(short, long)?;
        let lin = LinearInterpUpsampler::new(short, long)?;
        for j in 0..short {
            unit.fill(0.0);
            unit[j] = 1.0;
            match kind {
                UpsamplerKind::Frequency => freq.apply(&unit, &mut col),
                UpsamplerKind::LinearInterp => lin.apply(&unit, &mut col),
            }
            for (t, v) in col.iter().enumerate() {
                matrix[t * short + j] = *v;
            }
        }
        Ok(Self { short, long, matrix })
    }

    /// Applies the resampler (or its adjoint) along the time axis of a
    /// (batch, length, channels) tensor.
    fn along_time(&self, x: &Tensor, adjoint: bool) -> Result<Tensor> {
        let (b, l, c) = x.dims3()?;
        let (from, to) = if adjoint { (self.long, self.short) } else { (self.short, self.long) };
        if l != from {
            return Err(Error::ShapeMismatch {
                op: "resample",
                left: x.shape().to_vec(),
                right: vec![b, from, c],
            });
        }
        let mut out = vec![0.0; b * to * c];
        for (xb, ob) in x.data().chunks_exact(from * c).zip(out.chunks_exact_mut(to * c)) {
            for (t, orow) in ob.chunks_exact_mut(c).enumerate() {
                for (s, xrow) in xb.chunks_exact(c).enumerate() {
                    let w = if adjoint {
                        self.matrix[s * self.short + t]
                    } else {
                        self.matrix[t * self.short + s]
                    };
                    if w == 0.0 {
                        continue;
                    }
                    for (o, v) in orow.iter_mut().zip(xrow) {
                        *o += w * v;
                    }
                }
            }
        }
        Ok(Tensor::from_parts(vec![b, to, c], out))
    }
}

/// Intermediates of one forward pass, consumed by [`TimeKanModel::gradients`].
#[derive(Debug, Clone)]
pub struct Tape {
    batch: usize,
    /// (mean, std + eps) per row when instance normalization is on.
    norm: Option<Vec<(f64, f64)>>,
    /// Raw (batch, length, 1) series per level, before embedding.
    raw: Vec<Tensor>,
    /// Band inputs to the learners of each block.
    bands: Vec<Vec<Tensor>>,
    top: Tensor,
    hidden: Tensor,
}

impl Tape {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Parameter gradients in [`TimeKanModel::parameters`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub tensors: Vec<Tensor>,
}

impl ModelGrads {
    pub fn add_assign(&mut self, other: &ModelGrads) -> Result<()> {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn global_norm(&self) -> f64 {
        libm::sqrt(
            self.tensors
                .iter()
                .flat_map(|t| t.data())
                .map(|v| v * v)
                .sum(),
        )
    }
}

#[derive(Debug, Clone)]
pub struct TimeKanModel {
    config: ModelConfig,
    pub embeddings: Vec<LinearMap>,
    /// `learners[block][level]`.
    pub learners: Vec<Vec<BandLearner>>,
    pub head_time: LinearMap,
    pub head_channel: LinearMap,
    /// `resamplers[i]` lifts level `i + 1` to the length of level `i`.
    resamplers: Vec<Resampler>,
}

fn check_finite(t: &Tensor, stage: &str) -> Result<()> {
    match t.first_non_finite() {
        Some(index) => Err(Error::NonFinite {
            stage: stage.to_string(),
            index,
        }),
        None => Ok(()),
    }
}

impl TimeKanModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(config.seed);
        let d = config.embed_dim;
        let lengths = config.level_lengths();
        let embeddings = (1..=config.levels)
            .map(|i| LinearMap::new(&format!("embed{i}"), 1, d, Axis::Channel, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let orders = config.kan_orders();
        let mut learners = Vec::with_capacity(config.blocks);
        for blk in 1..=config.blocks {
            let mut row = Vec::with_capacity(config.levels);
            for lvl in 1..=config.levels {
                let prefix = format!("block{blk}.level{lvl}");
                let conv = DepthwiseConv::new(&format!("{prefix}.conv"), d, config.kernel_size, &mut rng)?;
                let branch = match &orders {
                    Some(o) => Branch::Kan(ChebyKanLayer::new(&format!("{prefix}.kan"), d, d, o[lvl - 1], &mut rng)?),
                    None => Branch::Mlp(Mlp::new(&format!("{prefix}.mlp"), d, &mut rng)?),
                };
                row.push(BandLearner { conv, branch });
            }
            learners.push(row);
        }
        let head_time = LinearMap::new("head.time", config.lookback, config.horizon, Axis::Time, &mut rng)?;
        let head_channel = LinearMap::new("head.channel", d, 1, Axis::Channel, &mut rng)?;
        let resamplers = (0..config.levels - 1)
            .map(|i| Resampler::new(config.upsampler, lengths[i + 1], lengths[i]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            embeddings,
            learners,
            head_time,
            head_channel,
            resamplers,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Actual KAN order of each level in the first block (`None` for MLP
    /// branches).
    pub fn level_orders(&self) -> Vec<Option<usize>> {
        self.learners[0]
            .iter()
            .map(|l| match &l.branch {
                Branch::Kan(k) => Some(k.order()),
                Branch::Mlp(_) => None,
            })
            .collect()
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        let mut out = Vec::new();
        for e in &self.embeddings {
            out.push(&e.weight);
            out.push(&e.bias);
        }
        for row in &self.learners {
            for l in row {
                out.push(&l.conv.kernels);
                out.push(&l.conv.bias);
                match &l.branch {
                    Branch::Kan(k) => out.push(&k.theta),
                    Branch::Mlp(m) => {
                        out.push(&m.first.weight);
                        out.push(&m.first.bias);
                        out.push(&m.second.weight);
                        out.push(&m.second.bias);
                    }
                }
            }
        }
        out.push(&self.head_time.weight);
        out.push(&self.head_time.bias);
        out.push(&self.head_channel.weight);
        out.push(&self.head_channel.bias);
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = Vec::new();
        for e in &mut self.embeddings {
            out.push(&mut e.weight);
            out.push(&mut e.bias);
        }
        for row in &mut self.learners {
            for l in row {
                out.push(&mut l.conv.kernels);
                out.push(&mut l.conv.bias);
                match &mut l.branch {
                    Branch::Kan(k) => out.push(&mut k.theta),
                    Branch::Mlp(m) => {
                        out.push(&mut m.first.weight);
                        out.push(&mut m.first.bias);
                        out.push(&mut m.second.weight);
                        out.push(&mut m.second.bias);
                    }
                }
            }
        }
        out.push(&mut self.head_time.weight);
        out.push(&mut self.head_time.bias);
        out.push(&mut self.head_channel.weight);
        out.push(&mut self.head_channel.bias);
        out
    }

    pub fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    pub fn count_params(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    /// Copies every parameter value out, in [`parameters`](Self::parameters) order.
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.parameters().iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, values: &[Tensor]) -> Result<()> {
        let params = self.parameters_mut();
        if params.len() != values.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, got {}",
                params.len(),
                values.len()
            )));
        }
        for (p, v) in params.into_iter().zip(values) {
            if p.value.shape() != v.shape() {
                return Err(Error::ShapeMismatch {
                    op: "restore",
                    left: p.value.shape().to_vec(),
                    right: v.shape().to_vec(),
                });
            }
            p.value = v.clone();
        }
        Ok(())
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        let (b, t) = x.dims2()?;
        if t != self.config.lookback {
            return Err(Error::ShapeMismatch {
                op: "model input",
                left: x.shape().to_vec(),
                right: vec![b, self.config.lookback],
            });
        }
        check_finite(x, "model input")?;
        Ok(b)
    }

    /// Per-row instance normalization. Returns the normalized batch and
    /// (mean, std + eps) per row.
    pub fn normalize(x: &Tensor) -> Result<(Tensor, Vec<(f64, f64)>)> {
        let (_, t) = x.dims2()?;
        let mut out = x.clone();
        let mut stats = Vec::new();
        for row in out.data_mut().chunks_exact_mut(t) {
            let mean = row.iter().sum::<f64>() / t as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t as f64;
            let scale = libm::sqrt(var) + INSTANCE_NORM_EPS;
            for v in row.iter_mut() {
                *v = (*v - mean) / scale;
            }
            stats.push((mean, scale));
        }
        Ok((out, stats))
    }

    /// Moving-average hierarchy of the raw (batch, lookback) series, each
    /// level shaped (batch, length, 1).
    pub fn raw_levels(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let (b, t) = x.dims2()?;
        let mut levels = vec![x.clone().reshape(&[b, t, 1])?];
        for _ in 1..self.config.levels {
            let prev = levels.last().expect("non-empty");
            let (_, len, _) = prev.dims3()?;
            let mut data = Vec::new();
            for row in prev.data().chunks_exact(len) {
                data.extend(moving_average_downsample(row, self.config.window)?);
            }
            let next_len = data.len() / b;
            levels.push(Tensor::from_parts(vec![b, next_len, 1], data));
        }
        Ok(levels)
    }

    /// Downsample in raw space, then lift each level to `embed_dim` channels.
    pub fn preprocess(&self, x: &Tensor) -> Result<(Vec<Tensor>, Vec<Tensor>)> {
        let raw = self.raw_levels(x)?;
        let levels = raw
            .iter()
            .zip(&self.embeddings)
            .map(|(r, e)| e.forward(r))
            .collect::<Result<Vec<_>>>()?;
        Ok((raw, levels))
    }

    /// Band residuals: `f_i = x_i - up(x_{i+1})`, and the lowest level
    /// passes through whole.
    pub fn decompose(&self, levels: &[Tensor]) -> Result<Vec<Tensor>> {
        self.check_levels(levels)?;
        let k = levels.len();
        let mut bands = Vec::with_capacity(k);
        for i in 0..k - 1 {
            let lifted = self.resamplers[i].along_time(&levels[i + 1], false)?;
            bands.push(levels[i].sub(&lifted)?);
        }
        bands.push(levels[k - 1].clone());
        Ok(bands)
    }

    /// Per-band `conv(f) + branch(f)` for one block (0-based).
    pub fn learn(&self, block: usize, bands: &[Tensor]) -> Result<Vec<Tensor>> {
        self.check_levels(bands)?;
        let row = self
            .learners
            .get(block)
            .ok_or_else(|| Error::Config(format!("block {block} out of range")))?;
        row.iter()
            .zip(bands)
            .map(|(l, f)| {
                let conv = l.conv.forward(f)?;
                let branch = match &l.branch {
                    Branch::Kan(k) => k.forward(f)?,
                    Branch::Mlp(m) => m.forward(f)?,
                };
                conv.add(&branch)
            })
            .collect()
    }

    /// Inverse of [`decompose`](Self::decompose): `x_k = f_k`, then
    /// `x_i = up(x_{i+1}) + f_i` from the bottom up.
    pub fn mix(&self, bands: &[Tensor]) -> Result<Vec<Tensor>> {
        self.check_levels(bands)?;
        let k = bands.len();
        let mut levels = vec![bands[k - 1].clone(); k];
        for i in (0..k - 1).rev() {
            let lifted = self.resamplers[i].along_time(&levels[i + 1], false)?;
            levels[i] = lifted.add(&bands[i])?;
        }
        Ok(levels)
    }

    fn check_levels(&self, levels: &[Tensor]) -> Result<()> {
        if levels.len() != self.config.levels {
            return Err(Error::Config(format!(
                "expected {} levels, got {}",
                self.config.levels,
                levels.len()
            )));
        }
        let lengths = self.config.level_lengths();
        for (t, &len) in levels.iter().zip(&lengths) {
            let (b, l, c) = t.dims3()?;
            if l != len || c != self.config.embed_dim {
                return Err(Error::ShapeMismatch {
                    op: "level stack",
                    left: t.shape().to_vec(),
                    right: vec![b, len, self.config.embed_dim],
                });
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_with_tape(x).map(|(y, _)| y)
    }

    /// Forward pass that also returns the intermediates needed for
    /// gradients. The tape belongs to the caller, so one model can serve
    /// several batches concurrently.
    pub fn forward_with_tape(&self, x: &Tensor) -> Result<(Tensor, Tape)> {
        let batch = self.check_input(x)?;
        let (input, norm) = if self.config.instance_norm {
            let (n, s) = Self::normalize(x)?;
            check_finite(&n, "instance_norm")?;
            (n, Some(s))
        } else {
            (x.clone(), None)
        };
        let (raw, mut levels) = self.preprocess(&input)?;
        for l in &levels {
            check_finite(l, "preprocess")?;
        }
        let mut block_bands = Vec::with_capacity(self.config.blocks);
        for blk in 0..self.config.blocks {
            let bands = self.decompose(&levels)?;
            for b in &bands {
                check_finite(b, &format!("block{}.decompose", blk + 1))?;
            }
            let learned = self.learn(blk, &bands)?;
            for b in &learned {
                check_finite(b, &format!("block{}.learn", blk + 1))?;
            }
            levels = self.mix(&learned)?;
            for l in &levels {
                check_finite(l, &format!("block{}.mix", blk + 1))?;
            }
            block_bands.push(bands);
        }
        let top = levels.swap_remove(0);
        let hidden = self.head_time.forward(&top)?;
        let out = self.head_channel.forward(&hidden)?;
        let mut y = out.reshape(&[batch, self.config.horizon])?;
        if let Some(stats) = &norm {
            for (row, &(mean, scale)) in y.data_mut().chunks_exact_mut(self.config.horizon).zip(stats) {
                for v in row.iter_mut() {
                    *v = *v * scale + mean;
                }
            }
        }
        check_finite(&y, "head")?;
        Ok((
            y,
            Tape {
                batch,
                norm,
                raw,
                bands: block_bands,
                top,
                hidden,
            },
        ))
    }

    /// Gradients of `<upstream, forward(x)>` with respect to every
    /// parameter. Does not touch the stored accumulators.
    pub fn gradients(&self, tape: &Tape, upstream: &Tensor) -> Result<ModelGrads> {
        let (b, f) = (tape.batch, self.config.horizon);
        if upstream.shape() != [b, f] {
            return Err(Error::ShapeMismatch {
                op: "model backward",
                left: upstream.shape().to_vec(),
                right: vec![b, f],
            });
        }
        let mut g = upstream.clone();
        if let Some(stats) = &tape.norm {
            for (row, &(_, scale)) in g.data_mut().chunks_exact_mut(f).zip(stats) {
                for v in row.iter_mut() {
                    *v *= scale;
                }
            }
        }
        let g = g.reshape(&[b, f, 1])?;
        let ch = self.head_channel.backward(&tape.hidden, &g)?;
        let tm = self.head_time.backward(&tape.top, &ch.input)?;

        let k = self.config.levels;
        let lengths = self.config.level_lengths();
        let mut level_grads: Vec<Tensor> = lengths
            .iter()
            .map(|&l| Tensor::zeros(&[b, l, self.config.embed_dim]))
            .collect::<Result<_>>()?;
        level_grads[0] = tm.input;

        let mut block_grads: Vec<Vec<Vec<Tensor>>> = vec![Vec::new(); self.config.blocks];
        for blk in (0..self.config.blocks).rev() {
            // mix
            let mut band_out_grads = level_grads.clone();
            for i in 1..k {
                let carried = self.resamplers[i - 1].along_time(&band_out_grads[i - 1], true)?;
                band_out_grads[i].add_assign(&carried)?;
            }
            // learn
            let bands = &tape.bands[blk];
            let mut band_in_grads = Vec::with_capacity(k);
            let mut per_level = Vec::with_capacity(k);
            for ((learner, band), gout) in self.learners[blk].iter().zip(bands).zip(&band_out_grads) {
                let cg = learner.conv.backward(band, gout)?;
                let mut gin = cg.input;
                let mut tensors = vec![cg.kernels, cg.bias];
                match &learner.branch {
                    Branch::Kan(kan) => {
                        let kg = kan.backward(band, gout)?;
                        gin.add_assign(&kg.input)?;
                        tensors.push(kg.theta);
                    }
                    Branch::Mlp(mlp) => {
                        let mg = mlp.backward(band, gout)?;
                        gin.add_assign(&mg.input)?;
                        tensors.extend([mg.first.weight, mg.first.bias, mg.second.weight, mg.second.bias]);
                    }
                }
                band_in_grads.push(gin);
                per_level.push(tensors);
            }
            block_grads[blk] = per_level;
            // decompose
            let mut next = band_in_grads.clone();
            for i in 1..k {
                let carried = self.resamplers[i - 1].along_time(&band_in_grads[i - 1], true)?;
                next[i] = next[i].sub(&carried)?;
            }
            level_grads = next;
        }

        let mut tensors = Vec::new();
        for ((emb, raw), gl) in self.embeddings.iter().zip(&tape.raw).zip(&level_grads) {
            let eg = emb.backward(raw, gl)?;
            tensors.push(eg.weight);
            tensors.push(eg.bias);
        }
        for row in block_grads {
            for level in row {
                tensors.extend(level);
            }
        }
        tensors.extend([tm.weight, tm.bias, ch.weight, ch.bias]);
        Ok(ModelGrads { tensors })
    }

    /// Adds `grads` into each parameter's accumulator.
    pub fn accumulate(&mut self, grads: &ModelGrads) -> Result<()> {
        let params = self.parameters_mut();
        if params.len() != grads.tensors.len() {
            return Err(Error::Config("gradient set does not match the model".into()));
        }
        for (p, g) in params.into_iter().zip(&grads.tensors) {
            p.grad.add_assign(g)?;
        }
        Ok(())
    }

    /// Backpropagates `upstream` (same shape as the forward output) through
    /// the pass recorded in `tape`, accumulating into parameter gradients.
    pub fn backward(&mut self, tape: &Tape, upstream: &Tensor) -> Result<()> {
        let grads = self.gradients(tape, upstream)?;
        self.accumulate(&grads)
    }
}

#[cfg(test)]
mod tests;
