//! MSE training with Adam, early stopping on validation MSE, and metrics.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{DatasetSplit, Part, WindowRef};
use crate::model::ModelGrads;
use crate::{Error, Parameter, Result, Rng, Tensor, TimeKanModel};

/// Samples per gradient work unit. Fixed so the reduction order, and hence
/// every bit of the result, does not depend on the thread count.
pub const GRAD_CHUNK: usize = 8;
/// Samples per forward pass during evaluation.
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global-norm clipping threshold; 0 disables.
    pub clip_norm: f64,
    /// Step between consecutive training window starts.
    pub stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 32,
            max_epochs: 50,
            patience: 10,
            seed: 2024,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 5.0,
            stride: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("train.lr must be a finite non-negative number");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 || self.stride == 0 {
            return bad("train.batch_size, max_epochs, patience and stride must be positive");
        }
        if self.patience > self.max_epochs {
            return bad("train.patience must not exceed train.max_epochs");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) || !(self.clip_norm >= 0.0) {
            return bad("adam eps must be positive and clip_norm non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub train_loss: Vec<f64>,
    pub val_mse: Vec<f64>,
    /// 1-based.
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub test_mse: f64,
    pub test_mae: f64,
    pub steps: u64,
    /// Filled in by callers that own a clock.
    pub wall_clock_seconds: f64,
    pub param_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitEvent {
    Step { epoch: usize, step: u64, loss: f64 },
    Epoch { epoch: usize, train_loss: f64, val_mse: f64, improved: bool },
}

fn same_shape(pred: &Tensor, target: &Tensor, op: &'static str) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            op,
            left: pred.shape().to_vec(),
            right: target.shape().to_vec(),
        });
    }
    Ok(())
}

pub fn mse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    same_shape(pred, target, "mse")?;
    let s: f64 = pred.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / pred.len() as f64)
}

pub fn mae(pred: &Tensor, target: &Tensor) -> Result<f64> {
    same_shape(pred, target, "mae")?;
    let s: f64 = pred.data().iter().zip(target.data()).map(|(a, b)| libm::fabs(a - b)).sum();
    Ok(s / pred.len() as f64)
}

/// One Adam update with bias correction; `step` is 1-based. Leaves the
/// gradient accumulators untouched.
pub fn adam_step(params: &mut [&mut Parameter], cfg: &TrainConfig, step: u64) {
    let t = step as f64;
    let c1 = 1.0 - libm::pow(cfg.beta1, t);
    let c2 = 1.0 - libm::pow(cfg.beta2, t);
    for p in params.iter_mut() {
        let Parameter {
            value,
            grad,
            first_moment,
            second_moment,
            ..
        } = &mut **p;
        let g = grad.data();
        let m = first_moment.data_mut();
        for (mi, gi) in m.iter_mut().zip(g) {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
        }
        let v = second_moment.data_mut();
        for (vi, gi) in v.iter_mut().zip(g) {
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
        }
        let (m, v) = (first_moment.data(), second_moment.data());
        for ((x, mi), vi) in value.data_mut().iter_mut().zip(m).zip(v) {
            *x -= cfg.lr * (mi / c1) / (libm::sqrt(vi / c2) + cfg.eps);
        }
    }
}

/// Mean-squared-error loss of a batch and its parameter gradients.
pub fn batch_gradients(model: &TimeKanModel, inputs: &Tensor, targets: &Tensor) -> Result<(f64, ModelGrads)> {
    let (b, t) = inputs.dims2()?;
    let f = targets.dims2()?.1;
    let denom = (b * f) as f64;
    let chunk = |i: usize| -> Result<(f64, ModelGrads)> {
        let lo = i * GRAD_CHUNK;
        let hi = (lo + GRAD_CHUNK).min(b);
        let x = Tensor::new(&[hi - lo, t], inputs.data()[lo * t..hi * t].to_vec())?;
        let y = &targets.data()[lo * f..hi * f];
        let (pred, tape) = model.forward_with_tape(&x)?;
        let mut sq = 0.0;
        let up: Vec<f64> = pred
            .data()
            .iter()
            .zip(y)
            .map(|(p, y)| {
                sq += (p - y) * (p - y);
                2.0 * (p - y) / denom
            })
            .collect();
        let up = Tensor::new(&[hi - lo, f], up)?;
        Ok((sq, model.gradients(&tape, &up)?))
    };
    let n = b.div_ceil(GRAD_CHUNK);
    #[cfg(feature = "parallel")]
    let parts: Vec<Result<(f64, ModelGrads)>> = {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(chunk).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Result<(f64, ModelGrads)>> = (0..n).map(chunk).collect();
    let mut iter = parts.into_iter();
    let (mut sq, mut grads) = iter.next().ok_or_else(|| Error::Data("empty batch".into()))??;
    for part in iter {
        let (s, g) = part?;
        sq += s;
        grads.add_assign(&g)?;
    }
    Ok((sq / denom, grads))
}

/// Standardized-unit MSE and MAE of `model` over the given windows.
pub fn evaluate_windows(model: &TimeKanModel, split: &DatasetSplit, refs: &[WindowRef]) -> Result<(f64, f64)> {
    let (t, f) = (model.config().lookback, model.config().horizon);
    if refs.is_empty() {
        return Err(Error::Data("no evaluation windows".into()));
    }
    let chunk = |c: &[WindowRef]| -> Result<(f64, f64)> {
        let batch = split.batch(c, t, f)?;
        let pred = model.forward(&batch.inputs)?;
        let n = pred.len() as f64;
        Ok((mse(&pred, &batch.targets)? * n, mae(&pred, &batch.targets)? * n))
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<Result<(f64, f64)>> = {
        use rayon::prelude::*;
        refs.par_chunks(EVAL_CHUNK).map(chunk).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Result<(f64, f64)>> = refs.chunks(EVAL_CHUNK).map(chunk).collect();
    let (mut se, mut ae) = (0.0, 0.0);
    for p in parts {
        let (a, b) = p?;
        se += a;
        ae += b;
    }
    let n = (refs.len() * f) as f64;
    Ok((se / n, ae / n))
}

pub fn evaluate(model: &TimeKanModel, split: &DatasetSplit, part: Part) -> Result<(f64, f64)> {
    let c = model.config();
    evaluate_windows(model, split, &split.windows(part, c.lookback, c.horizon, 1))
}

fn set_grads(model: &mut TimeKanModel, grads: ModelGrads, scale: f64) {
    for (p, g) in model.parameters_mut().into_iter().zip(grads.tensors) {
        p.grad = if scale == 1.0 { g } else { g.scale(scale) };
    }
}

/// Trains with early stopping and leaves `model` holding the parameters of
/// the epoch with the lowest validation MSE.
pub fn fit(
    model: &mut TimeKanModel,
    split: &DatasetSplit,
    cfg: &TrainConfig,
    mut observer: Option<&mut dyn FnMut(FitEvent)>,
) -> Result<FitReport> {
    cfg.validate()?;
    let (t, f) = (model.config().lookback, model.config().horizon);
    if split.windows(Part::Train, t, f, cfg.stride).is_empty() {
        return Err(Error::Data(format!("training split holds no window of length {}", t + f)));
    }
    let mut rng = Rng::new(cfg.seed);
    let mut best = model.snapshot();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut step = 0u64;
    let mut train_loss = Vec::new();
    let mut val_mse = Vec::new();
    for epoch in 1..=cfg.max_epochs {
        let order = split.shuffled_windows(t, f, cfg.stride, &mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for refs in order.chunks(cfg.batch_size) {
            let batch = split.batch(refs, t, f)?;
            let (loss, grads) = batch_gradients(model, &batch.inputs, &batch.targets)?;
            step += 1;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    stage: format!("training loss at epoch {epoch}, step {step}"),
                    index: 0,
                });
            }
            let norm = grads.global_norm();
            let scale = if cfg.clip_norm > 0.0 && norm > cfg.clip_norm {
                cfg.clip_norm / norm
            } else {
                1.0
            };
            set_grads(model, grads, scale);
            adam_step(&mut model.parameters_mut(), cfg, step);
            model.zero_grad();
            total += loss;
            batches += 1;
            if let Some(obs) = observer.as_mut() {
                obs(FitEvent::Step { epoch, step, loss });
            }
        }
        let epoch_loss = total / batches as f64;
        let (val, _) = evaluate(model, split, Part::Val)?;
        if !val.is_finite() {
            return Err(Error::NonFinite {
                stage: format!("validation MSE at epoch {epoch}"),
                index: 0,
            });
        }
        train_loss.push(epoch_loss);
        val_mse.push(val);
        let improved = val < best_val;
        if improved {
            best_val = val;
            best_epoch = epoch;
            best = model.snapshot();
            stale = 0;
        } else {
            stale += 1;
        }
        if let Some(obs) = observer.as_mut() {
            obs(FitEvent::Epoch {
                epoch,
                train_loss: epoch_loss,
                val_mse: val,
                improved,
            });
        }
        if stale >= cfg.patience {
            break;
        }
    }
    model.restore(&best)?;
    let (test_mse, test_mae) = evaluate(model, split, Part::Test)?;
    Ok(FitReport {
        train_loss,
        val_mse,
        best_epoch,
        best_val_mse: best_val,
        test_mse,
        test_mae,
        steps: step,
        wall_clock_seconds: 0.0,
        param_count: model.count_params(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split_and_standardize, Family, RawDataset};
    use crate::ModelConfig;
    use alloc::vec;

    fn t1(v: &[f64]) -> Tensor {
        Tensor::new(&[v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn metric_examples() {
        let z = t1(&[1.0, 2.0]);
        assert_eq!((mse(&z, &z).unwrap(), mae(&z, &z).unwrap()), (0.0, 0.0));
        let (p, q) = (t1(&[2.0, 1.0]), t1(&[1.0, 2.0]));
        assert_eq!((mse(&p, &q).unwrap(), mae(&p, &q).unwrap()), (1.0, 1.0));
        let (p, q) = (t1(&[3.0, 0.0, 0.0, 0.0]), t1(&[0.0; 4]));
        assert_eq!((mse(&p, &q).unwrap(), mae(&p, &q).unwrap()), (2.25, 0.75));
        assert!(mse(&p, &t1(&[0.0; 3])).is_err());
    }

    fn scalar_param(v: f64, g: f64) -> Parameter {
        let mut p = Parameter::from_value("w", t1(&[v]));
        p.grad = t1(&[g]);
        p
    }

    #[test]
    fn adam_zero_grad_keeps_values() {
        let mut p = scalar_param(0.7, 0.0);
        adam_step(&mut [&mut p], &TrainConfig::default(), 1);
        assert_eq!(p.value.data(), &[0.7]);
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        let cfg = TrainConfig { eps: 1e-14, ..TrainConfig::default() };
        for g in [3.0, -0.02, 1e-4] {
            let mut p = scalar_param(0.0, g);
            adam_step(&mut [&mut p], &cfg, 1);
            let expect = -cfg.lr * libm::copysign(1.0, g);
            assert!((p.value.data()[0] - expect).abs() < 1e-9 * cfg.lr.max(1.0));
        }
    }

    #[test]
    fn adam_converges_on_quadratic() {
        // f(w) = (w - 3)^2
        let cfg = TrainConfig { lr: 0.05, ..TrainConfig::default() };
        let mut p = scalar_param(-2.0, 0.0);
        for step in 1..=2000 {
            let w = p.value.data()[0];
            p.grad = t1(&[2.0 * (w - 3.0)]);
            adam_step(&mut [&mut p], &cfg, step);
        }
        assert!((p.value.data()[0] - 3.0).abs() <= 1e-6, "{}", p.value.data()[0]);
    }

    fn sinusoid_split(rows: usize, t: usize, f: usize) -> DatasetSplit {
        let values = (0..rows)
            .map(|i| libm::sin(2.0 * core::f64::consts::PI * i as f64 / 12.0))
            .collect();
        let raw = RawDataset::new(vec!["y".into()], values).unwrap();
        split_and_standardize(&raw, Family::Other, t, f).unwrap()
    }

    fn toy_model(seed: u64) -> TimeKanModel {
        TimeKanModel::new(ModelConfig {
            lookback: 16,
            horizon: 8,
            embed_dim: 4,
            levels: 2,
            seed,
            ..ModelConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn lr_zero_stops_after_two_epochs_with_identical_params() {
        let split = sinusoid_split(300, 16, 8);
        let mut model = toy_model(1);
        let before = model.snapshot();
        let cfg = TrainConfig { lr: 0.0, patience: 1, max_epochs: 5, ..TrainConfig::default() };
        let rep = fit(&mut model, &split, &cfg, None).unwrap();
        assert_eq!(rep.train_loss.len(), 2);
        assert_eq!(rep.best_epoch, 1);
        for (a, b) in before.iter().zip(model.snapshot()) {
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn loss_decreases_on_clean_sinusoid() {
        let split = sinusoid_split(400, 16, 8);
        let mut model = toy_model(5);
        let cfg = TrainConfig { lr: 3e-3, max_epochs: 5, patience: 5, ..TrainConfig::default() };
        let rep = fit(&mut model, &split, &cfg, None).unwrap();
        let ups = rep.train_loss.windows(2).filter(|w| w[1] >= w[0]).count();
        assert!(ups <= 1, "{:?}", rep.train_loss);
        assert_eq!(rep.best_val_mse, rep.val_mse.iter().cloned().fold(f64::INFINITY, f64::min));
    }

    #[test]
    fn best_epoch_params_are_restored() {
        let split = sinusoid_split(300, 16, 8);
        let mut model = toy_model(2);
        let cfg = TrainConfig { lr: 0.05, max_epochs: 6, patience: 6, ..TrainConfig::default() };
        let rep = fit(&mut model, &split, &cfg, None).unwrap();
        let (val, _) = evaluate(&model, &split, Part::Val).unwrap();
        assert_eq!(val, rep.best_val_mse);
    }

    #[test]
    fn seeded_losses_repeat_bitwise() {
        let split = sinusoid_split(300, 16, 8);
        let run = || {
            let mut losses = Vec::new();
            let mut model = toy_model(9);
            let cfg = TrainConfig { max_epochs: 2, patience: 2, ..TrainConfig::default() };
            let mut obs = |e: FitEvent| {
                if let FitEvent::Step { loss, .. } = e {
                    losses.push(loss.to_bits());
                }
            };
            fit(&mut model, &split, &cfg, Some(&mut obs)).unwrap();
            losses.truncate(10);
            losses
        };
        let a = run();
        assert_eq!(a.len(), 10);
        assert_eq!(a, run());
    }

    #[test]
    fn duplicated_batch_has_single_sample_loss() {
        let model = toy_model(4);
        let x: Vec<f64> = (0..16).map(|i| libm::cos(i as f64 * 0.4)).collect();
        let y: Vec<f64> = (0..8).map(|i| libm::sin(i as f64)).collect();
        let one = batch_gradients(&model, &Tensor::new(&[1, 16], x.clone()).unwrap(), &Tensor::new(&[1, 8], y.clone()).unwrap()).unwrap();
        let xs = x.repeat(11);
        let ys = y.repeat(11);
        let many = batch_gradients(&model, &Tensor::new(&[11, 16], xs).unwrap(), &Tensor::new(&[11, 8], ys).unwrap()).unwrap();
        assert!((one.0 - many.0).abs() < 1e-12);
        for (a, b) in one.1.tensors.iter().zip(&many.1.tensors) {
            assert!(a.max_abs_diff(b).unwrap() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = TrainConfig { patience: 60, ..TrainConfig::default() };
        assert!(cfg.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
