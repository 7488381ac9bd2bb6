//! Finite-difference verification of every hand-written backward pass.
//!
//! Each case draws inputs and parameters from a seeded generator, contracts
//! the output with a random cotangent `r`, and compares the analytic
//! gradient of `<r, f(x)>` with central differences coordinate by
//! coordinate.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::layers::{Axis, ChebyKanLayer, DepthwiseConv, LinearMap, Mlp};
use crate::numerics::{finite_difference_grad, relative_error, GRADCHECK_EPS, GRADCHECK_TOL};
use crate::spectral::{FrequencyUpsampler, LinearInterpUpsampler};
use crate::{ModelConfig, OrderPolicy, Result, Rng, Tensor, TimeKanModel, UpsamplerKind};

/// Names of the single-operation checks, in report order.
pub const LAYER_OPS: [&str; 7] = [
    "chebyshev_kan",
    "depthwise_conv",
    "linear_channel",
    "linear_time",
    "mlp",
    "frequency_upsample",
    "linear_interp_upsample",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckOptions {
    pub seeds: Vec<u64>,
    /// Multiplies the analytic gradient of the named op by 1.01. Used to
    /// prove the harness can fail.
    pub corrupt: Option<String>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            seeds: (0..5).collect(),
            corrupt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpReport {
    pub op: String,
    pub cases: usize,
    pub coordinates: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub eps: f64,
    pub tolerance: f64,
    pub ops: Vec<OpReport>,
    pub passed: bool,
}

type Eval = Box<dyn Fn(&[Tensor]) -> Result<Tensor>>;
type Analytic = Box<dyn Fn(&[Tensor], &Tensor) -> Result<Vec<Tensor>>>;

struct Case {
    wrt: Vec<Tensor>,
    eval: Eval,
    analytic: Analytic,
}

fn gaussian(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gaussian()).collect()).expect("positive extents")
}

/// Returns (coordinates compared, max relative error).
fn run_case(case: &Case, rng: &mut Rng, corrupt: bool) -> Result<(usize, f64)> {
    let y = (case.eval)(&case.wrt)?;
    let r = gaussian(rng, y.shape());
    let mut analytic = (case.analytic)(&case.wrt, &r)?;
    if corrupt {
        for g in &mut analytic {
            *g = g.scale(1.01);
        }
    }
    let mut worst = 0.0f64;
    let mut count = 0;
    for (idx, grad) in analytic.iter().enumerate() {
        let mut probe = case.wrt.clone();
        let numeric = finite_difference_grad(
            |v| {
                probe[idx] = v.clone();
                match (case.eval)(&probe) {
                    Ok(out) => out.dot(&r).unwrap_or(f64::NAN),
                    Err(_) => f64::NAN,
                }
            },
            &case.wrt[idx],
            GRADCHECK_EPS,
        )?;
        for (a, b) in grad.data().iter().zip(numeric.data()) {
            worst = worst.max(relative_error(*a, *b));
            count += 1;
        }
    }
    Ok((count, worst))
}

/// (batch, length, channels) extents for the three layer shapes.
const SHAPES: [(usize, usize, usize); 3] = [(1, 1, 1), (2, 5, 3), (3, 8, 4)];

fn layer_case(op: &str, shape: usize, rng: &mut Rng) -> Result<Case> {
    let (b, l, c) = SHAPES[shape];
    let case = match op {
        "chebyshev_kan" => {
            let order = [1, 3, 5][shape];
            let out = [1, 2, 4][shape];
            let layer = ChebyKanLayer::new("kan", c, out, order, rng)?;
            let wrt = vec![gaussian(rng, &[b, l, c]), gaussian(rng, layer.theta.shape())];
            let template = layer.clone();
            Case {
                wrt,
                eval: Box::new(move |t| {
                    let k = ChebyKanLayer::from_theta("kan", t[1].clone())?;
                    k.forward(&t[0])
                }),
                analytic: Box::new(move |t, r| {
                    let mut k = template.clone();
                    k.theta.value = t[1].clone();
                    let g = k.backward(&t[0], r)?;
                    Ok(vec![g.input, g.theta])
                }),
            }
        }
        "depthwise_conv" => {
            let m = [1, 3, 5][shape];
            let conv = DepthwiseConv::new("conv", c, m, rng)?;
            let wrt = vec![
                gaussian(rng, &[b, l, c]),
                gaussian(rng, conv.kernels.shape()),
                gaussian(rng, conv.bias.shape()),
            ];
            Case {
                wrt,
                eval: Box::new(|t| DepthwiseConv::from_values("conv", t[1].clone(), t[2].clone())?.forward(&t[0])),
                analytic: Box::new(|t, r| {
                    let g = DepthwiseConv::from_values("conv", t[1].clone(), t[2].clone())?.backward(&t[0], r)?;
                    Ok(vec![g.input, g.kernels, g.bias])
                }),
            }
        }
        "linear_channel" | "linear_time" => {
            let axis = if op == "linear_channel" { Axis::Channel } else { Axis::Time };
            let (input_extent, out) = match axis {
                Axis::Channel => (c, [1, 4, 2][shape]),
                Axis::Time => (l, [2, 3, 8][shape]),
            };
            let map = LinearMap::new("lin", input_extent, out, axis, rng)?;
            let wrt = vec![
                gaussian(rng, &[b, l, c]),
                gaussian(rng, map.weight.shape()),
                gaussian(rng, map.bias.shape()),
            ];
            Case {
                wrt,
                eval: Box::new(move |t| LinearMap::from_values("lin", t[1].clone(), t[2].clone(), axis)?.forward(&t[0])),
                analytic: Box::new(move |t, r| {
                    let g = LinearMap::from_values("lin", t[1].clone(), t[2].clone(), axis)?.backward(&t[0], r)?;
                    Ok(vec![g.input, g.weight, g.bias])
                }),
            }
        }
        "mlp" => {
            let mlp = Mlp::new("mlp", c, rng)?;
            let wrt = vec![
                gaussian(rng, &[b, l, c]),
                gaussian(rng, mlp.first.weight.shape()),
                gaussian(rng, mlp.first.bias.shape()),
                gaussian(rng, mlp.second.weight.shape()),
                gaussian(rng, mlp.second.bias.shape()),
            ];
            let build = |t: &[Tensor]| -> Result<Mlp> {
                Ok(Mlp {
                    first: LinearMap::from_values("fc1", t[1].clone(), t[2].clone(), Axis::Channel)?,
                    second: LinearMap::from_values("fc2", t[3].clone(), t[4].clone(), Axis::Channel)?,
                })
            };
            Case {
                wrt,
                eval: Box::new(move |t| build(t)?.forward(&t[0])),
                analytic: Box::new(move |t, r| {
                    let g = build(t)?.backward(&t[0], r)?;
                    Ok(vec![g.input, g.first.weight, g.first.bias, g.second.weight, g.second.bias])
                }),
            }
        }
        "frequency_upsample" | "linear_interp_upsample" => {
            let (lin, lout) = [(1, 3), (4, 8), (5, 8)][shape];
            let freq = op == "frequency_upsample";
            let apply = move |x: &Tensor, adjoint: bool| -> Result<Tensor> {
                let (n, m) = if adjoint { (lout, lin) } else { (lin, lout) };
                let mut out = vec![0.0; m];
                if freq {
                    let u = FrequencyUpsampler::new(lin, lout)?;
                    if adjoint { u.adjoint(x.data(), &mut out) } else { u.apply(x.data(), &mut out) }
                } else {
                    let u = LinearInterpUpsampler::new(lin, lout)?;
                    if adjoint { u.adjoint(x.data(), &mut out) } else { u.apply(x.data(), &mut out) }
                }
                debug_assert_eq!(x.len(), n);
                Tensor::new(&[m], out)
            };
            Case {
                wrt: vec![gaussian(rng, &[lin])],
                eval: Box::new(move |t| apply(&t[0], false)),
                analytic: Box::new(move |_, r| Ok(vec![apply(r, true)?])),
            }
        }
        other => return Err(crate::Error::Config(format!("unknown gradcheck op {other:?}"))),
    };
    Ok(case)
}

/// Whole-model toy configurations checked by the suite.
pub fn model_configs() -> Vec<ModelConfig> {
    let toy = |levels, embed_dim, lookback| ModelConfig {
        lookback,
        horizon: 4,
        embed_dim,
        levels,
        ..ModelConfig::default()
    };
    vec![
        toy(2, 2, 8),
        toy(3, 4, 16),
        ModelConfig { blocks: 2, ..toy(3, 2, 16) },
        ModelConfig { order_policy: OrderPolicy::Mlp, ..toy(2, 4, 8) },
        ModelConfig { upsampler: UpsamplerKind::LinearInterp, order_policy: OrderPolicy::Fixed(3), ..toy(3, 2, 8) },
    ]
}

pub fn model_op_name(c: &ModelConfig) -> String {
    format!(
        "model[k={},D={},T={},blocks={},{},{}]",
        c.levels, c.embed_dim, c.lookback, c.blocks, c.order_policy, c.upsampler
    )
}

fn model_case(config: &ModelConfig, seed: u64, rng: &mut Rng) -> Result<Case> {
    let model = TimeKanModel::new(ModelConfig { seed, ..config.clone() })?;
    let x = gaussian(rng, &[2, config.lookback]);
    let wrt = model.snapshot();
    let eval_model = model.clone();
    let eval_x = x.clone();
    Ok(Case {
        wrt,
        eval: Box::new(move |t| {
            let mut m = eval_model.clone();
            m.restore(t)?;
            m.forward(&eval_x)
        }),
        analytic: Box::new(move |t, r| {
            let mut m = model.clone();
            m.restore(t)?;
            let (_, tape) = m.forward_with_tape(&x)?;
            Ok(m.gradients(&tape, r)?.tensors)
        }),
    })
}

fn summarize(op: String, results: &[(usize, f64)]) -> OpReport {
    let max_rel_error = results.iter().map(|r| r.1).fold(0.0, f64::max);
    OpReport {
        op,
        cases: results.len(),
        coordinates: results.iter().map(|r| r.0).sum(),
        max_rel_error,
        passed: max_rel_error <= GRADCHECK_TOL,
    }
}

/// Runs every layer check over all shapes and seeds, then every toy model.
pub fn run_suite(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let mut ops = Vec::new();
    for op in LAYER_OPS {
        let corrupt = opts.corrupt.as_deref() == Some(op);
        let mut results = Vec::new();
        for &seed in &opts.seeds {
            for shape in 0..SHAPES.len() {
                let mut rng = Rng::new(seed.wrapping_mul(0x9E37_79B9).wrapping_add(shape as u64));
                let case = layer_case(op, shape, &mut rng)?;
                results.push(run_case(&case, &mut rng, corrupt)?);
            }
        }
        ops.push(summarize(op.to_string(), &results));
    }
    for config in model_configs() {
        let name = model_op_name(&config);
        let corrupt = opts.corrupt.as_deref().is_some_and(|c| c == name || c == "model");
        let mut results = Vec::new();
        for &seed in &opts.seeds {
            let mut rng = Rng::new(seed ^ 0xA5A5);
            let case = model_case(&config, seed, &mut rng)?;
            results.push(run_case(&case, &mut rng, corrupt)?);
        }
        ops.push(summarize(name, &results));
    }
    let passed = ops.iter().all(|o| o.passed);
    Ok(GradcheckReport {
        eps: GRADCHECK_EPS,
        tolerance: GRADCHECK_TOL,
        ops,
        passed,
    })
}
