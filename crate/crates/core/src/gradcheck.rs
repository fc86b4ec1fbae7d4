//! Central finite-difference checks of every analytic gradient.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;
use crate::model::{model_backward, model_forward, ModelConfig, ModelParams, SeBlock, SeParams};
use crate::ops::{AvgPool, Backward, BatchNorm, Conv2d, ConvSpec, Dense, DepthwiseConv2d, Dropout, Elu, NormConfig, RunningStats, Sigmoid, Softmax};
use crate::train::{cross_entropy, cross_entropy_grad};
use crate::{Rng, Tensor};

/// Finite-difference step.
pub const STEP: f64 = 1e-5;
/// Denominator floor of [`relative_error`].
pub const FLOOR: f64 = 1e-6;
pub const OP_TOLERANCE: f64 = 1e-4;
pub const MODEL_TOLERANCE: f64 = 1e-3;

/// `|a - n| / max(|a|, |n|, FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(FLOOR);
    (analytic - numeric).abs() / scale
}

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every element `i`.
pub fn numeric_gradient(mut f: impl FnMut(&Tensor) -> Result<f64>, x: &Tensor, step: f64) -> Result<Tensor> {
    let mut probe = x.clone();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let v = x.data()[i];
        probe.data_mut()[i] = v + step;
        let plus = f(&probe)?;
        probe.data_mut()[i] = v - step;
        let minus = f(&probe)?;
        probe.data_mut()[i] = v;
        g.push((plus - minus) / (2.0 * step));
    }
    Tensor::new(x.shape(), g)
}

/// Outcome of one analytic-versus-numeric comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_error: f64,
    /// Flat index of the worst element with its analytic and numeric values.
    pub worst: (usize, f64, f64),
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

pub fn compare(name: impl Into<String>, analytic: &Tensor, numeric: &Tensor, tolerance: f64) -> CheckResult {
    let mut worst = (0, 0.0, 0.0);
    let mut max = 0.0;
    for (i, (&a, &n)) in analytic.data().iter().zip(numeric.data()).enumerate() {
        let e = relative_error(a, n);
        if e > max || i == 0 {
            max = e;
            worst = (i, a, n);
        }
    }
    CheckResult { name: name.into(), max_rel_error: max, worst, tolerance }
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Checks `analytic` against the numeric gradient of `<upstream, f(x)>`.
fn check_vjp(name: &str, x: &Tensor, upstream: &Tensor, analytic: &Tensor, f: impl Fn(&Tensor) -> Result<Tensor>) -> Result<CheckResult> {
    let numeric = numeric_gradient(|p| f(p).map(|y| dot(upstream, &y)), x, STEP)?;
    Ok(compare(name, analytic, &numeric, OP_TOLERANCE))
}

/// Uniform values in `[-1, 1]` kept at least `gap` away from zero, so
/// kinked activations are differentiable at every probe.
fn away_from_zero(rng: &mut Rng, shape: &[usize], gap: f64) -> Result<Tensor> {
    let t = Tensor::uniform(rng, shape, -1.0, 1.0)?;
    Ok(t.map(|v| if v.abs() < gap { v.signum() * gap + v } else { v }))
}

fn conv_checks(rng: &mut Rng, out: &mut Vec<CheckResult>) -> Result<()> {
    for r in [1, 2, 4, 6] {
        let spec = ConvSpec::same(r);
        let x = Tensor::uniform(rng, &[2, 16, 2, 2], -1.0, 1.0)?;
        let w = Tensor::uniform(rng, &[3, 1, 2, 3], -1.0, 1.0)?;
        let b = Tensor::uniform(rng, &[3], -1.0, 1.0)?;
        let (y, ctx) = Conv2d::forward(&x, &w, Some(&b), spec)?;
        let u = Tensor::uniform(rng, y.shape(), -1.0, 1.0)?;
        let g = ctx.backward(&u)?;
        let name = format!("conv2d r={r}");
        out.push(check_vjp(&format!("{name} input"), &x, &u, &g.input, |p| crate::ops::conv2d(p, &w, Some(&b), spec))?);
        out.push(check_vjp(&format!("{name} weight"), &w, &u, &g.weight, |p| crate::ops::conv2d(&x, p, Some(&b), spec))?);
        let gb = g.bias.expect("bias requested");
        out.push(check_vjp(&format!("{name} bias"), &b, &u, &gb, |p| crate::ops::conv2d(&x, &w, Some(p), spec))?);
    }
    let x = Tensor::uniform(rng, &[2, 6, 3, 2], -1.0, 1.0)?;
    let w = Tensor::uniform(rng, &[1, 3, 2, 2], -1.0, 1.0)?;
    let spec = ConvSpec::valid();
    let (y, ctx) = DepthwiseConv2d::forward(&x, &w, spec)?;
    let u = Tensor::uniform(rng, y.shape(), -1.0, 1.0)?;
    let g = ctx.backward(&u)?;
    out.push(check_vjp("depthwise_conv2d input", &x, &u, &g.input, |p| crate::ops::depthwise_conv2d(p, &w, spec))?);
    out.push(check_vjp("depthwise_conv2d weight", &w, &u, &g.weight, |p| crate::ops::depthwise_conv2d(&x, p, spec))?);
    Ok(())
}

fn norm_checks(rng: &mut Rng, out: &mut Vec<CheckResult>) -> Result<()> {
    let cfg = NormConfig::default();
    let x = Tensor::uniform(rng, &[3, 4, 2, 3], -2.0, 2.0)?;
    let gamma = Tensor::uniform(rng, &[3], 0.5, 1.5)?;
    let beta = Tensor::uniform(rng, &[3], -0.5, 0.5)?;
    let running = RunningStats::new(3)?;
    let (y, ctx) = BatchNorm::forward(&x, &gamma, &beta, &running, true, cfg)?;
    let u = Tensor::uniform(rng, y.shape(), -1.0, 1.0)?;
    let g = ctx.backward(&u)?;
    let bn = |x: &Tensor, gm: &Tensor, bt: &Tensor| crate::ops::batch_norm(x, gm, bt, &running, true, cfg).map(|r| r.0);
    out.push(check_vjp("batch_norm (training) input", &x, &u, &g.input, |p| bn(p, &gamma, &beta))?);
    out.push(check_vjp("batch_norm (training) gamma", &gamma, &u, &g.gamma, |p| bn(&x, p, &beta))?);
    out.push(check_vjp("batch_norm (training) beta", &beta, &u, &g.beta, |p| bn(&x, &gamma, p))?);
    Ok(())
}

fn elementwise_checks(rng: &mut Rng, out: &mut Vec<CheckResult>) -> Result<()> {
    let x = away_from_zero(rng, &[4, 5], 1e-3)?.scale(2.0);
    let u = Tensor::uniform(rng, &[4, 5], -1.0, 1.0)?;
    let (_, elu) = Elu::forward(&x, 1.0)?;
    out.push(check_vjp("elu", &x, &u, &elu.backward(&u)?, |p| crate::ops::elu(p, 1.0))?);
    let (_, sig) = Sigmoid::forward(&x);
    out.push(check_vjp("sigmoid", &x, &u, &sig.backward(&u)?, |p| Ok(crate::ops::sigmoid(p)))?);
    let (_, sm) = Softmax::forward(&x, 1)?;
    out.push(check_vjp("softmax", &x, &u, &sm.backward(&u)?, |p| crate::ops::softmax(p, 1))?);

    let mut mask_rng = rng.clone();
    let (_, drop) = Dropout::forward(&x, 0.3, true, &mut mask_rng)?;
    let fixed = rng.clone();
    *rng = mask_rng;
    out.push(check_vjp("dropout", &x, &u, &drop.backward(&u)?, |p| crate::ops::dropout(p, 0.3, true, &mut fixed.clone()))?);

    let xp = Tensor::uniform(rng, &[2, 9, 3, 2], -1.0, 1.0)?;
    let (yp, pool) = AvgPool::forward(&xp, (4, 2))?;
    let up = Tensor::uniform(rng, yp.shape(), -1.0, 1.0)?;
    out.push(check_vjp("avg_pool", &xp, &up, &pool.backward(&up)?, |p| crate::ops::avg_pool(p, (4, 2)))?);

    let xd = Tensor::uniform(rng, &[3, 4], -1.0, 1.0)?;
    let w = Tensor::uniform(rng, &[4, 2], -1.0, 1.0)?;
    let b = Tensor::uniform(rng, &[2], -1.0, 1.0)?;
    let (yd, dense) = Dense::forward(&xd, &w, &b)?;
    let ud = Tensor::uniform(rng, yd.shape(), -1.0, 1.0)?;
    let g = dense.backward(&ud)?;
    out.push(check_vjp("dense input", &xd, &ud, &g.input, |p| crate::ops::dense(p, &w, &b))?);
    out.push(check_vjp("dense weight", &w, &ud, &g.weight, |p| crate::ops::dense(&xd, p, &b))?);
    out.push(check_vjp("dense bias", &b, &ud, &g.bias, |p| crate::ops::dense(&xd, &w, p))?);

    // softmax feeding the loss, differentiated end to end
    let logits = Tensor::uniform(rng, &[3, 4], -2.0, 2.0)?;
    let labels = [0, 3, 1];
    let (probs, sm) = Softmax::forward(&logits, 1)?;
    let analytic = sm.backward(&cross_entropy_grad(&probs, &labels)?)?;
    let numeric = numeric_gradient(|p| cross_entropy(&crate::ops::softmax(p, 1)?, &labels), &logits, STEP)?;
    out.push(compare("softmax + cross_entropy", &analytic, &numeric, OP_TOLERANCE));
    Ok(())
}

fn se_checks(rng: &mut Rng, out: &mut Vec<CheckResult>) -> Result<()> {
    let (t, c, h) = (5, 4, 2);
    let x = Tensor::uniform(rng, &[2, t, c], -1.0, 1.0)?;
    let params = SeParams {
        w1: Tensor::uniform(rng, &[c, h], -1.0, 1.0)?,
        // positive hidden biases keep the bottleneck away from its kink
        b1: Tensor::uniform(rng, &[h], 1.0, 1.5)?,
        w2: Tensor::uniform(rng, &[h, c], -1.0, 1.0)?,
        b2: Tensor::uniform(rng, &[c], -0.5, 0.5)?,
    };
    let (y, ctx) = SeBlock::forward(&x, &params)?;
    let u = Tensor::uniform(rng, y.shape(), -1.0, 1.0)?;
    let g = ctx.backward(&u)?;
    let run = |p: &SeParams, x: &Tensor| crate::model::se_block(x, p);
    out.push(check_vjp("se_block input", &x, &u, &g.input, |p| run(&params, p))?);
    let with = |f: &dyn Fn(&mut SeParams)| {
        let mut q = params.clone();
        f(&mut q);
        q
    };
    out.push(check_vjp("se_block w1", &params.w1, &u, &g.params.w1, |p| run(&with(&|q| q.w1 = p.clone()), &x))?);
    out.push(check_vjp("se_block b1", &params.b1, &u, &g.params.b1, |p| run(&with(&|q| q.b1 = p.clone()), &x))?);
    out.push(check_vjp("se_block w2", &params.w2, &u, &g.params.w2, |p| run(&with(&|q| q.w2 = p.clone()), &x))?);
    out.push(check_vjp("se_block b2", &params.b2, &u, &g.params.b2, |p| run(&with(&|q| q.b2 = p.clone()), &x))?);
    Ok(())
}

/// Every layer primitive against finite differences of a random linear
/// functional of its output, at tolerance [`OP_TOLERANCE`].
pub fn op_suite(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = Rng::new(seed);
    let mut out = Vec::new();
    conv_checks(&mut rng, &mut out)?;
    norm_checks(&mut rng, &mut out)?;
    elementwise_checks(&mut rng, &mut out)?;
    se_checks(&mut rng, &mut out)?;
    Ok(out)
}

/// Whole-network check of the training loss, one result per trainable
/// parameter path, at tolerance [`MODEL_TOLERANCE`]. Dropout masks are
/// frozen by replaying the same generator state for every evaluation.
pub fn model_check(config: &ModelConfig, batch: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = Rng::new(seed);
    let params = ModelParams::init(config, &mut rng)?;
    let x = Tensor::uniform(&mut rng, &[batch, config.channels, config.samples], -1.0, 1.0)?;
    let labels: Vec<usize> = (0..batch).map(|i| i % config.n_classes).collect();
    let dropout = Rng::with_stream(seed, 7);

    let loss = |p: &ModelParams| -> Result<f64> {
        let (probs, _) = model_forward(&x, p, config, true, &mut dropout.clone())?;
        cross_entropy(&probs, &labels)
    };
    let (_, trace) = model_forward(&x, &params, config, true, &mut dropout.clone())?;
    let grads = model_backward(trace, &labels, &params)?;

    let mut out = Vec::new();
    let names: Vec<String> = params.named().into_iter().filter(|p| p.2 == crate::model::ParamKind::Trainable).map(|p| p.0).collect();
    for name in names {
        let analytic = grads.get(&name).expect("gradient for every parameter");
        let base = params.get(&name).expect("named parameter").clone();
        let mut probe = params.clone();
        let numeric = numeric_gradient(
            |t| {
                probe.set(&name, t.clone())?;
                loss(&probe)
            },
            &base,
            STEP,
        )?;
        out.push(compare(name, analytic, &numeric, MODEL_TOLERANCE));
    }
    Ok(out)
}
