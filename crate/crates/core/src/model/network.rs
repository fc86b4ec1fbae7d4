use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::se::SeBlock;
use super::{BatchNormParams, ModelConfig, ModelParams, SeParams};
use crate::error::{shape_err, Error, Result};
use crate::ops::{AvgPool, Backward, BatchNorm, BatchNormGrads, Conv2d, ConvSpec, Dense, DepthwiseConv2d, Dropout, Elu, RunningStats, Softmax};
use crate::train::cross_entropy_grad;
use crate::{Rng, Tensor};

fn checked(t: Tensor, layer: &str) -> Result<Tensor> {
    t.ensure_finite(layer)?;
    Ok(t)
}

/// BN -> ELU -> dropout tail shared by several stages.
struct NormActDrop {
    bn: BatchNorm,
    elu: Elu,
    drop: Dropout,
}

impl NormActDrop {
    fn forward(
        x: &Tensor,
        bn: &BatchNormParams,
        cfg: &ModelConfig,
        training: bool,
        rng: &mut Rng,
        name: &str,
        running: &mut Vec<RunningStats>,
    ) -> Result<(Tensor, Self)> {
        let (y, bn_ctx) = BatchNorm::forward(x, &bn.gamma, &bn.beta, &bn.running, training, cfg.norm())?;
        running.push(bn_ctx.updated_stats().clone());
        let y = checked(y, &format!("{name}.bn"))?;
        let (y, elu) = Elu::forward(&y, cfg.elu_alpha)?;
        let (y, drop) = Dropout::forward(&y, cfg.dropout, training, rng)?;
        Ok((y, Self { bn: bn_ctx, elu, drop }))
    }

    fn backward(self, up: &Tensor) -> Result<(Tensor, BatchNormGrads)> {
        let g = self.drop.backward(up)?;
        let g = self.elu.backward(&g)?;
        let bn = self.bn.backward(&g)?;
        Ok((bn.input.clone(), bn))
    }
}

struct CvTrace {
    conv1: Conv2d,
    bn1: BatchNorm,
    pw: Conv2d,
    bn2: BatchNorm,
    dw: DepthwiseConv2d,
    bn3: BatchNorm,
    elu: Elu,
    pool: AvgPool,
    drop: Dropout,
}

struct BranchTrace {
    conv: Conv2d,
    tail: NormActDrop,
}

struct SpTrace {
    branches: Vec<BranchTrace>,
    pooled_len: usize,
    fuse: Conv2d,
    tail: NormActDrop,
}

struct WindowTrace {
    se: Option<SeBlock>,
    dense: Dense,
    softmax: Softmax,
}

struct HeadTrace {
    windows: Vec<WindowTrace>,
    fuse_width: usize,
    window_len: usize,
    f2: usize,
}

/// Everything a training-mode forward pass must keep for
/// [`model_backward`].
pub struct ForwardTrace {
    training: bool,
    cv: CvTrace,
    sp: SpTrace,
    head: HeadTrace,
    window_probs: Vec<Tensor>,
    probs: Tensor,
    running: Vec<RunningStats>,
}

impl ForwardTrace {
    pub fn is_training(&self) -> bool {
        self.training
    }

    /// Per-window class probabilities, each `[batch, n_classes]`.
    pub fn window_probs(&self) -> &[Tensor] {
        &self.window_probs
    }

    /// Window-averaged class probabilities, `[batch, n_classes]`.
    pub fn probs(&self) -> &Tensor {
        &self.probs
    }

    /// Running batch-norm statistics after this pass, in the order
    /// bn1, bn2, bn3, atrous branches, fusion.
    pub fn running_stats(&self) -> &[RunningStats] {
        &self.running
    }
}

fn cv_forward(x: &Tensor, p: &ModelParams, cfg: &ModelConfig, training: bool, rng: &mut Rng, running: &mut Vec<RunningStats>) -> Result<(Tensor, CvTrace)> {
    let norm = cfg.norm();
    let (y, conv1) = Conv2d::forward(x, &p.temporal, None, ConvSpec::same(1))?;
    let y = checked(y, "cv.conv1")?;
    let (y, bn1) = BatchNorm::forward(&y, &p.bn1.gamma, &p.bn1.beta, &p.bn1.running, training, norm)?;
    running.push(bn1.updated_stats().clone());
    let y = checked(y, "cv.bn1")?;
    let (y, pw) = Conv2d::forward(&y, &p.pointwise, None, ConvSpec::same(1))?;
    let y = checked(y, "cv.pw")?;
    let (y, bn2) = BatchNorm::forward(&y, &p.bn2.gamma, &p.bn2.beta, &p.bn2.running, training, norm)?;
    running.push(bn2.updated_stats().clone());
    let y = checked(y, "cv.bn2")?;
    let (y, dw) = DepthwiseConv2d::forward(&y, &p.depthwise, ConvSpec::valid())?;
    let y = checked(y, "cv.dw")?;
    let (y, bn3) = BatchNorm::forward(&y, &p.bn3.gamma, &p.bn3.beta, &p.bn3.running, training, norm)?;
    running.push(bn3.updated_stats().clone());
    let y = checked(y, "cv.bn3")?;
    let (y, elu) = Elu::forward(&y, cfg.elu_alpha)?;
    let (y, pool) = AvgPool::forward(&y, (cfg.pool1, 1))?;
    let (y, drop) = Dropout::forward(&y, cfg.dropout, training, rng)?;
    Ok((y, CvTrace { conv1, bn1, pw, bn2, dw, bn3, elu, pool, drop }))
}

fn cv_backward(t: CvTrace, up: &Tensor, g: &mut ModelParams) -> Result<()> {
    let up = t.drop.backward(up)?;
    let up = t.pool.backward(&up)?;
    let up = t.elu.backward(&up)?;
    let bn3 = t.bn3.backward(&up)?;
    let dw = t.dw.backward(&bn3.input)?;
    let bn2 = t.bn2.backward(&dw.input)?;
    let pw = t.pw.backward(&bn2.input)?;
    let bn1 = t.bn1.backward(&pw.input)?;
    let conv1 = t.conv1.backward(&bn1.input)?;
    g.temporal = conv1.weight;
    g.pointwise = pw.weight;
    g.depthwise = dw.weight;
    set_bn(&mut g.bn1, bn1);
    set_bn(&mut g.bn2, bn2);
    set_bn(&mut g.bn3, bn3);
    Ok(())
}

fn set_bn(slot: &mut BatchNormParams, grads: BatchNormGrads) {
    slot.gamma = grads.gamma;
    slot.beta = grads.beta;
}

fn sp_forward(x: &Tensor, p: &ModelParams, cfg: &ModelConfig, training: bool, rng: &mut Rng, running: &mut Vec<RunningStats>) -> Result<(Tensor, SpTrace)> {
    let pooled_len = x.shape()[1];
    let mut branches = Vec::with_capacity(p.branches.len());
    let mut outputs = Vec::with_capacity(p.branches.len());
    if cfg.enable_sp {
        if p.branches.len() != cfg.dilations.len() {
            return Err(shape_err!("{} atrous branches for {} dilations", p.branches.len(), cfg.dilations.len()));
        }
        for (i, (bp, &rate)) in p.branches.iter().zip(&cfg.dilations).enumerate() {
            let name = format!("sp.branch{}", i + 1);
            let (y, conv) = Conv2d::forward(x, &bp.w, None, ConvSpec::same(rate))?;
            let y = checked(y, &format!("{name}.conv"))?;
            let (y, tail) = NormActDrop::forward(&y, &bp.bn, cfg, training, rng, &name, running)?;
            outputs.push(y);
            branches.push(BranchTrace { conv, tail });
        }
    }
    // branch outputs stack along time: [B, k*Tc, 1, F2]
    let stacked = if outputs.is_empty() { x.clone() } else { Tensor::concat(&outputs.iter().collect::<Vec<_>>(), 1)? };
    // time becomes the channel axis of the fusion 1x1 convolution: [B, 1, F2, k*Tc]
    let permuted = stacked.permute(&[0, 2, 3, 1])?;
    let (y, fuse) = Conv2d::forward(&permuted, &p.fuse_w, Some(&p.fuse_b), ConvSpec::same(1))?;
    let y = checked(y, "sp.fuse")?;
    let (y, tail) = NormActDrop::forward(&y, &p.fuse_bn, cfg, training, rng, "sp.fuse", running)?;
    Ok((y, SpTrace { branches, pooled_len, fuse, tail }))
}

fn sp_backward(t: SpTrace, up: &Tensor, g: &mut ModelParams) -> Result<Tensor> {
    let (d, bn) = t.tail.backward(up)?;
    set_bn(&mut g.fuse_bn, bn);
    let fuse = t.fuse.backward(&d)?;
    g.fuse_w = fuse.weight;
    g.fuse_b = fuse.bias.expect("fusion convolution has a bias");
    let stacked = fuse.input.permute(&[0, 3, 1, 2])?;
    if t.branches.is_empty() {
        return Ok(stacked);
    }
    let mut dx: Option<Tensor> = None;
    for (i, (bt, slot)) in t.branches.into_iter().zip(g.branches.iter_mut()).enumerate() {
        let part = stacked.slice_axis(1, i * t.pooled_len, t.pooled_len)?;
        let (d, bn) = bt.tail.backward(&part)?;
        slot.bn.gamma = bn.gamma;
        slot.bn.beta = bn.beta;
        let conv = bt.conv.backward(&d)?;
        slot.w = conv.weight;
        match dx.as_mut() {
            Some(acc) => acc.add_assign(&conv.input)?,
            None => dx = Some(conv.input),
        }
    }
    Ok(dx.expect("at least one branch"))
}

/// Overlapping windows of `window_len = rows - n + 1` consecutive rows.
/// Accepts `[rows, channels]` or `[batch, rows, channels]`; window `i`
/// starts at row `i`.
pub fn sliding_windows(x: &Tensor, n: usize) -> Result<Vec<Tensor>> {
    let axis = match x.rank() {
        2 => 0,
        3 => 1,
        _ => return Err(shape_err!("sliding windows need [T,C] or [B,T,C], got {:?}", x.shape())),
    };
    let rows = x.shape()[axis];
    if n == 0 || n > rows {
        return Err(Error::Config(format!("window count {n} outside 1..={rows}")));
    }
    let len = rows - n + 1;
    (0..n).map(|i| x.slice_axis(axis, i, len)).collect()
}

fn head_forward(x: &Tensor, p: &ModelParams, cfg: &ModelConfig) -> Result<(Vec<Tensor>, HeadTrace)> {
    let (b, f2, fw) = (x.shape()[0], x.shape()[2], x.shape()[3]);
    // [B, 1, F2, fw] -> last (only) row -> [B, fw, F2]
    let seq = x.reshape(&[b, f2, fw])?.permute(&[0, 2, 1])?;
    let windows = sliding_windows(&seq, cfg.effective_windows())?;
    let window_len = fw - windows.len() + 1;
    let mut traces = Vec::with_capacity(windows.len());
    let mut probs = Vec::with_capacity(windows.len());
    for (i, w) in windows.iter().enumerate() {
        let (w, se) = match (&p.se, cfg.enable_at) {
            (Some(sp), true) => {
                let (y, ctx) = SeBlock::forward(w, sp)?;
                (checked(y, &format!("head.window{}.se", i + 1))?, Some(ctx))
            }
            (None, true) => return Err(shape_err!("attention enabled but no squeeze-excitation parameters")),
            _ => (w.clone(), None),
        };
        let last = w.slice_axis(1, window_len - 1, 1)?.into_reshaped(&[b, f2])?;
        let (logits, dense) = Dense::forward(&last, &p.dense_w, &p.dense_b)?;
        let logits = checked(logits, &format!("head.window{}.dense", i + 1))?;
        let (prob, softmax) = Softmax::forward(&logits, 1)?;
        probs.push(prob);
        traces.push(WindowTrace { se, dense, softmax });
    }
    Ok((probs, HeadTrace { windows: traces, fuse_width: fw, window_len, f2 }))
}

fn head_backward(t: HeadTrace, dprobs: &[Tensor], g: &mut ModelParams) -> Result<Tensor> {
    let b = dprobs[0].shape()[0];
    let (fw, tw, f2) = (t.fuse_width, t.window_len, t.f2);
    let mut dseq = Tensor::zeros(&[b, fw, f2])?;
    let mut dense_w = Tensor::zeros_like(&g.dense_w);
    let mut dense_b = Tensor::zeros_like(&g.dense_b);
    let mut se_acc: Option<SeParams> = None;
    for (i, (wt, dp)) in t.windows.into_iter().zip(dprobs).enumerate() {
        let dlogits = wt.softmax.backward(dp)?;
        let dense = wt.dense.backward(&dlogits)?;
        dense_w.add_assign(&dense.weight)?;
        dense_b.add_assign(&dense.bias)?;
        let dwin = dense.input.into_reshaped(&[b, 1, f2])?.pad_axis(1, tw - 1, 0)?;
        let dwin = match wt.se {
            Some(se) => {
                let sg = se.backward(&dwin)?;
                match se_acc.as_mut() {
                    Some(acc) => {
                        acc.w1.add_assign(&sg.params.w1)?;
                        acc.b1.add_assign(&sg.params.b1)?;
                        acc.w2.add_assign(&sg.params.w2)?;
                        acc.b2.add_assign(&sg.params.b2)?;
                    }
                    None => se_acc = Some(sg.params),
                }
                sg.input
            }
            None => dwin,
        };
        dseq.add_assign(&dwin.pad_axis(1, i, fw - tw - i)?)?;
    }
    g.dense_w = dense_w;
    g.dense_b = dense_b;
    if let Some(se) = se_acc {
        g.se = Some(se);
    }
    dseq.permute(&[0, 2, 1])?.into_reshaped(&[b, 1, f2, fw])
}

impl ModelParams {
    /// Copies the running statistics recorded by a training pass into the
    /// batch-norm layers. Evaluation traces carry the unchanged statistics.
    pub fn commit_running_stats(&mut self, trace: &ForwardTrace) -> Result<()> {
        let slots = self.batch_norms_mut();
        if slots.len() != trace.running.len() {
            return Err(shape_err!("trace holds {} batch-norm layers, model has {}", trace.running.len(), slots.len()));
        }
        for (slot, stats) in slots.into_iter().zip(&trace.running) {
            if slot.running.mean.shape() != stats.mean.shape() {
                return Err(shape_err!("running statistics {:?} do not fit {:?}", stats.mean.shape(), slot.running.mean.shape()));
            }
            slot.running = stats.clone();
        }
        Ok(())
    }
}

fn check_batch(batch: &Tensor, cfg: &ModelConfig) -> Result<usize> {
    match *batch.shape() {
        [b, c, t] if c == cfg.channels && t == cfg.samples => Ok(b),
        _ => Err(shape_err!("batch {:?} does not match [B, {}, {}] from the model configuration", batch.shape(), cfg.channels, cfg.samples)),
    }
}

/// Batched forward pass. `batch` is `[B, channels, samples]`; returns the
/// window-averaged class probabilities `[B, n_classes]` and the trace for
/// [`model_backward`]. `rng` drives dropout and is untouched in evaluation
/// mode.
pub fn model_forward(batch: &Tensor, params: &ModelParams, config: &ModelConfig, training: bool, rng: &mut Rng) -> Result<(Tensor, ForwardTrace)> {
    config.validate()?;
    let b = check_batch(batch, config)?;
    let x = batch.permute(&[0, 2, 1])?.into_reshaped(&[b, config.samples, config.channels, 1])?;
    let mut running = Vec::new();
    let (x, cv) = cv_forward(&x, params, config, training, rng, &mut running)?;
    let (x, sp) = sp_forward(&x, params, config, training, rng, &mut running)?;
    let (window_probs, head) = head_forward(&x, params, config)?;

    let n = window_probs.len() as f64;
    let mut avg = Tensor::zeros_like(&window_probs[0]);
    for p in &window_probs {
        avg.add_assign(p)?;
    }
    let probs = avg.scale(1.0 / n);
    probs.ensure_finite("head.average")?;
    let trace = ForwardTrace { training, cv, sp, head, window_probs, probs: probs.clone(), running };
    Ok((probs, trace))
}

/// Evaluation-mode probabilities.
pub fn predict(batch: &Tensor, params: &ModelParams, config: &ModelConfig) -> Result<Tensor> {
    // evaluation mode never draws from the generator
    let mut rng = Rng::new(0);
    model_forward(batch, params, config, false, &mut rng).map(|(p, _)| p)
}

/// Gradient of the mean cross-entropy of the averaged probabilities with
/// respect to every trainable tensor. Window-shared tensors (attention and
/// dense head) accumulate over windows. Running statistics in the result
/// are zero.
pub fn model_backward(trace: ForwardTrace, labels: &[usize], params: &ModelParams) -> Result<ModelParams> {
    if !trace.training {
        return Err(Error::Usage("backward needs a training-mode forward trace".into()));
    }
    let mut grads = params.zeros_like();
    let dprobs = cross_entropy_grad(&trace.probs, labels)?;
    let per_window = dprobs.scale(1.0 / trace.window_probs.len() as f64);
    let dprobs: Vec<Tensor> = vec![per_window; trace.window_probs.len()];
    let d = head_backward(trace.head, &dprobs, &mut grads)?;
    let d = sp_backward(trace.sp, &d, &mut grads)?;
    cv_backward(trace.cv, &d, &mut grads)?;
    Ok(grads)
}

fn with_batch_axis(x: &Tensor, rank: usize) -> Result<(Tensor, bool)> {
    if x.rank() == rank {
        let mut shape = vec![1];
        shape.extend_from_slice(x.shape());
        Ok((x.reshape(&shape)?, true))
    } else {
        Ok((x.clone(), false))
    }
}

fn strip_batch_axis(y: Tensor, added: bool) -> Result<Tensor> {
    if added {
        let shape = y.shape()[1..].to_vec();
        y.into_reshaped(&shape)
    } else {
        Ok(y)
    }
}

/// Convolutional block alone: `[T, C, 1]` (or batched `[B, T, C, 1]`) to
/// `[T / pool1, 1, F2]`. Training mode uses batch statistics and dropout.
pub fn cv_block(x: &Tensor, params: &ModelParams, config: &ModelConfig, training: bool, rng: &mut Rng) -> Result<Tensor> {
    let (x, added) = with_batch_axis(x, 3)?;
    let (y, _) = cv_forward(&x, params, config, training, rng, &mut Vec::new())?;
    strip_batch_axis(y, added)
}

/// Atrous block plus fusion: `[Tc, 1, F2]` (or batched) to
/// `[1, F2, fuse_width]`. With the atrous block disabled the input goes
/// straight to the fusion convolution.
pub fn sp_block(x: &Tensor, params: &ModelParams, config: &ModelConfig, training: bool, rng: &mut Rng) -> Result<Tensor> {
    let (x, added) = with_batch_axis(x, 3)?;
    let (y, _) = sp_forward(&x, params, config, training, rng, &mut Vec::new())?;
    strip_batch_axis(y, added)
}
