use alloc::vec;
use alloc::vec::Vec;

use super::{check_upstream, Backward};
use crate::error::{config_err, shape_err, Result};
use crate::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Output extent equals input extent. Odd total padding puts the extra
    /// zero on the trailing side.
    Same,
    /// No padding; output extent is `in - effective_kernel + 1`.
    Valid,
}

/// Stride-1 convolution geometry. Kernel extents come from the weight
/// tensor; the dilation applies to both spatial axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub dilation: usize,
    pub padding: Padding,
}

impl ConvSpec {
    pub fn same(dilation: usize) -> Self {
        Self { dilation, padding: Padding::Same }
    }

    pub fn valid() -> Self {
        Self { dilation: 1, padding: Padding::Valid }
    }

    /// Span of input covered by one kernel application: `(k - 1) * r + 1`.
    pub fn effective_kernel(&self, kernel: usize) -> usize {
        (kernel - 1) * self.dilation + 1
    }

    /// Output extent and leading pad for one spatial axis.
    pub fn axis_geometry(&self, input: usize, kernel: usize) -> Result<(usize, usize)> {
        if self.dilation == 0 {
            return Err(config_err!("dilation must be at least 1"));
        }
        if kernel == 0 {
            return Err(shape_err!("kernel extent is zero"));
        }
        let eff = self.effective_kernel(kernel);
        match self.padding {
            Padding::Same => Ok((input, (eff - 1) / 2)),
            Padding::Valid if eff <= input => Ok((input - eff + 1, 0)),
            Padding::Valid => Err(shape_err!("effective kernel {eff} exceeds input extent {input} with valid padding")),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    batch: usize,
    h: usize,
    w: usize,
    cin: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    pad_h: usize,
    pad_w: usize,
    dilation: usize,
    batched: bool,
}

impl Geometry {
    fn new(x: &[usize], kh: usize, kw: usize, spec: &ConvSpec) -> Result<Self> {
        let (batch, h, w, cin, batched) = match *x {
            [h, w, c] => (1, h, w, c, false),
            [b, h, w, c] => (b, h, w, c, true),
            _ => return Err(shape_err!("convolution input must be [H,W,C] or [B,H,W,C], got {x:?}")),
        };
        let (oh, pad_h) = spec.axis_geometry(h, kh)?;
        let (ow, pad_w) = spec.axis_geometry(w, kw)?;
        Ok(Self { batch, h, w, cin, kh, kw, oh, ow, pad_h, pad_w, dilation: spec.dilation, batched })
    }

    fn output_shape(&self, cout: usize) -> Vec<usize> {
        if self.batched {
            vec![self.batch, self.oh, self.ow, cout]
        } else {
            vec![self.oh, self.ow, cout]
        }
    }

    /// Input row/column for output position `o` and kernel tap `k`, if it
    /// falls inside the unpadded input.
    #[inline]
    fn source(o: usize, k: usize, dilation: usize, pad: usize, extent: usize) -> Option<usize> {
        let pos = (o + k * dilation).checked_sub(pad)?;
        (pos < extent).then_some(pos)
    }

    /// Calls `f(input_offset, tap_index, output_offset)` for every valid
    /// (output position, kernel tap) pair; offsets are in units of pixels.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        for n in 0..self.batch {
            for oy in 0..self.oh {
                for ky in 0..self.kh {
                    let Some(iy) = Self::source(oy, ky, self.dilation, self.pad_h, self.h) else {
                        continue;
                    };
                    for ox in 0..self.ow {
                        let out_px = (n * self.oh + oy) * self.ow + ox;
                        for kx in 0..self.kw {
                            let Some(ix) = Self::source(ox, kx, self.dilation, self.pad_w, self.w) else {
                                continue;
                            };
                            let in_px = (n * self.h + iy) * self.w + ix;
                            f(in_px, ky * self.kw + kx, out_px);
                        }
                    }
                }
            }
        }
    }
}

fn conv_weights(w: &Tensor, cin: usize, what: &str) -> Result<(usize, usize, usize)> {
    match *w.shape() {
        [kh, kw, c, cout] if c == cin => Ok((kh, kw, cout)),
        _ => Err(shape_err!("{what} kernel {:?} does not fit {cin} input channels", w.shape())),
    }
}

fn bias_slice(bias: Option<&Tensor>, cout: usize) -> Result<Option<&[f64]>> {
    match bias {
        Some(b) if b.shape() == [cout] => Ok(Some(b.data())),
        Some(b) => Err(shape_err!("bias {:?} does not match {cout} output channels", b.shape())),
        None => Ok(None),
    }
}

fn cin_of(x: &Tensor) -> usize {
    *x.shape().last().unwrap_or(&0)
}

fn conv_forward(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, spec: &ConvSpec) -> Result<(Tensor, Geometry)> {
    let cin = cin_of(x);
    let (kh, kw, cout) = conv_weights(w, cin, "conv2d")?;
    let g = Geometry::new(x.shape(), kh, kw, spec)?;
    let bias = bias_slice(bias, cout)?;
    let (xd, wd) = (x.data(), w.data());
    let mut out = vec![0.0; g.batch * g.oh * g.ow * cout];
    if let Some(b) = bias {
        for px in out.chunks_exact_mut(cout) {
            px.copy_from_slice(b);
        }
    }
    g.for_each_tap(|in_px, tap, out_px| {
        let xs = &xd[in_px * cin..(in_px + 1) * cin];
        let wk = &wd[tap * cin * cout..(tap + 1) * cin * cout];
        let o = &mut out[out_px * cout..(out_px + 1) * cout];
        for (ci, &xv) in xs.iter().enumerate() {
            for (ov, &wv) in o.iter_mut().zip(&wk[ci * cout..(ci + 1) * cout]) {
                *ov += xv * wv;
            }
        }
    });
    Ok((Tensor::from_parts(g.output_shape(cout), out), g))
}

/// Cross-correlation of `x` (`[H,W,Cin]` or `[B,H,W,Cin]`) with `w`
/// (`[kh,kw,Cin,Cout]`), plus optional per-output-channel bias.
pub fn conv2d(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, spec: ConvSpec) -> Result<Tensor> {
    conv_forward(x, w, bias, &spec).map(|(y, _)| y)
}

pub struct Conv2dGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

/// Recorded [`conv2d`] call.
pub struct Conv2d {
    x: Tensor,
    w: Tensor,
    has_bias: bool,
    geometry: Geometry,
}

impl Conv2d {
    pub fn forward(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, spec: ConvSpec) -> Result<(Tensor, Self)> {
        let (y, geometry) = conv_forward(x, w, bias, &spec)?;
        Ok((y, Self { x: x.clone(), w: w.clone(), has_bias: bias.is_some(), geometry }))
    }
}

impl Backward for Conv2d {
    type Grads = Conv2dGrads;

    fn backward(self, upstream: &Tensor) -> Result<Conv2dGrads> {
        let g = self.geometry;
        let cin = g.cin;
        let cout = self.w.shape()[3];
        check_upstream(&g.output_shape(cout), upstream, "conv2d")?;
        let (xd, wd, ud) = (self.x.data(), self.w.data(), upstream.data());
        let mut dx = vec![0.0; xd.len()];
        let mut dw = vec![0.0; wd.len()];
        g.for_each_tap(|in_px, tap, out_px| {
            let u = &ud[out_px * cout..(out_px + 1) * cout];
            let xs = &xd[in_px * cin..(in_px + 1) * cin];
            let base = tap * cin * cout;
            for ci in 0..cin {
                let row = base + ci * cout..base + (ci + 1) * cout;
                let mut acc = 0.0;
                for ((&uv, &wv), dwv) in u.iter().zip(&wd[row.clone()]).zip(&mut dw[row]) {
                    acc += uv * wv;
                    *dwv += xs[ci] * uv;
                }
                dx[in_px * cin + ci] += acc;
            }
        });
        let bias = self.has_bias.then(|| {
            let mut db = vec![0.0; cout];
            for px in ud.chunks_exact(cout) {
                for (d, &u) in db.iter_mut().zip(px) {
                    *d += u;
                }
            }
            Tensor::from_parts(vec![cout], db)
        });
        Ok(Conv2dGrads { input: Tensor::from_parts(self.x.shape().to_vec(), dx), weight: Tensor::from_parts(self.w.shape().to_vec(), dw), bias })
    }
}

fn depthwise_forward(x: &Tensor, w: &Tensor, spec: &ConvSpec) -> Result<(Tensor, Geometry, usize)> {
    let cin = cin_of(x);
    let (kh, kw, mult) = conv_weights(w, cin, "depthwise")?;
    let g = Geometry::new(x.shape(), kh, kw, spec)?;
    let cout = cin * mult;
    let (xd, wd) = (x.data(), w.data());
    let mut out = vec![0.0; g.batch * g.oh * g.ow * cout];
    g.for_each_tap(|in_px, tap, out_px| {
        let xs = &xd[in_px * cin..(in_px + 1) * cin];
        // output channel ci * mult + m reads weight [tap, ci, m]
        let wk = &wd[tap * cout..(tap + 1) * cout];
        let o = &mut out[out_px * cout..(out_px + 1) * cout];
        for (j, (ov, &wv)) in o.iter_mut().zip(wk).enumerate() {
            *ov += xs[j / mult] * wv;
        }
    });
    Ok((Tensor::from_parts(g.output_shape(cout), out), g, mult))
}

/// Per-channel convolution: `w` is `[kh,kw,Cin,mult]` and output channel
/// `c * mult + m` sees only input channel `c`.
pub fn depthwise_conv2d(x: &Tensor, w: &Tensor, spec: ConvSpec) -> Result<Tensor> {
    depthwise_forward(x, w, &spec).map(|(y, _, _)| y)
}

/// Recorded [`depthwise_conv2d`] call.
pub struct DepthwiseConv2d {
    x: Tensor,
    w: Tensor,
    geometry: Geometry,
    mult: usize,
}

impl DepthwiseConv2d {
    pub fn forward(x: &Tensor, w: &Tensor, spec: ConvSpec) -> Result<(Tensor, Self)> {
        let (y, geometry, mult) = depthwise_forward(x, w, &spec)?;
        Ok((y, Self { x: x.clone(), w: w.clone(), geometry, mult }))
    }
}

impl Backward for DepthwiseConv2d {
    type Grads = Conv2dGrads;

    fn backward(self, upstream: &Tensor) -> Result<Conv2dGrads> {
        let g = self.geometry;
        let (cin, mult) = (g.cin, self.mult);
        let cout = cin * mult;
        check_upstream(&g.output_shape(cout), upstream, "depthwise_conv2d")?;
        let (xd, wd, ud) = (self.x.data(), self.w.data(), upstream.data());
        let mut dx = vec![0.0; xd.len()];
        let mut dw = vec![0.0; wd.len()];
        g.for_each_tap(|in_px, tap, out_px| {
            let u = &ud[out_px * cout..(out_px + 1) * cout];
            for j in 0..cout {
                let ci = j / mult;
                dx[in_px * cin + ci] += u[j] * wd[tap * cout + j];
                dw[tap * cout + j] += xd[in_px * cin + ci] * u[j];
            }
        });
        Ok(Conv2dGrads { input: Tensor::from_parts(self.x.shape().to_vec(), dx), weight: Tensor::from_parts(self.w.shape().to_vec(), dw), bias: None })
    }
}
