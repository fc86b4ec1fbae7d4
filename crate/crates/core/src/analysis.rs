//! Architecture arithmetic: receptive fields, window lengths, parameter
//! and operation counts.
//!
//! Operation convention: a multiply-accumulate (MAC) is one product plus
//! one sum, `flops = 2 * macs + other_ops`. MACs of a convolution are
//! output elements x kernel taps x input channels (x 1 for depthwise),
//! whether or not a tap lands in padding. `other_ops` counts one op per
//! output element for activations, pooling, bias adds and window
//! averaging, two per element for inference-time batch norm (scale and
//! shift), three per element for softmax. Dropout and reshapes are free.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{config_err, Result};
use crate::model::ModelConfig;

/// Trainable parameter count reported for the full network.
pub const REFERENCE_PARAMS: usize = 28_640;
/// Reported cost of the full network, millions of FLOPs.
pub const REFERENCE_MFLOPS: f64 = 49.0;
/// Reported trainable parameter count of the EEGNet baseline.
pub const EEGNET_REFERENCE_PARAMS: usize = 2_548;
/// Receptive fields stated for the three atrous branches with kernel 8.
pub const STATED_RECEPTIVE_FIELDS: [(usize, usize); 3] = [(2, 17), (4, 50), (6, 78)];

/// One layer of a report. Counts are totals over `repeat` applications;
/// shared parameters are counted once.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerRow {
    pub name: String,
    /// Output shape of one application, batch axis omitted.
    pub output: Vec<usize>,
    pub repeat: usize,
    pub params: usize,
    pub non_trainable: usize,
    pub macs: u64,
    pub other_ops: u64,
}

impl LayerRow {
    fn new(name: impl Into<String>, output: &[usize]) -> Self {
        Self { name: name.into(), output: output.to_vec(), repeat: 1, params: 0, non_trainable: 0, macs: 0, other_ops: 0 }
    }

    fn params(mut self, n: usize) -> Self {
        self.params = n;
        self
    }

    fn macs(mut self, n: usize) -> Self {
        self.macs = n as u64;
        self
    }

    fn ops(mut self, n: usize) -> Self {
        self.other_ops = n as u64;
        self
    }

    fn repeat(mut self, n: usize) -> Self {
        self.repeat = n;
        self
    }

    pub fn output_len(&self) -> usize {
        self.output.iter().product()
    }

    pub fn flops(&self) -> u64 {
        2 * self.macs + self.other_ops
    }
}

/// Receptive field of one atrous branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BranchField {
    pub dilation: usize,
    pub kernel: usize,
    pub value: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelReport {
    pub title: String,
    pub rows: Vec<LayerRow>,
    pub receptive_fields: Vec<BranchField>,
    pub window_len: usize,
    pub n_windows: usize,
}

impl ModelReport {
    pub fn params(&self) -> usize {
        self.rows.iter().map(|r| r.params).sum()
    }

    pub fn non_trainable(&self) -> usize {
        self.rows.iter().map(|r| r.non_trainable).sum()
    }

    pub fn macs(&self) -> u64 {
        self.rows.iter().map(|r| r.macs).sum()
    }

    pub fn other_ops(&self) -> u64 {
        self.rows.iter().map(|r| r.other_ops).sum()
    }

    pub fn flops(&self) -> u64 {
        self.rows.iter().map(LayerRow::flops).sum()
    }

    pub fn row(&self, name: &str) -> Option<&LayerRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

/// `2 (r - 1)(k - 1) + k` for dilation `r` and kernel `k`.
pub fn receptive_field(r: usize, k: usize) -> Result<usize> {
    if r == 0 || k == 0 {
        return Err(config_err!("dilation and kernel must be at least 1"));
    }
    Ok(2 * (r - 1) * (k - 1) + k)
}

/// Span of input rows one output row of a dilated convolution reads.
pub fn atrous_span(r: usize, k: usize) -> Result<usize> {
    if r == 0 || k == 0 {
        return Err(config_err!("dilation and kernel must be at least 1"));
    }
    Ok(r * (k - 1) + 1)
}

/// Explains where [`receptive_field`] disagrees with the stated value for
/// kernel 8.
pub fn receptive_field_note(r: usize, k: usize) -> Option<String> {
    let computed = receptive_field(r, k).ok()?;
    STATED_RECEPTIVE_FIELDS
        .iter()
        .find(|&&(sr, _)| sr == r && k == 8)
        .filter(|&&(_, stated)| stated != computed)
        .map(|&(_, stated)| format!("dilation {r}, kernel {k}: formula gives {computed}, stated value is {stated}"))
}

/// `tc - n + 1`; requires `tc > n >= 1`.
pub fn window_length(tc: usize, n: usize) -> Result<usize> {
    if n == 0 || tc <= n {
        return Err(config_err!("window length needs tc > n >= 1, got tc={tc}, n={n}"));
    }
    Ok(tc - n + 1)
}

/// `floor(t / (8 p2)) - n + 1`, the variant with a second pooling `p2`.
pub fn window_length_pooled(t: usize, p2: usize, n: usize) -> Result<usize> {
    if p2 == 0 {
        return Err(config_err!("p2 must be at least 1"));
    }
    window_length(t / (8 * p2), n)
}

fn bn_row(name: &str, shape: &[usize]) -> LayerRow {
    let c = *shape.last().expect("non-empty shape");
    let mut row = LayerRow::new(name, shape).params(2 * c).ops(2 * shape.iter().product::<usize>());
    row.non_trainable = 2 * c;
    row
}

fn elementwise(name: &str, shape: &[usize]) -> LayerRow {
    LayerRow::new(name, shape).ops(shape.iter().product())
}

/// Per-layer shapes, parameters and operation counts of a single trial
/// through the network described by `config`.
pub fn model_report(config: &ModelConfig) -> Result<ModelReport> {
    config.validate()?;
    let (t, c, f1, f2) = (config.samples, config.channels, config.f1, config.f2);
    let kc = config.temporal_kernel;
    let tc = config.pooled_len();
    let mut rows = vec![
        LayerRow::new("input", &[t, c, 1]),
        LayerRow::new("cv.conv1", &[t, c, f1]).params(kc * f1).macs(t * c * f1 * kc),
        bn_row("cv.bn1", &[t, c, f1]),
        LayerRow::new("cv.pw", &[t, c, f2]).params(f1 * f2).macs(t * c * f2 * f1),
        bn_row("cv.bn2", &[t, c, f2]),
        LayerRow::new("cv.dw", &[t, 1, f2]).params(c * f2).macs(t * f2 * c),
        bn_row("cv.bn3", &[t, 1, f2]),
        elementwise("cv.elu", &[t, 1, f2]),
        elementwise("cv.pool", &[tc, 1, f2]),
        LayerRow::new("cv.dropout", &[tc, 1, f2]),
    ];
    let mut receptive_fields = Vec::new();
    let k = config.atrous_kernel;
    if config.enable_sp {
        for (i, &r) in config.dilations.iter().enumerate() {
            let name = format!("sp.branch{}", i + 1);
            rows.push(LayerRow::new(format!("{name}.conv"), &[tc, 1, f2]).params(k * f2 * f2).macs(tc * f2 * f2 * k));
            rows.push(bn_row(&format!("{name}.bn"), &[tc, 1, f2]));
            rows.push(elementwise(&format!("{name}.elu"), &[tc, 1, f2]));
            receptive_fields.push(BranchField { dilation: r, kernel: k, value: receptive_field(r, k)? });
        }
        rows.push(LayerRow::new("sp.concat", &[config.fuse_inputs(), 1, f2]));
    }
    let l = config.fuse_inputs();
    let fw = config.fuse_width;
    rows.push(LayerRow::new("sp.permute", &[1, f2, l]));
    rows.push(LayerRow::new("sp.fuse.conv", &[1, f2, fw]).params(l * fw + fw).macs(f2 * l * fw).ops(f2 * fw));
    rows.push(bn_row("sp.fuse.bn", &[1, f2, fw]));
    rows.push(elementwise("sp.fuse.elu", &[1, f2, fw]));

    let n = config.effective_windows();
    let tw = config.window_len();
    let ncls = config.n_classes;
    rows.push(LayerRow::new("head.permute", &[fw, f2]));
    rows.push(LayerRow::new("head.windows", &[tw, f2]).repeat(n));
    if config.enable_at {
        let h = config.se_hidden();
        // squeeze sums, two bias adds, relu, sigmoid, channel scaling
        let per_window = tw * f2 + h + f2 + h + f2 + tw * f2;
        rows.push(LayerRow::new("head.se", &[tw, f2]).repeat(n).params(f2 * h + h + h * f2 + f2).macs(n * 2 * f2 * h).ops(n * per_window));
    }
    rows.push(LayerRow::new("head.last", &[f2]).repeat(n));
    rows.push(LayerRow::new("head.dense", &[ncls]).repeat(n).params(f2 * ncls + ncls).macs(n * f2 * ncls).ops(n * ncls));
    rows.push(LayerRow::new("head.softmax", &[ncls]).repeat(n).ops(3 * n * ncls));
    rows.push(LayerRow::new("head.average", &[ncls]).ops(n * ncls));

    Ok(ModelReport { title: String::from("dcnet"), rows, receptive_fields, window_len: tw, n_windows: n })
}

/// Parameter totals of [`model_report`]; running statistics land in
/// `non_trainable`.
pub fn count_params(config: &ModelConfig) -> Result<ModelReport> {
    model_report(config)
}

/// Operation totals of [`model_report`].
pub fn count_flops(config: &ModelConfig) -> Result<ModelReport> {
    model_report(config)
}

/// The EEGNet baseline, counted only: temporal convolution, depthwise
/// spatial convolution, separable convolution, dense classifier on the
/// flattened features.
#[derive(Clone, Debug, PartialEq)]
pub struct EegNetConfig {
    pub channels: usize,
    pub samples: usize,
    pub n_classes: usize,
    pub f1: usize,
    pub depth: usize,
    pub f2: usize,
    pub temporal_kernel: usize,
    pub pool1: usize,
    pub separable_kernel: usize,
    pub pool2: usize,
}

impl Default for EegNetConfig {
    fn default() -> Self {
        Self { channels: 22, samples: 1125, n_classes: 4, f1: 8, depth: 2, f2: 16, temporal_kernel: 64, pool1: 8, separable_kernel: 16, pool2: 8 }
    }
}

pub fn eegnet_report(config: &EegNetConfig) -> Result<ModelReport> {
    let EegNetConfig { channels: c, samples: t, n_classes: ncls, f1, depth, f2, temporal_kernel: kc, pool1, separable_kernel: ks, pool2 } = *config;
    if [c, t, ncls, f1, depth, kc, pool1, ks, pool2].contains(&0) || f2 == 0 {
        return Err(config_err!("EEGNet sizes must be positive"));
    }
    let fd = f1 * depth;
    let t1 = t / pool1;
    let t2 = t1 / pool2;
    if t2 == 0 {
        return Err(config_err!("{t} samples vanish under pooling {pool1} x {pool2}"));
    }
    let rows = vec![
        LayerRow::new("input", &[t, c, 1]),
        LayerRow::new("conv1", &[t, c, f1]).params(kc * f1).macs(t * c * f1 * kc),
        bn_row("bn1", &[t, c, f1]),
        LayerRow::new("depthwise", &[t, 1, fd]).params(c * fd).macs(t * fd * c),
        bn_row("bn2", &[t, 1, fd]),
        elementwise("elu1", &[t, 1, fd]),
        elementwise("pool1", &[t1, 1, fd]),
        LayerRow::new("separable.dw", &[t1, 1, fd]).params(ks * fd).macs(t1 * fd * ks),
        LayerRow::new("separable.pw", &[t1, 1, f2]).params(fd * f2).macs(t1 * f2 * fd),
        bn_row("bn3", &[t1, 1, f2]),
        elementwise("elu2", &[t1, 1, f2]),
        elementwise("pool2", &[t2, 1, f2]),
        LayerRow::new("flatten", &[t2 * f2]),
        LayerRow::new("dense", &[ncls]).params(t2 * f2 * ncls + ncls).macs(t2 * f2 * ncls).ops(ncls),
        LayerRow::new("softmax", &[ncls]).ops(3 * ncls),
    ];
    Ok(ModelReport { title: String::from("EEGNet"), rows, receptive_fields: Vec::new(), window_len: 0, n_windows: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::Rng;
    use proptest::prelude::*;

    #[test]
    fn receptive_fields() {
        assert_eq!(receptive_field(4, 8).unwrap(), 50);
        assert_eq!(receptive_field(6, 8).unwrap(), 78);
        assert_eq!(receptive_field(2, 8).unwrap(), 22);
        assert_eq!(receptive_field(1, 5).unwrap(), 5);
        assert!(receptive_field(0, 5).is_err());
        assert!(receptive_field_note(2, 8).unwrap().contains("17"));
        assert!(receptive_field_note(4, 8).is_none());
        assert_eq!(atrous_span(2, 8).unwrap(), 15);
    }

    #[test]
    fn window_lengths() {
        assert_eq!(window_length(32, 6).unwrap(), 27);
        assert_eq!(window_length(10, 4).unwrap(), 7);
        assert_eq!(window_length(9, 1).unwrap(), 9);
        assert!(window_length(4, 4).is_err());
        assert!(window_length(4, 0).is_err());
        assert_eq!(window_length_pooled(1125, 4, 6).unwrap(), 30);
        assert!(window_length_pooled(1125, 0, 6).is_err());
    }

    #[test]
    fn eegnet_count() {
        let r = eegnet_report(&EegNetConfig::default()).unwrap();
        assert_eq!(r.params(), EEGNET_REFERENCE_PARAMS);
    }

    #[test]
    fn default_counts() {
        let r = model_report(&ModelConfig::default()).unwrap();
        assert_eq!(r.params(), 21_064);
        assert_eq!(r.row("sp.fuse.conv").unwrap().macs, 215_040);
        let mflops = r.flops() as f64 / 1e6;
        assert!(mflops > REFERENCE_MFLOPS / 2.0 && mflops < REFERENCE_MFLOPS * 2.0, "{mflops}");
        let fields: Vec<(usize, usize)> = r.receptive_fields.iter().map(|f| (f.dilation, f.value)).collect();
        assert_eq!(fields, vec![(2, 22), (4, 50), (6, 78)]);
        assert_eq!((r.window_len, r.n_windows), (27, 6));
    }

    #[test]
    fn temporal_count_is_linear_in_f1() {
        let a = model_report(&ModelConfig::default()).unwrap();
        let b = model_report(&ModelConfig { f1: 16, f2: 32, ..ModelConfig::default() }).unwrap();
        assert_eq!(b.row("cv.conv1").unwrap().params, 2 * a.row("cv.conv1").unwrap().params);
    }

    #[test]
    fn empty_report_is_zero() {
        let r = ModelReport::default();
        assert_eq!((r.params(), r.macs(), r.flops()), (0, 0, 0));
    }

    fn config() -> impl Strategy<Value = ModelConfig> {
        (
            (1usize..5, 8usize..40, 2usize..5, 1usize..4, 1usize..3),
            (1usize..9, 1usize..5, proptest::collection::vec(1usize..5, 1..4), 1usize..5, 2usize..9),
            (any::<bool>(), any::<bool>(), any::<bool>()),
        )
            .prop_map(|((c, t, n, f1, d), (kc, pool1, dilations, k, fw), (sp, sw, at))| {
                let f2 = f1 * d;
                ModelConfig {
                    channels: c,
                    samples: t.max(pool1),
                    n_classes: n,
                    f1,
                    depth: d,
                    f2,
                    temporal_kernel: kc,
                    pool1,
                    dilations,
                    atrous_kernel: k,
                    fuse_width: fw,
                    n_windows: 1 + fw / 3,
                    se_reduction: if f2 % 2 == 0 { 2 } else { 1 },
                    enable_sp: sp,
                    enable_sw: sw,
                    enable_at: at,
                    ..ModelConfig::default()
                }
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn count_matches_allocation(cfg in config(), seed in any::<u64>()) {
            let p = ModelParams::init(&cfg, &mut Rng::new(seed)).unwrap();
            let r = count_params(&cfg).unwrap();
            prop_assert_eq!(r.params(), p.trainable_count());
            prop_assert_eq!(r.non_trainable(), p.running_count());
        }

        #[test]
        fn receptive_field_is_monotone(r in 1usize..20, k in 1usize..20) {
            let base = receptive_field(r, k).unwrap();
            prop_assert!(receptive_field(r + 1, k).unwrap() >= base);
            prop_assert!(receptive_field(r, k + 1).unwrap() >= base);
        }

        #[test]
        fn window_length_inverts(tc in 2usize..200, n in 1usize..200) {
            prop_assume!(n < tc);
            prop_assert_eq!(window_length(tc, n).unwrap() + n - 1, tc);
        }
    }
}
