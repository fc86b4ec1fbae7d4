//! In-memory trial container, synthetic EEG generator and stratified
//! splitting.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{config_err, shape_err, Error, Result};
use crate::{Rng, Tensor};

/// `m` labelled trials of `channels x samples` raw values.
///
/// Values are stored as `f32`, trial-major then channel then time.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialSet {
    channels: usize,
    samples: usize,
    n_classes: usize,
    data: Vec<f32>,
    labels: Vec<usize>,
    pub metadata: BTreeMap<String, String>,
}

impl TrialSet {
    pub fn new(channels: usize, samples: usize, n_classes: usize, data: Vec<f32>, labels: Vec<usize>) -> Result<Self> {
        if channels == 0 || samples == 0 || n_classes == 0 {
            return Err(shape_err!("channels, samples and classes must be positive"));
        }
        if data.len() != labels.len() * channels * samples {
            return Err(shape_err!("{} values for {} trials of {channels}x{samples}", data.len(), labels.len()));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Label { label, n_classes });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { layer: "trial data".into() });
        }
        Ok(Self { channels, samples, n_classes, data, labels, metadata: BTreeMap::new() })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// `[channels * samples]` values of trial `i`.
    pub fn trial(&self, i: usize) -> &[f32] {
        let n = self.channels * self.samples;
        &self.data[i * n..(i + 1) * n]
    }

    /// Trials `indices` widened to `f64`, shaped `[len, channels, samples]`.
    pub fn batch_tensor(&self, indices: &[usize]) -> Result<Tensor> {
        if indices.is_empty() {
            return Err(Error::Empty("batch has no trials".into()));
        }
        let mut out = Vec::with_capacity(indices.len() * self.channels * self.samples);
        for &i in indices {
            if i >= self.len() {
                return Err(shape_err!("trial index {i} out of {}", self.len()));
            }
            out.extend(self.trial(i).iter().map(|&v| f64::from(v)));
        }
        Tensor::new(&[indices.len(), self.channels, self.samples], out)
    }

    pub fn batch_labels(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    /// Trials at `indices`, in that order, with the metadata copied.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.channels * self.samples);
        for &i in indices {
            if i >= self.len() {
                return Err(shape_err!("trial index {i} out of {}", self.len()));
            }
            data.extend_from_slice(self.trial(i));
        }
        let mut set = Self::new(self.channels, self.samples, self.n_classes, data, self.batch_labels(indices))?;
        set.metadata = self.metadata.clone();
        Ok(set)
    }

    /// Splits off the last `ceil(fraction * m)` trials in stored order.
    pub fn holdout_tail(&self, fraction: f64) -> Result<(Self, Self)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(config_err!("holdout fraction must be in (0, 1), got {fraction}"));
        }
        let m = self.len();
        let tail = libm::ceil(fraction * m as f64) as usize;
        if tail == 0 || tail >= m {
            return Err(Error::Empty(alloc::format!("cannot hold out {fraction} of {m} trials")));
        }
        let head: Vec<usize> = (0..m - tail).collect();
        let rest: Vec<usize> = (m - tail..m).collect();
        Ok((self.subset(&head)?, self.subset(&rest)?))
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Class-coded sinusoids in Gaussian noise.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub trials: usize,
    pub channels: usize,
    pub samples: usize,
    pub n_classes: usize,
    pub seed: u64,
    /// Signal amplitude over noise standard deviation; infinity disables noise.
    pub snr: f64,
    /// One frequency per class.
    pub class_band_hz: Vec<f64>,
    pub sample_rate_hz: f64,
}

impl SynthSpec {
    /// Class `k` at `6 + 4k` Hz, sampled at 128 Hz.
    pub fn new(trials: usize, channels: usize, samples: usize, n_classes: usize, snr: f64, seed: u64) -> Self {
        Self { trials, channels, samples, n_classes, seed, snr, class_band_hz: (0..n_classes).map(|k| 6.0 + 4.0 * k as f64).collect(), sample_rate_hz: 128.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.channels == 0 || self.samples == 0 {
            return Err(config_err!("channels, samples and classes must be positive"));
        }
        if self.trials < self.n_classes {
            return Err(config_err!("{} trials cannot cover {} classes", self.trials, self.n_classes));
        }
        if !(self.snr > 0.0) {
            return Err(config_err!("snr must be positive"));
        }
        if self.class_band_hz.len() != self.n_classes {
            return Err(config_err!("{} class frequencies for {} classes", self.class_band_hz.len(), self.n_classes));
        }
        if !(self.sample_rate_hz > 0.0) || self.class_band_hz.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            return Err(config_err!("frequencies must be finite and the sample rate positive"));
        }
        Ok(())
    }

    /// Whether channel `c` carries the sinusoid of class `k`: channels are
    /// dealt to classes round-robin, wrapping when there are fewer
    /// channels than classes.
    pub fn carries(&self, channel: usize, class: usize) -> bool {
        let groups = self.channels.min(self.n_classes);
        channel % groups == class % groups
    }
}

/// Trial `i` has label `i mod n_classes`; its class channels carry a unit
/// sinusoid with a random phase, and every channel gets `N(0, 1/snr^2)`
/// noise.
pub fn synth(spec: &SynthSpec) -> Result<TrialSet> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let noise = if spec.snr.is_finite() { 1.0 / spec.snr } else { 0.0 };
    let (c, t) = (spec.channels, spec.samples);
    let mut data = Vec::with_capacity(spec.trials * c * t);
    let mut labels = Vec::with_capacity(spec.trials);
    for i in 0..spec.trials {
        let k = i % spec.n_classes;
        let phase = rng.uniform(0.0, 2.0 * PI);
        let w = 2.0 * PI * spec.class_band_hz[k] / spec.sample_rate_hz;
        for ch in 0..c {
            let on = spec.carries(ch, k);
            for s in 0..t {
                let signal = if on { libm::sin(w * s as f64 + phase) } else { 0.0 };
                let v = if noise > 0.0 { signal + noise * rng.normal() } else { signal };
                data.push(v as f32);
            }
        }
        labels.push(k);
    }
    let mut set = TrialSet::new(c, t, spec.n_classes, data, labels)?;
    set.metadata.insert("source".into(), "synth".into());
    set.metadata.insert("seed".into(), alloc::format!("{}", spec.seed));
    Ok(set)
}

/// Stratified split: each class contributes its share of `fraction` to the
/// first part (largest-remainder rounding, at least one trial per side),
/// chosen by a seeded shuffle. Both parts keep the stored trial order.
pub fn split(set: &TrialSet, fraction: f64, seed: u64) -> Result<(TrialSet, TrialSet)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(config_err!("split fraction must be in (0, 1), got {fraction}"));
    }
    let mut by_class: Vec<Vec<usize>> = alloc::vec![Vec::new(); set.n_classes];
    for (i, &l) in set.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let present: Vec<usize> = (0..set.n_classes).filter(|&k| !by_class[k].is_empty()).collect();
    if let Some(&class) = present.iter().find(|&&k| by_class[k].len() < 2) {
        return Err(Error::Config(alloc::format!("class {class} has fewer than 2 trials and cannot be stratified")));
    }
    if present.is_empty() {
        return Err(Error::Empty("no trials to split".into()));
    }

    // largest remainder over classes, ties to the lower class index
    let target = libm::round(fraction * set.len() as f64) as usize;
    let quotas: Vec<f64> = present.iter().map(|&k| fraction * by_class[k].len() as f64).collect();
    let mut take: Vec<usize> = quotas.iter().map(|q| libm::floor(*q) as usize).collect();
    let mut order: Vec<usize> = (0..present.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - libm::floor(quotas[a]);
        let rb = quotas[b] - libm::floor(quotas[b]);
        rb.partial_cmp(&ra).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let mut missing = target.saturating_sub(take.iter().sum());
    for &j in order.iter().cycle().take(present.len() * 2) {
        if missing == 0 {
            break;
        }
        if take[j] < by_class[present[j]].len() - 1 {
            take[j] += 1;
            missing -= 1;
        }
    }
    for (j, &k) in present.iter().enumerate() {
        take[j] = take[j].clamp(1, by_class[k].len() - 1);
    }

    let mut rng = Rng::new(seed);
    let mut first = Vec::new();
    let mut second = Vec::new();
    for (j, &k) in present.iter().enumerate() {
        let mut idx = by_class[k].clone();
        rng.shuffle(&mut idx);
        first.extend_from_slice(&idx[..take[j]]);
        second.extend_from_slice(&idx[take[j]..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    Ok((set.subset(&first)?, set.subset(&second)?))
}
