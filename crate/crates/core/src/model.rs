//! The desk-scale classifier: hashed bag-of-words features, an optional tanh
//! or ReLU hidden layer, and a softmax head.
//!
//! All weights live in one flat `f64` buffer inside [`ParamVector`], split
//! into named segments. Segment order is fixed:
//!
//! | segment         | shape      | present when |
//! |-----------------|------------|--------------|
//! | `hidden_weight` | `[D, H]`   | `H > 0`      |
//! | `hidden_bias`   | `[H]`      | `H > 0`      |
//! | `head_weight`   | `[C, H]` or `[C, D]` | always |
//! | `head_bias`     | `[C]`      | always       |
//!
//! The hidden weight is stored input-major so a sparse input touches whole
//! rows. The head is stored class-major so widening the class set appends
//! rows.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const HIDDEN_WEIGHT: &str = "hidden_weight";
pub const HIDDEN_BIAS: &str = "hidden_bias";
pub const HEAD_WEIGHT: &str = "head_weight";
pub const HEAD_BIAS: &str = "head_bias";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation and the output.
    #[inline]
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - out * out,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub activation: Activation,
}

impl ModelSpec {
    pub fn new(input_dim: usize, hidden_dim: usize, num_classes: usize, activation: Activation) -> Result<Self> {
        let spec = ModelSpec {
            input_dim,
            hidden_dim,
            num_classes,
            activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 1 {
            return Err(Error::invalid("input_dim must be at least 1"));
        }
        if self.num_classes < 2 {
            return Err(Error::invalid("num_classes must be at least 2"));
        }
        Ok(())
    }

    pub fn with_classes(self, num_classes: usize) -> Self {
        ModelSpec { num_classes, ..self }
    }

    pub fn param_count(&self) -> usize {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.num_classes);
        if h > 0 {
            d * h + h + h * c + c
        } else {
            d * c + c
        }
    }

    /// Width of the representation feeding the head.
    pub fn feature_dim(&self) -> usize {
        if self.hidden_dim > 0 {
            self.hidden_dim
        } else {
            self.input_dim
        }
    }

    pub fn layout(&self) -> Vec<SegmentInfo> {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.num_classes);
        let mut shapes = Vec::with_capacity(4);
        if h > 0 {
            shapes.push((HIDDEN_WEIGHT, vec![d, h]));
            shapes.push((HIDDEN_BIAS, vec![h]));
        }
        shapes.push((HEAD_WEIGHT, vec![c, self.feature_dim()]));
        shapes.push((HEAD_BIAS, vec![c]));

        let mut offset = 0;
        shapes
            .into_iter()
            .map(|(name, shape)| {
                let len = shape.iter().product::<usize>();
                let info = SegmentInfo {
                    name: name.to_string(),
                    shape,
                    offset,
                };
                offset += len;
                info
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentInfo {
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(skip)]
    pub offset: usize,
}

impl SegmentInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    pub fn is_bias(&self) -> bool {
        self.name.ends_with("bias")
    }
}

/// All weights of one model, as named segments over a flat buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    spec: ModelSpec,
    segments: Vec<SegmentInfo>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(spec: ModelSpec) -> Self {
        ParamVector {
            spec,
            segments: spec.layout(),
            values: vec![0.0; spec.param_count()],
        }
    }

    pub fn from_values(spec: ModelSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.param_count() {
            return Err(Error::Dimension(format!(
                "expected {} values for {:?}, got {}",
                spec.param_count(),
                spec,
                values.len()
            )));
        }
        Ok(ParamVector {
            spec,
            segments: spec.layout(),
            values,
        })
    }

    pub fn zeros_like(&self) -> Self {
        ParamVector::zeros(self.spec)
    }

    /// A vector with the same structure and the given values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        ParamVector::from_values(self.spec, values)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn segments(&self) -> &[SegmentInfo] {
        &self.segments
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segment_info(&self, name: &str) -> Option<&SegmentInfo> {
        self.segments.iter().find(|s| s.name == name)
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.segment_info(name).map(|s| &self.values[s.range()])
    }

    pub fn segment_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.segment_info(name)?.range();
        Some(&mut self.values[range])
    }

    /// Same segment names and shapes, in the same order.
    pub fn is_compatible(&self, other: &ParamVector) -> bool {
        self.segments.len() == other.segments.len()
            && self
                .segments
                .iter()
                .zip(&other.segments)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }

    pub fn ensure_compatible(&self, other: &ParamVector) -> Result<()> {
        if self.is_compatible(other) {
            Ok(())
        } else {
            Err(Error::Incompatible(format!("{:?} vs {:?}", self.spec, other.spec)))
        }
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::NonFinite(format!("{what} at flat index {i}"))),
        }
    }
}

/// Sparse term-count vector over hashed feature buckets.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseFeatures {
    indices: Vec<usize>,
    counts: Vec<f64>,
}

impl SparseFeatures {
    pub fn new(indices: Vec<usize>, counts: Vec<f64>) -> Result<Self> {
        if indices.len() != counts.len() {
            return Err(Error::Dimension("indices and counts differ in length".into()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("feature indices must be strictly increasing"));
        }
        if counts.iter().any(|&c| !(c > 0.0) || !c.is_finite()) {
            return Err(Error::invalid("feature counts must be positive and finite"));
        }
        Ok(SparseFeatures { indices, counts })
    }

    /// Builds from unsorted `(index, count)` pairs, summing duplicates.
    pub fn from_pairs(mut pairs: Vec<(usize, f64)>) -> Result<Self> {
        pairs.sort_by_key(|p| p.0);
        let mut indices = Vec::with_capacity(pairs.len());
        let mut counts: Vec<f64> = Vec::with_capacity(pairs.len());
        for (i, c) in pairs {
            if indices.last() == Some(&i) {
                *counts.last_mut().unwrap() += c;
            } else {
                indices.push(i);
                counts.push(c);
            }
        }
        SparseFeatures::new(indices, counts)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.counts.iter().copied())
    }

    fn check_dim(&self, input_dim: usize) -> Result<()> {
        match self.indices.last() {
            Some(&last) if last >= input_dim => Err(Error::Dimension(format!(
                "feature index {last} out of range for input_dim {input_dim}"
            ))),
            _ => Ok(()),
        }
    }
}

/// A featurized example: hashed features plus the integer class id.
pub type Sample = (SparseFeatures, usize);

/// Deterministic initialization standing in for a pretrained starting point.
///
/// Weights are uniform in `±1/sqrt(fan_in)`, biases are zero. Each head row
/// draws from its own stream, so the init for `C` classes is a prefix of the
/// init for `C + k` classes under the same seed.
pub fn init_params(spec: ModelSpec, seed: u64) -> ParamVector {
    let mut params = ParamVector::zeros(spec);
    let (d, h) = (spec.input_dim, spec.hidden_dim);
    if h > 0 {
        let bound = 1.0 / (d as f64).sqrt();
        let mut rng = rng::stream(seed, "init/hidden");
        for w in params.segment_mut(HIDDEN_WEIGHT).unwrap() {
            *w = rng.random_range(-bound..bound);
        }
    }
    let width = spec.feature_dim();
    let bound = 1.0 / (width as f64).sqrt();
    let head = params.segment_mut(HEAD_WEIGHT).unwrap();
    for (c, row) in head.chunks_mut(width).enumerate() {
        let mut rng = rng::stream(seed, &format!("init/head/{c}"));
        for w in row {
            *w = rng.random_range(-bound..bound);
        }
    }
    params
}

struct Activations {
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

fn forward_raw(params: &ParamVector, x: &SparseFeatures) -> Activations {
    let spec = params.spec;
    let c = spec.num_classes;
    let h = spec.hidden_dim;
    let v = &params.values;
    let segs = &params.segments;

    let mut logits = vec![0.0; c];
    if h > 0 {
        let (hw, hb, ow, ob) = (&segs[0], &segs[1], &segs[2], &segs[3]);
        let mut pre = v[hb.range()].to_vec();
        for (i, count) in x.iter() {
            let row = &v[hw.offset + i * h..hw.offset + (i + 1) * h];
            for (p, w) in pre.iter_mut().zip(row) {
                *p += count * w;
            }
        }
        let hidden: Vec<f64> = pre.iter().map(|&p| spec.activation.apply(p)).collect();
        let head = &v[ow.range()];
        let bias = &v[ob.range()];
        for (k, logit) in logits.iter_mut().enumerate() {
            let row = &head[k * h..(k + 1) * h];
            *logit = bias[k] + row.iter().zip(&hidden).map(|(w, a)| w * a).sum::<f64>();
        }
        Activations {
            hidden_pre: pre,
            hidden,
            logits,
        }
    } else {
        let d = spec.input_dim;
        let (ow, ob) = (&segs[0], &segs[1]);
        let head = &v[ow.range()];
        let bias = &v[ob.range()];
        for (k, logit) in logits.iter_mut().enumerate() {
            let row = &head[k * d..(k + 1) * d];
            *logit = bias[k] + x.iter().map(|(i, cnt)| row[i] * cnt).sum::<f64>();
        }
        Activations {
            hidden_pre: Vec::new(),
            hidden: Vec::new(),
            logits,
        }
    }
}

/// Accumulates `d loss / d logits = dz` for one example into `grad`.
fn backprop(params: &ParamVector, x: &SparseFeatures, acts: &Activations, dz: &[f64], grad: &mut [f64]) {
    let spec = params.spec;
    let h = spec.hidden_dim;
    let v = &params.values;
    let segs = &params.segments;
    if h > 0 {
        let (hw, hb, ow, ob) = (&segs[0], &segs[1], &segs[2], &segs[3]);
        let mut dpre = vec![0.0; h];
        for (k, &g) in dz.iter().enumerate() {
            grad[ob.offset + k] += g;
            if g == 0.0 {
                continue;
            }
            let row = &v[ow.offset + k * h..ow.offset + (k + 1) * h];
            let grow = &mut grad[ow.offset + k * h..ow.offset + (k + 1) * h];
            for j in 0..h {
                grow[j] += g * acts.hidden[j];
                dpre[j] += g * row[j];
            }
        }
        for j in 0..h {
            dpre[j] *= spec.activation.derivative(acts.hidden_pre[j], acts.hidden[j]);
            grad[hb.offset + j] += dpre[j];
        }
        for (i, count) in x.iter() {
            let grow = &mut grad[hw.offset + i * h..hw.offset + (i + 1) * h];
            for (g, dp) in grow.iter_mut().zip(&dpre) {
                *g += count * dp;
            }
        }
    } else {
        let d = spec.input_dim;
        let (ow, ob) = (&segs[0], &segs[1]);
        for (k, &g) in dz.iter().enumerate() {
            grad[ob.offset + k] += g;
            for (i, count) in x.iter() {
                grad[ow.offset + k * d + i] += g * count;
            }
        }
    }
}

/// Softmax with max-logit subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn logits(params: &ParamVector, x: &SparseFeatures) -> Result<Vec<f64>> {
    x.check_dim(params.spec.input_dim)?;
    Ok(forward_raw(params, x).logits)
}

pub fn forward_probs(params: &ParamVector, x: &SparseFeatures) -> Result<Vec<f64>> {
    logits(params, x).map(|z| softmax(&z))
}

pub fn predict(params: &ParamVector, x: &SparseFeatures) -> Result<usize> {
    logits(params, x).map(|z| argmax(&z))
}

pub fn predict_all(params: &ParamVector, data: &[Sample]) -> Result<Vec<usize>> {
    data.iter().map(|(x, _)| predict(params, x)).collect()
}

/// Mean cross-entropy over `data`, no regularization.
pub fn mean_loss(params: &ParamVector, data: &[Sample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("data"));
    }
    let mut total = 0.0;
    for (x, y) in data {
        let p = forward_probs(params, x)?;
        total -= p[*y].ln();
    }
    Ok(total / data.len() as f64)
}

/// Quadratic pull `½·λ·Σ wᵢ(θᵢ − aᵢ)²` toward an anchor; `weights = None`
/// means all ones.
#[derive(Clone, Copy, Debug)]
pub struct L2Pull<'a> {
    pub anchor: &'a ParamVector,
    pub strength: f64,
    pub weights: Option<&'a [f64]>,
}

impl<'a> L2Pull<'a> {
    pub fn uniform(anchor: &'a ParamVector, strength: f64) -> Self {
        L2Pull {
            anchor,
            strength,
            weights: None,
        }
    }

    /// Adds the penalty gradient into `grad` and returns the penalty value.
    pub fn accumulate(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        let a = self.anchor.values();
        let lambda = self.strength;
        let mut penalty = 0.0;
        for i in 0..params.len() {
            let w = self.weights.map_or(1.0, |w| w[i]);
            let diff = params[i] - a[i];
            penalty += w * diff * diff;
            grad[i] += lambda * w * diff;
        }
        0.5 * lambda * penalty
    }

    fn check(&self, params: &ParamVector) -> Result<()> {
        params.ensure_compatible(self.anchor)?;
        if let Some(w) = self.weights {
            if w.len() != params.len() {
                return Err(Error::Incompatible("penalty weights length".into()));
            }
        }
        if !(self.strength >= 0.0) {
            return Err(Error::invalid("penalty strength must be non-negative"));
        }
        Ok(())
    }
}

/// Core batch routine shared by training, distillation and Fisher.
///
/// `per_example(k, probs, dz)` returns the example's loss and writes
/// `d loss / d logits` into `dz`. Loss and gradients are averaged over the
/// batch; the gradient is accumulated into `grad`.
pub(crate) fn batch_grad<F>(params: &ParamVector, batch: &[&Sample], grad: &mut [f64], mut per_example: F) -> Result<f64>
where
    F: FnMut(usize, &[f64], &mut [f64]) -> f64,
{
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let c = params.spec.num_classes;
    let scale = 1.0 / batch.len() as f64;
    let mut dz = vec![0.0; c];
    let mut total = 0.0;
    for (k, (x, _)) in batch.iter().enumerate() {
        x.check_dim(params.spec.input_dim)?;
        let acts = forward_raw(params, x);
        let probs = softmax(&acts.logits);
        dz.iter_mut().for_each(|g| *g = 0.0);
        total += per_example(k, &probs, &mut dz);
        dz.iter_mut().for_each(|g| *g *= scale);
        backprop(params, x, &acts, &dz, grad);
    }
    Ok(total * scale)
}

/// Cross-entropy `dz = p − onehot(y)`; returns `−ln p_y`.
pub(crate) fn cross_entropy_dz(probs: &[f64], label: usize, dz: &mut [f64]) -> f64 {
    dz.copy_from_slice(probs);
    dz[label] -= 1.0;
    -probs[label].ln()
}

pub(crate) fn check_labels(batch: &[&Sample], num_classes: usize) -> Result<()> {
    match batch.iter().find(|(_, y)| *y >= num_classes) {
        Some((_, y)) => Err(Error::Dimension(format!("label {y} out of range for {num_classes} classes"))),
        None => Ok(()),
    }
}

/// Gradient of the per-example log-likelihood `∇ ln p(y|x)` for one example,
/// accumulated densely into `grad`.
pub(crate) fn log_likelihood_grad(params: &ParamVector, sample: &Sample, grad: &mut [f64]) -> Result<()> {
    let (x, y) = sample;
    x.check_dim(params.spec.input_dim)?;
    let acts = forward_raw(params, x);
    let probs = softmax(&acts.logits);
    // d ln p_y / dz = onehot(y) − p
    let mut dz: Vec<f64> = probs.iter().map(|p| -p).collect();
    dz[*y] += 1.0;
    backprop(params, x, &acts, &dz, grad);
    Ok(())
}

/// Mean cross-entropy plus an optional quadratic pull, with the exact
/// analytic gradient.
pub fn loss_and_grad(params: &ParamVector, batch: &[Sample], l2_toward: Option<&L2Pull<'_>>) -> Result<(f64, ParamVector)> {
    let refs: Vec<&Sample> = batch.iter().collect();
    check_labels(&refs, params.spec.num_classes)?;
    if let Some(pull) = l2_toward {
        pull.check(params)?;
    }
    let mut grad = params.zeros_like();
    let mut loss = batch_grad(params, &refs, &mut grad.values, |k, probs, dz| {
        cross_entropy_dz(probs, refs[k].1, dz)
    })?;
    if let Some(pull) = l2_toward {
        loss += pull.accumulate(&params.values, &mut grad.values);
    }
    Ok((loss, grad))
}

pub fn l2_distance(a: &ParamVector, b: &ParamVector) -> Result<f64> {
    a.ensure_compatible(b)?;
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}
