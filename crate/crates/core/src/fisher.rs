//! Diagonal empirical Fisher information.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, ParamVector, Sample, HIDDEN_WEIGHT};

pub const DEFAULT_EPSILON_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Mean over examples only.
    Raw,
    /// Mean over examples, then rescaled so the values average to one.
    MeanOne,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FisherDiagonal {
    values: ParamVector,
    pub normalization: Normalization,
    pub epsilon_floor: f64,
}

impl FisherDiagonal {
    pub fn new(values: ParamVector, normalization: Normalization, epsilon_floor: f64) -> Result<Self> {
        if values.values().iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("fisher values must be finite and non-negative"));
        }
        if !(epsilon_floor >= 0.0) {
            return Err(Error::invalid("epsilon_floor must be non-negative"));
        }
        Ok(FisherDiagonal {
            values,
            normalization,
            epsilon_floor,
        })
    }

    /// Every entry equal to `value`, structured like `like`.
    pub fn uniform(like: &ParamVector, value: f64) -> Result<Self> {
        let values = like.with_values(vec![value; like.len()])?;
        FisherDiagonal::new(values, Normalization::Raw, 0.0)
    }

    pub fn values(&self) -> &ParamVector {
        &self.values
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.values()
    }
}

/// Sum over `data[range]` of squared per-example log-likelihood gradients.
///
/// Ranges split at their midpoint and small blocks are summed sequentially,
/// so the reduction tree depends only on the data in the range. Two identical
/// halves therefore produce bit-identical partial sums.
fn pairwise_sum(params: &ParamVector, data: &[Sample], scratch: &mut [f64]) -> Result<Vec<f64>> {
    const LEAF: usize = 8;
    if data.len() > LEAF {
        let mid = data.len() / 2;
        let mut left = pairwise_sum(params, &data[..mid], scratch)?;
        let right = pairwise_sum(params, &data[mid..], scratch)?;
        for (l, r) in left.iter_mut().zip(&right) {
            *l += r;
        }
        return Ok(left);
    }
    let mut acc = vec![0.0; params.len()];
    for sample in data {
        model::log_likelihood_grad(params, sample, scratch)?;
        for range in touched_ranges(params, sample) {
            for i in range {
                acc[i] += scratch[i] * scratch[i];
                scratch[i] = 0.0;
            }
        }
    }
    Ok(acc)
}

/// Flat ranges a single example's gradient can be non-zero on.
fn touched_ranges(params: &ParamVector, (x, _): &Sample) -> Vec<std::ops::Range<usize>> {
    let spec = params.spec();
    let segs = params.segments();
    let mut ranges = Vec::with_capacity(x.nnz() + 2);
    if spec.hidden_dim > 0 {
        let hw = params.segment_info(HIDDEN_WEIGHT).unwrap();
        let h = spec.hidden_dim;
        for &i in x.indices() {
            ranges.push(hw.offset + i * h..hw.offset + (i + 1) * h);
        }
        ranges.push(segs[1].offset..params.len());
    } else {
        let d = spec.input_dim;
        let head = &segs[0];
        for k in 0..spec.num_classes {
            for &i in x.indices() {
                let at = head.offset + k * d + i;
                ranges.push(at..at + 1);
            }
        }
        ranges.push(segs[1].range());
    }
    ranges
}

/// `F = (1/N) Σᵢ (∇ ln p(yᵢ|xᵢ))²`, optionally rescaled to mean one, then
/// floored elementwise at `epsilon_floor`.
pub fn compute_fisher(params: &ParamVector, data: &[Sample], normalization: Normalization, epsilon_floor: f64) -> Result<FisherDiagonal> {
    if data.is_empty() {
        return Err(Error::Empty("fisher data"));
    }
    params.ensure_finite("fisher params")?;
    if let Some((_, y)) = data.iter().find(|(_, y)| *y >= params.spec().num_classes) {
        return Err(Error::Dimension(format!("label {y} out of range")));
    }
    let mut scratch = vec![0.0; params.len()];
    let mut values = pairwise_sum(params, data, &mut scratch)?;
    let n = data.len() as f64;
    for v in &mut values {
        *v /= n;
    }
    if normalization == Normalization::MeanOne {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        if mean > 0.0 {
            for v in &mut values {
                *v /= mean;
            }
        }
    }
    for v in &mut values {
        *v = v.max(epsilon_floor);
    }
    FisherDiagonal::new(params.with_values(values)?, normalization, epsilon_floor)
}
