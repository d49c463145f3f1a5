//! Weight-space merging of old and new models, plus the output-space
//! ensemble used as a reference point.

use crate::error::{Error, Result};
use crate::fisher::FisherDiagonal;
use crate::model::{ModelSpec, ParamVector, HEAD_BIAS, HEAD_WEIGHT};

fn check_alpha(alpha: f64, what: &str) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} must be in [0, 1], got {alpha}")))
    }
}

/// Widens the head of `old` to `target_spec.num_classes`, filling the rows
/// and biases of classes the old model never saw with `fill`.
fn pad_head(old: &ParamVector, target_spec: ModelSpec, fill: f64) -> Result<ParamVector> {
    let spec = *old.spec();
    if spec.with_classes(target_spec.num_classes) != target_spec {
        return Err(Error::Incompatible(format!(
            "only the class count may differ: {spec:?} vs {target_spec:?}"
        )));
    }
    if spec.num_classes > target_spec.num_classes {
        return Err(Error::Incompatible(format!(
            "old model has more classes ({}) than the target ({})",
            spec.num_classes, target_spec.num_classes
        )));
    }
    if spec.num_classes == target_spec.num_classes {
        return Ok(old.clone());
    }
    let mut out = ParamVector::zeros(target_spec);
    out.values_mut().fill(fill);
    for seg in old.segments() {
        let src = &old.values()[seg.range()];
        let dst = out.segment_mut(&seg.name).expect("same segment names");
        match seg.name.as_str() {
            // class-major: the old rows are a prefix
            HEAD_WEIGHT | HEAD_BIAS => dst[..src.len()].copy_from_slice(src),
            _ => dst.copy_from_slice(src),
        }
    }
    Ok(out)
}

/// Zero-pads the old head so the old model can be merged with a model that
/// knows more classes. Body segments are copied bit-exactly.
pub fn align_old_head(old: &ParamVector, target_spec: ModelSpec) -> Result<ParamVector> {
    pad_head(old, target_spec, 0.0)
}

/// Widens a Fisher diagonal the same way, filling new-class entries with the
/// Fisher's epsilon floor.
pub fn align_fisher(fisher: &FisherDiagonal, target_spec: ModelSpec) -> Result<FisherDiagonal> {
    let fill = fisher.epsilon_floor;
    let aligned = pad_head(fisher.values(), target_spec, 0.0)?;
    let old_c = fisher.values().spec().num_classes;
    let mut aligned = aligned;
    if old_c < target_spec.num_classes {
        let width = target_spec.feature_dim();
        aligned.segment_mut(HEAD_WEIGHT).unwrap()[old_c * width..].fill(fill);
        aligned.segment_mut(HEAD_BIAS).unwrap()[old_c..].fill(fill);
    }
    FisherDiagonal::new(aligned, fisher.normalization, fisher.epsilon_floor)
}

/// `α·θ_old + (1−α)·θ_new`. The endpoints return the inputs bit-exactly.
pub fn bcwi(alpha: f64, old: &ParamVector, new: &ParamVector) -> Result<ParamVector> {
    check_alpha(alpha, "alpha")?;
    old.ensure_compatible(new)?;
    if alpha == 0.0 {
        return Ok(new.clone());
    }
    if alpha == 1.0 {
        return Ok(old.clone());
    }
    let beta = 1.0 - alpha;
    let values = old
        .values()
        .iter()
        .zip(new.values())
        .map(|(o, n)| alpha * o + beta * n)
        .collect();
    new.with_values(values)
}

/// `(α·F·θ_old + (1−α)·θ_new) / (α·F + (1−α))`, elementwise.
pub fn fisher_bcwi(alpha: f64, fisher: &FisherDiagonal, old: &ParamVector, new: &ParamVector) -> Result<ParamVector> {
    check_alpha(alpha, "alpha")?;
    old.ensure_compatible(new)?;
    old.ensure_compatible(fisher.values())?;
    if alpha == 0.0 {
        return Ok(new.clone());
    }
    let beta = 1.0 - alpha;
    let mut values = Vec::with_capacity(old.len());
    for ((o, n), f) in old.values().iter().zip(new.values()).zip(fisher.as_slice()) {
        let weighted = alpha * f;
        let denom = weighted + beta;
        if !(denom > 0.0) {
            return Err(Error::NonFinite("fisher_bcwi denominator is zero".into()));
        }
        values.push((weighted * o + beta * n) / denom);
    }
    new.with_values(values)
}

/// Elementwise mean, summed sequentially in list order.
pub fn soup(models: &[ParamVector]) -> Result<ParamVector> {
    let (first, rest) = models.split_first().ok_or(Error::Empty("soup models"))?;
    let mut sum = first.values().to_vec();
    for m in rest {
        first.ensure_compatible(m)?;
        for (s, v) in sum.iter_mut().zip(m.values()) {
            *s += v;
        }
    }
    let count = models.len() as f64;
    for s in &mut sum {
        *s /= count;
    }
    first.with_values(sum)
}

pub fn soup_bcwi(alpha: f64, old: &ParamVector, models: &[ParamVector]) -> Result<ParamVector> {
    check_alpha(alpha, "alpha")?;
    bcwi(alpha, old, &soup(models)?)
}

/// `β·p_old + (1−β)·p_new` with `p_old` zero-extended over the new classes.
pub fn output_ensemble(beta: f64, probs_old: &[f64], probs_new: &[f64], num_new_classes: usize) -> Result<Vec<f64>> {
    check_alpha(beta, "beta")?;
    if probs_old.len() + num_new_classes != probs_new.len() {
        return Err(Error::Dimension(format!(
            "{} old + {} new classes != {} new-model outputs",
            probs_old.len(),
            num_new_classes,
            probs_new.len()
        )));
    }
    for (name, p) in [("probs_old", probs_old), ("probs_new", probs_new)] {
        if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("{name} does not sum to one")));
        }
    }
    Ok(probs_new
        .iter()
        .enumerate()
        .map(|(k, &pn)| {
            let po = probs_old.get(k).copied().unwrap_or(0.0);
            beta * po + (1.0 - beta) * pn
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fisher::Normalization;
    use crate::model::{init_params, Activation, HIDDEN_BIAS, HIDDEN_WEIGHT};

    fn tiny(values: Vec<f64>) -> ParamVector {
        // head_weight [2,1] + head_bias [2] = 4 values
        let spec = ModelSpec::new(1, 0, 2, Activation::Tanh).unwrap();
        ParamVector::from_values(spec, values).unwrap()
    }

    fn pair() -> (ParamVector, ParamVector) {
        (tiny(vec![1.0, 3.0, -2.0, 0.5]), tiny(vec![3.0, 1.0, 4.0, 0.25]))
    }

    #[test]
    fn bcwi_examples() {
        let (o, n) = pair();
        assert_eq!(bcwi(0.0, &o, &n).unwrap(), n);
        assert_eq!(bcwi(1.0, &o, &n).unwrap(), o);
        assert_eq!(&bcwi(0.5, &o, &n).unwrap().values()[..2], &[2.0, 2.0]);
        assert!(bcwi(1.5, &o, &n).is_err());
        assert!(bcwi(-0.1, &o, &n).is_err());
    }

    #[test]
    fn fisher_bcwi_examples() {
        let o = tiny(vec![1.0, 1.0, 0.0, 0.0]);
        let n = tiny(vec![5.0, 5.0, 0.0, 0.0]);
        let f = FisherDiagonal::new(tiny(vec![3.0, 1.0, 1.0, 1.0]), Normalization::Raw, 0.0).unwrap();
        let merged = fisher_bcwi(0.5, &f, &o, &n).unwrap();
        assert_eq!(&merged.values()[..2], &[2.0, 3.0]);
        assert_eq!(fisher_bcwi(0.0, &f, &o, &n).unwrap(), n);

        let (o, n) = pair();
        let f = FisherDiagonal::new(tiny(vec![1e-8, 2.0, 7.0, 0.3]), Normalization::Raw, 1e-8).unwrap();
        let at_one = fisher_bcwi(1.0, &f, &o, &n).unwrap();
        for (a, b) in at_one.values().iter().zip(o.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(fisher_bcwi(2.0, &f, &o, &n).is_err());
    }

    #[test]
    fn fisher_bcwi_zero_denominator_is_reported() {
        let (o, n) = pair();
        let f = FisherDiagonal::uniform(&o, 0.0).unwrap();
        assert!(fisher_bcwi(1.0, &f, &o, &n).is_err());
    }

    #[test]
    fn uniform_fisher_reduces_to_bcwi() {
        let (o, n) = pair();
        let f = FisherDiagonal::uniform(&o, 1.0).unwrap();
        for k in 0..=20 {
            let alpha = k as f64 / 20.0;
            assert_eq!(fisher_bcwi(alpha, &f, &o, &n).unwrap(), bcwi(alpha, &o, &n).unwrap());
        }
    }

    #[test]
    fn soup_examples() {
        let (o, n) = pair();
        assert_eq!(soup(std::slice::from_ref(&o)).unwrap(), o);
        let s = soup(&[o.clone(), n.clone()]).unwrap();
        assert_eq!(&s.values()[..2], &[2.0, 2.0]);
        assert_eq!(s, soup(&[n.clone(), o.clone()]).unwrap());
        assert!(matches!(soup(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn soup_bcwi_examples() {
        let (o, n) = pair();
        assert_eq!(soup_bcwi(0.3, &o, std::slice::from_ref(&n)).unwrap(), bcwi(0.3, &o, &n).unwrap());
        let a = tiny(vec![0.0, 2.0, 0.0, 0.0]);
        let b = tiny(vec![2.0, 0.0, 0.0, 0.0]);
        assert_eq!(&soup_bcwi(0.0, &o, &[a.clone(), b.clone()]).unwrap().values()[..2], &[1.0, 1.0]);
        assert_eq!(soup_bcwi(1.0, &o, &[a, b]).unwrap(), o);
    }

    #[test]
    fn align_pads_with_zero_rows() {
        let small = ModelSpec::new(5, 3, 2, Activation::Tanh).unwrap();
        let old = init_params(small, 4);
        assert_eq!(align_old_head(&old, small).unwrap(), old);

        let wide = small.with_classes(3);
        let aligned = align_old_head(&old, wide).unwrap();
        assert_eq!(aligned.segment(HIDDEN_WEIGHT), old.segment(HIDDEN_WEIGHT));
        assert_eq!(aligned.segment(HIDDEN_BIAS), old.segment(HIDDEN_BIAS));
        let head = aligned.segment(HEAD_WEIGHT).unwrap();
        assert_eq!(&head[..6], old.segment(HEAD_WEIGHT).unwrap());
        assert_eq!(&head[6..], &[0.0, 0.0, 0.0]);
        assert_eq!(aligned.segment(HEAD_BIAS).unwrap()[2], 0.0);

        let other_body = ModelSpec::new(6, 3, 3, Activation::Tanh).unwrap();
        assert!(align_old_head(&old, other_body).is_err());
        assert!(align_old_head(&aligned, small).is_err());
    }

    #[test]
    fn align_fisher_uses_the_floor() {
        let small = ModelSpec::new(2, 0, 2, Activation::Tanh).unwrap();
        let f = FisherDiagonal::new(ParamVector::from_values(small, vec![1.0; 6]).unwrap(), Normalization::MeanOne, 1e-8).unwrap();
        let wide = align_fisher(&f, small.with_classes(3)).unwrap();
        assert_eq!(wide.as_slice(), &[1.0, 1.0, 1.0, 1.0, 1e-8, 1e-8, 1.0, 1.0, 1e-8]);
    }

    #[test]
    fn output_ensemble_examples() {
        let p = output_ensemble(0.5, &[0.6, 0.4], &[0.2, 0.2, 0.6], 1).unwrap();
        for (a, b) in p.iter().zip([0.4, 0.3, 0.3]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(output_ensemble(0.0, &[0.6, 0.4], &[0.2, 0.2, 0.6], 1).unwrap(), vec![0.2, 0.2, 0.6]);
        assert_eq!(output_ensemble(1.0, &[0.6, 0.4], &[0.2, 0.2, 0.6], 1).unwrap()[2], 0.0);
        assert!(output_ensemble(1.2, &[0.6, 0.4], &[0.2, 0.2, 0.6], 1).is_err());
        assert!(output_ensemble(0.5, &[0.6, 0.4], &[0.2, 0.8], 1).is_err());
    }
}
