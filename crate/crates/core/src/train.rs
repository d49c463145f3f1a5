//! Finetuning and the training-time regression baselines.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::ScenarioData;
use crate::error::{Error, Result};
use crate::fisher::FisherDiagonal;
use crate::model::{self, argmax, L2Pull, ParamVector, Sample};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataMode {
    /// Old and new training data together.
    Updated,
    /// Only the new training data (the new model never revisits old data).
    NewOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub base_lr: f64,
    pub batch_size: usize,
    pub warmup_ratio: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub grad_clip_norm: f64,
    pub seed: u64,
    pub data_mode: DataMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            base_lr: 0.05,
            batch_size: 16,
            warmup_ratio: 0.1,
            adam_beta1: 0.9,
            adam_beta2: 0.98,
            adam_eps: 1e-6,
            weight_decay: 0.01,
            grad_clip_norm: 5.0,
            seed: 0,
            data_mode: DataMode::Updated,
        }
    }
}

impl TrainConfig {
    /// Defaults for the old and target models.
    pub fn full() -> Self {
        TrainConfig::default()
    }

    /// Defaults for the new model: shorter, starting from the old weights.
    pub fn update() -> Self {
        TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        TrainConfig { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.warmup_ratio) {
            return Err(Error::invalid("warmup_ratio must be in [0, 1]"));
        }
        if self.batch_size < 1 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.grad_clip_norm > 0.0) {
            return Err(Error::invalid("grad_clip_norm must be positive"));
        }
        if !(self.base_lr >= 0.0) || !(self.weight_decay >= 0.0) || !(self.adam_eps > 0.0) {
            return Err(Error::invalid("base_lr, weight_decay must be >= 0 and adam_eps > 0"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::invalid("adam betas must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Linear warmup over `ceil(warmup_ratio·total)` steps, then linear decay to
/// zero at `total_steps`.
pub fn lr_at(step: usize, total_steps: usize, cfg: &TrainConfig) -> f64 {
    let total = total_steps.max(1);
    let step = step.min(total);
    let warmup = (cfg.warmup_ratio * total as f64).ceil() as usize;
    if step < warmup {
        cfg.base_lr * (step as f64 / warmup as f64)
    } else if total == warmup {
        cfg.base_lr
    } else {
        cfg.base_lr * ((total - step) as f64 / (total - warmup) as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// Rescales `grad` in place so its L2 norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

/// One Adam update with bias correction: clip, update moments, step, then
/// decoupled weight decay. Only coordinates in `trainable` move (all of them
/// when `None`).
pub fn adam_step(
    params: &mut [f64],
    grad: &mut [f64],
    state: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
    trainable: Option<&[std::ops::Range<usize>]>,
) {
    let full = [0..params.len()];
    let ranges = trainable.unwrap_or(&full);
    if trainable.is_some() {
        // frozen coordinates must not contribute to the clipping norm
        let mut masked = vec![0.0; 0];
        for r in ranges {
            masked.extend_from_slice(&grad[r.clone()]);
        }
        let norm = masked.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > cfg.grad_clip_norm {
            let scale = cfg.grad_clip_norm / norm;
            for r in ranges {
                grad[r.clone()].iter_mut().for_each(|g| *g *= scale);
            }
        }
    } else {
        clip_grad_norm(grad, cfg.grad_clip_norm);
    }

    state.step += 1;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let bc1 = 1.0 - b1.powi(state.step as i32);
    let bc2 = 1.0 - b2.powi(state.step as i32);
    let decay = lr * cfg.weight_decay;
    for r in ranges {
        for i in r.clone() {
            let g = grad[i];
            state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
            state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
            let m_hat = state.m[i] / bc1;
            let v_hat = state.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
            params[i] -= decay * params[i];
        }
    }
}

/// Which model of the update pipeline is being trained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// From the shared init on the old data.
    Old,
    /// From the shared init on the updated data.
    Target,
    /// From the (head-aligned) old model on the updated data.
    New,
}

#[derive(Clone, Debug)]
pub enum Regularizer {
    None,
    /// Quadratic pull `½λ‖θ − θ_init‖²` toward the starting weights.
    PriorWd { lambda: f64 },
    /// Fisher-weighted quadratic pull toward `anchor`.
    Ewc {
        lambda: f64,
        fisher: FisherDiagonal,
        anchor: ParamVector,
    },
    /// Per-step random replacement of weights by the starting weights.
    Mixout { p: f64 },
    /// KL toward the teacher's predictions, boosted on examples the teacher
    /// gets right. A teacher with fewer classes is zero-extended.
    Distill {
        lambda: f64,
        focal_boost: f64,
        teacher: ParamVector,
    },
    /// Only bias segments are trained.
    BiasOnly,
}

impl Regularizer {
    pub fn name(&self) -> &'static str {
        match self {
            Regularizer::None => "none",
            Regularizer::PriorWd { .. } => "prior_wd",
            Regularizer::Ewc { .. } => "ewc",
            Regularizer::Mixout { .. } => "mixout",
            Regularizer::Distill { .. } => "distill",
            Regularizer::BiasOnly => "bias_only",
        }
    }

    fn validate(&self, init: &ParamVector) -> Result<()> {
        match self {
            Regularizer::None | Regularizer::BiasOnly => Ok(()),
            Regularizer::PriorWd { lambda } if *lambda >= 0.0 => Ok(()),
            Regularizer::Ewc { lambda, fisher, anchor } if *lambda >= 0.0 => {
                init.ensure_compatible(anchor)?;
                anchor.ensure_compatible(fisher.values())
            }
            Regularizer::Mixout { p } if (0.0..1.0).contains(p) => Ok(()),
            Regularizer::Distill {
                lambda,
                focal_boost,
                teacher,
            } if *lambda >= 0.0 && *focal_boost >= 0.0 => {
                let (s, t) = (init.spec(), teacher.spec());
                if s.with_classes(t.num_classes) != *t || t.num_classes > s.num_classes {
                    return Err(Error::Incompatible("teacher must share the student's body".into()));
                }
                Ok(())
            }
            other => Err(Error::invalid(format!("invalid {} strength", other.name()))),
        }
    }
}

/// `CE(student, label) + λ·(1 + focal_boost·[teacher_correct])·KL(teacher ‖ student)`.
///
/// Both vectors range over the same classes; classes the teacher assigns zero
/// probability contribute nothing to the KL term.
pub fn distill_loss(student_probs: &[f64], teacher_probs: &[f64], label: usize, teacher_correct: bool, lambda: f64, focal_boost: f64) -> f64 {
    let ce = -student_probs[label].ln();
    let weight = distill_weight(teacher_correct, lambda, focal_boost);
    if weight == 0.0 {
        return ce;
    }
    ce + weight * kl_divergence(teacher_probs, student_probs)
}

fn distill_weight(teacher_correct: bool, lambda: f64, focal_boost: f64) -> f64 {
    lambda * (1.0 + if teacher_correct { focal_boost } else { 0.0 })
}

/// `KL(p ‖ q) = Σ p ln(p/q)` over entries with `p > 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum()
}

/// Samples a Bernoulli(`p`) mask. Masked coordinates take the anchor value;
/// the others become `anchor + (θ − anchor)/(1 − p)` so the expected
/// effective weight is `θ`. Returns the effective weights and the mask.
pub fn mixout_mask_apply<R: Rng + ?Sized>(params: &ParamVector, anchor: &ParamVector, p: f64, rng: &mut R) -> Result<(ParamVector, Vec<bool>)> {
    params.ensure_compatible(anchor)?;
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid("mixout p must be in [0, 1)"));
    }
    if p == 0.0 {
        return Ok((params.clone(), vec![false; params.len()]));
    }
    let scale = 1.0 / (1.0 - p);
    let mut mask = Vec::with_capacity(params.len());
    let values = params
        .values()
        .iter()
        .zip(anchor.values())
        .map(|(&t, &a)| {
            let hit = rng.random::<f64>() < p;
            mask.push(hit);
            if hit {
                a
            } else {
                a + (t - a) * scale
            }
        })
        .collect();
    Ok((params.with_values(values)?, mask))
}

fn role_data(data: &ScenarioData, role: Role, cfg: &TrainConfig) -> Vec<Sample> {
    match (role, cfg.data_mode) {
        (Role::Old, _) => data.old_train.clone(),
        (Role::Target, _) | (Role::New, DataMode::Updated) => data.updated_train(),
        (Role::New, DataMode::NewOnly) => data.new_train.clone(),
    }
}

/// Finetunes `init` for `role` on the scenario data.
///
/// Shuffling and mixout masks draw from separate streams keyed by
/// `cfg.seed`, so the result is a pure function of the arguments.
pub fn train(init: &ParamVector, data: &ScenarioData, role: Role, cfg: &TrainConfig, reg: &Regularizer) -> Result<ParamVector> {
    cfg.validate()?;
    if !matches!(reg, Regularizer::None) && role != Role::New {
        return Err(Error::invalid(format!("{} regularization applies only to the new model", reg.name())));
    }
    reg.validate(init)?;
    let spec = init.spec();
    if spec.input_dim != data.input_dim {
        return Err(Error::Dimension(format!(
            "model input_dim {} vs featurizer {}",
            spec.input_dim, data.input_dim
        )));
    }
    let expected_classes = match role {
        Role::Old => data.num_old_classes,
        Role::Target | Role::New => data.num_classes,
    };
    if spec.num_classes != expected_classes {
        return Err(Error::Dimension(format!(
            "{role:?} model needs {expected_classes} classes, init has {}",
            spec.num_classes
        )));
    }
    let samples = role_data(data, role, cfg);
    if samples.is_empty() {
        return Err(Error::Empty("training split"));
    }
    model::check_labels(&samples.iter().collect::<Vec<_>>(), spec.num_classes)?;

    let steps_per_epoch = samples.len().div_ceil(cfg.batch_size);
    let total = cfg.epochs * steps_per_epoch;
    if total == 0 {
        return Ok(init.clone());
    }

    let trainable: Option<Vec<std::ops::Range<usize>>> = match reg {
        Regularizer::BiasOnly => Some(init.segments().iter().filter(|s| s.is_bias()).map(|s| s.range()).collect()),
        _ => None,
    };
    let teacher_probs: Option<Vec<Vec<f64>>> = match reg {
        Regularizer::Distill { teacher, .. } => Some(
            samples
                .iter()
                .map(|(x, _)| {
                    let mut p = model::forward_probs(teacher, x)?;
                    p.resize(spec.num_classes, 0.0);
                    Ok(p)
                })
                .collect::<Result<_>>()?,
        ),
        _ => None,
    };
    let teacher_classes = match reg {
        Regularizer::Distill { teacher, .. } => teacher.spec().num_classes,
        _ => 0,
    };

    let mut shuffle_rng = rng::stream(cfg.seed, "train/shuffle");
    let mut mixout_rng = rng::stream(cfg.seed, "train/mixout");
    let mut params = init.clone();
    let mut state = AdamState::new(params.len());
    let mut grad = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut step = 0;

    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            grad.iter_mut().for_each(|g| *g = 0.0);

            let mixed = match reg {
                Regularizer::Mixout { p } => Some(mixout_mask_apply(&params, init, *p, &mut mixout_rng)?),
                _ => None,
            };
            let eval_params = mixed.as_ref().map_or(&params, |(m, _)| m);

            match (reg, &teacher_probs) {
                (
                    Regularizer::Distill {
                        lambda, focal_boost, ..
                    },
                    Some(tp),
                ) => {
                    model::batch_grad(eval_params, &batch, &mut grad, |k, probs, dz| {
                        let label = batch[k].1;
                        let t = &tp[chunk[k]];
                        let ce = model::cross_entropy_dz(probs, label, dz);
                        let teacher_correct = argmax(t) == label;
                        let weight = distill_weight(teacher_correct, *lambda, *focal_boost);
                        // gold labels the teacher cannot express get plain CE
                        if weight == 0.0 || label >= teacher_classes {
                            return ce;
                        }
                        // d KL(t‖s)/dz = s − t
                        for c in 0..dz.len() {
                            dz[c] += weight * (probs[c] - t[c]);
                        }
                        ce + weight * kl_divergence(t, probs)
                    })?;
                }
                _ => {
                    model::batch_grad(eval_params, &batch, &mut grad, |k, probs, dz| {
                        model::cross_entropy_dz(probs, batch[k].1, dz)
                    })?;
                }
            }

            match reg {
                Regularizer::PriorWd { lambda } => {
                    L2Pull::uniform(init, *lambda).accumulate(params.values(), &mut grad);
                }
                Regularizer::Ewc { lambda, fisher, anchor } => {
                    L2Pull {
                        anchor,
                        strength: *lambda,
                        weights: Some(fisher.as_slice()),
                    }
                    .accumulate(params.values(), &mut grad);
                }
                Regularizer::Mixout { p } => {
                    let (_, mask) = mixed.as_ref().unwrap();
                    let scale = 1.0 / (1.0 - p);
                    for (g, &hit) in grad.iter_mut().zip(mask) {
                        *g = if hit { 0.0 } else { *g * scale };
                    }
                }
                _ => {}
            }

            let lr = lr_at(step, total, cfg);
            adam_step(params.values_mut(), &mut grad, &mut state, lr, cfg, trainable.as_deref());
            step += 1;
        }
    }
    params.ensure_finite("trained parameters")?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, Activation, ModelSpec, SparseFeatures};

    fn cfg() -> TrainConfig {
        TrainConfig::default()
    }

    #[test]
    fn optimizer_defaults() {
        let c = cfg();
        assert_eq!((c.adam_beta1, c.adam_beta2, c.adam_eps), (0.9, 0.98, 1e-6));
        assert_eq!((c.weight_decay, c.grad_clip_norm, c.warmup_ratio), (0.01, 5.0, 0.1));
        assert_eq!((c.batch_size, c.epochs, c.base_lr), (16, 30, 0.05));
        assert_eq!(TrainConfig::update().epochs, 10);
    }

    #[test]
    fn schedule_examples() {
        let c = TrainConfig {
            base_lr: 6e-5,
            warmup_ratio: 0.1,
            ..cfg()
        };
        assert!((lr_at(5, 100, &c) - 3e-5).abs() < 1e-20);
        assert_eq!(lr_at(10, 100, &c), 6e-5);
        assert_eq!(lr_at(100, 100, &c), 0.0);
        assert!((lr_at(55, 100, &c) - 3e-5).abs() < 1e-18);
        let flat = TrainConfig { warmup_ratio: 0.0, ..c };
        assert_eq!(lr_at(0, 10, &flat), 6e-5);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let c = TrainConfig { weight_decay: 0.0, ..cfg() };
        let mut p = vec![0.0];
        let mut g = vec![2.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &mut g, &mut s, 0.1, &c, None);
        assert!((p[0] + 0.1).abs() < 1e-4);
    }

    #[test]
    fn clipping_caps_the_norm() {
        let mut g = vec![30.0, 40.0];
        let before = clip_grad_norm(&mut g, 5.0);
        assert_eq!(before, 50.0);
        let after = (g[0] * g[0] + g[1] * g[1]).sqrt();
        assert!((after - 5.0).abs() < 1e-12);
    }

    #[test]
    fn decoupled_decay() {
        let c = TrainConfig { weight_decay: 0.01, ..cfg() };
        let mut p = vec![1.0];
        let mut g = vec![0.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &mut g, &mut s, 0.1, &c, None);
        assert!((p[0] - 0.999).abs() < 1e-15);
    }

    #[test]
    fn frozen_coordinates_do_not_move() {
        let mut p = vec![1.0, 1.0, 1.0];
        let mut g = vec![1.0, 1.0, 1.0];
        let mut s = AdamState::new(3);
        adam_step(&mut p, &mut g, &mut s, 0.1, &cfg(), Some(&[1..2]));
        assert_eq!(p[0], 1.0);
        assert_eq!(p[2], 1.0);
        assert!(p[1] < 1.0);
    }

    #[test]
    fn distill_loss_examples() {
        let s = [0.3, 0.7];
        assert_eq!(distill_loss(&s, &s, 1, true, 2.0, 1.0), -(0.7f64).ln());
        assert_eq!(distill_loss(&s, &[1.0, 0.0], 1, false, 0.0, 1.0), -(0.7f64).ln());
        let kl = distill_loss(&[0.5, 0.5], &[1.0, 0.0], 0, true, 1.0, 0.0) - -(0.5f64).ln();
        assert!((kl - std::f64::consts::LN_2).abs() < 1e-15);
        let boosted = distill_loss(&[0.5, 0.5], &[1.0, 0.0], 0, true, 1.0, 1.0) - -(0.5f64).ln();
        assert!((boosted - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
    }

    fn tiny_pair() -> (ParamVector, ParamVector) {
        let spec = ModelSpec::new(6, 3, 2, Activation::Tanh).unwrap();
        (init_params(spec, 1), init_params(spec, 2))
    }

    #[test]
    fn mixout_identity_and_anchor_values() {
        let (p, a) = tiny_pair();
        let mut r = rng::stream(0, "test");
        let (same, mask) = mixout_mask_apply(&p, &a, 0.0, &mut r).unwrap();
        assert_eq!(same, p);
        assert!(mask.iter().all(|m| !m));

        let (eff, mask) = mixout_mask_apply(&p, &a, 0.5, &mut r).unwrap();
        assert!(mask.iter().any(|&m| m));
        for i in 0..p.len() {
            if mask[i] {
                assert_eq!(eff.values()[i], a.values()[i]);
            }
        }
        assert!(mixout_mask_apply(&p, &a, 1.0, &mut r).is_err());
    }

    #[test]
    fn mixout_is_unbiased() {
        let (p, a) = tiny_pair();
        let prob = 0.3;
        let trials = 10_000;
        let mut r = rng::stream(42, "mixout-mc");
        let mut sum = vec![0.0; p.len()];
        for _ in 0..trials {
            let (eff, _) = mixout_mask_apply(&p, &a, prob, &mut r).unwrap();
            for (s, v) in sum.iter_mut().zip(eff.values()) {
                *s += v;
            }
        }
        for i in 0..p.len() {
            let mean = sum[i] / trials as f64;
            let dev = (p.values()[i] - a.values()[i]).abs();
            // per-draw std of the effective weight is |θ − a|·sqrt(p/(1−p))
            let sigma = dev * (prob / (1.0 - prob)).sqrt() / (trials as f64).sqrt();
            assert!((mean - p.values()[i]).abs() <= 3.0 * sigma + 1e-15, "coordinate {i}");
        }
    }

    fn toy_data() -> ScenarioData {
        let mk = |i: usize, y: usize| -> Sample {
            (SparseFeatures::from_pairs(vec![(i % 6, 1.0), (y + 6, 1.0)]).unwrap(), y)
        };
        let old_train: Vec<Sample> = (0..12).map(|i| mk(i, i % 2)).collect();
        let new_train: Vec<Sample> = (0..8).map(|i| mk(i + 3, (i + 1) % 2)).collect();
        ScenarioData {
            old_train: old_train.clone(),
            old_dev: old_train[..4].to_vec(),
            new_train,
            new_dev: old_train[4..6].to_vec(),
            test: old_train,
            num_old_classes: 2,
            num_classes: 2,
            input_dim: 8,
        }
    }

    #[test]
    fn zero_epochs_returns_init() {
        let data = toy_data();
        let init = init_params(ModelSpec::new(8, 4, 2, Activation::Tanh).unwrap(), 0);
        let c = TrainConfig { epochs: 0, ..cfg() };
        assert_eq!(train(&init, &data, Role::Old, &c, &Regularizer::None).unwrap(), init);
    }

    #[test]
    fn role_regularizer_mismatch_is_rejected() {
        let data = toy_data();
        let init = init_params(ModelSpec::new(8, 4, 2, Activation::Tanh).unwrap(), 0);
        assert!(train(&init, &data, Role::Old, &cfg(), &Regularizer::PriorWd { lambda: 1.0 }).is_err());
        let wrong = init_params(ModelSpec::new(8, 4, 3, Activation::Tanh).unwrap(), 0);
        assert!(train(&wrong, &data, Role::Target, &cfg(), &Regularizer::None).is_err());
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let data = toy_data();
        let init = init_params(ModelSpec::new(8, 4, 2, Activation::Tanh).unwrap(), 0);
        let c = TrainConfig { batch_size: 4, ..cfg() };
        let a = train(&init, &data, Role::Old, &c, &Regularizer::None).unwrap();
        let b = train(&init, &data, Role::Old, &c, &Regularizer::None).unwrap();
        assert_eq!(a, b);
        let before = model::mean_loss(&init, &data.old_train).unwrap();
        let after = model::mean_loss(&a, &data.old_train).unwrap();
        assert!(after < before * 0.5, "{before} -> {after}");
    }

    #[test]
    fn bias_only_freezes_weights() {
        let data = toy_data();
        let init = init_params(ModelSpec::new(8, 4, 2, Activation::Tanh).unwrap(), 0);
        let out = train(&init, &data, Role::New, &cfg(), &Regularizer::BiasOnly).unwrap();
        for seg in init.segments() {
            let (a, b) = (&init.values()[seg.range()], &out.values()[seg.range()]);
            if seg.is_bias() {
                assert_ne!(a, b);
            } else {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn new_only_mode_uses_new_data() {
        let data = toy_data();
        let c = TrainConfig {
            data_mode: DataMode::NewOnly,
            ..cfg()
        };
        assert_eq!(role_data(&data, Role::New, &c).len(), 8);
        assert_eq!(role_data(&data, Role::New, &cfg()).len(), 20);
        assert_eq!(role_data(&data, Role::Target, &c).len(), 20);
    }
}
