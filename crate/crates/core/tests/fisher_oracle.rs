use bcwi_core::fisher::{compute_fisher, Normalization};
use bcwi_core::model::forward_probs;
use bcwi_core::{Activation, ModelSpec, ParamVector, Sample, SparseFeatures};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;

fn log_p(params: &ParamVector, (x, y): &Sample) -> f64 {
    forward_probs(params, x).unwrap()[*y].ln()
}

/// Squared per-example central-difference gradients of `ln p(y|x)`, averaged.
fn fd_fisher(params: &ParamVector, data: &[Sample]) -> Vec<f64> {
    let mut out = vec![0.0; params.len()];
    for sample in data {
        for (i, slot) in out.iter_mut().enumerate() {
            let mut plus = params.clone();
            plus.values_mut()[i] += STEP;
            let mut minus = params.clone();
            minus.values_mut()[i] -= STEP;
            let g = (log_p(&plus, sample) - log_p(&minus, sample)) / (2.0 * STEP);
            *slot += g * g;
        }
    }
    out.iter().map(|v| v / data.len() as f64).collect()
}

fn random_case(rng: &mut ChaCha8Rng, act: Activation) -> (ParamVector, Vec<Sample>) {
    // at most 30 parameters: D=4, H=3 gives 12 + 3 + 3C + C
    let c = rng.random_range(2..=3);
    let spec = ModelSpec::new(4, 3, c, act).unwrap();
    assert!(spec.param_count() <= 30);
    let values = (0..spec.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let params = ParamVector::from_values(spec, values).unwrap();
    let data = (0..5)
        .map(|_| {
            let pairs = (0..2).map(|_| (rng.random_range(0..4), rng.random_range(0.5..2.0))).collect();
            (SparseFeatures::from_pairs(pairs).unwrap(), rng.random_range(0..c))
        })
        .collect();
    (params, data)
}

#[test]
fn fisher_matches_finite_difference_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let act = if case % 2 == 0 { Activation::Tanh } else { Activation::Relu };
        let (params, data) = random_case(&mut rng, act);
        let f = compute_fisher(&params, &data, Normalization::Raw, 0.0).unwrap();
        let oracle = fd_fisher(&params, &data);
        for (a, b) in f.as_slice().iter().zip(&oracle) {
            worst = worst.max((a - b).abs() / (a.abs() + b.abs()).max(1e-8));
        }
    }
    assert!(worst < 1e-4, "max relative error {worst:e}");
}

#[test]
fn linear_model_fisher_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = ModelSpec::new(5, 0, 3, Activation::Tanh).unwrap();
    let params = ParamVector::from_values(spec, (0..18).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let data: Vec<Sample> = (0..5)
        .map(|k| (SparseFeatures::from_pairs(vec![(k, 1.0), ((k + 2) % 5, 0.5)]).unwrap(), k % 3))
        .collect();
    let f = compute_fisher(&params, &data, Normalization::Raw, 0.0).unwrap();
    for (a, b) in f.as_slice().iter().zip(fd_fisher(&params, &data)) {
        assert!((a - b).abs() <= 1e-4 * (a.abs() + b.abs()).max(1e-8));
    }
}

#[test]
fn duplication_invariance_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let (params, mut data) = random_case(&mut rng, Activation::Tanh);
        for _ in 0..rng.random_range(0..40) {
            let extra = data[rng.random_range(0..data.len())].clone();
            data.push(extra);
        }
        let doubled: Vec<Sample> = data.iter().chain(&data).cloned().collect();
        for norm in [Normalization::Raw, Normalization::MeanOne] {
            let a = compute_fisher(&params, &data, norm, 1e-8).unwrap();
            let b = compute_fisher(&params, &doubled, norm, 1e-8).unwrap();
            assert_eq!(a.as_slice(), b.as_slice());
        }
    }
}

#[test]
fn mean_one_values_average_to_one_before_the_floor() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (params, data) = random_case(&mut rng, Activation::Relu);
    let f = compute_fisher(&params, &data, Normalization::MeanOne, 0.0).unwrap();
    let mean = f.as_slice().iter().sum::<f64>() / f.as_slice().len() as f64;
    assert!((mean - 1.0).abs() < 1e-9);
    assert!(f.as_slice().iter().all(|&v| v >= 0.0));
}
