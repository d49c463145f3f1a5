use bcwi_core::eval::{ci95, evaluate, select_alpha, spearman, TradeoffCurve, TradeoffPoint};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_force_flips(old: &[usize], new: &[usize], gold: &[usize]) -> (usize, usize, usize) {
    let mut negative = 0;
    let mut positive = 0;
    let mut correct = 0;
    for i in 0..gold.len() {
        if old[i] == gold[i] && new[i] != gold[i] {
            negative += 1;
        }
        if old[i] != gold[i] && new[i] == gold[i] {
            positive += 1;
        }
        if new[i] == gold[i] {
            correct += 1;
        }
    }
    (negative, positive, correct)
}

#[test]
fn evaluate_matches_brute_force_on_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for _ in 0..1000 {
        let n = rng.random_range(1..=50);
        let c = rng.random_range(2..=5);
        let mut draw = || (0..n).map(|_| rng.random_range(0..c)).collect::<Vec<usize>>();
        let (gold, old, new) = (draw(), draw(), draw());
        let r = evaluate(&old, &new, &gold).unwrap();
        let (neg, pos, correct) = brute_force_flips(&old, &new, &gold);
        assert_eq!(r.negative_flips(), neg);
        assert_eq!((r.nfr * n as f64).round() as usize, neg);
        assert_eq!((r.positive_flip_rate * n as f64).round() as usize, pos);
        assert_eq!((r.accuracy * n as f64).round() as usize, correct);
        assert!(r.flip_indices.iter().all(|&i| old[i] == gold[i] && new[i] != gold[i]));
    }
}

#[test]
fn ci95_uses_the_student_t_quantile() {
    // t_{0.975, 2} = 4.303 from standard tables
    let agg = ci95(&[1.0, 2.0, 3.0]).unwrap();
    assert_eq!(agg.mean, 2.0);
    assert!((agg.ci_halfwidth - 4.303 / 3f64.sqrt()).abs() < 1e-3);
    // t_{0.975, 9} = 2.262
    let ten: Vec<f64> = (0..10).map(f64::from).collect();
    let sd = (ten.iter().map(|v| (v - 4.5) * (v - 4.5)).sum::<f64>() / 9.0).sqrt();
    assert!((ci95(&ten).unwrap().ci_halfwidth - 2.262 * sd / 10f64.sqrt()).abs() < 1e-3);
    assert_eq!(ci95(&[0.7; 4]).unwrap().ci_halfwidth, 0.0);
    assert!(ci95(&[1.0]).is_err());
}

#[test]
fn spearman_handles_ties_and_direction() {
    assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0, 2.0, 3.0]) - 0.9486832980505138).abs() < 1e-12);
    assert_eq!(spearman(&[1.0, 2.0], &[5.0, 5.0]), 0.0);
}

fn curve_from(accs: &[f64]) -> TradeoffCurve {
    let n = accs.len() - 1;
    TradeoffCurve {
        points: accs
            .iter()
            .enumerate()
            .map(|(k, &a)| TradeoffPoint {
                alpha: k as f64 / n as f64,
                dev_acc: a,
                dev_nfr: 0.0,
                test_acc: a,
                test_nfr: 0.0,
            })
            .collect(),
    }
}

proptest! {
    #[test]
    fn flips_partition_old_accuracy(seed in any::<u64>(), n in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || (0..n).map(|_| rng.random_range(0..3usize)).collect::<Vec<_>>();
        let (gold, old, new) = (draw(), draw(), draw());
        let r = evaluate(&old, &new, &gold).unwrap();
        let both = (0..n).filter(|&i| old[i] == gold[i] && new[i] == gold[i]).count() as f64 / n as f64;
        let old_acc = (0..n).filter(|&i| old[i] == gold[i]).count() as f64 / n as f64;
        prop_assert!((r.nfr + both - old_acc).abs() < 1e-12);
        prop_assert_eq!(evaluate(&old, &old, &gold).unwrap().nfr, 0.0);
    }

    #[test]
    fn select_alpha_is_monotone_in_retention(
        accs in prop::collection::vec(0.0f64..1.0, 3..22),
        old in 0.0f64..1.0,
        new in 0.0f64..1.0,
        r1 in 0.01f64..=1.0,
        r2 in 0.01f64..=1.0,
    ) {
        let curve = curve_from(&accs);
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        if new >= old {
            prop_assert!(select_alpha(&curve, old, new, hi) <= select_alpha(&curve, old, new, lo));
        }
    }

    #[test]
    fn ci_scales_linearly(values in prop::collection::vec(-10.0f64..10.0, 2..12), k in 0.1f64..10.0) {
        let a = ci95(&values).unwrap();
        let scaled: Vec<f64> = values.iter().map(|v| v * k).collect();
        let b = ci95(&scaled).unwrap();
        prop_assert!((b.mean - k * a.mean).abs() < 1e-9 * (1.0 + a.mean.abs() * k));
        prop_assert!((b.ci_halfwidth - k * a.ci_halfwidth).abs() < 1e-9 * (1.0 + a.ci_halfwidth * k));
    }
}
