//! Property tests for algebraic invariants that hold for arbitrary inputs.

use proptest::prelude::*;
use tabcause_core::autodiff::softmax_t;
use tabcause_core::eval;
use tabcause_core::infer;
use tabcause_core::model::QuantizedPpd;
use tabcause_core::prior::augment_heterogeneity;
use tabcause_core::stats;
use tabcause_core::train::{entropy, histogram_loss};

fn finite_vec(len: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, len..=len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn heterogeneity_preserves_ate_and_scales_variance(
        n in 2usize..24,
        gamma in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let mut rng = tabcause_core::rng::stream(seed);
        use rand::Rng;
        let raw0: Vec<f64> = (0..n).map(|_| rng.gen_range(-20.0..20.0)).collect();
        let raw1: Vec<f64> = (0..n).map(|_| rng.gen_range(-20.0..20.0)).collect();
        let alpha: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let tau_raw: Vec<f64> = raw1.iter().zip(&raw0).map(|(&a, &b)| a - b).collect();
        let (mu0, mu1) = augment_heterogeneity(&raw0, &raw1, gamma, &alpha).unwrap();
        let tau: Vec<f64> = mu1.iter().zip(&mu0).map(|(&a, &b)| a - b).collect();
        prop_assert!((stats::mean(&tau) - stats::mean(&tau_raw)).abs() < 1e-9);
        prop_assert!(
            (stats::variance(&tau) - gamma * gamma * stats::variance(&tau_raw)).abs() < 1e-9
        );
    }

    #[test]
    fn softmax_is_a_distribution_and_shift_invariant(
        logits in finite_vec(6, -40.0, 40.0),
        temp in 0.05f64..10.0,
        shift in -100.0f64..100.0,
    ) {
        let p = softmax_t(&logits, temp).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
        let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
        let q = softmax_t(&shifted, temp).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn histogram_loss_dominates_entropy(
        raw_target in finite_vec(12, 1e-6, 1.0),
        logits in finite_vec(12, -6.0, 6.0),
    ) {
        let sum: f64 = raw_target.iter().sum();
        let target: Vec<f64> = raw_target.iter().map(|v| v / sum).collect();
        let q = softmax_t(&logits, 1.0).unwrap();
        let loss = histogram_loss(&target, &q).unwrap();
        prop_assert!(loss >= entropy(&target) - 1e-12);
    }

    #[test]
    fn ppd_mean_stays_inside_support(
        raw_probs in finite_vec(16, 0.0, 1.0),
        lo in -50.0f64..0.0,
        width in 0.1f64..100.0,
    ) {
        let sum: f64 = raw_probs.iter().sum();
        prop_assume!(sum > 0.0);
        let probs: Vec<f64> = raw_probs.iter().map(|v| v / sum).collect();
        let hi = lo + width;
        let edges: Vec<f64> = (0..=16).map(|j| lo + width * j as f64 / 16.0).collect();
        let ppd = QuantizedPpd { support: (lo, hi), edges, probs };
        let mean = infer::ppd_mean(&ppd);
        prop_assert!(mean >= lo && mean <= hi);
    }

    #[test]
    fn qini_depends_only_on_ranking(
        seed in any::<u64>(),
        scale in 0.1f64..5.0,
        offset in -10.0f64..10.0,
    ) {
        let mut rng = tabcause_core::rng::stream(seed);
        use rand::Rng;
        let n = 60;
        let t: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
        let tau: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let grid: Vec<f64> = (1..=20).map(|i| i as f64 / 20.0).collect();
        let transformed: Vec<f64> = tau.iter().map(|&v| scale * v + offset).collect();
        let a = eval::qini_curve(&y, &t, &tau, &grid).unwrap();
        let b = eval::qini_curve(&y, &t, &transformed, &grid).unwrap();
        prop_assert_eq!(a.q_values, b.q_values);
    }

    #[test]
    fn pehe_nonnegative_and_permutation_invariant(
        seed in any::<u64>(),
        n in 1usize..40,
    ) {
        let mut rng = tabcause_core::rng::stream(seed);
        use rand::Rng;
        let tau_hat: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let tau: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let base = eval::pehe(&tau_hat, &tau).unwrap();
        prop_assert!(base >= 0.0);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        let th: Vec<f64> = idx.iter().map(|&i| tau_hat[i]).collect();
        let tt: Vec<f64> = idx.iter().map(|&i| tau[i]).collect();
        prop_assert!((eval::pehe(&th, &tt).unwrap() - base).abs() < 1e-9);
    }
}
