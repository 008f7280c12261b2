use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use hdgc::granger::{gc_test, pairwise_gc, select_lag, GcConfig, LagCriterion};
use hdgc::MultiChannelSeries;

/// `y` driven by lagged `x` with coefficient `b`.
fn pair(seed: u64, t: usize, b: f64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    let x: Vec<f64> = (0..t).map(|_| draw()).collect();
    let mut y = vec![0.0; t];
    for i in 1..t {
        y[i] = 0.3 * y[i - 1] + b * x[i - 1] + draw();
    }
    (x, y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn restricted_rss_dominates(seed in any::<u64>(), p in 1usize..5, q in 1usize..5, b in -1.0..1.0f64) {
        let (x, y) = pair(seed, 120, b);
        let r = gc_test(&x, &y, p, q, 0.05).unwrap();
        prop_assert!(r.rss_restricted >= r.rss_unrestricted * (1.0 - 1e-12));
        prop_assert!(r.f_stat >= 0.0);
        prop_assert!((0.0..=1.0).contains(&r.p_value));
    }

    #[test]
    fn affine_maps_leave_f_unchanged(
        seed in any::<u64>(), p in 1usize..4, q in 1usize..4,
        a in prop_oneof![-50.0..-0.02f64, 0.02..50.0f64], shift_x in -100.0..100.0f64,
        c in prop_oneof![-50.0..-0.02f64, 0.02..50.0f64], shift_y in -100.0..100.0f64,
    ) {
        let (x, y) = pair(seed, 150, 0.4);
        let base = gc_test(&x, &y, p, q, 0.05).unwrap();
        let x2: Vec<f64> = x.iter().map(|v| a * v + shift_x).collect();
        let y2: Vec<f64> = y.iter().map(|v| c * v + shift_y).collect();
        let moved = gc_test(&x2, &y2, p, q, 0.05).unwrap();
        prop_assert!((base.f_stat - moved.f_stat).abs() <= 1e-9 * base.f_stat.max(1.0));
        prop_assert_eq!(base.reject, moved.reject);
    }

    #[test]
    fn single_lag_f_is_squared_t(seed in any::<u64>(), p in 1usize..4, b in -0.5..0.5f64) {
        let t_len = 200;
        let (x, y) = pair(seed, t_len, b);
        let r = gc_test(&x, &y, p, 1, 0.05).unwrap();
        let start = p;
        let rows = t_len - start;
        let k = p + 2;
        let design = DMatrix::from_fn(rows, k, |i, j| {
            let t = i + start;
            match j {
                0 => 1.0,
                j if j <= p => y[t - j],
                _ => x[t - 1],
            }
        });
        let resp = DVector::from_iterator(rows, (start..t_len).map(|t| y[t]));
        let xtx = design.transpose() * &design;
        let inv = xtx.try_inverse().unwrap();
        let beta = &inv * design.transpose() * &resp;
        let resid = &resp - &design * &beta;
        let sigma2 = resid.norm_squared() / (rows - k) as f64;
        let t_stat = beta[k - 1] / (sigma2 * inv[(k - 1, k - 1)]).sqrt();
        prop_assert!((r.f_stat - t_stat * t_stat).abs() <= 1e-9 * r.f_stat.max(1.0));
    }
}

#[test]
fn null_rejection_rate_within_binomial_band() {
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    let reps = 500;
    let mut rejects = 0;
    for _ in 0..reps {
        let x: Vec<f64> = (0..512).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = (0..512).map(|_| StandardNormal.sample(&mut rng)).collect();
        rejects += usize::from(gc_test(&x, &y, 2, 2, 0.05).unwrap().reject);
    }
    let rate = rejects as f64 / reps as f64;
    // 99% normal-approximation band around 0.05 for 500 draws.
    let half = 2.576 * (0.05f64 * 0.95 / reps as f64).sqrt();
    assert!((rate - 0.05).abs() <= half, "rate {rate}");
}

#[test]
fn bic_recovers_true_order() {
    let mut hits = 0;
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
        let t = 2048;
        let x: Vec<f64> = (0..t).map(|_| draw()).collect();
        let mut y = vec![0.0; t];
        for i in 2..t {
            y[i] = 0.5 * y[i - 1] - 0.3 * y[i - 2] + 0.6 * x[i - 1] + 0.4 * x[i - 2] + draw();
        }
        hits += usize::from(select_lag(&y, &x, 8, LagCriterion::Bic).unwrap() == (2, 2));
    }
    assert!(hits >= 40, "bic picked order 2 in {hits} of 50");
}

#[test]
fn pairwise_results_follow_label_order() {
    let (x, y) = pair(5, 300, 0.8);
    let (z, _) = pair(6, 300, 0.0);
    let s =
        MultiChannelSeries::from_columns(vec![x, y, z], vec!["x".into(), "y".into(), "z".into()])
            .unwrap();
    let cm = pairwise_gc(&s, &GcConfig::default()).unwrap();
    let order: Vec<(&str, &str)> = cm
        .entries
        .iter()
        .map(|e| (e.cause.as_str(), e.effect.as_str()))
        .collect();
    assert_eq!(
        order,
        [
            ("x", "y"),
            ("x", "z"),
            ("y", "x"),
            ("y", "z"),
            ("z", "x"),
            ("z", "y")
        ]
    );
    assert!(cm.get("x", "y").unwrap().reject);
}
