mod common;

use common::{brute_kendall, brute_pearson, brute_spearman};
use hgn_congestion::metrics::{kendall, mae, pearson, rmse, spearman};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() < 1e-12,
        (None, None) => true,
        _ => false,
    }
}

#[test]
fn fast_metrics_match_brute_force_with_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..20 {
        let n = rng.gen_range(2..200);
        // integer-valued draws produce plenty of ties
        let levels = if case % 2 == 0 { 5.0 } else { 1e9 };
        let a: Vec<f64> = (0..n).map(|_| (rng.gen_range(0.0f64..1.0) * levels).floor()).collect();
        let b: Vec<f64> = (0..n).map(|_| (rng.gen_range(0.0f64..1.0) * levels).floor()).collect();
        assert!(close(pearson(&a, &b).unwrap(), brute_pearson(&a, &b)));
        assert!(close(spearman(&a, &b).unwrap(), brute_spearman(&a, &b)));
        let k = kendall(&a, &b).unwrap();
        let (tau_b, tau_a) = brute_kendall(&a, &b);
        assert!(close(k.tau_b, tau_b), "{:?} vs {tau_b:?}", k.tau_b);
        if let Some(t) = k.tau_a {
            assert!((t - tau_a).abs() < 1e-12);
        }
    }
}

#[test]
fn rmse_dominates_mae_and_ranks_are_transform_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let n = rng.gen_range(1..50);
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        assert!(rmse(&a, &b).unwrap() >= mae(&a, &b).unwrap() - 1e-15);
        if n >= 2 {
            let t: Vec<f64> = a.iter().map(|v| v.exp() * 3.0 + 1.0).collect();
            assert!(close(spearman(&t, &b).unwrap(), spearman(&a, &b).unwrap()));
            assert!(close(kendall(&t, &b).unwrap().tau_b, kendall(&a, &b).unwrap().tau_b));
        }
    }
}
