use floodloss::dist::ParametricDist;
use floodloss::metrics::{auc, discriminator_auc, dist_r2, domain, kl_divergence, ks_two_sample, kolmogorov_sf};
use floodloss::seed;
use proptest::prelude::*;
use rand::Rng;

fn any_dist() -> impl Strategy<Value = ParametricDist> {
    prop_oneof![
        (0.8f64..4.0, 0.5f64..4.0, 0.1f64..100.0).prop_map(|(c, k, s)| ParametricDist::burr(c, k, s).unwrap()),
        (0.6f64..4.0, 0.1f64..100.0).prop_map(|(a, s)| ParametricDist::weibull(a, s).unwrap()),
    ]
}

#[test]
fn exponential_pair_closed_form() {
    let p = ParametricDist::weibull(1.0, 1.0).unwrap();
    let q = ParametricDist::weibull(1.0, 2.0).unwrap();
    let kl = kl_divergence(&p, &q).unwrap();
    assert!((kl - (2f64.ln() - 0.5)).abs() < 1e-6, "{kl}");
    // General exponential pair: ln(a/b) + b/a − 1 for rates a, b. Pairs where
    // p is much wider than q are left out: the mass p keeps beyond the upper
    // domain bound (about 1e-6) carries a large log ratio there.
    for (s1, s2) in [(1.0f64, 3.0f64), (0.5, 5.0), (2.0, 2.5)] {
        let (a, b) = (1.0 / s1, 1.0 / s2);
        let want = (a / b).ln() + b / a - 1.0;
        let got = kl_divergence(&ParametricDist::weibull(1.0, s1).unwrap(), &ParametricDist::weibull(1.0, s2).unwrap()).unwrap();
        assert!((got - want).abs() < 1e-6, "{s1} {s2}: {got} vs {want}");
    }
}

/// Trapezoid rule on a geometric grid, an independent route to the same
/// curve-fit R² (reference mean taken as the function average over the domain).
fn r2_trapezoid(p: &ParametricDist, q: &ParametricDist) -> f64 {
    let (lo, hi) = domain(p, q);
    let n = 400_000;
    let ratio = (hi / lo).ln() / n as f64;
    let xs: Vec<f64> = (0..=n).map(|i| lo * (ratio * i as f64).exp()).collect();
    let trap = |f: &dyn Fn(f64) -> f64| xs.windows(2).map(|w| 0.5 * (f(w[0]) + f(w[1])) * (w[1] - w[0])).sum::<f64>();
    let mu = trap(&|x| p.pdf(x)) / (hi - lo);
    let sr = trap(&|x| (p.pdf(x) - q.pdf(x)).powi(2));
    let st = trap(&|x| (p.pdf(x) - mu).powi(2));
    1.0 - sr / st
}

#[test]
fn dist_r2_matches_trapezoid_and_goes_negative() {
    let p = ParametricDist::burr(2.0, 3.0, 1.0).unwrap();
    for q in [
        ParametricDist::burr(2.2, 2.5, 1.1).unwrap(),
        ParametricDist::weibull(1.5, 0.8).unwrap(),
        ParametricDist::weibull(6.0, 3.0).unwrap(),
    ] {
        let got = dist_r2(&p, &q).unwrap().unwrap();
        let want = r2_trapezoid(&p, &q);
        assert!((got - want).abs() < 1e-4 * want.abs().max(1.0), "{q}: {got} vs {want}");
    }
    assert!(dist_r2(&p, &ParametricDist::weibull(6.0, 3.0).unwrap()).unwrap().unwrap() < 0.0);
    assert!((dist_r2(&p, &p).unwrap().unwrap() - 1.0).abs() < 1e-8);
}

#[test]
fn discriminator_near_half_for_same_law() {
    let d = ParametricDist::burr(1.5, 2.0, 10.0).unwrap();
    let mut rng = seed::rng(31);
    let a = d.sample(&mut rng, 5_000);
    let b = d.sample(&mut rng, 5_000);
    let v = discriminator_auc(&a, &b, 1).unwrap();
    assert!((0.45..=0.55).contains(&v), "{v}");
}

#[test]
fn kolmogorov_tail_values() {
    // Textbook critical values of the limiting distribution.
    for (t, p) in [(1.2238, 0.10), (1.3581, 0.05), (1.6276, 0.01)] {
        assert!((kolmogorov_sf(t) - p).abs() < 2e-4, "{t}: {}", kolmogorov_sf(t));
    }
    assert_eq!(kolmogorov_sf(0.0), 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kl_nonnegative_and_zero_on_self(p in any_dist(), q in any_dist()) {
        let v = kl_divergence(&p, &q);
        if let Ok(v) = v {
            prop_assert!(v >= 0.0);
        }
        prop_assert!(kl_divergence(&p, &p).unwrap().abs() <= 1e-6);
        prop_assert!((dist_r2(&p, &p).unwrap().unwrap() - 1.0).abs() <= 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ks_two_sample_symmetric(seed_v in 0u64..100_000, n in 1usize..200, m in 1usize..200, ties in any::<bool>()) {
        let mut rng = seed::rng(seed_v);
        let mut draw = |k: usize| -> Vec<f64> {
            (0..k).map(|_| if ties { rng.random_range(0..10) as f64 } else { rng.random::<f64>() }).collect()
        };
        let a = draw(n);
        let b = draw(m);
        let (d1, p1) = ks_two_sample(&a, &b).unwrap();
        let (d2, p2) = ks_two_sample(&b, &a).unwrap();
        prop_assert_eq!(d1, d2);
        prop_assert_eq!(p1, p2);
        prop_assert!((0.0..=1.0).contains(&d1) && (0.0..=1.0).contains(&p1));
    }

    #[test]
    fn auc_invariant_under_increasing_map(seed_v in 0u64..100_000, n in 2usize..150) {
        let mut rng = seed::rng(seed_v);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
        labels[0] = true;
        labels[1] = false;
        let mapped: Vec<f64> = scores.iter().map(|s| (1.7 * s).exp() + s.powi(3)).collect();
        prop_assert_eq!(auc(&scores, &labels).unwrap(), auc(&mapped, &labels).unwrap());
        let rounded: Vec<f64> = scores.iter().map(|s| s.round()).collect();
        let rounded_mapped: Vec<f64> = rounded.iter().map(|s| (1.7 * s).exp() + s.powi(3)).collect();
        prop_assert_eq!(auc(&rounded, &labels).unwrap(), auc(&rounded_mapped, &labels).unwrap());
    }
}
