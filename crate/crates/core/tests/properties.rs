use lsilab::covers::{
    bound_rhs, c_to_r, check_cover, optimal_cover, r_to_c, random_feasible_c, random_feasible_cover, subset,
    CoverCoefficients, SubsetValues,
};
use lsilab::estimator::{estimate_cls, poincare, EstimatorOptions};
use lsilab::functionals::{entropy_functional, lsi_ratio, wasserstein2, GridFunction};
use lsilab::measures::{clt_measure, convolve, gaussian_mixture, self_convolve, GridMeasure, MixtureComponent};
use lsilab::shearer::{ent_decomposition_residual, kl_product, marginal, random_joint, random_product, shearer_margin};
use lsilab::{Extended, Result};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn measure() -> impl Strategy<Value = GridMeasure> {
    (
        -3.0..3.0f64,
        prop::sample::select(vec![0.05, 0.1, 0.25, 0.5]),
        prop::collection::vec(prop_oneof![4 => 0.01..1.0f64, 1 => Just(0.0)], 2..80),
    )
        .prop_filter_map("needs mass", |(origin, h, mut w)| {
            w[0] += 0.1;
            GridMeasure::new(origin, h, w).ok()
        })
}

/// Two measures on the same spacing.
fn measure_pair() -> impl Strategy<Value = (GridMeasure, GridMeasure)> {
    (
        prop::sample::select(vec![0.05, 0.1, 0.25]),
        -3.0..3.0f64,
        -3.0..3.0f64,
        prop::collection::vec(0.01..1.0f64, 1..700),
        prop::collection::vec(0.01..1.0f64, 1..700),
    )
        .prop_map(|(h, a, b, wa, wb)| {
            let snap = |x: f64| (x / h).round() * h;
            (GridMeasure::new(snap(a), h, wa).unwrap(), GridMeasure::new(snap(b), h, wb).unwrap())
        })
}

fn smooth_measure() -> impl Strategy<Value = GridMeasure> {
    (
        prop::collection::vec((0.2..1.0f64, -2.0..2.0f64, 0.3..1.5f64), 1..4),
        prop::sample::select(vec![201usize, 301, 401]),
    )
        .prop_map(|(parts, m)| {
            let components: Vec<MixtureComponent> =
                parts.into_iter().map(|(weight, mean, variance)| MixtureComponent { weight, mean, variance }).collect();
            gaussian_mixture(&components, -9.0, 9.0, m).unwrap()
        })
}

fn grid_fn(len: usize, seed: u64, lo: f64, hi: f64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GridFunction::new((0..len).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn quick() -> EstimatorOptions {
    EstimatorOptions { random_restarts: 1, ..EstimatorOptions::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn operations_conserve_mass((mu, nu) in measure_pair(), alpha in prop_oneof![-3.0..-0.1f64, 0.1..3.0f64], beta in -5.0..5.0f64) {
        prop_assert!((mu.total_mass() - 1.0).abs() < 1e-12);
        let conv = convolve(&mu, &nu).unwrap();
        prop_assert!((conv.total_mass() - 1.0).abs() < 1e-12);
        prop_assert!((mu.affine(alpha, beta).unwrap().total_mass() - 1.0).abs() < 1e-12);
        prop_assert!((mu.prune_tails(1e-12).total_mass() - 1.0).abs() < 1e-12);
        if let Ok(s) = mu.standardize() {
            prop_assert!((s.total_mass() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn affine_moments_are_exact(mu in measure(), alpha in prop_oneof![-3.0..-0.1f64, 0.1..3.0f64], beta in -5.0..5.0f64) {
        let m = mu.moments();
        let a = mu.affine(alpha, beta).unwrap().moments();
        prop_assert!((a.mean - (alpha * m.mean + beta)).abs() < 1e-10 * (1.0 + a.mean.abs()));
        prop_assert!((a.variance - alpha * alpha * m.variance).abs() < 1e-10 * (1.0 + a.variance));
    }

    #[test]
    fn convolution_adds_moments((mu, nu) in measure_pair()) {
        let c = convolve(&mu, &nu).unwrap().moments();
        let (a, b) = (mu.moments(), nu.moments());
        prop_assert!((c.mean - a.mean - b.mean).abs() < 1e-8);
        prop_assert!((c.variance - a.variance - b.variance).abs() < 1e-8);
    }

    #[test]
    fn convolution_commutes((mu, nu) in measure_pair()) {
        let ab = convolve(&mu, &nu).unwrap();
        let ba = convolve(&nu, &mu).unwrap();
        prop_assert_eq!(ab.len(), ba.len());
        prop_assert!((ab.origin() - ba.origin()).abs() < 1e-12);
        for (x, y) in ab.weights().iter().zip(ba.weights()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_is_nonnegative_and_homogeneous(mu in measure(), seed in any::<u64>(), lambda in 0.01..50.0f64) {
        let g = grid_fn(mu.len(), seed, 0.0, 4.0);
        let e = entropy_functional(&mu, &g).unwrap();
        prop_assert!(e >= 0.0);
        let scaled = g.map(|v| lambda * v).unwrap();
        let es = entropy_functional(&mu, &scaled).unwrap();
        prop_assert!((es - lambda * e).abs() < 1e-10 * (1.0 + lambda * e));
        // The uncentered part picks up the lambda log lambda term.
        let xlogx = |f: &GridFunction| -> f64 {
            mu.weights().iter().zip(f.values()).map(|(w, &v)| if v > 0.0 { w * v * v.ln() } else { 0.0 }).sum()
        };
        let mass: f64 = mu.weights().iter().zip(g.values()).map(|(w, v)| w * v).sum();
        let identity = lambda * xlogx(&g) + lambda * lambda.ln() * mass;
        prop_assert!((xlogx(&scaled) - identity).abs() < 1e-9 * (1.0 + identity.abs()));
        let c = GridFunction::constant(mu.len(), 2.5);
        prop_assert!(entropy_functional(&mu, &c).unwrap().abs() < 1e-12);
    }

    #[test]
    fn ratio_ignores_constant_shifts(mu in measure(), seed in any::<u64>(), shift in -5.0..5.0f64) {
        let u = grid_fn(mu.len(), seed, -1.0, 1.0);
        let Ok(r) = lsi_ratio(&mu, &u) else { return Ok(()) };
        for s in [shift, 0.5f64.ln(), 2f64.ln()] {
            let shifted = lsi_ratio(&mu, &u.map(|v| v + s).unwrap()).unwrap();
            prop_assert!((shifted - r).abs() < 1e-9 * r.max(1.0), "{} vs {}", shifted, r);
        }
    }

    #[test]
    fn w2_symmetric_and_triangular(a in measure(), b in measure(), c in measure()) {
        let ab = wasserstein2(&a, &b);
        prop_assert!((ab - wasserstein2(&b, &a)).abs() < 1e-9);
        prop_assert!(ab <= wasserstein2(&a, &c) + wasserstein2(&c, &b) + 1e-9);
        prop_assert!(wasserstein2(&a, &a) < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn clt_equals_standardized_convolution(sm in smooth_measure(), n in 2usize..5) {
        let mu = sm.standardize().unwrap();
        let clt = clt_measure(&mu, n).unwrap();
        let mut full = mu.clone();
        for _ in 1..n {
            full = convolve(&full, &mu).unwrap();
        }
        let full = full.standardize().unwrap();
        // Pruning only trims the ends; align the two lattices.
        let offset = ((clt.origin() - full.origin()) / clt.spacing()).round() as usize;
        prop_assert!((clt.spacing() - full.spacing()).abs() < 1e-12);
        for (i, w) in clt.weights().iter().enumerate() {
            prop_assert!((w - full.weights()[i + offset]).abs() < 1e-10);
        }
        let _ = self_convolve(&mu, n).unwrap();
    }

    #[test]
    fn estimator_is_a_certified_lower_bound(mu in smooth_measure()) {
        let opts = quick();
        let est = estimate_cls(&mu, &opts).unwrap();
        let value = est.value.finite().unwrap();
        let cert = est.certificate.as_ref().unwrap();
        prop_assert!((lsi_ratio(&mu, cert).unwrap() - value).abs() < 1e-12 * value);
        prop_assert!(est.ratio_history.windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0].abs()));
        let m = mu.moments();
        for a in &opts.probe_slopes {
            let probe = GridFunction::from_fn(&mu, |x| a * (x - m.mean) / m.variance.sqrt()).unwrap();
            prop_assert!(value >= lsi_ratio(&mu, &probe).unwrap() * (1.0 - 1e-12));
        }
        let cp = poincare(&mu).unwrap();
        prop_assert!(value >= 0.95 * cp, "{} vs {}", value, cp);
        prop_assert_eq!(estimate_cls(&mu, &opts).unwrap(), est);
    }

    #[test]
    fn estimator_scales_quadratically(mu in smooth_measure(), alpha in prop_oneof![-2.0..-0.5f64, 0.5..2.0f64], beta in -1.0..1.0f64) {
        let opts = quick();
        let base = estimate_cls(&mu, &opts).unwrap().value.finite().unwrap();
        let moved = estimate_cls(&mu.affine(alpha, beta).unwrap(), &opts).unwrap().value.finite().unwrap();
        prop_assert!((moved - alpha * alpha * base).abs() <= 0.01 * alpha * alpha * base);
    }

    #[test]
    fn isotropic_floor(mu in smooth_measure()) {
        let s = mu.standardize().unwrap();
        let v = estimate_cls(&s, &quick()).unwrap().value.finite().unwrap();
        prop_assert!(v >= 0.98, "{}", v);
    }
}

fn random_cover(seed: u64, n: usize) -> CoverCoefficients {
    random_feasible_cover(n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn transform_round_trip_and_duality(seed in any::<u64>(), n in 1usize..8) {
        let r = random_cover(seed, n);
        prop_assert!(check_cover(&r).feasible);
        prop_assume!(r.total() > 1.0 + 1e-9);
        let c = r_to_c(&r).unwrap();
        prop_assert!(c.is_feasible_c() && c.total() > 1.0);
        let back = c_to_r(&c).unwrap();
        for m in 0..(1u32 << n) {
            prop_assert!((back.get(m) - r.get(m)).abs() <= 1e-12 * r.get(m).max(1.0));
        }
    }

    #[test]
    fn gaussian_values_satisfy_every_cover(seed in any::<u64>(), n in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let variances: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..10.0)).collect();
        let r = random_feasible_cover(n, &mut rng).unwrap();
        let rhs = bound_rhs(&r, &SubsetValues::additive(&variances).unwrap()).unwrap().finite().unwrap();
        let lhs: f64 = variances.iter().sum();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12));
    }

    #[test]
    fn optimum_is_below_every_cover(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..(1usize << n)).map(|_| rng.random_range(0.0..10.0)).collect();
        let v = SubsetValues::from_fn(n, |m| Extended::Finite(raw[m as usize])).unwrap();
        let (r_opt, value) = optimal_cover(&v).unwrap();
        prop_assert!(check_cover(&r_opt).feasible);
        let full = v.get((1 << n) - 1).unwrap().finite().unwrap();
        prop_assert!(value <= full + 1e-9);
        for _ in 0..5 {
            let r = random_feasible_cover(n, &mut rng).unwrap();
            prop_assert!(value <= bound_rhs(&r, &v).unwrap().finite().unwrap() + 1e-9);
        }
    }

    #[test]
    fn shearer_margin_is_nonnegative_and_monotone(seed in any::<u64>(), n in 1usize..4, scale in 0.0..1.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape: Vec<usize> = (0..n).map(|_| rng.random_range(1..=4)).collect();
        let p = random_joint(&shape, &mut rng).unwrap();
        let q = random_product(&shape, &mut rng).unwrap();
        let c = random_feasible_c(n, &mut rng).unwrap();
        let margin = shearer_margin(&p, &q, &c).unwrap();
        prop_assert!(margin >= -1e-9);
        // Shrinking one coefficient can only help.
        let (mask, value) = c.iter().next().unwrap();
        let mut smaller = c.clone();
        smaller.set(mask, value * scale).unwrap();
        prop_assert!(shearer_margin(&p, &q, &smaller).unwrap() >= margin - 1e-12);
    }

    #[test]
    fn two_marginals_are_superadditive(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = [rng.random_range(1..=4), rng.random_range(1..=4)];
        let p = random_joint(&shape, &mut rng).unwrap();
        let q = random_product(&shape, &mut rng).unwrap();
        let d = |mask| -> Result<f64> {
            Ok(kl_product(&marginal(&p, mask)?, &q.restrict(mask)?)?.finite().unwrap())
        };
        prop_assert!(d(subset(&[1])).unwrap() + d(subset(&[2])).unwrap() <= d(3).unwrap() + 1e-12);
    }

    #[test]
    fn entropy_decomposition_holds(seed in any::<u64>(), n in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape: Vec<usize> = (0..n).map(|_| rng.random_range(1..=4)).collect();
        let p = random_joint(&shape, &mut rng).unwrap();
        let x_mask = rng.random_range(1..(1u32 << n));
        let nx: usize = (0..n).filter(|b| x_mask & (1 << b) != 0).map(|b| shape[b]).product();
        let g: Vec<f64> = (0..nx).map(|_| rng.random_range(0.0..5.0)).collect();
        prop_assert!(ent_decomposition_residual(&p, x_mask, &g).unwrap() <= 1e-10);
    }

    #[test]
    fn transformed_covers_are_admissible_for_shearer(seed in any::<u64>(), n in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = random_feasible_cover(n, &mut rng).unwrap();
        prop_assume!(r.total() > 1.0 + 1e-9);
        let c = r_to_c(&r).unwrap();
        let shape: Vec<usize> = (0..n).map(|_| rng.random_range(1..=3)).collect();
        let p = random_joint(&shape, &mut rng).unwrap();
        let q = random_product(&shape, &mut rng).unwrap();
        prop_assert!(shearer_margin(&p, &q, &c).unwrap() >= -1e-9);
    }
}
