use logbranch::dual::{
    asg_trace, coupled_divergence, moran_simulate, pi_star, sde_simulate, sde_simulate_conditioned, DualParams,
};
use logbranch::rng;
use logbranch::stats::{ks_distance_to_cdf, RunningStats};
use proptest::prelude::*;
use rand::seq::index;

/// Classical fourth-order Runge–Kutta for `p' = -μp + s p (1 - p)`.
fn logistic_rk4(s: f64, mu: f64, p0: f64, t: f64, h: f64) -> Vec<f64> {
    let f = |p: f64| -mu * p + s * p * (1.0 - p);
    let steps = (t / h).round() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let mut p = p0;
    out.push(p);
    for _ in 0..steps {
        let k1 = f(p);
        let k2 = f(p + 0.5 * h * k1);
        let k3 = f(p + 0.5 * h * k2);
        let k4 = f(p + h * k3);
        p += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.push(p);
    }
    out
}

#[test]
fn noiseless_path_follows_the_logistic_ode() {
    let dp = DualParams::new(1.2, 0.0, 0.3).unwrap();
    let dt = 1e-3;
    let path = sde_simulate(dp, 0.2, 5.0, dt, 3).unwrap();
    let exact = logistic_rk4(1.2, 0.3, 0.2, 5.0, dt);
    assert_eq!(path.values.len(), exact.len());
    let err = path.values.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 10.0 * dt, "max deviation {err}");
}

#[test]
fn pure_mutation_decays_exponentially() {
    let (mu, t) = (0.5, 2.0);
    let dp = DualParams::new(0.0, 0.0, mu).unwrap();
    let stats: RunningStats = (0..2000)
        .map(|r| moran_simulate(20, dp, t, rng::derive_seed(21, r)).unwrap().frequency())
        .collect();
    let e = stats.estimate();
    let target = (-mu * t).exp();
    assert!((e.mean - target).abs() < 3.0 * e.se, "{e:?} vs {target}");
}

/// `P(κ_t > 0)` from the ancestral graph and `E[1 - C(N - X_t, k)/C(N, k)]`
/// from the forward counts, each from its own set of realizations.
#[test]
fn duality_holds_in_law_across_independent_runs() {
    let dp = DualParams::new(0.5, 1.0, 0.3).unwrap();
    let (n, t, k) = (30usize, 3.0, 3usize);
    let reps = 6000u64;
    let backward: RunningStats = (0..reps)
        .map(|r| {
            let real = moran_simulate(n, dp, t, rng::derive_seed(31, r)).unwrap();
            let sample = index::sample(&mut rng::stream(32, r), n, k).into_vec();
            asg_trace(&real, &sample).unwrap().survived as u8 as f64
        })
        .collect();
    let forward: RunningStats = (0..reps)
        .map(|r| {
            let real = moran_simulate(n, dp, t, rng::derive_seed(33, r)).unwrap();
            let x = real.final_types.iter().filter(|&&a| a).count();
            // probability that k draws without replacement all miss type a
            let miss: f64 = (0..k).map(|i| (n - x).saturating_sub(i) as f64 / (n - i) as f64).product();
            1.0 - miss
        })
        .collect();
    let (b, f) = (backward.estimate(), forward.estimate());
    assert!(b.z_distance(&f) < 3.0, "backward {b:?} forward {f:?}");
}

#[test]
fn coupling_divergence_shrinks_with_population_size() {
    let dp = DualParams::new(0.5, 1.0, 0.3).unwrap();
    let reps = 4000u64;
    let fractions: Vec<f64> = [50usize, 200, 800]
        .iter()
        .map(|&n| {
            let mut rng = rng::stream(41, n as u64);
            (0..reps).filter(|_| coupled_divergence(dp, n, 5, 5.0, &mut rng).is_some()).count() as f64 / reps as f64
        })
        .collect();
    assert!(fractions[0] > 0.0);
    for w in fractions.windows(2) {
        let se = (w[0] * (1.0 - w[0]) / reps as f64 + w[1] * (1.0 - w[1]) / reps as f64).sqrt();
        assert!(w[0] - w[1] > 2.0 * se, "{fractions:?}");
    }
}

/// Long conditioned runs, sampled once per independent path, against the
/// stationary CDF. The drift `β + σ² s/S` has stationary density `m·S²`,
/// which is `π*` only on the `μ < ν` branch.
#[test]
fn conditioned_endpoints_follow_pi_star() {
    let dp = DualParams::new(0.5, 1.0, 0.3).unwrap();
    let density = pi_star(dp, 4096).unwrap();
    let n = 400;
    let ends: Vec<f64> = (0..n)
        .map(|r| sde_simulate_conditioned(dp, 0.5, 20.0, 2e-3, rng::derive_seed(51, r)).unwrap().last())
        .collect();
    let ks = ks_distance_to_cdf(&ends, |x| density.cdf(x));
    // 1% critical value of the one-sample KS statistic
    assert!(ks < 1.63 / (n as f64).sqrt(), "KS {ks}");
}

fn dual_params() -> impl Strategy<Value = DualParams> {
    (0.05f64..2.0, 0.05f64..2.0, 0.05f64..2.0).prop_map(|(s, nu, mu)| DualParams::new(s, nu, mu).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn duality_is_exact_per_realization(dp in dual_params(), n in 2usize..25, seed in any::<u64>()) {
        let real = moran_simulate(n, dp, 2.0, seed).unwrap();
        let mut rng = rng::stream(seed, 1);
        for size in 1..=n.min(5) {
            let sample = index::sample(&mut rng, n, size).into_vec();
            let forward = sample.iter().any(|&i| real.final_types[i]);
            prop_assert_eq!(asg_trace(&real, &sample).unwrap().survived, forward);
        }
    }

    #[test]
    fn normalizer_is_stable_under_grid_doubling(dp in dual_params()) {
        let coarse = pi_star(dp, 2048);
        let fine = pi_star(dp, 4096);
        prop_assume!(coarse.is_ok() && fine.is_ok());
        let (coarse, fine) = (coarse.unwrap(), fine.unwrap());
        prop_assert!((fine.mass() - 1.0).abs() < 1e-8);
        // relative change of the normalizer
        let change = (fine.ln_normalizer - coarse.ln_normalizer).exp_m1().abs();
        prop_assert!(change < 1e-6, "relative change {}", change);
    }

    #[test]
    fn conditioned_paths_never_touch_zero(dp in dual_params(), p0 in 0.001f64..1.0, seed in any::<u64>()) {
        let path = sde_simulate_conditioned(dp, p0, 2.0, 1e-3, seed).unwrap();
        prop_assert!(path.values.iter().all(|&x| x > 0.0 && x <= 1.0));
    }
}
