use eslqr_core::averaging::{horizon_for_gap, truncation_gap};
use eslqr_core::dither::{canonical_spec, dither_matrix};
use eslqr_core::esc::{run, EscParams, FilterInit, Probes, RunStatus, SimulatedOracle};
use eslqr_core::linalg::max_abs;
use eslqr_core::lti_cost::{
    exact_gradient, infinite_cost, is_stabilizing, simulate_rollout, solve_discrete_lyapunov,
    truncated_cost, truncated_cost_trace, CostSpec, LtiPlant,
};
use eslqr_core::riccati::{random_stabilizing_gain, solve_dare};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn instance(n: usize, m: usize, seed: u64) -> (LtiPlant, CostSpec, DMatrix<f64>) {
    let plant = LtiPlant::random(n, m, seed).unwrap();
    let cost = CostSpec::identity(n, m);
    let sol = solve_dare(&plant, &cost).unwrap();
    let k = random_stabilizing_gain(&plant, &sol, seed ^ 0xabc, 0.3).unwrap();
    (plant, cost, k)
}

fn scalar() -> (LtiPlant, CostSpec) {
    (
        LtiPlant::new(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap(),
        CostSpec::identity(1, 1),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn truncated_cost_is_monotone_and_below_the_limit(
        n in 1usize..5, m in 1usize..4, seed in 0u64..1000, t in 1usize..40,
    ) {
        let (plant, cost, k) = instance(n, m, seed);
        let j = infinite_cost(&plant, &cost, &k).unwrap();
        let a = truncated_cost(&plant, &cost, &k, t).unwrap();
        let b = truncated_cost(&plant, &cost, &k, t + 1).unwrap();
        prop_assert!(b >= a);
        prop_assert!(a <= j * (1.0 + 1e-12));
        prop_assert!(truncation_gap(&plant, &cost, &k, t).unwrap() >= -1e-12 * j);
    }

    #[test]
    fn rollout_and_trace_paths_agree(
        n in 1usize..5, m in 1usize..4, seed in 0u64..1000, t in 1usize..30,
    ) {
        let (plant, cost, k) = instance(n, m, seed);
        let a = truncated_cost(&plant, &cost, &k, t).unwrap();
        let b = truncated_cost_trace(&plant, &cost, &k, t).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn lyapunov_solutions_have_small_residuals(n in 1usize..7, seed in 0u64..1000) {
        let (plant, cost, k) = instance(n, 1, seed);
        let mcl = &(plant.a() + plant.b() * &k);
        let c = cost.closed_loop_weight(&k);
        let x = solve_discrete_lyapunov(mcl, &c).unwrap();
        let resid = mcl.transpose() * &x * mcl - &x + &c;
        prop_assert!(max_abs(&resid) < 1e-10 * max_abs(&x).max(1.0));
        prop_assert!(max_abs(&(&x - x.transpose())) == 0.0);
    }

    #[test]
    fn optimum_is_never_beaten(n in 1usize..5, m in 1usize..4, seed in 0u64..1000) {
        let (plant, cost, k) = instance(n, m, seed);
        let sol = solve_dare(&plant, &cost).unwrap();
        let j = infinite_cost(&plant, &cost, &k).unwrap();
        prop_assert!(j > 0.0);
        prop_assert!(j >= sol.j_star - 1e-10 * sol.j_star);
    }

    #[test]
    fn rollouts_are_reproducible(n in 1usize..5, m in 1usize..4, seed in 0u64..1000, t in 1usize..30) {
        let (plant, cost, k) = instance(n, m, seed);
        let x0 = DVector::from_fn(n, |i, _| 1.0 - 0.3 * i as f64);
        let r = simulate_rollout(&plant, &cost, &k, &x0, t).unwrap();
        prop_assert_eq!(r.states.len(), t + 1);
        prop_assert_eq!(r.inputs.len(), t);
        prop_assert!(r.dynamics_defect(&plant) < 1e-12);
        prop_assert!(r.stage_costs.iter().all(|&c| c >= 0.0));
    }

    #[test]
    fn truncation_gap_vanishes_under_doubling(n in 1usize..5, m in 1usize..4, seed in 0u64..1000) {
        let (plant, cost, k) = instance(n, m, seed);
        let search = horizon_for_gap(&plant, &cost, &k, 1e-6, 1 << 24).unwrap();
        prop_assert!(search.gaps.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn gradient_vanishes_only_at_the_optimum(n in 1usize..5, m in 1usize..4, seed in 0u64..1000) {
        let (plant, cost, _) = instance(n, m, seed);
        let sol = solve_dare(&plant, &cost).unwrap();
        let (g, ws) = exact_gradient(&plant, &cost, &sol.k_star).unwrap();
        prop_assert!(max_abs(&g) < 1e-7);
        prop_assert!((0.5 * ws.p.trace() - sol.j_star).abs() < 1e-9 * sol.j_star);
    }
}

#[test]
fn scalar_loop_reaches_the_optimum() {
    let (plant, cost) = scalar();
    let sol = solve_dare(&plant, &cost).unwrap();
    let params = EscParams {
        gamma: 1e-3,
        delta: 1e-2,
        horizon: 50,
        iterations: 200_000,
        dither: canonical_spec(1, 1).unwrap(),
        f0: FilterInit::FirstProbe,
        k0: DMatrix::zeros(1, 1),
    };
    let mut oracle = SimulatedOracle::new(plant.clone(), cost.clone(), 50).unwrap();
    let log = run(&params, &mut oracle, Probes::none()).unwrap();
    assert_eq!(log.status, RunStatus::Completed);
    let err = (log.final_state.gain[(0, 0)] - sol.k_star[(0, 0)]).abs();
    assert!(err < 0.05, "|K - K*| = {err}");
    assert!(is_stabilizing(&plant, &log.final_state.gain).unwrap());
}

/// Runs only the filter recursion with the gain frozen at `k` and returns
/// the largest distance to the period-mean of the probe costs over the last
/// period of a `periods`-period run.
fn frozen_filter_error(gamma: f64, periods: u64) -> f64 {
    let (plant, cost) = scalar();
    let spec = canonical_spec(1, 1).unwrap();
    let (delta, horizon) = (0.1, 20);
    let k = DMatrix::from_element(1, 1, -0.1);
    let probe = |step: u64| {
        truncated_cost(
            &plant,
            &cost,
            &(&k + dither_matrix(&spec, step) * delta),
            horizon,
        )
        .unwrap()
    };
    let n = spec.k_prd();
    let mean = (1..=n).map(probe).sum::<f64>() / n as f64;
    let total = periods * n;
    let mut f = 0.0;
    let mut worst = 0.0_f64;
    for step in 0..total {
        f += gamma * (probe(step) - f);
        if step >= total - n {
            worst = worst.max((f - mean).abs());
        }
    }
    worst
}

#[test]
fn frozen_gain_filter_tracks_the_period_mean() {
    let errs: Vec<f64> = [0.04, 0.02, 0.01]
        .iter()
        .map(|&g| frozen_filter_error(g, (40.0 / g) as u64))
        .collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    assert!(errs[2] < errs[0] / 3.0, "{errs:?}");
}
