//! Ground-truth optimum `(P*, K*)` from the discrete algebraic Riccati
//! equation. Used for verification and error reporting only; the
//! extremum-seeking loop never sees it.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{max_abs, symmetrize};
use crate::lti_cost::{is_stabilizing, CostSpec, LtiPlant};

pub const DARE_TOL: f64 = 1e-12;
pub const DARE_MAX_ITERATIONS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DareSolution {
    pub p_star: DMatrix<f64>,
    pub k_star: DMatrix<f64>,
    /// `1/2 Tr(P*)`, the optimal value of the trace-convention cost.
    pub j_star: f64,
    /// Max-entry DARE residual of `p_star`.
    pub residual: f64,
    pub iterations: usize,
}

/// `Q + A'PA - A'PB (R + B'PB)^{-1} B'PA`.
fn riccati_map(plant: &LtiPlant, cost: &CostSpec, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (a, b) = (plant.a(), plant.b());
    let pa = p * a;
    let pb = p * b;
    let s = cost.r() + b.transpose() * &pb;
    let bt_pa = b.transpose() * &pa;
    let solved = s
        .cholesky()
        .ok_or(Error::NonFinite(
            "riccati iteration (R + B'PB not positive definite)",
        ))?
        .solve(&bt_pa);
    Ok(symmetrize(
        &(cost.q() + a.transpose() * &pa - (a.transpose() * &pb) * solved),
    ))
}

/// `-(R + B'PB)^{-1} B'PA`.
pub fn optimal_gain_from(
    plant: &LtiPlant,
    cost: &CostSpec,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let (a, b) = (plant.a(), plant.b());
    let s = cost.r() + b.transpose() * p * b;
    let chol = s.cholesky().ok_or(Error::NonFinite(
        "optimal gain (R + B'PB not positive definite)",
    ))?;
    Ok(-chol.solve(&(b.transpose() * p * a)))
}

/// Max-entry residual of the DARE at `p`.
pub fn dare_residual(plant: &LtiPlant, cost: &CostSpec, p: &DMatrix<f64>) -> Result<f64> {
    Ok(max_abs(&(riccati_map(plant, cost, p)? - p)))
}

/// Value iteration `P <- Q + A'PA - A'PB (R + B'PB)^{-1} B'PA` from `P = Q`
/// until the max-entry change drops below `DARE_TOL * max(1, |P|_max)`.
pub fn solve_dare(plant: &LtiPlant, cost: &CostSpec) -> Result<DareSolution> {
    solve_dare_with(plant, cost, DARE_TOL, DARE_MAX_ITERATIONS)
}

pub fn solve_dare_with(
    plant: &LtiPlant,
    cost: &CostSpec,
    tol: f64,
    max_iterations: usize,
) -> Result<DareSolution> {
    cost.check_plant(plant)?;
    plant.ensure_controllable()?;

    let mut p = cost.q().clone();
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iterations {
        let next = riccati_map(plant, cost, &p)?;
        iterations += 1;
        change = max_abs(&(&next - &p));
        if !change.is_finite() {
            return Err(Error::NonFinite("riccati iteration"));
        }
        p = next;
        if change < tol * max_abs(&p).max(1.0) {
            break;
        }
    }
    if change >= tol * max_abs(&p).max(1.0) {
        return Err(Error::DareNotConverged { iterations, change });
    }

    let k_star = optimal_gain_from(plant, cost, &p)?;
    if !is_stabilizing(plant, &k_star)? {
        return Err(Error::DareNotConverged { iterations, change });
    }
    let residual = dare_residual(plant, cost, &p)?;
    Ok(DareSolution {
        j_star: 0.5 * p.trace(),
        p_star: p,
        k_star,
        residual,
        iterations,
    })
}

/// `K* + Delta` with a seeded Gaussian direction rescaled to Frobenius norm
/// `radius`, halving the radius until `A + B(K* + Delta)` is Schur.
pub fn random_stabilizing_gain(
    plant: &LtiPlant,
    solution: &DareSolution,
    seed: u64,
    radius: f64,
) -> Result<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = DMatrix::from_fn(plant.m(), plant.n(), |_, _| {
        <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
    });
    let dir = &dir / dir.norm().max(f64::MIN_POSITIVE);
    let mut r = radius;
    for _ in 0..60 {
        let gain = &solution.k_star + &dir * r;
        if is_stabilizing(plant, &gain)? {
            return Ok(gain);
        }
        r *= 0.5;
    }
    Ok(solution.k_star.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti_cost::{exact_gradient, infinite_cost};
    use approx::assert_relative_eq;

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

    #[test]
    fn scalar_dare_matches_quadratic_formula() {
        let (plant, cost) = scalar();
        let sol = solve_dare(&plant, &cost).unwrap();
        // P^2 - 0.25 P - 1 = 0
        let p = (0.25 + 4.0625_f64.sqrt()) / 2.0;
        assert_relative_eq!(sol.p_star[(0, 0)], p, epsilon = 1e-12);
        assert_relative_eq!(sol.k_star[(0, 0)], -0.5 * p / (1.0 + p), epsilon = 1e-12);
        assert_relative_eq!(sol.j_star, 0.5 * p, epsilon = 1e-12);
        assert!((sol.k_star[(0, 0)] + 0.2655644).abs() < 1e-7);
        assert!((sol.j_star - 0.5663911).abs() < 1e-7);
        assert!(sol.residual < 1e-12);
    }

    #[test]
    fn open_loop_optimal_when_a_is_zero() {
        let plant = LtiPlant::new(DMatrix::zeros(3, 3), DMatrix::identity(3, 3)).unwrap();
        let sol = solve_dare(&plant, &CostSpec::identity(3, 3)).unwrap();
        assert!(max_abs(&(&sol.p_star - DMatrix::<f64>::identity(3, 3))) < 1e-15);
        assert!(max_abs(&sol.k_star) < 1e-15);
    }

    #[test]
    fn uncontrollable_plant_is_rejected() {
        let plant = LtiPlant::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 1)).unwrap();
        assert!(matches!(
            solve_dare(&plant, &CostSpec::identity(2, 1)),
            Err(Error::Uncontrollable { .. })
        ));
    }

    #[test]
    fn iteration_cap_is_reported() {
        let plant = LtiPlant::random(3, 1, 11).unwrap();
        assert!(matches!(
            solve_dare_with(&plant, &CostSpec::identity(3, 1), 1e-12, 2),
            Err(Error::DareNotConverged { iterations: 2, .. })
        ));
    }

    #[test]
    fn optimum_is_stationary_and_locally_minimal() {
        for seed in 0..5 {
            let plant = LtiPlant::random(3, 2, seed).unwrap();
            let cost = CostSpec::identity(3, 2);
            let sol = solve_dare(&plant, &cost).unwrap();
            let (g, _) = exact_gradient(&plant, &cost, &sol.k_star).unwrap();
            assert!(max_abs(&g) < 1e-7, "seed {seed}: |G(K*)| = {}", max_abs(&g));
            let j_star = infinite_cost(&plant, &cost, &sol.k_star).unwrap();
            assert_relative_eq!(j_star, sol.j_star, max_relative = 1e-10);
            for s in 0..10 {
                let k = random_stabilizing_gain(&plant, &sol, 100 + s, 1e-2).unwrap();
                assert!(infinite_cost(&plant, &cost, &k).unwrap() >= j_star - 1e-12);
            }
        }
    }
}
