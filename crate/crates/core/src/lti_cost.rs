//! Plant and cost data model, closed-loop rollouts, the truncated and
//! infinite-horizon LQR costs, and the exact policy gradient.
//!
//! Costs follow the trace convention
//!
//! ```text
//! J(K)   = 1/2 Tr sum_{t>=0}  (A+BK)^t' (Q + K'RK) (A+BK)^t
//! J_T(K) = 1/2 Tr sum_{t<T}   (A+BK)^t' (Q + K'RK) (A+BK)^t
//! ```
//!
//! which is `n` times the expected cost over initial states drawn uniformly
//! from the unit sphere. The positive factor does not move the minimizer, so
//! the optimal gain is the same under either convention.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{
    asymmetry, ensure_shape, ensure_square, max_abs, numerical_rank, spectral_radius, symmetrize,
};

/// Margin used by [`is_schur`]: a matrix counts as Schur when its spectral
/// radius is below `1 - SCHUR_MARGIN`.
pub const SCHUR_MARGIN: f64 = 1e-10;

/// Residual bound for Lyapunov solves, relative to `max(1, |X|_max)`.
pub const LYAPUNOV_TOL: f64 = 1e-10;

/// Largest state dimension solved through the vectorized (Kronecker) system.
pub const KRONECKER_MAX_DIM: usize = 16;

const SYMMETRY_TOL: f64 = 1e-12;
const CONTROLLABILITY_RANK_TOL: f64 = 1e-12;

/// Discrete-time plant `x_{t+1} = A x_t + B u_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiPlant {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl LtiPlant {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        ensure_square(&a, "LtiPlant::A")?;
        let n = a.nrows();
        if n == 0 || b.ncols() == 0 {
            return Err(Error::InvalidParams(
                "plant needs at least one state and one input".into(),
            ));
        }
        ensure_shape(&b, (n, b.ncols()), "LtiPlant::B")?;
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("LtiPlant"));
        }
        Ok(Self { a, b })
    }

    /// Same as [`LtiPlant::new`] but additionally requires `(A, B)` controllable.
    pub fn new_controllable(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let plant = Self::new(a, b)?;
        plant.ensure_controllable()?;
        Ok(plant)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// `[B, AB, ..., A^{n-1} B]`.
    pub fn controllability_matrix(&self) -> DMatrix<f64> {
        let (n, m) = (self.n(), self.m());
        let mut out = DMatrix::zeros(n, n * m);
        let mut block = self.b.clone();
        for i in 0..n {
            out.view_mut((0, i * m), (n, m)).copy_from(&block);
            block = &self.a * block;
        }
        out
    }

    pub fn controllability_rank(&self) -> usize {
        numerical_rank(&self.controllability_matrix(), CONTROLLABILITY_RANK_TOL)
    }

    pub fn is_controllable(&self) -> bool {
        self.controllability_rank() == self.n()
    }

    pub fn ensure_controllable(&self) -> Result<()> {
        let rank = self.controllability_rank();
        if rank < self.n() {
            return Err(Error::Uncontrollable { rank, n: self.n() });
        }
        Ok(())
    }

    /// Seeded random controllable plant with standard normal entries, `A`
    /// scaled by `1/sqrt(n)`. Redraws until controllable.
    pub fn random(n: usize, m: usize, seed: u64) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidParams("random plant needs n, m >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (n as f64).sqrt();
        loop {
            let a = DMatrix::from_fn(n, n, |_, _| {
                scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
            });
            let b = DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng));
            let plant = Self::new(a, b)?;
            if plant.is_controllable() {
                return Ok(plant);
            }
        }
    }

    pub(crate) fn check_gain(&self, gain: &DMatrix<f64>) -> Result<()> {
        ensure_shape(gain, (self.m(), self.n()), "gain")
    }
}

/// Symmetric positive definite stage-cost weights `(Q, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl CostSpec {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        for (name, mat) in [("Q", &q), ("R", &r)] {
            if mat.nrows() != mat.ncols() || mat.nrows() == 0 {
                return Err(Error::InvalidCost(format!(
                    "{name} must be square and non-empty"
                )));
            }
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidCost(format!("{name} has non-finite entries")));
            }
            let asym = asymmetry(mat);
            if asym > SYMMETRY_TOL {
                return Err(Error::InvalidCost(format!(
                    "{name} is not symmetric (max asymmetry {asym:.3e})"
                )));
            }
            let min_eig = symmetrize(mat).symmetric_eigenvalues().min();
            if !(min_eig > 0.0) {
                return Err(Error::InvalidCost(format!(
                    "{name} is not positive definite (min eigenvalue {min_eig:.3e})"
                )));
            }
        }
        Ok(Self { q, r })
    }

    pub fn identity(n: usize, m: usize) -> Self {
        Self {
            q: DMatrix::identity(n, n),
            r: DMatrix::identity(m, m),
        }
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub(crate) fn check_plant(&self, plant: &LtiPlant) -> Result<()> {
        ensure_shape(&self.q, (plant.n(), plant.n()), "CostSpec::Q")?;
        ensure_shape(&self.r, (plant.m(), plant.m()), "CostSpec::R")
    }

    /// `Q + K' R K`.
    pub fn closed_loop_weight(&self, gain: &DMatrix<f64>) -> DMatrix<f64> {
        &self.q + gain.transpose() * &self.r * gain
    }
}

/// State/input trajectory of one closed-loop experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub stage_costs: Vec<f64>,
}

impl Rollout {
    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    /// Largest deviation of the stored states from `A x_t + B u_t`.
    pub fn dynamics_defect(&self, plant: &LtiPlant) -> f64 {
        self.inputs
            .iter()
            .enumerate()
            .map(|(t, u)| {
                let predicted = plant.a() * &self.states[t] + plant.b() * u;
                (predicted - &self.states[t + 1]).amax()
            })
            .fold(0.0, f64::max)
    }
}

/// Byproducts of [`exact_gradient`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientWorkspace {
    /// Solves `(A+BK) W (A+BK)' - W = -I`.
    pub w_c: DMatrix<f64>,
    /// Solves `(A+BK)' P (A+BK) - P = -(Q + K'RK)`.
    pub p: DMatrix<f64>,
}

/// `A + BK`.
pub fn closed_loop(plant: &LtiPlant, gain: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    plant.check_gain(gain)?;
    Ok(plant.a() + plant.b() * gain)
}

pub fn is_schur(m: &DMatrix<f64>) -> Result<bool> {
    is_schur_with_margin(m, SCHUR_MARGIN)
}

pub fn is_schur_with_margin(m: &DMatrix<f64>, margin: f64) -> Result<bool> {
    Ok(spectral_radius(m)? < 1.0 - margin)
}

/// Whether `A + BK` is Schur.
pub fn is_stabilizing(plant: &LtiPlant, gain: &DMatrix<f64>) -> Result<bool> {
    is_schur(&closed_loop(plant, gain)?)
}

fn ensure_schur(m: &DMatrix<f64>) -> Result<()> {
    let rho = spectral_radius(m)?;
    if rho >= 1.0 - SCHUR_MARGIN {
        return Err(Error::UnstableClosedLoop {
            spectral_radius: rho,
        });
    }
    Ok(())
}

fn lyapunov_residual(m: &DMatrix<f64>, c: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    m.transpose() * x * m - x + c
}

/// Solves `M' X M - X = -C` for Schur `M`.
///
/// Small problems (`n <= KRONECKER_MAX_DIM`) go through the vectorized system
/// `(I - M' (x) M') vec(X) = vec(C)` with one LU factorization reused for up
/// to two refinement passes. Larger problems accumulate the series
/// `sum_t (M')^t C M^t` by repeated squaring.
pub fn solve_discrete_lyapunov(m: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_square(m, "solve_discrete_lyapunov::M")?;
    let n = m.nrows();
    ensure_shape(c, (n, n), "solve_discrete_lyapunov::C")?;
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("solve_discrete_lyapunov::C"));
    }
    ensure_schur(m)?;

    let x = if n <= KRONECKER_MAX_DIM {
        solve_lyapunov_kronecker(m, c)?
    } else {
        solve_lyapunov_doubling(m, c)?
    };

    let residual = max_abs(&lyapunov_residual(m, c, &x));
    if !residual.is_finite() || residual > LYAPUNOV_TOL * max_abs(&x).max(1.0) {
        return Err(Error::LyapunovResidual { residual });
    }
    Ok(x)
}

fn solve_lyapunov_kronecker(m: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let mt = m.transpose();
    let system = DMatrix::<f64>::identity(n * n, n * n) - mt.kronecker(&mt);
    let lu = system.lu();
    let solve = |rhs: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let v = DVector::from_column_slice(rhs.as_slice());
        let sol = lu.solve(&v).ok_or(Error::UnstableClosedLoop {
            spectral_radius: f64::NAN,
        })?;
        Ok(DMatrix::from_column_slice(n, n, sol.as_slice()))
    };

    let mut x = symmetrize(&solve(c)?);
    for _ in 0..2 {
        let r = lyapunov_residual(m, c, &x);
        if max_abs(&r) <= f64::EPSILON * max_abs(&x).max(1.0) {
            break;
        }
        x += solve(&r)?;
        x = symmetrize(&x);
    }
    Ok(x)
}

fn solve_lyapunov_doubling(m: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut x = c.clone();
    let mut power = m.clone();
    for _ in 0..64 {
        let increment = power.transpose() * &x * &power;
        x += &increment;
        if !max_abs(&x).is_finite() {
            return Err(Error::NonFinite("solve_discrete_lyapunov"));
        }
        if max_abs(&increment) <= f64::EPSILON * max_abs(&x) {
            return Ok(symmetrize(&x));
        }
        power = &power * &power;
    }
    Err(Error::LyapunovResidual {
        residual: max_abs(&lyapunov_residual(m, c, &x)),
    })
}

/// Infinite-horizon cost `J(K) = 1/2 Tr(P)`.
pub fn infinite_cost(plant: &LtiPlant, cost: &CostSpec, gain: &DMatrix<f64>) -> Result<f64> {
    cost.check_plant(plant)?;
    let m = closed_loop(plant, gain)?;
    let p = solve_discrete_lyapunov(&m, &cost.closed_loop_weight(gain))?;
    Ok(0.5 * p.trace())
}

/// Truncated cost `J_T(K)` measured through `n` rollouts of length `T` from
/// the canonical basis vectors with `u_t = K x_t`.
pub fn truncated_cost(
    plant: &LtiPlant,
    cost: &CostSpec,
    gain: &DMatrix<f64>,
    horizon: usize,
) -> Result<f64> {
    cost.check_plant(plant)?;
    plant.check_gain(gain)?;
    if horizon == 0 {
        return Err(Error::InvalidParams("horizon must be at least 1".into()));
    }
    let (n, m) = (plant.n(), plant.m());
    let mut x = DVector::<f64>::zeros(n);
    let mut x_next = DVector::<f64>::zeros(n);
    let mut u = DVector::<f64>::zeros(m);
    let mut qx = DVector::<f64>::zeros(n);
    let mut ru = DVector::<f64>::zeros(m);

    let mut total = 0.0;
    for i in 0..n {
        x.fill(0.0);
        x[i] = 1.0;
        for _ in 0..horizon {
            u.gemv(1.0, gain, &x, 0.0);
            qx.gemv(1.0, cost.q(), &x, 0.0);
            ru.gemv(1.0, cost.r(), &u, 0.0);
            total += x.dot(&qx) + u.dot(&ru);
            x_next.gemv(1.0, plant.a(), &x, 0.0);
            x_next.gemv(1.0, plant.b(), &u, 1.0);
            std::mem::swap(&mut x, &mut x_next);
        }
    }
    let value = 0.5 * total;
    if !value.is_finite() {
        return Err(Error::NonFinite("truncated_cost"));
    }
    Ok(value)
}

/// Closed-form counterpart of [`truncated_cost`] through matrix powers.
pub fn truncated_cost_trace(
    plant: &LtiPlant,
    cost: &CostSpec,
    gain: &DMatrix<f64>,
    horizon: usize,
) -> Result<f64> {
    cost.check_plant(plant)?;
    if horizon == 0 {
        return Err(Error::InvalidParams("horizon must be at least 1".into()));
    }
    let m = closed_loop(plant, gain)?;
    let weight = cost.closed_loop_weight(gain);
    let mut power = DMatrix::<f64>::identity(plant.n(), plant.n());
    let mut total = 0.0;
    for _ in 0..horizon {
        total += (power.transpose() * &weight * &power).trace();
        power = &m * power;
    }
    let value = 0.5 * total;
    if !value.is_finite() {
        return Err(Error::NonFinite("truncated_cost_trace"));
    }
    Ok(value)
}

/// Exact policy gradient `G(K) = (RK + B'P(A+BK)) W_c`.
pub fn exact_gradient(
    plant: &LtiPlant,
    cost: &CostSpec,
    gain: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, GradientWorkspace)> {
    cost.check_plant(plant)?;
    let m = closed_loop(plant, gain)?;
    let p = solve_discrete_lyapunov(&m, &cost.closed_loop_weight(gain))?;
    let w_c = solve_discrete_lyapunov(&m.transpose(), &DMatrix::identity(plant.n(), plant.n()))?;
    let g = (cost.r() * gain + plant.b().transpose() * &p * &m) * &w_c;
    Ok((g, GradientWorkspace { w_c, p }))
}

/// One closed-loop experiment from `x0` with `u_t = K x_t`.
pub fn simulate_rollout(
    plant: &LtiPlant,
    cost: &CostSpec,
    gain: &DMatrix<f64>,
    x0: &DVector<f64>,
    horizon: usize,
) -> Result<Rollout> {
    cost.check_plant(plant)?;
    plant.check_gain(gain)?;
    if x0.len() != plant.n() {
        return Err(Error::DimensionMismatch {
            context: "simulate_rollout::x0",
            expected: (plant.n(), 1),
            found: (x0.len(), 1),
        });
    }
    if horizon == 0 {
        return Err(Error::InvalidParams("horizon must be at least 1".into()));
    }
    let mut states = Vec::with_capacity(horizon + 1);
    let mut inputs = Vec::with_capacity(horizon);
    let mut stage_costs = Vec::with_capacity(horizon);
    let mut x = x0.clone();
    for _ in 0..horizon {
        let u = gain * &x;
        let stage = x.dot(&(cost.q() * &x)) + u.dot(&(cost.r() * &u));
        let next = plant.a() * &x + plant.b() * &u;
        if !stage.is_finite() || next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("simulate_rollout"));
        }
        stage_costs.push(stage);
        states.push(std::mem::replace(&mut x, next));
        inputs.push(u);
    }
    states.push(x);
    Ok(Rollout {
        states,
        inputs,
        stage_costs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
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

    fn k(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn closed_loop_examples() {
        let (plant, _) = scalar();
        assert_eq!(closed_loop(&plant, &k(0.0)).unwrap()[(0, 0)], 0.5);
        assert_eq!(closed_loop(&plant, &k(-0.25)).unwrap()[(0, 0)], 0.25);
        let id = LtiPlant::new(DMatrix::identity(2, 2), DMatrix::identity(2, 2)).unwrap();
        let m = closed_loop(&id, &(-DMatrix::<f64>::identity(2, 2))).unwrap();
        assert_eq!(m, DMatrix::zeros(2, 2));
    }

    #[test]
    fn closed_loop_rejects_bad_gain_shape() {
        let (plant, _) = scalar();
        let err = closed_loop(&plant, &DMatrix::zeros(2, 1)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn schur_examples() {
        assert!(is_schur(&k(0.5)).unwrap());
        assert!(!is_schur(&k(1.0)).unwrap());
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -0.9, 0.0]);
        assert!(is_schur(&m).unwrap());
        assert!(matches!(
            is_schur(&DMatrix::zeros(2, 3)),
            Err(Error::NotSquare { .. })
        ));
    }

    #[test]
    fn lyapunov_examples() {
        let x = solve_discrete_lyapunov(&k(0.5), &k(1.0)).unwrap();
        assert_relative_eq!(x[(0, 0)], 4.0 / 3.0, epsilon = 1e-14);
        let x = solve_discrete_lyapunov(&k(0.9), &k(1.0)).unwrap();
        assert_relative_eq!(x[(0, 0)], 1.0 / 0.19, epsilon = 1e-12);
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let x = solve_discrete_lyapunov(&DMatrix::zeros(2, 2), &q).unwrap();
        assert_eq!(x, q);
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        assert!(matches!(
            solve_discrete_lyapunov(&k(1.0), &k(1.0)),
            Err(Error::UnstableClosedLoop { .. })
        ));
    }

    #[test]
    fn lyapunov_doubling_path_matches_kronecker() {
        let n = KRONECKER_MAX_DIM + 2;
        let m = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                0.6
            } else if j == i + 1 {
                0.3
            } else {
                0.0
            }
        });
        let c = DMatrix::identity(n, n);
        let x = solve_discrete_lyapunov(&m, &c).unwrap();
        let residual = max_abs(&lyapunov_residual(&m, &c, &x));
        assert!(residual < 1e-10, "residual {residual}");
        // leading block agrees with a direct small solve of the same upper-triangular chain
        let small = solve_lyapunov_kronecker(
            &m.view((0, 0), (4, 4)).into_owned(),
            &DMatrix::identity(4, 4),
        )
        .unwrap();
        assert_relative_eq!(x[(0, 0)], small[(0, 0)], epsilon = 1e-12);
    }

    #[test]
    fn infinite_cost_examples() {
        let (plant, cost) = scalar();
        assert_relative_eq!(
            infinite_cost(&plant, &cost, &k(0.0)).unwrap(),
            2.0 / 3.0,
            epsilon = 1e-14
        );
        // deadbeat: A + BK = 0 leaves a single term
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.3]);
        let plant2 = LtiPlant::new(a.clone(), DMatrix::identity(2, 2)).unwrap();
        let gain = -a;
        let expected = 0.5 * (DMatrix::<f64>::identity(2, 2) + gain.transpose() * &gain).trace();
        assert_relative_eq!(
            infinite_cost(&plant2, &CostSpec::identity(2, 2), &gain).unwrap(),
            expected,
            epsilon = 1e-14
        );
        assert!(matches!(
            infinite_cost(&plant, &cost, &k(0.6)),
            Err(Error::UnstableClosedLoop { .. })
        ));
    }

    #[test]
    fn truncated_cost_examples() {
        let (plant, cost) = scalar();
        assert_relative_eq!(
            truncated_cost(&plant, &cost, &k(0.0), 2).unwrap(),
            0.625,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            truncated_cost(&plant, &cost, &k(0.1), 2).unwrap(),
            0.6868,
            epsilon = 1e-14
        );
        let plant3 = LtiPlant::random(3, 2, 4).unwrap();
        let r = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let cost3 = CostSpec::new(DMatrix::identity(3, 3), r).unwrap();
        let j1 = truncated_cost(&plant3, &cost3, &DMatrix::zeros(2, 3), 1).unwrap();
        assert_relative_eq!(j1, 1.5, epsilon = 1e-15);
    }

    #[test]
    fn truncated_cost_reports_overflow() {
        let (plant, cost) = scalar();
        assert!(matches!(
            truncated_cost(&plant, &cost, &k(1e6), 200),
            Err(Error::NonFinite(_))
        ));
        // unstable but finite is fine
        assert!(truncated_cost(&plant, &cost, &k(1.0), 5)
            .unwrap()
            .is_finite());
    }

    #[test]
    fn gradient_scalar_example() {
        let (plant, cost) = scalar();
        let (g, ws) = exact_gradient(&plant, &cost, &k(0.0)).unwrap();
        assert_relative_eq!(g[(0, 0)], 8.0 / 9.0, epsilon = 1e-14);
        assert_relative_eq!(ws.p[(0, 0)], 4.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(ws.w_c[(0, 0)], 4.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn rollout_examples() {
        let (plant, cost) = scalar();
        let x0 = DVector::from_element(1, 1.0);
        let r = simulate_rollout(&plant, &cost, &k(0.0), &x0, 2).unwrap();
        let xs: Vec<f64> = r.states.iter().map(|x| x[0]).collect();
        assert_eq!(xs, vec![1.0, 0.5, 0.25]);

        let r = simulate_rollout(&plant, &cost, &k(0.1), &x0, 2).unwrap();
        let xs: Vec<f64> = r.states.iter().map(|x| x[0]).collect();
        assert_relative_eq!(xs[1], 0.6, epsilon = 1e-15);
        assert_relative_eq!(xs[2], 0.36, epsilon = 1e-15);
        assert_relative_eq!(r.stage_costs[0], 1.01, epsilon = 1e-15);
        assert_relative_eq!(r.stage_costs[1], 0.3636, epsilon = 1e-15);
        assert_eq!(r.states.len(), 3);
        assert_eq!(r.inputs.len(), 2);
        assert!(r.dynamics_defect(&plant) < 1e-12);
    }

    #[test]
    fn deadbeat_rollout_hits_origin() {
        let a = DMatrix::from_row_slice(2, 2, &[1.2, 0.4, 0.0, 0.7]);
        let plant = LtiPlant::new(a.clone(), DMatrix::identity(2, 2)).unwrap();
        let x0 = DVector::from_vec(vec![0.3, -2.0]);
        let r = simulate_rollout(&plant, &CostSpec::identity(2, 2), &(-a), &x0, 4).unwrap();
        assert_eq!(r.states[0], x0);
        for x in &r.states[1..] {
            assert_eq!(x.amax(), 0.0);
        }
    }

    #[test]
    fn cost_spec_validation() {
        let bad_sym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(CostSpec::new(bad_sym, DMatrix::identity(1, 1)).is_err());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(CostSpec::new(indefinite, DMatrix::identity(1, 1)).is_err());
        assert!(CostSpec::new(DMatrix::identity(2, 2), DMatrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn controllability() {
        let plant = LtiPlant::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 1)).unwrap();
        assert_eq!(plant.controllability_rank(), 0);
        assert!(matches!(
            plant.ensure_controllable(),
            Err(Error::Uncontrollable { rank: 0, n: 2 })
        ));
        let chain = LtiPlant::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        )
        .unwrap();
        assert!(chain.is_controllable());
    }
}
