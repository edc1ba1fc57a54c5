//! Discrete-time averaging: periodic fields, their period-mean, co-simulation
//! of the original and averaged iterations, and the averaged
//! extremum-seeking system used to check the loop's convergence mechanism.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dither::{dither_matrix, DitherSpec};
use crate::error::{Error, Result};
use crate::esc::{EscParams, EscState, FilterInit};
use crate::linalg::{spectral_radius, CompensatedSum};
use crate::lti_cost::{
    closed_loop, exact_gradient, infinite_cost, is_stabilizing, truncated_cost, CostSpec, LtiPlant,
};

/// Tolerance of the periodicity and window-independence probes, relative to
/// `max(1, |value|)`.
pub const PROBE_TOL: f64 = 1e-12;
const PERIODICITY_PROBES: usize = 16;
const WINDOW_PROBES: usize = 8;
const PROBE_SEED: u64 = 0x5eed_a7e5;

pub type FieldFn = dyn Fn(&DVector<f64>, u64) -> DVector<f64> + Send + Sync;

/// A field `F(chi, k)` that is `k_prd`-periodic in `k`.
#[derive(Clone)]
pub struct PeriodicField {
    dim: usize,
    period: u64,
    eval: Arc<FieldFn>,
}

impl fmt::Debug for PeriodicField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodicField")
            .field("dim", &self.dim)
            .field("period", &self.period)
            .finish_non_exhaustive()
    }
}

fn close(a: &DVector<f64>, b: &DVector<f64>, tol: f64) -> bool {
    a.len() == b.len()
        && a.iter().zip(b.iter()).all(|(x, y)| {
            let scale = x.abs().max(y.abs()).max(1.0);
            (x - y).abs() <= tol * scale || (x.is_nan() && y.is_nan())
        })
}

fn probe_points(dim: usize, count: usize, salt: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED ^ salt);
    (0..count)
        .map(|_| {
            DVector::from_fn(dim, |_, _| {
                0.5 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
            })
        })
        .collect()
}

impl PeriodicField {
    /// Wraps `eval`, spot-checking `F(chi, k) = F(chi, k + period)` at 16
    /// seeded probe points.
    pub fn new<F>(dim: usize, period: u64, eval: F) -> Result<Self>
    where
        F: Fn(&DVector<f64>, u64) -> DVector<f64> + Send + Sync + 'static,
    {
        if dim == 0 || period == 0 {
            return Err(Error::InvalidParams(
                "field dimension and period must be positive".into(),
            ));
        }
        let field = Self {
            dim,
            period,
            eval: Arc::new(eval),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
        for chi in probe_points(dim, PERIODICITY_PROBES, 1) {
            let k = rand::Rng::gen_range(&mut rng, 0..4 * period);
            let a = field.eval(&chi, k);
            if a.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "PeriodicField::new",
                    expected: (dim, 1),
                    found: (a.len(), 1),
                });
            }
            if !close(&a, &field.eval(&chi, k + period), PROBE_TOL) {
                return Err(Error::NotAverageable(format!(
                    "field is not {period}-periodic at k = {k}"
                )));
            }
        }
        Ok(field)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn eval(&self, chi: &DVector<f64>, k: u64) -> DVector<f64> {
        (self.eval)(chi, k)
    }

    fn window_mean(&self, chi: &DVector<f64>, start: u64) -> DVector<f64> {
        let mut acc = vec![CompensatedSum::new(); self.dim];
        for tau in start..start + self.period {
            let v = self.eval(chi, tau);
            for (a, x) in acc.iter_mut().zip(v.iter()) {
                a.add(*x);
            }
        }
        let n = self.period as f64;
        DVector::from_iterator(self.dim, acc.iter().map(|a| a.value() / n))
    }
}

/// The time-invariant period mean of a [`PeriodicField`].
#[derive(Debug, Clone)]
pub struct AveragedField {
    field: PeriodicField,
}

impl AveragedField {
    pub fn dim(&self) -> usize {
        self.field.dim
    }

    /// `(1/k_prd) sum_{tau=1}^{k_prd} F(chi, tau)`.
    pub fn eval(&self, chi: &DVector<f64>) -> DVector<f64> {
        self.field.window_mean(chi, 1)
    }
}

/// Averages `field` over one period, checking on probe points that the
/// windows `[1, k_prd]` and `[2, k_prd + 1]` agree.
pub fn average_field(field: &PeriodicField) -> Result<AveragedField> {
    for chi in probe_points(field.dim, WINDOW_PROBES, 2) {
        let a = field.window_mean(&chi, 1);
        let b = field.window_mean(&chi, 2);
        if !close(&a, &b, PROBE_TOL) {
            return Err(Error::NotAverageable(
                "window mean depends on its start".into(),
            ));
        }
    }
    Ok(AveragedField {
        field: field.clone(),
    })
}

/// Original and averaged iterates from a shared initial condition.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPair {
    pub original: Vec<DVector<f64>>,
    pub averaged: Vec<DVector<f64>>,
    /// `|chi^k - chi_av^k|` (Euclidean) per stored step.
    pub deviations: Vec<f64>,
    /// First step whose iterate was non-finite; the trajectories stop there.
    pub diverged_at: Option<usize>,
}

impl TrajectoryPair {
    pub fn sup_deviation(&self) -> f64 {
        self.deviations.iter().fold(0.0_f64, |a, &d| a.max(d))
    }
}

/// Co-simulates `chi+ = chi + gamma F(chi, k)` and
/// `chi_av+ = chi_av + gamma F_av(chi_av)` for `steps` steps.
pub fn simulate_pair(
    field: &PeriodicField,
    chi0: &DVector<f64>,
    gamma: f64,
    steps: usize,
) -> Result<TrajectoryPair> {
    let averaged = average_field(field)?;
    simulate_pair_with(field, &averaged, chi0, gamma, steps)
}

fn simulate_pair_with(
    field: &PeriodicField,
    averaged_field: &AveragedField,
    chi0: &DVector<f64>,
    gamma: f64,
    steps: usize,
) -> Result<TrajectoryPair> {
    if steps == 0 || !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParams(
            "simulate_pair needs steps >= 1 and gamma > 0".into(),
        ));
    }
    if chi0.len() != field.dim {
        return Err(Error::DimensionMismatch {
            context: "simulate_pair::chi0",
            expected: (field.dim, 1),
            found: (chi0.len(), 1),
        });
    }
    let mut original = Vec::with_capacity(steps + 1);
    let mut averaged = Vec::with_capacity(steps + 1);
    let mut deviations = Vec::with_capacity(steps + 1);
    original.push(chi0.clone());
    averaged.push(chi0.clone());
    deviations.push(0.0);
    let mut diverged_at = None;
    for k in 0..steps {
        let x = &original[k];
        let y = &averaged[k];
        let x_next = x + field.eval(x, k as u64) * gamma;
        let y_next = y + averaged_field.eval(y) * gamma;
        if x_next.iter().chain(y_next.iter()).any(|v| !v.is_finite()) {
            diverged_at = Some(k + 1);
            break;
        }
        deviations.push((&x_next - &y_next).norm());
        original.push(x_next);
        averaged.push(y_next);
    }
    Ok(TrajectoryPair {
        original,
        averaged,
        deviations,
        diverged_at,
    })
}

/// Sup-deviation of original vs averaged trajectories over a fixed
/// continuous horizon `theta`, for each step size of a decreasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub gammas: Vec<f64>,
    pub steps: Vec<usize>,
    pub sup_deviations: Vec<f64>,
    /// `sup_deviations[i + 1] / sup_deviations[i]`, `0` when both vanish.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub diverged: bool,
    pub passed: bool,
}

/// Ratios above this fail a [`closeness_scaling`] report.
pub const CLOSENESS_RATIO_MAX: f64 = 0.8;

pub fn closeness_scaling(
    field: &PeriodicField,
    chi0: &DVector<f64>,
    gamma_grid: &[f64],
    theta: f64,
) -> Result<ScalingReport> {
    if gamma_grid.len() < 2 || !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::InvalidParams(
            "closeness_scaling needs at least two step sizes and theta > 0".into(),
        ));
    }
    if gamma_grid.windows(2).any(|w| !(w[1] < w[0])) || gamma_grid.iter().any(|&g| !(g > 0.0)) {
        return Err(Error::InvalidParams(
            "gamma grid must be positive and strictly decreasing".into(),
        ));
    }
    let averaged = average_field(field)?;
    let mut steps = Vec::with_capacity(gamma_grid.len());
    let mut sup_deviations = Vec::with_capacity(gamma_grid.len());
    let mut diverged = false;
    for &gamma in gamma_grid {
        let n = (theta / gamma).ceil() as usize;
        let pair = simulate_pair_with(field, &averaged, chi0, gamma, n)?;
        diverged |= pair.diverged_at.is_some();
        steps.push(n);
        sup_deviations.push(if pair.diverged_at.is_some() {
            f64::INFINITY
        } else {
            pair.sup_deviation()
        });
    }
    let ratios: Vec<f64> = sup_deviations
        .windows(2)
        .map(|w| {
            if w[0] == 0.0 && w[1] == 0.0 {
                0.0
            } else {
                w[1] / w[0]
            }
        })
        .collect();
    let max_ratio = ratios.iter().fold(0.0_f64, |a, &r| a.max(r));
    Ok(ScalingReport {
        gammas: gamma_grid.to_vec(),
        steps,
        sup_deviations,
        passed: !diverged && ratios.iter().all(|r| *r <= CLOSENESS_RATIO_MAX),
        ratios,
        max_ratio,
        diverged,
    })
}

/// Packs `(f, K)` as `[f, K row-major]`.
pub fn pack_esc_state(f: f64, gain: &DMatrix<f64>) -> DVector<f64> {
    let (m, n) = gain.shape();
    DVector::from_fn(1 + m * n, |i, _| {
        if i == 0 {
            f
        } else {
            gain[((i - 1) / n, (i - 1) % n)]
        }
    })
}

pub fn unpack_esc_state(chi: &DVector<f64>, m: usize, n: usize) -> (f64, DMatrix<f64>) {
    (chi[0], DMatrix::from_fn(m, n, |i, j| chi[1 + i * n + j]))
}

/// The extremum-seeking iteration as a periodic field on `chi = (f, vec K)`,
/// scaled so that `chi + gamma F(chi, k)` is exactly one loop step.
pub fn esc_field(
    plant: &LtiPlant,
    cost: &CostSpec,
    horizon: usize,
    delta: f64,
    dither: &DitherSpec,
) -> Result<PeriodicField> {
    cost.check_plant(plant)?;
    if (dither.rows(), dither.cols()) != (plant.m(), plant.n()) {
        return Err(Error::DimensionMismatch {
            context: "esc_field::dither",
            expected: (plant.m(), plant.n()),
            found: (dither.rows(), dither.cols()),
        });
    }
    if !(delta > 0.0) || horizon == 0 {
        return Err(Error::InvalidParams(
            "esc_field needs delta > 0 and horizon >= 1".into(),
        ));
    }
    let (m, n) = (plant.m(), plant.n());
    let (plant, cost, spec) = (plant.clone(), cost.clone(), dither.clone());
    PeriodicField::new(1 + m * n, dither.k_prd(), move |chi, k| {
        let (f, gain) = unpack_esc_state(chi, m, n);
        let d = dither_matrix(&spec, k);
        let y = truncated_cost(&plant, &cost, &(&gain + &d * delta), horizon).unwrap_or(f64::NAN);
        let innovation = y - f;
        pack_esc_state(innovation, &(&d * (-2.0 * innovation / delta)))
    })
}

fn ensure_probes_stabilizing(
    plant: &LtiPlant,
    gain: &DMatrix<f64>,
    delta: f64,
    dither: &DitherSpec,
) -> Result<()> {
    let check = |g: &DMatrix<f64>| -> Result<()> {
        if !is_stabilizing(plant, g)? {
            return Err(Error::UnstableClosedLoop {
                spectral_radius: spectral_radius(&closed_loop(plant, g)?)?,
            });
        }
        Ok(())
    };
    check(gain)?;
    for tau in 1..=dither.k_prd() {
        check(&(gain + dither_matrix(dither, tau) * delta))?;
    }
    Ok(())
}

/// Probe costs `J_T(K + delta D^tau)` for `tau = 1..=k_prd`.
fn probe_costs(
    plant: &LtiPlant,
    cost: &CostSpec,
    gain: &DMatrix<f64>,
    delta: f64,
    horizon: usize,
    dither: &DitherSpec,
) -> Result<Vec<(f64, DMatrix<f64>)>> {
    (1..=dither.k_prd())
        .map(|tau| {
            let d = dither_matrix(dither, tau);
            Ok((
                truncated_cost(plant, cost, &(gain + &d * delta), horizon)?,
                d,
            ))
        })
        .collect()
}

/// `J_av(K) = (1/k_prd) sum_tau J_T(K + delta D^tau)`.
pub fn averaged_probe_cost(
    plant: &LtiPlant,
    cost: &CostSpec,
    gain: &DMatrix<f64>,
    delta: f64,
    horizon: usize,
    dither: &DitherSpec,
) -> Result<f64> {
    let probes = probe_costs(plant, cost, gain, delta, horizon, dither)?;
    let sum: CompensatedSum = probes.iter().map(|(y, _)| *y).collect();
    Ok(sum.value() / dither.k_prd() as f64)
}

/// One step of the averaged loop:
///
/// ```text
/// f+ = f + gamma (J_av(K) - f)
/// K+ = K - gamma 2/(delta k_prd) sum_tau J_T(K + delta D^tau) D^tau
/// ```
pub fn averaged_esc_step(
    state: &EscState,
    plant: &LtiPlant,
    cost: &CostSpec,
    params: &EscParams,
) -> Result<EscState> {
    params.validate()?;
    ensure_probes_stabilizing(plant, &state.gain, params.delta, &params.dither)?;
    let probes = probe_costs(
        plant,
        cost,
        &state.gain,
        params.delta,
        params.horizon,
        &params.dither,
    )?;
    let n = params.dither.k_prd() as f64;
    let mean: CompensatedSum = probes.iter().map(|(y, _)| *y).collect();
    let mut correlation = DMatrix::zeros(plant.m(), plant.n());
    for (y, d) in &probes {
        correlation += d * *y;
    }
    Ok(EscState {
        k: state.k + 1,
        f: state.f + params.gamma * (mean.value() / n - state.f),
        gain: &state.gain - correlation * (params.gamma * 2.0 / (params.delta * n)),
    })
}

/// `(2/(delta k_prd)) sum_{tau=1}^{k_prd} J(K + delta D^tau) D^tau` for any
/// cost function `J`.
pub fn gradient_estimate<F>(
    mut cost_fn: F,
    gain: &DMatrix<f64>,
    delta: f64,
    dither: &DitherSpec,
) -> Result<DMatrix<f64>>
where
    F: FnMut(&DMatrix<f64>) -> Result<f64>,
{
    let mut acc = DMatrix::zeros(gain.nrows(), gain.ncols());
    for tau in 1..=dither.k_prd() {
        let d = dither_matrix(dither, tau);
        acc += &d * cost_fn(&(gain + &d * delta))?;
    }
    Ok(acc * (2.0 / (delta * dither.k_prd() as f64)))
}

/// Which cost the dithered probes measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostMode {
    Infinite,
    Truncated(usize),
}

/// Frobenius distance between the dither-correlation gradient estimate and
/// the exact gradient at `gain`.
pub fn estimate_error(
    plant: &LtiPlant,
    cost: &CostSpec,
    gain: &DMatrix<f64>,
    delta: f64,
    dither: &DitherSpec,
    mode: CostMode,
) -> Result<f64> {
    ensure_probes_stabilizing(plant, gain, delta, dither)?;
    let estimate = gradient_estimate(
        |k| match mode {
            CostMode::Infinite => infinite_cost(plant, cost, k),
            CostMode::Truncated(t) => truncated_cost(plant, cost, k, t),
        },
        gain,
        delta,
        dither,
    )?;
    let (g, _) = exact_gradient(plant, cost, gain)?;
    Ok((estimate - g).norm())
}

/// `J(K) - J_T(K)`.
pub fn truncation_gap(
    plant: &LtiPlant,
    cost: &CostSpec,
    gain: &DMatrix<f64>,
    horizon: usize,
) -> Result<f64> {
    let j = infinite_cost(plant, cost, gain)?;
    Ok(j - truncated_cost(plant, cost, gain, horizon)?)
}

/// Gaps at `T = 1, 2, 4, ...` until one is below `tol`.
#[derive(Debug, Clone, PartialEq)]
pub struct GapSearch {
    pub horizons: Vec<usize>,
    pub gaps: Vec<f64>,
    /// First horizon whose gap is below the tolerance.
    pub horizon: usize,
}

pub fn horizon_for_gap(
    plant: &LtiPlant,
    cost: &CostSpec,
    gain: &DMatrix<f64>,
    tol: f64,
    max_horizon: usize,
) -> Result<GapSearch> {
    let j = infinite_cost(plant, cost, gain)?;
    let (mut horizons, mut gaps) = (Vec::new(), Vec::new());
    let mut t = 1;
    while t <= max_horizon {
        let gap = j - truncated_cost(plant, cost, gain, t)?;
        horizons.push(t);
        gaps.push(gap);
        if gap < tol {
            return Ok(GapSearch {
                horizons,
                gaps,
                horizon: t,
            });
        }
        t *= 2;
    }
    Err(Error::InvalidParams(format!(
        "truncation gap did not fall below {tol:e} by T = {max_horizon}"
    )))
}

/// `1/2 (f - J_av(K))^2 + J(K) - J*`.
pub fn lyapunov_surrogate(
    plant: &LtiPlant,
    cost: &CostSpec,
    state: &EscState,
    params: &EscParams,
    j_star: f64,
) -> Result<f64> {
    let j_av = averaged_probe_cost(
        plant,
        cost,
        &state.gain,
        params.delta,
        params.horizon,
        &params.dither,
    )?;
    let j = infinite_cost(plant, cost, &state.gain)?;
    Ok(0.5 * (state.f - j_av).powi(2) + j - j_star)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragedRun {
    pub states: Vec<EscState>,
    pub surrogate: Vec<f64>,
}

/// `params.iterations` averaged steps from `(f0, K0)`, with the surrogate
/// evaluated at every state.
pub fn averaged_esc_trajectory(
    plant: &LtiPlant,
    cost: &CostSpec,
    params: &EscParams,
    j_star: f64,
) -> Result<AveragedRun> {
    params.validate()?;
    let f0 = match params.f0 {
        FilterInit::Value(v) => v,
        FilterInit::FirstProbe => truncated_cost(
            plant,
            cost,
            &(&params.k0 + dither_matrix(&params.dither, 0) * params.delta),
            params.horizon,
        )?,
    };
    let mut state = EscState {
        k: 0,
        f: f0,
        gain: params.k0.clone(),
    };
    let mut states = Vec::with_capacity(params.iterations as usize + 1);
    let mut surrogate = Vec::with_capacity(params.iterations as usize + 1);
    for _ in 0..params.iterations {
        surrogate.push(lyapunov_surrogate(plant, cost, &state, params, j_star)?);
        let next = averaged_esc_step(&state, plant, cost, params)?;
        states.push(std::mem::replace(&mut state, next));
    }
    surrogate.push(lyapunov_surrogate(plant, cost, &state, params, j_star)?);
    states.push(state);
    Ok(AveragedRun { states, surrogate })
}

/// Least-squares line through `(k, ln v_k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

/// Fits `ln v_k` against `k` over the leading run of values above `floor`.
pub fn fit_log_decay(values: &[f64], floor: f64) -> Option<LogFit> {
    let pts: Vec<(f64, f64)> = values
        .iter()
        .take_while(|&&v| v > floor && v > 0.0)
        .enumerate()
        .map(|(k, v)| (k as f64, v.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Some(LogFit {
        slope,
        intercept: my - slope * mx,
        r2,
        points: pts.len(),
    })
}
