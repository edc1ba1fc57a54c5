//! The extremum-seeking optimization loop.
//!
//! Each iteration probes the cost oracle once at the dithered gain
//! `K + delta D^k` and applies
//!
//! ```text
//! f <- f + gamma (y - f)
//! K <- K - gamma * 2 (y - f) D^k / delta
//! ```
//!
//! The update path only sees the oracle through [`CostOracle`]; plant and
//! cost matrices enter a run solely through the optional verification
//! [`Probes`], whose outputs are logged and never fed back.

use nalgebra::DMatrix;

use crate::dither::{dither_matrix, DitherSpec};
use crate::error::{Error, Result};
use crate::linalg::spectral_radius;
use crate::lti_cost::{closed_loop, infinite_cost, truncated_cost, CostSpec, LtiPlant};
use crate::riccati::DareSolution;

/// Any `|entry|` above this ends a run as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Black-box access to the truncated cost `J_T` of a gain.
pub trait CostOracle {
    /// `(m, n)`: shape of the gains the oracle accepts.
    fn dims(&self) -> (usize, usize);

    fn horizon(&self) -> usize;

    /// Measured truncated cost of `gain`. A non-finite value signals a failed
    /// experiment.
    fn query(&mut self, gain: &DMatrix<f64>) -> f64;
}

/// Oracle that runs the `n` canonical-basis experiments on a simulated plant.
pub struct SimulatedOracle {
    plant: LtiPlant,
    cost: CostSpec,
    horizon: usize,
    queries: u64,
}

impl SimulatedOracle {
    pub fn new(plant: LtiPlant, cost: CostSpec, horizon: usize) -> Result<Self> {
        cost.check_plant(&plant)?;
        if horizon == 0 {
            return Err(Error::InvalidParams("horizon must be at least 1".into()));
        }
        Ok(Self {
            plant,
            cost,
            horizon,
            queries: 0,
        })
    }

    pub fn queries(&self) -> u64 {
        self.queries
    }
}

impl std::fmt::Debug for SimulatedOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SimulatedOracle")
            .field("dims", &self.dims())
            .field("horizon", &self.horizon)
            .field("queries", &self.queries)
            .finish_non_exhaustive()
    }
}

impl CostOracle for SimulatedOracle {
    fn dims(&self) -> (usize, usize) {
        (self.plant.m(), self.plant.n())
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn query(&mut self, gain: &DMatrix<f64>) -> f64 {
        self.queries += 1;
        truncated_cost(&self.plant, &self.cost, gain, self.horizon).unwrap_or(f64::NAN)
    }
}

/// How the filter state `f` starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterInit {
    /// `f^0 = J_T(K^0 + delta D^0)`, one extra oracle query before the loop.
    FirstProbe,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EscParams {
    pub gamma: f64,
    pub delta: f64,
    pub horizon: usize,
    pub iterations: u64,
    pub dither: DitherSpec,
    pub f0: FilterInit,
    pub k0: DMatrix<f64>,
}

impl EscParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidParams("horizon must be at least 1".into()));
        }
        if self.k0.shape() != (self.dither.rows(), self.dither.cols()) {
            return Err(Error::DimensionMismatch {
                context: "EscParams::dither",
                expected: self.k0.shape(),
                found: (self.dither.rows(), self.dither.cols()),
            });
        }
        if self.k0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("EscParams::k0"));
        }
        if let FilterInit::Value(v) = self.f0 {
            if !v.is_finite() {
                return Err(Error::NonFinite("EscParams::f0"));
            }
        }
        Ok(())
    }

    fn check_oracle(&self, oracle: &dyn CostOracle) -> Result<()> {
        if oracle.dims() != self.k0.shape() {
            return Err(Error::DimensionMismatch {
                context: "cost oracle",
                expected: self.k0.shape(),
                found: oracle.dims(),
            });
        }
        if oracle.horizon() != self.horizon {
            return Err(Error::InvalidParams(format!(
                "oracle horizon {} differs from params horizon {}",
                oracle.horizon(),
                self.horizon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EscState {
    pub k: u64,
    pub f: f64,
    pub gain: DMatrix<f64>,
}

impl EscState {
    fn is_bounded(&self) -> bool {
        self.f.is_finite()
            && self.f.abs() <= DIVERGENCE_THRESHOLD
            && self
                .gain
                .iter()
                .all(|v| v.is_finite() && v.abs() <= DIVERGENCE_THRESHOLD)
    }
}

/// Result of one [`esc_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: EscState,
    /// `J_T(K^k + delta D^k)` as returned by the oracle.
    pub probe_cost: f64,
    pub dither: DMatrix<f64>,
}

/// The update from iteration `k` to `k + 1`. Fails with `k` when the oracle
/// value or the updated state is non-finite or exceeds
/// [`DIVERGENCE_THRESHOLD`].
pub fn esc_step(
    state: &EscState,
    oracle: &mut dyn CostOracle,
    params: &EscParams,
) -> std::result::Result<StepOutcome, Diverged> {
    let dither = dither_matrix(&params.dither, state.k);
    let probe_gain = &state.gain + &dither * params.delta;
    let y = oracle.query(&probe_gain);
    if !y.is_finite() || y.abs() > DIVERGENCE_THRESHOLD {
        return Err(Diverged { k: state.k });
    }
    let innovation = y - state.f;
    let next = EscState {
        k: state.k + 1,
        f: state.f + params.gamma * innovation,
        gain: &state.gain - &dither * (params.gamma * 2.0 * innovation / params.delta),
    };
    if !next.is_bounded() {
        return Err(Diverged { k: state.k });
    }
    Ok(StepOutcome {
        next,
        probe_cost: y,
        dither,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Diverged {
    pub k: u64,
}

/// Verification-side data used to annotate records. None of it reaches the
/// update path.
#[derive(Debug, Clone, Copy, Default)]
pub struct Probes<'a> {
    /// Enables the spectral-radius column.
    pub plant: Option<&'a LtiPlant>,
    /// Together with `plant`, enables the relative-cost-error column.
    pub cost: Option<&'a CostSpec>,
    pub optimum: Option<&'a DareSolution>,
}

impl<'a> Probes<'a> {
    pub fn none() -> Self {
        Self::default()
    }

    fn relative_error(&self, gain: &DMatrix<f64>) -> Option<f64> {
        let (plant, cost, opt) = (self.plant?, self.cost?, self.optimum?);
        Some(match infinite_cost(plant, cost, gain) {
            Ok(j) => (j - opt.j_star) / opt.j_star,
            Err(_) => f64::INFINITY,
        })
    }

    fn spectral_radius(&self, probe_gain: &DMatrix<f64>) -> Option<f64> {
        let plant = self.plant?;
        closed_loop(plant, probe_gain)
            .and_then(|m| spectral_radius(&m))
            .ok()
            .or(Some(f64::INFINITY))
    }
}

/// One logged iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: u64,
    /// `K^k`, the gain before the update.
    pub gain: DMatrix<f64>,
    /// `f^k`, the filter state before the update.
    pub f: f64,
    /// `J_T(K^k + delta D^k)`.
    pub probe_cost: f64,
    /// Spectral radius of `A + B(K^k + delta D^k)`.
    pub spectral_radius: Option<f64>,
    /// `(J(K^k) - J*) / J*`.
    pub relative_error: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    Diverged { k: u64 },
}

/// Outcome of a run without the per-iteration records.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub status: RunStatus,
    pub iterations_completed: u64,
    pub final_state: EscState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub records: Vec<IterationRecord>,
    pub status: RunStatus,
    pub final_state: EscState,
}

/// Initial state `(0, f^0, K^0)`.
pub fn initial_state(params: &EscParams, oracle: &mut dyn CostOracle) -> Result<EscState> {
    params.validate()?;
    params.check_oracle(oracle)?;
    let f = match params.f0 {
        FilterInit::Value(v) => v,
        FilterInit::FirstProbe => {
            let probe = &params.k0 + dither_matrix(&params.dither, 0) * params.delta;
            let y = oracle.query(&probe);
            if !y.is_finite() {
                return Err(Error::NonFinite("initial filter probe"));
            }
            y
        }
    };
    Ok(EscState {
        k: 0,
        f,
        gain: params.k0.clone(),
    })
}

/// Runs the loop and hands every record to `observe` as soon as it exists.
pub fn run_with<F>(
    params: &EscParams,
    oracle: &mut dyn CostOracle,
    probes: Probes<'_>,
    mut observe: F,
) -> Result<RunSummary>
where
    F: FnMut(IterationRecord),
{
    let mut state = initial_state(params, oracle)?;
    let mut status = RunStatus::Completed;
    for _ in 0..params.iterations {
        let outcome = esc_step(&state, oracle, params);
        let (probe_cost, dither, next) = match outcome {
            Ok(o) => (o.probe_cost, o.dither, Some(o.next)),
            Err(d) => {
                status = RunStatus::Diverged { k: d.k };
                break;
            }
        };
        let probe_gain = &state.gain + &dither * params.delta;
        observe(IterationRecord {
            k: state.k,
            spectral_radius: probes.spectral_radius(&probe_gain),
            relative_error: probes.relative_error(&state.gain),
            gain: state.gain,
            f: state.f,
            probe_cost,
        });
        state = next.expect("successful step");
    }
    let iterations_completed = state.k;
    Ok(RunSummary {
        status,
        iterations_completed,
        final_state: state,
    })
}

/// Runs the loop and keeps every record.
pub fn run(params: &EscParams, oracle: &mut dyn CostOracle, probes: Probes<'_>) -> Result<RunLog> {
    let mut records = Vec::with_capacity(params.iterations.min(1 << 20) as usize);
    let summary = run_with(params, oracle, probes, |r| records.push(r))?;
    Ok(RunLog {
        records,
        status: summary.status,
        final_state: summary.final_state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dither::{canonical_spec, DitherSpec};
    use approx::assert_relative_eq;

    fn scalar_oracle(horizon: usize) -> SimulatedOracle {
        SimulatedOracle::new(
            LtiPlant::new(
                DMatrix::from_element(1, 1, 0.5),
                DMatrix::from_element(1, 1, 1.0),
            )
            .unwrap(),
            CostSpec::identity(1, 1),
            horizon,
        )
        .unwrap()
    }

    fn params(gamma: f64, delta: f64, horizon: usize, iterations: u64) -> EscParams {
        EscParams {
            gamma,
            delta,
            horizon,
            iterations,
            dither: canonical_spec(1, 1).unwrap(),
            f0: FilterInit::Value(0.0),
            k0: DMatrix::zeros(1, 1),
        }
    }

    #[test]
    fn zero_dither_keeps_gain() {
        let mut oracle = scalar_oracle(2);
        let p = params(0.1, 0.1, 2, 1);
        let state = EscState {
            k: 0,
            f: 0.0,
            gain: DMatrix::zeros(1, 1),
        };
        let out = esc_step(&state, &mut oracle, &p).unwrap();
        assert_eq!(out.next.gain, state.gain);
        assert_relative_eq!(out.next.f, 0.1 * out.probe_cost, epsilon = 1e-15);
        assert_relative_eq!(out.probe_cost, 0.625, epsilon = 1e-15);
    }

    #[test]
    fn unit_dither_step_by_hand() {
        let mut oracle = scalar_oracle(2);
        let p = params(0.1, 0.1, 2, 1);
        let state = EscState {
            k: 1,
            f: 0.0,
            gain: DMatrix::zeros(1, 1),
        };
        let out = esc_step(&state, &mut oracle, &p).unwrap();
        assert_relative_eq!(out.dither[(0, 0)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(out.probe_cost, 0.6868, epsilon = 1e-14);
        assert_relative_eq!(out.next.f, 0.06868, epsilon = 1e-14);
        assert_relative_eq!(out.next.gain[(0, 0)], -1.3736, epsilon = 1e-13);
        assert_eq!(out.next.k, 2);
    }

    #[test]
    fn zero_innovation_is_fixed_point() {
        let mut oracle = scalar_oracle(2);
        let p = params(0.1, 0.1, 2, 1);
        let state = EscState {
            k: 1,
            f: 0.6868,
            gain: DMatrix::zeros(1, 1),
        };
        let out = esc_step(&state, &mut oracle, &p).unwrap();
        assert!((out.next.gain[(0, 0)]).abs() < 1e-13);
        assert!((out.next.f - state.f).abs() < 1e-15);
    }

    #[test]
    fn zero_iterations_give_empty_log() {
        let mut oracle = scalar_oracle(5);
        let log = run(&params(0.1, 0.1, 5, 0), &mut oracle, Probes::none()).unwrap();
        assert!(log.records.is_empty());
        assert_eq!(log.status, RunStatus::Completed);
        assert_eq!(log.final_state.gain, DMatrix::zeros(1, 1));
        assert_eq!(log.final_state.k, 0);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut oracle = scalar_oracle(5);
        for p in [
            params(0.1, 0.0, 5, 1),
            params(0.0, 0.1, 5, 1),
            params(f64::NAN, 0.1, 5, 1),
        ] {
            assert!(matches!(
                run(&p, &mut oracle, Probes::none()),
                Err(Error::InvalidParams(_))
            ));
        }
        let mut p = params(0.1, 0.1, 5, 1);
        p.dither = DitherSpec::from_periods(1, 2, &[4, 4], &[0.0, 1.0]).unwrap();
        assert!(matches!(
            run(&p, &mut oracle, Probes::none()),
            Err(Error::DimensionMismatch { .. })
        ));
        // horizon disagreement between oracle and params
        assert!(run(&params(0.1, 0.1, 6, 1), &mut oracle, Probes::none()).is_err());
    }

    #[test]
    fn divergence_is_reported_with_partial_log() {
        let mut oracle = scalar_oracle(50);
        let log = run(&params(50.0, 0.1, 50, 1_000), &mut oracle, Probes::none()).unwrap();
        match log.status {
            RunStatus::Diverged { k } => assert_eq!(log.records.len() as u64, k),
            RunStatus::Completed => panic!("expected divergence"),
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let p = EscParams {
            f0: FilterInit::FirstProbe,
            ..params(1e-2, 0.1, 10, 500)
        };
        let a = run(&p, &mut scalar_oracle(10), Probes::none()).unwrap();
        let b = run(&p, &mut scalar_oracle(10), Probes::none()).unwrap();
        assert_eq!(a, b);
        let k: Vec<u64> = a.records.iter().map(|r| r.k).collect();
        assert_eq!(k, (0..500).collect::<Vec<_>>());
    }

    #[test]
    fn first_probe_init_uses_one_extra_query() {
        let mut oracle = scalar_oracle(10);
        let p = EscParams {
            f0: FilterInit::FirstProbe,
            ..params(1e-2, 0.1, 10, 7)
        };
        let log = run(&p, &mut oracle, Probes::none()).unwrap();
        assert_eq!(oracle.queries(), 8);
        assert_eq!(log.records[0].f, log.records[0].probe_cost);
    }
}
