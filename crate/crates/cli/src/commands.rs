use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use eslqr_core::averaging::{
    closeness_scaling, esc_field, estimate_error, horizon_for_gap, pack_esc_state, CostMode,
    PeriodicField, ScalingReport,
};
use eslqr_core::dither::{verify_orthonormality, Condition};
use eslqr_core::esc::{run_with, Probes, RunStatus, SimulatedOracle};
use eslqr_core::lti_cost::{infinite_cost, is_stabilizing, simulate_rollout, truncated_cost};
use eslqr_core::riccati::solve_dare;
use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::{
    check_gain_shape, from_matrix, to_matrix, ExperimentConfig, Matrix, RolloutGain,
};
use crate::error::{io_error, CliError};

/// Lossless text form of a double: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_error(path, e))?;
    fs::write(path, format!("{text}\n")).map_err(|e| io_error(path, e))?;
    println!("{text}");
    info!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct DareReport {
    #[serde(rename = "P_star")]
    p_star: Matrix,
    #[serde(rename = "K_star")]
    k_star: Matrix,
    #[serde(rename = "J_star")]
    j_star: f64,
    residual: f64,
    iterations: usize,
}

pub fn dare(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let plant = cfg.plant()?;
    let cost = cfg.cost(&plant)?;
    let sol = solve_dare(&plant, &cost)?;
    info!("riccati iteration converged in {} steps", sol.iterations);
    prepare_dir(out)?;
    write_json(
        &out.join("dare.json"),
        &DareReport {
            p_star: from_matrix(&sol.p_star),
            k_star: from_matrix(&sol.k_star),
            j_star: sol.j_star,
            residual: sol.residual,
            iterations: sol.iterations,
        },
    )
}

#[derive(Serialize, Deserialize)]
pub struct RunSummaryReport {
    pub status: String,
    pub diverged_at: Option<u64>,
    pub iterations_completed: u64,
    pub final_gain: Matrix,
    pub final_f: f64,
    pub initial_rel_err: Option<f64>,
    pub final_rel_err: Option<f64>,
    pub max_sigma: Option<f64>,
    pub j_star: Option<f64>,
    pub gamma: f64,
    pub delta: f64,
    pub horizon: usize,
    pub wall_time_s: f64,
}

pub fn run_esc(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let plant = cfg.plant()?;
    let cost = cfg.cost(&plant)?;
    let params = cfg.esc_params(&plant)?;
    if !is_stabilizing(&plant, &params.k0)? {
        warn!("initial gain does not stabilize the plant");
    }
    let optimum = if cfg.probes.compute_dare {
        Some(solve_dare(&plant, &cost)?)
    } else {
        None
    };
    let log_sigma = cfg.probes.log_spectral_radius;
    let probes = Probes {
        plant: (log_sigma || optimum.is_some()).then_some(&plant),
        cost: Some(&cost),
        optimum: optimum.as_ref(),
    };

    prepare_dir(out)?;
    let csv_path = out.join("run.csv");
    let mut writer = csv::Writer::from_path(&csv_path).map_err(|e| io_error(&csv_path, e))?;
    let (m, n) = (plant.m(), plant.n());
    let mut header: Vec<String> = ["k", "J_probe", "f", "rel_err", "sigma_max"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..m).flat_map(|i| (0..n).map(move |j| format!("K_{i}_{j}"))));
    writer
        .write_record(&header)
        .map_err(|e| io_error(&csv_path, e))?;

    let mut oracle = SimulatedOracle::new(plant.clone(), cost.clone(), params.horizon)?;
    let every = cfg.output.log_every.max(1);
    let progress = (params.iterations / 10).max(1);
    let mut write_err = None;
    let mut initial_rel_err = None;
    let mut max_sigma: Option<f64> = None;
    let start = Instant::now();
    let summary = run_with(&params, &mut oracle, probes, |rec| {
        if rec.k == 0 {
            initial_rel_err = rec.relative_error;
        }
        let sigma = rec.spectral_radius.filter(|_| log_sigma);
        if let Some(s) = sigma {
            max_sigma = Some(max_sigma.map_or(s, |m| m.max(s)));
        }
        if rec.k % progress == 0 {
            info!(
                "k = {}, J_probe = {:.6e}, rel_err = {}",
                rec.k,
                rec.probe_cost,
                rec.relative_error
                    .map_or("-".into(), |e| format!("{e:.3e}"))
            );
        }
        if write_err.is_some() || rec.k % every != 0 {
            return;
        }
        let mut row = vec![
            rec.k.to_string(),
            fmt_f64(rec.probe_cost),
            fmt_f64(rec.f),
            fmt_opt(rec.relative_error),
            fmt_opt(sigma),
        ];
        row.extend(
            (0..m)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .map(|ij| fmt_f64(rec.gain[ij])),
        );
        if let Err(e) = writer.write_record(&row) {
            write_err = Some(e);
        }
    })?;
    let wall = start.elapsed().as_secs_f64();
    if let Some(e) = write_err {
        return Err(io_error(&csv_path, e));
    }
    writer.flush().map_err(|e| io_error(&csv_path, e))?;
    info!("wrote {}", csv_path.display());

    let final_gain = &summary.final_state.gain;
    let final_rel_err =
        optimum
            .as_ref()
            .map(|opt| match infinite_cost(&plant, &cost, final_gain) {
                Ok(j) => (j - opt.j_star) / opt.j_star,
                Err(_) => f64::INFINITY,
            });
    let (status, diverged_at) = match summary.status {
        RunStatus::Completed => ("completed", None),
        RunStatus::Diverged { k } => ("diverged", Some(k)),
    };
    write_json(
        &out.join("summary.json"),
        &RunSummaryReport {
            status: status.into(),
            diverged_at,
            iterations_completed: summary.iterations_completed,
            final_gain: from_matrix(final_gain),
            final_f: summary.final_state.f,
            initial_rel_err,
            final_rel_err,
            max_sigma,
            j_star: optimum.as_ref().map(|o| o.j_star),
            gamma: params.gamma,
            delta: params.delta,
            horizon: params.horizon,
            wall_time_s: wall,
        },
    )?;
    match diverged_at {
        Some(k) => Err(CliError::Diverged(k)),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct FailureReport {
    condition: &'static str,
    indices: Vec<usize>,
    value: f64,
    expected: f64,
}

#[derive(Serialize)]
struct DitherReport {
    rows: usize,
    cols: usize,
    k_prd: u64,
    periods: Vec<f64>,
    phases: Vec<f64>,
    tol: f64,
    zero_mean_max_dev: f64,
    orthonormal_max_dev: f64,
    triple_max_dev: f64,
    failures: Vec<FailureReport>,
    passed: bool,
}

pub fn check_dither(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let [rows, cols] = match cfg.dither_check.shape {
        Some(shape) => shape,
        None => {
            let plant = cfg.plant()?;
            [plant.m(), plant.n()]
        }
    };
    let spec = cfg.dither(rows, cols)?;
    let tol = cfg
        .dither_check
        .tol
        .unwrap_or(eslqr_core::dither::ORTHONORMALITY_TOL);
    let r = verify_orthonormality(&spec, tol);
    prepare_dir(out)?;
    write_json(
        &out.join("dither.json"),
        &DitherReport {
            rows,
            cols,
            k_prd: r.k_prd,
            periods: spec.periods(),
            phases: spec.phases().to_vec(),
            tol,
            zero_mean_max_dev: r.zero_mean_max_dev,
            orthonormal_max_dev: r.orthonormal_max_dev,
            triple_max_dev: r.triple_max_dev,
            failures: r
                .failures
                .iter()
                .map(|f| FailureReport {
                    condition: match f.condition {
                        Condition::ZeroMean => "zero_mean",
                        Condition::Orthonormal => "orthonormal",
                        Condition::TripleProduct => "triple_product",
                    },
                    indices: f.indices.clone(),
                    value: f.value,
                    expected: f.expected,
                })
                .collect(),
            passed: r.passed,
        },
    )?;
    if r.passed {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!(
            "{} orthonormality condition(s) violated",
            r.failures.len()
        )))
    }
}

#[derive(Serialize)]
struct GapReport {
    horizons: Vec<usize>,
    gaps: Vec<f64>,
    horizon: usize,
    passed: bool,
}

#[derive(Serialize)]
struct GradientReport {
    deltas: Vec<f64>,
    errors: Vec<f64>,
    truncated_errors: Vec<f64>,
    ratios: Vec<f64>,
    passed: bool,
}

#[derive(Serialize)]
struct ClosenessReport {
    gammas: Vec<f64>,
    steps: Vec<usize>,
    sup_deviations: Vec<Option<f64>>,
    ratios: Vec<f64>,
    passed: bool,
}

impl From<ScalingReport> for ClosenessReport {
    fn from(r: ScalingReport) -> Self {
        Self {
            gammas: r.gammas,
            steps: r.steps,
            sup_deviations: r
                .sup_deviations
                .iter()
                .map(|d| d.is_finite().then_some(*d))
                .collect(),
            ratios: r.ratios,
            passed: r.passed,
        }
    }
}

#[derive(Serialize)]
struct AvgCheckReport {
    truncation_gap: GapReport,
    gradient_estimate: GradientReport,
    closeness_toy: ClosenessReport,
    closeness_esc: ClosenessReport,
    passed: bool,
}

pub fn avg_check(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let plant = cfg.plant()?;
    let cost = cfg.cost(&plant)?;
    let params = cfg.esc_params(&plant)?;
    let k0 = &params.k0;
    if !is_stabilizing(&plant, k0)? {
        return Err(CliError::Solver(
            "avg-check needs a stabilizing initial gain".into(),
        ));
    }
    let ac = &cfg.avg_check;

    let search = horizon_for_gap(&plant, &cost, k0, ac.gap_tol, 1 << 24)?;
    let gap_ok =
        search.gaps.windows(2).all(|w| w[1] <= w[0]) && search.gaps.iter().all(|&g| g >= 0.0);
    let truncation_gap = GapReport {
        passed: gap_ok,
        horizons: search.horizons,
        gaps: search.gaps,
        horizon: search.horizon,
    };

    let mut errors = Vec::new();
    let mut truncated_errors = Vec::new();
    for &d in &ac.deltas {
        errors.push(estimate_error(
            &plant,
            &cost,
            k0,
            d,
            &params.dither,
            CostMode::Infinite,
        )?);
        truncated_errors.push(estimate_error(
            &plant,
            &cost,
            k0,
            d,
            &params.dither,
            CostMode::Truncated(params.horizon),
        )?);
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[1] / w[0]).collect();
    let gradient_estimate = GradientReport {
        passed: ratios.len() >= 2 && ratios.iter().all(|r| (0.15..=0.4).contains(r)),
        deltas: ac.deltas.clone(),
        errors,
        truncated_errors,
        ratios,
    };

    let toy = PeriodicField::new(1, 4, |x, k| {
        DVector::from_element(1, -x[0] + (std::f64::consts::FRAC_PI_2 * k as f64).sin())
    })?;
    let closeness_toy: ClosenessReport = closeness_scaling(
        &toy,
        &DVector::from_element(1, 1.0),
        &[0.04, 0.02, 0.01, 0.005],
        10.0,
    )?
    .into();

    let field = esc_field(
        &plant,
        &cost,
        params.horizon,
        ac.closeness_delta,
        &params.dither,
    )?;
    let chi0 = pack_esc_state(truncated_cost(&plant, &cost, k0, params.horizon)?, k0);
    let closeness_esc: ClosenessReport =
        closeness_scaling(&field, &chi0, &ac.gamma_grid, ac.theta)?.into();

    let passed = truncation_gap.passed
        && gradient_estimate.passed
        && closeness_toy.passed
        && closeness_esc.passed;
    prepare_dir(out)?;
    write_json(
        &out.join("avg_check.json"),
        &AvgCheckReport {
            truncation_gap,
            gradient_estimate,
            closeness_toy,
            closeness_esc,
            passed,
        },
    )?;
    if passed {
        Ok(())
    } else {
        Err(CliError::CheckFailed(
            "averaging checks did not all pass".into(),
        ))
    }
}

#[derive(Deserialize)]
struct FinalGain {
    final_gain: Matrix,
}

fn rollout_gain(cfg: &ExperimentConfig, out: &Path) -> Result<DMatrix<f64>, CliError> {
    let plant = cfg.plant()?;
    let gain = match &cfg.rollout.gain {
        RolloutGain::K0 => cfg.initial_gain(&plant)?,
        RolloutGain::Inline(k) => to_matrix(k, "rollout.gain")?,
        RolloutGain::Final => {
            let path: PathBuf = cfg
                .rollout
                .summary
                .clone()
                .unwrap_or_else(|| out.join("summary.json"));
            let text = fs::read_to_string(&path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let s: FinalGain = serde_json::from_str(&text).map_err(|e| {
                CliError::Config(format!("malformed summary {}: {e}", path.display()))
            })?;
            to_matrix(&s.final_gain, "summary final_gain")?
        }
    };
    check_gain_shape(&gain, &plant, "rollout gain")?;
    Ok(gain)
}

pub fn rollout(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let plant = cfg.plant()?;
    let cost = cfg.cost(&plant)?;
    let gain = rollout_gain(cfg, out)?;
    let horizon = cfg
        .rollout
        .horizon
        .ok_or_else(|| CliError::Config("rollout.horizon is not set".into()))?;
    prepare_dir(out)?;
    let path = out.join("rollout.csv");
    let mut writer = csv::Writer::from_path(&path).map_err(|e| io_error(&path, e))?;
    writer
        .write_record(["ic", "t", "norm_x", "stage_cost"])
        .map_err(|e| io_error(&path, e))?;
    let n = plant.n();
    for i in 0..n {
        let x0 = DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 });
        let r = simulate_rollout(&plant, &cost, &gain, &x0, horizon)?;
        for (t, x) in r.states.iter().enumerate() {
            writer
                .write_record([
                    i.to_string(),
                    t.to_string(),
                    fmt_f64(x.norm()),
                    fmt_opt(r.stage_costs.get(t).copied()),
                ])
                .map_err(|e| io_error(&path, e))?;
        }
        let tenth = r.states.iter().position(|x| x.norm() < 0.1);
        info!(
            "e_{i}: |x_t| below 10% after {}",
            tenth.map_or("more than the horizon".into(), |t| format!("{t} steps"))
        );
    }
    writer.flush().map_err(|e| io_error(&path, e))?;
    info!("wrote {}", path.display());
    Ok(())
}
