//! JSON experiment configuration: the on-disk schema, default completion and
//! resolution into core types.

use std::path::{Path, PathBuf};

use eslqr_core::dfim::{
    build_dfim, contracted_open_loop_gain, random_cost, DfimParams, DfimPreset,
};
use eslqr_core::dither::{canonical_spec, DitherSpec};
use eslqr_core::esc::{EscParams, FilterInit};
use eslqr_core::lti_cost::{CostSpec, LtiPlant};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Row-major nested arrays, `[[a00, a01], [a10, a11]]`.
pub type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plant: PlantSource,
    /// Overrides of the motor parameters when `plant` is the `dfim` preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dfim: Option<DfimParamsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostSource>,
    #[serde(default)]
    pub esc: EscConfig,
    #[serde(default)]
    pub probes: ProbeConfig,
    #[serde(default)]
    pub dither_check: DitherCheckConfig,
    #[serde(default)]
    pub avg_check: AvgCheckConfig,
    #[serde(default)]
    pub rollout: RolloutConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            plant: PlantSource::Preset(PresetName::Scalar),
            dfim: None,
            cost: None,
            esc: EscConfig::default(),
            probes: ProbeConfig::default(),
            dither_check: DitherCheckConfig::default(),
            avg_check: AvgCheckConfig::default(),
            rollout: RolloutConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    /// `A = 0.5`, `B = 1`, `Q = R = 1`.
    Scalar,
    Dfim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantSource {
    Preset(PresetName),
    Inline { a: Matrix, b: Matrix },
    Random { n: usize, m: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DfimParamsConfig {
    pub l1: f64,
    pub l2: f64,
    pub lm: f64,
    pub r1: f64,
    pub r2: f64,
    pub omega0: f64,
    pub omega_r: f64,
    pub dt: f64,
    pub pole_pairs: u32,
}

impl Default for DfimParamsConfig {
    fn default() -> Self {
        DfimParams::default().into()
    }
}

impl From<DfimParams> for DfimParamsConfig {
    fn from(p: DfimParams) -> Self {
        Self {
            l1: p.l1,
            l2: p.l2,
            lm: p.lm,
            r1: p.r1,
            r2: p.r2,
            omega0: p.omega0,
            omega_r: p.omega_r,
            dt: p.dt,
            pole_pairs: p.pole_pairs,
        }
    }
}

impl From<DfimParamsConfig> for DfimParams {
    fn from(p: DfimParamsConfig) -> Self {
        Self {
            l1: p.l1,
            l2: p.l2,
            lm: p.lm,
            r1: p.r1,
            r2: p.r2,
            omega0: p.omega0,
            omega_r: p.omega_r,
            dt: p.dt,
            pole_pairs: p.pole_pairs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSource {
    Identity,
    Inline {
        q: Matrix,
        r: Matrix,
    },
    Random {
        seed: u64,
        #[serde(default = "default_eig_range")]
        eig_range: [f64; 2],
    },
}

fn default_eig_range() -> [f64; 2] {
    let (lo, hi) = eslqr_core::dfim::DEFAULT_EIG_RANGE;
    [lo, hi]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DitherSource {
    Canonical,
    /// Integer per-entry periods, row-major.
    Periods {
        periods: Vec<u64>,
        phases: Vec<f64>,
    },
    /// Integer harmonics over a common period, row-major.
    Harmonics {
        k_prd: u64,
        harmonics: Vec<u64>,
        phases: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FilterStart {
    FirstProbe,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GainSource {
    Zero,
    /// `A + B K0 = c A` with the closed-loop spectral radius `radius`.
    Contracted {
        radius: f64,
    },
    Inline(Matrix),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EscConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dither: Option<DitherSource>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f0: Option<FilterStart>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k0: Option<GainSource>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub compute_dare: bool,
    pub log_spectral_radius: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            compute_dare: true,
            log_spectral_radius: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DitherCheckConfig {
    /// `[rows, cols]`; defaults to the gain shape of the plant.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape: Option<[usize; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AvgCheckConfig {
    /// Amplitudes for the gradient-estimate scaling check, each half the last.
    pub deltas: Vec<f64>,
    /// Amplitude of the loop field in the closeness check.
    pub closeness_delta: f64,
    pub gamma_grid: Vec<f64>,
    pub theta: f64,
    pub gap_tol: f64,
}

impl Default for AvgCheckConfig {
    fn default() -> Self {
        Self {
            deltas: vec![0.2, 0.1, 0.05],
            closeness_delta: 0.1,
            gamma_grid: vec![0.02, 0.01, 0.005, 0.0025],
            theta: 5.0,
            gap_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RolloutGain {
    /// The loop's starting gain.
    K0,
    /// `final_gain` of a `run-esc` summary.
    Final,
    Inline(Matrix),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    pub gain: RolloutGain,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// Summary read for `gain = "final"`; defaults to `<out>/summary.json`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<PathBuf>,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            gain: RolloutGain::K0,
            horizon: None,
            summary: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write every `log_every`-th iteration to the CSV log.
    pub log_every: u64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            log_every: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("malformed config {}: {e}", path.display())))
    }

    fn preset(&self) -> Option<PresetName> {
        match self.plant {
            PlantSource::Preset(p) => Some(p),
            _ => None,
        }
    }

    /// Fills every defaulted field explicitly, so the result reproduces the
    /// same run without relying on defaults.
    pub fn completed(mut self) -> Self {
        let dfim = DfimPreset::default();
        let preset = self.preset();
        if preset == Some(PresetName::Dfim) && self.dfim.is_none() {
            self.dfim = Some(dfim.params.into());
        }
        if self.cost.is_none() {
            self.cost = Some(match preset {
                Some(PresetName::Dfim) => CostSource::Random {
                    seed: dfim.cost_seed,
                    eig_range: [dfim.eig_range.0, dfim.eig_range.1],
                },
                _ => CostSource::Identity,
            });
        }
        let esc = &mut self.esc;
        let (gamma, delta, horizon, iterations, k0) = match preset {
            Some(PresetName::Dfim) => (
                dfim.gamma,
                dfim.delta,
                dfim.horizon,
                dfim.iterations,
                GainSource::Contracted {
                    radius: dfim.initial_radius,
                },
            ),
            _ => (1e-3, 1e-2, 50, 200_000, GainSource::Zero),
        };
        esc.gamma.get_or_insert(gamma);
        esc.delta.get_or_insert(delta);
        esc.horizon.get_or_insert(horizon);
        esc.iterations.get_or_insert(iterations);
        esc.dither.get_or_insert(DitherSource::Canonical);
        esc.f0.get_or_insert(FilterStart::FirstProbe);
        esc.k0.get_or_insert(k0);
        self.dither_check
            .tol
            .get_or_insert(eslqr_core::dither::ORTHONORMALITY_TOL);
        let h = self.esc.horizon;
        self.rollout.horizon = self.rollout.horizon.or(h);
        self
    }

    /// Replaces the seed of every random plant or cost source.
    pub fn with_seed(mut self, seed: u64) -> Self {
        if let PlantSource::Random { seed: s, .. } = &mut self.plant {
            *s = seed;
        }
        if let Some(CostSource::Random { seed: s, .. }) = &mut self.cost {
            *s = seed;
        }
        self
    }

    pub fn plant(&self) -> Result<LtiPlant, CliError> {
        Ok(match &self.plant {
            PlantSource::Preset(PresetName::Scalar) => LtiPlant::new(
                DMatrix::from_element(1, 1, 0.5),
                DMatrix::from_element(1, 1, 1.0),
            )?,
            PlantSource::Preset(PresetName::Dfim) => {
                let params: DfimParams = self.dfim.unwrap_or_default().into();
                params.validate()?;
                build_dfim(&params)?
            }
            PlantSource::Inline { a, b } => {
                LtiPlant::new(to_matrix(a, "plant.a")?, to_matrix(b, "plant.b")?)?
            }
            PlantSource::Random { n, m, seed } => {
                if *n == 0 || *m == 0 {
                    return Err(CliError::Config("random plant needs n, m >= 1".into()));
                }
                LtiPlant::random(*n, *m, *seed)?
            }
        })
    }

    pub fn cost(&self, plant: &LtiPlant) -> Result<CostSpec, CliError> {
        let (n, m) = (plant.n(), plant.m());
        let cost = match self.cost.as_ref().unwrap_or(&CostSource::Identity) {
            CostSource::Identity => CostSpec::identity(n, m),
            CostSource::Inline { q, r } => {
                CostSpec::new(to_matrix(q, "cost.q")?, to_matrix(r, "cost.r")?)?
            }
            CostSource::Random { seed, eig_range } => {
                random_cost(n, m, *seed, (eig_range[0], eig_range[1]))?
            }
        };
        if cost.q().shape() != (n, n) || cost.r().shape() != (m, m) {
            return Err(CliError::Config(format!(
                "cost shapes {:?}/{:?} do not match plant (n = {n}, m = {m})",
                cost.q().shape(),
                cost.r().shape()
            )));
        }
        Ok(cost)
    }

    pub fn dither(&self, rows: usize, cols: usize) -> Result<DitherSpec, CliError> {
        Ok(
            match self.esc.dither.as_ref().unwrap_or(&DitherSource::Canonical) {
                DitherSource::Canonical => canonical_spec(rows, cols)?,
                DitherSource::Periods { periods, phases } => {
                    DitherSpec::from_periods(rows, cols, periods, phases)?
                }
                DitherSource::Harmonics {
                    k_prd,
                    harmonics,
                    phases,
                } => DitherSpec::from_harmonics(
                    rows,
                    cols,
                    *k_prd,
                    harmonics.clone(),
                    phases.clone(),
                )?,
            },
        )
    }

    pub fn initial_gain(&self, plant: &LtiPlant) -> Result<DMatrix<f64>, CliError> {
        let k0 = match self.esc.k0.as_ref().unwrap_or(&GainSource::Zero) {
            GainSource::Zero => DMatrix::zeros(plant.m(), plant.n()),
            GainSource::Contracted { radius } => contracted_open_loop_gain(plant, *radius)?,
            GainSource::Inline(k) => to_matrix(k, "esc.k0")?,
        };
        check_gain_shape(&k0, plant, "esc.k0")?;
        Ok(k0)
    }

    /// Loop parameters of a completed config.
    pub fn esc_params(&self, plant: &LtiPlant) -> Result<EscParams, CliError> {
        let esc = &self.esc;
        let missing = |name: &str| CliError::Config(format!("esc.{name} is not set"));
        let params = EscParams {
            gamma: esc.gamma.ok_or_else(|| missing("gamma"))?,
            delta: esc.delta.ok_or_else(|| missing("delta"))?,
            horizon: esc.horizon.ok_or_else(|| missing("horizon"))?,
            iterations: esc.iterations.ok_or_else(|| missing("iterations"))?,
            dither: self.dither(plant.m(), plant.n())?,
            f0: match esc.f0.unwrap_or(FilterStart::FirstProbe) {
                FilterStart::FirstProbe => FilterInit::FirstProbe,
                FilterStart::Value(v) => FilterInit::Value(v),
            },
            k0: self.initial_gain(plant)?,
        };
        params.validate()?;
        Ok(params)
    }
}

pub fn check_gain_shape(k: &DMatrix<f64>, plant: &LtiPlant, what: &str) -> Result<(), CliError> {
    if k.shape() != (plant.m(), plant.n()) {
        return Err(CliError::Config(format!(
            "{what} is {}x{}, plant needs {}x{}",
            k.nrows(),
            k.ncols(),
            plant.m(),
            plant.n()
        )));
    }
    Ok(())
}

pub fn to_matrix(rows: &Matrix, what: &str) -> Result<DMatrix<f64>, CliError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(CliError::Config(format!(
            "{what} must be a non-empty matrix"
        )));
    }
    if rows.iter().any(|row| row.len() != c) {
        return Err(CliError::Config(format!("{what} has ragged rows")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CliError::Config(format!("{what} has non-finite entries")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn from_matrix(m: &DMatrix<f64>) -> Matrix {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn completion_is_idempotent() {
        for plant in [
            PlantSource::Preset(PresetName::Scalar),
            PlantSource::Preset(PresetName::Dfim),
            PlantSource::Random {
                n: 3,
                m: 2,
                seed: 1,
            },
        ] {
            let c = ExperimentConfig {
                plant,
                ..Default::default()
            }
            .completed();
            assert_eq!(c.clone().completed(), c);
            let text = serde_json::to_string_pretty(&c).unwrap();
            let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn dfim_completion_uses_the_preset() {
        let c = ExperimentConfig {
            plant: PlantSource::Preset(PresetName::Dfim),
            ..Default::default()
        }
        .completed();
        let plant = c.plant().unwrap();
        let params = c.esc_params(&plant).unwrap();
        let preset = DfimPreset::default();
        assert_eq!(params, preset.esc_params(&plant).unwrap());
        assert_eq!(c.cost(&plant).unwrap(), preset.cost().unwrap());
    }

    #[test]
    fn externally_tagged_sources_parse() {
        let c: ExperimentConfig = serde_json::from_str(
            r#"{
                "plant": {"inline": {"a": [[1, 0], [0, 1]], "b": [[1], [0]]}},
                "cost": {"random": {"seed": 3}},
                "esc": {"dither": {"periods": {"periods": [4, 4], "phases": [0, 1.5707963267948966]}},
                        "f0": {"value": 0.5}, "k0": {"inline": [[0.1, 0.2]]}}
            }"#,
        )
        .unwrap();
        assert!(matches!(c.cost, Some(CostSource::Random { seed: 3, .. })));
        let plant = c.plant().unwrap();
        assert_eq!(c.initial_gain(&plant).unwrap().shape(), (1, 2));
    }

    #[test]
    fn ragged_and_unknown_fields_rejected() {
        assert!(to_matrix(&vec![vec![1.0, 2.0], vec![3.0]], "m").is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(
            r#"{"plant": {"preset": "scalar"}, "bogus": 1}"#
        )
        .is_err());
    }
}
