//! Sinusoidal dither matrices `D^k` and their orthonormality sums.
//!
//! Every entry `p` of an `m x n` dither is a sampled sinusoid
//! `sin(2 pi w_p k / k_prd + phi_p)` sharing one integer common period
//! `k_prd`; `w_p` is the entry's integer harmonic, so its own period is
//! `k_prd / w_p` samples. Specs built from integer periods use
//! `k_prd = lcm(periods)` and `w_p = k_prd / period_p`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{lcm, CompensatedSum};

/// Default tolerance for [`verify_orthonormality`].
pub const ORTHONORMALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DitherSpec {
    rows: usize,
    cols: usize,
    k_prd: u64,
    /// Row-major `rows * cols` harmonics.
    harmonics: Vec<u64>,
    /// Row-major phases in radians.
    phases: Vec<f64>,
}

impl DitherSpec {
    /// Builds a spec from integer per-entry periods (row-major). `k_prd` is
    /// their least common multiple. Periods below 3 are rejected.
    pub fn from_periods(rows: usize, cols: usize, periods: &[u64], phases: &[f64]) -> Result<Self> {
        check_len(rows, cols, periods.len(), phases.len())?;
        if let Some(p) = periods.iter().find(|&&p| p < 3) {
            return Err(Error::InvalidDither(format!("period {p} is below 3")));
        }
        let k_prd = periods
            .iter()
            .try_fold(1_u64, |acc, &p| lcm(acc, p))
            .ok_or_else(|| Error::InvalidDither("common period overflows u64".into()))?;
        let harmonics = periods.iter().map(|&p| k_prd / p).collect();
        Self::from_harmonics(rows, cols, k_prd, harmonics, phases.to_vec())
    }

    /// Builds a spec from a common period and per-entry harmonics. Each
    /// harmonic must satisfy `0 < w < k_prd / 2`, i.e. a per-entry period
    /// strictly greater than two samples.
    pub fn from_harmonics(
        rows: usize,
        cols: usize,
        k_prd: u64,
        harmonics: Vec<u64>,
        phases: Vec<f64>,
    ) -> Result<Self> {
        check_len(rows, cols, harmonics.len(), phases.len())?;
        if k_prd < 3 {
            return Err(Error::InvalidDither(format!(
                "common period {k_prd} is below 3"
            )));
        }
        for &w in &harmonics {
            if w == 0 || 2 * w >= k_prd {
                return Err(Error::InvalidDither(format!(
                    "harmonic {w} outside (0, {}) for common period {k_prd}",
                    k_prd.div_ceil(2)
                )));
            }
        }
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidDither("non-finite phase".into()));
        }
        // the common period must be the smallest one shared by all entries
        let period_lcm = harmonics
            .iter()
            .try_fold(1_u64, |acc, &w| {
                lcm(acc, k_prd / crate::linalg::gcd(k_prd, w))
            })
            .ok_or_else(|| Error::InvalidDither("common period overflows u64".into()))?;
        if period_lcm != k_prd {
            return Err(Error::InvalidDither(format!(
                "k_prd {k_prd} is not the least common period (entries repeat every {period_lcm})"
            )));
        }
        Ok(Self {
            rows,
            cols,
            k_prd,
            harmonics,
            phases,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.harmonics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.harmonics.is_empty()
    }

    pub fn k_prd(&self) -> u64 {
        self.k_prd
    }

    pub fn harmonics(&self) -> &[u64] {
        &self.harmonics
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// Per-entry periods `k_prd / w` (row-major), possibly fractional.
    pub fn periods(&self) -> Vec<f64> {
        self.harmonics
            .iter()
            .map(|&w| self.k_prd as f64 / w as f64)
            .collect()
    }

    /// Value of entry `p` (row-major) at step `k`.
    pub fn entry(&self, p: usize, k: u64) -> f64 {
        // reduce exactly so that k and k + k_prd evaluate identically
        let w = self.harmonics[p] as u128;
        let step = ((w * (k as u128)) % self.k_prd as u128) as f64;
        (2.0 * PI * step / self.k_prd as f64 + self.phases[p]).sin()
    }

    /// Validates the spec against its orthonormality sums.
    pub fn validated(self, tol: f64) -> Result<Self> {
        let report = verify_orthonormality(&self, tol);
        if !report.passed {
            let first = report
                .failures
                .first()
                .map(|f| format!("{f:?}"))
                .unwrap_or_default();
            return Err(Error::InvalidDither(format!(
                "orthonormality sums fail at tol {tol:e}: {first}"
            )));
        }
        Ok(self)
    }
}

fn check_len(rows: usize, cols: usize, a: usize, b: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidDither(
            "dither needs at least one entry".into(),
        ));
    }
    if a != rows * cols || b != rows * cols {
        return Err(Error::InvalidDither(format!(
            "expected {} entries, got {a} periods and {b} phases",
            rows * cols
        )));
    }
    Ok(())
}

/// `D^k`, entrywise `sin(2 pi w_ij k / k_prd + phi_ij)`.
pub fn dither_matrix(spec: &DitherSpec, k: u64) -> DMatrix<f64> {
    DMatrix::from_fn(spec.rows, spec.cols, |i, j| {
        spec.entry(i * spec.cols + j, k)
    })
}

/// Pairs of entries share a harmonic, one with phase 0 and one with phase
/// pi/2. Pair `j` (zero-based) gets harmonic `2j + 1` and the common period
/// is `4 * pairs`. Sums, differences and triple combinations of odd
/// harmonics never vanish modulo an even common period, so every
/// orthonormality sum holds exactly.
pub fn canonical_spec(rows: usize, cols: usize) -> Result<DitherSpec> {
    let entries = rows * cols;
    if entries == 0 {
        return Err(Error::InvalidDither(
            "dither needs at least one entry".into(),
        ));
    }
    let pairs = entries.div_ceil(2) as u64;
    let harmonics = (0..entries as u64).map(|p| 2 * (p / 2) + 1).collect();
    let phases = (0..entries)
        .map(|p| if p % 2 == 0 { 0.0 } else { FRAC_PI_2 })
        .collect();
    DitherSpec::from_harmonics(rows, cols, 4 * pairs, harmonics, phases)
}

/// Which orthonormality sum a failure belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// Each entry sums to zero over a period.
    ZeroMean,
    /// Pairwise products sum to `k_prd / 2` on the diagonal and zero off it.
    Orthonormal,
    /// Products of three distinct entries sum to zero.
    TripleProduct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionFailure {
    pub condition: Condition,
    /// Row-major entry indices involved.
    pub indices: Vec<usize>,
    pub value: f64,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalityReport {
    pub k_prd: u64,
    pub tol: f64,
    pub zero_mean_max_dev: f64,
    pub orthonormal_max_dev: f64,
    pub triple_max_dev: f64,
    pub failures: Vec<ConditionFailure>,
    pub passed: bool,
}

/// Cap on recorded failures; deviations are still tracked for every index set.
const MAX_RECORDED_FAILURES: usize = 64;

/// Evaluates the three orthonormality sums over `k = 1..=k_prd` with
/// compensated summation.
pub fn verify_orthonormality(spec: &DitherSpec, tol: f64) -> OrthonormalityReport {
    let entries = spec.len();
    let period = spec.k_prd as usize;
    // samples[p][k-1] = entry p at step k
    let samples: Vec<Vec<f64>> = (0..entries)
        .map(|p| (1..=spec.k_prd).map(|k| spec.entry(p, k)).collect())
        .collect();

    let mut failures = Vec::new();
    let mut record = |condition, indices: Vec<usize>, value: f64, expected: f64, dev: f64| {
        if dev > tol && failures.len() < MAX_RECORDED_FAILURES {
            failures.push(ConditionFailure {
                condition,
                indices,
                value,
                expected,
            });
        }
    };

    let mut zero_mean_max_dev = 0.0_f64;
    for (p, s) in samples.iter().enumerate() {
        let value = s.iter().copied().collect::<CompensatedSum>().value();
        zero_mean_max_dev = zero_mean_max_dev.max(value.abs());
        record(Condition::ZeroMean, vec![p], value, 0.0, value.abs());
    }

    let mut orthonormal_max_dev = 0.0_f64;
    for p in 0..entries {
        for q in p..entries {
            let value = (0..period)
                .map(|k| samples[p][k] * samples[q][k])
                .collect::<CompensatedSum>()
                .value();
            let expected = if p == q { period as f64 / 2.0 } else { 0.0 };
            let dev = (value - expected).abs();
            orthonormal_max_dev = orthonormal_max_dev.max(dev);
            record(Condition::Orthonormal, vec![p, q], value, expected, dev);
        }
    }

    let mut triple_max_dev = 0.0_f64;
    let mut pq = vec![0.0; period];
    for (p, sp) in samples.iter().enumerate() {
        for (q, sq) in samples.iter().enumerate().skip(p + 1) {
            for ((v, a), b) in pq.iter_mut().zip(sp).zip(sq) {
                *v = a * b;
            }
            for (r, sr) in samples.iter().enumerate().skip(q + 1) {
                let value = pq
                    .iter()
                    .zip(sr)
                    .map(|(a, b)| a * b)
                    .collect::<CompensatedSum>()
                    .value();
                triple_max_dev = triple_max_dev.max(value.abs());
                record(
                    Condition::TripleProduct,
                    vec![p, q, r],
                    value,
                    0.0,
                    value.abs(),
                );
            }
        }
    }

    let passed = zero_mean_max_dev <= tol && orthonormal_max_dev <= tol && triple_max_dev <= tol;
    OrthonormalityReport {
        k_prd: spec.k_prd,
        tol,
        zero_mean_max_dev,
        orthonormal_max_dev,
        triple_max_dev,
        failures,
        passed,
    }
}
