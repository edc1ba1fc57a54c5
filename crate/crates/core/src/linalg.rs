//! Small dense linear-algebra helpers shared by the solver and its oracles.

use nalgebra::{DMatrix, Schur};

use crate::error::{Error, Result};

/// Largest absolute entry, `0.0` for an empty matrix.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Largest absolute entrywise asymmetry `|m_ij - m_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn ensure_square(m: &DMatrix<f64>, context: &'static str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            context,
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

pub(crate) fn ensure_shape(
    m: &DMatrix<f64>,
    expected: (usize, usize),
    context: &'static str,
) -> Result<()> {
    if m.shape() != expected {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            found: m.shape(),
        });
    }
    Ok(())
}

/// Spectral radius via a real Schur decomposition.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    ensure_square(m, "spectral_radius")?;
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spectral_radius"));
    }
    let scale = max_abs(m);
    if scale == 0.0 {
        return Ok(0.0);
    }
    // the radius is homogeneous, so decompose the unit-scaled matrix
    let unit = m / scale;
    // near-scalar matrices can stall the QR sweep at f64::EPSILON; relax gradually
    let schur = [f64::EPSILON, 1e-14, 1e-12]
        .into_iter()
        .find_map(|eps| Schur::try_new(unit.clone(), eps, 10_000))
        .ok_or(Error::NonFinite("spectral_radius (schur did not converge)"))?;
    Ok(scale
        * schur
            .complex_eigenvalues()
            .iter()
            .fold(0.0_f64, |acc, z| acc.max(z.norm())))
}

/// Numerical rank from the singular values, threshold `max(rows, cols) * sigma_max * rel_tol`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let sigma_max = sv.iter().cloned().fold(0.0_f64, f64::max);
    if sigma_max == 0.0 {
        return 0;
    }
    let threshold = m.nrows().max(m.ncols()) as f64 * sigma_max * rel_tol;
    sv.iter().filter(|&&s| s > threshold).count()
}

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

/// Least common multiple, `None` on overflow.
pub fn lcm(a: u64, b: u64) -> Option<u64> {
    if a == 0 || b == 0 {
        return Some(0);
    }
    (a / gcd(a, b)).checked_mul(b)
}
