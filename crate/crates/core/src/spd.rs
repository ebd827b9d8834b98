//! Dense symmetric-positive-definite kernel.
//!
//! Everything that touches a covariance matrix numerically goes through
//! here: the plain (unpivoted) Cholesky factorization `Σ = L·Lᵀ`, the
//! triangular solves built on it, the `Lᵀw` transform used for ranking,
//! and the diagonal-jitter ladder that rescues semi-definite estimates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest diagonal jitter tried by [`condition_spd`] unless told otherwise.
pub const DEFAULT_MAX_JITTER: f64 = 1e-6;

/// Smallest non-zero rung of the jitter ladder.
pub const MIN_JITTER: f64 = 1e-12;

/// Tolerance used to decide whether an input matrix is symmetric, relative
/// to `max(1, ‖Σ‖_max)`.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Lower-triangular factor `L` with `Σ = L·Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    l: DMatrix<f64>,
    jitter_applied: f64,
}

impl CholeskyFactor {
    pub fn identity(n: usize) -> Self {
        Self {
            l: DMatrix::identity(n, n),
            jitter_applied: 0.0,
        }
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Diagonal jitter that was added to the matrix before factorizing.
    pub fn jitter_applied(&self) -> f64 {
        self.jitter_applied
    }

    pub(crate) fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter_applied = jitter;
        self
    }

    /// `L·Lᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.l * self.l.transpose()
    }
}

pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

fn check_square_symmetric(sigma: &DMatrix<f64>) -> Result<()> {
    if sigma.nrows() != sigma.ncols() {
        return Err(Error::DimensionMismatch {
            expected: sigma.nrows(),
            got: sigma.ncols(),
        });
    }
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let n = sigma.nrows();
    let scale = max_abs(sigma).max(1.0);
    let mut asymmetry = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            asymmetry = asymmetry.max((sigma[(i, j)] - sigma[(j, i)]).abs());
        }
    }
    if asymmetry > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { asymmetry });
    }
    Ok(())
}

/// Factorizes a symmetric positive definite matrix.
///
/// Only the lower triangle is read. A pivot that is non-positive, or so
/// small relative to its diagonal entry that it is indistinguishable from
/// rounding noise, is reported as [`Error::NotPositiveDefinite`]; this
/// function never conditions the input itself.
pub fn cholesky(sigma: &DMatrix<f64>) -> Result<CholeskyFactor> {
    check_square_symmetric(sigma)?;
    let n = sigma.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);

    for j in 0..n {
        let mut pivot = sigma[(j, j)];
        for p in 0..j {
            pivot -= l[(j, p)] * l[(j, p)];
        }
        if !(pivot > f64::EPSILON * sigma[(j, j)].abs()) || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                value: pivot,
            });
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = sigma[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = s / d;
        }
    }

    Ok(CholeskyFactor {
        l,
        jitter_applied: 0.0,
    })
}

/// Rungs of the jitter ladder: `0, 1e-12, 1e-11, …` up to `max_jitter`.
pub fn jitter_ladder(max_jitter: f64) -> Vec<f64> {
    let mut rungs = vec![0.0];
    let mut exp = -12;
    loop {
        let lambda = 10f64.powi(exp);
        if lambda > max_jitter * (1.0 + 1e-9) {
            break;
        }
        rungs.push(lambda);
        exp += 1;
    }
    rungs
}

/// Adds the smallest `λ·I` from the jitter ladder that makes `sigma`
/// factorizable. Returns the conditioned matrix and `λ`.
pub fn condition_spd(sigma: &DMatrix<f64>, max_jitter: f64) -> Result<(DMatrix<f64>, f64)> {
    condition_and_factor(sigma, max_jitter).map(|(m, f)| {
        let jitter = f.jitter_applied();
        (m, jitter)
    })
}

/// Like [`condition_spd`] but also hands back the factor of the
/// conditioned matrix.
pub fn condition_and_factor(
    sigma: &DMatrix<f64>,
    max_jitter: f64,
) -> Result<(DMatrix<f64>, CholeskyFactor)> {
    check_square_symmetric(sigma)?;
    let n = sigma.nrows();
    for lambda in jitter_ladder(max_jitter) {
        let mut candidate = sigma.clone();
        for i in 0..n {
            candidate[(i, i)] += lambda;
        }
        match cholesky(&candidate) {
            Ok(factor) => {
                if lambda > 0.0 {
                    log::warn!("covariance conditioned with jitter {lambda:e}");
                }
                return Ok((candidate, factor.with_jitter(lambda)));
            }
            Err(Error::NotPositiveDefinite { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Irrecoverable { max_jitter })
}

fn check_len(factor: &CholeskyFactor, v: &DVector<f64>) -> Result<()> {
    if v.len() != factor.dim() {
        return Err(Error::DimensionMismatch {
            expected: factor.dim(),
            got: v.len(),
        });
    }
    Ok(())
}

/// Solves `Σ·x = b` with `Σ = L·Lᵀ`: forward substitution, then backward.
pub fn solve_spd(factor: &CholeskyFactor, b: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(factor, b)?;
    let l = &factor.l;
    let n = factor.dim();

    let mut y = b.clone();
    for i in 0..n {
        let mut s = y[i];
        for j in 0..i {
            s -= l[(i, j)] * y[j];
        }
        y[i] = s / l[(i, i)];
    }

    let mut x = y;
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in (i + 1)..n {
            s -= l[(j, i)] * x[j];
        }
        x[i] = s / l[(i, i)];
    }
    Ok(x)
}

/// `Lᵀ·w`. Its squared norm is the quadratic form `wᵀΣw`.
pub fn transform_by_lt(factor: &CholeskyFactor, w: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(factor, w)?;
    let l = &factor.l;
    let n = factor.dim();
    Ok(DVector::from_fn(n, |i, _| {
        (i..n).map(|j| l[(j, i)] * w[j]).sum::<f64>()
    }))
}

/// Principal submatrix on `idx` (rows and columns in the given order).
pub fn principal_submatrix(sigma: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| sigma[(idx[i], idx[j])])
}

pub fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}
