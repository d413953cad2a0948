//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::linalg::Schur;
use num_complex::Complex64;

use crate::{CMatrix, CVector, Error, Result};

/// Relative threshold below which a triangular pivot counts as zero.
const RANK_TOL: f64 = 1e-10;

/// Above this dimension [`spectral_radius`] switches to power iteration.
pub const DENSE_EIGEN_LIMIT: usize = 600;

/// Right pseudo-inverse `Z ↦ Z Xᴴ (X Xᴴ)⁻¹` of a wide matrix `X`.
///
/// Built from a QR factorization of `Xᴴ`, so the Gram matrix `X Xᴴ` is
/// never formed or inverted explicitly.
#[derive(Clone, Debug)]
pub struct RightPseudoInverse {
    q: CMatrix,
    r: CMatrix,
    cols: usize,
}

impl RightPseudoInverse {
    pub fn new(x: &CMatrix, what: &'static str) -> Result<Self> {
        let (rows, cols) = x.shape();
        if rows == 0 || rows > cols {
            return Err(Error::dims(what, format!("rows <= cols ({cols})"), rows));
        }
        let qr = x.adjoint().qr();
        let q = qr.q();
        let r = qr.r();
        check_triangular_rank(&r, what)?;
        Ok(Self { q, r, cols })
    }

    /// Number of columns the projected matrices must have (the training length).
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of rows of the factored matrix.
    pub fn rank(&self) -> usize {
        self.r.nrows()
    }

    pub fn apply(&self, z: &CMatrix) -> Result<CMatrix> {
        if z.ncols() != self.cols {
            return Err(Error::dims("projected matrix columns", self.cols, z.ncols()));
        }
        // Z Q R⁻ᴴ, solved as R · (Z Q R⁻ᴴ)ᴴ = (Z Q)ᴴ.
        let zq = z * &self.q;
        let sol = self
            .r
            .solve_upper_triangular(&zq.adjoint())
            .ok_or(Error::RankDeficient { what: "training" })?;
        Ok(sol.adjoint())
    }
}

pub(crate) fn check_triangular_rank(r: &CMatrix, what: &'static str) -> Result<()> {
    let n = r.nrows().min(r.ncols());
    let scale = (0..n).map(|i| r[(i, i)].norm()).fold(0.0, f64::max);
    if n == 0 || scale == 0.0 || (0..n).any(|i| r[(i, i)].norm() <= RANK_TOL * scale) {
        return Err(Error::RankDeficient { what });
    }
    Ok(())
}

pub fn frobenius_sq(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// `‖a − b‖_F / ‖b‖_F`, or the absolute difference when `b` is zero.
pub fn relative_difference(a: &CMatrix, b: &CMatrix) -> f64 {
    let diff = frobenius_sq(&(a - b)).sqrt();
    let reference = frobenius_sq(b).sqrt();
    if reference == 0.0 {
        diff
    } else {
        diff / reference
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Column-major vectorization.
pub fn vec(m: &CMatrix) -> CVector {
    CVector::from_iterator(m.len(), m.iter().copied())
}

pub fn eigenvalues(m: &CMatrix) -> Result<Vec<Complex64>> {
    if !m.is_square() {
        return Err(Error::dims("eigenvalue input", "square matrix", format!("{:?}", m.shape())));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or(Error::NoConvergence { iterations: 10_000 })?;
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Largest eigenvalue magnitude: dense Schur for small matrices, power
/// iteration above [`DENSE_EIGEN_LIMIT`].
pub fn spectral_radius(m: &CMatrix) -> Result<f64> {
    if m.nrows() <= DENSE_EIGEN_LIMIT {
        Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
    } else {
        power_iteration(m, 1e-8, 20_000)
    }
}

/// Spectral radius by power iteration on `m`.
///
/// Uses the ratio `‖m^{j+1} v‖ / ‖m^j v‖` with a fixed complex start vector;
/// declares convergence when successive ratios agree to `tol` (relative).
pub fn power_iteration(m: &CMatrix, tol: f64, max_iter: usize) -> Result<f64> {
    let n = m.nrows();
    if !m.is_square() {
        return Err(Error::dims("power iteration input", "square matrix", format!("{:?}", m.shape())));
    }
    if n == 0 {
        return Ok(0.0);
    }
    // Deterministic start vector with no special structure.
    let mut v = CVector::from_fn(n, |i, _| {
        let t = i as f64 + 1.0;
        Complex64::new((0.7 * t).sin() + 1.1, (1.3 * t).cos())
    });
    v /= Complex64::from(v.norm());
    let mut previous = f64::NAN;
    // Averaging the ratio over a window damps oscillation when several
    // eigenvalues share the dominant modulus.
    let window = 8;
    let mut log_growth = Vec::with_capacity(max_iter);
    for it in 0..max_iter {
        let w = m * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        log_growth.push(norm.ln());
        v = w / Complex64::from(norm);
        if it >= window {
            let tail = &log_growth[log_growth.len() - window..];
            let estimate = (tail.iter().sum::<f64>() / window as f64).exp();
            if (estimate - previous).abs() <= tol * estimate.max(f64::MIN_POSITIVE) {
                return Ok(estimate);
            }
            previous = estimate;
        }
    }
    Err(Error::NoConvergence { iterations: max_iter })
}

/// Largest singular value.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// 2-norm condition number `σ_max / σ_min` (infinite for singular input).
pub fn condition_number(m: &CMatrix) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Least-squares solve `min ‖a x − b‖` through QR (tall, full column rank `a`).
pub fn least_squares(a: &CMatrix, b: &CMatrix, what: &'static str) -> Result<CMatrix> {
    if a.nrows() < a.ncols() {
        return Err(Error::dims(what, format!("rows >= {}", a.ncols()), a.nrows()));
    }
    if a.nrows() != b.nrows() {
        return Err(Error::dims(what, a.nrows(), b.nrows()));
    }
    let qr = a.clone().qr();
    let r = qr.r();
    check_triangular_rank(&r, what)?;
    let qtb = qr.q().adjoint() * b;
    r.solve_upper_triangular(&qtb)
        .ok_or(Error::RankDeficient { what })
}
