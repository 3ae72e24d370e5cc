//! Dense symmetric positive-definite helpers on top of LAPACK.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use ndarray_linalg::{
    cholesky::{CholeskyFactorized, CholeskyInplace, InverseC},
    eigh::EighInto,
    qr::QRInto,
    triangular::{Diag, SolveTriangular, SolveTriangularInplace},
    EigValshInto, UPLO,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Relative jitter added to the diagonal when the first factorization fails.
pub const JITTER: f64 = 1e-10;

/// Lower Cholesky factor of a symmetric matrix.
///
/// On failure the diagonal is bumped once by `JITTER * trace / dim` and the
/// factorization retried; a second failure is reported as a numeric error
/// tagged with `stage`.
pub fn cholesky_lower(mut a: Array2<f64>, stage: &'static str) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(stage, "matrix has non-finite entries"));
    }
    let diag: Vec<f64> = a.diag().to_vec();
    if a.cholesky_inplace(UPLO::Lower).is_ok() {
        zero_upper(&mut a);
        return Ok(a);
    }
    // LAPACK only touched the lower triangle; rebuild it from the upper one.
    for i in 0..n {
        for j in 0..i {
            a[[i, j]] = a[[j, i]];
        }
    }
    let bump = JITTER * diag.iter().sum::<f64>().abs().max(f64::MIN_POSITIVE) / n as f64;
    for (i, d) in diag.iter().enumerate() {
        a[[i, i]] = d + bump;
    }
    match a.cholesky_inplace(UPLO::Lower) {
        Ok(_) => {
            zero_upper(&mut a);
            Ok(a)
        }
        Err(e) => Err(Error::numeric(
            stage,
            format!("not positive definite after jitter {bump:e}: {e}"),
        )),
    }
}

fn zero_upper(a: &mut Array2<f64>) {
    let n = a.nrows();
    for i in 0..n {
        a.slice_mut(s![i, i + 1..]).fill(0.0);
    }
}

/// `L⁻¹ b` for a single right-hand side.
pub fn solve_lower(l: &Array2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    l.solve_triangular(UPLO::Lower, Diag::NonUnit, &b.to_owned())
        .map_err(|e| Error::numeric("triangular solve", e))
}

/// `L⁻¹ B` in place, one column per right-hand side.
pub fn solve_lower_inplace(l: &Array2<f64>, b: &mut Array2<f64>) -> Result<()> {
    l.solve_triangular_inplace(UPLO::Lower, Diag::NonUnit, b)
        .map(|_| ())
        .map_err(|e| Error::numeric("triangular solve", e))
}

/// Squared column norms of `L⁻¹ B`, i.e. `bⱼᵀ A⁻¹ bⱼ` for `A = LLᵀ`.
pub fn quad_forms(l: &Array2<f64>, mut b: Array2<f64>) -> Result<Array1<f64>> {
    solve_lower_inplace(l, &mut b)?;
    Ok(b.map_axis(Axis(0), |c| c.dot(&c)))
}

/// `log det A` from its Cholesky factor.
pub fn logdet_from_factor(l: &Array2<f64>) -> f64 {
    2.0 * l.diag().iter().map(|v| v.ln()).sum::<f64>()
}

/// Full `A⁻¹` from a lower Cholesky factor of `A`.
pub fn inverse_from_factor(l: &Array2<f64>) -> Result<Array2<f64>> {
    let f = CholeskyFactorized {
        factor: l.clone(),
        uplo: UPLO::Lower,
    };
    f.invc().map_err(|e| Error::numeric("inverse", e))
}

/// Reassemble `LLᵀ`.
pub fn reconstruct(l: &Array2<f64>) -> Array2<f64> {
    l.dot(&l.t())
}

/// All eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(a: ArrayView2<f64>) -> Result<Array1<f64>> {
    a.to_owned()
        .eigvalsh_into(UPLO::Lower)
        .map_err(|e| Error::numeric("eigenvalues", e))
}

/// Eigen-decomposition of a symmetric matrix, ascending.
pub fn sym_eigh(a: Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    a.eigh_into(UPLO::Lower)
        .map_err(|e| Error::numeric("eigendecomposition", e))
}

/// Outcome of [`top_eigenvalues`].
#[derive(Debug, Clone)]
pub struct TopSpectrum {
    /// Leading eigenvalue estimates, descending, each inflated by its Ritz
    /// residual so the list errs on the large side.
    pub values: Vec<f64>,
    pub iterations: usize,
    /// Largest residual norm over the returned pairs, relative to the top value.
    pub relative_residual: f64,
}

const SUBSPACE_SEED: u64 = 0x005e_ed0f_e16e;

/// Leading `p` eigenvalues of a symmetric positive semidefinite matrix.
///
/// Small problems go straight to LAPACK. Large ones use block subspace
/// iteration with Rayleigh-Ritz extraction, which costs a handful of
/// matrix-block products instead of a full tridiagonalization.
pub fn top_eigenvalues(k: &Array2<f64>, p: usize, tol: f64, max_iter: usize) -> Result<TopSpectrum> {
    let n = k.nrows();
    if p == 0 || p > n {
        return Err(Error::argument(format!("need 1 <= p <= {n}, got {p}")));
    }
    let block = (p + (p / 5).max(16)).min(n);
    if block >= n || n <= 1000 {
        let mut all = sym_eigenvalues(k.view())?.to_vec();
        all.reverse();
        all.truncate(p);
        return Ok(TopSpectrum {
            values: all,
            iterations: 0,
            relative_residual: 0.0,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(SUBSPACE_SEED);
    let start = Array2::from_shape_fn((n, block), |_| rng.random_range(-1.0..1.0));
    let mut q = orthonormalize(start)?;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let y = k.dot(&q);
        let h = q.t().dot(&y);
        let h = (&h + &h.t()) * 0.5;
        let (theta, w) = sym_eigh(h)?;
        // Ritz pairs, descending.
        let order: Vec<usize> = (0..block).rev().collect();
        let w = w.select(Axis(1), &order);
        let theta: Vec<f64> = order.iter().map(|&j| theta[j]).collect();
        let kv = y.dot(&w);
        let v = q.dot(&w);
        let top = theta[0].abs().max(f64::MIN_POSITIVE);
        let mut residuals = Vec::with_capacity(p);
        for (j, &t) in theta.iter().enumerate().take(p) {
            let r = &kv.column(j) - &(&v.column(j) * t);
            residuals.push(r.dot(&r).sqrt());
        }
        let worst = residuals.iter().cloned().fold(0.0, f64::max) / top;
        if worst <= tol || iterations >= max_iter {
            let mut values: Vec<f64> = (0..p).map(|j| theta[j].max(0.0) + residuals[j]).collect();
            values.sort_by(|a, b| b.total_cmp(a));
            return Ok(TopSpectrum {
                values,
                iterations,
                relative_residual: worst,
            });
        }
        q = orthonormalize(kv)?;
    }
}

fn orthonormalize(a: Array2<f64>) -> Result<Array2<f64>> {
    let (q, _) = a.qr_into().map_err(|e| Error::numeric("orthonormalization", e))?;
    Ok(q)
}
