use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::check_points;
use crate::error::{Error, Result};
use crate::linalg;
use crate::polybasis::MultiIndexBasis;

/// Rows of the feature matrix processed per moment-matrix update.
const CHUNK: usize = 4096;

/// Empirical inverse Christoffel function `z(x)ᵀ M⁻¹ z(x)` with
/// `M = σ₀² I + (1/N) Σ z(xᵢ) z(xᵢ)ᵀ` held as its lower Cholesky factor.
#[derive(Debug, Clone)]
pub struct PolyEstimator {
    basis: MultiIndexBasis,
    sigma0_sq: f64,
    n_samples: usize,
    factor: Array2<f64>,
}

pub fn fit_poly(points: ArrayView2<f64>, basis: &MultiIndexBasis, sigma0_sq: f64) -> Result<PolyEstimator> {
    check_points(points, basis.n())?;
    check_ridge(sigma0_sq)?;
    let n_samples = points.nrows();
    let d = basis.dim();
    let mut moment = Array2::<f64>::zeros((d, d));
    for chunk in points.axis_chunks_iter(Axis(0), CHUNK) {
        let z = basis.features(chunk)?;
        ndarray::linalg::general_mat_mul(1.0, &z.t(), &z, 1.0, &mut moment);
    }
    moment /= n_samples as f64;
    // gemm leaves the product symmetric only up to rounding.
    let mut moment = (&moment + &moment.t()) * 0.5;
    moment.diag_mut().iter_mut().for_each(|v| *v += sigma0_sq);
    let factor = linalg::cholesky_lower(moment, "moment matrix factorization")?;
    Ok(PolyEstimator {
        basis: basis.clone(),
        sigma0_sq,
        n_samples,
        factor,
    })
}

pub(crate) fn check_ridge(sigma0_sq: f64) -> Result<()> {
    if sigma0_sq > 0.0 && sigma0_sq.is_finite() {
        Ok(())
    } else {
        Err(Error::argument(format!(
            "sigma0_sq must be positive and finite, got {sigma0_sq}"
        )))
    }
}

impl PolyEstimator {
    /// Rebuild from a stored factor, e.g. after deserialization.
    pub fn from_parts(basis: MultiIndexBasis, sigma0_sq: f64, n_samples: usize, factor: Array2<f64>) -> Result<Self> {
        check_ridge(sigma0_sq)?;
        let d = basis.dim();
        if factor.dim() != (d, d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: factor.nrows(),
            });
        }
        if factor.diag().iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::numeric("factor load", "diagonal must be positive"));
        }
        Ok(Self {
            basis,
            sigma0_sq,
            n_samples,
            factor,
        })
    }

    pub fn basis(&self) -> &MultiIndexBasis {
        &self.basis
    }

    pub fn sigma0_sq(&self) -> f64 {
        self.sigma0_sq
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn factor(&self) -> &Array2<f64> {
        &self.factor
    }

    pub fn moment_matrix(&self) -> Array2<f64> {
        linalg::reconstruct(&self.factor)
    }

    /// `‖L⁻¹ z(x)‖²`.
    ///
    /// Plain forward substitution rather than BLAS so a point's value never
    /// depends on what else is evaluated alongside it; thresholds taken as a
    /// maximum over training values then classify those points exactly.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let mut z = self.basis.evaluate(x)?;
        Ok(self.forward_norm_sq(&mut z))
    }

    pub fn eval_batch(&self, points: ArrayView2<f64>) -> Result<Array1<f64>> {
        if points.ncols() != self.basis.n() {
            return Err(Error::DimensionMismatch {
                expected: self.basis.n(),
                got: points.ncols(),
            });
        }
        let mut z = vec![0.0; self.basis.dim()];
        let mut x = vec![0.0; self.basis.n()];
        let mut out = Array1::zeros(points.nrows());
        for (row, o) in points.rows().into_iter().zip(out.iter_mut()) {
            x.iter_mut().zip(row.iter()).for_each(|(a, b)| *a = *b);
            self.basis.evaluate_into(&x, &mut z)?;
            *o = self.forward_norm_sq(&mut z);
        }
        Ok(out)
    }

    fn forward_norm_sq(&self, z: &mut [f64]) -> f64 {
        let l = self.factor.as_slice().expect("factor is standard layout");
        let d = z.len();
        let mut acc = 0.0;
        for i in 0..d {
            let row = &l[i * d..i * d + i];
            let s: f64 = row.iter().zip(&z[..i]).map(|(a, b)| a * b).sum();
            let y = (z[i] - s) / l[i * d + i];
            z[i] = y;
            acc += y * y;
        }
        acc
    }
}
