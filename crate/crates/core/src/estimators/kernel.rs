use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{check_points, poly::check_ridge};
use crate::error::{Error, Result};
use crate::kernel::{Kernel, KernelSpec};
use crate::linalg;

/// Largest Gramian side accepted by default (an N×N f64 matrix of this side
/// is about 3.2 GB).
pub const DEFAULT_GRAM_CAPACITY: usize = 20_000;

/// Query points per triangular-solve block during evaluation.
const EVAL_BLOCK: usize = 256;

/// Kernelized inverse Christoffel function
/// `k(x,x) - k_D(x)ᵀ (σ₀² I + K)⁻¹ k_D(x)`.
#[derive(Debug, Clone)]
pub struct KernelEstimator {
    kernel: Kernel,
    sigma0_sq: f64,
    data: Array2<f64>,
    factor: Array2<f64>,
}

pub fn fit_kernel(
    points: ArrayView2<f64>,
    spec: &KernelSpec,
    sigma0_sq: f64,
    capacity: usize,
) -> Result<KernelEstimator> {
    check_ridge(sigma0_sq)?;
    let kernel = spec.build()?;
    check_points(points, spec.input_dim().unwrap_or(points.ncols()))?;
    let n = points.nrows();
    if n > capacity {
        return Err(Error::Capacity(format!(
            "{n} samples need a {n}x{n} Gramian, above the cap of {capacity}; \
             use the Nystrom estimator with spectral-truncated KL instead"
        )));
    }
    let mut a = kernel.gram(points)?;
    a.diag_mut().iter_mut().for_each(|v| *v += sigma0_sq);
    let factor = linalg::cholesky_lower(a, "Gramian factorization")?;
    Ok(KernelEstimator {
        kernel,
        sigma0_sq,
        data: points.to_owned(),
        factor,
    })
}

/// Quantities of `A = σ₀² I + K` needed for certificates.
#[derive(Debug, Clone)]
pub struct GramSummary {
    /// `κ⁻¹(xᵢ)` at every training point.
    pub training_values: Vec<f64>,
    pub logdet: f64,
    pub trace_inverse: f64,
}

impl KernelEstimator {
    /// Reassemble from stored data and factor.
    pub fn from_parts(spec: &KernelSpec, sigma0_sq: f64, data: Array2<f64>, factor: Array2<f64>) -> Result<Self> {
        check_ridge(sigma0_sq)?;
        check_points(data.view(), spec.input_dim().unwrap_or(data.ncols()))?;
        let n = data.nrows();
        if factor.dim() != (n, n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: factor.nrows(),
            });
        }
        if factor.diag().iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::numeric("factor load", "diagonal must be positive"));
        }
        Ok(Self {
            kernel: spec.build()?,
            sigma0_sq,
            data,
            factor,
        })
    }

    pub fn kernel_spec(&self) -> &KernelSpec {
        self.kernel.spec()
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn sigma0_sq(&self) -> f64 {
        self.sigma0_sq
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn factor(&self) -> &Array2<f64> {
        &self.factor
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let p = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row shape");
        Ok(self.eval_batch(p.view())?[0])
    }

    pub fn eval_batch(&self, points: ArrayView2<f64>) -> Result<Array1<f64>> {
        if points.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: points.ncols(),
            });
        }
        let mut out = Vec::with_capacity(points.nrows());
        for block in points.axis_chunks_iter(Axis(0), EVAL_BLOCK) {
            let kd = self.kernel.cross(self.data.view(), block)?;
            let diag = self.kernel.diag(block)?;
            let q = linalg::quad_forms(&self.factor, kd)?;
            out.extend(diag.iter().zip(q.iter()).map(|(k, q)| (k - q).max(0.0)));
        }
        Ok(Array1::from(out))
    }

    /// Training values, `log det A` and `tr A⁻¹` from one explicit inverse.
    ///
    /// At a training point `κ⁻¹(xᵢ) = σ₀² - σ₀⁴ (A⁻¹)ᵢᵢ`, which follows from
    /// `K = A - σ₀² I`; this avoids N extra triangular solves.
    pub fn gram_summary(&self) -> Result<GramSummary> {
        let inv = linalg::inverse_from_factor(&self.factor)?;
        let s2 = self.sigma0_sq;
        let training_values = inv.diag().iter().map(|v| (s2 - s2 * s2 * v).max(0.0)).collect();
        Ok(GramSummary {
            training_values,
            logdet: linalg::logdet_from_factor(&self.factor),
            trace_inverse: inv.diag().sum(),
        })
    }
}
