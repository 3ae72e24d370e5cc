//! Polynomial, kernelized and Nyström empirical inverse Christoffel
//! functions, and the sublevel-set estimate built from any of them.

mod kernel;
mod nystrom;
mod poly;
mod support;

use ndarray::ArrayView2;

use crate::error::{Error, Result};

pub use kernel::{fit_kernel, GramSummary, KernelEstimator, DEFAULT_GRAM_CAPACITY};
pub use nystrom::{fit_nystrom, fit_nystrom_with, select_landmarks, LandmarkRule, NystromEstimator};
pub(crate) use poly::check_ridge;
pub use poly::{fit_poly, PolyEstimator};
pub use support::{AxisScaling, Estimator, SupportEstimate};

/// Validate a sample matrix: at least one row, `n` columns, finite entries.
pub fn check_points(points: ArrayView2<f64>, n: usize) -> Result<()> {
    if points.nrows() == 0 {
        return Err(Error::argument("dataset is empty"));
    }
    if points.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: points.ncols(),
        });
    }
    if let Some(pos) = points.iter().position(|v| !v.is_finite()) {
        return Err(Error::numeric(
            "data validation",
            format!("non-finite coordinate in sample {}", pos / n.max(1)),
        ));
    }
    Ok(())
}
