//! Positive-definite kernels used by the kernelized estimators.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polybasis::MultiIndexBasis;

/// Serializable kernel description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `exp(-‖x-y‖² / (2ℓ²))`.
    SquaredExponential { lengthscale: f64 },
    /// `z_m(x)ᵀ z_m(y)` over the monomial basis of degree `m` in `n` variables.
    PolynomialInner { n: usize, m: usize },
}

impl KernelSpec {
    pub fn build(&self) -> Result<Kernel> {
        match *self {
            KernelSpec::SquaredExponential { lengthscale } => {
                if !(lengthscale > 0.0 && lengthscale.is_finite()) {
                    return Err(Error::argument(format!(
                        "lengthscale must be positive, got {lengthscale}"
                    )));
                }
                Ok(Kernel::SquaredExponential {
                    spec: self.clone(),
                    scale: 0.5 / (lengthscale * lengthscale),
                })
            }
            KernelSpec::PolynomialInner { n, m } => Ok(Kernel::PolynomialInner {
                spec: self.clone(),
                basis: MultiIndexBasis::new(n, m)?,
            }),
        }
    }

    /// Input dimension if the kernel fixes one.
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            KernelSpec::SquaredExponential { .. } => None,
            KernelSpec::PolynomialInner { n, .. } => Some(*n),
        }
    }
}

/// A ready-to-evaluate kernel.
#[derive(Debug, Clone)]
pub enum Kernel {
    SquaredExponential { spec: KernelSpec, scale: f64 },
    PolynomialInner { spec: KernelSpec, basis: MultiIndexBasis },
}

impl Kernel {
    pub fn spec(&self) -> &KernelSpec {
        match self {
            Kernel::SquaredExponential { spec, .. } | Kernel::PolynomialInner { spec, .. } => spec,
        }
    }

    pub fn eval(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
        match self {
            Kernel::SquaredExponential { scale, .. } => {
                let d2: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                (-scale * d2).exp()
            }
            Kernel::PolynomialInner { basis, .. } => {
                let zx = basis
                    .evaluate(x.as_slice().unwrap_or(&x.to_vec()))
                    .expect("checked dim");
                let zy = basis
                    .evaluate(y.as_slice().unwrap_or(&y.to_vec()))
                    .expect("checked dim");
                zx.iter().zip(&zy).map(|(a, b)| a * b).sum()
            }
        }
    }

    /// `k(x, x)` for every row.
    pub fn diag(&self, points: ArrayView2<f64>) -> Result<Vec<f64>> {
        self.check(points)?;
        Ok(match self {
            Kernel::SquaredExponential { .. } => vec![1.0; points.nrows()],
            Kernel::PolynomialInner { basis, .. } => {
                let z = basis.features(points)?;
                z.rows().into_iter().map(|r| r.dot(&r)).collect()
            }
        })
    }

    /// Gramian `K_ij = k(x_i, x_j)`, exactly symmetric.
    pub fn gram(&self, points: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(points)?;
        match self {
            Kernel::SquaredExponential { .. } => {
                let n = points.nrows();
                let mut k = Array2::zeros((n, n));
                for i in 0..n {
                    k[[i, i]] = 1.0;
                    let xi = points.row(i);
                    for j in 0..i {
                        let v = self.eval(xi, points.row(j));
                        k[[i, j]] = v;
                        k[[j, i]] = v;
                    }
                }
                Ok(k)
            }
            Kernel::PolynomialInner { basis, .. } => {
                let z = basis.features(points)?;
                let k = z.dot(&z.t());
                Ok((&k + &k.t()) * 0.5)
            }
        }
    }

    /// Cross matrix `C_ij = k(a_i, b_j)`.
    pub fn cross(&self, a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(a)?;
        self.check(b)?;
        if a.ncols() != b.ncols() {
            return Err(Error::DimensionMismatch {
                expected: a.ncols(),
                got: b.ncols(),
            });
        }
        match self {
            Kernel::SquaredExponential { .. } => Ok(Array2::from_shape_fn((a.nrows(), b.nrows()), |(i, j)| {
                self.eval(a.row(i), b.row(j))
            })),
            Kernel::PolynomialInner { basis, .. } => Ok(basis.features(a)?.dot(&basis.features(b)?.t())),
        }
    }

    fn check(&self, points: ArrayView2<f64>) -> Result<()> {
        if let Kernel::PolynomialInner { basis, .. } = self {
            if points.ncols() != basis.n() {
                return Err(Error::DimensionMismatch {
                    expected: basis.n(),
                    got: points.ncols(),
                });
            }
        }
        Ok(())
    }
}
