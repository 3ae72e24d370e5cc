//! Monomial basis `z_m(x)`: all monomials of total degree at most `m` in `n`
//! variables, in graded lexicographic order with the constant term first.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Largest dimension we accept from [`basis_dimension`]; beyond this the count
/// can no longer be represented exactly in an `f64`.
const MAX_EXACT: u128 = 1 << 53;

/// Number of monomials of degree at most `m` in `n` variables, `C(n+m, n)`.
pub fn basis_dimension(n: usize, m: usize) -> Result<u64> {
    if n == 0 {
        return Err(Error::argument("state dimension n must be at least 1"));
    }
    let k = n.min(m) as u128;
    let top = (n + m) as u128;
    // C(top, k) built incrementally; each partial product is itself a binomial
    // coefficient so the division is exact.
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc
            .checked_mul(top - k + i)
            .ok_or_else(|| Error::Range(format!("C({}, {}) overflows", n + m, n)))?
            / i;
        if acc >= MAX_EXACT {
            return Err(Error::Range(format!("C({}, {}) exceeds 2^53", n + m, n)));
        }
    }
    Ok(acc as u64)
}

/// Ordered exponent set defining `z_m`.
///
/// Evaluation builds each monomial from an earlier one times a single
/// coordinate, so one pass costs `dim - 1` multiplications.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndexBasis {
    n: usize,
    m: usize,
    exponents: Vec<Vec<u32>>,
    // (parent monomial, coordinate) for every entry after the constant.
    recipe: Vec<(usize, usize)>,
}

impl MultiIndexBasis {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        let dim = basis_dimension(n, m)? as usize;
        let mut exponents = Vec::with_capacity(dim);
        for degree in 0..=m {
            let mut current = vec![0u32; n];
            push_lex_descending(&mut exponents, &mut current, 0, degree as u32);
        }
        debug_assert_eq!(exponents.len(), dim);

        let index: HashMap<&[u32], usize> = exponents.iter().enumerate().map(|(j, e)| (e.as_slice(), j)).collect();
        let recipe = exponents
            .iter()
            .skip(1)
            .map(|e| {
                let var = e.iter().position(|&p| p > 0).expect("non-constant monomial");
                let mut parent = e.clone();
                parent[var] -= 1;
                (index[parent.as_slice()], var)
            })
            .collect();

        Ok(Self {
            n,
            m,
            exponents,
            recipe,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    /// Total degree of monomial `j`.
    pub fn degree(&self, j: usize) -> u32 {
        self.exponents[j].iter().sum()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.evaluate_into(x, &mut out)?;
        Ok(out)
    }

    pub fn evaluate_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        if out.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: out.len(),
            });
        }
        out[0] = 1.0;
        for (j, &(parent, var)) in self.recipe.iter().enumerate() {
            out[j + 1] = out[parent] * x[var];
        }
        Ok(())
    }

    /// Feature matrix with one row `z_m(x_i)` per row of `points`.
    pub fn features(&self, points: ArrayView2<f64>) -> Result<Array2<f64>> {
        if points.ncols() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: points.ncols(),
            });
        }
        let mut z = Array2::zeros((points.nrows(), self.dim()));
        let mut x = vec![0.0; self.n];
        for (row, mut zrow) in points.rows().into_iter().zip(z.rows_mut()) {
            x.iter_mut().zip(row.iter()).for_each(|(a, b)| *a = *b);
            let slot = zrow.as_slice_mut().expect("fresh array is contiguous");
            self.evaluate_into(&x, slot)?;
        }
        Ok(z)
    }
}

fn push_lex_descending(out: &mut Vec<Vec<u32>>, current: &mut [u32], pos: usize, remaining: u32) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.to_vec());
        return;
    }
    for e in (0..=remaining).rev() {
        current[pos] = e;
        push_lex_descending(out, current, pos + 1, remaining - e);
    }
    current[pos] = 0;
}
