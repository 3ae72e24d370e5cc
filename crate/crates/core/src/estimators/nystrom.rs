use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_points, poly::check_ridge};
use crate::error::{Error, Result};
use crate::kernel::{Kernel, KernelSpec};
use crate::linalg;

/// Eigenvalues of `K_rr` below this fraction of the largest are dropped.
const RANK_CUTOFF: f64 = 1e-12;

const EVAL_BLOCK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum LandmarkRule {
    FirstR,
    UniformRandom { seed: u64 },
}

/// Inverse Christoffel function with the Gramian replaced by its rank-r
/// Nyström surrogate `K_Nr K_rr⁻¹ K_rN`.
///
/// The surrogate is stored as `ΦΦᵀ` with `Φ = K_Nr V Λ^{-1/2}` from the
/// eigendecomposition of `K_rr`, together with the factor of
/// `σ₀² I + ΦᵀΦ`. That matrix is congruent to `σ₀² K_rr + K_rN K_Nr` but
/// stays well conditioned when landmarks nearly coincide.
#[derive(Debug)]
pub struct NystromEstimator {
    kernel: Kernel,
    sigma0_sq: f64,
    data: Array2<f64>,
    landmarks: Vec<usize>,
    phi: Array2<f64>,
    factor: Array2<f64>,
    clamped: AtomicU64,
}

impl Clone for NystromEstimator {
    fn clone(&self) -> Self {
        Self {
            kernel: self.kernel.clone(),
            sigma0_sq: self.sigma0_sq,
            data: self.data.clone(),
            landmarks: self.landmarks.clone(),
            phi: self.phi.clone(),
            factor: self.factor.clone(),
            clamped: AtomicU64::new(self.clamped.load(Ordering::Relaxed)),
        }
    }
}

pub fn select_landmarks(n: usize, r: usize, rule: LandmarkRule) -> Result<Vec<usize>> {
    if r == 0 || r > n {
        return Err(Error::argument(format!("landmark count must be in 1..={n}, got {r}")));
    }
    Ok(match rule {
        LandmarkRule::FirstR => (0..r).collect(),
        LandmarkRule::UniformRandom { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = rand::seq::index::sample(&mut rng, n, r).into_vec();
            idx.sort_unstable();
            idx
        }
    })
}

pub fn fit_nystrom(
    points: ArrayView2<f64>,
    spec: &KernelSpec,
    sigma0_sq: f64,
    r: usize,
    rule: LandmarkRule,
) -> Result<NystromEstimator> {
    let landmarks = select_landmarks(points.nrows(), r, rule)?;
    fit_nystrom_with(points, spec, sigma0_sq, landmarks)
}

pub fn fit_nystrom_with(
    points: ArrayView2<f64>,
    spec: &KernelSpec,
    sigma0_sq: f64,
    landmarks: Vec<usize>,
) -> Result<NystromEstimator> {
    check_ridge(sigma0_sq)?;
    let kernel = spec.build()?;
    check_points(points, spec.input_dim().unwrap_or(points.ncols()))?;
    let mut seen = vec![false; points.nrows()];
    for &i in &landmarks {
        if i >= points.nrows() || std::mem::replace(&mut seen[i], true) {
            return Err(Error::argument(format!("invalid or repeated landmark index {i}")));
        }
    }
    if landmarks.is_empty() {
        return Err(Error::argument("at least one landmark is required"));
    }
    let anchors = points.select(Axis(0), &landmarks);
    let krr = kernel.gram(anchors.view())?;
    let (lam, vecs) = linalg::sym_eigh(krr)?;
    let top = lam.iter().cloned().fold(0.0, f64::max);
    if !(top > 0.0) {
        return Err(Error::numeric("Nystrom core", "landmark Gramian is zero"));
    }
    let keep: Vec<usize> = (0..lam.len()).filter(|&j| lam[j] > RANK_CUTOFF * top).collect();
    let mut basis = vecs.select(Axis(1), &keep);
    for (mut col, &j) in basis.columns_mut().into_iter().zip(&keep) {
        col /= lam[j].sqrt();
    }
    let knr = kernel.cross(points, anchors.view())?;
    let phi = knr.dot(&basis);
    let mut core = phi.t().dot(&phi);
    core = (&core + &core.t()) * 0.5;
    core.diag_mut().iter_mut().for_each(|v| *v += sigma0_sq);
    let factor = linalg::cholesky_lower(core, "Nystrom core factorization")?;
    Ok(NystromEstimator {
        kernel,
        sigma0_sq,
        data: points.to_owned(),
        landmarks,
        phi,
        factor,
        clamped: AtomicU64::new(0),
    })
}

impl NystromEstimator {
    pub fn kernel_spec(&self) -> &KernelSpec {
        self.kernel.spec()
    }

    pub fn sigma0_sq(&self) -> f64 {
        self.sigma0_sq
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn landmarks(&self) -> &[usize] {
        &self.landmarks
    }

    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    /// Numerical rank kept from the landmark Gramian.
    pub fn rank(&self) -> usize {
        self.phi.ncols()
    }

    /// How many evaluations came out negative and were clamped to zero.
    pub fn clamped_count(&self) -> u64 {
        self.clamped.load(Ordering::Relaxed)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let p = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row shape");
        Ok(self.eval_batch(p.view())?[0])
    }

    /// `k(x,x) - σ₀⁻² [k_Dᵀk_D - (Φᵀk_D)ᵀ (σ₀² I + ΦᵀΦ)⁻¹ (Φᵀk_D)]`.
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
            let direct = kd.map_axis(Axis(0), |c| c.dot(&c));
            let projected = self.phi.t().dot(&kd);
            let q = linalg::quad_forms(&self.factor, projected)?;
            for ((k, d), q) in diag.iter().zip(direct.iter()).zip(q.iter()) {
                let v = k - (d - q) / self.sigma0_sq;
                if v < 0.0 {
                    self.clamped.fetch_add(1, Ordering::Relaxed);
                }
                out.push(v.max(0.0));
            }
        }
        Ok(Array1::from(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::kernel::fit_kernel;
    use ndarray::array;

    fn se() -> KernelSpec {
        KernelSpec::SquaredExponential { lengthscale: 0.4 }
    }

    #[test]
    fn full_rank_matches_exact() {
        let pts = array![[0.0, 0.0], [0.3, 0.1], [0.9, -0.5], [-0.2, 0.6]];
        let exact = fit_kernel(pts.view(), &se(), 0.05, 100).unwrap();
        let ny = fit_nystrom(pts.view(), &se(), 0.05, 4, LandmarkRule::FirstR).unwrap();
        let q = array![[0.1, 0.1], [2.0, 2.0], [0.3, 0.1]];
        let a = exact.eval_batch(q.view()).unwrap();
        let b = ny.eval_batch(q.view()).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn duplicated_points_rank_one() {
        let pts = array![[0.5, 0.5], [0.5, 0.5]];
        let exact = fit_kernel(pts.view(), &se(), 0.1, 100).unwrap();
        let ny = fit_nystrom(pts.view(), &se(), 0.1, 1, LandmarkRule::FirstR).unwrap();
        for x in [[0.5, 0.5], [0.7, 0.2], [3.0, 0.0]] {
            assert!((exact.eval(&x).unwrap() - ny.eval(&x).unwrap()).abs() < 1e-12);
        }
        assert_eq!(ny.rank(), 1);
    }

    #[test]
    fn landmark_rules() {
        assert_eq!(select_landmarks(5, 3, LandmarkRule::FirstR).unwrap(), vec![0, 1, 2]);
        let a = select_landmarks(100, 10, LandmarkRule::UniformRandom { seed: 4 }).unwrap();
        let b = select_landmarks(100, 10, LandmarkRule::UniformRandom { seed: 4 }).unwrap();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(select_landmarks(5, 6, LandmarkRule::FirstR).is_err());
        assert!(select_landmarks(5, 0, LandmarkRule::FirstR).is_err());
    }

    #[test]
    fn rejects_repeated_landmarks() {
        let pts = array![[0.0], [1.0]];
        assert!(fit_nystrom_with(pts.view(), &se(), 0.1, vec![1, 1]).is_err());
    }
}
