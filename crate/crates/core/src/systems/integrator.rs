use crate::error::{Error, Result};

/// A time-varying vector field `ẋ = f(t, x, d)` with a constant disturbance.
pub trait DynamicalSystem {
    fn state_dim(&self) -> usize;
    fn disturbance_dim(&self) -> usize;
    fn derivative(&self, t: f64, x: &[f64], d: &[f64], dx: &mut [f64]);
}

/// Wraps a closure as a [`DynamicalSystem`], mostly for tests.
pub struct FnSystem<F> {
    pub n: usize,
    pub w: usize,
    pub f: F,
}

impl<F: Fn(f64, &[f64], &[f64], &mut [f64])> DynamicalSystem for FnSystem<F> {
    fn state_dim(&self) -> usize {
        self.n
    }
    fn disturbance_dim(&self) -> usize {
        self.w
    }
    fn derivative(&self, t: f64, x: &[f64], d: &[f64], dx: &mut [f64]) {
        (self.f)(t, x, d, dx)
    }
}

/// Classical fixed-step fourth-order Runge-Kutta from `t0` to `t1`.
///
/// A non-finite state aborts with [`Error::Integration`]; the sample index
/// in that error is 0 here and filled in by the sampler.
pub fn rk4_integrate<S: DynamicalSystem + ?Sized>(
    system: &S,
    x0: &[f64],
    d: &[f64],
    t0: f64,
    t1: f64,
    steps: usize,
) -> Result<Vec<f64>> {
    let n = system.state_dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x0.len(),
        });
    }
    if d.len() != system.disturbance_dim() {
        return Err(Error::DimensionMismatch {
            expected: system.disturbance_dim(),
            got: d.len(),
        });
    }
    if steps == 0 {
        return Err(Error::argument("integrator needs at least one step"));
    }
    let h = (t1 - t0) / steps as f64;
    let mut x = x0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for step in 0..steps {
        let t = t0 + step as f64 * h;
        system.derivative(t, &x, d, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        system.derivative(t + 0.5 * h, &tmp, d, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        system.derivative(t + 0.5 * h, &tmp, d, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        system.derivative(t + h, &tmp, d, &mut k4);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration { sample: 0, step });
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_is_identity() {
        let s = FnSystem {
            n: 2,
            w: 0,
            f: |_: f64, _: &[f64], _: &[f64], dx: &mut [f64]| dx.fill(0.0),
        };
        assert_eq!(
            rk4_integrate(&s, &[1.5, -2.0], &[], 0.0, 3.0, 7).unwrap(),
            vec![1.5, -2.0]
        );
    }

    #[test]
    fn exponential_growth() {
        let s = FnSystem {
            n: 1,
            w: 0,
            f: |_: f64, x: &[f64], _: &[f64], dx: &mut [f64]| dx[0] = x[0],
        };
        let x = rk4_integrate(&s, &[1.0], &[], 0.0, 1.0, 100).unwrap()[0];
        assert!((x - std::f64::consts::E).abs() / std::f64::consts::E < 1e-7);
    }

    #[test]
    fn riccati_decay() {
        let s = FnSystem {
            n: 1,
            w: 0,
            f: |_: f64, x: &[f64], _: &[f64], dx: &mut [f64]| dx[0] = -x[0] * x[0],
        };
        let x = rk4_integrate(&s, &[1.0], &[], 0.0, 1.0, 100).unwrap()[0];
        assert!((x - 0.5).abs() < 1e-6);
    }

    #[test]
    fn blow_up_reports_step() {
        let s = FnSystem {
            n: 1,
            w: 0,
            f: |_: f64, x: &[f64], _: &[f64], dx: &mut [f64]| dx[0] = x[0].powi(3),
        };
        match rk4_integrate(&s, &[10.0], &[], 0.0, 10.0, 100) {
            Err(Error::Integration { step, .. }) => assert!(step < 100),
            other => panic!("expected integration error, got {other:?}"),
        }
    }

    #[test]
    fn argument_checks() {
        let s = FnSystem {
            n: 1,
            w: 1,
            f: |_: f64, _: &[f64], _: &[f64], dx: &mut [f64]| dx.fill(0.0),
        };
        assert!(rk4_integrate(&s, &[1.0], &[], 0.0, 1.0, 1).is_err());
        assert!(rk4_integrate(&s, &[1.0], &[0.0], 0.0, 1.0, 0).is_err());
    }
}
