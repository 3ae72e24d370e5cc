use serde::{Deserialize, Serialize};

use super::integrator::DynamicalSystem;

/// The benchmark vector fields. Every constant is a field so presets can
/// override the values the source leaves open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum SystemSpec {
    /// `ż = y, ẏ = -αy + z - z³ + γ cos(ωt)`.
    Duffing { alpha: f64, gamma: f64, omega: f64 },
    /// Planar quadrotor, states `(pₓ, ṗₓ, p_h, ṗ_h, θ, θ̇)`, constant inputs
    /// `(u₁, u₂)`.
    Quadrotor {
        g: f64,
        k: f64,
        l: f64,
        d0: f64,
        d1: f64,
        n0: f64,
    },
    /// Cell transmission model of a single lane with constant inflow `d`.
    Traffic {
        segments: usize,
        period: f64,
        v: f64,
        w: f64,
        x_bar: f64,
        c: f64,
        beta: f64,
    },
}

impl SystemSpec {
    pub fn duffing() -> Self {
        SystemSpec::Duffing {
            alpha: 0.05,
            gamma: 0.4,
            omega: 1.3,
        }
    }

    pub fn quadrotor() -> Self {
        SystemSpec::Quadrotor {
            g: 9.81,
            k: 0.64,
            l: 0.64,
            d0: 70.0,
            d1: 17.0,
            n0: 55.0,
        }
    }

    pub fn traffic(segments: usize) -> Self {
        let (v, w, x_bar) = (0.5, 1.0 / 6.0, 320.0);
        SystemSpec::Traffic {
            segments,
            period: 30.0,
            v,
            w,
            x_bar,
            c: v * w * x_bar / (v + w),
            beta: 1.0,
        }
    }

    pub fn state_names(&self) -> Vec<String> {
        match self {
            SystemSpec::Duffing { .. } => vec!["z".into(), "y".into()],
            SystemSpec::Quadrotor { .. } => ["p_x", "v_x", "p_h", "v_h", "theta", "omega"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            SystemSpec::Traffic { segments, .. } => (1..=*segments).map(|i| format!("x{i}")).collect(),
        }
    }

    /// Whether the flow is order preserving in state and disturbance.
    pub fn is_monotone(&self) -> bool {
        matches!(self, SystemSpec::Traffic { .. })
    }
}

impl DynamicalSystem for SystemSpec {
    fn state_dim(&self) -> usize {
        match self {
            SystemSpec::Duffing { .. } => 2,
            SystemSpec::Quadrotor { .. } => 6,
            SystemSpec::Traffic { segments, .. } => *segments,
        }
    }

    fn disturbance_dim(&self) -> usize {
        match self {
            SystemSpec::Duffing { .. } => 0,
            SystemSpec::Quadrotor { .. } => 2,
            SystemSpec::Traffic { .. } => 1,
        }
    }

    fn derivative(&self, t: f64, x: &[f64], d: &[f64], dx: &mut [f64]) {
        match *self {
            SystemSpec::Duffing { alpha, gamma, omega } => {
                let (z, y) = (x[0], x[1]);
                dx[0] = y;
                dx[1] = -alpha * y + z - z * z * z + gamma * (omega * t).cos();
            }
            SystemSpec::Quadrotor { g, k, l, d0, d1, n0 } => {
                let (u1, u2) = (d[0], d[1]);
                let theta = x[4];
                dx[0] = x[1];
                dx[1] = u1 * k * theta.sin();
                dx[2] = x[3];
                dx[3] = -g + u1 * l * theta.cos();
                dx[4] = x[5];
                dx[5] = -d0 * theta - d1 * x[5] + n0 * u2;
            }
            SystemSpec::Traffic {
                segments,
                period,
                v,
                w,
                x_bar,
                c,
                beta,
            } => {
                let n = segments;
                // flow[i]: vehicles leaving segment i into segment i+1.
                let flow = |i: usize| -> f64 {
                    if i + 1 < n - 1 {
                        c.min(v * x[i]).min(w * (x_bar - x[i + 1]))
                    } else {
                        c.min(v * x[i]).min(w * (x_bar - x[i + 1]) / beta)
                    }
                };
                let mut inflow = d[0];
                for i in 0..n {
                    let out = if i + 1 < n { flow(i) } else { c.min(v * x[i]) };
                    dx[i] = (inflow - out) / period;
                    inflow = out;
                }
            }
        }
    }
}
