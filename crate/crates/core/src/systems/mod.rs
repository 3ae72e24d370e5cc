//! Benchmark dynamical systems and the reachability sampler that turns an
//! initial set, a disturbance set and a horizon into iid samples.

mod integrator;
mod models;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algorithms::SampleSource;
use crate::error::{Error, Result};

pub use integrator::{rk4_integrate, DynamicalSystem, FnSystem};
pub use models::SystemSpec;

/// RNG stream used for training draws.
pub const TRAINING_STREAM: u64 = 0;
/// RNG stream used for validation draws.
pub const VALIDATION_STREAM: u64 = 1;
/// RNG stream used for pilot runs (bounding boxes and the like).
pub const PILOT_STREAM: u64 = 2;

/// ChaCha words reserved per sample; far more than any benchmark consumes.
const WORDS_PER_SAMPLE: u128 = 128;

/// Forward-reachability problem: the random variable is the (optionally
/// projected) state at `t1` from a uniform initial state and a uniform
/// constant disturbance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachProblem {
    pub system: SystemSpec,
    pub initial_box: Vec<[f64; 2]>,
    #[serde(default)]
    pub disturbance_box: Vec<[f64; 2]>,
    pub t0: f64,
    pub t1: f64,
    pub steps: usize,
    #[serde(default)]
    pub projection: Option<Vec<usize>>,
}

impl ReachProblem {
    pub fn duffing() -> Self {
        Self {
            system: SystemSpec::duffing(),
            initial_box: vec![[0.95, 1.05], [-0.05, 0.05]],
            disturbance_box: vec![],
            t0: 0.0,
            t1: 100.0,
            steps: 2000,
            projection: None,
        }
    }

    pub fn quadrotor() -> Self {
        use std::f64::consts::PI;
        let hover = 9.81 / 0.64;
        Self {
            system: SystemSpec::quadrotor(),
            initial_box: vec![
                [-1.7, 1.7],
                [-0.8, 0.8],
                [0.3, 2.0],
                [-1.0, 1.0],
                [-PI / 12.0, PI / 12.0],
                [-PI / 2.0, PI / 2.0],
            ],
            disturbance_box: vec![[hover - 1.5, hover + 1.5], [-PI / 4.0, PI / 4.0]],
            t0: 0.0,
            t1: 5.0,
            steps: 500,
            projection: Some(vec![0, 2]),
        }
    }

    pub fn traffic() -> Self {
        let period = 30.0;
        Self {
            system: SystemSpec::traffic(6),
            initial_box: vec![[100.0, 200.0]; 6],
            disturbance_box: vec![[40.0 / period, 60.0 / period]],
            t0: 0.0,
            t1: 4.0 * period,
            steps: 1200,
            projection: Some(vec![4, 5]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.system.state_dim();
        let w = self.system.disturbance_dim();
        if self.initial_box.len() != n {
            return Err(Error::config(
                "problem.initial_box",
                format!("expected {n} intervals, got {}", self.initial_box.len()),
            ));
        }
        if self.disturbance_box.len() != w {
            return Err(Error::config(
                "problem.disturbance_box",
                format!("expected {w} intervals, got {}", self.disturbance_box.len()),
            ));
        }
        for (name, b) in [
            ("initial_box", &self.initial_box),
            ("disturbance_box", &self.disturbance_box),
        ] {
            if let Some(i) = b
                .iter()
                .position(|[lo, hi]| !(lo <= hi) || !lo.is_finite() || !hi.is_finite())
            {
                return Err(Error::config(format!("problem.{name}[{i}]"), "need finite lo <= hi"));
            }
        }
        if !(self.t1 > self.t0) {
            return Err(Error::config("problem.t1", "must exceed t0"));
        }
        if self.steps == 0 {
            return Err(Error::config("problem.steps", "must be positive"));
        }
        if let Some(p) = &self.projection {
            let mut seen = vec![false; n];
            if p.is_empty() {
                return Err(Error::config("problem.projection", "must not be empty"));
            }
            for &i in p {
                if i >= n || std::mem::replace(&mut seen[i], true) {
                    return Err(Error::config(
                        "problem.projection",
                        format!("bad or repeated index {i}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Dimension of the samples after projection.
    pub fn output_dim(&self) -> usize {
        self.projection.as_ref().map_or(self.system.state_dim(), |p| p.len())
    }

    pub fn output_names(&self) -> Vec<String> {
        let names = self.system.state_names();
        match &self.projection {
            Some(p) => p.iter().map(|&i| names[i].clone()).collect(),
            None => names,
        }
    }

    /// Final state for one initial condition and disturbance, projected.
    pub fn simulate(&self, x0: &[f64], d: &[f64]) -> Result<Vec<f64>> {
        let x = rk4_integrate(&self.system, x0, d, self.t0, self.t1, self.steps)?;
        Ok(self.project(&x))
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        match &self.projection {
            Some(p) => p.iter().map(|&i| x[i]).collect(),
            None => x.to_vec(),
        }
    }

    /// Tight interval hull of a monotone system from its two extreme
    /// corners, projected.
    pub fn corner_hull(&self) -> Result<Vec<[f64; 2]>> {
        if !self.system.is_monotone() {
            return Err(Error::argument("corner hull requires a monotone system"));
        }
        let lo_x: Vec<f64> = self.initial_box.iter().map(|b| b[0]).collect();
        let hi_x: Vec<f64> = self.initial_box.iter().map(|b| b[1]).collect();
        let lo_d: Vec<f64> = self.disturbance_box.iter().map(|b| b[0]).collect();
        let hi_d: Vec<f64> = self.disturbance_box.iter().map(|b| b[1]).collect();
        let lo = self.simulate(&lo_x, &lo_d)?;
        let hi = self.simulate(&hi_x, &hi_d)?;
        Ok(lo.into_iter().zip(hi).map(|(a, b)| [a, b]).collect())
    }
}

/// Counter-based iid sampler over a [`ReachProblem`]: sample `i` of stream
/// `s` depends only on `(seed, s, i)`, so batches can be drawn in any order
/// or split across workers without changing a single value.
#[derive(Debug, Clone)]
pub struct ReachSampler {
    problem: ReachProblem,
    seed: u64,
}

impl ReachSampler {
    pub fn new(problem: ReachProblem, seed: u64) -> Result<Self> {
        problem.validate()?;
        Ok(Self { problem, seed })
    }

    pub fn problem(&self) -> &ReachProblem {
        &self.problem
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Initial state and disturbance of sample `index` in `stream`.
    pub fn initial_condition(&self, stream: u64, index: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng.set_word_pos(index as u128 * WORDS_PER_SAMPLE);
        let mut uniform = |b: &[f64; 2]| b[0] + (b[1] - b[0]) * rng.random::<f64>();
        let x0 = self.problem.initial_box.iter().map(&mut uniform).collect();
        let d = self.problem.disturbance_box.iter().map(&mut uniform).collect();
        (x0, d)
    }
}

impl SampleSource for ReachSampler {
    fn dim(&self) -> usize {
        self.problem.output_dim()
    }

    fn draw(&self, stream: u64, start: u64, count: usize) -> Result<Array2<f64>> {
        let dim = self.dim();
        let mut out = Array2::zeros((count, dim));
        for (k, mut row) in out.rows_mut().into_iter().enumerate() {
            let index = start + k as u64;
            let (x0, d) = self.initial_condition(stream, index);
            let y = self.problem.simulate(&x0, &d).map_err(|e| match e {
                Error::Integration { step, .. } => Error::Integration { sample: index, step },
                other => other,
            })?;
            row.iter_mut().zip(&y).for_each(|(a, b)| *a = *b);
        }
        Ok(out)
    }
}

/// Componentwise `[min, max]` of a non-empty sample.
pub fn interval_hull(points: ArrayView2<f64>) -> Result<Vec<[f64; 2]>> {
    if points.nrows() == 0 {
        return Err(Error::argument("interval hull of an empty dataset"));
    }
    Ok(points
        .columns()
        .into_iter()
        .map(|c| {
            let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            [lo, hi]
        })
        .collect())
}
