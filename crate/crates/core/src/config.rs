//! Versioned run configuration and the shipped benchmark presets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::algorithms::AlgorithmConfig;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::systems::ReachProblem;

pub const CONFIG_FORMAT: u32 = 1;

/// Preset name and its JSON text.
pub const PRESETS: [(&str, &str); 4] = [
    ("duffing", include_str!("../presets/duffing.json")),
    ("duffing-kernel", include_str!("../presets/duffing-kernel.json")),
    ("quadrotor", include_str!("../presets/quadrotor.json")),
    ("traffic", include_str!("../presets/traffic.json")),
];

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmKind {
    Alg1,
    Alg2,
    Alg3,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub format: u32,
    pub problem: ReachProblem,
    pub algorithm: AlgorithmKind,
    pub parameters: AlgorithmConfig,
    pub out: Option<PathBuf>,
    pub grid: Option<GridSpec>,
    pub n_validation: Option<usize>,
    pub seed: u64,
}

/// On-disk shape; `problem` is either a preset name or an inline problem.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    format: u32,
    problem: Value,
    algorithm: AlgorithmKind,
    parameters: AlgorithmConfig,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default)]
    grid: Option<GridSpec>,
    #[serde(default)]
    n_validation: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(text)
            .map_err(|e| Error::config(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
        if raw.format != CONFIG_FORMAT {
            return Err(Error::config("format", format!("unsupported version {}", raw.format)));
        }
        let problem = resolve_problem(raw.problem)?;
        let mut parameters = raw.parameters;
        let seed = raw.seed.unwrap_or(parameters.seed);
        parameters.seed = seed;
        let config = RunConfig {
            format: raw.format,
            problem,
            algorithm: raw.algorithm,
            parameters,
            out: raw.out,
            grid: raw.grid,
            n_validation: raw.n_validation,
            seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = preset_text(name).ok_or_else(|| Error::config("problem", format!("unknown benchmark {name:?}")))?;
        Self::from_json(text)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.parameters.seed = seed;
        self
    }

    /// Checks everything that can be checked without sampling.
    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        let p = &self.parameters;
        let n = self.problem.output_dim();
        match self.algorithm {
            AlgorithmKind::Alg1 | AlgorithmKind::Alg3 => {
                if p.m.is_none() {
                    return Err(Error::config("parameters.m", "required by alg1 and alg3"));
                }
            }
            AlgorithmKind::Alg2 => {
                let spec = p
                    .kernel
                    .as_ref()
                    .ok_or_else(|| Error::config("parameters.kernel", "required by alg2"))?;
                if let Some(d) = spec.input_dim() {
                    if d != n {
                        return Err(Error::config(
                            "parameters.kernel",
                            format!("kernel expects dimension {d}, problem output has {n}"),
                        ));
                    }
                }
            }
        }
        if let Some(s) = &p.scaling {
            if s.dim() != n {
                return Err(Error::config(
                    "parameters.scaling",
                    format!("has dimension {}, problem output has {n}", s.dim()),
                ));
            }
        }
        if let Some(g) = &self.grid {
            if g.dim() != n {
                return Err(Error::config(
                    "grid",
                    format!("has {} axes, problem output has {n}", g.dim()),
                ));
            }
        }
        if self.n_validation == Some(0) {
            return Err(Error::config("n_validation", "must be positive"));
        }
        Ok(())
    }
}

fn resolve_problem(v: Value) -> Result<ReachProblem> {
    match v {
        Value::String(name) => {
            let text =
                preset_text(&name).ok_or_else(|| Error::config("problem", format!("unknown benchmark {name:?}")))?;
            let preset: Value = serde_json::from_str(text)?;
            match preset.get("problem") {
                Some(Value::String(_)) | None => Err(Error::config(
                    "problem",
                    format!("preset {name:?} has no inline problem"),
                )),
                Some(inner) => resolve_problem(inner.clone()),
            }
        }
        other => serde_json::from_value(other).map_err(|e| Error::config("problem", e.to_string())),
    }
}
