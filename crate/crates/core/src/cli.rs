//! Command-line front end. [`run`] returns the process exit code:
//! 0 success, 2 usage or configuration error, 3 iteration cap reached,
//! 4 capacity exceeded, 1 anything else.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use ndarray::Array2;
use serde::Serialize;

use crate::algorithms::{self, validate_estimate, Run, DEFAULT_DELTA_V};
use crate::bounds::{self, CertificateStatus};
use crate::config::{preset_text, AlgorithmKind, RunConfig};
use crate::error::{Error, Result};
use crate::estimators::SupportEstimate;
use crate::grid::{evaluate_grid, GridSpec};
use crate::polybasis::basis_dimension;
use crate::systems::ReachSampler;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NON_TERMINATED: i32 = 3;
pub const EXIT_CAPACITY: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "christoffel",
    version,
    about = "Support and reachable-set estimation with PAC certificates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the VC dimension d = C(n+2m, n) and the classical sample size N.
    SampleBound {
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        /// Dimension of the samples.
        #[arg(long)]
        n: usize,
        /// Polynomial degree.
        #[arg(long)]
        m: usize,
    },
    /// Run the configured algorithm and write estimate.json, certificate.json,
    /// samples.csv and log (plus grid.csv when the config has a grid).
    Estimate {
        /// Config file, or the name of a shipped preset.
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate an estimate on a grid and write grid.csv.
    Grid {
        #[arg(long)]
        estimate: PathBuf,
        /// "lo:hi:count,lo:hi:count,..."
        #[arg(long)]
        grid: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check an estimate's coverage on fresh samples and write validation.json.
    Validate {
        #[arg(long)]
        estimate: PathBuf,
        /// Config (or preset) describing the sampled problem.
        #[arg(long)]
        config: String,
        #[arg(long)]
        n_validation: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = DEFAULT_DELTA_V)]
        delta_v: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a shipped preset config.
    Preset { name: String },
}

/// Parses `args` (including the program name) and executes the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Argument(_) | Error::DimensionMismatch { .. } | Error::Config { .. } | Error::Json(_) => EXIT_USAGE,
        Error::Capacity(_) => EXIT_CAPACITY,
        _ => EXIT_FAILURE,
    }
}

fn execute(command: Command, stdout: &mut dyn Write) -> Result<i32> {
    match command {
        Command::SampleBound { epsilon, delta, n, m } => {
            let d = basis_dimension(n, 2 * m)?;
            let count = bounds::classical_sample_bound(epsilon, delta, d)?;
            out(stdout, format!("d={d}\nN={count}\n"))?;
            Ok(EXIT_OK)
        }
        Command::Estimate { config, out: dir, seed } => cmd_estimate(&config, dir, seed, stdout),
        Command::Grid {
            estimate,
            grid,
            out: dir,
        } => {
            let spec: GridSpec = grid.parse()?;
            let est = SupportEstimate::load(&estimate)?;
            let dir = dir.unwrap_or_else(|| PathBuf::from("."));
            let summary = write_grid(&est, &spec, &dir)?;
            out(stdout, summary)?;
            Ok(EXIT_OK)
        }
        Command::Validate {
            estimate,
            config,
            n_validation,
            seed,
            delta_v,
            out: dir,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg = cfg.with_seed(s);
            }
            let n = n_validation.or(cfg.n_validation).ok_or_else(|| {
                Error::argument("--n-validation is required when the config does not set n_validation")
            })?;
            if n == 0 {
                return Err(Error::argument("--n-validation must be positive"));
            }
            let est = SupportEstimate::load(&estimate)?;
            let sampler = ReachSampler::new(cfg.problem.clone(), cfg.seed)?;
            let report = validate_estimate(&est, &sampler, n, delta_v)?;
            let dir = dir.unwrap_or_else(|| PathBuf::from("."));
            create_dir(&dir)?;
            write_file(&dir.join("validation.json"), &to_json(&report)?)?;
            out(
                stdout,
                format!(
                    "coverage={} lower_bound={} n={}\n",
                    report.coverage, report.lower_bound, report.n
                ),
            )?;
            Ok(EXIT_OK)
        }
        Command::Preset { name } => {
            let text = preset_text(&name).ok_or_else(|| Error::argument(format!("unknown preset {name:?}")))?;
            out(stdout, text.to_string())?;
            Ok(EXIT_OK)
        }
    }
}

/// A path that exists is read as a file; otherwise the name of a preset.
fn load_config(arg: &str) -> Result<RunConfig> {
    let path = Path::new(arg);
    if !path.exists() && preset_text(arg).is_some() {
        return RunConfig::preset(arg);
    }
    RunConfig::load(path)
}

/// Runs the algorithm selected by `config`.
pub fn run_config(config: &RunConfig) -> Result<Run> {
    let sampler = ReachSampler::new(config.problem.clone(), config.seed)?;
    match config.algorithm {
        AlgorithmKind::Alg1 => algorithms::algorithm1(&sampler, &config.parameters),
        AlgorithmKind::Alg2 => algorithms::algorithm2(&sampler, &config.parameters),
        AlgorithmKind::Alg3 => algorithms::algorithm3(&sampler, &config.parameters),
    }
}

fn cmd_estimate(config: &str, dir: Option<PathBuf>, seed: Option<u64>, stdout: &mut dyn Write) -> Result<i32> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    }
    let dir = dir.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("."));
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let run = run_config(&cfg)?;

    create_dir(&dir)?;
    let cert = run.estimate.certificate();
    run.estimate.save(&dir.join("estimate.json"))?;
    write_file(&dir.join("certificate.json"), &cert.to_json()?)?;
    write_file(
        &dir.join("samples.csv"),
        &samples_csv(&cfg.problem.output_names(), &run.samples),
    )?;
    let mut grid_summary = String::new();
    if let Some(g) = &cfg.grid {
        grid_summary = write_grid(&run.estimate, g, &dir)?;
    }

    let mut log = String::new();
    let _ = writeln!(log, "started_unix={started}");
    let _ = writeln!(log, "config={}", serde_json::to_string(&cfg)?);
    for r in &cert.trace {
        let _ = writeln!(
            log,
            "iteration={} N={} risk={} kl={} r_bar={} epsilon={}",
            r.iteration, r.n_samples, r.empirical_stochastic_risk, r.kl_divergence, r.risk_upper_bound, r.epsilon_i
        );
    }
    let _ = writeln!(
        log,
        "status={} N={} epsilon={} threshold={}",
        status_name(cert.status),
        cert.n_samples,
        cert.epsilon,
        run.estimate.threshold()
    );
    if !grid_summary.is_empty() {
        log.push_str(&grid_summary);
    }
    write_file(&dir.join("log"), &log)?;
    out(
        stdout,
        format!(
            "status={} N={} epsilon={} out={}\n",
            status_name(cert.status),
            cert.n_samples,
            cert.epsilon,
            dir.display()
        ),
    )?;
    Ok(match cert.status {
        CertificateStatus::NonTerminated => EXIT_NON_TERMINATED,
        _ => EXIT_OK,
    })
}

fn status_name(s: CertificateStatus) -> String {
    serde_json::to_value(s)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

/// Writes grid.csv into `dir` and returns a one-line summary.
fn write_grid(estimate: &SupportEstimate, spec: &GridSpec, dir: &Path) -> Result<String> {
    let eval = evaluate_grid(estimate, spec)?;
    let names: Vec<String> = (1..=spec.dim()).map(|i| format!("x{i}")).collect();
    let mut buf = Vec::new();
    eval.write_csv(&mut buf, &names).expect("writing to memory");
    create_dir(dir)?;
    let path = dir.join("grid.csv");
    std::fs::write(&path, buf).map_err(|source| Error::Io { path, source })?;
    let members = eval.members.iter().filter(|b| **b).count();
    let mut line = format!("grid_points={} members={members}", eval.members.len());
    if let Ok(t) = eval.topology() {
        let _ = write!(
            line,
            " excluded_inside_hull={} regions_inside_hull={} enclosed_holes={}",
            t.excluded_inside_hull, t.excluded_regions_inside_hull, t.enclosed_components
        );
    }
    line.push('\n');
    Ok(line)
}

pub fn samples_csv(names: &[String], samples: &Array2<f64>) -> String {
    let mut buf = ryu::Buffer::new();
    let mut s = names.join(",");
    s.push('\n');
    for row in samples.rows() {
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                s.push(',');
            }
            s.push_str(buf.format(*v));
        }
        s.push('\n');
    }
    s
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_owned(),
        source,
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

fn out(stdout: &mut dyn Write, text: String) -> Result<()> {
    stdout.write_all(text.as_bytes()).map_err(|source| Error::Io {
        path: PathBuf::from("<stdout>"),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run(
            std::iter::once("christoffel").chain(args.iter().copied()),
            &mut o,
            &mut e,
        );
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn sample_bound_examples() {
        assert_eq!(
            call(&[
                "sample-bound",
                "--epsilon",
                "0.1",
                "--delta",
                "1e-9",
                "--n",
                "2",
                "--m",
                "10"
            ])
            .1,
            "d=231\nN=70307\n"
        );
        assert_eq!(
            call(&[
                "sample-bound",
                "--epsilon",
                "0.1",
                "--delta",
                "1e-9",
                "--n",
                "2",
                "--m",
                "4"
            ])
            .1,
            "d=45\nN=14587\n"
        );
        assert_eq!(
            call(&[
                "sample-bound",
                "--epsilon",
                "0.5",
                "--delta",
                "0.5",
                "--n",
                "1",
                "--m",
                "0"
            ])
            .1,
            "d=1\nN=65\n"
        );
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(
            call(&[
                "sample-bound",
                "--epsilon",
                "1.5",
                "--delta",
                "0.1",
                "--n",
                "2",
                "--m",
                "1"
            ])
            .0,
            EXIT_USAGE
        );
        assert_eq!(call(&["sample-bound", "--epsilon", "x"]).0, EXIT_USAGE);
        assert_eq!(call(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(call(&["preset", "pendulum"]).0, EXIT_USAGE);
        assert_eq!(call(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn preset_prints_json() {
        let (code, text, _) = call(&["preset", "traffic"]);
        assert_eq!(code, 0);
        RunConfig::from_json(&text).unwrap();
    }

    #[test]
    fn exit_code_mapping() {
        assert_eq!(exit_code(&Error::Capacity("x".into())), EXIT_CAPACITY);
        assert_eq!(exit_code(&Error::config("a", "b")), EXIT_USAGE);
        assert_eq!(exit_code(&Error::numeric("s", "d")), EXIT_FAILURE);
    }

    #[test]
    fn samples_csv_roundtrips() {
        let s = ndarray::array![[0.1, -2.5e-300], [1.0 / 3.0, 7.0]];
        let text = samples_csv(&["a".into(), "b".into()], &s);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("a,b"));
        for (line, row) in lines.zip(s.rows()) {
            let vals: Vec<f64> = line.split(',').map(|t| t.parse().unwrap()).collect();
            assert_eq!(vals, row.to_vec());
        }
    }
}
