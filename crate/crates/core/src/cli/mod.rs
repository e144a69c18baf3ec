//! Command-line front end: `fit`, `gof`, `test`, `simulate` and `design`.
//!
//! Every command accepts a JSON settings file (`--config`) whose keys are the long flag
//! names in snake case; flags given on the command line win over the file. Results are
//! printed as an aligned table (or JSON with `--json`) and, with `--output-dir`, written as
//! `result.json`, `summary.txt`, CSV series and a `run_meta.json` holding timestamps.

pub mod io;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::asymptotics::sandwich_covariance;
use crate::design::{design_cost_detail, ga_optimize, DesignCostConfig, GaConfig, Selection};
use crate::error::{Error, Result};
use crate::estimation::{fit_family, reliability_estimate, FitOptions, FitStatus};
use crate::hypothesis::{wdpd_test_with, CriticalMode};
use crate::lifetime::Family;
use crate::presets;
use crate::regression::{Dataset, Theta};
use crate::simulation::{bootstrap_gof, run_mc_study, FitSettings, GofSettings, McConfig, MC_MAX_ITER};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        e if e.is_validation() => EXIT_VALIDATION,
        _ => EXIT_CONVERGENCE,
    }
}

#[derive(Debug, Parser)]
#[command(name = "oneshot", version, about = "Inference and test design for one-shot device data under the logistic-exponential model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model by maximum likelihood (beta = 0) or weighted minimum DPD.
    Fit(CommandArgs<FitCmd>),
    /// Parametric-bootstrap goodness-of-fit test for a lifetime family.
    Gof(CommandArgs<GofCmd>),
    /// Robust divergence-based test of a simple null hypothesis.
    Test(CommandArgs<TestCmd>),
    /// Monte-Carlo bias and MSE study of the estimators.
    Simulate(CommandArgs<SimulateCmd>),
    /// Genetic-algorithm search for cost-optimal inspection times.
    Design(CommandArgs<DesignCmd>),
}

#[derive(Debug, Args)]
pub struct CommandArgs<T: Args> {
    /// JSON settings file; keys are the long flag names with underscores
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write result.json, summary.txt, CSV series and run_meta.json here
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Print the JSON document instead of the table
    #[arg(long)]
    pub json: bool,
    #[command(flatten)]
    pub settings: T,
}

fn parse_num(s: &str) -> std::result::Result<f64, String> {
    s.trim().parse::<f64>().map_err(|e| format!("'{s}': {e}"))
}

/// Declares a settings struct whose fields are all optional, usable both as clap flags
/// and as a JSON settings file, with defaults filled in by `with_defaults`.
macro_rules! settings {
    ($name:ident { $( $(#[$m:meta])* $field:ident : $ty:ty = $default:expr ),* $(,)? }) => {
        #[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            $( $(#[$m])* #[serde(default, skip_serializing_if = "Option::is_none")] pub $field: Option<$ty>, )*
        }

        impl $name {
            /// Fields set here win over `base`.
            pub fn overlay(self, base: Self) -> Self {
                $name { $( $field: self.$field.or(base.$field), )* }
            }

            pub fn with_defaults(self) -> Self {
                $name { $( $field: self.$field.or_else(|| $default), )* }
            }
        }
    };
}

settings!(FitCmd {
    /// Grouped data CSV (group,tau,k,n,x1,...,xJ)
    #[arg(long)]
    input: PathBuf = None,
    /// Use the bundled gallbladder data set [default: false]
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    bundled: bool = Some(false),
    /// Lifetime family: le, weibull or gamma [default: le]
    #[arg(long)]
    family: String = Some("le".into()),
    /// Tuning parameters, comma separated; 0 is maximum likelihood [default: 0]
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = parse_num)]
    beta: Vec<f64> = Some(vec![0.0]),
    /// Starting value (a1..aJ,b1..bJ) [default: all zeros]
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = parse_num)]
    init: Vec<f64> = None,
    /// Learning rate [default: 0.01]
    #[arg(long)]
    h: f64 = Some(FitOptions::DEFAULT_H),
    /// Stop when the largest coordinate change of a sweep is below this [default: 1e-6]
    #[arg(long)]
    tol: f64 = Some(FitOptions::DEFAULT_TOL),
    /// Maximum number of sweeps [default: 100000]
    #[arg(long)]
    max_iter: usize = Some(FitOptions::DEFAULT_MAX_ITER),
    /// Times for the reliability series [default: 40 points up to twice the largest tau]
    #[arg(long, value_delimiter = ',', value_parser = parse_num)]
    times: Vec<f64> = None,
});

settings!(GofCmd {
    /// Grouped data CSV (group,tau,k,n,x1,...,xJ)
    #[arg(long)]
    input: PathBuf = None,
    /// Use the bundled gallbladder data set [default: false]
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    bundled: bool = Some(false),
    /// Lifetime family: le, weibull or gamma [default: le]
    #[arg(long)]
    family: String = Some("le".into()),
    /// Number of bootstrap resamples [default: 1000]
    #[arg(long)]
    bootstrap: usize = Some(1000),
    /// Master seed [default: 2024]
    #[arg(long)]
    seed: u64 = Some(2024),
    /// Starting value (a1..aJ,b1..bJ) [default: best node of the start grid]
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = parse_num)]
    init: Vec<f64> = None,
    /// Start-grid nodes per coordinate [default: 11]
    #[arg(long)]
    grid_points: usize = Some(11),
    /// Lower end of the start grid [default: -5]
    #[arg(long, allow_hyphen_values = true)]
    grid_low: f64 = Some(-5.0),
    /// Upper end of the start grid [default: 5]
    #[arg(long, allow_hyphen_values = true)]
    grid_high: f64 = Some(5.0),
    /// Learning rate [default: 0.01]
    #[arg(long)]
    h: f64 = Some(FitOptions::DEFAULT_H),
    /// Convergence threshold [default: 1e-6]
    #[arg(long)]
    tol: f64 = Some(FitOptions::DEFAULT_TOL),
    /// Maximum number of sweeps [default: 100000]
    #[arg(long)]
    max_iter: usize = Some(FitOptions::DEFAULT_MAX_ITER),
});

settings!(TestCmd {
    /// Grouped data CSV (group,tau,k,n,x1,...,xJ)
    #[arg(long)]
    input: PathBuf = None,
    /// Use the bundled gallbladder data set [default: false]
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    bundled: bool = Some(false),
    /// Null value theta0 (a1..aJ,b1..bJ); required
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = parse_num)]
    theta0: Vec<f64> = None,
    /// Tuning parameters, comma separated [default: 0.2,0.4,0.6,0.8,1]
    #[arg(long, value_delimiter = ',', value_parser = parse_num)]
    beta: Vec<f64> = Some(vec![0.2, 0.4, 0.6, 0.8, 1.0]),
    /// Significance level [default: 0.05]
    #[arg(long)]
    alpha: f64 = Some(0.05),
    /// Critical value: chi-square-bound or monte-carlo [default: chi-square-bound]
    #[arg(long)]
    critical: String = Some("chi-square-bound".into()),
    /// Draws for the Monte-Carlo critical value [default: 100000]
    #[arg(long)]
    draws: usize = Some(100_000),
    /// Seed for the Monte-Carlo critical value [default: 2024]
    #[arg(long)]
    seed: u64 = Some(2024),
    /// Starting value of the estimator fits [default: theta0]
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = parse_num)]
    init: Vec<f64> = None,
    /// Learning rate [default: 0.01]
    #[arg(long)]
    h: f64 = Some(FitOptions::DEFAULT_H),
    /// Convergence threshold [default: 1e-6]
    #[arg(long)]
    tol: f64 = Some(FitOptions::DEFAULT_TOL),
    /// Maximum number of sweeps [default: 100000]
    #[arg(long)]
    max_iter: usize = Some(FitOptions::DEFAULT_MAX_ITER),
});

settings!(SimulateCmd {
    /// Built-in layout: simulation or identifiable [default: simulation]
    #[arg(long)]
    layout: String = Some("simulation".into()),
    /// Layout CSV instead of a built-in one; failure counts are ignored
    #[arg(long)]
    input: PathBuf = None,
    /// Built-in true parameter set 1, 2 or 3 [default: 1]
    #[arg(long)]
    theta_set: usize = Some(1),
    /// True parameter (a1..aJ,b1..bJ); overrides --theta-set
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = parse_num)]
    theta: Vec<f64> = None,
    /// Generate data from the contaminated parameter paired with --theta-set [default: false]
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    contaminate: bool = Some(false),
    /// Explicit contamination shift; implies --contaminate
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = parse_num)]
    shift: Vec<f64> = None,
    /// Share of devices drawn from the contaminated parameter [default: 1]
    #[arg(long)]
    contamination_fraction: f64 = Some(1.0),
    /// Tuning parameters, comma separated [default: 0,0.2,0.4,0.6,0.8,1]
    #[arg(long, value_delimiter = ',', value_parser = parse_num)]
    beta: Vec<f64> = Some(vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]),
    /// Number of replications [default: 1000]
    #[arg(long)]
    replications: usize = Some(1000),
    /// Master seed [default: 2024]
    #[arg(long)]
    seed: u64 = Some(2024),
    /// Times for the reliability bias series [default: 0.5,1,...,5]
    #[arg(long, value_delimiter = ',', value_parser = parse_num)]
    times: Vec<f64> = Some((1..=10).map(|i| 0.5 * i as f64).collect()),
    /// Learning rate [default: 0.01]
    #[arg(long)]
    h: f64 = Some(FitOptions::DEFAULT_H),
    /// Convergence threshold [default: 1e-6]
    #[arg(long)]
    tol: f64 = Some(FitOptions::DEFAULT_TOL),
    /// Maximum number of sweeps per fit [default: 20000]
    #[arg(long)]
    max_iter: usize = Some(MC_MAX_ITER),
});

settings!(DesignCmd {
    /// Layout CSV (tau and n are ignored) [default: built-in five-group layout]
    #[arg(long)]
    input: PathBuf = None,
    /// Built-in planning parameter set 1 or 2 [default: 1]
    #[arg(long)]
    theta_set: usize = Some(1),
    /// Planning parameter (a1..aJ,b1..bJ); overrides --theta-set
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = parse_num)]
    theta: Vec<f64> = None,
    /// Tuning parameter of the estimator [default: 0.1]
    #[arg(long)]
    beta: f64 = Some(0.1),
    /// Weight on the covariance determinant [default: 0.5]
    #[arg(long)]
    c1: f64 = Some(0.5),
    /// Cost per expected failure [default: 0.5]
    #[arg(long)]
    c2: f64 = Some(0.5),
    /// Population size [default: 12]
    #[arg(long)]
    n_pop: usize = Some(GaConfig::DEFAULT_N_POP),
    /// Number of generations [default: 250]
    #[arg(long)]
    generations: usize = Some(GaConfig::DEFAULT_GENERATIONS),
    /// Mutation rate [default: 0.2]
    #[arg(long)]
    mutation_rate: f64 = Some(GaConfig::DEFAULT_MUTATION_RATE),
    /// Lower end of the inspection-time range [default: 0]
    #[arg(long)]
    low: f64 = Some(GaConfig::DEFAULT_BOUNDS.0),
    /// Upper end of the inspection-time range [default: 10]
    #[arg(long)]
    high: f64 = Some(GaConfig::DEFAULT_BOUNDS.1),
    /// Parent selection: random-rank or tournament [default: random-rank]
    #[arg(long)]
    selection: String = Some("random-rank".into()),
    /// Master seed [default: 2024]
    #[arg(long)]
    seed: u64 = Some(2024),
    /// Keep the best design out of mutation [default: true]
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    protect_elite: bool = Some(true),
});

/// Outcome of a command before it is printed or written.
#[derive(Debug, Clone)]
pub struct Report {
    pub command: &'static str,
    pub config_echo: Value,
    pub results: Value,
    pub diagnostics: Vec<String>,
    pub table: String,
    /// `(file name, CSV text)` pairs.
    pub series: Vec<(String, String)>,
    /// Set when the command ran but a fit did not converge.
    pub exit: i32,
}

impl Report {
    /// The JSON document; contains no timestamps so reruns are byte-identical.
    pub fn document(&self) -> Value {
        json!({
            "command": self.command,
            "config_echo": self.config_echo,
            "results": self.results,
            "diagnostics": self.diagnostics,
            "meta": { "tool": "oneshot", "version": env!("CARGO_PKG_VERSION") },
        })
    }

    pub fn document_string(&self) -> String {
        serde_json::to_string_pretty(&self.document()).expect("JSON values serialize") + "\n"
    }
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn echo<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("settings serialize")
}

fn load_data(input: &Option<PathBuf>, bundled: Option<bool>) -> Result<Dataset> {
    match (input, bundled.unwrap_or(false)) {
        (Some(_), true) => Err(Error::Config("give either --input or --bundled, not both".into())),
        (Some(path), false) => io::read_dataset(path),
        (None, true) => Ok(presets::seer_data()),
        (None, false) => Err(Error::Config("this command needs data: pass --input FILE or --bundled".into())),
    }
}

fn theta_of(v: &[f64], data: &Dataset, what: &str) -> Result<Theta> {
    let theta = Theta::from_flat(v).map_err(|e| Error::Config(format!("{what}: {e}")))?;
    if theta.dim() != data.covariate_dim() {
        return Err(Error::Config(format!(
            "{what} has {} entries but the data have {} covariates (expected {})",
            v.len(),
            data.covariate_dim(),
            2 * data.covariate_dim()
        )));
    }
    Ok(theta)
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", ")
}

/// Renders rows under a header with every column padded to its widest cell.
pub fn render_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(headers.to_vec());
    out += &line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(|s| s.as_str()).collect());
    for row in rows {
        out += &line(row.iter().map(|s| s.as_str()).collect());
    }
    out
}

fn run_fit(s: FitCmd) -> Result<Report> {
    let data = load_data(&s.input, s.bundled)?;
    let family: Family = s.family.as_deref().unwrap_or("le").parse().map_err(|e: Error| Error::Config(e.to_string()))?;
    let theta0 = match &s.init {
        Some(v) => theta_of(v, &data, "init")?,
        None => Theta::zeros(data.covariate_dim()),
    };
    let opts = FitOptions { h: s.h.unwrap(), tol: s.tol.unwrap(), max_iter: s.max_iter.unwrap(), theta0, scale_by_total: true };
    let max_tau = data.groups().iter().map(|g| g.tau).fold(0.0, f64::max);
    let times = s.times.clone().unwrap_or_else(|| (1..=40).map(|i| 2.0 * max_tau * i as f64 / 40.0).collect());

    let mut results = Vec::new();
    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    let mut series = String::from("beta,group,t,reliability\n");
    let mut exit = EXIT_OK;
    for &beta in s.beta.as_deref().unwrap_or(&[0.0]) {
        let r = fit_family(family, &data, beta, &opts)?;
        if r.status != FitStatus::Converged {
            exit = EXIT_CONVERGENCE;
            diagnostics.push(format!("beta = {beta}: fit stopped with status {:?} after {} sweeps", r.status, r.iterations));
        }
        let se = match (family, sandwich_covariance(&r.theta_hat, &data, beta)) {
            (Family::LogisticExponential, Ok(cov)) => Some(cov.standard_errors()),
            (Family::LogisticExponential, Err(e)) => {
                diagnostics.push(format!("beta = {beta}: no standard errors ({e})"));
                None
            }
            _ => None,
        };
        if family == Family::LogisticExponential {
            for (i, g) in data.groups().iter().enumerate() {
                for &t in &times {
                    let rel = reliability_estimate(&r.theta_hat, &g.x, t)?;
                    let _ = writeln!(series, "{beta},{},{t},{rel}", i + 1);
                }
            }
        }
        let flat = r.theta_hat.to_flat();
        rows.push(vec![
            format!("{beta}"),
            fmt_vec(&flat),
            format!("{:.6e}", r.final_objective()),
            format!("{:?}", r.status),
            r.iterations.to_string(),
            se.as_deref().map_or("-".into(), fmt_vec),
        ]);
        results.push(json!({
            "beta": beta,
            "theta_hat": flat,
            "objective": r.final_objective(),
            "status": r.status,
            "iterations": r.iterations,
            "last_change": r.last_change,
            "standard_errors": se,
        }));
    }
    let table = render_table(&["beta", "theta_hat", "objective", "status", "sweeps", "std_errors"], &rows);
    let mut out = vec![];
    if family == Family::LogisticExponential {
        out.push(("reliability.csv".to_string(), series));
    }
    Ok(Report {
        command: "fit",
        config_echo: echo(&s),
        results: json!({ "family": family, "fits": results }),
        diagnostics,
        table,
        series: out,
        exit,
    })
}

fn run_gof(s: GofCmd) -> Result<Report> {
    let data = load_data(&s.input, s.bundled)?;
    let family: Family = s.family.as_deref().unwrap_or("le").parse().map_err(|e: Error| Error::Config(e.to_string()))?;
    let start = s.init.as_deref().map(|v| theta_of(v, &data, "init")).transpose()?;
    let settings = GofSettings {
        fit: FitSettings { h: s.h.unwrap(), tol: s.tol.unwrap(), max_iter: s.max_iter.unwrap(), scale_by_total: true },
        grid_bounds: (s.grid_low.unwrap(), s.grid_high.unwrap()),
        grid_points: s.grid_points.unwrap(),
        start,
    };
    let r = bootstrap_gof(&data, family, s.bootstrap.unwrap(), s.seed.unwrap(), &settings)?;
    let mut diagnostics = Vec::new();
    if r.failed_refits > 0 {
        diagnostics.push(format!("{} of {} bootstrap refits did not converge", r.failed_refits, r.bootstrap_samples));
    }
    let table = render_table(
        &["family", "statistic", "p_value", "resamples", "theta_hat"],
        &[vec![
            family.to_string(),
            format!("{:.4}", r.statistic),
            format!("{:.4}", r.p_value),
            r.bootstrap_samples.to_string(),
            fmt_vec(&r.theta_hat.to_flat()),
        ]],
    );
    Ok(Report {
        command: "gof",
        config_echo: echo(&s),
        results: serde_json::to_value(&r).expect("report serializes"),
        diagnostics,
        table,
        series: vec![],
        exit: EXIT_OK,
    })
}

fn run_test(s: TestCmd) -> Result<Report> {
    let data = load_data(&s.input, s.bundled)?;
    let theta0 = match &s.theta0 {
        Some(v) => theta_of(v, &data, "theta0")?,
        None => return Err(Error::Config("--theta0 is required".into())),
    };
    let start = match &s.init {
        Some(v) => theta_of(v, &data, "init")?,
        None => theta0.clone(),
    };
    let mode = match s.critical.as_deref().unwrap_or("chi-square-bound") {
        "chi-square-bound" | "chi-square" => CriticalMode::ChiSquareBound,
        "monte-carlo" | "mc" => CriticalMode::MonteCarlo { draws: s.draws.unwrap(), seed: s.seed.unwrap() },
        other => return Err(Error::Config(format!("unknown critical-value mode '{other}'"))),
    };
    let opts = FitOptions { h: s.h.unwrap(), tol: s.tol.unwrap(), max_iter: s.max_iter.unwrap(), theta0: start, scale_by_total: true };
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    let mut exit = EXIT_OK;
    for &beta in s.beta.as_deref().unwrap_or(&[]) {
        let r = wdpd_test_with(&data, &theta0, beta, s.alpha.unwrap(), &opts, mode)?;
        if r.fit_status != FitStatus::Converged {
            exit = EXIT_CONVERGENCE;
            diagnostics.push(format!("beta = {beta}: estimator fit stopped with status {:?}", r.fit_status));
        }
        rows.push(vec![
            format!("{beta}"),
            format!("{:.6e}", r.lambda_stat),
            format!("{:.6e}", r.lambda_star),
            r.r.to_string(),
            format!("{:.4}", r.critical),
            if r.reject { "reject".into() } else { "retain".into() },
        ]);
        reports.push(r);
    }
    Ok(Report {
        command: "test",
        config_echo: echo(&s),
        results: serde_json::to_value(&reports).expect("report serializes"),
        diagnostics,
        table: render_table(&["beta", "lambda", "lambda_star", "rank", "critical", "decision"], &rows),
        series: vec![],
        exit,
    })
}

fn preset_index(set: usize, available: usize) -> Result<usize> {
    if (1..=available).contains(&set) {
        Ok(set - 1)
    } else {
        Err(Error::Config(format!("parameter set must be between 1 and {available}, got {set}")))
    }
}

fn run_simulate(s: SimulateCmd) -> Result<Report> {
    let layout = match (&s.input, s.layout.as_deref().unwrap_or("simulation")) {
        (Some(path), _) => io::read_dataset(path)?,
        (None, "simulation") => presets::simulation_layout(),
        (None, "identifiable") => presets::identifiable_layout(),
        (None, other) => return Err(Error::Config(format!("unknown layout '{other}'"))),
    };
    let set = preset_index(s.theta_set.unwrap(), 3)?;
    let theta = match &s.theta {
        Some(v) => theta_of(v, &layout, "theta")?,
        None => theta_of(&presets::simulation_thetas()[set].to_flat(), &layout, "theta")?,
    };
    let contamination = match (&s.shift, s.contaminate.unwrap_or(false)) {
        (Some(v), _) => Some(v.clone()),
        (None, true) => Some(presets::contamination_shifts()[set].to_vec()),
        (None, false) => None,
    };
    let cfg = McConfig {
        contamination,
        contamination_fraction: s.contamination_fraction.unwrap(),
        betas: s.beta.clone().unwrap(),
        replications: s.replications.unwrap(),
        seed: s.seed.unwrap(),
        reliability_times: s.times.clone().unwrap(),
        fit: FitSettings { h: s.h.unwrap(), tol: s.tol.unwrap(), max_iter: s.max_iter.unwrap(), scale_by_total: true },
        ..McConfig::new(layout, theta)
    };
    let report = run_mc_study(&cfg)?;
    let mut rows = Vec::new();
    let mut series = String::from("beta,group,t,truth,bias,error\n");
    for row in &report.rows {
        rows.push(vec![format!("{}", row.beta), row.used.to_string(), fmt_vec(&row.bias), fmt_vec(&row.mse)]);
        for e in &row.reliability {
            let _ = writeln!(series, "{},{},{},{},{},{}", row.beta, e.group + 1, e.t, e.truth, e.bias, e.error);
        }
    }
    Ok(Report {
        command: "simulate",
        config_echo: echo(&s),
        results: serde_json::to_value(&report).expect("report serializes"),
        diagnostics: report.warnings.clone(),
        table: render_table(&["beta", "used", "bias", "mse"], &rows),
        series: vec![("reliability_bias.csv".into(), series)],
        exit: EXIT_OK,
    })
}

fn run_design(s: DesignCmd) -> Result<Report> {
    let layout = match &s.input {
        Some(path) => io::read_dataset(path)?,
        None => presets::design_layout(),
    };
    let set = preset_index(s.theta_set.unwrap(), 2)?;
    let theta = match &s.theta {
        Some(v) => theta_of(v, &layout, "theta")?,
        None => theta_of(&presets::design_thetas()[set].to_flat(), &layout, "theta")?,
    };
    let selection: Selection = s.selection.as_deref().unwrap_or("random-rank").parse()?;
    let cost_cfg = DesignCostConfig { c1: s.c1.unwrap(), c2: s.c2.unwrap(), theta, layout, beta: s.beta.unwrap() };
    let ga_cfg = GaConfig {
        n_pop: s.n_pop.unwrap(),
        generations: s.generations.unwrap(),
        mutation_rate: s.mutation_rate.unwrap(),
        bounds: vec![(s.low.unwrap(), s.high.unwrap()); cost_cfg.layout.len()],
        protect_elite: s.protect_elite.unwrap(),
        ..GaConfig::new(cost_cfg.layout.len(), selection, s.seed.unwrap())
    };
    let r = ga_optimize(&cost_cfg, &ga_cfg)?;
    let detail = design_cost_detail(&r.best, &cost_cfg)?;
    let mut series = String::from("generation,best_cost\n");
    for (g, c) in r.trace.iter().enumerate() {
        let _ = writeln!(series, "{},{c}", g + 1);
    }
    let mut diagnostics = vec!["|V| is the determinant of the covariance of sqrt(K) (theta_hat - theta)".to_string()];
    if r.infeasible_evaluations > 0 {
        diagnostics.push(format!("{} of {} evaluated designs were infeasible", r.infeasible_evaluations, r.evaluations));
    }
    let table = render_table(
        &["selection", "inspection_times", "cost", "det_sigma", "expected_failures"],
        &[vec![
            s.selection.clone().unwrap_or_default(),
            fmt_vec(&r.best),
            format!("{:.5}", r.best_cost),
            detail.det_sigma.map_or("-".into(), |d| format!("{d:.5e}")),
            format!("{:.4}", detail.expected_failures),
        ]],
    );
    Ok(Report {
        command: "design",
        config_echo: echo(&s),
        results: json!({ "search": r, "cost": detail }),
        diagnostics,
        table,
        series: vec![("trace.csv".into(), series)],
        exit: EXIT_OK,
    })
}

/// Resolves settings (flags over file over defaults) and runs the command.
pub fn execute(command: &Command) -> Result<Report> {
    fn resolve<T: Args + DeserializeOwned + Default + Clone>(a: &CommandArgs<T>, overlay: fn(T, T) -> T, defaults: fn(T) -> T) -> Result<T> {
        let file: T = load_config(a.config.as_deref())?;
        Ok(defaults(overlay(a.settings.clone(), file)))
    }
    match command {
        Command::Fit(a) => run_fit(resolve(a, FitCmd::overlay, FitCmd::with_defaults)?),
        Command::Gof(a) => run_gof(resolve(a, GofCmd::overlay, GofCmd::with_defaults)?),
        Command::Test(a) => run_test(resolve(a, TestCmd::overlay, TestCmd::with_defaults)?),
        Command::Simulate(a) => run_simulate(resolve(a, SimulateCmd::overlay, SimulateCmd::with_defaults)?),
        Command::Design(a) => run_design(resolve(a, DesignCmd::overlay, DesignCmd::with_defaults)?),
    }
}

fn output_options(command: &Command) -> (Option<&Path>, bool) {
    match command {
        Command::Fit(a) => (a.output_dir.as_deref(), a.json),
        Command::Gof(a) => (a.output_dir.as_deref(), a.json),
        Command::Test(a) => (a.output_dir.as_deref(), a.json),
        Command::Simulate(a) => (a.output_dir.as_deref(), a.json),
        Command::Design(a) => (a.output_dir.as_deref(), a.json),
    }
}

fn write_outputs(dir: &Path, report: &Report, started: u64, elapsed: f64) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io_err)?;
    fs::write(dir.join("result.json"), report.document_string()).map_err(io_err)?;
    fs::write(dir.join("summary.txt"), &report.table).map_err(io_err)?;
    for (name, text) in &report.series {
        fs::write(dir.join(name), text).map_err(io_err)?;
    }
    let meta = json!({ "command": report.command, "started_unix": started, "elapsed_seconds": elapsed });
    fs::write(dir.join("run_meta.json"), serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n").map_err(io_err)
}

/// Runs a parsed command line, prints the result and returns the process exit code.
pub fn dispatch(cli: &Cli) -> i32 {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let (dir, as_json) = output_options(&cli.command);
    let report = match execute(&cli.command) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    if as_json {
        print!("{}", report.document_string());
    } else {
        print!("{}", report.table);
        for d in &report.diagnostics {
            eprintln!("note: {d}");
        }
    }
    if let Some(dir) = dir {
        if let Err(e) = write_outputs(dir, &report, started, clock.elapsed().as_secs_f64()) {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    }
    report.exit
}
