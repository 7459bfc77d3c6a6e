//! Command-line front end. Every command builds a [`RunReport`]; the binary
//! only prints what [`run_from`] returns.

use std::f64::consts::PI;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::chains::{
    admissible_initial, ck_certify, maximal_markov_interval, AdmissibleKind, InterpolationFamily,
};
use crate::error::{Error, Result};
use crate::hierarchy::{
    check_hierarchy, feasibility_solve_with, markov_closure_residual, FeasibilityOptions,
    FeasibilityStatus, PairwiseSpec,
};
use crate::montecarlo::{
    empirical_marginals, marginal_z_scores, paths_to_csv, sample_paths, transition_counts, z_score,
    EnsembleConfig, SamplePath,
};
use crate::prob::{
    ProbabilityVector, State, StochasticMatrix, TimeGrid, ToleranceConfig, TransitionFamily,
    DEFAULT_TOL_SOLVER, DEFAULT_TOL_STAT,
};
use crate::quantum::{
    born_marginals, evolve_state, quantum_trajectory, GillespieFamily, QuantumTrajectoryConfig,
};

pub const BUNDLED_SPEC: &str = include_str!("../data/gillespie_uniform_3.json");

#[derive(Debug, Parser)]
#[command(
    name = "dichotomic",
    version,
    about = "Two-state process verification reports"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Identity tolerance; the solver tolerance becomes max(1e-9, tol).
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Write the output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Gillespie,
    Interpolation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Expect {
    Feasible,
    Infeasible,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Born-rule marginals on a uniform time grid.
    Trajectory(TrajectoryArgs),
    /// Chapman-Kolmogorov certification on every triple of a grid.
    Ck(CkArgs),
    /// Initial vectors that propagate consistently along every grid pair.
    Invariant(InvariantArgs),
    /// Longest interval on which the symmetric interpolation stays stochastic.
    Interval(IntervalArgs),
    /// Existence of a path measure matching a pairwise spec.
    Feasibility(FeasibilityArgs),
    /// Monte Carlo ensemble against analytic marginals and transitions.
    Simulate(SimulateArgs),
    /// Runs the full suite and checks every verdict against expectation.
    ReproducePaper(ReproduceArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TrajectoryArgs {
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
    #[arg(long, default_value = "pi/2")]
    pub t_max: String,
    #[arg(long, default_value_t = 101)]
    pub steps: usize,
}

#[derive(Debug, Clone, Args)]
pub struct CkArgs {
    #[arg(long, value_enum)]
    pub family: FamilyName,
    #[arg(long, default_value = "0,pi/8,pi/4")]
    pub grid: String,
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
    /// Evaluate the interpolation formula past its Markov domain.
    #[arg(long)]
    pub extended_domain: bool,
}

#[derive(Debug, Clone, Args)]
pub struct InvariantArgs {
    #[arg(long, value_enum, default_value_t = FamilyName::Gillespie)]
    pub family: FamilyName,
    #[arg(long, default_value = "0,pi/8,pi/4,3pi/8")]
    pub grid: String,
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
}

#[derive(Debug, Clone, Args)]
pub struct IntervalArgs {
    #[arg(long, default_value = "linspace:0:pi/2:10001")]
    pub grid: String,
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
}

#[derive(Debug, Clone, Args)]
pub struct FeasibilityArgs {
    /// JSON spec with fields {times, marginals, transitions}; the bundled
    /// three-time spec when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub expect: Option<Expect>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = FamilyName::Interpolation)]
    pub family: FamilyName,
    /// `p1,p2` or just `p1`.
    #[arg(long, default_value = "1,0")]
    pub p0: String,
    #[arg(long, default_value_t = 100_000)]
    pub n_paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "0,pi/8,pi/4")]
    pub grid: String,
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ReproduceArgs {
    #[arg(long, default_value_t = 100_000)]
    pub n_paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "pass")]
    Pass,
    #[serde(rename = "fail")]
    Fail,
    #[serde(rename = "n/a")]
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub command: String,
    pub inputs: Value,
    pub results: Value,
    pub tolerances: ToleranceConfig,
    pub verdict: Verdict,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    fn exit_code(&self) -> i32 {
        match self.verdict {
            Verdict::Fail => 1,
            _ => 0,
        }
    }
}

/// A command's report plus its table, when it has one.
pub struct CommandOutput {
    pub report: RunReport,
    pub csv: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                Outcome {
                    code: 2,
                    stdout: String::new(),
                    stderr: text,
                }
            } else {
                Outcome {
                    code: 0,
                    stdout: text,
                    stderr: String::new(),
                }
            };
        }
    };
    match execute(&cli).and_then(|out| emit(&cli, out)) {
        Ok(outcome) => outcome,
        Err(e) => Outcome {
            code: 2,
            stdout: String::new(),
            stderr: format!("error: {e}\n"),
        },
    }
}

fn emit(cli: &Cli, out: CommandOutput) -> Result<Outcome> {
    let code = out.report.exit_code();
    let text = match cli.format {
        Format::Json => out.report.to_json(),
        Format::Csv => out.csv.ok_or_else(|| {
            Error::Validation(format!(
                "--format csv is not available for `{}`",
                out.report.command
            ))
        })?,
    };
    match &cli.out {
        Some(path) => {
            std::fs::write(path, &text)
                .map_err(|e| Error::Validation(format!("cannot write {}: {e}", path.display())))?;
            Ok(Outcome {
                code,
                stdout: String::new(),
                stderr: format!("wrote {}\n", path.display()),
            })
        }
        None => Ok(Outcome {
            code,
            stdout: text,
            stderr: String::new(),
        }),
    }
}

pub fn execute(cli: &Cli) -> Result<CommandOutput> {
    let tol = tolerances(cli.tol)?;
    match &cli.command {
        Command::Trajectory(a) => cmd_trajectory(a, &tol),
        Command::Ck(a) => cmd_ck(a, &tol),
        Command::Invariant(a) => cmd_invariant(a, &tol),
        Command::Interval(a) => cmd_interval(a, &tol),
        Command::Feasibility(a) => cmd_feasibility(a, &tol),
        Command::Simulate(a) => cmd_simulate(a, &tol),
        Command::ReproducePaper(a) => cmd_reproduce(a, &tol),
    }
}

pub fn tolerances(tol: Option<f64>) -> Result<ToleranceConfig> {
    match tol {
        None => Ok(ToleranceConfig::default()),
        Some(t) => ToleranceConfig::new(t, t.max(DEFAULT_TOL_SOLVER), DEFAULT_TOL_STAT),
    }
}

/// `t/π` as a reduced fraction with denominator at most 64, when exact.
pub fn t_pi(t: f64) -> Option<String> {
    let x = t / PI;
    for q in 1..=64i64 {
        let p = (x * q as f64).round();
        if (t - p * PI / q as f64).abs() <= 1e-12 * t.abs().max(1.0) {
            let p = p as i64;
            return Some(match (p, q) {
                (0, _) => "0".to_string(),
                (p, 1) => p.to_string(),
                (p, q) => format!("{p}/{q}"),
            });
        }
    }
    None
}

fn time_json(t: f64) -> Value {
    match t_pi(t) {
        Some(r) => json!({ "t": t, "t_pi": r }),
        None => json!({ "t": t }),
    }
}

/// A single time: a decimal, `pi`, `3pi/8`, `3*pi/8`, `0.5pi` or `1/4`.
pub fn parse_time(token: &str) -> Result<f64> {
    let bad = || Error::Validation(format!("cannot parse time `{token}`"));
    let s: String = token
        .trim()
        .to_ascii_lowercase()
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect();
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n, Some(d)),
        None => (s.as_str(), None),
    };
    let num_value = if let Some(coef) = num.strip_suffix("pi") {
        let coef = coef.strip_suffix('*').unwrap_or(coef);
        let c = match coef {
            "" | "+" => 1.0,
            "-" => -1.0,
            c => c.parse::<f64>().map_err(|_| bad())?,
        };
        c * PI
    } else {
        num.parse::<f64>().map_err(|_| bad())?
    };
    let value = match den {
        Some(d) => {
            let d = d.parse::<f64>().map_err(|_| bad())?;
            if d == 0.0 {
                return Err(bad());
            }
            num_value / d
        }
        None => num_value,
    };
    if !value.is_finite() {
        return Err(bad());
    }
    Ok(value)
}

/// Comma-separated times or `linspace:a:b:n`.
pub fn parse_grid(spec: &str) -> Result<TimeGrid> {
    if let Some(rest) = spec.trim().strip_prefix("linspace:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Validation(format!(
                "expected linspace:a:b:n, got `{spec}`"
            )));
        }
        let n = parts[2]
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Validation(format!("bad point count in `{spec}`")))?;
        return TimeGrid::linspace(parse_time(parts[0])?, parse_time(parts[1])?, n);
    }
    let times = spec
        .split(',')
        .map(parse_time)
        .collect::<Result<Vec<_>>>()?;
    TimeGrid::new(times)
}

fn parse_p0(spec: &str) -> Result<ProbabilityVector> {
    let parts = spec
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Validation(format!("cannot parse initial vector `{spec}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    match parts.as_slice() {
        [a] => ProbabilityVector::from_first(*a),
        [a, b] => ProbabilityVector::new(*a, *b),
        _ => Err(Error::Validation(format!(
            "initial vector needs 1 or 2 entries, got `{spec}`"
        ))),
    }
}

fn grid_json(grid: &TimeGrid) -> Value {
    if grid.len() > 64 {
        json!({
            "points": grid.len(),
            "first": time_json(grid.times()[0]),
            "last": time_json(grid.horizon()),
        })
    } else {
        Value::Array(grid.times().iter().map(|&t| time_json(t)).collect())
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("value serializes")
}

fn family_box(
    name: FamilyName,
    cfg: &QuantumTrajectoryConfig,
    extended: bool,
) -> Box<dyn TransitionFamily> {
    match name {
        FamilyName::Gillespie => Box::new(GillespieFamily::new(cfg)),
        FamilyName::Interpolation => {
            let f = InterpolationFamily::quantum(cfg);
            Box::new(if extended { f.extended_domain() } else { f })
        }
    }
}

pub fn cmd_trajectory(a: &TrajectoryArgs, tol: &ToleranceConfig) -> Result<CommandOutput> {
    if a.steps < 2 {
        return Err(Error::Validation(format!(
            "--steps must be >= 2, got {}",
            a.steps
        )));
    }
    let cfg = QuantumTrajectoryConfig::new(a.omega, 0.0)?;
    let t_max = parse_time(&a.t_max)?;
    if t_max <= 0.0 {
        return Err(Error::Validation(format!(
            "--t-max must be > 0, got {t_max}"
        )));
    }
    let grid = TimeGrid::linspace(0.0, t_max, a.steps)?;
    let traj = quantum_trajectory(&cfg);
    let mut rows = Vec::with_capacity(grid.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Validation(format!("csv: {e}"));
    w.write_record(["t", "t_pi", "p1", "p2"]).map_err(csv_err)?;
    let mut born_dev = 0.0f64;
    for &t in grid.times() {
        let p = traj.at(t)?;
        let born = born_marginals(&evolve_state(t, &cfg)?)?;
        born_dev = born_dev.max(born.max_abs_diff(&p));
        let rational = t_pi(t);
        w.write_record([
            t.to_string(),
            rational.clone().unwrap_or_default(),
            p.p1().to_string(),
            p.p2().to_string(),
        ])
        .map_err(csv_err)?;
        let mut row = time_json(t);
        row["p1"] = json!(p.p1());
        row["p2"] = json!(p.p2());
        rows.push(row);
    }
    let csv = String::from_utf8(
        w.into_inner()
            .map_err(|e| Error::Validation(e.to_string()))?,
    )
    .expect("csv output is utf-8");
    let verdict = if born_dev <= tol.tol_exact {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let report = RunReport {
        command: "trajectory".into(),
        inputs: json!({ "omega": a.omega, "t_max": time_json(t_max), "steps": a.steps }),
        results: json!({
            "rows": rows,
            "born_rule_deviation": born_dev,
            "landmarks": {
                "uniform": time_json(cfg.uniform_time()),
                "swap": time_json(2.0 * cfg.uniform_time()),
            },
        }),
        tolerances: *tol,
        verdict,
    };
    Ok(CommandOutput {
        report,
        csv: Some(csv),
    })
}

pub fn cmd_ck(a: &CkArgs, tol: &ToleranceConfig) -> Result<CommandOutput> {
    let cfg = QuantumTrajectoryConfig::new(a.omega, 0.0)?;
    let grid = parse_grid(&a.grid)?;
    let inputs = json!({
        "family": a.family,
        "grid": grid_json(&grid),
        "omega": a.omega,
        "extended_domain": a.extended_domain,
    });
    let report = |results: Value, verdict: Verdict| RunReport {
        command: "ck".into(),
        inputs: inputs.clone(),
        results,
        tolerances: *tol,
        verdict,
    };

    if a.family == FamilyName::Interpolation && !a.extended_domain {
        // the interpolation is a Markov family only up to its first failing pair
        let t_max = grid.horizon();
        let mut scan: Vec<f64> = TimeGrid::linspace(0.0, t_max, 1001)?.times().to_vec();
        scan.extend(grid.times().iter().copied().filter(|&t| t >= 0.0));
        scan.sort_by(f64::total_cmp);
        scan.dedup();
        let scan = TimeGrid::new(scan)?;
        let interval = maximal_markov_interval(&quantum_trajectory(&cfg), &scan, tol)?;
        if let Some((s, t)) = interval.failure_witness {
            let results = json!({
                "positivity_failure": {
                    "mode": interval.failure_mode,
                    "witness": [time_json(s), time_json(t)],
                    "valid_until": time_json(interval.t_star),
                },
                "ck": Value::Null,
            });
            return Ok(CommandOutput {
                report: report(results, Verdict::Fail),
                csv: None,
            });
        }
    }

    let family = family_box(a.family, &cfg, a.extended_domain);
    match ck_certify(&family, &grid, tol) {
        Ok(rep) => {
            let verdict = if rep.vacuous {
                Verdict::NotApplicable
            } else if rep.passed {
                Verdict::Pass
            } else {
                Verdict::Fail
            };
            let worst = rep.worst_triple.map(|tr| tr.map(time_json).to_vec());
            let results = json!({ "ck": to_value(&rep), "worst_triple_times": worst });
            Ok(CommandOutput {
                report: report(results, verdict),
                csv: None,
            })
        }
        Err(e) => match e.witness() {
            Some((s, t)) => {
                let results = json!({
                    "positivity_failure": {
                        "error": e.to_string(),
                        "witness": [time_json(s), time_json(t)],
                    },
                    "ck": Value::Null,
                });
                Ok(CommandOutput {
                    report: report(results, Verdict::Fail),
                    csv: None,
                })
            }
            None => Err(e),
        },
    }
}

pub fn cmd_invariant(a: &InvariantArgs, tol: &ToleranceConfig) -> Result<CommandOutput> {
    let cfg = QuantumTrajectoryConfig::new(a.omega, 0.0)?;
    let grid = parse_grid(&a.grid)?;
    let family = family_box(a.family, &cfg, false);
    let res = admissible_initial(&family, &grid, tol)?;
    let verdict = if res.kind == AdmissibleKind::Empty {
        Verdict::Fail
    } else {
        Verdict::Pass
    };
    let report = RunReport {
        command: "invariant".into(),
        inputs: json!({ "family": a.family, "grid": grid_json(&grid), "omega": a.omega }),
        results: to_value(&res),
        tolerances: *tol,
        verdict,
    };
    Ok(CommandOutput { report, csv: None })
}

pub fn cmd_interval(a: &IntervalArgs, tol: &ToleranceConfig) -> Result<CommandOutput> {
    let cfg = QuantumTrajectoryConfig::new(a.omega, 0.0)?;
    let grid = parse_grid(&a.grid)?;
    let rep = maximal_markov_interval(&quantum_trajectory(&cfg), &grid, tol)?;
    let witness = rep
        .failure_witness
        .map(|(s, t)| vec![time_json(s), time_json(t)]);
    let report = RunReport {
        command: "interval".into(),
        inputs: json!({ "trajectory": "quantum", "omega": a.omega, "grid": grid_json(&grid) }),
        results: json!({
            "t_star": time_json(rep.t_star),
            "grid_step": rep.grid_step,
            "horizon": time_json(rep.horizon),
            "failure_mode": rep.failure_mode,
            "failure_witness": witness,
            "offset_from_uniform_time": rep.t_star - cfg.uniform_time(),
        }),
        tolerances: *tol,
        verdict: Verdict::NotApplicable,
    };
    Ok(CommandOutput { report, csv: None })
}

pub fn cmd_feasibility(a: &FeasibilityArgs, tol: &ToleranceConfig) -> Result<CommandOutput> {
    let (source, text) = match &a.spec {
        Some(path) => (
            path.display().to_string(),
            std::fs::read_to_string(path)
                .map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))?,
        ),
        None => (
            "bundled:gillespie_uniform_3".to_string(),
            BUNDLED_SPEC.to_string(),
        ),
    };
    let spec = PairwiseSpec::from_json(&text)?;
    let opts = FeasibilityOptions {
        tol: *tol,
        ..FeasibilityOptions::default()
    };
    let res = feasibility_solve_with(&spec, &opts)?;
    let mut results = to_value(&res);
    if let Some(w) = &res.witness {
        let n = w.len();
        let mut closure = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                for k in 0..j {
                    closure = closure.max(markov_closure_residual(w, i, j, k).unwrap_or(0.0));
                }
            }
        }
        let back = PairwiseSpec::from_measure(w)?;
        results["witness_checks"] = json!({
            "spec_deviation": back.max_deviation(&spec)?,
            "max_closure_residual": closure,
            "hierarchy": to_value(&check_hierarchy(w, &spec, tol)?),
        });
    }
    let feasible = res.status == FeasibilityStatus::Feasible;
    let verdict = match a.expect {
        Some(Expect::Feasible) | None if feasible => Verdict::Pass,
        Some(Expect::Infeasible) if !feasible => Verdict::Pass,
        _ => Verdict::Fail,
    };
    let report = RunReport {
        command: "feasibility".into(),
        inputs: json!({ "spec": source, "expect": a.expect, "times": grid_json(spec.grid()) }),
        results,
        tolerances: *tol,
        verdict,
    };
    Ok(CommandOutput { report, csv: None })
}

/// Per-column estimate and scores; `None` for an unoccupied conditioning state.
fn transition_scores(
    paths: &[SamplePath],
    later: usize,
    earlier: usize,
    analytic: &StochasticMatrix,
) -> Result<(Value, f64)> {
    let counts = transition_counts(paths, later, earlier)?;
    let mut columns = Vec::new();
    let mut worst = 0.0f64;
    for cond in State::ALL {
        let c = cond.index();
        let occ = counts[0][c] + counts[1][c];
        if occ == 0 {
            columns.push(json!({ "given": cond, "occupancy": 0, "estimate": Value::Null }));
            continue;
        }
        let est = counts[0][c] as f64 / occ as f64;
        let want = analytic.entry(State::One, cond);
        let z = z_score(est, want, occ);
        worst = worst.max(z.abs());
        columns.push(json!({
            "given": cond,
            "occupancy": occ,
            "estimate": [est, 1.0 - est],
            "analytic": [want, 1.0 - want],
            "z": z,
        }));
    }
    Ok((json!(columns), worst))
}

pub fn cmd_simulate(a: &SimulateArgs, tol: &ToleranceConfig) -> Result<CommandOutput> {
    let cfg = QuantumTrajectoryConfig::new(a.omega, 0.0)?;
    let grid = parse_grid(&a.grid)?;
    let p0 = parse_p0(&a.p0)?;
    let family = family_box(a.family, &cfg, false);
    let ens = EnsembleConfig::new(a.n_paths, a.seed, grid.clone())?;
    let paths = sample_paths(&family, &p0, &ens)?;
    let times = grid.times();

    let mut analytic = vec![p0];
    for w in times.windows(2) {
        let next = family
            .eval(w[0], w[1])?
            .apply(analytic.last().expect("nonempty"));
        analytic.push(next);
    }
    let empirical = empirical_marginals(&paths)?;
    let mz = marginal_z_scores(&empirical, &analytic, a.n_paths)?;
    let mut worst_checked = mz.iter().flatten().fold(0.0f64, |m, z| m.max(z.abs()));
    let marginals: Vec<Value> = (0..times.len())
        .map(|k| {
            let mut row = time_json(times[k]);
            row["empirical"] = json!(empirical[k].as_array());
            row["analytic"] = json!(analytic[k].as_array());
            row["z"] = json!(mz[k]);
            row
        })
        .collect();

    let mut consecutive = Vec::new();
    let mut other = Vec::new();
    let mut worst_other = 0.0f64;
    for i in 1..times.len() {
        for j in 0..i {
            let m = family.eval(times[j], times[i])?;
            let (cols, worst) = transition_scores(&paths, i, j, &m)?;
            let entry = json!({ "from": time_json(times[j]), "to": time_json(times[i]), "columns": cols, "max_abs_z": worst });
            if i == j + 1 {
                worst_checked = worst_checked.max(worst);
                consecutive.push(entry);
            } else {
                worst_other = worst_other.max(worst);
                other.push(entry);
            }
        }
    }
    let verdict = if worst_checked <= tol.tol_stat {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let report = RunReport {
        command: "simulate".into(),
        inputs: json!({
            "family": a.family,
            "p0": p0.as_array(),
            "n_paths": a.n_paths,
            "seed": a.seed,
            "grid": grid_json(&grid),
            "omega": a.omega,
        }),
        results: json!({
            "marginals": marginals,
            "consecutive_transitions": consecutive,
            "non_consecutive_transitions": other,
            "max_abs_z_checked": worst_checked,
            "max_abs_z_non_consecutive": worst_other,
            "non_consecutive_agrees": worst_other <= tol.tol_stat,
        }),
        tolerances: *tol,
        verdict,
    };
    let csv = paths_to_csv(&paths, &grid)?;
    Ok(CommandOutput {
        report,
        csv: Some(csv),
    })
}

struct Check {
    name: &'static str,
    expected: Verdict,
    extra: Box<dyn Fn(&RunReport) -> bool>,
}

pub fn cmd_reproduce(a: &ReproduceArgs, tol: &ToleranceConfig) -> Result<CommandOutput> {
    let no_extra = || -> Box<dyn Fn(&RunReport) -> bool> { Box::new(|_| true) };
    let steps: Vec<(Check, Result<CommandOutput>)> = vec![
        (
            Check {
                name: "trajectory",
                expected: Verdict::Pass,
                extra: Box::new(|r| {
                    let last = r.results["rows"].as_array().and_then(|v| v.last()).cloned();
                    last.is_some_and(|row| {
                        row["t_pi"] == "1/4"
                            && (row["p1"].as_f64().unwrap_or(0.0) - 0.5).abs() <= 1e-12
                    })
                }),
            },
            cmd_trajectory(
                &TrajectoryArgs {
                    omega: 1.0,
                    t_max: "pi/4".into(),
                    steps: 2,
                },
                tol,
            ),
        ),
        (
            Check {
                name: "ck_gillespie",
                expected: Verdict::Fail,
                extra: Box::new(|r| {
                    (r.results["ck"]["worst_residual"].as_f64().unwrap_or(0.0) - 0.25).abs()
                        <= 1e-12
                }),
            },
            cmd_ck(
                &CkArgs {
                    family: FamilyName::Gillespie,
                    grid: "0,pi/8,pi/4".into(),
                    omega: 1.0,
                    extended_domain: false,
                },
                tol,
            ),
        ),
        (
            Check {
                name: "ck_interpolation",
                expected: Verdict::Pass,
                extra: no_extra(),
            },
            cmd_ck(
                &CkArgs {
                    family: FamilyName::Interpolation,
                    grid: "linspace:0:pi/4:50".into(),
                    omega: 1.0,
                    extended_domain: false,
                },
                tol,
            ),
        ),
        (
            Check {
                name: "ck_interpolation_beyond_domain",
                expected: Verdict::Fail,
                extra: Box::new(|r| !r.results["positivity_failure"].is_null()),
            },
            cmd_ck(
                &CkArgs {
                    family: FamilyName::Interpolation,
                    grid: "0,pi/8,3pi/8".into(),
                    omega: 1.0,
                    extended_domain: false,
                },
                tol,
            ),
        ),
        (
            Check {
                name: "invariant",
                expected: Verdict::Pass,
                extra: Box::new(|r| {
                    r.results["kind"] == "unique_point"
                        && (r.results["value"].as_f64().unwrap_or(0.0) - 0.5).abs() <= 1e-9
                }),
            },
            cmd_invariant(
                &InvariantArgs {
                    family: FamilyName::Gillespie,
                    grid: "0,pi/8,pi/4,3pi/8".into(),
                    omega: 1.0,
                },
                tol,
            ),
        ),
        (
            Check {
                name: "interval",
                expected: Verdict::NotApplicable,
                extra: Box::new(|r| {
                    let step = r.results["grid_step"].as_f64().unwrap_or(0.0);
                    let off = r.results["offset_from_uniform_time"]
                        .as_f64()
                        .unwrap_or(f64::INFINITY);
                    off.abs() <= 2.0 * step && !r.results["failure_witness"].is_null()
                }),
            },
            cmd_interval(
                &IntervalArgs {
                    grid: "linspace:0:pi/2:10001".into(),
                    omega: 1.0,
                },
                tol,
            ),
        ),
        (
            Check {
                name: "feasibility",
                expected: Verdict::Pass,
                extra: Box::new(|r| r.results["correlation"]["violated"] == true),
            },
            cmd_feasibility(
                &FeasibilityArgs {
                    spec: None,
                    expect: Some(Expect::Infeasible),
                },
                tol,
            ),
        ),
        (
            Check {
                name: "simulate",
                expected: Verdict::Pass,
                extra: no_extra(),
            },
            cmd_simulate(
                &SimulateArgs {
                    family: FamilyName::Interpolation,
                    p0: "1,0".into(),
                    n_paths: a.n_paths,
                    seed: a.seed,
                    grid: "0,pi/8,pi/4".into(),
                    omega: 1.0,
                },
                tol,
            ),
        ),
    ];

    let mut all = true;
    let mut entries = Vec::new();
    for (check, out) in steps {
        let entry = match out {
            Ok(out) => {
                let ok = out.report.verdict == check.expected && (check.extra)(&out.report);
                all &= ok;
                json!({
                    "name": check.name,
                    "expected": check.expected,
                    "verdict": out.report.verdict,
                    "matched": ok,
                    "report": to_value(&out.report),
                })
            }
            Err(e) => {
                all = false;
                json!({ "name": check.name, "expected": check.expected, "matched": false, "error": e.to_string() })
            }
        };
        entries.push(entry);
    }
    let report = RunReport {
        command: "reproduce-paper".into(),
        inputs: json!({ "n_paths": a.n_paths, "seed": a.seed }),
        results: json!({ "checks": entries }),
        tolerances: *tol,
        verdict: if all { Verdict::Pass } else { Verdict::Fail },
    };
    Ok(CommandOutput { report, csv: None })
}
