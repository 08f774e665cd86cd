//! `rmpa` command line: solve, sweep, verify and gen-data.
//!
//! Exit codes: 0 success, 1 robust-infeasible or violation found, 2 input
//! error, 3 iteration limit.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::data::{
    file_digest, read_file, write_file, generate_synthetic, load_boilers, load_config, load_plants, ConfigTable, DatasetKind,
    SyntheticRanges,
};
use crate::error::{Error, Result};
use crate::expr::Binding;
use crate::experiments::{
    monte_carlo_check, sweep_level, sweep_market_share, sweep_omega, write_sweep_csv, LevelScope,
};
use crate::models::{BuiltModel, Scenario};
use crate::robust::{solve_robust, RobustOptions, RobustResult, RobustStatus};
use crate::uncertainty::{SetConfig, SetKind};

pub const SCHEMA_VERSION: u32 = 1;
pub const WORKERS_ENV: &str = "RMPA_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_ITERATION_LIMIT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "rmpa", version, about = "Robust market-potential assessment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one model, nominally or robustly, and write a result JSON.
    Solve(SolveArgs),
    /// Run a level, omega or market-share sweep and write a CSV.
    Sweep(SweepArgs),
    /// Monte-Carlo check of a stored result.
    Verify(VerifyArgs),
    /// Write a synthetic dataset.
    GenData(GenDataArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Tech,
    Fuel,
    Toy,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SetArg {
    Box,
    Ellipsoid,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SweepKind {
    Level,
    Omega,
    MarketShare,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long, value_enum)]
    model: ModelKind,
    /// Plant or boiler CSV (not used by the toy model).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SetArgs {
    #[arg(long = "set", value_enum)]
    set_kind: Option<SetArg>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Pessimization threads; overrides RMPA_WORKERS and the config.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides `robust.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Solve with every parameter at its nominal value.
    #[arg(long, conflicts_with_all = ["set_kind", "level", "omega"])]
    nominal: bool,
    #[command(flatten)]
    set: SetArgs,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum)]
    kind: SweepKind,
    /// Comma-separated, strictly ascending.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Level sweeps only: vary just this symbol or family.
    #[arg(long)]
    symbol: Option<String>,
    #[command(flatten)]
    set: SetArgs,
    #[command(flatten)]
    run: RunArgs,
    /// Defaults to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    result: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Defaults to the configuration stored in the result.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    samples: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    set: SetArgs,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long, value_enum)]
    model: GenModel,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GenModel {
    Tech,
    Fuel,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Solve(a) => cmd_solve(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::GenData(a) => cmd_gen_data(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

fn model_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Tech => "tech",
        ModelKind::Fuel => "fuel",
        ModelKind::Toy => "toy",
    }
}

fn parse_model_name(name: &str) -> Result<ModelKind> {
    match name {
        "tech" => Ok(ModelKind::Tech),
        "fuel" => Ok(ModelKind::Fuel),
        "toy" => Ok(ModelKind::Toy),
        _ => Err(Error::InvalidArgument(format!("unknown model `{name}` in result"))),
    }
}

fn config_or_default(path: Option<&Path>) -> Result<ConfigTable> {
    path.map_or_else(|| Ok(ConfigTable::default()), load_config)
}

/// Scenario plus the dataset digest (`None` for the toy model).
fn scenario(kind: ModelKind, data: Option<&Path>, cfg: &ConfigTable) -> Result<(Scenario, Option<String>)> {
    let need = |what: &str| {
        data.ok_or_else(|| Error::InvalidArgument(format!("--data is required for the {what} model")))
    };
    Ok(match kind {
        ModelKind::Tech => {
            let path = need("tech")?;
            let plants = load_plants(path)?;
            (
                Scenario::Tech {
                    plants,
                    params: cfg.tech_params()?,
                },
                Some(file_digest(path)?),
            )
        }
        ModelKind::Fuel => {
            let path = need("fuel")?;
            let boilers = load_boilers(path)?;
            for w in &boilers.warnings {
                eprintln!("warning: {w}");
            }
            (
                Scenario::Fuel {
                    boilers: boilers.boilers,
                    params: cfg.fuel_params()?,
                },
                Some(file_digest(path)?),
            )
        }
        ModelKind::Toy => (Scenario::Toy, None),
    })
}

fn apply_set_flags(mut base: SetConfig, flags: &SetArgs) -> SetConfig {
    if let Some(k) = flags.set_kind {
        base.kind = match k {
            SetArg::Box => SetKind::Box,
            SetArg::Ellipsoid => SetKind::Ellipsoid,
        };
    }
    if let Some(l) = flags.level {
        base.level = l;
    }
    if let Some(o) = flags.omega {
        base.omega = o;
    }
    base
}

/// flag > `RMPA_WORKERS` > config > host CPUs.
fn resolve_workers(flag: Option<usize>, cfg: &ConfigTable) -> Result<usize> {
    if let Some(w) = flag {
        return Ok(w);
    }
    if let Ok(raw) = std::env::var(WORKERS_ENV) {
        return raw
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("{WORKERS_ENV}={raw} is not a worker count")));
    }
    if let Some(w) = cfg.workers()? {
        return Ok(w);
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn robust_options(run: &RunArgs, cfg: &ConfigTable) -> Result<RobustOptions> {
    let mut opts = cfg.robust_options()?;
    opts.workers = resolve_workers(run.workers, cfg)?;
    if opts.workers == 0 {
        return Err(Error::InvalidArgument("worker count must be at least 1".into()));
    }
    if let Some(s) = run.seed {
        opts.seed = s;
    }
    Ok(opts)
}

fn exit_for(status: RobustStatus) -> i32 {
    match status {
        RobustStatus::RobustOptimal => EXIT_OK,
        RobustStatus::RobustInfeasible => EXIT_VIOLATION,
        RobustStatus::IterationLimit => EXIT_ITERATION_LIMIT,
    }
}

fn policy_json(model: &BuiltModel, kind: ModelKind, x: &Binding) -> Value {
    let (pk, sk) = match kind {
        ModelKind::Tech => ("t", "m"),
        ModelKind::Fuel => ("G", "phi"),
        ModelKind::Toy => return json!([]),
    };
    model
        .ids
        .iter()
        .zip(model.policy.iter().zip(&model.shares))
        .map(|(id, (p, s))| json!({ "id": id, pk: x.get(p.name()), sk: x.get(s.name()) }))
        .collect()
}

fn cuts_json(model: &BuiltModel, result: &RobustResult) -> Value {
    model
        .problem
        .constraints
        .iter()
        .zip(&result.cuts.per_constraint)
        .map(|(c, cuts)| {
            let list: Vec<Value> = cuts
                .iter()
                .map(|k| json!({ "iteration": k.iteration, "violation": k.violation, "seeded": k.seeded, "u": k.u }))
                .collect();
            json!({ "constraint": c.name, "cuts": list })
        })
        .collect()
}

/// Result document for one solve. Wall-clock fields are confined to
/// `manifest.timings` and the `*_s` fields of the iteration log.
#[allow(clippy::too_many_arguments)]
fn result_json(
    kind: ModelKind,
    cfg: &ConfigTable,
    digest: Option<&str>,
    opts: &RobustOptions,
    set: &SetConfig,
    model: &BuiltModel,
    result: &RobustResult,
    total_s: f64,
) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "manifest": {
            "command": "solve",
            "model": model_name(kind),
            "config": cfg,
            "data_sha256": digest,
            "seed": opts.seed,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "timings": {
                "total_s": total_s,
                "upper_s": result.upper_seconds(),
                "pessimize_s": result.pessimize_seconds(),
            },
        },
        "status": result.status.as_str(),
        "objective": result.objective,
        "iterations": result.iterations,
        "size": model.size,
        "set": set,
        "policy": policy_json(model, kind, &result.x),
        "solution": result.x,
        "cuts": cuts_json(model, result),
        "log": result.log,
    })
}

/// Removes every wall-clock field so results can be compared byte for byte.
pub fn strip_timings(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.retain(|k, _| k != "timings" && !k.ends_with("_s"));
            map.values_mut().for_each(strip_timings);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timings),
        _ => {}
    }
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn cmd_solve(a: &SolveArgs) -> Result<i32> {
    let t = Instant::now();
    let cfg = config_or_default(a.model.config.as_deref())?;
    let (scenario, digest) = scenario(a.model.model, a.model.data.as_deref(), &cfg)?;
    let opts = robust_options(&a.run, &cfg)?;
    let set_cfg = if a.nominal {
        SetConfig::boxed(0.0)
    } else {
        apply_set_flags(cfg.set_config()?, &a.set)
    };
    let model = scenario.build()?;
    let set = set_cfg.build(&model.problem.params)?;
    let result = solve_robust(&model.problem, &set, &opts)?;
    let doc = result_json(
        a.model.model,
        &cfg,
        digest.as_deref(),
        &opts,
        &set_cfg,
        &model,
        &result,
        t.elapsed().as_secs_f64(),
    );
    write_json(&a.out, &doc)?;
    eprintln!(
        "{}: objective {} after {} iterations ({:.2}s)",
        result.status.as_str(),
        result.objective,
        result.iterations,
        t.elapsed().as_secs_f64()
    );
    Ok(exit_for(result.status))
}

fn cmd_sweep(a: &SweepArgs) -> Result<i32> {
    let cfg = config_or_default(a.model.config.as_deref())?;
    let (scenario, _) = scenario(a.model.model, a.model.data.as_deref(), &cfg)?;
    let opts = robust_options(&a.run, &cfg)?;
    if a.symbol.is_some() && !matches!(a.kind, SweepKind::Level) {
        return Err(Error::InvalidArgument("--symbol only applies to level sweeps".into()));
    }
    let set_cfg = apply_set_flags(cfg.set_config()?, &a.set);
    let rows = match a.kind {
        SweepKind::Level => {
            let scope = a.symbol.clone().map_or(LevelScope::All, LevelScope::Only);
            sweep_level(&scenario, &a.values, &scope, &opts)?
        }
        SweepKind::Omega => sweep_omega(&scenario, set_cfg.level, &a.values, &opts)?,
        SweepKind::MarketShare => sweep_market_share(&scenario, &a.values, &set_cfg, &opts)?,
    };
    let mut buf = format!("# schema_version: {SCHEMA_VERSION}\n").into_bytes();
    write_sweep_csv(&rows, &mut buf)?;
    match &a.out {
        Some(p) => write_file(p, &buf)?,
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&buf)?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_verify(a: &VerifyArgs) -> Result<i32> {
    if a.samples == 0 {
        return Err(Error::InvalidArgument("--samples must be at least 1".into()));
    }
    let doc: Value = serde_json::from_str(&read_file(&a.result)?)?;
    let bad = |what: &str| Error::InvalidArgument(format!("{}: missing or malformed `{what}`", a.result.display()));
    let manifest = doc.get("manifest").ok_or_else(|| bad("manifest"))?;
    let kind = parse_model_name(manifest.get("model").and_then(Value::as_str).ok_or_else(|| bad("manifest.model"))?)?;
    let cfg = match &a.config {
        Some(p) => load_config(p)?,
        None => {
            let stored: ConfigTable = serde_json::from_value(manifest.get("config").cloned().ok_or_else(|| bad("manifest.config"))?)?;
            let text: String = stored.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
            ConfigTable::parse(&text, "stored config")?
        }
    };
    let (scenario, digest) = scenario(kind, a.data.as_deref(), &cfg)?;
    let stored_digest = manifest.get("data_sha256").and_then(Value::as_str);
    if let (Some(have), Some(want)) = (digest.as_deref(), stored_digest) {
        if have != want {
            return Err(Error::InvalidArgument(format!(
                "dataset digest {have} differs from the result's {want}"
            )));
        }
    }
    let x: Binding = serde_json::from_value(doc.get("solution").cloned().ok_or_else(|| bad("solution"))?)?;
    let base = match (&a.config, doc.get("set")) {
        (None, Some(s)) => serde_json::from_value(s.clone())?,
        _ => cfg.set_config()?,
    };
    let set_cfg = apply_set_flags(base, &a.set);
    let model = scenario.build()?;
    let set = set_cfg.build(&model.problem.params)?;
    let report = monte_carlo_check(&model.problem, &set, &x, a.samples, a.tol, a.seed)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "schema_version": SCHEMA_VERSION,
            "set": set_cfg,
            "tol": a.tol,
            "seed": a.seed,
            "report": report,
            "worst_constraint_name": model.problem.constraints[report.worst_constraint].name,
        }))?
    );
    Ok(if report.violation_rate > 0.0 { EXIT_VIOLATION } else { EXIT_OK })
}

fn cmd_gen_data(a: &GenDataArgs) -> Result<i32> {
    let kind = match a.model {
        GenModel::Tech => DatasetKind::Tech,
        GenModel::Fuel => DatasetKind::Fuel,
    };
    let text = generate_synthetic(kind, a.n, a.seed, &SyntheticRanges::default())?;
    write_file(&a.out, text.as_bytes())?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strip_removes_wall_clock_fields() {
        let mut v = json!({ "a": 1, "timings": { "x": 2 }, "log": [{ "upper_s": 3.0, "k": 4 }] });
        strip_timings(&mut v);
        assert_eq!(v, json!({ "a": 1, "log": [{ "k": 4 }] }));
    }

    #[test]
    fn flag_overrides_config_workers() {
        let cfg = ConfigTable::parse("robust.workers = 3\n", "cfg").unwrap();
        assert_eq!(resolve_workers(Some(5), &cfg).unwrap(), 5);
    }

    #[test]
    fn set_flags_override_config() {
        let base = SetConfig::ellipsoid(0.1, 2.0);
        let flags = SetArgs {
            set_kind: Some(SetArg::Box),
            level: Some(0.2),
            omega: None,
        };
        let s = apply_set_flags(base, &flags);
        assert_eq!((s.kind, s.level, s.omega), (SetKind::Box, 0.2, 2.0));
    }
}
