//! Acceptance criteria 1 to 10. Run with `--nocapture` to see one PASS/FAIL
//! line per criterion.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use rmpa::cli::strip_timings;
use rmpa::data::{synthetic_boilers, synthetic_plants};
use rmpa::experiments::{grid_pessimize, monte_carlo_check, sweep_level, sweep_market_share, LevelScope, SweepRow};
use rmpa::expr::{evaluate, gradient, Binding, Expr, Symbol, SymbolKind};
use rmpa::models::{
    build_fuel_problem, build_tech_problem, build_toy_problem, cost_reduction_fraction, learning_exponent, BuiltModel,
    CostBasis, FuelParams, Scenario, TechParams,
};
use rmpa::robust::{pessimize, solve_nominal, solve_robust, PessimizeOptions, RobustOptions, RobustStatus};
use rmpa::uncertainty::{
    chance_epsilon, omega_for_epsilon, BoxSet, PhysicalBounds, SetConfig, UncertainParam, UncertainSpec,
    UncertaintySet,
};

struct Outcome {
    pass: bool,
    detail: String,
    /// False when the host cannot meet the criterion's hardware premise; the
    /// line is still printed but does not fail the run.
    enforced: bool,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self {
            pass,
            detail,
            enforced: true,
        }
    }
}

fn opts() -> RobustOptions {
    RobustOptions {
        workers: 1,
        ..RobustOptions::default()
    }
}

fn tech_model(n: usize) -> BuiltModel {
    build_tech_problem(&synthetic_plants(n, 0).unwrap(), &TechParams::default()).unwrap()
}

fn fuel_model(n: usize) -> BuiltModel {
    build_fuel_problem(&synthetic_boilers(n, 0).unwrap(), &FuelParams::default()).unwrap()
}

fn criterion_1() -> Outcome {
    let eps = chance_epsilon(3.7).unwrap();
    let calibrated = (9.0e-4..=1.2e-3).contains(&eps);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let omega = rng.random_range(0.1..6.0);
        let back = omega_for_epsilon(chance_epsilon(omega).unwrap()).unwrap();
        worst = worst.max((back - omega).abs());
    }
    Outcome::new(
        calibrated && worst <= 1e-12,
        format!("epsilon(3.7) = {eps:.4e}, round-trip error {worst:.1e}"),
    )
}

fn criterion_2() -> Outcome {
    let t = tech_model(32).size;
    let f = fuel_model(354).size;
    let pass = (t.variables, t.constraints, t.uncertain) == (64, 66, 36)
        && (f.variables, f.constraints) == (709, 710)
        && f.uncertain == 361;
    Outcome::new(
        pass,
        format!(
            "tech {}/{}/{}, fuel {}/{}/{} (variables/constraints/uncertain)",
            t.variables, t.constraints, t.uncertain, f.variables, f.constraints, f.uncertain
        ),
    )
}

fn criterion_3() -> Outcome {
    let model = build_toy_problem();
    let set = SetConfig::boxed(0.5).build(&model.problem.params).unwrap();
    let r = solve_robust(&model.problem, &set, &opts()).unwrap();
    // Worst case is u = (1.5, 1.5): minimize x1 + x2 on the disc of radius sqrt(1/1.5).
    let oracle = -(2.0f64 / 1.5).sqrt();
    let mc = monte_carlo_check(&model.problem, &set, &r.x, 100_000, 1e-6, 3).unwrap();
    let pass = r.status == RobustStatus::RobustOptimal
        && r.iterations <= 20
        && (r.objective - oracle).abs() <= 1e-3
        && mc.violation_rate == 0.0;
    Outcome::new(
        pass,
        format!(
            "{} in {} iterations, objective {:.6} vs {oracle:.6}, Monte-Carlo rate {}",
            r.status.as_str(),
            r.iterations,
            r.objective,
            mc.violation_rate
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let lr = rng.random_range(0.0..0.5);
        let got = cost_reduction_fraction(2.0, learning_exponent(lr).unwrap()).unwrap();
        worst = worst.max((got - lr).abs());
    }
    let half = learning_exponent(0.5).unwrap();
    Outcome::new(
        worst <= 1e-12 && half == -1.0,
        format!("max |reduction(2) - Lr| = {worst:.1e}, exponent(0.5) = {half}"),
    )
}

/// Random interior point: decisions strictly inside their bounds, parameters
/// within 10% of nominal.
fn interior_point(model: &BuiltModel, rng: &mut ChaCha8Rng) -> Binding {
    let mut b = Binding::new();
    for v in &model.problem.decisions {
        let t = rng.random_range(0.1..0.9);
        b.insert(v.symbol.name(), v.lower + t * (v.upper - v.lower));
    }
    for p in &model.problem.params {
        b.insert(p.symbol.name(), p.nominal * rng.random_range(0.9..1.1));
    }
    b
}

fn central_difference(e: &Expr, at: &Binding, name: &str) -> f64 {
    let x = at.get(name).unwrap();
    let h = 1e-6 * x.abs().max(1.0);
    let mut shifted = at.clone();
    let mut f = |dx: f64| {
        shifted.insert(name, x + dx);
        evaluate(e, &shifted).unwrap()
    };
    (f(h) - f(-h)) / (2.0 * h)
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let models = [tech_model(32), fuel_model(20)];
    let mut worst = (0.0f64, String::new());
    let mut checked = 0usize;
    for model in &models {
        let p = &model.problem;
        // One member per constraint family keeps the run short; members differ only by index.
        let mut exprs: Vec<(&str, &Expr)> = vec![("objective", &p.objective)];
        if let Some(t) = &p.tiebreak {
            exprs.push(("tiebreak", t));
        }
        let mut families = std::collections::BTreeSet::new();
        for c in &p.constraints {
            let fam = c.name.split('[').next().unwrap().to_string();
            if families.insert(fam) {
                exprs.push((c.name.as_str(), &c.expr));
            }
        }
        for _ in 0..100 {
            let at = interior_point(model, &mut rng);
            for (label, e) in &exprs {
                let syms: Vec<Symbol> = e.free_symbols();
                let ad = gradient(e, &syms, &at).unwrap();
                for (s, g) in syms.iter().zip(ad) {
                    let fd = central_difference(e, &at, s.name());
                    let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1.0);
                    checked += 1;
                    if rel > worst.0 {
                        worst = (rel, format!("{label} d/d{}", s.name()));
                    }
                }
            }
        }
    }
    Outcome::new(
        worst.0 < 1e-6,
        format!("{checked} partials, worst relative error {:.2e} ({})", worst.0, worst.1),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = Symbol::decision("x");
    let mut worst = 0.0f64;
    for case in 0..20 {
        let dim = 1 + case % 3;
        let syms: Vec<Symbol> = (0..dim).map(|k| Symbol::member("u", k, SymbolKind::Uncertain)).collect();
        let us: Vec<Expr> = syms.iter().map(Expr::symbol).collect();
        let mut g = rng.random_range(-1.0..1.0) * Expr::symbol(&x);
        for u in &us {
            g = g + rng.random_range(-2.0..2.0) * u;
        }
        if case % 2 == 1 {
            for i in 0..dim {
                for j in i..dim {
                    g = g + rng.random_range(-1.5..1.5) * (&us[i] * &us[j]);
                }
            }
        }
        let specs = syms
            .iter()
            .map(|s| {
                let p = UncertainParam::new(s.clone(), rng.random_range(0.5..2.0), PhysicalBounds::UNBOUNDED);
                UncertainSpec::new(p, rng.random_range(0.05..0.5)).unwrap()
            })
            .collect();
        let set = UncertaintySet::Box(BoxSet::new(specs).unwrap());
        let at: Binding = [("x", rng.random_range(-1.0..1.0))].into_iter().collect();
        let popts = PessimizeOptions {
            seed: case as u64,
            ..PessimizeOptions::default()
        };
        let found = pessimize(&g, &at, &set, &popts).unwrap().violation;
        let grid = grid_pessimize(&g, &at, &set, 201).unwrap().violation;
        worst = worst.max((found - grid).abs() / grid.abs().max(1.0));
    }
    Outcome::new(worst <= 1e-3, format!("20 box constraints, worst relative gap {worst:.2e}"))
}

fn criterion_7() -> Outcome {
    let mut worst = 0.0f64;
    for model in [tech_model(32), fuel_model(40)] {
        let p = &model.problem;
        let nominal_set = SetConfig::boxed(0.0).build(&p.params).unwrap();
        let nom = solve_nominal(p, &nominal_set, &opts()).unwrap();
        let nominal = evaluate(&p.objective, &nom.x).unwrap();
        for cfg in [SetConfig::boxed(0.0), SetConfig::ellipsoid(0.05, 0.0)] {
            let set = cfg.build(&p.params).unwrap();
            let r = solve_robust(p, &set, &opts()).unwrap();
            let gap = if r.status == RobustStatus::RobustOptimal {
                (r.objective - nominal).abs()
            } else {
                f64::INFINITY
            };
            worst = worst.max(gap);
        }
    }
    Outcome::new(worst <= 1e-8, format!("worst gap to nominal {worst:.2e}"))
}

/// Objective with infeasible rows mapped to +infinity.
fn objective_or_inf(row: &SweepRow) -> f64 {
    match row.status {
        RobustStatus::RobustOptimal => row.objective.unwrap(),
        _ => f64::INFINITY,
    }
}

fn criterion_8() -> Outcome {
    let scenario = Scenario::Tech {
        plants: synthetic_plants(32, 0).unwrap(),
        params: TechParams::default(),
    };
    let levels: Vec<f64> = (0..=10).map(|k| k as f64 / 100.0).collect();
    let rows = sweep_level(&scenario, &levels, &LevelScope::All, &opts()).unwrap();
    let objs: Vec<f64> = rows.iter().map(objective_or_inf).collect();
    let monotone = objs.windows(2).all(|w| w[1] >= w[0] - 1e-6);
    let flip = rows.iter().position(|r| r.status == RobustStatus::RobustInfeasible);
    Outcome::new(
        monotone && flip.is_some(),
        format!(
            "non-decreasing: {monotone}, first robust-infeasible level: {}",
            flip.map_or("none".into(), |i| format!("{:.2}", levels[i]))
        ),
    )
}

fn criterion_9() -> Outcome {
    let tech = Scenario::Tech {
        plants: synthetic_plants(32, 0).unwrap(),
        params: TechParams {
            cost_basis: CostBasis::Learned,
            ..TechParams::default()
        },
    };
    let set = SetConfig::boxed(0.02);
    let rows = sweep_market_share(&tech, &[0.1, 0.2, 0.3, 0.4, 0.5], &set, &opts()).unwrap();
    let all_optimal = |rows: &[SweepRow]| rows.iter().all(|r| r.status == RobustStatus::RobustOptimal);
    let tax_ok = all_optimal(&rows)
        && rows.windows(2).all(|w| w[1].policy_mean <= w[0].policy_mean + 1e-6)
        && rows.windows(2).all(|w| w[1].reduction >= w[0].reduction - 1e-9);
    let taxes: Vec<String> = rows.iter().map(|r| format!("{:.2}", r.policy_mean)).collect();

    let fuel = Scenario::Fuel {
        boilers: synthetic_boilers(354, 0).unwrap(),
        params: FuelParams {
            cost_basis: CostBasis::Initial,
            ..FuelParams::default()
        },
    };
    let rows = sweep_market_share(&fuel, &[0.005, 0.01, 0.025, 0.05, 0.1], &set, &opts()).unwrap();
    let grants: Vec<f64> = rows.iter().map(|r| r.policy_mean).collect();
    let lo = grants.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grants.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = (hi - lo) / lo.abs();
    let grant_ok = all_optimal(&rows) && spread <= 0.01;
    Outcome::new(
        tax_ok && grant_ok,
        format!("tech taxes [{}], fuel grant spread {spread:.2e}", taxes.join(", ")),
    )
}

fn run_cli(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_rmpa"))
        .args(args)
        .status()
        .expect("run rmpa")
        .code()
        .unwrap_or(-1)
}

fn solve_fuel(dir: &Path, data: &str, workers: &str) -> (Value, f64, i32) {
    let out = dir.join(format!("fuel-{workers}.json"));
    let out = out.to_str().unwrap();
    let code = run_cli(&[
        "solve", "--model", "fuel", "--data", data, "--set", "box", "--level", "0.02", "--workers", workers, "--out",
        out,
    ]);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    let pessimize_s = doc["manifest"]["timings"]["pessimize_s"].as_f64().unwrap();
    (doc, pessimize_s, code)
}

fn criterion_10() -> Vec<Outcome> {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("boilers.csv");
    let data = data.to_str().unwrap();
    assert_eq!(run_cli(&["gen-data", "--model", "fuel", "--n", "354", "--seed", "0", "--out", data]), 0);
    let (mut serial, t1, c1) = solve_fuel(dir.path(), data, "1");
    let (mut parallel, t4, c4) = solve_fuel(dir.path(), data, "4");
    let status = serial["status"].as_str().unwrap_or("").to_string();
    strip_timings(&mut serial);
    strip_timings(&mut parallel);
    let identical = serde_json::to_string(&serial).unwrap() == serde_json::to_string(&parallel).unwrap();
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    let speedup = t1 / t4;
    vec![
        Outcome::new(
            c1 == 0 && c4 == 0 && identical,
            format!("{status}, exit codes {c1}/{c4}, JSON identical without timings: {identical}"),
        ),
        Outcome {
            pass: speedup >= 1.5,
            detail: format!("pessimization {t1:.2}s with 1 worker, {t4:.2}s with 4, speedup {speedup:.2}x on {cpus} CPU(s)"),
            enforced: cpus >= 4,
        },
    ]
}

#[test]
fn acceptance() {
    let mut lines: Vec<(String, Outcome)> = Vec::new();
    let mut record = |id: &str, f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let mut o = f();
        o.detail = format!("{} [{:.1}s]", o.detail, t.elapsed().as_secs_f64());
        lines.push((id.to_string(), o));
    };
    record("1 chance calibration", &criterion_1);
    record("2 model sizes", &criterion_2);
    record("3 cutting-set convergence", &criterion_3);
    record("4 learning identities", &criterion_4);
    record("5 gradient correctness", &criterion_5);
    record("6 pessimization oracle", &criterion_6);
    record("7 degenerate-set identity", &criterion_7);
    record("8 monotonicity and infeasibility", &criterion_8);
    record("9 qualitative trends", &criterion_9);
    let mut c10 = criterion_10().into_iter();
    lines.push(("10a parallel determinism".into(), c10.next().unwrap()));
    lines.push(("10b parallel speedup".into(), c10.next().unwrap()));

    let mut failed = Vec::new();
    for (id, o) in &lines {
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        let note = if o.enforced { "" } else { " (needs >= 4 CPUs, not enforced on this host)" };
        println!("{verdict} criterion {id}: {}{note}", o.detail);
        if !o.pass && o.enforced {
            failed.push(id.clone());
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
