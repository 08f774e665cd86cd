//! Brute-force checks on robust solutions and the sweep drivers.

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{evaluate, substitute, Binding, Expr, Tape, TapeWorkspace};
use crate::models::{BuiltModel, Scenario};
use crate::robust::{
    reinstantiate, solve_nominal, solve_robust_seeded, CutSet, Pessimized,
    RobustOptions, RobustResult, RobustStatus, UncertainProblem,
};
use crate::uncertainty::{chance_epsilon, SetConfig, SetKind, UncertaintySet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub samples: usize,
    /// Largest constraint value seen (may be negative).
    pub max_violation: f64,
    /// Fraction of draws where some constraint exceeds `tol`.
    pub violation_rate: f64,
    pub worst_u: Binding,
    /// Index of the constraint attaining `max_violation`.
    pub worst_constraint: usize,
}

/// Draws `n` uniform members of the set and evaluates every constraint at `x_star`.
pub fn monte_carlo_check(
    problem: &UncertainProblem,
    set: &UncertaintySet,
    x_star: &Binding,
    n: usize,
    tol: f64,
    seed: u64,
) -> Result<MonteCarloReport> {
    let index = set.index_of();
    let tapes = problem
        .constraints
        .iter()
        .map(|c| Tape::compile(&substitute(&c.expr, x_star), |s| index.get(s.name()).copied()))
        .collect::<Result<Vec<_>>>()?;
    let nominal: Vec<f64> = set.specs().iter().map(|s| s.nominal()).collect();
    let hw: Vec<f64> = set.specs().iter().map(|s| s.halfwidth()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ws = TapeWorkspace::default();
    let mut u = nominal.clone();
    let mut worst = (f64::NEG_INFINITY, 0, nominal.clone());
    let mut violating = 0usize;
    for _ in 0..n {
        let z = set.sample_normalized(&mut rng, false);
        for k in 0..u.len() {
            u[k] = nominal[k] + hw[k] * z[k];
        }
        let mut any = false;
        for (i, t) in tapes.iter().enumerate() {
            let v = t.eval(&u, &mut ws)?;
            if v > tol {
                any = true;
            }
            if v > worst.0 {
                worst = (v, i, u.clone());
            }
        }
        violating += usize::from(any);
    }
    let worst_u = set.specs().iter().zip(&worst.2).map(|(s, &v)| (s.name(), v)).collect();
    Ok(MonteCarloReport {
        samples: n,
        max_violation: worst.0,
        violation_rate: if n == 0 { 0.0 } else { violating as f64 / n as f64 },
        worst_u,
        worst_constraint: worst.1,
    })
}

/// Exhaustive maximum of `g(x, ·)` over a grid on the set, for at most three
/// varying parameters. Ellipsoid grids keep only points inside the ball.
pub fn grid_pessimize(constraint: &Expr, x: &Binding, set: &UncertaintySet, points_per_dim: usize) -> Result<Pessimized> {
    if points_per_dim < 2 {
        return Err(Error::InvalidArgument("grid needs at least 2 points per dimension".into()));
    }
    let g = substitute(constraint, x);
    let mut nominal = Binding::new();
    let mut active = Vec::new();
    for s in g.free_symbols() {
        let spec = set
            .spec(s.name())
            .ok_or_else(|| Error::Model(format!("symbol `{s}` is not in the set")))?;
        nominal.insert(s.name(), spec.nominal());
        if spec.halfwidth() > 0.0 && set.radius() > 0.0 {
            active.push((s.name().to_string(), spec.nominal(), spec.halfwidth()));
        }
    }
    if active.len() > 3 {
        return Err(Error::InvalidArgument(format!(
            "grid pessimization supports at most 3 varying parameters, got {}",
            active.len()
        )));
    }
    let zero_z = || nominal.iter().map(|(n, _)| (n, 0.0)).collect::<Binding>();
    if active.is_empty() {
        let violation = evaluate(&g, &nominal)?;
        return Ok(Pessimized {
            z: zero_z(),
            u: nominal,
            violation,
        });
    }

    let slot: std::collections::HashMap<&str, usize> =
        nominal.iter().enumerate().map(|(i, (n, _))| (n, i)).collect();
    let tape = Tape::compile(&g, |s| slot.get(s.name()).copied())?;
    let positions: Vec<usize> = active.iter().map(|(n, _, _)| slot[n.as_str()]).collect();
    let r = set.radius();
    let ticks: Vec<f64> = (0..points_per_dim)
        .map(|k| -r + 2.0 * r * k as f64 / (points_per_dim - 1) as f64)
        .collect();

    let mut u: Vec<f64> = nominal.iter().map(|(_, v)| v).collect();
    let mut ws = TapeWorkspace::default();
    let mut best = (f64::NEG_INFINITY, vec![0.0; active.len()]);
    let d = active.len();
    let total = points_per_dim.pow(d as u32);
    let mut z = vec![0.0; d];
    for flat in 0..total {
        let mut rem = flat;
        for zk in z.iter_mut() {
            *zk = ticks[rem % points_per_dim];
            rem /= points_per_dim;
        }
        if set.kind() == SetKind::Ellipsoid && z.iter().map(|v| v * v).sum::<f64>() > r * r * (1.0 + 1e-12) {
            continue;
        }
        for (k, (_, nom, hw)) in active.iter().enumerate() {
            u[positions[k]] = nom + hw * z[k];
        }
        let v = tape.eval(&u, &mut ws)?;
        if v > best.0 {
            best = (v, z.clone());
        }
    }
    let mut zb = zero_z();
    let mut ub = nominal;
    for ((name, nom, hw), zk) in active.iter().zip(&best.1) {
        ub.insert(name.clone(), nom + hw * zk);
        zb.insert(name.clone(), *zk);
    }
    Ok(Pessimized {
        u: ub,
        z: zb,
        violation: best.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: f64,
    pub status: RobustStatus,
    /// Absent when the point is robust-infeasible.
    pub objective: Option<f64>,
    pub pct_increase: Option<f64>,
    /// Cost reduction at the solution, nominal parameters.
    pub reduction: f64,
    pub policy_min: f64,
    pub policy_mean: f64,
    pub policy_max: f64,
    pub total_share: f64,
    pub iterations: usize,
    pub wall_s: f64,
    /// Chance-of-violation bound, Ω sweeps only.
    pub epsilon: Option<f64>,
}

pub const SWEEP_HEADER: &str =
    "param,status,objective,pct_increase,reduction,policy_min,policy_mean,policy_max,total_share,iterations,wall_s";

/// Which parameters a level sweep varies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LevelScope {
    All,
    /// One symbol or family; everything else is held at nominal.
    Only(String),
}

/// Nominal objectives below `ZERO_NOMINAL` in magnitude are solver noise around zero.
const ZERO_NOMINAL: f64 = 1e-6;

fn pct_increase(objective: f64, nominal: f64) -> Option<f64> {
    (nominal.abs() > ZERO_NOMINAL).then(|| 100.0 * (objective - nominal) / nominal.abs())
}

fn row(model: &BuiltModel, param: f64, result: &RobustResult, nominal: f64, wall_s: f64) -> Result<SweepRow> {
    let mut at = model.nominal();
    at.extend(&result.x);
    let reduction = evaluate(&model.reduction, &at)?;
    let policy: Vec<f64> = model
        .policy
        .iter()
        .map(|s| result.x.get(s.name()).unwrap_or(f64::NAN))
        .collect();
    let (mut lo, mut hi, mut mean) = (f64::NAN, f64::NAN, f64::NAN);
    if !policy.is_empty() {
        lo = policy.iter().copied().fold(f64::INFINITY, f64::min);
        hi = policy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        mean = policy.iter().sum::<f64>() / policy.len() as f64;
        if hi - lo <= 1e-6 {
            // one common policy level
            lo = mean;
            hi = mean;
        }
    }
    let feasible = result.status != RobustStatus::RobustInfeasible;
    let objective = feasible.then_some(result.objective);
    Ok(SweepRow {
        param,
        status: result.status,
        objective,
        pct_increase: objective.and_then(|o| pct_increase(o, nominal)),
        reduction,
        policy_min: lo,
        policy_mean: mean,
        policy_max: hi,
        total_share: model.shares.iter().filter_map(|s| result.x.get(s.name())).sum(),
        iterations: result.iterations,
        wall_s,
        epsilon: None,
    })
}

fn check_ascending(what: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidArgument(format!("{what} list is empty")));
    }
    if values.windows(2).any(|w| !(w[0] < w[1])) || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what} values must be finite and strictly ascending")));
    }
    Ok(())
}

/// Robust solves of one model over a sequence of sets; each solve starts
/// from the previous one's cuts moved into the new set.
fn sweep_sets(
    model: &BuiltModel,
    params: &[f64],
    sets: impl Iterator<Item = Result<UncertaintySet>>,
    nominal: f64,
    opts: &RobustOptions,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(params.len());
    let mut carried = CutSet::default();
    for (&param, set) in params.iter().zip(sets) {
        let set = set?;
        let t = Instant::now();
        let seeds = reinstantiate(&carried, &set)?;
        let result = solve_robust_seeded(&model.problem, &set, opts, &seeds)?;
        let wall = t.elapsed().as_secs_f64();
        log::info!("sweep point {param}: {} in {wall:.2}s", result.status.as_str());
        rows.push(row(model, param, &result, nominal, wall)?);
        if result.status != RobustStatus::RobustInfeasible {
            carried = result.cuts;
        }
    }
    Ok(rows)
}

fn nominal_objective(model: &BuiltModel, opts: &RobustOptions) -> Result<f64> {
    let set = SetConfig::boxed(0.0).build(&model.problem.params)?;
    let sol = solve_nominal(&model.problem, &set, opts)?;
    evaluate(&model.problem.objective, &sol.x)
}

/// One box-set robust solve per level.
pub fn sweep_level(scenario: &Scenario, levels: &[f64], scope: &LevelScope, opts: &RobustOptions) -> Result<Vec<SweepRow>> {
    check_ascending("level", levels)?;
    let model = scenario.build()?;
    let nominal = nominal_objective(&model, opts)?;
    let sets = levels.iter().map(|&l| {
        let cfg = match scope {
            LevelScope::All => SetConfig::boxed(l),
            LevelScope::Only(name) => SetConfig::single_family(SetKind::Box, name, l, 0.0),
        };
        cfg.build(&model.problem.params)
    });
    sweep_sets(&model, levels, sets, nominal, opts)
}

/// One ellipsoid robust solve per Ω at a fixed level; rows carry ε.
pub fn sweep_omega(scenario: &Scenario, level: f64, omegas: &[f64], opts: &RobustOptions) -> Result<Vec<SweepRow>> {
    check_ascending("omega", omegas)?;
    let model = scenario.build()?;
    let nominal = nominal_objective(&model, opts)?;
    let sets = omegas
        .iter()
        .map(|&o| SetConfig::ellipsoid(level, o).build(&model.problem.params));
    let mut rows = sweep_sets(&model, omegas, sets, nominal, opts)?;
    for r in &mut rows {
        r.epsilon = Some(chance_epsilon(r.param)?);
    }
    Ok(rows)
}

/// One robust solve per market-share limit over a fixed set. Percent
/// increases are relative to the nominal solve at the same limit.
pub fn sweep_market_share(scenario: &Scenario, mus: &[f64], set: &SetConfig, opts: &RobustOptions) -> Result<Vec<SweepRow>> {
    check_ascending("market share", mus)?;
    let mut rows = Vec::with_capacity(mus.len());
    let mut carried = CutSet::default();
    for &mu in mus {
        let model = scenario.with_mu(mu).build()?;
        let nominal = nominal_objective(&model, opts)?;
        let s = set.build(&model.problem.params)?;
        let t = Instant::now();
        let seeds = reinstantiate(&carried, &s)?;
        let result = solve_robust_seeded(&model.problem, &s, opts, &seeds)?;
        let wall = t.elapsed().as_secs_f64();
        rows.push(row(&model, mu, &result, nominal, wall)?);
        if result.status != RobustStatus::RobustInfeasible {
            carried = result.cuts;
        }
    }
    Ok(rows)
}

fn cell(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x}"),
        _ => String::new(),
    }
}

/// Writes rows under [`SWEEP_HEADER`], plus an `epsilon` column when any
/// row carries one.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let with_eps = rows.iter().any(|r| r.epsilon.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = SWEEP_HEADER.split(',').collect();
    if with_eps {
        header.push("epsilon");
    }
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![
            format!("{}", r.param),
            r.status.as_str().to_string(),
            cell(r.objective),
            cell(r.pct_increase),
            cell(Some(r.reduction)),
            cell(Some(r.policy_min)),
            cell(Some(r.policy_mean)),
            cell(Some(r.policy_max)),
            cell(Some(r.total_share)),
            r.iterations.to_string(),
            format!("{:.3}", r.wall_s),
        ];
        if with_eps {
            rec.push(cell(r.epsilon));
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Symbol;
    use crate::models::build_toy_problem;
    use crate::robust::{solve_robust, RobustConstraint};
    use crate::uncertainty::{BoxSet, PhysicalBounds, UncertainParam, UncertainSpec};

    fn toy_set(level: f64) -> (BuiltModel, UncertaintySet) {
        let m = build_toy_problem();
        let set = SetConfig::boxed(level).build(&m.problem.params).unwrap();
        (m, set)
    }

    #[test]
    fn constant_constraint_never_violates() {
        let x = Symbol::decision("x");
        let u = Symbol::uncertain("u");
        let prob = UncertainProblem::new(
            vec![crate::nlp::Variable::new(x.clone(), 0.0, 1.0)],
            Expr::symbol(&x),
            vec![RobustConstraint::new("c", Expr::symbol(&x) - 1.0)],
            vec![UncertainParam::new(u, 2.0, PhysicalBounds::POSITIVE)],
        );
        let set = SetConfig::boxed(0.3).build(&prob.params).unwrap();
        let xb: Binding = [("x", 0.5)].into_iter().collect();
        let r = monte_carlo_check(&prob, &set, &xb, 1000, 1e-6, 1).unwrap();
        assert_eq!(r.violation_rate, 0.0);
        assert!(r.max_violation <= 0.0);
    }

    #[test]
    fn nominal_toy_point_is_not_robust() {
        let (m, set) = toy_set(0.5);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let x: Binding = [("x1", -h), ("x2", -h)].into_iter().collect();
        let r = monte_carlo_check(&m.problem, &set, &x, 10_000, 1e-6, 3).unwrap();
        assert!(r.violation_rate > 0.0);
        assert!(r.max_violation > 0.0);
    }

    #[test]
    fn grid_finds_linear_vertex_and_constant() {
        let specs = ["a", "b"]
            .iter()
            .map(|n| {
                UncertainSpec::new(UncertainParam::new(Symbol::uncertain(n), 1.0, PhysicalBounds::UNBOUNDED), 0.5)
                    .unwrap()
            })
            .collect();
        let set = UncertaintySet::Box(BoxSet::new(specs).unwrap());
        let (a, b) = (Symbol::uncertain("a"), Symbol::uncertain("b"));
        let g = 2.0 * Expr::symbol(&a) - Expr::symbol(&b);
        let w = grid_pessimize(&g, &Binding::new(), &set, 201).unwrap();
        assert!((w.violation - (3.0 - 0.5)).abs() < 1e-12);
        assert_eq!(w.u.get("a"), Some(1.5));
        assert_eq!(w.u.get("b"), Some(0.5));
        let c = grid_pessimize(&Expr::constant(-3.0), &Binding::new(), &set, 5).unwrap();
        assert_eq!(c.violation, -3.0);
    }

    #[test]
    fn grid_rejects_high_dimension() {
        let syms: Vec<Symbol> = (0..4).map(|i| Symbol::uncertain(format!("u{i}"))).collect();
        let specs = syms
            .iter()
            .map(|s| UncertainSpec::new(UncertainParam::new(s.clone(), 1.0, PhysicalBounds::UNBOUNDED), 0.1).unwrap())
            .collect();
        let set = UncertaintySet::Box(BoxSet::new(specs).unwrap());
        let g = Expr::indexed_sum("u", syms.iter().map(Expr::symbol).collect());
        assert!(grid_pessimize(&g, &Binding::new(), &set, 3).is_err());
    }

    #[test]
    fn toy_robust_solution_passes_monte_carlo() {
        let (m, set) = toy_set(0.5);
        let r = solve_robust(&m.problem, &set, &RobustOptions::default()).unwrap();
        assert_eq!(r.status, RobustStatus::RobustOptimal);
        let mc = monte_carlo_check(&m.problem, &set, &r.x, 20_000, 1e-6, 9).unwrap();
        assert_eq!(mc.violation_rate, 0.0);
    }

    #[test]
    fn csv_layout() {
        let rows = vec![SweepRow {
            param: 0.0,
            status: RobustStatus::RobustInfeasible,
            objective: None,
            pct_increase: None,
            reduction: 0.5,
            policy_min: 1.0,
            policy_mean: 1.0,
            policy_max: 1.0,
            total_share: 0.25,
            iterations: 2,
            wall_s: 0.0,
            epsilon: Some(1.0),
        }];
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), format!("{SWEEP_HEADER},epsilon"));
        assert_eq!(lines.next().unwrap(), "0,robust-infeasible,,,0.5,1,1,1,0.25,2,0.000,1");
    }
}
