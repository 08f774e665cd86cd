//! Cutting-set solver for robust constraints `g_i(x, u) ≤ 0 ∀ u ∈ U`.
//!
//! Each iteration solves the upper level over the accumulated cuts, then
//! pessimizes every constraint at the new point (in parallel) and appends the
//! worst-case parameters of each constraint violated by more than `tol`.

use std::collections::{BTreeSet, HashMap};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{evaluate, replace, substitute, Binding, Expr, Symbol, SymbolKind};
use crate::nlp::{solve_multistart, LocalSolution, LocalStatus, NlpInstance, SolverOptions, Variable};
use crate::uncertainty::{norm2, UncertainParam, UncertaintySet};

#[derive(Debug, Clone)]
pub struct RobustConstraint {
    pub name: String,
    pub expr: Expr,
}

impl RobustConstraint {
    pub fn new(name: impl Into<String>, expr: Expr) -> Self {
        Self { name: name.into(), expr }
    }
}

/// `min objective (+ tiebreak)  s.t.  g_i(x, u) ≤ 0 ∀ u ∈ U, x in bounds`.
#[derive(Debug, Clone)]
pub struct UncertainProblem {
    pub decisions: Vec<Variable>,
    pub objective: Expr,
    /// Secondary term added to the upper-level objective only; reported
    /// objectives exclude it.
    pub tiebreak: Option<Expr>,
    pub constraints: Vec<RobustConstraint>,
    pub params: Vec<UncertainParam>,
    /// Starting point for the first upper-level solve.
    pub x0: Binding,
}

/// Result of moving an uncertain objective into the constraints.
#[derive(Debug, Clone)]
pub struct Epigraph {
    pub objective: Expr,
    pub variable: Option<Variable>,
    pub constraint: Option<Expr>,
}

/// `min f(x,u)` becomes `min τ` with `f(x,u) − τ ≤ 0`. Deterministic
/// objectives pass through unchanged.
pub fn epigraph(objective: &Expr, tau: &Symbol, lower: f64, upper: f64) -> Epigraph {
    if !objective.depends_on_kind(SymbolKind::Uncertain) {
        return Epigraph {
            objective: objective.clone(),
            variable: None,
            constraint: None,
        };
    }
    let t = Expr::symbol(tau);
    Epigraph {
        constraint: Some(objective - &t),
        objective: t,
        variable: Some(Variable::new(tau.clone(), lower, upper)),
    }
}

impl UncertainProblem {
    pub fn new(
        decisions: Vec<Variable>,
        objective: Expr,
        constraints: Vec<RobustConstraint>,
        params: Vec<UncertainParam>,
    ) -> Self {
        Self {
            decisions,
            objective,
            tiebreak: None,
            constraints,
            params,
            x0: Binding::new(),
        }
    }

    /// Applies [`epigraph`] in place; the new constraint is appended last.
    pub fn with_epigraph(mut self, tau: &Symbol, lower: f64, upper: f64) -> Self {
        let ep = epigraph(&self.objective, tau, lower, upper);
        self.objective = ep.objective;
        if let (Some(v), Some(c)) = (ep.variable, ep.constraint) {
            self.decisions.push(v);
            self.constraints.push(RobustConstraint::new("epigraph", c));
        }
        self
    }

    pub fn with_tiebreak(mut self, tiebreak: Expr) -> Self {
        self.tiebreak = Some(tiebreak);
        self
    }

    pub fn with_start(mut self, x0: Binding) -> Self {
        self.x0 = x0;
        self
    }

    /// Checks that every symbol is a bounded decision or a declared
    /// uncertain parameter, and that the objective is deterministic.
    pub fn validate(&self) -> Result<()> {
        let decisions: BTreeSet<&str> = self.decisions.iter().map(|v| v.symbol.name()).collect();
        let params: BTreeSet<&str> = self.params.iter().map(|p| p.symbol.name()).collect();
        let check = |what: &str, e: &Expr, allow_uncertain: bool| -> Result<()> {
            for s in e.free_symbols() {
                let ok = decisions.contains(s.name()) || (allow_uncertain && params.contains(s.name()));
                if !ok {
                    return Err(Error::Model(format!("{what} uses undeclared symbol `{s}`")));
                }
            }
            Ok(())
        };
        check("objective", &self.objective, false)?;
        if let Some(t) = &self.tiebreak {
            check("tiebreak", t, false)?;
        }
        for c in &self.constraints {
            check(&format!("constraint `{}`", c.name), &c.expr, true)?;
        }
        Ok(())
    }
}

/// One worst-case parameter point for one constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    /// Physical values of the constraint's uncertain symbols.
    pub u: Binding,
    /// Same point in normalized coordinates.
    pub z: Binding,
    /// Iteration that added it; 0 for the nominal cut.
    pub iteration: usize,
    /// Violation at the x* it was generated for; 0 for nominal and seeded cuts.
    pub violation: f64,
    /// Carried over from another solve rather than found by pessimization.
    #[serde(default)]
    pub seeded: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CutSet {
    pub per_constraint: Vec<Vec<Cut>>,
}

impl CutSet {
    pub fn total(&self) -> usize {
        self.per_constraint.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RobustStatus {
    RobustOptimal,
    RobustInfeasible,
    IterationLimit,
}

impl RobustStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RobustStatus::RobustOptimal => "robust-optimal",
            RobustStatus::RobustInfeasible => "robust-infeasible",
            RobustStatus::IterationLimit => "iteration-limit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub upper_status: LocalStatus,
    pub upper_violation: f64,
    /// Worst violation per constraint at this iteration's x*.
    pub worst_violation: Vec<f64>,
    /// `(constraint index, violation)` of each cut added.
    pub cuts_added: Vec<(usize, f64)>,
    pub upper_s: f64,
    pub pessimize_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustResult {
    pub x: Binding,
    pub objective: f64,
    pub status: RobustStatus,
    pub iterations: usize,
    pub cuts: CutSet,
    pub log: Vec<IterationRecord>,
}

impl RobustResult {
    pub fn upper_seconds(&self) -> f64 {
        self.log.iter().map(|r| r.upper_s).sum()
    }

    pub fn pessimize_seconds(&self) -> f64 {
        self.log.iter().map(|r| r.pessimize_s).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Pessimization worker threads; 0 means the rayon default.
    pub workers: usize,
    pub seed: u64,
    pub pessimize_starts: usize,
    pub upper_starts: usize,
    pub solver: SolverOptions,
}

impl Default for RobustOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iter: 100,
            workers: 0,
            seed: 0,
            pessimize_starts: 16,
            upper_starts: 8,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PessimizeOptions {
    pub starts: usize,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for PessimizeOptions {
    fn default() -> Self {
        Self {
            starts: 16,
            seed: 0,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pessimized {
    /// Values of the constraint's uncertain symbols (nominal where inactive).
    pub u: Binding,
    pub z: Binding,
    pub violation: f64,
}

fn z_name(u: &str) -> String {
    format!("z:{u}")
}

/// Maximizes `g(x*, ·)` over the set. Symbols with zero halfwidth stay at
/// their nominal value; the rest are searched in normalized coordinates.
pub fn pessimize(
    constraint: &Expr,
    x_star: &Binding,
    set: &UncertaintySet,
    opts: &PessimizeOptions,
) -> Result<Pessimized> {
    let g = substitute(constraint, x_star);
    let mut nominal = Binding::new();
    let mut active = Vec::new();
    for s in g.free_symbols() {
        match s.kind() {
            SymbolKind::Uncertain => {}
            _ => return Err(Error::MissingBinding(s.name().to_string())),
        }
        let spec = set
            .spec(s.name())
            .ok_or_else(|| Error::Model(format!("uncertain symbol `{s}` is not in the set")))?;
        nominal.insert(s.name(), spec.nominal());
        if spec.halfwidth() > 0.0 && set.radius() > 0.0 {
            active.push((s, spec.nominal(), spec.halfwidth()));
        }
    }

    let mut z = Binding::new();
    for s in nominal.iter().map(|(n, _)| n.to_string()).collect::<Vec<_>>() {
        z.insert(s, 0.0);
    }
    if active.is_empty() {
        let violation = evaluate(&g, &nominal)?;
        return Ok(Pessimized { u: nominal, z, violation });
    }

    let r = set.radius();
    let mut map = HashMap::with_capacity(active.len());
    let mut vars = Vec::with_capacity(active.len());
    let mut zs = Vec::with_capacity(active.len());
    for (s, nom, hw) in &active {
        let zsym = Symbol::decision(z_name(s.name()));
        let ze = Expr::symbol(&zsym);
        map.insert(s.name().to_string(), *nom + *hw * &ze);
        vars.push(Variable::new(zsym, -r, r));
        zs.push(ze);
    }
    let inactive: Binding = nominal
        .iter()
        .filter(|(n, _)| !map.contains_key(*n))
        .map(|(n, v)| (n, v))
        .collect();
    let gz = replace(&substitute(&g, &inactive), &map);
    let ineq = match set {
        UncertaintySet::Box(_) => vec![],
        UncertaintySet::Ellipsoid(_) => {
            let sq: Vec<Expr> = zs.iter().map(|e| e * e).collect();
            vec![Expr::indexed_sum("z", sq) - r * r]
        }
    };
    let inst = NlpInstance::new(vars, -gz, ineq, vec![])?;
    let sol = solve_multistart(&inst, &Binding::new(), opts.starts, opts.seed, &opts.solver)?;

    let mut zv = sol.point.clone();
    if let UncertaintySet::Ellipsoid(_) = set {
        let n = norm2(&zv);
        if n > r {
            zv.iter_mut().for_each(|v| *v *= r / n);
        }
    }
    let mut u = nominal;
    for ((s, nom, hw), zi) in active.iter().zip(&zv) {
        u.insert(s.name(), nom + hw * zi);
        z.insert(s.name(), *zi);
    }
    let violation = evaluate(&g, &u)?;
    Ok(Pessimized { u, z, violation })
}

/// splitmix64 finalizer over the combined inputs.
pub fn derive_seed(base: u64, iteration: u64, index: u64) -> u64 {
    let mut h = base;
    for v in [iteration, index] {
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(v.wrapping_mul(0xD1B5_4A32_D192_ED03));
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

const UPPER_INDEX: u64 = u64::MAX;

fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))
}

fn nominal_cut(constraint: &Expr, set: &UncertaintySet) -> Result<Cut> {
    let mut u = Binding::new();
    let mut z = Binding::new();
    for s in constraint.free_symbols() {
        if s.kind() == SymbolKind::Uncertain {
            let spec = set
                .spec(s.name())
                .ok_or_else(|| Error::Model(format!("uncertain symbol `{s}` is not in the set")))?;
            u.insert(s.name(), spec.nominal());
            z.insert(s.name(), 0.0);
        }
    }
    Ok(Cut {
        u,
        z,
        iteration: 0,
        violation: 0.0,
        seeded: false,
    })
}

/// Moves the non-nominal cuts of an earlier solve into `set` by keeping
/// their normalized coordinates (pulled back into the set if needed).
/// Cuts that land on the nominal point are dropped.
pub fn reinstantiate(cuts: &CutSet, set: &UncertaintySet) -> Result<CutSet> {
    let r = set.radius();
    let mut out = CutSet::default();
    for list in &cuts.per_constraint {
        let mut kept: Vec<Cut> = Vec::new();
        for c in list.iter().filter(|c| c.iteration > 0 || c.seeded) {
            let mut z: Vec<(String, f64)> = Vec::with_capacity(c.z.len());
            for (name, zi) in c.z.iter() {
                let spec = set
                    .spec(name)
                    .ok_or_else(|| Error::Model(format!("cut symbol `{name}` is not in the set")))?;
                z.push((name.to_string(), if spec.halfwidth() > 0.0 { zi } else { 0.0 }));
            }
            let zs: Vec<f64> = z.iter().map(|(_, v)| *v).collect();
            let shrink = match set {
                UncertaintySet::Box(_) => 1.0,
                UncertaintySet::Ellipsoid(_) => {
                    let n = norm2(&zs);
                    if n > r { r / n } else { 1.0 }
                }
            };
            if r == 0.0 || zs.iter().all(|v| *v == 0.0) {
                continue;
            }
            let mut u = Binding::new();
            let mut zb = Binding::new();
            for (name, zi) in &z {
                let spec = set.spec(name).expect("checked above");
                let zi = (zi * shrink).clamp(-r, r);
                u.insert(name.clone(), spec.nominal() + spec.halfwidth() * zi);
                zb.insert(name.clone(), zi);
            }
            if kept.iter().any(|k| k.u == u) {
                continue;
            }
            kept.push(Cut {
                u,
                z: zb,
                iteration: 0,
                violation: 0.0,
                seeded: true,
            });
        }
        out.per_constraint.push(kept);
    }
    Ok(out)
}

struct Upper<'a> {
    problem: &'a UncertainProblem,
    instances: Vec<Expr>,
}

impl<'a> Upper<'a> {
    fn push(&mut self, constraint: usize, cut: &Cut) {
        self.instances
            .push(substitute(&self.problem.constraints[constraint].expr, &cut.u));
    }

    fn solve(&self, x0: &Binding, starts: usize, seed: u64, opts: &SolverOptions) -> Result<LocalSolution> {
        let objective = match &self.problem.tiebreak {
            Some(t) => &self.problem.objective + t,
            None => self.problem.objective.clone(),
        };
        let inst = NlpInstance::new(self.problem.decisions.clone(), objective, self.instances.clone(), vec![])?;
        solve_multistart(&inst, x0, starts, seed, opts)
    }
}

fn check_set(problem: &UncertainProblem, set: &UncertaintySet) -> Result<()> {
    problem.validate()?;
    for p in &problem.params {
        if set.spec(p.symbol.name()).is_none() {
            return Err(Error::Model(format!("uncertain parameter `{}` has no set entry", p.symbol)));
        }
    }
    Ok(())
}

/// The upper level over nominal cuts only; identical to the first robust
/// iteration.
pub fn solve_nominal(problem: &UncertainProblem, set: &UncertaintySet, opts: &RobustOptions) -> Result<LocalSolution> {
    check_set(problem, set)?;
    let mut upper = Upper {
        problem,
        instances: Vec::new(),
    };
    for (i, c) in problem.constraints.iter().enumerate() {
        upper.push(i, &nominal_cut(&c.expr, set)?);
    }
    upper.solve(&problem.x0, opts.upper_starts, derive_seed(opts.seed, 1, UPPER_INDEX), &opts.solver)
}

pub fn solve_robust(problem: &UncertainProblem, set: &UncertaintySet, opts: &RobustOptions) -> Result<RobustResult> {
    solve_robust_seeded(problem, set, opts, &CutSet::default())
}

/// As [`solve_robust`], with extra starting cuts (see [`reinstantiate`])
/// added after the nominal ones.
pub fn solve_robust_seeded(
    problem: &UncertainProblem,
    set: &UncertaintySet,
    opts: &RobustOptions,
    seeds: &CutSet,
) -> Result<RobustResult> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", opts.tol)));
    }
    if opts.max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    check_set(problem, set)?;
    let pool = worker_pool(opts.workers)?;

    let mut cuts = CutSet {
        per_constraint: Vec::with_capacity(problem.constraints.len()),
    };
    let mut upper = Upper {
        problem,
        instances: Vec::new(),
    };
    for (i, c) in problem.constraints.iter().enumerate() {
        let cut = nominal_cut(&c.expr, set)?;
        upper.push(i, &cut);
        cuts.per_constraint.push(vec![cut]);
        for seed in seeds.per_constraint.get(i).into_iter().flatten() {
            upper.push(i, seed);
            cuts.per_constraint[i].push(seed.clone());
        }
    }

    let mut log = Vec::new();
    let mut x_prev = problem.x0.clone();
    for iteration in 1..=opts.max_iter {
        let t0 = Instant::now();
        let sol = upper.solve(
            &x_prev,
            opts.upper_starts,
            derive_seed(opts.seed, iteration as u64, UPPER_INDEX),
            &opts.solver,
        )?;
        let upper_s = t0.elapsed().as_secs_f64();
        let objective = evaluate(&problem.objective, &sol.x)?;

        if !sol.is_feasible(&opts.solver) {
            log::info!(
                "iteration {iteration}: upper level infeasible (violation {:.3e})",
                sol.max_violation
            );
            log.push(IterationRecord {
                iteration,
                objective,
                upper_status: sol.status,
                upper_violation: sol.max_violation,
                worst_violation: vec![],
                cuts_added: vec![],
                upper_s,
                pessimize_s: 0.0,
            });
            return Ok(RobustResult {
                x: sol.x,
                objective,
                status: RobustStatus::RobustInfeasible,
                iterations: iteration,
                cuts,
                log,
            });
        }

        let t1 = Instant::now();
        let x_star = &sol.x;
        let worst: Vec<Result<Pessimized>> = pool.install(|| {
            problem
                .constraints
                .par_iter()
                .enumerate()
                .map(|(i, c)| {
                    let popts = PessimizeOptions {
                        starts: opts.pessimize_starts,
                        seed: derive_seed(opts.seed, iteration as u64, i as u64),
                        solver: opts.solver,
                    };
                    pessimize(&c.expr, x_star, set, &popts)
                })
                .collect()
        });
        let pessimize_s = t1.elapsed().as_secs_f64();

        let mut worst_violation = Vec::with_capacity(worst.len());
        let mut cuts_added = Vec::new();
        for (i, w) in worst.into_iter().enumerate() {
            let w = w?;
            worst_violation.push(w.violation);
            if w.violation > opts.tol {
                let cut = Cut {
                    u: w.u,
                    z: w.z,
                    iteration,
                    violation: w.violation,
                    seeded: false,
                };
                upper.push(i, &cut);
                cuts.per_constraint[i].push(cut);
                cuts_added.push((i, w.violation));
            }
        }
        log::info!(
            "iteration {iteration}: objective {objective:.6}, {} cuts added, upper {upper_s:.2}s, pessimize {pessimize_s:.2}s",
            cuts_added.len()
        );
        let done = cuts_added.is_empty();
        log.push(IterationRecord {
            iteration,
            objective,
            upper_status: sol.status,
            upper_violation: sol.max_violation,
            worst_violation,
            cuts_added,
            upper_s,
            pessimize_s,
        });
        if done || iteration == opts.max_iter {
            return Ok(RobustResult {
                x: sol.x,
                objective,
                status: if done {
                    RobustStatus::RobustOptimal
                } else {
                    RobustStatus::IterationLimit
                },
                iterations: iteration,
                cuts,
                log,
            });
        }
        x_prev = sol.x;
    }
    unreachable!("loop returns at max_iter")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uncertainty::{BoxSet, EllipsoidSet, PhysicalBounds, SetConfig, UncertainSpec};

    fn p(name: &str, nominal: f64) -> UncertainParam {
        UncertainParam::new(Symbol::uncertain(name), nominal, PhysicalBounds::UNBOUNDED)
    }

    fn abs_box(params: &[(&str, f64, f64)]) -> UncertaintySet {
        let specs = params
            .iter()
            .map(|&(n, nom, h)| UncertainSpec::with_abs_halfwidth(p(n, nom), h).unwrap())
            .collect();
        UncertaintySet::Box(BoxSet::new(specs).unwrap())
    }

    fn x_at(pairs: &[(&str, f64)]) -> Binding {
        pairs.iter().copied().collect()
    }

    #[test]
    fn linear_form_hits_a_vertex() {
        let (u1, u2) = (Symbol::uncertain("u1"), Symbol::uncertain("u2"));
        let (x1, x2) = (Symbol::decision("x1"), Symbol::decision("x2"));
        let g = Expr::symbol(&u1) * Expr::symbol(&x1) + Expr::symbol(&u2) * Expr::symbol(&x2);
        let set = abs_box(&[("u1", 0.0, 1.0), ("u2", 0.0, 1.0)]);
        let w = pessimize(&g, &x_at(&[("x1", 1.0), ("x2", -1.0)]), &set, &PessimizeOptions::default()).unwrap();
        assert!((w.u.get("u1").unwrap() - 1.0).abs() < 1e-9);
        assert!((w.u.get("u2").unwrap() + 1.0).abs() < 1e-9);
        assert!((w.violation - 2.0).abs() < 1e-9);
    }

    #[test]
    fn linear_form_over_ellipsoid() {
        let (u1, u2) = (Symbol::uncertain("u1"), Symbol::uncertain("u2"));
        let g = 3.0 * Expr::symbol(&u1) + 4.0 * Expr::symbol(&u2);
        let specs = vec![
            UncertainSpec::with_abs_halfwidth(p("u1", 0.0), 1.0).unwrap(),
            UncertainSpec::with_abs_halfwidth(p("u2", 0.0), 1.0).unwrap(),
        ];
        let set = UncertaintySet::Ellipsoid(EllipsoidSet::new(specs, 2.0).unwrap());
        let w = pessimize(&g, &Binding::new(), &set, &PessimizeOptions::default()).unwrap();
        assert!((w.violation - 10.0).abs() < 1e-6, "{w:?}");
        assert!((w.u.get("u1").unwrap() - 1.2).abs() < 1e-4);
        assert!((w.u.get("u2").unwrap() - 1.6).abs() < 1e-4);
        let z = [w.z.get("u1").unwrap(), w.z.get("u2").unwrap()];
        assert!(norm2(&z) <= 2.0 + 1e-12);
    }

    #[test]
    fn constant_in_u_stays_nominal() {
        let x = Symbol::decision("x");
        let g = Expr::symbol(&x) - 1.0;
        let set = abs_box(&[("u", 5.0, 1.0)]);
        let w = pessimize(&g, &x_at(&[("x", 3.0)]), &set, &PessimizeOptions::default()).unwrap();
        assert_eq!(w.violation, 2.0);
        assert!(w.u.is_empty());
    }

    #[test]
    fn epigraph_structure() {
        let (u, x, tau) = (Symbol::uncertain("u"), Symbol::decision("x"), Symbol::decision("tau"));
        let f = Expr::symbol(&u) * Expr::symbol(&x);
        let prob = UncertainProblem::new(vec![Variable::new(x.clone(), 1.0, 1.0)], f, vec![], vec![p("u", 1.5)])
            .with_epigraph(&tau, -10.0, 10.0);
        assert_eq!(prob.decisions.len(), 2);
        assert_eq!(prob.constraints.len(), 1);
        let set = abs_box(&[("u", 1.5, 0.5)]);
        let r = solve_robust(&prob, &set, &RobustOptions::default()).unwrap();
        assert_eq!(r.status, RobustStatus::RobustOptimal);
        assert!((r.objective - 2.0).abs() < 1e-6, "{r:?}");

        let det = epigraph(&Expr::symbol(&x), &tau, 0.0, 1.0);
        assert!(det.variable.is_none() && det.constraint.is_none());
        assert_eq!(det.objective.to_string(), "x");
    }

    #[test]
    fn unsatisfiable_constraint_is_robust_infeasible() {
        let (u, x) = (Symbol::uncertain("u"), Symbol::decision("x"));
        let g = Expr::symbol(&u) - Expr::symbol(&x);
        let prob = UncertainProblem::new(
            vec![Variable::new(x.clone(), 0.0, 1.0)],
            Expr::symbol(&x),
            vec![RobustConstraint::new("g", g)],
            vec![p("u", 2.5)],
        );
        let set = SetConfig::boxed(0.2).build(&prob.params).unwrap();
        let r = solve_robust(&prob, &set, &RobustOptions::default()).unwrap();
        assert_eq!(r.status, RobustStatus::RobustInfeasible);
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn undeclared_symbols_are_rejected() {
        let (x, y) = (Symbol::decision("x"), Symbol::decision("y"));
        let prob = UncertainProblem::new(
            vec![Variable::new(x.clone(), 0.0, 1.0)],
            Expr::symbol(&x),
            vec![RobustConstraint::new("g", Expr::symbol(&y))],
            vec![],
        );
        let set = SetConfig::boxed(0.0).build(&[]).unwrap();
        assert!(matches!(solve_robust(&prob, &set, &RobustOptions::default()), Err(Error::Model(_))));
    }

    #[test]
    fn seeds_differ_by_position() {
        let a = derive_seed(1, 2, 3);
        assert_ne!(a, derive_seed(1, 3, 2));
        assert_ne!(a, derive_seed(2, 2, 3));
        assert_eq!(a, derive_seed(1, 2, 3));
    }
}
