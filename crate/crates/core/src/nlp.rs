//! Local solver for smooth, bound-constrained NLPs with inequality and
//! equality constraints, and the multistart wrapper around it.
//!
//! The outer loop is a Powell–Hestenes–Rockafellar augmented Lagrangian; the
//! inner loop is a projected limited-memory BFGS over the variables rescaled
//! to the unit box. Objective and constraints are rescaled by their gradient
//! magnitude at the start point, so the tolerances below are relative to that
//! scale for stationarity and absolute (in model units) for feasibility.

use std::collections::HashMap;
use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Binding, Expr, Symbol, Tape, TapeWorkspace};

#[derive(Debug, Clone)]
pub struct Variable {
    pub symbol: Symbol,
    pub lower: f64,
    pub upper: f64,
}

impl Variable {
    pub fn new(symbol: Symbol, lower: f64, upper: f64) -> Self {
        Self { symbol, lower, upper }
    }
}

#[derive(Debug, Clone)]
struct Compiled {
    objective: Tape,
    inequalities: Vec<Tape>,
    equalities: Vec<Tape>,
    lower: Vec<f64>,
    width: Vec<f64>,
}

/// `min f(x)  s.t.  g(x) ≤ 0, h(x) = 0, lower ≤ x ≤ upper`.
#[derive(Debug, Clone)]
pub struct NlpInstance {
    variables: Vec<Variable>,
    objective: Expr,
    inequalities: Vec<Expr>,
    equalities: Vec<Expr>,
    compiled: Compiled,
}

impl NlpInstance {
    pub fn new(
        variables: Vec<Variable>,
        objective: Expr,
        inequalities: Vec<Expr>,
        equalities: Vec<Expr>,
    ) -> Result<Self> {
        let mut slots = HashMap::with_capacity(variables.len());
        for (i, v) in variables.iter().enumerate() {
            if !(v.lower.is_finite() && v.upper.is_finite()) {
                return Err(Error::Model(format!("variable `{}` needs finite bounds", v.symbol)));
            }
            if v.lower > v.upper {
                return Err(Error::Model(format!(
                    "variable `{}` has lower bound {} above upper bound {}",
                    v.symbol, v.lower, v.upper
                )));
            }
            if slots.insert(v.symbol.name().to_string(), i).is_some() {
                return Err(Error::Model(format!("variable `{}` declared twice", v.symbol)));
            }
        }
        let resolve = |s: &Symbol| slots.get(s.name()).copied();
        let compile = |e: &Expr| Tape::compile(e, resolve);
        let compiled = Compiled {
            objective: compile(&objective)?,
            inequalities: inequalities.iter().map(compile).collect::<Result<_>>()?,
            equalities: equalities.iter().map(compile).collect::<Result<_>>()?,
            lower: variables.iter().map(|v| v.lower).collect(),
            width: variables.iter().map(|v| v.upper - v.lower).collect(),
        };
        Ok(Self {
            variables,
            objective,
            inequalities,
            equalities,
            compiled,
        })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn objective(&self) -> &Expr {
        &self.objective
    }

    pub fn inequalities(&self) -> &[Expr] {
        &self.inequalities
    }

    pub fn equalities(&self) -> &[Expr] {
        &self.equalities
    }

    pub fn dim(&self) -> usize {
        self.variables.len()
    }

    /// Dense point from a binding, projected onto the bounds. Variables the
    /// binding does not mention start at the middle of their range.
    pub fn point(&self, x: &Binding) -> Vec<f64> {
        self.variables
            .iter()
            .map(|v| {
                x.get(v.symbol.name())
                    .map_or(0.5 * (v.lower + v.upper), |val| val.clamp(v.lower, v.upper))
            })
            .collect()
    }

    pub fn binding(&self, x: &[f64]) -> Binding {
        self.variables
            .iter()
            .zip(x)
            .map(|(v, &val)| (v.symbol.name(), val))
            .collect()
    }

    pub fn objective_value(&self, x: &[f64]) -> Result<f64> {
        self.compiled.objective.eval(x, &mut TapeWorkspace::default())
    }

    /// Largest positive inequality value or absolute equality residual.
    pub fn max_violation(&self, x: &[f64]) -> Result<f64> {
        let mut ws = TapeWorkspace::default();
        let mut v: f64 = 0.0;
        for t in &self.compiled.inequalities {
            v = v.max(t.eval(x, &mut ws)?);
        }
        for t in &self.compiled.equalities {
            v = v.max(t.eval(x, &mut ws)?.abs());
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub feas_tol: f64,
    pub stat_tol: f64,
    /// Violation above which a stalled run is declared infeasible.
    pub infeas_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
    pub memory: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-8,
            stat_tol: 1e-6,
            infeas_tol: 1e-6,
            max_outer: 50,
            max_inner: 1000,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            max_penalty: 1e12,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalStatus {
    OptimalLocal,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalSolution {
    pub x: Binding,
    /// Same point in variable order.
    pub point: Vec<f64>,
    pub objective: f64,
    pub max_violation: f64,
    pub stationarity: f64,
    pub status: LocalStatus,
    pub iterations: usize,
    /// Multistart index that produced this solution.
    pub start: usize,
}

impl LocalSolution {
    pub fn is_feasible(&self, opts: &SolverOptions) -> bool {
        self.status != LocalStatus::Infeasible && self.max_violation <= opts.infeas_tol && self.objective.is_finite()
    }
}

/// Local solve from `x0` (projected onto the bounds).
pub fn solve_local(instance: &NlpInstance, x0: &Binding, opts: &SolverOptions) -> Result<LocalSolution> {
    solve_from(instance, instance.point(x0), opts, 0)
}

/// Start 0 is `x0`; starts 1.. are uniform in the bounds, drawn from `seed`.
/// Returns the best run: feasible before infeasible, then lowest objective,
/// then lowest start index.
pub fn solve_multistart(
    instance: &NlpInstance,
    x0: &Binding,
    n_starts: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<LocalSolution> {
    if n_starts == 0 {
        return Err(Error::InvalidArgument("multistart needs at least one start".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![instance.point(x0)];
    for _ in 1..n_starts {
        starts.push(
            instance
                .variables
                .iter()
                .map(|v| v.lower + (v.upper - v.lower) * rng.random::<f64>())
                .collect(),
        );
    }
    let mut best: Option<LocalSolution> = None;
    let mut first_err = None;
    for (k, x) in starts.into_iter().enumerate() {
        match solve_from(instance, x, opts, k) {
            Ok(sol) => {
                if best.as_ref().is_none_or(|b| better(&sol, b, opts)) {
                    best = Some(sol);
                }
            }
            Err(e) => {
                log::debug!("multistart run {k} failed: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("at least one start ran"))
}

fn better(a: &LocalSolution, b: &LocalSolution, opts: &SolverOptions) -> bool {
    let (fa, fb) = (a.is_feasible(opts), b.is_feasible(opts));
    if fa != fb {
        return fa;
    }
    if !fa && a.max_violation != b.max_violation {
        return a.max_violation < b.max_violation;
    }
    a.objective < b.objective || (a.objective == b.objective && a.start < b.start)
}

/// Augmented-Lagrangian state evaluated in unit-box coordinates.
struct Merit<'a> {
    c: &'a Compiled,
    obj_scale: f64,
    ineq_scale: Vec<f64>,
    eq_scale: Vec<f64>,
    lambda: Vec<f64>,
    mu: Vec<f64>,
    rho: f64,
    ws: TapeWorkspace,
    x: Vec<f64>,
    gx: Vec<f64>,
}

impl<'a> Merit<'a> {
    fn to_x(&mut self, y: &[f64]) {
        for i in 0..y.len() {
            self.x[i] = self.c.lower[i] + self.c.width[i] * y[i];
        }
    }

    fn value_grad(&mut self, y: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.to_x(y);
        self.gx.iter_mut().for_each(|g| *g = 0.0);
        let mut total = self.obj_scale * self.c.objective.eval(&self.x, &mut self.ws)?;
        self.c.objective.backward(&mut self.ws, self.obj_scale, &mut self.gx)?;
        for (k, tape) in self.c.inequalities.iter().enumerate() {
            let s = self.ineq_scale[k];
            let g = s * tape.eval(&self.x, &mut self.ws)?;
            let shifted = self.lambda[k] + self.rho * g;
            if shifted > 0.0 {
                total += (shifted * shifted - self.lambda[k] * self.lambda[k]) / (2.0 * self.rho);
                tape.backward(&mut self.ws, shifted * s, &mut self.gx)?;
            } else {
                total -= self.lambda[k] * self.lambda[k] / (2.0 * self.rho);
            }
        }
        for (k, tape) in self.c.equalities.iter().enumerate() {
            let s = self.eq_scale[k];
            let h = s * tape.eval(&self.x, &mut self.ws)?;
            total += self.mu[k] * h + 0.5 * self.rho * h * h;
            tape.backward(&mut self.ws, (self.mu[k] + self.rho * h) * s, &mut self.gx)?;
        }
        for i in 0..y.len() {
            grad[i] = self.gx[i] * self.c.width[i];
        }
        if !total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Domain {
                node: "augmented Lagrangian".into(),
                detail: "non-finite value or gradient".into(),
            });
        }
        Ok(total)
    }

    /// Scaled constraint values at the last point passed to `to_x`.
    fn constraint_values(&mut self, y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.to_x(y);
        let g = self
            .c
            .inequalities
            .iter()
            .map(|t| t.eval(&self.x, &mut self.ws))
            .collect::<Result<Vec<_>>>()?;
        let h = self
            .c
            .equalities
            .iter()
            .map(|t| t.eval(&self.x, &mut self.ws))
            .collect::<Result<Vec<_>>>()?;
        Ok((g, h))
    }
}

/// Gradient infinity norm of one tape at `x`, in unit-box coordinates.
fn unit_gradient_norm(tape: &Tape, x: &[f64], width: &[f64], ws: &mut TapeWorkspace) -> Option<f64> {
    let mut g = vec![0.0; x.len()];
    tape.eval_grad(x, ws, 1.0, &mut g).ok()?;
    let n = tape
        .inputs()
        .iter()
        .map(|&i| (g[i] * width[i]).abs())
        .fold(0.0, f64::max);
    n.is_finite().then_some(n)
}

fn solve_from(instance: &NlpInstance, x0: Vec<f64>, opts: &SolverOptions, start: usize) -> Result<LocalSolution> {
    let c = &instance.compiled;
    let n = instance.dim();
    let fixed: Vec<bool> = c.width.iter().map(|&w| w == 0.0).collect();
    let mut y: Vec<f64> = (0..n)
        .map(|i| if fixed[i] { 0.0 } else { ((x0[i] - c.lower[i]) / c.width[i]).clamp(0.0, 1.0) })
        .collect();
    let x_start: Vec<f64> = (0..n).map(|i| c.lower[i] + c.width[i] * y[i]).collect();

    let numerical = |detail: String, y: &[f64]| Error::Numerical {
        detail,
        iterate: instance
            .variables
            .iter()
            .zip(y)
            .zip(&c.lower)
            .zip(&c.width)
            .map(|(((v, yi), lo), w)| (v.symbol.name().to_string(), lo + w * yi))
            .collect(),
    };

    let mut ws = TapeWorkspace::default();
    let f_norm = unit_gradient_norm(&c.objective, &x_start, &c.width, &mut ws)
        .ok_or_else(|| numerical("objective or its gradient is not finite at the start point".into(), &y))?;
    let obj_scale = if f_norm > 0.0 { (1.0 / f_norm).clamp(1e-8, 1e8) } else { 1.0 };
    let cscale = |t: &Tape, ws: &mut TapeWorkspace| {
        1.0 / unit_gradient_norm(t, &x_start, &c.width, ws).unwrap_or(1.0).max(1.0)
    };
    let ineq_scale: Vec<f64> = c.inequalities.iter().map(|t| cscale(t, &mut ws)).collect();
    let eq_scale: Vec<f64> = c.equalities.iter().map(|t| cscale(t, &mut ws)).collect();

    let mut merit = Merit {
        c,
        obj_scale,
        lambda: vec![0.0; ineq_scale.len()],
        mu: vec![0.0; eq_scale.len()],
        ineq_scale,
        eq_scale,
        rho: opts.initial_penalty,
        ws,
        x: vec![0.0; n],
        gx: vec![0.0; n],
    };

    let constrained = !c.inequalities.is_empty() || !c.equalities.is_empty();
    let mut total_iters = 0;
    let mut stationarity = f64::INFINITY;
    let mut violation = f64::INFINITY;
    let mut prev_progress = f64::INFINITY;
    let mut best_violation = f64::INFINITY;
    let mut stalls = 0;
    let mut converged = false;

    for outer in 0..opts.max_outer.max(1) {
        let tol = if constrained {
            opts.stat_tol.max(1e-2 * 0.1f64.powi(outer as i32))
        } else {
            opts.stat_tol
        };
        let inner = minimize_box(
            |yy, g| merit.value_grad(yy, g),
            &mut y,
            &fixed,
            tol,
            opts.max_inner,
            opts.memory,
        )
        .map_err(|e| numerical(e.to_string(), &y))?;
        total_iters += inner.iterations;
        stationarity = inner.stationarity;

        let (g, h) = merit.constraint_values(&y).map_err(|e| numerical(e.to_string(), &y))?;
        violation = g.iter().fold(0.0f64, |m, &v| m.max(v));
        violation = h.iter().fold(violation, |m, &v| m.max(v.abs()));
        if !constrained {
            converged = inner.converged;
            break;
        }

        // Birgin–Martínez progress measure: feasibility plus complementarity.
        let mut progress: f64 = 0.0;
        for k in 0..g.len() {
            let sg = merit.ineq_scale[k] * g[k];
            progress = progress.max((-sg).min(merit.lambda[k] / merit.rho).abs());
            merit.lambda[k] = (merit.lambda[k] + merit.rho * sg).max(0.0);
        }
        for k in 0..h.len() {
            let sh = merit.eq_scale[k] * h[k];
            progress = progress.max(sh.abs());
            merit.mu[k] += merit.rho * sh;
        }

        if violation <= opts.feas_tol && progress <= opts.stat_tol.max(opts.feas_tol) && tol <= opts.stat_tol && inner.converged {
            converged = true;
            break;
        }
        if progress > 0.25 * prev_progress {
            merit.rho = (merit.rho * opts.penalty_growth).min(opts.max_penalty);
        }
        prev_progress = progress;

        if violation < 0.99 * best_violation {
            best_violation = violation;
            stalls = 0;
        } else {
            stalls += 1;
        }
        if merit.rho >= opts.max_penalty && violation > opts.infeas_tol && stalls >= 3 {
            break;
        }
    }

    let x: Vec<f64> = (0..n).map(|i| c.lower[i] + c.width[i] * y[i]).collect();
    let objective = instance.objective_value(&x).map_err(|e| numerical(e.to_string(), &y))?;
    let status = if converged && violation <= opts.feas_tol {
        LocalStatus::OptimalLocal
    } else if violation > opts.infeas_tol {
        LocalStatus::Infeasible
    } else {
        LocalStatus::IterationLimit
    };
    Ok(LocalSolution {
        x: instance.binding(&x),
        point: x,
        objective,
        max_violation: violation,
        stationarity,
        status,
        iterations: total_iters,
        start,
    })
}

#[derive(Debug)]
struct InnerResult {
    stationarity: f64,
    iterations: usize,
    converged: bool,
}

fn projected_gradient_norm(y: &[f64], g: &[f64], fixed: &[bool]) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..y.len() {
        if !fixed[i] {
            m = m.max(((y[i] - g[i]).clamp(0.0, 1.0) - y[i]).abs());
        }
    }
    m
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

/// Projected L-BFGS on the unit box. `fg` writes the gradient and returns
/// the value; errors count as +∞ during line searches.
fn minimize_box<F>(
    mut fg: F,
    y: &mut [f64],
    fixed: &[bool],
    tol: f64,
    max_iter: usize,
    memory: usize,
) -> Result<InnerResult>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    let n = y.len();
    let mut g = vec![0.0; n];
    let mut f = fg(y, &mut g)?;
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(memory);
    let mut d = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut free = vec![false; n];
    let mut alpha_coef = vec![0.0; memory.max(1)];
    let mut flat = 0;

    for iter in 0..max_iter {
        let pg = projected_gradient_norm(y, &g, fixed);
        if pg <= tol {
            return Ok(InnerResult {
                stationarity: pg,
                iterations: iter,
                converged: true,
            });
        }
        for i in 0..n {
            free[i] = !fixed[i] && !((y[i] <= 0.0 && g[i] > 0.0) || (y[i] >= 1.0 && g[i] < 0.0));
        }

        let mut accepted = false;
        for attempt in 0..2 {
            if attempt == 1 {
                pairs.clear();
            }
            // two-loop recursion restricted to the free variables
            for i in 0..n {
                d[i] = if free[i] { g[i] } else { 0.0 };
            }
            if pairs.is_empty() {
                let gmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let scale = if gmax > 0.0 { 1.0 / gmax } else { 1.0 };
                d.iter_mut().for_each(|v| *v *= scale);
            } else {
                for (k, (s, yv, rho)) in pairs.iter().enumerate().rev() {
                    let a = rho * dot(s, &d);
                    alpha_coef[k] = a;
                    for i in 0..n {
                        d[i] -= a * yv[i];
                    }
                }
                let (s, yv, _) = pairs.back().unwrap();
                let gamma = dot(s, yv) / dot(yv, yv);
                d.iter_mut().for_each(|v| *v *= gamma);
                for (k, (s, yv, rho)) in pairs.iter().enumerate() {
                    let b = rho * dot(yv, &d);
                    for i in 0..n {
                        d[i] += s[i] * (alpha_coef[k] - b);
                    }
                }
                for i in 0..n {
                    if !free[i] {
                        d[i] = 0.0;
                    }
                }
            }
            d.iter_mut().for_each(|v| *v = -*v);
            let slope = dot(&g, &d);
            if !(slope < 0.0) {
                continue;
            }

            let mut alpha_max = f64::INFINITY;
            for i in 0..n {
                if d[i] > 0.0 {
                    alpha_max = alpha_max.min((1.0 - y[i]) / d[i]);
                } else if d[i] < 0.0 {
                    alpha_max = alpha_max.min(-y[i] / d[i]);
                }
            }

            let step = if alpha_max >= 1.0 {
                strong_wolfe(&mut fg, y, &d, f, slope, alpha_max, &mut trial, &mut g_trial)
            } else {
                projected_backtracking(&mut fg, y, &d, f, &g, &mut trial, &mut g_trial)
            };
            if let Some(f_new) = step {
                let mut s = vec![0.0; n];
                let mut yv = vec![0.0; n];
                for i in 0..n {
                    s[i] = trial[i] - y[i];
                    yv[i] = g_trial[i] - g[i];
                }
                let sy = dot(&s, &yv);
                if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() && sy > 0.0 {
                    if pairs.len() == memory {
                        pairs.pop_front();
                    }
                    pairs.push_back((s, yv, 1.0 / sy));
                }
                if (f - f_new).abs() <= 1e-15 * f.abs().max(1.0) {
                    flat += 1;
                } else {
                    flat = 0;
                }
                y.copy_from_slice(&trial);
                g.copy_from_slice(&g_trial);
                f = f_new;
                accepted = true;
                break;
            }
        }
        if !accepted || flat >= 5 {
            let pg = projected_gradient_norm(y, &g, fixed);
            return Ok(InnerResult {
                stationarity: pg,
                iterations: iter + 1,
                converged: pg <= tol,
            });
        }
    }
    let pg = projected_gradient_norm(y, &g, fixed);
    Ok(InnerResult {
        stationarity: pg,
        iterations: max_iter,
        converged: pg <= tol,
    })
}

fn probe<F>(fg: &mut F, y: &[f64], d: &[f64], alpha: f64, out: &mut [f64], g_out: &mut [f64]) -> (f64, f64)
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    for i in 0..y.len() {
        out[i] = (y[i] + alpha * d[i]).clamp(0.0, 1.0);
    }
    match fg(out, g_out) {
        Ok(v) if v.is_finite() => (v, dot(g_out, d)),
        _ => (f64::INFINITY, f64::NAN),
    }
}

/// Strong-Wolfe search on `α ∈ (0, α_max]` along a direction that stays in
/// the box. Leaves the accepted point and gradient in `out`/`g_out`.
#[allow(clippy::too_many_arguments)]
fn strong_wolfe<F>(
    fg: &mut F,
    y: &[f64],
    d: &[f64],
    f0: f64,
    slope0: f64,
    alpha_max: f64,
    out: &mut [f64],
    g_out: &mut [f64],
) -> Option<f64>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    let mut a_prev = 0.0;
    let mut f_prev = f0;
    let mut s_prev = slope0;
    let mut a = 1.0f64.min(alpha_max);
    for i in 0..25 {
        let (fa, sa) = probe(fg, y, d, a, out, g_out);
        if fa > f0 + C1 * a * slope0 || (i > 0 && fa >= f_prev) || !fa.is_finite() {
            return zoom(fg, y, d, f0, slope0, (a_prev, f_prev, s_prev), (a, fa), out, g_out);
        }
        if sa.abs() <= -C2 * slope0 {
            return Some(fa);
        }
        if sa >= 0.0 {
            return zoom(fg, y, d, f0, slope0, (a, fa, sa), (a_prev, f_prev), out, g_out);
        }
        if a >= alpha_max {
            return Some(fa);
        }
        a_prev = a;
        f_prev = fa;
        s_prev = sa;
        a = (2.0 * a).min(alpha_max);
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn zoom<F>(
    fg: &mut F,
    y: &[f64],
    d: &[f64],
    f0: f64,
    slope0: f64,
    lo: (f64, f64, f64),
    hi: (f64, f64),
    out: &mut [f64],
    g_out: &mut [f64],
) -> Option<f64>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    let (mut a_lo, mut f_lo, mut s_lo) = lo;
    let (mut a_hi, mut f_hi) = hi;
    for _ in 0..40 {
        let width = a_hi - a_lo;
        // safeguarded quadratic interpolation from (f_lo, s_lo, f_hi)
        let denom = 2.0 * (f_hi - f_lo - s_lo * width);
        let mut a = if f_hi.is_finite() && denom.abs() > 0.0 {
            a_lo - s_lo * width * width / denom
        } else {
            a_lo + 0.5 * width
        };
        let (l, h) = if a_lo < a_hi { (a_lo, a_hi) } else { (a_hi, a_lo) };
        let margin = 0.1 * (h - l);
        if !a.is_finite() || a < l + margin || a > h - margin {
            a = a_lo + 0.5 * width;
        }
        let (fa, sa) = probe(fg, y, d, a, out, g_out);
        if !fa.is_finite() || fa > f0 + C1 * a * slope0 || fa >= f_lo {
            a_hi = a;
            f_hi = fa;
        } else {
            if sa.abs() <= -C2 * slope0 {
                return Some(fa);
            }
            if sa * (a_hi - a_lo) >= 0.0 {
                a_hi = a_lo;
                f_hi = f_lo;
            }
            a_lo = a;
            f_lo = fa;
            s_lo = sa;
        }
        if (a_hi - a_lo).abs() <= 1e-14 * a_lo.abs().max(1e-14) {
            break;
        }
    }
    // Accept the best sufficient-decrease point found, if any.
    if a_lo > 0.0 {
        let (fa, _) = probe(fg, y, d, a_lo, out, g_out);
        if fa.is_finite() && fa < f0 {
            return Some(fa);
        }
    }
    None
}

/// Armijo backtracking along the projected path `P(y + α d)`.
fn projected_backtracking<F>(
    fg: &mut F,
    y: &[f64],
    d: &[f64],
    f0: f64,
    g0: &[f64],
    out: &mut [f64],
    g_out: &mut [f64],
) -> Option<f64>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    let mut a = 1.0;
    for _ in 0..60 {
        let (fa, _) = probe(fg, y, d, a, out, g_out);
        let decrease: f64 = (0..y.len()).map(|i| g0[i] * (out[i] - y[i])).sum();
        if fa.is_finite() && fa <= f0 + C1 * decrease && decrease < 0.0 {
            return Some(fa);
        }
        a *= 0.5;
    }
    None
}
