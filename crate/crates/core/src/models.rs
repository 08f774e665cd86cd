//! Market-potential models: a carbon-tax model for capture technology across
//! emitting plants, and a fuel-switching grant model across boilers, both
//! driven by a one-factor learning curve.
//!
//! Both reduction terms use `r^{L_P}` with `L_P = ln(1 − Lr)/ln 2 ≤ 0`, so
//! `1 − r^{L_P}` is the fractional cost reduction after deployment ratio `r`.

use std::collections::BTreeSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Binding, Expr, Symbol, SymbolKind};
use crate::nlp::Variable;
use crate::robust::{RobustConstraint, UncertainProblem};
use crate::uncertainty::{PhysicalBounds, UncertainParam};

pub fn learning_exponent(lr: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&lr) {
        return Err(Error::InvalidArgument(format!("learning rate must lie in [0, 1), got {lr}")));
    }
    Ok((1.0 - lr).ln() / std::f64::consts::LN_2)
}

pub fn cost_reduction_fraction(ratio: f64, lp: f64) -> Result<f64> {
    if !(ratio >= 1.0) {
        return Err(Error::InvalidArgument(format!("deployment ratio must be at least 1, got {ratio}")));
    }
    Ok(1.0 - ratio.powf(lp))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    pub id: String,
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    /// t CO₂ per year.
    pub emissions: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boiler {
    pub id: String,
    pub site: String,
    /// MJ per year.
    pub demand: f64,
}

/// Which cost enters the per-unit viability constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostBasis {
    Initial,
    /// `C0 · r^{L_P}`: the policy only has to bridge the post-learning cost.
    Learned,
}

impl FromStr for CostBasis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "initial" => Ok(CostBasis::Initial),
            "learned" => Ok(CostBasis::Learned),
            _ => Err(Error::Config(format!("unknown cost basis `{s}` (allowed: initial, learned)"))),
        }
    }
}

/// `Min` requires reduction ≥ M_U; `Cap` requires reduction ≤ M_U.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MuDirection {
    Min,
    Cap,
}

impl FromStr for MuDirection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(MuDirection::Min),
            "cap" => Ok(MuDirection::Cap),
            _ => Err(Error::Config(format!("unknown mu direction `{s}` (allowed: min, cap)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechParams {
    /// Capture rate, t captured per t emitted.
    pub eta: f64,
    /// Initial cost, $/t.
    pub c0: f64,
    /// Initial deployment, t/yr (synthetic default).
    pub a0: f64,
    pub lr: f64,
    pub mu: f64,
    /// Tax upper bound; `None` means `10 · C0/η`.
    pub t_max: Option<f64>,
    pub cost_basis: CostBasis,
    pub mu_direction: MuDirection,
    /// Weight of the small policy-size term that picks the lowest taxes
    /// among objective-equivalent solutions.
    pub policy_weight: f64,
}

impl Default for TechParams {
    fn default() -> Self {
        Self {
            eta: 0.63,
            c0: 88.0,
            a0: 1e5,
            lr: 0.07,
            mu: 0.48,
            t_max: None,
            cost_basis: CostBasis::Learned,
            mu_direction: MuDirection::Min,
            policy_weight: 4e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuelParams {
    /// Incumbent fuel LHV, MJ/kg.
    pub lhv_f1: f64,
    /// Transition fuel LHV, MJ/kg.
    pub lhv_f2: f64,
    /// Incumbent fuel price, £/t.
    pub c_f1: f64,
    /// Transition fuel price, £/t.
    pub c0: f64,
    pub eta_f2: f64,
    /// Initial transition-fuel deployment, t/yr (synthetic default).
    pub a0: f64,
    pub lr: f64,
    pub mu: f64,
    /// Grant upper bound in £/MWh; `None` means 10× the parity threshold.
    pub g_max: Option<f64>,
    pub cost_basis: CostBasis,
    pub mu_direction: MuDirection,
    pub policy_weight: f64,
}

impl Default for FuelParams {
    fn default() -> Self {
        Self {
            lhv_f1: 42.0,
            lhv_f2: 120.0,
            c_f1: 292.0,
            c0: 1800.0,
            eta_f2: 0.9,
            a0: 1e6,
            lr: 0.07,
            mu: 0.025,
            g_max: None,
            cost_basis: CostBasis::Initial,
            mu_direction: MuDirection::Min,
            policy_weight: 4e-3,
        }
    }
}

impl FuelParams {
    /// Grant at which the transition fuel's heat price matches the incumbent's, £/MWh.
    pub fn parity_threshold(&self) -> f64 {
        3.6 * self.c0 * self.eta_f2 / self.lhv_f2 - 3.6 * self.c_f1 / self.lhv_f1
    }
}

/// Counts of the nominal formulation. Tech counts the `L_P` definition as a
/// constraint; fuel counts `L_P` as an auxiliary variable as well. Neither
/// counts the epigraph variable or constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSize {
    pub variables: usize,
    pub constraints: usize,
    pub uncertain: usize,
}

#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub problem: UncertainProblem,
    pub size: ModelSize,
    /// Per-unit policy symbols (taxes or grants), in dataset order.
    pub policy: Vec<Symbol>,
    /// Per-unit market-share symbols.
    pub shares: Vec<Symbol>,
    /// Dataset ids matching `policy`.
    pub ids: Vec<String>,
    /// Fractional cost reduction `1 − r^{L_P}` over decisions and parameters.
    pub reduction: Expr,
}

impl BuiltModel {
    pub fn nominal(&self) -> Binding {
        self.problem
            .params
            .iter()
            .map(|p| (p.symbol.name(), p.nominal))
            .collect()
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Model(msg()))
    }
}

fn check_unique<'a>(what: &str, ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for id in ids {
        check(seen.insert(id), || format!("duplicate {what} id `{id}`"))?;
    }
    Ok(())
}

fn check_learning(lr: f64, mu: f64) -> Result<()> {
    check((0.0..1.0).contains(&lr), || format!("learning rate must lie in [0, 1), got {lr}"))?;
    check((0.0..1.0).contains(&mu), || format!("market share limit must lie in [0, 1), got {mu}"))
}

fn scalar(name: &str) -> (Symbol, Expr) {
    let s = Symbol::uncertain(name);
    let e = Expr::symbol(&s);
    (s, e)
}

fn family(name: &str, n: usize, kind: SymbolKind) -> (Vec<Symbol>, Vec<Expr>) {
    let syms: Vec<Symbol> = (0..n).map(|i| Symbol::member(name, i, kind)).collect();
    let exprs = syms.iter().map(Expr::symbol).collect();
    (syms, exprs)
}

/// `M_U − (1 − r^{L_P}) ≤ 0` or its reverse.
fn reduction_constraint(reduction: &Expr, mu: f64, dir: MuDirection) -> Expr {
    match dir {
        MuDirection::Min => mu - reduction,
        MuDirection::Cap => reduction - mu,
    }
}

pub fn build_tech_problem(plants: &[Plant], p: &TechParams) -> Result<BuiltModel> {
    check(!plants.is_empty(), || "the plant list is empty".into())?;
    check_unique("plant", plants.iter().map(|x| x.id.as_str()))?;
    for x in plants {
        check(x.emissions > 0.0 && x.emissions.is_finite(), || {
            format!("plant `{}` has non-positive emissions {}", x.id, x.emissions)
        })?;
    }
    check(p.eta > 0.0 && p.eta <= 1.0, || format!("eta must lie in (0, 1], got {}", p.eta))?;
    check(p.c0 > 0.0, || format!("c0 must be positive, got {}", p.c0))?;
    check(p.a0 > 0.0, || format!("a0 must be positive, got {}", p.a0))?;
    check_learning(p.lr, p.mu)?;
    let t_floor = p.c0 / p.eta;
    let t_max = p.t_max.unwrap_or(10.0 * t_floor);
    check(t_max >= t_floor, || {
        format!("tax bound {t_max} is below the viability threshold {t_floor}")
    })?;

    let n = plants.len();
    let (e_syms, e) = family("E", n, SymbolKind::Uncertain);
    let (t_syms, t) = family("t", n, SymbolKind::Decision);
    let (m_syms, m) = family("m", n, SymbolKind::Decision);
    let (eta_s, eta) = scalar("eta");
    let (c0_s, c0) = scalar("c0");
    let (a0_s, a0) = scalar("a0");
    let (lr_s, lr) = scalar("lr");

    let sum_e = Expr::family_sum(&e_syms);
    let sum_m = Expr::family_sum(&m_syms);
    let lp = (1.0 - &lr).ln() / std::f64::consts::LN_2;
    let ratio = (&a0 + &eta * &sum_m * &sum_e) / &a0;
    let learned = ratio.pow(lp);
    let reduction = 1.0 - &learned;
    let unit_cost = match p.cost_basis {
        CostBasis::Initial => c0.clone(),
        CostBasis::Learned => &c0 * &learned,
    };

    let mut constraints = Vec::with_capacity(2 * n + 2);
    for (i, x) in plants.iter().enumerate() {
        // Divided by the nominal emissions so the violation reads in $/t.
        let g = &e[i] * (&unit_cost - &eta * &t[i]) / x.emissions;
        constraints.push(RobustConstraint::new(format!("viability[{i}]"), g));
    }
    for i in 0..n {
        constraints.push(RobustConstraint::new(format!("share_cap[{i}]"), &m[i] - &e[i] / &sum_e));
    }
    constraints.push(RobustConstraint::new(
        "reduction",
        reduction_constraint(&reduction, p.mu, p.mu_direction),
    ));

    let mut decisions = Vec::with_capacity(2 * n + 1);
    let mut x0 = Binding::new();
    for i in 0..n {
        decisions.push(Variable::new(t_syms[i].clone(), 0.0, t_max));
        x0.insert(t_syms[i].name(), t_floor);
    }
    for s in &m_syms {
        decisions.push(Variable::new(s.clone(), 0.0, 1.0));
        x0.insert(s.name(), 0.0);
    }

    let mut params: Vec<UncertainParam> = plants
        .iter()
        .zip(&e_syms)
        .map(|(x, s)| UncertainParam::new(s.clone(), x.emissions, PhysicalBounds::POSITIVE))
        .collect();
    params.push(UncertainParam::new(eta_s, p.eta, PhysicalBounds::EFFICIENCY));
    params.push(UncertainParam::new(c0_s, p.c0, PhysicalBounds::POSITIVE));
    params.push(UncertainParam::new(a0_s, p.a0, PhysicalBounds::POSITIVE));
    params.push(UncertainParam::new(lr_s, p.lr, PhysicalBounds::RATE));

    let objective = &c0 * &reduction;
    let tau = Symbol::decision("tau");
    x0.insert("tau", 0.0);
    let tiebreak = p.policy_weight * p.c0 * Expr::indexed_sum("t", t.clone()) / t_max;
    let problem = UncertainProblem::new(decisions, objective, constraints, params)
        .with_epigraph(&tau, -p.c0, 3.0 * p.c0)
        .with_tiebreak(tiebreak)
        .with_start(x0);

    Ok(BuiltModel {
        size: ModelSize {
            variables: 2 * n,
            constraints: 2 * n + 2,
            uncertain: n + 4,
        },
        problem,
        policy: t_syms,
        shares: m_syms,
        ids: plants.iter().map(|x| x.id.clone()).collect(),
        reduction,
    })
}

pub fn build_fuel_problem(boilers: &[Boiler], p: &FuelParams) -> Result<BuiltModel> {
    check(!boilers.is_empty(), || "the boiler list is empty".into())?;
    check_unique("boiler", boilers.iter().map(|x| x.id.as_str()))?;
    for x in boilers {
        check(x.demand > 0.0 && x.demand.is_finite(), || {
            format!("boiler `{}` has non-positive demand {}", x.id, x.demand)
        })?;
    }
    for (name, v) in [("lhv_f1", p.lhv_f1), ("lhv_f2", p.lhv_f2), ("c_f1", p.c_f1), ("c0", p.c0), ("a0", p.a0)] {
        check(v > 0.0 && v.is_finite(), || format!("{name} must be positive, got {v}"))?;
    }
    check(p.eta_f2 > 0.0 && p.eta_f2 <= 1.0, || {
        format!("eta_f2 must lie in (0, 1], got {}", p.eta_f2)
    })?;
    check_learning(p.lr, p.mu)?;
    let parity = p.parity_threshold();
    let g_max = p.g_max.unwrap_or(10.0 * parity.max(1.0));
    check(g_max >= parity, || {
        format!("grant bound {g_max} is below the parity threshold {parity}")
    })?;

    let n = boilers.len();
    let (w_syms, w) = family("W", n, SymbolKind::Uncertain);
    let (g_syms, g) = family("G", n, SymbolKind::Decision);
    let (phi_syms, phi) = family("phi", n, SymbolKind::Decision);
    let (lr_s, lr) = scalar("lr");
    let (eta_s, eta) = scalar("eta_f2");
    let (c0_s, c0) = scalar("c0");
    let (a0_s, a0) = scalar("a0");
    let (lhv2_s, lhv2) = scalar("lhv_f2");
    let (lhv1_s, lhv1) = scalar("lhv_f1");
    let (cf1_s, cf1) = scalar("c_f1");

    let sum_w = Expr::family_sum(&w_syms);
    let sum_phi = Expr::family_sum(&phi_syms);
    let lp = (1.0 - &lr).ln() / std::f64::consts::LN_2;
    // MJ / (MJ/kg) / 1000 = tonnes of transition fuel.
    let ratio = (&a0 + &sum_phi * &sum_w / (1000.0 * &lhv2)) / &a0;
    let learned = ratio.pow(lp);
    let reduction = 1.0 - &learned;
    let fuel_cost = match p.cost_basis {
        CostBasis::Initial => c0.clone(),
        CostBasis::Learned => &c0 * &learned,
    };
    // Efficiency multiplies the transition-fuel heat cost, as in the model statement.
    let heat_gap = 3.6 * &fuel_cost * &eta / &lhv2 - 3.6 * &cf1 / &lhv1;

    let mut constraints = Vec::with_capacity(2 * n + 2);
    for (j, gj) in g.iter().enumerate() {
        constraints.push(RobustConstraint::new(format!("parity[{j}]"), &heat_gap - gj));
    }
    for j in 0..n {
        constraints.push(RobustConstraint::new(format!("share_cap[{j}]"), &phi[j] - &w[j] / &sum_w));
    }
    constraints.push(RobustConstraint::new(
        "reduction",
        reduction_constraint(&reduction, p.mu, p.mu_direction),
    ));

    let mut decisions = Vec::with_capacity(2 * n + 1);
    let mut x0 = Binding::new();
    for s in &g_syms {
        decisions.push(Variable::new(s.clone(), 0.0, g_max));
        x0.insert(s.name(), parity.max(0.0));
    }
    for s in &phi_syms {
        decisions.push(Variable::new(s.clone(), 0.0, 1.0));
        x0.insert(s.name(), 0.0);
    }

    let mut params: Vec<UncertainParam> = boilers
        .iter()
        .zip(&w_syms)
        .map(|(x, s)| UncertainParam::new(s.clone(), x.demand, PhysicalBounds::POSITIVE))
        .collect();
    params.push(UncertainParam::new(lr_s, p.lr, PhysicalBounds::RATE));
    params.push(UncertainParam::new(eta_s, p.eta_f2, PhysicalBounds::EFFICIENCY));
    params.push(UncertainParam::new(c0_s, p.c0, PhysicalBounds::POSITIVE));
    params.push(UncertainParam::new(a0_s, p.a0, PhysicalBounds::POSITIVE));
    params.push(UncertainParam::new(lhv2_s, p.lhv_f2, PhysicalBounds::POSITIVE));
    params.push(UncertainParam::new(lhv1_s, p.lhv_f1, PhysicalBounds::POSITIVE));
    params.push(UncertainParam::new(cf1_s, p.c_f1, PhysicalBounds::POSITIVE));

    let objective = &c0 * &reduction;
    let tau = Symbol::decision("tau");
    x0.insert("tau", 0.0);
    let tiebreak = p.policy_weight * p.c0 * Expr::indexed_sum("G", g.clone()) / g_max;
    let problem = UncertainProblem::new(decisions, objective, constraints, params)
        .with_epigraph(&tau, -p.c0, 3.0 * p.c0)
        .with_tiebreak(tiebreak)
        .with_start(x0);

    Ok(BuiltModel {
        size: ModelSize {
            variables: 2 * n + 1,
            constraints: 2 * n + 2,
            uncertain: n + 7,
        },
        problem,
        policy: g_syms,
        shares: phi_syms,
        ids: boilers.iter().map(|x| x.id.clone()).collect(),
        reduction,
    })
}

/// `min x1 + x2  s.t.  u1·x1² + u2·x2² − 1 ≤ 0`, `x ∈ [−2, 2]²`, nominal `u = (1, 1)`.
pub fn build_toy_problem() -> BuiltModel {
    let (x1, x2) = (Symbol::decision("x1"), Symbol::decision("x2"));
    let (u1, u2) = (Symbol::uncertain("u1"), Symbol::uncertain("u2"));
    let (a, b) = (Expr::symbol(&x1), Expr::symbol(&x2));
    let g = Expr::symbol(&u1) * &a * &a + Expr::symbol(&u2) * &b * &b - 1.0;
    let problem = UncertainProblem::new(
        vec![Variable::new(x1, -2.0, 2.0), Variable::new(x2, -2.0, 2.0)],
        &a + &b,
        vec![RobustConstraint::new("disc", g)],
        vec![
            UncertainParam::new(u1, 1.0, PhysicalBounds::POSITIVE),
            UncertainParam::new(u2, 1.0, PhysicalBounds::POSITIVE),
        ],
    );
    BuiltModel {
        problem,
        size: ModelSize {
            variables: 2,
            constraints: 1,
            uncertain: 2,
        },
        policy: vec![],
        shares: vec![],
        ids: vec![],
        reduction: Expr::constant(0.0),
    }
}

/// A model plus its data, rebuildable with a different market share limit.
#[derive(Debug, Clone)]
pub enum Scenario {
    Tech { plants: Vec<Plant>, params: TechParams },
    Fuel { boilers: Vec<Boiler>, params: FuelParams },
    Toy,
}

impl Scenario {
    pub fn build(&self) -> Result<BuiltModel> {
        match self {
            Scenario::Tech { plants, params } => build_tech_problem(plants, params),
            Scenario::Fuel { boilers, params } => build_fuel_problem(boilers, params),
            Scenario::Toy => Ok(build_toy_problem()),
        }
    }

    pub fn with_mu(&self, mu: f64) -> Scenario {
        let mut s = self.clone();
        match &mut s {
            Scenario::Tech { params, .. } => params.mu = mu,
            Scenario::Fuel { params, .. } => params.mu = mu,
            Scenario::Toy => {}
        }
        s
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Tech { .. } => "tech",
            Scenario::Fuel { .. } => "fuel",
            Scenario::Toy => "toy",
        }
    }

    pub fn policy_label(&self) -> &'static str {
        match self {
            Scenario::Tech { .. } => "tax",
            Scenario::Fuel { .. } => "grant",
            Scenario::Toy => "x",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::evaluate;

    fn plants(n: usize) -> Vec<Plant> {
        (0..n)
            .map(|i| Plant {
                id: format!("p{i}"),
                name: format!("plant {i}"),
                lat: 50.0,
                lon: 10.0,
                emissions: 1e6 * (1.0 + i as f64),
            })
            .collect()
    }

    fn boilers(n: usize) -> Vec<Boiler> {
        (0..n)
            .map(|j| Boiler {
                id: format!("b{j}"),
                site: format!("site {j}"),
                demand: 1e8 * (1.0 + j as f64),
            })
            .collect()
    }

    #[test]
    fn learning_primitives() {
        assert_eq!(learning_exponent(0.0).unwrap(), 0.0);
        assert_eq!(learning_exponent(0.5).unwrap(), -1.0);
        // ln(0.93)/ln 2 evaluated independently
        assert!((learning_exponent(0.07).unwrap() - (-0.104_697)).abs() < 1e-6);
        assert!(learning_exponent(1.0).is_err() && learning_exponent(-0.1).is_err());
        let lp = learning_exponent(0.07).unwrap();
        assert_eq!(cost_reduction_fraction(1.0, lp).unwrap(), 0.0);
        assert!((cost_reduction_fraction(4.0, lp).unwrap() - (1.0 - 0.93 * 0.93)).abs() < 1e-12);
        assert!((cost_reduction_fraction(4.0, lp).unwrap() - 0.13510).abs() < 1e-5);
        assert!(cost_reduction_fraction(0.99, lp).is_err());
    }

    #[test]
    fn tech_sizes() {
        let m = build_tech_problem(&plants(32), &TechParams::default()).unwrap();
        assert_eq!(m.size, ModelSize { variables: 64, constraints: 66, uncertain: 36 });
        assert_eq!(m.problem.params.len(), 36);
        // epigraph adds tau and one constraint to the 2I+1 explicit ones
        assert_eq!(m.problem.decisions.len(), 65);
        assert_eq!(m.problem.constraints.len(), 66);
        let one = build_tech_problem(&plants(1), &TechParams::default()).unwrap();
        assert_eq!(one.size, ModelSize { variables: 2, constraints: 4, uncertain: 5 });
    }

    #[test]
    fn fuel_sizes_and_parity() {
        let m = build_fuel_problem(&boilers(354), &FuelParams::default()).unwrap();
        assert_eq!(m.size.variables, 709);
        assert_eq!(m.size.constraints, 710);
        assert_eq!(m.size.uncertain, 361);
        assert_eq!(m.problem.params.len(), 361);
        let one = build_fuel_problem(&boilers(1), &FuelParams::default()).unwrap();
        assert_eq!((one.size.variables, one.size.constraints), (3, 4));
        // 3.6·1800·0.9/120 − 3.6·292/42
        let expected = 48.6 - 3.6 * 292.0 / 42.0;
        assert!((FuelParams::default().parity_threshold() - expected).abs() < 1e-12);
        assert!((expected - 23.5714).abs() < 1e-4);
    }

    #[test]
    fn doubling_gives_the_learning_rate() {
        let ps = plants(3);
        let p = TechParams::default();
        let m = build_tech_problem(&ps, &p).unwrap();
        let sum_e: f64 = ps.iter().map(|x| x.emissions).sum();
        // η·Σm·ΣE = A0 with equal shares
        let share = p.a0 / (p.eta * sum_e) / 3.0;
        let mut b = m.nominal();
        for s in &m.shares {
            b.set(s, share);
        }
        let red = evaluate(&m.reduction, &b).unwrap();
        assert!((red - p.lr).abs() < 1e-12);
    }

    #[test]
    fn initial_basis_forces_tax_floor() {
        let p = TechParams {
            cost_basis: CostBasis::Initial,
            ..TechParams::default()
        };
        let m = build_tech_problem(&plants(2), &p).unwrap();
        let mut b = m.nominal();
        b.insert("m[0]", 0.1);
        b.insert("m[1]", 0.1);
        b.insert("t[1]", 0.0);
        let floor = p.c0 / p.eta;
        for (t, sign) in [(floor - 1e-6, 1.0), (floor + 1e-6, -1.0)] {
            b.insert("t[0]", t);
            let g = evaluate(&m.problem.constraints[0].expr, &b).unwrap();
            assert_eq!(g.signum(), sign);
        }
    }

    #[test]
    fn constraints_at_nominal_match_hand_values() {
        let ps = plants(2);
        let p = TechParams::default();
        let m = build_tech_problem(&ps, &p).unwrap();
        let mut b = m.nominal();
        for (k, v) in [("t[0]", 100.0), ("t[1]", 150.0), ("m[0]", 0.2), ("m[1]", 0.3), ("tau", 5.0)] {
            b.insert(k, v);
        }
        let lp = learning_exponent(p.lr).unwrap();
        let sum_e = 3e6;
        let r = (p.a0 + p.eta * 0.5 * sum_e) / p.a0;
        let learned = p.c0 * r.powf(lp);
        let expect = [
            learned - p.eta * 100.0,
            learned - p.eta * 150.0,
            0.2 - 1.0 / 3.0,
            0.3 - 2.0 / 3.0,
            p.mu - (1.0 - r.powf(lp)),
            p.c0 * (1.0 - r.powf(lp)) - 5.0,
        ];
        for (c, want) in m.problem.constraints.iter().zip(expect) {
            let got = evaluate(&c.expr, &b).unwrap();
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{}: {got} vs {want}", c.name);
        }
    }

    #[test]
    fn builder_errors() {
        assert!(build_tech_problem(&[], &TechParams::default()).is_err());
        let mut dup = plants(2);
        dup[1].id = dup[0].id.clone();
        assert!(build_tech_problem(&dup, &TechParams::default()).is_err());
        let tight = TechParams {
            t_max: Some(1.0),
            ..TechParams::default()
        };
        assert!(build_tech_problem(&plants(2), &tight).is_err());
        assert!(build_fuel_problem(&[], &FuelParams::default()).is_err());
        assert!("sphere".parse::<CostBasis>().is_err());
    }
}
