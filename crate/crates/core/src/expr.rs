//! Expression IR shared by every model equation.
//!
//! An [`Expr`] is an immutable, reference-counted tree over named [`Symbol`]s.
//! Trees are evaluated against a [`Binding`], differentiated exactly in
//! reverse mode, and partially instantiated with [`substitute`] when a
//! cutting-set iteration fixes the uncertain parameters of a constraint.
//!
//! Hot loops do not walk the tree: [`Tape`] flattens an expression into a
//! post-order instruction list addressed by slot indices, which the NLP solver
//! evaluates millions of times.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymbolKind {
    Decision,
    Uncertain,
    Constant,
}

/// A named scalar. Members of a vectorized family (`E[3]`, `phi[17]`) carry
/// the family name and their index.
#[derive(Debug, Clone)]
pub struct Symbol {
    name: Arc<str>,
    kind: SymbolKind,
    family: Option<(Arc<str>, usize)>,
}

impl Symbol {
    pub fn new(name: impl AsRef<str>, kind: SymbolKind) -> Self {
        Self {
            name: Arc::from(name.as_ref()),
            kind,
            family: None,
        }
    }

    /// Member `index` of `family`, named `family[index]`.
    pub fn member(family: impl AsRef<str>, index: usize, kind: SymbolKind) -> Self {
        let family = family.as_ref();
        Self {
            name: Arc::from(format!("{family}[{index}]")),
            kind,
            family: Some((Arc::from(family), index)),
        }
    }

    pub fn decision(name: impl AsRef<str>) -> Self {
        Self::new(name, SymbolKind::Decision)
    }

    pub fn uncertain(name: impl AsRef<str>) -> Self {
        Self::new(name, SymbolKind::Uncertain)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> SymbolKind {
        self.kind
    }

    pub fn family(&self) -> Option<&str> {
        self.family.as_ref().map(|(f, _)| f.as_ref())
    }

    pub fn index(&self) -> Option<usize> {
        self.family.as_ref().map(|(_, i)| *i)
    }

    /// Family name for members, own name otherwise.
    pub fn group(&self) -> &str {
        self.family().unwrap_or(self.name())
    }
}

impl PartialEq for Symbol {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

impl Eq for Symbol {}

impl std::hash::Hash for Symbol {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.name.hash(state)
    }
}

impl PartialOrd for Symbol {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Symbol {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.name.cmp(&other.name)
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Assignment of real values to symbol names. Ordered so that serialized
/// bindings are stable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Binding(BTreeMap<String, f64>);

impl Binding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: f64) -> Option<f64> {
        self.0.insert(name.into(), value)
    }

    pub fn set(&mut self, symbol: &Symbol, value: f64) {
        self.0.insert(symbol.name().to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn value(&self, symbol: &Symbol) -> Result<f64> {
        self.get(symbol.name())
            .ok_or_else(|| Error::MissingBinding(symbol.name().to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Union of two bindings; entries of `other` win on collision.
    pub fn union(&self, other: &Binding) -> Binding {
        let mut out = self.clone();
        out.0.extend(other.0.iter().map(|(k, v)| (k.clone(), *v)));
        out
    }

    pub fn extend(&mut self, other: &Binding) {
        self.0.extend(other.0.iter().map(|(k, v)| (k.clone(), *v)));
    }
}

impl FromIterator<(String, f64)> for Binding {
    fn from_iter<T: IntoIterator<Item = (String, f64)>>(iter: T) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl<'a> FromIterator<(&'a str, f64)> for Binding {
    fn from_iter<T: IntoIterator<Item = (&'a str, f64)>>(iter: T) -> Self {
        Self(iter.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }
}

#[derive(Debug)]
pub enum Node {
    Const(f64),
    Sym(Symbol),
    Neg(Expr),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Pow(Expr, Expr),
    Ln(Expr),
    /// Sum over the members of a declared symbol family; `terms` holds one
    /// child per member.
    Sum { family: Arc<str>, terms: Vec<Expr> },
}

#[derive(Debug, Clone)]
pub struct Expr(Arc<Node>);

impl Expr {
    fn from_node(node: Node) -> Self {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    /// Constant node; panics on a non-finite value.
    pub fn constant(value: f64) -> Self {
        assert!(value.is_finite(), "expression constants must be finite, got {value}");
        Self::from_node(Node::Const(value))
    }

    pub fn symbol(symbol: &Symbol) -> Self {
        Self::from_node(Node::Sym(symbol.clone()))
    }

    pub fn ln(&self) -> Self {
        Self::from_node(Node::Ln(self.clone()))
    }

    pub fn pow(&self, exponent: impl Into<Expr>) -> Self {
        Self::from_node(Node::Pow(self.clone(), exponent.into()))
    }

    pub fn powf(&self, exponent: f64) -> Self {
        self.pow(Expr::constant(exponent))
    }

    /// Sum of arbitrary per-member terms of `family`.
    pub fn indexed_sum(family: impl AsRef<str>, terms: Vec<Expr>) -> Self {
        Self::from_node(Node::Sum {
            family: Arc::from(family.as_ref()),
            terms,
        })
    }

    /// `Σ_k s_k` over the members of a family.
    pub fn family_sum(members: &[Symbol]) -> Self {
        let family = members
            .first()
            .map(|s| s.group().to_string())
            .unwrap_or_default();
        Self::indexed_sum(family, members.iter().map(Expr::symbol).collect())
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self.node() {
            Node::Const(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.as_constant().is_some()
    }

    fn ptr(&self) -> *const Node {
        Arc::as_ptr(&self.0)
    }

    fn children(&self) -> Vec<&Expr> {
        match self.node() {
            Node::Const(_) | Node::Sym(_) => vec![],
            Node::Neg(a) | Node::Ln(a) => vec![a],
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                vec![a, b]
            }
            Node::Sum { terms, .. } => terms.iter().collect(),
        }
    }

    /// Distinct free symbols, sorted by name.
    pub fn free_symbols(&self) -> Vec<Symbol> {
        let mut seen = std::collections::HashSet::new();
        let mut out = std::collections::BTreeSet::new();
        let mut stack = vec![self];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.ptr()) {
                continue;
            }
            if let Node::Sym(s) = e.node() {
                out.insert(s.clone());
            }
            stack.extend(e.children());
        }
        out.into_iter().collect()
    }

    pub fn depends_on_kind(&self, kind: SymbolKind) -> bool {
        self.free_symbols().iter().any(|s| s.kind() == kind)
    }

    /// Number of distinct nodes.
    pub fn size(&self) -> usize {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self];
        while let Some(e) = stack.pop() {
            if seen.insert(e.ptr()) {
                stack.extend(e.children());
            }
        }
        seen.len()
    }

    fn describe(&self) -> String {
        let mut s = self.to_string();
        if s.len() > 120 {
            s.truncate(117);
            s.push_str("...");
        }
        s
    }
}

impl From<f64> for Expr {
    fn from(v: f64) -> Self {
        Expr::constant(v)
    }
}

impl From<&Symbol> for Expr {
    fn from(s: &Symbol) -> Self {
        Expr::symbol(s)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Const(v) => write!(f, "{v}"),
            Node::Sym(s) => write!(f, "{s}"),
            Node::Neg(a) => write!(f, "(neg {a})"),
            Node::Add(a, b) => write!(f, "(+ {a} {b})"),
            Node::Sub(a, b) => write!(f, "(- {a} {b})"),
            Node::Mul(a, b) => write!(f, "(* {a} {b})"),
            Node::Div(a, b) => write!(f, "(/ {a} {b})"),
            Node::Pow(a, b) => write!(f, "(^ {a} {b})"),
            Node::Ln(a) => write!(f, "(ln {a})"),
            Node::Sum { family, terms } => {
                write!(f, "(sum[{family}]")?;
                for t in terms {
                    write!(f, " {t}")?;
                }
                write!(f, ")")
            }
        }
    }
}

macro_rules! binary_op {
    ($trait:ident, $method:ident, $variant:ident) => {
        impl $trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::from_node(Node::$variant(self, rhs))
            }
        }
        impl $trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::from_node(Node::$variant(self.clone(), rhs.clone()))
            }
        }
        impl $trait<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::from_node(Node::$variant(self, rhs.clone()))
            }
        }
        impl $trait<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::from_node(Node::$variant(self.clone(), rhs))
            }
        }
        impl $trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::from_node(Node::$variant(self, Expr::constant(rhs)))
            }
        }
        impl $trait<f64> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::from_node(Node::$variant(self.clone(), Expr::constant(rhs)))
            }
        }
        impl $trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::from_node(Node::$variant(Expr::constant(self), rhs))
            }
        }
        impl $trait<&Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::from_node(Node::$variant(Expr::constant(self), rhs.clone()))
            }
        }
    };
}

binary_op!(Add, add, Add);
binary_op!(Sub, sub, Sub);
binary_op!(Mul, mul, Mul);
binary_op!(Div, div, Div);

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::from_node(Node::Neg(self))
    }
}

impl Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::from_node(Node::Neg(self.clone()))
    }
}

// Scalar kernels shared by tree evaluation, constant folding and tapes, so
// that all three produce bit-identical values.

fn ln_value(a: f64) -> std::result::Result<f64, String> {
    if a > 0.0 {
        Ok(a.ln())
    } else {
        Err(format!("logarithm of non-positive value {a}"))
    }
}

fn pow_value(a: f64, b: f64) -> std::result::Result<f64, String> {
    if a > 0.0 || b.fract() == 0.0 {
        Ok(a.powf(b))
    } else {
        Err(format!("power with non-integer exponent {b} of non-positive base {a}"))
    }
}

fn domain(expr: &Expr, detail: String) -> Error {
    Error::Domain {
        node: expr.describe(),
        detail,
    }
}

/// Exact value of `expr` under `binding`.
pub fn evaluate(expr: &Expr, binding: &Binding) -> Result<f64> {
    Ok(match expr.node() {
        Node::Const(v) => *v,
        Node::Sym(s) => binding.value(s)?,
        Node::Neg(a) => -evaluate(a, binding)?,
        Node::Add(a, b) => evaluate(a, binding)? + evaluate(b, binding)?,
        Node::Sub(a, b) => evaluate(a, binding)? - evaluate(b, binding)?,
        Node::Mul(a, b) => evaluate(a, binding)? * evaluate(b, binding)?,
        Node::Div(a, b) => evaluate(a, binding)? / evaluate(b, binding)?,
        Node::Pow(a, b) => {
            let (va, vb) = (evaluate(a, binding)?, evaluate(b, binding)?);
            pow_value(va, vb).map_err(|d| domain(expr, d))?
        }
        Node::Ln(a) => ln_value(evaluate(a, binding)?).map_err(|d| domain(expr, d))?,
        Node::Sum { terms, .. } => {
            let mut s = 0.0;
            for t in terms {
                s += evaluate(t, binding)?;
            }
            s
        }
    })
}

/// Exact partial derivatives of `expr` with respect to `symbols`, in order.
/// Symbols not free in `expr` get a zero component.
pub fn gradient(expr: &Expr, symbols: &[Symbol], binding: &Binding) -> Result<Vec<f64>> {
    let free = expr.free_symbols();
    let slots: HashMap<&str, usize> = free.iter().enumerate().map(|(i, s)| (s.name(), i)).collect();
    let x = free
        .iter()
        .map(|s| binding.value(s))
        .collect::<Result<Vec<_>>>()?;
    let tape = Tape::compile(expr, |s| slots.get(s.name()).copied())?;
    let mut g = vec![0.0; free.len()];
    let mut ws = TapeWorkspace::default();
    tape.eval_grad(&x, &mut ws, 1.0, &mut g)?;
    Ok(symbols
        .iter()
        .map(|s| slots.get(s.name()).map_or(0.0, |&i| g[i]))
        .collect())
}

/// Replace bound symbols by constants. Subtrees whose children all become
/// constant are folded with the same kernels `evaluate` uses, so
/// `evaluate(substitute(e, a), b) == evaluate(e, a ∪ b)` bit for bit.
pub fn substitute(expr: &Expr, partial: &Binding) -> Expr {
    if partial.is_empty() {
        return expr.clone();
    }
    rewrite(expr, &|s: &Symbol| partial.get(s.name()).map(Expr::constant))
}

/// Replace symbols by arbitrary expressions, folding constant subtrees.
pub fn replace(expr: &Expr, map: &HashMap<String, Expr>) -> Expr {
    rewrite(expr, &|s: &Symbol| map.get(s.name()).cloned())
}

fn rewrite(expr: &Expr, f: &dyn Fn(&Symbol) -> Option<Expr>) -> Expr {
    let mut memo = HashMap::new();
    rewrite_rec(expr, f, &mut memo)
}

fn rewrite_rec(
    expr: &Expr,
    f: &dyn Fn(&Symbol) -> Option<Expr>,
    memo: &mut HashMap<*const Node, Expr>,
) -> Expr {
    if let Some(done) = memo.get(&expr.ptr()) {
        return done.clone();
    }
    let mut go = |e: &Expr| rewrite_rec(e, f, memo);
    let out = match expr.node() {
        Node::Const(_) => expr.clone(),
        Node::Sym(s) => f(s).unwrap_or_else(|| expr.clone()),
        Node::Neg(a) => {
            let a2 = go(a);
            match a2.as_constant() {
                Some(v) => Expr::constant(-v),
                None if same(a, &a2) => expr.clone(),
                None => -a2,
            }
        }
        Node::Ln(a) => {
            let a2 = go(a);
            match a2.as_constant().map(ln_value) {
                Some(Ok(v)) if v.is_finite() => Expr::constant(v),
                _ if same(a, &a2) => expr.clone(),
                _ => a2.ln(),
            }
        }
        Node::Add(a, b) => fold2(expr, go(a), go(b), a, b, |x, y| Ok(x + y), Node::Add),
        Node::Sub(a, b) => fold2(expr, go(a), go(b), a, b, |x, y| Ok(x - y), Node::Sub),
        Node::Mul(a, b) => fold2(expr, go(a), go(b), a, b, |x, y| Ok(x * y), Node::Mul),
        Node::Div(a, b) => fold2(expr, go(a), go(b), a, b, |x, y| Ok(x / y), Node::Div),
        Node::Pow(a, b) => fold2(expr, go(a), go(b), a, b, pow_value, Node::Pow),
        Node::Sum { family, terms } => {
            let new: Vec<Expr> = terms.iter().map(&mut go).collect();
            if new.iter().all(Expr::is_constant) {
                let mut s = 0.0;
                for t in &new {
                    s += t.as_constant().unwrap();
                }
                if s.is_finite() {
                    Expr::constant(s)
                } else {
                    Expr::indexed_sum(family.as_ref(), new)
                }
            } else if new.iter().zip(terms).all(|(n, o)| same(n, o)) {
                expr.clone()
            } else {
                Expr::indexed_sum(family.as_ref(), new)
            }
        }
    };
    memo.insert(expr.ptr(), out.clone());
    out
}

fn same(a: &Expr, b: &Expr) -> bool {
    Arc::ptr_eq(&a.0, &b.0)
}

fn fold2(
    orig: &Expr,
    a2: Expr,
    b2: Expr,
    a: &Expr,
    b: &Expr,
    op: fn(f64, f64) -> std::result::Result<f64, String>,
    make: fn(Expr, Expr) -> Node,
) -> Expr {
    if let (Some(x), Some(y)) = (a2.as_constant(), b2.as_constant()) {
        if let Ok(v) = op(x, y) {
            if v.is_finite() {
                return Expr::constant(v);
            }
        }
    }
    if same(a, &a2) && same(b, &b2) {
        orig.clone()
    } else {
        Expr::from_node(make(a2, b2))
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Const(f64),
    Input(u32),
    Neg(u32),
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    PowConst(u32, f64),
    Pow(u32, u32),
    Ln(u32),
    Sum(u32, u32),
}

/// Scratch buffers for tape evaluation, reusable across calls.
#[derive(Debug, Default, Clone)]
pub struct TapeWorkspace {
    values: Vec<f64>,
    adjoints: Vec<f64>,
}

/// Flattened, slot-addressed form of an [`Expr`] for repeated evaluation and
/// reverse-mode differentiation. Shared subtrees are emitted once.
#[derive(Debug, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    varying: Vec<bool>,
    sum_args: Vec<u32>,
    /// Global slot of each input, indexed by the `Op::Input` operand.
    inputs: Vec<usize>,
    nodes: Vec<Expr>,
}

impl Tape {
    /// Compile `expr`; `resolve` maps each free symbol to a global slot.
    pub fn compile(expr: &Expr, resolve: impl Fn(&Symbol) -> Option<usize>) -> Result<Tape> {
        let mut tape = Tape {
            ops: Vec::new(),
            varying: Vec::new(),
            sum_args: Vec::new(),
            inputs: Vec::new(),
            nodes: Vec::new(),
        };
        let mut index: HashMap<*const Node, u32> = HashMap::new();
        let mut input_of: HashMap<usize, u32> = HashMap::new();
        // Iterative post-order walk: deep sums would overflow a recursive one.
        let mut stack: Vec<(&Expr, bool)> = vec![(expr, false)];
        while let Some((e, expanded)) = stack.pop() {
            if index.contains_key(&e.ptr()) {
                continue;
            }
            if !expanded {
                stack.push((e, true));
                for c in e.children().into_iter().rev() {
                    if !index.contains_key(&c.ptr()) {
                        stack.push((c, false));
                    }
                }
                continue;
            }
            let id = |c: &Expr| index[&c.ptr()];
            let op = match e.node() {
                Node::Const(v) => Op::Const(*v),
                Node::Sym(s) => {
                    let slot = resolve(s).ok_or_else(|| Error::MissingBinding(s.name().to_string()))?;
                    let k = *input_of.entry(slot).or_insert_with(|| {
                        tape.inputs.push(slot);
                        (tape.inputs.len() - 1) as u32
                    });
                    Op::Input(k)
                }
                Node::Neg(a) => Op::Neg(id(a)),
                Node::Ln(a) => Op::Ln(id(a)),
                Node::Add(a, b) => Op::Add(id(a), id(b)),
                Node::Sub(a, b) => Op::Sub(id(a), id(b)),
                Node::Mul(a, b) => Op::Mul(id(a), id(b)),
                Node::Div(a, b) => Op::Div(id(a), id(b)),
                Node::Pow(a, b) => match b.as_constant() {
                    Some(c) => Op::PowConst(id(a), c),
                    None => Op::Pow(id(a), id(b)),
                },
                Node::Sum { terms, .. } => {
                    let start = tape.sum_args.len() as u32;
                    for t in terms {
                        tape.sum_args.push(id(t));
                    }
                    Op::Sum(start, terms.len() as u32)
                }
            };
            let varying = match op {
                Op::Const(_) => false,
                Op::Input(_) => true,
                Op::Neg(a) | Op::Ln(a) | Op::PowConst(a, _) => tape.varying[a as usize],
                Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) | Op::Pow(a, b) => {
                    tape.varying[a as usize] || tape.varying[b as usize]
                }
                Op::Sum(s, n) => tape.sum_args[s as usize..(s + n) as usize]
                    .iter()
                    .any(|&k| tape.varying[k as usize]),
            };
            index.insert(e.ptr(), tape.ops.len() as u32);
            tape.ops.push(op);
            tape.varying.push(varying);
            tape.nodes.push(e.clone());
        }
        Ok(tape)
    }

    /// Global slots read by this tape.
    pub fn inputs(&self) -> &[usize] {
        &self.inputs
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn forward(&self, x: &[f64], values: &mut Vec<f64>) -> Result<f64> {
        values.clear();
        values.reserve(self.ops.len());
        for (i, op) in self.ops.iter().enumerate() {
            let v = |k: u32| values[k as usize];
            let out = match *op {
                Op::Const(c) => c,
                Op::Input(k) => x[self.inputs[k as usize]],
                Op::Neg(a) => -v(a),
                Op::Add(a, b) => v(a) + v(b),
                Op::Sub(a, b) => v(a) - v(b),
                Op::Mul(a, b) => v(a) * v(b),
                Op::Div(a, b) => v(a) / v(b),
                Op::PowConst(a, c) => pow_value(v(a), c).map_err(|d| domain(&self.nodes[i], d))?,
                Op::Pow(a, b) => pow_value(v(a), v(b)).map_err(|d| domain(&self.nodes[i], d))?,
                Op::Ln(a) => ln_value(v(a)).map_err(|d| domain(&self.nodes[i], d))?,
                Op::Sum(s, n) => {
                    let mut acc = 0.0;
                    for &k in &self.sum_args[s as usize..(s + n) as usize] {
                        acc += values[k as usize];
                    }
                    acc
                }
            };
            values.push(out);
        }
        Ok(*values.last().expect("tape is never empty"))
    }

    /// Value at the global point `x`.
    pub fn eval(&self, x: &[f64], ws: &mut TapeWorkspace) -> Result<f64> {
        self.forward(x, &mut ws.values)
    }

    /// Value at `x`; adds `scale · ∂f/∂x` into `grad` (global slots).
    pub fn eval_grad(&self, x: &[f64], ws: &mut TapeWorkspace, scale: f64, grad: &mut [f64]) -> Result<f64> {
        let value = self.forward(x, &mut ws.values)?;
        self.backward(ws, scale, grad)?;
        Ok(value)
    }

    /// Reverse sweep over the values left in `ws` by the last [`Tape::eval`]
    /// of this tape; adds `scale · ∂f/∂x` into `grad`.
    pub fn backward(&self, ws: &mut TapeWorkspace, scale: f64, grad: &mut [f64]) -> Result<()> {
        debug_assert_eq!(ws.values.len(), self.ops.len());
        let vals = &ws.values;
        let adj = &mut ws.adjoints;
        adj.clear();
        adj.resize(self.ops.len(), 0.0);
        let last = self.ops.len() - 1;
        adj[last] = scale;
        for i in (0..self.ops.len()).rev() {
            let w = adj[i];
            if w == 0.0 || !self.varying[i] {
                continue;
            }
            match self.ops[i] {
                Op::Const(_) => {}
                Op::Input(k) => grad[self.inputs[k as usize]] += w,
                Op::Neg(a) => adj[a as usize] -= w,
                Op::Add(a, b) => {
                    adj[a as usize] += w;
                    adj[b as usize] += w;
                }
                Op::Sub(a, b) => {
                    adj[a as usize] += w;
                    adj[b as usize] -= w;
                }
                Op::Mul(a, b) => {
                    adj[a as usize] += w * vals[b as usize];
                    adj[b as usize] += w * vals[a as usize];
                }
                Op::Div(a, b) => {
                    let vb = vals[b as usize];
                    adj[a as usize] += w / vb;
                    adj[b as usize] -= w * vals[a as usize] / (vb * vb);
                }
                Op::PowConst(a, c) => {
                    if c != 0.0 {
                        adj[a as usize] += w * c * vals[a as usize].powf(c - 1.0);
                    }
                }
                Op::Pow(a, b) => {
                    let (va, vb) = (vals[a as usize], vals[b as usize]);
                    if self.varying[a as usize] {
                        adj[a as usize] += w * vb * va.powf(vb - 1.0);
                    }
                    if self.varying[b as usize] {
                        // d/db a^b = a^b ln a, only defined for a > 0
                        if va <= 0.0 {
                            return Err(domain(
                                &self.nodes[i],
                                format!("derivative of power in its exponent at non-positive base {va}"),
                            ));
                        }
                        adj[b as usize] += w * vals[i] * va.ln();
                    }
                }
                Op::Ln(a) => adj[a as usize] += w / vals[a as usize],
                Op::Sum(s, n) => {
                    for &k in &self.sum_args[s as usize..(s + n) as usize] {
                        adj[k as usize] += w;
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bind(pairs: &[(&str, f64)]) -> Binding {
        pairs.iter().copied().collect()
    }

    #[test]
    fn constant_evaluates_to_itself() {
        assert_eq!(evaluate(&Expr::constant(3.0), &Binding::new()).unwrap(), 3.0);
    }

    #[test]
    fn product_plus_log() {
        let x = Symbol::decision("x");
        let y = Symbol::decision("y");
        let e = Expr::symbol(&x) * Expr::symbol(&y) + Expr::symbol(&x).ln();
        let v = evaluate(&e, &bind(&[("x", 2.0), ("y", 3.0)])).unwrap();
        assert!((v - 6.693147).abs() < 1e-6);
    }

    #[test]
    fn negative_learning_exponent_power() {
        let r = Symbol::decision("r");
        let lp = Symbol::uncertain("L_P");
        let e = Expr::symbol(&r).pow(Expr::symbol(&lp));
        assert_eq!(evaluate(&e, &bind(&[("r", 2.0), ("L_P", -1.0)])).unwrap(), 0.5);
    }

    #[test]
    fn missing_symbol_is_reported() {
        let x = Symbol::decision("x");
        let err = evaluate(&(Expr::symbol(&x) + 1.0), &Binding::new()).unwrap_err();
        assert!(matches!(err, Error::MissingBinding(ref n) if n == "x"));
    }

    #[test]
    fn log_domain_error_names_node() {
        let x = Symbol::decision("x");
        let err = evaluate(&Expr::symbol(&x).ln(), &bind(&[("x", -1.0)])).unwrap_err();
        match err {
            Error::Domain { node, .. } => assert_eq!(node, "(ln x)"),
            other => panic!("unexpected {other:?}"),
        }
        let err = evaluate(&Expr::symbol(&x).powf(0.5), &bind(&[("x", -4.0)])).unwrap_err();
        assert!(matches!(err, Error::Domain { .. }));
        // integer exponents accept negative bases
        assert_eq!(evaluate(&Expr::symbol(&x).powf(2.0), &bind(&[("x", -4.0)])).unwrap(), 16.0);
    }

    #[test]
    fn elementary_derivatives() {
        let x = Symbol::decision("x");
        let sq = Expr::symbol(&x).powf(2.0);
        assert_eq!(gradient(&sq, &[x.clone()], &bind(&[("x", 3.0)])).unwrap(), vec![6.0]);
        let ln = Expr::symbol(&x).ln();
        assert_eq!(gradient(&ln, &[x.clone()], &bind(&[("x", 2.0)])).unwrap(), vec![0.5]);
        let other = Symbol::decision("y");
        assert_eq!(gradient(&ln, &[other], &bind(&[("x", 2.0)])).unwrap(), vec![0.0]);
    }

    #[test]
    fn power_with_symbolic_exponent_uses_log_identity() {
        let a = Symbol::decision("a");
        let b = Symbol::decision("b");
        let e = Expr::symbol(&a).pow(Expr::symbol(&b));
        let g = gradient(&e, &[a.clone(), b.clone()], &bind(&[("a", 3.0), ("b", 2.0)])).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-12);
        assert!((g[1] - 9.0 * 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn substitute_folds_bound_parameters() {
        let u = Symbol::uncertain("u");
        let x = Symbol::decision("x");
        let e = Expr::symbol(&u) * Expr::symbol(&x);
        let s = substitute(&e, &bind(&[("u", 2.0)]));
        assert_eq!(s.to_string(), "(* 2 x)");
        let sum = Expr::symbol(&x) + Expr::symbol(&u);
        let same = substitute(&sum, &Binding::new());
        assert_eq!(same.to_string(), "(+ x u)");
    }

    #[test]
    fn substitute_folds_whole_family_sums() {
        let es: Vec<Symbol> = (0..3).map(|i| Symbol::member("E", i, SymbolKind::Uncertain)).collect();
        let m = Symbol::decision("m");
        let e = Expr::symbol(&m) - Expr::symbol(&es[1]) / Expr::family_sum(&es);
        let s = substitute(&e, &bind(&[("E[0]", 1.0), ("E[1]", 2.0), ("E[2]", 5.0)]));
        assert_eq!(s.to_string(), "(- m 0.25)");
    }

    #[test]
    fn tape_shares_common_subtrees() {
        let x = Symbol::decision("x");
        let xe = Expr::symbol(&x);
        let sq = &xe * &xe;
        let e = &sq + &sq;
        let tape = Tape::compile(&e, |_| Some(0)).unwrap();
        assert_eq!(tape.len(), 3);
        let mut ws = TapeWorkspace::default();
        let mut g = [0.0];
        let v = tape.eval_grad(&[3.0], &mut ws, 1.0, &mut g).unwrap();
        assert_eq!(v, 18.0);
        assert_eq!(g[0], 12.0);
    }

    #[test]
    fn prefix_dump() {
        let x = Symbol::decision("x");
        let e = -(Expr::symbol(&x).ln() / 2.0);
        assert_eq!(e.to_string(), "(neg (/ (ln x) 2))");
    }
}
