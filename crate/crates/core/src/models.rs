// SPDX-License-Identifier: Apache-2.0

//! Built-in underlying models: carriers, interpretation, calculation steps
//! and the constraint-validity oracle.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::lia;
use crate::smt::SolverSession;
pub use crate::terms::Value;
use crate::terms::{FunSymbol, Position, Signature, Sort, Substitution, Term, TheoryOp, Variable};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("term is not ground: {0}")]
    NonGround(Term),
    #[error("term contains a non-theory symbol: {0}")]
    NonTheorySymbol(Term),
    #[error("value {0} is not in the carrier of {1}")]
    OutsideCarrier(String, String),
    #[error("modulus must be between 1 and 64, got {0}")]
    BadModulus(u32),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("external solver failure: {0}")]
    SolverFailure(String),
    #[error("constraint is not a theory formula: {0}")]
    NotAConstraint(Term),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Bool,
    Lia,
    IntMod(u32),
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Bool => f.write_str("bool"),
            ModelKind::Lia => f.write_str("lia"),
            ModelKind::IntMod(n) => write!(f, "(intmod {n})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Carrier {
    Finite(Vec<Value>),
    Integers,
}

/// An underlying model together with its theory signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnderlyingModel {
    kind: ModelKind,
    signature: Signature,
}

impl UnderlyingModel {
    pub fn new(kind: ModelKind) -> Result<Self, ModelError> {
        if let ModelKind::IntMod(n) = kind {
            if !(1..=64).contains(&n) {
                return Err(ModelError::BadModulus(n));
            }
        }
        let mut sig = Signature::new();
        let b = Sort::bool();
        sig.add_sort(b.clone()).expect("fresh signature");
        let th = |op, args: &[&Sort], res: &Sort| {
            FunSymbol::theory(op, args.iter().map(|s| (*s).clone()).collect(), res.clone())
                .expect("theory sorts")
        };
        for s in [
            th(TheoryOp::Not, &[&b], &b),
            th(TheoryOp::And, &[&b, &b], &b),
            th(TheoryOp::Or, &[&b, &b], &b),
            th(TheoryOp::Implies, &[&b, &b], &b),
            th(TheoryOp::Iff, &[&b, &b], &b),
            th(TheoryOp::Eq, &[&b, &b], &b),
        ] {
            sig.add_symbol(s).expect("builtin");
        }
        if kind != ModelKind::Bool {
            let i = Sort::int();
            sig.add_sort(i.clone()).expect("fresh signature");
            for s in [
                th(TheoryOp::Add, &[&i, &i], &i),
                th(TheoryOp::Sub, &[&i, &i], &i),
                th(TheoryOp::Neg, &[&i], &i),
                th(TheoryOp::Mul, &[&i, &i], &i),
                th(TheoryOp::Mod, &[&i, &i], &i),
                th(TheoryOp::Div, &[&i, &i], &i),
                th(TheoryOp::Eq, &[&i, &i], &b),
                th(TheoryOp::Lt, &[&i, &i], &b),
                th(TheoryOp::Le, &[&i, &i], &b),
                th(TheoryOp::Gt, &[&i, &i], &b),
                th(TheoryOp::Ge, &[&i, &i], &b),
            ] {
                sig.add_symbol(s).expect("builtin");
            }
        }
        Ok(UnderlyingModel {
            kind,
            signature: sig,
        })
    }

    pub fn lia() -> Self {
        Self::new(ModelKind::Lia).expect("lia")
    }

    pub fn boolean() -> Self {
        Self::new(ModelKind::Bool).expect("bool")
    }

    pub fn int_mod(n: u32) -> Result<Self, ModelError> {
        Self::new(ModelKind::IntMod(n))
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn theory_signature(&self) -> &Signature {
        &self.signature
    }

    pub fn has_int(&self) -> bool {
        self.kind != ModelKind::Bool
    }

    pub fn is_finite(&self) -> bool {
        self.kind != ModelKind::Lia
    }

    pub fn carrier(&self, sort: &Sort) -> Option<Carrier> {
        if *sort == Sort::bool() {
            return Some(Carrier::Finite(vec![Value::Bool(false), Value::Bool(true)]));
        }
        if *sort == Sort::int() {
            return match self.kind {
                ModelKind::Bool => None,
                ModelKind::Lia => Some(Carrier::Integers),
                ModelKind::IntMod(n) => {
                    Some(Carrier::Finite((0..n as i64).map(Value::int).collect()))
                }
            };
        }
        None
    }

    pub fn contains(&self, v: &Value) -> bool {
        match (v, self.kind) {
            (Value::Bool(_), _) => true,
            (Value::Int(_), ModelKind::Bool) => false,
            (Value::Int(_), ModelKind::Lia) => true,
            (Value::Int(i), ModelKind::IntMod(n)) => !i.is_negative() && *i < BigInt::from(n),
        }
    }

    /// Theory symbol for `op` at the given argument sort.
    pub fn symbol(&self, op: TheoryOp, arg: &Sort) -> Arc<FunSymbol> {
        let args: Vec<Sort> = match op {
            TheoryOp::Neg | TheoryOp::Not => vec![arg.clone()],
            _ => vec![arg.clone(), arg.clone()],
        };
        self.signature
            .resolve(op.name(), &args)
            .cloned()
            .unwrap_or_else(|| panic!("model {} lacks {} on {}", self.kind, op.name(), arg))
    }

    pub fn mk(&self, op: TheoryOp, args: Vec<Term>) -> Term {
        let sort = args.first().map(Term::sort).unwrap_or_else(Sort::bool);
        Term::App(self.symbol(op, &sort), args.into())
    }

    pub fn eq(&self, a: Term, b: Term) -> Term {
        self.mk(TheoryOp::Eq, vec![a, b])
    }

    pub fn and(&self, a: Term, b: Term) -> Term {
        if a == Term::bool(true) {
            return b;
        }
        if b == Term::bool(true) {
            return a;
        }
        self.mk(TheoryOp::And, vec![a, b])
    }

    pub fn and_all(&self, parts: impl IntoIterator<Item = Term>) -> Term {
        let parts: Vec<Term> = parts.into_iter().collect();
        let mut it = parts.into_iter().rev();
        match it.next() {
            None => Term::bool(true),
            Some(last) => it.fold(last, |acc, p| self.and(p, acc)),
        }
    }

    pub fn or(&self, a: Term, b: Term) -> Term {
        self.mk(TheoryOp::Or, vec![a, b])
    }

    pub fn not(&self, a: Term) -> Term {
        self.mk(TheoryOp::Not, vec![a])
    }

    pub fn implies(&self, a: Term, b: Term) -> Term {
        self.mk(TheoryOp::Implies, vec![a, b])
    }

    fn reduce(&self, i: BigInt) -> Value {
        match self.kind {
            ModelKind::IntMod(n) => Value::Int(i.mod_floor(&BigInt::from(n))),
            _ => Value::Int(i),
        }
    }

    /// Applies the interpretation of `op` to carrier values.
    pub fn apply(&self, op: TheoryOp, args: &[Value]) -> Value {
        let b = |k: usize| args[k].as_bool().expect("bool argument");
        let i = |k: usize| args[k].as_int().expect("int argument");
        match op {
            TheoryOp::Not => Value::Bool(!b(0)),
            TheoryOp::And => Value::Bool(b(0) && b(1)),
            TheoryOp::Or => Value::Bool(b(0) || b(1)),
            TheoryOp::Implies => Value::Bool(!b(0) || b(1)),
            TheoryOp::Iff => Value::Bool(b(0) == b(1)),
            TheoryOp::Eq => Value::Bool(args[0] == args[1]),
            TheoryOp::Lt => Value::Bool(i(0) < i(1)),
            TheoryOp::Le => Value::Bool(i(0) <= i(1)),
            TheoryOp::Gt => Value::Bool(i(0) > i(1)),
            TheoryOp::Ge => Value::Bool(i(0) >= i(1)),
            TheoryOp::Add => self.reduce(i(0) + i(1)),
            TheoryOp::Sub => self.reduce(i(0) - i(1)),
            TheoryOp::Neg => self.reduce(-i(0)),
            TheoryOp::Mul => self.reduce(i(0) * i(1)),
            TheoryOp::Mod => self.reduce(euclid_mod(i(0), i(1))),
            TheoryOp::Div => self.reduce(euclid_div(i(0), i(1))),
        }
    }

    /// The value of a ground theory term.
    pub fn interpret(&self, t: &Term) -> Result<Value, ModelError> {
        match t {
            Term::Val(v) => Ok(v.clone()),
            Term::Var(_) => Err(ModelError::NonGround(t.clone())),
            Term::App(f, args) => {
                let op = f
                    .op()
                    .ok_or_else(|| ModelError::NonTheorySymbol(t.clone()))?;
                let vals = args
                    .iter()
                    .map(|a| self.interpret(a))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(self.apply(op, &vals))
            }
        }
    }

    /// Evaluates a theory term under a valuation of its variables.
    pub fn eval_with(&self, t: &Term, rho: &HashMap<Variable, Value>) -> Result<Value, ModelError> {
        match t {
            Term::Val(v) => Ok(v.clone()),
            Term::Var(x) => rho
                .get(x)
                .cloned()
                .ok_or_else(|| ModelError::NonGround(t.clone())),
            Term::App(f, args) => {
                let op = f
                    .op()
                    .ok_or_else(|| ModelError::NonTheorySymbol(t.clone()))?;
                if matches!(op, TheoryOp::And | TheoryOp::Or | TheoryOp::Implies) {
                    let a = self.eval_with(&args[0], rho)?.as_bool() == Some(true);
                    let short = match op {
                        TheoryOp::And => (!a).then_some(false),
                        TheoryOp::Or => a.then_some(true),
                        _ => (!a).then_some(true),
                    };
                    if let Some(r) = short {
                        return Ok(Value::Bool(r));
                    }
                    return self.eval_with(&args[1], rho);
                }
                let vals = args
                    .iter()
                    .map(|a| self.eval_with(a, rho))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(self.apply(op, &vals))
            }
        }
    }

    pub fn eval_constraint(&self, phi: &Term) -> Result<bool, ModelError> {
        Ok(self.interpret(phi)?.as_bool() == Some(true))
    }

    /// Truth of `phi` under a substitution that maps its variables to values.
    pub fn holds_under(&self, phi: &Term, sigma: &Substitution) -> Result<bool, ModelError> {
        self.eval_constraint(&phi.apply(sigma))
    }

    /// All forward calculation steps available in `t`.
    pub fn calc_step_candidates(&self, t: &Term) -> Vec<(Position, Term)> {
        let mut out = Vec::new();
        for (p, u) in t.subterms() {
            if let Some(v) = self.redex_value(u) {
                let next = t.replace_at(&p, Term::Val(v)).expect("position from term");
                out.push((p, next));
            }
        }
        out
    }

    /// `Some(value)` when `u` is a theory symbol applied to values.
    pub fn redex_value(&self, u: &Term) -> Option<Value> {
        match u {
            Term::App(f, args) => {
                let op = f.op()?;
                let vals: Option<Vec<Value>> = args.iter().map(|a| a.as_value().cloned()).collect();
                Some(self.apply(op, &vals?))
            }
            _ => None,
        }
    }

    /// Replaces every maximal ground theory subterm by its value.
    pub fn calc_normalize(&self, t: &Term) -> Term {
        match t {
            Term::App(f, args) if !args.is_empty() => {
                let mut changed = false;
                let new_args: Vec<Term> = args
                    .iter()
                    .map(|a| {
                        let n = self.calc_normalize(a);
                        changed |= n != *a;
                        n
                    })
                    .collect();
                if let Some(op) = f.op() {
                    if new_args.iter().all(Term::is_value) {
                        let vals: Vec<Value> = new_args
                            .iter()
                            .map(|a| a.as_value().unwrap().clone())
                            .collect();
                        return Term::Val(self.apply(op, &vals));
                    }
                }
                if changed {
                    Term::App(f.clone(), new_args.into())
                } else {
                    t.clone()
                }
            }
            _ => t.clone(),
        }
    }

    /// Leftmost-innermost calculation steps leading to the calc normal form.
    pub fn calc_normalize_steps(&self, t: &Term) -> Vec<(Position, Term)> {
        let mut steps = Vec::new();
        let mut cur = t.clone();
        loop {
            let next = first_innermost_redex(&cur, &mut Vec::new()).and_then(|p| {
                let v = self.redex_value(cur.subterm_at(&p).ok()?)?;
                Some((p, v))
            });
            match next {
                None => return steps,
                Some((p, v)) => {
                    cur = cur.replace_at(&p, Term::Val(v)).expect("redex position");
                    steps.push((p, cur.clone()));
                }
            }
        }
    }

    /// Candidate values of `sort` for search pools and box enumeration.
    pub fn sort_values(&self, sort: &Sort, bound: i64) -> Vec<Value> {
        match self.carrier(sort) {
            Some(Carrier::Finite(vs)) => vs,
            Some(Carrier::Integers) => (-bound..=bound).map(Value::int).collect(),
            None => Vec::new(),
        }
    }

    /// X-valued substitutions satisfying `phi`, in lexicographic order over
    /// the carriers (integers restricted to `[-bound, bound]`).
    pub fn enumerate_satisfying<'a>(
        &'a self,
        xs: &BTreeSet<Variable>,
        phi: &'a Term,
        bound: i64,
    ) -> impl Iterator<Item = Substitution> + 'a {
        let vars: Vec<Variable> = xs.iter().cloned().collect();
        let domains: Vec<Vec<Value>> = vars
            .iter()
            .map(|v| self.sort_values(v.sort(), bound))
            .collect();
        Product::new(domains).filter_map(move |vals| {
            let rho: HashMap<Variable, Value> =
                vars.iter().cloned().zip(vals.iter().cloned()).collect();
            match self.eval_with(phi, &rho) {
                Ok(Value::Bool(true)) => Some(valuation_to_subst(&rho)),
                _ => None,
            }
        })
    }

    /// Whether the enumeration of `enumerate_satisfying` covers every valuation.
    pub fn enumeration_is_exhaustive(&self, xs: &BTreeSet<Variable>) -> bool {
        xs.iter()
            .all(|v| matches!(self.carrier(v.sort()), Some(Carrier::Finite(_))))
    }
}

fn first_innermost_redex(t: &Term, path: &mut Vec<usize>) -> Option<Position> {
    if let Term::App(f, args) = t {
        for (i, a) in args.iter().enumerate() {
            path.push(i + 1);
            let found = first_innermost_redex(a, path);
            path.pop();
            if found.is_some() {
                return found;
            }
        }
        if f.is_theory() && args.iter().all(Term::is_value) {
            return Some(Position(path.clone()));
        }
    }
    None
}

/// Euclidean remainder; `mod(x, 0) = x`.
pub fn euclid_mod(a: &BigInt, b: &BigInt) -> BigInt {
    if b.is_zero() {
        return a.clone();
    }
    a.mod_floor(&b.abs())
}

/// Euclidean quotient; `div(x, 0) = 0`.
pub fn euclid_div(a: &BigInt, b: &BigInt) -> BigInt {
    if b.is_zero() {
        return BigInt::zero();
    }
    (a - euclid_mod(a, b)) / b
}

pub fn valuation_to_subst(rho: &HashMap<Variable, Value>) -> Substitution {
    Substitution::from_pairs(rho.iter().map(|(v, c)| (v.clone(), Term::Val(c.clone()))))
        .expect("valuation respects sorts")
}

/// Odometer over a product of finite domains, last coordinate fastest.
pub struct Product<T> {
    domains: Vec<Vec<T>>,
    idx: Vec<usize>,
    done: bool,
}

impl<T: Clone> Product<T> {
    pub fn new(domains: Vec<Vec<T>>) -> Self {
        let done = domains.iter().any(|d| d.is_empty());
        let idx = vec![0; domains.len()];
        Product { domains, idx, done }
    }
}

impl<T: Clone> Iterator for Product<T> {
    type Item = Vec<T>;

    fn next(&mut self) -> Option<Vec<T>> {
        if self.done {
            return None;
        }
        let item = self
            .idx
            .iter()
            .zip(&self.domains)
            .map(|(&i, d)| d[i].clone())
            .collect();
        let mut k = self.idx.len();
        loop {
            if k == 0 {
                self.done = true;
                break;
            }
            k -= 1;
            self.idx[k] += 1;
            if self.idx[k] < self.domains[k].len() {
                break;
            }
            self.idx[k] = 0;
        }
        Some(item)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    Invalid(Substitution),
    Unknown(String),
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Valid => f.write_str("valid"),
            Verdict::Invalid(s) => write!(f, "invalid, witness {s}"),
            Verdict::Unknown(r) => write!(f, "unknown ({r})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleBudget {
    /// Integer box `[-box_bound, box_bound]` for bounded refutation.
    pub box_bound: i64,
    /// Upper limit on constraint evaluations per query.
    pub max_evaluations: u64,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget {
            box_bound: 64,
            max_evaluations: 2_000_000,
        }
    }
}

/// Validity oracle over one underlying model.
#[derive(Debug, Clone)]
pub struct Oracle {
    model: UnderlyingModel,
    budget: OracleBudget,
    solver: Option<Arc<Mutex<SolverSession>>>,
}

impl Oracle {
    pub fn new(model: UnderlyingModel) -> Self {
        Oracle {
            model,
            budget: OracleBudget::default(),
            solver: None,
        }
    }

    pub fn with_budget(mut self, budget: OracleBudget) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_solver(mut self, session: SolverSession) -> Self {
        self.solver = Some(Arc::new(Mutex::new(session)));
        self
    }

    pub fn model(&self) -> &UnderlyingModel {
        &self.model
    }

    pub fn budget(&self) -> OracleBudget {
        self.budget
    }

    /// Decides `⊨ phi` as far as the configured backends allow.
    pub fn check_validity(&self, phi: &Term) -> Result<Verdict, OracleError> {
        if phi.sort() != Sort::bool() || !phi.is_theory_term() {
            return Err(OracleError::NotAConstraint(phi.clone()));
        }
        let vars: Vec<Variable> = phi.vars().into_iter().collect();
        let verdict = if vars.is_empty() {
            match self.model.eval_constraint(phi) {
                Ok(true) => Verdict::Valid,
                Ok(false) => Verdict::Invalid(Substitution::new()),
                Err(_) => return Err(OracleError::NotAConstraint(phi.clone())),
            }
        } else if self.model.is_finite() {
            self.exhaustive(phi, &vars)
        } else {
            self.integer_backends(phi, &vars)?
        };
        if let Verdict::Invalid(w) = &verdict {
            debug_assert_eq!(self.model.holds_under(phi, w), Ok(false));
        }
        Ok(verdict)
    }

    fn exhaustive(&self, phi: &Term, vars: &[Variable]) -> Verdict {
        let domains: Vec<Vec<Value>> = vars
            .iter()
            .map(|v| self.model.sort_values(v.sort(), 0))
            .collect();
        for vals in Product::new(domains) {
            let rho: HashMap<Variable, Value> = vars.iter().cloned().zip(vals).collect();
            if self.model.eval_with(phi, &rho) != Ok(Value::Bool(true)) {
                return Verdict::Invalid(valuation_to_subst(&rho));
            }
        }
        Verdict::Valid
    }

    fn integer_backends(&self, phi: &Term, vars: &[Variable]) -> Result<Verdict, OracleError> {
        let decision = lia::decide(&self.model, phi);
        if decision == lia::Decision::Valid {
            return Ok(Verdict::Valid);
        }
        if let Some(w) = self.bounded_refutation(phi, vars) {
            return Ok(Verdict::Invalid(w));
        }
        if let lia::Decision::Invalid(w) = decision {
            return Ok(Verdict::Invalid(w));
        }
        if let Some(session) = &self.solver {
            let mut session = session
                .lock()
                .map_err(|_| OracleError::SolverFailure("solver session poisoned".into()))?;
            let v = session.check_validity(phi)?;
            if let Verdict::Invalid(w) = &v {
                if self.model.holds_under(phi, w) != Ok(false) {
                    return Err(OracleError::SolverFailure(format!(
                        "solver model {w} does not refute the constraint"
                    )));
                }
            }
            return Ok(v);
        }
        Ok(Verdict::Unknown(format!(
            "no counterexample in [-{b}, {b}] and the constraint is outside the decided fragment",
            b = self.budget.box_bound
        )))
    }

    /// Searches `[-B, B]` in shells of increasing magnitude.
    fn bounded_refutation(&self, phi: &Term, vars: &[Variable]) -> Option<Substitution> {
        let b = self.budget.box_bound;
        let ranked = |s: &Sort| -> Vec<Value> {
            if *s == Sort::bool() {
                vec![Value::Bool(false), Value::Bool(true)]
            } else {
                let mut out = vec![Value::int(0)];
                for k in 1..=b {
                    out.push(Value::int(-k));
                    out.push(Value::int(k));
                }
                out
            }
        };
        let domains: Vec<Vec<Value>> = vars.iter().map(|v| ranked(v.sort())).collect();
        let max_rank = domains.iter().map(Vec::len).max().unwrap_or(1);
        let mut evals = 0u64;
        for r in 0..max_rank {
            let slice: Vec<Vec<usize>> = domains
                .iter()
                .map(|d| (0..d.len().min(r + 1)).collect())
                .collect();
            for idx in Product::new(slice) {
                if idx.iter().all(|&i| i < r) {
                    continue;
                }
                evals += 1;
                if evals > self.budget.max_evaluations {
                    return None;
                }
                let rho: HashMap<Variable, Value> = vars
                    .iter()
                    .cloned()
                    .zip(idx.iter().zip(&domains).map(|(&i, d)| d[i].clone()))
                    .collect();
                if self.model.eval_with(phi, &rho) == Ok(Value::Bool(false)) {
                    return Some(valuation_to_subst(&rho));
                }
            }
        }
        None
    }

    /// Satisfiability of `phi` as a verdict on its negation: `Some(witness)`
    /// when a satisfying valuation is known, `None` when unsatisfiable.
    pub fn find_model(
        &self,
        phi: &Term,
    ) -> Result<Result<Option<Substitution>, String>, OracleError> {
        match self.check_validity(&self.model.not(phi.clone()))? {
            Verdict::Valid => Ok(Ok(None)),
            Verdict::Invalid(w) => Ok(Ok(Some(w))),
            Verdict::Unknown(r) => Ok(Err(r)),
        }
    }
}

/// Converts a carrier integer to a machine integer when small.
pub fn small_int(v: &Value) -> Option<i64> {
    v.as_int().and_then(|i| i.to_i64())
}
