// SPDX-License-Identifier: Apache-2.0

//! Constrained equations, rewriting with them, bounded conversion search and
//! validity checking.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::models::{Carrier, Oracle, OracleError, UnderlyingModel, Verdict};
use crate::terms::{
    decompose_differences, Position, Signature, Sort, Substitution, Term, TheoryOp, Value, Variable,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CeError {
    #[error("sides have different sorts: {0} and {1}")]
    SortMismatch(Sort, Sort),
    #[error("constraint {0} is not a Bool-sorted theory term")]
    BadConstraint(Term),
    #[error("constraint variable {0} is not among the logical variables")]
    ConstraintVarNotInX(Variable),
    #[error("logical variable {0} is not of a theory sort")]
    NonTheoryLogicalVar(Variable),
    #[error("symbol {0} is not declared in the signature")]
    UnknownSymbol(String),
}

/// `⟨X⟩ lhs ≈ rhs [constraint]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConstrainedEquation {
    pub logical_vars: BTreeSet<Variable>,
    pub lhs: Term,
    pub rhs: Term,
    pub constraint: Term,
}

impl ConstrainedEquation {
    pub fn new(
        logical_vars: BTreeSet<Variable>,
        lhs: Term,
        rhs: Term,
        constraint: Term,
    ) -> Result<Self, CeError> {
        let ce = ConstrainedEquation {
            logical_vars,
            lhs,
            rhs,
            constraint,
        };
        ce.validate()?;
        Ok(ce)
    }

    /// Unconstrained equation without logical variables.
    pub fn plain(lhs: Term, rhs: Term) -> Result<Self, CeError> {
        Self::new(BTreeSet::new(), lhs, rhs, Term::bool(true))
    }

    pub fn validate(&self) -> Result<(), CeError> {
        let (a, b) = (self.lhs.sort(), self.rhs.sort());
        if a != b {
            return Err(CeError::SortMismatch(a, b));
        }
        if self.constraint.sort() != Sort::bool() || !self.constraint.is_theory_term() {
            return Err(CeError::BadConstraint(self.constraint.clone()));
        }
        if let Some(v) = self.logical_vars.iter().find(|v| !v.is_theory()) {
            return Err(CeError::NonTheoryLogicalVar(v.clone()));
        }
        if let Some(v) = self
            .constraint
            .vars()
            .into_iter()
            .find(|v| !self.logical_vars.contains(v))
        {
            return Err(CeError::ConstraintVarNotInX(v));
        }
        Ok(())
    }

    pub fn vars(&self) -> BTreeSet<Variable> {
        let mut vs = self.lhs.vars();
        self.rhs.vars_into(&mut vs);
        self.constraint.vars_into(&mut vs);
        vs
    }

    pub fn side_vars(&self) -> BTreeSet<Variable> {
        let mut vs = self.lhs.vars();
        self.rhs.vars_into(&mut vs);
        vs
    }

    pub fn swapped(&self) -> Self {
        ConstrainedEquation {
            logical_vars: self.logical_vars.clone(),
            lhs: self.rhs.clone(),
            rhs: self.lhs.clone(),
            constraint: self.constraint.clone(),
        }
    }

    pub fn is_unconstrained_ground_goal(&self) -> bool {
        self.logical_vars.is_empty() && self.constraint == Term::bool(true)
    }
}

impl fmt::Display for ConstrainedEquation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<")?;
        for (i, v) in self.logical_vars.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "> {} = {} [{}]", self.lhs, self.rhs, self.constraint)
    }
}

/// An underlying model, a signature containing its theory part, and a list of
/// constrained equations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CETheory {
    pub signature: Signature,
    pub model: UnderlyingModel,
    pub equations: Vec<ConstrainedEquation>,
}

impl CETheory {
    pub fn new(
        model: UnderlyingModel,
        signature: Signature,
        equations: Vec<ConstrainedEquation>,
    ) -> Result<Self, CeError> {
        for eq in &equations {
            eq.validate()?;
            for t in [&eq.lhs, &eq.rhs] {
                for (_, u) in t.subterms() {
                    if let Term::App(f, _) = u {
                        if !signature.symbols_named(f.name()).iter().any(|g| **g == **f) {
                            return Err(CeError::UnknownSymbol(f.name().to_string()));
                        }
                    }
                }
            }
        }
        Ok(CETheory {
            signature,
            model,
            equations,
        })
    }

    pub fn oracle(&self) -> Oracle {
        Oracle::new(self.model.clone())
    }

    /// Value literals occurring in the equations.
    pub fn literals(&self) -> BTreeSet<Value> {
        let mut out = BTreeSet::new();
        for eq in &self.equations {
            for t in [&eq.lhs, &eq.rhs, &eq.constraint] {
                collect_literals(t, &mut out);
            }
        }
        out
    }
}

pub fn collect_literals(t: &Term, out: &mut BTreeSet<Value>) {
    for (_, u) in t.subterms() {
        if let Term::Val(v) = u {
            out.insert(v.clone());
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    LeftToRight,
    RightToLeft,
}

impl Direction {
    pub fn flip(self) -> Self {
        match self {
            Direction::LeftToRight => Direction::RightToLeft,
            Direction::RightToLeft => Direction::LeftToRight,
        }
    }

    /// `(pattern, replacement)` sides of `eq` for this direction.
    pub fn sides(self, eq: &ConstrainedEquation) -> (&Term, &Term) {
        match self {
            Direction::LeftToRight => (&eq.lhs, &eq.rhs),
            Direction::RightToLeft => (&eq.rhs, &eq.lhs),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::LeftToRight => "->",
            Direction::RightToLeft => "<-",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StepKind {
    Calc,
    Rule(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub position: Position,
    pub kind: StepKind,
    pub direction: Direction,
    pub witness: Substitution,
    pub result: Term,
}

impl fmt::Display for TraceStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            StepKind::Calc => write!(f, "calc {} @{}", self.direction, self.position)?,
            StepKind::Rule(i) => write!(
                f,
                "rule {} {} @{} {}",
                i + 1,
                self.direction,
                self.position,
                self.witness
            )?,
        }
        write!(f, " => {}", self.result)
    }
}

/// Evidence for `s ⇄* t`: replaying the steps from `s` yields `t`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConversionTrace {
    pub steps: Vec<TraceStep>,
}

impl ConversionTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn rule_steps(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| matches!(s.kind, StepKind::Rule(_)))
            .count()
    }

    pub fn end<'a>(&'a self, start: &'a Term) -> &'a Term {
        self.steps.last().map(|s| &s.result).unwrap_or(start)
    }

    /// The same conversion read backwards, starting at `self.end(start)`.
    pub fn reversed(&self, start: &Term) -> ConversionTrace {
        let mut steps = Vec::with_capacity(self.steps.len());
        for (i, s) in self.steps.iter().enumerate().rev() {
            let before = if i == 0 {
                start.clone()
            } else {
                self.steps[i - 1].result.clone()
            };
            steps.push(TraceStep {
                position: s.position.clone(),
                kind: s.kind,
                direction: s.direction.flip(),
                witness: s.witness.clone(),
                result: before,
            });
        }
        ConversionTrace { steps }
    }

    pub fn append(&mut self, other: ConversionTrace) {
        self.steps.extend(other.steps);
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("illegal step {index}: {reason}")]
pub struct ReplayError {
    pub index: usize,
    pub reason: String,
}

/// One `⇄rule` successor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleStep {
    pub position: Position,
    pub equation: usize,
    pub direction: Direction,
    pub witness: Substitution,
    pub result: Term,
}

/// Finite candidate pools for instantiating variables a match leaves unbound.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Pools {
    pub values: BTreeMap<Sort, Vec<Value>>,
    pub terms: Vec<Term>,
}

impl Pools {
    /// Integers in `[-radius, radius]` plus every literal of the theory and
    /// `goals`; finite carriers in full; term candidates are the subterms of
    /// `goals` followed by `seeds`.
    pub fn new(theory: &CETheory, radius: i64, goals: &[&Term], seeds: &[Term]) -> Self {
        let mut lits = theory.literals();
        for g in goals {
            collect_literals(g, &mut lits);
        }
        let mut values = BTreeMap::new();
        for sort in [Sort::bool(), Sort::int()] {
            let Some(carrier) = theory.model.carrier(&sort) else {
                continue;
            };
            let vs: Vec<Value> = match carrier {
                Carrier::Finite(vs) => vs,
                Carrier::Integers => {
                    let mut set: BTreeSet<Value> = (-radius..=radius).map(Value::int).collect();
                    set.extend(lits.iter().filter(|v| v.sort() == sort).cloned());
                    set.into_iter().collect()
                }
            };
            values.insert(sort, vs);
        }
        let mut terms: Vec<Term> = Vec::new();
        let mut seen = BTreeSet::new();
        for g in goals {
            for (_, u) in g.subterms() {
                if seen.insert(u.clone()) {
                    terms.push(u.clone());
                }
            }
        }
        for s in seeds {
            if seen.insert(s.clone()) {
                terms.push(s.clone());
            }
        }
        Pools { values, terms }
    }

    pub fn values_of(&self, sort: &Sort) -> &[Value] {
        self.values.get(sort).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn add_values(&mut self, extra: impl IntoIterator<Item = Value>) {
        for v in extra {
            let list = self.values.entry(v.sort()).or_default();
            if !list.contains(&v) {
                list.push(v);
                list.sort();
            }
        }
    }

    fn term_candidates(&self, sort: &Sort) -> Vec<Term> {
        let mut out: Vec<Term> = self
            .terms
            .iter()
            .filter(|t| t.sort() == *sort)
            .cloned()
            .collect();
        if out.is_empty() && sort.is_theory() {
            out = self
                .values_of(sort)
                .iter()
                .cloned()
                .map(Term::Val)
                .collect();
        }
        out
    }
}

#[derive(Default)]
struct MatchState {
    binding: BTreeMap<Variable, Term>,
    deferred: Vec<(Term, Value)>,
}

/// Matching modulo calculation: a theory-rooted pattern facing a value is
/// postponed as an arithmetic side condition.
fn match_mod(p: &Term, s: &Term, xs: &BTreeSet<Variable>, st: &mut MatchState) -> bool {
    match p {
        Term::Var(v) => {
            if *v.sort() != s.sort() || (xs.contains(v) && !s.is_value()) {
                return false;
            }
            match st.binding.get(v) {
                Some(b) => b == s,
                None => {
                    st.binding.insert(v.clone(), s.clone());
                    true
                }
            }
        }
        Term::Val(a) => s.as_value() == Some(a),
        Term::App(f, ps) => match s {
            Term::App(g, ss) if f == g => ps
                .iter()
                .zip(ss.iter())
                .all(|(p, s)| match_mod(p, s, xs, st)),
            Term::Val(v) if f.is_theory() && p.vars().is_subset(xs) => {
                st.deferred.push((p.clone(), v.clone()));
                true
            }
            _ => false,
        },
    }
}

fn top_equalities(phi: &Term, out: &mut Vec<(Term, Term)>) {
    if let Term::App(f, args) = phi {
        match f.op() {
            Some(TheoryOp::And) => {
                top_equalities(&args[0], out);
                top_equalities(&args[1], out);
            }
            Some(TheoryOp::Eq) if args[0].sort() == Sort::int() => {
                out.push((args[0].clone(), args[1].clone()));
            }
            _ => {}
        }
    }
}

/// Solves `lhs = rhs` for `v` when the difference is affine in `v` with a unit
/// slope and `v` is its only variable.
fn solve_unit(
    model: &UnderlyingModel,
    lhs: &Term,
    rhs: &Term,
    v: &Variable,
    binding: &BTreeMap<Variable, Term>,
) -> Option<Value> {
    let mut vars = lhs.vars();
    rhs.vars_into(&mut vars);
    vars.retain(|u| !binding.contains_key(u));
    if vars.len() != 1 || !vars.contains(v) {
        return None;
    }
    let diff_at = |k: &BigInt| -> Option<BigInt> {
        let mut rho: HashMap<Variable, Value> = HashMap::new();
        for (u, t) in binding {
            rho.insert(u.clone(), t.as_value()?.clone());
        }
        rho.insert(v.clone(), Value::Int(k.clone()));
        let a = model.eval_with(lhs, &rho).ok()?;
        let b = model.eval_with(rhs, &rho).ok()?;
        Some(a.as_int()? - b.as_int()?)
    };
    let d0 = diff_at(&BigInt::from(0))?;
    let slope = diff_at(&BigInt::from(1))? - &d0;
    if !slope.abs().is_one() {
        return None;
    }
    for k in [-1i64, 2, 7, -13] {
        if diff_at(&BigInt::from(k))? != &d0 + &slope * BigInt::from(k) {
            return None;
        }
    }
    Some(Value::Int(-d0 * slope))
}

fn ground_holds(
    model: &UnderlyingModel,
    t: &Term,
    binding: &BTreeMap<Variable, Term>,
) -> Option<bool> {
    let mut rho = HashMap::new();
    for v in t.vars() {
        let val = binding.get(&v)?.as_value()?.clone();
        rho.insert(v, val);
    }
    model
        .eval_with(t, &rho)
        .ok()
        .map(|v| v == Value::Bool(true))
}

fn ground_equals(
    model: &UnderlyingModel,
    t: &Term,
    target: &Value,
    binding: &BTreeMap<Variable, Term>,
) -> Option<bool> {
    let mut rho = HashMap::new();
    for v in t.vars() {
        let val = binding.get(&v)?.as_value()?.clone();
        rho.insert(v, val);
    }
    model.eval_with(t, &rho).ok().map(|v| v == *target)
}

/// Extends a match to complete substitutions satisfying the constraint.
fn complete_match(
    theory: &CETheory,
    eq: &ConstrainedEquation,
    st: MatchState,
    pools: &Pools,
) -> Vec<Substitution> {
    let all_vars = eq.vars();
    let unknown_x: Vec<Variable> = eq
        .logical_vars
        .iter()
        .filter(|v| !st.binding.contains_key(*v))
        .cloned()
        .collect();
    let others: Vec<Variable> = all_vars
        .iter()
        .filter(|v| !eq.logical_vars.contains(*v) && !st.binding.contains_key(*v))
        .cloned()
        .collect();
    let mut equalities: Vec<(Term, Term)> = st
        .deferred
        .iter()
        .map(|(p, v)| (p.clone(), Term::Val(v.clone())))
        .collect();
    top_equalities(&eq.constraint, &mut equalities);
    let other_cands: Vec<Vec<Term>> = others
        .iter()
        .map(|v| pools.term_candidates(v.sort()))
        .collect();

    struct Ctx<'a> {
        theory: &'a CETheory,
        eq: &'a ConstrainedEquation,
        all_vars: &'a BTreeSet<Variable>,
        unknown_x: &'a [Variable],
        others: &'a [Variable],
        other_cands: &'a [Vec<Term>],
        equalities: &'a [(Term, Term)],
        deferred: &'a [(Term, Value)],
        pools: &'a Pools,
        out: Vec<Substitution>,
    }

    fn consistent(cx: &Ctx, binding: &BTreeMap<Variable, Term>) -> bool {
        let m = &cx.theory.model;
        cx.deferred
            .iter()
            .all(|(p, v)| ground_equals(m, p, v, binding) != Some(false))
            && cx.equalities.iter().all(|(a, b)| {
                let e = m.eq(a.clone(), b.clone());
                ground_holds(m, &e, binding) != Some(false)
            })
    }

    fn assign(cx: &mut Ctx, k: usize, binding: &mut BTreeMap<Variable, Term>) {
        if k == cx.unknown_x.len() {
            if ground_holds(&cx.theory.model, &cx.eq.constraint, binding) != Some(true) {
                return;
            }
            if !cx
                .deferred
                .iter()
                .all(|(p, v)| ground_equals(&cx.theory.model, p, v, binding) == Some(true))
            {
                return;
            }
            assign_others(cx, 0, binding);
            return;
        }
        let v = cx.unknown_x[k].clone();
        let occurs = cx.all_vars.contains(&v);
        let pool = cx.pools.values_of(v.sort());
        let cands: Vec<Value> = if !occurs {
            pool.first().cloned().into_iter().collect()
        } else if cx.theory.model.is_finite() || *v.sort() != Sort::int() {
            pool.to_vec()
        } else {
            match cx
                .equalities
                .iter()
                .find_map(|(a, b)| solve_unit(&cx.theory.model, a, b, &v, binding))
            {
                Some(sol) => vec![sol],
                None => pool.to_vec(),
            }
        };
        for c in cands {
            binding.insert(v.clone(), Term::Val(c));
            if consistent(cx, binding) {
                assign(cx, k + 1, binding);
            }
            binding.remove(&v);
        }
    }

    fn assign_others(cx: &mut Ctx, k: usize, binding: &mut BTreeMap<Variable, Term>) {
        if k == cx.others.len() {
            let mut s = Substitution::new();
            for (v, t) in binding.iter() {
                s.insert(v.clone(), t.clone())
                    .expect("sort-checked binding");
            }
            cx.out.push(s);
            return;
        }
        let v = cx.others[k].clone();
        for c in cx.other_cands[k].clone() {
            binding.insert(v.clone(), c);
            assign_others(cx, k + 1, binding);
            binding.remove(&v);
        }
    }

    let mut cx = Ctx {
        theory,
        eq,
        all_vars: &all_vars,
        unknown_x: &unknown_x,
        others: &others,
        other_cands: &other_cands,
        equalities: &equalities,
        deferred: &st.deferred,
        pools,
        out: Vec::new(),
    };
    let mut binding = st.binding.clone();
    if consistent(&cx, &binding) {
        assign(&mut cx, 0, &mut binding);
    }
    cx.out
}

/// Successors of `t` under one rule step at `pos` with equation `i`.
pub fn rule_steps_at(
    t: &Term,
    pos: &Position,
    theory: &CETheory,
    i: usize,
    dir: Direction,
    pools: &Pools,
) -> Vec<RuleStep> {
    let eq = &theory.equations[i];
    let (pat, rep) = dir.sides(eq);
    let Ok(u) = t.subterm_at(pos) else {
        return Vec::new();
    };
    if pat.sort() != u.sort() {
        return Vec::new();
    }
    let mut st = MatchState::default();
    if !match_mod(pat, u, &eq.logical_vars, &mut st) {
        return Vec::new();
    }
    complete_match(theory, eq, st, pools)
        .into_iter()
        .filter_map(|sigma| {
            let result = t.replace_at(pos, rep.apply(&sigma)).ok()?;
            Some(RuleStep {
                position: pos.clone(),
                equation: i,
                direction: dir,
                witness: sigma,
                result,
            })
        })
        .collect()
}

/// All one-step `⇄rule` successors of `t`, in pre-order of positions, then
/// equation order, left-to-right before right-to-left.
pub fn rule_step_candidates(t: &Term, theory: &CETheory, pools: &Pools) -> Vec<RuleStep> {
    step_candidates(t, theory, pools, true)
}

/// Left-to-right rule steps only.
pub fn oriented_step_candidates(t: &Term, theory: &CETheory, pools: &Pools) -> Vec<RuleStep> {
    step_candidates(t, theory, pools, false)
}

fn step_candidates(t: &Term, theory: &CETheory, pools: &Pools, both: bool) -> Vec<RuleStep> {
    let mut out = Vec::new();
    for (pos, _) in t.subterms() {
        for i in 0..theory.equations.len() {
            out.extend(rule_steps_at(
                t,
                &pos,
                theory,
                i,
                Direction::LeftToRight,
                pools,
            ));
            if both {
                out.extend(rule_steps_at(
                    t,
                    &pos,
                    theory,
                    i,
                    Direction::RightToLeft,
                    pools,
                ));
            }
        }
    }
    out
}

/// Re-validates each step of `trace` starting from `s` and returns the end term.
pub fn replay_trace(
    s: &Term,
    trace: &ConversionTrace,
    theory: &CETheory,
) -> Result<Term, ReplayError> {
    let mut cur = s.clone();
    for (index, step) in trace.steps.iter().enumerate() {
        let fail = |reason: String| ReplayError { index, reason };
        match step.kind {
            StepKind::Calc => {
                let (from, to) = match step.direction {
                    Direction::LeftToRight => (&cur, &step.result),
                    Direction::RightToLeft => (&step.result, &cur),
                };
                let redex = from
                    .subterm_at(&step.position)
                    .map_err(|e| fail(e.to_string()))?;
                let v = theory
                    .model
                    .redex_value(redex)
                    .ok_or_else(|| fail(format!("{redex} is not a calculation redex")))?;
                let expected = from
                    .replace_at(&step.position, Term::Val(v))
                    .map_err(|e| fail(e.to_string()))?;
                if expected != *to {
                    return Err(fail(format!("calculation does not produce {to}")));
                }
            }
            StepKind::Rule(i) => {
                let eq = theory
                    .equations
                    .get(i)
                    .ok_or_else(|| fail(format!("no equation {}", i + 1)))?;
                let sigma = &step.witness;
                for x in &eq.logical_vars {
                    if !sigma.image(x).is_value() {
                        return Err(fail(format!("witness is not valued on {x}")));
                    }
                }
                let phi = eq.constraint.apply(sigma);
                if theory.model.eval_constraint(&phi) != Ok(true) {
                    return Err(fail(format!("constraint {phi} does not hold")));
                }
                let (pat, rep) = step.direction.sides(eq);
                let u = cur
                    .subterm_at(&step.position)
                    .map_err(|e| fail(e.to_string()))?;
                if *u != pat.apply(sigma) {
                    return Err(fail(format!("{u} is not an instance of {pat}")));
                }
                let expected = cur
                    .replace_at(&step.position, rep.apply(sigma))
                    .map_err(|e| fail(e.to_string()))?;
                if expected != step.result {
                    return Err(fail(format!("rule step does not produce {}", step.result)));
                }
            }
        }
        cur = step.result.clone();
    }
    Ok(cur)
}

/// Bounds for conversion search.
#[derive(Debug, Clone)]
pub struct SearchLimits {
    /// Maximum number of rule steps; calculation steps are free.
    pub bound: usize,
    pub max_nodes: usize,
    /// Terms larger than the larger endpoint by more than this are pruned.
    pub size_slack: usize,
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits {
            bound: 8,
            max_nodes: 200_000,
            size_slack: 8,
        }
    }
}

fn forward_calc(model: &UnderlyingModel, t: &Term) -> Vec<TraceStep> {
    model
        .calc_normalize_steps(t)
        .into_iter()
        .map(|(p, r)| TraceStep {
            position: p,
            kind: StepKind::Calc,
            direction: Direction::LeftToRight,
            witness: Substitution::new(),
            result: r,
        })
        .collect()
}

/// Calculation steps from the normal form of `t` back to `t`.
fn backward_calc(model: &UnderlyingModel, t: &Term) -> Vec<TraceStep> {
    ConversionTrace {
        steps: forward_calc(model, t),
    }
    .reversed(t)
    .steps
}

/// Trace steps for a rule step taken at a calc-normal term, including the
/// reverse calculations that expose the literal redex and the normalization
/// afterwards.
fn expand_rule_step(theory: &CETheory, from: &Term, step: &RuleStep) -> Vec<TraceStep> {
    let model = &theory.model;
    let eq = &theory.equations[step.equation];
    let (pat, _) = step.direction.sides(eq);
    let literal = from
        .replace_at(&step.position, pat.apply(&step.witness))
        .expect("matched position");
    let mut out = Vec::new();
    if literal != *from {
        out.extend(backward_calc(model, &literal));
    }
    out.push(TraceStep {
        position: step.position.clone(),
        kind: StepKind::Rule(step.equation),
        direction: step.direction,
        witness: step.witness.clone(),
        result: step.result.clone(),
    });
    out.extend(forward_calc(model, &step.result));
    out
}

/// Search node: normal form, parent and step, depth.
pub(crate) type Node<S> = (Term, Option<(usize, S)>, usize);
/// Forward and backward halves of a meeting path.
type Halves = (Vec<(Term, RuleStep)>, Vec<(Term, RuleStep)>);

struct Side {
    nodes: Vec<Node<RuleStep>>,
    index: HashMap<Term, usize>,
    frontier: Vec<usize>,
    depth: usize,
}

impl Side {
    fn new(root: Term) -> Self {
        let mut index = HashMap::new();
        index.insert(root.clone(), 0);
        Side {
            nodes: vec![(root, None, 0)],
            index,
            frontier: vec![0],
            depth: 0,
        }
    }

    /// Steps from the root to node `i`.
    fn path(&self, mut i: usize) -> Vec<(Term, RuleStep)> {
        let mut out = Vec::new();
        while let Some((p, step)) = &self.nodes[i].1 {
            out.push((self.nodes[*p].0.clone(), step.clone()));
            i = *p;
        }
        out.reverse();
        out
    }
}

/// Bidirectional breadth-first search over calc-normal forms. Returns the
/// forward path from `s` and the path from `t` to the meeting term.
fn bidirectional(
    theory: &CETheory,
    s: &Term,
    t: &Term,
    pools: &Pools,
    limits: &SearchLimits,
    both: bool,
) -> Option<Halves> {
    let model = &theory.model;
    let cap = s.size().max(t.size()) + limits.size_slack;
    let mut sides = [Side::new(s.clone()), Side::new(t.clone())];
    if s == t {
        return Some((Vec::new(), Vec::new()));
    }
    let mut total = 2usize;
    while sides[0].depth + sides[1].depth < limits.bound {
        let k = if sides[0].frontier.len() <= sides[1].frontier.len() {
            0
        } else {
            1
        };
        let other = 1 - k;
        let mut next = Vec::new();
        let mut meetings: Vec<(usize, usize, usize)> = Vec::new();
        let frontier = std::mem::take(&mut sides[k].frontier);
        for &n in &frontier {
            let term = sides[k].nodes[n].0.clone();
            for step in step_candidates(&term, theory, pools, both) {
                let norm = model.calc_normalize(&step.result);
                if norm.size() > cap || sides[k].index.contains_key(&norm) {
                    continue;
                }
                let id = sides[k].nodes.len();
                let d = sides[k].depth + 1;
                sides[k].nodes.push((norm.clone(), Some((n, step)), d));
                sides[k].index.insert(norm.clone(), id);
                if let Some(&j) = sides[other].index.get(&norm) {
                    meetings.push((d + sides[other].nodes[j].2, id, j));
                }
                next.push(id);
                total += 1;
                if total > limits.max_nodes {
                    break;
                }
            }
            if total > limits.max_nodes {
                break;
            }
        }
        sides[k].depth += 1;
        sides[k].frontier = next;
        if let Some(&(_, a, b)) = meetings.iter().min_by(|x, y| {
            let tx = &sides[k].nodes[x.1].0;
            let ty = &sides[k].nodes[y.1].0;
            x.0.cmp(&y.0)
                .then(tx.size().cmp(&ty.size()))
                .then(tx.cmp(ty))
        }) {
            let (fa, fb) = if k == 0 { (a, b) } else { (b, a) };
            return Some((sides[0].path(fa), sides[1].path(fb)));
        }
        if sides[k].frontier.is_empty() || total > limits.max_nodes {
            return None;
        }
    }
    None
}

fn assemble(
    theory: &CETheory,
    s: &Term,
    t: &Term,
    fwd: Vec<(Term, RuleStep)>,
    bwd: Vec<(Term, RuleStep)>,
) -> ConversionTrace {
    let model = &theory.model;
    let mut steps = forward_calc(model, s);
    for (from, step) in &fwd {
        steps.extend(expand_rule_step(theory, from, step));
    }
    let mut back = forward_calc(model, t);
    for (from, step) in &bwd {
        back.extend(expand_rule_step(theory, from, step));
    }
    let back = ConversionTrace { steps: back }.reversed(t);
    steps.extend(back.steps);
    ConversionTrace { steps }
}

/// Searches a conversion between `s` and `t` with at most `limits.bound` rule
/// steps. Joinability by left-to-right steps is tried before the full search.
pub fn conversion_search_with(
    theory: &CETheory,
    s: &Term,
    t: &Term,
    pools: &Pools,
    limits: &SearchLimits,
) -> Option<ConversionTrace> {
    if s.sort() != t.sort() {
        return None;
    }
    let model = &theory.model;
    let sn = model.calc_normalize(s);
    let tn = model.calc_normalize(t);
    let found = bidirectional(theory, &sn, &tn, pools, limits, false)
        .or_else(|| bidirectional(theory, &sn, &tn, pools, limits, true))?;
    let trace = assemble(theory, s, t, found.0, found.1);
    debug_assert_eq!(replay_trace(s, &trace, theory).as_ref(), Ok(t));
    Some(trace)
}

/// `conversion_search_with` using the default pools for `s` and `t`.
pub fn conversion_search(
    theory: &CETheory,
    s: &Term,
    t: &Term,
    opts: &SearchOptions,
) -> Option<ConversionTrace> {
    let pools = Pools::new(theory, opts.pool_radius, &[s, t], &opts.seeds);
    conversion_search_with(theory, s, t, &pools, &opts.limits())
}

/// Breadth-first exploration from `start`, returning the first reached term
/// accepted by `stop` (other than `start` unless `include_start`) with its
/// trace, or the set of visited normal forms when `stop` never fires.
pub fn explore(
    theory: &CETheory,
    start: &Term,
    pools: &Pools,
    depth: usize,
    max_nodes: usize,
    stop: &mut dyn FnMut(&Term) -> bool,
) -> Result<(Term, ConversionTrace), Vec<(Term, ConversionTrace)>> {
    let model = &theory.model;
    let root = model.calc_normalize(start);
    let mut side = Side::new(root.clone());
    let trace_to = |side: &Side, i: usize| {
        let mut steps = forward_calc(model, start);
        for (from, step) in side.path(i) {
            steps.extend(expand_rule_step(theory, &from, &step));
        }
        ConversionTrace { steps }
    };
    if stop(&root) {
        return Ok((root, trace_to(&side, 0)));
    }
    while side.depth < depth && !side.frontier.is_empty() && side.nodes.len() < max_nodes {
        let frontier = std::mem::take(&mut side.frontier);
        let mut next = Vec::new();
        for &n in &frontier {
            let term = side.nodes[n].0.clone();
            for step in rule_step_candidates(&term, theory, pools) {
                let norm = model.calc_normalize(&step.result);
                if side.index.contains_key(&norm) {
                    continue;
                }
                let id = side.nodes.len();
                side.nodes
                    .push((norm.clone(), Some((n, step)), side.depth + 1));
                side.index.insert(norm.clone(), id);
                if stop(&norm) {
                    return Ok((norm, trace_to(&side, id)));
                }
                next.push(id);
                if side.nodes.len() >= max_nodes {
                    break;
                }
            }
            if side.nodes.len() >= max_nodes {
                break;
            }
        }
        side.depth += 1;
        side.frontier = next;
    }
    Err((0..side.nodes.len())
        .map(|i| (side.nodes[i].0.clone(), trace_to(&side, i)))
        .collect())
}

/// Tunables shared by validity checking and proof search.
#[derive(Debug, Clone)]
pub struct SearchOptions {
    pub bound: usize,
    pub pool_radius: i64,
    pub sample_box: i64,
    pub max_samples: usize,
    pub max_nodes: usize,
    pub size_slack: usize,
    /// Nodes kept per side when looking for a trivial pair.
    pub trivial_cap: usize,
    /// Rewrite steps explored by proof search.
    pub proof_steps: usize,
    pub seed: u64,
    pub seeds: Vec<Term>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            bound: 8,
            pool_radius: 8,
            sample_box: 5,
            max_samples: 4096,
            max_nodes: 200_000,
            size_slack: 8,
            trivial_cap: 32,
            proof_steps: 32,
            seed: 0x5eed,
            seeds: Vec::new(),
        }
    }
}

impl SearchOptions {
    pub fn limits(&self) -> SearchLimits {
        SearchLimits {
            bound: self.bound,
            max_nodes: self.max_nodes,
            size_slack: self.size_slack,
        }
    }
}

/// Whether every constraint-satisfying instance makes both sides equal up to
/// calculation.
pub fn is_trivial(
    ce: &ConstrainedEquation,
    theory: &CETheory,
    oracle: &Oracle,
) -> Result<Verdict, OracleError> {
    let model = &theory.model;
    let xs = &ce.logical_vars;
    let sat = match oracle.find_model(&ce.constraint)? {
        Ok(None) => return Ok(Verdict::Valid),
        Ok(Some(w)) => w,
        Err(reason) => return Ok(Verdict::Unknown(reason)),
    };
    let (_, pairs) = decompose_differences(&ce.lhs, &ce.rhs);
    let mut unknown = None;
    for (a, b) in &pairs {
        if a.is_theory_term_over(xs) && b.is_theory_term_over(xs) {
            let goal = model.implies(ce.constraint.clone(), model.eq(a.clone(), b.clone()));
            match oracle.check_validity(&goal)? {
                Verdict::Valid => {}
                Verdict::Invalid(w) => {
                    return Ok(Verdict::Invalid(complete_valuation(model, xs, &w)))
                }
                Verdict::Unknown(r) => unknown = Some(r),
            }
        } else {
            match separate(model, ce, xs, &sat, a, b) {
                Some(w) => return Ok(Verdict::Invalid(w)),
                None => {
                    unknown = Some(format!("could not separate {a} from {b}"));
                }
            }
        }
    }
    Ok(match unknown {
        Some(r) => Verdict::Unknown(r),
        None => Verdict::Valid,
    })
}

fn complete_valuation(
    model: &UnderlyingModel,
    xs: &BTreeSet<Variable>,
    w: &Substitution,
) -> Substitution {
    let mut out = w.clone();
    for x in xs {
        if out.get(x).is_none() {
            if let Some(v) = model.sort_values(x.sort(), 0).first() {
                out.insert(x.clone(), Term::Val(v.clone()))
                    .expect("sorted value");
            }
        }
    }
    out
}

/// An instance under which `a` and `b` stay apart after calculation.
fn separate(
    model: &UnderlyingModel,
    ce: &ConstrainedEquation,
    xs: &BTreeSet<Variable>,
    sat: &Substitution,
    a: &Term,
    b: &Term,
) -> Option<Substitution> {
    let base = complete_valuation(model, xs, sat);
    let mut free: BTreeSet<Variable> = a.vars();
    b.vars_into(&mut free);
    free.retain(|v| v.is_theory() && !xs.contains(v));
    let candidates = |sort: &Sort| -> Vec<Value> {
        if *sort == Sort::bool() {
            vec![Value::Bool(false), Value::Bool(true)]
        } else {
            let mut vs = vec![Value::int(0)];
            for k in 1..=3 {
                vs.push(Value::int(k));
                vs.push(Value::int(-k));
            }
            vs.retain(|v| model.contains(v));
            vs
        }
    };
    let differ = |sigma: &Substitution| {
        model.calc_normalize(&a.apply(sigma)) != model.calc_normalize(&b.apply(sigma))
    };
    let mut bases = vec![base];
    bases.extend(model.enumerate_satisfying(xs, &ce.constraint, 3).take(32));
    for base in &bases {
        if !free.is_empty() {
            for c in [Value::Bool(false), Value::Bool(true)]
                .into_iter()
                .chain(candidates(&Sort::int()))
            {
                let mut sigma = base.clone();
                let mut ok = false;
                for v in &free {
                    if c.sort() == *v.sort() {
                        sigma
                            .insert(v.clone(), Term::Val(c.clone()))
                            .expect("sorted");
                        ok = true;
                    } else if let Some(d) = candidates(v.sort()).first() {
                        sigma
                            .insert(v.clone(), Term::Val(d.clone()))
                            .expect("sorted");
                    }
                }
                if ok && differ(&sigma) {
                    return Some(sigma);
                }
            }
        }
        if differ(base) {
            return Some(base.clone());
        }
    }
    None
}

/// Outcome of [`check_ce_validity`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidityStatus {
    /// A ground conversion `s ⇄* t`; proves validity.
    ProvedGroundConversion(ConversionTrace),
    /// Rewrites of both sides to a trivial equation; proves validity.
    ProvedByTriviality {
        lhs: Term,
        rhs: Term,
        lhs_trace: ConversionTrace,
        rhs_trace: ConversionTrace,
    },
    /// Every sampled instance converts. Evidence only, never a proof.
    ConfirmedOnSamples {
        count: usize,
        exhaustive: bool,
    },
    /// This instance has no conversion within the bound.
    NoConversionWithinBound(Substitution),
    Unknown(String),
}

impl ValidityStatus {
    pub fn is_proof(&self) -> bool {
        matches!(
            self,
            ValidityStatus::ProvedGroundConversion(_) | ValidityStatus::ProvedByTriviality { .. }
        )
    }

    pub fn label(&self) -> &'static str {
        match self {
            ValidityStatus::ProvedGroundConversion(_) => "proved-ground-conversion",
            ValidityStatus::ProvedByTriviality { .. } => "proved-by-triviality",
            ValidityStatus::ConfirmedOnSamples { .. } => "confirmed-on-samples",
            ValidityStatus::NoConversionWithinBound(_) => "no-conversion-within-bound",
            ValidityStatus::Unknown(_) => "unknown",
        }
    }
}

impl fmt::Display for ValidityStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidityStatus::ProvedGroundConversion(tr) => {
                write!(f, "valid: ground conversion with {} steps", tr.len())
            }
            ValidityStatus::ProvedByTriviality { lhs, rhs, .. } => {
                write!(f, "valid: rewrites to the trivial equation {lhs} = {rhs}")
            }
            ValidityStatus::ConfirmedOnSamples { count, exhaustive } => write!(
                f,
                "confirmed on {count} {} samples (evidence only, not a proof)",
                if *exhaustive { "exhaustive" } else { "bounded" }
            ),
            ValidityStatus::NoConversionWithinBound(s) => {
                write!(f, "no conversion within bound for instance {s}")
            }
            ValidityStatus::Unknown(r) => write!(f, "unknown: {r}"),
        }
    }
}

/// Semi-decides validity: ground conversion, then rewriting to a trivial
/// equation, then per-instance conversion on samples.
pub fn check_ce_validity(
    theory: &CETheory,
    ce: &ConstrainedEquation,
    oracle: &Oracle,
    opts: &SearchOptions,
) -> Result<ValidityStatus, OracleError> {
    let model = &theory.model;
    let ground_goal = ce.is_unconstrained_ground_goal();
    if ground_goal {
        if let Some(tr) = conversion_search(theory, &ce.lhs, &ce.rhs, opts) {
            return Ok(ValidityStatus::ProvedGroundConversion(tr));
        }
    }
    if let Some(status) = rewrite_to_trivial(theory, ce, oracle, opts)? {
        return Ok(status);
    }
    if ground_goal {
        return Ok(ValidityStatus::NoConversionWithinBound(Substitution::new()));
    }
    let mut samples: Vec<Substitution> = model
        .enumerate_satisfying(&ce.logical_vars, &ce.constraint, opts.sample_box)
        .collect();
    let mut exhaustive = model.enumeration_is_exhaustive(&ce.logical_vars)
        || (opts.sample_box >= 0 && ce.logical_vars.is_empty());
    if samples.len() > opts.max_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        samples.shuffle(&mut rng);
        samples.truncate(opts.max_samples);
        exhaustive = false;
    }
    let limits = opts.limits();
    for sigma in &samples {
        let s = ce.lhs.apply(sigma);
        let t = ce.rhs.apply(sigma);
        let pools = Pools::new(theory, opts.pool_radius, &[&s, &t], &opts.seeds);
        if conversion_search_with(theory, &s, &t, &pools, &limits).is_none() {
            return Ok(ValidityStatus::NoConversionWithinBound(sigma.clone()));
        }
    }
    Ok(ValidityStatus::ConfirmedOnSamples {
        count: samples.len(),
        exhaustive,
    })
}

fn rewrite_to_trivial(
    theory: &CETheory,
    ce: &ConstrainedEquation,
    oracle: &Oracle,
    opts: &SearchOptions,
) -> Result<Option<ValidityStatus>, OracleError> {
    let xs = &ce.logical_vars;
    let pools = Pools::new(theory, opts.pool_radius, &[&ce.lhs, &ce.rhs], &opts.seeds);
    let depth = opts.bound / 2;
    let reach = |t: &Term| -> Vec<(Term, ConversionTrace)> {
        match explore(theory, t, &pools, depth, opts.trivial_cap, &mut |_| false) {
            Ok(one) => vec![one],
            Err(all) => all,
        }
    };
    let left = reach(&ce.lhs);
    let right = reach(&ce.rhs);
    let mut order: Vec<(usize, usize)> = (0..left.len())
        .flat_map(|i| (0..right.len()).map(move |j| (i, j)))
        .collect();
    order.sort_by_key(|&(i, j)| (i + j, i));
    for (i, j) in order {
        let (a, ta) = &left[i];
        let (b, tb) = &right[j];
        let (_, pairs) = decompose_differences(a, b);
        if !pairs
            .iter()
            .all(|(p, q)| p.is_theory_term_over(xs) && q.is_theory_term_over(xs))
        {
            continue;
        }
        let cand = ConstrainedEquation {
            logical_vars: xs.clone(),
            lhs: a.clone(),
            rhs: b.clone(),
            constraint: ce.constraint.clone(),
        };
        if is_trivial(&cand, theory, oracle)? == Verdict::Valid {
            return Ok(Some(ValidityStatus::ProvedByTriviality {
                lhs: a.clone(),
                rhs: b.clone(),
                lhs_trace: ta.clone(),
                rhs_trace: tb.clone(),
            }));
        }
    }
    if oracle.find_model(&ce.constraint)? == Ok(None) {
        return Ok(Some(ValidityStatus::ProvedByTriviality {
            lhs: ce.lhs.clone(),
            rhs: ce.rhs.clone(),
            lhs_trace: ConversionTrace::default(),
            rhs_trace: ConversionTrace::default(),
        }));
    }
    Ok(None)
}
