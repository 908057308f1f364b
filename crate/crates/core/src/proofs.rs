// SPDX-License-Identifier: Apache-2.0

//! Derivations in the twelve-rule calculus, a checker for them, and proof
//! construction.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::models::{Oracle, OracleError, Verdict};
use crate::rewriting::{
    collect_literals, CETheory, ConstrainedEquation, Direction, Node, Pools, SearchOptions,
};
use crate::terms::{Position, Sort, Substitution, Term, TheoryOp, Value, Variable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RuleName {
    Refl,
    Trans,
    Sym,
    Cong,
    Rule,
    TheoryInstance,
    GeneralInstance,
    Weakening,
    Split,
    Axiom,
    Abst,
    Enlarge,
}

impl RuleName {
    pub const ALL: [RuleName; 12] = [
        RuleName::Refl,
        RuleName::Trans,
        RuleName::Sym,
        RuleName::Cong,
        RuleName::Rule,
        RuleName::TheoryInstance,
        RuleName::GeneralInstance,
        RuleName::Weakening,
        RuleName::Split,
        RuleName::Axiom,
        RuleName::Abst,
        RuleName::Enlarge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleName::Refl => "Refl",
            RuleName::Trans => "Trans",
            RuleName::Sym => "Sym",
            RuleName::Cong => "Cong",
            RuleName::Rule => "Rule",
            RuleName::TheoryInstance => "TheoryInstance",
            RuleName::GeneralInstance => "GeneralInstance",
            RuleName::Weakening => "Weakening",
            RuleName::Split => "Split",
            RuleName::Axiom => "Axiom",
            RuleName::Abst => "Abst",
            RuleName::Enlarge => "Enlarge",
        }
    }

    /// Required premise count; `None` for any count.
    pub fn arity(self) -> Option<usize> {
        match self {
            RuleName::Refl | RuleName::Rule | RuleName::Axiom => Some(0),
            RuleName::Trans | RuleName::Split => Some(2),
            RuleName::Cong => None,
            _ => Some(1),
        }
    }

    pub fn needs_witness(self) -> bool {
        matches!(
            self,
            RuleName::TheoryInstance | RuleName::GeneralInstance | RuleName::Abst
        )
    }
}

impl fmt::Display for RuleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RuleName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RuleName::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| format!("unknown rule {s}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Derivation {
    pub rule: RuleName,
    pub conclusion: ConstrainedEquation,
    pub witness: Option<Substitution>,
    pub premises: Vec<Derivation>,
}

impl Derivation {
    pub fn leaf(rule: RuleName, conclusion: ConstrainedEquation) -> Self {
        Derivation {
            rule,
            conclusion,
            witness: None,
            premises: Vec::new(),
        }
    }

    pub fn node(
        rule: RuleName,
        conclusion: ConstrainedEquation,
        premises: Vec<Derivation>,
    ) -> Self {
        Derivation {
            rule,
            conclusion,
            witness: None,
            premises,
        }
    }

    pub fn with_witness(mut self, sigma: Substitution) -> Self {
        self.witness = Some(sigma);
        self
    }

    pub fn size(&self) -> usize {
        1 + self.premises.iter().map(Derivation::size).sum::<usize>()
    }

    /// Number of nodes using `rule`.
    pub fn count(&self, rule: RuleName) -> usize {
        usize::from(self.rule == rule) + self.premises.iter().map(|p| p.count(rule)).sum::<usize>()
    }

    /// Nodes in pre-order with their 1-based paths.
    pub fn nodes(&self) -> Vec<(Vec<usize>, &Derivation)> {
        let mut out = Vec::new();
        fn go<'a>(
            d: &'a Derivation,
            path: &mut Vec<usize>,
            out: &mut Vec<(Vec<usize>, &'a Derivation)>,
        ) {
            out.push((path.clone(), d));
            for (i, p) in d.premises.iter().enumerate() {
                path.push(i + 1);
                go(p, path, out);
                path.pop();
            }
        }
        go(self, &mut Vec::new(), &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    ShapeMismatch,
    SideConditionFailed,
    NotInTheory,
    OracleUnknown,
    MalformedCe,
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorCode::ShapeMismatch => "shape-mismatch",
            ErrorCode::SideConditionFailed => "side-condition-failed",
            ErrorCode::NotInTheory => "not-in-theory",
            ErrorCode::OracleUnknown => "oracle-unknown",
            ErrorCode::MalformedCe => "malformed-ce",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckVerdict {
    Accepted,
    Rejected {
        path: Vec<usize>,
        code: ErrorCode,
        rule: RuleName,
        detail: String,
    },
    OracleUnknown {
        path: Vec<usize>,
        rule: RuleName,
        constraint: Term,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckReport {
    pub verdict: CheckVerdict,
}

pub fn path_text(path: &[usize]) -> String {
    if path.is_empty() {
        "e".into()
    } else {
        path.iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(".")
    }
}

impl CheckReport {
    pub fn is_accepted(&self) -> bool {
        self.verdict == CheckVerdict::Accepted
    }

    /// `code:Rule` for rejections, e.g. `side-condition-failed:Weakening`.
    pub fn error_code(&self) -> Option<String> {
        match &self.verdict {
            CheckVerdict::Accepted => None,
            CheckVerdict::Rejected { code, rule, .. } => Some(format!("{code}:{rule}")),
            CheckVerdict::OracleUnknown { rule, .. } => {
                Some(format!("{}:{rule}", ErrorCode::OracleUnknown))
            }
        }
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.verdict {
            CheckVerdict::Accepted => write!(f, "accepted"),
            CheckVerdict::Rejected {
                path,
                code,
                rule,
                detail,
            } => write!(
                f,
                "rejected at {}: {code}:{rule}: {detail}",
                path_text(path)
            ),
            CheckVerdict::OracleUnknown {
                path,
                rule,
                constraint,
            } => write!(
                f,
                "oracle unknown at {} ({rule}): cannot decide {constraint}",
                path_text(path)
            ),
        }
    }
}

enum NodeOutcome {
    Ok,
    Reject(ErrorCode, String),
    Unknown(Term),
}

fn reject(code: ErrorCode, detail: impl Into<String>) -> NodeOutcome {
    NodeOutcome::Reject(code, detail.into())
}

fn shape(detail: impl Into<String>) -> NodeOutcome {
    reject(ErrorCode::ShapeMismatch, detail)
}

fn side(detail: impl Into<String>) -> NodeOutcome {
    reject(ErrorCode::SideConditionFailed, detail)
}

/// Checks every node in pre-order. The first rejection is reported; an
/// undecided oracle query is reported only when no node is rejected.
pub fn check_proof(
    theory: &CETheory,
    oracle: &Oracle,
    d: &Derivation,
) -> Result<CheckReport, OracleError> {
    let mut unknown = None;
    for (path, node) in d.nodes() {
        match check_node(theory, oracle, node)? {
            NodeOutcome::Ok => {}
            NodeOutcome::Reject(code, detail) => {
                return Ok(CheckReport {
                    verdict: CheckVerdict::Rejected {
                        path,
                        code,
                        rule: node.rule,
                        detail,
                    },
                })
            }
            NodeOutcome::Unknown(constraint) => {
                if unknown.is_none() {
                    unknown = Some(CheckVerdict::OracleUnknown {
                        path,
                        rule: node.rule,
                        constraint,
                    });
                }
            }
        }
    }
    Ok(CheckReport {
        verdict: unknown.unwrap_or(CheckVerdict::Accepted),
    })
}

fn entails(
    oracle: &Oracle,
    phi: &Term,
    psi: &Term,
    what: &str,
) -> Result<NodeOutcome, OracleError> {
    if phi == psi || *psi == Term::bool(true) {
        return Ok(NodeOutcome::Ok);
    }
    let m = oracle.model();
    let goal = m.implies(phi.clone(), psi.clone());
    Ok(match oracle.check_validity(&goal)? {
        Verdict::Valid => NodeOutcome::Ok,
        Verdict::Invalid(w) => side(format!("{what}: {goal} fails under {w}")),
        Verdict::Unknown(_) => NodeOutcome::Unknown(goal),
    })
}

fn well_formed(theory: &CETheory, ce: &ConstrainedEquation) -> Result<(), String> {
    ce.validate().map_err(|e| e.to_string())?;
    for t in [&ce.lhs, &ce.rhs, &ce.constraint] {
        for (_, u) in t.subterms() {
            if let Term::App(f, args) = u {
                if !theory
                    .signature
                    .symbols_named(f.name())
                    .iter()
                    .any(|g| **g == **f)
                {
                    return Err(format!("undeclared symbol {f}"));
                }
                if args
                    .iter()
                    .map(Term::sort)
                    .ne(f.arg_sorts().iter().cloned())
                {
                    return Err(format!("ill-sorted application of {f}"));
                }
            }
            if let Term::Val(v) = u {
                if !theory.model.contains(v) {
                    return Err(format!("{v} is not a value of the model"));
                }
            }
        }
    }
    Ok(())
}

fn check_node(
    theory: &CETheory,
    oracle: &Oracle,
    d: &Derivation,
) -> Result<NodeOutcome, OracleError> {
    let c = &d.conclusion;
    if let Err(e) = well_formed(theory, c) {
        return Ok(reject(ErrorCode::MalformedCe, e));
    }
    if let Some(n) = d.rule.arity() {
        if d.premises.len() != n {
            return Ok(shape(format!(
                "{} takes {n} premises, found {}",
                d.rule,
                d.premises.len()
            )));
        }
    }
    let witness = match (&d.witness, d.rule.needs_witness()) {
        (None, true) => return Ok(shape(format!("{} needs a substitution", d.rule))),
        (Some(w), _) => w.clone(),
        (None, false) => Substitution::new(),
    };
    let xs = &c.logical_vars;
    let phi = &c.constraint;
    let prem = |i: usize| &d.premises[i].conclusion;
    let out = match d.rule {
        RuleName::Refl => {
            if c.lhs == c.rhs {
                NodeOutcome::Ok
            } else {
                shape("sides differ")
            }
        }
        RuleName::Trans => {
            let (a, b) = (prem(0), prem(1));
            if a.logical_vars != *xs || b.logical_vars != *xs {
                shape("logical variables differ")
            } else if a.constraint != *phi || b.constraint != *phi {
                shape("constraints differ")
            } else if a.lhs != c.lhs || b.rhs != c.rhs {
                shape("outer terms do not match the conclusion")
            } else if a.rhs != b.lhs {
                shape(format!("middle terms {} and {} differ", a.rhs, b.lhs))
            } else {
                NodeOutcome::Ok
            }
        }
        RuleName::Sym => {
            let a = prem(0);
            if a.logical_vars == *xs && a.constraint == *phi && a.lhs == c.rhs && a.rhs == c.lhs {
                NodeOutcome::Ok
            } else {
                shape("premise is not the swapped conclusion")
            }
        }
        RuleName::Cong => match (&c.lhs, &c.rhs) {
            (Term::App(f, ss), Term::App(g, ts)) if f == g => {
                if d.premises.len() != ss.len() {
                    shape(format!("{f} needs {} premises", ss.len()))
                } else if let Some(i) = (0..ss.len()).find(|&i| {
                    let p = prem(i);
                    p.logical_vars != *xs
                        || p.constraint != *phi
                        || p.lhs != ss[i]
                        || p.rhs != ts[i]
                }) {
                    shape(format!(
                        "premise {} does not relate argument {}",
                        i + 1,
                        i + 1
                    ))
                } else {
                    NodeOutcome::Ok
                }
            }
            _ => shape("sides are not applications of the same symbol"),
        },
        RuleName::Rule => {
            if theory.equations.contains(c) {
                NodeOutcome::Ok
            } else {
                reject(
                    ErrorCode::NotInTheory,
                    format!("{c} is not an equation of the theory"),
                )
            }
        }
        RuleName::TheoryInstance => {
            let a = prem(0);
            let expect = (
                a.lhs.apply(&witness),
                a.rhs.apply(&witness),
                a.constraint.apply(&witness),
            );
            if (c.lhs.clone(), c.rhs.clone(), c.constraint.clone()) != expect {
                shape("conclusion is not the instance of the premise")
            } else if let Some(y) = a
                .logical_vars
                .iter()
                .find(|y| !witness.image(y).is_theory_term_over(xs))
            {
                side(format!(
                    "{y} is mapped to {}, not a theory term over the logical variables",
                    witness.image(y)
                ))
            } else {
                NodeOutcome::Ok
            }
        }
        RuleName::GeneralInstance => {
            let a = prem(0);
            if a.logical_vars != *xs || a.constraint != *phi {
                shape("logical variables or constraint changed")
            } else if c.lhs != a.lhs.apply(&witness) || c.rhs != a.rhs.apply(&witness) {
                shape("conclusion is not the instance of the premise")
            } else if let Some(x) = witness.domain().find(|x| xs.contains(*x)) {
                side(format!("substitution touches logical variable {x}"))
            } else {
                NodeOutcome::Ok
            }
        }
        RuleName::Weakening => {
            let a = prem(0);
            if a.logical_vars != *xs || a.lhs != c.lhs || a.rhs != c.rhs {
                shape("only the constraint may change")
            } else {
                entails(
                    oracle,
                    phi,
                    &a.constraint,
                    "constraint does not entail the premise's",
                )?
            }
        }
        RuleName::Split => {
            let (a, b) = (prem(0), prem(1));
            let m = &theory.model;
            if [a, b]
                .iter()
                .any(|p| p.logical_vars != *xs || p.lhs != c.lhs || p.rhs != c.rhs)
            {
                shape("premises must share the conclusion's equation")
            } else if *phi != m.or(a.constraint.clone(), b.constraint.clone()) {
                shape("constraint is not the disjunction of the premises' constraints in order")
            } else {
                NodeOutcome::Ok
            }
        }
        RuleName::Axiom => {
            if !c.lhs.is_theory_term_over(xs) || !c.rhs.is_theory_term_over(xs) {
                side("sides are not theory terms over the logical variables")
            } else {
                let m = &theory.model;
                entails(
                    oracle,
                    phi,
                    &m.eq(c.lhs.clone(), c.rhs.clone()),
                    "equation is not implied",
                )?
            }
        }
        RuleName::Abst => {
            let a = prem(0);
            let m = &theory.model;
            if a.logical_vars != *xs
                || a.lhs != c.lhs.apply(&witness)
                || a.rhs != c.rhs.apply(&witness)
                || a.constraint != phi.apply(&witness)
            {
                shape("premise is not the instance of the conclusion")
            } else if let Some(v) = c.side_vars().into_iter().find(|v| !xs.contains(v)) {
                side(format!(
                    "{v} occurs in the sides but is not a logical variable"
                ))
            } else if let Some(x) = xs
                .iter()
                .find(|x| !witness.image(x).is_theory_term_over(xs))
            {
                side(format!(
                    "image of {x} is not a theory term over the logical variables"
                ))
            } else {
                let eqs = xs
                    .iter()
                    .map(|x| m.eq(Term::Var(x.clone()), witness.image(x)))
                    .filter(|e| e.args()[0] != e.args()[1]);
                entails(
                    oracle,
                    phi,
                    &m.and_all(eqs),
                    "constraint does not force the substitution",
                )?
            }
        }
        RuleName::Enlarge => {
            let a = prem(0);
            if a.lhs != c.lhs || a.rhs != c.rhs || a.constraint != *phi {
                shape("only the logical variables may change")
            } else if let Some(v) = c
                .side_vars()
                .into_iter()
                .find(|v| a.logical_vars.contains(v) && !xs.contains(v))
            {
                side(format!(
                    "{v} is dropped from the logical variables but occurs in the sides"
                ))
            } else {
                NodeOutcome::Ok
            }
        }
    };
    Ok(out)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenerateError {
    #[error("precondition-unverifiable: {0}")]
    PreconditionUnverifiable(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Box used to verify the precondition of [`generate_calc_proof`].
pub const CALC_PROOF_BOX: i64 = 8;

/// Builds a derivation for a CE whose instances differ by at most one
/// calculation step, after checking that precondition on the instances in
/// `[-CALC_PROOF_BOX, CALC_PROOF_BOX]`.
pub fn generate_calc_proof(
    theory: &CETheory,
    oracle: &Oracle,
    ce: &ConstrainedEquation,
) -> Result<Derivation, GenerateError> {
    let m = &theory.model;
    let unverifiable = |s: String| GenerateError::PreconditionUnverifiable(s);
    match oracle.find_model(&ce.constraint)? {
        Ok(Some(_)) => {}
        Ok(None) => return Err(unverifiable("constraint is unsatisfiable".into())),
        Err(r) => return Err(unverifiable(r)),
    }
    let xs = &ce.logical_vars;
    let (_, pairs) = crate::terms::decompose_differences(&ce.lhs, &ce.rhs);
    for (a, b) in &pairs {
        if !a.is_theory_term_over(xs) || !b.is_theory_term_over(xs) {
            return Err(unverifiable(format!(
                "{a} and {b} differ outside theory terms over the logical variables"
            )));
        }
    }
    for sigma in m.enumerate_satisfying(xs, &ce.constraint, CALC_PROOF_BOX) {
        for (a, b) in &pairs {
            let (u, v) = (a.apply(&sigma), b.apply(&sigma));
            if m.interpret(&u).ok() != m.interpret(&v).ok() {
                return Err(unverifiable(format!(
                    "instance {sigma} separates {u} and {v}"
                )));
            }
        }
    }
    close_gap(theory, oracle, ce, &ce.lhs, &ce.rhs)?
        .ok_or_else(|| unverifiable("an equality between theory terms is not valid".into()))
}

fn with_sides(ce: &ConstrainedEquation, lhs: Term, rhs: Term) -> ConstrainedEquation {
    ConstrainedEquation {
        logical_vars: ce.logical_vars.clone(),
        lhs,
        rhs,
        constraint: ce.constraint.clone(),
    }
}

/// Refl, Axiom and Cong only.
fn close_gap(
    theory: &CETheory,
    oracle: &Oracle,
    ctx: &ConstrainedEquation,
    s: &Term,
    t: &Term,
) -> Result<Option<Derivation>, OracleError> {
    let xs = &ctx.logical_vars;
    if s == t {
        return Ok(Some(Derivation::leaf(
            RuleName::Refl,
            with_sides(ctx, s.clone(), t.clone()),
        )));
    }
    if s.is_theory_term_over(xs) && t.is_theory_term_over(xs) {
        let m = &theory.model;
        let goal = m.implies(ctx.constraint.clone(), m.eq(s.clone(), t.clone()));
        return Ok(match oracle.check_validity(&goal)? {
            Verdict::Valid => Some(Derivation::leaf(
                RuleName::Axiom,
                with_sides(ctx, s.clone(), t.clone()),
            )),
            _ => None,
        });
    }
    match (s, t) {
        (Term::App(f, ss), Term::App(g, ts)) if f == g => {
            let mut premises = Vec::with_capacity(ss.len());
            for (a, b) in ss.iter().zip(ts.iter()) {
                match close_gap(theory, oracle, ctx, a, b)? {
                    Some(d) => premises.push(d),
                    None => return Ok(None),
                }
            }
            Ok(Some(Derivation::node(
                RuleName::Cong,
                with_sides(ctx, s.clone(), t.clone()),
                premises,
            )))
        }
        _ => Ok(None),
    }
}

/// Shape of a term with theory subterms over `xs` blanked out.
fn skeleton(t: &Term, xs: &BTreeSet<Variable>) -> Term {
    if t.is_theory_term_over(xs) {
        return Term::Var(Variable::new("_", t.sort()));
    }
    match t {
        Term::App(f, args) => Term::App(f.clone(), args.iter().map(|a| skeleton(a, xs)).collect()),
        _ => t.clone(),
    }
}

#[derive(Debug, Clone)]
struct SymStep {
    position: Position,
    equation: usize,
    direction: Direction,
    theta: Substitution,
    result: Term,
}

fn match_sym(
    p: &Term,
    s: &Term,
    ys: &BTreeSet<Variable>,
    xs: &BTreeSet<Variable>,
    b: &mut BTreeMap<Variable, Term>,
) -> bool {
    match p {
        Term::Var(v) => {
            if *v.sort() != s.sort() || (ys.contains(v) && !s.is_theory_term_over(xs)) {
                return false;
            }
            match b.get(v) {
                Some(u) => u == s,
                None => {
                    b.insert(v.clone(), s.clone());
                    true
                }
            }
        }
        Term::Val(a) => s.as_value() == Some(a),
        Term::App(f, ps) => match s {
            Term::App(g, ss) if f == g => ps
                .iter()
                .zip(ss.iter())
                .all(|(p, s)| match_sym(p, s, ys, xs, b)),
            _ => false,
        },
    }
}

fn equalities(phi: &Term, out: &mut Vec<(Term, Term)>) {
    if let Term::App(f, args) = phi {
        match f.op() {
            Some(TheoryOp::And) => {
                equalities(&args[0], out);
                equalities(&args[1], out);
            }
            Some(TheoryOp::Eq) => out.push((args[0].clone(), args[1].clone())),
            _ => {}
        }
    }
}

/// A value or term for `v` forced by an equality of the constraint.
fn solve_for(
    theory: &CETheory,
    eqs: &[(Term, Term)],
    v: &Variable,
    b: &BTreeMap<Variable, Term>,
    xs: &BTreeSet<Variable>,
) -> Option<Term> {
    let m = &theory.model;
    let sigma = Substitution::from_pairs(b.iter().map(|(k, t)| (k.clone(), t.clone()))).ok()?;
    for (l, r) in eqs {
        let (l, r) = (l.apply(&sigma), r.apply(&sigma));
        for (a, c) in [(&l, &r), (&r, &l)] {
            if a.as_var() == Some(v) && !c.contains_var(v) && c.is_theory_term_over(xs) {
                return Some(m.calc_normalize(c));
            }
        }
        let mut vs = l.vars();
        r.vars_into(&mut vs);
        if vs.len() == 1 && vs.contains(v) && *v.sort() == Sort::int() && !m.is_finite() {
            let at = |k: i64| -> Option<num_bigint::BigInt> {
                let mut rho = HashMap::new();
                rho.insert(v.clone(), Value::int(k));
                let x = m.eval_with(&l, &rho).ok()?;
                let y = m.eval_with(&r, &rho).ok()?;
                Some(x.as_int()? - y.as_int()?)
            };
            let d0 = at(0)?;
            let slope = at(1)? - &d0;
            let unit = slope == 1.into() || slope == (-1).into();
            if unit
                && [-1i64, 2, 5]
                    .iter()
                    .all(|&k| at(k) == Some(&d0 + &slope * k))
            {
                return Some(Term::Val(Value::Int(-d0 * slope)));
            }
        }
    }
    None
}

struct Prover<'a> {
    theory: &'a CETheory,
    oracle: &'a Oracle,
    goal: &'a ConstrainedEquation,
    pools: Pools,
    cap: usize,
    oracle_cache: HashMap<Term, bool>,
}

impl<'a> Prover<'a> {
    fn entailed(&mut self, psi: &Term) -> Result<bool, OracleError> {
        if *psi == Term::bool(true) || *psi == self.goal.constraint {
            return Ok(true);
        }
        if let Some(&b) = self.oracle_cache.get(psi) {
            return Ok(b);
        }
        let m = &self.theory.model;
        let ok = if psi.is_ground() {
            m.eval_constraint(psi) == Ok(true)
        } else {
            let goal = m.implies(self.goal.constraint.clone(), psi.clone());
            self.oracle.check_validity(&goal)?.is_valid()
        };
        self.oracle_cache.insert(psi.clone(), ok);
        Ok(ok)
    }

    fn steps(&mut self, u: &Term) -> Result<Vec<SymStep>, OracleError> {
        let xs = self.goal.logical_vars.clone();
        let mut out = Vec::new();
        for (pos, sub) in u.subterms() {
            for i in 0..self.theory.equations.len() {
                for dir in [Direction::LeftToRight, Direction::RightToLeft] {
                    let eq = &self.theory.equations[i];
                    let (pat, rep) = dir.sides(eq);
                    if pat.sort() != sub.sort() {
                        continue;
                    }
                    let mut b = BTreeMap::new();
                    if !match_sym(pat, sub, &eq.logical_vars, &xs, &mut b) {
                        continue;
                    }
                    for theta in self.complete(eq, b)? {
                        let result = u
                            .replace_at(&pos, rep.apply(&theta))
                            .expect("matched position");
                        if result.size() > self.cap {
                            continue;
                        }
                        out.push(SymStep {
                            position: pos.clone(),
                            equation: i,
                            direction: dir,
                            theta,
                            result,
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    fn complete(
        &mut self,
        eq: &ConstrainedEquation,
        b: BTreeMap<Variable, Term>,
    ) -> Result<Vec<Substitution>, OracleError> {
        let xs = self.goal.logical_vars.clone();
        let mut eqs = Vec::new();
        equalities(&eq.constraint, &mut eqs);
        let mut partial = vec![b];
        let all = eq.vars();
        for y in &eq.logical_vars {
            let mut next = Vec::new();
            for b in partial {
                if b.contains_key(y) {
                    next.push(b);
                    continue;
                }
                let cands: Vec<Term> = if !all.contains(y) {
                    if xs.contains(y) {
                        vec![Term::Var(y.clone())]
                    } else {
                        self.pools
                            .values_of(y.sort())
                            .first()
                            .cloned()
                            .map(Term::Val)
                            .into_iter()
                            .collect()
                    }
                } else if let Some(t) = solve_for(self.theory, &eqs, y, &b, &xs) {
                    vec![t]
                } else {
                    self.pools
                        .values_of(y.sort())
                        .iter()
                        .cloned()
                        .map(Term::Val)
                        .collect()
                };
                for c in cands {
                    let mut b2 = b.clone();
                    b2.insert(y.clone(), c);
                    next.push(b2);
                }
            }
            partial = next;
        }
        for v in all.iter().filter(|v| !eq.logical_vars.contains(*v)) {
            let mut next = Vec::new();
            for b in partial {
                if b.contains_key(v) {
                    next.push(b);
                    continue;
                }
                for c in self.pools.terms.iter().filter(|t| t.sort() == *v.sort()) {
                    let mut b2 = b.clone();
                    b2.insert(v.clone(), c.clone());
                    next.push(b2);
                }
            }
            partial = next;
        }
        let mut out = Vec::new();
        for b in partial {
            let Ok(theta) = Substitution::from_pairs(b) else {
                continue;
            };
            let psi = eq.constraint.apply(&theta);
            if !psi.is_theory_term_over(&xs) {
                continue;
            }
            if self.entailed(&psi)? {
                out.push(theta);
            }
        }
        Ok(out)
    }

    /// Derivation of `from ≈ to` for one symbolic step, lifted to the root.
    fn step_derivation(&self, from: &Term, to: &Term, st: &SymStep, dir: Direction) -> Derivation {
        let g = self.goal;
        let eq = &self.theory.equations[st.equation];
        let mut d = Derivation::leaf(RuleName::Rule, eq.clone());
        let inst = ConstrainedEquation {
            logical_vars: g.logical_vars.clone(),
            lhs: eq.lhs.apply(&st.theta),
            rhs: eq.rhs.apply(&st.theta),
            constraint: eq.constraint.apply(&st.theta),
        };
        if !st.theta.is_empty() {
            d = Derivation::node(RuleName::TheoryInstance, inst.clone(), vec![d])
                .with_witness(st.theta.clone());
        } else if eq.logical_vars != g.logical_vars {
            d = Derivation::node(RuleName::Enlarge, inst.clone(), vec![d]);
        }
        if inst.constraint != g.constraint {
            d = Derivation::node(
                RuleName::Weakening,
                with_sides(g, inst.lhs.clone(), inst.rhs.clone()),
                vec![d],
            );
        }
        if dir == Direction::RightToLeft {
            d = Derivation::node(
                RuleName::Sym,
                with_sides(g, inst.rhs.clone(), inst.lhs.clone()),
                vec![d],
            );
        }
        let path = &st.position.0;
        for depth in (0..path.len()).rev() {
            let q = Position(path[..depth].to_vec());
            let (a, b) = (
                from.subterm_at(&q).expect("position").clone(),
                to.subterm_at(&q).expect("position").clone(),
            );
            let hole = path[depth] - 1;
            let premises = a
                .args()
                .iter()
                .enumerate()
                .map(|(k, arg)| {
                    if k == hole {
                        d.clone()
                    } else {
                        Derivation::leaf(RuleName::Refl, with_sides(g, arg.clone(), arg.clone()))
                    }
                })
                .collect();
            d = Derivation::node(RuleName::Cong, with_sides(g, a, b), premises);
        }
        d
    }
}

/// Right-nested `Trans` over a chain of derivations.
pub fn join_chain(goal: &ConstrainedEquation, chain: Vec<Derivation>) -> Option<Derivation> {
    let mut it = chain.into_iter().rev();
    let last = it.next()?;
    Some(it.fold(last, |acc, d| {
        let c = with_sides(goal, d.conclusion.lhs.clone(), acc.conclusion.rhs.clone());
        Derivation::node(RuleName::Trans, c, vec![d, acc])
    }))
}

struct Tree {
    nodes: Vec<Node<SymStep>>,
    index: HashMap<Term, usize>,
    frontier: Vec<usize>,
}

impl Tree {
    fn new(root: Term) -> Self {
        let mut index = HashMap::new();
        index.insert(root.clone(), 0);
        Tree {
            nodes: vec![(root, None, 0)],
            index,
            frontier: vec![0],
        }
    }

    fn path(&self, mut i: usize) -> Vec<(Term, Term, SymStep)> {
        let mut out = Vec::new();
        while let Some((p, st)) = &self.nodes[i].1 {
            out.push((
                self.nodes[*p].0.clone(),
                self.nodes[i].0.clone(),
                st.clone(),
            ));
            i = *p;
        }
        out.reverse();
        out
    }
}

/// Heuristic proof search: rewrite both sides symbolically with instances of
/// the equations, close the remaining gap by Refl/Axiom/Cong, and fall back to
/// a case split when the logical variables range over a small finite carrier.
pub fn prove_heuristic(
    theory: &CETheory,
    oracle: &Oracle,
    ce: &ConstrainedEquation,
    opts: &SearchOptions,
) -> Result<Option<Derivation>, OracleError> {
    let found = search_chain(theory, oracle, ce, opts)?;
    let found = match found {
        Some(d) => Some(d),
        None => case_split(theory, oracle, ce, opts)?,
    };
    if let Some(d) = found {
        if check_proof(theory, oracle, &d)?.is_accepted() {
            return Ok(Some(d));
        }
    }
    Ok(None)
}

fn search_chain(
    theory: &CETheory,
    oracle: &Oracle,
    ce: &ConstrainedEquation,
    opts: &SearchOptions,
) -> Result<Option<Derivation>, OracleError> {
    if let Some(d) = close_gap(theory, oracle, ce, &ce.lhs, &ce.rhs)? {
        return Ok(Some(d));
    }
    let mut pools = Pools::new(theory, opts.pool_radius, &[&ce.lhs, &ce.rhs], &opts.seeds);
    let mut lits = BTreeSet::new();
    collect_literals(&ce.constraint, &mut lits);
    pools.add_values(lits);
    let cap = ce.lhs.size().max(ce.rhs.size()) + opts.size_slack;
    let mut pr = Prover {
        theory,
        oracle,
        goal: ce,
        pools,
        cap,
        oracle_cache: HashMap::new(),
    };
    let xs = &ce.logical_vars;
    let mut trees = [Tree::new(ce.lhs.clone()), Tree::new(ce.rhs.clone())];
    let mut buckets: [HashMap<Term, Vec<usize>>; 2] = [HashMap::new(), HashMap::new()];
    for k in 0..2 {
        buckets[k].insert(skeleton(&trees[k].nodes[0].0, xs), vec![0]);
    }
    let mut depths = [0usize, 0usize];
    let mut total = 2usize;
    while depths[0] + depths[1] < opts.proof_steps {
        let k = if trees[0].frontier.len() <= trees[1].frontier.len() {
            0
        } else {
            1
        };
        if trees[k].frontier.is_empty() {
            break;
        }
        let other = 1 - k;
        let frontier = std::mem::take(&mut trees[k].frontier);
        let mut next = Vec::new();
        for &n in &frontier {
            let u = trees[k].nodes[n].0.clone();
            for st in pr.steps(&u)? {
                if trees[k].index.contains_key(&st.result) {
                    continue;
                }
                let id = trees[k].nodes.len();
                let result = st.result.clone();
                trees[k]
                    .nodes
                    .push((result.clone(), Some((n, st)), depths[k] + 1));
                trees[k].index.insert(result.clone(), id);
                let sk = skeleton(&result, xs);
                buckets[k].entry(sk.clone()).or_default().push(id);
                let partners: Vec<usize> = buckets[other].get(&sk).cloned().unwrap_or_default();
                for j in partners {
                    let v = trees[other].nodes[j].0.clone();
                    let (a, b) = if k == 0 { (&result, &v) } else { (&v, &result) };
                    if let Some(gap) = close_gap(theory, oracle, ce, a, b)? {
                        let (fi, bi) = if k == 0 { (id, j) } else { (j, id) };
                        return Ok(Some(assemble(&pr, &trees, fi, bi, gap)));
                    }
                }
                next.push(id);
                total += 1;
                if total > opts.max_nodes {
                    return Ok(None);
                }
            }
        }
        depths[k] += 1;
        trees[k].frontier = next;
    }
    Ok(None)
}

fn assemble(pr: &Prover, trees: &[Tree; 2], fi: usize, bi: usize, gap: Derivation) -> Derivation {
    let goal = pr.goal;
    let mut chain = Vec::new();
    for (from, to, st) in trees[0].path(fi) {
        chain.push(pr.step_derivation(&from, &to, &st, st.direction));
    }
    if gap.conclusion.lhs != gap.conclusion.rhs {
        chain.push(gap);
    }
    for (from, to, st) in trees[1].path(bi).into_iter().rev() {
        chain.push(pr.step_derivation(&to, &from, &st, st.direction.flip()));
    }
    join_chain(goal, chain).unwrap_or_else(|| {
        Derivation::leaf(
            RuleName::Refl,
            with_sides(goal, goal.lhs.clone(), goal.lhs.clone()),
        )
    })
}

const MAX_CASES: usize = 64;

/// One ground proof per satisfying valuation, each abstracted back over the
/// logical variables and combined with `Split`.
fn case_split(
    theory: &CETheory,
    oracle: &Oracle,
    ce: &ConstrainedEquation,
    opts: &SearchOptions,
) -> Result<Option<Derivation>, OracleError> {
    let m = &theory.model;
    let xs = &ce.logical_vars;
    if xs.is_empty() || !ce.side_vars().is_subset(xs) {
        return Ok(None);
    }
    if !xs.iter().all(|x| {
        m.carrier(x.sort())
            .is_some_and(|c| matches!(c, crate::models::Carrier::Finite(_)))
    }) {
        return Ok(None);
    }
    let cases: Vec<Substitution> = m
        .enumerate_satisfying(xs, &ce.constraint, 0)
        .take(MAX_CASES + 1)
        .collect();
    if cases.is_empty() || cases.len() > MAX_CASES {
        return Ok(None);
    }
    let mut parts = Vec::new();
    for sigma in &cases {
        let ground = ConstrainedEquation {
            logical_vars: BTreeSet::new(),
            lhs: ce.lhs.apply(sigma),
            rhs: ce.rhs.apply(sigma),
            constraint: Term::bool(true),
        };
        let Some(d) = search_chain(theory, oracle, &ground, opts)? else {
            return Ok(None);
        };
        let case_phi = m.and_all(
            xs.iter()
                .map(|x| m.eq(Term::Var(x.clone()), sigma.image(x))),
        );
        let inst_phi = case_phi.apply(sigma);
        let weak = Derivation::node(
            RuleName::Weakening,
            ConstrainedEquation {
                constraint: inst_phi.clone(),
                ..ground.clone()
            },
            vec![d],
        );
        let enlarged = Derivation::node(
            RuleName::Enlarge,
            ConstrainedEquation {
                logical_vars: xs.clone(),
                constraint: inst_phi,
                ..ground.clone()
            },
            vec![weak],
        );
        let abst = Derivation::node(
            RuleName::Abst,
            ConstrainedEquation {
                logical_vars: xs.clone(),
                lhs: ce.lhs.clone(),
                rhs: ce.rhs.clone(),
                constraint: case_phi,
            },
            vec![enlarged],
        )
        .with_witness(sigma.clone());
        parts.push(abst);
    }
    let mut it = parts.into_iter().rev();
    let mut acc = it.next().expect("at least one case");
    for d in it {
        let phi = m.or(
            d.conclusion.constraint.clone(),
            acc.conclusion.constraint.clone(),
        );
        let c = ConstrainedEquation {
            constraint: phi,
            ..ce.clone()
        };
        acc = Derivation::node(RuleName::Split, c, vec![d, acc]);
    }
    if acc.conclusion.constraint != ce.constraint {
        acc = Derivation::node(RuleName::Weakening, ce.clone(), vec![acc]);
    }
    Ok(Some(acc))
}
