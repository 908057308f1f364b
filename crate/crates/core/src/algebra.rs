// SPDX-License-Identifier: Apache-2.0

//! Finite algebras extending the underlying model: model checking,
//! counter-model search, quotients and value consistency.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::models::{Carrier, UnderlyingModel};
use crate::rewriting::{explore, CETheory, ConstrainedEquation, ConversionTrace, Pools};
use crate::sexp::{self, Sexp, Span};
use crate::syntax::{err, parse_int, ErrorKind, SyntaxError};
use crate::terms::{FunSymbol, Signature, Sort, Term, Value, Variable};

/// A carrier element: a model value or a fresh element such as `#b1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Element {
    Val(Value),
    Fresh(Arc<str>),
}

impl Element {
    pub fn is_value(&self) -> bool {
        matches!(self, Element::Val(_))
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Element::Val(v) => write!(f, "{v}"),
            Element::Fresh(n) => f.write_str(n),
        }
    }
}

pub type Valuation = BTreeMap<Variable, Element>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("uncovered-variable: {0}")]
    UncoveredVariable(String),
    #[error("not-a-congruence: {0}")]
    NotACongruence(String),
    #[error("invalid algebra: {0}")]
    Invalid(String),
}

/// Tables are explicit for term symbols. Theory symbols follow the model on
/// value arguments; entries with a fresh argument are explicit or default to
/// the first carrier element of the result sort. Equality compares carriers
/// and every table entry, explicit or not.
#[derive(Debug, Clone)]
pub struct FiniteCEAlgebra {
    pub model: UnderlyingModel,
    pub signature: Signature,
    pub carriers: BTreeMap<Sort, Vec<Element>>,
    pub tables: HashMap<Arc<FunSymbol>, BTreeMap<Vec<Element>, Element>>,
}

impl PartialEq for FiniteCEAlgebra {
    fn eq(&self, other: &Self) -> bool {
        self.model == other.model
            && self.signature == other.signature
            && self.carriers == other.carriers
            && self.signature.symbols().all(|f| {
                let doms: Vec<&[Element]> = f.arg_sorts().iter().map(|s| self.carrier(s)).collect();
                tuples(&doms)
                    .iter()
                    .all(|args| self.apply(f, args) == other.apply(f, args))
            })
    }
}

impl Eq for FiniteCEAlgebra {}

fn tuples(domains: &[&[Element]]) -> Vec<Vec<Element>> {
    let mut out = vec![Vec::new()];
    for d in domains {
        let mut next = Vec::with_capacity(out.len() * d.len());
        for prefix in &out {
            for e in d.iter() {
                let mut t = prefix.clone();
                t.push(e.clone());
                next.push(t);
            }
        }
        out = next;
    }
    out
}

impl FiniteCEAlgebra {
    pub fn carrier(&self, sort: &Sort) -> &[Element] {
        self.carriers.get(sort).map(Vec::as_slice).unwrap_or(&[])
    }

    /// The model's own values in the carrier of `sort`.
    pub fn model_part(&self, sort: &Sort) -> Vec<Element> {
        self.carrier(sort)
            .iter()
            .filter(|e| e.is_value())
            .cloned()
            .collect()
    }

    pub fn size(&self) -> usize {
        self.carriers.values().map(Vec::len).sum()
    }

    fn default_of(&self, sort: &Sort) -> Element {
        self.carrier(sort)
            .first()
            .cloned()
            .unwrap_or(Element::Val(Value::Bool(false)))
    }

    pub fn apply(&self, f: &Arc<FunSymbol>, args: &[Element]) -> Element {
        if let Some(op) = f.op() {
            if args.iter().all(Element::is_value) {
                let vs: Vec<Value> = args
                    .iter()
                    .map(|e| match e {
                        Element::Val(v) => v.clone(),
                        Element::Fresh(_) => unreachable!(),
                    })
                    .collect();
                return Element::Val(self.model.apply(op, &vs));
            }
        }
        self.tables
            .get(f)
            .and_then(|t| t.get(args))
            .cloned()
            .unwrap_or_else(|| self.default_of(f.result_sort()))
    }

    /// Homomorphic evaluation.
    pub fn eval(&self, t: &Term, rho: &Valuation) -> Result<Element, AlgebraError> {
        match t {
            Term::Var(v) => rho
                .get(v)
                .cloned()
                .ok_or_else(|| AlgebraError::UncoveredVariable(v.name().to_string())),
            Term::Val(v) => Ok(Element::Val(v.clone())),
            Term::App(f, args) => {
                let vs = args
                    .iter()
                    .map(|a| self.eval(a, rho))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(self.apply(f, &vs))
            }
        }
    }

    /// Every tuple of every symbol maps into the result carrier, and term
    /// symbol tables are total.
    pub fn validate(&self) -> Result<(), AlgebraError> {
        for s in self.signature.sorts() {
            if self.carrier(s).is_empty() && !(s.is_theory() && self.model.carrier(s).is_none()) {
                return Err(AlgebraError::Invalid(format!("empty carrier for {s}")));
            }
        }
        for (s, c) in &self.carriers {
            if let Some(Carrier::Finite(vs)) = self.model.carrier(s) {
                if let Some(v) = vs.iter().find(|v| !c.contains(&Element::Val((*v).clone()))) {
                    return Err(AlgebraError::Invalid(format!("carrier of {s} lacks {v}")));
                }
            }
        }
        for f in self.signature.symbols() {
            let doms: Vec<&[Element]> = f.arg_sorts().iter().map(|s| self.carrier(s)).collect();
            let table = self.tables.get(f);
            for args in tuples(&doms) {
                if !f.is_theory() && table.and_then(|t| t.get(&args)).is_none() {
                    return Err(AlgebraError::Invalid(format!(
                        "table of {f} has no entry for {}",
                        elems_text(&args)
                    )));
                }
                let r = self.apply(f, &args);
                let res = f.result_sort();
                if !self.carrier(res).contains(&r)
                    && !(r.is_value()
                        && self.model.contains(match &r {
                            Element::Val(v) => v,
                            Element::Fresh(_) => unreachable!(),
                        }))
                {
                    return Err(AlgebraError::Invalid(format!(
                        "{f}{} = {r} lies outside the carrier of {res}",
                        elems_text(&args)
                    )));
                }
            }
        }
        Ok(())
    }
}

fn elems_text(es: &[Element]) -> String {
    let parts: Vec<String> = es.iter().map(Element::to_string).collect();
    format!("({})", parts.join(" "))
}

/// Variables of `ce`, with the logical ones restricted to model values.
fn valuations(a: &FiniteCEAlgebra, ce: &ConstrainedEquation) -> Vec<Valuation> {
    let mut vars: BTreeSet<Variable> = ce.vars();
    vars.extend(ce.logical_vars.iter().cloned());
    let vars: Vec<Variable> = vars.into_iter().collect();
    let doms: Vec<Vec<Element>> = vars
        .iter()
        .map(|v| {
            if ce.logical_vars.contains(v) {
                a.model_part(v.sort())
            } else {
                a.carrier(v.sort()).to_vec()
            }
        })
        .collect();
    let refs: Vec<&[Element]> = doms.iter().map(Vec::as_slice).collect();
    tuples(&refs)
        .into_iter()
        .map(|t| vars.iter().cloned().zip(t).collect())
        .collect()
}

fn is_true(e: &Element) -> bool {
    *e == Element::Val(Value::Bool(true))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelCheck {
    Valid,
    Invalid {
        equation: usize,
        valuation: Valuation,
    },
}

impl ModelCheck {
    pub fn is_valid(&self) -> bool {
        *self == ModelCheck::Valid
    }
}

fn refuting(
    a: &FiniteCEAlgebra,
    ce: &ConstrainedEquation,
) -> Result<Option<Valuation>, AlgebraError> {
    for rho in valuations(a, ce) {
        if is_true(&a.eval(&ce.constraint, &rho)?)
            && a.eval(&ce.lhs, &rho)? != a.eval(&ce.rhs, &rho)?
        {
            return Ok(Some(rho));
        }
    }
    Ok(None)
}

pub fn check_is_model(a: &FiniteCEAlgebra, theory: &CETheory) -> Result<ModelCheck, AlgebraError> {
    for (i, eq) in theory.equations.iter().enumerate() {
        if let Some(rho) = refuting(a, eq)? {
            return Ok(ModelCheck::Invalid {
                equation: i,
                valuation: rho,
            });
        }
    }
    Ok(ModelCheck::Valid)
}

/// A valuation under which `goal` fails in `a`, if any.
pub fn check_refutes(
    a: &FiniteCEAlgebra,
    goal: &ConstrainedEquation,
) -> Result<Option<Valuation>, AlgebraError> {
    refuting(a, goal)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CounterModelOutcome {
    Found {
        algebra: FiniteCEAlgebra,
        valuation: Valuation,
    },
    Exhausted {
        extra: usize,
        term_card: usize,
    },
}

/// Fresh element names for `sort`: `#b1`, `#b2`, ... for Bool, `#list1` for
/// a sort `List`.
fn fresh_names(sort: &Sort, n: usize) -> Vec<Element> {
    let stem = if *sort == Sort::bool() {
        "b".to_string()
    } else if *sort == Sort::int() {
        "i".to_string()
    } else {
        sort.name().to_lowercase()
    };
    (1..=n)
        .map(|i| Element::Fresh(Arc::from(format!("#{stem}{i}"))))
        .collect()
}

fn carriers_for(
    model: &UnderlyingModel,
    sig: &Signature,
    extra: usize,
    term_card: usize,
) -> BTreeMap<Sort, Vec<Element>> {
    let mut out = BTreeMap::new();
    for s in sig.sorts() {
        let c = if s.is_theory() {
            match model.carrier(s) {
                Some(Carrier::Finite(vs)) => {
                    let mut c: Vec<Element> = vs.into_iter().map(Element::Val).collect();
                    c.extend(fresh_names(s, extra));
                    c
                }
                _ => continue,
            }
        } else {
            fresh_names(s, term_card)
        };
        out.insert(s.clone(), c);
    }
    out
}

enum Eval {
    Done(Element),
    Missing(Arc<FunSymbol>, Vec<Element>),
}

struct Lazy<'a> {
    base: &'a FiniteCEAlgebra,
    steps: usize,
    budget: usize,
}

impl<'a> Lazy<'a> {
    fn eval(&self, a: &FiniteCEAlgebra, t: &Term, rho: &Valuation) -> Eval {
        match t {
            Term::Var(v) => Eval::Done(rho[v].clone()),
            Term::Val(v) => Eval::Done(Element::Val(v.clone())),
            Term::App(f, args) => {
                let mut vs = Vec::with_capacity(args.len());
                for x in args.iter() {
                    match self.eval(a, x, rho) {
                        Eval::Done(e) => vs.push(e),
                        m => return m,
                    }
                }
                let defined = (f.is_theory() && vs.iter().all(Element::is_value))
                    || a.tables.get(f).is_some_and(|t| t.contains_key(&vs));
                if defined {
                    Eval::Done(a.apply(f, &vs))
                } else {
                    Eval::Missing(f.clone(), vs)
                }
            }
        }
    }

    /// Whether `ce` holds under `rho`, or the first undefined entry needed.
    fn holds(
        &self,
        a: &FiniteCEAlgebra,
        ce: &ConstrainedEquation,
        rho: &Valuation,
    ) -> Result<bool, (Arc<FunSymbol>, Vec<Element>)> {
        let phi = match self.eval(a, &ce.constraint, rho) {
            Eval::Done(e) => e,
            Eval::Missing(f, args) => return Err((f, args)),
        };
        if !is_true(&phi) {
            return Ok(true);
        }
        let l = match self.eval(a, &ce.lhs, rho) {
            Eval::Done(e) => e,
            Eval::Missing(f, args) => return Err((f, args)),
        };
        let r = match self.eval(a, &ce.rhs, rho) {
            Eval::Done(e) => e,
            Eval::Missing(f, args) => return Err((f, args)),
        };
        Ok(l == r)
    }

    fn search(
        &mut self,
        a: &mut FiniteCEAlgebra,
        checks: &[(ConstrainedEquation, Valuation)],
        from: usize,
        goal: &ConstrainedEquation,
        goal_vals: &[Valuation],
    ) -> Option<Valuation> {
        self.steps += 1;
        if self.steps > self.budget {
            return None;
        }
        for (i, (ce, rho)) in checks.iter().enumerate().skip(from) {
            match self.holds(a, ce, rho) {
                Ok(true) => {}
                Ok(false) => return None,
                Err((f, args)) => return self.branch(a, f, args, checks, i, goal, goal_vals, 0),
            }
        }
        self.refute(a, goal, goal_vals, 0)
    }

    fn refute(
        &mut self,
        a: &mut FiniteCEAlgebra,
        goal: &ConstrainedEquation,
        goal_vals: &[Valuation],
        from: usize,
    ) -> Option<Valuation> {
        for (i, rho) in goal_vals.iter().enumerate().skip(from) {
            match self.holds(a, goal, rho) {
                Ok(true) => {}
                Ok(false) => return Some(rho.clone()),
                Err((f, args)) => {
                    if let Some(r) = self.branch(a, f, args, &[], 0, goal, goal_vals, i) {
                        return Some(r);
                    }
                }
            }
        }
        None
    }

    #[allow(clippy::too_many_arguments)]
    fn branch(
        &mut self,
        a: &mut FiniteCEAlgebra,
        f: Arc<FunSymbol>,
        args: Vec<Element>,
        checks: &[(ConstrainedEquation, Valuation)],
        check_from: usize,
        goal: &ConstrainedEquation,
        goal_vals: &[Valuation],
        goal_from: usize,
    ) -> Option<Valuation> {
        let options = self.base.carrier(f.result_sort()).to_vec();
        for v in options {
            a.tables
                .entry(f.clone())
                .or_default()
                .insert(args.clone(), v);
            let r = if checks.is_empty() {
                self.steps += 1;
                if self.steps > self.budget {
                    None
                } else {
                    self.refute(a, goal, goal_vals, goal_from)
                }
            } else {
                self.search(a, checks, check_from, goal, goal_vals)
            };
            if r.is_some() {
                return r;
            }
            a.tables
                .get_mut(&f)
                .expect("entry just added")
                .remove(&args);
        }
        None
    }
}

/// Table assignments tried before giving up at one carrier size.
pub const COUNTER_MODEL_BUDGET: usize = 2_000_000;

/// Searches carriers of increasing size (fresh elements per theory sort up to
/// `max_extra`, term sorts up to `term_card` elements) for an algebra that
/// validates the theory and refutes `goal`. Table entries are assigned only
/// when an evaluation first needs them; untouched entries keep the default.
pub fn search_counter_model(
    theory: &CETheory,
    goal: &ConstrainedEquation,
    max_extra: usize,
    term_card: usize,
) -> Result<CounterModelOutcome, AlgebraError> {
    let m = &theory.model;
    if !m.is_finite() {
        return Err(AlgebraError::Invalid(
            "counter-model search needs a finite underlying model (bool or intmod)".into(),
        ));
    }
    for card in 1..=term_card.max(1) {
        for extra in 0..=max_extra {
            let carriers = carriers_for(m, &theory.signature, extra, card);
            let base = FiniteCEAlgebra {
                model: m.clone(),
                signature: theory.signature.clone(),
                carriers,
                tables: HashMap::new(),
            };
            let mut checks = Vec::new();
            for eq in &theory.equations {
                for rho in valuations(&base, eq) {
                    checks.push((eq.clone(), rho));
                }
            }
            let goal_vals = valuations(&base, goal);
            let mut lazy = Lazy {
                base: &base,
                steps: 0,
                budget: COUNTER_MODEL_BUDGET,
            };
            let mut a = base.clone();
            if let Some(rho) = lazy.search(&mut a, &checks, 0, goal, &goal_vals) {
                complete_tables(&mut a);
                debug_assert!(check_is_model(&a, theory)
                    .map(|c| c.is_valid())
                    .unwrap_or(false));
                return Ok(CounterModelOutcome::Found {
                    algebra: a,
                    valuation: rho,
                });
            }
        }
    }
    Ok(CounterModelOutcome::Exhausted {
        extra: max_extra,
        term_card: term_card.max(1),
    })
}

/// Makes every term symbol table explicit, using the default where unset.
fn complete_tables(a: &mut FiniteCEAlgebra) {
    let syms: Vec<Arc<FunSymbol>> = a.signature.term_symbols().cloned().collect();
    for f in syms {
        let doms: Vec<Vec<Element>> = f
            .arg_sorts()
            .iter()
            .map(|s| a.carrier(s).to_vec())
            .collect();
        let refs: Vec<&[Element]> = doms.iter().map(Vec::as_slice).collect();
        let dflt = a.default_of(f.result_sort());
        let table = a.tables.entry(f.clone()).or_default();
        for args in tuples(&refs) {
            table.entry(args).or_insert_with(|| dflt.clone());
        }
    }
}

/// A partition of every carrier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteCongruence {
    pub classes: BTreeMap<Sort, Vec<Vec<Element>>>,
}

impl FiniteCongruence {
    pub fn identity(a: &FiniteCEAlgebra) -> Self {
        FiniteCongruence {
            classes: a
                .carriers
                .iter()
                .map(|(s, c)| (s.clone(), c.iter().map(|e| vec![e.clone()]).collect()))
                .collect(),
        }
    }
}

/// Class representatives: the model value of a class if it has one,
/// otherwise its first element.
fn representatives(
    a: &FiniteCEAlgebra,
    c: &FiniteCongruence,
) -> Result<BTreeMap<Sort, HashMap<Element, Element>>, AlgebraError> {
    let bad = AlgebraError::NotACongruence;
    let mut out = BTreeMap::new();
    for (s, carrier) in &a.carriers {
        let classes = c
            .classes
            .get(s)
            .ok_or_else(|| bad(format!("no partition for {s}")))?;
        let mut rep = HashMap::new();
        for class in classes {
            let values: Vec<&Element> = class.iter().filter(|e| e.is_value()).collect();
            if values.len() > 1 {
                return Err(bad(format!(
                    "{} and {} are distinct model values",
                    values[0], values[1]
                )));
            }
            let r = values.first().copied().or(class.first()).cloned();
            for e in class {
                if !carrier.contains(e) || rep.insert(e.clone(), r.clone().unwrap()).is_some() {
                    return Err(bad(format!("{e} is not in exactly one class of {s}")));
                }
            }
        }
        if rep.len() != carrier.len() {
            return Err(bad(format!("classes of {s} do not cover the carrier")));
        }
        out.insert(s.clone(), rep);
    }
    Ok(out)
}

pub fn quotient(
    a: &FiniteCEAlgebra,
    c: &FiniteCongruence,
) -> Result<FiniteCEAlgebra, AlgebraError> {
    let reps = representatives(a, c)?;
    let rep_of = |s: &Sort, e: &Element| {
        reps.get(s)
            .and_then(|m| m.get(e))
            .cloned()
            .unwrap_or_else(|| e.clone())
    };
    let mut tables: HashMap<Arc<FunSymbol>, BTreeMap<Vec<Element>, Element>> = HashMap::new();
    for f in a.signature.symbols() {
        let doms: Vec<&[Element]> = f.arg_sorts().iter().map(|s| a.carrier(s)).collect();
        let mut seen: HashMap<Vec<Element>, (Vec<Element>, Element)> = HashMap::new();
        for args in tuples(&doms) {
            let key: Vec<Element> = args
                .iter()
                .zip(f.arg_sorts())
                .map(|(e, s)| rep_of(s, e))
                .collect();
            let r = rep_of(f.result_sort(), &a.apply(f, &args));
            if let Some((other, r0)) = seen.get(&key) {
                if *r0 != r {
                    return Err(AlgebraError::NotACongruence(format!(
                        "{f}{} and {f}{} are related but map to {r0} and {r}",
                        elems_text(other),
                        elems_text(&args)
                    )));
                }
            } else {
                seen.insert(key.clone(), (args, r.clone()));
                if !f.is_theory() || !key.iter().all(Element::is_value) {
                    tables.entry(f.clone()).or_default().insert(key, r);
                }
            }
        }
    }
    let carriers = a
        .carriers
        .iter()
        .map(|(s, cs)| {
            let mut kept: Vec<Element> = Vec::new();
            for e in cs {
                let r = rep_of(s, e);
                if !kept.contains(&r) {
                    kept.push(r);
                }
            }
            (s.clone(), kept)
        })
        .collect();
    Ok(FiniteCEAlgebra {
        model: a.model.clone(),
        signature: a.signature.clone(),
        carriers,
        tables,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConsistencyReport {
    ConsistentUpTo(usize),
    InconsistentWitness {
        u: Value,
        v: Value,
        trace: ConversionTrace,
    },
}

/// Searches from every value of the theory's literals and pools for a
/// conversion reaching a different value within `depth` rule steps.
pub fn check_value_consistency(
    theory: &CETheory,
    depth: usize,
    pool_radius: i64,
    max_nodes: usize,
) -> ConsistencyReport {
    let pools = Pools::new(theory, pool_radius, &[], &[]);
    let mut starts: Vec<Value> = theory.literals().into_iter().collect();
    for vs in pools.values.values() {
        for v in vs {
            if !starts.contains(v) {
                starts.push(v.clone());
            }
        }
    }
    for u in starts {
        let start = Term::Val(u.clone());
        let mut stop = |t: &Term| t.as_value().is_some_and(|w| *w != u);
        if let Ok((end, trace)) = explore(theory, &start, &pools, depth, max_nodes, &mut stop) {
            let v = end.as_value().cloned().expect("stopped at a value");
            return ConsistencyReport::InconsistentWitness { u, v, trace };
        }
    }
    ConsistencyReport::ConsistentUpTo(depth)
}

fn sort_of_symbol(sig: &Signature, name: &str, arity: usize) -> Vec<Arc<FunSymbol>> {
    let mut out: Vec<Arc<FunSymbol>> = sig
        .symbols_named(name)
        .iter()
        .filter(|f| f.arity() == arity)
        .cloned()
        .collect();
    out.sort_by_key(|f| f.is_theory());
    out
}

fn parse_element(a: &FiniteCEAlgebra, sort: &Sort, at: &Sexp) -> Result<Element, SyntaxError> {
    let name = at
        .atom()
        .ok_or_else(|| err(ErrorKind::Parse, at, "expected an element"))?;
    let e = if name.starts_with('#') {
        Element::Fresh(Arc::from(name))
    } else if name == "true" || name == "false" {
        Element::Val(Value::Bool(name == "true"))
    } else if let Some(i) = parse_int(name) {
        Element::Val(Value::Int(i))
    } else {
        return Err(err(ErrorKind::Parse, at, format!("bad element {name}")));
    };
    if !a.carrier(sort).contains(&e) {
        return Err(err(
            ErrorKind::IllSorted,
            at,
            format!("{e} is not in the carrier of {sort}"),
        ));
    }
    Ok(e)
}

/// Reads `(algebra (carrier SORT elem...) ... (table f ((args...) result) ...) ...)`.
/// Carriers of finite theory sorts always include the model's values.
pub fn parse_algebra(theory: &CETheory, text: &str) -> Result<FiniteCEAlgebra, SyntaxError> {
    let form = sexp::parse_one(text)?;
    let items = form
        .list()
        .filter(|_| form.head() == Some("algebra"))
        .ok_or_else(|| err(ErrorKind::Parse, &form, "expected (algebra ...)"))?;
    let m = &theory.model;
    let sig = &theory.signature;
    let mut a = FiniteCEAlgebra {
        model: m.clone(),
        signature: sig.clone(),
        carriers: BTreeMap::new(),
        tables: HashMap::new(),
    };
    for s in sig.sorts() {
        if let Some(Carrier::Finite(vs)) = m.carrier(s) {
            a.carriers
                .insert(s.clone(), vs.into_iter().map(Element::Val).collect());
        }
    }
    for it in &items[1..] {
        if it.head() != Some("carrier") {
            continue;
        }
        let xs = it.list().unwrap();
        let sort_at = xs
            .get(1)
            .ok_or_else(|| err(ErrorKind::Parse, it, "expected (carrier SORT ...)"))?;
        let name = sort_at.atom().unwrap_or("");
        let sort = sig.sort(name).cloned().ok_or_else(|| {
            err(
                ErrorKind::UnknownSort,
                sort_at,
                format!("unknown sort {name}"),
            )
        })?;
        let entry = a.carriers.entry(sort.clone()).or_default();
        for e in &xs[2..] {
            let atom = e
                .atom()
                .ok_or_else(|| err(ErrorKind::Parse, e, "expected an element"))?;
            let el = if atom.starts_with('#') {
                Element::Fresh(Arc::from(atom))
            } else if sort.is_theory() {
                match (atom, parse_int(atom)) {
                    ("true", _) => Element::Val(Value::Bool(true)),
                    ("false", _) => Element::Val(Value::Bool(false)),
                    (_, Some(i)) => Element::Val(Value::Int(i)),
                    _ => return Err(err(ErrorKind::Parse, e, format!("bad element {atom}"))),
                }
            } else {
                return Err(err(ErrorKind::Parse, e, "term sort elements start with #"));
            };
            if let Element::Val(v) = &el {
                if v.sort() != sort || !m.contains(v) {
                    return Err(err(
                        ErrorKind::IllSorted,
                        e,
                        format!("{v} is not a value of {sort}"),
                    ));
                }
            }
            if !entry.contains(&el) {
                entry.push(el);
            }
        }
    }
    for it in &items[1..] {
        match it.head() {
            Some("carrier") => {}
            Some("table") => {
                let xs = it.list().unwrap();
                let name = xs
                    .get(1)
                    .and_then(Sexp::atom)
                    .ok_or_else(|| err(ErrorKind::Parse, it, "expected (table f ...)"))?;
                let arity = match xs.get(2).and_then(Sexp::list) {
                    Some(entry) => entry.first().and_then(Sexp::list).map_or(0, <[Sexp]>::len),
                    None => 0,
                };
                let cands = sort_of_symbol(sig, name, arity);
                if cands.is_empty() {
                    return Err(err(
                        ErrorKind::UnknownSymbol,
                        &xs[1],
                        format!("unknown symbol {name}/{arity}"),
                    ));
                }
                let mut last = None;
                let mut done = false;
                for f in cands {
                    match parse_table(&a, &f, &xs[2..]) {
                        Ok(t) => {
                            a.tables.insert(f, t);
                            done = true;
                            break;
                        }
                        Err(e) => last = Some(e),
                    }
                }
                if !done {
                    return Err(last.unwrap());
                }
            }
            _ => {
                return Err(err(
                    ErrorKind::Parse,
                    it,
                    "expected (carrier ...) or (table ...)",
                ))
            }
        }
    }
    a.validate().map_err(|e| SyntaxError {
        kind: ErrorKind::Invalid,
        span: form.span(),
        message: e.to_string(),
    })?;
    Ok(a)
}

fn parse_table(
    a: &FiniteCEAlgebra,
    f: &Arc<FunSymbol>,
    entries: &[Sexp],
) -> Result<BTreeMap<Vec<Element>, Element>, SyntaxError> {
    let mut t = BTreeMap::new();
    for e in entries {
        let pair = e
            .list()
            .filter(|p| p.len() == 2)
            .ok_or_else(|| err(ErrorKind::Parse, e, "expected ((args...) result)"))?;
        let args_at = pair[0]
            .list()
            .ok_or_else(|| err(ErrorKind::Parse, &pair[0], "expected (args...)"))?;
        if args_at.len() != f.arity() {
            return Err(err(
                ErrorKind::IllSorted,
                e,
                format!("{f} takes {} arguments", f.arity()),
            ));
        }
        let args = args_at
            .iter()
            .zip(f.arg_sorts())
            .map(|(x, s)| parse_element(a, s, x))
            .collect::<Result<Vec<_>, _>>()?;
        let res = parse_element(a, f.result_sort(), &pair[1])?;
        if f.is_theory() && args.iter().all(Element::is_value) {
            if a.apply(f, &args) != res {
                return Err(err(
                    ErrorKind::Invalid,
                    e,
                    format!("{f} is fixed by the model on values"),
                ));
            }
            continue;
        }
        t.insert(args, res);
    }
    Ok(t)
}

pub fn print_algebra(a: &FiniteCEAlgebra) -> String {
    let mut out = vec!["(algebra".to_string()];
    for (s, c) in &a.carriers {
        let es: Vec<String> = c.iter().map(Element::to_string).collect();
        out.push(format!("  (carrier {s} {})", es.join(" ")));
    }
    let mut syms: Vec<&Arc<FunSymbol>> = a.tables.keys().collect();
    syms.sort();
    for f in syms {
        let t = &a.tables[f];
        if t.is_empty() {
            continue;
        }
        let entries: Vec<String> = t
            .iter()
            .map(|(args, r)| format!("({} {r})", elems_text(args)))
            .collect();
        out.push(format!("  (table {f} {})", entries.join(" ")));
    }
    out.push(")".into());
    out.join("\n") + "\n"
}

pub fn valuation_text(rho: &Valuation) -> String {
    let parts: Vec<String> = rho
        .iter()
        .map(|(v, e)| format!("{} -> {e}", v.name()))
        .collect();
    format!("{{{}}}", parts.join(", "))
}

impl From<AlgebraError> for SyntaxError {
    fn from(e: AlgebraError) -> Self {
        SyntaxError {
            kind: ErrorKind::Invalid,
            span: Span::default(),
            message: e.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_goal, parse_theory};

    fn load(name: &str) -> crate::syntax::TheoryFile {
        let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
        parse_theory(&std::fs::read_to_string(path).unwrap()).unwrap()
    }

    #[test]
    fn bullet_counter_model() {
        let tf = load("bullet.th");
        let th = &tf.theory;
        let goal = tf.goal("open").unwrap();
        let out = search_counter_model(th, goal, 1, 1).unwrap();
        let CounterModelOutcome::Found { algebra, valuation } = out else {
            panic!("no counter-model");
        };
        assert!(check_is_model(&algebra, th).unwrap().is_valid());
        let x = valuation.values().next().unwrap();
        assert!(!x.is_value());
        assert!(check_refutes(&algebra, tf.goal("closed").unwrap())
            .unwrap()
            .is_none());
        let text = print_algebra(&algebra);
        assert_eq!(parse_algebra(th, &text).unwrap(), algebra, "{text}");
    }

    #[test]
    fn members_are_never_refuted() {
        let tf = load("bullet.th");
        for eq in &tf.theory.equations {
            let out = search_counter_model(&tf.theory, eq, 1, 1).unwrap();
            assert!(matches!(out, CounterModelOutcome::Exhausted { .. }));
        }
    }

    #[test]
    fn quotient_rejects_merging_values() {
        let tf = load("bullet.th");
        let CounterModelOutcome::Found { algebra, .. } =
            search_counter_model(&tf.theory, tf.goal("open").unwrap(), 1, 1).unwrap()
        else {
            panic!()
        };
        let id = FiniteCongruence::identity(&algebra);
        assert_eq!(quotient(&algebra, &id).unwrap(), algebra);
        let mut merged = id.clone();
        merged.classes.insert(
            Sort::bool(),
            vec![
                vec![
                    Element::Val(Value::Bool(false)),
                    Element::Val(Value::Bool(true)),
                ],
                vec![Element::Fresh(Arc::from("#b1"))],
            ],
        );
        assert!(matches!(
            quotient(&algebra, &merged),
            Err(AlgebraError::NotACongruence(_))
        ));
    }

    #[test]
    fn inconsistent_theory_has_witness() {
        let tf = load("inconsistent.th");
        match check_value_consistency(&tf.theory, 2, 8, 10_000) {
            ConsistencyReport::InconsistentWitness { u, v, trace } => {
                assert_eq!((u, v), (Value::int(0), Value::int(1)));
                assert_eq!(trace.rule_steps(), 2);
            }
            other => panic!("{other:?}"),
        }
        let goal = parse_goal(&tf, "a a").unwrap();
        let tf2 = load("inconsistent.th");
        assert!(search_counter_model(&tf2.theory, &goal, 1, 1).is_err());
    }
}
