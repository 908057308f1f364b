// SPDX-License-Identifier: Apache-2.0

//! Decision procedure for quantifier-free linear integer constraints.
//!
//! The negated constraint is put in disjunctive normal form over linear
//! atoms; each conjunction is decided with the Omega test (exact equality
//! elimination, Fourier-Motzkin with dark and grey shadows). `mod`/`div` by a
//! literal are eliminated with fresh quotient and remainder variables. Other
//! non-linear subterms are treated as opaque integers, which keeps `Valid`
//! answers sound; models found under that abstraction are only reported
//! after they have been re-checked by evaluation.

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::models::{valuation_to_subst, UnderlyingModel, Value};
use crate::terms::{Sort, Substitution, Term, TheoryOp, Variable};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Valid,
    Invalid(Substitution),
    Inconclusive,
}

const MAX_CONJUNCTS: usize = 4096;

/// Decides validity of `phi` over the integers.
pub fn decide(model: &UnderlyingModel, phi: &Term) -> Decision {
    let mut cx = Translator::default();
    let Some(f) = cx.formula(phi) else {
        return Decision::Inconclusive;
    };
    let Some(dnf) = dnf(&f, false) else {
        return Decision::Inconclusive;
    };
    let mut inconclusive = false;
    for conj in dnf {
        let mut eqs = cx.definitions_eq.clone();
        let mut geqs = cx.definitions_geq.clone();
        let mut bools: BTreeMap<usize, bool> = BTreeMap::new();
        let mut clash = false;
        for lit in &conj {
            match lit {
                Lit::Bool(i, pol) => {
                    if bools.insert(*i, *pol).is_some_and(|old| old != *pol) {
                        clash = true;
                    }
                }
                Lit::Eq(l) => eqs.push(l.clone()),
                Lit::Geq(l) => geqs.push(l.clone()),
            }
        }
        if clash {
            continue;
        }
        let mut fresh = cx.next_var;
        let Some(sol) = omega(eqs, geqs, &mut fresh, 0) else {
            continue;
        };
        let mut rho: HashMap<Variable, Value> = HashMap::new();
        for (v, i) in &cx.int_vars {
            rho.insert(
                v.clone(),
                Value::Int(sol.get(i).cloned().unwrap_or_default()),
            );
        }
        for (v, i) in &cx.bool_vars {
            rho.insert(
                v.clone(),
                Value::Bool(bools.get(i).copied().unwrap_or(false)),
            );
        }
        if model.eval_with(phi, &rho) == Ok(Value::Bool(false)) {
            return Decision::Invalid(valuation_to_subst(&rho));
        }
        inconclusive = true;
    }
    if inconclusive {
        Decision::Inconclusive
    } else {
        Decision::Valid
    }
}

/// `Σ coeffs[v]·v + constant`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Lin {
    coeffs: BTreeMap<usize, BigInt>,
    constant: BigInt,
}

impl Lin {
    fn constant(c: BigInt) -> Self {
        Lin {
            coeffs: BTreeMap::new(),
            constant: c,
        }
    }

    fn var(i: usize) -> Self {
        Lin {
            coeffs: BTreeMap::from([(i, BigInt::one())]),
            constant: BigInt::zero(),
        }
    }

    fn is_const(&self) -> bool {
        self.coeffs.is_empty()
    }

    fn add(&self, other: &Lin) -> Lin {
        let mut out = self.clone();
        for (v, c) in &other.coeffs {
            let e = out.coeffs.entry(*v).or_default();
            *e += c;
            if e.is_zero() {
                out.coeffs.remove(v);
            }
        }
        out.constant += &other.constant;
        out
    }

    fn scale(&self, k: &BigInt) -> Lin {
        if k.is_zero() {
            return Lin::constant(BigInt::zero());
        }
        Lin {
            coeffs: self.coeffs.iter().map(|(v, c)| (*v, c * k)).collect(),
            constant: &self.constant * k,
        }
    }

    fn neg(&self) -> Lin {
        self.scale(&-BigInt::one())
    }

    fn sub(&self, other: &Lin) -> Lin {
        self.add(&other.neg())
    }

    fn coeff(&self, v: usize) -> BigInt {
        self.coeffs.get(&v).cloned().unwrap_or_default()
    }

    fn without(&self, v: usize) -> Lin {
        let mut out = self.clone();
        out.coeffs.remove(&v);
        out
    }

    /// Replaces variable `v` by the expression `e`.
    fn subst(&self, v: usize, e: &Lin) -> Lin {
        let c = self.coeff(v);
        if c.is_zero() {
            return self.clone();
        }
        self.without(v).add(&e.scale(&c))
    }

    fn eval(&self, m: &BTreeMap<usize, BigInt>) -> BigInt {
        let mut acc = self.constant.clone();
        for (v, c) in &self.coeffs {
            if let Some(x) = m.get(v) {
                acc += c * x;
            }
        }
        acc
    }
}

#[derive(Debug, Clone)]
enum Formula {
    Const(bool),
    Bool(usize),
    Eq(Lin),
    Geq(Lin),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

#[derive(Debug, Clone)]
enum Lit {
    Bool(usize, bool),
    Eq(Lin),
    Geq(Lin),
}

#[derive(Default)]
struct Translator {
    int_vars: BTreeMap<Variable, usize>,
    bool_vars: BTreeMap<Variable, usize>,
    opaque: HashMap<Term, usize>,
    divisions: HashMap<(Lin, BigInt), (usize, usize)>,
    definitions_eq: Vec<Lin>,
    definitions_geq: Vec<Lin>,
    next_var: usize,
}

impl Translator {
    fn fresh(&mut self) -> usize {
        self.next_var += 1;
        self.next_var - 1
    }

    fn formula(&mut self, t: &Term) -> Option<Formula> {
        match t {
            Term::Val(Value::Bool(b)) => Some(Formula::Const(*b)),
            Term::Var(v) if *v.sort() == Sort::bool() => {
                let i = match self.bool_vars.get(v) {
                    Some(i) => *i,
                    None => {
                        let i = self.fresh();
                        self.bool_vars.insert(v.clone(), i);
                        i
                    }
                };
                Some(Formula::Bool(i))
            }
            Term::App(f, args) => {
                let op = f.op()?;
                let bool_args = args
                    .first()
                    .map(|a| a.sort() == Sort::bool())
                    .unwrap_or(false);
                match op {
                    TheoryOp::Not => Some(Formula::Not(Box::new(self.formula(&args[0])?))),
                    TheoryOp::And => Some(Formula::And(vec![
                        self.formula(&args[0])?,
                        self.formula(&args[1])?,
                    ])),
                    TheoryOp::Or => Some(Formula::Or(vec![
                        self.formula(&args[0])?,
                        self.formula(&args[1])?,
                    ])),
                    TheoryOp::Implies => Some(Formula::Or(vec![
                        Formula::Not(Box::new(self.formula(&args[0])?)),
                        self.formula(&args[1])?,
                    ])),
                    TheoryOp::Iff | TheoryOp::Eq if bool_args => {
                        let a = self.formula(&args[0])?;
                        let b = self.formula(&args[1])?;
                        Some(Formula::Or(vec![
                            Formula::And(vec![a.clone(), b.clone()]),
                            Formula::And(vec![
                                Formula::Not(Box::new(a)),
                                Formula::Not(Box::new(b)),
                            ]),
                        ]))
                    }
                    TheoryOp::Eq | TheoryOp::Lt | TheoryOp::Le | TheoryOp::Gt | TheoryOp::Ge => {
                        let a = self.linear(&args[0])?;
                        let b = self.linear(&args[1])?;
                        let one = Lin::constant(BigInt::one());
                        Some(match op {
                            TheoryOp::Eq => Formula::Eq(a.sub(&b)),
                            TheoryOp::Lt => Formula::Geq(b.sub(&a).sub(&one)),
                            TheoryOp::Le => Formula::Geq(b.sub(&a)),
                            TheoryOp::Gt => Formula::Geq(a.sub(&b).sub(&one)),
                            _ => Formula::Geq(a.sub(&b)),
                        })
                    }
                    _ => None,
                }
            }
            _ => None,
        }
    }

    fn linear(&mut self, t: &Term) -> Option<Lin> {
        match t {
            Term::Val(Value::Int(i)) => Some(Lin::constant(i.clone())),
            Term::Var(v) if *v.sort() == Sort::int() => {
                let i = match self.int_vars.get(v) {
                    Some(i) => *i,
                    None => {
                        let i = self.fresh();
                        self.int_vars.insert(v.clone(), i);
                        i
                    }
                };
                Some(Lin::var(i))
            }
            Term::App(f, args) => match f.op()? {
                TheoryOp::Add => Some(self.linear(&args[0])?.add(&self.linear(&args[1])?)),
                TheoryOp::Sub => Some(self.linear(&args[0])?.sub(&self.linear(&args[1])?)),
                TheoryOp::Neg => Some(self.linear(&args[0])?.neg()),
                TheoryOp::Mul => {
                    let a = self.linear(&args[0])?;
                    let b = self.linear(&args[1])?;
                    if a.is_const() {
                        Some(b.scale(&a.constant))
                    } else if b.is_const() {
                        Some(a.scale(&b.constant))
                    } else {
                        Some(self.opaque(t))
                    }
                }
                op @ (TheoryOp::Mod | TheoryOp::Div) => {
                    let a = self.linear(&args[0])?;
                    let d = self.linear(&args[1])?;
                    if !d.is_const() {
                        return Some(self.opaque(t));
                    }
                    let k = d.constant;
                    if k.is_zero() {
                        return Some(if op == TheoryOp::Mod {
                            a
                        } else {
                            Lin::constant(BigInt::zero())
                        });
                    }
                    let (q, r) = self.division(a, k);
                    Some(Lin::var(if op == TheoryOp::Mod { r } else { q }))
                }
                _ => None,
            },
            _ => None,
        }
    }

    /// Fresh `q, r` with `a = k·q + r` and `0 <= r < |k|`.
    fn division(&mut self, a: Lin, k: BigInt) -> (usize, usize) {
        if let Some(qr) = self.divisions.get(&(a.clone(), k.clone())) {
            return *qr;
        }
        let q = self.fresh();
        let r = self.fresh();
        self.definitions_eq
            .push(a.sub(&Lin::var(q).scale(&k)).sub(&Lin::var(r)));
        self.definitions_geq.push(Lin::var(r));
        self.definitions_geq
            .push(Lin::constant(k.abs() - BigInt::one()).sub(&Lin::var(r)));
        self.divisions.insert((a, k), (q, r));
        (q, r)
    }

    fn opaque(&mut self, t: &Term) -> Lin {
        if let Some(i) = self.opaque.get(t) {
            return Lin::var(*i);
        }
        let i = self.fresh();
        self.opaque.insert(t.clone(), i);
        Lin::var(i)
    }
}

/// DNF of `f` (or of its negation when `positive` is false).
fn dnf(f: &Formula, positive: bool) -> Option<Vec<Vec<Lit>>> {
    let one = Lin::constant(BigInt::one());
    let out = match (f, positive) {
        (Formula::Const(b), p) => {
            if *b == p {
                vec![vec![]]
            } else {
                vec![]
            }
        }
        (Formula::Bool(i), p) => vec![vec![Lit::Bool(*i, p)]],
        (Formula::Eq(l), true) => vec![vec![Lit::Eq(l.clone())]],
        (Formula::Eq(l), false) => vec![
            vec![Lit::Geq(l.sub(&one))],
            vec![Lit::Geq(l.neg().sub(&one))],
        ],
        (Formula::Geq(l), true) => vec![vec![Lit::Geq(l.clone())]],
        (Formula::Geq(l), false) => vec![vec![Lit::Geq(l.neg().sub(&one))]],
        (Formula::Not(g), p) => return dnf(g, !p),
        (Formula::And(parts), true) | (Formula::Or(parts), false) => {
            let mut acc: Vec<Vec<Lit>> = vec![vec![]];
            for part in parts {
                let d = dnf(part, positive)?;
                let mut next = Vec::new();
                for a in &acc {
                    for b in &d {
                        let mut c = a.clone();
                        c.extend(b.iter().cloned());
                        next.push(c);
                    }
                }
                if next.len() > MAX_CONJUNCTS {
                    return None;
                }
                acc = next;
            }
            acc
        }
        (Formula::Or(parts), true) | (Formula::And(parts), false) => {
            let mut acc = Vec::new();
            for part in parts {
                acc.extend(dnf(part, positive)?);
                if acc.len() > MAX_CONJUNCTS {
                    return None;
                }
            }
            acc
        }
    };
    Some(out)
}

fn gcd_of(l: &Lin) -> BigInt {
    l.coeffs.values().fold(BigInt::zero(), |g, c| g.gcd(c))
}

/// Normalizes constraints; `None` when one is trivially false.
fn normalize(eqs: Vec<Lin>, geqs: Vec<Lin>) -> Option<(Vec<Lin>, Vec<Lin>)> {
    let mut out_eq = Vec::new();
    for e in eqs {
        if e.is_const() {
            if !e.constant.is_zero() {
                return None;
            }
            continue;
        }
        let g = gcd_of(&e);
        if !e.constant.is_multiple_of(&g) {
            return None;
        }
        out_eq.push(Lin {
            coeffs: e.coeffs.iter().map(|(v, c)| (*v, c / &g)).collect(),
            constant: &e.constant / &g,
        });
    }
    let mut out_geq: Vec<Lin> = Vec::new();
    for e in geqs {
        if e.is_const() {
            if e.constant.is_negative() {
                return None;
            }
            continue;
        }
        let g = gcd_of(&e);
        out_geq.push(Lin {
            coeffs: e.coeffs.iter().map(|(v, c)| (*v, c / &g)).collect(),
            constant: e.constant.div_floor(&g),
        });
    }
    out_geq.sort();
    out_geq.dedup();
    Some((out_eq, out_geq))
}

type Model = BTreeMap<usize, BigInt>;

fn fill_defaults(m: &mut Model, cons: &[Lin]) {
    for c in cons {
        for v in c.coeffs.keys() {
            m.entry(*v).or_default();
        }
    }
}

/// Integer satisfiability of `eqs = 0 ∧ geqs >= 0`, with a model.
fn omega(eqs: Vec<Lin>, geqs: Vec<Lin>, fresh: &mut usize, depth: usize) -> Option<Model> {
    if depth > 256 {
        return None;
    }
    let (eqs, geqs) = normalize(eqs, geqs)?;
    if let Some(idx) = pick_equality(&eqs) {
        let eq = eqs[idx].clone();
        let (v, a) = eq
            .coeffs
            .iter()
            .min_by(|x, y| x.1.abs().cmp(&y.1.abs()).then(x.0.cmp(y.0)))
            .map(|(v, c)| (*v, c.clone()))
            .expect("non-constant equality");
        let solved = a.abs().is_one();
        let def = if solved {
            // x_v = -(rest)/a and 1/a = a for a = ±1.
            eq.without(v).scale(&-a)
        } else {
            let (eq, a) = if a.is_negative() {
                (eq.neg(), -a)
            } else {
                (eq, a)
            };
            let t = *fresh;
            *fresh += 1;
            let mut def = Lin::var(t);
            for (u, c) in &eq.coeffs {
                if *u != v {
                    def = def.sub(&Lin::var(*u).scale(&c.div_floor(&a)));
                }
            }
            def.sub(&Lin::constant(eq.constant.div_floor(&a)))
        };
        let rest_eqs: Vec<Lin> = eqs
            .iter()
            .enumerate()
            .filter(|(i, _)| !(solved && *i == idx))
            .map(|(_, e)| e.subst(v, &def))
            .collect();
        let rest_geqs: Vec<Lin> = geqs.iter().map(|e| e.subst(v, &def)).collect();
        let mut m = omega(rest_eqs.clone(), rest_geqs.clone(), fresh, depth + 1)?;
        fill_defaults(&mut m, &rest_eqs);
        fill_defaults(&mut m, &rest_geqs);
        fill_defaults(&mut m, std::slice::from_ref(&def));
        let val = def.eval(&m);
        m.insert(v, val);
        return Some(m);
    }
    eliminate_inequalities(geqs, fresh, depth)
}

fn pick_equality(eqs: &[Lin]) -> Option<usize> {
    eqs.iter()
        .enumerate()
        .min_by_key(|(_, e)| e.coeffs.values().map(|c| c.abs()).min())
        .map(|(i, _)| i)
}

fn eliminate_inequalities(geqs: Vec<Lin>, fresh: &mut usize, depth: usize) -> Option<Model> {
    if geqs.is_empty() {
        return Some(Model::new());
    }
    let mut vars: BTreeMap<usize, (usize, usize, bool, bool)> = BTreeMap::new();
    for g in &geqs {
        for (v, c) in &g.coeffs {
            let e = vars.entry(*v).or_insert((0, 0, true, true));
            if c.is_positive() {
                e.0 += 1;
                e.2 &= c.is_one();
            } else {
                e.1 += 1;
                e.3 &= (-c).is_one();
            }
        }
    }
    // A variable bounded on one side only can always be satisfied.
    if let Some((&v, _)) = vars.iter().find(|(_, (lo, up, _, _))| *lo == 0 || *up == 0) {
        let (with, without): (Vec<Lin>, Vec<Lin>) =
            geqs.into_iter().partition(|g| !g.coeff(v).is_zero());
        let mut m = omega(Vec::new(), without.clone(), fresh, depth + 1)?;
        fill_defaults(&mut m, &without);
        fill_defaults(&mut m, &with);
        m.remove(&v);
        let x = choose_value(v, &with, &m);
        m.insert(v, x);
        return Some(m);
    }
    let (&v, &(_, _, lo_unit, up_unit)) = vars
        .iter()
        .min_by_key(|(_, (lo, up, lu, uu))| (!(*lu || *uu), lo * up))
        .expect("non-empty");
    let exact = lo_unit || up_unit;
    let (with, others): (Vec<Lin>, Vec<Lin>) =
        geqs.iter().cloned().partition(|g| !g.coeff(v).is_zero());
    let lowers: Vec<(BigInt, Lin)> = with
        .iter()
        .filter(|g| g.coeff(v).is_positive())
        .map(|g| (g.coeff(v), g.without(v)))
        .collect();
    let uppers: Vec<(BigInt, Lin)> = with
        .iter()
        .filter(|g| g.coeff(v).is_negative())
        .map(|g| (-g.coeff(v), g.without(v)))
        .collect();
    let shadow = |dark: bool| -> Vec<Lin> {
        let mut out = others.clone();
        for (a, e) in &lowers {
            for (b, f) in &uppers {
                // a·x + e >= 0 and -b·x + f >= 0 give a·f + b·e >= 0.
                let mut c = f.scale(a).add(&e.scale(b));
                if dark {
                    let slack = (a - BigInt::one()) * (b - BigInt::one());
                    c = c.sub(&Lin::constant(slack));
                }
                out.push(c);
            }
        }
        out
    };
    let finish = |mut m: Model, fresh_cons: &[Lin]| -> Model {
        fill_defaults(&mut m, fresh_cons);
        fill_defaults(&mut m, &with);
        m.remove(&v);
        let x = choose_value(v, &with, &m);
        m.insert(v, x);
        m
    };
    if exact {
        let real = shadow(false);
        let m = omega(Vec::new(), real.clone(), fresh, depth + 1)?;
        return Some(finish(m, &real));
    }
    let dark = shadow(true);
    if let Some(m) = omega(Vec::new(), dark.clone(), fresh, depth + 1) {
        return Some(finish(m, &dark));
    }
    let real = shadow(false);
    omega(Vec::new(), real, fresh, depth + 1)?;
    let b_max = uppers
        .iter()
        .map(|(b, _)| b.clone())
        .max()
        .expect("two-sided");
    for (a, e) in &lowers {
        let limit = (a * &b_max - a - &b_max).div_floor(&b_max);
        let mut i = BigInt::zero();
        while i <= limit {
            let eq = Lin::var(v).scale(a).add(e).sub(&Lin::constant(i.clone()));
            if let Some(m) = omega(vec![eq], geqs.clone(), fresh, depth + 1) {
                return Some(m);
            }
            i += 1;
        }
    }
    None
}

/// Smallest admissible value for `v` given the others (largest if only
/// upper bounds exist).
fn choose_value(v: usize, cons: &[Lin], m: &Model) -> BigInt {
    let mut lo: Option<BigInt> = None;
    let mut hi: Option<BigInt> = None;
    for c in cons {
        let a = c.coeff(v);
        let rest = c.without(v).eval(m);
        if a.is_positive() {
            // a·x >= -rest
            let b = (-rest).div_ceil(&a);
            lo = Some(lo.map_or(b.clone(), |l| l.max(b)));
        } else if a.is_negative() {
            // |a|·x <= rest
            let b = rest.div_floor(&-a);
            hi = Some(hi.map_or(b.clone(), |h| h.min(b)));
        }
    }
    match (lo, hi) {
        (Some(l), _) => l,
        (None, Some(h)) => h,
        (None, None) => BigInt::zero(),
    }
}
