// SPDX-License-Identifier: Apache-2.0

//! Fixtures, theories and seeded generators shared by the integration tests.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::Arc;

use lcre::models::{Oracle, UnderlyingModel};
use lcre::proofs::{check_proof, Derivation, RuleName};
use lcre::rewriting::{check_ce_validity, ConstrainedEquation, SearchOptions, ValidityStatus};
use lcre::syntax::{parse_theory, TheoryFile};
use lcre::terms::{FunSymbol, Sort, SortKind, Substitution, Term, TheoryOp, Value, Variable};
use proptest::test_runner::{Config, RngSeed};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub mod lemmas;

pub const SEED: u64 = 0x5eed;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn proptest_config(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(SEED),
        failure_persistence: None,
        ..Config::default()
    }
}

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn load(name: &str) -> TheoryFile {
    theory(&fixture_text(name))
}

pub fn theory(text: &str) -> TheoryFile {
    parse_theory(text).unwrap_or_else(|e| panic!("theory does not parse: {e}"))
}

/// Integers modulo 3 with a counter that collapses to `k` and two symbols
/// identified everywhere.
pub const MOD3: &str = "
(model (intmod 3))
(sort T)
(fun c (Int) T)
(fun k () T)
(fun s (T) T)
(fun f (T) T)
(fun g (T) T)
(vars (x Int) (y Int) (z Int) (u T) (v T))
(eq (constraint (= x 0)) (s (c x)) k)
(eq (constraint (= y (+ x 1))) (s (c y)) (s (c x)))
(eq (f u) (g u))
(eq (pi x) (g (c x)) (c (* x x)))
";

/// Booleans with an injection `h`, a projection `p` and a commutative pairing.
pub const BOOL: &str = "
(model bool)
(sort T)
(fun h (Bool) T)
(fun p (T) Bool)
(fun a () T)
(fun q (T T) T)
(vars (x Bool) (y Bool) (z Bool) (u T) (v T))
(eq (constraint (= x true)) (h x) a)
(eq (pi x) (p (h x)) (not x))
(eq (q u v) (q v u))
(eq (pi x y) (q (h x) (h y)) (h (and x y)))
";

/// Integer contexts without equations.
pub const LIA_CTX: &str = "
(model lia)
(sort T)
(fun f (Int) T)
(fun g (T T) T)
(fun h (Int Int) Int)
(fun k () T)
(vars (x Int) (y Int) (z Int) (w Int) (u T))
";

pub fn var(tf: &TheoryFile, name: &str) -> Variable {
    tf.vars[name].clone()
}

pub fn sym(tf: &TheoryFile, name: &str) -> Arc<FunSymbol> {
    tf.theory
        .signature
        .term_symbols()
        .find(|f| f.name() == name)
        .cloned()
        .unwrap_or_else(|| panic!("no symbol {name}"))
}

pub fn app(tf: &TheoryFile, name: &str, args: Vec<Term>) -> Term {
    Term::app(sym(tf, name), args).expect("well-sorted")
}

pub fn theory_vars(tf: &TheoryFile) -> Vec<Variable> {
    tf.vars
        .values()
        .filter(|v| v.is_theory())
        .cloned()
        .collect()
}

pub fn term_vars(tf: &TheoryFile) -> Vec<Variable> {
    tf.vars
        .values()
        .filter(|v| !v.is_theory())
        .cloned()
        .collect()
}

pub fn subset<T: Clone>(rng: &mut ChaCha8Rng, xs: &[T], p: f64) -> Vec<T> {
    xs.iter().filter(|_| rng.gen_bool(p)).cloned().collect()
}

fn small_values(m: &UnderlyingModel, sort: &Sort) -> Vec<Value> {
    m.sort_values(sort, 3)
}

/// A random theory term of `sort` over `vars`. Products over the integers
/// keep a literal factor so the result stays linear.
pub fn theory_term(
    rng: &mut ChaCha8Rng,
    m: &UnderlyingModel,
    sort: &Sort,
    vars: &[Variable],
    depth: usize,
) -> Term {
    let mut leaves: Vec<Term> = vars
        .iter()
        .filter(|v| v.sort() == sort)
        .cloned()
        .map(Term::Var)
        .collect();
    leaves.extend(small_values(m, sort).into_iter().map(Term::Val));
    if depth == 0 || rng.gen_bool(0.35) {
        return leaves.choose(rng).cloned().expect("theory sort has values");
    }
    let sub = |rng: &mut ChaCha8Rng, s: &Sort| theory_term(rng, m, s, vars, depth - 1);
    if *sort == Sort::int() {
        match rng.gen_range(0..4) {
            0 => m.mk(TheoryOp::Add, vec![sub(rng, sort), sub(rng, sort)]),
            1 => m.mk(TheoryOp::Sub, vec![sub(rng, sort), sub(rng, sort)]),
            2 => m.mk(TheoryOp::Neg, vec![sub(rng, sort)]),
            _ => {
                let c = Term::Val(small_values(m, sort).choose(rng).cloned().unwrap());
                m.mk(TheoryOp::Mul, vec![c, sub(rng, sort)])
            }
        }
    } else {
        let int = Sort::int();
        match rng.gen_range(0..4) {
            0 => m.not(sub(rng, sort)),
            1 => m.mk(TheoryOp::And, vec![sub(rng, sort), sub(rng, sort)]),
            2 => m.or(sub(rng, sort), sub(rng, sort)),
            _ if m.has_int() => m.eq(sub(rng, &int), sub(rng, &int)),
            _ => m.eq(sub(rng, sort), sub(rng, sort)),
        }
    }
}

/// A random atom over `vars` usable as a constraint.
pub fn atom(rng: &mut ChaCha8Rng, m: &UnderlyingModel, vars: &[Variable]) -> Term {
    let th: Vec<Variable> = vars.iter().filter(|v| v.is_theory()).cloned().collect();
    let int = Sort::int();
    if m.has_int() && rng.gen_bool(0.7) {
        let a = theory_term(rng, m, &int, &th, 1);
        let b = theory_term(rng, m, &int, &th, 0);
        if rng.gen_bool(0.6) {
            m.eq(a, b)
        } else {
            m.not(m.eq(a, b))
        }
    } else {
        theory_term(rng, m, &Sort::bool(), &th, 2)
    }
}

/// A random term of `sort` built from term symbols, theory terms and `vars`.
pub fn any_term(
    rng: &mut ChaCha8Rng,
    tf: &TheoryFile,
    sort: &Sort,
    vars: &[Variable],
    depth: usize,
) -> Term {
    let m = &tf.theory.model;
    let syms: Vec<Arc<FunSymbol>> = tf
        .theory
        .signature
        .term_symbols()
        .filter(|f| f.result_sort() == sort)
        .cloned()
        .collect();
    if sort.is_theory() && (syms.is_empty() || rng.gen_bool(0.5)) {
        return theory_term(rng, m, sort, vars, depth.min(2));
    }
    let mut leaves: Vec<Term> = vars
        .iter()
        .filter(|v| v.sort() == sort)
        .cloned()
        .map(Term::Var)
        .collect();
    leaves.extend(
        syms.iter()
            .filter(|f| f.arity() == 0)
            .cloned()
            .map(Term::constant),
    );
    let inner: Vec<&Arc<FunSymbol>> = syms.iter().filter(|f| f.arity() > 0).collect();
    if inner.is_empty()
        || (depth == 0 && !leaves.is_empty())
        || (!leaves.is_empty() && rng.gen_bool(0.3))
    {
        return leaves
            .choose(rng)
            .cloned()
            .expect("sort is inhabited by a leaf");
    }
    let f = (*inner.choose(rng).unwrap()).clone();
    let args = f
        .arg_sorts()
        .iter()
        .map(|s| any_term(rng, tf, s, vars, depth.saturating_sub(1)))
        .collect();
    Term::app(f, args).expect("well-sorted")
}

pub fn ce(
    xs: impl IntoIterator<Item = Variable>,
    lhs: Term,
    rhs: Term,
    phi: Term,
) -> Option<ConstrainedEquation> {
    ConstrainedEquation::new(xs.into_iter().collect(), lhs, rhs, phi).ok()
}

pub fn sides_size(c: &ConstrainedEquation) -> usize {
    c.lhs.size().max(c.rhs.size())
}

/// Seeded generator of checker-accepted derivations. Most steps are built to
/// satisfy their side conditions; a share use arbitrary constraints, images
/// or axioms and rely on the checker to filter them.
pub struct DerivationGen<'a> {
    pub tf: &'a TheoryFile,
    pub oracle: Oracle,
    pub rng: ChaCha8Rng,
    pub pool: Vec<Derivation>,
    pub attempts: usize,
    pub rejected: usize,
    th_vars: Vec<Variable>,
    all_vars: Vec<Variable>,
}

const MAX_SIDE: usize = 14;
const MAX_NODES: usize = 40;
const MAX_RULE_LEAVES: usize = 6;

impl<'a> DerivationGen<'a> {
    pub fn new(tf: &'a TheoryFile, seed: u64) -> Self {
        let pool = tf
            .theory
            .equations
            .iter()
            .map(|e| Derivation::leaf(RuleName::Rule, e.clone()))
            .collect();
        DerivationGen {
            tf,
            oracle: tf.theory.oracle(),
            rng: rng(seed),
            pool,
            attempts: 0,
            rejected: 0,
            th_vars: theory_vars(tf),
            all_vars: tf.vars.values().cloned().collect(),
        }
    }

    fn model(&self) -> &UnderlyingModel {
        &self.tf.theory.model
    }

    fn pick(&mut self) -> Derivation {
        let n = self.pool.len();
        // Favour recent derivations so that deeper trees appear.
        let i = if self.rng.gen_bool(0.6) {
            self.rng.gen_range(n.saturating_sub(12)..n)
        } else {
            self.rng.gen_range(0..n)
        };
        self.pool[i].clone()
    }

    fn loose(&mut self) -> bool {
        self.rng.gen_bool(0.25)
    }

    fn within_caps(d: &Derivation) -> bool {
        d.size() <= MAX_NODES
            && d.count(RuleName::Rule) <= MAX_RULE_LEAVES
            && d.nodes().iter().all(|(_, n)| {
                sides_size(&n.conclusion) <= MAX_SIDE && n.conclusion.constraint.size() <= 24
            })
    }

    /// Next accepted derivation; it is also added to the pool.
    pub fn next(&mut self) -> Derivation {
        loop {
            self.attempts += 1;
            let Some(d) = self.attempt() else { continue };
            if !Self::within_caps(&d) {
                continue;
            }
            match check_proof(&self.tf.theory, &self.oracle, &d) {
                Ok(r) if r.is_accepted() => {
                    self.pool.push(d.clone());
                    return d;
                }
                _ => self.rejected += 1,
            }
        }
    }

    fn attempt(&mut self) -> Option<Derivation> {
        match self.rng.gen_range(0..12) {
            0 => self.refl(),
            1 => self.trans(),
            2 => self.sym(),
            3 => self.cong(),
            4 => self.rule(),
            5 => self.theory_instance(),
            6 => self.general_instance(),
            7 => self.weakening(),
            8 => self.split(),
            9 => self.axiom(),
            10 => self.abst(),
            _ => self.enlarge(),
        }
    }

    fn random_sort(&mut self) -> Sort {
        let sorts: Vec<Sort> = self.tf.theory.signature.sorts().cloned().collect();
        sorts.choose(&mut self.rng).cloned().unwrap()
    }

    fn refl(&mut self) -> Option<Derivation> {
        let sort = self.random_sort();
        let all = self.all_vars.clone();
        let t = any_term(&mut self.rng, self.tf, &sort, &all, 2);
        let th = self.th_vars.clone();
        let xs = subset(&mut self.rng, &th, 0.5);
        let phi = if self.rng.gen_bool(0.5) {
            Term::bool(true)
        } else {
            atom(&mut self.rng, &self.tf.theory.model, &xs)
        };
        Some(Derivation::leaf(RuleName::Refl, ce(xs, t.clone(), t, phi)?))
    }

    fn rule(&mut self) -> Option<Derivation> {
        let e = self.tf.theory.equations.choose(&mut self.rng)?.clone();
        Some(Derivation::leaf(RuleName::Rule, e))
    }

    fn axiom(&mut self) -> Option<Derivation> {
        let th = self.th_vars.clone();
        let xs = subset(&mut self.rng, &th, 0.6);
        let m = self.model().clone();
        let sort = if m.has_int() && self.rng.gen_bool(0.7) {
            Sort::int()
        } else {
            Sort::bool()
        };
        let s = theory_term(&mut self.rng, &m, &sort, &xs, 2);
        let t = theory_term(&mut self.rng, &m, &sort, &xs, 2);
        let phi = if self.loose() {
            atom(&mut self.rng, &m, &xs)
        } else {
            m.eq(s.clone(), t.clone())
        };
        Some(Derivation::leaf(RuleName::Axiom, ce(xs, s, t, phi)?))
    }

    fn sym(&mut self) -> Option<Derivation> {
        let d = self.pick();
        Some(Derivation::node(
            RuleName::Sym,
            d.conclusion.swapped(),
            vec![d],
        ))
    }

    fn trans(&mut self) -> Option<Derivation> {
        let d1 = self.pick();
        let c1 = d1.conclusion.clone();
        let matching: Vec<&Derivation> = self
            .pool
            .iter()
            .filter(|d| {
                let c = &d.conclusion;
                c.lhs == c1.rhs
                    && c.logical_vars == c1.logical_vars
                    && c.constraint == c1.constraint
            })
            .collect();
        let d2 = match matching.choose(&mut self.rng) {
            Some(d) => (*d).clone(),
            None => Derivation::node(RuleName::Sym, c1.swapped(), vec![d1.clone()]),
        };
        let c = ce(
            c1.logical_vars.clone(),
            c1.lhs.clone(),
            d2.conclusion.rhs.clone(),
            c1.constraint.clone(),
        )?;
        Some(Derivation::node(RuleName::Trans, c, vec![d1, d2]))
    }

    fn cong(&mut self) -> Option<Derivation> {
        let d = self.pick();
        let c = d.conclusion.clone();
        let sort = c.lhs.sort();
        let fs: Vec<Arc<FunSymbol>> = self
            .tf
            .theory
            .signature
            .symbols()
            .filter(|f| f.arg_sorts().contains(&sort) && (f.op().is_some() || !f.is_theory()))
            .cloned()
            .collect();
        let f = fs.choose(&mut self.rng)?.clone();
        let holes: Vec<usize> = (0..f.arity())
            .filter(|&i| f.arg_sorts()[i] == sort)
            .collect();
        let hole = *holes.choose(&mut self.rng)?;
        let mut vars: Vec<Variable> = c.vars().into_iter().collect();
        vars.extend(c.logical_vars.iter().cloned());
        let mut ls = Vec::new();
        let mut rs = Vec::new();
        let mut premises = Vec::new();
        for (i, s) in f.arg_sorts().iter().enumerate() {
            if i == hole {
                ls.push(c.lhs.clone());
                rs.push(c.rhs.clone());
                premises.push(d.clone());
            } else {
                let t = any_term(&mut self.rng, self.tf, s, &vars, 1);
                ls.push(t.clone());
                rs.push(t.clone());
                premises.push(Derivation::leaf(
                    RuleName::Refl,
                    ce(c.logical_vars.clone(), t.clone(), t, c.constraint.clone())?,
                ));
            }
        }
        let concl = ce(
            c.logical_vars.clone(),
            Term::app(f.clone(), ls).ok()?,
            Term::app(f, rs).ok()?,
            c.constraint.clone(),
        )?;
        Some(Derivation::node(RuleName::Cong, concl, premises))
    }

    fn theory_instance(&mut self) -> Option<Derivation> {
        let d = self.pick();
        let c = d.conclusion.clone();
        let th = self.th_vars.clone();
        let xs = subset(&mut self.rng, &th, 0.5);
        let m = self.model().clone();
        let loose = self.loose();
        let mut sigma = Substitution::new();
        for y in &c.logical_vars {
            let img = if loose && self.rng.gen_bool(0.5) {
                let all = self.all_vars.clone();
                any_term(&mut self.rng, self.tf, y.sort(), &all, 1)
            } else {
                theory_term(&mut self.rng, &m, y.sort(), &xs, 1)
            };
            sigma.insert(y.clone(), img).ok()?;
        }
        for u in c.vars() {
            if !u.is_theory() && self.rng.gen_bool(0.3) {
                let all = self.all_vars.clone();
                let img = any_term(&mut self.rng, self.tf, u.sort(), &all, 1);
                sigma.insert(u, img).ok()?;
            }
        }
        let concl = ce(
            xs,
            c.lhs.apply(&sigma),
            c.rhs.apply(&sigma),
            c.constraint.apply(&sigma),
        )?;
        Some(Derivation::node(RuleName::TheoryInstance, concl, vec![d]).with_witness(sigma))
    }

    fn general_instance(&mut self) -> Option<Derivation> {
        let d = self.pick();
        let c = d.conclusion.clone();
        let mut sigma = Substitution::new();
        let all = self.all_vars.clone();
        let loose = self.loose();
        for u in c.vars() {
            if (!c.logical_vars.contains(&u) || loose) && self.rng.gen_bool(0.6) {
                let img = any_term(&mut self.rng, self.tf, u.sort(), &all, 1);
                sigma.insert(u, img).ok()?;
            }
        }
        if sigma.is_empty() {
            return None;
        }
        let concl = ce(
            c.logical_vars.clone(),
            c.lhs.apply(&sigma),
            c.rhs.apply(&sigma),
            c.constraint.clone(),
        )?;
        Some(Derivation::node(RuleName::GeneralInstance, concl, vec![d]).with_witness(sigma))
    }

    fn weaken(&self, d: Derivation, phi: Term) -> Option<Derivation> {
        let c = &d.conclusion;
        let concl = ce(c.logical_vars.clone(), c.lhs.clone(), c.rhs.clone(), phi)?;
        Some(Derivation::node(RuleName::Weakening, concl, vec![d]))
    }

    fn weakening(&mut self) -> Option<Derivation> {
        let d = self.pick();
        let xs: Vec<Variable> = d.conclusion.logical_vars.iter().cloned().collect();
        let m = self.model().clone();
        let a = atom(&mut self.rng, &m, &xs);
        let phi = if self.loose() {
            a
        } else {
            m.mk(TheoryOp::And, vec![d.conclusion.constraint.clone(), a])
        };
        self.weaken(d, phi)
    }

    fn split(&mut self) -> Option<Derivation> {
        let d = self.pick();
        let c = d.conclusion.clone();
        let xs: Vec<Variable> = c.logical_vars.iter().cloned().collect();
        let m = self.model().clone();
        let a = atom(&mut self.rng, &m, &xs);
        let (p1, p2) = if self.loose() {
            let b = atom(&mut self.rng, &m, &xs);
            (a, b)
        } else {
            (
                m.mk(TheoryOp::And, vec![c.constraint.clone(), a.clone()]),
                m.mk(TheoryOp::And, vec![c.constraint.clone(), m.not(a)]),
            )
        };
        let d1 = self.weaken(d.clone(), p1.clone())?;
        let d2 = self.weaken(d, p2.clone())?;
        let concl = ce(
            c.logical_vars.clone(),
            c.lhs.clone(),
            c.rhs.clone(),
            m.or(p1, p2),
        )?;
        Some(Derivation::node(RuleName::Split, concl, vec![d1, d2]))
    }

    fn enlarge(&mut self) -> Option<Derivation> {
        let d = self.pick();
        let c = d.conclusion.clone();
        let mut xs = c.logical_vars.clone();
        let extra: Vec<Variable> = self
            .th_vars
            .iter()
            .filter(|v| !xs.contains(*v))
            .cloned()
            .collect();
        let x = extra.choose(&mut self.rng)?.clone();
        xs.insert(x);
        if self.loose() {
            let drop: Vec<Variable> = xs.iter().cloned().collect();
            if let Some(v) = drop.choose(&mut self.rng) {
                xs.remove(v);
            }
        }
        let concl = ce(xs, c.lhs.clone(), c.rhs.clone(), c.constraint.clone())?;
        Some(Derivation::node(RuleName::Enlarge, concl, vec![d]))
    }

    /// Enlarge by a fresh `x`, weaken with `v = v`, then abstract occurrences
    /// of `v` into `x` under the constraint `x = v`.
    fn abst(&mut self) -> Option<Derivation> {
        let d = self.pick();
        let c = d.conclusion.clone();
        if !c.side_vars().iter().all(|v| c.logical_vars.contains(v)) {
            return None;
        }
        let mut used = c.vars();
        used.extend(c.logical_vars.iter().cloned());
        used.extend(c.constraint.vars());
        let fresh: Vec<Variable> = self
            .th_vars
            .iter()
            .filter(|v| !used.contains(*v))
            .cloned()
            .collect();
        let x = fresh.choose(&mut self.rng)?.clone();
        let m = self.model().clone();
        let value = {
            let mut occurring: Vec<Value> = [&c.lhs, &c.rhs]
                .iter()
                .flat_map(|t| t.subterms())
                .filter_map(|(_, u)| u.as_value().cloned())
                .filter(|v| v.sort() == *x.sort())
                .collect();
            occurring.extend(small_values(&m, x.sort()));
            occurring.choose(&mut self.rng)?.clone()
        };
        let mut xs = c.logical_vars.clone();
        xs.insert(x.clone());
        let e1 = Derivation::node(
            RuleName::Enlarge,
            ce(
                xs.clone(),
                c.lhs.clone(),
                c.rhs.clone(),
                c.constraint.clone(),
            )?,
            vec![d],
        );
        let pin = m.eq(Term::Var(x.clone()), Term::Val(value.clone()));
        let phi = if self.loose() {
            let vars: Vec<Variable> = xs.iter().cloned().collect();
            atom(&mut self.rng, &m, &vars)
        } else {
            m.mk(TheoryOp::And, vec![c.constraint.clone(), pin])
        };
        let sigma = Substitution::from_pairs([(x.clone(), Term::Val(value.clone()))]).ok()?;
        let e2 = self.weaken(e1, phi.apply(&sigma))?;
        let mut abstract_side = |t: &Term| -> Term {
            let mut out = t.clone();
            for (p, u) in t.subterms() {
                if u.as_value() == Some(&value) && self.rng.gen_bool(0.7) {
                    out = out
                        .replace_at(&p, Term::Var(x.clone()))
                        .expect("position exists");
                }
            }
            out
        };
        let l = abstract_side(&c.lhs);
        let r = abstract_side(&c.rhs);
        let concl = ce(xs, l, r, phi)?;
        Some(Derivation::node(RuleName::Abst, concl, vec![e2]).with_witness(sigma))
    }
}

/// Whether `ce` is confirmed valid by exhaustive enumeration of its logical
/// variables and conversion search within `bound` rule steps.
pub fn confirm_exhaustively(
    tf: &TheoryFile,
    ce: &ConstrainedEquation,
    bound: usize,
) -> Result<(), String> {
    let opts = SearchOptions {
        bound,
        ..SearchOptions::default()
    };
    let oracle = tf.theory.oracle();
    match check_ce_validity(&tf.theory, ce, &oracle, &opts) {
        Ok(st) if st.is_proof() => Ok(()),
        Ok(ValidityStatus::ConfirmedOnSamples {
            exhaustive: true, ..
        }) => Ok(()),
        Ok(st) => Err(format!("{ce}: {st}")),
        Err(e) => Err(format!("{ce}: oracle {e}")),
    }
}

/// One generated LIA equation `C[redex] = C[target]` whose instances differ
/// by at most one calculation step.
pub struct CalcCase {
    pub ce: ConstrainedEquation,
    pub description: &'static str,
}

fn lia_leaf(rng: &mut ChaCha8Rng, xs: &[Variable]) -> Term {
    if !xs.is_empty() && rng.gen_bool(0.6) {
        Term::Var(xs.choose(rng).unwrap().clone())
    } else {
        Term::int(rng.gen_range(-5..=5))
    }
}

fn lia_redex(rng: &mut ChaCha8Rng, m: &UnderlyingModel, xs: &[Variable]) -> Term {
    let a = lia_leaf(rng, xs);
    let b = lia_leaf(rng, xs);
    match rng.gen_range(0..6) {
        0 => m.mk(TheoryOp::Add, vec![a, b]),
        1 => m.mk(TheoryOp::Sub, vec![a, b]),
        2 => m.mk(TheoryOp::Neg, vec![a]),
        3 => m.mk(TheoryOp::Mul, vec![Term::int(rng.gen_range(-3..=3)), a]),
        4 => m.mk(TheoryOp::Mod, vec![a, Term::int(rng.gen_range(1..=5))]),
        _ => m.mk(TheoryOp::Div, vec![a, Term::int(rng.gen_range(1..=5))]),
    }
}

/// Wraps `inner` (of sort Int) in up to three random context layers.
fn lia_context(rng: &mut ChaCha8Rng, tf: &TheoryFile, xs: &[Variable], inner: Term) -> Term {
    let mut t = inner;
    for _ in 0..rng.gen_range(0..=3) {
        let other_int = lia_leaf(rng, xs);
        t = if t.sort() == Sort::int() {
            match rng.gen_range(0..3) {
                0 => app(tf, "f", vec![t]),
                1 => app(tf, "h", vec![t, other_int]),
                _ => app(tf, "h", vec![other_int, t]),
            }
        } else if rng.gen_bool(0.5) {
            app(tf, "g", vec![t, app(tf, "k", vec![])])
        } else {
            app(tf, "g", vec![app(tf, "f", vec![other_int]), t])
        };
    }
    t
}

/// Seeded CEs over [`LIA_CTX`] whose sides differ in at most one redex.
pub fn calc_case(rng: &mut ChaCha8Rng, tf: &TheoryFile) -> CalcCase {
    let m = tf.theory.model.clone();
    let names = ["x", "y", "z"];
    let mut xs: Vec<Variable> = names
        .iter()
        .map(|n| var(tf, n))
        .filter(|_| rng.gen_bool(0.6))
        .collect();
    let kind = rng.gen_range(0..4);
    let (redex, target, phi, description) = match kind {
        0 => {
            let r = lia_redex(rng, &m, &[]);
            let v = m.interpret(&r).expect("ground");
            (r, Term::Val(v), Term::bool(true), "ground redex")
        }
        1 => {
            let w = var(tf, "w");
            let r = lia_redex(rng, &m, &xs);
            xs.push(w.clone());
            let phi = m.eq(Term::Var(w.clone()), r.clone());
            (r, Term::Var(w), phi, "redex named by a logical variable")
        }
        2 => {
            let r = lia_redex(rng, &m, &xs);
            let mut rho = HashMap::new();
            let mut pins = Vec::new();
            for x in r.vars() {
                let v = rng.gen_range(-6..=6);
                rho.insert(x.clone(), Value::int(v));
                pins.push(m.eq(Term::Var(x.clone()), Term::int(v)));
            }
            let val = m.eval_with(&r, &rho).expect("pinned");
            (
                r,
                Term::Val(val),
                m.and_all(pins),
                "redex pinned by the constraint",
            )
        }
        _ => {
            let r = lia_leaf(rng, &xs);
            (r.clone(), r, Term::bool(true), "identical sides")
        }
    };
    let xs: BTreeSet<Variable> = xs.into_iter().chain(phi.vars()).collect();
    let ctx_vars: Vec<Variable> = xs.iter().cloned().collect();
    let hole = app(tf, "h", vec![Term::int(0), Term::int(0)]);
    let ctx = lia_context(rng, tf, &ctx_vars, hole.clone());
    let plug = |t: &Term| -> Term {
        let p = ctx
            .subterms()
            .into_iter()
            .find(|(_, u)| **u == hole)
            .map(|(p, _)| p)
            .expect("hole present");
        ctx.replace_at(&p, t.clone()).expect("hole position")
    };
    let (mut l, mut r) = (plug(&redex), plug(&target));
    if rng.gen_bool(0.3) {
        std::mem::swap(&mut l, &mut r);
    }
    CalcCase {
        ce: ConstrainedEquation::new(xs, l, r, phi).expect("well-formed calc case"),
        description,
    }
}

/// Instances of `ce` in the box whose sides have different calculation
/// normal forms. An independent check of the calculation precondition.
pub fn calc_precondition_violations(
    m: &UnderlyingModel,
    ce: &ConstrainedEquation,
    bound: i64,
) -> usize {
    m.enumerate_satisfying(&ce.logical_vars, &ce.constraint, bound)
        .filter(|s| m.calc_normalize(&ce.lhs.apply(s)) != m.calc_normalize(&ce.rhs.apply(s)))
        .count()
}

pub fn sort_kind_is_term(v: &Variable) -> bool {
    v.sort().kind() == SortKind::Term
}
