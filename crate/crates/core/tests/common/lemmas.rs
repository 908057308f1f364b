// SPDX-License-Identifier: Apache-2.0

//! One seeded case per call for each closure property of conversion and
//! validity. `Ok(true)` means the case exercised the property, `Ok(false)`
//! that its premise did not hold, `Err` a violation.

use std::collections::BTreeSet;
use std::sync::Arc;

use lcre::algebra::{check_is_model, check_refutes, search_counter_model, CounterModelOutcome};
use lcre::models::Verdict;
use lcre::proofs::{check_proof, generate_calc_proof, prove_heuristic, Derivation, GenerateError};
use lcre::rewriting::{
    check_ce_validity, conversion_search, replay_trace, rule_step_candidates, ConstrainedEquation,
    Pools, SearchOptions,
};
use lcre::syntax::TheoryFile;
use lcre::terms::{FunSymbol, Sort, Substitution, Term, Variable};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::*;

pub const BOUND: usize = 8;

/// Terms of sort `T` in [`MOD3`] grouped by the classes they convert in.
pub fn mod3_clusters(tf: &TheoryFile) -> Vec<Vec<Term>> {
    let m = &tf.theory.model;
    let x = Term::Var(var(tf, "x"));
    let y = Term::Var(var(tf, "y"));
    let u = Term::Var(var(tf, "u"));
    let c = |t: Term| app(tf, "c", vec![t]);
    let s = |t: Term| app(tf, "s", vec![t]);
    let f = |t: Term| app(tf, "f", vec![t]);
    let g = |t: Term| app(tf, "g", vec![t]);
    let k = app(tf, "k", vec![]);
    let plus1 = m.mk(lcre::terms::TheoryOp::Add, vec![x.clone(), Term::int(1)]);
    let sq = m.mk(lcre::terms::TheoryOp::Mul, vec![x.clone(), x.clone()]);
    vec![
        vec![
            k.clone(),
            s(c(Term::int(0))),
            s(c(Term::int(1))),
            s(c(Term::int(2))),
            s(c(x.clone())),
            s(c(y.clone())),
            s(c(plus1)),
        ],
        vec![g(c(x.clone())), f(c(x.clone())), c(sq)],
        vec![f(k.clone()), g(k.clone()), f(s(c(x.clone()))), g(s(c(y)))],
        vec![f(u.clone()), g(u.clone())],
        vec![f(g(u.clone())), g(g(u.clone())), g(f(u.clone()))],
        vec![c(x), s(k), c(Term::int(1)), s(u)],
    ]
}

/// Terms of sort `T` in [`BOOL`] grouped by the classes they convert in.
pub fn bool_clusters(tf: &TheoryFile) -> Vec<Vec<Term>> {
    let x = Term::Var(var(tf, "x"));
    let y = Term::Var(var(tf, "y"));
    let u = Term::Var(var(tf, "u"));
    let v = Term::Var(var(tf, "v"));
    let h = |t: Term| app(tf, "h", vec![t]);
    let q = |a: Term, b: Term| app(tf, "q", vec![a, b]);
    let a = app(tf, "a", vec![]);
    let m = &tf.theory.model;
    let and = m.mk(lcre::terms::TheoryOp::And, vec![x.clone(), y.clone()]);
    vec![
        vec![a.clone(), h(Term::bool(true))],
        vec![
            q(h(x.clone()), h(y.clone())),
            h(and),
            q(h(y.clone()), h(x.clone())),
        ],
        vec![q(u.clone(), v.clone()), q(v.clone(), u.clone())],
        vec![
            q(a.clone(), u.clone()),
            q(u.clone(), a.clone()),
            q(h(Term::bool(true)), u),
        ],
        vec![h(x), h(Term::bool(false)), q(a, v), h(y)],
    ]
}

pub fn clusters(tf: &TheoryFile) -> Vec<Vec<Term>> {
    if tf.theory.model.has_int() {
        mod3_clusters(tf)
    } else {
        bool_clusters(tf)
    }
}

/// Picks `n` terms, from a single class most of the time.
pub fn pick_terms(rng: &mut ChaCha8Rng, tf: &TheoryFile, n: usize) -> Vec<Term> {
    let cs = clusters(tf);
    if rng.gen_bool(0.75) {
        let c = cs.choose(rng).unwrap();
        (0..n).map(|_| c.choose(rng).unwrap().clone()).collect()
    } else {
        let all: Vec<Term> = cs.into_iter().flatten().collect();
        (0..n).map(|_| all.choose(rng).unwrap().clone()).collect()
    }
}

fn theory_vars_of(ts: &[&Term]) -> BTreeSet<Variable> {
    ts.iter()
        .flat_map(|t| t.vars())
        .filter(|v| v.is_theory())
        .collect()
}

fn related(
    tf: &TheoryFile,
    xs: &BTreeSet<Variable>,
    s: &Term,
    t: &Term,
    phi: &Term,
) -> Option<ConstrainedEquation> {
    ConstrainedEquation::new(xs.clone(), s.clone(), t.clone(), phi.clone())
        .ok()
        .filter(|c| confirm_exhaustively(tf, c, BOUND).is_ok())
}

fn maybe_atom(rng: &mut ChaCha8Rng, tf: &TheoryFile, xs: &BTreeSet<Variable>) -> Term {
    if rng.gen_bool(0.7) {
        Term::bool(true)
    } else {
        let vs: Vec<Variable> = xs.iter().cloned().collect();
        atom(rng, &tf.theory.model, &vs)
    }
}

fn opts(bound: usize) -> SearchOptions {
    SearchOptions {
        bound,
        ..SearchOptions::default()
    }
}

/// Reflexivity, symmetry, transitivity by trace composition, and closure
/// under a unary context.
pub fn congruence_case(tf: &TheoryFile, rng: &mut ChaCha8Rng) -> Result<bool, String> {
    let ts = pick_terms(rng, tf, 3);
    let (s, t, u) = (&ts[0], &ts[1], &ts[2]);
    let xs = theory_vars_of(&[s, t, u]);
    let phi = maybe_atom(rng, tf, &xs);
    if related(tf, &xs, s, s, &phi).is_none() {
        return Err(format!("not reflexive on {s}"));
    }
    if related(tf, &xs, s, t, &phi).is_none() {
        return Ok(false);
    }
    if related(tf, &xs, t, s, &phi).is_none() {
        return Err(format!("{s} ~ {t} but not {t} ~ {s}"));
    }
    let m = &tf.theory.model;
    if related(tf, &xs, t, u, &phi).is_some() {
        for sigma in m.enumerate_satisfying(&xs, &phi, 0) {
            let (a, b, c) = (s.apply(&sigma), t.apply(&sigma), u.apply(&sigma));
            let (Some(mut ab), Some(bc)) = (
                conversion_search(&tf.theory, &a, &b, &opts(BOUND)),
                conversion_search(&tf.theory, &b, &c, &opts(BOUND)),
            ) else {
                continue;
            };
            ab.append(bc);
            match replay_trace(&a, &ab, &tf.theory) {
                Ok(end) if end == c => {}
                other => return Err(format!("composed trace {a} -> {c} replays to {other:?}")),
            }
        }
    }
    let unary: Vec<Arc<FunSymbol>> = tf
        .theory
        .signature
        .term_symbols()
        .filter(|f| f.arg_sorts().contains(&s.sort()))
        .cloned()
        .collect();
    let f = unary.choose(rng).unwrap().clone();
    let vars: Vec<Variable> = xs.iter().cloned().collect();
    let wrap = |x: &Term, rng: &mut ChaCha8Rng| -> Vec<Term> {
        f.arg_sorts()
            .iter()
            .map(|srt| {
                if *srt == x.sort() {
                    x.clone()
                } else {
                    any_term(rng, tf, srt, &vars, 0)
                }
            })
            .collect()
    };
    let mut r2 = rng.clone();
    let cs = Term::app(f.clone(), wrap(s, rng)).unwrap();
    let ct = Term::app(f.clone(), wrap(t, &mut r2)).unwrap();
    if related(tf, &xs, &cs, &ct, &phi).is_none() {
        return Err(format!("{s} ~ {t} but not {cs} ~ {ct}"));
    }
    Ok(true)
}

fn premise(
    rng: &mut ChaCha8Rng,
    tf: &TheoryFile,
) -> Option<(BTreeSet<Variable>, Term, Term, Term)> {
    let ts = pick_terms(rng, tf, 2);
    let mut ys = theory_vars_of(&[&ts[0], &ts[1]]);
    for v in theory_vars(tf) {
        if rng.gen_bool(0.2) {
            ys.insert(v);
        }
    }
    let phi = maybe_atom(rng, tf, &ys);
    related(tf, &ys, &ts[0], &ts[1], &phi).map(|c| (ys, c.lhs, c.rhs, c.constraint))
}

/// `<Y> s = t [phi]` valid implies `<X> s.sigma = t.sigma [phi.sigma]` valid
/// for `sigma` mapping `Y` to theory terms over `X`.
pub fn stability_case(tf: &TheoryFile, rng: &mut ChaCha8Rng) -> Result<bool, String> {
    let Some((ys, s, t, phi)) = premise(rng, tf) else {
        return Ok(false);
    };
    let m = tf.theory.model.clone();
    let xs: Vec<Variable> = subset(rng, &theory_vars(tf), 0.5);
    let mut sigma = Substitution::new();
    for y in &ys {
        sigma
            .insert(y.clone(), theory_term(rng, &m, y.sort(), &xs, 1))
            .unwrap();
    }
    let inst = ConstrainedEquation::new(
        xs.into_iter().collect(),
        s.apply(&sigma),
        t.apply(&sigma),
        phi.apply(&sigma),
    )
    .map_err(|e| format!("instance is not a CE: {e}"))?;
    confirm_exhaustively(tf, &inst, BOUND).map(|_| true)
}

/// `<X> s = t [phi]` valid implies `<X> s.sigma = t.sigma [phi]` valid for
/// `sigma` avoiding `X`.
pub fn general_stability_case(tf: &TheoryFile, rng: &mut ChaCha8Rng) -> Result<bool, String> {
    let Some((xs, s, t, phi)) = premise(rng, tf) else {
        return Ok(false);
    };
    let mut free: BTreeSet<Variable> = s
        .vars()
        .into_iter()
        .chain(t.vars())
        .filter(|v| !xs.contains(v))
        .collect();
    if free.is_empty() || rng.gen_bool(0.3) {
        free.extend(term_vars(tf));
    }
    let all: Vec<Variable> = tf.vars.values().cloned().collect();
    let mut sigma = Substitution::new();
    for v in free {
        if !xs.contains(&v) {
            sigma
                .insert(v.clone(), any_term(rng, tf, v.sort(), &all, 2))
                .unwrap();
        }
    }
    let inst = ConstrainedEquation::new(xs, s.apply(&sigma), t.apply(&sigma), phi)
        .map_err(|e| format!("instance is not a CE: {e}"))?;
    confirm_exhaustively(tf, &inst, BOUND).map(|_| true)
}

/// Theory terms equal under the constraint convert by calculation alone.
pub fn model_consequence_case(tf: &TheoryFile, rng: &mut ChaCha8Rng) -> Result<bool, String> {
    let m = tf.theory.model.clone();
    let empty = without_equations(tf);
    let xs = subset(rng, &theory_vars(tf), 0.7);
    let sort = if m.has_int() && rng.gen_bool(0.7) {
        Sort::int()
    } else {
        Sort::bool()
    };
    let s = theory_term(rng, &m, &sort, &xs, 2);
    let t = theory_term(rng, &m, &sort, &xs, 2);
    let phi = match rng.gen_range(0..10) {
        0..=4 => m.eq(s.clone(), t.clone()),
        5..=7 => atom(rng, &m, &xs),
        _ => Term::bool(true),
    };
    let goal = m.implies(phi.clone(), m.eq(s.clone(), t.clone()));
    match tf.theory.oracle().check_validity(&goal) {
        Ok(Verdict::Valid) => {}
        Ok(_) => return Ok(false),
        Err(e) => return Err(format!("oracle: {e}")),
    }
    let xs: BTreeSet<Variable> = xs.into_iter().collect();
    for sigma in m.enumerate_satisfying(&xs, &phi, 0) {
        let (a, b) = (s.apply(&sigma), t.apply(&sigma));
        match conversion_search(&empty, &a, &b, &opts(0)) {
            Some(tr)
                if tr.rule_steps() == 0 && replay_trace(&a, &tr, &empty).as_ref() == Ok(&b) => {}
            other => {
                return Err(format!(
                    "{a} and {b}: no calculation conversion ({other:?})"
                ))
            }
        }
    }
    Ok(true)
}

fn without_equations(tf: &TheoryFile) -> lcre::rewriting::CETheory {
    lcre::rewriting::CETheory::new(
        tf.theory.model.clone(),
        tf.theory.signature.clone(),
        Vec::new(),
    )
    .unwrap()
}

fn has_step(theory: &lcre::rewriting::CETheory, from: &Term, to: &Term) -> bool {
    let m = &theory.model;
    let pools = Pools::new(theory, 8, &[from, to], &[]);
    let target = m.calc_normalize(to);
    rule_step_candidates(from, theory, &pools)
        .iter()
        .any(|st| m.calc_normalize(&st.result) == target)
}

/// A rule step `s -> t` can be reversed, lifted into a context and
/// instantiated by a ground substitution.
pub fn symmetry_closure_case(tf: &TheoryFile, rng: &mut ChaCha8Rng) -> Result<bool, String> {
    let th = &tf.theory;
    let s = pick_terms(rng, tf, 1).pop().unwrap();
    let pools = Pools::new(th, 8, &[&s], &[]);
    let steps = rule_step_candidates(&s, th, &pools);
    let Some(step) = steps.choose(rng) else {
        return Ok(false);
    };
    let t = step.result.clone();
    if !has_step(th, &t, &s) {
        return Err(format!("step {s} -> {t} has no reverse"));
    }
    let all: Vec<Variable> = tf.vars.values().cloned().collect();
    let fs: Vec<Arc<FunSymbol>> = th
        .signature
        .term_symbols()
        .filter(|f| f.arg_sorts().contains(&s.sort()))
        .cloned()
        .collect();
    let f = fs.choose(rng).unwrap().clone();
    let holes: Vec<usize> = (0..f.arity())
        .filter(|&i| f.arg_sorts()[i] == s.sort())
        .collect();
    let hole = *holes.choose(rng).unwrap();
    let others: Vec<Term> = f
        .arg_sorts()
        .iter()
        .map(|srt| any_term(rng, tf, srt, &all, 1))
        .collect();
    let plug = |x: &Term| {
        let mut args = others.clone();
        args[hole] = x.clone();
        Term::app(f.clone(), args).unwrap()
    };
    let (cs, ct) = (plug(&s), plug(&t));
    if !has_step(th, &cs, &ct) {
        return Err(format!(
            "step {s} -> {t} not found in context: {cs} -> {ct}"
        ));
    }
    let mut sigma = Substitution::new();
    for v in s.vars().into_iter().chain(t.vars()) {
        if sigma.get(&v).is_none() {
            let img = if v.is_theory() {
                Term::Val(
                    th.model
                        .sort_values(v.sort(), 2)
                        .choose(rng)
                        .unwrap()
                        .clone(),
                )
            } else {
                any_term(rng, tf, v.sort(), &[], 1)
            };
            sigma.insert(v, img).unwrap();
        }
    }
    let (ss, ts) = (s.apply(&sigma), t.apply(&sigma));
    if !has_step(th, &ss, &ts) {
        return Err(format!(
            "step {s} -> {t} not found for the instance {ss} -> {ts}"
        ));
    }
    Ok(true)
}

/// The prove command's pipeline: calculation proof, then heuristic search,
/// keeping only checker-accepted results.
pub fn prove_goal(
    tf: &TheoryFile,
    goal: &ConstrainedEquation,
    opts: &SearchOptions,
) -> Result<Option<Derivation>, String> {
    let th = &tf.theory;
    let oracle = th.oracle();
    let d = match generate_calc_proof(th, &oracle, goal) {
        Ok(d) => Some(d),
        Err(GenerateError::Oracle(e)) => return Err(e.to_string()),
        Err(GenerateError::PreconditionUnverifiable(_)) => {
            prove_heuristic(th, &oracle, goal, opts).map_err(|e| e.to_string())?
        }
    };
    match d {
        Some(d) => {
            let rep = check_proof(th, &oracle, &d).map_err(|e| e.to_string())?;
            Ok(rep.is_accepted().then_some(d))
        }
        None => Ok(None),
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct CrossOutcome {
    pub proved: bool,
    pub refuted: bool,
}

/// Proves and refutes `goal` independently. Any algebra found is re-checked
/// to model the theory and refute the goal.
pub fn cross_module_case(
    tf: &TheoryFile,
    goal: &ConstrainedEquation,
) -> Result<CrossOutcome, String> {
    let th = &tf.theory;
    let o = opts(BOUND);
    let validity = check_ce_validity(th, goal, &th.oracle(), &o).map_err(|e| e.to_string())?;
    let proved = validity.is_proof() || prove_goal(tf, goal, &o)?.is_some();
    let refuted = match search_counter_model(th, goal, 1, 2).map_err(|e| e.to_string())? {
        CounterModelOutcome::Found { algebra, .. } => {
            if !check_is_model(&algebra, th)
                .map_err(|e| e.to_string())?
                .is_valid()
            {
                return Err(format!("{goal}: counter-model does not model the theory"));
            }
            if check_refutes(&algebra, goal)
                .map_err(|e| e.to_string())?
                .is_none()
            {
                return Err(format!("{goal}: counter-model does not refute the goal"));
            }
            true
        }
        CounterModelOutcome::Exhausted { .. } => false,
    };
    if proved && refuted {
        return Err(format!("{goal} is both proved and refuted"));
    }
    Ok(CrossOutcome { proved, refuted })
}

/// Seeded goals: half are conclusions of accepted derivations, half pair
/// arbitrary terms.
pub fn cross_goals(tf: &TheoryFile, seed: u64, n: usize) -> Vec<ConstrainedEquation> {
    let mut gen = DerivationGen::new(tf, seed);
    let mut rng = rng(seed ^ 0xc0ffee);
    let mut out = Vec::new();
    while out.len() < n {
        if out.len() % 2 == 0 {
            let d = gen.next();
            if d.conclusion.lhs.size() + d.conclusion.rhs.size() <= 12 {
                out.push(d.conclusion);
            }
        } else {
            let ts = pick_terms(&mut rng, tf, 2);
            let xs = theory_vars_of(&[&ts[0], &ts[1]]);
            let phi = maybe_atom(&mut rng, tf, &xs);
            if let Ok(c) = ConstrainedEquation::new(xs, ts[0].clone(), ts[1].clone(), phi) {
                out.push(c);
            }
        }
    }
    out
}
