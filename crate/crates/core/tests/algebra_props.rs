// SPDX-License-Identifier: Apache-2.0

mod common;

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, OnceLock};

use common::lemmas::pick_terms;
use common::*;
use lcre::algebra::{
    check_is_model, check_refutes, check_value_consistency, parse_algebra, quotient,
    search_counter_model, ConsistencyReport, CounterModelOutcome, Element, FiniteCEAlgebra,
    FiniteCongruence, Valuation,
};
use lcre::models::Product;
use lcre::rewriting::{conversion_search, ConstrainedEquation, SearchOptions};
use lcre::syntax::{parse_goal, TheoryFile};
use lcre::terms::{FunSymbol, Sort, Term, Value, Variable};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn pick_theory(i: u8) -> TheoryFile {
    theory([MOD3, BOOL][i as usize % 2])
}

fn fresh(stem: &str, i: usize) -> Element {
    Element::Fresh(Arc::from(format!("#{stem}{i}")))
}

/// Random algebra over the theory's signature with at most four elements per
/// carrier; tables are drawn uniformly and are not expected to model anything.
fn random_algebra(rng: &mut ChaCha8Rng, tf: &TheoryFile) -> FiniteCEAlgebra {
    let m = &tf.theory.model;
    let sig = &tf.theory.signature;
    let mut carriers = BTreeMap::new();
    for s in sig.sorts() {
        let mut c: Vec<Element> = if s.is_theory() {
            m.sort_values(s, 0).into_iter().map(Element::Val).collect()
        } else {
            Vec::new()
        };
        let room = 4 - c.len();
        let n = if s.is_theory() {
            rng.gen_range(0..=room.min(1))
        } else {
            rng.gen_range(1..=room.min(3))
        };
        c.extend((1..=n).map(|i| fresh(&s.name().to_lowercase(), i)));
        carriers.insert(s.clone(), c);
    }
    let mut tables: HashMap<Arc<FunSymbol>, BTreeMap<Vec<Element>, Element>> = HashMap::new();
    for f in sig.symbols() {
        let doms: Vec<Vec<Element>> = f.arg_sorts().iter().map(|s| carriers[s].clone()).collect();
        let out = &carriers[f.result_sort()];
        for args in Product::new(doms) {
            if f.is_theory() && args.iter().all(Element::is_value) {
                continue;
            }
            if f.is_theory() && rng.gen_bool(0.3) {
                continue;
            }
            tables
                .entry(f.clone())
                .or_default()
                .insert(args, out.choose(rng).unwrap().clone());
        }
    }
    let a = FiniteCEAlgebra {
        model: m.clone(),
        signature: sig.clone(),
        carriers,
        tables,
    };
    a.validate().expect("generated algebra is well formed");
    a
}

/// A random partition of each carrier; model values stay apart unless
/// `merge_values` is set.
fn random_partition(
    rng: &mut ChaCha8Rng,
    a: &FiniteCEAlgebra,
    merge_values: bool,
) -> FiniteCongruence {
    let mut classes = BTreeMap::new();
    for (s, c) in &a.carriers {
        let mut cls: Vec<Vec<Element>> = Vec::new();
        for e in c {
            let joinable: Vec<usize> = (0..cls.len())
                .filter(|&i| merge_values || !e.is_value() || !cls[i].iter().any(Element::is_value))
                .collect();
            match joinable.choose(rng) {
                Some(&i) if rng.gen_bool(0.5) => cls[i].push(e.clone()),
                _ => cls.push(vec![e.clone()]),
            }
        }
        classes.insert(s.clone(), cls);
    }
    FiniteCongruence { classes }
}

fn class_of(c: &FiniteCongruence, s: &Sort, e: &Element) -> usize {
    c.classes[s]
        .iter()
        .position(|cl| cl.contains(e))
        .expect("partition covers carrier")
}

/// Direct check of the congruence conditions.
fn is_congruence(a: &FiniteCEAlgebra, c: &FiniteCongruence) -> bool {
    if c.classes
        .values()
        .flatten()
        .any(|cl| cl.iter().filter(|e| e.is_value()).count() > 1)
    {
        return false;
    }
    a.signature.symbols().all(|f| {
        let doms: Vec<Vec<Element>> = f
            .arg_sorts()
            .iter()
            .map(|s| a.carrier(s).to_vec())
            .collect();
        let tuples: Vec<Vec<Element>> = Product::new(doms).collect();
        let key = |args: &[Element]| -> Vec<usize> {
            args.iter()
                .zip(f.arg_sorts())
                .map(|(e, s)| class_of(c, s, e))
                .collect()
        };
        let mut seen: HashMap<Vec<usize>, usize> = HashMap::new();
        tuples.iter().all(|args| {
            let r = class_of(c, f.result_sort(), &a.apply(f, args));
            *seen.entry(key(args)).or_insert(r) == r
        })
    })
}

fn all_valuations(a: &FiniteCEAlgebra, vars: &[Variable]) -> Vec<Valuation> {
    let doms: Vec<Vec<Element>> = vars.iter().map(|v| a.carrier(v.sort()).to_vec()).collect();
    Product::new(doms)
        .map(|es| vars.iter().cloned().zip(es).collect())
        .collect()
}

fn random_ces(rng: &mut ChaCha8Rng, tf: &TheoryFile, n: usize) -> Vec<ConstrainedEquation> {
    let mut out: Vec<ConstrainedEquation> = tf.theory.equations.clone();
    while out.len() < tf.theory.equations.len() + n {
        let ts = pick_terms(rng, tf, 2);
        let xs: Vec<Variable> = ts
            .iter()
            .flat_map(|t| t.vars())
            .filter(|v| v.is_theory())
            .collect();
        let phi = if rng.gen_bool(0.5) {
            Term::bool(true)
        } else {
            atom(rng, &tf.theory.model, &xs)
        };
        if let Some(c) = ce(xs, ts[0].clone(), ts[1].clone(), phi) {
            out.push(c);
        }
    }
    out
}

fn models_of(tf: &TheoryFile) -> Vec<FiniteCEAlgebra> {
    let mut rng = rng(SEED);
    let mut out: Vec<FiniteCEAlgebra> = Vec::new();
    for _ in 0..40 {
        let ts = pick_terms(&mut rng, tf, 2);
        let Ok(goal) = ConstrainedEquation::new(
            Default::default(),
            ts[0].clone(),
            ts[1].clone(),
            Term::bool(true),
        ) else {
            continue;
        };
        if let Ok(CounterModelOutcome::Found { algebra, .. }) =
            search_counter_model(&tf.theory, &goal, 1, 3)
        {
            if !out.contains(&algebra) {
                out.push(algebra);
            }
        }
    }
    out
}

fn cached_models(which: u8) -> &'static [FiniteCEAlgebra] {
    static CACHE: [OnceLock<Vec<FiniteCEAlgebra>>; 2] = [OnceLock::new(), OnceLock::new()];
    CACHE[which as usize].get_or_init(|| models_of(&pick_theory(which)))
}

proptest! {
    #![proptest_config(proptest_config(200))]

    #[test]
    fn quotients_are_homomorphic_images(seed in any::<u64>(), which in 0u8..2) {
        let tf = pick_theory(which);
        let mut rng = rng(seed);
        let a = random_algebra(&mut rng, &tf);
        let merge = rng.gen_bool(0.15);
        let c = random_partition(&mut rng, &a, merge);
        let expected = is_congruence(&a, &c);
        let q = quotient(&a, &c);
        prop_assert_eq!(q.is_ok(), expected, "congruence {:?}", c);
        let Ok(q) = q else { return Ok(()) };
        prop_assert!(q.validate().is_ok());
        let image = |s: &Sort, e: &Element| -> Element {
            let k = class_of(&c, s, e);
            let hits: Vec<&Element> = q.carrier(s).iter().filter(|r| c.classes[s][k].contains(r)).collect();
            assert_eq!(hits.len(), 1, "one representative per class");
            hits[0].clone()
        };
        for (s, cls) in &c.classes {
            prop_assert_eq!(q.carrier(s).len(), cls.len());
            for v in a.model_part(s) {
                prop_assert_eq!(image(s, &v), v);
            }
        }
        for f in a.signature.symbols() {
            let doms: Vec<Vec<Element>> = f.arg_sorts().iter().map(|s| a.carrier(s).to_vec()).collect();
            for args in Product::new(doms) {
                let mapped: Vec<Element> = args.iter().zip(f.arg_sorts()).map(|(e, s)| image(s, e)).collect();
                prop_assert_eq!(image(f.result_sort(), &a.apply(f, &args)), q.apply(f, &mapped), "{} at {:?}", f, args);
            }
        }
        for e in random_ces(&mut rng, &tf, 6) {
            if check_refutes(&a, &e).unwrap().is_none() {
                prop_assert!(check_refutes(&q, &e).unwrap().is_none(), "quotient loses {}", e);
            }
        }
        if check_is_model(&a, &tf.theory).unwrap().is_valid() {
            prop_assert!(check_is_model(&q, &tf.theory).unwrap().is_valid());
        }
    }

    #[test]
    fn identity_quotient_changes_nothing(seed in any::<u64>(), which in 0u8..2) {
        let tf = pick_theory(which);
        let mut rng = rng(seed);
        let a = random_algebra(&mut rng, &tf);
        let q = quotient(&a, &FiniteCongruence::identity(&a)).unwrap();
        prop_assert_eq!(&q, &a);
        for e in random_ces(&mut rng, &tf, 6) {
            prop_assert_eq!(check_refutes(&a, &e).unwrap().is_none(), check_refutes(&q, &e).unwrap().is_none());
        }
        prop_assert_eq!(check_is_model(&a, &tf.theory).unwrap(), check_is_model(&q, &tf.theory).unwrap());
    }

    #[test]
    fn conversions_hold_in_every_found_model(seed in any::<u64>(), which in 0u8..2) {
        let tf = pick_theory(which);
        let models = cached_models(which);
        prop_assert!(!models.is_empty());
        let mut rng = rng(seed);
        let ts = pick_terms(&mut rng, &tf, 2);
        let opts = SearchOptions { bound: 6, ..SearchOptions::default() };
        let Some(tr) = conversion_search(&tf.theory, &ts[0], &ts[1], &opts) else { return Ok(()) };
        let mut vars = ts[0].vars();
        vars.extend(ts[1].vars());
        let vars: Vec<Variable> = vars.into_iter().collect();
        for a in models {
            prop_assert!(check_is_model(a, &tf.theory).unwrap().is_valid());
            for rho in all_valuations(a, &vars) {
                let mut cur = ts[0].clone();
                let start = a.eval(&cur, &rho).unwrap();
                for st in &tr.steps {
                    cur = st.result.clone();
                    prop_assert_eq!(a.eval(&cur, &rho).unwrap(), start.clone(), "step {} leaves the class", st);
                }
            }
        }
    }
}

const TWO_VALUES: &str = "
(model (intmod 3))
(fun a () Int)
(eq a 0)
(eq a 1)
";

#[test]
fn inconsistency_witness_excludes_models() {
    let tf = theory(TWO_VALUES);
    let opts = SearchOptions::default();
    let report = check_value_consistency(&tf.theory, 2, opts.pool_radius, opts.max_nodes);
    assert!(
        matches!(report, ConsistencyReport::InconsistentWitness { .. }),
        "{report:?}"
    );
    let goals = ["0 1", "a 2", "a a", "(+ a 1) 2"];
    for extra in 0..=2 {
        for g in goals {
            let goal = parse_goal(&tf, g).unwrap();
            let out = search_counter_model(&tf.theory, &goal, extra, 1).unwrap();
            assert!(
                matches!(out, CounterModelOutcome::Exhausted { .. }),
                "{g} with {extra} extra: {out:?}"
            );
        }
        let mut carrier: Vec<String> = vec!["0".into(), "1".into(), "2".into()];
        carrier.extend((1..=extra).map(|i| format!("#i{i}")));
        for v in &carrier {
            let text = format!(
                "(algebra (carrier Int {}) (table a (() {v})))",
                carrier.join(" ")
            );
            let a = parse_algebra(&tf.theory, &text).unwrap();
            assert!(
                !check_is_model(&a, &tf.theory).unwrap().is_valid(),
                "a = {v} models both equations"
            );
        }
    }
}

#[test]
fn two_values_have_no_model_on_a_finite_integer_slice() {
    let tf = load("inconsistent.th");
    for v in ["0", "1"] {
        let a = parse_algebra(
            &tf.theory,
            &format!("(algebra (carrier Int 0 1) (table a (() {v})))"),
        )
        .unwrap();
        assert!(!check_is_model(&a, &tf.theory).unwrap().is_valid());
    }
}

#[test]
fn merging_values_is_not_a_congruence() {
    let tf = load("bullet.th");
    let a = parse_algebra(&tf.theory, &fixture_text("bullet.alg")).unwrap();
    let mut c = FiniteCongruence::identity(&a);
    let b = Sort::bool();
    c.classes.insert(
        b.clone(),
        vec![
            vec![
                Element::Val(Value::Bool(false)),
                Element::Val(Value::Bool(true)),
            ],
            vec![fresh("b", 1)],
        ],
    );
    assert!(quotient(&a, &c).is_err());
}
