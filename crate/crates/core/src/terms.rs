// SPDX-License-Identifier: Apache-2.0

//! Many-sorted signatures, terms, positions, substitutions, matching and
//! unification.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, LazyLock};

use num_bigint::BigInt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TermError {
    #[error("invalid position {0} for term {1}")]
    InvalidPosition(Position, Term),
    #[error("sort mismatch: expected {expected}, found {found}")]
    SortMismatch { expected: Sort, found: Sort },
    #[error("arity mismatch for {symbol}: expected {expected}, found {found}")]
    ArityMismatch {
        symbol: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate sort {0}")]
    DuplicateSort(String),
    #[error("unknown sort {0}")]
    UnknownSort(String),
    #[error("symbol {0} clashes with an existing declaration")]
    SymbolClash(String),
    #[error("ill-formed symbol {0}: {1}")]
    IllFormedSymbol(String, &'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SortKind {
    Theory,
    Term,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sort {
    name: Arc<str>,
    kind: SortKind,
}

static BOOL_SORT: LazyLock<Sort> = LazyLock::new(|| Sort::new("Bool", SortKind::Theory));
static INT_SORT: LazyLock<Sort> = LazyLock::new(|| Sort::new("Int", SortKind::Theory));

impl Sort {
    pub fn new(name: &str, kind: SortKind) -> Self {
        Sort {
            name: Arc::from(name),
            kind,
        }
    }

    pub fn bool() -> Self {
        BOOL_SORT.clone()
    }

    pub fn int() -> Self {
        INT_SORT.clone()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> SortKind {
        self.kind
    }

    pub fn is_theory(&self) -> bool {
        self.kind == SortKind::Theory
    }
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// A value constant. Values are the nullary theory symbols; they are kept
/// apart from [`FunSymbol`] because the integer carrier is unbounded.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Bool(bool),
    Int(BigInt),
}

impl Value {
    pub fn int(i: i64) -> Self {
        Value::Int(BigInt::from(i))
    }

    pub fn sort(&self) -> Sort {
        match self {
            Value::Bool(_) => Sort::bool(),
            Value::Int(_) => Sort::int(),
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            Value::Int(_) => None,
        }
    }

    pub fn as_int(&self) -> Option<&BigInt> {
        match self {
            Value::Int(i) => Some(i),
            Value::Bool(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
        }
    }
}

/// Built-in operations interpreted by the underlying model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TheoryOp {
    Add,
    Sub,
    Neg,
    Mul,
    Mod,
    Div,
    Eq,
    Lt,
    Le,
    Gt,
    Ge,
    Not,
    And,
    Or,
    Implies,
    Iff,
}

impl TheoryOp {
    pub fn name(self) -> &'static str {
        match self {
            TheoryOp::Add => "+",
            TheoryOp::Sub | TheoryOp::Neg => "-",
            TheoryOp::Mul => "*",
            TheoryOp::Mod => "mod",
            TheoryOp::Div => "div",
            TheoryOp::Eq => "=",
            TheoryOp::Lt => "<",
            TheoryOp::Le => "<=",
            TheoryOp::Gt => ">",
            TheoryOp::Ge => ">=",
            TheoryOp::Not => "not",
            TheoryOp::And => "and",
            TheoryOp::Or => "or",
            TheoryOp::Implies => "=>",
            TheoryOp::Iff => "<=>",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SymbolKind {
    Theory(TheoryOp),
    Term,
}

#[derive(Debug, Clone, Eq)]
pub struct FunSymbol {
    name: Arc<str>,
    arg_sorts: Vec<Sort>,
    result: Sort,
    kind: SymbolKind,
}

impl FunSymbol {
    pub fn term(name: &str, arg_sorts: Vec<Sort>, result: Sort) -> Self {
        FunSymbol {
            name: Arc::from(name),
            arg_sorts,
            result,
            kind: SymbolKind::Term,
        }
    }

    pub fn theory(op: TheoryOp, arg_sorts: Vec<Sort>, result: Sort) -> Result<Self, TermError> {
        if !result.is_theory() || arg_sorts.iter().any(|s| !s.is_theory()) {
            return Err(TermError::IllFormedSymbol(
                op.name().to_string(),
                "theory symbols range over theory sorts only",
            ));
        }
        Ok(FunSymbol {
            name: Arc::from(op.name()),
            arg_sorts,
            result,
            kind: SymbolKind::Theory(op),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn arg_sorts(&self) -> &[Sort] {
        &self.arg_sorts
    }

    pub fn arity(&self) -> usize {
        self.arg_sorts.len()
    }

    pub fn result_sort(&self) -> &Sort {
        &self.result
    }

    pub fn kind(&self) -> SymbolKind {
        self.kind
    }

    pub fn op(&self) -> Option<TheoryOp> {
        match self.kind {
            SymbolKind::Theory(op) => Some(op),
            SymbolKind::Term => None,
        }
    }

    pub fn is_theory(&self) -> bool {
        matches!(self.kind, SymbolKind::Theory(_))
    }
}

impl PartialEq for FunSymbol {
    fn eq(&self, other: &Self) -> bool {
        std::ptr::eq(self, other)
            || (self.name == other.name
                && self.arg_sorts == other.arg_sorts
                && self.result == other.result
                && self.kind == other.kind)
    }
}

impl Hash for FunSymbol {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.name.hash(state);
        self.arg_sorts.len().hash(state);
    }
}

impl PartialOrd for FunSymbol {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FunSymbol {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (&self.name, &self.arg_sorts, &self.result, &self.kind).cmp(&(
            &other.name,
            &other.arg_sorts,
            &other.result,
            &other.kind,
        ))
    }
}

impl fmt::Display for FunSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Variable {
    name: Arc<str>,
    sort: Sort,
}

impl Variable {
    pub fn new(name: &str, sort: Sort) -> Self {
        Variable {
            name: Arc::from(name),
            sort,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sort(&self) -> &Sort {
        &self.sort
    }

    pub fn is_theory(&self) -> bool {
        self.sort.is_theory()
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// A sort-checked signature: theory and term sorts and symbols.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Signature {
    sorts: BTreeMap<Arc<str>, Sort>,
    symbols: BTreeMap<Arc<str>, Vec<Arc<FunSymbol>>>,
}

impl Signature {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_sort(&mut self, sort: Sort) -> Result<(), TermError> {
        if self.sorts.contains_key(sort.name()) {
            return Err(TermError::DuplicateSort(sort.name().to_string()));
        }
        self.sorts.insert(sort.name.clone(), sort);
        Ok(())
    }

    pub fn add_symbol(&mut self, sym: FunSymbol) -> Result<Arc<FunSymbol>, TermError> {
        for s in sym.arg_sorts.iter().chain(std::iter::once(&sym.result)) {
            if self.sorts.get(s.name()) != Some(s) {
                return Err(TermError::UnknownSort(s.name().to_string()));
            }
        }
        let entry = self.symbols.entry(sym.name.clone()).or_default();
        let clash = entry.iter().any(|other| {
            other.arg_sorts == sym.arg_sorts || (!sym.is_theory() && !other.is_theory())
        });
        if clash {
            return Err(TermError::SymbolClash(sym.name().to_string()));
        }
        let sym = Arc::new(sym);
        entry.push(sym.clone());
        Ok(sym)
    }

    pub fn sort(&self, name: &str) -> Option<&Sort> {
        self.sorts.get(name)
    }

    pub fn sorts(&self) -> impl Iterator<Item = &Sort> {
        self.sorts.values()
    }

    /// All overloads declared under `name`.
    pub fn symbols_named(&self, name: &str) -> &[Arc<FunSymbol>] {
        self.symbols.get(name).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn resolve(&self, name: &str, arg_sorts: &[Sort]) -> Option<&Arc<FunSymbol>> {
        self.symbols_named(name)
            .iter()
            .find(|s| s.arg_sorts == arg_sorts)
    }

    pub fn symbols(&self) -> impl Iterator<Item = &Arc<FunSymbol>> {
        self.symbols.values().flatten()
    }

    pub fn term_symbols(&self) -> impl Iterator<Item = &Arc<FunSymbol>> {
        self.symbols().filter(|s| !s.is_theory())
    }
}

/// A 1-based path from the root; the empty path is the root.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Position(pub Vec<usize>);

impl Position {
    pub fn root() -> Self {
        Position(Vec::new())
    }

    pub fn child(&self, i: usize) -> Self {
        let mut p = self.0.clone();
        p.push(i);
        Position(p)
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_prefix_of(&self, other: &Position) -> bool {
        other.0.starts_with(&self.0)
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("e");
        }
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        f.write_str(&parts.join("."))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(Variable),
    Val(Value),
    App(Arc<FunSymbol>, Arc<[Term]>),
}

impl Term {
    pub fn var(v: Variable) -> Self {
        Term::Var(v)
    }

    pub fn val(v: Value) -> Self {
        Term::Val(v)
    }

    pub fn int(i: i64) -> Self {
        Term::Val(Value::int(i))
    }

    pub fn bool(b: bool) -> Self {
        Term::Val(Value::Bool(b))
    }

    /// Builds an application, checking arity and argument sorts.
    pub fn app(sym: Arc<FunSymbol>, args: Vec<Term>) -> Result<Self, TermError> {
        if sym.arity() != args.len() {
            return Err(TermError::ArityMismatch {
                symbol: sym.name().to_string(),
                expected: sym.arity(),
                found: args.len(),
            });
        }
        for (s, a) in sym.arg_sorts.iter().zip(&args) {
            let found = a.sort();
            if *s != found {
                return Err(TermError::SortMismatch {
                    expected: s.clone(),
                    found,
                });
            }
        }
        Ok(Term::App(sym, args.into()))
    }

    pub fn constant(sym: Arc<FunSymbol>) -> Self {
        Term::App(sym, Arc::from(Vec::new()))
    }

    pub fn sort(&self) -> Sort {
        match self {
            Term::Var(v) => v.sort.clone(),
            Term::Val(v) => v.sort(),
            Term::App(f, _) => f.result.clone(),
        }
    }

    pub fn args(&self) -> &[Term] {
        match self {
            Term::App(_, args) => args,
            _ => &[],
        }
    }

    pub fn symbol(&self) -> Option<&Arc<FunSymbol>> {
        match self {
            Term::App(f, _) => Some(f),
            _ => None,
        }
    }

    pub fn as_var(&self) -> Option<&Variable> {
        match self {
            Term::Var(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_value(&self) -> Option<&Value> {
        match self {
            Term::Val(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_value(&self) -> bool {
        matches!(self, Term::Val(_))
    }

    pub fn size(&self) -> usize {
        match self {
            Term::App(_, args) => 1 + args.iter().map(Term::size).sum::<usize>(),
            _ => 1,
        }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Val(_) => true,
            Term::App(_, args) => args.iter().all(Term::is_ground),
        }
    }

    /// Membership in T(Fth, V) for the given variable filter.
    fn theory_term_with(&self, ok_var: &dyn Fn(&Variable) -> bool) -> bool {
        match self {
            Term::Var(v) => v.is_theory() && ok_var(v),
            Term::Val(_) => true,
            Term::App(f, args) => f.is_theory() && args.iter().all(|a| a.theory_term_with(ok_var)),
        }
    }

    /// Membership in T(Fth, Vth).
    pub fn is_theory_term(&self) -> bool {
        self.theory_term_with(&|_| true)
    }

    /// Membership in T(Fth, X).
    pub fn is_theory_term_over(&self, xs: &BTreeSet<Variable>) -> bool {
        self.theory_term_with(&|v| xs.contains(v))
    }

    pub fn vars_into(&self, out: &mut BTreeSet<Variable>) {
        match self {
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::Val(_) => {}
            Term::App(_, args) => args.iter().for_each(|a| a.vars_into(out)),
        }
    }

    pub fn vars(&self) -> BTreeSet<Variable> {
        let mut out = BTreeSet::new();
        self.vars_into(&mut out);
        out
    }

    pub fn contains_var(&self, x: &Variable) -> bool {
        match self {
            Term::Var(v) => v == x,
            Term::Val(_) => false,
            Term::App(_, args) => args.iter().any(|a| a.contains_var(x)),
        }
    }

    /// Positions in pre-order, root first.
    pub fn positions(&self) -> Vec<Position> {
        let mut out = Vec::new();
        let mut path = Vec::new();
        fn go(t: &Term, path: &mut Vec<usize>, out: &mut Vec<Position>) {
            out.push(Position(path.clone()));
            for (i, a) in t.args().iter().enumerate() {
                path.push(i + 1);
                go(a, path, out);
                path.pop();
            }
        }
        go(self, &mut path, &mut out);
        out
    }

    /// Subterms in pre-order, paired with their positions.
    pub fn subterms(&self) -> Vec<(Position, &Term)> {
        let mut out = Vec::new();
        fn go<'a>(t: &'a Term, path: &mut Vec<usize>, out: &mut Vec<(Position, &'a Term)>) {
            out.push((Position(path.clone()), t));
            for (i, a) in t.args().iter().enumerate() {
                path.push(i + 1);
                go(a, path, out);
                path.pop();
            }
        }
        go(self, &mut Vec::new(), &mut out);
        out
    }

    pub fn subterm_at(&self, p: &Position) -> Result<&Term, TermError> {
        let mut cur = self;
        for &i in &p.0 {
            cur = i
                .checked_sub(1)
                .and_then(|i| cur.args().get(i))
                .ok_or_else(|| TermError::InvalidPosition(p.clone(), self.clone()))?;
        }
        Ok(cur)
    }

    pub fn replace_at(&self, p: &Position, u: Term) -> Result<Term, TermError> {
        let old = self.subterm_at(p)?;
        let (expected, found) = (old.sort(), u.sort());
        if expected != found {
            return Err(TermError::SortMismatch { expected, found });
        }
        Ok(self.replace_unchecked(&p.0, u))
    }

    fn replace_unchecked(&self, path: &[usize], u: Term) -> Term {
        match path.split_first() {
            None => u,
            Some((&i, rest)) => match self {
                Term::App(f, args) => {
                    let mut new_args = args.to_vec();
                    new_args[i - 1] = args[i - 1].replace_unchecked(rest, u);
                    Term::App(f.clone(), new_args.into())
                }
                _ => unreachable!("position validated"),
            },
        }
    }

    pub fn apply(&self, sigma: &Substitution) -> Term {
        if sigma.is_empty() {
            return self.clone();
        }
        match self {
            Term::Var(v) => sigma.get(v).cloned().unwrap_or_else(|| self.clone()),
            Term::Val(_) => self.clone(),
            Term::App(f, args) => {
                Term::App(f.clone(), args.iter().map(|a| a.apply(sigma)).collect())
            }
        }
    }

    /// Rebuilds an application with new arguments of the same sorts.
    pub fn with_args(&self, args: Vec<Term>) -> Term {
        match self {
            Term::App(f, _) => Term::App(f.clone(), args.into()),
            _ => self.clone(),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Val(v) => write!(f, "{v}"),
            Term::App(s, args) if args.is_empty() => write!(f, "{s}"),
            Term::App(s, args) => {
                write!(f, "({s}")?;
                for a in args.iter() {
                    write!(f, " {a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Variables of `t`, optionally restricted to one sort kind.
pub fn vars_of(t: &Term, filter: Option<SortKind>) -> BTreeSet<Variable> {
    let mut vs = t.vars();
    if let Some(k) = filter {
        vs.retain(|v| v.sort.kind == k);
    }
    vs
}

/// A finite, sort-preserving substitution applied simultaneously.
/// Identity bindings are never stored.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Substitution {
    map: BTreeMap<Variable, Term>,
}

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(
        pairs: impl IntoIterator<Item = (Variable, Term)>,
    ) -> Result<Self, TermError> {
        let mut s = Substitution::new();
        for (v, t) in pairs {
            s.insert(v, t)?;
        }
        Ok(s)
    }

    pub fn insert(&mut self, v: Variable, t: Term) -> Result<(), TermError> {
        let found = t.sort();
        if found != v.sort {
            return Err(TermError::SortMismatch {
                expected: v.sort.clone(),
                found,
            });
        }
        if t.as_var() == Some(&v) {
            self.map.remove(&v);
        } else {
            self.map.insert(v, t);
        }
        Ok(())
    }

    pub fn get(&self, v: &Variable) -> Option<&Term> {
        self.map.get(v)
    }

    pub fn image(&self, v: &Variable) -> Term {
        self.map
            .get(v)
            .cloned()
            .unwrap_or_else(|| Term::Var(v.clone()))
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn domain(&self) -> impl Iterator<Item = &Variable> {
        self.map.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Variable, &Term)> {
        self.map.iter()
    }

    pub fn remove(&mut self, v: &Variable) -> Option<Term> {
        self.map.remove(v)
    }

    /// Variables mapped to values.
    pub fn value_domain(&self) -> BTreeSet<Variable> {
        self.map
            .iter()
            .filter(|(_, t)| t.is_value())
            .map(|(v, _)| v.clone())
            .collect()
    }

    /// Keeps only the bindings for the given variables.
    pub fn restrict(&self, keep: &BTreeSet<Variable>) -> Substitution {
        Substitution {
            map: self
                .map
                .iter()
                .filter(|(v, _)| keep.contains(*v))
                .map(|(v, t)| (v.clone(), t.clone()))
                .collect(),
        }
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (v, t)) in self.map.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v} -> {t}")?;
        }
        f.write_str("}")
    }
}

/// Extends `sigma` so that `pattern·sigma = subject`.
pub fn match_into(pattern: &Term, subject: &Term, sigma: &mut Substitution) -> bool {
    match (pattern, subject) {
        (Term::Var(v), _) => {
            if v.sort != subject.sort() {
                return false;
            }
            match sigma.map.get(v) {
                Some(bound) => bound == subject,
                None => {
                    sigma.map.insert(v.clone(), subject.clone());
                    true
                }
            }
        }
        (Term::Val(a), Term::Val(b)) => a == b,
        (Term::App(f, ps), Term::App(g, ss)) => {
            f == g
                && ps
                    .iter()
                    .zip(ss.iter())
                    .all(|(p, s)| match_into(p, s, sigma))
        }
        _ => false,
    }
}

/// Syntactic matching; the most general matcher or `None`.
pub fn match_term(pattern: &Term, subject: &Term) -> Option<Substitution> {
    let mut sigma = Substitution::new();
    if !match_into(pattern, subject, &mut sigma) {
        return None;
    }
    sigma.map.retain(|v, t| t.as_var() != Some(v));
    Some(sigma)
}

/// Most general unifier with occurs check.
pub fn unify(s: &Term, t: &Term) -> Option<Substitution> {
    if s.sort() != t.sort() {
        return None;
    }
    let mut bindings: BTreeMap<Variable, Term> = BTreeMap::new();
    let mut stack = vec![(s.clone(), t.clone())];
    fn walk(t: &Term, b: &BTreeMap<Variable, Term>) -> Term {
        let mut cur = t.clone();
        while let Term::Var(v) = &cur {
            match b.get(v) {
                Some(next) => cur = next.clone(),
                None => break,
            }
        }
        cur
    }
    fn occurs(x: &Variable, t: &Term, b: &BTreeMap<Variable, Term>) -> bool {
        match walk(t, b) {
            Term::Var(v) => &v == x,
            Term::Val(_) => false,
            Term::App(_, args) => args.iter().any(|a| occurs(x, a, b)),
        }
    }
    while let Some((a, c)) = stack.pop() {
        let a = walk(&a, &bindings);
        let c = walk(&c, &bindings);
        match (&a, &c) {
            (Term::Var(x), Term::Var(y)) if x == y => {}
            (Term::Var(x), _) => {
                if occurs(x, &c, &bindings) {
                    return None;
                }
                bindings.insert(x.clone(), c.clone());
            }
            (_, Term::Var(y)) => {
                if occurs(y, &a, &bindings) {
                    return None;
                }
                bindings.insert(y.clone(), a.clone());
            }
            (Term::Val(u), Term::Val(v)) => {
                if u != v {
                    return None;
                }
            }
            (Term::App(f, xs), Term::App(g, ys)) => {
                if f != g {
                    return None;
                }
                stack.extend(xs.iter().cloned().zip(ys.iter().cloned()));
            }
            _ => return None,
        }
    }
    fn resolve(t: &Term, b: &BTreeMap<Variable, Term>) -> Term {
        match walk(t, b) {
            Term::App(f, args) => Term::App(f, args.iter().map(|a| resolve(a, b)).collect()),
            other => other,
        }
    }
    let mut sigma = Substitution::new();
    let keys: Vec<Variable> = bindings.keys().cloned().collect();
    for v in keys {
        let img = resolve(&Term::Var(v.clone()), &bindings);
        if img.as_var() != Some(&v) {
            sigma.map.insert(v, img);
        }
    }
    Some(sigma)
}

/// A multi-hole context: `base` with holes at pairwise disjoint positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiContext {
    pub base: Term,
    pub holes: Vec<Position>,
}

impl MultiContext {
    /// Plugs `fillers` into the holes, in order.
    pub fn fill(&self, fillers: &[Term]) -> Result<Term, TermError> {
        let mut t = self.base.clone();
        for (p, u) in self.holes.iter().zip(fillers) {
            t = t.replace_at(p, u.clone())?;
        }
        Ok(t)
    }
}

/// Maximal shared context of `s` and `t` together with the differing pairs.
pub fn decompose_differences(s: &Term, t: &Term) -> (MultiContext, Vec<(Term, Term)>) {
    let mut holes = Vec::new();
    let mut pairs = Vec::new();
    fn go(
        s: &Term,
        t: &Term,
        path: &mut Vec<usize>,
        holes: &mut Vec<Position>,
        pairs: &mut Vec<(Term, Term)>,
    ) {
        if s == t {
            return;
        }
        match (s, t) {
            (Term::App(f, xs), Term::App(g, ys)) if f == g => {
                for (i, (x, y)) in xs.iter().zip(ys.iter()).enumerate() {
                    path.push(i + 1);
                    go(x, y, path, holes, pairs);
                    path.pop();
                }
            }
            _ => {
                holes.push(Position(path.clone()));
                pairs.push((s.clone(), t.clone()));
            }
        }
    }
    go(s, t, &mut Vec::new(), &mut holes, &mut pairs);
    (
        MultiContext {
            base: s.clone(),
            holes,
        },
        pairs,
    )
}
