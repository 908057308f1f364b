// SPDX-License-Identifier: Apache-2.0

//! Concrete s-expression syntax for theories, goals, proofs and algebras.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use thiserror::Error;

use crate::models::{ModelKind, UnderlyingModel};
use crate::proofs::{Derivation, RuleName};
use crate::rewriting::{CETheory, CeError, ConstrainedEquation};
use crate::sexp::{self, Sexp, Span};
use crate::terms::{FunSymbol, Signature, Sort, SortKind, Substitution, Term, Value, Variable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Parse,
    UnknownSort,
    UnknownSymbol,
    IllSorted,
    ConstraintVarsNotInX,
    Invalid,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorKind::Parse => "parse-error",
            ErrorKind::UnknownSort => "unknown-sort",
            ErrorKind::UnknownSymbol => "unknown-symbol",
            ErrorKind::IllSorted => "ill-sorted-equation",
            ErrorKind::ConstraintVarsNotInX => "constraint-vars-not-in-X",
            ErrorKind::Invalid => "invalid",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{span}: {kind}: {message}")]
pub struct SyntaxError {
    pub kind: ErrorKind,
    pub span: Span,
    pub message: String,
}

pub(crate) fn err(kind: ErrorKind, at: &Sexp, message: impl Into<String>) -> SyntaxError {
    SyntaxError {
        kind,
        span: at.span(),
        message: message.into(),
    }
}

impl From<sexp::SexpError> for SyntaxError {
    fn from(e: sexp::SexpError) -> Self {
        SyntaxError {
            kind: ErrorKind::Parse,
            span: e.span,
            message: e.message,
        }
    }
}

/// Names in scope while reading terms.
#[derive(Debug, Clone)]
pub struct Scope<'a> {
    pub signature: &'a Signature,
    pub model: &'a UnderlyingModel,
    pub vars: BTreeMap<String, Variable>,
}

const THEORY_NAMES: &[&str] = &[
    "+", "-", "*", "mod", "div", "=", "<", "<=", ">", ">=", "not", "and", "or", "=>", "<=>",
];

pub fn parse_int(a: &str) -> Option<BigInt> {
    let digits = a.strip_prefix('-').unwrap_or(a);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    a.parse().ok()
}

impl<'a> Scope<'a> {
    pub fn new(signature: &'a Signature, model: &'a UnderlyingModel) -> Self {
        Scope {
            signature,
            model,
            vars: BTreeMap::new(),
        }
    }

    pub fn sort(&self, at: &Sexp) -> Result<Sort, SyntaxError> {
        let name = at
            .atom()
            .ok_or_else(|| err(ErrorKind::Parse, at, "expected a sort name"))?;
        self.signature
            .sort(name)
            .cloned()
            .ok_or_else(|| err(ErrorKind::UnknownSort, at, format!("unknown sort {name}")))
    }

    /// `name` or `name:Sort`.
    pub fn variable(&self, at: &Sexp) -> Result<Variable, SyntaxError> {
        let a = at
            .atom()
            .ok_or_else(|| err(ErrorKind::Parse, at, "expected a variable"))?;
        if let Some((name, sort)) = a.split_once(':') {
            let s =
                self.signature.sort(sort).cloned().ok_or_else(|| {
                    err(ErrorKind::UnknownSort, at, format!("unknown sort {sort}"))
                })?;
            return Ok(Variable::new(name, s));
        }
        self.vars.get(a).cloned().ok_or_else(|| {
            err(
                ErrorKind::UnknownSymbol,
                at,
                format!("undeclared variable {a}"),
            )
        })
    }

    pub fn declare(&mut self, at: &Sexp, v: Variable) -> Result<(), SyntaxError> {
        if !self.signature.symbols_named(v.name()).is_empty() {
            return Err(err(
                ErrorKind::Invalid,
                at,
                format!("variable {} shadows a function symbol", v.name()),
            ));
        }
        self.vars.insert(v.name().to_string(), v);
        Ok(())
    }

    /// `(vars (x S) ...)` or `(vars x:S y ...)`.
    pub fn declare_vars(&mut self, items: &[Sexp]) -> Result<Vec<Variable>, SyntaxError> {
        let mut out = Vec::new();
        for it in items {
            let v = match it {
                Sexp::List(xs, _) if xs.len() == 2 => {
                    let name = xs[0]
                        .atom()
                        .ok_or_else(|| err(ErrorKind::Parse, it, "expected (name Sort)"))?;
                    Variable::new(name, self.sort(&xs[1])?)
                }
                Sexp::Atom(..) => self.variable(it)?,
                _ => return Err(err(ErrorKind::Parse, it, "expected (name Sort)")),
            };
            self.declare(it, v.clone())?;
            out.push(v);
        }
        Ok(out)
    }

    pub fn term(&self, at: &Sexp) -> Result<Term, SyntaxError> {
        match at {
            Sexp::Atom(a, _) => self.atom(at, a),
            Sexp::List(xs, _) => {
                let head = xs
                    .first()
                    .and_then(Sexp::atom)
                    .ok_or_else(|| err(ErrorKind::Parse, at, "expected (symbol args...)"))?;
                let args: Vec<Term> = xs[1..]
                    .iter()
                    .map(|x| self.term(x))
                    .collect::<Result<_, _>>()?;
                self.apply(at, head, args)
            }
        }
    }

    fn atom(&self, at: &Sexp, a: &str) -> Result<Term, SyntaxError> {
        let value = if let Some(i) = parse_int(a) {
            Some(Value::Int(i))
        } else {
            match a {
                "true" => Some(Value::Bool(true)),
                "false" => Some(Value::Bool(false)),
                _ => None,
            }
        };
        if let Some(v) = value {
            if !self.model.contains(&v) {
                return Err(err(
                    ErrorKind::IllSorted,
                    at,
                    format!("{v} is not a value of the {} model", self.model.kind()),
                ));
            }
            return Ok(Term::Val(v));
        }
        if a.contains(':') || self.vars.contains_key(a) {
            return Ok(Term::Var(self.variable(at)?));
        }
        match self
            .signature
            .symbols_named(a)
            .iter()
            .find(|f| f.arity() == 0)
        {
            Some(f) => Ok(Term::constant(f.clone())),
            None => Err(err(
                ErrorKind::UnknownSymbol,
                at,
                format!("unknown symbol {a}"),
            )),
        }
    }

    fn apply(&self, at: &Sexp, head: &str, args: Vec<Term>) -> Result<Term, SyntaxError> {
        if (head == "and" || head == "or") && args.len() != 2 {
            if args.is_empty() {
                return Ok(Term::bool(head == "and"));
            }
            let mut it = args.into_iter().rev();
            let last = it.next().unwrap();
            return it.try_fold(last, |acc, a| self.apply(at, head, vec![a, acc]));
        }
        let sorts: Vec<Sort> = args.iter().map(Term::sort).collect();
        match self.signature.resolve(head, &sorts) {
            Some(f) => Ok(Term::App(f.clone(), args.into())),
            None if self.signature.symbols_named(head).is_empty()
                && !THEORY_NAMES.contains(&head) =>
            {
                Err(err(
                    ErrorKind::UnknownSymbol,
                    at,
                    format!("unknown symbol {head}"),
                ))
            }
            None => {
                let shown: Vec<String> = sorts.iter().map(|s| s.to_string()).collect();
                Err(err(
                    ErrorKind::IllSorted,
                    at,
                    format!("no declaration of {head} accepts ({})", shown.join(" ")),
                ))
            }
        }
    }
}

/// A parsed theory file: the theory plus its named goals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TheoryFile {
    pub theory: CETheory,
    pub goals: Vec<(String, ConstrainedEquation)>,
    pub vars: BTreeMap<String, Variable>,
}

impl TheoryFile {
    pub fn goal(&self, name: &str) -> Option<&ConstrainedEquation> {
        self.goals.iter().find(|(n, _)| n == name).map(|(_, g)| g)
    }

    pub fn scope(&self) -> Scope<'_> {
        Scope {
            signature: &self.theory.signature,
            model: &self.theory.model,
            vars: self.vars.clone(),
        }
    }
}

pub fn parse_model(at: &Sexp) -> Result<UnderlyingModel, SyntaxError> {
    let kind = match at {
        Sexp::Atom(a, _) if a == "lia" => ModelKind::Lia,
        Sexp::Atom(a, _) if a == "bool" => ModelKind::Bool,
        Sexp::List(xs, _) if xs.len() == 2 && xs[0].atom() == Some("intmod") => {
            let n = xs[1]
                .atom()
                .and_then(|a| a.parse::<u32>().ok())
                .ok_or_else(|| err(ErrorKind::Parse, at, "expected (intmod N)"))?;
            ModelKind::IntMod(n)
        }
        _ => {
            return Err(err(
                ErrorKind::Parse,
                at,
                "expected lia, bool or (intmod N)",
            ))
        }
    };
    UnderlyingModel::new(kind).map_err(|e| err(ErrorKind::Invalid, at, e.to_string()))
}

/// `[(pi v...)] [(constraint φ)] L R` starting at `items`.
pub fn parse_ce(
    scope: &Scope,
    at: &Sexp,
    items: &[Sexp],
) -> Result<ConstrainedEquation, SyntaxError> {
    let mut rest = items;
    let mut pi: Option<BTreeSet<Variable>> = None;
    let mut phi = Term::bool(true);
    while let Some(first) = rest.first() {
        match first.head() {
            Some("pi") => {
                let vs = first.list().unwrap()[1..]
                    .iter()
                    .map(|v| scope.variable(v))
                    .collect::<Result<BTreeSet<_>, _>>()?;
                pi = Some(vs);
            }
            Some("constraint") => {
                let xs = first.list().unwrap();
                if xs.len() != 2 {
                    return Err(err(ErrorKind::Parse, first, "expected (constraint φ)"));
                }
                phi = scope.term(&xs[1])?;
            }
            _ => break,
        }
        rest = &rest[1..];
    }
    if rest.len() != 2 {
        return Err(err(ErrorKind::Parse, at, "expected left and right sides"));
    }
    let lhs = scope.term(&rest[0])?;
    let rhs = scope.term(&rest[1])?;
    let xs = pi.unwrap_or_else(|| phi.vars());
    ConstrainedEquation::new(xs, lhs, rhs, phi).map_err(|e| ce_error(at, e))
}

fn ce_error(at: &Sexp, e: CeError) -> SyntaxError {
    let kind = match e {
        CeError::SortMismatch(..) | CeError::BadConstraint(_) => ErrorKind::IllSorted,
        CeError::ConstraintVarNotInX(_) => ErrorKind::ConstraintVarsNotInX,
        _ => ErrorKind::Invalid,
    };
    err(kind, at, e.to_string())
}

pub fn parse_theory(text: &str) -> Result<TheoryFile, SyntaxError> {
    let forms = sexp::parse_all(text)?;
    let model_form = forms
        .iter()
        .find(|f| f.head() == Some("model"))
        .ok_or_else(|| SyntaxError {
            kind: ErrorKind::Parse,
            span: Span { line: 1, col: 1 },
            message: "missing (model ...) declaration".into(),
        })?;
    let mx = model_form.list().unwrap();
    if mx.len() != 2 {
        return Err(err(ErrorKind::Parse, model_form, "expected (model M)"));
    }
    let model = parse_model(&mx[1])?;
    let mut sig = model.theory_signature().clone();
    let mut vars: BTreeMap<String, Variable> = BTreeMap::new();
    let mut equations = Vec::new();
    let mut goals = Vec::new();
    for form in &forms {
        let items = form
            .list()
            .ok_or_else(|| err(ErrorKind::Parse, form, "expected a declaration"))?;
        match form.head() {
            Some("model") => {
                if !std::ptr::eq(form, model_form) {
                    return Err(err(ErrorKind::Invalid, form, "duplicate model declaration"));
                }
            }
            Some("sort") => {
                for s in &items[1..] {
                    let name = s
                        .atom()
                        .ok_or_else(|| err(ErrorKind::Parse, s, "expected a sort name"))?;
                    if name == "Int" || name == "Bool" {
                        return Err(err(ErrorKind::Invalid, s, format!("{name} is reserved")));
                    }
                    sig.add_sort(Sort::new(name, SortKind::Term))
                        .map_err(|e| err(ErrorKind::Invalid, s, e.to_string()))?;
                }
            }
            Some("fun") => {
                if items.len() != 4 {
                    return Err(err(
                        ErrorKind::Parse,
                        form,
                        "expected (fun f (args) Result)",
                    ));
                }
                let name = items[1]
                    .atom()
                    .ok_or_else(|| err(ErrorKind::Parse, &items[1], "expected a name"))?;
                let scope = Scope::new(&sig, &model);
                let args = items[2]
                    .list()
                    .ok_or_else(|| err(ErrorKind::Parse, &items[2], "expected argument sorts"))?
                    .iter()
                    .map(|s| scope.sort(s))
                    .collect::<Result<Vec<_>, _>>()?;
                let res = scope.sort(&items[3])?;
                if vars.contains_key(name) || parse_int(name).is_some() || name.contains(':') {
                    return Err(err(
                        ErrorKind::Invalid,
                        &items[1],
                        format!("bad symbol name {name}"),
                    ));
                }
                sig.add_symbol(FunSymbol::term(name, args, res))
                    .map_err(|e| err(ErrorKind::Invalid, form, e.to_string()))?;
            }
            Some("vars") => {
                let mut scope = Scope::new(&sig, &model);
                scope.vars = std::mem::take(&mut vars);
                scope.declare_vars(&items[1..])?;
                vars = scope.vars;
            }
            Some("eq") => {
                let scope = Scope {
                    signature: &sig,
                    model: &model,
                    vars: vars.clone(),
                };
                equations.push(parse_ce(&scope, form, &items[1..])?);
            }
            Some("goal") => {
                let name = items
                    .get(1)
                    .and_then(Sexp::atom)
                    .ok_or_else(|| err(ErrorKind::Parse, form, "expected (goal NAME ...)"))?;
                let scope = Scope {
                    signature: &sig,
                    model: &model,
                    vars: vars.clone(),
                };
                goals.push((name.to_string(), parse_ce(&scope, form, &items[2..])?));
            }
            _ => return Err(err(ErrorKind::Parse, form, "unknown declaration")),
        }
    }
    let theory = CETheory::new(model, sig, equations).map_err(|e| SyntaxError {
        kind: ErrorKind::Invalid,
        span: Span { line: 1, col: 1 },
        message: e.to_string(),
    })?;
    Ok(TheoryFile {
        theory,
        goals,
        vars,
    })
}

/// Renders terms with `name:Sort` annotations on the variables in `annotate`.
pub struct Printer {
    pub annotate: BTreeSet<Variable>,
}

impl Printer {
    /// Declared variables print bare; the rest are annotated.
    pub fn for_scope(declared: &BTreeMap<String, Variable>, used: &BTreeSet<Variable>) -> Self {
        Printer {
            annotate: used
                .iter()
                .filter(|v| declared.get(v.name()) != Some(*v))
                .cloned()
                .collect(),
        }
    }

    pub fn var(&self, v: &Variable) -> String {
        if self.annotate.contains(v) {
            format!("{}:{}", v.name(), v.sort())
        } else {
            v.name().to_string()
        }
    }

    pub fn term(&self, t: &Term) -> String {
        let mut out = String::new();
        self.write(t, &mut out);
        out
    }

    fn write(&self, t: &Term, out: &mut String) {
        match t {
            Term::Var(v) => out.push_str(&self.var(v)),
            Term::Val(v) => out.push_str(&v.to_string()),
            Term::App(f, args) if args.is_empty() => out.push_str(f.name()),
            Term::App(f, args) => {
                out.push('(');
                out.push_str(f.name());
                for a in args.iter() {
                    out.push(' ');
                    self.write(a, out);
                }
                out.push(')');
            }
        }
    }

    /// `[(pi ...)] [(constraint φ)] L R`, omitting defaults.
    pub fn ce_body(&self, ce: &ConstrainedEquation) -> String {
        let mut parts = Vec::new();
        if ce.logical_vars != ce.constraint.vars() {
            let vs: Vec<String> = ce.logical_vars.iter().map(|v| self.var(v)).collect();
            parts.push(format!(
                "(pi{}{})",
                if vs.is_empty() { "" } else { " " },
                vs.join(" ")
            ));
        }
        if ce.constraint != Term::bool(true) {
            parts.push(format!("(constraint {})", self.term(&ce.constraint)));
        }
        parts.push(self.term(&ce.lhs));
        parts.push(self.term(&ce.rhs));
        parts.join(" ")
    }
}

/// Variables used by `ces`, declared once per unambiguous name.
pub fn declarable_vars<'a>(
    ces: impl IntoIterator<Item = &'a ConstrainedEquation>,
) -> (BTreeMap<String, Variable>, BTreeSet<Variable>) {
    let mut used = BTreeSet::new();
    for ce in ces {
        used.extend(ce.vars());
        used.extend(ce.logical_vars.iter().cloned());
    }
    let mut by_name: BTreeMap<String, Vec<Variable>> = BTreeMap::new();
    for v in &used {
        by_name
            .entry(v.name().to_string())
            .or_default()
            .push(v.clone());
    }
    let declared = by_name
        .into_iter()
        .filter(|(_, vs)| vs.len() == 1)
        .map(|(n, mut vs)| (n, vs.pop().unwrap()))
        .collect();
    (declared, used)
}

pub fn print_vars_decl(declared: &BTreeMap<String, Variable>) -> Option<String> {
    if declared.is_empty() {
        return None;
    }
    let items: Vec<String> = declared
        .values()
        .map(|v| format!("({} {})", v.name(), v.sort()))
        .collect();
    Some(format!("(vars {})", items.join(" ")))
}

pub fn print_theory(tf: &TheoryFile) -> String {
    let th = &tf.theory;
    let mut out = Vec::new();
    out.push(format!("(model {})", th.model.kind()));
    for s in th.signature.sorts().filter(|s| !s.is_theory()) {
        out.push(format!("(sort {})", s.name()));
    }
    for f in th.signature.term_symbols() {
        let args: Vec<&str> = f.arg_sorts().iter().map(Sort::name).collect();
        out.push(format!(
            "(fun {} ({}) {})",
            f.name(),
            args.join(" "),
            f.result_sort()
        ));
    }
    let ces = th.equations.iter().chain(tf.goals.iter().map(|(_, g)| g));
    let (mut declared, used) = declarable_vars(ces);
    for (n, v) in &tf.vars {
        if !declared.contains_key(n) && !used.iter().any(|u| u.name() == n) {
            declared.insert(n.clone(), v.clone());
        }
    }
    if let Some(d) = print_vars_decl(&declared) {
        out.push(d);
    }
    let p = Printer::for_scope(&declared, &used);
    for eq in &th.equations {
        out.push(format!("(eq {})", p.ce_body(eq)));
    }
    for (name, g) in &tf.goals {
        out.push(format!("(goal {name} {})", p.ce_body(g)));
    }
    out.join("\n") + "\n"
}

/// Parses a standalone term against a theory file's scope.
pub fn parse_term(tf: &TheoryFile, text: &str) -> Result<Term, SyntaxError> {
    let s = sexp::parse_one(text)?;
    tf.scope().term(&s)
}

/// Parses `[(pi ...)] [(constraint φ)] L R` (optionally wrapped in a list).
pub fn parse_goal(tf: &TheoryFile, text: &str) -> Result<ConstrainedEquation, SyntaxError> {
    let forms = sexp::parse_all(text)?;
    let scope = tf.scope();
    let at = forms
        .first()
        .cloned()
        .unwrap_or(Sexp::Atom(String::new(), Span::default()));
    if forms.len() == 1 {
        if let Some(xs) = forms[0].list() {
            if xs.first().and_then(Sexp::atom) == Some("goal") {
                return parse_ce(&scope, &forms[0], &xs[2..]);
            }
            if xs.first().and_then(Sexp::atom) == Some("eq") {
                return parse_ce(&scope, &forms[0], &xs[1..]);
            }
        }
    }
    parse_ce(&scope, &at, &forms)
}

/// Renders a term against the variable declarations of a theory file.
pub fn term_text(tf: &TheoryFile, t: &Term) -> String {
    let p = Printer::for_scope(&tf.vars, &t.vars());
    p.term(t)
}

pub fn ce_text(tf: &TheoryFile, ce: &ConstrainedEquation) -> String {
    let mut used = ce.vars();
    used.extend(ce.logical_vars.iter().cloned());
    let p = Printer::for_scope(&tf.vars, &used);
    p.ce_body(ce)
}

/// Reads a derivation: an optional `(vars ...)` header followed by one node
/// `(RULE (conclusion CE) [(subst (x T) ...)] PREMISE...)`.
pub fn parse_proof(tf: &TheoryFile, text: &str) -> Result<Derivation, SyntaxError> {
    let forms = sexp::parse_all(text)?;
    let mut scope = tf.scope();
    let mut root = None;
    for form in &forms {
        if form.head() == Some("vars") {
            scope.declare_vars(&form.list().unwrap()[1..])?;
        } else if root.is_some() {
            return Err(err(ErrorKind::Parse, form, "expected a single derivation"));
        } else {
            root = Some(form);
        }
    }
    let root = root.ok_or_else(|| SyntaxError {
        kind: ErrorKind::Parse,
        span: Span { line: 1, col: 1 },
        message: "no derivation found".into(),
    })?;
    parse_node(&scope, root)
}

/// `(conclusion (vars x ...) LHS RHS [CONSTRAINT])`.
fn parse_conclusion(scope: &Scope, at: &Sexp) -> Result<ConstrainedEquation, SyntaxError> {
    let items = &at.list().unwrap()[1..];
    let vars_form = items
        .first()
        .filter(|f| f.head() == Some("vars"))
        .ok_or_else(|| {
            err(
                ErrorKind::Parse,
                at,
                "expected (conclusion (vars ...) LHS RHS CONSTRAINT)",
            )
        })?;
    if !(3..=4).contains(&items.len()) {
        return Err(err(
            ErrorKind::Parse,
            at,
            "expected (conclusion (vars ...) LHS RHS CONSTRAINT)",
        ));
    }
    let xs = vars_form.list().unwrap()[1..]
        .iter()
        .map(|v| scope.variable(v))
        .collect::<Result<BTreeSet<_>, _>>()?;
    let lhs = scope.term(&items[1])?;
    let rhs = scope.term(&items[2])?;
    let phi = match items.get(3) {
        Some(c) => scope.term(c)?,
        None => Term::bool(true),
    };
    ConstrainedEquation::new(xs, lhs, rhs, phi).map_err(|e| ce_error(at, e))
}

fn parse_node(scope: &Scope, at: &Sexp) -> Result<Derivation, SyntaxError> {
    let items = at
        .list()
        .filter(|xs| xs.len() >= 2)
        .ok_or_else(|| err(ErrorKind::Parse, at, "expected (RULE (conclusion ...) ...)"))?;
    let rule: RuleName = items[0]
        .atom()
        .ok_or_else(|| err(ErrorKind::Parse, &items[0], "expected a rule name"))?
        .parse()
        .map_err(|e: String| err(ErrorKind::Parse, &items[0], e))?;
    if items[1].head() != Some("conclusion") {
        return Err(err(
            ErrorKind::Parse,
            &items[1],
            "expected (conclusion ...)",
        ));
    }
    let conclusion = parse_conclusion(scope, &items[1])?;
    let mut rest = &items[2..];
    let mut witness = None;
    if let Some(first) = rest.first() {
        if first.head() == Some("subst") {
            let mut sigma = Substitution::new();
            for b in &first.list().unwrap()[1..] {
                let pair = b
                    .list()
                    .filter(|xs| xs.len() == 2)
                    .ok_or_else(|| err(ErrorKind::Parse, b, "expected (x T)"))?;
                let v = scope.variable(&pair[0])?;
                let t = scope.term(&pair[1])?;
                sigma
                    .insert(v, t)
                    .map_err(|e| err(ErrorKind::IllSorted, b, e.to_string()))?;
            }
            witness = Some(sigma);
            rest = &rest[1..];
        }
    }
    let premises = rest
        .iter()
        .map(|p| parse_node(scope, p))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Derivation {
        rule,
        conclusion,
        witness,
        premises,
    })
}

/// Prints a derivation with a `(vars ...)` header, one node per line.
pub fn print_proof(d: &Derivation) -> String {
    let nodes = d.nodes();
    let mut ces: Vec<ConstrainedEquation> =
        nodes.iter().map(|(_, n)| n.conclusion.clone()).collect();
    for (_, n) in &nodes {
        if let Some(w) = &n.witness {
            for (v, t) in w.iter() {
                let mut vs = t.vars();
                vs.insert(v.clone());
                ces.push(ConstrainedEquation {
                    logical_vars: vs,
                    lhs: Term::bool(true),
                    rhs: Term::bool(true),
                    constraint: Term::bool(true),
                });
            }
        }
    }
    let (declared, used) = declarable_vars(ces.iter());
    let p = Printer::for_scope(&declared, &used);
    let mut out = String::new();
    if let Some(h) = print_vars_decl(&declared) {
        out.push_str(&h);
        out.push('\n');
    }
    write_node(&p, d, 0, &mut out);
    out.push('\n');
    out
}

fn write_node(p: &Printer, d: &Derivation, depth: usize, out: &mut String) {
    out.push_str(&"  ".repeat(depth));
    let c = &d.conclusion;
    let xs: Vec<String> = c
        .logical_vars
        .iter()
        .map(|v| format!(" {}", p.var(v)))
        .collect();
    out.push_str(&format!(
        "({} (conclusion (vars{}) {} {} {})",
        d.rule,
        xs.concat(),
        p.term(&c.lhs),
        p.term(&c.rhs),
        p.term(&c.constraint)
    ));
    if let Some(w) = &d.witness {
        let parts: Vec<String> = w
            .iter()
            .map(|(v, t)| format!("({} {})", p.var(v), p.term(t)))
            .collect();
        out.push_str(&format!(
            " (subst{}{})",
            if parts.is_empty() { "" } else { " " },
            parts.join(" ")
        ));
    }
    for prem in &d.premises {
        out.push('\n');
        write_node(p, prem, depth + 1, out);
    }
    out.push(')');
}
