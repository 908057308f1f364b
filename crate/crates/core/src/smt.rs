// SPDX-License-Identifier: Apache-2.0

//! SMT-LIB v2 session with an external solver process.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use num_bigint::BigInt;

use crate::models::{OracleError, Verdict};
use crate::sexp::{self, Sexp};
use crate::terms::{Sort, Substitution, Term, TheoryOp, Value, Variable};

/// One solver process. Queries are serialized through `&mut self`.
#[derive(Debug)]
pub struct SolverSession {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
    timeout: Duration,
}

impl SolverSession {
    /// Starts `command` (whitespace-separated program and arguments).
    pub fn start(command: &str, timeout: Duration) -> Result<Self, OracleError> {
        let mut parts = command.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| OracleError::SolverFailure("empty solver command".into()))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| OracleError::SolverFailure(format!("cannot start {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut s = SolverSession {
            child,
            stdin,
            lines: rx,
            timeout,
        };
        s.send("(set-option :produce-models true)\n(set-logic QF_LIA)\n")?;
        Ok(s)
    }

    fn send(&mut self, text: &str) -> Result<(), OracleError> {
        self.stdin
            .write_all(text.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| OracleError::SolverFailure(format!("write failed: {e}")))
    }

    fn read_line(&mut self) -> Result<String, OracleError> {
        loop {
            match self.lines.recv_timeout(self.timeout) {
                Ok(l) if l.trim().is_empty() => continue,
                Ok(l) => return Ok(l),
                Err(RecvTimeoutError::Timeout) => {
                    return Err(OracleError::SolverFailure("solver timed out".into()))
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(OracleError::SolverFailure("solver exited".into()))
                }
            }
        }
    }

    /// Reads one balanced s-expression, possibly spanning several lines.
    fn read_sexp(&mut self) -> Result<String, OracleError> {
        let mut buf = String::new();
        let mut depth: i64 = 0;
        loop {
            let line = self.read_line()?;
            for c in line.chars() {
                match c {
                    '(' => depth += 1,
                    ')' => depth -= 1,
                    _ => {}
                }
            }
            buf.push_str(&line);
            buf.push('\n');
            if depth <= 0 {
                return Ok(buf);
            }
        }
    }

    /// Asks whether the negation of `phi` is unsatisfiable.
    pub fn check_validity(&mut self, phi: &Term) -> Result<Verdict, OracleError> {
        let vars: BTreeSet<Variable> = phi.vars();
        let mut q = String::from("(push 1)\n");
        for v in &vars {
            let sort = if *v.sort() == Sort::bool() {
                "Bool"
            } else {
                "Int"
            };
            q.push_str(&format!("(declare-const {} {sort})\n", smt_name(v)));
        }
        q.push_str(&format!("(assert (not {}))\n(check-sat)\n", to_smt(phi)));
        self.send(&q)?;
        let answer = self.read_line()?;
        let verdict = match answer.trim() {
            "unsat" => Verdict::Valid,
            "sat" => {
                self.send("(get-model)\n")?;
                let text = self.read_sexp()?;
                Verdict::Invalid(parse_model(&text, &vars)?)
            }
            "unknown" | "timeout" => Verdict::Unknown(format!("solver answered {answer}")),
            other => {
                return Err(OracleError::SolverFailure(format!(
                    "unexpected solver output: {other}"
                )))
            }
        };
        self.send("(pop 1)\n")?;
        Ok(verdict)
    }
}

impl Drop for SolverSession {
    fn drop(&mut self) {
        let _ = self.send("(exit)\n");
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn smt_name(v: &Variable) -> String {
    format!("|{}_{}|", v.name(), v.sort())
}

/// SMT-LIB rendering; division by zero is guarded to match the totalized
/// interpretation.
pub fn to_smt(t: &Term) -> String {
    match t {
        Term::Var(v) => smt_name(v),
        Term::Val(Value::Bool(b)) => b.to_string(),
        Term::Val(Value::Int(i)) => {
            if i.sign() == num_bigint::Sign::Minus {
                format!("(- {})", -i)
            } else {
                i.to_string()
            }
        }
        Term::App(f, args) => {
            let a: Vec<String> = args.iter().map(to_smt).collect();
            match f.op() {
                Some(TheoryOp::Mod) => {
                    format!("(ite (= {d} 0) {n} (mod {n} {d}))", n = a[0], d = a[1])
                }
                Some(TheoryOp::Div) => {
                    format!("(ite (= {d} 0) 0 (div {n} {d}))", n = a[0], d = a[1])
                }
                Some(TheoryOp::Iff) => format!("(= {} {})", a[0], a[1]),
                Some(op) => format!("({} {})", op.name(), a.join(" ")),
                None => format!("({} {})", f.name(), a.join(" ")),
            }
        }
    }
}

fn parse_model(text: &str, vars: &BTreeSet<Variable>) -> Result<Substitution, OracleError> {
    let bad = |m: &str| OracleError::SolverFailure(format!("malformed model: {m}"));
    let parsed = sexp::parse_all(text).map_err(|e| bad(&e.to_string()))?;
    let mut items: Vec<Sexp> = Vec::new();
    for top in parsed {
        if let Sexp::List(xs, _) = top {
            for x in xs {
                items.push(x);
            }
        }
    }
    let mut sigma = Substitution::new();
    for item in items {
        let Sexp::List(parts, _) = &item else {
            continue;
        };
        if parts.len() != 5 || parts[0].atom() != Some("define-fun") {
            continue;
        }
        let name = parts[1].atom().ok_or_else(|| bad("name"))?;
        let Some(var) = vars.iter().find(|v| {
            let n = smt_name(v);
            n == name || n.trim_matches('|') == name
        }) else {
            continue;
        };
        let value = match &parts[4] {
            Sexp::Atom(a, _) if a == "true" => Value::Bool(true),
            Sexp::Atom(a, _) if a == "false" => Value::Bool(false),
            Sexp::Atom(a, _) => Value::Int(a.parse::<BigInt>().map_err(|_| bad(a))?),
            Sexp::List(xs, _) if xs.len() == 2 && xs[0].atom() == Some("-") => {
                let a = xs[1].atom().ok_or_else(|| bad("negation"))?;
                Value::Int(-a.parse::<BigInt>().map_err(|_| bad(a))?)
            }
            _ => return Err(bad("value")),
        };
        sigma
            .insert(var.clone(), Term::Val(value))
            .map_err(|e| bad(&e.to_string()))?;
    }
    for v in vars {
        if sigma.get(v).is_none() {
            let dflt = if *v.sort() == Sort::bool() {
                Value::Bool(false)
            } else {
                Value::int(0)
            };
            sigma
                .insert(v.clone(), Term::Val(dflt))
                .expect("sorted default");
        }
    }
    Ok(sigma)
}
