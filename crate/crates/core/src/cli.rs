// SPDX-License-Identifier: Apache-2.0

//! Command-line front end. [`run`] parses arguments, dispatches one command
//! and renders its report; the returned value is the process exit code.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value as Json};

use crate::algebra::{
    check_is_model, check_refutes, check_value_consistency, parse_algebra, print_algebra,
    search_counter_model, valuation_text, ConsistencyReport, CounterModelOutcome, ModelCheck,
    Valuation,
};
use crate::models::{Oracle, OracleError};
use crate::proofs::{
    check_proof, generate_calc_proof, path_text, prove_heuristic, CheckVerdict, Derivation,
    RuleName,
};
use crate::rewriting::{
    check_ce_validity, conversion_search, oriented_step_candidates, ConstrainedEquation,
    ConversionTrace, Pools, SearchOptions, StepKind, ValidityStatus,
};
use crate::smt::SolverSession;
use crate::syntax::{
    ce_text, parse_goal, parse_proof, parse_term, parse_theory, print_proof, print_theory,
    term_text, TheoryFile,
};

pub const SCHEMA: &str = "lcre.report/v1";

pub const EXIT_OK: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_UNKNOWN: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_ORACLE: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

/// Bounds and oracle settings shared by all commands.
#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    /// Rule steps allowed in a conversion.
    #[arg(long, global = true, default_value_t = 8, value_parser = clap::value_parser!(u32).range(1..))]
    pub bound: u32,
    /// Integer box [-B, B] for sampling logical variables.
    #[arg(long = "box", global = true, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    pub sample_box: u32,
    /// Integer radius of the value pool used to instantiate unbound variables.
    #[arg(long, global = true, default_value_t = 8, value_parser = clap::value_parser!(u32).range(1..))]
    pub pool: u32,
    /// Depth of the value-consistency search.
    #[arg(long, global = true, default_value_t = 8, value_parser = clap::value_parser!(u32).range(1..))]
    pub depth: u32,
    /// Fresh elements per theory sort in counter-model search.
    #[arg(long, global = true, default_value_t = 1)]
    pub extra: u32,
    /// Largest carrier tried for term sorts in counter-model search.
    #[arg(long, global = true, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
    pub term_card: u32,
    /// Rewrite steps explored by proof search.
    #[arg(long, global = true, default_value_t = 32, value_parser = clap::value_parser!(u32).range(1..))]
    pub proof_steps: u32,
    /// SMT-LIB solver command used when the built-in procedures are undecided.
    #[arg(long, global = true, env = "LCRE_SOLVER")]
    pub solver: Option<String>,
    /// Solver timeout per query, in milliseconds.
    #[arg(long, global = true, default_value_t = 5000, value_parser = clap::value_parser!(u64).range(1..))]
    pub timeout: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Seed for sample selection.
    #[arg(long, global = true, default_value_t = 0x5eed)]
    pub seed: u64,
}

impl RunConfig {
    pub fn search_options(&self) -> SearchOptions {
        SearchOptions {
            bound: self.bound as usize,
            pool_radius: self.pool as i64,
            sample_box: self.sample_box as i64,
            proof_steps: self.proof_steps as usize,
            seed: self.seed,
            ..SearchOptions::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GoalArgs {
    /// Name of a goal declared in the theory file.
    #[arg(short = 'g', long = "goal", conflicts_with = "equation")]
    pub goal: Option<String>,
    /// Goal text: `[(pi x ...)] [(constraint φ)] LHS RHS`.
    #[arg(short = 'e', long = "equation")]
    pub equation: Option<String>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Parse and validate a theory, printing it back.
    Parse { theory: PathBuf },
    /// Rewrite a term left to right until no equation applies.
    Rewrite {
        theory: PathBuf,
        #[arg(short = 't', long = "term")]
        term: String,
        #[arg(long, default_value_t = 16)]
        steps: usize,
        /// Prefer the deepest redex instead of the outermost one.
        #[arg(long)]
        innermost: bool,
    },
    /// Search for a conversion between two ground terms.
    Convert {
        theory: PathBuf,
        #[arg(short = 'l', long = "lhs")]
        lhs: String,
        #[arg(short = 'r', long = "rhs")]
        rhs: String,
    },
    /// Decide or sample validity of a constrained equation.
    Validate {
        theory: PathBuf,
        #[command(flatten)]
        goal: GoalArgs,
    },
    /// Check a derivation file.
    Check {
        theory: PathBuf,
        #[arg(short = 'p', long = "proof")]
        proof: PathBuf,
    },
    /// Build a derivation for a goal.
    Prove {
        theory: PathBuf,
        #[command(flatten)]
        goal: GoalArgs,
        /// Write the derivation to this file.
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
    },
    /// Look for two distinct values that are convertible.
    Consistent { theory: PathBuf },
    /// Search for a finite algebra that models the theory and refutes a goal.
    Refute {
        theory: PathBuf,
        #[command(flatten)]
        goal: GoalArgs,
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
    },
    /// Check that an algebra models the theory and, given a goal, refutes it.
    ModelCheck {
        theory: PathBuf,
        #[arg(short = 'a', long = "algebra")]
        algebra: PathBuf,
        #[command(flatten)]
        goal: GoalArgs,
    },
}

#[derive(Debug, Parser)]
#[command(
    name = "lcre",
    version,
    about = "Reasoning with logically constrained equations"
)]
pub struct Cli {
    #[command(flatten)]
    pub config: RunConfig,
    #[command(subcommand)]
    pub command: Command,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Parse { .. } => "parse",
            Command::Rewrite { .. } => "rewrite",
            Command::Convert { .. } => "convert",
            Command::Validate { .. } => "validate",
            Command::Check { .. } => "check",
            Command::Prove { .. } => "prove",
            Command::Consistent { .. } => "consistent",
            Command::Refute { .. } => "refute",
            Command::ModelCheck { .. } => "model-check",
        }
    }
}

/// Outcome of one command: exit code, status word, text lines and the
/// fields of the machine-readable document.
#[derive(Debug, Clone)]
pub struct Report {
    pub exit: i32,
    pub status: String,
    pub lines: Vec<String>,
    pub data: Map<String, Json>,
}

impl Report {
    fn new(exit: i32, status: &str) -> Self {
        Report {
            exit,
            status: status.into(),
            lines: Vec::new(),
            data: Map::new(),
        }
    }

    fn line(mut self, l: impl Into<String>) -> Self {
        self.lines.push(l.into());
        self
    }

    fn field(mut self, k: &str, v: Json) -> Self {
        self.data.insert(k.into(), v);
        self
    }
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Oracle(String),
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        CliError::Oracle(e.to_string())
    }
}

fn input<E: std::fmt::Display>(what: &Path) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Input(format!("{}: {e}", what.display()))
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(input(path))
}

fn load_theory(path: &Path) -> Result<TheoryFile, CliError> {
    parse_theory(&read(path)?).map_err(input(path))
}

fn oracle(tf: &TheoryFile, cfg: &RunConfig) -> Result<Oracle, CliError> {
    let o = tf.theory.oracle();
    match &cfg.solver {
        Some(cmd) => {
            let s = SolverSession::start(cmd, Duration::from_millis(cfg.timeout))?;
            Ok(o.with_solver(s))
        }
        None => Ok(o),
    }
}

fn goal(tf: &TheoryFile, g: &GoalArgs) -> Result<ConstrainedEquation, CliError> {
    match (&g.goal, &g.equation) {
        (Some(name), _) => tf
            .goal(name)
            .cloned()
            .ok_or_else(|| CliError::Input(format!("no goal named {name}"))),
        (None, Some(text)) => {
            parse_goal(tf, text).map_err(|e| CliError::Input(format!("goal: {e}")))
        }
        (None, None) => Err(CliError::Input(
            "give a goal with -g NAME or -e TEXT".into(),
        )),
    }
}

fn trace_lines(tf: &TheoryFile, start: &crate::terms::Term, tr: &ConversionTrace) -> Vec<String> {
    let mut out = vec![format!("    {}", term_text(tf, start))];
    for (i, st) in tr.steps.iter().enumerate() {
        let how = match st.kind {
            StepKind::Calc => format!("calc {}", st.direction),
            StepKind::Rule(k) => format!("eq {} {}", k + 1, st.direction),
        };
        out.push(format!(
            "  {:>2}. {how} @{}: {}",
            i + 1,
            st.position,
            term_text(tf, &st.result)
        ));
    }
    out
}

fn trace_json(tf: &TheoryFile, tr: &ConversionTrace) -> Json {
    Json::Array(
        tr.steps
            .iter()
            .map(|st| {
                let (kind, eq) = match st.kind {
                    StepKind::Calc => ("calc", Json::Null),
                    StepKind::Rule(k) => ("rule", json!(k + 1)),
                };
                json!({
                    "kind": kind,
                    "equation": eq,
                    "direction": st.direction.to_string(),
                    "position": st.position.to_string(),
                    "witness": st.witness.to_string(),
                    "result": term_text(tf, &st.result),
                })
            })
            .collect(),
    )
}

fn valuation_json(rho: &Valuation) -> Json {
    Json::Object(
        rho.iter()
            .map(|(v, e)| (v.name().to_string(), json!(e.to_string())))
            .collect(),
    )
}

fn cmd_parse(theory: &Path) -> Result<Report, CliError> {
    let tf = load_theory(theory)?;
    let th = &tf.theory;
    let sorts: Vec<String> = th.signature.sorts().map(|s| s.name().to_string()).collect();
    let goals: Vec<String> = tf.goals.iter().map(|(n, _)| n.clone()).collect();
    let mut r = Report::new(EXIT_OK, "ok")
        .field("model", json!(th.model.kind().to_string()))
        .field("sorts", json!(sorts))
        .field("equations", json!(th.equations.len()))
        .field("goals", json!(goals))
        .field("text", json!(print_theory(&tf)));
    r.lines.push(format!(
        "ok: {} equations, {} goals, sorts {}",
        th.equations.len(),
        goals.len(),
        sorts.join(" ")
    ));
    r.lines.push(print_theory(&tf).trim_end().to_string());
    Ok(r)
}

fn cmd_rewrite(
    cfg: &RunConfig,
    theory: &Path,
    term: &str,
    steps: usize,
    innermost: bool,
) -> Result<Report, CliError> {
    let tf = load_theory(theory)?;
    let th = &tf.theory;
    let t = parse_term(&tf, term).map_err(|e| CliError::Input(format!("term: {e}")))?;
    let pools = Pools::new(th, cfg.pool as i64, &[&t], &[]);
    let mut cur = th.model.calc_normalize(&t);
    let mut lines = vec![format!("    {}", term_text(&tf, &t))];
    if cur != t {
        lines.push(format!("  calc: {}", term_text(&tf, &cur)));
    }
    let mut trail = vec![json!(term_text(&tf, &cur))];
    let mut normal = false;
    for i in 0..steps {
        let cands = oriented_step_candidates(&cur, th, &pools);
        let pick = if innermost {
            cands.iter().rev().max_by_key(|s| s.position.0.len())
        } else {
            cands.first()
        };
        let Some(step) = pick else {
            normal = true;
            break;
        };
        cur = th.model.calc_normalize(&step.result);
        lines.push(format!(
            "  {:>2}. eq {} @{}: {}",
            i + 1,
            step.equation + 1,
            step.position,
            term_text(&tf, &cur)
        ));
        trail.push(json!(term_text(&tf, &cur)));
    }
    if !normal && oriented_step_candidates(&cur, th, &pools).is_empty() {
        normal = true;
    }
    let (exit, status) = if normal {
        (EXIT_OK, "normal-form")
    } else {
        (EXIT_UNKNOWN, "step-limit")
    };
    let mut r = Report::new(exit, status)
        .field("result", json!(term_text(&tf, &cur)))
        .field("terms", Json::Array(trail));
    r.lines.push(format!("{status}: {}", term_text(&tf, &cur)));
    r.lines.extend(lines);
    Ok(r)
}

fn cmd_convert(cfg: &RunConfig, theory: &Path, l: &str, rr: &str) -> Result<Report, CliError> {
    let tf = load_theory(theory)?;
    let s = parse_term(&tf, l).map_err(|e| CliError::Input(format!("lhs: {e}")))?;
    let t = parse_term(&tf, rr).map_err(|e| CliError::Input(format!("rhs: {e}")))?;
    let opts = cfg.search_options();
    Ok(match conversion_search(&tf.theory, &s, &t, &opts) {
        Some(tr) => {
            let mut r = Report::new(EXIT_OK, "converted")
                .field("rule_steps", json!(tr.rule_steps()))
                .field("steps", json!(tr.len()))
                .field("trace", trace_json(&tf, &tr));
            r.lines.push(format!(
                "converted: {} rule steps ({} steps in all)",
                tr.rule_steps(),
                tr.len()
            ));
            r.lines.extend(trace_lines(&tf, &s, &tr));
            r
        }
        None => Report::new(EXIT_UNKNOWN, "no-conversion-within-bound")
            .field("bound", json!(cfg.bound))
            .line(format!("no conversion within bound {}", cfg.bound)),
    })
}

fn cmd_validate(cfg: &RunConfig, theory: &Path, g: &GoalArgs) -> Result<Report, CliError> {
    let tf = load_theory(theory)?;
    let ce = goal(&tf, g)?;
    let o = oracle(&tf, cfg)?;
    let status = check_ce_validity(&tf.theory, &ce, &o, &cfg.search_options())?;
    let exit = match &status {
        ValidityStatus::ProvedGroundConversion(_)
        | ValidityStatus::ProvedByTriviality { .. }
        | ValidityStatus::ConfirmedOnSamples { .. } => EXIT_OK,
        ValidityStatus::NoConversionWithinBound(_) => EXIT_NEGATIVE,
        ValidityStatus::Unknown(_) => EXIT_UNKNOWN,
    };
    let mut r = Report::new(exit, status.label())
        .field("goal", json!(ce_text(&tf, &ce)))
        .field("proof", json!(status.is_proof()));
    r.lines.push(format!("{}: {status}", status.label()));
    match &status {
        ValidityStatus::ProvedGroundConversion(tr) => {
            r.data.insert("trace".into(), trace_json(&tf, tr));
            r.lines.extend(trace_lines(&tf, &ce.lhs, tr));
        }
        ValidityStatus::ProvedByTriviality { lhs, rhs, .. } => {
            r.data.insert("lhs".into(), json!(term_text(&tf, lhs)));
            r.data.insert("rhs".into(), json!(term_text(&tf, rhs)));
        }
        ValidityStatus::ConfirmedOnSamples { count, exhaustive } => {
            r.data.insert("samples".into(), json!(count));
            r.data.insert("exhaustive".into(), json!(exhaustive));
        }
        ValidityStatus::NoConversionWithinBound(sigma) => {
            r.data.insert("instance".into(), json!(sigma.to_string()));
        }
        ValidityStatus::Unknown(why) => {
            r.data.insert("reason".into(), json!(why));
        }
    }
    Ok(r)
}

fn cmd_check(cfg: &RunConfig, theory: &Path, proof: &Path) -> Result<Report, CliError> {
    let tf = load_theory(theory)?;
    let d = parse_proof(&tf, &read(proof)?).map_err(input(proof))?;
    let o = oracle(&tf, cfg)?;
    let rep = check_proof(&tf.theory, &o, &d)?;
    let mut r = match &rep.verdict {
        CheckVerdict::Accepted => Report::new(EXIT_OK, "accepted"),
        CheckVerdict::Rejected { path, detail, .. } => Report::new(EXIT_NEGATIVE, "rejected")
            .field("path", json!(path_text(path)))
            .field("detail", json!(detail)),
        CheckVerdict::OracleUnknown {
            path, constraint, ..
        } => Report::new(EXIT_UNKNOWN, "oracle-unknown")
            .field("path", json!(path_text(path)))
            .field("constraint", json!(constraint.to_string())),
    };
    r = r
        .field("nodes", json!(d.size()))
        .field("error_code", json!(rep.error_code()));
    r.lines.push(format!("{rep} ({} nodes)", d.size()));
    Ok(r)
}

fn proof_report(d: &Derivation, how: &str) -> Report {
    let text = print_proof(d);
    let mut r = Report::new(EXIT_OK, "proved")
        .field("method", json!(how))
        .field("nodes", json!(d.size()))
        .field("trans", json!(d.count(RuleName::Trans)))
        .field("proof", json!(text));
    r.lines.push(format!("proved ({how}, {} nodes)", d.size()));
    r.lines.push(text.trim_end().to_string());
    r
}

fn cmd_prove(
    cfg: &RunConfig,
    theory: &Path,
    g: &GoalArgs,
    output: Option<&Path>,
) -> Result<Report, CliError> {
    let tf = load_theory(theory)?;
    let ce = goal(&tf, g)?;
    let o = oracle(&tf, cfg)?;
    let found = match generate_calc_proof(&tf.theory, &o, &ce) {
        Ok(d) => Some((d, "calculation")),
        Err(crate::proofs::GenerateError::Oracle(e)) => return Err(e.into()),
        Err(_) => {
            prove_heuristic(&tf.theory, &o, &ce, &cfg.search_options())?.map(|d| (d, "search"))
        }
    };
    match found {
        Some((d, how)) => {
            if let Some(path) = output {
                std::fs::write(path, print_proof(&d)).map_err(input(path))?;
            }
            Ok(proof_report(&d, how))
        }
        None => Ok(Report::new(EXIT_UNKNOWN, "no-proof-found")
            .field("goal", json!(ce_text(&tf, &ce)))
            .line(format!("no proof found for {}", ce_text(&tf, &ce)))),
    }
}

fn cmd_consistent(cfg: &RunConfig, theory: &Path) -> Result<Report, CliError> {
    let tf = load_theory(theory)?;
    let opts = cfg.search_options();
    Ok(
        match check_value_consistency(
            &tf.theory,
            cfg.depth as usize,
            opts.pool_radius,
            opts.max_nodes,
        ) {
            ConsistencyReport::ConsistentUpTo(d) => Report::new(EXIT_OK, "consistent-up-to")
                .field("depth", json!(d))
                .line(format!("consistent up to depth {d} (evidence only)")),
            ConsistencyReport::InconsistentWitness { u, v, trace } => {
                let mut r = Report::new(EXIT_NEGATIVE, "inconsistent")
                    .field("u", json!(u.to_string()))
                    .field("v", json!(v.to_string()))
                    .field("rule_steps", json!(trace.rule_steps()))
                    .field("trace", trace_json(&tf, &trace));
                r.lines.push(format!(
                    "inconsistent: {u} and {v} are convertible in {} rule steps",
                    trace.rule_steps()
                ));
                r.lines
                    .extend(trace_lines(&tf, &crate::terms::Term::Val(u), &trace));
                r
            }
        },
    )
}

fn cmd_refute(
    cfg: &RunConfig,
    theory: &Path,
    g: &GoalArgs,
    output: Option<&Path>,
) -> Result<Report, CliError> {
    let tf = load_theory(theory)?;
    let ce = goal(&tf, g)?;
    let out = search_counter_model(&tf.theory, &ce, cfg.extra as usize, cfg.term_card as usize)
        .map_err(|e| CliError::Input(e.to_string()))?;
    Ok(match out {
        CounterModelOutcome::Found { algebra, valuation } => {
            let text = print_algebra(&algebra);
            if let Some(path) = output {
                std::fs::write(path, &text).map_err(input(path))?;
            }
            let mut r = Report::new(EXIT_OK, "refuted")
                .field("valuation", valuation_json(&valuation))
                .field("algebra", json!(text));
            r.lines.push(format!("refuted under {}", valuation_text(&valuation)));
            r.lines.push(text.trim_end().to_string());
            r
        }
        CounterModelOutcome::Exhausted { extra, term_card } => Report::new(EXIT_UNKNOWN, "no-model-found")
            .field("extra", json!(extra))
            .field("term_card", json!(term_card))
            .line(format!(
                "no counter-model with up to {extra} extra elements and term carriers up to {term_card}"
            )),
    })
}

fn cmd_model_check(theory: &Path, alg: &Path, g: &GoalArgs) -> Result<Report, CliError> {
    let tf = load_theory(theory)?;
    let a = parse_algebra(&tf.theory, &read(alg)?).map_err(input(alg))?;
    let bad = |e: crate::algebra::AlgebraError| CliError::Input(e.to_string());
    if let ModelCheck::Invalid {
        equation,
        valuation,
    } = check_is_model(&a, &tf.theory).map_err(bad)?
    {
        let eq = &tf.theory.equations[equation];
        return Ok(Report::new(EXIT_NEGATIVE, "not-a-model")
            .field("equation", json!(equation + 1))
            .field("valuation", valuation_json(&valuation))
            .line(format!(
                "not a model: equation {} ({}) fails under {}",
                equation + 1,
                ce_text(&tf, eq),
                valuation_text(&valuation)
            )));
    }
    if g.goal.is_none() && g.equation.is_none() {
        return Ok(Report::new(EXIT_OK, "model").line("model of the theory"));
    }
    let ce = goal(&tf, g)?;
    Ok(match check_refutes(&a, &ce).map_err(bad)? {
        Some(rho) => Report::new(EXIT_OK, "refutes")
            .field("valuation", valuation_json(&rho))
            .line(format!(
                "model of the theory; refutes the goal under {}",
                valuation_text(&rho)
            )),
        None => Report::new(EXIT_NEGATIVE, "does-not-refute")
            .line("model of the theory; the goal holds in it"),
    })
}

pub fn dispatch(cfg: &RunConfig, cmd: &Command) -> Result<Report, CliError> {
    match cmd {
        Command::Parse { theory } => cmd_parse(theory),
        Command::Rewrite {
            theory,
            term,
            steps,
            innermost,
        } => cmd_rewrite(cfg, theory, term, *steps, *innermost),
        Command::Convert { theory, lhs, rhs } => cmd_convert(cfg, theory, lhs, rhs),
        Command::Validate { theory, goal } => cmd_validate(cfg, theory, goal),
        Command::Check { theory, proof } => cmd_check(cfg, theory, proof),
        Command::Prove {
            theory,
            goal,
            output,
        } => cmd_prove(cfg, theory, goal, output.as_deref()),
        Command::Consistent { theory } => cmd_consistent(cfg, theory),
        Command::Refute {
            theory,
            goal,
            output,
        } => cmd_refute(cfg, theory, goal, output.as_deref()),
        Command::ModelCheck {
            theory,
            algebra,
            goal,
        } => cmd_model_check(theory, algebra, goal),
    }
}

fn render(cfg: &RunConfig, command: &str, r: &Report, out: &mut dyn Write) {
    match cfg.format {
        Format::Text => {
            for l in &r.lines {
                let _ = writeln!(out, "{l}");
            }
        }
        Format::Json => {
            let mut doc = Map::new();
            doc.insert("schema".into(), json!(SCHEMA));
            doc.insert("command".into(), json!(command));
            doc.insert("status".into(), json!(r.status));
            doc.insert("exit_code".into(), json!(r.exit));
            doc.extend(r.data.clone());
            let _ = writeln!(out, "{}", Json::Object(doc));
        }
    }
}

/// Runs one invocation; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            if e.use_stderr() {
                let _ = write!(err, "{e}");
            } else {
                let _ = write!(out, "{e}");
            }
            return code;
        }
    };
    let name = cli.command.name();
    let r = match dispatch(&cli.config, &cli.command) {
        Ok(r) => r,
        Err(e) => {
            let (exit, status, msg) = match e {
                CliError::Input(m) => (EXIT_INPUT, "input-error", m),
                CliError::Oracle(m) => (EXIT_ORACLE, "oracle-failure", m),
            };
            if cli.config.format == Format::Text {
                let _ = writeln!(err, "error: {msg}");
                return exit;
            }
            Report::new(exit, status).field("message", json!(msg))
        }
    };
    render(&cli.config, name, &r, out);
    r.exit
}
