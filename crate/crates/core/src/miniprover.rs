//! A tiny proof checker over integer equations.
//!
//! Grammar, one command per span:
//!
//! ```text
//! Definition N := E.        bind N to the value of E
//! Lemma N : E = E.          open a proof (Theorem is a synonym)
//! Proof.  idtac.            no-ops that print the state
//! reflexivity.              close the goal if both sides evaluate equal
//! rewrite N.                replace N's left side by its right side
//! sleep MS.                 wait MS milliseconds, then print the state
//! Qed.                      close the proof, if no goals remain
//! Check N.                  print the statement of N
//! ```
//!
//! Expressions use `+`, `*`, parentheses, integer literals and defined names.
//! Comments `(* .. *)` nest and are ignored.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crate::ids::ExecId;
use crate::stm::{CommandClass, Execution, Executor};
use crate::wire::{Entity, Feedback, TextRange};

pub const SEPARATOR: &str = "============================";
pub const INCOMPLETE_PROOF: &str = "Error: Attempt to save an incomplete proof";
pub const UNKNOWN_COMMAND: &str = "Error: Unknown command";

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Num(i64),
    Name(String),
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
}

impl Expr {
    /// Evaluates with checked arithmetic; `None` on overflow or unknown name.
    pub fn eval(&self, env: &Environment) -> Option<i64> {
        match self {
            Expr::Num(n) => Some(*n),
            Expr::Name(n) => env.get(n).and_then(|e| e.value),
            Expr::Add(a, b) => a.eval(env)?.checked_add(b.eval(env)?),
            Expr::Mul(a, b) => a.eval(env)?.checked_mul(b.eval(env)?),
        }
    }

    fn names<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Num(_) => {}
            Expr::Name(n) => out.push(n),
            Expr::Add(a, b) | Expr::Mul(a, b) => {
                a.names(out);
                b.names(out);
            }
        }
    }

    /// Replaces every occurrence of `from` by `to`; returns the count.
    fn rewrite(&mut self, from: &Expr, to: &Expr) -> usize {
        if self == from {
            *self = to.clone();
            return 1;
        }
        match self {
            Expr::Add(a, b) | Expr::Mul(a, b) => a.rewrite(from, to) + b.rewrite(from, to),
            _ => 0,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(n) => write!(f, "{n}"),
            Expr::Name(n) => f.write_str(n),
            Expr::Add(a, b) => match **b {
                Expr::Add(..) => write!(f, "{a} + ({b})"),
                _ => write!(f, "{a} + {b}"),
            },
            Expr::Mul(a, b) => {
                let wrap = |e: &Expr, right: bool| match e {
                    Expr::Add(..) => true,
                    Expr::Mul(..) => right,
                    _ => false,
                };
                if wrap(a, false) {
                    write!(f, "({a})")?;
                } else {
                    write!(f, "{a}")?;
                }
                f.write_str(" * ")?;
                if wrap(b, true) {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntityKind {
    Thm,
    Def,
}

impl EntityKind {
    pub fn name(self) -> &'static str {
        match self {
            EntityKind::Thm => "thm",
            EntityKind::Def => "def",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnvEntry {
    pub kind: EntityKind,
    pub statement: String,
    pub def_exec: ExecId,
    /// Position of the name inside its defining command.
    pub def_range: TextRange,
    pub value: Option<i64>,
    pub equation: Option<(Expr, Expr)>,
}

pub type Environment = BTreeMap<String, EnvEntry>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Goal {
    pub lhs: Expr,
    pub rhs: Expr,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpenProof {
    pub name: String,
    pub goals: Vec<Goal>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ProverState {
    pub env: Environment,
    pub proof: Option<OpenProof>,
}

impl ProverState {
    /// Goal display: count line, hypotheses, separator, goal.
    pub fn render(&self) -> String {
        let Some(p) = &self.proof else {
            return String::new();
        };
        let Some(first) = p.goals.first() else {
            return "No more subgoals.".into();
        };
        let n = p.goals.len();
        let mut out = format!("{n} subgoal{}\n", if n == 1 { "" } else { "s" });
        let mut names = Vec::new();
        first.lhs.names(&mut names);
        first.rhs.names(&mut names);
        names.sort_unstable();
        names.dedup();
        for name in names {
            if let Some(v) = self.env.get(name).and_then(|e| e.value) {
                out.push_str(&format!("{name} := {v}\n"));
            }
        }
        out.push_str(SEPARATOR);
        out.push_str(&format!("\n {} = {}", first.lhs, first.rhs));
        for (i, g) in p.goals.iter().enumerate().skip(1) {
            out.push_str(&format!("\n\nsubgoal {} is:\n {} = {}", i + 1, g.lhs, g.rhs));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Num(i64),
    Sym(&'static str),
}

/// Token with 0-based character positions.
#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    start: usize,
    end: usize,
}

struct LexError {
    message: String,
    start: usize,
    end: usize,
}

/// Blanks out comments so character positions survive. Unterminated
/// comments swallow the rest of the text.
fn mask_comments(chars: &[char]) -> Vec<char> {
    let mut out = chars.to_vec();
    let mut depth = 0usize;
    let mut i = 0;
    while i < chars.len() {
        let two = (chars[i], chars.get(i + 1).copied());
        if two == ('(', Some('*')) {
            depth += 1;
            out[i] = ' ';
            out[i + 1] = ' ';
            i += 2;
        } else if depth > 0 && two == ('*', Some(')')) {
            depth -= 1;
            out[i] = ' ';
            out[i + 1] = ' ';
            i += 2;
        } else {
            if depth > 0 {
                out[i] = ' ';
            }
            i += 1;
        }
    }
    out
}

fn lex(text: &str) -> Result<Vec<Token>, LexError> {
    let raw: Vec<char> = text.chars().collect();
    let c = mask_comments(&raw);
    let mut toks = Vec::new();
    let mut i = 0;
    while i < c.len() {
        let ch = c[i];
        let start = i;
        if ch.is_whitespace() {
            i += 1;
            continue;
        }
        if ch.is_ascii_alphabetic() || ch == '_' {
            while i < c.len() && (c[i].is_ascii_alphanumeric() || c[i] == '_' || c[i] == '\'') {
                i += 1;
            }
            let s: String = c[start..i].iter().collect();
            toks.push(Token { tok: Tok::Ident(s), start, end: i });
        } else if ch.is_ascii_digit() {
            while i < c.len() && c[i].is_ascii_digit() {
                i += 1;
            }
            let s: String = c[start..i].iter().collect();
            let n = s.parse().map_err(|_| LexError {
                message: "Error: Integer literal too large.".into(),
                start,
                end: i,
            })?;
            toks.push(Token { tok: Tok::Num(n), start, end: i });
        } else {
            let sym = match (ch, c.get(i + 1)) {
                (':', Some('=')) => ":=",
                (':', _) => ":",
                ('=', _) => "=",
                ('+', _) => "+",
                ('*', _) => "*",
                ('(', _) => "(",
                (')', _) => ")",
                ('.', _) => ".",
                _ => {
                    return Err(LexError {
                        message: format!("Error: Syntax error: unexpected character '{ch}'."),
                        start,
                        end: i + 1,
                    })
                }
            };
            i += sym.len();
            toks.push(Token { tok: Tok::Sym(sym), start, end: i });
        }
    }
    Ok(toks)
}

/// A failure with an optional position inside the command.
struct Failure {
    message: String,
    range: Option<(usize, usize)>,
}

impl Failure {
    fn whole(message: impl Into<String>) -> Self {
        Failure { message: message.into(), range: None }
    }

    fn at(message: impl Into<String>, t: &Token) -> Self {
        Failure { message: message.into(), range: Some((t.start, t.end)) }
    }
}

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    /// End position of the text, for errors at end of input.
    len: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.pos)
    }

    fn fail_here(&self, what: &str) -> Failure {
        match self.peek() {
            Some(t) => Failure::at(format!("Error: Syntax error: {what} expected."), t),
            None => Failure {
                message: format!("Error: Syntax error: {what} expected."),
                range: Some((self.len, self.len)),
            },
        }
    }

    fn sym(&mut self, s: &str) -> Result<(), Failure> {
        match self.peek() {
            Some(Token { tok: Tok::Sym(x), .. }) if *x == s => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.fail_here(&format!("'{s}'"))),
        }
    }

    fn ident(&mut self) -> Result<&'a Token, Failure> {
        match self.peek() {
            Some(t @ Token { tok: Tok::Ident(_), .. }) => {
                self.pos += 1;
                Ok(t)
            }
            _ => Err(self.fail_here("identifier")),
        }
    }

    fn end(&mut self) -> Result<(), Failure> {
        self.sym(".")?;
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(Failure::at("Error: Syntax error: end of command expected.", t)),
        }
    }

    fn expr(&mut self) -> Result<Expr, Failure> {
        let mut e = self.term()?;
        while matches!(self.peek(), Some(Token { tok: Tok::Sym("+"), .. })) {
            self.pos += 1;
            e = Expr::Add(Box::new(e), Box::new(self.term()?));
        }
        Ok(e)
    }

    fn term(&mut self) -> Result<Expr, Failure> {
        let mut e = self.atom()?;
        while matches!(self.peek(), Some(Token { tok: Tok::Sym("*"), .. })) {
            self.pos += 1;
            e = Expr::Mul(Box::new(e), Box::new(self.atom()?));
        }
        Ok(e)
    }

    fn atom(&mut self) -> Result<Expr, Failure> {
        match self.peek().map(|t| &t.tok) {
            Some(Tok::Num(n)) => {
                self.pos += 1;
                Ok(Expr::Num(*n))
            }
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                Ok(Expr::Name(s.clone()))
            }
            Some(Tok::Sym("(")) => {
                self.pos += 1;
                let e = self.expr()?;
                self.sym(")")?;
                Ok(e)
            }
            _ => Err(self.fail_here("expression")),
        }
    }
}

/// Identifier tokens in `toks[from..to]`.
fn idents(toks: &[Token]) -> impl Iterator<Item = (&str, &Token)> {
    toks.iter().filter_map(|t| match &t.tok {
        Tok::Ident(s) => Some((s.as_str(), t)),
        _ => None,
    })
}

/// Every name in an expression must be a definition.
fn check_values(env: &Environment, toks: &[Token]) -> Result<(), Failure> {
    for (name, t) in idents(toks) {
        match env.get(name) {
            None => {
                return Err(Failure::at(
                    format!("Error: The reference {name} was not found in the current environment."),
                    t,
                ))
            }
            Some(e) if e.kind != EntityKind::Def => {
                return Err(Failure::at(format!("Error: {name} is a theorem, not a value."), t))
            }
            Some(_) => {}
        }
    }
    Ok(())
}

fn fresh_name(env: &Environment, t: &Token) -> Result<String, Failure> {
    let Tok::Ident(name) = &t.tok else { unreachable!("identifier token") };
    if env.contains_key(name) {
        return Err(Failure::at(format!("Error: {name} already exists."), t));
    }
    Ok(name.clone())
}

/// Keywords are not entity uses.
const KEYWORDS: &[&str] = &[
    "Definition", "Lemma", "Theorem", "Proof", "Qed", "idtac", "reflexivity", "rewrite", "sleep",
    "Check",
];

/// The checker. Counts executions so tests can see what was recomputed.
#[derive(Debug, Default)]
pub struct MiniProver {
    executions: AtomicUsize,
    runs: Mutex<BTreeMap<ExecId, usize>>,
}

impl MiniProver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of commands executed so far.
    pub fn executions(&self) -> usize {
        self.executions.load(Ordering::SeqCst)
    }

    /// Number of times the command with `exec_id` was executed.
    pub fn runs_of(&self, exec_id: ExecId) -> usize {
        self.runs.lock().expect("runs").get(&exec_id).copied().unwrap_or(0)
    }

    /// Reports for every use of a name known to `env`.
    pub fn entity_reports(env: &Environment, text: &str, exec_id: ExecId) -> Vec<Feedback> {
        let Ok(toks) = lex(text) else { return Vec::new() };
        idents(&toks)
            .filter(|(name, _)| !KEYWORDS.contains(name))
            .filter_map(|(name, t)| {
                let def = env.get(name)?;
                Some(Feedback::report(&Entity {
                    def_id: Some(def.def_exec),
                    id: exec_id,
                    range: TextRange::from_zero_based(t.start, t.end),
                    def_range: def.def_range,
                    name: name.to_string(),
                    kind: def.kind.name().to_string(),
                }))
            })
            .collect()
    }

    /// Runs one command. Failures become error feedback and a `None` state.
    pub fn exec_command(
        &self,
        state: &ProverState,
        text: &str,
        exec_id: ExecId,
    ) -> (Option<ProverState>, Vec<Feedback>) {
        self.executions.fetch_add(1, Ordering::SeqCst);
        *self.runs.lock().expect("runs").entry(exec_id).or_default() += 1;
        let mut feedback = Self::entity_reports(&state.env, text, exec_id);
        match step(state, text, exec_id) {
            Ok((next, out)) => {
                feedback.push(Feedback::writeln(exec_id, out));
                (Some(next), feedback)
            }
            Err(f) => {
                let mut e = Feedback::error(exec_id, f.message);
                if let Some((s, end)) = f.range {
                    e = e.with_range(TextRange::from_zero_based(s, end));
                }
                feedback.push(e);
                (None, feedback)
            }
        }
    }
}

fn require_proof(state: &ProverState) -> Result<&OpenProof, Failure> {
    state.proof.as_ref().ok_or_else(|| Failure::whole("Error: No proof in progress."))
}

fn step(state: &ProverState, text: &str, exec_id: ExecId) -> Result<(ProverState, String), Failure> {
    let toks = lex(text).map_err(|e| Failure {
        message: e.message,
        range: Some((e.start, e.end)),
    })?;
    let mut p = Parser { toks: &toks, pos: 0, len: text.chars().count() };
    let Some(first) = p.peek() else {
        return Ok((state.clone(), state.render()));
    };
    let Tok::Ident(head) = &first.tok else {
        return Err(Failure::whole(UNKNOWN_COMMAND));
    };
    p.pos = 1;
    let mut next = state.clone();
    match head.as_str() {
        "Definition" => {
            if state.proof.is_some() {
                return Err(Failure::whole("Error: Definitions are not allowed inside proofs."));
            }
            let name_tok = p.ident()?;
            p.sym(":=")?;
            let from = p.pos;
            let e = p.expr()?;
            let body = &toks[from..p.pos];
            p.end()?;
            let name = fresh_name(&state.env, name_tok)?;
            check_values(&state.env, body)?;
            let value = e
                .eval(&state.env)
                .ok_or_else(|| Failure::whole("Error: Arithmetic overflow."))?;
            next.env.insert(
                name.clone(),
                EnvEntry {
                    kind: EntityKind::Def,
                    statement: format!("{e}"),
                    def_exec: exec_id,
                    def_range: TextRange::from_zero_based(name_tok.start, name_tok.end),
                    value: Some(value),
                    equation: None,
                },
            );
            Ok((next, format!("{name} is defined")))
        }
        "Lemma" | "Theorem" => {
            if state.proof.is_some() {
                return Err(Failure::whole("Error: Nested proofs are not allowed."));
            }
            let name_tok = p.ident()?;
            p.sym(":")?;
            let from = p.pos;
            let lhs = p.expr()?;
            p.sym("=")?;
            let rhs = p.expr()?;
            let body = &toks[from..p.pos];
            p.end()?;
            let name = fresh_name(&state.env, name_tok)?;
            check_values(&state.env, body)?;
            next.env.insert(
                name.clone(),
                EnvEntry {
                    kind: EntityKind::Thm,
                    statement: format!("{lhs} = {rhs}"),
                    def_exec: exec_id,
                    def_range: TextRange::from_zero_based(name_tok.start, name_tok.end),
                    value: None,
                    equation: Some((lhs.clone(), rhs.clone())),
                },
            );
            next.proof = Some(OpenProof { name, goals: vec![Goal { lhs, rhs }] });
            let out = next.render();
            Ok((next, out))
        }
        "Proof" | "idtac" => {
            p.end()?;
            require_proof(state)?;
            Ok((next, state.render()))
        }
        "sleep" => {
            let ms = match p.peek() {
                Some(Token { tok: Tok::Num(n), .. }) => {
                    p.pos += 1;
                    *n
                }
                _ => return Err(p.fail_here("number")),
            };
            p.end()?;
            std::thread::sleep(Duration::from_millis(ms.max(0) as u64));
            Ok((next, state.render()))
        }
        "reflexivity" => {
            p.end()?;
            let proof = require_proof(state)?;
            let goal = proof.goals.first().ok_or_else(|| Failure::whole("Error: No focused proof."))?;
            let l = goal.lhs.eval(&state.env);
            let r = goal.rhs.eval(&state.env);
            match (l, r) {
                (Some(a), Some(b)) if a == b => {
                    next.proof.as_mut().expect("open proof").goals.remove(0);
                    let out = next.render();
                    Ok((next, out))
                }
                (Some(a), Some(b)) => {
                    Err(Failure::whole(format!("Error: Unable to unify \"{a}\" with \"{b}\".")))
                }
                _ => Err(Failure::whole("Error: Arithmetic overflow.")),
            }
        }
        "rewrite" => {
            let name_tok = p.ident()?;
            p.end()?;
            let proof = require_proof(state)?;
            let Tok::Ident(name) = &name_tok.tok else { unreachable!("identifier token") };
            let (from, to) = match state.env.get(name) {
                Some(EnvEntry { equation: Some(eq), .. }) => eq,
                Some(_) => return Err(Failure::at(format!("Error: {name} is not an equation."), name_tok)),
                None => {
                    return Err(Failure::at(
                        format!("Error: The reference {name} was not found in the current environment."),
                        name_tok,
                    ))
                }
            };
            let goal = proof.goals.first().ok_or_else(|| Failure::whole("Error: No focused proof."))?;
            let mut g = goal.clone();
            if g.lhs.rewrite(from, to) + g.rhs.rewrite(from, to) == 0 {
                return Err(Failure::whole(format!(
                    "Error: Found no subterm matching \"{from}\" in the current goal."
                )));
            }
            next.proof.as_mut().expect("open proof").goals[0] = g;
            let out = next.render();
            Ok((next, out))
        }
        "Qed" => {
            p.end()?;
            let proof = require_proof(state)?;
            if !proof.goals.is_empty() {
                return Err(Failure::whole(INCOMPLETE_PROOF));
            }
            let name = proof.name.clone();
            next.proof = None;
            Ok((next, format!("{name} is defined")))
        }
        "Check" => {
            let name_tok = p.ident()?;
            p.end()?;
            let Tok::Ident(name) = &name_tok.tok else { unreachable!("identifier token") };
            let entry = state.env.get(name).ok_or_else(|| {
                Failure::at(
                    format!("Error: The reference {name} was not found in the current environment."),
                    name_tok,
                )
            })?;
            let out = match entry.kind {
                EntityKind::Thm => format!("{name}\n     : {}", entry.statement),
                EntityKind::Def => format!("{name} := {}\n     : int", entry.value.unwrap_or_default()),
            };
            Ok((next, out))
        }
        _ => Err(Failure::whole(UNKNOWN_COMMAND)),
    }
}

/// First keyword of a command, ignoring comments.
fn head_keyword(text: &str) -> Option<String> {
    match lex(text).ok()?.into_iter().next()?.tok {
        Tok::Ident(s) => Some(s),
        _ => None,
    }
}

impl Executor for MiniProver {
    type State = ProverState;

    fn classify(&self, text: &str) -> CommandClass {
        match head_keyword(text).as_deref() {
            Some("Lemma" | "Theorem") => CommandClass::Statement,
            Some("Qed") => CommandClass::Closing,
            _ => CommandClass::Other,
        }
    }

    fn initial_state(&self) -> ProverState {
        ProverState::default()
    }

    fn spine_state(&self, after_statement: &ProverState) -> ProverState {
        ProverState {
            env: after_statement.env.clone(),
            proof: None,
        }
    }

    fn execute(&self, state: &ProverState, text: &str, exec_id: ExecId) -> Execution<ProverState> {
        let (state, messages) = self.exec_command(state, text, exec_id);
        Execution { state, messages }
    }
}

/// Shared handle used by engines.
pub type SharedProver = Arc<MiniProver>;
