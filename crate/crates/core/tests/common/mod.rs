//! Generators and independent oracles shared by the property suites.
#![allow(dead_code)]

use asyncdoc::span_parser::{SpanKind, TextEdit};
use asyncdoc::yxml::XmlTree;
use rand::seq::SliceRandom;
use rand::Rng;

/// Two-phase tokenizer oracle: mark which characters are code (outside
/// comments and strings), then cut after each qualifying period plus the
/// whitespace that follows it.
pub fn tokenize_oracle(text: &str) -> Vec<(String, SpanKind)> {
    let c: Vec<char> = text.chars().collect();
    let n = c.len();
    let mut code = vec![false; n];
    let mut i = 0;
    let mut depth = 0;
    let mut in_str = false;
    while i < n {
        let two = |a: char, b: char| c[i] == a && i + 1 < n && c[i + 1] == b;
        if in_str {
            if c[i] == '"' && i + 1 < n && c[i + 1] == '"' {
                i += 2;
            } else {
                in_str = c[i] != '"';
                i += 1;
            }
        } else if depth > 0 {
            if two('(', '*') {
                depth += 1;
                i += 2;
            } else if two('*', ')') {
                depth -= 1;
                i += 2;
            } else {
                i += 1;
            }
        } else if two('(', '*') {
            depth = 1;
            i += 2;
        } else if c[i] == '"' {
            in_str = true;
            i += 1;
        } else {
            code[i] = true;
            i += 1;
        }
    }
    let ws = |ch: char| matches!(ch, ' ' | '\t' | '\n' | '\r' | '\u{c}');
    let mut out = Vec::new();
    let mut start = 0;
    let mut p = 0;
    while p < n {
        let term = code[p] && c[p] == '.' && (p == 0 || c[p - 1] != '.') && (p + 1 == n || ws(c[p + 1]));
        if term {
            let mut e = p + 1;
            while e < n && ws(c[e]) {
                e += 1;
            }
            out.push((c[start..e].iter().collect(), SpanKind::Proper));
            start = e;
            p = e;
        } else {
            p += 1;
        }
    }
    if start < n {
        out.push((c[start..].iter().collect(), SpanKind::Improper));
    }
    out
}

/// Naive list-splice model of the edit fold. `None` where the fold must fail.
pub fn splice_oracle(old: &[i64], ops: &[(Option<i64>, Option<i64>)]) -> Option<Vec<i64>> {
    let mut v = old.to_vec();
    for (after, what) in ops {
        let pos = match after {
            None => 0,
            Some(a) => v.iter().position(|x| x == a)? + 1,
        };
        match what {
            Some(id) => {
                if v.contains(id) {
                    return None;
                }
                v.insert(pos, *id);
            }
            None => {
                if pos >= v.len() {
                    return None;
                }
                v.remove(pos);
            }
        }
    }
    Some(v)
}

const PIECES: &[&str] = &["a", "b", " ", "\n", ".", "(", "*", ")", "\"", "\u{e9}", "(*", "*)", ". ", "..", "x. "];

/// Text over an alphabet dense in lexically significant characters.
pub fn random_source<R: Rng>(rng: &mut R, max_pieces: usize) -> String {
    let n = rng.gen_range(0..=max_pieces);
    (0..n).map(|_| *PIECES.choose(rng).unwrap()).collect()
}

/// A valid edit against `text`.
pub fn random_edit<R: Rng>(rng: &mut R, text: &str, max_insert: usize) -> TextEdit {
    let len = text.chars().count();
    let o = rng.gen_range(0..=len);
    if rng.gen_bool(0.5) {
        TextEdit::insert(o, random_source(rng, max_insert))
    } else {
        TextEdit::remove(o, rng.gen_range(0..=(len - o).min(8)))
    }
}

fn random_string<R: Rng>(rng: &mut R, alphabet: &[char], max: usize) -> String {
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| *alphabet.choose(rng).unwrap()).collect()
}

/// A random well-formed tree of bounded depth.
pub fn random_tree<R: Rng>(rng: &mut R, depth: usize) -> XmlTree {
    const TEXT: &[char] = &['a', 'z', ' ', '<', '&', '"', '=', '\n', '\u{3bb}', '0', ':'];
    const NAME: &[char] = &['a', 'b', ':', '_', '0', '-'];
    if depth == 0 || rng.gen_bool(0.3) {
        return XmlTree::text(random_string(rng, TEXT, 10));
    }
    let mut name = random_string(rng, NAME, 5);
    if name.is_empty() {
        name.push('e');
    }
    let mut attrs: Vec<(String, String)> = Vec::new();
    for i in 0..rng.gen_range(0..3) {
        attrs.push((format!("k{i}"), random_string(rng, TEXT, 6).replace('=', "")));
    }
    let body = (0..rng.gen_range(0..4)).map(|_| random_tree(rng, depth - 1)).collect();
    XmlTree::elem(name, attrs, body)
}

/// A structured integer expression, rendered and evaluated independently
/// of the prover's parser.
#[derive(Clone, Debug)]
pub enum Ex {
    Lit(i64),
    Var(String, i64),
    Add(Box<Ex>, Box<Ex>),
    Mul(Box<Ex>, Box<Ex>),
}

impl Ex {
    pub fn value(&self) -> i128 {
        match self {
            Ex::Lit(n) | Ex::Var(_, n) => *n as i128,
            Ex::Add(a, b) => a.value() + b.value(),
            Ex::Mul(a, b) => a.value() * b.value(),
        }
    }

    /// Fully parenthesized rendering.
    pub fn render(&self) -> String {
        match self {
            Ex::Lit(n) => n.to_string(),
            Ex::Var(v, _) => v.clone(),
            Ex::Add(a, b) => format!("({} + {})", a.render(), b.render()),
            Ex::Mul(a, b) => format!("({} * {})", a.render(), b.render()),
        }
    }
}

pub fn random_expr<R: Rng>(rng: &mut R, defs: &[(String, i64)], depth: usize) -> Ex {
    if depth == 0 || rng.gen_bool(0.35) {
        if !defs.is_empty() && rng.gen_bool(0.4) {
            let (n, v) = defs.choose(rng).unwrap();
            return Ex::Var(n.clone(), *v);
        }
        return Ex::Lit(rng.gen_range(0..10));
    }
    let a = Box::new(random_expr(rng, defs, depth - 1));
    let b = Box::new(random_expr(rng, defs, depth - 1));
    if rng.gen_bool(0.5) {
        Ex::Add(a, b)
    } else {
        Ex::Mul(a, b)
    }
}

/// A plausible mini-prover script: definitions, lemmas that are true or
/// false, tactics, failing and unknown commands. One command per line.
pub fn random_script<R: Rng>(rng: &mut R, commands: usize) -> Vec<String> {
    let mut defs: Vec<(String, i64)> = Vec::new();
    let mut thms: Vec<String> = Vec::new();
    let mut in_proof = 0usize;
    let mut out = Vec::new();
    let mut fresh = 0;
    while out.len() < commands {
        let cmd = if in_proof > 0 {
            in_proof += 1;
            let roll = rng.gen_range(0..10);
            if in_proof > 5 || roll < 2 {
                in_proof = 0;
                "Qed.".to_string()
            } else if roll < 4 {
                "reflexivity.".into()
            } else if roll < 5 && !thms.is_empty() {
                format!("rewrite {}.", thms.choose(rng).unwrap())
            } else if roll < 7 {
                "idtac.".into()
            } else {
                "Proof.".into()
            }
        } else {
            fresh += 1;
            match rng.gen_range(0..10) {
                0..=3 => {
                    let e = random_expr(rng, &defs, 2);
                    let name = format!("d{fresh}");
                    let s = format!("Definition {name} := {}.", e.render());
                    defs.push((name, e.value() as i64));
                    s
                }
                4..=6 => {
                    let lhs = random_expr(rng, &defs, 2);
                    let rhs = if rng.gen_bool(0.6) {
                        Ex::Lit(lhs.value() as i64)
                    } else {
                        Ex::Lit(lhs.value() as i64 + 1)
                    };
                    let name = format!("t{fresh}");
                    thms.push(name.clone());
                    in_proof = 1;
                    format!("Lemma {name} : {} = {}.", lhs.render(), rhs.render())
                }
                7 => match defs.choose(rng) {
                    Some((n, _)) => format!("Check {n}."),
                    None => "Check nothing.".into(),
                },
                8 => "Frobnicate.".into(),
                _ => "(* note *) idtac.".into(),
            }
        };
        out.push(cmd);
    }
    out
}

pub fn script_text(cmds: &[String]) -> String {
    cmds.iter().map(|c| format!("{c}\n")).collect()
}
