//! Truncated linear temporal logic with quantitative semantics.
//!
//! Formulas are written in a prefix syntax such as
//! `(and (always (pred coll)) (then (pred g1) (pred g2)))`. Each predicate
//! is a margin signal, positive where it holds. Robustness is computed for
//! every start time by backward recursions:
//!
//! - `□φ(t) = min(φ(t), □φ(t+1))`, `◊φ(t) = max(φ(t), ◊φ(t+1))`
//! - `(φ U ψ)(t) = max(ψ(t), min(φ(t), (φ U ψ)(t+1)))`
//! - `(φ T ψ)(t) = max(min(φ(t), ◊ψ(t+1)), (φ T ψ)(t+1))`
//! - `○φ(t) = φ(t+1)`
//!
//! Past the horizon, `□` is `+∞`, `◊` is `−∞` and `○` holds vacuously.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub enum Formula {
    Pred(String),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    /// Window `[t+a, t+b]` relative to the evaluation time; `None` is
    /// `[t, T]`.
    Always(Option<(usize, usize)>, Box<Formula>),
    Eventually(Option<(usize, usize)>, Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
    Then(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
}

impl Formula {
    pub fn pred(name: &str) -> Self {
        Formula::Pred(name.to_string())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn always(f: Formula) -> Self {
        Formula::Always(None, Box::new(f))
    }

    pub fn eventually(f: Formula) -> Self {
        Formula::Eventually(None, Box::new(f))
    }

    pub fn until(a: Formula, b: Formula) -> Self {
        Formula::Until(Box::new(a), Box::new(b))
    }

    pub fn then(a: Formula, b: Formula) -> Self {
        Formula::Then(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn next(f: Formula) -> Self {
        Formula::Next(Box::new(f))
    }

    /// Predicate names used anywhere in the formula.
    pub fn predicates(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Formula::Pred(n) => out.push(n),
            Formula::Not(f) | Formula::Always(_, f) | Formula::Eventually(_, f) | Formula::Next(f) => f.collect(out),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.collect(out)),
            Formula::Implies(a, b) | Formula::Until(a, b) | Formula::Then(a, b) => {
                a.collect(out);
                b.collect(out);
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let window = |f: &mut fmt::Formatter<'_>, w: &Option<(usize, usize)>| match w {
            Some((a, b)) => write!(f, " {a} {b}"),
            None => Ok(()),
        };
        match self {
            Formula::Pred(n) => write!(f, "(pred {n})"),
            Formula::Not(a) => write!(f, "(not {a})"),
            Formula::And(fs) | Formula::Or(fs) => {
                write!(f, "({}", if matches!(self, Formula::And(_)) { "and" } else { "or" })?;
                for a in fs {
                    write!(f, " {a}")?;
                }
                write!(f, ")")
            }
            Formula::Implies(a, b) => write!(f, "(implies {a} {b})"),
            Formula::Always(w, a) => {
                write!(f, "(always")?;
                window(f, w)?;
                write!(f, " {a})")
            }
            Formula::Eventually(w, a) => {
                write!(f, "(eventually")?;
                window(f, w)?;
                write!(f, " {a})")
            }
            Formula::Until(a, b) => write!(f, "(until {a} {b})"),
            Formula::Then(a, b) => write!(f, "(then {a} {b})"),
            Formula::Next(a) => write!(f, "(next {a})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Open,
    Close,
    Atom(String),
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let flush = |cur: &mut String, out: &mut Vec<Token>| {
        if !cur.is_empty() {
            out.push(Token::Atom(std::mem::take(cur)));
        }
    };
    for c in text.chars() {
        match c {
            '(' | ')' => {
                flush(&mut cur, &mut out);
                out.push(if c == '(' { Token::Open } else { Token::Close });
            }
            c if c.is_whitespace() => flush(&mut cur, &mut out),
            c => cur.push(c),
        }
    }
    flush(&mut cur, &mut out);
    out
}

/// Parses the prefix syntax. A bare atom is a predicate, and `then` with
/// more than two arguments nests to the right.
pub fn parse_formula(text: &str) -> Result<Formula> {
    let tokens = tokenize(text);
    let mut pos = 0;
    let f = parse_at(&tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err(Error::Parse(format!("trailing input after token {pos}")));
    }
    Ok(f)
}

fn parse_at(tokens: &[Token], pos: &mut usize) -> Result<Formula> {
    let tok = tokens
        .get(*pos)
        .ok_or_else(|| Error::Parse("unexpected end of formula".into()))?;
    *pos += 1;
    match tok {
        Token::Atom(a) => Ok(Formula::Pred(a.clone())),
        Token::Close => Err(Error::Parse(format!("unexpected ')' at token {}", *pos - 1))),
        Token::Open => {
            let head = match tokens.get(*pos) {
                Some(Token::Atom(h)) => h.clone(),
                _ => return Err(Error::Parse("expected an operator after '('".into())),
            };
            *pos += 1;
            let f = match head.as_str() {
                "pred" => match tokens.get(*pos) {
                    Some(Token::Atom(n)) => {
                        *pos += 1;
                        Formula::Pred(n.clone())
                    }
                    _ => return Err(Error::Parse("pred needs a name".into())),
                },
                "always" | "eventually" => {
                    let window = match (tokens.get(*pos), tokens.get(*pos + 1)) {
                        (Some(Token::Atom(a)), Some(Token::Atom(b))) if a.parse::<usize>().is_ok() => {
                            let a: usize = a.parse().unwrap();
                            let b: usize = b.parse().map_err(|_| Error::Parse(format!("bad window end {b:?}")))?;
                            if a > b {
                                return Err(Error::Parse(format!("empty window [{a}, {b}]")));
                            }
                            *pos += 2;
                            Some((a, b))
                        }
                        _ => None,
                    };
                    let body = Box::new(parse_at(tokens, pos)?);
                    if head == "always" {
                        Formula::Always(window, body)
                    } else {
                        Formula::Eventually(window, body)
                    }
                }
                _ => {
                    let mut args = Vec::new();
                    while !matches!(tokens.get(*pos), Some(Token::Close) | None) {
                        args.push(parse_at(tokens, pos)?);
                    }
                    build(&head, args)?
                }
            };
            match tokens.get(*pos) {
                Some(Token::Close) => {
                    *pos += 1;
                    Ok(f)
                }
                _ => Err(Error::Parse(format!("expected ')' to close ({head} ...)"))),
            }
        }
    }
}

fn build(head: &str, mut args: Vec<Formula>) -> Result<Formula> {
    let arity = |n: usize, args: &Vec<Formula>| {
        if args.len() == n {
            Ok(())
        } else {
            Err(Error::Parse(format!(
                "{head} takes {n} argument(s), got {}",
                args.len()
            )))
        }
    };
    Ok(match head {
        "not" | "next" => {
            arity(1, &args)?;
            let a = Box::new(args.pop().unwrap());
            if head == "not" {
                Formula::Not(a)
            } else {
                Formula::Next(a)
            }
        }
        "and" | "or" => {
            if args.is_empty() {
                return Err(Error::Parse(format!("{head} needs at least one argument")));
            }
            if head == "and" {
                Formula::And(args)
            } else {
                Formula::Or(args)
            }
        }
        "implies" | "until" => {
            arity(2, &args)?;
            let b = Box::new(args.pop().unwrap());
            let a = Box::new(args.pop().unwrap());
            if head == "implies" {
                Formula::Implies(a, b)
            } else {
                Formula::Until(a, b)
            }
        }
        "then" => {
            if args.len() < 2 {
                return Err(Error::Parse("then takes at least 2 arguments".into()));
            }
            let mut f = args.pop().unwrap();
            while let Some(a) = args.pop() {
                f = Formula::then(a, f);
            }
            f
        }
        other => return Err(Error::Parse(format!("unknown operator {other:?}"))),
    })
}

/// Predicate name to margin signal over `t = 0..=T`.
pub type Predicates<S> = BTreeMap<String, Vec<S>>;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TltlOptions {
    /// Log-sum-exp temperature for smooth min/max; `None` is exact.
    pub temperature: Option<f64>,
}

/// A robustness value, extended with the infinities of empty windows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Robustness<S> {
    NegInf,
    Val(S),
    PosInf,
}

impl<S: Scalar> Robustness<S> {
    fn neg(self) -> Self {
        match self {
            Robustness::NegInf => Robustness::PosInf,
            Robustness::PosInf => Robustness::NegInf,
            Robustness::Val(v) => Robustness::Val(-v),
        }
    }

    pub fn to_scalar(self) -> S {
        match self {
            Robustness::NegInf => S::neg_infinity(),
            Robustness::PosInf => S::infinity(),
            Robustness::Val(v) => v,
        }
    }
}

fn reduce<S: Scalar>(items: &[Robustness<S>], is_min: bool, opts: TltlOptions) -> Robustness<S> {
    let (absorb, neutral) = if is_min {
        (Robustness::NegInf, Robustness::PosInf)
    } else {
        (Robustness::PosInf, Robustness::NegInf)
    };
    let mut vals = Vec::with_capacity(items.len());
    for r in items {
        match r {
            Robustness::Val(v) => vals.push(*v),
            r if *r == absorb => return absorb,
            _ => {}
        }
    }
    let Some(&first) = vals.first() else {
        return neutral;
    };
    let best = vals[1..]
        .iter()
        .fold(first, |a, &b| if is_min { a.min_first(b) } else { a.max_first(b) });
    Robustness::Val(match opts.temperature {
        Some(tau) if vals.len() > 1 => {
            let sign = if is_min { -1.0 } else { 1.0 };
            let k = S::cst(sign / tau);
            let s = vals
                .iter()
                .map(|&v| ((v - best) * k).exp())
                .fold(S::zero(), |a, b| a + b);
            best + s.ln() / k
        }
        _ => best,
    })
}

fn min2<S: Scalar>(a: Robustness<S>, b: Robustness<S>, o: TltlOptions) -> Robustness<S> {
    reduce(&[a, b], true, o)
}

fn max2<S: Scalar>(a: Robustness<S>, b: Robustness<S>, o: TltlOptions) -> Robustness<S> {
    reduce(&[a, b], false, o)
}

/// Robustness of `formula` at every start time.
pub fn robustness_trace<S: Scalar>(
    formula: &Formula,
    preds: &Predicates<S>,
    opts: TltlOptions,
) -> Result<Vec<Robustness<S>>> {
    let len = preds
        .values()
        .next()
        .map(Vec::len)
        .ok_or_else(|| Error::Invalid("no predicate signals".into()))?;
    if len == 0 || preds.values().any(|p| p.len() != len) {
        return Err(Error::Dimension(
            "predicate signals must share one nonzero length".into(),
        ));
    }
    eval(formula, preds, opts, len)
}

fn eval<S: Scalar>(f: &Formula, preds: &Predicates<S>, o: TltlOptions, len: usize) -> Result<Vec<Robustness<S>>> {
    let sub = |g: &Formula| eval(g, preds, o, len);
    Ok(match f {
        Formula::Pred(n) => preds
            .get(n)
            .ok_or_else(|| Error::Invalid(format!("unknown predicate {n:?}")))?
            .iter()
            .map(|&v| Robustness::Val(v))
            .collect(),
        Formula::Not(a) => sub(a)?.into_iter().map(Robustness::neg).collect(),
        Formula::And(fs) | Formula::Or(fs) => {
            let traces = fs.iter().map(sub).collect::<Result<Vec<_>>>()?;
            let is_min = matches!(f, Formula::And(_));
            (0..len)
                .map(|t| {
                    let col: Vec<_> = traces.iter().map(|tr| tr[t]).collect();
                    reduce(&col, is_min, o)
                })
                .collect()
        }
        Formula::Implies(a, b) => {
            let (a, b) = (sub(a)?, sub(b)?);
            a.into_iter().zip(b).map(|(x, y)| max2(x.neg(), y, o)).collect()
        }
        Formula::Always(w, a) | Formula::Eventually(w, a) => {
            let is_min = matches!(f, Formula::Always(..));
            let inner = sub(a)?;
            match w {
                None => {
                    let mut out = vec![Robustness::Val(S::zero()); len];
                    let mut acc = if is_min { Robustness::PosInf } else { Robustness::NegInf };
                    for t in (0..len).rev() {
                        acc = reduce(&[inner[t], acc], is_min, o);
                        out[t] = acc;
                    }
                    out
                }
                Some((lo, hi)) => {
                    if *hi >= len {
                        return Err(Error::Invalid(format!(
                            "window [{lo}, {hi}] exceeds the horizon {}",
                            len - 1
                        )));
                    }
                    (0..len)
                        .map(|t| {
                            let a = (t + lo).min(len);
                            let b = (t + hi + 1).min(len);
                            reduce(&inner[a..b], is_min, o)
                        })
                        .collect()
                }
            }
        }
        Formula::Until(a, b) => {
            let (phi, psi) = (sub(a)?, sub(b)?);
            let mut out = vec![Robustness::NegInf; len];
            let mut next = Robustness::NegInf;
            for t in (0..len).rev() {
                next = max2(psi[t], min2(phi[t], next, o), o);
                out[t] = next;
            }
            out
        }
        Formula::Then(a, b) => {
            let (phi, psi) = (sub(a)?, sub(b)?);
            let mut out = vec![Robustness::NegInf; len];
            let mut ev_after = Robustness::NegInf;
            let mut acc = Robustness::NegInf;
            for t in (0..len).rev() {
                acc = max2(min2(phi[t], ev_after, o), acc, o);
                out[t] = acc;
                ev_after = max2(psi[t], ev_after, o);
            }
            out
        }
        Formula::Next(a) => {
            let inner = sub(a)?;
            let mut out: Vec<_> = inner[1..].to_vec();
            out.push(Robustness::PosInf);
            out
        }
    })
}

/// Robustness at `t = 0`; positive means the trajectory satisfies the
/// formula.
pub fn tltl_robustness<S: Scalar>(formula: &Formula, preds: &Predicates<S>, opts: TltlOptions) -> Result<S> {
    Ok(robustness_trace(formula, preds, opts)?[0].to_scalar())
}
