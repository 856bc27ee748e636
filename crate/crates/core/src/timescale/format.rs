//! Text description of a time scale.
//!
//! ```text
//! # comments start with '#'
//! point 0
//! interval 2 3
//! tail periodic 3
//! pattern interval 5 6
//! ```
//!
//! Exactly one `tail` line is required: `tail periodic <period>` followed by
//! one or more `pattern` lines, `tail generator example46 <p> <q> [power <e>]`,
//! `tail generator growing-gaps <unit>`, or `tail halfline`.

use super::{Component, EpochRule, Generator, Tail, TimeScale};
use crate::error::{Error, Result};
use crate::num::{lit, to_f64, Real};
use std::fmt;
use std::str::FromStr;

struct Tok<'a> {
    text: &'a str,
    col: usize,
}

fn tokens(line: &str) -> Vec<Tok<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Tok { text: &line[s..i], col: line[..s].chars().count() + 1 });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Tok { text: &line[s..], col: line[..s].chars().count() + 1 });
    }
    out
}

fn err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, column, message: message.into() }
}

fn num<R: Real>(t: &Tok, line: usize) -> Result<R> {
    let v: f64 = t.text.parse().map_err(|_| err(line, t.col, format!("expected a number, found `{}`", t.text)))?;
    if !v.is_finite() {
        return Err(err(line, t.col, "number must be finite"));
    }
    Ok(lit(v))
}

fn int(t: &Tok, line: usize) -> Result<u32> {
    t.text
        .parse()
        .map_err(|_| err(line, t.col, format!("expected a positive integer, found `{}`", t.text)))
}

fn arity(toks: &[Tok], n: usize, line: usize, line_len: usize) -> Result<()> {
    if toks.len() < n {
        return Err(err(line, line_len + 1, format!("expected {} fields", n)));
    }
    if toks.len() > n {
        return Err(err(line, toks[n].col, format!("unexpected `{}`", toks[n].text)));
    }
    Ok(())
}

fn component<R: Real>(toks: &[Tok], line: usize, line_len: usize) -> Result<Component<R>> {
    match toks[0].text {
        "interval" => {
            arity(toks, 3, line, line_len)?;
            let (a, b) = (num::<R>(&toks[1], line)?, num::<R>(&toks[2], line)?);
            if !(a < b) {
                return Err(err(line, toks[2].col, "interval end must exceed its start"));
            }
            Ok(Component::Interval { start: a, end: b })
        }
        "point" => {
            arity(toks, 2, line, line_len)?;
            Ok(Component::Point(num(&toks[1], line)?))
        }
        other => Err(err(line, toks[0].col, format!("expected `interval` or `point`, found `{other}`"))),
    }
}

/// Parses a scale description.
pub fn parse_scale<R: Real>(text: &str) -> Result<TimeScale<R>> {
    let mut components = Vec::new();
    let mut tail: Option<(Tail<R>, usize)> = None;
    let mut pattern = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let len = content.trim_end().chars().count();
        let toks = tokens(content);
        if toks.is_empty() {
            continue;
        }
        match toks[0].text {
            "interval" | "point" => {
                if tail.is_some() {
                    return Err(err(line, toks[0].col, "components must precede the tail"));
                }
                components.push(component::<R>(&toks, line, len)?);
            }
            "pattern" => match &tail {
                Some((Tail::Periodic { .. }, _)) => {
                    if toks.len() < 2 {
                        return Err(err(line, len + 1, "expected a component"));
                    }
                    pattern.push(component::<R>(&toks[1..], line, len)?);
                }
                _ => return Err(err(line, toks[0].col, "`pattern` must follow `tail periodic`")),
            },
            "tail" => {
                if tail.is_some() {
                    return Err(err(line, toks[0].col, "duplicate tail"));
                }
                if toks.len() < 2 {
                    return Err(err(line, len + 1, "expected a tail kind"));
                }
                let t = match toks[1].text {
                    "periodic" => {
                        arity(&toks, 3, line, len)?;
                        let p = num::<R>(&toks[2], line)?;
                        if p <= R::zero() {
                            return Err(err(line, toks[2].col, "period must be positive"));
                        }
                        Tail::Periodic { period: p, pattern: vec![] }
                    }
                    "halfline" => {
                        arity(&toks, 2, line, len)?;
                        Tail::HalfLine
                    }
                    "generator" => {
                        if toks.len() < 3 {
                            return Err(err(line, len + 1, "expected a generator name"));
                        }
                        match toks[2].text {
                            "example46" => {
                                let epochs = match toks.len() {
                                    5 => EpochRule::Power(2),
                                    7 if toks[5].text == "power" => EpochRule::Power(int(&toks[6], line)?),
                                    7 => return Err(err(line, toks[5].col, "expected `power`")),
                                    _ => return Err(err(line, toks[0].col, "expected `example46 <p> <q> [power <e>]`")),
                                };
                                Tail::Generator(Generator::Example46 {
                                    p: int(&toks[3], line)?,
                                    q: int(&toks[4], line)?,
                                    epochs,
                                })
                            }
                            "growing-gaps" => {
                                arity(&toks, 4, line, len)?;
                                Tail::Generator(Generator::GrowingGaps { unit: num(&toks[3], line)? })
                            }
                            other => return Err(err(line, toks[2].col, format!("unknown generator `{other}`"))),
                        }
                    }
                    other => return Err(err(line, toks[1].col, format!("unknown tail kind `{other}`"))),
                };
                tail = Some((t, line));
            }
            other => return Err(err(line, toks[0].col, format!("unknown directive `{other}`"))),
        }
    }
    let (mut tail, tail_line) = tail.ok_or_else(|| err(text.lines().count().max(1), 1, "missing `tail` line"))?;
    if let Tail::Periodic { pattern: p, .. } = &mut tail {
        if pattern.is_empty() {
            return Err(err(tail_line, 1, "periodic tail needs at least one `pattern` line"));
        }
        *p = pattern;
    }
    TimeScale::new(components, tail).map_err(|e| match e {
        Error::Parse { .. } => e,
        other => err(tail_line, 1, other.to_string()),
    })
}

impl<R: Real> FromStr for TimeScale<R> {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_scale(s)
    }
}

fn write_component<R: Real>(f: &mut fmt::Formatter<'_>, c: &Component<R>) -> fmt::Result {
    match c {
        Component::Interval { start, end } => write!(f, "interval {} {}", to_f64(*start), to_f64(*end)),
        Component::Point(t) => write!(f, "point {}", to_f64(*t)),
    }
}

impl<R: Real> fmt::Display for TimeScale<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.components {
            write_component(f, c)?;
            writeln!(f)?;
        }
        match &self.tail {
            Tail::Periodic { period, pattern } => {
                writeln!(f, "tail periodic {}", to_f64(*period))?;
                for c in pattern {
                    write!(f, "pattern ")?;
                    write_component(f, c)?;
                    writeln!(f)?;
                }
            }
            Tail::Generator(Generator::Example46 { p, q, epochs: EpochRule::Power(e) }) => {
                writeln!(f, "tail generator example46 {p} {q} power {e}")?;
            }
            Tail::Generator(Generator::GrowingGaps { unit }) => {
                writeln!(f, "tail generator growing-gaps {}", to_f64(*unit))?;
            }
            Tail::HalfLine => writeln!(f, "tail halfline")?,
        }
        Ok(())
    }
}
