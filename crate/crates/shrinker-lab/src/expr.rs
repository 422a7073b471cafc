//! Tiny expression language for specifying scalar fields on the parameter
//! grid from the command line.
//!
//! Grammar (whitespace insensitive):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := number | [number '*'] wave
//! wave   := ('cos' | 'sin') '(' phase ')'
//! phase  := [sign] phterm (('+' | '-') phterm)*
//! phterm := [integer '*'] param
//! param  := 't' digits          (1-based axis index: t1, t2, ...)
//! ```
//!
//! Phases are integer combinations of the grid parameters, so every
//! expressible field is periodic on the grid; that is the entire analytic
//! test vocabulary and keeps sampled fields safe for the FD stencils.

use crate::grid::ParamGrid;
use crate::LabError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Wave {
    Cos,
    Sin,
}

#[derive(Debug, Clone)]
struct Term {
    coeff: f64,
    /// `None` for a constant term; otherwise the wave kind and the sparse
    /// integer frequency vector (axis, multiplier).
    wave: Option<(Wave, Vec<(usize, i64)>)>,
}

/// A parsed trigonometric polynomial in the grid parameters.
#[derive(Debug, Clone)]
pub struct TrigExpr {
    terms: Vec<Term>,
    source: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    LParen,
    RParen,
}

fn lex(s: &str) -> Result<Vec<Tok>, LabError> {
    let bad = |c: char| LabError::Config(format!("unexpected character `{c}` in expression"));
    let mut out = Vec::new();
    let mut it = s.chars().peekable();
    while let Some(&c) = it.peek() {
        match c {
            ' ' | '\t' => {
                it.next();
            }
            '+' => {
                it.next();
                out.push(Tok::Plus);
            }
            '-' => {
                it.next();
                out.push(Tok::Minus);
            }
            '*' => {
                it.next();
                out.push(Tok::Star);
            }
            '(' => {
                it.next();
                out.push(Tok::LParen);
            }
            ')' => {
                it.next();
                out.push(Tok::RParen);
            }
            '0'..='9' | '.' => {
                let mut buf = String::new();
                while let Some(&d) = it.peek() {
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' {
                        buf.push(d);
                        it.next();
                        // exponent sign
                        if (buf.ends_with('e') || buf.ends_with('E'))
                            && matches!(it.peek(), Some('+') | Some('-'))
                        {
                            buf.push(it.next().unwrap());
                        }
                    } else {
                        break;
                    }
                }
                let v: f64 = buf
                    .parse()
                    .map_err(|_| LabError::Config(format!("bad number `{buf}`")))?;
                out.push(Tok::Num(v));
            }
            c if c.is_ascii_alphabetic() => {
                let mut buf = String::new();
                while let Some(&d) = it.peek() {
                    if d.is_ascii_alphanumeric() {
                        buf.push(d);
                        it.next();
                    } else {
                        break;
                    }
                }
                out.push(Tok::Ident(buf));
            }
            other => return Err(bad(other)),
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), LabError> {
        match self.next() {
            Some(got) if got == t => Ok(()),
            got => Err(LabError::Config(format!(
                "expected {what}, got {}",
                describe(got.as_ref())
            ))),
        }
    }

    fn param(&mut self) -> Result<usize, LabError> {
        match self.next() {
            Some(Tok::Ident(name)) => {
                let idx: usize = name
                    .strip_prefix('t')
                    .and_then(|d| d.parse().ok())
                    .filter(|&i| i >= 1)
                    .ok_or_else(|| {
                        LabError::Config(format!("expected a parameter t1, t2, ..., got `{name}`"))
                    })?;
                Ok(idx - 1)
            }
            got => Err(LabError::Config(format!(
                "expected a parameter, got {}",
                describe(got.as_ref())
            ))),
        }
    }

    /// `[integer '*'] param`, sign already consumed by the caller.
    fn phase_term(&mut self, sign: i64, freqs: &mut Vec<(usize, i64)>) -> Result<(), LabError> {
        let mult = match self.peek() {
            Some(Tok::Num(v)) => {
                let v = *v;
                self.next();
                self.expect(Tok::Star, "`*` between multiplier and parameter")?;
                if v.fract() != 0.0 || v.abs() > 1e9 {
                    return Err(LabError::Config(format!(
                        "phase multipliers must be integers, got {v}"
                    )));
                }
                v as i64
            }
            _ => 1,
        };
        let axis = self.param()?;
        let add = sign * mult;
        match freqs.iter_mut().find(|(a, _)| *a == axis) {
            Some((_, c)) => *c += add,
            None => freqs.push((axis, add)),
        }
        Ok(())
    }

    fn phase(&mut self) -> Result<Vec<(usize, i64)>, LabError> {
        let mut freqs = Vec::new();
        let mut sign = match self.peek() {
            Some(Tok::Minus) => {
                self.next();
                -1
            }
            Some(Tok::Plus) => {
                self.next();
                1
            }
            _ => 1,
        };
        loop {
            self.phase_term(sign, &mut freqs)?;
            match self.peek() {
                Some(Tok::Plus) => {
                    self.next();
                    sign = 1;
                }
                Some(Tok::Minus) => {
                    self.next();
                    sign = -1;
                }
                _ => break,
            }
        }
        freqs.retain(|(_, c)| *c != 0);
        freqs.sort_by_key(|(a, _)| *a);
        Ok(freqs)
    }

    fn wave(&mut self, name: &str) -> Result<(Wave, Vec<(usize, i64)>), LabError> {
        let kind = match name {
            "cos" => Wave::Cos,
            "sin" => Wave::Sin,
            other => {
                return Err(LabError::Config(format!(
                    "unknown function `{other}` (only cos and sin)"
                )))
            }
        };
        self.expect(Tok::LParen, "`(`")?;
        let freqs = self.phase()?;
        self.expect(Tok::RParen, "`)`")?;
        Ok((kind, freqs))
    }

    /// `number | [number '*'] wave`, sign handled by the caller.
    fn term(&mut self, sign: f64) -> Result<Term, LabError> {
        match self.next() {
            Some(Tok::Num(v)) => {
                if matches!(self.peek(), Some(Tok::Star)) {
                    self.next();
                    match self.next() {
                        Some(Tok::Ident(name)) => {
                            let wave = self.wave(&name)?;
                            Ok(Term {
                                coeff: sign * v,
                                wave: Some(wave),
                            })
                        }
                        got => Err(LabError::Config(format!(
                            "expected cos or sin after `*`, got {}",
                            describe(got.as_ref())
                        ))),
                    }
                } else {
                    Ok(Term {
                        coeff: sign * v,
                        wave: None,
                    })
                }
            }
            Some(Tok::Ident(name)) => {
                let wave = self.wave(&name)?;
                Ok(Term {
                    coeff: sign,
                    wave: Some(wave),
                })
            }
            got => Err(LabError::Config(format!(
                "expected a term, got {}",
                describe(got.as_ref())
            ))),
        }
    }
}

fn describe(t: Option<&Tok>) -> String {
    match t {
        None => "end of input".into(),
        Some(Tok::Num(v)) => format!("number {v}"),
        Some(Tok::Ident(s)) => format!("`{s}`"),
        Some(Tok::Plus) => "`+`".into(),
        Some(Tok::Minus) => "`-`".into(),
        Some(Tok::Star) => "`*`".into(),
        Some(Tok::LParen) => "`(`".into(),
        Some(Tok::RParen) => "`)`".into(),
    }
}

impl TrigExpr {
    pub fn parse(s: &str) -> Result<Self, LabError> {
        let toks = lex(s)?;
        if toks.is_empty() {
            return Err(LabError::Config("empty expression".into()));
        }
        let mut p = Parser { toks, pos: 0 };
        let mut terms = Vec::new();
        let mut sign = match p.peek() {
            Some(Tok::Minus) => {
                p.next();
                -1.0
            }
            Some(Tok::Plus) => {
                p.next();
                1.0
            }
            _ => 1.0,
        };
        loop {
            terms.push(p.term(sign)?);
            match p.next() {
                None => break,
                Some(Tok::Plus) => sign = 1.0,
                Some(Tok::Minus) => sign = -1.0,
                got => {
                    return Err(LabError::Config(format!(
                        "expected `+`, `-`, or end of expression, got {}",
                        describe(got.as_ref())
                    )))
                }
            }
        }
        Ok(TrigExpr {
            terms,
            source: s.to_string(),
        })
    }

    /// Highest 1-based parameter index referenced (0 when constant).
    pub fn max_param(&self) -> usize {
        self.terms
            .iter()
            .filter_map(|t| t.wave.as_ref())
            .flat_map(|(_, f)| f.iter().map(|(a, _)| a + 1))
            .max()
            .unwrap_or(0)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, coords: &[f64]) -> f64 {
        let mut total = 0.0;
        for t in &self.terms {
            total += match &t.wave {
                None => t.coeff,
                Some((kind, freqs)) => {
                    let phase: f64 = freqs
                        .iter()
                        .map(|&(a, c)| c as f64 * coords[a])
                        .sum();
                    t.coeff
                        * match kind {
                            Wave::Cos => phase.cos(),
                            Wave::Sin => phase.sin(),
                        }
                }
            };
        }
        total
    }

    /// Evaluate at every grid node.
    pub fn sample(&self, grid: &ParamGrid) -> Result<Vec<f64>, LabError> {
        let need = self.max_param();
        if need > grid.axes() {
            return Err(LabError::Config(format!(
                "expression uses t{need} but the model has {} parameter(s)",
                grid.axes()
            )));
        }
        let k = grid.axes();
        let mut coords = vec![0.0; k];
        Ok((0..grid.len())
            .map(|node| {
                for (a, c) in coords.iter_mut().enumerate() {
                    *c = grid.coord(node, a);
                }
                self.eval(&coords)
            })
            .collect())
    }
}
