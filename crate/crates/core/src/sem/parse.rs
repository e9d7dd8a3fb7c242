//! Line-oriented DSL for structural equation models.
//!
//! ```text
//! # comment
//! model = N ; noise model ~ Uniform(1,10) ; integer
//! "team size" = N ; noise "team size" ~ Uniform(1,3)
//! inspNumTest = 5*model + 3*"team size" + N ; noise inspNumTest ~ Uniform(-1,2)
//! ```
//!
//! `N` is the equation's own noise. Names containing spaces or clashing
//! with keywords are written in double quotes. Operators: `+ - * / ^`,
//! functions `floor sqrt mod min max`.

use std::fmt;

use thiserror::Error;

use super::expr::{BinOp, Expr, Func};
use super::NoiseDist;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

/// One parsed DSL line, before model-level validation.
#[derive(Debug, Clone, PartialEq)]
pub struct EquationDecl {
    pub feature: String,
    pub expr: Expr,
    pub noise: Option<NoiseDist>,
    pub integer: bool,
    pub line: usize,
}

const FUNCTIONS: [&str; 5] = ["floor", "sqrt", "mod", "min", "max"];
const KEYWORDS: [&str; 3] = ["N", "noise", "integer"];

pub(crate) fn is_reserved(name: &str) -> bool {
    FUNCTIONS.contains(&name) || KEYWORDS.contains(&name)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Quoted(String),
    Sym(char),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(n) => write!(f, "number {n}"),
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Quoted(s) => write!(f, "\"{s}\""),
            Tok::Sym(c) => write!(f, "`{c}`"),
        }
    }
}

fn lex(line: &str, line_no: usize) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<char> = line.chars().collect();
    let err = |column: usize, message: String| ParseError { line: line_no, column, message };
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c == '#' {
            break;
        } else if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && matches!(chars[i], 'e' | 'E') {
                let mut j = i + 1;
                if j < chars.len() && matches!(chars[j], '+' | '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let n = text
                .parse::<f64>()
                .map_err(|_| err(col, format!("invalid number `{text}`")))?;
            out.push((Tok::Num(n), col));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else if c == '"' {
            let start = i + 1;
            i = start;
            while i < chars.len() && chars[i] != '"' {
                i += 1;
            }
            if i == chars.len() {
                return Err(err(col, "unterminated quoted name".into()));
            }
            let name: String = chars[start..i].iter().collect();
            if name.is_empty() {
                return Err(err(col, "empty quoted name".into()));
            }
            out.push((Tok::Quoted(name), col));
            i += 1;
        } else if "=;~(),+-*/^".contains(c) {
            out.push((Tok::Sym(c), col));
            i += 1;
        } else {
            return Err(err(col, format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    line: usize,
    end_col: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map(|(_, c)| *c).unwrap_or(self.end_col)
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError { line: self.line, column: self.col(), message: message.into() }
    }

    fn unexpected(&self, wanted: &str) -> ParseError {
        match self.peek() {
            Some(t) => self.error(format!("expected {wanted}, found {t}")),
            None => self.error(format!("expected {wanted}, found end of line")),
        }
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{c}`")))
        }
    }

    fn name(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Quoted(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            Some(Tok::Ident(s)) if !is_reserved(s) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.unexpected("a feature name")),
        }
    }

    fn keyword(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                BinOp::Add
            } else if self.eat('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            lhs = Expr::binary(op, lhs, self.term()?);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                BinOp::Mul
            } else if self.eat('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            lhs = Expr::binary(op, lhs, self.unary()?);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat('^') {
            Ok(Expr::binary(BinOp::Pow, base, self.unary()?))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Num(n)) => {
                self.pos += 1;
                Ok(Expr::Const(n))
            }
            Some(Tok::Quoted(s)) => {
                self.pos += 1;
                Ok(Expr::Feature(s))
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Ident(s)) if s == "N" => {
                self.pos += 1;
                Ok(Expr::Noise)
            }
            Some(Tok::Ident(s)) if FUNCTIONS.contains(&s.as_str()) => {
                self.pos += 1;
                self.expect('(')?;
                let first = self.expr()?;
                let e = match s.as_str() {
                    "floor" => Expr::Call(Func::Floor, Box::new(first)),
                    "sqrt" => Expr::Call(Func::Sqrt, Box::new(first)),
                    f => {
                        self.expect(',')?;
                        let second = self.expr()?;
                        let op = match f {
                            "mod" => BinOp::Mod,
                            "min" => BinOp::Min,
                            _ => BinOp::Max,
                        };
                        Expr::binary(op, first, second)
                    }
                };
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Ident(_)) => Ok(Expr::Feature(self.name()?)),
            _ => Err(self.unexpected("an expression")),
        }
    }

    fn signed_number(&mut self) -> Result<f64, ParseError> {
        let negative = self.eat('-');
        if !negative {
            self.eat('+');
        }
        match self.next() {
            Some(Tok::Num(n)) => Ok(if negative { -n } else { n }),
            _ => {
                self.pos -= 1;
                Err(self.unexpected("a number"))
            }
        }
    }

    fn distribution(&mut self) -> Result<NoiseDist, ParseError> {
        let col = self.col();
        let name = match self.next() {
            Some(Tok::Ident(s)) => s,
            _ => {
                self.pos -= 1;
                return Err(self.unexpected("a distribution name"));
            }
        };
        self.expect('(')?;
        let mut args = vec![self.signed_number()?];
        while self.eat(',') {
            args.push(self.signed_number()?);
        }
        self.expect(')')?;
        let err = |message: String| ParseError { line: self.line, column: col, message };
        let arity = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(err(format!("{name} takes {n} argument(s), got {}", args.len())))
            }
        };
        let dist = match name.as_str() {
            "Uniform" => {
                arity(2)?;
                NoiseDist::Uniform { lo: args[0], hi: args[1] }
            }
            "DiscreteUniform" => {
                arity(2)?;
                if args.iter().any(|a| a.fract() != 0.0) {
                    return Err(err("DiscreteUniform bounds must be integers".into()));
                }
                NoiseDist::DiscreteUniform { lo: args[0] as i64, hi: args[1] as i64 }
            }
            "Normal" => {
                arity(2)?;
                NoiseDist::Normal { mean: args[0], stddev: args[1] }
            }
            "PointMass" => {
                arity(1)?;
                NoiseDist::PointMass { value: args[0] }
            }
            other => return Err(err(format!("unknown distribution `{other}`"))),
        };
        dist.validate().map_err(err)?;
        Ok(dist)
    }

    fn equation(&mut self) -> Result<EquationDecl, ParseError> {
        let feature = self.name()?;
        self.expect('=')?;
        let expr = self.expr()?;
        let mut noise = None;
        let mut integer = false;
        while self.eat(';') {
            if self.keyword("noise") {
                let col = self.col();
                let owner = self.name()?;
                if owner != feature {
                    return Err(ParseError {
                        line: self.line,
                        column: col,
                        message: format!("noise clause names `{owner}` but the equation defines `{feature}`"),
                    });
                }
                self.expect('~')?;
                if noise.is_some() {
                    return Err(self.error("second noise clause"));
                }
                noise = Some(self.distribution()?);
            } else if self.keyword("integer") {
                integer = true;
            } else {
                return Err(self.unexpected("`noise` or `integer`"));
            }
        }
        if self.pos < self.toks.len() {
            return Err(self.unexpected("`;` or end of line"));
        }
        Ok(EquationDecl { feature, expr, noise, integer, line: self.line })
    }
}

/// Parses every non-blank, non-comment line as one equation.
pub fn parse_equations(text: &str) -> Result<Vec<EquationDecl>, ParseError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let toks = lex(line, line_no)?;
        if toks.is_empty() {
            continue;
        }
        let mut parser = Parser { toks, pos: 0, line: line_no, end_col: line.chars().count() + 1 };
        out.push(parser.equation()?);
    }
    Ok(out)
}

/// Parses a standalone expression.
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let toks = lex(text, 1)?;
    let mut parser = Parser { toks, pos: 0, line: 1, end_col: text.chars().count() + 1 };
    let e = parser.expr()?;
    if parser.pos < parser.toks.len() {
        return Err(parser.unexpected("end of expression"));
    }
    Ok(e)
}
