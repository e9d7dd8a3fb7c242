//! Expression trees for structural equations.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("modulo by zero")]
    ModuloByZero,
    #[error("square root of a negative number")]
    SqrtOfNegative,
    #[error("result is not a finite number")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Mod,
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Floor,
    Sqrt,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Feature(String),
    /// The equation's own noise term.
    Noise,
    Neg(Box<Expr>),
    Call(Func, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    /// Evaluates with `lookup` resolving feature references.
    pub fn eval<F>(&self, lookup: &F, noise: f64) -> Result<f64, EvalError>
    where
        F: Fn(&str) -> f64,
    {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Feature(name) => lookup(name),
            Expr::Noise => noise,
            Expr::Neg(e) => -e.eval(lookup, noise)?,
            Expr::Call(Func::Floor, e) => e.eval(lookup, noise)?.floor(),
            Expr::Call(Func::Sqrt, e) => {
                let x = e.eval(lookup, noise)?;
                if x < 0.0 {
                    return Err(EvalError::SqrtOfNegative);
                }
                x.sqrt()
            }
            Expr::Binary(op, a, b) => {
                let x = a.eval(lookup, noise)?;
                let y = b.eval(lookup, noise)?;
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div if y == 0.0 => return Err(EvalError::DivisionByZero),
                    BinOp::Div => x / y,
                    BinOp::Pow => x.powf(y),
                    BinOp::Mod if y == 0.0 => return Err(EvalError::ModuloByZero),
                    // floored modulo: the result takes the sign of the divisor
                    BinOp::Mod => x - y * (x / y).floor(),
                    BinOp::Min => x.min(y),
                    BinOp::Max => x.max(y),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    pub fn features(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Expr::Feature(name) = e {
                out.insert(name.as_str());
            }
        });
        out
    }

    pub fn noise_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |e| {
            if matches!(e, Expr::Noise) {
                n += 1;
            }
        });
        n
    }

    fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Neg(e) | Expr::Call(_, e) => e.visit(f),
            Expr::Binary(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Expr::Const(_) | Expr::Feature(_) | Expr::Noise => {}
        }
    }

    /// Classifies how the noise term enters the expression.
    ///
    /// The top-level chain of `+`, `-` and negations is flattened into signed
    /// terms. If exactly one term is the bare noise and no other term
    /// mentions it, the expression is `g(parents) ± N`.
    pub fn noise_shape(&self) -> NoiseShape {
        if self.noise_count() == 0 {
            return NoiseShape::Free;
        }
        let mut terms = Vec::new();
        flatten_sum(self, 1.0, &mut terms);
        let mut sign = None;
        let mut rest = Vec::new();
        for (s, term) in terms {
            match term {
                Expr::Noise if sign.is_none() => sign = Some(s),
                t if t.noise_count() > 0 => return NoiseShape::NonAdditive,
                t => rest.push((s, t.clone())),
            }
        }
        match sign {
            Some(sign) => NoiseShape::Additive { sign, rest },
            None => NoiseShape::NonAdditive,
        }
    }
}

fn flatten_sum<'a>(e: &'a Expr, sign: f64, out: &mut Vec<(f64, &'a Expr)>) {
    match e {
        Expr::Binary(BinOp::Add, a, b) => {
            flatten_sum(a, sign, out);
            flatten_sum(b, sign, out);
        }
        Expr::Binary(BinOp::Sub, a, b) => {
            flatten_sum(a, sign, out);
            flatten_sum(b, -sign, out);
        }
        Expr::Neg(a) => flatten_sum(a, -sign, out),
        other => out.push((sign, other)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseShape {
    Free,
    /// `sum(sign_k * term_k) + sign * N`
    Additive { sign: f64, rest: Vec<(f64, Expr)> },
    NonAdditive,
}

impl NoiseShape {
    /// Value of the noise-free part, `g(parents)`.
    pub fn deterministic_part<F>(&self, lookup: &F) -> Result<f64, EvalError>
    where
        F: Fn(&str) -> f64,
    {
        match self {
            NoiseShape::Additive { rest, .. } => rest
                .iter()
                .try_fold(0.0, |acc, (s, t)| Ok(acc + s * t.eval(lookup, 0.0)?)),
            _ => Ok(0.0),
        }
    }
}

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
        Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
        Expr::Neg(_) => 3,
        Expr::Binary(BinOp::Pow, ..) => 4,
        _ => 5,
    }
}

fn write_name(f: &mut fmt::Formatter<'_>, name: &str) -> fmt::Result {
    let plain = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !super::parse::is_reserved(name);
    if plain {
        f.write_str(name)
    } else {
        write!(f, "\"{name}\"")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let child = |f: &mut fmt::Formatter<'_>, e: &Expr, min: u8| {
            if precedence(e) < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Feature(name) => write_name(f, name),
            Expr::Noise => f.write_str("N"),
            Expr::Neg(e) => {
                f.write_str("-")?;
                child(f, e, 3)
            }
            Expr::Call(func, e) => {
                let name = match func {
                    Func::Floor => "floor",
                    Func::Sqrt => "sqrt",
                };
                write!(f, "{name}({e})")
            }
            Expr::Binary(op @ (BinOp::Mod | BinOp::Min | BinOp::Max), a, b) => {
                let name = match op {
                    BinOp::Mod => "mod",
                    BinOp::Min => "min",
                    _ => "max",
                };
                write!(f, "{name}({a}, {b})")
            }
            Expr::Binary(op, a, b) => {
                let (sym, p) = match op {
                    BinOp::Add => ("+", 1),
                    BinOp::Sub => ("-", 1),
                    BinOp::Mul => ("*", 2),
                    BinOp::Div => ("/", 2),
                    _ => ("^", 4),
                };
                // left-associative operators need parens on a same-level right child
                let (lmin, rmin) = if *op == BinOp::Pow { (p + 1, p) } else { (p, p + 1) };
                child(f, a, lmin)?;
                write!(f, " {sym} ")?;
                child(f, b, rmin)
            }
        }
    }
}
