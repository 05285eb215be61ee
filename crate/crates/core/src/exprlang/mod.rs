//! A small expression language for Lagrangians and basis functions.
//!
//! Variables are `t` and the Lagrangian slots `u0 … uR`, where `u_i` is the
//! slot differentiated by `∂_{i+2}L` (`u0 ↔ x^{σ^r}`, `uR ↔ x^{Δ^r}`).
//! Precedence, loosest first: `+ −`, `* /`, unary `−`, `^` (right
//! associative). There is no implicit multiplication.

mod diff;
mod parse;

use std::fmt;

use crate::error::{Error, Result};

pub use diff::{differentiate, simplify};
pub use parse::{parse, parse_time_only};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Var {
    T,
    U(usize),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::T => write!(f, "t"),
            Var::U(k) => write!(f, "u{k}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Ln,
    Exp,
    Sin,
    Cos,
    Abs,
    /// Derivative of `abs`, with `sign(0) = 0`.
    Sign,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Ln => "ln",
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Abs => "abs",
            Func::Sign => "sign",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "ln" => Func::Ln,
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Values for `t` and `u0 … uR`.
#[derive(Clone, Copy, Debug)]
pub struct Bindings<'a> {
    pub t: f64,
    pub u: &'a [f64],
}

impl<'a> Bindings<'a> {
    pub fn new(t: f64, u: &'a [f64]) -> Self {
        Self { t, u }
    }

    pub fn time(t: f64) -> Bindings<'static> {
        Bindings { t, u: &[] }
    }
}

fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

impl Expr {
    pub fn num(v: f64) -> Self {
        Expr::Num(v)
    }

    pub fn var(v: Var) -> Self {
        Expr::Var(v)
    }

    pub fn eval(&self, b: &Bindings<'_>) -> Result<f64> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::T) => b.t,
            Expr::Var(Var::U(k)) => {
                *b.u.get(*k)
                    .ok_or_else(|| Error::Eval(format!("variable u{k} is unbound")))?
            }
            Expr::Neg(a) => -a.eval(b)?,
            Expr::Add(a, c) => a.eval(b)? + c.eval(b)?,
            Expr::Sub(a, c) => a.eval(b)? - c.eval(b)?,
            Expr::Mul(a, c) => a.eval(b)? * c.eval(b)?,
            Expr::Div(a, c) => {
                let den = c.eval(b)?;
                if den == 0.0 {
                    return Err(domain("division by zero"));
                }
                a.eval(b)? / den
            }
            Expr::Pow(a, c) => {
                let base = a.eval(b)?;
                let exponent = c.eval(b)?;
                if base < 0.0 && exponent.fract() != 0.0 {
                    return Err(domain(format!(
                        "negative base {base} with non-integer exponent {exponent}"
                    )));
                }
                if base == 0.0 && exponent < 0.0 {
                    return Err(domain("zero raised to a negative power"));
                }
                if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
                    base.powi(exponent as i32)
                } else {
                    base.powf(exponent)
                }
            }
            Expr::Call(func, a) => {
                let x = a.eval(b)?;
                match func {
                    Func::Ln => {
                        if x <= 0.0 {
                            return Err(domain(format!("ln of non-positive value {x}")));
                        }
                        x.ln()
                    }
                    Func::Exp => x.exp(),
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Abs => x.abs(),
                    Func::Sign => {
                        if x > 0.0 {
                            1.0
                        } else if x < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(domain(format!("non-finite result evaluating {self}")))
        }
    }

    /// Highest `u` slot referenced, if any.
    pub fn max_slot(&self) -> Option<usize> {
        match self {
            Expr::Num(_) | Expr::Var(Var::T) => None,
            Expr::Var(Var::U(k)) => Some(*k),
            Expr::Neg(a) | Expr::Call(_, a) => a.max_slot(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                match (a.max_slot(), b.max_slot()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
        }
    }

    pub fn depends_on(&self, var: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on(var),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.depends_on(var) || b.depends_on(var)
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Num(v) if v.is_sign_negative() => 3,
            Expr::Pow(..) => 4,
            Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => 5,
        }
    }

    fn write_child(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.precedence() < min_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if *v == 0.0 {
                    write!(f, "0")
                } else {
                    write!(f, "{v}")
                }
            }
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                a.write_child(f, 3)
            }
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                a.write_child(f, 1)?;
                write!(f, "{}", if matches!(self, Expr::Add(..)) { "+" } else { "-" })?;
                b.write_child(f, 2)
            }
            Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.write_child(f, 2)?;
                write!(f, "{}", if matches!(self, Expr::Mul(..)) { "*" } else { "/" })?;
                b.write_child(f, 3)
            }
            Expr::Pow(a, b) => {
                a.write_child(f, 5)?;
                write!(f, "^")?;
                b.write_child(f, 3)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}
