//! A small arithmetic expression language for dynamics and running costs.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          (right associative)
//! primary := number | variable | func '(' expr (',' expr)? ')' | '(' expr ')'
//! ```
//!
//! Variables are `x0 .. x{n-1}` for the state and `u1`, `u2` for the two
//! players' continuous controls.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: expected {expected}")]
    Syntax { offset: usize, expected: String },
    #[error("unbound variable `{0}`")]
    Unbound(Var),
    #[error("domain error: {0}")]
    Domain(String),
}

/// A variable reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    State(usize),
    U1,
    U2,
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::State(i) => write!(f, "x{i}"),
            Var::U1 => f.write_str("u1"),
            Var::U2 => f.write_str("u2"),
        }
    }
}

impl FromStr for Var {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "u1" => Ok(Var::U1),
            "u2" => Ok(Var::U2),
            _ => {
                let digits = s.strip_prefix('x').ok_or(())?;
                if digits.is_empty()
                    || !digits.bytes().all(|b| b.is_ascii_digit())
                    || (digits.len() > 1 && digits.starts_with('0'))
                {
                    return Err(());
                }
                digits.parse().map(Var::State).map_err(|_| ())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tanh,
    Exp,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tanh" => Func::Tanh,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tanh => "tanh",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

/// Expression syntax tree. Immutable after parsing.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Variable bindings used by [`Expr::eval`].
pub trait Env {
    fn lookup(&self, var: Var) -> Option<f64>;
}

/// Bindings for a state vector and a control pair; the hot path of the solver.
#[derive(Debug, Clone, Copy)]
pub struct PointEnv<'a> {
    pub x: &'a [f64],
    pub u1: f64,
    pub u2: f64,
}

impl Env for PointEnv<'_> {
    #[inline]
    fn lookup(&self, var: Var) -> Option<f64> {
        match var {
            Var::State(i) => self.x.get(i).copied(),
            Var::U1 => Some(self.u1),
            Var::U2 => Some(self.u2),
        }
    }
}

impl<S: std::borrow::Borrow<str> + std::hash::Hash + Eq> Env for HashMap<S, f64> {
    fn lookup(&self, var: Var) -> Option<f64> {
        self.get(var.to_string().as_str()).copied()
    }
}

impl<S: std::borrow::Borrow<str> + Ord> Env for BTreeMap<S, f64> {
    fn lookup(&self, var: Var) -> Option<f64> {
        self.get(var.to_string().as_str()).copied()
    }
}

impl Env for BTreeMap<Var, f64> {
    fn lookup(&self, var: Var) -> Option<f64> {
        self.get(&var).copied()
    }
}

fn checked(value: f64, what: &str) -> Result<f64, ExprError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ExprError::Domain(format!("{what} produced a non-finite value")))
    }
}

impl Expr {
    pub fn eval<E: Env + ?Sized>(&self, env: &E) -> Result<f64, ExprError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Var(v) => env.lookup(*v).ok_or(ExprError::Unbound(*v)),
            Expr::Neg(inner) => Ok(-inner.eval(env)?),
            Expr::Bin(op, lhs, rhs) => {
                let a = lhs.eval(env)?;
                let b = rhs.eval(env)?;
                match op {
                    BinOp::Add => checked(a + b, "addition"),
                    BinOp::Sub => checked(a - b, "subtraction"),
                    BinOp::Mul => checked(a * b, "multiplication"),
                    BinOp::Div => {
                        if b == 0.0 {
                            Err(ExprError::Domain("division by zero".into()))
                        } else {
                            checked(a / b, "division")
                        }
                    }
                    BinOp::Pow => checked(a.powf(b), "power"),
                }
            }
            Expr::Call(func, args) => {
                let a = args[0].eval(env)?;
                match func {
                    Func::Sin => Ok(a.sin()),
                    Func::Cos => Ok(a.cos()),
                    Func::Tanh => Ok(a.tanh()),
                    Func::Exp => checked(a.exp(), "exp"),
                    Func::Sqrt => {
                        if a < 0.0 {
                            Err(ExprError::Domain(format!("sqrt of negative value {a}")))
                        } else {
                            Ok(a.sqrt())
                        }
                    }
                    Func::Abs => Ok(a.abs()),
                    Func::Min => Ok(a.min(args[1].eval(env)?)),
                    Func::Max => Ok(a.max(args[1].eval(env)?)),
                }
            }
        }
    }

    /// Every variable referenced by the expression.
    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => {
                out.insert(*v);
            }
            Expr::Neg(inner) => inner.collect_vars(out),
            Expr::Bin(_, lhs, rhs) => {
                lhs.collect_vars(out);
                rhs.collect_vars(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }
}

/// Canonical form: binary operations fully parenthesized, literals in
/// shortest round-trip notation.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => {
                write!(f, "(-{:?})", -v)
            }
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(inner) => write!(f, "(-{inner})"),
            Expr::Bin(op, lhs, rhs) => write!(f, "({lhs} {} {rhs})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl FromStr for Expr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, ExprError> {
        parse(s)
    }
}

pub fn parse(text: &str) -> Result<Expr, ExprError> {
    let mut parser = Parser { src: text.as_bytes(), pos: 0 };
    let expr = parser.expr()?;
    parser.skip_ws();
    if parser.pos < parser.src.len() {
        return Err(parser.error("operator or end of input"));
    }
    Ok(expr)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, expected: &str) -> ExprError {
        ExprError::Syntax { offset: self.pos, expected: expected.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, byte: u8) -> bool {
        if self.peek() == Some(byte) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, byte: u8) -> Result<(), ExprError> {
        if self.eat(byte) {
            Ok(())
        } else {
            Err(self.error(&format!("'{}'", byte as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat(b'-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if self.eat(b'^') {
            let exponent = self.unary()?;
            Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)))
        } else {
            Ok(base)
        }
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            _ => Err(self.error("number, variable, function call or '('")),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut mantissa = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            mantissa += digits(self);
        }
        if mantissa == 0 {
            self.pos = start;
            return Err(self.error("digits"));
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = save;
                return Err(self.error("exponent digits"));
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        let value: f64 = text.parse().map_err(|_| ExprError::Syntax {
            offset: start,
            expected: "a valid number".into(),
        })?;
        Ok(Expr::Num(value))
    }

    fn identifier(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        if let Some(func) = Func::from_name(name) {
            self.expect(b'(')?;
            let mut args = vec![self.expr()?];
            while args.len() < func.arity() {
                self.expect(b',')?;
                args.push(self.expr()?);
            }
            self.expect(b')')?;
            return Ok(Expr::Call(func, args));
        }
        match name.parse::<Var>() {
            Ok(v) => Ok(Expr::Var(v)),
            Err(()) => Err(ExprError::Syntax {
                offset: start,
                expected: "a variable (x0, x1, ..., u1, u2) or a known function".into(),
            }),
        }
    }
}
