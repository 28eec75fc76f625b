//! Closed-form real expressions in the chart coordinates: parsing, printing,
//! exact differentiation and evaluation.
//!
//! Variables `x0..x3` are the coordinates (`t` is an alias of `x0`). Symbol
//! components additionally use the covector variables `xi0..xi3`, which are
//! only accepted by [`parse_phase_expression`].

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Maximum chart dimension.
pub const MAX_DIM: usize = 4;

/// Index of the first covector variable in the evaluation slot layout
/// `[x0, x1, x2, x3, xi0, xi1, xi2, xi3]`.
pub const XI_OFFSET: usize = MAX_DIM;

/// Number of evaluation slots.
pub const NUM_SLOTS: usize = 2 * MAX_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Sinh,
    Cosh,
    Tanh,
}

impl Func {
    pub const ALL: [Func; 9] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Sinh,
        Func::Cosh,
        Func::Tanh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.iter().copied().find(|f| f.name() == name)
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Sqrt => v.sqrt(),
            Func::Sinh => v.sinh(),
            Func::Cosh => v.cosh(),
            Func::Tanh => v.tanh(),
        }
    }
}

/// Expression tree. Subtrees are reference counted, so cloning is cheap and
/// derivative trees share structure with their source.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Evaluation slot: `0..4` are coordinates, `4..8` covector components.
    Var(usize),
    Neg(Arc<Expr>),
    Add(Arc<Expr>, Arc<Expr>),
    Sub(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Div(Arc<Expr>, Arc<Expr>),
    Pow(Arc<Expr>, i32),
    Call(Func, Arc<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: expected one of {expected:?}")]
    Syntax {
        offset: usize,
        expected: Vec<String>,
    },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("non-finite value {0}")]
    NonFinite(f64),
}

// Constructors with constant folding. Only the rules needed for readable
// derivative trees are applied.

pub fn num(v: f64) -> Expr {
    Expr::Num(v)
}

pub fn var(slot: usize) -> Expr {
    Expr::Var(slot)
}

/// Covector component `xi_mu`.
pub fn xi(mu: usize) -> Expr {
    Expr::Var(XI_OFFSET + mu)
}

impl Expr {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_num() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_num() == Some(1.0)
    }

    pub fn neg(self) -> Expr {
        match self {
            Expr::Num(v) => Expr::Num(-v),
            Expr::Neg(inner) => (*inner).clone(),
            e => Expr::Neg(Arc::new(e)),
        }
    }

    pub fn add(self, rhs: Expr) -> Expr {
        match (self.as_num(), rhs.as_num()) {
            (Some(a), Some(b)) => Expr::Num(a + b),
            (Some(a), _) if a == 0.0 => rhs,
            (_, Some(b)) if b == 0.0 => self,
            _ => match rhs {
                Expr::Neg(inner) => Expr::Sub(Arc::new(self), inner),
                rhs => Expr::Add(Arc::new(self), Arc::new(rhs)),
            },
        }
    }

    pub fn sub(self, rhs: Expr) -> Expr {
        match (self.as_num(), rhs.as_num()) {
            (Some(a), Some(b)) => Expr::Num(a - b),
            (Some(a), _) if a == 0.0 => rhs.neg(),
            (_, Some(b)) if b == 0.0 => self,
            _ => match rhs {
                Expr::Neg(inner) => Expr::Add(Arc::new(self), inner),
                rhs => Expr::Sub(Arc::new(self), Arc::new(rhs)),
            },
        }
    }

    pub fn mul(self, rhs: Expr) -> Expr {
        match (self.as_num(), rhs.as_num()) {
            (Some(a), Some(b)) => Expr::Num(a * b),
            (Some(a), _) if a == 0.0 => Expr::Num(0.0),
            (_, Some(b)) if b == 0.0 => Expr::Num(0.0),
            (Some(a), _) if a == 1.0 => rhs,
            (_, Some(b)) if b == 1.0 => self,
            (Some(a), _) if a == -1.0 => rhs.neg(),
            (_, Some(b)) if b == -1.0 => self.neg(),
            _ => Expr::Mul(Arc::new(self), Arc::new(rhs)),
        }
    }

    pub fn div(self, rhs: Expr) -> Expr {
        match (self.as_num(), rhs.as_num()) {
            (Some(a), Some(b)) if b != 0.0 => Expr::Num(a / b),
            (Some(a), _) if a == 0.0 => Expr::Num(0.0),
            (_, Some(b)) if b == 1.0 => self,
            _ => Expr::Div(Arc::new(self), Arc::new(rhs)),
        }
    }

    pub fn powi(self, n: i32) -> Expr {
        match (n, self.as_num()) {
            (0, _) => Expr::Num(1.0),
            (1, _) => self,
            (_, Some(v)) if v != 0.0 || n > 0 => Expr::Num(v.powi(n)),
            _ => Expr::Pow(Arc::new(self), n),
        }
    }

    pub fn call(f: Func, arg: Expr) -> Expr {
        Expr::Call(f, Arc::new(arg))
    }

    /// Largest variable slot referenced, if any.
    pub fn max_slot(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Var(s) => Some(*s),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.max_slot(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                match (a.max_slot(), b.max_slot()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Var(_) => 1,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => 1 + a.size(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                1 + a.size() + b.size()
            }
        }
    }

    /// Replace variable slots by expressions (`map[slot]`, `None` keeps the variable).
    pub fn substitute(&self, map: &[Option<Expr>]) -> Expr {
        match self {
            Expr::Num(v) => Expr::Num(*v),
            Expr::Var(s) => match map.get(*s) {
                Some(Some(e)) => e.clone(),
                _ => Expr::Var(*s),
            },
            Expr::Neg(a) => a.substitute(map).neg(),
            Expr::Add(a, b) => a.substitute(map).add(b.substitute(map)),
            Expr::Sub(a, b) => a.substitute(map).sub(b.substitute(map)),
            Expr::Mul(a, b) => a.substitute(map).mul(b.substitute(map)),
            Expr::Div(a, b) => a.substitute(map).div(b.substitute(map)),
            Expr::Pow(a, n) => a.substitute(map).powi(*n),
            Expr::Call(f, a) => Expr::call(*f, a.substitute(map)),
        }
    }
}

/// Exact derivative with respect to the variable in evaluation slot `slot`.
pub fn differentiate(e: &Expr, slot: usize) -> Expr {
    match e {
        Expr::Num(_) => num(0.0),
        Expr::Var(s) => num(if *s == slot { 1.0 } else { 0.0 }),
        Expr::Neg(a) => differentiate(a, slot).neg(),
        Expr::Add(a, b) => differentiate(a, slot).add(differentiate(b, slot)),
        Expr::Sub(a, b) => differentiate(a, slot).sub(differentiate(b, slot)),
        Expr::Mul(a, b) => {
            let da = differentiate(a, slot);
            let db = differentiate(b, slot);
            da.mul((**b).clone()).add((**a).clone().mul(db))
        }
        Expr::Div(a, b) => {
            let da = differentiate(a, slot);
            let db = differentiate(b, slot);
            if db.is_zero() {
                da.div((**b).clone())
            } else {
                da.mul((**b).clone())
                    .sub((**a).clone().mul(db))
                    .div((**b).clone().powi(2))
            }
        }
        Expr::Pow(a, n) => {
            let da = differentiate(a, slot);
            num(*n as f64)
                .mul((**a).clone().powi(n - 1))
                .mul(da)
        }
        Expr::Call(f, a) => {
            let da = differentiate(a, slot);
            if da.is_zero() {
                return num(0.0);
            }
            let u = (**a).clone();
            let outer = match f {
                Func::Sin => Expr::call(Func::Cos, u),
                Func::Cos => Expr::call(Func::Sin, u).neg(),
                Func::Tan => num(1.0).div(Expr::call(Func::Cos, u).powi(2)),
                Func::Exp => Expr::call(Func::Exp, u),
                Func::Log => num(1.0).div(u),
                Func::Sqrt => num(1.0).div(num(2.0).mul(Expr::call(Func::Sqrt, u))),
                Func::Sinh => Expr::call(Func::Cosh, u),
                Func::Cosh => Expr::call(Func::Sinh, u),
                Func::Tanh => num(1.0).div(Expr::call(Func::Cosh, u).powi(2)),
            };
            outer.mul(da)
        }
    }
}

/// Derivative with respect to coordinate `x^mu`.
pub fn d_dx(e: &Expr, mu: usize) -> Expr {
    differentiate(e, mu)
}

/// Derivative with respect to covector component `xi_mu`.
pub fn d_dxi(e: &Expr, mu: usize) -> Expr {
    differentiate(e, XI_OFFSET + mu)
}

/// Unchecked IEEE evaluation; NaN and infinities propagate silently.
/// `slots` must cover every variable in `e`.
pub fn eval_raw(e: &Expr, slots: &[f64]) -> f64 {
    match e {
        Expr::Num(v) => *v,
        Expr::Var(s) => slots[*s],
        Expr::Neg(a) => -eval_raw(a, slots),
        Expr::Add(a, b) => eval_raw(a, slots) + eval_raw(b, slots),
        Expr::Sub(a, b) => eval_raw(a, slots) - eval_raw(b, slots),
        Expr::Mul(a, b) => eval_raw(a, slots) * eval_raw(b, slots),
        Expr::Div(a, b) => eval_raw(a, slots) / eval_raw(b, slots),
        Expr::Pow(a, n) => eval_raw(a, slots).powi(*n),
        Expr::Call(f, a) => f.apply(eval_raw(a, slots)),
    }
}

fn eval_checked(e: &Expr, slots: &[f64]) -> Result<f64, EvalError> {
    Ok(match e {
        Expr::Num(v) => *v,
        Expr::Var(s) => *slots
            .get(*s)
            .ok_or(EvalError::Domain("variable outside the coordinate tuple"))?,
        Expr::Neg(a) => -eval_checked(a, slots)?,
        Expr::Add(a, b) => eval_checked(a, slots)? + eval_checked(b, slots)?,
        Expr::Sub(a, b) => eval_checked(a, slots)? - eval_checked(b, slots)?,
        Expr::Mul(a, b) => eval_checked(a, slots)? * eval_checked(b, slots)?,
        Expr::Div(a, b) => {
            let num = eval_checked(a, slots)?;
            let den = eval_checked(b, slots)?;
            if den == 0.0 {
                return Err(EvalError::Domain("division by zero"));
            }
            num / den
        }
        Expr::Pow(a, n) => {
            let base = eval_checked(a, slots)?;
            if base == 0.0 && *n < 0 {
                return Err(EvalError::Domain("division by zero"));
            }
            base.powi(*n)
        }
        Expr::Call(f, a) => {
            let v = eval_checked(a, slots)?;
            match f {
                Func::Log if v < 0.0 => return Err(EvalError::Domain("log of a negative number")),
                Func::Sqrt if v < 0.0 => {
                    return Err(EvalError::Domain("sqrt of a negative number"))
                }
                _ => f.apply(v),
            }
        }
    })
}

/// Evaluate at a coordinate (or phase-space slot) tuple. Domain violations and
/// non-finite results are reported as errors.
pub fn evaluate(e: &Expr, x: &[f64]) -> Result<f64, EvalError> {
    let v = eval_checked(e, x)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite(v))
    }
}

// ---------------------------------------------------------------------------
// Printing

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Num(v) if v.is_sign_negative() => PREC_NEG,
        Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => PREC_ATOM,
        Expr::Neg(_) => PREC_NEG,
        Expr::Add(..) | Expr::Sub(..) => PREC_ADD,
        Expr::Mul(..) | Expr::Div(..) => PREC_MUL,
        Expr::Pow(..) => PREC_POW,
    }
}

fn write_num(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    if !v.is_finite() {
        // Not producible by the parser; printed in a re-parseable form.
        return if v.is_nan() {
            write!(f, "(0/0)")
        } else if v > 0.0 {
            write!(f, "(1/0)")
        } else {
            write!(f, "(-1/0)")
        };
    }
    let a = v.abs();
    if v.is_sign_negative() {
        write!(f, "-")?;
    }
    if a == 0.0 || (1e-4..1e16).contains(&a) {
        write!(f, "{a}")
    } else {
        write!(f, "{a:e}")
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    if prec(e) < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write_num(f, *v),
            Expr::Var(s) if *s < XI_OFFSET => write!(f, "x{s}"),
            Expr::Var(s) => write!(f, "xi{}", s - XI_OFFSET),
            Expr::Neg(a) => {
                write!(f, "-")?;
                write_child(f, a, PREC_NEG)
            }
            Expr::Add(a, b) => {
                write_child(f, a, PREC_ADD)?;
                write!(f, " + ")?;
                write_child(f, b, PREC_ADD + 1)
            }
            Expr::Sub(a, b) => {
                write_child(f, a, PREC_ADD)?;
                write!(f, " - ")?;
                write_child(f, b, PREC_ADD + 1)
            }
            Expr::Mul(a, b) => {
                write_child(f, a, PREC_MUL)?;
                write!(f, "*")?;
                write_child(f, b, PREC_MUL + 1)
            }
            Expr::Div(a, b) => {
                write_child(f, a, PREC_MUL)?;
                write!(f, "/")?;
                write_child(f, b, PREC_MUL + 1)
            }
            Expr::Pow(a, n) => {
                write_child(f, a, PREC_ATOM)?;
                write!(f, "^{n}")
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(u8),
    End,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Returns the token and its starting byte offset.
    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        let Some(&c) = self.src.get(self.pos) else {
            return Ok((Tok::End, start));
        };
        if c.is_ascii_digit() || c == b'.' {
            let mut end = self.pos;
            while end < self.src.len() && (self.src[end].is_ascii_digit() || self.src[end] == b'.')
            {
                end += 1;
            }
            if end < self.src.len() && (self.src[end] == b'e' || self.src[end] == b'E') {
                let mut k = end + 1;
                if k < self.src.len() && (self.src[k] == b'+' || self.src[k] == b'-') {
                    k += 1;
                }
                if k < self.src.len() && self.src[k].is_ascii_digit() {
                    while k < self.src.len() && self.src[k].is_ascii_digit() {
                        k += 1;
                    }
                    end = k;
                }
            }
            let text = std::str::from_utf8(&self.src[start..end]).unwrap_or("");
            return match text.parse::<f64>() {
                Ok(v) => {
                    self.pos = end;
                    Ok((Tok::Num(v), start))
                }
                Err(_) => Err(ParseError::Syntax {
                    offset: start,
                    expected: vec!["number".into()],
                }),
            };
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let mut end = self.pos;
            while end < self.src.len()
                && (self.src[end].is_ascii_alphanumeric() || self.src[end] == b'_')
            {
                end += 1;
            }
            self.pos = end;
            let text = String::from_utf8_lossy(&self.src[start..end]).into_owned();
            return Ok((Tok::Ident(text), start));
        }
        if b"+-*/^()".contains(&c) {
            self.pos += 1;
            return Ok((Tok::Op(c), start));
        }
        Err(ParseError::Syntax {
            offset: start,
            expected: vec![
                "number".into(),
                "identifier".into(),
                "operator".into(),
            ],
        })
    }
}

struct Parser<'a> {
    lex: Lexer<'a>,
    tok: Tok,
    at: usize,
    allow_xi: bool,
    depth: usize,
}

const MAX_DEPTH: usize = 200;

fn syntax(offset: usize, expected: &[&str]) -> ParseError {
    ParseError::Syntax {
        offset,
        expected: expected.iter().map(|s| s.to_string()).collect(),
    }
}

const OPERAND: &[&str] = &["number", "identifier", "(", "-"];

impl<'a> Parser<'a> {
    fn bump(&mut self) -> Result<(), ParseError> {
        let (tok, at) = self.lex.next()?;
        self.tok = tok;
        self.at = at;
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.tok {
                Tok::Op(b'+') => {
                    self.bump()?;
                    lhs = Expr::Add(Arc::new(lhs), Arc::new(self.term()?));
                }
                Tok::Op(b'-') => {
                    self.bump()?;
                    lhs = Expr::Sub(Arc::new(lhs), Arc::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.tok {
                Tok::Op(b'*') => {
                    self.bump()?;
                    lhs = Expr::Mul(Arc::new(lhs), Arc::new(self.unary()?));
                }
                Tok::Op(b'/') => {
                    self.bump()?;
                    lhs = Expr::Div(Arc::new(lhs), Arc::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(syntax(self.at, &["shallower nesting"]));
        }
        let out = if self.tok == Tok::Op(b'-') {
            self.bump()?;
            self.unary().map(|e| Expr::Neg(Arc::new(e)))
        } else {
            self.power()
        };
        self.depth -= 1;
        out
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.tok == Tok::Op(b'^') {
            self.bump()?;
            let n = self.exponent()?;
            return Ok(Expr::Pow(Arc::new(base), n));
        }
        Ok(base)
    }

    /// Integer exponent, possibly signed, with right-associative chaining
    /// (`x^2^3` is `x^8`).
    fn exponent(&mut self) -> Result<i32, ParseError> {
        let start = self.at;
        let negative = self.tok == Tok::Op(b'-');
        if negative {
            self.bump()?;
        }
        let base = match self.tok {
            Tok::Num(v) if v.fract() == 0.0 && v <= 1024.0 => v as i64,
            _ => return Err(syntax(self.at, &["integer exponent"])),
        };
        self.bump()?;
        let mut magnitude = base;
        if self.tok == Tok::Op(b'^') {
            self.bump()?;
            let rhs = self.exponent()?;
            magnitude = u32::try_from(rhs)
                .ok()
                .and_then(|r| base.checked_pow(r))
                .ok_or_else(|| syntax(start, &["integer exponent in -1024..=1024"]))?;
        }
        if magnitude > 1024 {
            return Err(syntax(start, &["integer exponent in -1024..=1024"]));
        }
        Ok(if negative { -magnitude } else { magnitude } as i32)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.tok.clone() {
            Tok::Num(v) => {
                self.bump()?;
                Ok(Expr::Num(v))
            }
            Tok::Op(b'(') => {
                self.bump()?;
                let inner = self.expr()?;
                if self.tok != Tok::Op(b')') {
                    return Err(syntax(self.at, &[")", "operator"]));
                }
                self.bump()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                let at = self.at;
                self.bump()?;
                if let Some(f) = Func::from_name(&name) {
                    if self.tok != Tok::Op(b'(') {
                        return Err(syntax(self.at, &["("]));
                    }
                    self.bump()?;
                    let arg = self.expr()?;
                    if self.tok != Tok::Op(b')') {
                        return Err(syntax(self.at, &[")", "operator"]));
                    }
                    self.bump()?;
                    return Ok(Expr::Call(f, Arc::new(arg)));
                }
                match variable_slot(&name, self.allow_xi) {
                    Some(slot) => Ok(Expr::Var(slot)),
                    None => Err(ParseError::UnknownIdentifier { name, offset: at }),
                }
            }
            _ => Err(syntax(self.at, OPERAND)),
        }
    }
}

fn variable_slot(name: &str, allow_xi: bool) -> Option<usize> {
    if name == "t" {
        return Some(0);
    }
    let (prefix, offset) = if let Some(rest) = name.strip_prefix("xi") {
        if !allow_xi {
            return None;
        }
        (rest, XI_OFFSET)
    } else if let Some(rest) = name.strip_prefix('x') {
        (rest, 0)
    } else {
        return None;
    };
    match prefix {
        "0" | "1" | "2" | "3" => Some(offset + prefix.parse::<usize>().ok()?),
        _ => None,
    }
}

fn parse_with(text: &str, allow_xi: bool) -> Result<Expr, ParseError> {
    if let Some(pos) = text.bytes().position(|b| !b.is_ascii()) {
        return Err(syntax(pos, &["ASCII character"]));
    }
    let mut p = Parser {
        lex: Lexer {
            src: text.as_bytes(),
            pos: 0,
        },
        tok: Tok::End,
        at: 0,
        allow_xi,
        depth: 0,
    };
    p.bump()?;
    if p.tok == Tok::End {
        return Err(syntax(p.at, OPERAND));
    }
    let e = p.expr()?;
    if p.tok != Tok::End {
        return Err(syntax(p.at, &["operator", "end of input"]));
    }
    Ok(e)
}

/// Parse a coordinate expression over `x0..x3` (and `t`).
pub fn parse_expression(text: &str) -> Result<Expr, ParseError> {
    parse_with(text, false)
}

/// Parse an expression that may also use the covector variables `xi0..xi3`.
pub fn parse_phase_expression(text: &str) -> Result<Expr, ParseError> {
    parse_with(text, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        parse_expression(s).unwrap()
    }

    #[test]
    fn printing_uses_minimal_parentheses() {
        assert_eq!(p("x0^2 * sin(x1)").to_string(), "x0^2*sin(x1)");
        assert_eq!(p("(x0 - x1) - (x2 - x3)").to_string(), "x0 - x1 - (x2 - x3)");
        assert_eq!(p("(-x0)^2").to_string(), "(-x0)^2");
        assert_eq!(p("-x0^2").to_string(), "-x0^2");
    }

    #[test]
    fn exponent_chains_are_right_associative() {
        assert_eq!(p("x0^2^3"), Expr::Pow(Arc::new(Expr::Var(0)), 8));
        assert_eq!(p("x0^-2"), Expr::Pow(Arc::new(Expr::Var(0)), -2));
    }

    #[test]
    fn xi_needs_phase_parser() {
        assert!(matches!(
            parse_expression("xi0"),
            Err(ParseError::UnknownIdentifier { .. })
        ));
        assert_eq!(parse_phase_expression("xi2").unwrap(), Expr::Var(6));
    }

    #[test]
    fn folding_rules() {
        let x = var(0);
        assert_eq!(num(0.0).mul(x.clone()), num(0.0));
        assert_eq!(x.clone().add(num(0.0)), x);
        assert_eq!(num(1.0).mul(x.clone()), x);
    }
}
