//! Utility-expression DSL: parsing, evaluation, symbolic partial derivatives
//! and canonical printing.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := ('-')? base ('^' factor)?
//! base   := NUMBER | VAR | '(' expr ')' | FUNC '(' expr ')'
//! VAR    := 'q' [1-4]
//! FUNC   := 'ln' | 'exp' | 'sqrt'
//! ```

use std::fmt;

use crate::error::{Error, Result};

/// Largest number of goods a utility may mention.
pub const MAX_GOODS: usize = 4;

/// Interior guard applied to quantities before differentiation.
pub const EPSILON_Q: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Ln,
    Exp,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Ln => "ln",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
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

/// Expression tree node. Variables are zero-based good indices.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Func(Func, Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
    Expr::Bin(op, Box::new(a), Box::new(b))
}

impl Expr {
    fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::Func(_, a) => a.max_var(),
            Expr::Bin(_, a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    fn is_const(&self) -> bool {
        self.max_var().is_none()
    }

    /// Evaluates the tree at `q`, failing when an operand leaves the domain
    /// of an operation.
    pub fn eval(&self, q: &[f64]) -> Result<f64> {
        let v = match self {
            Expr::Num(x) => *x,
            Expr::Var(i) => q[*i],
            Expr::Neg(a) => -a.eval(q)?,
            Expr::Func(f, a) => {
                let x = a.eval(q)?;
                match f {
                    Func::Ln if x <= 0.0 => {
                        return Err(Error::domain(format!("ln of nonpositive value {x}")))
                    }
                    Func::Ln => x.ln(),
                    Func::Exp => x.exp(),
                    Func::Sqrt if x < 0.0 => {
                        return Err(Error::domain(format!("sqrt of negative value {x}")))
                    }
                    Func::Sqrt => x.sqrt(),
                }
            }
            Expr::Bin(op, a, b) => {
                let x = a.eval(q)?;
                let y = b.eval(q)?;
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return Err(Error::domain("division by zero"));
                        }
                        x / y
                    }
                    BinOp::Pow => pow_checked(x, y)?,
                }
            }
        };
        if v.is_nan() {
            return Err(Error::domain("expression evaluated to NaN"));
        }
        Ok(v)
    }

    /// Symbolic partial derivative with respect to variable `i`, lightly
    /// simplified (constant folding of 0 and 1 only).
    pub fn derivative(&self, i: usize) -> Expr {
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(j) => Expr::Num(if *j == i { 1.0 } else { 0.0 }),
            Expr::Neg(a) => s_neg(a.derivative(i)),
            Expr::Func(f, a) => {
                let da = a.derivative(i);
                let outer = match f {
                    Func::Ln => s_div(Expr::Num(1.0), (**a).clone()),
                    Func::Exp => self.clone(),
                    Func::Sqrt => s_div(Expr::Num(0.5), self.clone()),
                };
                s_mul(outer, da)
            }
            Expr::Bin(op, a, b) => {
                let da = a.derivative(i);
                let db = b.derivative(i);
                match op {
                    BinOp::Add => s_add(da, db),
                    BinOp::Sub => s_sub(da, db),
                    BinOp::Mul => s_add(s_mul(da, (**b).clone()), s_mul((**a).clone(), db)),
                    BinOp::Div => s_div(
                        s_sub(s_mul(da, (**b).clone()), s_mul((**a).clone(), db)),
                        s_pow((**b).clone(), Expr::Num(2.0)),
                    ),
                    BinOp::Pow if b.is_const() => {
                        // c * a^(c-1) * a'
                        let c = (**b).clone();
                        let c_minus_1 = match &c {
                            Expr::Num(x) => Expr::Num(x - 1.0),
                            other => s_sub(other.clone(), Expr::Num(1.0)),
                        };
                        s_mul(s_mul(c, s_pow((**a).clone(), c_minus_1)), da)
                    }
                    BinOp::Pow => {
                        // a^b * (b' ln a + b a'/a)
                        let ln_a = Expr::Func(Func::Ln, a.clone());
                        let inner = s_add(
                            s_mul(db, ln_a),
                            s_div(s_mul((**b).clone(), da), (**a).clone()),
                        );
                        s_mul(self.clone(), inner)
                    }
                }
            }
        }
    }
}

fn pow_checked(x: f64, y: f64) -> Result<f64> {
    if x == 0.0 && y < 0.0 {
        return Err(Error::domain("zero raised to a negative power"));
    }
    if x < 0.0 && y.fract() != 0.0 {
        return Err(Error::domain(format!(
            "negative base {x} raised to non-integer power {y}"
        )));
    }
    Ok(x.powf(y))
}

fn num(e: &Expr) -> Option<f64> {
    match e {
        Expr::Num(x) => Some(*x),
        _ => None,
    }
}

fn s_add(a: Expr, b: Expr) -> Expr {
    match (num(&a), num(&b)) {
        (Some(x), Some(y)) => Expr::Num(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => bin(BinOp::Add, a, b),
    }
}

fn s_sub(a: Expr, b: Expr) -> Expr {
    match (num(&a), num(&b)) {
        (Some(x), Some(y)) => Expr::Num(x - y),
        (_, Some(y)) if y == 0.0 => a,
        (Some(x), _) if x == 0.0 => s_neg(b),
        _ => bin(BinOp::Sub, a, b),
    }
}

fn s_neg(a: Expr) -> Expr {
    match a {
        Expr::Num(x) => Expr::Num(-x),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn s_mul(a: Expr, b: Expr) -> Expr {
    match (num(&a), num(&b)) {
        (Some(x), Some(y)) => Expr::Num(x * y),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::Num(0.0),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        _ => bin(BinOp::Mul, a, b),
    }
}

fn s_div(a: Expr, b: Expr) -> Expr {
    match (num(&a), num(&b)) {
        (Some(x), _) if x == 0.0 => Expr::Num(0.0),
        (_, Some(y)) if y == 1.0 => a,
        _ => bin(BinOp::Div, a, b),
    }
}

fn s_pow(a: Expr, b: Expr) -> Expr {
    match num(&b) {
        Some(y) if y == 0.0 => Expr::Num(1.0),
        Some(y) if y == 1.0 => a,
        _ => bin(BinOp::Pow, a, b),
    }
}

/// A parsed direct utility function `U(q)` over `n_goods` goods.
///
/// Immutable after construction; partial derivatives are built once.
#[derive(Debug, Clone)]
pub struct UtilityExpr {
    root: Expr,
    n_goods: usize,
    partials: Vec<Expr>,
}

impl PartialEq for UtilityExpr {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root && self.n_goods == other.n_goods
    }
}

impl UtilityExpr {
    pub fn from_expr(root: Expr) -> Result<Self> {
        let n_goods = root.max_var().map_or(0, |i| i + 1);
        if n_goods > MAX_GOODS {
            return Err(Error::domain(format!(
                "at most {MAX_GOODS} goods are supported, found q{n_goods}"
            )));
        }
        if n_goods < 2 {
            return Err(Error::domain(
                "a utility function needs at least two goods (q1 and q2..q4)",
            ));
        }
        let partials = (0..n_goods).map(|i| root.derivative(i)).collect();
        Ok(Self {
            root,
            n_goods,
            partials,
        })
    }

    pub fn root(&self) -> &Expr {
        &self.root
    }

    pub fn n_goods(&self) -> usize {
        self.n_goods
    }

    /// Symbolic partial `dU/dq_i` (zero-based).
    pub fn partial(&self, i: usize) -> &Expr {
        &self.partials[i]
    }

    fn check_dim(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.n_goods {
            return Err(Error::Invalid(format!(
                "bundle has {} components, utility has {} goods",
                q.len(),
                self.n_goods
            )));
        }
        Ok(())
    }

    pub fn eval(&self, q: &[f64]) -> Result<f64> {
        self.check_dim(q)?;
        self.root.eval(q)
    }

    /// Symbolic gradient at `q`, with components clamped up to
    /// [`EPSILON_Q`] first.
    pub fn gradient(&self, q: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(q)?;
        let q: Vec<f64> = q.iter().map(|&x| x.max(EPSILON_Q)).collect();
        self.partials.iter().map(|d| d.eval(&q)).collect()
    }

    /// Central-difference gradient, used to cross-check [`Self::gradient`].
    pub fn gradient_fd(&self, q: &[f64], rel_step: f64) -> Result<Vec<f64>> {
        self.check_dim(q)?;
        let q: Vec<f64> = q.iter().map(|&x| x.max(EPSILON_Q)).collect();
        (0..self.n_goods)
            .map(|i| {
                let h = rel_step * q[i].abs().max(1.0);
                crate::numkit::central_diff(|x| self.root.eval(x), &q, i, h)
            })
            .collect()
    }
}

impl fmt::Display for UtilityExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_expr(self))
    }
}

/// A quantity bundle: nonnegative, finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle(Vec<f64>);

impl Bundle {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if let Some(x) = q.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::domain(format!(
                "bundle components must be finite and nonnegative, got {x}"
            )));
        }
        Ok(Self(q))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

pub fn eval_utility(u: &UtilityExpr, q: &Bundle) -> Result<f64> {
    u.eval(q.as_slice())
}

pub fn gradient(u: &UtilityExpr, q: &Bundle) -> Result<Vec<f64>> {
    u.gradient(q.as_slice())
}

// ---------------------------------------------------------------- parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Var(usize),
    Func(Func),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |position: usize, message: String| Error::Parse { position, message };
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => out.push((Tok::Plus, start)),
            b'-' => out.push((Tok::Minus, start)),
            b'*' => {
                if bytes.get(i + 1) == Some(&b'*') {
                    return Err(err(start, "'**' is not an operator; use '^'".into()));
                }
                out.push((Tok::Star, start))
            }
            b'/' => out.push((Tok::Slash, start)),
            b'^' => out.push((Tok::Caret, start)),
            b'(' => out.push((Tok::LParen, start)),
            b')' => out.push((Tok::RParen, start)),
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                let lit = &text[start..i];
                let v: f64 = lit
                    .parse()
                    .map_err(|_| err(start, format!("malformed number '{lit}'")))?;
                out.push((Tok::Num(v), start));
                continue;
            }
            b'q' => {
                i += 1;
                let ds = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if ds == i {
                    return Err(err(start, "expected a good index after 'q'".into()));
                }
                let idx: usize = text[ds..i]
                    .parse()
                    .map_err(|_| err(start, "good index out of range".into()))?;
                if idx == 0 {
                    return Err(err(start, "good indices start at q1".into()));
                }
                if idx > MAX_GOODS {
                    return Err(Error::domain(format!(
                        "q{idx} exceeds the maximum of {MAX_GOODS} goods"
                    )));
                }
                out.push((Tok::Var(idx - 1), start));
                continue;
            }
            b'a'..=b'z' => {
                while i < bytes.len() && bytes[i].is_ascii_alphabetic() {
                    i += 1;
                }
                let f = match &text[start..i] {
                    "ln" => Func::Ln,
                    "exp" => Func::Exp,
                    "sqrt" => Func::Sqrt,
                    other => return Err(err(start, format!("unknown identifier '{other}'"))),
                };
                out.push((Tok::Func(f), start));
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(err(start, format!("unexpected character '{ch}'")));
            }
        }
        i += 1;
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if t != Tok::End {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            position: self.offset(),
            message: message.into(),
        })
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = bin(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = bin(op, lhs, rhs);
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        let negate = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        let base = self.base()?;
        let body = if *self.peek() == Tok::Caret {
            self.bump();
            let exp = self.factor()?;
            bin(BinOp::Pow, base, exp)
        } else {
            base
        };
        Ok(if negate {
            Expr::Neg(Box::new(body))
        } else {
            body
        })
    }

    fn base(&mut self) -> Result<Expr> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::Var(i) => {
                self.bump();
                Ok(Expr::Var(i))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Tok::Func(f) => {
                self.bump();
                if *self.peek() != Tok::LParen {
                    return self.fail(format!("expected '(' after {}", f.name()));
                }
                self.bump();
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(Expr::Func(f, Box::new(e)))
            }
            Tok::End => self.fail("unexpected end of input"),
            t => self.fail(format!("unexpected token {t:?}")),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        if *self.peek() != Tok::RParen {
            return self.fail("expected ')'");
        }
        self.bump();
        Ok(())
    }
}

/// Parses utility text into a [`UtilityExpr`].
pub fn parse_utility(text: &str) -> Result<UtilityExpr> {
    if text.trim().is_empty() {
        return Err(Error::Parse {
            position: 0,
            message: "empty utility expression".into(),
        });
    }
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let root = p.expr()?;
    if *p.peek() != Tok::End {
        return p.fail("unexpected trailing input");
    }
    UtilityExpr::from_expr(root)
}

// --------------------------------------------------------------- printing

// Precedence levels: 1 = sum, 2 = product, 3 = factor (neg/pow), 4 = base.
fn level(e: &Expr) -> u8 {
    match e {
        Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        Expr::Bin(BinOp::Pow, ..) | Expr::Neg(_) => 3,
        Expr::Num(_) | Expr::Var(_) | Expr::Func(..) => 4,
    }
}

fn write_at(out: &mut String, e: &Expr, min_level: u8) {
    if level(e) < min_level {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    } else {
        write_expr(out, e);
    }
}

fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Num(x) => out.push_str(&format!("{x}")),
        Expr::Var(i) => out.push_str(&format!("q{}", i + 1)),
        Expr::Func(f, a) => {
            out.push_str(f.name());
            out.push('(');
            write_expr(out, a);
            out.push(')');
        }
        Expr::Neg(a) => {
            out.push('-');
            // operand must be `base ('^' factor)?`
            match **a {
                Expr::Bin(BinOp::Pow, ..) => write_expr(out, a),
                _ => write_at(out, a, 4),
            }
        }
        Expr::Bin(op, a, b) => {
            let (sym, left_min, right_min) = match op {
                BinOp::Add => ("+", 1, 2),
                BinOp::Sub => ("-", 1, 2),
                BinOp::Mul => ("*", 2, 3),
                BinOp::Div => ("/", 2, 3),
                BinOp::Pow => ("^", 4, 3),
            };
            write_at(out, a, left_min);
            out.push_str(sym);
            write_at(out, b, right_min);
        }
    }
}

/// Canonical text for `u`; parsing the result yields a structurally equal
/// tree.
pub fn format_expr(u: &UtilityExpr) -> String {
    let mut s = String::new();
    write_expr(&mut s, &u.root);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(s: &str) -> UtilityExpr {
        parse_utility(s).unwrap()
    }

    #[test]
    fn parses_cobb_douglas_tree() {
        let u = p("q1^0.5 * q2^0.5");
        let expected = bin(
            BinOp::Mul,
            bin(BinOp::Pow, Expr::Var(0), Expr::Num(0.5)),
            bin(BinOp::Pow, Expr::Var(1), Expr::Num(0.5)),
        );
        assert_eq!(u.root(), &expected);
        assert_eq!(u.n_goods(), 2);
    }

    #[test]
    fn parses_quasilinear_tree() {
        let u = p("q1 + ln(q2)");
        let expected = bin(
            BinOp::Add,
            Expr::Var(0),
            Expr::Func(Func::Ln, Box::new(Expr::Var(1))),
        );
        assert_eq!(u.root(), &expected);
    }

    #[test]
    fn double_star_is_rejected_at_offset_3() {
        match parse_utility("q1 ** q2") {
            Err(Error::Parse { position, .. }) => assert_eq!(position, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn good_count_limits() {
        assert!(matches!(parse_utility("q1*q5"), Err(Error::Domain(_))));
        assert!(matches!(parse_utility("q1^2"), Err(Error::Domain(_))));
        assert!(matches!(parse_utility("2+3"), Err(Error::Domain(_))));
        assert_eq!(p("q1+q3").n_goods(), 3);
        assert_eq!(p("q1*q2*q3*q4").n_goods(), 4);
    }

    #[test]
    fn malformed_inputs() {
        for s in ["", "   ", "q1 +", "(q1*q2", "q1 q2", "foo(q1)", "ln q1", "q1*q2)", "q"] {
            assert!(parse_utility(s).is_err(), "{s:?} should fail");
        }
    }

    #[test]
    fn unary_minus_binds_looser_than_power() {
        let u = p("q1 - -q2^2");
        assert_eq!(u.eval(&[1.0, 3.0]).unwrap(), 10.0);
        let v = p("q1*q2^-1");
        assert_eq!(v.eval(&[2.0, 4.0]).unwrap(), 0.5);
    }

    #[test]
    fn power_is_right_associative() {
        let u = p("q1^2^3 + 0*q2");
        assert_eq!(u.eval(&[2.0, 0.0]).unwrap(), 256.0);
    }

    #[test]
    fn eval_examples() {
        assert_eq!(p("q1*q2").eval(&[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(p("q1^0.5*q2^0.5").eval(&[4.0, 1.0]).unwrap(), 2.0);
        assert!(matches!(
            p("q1+ln(q2)").eval(&[1.0, 0.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(p("q1/q2").eval(&[1.0, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(
            p("q1^-1+q2").eval(&[0.0, 1.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            p("sqrt(q1-q2)").eval(&[0.0, 1.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn eval_rejects_wrong_dimension() {
        assert!(p("q1*q2").eval(&[1.0]).is_err());
    }

    #[test]
    fn gradient_examples() {
        assert_eq!(p("q1*q2").gradient(&[2.0, 3.0]).unwrap(), vec![3.0, 2.0]);
        assert_eq!(p("q1+ln(q2)").gradient(&[5.0, 2.0]).unwrap(), vec![1.0, 0.5]);
        let u = p("q1^0.3*q2^0.7");
        let g = u.gradient(&[1.0, 1.0]).unwrap();
        let fd = u.gradient_fd(&[1.0, 1.0], 1e-6).unwrap();
        assert_relative_eq!(g[0], 0.3, epsilon = 1e-14);
        assert_relative_eq!(g[1], 0.7, epsilon = 1e-14);
        assert_relative_eq!(fd[0], 0.3, max_relative = 1e-8);
        assert_relative_eq!(fd[1], 0.7, max_relative = 1e-8);
    }

    #[test]
    fn gradient_clamps_boundary_points() {
        let g = p("q1^0.5*q2^0.5").gradient(&[0.0, 1.0]).unwrap();
        assert!(g.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn variable_exponent_derivative() {
        // d/dq1 q1^q2 = q2 q1^(q2-1); d/dq2 = q1^q2 ln q1
        let u = p("q1^q2");
        let g = u.gradient(&[2.0, 3.0]).unwrap();
        assert_relative_eq!(g[0], 12.0, max_relative = 1e-14);
        assert_relative_eq!(g[1], 8.0 * 2f64.ln(), max_relative = 1e-14);
    }

    #[test]
    fn format_examples() {
        assert_eq!(format_expr(&p("q1*q2")), "q1*q2");
        assert_eq!(format_expr(&p("(q1)*q2")), "q1*q2");
        assert_eq!(format_expr(&p("q1^0.5*q2^0.5")), "q1^0.5*q2^0.5");
        assert_eq!(format_expr(&p("(q1+q2)*(q1-q2)")), "(q1+q2)*(q1-q2)");
        assert_eq!(format_expr(&p("q1-(q2-q1)")), "q1-(q2-q1)");
        assert_eq!(format_expr(&p("(q1^2)^3+q2")), "(q1^2)^3+q2");
        assert_eq!(format_expr(&p("-(q1+q2)")), "-(q1+q2)");
        assert_eq!(format_expr(&p("q1/(q2*q1)")), "q1/(q2*q1)");
    }

    #[test]
    fn bundle_rejects_negative_and_nan() {
        assert!(Bundle::new(vec![1.0, -1.0]).is_err());
        assert!(Bundle::new(vec![f64::NAN, 1.0]).is_err());
        assert!(Bundle::new(vec![0.0, 1.0]).is_ok());
    }
}
