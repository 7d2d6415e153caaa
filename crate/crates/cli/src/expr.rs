//! Arithmetic expressions for user-defined potentials, profiles and bounds.
//!
//! Grammar: `+ - * / ^`, unary minus, parentheses, numbers, the constant `pi`,
//! functions `sin cos exp log sqrt cosh sinh abs sign`, and the variables
//! `x1..xn`, `t`, `u`, `s` plus `r2 = x1² + … + xn²`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message} at column {column}")]
pub struct ExprError {
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    /// Zero-based coordinate index.
    X(usize),
    T,
    U,
    S,
    R2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Cosh,
    Sinh,
    Abs,
    Sign,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "cosh" => Func::Cosh,
            "sinh" => Func::Sinh,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Cosh => "cosh",
            Func::Sinh => "sinh",
            Func::Abs => "abs",
            Func::Sign => "sign",
        }
    }

    fn apply(self, a: f64) -> f64 {
        match self {
            Func::Sin => a.sin(),
            Func::Cos => a.cos(),
            Func::Exp => a.exp(),
            Func::Log => a.ln(),
            Func::Sqrt => a.sqrt(),
            Func::Cosh => a.cosh(),
            Func::Sinh => a.sinh(),
            Func::Abs => a.abs(),
            Func::Sign => {
                if a > 0.0 {
                    1.0
                } else if a < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
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

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Arc<Expr>),
    Bin(BinOp, Arc<Expr>, Arc<Expr>),
    Call(Func, Arc<Expr>),
}

/// Values bound to the variables during evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Env<'a> {
    pub x: &'a [f64],
    pub t: f64,
    pub u: f64,
    pub s: f64,
}

impl<'a> Env<'a> {
    pub fn x(x: &'a [f64]) -> Self {
        Env { x, ..Default::default() }
    }
}

// ---------------------------------------------------------------- lexing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
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
            let v = text.parse::<f64>().map_err(|_| ExprError {
                column: col,
                message: format!("malformed number '{text}'"),
            })?;
            out.push((Tok::Num(v), col));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else if "+-*/^".contains(c) {
            out.push((Tok::Op(c), col));
            i += 1;
        } else if c == '(' {
            out.push((Tok::LParen, col));
            i += 1;
        } else if c == ')' {
            out.push((Tok::RParen, col));
            i += 1;
        } else {
            return Err(ExprError {
                column: col,
                message: format!("unexpected character '{c}'"),
            });
        }
    }
    out.push((Tok::End, chars.len() + 1));
    Ok(out)
}

// ---------------------------------------------------------------- parsing

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn col(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError {
            column: self.col(),
            message: message.into(),
        })
    }

    // expr := term (('+' | '-') term)*
    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Tok::Op(c @ ('+' | '-')) = *self.peek() {
            self.bump();
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Bin(op, Arc::new(lhs), Arc::new(rhs));
        }
        Ok(lhs)
    }

    // term := unary (('*' | '/') unary)*
    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Tok::Op(c @ ('*' | '/')) = *self.peek() {
            self.bump();
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Bin(op, Arc::new(lhs), Arc::new(rhs));
        }
        Ok(lhs)
    }

    // unary := '-' unary | '+' unary | power ; so -x^2 = -(x^2)
    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Tok::Op('-') => {
                self.bump();
                Ok(Expr::Neg(Arc::new(self.unary()?)))
            }
            Tok::Op('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    // power := atom ('^' unary)?   right-associative
    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if let Tok::Op('^') = self.peek() {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Arc::new(base), Arc::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let col = self.col();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let e = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return self.err("expected ')'");
                }
                self.bump();
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(f) = Func::from_name(&name) {
                    if *self.peek() != Tok::LParen {
                        return self.err(format!("expected '(' after {name}"));
                    }
                    self.bump();
                    let arg = self.expr()?;
                    if *self.peek() != Tok::RParen {
                        return self.err("expected ')'");
                    }
                    self.bump();
                    return Ok(Expr::Call(f, Arc::new(arg)));
                }
                variable(&name).ok_or(ExprError {
                    column: col,
                    message: format!("unknown identifier '{name}'"),
                })
            }
            Tok::End => Err(ExprError {
                column: col,
                message: "unexpected end of expression".into(),
            }),
            other => Err(ExprError {
                column: col,
                message: format!("unexpected {}", describe(&other)),
            }),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("identifier '{s}'"),
        Tok::Op(c) => format!("operator '{c}'"),
        Tok::LParen => "'('".into(),
        Tok::RParen => "')'".into(),
        Tok::End => "end of expression".into(),
    }
}

fn variable(name: &str) -> Option<Expr> {
    match name {
        "t" => Some(Expr::Var(Var::T)),
        "u" => Some(Expr::Var(Var::U)),
        "s" => Some(Expr::Var(Var::S)),
        "r2" => Some(Expr::Var(Var::R2)),
        "pi" => Some(Expr::Num(std::f64::consts::PI)),
        _ => {
            let idx = name.strip_prefix('x')?;
            if idx.starts_with('0') {
                return None;
            }
            let k: usize = idx.parse().ok()?;
            Some(Expr::Var(Var::X(k - 1)))
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        let toks = lex(src)?;
        let mut p = Parser { toks, pos: 0 };
        let e = p.expr()?;
        if *p.peek() != Tok::End {
            let what = describe(p.peek());
            return p.err(format!("unexpected {what}"));
        }
        Ok(e)
    }

    pub fn constant(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn eval(&self, env: &Env) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::X(k)) => env.x.get(*k).copied().unwrap_or(f64::NAN),
            Expr::Var(Var::T) => env.t,
            Expr::Var(Var::U) => env.u,
            Expr::Var(Var::S) => env.s,
            Expr::Var(Var::R2) => env.x.iter().map(|v| v * v).sum(),
            Expr::Neg(a) => -a.eval(env),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(env), b.eval(env));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => pow(a, b),
                }
            }
            Expr::Call(f, a) => f.apply(a.eval(env)),
        }
    }

    /// Variables referenced, in first-appearance order.
    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => {
                if !out.contains(v) {
                    out.push(*v);
                }
            }
            Expr::Neg(a) | Expr::Call(_, a) => a.collect_vars(out),
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn depends_on(&self, v: Var) -> bool {
        let vars = self.vars();
        match v {
            Var::X(_) => vars.contains(&v) || vars.contains(&Var::R2),
            _ => vars.contains(&v),
        }
    }

    /// Largest coordinate index used (one-based), if any.
    pub fn max_coordinate(&self) -> Option<usize> {
        self.vars()
            .into_iter()
            .filter_map(|v| match v {
                Var::X(k) => Some(k + 1),
                _ => None,
            })
            .max()
    }

    /// Symbolic partial derivative. `r2` differentiates to `2 xₖ`.
    pub fn diff(&self, v: Var) -> Expr {
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(w) => {
                if *w == v {
                    Expr::Num(1.0)
                } else if let (Var::R2, Var::X(_)) = (w, v) {
                    mul(Expr::Num(2.0), Expr::Var(v))
                } else {
                    Expr::Num(0.0)
                }
            }
            Expr::Neg(a) => neg(a.diff(v)),
            Expr::Bin(op, a, b) => {
                let (da, db) = (a.diff(v), b.diff(v));
                let (a, b) = ((**a).clone(), (**b).clone());
                match op {
                    BinOp::Add => add(da, db),
                    BinOp::Sub => sub(da, db),
                    BinOp::Mul => add(mul(da, b), mul(a, db)),
                    BinOp::Div => sub(div(da, b.clone()), div(mul(a, db), pow_e(b, Expr::Num(2.0)))),
                    BinOp::Pow => {
                        if let Expr::Num(c) = b {
                            mul(mul(Expr::Num(c), pow_e(a, Expr::Num(c - 1.0))), da)
                        } else {
                            // a^b (b' log a + b a'/a)
                            let inner = add(
                                mul(db, Expr::Call(Func::Log, Arc::new(a.clone()))),
                                div(mul(b.clone(), da), a.clone()),
                            );
                            mul(pow_e(a, b), inner)
                        }
                    }
                }
            }
            Expr::Call(f, a) => {
                let da = a.diff(v);
                let a = (**a).clone();
                let outer = match f {
                    Func::Sin => Expr::Call(Func::Cos, Arc::new(a)),
                    Func::Cos => neg(Expr::Call(Func::Sin, Arc::new(a))),
                    Func::Exp => Expr::Call(Func::Exp, Arc::new(a)),
                    Func::Log => div(Expr::Num(1.0), a),
                    Func::Sqrt => div(Expr::Num(0.5), Expr::Call(Func::Sqrt, Arc::new(a))),
                    Func::Cosh => Expr::Call(Func::Sinh, Arc::new(a)),
                    Func::Sinh => Expr::Call(Func::Cosh, Arc::new(a)),
                    Func::Abs => Expr::Call(Func::Sign, Arc::new(a)),
                    Func::Sign => Expr::Num(0.0),
                };
                mul(outer, da)
            }
        }
    }
}

/// Integer exponents go through `powi` so that `(-2)^3` stays real.
fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

fn num(e: &Expr) -> Option<f64> {
    match e {
        Expr::Num(v) => Some(*v),
        _ => None,
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => (*inner).clone(),
        a => Expr::Neg(Arc::new(a)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (num(&a), num(&b)) {
        (Some(x), Some(y)) => Expr::Num(x + y),
        (Some(z), _) if z == 0.0 => b,
        (_, Some(z)) if z == 0.0 => a,
        _ => Expr::Bin(BinOp::Add, Arc::new(a), Arc::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (num(&a), num(&b)) {
        (Some(x), Some(y)) => Expr::Num(x - y),
        (Some(z), _) if z == 0.0 => neg(b),
        (_, Some(z)) if z == 0.0 => a,
        _ => Expr::Bin(BinOp::Sub, Arc::new(a), Arc::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (num(&a), num(&b)) {
        (Some(x), Some(y)) => Expr::Num(x * y),
        (Some(z), _) | (_, Some(z)) if z == 0.0 => Expr::Num(0.0),
        (Some(o), _) if o == 1.0 => b,
        (_, Some(o)) if o == 1.0 => a,
        _ => Expr::Bin(BinOp::Mul, Arc::new(a), Arc::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (num(&a), num(&b)) {
        (Some(z), _) if z == 0.0 => Expr::Num(0.0),
        (_, Some(o)) if o == 1.0 => a,
        _ => Expr::Bin(BinOp::Div, Arc::new(a), Arc::new(b)),
    }
}

fn pow_e(a: Expr, b: Expr) -> Expr {
    match (num(&a), num(&b)) {
        (_, Some(z)) if z == 0.0 => Expr::Num(1.0),
        (_, Some(o)) if o == 1.0 => a,
        (Some(x), Some(y)) => Expr::Num(pow(x, y)),
        _ => Expr::Bin(BinOp::Pow, Arc::new(a), Arc::new(b)),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if *v < 0.0 => write!(f, "({v})"),
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(Var::X(k)) => write!(f, "x{}", k + 1),
            Expr::Var(Var::T) => f.write_str("t"),
            Expr::Var(Var::U) => f.write_str("u"),
            Expr::Var(Var::S) => f.write_str("s"),
            Expr::Var(Var::R2) => f.write_str("r2"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Bin(op, a, b) => {
                let c = match op {
                    BinOp::Add => '+',
                    BinOp::Sub => '-',
                    BinOp::Mul => '*',
                    BinOp::Div => '/',
                    BinOp::Pow => '^',
                };
                write!(f, "({a} {c} {b})")
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: &[f64], t: f64) -> f64 {
        Expr::parse(src).unwrap().eval(&Env { x, t, u: 0.0, s: 0.0 })
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", &[], 0.0), 7.0);
        assert_eq!(ev("2 ^ 3 ^ 2", &[], 0.0), 512.0);
        assert_eq!(ev("-2 ^ 2", &[], 0.0), -4.0);
        assert_eq!(ev("(-2) ^ 3", &[], 0.0), -8.0);
        assert_eq!(ev("8 / 4 / 2", &[], 0.0), 1.0);
        assert_eq!(ev("2 - 3 - 4", &[], 0.0), -5.0);
        assert_eq!(ev("2 * -3", &[], 0.0), -6.0);
        assert_eq!(ev("1.5e2 + 2E-1", &[], 0.0), 150.2);
    }

    #[test]
    fn variables_and_functions() {
        assert_eq!(ev("x1 * x2 + t", &[2.0, 3.0], 0.5), 6.5);
        assert_eq!(ev("r2", &[3.0, 4.0], 0.0), 25.0);
        assert!((ev("exp(t) * (1 + r2)", &[1.0], 1.0) - 2.0 * 1f64.exp()).abs() < 1e-15);
        assert!((ev("sqrt(abs(-4)) + cosh(0) + sinh(0) + log(1)", &[], 0.0) - 3.0).abs() < 1e-15);
        assert!((ev("sin(pi / 2) + cos(pi)", &[], 0.0)).abs() < 1e-15);
    }

    #[test]
    fn errors_carry_columns() {
        let e = Expr::parse("1 + * 2").unwrap_err();
        assert_eq!(e.column, 5);
        let e = Expr::parse("x1 + foo").unwrap_err();
        assert_eq!(e.column, 6);
        assert!(e.message.contains("foo"));
        let e = Expr::parse("sin(x1").unwrap_err();
        assert!(e.message.contains("')'"));
        assert!(Expr::parse("x0").is_err());
        assert!(Expr::parse("1 2").is_err());
        assert!(Expr::parse("").is_err());
        assert_eq!(Expr::parse("2 $ 3").unwrap_err().column, 3);
    }

    #[test]
    fn derivatives_of_catalog_forms() {
        let e = Expr::parse("exp(t) * (1 + r2)").unwrap();
        let x = [0.3, -1.2];
        let env = Env { x: &x, t: 0.7, u: 0.0, s: 0.0 };
        let dx1 = e.diff(Var::X(0)).eval(&env);
        assert!((dx1 - 2.0 * 0.7f64.exp() * 0.3).abs() < 1e-14);
        let dt = e.diff(Var::T).eval(&env);
        assert!((dt - e.eval(&env)).abs() < 1e-14);
        assert_eq!(Expr::parse("x1^4").unwrap().diff(Var::X(0)).eval(&Env::x(&[2.0])), 32.0);
        assert_eq!(Expr::parse("5").unwrap().diff(Var::T), Expr::Num(0.0));
    }

    #[test]
    fn variable_inventory() {
        let e = Expr::parse("x3 * t + sin(x1)").unwrap();
        assert_eq!(e.vars(), vec![Var::X(2), Var::T, Var::X(0)]);
        assert_eq!(e.max_coordinate(), Some(3));
        assert!(Expr::parse("r2").unwrap().depends_on(Var::X(4)));
        assert!(!e.depends_on(Var::U));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn leaf() -> impl Strategy<Value = String> {
            prop_oneof![
                Just("x1".to_string()),
                Just("x2".to_string()),
                Just("t".to_string()),
                Just("r2".to_string()),
                (1u32..5).prop_map(|k| k.to_string()),
            ]
        }

        fn tree() -> impl Strategy<Value = String> {
            leaf().prop_recursive(4, 24, 2, |inner| {
                prop_oneof![
                    (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
                    (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
                    (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} * {b})")),
                    (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} / (2 + {b}^2))")),
                    inner.clone().prop_map(|a| format!("sin({a})")),
                    inner.clone().prop_map(|a| format!("exp(cos({a}))")),
                    inner.clone().prop_map(|a| format!("sqrt(1 + {a}^2)")),
                    inner.clone().prop_map(|a| format!("({a})^3")),
                ]
            })
        }

        proptest! {
            #[test]
            fn symbolic_derivative_matches_central_difference(
                src in tree(),
                x1 in -1.0f64..1.0,
                x2 in -1.0f64..1.0,
                t in -1.0f64..1.0,
            ) {
                let e = Expr::parse(&src).unwrap();
                for (var, which) in [(Var::X(0), 0), (Var::X(1), 1), (Var::T, 2)] {
                    let at = |d: f64| {
                        let mut p = [x1, x2, t];
                        p[which] += d;
                        e.eval(&Env { x: &p[..2], t: p[2], u: 0.0, s: 0.0 })
                    };
                    let h = 1e-5;
                    let fd = (at(h) - at(-h)) / (2.0 * h);
                    let p = [x1, x2];
                    let exact = e.diff(var).eval(&Env { x: &p, t, u: 0.0, s: 0.0 });
                    prop_assume!(fd.is_finite() && exact.is_finite());
                    let scale = 1.0f64.max(exact.abs()).max(at(0.0).abs());
                    prop_assert!((fd - exact).abs() <= 1e-5 * scale, "{src}: {fd} vs {exact}");
                }
            }

            #[test]
            fn display_reparses_to_the_same_value(src in tree(), x1 in -1.0f64..1.0, t in -1.0f64..1.0) {
                let e = Expr::parse(&src).unwrap();
                let again = Expr::parse(&e.to_string()).unwrap();
                let env = Env { x: &[x1, 0.5], t, u: 0.0, s: 0.0 };
                let (a, b) = (e.eval(&env), again.eval(&env));
                prop_assert!(a == b || (a.is_nan() && b.is_nan()));
            }
        }
    }
}
