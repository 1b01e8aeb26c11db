//! A tiny arithmetic language over the coordinates `x`, `y`, `z`.
//!
//! Expressions define custom vector fields, Clebsch potentials, right-hand
//! sides and manufactured solutions in run configurations. Parsing is a
//! hand-written recursive descent so syntax errors carry exact byte offsets.
//!
//! Precedence, tightest first: `^` (right-associative), unary minus,
//! `* /`, `+ -`. So `-x^2` is `-(x^2)` and `2^3^2` is `2^9`.

use std::fmt;

use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    pub const ALL: [Func; 7] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// Abstract syntax tree. Literals are always finite and non-negative; a
/// leading minus is a [`Expr::Neg`] node.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Pi,
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("domain error in `{subexpr}`: {message}")]
    Domain { subexpr: String, message: String },
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn neg(e: Expr) -> Expr {
        Expr::Neg(Box::new(e))
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn call(f: Func, arg: Expr) -> Expr {
        Expr::Call(f, Box::new(arg))
    }

    /// Evaluates at `point = (x, y, z)`.
    pub fn eval(&self, point: &Vector3<f64>) -> Result<f64, ExprError> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::X) => point.x,
            Expr::Var(Var::Y) => point.y,
            Expr::Var(Var::Z) => point.z,
            Expr::Pi => std::f64::consts::PI,
            Expr::Neg(e) => -e.eval(point)?,
            Expr::Binary(op, a, b) => {
                let a = a.eval(point)?;
                let b = b.eval(point)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(self.domain("division by zero"));
                        }
                        a / b
                    }
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(f, arg) => {
                let a = arg.eval(point)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tan => a.tan(),
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a <= 0.0 {
                            return Err(self.domain("logarithm of a non-positive value"));
                        }
                        a.ln()
                    }
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(self.domain("square root of a negative value"));
                        }
                        a.sqrt()
                    }
                    Func::Abs => a.abs(),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.domain("non-finite result"))
        }
    }

    fn domain(&self, message: &str) -> ExprError {
        ExprError::Domain {
            subexpr: self.to_string(),
            message: message.to_string(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Binary(BinOp::Pow, ..) => 4,
            Expr::Num(_) | Expr::Var(_) | Expr::Pi | Expr::Call(..) => 5,
        }
    }

    fn fmt_at(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        let parens = self.precedence() < min_prec;
        if parens {
            f.write_str("(")?;
        }
        match self {
            Expr::Num(v) => write!(f, "{v:?}")?,
            Expr::Var(Var::X) => f.write_str("x")?,
            Expr::Var(Var::Y) => f.write_str("y")?,
            Expr::Var(Var::Z) => f.write_str("z")?,
            Expr::Pi => f.write_str("pi")?,
            Expr::Neg(e) => {
                f.write_str("-")?;
                e.fmt_at(f, 3)?;
            }
            Expr::Binary(BinOp::Pow, a, b) => {
                a.fmt_at(f, 5)?;
                f.write_str("^")?;
                b.fmt_at(f, 3)?;
            }
            Expr::Binary(op, a, b) => {
                let p = self.precedence();
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => unreachable!(),
                };
                a.fmt_at(f, p)?;
                write!(f, " {sym} ")?;
                b.fmt_at(f, p + 1)?;
            }
            Expr::Call(func, arg) => {
                write!(f, "{}(", func.name())?;
                arg.fmt_at(f, 0)?;
                f.write_str(")")?;
            }
        }
        if parens {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_at(f, 0)
    }
}

impl std::str::FromStr for Expr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn syntax(offset: usize, message: impl Into<String>) -> ExprError {
    ExprError::Syntax {
        offset,
        message: message.into(),
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let v: f64 = text
                    .parse()
                    .map_err(|_| syntax(start, format!("malformed number `{text}`")))?;
                out.push((start, Tok::Num(v)));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(src[start..i].to_string())));
                continue;
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(syntax(start, format!("unexpected character `{ch}`")));
            }
        };
        out.push((start, tok));
        i += 1;
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].1.clone();
        if t != Tok::End {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self) -> ExprError {
        syntax(
            self.offset(),
            format!("unexpected {}", self.peek().describe()),
        )
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Expr::neg(self.unary()?));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::binary(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let start = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return Err(syntax(
                        self.offset(),
                        format!(
                            "unbalanced parenthesis opened at byte {start}: expected `)`, found {}",
                            self.peek().describe()
                        ),
                    ));
                }
                self.bump();
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.bump();
                match name.as_str() {
                    "x" => Ok(Expr::Var(Var::X)),
                    "y" => Ok(Expr::Var(Var::Y)),
                    "z" => Ok(Expr::Var(Var::Z)),
                    "pi" => Ok(Expr::Pi),
                    other => {
                        let func = Func::from_name(other).ok_or_else(|| {
                            syntax(start, format!("unknown identifier `{other}`"))
                        })?;
                        if *self.peek() != Tok::LParen {
                            return Err(syntax(
                                self.offset(),
                                format!("expected `(` after function `{other}`"),
                            ));
                        }
                        let open = self.offset();
                        self.bump();
                        let arg = self.expr()?;
                        if *self.peek() != Tok::RParen {
                            return Err(syntax(
                                self.offset(),
                                format!("unbalanced parenthesis opened at byte {open}"),
                            ));
                        }
                        self.bump();
                        Ok(Expr::call(func, arg))
                    }
                }
            }
            Tok::RParen => Err(syntax(start, "unbalanced parenthesis: unexpected `)`")),
            _ => Err(self.unexpected()),
        }
    }
}

/// Parses `source` into an [`Expr`]. Whitespace is insignificant.
pub fn parse(source: &str) -> Result<Expr, ExprError> {
    let mut p = Parser {
        toks: lex(source)?,
        pos: 0,
    };
    let e = p.expr()?;
    match p.peek() {
        Tok::End => Ok(e),
        Tok::RParen => Err(syntax(p.offset(), "unbalanced parenthesis: unexpected `)`")),
        _ => Err(p.unexpected()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn at(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    fn eval(s: &str, p: Vector3<f64>) -> f64 {
        parse(s).unwrap().eval(&p).unwrap()
    }

    #[test]
    fn precedence() {
        let e = parse("x+y*z").unwrap();
        let manual = Expr::binary(
            BinOp::Add,
            Expr::var(Var::X),
            Expr::binary(BinOp::Mul, Expr::var(Var::Y), Expr::var(Var::Z)),
        );
        assert_eq!(e, manual);
        assert_eq!(eval("-2^2", at(0., 0., 0.)), -4.0);
        assert_eq!(eval("2^-1", at(0., 0., 0.)), 0.5);
    }

    #[test]
    fn power_is_right_associative() {
        for p in [at(0., 0., 0.), at(1.5, -2.0, 7.0)] {
            assert_eq!(eval("2^3^2", p), 512.0);
        }
    }

    #[test]
    fn simple_values() {
        assert_eq!(eval("cos(0)", at(3., 4., 5.)), 1.0);
        assert_eq!(eval("x*y", at(2., 3., 7.)), 6.0);
        assert_eq!(eval("sin(pi/2)", at(0., 0., 0.)), 1.0);
        assert_eq!(eval(" 1.5e1 + .5 ", at(0., 0., 0.)), 15.5);
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        match parse("x + * y") {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("expected syntax error, got {other:?}"),
        }
        assert!(matches!(
            parse("(x + y"),
            Err(ExprError::Syntax { offset: 6, .. })
        ));
        assert!(matches!(
            parse("x + y)"),
            Err(ExprError::Syntax { offset: 5, .. })
        ));
        assert!(matches!(
            parse("2 * foo"),
            Err(ExprError::Syntax { offset: 4, .. })
        ));
        assert!(matches!(parse("sin x"), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse(""), Err(ExprError::Syntax { offset: 0, .. })));
        assert!(matches!(parse("x $ y"), Err(ExprError::Syntax { offset: 2, .. })));
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        let err = parse("1 + log(x - 1)").unwrap().eval(&at(0.5, 0., 0.)).unwrap_err();
        match err {
            ExprError::Domain { subexpr, .. } => assert_eq!(subexpr, "log(x - 1.0)"),
            other => panic!("{other:?}"),
        }
        assert!(parse("sqrt(y)").unwrap().eval(&at(0., -1., 0.)).is_err());
        assert!(parse("1/(x-x)").unwrap().eval(&at(2., 0., 0.)).is_err());
        assert!(parse("sqrt(0)").unwrap().eval(&at(0., 0., 0.)).is_ok());
    }

    /// Parsed and hand-built trees evaluate bit-identically.
    #[test]
    fn regression_corpus_matches_manual_trees() {
        use BinOp::*;
        use Func::*;
        let (x, y, z) = (Expr::var(Var::X), Expr::var(Var::Y), Expr::var(Var::Z));
        let b = Expr::binary;
        let n = Expr::num;
        let c = Expr::call;
        let corpus: Vec<(&str, Expr)> = vec![
            ("x", x.clone()),
            ("x + y", b(Add, x.clone(), y.clone())),
            ("x - y - z", b(Sub, b(Sub, x.clone(), y.clone()), z.clone())),
            ("x * y / z", b(Div, b(Mul, x.clone(), y.clone()), z.clone())),
            ("x ^ 2", b(Pow, x.clone(), n(2.0))),
            ("2^3^2", b(Pow, n(2.0), b(Pow, n(3.0), n(2.0)))),
            ("-x^2", Expr::neg(b(Pow, x.clone(), n(2.0)))),
            ("sin(pi*x)", c(Sin, b(Mul, Expr::Pi, x.clone()))),
            (
                "sin(pi*x)*sin(pi*y)*sin(pi*z)",
                b(
                    Mul,
                    b(
                        Mul,
                        c(Sin, b(Mul, Expr::Pi, x.clone())),
                        c(Sin, b(Mul, Expr::Pi, y.clone())),
                    ),
                    c(Sin, b(Mul, Expr::Pi, z.clone())),
                ),
            ),
            ("cos(y) + 0.5", b(Add, c(Cos, y.clone()), n(0.5))),
            ("tan(z/3)", c(Tan, b(Div, z.clone(), n(3.0)))),
            ("exp(-x*x)", c(Exp, b(Mul, Expr::neg(x.clone()), x.clone()))),
            ("log(2 + y)", c(Log, b(Add, n(2.0), y.clone()))),
            ("sqrt(x*x + y*y + z*z)", c(
                Sqrt,
                b(
                    Add,
                    b(Add, b(Mul, x.clone(), x.clone()), b(Mul, y.clone(), y.clone())),
                    b(Mul, z.clone(), z.clone()),
                ),
            )),
            ("abs(x - y)", c(Abs, b(Sub, x.clone(), y.clone()))),
            ("(x + y) * z", b(Mul, b(Add, x.clone(), y.clone()), z.clone())),
            ("x / (y / z)", b(Div, x.clone(), b(Div, y.clone(), z.clone()))),
            ("1e-3 * x", b(Mul, n(1e-3), x.clone())),
            ("z + x * 2 - y", b(Sub, b(Add, z.clone(), b(Mul, x.clone(), n(2.0))), y.clone())),
            (
                "exp(-((x-1)^2 + (y-2)^2)/0.5)",
                c(
                    Exp,
                    b(
                        Div,
                        Expr::neg(b(
                            Add,
                            b(Pow, b(Sub, x.clone(), n(1.0)), n(2.0)),
                            b(Pow, b(Sub, y.clone(), n(2.0)), n(2.0)),
                        )),
                        n(0.5),
                    ),
                ),
            ),
        ];
        assert_eq!(corpus.len(), 20);
        let points = [at(0.3, 0.7, 1.1), at(1.9, 2.3, -0.4), at(2.5, 0.25, 0.125)];
        for (src, manual) in &corpus {
            let parsed = parse(src).unwrap();
            assert_eq!(&parsed, manual, "{src}");
            for p in &points {
                let a = parsed.eval(p).unwrap();
                let m = manual.eval(p).unwrap();
                assert_eq!(a.to_bits(), m.to_bits(), "{src} at {p:?}");
            }
        }
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0u32..1000, 0u32..4).prop_map(|(m, e)| Expr::Num(m as f64 / 10f64.powi(e as i32))),
            (1e-9f64..1e9).prop_map(Expr::Num),
            Just(Expr::Var(Var::X)),
            Just(Expr::Var(Var::Y)),
            Just(Expr::Var(Var::Z)),
            Just(Expr::Pi),
        ];
        leaf.prop_recursive(6, 64, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(Expr::neg),
                (0usize..7, inner.clone()).prop_map(|(f, a)| Expr::call(Func::ALL[f], a)),
                (
                    prop_oneof![
                        Just(BinOp::Add),
                        Just(BinOp::Sub),
                        Just(BinOp::Mul),
                        Just(BinOp::Div),
                        Just(BinOp::Pow)
                    ],
                    inner.clone(),
                    inner
                )
                    .prop_map(|(op, a, b)| Expr::binary(op, a, b)),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn print_parse_round_trip(e in arb_expr()) {
            let printed = e.to_string();
            let reparsed = parse(&printed).unwrap();
            prop_assert_eq!(&reparsed, &e);
            prop_assert_eq!(reparsed.to_string(), printed);
        }
    }
}
