//! Precedence-climbing parser for the equation DSL.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' '-'? integer)?
//! primary := number | ident ('[' ('-' | '+') integer ']')?
//!          | ('exp' | 'ln') '(' expr ')' | '(' expr ')'
//! ```

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use thiserror::Error;

use super::{DelayedVar, Expr, Sym};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("syntax error at column {column}: expected {}, found {found}", expected.join(" or "))]
    Syntax {
        column: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("unknown symbol `{name}` at column {column}")]
    UnknownSymbol { name: String, column: usize },
}

impl ParseError {
    pub fn column(&self) -> usize {
        match self {
            ParseError::Syntax { column, .. } | ParseError::UnknownSymbol { column, .. } => *column,
        }
    }
}

/// Name of the pseudo-constant standing for δ when parsing skew polynomials.
pub const DELTA_NAME: &str = "δ";

pub fn delta_sym() -> Sym {
    Sym::new(DELTA_NAME)
}

/// Declared symbols and parser switches.
#[derive(Clone, Debug, Default)]
pub struct Context {
    pub vars: BTreeSet<Sym>,
    /// Constant name to its `nonzero` flag.
    pub consts: BTreeMap<Sym, bool>,
    pub options: ParseOptions,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ParseOptions {
    /// Accept forward shifts `x[+k]`.
    pub allow_advanced: bool,
    /// Read a bare `d` as the delay operator.
    pub delta: bool,
    /// Undeclared identifiers become variables instead of errors.
    pub permissive: bool,
}

impl Context {
    pub fn new(vars: &[&str], consts: &[&str]) -> Self {
        Context {
            vars: vars.iter().map(|v| Sym::new(v)).collect(),
            consts: consts.iter().map(|c| (Sym::new(c), true)).collect(),
            options: ParseOptions::default(),
        }
    }

    pub fn permissive() -> Self {
        Context {
            options: ParseOptions {
                permissive: true,
                allow_advanced: true,
                ..ParseOptions::default()
            },
            ..Context::default()
        }
    }

    pub fn with_advanced(mut self) -> Self {
        self.options.allow_advanced = true;
        self
    }

    pub fn with_delta(mut self) -> Self {
        self.options.delta = true;
        self
    }

    pub fn declare_var(&mut self, name: &str) {
        self.vars.insert(Sym::new(name));
    }

    pub fn declare_const(&mut self, name: &str, nonzero: bool) {
        self.consts.insert(Sym::new(name), nonzero);
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(String),
    Ident(String),
    Op(char),
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(n) => format!("number `{n}`"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Op(c) => format!("`{c}`"),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
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
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            out.push((Tok::Num(chars[start..i].iter().collect()), col));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else if "+-*/^()[]".contains(c) {
            out.push((Tok::Op(c), col));
            i += 1;
        } else {
            return Err(ParseError::Syntax {
                column: col,
                expected: vec!["expression".into()],
                found: format!("`{c}`"),
            });
        }
    }
    out.push((Tok::End, chars.len() + 1));
    Ok(out)
}

fn parse_number(s: &str) -> Option<BigRational> {
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (int, frac) = match mantissa.find('.') {
        Some(i) => (&mantissa[..i], &mantissa[i + 1..]),
        None => (mantissa, ""),
    };
    if frac.contains('.') {
        return None;
    }
    let digits = format!("{int}{frac}");
    let n: BigInt = if digits.is_empty() {
        return None;
    } else {
        digits.parse().ok()?
    };
    let scale = exp - frac.len() as i32;
    let ten = BigInt::from(10);
    let p = num_traits::pow(ten, scale.unsigned_abs() as usize);
    Some(if scale >= 0 {
        BigRational::from_integer(n * p)
    } else {
        BigRational::new(n, p)
    })
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    ctx: &'a Context,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn col(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &[&str]) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            column: self.col(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().describe(),
        })
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if *self.peek() == Tok::Op(c) {
            self.bump();
            Ok(())
        } else {
            self.fail(&[&format!("`{c}`")])
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Tok::Op('+') => {
                    self.bump();
                    acc = &acc + &self.term()?;
                }
                Tok::Op('-') => {
                    self.bump();
                    acc = &acc - &self.term()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Tok::Op('*') => {
                    self.bump();
                    acc = &acc * &self.unary()?;
                }
                Tok::Op('/') => {
                    self.bump();
                    let col = self.col();
                    let d = self.unary()?;
                    if d.is_structurally_zero() {
                        return Err(ParseError::Syntax {
                            column: col,
                            expected: vec!["nonzero divisor".into()],
                            found: "0".into(),
                        });
                    }
                    acc = &acc / &d;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            return Ok(-&self.unary()?);
        }
        if *self.peek() == Tok::Op('+') {
            self.bump();
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if *self.peek() != Tok::Op('^') {
            return Ok(base);
        }
        self.bump();
        let neg = if *self.peek() == Tok::Op('-') {
            self.bump();
            true
        } else {
            false
        };
        let col = self.col();
        let Tok::Num(n) = self.peek().clone() else {
            return self.fail(&["integer exponent"]);
        };
        let Ok(k) = n.parse::<i32>() else {
            return self.fail(&["integer exponent"]);
        };
        self.bump();
        let k = if neg { -k } else { k };
        if k < 0 && base.is_structurally_zero() {
            return Err(ParseError::Syntax {
                column: col,
                expected: vec!["nonnegative exponent of zero".into()],
                found: n,
            });
        }
        Ok(base.pow(k))
    }

    fn shift_suffix(&mut self) -> Result<i32, ParseError> {
        if *self.peek() != Tok::Op('[') {
            return Ok(0);
        }
        self.bump();
        let forward = match self.peek() {
            Tok::Op('-') => false,
            Tok::Op('+') if self.ctx.options.allow_advanced => true,
            _ if self.ctx.options.allow_advanced => return self.fail(&["`-`", "`+`"]),
            _ => return self.fail(&["`-`"]),
        };
        self.bump();
        let Tok::Num(n) = self.peek().clone() else {
            return self.fail(&["integer delay"]);
        };
        let Ok(k) = n.parse::<i32>() else {
            return self.fail(&["integer delay"]);
        };
        self.bump();
        self.expect(']')?;
        Ok(if forward { -k } else { k })
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let (tok, col) = self.bump();
        match tok {
            Tok::Num(n) => match parse_number(&n) {
                Some(q) => Ok(Expr::rational(q)),
                None => Err(ParseError::Syntax {
                    column: col,
                    expected: vec!["number".into()],
                    found: format!("`{n}`"),
                }),
            },
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => self.ident(name, col),
            _ => {
                self.pos -= 1;
                self.fail(&["number", "identifier", "`(`"])
            }
        }
    }

    fn ident(&mut self, name: String, col: usize) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Op('(') {
            let is_ln = match name.as_str() {
                "exp" => false,
                "ln" | "log" => true,
                _ => return Err(ParseError::UnknownSymbol { name, column: col }),
            };
            self.bump();
            let arg = self.expr()?;
            self.expect(')')?;
            if !is_ln {
                return Ok(Expr::exp(&arg));
            }
            if arg.is_structurally_zero() {
                return Err(ParseError::Syntax {
                    column: col,
                    expected: vec!["nonzero argument".into()],
                    found: "ln(0)".into(),
                });
            }
            return Ok(Expr::ln(&arg));
        }
        let sym = Sym::new(&name);
        if self.ctx.consts.contains_key(&sym) {
            return Ok(Expr::constant(sym));
        }
        let is_var = self.ctx.vars.contains(&sym);
        if !is_var && self.ctx.options.delta && name == "d" {
            return Ok(Expr::constant(delta_sym()));
        }
        if is_var || self.ctx.options.permissive {
            let shift = self.shift_suffix()?;
            return Ok(Expr::var(DelayedVar::new(sym, shift)));
        }
        Err(ParseError::UnknownSymbol { name, column: col })
    }
}

/// Parse DSL text into a canonical expression.
pub fn parse_expr(text: &str, ctx: &Context) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, ctx };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.fail(&["operator", "end of input"]);
    }
    Ok(e)
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    /// Parse with every identifier read as a variable.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_expr(s, &Context::permissive())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> Context {
        Context::new(&["x1", "x2", "x3"], &["e1", "e2", "c"])
    }

    #[test]
    fn parses_a() {
        let a = parse_expr("x1*x2[-1] + x2*x2[-1] + e1", &ctx()).unwrap();
        let expect = &(&(&Expr::named("x1", 0) * &Expr::named("x2", 1))
            + &(&Expr::named("x2", 0) * &Expr::named("x2", 1)))
            + &Expr::constant(Sym::new("e1"));
        assert_eq!(a, expect);
    }

    #[test]
    fn zero_and_numbers() {
        assert!(parse_expr("0", &ctx()).unwrap().is_structurally_zero());
        assert_eq!(parse_expr("0.25", &ctx()).unwrap(), Expr::ratio(1, 4));
        assert_eq!(parse_expr("1.5e2", &ctx()).unwrap(), Expr::int(150));
        assert_eq!(parse_expr("2^-2", &ctx()).unwrap(), Expr::ratio(1, 4));
    }

    #[test]
    fn unbalanced_bracket_column() {
        let err = parse_expr("x1[-2", &ctx()).unwrap_err();
        assert_eq!(err.column(), 6);
        assert!(matches!(err, ParseError::Syntax { ref expected, .. } if expected == &["`]`"]));
    }

    #[test]
    fn unknown_symbol() {
        let err = parse_expr("x1 + y", &ctx()).unwrap_err();
        assert_eq!(
            err,
            ParseError::UnknownSymbol {
                name: "y".into(),
                column: 6
            }
        );
    }

    #[test]
    fn forward_shift_needs_debug_mode() {
        assert!(parse_expr("x1[+1]", &ctx()).is_err());
        let e = parse_expr("x1[+1]", &ctx().with_advanced()).unwrap();
        assert_eq!(e, Expr::named("x1", -1));
    }

    #[test]
    fn transcendental() {
        let e = parse_expr("exp(x1[-3] + x3[-2]*x2[-3]) - ln(c)", &ctx()).unwrap();
        assert!(e.has_transcendental());
        let back = parse_expr(&e.to_string(), &ctx()).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn display_round_trip() {
        for text in [
            "x2[-1]^3*x1/(c - x1)",
            "(x1 - 2*x2)/(x3[-2] + 1/3)",
            "-x1/x2",
            "x1[-1] + x3*x2[-1] - ln(c)",
        ] {
            let e = parse_expr(text, &ctx()).unwrap();
            assert_eq!(parse_expr(&e.to_string(), &ctx()).unwrap(), e, "{text}");
        }
    }

    #[test]
    fn trailing_garbage() {
        let err = parse_expr("x1 x2", &ctx()).unwrap_err();
        assert_eq!(err.column(), 4);
    }
}
