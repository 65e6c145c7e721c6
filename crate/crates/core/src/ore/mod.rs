//! The skew polynomial ring K(δ] with δ·a = shift(a, 1)·δ, and matrices over it.

mod elim;
mod matrix;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

use crate::expr::{delta_sym, parse_expr, Atom, Context, Expr, ParseError};

pub use elim::{
    rank, right_inverse, right_kernel, row_compress, try_inverse, InverseOutcome, KernelResult,
    NotUnimodularWitness, RightInverseFailure, RowCompression, UnimodularCertificate,
};
pub use matrix::SkewMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OreError {
    #[error("cannot divide: leading coefficient of {0} is not certifiably nonzero")]
    Division(String),
    #[error("certificate does not verify: {0}")]
    Certificate(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("δ occurs in a denominator or inside exp/ln")]
    BadDelta,
}

/// `Σ a_j δ^j` with no zero coefficients stored.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct SkewPoly {
    coeffs: BTreeMap<u32, Expr>,
}

impl SkewPoly {
    pub fn zero() -> Self {
        SkewPoly::default()
    }

    pub fn one() -> Self {
        SkewPoly::scalar(Expr::one())
    }

    pub fn scalar(c: Expr) -> Self {
        SkewPoly::monomial(c, 0)
    }

    pub fn delta(j: u32) -> Self {
        SkewPoly::monomial(Expr::one(), j)
    }

    pub fn monomial(c: Expr, j: u32) -> Self {
        let mut p = SkewPoly::zero();
        p.add_term(j, c);
        p
    }

    pub fn from_coeffs(coeffs: impl IntoIterator<Item = (u32, Expr)>) -> Self {
        let mut p = SkewPoly::zero();
        for (j, c) in coeffs {
            p.add_term(j, c);
        }
        p
    }

    fn add_term(&mut self, j: u32, c: Expr) {
        if c.is_zero() {
            return;
        }
        match self.coeffs.remove(&j) {
            None => {
                self.coeffs.insert(j, c);
            }
            Some(old) => {
                let s = &old + &c;
                if !s.is_zero() {
                    self.coeffs.insert(j, s);
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs.get(&0).is_some_and(|c| c.is_one())
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.coeffs.keys().next_back().copied()
    }

    /// Lowest power of δ with a nonzero coefficient.
    pub fn valuation(&self) -> Option<u32> {
        self.coeffs.keys().next().copied()
    }

    pub fn coeff(&self, j: u32) -> Expr {
        self.coeffs.get(&j).cloned().unwrap_or_else(Expr::zero)
    }

    pub fn coeffs(&self) -> &BTreeMap<u32, Expr> {
        &self.coeffs
    }

    pub fn lead(&self) -> Option<(u32, &Expr)> {
        self.coeffs.iter().next_back().map(|(j, c)| (*j, c))
    }

    /// The degree-0 element as an expression, if the polynomial has degree ≤ 0.
    pub fn as_scalar(&self) -> Option<Expr> {
        match self.degree() {
            None => Some(Expr::zero()),
            Some(0) => Some(self.coeff(0)),
            _ => None,
        }
    }

    /// Total size of coefficients, a pivoting measure.
    pub fn size(&self) -> usize {
        self.coeffs.values().map(Expr::size).sum()
    }

    pub fn is_causal(&self) -> bool {
        self.coeffs.values().all(Expr::is_causal)
    }

    pub fn map_coeffs(&self, mut f: impl FnMut(&Expr) -> Expr) -> SkewPoly {
        SkewPoly::from_coeffs(self.coeffs.iter().map(|(j, c)| (*j, f(c))))
    }

    /// `c · self`.
    pub fn left_scale(&self, c: &Expr) -> SkewPoly {
        self.map_coeffs(|a| c * a)
    }

    /// `self · c`, i.e. `Σ a_j shift(c, j) δ^j`.
    pub fn right_scale(&self, c: &Expr) -> SkewPoly {
        SkewPoly::from_coeffs(self.coeffs.iter().map(|(j, a)| (*j, a * &c.shift(*j as i32))))
    }

    /// `self · δ^k`.
    pub fn mul_delta(&self, k: u32) -> SkewPoly {
        SkewPoly {
            coeffs: self.coeffs.iter().map(|(j, c)| (j + k, c.clone())).collect(),
        }
    }

    pub fn mul(&self, other: &SkewPoly) -> SkewPoly {
        let mut out = SkewPoly::zero();
        for (i, a) in &self.coeffs {
            for (j, b) in &other.coeffs {
                out.add_term(i + j, a * &b.shift(*i as i32));
            }
        }
        out
    }

    /// Left-Euclidean division: `self = q·b + r` with `deg r < deg b`.
    pub fn left_divide(&self, b: &SkewPoly) -> Result<(SkewPoly, SkewPoly), OreError> {
        let (n, bl) = b.lead().ok_or_else(|| OreError::Division("0".into()))?;
        let bl = bl.clone();
        let mut q = SkewPoly::zero();
        let mut r = self.clone();
        while let Some((m, rl)) = r.lead() {
            if m < n {
                break;
            }
            let k = m - n;
            let c = rl
                .checked_div(&bl.shift(k as i32))
                .ok_or_else(|| OreError::Division(b.to_string()))?;
            let t = SkewPoly::monomial(c, k);
            r = &r - &t.mul(b);
            if r.degree() == Some(m) {
                return Err(OreError::Division(b.to_string()));
            }
            q = &q + &t;
        }
        Ok((q, r))
    }

    /// Right-Euclidean division: `self = b·q + r` with `deg r < deg b`.
    pub fn right_divide(&self, b: &SkewPoly) -> Result<(SkewPoly, SkewPoly), OreError> {
        let (n, bl) = b.lead().ok_or_else(|| OreError::Division("0".into()))?;
        let bl = bl.clone();
        let mut q = SkewPoly::zero();
        let mut r = self.clone();
        while let Some((m, rl)) = r.lead() {
            if m < n {
                break;
            }
            let k = m - n;
            let c = rl
                .checked_div(&bl)
                .ok_or_else(|| OreError::Division(b.to_string()))?
                .shift(-(n as i32));
            let t = SkewPoly::monomial(c, k);
            r = &r - &b.mul(&t);
            if r.degree() == Some(m) {
                return Err(OreError::Division(b.to_string()));
            }
            q = &q + &t;
        }
        Ok((q, r))
    }

    /// Convert an expression in which the pseudo-constant δ occurs
    /// polynomially, coefficients read to the left of δ.
    pub fn from_delta_expr(e: &Expr) -> Result<SkewPoly, OreError> {
        let d = Atom::Const(delta_sym());
        if e.denom().atoms().iter().any(|a| a.mentions_sym(delta_sym())) {
            return Err(OreError::BadDelta);
        }
        if e
            .numer()
            .atoms()
            .iter()
            .any(|a| a.is_transcendental() && a.mentions_sym(delta_sym()))
        {
            return Err(OreError::BadDelta);
        }
        let den = Expr::from_poly(e.denom().clone());
        let mut out = SkewPoly::zero();
        for (j, c) in e.numer().coefficients_in(&d) {
            out.add_term(j, &Expr::from_poly(c) / &den);
        }
        Ok(out)
    }

    /// Parse the report syntax `(expr)*d^j + ...`.
    pub fn parse(text: &str, ctx: &Context) -> Result<SkewPoly, OreError> {
        let ctx = ctx.clone().with_delta();
        SkewPoly::from_delta_expr(&parse_expr(text, &ctx)?)
    }
}

impl Add for &SkewPoly {
    type Output = SkewPoly;
    fn add(self, o: &SkewPoly) -> SkewPoly {
        let mut out = self.clone();
        for (j, c) in &o.coeffs {
            out.add_term(*j, c.clone());
        }
        out
    }
}

impl Sub for &SkewPoly {
    type Output = SkewPoly;
    fn sub(self, o: &SkewPoly) -> SkewPoly {
        let mut out = self.clone();
        for (j, c) in &o.coeffs {
            out.add_term(*j, -c);
        }
        out
    }
}

impl Neg for &SkewPoly {
    type Output = SkewPoly;
    fn neg(self) -> SkewPoly {
        SkewPoly {
            coeffs: self.coeffs.iter().map(|(j, c)| (*j, -c)).collect(),
        }
    }
}

impl Mul for &SkewPoly {
    type Output = SkewPoly;
    fn mul(self, o: &SkewPoly) -> SkewPoly {
        SkewPoly::mul(self, o)
    }
}

impl serde::Serialize for SkewPoly {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(Some(self.coeffs.len()))?;
        for (j, c) in &self.coeffs {
            m.serialize_entry(&j.to_string(), &c.to_string())?;
        }
        m.end()
    }
}

impl From<Expr> for SkewPoly {
    fn from(c: Expr) -> Self {
        SkewPoly::scalar(c)
    }
}

fn needs_parens(s: &str) -> bool {
    s.contains(' ') || s.contains('/') || s.starts_with('-')
}

impl fmt::Display for SkewPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        let mut first = true;
        for (j, c) in &self.coeffs {
            if !first {
                f.write_str(" + ")?;
            }
            first = false;
            let cs = c.to_string();
            let dpart = match j {
                0 => String::new(),
                1 => "d".into(),
                _ => format!("d^{j}"),
            };
            if *j == 0 {
                if needs_parens(&cs) {
                    write!(f, "({cs})")?;
                } else {
                    f.write_str(&cs)?;
                }
            } else if c.is_one() {
                f.write_str(&dpart)?;
            } else if needs_parens(&cs) {
                write!(f, "({cs})*{dpart}")?;
            } else {
                write!(f, "{cs}*{dpart}")?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for SkewPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SkewPoly({self})")
    }
}
