//! Canonical rational functions of delayed variables.
//!
//! An [`Expr`] is a quotient of two [`Poly`]s in lowest terms with a monic
//! denominator. Atoms are delayed variables, symbolic constants and opaque
//! `exp(..)`/`ln(..)` generators whose arguments are themselves canonical.
//! Structural equality of canonical forms coincides with equality of the
//! rational functions; the transcendental part falls back to the
//! randomized test in [`zero`].

mod atom;
mod eval;
mod parse;
pub mod poly;
mod symbol;
pub mod zero;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

pub use atom::{Atom, DelayedVar};
pub use eval::{Assignment, AtomValues, EvalError, DEFAULT_ZERO_GUARD};
pub use parse::{delta_sym, parse_expr, Context, ParseError, ParseOptions, DELTA_NAME};
pub use poly::{Coeff, Monomial, Poly};
pub use symbol::Sym;
pub use zero::ZeroTest;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Expr {
    num: Poly,
    den: Poly,
}

/// Result of [`Expr::causality_scan`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Causality {
    pub is_causal: bool,
    pub min_shift: i32,
    pub max_shift: i32,
}

impl Expr {
    pub fn zero() -> Expr {
        Expr {
            num: Poly::zero(),
            den: Poly::one(),
        }
    }

    pub fn one() -> Expr {
        Expr::int(1)
    }

    pub fn int(n: i64) -> Expr {
        Expr::rational(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn rational(c: Coeff) -> Expr {
        Expr {
            num: Poly::constant(c),
            den: Poly::one(),
        }
    }

    pub fn ratio(n: i64, d: i64) -> Expr {
        Expr::rational(BigRational::new(n.into(), d.into()))
    }

    pub fn atom(a: Atom) -> Expr {
        Expr {
            num: Poly::from_atom(a),
            den: Poly::one(),
        }
    }

    pub fn var(v: DelayedVar) -> Expr {
        Expr::atom(Atom::Var(v))
    }

    /// Shorthand for `x(t - shift)` by variable name.
    pub fn named(name: &str, shift: i32) -> Expr {
        Expr::var(DelayedVar::named(name, shift))
    }

    pub fn constant(s: Sym) -> Expr {
        Expr::atom(Atom::Const(s))
    }

    pub fn from_poly(p: Poly) -> Expr {
        Expr {
            num: p,
            den: Poly::one(),
        }
    }

    /// Build `num/den` and bring it to canonical form.
    ///
    /// Panics if `den` is the zero polynomial.
    pub fn from_parts(num: Poly, den: Poly) -> Expr {
        assert!(!den.is_zero(), "zero denominator");
        if num.is_zero() {
            return Expr::zero();
        }
        if let Some(c) = den.as_constant() {
            return Expr {
                num: num.scale(&c.recip()),
                den: Poly::one(),
            };
        }
        let g = poly::gcd(&num, &den);
        Expr::from_coprime(div_by(&num, &g), div_by(&den, &g))
    }

    /// `num/den` for coprime parts: only the leading coefficient of the
    /// denominator is normalized.
    fn from_coprime(num: Poly, den: Poly) -> Expr {
        if num.is_zero() {
            return Expr::zero();
        }
        let lc = den.leading_coeff();
        if lc.is_one() {
            Expr { num, den }
        } else {
            let inv = lc.recip();
            Expr {
                num: num.scale(&inv),
                den: den.scale(&inv),
            }
        }
    }

    pub fn numer(&self) -> &Poly {
        &self.num
    }

    pub fn denom(&self) -> &Poly {
        &self.den
    }

    /// The canonical numerator is the zero polynomial.
    pub fn is_structurally_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.num.is_one() && self.den.is_one()
    }

    pub fn as_rational(&self) -> Option<Coeff> {
        if self.den.is_one() {
            self.num.as_constant()
        } else {
            None
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        self.as_rational().and_then(|c| c.to_f64())
    }

    pub fn is_polynomial(&self) -> bool {
        self.den.is_one()
    }

    /// Number of stored terms, a size measure for pivoting heuristics.
    pub fn size(&self) -> usize {
        self.num.len() + self.den.len()
    }

    pub fn exp(arg: &Expr) -> Expr {
        if arg.is_structurally_zero() {
            return Expr::one();
        }
        if let Some(Atom::Ln(inner)) = arg.single_atom() {
            return (*inner).clone();
        }
        Expr::atom(Atom::Exp(Box::new(arg.clone())))
    }

    pub fn ln(arg: &Expr) -> Expr {
        if arg.is_one() {
            return Expr::zero();
        }
        if let Some(Atom::Exp(inner)) = arg.single_atom() {
            return (*inner).clone();
        }
        Expr::atom(Atom::Ln(Box::new(arg.clone())))
    }

    /// The expression is exactly one atom with coefficient 1.
    pub fn single_atom(&self) -> Option<Atom> {
        if !self.den.is_one() || self.num.len() != 1 {
            return None;
        }
        let (m, c) = self.num.terms.iter().next().unwrap();
        if c.is_one() && m.0.len() == 1 && m.0[0].1 == 1 {
            Some(m.0[0].0.clone())
        } else {
            None
        }
    }

    pub fn as_var(&self) -> Option<DelayedVar> {
        match self.single_atom() {
            Some(Atom::Var(v)) => Some(v),
            _ => None,
        }
    }

    pub fn pow(&self, e: i32) -> Expr {
        if e >= 0 {
            Expr {
                num: self.num.pow(e as u32),
                den: self.den.pow(e as u32),
            }
        } else {
            Expr::from_parts(self.den.pow((-e) as u32), self.num.pow((-e) as u32))
        }
    }

    pub fn recip(&self) -> Expr {
        Expr::from_parts(self.den.clone(), self.num.clone())
    }

    /// Checked division; `None` when the divisor is structurally zero.
    pub fn checked_div(&self, other: &Expr) -> Option<Expr> {
        if other.is_structurally_zero() {
            None
        } else {
            Some(self * &other.recip())
        }
    }

    /// Top-level atoms of numerator and denominator.
    pub fn atoms(&self) -> BTreeSet<Atom> {
        let mut s = self.num.atoms();
        s.extend(self.den.atoms());
        s
    }

    /// All delayed variables, including those inside `exp`/`ln` arguments.
    pub fn vars(&self) -> BTreeSet<DelayedVar> {
        let mut out = BTreeSet::new();
        for a in self.atoms() {
            match a {
                Atom::Var(v) => {
                    out.insert(v);
                }
                Atom::Const(_) => {}
                Atom::Exp(e) | Atom::Ln(e) => out.extend(e.vars()),
            }
        }
        out
    }

    pub fn constants(&self) -> BTreeSet<Sym> {
        let mut out = BTreeSet::new();
        for a in self.atoms() {
            match a {
                Atom::Var(_) => {}
                Atom::Const(c) => {
                    out.insert(c);
                }
                Atom::Exp(e) | Atom::Ln(e) => out.extend(e.constants()),
            }
        }
        out
    }

    pub fn has_transcendental(&self) -> bool {
        self.num.has_transcendental() || self.den.has_transcendental()
    }

    pub fn mentions(&self, v: &DelayedVar) -> bool {
        self.atoms().iter().any(|a| a.mentions(v))
    }

    pub fn mentions_sym(&self, s: Sym) -> bool {
        self.atoms().iter().any(|a| a.mentions_sym(s))
    }

    /// Is every variable at a non-negative delay?
    pub fn causality_scan(&self) -> Causality {
        let vars = self.vars();
        if vars.is_empty() {
            return Causality {
                is_causal: true,
                min_shift: 0,
                max_shift: 0,
            };
        }
        let min_shift = vars.iter().map(|v| v.shift).min().unwrap();
        let max_shift = vars.iter().map(|v| v.shift).max().unwrap();
        Causality {
            is_causal: min_shift >= 0,
            min_shift,
            max_shift,
        }
    }

    pub fn is_causal(&self) -> bool {
        self.causality_scan().is_causal
    }

    /// Apply `f` to every atom. Atoms mapped to `None` are kept; exp/ln
    /// arguments are rewritten recursively before `f` sees the atom.
    pub fn map_atoms(&self, f: &mut dyn FnMut(&Atom) -> Option<Expr>) -> Expr {
        let mut cache: HashMap<Atom, Expr> = HashMap::new();
        let n = map_poly(&self.num, f, &mut cache);
        let d = map_poly(&self.den, f, &mut cache);
        n.checked_div(&d).unwrap_or_else(|| {
            panic!("substitution annihilated the denominator of {self}")
        })
    }

    /// Like [`map_atoms`](Self::map_atoms) but fails instead of panicking
    /// when the denominator vanishes.
    pub fn try_map_atoms(&self, f: &mut dyn FnMut(&Atom) -> Option<Expr>) -> Option<Expr> {
        let mut cache: HashMap<Atom, Expr> = HashMap::new();
        let n = map_poly(&self.num, f, &mut cache);
        let d = map_poly(&self.den, f, &mut cache);
        n.checked_div(&d)
    }

    pub fn map_vars(&self, f: &mut dyn FnMut(DelayedVar) -> Option<Expr>) -> Expr {
        self.map_atoms(&mut |a| match a {
            Atom::Var(v) => f(*v),
            _ => None,
        })
    }

    /// `δᵏ` for `k > 0`, `Δ^{-k}` for `k < 0`.
    pub fn shift(&self, k: i32) -> Expr {
        if k == 0 {
            return self.clone();
        }
        let n = shift_poly(&self.num, k);
        let d = shift_poly(&self.den, k);
        // shifting is a ring automorphism: gcd stays trivial, only the
        // monic normalization may move
        let lc = d.leading_coeff();
        if lc.is_one() {
            Expr { num: n, den: d }
        } else {
            let inv = lc.recip();
            Expr {
                num: n.scale(&inv),
                den: d.scale(&inv),
            }
        }
    }

    /// Simultaneous substitution of base variables; a rule for `x` is
    /// applied to every `x(-j)` as the rule shifted by `j`.
    pub fn substitute(&self, rules: &BTreeMap<Sym, Expr>) -> Expr {
        if rules.is_empty() {
            return self.clone();
        }
        self.map_vars(&mut |v| rules.get(&v.var).map(|e| e.shift(v.shift)))
    }

    pub fn try_substitute(&self, rules: &BTreeMap<Sym, Expr>) -> Option<Expr> {
        if rules.is_empty() {
            return Some(self.clone());
        }
        self.try_map_atoms(&mut |a| match a {
            Atom::Var(v) => rules.get(&v.var).map(|e| e.shift(v.shift)),
            _ => None,
        })
    }

    /// Substitute constants by expressions.
    pub fn substitute_consts(&self, rules: &BTreeMap<Sym, Expr>) -> Expr {
        self.map_atoms(&mut |a| match a {
            Atom::Const(c) => rules.get(c).cloned(),
            _ => None,
        })
    }

    /// Partial derivative with respect to a single delayed variable, all
    /// other atoms independent.
    pub fn partial(&self, v: &DelayedVar) -> Expr {
        if !self.mentions(v) {
            return Expr::zero();
        }
        let dn = poly_partial(&self.num, v);
        if self.den.is_one() {
            return dn;
        }
        let dd = poly_partial(&self.den, v);
        let n = Expr::from_poly(self.num.clone());
        let d = Expr::from_poly(self.den.clone());
        (&(&dn * &d) - &(&n * &dd)) * Expr::from_parts(Poly::one(), self.den.pow(2))
    }

    /// Polynomial degree in a variable, or `None` if it occurs in the
    /// denominator or inside a transcendental atom.
    pub fn poly_degree_in(&self, v: &DelayedVar) -> Option<u32> {
        let a = Atom::Var(*v);
        if self.den.atoms().iter().any(|b| b.mentions(v)) {
            return None;
        }
        if self
            .num
            .atoms()
            .iter()
            .any(|b| b.is_transcendental() && b.mentions(v))
        {
            return None;
        }
        Some(self.num.degree_in(&a))
    }

    /// Solve `self = 0` for `v` when the numerator is affine in `v`.
    pub fn solve_affine(&self, v: &DelayedVar) -> Option<Expr> {
        let a = Atom::Var(*v);
        if self
            .num
            .atoms()
            .iter()
            .any(|b| b.is_transcendental() && b.mentions(v))
        {
            return None;
        }
        let coeffs = self.num.coefficients_in(&a);
        if coeffs.keys().any(|e| *e > 1) {
            return None;
        }
        let lin = Expr::from_poly(coeffs.get(&1)?.clone());
        let rest = coeffs
            .get(&0)
            .map(|p| Expr::from_poly(p.clone()))
            .unwrap_or_else(Expr::zero);
        (-&rest).checked_div(&lin)
    }

    /// Sign of the leading numerator coefficient, for display normalization.
    pub fn leading_sign_negative(&self) -> bool {
        self.num.leading_coeff().is_negative()
    }

    /// Scale by a rational so the numerator's leading coefficient is 1.
    pub fn normalize_leading(&self) -> Expr {
        let lc = self.num.leading_coeff();
        if lc.is_zero() || lc.is_one() {
            self.clone()
        } else {
            self * &Expr::rational(lc.recip())
        }
    }
}

fn map_poly(
    p: &Poly,
    f: &mut dyn FnMut(&Atom) -> Option<Expr>,
    cache: &mut HashMap<Atom, Expr>,
) -> Expr {
    let mut acc = Expr::zero();
    let mut all_poly = true;
    let mut terms: Vec<(Coeff, Vec<(Expr, u32)>)> = Vec::with_capacity(p.len());
    for (m, c) in &p.terms {
        let mut factors = Vec::with_capacity(m.0.len());
        for (a, e) in &m.0 {
            let img = if let Some(x) = cache.get(a) {
                x.clone()
            } else {
                let mapped = match a {
                    Atom::Exp(arg) => {
                        let inner = arg.map_atoms(f);
                        let rebuilt = Atom::Exp(Box::new(inner.clone()));
                        f(&rebuilt).unwrap_or_else(|| Expr::exp(&inner))
                    }
                    Atom::Ln(arg) => {
                        let inner = arg.map_atoms(f);
                        let rebuilt = Atom::Ln(Box::new(inner.clone()));
                        f(&rebuilt).unwrap_or_else(|| Expr::ln(&inner))
                    }
                    _ => f(a).unwrap_or_else(|| Expr::atom(a.clone())),
                };
                cache.insert(a.clone(), mapped.clone());
                mapped
            };
            all_poly &= img.is_polynomial();
            factors.push((img, *e));
        }
        terms.push((c.clone(), factors));
    }
    if all_poly {
        let mut out = Poly::zero();
        for (c, factors) in terms {
            let mut t = Poly::constant(c);
            for (x, e) in factors {
                t = t.mul(&x.num.pow(e));
            }
            out = out.add(&t);
        }
        return Expr::from_poly(out);
    }
    for (c, factors) in terms {
        let mut t = Expr::rational(c);
        for (x, e) in factors {
            t = &t * &x.pow(e as i32);
        }
        acc = &acc + &t;
    }
    acc
}

fn shift_atom(a: &Atom, k: i32) -> Atom {
    match a {
        Atom::Var(v) => Atom::Var(v.shifted(k)),
        Atom::Const(c) => Atom::Const(*c),
        Atom::Exp(e) => Atom::Exp(Box::new(e.shift(k))),
        Atom::Ln(e) => Atom::Ln(Box::new(e.shift(k))),
    }
}

fn shift_poly(p: &Poly, k: i32) -> Poly {
    let mut out = Poly::zero();
    for (m, c) in &p.terms {
        let mut atoms: Vec<(Atom, u32)> = m.0.iter().map(|(a, e)| (shift_atom(a, k), *e)).collect();
        atoms.sort_by(|x, y| x.0.cmp(&y.0));
        out.terms.insert(Monomial(atoms), c.clone());
    }
    out
}

fn atom_partial(a: &Atom, v: &DelayedVar) -> Expr {
    match a {
        Atom::Var(w) if w == v => Expr::one(),
        Atom::Var(_) | Atom::Const(_) => Expr::zero(),
        Atom::Exp(arg) => &Expr::atom(a.clone()) * &arg.partial(v),
        Atom::Ln(arg) => &arg.partial(v) * &arg.recip(),
    }
}

fn poly_partial(p: &Poly, v: &DelayedVar) -> Expr {
    let mut acc = Expr::zero();
    for a in p.atoms() {
        if !a.mentions(v) {
            continue;
        }
        let da = atom_partial(&a, v);
        if da.is_structurally_zero() {
            continue;
        }
        let coeffs = p.coefficients_in(&a);
        let mut dp = Poly::zero();
        for (e, c) in coeffs {
            if e == 0 {
                continue;
            }
            let m = if e > 1 {
                Monomial(vec![(a.clone(), e - 1)])
            } else {
                Monomial::one()
            };
            dp = dp.add(&c.mul_term(&m, &Coeff::from_integer(e.into())));
        }
        acc = &acc + &(&Expr::from_poly(dp) * &da);
    }
    acc
}

fn div_by(p: &Poly, g: &Poly) -> Poly {
    if g.is_one() {
        p.clone()
    } else {
        p.exact_div(g).expect("gcd divides")
    }
}

impl Add for &Expr {
    type Output = Expr;
    fn add(self, o: &Expr) -> Expr {
        if self.is_structurally_zero() {
            return o.clone();
        }
        if o.is_structurally_zero() {
            return self.clone();
        }
        if self.den == o.den {
            if self.den.is_one() {
                return Expr::from_poly(self.num.add(&o.num));
            }
            return Expr::from_parts(self.num.add(&o.num), self.den.clone());
        }
        // only factors of gcd(b, d) can cancel in a/b + c/d
        let g = poly::gcd(&self.den, &o.den);
        let (b1, d1) = (div_by(&self.den, &g), div_by(&o.den, &g));
        let num = self.num.mul(&d1).add(&o.num.mul(&b1));
        let h = poly::gcd(&num, &g);
        Expr::from_coprime(div_by(&num, &h), div_by(&b1.mul(&o.den), &h))
    }
}

impl Sub for &Expr {
    type Output = Expr;
    fn sub(self, o: &Expr) -> Expr {
        self + &(-o)
    }
}

impl Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr {
            num: self.num.neg(),
            den: self.den.clone(),
        }
    }
}

impl Mul for &Expr {
    type Output = Expr;
    fn mul(self, o: &Expr) -> Expr {
        if self.is_structurally_zero() || o.is_structurally_zero() {
            return Expr::zero();
        }
        if self.den.is_one() && o.den.is_one() {
            return Expr::from_poly(self.num.mul(&o.num));
        }
        // both sides are reduced, so cross cancellation suffices
        let g1 = poly::gcd(&self.num, &o.den);
        let g2 = poly::gcd(&o.num, &self.den);
        Expr::from_coprime(
            div_by(&self.num, &g1).mul(&div_by(&o.num, &g2)),
            div_by(&self.den, &g2).mul(&div_by(&o.den, &g1)),
        )
    }
}

impl Div for &Expr {
    type Output = Expr;
    fn div(self, o: &Expr) -> Expr {
        self.checked_div(o).expect("division by zero expression")
    }
}

macro_rules! forward_binop {
    ($tr:ident, $m:ident) => {
        impl $tr for Expr {
            type Output = Expr;
            fn $m(self, o: Expr) -> Expr {
                (&self).$m(&o)
            }
        }
        impl $tr<&Expr> for Expr {
            type Output = Expr;
            fn $m(self, o: &Expr) -> Expr {
                (&self).$m(o)
            }
        }
        impl $tr<Expr> for &Expr {
            type Output = Expr;
            fn $m(self, o: Expr) -> Expr {
                self.$m(&o)
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);
forward_binop!(Div, div);

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        -&self
    }
}

impl From<i64> for Expr {
    fn from(n: i64) -> Expr {
        Expr::int(n)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.is_one() {
            return write!(f, "{}", self.num);
        }
        let wrap = |p: &Poly| {
            let single = p.len() == 1 && p.leading_coeff().is_positive();
            if single {
                p.to_string()
            } else {
                format!("({p})")
            }
        };
        write!(f, "{}/{}", wrap(&self.num), wrap(&self.den))
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

impl Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(n: u32, s: i32) -> Expr {
        Expr::named(&format!("x{n}"), s)
    }

    #[test]
    fn canonical_cancellation() {
        let a = &x(1, 0) + &x(2, 1);
        let b = &(&a * &x(1, 0)) / &(&a * &x(2, 0));
        assert_eq!(b, &x(1, 0) / &x(2, 0));
    }

    #[test]
    fn binomial_identity_is_structurally_zero() {
        let s = &x(1, 0) + &x(2, 0);
        let e = &(&(&s * &s) - &(&x(1, 0) * &x(1, 0))) - &(&(&Expr::int(2) * &x(1, 0)) * &x(2, 0));
        let e = &e - &(&x(2, 0) * &x(2, 0));
        assert!(e.is_structurally_zero());
    }

    #[test]
    fn distinct_atoms_differ() {
        assert!(!(&x(1, 1) - &x(1, 0)).is_structurally_zero());
    }

    #[test]
    fn partial_of_remark_example() {
        let e = &(&x(1, 1) * &x(2, 0)) + &(&x(2, 0) * &x(2, 0));
        let d = e.partial(&DelayedVar::named("x2", 0));
        assert_eq!(d, &x(1, 1) + &(&Expr::int(2) * &x(2, 0)));
        assert!(x(1, 0).partial(&DelayedVar::named("x2", 0)).is_structurally_zero());
    }

    #[test]
    fn partial_through_triple_product() {
        let e = &(&x(2, 0) * &x(1, 2)) * &x(1, 0);
        let d = e.partial(&DelayedVar::named("x1", 0));
        assert_eq!(d, &x(2, 0) * &x(1, 2));
    }

    #[test]
    fn shift_examples() {
        let e = &x(1, 0) * &x(2, 1);
        assert_eq!(e.shift(1), &x(1, 1) * &x(2, 2));
        assert_eq!(e.shift(0), e);
        let f = &e / &(&x(1, 3) + &Expr::int(1));
        assert_eq!(f.shift(3).shift(-3), f);
    }

    #[test]
    fn causality() {
        let e = &x(1, -1) / &x(2, -1);
        assert_eq!(
            e.causality_scan(),
            Causality {
                is_causal: false,
                min_shift: -1,
                max_shift: -1
            }
        );
        let e = &x(1, 0) * &x(2, 3);
        assert_eq!(
            e.causality_scan(),
            Causality {
                is_causal: true,
                min_shift: 0,
                max_shift: 3
            }
        );
        let c = Expr::constant(Sym::new("e1"));
        assert_eq!(
            c.causality_scan(),
            Causality {
                is_causal: true,
                min_shift: 0,
                max_shift: 0
            }
        );
    }

    #[test]
    fn exp_ln_cancel() {
        let a = &x(1, 0) + &x(2, 1);
        assert_eq!(Expr::exp(&Expr::ln(&a)), a);
        assert_eq!(Expr::ln(&Expr::exp(&a)), a);
    }

    #[test]
    fn partial_of_exp() {
        let arg = &x(1, 0) * &x(2, 0);
        let e = Expr::exp(&arg);
        let d = e.partial(&DelayedVar::named("x1", 0));
        assert_eq!(d, &e * &x(2, 0));
    }

    #[test]
    fn substitution_propagates_shifts() {
        let mut rules = BTreeMap::new();
        rules.insert(Sym::new("x1"), &x(3, 0) / &x(2, 1));
        let e = &x(1, 0) * &x(2, 1) + &x(1, 1);
        let got = e.substitute(&rules);
        assert_eq!(got, &x(3, 0) + &(&x(3, 1) / &x(2, 2)));
        assert_eq!(e.substitute(&BTreeMap::new()), e);
    }
}
