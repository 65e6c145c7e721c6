//! Sparse multivariate polynomials over the rationals with atoms as
//! indeterminates, graded-lex ordered, plus exact division and a recursive
//! primitive-PRS gcd.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::atom::Atom;

pub type Coeff = BigRational;

/// Product of atom powers, kept sorted by atom with positive exponents.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Monomial(pub Vec<(Atom, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn atom(a: Atom) -> Self {
        Monomial(vec![(a, 1)])
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|(_, e)| *e).sum()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn exponent(&self, a: &Atom) -> u32 {
        self.0
            .iter()
            .find(|(b, _)| b == a)
            .map(|(_, e)| *e)
            .unwrap_or(0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].0.cmp(&other.0[j].0) {
                Ordering::Less => {
                    out.push(self.0[i].clone());
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(other.0[j].clone());
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((self.0[i].0.clone(), self.0[i].1 + other.0[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        Monomial(out)
    }

    /// `self / other` when `other` divides `self`.
    pub fn div(&self, other: &Monomial) -> Option<Monomial> {
        let mut out = Vec::new();
        let mut j = 0;
        for (a, e) in &self.0 {
            if j < other.0.len() && other.0[j].0 == *a {
                let f = other.0[j].1;
                if f > *e {
                    return None;
                }
                if f < *e {
                    out.push((a.clone(), e - f));
                }
                j += 1;
            } else if j < other.0.len() && other.0[j].0 < *a {
                return None;
            } else {
                out.push((a.clone(), *e));
            }
        }
        if j < other.0.len() {
            return None;
        }
        Some(Monomial(out))
    }

    pub fn gcd(&self, other: &Monomial) -> Monomial {
        Monomial(
            self.0
                .iter()
                .filter_map(|(a, e)| {
                    let f = other.exponent(a);
                    (f > 0).then(|| (a.clone(), (*e).min(f)))
                })
                .collect(),
        )
    }

    /// Remove atom `a`, returning its exponent and the rest.
    pub fn split(&self, a: &Atom) -> (u32, Monomial) {
        let mut e = 0;
        let rest = self
            .0
            .iter()
            .filter(|(b, f)| {
                if b == a {
                    e = *f;
                    false
                } else {
                    true
                }
            })
            .cloned()
            .collect();
        (e, Monomial(rest))
    }
}

impl Ord for Monomial {
    // graded lex; among equal degree, the larger exponent on the smallest
    // differing atom wins
    fn cmp(&self, other: &Self) -> Ordering {
        match self.degree().cmp(&other.degree()) {
            Ordering::Equal => {}
            o => return o,
        }
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].0.cmp(&other.0[j].0) {
                Ordering::Less => return Ordering::Greater,
                Ordering::Greater => return Ordering::Less,
                Ordering::Equal => match self.0[i].1.cmp(&other.0[j].1) {
                    Ordering::Equal => {
                        i += 1;
                        j += 1;
                    }
                    o => return o,
                },
            }
        }
        (self.0.len() - i).cmp(&(other.0.len() - j))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Poly {
    pub terms: BTreeMap<Monomial, Coeff>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn one() -> Self {
        Poly::constant(Coeff::one())
    }

    pub fn constant(c: Coeff) -> Self {
        let mut p = Poly::zero();
        if !c.is_zero() {
            p.terms.insert(Monomial::one(), c);
        }
        p
    }

    pub fn from_atom(a: Atom) -> Self {
        Poly::term(Monomial::atom(a), Coeff::one())
    }

    pub fn term(m: Monomial, c: Coeff) -> Self {
        let mut p = Poly::zero();
        if !c.is_zero() {
            p.terms.insert(m, c);
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.terms.len() == 1
            && self
                .terms
                .iter()
                .next()
                .map(|(m, c)| m.is_one() && c.is_one())
                .unwrap()
    }

    pub fn as_constant(&self) -> Option<Coeff> {
        match self.terms.len() {
            0 => Some(Coeff::zero()),
            1 => {
                let (m, c) = self.terms.iter().next().unwrap();
                m.is_one().then(|| c.clone())
            }
            _ => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.as_constant().is_some()
    }

    pub fn leading(&self) -> Option<(&Monomial, &Coeff)> {
        self.terms.iter().next_back()
    }

    pub fn leading_coeff(&self) -> Coeff {
        self.leading().map(|(_, c)| c.clone()).unwrap_or_else(Coeff::zero)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn atoms(&self) -> BTreeSet<Atom> {
        self.terms
            .keys()
            .flat_map(|m| m.0.iter().map(|(a, _)| a.clone()))
            .collect()
    }

    pub fn has_transcendental(&self) -> bool {
        self.terms
            .keys()
            .any(|m| m.0.iter().any(|(a, _)| a.is_transcendental()))
    }

    fn add_term(&mut self, m: Monomial, c: Coeff) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = o.get() + &c;
                if s.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }

    pub fn neg(&self) -> Poly {
        Poly {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                out.add_term(m1.mul(m2), c1 * c2);
            }
        }
        out
    }

    pub fn scale(&self, c: &Coeff) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly {
            terms: self.terms.iter().map(|(m, d)| (m.clone(), d * c)).collect(),
        }
    }

    pub fn mul_term(&self, m: &Monomial, c: &Coeff) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly {
            terms: self.terms.iter().map(|(n, d)| (n.mul(m), d * c)).collect(),
        }
    }

    pub fn pow(&self, mut e: u32) -> Poly {
        let mut base = self.clone();
        let mut acc = Poly::one();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        acc
    }

    /// Scale so the leading coefficient is 1.
    pub fn monic(&self) -> Poly {
        match self.leading() {
            None => Poly::zero(),
            Some((_, c)) if c.is_one() => self.clone(),
            Some((_, c)) => self.scale(&c.recip()),
        }
    }

    pub fn degree_in(&self, a: &Atom) -> u32 {
        self.terms.keys().map(|m| m.exponent(a)).max().unwrap_or(0)
    }

    /// View as a univariate polynomial in `a`.
    pub fn coefficients_in(&self, a: &Atom) -> BTreeMap<u32, Poly> {
        let mut out: BTreeMap<u32, Poly> = BTreeMap::new();
        for (m, c) in &self.terms {
            let (e, rest) = m.split(a);
            out.entry(e).or_default().add_term(rest, c.clone());
        }
        out.retain(|_, p| !p.is_zero());
        out
    }

    pub fn from_coefficients(a: &Atom, coeffs: &BTreeMap<u32, Poly>) -> Poly {
        let mut out = Poly::zero();
        for (e, p) in coeffs {
            let m = if *e == 0 {
                Monomial::one()
            } else {
                Monomial(vec![(a.clone(), *e)])
            };
            for (n, c) in &p.terms {
                out.add_term(n.mul(&m), c.clone());
            }
        }
        out
    }

    /// Exact quotient `self / d`, or `None` when `d` does not divide `self`.
    pub fn exact_div(&self, d: &Poly) -> Option<Poly> {
        if d.is_zero() {
            return None;
        }
        if let Some(c) = d.as_constant() {
            return Some(self.scale(&c.recip()));
        }
        let (lm, lc) = d.leading().map(|(m, c)| (m.clone(), c.clone()))?;
        let mut r = self.clone();
        let mut q = Poly::zero();
        while let Some((rm, rc)) = r.leading().map(|(m, c)| (m.clone(), c.clone())) {
            let m = rm.div(&lm)?;
            let c = rc / &lc;
            r = r.sub(&d.mul_term(&m, &c));
            q.add_term(m, c);
        }
        Some(q)
    }

    /// Gcd of the integer-scaled coefficients; used to keep intermediate
    /// remainders small.
    fn numeric_primitive(&self) -> Poly {
        if self.is_zero() {
            return Poly::zero();
        }
        let mut den = BigInt::one();
        for c in self.terms.values() {
            den = num_integer::Integer::lcm(&den, c.denom());
        }
        let mut g = BigInt::zero();
        for c in self.terms.values() {
            let v = (c * BigRational::from_integer(den.clone())).to_integer();
            g = num_integer::Integer::gcd(&g, &v);
        }
        let mut factor = BigRational::new(den, g);
        if self.leading_coeff().is_negative() {
            factor = -factor;
        }
        self.scale(&factor)
    }

    fn content_in(&self, a: &Atom) -> Poly {
        let mut g = Poly::zero();
        for p in self.coefficients_in(a).values() {
            g = gcd(&g, p);
            if g.is_constant() {
                return Poly::one();
            }
        }
        g
    }

    pub fn substitute_atom(&self, a: &Atom, value: &Poly) -> Poly {
        let coeffs = self.coefficients_in(a);
        let mut out = Poly::zero();
        let mut power = Poly::one();
        let mut current = 0;
        for (e, p) in coeffs {
            while current < e {
                power = power.mul(value);
                current += 1;
            }
            out = out.add(&p.mul(&power));
        }
        out
    }
}

fn pseudo_rem(f: &Poly, g: &Poly, a: &Atom) -> Poly {
    let dg = g.degree_in(a);
    let gc = g.coefficients_in(a);
    let lg = gc.get(&dg).cloned().unwrap_or_else(Poly::one);
    let mut r = f.clone();
    loop {
        if r.is_zero() {
            return r;
        }
        let dr = r.degree_in(a);
        if dr < dg {
            return r;
        }
        let lr = r.coefficients_in(a).remove(&dr).unwrap();
        let shift = if dr > dg {
            Monomial(vec![(a.clone(), dr - dg)])
        } else {
            Monomial::one()
        };
        r = r
            .mul(&lg)
            .sub(&g.mul(&lr).mul_term(&shift, &Coeff::one()))
            .numeric_primitive();
    }
}

const PRIME: u64 = (1 << 61) - 1;

fn mul_mod(a: u64, b: u64) -> u64 {
    ((a as u128 * b as u128) % PRIME as u128) as u64
}

fn pow_mod(mut a: u64, mut e: u64) -> u64 {
    let mut r = 1;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, a);
        }
        a = mul_mod(a, a);
        e >>= 1;
    }
    r
}

fn inv_mod(a: u64) -> u64 {
    pow_mod(a, PRIME - 2)
}

fn int_mod(n: &BigInt) -> u64 {
    use num_traits::ToPrimitive;
    let p = BigInt::from(PRIME);
    (((n % &p) + &p) % &p).to_u64().expect("reduced")
}

/// `c mod p`, unless `p` divides the denominator.
fn coeff_mod(c: &Coeff) -> Option<u64> {
    let d = int_mod(c.denom());
    (d != 0).then(|| mul_mod(int_mod(c.numer()), inv_mod(d)))
}

/// Dense coefficients mod p, lowest first, of `p` as a polynomial in `v`
/// with every other atom replaced by its value.
fn univariate_image(p: &Poly, v: &Atom, values: &BTreeMap<&Atom, u64>) -> Option<Vec<u64>> {
    let mut out = vec![0; p.degree_in(v) as usize + 1];
    for (m, c) in &p.terms {
        let mut t = coeff_mod(c)?;
        let mut k = 0;
        for (a, e) in &m.0 {
            if a == v {
                k = *e as usize;
            } else {
                t = mul_mod(t, pow_mod(values[a], *e as u64));
            }
        }
        out[k] = (out[k] + t) % PRIME;
    }
    Some(out)
}

fn trim(p: &mut Vec<u64>) {
    while p.last() == Some(&0) {
        p.pop();
    }
}

/// Degree of the gcd of two dense univariate polynomials mod p.
fn univariate_gcd_degree(mut a: Vec<u64>, mut b: Vec<u64>) -> usize {
    trim(&mut a);
    trim(&mut b);
    while !b.is_empty() {
        let lead_inv = inv_mod(b[b.len() - 1]);
        while a.len() >= b.len() {
            let f = mul_mod(a[a.len() - 1], lead_inv);
            let off = a.len() - b.len();
            for (i, c) in b.iter().enumerate() {
                a[off + i] = (a[off + i] + PRIME - mul_mod(f, *c)) % PRIME;
            }
            trim(&mut a);
            if a.is_empty() {
                break;
            }
        }
        std::mem::swap(&mut a, &mut b);
    }
    a.len().saturating_sub(1)
}

/// True when `gcd(a, b) = 1` is certified by univariate images mod p: for
/// each shared atom `v`, the other atoms are set to values that keep both
/// degrees in `v`, and the image gcd is constant, so the true gcd has
/// degree zero in `v`.
fn coprime_by_images(a: &Poly, b: &Poly, aa: &BTreeSet<Atom>, ba: &BTreeSet<Atom>) -> bool {
    let atoms: Vec<&Atom> = aa.union(ba).collect();
    aa.intersection(ba).all(|v| {
        (0..3u64).any(|attempt| {
            let values: BTreeMap<&Atom, u64> = atoms
                .iter()
                .enumerate()
                .map(|(i, a)| (*a, pow_mod(3 + attempt, 17 + 5 * i as u64)))
                .collect();
            let (Some(ia), Some(ib)) = (univariate_image(a, v, &values), univariate_image(b, v, &values)) else {
                return false;
            };
            let keeps = |img: &[u64]| img.last().is_some_and(|c| *c != 0);
            keeps(&ia) && keeps(&ib) && univariate_gcd_degree(ia, ib) == 0
        })
    })
}

/// Greatest common divisor, normalized to a monic polynomial (the zero
/// polynomial only when both inputs are zero).
pub fn gcd(a: &Poly, b: &Poly) -> Poly {
    if a.is_zero() {
        return b.monic();
    }
    if b.is_zero() {
        return a.monic();
    }
    if a.is_constant() || b.is_constant() {
        return Poly::one();
    }
    if a == b {
        return a.monic();
    }
    if a.len() == 1 || b.len() == 1 {
        // a divisor of a single term is a single term
        let mut ms = a.terms.keys().chain(b.terms.keys());
        let first = ms.next().expect("nonzero").clone();
        return Poly::term(ms.fold(first, |g, m| g.gcd(m)), Coeff::one());
    }
    let aa = a.atoms();
    let ba = b.atoms();
    if coprime_by_images(a, b, &aa, &ba) {
        return Poly::one();
    }
    if let Some(only) = aa.symmetric_difference(&ba).next().cloned() {
        return if aa.contains(&only) {
            gcd(&a.content_in(&only), b)
        } else {
            gcd(a, &b.content_in(&only))
        };
    }
    let v = aa.iter().next().unwrap().clone();
    let ca = a.content_in(&v);
    let cb = b.content_in(&v);
    let pa = a.exact_div(&ca).expect("content divides");
    let pb = b.exact_div(&cb).expect("content divides");
    let c = gcd(&ca, &cb);
    let (mut f, mut g) = if pa.degree_in(&v) >= pb.degree_in(&v) {
        (pa, pb)
    } else {
        (pb, pa)
    };
    let g_v = loop {
        if g.degree_in(&v) == 0 {
            break Poly::one();
        }
        let r = pseudo_rem(&f, &g, &v);
        if r.is_zero() {
            break g;
        }
        f = g;
        let cr = r.content_in(&v);
        g = r.exact_div(&cr).expect("content divides");
    };
    let cg = g_v.content_in(&v);
    let g_v = g_v.exact_div(&cg).expect("content divides");
    c.mul(&g_v).monic()
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        let mut first = true;
        for (m, c) in self.terms.iter().rev() {
            let neg = c.is_negative();
            let abs = c.abs();
            if first {
                if neg {
                    f.write_str("-")?;
                }
            } else {
                f.write_str(if neg { " - " } else { " + " })?;
            }
            first = false;
            let mut parts: Vec<String> = Vec::new();
            if !abs.is_one() || m.is_one() {
                parts.push(abs.to_string());
            }
            for (a, e) in &m.0 {
                if *e == 1 {
                    parts.push(a.to_string());
                } else {
                    parts.push(format!("{a}^{e}"));
                }
            }
            f.write_str(&parts.join("*"))?;
        }
        Ok(())
    }
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}
