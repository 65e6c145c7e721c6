//! Differentials as rows over K(δ], the mixed-partials exactness test, and
//! two-variable Pfaffian integration.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{Atom, DelayedVar, Expr, Poly, Sym};
use crate::ore::{SkewMatrix, SkewPoly};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormsError {
    #[error("{0} is a forward shift; differentials need causal arguments")]
    ForwardShift(DelayedVar),
    #[error("{0} is not one of the declared coordinates")]
    Undeclared(DelayedVar),
}

/// A row `dλ = L(δ) dx` together with its coordinate order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OneForm {
    pub row: SkewMatrix,
    pub vars: Vec<Sym>,
}

impl OneForm {
    pub fn entry(&self, i: usize) -> &SkewPoly {
        &self.row[(0, i)]
    }

    pub fn entries(&self) -> Vec<SkewPoly> {
        self.row.row(0).to_vec()
    }

    pub fn is_zero(&self) -> bool {
        self.row.is_zero()
    }

    /// The covector over individual delayed atoms: `dx_i(-j) ↦ a_ij`.
    pub fn expand(&self) -> BTreeMap<DelayedVar, Expr> {
        let mut out = BTreeMap::new();
        for (i, v) in self.vars.iter().enumerate() {
            for (j, c) in self.entry(i).coeffs() {
                out.insert(DelayedVar::new(*v, *j as i32), c.clone());
            }
        }
        out
    }
}

/// `L_i = Σ_j ∂λ/∂x_i(-j) δ^j`.
pub fn differential(lambda: &Expr, vars: &[Sym]) -> Result<OneForm, FormsError> {
    let mut entries = vec![SkewPoly::zero(); vars.len()];
    for v in lambda.vars() {
        let Some(i) = vars.iter().position(|s| *s == v.var) else {
            return Err(FormsError::Undeclared(v));
        };
        if v.shift < 0 {
            return Err(FormsError::ForwardShift(v));
        }
        let term = SkewPoly::monomial(lambda.partial(&v), v.shift as u32);
        entries[i] = &entries[i] + &term;
    }
    Ok(OneForm {
        row: SkewMatrix::row_vector(entries),
        vars: vars.to_vec(),
    })
}

/// Like [`differential`], with atoms of undeclared variables treated as
/// frozen parameters.
pub fn differential_wrt(lambda: &Expr, vars: &[Sym]) -> Result<OneForm, FormsError> {
    let mut entries = vec![SkewPoly::zero(); vars.len()];
    for v in lambda.vars() {
        let Some(i) = vars.iter().position(|s| *s == v.var) else {
            continue;
        };
        if v.shift < 0 {
            return Err(FormsError::ForwardShift(v));
        }
        let term = SkewPoly::monomial(lambda.partial(&v), v.shift as u32);
        entries[i] = &entries[i] + &term;
    }
    Ok(OneForm {
        row: SkewMatrix::row_vector(entries),
        vars: vars.to_vec(),
    })
}

/// Closedness of the expanded covector: `∂a_u/∂v = ∂a_v/∂u` for every pair
/// of atoms, counting atoms that only occur inside coefficients.
pub fn d_exactness(omega: &OneForm) -> bool {
    let cov = omega.expand();
    let mut atoms: BTreeSet<DelayedVar> = cov.keys().copied().collect();
    for c in cov.values() {
        atoms.extend(c.vars().into_iter().filter(|v| omega.vars.contains(&v.var)));
    }
    let zero = Expr::zero();
    let atoms: Vec<DelayedVar> = atoms.into_iter().collect();
    for (k, u) in atoms.iter().enumerate() {
        for v in &atoms[k + 1..] {
            let au = cov.get(u).unwrap_or(&zero);
            let av = cov.get(v).unwrap_or(&zero);
            if !(&au.partial(v) - &av.partial(u)).is_zero() {
                return false;
            }
        }
    }
    true
}

/// Find `λ̂(v1, v2)` with `dλ̂ ∝ a dv1 + b dv2`, all other atoms frozen.
#[derive(Clone, Debug, Serialize)]
pub struct PfaffianProblem {
    pub a: Expr,
    pub b: Expr,
    pub v1: DelayedVar,
    pub v2: DelayedVar,
    pub params: Vec<DelayedVar>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FactorAttempt {
    pub family: String,
    pub factor: Option<String>,
    pub residual: String,
}

#[derive(Clone, Debug, Error, Serialize)]
#[error("no integrating factor found after {} attempts", attempts.len())]
pub struct IntegrationFailure {
    pub attempts: Vec<FactorAttempt>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PfaffianSolution {
    pub lambda_hat: Expr,
    pub factor: Expr,
    pub family: String,
}

#[derive(Clone, Copy, Debug)]
pub struct PfaffianOptions {
    /// Exponent range for the monomial family.
    pub factor_box: i32,
}

impl Default for PfaffianOptions {
    fn default() -> Self {
        PfaffianOptions { factor_box: 3 }
    }
}

pub fn integrate_pfaffian(
    p: &PfaffianProblem,
    opts: PfaffianOptions,
) -> Result<PfaffianSolution, IntegrationFailure> {
    let (v1, v2) = (p.v1, p.v2);
    if p.b.is_zero() {
        return Ok(PfaffianSolution {
            lambda_hat: Expr::var(v1),
            factor: p.a.recip(),
            family: "coordinate".into(),
        });
    }
    if p.a.is_zero() {
        return Ok(PfaffianSolution {
            lambda_hat: Expr::var(v2),
            factor: p.b.recip(),
            family: "coordinate".into(),
        });
    }
    // work with dv1 + r dv2
    let r = &p.b / &p.a;
    let one = Expr::one();
    let mut attempts = Vec::new();

    let try_factor = |family: &str, mu: Option<Expr>, attempts: &mut Vec<FactorAttempt>| {
        let Some(mu) = mu else {
            attempts.push(FactorAttempt {
                family: family.into(),
                factor: None,
                residual: "no factor of this family".into(),
            });
            return None;
        };
        let ma = mu.clone();
        let mb = &mu * &r;
        let residual = &ma.partial(&v2) - &mb.partial(&v1);
        if !residual.is_zero() {
            attempts.push(FactorAttempt {
                family: family.into(),
                factor: Some(mu.to_string()),
                residual: residual.to_string(),
            });
            return None;
        }
        match potential(&ma, &mb, v1, v2) {
            Some(lam) => {
                let lam = lam.normalize_leading();
                let check = &(&one * &lam.partial(&v2)) - &(&r * &lam.partial(&v1));
                if check.is_zero() && !lam.is_zero() {
                    Some(PfaffianSolution {
                        lambda_hat: lam,
                        factor: &mu / &p.a,
                        family: family.into(),
                    })
                } else {
                    attempts.push(FactorAttempt {
                        family: family.into(),
                        factor: Some(mu.to_string()),
                        residual: format!("round trip failed: {check}"),
                    });
                    None
                }
            }
            None => {
                attempts.push(FactorAttempt {
                    family: family.into(),
                    factor: Some(mu.to_string()),
                    residual: "exact but outside the antiderivative table".into(),
                });
                None
            }
        }
    };

    let den = Expr::from_poly(r.denom().clone());
    if !den.is_one() {
        if let Some(s) = try_factor("denominator", Some(den), &mut attempts) {
            return Ok(s);
        }
    }
    if let Some(s) = try_factor("unit", Some(Expr::one()), &mut attempts) {
        return Ok(s);
    }
    // μ(v2): μ'/μ = ∂r/∂v1 must be free of v1; μ(v1): μ'/μ = -(∂r/∂v1)/r
    // free of v2
    let g2 = r.partial(&v1);
    let mu2 = (!g2.mentions(&v1))
        .then(|| antiderivative(&g2, v2).map(|g| exp_of(&g)))
        .flatten();
    if let Some(s) = try_factor("mu(v2)", mu2, &mut attempts) {
        return Ok(s);
    }
    let h1 = -(&r.partial(&v1) / &r);
    let mu1 = (!h1.mentions(&v2))
        .then(|| antiderivative(&h1, v1).map(|g| exp_of(&g)))
        .flatten();
    if let Some(s) = try_factor("mu(v1)", mu1, &mut attempts) {
        return Ok(s);
    }
    let k = opts.factor_box;
    let mut residuals = 0;
    for total in 1..=2 * k {
        for e1 in -k..=k {
            for e2 in -k..=k {
                if e1.abs() + e2.abs() != total {
                    continue;
                }
                let mu = &Expr::var(v1).pow(e1) * &Expr::var(v2).pow(e2);
                let ma = mu.clone();
                let mb = &mu * &r;
                let res = &ma.partial(&v2) - &mb.partial(&v1);
                if !res.is_zero() {
                    residuals += 1;
                    continue;
                }
                if let Some(s) = try_factor("monomial", Some(mu), &mut attempts) {
                    return Ok(s);
                }
            }
        }
    }
    attempts.push(FactorAttempt {
        family: "monomial".into(),
        factor: Some(format!("v1^p*v2^q, |p|,|q| <= {k}")),
        residual: format!("{residuals} candidates not closed"),
    });
    Err(IntegrationFailure { attempts })
}

/// `∫ma dv1 + ∫(mb − ∂/∂v2 ∫ma dv1) dv2` for a closed form.
fn potential(ma: &Expr, mb: &Expr, v1: DelayedVar, v2: DelayedVar) -> Option<Expr> {
    let f1 = antiderivative(ma, v1)?;
    let rest = mb - &f1.partial(&v2);
    if rest.mentions(&v1) {
        return None;
    }
    let f2 = antiderivative(&rest, v2)?;
    Some(&f1 + &f2)
}

/// Coefficient list of `p` as a polynomial in `v`, coefficients in K.
fn univariate(p: &Poly, v: DelayedVar) -> Option<BTreeMap<u32, Expr>> {
    let a = Atom::Var(v);
    if p.atoms().iter().any(|b| b.is_transcendental() && b.mentions(&v)) {
        return None;
    }
    Some(
        p.coefficients_in(&a)
            .into_iter()
            .map(|(e, c)| (e, Expr::from_poly(c)))
            .collect(),
    )
}

fn power(v: DelayedVar, e: i32) -> Expr {
    Expr::var(v).pow(e)
}

/// Antiderivative in one variable over the table: polynomial parts,
/// monomial denominators, and `1/linear → ln`.
pub fn antiderivative(f: &Expr, v: DelayedVar) -> Option<Expr> {
    if !f.mentions(&v) {
        return Some(f * &Expr::var(v));
    }
    let num = univariate(f.numer(), v)?;
    let den = univariate(f.denom(), v)?;
    let rat = |n: i64| Expr::rational(BigRational::from_integer(BigInt::from(n)));
    let int_power = |c: &Expr, k: i32| -> Expr {
        if k == -1 {
            c * &Expr::ln(&Expr::var(v))
        } else {
            &(c * &power(v, k + 1)) / &rat(k as i64 + 1)
        }
    };
    if den.len() == 1 {
        let (m, d) = den.iter().next().unwrap();
        let mut acc = Expr::zero();
        for (k, c) in &num {
            acc = &acc + &int_power(&(c / d), *k as i32 - *m as i32);
        }
        return Some(acc);
    }
    let deg_den = *den.keys().next_back().unwrap();
    if deg_den != 1 {
        return None;
    }
    // num = q·den + rem with rem free of v
    let alpha = den.get(&1).cloned().unwrap_or_else(Expr::zero);
    let beta = den.get(&0).cloned().unwrap_or_else(Expr::zero);
    let mut work: BTreeMap<u32, Expr> = num.clone();
    let mut quot: BTreeMap<u32, Expr> = BTreeMap::new();
    while let Some((&k, c)) = work.iter().next_back() {
        if k == 0 {
            break;
        }
        let t = c / &alpha;
        let c_prev = work.get(&(k - 1)).cloned().unwrap_or_else(Expr::zero);
        work.remove(&k);
        let next = &c_prev - &(&t * &beta);
        if next.is_zero() {
            work.remove(&(k - 1));
        } else {
            work.insert(k - 1, next);
        }
        quot.insert(k - 1, t);
    }
    let rem = work.get(&0).cloned().unwrap_or_else(Expr::zero);
    let mut acc = Expr::zero();
    for (k, c) in &quot {
        acc = &acc + &int_power(c, *k as i32);
    }
    if !rem.is_zero() {
        let lin = &(&alpha * &Expr::var(v)) + &beta;
        acc = &acc + &(&(&rem / &alpha) * &Expr::ln(&lin.normalize_leading()));
    }
    Some(acc)
}

/// `exp(g)`, folding integer multiples of logarithms into powers.
fn exp_of(g: &Expr) -> Expr {
    if !g.is_polynomial() {
        return Expr::exp(g);
    }
    let mut factor = Expr::one();
    let mut rest = Poly::zero();
    for (m, c) in &g.numer().terms {
        let is_log = m.0.len() == 1 && m.0[0].1 == 1 && matches!(m.0[0].0, Atom::Ln(_));
        if is_log && c.is_integer() {
            if let (Atom::Ln(arg), Some(k)) = (&m.0[0].0, c.to_integer().to_i32()) {
                factor = &factor * &arg.pow(k);
                continue;
            }
        }
        rest = rest.add(&Poly::term(m.clone(), c.clone()));
    }
    if rest.is_zero() {
        factor
    } else if rest.as_constant().is_some() {
        // constant multiples of μ are irrelevant
        factor
    } else {
        &factor * &Expr::exp(&Expr::from_poly(rest))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_expr, Context};
    use crate::ore::SkewPoly;

    fn ctx() -> Context {
        Context::new(&["x1", "x2", "x3"], &["e1", "e2"])
    }

    fn e(t: &str) -> Expr {
        parse_expr(t, &ctx()).unwrap()
    }

    fn sp(t: &str) -> SkewPoly {
        SkewPoly::parse(t, &ctx()).unwrap()
    }

    fn syms(names: &[&str]) -> Vec<Sym> {
        names.iter().map(|n| Sym::new(n)).collect()
    }

    #[test]
    fn differential_of_b() {
        let b = e("x1*x2[-1] + x1[-1]*x2*x2[-2] + e2");
        let w = differential(&b, &syms(&["x1", "x2"])).unwrap();
        assert_eq!(w.entry(0), &sp("x2[-1] + x2*x2[-2]*d"));
        assert_eq!(
            w.entry(1),
            &sp("x1[-1]*x2[-2] + x1*d + x1[-1]*x2*d^2")
        );
    }

    #[test]
    fn differential_of_constant_and_example_three() {
        let w = differential(&e("e1"), &syms(&["x1", "x2"])).unwrap();
        assert!(w.is_zero());
        let w = differential(&e("x1[-1] + x2*x3[-2]"), &syms(&["x1", "x2", "x3"])).unwrap();
        assert_eq!(w.entries(), vec![sp("d"), sp("x3[-2]"), sp("x2*d^2")]);
    }

    #[test]
    fn exactness() {
        let w = differential(&e("x1*x2[-1]"), &syms(&["x1", "x2"])).unwrap();
        assert!(d_exactness(&w));
        let closed = OneForm {
            row: SkewMatrix::row_vector(vec![sp("x2[-2]*d"), sp("x1[-1]*d^2")]),
            vars: syms(&["x1", "x2"]),
        };
        assert!(d_exactness(&closed));
        let open = OneForm {
            row: SkewMatrix::row_vector(vec![sp("d"), sp("(x1[-1]/x2[-2])*d^2")]),
            vars: syms(&["x1", "x2"]),
        };
        assert!(!d_exactness(&open));
    }

    fn dv(n: &str, s: i32) -> DelayedVar {
        DelayedVar::named(n, s)
    }

    #[test]
    fn pfaffian_examples() {
        let p = PfaffianProblem {
            a: Expr::one(),
            b: e("x1[-1]/x2[-2]"),
            v1: dv("x1", 1),
            v2: dv("x2", 2),
            params: vec![],
        };
        let s = integrate_pfaffian(&p, PfaffianOptions::default()).unwrap();
        assert_eq!(s.lambda_hat, e("x1[-1]*x2[-2]"));
        assert_eq!(s.factor, e("x2[-2]"));

        let p = PfaffianProblem {
            a: Expr::one(),
            b: e("x2[-1]/x3[-1]"),
            v1: dv("x2", 1),
            v2: dv("x3", 1),
            params: vec![],
        };
        let s = integrate_pfaffian(&p, PfaffianOptions::default()).unwrap();
        assert_eq!(s.lambda_hat, e("x2[-1]*x3[-1]"));

        let p = PfaffianProblem {
            a: Expr::one(),
            b: Expr::zero(),
            v1: dv("x1", 0),
            v2: dv("x2", 0),
            params: vec![],
        };
        assert_eq!(
            integrate_pfaffian(&p, PfaffianOptions::default()).unwrap().lambda_hat,
            e("x1")
        );
    }

    #[test]
    fn logarithmic_potential() {
        // dv1 + dv2/(v2 + 1) -> v1 + ln(v2 + 1)
        let p = PfaffianProblem {
            a: e("x1 + 1"),
            b: Expr::one(),
            v1: dv("x2", 0),
            v2: dv("x1", 0),
            params: vec![],
        };
        let s = integrate_pfaffian(&p, PfaffianOptions::default()).unwrap();
        let lam = &s.lambda_hat;
        let check = &(&p.a * &lam.partial(&p.v2)) - &(&p.b * &lam.partial(&p.v1));
        assert!(check.is_zero());
    }

    #[test]
    fn failure_lists_families() {
        // exp(v1 v2) dv1 + dv2 admits no factor in the searched classes
        let p = PfaffianProblem {
            a: Expr::exp(&e("x1*x2")),
            b: e("x1 + x2^2"),
            v1: dv("x1", 0),
            v2: dv("x2", 0),
            params: vec![],
        };
        let err = integrate_pfaffian(&p, PfaffianOptions::default()).unwrap_err();
        let families: BTreeSet<&str> = err.attempts.iter().map(|a| a.family.as_str()).collect();
        assert!(families.len() >= 4, "{families:?}");
    }

    #[test]
    fn antiderivatives() {
        let v = dv("x1", 0);
        assert_eq!(antiderivative(&e("3*x1^2 + x2"), v).unwrap(), e("x1^3 + x2*x1"));
        assert_eq!(
            antiderivative(&e("1/x1"), v).unwrap(),
            Expr::ln(&e("x1"))
        );
        let f = e("(x1 + 2)/(x1 + 1)");
        let g = antiderivative(&f, v).unwrap();
        assert!((&g.partial(&v) - &f).is_zero());
        assert!(antiderivative(&e("1/(x1^2 + 1)"), v).is_none());
    }
}
