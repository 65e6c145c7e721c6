//! Euclidean row and column elimination over K(δ].

use serde::Serialize;

use super::{OreError, SkewMatrix, SkewPoly};
use crate::expr::zero::ProbabilisticScope;
use crate::expr::Expr;

/// A pair of square matrices with `a·b = b·a = I`.
#[derive(Clone, Debug, Serialize)]
pub struct UnimodularCertificate {
    pub a: SkewMatrix,
    pub b: SkewMatrix,
    pub probabilistic: bool,
}

impl UnimodularCertificate {
    /// Check both products and record whether the check was probabilistic.
    pub fn new_verified(a: SkewMatrix, b: SkewMatrix) -> Result<Self, OreError> {
        let mut cert = UnimodularCertificate {
            a,
            b,
            probabilistic: false,
        };
        let scope = ProbabilisticScope::enter();
        let ok = cert.check();
        cert.probabilistic = scope.used();
        if ok {
            Ok(cert)
        } else {
            Err(OreError::Certificate(format!(
                "{} · {} is not the identity",
                cert.a, cert.b
            )))
        }
    }

    fn check(&self) -> bool {
        self.a.is_square()
            && self.b.is_square()
            && self.a.rows() == self.b.rows()
            && self.a.mul(&self.b).is_identity()
            && self.b.mul(&self.a).is_identity()
    }

    pub fn verify(&self) -> bool {
        self.check()
    }

    pub fn size(&self) -> usize {
        self.a.rows()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RowCompression {
    /// `q.a` is the accumulated row transform `Q`, `q.b` its inverse.
    pub q: UnimodularCertificate,
    /// The nonzero rows of `Q·M`.
    pub m1: SkewMatrix,
    pub rank: usize,
    /// `Q·M` in full, zero rows at the bottom.
    pub reduced: SkewMatrix,
}

#[derive(Debug)]
enum ElimError {
    Ore(OreError),
    DegreeBound(u32),
}

impl From<OreError> for ElimError {
    fn from(e: OreError) -> Self {
        ElimError::Ore(e)
    }
}

struct RowEchelon {
    a: SkewMatrix,
    q: SkewMatrix,
    qinv: SkewMatrix,
    rank: usize,
}

fn pivot_key(p: &SkewPoly, idx: usize) -> (u32, usize, usize) {
    (p.degree().unwrap_or(0), p.size(), idx)
}

fn check_bound(m: &SkewMatrix, bound: Option<u32>) -> Result<(), ElimError> {
    match bound {
        Some(b) if m.max_degree() > b => Err(ElimError::DegreeBound(m.max_degree())),
        _ => Ok(()),
    }
}

fn row_echelon(m: &SkewMatrix, bound: Option<u32>) -> Result<RowEchelon, ElimError> {
    let rows = m.rows();
    let mut a = m.clone();
    let mut q = SkewMatrix::identity(rows);
    let mut qinv = SkewMatrix::identity(rows);
    let mut r = 0;
    for j in 0..m.cols() {
        if r == rows {
            break;
        }
        loop {
            let cands: Vec<usize> = (r..rows).filter(|&i| !a[(i, j)].is_zero()).collect();
            let Some(&piv) = cands.iter().min_by_key(|&&i| pivot_key(&a[(i, j)], i)) else {
                break;
            };
            if cands.len() == 1 {
                a.swap_rows(piv, r);
                q.swap_rows(piv, r);
                qinv.swap_cols(piv, r);
                r += 1;
                break;
            }
            for &i in cands.iter().filter(|&&i| i != piv) {
                let (quot, _) = a[(i, j)].left_divide(&a[(piv, j)])?;
                a.row_sub(i, &quot, piv);
                q.row_sub(i, &quot, piv);
                qinv.col_add(piv, i, &quot);
            }
            check_bound(&q, bound)?;
        }
    }
    Ok(RowEchelon {
        a,
        q,
        qinv,
        rank: r,
    })
}

/// Unimodular `Q` with `Q·M = [M1; 0]`, `M1` of full row rank.
pub fn row_compress(m: &SkewMatrix) -> Result<RowCompression, OreError> {
    let ech = row_echelon(m, None).map_err(|e| match e {
        ElimError::Ore(e) => e,
        ElimError::DegreeBound(_) => unreachable!("unbounded elimination"),
    })?;
    let q = UnimodularCertificate::new_verified(ech.q, ech.qinv)?;
    let idx: Vec<usize> = (0..ech.rank).collect();
    let m1 = ech.a.select_rows(&idx);
    Ok(RowCompression {
        q,
        m1,
        rank: ech.rank,
        reduced: ech.a,
    })
}

pub fn rank(m: &SkewMatrix) -> Result<usize, OreError> {
    match row_echelon(m, None) {
        Ok(e) => Ok(e.rank),
        Err(ElimError::Ore(e)) => Err(e),
        Err(ElimError::DegreeBound(_)) => unreachable!("unbounded elimination"),
    }
}

/// Why a square matrix has no polynomial inverse.
#[derive(Clone, Debug, Serialize)]
pub enum NotUnimodularWitness {
    NotSquare { rows: usize, cols: usize },
    /// A nonzero row combination annihilating the matrix.
    RankDeficient { rank: usize, combination: Vec<SkewPoly> },
    /// `transform·M` is upper triangular with a pivot of positive degree;
    /// in the fraction field its inverse has `1/pivot` there, which has no
    /// polynomial form.
    NonUnitPivot {
        index: usize,
        pivot: SkewPoly,
        transform: UnimodularCertificate,
    },
}

impl NotUnimodularWitness {
    /// Replay the obstruction against `m`.
    pub fn check(&self, m: &SkewMatrix) -> bool {
        match self {
            NotUnimodularWitness::NotSquare { rows, cols } => {
                m.rows() == *rows && m.cols() == *cols && rows != cols
            }
            NotUnimodularWitness::RankDeficient { combination, .. } => {
                let row = SkewMatrix::row_vector(combination.clone());
                !row.is_zero() && row.mul(m).is_zero()
            }
            NotUnimodularWitness::NonUnitPivot {
                index,
                pivot,
                transform,
            } => {
                if !transform.verify() {
                    return false;
                }
                let t = transform.a.mul(m);
                let n = t.rows();
                let triangular = (0..n).all(|i| (0..i).all(|j| t[(i, j)].is_zero()))
                    && (0..n).all(|i| !t[(i, i)].is_zero());
                triangular && t[(*index, *index)] == *pivot && pivot.degree().unwrap_or(0) > 0
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub enum InverseOutcome {
    Unimodular(UnimodularCertificate),
    NotUnimodular(NotUnimodularWitness),
    Inconclusive { reason: String },
}

impl InverseOutcome {
    pub fn certificate(&self) -> Option<&UnimodularCertificate> {
        match self {
            InverseOutcome::Unimodular(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_unimodular(&self) -> bool {
        matches!(self, InverseOutcome::Unimodular(_))
    }
}

pub fn default_degree_bound(m: &SkewMatrix) -> u32 {
    m.rows().max(m.cols()) as u32 * (1 + m.max_degree())
}

/// Two-sided inverse by triangularization and back substitution.
pub fn try_inverse(m: &SkewMatrix, degree_bound: Option<u32>) -> InverseOutcome {
    if !m.is_square() {
        return InverseOutcome::NotUnimodular(NotUnimodularWitness::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let n = m.rows();
    let bound = degree_bound.unwrap_or_else(|| default_degree_bound(m));
    let ech = match row_echelon(m, Some(bound)) {
        Ok(e) => e,
        Err(ElimError::DegreeBound(d)) => {
            return InverseOutcome::Inconclusive {
                reason: format!("intermediate degree {d} exceeds bound {bound}"),
            }
        }
        Err(ElimError::Ore(e)) => {
            return InverseOutcome::Inconclusive {
                reason: e.to_string(),
            }
        }
    };
    let RowEchelon {
        mut a,
        mut q,
        mut qinv,
        rank,
    } = ech;
    if rank < n {
        return InverseOutcome::NotUnimodular(NotUnimodularWitness::RankDeficient {
            rank,
            combination: q.row(n - 1).to_vec(),
        });
    }
    for i in 0..n {
        if a[(i, i)].degree().unwrap_or(0) > 0 {
            let pivot = a[(i, i)].clone();
            return match UnimodularCertificate::new_verified(q, qinv) {
                Ok(transform) => InverseOutcome::NotUnimodular(NotUnimodularWitness::NonUnitPivot {
                    index: i,
                    pivot,
                    transform,
                }),
                Err(e) => InverseOutcome::Inconclusive {
                    reason: e.to_string(),
                },
            };
        }
    }
    for i in (0..n).rev() {
        let c = a[(i, i)].coeff(0);
        let inv = SkewPoly::scalar(Expr::one() / &c);
        let fwd = SkewPoly::scalar(c);
        a.row_scale(i, &inv);
        q.row_scale(i, &inv);
        qinv.col_scale(i, &fwd);
        for k in 0..i {
            let f = a[(k, i)].clone();
            if f.is_zero() {
                continue;
            }
            a.row_sub(k, &f, i);
            q.row_sub(k, &f, i);
            qinv.col_add(i, k, &f);
        }
        if let Some(b) = Some(bound).filter(|b| q.max_degree() > *b) {
            return InverseOutcome::Inconclusive {
                reason: format!("intermediate degree {} exceeds bound {b}", q.max_degree()),
            };
        }
    }
    match UnimodularCertificate::new_verified(m.clone(), q) {
        Ok(c) => InverseOutcome::Unimodular(c),
        Err(e) => InverseOutcome::Inconclusive {
            reason: e.to_string(),
        },
    }
}

struct ColEchelon {
    a: SkewMatrix,
    c: SkewMatrix,
    rank: usize,
}

/// `L·C = A` with `A` lower echelon and `C` unimodular.
fn col_echelon(l: &SkewMatrix, bound: Option<u32>) -> Result<ColEchelon, ElimError> {
    let cols = l.cols();
    let mut a = l.clone();
    let mut c = SkewMatrix::identity(cols);
    let mut c0 = 0;
    for i in 0..l.rows() {
        if c0 == cols {
            break;
        }
        loop {
            let cands: Vec<usize> = (c0..cols).filter(|&j| !a[(i, j)].is_zero()).collect();
            let Some(&piv) = cands.iter().min_by_key(|&&j| pivot_key(&a[(i, j)], j)) else {
                break;
            };
            if cands.len() == 1 {
                a.swap_cols(piv, c0);
                c.swap_cols(piv, c0);
                c0 += 1;
                break;
            }
            for &j in cands.iter().filter(|&&j| j != piv) {
                let (quot, _) = a[(i, j)].right_divide(&a[(i, piv)])?;
                let neg = -&quot;
                a.col_add(j, piv, &neg);
                c.col_add(j, piv, &neg);
            }
            check_bound(&c, bound)?;
        }
    }
    Ok(ColEchelon { a, c, rank: c0 })
}

#[derive(Clone, Debug, Serialize)]
pub enum RightInverseFailure {
    RankDeficient { rank: usize },
    /// A diagonal entry of the column-reduced form has positive degree.
    NonUnitPivot { index: usize, pivot: SkewPoly },
    /// A polynomial right inverse exists but carries forward shifts.
    Noncausal { candidate: SkewMatrix, entries: Vec<(usize, usize)> },
    DegreeBound { bound: u32 },
    Division(String),
}

/// Polynomial right inverse `L†` with `L·L† = I`.
pub fn right_inverse(
    l: &SkewMatrix,
    degree_bound: Option<u32>,
) -> Result<SkewMatrix, RightInverseFailure> {
    let p = l.rows();
    let bound = degree_bound.unwrap_or_else(|| default_degree_bound(l));
    let ech = match col_echelon(l, Some(bound)) {
        Ok(e) => e,
        Err(ElimError::DegreeBound(_)) => return Err(RightInverseFailure::DegreeBound { bound }),
        Err(ElimError::Ore(e)) => return Err(RightInverseFailure::Division(e.to_string())),
    };
    if ech.rank < p {
        return Err(RightInverseFailure::RankDeficient { rank: ech.rank });
    }
    let h = ech.a.select_cols(&(0..p).collect::<Vec<_>>());
    for i in 0..p {
        if h[(i, i)].degree().unwrap_or(0) > 0 {
            return Err(RightInverseFailure::NonUnitPivot {
                index: i,
                pivot: h[(i, i)].clone(),
            });
        }
    }
    // forward substitution for H·X = I
    let mut x = SkewMatrix::zeros(p, p);
    for col in 0..p {
        for i in 0..p {
            let mut acc = if i == col {
                SkewPoly::one()
            } else {
                SkewPoly::zero()
            };
            for k in 0..i {
                acc = &acc - &h[(i, k)].mul(&x[(k, col)]);
            }
            let inv = Expr::one() / &h[(i, i)].coeff(0);
            x[(i, col)] = acc.left_scale(&inv);
        }
    }
    let c1 = ech.c.select_cols(&(0..p).collect::<Vec<_>>());
    let dagger = c1.mul(&x);
    if !l.mul(&dagger).is_identity() {
        return Err(RightInverseFailure::Division(
            "right inverse failed to verify".into(),
        ));
    }
    let noncausal: Vec<(usize, usize)> = (0..dagger.rows())
        .flat_map(|i| (0..dagger.cols()).map(move |j| (i, j)))
        .filter(|&(i, j)| !dagger[(i, j)].is_causal())
        .collect();
    if noncausal.is_empty() {
        Ok(dagger)
    } else {
        Err(RightInverseFailure::Noncausal {
            candidate: dagger,
            entries: noncausal,
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelResult {
    /// Column vectors spanning the right kernel.
    pub basis: Vec<SkewMatrix>,
    pub causal: bool,
}

/// Right-multiply by a scalar chosen to remove forward shifts, if one of the
/// candidate normalizations does.
fn normalize_kernel_vector(v: &SkewMatrix) -> SkewMatrix {
    if v.is_causal() {
        return v.clone();
    }
    let scale = |c: &Expr| v.map(|p| p.right_scale(c));
    // p·c = Σ a_j c(-j) δ^j; stop at the first noncausal coefficient
    let works = |c: &Expr| {
        v.entries()
            .all(|p| p.coeffs().iter().all(|(j, a)| (a * &c.shift(*j as i32)).is_causal()))
    };
    let mut candidates: Vec<Expr> = Vec::new();
    for p in v.entries() {
        for (j, tau) in p.coeffs() {
            let inv = tau.recip();
            for c in [
                inv.clone(),
                tau.clone(),
                Expr::from_poly(inv.numer().clone()),
                Expr::from_parts(crate::expr::Poly::one(), tau.numer().clone()),
            ] {
                let c = c.shift(-(*j as i32));
                if c.as_rational().is_none() && !candidates.contains(&c) {
                    candidates.push(c);
                }
            }
        }
    }
    for c in &candidates {
        if works(c) {
            return scale(c);
        }
    }
    for (i, a) in candidates.iter().enumerate() {
        for b in &candidates[i..] {
            let c = a * b;
            if works(&c) {
                return scale(&c);
            }
        }
    }
    v.clone()
}

/// Basis of `{v : L·v = 0}` over K(δ], normalized towards causal form.
pub fn right_kernel(l: &SkewMatrix) -> Result<KernelResult, OreError> {
    let ech = match col_echelon(l, None) {
        Ok(e) => e,
        Err(ElimError::Ore(e)) => return Err(e),
        Err(ElimError::DegreeBound(_)) => unreachable!("unbounded elimination"),
    };
    let n = l.cols();
    let mut basis = Vec::new();
    for j in ech.rank..n {
        let v = normalize_kernel_vector(&ech.c.select_cols(&[j]));
        if !l.mul(&v).is_zero() {
            return Err(OreError::Certificate(format!("kernel vector {v} fails L·v = 0")));
        }
        basis.push(v);
    }
    let causal = basis.iter().all(SkewMatrix::is_causal);
    Ok(KernelResult { basis, causal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Context;

    fn ctx() -> Context {
        Context::new(&["x1", "x2", "x3", "x4"], &["c", "e"]).with_advanced()
    }

    fn sp(t: &str) -> SkewPoly {
        SkewPoly::parse(t, &ctx()).unwrap()
    }

    fn mat(rows: &[&[&str]]) -> SkewMatrix {
        SkewMatrix::from_rows(rows.iter().map(|r| r.iter().map(|t| sp(t)).collect()).collect())
    }

    #[test]
    fn zero_matrix_compresses_trivially() {
        let m = SkewMatrix::zeros(2, 3);
        let rc = row_compress(&m).unwrap();
        assert_eq!(rc.rank, 0);
        assert!(rc.q.a.is_identity());
    }

    #[test]
    fn dependent_differentials_have_rank_one() {
        let m = mat(&[
            &["d", "d^2"],
            &[
                "x1[-1] + x2[-2] + (x1 + x2[-1])*d",
                "(x1[-1] + x2[-2])*d + (x1 + x2[-1])*d^2",
            ],
        ]);
        assert_eq!(rank(&m).unwrap(), 1);
        assert_eq!(rank(&SkewMatrix::identity(3)).unwrap(), 3);
    }

    #[test]
    fn remark_one_theta_is_unimodular() {
        let m = mat(&[&["x2*d", "x1[-1] + 2*x2"], &["1", "0"]]);
        let out = try_inverse(&m, None);
        let cert = out.certificate().expect("unimodular");
        assert!(cert.verify());
    }

    #[test]
    fn delta_is_not_unimodular() {
        let m = mat(&[&["d"]]);
        match try_inverse(&m, None) {
            InverseOutcome::NotUnimodular(w) => assert!(w.check(&m)),
            other => panic!("{other:?}"),
        }
        let id = SkewMatrix::identity(2);
        assert!(try_inverse(&id, None).certificate().unwrap().b.is_identity());
    }

    #[test]
    fn remark_one_right_inverse_and_kernel() {
        let l = mat(&[&["x2*d", "x1[-1] + 2*x2"]]);
        let li = right_inverse(&l, None).unwrap();
        assert_eq!(li, mat(&[&["0"], &["1/(x1[-1] + 2*x2)"]]));
        let k = right_kernel(&l).unwrap();
        assert!(k.causal);
        assert_eq!(k.basis.len(), 1);
        let v = &k.basis[0];
        // proportional to [-1; x2/(x1(-1)+2x2) d]
        let ratio = &v[(1, 0)].coeff(1) / &v[(0, 0)].coeff(0);
        assert_eq!(ratio, -(&sp("x2").coeff(0) / &sp("x1[-1] + 2*x2").coeff(0)));
    }

    #[test]
    fn equation_c_has_no_causal_right_inverse() {
        let l = mat(&[&["x1[-1] + x1*d", "x2[-1] + x2*d"]]);
        assert!(right_inverse(&l, None).is_err());
    }

    #[test]
    fn padded_identity_right_inverse() {
        let l = mat(&[&["1", "0", "0"], &["0", "1", "0"]]);
        let li = right_inverse(&l, None).unwrap();
        assert_eq!(li, mat(&[&["1", "0"], &["0", "1"], &["0", "0"]]));
        let k = right_kernel(&mat(&[&["1", "0"]])).unwrap();
        assert!(k.causal);
        assert_eq!(k.basis[0], mat(&[&["0"], &["1"]]));
    }

    #[test]
    fn remark_two_kernel_is_noncausal() {
        let l = mat(&[&[
            "1/x2[-1] + (1/x2[-1])*d",
            "(-(x1 + x1[-1])/x2[-1]^2)*d",
        ]]);
        let k = right_kernel(&l).unwrap();
        assert!(!k.causal);
    }
}
