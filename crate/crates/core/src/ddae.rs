//! Index reduction of delayed differential-algebraic systems
//! `E(x,δ)ẋ = F(x)` down to index zero, constraint minimization, and the
//! explicit neutral form of the result.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::expr::{zero, Atom, DelayedVar, Expr, Sym};
use crate::ift::{
    bicausal_inverse, check_condition_c, jacobian, BicausalMap, IftError, IftOptions, PivotKind, Undecided,
    Verdict, Witness,
};
use crate::ore::{rank, row_compress, OreError, SkewMatrix, SkewPoly, UnimodularCertificate};

#[derive(Debug, Error, Clone)]
pub enum DdaeError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Ore(#[from] OreError),
    #[error(transparent)]
    Ift(#[from] IftError),
    #[error("step {step}: the constraints [{}] violate condition (C)", constraints.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", "))]
    ConditionC {
        step: usize,
        constraints: Vec<Expr>,
        witness: Box<Option<Witness>>,
    },
    #[error("step {step}: undecided: {reason}")]
    Inconclusive { step: usize, reason: String },
    #[error("cannot solve the frozen constraints: {0}")]
    Solve(String),
    #[error("step {step}: inconsistent constraint {constraint} = 0")]
    Inconsistent { step: usize, constraint: Expr },
    #[error("the degree-zero part of E has rank {rank} < {rows}")]
    SingularE0 { rank: usize, rows: usize },
    #[error("no index-zero system after {0} steps")]
    NoTermination(usize),
}

/// `Σ_j E^j(x) δ^j ẋ = F(x)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DDAESystem {
    pub vars: Vec<Sym>,
    pub e: SkewMatrix,
    pub f: Vec<Expr>,
}

impl DDAESystem {
    pub fn new(vars: Vec<Sym>, e: SkewMatrix, f: Vec<Expr>) -> Result<DDAESystem, DdaeError> {
        if e.rows() != f.len() || (e.rows() > 0 && e.cols() != vars.len()) {
            return Err(DdaeError::Dimension(format!(
                "E is {}x{}, F has {} rows, {} variables",
                e.rows(),
                e.cols(),
                f.len(),
                vars.len()
            )));
        }
        let e = e.with_cols(vars.len());
        Ok(DDAESystem { vars, e, f })
    }

    pub fn rows(&self) -> usize {
        self.f.len()
    }

    /// Largest delay of a state in `E` or `F`.
    pub fn max_delay_state(&self) -> u32 {
        let coeffs = self.e.entries().flat_map(|p| p.coeffs().values());
        coeffs
            .chain(self.f.iter())
            .flat_map(|c| c.vars())
            .map(|v| v.shift.max(0) as u32)
            .max()
            .unwrap_or(0)
    }

    /// Largest delay of a derivative, the δ-degree of `E`.
    pub fn max_delay_deriv(&self) -> u32 {
        self.e.max_degree()
    }

    /// `E^j` as a matrix over K.
    pub fn coefficient(&self, j: u32) -> Vec<Vec<Expr>> {
        (0..self.e.rows())
            .map(|i| (0..self.e.cols()).map(|c| self.e[(i, c)].coeff(j)).collect())
            .collect()
    }

    /// Problem-file text for this system.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let names: Vec<String> = self.vars.iter().map(|s| s.to_string()).collect();
        out.push_str(&format!("var {}\n", names.join(" ")));
        out.push_str(&format!("ddae n={} p={}\n", self.vars.len(), self.rows()));
        for i in 0..self.e.rows() {
            for j in 0..self.e.cols() {
                let p = &self.e[(i, j)];
                if !p.is_zero() {
                    out.push_str(&format!("E[{}][{}] = {}\n", i + 1, j + 1, p));
                }
            }
        }
        for (i, f) in self.f.iter().enumerate() {
            out.push_str(&format!("F[{}] = {}\n", i + 1, f));
        }
        out
    }
}

/// `(Σ a_j δ^j)·f = Σ a_j f(-j)`.
pub fn apply_to_function(p: &SkewPoly, f: &Expr) -> Expr {
    p.coeffs()
        .iter()
        .fold(Expr::zero(), |acc, (j, a)| &acc + &(a * &f.shift(*j as i32)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Classification {
    Retarded,
    Neutral,
    AdvancedOrMixed,
}

#[derive(Clone, Debug, Serialize)]
pub struct Minimization {
    /// Indices of the independent constraints that were analysed.
    pub subset: Vec<usize>,
    /// Generators of the closure.
    pub generators: Vec<Expr>,
    /// Values of the frozen generators.
    pub constants: Vec<Expr>,
    /// Every input constraint in terms of the generators.
    pub rewritten: Vec<Expr>,
    pub result: Vec<Expr>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReductionStep {
    pub k: usize,
    pub q: UnimodularCertificate,
    pub rank_before: usize,
    pub rank: usize,
    pub dim_before: usize,
    pub dim_after: usize,
    pub f1: Vec<Expr>,
    pub f2_raw: Vec<Expr>,
    pub f2: Vec<Expr>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minimized: Option<Minimization>,
    pub theta: Vec<Expr>,
    pub phi: BicausalMap,
    pub zbar: Vec<Sym>,
    pub e_next: SkewMatrix,
    pub f_next: Vec<Expr>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReductionResult {
    pub k_star: usize,
    pub original: DDAESystem,
    pub steps: Vec<ReductionStep>,
    pub reduced: DDAESystem,
    /// `x ↦ (z_{k*}, z̄_{k*}, ..., z̄_1)`.
    pub phi: BicausalMap,
    /// Constraint coordinates, newest first, as in `phi`.
    pub zbar: Vec<Sym>,
    pub classification: Classification,
    pub unique: bool,
    pub free_vars: usize,
    /// Total δ-degree of the row transforms: the original equations hold
    /// from this time on.
    pub lag: u32,
    pub probabilistic: bool,
}

#[derive(Clone, Debug, Default)]
pub struct ReduceOptions {
    pub ift: IftOptions,
    /// Candidate values for frozen generators, keyed `k1, k2, ...`.
    pub hints: BTreeMap<String, Expr>,
}

fn var(s: Sym) -> Expr {
    Expr::var(DelayedVar::new(s, 0))
}

fn fresh_names(prefix: &str, count: usize, used: &mut BTreeSet<Sym>) -> Vec<Sym> {
    let mut out = Vec::new();
    let mut i = 1;
    while out.len() < count {
        let s = Sym::new(&format!("{prefix}{i}"));
        i += 1;
        if used.insert(s) {
            out.push(s);
        }
    }
    out
}

/// Run the reduction until `E` has full row rank.
pub fn reduce_index(sys: &DDAESystem, opts: &ReduceOptions) -> Result<ReductionResult, DdaeError> {
    let scope = zero::ProbabilisticScope::enter();
    let x = sys.vars.clone();
    let mut used: BTreeSet<Sym> = x.iter().copied().collect();
    for f in &sys.f {
        used.extend(f.vars().into_iter().map(|v| v.var));
    }
    let mut cur = sys.clone();
    // current coordinates in x, and x in current coordinates and z̄
    let mut to_x: BTreeMap<Sym, Expr> = x.iter().map(|&s| (s, var(s))).collect();
    let mut from_x: Vec<Expr> = x.iter().map(|&s| var(s)).collect();
    let mut zbar_all: Vec<(Sym, Expr)> = Vec::new();
    let mut steps = Vec::new();
    let mut lag = 0;
    let literal = IftOptions {
        early_exit: false,
        closure: false,
        ..opts.ift.clone()
    };
    let mut k = 0;
    loop {
        let rows = cur.rows();
        let r = if rows == 0 { 0 } else { rank(&cur.e)? };
        if r == rows {
            break;
        }
        if k > sys.rows() {
            return Err(DdaeError::NoTermination(k));
        }
        let rc = row_compress(&cur.e)?;
        lag += rc.q.a.max_degree();
        let qf: Vec<Expr> = (0..rows)
            .map(|i| {
                (0..rows).fold(Expr::zero(), |acc, j| &acc + &apply_to_function(&rc.q.a[(i, j)], &cur.f[j]))
            })
            .collect();
        let f1 = qf[..r].to_vec();
        let f2_raw = qf[r..].to_vec();
        let mut f2 = Vec::new();
        for c in &f2_raw {
            if c.is_zero() {
                continue;
            }
            if c.vars().is_empty() {
                return Err(DdaeError::Inconsistent {
                    step: k,
                    constraint: c.clone(),
                });
            }
            f2.push(c.clone());
        }
        let z = cur.vars.clone();
        let dim = if f2.is_empty() { 0 } else { rank(&jacobian(&f2, &z)?)? };
        let minimized = if dim < f2.len() {
            let m = constraint_minimize(&f2, &z, opts, k)?;
            f2 = m.result.clone();
            Some(m)
        } else {
            None
        };
        let (theta, inverse, theta_names, zb_names) = if f2.is_empty() {
            (z.iter().map(|&s| var(s)).collect::<Vec<_>>(), z.iter().map(|&s| var(s)).collect(), z.clone(), Vec::new())
        } else {
            let res = check_condition_c(&f2, &z, &literal)?;
            match res.verdict {
                Verdict::Yes => {}
                Verdict::No => {
                    return Err(DdaeError::ConditionC {
                        step: k,
                        constraints: f2,
                        witness: Box::new(res.witness),
                    })
                }
                Verdict::Inconclusive => {
                    return Err(DdaeError::Inconclusive {
                        step: k,
                        reason: format!("{:?}", res.undecided.as_ref().map(undecided_reason)),
                    })
                }
            }
            let mut theta_names = Vec::new();
            let mut pending = Vec::new();
            for (j, t) in res.theta.iter().enumerate() {
                match t.as_var() {
                    Some(v) if v.shift == 0 && z.contains(&v.var) => theta_names.push(Some(v.var)),
                    _ => {
                        theta_names.push(None);
                        pending.push(j);
                    }
                }
            }
            let fresh = fresh_names("xt", pending.len(), &mut used);
            for (j, s) in pending.into_iter().zip(fresh) {
                theta_names[j] = Some(s);
            }
            let theta_names: Vec<Sym> = theta_names.into_iter().map(Option::unwrap).collect();
            let zb_names = fresh_names(&format!("zb{}_", k + 1), f2.len(), &mut used);
            let mut pivot_first = zb_names.clone();
            pivot_first.extend(theta_names.iter().copied());
            let inverse = bicausal_inverse(&res, &pivot_first)?;
            (res.theta, inverse, theta_names, zb_names)
        };
        let mut new_vars = theta_names.clone();
        new_vars.extend(zb_names.iter().copied());
        let mut forward = theta.clone();
        forward.extend(f2.iter().cloned());
        let phi = BicausalMap::new(&z, &new_vars, forward, inverse.clone(), opts.ift.degree_bound)?;

        let inv_rules: BTreeMap<Sym, Expr> = z.iter().copied().zip(inverse.iter().cloned()).collect();
        let zero_rules: BTreeMap<Sym, Expr> = zb_names.iter().map(|&s| (s, Expr::zero())).collect();
        let jac = jacobian(&inverse, &new_vars)?;
        let e1 = rc.m1.map_coeffs(|c| c.substitute(&inv_rules));
        let e_tilde = e1.mul(&jac).map_coeffs(|c| c.substitute(&zero_rules));
        let keep: Vec<usize> = (0..theta_names.len()).collect();
        let e_next = e_tilde.select_cols(&keep);
        let f_next: Vec<Expr> = f1
            .iter()
            .map(|f| f.substitute(&inv_rules).substitute(&zero_rules))
            .collect();

        for (s, c) in zb_names.iter().zip(&f2) {
            zbar_all.push((*s, c.substitute(&to_x)));
        }
        let theta_x: Vec<Expr> = theta.iter().map(|t| t.substitute(&to_x)).collect();
        to_x = theta_names.iter().copied().zip(theta_x).collect();
        from_x = from_x.iter().map(|e| e.substitute(&inv_rules)).collect();

        let next = DDAESystem::new(theta_names.clone(), e_next.clone(), f_next.clone())?;
        steps.push(ReductionStep {
            k,
            q: rc.q,
            rank_before: rows,
            rank: r,
            dim_before: z.len(),
            dim_after: theta_names.len(),
            f1,
            f2_raw,
            f2,
            minimized,
            theta,
            phi,
            zbar: zb_names,
            e_next,
            f_next,
        });
        cur = next;
        k += 1;
    }
    let mut new_vars = cur.vars.clone();
    let mut forward: Vec<Expr> = cur.vars.iter().map(|s| to_x[s].clone()).collect();
    let zbar: Vec<Sym> = zbar_all.iter().rev().map(|(s, _)| *s).collect();
    for (s, e) in zbar_all.iter().rev() {
        new_vars.push(*s);
        forward.push(e.clone());
    }
    let phi = BicausalMap::new(&x, &new_vars, forward, from_x, opts.ift.degree_bound)?;
    let (classification, unique, free_vars) = classify(&cur);
    Ok(ReductionResult {
        k_star: k,
        original: sys.clone(),
        steps,
        reduced: cur,
        phi,
        zbar,
        classification,
        unique,
        free_vars,
        lag,
        probabilistic: scope.used(),
    })
}

fn undecided_reason(u: &Undecided) -> String {
    serde_json::to_string(u).unwrap_or_default()
}

/// Replace dependent constraints by generators of their closure shifted to
/// the common zero set.
pub fn constraint_minimize(
    constraints: &[Expr],
    vars: &[Sym],
    opts: &ReduceOptions,
    step: usize,
) -> Result<Minimization, DdaeError> {
    let mut order: Vec<usize> = (0..constraints.len()).collect();
    order.sort_by_key(|&i| (constraints[i].has_transcendental(), constraints[i].size(), i));
    let mut subset: Vec<usize> = Vec::new();
    let mut current = 0;
    for i in order {
        let mut trial: Vec<Expr> = subset.iter().map(|&j| constraints[j].clone()).collect();
        trial.push(constraints[i].clone());
        let r = rank(&jacobian(&trial, vars)?)?;
        if r > current {
            current = r;
            subset.push(i);
        }
    }
    subset.sort();
    let chosen: Vec<Expr> = subset.iter().map(|&i| constraints[i].clone()).collect();
    let closure = IftOptions {
        closure: true,
        early_exit: false,
        ..opts.ift.clone()
    };
    let res = check_condition_c(&chosen, vars, &closure)?;
    match res.verdict {
        Verdict::Yes => {}
        Verdict::No => {
            return Err(DdaeError::ConditionC {
                step,
                constraints: chosen,
                witness: Box::new(res.witness),
            })
        }
        Verdict::Inconclusive => {
            return Err(DdaeError::Inconclusive {
                step,
                reason: res.undecided.as_ref().map(undecided_reason).unwrap_or_default(),
            })
        }
    }
    debug_assert!(res.pivots.iter().all(|p| p.kind != PivotKind::EarlyExit));
    let pivots: Vec<Sym> = res.pivots.iter().map(|p| p.sym).collect();
    let generators: Vec<Expr> = res.pivots.iter().map(|p| p.forward.clone()).collect();
    let rewritten: Vec<Expr> = constraints.iter().map(|c| res.chart.pull(c)).collect();
    for (c, r) in constraints.iter().zip(&rewritten) {
        if r.vars().iter().any(|v| !pivots.contains(&v.var)) {
            return Err(DdaeError::Solve(format!(
                "{c} does not depend on the closure generators alone"
            )));
        }
    }
    let consts_used: BTreeSet<Sym> = constraints.iter().flat_map(|c| c.constants()).collect();
    let mut unknowns = Vec::new();
    for i in 1..=pivots.len() {
        let mut name = format!("k{i}");
        while consts_used.contains(&Sym::new(&name)) || vars.contains(&Sym::new(&name)) {
            name.insert(0, 'k');
        }
        unknowns.push((format!("k{i}"), Sym::new(&name)));
    }
    let freeze: BTreeMap<Sym, Expr> = pivots
        .iter()
        .zip(&unknowns)
        .map(|(&p, (_, u))| (p, var(*u)))
        .collect();
    let frozen: Vec<Expr> = rewritten
        .iter()
        .map(|r| r.map_vars(&mut |v| freeze.get(&v.var).cloned()))
        .collect();
    let mut values: BTreeMap<Sym, Expr> = BTreeMap::new();
    for (hint, u) in &unknowns {
        if let Some(h) = opts.hints.get(hint) {
            values.insert(*u, h.clone());
        }
    }
    loop {
        let open: Vec<Sym> = unknowns
            .iter()
            .map(|(_, u)| *u)
            .filter(|u| !values.contains_key(u))
            .collect();
        if open.is_empty() {
            break;
        }
        let mut progress = false;
        for eq in &frozen {
            let eq = eq.substitute(&values);
            if eq.is_zero() {
                continue;
            }
            let mentioned: Vec<Sym> = open.iter().copied().filter(|&u| eq.mentions_sym(u)).collect();
            if let [u] = mentioned[..] {
                if let Some(sol) = solve_univariate(&eq, DelayedVar::new(u, 0)) {
                    values.insert(u, sol);
                    progress = true;
                    break;
                }
            }
        }
        if !progress {
            return Err(DdaeError::Solve(format!(
                "no univariate equation determines {}",
                open.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")
            )));
        }
    }
    for (c, eq) in constraints.iter().zip(&frozen) {
        let check = eq.substitute(&values);
        if !check.is_zero() {
            return Err(DdaeError::Solve(format!("{c} does not vanish at the frozen values ({check})")));
        }
    }
    let constants: Vec<Expr> = unknowns.iter().map(|(_, u)| values[u].clone()).collect();
    let result = generators
        .iter()
        .zip(&constants)
        .map(|(g, c)| g - c)
        .collect();
    Ok(Minimization {
        subset,
        generators,
        constants,
        rewritten,
        result,
    })
}

/// Solve `e = 0` for `v`: affine equations, one exponential or logarithm
/// wrapped around an affine argument, or a single rational root.
pub fn solve_univariate(e: &Expr, v: DelayedVar) -> Option<Expr> {
    if let Some(s) = e.solve_affine(&v) {
        return (!s.mentions(&v)).then_some(s);
    }
    let trans: Vec<Atom> = e
        .numer()
        .atoms()
        .into_iter()
        .filter(|a| a.is_transcendental() && a.mentions(&v))
        .collect();
    if let [a] = &trans[..] {
        let t = DelayedVar::new(Sym::new("\u{3c4}"), 0);
        let outer = e.map_atoms(&mut |b| (b == a).then(|| Expr::var(t)));
        if outer.mentions(&v) {
            return None;
        }
        let tv = outer.solve_affine(&t)?;
        return match a {
            Atom::Exp(g) => {
                if tv.as_rational().is_some_and(|c| c <= num_traits::Zero::zero()) {
                    return None;
                }
                solve_univariate(&(&**g - &Expr::ln(&tv)), v)
            }
            Atom::Ln(g) => solve_univariate(&(&**g - &Expr::exp(&tv)), v),
            _ => None,
        };
    }
    rational_root(e, v)
}

fn rational_root(e: &Expr, v: DelayedVar) -> Option<Expr> {
    use num_bigint::BigInt;
    use num_integer::Integer;
    use num_rational::BigRational;
    use num_traits::{One, Signed, ToPrimitive, Zero};

    let a = Atom::Var(v);
    let n = e.numer();
    if n.atoms().iter().any(|b| *b != a) {
        return None;
    }
    let coeffs = n.coefficients_in(&a);
    let deg = *coeffs.keys().max()?;
    let mut c: Vec<BigRational> = (0..=deg)
        .map(|i| coeffs.get(&i).and_then(|p| p.as_constant()).unwrap_or_else(BigRational::zero))
        .collect();
    let l = c.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
    for x in c.iter_mut() {
        *x = &*x * BigRational::from_integer(l.clone());
    }
    let ints: Vec<BigInt> = c.iter().map(|x| x.to_integer()).collect();
    let low = ints.iter().position(|x| !x.is_zero())?;
    let divisors = |m: &BigInt| -> Option<Vec<BigInt>> {
        let m = m.abs().to_u64()?;
        if m > 1_000_000 {
            return None;
        }
        Some((1..=m).filter(|d| m % d == 0).map(BigInt::from).collect())
    };
    let ps = divisors(&ints[low])?;
    let qs = divisors(&ints[deg as usize])?;
    let mut roots: BTreeSet<BigRational> = BTreeSet::new();
    if low > 0 {
        roots.insert(BigRational::zero());
    }
    for p in &ps {
        for q in &qs {
            for sign in [1, -1] {
                let r = BigRational::new(p * sign, q.clone());
                let val = c
                    .iter()
                    .rev()
                    .fold(BigRational::zero(), |acc, x| acc * &r + x);
                if val.is_zero() {
                    roots.insert(r);
                }
            }
        }
    }
    if roots.len() == 1 {
        roots.into_iter().next().map(Expr::rational)
    } else {
        None
    }
}

/// Gauss-Jordan over K: reduced rows, pivot columns and the transform `T`
/// with `T·M = R`.
fn k_echelon(m: &[Vec<Expr>], cols: usize) -> (Vec<Vec<Expr>>, Vec<usize>, Vec<Vec<Expr>>) {
    let rows = m.len();
    let mut a: Vec<Vec<Expr>> = m.to_vec();
    let mut t: Vec<Vec<Expr>> = (0..rows)
        .map(|i| (0..rows).map(|j| if i == j { Expr::one() } else { Expr::zero() }).collect())
        .collect();
    let mut pivots = Vec::new();
    let mut r = 0;
    for j in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows)
            .filter(|&i| !a[i][j].is_zero())
            .min_by_key(|&i| (a[i][j].size(), i))
        else {
            continue;
        };
        a.swap(r, p);
        t.swap(r, p);
        let inv = a[r][j].recip();
        a[r] = a[r].iter().map(|x| x * &inv).collect();
        t[r] = t[r].iter().map(|x| x * &inv).collect();
        for i in 0..rows {
            if i == r || a[i][j].is_zero() {
                continue;
            }
            let f = a[i][j].clone();
            let (ar, tr) = (a[r].clone(), t[r].clone());
            a[i] = a[i].iter().zip(&ar).map(|(x, y)| x - &(&f * y)).collect();
            t[i] = t[i].iter().zip(&tr).map(|(x, y)| x - &(&f * y)).collect();
        }
        pivots.push(j);
        r += 1;
    }
    (a, pivots, t)
}

/// Rank over K of a matrix of expressions.
pub fn k_rank(m: &[Vec<Expr>], cols: usize) -> usize {
    k_echelon(m, cols).1.len()
}

/// Type of an index-zero system, whether solutions are unique, and the
/// number of free variables.
pub fn classify(sys: &DDAESystem) -> (Classification, bool, usize) {
    let rows = sys.rows();
    let n = sys.vars.len();
    let r0 = k_rank(&sys.coefficient(0), n);
    let higher = (1..=sys.max_delay_deriv()).any(|j| sys.coefficient(j).iter().flatten().any(|c| !c.is_zero()));
    let class = if r0 < rows {
        Classification::AdvancedOrMixed
    } else if higher {
        Classification::Neutral
    } else {
        Classification::Retarded
    };
    (class, rows == n, n.saturating_sub(rows))
}

/// `ẋ = rhs + g·v` with `rhs` in delayed states and delayed derivatives.
#[derive(Clone, Debug, Serialize)]
pub struct NeutralODE {
    pub vars: Vec<Sym>,
    /// Names standing for `ẋ_i`; only delayed copies occur in `rhs`.
    pub dvars: Vec<Sym>,
    pub rhs: Vec<Expr>,
    /// Kernel of `E^0`, one column per free variable.
    pub g: Vec<Vec<Expr>>,
    pub free_vars: usize,
    pub max_delay_state: u32,
    pub max_delay_deriv: u32,
}

pub fn derivative_sym(s: Sym) -> Sym {
    Sym::new(&format!("{s}'"))
}

/// Solve an index-zero system for `ẋ` with a right inverse of `E^0`.
pub fn explicit_form(sys: &DDAESystem) -> Result<NeutralODE, DdaeError> {
    let rows = sys.rows();
    let n = sys.vars.len();
    let e0 = sys.coefficient(0);
    let (red, pivots, t) = k_echelon(&e0, n);
    if pivots.len() < rows {
        return Err(DdaeError::SingularE0 {
            rank: pivots.len(),
            rows,
        });
    }
    let dvars: Vec<Sym> = sys.vars.iter().map(|&s| derivative_sym(s)).collect();
    // b_i = F_i − Σ_{j≥1} Σ_c E^j_ic ẋ_c(−j)
    let b: Vec<Expr> = (0..rows)
        .map(|i| {
            let mut acc = sys.f[i].clone();
            for c in 0..n {
                for (j, coef) in sys.e[(i, c)].coeffs() {
                    if *j > 0 {
                        acc = &acc - &(coef * &Expr::var(DelayedVar::new(dvars[c], *j as i32)));
                    }
                }
            }
            acc
        })
        .collect();
    let mut rhs = vec![Expr::zero(); n];
    for (i, &col) in pivots.iter().enumerate() {
        rhs[col] = (0..rows).fold(Expr::zero(), |acc, q| &acc + &(&t[i][q] * &b[q]));
    }
    let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
    let g: Vec<Vec<Expr>> = (0..n)
        .map(|row| {
            free.iter()
                .map(|&f| {
                    if row == f {
                        Expr::one()
                    } else if let Some(i) = pivots.iter().position(|&p| p == row) {
                        -&red[i][f]
                    } else {
                        Expr::zero()
                    }
                })
                .collect()
        })
        .collect();
    Ok(NeutralODE {
        vars: sys.vars.clone(),
        dvars,
        rhs,
        g,
        free_vars: free.len(),
        max_delay_state: sys.max_delay_state(),
        max_delay_deriv: sys.max_delay_deriv(),
    })
}
