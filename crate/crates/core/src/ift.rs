//! Condition (C) for a family of delayed functions, complementary bicausal
//! coordinates, and the implicit form `x̃_1 = η(x̃_2)`.
//!
//! The check reduces the differential `dλ_k` one coordinate pair at a time:
//! each step integrates a two-variable Pfaffian form and replaces one
//! coordinate by the resulting potential, strictly lowering the δ-degree of
//! the partner entry.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::expr::{zero, DelayedVar, Expr, Sym};
use crate::forms::{
    differential, differential_wrt, integrate_pfaffian, FormsError, IntegrationFailure,
    PfaffianOptions, PfaffianProblem,
};
use crate::ore::{rank, try_inverse, InverseOutcome, OreError, SkewMatrix, SkewPoly, UnimodularCertificate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IftError {
    #[error("the differentials have rank {rank}, expected {expected}")]
    Dimension { rank: usize, expected: usize },
    #[error(transparent)]
    Forms(#[from] FormsError),
    #[error(transparent)]
    Ore(#[from] OreError),
    #[error("no YES verdict to build coordinates from")]
    NotYes,
    #[error("cannot solve {equation} = 0 for {var}")]
    Solve { equation: String, var: String },
    #[error("round trip failed: {0}")]
    RoundTrip(String),
    #[error("Jacobian is not unimodular: {0}")]
    Certificate(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Yes,
    No,
    Inconclusive,
}

#[derive(Clone, Debug)]
pub struct IftOptions {
    pub degree_bound: Option<u32>,
    pub pfaffian: PfaffianOptions,
    /// Stop at the last function as soon as some entry has degree zero.
    /// Without it every function is reduced to a single nonzero entry.
    pub early_exit: bool,
    /// Accept a terminal entry of positive degree and return the coordinate
    /// that generates the closure instead of answering NO. Implies no early
    /// exit.
    pub closure: bool,
}

impl Default for IftOptions {
    fn default() -> Self {
        IftOptions {
            degree_bound: None,
            pfaffian: PfaffianOptions::default(),
            early_exit: true,
            closure: false,
        }
    }
}

/// One candidate `(r, s)` looked at by [`select_pair`].
#[derive(Clone, Debug, Serialize)]
pub struct PairScan {
    pub r: usize,
    pub s: usize,
    /// `shift(lead_s / lead_r, -deg α_r)`.
    pub ratio: Expr,
    pub causal: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct PairChoice {
    pub r: usize,
    pub s: usize,
    pub deg_r: u32,
    pub deg_s: u32,
    pub ratio: Expr,
}

#[derive(Clone, Debug, Serialize)]
pub struct PairSelection {
    pub choice: Option<PairChoice>,
    pub scans: Vec<PairScan>,
}

/// Lexicographic search for `(r, s)` with `α_r ≠ 0`, `deg α_r ≤ deg α_s`
/// and a causal shifted leading ratio. Single-term `α_r` are tried first.
pub fn select_pair(alpha: &[SkewPoly]) -> PairSelection {
    let mut scans = Vec::new();
    for single_term in [true, false] {
        for (r, ar) in alpha.iter().enumerate() {
            let Some((dr, cr)) = ar.lead() else { continue };
            if single_term != (ar.coeffs().len() == 1) {
                continue;
            }
            for (s, as_) in alpha.iter().enumerate() {
                if s == r {
                    continue;
                }
                let Some((ds, cs)) = as_.lead() else { continue };
                if ds < dr {
                    continue;
                }
                let ratio = (cs / cr).shift(-(dr as i32));
                let causal = ratio.is_causal();
                scans.push(PairScan {
                    r,
                    s,
                    ratio: ratio.clone(),
                    causal,
                });
                if causal {
                    return PairSelection {
                        choice: Some(PairChoice {
                            r,
                            s,
                            deg_r: dr,
                            deg_s: ds,
                            ratio,
                        }),
                        scans,
                    };
                }
            }
        }
    }
    PairSelection {
        choice: None,
        scans,
    }
}

/// A coordinate of the running chart, with the original slot it replaced
/// and its expression in the original variables.
#[derive(Clone, Debug, Serialize)]
pub struct Coord {
    pub sym: Sym,
    pub slot: usize,
    pub forward: Expr,
}

/// The current coordinates together with the original variables written in
/// them.
#[derive(Clone, Debug, Serialize)]
pub struct Chart {
    pub vars: Vec<Sym>,
    pub coords: Vec<Coord>,
    pub inverse: BTreeMap<Sym, Expr>,
    #[serde(skip)]
    counter: usize,
}

impl Chart {
    pub fn identity(vars: &[Sym]) -> Chart {
        Chart {
            vars: vars.to_vec(),
            coords: vars
                .iter()
                .enumerate()
                .map(|(i, &s)| Coord {
                    sym: s,
                    slot: i,
                    forward: Expr::var(DelayedVar::new(s, 0)),
                })
                .collect(),
            inverse: vars
                .iter()
                .map(|&s| (s, Expr::var(DelayedVar::new(s, 0))))
                .collect(),
            counter: 0,
        }
    }

    pub fn coord(&self, s: Sym) -> Option<&Coord> {
        self.coords.iter().find(|c| c.sym == s)
    }

    /// Rewrite an expression in the original variables into the chart.
    pub fn pull(&self, e: &Expr) -> Expr {
        e.substitute(&self.inverse)
    }

    /// Rewrite an expression in chart coordinates into the original
    /// variables.
    pub fn push(&self, e: &Expr) -> Expr {
        let rules: BTreeMap<Sym, Expr> = self
            .coords
            .iter()
            .map(|c| (c.sym, c.forward.clone()))
            .collect();
        e.substitute(&rules)
    }

    fn fresh(&mut self) -> Sym {
        loop {
            self.counter += 1;
            let s = Sym::new(&format!("ζ{}", self.counter));
            if !self.vars.contains(&s) && self.coord(s).is_none() {
                return s;
            }
        }
    }

    /// Replace coordinate `old` by `new = value(chart)`, with
    /// `old = solution(new, ...)`.
    fn replace(&mut self, old: Sym, new: Sym, value: &Expr, solution: &Expr) {
        let forward = self.push(value);
        let rule: BTreeMap<Sym, Expr> = [(old, solution.clone())].into();
        for e in self.inverse.values_mut() {
            *e = e.substitute(&rule);
        }
        let c = self
            .coords
            .iter_mut()
            .find(|c| c.sym == old)
            .expect("coordinate in chart");
        c.sym = new;
        c.forward = forward;
    }
}

/// One coordinate replacement.
#[derive(Clone, Debug, Serialize)]
pub struct CoordStep {
    pub k: usize,
    pub l: usize,
    pub coords_before: Vec<Sym>,
    pub alpha_before: Vec<SkewPoly>,
    pub pair: (usize, usize),
    pub deg_r: u32,
    pub deg_s: u32,
    pub ratio: Expr,
    pub v1: DelayedVar,
    pub v2: DelayedVar,
    pub factor: Expr,
    pub factor_family: String,
    pub new_coord: Sym,
    /// The new coordinate in the previous chart.
    pub value: Expr,
    /// The new coordinate in the original variables.
    pub forward: Expr,
    /// The replaced coordinate in the new chart.
    pub solution: Expr,
    pub coords_after: Vec<Sym>,
    pub alpha_after: Vec<SkewPoly>,
    pub degree_after: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PivotKind {
    /// A degree-zero entry at the last function.
    EarlyExit,
    /// The only nonzero entry, of degree zero.
    Terminal,
    /// The only nonzero entry, of positive degree (closure mode).
    Closure,
}

#[derive(Clone, Debug, Serialize)]
pub struct Pivot {
    pub k: usize,
    pub sym: Sym,
    pub slot: usize,
    pub forward: Expr,
    /// `λ_k` in the chart at the time the pivot was fixed.
    pub local: Expr,
    pub kind: PivotKind,
    pub entry: SkewPoly,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// No admissible pair: every shifted leading ratio is noncausal.
    NoCausalPair {
        k: usize,
        l: usize,
        coords: Vec<Sym>,
        alpha: Vec<SkewPoly>,
        scans: Vec<PairScan>,
    },
    /// The last nonzero entry has positive degree.
    NonUnitTerminal {
        k: usize,
        l: usize,
        coord: Sym,
        entry: SkewPoly,
    },
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Undecided {
    Integration {
        k: usize,
        l: usize,
        failure: IntegrationFailure,
    },
    Budget {
        k: usize,
        budget: usize,
    },
    StepInverse {
        k: usize,
        l: usize,
        value: Expr,
        coord: Sym,
    },
    NoDecrease {
        k: usize,
        l: usize,
    },
    Certificate {
        reason: String,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceEvent {
    pub k: usize,
    pub l: usize,
    pub line: u32,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct AnalysisResult {
    pub verdict: Verdict,
    pub vars: Vec<Sym>,
    pub lambdas: Vec<Expr>,
    pub steps: Vec<CoordStep>,
    pub pivots: Vec<Pivot>,
    pub theta: Vec<Expr>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stacked_cert: Option<UnimodularCertificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub undecided: Option<Undecided>,
    pub probabilistic: bool,
    pub trace: Vec<TraceEvent>,
    pub chart: Chart,
    /// Chart coordinates carrying `θ`, sorted by original slot.
    pub theta_coords: Vec<Sym>,
}

struct Run<'a> {
    opts: &'a IftOptions,
    chart: Chart,
    steps: Vec<CoordStep>,
    pivots: Vec<Pivot>,
    trace: Vec<TraceEvent>,
}

enum Stop {
    No(Witness),
    Undecided(Undecided),
    Error(IftError),
}

impl From<IftError> for Stop {
    fn from(e: IftError) -> Stop {
        Stop::Error(e)
    }
}

impl From<FormsError> for Stop {
    fn from(e: FormsError) -> Stop {
        Stop::Error(e.into())
    }
}

impl Run<'_> {
    fn log(&mut self, k: usize, l: usize, line: u32, message: String) {
        self.trace.push(TraceEvent {
            k,
            l,
            line,
            message,
        });
    }

    fn pivot(&mut self, k: usize, active: &[Sym], i: usize, local: &Expr, entry: &SkewPoly, kind: PivotKind) {
        let c = self.chart.coord(active[i]).expect("active coordinate").clone();
        self.pivots.push(Pivot {
            k,
            sym: c.sym,
            slot: c.slot,
            forward: c.forward,
            local: local.clone(),
            kind,
            entry: entry.clone(),
        });
    }

    /// Reduce `λ_k` until it has a single nonzero entry; returns the
    /// remaining free coordinates.
    fn reduce(&mut self, k: usize, last: bool, lambda: &Expr, mut active: Vec<Sym>) -> Result<Vec<Sym>, Stop> {
        let mut lam = self.chart.pull(lambda);
        let mut alpha = differential_wrt(&lam, &active)?.entries();
        self.log(k, 1, 5, format!("alpha = [{}] over {}", join(&alpha), join(&active)));
        let total: u32 = alpha.iter().filter_map(SkewPoly::degree).sum();
        let budget = (total as usize + 1) * active.len().max(1);
        let mut l = 1;
        loop {
            let nonzero: Vec<usize> = (0..alpha.len()).filter(|&i| !alpha[i].is_zero()).collect();
            if nonzero.is_empty() {
                return Err(IftError::Dimension {
                    rank: k - 1,
                    expected: k,
                }
                .into());
            }
            if last && self.opts.early_exit && !self.opts.closure {
                if let Some(i) = nonzero.iter().copied().find(|&i| alpha[i].degree() == Some(0)) {
                    self.log(k, l, 20, format!("degree-zero entry at {}; pivot fixed", active[i]));
                    self.pivot(k, &active, i, &lam, &alpha[i].clone(), PivotKind::EarlyExit);
                    active.remove(i);
                    return Ok(active);
                }
            }
            if let [i] = nonzero[..] {
                let entry = alpha[i].clone();
                self.log(k, l, 16, format!("single nonzero entry {entry} at {}", active[i]));
                let kind = if entry.degree() == Some(0) {
                    PivotKind::Terminal
                } else if self.opts.closure {
                    PivotKind::Closure
                } else {
                    self.log(k, l, 18, "entry of positive degree: NO".into());
                    return Err(Stop::No(Witness::NonUnitTerminal {
                        k,
                        l,
                        coord: active[i],
                        entry,
                    }));
                };
                self.pivot(k, &active, i, &lam, &entry, kind);
                active.remove(i);
                return Ok(active);
            }
            if l > budget {
                return Err(Stop::Undecided(Undecided::Budget { k, budget }));
            }
            let sel = select_pair(&alpha);
            let Some(choice) = sel.choice else {
                self.log(k, l, 8, "no admissible pair: NO".into());
                return Err(Stop::No(Witness::NoCausalPair {
                    k,
                    l,
                    coords: active,
                    alpha,
                    scans: sel.scans,
                }));
            };
            let (r, s) = (choice.r, choice.s);
            self.log(
                k,
                l,
                6,
                format!(
                    "pair ({}, {}), shifted ratio {} causal",
                    active[r], active[s], choice.ratio
                ),
            );
            let zr = active[r];
            let v1 = DelayedVar::new(zr, 0);
            let v2 = DelayedVar::new(active[s], (choice.deg_s - choice.deg_r) as i32);
            let params = choice
                .ratio
                .vars()
                .into_iter()
                .filter(|v| *v != v1 && *v != v2)
                .collect();
            let problem = PfaffianProblem {
                a: Expr::one(),
                b: choice.ratio.clone(),
                v1,
                v2,
                params,
            };
            let sol = match integrate_pfaffian(&problem, self.opts.pfaffian) {
                Ok(sol) => sol,
                Err(failure) => {
                    return Err(Stop::Undecided(Undecided::Integration { k, l, failure }));
                }
            };
            let value = sol.lambda_hat;
            self.log(k, l, 10, format!("potential {value} ({} factor {})", sol.family, sol.factor));
            let w = self.chart.fresh();
            let solution = if value.vars().iter().any(|v| v.var == zr && v.shift != 0) {
                None
            } else {
                (&value - &Expr::var(DelayedVar::new(w, 0))).solve_affine(&v1)
            };
            let Some(solution) = solution else {
                return Err(Stop::Undecided(Undecided::StepInverse {
                    k,
                    l,
                    value,
                    coord: zr,
                }));
            };
            self.chart.replace(zr, w, &value, &solution);
            let forward = self.chart.coord(w).expect("new coordinate").forward.clone();
            self.log(k, l, 11, format!("{w} = {forward}"));
            let before = active.clone();
            let zs = active[s];
            let mut next = vec![w, zs];
            next.extend(active.iter().copied().filter(|&c| c != zr && c != zs));
            active = next;
            lam = lam.substitute(&[(zr, solution.clone())].into());
            let alpha_after = differential_wrt(&lam, &active)?.entries();
            let degree_after = alpha_after[1].degree();
            self.log(k, l, 13, format!("alpha = [{}] over {}", join(&alpha_after), join(&active)));
            self.steps.push(CoordStep {
                k,
                l,
                coords_before: before,
                alpha_before: alpha.clone(),
                pair: (r, s),
                deg_r: choice.deg_r,
                deg_s: choice.deg_s,
                ratio: choice.ratio,
                v1,
                v2,
                factor: sol.factor,
                factor_family: sol.family,
                new_coord: w,
                value,
                forward,
                solution,
                coords_after: active.clone(),
                alpha_after: alpha_after.clone(),
                degree_after,
            });
            if degree_after.is_some_and(|d| d >= choice.deg_s) {
                return Err(Stop::Undecided(Undecided::NoDecrease { k, l }));
            }
            alpha = alpha_after;
            l += 1;
        }
    }
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    let parts: Vec<String> = items.iter().map(|x| x.to_string()).collect();
    format!("[{}]", parts.join(", "))
}

/// Stacked differentials of `exprs` over `vars`.
pub fn jacobian(exprs: &[Expr], vars: &[Sym]) -> Result<SkewMatrix, IftError> {
    let mut rows = Vec::new();
    for e in exprs {
        rows.push(differential(e, vars)?.entries());
    }
    Ok(SkewMatrix::from_rows(rows).with_cols(vars.len()))
}

/// Run the reduction on `λ_1..λ_p` over `vars`.
pub fn check_condition_c(lambdas: &[Expr], vars: &[Sym], opts: &IftOptions) -> Result<AnalysisResult, IftError> {
    let scope = zero::ProbabilisticScope::enter();
    let p = lambdas.len();
    let jac = jacobian(lambdas, vars)?;
    let rk = rank(&jac)?;
    if rk < p {
        return Err(IftError::Dimension { rank: rk, expected: p });
    }
    let mut run = Run {
        opts,
        chart: Chart::identity(vars),
        steps: Vec::new(),
        pivots: Vec::new(),
        trace: Vec::new(),
    };
    let mut active: Vec<Sym> = vars.to_vec();
    let mut stop = None;
    for (idx, lambda) in lambdas.iter().enumerate() {
        let k = idx + 1;
        if k > 1 {
            run.log(k, 1, 3, format!("fix {} as constants", join(&run.pivots.iter().map(|p| p.sym).collect::<Vec<_>>())));
        }
        match run.reduce(k, k == p, lambda, active.clone()) {
            Ok(rest) => active = rest,
            Err(s) => {
                stop = Some(s);
                break;
            }
        }
    }
    let mut result = AnalysisResult {
        verdict: Verdict::Yes,
        vars: vars.to_vec(),
        lambdas: lambdas.to_vec(),
        steps: run.steps,
        pivots: run.pivots,
        theta: Vec::new(),
        stacked_cert: None,
        witness: None,
        undecided: None,
        probabilistic: false,
        trace: run.trace,
        chart: run.chart,
        theta_coords: Vec::new(),
    };
    match stop {
        Some(Stop::Error(e)) => return Err(e),
        Some(Stop::No(w)) => {
            result.verdict = Verdict::No;
            result.witness = Some(w);
        }
        Some(Stop::Undecided(u)) => {
            result.verdict = Verdict::Inconclusive;
            result.undecided = Some(u);
        }
        None => {
            let mut theta: Vec<&Coord> = active
                .iter()
                .map(|s| result.chart.coord(*s).expect("active coordinate"))
                .collect();
            theta.sort_by_key(|c| c.slot);
            result.theta_coords = theta.iter().map(|c| c.sym).collect();
            result.theta = theta.iter().map(|c| c.forward.clone()).collect();
            if !opts.closure {
                let mut all = lambdas.to_vec();
                all.extend(result.theta.iter().cloned());
                let stacked = jacobian(&all, vars)?;
                match try_inverse(&stacked, opts.degree_bound) {
                    InverseOutcome::Unimodular(c) => {
                        result.trace.push(TraceEvent {
                            k: p,
                            l: 0,
                            line: 21,
                            message: format!("[dλ; dθ] unimodular, θ = {}", join(&result.theta)),
                        });
                        result.stacked_cert = Some(c);
                    }
                    other => {
                        result.verdict = Verdict::Inconclusive;
                        result.undecided = Some(Undecided::Certificate {
                            reason: format!("stacked Jacobian: {other:?}"),
                        });
                    }
                }
            }
        }
    }
    result.probabilistic = scope.used();
    Ok(result)
}

/// A bicausal change of coordinates with its inverse and Jacobian
/// certificate.
#[derive(Clone, Debug, Serialize)]
pub struct BicausalMap {
    pub vars: Vec<Sym>,
    pub new_vars: Vec<Sym>,
    pub forward: Vec<Expr>,
    pub inverse: Vec<Expr>,
    pub certificate: UnimodularCertificate,
    pub max_delay_forward: u32,
    pub max_delay_inverse: u32,
}

fn max_delay(es: &[Expr]) -> u32 {
    es.iter()
        .flat_map(|e| e.vars())
        .map(|v| v.shift.max(0) as u32)
        .max()
        .unwrap_or(0)
}

impl BicausalMap {
    /// Assemble from both directions; checks both compositions and the
    /// Jacobian.
    pub fn new(
        vars: &[Sym],
        new_vars: &[Sym],
        forward: Vec<Expr>,
        inverse: Vec<Expr>,
        degree_bound: Option<u32>,
    ) -> Result<BicausalMap, IftError> {
        let fwd: BTreeMap<Sym, Expr> = new_vars.iter().copied().zip(forward.iter().cloned()).collect();
        let inv: BTreeMap<Sym, Expr> = vars.iter().copied().zip(inverse.iter().cloned()).collect();
        for (i, f) in forward.iter().enumerate() {
            let back = f.substitute(&inv);
            if !back.equiv(&Expr::var(DelayedVar::new(new_vars[i], 0))) {
                return Err(IftError::RoundTrip(format!("{} ↦ {back}", new_vars[i])));
            }
        }
        for (i, g) in inverse.iter().enumerate() {
            let back = g.substitute(&fwd);
            if !back.equiv(&Expr::var(DelayedVar::new(vars[i], 0))) {
                return Err(IftError::RoundTrip(format!("{} ↦ {back}", vars[i])));
            }
        }
        let jac = jacobian(&forward, vars)?;
        let certificate = match try_inverse(&jac, degree_bound) {
            InverseOutcome::Unimodular(c) => c,
            other => return Err(IftError::Certificate(format!("{other:?}"))),
        };
        Ok(BicausalMap {
            vars: vars.to_vec(),
            new_vars: new_vars.to_vec(),
            max_delay_forward: max_delay(&forward),
            max_delay_inverse: max_delay(&inverse),
            forward,
            inverse,
            certificate,
        })
    }

    /// Rewrite an expression in the old variables into the new ones.
    pub fn to_new(&self, e: &Expr) -> Expr {
        let inv: BTreeMap<Sym, Expr> = self.vars.iter().copied().zip(self.inverse.iter().cloned()).collect();
        e.substitute(&inv)
    }

    /// Rewrite an expression in the new variables into the old ones.
    pub fn to_old(&self, e: &Expr) -> Expr {
        let fwd: BTreeMap<Sym, Expr> = self.new_vars.iter().copied().zip(self.forward.iter().cloned()).collect();
        e.substitute(&fwd)
    }
}

/// `prefix1..prefixn`, skipping names already used by `avoid`.
pub fn new_names(prefix: &str, n: usize, avoid: &[Sym]) -> Vec<Sym> {
    let mut p = prefix.to_string();
    loop {
        let names: Vec<Sym> = (1..=n).map(|i| Sym::new(&format!("{p}{i}"))).collect();
        if names.iter().all(|s| !avoid.contains(s)) {
            return names;
        }
        p.push('t');
    }
}

/// Rename pivots to `new[..p]` and `θ` coordinates to `new[p..]`.
fn renaming(res: &AnalysisResult, new: &[Sym]) -> BTreeMap<Sym, Expr> {
    res.pivots
        .iter()
        .map(|p| p.sym)
        .chain(res.theta_coords.iter().copied())
        .zip(new)
        .map(|(s, &n)| (s, Expr::var(DelayedVar::new(n, 0))))
        .collect()
}

/// Solve `local_k = rhs_k` for the pivots in order; results are in chart
/// coordinates.
fn solve_pivots(res: &AnalysisResult, rhs: &[Expr]) -> Result<BTreeMap<Sym, Expr>, IftError> {
    let mut sols: BTreeMap<Sym, Expr> = BTreeMap::new();
    for (p, y) in res.pivots.iter().zip(rhs) {
        let eq = &p.local.substitute(&sols) - y;
        let v = DelayedVar::new(p.sym, 0);
        if eq.vars().iter().any(|u| u.var == p.sym && u.shift != 0) {
            return Err(IftError::Solve {
                equation: eq.to_string(),
                var: v.to_string(),
            });
        }
        let sol = eq.solve_affine(&v).ok_or_else(|| IftError::Solve {
            equation: eq.to_string(),
            var: v.to_string(),
        })?;
        sols.insert(p.sym, sol);
    }
    Ok(sols)
}

/// The change of coordinates `x ↦ (λ, θ)` for a YES result.
pub fn build_bicausal(res: &AnalysisResult, prefix: &str, degree_bound: Option<u32>) -> Result<BicausalMap, IftError> {
    if res.verdict != Verdict::Yes || res.pivots.iter().any(|p| p.kind == PivotKind::Closure) {
        return Err(IftError::NotYes);
    }
    let new = new_names(prefix, res.vars.len(), &res.vars);
    let inverse = bicausal_inverse(res, &new)?;
    let mut forward = res.lambdas.clone();
    forward.extend(res.theta.iter().cloned());
    BicausalMap::new(&res.vars, &new, forward, inverse, degree_bound)
}

/// The original variables in terms of `new`, which names the values of
/// `λ` first and then `θ`.
pub fn bicausal_inverse(res: &AnalysisResult, new: &[Sym]) -> Result<Vec<Expr>, IftError> {
    if res.verdict != Verdict::Yes || res.pivots.iter().any(|p| p.kind == PivotKind::Closure) {
        return Err(IftError::NotYes);
    }
    let rename = renaming(res, new);
    let ys: Vec<Expr> = new[..res.pivots.len()]
        .iter()
        .map(|&s| Expr::var(DelayedVar::new(s, 0)))
        .collect();
    let sols = solve_pivots(res, &ys)?;
    Ok(res
        .vars
        .iter()
        .map(|x| res.chart.inverse[x].substitute(&sols).substitute(&rename))
        .collect())
}

/// `λ` and the solved pivots in new coordinates named
/// `prefix1..prefixn`: pivots first, then `θ`.
#[derive(Clone, Debug, Serialize)]
pub struct ImplicitForm {
    pub new_vars: Vec<Sym>,
    pub lambda_new: Vec<Expr>,
    /// `x̃_k = η_k(x̃_{p+1}, ..., x̃_n)` for `k ≤ p`.
    pub eta: Vec<Expr>,
}

/// Solve `λ(x̃) = 0` for the pivot block.
pub fn implicit_solve(res: &AnalysisResult, prefix: &str) -> Result<ImplicitForm, IftError> {
    if res.verdict != Verdict::Yes {
        return Err(IftError::NotYes);
    }
    let new = new_names(prefix, res.vars.len(), &res.vars);
    let rename = renaming(res, &new);
    let zeros = vec![Expr::zero(); res.pivots.len()];
    let sols = solve_pivots(res, &zeros)?;
    let eta = res
        .pivots
        .iter()
        .map(|p| sols[&p.sym].substitute(&rename))
        .collect();
    let lambda_new = res
        .lambdas
        .iter()
        .map(|l| res.chart.pull(l).substitute(&rename))
        .collect();
    Ok(ImplicitForm {
        new_vars: new,
        lambda_new,
        eta,
    })
}

/// Invert a map given by components in `vars` by peeling: repeatedly find
/// a component whose only unresolved variable occurs undelayed and
/// affinely.
pub fn invert_by_peeling(forward: &[Expr], vars: &[Sym], new_vars: &[Sym]) -> Result<Vec<Expr>, IftError> {
    let mut known: BTreeMap<Sym, Expr> = BTreeMap::new();
    let mut used = vec![false; forward.len()];
    while known.len() < vars.len() {
        let mut progress = false;
        for (j, f) in forward.iter().enumerate() {
            if used[j] {
                continue;
            }
            let cur = f.substitute(&known);
            let open: Vec<DelayedVar> = cur
                .vars()
                .into_iter()
                .filter(|v| vars.contains(&v.var) && !known.contains_key(&v.var))
                .collect();
            let Some(first) = open.first() else { continue };
            if open.iter().any(|v| v.var != first.var) || open.iter().any(|v| v.shift != 0) {
                continue;
            }
            let eq = &cur - &Expr::var(DelayedVar::new(new_vars[j], 0));
            if let Some(sol) = eq.solve_affine(first) {
                known.insert(first.var, sol);
                used[j] = true;
                progress = true;
            }
        }
        if !progress {
            let missing: Vec<String> = vars
                .iter()
                .filter(|v| !known.contains_key(v))
                .map(|v| v.to_string())
                .collect();
            return Err(IftError::Solve {
                equation: "map components".into(),
                var: missing.join(", "),
            });
        }
    }
    Ok(vars.iter().map(|v| known[v].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_expr, Context};

    fn ctx() -> Context {
        Context::new(&["x1", "x2", "x3", "xt1", "xt2", "xt3"], &["e1", "e2", "e3"])
    }

    fn e(t: &str) -> Expr {
        parse_expr(t, &ctx()).unwrap()
    }

    fn syms(names: &[&str]) -> Vec<Sym> {
        names.iter().map(|n| Sym::new(n)).collect()
    }

    fn check(ls: &[&str], vars: &[&str]) -> AnalysisResult {
        let ls: Vec<Expr> = ls.iter().map(|t| e(t)).collect();
        check_condition_c(&ls, &syms(vars), &IftOptions::default()).unwrap()
    }

    #[test]
    fn first_intro_equation_is_immediate() {
        let r = check(&["x1*x2[-1] + x2*x2[-1] + e1"], &["x1", "x2"]);
        assert_eq!(r.verdict, Verdict::Yes);
        assert!(r.steps.is_empty());
        assert_eq!(r.theta, vec![e("x2")]);
        let imp = implicit_solve(&r, "xt").unwrap();
        assert_eq!(imp.eta[0], e("(-e1 - xt2*xt2[-1])/xt2[-1]"));
    }

    #[test]
    fn second_intro_equation_needs_one_step() {
        let b = "x1*x2[-1] + x1[-1]*x2*x2[-2] + e2";
        let r = check(&[b], &["x1", "x2"]);
        assert_eq!(r.verdict, Verdict::Yes);
        assert_eq!(r.steps.len(), 1);
        assert_eq!(r.steps[0].forward, e("x1*x2[-1]"));
        assert_eq!(r.theta, vec![e("x1*x2[-1]")]);
        assert!(r.stacked_cert.as_ref().unwrap().verify());
        let imp = implicit_solve(&r, "xt").unwrap();
        assert_eq!(imp.lambda_new[0], e("xt2 + xt2[-1]*xt1 + e2"));
        assert_eq!(imp.eta[0], e("(-e2 - xt2)/xt2[-1]"));
        let map = build_bicausal(&r, "xt", None).unwrap();
        assert_eq!(map.inverse[0], e("xt2*xt2[-2]/(xt1[-1] - xt2[-1] - e2)"));
        assert_eq!(map.to_old(&map.to_new(&e(b))), e(b));
    }

    #[test]
    fn third_intro_equation_fails() {
        let r = check(&["x1*x1[-1] + x2*x2[-1] + e3"], &["x1", "x2"]);
        assert_eq!(r.verdict, Verdict::No);
        match r.witness.unwrap() {
            Witness::NoCausalPair { scans, .. } => {
                assert_eq!(scans.len(), 2);
                assert!(scans.iter().all(|s| !s.causal));
            }
            w => panic!("unexpected witness {w:?}"),
        }
    }

    #[test]
    fn two_functions_three_variables() {
        let r = check(
            &[
                "x2*x1[-2] + x3[-1]*x2[-1]",
                "x3[-1]*x2[-1]*x1[-1] + x2*x1[-2]*x1 + x3[-1]*x2[-1]*x1",
            ],
            &["x1", "x2", "x3"],
        );
        assert_eq!(r.verdict, Verdict::Yes);
        assert_eq!(r.steps[0].forward, e("x2*x3"));
        assert_eq!(r.steps[1].forward, e("x2*x1[-2] + x2[-1]*x3[-1]"));
        assert_eq!(r.theta, vec![e("x1*x2*x3")]);
        let map = build_bicausal(&r, "xt", None).unwrap();
        assert!(map.certificate.verify());
    }

    #[test]
    fn two_functions_with_the_shorter_complement_is_not_bicausal() {
        let vars = syms(&["x1", "x2", "x3"]);
        let rows = [
            e("x2*x1[-2] + x3[-1]*x2[-1]"),
            e("x3[-1]*x2[-1]*x1[-1] + x2*x1[-2]*x1 + x3[-1]*x2[-1]*x1"),
            e("x2*x3"),
        ];
        let jac = jacobian(&rows, &vars).unwrap();
        assert!(!try_inverse(&jac, None).is_unimodular());
    }

    #[test]
    fn remark_examples() {
        let r = check(&["x1[-1]*x2 + x2^2"], &["x1", "x2"]);
        assert_eq!(r.verdict, Verdict::Yes);
        assert_eq!(r.theta, vec![e("x1")]);
        let r = check(&["(x1 + x1[-1])/x2[-1] + e1"], &["x1", "x2"]);
        assert_eq!(r.verdict, Verdict::No);
    }

    #[test]
    fn coordinate_function() {
        let r = check(&["x1"], &["x1", "x2"]);
        assert_eq!(r.verdict, Verdict::Yes);
        assert_eq!(r.theta, vec![e("x2")]);
        let imp = implicit_solve(&r, "xt").unwrap();
        assert_eq!(imp.eta[0], Expr::zero());
    }

    #[test]
    fn delayed_coordinate_is_not_closed() {
        let r = check(&["x1[-1]"], &["x1", "x2"]);
        assert_eq!(r.verdict, Verdict::No);
        assert!(matches!(r.witness, Some(Witness::NonUnitTerminal { .. })));
    }

    #[test]
    fn closure_mode_returns_generator() {
        let l = e("x1[-1] + x2[-2]");
        let opts = IftOptions {
            closure: true,
            ..IftOptions::default()
        };
        let r = check_condition_c(&[l], &syms(&["x1", "x2"]), &opts).unwrap();
        assert_eq!(r.verdict, Verdict::Yes);
        assert_eq!(r.pivots[0].kind, PivotKind::Closure);
        assert_eq!(r.pivots[0].forward, e("x1 + x2[-1]"));
    }

    #[test]
    fn dependent_functions_are_rejected() {
        let ls = vec![e("x1*x2"), e("x1[-1]*x2[-1]")];
        let err = check_condition_c(&ls, &syms(&["x1", "x2"]), &IftOptions::default()).unwrap_err();
        assert!(matches!(err, IftError::Dimension { rank: 1, expected: 2 }));
    }

    #[test]
    fn pair_selection_prefers_single_terms() {
        let c = ctx();
        let alpha = vec![
            SkewPoly::parse("x2*d^2", &c).unwrap(),
            SkewPoly::parse("x1[-2] + x3[-1]*d", &c).unwrap(),
            SkewPoly::parse("x2[-1]*d", &c).unwrap(),
        ];
        let sel = select_pair(&alpha);
        let ch = sel.choice.unwrap();
        assert_eq!((ch.r, ch.s), (2, 1));
        assert_eq!(ch.ratio, e("x3/x2"));
    }

    #[test]
    fn peeling_inverts_triangular_maps() {
        let c = Context::new(&["x1", "x2", "x3", "x4", "y1", "y2", "y3", "y4"], &["c"]);
        let p = |t: &str| parse_expr(t, &c).unwrap();
        let vars = syms(&["x1", "x2", "x3", "x4"]);
        let ys = syms(&["y1", "y2", "y3", "y4"]);
        let fwd = vec![
            p("x1"),
            p("x2*x1[-1]"),
            p("1 + x2[-1]*x1[-2] - x4*x1[-1]"),
            p("x1[-1] + x3*x2[-1] - ln(c)"),
        ];
        let inv = invert_by_peeling(&fwd, &vars, &ys).unwrap();
        let map = BicausalMap::new(&vars, &ys, fwd, inv, None).unwrap();
        assert_eq!(map.inverse[1], p("y2/y1[-1]"));
    }
}
