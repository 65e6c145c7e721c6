//! Method-of-steps integration of delayed ODEs `ẋ = f(x, x(-k), ẋ(-j))`,
//! map-back through a bicausal change of coordinates and residual checks.
//!
//! Times on the grid are stored as half-step indices `q` with `t = q·h/2`, so
//! every stage time and every unit delay lands on an exact index.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::ddae::{derivative_sym, DDAESystem, NeutralODE};
use crate::expr::{AtomValues, DelayedVar, EvalError, Expr, Sym};
use crate::ift::BicausalMap;
use crate::problem::HISTORY_TIME;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("bad grid: {0}")]
    Grid(String),
    #[error("step failure at t = {t}: {message}")]
    Step { t: f64, message: String },
    #[error("t = {needed} is needed but the data start at t = {available}")]
    Coverage { needed: f64, available: f64 },
    #[error("history: {0}")]
    History(String),
    #[error("csv: {0}")]
    Csv(String),
}

/// One-sided limits at breakpoints, where the derivative may jump.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Debug)]
pub enum HistoryComponent {
    Closed { value: Expr, deriv: Expr },
    Samples { s: Vec<f64>, x: Vec<f64>, dx: Vec<f64> },
}

/// Initial data on `[-length, 0]`.
#[derive(Clone, Debug)]
pub struct History {
    pub vars: Vec<Sym>,
    pub comps: Vec<HistoryComponent>,
    pub length: f64,
    pub consts: BTreeMap<Sym, f64>,
}

struct TimeValues<'a> {
    s: f64,
    consts: &'a BTreeMap<Sym, f64>,
}

impl AtomValues for TimeValues<'_> {
    fn var(&self, v: DelayedVar) -> Option<f64> {
        (v.var.name() == HISTORY_TIME && v.shift == 0).then_some(self.s)
    }
    fn constant(&self, c: Sym) -> Option<f64> {
        self.consts.get(&c).copied()
    }
}

fn hermite(s0: f64, s1: f64, x0: f64, x1: f64, d0: f64, d1: f64, s: f64) -> (f64, f64) {
    let h = s1 - s0;
    let u = (s - s0) / h;
    let (u2, u3) = (u * u, u * u * u);
    let value = (2.0 * u3 - 3.0 * u2 + 1.0) * x0
        + (u3 - 2.0 * u2 + u) * h * d0
        + (-2.0 * u3 + 3.0 * u2) * x1
        + (u3 - u2) * h * d1;
    let deriv = ((6.0 * u2 - 6.0 * u) * x0 + (-6.0 * u2 + 6.0 * u) * x1) / h
        + (3.0 * u2 - 4.0 * u + 1.0) * d0
        + (3.0 * u2 - 2.0 * u) * d1;
    (value, deriv)
}

impl History {
    /// Closed-form history, one expression in `s` per variable.
    pub fn closed(vars: Vec<Sym>, exprs: Vec<Expr>, length: f64, consts: BTreeMap<Sym, f64>) -> History {
        let s = DelayedVar::named(HISTORY_TIME, 0);
        let comps = exprs
            .into_iter()
            .map(|value| HistoryComponent::Closed {
                deriv: value.partial(&s),
                value,
            })
            .collect();
        History {
            vars,
            comps,
            length,
            consts,
        }
    }

    /// Samples from CSV with a time column `s` or `t`, one column per
    /// variable and optional derivative columns `d<var>`.
    pub fn from_csv(text: &str, vars: &[Sym]) -> Result<History, SolverError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| SolverError::Csv(e.to_string()))?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let tcol = col("s")
            .or_else(|| col("t"))
            .ok_or_else(|| SolverError::Csv("no time column `s` or `t`".into()))?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| SolverError::Csv(e.to_string()))?;
            let row = rec
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| SolverError::Csv(format!("`{f}` is not a number"))))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        rows.sort_by(|a, b| a[tcol].total_cmp(&b[tcol]));
        if rows.len() < 2 {
            return Err(SolverError::Csv("at least two samples are needed".into()));
        }
        let s: Vec<f64> = rows.iter().map(|r| r[tcol]).collect();
        if s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SolverError::Csv("sample times must be distinct".into()));
        }
        if s.last().is_some_and(|&t| t.abs() > 1e-12) {
            return Err(SolverError::Csv("samples must end at 0".into()));
        }
        let mut comps = Vec::new();
        for v in vars {
            let name = v.name();
            let c = col(&name).ok_or_else(|| SolverError::Csv(format!("no column for {name}")))?;
            let x: Vec<f64> = rows.iter().map(|r| r[c]).collect();
            let dx = match col(&format!("d{name}")) {
                Some(dc) => rows.iter().map(|r| r[dc]).collect(),
                None => finite_differences(&s, &x),
            };
            comps.push(HistoryComponent::Samples {
                s: s.clone(),
                x,
                dx,
            });
        }
        Ok(History {
            vars: vars.to_vec(),
            comps,
            length: -s[0],
            consts: BTreeMap::new(),
        })
    }

    pub fn eval(&self, i: usize, s: f64) -> Result<(f64, f64), SolverError> {
        if s < -self.length - 1e-12 || s > 1e-12 {
            return Err(SolverError::Coverage {
                needed: s,
                available: -self.length,
            });
        }
        match &self.comps[i] {
            HistoryComponent::Closed { value, deriv } => {
                let src = TimeValues { s, consts: &self.consts };
                let e = |x: EvalError| SolverError::History(format!("{} at s = {s}: {x}", self.vars[i]));
                Ok((value.eval_with(&src).map_err(e)?, deriv.eval_with(&src).map_err(e)?))
            }
            HistoryComponent::Samples { s: ts, x, dx } => {
                let k = ts.partition_point(|&t| t <= s).clamp(1, ts.len() - 1);
                Ok(hermite(ts[k - 1], ts[k], x[k - 1], x[k], dx[k - 1], dx[k], s))
            }
        }
    }
}

fn finite_differences(s: &[f64], x: &[f64]) -> Vec<f64> {
    let n = s.len();
    (0..n)
        .map(|i| {
            let (a, b, c) = if i == 0 {
                (0, 1, 2.min(n - 1))
            } else if i == n - 1 {
                (n.saturating_sub(3), n - 2, n - 1)
            } else {
                (i - 1, i, i + 1)
            };
            if a == c || b == c {
                return (x[b] - x[a]) / (s[b] - s[a]);
            }
            // derivative of the quadratic through three samples, at s[i]
            let t = s[i];
            let la = ((t - s[b]) + (t - s[c])) / ((s[a] - s[b]) * (s[a] - s[c]));
            let lb = ((t - s[a]) + (t - s[c])) / ((s[b] - s[a]) * (s[b] - s[c]));
            let lc = ((t - s[a]) + (t - s[b])) / ((s[c] - s[a]) * (s[c] - s[b]));
            la * x[a] + lb * x[b] + lc * x[c]
        })
        .collect()
}

/// Values and one-sided derivatives on the grid `t = i/m`, `i = start..`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub vars: Vec<Sym>,
    pub m: i64,
    pub start: i64,
    pub values: Vec<Vec<f64>>,
    pub left: Vec<Vec<f64>>,
    pub right: Vec<Vec<f64>>,
    pub history: Option<History>,
    pub warnings: Vec<String>,
}

fn lagrange_at(nodes: &[f64], values: &[f64], t: f64) -> f64 {
    let mut acc = 0.0;
    for (k, (&tk, &vk)) in nodes.iter().zip(values).enumerate() {
        let mut w = 1.0;
        for (l, &tl) in nodes.iter().enumerate() {
            if l != k {
                w *= (t - tl) / (tk - tl);
            }
        }
        acc += w * vk;
    }
    acc
}

impl Trajectory {
    pub fn h(&self) -> f64 {
        1.0 / self.m as f64
    }

    pub fn len(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn last(&self) -> i64 {
        self.start + self.len() as i64 - 1
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (self.start..=self.last()).map(|i| i as f64 / self.m as f64)
    }

    pub fn index_of(&self, v: Sym) -> Option<usize> {
        self.vars.iter().position(|&s| s == v)
    }

    fn from_history(&self, q: i64, side: Side) -> bool {
        self.history.is_some() && (q < 0 || (q == 0 && side == Side::Left))
    }

    fn check(&self, q: i64) -> Result<(), SolverError> {
        if q < 2 * self.start || q > 2 * self.last() {
            return Err(SolverError::Coverage {
                needed: q as f64 / (2 * self.m) as f64,
                available: self.start as f64 / self.m as f64,
            });
        }
        Ok(())
    }

    fn node_deriv(&self, var: usize, i: i64, side: Side) -> f64 {
        let k = (i - self.start) as usize;
        match side {
            Side::Left => self.left[var][k],
            Side::Right => self.right[var][k],
        }
    }

    /// Value at half-step index `q`.
    pub fn value(&self, var: usize, q: i64, side: Side) -> Result<f64, SolverError> {
        if self.from_history(q, side) {
            let hist = self.history.as_ref().unwrap();
            return Ok(hist.eval(var, q as f64 / (2 * self.m) as f64)?.0);
        }
        self.check(q)?;
        if q % 2 == 0 {
            return Ok(self.values[var][(q / 2 - self.start) as usize]);
        }
        let i = (q - 1) / 2;
        let k = (i - self.start) as usize;
        let (x0, x1) = (self.values[var][k], self.values[var][k + 1]);
        let (d0, d1) = (self.right[var][k], self.left[var][k + 1]);
        Ok((x0 + x1) / 2.0 + self.h() / 8.0 * (d0 - d1))
    }

    /// Derivative at half-step index `q`, interpolated from the stored
    /// derivative sequence of the enclosing unit segment.
    pub fn deriv(&self, var: usize, q: i64, side: Side) -> Result<f64, SolverError> {
        if self.from_history(q, side) {
            let hist = self.history.as_ref().unwrap();
            return Ok(hist.eval(var, q as f64 / (2 * self.m) as f64)?.1);
        }
        self.check(q)?;
        if q % 2 == 0 {
            return Ok(self.node_deriv(var, q / 2, side));
        }
        let i = (q - 1) / 2;
        let seg_lo = i.div_euclid(self.m) * self.m;
        let lo = seg_lo.max(self.start);
        let hi = (seg_lo + self.m).min(self.last());
        if hi - lo < 3 {
            let (a, b) = (self.node_deriv(var, i, Side::Right), self.node_deriv(var, i + 1, Side::Left));
            return Ok((a + b) / 2.0);
        }
        let a = (i - 1).clamp(lo, hi - 3);
        let nodes: Vec<f64> = (a..a + 4).map(|j| j as f64).collect();
        let vals: Vec<f64> = (a..a + 4)
            .map(|j| {
                let side = if j == seg_lo + self.m { Side::Left } else { Side::Right };
                self.node_deriv(var, j, side)
            })
            .collect();
        Ok(lagrange_at(&nodes, &vals, i as f64 + 0.5))
    }

    /// CSV `t, x1, ..., xn, dx1, ..., dxn` with right-hand derivatives.
    pub fn to_csv(&self) -> Result<String, SolverError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["t".to_string()];
        header.extend(self.vars.iter().map(|v| v.name()));
        header.extend(self.vars.iter().map(|v| format!("d{v}")));
        w.write_record(&header).map_err(|e| SolverError::Csv(e.to_string()))?;
        for (k, t) in self.times().enumerate() {
            let mut row = vec![format!("{t:.10}")];
            row.extend(self.values.iter().map(|v| format!("{:.12e}", v[k])));
            row.extend(self.right.iter().map(|v| format!("{:.12e}", v[k])));
            w.write_record(&row).map_err(|e| SolverError::Csv(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| SolverError::Csv(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| SolverError::Csv(e.to_string()))
    }
}

/// Atom values at one time: states, delayed states and delayed
/// derivatives read from a trajectory.
struct Lookup<'a> {
    traj: &'a Trajectory,
    state: &'a HashMap<Sym, usize>,
    derivs: &'a HashMap<Sym, usize>,
    current: Option<&'a [f64]>,
    q: i64,
    side: Side,
    consts: &'a BTreeMap<Sym, f64>,
    error: std::cell::RefCell<Option<SolverError>>,
}

impl AtomValues for Lookup<'_> {
    fn var(&self, v: DelayedVar) -> Option<f64> {
        let q = self.q - 2 * self.traj.m * v.shift as i64;
        let r = if let Some(&i) = self.state.get(&v.var) {
            match (v.shift, self.current) {
                (0, Some(cur)) => Ok(cur[i]),
                _ => self.traj.value(i, q, self.side),
            }
        } else if let Some(&i) = self.derivs.get(&v.var) {
            if v.shift <= 0 && self.current.is_some() {
                return None;
            }
            self.traj.deriv(i, q, self.side)
        } else {
            return None;
        };
        match r {
            Ok(x) => Some(x),
            Err(e) => {
                *self.error.borrow_mut() = Some(e);
                None
            }
        }
    }
    fn constant(&self, c: Sym) -> Option<f64> {
        self.consts.get(&c).copied()
    }
}

fn index_maps(vars: &[Sym]) -> (HashMap<Sym, usize>, HashMap<Sym, usize>) {
    let state = vars.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let derivs = vars.iter().enumerate().map(|(i, &s)| (derivative_sym(s), i)).collect();
    (state, derivs)
}

fn eval_at(
    e: &Expr,
    traj: &Trajectory,
    maps: &(HashMap<Sym, usize>, HashMap<Sym, usize>),
    current: Option<&[f64]>,
    q: i64,
    side: Side,
    consts: &BTreeMap<Sym, f64>,
) -> Result<f64, SolverError> {
    let src = Lookup {
        traj,
        state: &maps.0,
        derivs: &maps.1,
        current,
        q,
        side,
        consts,
        error: Default::default(),
    };
    e.eval_with(&src).map_err(|err| {
        src.error.borrow_mut().take().unwrap_or_else(|| SolverError::Step {
            t: q as f64 / (2 * traj.m) as f64,
            message: err.to_string(),
        })
    })
}

/// Number of grid intervals per unit delay for step `h`.
pub fn steps_per_unit(h: f64) -> Result<i64, SolverError> {
    if !(h > 0.0 && h <= 1.0) {
        return Err(SolverError::Grid(format!("step {h} outside (0, 1]")));
    }
    let m = (1.0 / h).round();
    if ((1.0 / h) - m).abs() > 1e-9 {
        return Err(SolverError::Grid(format!("1/h = {} is not an integer", 1.0 / h)));
    }
    Ok(m as i64)
}

/// Jump of the derivative at `t = 0` beyond which a warning is recorded.
pub const HISTORY_JUMP_WARNING: f64 = 1e-6;

/// Integrate `ode` over `[0, t_end]` with classical RK4 on steps of `h`,
/// restarting at every unit breakpoint. Free inputs are set to zero.
pub fn solve_steps(
    ode: &NeutralODE,
    hist: &History,
    consts: &BTreeMap<Sym, f64>,
    t_end: f64,
    h: f64,
) -> Result<Trajectory, SolverError> {
    let m = steps_per_unit(h)?;
    let n = ode.vars.len();
    if hist.vars != ode.vars {
        return Err(SolverError::History(format!(
            "history is for [{}], the system is in [{}]",
            hist.vars.iter().map(|s| s.name()).collect::<Vec<_>>().join(", "),
            ode.vars.iter().map(|s| s.name()).collect::<Vec<_>>().join(", ")
        )));
    }
    let need = ode.max_delay_state.max(ode.max_delay_deriv) as f64;
    if hist.length + 1e-12 < need {
        return Err(SolverError::Coverage {
            needed: -need,
            available: -hist.length,
        });
    }
    let start = -((hist.length * m as f64 + 1e-9).floor() as i64);
    let last = (t_end * m as f64).round() as i64;
    if last < 0 {
        return Err(SolverError::Grid(format!("horizon {t_end} is negative")));
    }
    let total = (last - start + 1) as usize;
    let mut traj = Trajectory {
        vars: ode.vars.clone(),
        m,
        start,
        values: vec![vec![f64::NAN; total]; n],
        left: vec![vec![f64::NAN; total]; n],
        right: vec![vec![f64::NAN; total]; n],
        history: Some(hist.clone()),
        warnings: Vec::new(),
    };
    for i in start..=0 {
        let k = (i - start) as usize;
        for v in 0..n {
            let (x, d) = hist.eval(v, i as f64 / m as f64)?;
            traj.values[v][k] = x;
            traj.left[v][k] = d;
            traj.right[v][k] = d;
        }
    }
    let maps = index_maps(&ode.vars);
    let f = |traj: &Trajectory, x: &[f64], q: i64, side: Side| -> Result<Vec<f64>, SolverError> {
        ode.rhs
            .iter()
            .map(|r| eval_at(r, traj, &maps, Some(x), q, side, consts))
            .collect()
    };
    let k0 = (-start) as usize;
    let x0: Vec<f64> = (0..n).map(|v| traj.values[v][k0]).collect();
    let d0 = f(&traj, &x0, 0, Side::Right)?;
    for v in 0..n {
        traj.right[v][k0] = d0[v];
        let jump = (d0[v] - traj.left[v][k0]).abs();
        if jump > HISTORY_JUMP_WARNING * (1.0 + d0[v].abs()) {
            traj.warnings.push(format!(
                "incompatible history: derivative of {} jumps by {jump:.3e} at t = 0",
                ode.vars[v]
            ));
        }
    }
    for i in 0..last {
        let k = (i - start) as usize;
        let x: Vec<f64> = (0..n).map(|v| traj.values[v][k]).collect();
        let q = 2 * i;
        let k1: Vec<f64> = (0..n).map(|v| traj.right[v][k]).collect();
        let y2: Vec<f64> = (0..n).map(|v| x[v] + h / 2.0 * k1[v]).collect();
        let k2 = f(&traj, &y2, q + 1, Side::Right)?;
        let y3: Vec<f64> = (0..n).map(|v| x[v] + h / 2.0 * k2[v]).collect();
        let k3 = f(&traj, &y3, q + 1, Side::Right)?;
        let y4: Vec<f64> = (0..n).map(|v| x[v] + h * k3[v]).collect();
        let k4 = f(&traj, &y4, q + 2, Side::Left)?;
        let next: Vec<f64> = (0..n)
            .map(|v| x[v] + h / 6.0 * (k1[v] + 2.0 * k2[v] + 2.0 * k3[v] + k4[v]))
            .collect();
        if let Some(v) = next.iter().position(|x| !x.is_finite()) {
            return Err(SolverError::Step {
                t: (i + 1) as f64 / m as f64,
                message: format!("{} is not finite", ode.vars[v]),
            });
        }
        for v in 0..n {
            traj.values[v][k + 1] = next[v];
        }
        let dl = f(&traj, &next, q + 2, Side::Left)?;
        let breakpoint = (i + 1) % m == 0;
        let dr = if breakpoint {
            for v in 0..n {
                traj.left[v][k + 1] = dl[v];
            }
            f(&traj, &next, q + 2, Side::Right)?
        } else {
            dl.clone()
        };
        for v in 0..n {
            traj.left[v][k + 1] = dl[v];
            traj.right[v][k + 1] = dr[v];
        }
    }
    Ok(traj)
}

/// Total time derivative of `e`: `Σ ∂e/∂v(-j) · v'(-j)`.
pub fn time_derivative(e: &Expr) -> Expr {
    e.vars().into_iter().fold(Expr::zero(), |acc, v| {
        &acc + &(&e.partial(&v) * &Expr::var(DelayedVar::new(derivative_sym(v.var), v.shift)))
    })
}

/// `x(t) = Φ⁻¹(z(t), 0, ..., 0)` along a trajectory of the reduced
/// coordinates, with the constraint coordinates `zbar` set to zero.
pub fn map_back(
    traj: &Trajectory,
    phi: &BicausalMap,
    zbar: &[Sym],
    consts: &BTreeMap<Sym, f64>,
) -> Result<Trajectory, SolverError> {
    let rules: BTreeMap<Sym, Expr> = zbar.iter().map(|&s| (s, Expr::zero())).collect();
    let exprs: Vec<Expr> = phi.inverse.iter().map(|e| e.substitute(&rules)).collect();
    let derivs: Vec<Expr> = exprs.iter().map(time_derivative).collect();
    for e in &exprs {
        if let Some(v) = e.vars().into_iter().find(|v| traj.index_of(v.var).is_none()) {
            return Err(SolverError::History(format!("{} is not a trajectory variable", v.var)));
        }
    }
    let delay = exprs
        .iter()
        .flat_map(|e| e.vars())
        .map(|v| v.shift.max(0) as i64)
        .max()
        .unwrap_or(0);
    let start = traj.start + traj.m * delay;
    if start > 0 {
        return Err(SolverError::Coverage {
            needed: -(delay as f64),
            available: traj.start as f64 / traj.m as f64,
        });
    }
    let last = traj.last();
    let total = (last - start + 1) as usize;
    let n = exprs.len();
    let mut out = Trajectory {
        vars: phi.vars.clone(),
        m: traj.m,
        start,
        values: vec![vec![0.0; total]; n],
        left: vec![vec![0.0; total]; n],
        right: vec![vec![0.0; total]; n],
        history: None,
        warnings: traj.warnings.clone(),
    };
    let maps = index_maps(&traj.vars);
    for i in start..=last {
        let k = (i - start) as usize;
        let q = 2 * i;
        for v in 0..n {
            out.values[v][k] = eval_at(&exprs[v], traj, &maps, None, q, Side::Right, consts)?;
            out.right[v][k] = eval_at(&derivs[v], traj, &maps, None, q, Side::Right, consts)?;
            out.left[v][k] = if i % traj.m == 0 && i > start {
                eval_at(&derivs[v], traj, &maps, None, q, Side::Left, consts)?
            } else {
                out.right[v][k]
            };
        }
    }
    Ok(out)
}

/// Largest `|e|` along the covered nodes of `traj`.
pub fn max_abs_along(exprs: &[Expr], traj: &Trajectory, consts: &BTreeMap<Sym, f64>) -> Result<f64, SolverError> {
    let maps = index_maps(&traj.vars);
    let delay = exprs
        .iter()
        .flat_map(|e| e.vars())
        .map(|v| v.shift.max(0) as i64)
        .max()
        .unwrap_or(0);
    let mut worst: f64 = 0.0;
    for i in traj.start + traj.m * delay..=traj.last() {
        for e in exprs {
            worst = worst.max(eval_at(e, traj, &maps, None, 2 * i, Side::Right, consts)?.abs());
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    pub max: f64,
    pub at: f64,
    pub row: usize,
    pub window: (f64, f64),
    pub samples: usize,
}

/// `‖E(x,δ)ẋ − F(x)‖∞` over nodes and midpoints of `[from, T]`, clipped to
/// where the trajectory covers every delay.
pub fn residual(
    sys: &DDAESystem,
    traj: &Trajectory,
    consts: &BTreeMap<Sym, f64>,
    from: f64,
) -> Result<ResidualReport, SolverError> {
    let m = traj.m;
    let delay = sys.max_delay_state().max(sys.max_delay_deriv()) as i64;
    let q_lo = (2 * (traj.start + m * delay)).max((from * 2.0 * m as f64).ceil() as i64);
    let q_hi = 2 * traj.last();
    let maps = index_maps(&traj.vars);
    let mut report = ResidualReport {
        max: 0.0,
        at: q_lo as f64 / (2 * m) as f64,
        row: 0,
        window: (q_lo as f64 / (2 * m) as f64, q_hi as f64 / (2 * m) as f64),
        samples: 0,
    };
    let cols: Vec<usize> = sys
        .vars
        .iter()
        .map(|v| {
            traj.index_of(*v)
                .ok_or_else(|| SolverError::History(format!("{v} is not a trajectory variable")))
        })
        .collect::<Result<_, _>>()?;
    for q in q_lo..=q_hi {
        for (row, f) in sys.f.iter().enumerate() {
            let mut lhs = 0.0;
            for (c, &col) in cols.iter().enumerate() {
                for (j, coef) in sys.e[(row, c)].coeffs() {
                    let a = eval_at(coef, traj, &maps, None, q, Side::Right, consts)?;
                    let d = traj.deriv(col, q - 2 * m * *j as i64, Side::Right)?;
                    lhs += a * d;
                }
            }
            let r = (lhs - eval_at(f, traj, &maps, None, q, Side::Right, consts)?).abs();
            if r > report.max || r.is_nan() {
                report.max = r;
                report.at = q as f64 / (2 * m) as f64;
                report.row = row;
            }
        }
        report.samples += 1;
    }
    Ok(report)
}
