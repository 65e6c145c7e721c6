//! Reduce, solve, map back and check a DDAE end to end.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::ddae::{explicit_form, reduce_index, DDAESystem, DdaeError, NeutralODE, ReduceOptions, ReductionResult};
use crate::expr::{DelayedVar, Expr, Sym};
use crate::problem::HISTORY_TIME;
use crate::solver::{map_back, max_abs_along, residual, solve_steps, History, ResidualReport, SolverError, Trajectory};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ddae(#[from] DdaeError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("history: {0}")]
    History(String),
}

#[derive(Clone, Debug)]
pub enum HistorySpec {
    /// Expressions in `s`, keyed by original or reduced variable.
    Closed(BTreeMap<Sym, Expr>),
    /// CSV samples in the reduced coordinates.
    Csv(String),
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub t_end: f64,
    pub h: f64,
    /// Length of a closed-form history; the default covers every lookup of
    /// the residual check.
    pub history_length: Option<f64>,
    pub reduce: ReduceOptions,
}

#[derive(Clone, Debug, Serialize)]
pub struct HistoryInfo {
    pub coordinates: &'static str,
    pub length: f64,
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub reduction: ReductionResult,
    pub ode: NeutralODE,
    pub history: HistoryInfo,
    pub reduced: Trajectory,
    pub original: Trajectory,
    pub residual: ResidualReport,
    /// Largest `|z̄|` of every recorded constraint along `original`.
    pub constraint_max: f64,
}

fn delay_of(es: &[Expr]) -> f64 {
    es.iter()
        .flat_map(|e| e.vars())
        .map(|v| v.shift.max(0))
        .max()
        .unwrap_or(0) as f64
}

/// `e(x(s))` for closed-form `x`, with `x_j(-k)` read as `hist_j(s - k)`.
fn compose_history(e: &Expr, hist: &BTreeMap<Sym, Expr>) -> Result<Expr, PipelineError> {
    let s = DelayedVar::named(HISTORY_TIME, 0);
    let mut missing = None;
    let out = e.map_vars(&mut |v| match hist.get(&v.var) {
        Some(h) => {
            let shifted = Expr::var(s) - Expr::int(v.shift as i64);
            let rules = BTreeMap::from([(s.var, shifted)]);
            Some(h.substitute(&rules))
        }
        None => {
            missing = Some(v.var);
            None
        }
    });
    match missing {
        Some(v) => Err(PipelineError::History(format!("no history for {v}"))),
        None => Ok(out),
    }
}

pub fn solve_system(
    sys: &DDAESystem,
    hist: &HistorySpec,
    consts: &BTreeMap<Sym, f64>,
    opts: &SolveOptions,
) -> Result<SolveOutcome, PipelineError> {
    let reduction = reduce_index(sys, &opts.reduce)?;
    let ode = explicit_form(&reduction.reduced)?;
    let zero_rules: BTreeMap<Sym, Expr> = reduction.zbar.iter().map(|&s| (s, Expr::zero())).collect();
    let inverse: Vec<Expr> = reduction.phi.inverse.iter().map(|e| e.substitute(&zero_rules)).collect();
    let inv_delay = delay_of(&inverse);
    let ode_delay = ode.max_delay_state.max(ode.max_delay_deriv) as f64;
    let orig_delay = sys.max_delay_state().max(sys.max_delay_deriv()) as f64;
    let needed = ode_delay
        .max(inv_delay)
        .max(inv_delay + orig_delay - reduction.lag as f64);
    let reduced_vars = reduction.reduced.vars.clone();
    let (history, info) = match hist {
        HistorySpec::Csv(text) => {
            let mut h = History::from_csv(text, &reduced_vars)?;
            h.consts = consts.clone();
            let len = h.length;
            (h, HistoryInfo { coordinates: "reduced", length: len })
        }
        HistorySpec::Closed(map) => {
            let length = opts.history_length.unwrap_or(needed);
            let (exprs, coordinates) = if reduced_vars.iter().all(|v| map.contains_key(v)) {
                (reduced_vars.iter().map(|v| map[v].clone()).collect::<Vec<_>>(), "reduced")
            } else {
                let forward = &reduction.phi.forward[..reduced_vars.len()];
                let exprs = forward
                    .iter()
                    .map(|f| compose_history(f, map))
                    .collect::<Result<Vec<_>, _>>()?;
                (exprs, "original")
            };
            (
                History::closed(reduced_vars.clone(), exprs, length, consts.clone()),
                HistoryInfo { coordinates, length },
            )
        }
    };
    let reduced = solve_steps(&ode, &history, consts, opts.t_end, opts.h)?;
    let original = map_back(&reduced, &reduction.phi, &reduction.zbar, consts)?;
    let res = residual(sys, &original, consts, reduction.lag as f64)?;
    let zbar_exprs = &reduction.phi.forward[reduced_vars.len()..];
    let constraint_max = max_abs_along(zbar_exprs, &original, consts)?;
    Ok(SolveOutcome {
        reduction,
        ode,
        history: info,
        reduced,
        original,
        residual: res,
        constraint_max,
    })
}
