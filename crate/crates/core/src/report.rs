//! Reports for the `check`, `reduce` and `solve` commands: a JSON value with
//! sorted keys and a plain-text rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde_json::{json, Value};
use thiserror::Error;

use crate::ddae::{explicit_form, reduce_index, DdaeError, ReduceOptions, ReductionResult};
use crate::expr::{zero, Expr, Sym};
use crate::forms::PfaffianOptions;
use crate::ift::{check_condition_c, implicit_solve, AnalysisResult, IftOptions, Verdict};
use crate::pipeline::{solve_system, HistorySpec, PipelineError, SolveOptions};
use crate::problem::Problem;

pub const SCHEMA: &str = "delay-ift/report/1";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Ift(#[from] crate::ift::IftError),
    #[error(transparent)]
    Ddae(#[from] DdaeError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Clone, Debug)]
pub struct Settings {
    pub seed: u64,
    pub samples: usize,
    pub degree_bound: Option<u32>,
    pub factor_box: i32,
    /// Residual threshold for `solve`.
    pub tol: f64,
    pub trace: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            seed: 0x5eed,
            samples: 8,
            degree_bound: None,
            factor_box: PfaffianOptions::default().factor_box,
            tol: 1e-6,
            trace: false,
        }
    }
}

impl Settings {
    fn apply(&self) -> IftOptions {
        zero::configure(self.seed, self.samples);
        IftOptions {
            degree_bound: self.degree_bound,
            pfaffian: PfaffianOptions {
                factor_box: self.factor_box,
            },
            ..IftOptions::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct Report {
    pub command: &'static str,
    pub verdict: Verdict,
    pub json: Value,
    pub text: String,
    /// Extra outputs by kind, e.g. `("reduced", <problem file>)`.
    pub artifacts: Vec<(String, String)>,
}

impl Report {
    /// 0 for YES, 2 for NO, 3 when undecided.
    pub fn exit_code(&self) -> i32 {
        match self.verdict {
            Verdict::Yes => 0,
            Verdict::No => 2,
            Verdict::Inconclusive => 3,
        }
    }
}

fn strs(es: &[Expr]) -> Vec<String> {
    es.iter().map(|e| e.to_string()).collect()
}

fn names(ss: &[Sym]) -> Vec<String> {
    ss.iter().map(|s| s.to_string()).collect()
}

/// `x_pivot = ...` in original variables, when the pivots and `θ` are all
/// plain variables.
fn explicit_solution(res: &AnalysisResult, eta: &[Expr], new_vars: &[Sym]) -> Option<Vec<(Sym, Expr)>> {
    let p = res.pivots.len();
    let mut rules = BTreeMap::new();
    for (t, nv) in res.theta.iter().zip(&new_vars[p..]) {
        let v = t.as_var().filter(|v| v.shift == 0)?;
        rules.insert(*nv, Expr::var(v));
    }
    res.pivots
        .iter()
        .zip(eta)
        .map(|(pv, e)| {
            let v = pv.forward.as_var().filter(|v| v.shift == 0)?;
            Some((v.var, e.substitute(&rules)))
        })
        .collect()
}

pub fn check(problem: &Problem, settings: &Settings) -> Result<Report, ReportError> {
    if problem.equations.is_empty() {
        return Err(ReportError::Usage("the problem has no `eq` lines".into()));
    }
    let opts = settings.apply();
    let lambdas: Vec<Expr> = problem.equations.iter().map(|(_, e)| e.clone()).collect();
    let res = check_condition_c(&lambdas, &problem.vars, &opts)?;
    let mut text = String::new();
    let _ = writeln!(text, "check: {:?}", res.verdict);
    for (name, e) in &problem.equations {
        let _ = writeln!(text, "  {name} = {e}");
    }
    let mut j = json!({
        "schema": SCHEMA,
        "command": "check",
        "verdict": res.verdict,
        "seed": settings.seed,
        "vars": names(&problem.vars),
        "equations": problem.equations.iter().map(|(n, e)| json!({"name": n, "expr": e.to_string()})).collect::<Vec<_>>(),
        "steps": res.steps,
        "pivots": res.pivots,
        "probabilistic": res.probabilistic,
    });
    if let Some(w) = &res.witness {
        j["witness"] = json!(w);
        let _ = writeln!(text, "  witness: {}", serde_json::to_string(w).unwrap_or_default());
    }
    if let Some(u) = &res.undecided {
        j["undecided"] = json!(u);
        let _ = writeln!(text, "  undecided: {}", serde_json::to_string(u).unwrap_or_default());
    }
    if res.verdict == Verdict::Yes {
        let _ = writeln!(text, "  theta = [{}]", strs(&res.theta).join(", "));
        j["theta"] = json!(strs(&res.theta));
    }
    let implicit = match res.verdict {
        Verdict::Yes => Some(implicit_solve(&res, "xt")),
        _ => None,
    };
    if let Some(Err(e)) = &implicit {
        let _ = writeln!(text, "  implicit solution not available: {e}");
        j["implicit_error"] = json!(e.to_string());
    }
    if let Some(Ok(imp)) = implicit {
        let p = res.pivots.len();
        let coords: Vec<Value> = res
            .pivots
            .iter()
            .map(|pv| pv.forward.clone())
            .chain(res.theta.iter().cloned())
            .zip(&imp.new_vars)
            .map(|(f, v)| json!({"name": v.to_string(), "forward": f.to_string()}))
            .collect();
        for c in &coords {
            let _ = writeln!(text, "  {} = {}", c["name"].as_str().unwrap_or(""), c["forward"].as_str().unwrap_or(""));
        }
        for (l, ln) in problem.equations.iter().zip(&imp.lambda_new) {
            let _ = writeln!(text, "  {} in new coordinates: {ln}", l.0);
        }
        for (v, e) in imp.new_vars[..p].iter().zip(&imp.eta) {
            let _ = writeln!(text, "  solve: {v} = {e}");
        }
        j["coordinates"] = json!(coords);
        j["implicit"] = json!({
            "lambda_new": strs(&imp.lambda_new),
            "eta": imp.new_vars[..p].iter().zip(&imp.eta).map(|(v, e)| json!({"var": v.to_string(), "expr": e.to_string()})).collect::<Vec<_>>(),
        });
        if let Some(sol) = explicit_solution(&res, &imp.eta, &imp.new_vars) {
            for (v, e) in &sol {
                let _ = writeln!(text, "  explicit: {v} = {e}");
            }
            j["explicit"] = json!(sol
                .iter()
                .map(|(v, e)| json!({"var": v.to_string(), "expr": e.to_string()}))
                .collect::<Vec<_>>());
        }
    }
    if res.verdict == Verdict::Yes {
        if let Some(c) = &res.stacked_cert {
            let ok = c.verify();
            let _ = writeln!(text, "  stacked differential certificate: {}", if ok { "verified" } else { "FAILED" });
            j["certificate"] = json!({"verified": ok, "a": c.a, "b": c.b, "probabilistic": c.probabilistic});
        }
    }
    if res.probabilistic {
        let _ = writeln!(text, "  note: probabilistic zero tests were used (seed {})", settings.seed);
    }
    if settings.trace {
        j["trace"] = json!(res.trace);
        for t in &res.trace {
            let _ = writeln!(text, "  [k={} l={} line {}] {}", t.k, t.l, t.line, t.message);
        }
    }
    Ok(Report {
        command: "check",
        verdict: res.verdict,
        json: j,
        text,
        artifacts: Vec::new(),
    })
}

fn reduce_options(problem: &Problem, settings: &Settings) -> ReduceOptions {
    ReduceOptions {
        ift: settings.apply(),
        hints: problem.hints.clone(),
    }
}

/// Problem file for the reduced system, with the same constants.
pub fn reduced_problem(problem: &Problem, r: &ReductionResult) -> Problem {
    Problem {
        vars: r.reduced.vars.clone(),
        consts: problem.consts.clone(),
        equations: Vec::new(),
        ddae: Some(r.reduced.clone()),
        hints: BTreeMap::new(),
        history: BTreeMap::new(),
        history_csv: None,
        options: problem.options.clone(),
    }
}

fn reduction_json(r: &ReductionResult) -> Value {
    let steps: Vec<Value> = r
        .steps
        .iter()
        .map(|s| {
            let mut v = json!({
                "k": s.k,
                "rows": s.rank_before,
                "rank": s.rank,
                "dim_before": s.dim_before,
                "dim_after": s.dim_after,
                "q": s.q.a,
                "q_inverse": s.q.b,
                "f1": strs(&s.f1),
                "f2_raw": strs(&s.f2_raw),
                "f2": strs(&s.f2),
                "theta": strs(&s.theta),
                "new_vars": names(&s.phi.new_vars),
                "inverse": strs(&s.phi.inverse),
                "e_next": s.e_next,
                "f_next": strs(&s.f_next),
            });
            if let Some(m) = &s.minimized {
                v["minimized"] = json!({
                    "subset": m.subset,
                    "generators": strs(&m.generators),
                    "constants": strs(&m.constants),
                    "rewritten": strs(&m.rewritten),
                    "result": strs(&m.result),
                });
            }
            v
        })
        .collect();
    json!({
        "k_star": r.k_star,
        "lag": r.lag,
        "classification": r.classification,
        "unique": r.unique,
        "free_vars": r.free_vars,
        "steps": steps,
        "phi": {
            "vars": names(&r.phi.vars),
            "new_vars": names(&r.phi.new_vars),
            "forward": strs(&r.phi.forward),
            "inverse": strs(&r.phi.inverse),
            "certificate_verified": r.phi.certificate.verify(),
        },
        "zbar": names(&r.zbar),
        "reduced": {
            "vars": names(&r.reduced.vars),
            "e": r.reduced.e,
            "f": strs(&r.reduced.f),
        },
        "probabilistic": r.probabilistic,
    })
}

fn reduction_text(r: &ReductionResult, text: &mut String) {
    let _ = writeln!(text, "  k* = {}, lag = {}", r.k_star, r.lag);
    for s in &r.steps {
        let _ = writeln!(text, "  step {}: rank {} of {} rows, constraints [{}]", s.k, s.rank, s.rank_before, strs(&s.f2).join(", "));
        let _ = writeln!(text, "    theta = [{}]", strs(&s.theta).join(", "));
    }
    let _ = writeln!(text, "  Phi = [{}]", strs(&r.phi.forward).join(", "));
    let _ = writeln!(text, "  classification: {:?}, unique = {}, free variables = {}", r.classification, r.unique, r.free_vars);
}

fn ddae_failure(command: &'static str, e: DdaeError) -> Result<Report, ReportError> {
    let verdict = match &e {
        DdaeError::ConditionC { .. } => Verdict::No,
        DdaeError::Inconclusive { .. } => Verdict::Inconclusive,
        _ => return Err(e.into()),
    };
    let mut j = json!({
        "schema": SCHEMA,
        "command": command,
        "verdict": verdict,
        "error": e.to_string(),
    });
    if let DdaeError::ConditionC { step, constraints, witness } = &e {
        j["step"] = json!(step);
        j["constraints"] = json!(strs(constraints));
        j["witness"] = json!(witness);
    }
    let mut text = format!("{command}: {verdict:?}\n  {e}\n");
    if let DdaeError::ConditionC { witness, .. } = &e {
        if let Some(w) = witness.as_ref() {
            let _ = writeln!(text, "  witness: {}", serde_json::to_string(w).unwrap_or_default());
        }
    }
    Ok(Report {
        command,
        verdict,
        json: j,
        text,
        artifacts: Vec::new(),
    })
}

pub fn reduce(problem: &Problem, settings: &Settings) -> Result<Report, ReportError> {
    let sys = problem
        .ddae
        .as_ref()
        .ok_or_else(|| ReportError::Usage("the problem has no ddae block".into()))?;
    let r = match reduce_index(sys, &reduce_options(problem, settings)) {
        Ok(r) => r,
        Err(e) => return ddae_failure("reduce", e),
    };
    let mut j = reduction_json(&r);
    j["schema"] = json!(SCHEMA);
    j["command"] = json!("reduce");
    j["verdict"] = json!(Verdict::Yes);
    j["seed"] = json!(settings.seed);
    let mut text = String::from("reduce: Yes\n");
    reduction_text(&r, &mut text);
    match explicit_form(&r.reduced) {
        Ok(ode) => {
            let _ = writeln!(text, "  explicit form:");
            for (d, rhs) in ode.dvars.iter().zip(&ode.rhs) {
                let _ = writeln!(text, "    {d} = {rhs}");
            }
            j["explicit"] = json!({
                "dvars": names(&ode.dvars),
                "rhs": strs(&ode.rhs),
                "g": ode.g.iter().map(|row| strs(row)).collect::<Vec<_>>(),
            });
        }
        Err(e) => {
            let _ = writeln!(text, "  explicit form: {e}");
            j["explicit_error"] = json!(e.to_string());
        }
    }
    let emitted = reduced_problem(problem, &r).to_text();
    Ok(Report {
        command: "reduce",
        verdict: Verdict::Yes,
        json: j,
        text,
        artifacts: vec![("reduced".into(), emitted)],
    })
}

pub struct SolveArgs {
    pub t_end: f64,
    pub h: f64,
    pub history_length: Option<f64>,
    /// CSV history text, overriding `hist` lines.
    pub history_csv: Option<String>,
}

pub fn solve(problem: &Problem, settings: &Settings, args: &SolveArgs) -> Result<Report, ReportError> {
    let sys = problem
        .ddae
        .as_ref()
        .ok_or_else(|| ReportError::Usage("the problem has no ddae block".into()))?;
    let hist = match &args.history_csv {
        Some(text) => HistorySpec::Csv(text.clone()),
        None if problem.history.is_empty() => {
            return Err(ReportError::Usage("no history: add `hist` lines or a csv history".into()))
        }
        None => HistorySpec::Closed(problem.history.clone()),
    };
    let opts = SolveOptions {
        t_end: args.t_end,
        h: args.h,
        history_length: args.history_length,
        reduce: reduce_options(problem, settings),
    };
    let out = match solve_system(sys, &hist, &problem.constant_values(), &opts) {
        Ok(o) => o,
        Err(PipelineError::Ddae(e)) => return ddae_failure("solve", e),
        Err(e) => return Err(e.into()),
    };
    let passed = out.residual.max <= settings.tol;
    let verdict = if passed { Verdict::Yes } else { Verdict::Inconclusive };
    let j = json!({
        "schema": SCHEMA,
        "command": "solve",
        "verdict": verdict,
        "seed": settings.seed,
        "t_end": args.t_end,
        "h": args.h,
        "tol": settings.tol,
        "reduction": reduction_json(&out.reduction),
        "ode": {
            "vars": names(&out.ode.vars),
            "rhs": strs(&out.ode.rhs),
        },
        "history": out.history,
        "residual": out.residual,
        "constraint_max": out.constraint_max,
        "warnings": out.reduced.warnings,
    });
    let mut text = format!("solve: {verdict:?}\n");
    reduction_text(&out.reduction, &mut text);
    let _ = writeln!(
        text,
        "  history in {} coordinates on [-{}, 0]; grid h = {} to T = {}",
        out.history.coordinates, out.history.length, args.h, args.t_end
    );
    let _ = writeln!(
        text,
        "  residual of the original system on [{}, {}]: {:.3e} (tol {:.1e})",
        out.residual.window.0, out.residual.window.1, out.residual.max, settings.tol
    );
    let _ = writeln!(text, "  max |constraint coordinate| = {:.3e}", out.constraint_max);
    for w in &out.reduced.warnings {
        let _ = writeln!(text, "  warning: {w}");
    }
    let csv = out.original.to_csv().map_err(PipelineError::from)?;
    let reduced_csv = out.reduced.to_csv().map_err(PipelineError::from)?;
    Ok(Report {
        command: "solve",
        verdict,
        json: j,
        text,
        artifacts: vec![("trajectory".into(), csv), ("reduced-trajectory".into(), reduced_csv)],
    })
}
