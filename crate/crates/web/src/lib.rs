//! Browser bindings: each call takes problem-file text and returns a JSON
//! string `{exit, text, report, artifacts}`.

use delay_ift::problem::Problem;
use delay_ift::report::{self, Report, ReportError, Settings, SolveArgs};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn settings(seed: u32) -> Settings {
    Settings {
        seed: seed as u64,
        ..Settings::default()
    }
}

fn render(result: Result<Report, String>) -> String {
    let v: Value = match result {
        Ok(r) => json!({
            "exit": r.exit_code(),
            "text": r.text,
            "report": r.json,
            "artifacts": r.artifacts.into_iter().map(|(k, v)| (k, Value::String(v))).collect::<serde_json::Map<_, _>>(),
        }),
        Err(e) => json!({"exit": 1, "text": format!("error: {e}\n"), "report": null, "artifacts": {}}),
    };
    v.to_string()
}

fn with_problem(text: &str, f: impl FnOnce(&Problem) -> Result<Report, ReportError>) -> String {
    render(
        Problem::parse(text)
            .map_err(|e| e.to_string())
            .and_then(|p| f(&p).map_err(|e| e.to_string())),
    )
}

/// Decide condition (C) for the `eq` lines.
#[wasm_bindgen]
pub fn check(text: &str, seed: u32) -> String {
    with_problem(text, |p| report::check(p, &settings(seed)))
}

/// Reduce the `ddae` block to index zero.
#[wasm_bindgen]
pub fn reduce(text: &str, seed: u32) -> String {
    with_problem(text, |p| report::reduce(p, &settings(seed)))
}

/// Reduce, integrate to `horizon` with step `step`, and check the residual.
#[wasm_bindgen]
pub fn solve(text: &str, seed: u32, horizon: f64, step: f64) -> String {
    with_problem(text, |p| {
        let args = SolveArgs {
            t_end: horizon,
            h: step,
            history_length: None,
            history_csv: None,
        };
        report::solve(p, &settings(seed), &args)
    })
}
