use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use delay_ift::problem::Problem;
use delay_ift::report::{self, Report, Settings, SolveArgs};
use serde_json::{json, Value};

/// Condition (C), index reduction and method-of-steps solving for
/// nonlinear time-delay systems.
#[derive(Parser)]
#[command(name = "delay-ift", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed for probabilistic zero tests.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap on the δ-degree of intermediate matrices.
    #[arg(long, global = true)]
    degree_bound: Option<u32>,
    /// Exponent range of the monomial integrating-factor family.
    #[arg(long, global = true)]
    factor_box: Option<i32>,
    /// Residual threshold for `solve`.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Print JSON reports.
    #[arg(long, global = true)]
    json: bool,
    /// Include the algorithm trace.
    #[arg(long, global = true)]
    trace: bool,
    /// Add wall-clock time to reports (breaks byte-identical output).
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Decide condition (C) for the `eq` lines and solve them implicitly.
    Check { files: Vec<PathBuf> },
    /// Reduce the ddae block to index zero.
    Reduce {
        files: Vec<PathBuf>,
        /// Write the reduced system as a problem file (single input only).
        #[arg(long)]
        emit: Option<PathBuf>,
    },
    /// Reduce, integrate, map back and check the residual.
    Solve {
        file: PathBuf,
        /// Final time.
        #[arg(long)]
        horizon: Option<f64>,
        /// Grid step; 1/step must be an integer.
        #[arg(long)]
        step: Option<f64>,
        /// Length of a closed-form history.
        #[arg(long)]
        history_length: Option<f64>,
        /// CSV history in the reduced coordinates.
        #[arg(long)]
        history_csv: Option<PathBuf>,
        /// Trajectory CSV in the original variables.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Trajectory CSV in the reduced variables.
        #[arg(long)]
        reduced_out: Option<PathBuf>,
    },
}

struct Outcome {
    file: PathBuf,
    result: Result<Report, String>,
    elapsed_ms: u128,
}

fn settings(g: &Global, p: &Problem) -> Result<Settings, String> {
    let d = Settings::default();
    let opt = |key: &str| p.option::<f64>(key).transpose();
    Ok(Settings {
        seed: match g.seed {
            Some(s) => s,
            None => p.option::<u64>("seed").transpose()?.unwrap_or(d.seed),
        },
        degree_bound: match g.degree_bound {
            Some(b) => Some(b),
            None => p.option::<u32>("degree-bound").transpose()?,
        },
        factor_box: match g.factor_box {
            Some(b) => b,
            None => p.option::<i32>("factor-box").transpose()?.unwrap_or(d.factor_box),
        },
        tol: match g.tol {
            Some(t) => t,
            None => opt("tol")?.unwrap_or(d.tol),
        },
        trace: g.trace,
        ..d
    })
}

fn load(path: &Path) -> Result<Problem, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Problem::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn run_one(cmd: &Command, g: &Global, file: &Path) -> Result<Report, String> {
    let p = load(file)?;
    let s = settings(g, &p)?;
    match cmd {
        Command::Check { .. } => report::check(&p, &s).map_err(|e| e.to_string()),
        Command::Reduce { .. } => report::reduce(&p, &s).map_err(|e| e.to_string()),
        Command::Solve {
            horizon,
            step,
            history_length,
            history_csv,
            ..
        } => {
            let csv_path = history_csv.clone().or_else(|| {
                p.history_csv
                    .as_ref()
                    .map(|rel| file.parent().unwrap_or(Path::new(".")).join(rel))
            });
            let history_csv = match csv_path {
                Some(path) => Some(std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?),
                None => None,
            };
            let pick = |flag: Option<f64>, key: &str, default: Option<f64>| -> Result<Option<f64>, String> {
                match flag {
                    Some(v) => Ok(Some(v)),
                    None => Ok(p.option::<f64>(key).transpose()?.or(default)),
                }
            };
            let args = SolveArgs {
                t_end: pick(*horizon, "horizon", Some(1.0))?.unwrap_or(1.0),
                h: pick(*step, "step", Some(1.0 / 64.0))?.unwrap_or(1.0 / 64.0),
                history_length: pick(*history_length, "history-length", None)?,
                history_csv,
            };
            report::solve(&p, &s, &args).map_err(|e| e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let files: Vec<PathBuf> = match &cli.command {
        Command::Check { files } | Command::Reduce { files, .. } => files.clone(),
        Command::Solve { file, .. } => vec![file.clone()],
    };
    if files.is_empty() {
        eprintln!("error: no input files");
        return ExitCode::from(1);
    }
    if let Command::Reduce { emit: Some(_), .. } = &cli.command {
        if files.len() > 1 {
            eprintln!("error: --emit takes a single input file");
            return ExitCode::from(1);
        }
    }
    let outcomes: Vec<Outcome> = std::thread::scope(|scope| {
        let handles: Vec<_> = files
            .iter()
            .map(|f| {
                let (cmd, g) = (&cli.command, &cli.global);
                scope.spawn(move || {
                    let start = Instant::now();
                    let result = run_one(cmd, g, f);
                    Outcome {
                        file: f.clone(),
                        result,
                        elapsed_ms: start.elapsed().as_millis(),
                    }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });

    let mut code = 0;
    let mut json_out: Vec<Value> = Vec::new();
    for o in &outcomes {
        let c = match &o.result {
            Ok(r) => r.exit_code(),
            Err(_) => 1,
        };
        code = worst(code, c);
        match &o.result {
            Ok(r) => {
                if let Err(e) = write_artifacts(&cli.command, r) {
                    eprintln!("error: {e}");
                    code = 1;
                }
                if cli.global.json {
                    let mut j = r.json.clone();
                    j["file"] = json!(o.file.display().to_string());
                    if cli.global.timing {
                        j["elapsed_ms"] = json!(o.elapsed_ms);
                    }
                    json_out.push(j);
                } else {
                    if files.len() > 1 {
                        println!("== {}", o.file.display());
                    }
                    print!("{}", r.text);
                    if cli.global.timing {
                        println!("  time: {} ms", o.elapsed_ms);
                    }
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                if cli.global.json {
                    json_out.push(json!({
                        "schema": report::SCHEMA,
                        "file": o.file.display().to_string(),
                        "error": e,
                    }));
                }
            }
        }
    }
    if cli.global.json {
        let v = if json_out.len() == 1 { json_out.remove(0) } else { Value::Array(json_out) };
        println!("{}", serde_json::to_string_pretty(&v).expect("serializable"));
    }
    ExitCode::from(code as u8)
}

/// Errors beat undecided, undecided beats NO, NO beats YES.
fn worst(a: i32, b: i32) -> i32 {
    let rank = |c: i32| match c {
        1 => 3,
        3 => 2,
        2 => 1,
        _ => 0,
    };
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

fn write_artifacts(cmd: &Command, r: &Report) -> Result<(), String> {
    let target = |kind: &str| -> Option<&PathBuf> {
        match (cmd, kind) {
            (Command::Reduce { emit, .. }, "reduced") => emit.as_ref(),
            (Command::Solve { out, .. }, "trajectory") => out.as_ref(),
            (Command::Solve { reduced_out, .. }, "reduced-trajectory") => reduced_out.as_ref(),
            _ => None,
        }
    };
    for (kind, content) in &r.artifacts {
        if let Some(path) = target(kind) {
            std::fs::write(path, content).map_err(|e| format!("{}: {e}", path.display()))?;
        }
    }
    Ok(())
}
