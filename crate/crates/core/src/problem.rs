//! Problem files: declarations, equations, an optional DDAE block, history
//! and options, one directive per line.
//!
//! ```text
//! # comment
//! var x1 x2
//! const e1 nonzero
//! const c = 2
//! eq a = x1*x2[-1] + x2*x2[-1] + e1
//! ddae n=2 p=2
//! E[1][1] = 1
//! E[2][2] = 1 + (x1)*d
//! F[1] = x2
//! F[2] = -x1[-1]
//! hint const k1 = ln(c)
//! hist x1 = 1 + s
//! hist csv history.csv
//! option seed = 7
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::ddae::{DDAESystem, DdaeError};
use crate::expr::{parse_expr, Context, Expr, Sym};
use crate::ore::{SkewMatrix, SkewPoly};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct ProblemError {
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstDecl {
    pub name: Sym,
    pub nonzero: bool,
    pub value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    pub vars: Vec<Sym>,
    pub consts: Vec<ConstDecl>,
    pub equations: Vec<(String, Expr)>,
    pub ddae: Option<DDAESystem>,
    pub hints: BTreeMap<String, Expr>,
    /// Closed-form history per variable, in the time variable `s`. Names may
    /// be original or reduced coordinates.
    pub history: BTreeMap<Sym, Expr>,
    pub history_csv: Option<String>,
    pub options: BTreeMap<String, String>,
}

/// Name of the time variable in history expressions.
pub const HISTORY_TIME: &str = "s";

struct DdaeBlock {
    line: usize,
    n: usize,
    p: usize,
    e: BTreeMap<(usize, usize), SkewPoly>,
    f: BTreeMap<usize, Expr>,
}

fn err(line: usize, message: impl Into<String>) -> ProblemError {
    ProblemError {
        line,
        message: message.into(),
    }
}

fn is_ident(s: &str) -> bool {
    let mut cs = s.chars();
    cs.next().is_some_and(|c| c.is_alphabetic() || c == '_') && cs.all(|c| c.is_alphanumeric() || c == '_')
}

fn index(text: &str, line: usize, bound: usize, what: &str) -> Result<usize, ProblemError> {
    let i: usize = text
        .trim()
        .parse()
        .map_err(|_| err(line, format!("bad {what} index `{text}`")))?;
    if i == 0 || i > bound {
        return Err(err(line, format!("{what} index {i} outside 1..={bound}")));
    }
    Ok(i - 1)
}

impl Problem {
    pub fn context(&self) -> Context {
        let mut ctx = Context::new(&[], &[]);
        for v in &self.vars {
            ctx.declare_var(&v.name());
        }
        for c in &self.consts {
            ctx.declare_const(&c.name.name(), c.nonzero);
        }
        ctx
    }

    /// Numeric constant values, for evaluation.
    pub fn constant_values(&self) -> BTreeMap<Sym, f64> {
        self.consts
            .iter()
            .filter_map(|c| c.value.map(|v| (c.name, v)))
            .collect()
    }

    pub fn option<T: std::str::FromStr>(&self, key: &str) -> Option<Result<T, String>> {
        self.options
            .get(key)
            .map(|v| v.parse::<T>().map_err(|_| format!("option {key}: cannot parse `{v}`")))
    }

    pub fn parse(text: &str) -> Result<Problem, ProblemError> {
        let mut p = Problem {
            vars: Vec::new(),
            consts: Vec::new(),
            equations: Vec::new(),
            ddae: None,
            hints: BTreeMap::new(),
            history: BTreeMap::new(),
            history_csv: None,
            options: BTreeMap::new(),
        };
        let mut block: Option<DdaeBlock> = None;
        let mut hist_lines = Vec::new();
        let mut hint_lines = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = no + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (head, rest) = body.split_once(char::is_whitespace).unwrap_or((body, ""));
            let rest = rest.trim();
            match head {
                "var" => {
                    for name in rest.split_whitespace() {
                        if !is_ident(name) || name == "d" || name == HISTORY_TIME {
                            return Err(err(line, format!("`{name}` cannot name a variable")));
                        }
                        let s = Sym::new(name);
                        if p.vars.contains(&s) || p.consts.iter().any(|c| c.name == s) {
                            return Err(err(line, format!("`{name}` declared twice")));
                        }
                        p.vars.push(s);
                    }
                }
                "const" => {
                    let (names, value) = match rest.split_once('=') {
                        Some((n, v)) => {
                            let v: f64 = v
                                .trim()
                                .parse()
                                .map_err(|_| err(line, format!("constant value `{}` is not a number", v.trim())))?;
                            (n.trim(), Some(v))
                        }
                        None => (rest, None),
                    };
                    let mut words: Vec<&str> = names.split_whitespace().collect();
                    let flagged = words.last() == Some(&"nonzero");
                    if flagged {
                        words.pop();
                    }
                    if words.is_empty() || (value.is_some() && words.len() != 1) {
                        return Err(err(line, "expected `const <name>... [nonzero]` or `const <name> = <value>`"));
                    }
                    for name in words {
                        if !is_ident(name) || name == "d" {
                            return Err(err(line, format!("`{name}` cannot name a constant")));
                        }
                        let s = Sym::new(name);
                        if p.vars.contains(&s) || p.consts.iter().any(|c| c.name == s) {
                            return Err(err(line, format!("`{name}` declared twice")));
                        }
                        p.consts.push(ConstDecl {
                            name: s,
                            nonzero: flagged || value.is_some_and(|v| v != 0.0),
                            value,
                        });
                    }
                }
                "eq" => {
                    let (name, e) = rest
                        .split_once('=')
                        .ok_or_else(|| err(line, "expected `eq <name> = <expr>`"))?;
                    let name = name.trim();
                    if !is_ident(name) {
                        return Err(err(line, format!("`{name}` cannot name an equation")));
                    }
                    let e = parse_expr(e, &p.context()).map_err(|e| err(line, e.to_string()))?;
                    p.equations.push((name.to_string(), e));
                }
                "ddae" => {
                    if block.is_some() {
                        return Err(err(line, "more than one ddae block"));
                    }
                    let mut n = None;
                    let mut rows = None;
                    for kv in rest.split_whitespace() {
                        let (k, v) = kv.split_once('=').ok_or_else(|| err(line, format!("bad header field `{kv}`")))?;
                        let v: usize = v.parse().map_err(|_| err(line, format!("bad header value `{kv}`")))?;
                        match k {
                            "n" => n = Some(v),
                            "p" => rows = Some(v),
                            _ => return Err(err(line, format!("unknown header field `{k}`"))),
                        }
                    }
                    let (n, rows) = n.zip(rows).ok_or_else(|| err(line, "expected `ddae n=<n> p=<p>`"))?;
                    if p.vars.is_empty() {
                        p.vars = (1..=n).map(|i| Sym::new(&format!("x{i}"))).collect();
                    } else if p.vars.len() != n {
                        return Err(err(line, format!("n={n} but {} variables are declared", p.vars.len())));
                    }
                    block = Some(DdaeBlock {
                        line,
                        n,
                        p: rows,
                        e: BTreeMap::new(),
                        f: BTreeMap::new(),
                    });
                }
                "hint" => {
                    let r = rest
                        .strip_prefix("const")
                        .ok_or_else(|| err(line, "expected `hint const <name> = <expr>`"))?;
                    let (name, e) = r
                        .split_once('=')
                        .ok_or_else(|| err(line, "expected `hint const <name> = <expr>`"))?;
                    hint_lines.push((line, name.trim().to_string(), e.to_string()));
                }
                "hist" => {
                    if let Some(path) = rest.strip_prefix("csv") {
                        let path = path.trim();
                        if path.is_empty() {
                            return Err(err(line, "expected `hist csv <path>`"));
                        }
                        p.history_csv = Some(path.to_string());
                    } else {
                        let (name, e) = rest
                            .split_once('=')
                            .ok_or_else(|| err(line, "expected `hist <var> = <expr in s>`"))?;
                        hist_lines.push((line, name.trim().to_string(), e.to_string()));
                    }
                }
                "option" => {
                    let (k, v) = rest
                        .split_once('=')
                        .ok_or_else(|| err(line, "expected `option <key> = <value>`"))?;
                    p.options.insert(k.trim().to_string(), v.trim().to_string());
                }
                _ if body.starts_with("E[") => {
                    let ctx = p.context();
                    let b = block.as_mut().ok_or_else(|| err(line, "E entry outside a ddae block"))?;
                    let (lhs, rhs) = body.split_once('=').ok_or_else(|| err(line, "expected `E[i][j] = <skewpoly>`"))?;
                    let inner = lhs
                        .trim()
                        .strip_prefix("E[")
                        .and_then(|s| s.strip_suffix(']'))
                        .and_then(|s| s.split_once("]["))
                        .ok_or_else(|| err(line, "expected `E[i][j]`"))?;
                    let i = index(inner.0, line, b.p, "row")?;
                    let j = index(inner.1, line, b.n, "column")?;
                    let poly = SkewPoly::parse(rhs, &ctx).map_err(|e| err(line, e.to_string()))?;
                    if b.e.insert((i, j), poly).is_some() {
                        return Err(err(line, format!("E[{}][{}] given twice", i + 1, j + 1)));
                    }
                }
                _ if body.starts_with("F[") => {
                    let ctx = p.context();
                    let b = block.as_mut().ok_or_else(|| err(line, "F entry outside a ddae block"))?;
                    let (lhs, rhs) = body.split_once('=').ok_or_else(|| err(line, "expected `F[i] = <expr>`"))?;
                    let inner = lhs
                        .trim()
                        .strip_prefix("F[")
                        .and_then(|s| s.strip_suffix(']'))
                        .ok_or_else(|| err(line, "expected `F[i]`"))?;
                    let i = index(inner, line, b.p, "row")?;
                    let e = parse_expr(rhs, &ctx).map_err(|e| err(line, e.to_string()))?;
                    if b.f.insert(i, e).is_some() {
                        return Err(err(line, format!("F[{}] given twice", i + 1)));
                    }
                }
                _ => return Err(err(line, format!("unknown directive `{head}`"))),
            }
        }
        let ctx = p.context();
        for (line, name, e) in hint_lines {
            let e = parse_expr(&e, &ctx).map_err(|e| err(line, e.to_string()))?;
            p.hints.insert(name, e);
        }
        let mut hctx = Context::new(&[HISTORY_TIME], &[]);
        for c in &p.consts {
            hctx.declare_const(&c.name.name(), c.nonzero);
        }
        for (line, name, e) in hist_lines {
            if !is_ident(&name) {
                return Err(err(line, format!("`{name}` cannot name a variable")));
            }
            let s = Sym::new(&name);
            let e = parse_expr(&e, &hctx).map_err(|e| err(line, e.to_string()))?;
            if e.vars().iter().any(|v| v.shift != 0) {
                return Err(err(line, "history expressions cannot contain delays"));
            }
            if p.history.insert(s, e).is_some() {
                return Err(err(line, format!("history for `{name}` given twice")));
            }
        }
        if let Some(b) = block {
            let mut rows = vec![vec![SkewPoly::zero(); b.n]; b.p];
            for ((i, j), poly) in b.e {
                rows[i][j] = poly;
            }
            let mut f = Vec::new();
            for i in 0..b.p {
                f.push(
                    b.f.get(&i)
                        .cloned()
                        .ok_or_else(|| err(b.line, format!("F[{}] missing", i + 1)))?,
                );
            }
            let e = SkewMatrix::from_rows(rows).with_cols(b.n);
            let sys = DDAESystem::new(p.vars.clone(), e, f).map_err(|e: DdaeError| err(b.line, e.to_string()))?;
            p.ddae = Some(sys);
        }
        Ok(p)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if !self.vars.is_empty() {
            let names: Vec<String> = self.vars.iter().map(|v| v.name()).collect();
            let _ = writeln!(out, "var {}", names.join(" "));
        }
        for c in &self.consts {
            match c.value {
                Some(v) => {
                    let _ = writeln!(out, "const {} = {v:?}", c.name);
                }
                None if c.nonzero => {
                    let _ = writeln!(out, "const {} nonzero", c.name);
                }
                None => {
                    let _ = writeln!(out, "const {}", c.name);
                }
            }
        }
        for (name, e) in &self.equations {
            let _ = writeln!(out, "eq {name} = {e}");
        }
        if let Some(sys) = &self.ddae {
            let text = sys.to_text();
            out.extend(text.lines().skip(1).map(|l| format!("{l}\n")));
        }
        for (name, e) in &self.hints {
            let _ = writeln!(out, "hint const {name} = {e}");
        }
        for (v, e) in &self.history {
            let _ = writeln!(out, "hist {v} = {e}");
        }
        if let Some(path) = &self.history_csv {
            let _ = writeln!(out, "hist csv {path}");
        }
        for (k, v) in &self.options {
            let _ = writeln!(out, "option {k} = {v}");
        }
        out
    }
}
