use std::collections::HashMap;

use num_traits::ToPrimitive;
use thiserror::Error;

use super::{Atom, DelayedVar, Expr, Poly, Sym};

pub const DEFAULT_ZERO_GUARD: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("unassigned atom {0}")]
    Unassigned(String),
    #[error("denominator {0} inside the zero guard")]
    Singular(String),
    #[error("{0} outside the domain of ln")]
    Domain(String),
    #[error("non-finite value")]
    NonFinite,
}

/// Numeric values for delayed variables and constants.
#[derive(Clone, Debug, Default)]
pub struct Assignment {
    pub vars: HashMap<DelayedVar, f64>,
    pub consts: HashMap<Sym, f64>,
    pub zero_guard: Option<f64>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn var(mut self, name: &str, shift: i32, value: f64) -> Self {
        self.vars.insert(DelayedVar::named(name, shift), value);
        self
    }

    pub fn constant(mut self, name: &str, value: f64) -> Self {
        self.consts.insert(Sym::new(name), value);
        self
    }

    pub fn set(&mut self, v: DelayedVar, value: f64) {
        self.vars.insert(v, value);
    }
}

/// Source of numeric atom values used by [`Expr::eval_with`].
pub trait AtomValues {
    fn var(&self, v: DelayedVar) -> Option<f64>;
    fn constant(&self, c: Sym) -> Option<f64>;
    fn zero_guard(&self) -> f64 {
        DEFAULT_ZERO_GUARD
    }
}

impl AtomValues for Assignment {
    fn var(&self, v: DelayedVar) -> Option<f64> {
        self.vars.get(&v).copied()
    }
    fn constant(&self, c: Sym) -> Option<f64> {
        self.consts.get(&c).copied()
    }
    fn zero_guard(&self) -> f64 {
        self.zero_guard.unwrap_or(DEFAULT_ZERO_GUARD)
    }
}

fn eval_atom(a: &Atom, src: &dyn AtomValues) -> Result<f64, EvalError> {
    match a {
        Atom::Var(v) => src.var(*v).ok_or_else(|| EvalError::Unassigned(v.to_string())),
        Atom::Const(c) => src
            .constant(*c)
            .ok_or_else(|| EvalError::Unassigned(c.to_string())),
        Atom::Exp(e) => Ok(e.eval_with(src)?.exp()),
        Atom::Ln(e) => {
            let x = e.eval_with(src)?;
            if x <= 0.0 {
                Err(EvalError::Domain(e.to_string()))
            } else {
                Ok(x.ln())
            }
        }
    }
}

pub(crate) fn eval_poly(p: &Poly, src: &dyn AtomValues) -> Result<f64, EvalError> {
    let mut cache: HashMap<&Atom, f64> = HashMap::new();
    let mut acc = 0.0;
    for (m, c) in &p.terms {
        let mut t = c.to_f64().unwrap_or(f64::NAN);
        for (a, e) in &m.0 {
            let x = match cache.get(a) {
                Some(x) => *x,
                None => {
                    let x = eval_atom(a, src)?;
                    cache.insert(a, x);
                    x
                }
            };
            t *= x.powi(*e as i32);
        }
        acc += t;
    }
    Ok(acc)
}

impl Expr {
    pub fn eval_num(&self, a: &Assignment) -> Result<f64, EvalError> {
        self.eval_with(a)
    }

    pub fn eval_with(&self, src: &dyn AtomValues) -> Result<f64, EvalError> {
        let n = eval_poly(self.numer(), src)?;
        let d = if self.denom().is_one() {
            1.0
        } else {
            eval_poly(self.denom(), src)?
        };
        if d.abs() <= src.zero_guard() {
            return Err(EvalError::Singular(self.denom().to_string()));
        }
        let v = n / d;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_expr, Context};

    #[test]
    fn eval_a_at_unit_point() {
        let ctx = Context::new(&["x1", "x2"], &["e1"]);
        let a = parse_expr("x1*x2[-1] + x2*x2[-1] + e1", &ctx).unwrap();
        let asg = Assignment::new()
            .var("x1", 0, 1.0)
            .var("x2", 0, 1.0)
            .var("x2", 1, 1.0)
            .constant("e1", -2.0);
        assert_eq!(a.eval_num(&asg).unwrap(), 0.0);
    }

    #[test]
    fn constant_and_guard() {
        assert_eq!(Expr::int(5).eval_num(&Assignment::new()).unwrap(), 5.0);
        let e = Expr::named("x1", 0).recip();
        let asg = Assignment::new().var("x1", 0, 1e-14);
        assert!(matches!(e.eval_num(&asg), Err(EvalError::Singular(_))));
        assert!(matches!(
            e.eval_num(&Assignment::new()),
            Err(EvalError::Unassigned(_))
        ));
    }
}
