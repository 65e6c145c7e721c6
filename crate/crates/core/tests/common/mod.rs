#![allow(dead_code)]

pub mod props;

use std::path::PathBuf;

use delay_ift::expr::{AtomValues, DelayedVar, Expr, Sym};
use delay_ift::ore::SkewPoly;
use delay_ift::problem::Problem;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn vars2() -> Vec<Sym> {
    vec![Sym::new("x1"), Sym::new("x2")]
}

/// A random atom `x_i(-j)` with `j <= max_shift`.
pub fn random_var(r: &mut impl Rng, vars: &[Sym], max_shift: i32) -> Expr {
    let v = vars[r.gen_range(0..vars.len())];
    Expr::var(DelayedVar::new(v, r.gen_range(0..=max_shift)))
}

/// A sum of up to `terms` monomials of degree at most 2.
pub fn random_poly(r: &mut impl Rng, vars: &[Sym], max_shift: i32, terms: usize) -> Expr {
    let mut acc = Expr::zero();
    for _ in 0..r.gen_range(1..=terms) {
        let mut t = Expr::int(r.gen_range(-3..=3));
        for _ in 0..r.gen_range(0..=2) {
            t = &t * &random_var(r, vars, max_shift);
        }
        acc = &acc + &t;
    }
    acc
}

/// A random function: polynomial, rational, or with an `exp` factor.
pub fn random_expr(r: &mut impl Rng, vars: &[Sym], max_shift: i32) -> Expr {
    let p = random_poly(r, vars, max_shift, 3);
    match r.gen_range(0..4) {
        0 | 1 => p,
        2 => {
            // positive along real signals
            let q = &random_poly(r, vars, max_shift, 2).pow(2) + &Expr::int(r.gen_range(1..5));
            &p / &q
        }
        _ => {
            let arg = &random_var(r, vars, max_shift) * &Expr::ratio(1, r.gen_range(2..5));
            &p * &Expr::exp(&arg)
        }
    }
}

pub fn random_skew(r: &mut impl Rng, vars: &[Sym], max_deg: u32) -> SkewPoly {
    let mut coeffs = Vec::new();
    for j in 0..=max_deg {
        if r.gen_bool(0.7) {
            coeffs.push((j, random_expr(r, vars, 2)));
        }
    }
    SkewPoly::from_coeffs(coeffs)
}

/// Smooth positive test signals, one per variable.
pub fn signal(i: usize, t: f64) -> f64 {
    match i % 3 {
        0 => 2.0 + (0.9 * t).sin(),
        1 => 3.0 + (0.4 * t + 0.3).cos(),
        _ => 2.5 + 0.5 * (0.3 * t).sin() * (0.7 * t).cos(),
    }
}

/// Atom values of `x_i(-j)` read off [`signal`] at time `t - j`.
pub struct At<'a> {
    pub vars: &'a [Sym],
    pub t: f64,
}

impl AtomValues for At<'_> {
    fn var(&self, v: DelayedVar) -> Option<f64> {
        let i = self.vars.iter().position(|s| *s == v.var)?;
        Some(signal(i, self.t - v.shift as f64))
    }
    fn constant(&self, _: Sym) -> Option<f64> {
        None
    }
}

pub fn eval_at(e: &Expr, vars: &[Sym], t: f64) -> f64 {
    e.eval_with(&At { vars, t }).expect("finite value along the test signals")
}

/// `(p f)(t) = Σ a_j(t) f(t - j)` for a scalar signal `f`.
pub fn apply(p: &SkewPoly, vars: &[Sym], f: &dyn Fn(f64) -> f64, t: f64) -> f64 {
    p.coeffs()
        .iter()
        .map(|(j, c)| eval_at(c, vars, t) * f(t - *j as f64))
        .sum()
}

pub fn problems_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../problems")
}

/// Every `(file name, problem)` in the golden corpus with the given
/// extension.
pub fn corpus(ext: &str) -> Vec<(String, Problem)> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(problems_dir())
        .expect("problems directory")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == ext))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p).expect("readable problem");
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            let prob = Problem::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
            (name, prob)
        })
        .collect()
}

pub fn load(name: &str) -> Problem {
    let text = std::fs::read_to_string(problems_dir().join(name)).expect("readable problem");
    Problem::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"))
}
