//! Zero testing with a randomized fallback for transcendental atoms.

use std::cell::Cell;
use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::eval::{eval_poly, AtomValues};
use super::{DelayedVar, Expr, Sym};

pub const DEFAULT_SAMPLES: usize = 8;
pub const DEFAULT_SEED: u64 = 0x5eed_de1a;

/// Outcome of a zero test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ZeroTest {
    /// Identically zero in canonical form.
    Zero,
    /// Vanished at every random sample.
    ProbablyZero,
    NonZero,
}

impl ZeroTest {
    pub fn is_zero(self) -> bool {
        !matches!(self, ZeroTest::NonZero)
    }
}

thread_local! {
    static PROBABILISTIC: Cell<bool> = const { Cell::new(false) };
    static SEED: Cell<u64> = const { Cell::new(DEFAULT_SEED) };
    static SAMPLES: Cell<usize> = const { Cell::new(DEFAULT_SAMPLES) };
}

/// Configure the randomized zero test for the current thread.
pub fn configure(seed: u64, samples: usize) {
    SEED.with(|s| s.set(seed));
    SAMPLES.with(|s| s.set(samples.max(1)));
}

pub fn seed() -> u64 {
    SEED.with(|s| s.get())
}

/// Was a probabilistic answer returned since the last call?
pub fn take_probabilistic_flag() -> bool {
    PROBABILISTIC.with(|p| p.replace(false))
}

pub fn probabilistic_flag() -> bool {
    PROBABILISTIC.with(|p| p.get())
}

/// Restores the previous flag on drop and reports whether any test inside
/// the scope was probabilistic.
pub struct ProbabilisticScope {
    outer: bool,
}

impl ProbabilisticScope {
    pub fn enter() -> Self {
        ProbabilisticScope {
            outer: PROBABILISTIC.with(|p| p.replace(false)),
        }
    }

    pub fn used(&self) -> bool {
        probabilistic_flag()
    }
}

impl Drop for ProbabilisticScope {
    fn drop(&mut self) {
        let inner = probabilistic_flag();
        PROBABILISTIC.with(|p| p.set(self.outer || inner));
    }
}

struct RandomPoint {
    rng: std::cell::RefCell<ChaCha8Rng>,
    vars: std::cell::RefCell<HashMap<DelayedVar, f64>>,
    consts: std::cell::RefCell<HashMap<Sym, f64>>,
}

impl RandomPoint {
    fn new(seed: u64) -> Self {
        RandomPoint {
            rng: ChaCha8Rng::seed_from_u64(seed).into(),
            vars: HashMap::new().into(),
            consts: HashMap::new().into(),
        }
    }

    fn draw(&self) -> f64 {
        self.rng.borrow_mut().gen_range(0.5..1.5)
    }
}

impl AtomValues for RandomPoint {
    fn var(&self, v: DelayedVar) -> Option<f64> {
        if let Some(x) = self.vars.borrow().get(&v) {
            return Some(*x);
        }
        let x = self.draw();
        self.vars.borrow_mut().insert(v, x);
        Some(x)
    }

    fn constant(&self, c: Sym) -> Option<f64> {
        if let Some(x) = self.consts.borrow().get(&c) {
            return Some(*x);
        }
        let x = self.draw();
        self.consts.borrow_mut().insert(c, x);
        Some(x)
    }
}

/// Zero test with explicit seed and sample count.
pub fn test_zero(e: &Expr, seed: u64, samples: usize) -> ZeroTest {
    if e.is_structurally_zero() {
        return ZeroTest::Zero;
    }
    if !e.numer().has_transcendental() {
        return ZeroTest::NonZero;
    }
    let num = e.numer();
    let mut hits = 0;
    let mut attempt = 0u64;
    while hits < samples && attempt < 8 * samples as u64 + 16 {
        let pt = RandomPoint::new(seed.wrapping_add(attempt.wrapping_mul(0x9e37_79b9)));
        attempt += 1;
        let Ok(v) = eval_poly(num, &pt) else { continue };
        let scale = term_scale(num, &pt);
        if !v.is_finite() || !scale.is_finite() {
            continue;
        }
        if v.abs() > 1e-9 * scale.max(1.0) {
            return ZeroTest::NonZero;
        }
        hits += 1;
    }
    if hits == 0 {
        return ZeroTest::NonZero;
    }
    PROBABILISTIC.with(|p| p.set(true));
    ZeroTest::ProbablyZero
}

fn term_scale(p: &super::Poly, src: &dyn AtomValues) -> f64 {
    p.terms
        .iter()
        .map(|(m, c)| {
            let single = super::Poly::term(m.clone(), c.clone());
            eval_poly(&single, src).map(f64::abs).unwrap_or(f64::NAN)
        })
        .sum()
}

impl Expr {
    /// Decide whether the expression vanishes identically, recording a
    /// probabilistic flag when the randomized fallback was needed.
    pub fn is_zero(&self) -> bool {
        self.zero_test().is_zero()
    }

    pub fn zero_test(&self) -> ZeroTest {
        test_zero(self, seed(), SAMPLES.with(|s| s.get()))
    }

    pub fn equiv(&self, other: &Expr) -> bool {
        self == other || (self - other).is_zero()
    }
}
