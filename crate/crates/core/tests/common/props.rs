use std::collections::BTreeMap;

use delay_ift::ddae::{reduce_index, ReduceOptions};
use delay_ift::expr::{AtomValues, DelayedVar, Expr, Sym};
use delay_ift::forms::{d_exactness, differential};
use delay_ift::ift::{
    build_bicausal, check_condition_c, BicausalMap, IftOptions, Verdict,
};
use delay_ift::ore::{try_inverse, SkewMatrix, SkewPoly, UnimodularCertificate};
use rand::Rng;

use super::*;

pub type Check = Result<(), String>;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// Products, sums and distributivity in K(δ], compared on a test signal.
pub fn ring_axioms(seed: u64) -> Check {
    let mut r = rng(seed);
    let vars = vars2();
    let a = random_skew(&mut r, &vars, 2);
    let b = random_skew(&mut r, &vars, 2);
    let c = random_skew(&mut r, &vars, 1);
    let f = |t: f64| (1.3 * t).sin() + 0.25 * t;
    let bf = |t: f64| apply(&b, &vars, &f, t);
    let cf = |t: f64| apply(&c, &vars, &f, t);
    let ab = a.mul(&b);
    let a_bc = a.mul(&(&b + &c));
    let ab_ac = &ab + &a.mul(&c);
    if a.mul(&b.mul(&c)) != ab.mul(&c) {
        return Err(format!("associativity fails for {a} | {b} | {c}"));
    }
    for k in 0..5 {
        let t = 0.37 + 1.1 * k as f64;
        let lhs = apply(&ab, &vars, &f, t);
        let rhs = apply(&a, &vars, &bf, t);
        if !close(lhs, rhs, 1e-9) {
            return Err(format!("(ab)f = {lhs} but a(bf) = {rhs} at t = {t} for a = {a}, b = {b}"));
        }
        let sum = apply(&(&a + &b), &vars, &f, t);
        let parts = apply(&a, &vars, &f, t) + apply(&b, &vars, &f, t);
        if !close(sum, parts, 1e-9) {
            return Err(format!("(a+b)f = {sum} but af+bf = {parts} at t = {t}"));
        }
        let lhs = apply(&a_bc, &vars, &f, t);
        let rhs = apply(&ab_ac, &vars, &f, t);
        let direct = apply(&a, &vars, &|s| bf(s) + cf(s), t);
        if !close(lhs, rhs, 1e-9) || !close(lhs, direct, 1e-9) {
            return Err(format!("a(b+c)f = {lhs}, (ab+ac)f = {rhs}, a(bf+cf) = {direct} at t = {t}"));
        }
    }
    Ok(())
}

/// Shifting is a ring endomorphism and `Δᵏ` undoes `δᵏ`.
pub fn shift_homomorphism(seed: u64) -> Check {
    let mut r = rng(seed);
    let vars = vars2();
    let e1 = random_expr(&mut r, &vars, 2);
    let e2 = random_expr(&mut r, &vars, 2);
    let k = r.gen_range(1..=3);
    if (&e1 * &e2).shift(k) != &e1.shift(k) * &e2.shift(k) {
        return Err(format!("shift of product: {e1} * {e2}, k = {k}"));
    }
    if (&e1 + &e2).shift(k) != &e1.shift(k) + &e2.shift(k) {
        return Err(format!("shift of sum: {e1} + {e2}, k = {k}"));
    }
    if !e2.is_zero() && (&e1 / &e2).shift(k) != &e1.shift(k) / &e2.shift(k) {
        return Err(format!("shift of quotient: {e1} / {e2}, k = {k}"));
    }
    if e1.shift(k).shift(-k) != e1 || e1.shift(-k).shift(k) != e1 {
        return Err(format!("Δ^{k} δ^{k} is not the identity on {e1}"));
    }
    // δᵏ·a = a(-k)·δᵏ
    let lhs = SkewPoly::delta(k as u32).mul(&SkewPoly::scalar(e1.clone()));
    let rhs = SkewPoly::monomial(e1.shift(k), k as u32);
    if lhs != rhs {
        return Err(format!("δ^{k} · {e1} = {lhs}, expected {rhs}"));
    }
    Ok(())
}

/// The differential of a function is closed: mixed partials agree.
pub fn dd_symmetry(seed: u64) -> Check {
    let mut r = rng(seed);
    let vars = vars2();
    let f = random_expr(&mut r, &vars, 2);
    let omega = differential(&f, &vars).map_err(|e| e.to_string())?;
    if !d_exactness(&omega) {
        return Err(format!("d(d{f}) != 0"));
    }
    let atoms: Vec<DelayedVar> = f.vars().into_iter().collect();
    for u in &atoms {
        for v in &atoms {
            if !(&f.partial(u).partial(v) - &f.partial(v).partial(u)).is_zero() {
                return Err(format!("∂{u}∂{v} {f} is not symmetric"));
            }
        }
    }
    Ok(())
}

/// A random unimodular 2x2 matrix built from elementary operations has a
/// certificate that re-verifies.
pub fn random_unimodular_certificate(seed: u64) -> Check {
    let mut r = rng(seed);
    let vars = vars2();
    let mut m = SkewMatrix::identity(2);
    for _ in 0..r.gen_range(1..=3) {
        let (i, j) = if r.gen_bool(0.5) { (0, 1) } else { (1, 0) };
        let p = SkewPoly::from_coeffs([(0, random_poly(&mut r, &vars, 1, 2)), (1, random_poly(&mut r, &vars, 1, 2))]);
        let mut rows: Vec<Vec<SkewPoly>> = (0..2).map(|k| m.row(k).to_vec()).collect();
        for c in 0..2 {
            let add = p.mul(&rows[j][c]);
            rows[i][c] = &rows[i][c] + &add;
        }
        let unit = Expr::int(r.gen_range(1..=3));
        for c in 0..2 {
            rows[j][c] = rows[j][c].left_scale(&unit);
        }
        m = SkewMatrix::from_rows(rows);
    }
    let out = try_inverse(&m, None);
    let cert = out.certificate().ok_or_else(|| format!("no certificate for {m:?}"))?;
    if !cert.verify() {
        return Err(format!("certificate for {m:?} does not verify"));
    }
    if !m.mul(&cert.b).is_identity() && !cert.a.mul(&m).is_identity() && !cert.b.mul(&m).is_identity() {
        return Err("certificate inverse does not invert the matrix".into());
    }
    Ok(())
}

struct Values(BTreeMap<DelayedVar, f64>);

impl AtomValues for Values {
    fn var(&self, v: DelayedVar) -> Option<f64> {
        self.0.get(&v).copied()
    }
    fn constant(&self, _: Sym) -> Option<f64> {
        None
    }
}

/// Push the test signals through `map.forward`, then pull them back through
/// `map.inverse` at several times.
pub fn numeric_round_trip(map: &BicausalMap, consts: &BTreeMap<Sym, f64>, tol: f64) -> Check {
    let span = (map.max_delay_forward + map.max_delay_inverse + 1) as i32;
    for k in 0..4 {
        let t = 5.3 + 0.71 * k as f64;
        let mut zs = BTreeMap::new();
        for j in 0..=span {
            for (i, f) in map.forward.iter().enumerate() {
                let at = ConstsAt { vars: &map.vars, t: t - j as f64, consts };
                let v = f.eval_with(&at).map_err(|e| format!("forward {f}: {e}"))?;
                zs.insert(DelayedVar::new(map.new_vars[i], j), v);
            }
        }
        let zs = Values(zs);
        for (i, g) in map.inverse.iter().enumerate() {
            let back = g.eval_with(&WithConsts { inner: &zs, consts }).map_err(|e| format!("inverse {g}: {e}"))?;
            let want = signal(i, t);
            if !close(back, want, tol) {
                return Err(format!("{} round trip gives {back}, expected {want} at t = {t}", map.vars[i]));
            }
        }
    }
    Ok(())
}

struct ConstsAt<'a> {
    vars: &'a [Sym],
    t: f64,
    consts: &'a BTreeMap<Sym, f64>,
}

impl AtomValues for ConstsAt<'_> {
    fn var(&self, v: DelayedVar) -> Option<f64> {
        At { vars: self.vars, t: self.t }.var(v)
    }
    fn constant(&self, c: Sym) -> Option<f64> {
        self.consts.get(&c).copied()
    }
}

struct WithConsts<'a> {
    inner: &'a Values,
    consts: &'a BTreeMap<Sym, f64>,
}

impl AtomValues for WithConsts<'_> {
    fn var(&self, v: DelayedVar) -> Option<f64> {
        self.inner.var(v)
    }
    fn constant(&self, c: Sym) -> Option<f64> {
        self.consts.get(&c).copied()
    }
}

/// Symbolic round trip of a map on a few functions of the old variables.
pub fn symbolic_round_trip(map: &BicausalMap, probes: &[Expr]) -> Check {
    for e in probes {
        let back = map.to_old(&map.to_new(e));
        if !back.equiv(e) {
            return Err(format!("{e} comes back as {back}"));
        }
    }
    for (i, g) in map.inverse.iter().enumerate() {
        let z = Expr::var(DelayedVar::new(map.new_vars[i], 0));
        if !map.to_new(&map.to_old(&z)).equiv(&z) {
            return Err(format!("{} does not round trip (inverse {g})", map.new_vars[i]));
        }
    }
    Ok(())
}

/// A random bicausal map composed of layers `u_i ↦ c u_i + g(u_j)` with `g`
/// a polynomial in `u_j` and its delays; each layer is inverted by hand.
pub fn random_bicausal(seed: u64) -> Check {
    let mut r = rng(seed);
    let vars = vars2();
    let ys = vec![Sym::new("y1"), Sym::new("y2")];
    let mut forward: Vec<Expr> = vars.iter().map(|v| Expr::var(DelayedVar::new(*v, 0))).collect();
    let mut inverse: Vec<Expr> = ys.iter().map(|v| Expr::var(DelayedVar::new(*v, 0))).collect();
    // two layers keep the values small enough for an f64 round trip
    for _ in 0..r.gen_range(1..=2) {
        let i = r.gen_range(0..2);
        let j = 1 - i;
        let c = Expr::int(r.gen_range(1..=3));
        let g = random_poly(&mut r, std::slice::from_ref(&vars[j]), 2, 2);
        let on = |target: &[Expr]| BTreeMap::from([(vars[j], target[j].clone())]);
        forward[i] = &(&c * &forward[i]) + &g.substitute(&on(&forward));
        let g_y = g.substitute(&BTreeMap::from([(vars[j], Expr::var(DelayedVar::new(ys[j], 0)))]));
        let y_i = Expr::var(DelayedVar::new(ys[i], 0));
        let undo = BTreeMap::from([(ys[i], &(&y_i - &g_y) / &c)]);
        inverse = inverse.iter().map(|e| e.substitute(&undo)).collect();
    }
    let map = BicausalMap::new(&vars, &ys, forward, inverse, None).map_err(|e| e.to_string())?;
    if !map.certificate.verify() {
        return Err("Jacobian certificate does not verify".into());
    }
    numeric_round_trip(&map, &BTreeMap::new(), 1e-8)?;
    let probes = [random_expr(&mut r, &vars, 2), random_expr(&mut r, &vars, 1)];
    symbolic_round_trip(&map, &probes)
}

/// Every coordinate step over the `.check` corpus lowers the degree of the
/// replaced entry; returns the number of steps seen.
pub fn degree_decrease_over_corpus() -> Result<usize, String> {
    let mut seen = 0;
    let mut runs: Vec<(String, Vec<Expr>, Vec<Sym>, IftOptions)> = Vec::new();
    for (name, p) in corpus("check") {
        let ls = p.equations.iter().map(|(_, e)| e.clone()).collect();
        runs.push((name.clone(), ls, p.vars.clone(), IftOptions::default()));
        let literal = IftOptions { early_exit: false, ..IftOptions::default() };
        let ls = p.equations.iter().map(|(_, e)| e.clone()).collect();
        runs.push((format!("{name} (literal)"), ls, p.vars.clone(), literal));
    }
    for (name, p) in corpus("ddae") {
        let Some(sys) = &p.ddae else { continue };
        let Ok(red) = reduce_index(sys, &ReduceOptions::default()) else { continue };
        for st in &red.steps {
            if st.f2.is_empty() {
                continue;
            }
            let closure = IftOptions { closure: true, ..IftOptions::default() };
            runs.push((format!("{name} step {}", st.k), st.f2.clone(), sys.vars.clone(), closure));
        }
    }
    for (name, ls, vars, opts) in runs {
        let Ok(res) = check_condition_c(&ls, &vars, &opts) else { continue };
        for st in &res.steps {
            seen += 1;
            if let Some(d) = st.degree_after {
                if d >= st.deg_s {
                    return Err(format!("{name}: step k={} l={} keeps degree {d} >= {}", st.k, st.l, st.deg_s));
                }
            }
        }
    }
    Ok(seen)
}

/// Re-verify every certificate the corpus produces; returns how many.
pub fn corpus_certificates() -> Result<usize, String> {
    let mut certs: Vec<(String, UnimodularCertificate)> = Vec::new();
    for (name, p) in corpus("check") {
        let ls: Vec<Expr> = p.equations.iter().map(|(_, e)| e.clone()).collect();
        let Ok(res) = check_condition_c(&ls, &p.vars, &IftOptions::default()) else { continue };
        if res.verdict != Verdict::Yes {
            continue;
        }
        if let Some(c) = &res.stacked_cert {
            certs.push((format!("{name} stacked"), c.clone()));
        }
        if let Ok(map) = build_bicausal(&res, "xt", None) {
            certs.push((format!("{name} bicausal"), map.certificate.clone()));
        }
    }
    for (name, p) in corpus("ddae") {
        let Some(sys) = &p.ddae else { continue };
        let Ok(red) = reduce_index(sys, &ReduceOptions::default()) else { continue };
        certs.push((format!("{name} phi"), red.phi.certificate.clone()));
        for st in &red.steps {
            certs.push((format!("{name} step {} rows", st.k), st.q.clone()));
            certs.push((format!("{name} step {} phi", st.k), st.phi.certificate.clone()));
        }
    }
    for (name, c) in &certs {
        if !c.verify() {
            return Err(format!("{name} certificate does not verify"));
        }
    }
    Ok(certs.len())
}

/// Bicausal maps of the corpus round-trip numerically and symbolically;
/// returns how many maps were checked.
pub fn corpus_round_trips() -> Result<usize, String> {
    let mut n = 0;
    for (name, p) in corpus("check") {
        let ls: Vec<Expr> = p.equations.iter().map(|(_, e)| e.clone()).collect();
        let Ok(res) = check_condition_c(&ls, &p.vars, &IftOptions::default()) else { continue };
        if res.verdict != Verdict::Yes {
            continue;
        }
        let Ok(map) = build_bicausal(&res, "xt", None) else { continue };
        let consts: BTreeMap<Sym, f64> = p.consts.iter().map(|c| (c.name, 1.5)).collect();
        numeric_round_trip(&map, &consts, 1e-8).map_err(|e| format!("{name}: {e}"))?;
        symbolic_round_trip(&map, &ls).map_err(|e| format!("{name}: {e}"))?;
        n += 1;
    }
    for (name, p) in corpus("ddae") {
        let Some(sys) = &p.ddae else { continue };
        let Ok(red) = reduce_index(sys, &ReduceOptions::default()) else { continue };
        let consts = p.constant_values();
        let vars: Vec<Sym> = sys.vars.clone();
        let probes: Vec<Expr> = vars.iter().map(|v| Expr::var(DelayedVar::new(*v, 1))).collect();
        numeric_round_trip(&red.phi, &consts, 1e-8).map_err(|e| format!("{name}: {e}"))?;
        symbolic_round_trip(&red.phi, &probes).map_err(|e| format!("{name}: {e}"))?;
        n += 1;
    }
    Ok(n)
}
