//! Truncated Taylor polynomials with real coefficients.
//!
//! A `Poly` is a dense coefficient slice over a lane's monomial table. The
//! coefficient at a monomial α is the Taylor coefficient (derivative divided
//! by α!). Complex-valued subexpressions are pairs of real polynomials.

use super::table::{Lane, MulProgram, TableSet};

#[derive(Debug, Clone)]
pub struct Poly {
    pub lane: Lane,
    pub coeffs: Vec<f64>,
}

impl Poly {
    pub fn zero(ts: &TableSet, lane: Lane) -> Self {
        Self {
            lane,
            coeffs: vec![0.0; ts.len(lane)],
        }
    }

    pub fn constant(ts: &TableSet, lane: Lane, c: f64) -> Self {
        let mut p = Self::zero(ts, lane);
        p.coeffs[0] = c;
        p
    }

    /// The polynomial `value + (variable at slot)`, where `slot` indexes the
    /// lane's own variables.
    pub fn variable(ts: &TableSet, lane: Lane, slot: usize, value: f64) -> Self {
        let mut p = Self::zero(ts, lane);
        p.coeffs[0] = value;
        let table = ts.table(lane);
        let mut e = vec![0u8; table.nvars];
        e[slot] = 1;
        let idx = table.index_of(&e).expect("degree-1 monomial present");
        p.coeffs[idx as usize] = 1.0;
        p
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }
}

/// Complex polynomial as a (re, im) pair in a common lane.
#[derive(Debug, Clone)]
pub struct CPoly {
    pub re: Poly,
    pub im: Poly,
}

pub(crate) fn mul_program<'a>(ts: &'a TableSet, a: Lane, b: Lane) -> (&'a MulProgram, bool) {
    // Returns the program and whether operands must be swapped to fit its
    // (lhs, rhs) lane expectations.
    match (a, b) {
        (Lane::Z, Lane::Z) => (&ts.zz, false),
        (Lane::V, Lane::V) => (&ts.vv, false),
        (Lane::Full, Lane::Full) => (&ts.ff, false),
        (Lane::Z, Lane::V) => (&ts.zv, false),
        (Lane::V, Lane::Z) => (&ts.zv, true),
        (Lane::Z, Lane::Full) => (&ts.zf, false),
        (Lane::Full, Lane::Z) => (&ts.zf, true),
        (Lane::V, Lane::Full) => (&ts.vf, false),
        (Lane::Full, Lane::V) => (&ts.vf, true),
    }
}

pub fn mul(ts: &TableSet, a: &Poly, b: &Poly) -> Poly {
    let lane = a.lane.join(b.lane);
    let mut out = Poly::zero(ts, lane);
    let (prog, swap) = mul_program(ts, a.lane, b.lane);
    if swap {
        prog.apply(&b.coeffs, &a.coeffs, &mut out.coeffs);
    } else {
        prog.apply(&a.coeffs, &b.coeffs, &mut out.coeffs);
    }
    out
}

pub fn embed(ts: &TableSet, a: &Poly, lane: Lane) -> Poly {
    if a.lane == lane {
        return a.clone();
    }
    assert!(lane == Lane::Full, "can only embed into the full lane");
    let mut out = Poly::zero(ts, Lane::Full);
    match a.lane {
        Lane::Z => ts.embed_z.apply(&a.coeffs, &mut out.coeffs),
        Lane::V => ts.embed_v.apply(&a.coeffs, &mut out.coeffs),
        Lane::Full => unreachable!(),
    }
    out
}

pub fn add(ts: &TableSet, a: &Poly, b: &Poly) -> Poly {
    binary_linear(ts, a, b, |x, y| x + y)
}

pub fn sub(ts: &TableSet, a: &Poly, b: &Poly) -> Poly {
    binary_linear(ts, a, b, |x, y| x - y)
}

fn binary_linear(ts: &TableSet, a: &Poly, b: &Poly, f: impl Fn(f64, f64) -> f64) -> Poly {
    let lane = a.lane.join(b.lane);
    if a.lane == b.lane {
        let mut out = a.clone();
        for (o, &bc) in out.coeffs.iter_mut().zip(&b.coeffs) {
            *o = f(*o, bc);
        }
        return out;
    }
    let ea = embed(ts, a, lane);
    let eb = embed(ts, b, lane);
    let mut out = ea;
    for (o, &bc) in out.coeffs.iter_mut().zip(&eb.coeffs) {
        *o = f(*o, bc);
    }
    out
}

pub fn scale(a: &Poly, s: f64) -> Poly {
    let mut out = a.clone();
    for c in &mut out.coeffs {
        *c *= s;
    }
    out
}

pub fn add_scalar(a: &Poly, s: f64) -> Poly {
    let mut out = a.clone();
    out.coeffs[0] += s;
    out
}

/// q = f / g, both promoted to a common lane. Caller must ensure g(point) ≠ 0.
pub fn div(ts: &TableSet, f: &Poly, g: &Poly) -> Poly {
    let lane = f.lane.join(g.lane);
    let ef = embed(ts, f, lane);
    let eg = embed(ts, g, lane);
    let (prog, _) = mul_program(ts, lane, lane);
    let mut q = Poly::zero(ts, lane);
    prog.divide(&ef.coeffs, &eg.coeffs, &mut q.coeffs);
    q
}

/// Evaluate a univariate series Σ s_k w^k at w = u − u(point) via Horner.
pub fn compose(ts: &TableSet, u: &Poly, series: &[f64]) -> Poly {
    let mut w = u.clone();
    w.coeffs[0] = 0.0;
    let (prog, _) = mul_program(ts, u.lane, u.lane);
    let d = series.len() - 1;
    let mut acc = Poly::constant(ts, u.lane, series[d]);
    let mut tmp = Poly::zero(ts, u.lane);
    for k in (0..d).rev() {
        prog.apply(&acc.coeffs, &w.coeffs, &mut tmp.coeffs);
        std::mem::swap(&mut acc.coeffs, &mut tmp.coeffs);
        acc.coeffs[0] += series[k];
    }
    acc
}

// Series coefficient tables: s_k = f^(k)(c0) / k!.

pub fn exp_series(c0: f64, order: usize) -> Vec<f64> {
    let e = c0.exp();
    let mut s = vec![e; order + 1];
    let mut fact = 1.0;
    for (k, v) in s.iter_mut().enumerate() {
        if k > 0 {
            fact *= k as f64;
        }
        *v = e / fact;
    }
    s
}

pub fn ln_series(c0: f64, order: usize) -> Vec<f64> {
    let mut s = vec![0.0; order + 1];
    s[0] = c0.ln();
    let mut pw = c0;
    for (k, v) in s.iter_mut().enumerate().skip(1) {
        *v = if k % 2 == 1 { 1.0 } else { -1.0 } / (k as f64 * pw);
        pw *= c0;
    }
    s
}

pub fn sin_series(c0: f64, order: usize) -> Vec<f64> {
    trig_series(c0, order, true)
}

pub fn cos_series(c0: f64, order: usize) -> Vec<f64> {
    trig_series(c0, order, false)
}

fn trig_series(c0: f64, order: usize, sine: bool) -> Vec<f64> {
    let (s0, c0v) = c0.sin_cos();
    let cycle = if sine {
        [s0, c0v, -s0, -c0v]
    } else {
        [c0v, -s0, -c0v, s0]
    };
    let mut s = vec![0.0; order + 1];
    let mut fact = 1.0;
    for (k, v) in s.iter_mut().enumerate() {
        if k > 0 {
            fact *= k as f64;
        }
        *v = cycle[k % 4] / fact;
    }
    s
}

/// Series of u^alpha around c0 > 0: s_k = binom(alpha, k) c0^(alpha-k).
pub fn powf_series(c0: f64, alpha: f64, order: usize) -> Vec<f64> {
    let mut s = vec![0.0; order + 1];
    let mut binom = 1.0;
    for (k, v) in s.iter_mut().enumerate() {
        if k > 0 {
            binom *= (alpha - (k as f64 - 1.0)) / k as f64;
        }
        *v = binom * c0.powf(alpha - k as f64);
    }
    s
}

pub fn sqrt_series(c0: f64, order: usize) -> Vec<f64> {
    powf_series(c0, 0.5, order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ts() -> TableSet {
        TableSet::new(2, 5)
    }

    #[test]
    fn exp_of_variable_reproduces_series() {
        let ts = ts();
        let x = Poly::variable(&ts, Lane::Z, 0, 0.0);
        let e = compose(&ts, &x, &exp_series(0.0, 5));
        // coefficients of exp(x): 1, 1, 1/2, 1/6, 1/24, 1/120 on pure x powers
        let tz = ts.table(Lane::Z);
        for k in 0..=5u8 {
            let idx = tz.index_of(&[k, 0, 0, 0]).unwrap() as usize;
            let expect = 1.0 / (1..=k as u64).product::<u64>() as f64;
            assert_relative_eq!(e.coeffs[idx], expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn ln_of_one_plus_x() {
        let ts = ts();
        let x = Poly::variable(&ts, Lane::Z, 0, 1.0);
        let l = compose(&ts, &x, &ln_series(1.0, 5));
        let tz = ts.table(Lane::Z);
        let expect = [0.0, 1.0, -0.5, 1.0 / 3.0, -0.25, 0.2];
        for k in 0..=5u8 {
            let idx = tz.index_of(&[k, 0, 0, 0]).unwrap() as usize;
            assert_relative_eq!(l.coeffs[idx], expect[k as usize], epsilon = 1e-14);
        }
    }

    #[test]
    fn division_exact_on_geometric_series() {
        let ts = ts();
        let one = Poly::constant(&ts, Lane::V, 1.0);
        let x = Poly::variable(&ts, Lane::V, 0, 0.0);
        let denom = sub(&ts, &one, &x);
        let q = div(&ts, &one, &denom);
        let tv = ts.table(Lane::V);
        for k in 0..=5u8 {
            let idx = tv.index_of(&[k, 0, 0, 0]).unwrap() as usize;
            assert_relative_eq!(q.coeffs[idx], 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn sin_cos_pythagoras_exact_to_order() {
        let ts = ts();
        let x = Poly::variable(&ts, Lane::Z, 1, 0.4);
        let s = compose(&ts, &x, &sin_series(0.4, 5));
        let c = compose(&ts, &x, &cos_series(0.4, 5));
        let s2 = mul(&ts, &s, &s);
        let c2 = mul(&ts, &c, &c);
        let sum = add(&ts, &s2, &c2);
        assert_relative_eq!(sum.coeffs[0], 1.0, epsilon = 1e-14);
        for k in 1..sum.coeffs.len() {
            assert!(sum.coeffs[k].abs() < 1e-13);
        }
    }

    #[test]
    fn powf_matches_sqrt_of_square() {
        let ts = ts();
        let x = Poly::variable(&ts, Lane::Z, 0, 2.0);
        let sq = mul(&ts, &x, &x);
        let back = compose(&ts, &sq, &sqrt_series(4.0, 5));
        for k in 0..back.coeffs.len() {
            assert!((back.coeffs[k] - x.coeffs[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn mixed_lane_product_promotes_to_full() {
        let ts = ts();
        let a = Poly::variable(&ts, Lane::Z, 0, 1.5);
        let b = Poly::variable(&ts, Lane::V, 2, -0.5);
        let p = mul(&ts, &a, &b);
        assert_eq!(p.lane, Lane::Full);
        assert_relative_eq!(p.value(), 1.5 * -0.5);
    }
}
