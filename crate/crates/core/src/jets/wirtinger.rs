//! Wirtinger partials from real Taylor tables.
//!
//! The jet of a metric expression is first computed as a truncated Taylor
//! table over the 4n real coordinates (x, y, p, q). Mixed Wirtinger partials
//! ∂_z^a ∂_z̄^b ∂_v^c ∂_v̄^d are linear combinations of real partials through
//! the basis change ∂_z = ½(∂_x − i ∂_y); the combinations are precompiled
//! into per-entry term lists so a node evaluation is a short dot product.
//!
//! For real-valued sources the partial at a conjugated multi-index is the
//! complex conjugate of the original; the converter computes one
//! representative per conjugate pair and mirrors it, which makes the
//! symmetry hold bitwise.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use super::poly::{CPoly, Poly};
use super::table::{JetTable, Lane, TableSet};
use crate::error::{Error, Result};
use crate::C64;

/// Orders of differentiation per coordinate, lattice layout:
/// slots [2i, 2i+1] = (z_i, z̄_i) for i < n, then [2n+2i, 2n+2i+1] = (v_i, v̄_i).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WirtingerIndex {
    pub slots: Vec<u8>,
}

impl WirtingerIndex {
    pub fn new(n: usize) -> Self {
        Self {
            slots: vec![0; 4 * n],
        }
    }

    pub fn z(mut self, i: usize) -> Self {
        self.slots[2 * i] += 1;
        self
    }

    pub fn zbar(mut self, i: usize) -> Self {
        self.slots[2 * i + 1] += 1;
        self
    }

    pub fn v(mut self, i: usize) -> Self {
        let n = self.slots.len() / 4;
        self.slots[2 * n + 2 * i] += 1;
        self
    }

    pub fn vbar(mut self, i: usize) -> Self {
        let n = self.slots.len() / 4;
        self.slots[2 * n + 2 * i + 1] += 1;
        self
    }

    pub fn total_order(&self) -> usize {
        self.slots.iter().map(|&s| s as usize).sum()
    }
}

fn conjugate_slots(slots: &[u8]) -> Vec<u8> {
    let mut out = slots.to_vec();
    for pair in out.chunks_exact_mut(2) {
        pair.swap(0, 1);
    }
    out
}

/// Per-coordinate expansion of ∂_ζ^a ∂_ζ̄^b into real (ξ, υ) partials.
fn coord_terms(a: u8, b: u8) -> Vec<(u8, u8, C64)> {
    let half = 0.5f64.powi((a + b) as i32);
    let mut out = Vec::new();
    for r in 0..=a {
        for s in 0..=b {
            let coeff = binom(a, r) * binom(b, s) * half;
            // (−i)^(a−r) · (i)^(b−s)
            let phase = ipow(b as i32 - s as i32 - (a as i32 - r as i32));
            out.push((r + s, (a - r) + (b - s), phase * coeff));
        }
    }
    out
}

fn binom(n: u8, k: u8) -> f64 {
    let mut v = 1.0;
    for j in 0..k {
        v = v * (n - j) as f64 / (j + 1) as f64;
    }
    v
}

fn ipow(k: i32) -> C64 {
    match k.rem_euclid(4) {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

struct ConvEntry {
    widx: u32,
    conj_widx: u32,
    term_start: u32,
    term_end: u32,
}

/// Compiled linear map from a full-lane real coefficient table to Wirtinger
/// partial values.
pub struct ConversionProgram {
    entries: Vec<ConvEntry>,
    terms: Vec<(u32, C64)>,
    mirrored: bool,
    out_len: usize,
}

impl ConversionProgram {
    /// `mirror` exploits conjugation symmetry of real-valued sources;
    /// `keep` restricts which lattice entries are computed.
    fn build(lattice: &JetTable, real: &JetTable, mirror: bool, keep: impl Fn(&[u8]) -> bool) -> Self {
        let n2 = lattice.nvars; // = 4n slots
        let mut entries = Vec::new();
        let mut terms = Vec::new();
        for (wi, slots) in lattice.monomials.iter().enumerate() {
            if !keep(slots) {
                continue;
            }
            let conj = conjugate_slots(slots);
            let ci = lattice.index_of(&conj).expect("conjugate index in lattice") as usize;
            if mirror && ci < wi {
                continue; // handled as the mirror of its conjugate
            }
            let start = terms.len() as u32;
            // Cartesian product of per-coordinate expansions.
            let coord_lists: Vec<Vec<(u8, u8, C64)>> = (0..n2 / 2)
                .map(|c| coord_terms(slots[2 * c], slots[2 * c + 1]))
                .collect();
            let mut stack: Vec<(usize, Vec<u8>, C64)> =
                vec![(0, vec![0u8; n2], C64::new(1.0, 0.0))];
            while let Some((c, expts, coeff)) = stack.pop() {
                if c == coord_lists.len() {
                    let ridx = real
                        .index_of(&expts)
                        .expect("real monomial within table order");
                    // Taylor coefficient → derivative: multiply by α!.
                    let mut fact = 1.0;
                    for &e in &expts {
                        for j in 2..=e {
                            fact *= j as f64;
                        }
                    }
                    terms.push((ridx, coeff * fact));
                    continue;
                }
                for &(ex, ey, cf) in &coord_lists[c] {
                    let mut e2 = expts.clone();
                    e2[2 * c] = ex;
                    e2[2 * c + 1] = ey;
                    stack.push((c + 1, e2, coeff * cf));
                }
            }
            entries.push(ConvEntry {
                widx: wi as u32,
                conj_widx: ci as u32,
                term_start: start,
                term_end: terms.len() as u32,
            });
        }
        Self {
            entries,
            terms,
            mirrored: mirror,
            out_len: lattice.len(),
        }
    }

    pub fn out_len(&self) -> usize {
        self.out_len
    }

    /// Partials of a real-valued source (mirror symmetry applied bitwise).
    pub fn apply_real(&self, real_full: &[f64], out: &mut [C64]) {
        debug_assert!(self.mirrored);
        for e in &self.entries {
            let mut acc = C64::new(0.0, 0.0);
            for &(r, c) in &self.terms[e.term_start as usize..e.term_end as usize] {
                acc += c * real_full[r as usize];
            }
            if e.widx == e.conj_widx {
                // Self-conjugate partials of real sources are real; the tiny
                // imaginary accumulation residue is pure rounding noise.
                acc.im = 0.0;
            }
            out[e.widx as usize] = acc;
            out[e.conj_widx as usize] = acc.conj();
        }
    }

    /// Partials of a complex-valued source.
    pub fn apply_complex(&self, re: &[f64], im: &[f64], out: &mut [C64]) {
        debug_assert!(!self.mirrored);
        for e in &self.entries {
            let mut acc_re = C64::new(0.0, 0.0);
            let mut acc_im = C64::new(0.0, 0.0);
            for &(r, c) in &self.terms[e.term_start as usize..e.term_end as usize] {
                acc_re += c * re[r as usize];
                acc_im += c * im[r as usize];
            }
            out[e.widx as usize] = acc_re + C64::new(0.0, 1.0) * acc_im;
        }
    }
}

/// Tables, multiplication programs, and conversion programs for one
/// (dims, order) configuration. Construction is moderately expensive;
/// contexts are shared through [`JetContext::shared`].
pub struct JetContext {
    pub n: usize,
    pub order: usize,
    pub ts: TableSet,
    /// Lattice of Wirtinger multi-indices; structurally the same monomial
    /// set as the full real table.
    pub lattice: Arc<JetTable>,
    pub conv_full: ConversionProgram,
    pub conv_complex: ConversionProgram,
    /// Restricted to ≤1 unbarred and ≤1 barred z-derivative: everything the
    /// connection/curvature kernels read. Cuts conversion cost on sweeps.
    pub conv_geom: ConversionProgram,
}

impl std::fmt::Debug for JetContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "JetContext(n={}, order={})", self.n, self.order)
    }
}

fn geom_keep(n: usize) -> impl Fn(&[u8]) -> bool {
    move |slots: &[u8]| {
        let zu: u8 = (0..n).map(|i| slots[2 * i]).sum();
        let zb: u8 = (0..n).map(|i| slots[2 * i + 1]).sum();
        zu <= 1 && zb <= 1
    }
}

impl JetContext {
    pub fn new(n: usize, order: usize) -> Self {
        let ts = TableSet::new(n, order);
        let lattice = ts.tf.clone();
        let conv_full = ConversionProgram::build(&lattice, &ts.tf, true, |_| true);
        let conv_complex = ConversionProgram::build(&lattice, &ts.tf, false, |_| true);
        let conv_geom = ConversionProgram::build(&lattice, &ts.tf, true, geom_keep(n));
        Self {
            n,
            order,
            ts,
            lattice,
            conv_full,
            conv_complex,
            conv_geom,
        }
    }

    /// Cached shared context; building programs is O(table²) so pipelines
    /// reuse them.
    pub fn shared(n: usize, order: usize) -> Arc<JetContext> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<JetContext>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap();
        guard
            .entry((n, order))
            .or_insert_with(|| Arc::new(JetContext::new(n, order)))
            .clone()
    }

    pub fn lattice_index(&self, idx: &WirtingerIndex) -> Option<u32> {
        self.lattice.index_of(&idx.slots)
    }

    /// Full-lane real buffer for conversion input.
    pub fn promote_real(&self, p: &Poly) -> Vec<f64> {
        match p.lane {
            Lane::Full => p.coeffs.clone(),
            Lane::Z => {
                let mut out = vec![0.0; self.ts.tf.len()];
                self.ts.embed_z.apply(&p.coeffs, &mut out);
                out
            }
            Lane::V => {
                let mut out = vec![0.0; self.ts.tf.len()];
                self.ts.embed_v.apply(&p.coeffs, &mut out);
                out
            }
        }
    }
}

/// All mixed Wirtinger partials of a source function at one point.
#[derive(Debug, Clone)]
pub struct WirtingerJet {
    pub n: usize,
    pub order: usize,
    lattice: Arc<JetTable>,
    pub partials: Vec<C64>,
}

impl WirtingerJet {
    pub fn from_real(ctx: &JetContext, p: &Poly) -> Self {
        let full = ctx.promote_real(p);
        let mut partials = vec![C64::new(0.0, 0.0); ctx.lattice.len()];
        ctx.conv_full.apply_real(&full, &mut partials);
        Self {
            n: ctx.n,
            order: ctx.order,
            lattice: ctx.lattice.clone(),
            partials,
        }
    }

    pub fn from_complex(ctx: &JetContext, p: &CPoly) -> Self {
        let re = ctx.promote_real(&p.re);
        let im = ctx.promote_real(&p.im);
        let mut partials = vec![C64::new(0.0, 0.0); ctx.lattice.len()];
        ctx.conv_complex.apply_complex(&re, &im, &mut partials);
        Self {
            n: ctx.n,
            order: ctx.order,
            lattice: ctx.lattice.clone(),
            partials,
        }
    }

    pub fn value(&self) -> C64 {
        self.partials[0]
    }

    pub fn partial(&self, idx: &WirtingerIndex) -> Result<C64> {
        let total = idx.total_order();
        if total > self.order {
            return Err(Error::Order {
                requested: total,
                available: self.order,
            });
        }
        let i = self
            .lattice
            .index_of(&idx.slots)
            .ok_or(Error::Order {
                requested: total,
                available: self.order,
            })?;
        Ok(self.partials[i as usize])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::poly;
    use approx::assert_relative_eq;

    /// |v1|^2 + |v2|^2 as a v-lane polynomial at v = (p1+iq1, p2+iq2).
    fn flat_metric_poly(ts: &TableSet, v: [(f64, f64); 2]) -> Poly {
        let mut acc = Poly::zero(ts, Lane::V);
        for i in 0..2 {
            let p = Poly::variable(ts, Lane::V, 2 * i, v[i].0);
            let q = Poly::variable(ts, Lane::V, 2 * i + 1, v[i].1);
            let p2 = poly::mul(ts, &p, &p);
            let q2 = poly::mul(ts, &q, &q);
            acc = poly::add(ts, &acc, &poly::add(ts, &p2, &q2));
        }
        acc
    }

    #[test]
    fn flat_metric_levi_is_identity() {
        let ctx = JetContext::new(2, 4);
        let g = flat_metric_poly(&ctx.ts, [(1.0, 0.0), (0.0, 0.0)]);
        let jet = WirtingerJet::from_real(&ctx, &g);
        assert_relative_eq!(jet.value().re, 1.0);
        for i in 0..2 {
            for j in 0..2 {
                let idx = WirtingerIndex::new(2).v(i).vbar(j);
                let got = jet.partial(&idx).unwrap();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(got.re, expect, epsilon = 1e-14);
                assert_relative_eq!(got.im, 0.0, epsilon = 1e-14);
            }
        }
        // first z-derivative vanishes
        let dz = jet.partial(&WirtingerIndex::new(2).z(0)).unwrap();
        assert_eq!(dz, C64::new(0.0, 0.0));
    }

    #[test]
    fn conjugation_symmetry_bitwise() {
        let ctx = JetContext::new(2, 4);
        // A generic real-valued source: (p1 + 0.3)^2 (q2 - 0.1) + q1 p2
        let ts = &ctx.ts;
        let p1 = Poly::variable(ts, Lane::V, 0, 0.7);
        let q1 = Poly::variable(ts, Lane::V, 1, -0.2);
        let p2 = Poly::variable(ts, Lane::V, 2, 0.4);
        let q2 = Poly::variable(ts, Lane::V, 3, 1.1);
        let t1 = poly::mul(ts, &poly::add_scalar(&p1, 0.3), &poly::add_scalar(&p1, 0.3));
        let t1 = poly::mul(ts, &t1, &poly::add_scalar(&q2, -0.1));
        let t2 = poly::mul(ts, &q1, &p2);
        let src = poly::add(ts, &t1, &t2);
        let jet = WirtingerJet::from_real(&ctx, &src);
        for (wi, slots) in ctx.lattice.monomials.iter().enumerate() {
            let ci = ctx.lattice.index_of(&conjugate_slots(slots)).unwrap() as usize;
            let a = jet.partials[wi];
            let b = jet.partials[ci].conj();
            // Exact, not approximate: the converter mirrors conjugate pairs.
            assert!(a.re == b.re && a.im == b.im, "asymmetry at index {wi}");
        }
    }

    #[test]
    fn holomorphic_source_through_complex_conversion() {
        // f = z1^2: ∂_z1 f = 2 z1, ∂_z̄1 f = 0.
        let ctx = JetContext::new(2, 3);
        let ts = &ctx.ts;
        let x = Poly::variable(ts, Lane::Z, 0, 0.5);
        let y = Poly::variable(ts, Lane::Z, 1, -0.3);
        // z^2 = (x^2 - y^2) + i(2xy)
        let re = poly::sub(ts, &poly::mul(ts, &x, &x), &poly::mul(ts, &y, &y));
        let im = poly::scale(&poly::mul(ts, &x, &y), 2.0);
        let cp = CPoly { re, im };
        let jet = WirtingerJet::from_complex(&ctx, &cp);
        let dz = jet.partial(&WirtingerIndex::new(2).z(0)).unwrap();
        assert_relative_eq!(dz.re, 1.0, epsilon = 1e-14);
        assert_relative_eq!(dz.im, -0.6, epsilon = 1e-14);
        let dzbar = jet.partial(&WirtingerIndex::new(2).zbar(0)).unwrap();
        assert!(dzbar.norm() < 1e-14);
        let dzz = jet
            .partial(&WirtingerIndex::new(2).z(0).z(0))
            .unwrap();
        assert_relative_eq!(dzz.re, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn order_error_beyond_truncation() {
        let ctx = JetContext::new(2, 2);
        let g = flat_metric_poly(&ctx.ts, [(1.0, 0.0), (0.5, 0.5)]);
        let jet = WirtingerJet::from_real(&ctx, &g);
        let idx = WirtingerIndex::new(2).v(0).v(0).vbar(0);
        assert!(matches!(jet.partial(&idx), Err(Error::Order { .. })));
    }
}
