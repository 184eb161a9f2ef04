//! Monomial tables for truncated multivariate Taylor arithmetic.
//!
//! A `JetTable` enumerates every multi-index of total degree ≤ `order` in
//! `nvars` real variables, graded by degree (ascending) so that truncated
//! division can run as a single forward recursion. Multiplication is driven
//! by precomputed pair programs: for every target monomial, the list of
//! factor index pairs contributing to it. Programs are built once per
//! context and shared; the hot loops are then pure fused multiply-adds.

use std::collections::HashMap;
use std::sync::Arc;

/// Which real variables a polynomial depends on.
///
/// Metric expressions factor into base-only (z) and fiber-only (v) subtrees
/// most of the time; keeping those in smaller tables and only promoting
/// products to the full table is what makes grid×fiber sweeps affordable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Lane {
    /// x_1, y_1, …, x_n, y_n (real parts of z).
    Z,
    /// p_1, q_1, …, p_n, q_n (real parts of v).
    V,
    /// All 4n variables, z-block first.
    Full,
}

impl Lane {
    pub fn join(self, other: Lane) -> Lane {
        if self == other {
            self
        } else {
            Lane::Full
        }
    }
}

#[derive(Debug)]
pub struct JetTable {
    pub nvars: usize,
    pub order: usize,
    /// Exponent vectors, sorted by (degree, lex).
    pub monomials: Vec<Vec<u8>>,
    pub degree: Vec<u8>,
    index: HashMap<Vec<u8>, u32>,
}

impl JetTable {
    pub fn new(nvars: usize, order: usize) -> Self {
        let mut monomials = Vec::new();
        let mut current = vec![0u8; nvars];
        for deg in 0..=order {
            enumerate_degree(&mut current, 0, deg as u8, &mut monomials);
        }
        let mut index = HashMap::with_capacity(monomials.len());
        let mut degree = Vec::with_capacity(monomials.len());
        for (i, m) in monomials.iter().enumerate() {
            index.insert(m.clone(), i as u32);
            degree.push(m.iter().sum());
        }
        Self {
            nvars,
            order,
            monomials,
            degree,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn index_of(&self, expts: &[u8]) -> Option<u32> {
        self.index.get(expts).copied()
    }
}

fn enumerate_degree(current: &mut Vec<u8>, var: usize, remaining: u8, out: &mut Vec<Vec<u8>>) {
    if var == current.len() - 1 {
        current[var] = remaining;
        out.push(current.clone());
        current[var] = 0;
        return;
    }
    // Lex order with the *first* variable most significant.
    for e in (0..=remaining).rev() {
        current[var] = e;
        enumerate_degree(current, var + 1, remaining - e, out);
        current[var] = 0;
    }
}

/// How a smaller table's variables sit inside a larger one.
#[derive(Debug, Clone, Copy)]
pub enum VarOffset {
    Identity,
    /// Shift all variable slots right by this many positions.
    Shift(usize),
}

fn place(expts: &[u8], offset: VarOffset, target_nvars: usize) -> Vec<u8> {
    let mut out = vec![0u8; target_nvars];
    let shift = match offset {
        VarOffset::Identity => 0,
        VarOffset::Shift(s) => s,
    };
    for (i, &e) in expts.iter().enumerate() {
        out[i + shift] = e;
    }
    out
}

/// Pair program: CSR over target monomials; `pairs[t]` holds the (lhs, rhs)
/// coefficient index pairs whose exponents sum to the target.
#[derive(Debug)]
pub struct MulProgram {
    pub offsets: Vec<u32>,
    pub pairs: Vec<(u32, u32)>,
}

impl MulProgram {
    pub fn build(
        lhs: &JetTable,
        lhs_off: VarOffset,
        rhs: &JetTable,
        rhs_off: VarOffset,
        target: &JetTable,
    ) -> Self {
        let order = target.order as u8;
        let mut triples: Vec<(u32, u32, u32)> = Vec::new();
        for (ai, am) in lhs.monomials.iter().enumerate() {
            let adeg = lhs.degree[ai];
            if adeg > order {
                continue;
            }
            let placed_a = place(am, lhs_off, target.nvars);
            for (bi, bm) in rhs.monomials.iter().enumerate() {
                if adeg + rhs.degree[bi] > order {
                    continue;
                }
                let mut t = placed_a.clone();
                let shift = match rhs_off {
                    VarOffset::Identity => 0,
                    VarOffset::Shift(s) => s,
                };
                for (k, &e) in bm.iter().enumerate() {
                    t[k + shift] += e;
                }
                let ti = target
                    .index_of(&t)
                    .expect("product monomial must exist in target table");
                triples.push((ti, ai as u32, bi as u32));
            }
        }
        triples.sort_unstable();
        let mut offsets = vec![0u32; target.len() + 1];
        let mut pairs = Vec::with_capacity(triples.len());
        for &(t, a, b) in &triples {
            offsets[t as usize + 1] += 1;
            pairs.push((a, b));
        }
        for i in 0..target.len() {
            offsets[i + 1] += offsets[i];
        }
        Self { offsets, pairs }
    }

    /// out[t] = Σ_{(a,b)→t} lhs[a]·rhs[b]
    pub fn apply(&self, lhs: &[f64], rhs: &[f64], out: &mut [f64]) {
        for t in 0..out.len() {
            let lo = self.offsets[t] as usize;
            let hi = self.offsets[t + 1] as usize;
            let mut acc = 0.0;
            for &(a, b) in &self.pairs[lo..hi] {
                acc += lhs[a as usize] * rhs[b as usize];
            }
            out[t] = acc;
        }
    }

    /// Truncated division q = f / g within one table, where the pair list
    /// is this table's own multiplication program. Requires |g[0]| > 0;
    /// targets are graded so every q[a] a pair needs is already final,
    /// except the (t, 0) pair that is solved for.
    pub fn divide(&self, f: &[f64], g: &[f64], q: &mut [f64]) {
        let g0 = g[0];
        for t in 0..q.len() {
            let lo = self.offsets[t] as usize;
            let hi = self.offsets[t + 1] as usize;
            let mut acc = 0.0;
            for &(a, b) in &self.pairs[lo..hi] {
                if a as usize == t && b == 0 {
                    continue;
                }
                acc += q[a as usize] * g[b as usize];
            }
            q[t] = (f[t] - acc) / g0;
        }
    }
}

/// Index map embedding a sub-lane table into the full table.
#[derive(Debug)]
pub struct EmbedMap {
    pub target_index: Vec<u32>,
}

impl EmbedMap {
    pub fn build(src: &JetTable, off: VarOffset, target: &JetTable) -> Self {
        let target_index = src
            .monomials
            .iter()
            .map(|m| {
                target
                    .index_of(&place(m, off, target.nvars))
                    .expect("embedded monomial must exist")
            })
            .collect();
        Self { target_index }
    }

    pub fn apply(&self, src: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (i, &t) in self.target_index.iter().enumerate() {
            out[t as usize] = src[i];
        }
    }
}

/// All tables and programs for one (dims, order) configuration.
#[derive(Debug)]
pub struct TableSet {
    pub n: usize,
    pub order: usize,
    pub tz: Arc<JetTable>,
    pub tv: Arc<JetTable>,
    pub tf: Arc<JetTable>,
    pub zz: MulProgram,
    pub vv: MulProgram,
    pub ff: MulProgram,
    /// (z-lane, v-lane) → full; the separable fast path.
    pub zv: MulProgram,
    pub zf: MulProgram,
    pub vf: MulProgram,
    pub embed_z: EmbedMap,
    pub embed_v: EmbedMap,
}

impl TableSet {
    pub fn new(n: usize, order: usize) -> Self {
        let tz = Arc::new(JetTable::new(2 * n, order));
        let tv = Arc::new(JetTable::new(2 * n, order));
        let tf = Arc::new(JetTable::new(4 * n, order));
        let vshift = VarOffset::Shift(2 * n);
        let zz = MulProgram::build(&tz, VarOffset::Identity, &tz, VarOffset::Identity, &tz);
        let vv = MulProgram::build(&tv, VarOffset::Identity, &tv, VarOffset::Identity, &tv);
        let ff = MulProgram::build(&tf, VarOffset::Identity, &tf, VarOffset::Identity, &tf);
        let zv = MulProgram::build(&tz, VarOffset::Identity, &tv, vshift, &tf);
        let zf = MulProgram::build(&tz, VarOffset::Identity, &tf, VarOffset::Identity, &tf);
        let vf = MulProgram::build(&tv, vshift, &tf, VarOffset::Identity, &tf);
        let embed_z = EmbedMap::build(&tz, VarOffset::Identity, &tf);
        let embed_v = EmbedMap::build(&tv, vshift, &tf);
        Self {
            n,
            order,
            tz,
            tv,
            tf,
            zz,
            vv,
            ff,
            zv,
            zf,
            vf,
            embed_z,
            embed_v,
        }
    }

    pub fn table(&self, lane: Lane) -> &JetTable {
        match lane {
            Lane::Z => &self.tz,
            Lane::V => &self.tv,
            Lane::Full => &self.tf,
        }
    }

    pub fn len(&self, lane: Lane) -> usize {
        self.table(lane).len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_counts_are_binomial() {
        // #monomials of degree ≤ d in m vars = C(m + d, d)
        let t = JetTable::new(8, 4);
        assert_eq!(t.len(), 495);
        let t = JetTable::new(8, 5);
        assert_eq!(t.len(), 1287);
        let t = JetTable::new(4, 2);
        assert_eq!(t.len(), 15);
    }

    #[test]
    fn graded_order() {
        let t = JetTable::new(3, 3);
        for i in 1..t.len() {
            assert!(t.degree[i - 1] <= t.degree[i]);
        }
        assert_eq!(t.monomials[0], vec![0, 0, 0]);
    }

    #[test]
    fn multiplication_of_linear_forms() {
        // (1 + x0)(1 + x1) = 1 + x0 + x1 + x0 x1 in a 2-var order-2 table.
        let t = JetTable::new(2, 2);
        let prog = MulProgram::build(&t, VarOffset::Identity, &t, VarOffset::Identity, &t);
        let mut a = vec![0.0; t.len()];
        let mut b = vec![0.0; t.len()];
        a[0] = 1.0;
        a[t.index_of(&[1, 0]).unwrap() as usize] = 1.0;
        b[0] = 1.0;
        b[t.index_of(&[0, 1]).unwrap() as usize] = 1.0;
        let mut out = vec![0.0; t.len()];
        prog.apply(&a, &b, &mut out);
        assert_eq!(out[0], 1.0);
        assert_eq!(out[t.index_of(&[1, 0]).unwrap() as usize], 1.0);
        assert_eq!(out[t.index_of(&[0, 1]).unwrap() as usize], 1.0);
        assert_eq!(out[t.index_of(&[1, 1]).unwrap() as usize], 1.0);
        assert_eq!(out[t.index_of(&[2, 0]).unwrap() as usize], 0.0);
    }

    #[test]
    fn division_inverts_multiplication() {
        let t = JetTable::new(3, 4);
        let prog = MulProgram::build(&t, VarOffset::Identity, &t, VarOffset::Identity, &t);
        // f arbitrary, g with nonzero constant term
        let mut f = vec![0.0; t.len()];
        let mut g = vec![0.0; t.len()];
        for i in 0..t.len() {
            f[i] = (i as f64 * 0.37).sin();
            g[i] = 0.1 * (i as f64 * 1.3).cos();
        }
        g[0] = 2.0;
        let mut q = vec![0.0; t.len()];
        prog.divide(&f, &g, &mut q);
        let mut back = vec![0.0; t.len()];
        prog.apply(&q, &g, &mut back);
        for i in 0..t.len() {
            assert!((back[i] - f[i]).abs() < 1e-12, "mismatch at {i}");
        }
    }

    #[test]
    fn separable_product_matches_embedded_product() {
        let ts = TableSet::new(2, 3);
        let mut a = vec![0.0; ts.tz.len()];
        let mut b = vec![0.0; ts.tv.len()];
        for i in 0..a.len() {
            a[i] = (i as f64).cos();
        }
        for i in 0..b.len() {
            b[i] = (i as f64 * 0.7).sin();
        }
        let mut fast = vec![0.0; ts.tf.len()];
        ts.zv.apply(&a, &b, &mut fast);

        let mut ea = vec![0.0; ts.tf.len()];
        let mut eb = vec![0.0; ts.tf.len()];
        ts.embed_z.apply(&a, &mut ea);
        ts.embed_v.apply(&b, &mut eb);
        let mut slow = vec![0.0; ts.tf.len()];
        ts.ff.apply(&ea, &eb, &mut slow);
        for i in 0..fast.len() {
            assert!((fast[i] - slow[i]).abs() < 1e-13);
        }
    }
}
