//! Pointwise connection data of a complex Finsler metric.
//!
//! From one jet expansion at (z, v) this module assembles the Levi matrix,
//! the nonlinear connection N, the Chern-Finsler coefficients Γ and C, the
//! horizontal torsion θ with its trace ϑ, and the δ̄-derivatives needed by
//! the curvature and fiber-average kernels. δ̄ of a derived quantity is
//! computed by composing jet partials through the chain rule (through the
//! inverse Levi matrix and N), so a single expansion per node supplies
//! every term.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{JetEvaluator, JetWorkspace};
use crate::jets::{JetContext, JetTable, WirtingerJet};
use crate::linalg::CMat;
use crate::metric::FinslerMetricSpec;
use crate::C64;

#[inline]
pub fn idx2(n: usize, i: usize, j: usize) -> usize {
    i * n + j
}

#[inline]
pub fn idx3(n: usize, i: usize, j: usize, k: usize) -> usize {
    (i * n + j) * n + k
}

#[inline]
pub fn idx4(n: usize, i: usize, j: usize, k: usize, l: usize) -> usize {
    ((i * n + j) * n + k) * n + l
}

/// Precomputed lattice indices for every jet entry the assembly reads.
/// Patterns are named by the derivative applied to G; "levi" is ∂̇_i ∂̇_j̄ G.
#[derive(Debug)]
pub struct GeomIds {
    pub n: usize,
    pub order: usize,
    pub dv: Vec<u32>,
    pub dz: Vec<u32>,
    pub dzbar: Vec<u32>,
    pub dzdzbar: Vec<u32>,
    pub dzdvbar: Vec<u32>,
    pub levi: Vec<u32>,
    pub dzlevi: Vec<u32>,
    pub dzbarlevi: Vec<u32>,
    pub dvlevi: Vec<u32>,
    pub dvbarlevi: Vec<u32>,
    pub dzdzbarlevi: Vec<u32>,
    pub dzdvbarlevi: Vec<u32>,
    pub dzbardvlevi: Vec<u32>,
    pub dvdvbarlevi: Vec<u32>,
    pub dzdzbardvbar: Vec<u32>,
    pub dzdvbar2: Vec<u32>,
    pub dzdvlevi: Vec<u32>,
    pub dv2levi: Vec<u32>,
}

fn lookup(table: &JetTable, n: usize, zs: &[usize], zbars: &[usize], vs: &[usize], vbars: &[usize]) -> u32 {
    let mut e = vec![0u8; 4 * n];
    for &i in zs {
        e[2 * i] += 1;
    }
    for &i in zbars {
        e[2 * i + 1] += 1;
    }
    for &i in vs {
        e[2 * n + 2 * i] += 1;
    }
    for &i in vbars {
        e[2 * n + 2 * i + 1] += 1;
    }
    table.index_of(&e).expect("pattern within lattice order")
}

impl GeomIds {
    /// Requires a context of order ≥ 4 (the δ̄-composition reads mixed
    /// fourth derivatives). Lower-order contexts can still use the basic
    /// and Kobayashi entries; see [`GeomIds::basic_only`].
    pub fn new(ctx: &JetContext) -> Self {
        Self::build(ctx, ctx.order)
    }

    /// Entries available at order 2 (Levi, first z-derivatives, Kobayashi).
    pub fn basic_only(ctx: &JetContext) -> Self {
        Self::build(ctx, ctx.order.min(2))
    }

    fn build(ctx: &JetContext, avail: usize) -> Self {
        let n = ctx.n;
        let t = &ctx.lattice;
        let lk = |zs: &[usize], zbars: &[usize], vs: &[usize], vbars: &[usize]| -> u32 {
            lookup(t, n, zs, zbars, vs, vbars)
        };
        let mut ids = GeomIds {
            n,
            order: avail,
            dv: vec![0; n],
            dz: vec![0; n],
            dzbar: vec![0; n],
            dzdzbar: vec![0; n * n],
            dzdvbar: vec![0; n * n],
            levi: vec![0; n * n],
            dzlevi: vec![0; n * n * n],
            dzbarlevi: vec![0; n * n * n],
            dvlevi: vec![0; n * n * n],
            dvbarlevi: vec![0; n * n * n],
            dzdzbarlevi: vec![0; n * n * n * n],
            dzdvbarlevi: vec![0; n * n * n * n],
            dzbardvlevi: vec![0; n * n * n * n],
            dvdvbarlevi: vec![0; n * n * n * n],
            dzdzbardvbar: vec![0; n * n * n],
            dzdvbar2: vec![0; n * n * n],
            dzdvlevi: vec![0; n * n * n * n],
            dv2levi: vec![0; n * n * n * n],
        };
        for i in 0..n {
            ids.dv[i] = lk(&[], &[], &[i], &[]);
            ids.dz[i] = lk(&[i], &[], &[], &[]);
            ids.dzbar[i] = lk(&[], &[i], &[], &[]);
            for j in 0..n {
                ids.dzdzbar[idx2(n, i, j)] = lk(&[i], &[j], &[], &[]);
                ids.dzdvbar[idx2(n, i, j)] = lk(&[i], &[], &[], &[j]);
                ids.levi[idx2(n, i, j)] = lk(&[], &[], &[i], &[j]);
            }
        }
        if avail >= 3 {
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        ids.dzlevi[idx3(n, k, i, j)] = lk(&[k], &[], &[i], &[j]);
                        ids.dzbarlevi[idx3(n, k, i, j)] = lk(&[], &[k], &[i], &[j]);
                        ids.dvlevi[idx3(n, k, i, j)] = lk(&[], &[], &[k, i], &[j]);
                        ids.dvbarlevi[idx3(n, k, i, j)] = lk(&[], &[], &[i], &[k, j]);
                        ids.dzdzbardvbar[idx3(n, k, i, j)] = lk(&[k], &[i], &[], &[j]);
                        ids.dzdvbar2[idx3(n, k, i, j)] = lk(&[k], &[], &[], &[i, j]);
                    }
                }
            }
        }
        if avail >= 4 {
            for k in 0..n {
                for m in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            ids.dzdzbarlevi[idx4(n, k, m, i, j)] = lk(&[k], &[m], &[i], &[j]);
                            ids.dzdvbarlevi[idx4(n, k, m, i, j)] = lk(&[k], &[], &[i], &[m, j]);
                            ids.dzbardvlevi[idx4(n, k, m, i, j)] = lk(&[], &[k], &[m, i], &[j]);
                            ids.dvdvbarlevi[idx4(n, k, m, i, j)] = lk(&[], &[], &[k, i], &[m, j]);
                            ids.dzdvlevi[idx4(n, k, m, i, j)] = lk(&[k], &[], &[m, i], &[j]);
                            ids.dv2levi[idx4(n, k, m, i, j)] = lk(&[], &[], &[k, m, i], &[j]);
                        }
                    }
                }
            }
        }
        ids
    }
}

/// Preallocated assembly output; reused across nodes in sweeps.
#[derive(Debug, Clone)]
pub struct GeomBuf {
    pub n: usize,
    pub g: f64,
    /// L[i][j] = G_{ij̄}
    pub levi: Vec<C64>,
    /// M = L⁻¹ as a matrix; the inverse metric tensor is G^{ij̄} = M[j][i].
    pub inv: Vec<C64>,
    pub det: f64,
    /// N[i][j] = N^i_j
    pub nconn: Vec<C64>,
    /// δ_k G_{jl̄} at [k][j][l]
    pub delta_levi: Vec<C64>,
    /// Γ^i_{j,k} at [i][j][k]
    pub gamma: Vec<C64>,
    /// C^i_{jk} at [i][j][k]
    pub ctensor: Vec<C64>,
    /// θ^i_{jk} = Γ^i_{k,j} − Γ^i_{j,k} at [i][j][k]
    pub theta: Vec<C64>,
    /// ϑ_k = θ^m_{km}
    pub vartheta: Vec<C64>,
    /// ϑ_{i,j̄} = δ_j̄ ϑ_i at [i][j]
    pub vartheta_zbar: Vec<C64>,
    /// δ_m̄ N^s_k at [m][s][k]
    pub dbar_n: Vec<C64>,
    /// δ_m̄ Γ^i_{j,k} at [m][i][j][k]
    pub dbar_gamma: Vec<C64>,
    /// ∂̇_t Γ^i_{j,k} at [t][i][j][k]
    pub dv_gamma: Vec<C64>,
    /// ∂̇_t ϑ_i at [t][i]
    pub dv_vartheta: Vec<C64>,
    /// Kobayashi matrix K_{ij̄} at [i][j]
    pub kob: Vec<C64>,
    sa: Vec<C64>,
    sb: Vec<C64>,
}

impl GeomBuf {
    pub fn new(n: usize) -> Self {
        let z = C64::new(0.0, 0.0);
        Self {
            n,
            g: 0.0,
            levi: vec![z; n * n],
            inv: vec![z; n * n],
            det: 0.0,
            nconn: vec![z; n * n],
            delta_levi: vec![z; n * n * n],
            gamma: vec![z; n * n * n],
            ctensor: vec![z; n * n * n],
            theta: vec![z; n * n * n],
            vartheta: vec![z; n],
            vartheta_zbar: vec![z; n * n],
            dbar_n: vec![z; n * n * n],
            dbar_gamma: vec![z; n * n * n * n],
            dv_gamma: vec![z; n * n * n * n],
            dv_vartheta: vec![z; n * n],
            kob: vec![z; n * n],
            sa: vec![z; n * n],
            sb: vec![z; n * n],
        }
    }

    /// Inverse metric tensor entry G^{ij̄}.
    #[inline]
    pub fn upper(&self, i: usize, j: usize) -> C64 {
        self.inv[idx2(self.n, j, i)]
    }
}

/// G, Levi matrix, inverse and determinant. Order ≥ 2.
pub fn assemble_basic(e: &[C64], ids: &GeomIds, buf: &mut GeomBuf) -> Result<()> {
    let n = ids.n;
    buf.g = e[0].re;
    if !(buf.g > 0.0) {
        return Err(Error::Geometry {
            what: format!("metric value {}", buf.g),
            index: 0,
        });
    }
    for i in 0..n {
        for j in 0..n {
            buf.levi[idx2(n, i, j)] = e[ids.levi[idx2(n, i, j)] as usize];
        }
    }
    invert_into(n, &buf.levi, &mut buf.inv, &mut buf.sa, &mut buf.sb).map(|det| {
        buf.det = det;
    })
}

/// In-place Gauss-Jordan with partial pivoting; returns the (real) det of a
/// Hermitian input. Scratch buffers avoid per-node allocation.
fn invert_into(
    n: usize,
    m: &[C64],
    inv: &mut [C64],
    work: &mut [C64],
    _unused: &mut [C64],
) -> Result<f64> {
    work.copy_from_slice(m);
    inv.fill(C64::new(0.0, 0.0));
    for i in 0..n {
        inv[idx2(n, i, i)] = C64::new(1.0, 0.0);
    }
    let mut det = C64::new(1.0, 0.0);
    for col in 0..n {
        let mut piv = col;
        let mut best = work[idx2(n, col, col)].norm();
        for r in (col + 1)..n {
            let mag = work[idx2(n, r, col)].norm();
            if mag > best {
                best = mag;
                piv = r;
            }
        }
        if best < 1e-300 {
            return Err(Error::Geometry {
                what: "Levi matrix (singular)".into(),
                index: 0,
            });
        }
        if piv != col {
            for c in 0..n {
                work.swap(idx2(n, piv, c), idx2(n, col, c));
                inv.swap(idx2(n, piv, c), idx2(n, col, c));
            }
            det = -det;
        }
        let d = work[idx2(n, col, col)];
        det *= d;
        let dinv = C64::new(1.0, 0.0) / d;
        for c in 0..n {
            work[idx2(n, col, c)] *= dinv;
            inv[idx2(n, col, c)] *= dinv;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = work[idx2(n, r, col)];
            if f.norm() == 0.0 {
                continue;
            }
            for c in 0..n {
                let s = work[idx2(n, col, c)];
                work[idx2(n, r, c)] -= f * s;
                let s = inv[idx2(n, col, c)];
                inv[idx2(n, r, c)] -= f * s;
            }
        }
    }
    Ok(det.re)
}

/// N, Γ, C, θ, ϑ. Order ≥ 3; `assemble_basic` must have run.
pub fn assemble_connection(e: &[C64], ids: &GeomIds, buf: &mut GeomBuf) {
    let n = ids.n;
    // N^i_j = G^{ib̄} ∂̇_b̄ ∂_j G = Σ_b M[b][i] E[z_j v̄_b]
    for i in 0..n {
        for j in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for b in 0..n {
                acc += buf.inv[idx2(n, b, i)] * e[ids.dzdvbar[idx2(n, j, b)] as usize];
            }
            buf.nconn[idx2(n, i, j)] = acc;
        }
    }
    // δ_k G_{jl̄} = ∂_k G_{jl̄} − N^s_k ∂̇_s G_{jl̄}
    for k in 0..n {
        for j in 0..n {
            for l in 0..n {
                let mut acc = e[ids.dzlevi[idx3(n, k, j, l)] as usize];
                for s in 0..n {
                    acc -= buf.nconn[idx2(n, s, k)] * e[ids.dvlevi[idx3(n, s, j, l)] as usize];
                }
                buf.delta_levi[idx3(n, k, j, l)] = acc;
            }
        }
    }
    // Γ^i_{j,k} = G^{l̄i} δ_k G_{jl̄};  C^i_{jk} = G^{l̄i} ∂̇_k G_{jl̄}
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut gam = C64::new(0.0, 0.0);
                let mut c = C64::new(0.0, 0.0);
                for l in 0..n {
                    let m_li = buf.inv[idx2(n, l, i)];
                    gam += m_li * buf.delta_levi[idx3(n, k, j, l)];
                    c += m_li * e[ids.dvlevi[idx3(n, k, j, l)] as usize];
                }
                buf.gamma[idx3(n, i, j, k)] = gam;
                buf.ctensor[idx3(n, i, j, k)] = c;
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                buf.theta[idx3(n, i, j, k)] =
                    buf.gamma[idx3(n, i, k, j)] - buf.gamma[idx3(n, i, j, k)];
            }
        }
    }
    for k in 0..n {
        let mut acc = C64::new(0.0, 0.0);
        for m in 0..n {
            acc += buf.theta[idx3(n, m, k, m)];
        }
        buf.vartheta[k] = acc;
    }
}

/// δ_m̄ of N and Γ by chain rule, then ϑ_{i,j̄}. Order ≥ 4.
pub fn assemble_dbar(e: &[C64], ids: &GeomIds, buf: &mut GeomBuf) {
    let n = ids.n;
    for m in 0..n {
        // conj(N^t_m) coefficients of the ∂̇-part of δ_m̄
        for t in 0..n {
            buf.sa[t] = buf.nconn[idx2(n, t, m)].conj();
        }
        // X(L)[a][b] = δ_m̄ G_{ab̄}
        for a in 0..n {
            for b in 0..n {
                let mut acc = e[ids.dzbarlevi[idx3(n, m, a, b)] as usize];
                for t in 0..n {
                    acc -= buf.sa[t] * e[ids.dvbarlevi[idx3(n, t, a, b)] as usize];
                }
                buf.sb[idx2(n, a, b)] = acc;
            }
        }
        // X(M) = −M · X(L) · M, stored temporarily in dbar_n scratch rows.
        let mut xm = vec![C64::new(0.0, 0.0); n * n];
        for l in 0..n {
            for i in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for a in 0..n {
                    for b in 0..n {
                        acc -= buf.inv[idx2(n, l, a)] * buf.sb[idx2(n, a, b)] * buf.inv[idx2(n, b, i)];
                    }
                }
                xm[idx2(n, l, i)] = acc;
            }
        }
        // X(N^s_k)
        for s in 0..n {
            for k in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for b in 0..n {
                    let base = e[ids.dzdvbar[idx2(n, k, b)] as usize];
                    let mut de = e[ids.dzdzbardvbar[idx3(n, k, m, b)] as usize];
                    for t in 0..n {
                        de -= buf.sa[t] * e[ids.dzdvbar2[idx3(n, k, b, t)] as usize];
                    }
                    acc += xm[idx2(n, b, s)] * base + buf.inv[idx2(n, b, s)] * de;
                }
                buf.dbar_n[idx3(n, m, s, k)] = acc;
            }
        }
        // X(Γ^i_{j,k})
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    // X(δ_k G_{jl̄}) accumulated per l
                    let mut acc = C64::new(0.0, 0.0);
                    for l in 0..n {
                        let mut xdl = e[ids.dzdzbarlevi[idx4(n, k, m, j, l)] as usize];
                        for t in 0..n {
                            xdl -= buf.sa[t] * e[ids.dzdvbarlevi[idx4(n, k, t, j, l)] as usize];
                        }
                        for s in 0..n {
                            let mut xdv = e[ids.dzbardvlevi[idx4(n, m, s, j, l)] as usize];
                            for t in 0..n {
                                xdv -= buf.sa[t] * e[ids.dvdvbarlevi[idx4(n, s, t, j, l)] as usize];
                            }
                            xdl -= buf.dbar_n[idx3(n, m, s, k)] * e[ids.dvlevi[idx3(n, s, j, l)] as usize]
                                + buf.nconn[idx2(n, s, k)] * xdv;
                        }
                        acc += xm[idx2(n, l, i)] * buf.delta_levi[idx3(n, k, j, l)]
                            + buf.inv[idx2(n, l, i)] * xdl;
                    }
                    buf.dbar_gamma[idx4(n, m, i, j, k)] = acc;
                }
            }
        }
    }
    // ϑ_{i,j̄} = Σ_m (δ_j̄ Γ^m_{m,i} − δ_j̄ Γ^m_{i,m})
    for i in 0..n {
        for j in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for m in 0..n {
                acc += buf.dbar_gamma[idx4(n, j, m, m, i)] - buf.dbar_gamma[idx4(n, j, m, i, m)];
            }
            buf.vartheta_zbar[idx2(n, i, j)] = acc;
        }
    }
}

/// ∂̇_t of Γ and ϑ (vertical dependence of the torsion trace). Order ≥ 4.
pub fn assemble_dv_gamma(e: &[C64], ids: &GeomIds, buf: &mut GeomBuf) {
    let n = ids.n;
    for t in 0..n {
        // Y(L)[a][b] = ∂̇_t G_{ab̄}
        for a in 0..n {
            for b in 0..n {
                buf.sb[idx2(n, a, b)] = e[ids.dvlevi[idx3(n, t, a, b)] as usize];
            }
        }
        let mut ym = vec![C64::new(0.0, 0.0); n * n];
        for l in 0..n {
            for i in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for a in 0..n {
                    for b in 0..n {
                        acc -= buf.inv[idx2(n, l, a)] * buf.sb[idx2(n, a, b)] * buf.inv[idx2(n, b, i)];
                    }
                }
                ym[idx2(n, l, i)] = acc;
            }
        }
        let mut yn = vec![C64::new(0.0, 0.0); n * n];
        for s in 0..n {
            for k in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for b in 0..n {
                    acc += ym[idx2(n, b, s)] * e[ids.dzdvbar[idx2(n, k, b)] as usize]
                        + buf.inv[idx2(n, b, s)] * e[ids.dzlevi[idx3(n, k, t, b)] as usize];
                }
                yn[idx2(n, s, k)] = acc;
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut acc = C64::new(0.0, 0.0);
                    for l in 0..n {
                        let mut ydl = e[ids.dzdvlevi[idx4(n, k, t, j, l)] as usize];
                        for s in 0..n {
                            ydl -= yn[idx2(n, s, k)] * e[ids.dvlevi[idx3(n, s, j, l)] as usize]
                                + buf.nconn[idx2(n, s, k)]
                                    * e[ids.dv2levi[idx4(n, t, s, j, l)] as usize];
                        }
                        acc += ym[idx2(n, l, i)] * buf.delta_levi[idx3(n, k, j, l)]
                            + buf.inv[idx2(n, l, i)] * ydl;
                    }
                    buf.dv_gamma[idx4(n, t, i, j, k)] = acc;
                }
            }
        }
        for i in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for m in 0..n {
                acc += buf.dv_gamma[idx4(n, t, m, m, i)] - buf.dv_gamma[idx4(n, t, m, i, m)];
            }
            buf.dv_vartheta[idx2(n, t, i)] = acc;
        }
    }
}

/// Kobayashi curvature matrix K_{ij̄} = −∂_i∂_j̄ G + G^{km̄}(∂_i ∂̇_m̄ G)(∂_j̄ ∂̇_k G).
pub fn assemble_kobayashi(e: &[C64], ids: &GeomIds, buf: &mut GeomBuf) {
    let n = ids.n;
    for i in 0..n {
        for j in 0..n {
            let mut acc = -e[ids.dzdzbar[idx2(n, i, j)] as usize];
            for k in 0..n {
                for m in 0..n {
                    acc += buf.inv[idx2(n, m, k)]
                        * e[ids.dzdvbar[idx2(n, i, m)] as usize]
                        * e[ids.dzdvbar[idx2(n, j, k)] as usize].conj();
                }
            }
            buf.kob[idx2(n, i, j)] = acc;
        }
    }
}

/// All pointwise tensors at (z, v).
#[derive(Debug, Clone)]
pub struct GeometrySample {
    pub n: usize,
    pub z: Vec<C64>,
    pub v: Vec<C64>,
    pub g: f64,
    pub levi: CMat,
    pub levi_inv: CMat,
    pub levi_det: f64,
    /// N^i_j at (i, j).
    pub nonlinear: CMat,
    /// Γ^i_{j,k} at [i][j][k] (flattened).
    pub gamma: Vec<C64>,
    /// C^i_{jk} at [i][j][k].
    pub c_tensor: Vec<C64>,
    /// θ^i_{jk} at [i][j][k].
    pub theta: Vec<C64>,
    /// ϑ_k.
    pub vartheta: Vec<C64>,
    /// ϑ_{i,j̄} at (i, j).
    pub vartheta_zbar: CMat,
}

impl GeometrySample {
    pub fn gamma_at(&self, i: usize, j: usize, k: usize) -> C64 {
        self.gamma[idx3(self.n, i, j, k)]
    }

    pub fn c_at(&self, i: usize, j: usize, k: usize) -> C64 {
        self.c_tensor[idx3(self.n, i, j, k)]
    }

    pub fn theta_at(&self, i: usize, j: usize, k: usize) -> C64 {
        self.theta[idx3(self.n, i, j, k)]
    }

    /// Inverse metric tensor entry G^{ij̄}.
    pub fn upper(&self, i: usize, j: usize) -> C64 {
        self.levi_inv[(j, i)]
    }
}

/// Reusable engine: compiled metric + jet machinery + index tables.
pub struct GeometryEngine {
    pub ctx: Arc<JetContext>,
    pub spec: FinslerMetricSpec,
    ev: JetEvaluator,
    pub ids: GeomIds,
}

pub struct EngineWorkspace {
    pub jet_ws: JetWorkspace,
    pub entries: Vec<C64>,
    pub buf: GeomBuf,
}

impl GeometryEngine {
    pub fn new(spec: &FinslerMetricSpec, order: usize) -> Result<Self> {
        let ctx = JetContext::shared(spec.dims, order);
        let ev = spec.evaluator(ctx.clone())?;
        let ids = if order >= 4 {
            GeomIds::new(&ctx)
        } else {
            GeomIds::basic_only(&ctx)
        };
        Ok(Self {
            ctx,
            spec: spec.clone(),
            ev,
            ids,
        })
    }

    pub fn workspace(&self) -> EngineWorkspace {
        EngineWorkspace {
            jet_ws: self.ev.make_workspace(),
            entries: vec![C64::new(0.0, 0.0); self.ctx.lattice.len()],
            buf: GeomBuf::new(self.ctx.n),
        }
    }

    /// Expand the metric jet at (z, v) and convert the geometry entry set.
    pub fn expand(
        &self,
        ws: &mut EngineWorkspace,
        z: &[C64],
        v: &[C64],
        grid_idx: Option<usize>,
    ) -> Result<()> {
        if v.iter().map(|c| c.norm_sqr()).sum::<f64>() == 0.0 {
            return Err(Error::Domain);
        }
        self.ev.eval(&mut ws.jet_ws, z, v, grid_idx)?;
        let poly = self.ev.result_real(&ws.jet_ws);
        let full = self.ctx.promote_real(&poly);
        self.ctx.conv_geom.apply_real(&full, &mut ws.entries);
        Ok(())
    }

    /// Full Wirtinger jet (all lattice entries), for the public jet API.
    pub fn expand_full_jet(
        &self,
        ws: &mut EngineWorkspace,
        z: &[C64],
        v: &[C64],
        grid_idx: Option<usize>,
    ) -> Result<WirtingerJet> {
        if v.iter().map(|c| c.norm_sqr()).sum::<f64>() == 0.0 {
            return Err(Error::Domain);
        }
        self.ev.eval(&mut ws.jet_ws, z, v, grid_idx)?;
        let poly = self.ev.result_real(&ws.jet_ws);
        Ok(WirtingerJet::from_real(&self.ctx, &poly))
    }

    /// Geometry through the connection level (N, Γ, C, θ, ϑ).
    pub fn geometry_into(
        &self,
        ws: &mut EngineWorkspace,
        z: &[C64],
        v: &[C64],
        grid_idx: Option<usize>,
    ) -> Result<()> {
        self.expand(ws, z, v, grid_idx)?;
        let EngineWorkspace { entries, buf, .. } = ws;
        assemble_basic(entries, &self.ids, buf)?;
        assemble_connection(entries, &self.ids, buf);
        Ok(())
    }

    pub fn sample(&self, z: &[C64], v: &[C64]) -> Result<GeometrySample> {
        let mut ws = self.workspace();
        self.geometry_into(&mut ws, z, v, None)?;
        assemble_dbar(&ws.entries, &self.ids, &mut ws.buf);
        let n = self.ctx.n;
        let b = &ws.buf;
        Ok(GeometrySample {
            n,
            z: z.to_vec(),
            v: v.to_vec(),
            g: b.g,
            levi: CMat {
                n,
                data: b.levi.clone(),
            },
            levi_inv: CMat {
                n,
                data: b.inv.clone(),
            },
            levi_det: b.det,
            nonlinear: CMat {
                n,
                data: b.nconn.clone(),
            },
            gamma: b.gamma.clone(),
            c_tensor: b.ctensor.clone(),
            theta: b.theta.clone(),
            vartheta: b.vartheta.clone(),
            vartheta_zbar: CMat {
                n,
                data: b.vartheta_zbar.clone(),
            },
        })
    }
}

/// Convenience wrapper: all pointwise tensors at (z, v) with a fresh engine.
pub fn geometry_at(spec: &FinslerMetricSpec, z: &[C64], v: &[C64]) -> Result<GeometrySample> {
    GeometryEngine::new(spec, 4)?.sample(z, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn flat_metric_connection_vanishes() {
        let spec = FinslerMetricSpec::flat(2);
        let s = geometry_at(&spec, &[c(0.3, 0.1), c(0.0, 0.2)], &[c(1.0, 0.0), c(0.5, -0.5)])
            .unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!(s.nonlinear[(i, j)].norm() < 1e-14);
                assert!(s.vartheta_zbar[(i, j)].norm() < 1e-12);
                for k in 0..2 {
                    assert!(s.gamma_at(i, j, k).norm() < 1e-14);
                    assert!(s.theta_at(i, j, k).norm() < 1e-14);
                }
            }
        }
        // C^i_{jk} v^j = 0 (flat metric is Hermitian so C vanishes entirely)
        for i in 0..2 {
            for k in 0..2 {
                let mut acc = c(0.0, 0.0);
                for j in 0..2 {
                    acc += s.c_at(i, j, k) * s.v[j];
                }
                assert!(acc.norm() < 1e-14);
            }
        }
        assert!(s.vartheta.iter().all(|t| t.norm() < 1e-14));
    }

    #[test]
    fn conformal_flat_connection_matches_closed_form() {
        // For e^f G0: Γ^i_{k,j} = f_j δ^i_k and N^i_j = f_j v^i.
        let f = expr::parse("0.2*sin(2*pi*x1)").unwrap();
        let spec = FinslerMetricSpec::flat(2).conformal(f);
        let z = [c(0.17, 0.0), c(0.0, 0.0)];
        let v = [c(0.8, 0.3), c(-0.2, 0.6)];
        let s = geometry_at(&spec, &z, &v).unwrap();
        // f_j = ∂_{z_j} f; for f(x1): f_1 = ½ · 0.2 · 2π cos(2π x1), f_2 = 0
        let fp = 0.5 * 0.2 * 2.0 * std::f64::consts::PI * (2.0 * std::f64::consts::PI * 0.17).cos();
        let fj = [c(fp, 0.0), c(0.0, 0.0)];
        for i in 0..2 {
            for k in 0..2 {
                for j in 0..2 {
                    let expect = if i == k { fj[j] } else { c(0.0, 0.0) };
                    let got = s.gamma_at(i, k, j);
                    assert!((got - expect).norm() < 1e-11, "gamma[{i}][{k}][{j}]");
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                let expect = fj[j] * v[i];
                assert!((s.nonlinear[(i, j)] - expect).norm() < 1e-11);
            }
        }
        // Torsion is antisymmetric by construction.
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    let a = s.theta_at(i, j, k);
                    let b = -s.theta_at(i, k, j);
                    assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn euler_identities_hold() {
        let a = expr::parse("exp(0.1*sin(2*pi*x1))").unwrap();
        let spec = FinslerMetricSpec::z_twisted(a, Expr::Const(1.0), Expr::Const(1.0), 0.05);
        use crate::expr::Expr;
        let z = [c(0.3, 0.7), c(0.1, 0.4)];
        let v = [c(0.9, -0.2), c(0.4, 0.8)];
        let s = geometry_at(&spec, &z, &v).unwrap();
        // G_{ij̄} v^i v̄^j = G
        let mut acc = c(0.0, 0.0);
        for i in 0..2 {
            for j in 0..2 {
                acc += s.levi[(i, j)] * v[i] * v[j].conj();
            }
        }
        assert_relative_eq!(acc.re, s.g, max_relative = 1e-10);
        assert!(acc.im.abs() < 1e-12);
        // v^j Γ^i_{j,k} = N^i_k
        for i in 0..2 {
            for k in 0..2 {
                let mut acc = c(0.0, 0.0);
                for j in 0..2 {
                    acc += v[j] * s.gamma_at(i, j, k);
                }
                assert!((acc - s.nonlinear[(i, k)]).norm() < 1e-9);
            }
        }
        // Levi · inverse = identity
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = c(0.0, 0.0);
                for k in 0..2 {
                    acc += s.levi[(i, k)] * s.levi_inv[(k, j)];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((acc - c(expect, 0.0)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn euler_vertical_identity() {
        // v^m ∂̇_m G_{ij̄} = 0 by homogeneity.
        let spec = FinslerMetricSpec::quartic(2, 0.1);
        let engine = GeometryEngine::new(&spec, 4).unwrap();
        let mut ws = engine.workspace();
        let z = [c(0.0, 0.0), c(0.0, 0.0)];
        let v = [c(1.0, 0.3), c(-0.4, 0.2)];
        engine.expand(&mut ws, &z, &v, None).unwrap();
        let ids = &engine.ids;
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = c(0.0, 0.0);
                for m in 0..2 {
                    acc += v[m] * ws.entries[ids.dvlevi[idx3(2, m, i, j)] as usize];
                }
                assert!(acc.norm() < 1e-12, "contraction [{i}][{j}] = {acc}");
            }
        }
    }

    #[test]
    fn domain_error_at_zero_vector() {
        let spec = FinslerMetricSpec::flat(2);
        let r = geometry_at(&spec, &[c(0.0, 0.0), c(0.0, 0.0)], &[c(0.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(r, Err(Error::Domain)));
    }
}
