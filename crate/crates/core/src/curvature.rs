//! Kobayashi curvature, holomorphic (Ricci) curvature, the hh̄-curvature
//! tensor, and the conformal transformation laws.

use crate::error::Result;
use crate::expr::{Expr, JetEvaluator};
#[cfg(test)]
use crate::expr;
use crate::geometry::{idx2, idx3, idx4, GeometryEngine};
use crate::jets::{JetContext, WirtingerIndex, WirtingerJet};
use crate::linalg::CMat;
use crate::metric::{sample_points, FinslerMetricSpec};
use crate::C64;

#[derive(Debug, Clone)]
pub struct CurvatureSample {
    /// K_{ij̄} at (i, j).
    pub k_matrix: CMat,
    /// K(z, v) = K_{ij̄} v^i v̄^j / G².
    pub k_hol: f64,
    /// Ric(z, v) = G^{ij̄} K_{ij̄} / G.
    pub ric: f64,
    /// R^i_{j,km̄} at [i][j][k][m], populated on demand.
    pub r_hh: Option<Vec<C64>>,
}

/// K_{ij̄} from the order-2 jet.
pub fn kobayashi_matrix(spec: &FinslerMetricSpec, z: &[C64], v: &[C64]) -> Result<CMat> {
    let engine = GeometryEngine::new(spec, 2)?;
    let mut ws = engine.workspace();
    engine.expand(&mut ws, z, v, None)?;
    crate::geometry::assemble_basic(&ws.entries, &engine.ids, &mut ws.buf)?;
    crate::geometry::assemble_kobayashi(&ws.entries, &engine.ids, &mut ws.buf);
    Ok(CMat {
        n: spec.dims,
        data: ws.buf.kob.clone(),
    })
}

pub fn holomorphic_curvature(spec: &FinslerMetricSpec, z: &[C64], v: &[C64]) -> Result<f64> {
    let s = curvature_at(spec, z, v, false)?;
    Ok(s.k_hol)
}

pub fn ricci(spec: &FinslerMetricSpec, z: &[C64], v: &[C64]) -> Result<f64> {
    let s = curvature_at(spec, z, v, false)?;
    Ok(s.ric)
}

pub fn curvature_at(
    spec: &FinslerMetricSpec,
    z: &[C64],
    v: &[C64],
    with_hh: bool,
) -> Result<CurvatureSample> {
    let n = spec.dims;
    let engine = GeometryEngine::new(spec, if with_hh { 5 } else { 2 })?;
    let mut ws = engine.workspace();
    engine.expand(&mut ws, z, v, None)?;
    crate::geometry::assemble_basic(&ws.entries, &engine.ids, &mut ws.buf)?;
    crate::geometry::assemble_kobayashi(&ws.entries, &engine.ids, &mut ws.buf);
    let buf = &mut ws.buf;
    let k_hol = k_hol_from(n, &buf.kob, buf.g, v);
    let ric = ric_from(n, &buf.inv, &buf.kob, buf.g);
    let r_hh = if with_hh {
        crate::geometry::assemble_connection(&ws.entries, &engine.ids, buf);
        crate::geometry::assemble_dbar(&ws.entries, &engine.ids, buf);
        let mut r = vec![C64::new(0.0, 0.0); n * n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for m in 0..n {
                        let mut acc = -buf.dbar_gamma[idx4(n, m, i, j, k)];
                        for s in 0..n {
                            acc -= buf.ctensor[idx3(n, i, j, s)] * buf.dbar_n[idx3(n, m, s, k)];
                        }
                        r[idx4(n, i, j, k, m)] = acc;
                    }
                }
            }
        }
        Some(r)
    } else {
        None
    };
    Ok(CurvatureSample {
        k_matrix: CMat {
            n,
            data: buf.kob.clone(),
        },
        k_hol,
        ric,
        r_hh,
    })
}

/// K(z,v) given the Kobayashi matrix, the metric value, and v.
pub fn k_hol_from(n: usize, kob: &[C64], g: f64, v: &[C64]) -> f64 {
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += kob[idx2(n, i, j)] * v[i] * v[j].conj();
        }
    }
    acc.re / (g * g)
}

/// Ric(z,v) = trace(L⁻¹ K)/G.
pub fn ric_from(n: usize, inv: &[C64], kob: &[C64], g: f64) -> f64 {
    let mut tr = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            tr += inv[idx2(n, i, j)] * kob[idx2(n, j, i)];
        }
    }
    tr.re / g
}

/// hh̄-curvature tensor R^i_{j,km̄}.
pub fn hh_curvature(spec: &FinslerMetricSpec, z: &[C64], v: &[C64]) -> Result<Vec<C64>> {
    Ok(curvature_at(spec, z, v, true)?.r_hh.unwrap())
}

#[derive(Debug, Clone)]
pub struct ConformalCheckReport {
    /// max |K̂_{ij̄} − e^f (K_{ij̄} − f_{ij̄} G)|
    pub max_k_matrix_residual: f64,
    /// max |K̂ − e^{−f} (K − f_{ij̄} v^i v̄^j / G)|
    pub max_k_hol_residual: f64,
    /// max |R̂ic − e^{−f} (Ric − G^{ij̄} f_{ij̄})|
    pub max_ric_residual: f64,
    pub samples: usize,
}

/// Verify the conformal curvature laws against direct evaluation of e^f G.
pub fn conformal_curvature_check(
    spec: &FinslerMetricSpec,
    f: &Expr,
    sample_count: usize,
    seed: u64,
) -> Result<ConformalCheckReport> {
    let n = spec.dims;
    let hat = spec.clone().conformal(f.clone());
    let base_engine = GeometryEngine::new(spec, 2)?;
    let hat_engine = GeometryEngine::new(&hat, 2)?;
    let mut bws = base_engine.workspace();
    let mut hws = hat_engine.workspace();

    // f-jet machinery: f is a base function so its Hessian comes from the
    // same jet arithmetic at order 2.
    let fctx = JetContext::shared(n, 2);
    let fev = JetEvaluator::new(fctx.clone(), f, vec![])?;
    let mut fws = fev.make_workspace();

    let mut rep = ConformalCheckReport {
        max_k_matrix_residual: 0.0,
        max_k_hol_residual: 0.0,
        max_ric_residual: 0.0,
        samples: sample_count,
    };

    for (z, v) in sample_points(spec, sample_count, seed) {
        base_engine.expand(&mut bws, &z, &v, None)?;
        crate::geometry::assemble_basic(&bws.entries, &base_engine.ids, &mut bws.buf)?;
        crate::geometry::assemble_kobayashi(&bws.entries, &base_engine.ids, &mut bws.buf);
        hat_engine.expand(&mut hws, &z, &v, None)?;
        crate::geometry::assemble_basic(&hws.entries, &hat_engine.ids, &mut hws.buf)?;
        crate::geometry::assemble_kobayashi(&hws.entries, &hat_engine.ids, &mut hws.buf);

        fev.eval(&mut fws, &z, &v, None)?;
        let fjet = WirtingerJet::from_real(&fctx, &fev.result_real(&fws));
        let fval = fjet.value().re;
        let ef = fval.exp();

        let g = bws.buf.g;
        let mut fz = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                fz[idx2(n, i, j)] = fjet
                    .partial(&WirtingerIndex::new(n).z(i).zbar(j))
                    .unwrap();
            }
        }
        // Matrix law (5.10)
        for i in 0..n {
            for j in 0..n {
                let expect = ef * (bws.buf.kob[idx2(n, i, j)] - fz[idx2(n, i, j)] * g);
                let got = hws.buf.kob[idx2(n, i, j)];
                rep.max_k_matrix_residual = rep.max_k_matrix_residual.max((got - expect).norm());
            }
        }
        // Scalar law (5.12)
        let k_base = k_hol_from(n, &bws.buf.kob, g, &v);
        let k_hat = k_hol_from(n, &hws.buf.kob, hws.buf.g, &v);
        let mut fvv = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                fvv += fz[idx2(n, i, j)] * v[i] * v[j].conj();
            }
        }
        let expect_k = (k_base - fvv.re / g) / ef;
        rep.max_k_hol_residual = rep.max_k_hol_residual.max((k_hat - expect_k).abs());
        // Ricci law (6.3)
        let ric_base = ric_from(n, &bws.buf.inv, &bws.buf.kob, g);
        let ric_hat = ric_from(n, &hws.buf.inv, &hws.buf.kob, hws.buf.g);
        let mut trf = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                trf += bws.buf.inv[idx2(n, i, j)] * fz[idx2(n, j, i)];
            }
        }
        let expect_ric = (ric_base - trf.re) / ef;
        rep.max_ric_residual = rep.max_ric_residual.max((ric_hat - expect_ric).abs());
    }
    Ok(rep)
}

#[derive(Debug, Clone)]
pub struct LogGDecomposition {
    /// max |(dz, δv̄) and (δv, dz̄) mixed-block coefficients|
    pub max_mixed_block: f64,
    /// max |(dz, dz̄)-block + K_{ij̄}/G|
    pub max_hh_block_residual: f64,
}

/// Componentwise check of √−1 ∂∂̄ log G = ω_V − Θ in the adapted frame: the
/// basis change from (dz, dv) to (dz, δv) is applied explicitly with N.
pub fn log_g_decomposition(
    spec: &FinslerMetricSpec,
    z: &[C64],
    v: &[C64],
) -> Result<LogGDecomposition> {
    let n = spec.dims;
    let engine = GeometryEngine::new(spec, 2)?;
    let mut ws = engine.workspace();
    engine.expand(&mut ws, z, v, None)?;
    crate::geometry::assemble_basic(&ws.entries, &engine.ids, &mut ws.buf)?;
    crate::geometry::assemble_kobayashi(&ws.entries, &engine.ids, &mut ws.buf);
    // N at order 2 (needs only ∂_j ∂̇_b̄ G).
    let mut nconn = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for b in 0..n {
                acc += ws.buf.inv[idx2(n, b, i)]
                    * ws.entries[engine.ids.dzdvbar[idx2(n, j, b)] as usize];
            }
            nconn[idx2(n, i, j)] = acc;
        }
    }

    // Jet of log G through the same arithmetic.
    let (tree, fields) = spec.build_tree()?;
    let logtree = Expr::Log(Box::new(tree));
    let ctx = JetContext::shared(n, 2);
    let lev = JetEvaluator::new(ctx.clone(), &logtree, fields)?;
    let mut lws = lev.make_workspace();
    lev.eval(&mut lws, z, v, None)?;
    let ljet = WirtingerJet::from_real(&ctx, &lev.result_real(&lws));

    let at = |idx: WirtingerIndex| ljet.partial(&idx).unwrap();
    let mut l_blk = vec![C64::new(0.0, 0.0); n * n];
    let mut m_blk = vec![C64::new(0.0, 0.0); n * n];
    let mut v_blk = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            l_blk[idx2(n, i, j)] = at(WirtingerIndex::new(n).z(i).zbar(j));
            m_blk[idx2(n, i, j)] = at(WirtingerIndex::new(n).z(i).vbar(j));
            v_blk[idx2(n, i, j)] = at(WirtingerIndex::new(n).v(i).vbar(j));
        }
    }

    let mut rep = LogGDecomposition {
        max_mixed_block: 0.0,
        max_hh_block_residual: 0.0,
    };
    // (dz^i, δv̄^j): M_{ij̄} − V_{kj̄} N^k_i  → 0
    for i in 0..n {
        for j in 0..n {
            let mut acc = m_blk[idx2(n, i, j)];
            for k in 0..n {
                acc -= v_blk[idx2(n, k, j)] * nconn[idx2(n, k, i)];
            }
            rep.max_mixed_block = rep.max_mixed_block.max(acc.norm());
        }
    }
    // (dz^i, dz̄^j): L − M N̄ − (M'ᵀ-style) N + N V N̄  → −K_{ij̄}/G
    let g = ws.buf.g;
    for i in 0..n {
        for j in 0..n {
            let mut acc = l_blk[idx2(n, i, j)];
            for k in 0..n {
                acc -= m_blk[idx2(n, i, k)] * nconn[idx2(n, k, j)].conj();
                // M2_{kj̄} = ∂̇_k∂_j̄ log G = conj(M_{jk̄})
                acc -= m_blk[idx2(n, j, k)].conj() * nconn[idx2(n, k, i)];
            }
            for k in 0..n {
                for l in 0..n {
                    acc += v_blk[idx2(n, k, l)] * nconn[idx2(n, k, i)] * nconn[idx2(n, l, j)].conj();
                }
            }
            let expect = -ws.buf.kob[idx2(n, i, j)] / g;
            rep.max_hh_block_residual = rep.max_hh_block_residual.max((acc - expect).norm());
        }
    }
    Ok(rep)
}

/// Classical Hermitian-geometry oracle built directly from h_{ij̄}(z):
/// Chern connection Γ^i_{j,k} = h^{l̄i} ∂_k h_{jl̄} and curvature
/// R^i_{j,km̄} = −∂_m̄ Γ^i_{j,k}, evaluated from z-jets of the coefficient
/// expressions without touching the Finsler pipeline.
pub mod hermitian_oracle {
    use super::*;
    use crate::error::Error;

    pub struct HermitianOracle {
        pub n: usize,
        ctx: std::sync::Arc<JetContext>,
        evs: Vec<JetEvaluator>, // row-major full matrix of h entries
    }

    impl HermitianOracle {
        pub fn new(n: usize, upper: &[Vec<Expr>]) -> Result<Self> {
            // Expand the diagonal-plus-upper-triangle into a full matrix of
            // expression evaluators; lower entries are conjugates.
            let ctx = JetContext::shared(n, 3);
            let mut evs = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    let e = if j >= i {
                        upper[i][j - i].clone()
                    } else {
                        Expr::Conj(Box::new(upper[j][i - j].clone()))
                    };
                    evs.push(JetEvaluator::new(ctx.clone(), &e, vec![])?);
                }
            }
            Ok(Self { n, ctx, evs })
        }

        /// (h, Γ, R, K_matrix(v), K(v), Ric(v)) at z for direction v.
        #[allow(clippy::type_complexity)]
        pub fn eval(
            &self,
            z: &[C64],
            v: &[C64],
        ) -> Result<(Vec<C64>, Vec<C64>, Vec<C64>, Vec<C64>, f64, f64)> {
            let n = self.n;
            let zero = C64::new(0.0, 0.0);
            let mut h = vec![zero; n * n];
            let mut dh = vec![zero; n * n * n]; // ∂_k h_{jl̄} at [k][j][l]
            let mut ddh = vec![zero; n * n * n * n]; // ∂_k ∂_m̄ h_{jl̄} at [k][m][j][l]
            for j in 0..n {
                for l in 0..n {
                    let ev = &self.evs[idx2(n, j, l)];
                    let mut ws = ev.make_workspace();
                    ev.eval(&mut ws, z, v, None)?;
                    let jet = WirtingerJet::from_complex(&self.ctx, &ev.result_complex(&ws));
                    h[idx2(n, j, l)] = jet.value();
                    for k in 0..n {
                        dh[idx3(n, k, j, l)] = jet.partial(&WirtingerIndex::new(n).z(k))?;
                        for m in 0..n {
                            ddh[idx4(n, k, m, j, l)] =
                                jet.partial(&WirtingerIndex::new(n).z(k).zbar(m))?;
                        }
                    }
                }
            }
            let hm = CMat {
                n,
                data: h.clone(),
            };
            let (hinv, _det) = hm.inverse_det().ok_or(Error::Geometry {
                what: "hermitian oracle h".into(),
                index: 0,
            })?;
            // Γ^i_{j,k} = h^{l̄i} ∂_k h_{jl̄} with h^{l̄i} = inv[l][i]
            let mut gamma = vec![zero; n * n * n];
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let mut acc = zero;
                        for l in 0..n {
                            acc += hinv[(l, i)] * dh[idx3(n, k, j, l)];
                        }
                        gamma[idx3(n, i, j, k)] = acc;
                    }
                }
            }
            // R^i_{j,km̄} = −∂_m̄ Γ^i_{j,k}
            //            = −h^{l̄i}(∂_m̄∂_k h_{jl̄}) + h^{l̄a}(∂_m̄ h_{ab̄})h^{b̄i}∂_k h_{jl̄}
            // with ∂_m̄ h_{ab̄} = conj(∂_m h_{bā}).
            let mut r = vec![zero; n * n * n * n];
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        for m in 0..n {
                            let mut acc = zero;
                            for l in 0..n {
                                acc -= hinv[(l, i)] * ddh[idx4(n, k, m, j, l)];
                                for a in 0..n {
                                    for b in 0..n {
                                        acc += hinv[(l, a)]
                                            * dh[idx3(n, m, b, a)].conj()
                                            * hinv[(b, i)]
                                            * dh[idx3(n, k, j, l)];
                                    }
                                }
                            }
                            r[idx4(n, i, j, k, m)] = acc;
                        }
                    }
                }
            }
            // K_{km̄} = h_{il̄} R^i_{j,km̄} v^j v̄^l
            let mut kmat = vec![zero; n * n];
            for k in 0..n {
                for m in 0..n {
                    let mut acc = zero;
                    for i in 0..n {
                        for j in 0..n {
                            for l in 0..n {
                                acc += h[idx2(n, i, l)] * r[idx4(n, i, j, k, m)] * v[j] * v[l].conj();
                            }
                        }
                    }
                    kmat[idx2(n, k, m)] = acc;
                }
            }
            let mut g = zero;
            for i in 0..n {
                for j in 0..n {
                    g += h[idx2(n, i, j)] * v[i] * v[j].conj();
                }
            }
            let k_hol = super::k_hol_from(n, &kmat, g.re, v);
            let ric = super::ric_from(n, &hinv.data, &kmat, g.re);
            Ok((h, gamma, r, kmat, k_hol, ric))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn flat_curvature_vanishes() {
        let spec = FinslerMetricSpec::flat(2);
        let s = curvature_at(&spec, &[c(0.1, 0.2), c(0.3, 0.4)], &[c(1.0, 0.0), c(0.0, 0.0)], true)
            .unwrap();
        assert_eq!(s.k_hol, 0.0);
        assert_eq!(s.ric, 0.0);
        for e in &s.k_matrix.data {
            assert!(e.norm() < 1e-14);
        }
        for e in s.r_hh.as_ref().unwrap() {
            assert!(e.norm() < 1e-12);
        }
    }

    #[test]
    fn projective_invariance_of_k_and_ric() {
        let spec = FinslerMetricSpec::quartic(2, 0.1);
        let z = [c(0.0, 0.0), c(0.0, 0.0)];
        let v = [c(0.6, 0.2), c(-0.3, 0.8)];
        let v3: Vec<C64> = v.iter().map(|&x| x * 3.0).collect();
        let a = curvature_at(&spec, &z, &v, false).unwrap();
        let b = curvature_at(&spec, &z, &v3, false).unwrap();
        assert_relative_eq!(a.k_hol, b.k_hol, epsilon = 1e-10);
        assert_relative_eq!(a.ric, b.ric, epsilon = 1e-10);
    }

    #[test]
    fn conformal_matrix_law_over_flat() {
        let f = expr::parse("0.1*sin(2*pi*x1)").unwrap();
        let spec = FinslerMetricSpec::flat(2);
        let rep = conformal_curvature_check(&spec, &f, 25, 5).unwrap();
        assert!(rep.max_k_matrix_residual < 1e-9, "{rep:?}");
        assert!(rep.max_k_hol_residual < 1e-9, "{rep:?}");
        assert!(rep.max_ric_residual < 1e-9, "{rep:?}");
    }

    #[test]
    fn conformal_law_constant_factor() {
        // f = const: K̂ = e^{−c} K, R̂ic = e^{−c} Ric exactly.
        let spec = FinslerMetricSpec::quartic(2, 0.1);
        let cst = 0.7;
        let hat = spec.clone().conformal(Expr::Const(cst));
        let z = [c(0.2, 0.1), c(0.0, 0.3)];
        let v = [c(1.0, 0.1), c(0.2, -0.4)];
        let a = curvature_at(&spec, &z, &v, false).unwrap();
        let b = curvature_at(&hat, &z, &v, false).unwrap();
        assert_relative_eq!(b.k_hol, (-cst).exp() * a.k_hol, max_relative = 1e-11);
        assert_relative_eq!(b.ric, (-cst).exp() * a.ric, max_relative = 1e-11);
    }

    #[test]
    fn log_g_identity_blocks() {
        let spec = FinslerMetricSpec::quartic(2, 0.1);
        let rep = log_g_decomposition(
            &spec,
            &[c(0.0, 0.0), c(0.0, 0.0)],
            &[c(0.9, 0.1), c(0.3, -0.6)],
        )
        .unwrap();
        assert!(rep.max_mixed_block < 1e-8, "{rep:?}");
        assert!(rep.max_hh_block_residual < 1e-8, "{rep:?}");
    }

    #[test]
    fn hermitian_reduction_matches_classical_oracle() {
        // h = diag(e^{0.1 sin 2πx1}, 1): Γ, R, K, Ric must match the
        // classical Chern-connection formulas from z-jets of h.
        let a = expr::parse("exp(0.1*sin(2*pi*x1))").unwrap();
        let upper = vec![vec![a, Expr::Const(0.0)], vec![Expr::Const(1.0)]];
        let spec = FinslerMetricSpec::hermitian(2, upper.clone());
        let oracle = hermitian_oracle::HermitianOracle::new(2, &upper).unwrap();
        let z = [c(0.13, 0.0), c(0.0, 0.0)];
        let v = [c(0.8, 0.2), c(0.1, -0.5)];
        let (_h, gamma_o, r_o, kmat_o, k_o, ric_o) = oracle.eval(&z, &v).unwrap();

        let geo = crate::geometry::geometry_at(&spec, &z, &v).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    let d = (geo.gamma_at(i, j, k) - gamma_o[idx3(2, i, j, k)]).norm();
                    assert!(d < 1e-9, "gamma [{i}{j}{k}] {d:.2e}");
                    assert!(geo.c_at(i, j, k).norm() < 1e-10);
                }
            }
        }
        let cur = curvature_at(&spec, &z, &v, true).unwrap();
        let r = cur.r_hh.as_ref().unwrap();
        for idx in 0..16 {
            let d = (r[idx] - r_o[idx]).norm();
            assert!(d < 1e-7, "hh curvature [{idx}] {d:.2e}");
        }
        for i in 0..2 {
            for j in 0..2 {
                let d = (cur.k_matrix[(i, j)] - kmat_o[idx2(2, i, j)]).norm();
                assert!(d < 1e-8);
            }
        }
        assert_relative_eq!(cur.k_hol, k_o, max_relative = 1e-8);
        assert_relative_eq!(cur.ric, ric_o, max_relative = 1e-8);
    }

    #[test]
    fn contraction_identity_on_quartic() {
        // G_{il̄} R^i_{j,km̄} v^j v̄^l = K_{km̄}  (the hh̄ contraction).
        let spec = FinslerMetricSpec::quartic(2, 0.1);
        let z = [c(0.0, 0.0), c(0.0, 0.0)];
        let v = [c(1.0, 0.2), c(0.4, -0.7)];
        let cur = curvature_at(&spec, &z, &v, true).unwrap();
        let geo = crate::geometry::geometry_at(&spec, &z, &v).unwrap();
        let r = cur.r_hh.as_ref().unwrap();
        for k in 0..2 {
            for m in 0..2 {
                let mut acc = c(0.0, 0.0);
                for i in 0..2 {
                    for j in 0..2 {
                        for l in 0..2 {
                            acc += geo.levi[(i, l)] * r[idx4(2, i, j, k, m)] * v[j] * v[l].conj();
                        }
                    }
                }
                let d = (acc - cur.k_matrix[(k, m)]).norm();
                assert!(d < 1e-7, "contraction [{k}{m}] {d:.2e}");
            }
        }
    }
}
