//! Integration over the CP^{n−1} fibers of the projectivized bundle.
//!
//! Each fiber is covered by n max-modulus affine charts: chart i sets
//! v^i = 1 and parameterizes the remaining components by w with |w_j| ≤ 1.
//! The cells overlap on measure zero and cover the fiber. The fiber measure
//! is ω_V^{n−1}/(n−1)! pulled back to the chart: det of the (log G) minor
//! times 2^{n−1} per the real-conversion convention (√−1 dw ∧ dw̄ = 2 dA).
//! Every dμ_P-weighted quotient additionally carries det G_{ij̄}(z,v) from
//! ω_H^n/n! inside the fiber integral.
//!
//! Node reductions run in a fixed order with compensated summation, so
//! sweeps are deterministic regardless of thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::{self, Expr, JetEvaluator};
use crate::geometry::{self, idx2, idx3, EngineWorkspace, GeometryEngine};
use crate::grid::TorusGrid;
use crate::jets::{JetContext, WirtingerJet};
use crate::linalg::CMat;
use crate::metric::FinslerMetricSpec;
use crate::C64;

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    for k in 0..order {
        // Chebyshev-based initial guess.
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (order as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and P'_n(x).
            let (mut p0, mut p1) = (1.0f64, x);
            for j in 2..=order {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = order as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[k] = x;
        let (mut p0, mut p1) = (1.0f64, x);
        for j in 2..=order {
            let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = order as f64 * (x * p1 - p0) / (x * x - 1.0);
        weights[k] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    sum: f64,
    comp: f64,
}

impl Accumulator {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Debug, Clone)]
pub struct FiberNode {
    /// Off-chart components w_j (length n−1).
    pub w: Vec<C64>,
    /// Product of polar cell measures ∏ r dr dφ.
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct FiberRule {
    pub n: usize,
    pub radial: usize,
    pub angular: usize,
    /// One node list shared by all charts (the cell is the same polydisc).
    pub nodes: Vec<FiberNode>,
}

impl FiberRule {
    pub fn node_count(&self) -> usize {
        self.n * self.nodes.len()
    }

    /// Homogeneous representative of a node in chart `chart` (v^chart = 1).
    pub fn homogeneous(&self, chart: usize, node: &FiberNode, out: &mut [C64]) {
        let mut wi = 0;
        for (slot, val) in out.iter_mut().enumerate() {
            if slot == chart {
                *val = C64::new(1.0, 0.0);
            } else {
                *val = node.w[wi];
                wi += 1;
            }
        }
    }
}

/// Tensor-product polar rule on the unit polydisc |w_j| ≤ 1:
/// Gauss-Legendre radially, equispaced (trapezoid) angularly.
pub fn build_fiber_rule(n: usize, radial: usize, angular: usize) -> Result<FiberRule> {
    if radial < 2 || angular < 2 {
        return Err(Error::Config("fiber rule orders must be at least 2".into()));
    }
    let (gl_x, gl_w) = gauss_legendre(radial);
    // Map [-1,1] → [0,1].
    let rs: Vec<(f64, f64)> = gl_x
        .iter()
        .zip(&gl_w)
        .map(|(&x, &w)| ((x + 1.0) / 2.0, w / 2.0))
        .collect();
    let dphi = 2.0 * std::f64::consts::PI / angular as f64;
    let mut disc: Vec<(C64, f64)> = Vec::with_capacity(radial * angular);
    for &(r, wr) in &rs {
        for a in 0..angular {
            let phi = dphi * (a as f64 + 0.5);
            disc.push((C64::from_polar(r, phi), wr * r * dphi));
        }
    }
    // Tensor product over the n−1 off-chart coordinates.
    let mut nodes = vec![FiberNode {
        w: Vec::new(),
        weight: 1.0,
    }];
    for _ in 0..(n - 1) {
        let mut next = Vec::with_capacity(nodes.len() * disc.len());
        for node in &nodes {
            for &(w, wt) in &disc {
                let mut ws = node.w.clone();
                ws.push(w);
                next.push(FiberNode {
                    w: ws,
                    weight: node.weight * wt,
                });
            }
        }
        nodes = next;
    }
    Ok(FiberRule {
        n,
        radial,
        angular,
        nodes,
    })
}

/// Fubini-Study-type fiber density at an assembled node: det of the
/// (log G)_{ab̄} minor over the off-chart slots, times 2^{n−1}.
fn fiber_density(
    n: usize,
    chart: usize,
    entries: &[C64],
    ids: &geometry::GeomIds,
    buf: &geometry::GeomBuf,
    scratch: &mut Vec<C64>,
) -> f64 {
    let g = buf.g;
    let m = n - 1;
    scratch.clear();
    scratch.resize(m * m, C64::new(0.0, 0.0));
    let mut ai = 0;
    for a in 0..n {
        if a == chart {
            continue;
        }
        let mut bi = 0;
        for b in 0..n {
            if b == chart {
                continue;
            }
            let lg = buf.levi[idx2(n, a, b)] / g
                - entries[ids.dv[a] as usize] * entries[ids.dv[b] as usize].conj() / (g * g);
            scratch[ai * m + bi] = lg;
            bi += 1;
        }
        ai += 1;
    }
    let det = small_det(m, scratch);
    det * (2.0f64).powi(m as i32)
}

fn small_det(m: usize, a: &mut [C64]) -> f64 {
    if m == 1 {
        return a[0].re;
    }
    let mut det = C64::new(1.0, 0.0);
    for col in 0..m {
        let mut piv = col;
        let mut best = a[col * m + col].norm();
        for r in (col + 1)..m {
            let mag = a[r * m + col].norm();
            if mag > best {
                best = mag;
                piv = r;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if piv != col {
            for c in 0..m {
                a.swap(piv * m + c, col * m + c);
            }
            det = -det;
        }
        let d = a[col * m + col];
        det *= d;
        for r in (col + 1)..m {
            let f = a[r * m + col] / d;
            for c in col..m {
                let s = a[col * m + c];
                a[r * m + c] -= f * s;
            }
        }
    }
    det.re
}

/// Integrate a projectively invariant scalar over the fiber at z with the
/// unweighted ω_V measure. The invariance contract is spot-checked.
pub fn fiber_integrate(
    spec: &FinslerMetricSpec,
    z: &[C64],
    integrand: &dyn Fn(&[C64], &[C64]) -> Result<f64>,
    rule: &FiberRule,
) -> Result<f64> {
    let n = spec.dims;
    let engine = GeometryEngine::new(spec, 2)?;
    let mut ws = engine.workspace();
    let mut v = vec![C64::new(0.0, 0.0); n];
    // Projectivity spot check on the first node of each chart.
    let lambda = C64::new(0.37, 0.78);
    for chart in 0..n {
        rule.homogeneous(chart, &rule.nodes[0], &mut v);
        let f0 = integrand(z, &v)?;
        let vl: Vec<C64> = v.iter().map(|&c| lambda * c).collect();
        let f1 = integrand(z, &vl)?;
        let dev = (f1 - f0).abs();
        if dev > 1e-8 * (1.0 + f0.abs()) {
            return Err(Error::ContractViolation { deviation: dev });
        }
    }
    let mut acc = Accumulator::default();
    let mut scratch = Vec::new();
    for chart in 0..n {
        for node in &rule.nodes {
            rule.homogeneous(chart, node, &mut v);
            engine.expand(&mut ws, z, &v, None)?;
            geometry::assemble_basic(&ws.entries, &engine.ids, &mut ws.buf)?;
            let dens = fiber_density(n, chart, &ws.entries, &engine.ids, &ws.buf, &mut scratch);
            acc.add(integrand(z, &v)? * dens * node.weight);
        }
    }
    Ok(acc.value())
}

/// Everything the base-manifold pipelines need from one fiber.
#[derive(Debug, Clone)]
pub struct FiberMoments {
    /// vol(P_z) with the unweighted ω_V measure.
    pub vol: f64,
    /// Density of dμ_M against the real coordinate volume at z.
    pub mu_density: f64,
    pub kappa: f64,
    pub kappa_theta: f64,
    pub rho: f64,
    pub rho_theta: f64,
    /// h^{ij̄} at (i, j).
    pub h_inv: CMat,
    /// g^{ij̄} at (i, j).
    pub g_inv: CMat,
    /// ω_M coefficients ∫ G_{ij̄} dσ at (i, j).
    pub omega_m: CMat,
}

/// Reusable fiber-moment engine for one metric.
pub struct MomentsEngine {
    pub engine: GeometryEngine,
    pub rule: FiberRule,
    pub with_torsion: bool,
}

impl MomentsEngine {
    /// `with_torsion` enables the ϑ-corrected means (order-4 jets); without
    /// it only order-2 quantities are computed.
    pub fn new(spec: &FinslerMetricSpec, rule: FiberRule, with_torsion: bool) -> Result<Self> {
        let order = if with_torsion { 4 } else { 2 };
        Ok(Self {
            engine: GeometryEngine::new(spec, order)?,
            rule,
            with_torsion,
        })
    }

    pub fn workspace(&self) -> EngineWorkspace {
        self.engine.workspace()
    }

    pub fn moments_at(
        &self,
        ws: &mut EngineWorkspace,
        z: &[C64],
        grid_idx: Option<usize>,
    ) -> Result<FiberMoments> {
        let n = self.engine.ctx.n;
        let ids = &self.engine.ids;
        let mut v = vec![C64::new(0.0, 0.0); n];
        let mut scratch = Vec::new();

        let mut vol = Accumulator::default();
        let mut det_int = Accumulator::default();
        let mut kappa_num = Accumulator::default();
        let mut kappa_t_num = Accumulator::default();
        let mut rho_num = Accumulator::default();
        let mut rho_t_num = Accumulator::default();
        let zero = C64::new(0.0, 0.0);
        let mut h_num = vec![zero; n * n];
        let mut g_num = vec![zero; n * n];
        let mut omega = vec![zero; n * n];

        for chart in 0..n {
            for node in &self.rule.nodes {
                self.rule.homogeneous(chart, node, &mut v);
                self.engine.expand(ws, z, &v, grid_idx)?;
                let e = &ws.entries;
                let buf = &mut ws.buf;
                geometry::assemble_basic(e, ids, buf)?;
                let dsigma = fiber_density(n, chart, e, ids, buf, &mut scratch) * node.weight;
                let det_w = buf.det * dsigma;
                vol.add(dsigma);
                det_int.add(det_w);
                geometry::assemble_kobayashi(e, ids, buf);
                let k_hol = crate::curvature::k_hol_from(n, &buf.kob, buf.g, &v);
                let ric = crate::curvature::ric_from(n, &buf.inv, &buf.kob, buf.g);
                kappa_num.add(k_hol * det_w);
                rho_num.add(ric * det_w);
                if self.with_torsion {
                    geometry::assemble_connection(e, ids, buf);
                    geometry::assemble_dbar(e, ids, buf);
                    let mut tv = zero;
                    for k in 0..n {
                        tv += buf.vartheta[k] * v[k];
                    }
                    let mut tzv = zero;
                    let mut norm_t = zero;
                    let mut tz_tr = zero;
                    for i in 0..n {
                        for j in 0..n {
                            tzv += buf.vartheta_zbar[idx2(n, i, j)] * v[i] * v[j].conj();
                            norm_t += buf.inv[idx2(n, j, i)]
                                * buf.vartheta[i]
                                * buf.vartheta[j].conj();
                            tz_tr += buf.inv[idx2(n, j, i)] * buf.vartheta_zbar[idx2(n, i, j)];
                        }
                    }
                    let corr_k = (tv.norm_sqr() + tzv.re) / (buf.g * (n as f64 - 1.0));
                    let corr_r = (norm_t.re + tz_tr.re) / (n as f64 - 1.0);
                    kappa_t_num.add((k_hol - corr_k) * det_w);
                    rho_t_num.add((ric - corr_r) * det_w);
                }
                for i in 0..n {
                    for j in 0..n {
                        h_num[idx2(n, i, j)] += v[i] * v[j].conj() * (2.0 / buf.g * det_w);
                        g_num[idx2(n, i, j)] += buf.inv[idx2(n, j, i)] * (2.0 * det_w);
                        omega[idx2(n, i, j)] += buf.levi[idx2(n, i, j)] * dsigma;
                    }
                }
            }
        }

        let di = det_int.value();
        let h_inv = CMat {
            n,
            data: h_num.iter().map(|c| c / di).collect(),
        };
        let g_inv = CMat {
            n,
            data: g_num.iter().map(|c| c / di).collect(),
        };
        Ok(FiberMoments {
            vol: vol.value(),
            mu_density: di * (2.0f64).powi(n as i32),
            kappa: kappa_num.value() / di,
            kappa_theta: if self.with_torsion {
                kappa_t_num.value() / di
            } else {
                kappa_num.value() / di
            },
            rho: rho_num.value() / di,
            rho_theta: if self.with_torsion {
                rho_t_num.value() / di
            } else {
                rho_num.value() / di
            },
            h_inv,
            g_inv,
            omega_m: CMat { n, data: omega },
        })
    }

    /// Moments at every grid point, in parallel with deterministic output.
    pub fn sweep(&self, grid: &TorusGrid) -> Result<Vec<FiberMoments>> {
        (0..grid.len())
            .into_par_iter()
            .map_init(
                || self.workspace(),
                |ws, idx| {
                    let z = grid.point(idx);
                    self.moments_at(ws, &z, Some(idx))
                },
            )
            .collect()
    }
}

/// The horizontal (1,0) test forms of the divergence identities.
#[derive(Debug, Clone)]
pub enum TestForm {
    /// α_i = ∂_i f for a real base function f(z).
    Gradient(Expr),
    /// α_i = ν(z) ϑ_i, the choice that produces the ϑ-mean corrections.
    NuVartheta(Expr),
    /// Explicit components, possibly v-dependent (projectively invariant).
    Components(Vec<Expr>),
}

#[derive(Debug, Clone)]
pub struct DivergenceReport {
    /// |∫ G^{ij̄}(α_{i,j̄} + α_i ϑ̄_j) dμ_P|
    pub res_contravariant: f64,
    /// |∫ (1/G)(α_{i,j̄} v^i v̄^j + α_i v^i · ϑ̄_j v̄^j) dμ_P|
    pub res_radial: f64,
    /// |∫ Γ^j_{j,i} dμ_P| per i (the volume-form divergence identity).
    pub res_gamma_trace: Vec<f64>,
}

/// Integrated Stokes-type residuals of the divergence identities over the
/// whole projectivized bundle. Both integrands are exact divergences, so
/// the results measure quadrature error only.
pub fn divergence_residual(
    spec: &FinslerMetricSpec,
    grid: &TorusGrid,
    form: &TestForm,
    rule: &FiberRule,
) -> Result<DivergenceReport> {
    let n = spec.dims;
    let engine = GeometryEngine::new(spec, 4)?;
    let ctx2 = JetContext::shared(n, 2);

    // Jets of the scalar data (f or ν) and of explicit components.
    let scalar_ev: Option<JetEvaluator> = match form {
        TestForm::Gradient(f) | TestForm::NuVartheta(f) => {
            if expr::kind_of(f)? != expr::Kind::Real {
                return Err(Error::Config("test-form scalar must be real-valued".into()));
            }
            Some(JetEvaluator::new(ctx2.clone(), f, vec![])?)
        }
        TestForm::Components(_) => None,
    };
    let comp_evs: Vec<JetEvaluator> = match form {
        TestForm::Components(es) => es
            .iter()
            .map(|e| JetEvaluator::new(ctx2.clone(), e, vec![]))
            .collect::<Result<_>>()?,
        _ => Vec::new(),
    };

    let zero = C64::new(0.0, 0.0);
    let per_point: Vec<(C64, C64, Vec<C64>)> = (0..grid.len())
        .into_par_iter()
        .map_init(
            || {
                (
                    engine.workspace(),
                    scalar_ev.as_ref().map(|ev| ev.make_workspace()),
                    comp_evs.iter().map(|ev| ev.make_workspace()).collect::<Vec<_>>(),
                )
            },
            |(ws, sws, cws), idx| -> Result<(C64, C64, Vec<C64>)> {
                let z = grid.point(idx);
                let mut v = vec![zero; n];
                let mut scratch = Vec::new();

                // z-only scalar data once per grid point.
                let mut sval = 0.0;
                let mut sgrad = vec![zero; n]; // ∂_i s
                let mut shess = vec![zero; n * n]; // ∂_i ∂_j̄ s
                if let (Some(ev), Some(sws)) = (scalar_ev.as_ref(), sws.as_mut()) {
                    let vref = vec![C64::new(1.0, 0.0); n];
                    ev.eval(sws, &z, &vref, None)?;
                    let jet = WirtingerJet::from_real(&ctx2, &ev.result_real(sws));
                    sval = jet.value().re;
                    for i in 0..n {
                        sgrad[i] = jet.partial(&crate::jets::WirtingerIndex::new(n).z(i))?;
                        for j in 0..n {
                            shess[idx2(n, i, j)] =
                                jet.partial(&crate::jets::WirtingerIndex::new(n).z(i).zbar(j))?;
                        }
                    }
                }

                let mut acc1 = zero;
                let mut acc2 = zero;
                let mut acc_tr = vec![zero; n];
                for chart in 0..n {
                    for node in engine_rule_nodes(rule) {
                        rule.homogeneous(chart, node, &mut v);
                        engine.expand(ws, &z, &v, Some(idx))?;
                        let e = &ws.entries;
                        let ids = &engine.ids;
                        let buf = &mut ws.buf;
                        geometry::assemble_basic(e, ids, buf)?;
                        let dsigma =
                            fiber_density(n, chart, e, ids, buf, &mut scratch) * node.weight;
                        geometry::assemble_connection(e, ids, buf);
                        let needs_dbar = matches!(form, TestForm::NuVartheta(_));
                        if needs_dbar {
                            geometry::assemble_dbar(e, ids, buf);
                        }

                        // α_i and α_{i,j̄} = δ_j̄ α_i at this node.
                        let mut alpha = vec![zero; n];
                        let mut dalpha = vec![zero; n * n];
                        match form {
                            TestForm::Gradient(_) => {
                                alpha.copy_from_slice(&sgrad);
                                for i in 0..n {
                                    for j in 0..n {
                                        dalpha[idx2(n, i, j)] = shess[idx2(n, i, j)];
                                    }
                                }
                            }
                            TestForm::NuVartheta(_) => {
                                for i in 0..n {
                                    alpha[i] = buf.vartheta[i] * sval;
                                    for j in 0..n {
                                        // δ_j̄(ν ϑ_i) = (∂_j̄ ν) ϑ_i + ν δ_j̄ ϑ_i
                                        dalpha[idx2(n, i, j)] = sgrad[j].conj() * buf.vartheta[i]
                                            + buf.vartheta_zbar[idx2(n, i, j)] * sval;
                                    }
                                }
                            }
                            TestForm::Components(_) => {
                                for (i, (ev, cw)) in
                                    comp_evs.iter().zip(cws.iter_mut()).enumerate()
                                {
                                    ev.eval(cw, &z, &v, None)?;
                                    let jet =
                                        WirtingerJet::from_complex(&ctx2, &ev.result_complex(cw));
                                    alpha[i] = jet.value();
                                    for j in 0..n {
                                        let dz = jet.partial(
                                            &crate::jets::WirtingerIndex::new(n).zbar(j),
                                        )?;
                                        let mut acc = dz;
                                        for m in 0..n {
                                            let dv = jet.partial(
                                                &crate::jets::WirtingerIndex::new(n).vbar(m),
                                            )?;
                                            acc -= buf.nconn[idx2(n, m, j)].conj() * dv;
                                        }
                                        dalpha[idx2(n, i, j)] = acc;
                                    }
                                }
                            }
                        }

                        let det_w = buf.det * dsigma * (2.0f64).powi(n as i32);
                        // (5.6): G^{ij̄}(α_{i,j̄} + α_i ϑ̄_j)
                        let mut t1 = zero;
                        for i in 0..n {
                            for j in 0..n {
                                t1 += buf.inv[idx2(n, j, i)]
                                    * (dalpha[idx2(n, i, j)]
                                        + alpha[i] * buf.vartheta[j].conj());
                            }
                        }
                        acc1 += t1 * det_w;
                        // (5.7): (1/G)(α_{i,j̄} v^i v̄^j + α_i v^i ϑ̄_j v̄^j)
                        let mut av = zero;
                        let mut tv = zero;
                        let mut davv = zero;
                        for i in 0..n {
                            av += alpha[i] * v[i];
                            tv += buf.vartheta[i] * v[i];
                            for j in 0..n {
                                davv += dalpha[idx2(n, i, j)] * v[i] * v[j].conj();
                            }
                        }
                        acc2 += (davv + av * tv.conj()) / buf.g * det_w;
                        // Lemma 3.1: Γ^j_{j,i}
                        for i in 0..n {
                            let mut tr = zero;
                            for j in 0..n {
                                tr += buf.gamma[idx3(n, j, j, i)];
                            }
                            acc_tr[i] += tr * det_w;
                        }
                    }
                }
                Ok((acc1, acc2, acc_tr))
            },
        )
        .collect::<Result<Vec<_>>>()?;

    let cell = grid.cell_volume();
    let mut total1 = zero;
    let mut total2 = zero;
    let mut total_tr = vec![zero; n];
    for (a, b, tr) in per_point {
        total1 += a;
        total2 += b;
        for i in 0..n {
            total_tr[i] += tr[i];
        }
    }
    Ok(DivergenceReport {
        res_contravariant: (total1 * cell).norm(),
        res_radial: (total2 * cell).norm(),
        res_gamma_trace: total_tr.iter().map(|c| (c * cell).norm()).collect(),
    })
}

fn engine_rule_nodes(rule: &FiberRule) -> &[FiberNode] {
    &rule.nodes
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn node_count_matches_formula() {
        let rule = build_fiber_rule(2, 16, 32).unwrap();
        assert_eq!(rule.nodes.len(), 512);
        assert_eq!(rule.node_count(), 1024);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(8);
        // ∫_{-1}^{1} t^6 dt = 2/7
        let got: f64 = x.iter().zip(&w).map(|(&t, &wt)| t.powi(6) * wt).sum();
        assert_relative_eq!(got, 2.0 / 7.0, epsilon = 1e-14);
        let got: f64 = x.iter().zip(&w).map(|(&t, &wt)| t.powi(14) * wt).sum();
        assert_relative_eq!(got, 2.0 / 15.0, epsilon = 1e-13);
    }

    #[test]
    fn flat_fiber_volume_is_two_pi() {
        // Closed form: each chart contributes ∫_{|w|≤1} 2 dA/(1+|w|²)² = π.
        let spec = FinslerMetricSpec::flat(2);
        let rule = build_fiber_rule(2, 16, 32).unwrap();
        let z = [c(0.0, 0.0), c(0.0, 0.0)];
        let one = |_: &[C64], _: &[C64]| -> crate::error::Result<f64> { Ok(1.0) };
        let vol = fiber_integrate(&spec, &z, &one, &rule).unwrap();
        assert_relative_eq!(vol, 2.0 * std::f64::consts::PI, epsilon = 1e-10);
    }

    #[test]
    fn refinement_changes_flat_volume_below_1e10() {
        let spec = FinslerMetricSpec::flat(2);
        let z = [c(0.0, 0.0), c(0.0, 0.0)];
        let one = |_: &[C64], _: &[C64]| -> crate::error::Result<f64> { Ok(1.0) };
        let r1 = build_fiber_rule(2, 16, 32).unwrap();
        let r2 = build_fiber_rule(2, 32, 32).unwrap();
        let v1 = fiber_integrate(&spec, &z, &one, &r1).unwrap();
        let v2 = fiber_integrate(&spec, &z, &one, &r2).unwrap();
        assert!((v1 - v2).abs() <= 1e-10);
    }

    #[test]
    fn non_projective_integrand_rejected() {
        let spec = FinslerMetricSpec::flat(2);
        let rule = build_fiber_rule(2, 4, 8).unwrap();
        let z = [c(0.0, 0.0), c(0.0, 0.0)];
        let bad = |_: &[C64], v: &[C64]| -> crate::error::Result<f64> { Ok(v[0].re) };
        assert!(matches!(
            fiber_integrate(&spec, &z, &bad, &rule),
            Err(Error::ContractViolation { .. })
        ));
    }

    #[test]
    fn flat_moments_symmetry() {
        let spec = FinslerMetricSpec::flat(2);
        let rule = build_fiber_rule(2, 16, 32).unwrap();
        let me = MomentsEngine::new(&spec, rule, true).unwrap();
        let mut ws = me.workspace();
        let m = me
            .moments_at(&mut ws, &[c(0.3, 0.1), c(0.7, 0.9)], None)
            .unwrap();
        assert_relative_eq!(m.vol, 2.0 * std::f64::consts::PI, epsilon = 1e-10);
        assert!(m.kappa.abs() < 1e-12);
        assert!(m.rho.abs() < 1e-12);
        assert!(m.kappa_theta.abs() < 1e-12);
        assert!(m.rho_theta.abs() < 1e-12);
        // h^{ij̄} = δ by the unitary symmetry of the flat fiber average,
        // g^{ij̄} = 2δ since G^{ij̄} = δ.
        for i in 0..2 {
            for j in 0..2 {
                let expect_h = if i == j { 1.0 } else { 0.0 };
                let expect_g = 2.0 * expect_h;
                assert!((m.h_inv[(i, j)] - c(expect_h, 0.0)).norm() < 1e-9);
                assert!((m.g_inv[(i, j)] - c(expect_g, 0.0)).norm() < 1e-10);
            }
        }
        // μ_M density: 2^n · det G · vol = 4 · 2π.
        assert_relative_eq!(m.mu_density, 8.0 * std::f64::consts::PI, epsilon = 1e-9);
    }

    #[test]
    fn fiber_volume_constant_across_base_for_quartic() {
        let spec = FinslerMetricSpec::quartic(2, 0.1);
        let rule = build_fiber_rule(2, 16, 32).unwrap();
        let me = MomentsEngine::new(&spec, rule, false).unwrap();
        let mut ws = me.workspace();
        let mut vols = Vec::new();
        for k in 0..16 {
            let t = k as f64 / 16.0;
            let z = [c(t, 0.3 * t), c(0.9 - t, t * t)];
            vols.push(me.moments_at(&mut ws, &z, None).unwrap().vol);
        }
        let mean: f64 = vols.iter().sum::<f64>() / vols.len() as f64;
        let spread = vols
            .iter()
            .map(|v| (v - mean).abs())
            .fold(0.0f64, f64::max);
        assert!(spread / mean <= 1e-9, "relative spread {:.2e}", spread / mean);
    }

    #[test]
    fn conformal_invariance_of_fiber_volume_and_mu_scaling() {
        let f = expr::parse("0.4*sin(2*pi*x1)").unwrap();
        let base = FinslerMetricSpec::quartic(2, 0.1);
        let hat = base.clone().conformal(f.clone());
        let rule = build_fiber_rule(2, 16, 32).unwrap();
        let me_b = MomentsEngine::new(&base, rule.clone(), false).unwrap();
        let me_h = MomentsEngine::new(&hat, rule, false).unwrap();
        let mut wb = me_b.workspace();
        let mut wh = me_h.workspace();
        let z = [c(0.23, 0.51), c(0.08, 0.77)];
        let mb = me_b.moments_at(&mut wb, &z, None).unwrap();
        let mh = me_h.moments_at(&mut wh, &z, None).unwrap();
        assert_relative_eq!(mb.vol, mh.vol, max_relative = 1e-10);
        let fval = 0.4 * (2.0 * std::f64::consts::PI * 0.23).sin();
        let expect = (2.0 * fval).exp() * mb.mu_density; // e^{nf}, n = 2
        assert_relative_eq!(mh.mu_density, expect, max_relative = 1e-8);
    }

    #[test]
    fn divergence_residual_zero_form() {
        let spec = FinslerMetricSpec::flat(2);
        let grid = TorusGrid::new(2, 2, vec![1.0; 4]).unwrap();
        let rule = build_fiber_rule(2, 4, 8).unwrap();
        let rep = divergence_residual(
            &spec,
            &grid,
            &TestForm::Components(vec![Expr::Const(0.0), Expr::Const(0.0)]),
            &rule,
        )
        .unwrap();
        assert_eq!(rep.res_contravariant, 0.0);
        assert_eq!(rep.res_radial, 0.0);
    }
}
