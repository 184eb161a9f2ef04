//! Total curvature functionals, conformal variations, and stability.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fiber::{build_fiber_rule, FiberRule, MomentsEngine};
use crate::geometry::idx2;
use crate::grid::{SpectralField, TorusGrid};
use crate::metric::FinslerMetricSpec;
use crate::rng::SplitMix64;
use crate::C64;

/// Which total-curvature functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TotalCurvature {
    Holomorphic,
    Ricci,
}

/// Fiber moments assembled over the whole grid.
#[derive(Debug, Clone)]
pub struct BaseFields {
    pub grid: Arc<TorusGrid>,
    /// dμ_M density per grid point.
    pub mu: Vec<f64>,
    pub vol_fiber: Vec<f64>,
    pub kappa: Vec<f64>,
    pub kappa_theta: Vec<f64>,
    pub rho: Vec<f64>,
    pub rho_theta: Vec<f64>,
    /// h^{ij̄} per point, n² entries each.
    pub h_up: Vec<C64>,
    /// g^{ij̄} per point.
    pub g_up: Vec<C64>,
    /// ω_M coefficients per point.
    pub omega: Vec<C64>,
}

impl BaseFields {
    pub fn vol_m(&self) -> f64 {
        self.grid.integrate(&self.mu)
    }

    /// ∫ f dμ_M.
    pub fn integrate_mu(&self, f: &[f64]) -> f64 {
        self.grid.integrate_weighted(f, &self.mu)
    }

    /// Project a field to dμ_M-zero-mean.
    pub fn project_zero_mean(&self, f: &[f64]) -> Vec<f64> {
        let mean = self.integrate_mu(f) / self.vol_m();
        f.iter().map(|x| x - mean).collect()
    }
}

pub fn assemble_base_fields(
    spec: &FinslerMetricSpec,
    grid: &Arc<TorusGrid>,
    rule: &FiberRule,
    with_torsion: bool,
) -> Result<BaseFields> {
    let n = spec.dims;
    let me = MomentsEngine::new(spec, rule.clone(), with_torsion)?;
    let moments = me.sweep(grid)?;
    let len = grid.len();
    let mut out = BaseFields {
        grid: grid.clone(),
        mu: vec![0.0; len],
        vol_fiber: vec![0.0; len],
        kappa: vec![0.0; len],
        kappa_theta: vec![0.0; len],
        rho: vec![0.0; len],
        rho_theta: vec![0.0; len],
        h_up: vec![C64::new(0.0, 0.0); len * n * n],
        g_up: vec![C64::new(0.0, 0.0); len * n * n],
        omega: vec![C64::new(0.0, 0.0); len * n * n],
    };
    for (idx, m) in moments.iter().enumerate() {
        out.mu[idx] = m.mu_density;
        out.vol_fiber[idx] = m.vol;
        out.kappa[idx] = m.kappa;
        out.kappa_theta[idx] = m.kappa_theta;
        out.rho[idx] = m.rho;
        out.rho_theta[idx] = m.rho_theta;
        for i in 0..n {
            for j in 0..n {
                out.h_up[idx * n * n + idx2(n, i, j)] = m.h_inv[(i, j)];
                out.g_up[idx * n * n + idx2(n, i, j)] = m.g_inv[(i, j)];
                out.omega[idx * n * n + idx2(n, i, j)] = m.omega_m[(i, j)];
            }
        }
    }
    Ok(out)
}

/// The weighted Hermitian Dirichlet form
/// q(φ) = scale · ∫ U^{ij̄} φ_i φ_j̄ dμ  with spectral Wirtinger derivatives.
#[derive(Debug, Clone)]
pub struct HermitianQuadForm {
    pub grid: Arc<TorusGrid>,
    /// Measure density (dμ_M).
    pub weight: Vec<f64>,
    /// U^{ij̄} per grid point, n² entries each, Hermitian.
    pub coeff: Vec<C64>,
    pub scale: f64,
}

impl HermitianQuadForm {
    fn wirtinger_all(&self, phi: &[f64]) -> Vec<Vec<C64>> {
        (0..self.grid.n)
            .map(|i| self.grid.wirtinger_derivative(phi, i))
            .collect()
    }

    pub fn value(&self, phi: &[f64]) -> f64 {
        let n = self.grid.n;
        let d = self.wirtinger_all(phi);
        let mut acc = 0.0;
        for idx in 0..self.grid.len() {
            let mut s = C64::new(0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    s += self.coeff[idx * n * n + idx2(n, i, j)] * d[i][idx] * d[j][idx].conj();
                }
            }
            acc += self.weight[idx] * s.re;
        }
        self.scale * acc * self.grid.cell_volume()
    }

    /// Euclidean gradient of `value` with respect to the grid samples.
    pub fn gradient(&self, phi: &[f64]) -> Vec<f64> {
        let n = self.grid.n;
        let g = &self.grid;
        let d = self.wirtinger_all(phi);
        let mut grad = vec![0.0; g.len()];
        for i in 0..n {
            // r_i(x) = w(x) Σ_j U_{ij}(x) conj(d_j(x))
            let mut r = vec![C64::new(0.0, 0.0); g.len()];
            for idx in 0..g.len() {
                let mut s = C64::new(0.0, 0.0);
                for j in 0..n {
                    s += self.coeff[idx * n * n + idx2(n, i, j)] * d[j][idx].conj();
                }
                r[idx] = s * self.weight[idx];
            }
            // Σ_x r(x)(D_i e_y)(x) = conj(IFFT(conj(m_i)·FFT(conj r)))(y)
            let rbar: Vec<C64> = r.iter().map(|c| c.conj()).collect();
            let spec = g.fft(&rbar);
            let filt = g.apply_multiplier(&spec, |f| C64::new(0.5 * f[2 * i + 1], 0.5 * f[2 * i]).conj());
            let back = g.ifft(&filt);
            for (gy, b) in grad.iter_mut().zip(back.iter()) {
                *gy += 2.0 * b.re;
            }
        }
        let c = self.scale * g.cell_volume();
        for v in &mut grad {
            *v *= c;
        }
        grad
    }
}

/// First nonzero eigenvalue of the Hermitian Laplacian of (M, U, dμ):
/// minimizes q(φ)/∫φ²dμ over dμ-zero-mean φ by inverse iteration, with the
/// inner solves done by conjugate gradients on the deflated operator.
pub fn rayleigh_lambda1(
    form: &HermitianQuadForm,
    max_iters: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    let g = &form.grid;
    let len = g.len();
    let cell = g.cell_volume();
    let b_apply = |phi: &[f64]| -> Vec<f64> {
        phi.iter()
            .zip(&form.weight)
            .map(|(p, w)| 2.0 * p * w * cell)
            .collect()
    };
    let b_inner = |x: &[f64], y: &[f64]| -> f64 {
        x.iter()
            .zip(y)
            .zip(&form.weight)
            .map(|((a, b), w)| a * b * w)
            .sum::<f64>()
            * cell
    };
    let project = |phi: &mut [f64]| {
        let wsum: f64 = form.weight.iter().sum::<f64>() * cell;
        let mean = phi
            .iter()
            .zip(&form.weight)
            .map(|(p, w)| p * w)
            .sum::<f64>()
            * cell
            / wsum;
        for p in phi.iter_mut() {
            *p -= mean;
        }
    };
    let a_apply = |phi: &[f64]| -> Vec<f64> {
        form.gradient(phi)
    };

    let mut rng = SplitMix64::new(seed ^ 0x11);
    let raw: Vec<f64> = (0..len).map(|_| rng.next_signed()).collect();
    let mut phi = g.filter_nyquist(&raw);
    project(&mut phi);
    let norm = b_inner(&phi, &phi).sqrt();
    for p in &mut phi {
        *p /= norm;
    }

    let mut lambda = f64::INFINITY;
    for _outer in 0..max_iters {
        // Solve A y = B φ by CG. A (the gradient operator) is symmetric PSD
        // with null space spanned by constants and Nyquist-bearing modes;
        // the rhs is filtered into its range so the system is consistent.
        let rhs = g.project_range(&b_apply(&phi));
        let mut y = phi.clone();
        let mut r: Vec<f64> = {
            let ay = a_apply(&y);
            rhs.iter().zip(&ay).map(|(b, a)| b - a).collect()
        };
        r = g.project_range(&r);
        let mut p = r.clone();
        let mut rs: f64 = r.iter().map(|x| x * x).sum();
        let rhs_norm: f64 = rhs.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
        let mut cg_res = rs.sqrt() / rhs_norm;
        for _cg in 0..4000 {
            if cg_res < 1e-12 {
                break;
            }
            let ap = a_apply(&p);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap.abs() < 1e-300 {
                break;
            }
            let alpha = rs / pap;
            for i in 0..len {
                y[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            // Rounding slowly leaks null-space (constant and Nyquist)
            // components into the Krylov vectors; evict them so stagnated
            // solves cannot amplify junk along near-null directions.
            r = g.project_range(&r);
            let rs_new: f64 = r.iter().map(|x| x * x).sum();
            let beta = rs_new / rs;
            rs = rs_new;
            for i in 0..len {
                p[i] = r[i] + beta * p[i];
            }
            cg_res = rs.sqrt() / rhs_norm;
        }
        project(&mut y);
        let ynorm = b_inner(&y, &y).sqrt();
        if !(ynorm > 0.0) {
            return Err(Error::Convergence {
                what: "inverse iteration".into(),
                iterations: max_iters,
                residual: f64::NAN,
            });
        }
        for v in &mut y {
            *v /= ynorm;
        }
        let new_lambda = form.value(&y) / b_inner(&y, &y);
        let delta = (new_lambda - lambda).abs();
        phi = y;
        lambda = new_lambda;
        if delta <= 1e-12 * lambda.abs().max(1.0) {
            return Ok((lambda, phi));
        }
    }
    Err(Error::Convergence {
        what: "inverse iteration".into(),
        iterations: max_iters,
        residual: lambda,
    })
}

#[derive(Debug, Clone)]
pub struct VariationDirection {
    /// dμ_M-zero-mean conformal direction ν(z).
    pub nu: Vec<f64>,
    /// Second-order field with ∫(ψ + nν²)dμ_M = 0; default ψ = −nν².
    pub psi: Vec<f64>,
}

impl VariationDirection {
    pub fn new(base: &BaseFields, raw_nu: &[f64], dims: usize) -> Self {
        let nu = base.project_zero_mean(raw_nu);
        let psi = nu.iter().map(|v| -(dims as f64) * v * v).collect();
        Self { nu, psi }
    }
}

#[derive(Debug, Clone)]
pub struct FunctionalReport {
    pub total_k: f64,
    pub total_r: f64,
    /// The ϑ-mean representations ∫κ_ϑ dμ and ∫ρ_ϑ dμ of the same totals.
    pub total_k_theta: f64,
    pub total_r_theta: f64,
    pub vol_m: f64,
    pub kappa_mean: f64,
    pub rho_mean: f64,
    /// Max deviation of κ_ϑ (resp. ρ_ϑ) from its mean.
    pub kappa_theta_dev: f64,
    pub rho_theta_dev: f64,
    pub lambda1_h: f64,
    pub lambda1_g: f64,
    /// Stability in the sense κ ≤ λ₁^h (resp. ρ ≤ λ₁^g), meaningful for
    /// critical Kähler metrics.
    pub stable_k: bool,
    pub stable_r: bool,
}

pub fn total_curvatures(
    spec: &FinslerMetricSpec,
    grid: &Arc<TorusGrid>,
    rule: &FiberRule,
) -> Result<(FunctionalReport, BaseFields)> {
    let base = assemble_base_fields(spec, grid, rule, true)?;
    let vol = base.vol_m();
    let total_k = base.integrate_mu(&base.kappa);
    let total_r = base.integrate_mu(&base.rho);
    let total_k_theta = base.integrate_mu(&base.kappa_theta);
    let total_r_theta = base.integrate_mu(&base.rho_theta);
    let kappa_mean = total_k / vol;
    let rho_mean = total_r / vol;
    let kt_mean = total_k_theta / vol;
    let rt_mean = total_r_theta / vol;
    let kappa_theta_dev = base
        .kappa_theta
        .iter()
        .map(|k| (k - kt_mean).abs())
        .fold(0.0f64, f64::max);
    let rho_theta_dev = base
        .rho_theta
        .iter()
        .map(|r| (r - rt_mean).abs())
        .fold(0.0f64, f64::max);
    let n = spec.dims;
    let h_form = HermitianQuadForm {
        grid: grid.clone(),
        weight: base.mu.clone(),
        coeff: base.h_up.clone(),
        scale: 1.0,
    };
    let g_form = HermitianQuadForm {
        grid: grid.clone(),
        weight: base.mu.clone(),
        coeff: base.g_up.clone(),
        scale: 1.0,
    };
    let (lambda1_h, _) = rayleigh_lambda1(&h_form, 200, 0xabc)?;
    let (lambda1_g, _) = rayleigh_lambda1(&g_form, 200, 0xabc)?;
    let _ = n;
    let report = FunctionalReport {
        total_k,
        total_r,
        total_k_theta,
        total_r_theta,
        vol_m: vol,
        kappa_mean,
        rho_mean,
        kappa_theta_dev,
        rho_theta_dev,
        lambda1_h,
        lambda1_g,
        stable_k: kappa_mean <= lambda1_h + 1e-9,
        stable_r: rho_mean <= lambda1_g + 1e-9,
    };
    Ok((report, base))
}

/// Closed-form first variation (d/dt)𝒦(e^{tν}G)|₀ = (n−1)∫ν κ_ϑ dμ_M
/// (resp. ℛ with ρ_ϑ). ν must be dμ_M-zero-mean.
pub fn first_variation(
    spec: &FinslerMetricSpec,
    base: &BaseFields,
    nu: &[f64],
    which: TotalCurvature,
) -> Result<f64> {
    let mean = base.integrate_mu(nu) / base.vol_m();
    if mean.abs() > 1e-10 {
        return Err(Error::Constraint(format!(
            "variation direction must be dμ_M-zero-mean (mean {mean:.3e}); project first"
        )));
    }
    let field = match which {
        TotalCurvature::Holomorphic => &base.kappa_theta,
        TotalCurvature::Ricci => &base.rho_theta,
    };
    let prod: Vec<f64> = nu.iter().zip(field).map(|(a, b)| a * b).collect();
    Ok((spec.dims as f64 - 1.0) * base.integrate_mu(&prod))
}

/// Closed-form second variation for a critical Kähler metric:
/// (n−1)∫(h^{ij̄}ν_iν_j̄ − ν²κ)dμ_M (resp. g and ρ). Errors when the metric
/// has torsion above tolerance — the formula assumes ϑ = 0.
pub fn second_variation(
    spec: &FinslerMetricSpec,
    base: &BaseFields,
    nu: &[f64],
    which: TotalCurvature,
) -> Result<f64> {
    let grid8 = base.grid.clone();
    let verdict = crate::kahler::kahler_check(spec, &grid8, 60, 0x2b, 1e-8)?;
    if !verdict.is_kahler {
        return Err(Error::Constraint(format!(
            "second variation requires a Kähler metric (torsion max {:.3e})",
            verdict.torsion_max
        )));
    }
    let mean = base.integrate_mu(nu) / base.vol_m();
    if mean.abs() > 1e-10 {
        return Err(Error::Constraint("variation direction must be zero-mean".into()));
    }
    let (coeff, curv) = match which {
        TotalCurvature::Holomorphic => (&base.h_up, &base.kappa),
        TotalCurvature::Ricci => (&base.g_up, &base.rho),
    };
    let form = HermitianQuadForm {
        grid: base.grid.clone(),
        weight: base.mu.clone(),
        coeff: coeff.clone(),
        scale: 1.0,
    };
    let dirichlet = form.value(nu);
    let nk: Vec<f64> = nu.iter().zip(curv).map(|(v, k)| v * v * k).collect();
    let potential = base.integrate_mu(&nk);
    Ok((spec.dims as f64 - 1.0) * (dirichlet - potential))
}

/// Total functional of e^{f}G for a grid field f, used by the
/// finite-difference variation oracles.
pub fn total_of_deformed(
    spec: &FinslerMetricSpec,
    grid: &Arc<TorusGrid>,
    rule: &FiberRule,
    f_field: &[f64],
    which: TotalCurvature,
) -> Result<f64> {
    let field = Arc::new(SpectralField::new(grid.clone(), f_field.to_vec()));
    let hat = spec.clone().conformal_field(field);
    let base = assemble_base_fields(&hat, grid, rule, true)?;
    Ok(match which {
        TotalCurvature::Holomorphic => base.integrate_mu(&base.kappa),
        TotalCurvature::Ricci => base.integrate_mu(&base.rho),
    })
}

/// Richardson-extrapolated centered differences of t ↦ total(e^{f(t)}G)
/// with f(t) = tν (+ ½t²ψ for the second derivative).
pub struct FdVariation {
    pub first: f64,
    pub second: f64,
}

pub fn fd_variation(
    spec: &FinslerMetricSpec,
    grid: &Arc<TorusGrid>,
    rule: &FiberRule,
    dir: &VariationDirection,
    which: TotalCurvature,
) -> Result<FdVariation> {
    let f_at = |t: f64| -> Vec<f64> {
        dir.nu
            .iter()
            .zip(&dir.psi)
            .map(|(nu, psi)| t * nu + 0.5 * t * t * psi)
            .collect()
    };
    let total_at = |t: f64| -> Result<f64> {
        total_of_deformed(spec, grid, rule, &f_at(t), which)
    };
    let t1 = 1e-3;
    let t2 = 5e-4;
    let f0 = total_at(0.0)?;
    let fp1 = total_at(t1)?;
    let fm1 = total_at(-t1)?;
    let fp2 = total_at(t2)?;
    let fm2 = total_at(-t2)?;
    let d1a = (fp1 - fm1) / (2.0 * t1);
    let d1b = (fp2 - fm2) / (2.0 * t2);
    let first = (4.0 * d1b - d1a) / 3.0;
    let d2a = (fp1 - 2.0 * f0 + fm1) / (t1 * t1);
    let d2b = (fp2 - 2.0 * f0 + fm2) / (t2 * t2);
    let second = (4.0 * d2b - d2a) / 3.0;
    Ok(FdVariation { first, second })
}

/// Default desk-scale rule shared by the pipelines.
pub fn default_rule(n: usize) -> FiberRule {
    build_fiber_rule(n, 16, 32).expect("default fiber rule")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn flat_base(res: usize) -> (FinslerMetricSpec, Arc<TorusGrid>, FiberRule) {
        let spec = FinslerMetricSpec::flat(2);
        let grid = Arc::new(TorusGrid::new(2, res, vec![1.0; 4]).unwrap());
        let rule = build_fiber_rule(2, 8, 16).unwrap();
        (spec, grid, rule)
    }

    #[test]
    fn quad_form_gradient_matches_directional_derivative() {
        let (_, grid, _) = flat_base(4);
        let n = grid.n;
        let len = grid.len();
        let mut rng = SplitMix64::new(5);
        // Random Hermitian positive coefficients and weight.
        let mut coeff = vec![C64::new(0.0, 0.0); len * n * n];
        let mut weight = vec![0.0; len];
        for idx in 0..len {
            let a = 1.0 + 0.3 * rng.next_signed();
            let b = 1.0 + 0.3 * rng.next_signed();
            let off = C64::new(0.2 * rng.next_signed(), 0.2 * rng.next_signed());
            coeff[idx * 4] = C64::new(a, 0.0);
            coeff[idx * 4 + 1] = off;
            coeff[idx * 4 + 2] = off.conj();
            coeff[idx * 4 + 3] = C64::new(b, 0.0);
            weight[idx] = 1.0 + 0.5 * rng.next_f64();
        }
        let form = HermitianQuadForm {
            grid: grid.clone(),
            weight,
            coeff,
            scale: 0.7,
        };
        let phi: Vec<f64> = (0..len).map(|_| rng.next_signed()).collect();
        let dir: Vec<f64> = (0..len).map(|_| rng.next_signed()).collect();
        let grad = form.gradient(&phi);
        let ip: f64 = grad.iter().zip(&dir).map(|(a, b)| a * b).sum();
        let eps = 1e-6;
        let plus: Vec<f64> = phi.iter().zip(&dir).map(|(p, d)| p + eps * d).collect();
        let minus: Vec<f64> = phi.iter().zip(&dir).map(|(p, d)| p - eps * d).collect();
        let fd = (form.value(&plus) - form.value(&minus)) / (2.0 * eps);
        assert_relative_eq!(ip, fd, max_relative = 1e-7);
    }

    #[test]
    fn lambda1_flat_equals_pi_squared() {
        // Constant h^{ij̄} = δ with unit weight: λ₁ = π² on the unit torus.
        let (_, grid, _) = flat_base(8);
        let len = grid.len();
        let mut coeff = vec![C64::new(0.0, 0.0); len * 4];
        for idx in 0..len {
            coeff[idx * 4] = C64::new(1.0, 0.0);
            coeff[idx * 4 + 3] = C64::new(1.0, 0.0);
        }
        let form = HermitianQuadForm {
            grid: grid.clone(),
            weight: vec![1.0; len],
            coeff,
            scale: 1.0,
        };
        let (l1, _phi) = rayleigh_lambda1(&form, 200, 7).unwrap();
        assert_relative_eq!(l1, std::f64::consts::PI.powi(2), max_relative = 1e-8);
    }

    #[test]
    fn flat_totals_vanish_and_stability_holds() {
        let (spec, grid, rule) = flat_base(4);
        let (rep, _) = total_curvatures(&spec, &grid, &rule).unwrap();
        assert!(rep.total_k.abs() < 1e-10);
        assert!(rep.total_r.abs() < 1e-10);
        assert!(rep.stable_k && rep.stable_r);
        assert_relative_eq!(rep.lambda1_h, std::f64::consts::PI.powi(2), max_relative = 1e-6);
        assert_relative_eq!(
            rep.lambda1_g,
            2.0 * std::f64::consts::PI.powi(2),
            max_relative = 1e-6
        );
    }

    #[test]
    fn first_variation_zero_on_flat() {
        let (spec, grid, rule) = flat_base(4);
        let base = assemble_base_fields(&spec, &grid, &rule, true).unwrap();
        let raw = grid.sample_expr(&crate::expr::parse("sin(2*pi*x1)").unwrap()).unwrap();
        let dir = VariationDirection::new(&base, &raw, 2);
        let fv = first_variation(&spec, &base, &dir.nu, TotalCurvature::Holomorphic).unwrap();
        assert!(fv.abs() < 1e-12);
    }

    #[test]
    fn first_variation_requires_zero_mean() {
        let (spec, grid, rule) = flat_base(4);
        let base = assemble_base_fields(&spec, &grid, &rule, true).unwrap();
        let raw = vec![1.0; grid.len()];
        assert!(matches!(
            first_variation(&spec, &base, &raw, TotalCurvature::Ricci),
            Err(Error::Constraint(_))
        ));
    }

    #[test]
    fn second_variation_positive_on_flat() {
        let (spec, grid, rule) = flat_base(4);
        let base = assemble_base_fields(&spec, &grid, &rule, true).unwrap();
        let raw = grid
            .sample_expr(&crate::expr::parse("cos(2*pi*y2) + 0.3*sin(2*pi*x1)").unwrap())
            .unwrap();
        let dir = VariationDirection::new(&base, &raw, 2);
        let sv = second_variation(&spec, &base, &dir.nu, TotalCurvature::Holomorphic).unwrap();
        assert!(sv > 0.0);
    }

    #[test]
    fn second_variation_rejects_non_kahler() {
        let f = crate::expr::parse("0.2*sin(2*pi*x1)").unwrap();
        let spec = FinslerMetricSpec::flat(2).conformal(f);
        let grid = Arc::new(TorusGrid::new(2, 4, vec![1.0; 4]).unwrap());
        let rule = build_fiber_rule(2, 8, 16).unwrap();
        let base = assemble_base_fields(&spec, &grid, &rule, true).unwrap();
        let nu = base.project_zero_mean(&grid.sample_expr(&crate::expr::parse("sin(2*pi*x1)").unwrap()).unwrap());
        assert!(matches!(
            second_variation(&spec, &base, &nu, TotalCurvature::Holomorphic),
            Err(Error::Constraint(_))
        ));
    }
}
