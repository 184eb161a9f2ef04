//! Metric families and axiom validation.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{self, Expr, FieldJetSource, JetEvaluator, Kind};
use crate::jets::JetContext;
use crate::linalg::CMat;
use crate::rng::SplitMix64;
use crate::C64;

/// Declarative description of a complex Finsler metric G(z, v) over a torus.
#[derive(Debug, Clone)]
pub struct FinslerMetricSpec {
    pub dims: usize,
    /// Period of each real axis (x1, y1, …, xn, yn).
    pub periods: Vec<f64>,
    pub family: MetricFamily,
}

#[derive(Debug, Clone)]
pub enum MetricFamily {
    /// G = Σ h_ii |v_i|² + Σ_{i<j} 2 Re(h_ij v_i v̄_j); `h` holds the
    /// diagonal and upper triangle, row-major.
    Hermitian { h: Vec<Vec<Expr>> },
    /// G = |v|² + λ Σ_i |v_i|⁴ / |v|²
    QuarticPerturbation { lambda: f64 },
    /// G = a|v1|² + b|v2|² + λ c |v1|²|v2|² / (a|v1|² + b|v2|²); n = 2 only.
    /// The denominator keeps the family homogeneous and smooth off v = 0.
    ZTwisted { a: Expr, b: Expr, c: Expr, lambda: f64 },
    /// e^f · inner with f a real expression of z.
    Conformal { f: Expr, inner: Box<FinslerMetricSpec> },
    /// e^u · inner with u a grid-backed real field (recovered conformal
    /// factors, Yamabe deformations).
    ConformalField {
        field: Arc<dyn FieldJetSource>,
        inner: Box<FinslerMetricSpec>,
    },
    /// Free-form expression; must type-check as real-valued.
    Expression { g: Expr },
}

impl FinslerMetricSpec {
    pub fn flat(dims: usize) -> Self {
        let h = (0..dims)
            .map(|i| (i..dims).map(|j| Expr::Const(if i == j { 1.0 } else { 0.0 })).collect())
            .collect();
        Self {
            dims,
            periods: vec![1.0; 2 * dims],
            family: MetricFamily::Hermitian { h },
        }
    }

    pub fn hermitian(dims: usize, h: Vec<Vec<Expr>>) -> Self {
        Self {
            dims,
            periods: vec![1.0; 2 * dims],
            family: MetricFamily::Hermitian { h },
        }
    }

    pub fn quartic(dims: usize, lambda: f64) -> Self {
        Self {
            dims,
            periods: vec![1.0; 2 * dims],
            family: MetricFamily::QuarticPerturbation { lambda },
        }
    }

    pub fn z_twisted(a: Expr, b: Expr, c: Expr, lambda: f64) -> Self {
        Self {
            dims: 2,
            periods: vec![1.0; 4],
            family: MetricFamily::ZTwisted { a, b, c, lambda },
        }
    }

    /// e^f · self for an expression factor.
    pub fn conformal(self, f: Expr) -> Self {
        Self {
            dims: self.dims,
            periods: self.periods.clone(),
            family: MetricFamily::Conformal {
                f,
                inner: Box::new(self),
            },
        }
    }

    /// e^u · self for a grid-backed factor.
    pub fn conformal_field(self, field: Arc<dyn FieldJetSource>) -> Self {
        Self {
            dims: self.dims,
            periods: self.periods.clone(),
            family: MetricFamily::ConformalField {
                field,
                inner: Box::new(self),
            },
        }
    }

    pub fn expression(dims: usize, g: Expr) -> Self {
        Self {
            dims,
            periods: vec![1.0; 2 * dims],
            family: MetricFamily::Expression { g },
        }
    }

    pub fn with_periods(mut self, periods: Vec<f64>) -> Self {
        self.periods = periods;
        self
    }

    /// Expression tree plus the registry of grid-backed fields it mentions.
    pub fn build_tree(&self) -> Result<(Expr, Vec<Arc<dyn FieldJetSource>>)> {
        let mut fields = Vec::new();
        let tree = self.tree_with(&mut fields)?;
        if expr::kind_of(&tree)? != Kind::Real {
            return Err(Error::Config(
                "metric expression must be real-valued".into(),
            ));
        }
        Ok((tree, fields))
    }

    fn tree_with(&self, fields: &mut Vec<Arc<dyn FieldJetSource>>) -> Result<Expr> {
        let n = self.dims;
        if n < 2 {
            return Err(Error::Config("complex dimension must be at least 2".into()));
        }
        Ok(match &self.family {
            MetricFamily::Hermitian { h } => {
                if h.len() != n || h.iter().enumerate().any(|(i, row)| row.len() != n - i) {
                    return Err(Error::Config(
                        "hermitian family needs the diagonal and upper triangle of h".into(),
                    ));
                }
                let mut acc: Option<Expr> = None;
                for i in 0..n {
                    for j in i..n {
                        let entry = h[i][j - i].clone();
                        let term = if i == j {
                            if expr::kind_of(&entry)? != Kind::Real {
                                return Err(Error::Config(format!(
                                    "diagonal entry h[{i}][{i}] must be real-valued"
                                )));
                            }
                            entry.mul(Expr::V(i).abs2())
                        } else {
                            // 2 Re(h_ij v_i v̄_j)
                            entry
                                .mul(Expr::V(i))
                                .mul(Expr::V(j).conj())
                                .re()
                                .scaled(2.0)
                        };
                        acc = Some(match acc {
                            None => term,
                            Some(a) => a.add(term),
                        });
                    }
                }
                acc.unwrap()
            }
            MetricFamily::QuarticPerturbation { lambda } => {
                let norm2 = (0..n)
                    .map(|i| Expr::V(i).abs2())
                    .reduce(Expr::add)
                    .unwrap();
                let quart = (0..n)
                    .map(|i| Expr::V(i).abs2().powi(2))
                    .reduce(Expr::add)
                    .unwrap();
                norm2
                    .clone()
                    .add(quart.scaled(*lambda).div(norm2))
            }
            MetricFamily::ZTwisted { a, b, c, lambda } => {
                if n != 2 {
                    return Err(Error::Config("z_twisted family is defined for n = 2".into()));
                }
                for (name, e) in [("a", a), ("b", b), ("c", c)] {
                    if expr::kind_of(e)? != Kind::Real {
                        return Err(Error::Config(format!(
                            "z_twisted coefficient {name} must be real-valued"
                        )));
                    }
                }
                let u1 = Expr::V(0).abs2();
                let u2 = Expr::V(1).abs2();
                let den = a.clone().mul(u1.clone()).add(b.clone().mul(u2.clone()));
                let num = c.clone().mul(u1.mul(u2)).scaled(*lambda);
                den.clone().add(num.div(den))
            }
            MetricFamily::Conformal { f, inner } => {
                if expr::kind_of(f)? != Kind::Real {
                    return Err(Error::Config("conformal factor must be real-valued".into()));
                }
                let inner_tree = inner.tree_with(fields)?;
                f.clone().exp().mul(inner_tree)
            }
            MetricFamily::ConformalField { field, inner } => {
                let id = fields.len();
                fields.push(field.clone());
                let inner_tree = inner.tree_with(fields)?;
                Expr::Field(id).exp().mul(inner_tree)
            }
            MetricFamily::Expression { g } => g.clone(),
        })
    }

    /// Plain evaluation of G at (z, v).
    pub fn eval(&self, z: &[C64], v: &[C64]) -> Result<f64> {
        let (tree, fields) = self.build_tree()?;
        Ok(expr::eval_complex(&tree, z, v, &fields, None)?.re)
    }

    /// Compiled jet evaluator against a context.
    pub fn evaluator(&self, ctx: Arc<JetContext>) -> Result<JetEvaluator> {
        if ctx.n != self.dims {
            return Err(Error::Config(format!(
                "jet context dims {} do not match metric dims {}",
                ctx.n, self.dims
            )));
        }
        let (tree, fields) = self.build_tree()?;
        JetEvaluator::new(ctx, &tree, fields)
    }

    /// True when the metric is v-quadratic (Hermitian, possibly conformally
    /// scaled), which several reductions exploit in tests.
    pub fn is_hermitian_shape(&self) -> bool {
        match &self.family {
            MetricFamily::Hermitian { .. } => true,
            MetricFamily::Conformal { inner, .. } | MetricFamily::ConformalField { inner, .. } => {
                inner.is_hermitian_shape()
            }
            _ => false,
        }
    }
}

/// Deterministic (z, v) sample stream over the metric's torus.
pub fn sample_points(
    spec: &FinslerMetricSpec,
    count: usize,
    seed: u64,
) -> Vec<(Vec<C64>, Vec<C64>)> {
    let n = spec.dims;
    let mut rng = SplitMix64::new(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let z: Vec<C64> = (0..n)
            .map(|i| {
                C64::new(
                    spec.periods[2 * i] * rng.next_f64(),
                    spec.periods[2 * i + 1] * rng.next_f64(),
                )
            })
            .collect();
        let v: Vec<C64> = (0..n)
            .map(|_| C64::new(rng.next_signed(), rng.next_signed()))
            .collect();
        let norm: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm < 0.2 {
            continue;
        }
        out.push((z, v));
    }
    out
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub samples: usize,
    pub min_levi_eigenvalue: f64,
    pub max_homogeneity_residual: f64,
    pub min_g: f64,
    /// Witness of a pseudoconvexity failure, when one exists.
    pub witness: Option<(Vec<C64>, Vec<C64>)>,
    pub pass: bool,
}

/// Check axioms (I)-(IV) on a deterministic pseudo-random sample:
/// positivity of G, |λ|²-homogeneity at λ ∈ {2, 1+i, e^i}, and positive
/// definiteness of the Levi matrix.
pub fn validate_metric(
    spec: &FinslerMetricSpec,
    sample_count: usize,
    seed: u64,
) -> Result<ValidationReport> {
    if sample_count == 0 {
        return Err(Error::Config("sample_count must be at least 1".into()));
    }
    let ctx = JetContext::shared(spec.dims, 2);
    let ev = spec.evaluator(ctx.clone())?;
    let mut ws = ev.make_workspace();
    let (tree, fields) = spec.build_tree()?;

    let lambdas = [
        C64::new(2.0, 0.0),
        C64::new(1.0, 1.0),
        C64::new(1.0f64.cos(), 1.0f64.sin()),
    ];

    let mut min_eig = f64::INFINITY;
    let mut max_hom = 0.0f64;
    let mut min_g = f64::INFINITY;
    let mut witness = None;

    for (z, v) in sample_points(spec, sample_count, seed) {
        let g = expr::eval_complex(&tree, &z, &v, &fields, None)?.re;
        min_g = min_g.min(g);
        for lam in lambdas {
            let vl: Vec<C64> = v.iter().map(|&c| lam * c).collect();
            let gl = expr::eval_complex(&tree, &z, &vl, &fields, None)?.re;
            let expect = lam.norm_sqr() * g;
            max_hom = max_hom.max((gl - expect).abs() / expect.abs().max(1e-300));
        }
        ev.eval(&mut ws, &z, &v, None)?;
        let jet = crate::jets::WirtingerJet::from_real(&ctx, &ev.result_real(&ws));
        let levi = levi_matrix(&ctx, &jet);
        let eig = levi.min_hermitian_eigenvalue();
        if eig < min_eig {
            min_eig = eig;
            if eig <= 0.0 {
                witness = Some((z.clone(), v.clone()));
            }
        }
    }

    let pass = min_g > 0.0 && min_eig > 0.0 && max_hom <= 1e-12;
    Ok(ValidationReport {
        samples: sample_count,
        min_levi_eigenvalue: min_eig,
        max_homogeneity_residual: max_hom,
        min_g,
        witness,
        pass,
    })
}

/// Levi matrix G_{ij̄} from a jet.
pub fn levi_matrix(ctx: &JetContext, jet: &crate::jets::WirtingerJet) -> CMat {
    let n = ctx.n;
    CMat::from_fn(n, |i, j| {
        let idx = crate::jets::WirtingerIndex::new(n).v(i).vbar(j);
        jet.partial(&idx).unwrap()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn flat_metric_validates_with_unit_levi() {
        let spec = FinslerMetricSpec::flat(2);
        let rep = validate_metric(&spec, 50, 7).unwrap();
        assert!(rep.pass);
        assert_relative_eq!(rep.min_levi_eigenvalue, 1.0, epsilon = 1e-10);
        assert!(rep.max_homogeneity_residual <= 1e-12);
    }

    #[test]
    fn quartic_perturbation_small_lambda_passes() {
        let spec = FinslerMetricSpec::quartic(2, 0.1);
        let rep = validate_metric(&spec, 500, 11).unwrap();
        assert!(rep.pass, "report: {rep:?}");
        assert!(rep.min_levi_eigenvalue > 0.0);
    }

    #[test]
    fn quartic_perturbation_large_negative_lambda_fails() {
        let spec = FinslerMetricSpec::quartic(2, -0.9);
        let rep = validate_metric(&spec, 500, 11).unwrap();
        assert!(!rep.pass);
        assert!(rep.min_levi_eigenvalue <= 0.0);
        assert!(rep.witness.is_some());
    }

    #[test]
    fn z_twisted_homogeneity_is_exact() {
        let a = expr::parse("exp(0.1*sin(2*pi*x1))").unwrap();
        let spec = FinslerMetricSpec::z_twisted(a, Expr::Const(1.0), Expr::Const(1.0), 0.05);
        let rep = validate_metric(&spec, 200, 3).unwrap();
        assert!(rep.pass, "report: {rep:?}");
    }

    #[test]
    fn hermitian_family_requires_real_diagonal() {
        let h = vec![vec![Expr::Z(0), Expr::Const(0.0)], vec![Expr::Const(1.0)]];
        let spec = FinslerMetricSpec::hermitian(2, h);
        assert!(spec.build_tree().is_err());
    }

    #[test]
    fn conformal_scaling_multiplies_g() {
        let f = expr::parse("0.3*cos(2*pi*x2)").unwrap();
        let spec = FinslerMetricSpec::flat(2).conformal(f);
        let z = vec![C64::new(0.0, 0.0), C64::new(0.25, 0.0)];
        let v = vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0)];
        let g = spec.eval(&z, &v).unwrap();
        let expect = (0.3f64 * (std::f64::consts::PI / 2.0).cos()).exp() * 2.0;
        assert_relative_eq!(g, expect, epsilon = 1e-13);
    }
}
