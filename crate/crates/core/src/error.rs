//! Error types shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Evaluation requested at `v = 0`, outside the slit tangent bundle.
    #[error("evaluation at v = 0 is outside the slit tangent bundle")]
    Domain,

    /// A metric expression is not smooth at the evaluation point.
    #[error("expression singular at evaluation point: {subexpr}")]
    Singularity { subexpr: String },

    /// A jet was queried beyond its truncation order.
    #[error("derivative order {requested} exceeds jet order {available}")]
    Order { requested: usize, available: usize },

    /// Levi matrix failed positivity.
    #[error("pseudoconvexity failure: min Levi eigenvalue {min_eig:.3e} at z={z:?}, v={v:?}")]
    Pseudoconvexity {
        min_eig: f64,
        z: Vec<(f64, f64)>,
        v: Vec<(f64, f64)>,
    },

    /// An induced field lost positive definiteness on the grid.
    #[error("geometry failure: {what} not positive definite at grid point {index}")]
    Geometry { what: String, index: usize },

    /// An integrand violated the projective-invariance contract.
    #[error("integrand not projectively invariant: |F(z,\u{3bb}v)-F(z,v)| = {deviation:.3e}")]
    ContractViolation { deviation: f64 },

    /// A caller-side constraint (zero mean, positivity, Kähler precondition) failed.
    #[error("constraint violated: {0}")]
    Constraint(String),

    /// An iterative solver did not converge.
    #[error("{what} failed to converge in {iterations} iterations (residual {residual:.3e})")]
    Convergence {
        what: String,
        iterations: usize,
        residual: f64,
    },

    /// Configuration was syntactically valid but semantically unusable.
    #[error("configuration error: {0}")]
    Config(String),

    /// Expression parse failure.
    #[error("parse error at byte {at}: {msg}")]
    Parse { at: usize, msg: String },
}
