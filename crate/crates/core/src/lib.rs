//! Numerical engine for complex Finsler geometry on compact complex tori.
//!
//! The crate evaluates the full pipeline from a metric declaration down to
//! global variational quantities:
//!
//! * [`jets`] — truncated multivariate Taylor arithmetic over the real
//!   coordinates underlying `(z, v)`, converted to Wirtinger partials; this
//!   is the single source of every derivative in the system.
//! * [`expr`] — the expression language in which metric families and
//!   conformal factors are declared, with plain and jet evaluation.
//! * [`metric`] — built-in metric families and axiom validation.
//! * [`geometry`] — pointwise connection data: Levi matrix, nonlinear
//!   connection, Chern-Finsler coefficients, horizontal torsion.
//! * [`curvature`] — Kobayashi curvature, holomorphic (Ricci) curvature,
//!   the hh̄-curvature tensor and conformal transformation laws.
//! * [`fiber`] — quadrature over the projectivized fibers and the induced
//!   objects on the base: volumes, mean curvatures, induced metrics.
//! * [`grid`] — periodic grids with spectral derivative operators.
//! * [`kahler`] — Kähler/weakly-Kähler/conformally-Kähler decision
//!   procedures and conformal factor recovery.
//! * [`functionals`] — total curvature functionals, first/second conformal
//!   variations, Rayleigh-quotient eigenvalues, stability verdicts.
//! * [`yamabe`] — the Yamabe-type minimization for constant ϑ-mean
//!   holomorphic Ricci curvature and the associated conformal invariants.
//! * [`report`] — serializable result payloads shared with the CLI.

pub mod curvature;
pub mod error;
pub mod expr;
pub mod fiber;
pub mod functionals;
pub mod geometry;
pub mod grid;
pub mod jets;
pub mod kahler;
pub mod linalg;
pub mod metric;
pub mod report;
pub mod rng;
pub mod yamabe;

pub use error::{Error, Result};
pub use expr::Expr;



pub use jets::{JetContext, WirtingerIndex, WirtingerJet};


/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
