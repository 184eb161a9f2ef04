//! Truncated multivariate Taylor (jet) arithmetic and Wirtinger conversion.
//!
//! Derivatives are computed by expanding expressions in truncated Taylor
//! arithmetic over the 4n real coordinates underlying (z, v), then applying
//! the linear Wirtinger basis change. This handles |·|²-type non-holomorphic
//! expressions uniformly and is exact on polynomial inputs up to the
//! truncation order.

pub mod poly;
pub mod table;
pub mod wirtinger;

pub use poly::{CPoly, Poly};
pub use table::{JetTable, Lane, TableSet};
pub use wirtinger::{ConversionProgram, JetContext, WirtingerIndex, WirtingerJet};
