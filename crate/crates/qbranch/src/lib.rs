//! Calculus for Q-valued maps on branched disks.
//!
//! The crate provides the metric space of unordered Q-tuples with its
//! optimal-matching distance, a polar discretization of the Q̄-fold branched
//! disk, boundary-trace decomposition into irreducible pieces, the Fourier
//! harmonic competitor with closed-form energies, frequency-function
//! diagnostics (monotonicity, H' identity, Poincaré checks, decay fits) and
//! the blow-up rescaling machinery, together with generators of exact
//! minimizers and a descent-based minimizer used as an independent check.

pub mod assignment;
pub mod blowup;
pub mod competitor;
pub mod error;
pub mod field;
pub mod frequency;
pub mod grid;
pub mod io;
pub mod multipoint;
pub mod oracle;
pub mod trace;

pub use error::{Error, Result};
pub use field::MultiField;
pub use grid::BranchedGrid;
pub use multipoint::{g_distance, match_selection, Matching, QPoint};
pub use trace::{BoundaryTrace, TraceDecomposition};

/// Default tolerance under which two distinct matchings count as a tie.
pub const EPS_TIE: f64 = 1e-9;
