//! Floquet analysis, stabilizability certification and periodic feedback
//! synthesis for linear time-periodic systems
//!
//! The crate works with finite-dimensional systems
//!
//! ```text
//! y'(t) = M(t) y(t) + D(t) u(t),        M, D  T-periodic,
//! ```
//!
//! controls constrained to a subspace `Z` of the input space. It computes the
//! one-period (Poincare) map and its Floquet multipliers, splits the state
//! space into unstable/stable invariant subspaces two independent ways
//! (ordered Schur and a resolvent contour integral), evaluates three
//! equivalent stabilizability certificates built on attainable-subspace
//! Gramians, and constructs a T-periodic stabilizing feedback law via a
//! deadbeat stage, a finite-horizon Riccati stage, and a one-period Riccati
//! fixed point, verified by closed-loop Floquet analysis.

pub mod coeffs;
pub mod error;
pub mod grid;
pub mod jsonfmt;
pub mod linalg;
pub mod propagator;
pub mod schema;
pub mod schur;
pub mod spectral;
pub mod system;

pub use coeffs::{MatrixCurve, Side};
pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use propagator::{adjoint_propagate, mild_solution, monodromy, propagate, transition, Monodromy, Trajectory};
pub use spectral::{
    dual_projector, projector_at, riesz_projection, split, stable_decay_fit, SpectralSplit,
};
pub use system::{build_system, project_control, ControlSubspace, PeriodicSystem, SampledControl};

pub mod synthesis;
pub use synthesis::{
    finite_horizon_riccati, horizon_and_epsilon, periodic_riccati, synthesize, verify_law,
    ClosedLoopReport, FeedbackLaw, GainCurve,
};

pub mod attainability;
pub use attainability::{
    attainable_basis, certify_all, certify_b, certify_c, certify_d, finite_reduction, gramian,
    recursion_check, Gramian, StabilizabilityCertificate,
};

pub mod scenarios;
