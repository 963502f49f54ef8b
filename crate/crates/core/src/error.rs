use thiserror::Error;

/// Errors produced by the analysis and synthesis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite coefficient sample at t = {t}")]
    NonFiniteCoefficient { t: f64 },

    #[error("period must be positive, got {0}")]
    InvalidPeriod(f64),

    #[error("samples_per_period must be at least 8, got {0}")]
    GridTooCoarse(usize),

    #[error("coefficient jump at t = {t} does not lie on a grid node")]
    JumpOffGrid { t: f64 },

    #[error("coefficient fails the periodicity check at t = {t} (residual {residual:.3e})")]
    NotPeriodic { t: f64, residual: f64 },

    #[error("backward propagation requested: t = {t} < s = {s}")]
    BackwardSpan { s: f64, t: f64 },

    #[error("control grid does not cover [{s}, {t_end}]")]
    ControlCoverage { s: f64, t_end: f64 },

    #[error("control sample outside the control subspace (residual {residual:.3e})")]
    ControlOutsideSubspace { residual: f64 },

    #[error("control basis is not orthonormal (residual {residual:.3e})")]
    BasisNotOrthonormal { residual: f64 },

    #[error("control basis has {m0} columns but the input dimension is {n_u}")]
    BasisTooLarge { m0: usize, n_u: usize },

    #[error("real Schur decomposition did not converge")]
    SchurFailure,

    #[error("Schur reordering failed: {0}")]
    ReorderFailure(String),

    #[error("contour radius {radius} is not inside the spectral gap (closest multiplier modulus {closest})")]
    RadiusOutsideGap { radius: f64, closest: f64 },

    #[error("resolvent is numerically singular at a quadrature node")]
    SingularResolvent,

    #[error("transition matrix is numerically singular (condition estimate {cond:.3e})")]
    SingularTransition { cond: f64 },

    #[error("H2 trivial: the stable subspace is zero-dimensional")]
    TrivialStableSubspace,

    #[error("eigenspace numerically empty for multiplier {re}+{im}i")]
    EmptyEigenspace { re: f64, im: f64 },

    #[error("not stabilizable w.r.t. Z: {detail}")]
    NotStabilizable { detail: String },

    #[error("certificate margins undecidable: {detail}")]
    Undecidable { detail: String },

    #[error("deadbeat reachability Gramian is not positive definite (contradicts certificate)")]
    DeadbeatGramianSingular,

    #[error("horizon/epsilon infeasible: Riccati blow-up (entry magnitude {magnitude:.3e})")]
    RiccatiBlowup { magnitude: f64 },

    #[error("periodic Riccati iteration did not converge in {iterations} sweeps (last residuals {trace:?})")]
    RiccatiNoConvergence { iterations: usize, trace: Vec<f64> },

    #[error("periodic Riccati iteration diverged (consistent with non-stabilizability)")]
    RiccatiDivergence,

    #[error("synthesis verification failed: closed-loop spectral radius {radius}")]
    SynthesisVerificationFailed { radius: f64 },

    #[error("feedback law period {law_period} is not an integer multiple of the system period {system_period}")]
    PeriodMismatch { law_period: f64, system_period: f64 },

    #[error("borderline Floquet multipliers (within 1e-6 of the unit circle); refusing synthesis without an override")]
    BorderlineRefusal,

    #[error("unsupported: multiplier modulus {modulus:.3e} exceeds 1e8")]
    ExtremeInstability { modulus: f64 },

    #[error("propagation produced non-finite entries (step size too large for the fastest mode?)")]
    NonFinitePropagation,

    #[error("synthesis horizon N0 = {n0} exceeds the supported cap {cap}")]
    HorizonCap { n0: usize, cap: usize },

    #[error("random system target unreachable after {attempts} attempts")]
    TargetUnreachable { attempts: usize },

    #[error("invalid control window: [{a}, {b}] must be a nonempty subinterval of (0, 1)")]
    InvalidWindow { a: f64, b: f64 },

    #[error("scenario parse error: {0}")]
    ScenarioParse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
