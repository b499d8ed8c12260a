use crate::numerics::ode::OdeError;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unsupported derivative order {0} (expected 0..=3)")]
    UnsupportedOrder(usize),
    #[error("no periodic orbit: {0}")]
    NoPeriodicOrbit(String),
    #[error("degenerate turning point at u = {u}: |V'(u)| = {slope:e} <= {tol:e}")]
    DegenerateTurningPoint { u: f64, slope: f64, tol: f64 },
    #[error("{count} disjoint potential wells admit periodic orbits; a bracket hint is required")]
    AmbiguousWell { count: usize },
    #[error("quadrature did not converge (last relative change {0:e})")]
    QuadratureNotConverged(f64),
    #[error("integration failed: {0}")]
    IntegrationFailure(#[from] OdeError),
    #[error("profile is not periodic: mismatch {mismatch:e} exceeds {limit:e}")]
    PeriodicityViolation { mismatch: f64, limit: f64 },
    #[error("elliptic modulus {0} outside [0, 1)")]
    ModulusOutOfRange(f64),
    #[error("finite-difference stencil left the periodic region ({param} step {step:e}): {source}")]
    StencilLeftRegion {
        param: &'static str,
        step: f64,
        #[source]
        source: Box<Error>,
    },
    #[error("closed form requires a KdV (quadratic) nonlinearity")]
    NotKdV,
    #[error("Wronskian of (u_x, u_E) is degenerate: {0:e}")]
    WronskianDegenerate(f64),
    #[error("monodromy scale {0:e} is beyond representable range")]
    ScaleOverflow(f64),
    #[error("Evans function not real at mu = {mu}: re = {re:e}, im = {im:e}")]
    NonRealEvans { mu: f64, re: f64, im: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("high-frequency sign inconclusive up to mu = {mu_max}")]
    Inconclusive { mu_max: f64 },
    #[error("block structure violated: {what} (measured/advertised = {ratio:e})")]
    StructureViolation { what: String, ratio: f64 },
    #[error("least-squares fit is ill-conditioned (condition {0:e})")]
    FitIllConditioned(f64),
    #[error("fixed-point iteration did not contract after {iterations} iterations (last change {last_change:e})")]
    NoContraction { iterations: usize, last_change: f64 },
    #[error("period map of the Sylvester flow is singular (min singular value of I - P = {0:e})")]
    PeriodMapSingular(f64),
    #[error("spectral gap condition fails at x = {x}: gap {gap:e}")]
    GapViolation { x: f64, gap: f64 },
    #[error("residual {residual:e} exceeds tolerance {tol:e}")]
    ResidualExceeded { residual: f64, tol: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
