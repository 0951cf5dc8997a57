use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point {0} is outside the domain")]
    PointOutsideDomain(String),
    #[error("evaluation at puncture {0}")]
    EvaluationAtPuncture(String),
    #[error("conformal map `{0}` did not converge")]
    MapNotConverged(String),
    #[error("unknown conformal map `{0}`")]
    UnknownMap(String),
    #[error("quadrature did not converge: error estimate {estimate:e} above tolerance {tol:e}")]
    QuadratureNotConverged { estimate: f64, tol: f64 },
    #[error("differentials live on different domains")]
    DomainMismatch,
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("zero of the differential on a chart boundary at {0}")]
    ZeroOnChartBoundary(String),
    #[error("branch continuation failed at {0}")]
    BranchContinuationFailure(String),
    #[error("arc leaves the domain at {0}")]
    ArcExitsDomain(String),
    #[error("invalid class spec: {0}")]
    ClassSpecInvalid(String),
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("trajectory start point is a zero of the differential")]
    StartAtZero,
    #[error("step size collapsed below minimum at {0}")]
    StepCollapse(String),
    #[error("zero of the differential on the domain boundary at {0}")]
    ZeroOnBoundary(String),
    #[error("leaf is not a cross-cut")]
    NotACrosscut,
    #[error("leaves of one lamination interleave beyond tolerance")]
    InterleavingWithinLamination,
    #[error("laminations live on different ambient domains")]
    AmbientMismatch,
    #[error("unassigned transverse mass fraction {0:.3e} exceeds the configured limit")]
    ExcessiveUnassignedMass(f64),
    #[error("Schwarz-Christoffel parameter solver diverged: residual {0:e}")]
    ParameterSolverDivergence(f64),
    #[error("grid degenerate: {0}")]
    GridDegenerate(String),
    #[error("regions overlap")]
    RegionsOverlap,
    #[error("curve family not representable on the grid: {0}")]
    FamilyNotRepresentable(String),
    #[error("invalid configuration: {0}")]
    ConfigurationInvalid(String),
    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
