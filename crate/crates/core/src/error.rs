use thiserror::Error;

/// Failure modes shared by the solver modules.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum FsiError {
    #[error("point at distance {dist:.6} from the boundary is outside the tube of half-width {width}")]
    OutOfTube { dist: f64, width: f64 },
    #[error("shell amplitude {amplitude:.6e} exceeds the admissible bound {bound}")]
    AmplitudeExceeded { amplitude: f64, bound: f64 },
    #[error("non-invertible transform: J = {jacobian:.3e} at ({x:.4}, {y:.4})")]
    NonInvertible { jacobian: f64, x: f64, y: f64 },
    #[error("invalid mesh parameters: {0}")]
    Mesh(String),
    #[error("boundary data has net flux {flux:.3e}")]
    IncompatibleFlux { flux: f64 },
    #[error("initial data violate the kinematic compatibility by {defect:.3e}")]
    IncompatibleData { defect: f64 },
    #[error("eigensolver failed: {0}")]
    EigensolveFailure(String),
    #[error("pressure space fails the inf-sup rank check")]
    InfSupDeficient,
    #[error("linear solve failed: {0}")]
    SingularSolve(String),
    #[error("mass matrix is not positive definite")]
    NotSpd,
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("self-intersection guard tripped at t = {t:.6} (|eta|_inf = {amplitude:.6e})")]
    SelfIntersection { t: f64, amplitude: f64 },
    #[error("fixed-point coupling did not contract in {iterations} iterations (last gap {gap:.3e})")]
    NoContraction { iterations: usize, gap: f64 },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientHistory { needed: usize, got: usize },
    #[error("boundary weight 1 + eta is not positive")]
    DegenerateWeight,
    #[error("i/o failure: {0}")]
    Io(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, FsiError>;
