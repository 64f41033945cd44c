use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {0} is not in the upper half-plane")]
    NotInUpperHalfPlane(Complex64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} {value} exceeds the configured cap {cap}")]
    CapExceeded { what: &'static str, value: usize, cap: usize },

    #[error("evaluation at {z} is within {dist:e} of a pole")]
    NearPole { z: Complex64, dist: f64 },

    #[error("critical point: |f'({z})| = {modulus:e}")]
    CriticalPoint { z: Complex64, modulus: f64 },

    #[error("jet order {requested} exceeds provider capability {available}")]
    JetOrder { requested: usize, available: usize },

    #[error("step size underflow on arc {from} -> {to} at t = {t}")]
    StepUnderflow { from: Complex64, to: Complex64, t: f64 },

    #[error("step budget of {0} exhausted on one leg")]
    StepBudget(usize),

    #[error("singular matrix (|det| = {0:e})")]
    SingularMatrix(f64),

    #[error("matrix is not positive hermitian: {0}")]
    NotPositiveHermitian(String),

    #[error("eigenvalue {0:e} below underflow threshold")]
    EigenvalueUnderflow(f64),

    #[error("holonomy has an eigenvalue at -1; refine the mesh")]
    LogBranch,

    #[error("degenerate face {0}")]
    DegenerateFace(usize),

    #[error("numerical breakdown at vertex {vertex}: {reason}")]
    Breakdown { vertex: usize, reason: String },

    #[error("enumeration budget exceeded: {0}")]
    Budget(String),

    #[error("flow stalled: no decrease after {0} halvings")]
    Stall(usize),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::NotInUpperHalfPlane(_)
                | Error::InvalidArgument(_)
                | Error::CapExceeded { .. }
                | Error::JetOrder { .. }
                | Error::Budget(_)
                | Error::Json(_)
        )
    }
}
