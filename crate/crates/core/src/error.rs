use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("site {site} out of range for a chain of {n} sites")]
    SiteOutOfRange { site: usize, n: usize },

    #[error("unsupported local operator dimension {0} (expected 3 or 9)")]
    UnsupportedLocalDim(usize),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("ground manifold has dimension {found}, expected 4")]
    ManifoldDimension { found: usize },

    #[error("ambiguous ground-state labels: {0}")]
    AmbiguousLabels(String),

    #[error("manifold has no state labelled (S={s}, Sz={sz})")]
    MissingLabel { s: i32, sz: i32 },

    #[error("operators do not conserve or uniformly shift total magnetization")]
    NotMagnetizationConserving,

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("propagator aliasing risk: |Im λ|·τ = {0:.3} exceeds π/2")]
    Aliasing(f64),

    #[error("trace drift {drift:.3e} at t = {t} exceeds tolerance")]
    TraceDrift { t: f64, drift: f64 },

    #[error("positivity violated at t = {t}: minimum eigenvalue {min_eig:.3e}")]
    PositivityViolation { t: f64, min_eig: f64 },

    #[error("dynamical-symmetry condition is vacuous: A·ρ_ss = 0")]
    VacuousCondition,

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("boson truncation violated: population {population:.3e} exceeds {limit:.3e}")]
    Truncation { population: f64, limit: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
