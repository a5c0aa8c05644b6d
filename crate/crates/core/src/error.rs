use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("distribution is not conservative: total mass {total}, tolerance {tol:e}")]
    NonConservative { total: f64, tol: f64 },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("initial condition cannot be realized on {n} vertices: {reason}")]
    InfeasibleInit { n: usize, reason: String },

    #[error("initial distribution has zero first moment")]
    ZeroMoment,

    #[error("step rejected at t = {t}: error estimate {err:e} exceeds {tol:e} at the minimum step")]
    StepRejected { t: f64, err: f64, tol: f64 },

    #[error("negative mass {value:e} in bucket {k} at t = {t}")]
    NegativeMass { t: f64, k: usize, value: f64 },

    #[error("burn rate estimate not converged at t = {t}: {fine} (K, K/2) vs {coarse} (K/2, K/4)")]
    NonConvergedPhi { t: f64, fine: f64, coarse: f64 },

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("horizon {y} does not exceed the gelation time {t_gel}")]
    HorizonBeforeGel { y: f64, t_gel: f64 },

    #[error("environment ends at {available}, but {needed} is required")]
    EnvTooShort { needed: f64, available: f64 },

    #[error("curve family cannot resolve explosion times from s = {s}: {reason}")]
    CurveFamilyTooSparse { s: f64, reason: String },

    #[error("coupling entered the forbidden region at t = {t}: s = {s_bit}, cn = {cn}, ctilde = {ctilde}")]
    RegionE6Reached { t: f64, s_bit: bool, cn: u64, ctilde: u64 },

    #[error("hypothesis not met: {0}")]
    HypothesisUnmet(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that indicate a broken internal invariant rather than bad input.
    pub fn is_invariant_violation(&self) -> bool {
        matches!(self, Error::RegionE6Reached { .. } | Error::NegativeMass { .. } | Error::NonConvergedPhi { .. })
    }
}
