use thiserror::Error;

/// Errors surfaced by the simulation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("path window [{t_start}, {t_end}] does not cover requested time {t}")]
    PathWindow { t_start: f64, t_end: f64, t: f64 },

    #[error("time {t} is not aligned to grid step {dt}")]
    GridAlignment { t: f64, dt: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("particle {particle} hit the blow-up guard at t = {t}")]
    BlowUp { particle: usize, t: f64 },

    #[error("{share_percent:.3}% of particle mass fell outside the density grid")]
    OutOfRange { share_percent: f64 },

    #[error("CFL violation: solver dt = {dt:.3e} exceeds {max_dt:.3e}")]
    Cfl { dt: f64, max_dt: f64 },

    #[error("boundary mass {mass:.3e} exceeds {limit:.3e}: domain too small for this run")]
    Leakage { mass: f64, limit: f64 },

    #[error("pullback not converged at tau cap {tau_cap}: last density change {last_change:.3e}")]
    NoConvergence { tau_cap: f64, last_change: f64 },

    #[error("contraction construction failed: {0}")]
    Contraction(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serialization(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
