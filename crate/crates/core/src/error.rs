//! Error types shared by every stage of the pipeline.

use std::fmt;
use std::path::PathBuf;

use serde::Serialize;

/// Standing assumptions and admissibility conditions, labelled the way
/// reports and error messages refer to them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// `min |A(x,t)| >= rho` on the closed space-time cylinder.
    Positivity,
    /// `|dA/dt . xi| <= C |A . xi|` for every direction.
    Spd,
    /// `A(., 0)` is dissipative: every maximal integral curve is finite.
    Finiteness,
    /// `0 < beta < rho / sup A0`.
    Beta,
    /// `P phi >= delta > 0` for the constructed weight.
    WeightAdmissibility,
    /// Observation time `T0 < T`.
    Time,
    /// Observation time for time-independent principal parts.
    Time2,
    /// `|R(x, 0)| >= m0`.
    R,
    /// `|alpha(x)| >= m0`.
    Alpha,
    /// `|p(x,0)| |det(alpha_m; grad alpha_m)| >= m0`.
    R2,
    /// Membership in the conditional sets `D(M)` / `D(M, rho, Gamma)`.
    Bounds,
    /// `Gamma_{+,A}` contained in the observed boundary part.
    Gamma,
}

impl Condition {
    pub fn label(self) -> &'static str {
        match self {
            Condition::Positivity => "positivity",
            Condition::Spd => "spd",
            Condition::Finiteness => "finiteness",
            Condition::Beta => "beta",
            Condition::WeightAdmissibility => "weight",
            Condition::Time => "time",
            Condition::Time2 => "time2",
            Condition::R => "R",
            Condition::Alpha => "alpha",
            Condition::R2 => "R2",
            Condition::Bounds => "D(M)",
            Condition::Gamma => "Gamma",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.label())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("condition {condition} violated: {detail}")]
    Admissibility { condition: Condition, detail: String },

    #[error("CFL violation: dt = {dt:.6e} exceeds the stable limit {limit:.6e}; at least nt = {required_nt} time steps are required")]
    Cfl { dt: f64, limit: f64, required_nt: usize },

    #[error("condition (spd) violated: dA/dt is not parallel to A (structure residual {residual:.3e})")]
    Structure { residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn admissibility(condition: Condition, detail: impl Into<String>) -> Self {
        Error::Admissibility {
            condition,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain(_) | Error::Io { .. } => 1,
            Error::Admissibility { .. } => 2,
            Error::Cfl { .. } | Error::Structure { .. } | Error::Numerical(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
