use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("numeric overflow in group {group}: {detail}")]
    Overflow { group: usize, detail: String },

    #[error("survival probability underflows at t = {t}; hazard is not representable")]
    SurvivalUnderflow { t: f64 },

    #[error("all failure counts are zero; the likelihood has no finite maximiser")]
    Unidentifiable,

    #[error("group {group} has degenerate failure probability {p}")]
    DegenerateProbability { group: usize, p: f64 },

    #[error("matrix is rank deficient (condition number {condition:.3e})")]
    RankDeficient { condition: f64 },

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error("infeasible design: {0}")]
    Infeasible(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by invalid input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain(_) | Error::Dimension { .. } | Error::InvalidData(_) | Error::Config(_)
        )
    }
}
