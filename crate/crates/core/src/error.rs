use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("graph is disconnected")]
    DisconnectedGraph,
    #[error("invalid edge ({0}, {1}) for a graph on {2} nodes")]
    InvalidEdge(usize, usize, usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("agent {agent} has no sample from neighbor {neighbor}")]
    MissingNeighborSample { agent: usize, neighbor: usize },
    #[error("disturbance {value} exceeds bound {bound} for agent {agent}")]
    DisturbanceOutOfBound { agent: usize, value: f64, bound: f64 },
    #[error("timer of agent {agent} has not expired (tau = {tau})")]
    NotExpired { agent: usize, tau: f64 },
    #[error("agent {agent} is not in the jump set (tau = {tau})")]
    NotInJumpSet { agent: usize, tau: f64 },
    #[error("tau out of range for agent {agent}: {tau} not in [0, {upper}]")]
    TauOutOfRange { agent: usize, tau: f64, upper: f64 },
    #[error("certificate is not feasible")]
    NotFeasible,
    #[error("certificate dimensions do not match: {0}")]
    CertificateMismatch(String),
    #[error("more than {limit} jumps at t = {t}")]
    ZenoGuard { t: f64, limit: usize },
    #[error("numerical blowup at t = {t}: |{what}| > 1e12")]
    NumericalBlowup { t: f64, what: String },
    #[error("insufficient transient: {0} qualifying samples (need 10)")]
    InsufficientTransient(usize),
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },
    #[error("run {run}: {source}")]
    Run { run: usize, source: Box<Error> },
}

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
