use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed instance document: {0}")]
    Malformed(String),
    #[error("not a rational number: {0:?} (expected \"p/q\" or an integer)")]
    BadRational(String),
    #[error("duplicate {kind} id {id:?}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("unknown {kind} {id:?}")]
    Unknown { kind: &'static str, id: String },
    #[error("operation requires a non-empty realization set")]
    EmptySet,
    #[error("realization {0} is not in the node")]
    NotMember(usize),
    #[error("item {0} is already in the observed domain")]
    ItemAlreadyUsed(usize),
    #[error("no uniform Q: f(E, phi) is {first} for one realization and {other} for another")]
    NoUniformQ { first: String, other: String },
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("no stop node: x ≤ f_E(root) (x = {x}, f_E(root) = {root})")]
    NoStopNode { x: String, root: String },
    #[error("threshold x = {x} is above Q = {q}")]
    ThresholdAboveQ { x: String, q: String },
    #[error("degenerate bound audit: optimal c_avg is 0 but greedy c_avg is {0}")]
    DegenerateBound(String),
    #[error("cost profile does not match the instance: {0}")]
    ProfileMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
