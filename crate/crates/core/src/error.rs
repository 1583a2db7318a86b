use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("value {value} outside of domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error("protocol has no operations")]
    EmptyProtocol,

    #[error("malformed protocol: {0}")]
    MalformedProtocol(String),

    #[error("no route between {src} and {dst}")]
    NoRoute { src: String, dst: String },

    #[error("unknown node {0}")]
    UnknownNode(String),

    #[error("no capability of link {a}-{b} reaches fidelity {required}")]
    InfeasibleLink { a: String, b: String, required: f64 },

    #[error("fidelity {target} unreachable on link {a}-{b} within nesting depth {cap}")]
    DistillationInfeasible {
        a: String,
        b: String,
        target: f64,
        cap: u32,
    },

    #[error("node {node} has no vacant {kind} qubit")]
    QubitExhaustion { node: String, kind: &'static str },

    #[error("worst-case fidelity {achieved} below requirement {required}")]
    FidelityShortfall { achieved: f64, required: f64 },

    #[error("rate {rate} ebit/s cannot be supported with {t_slot_ms} ms slots")]
    RateUnsupportable { rate: f64, t_slot_ms: f64 },

    #[error("protocol latency {wcet} slots exceeds period {period} slots")]
    LatencyExceedsPeriod { wcet: u64, period: u64 },

    #[error("hyperperiod exceeds cap of {cap} slots")]
    HyperperiodTooLong { cap: u64 },

    #[error("{what} = {ms} ms is not a multiple of the {t_slot_ms} ms slot")]
    Misaligned {
        what: String,
        ms: f64,
        t_slot_ms: f64,
    },

    #[error("invalid jitter bound {0}")]
    InvalidJitter(f64),

    #[error("instance too large for exhaustive search: {0}")]
    OracleTooLarge(String),

    #[error("activity network: {0}")]
    Network(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Invalid(e.to_string())
    }
}
