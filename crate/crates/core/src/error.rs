use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed track: {0}")]
    MalformedTrack(String),
    #[error("track topology: {0}")]
    Topology(String),
    #[error("grid too coarse: {0} intervals (need at least 10)")]
    GridTooCoarse(usize),
    #[error("outside model domain: {0}")]
    Domain(String),
    #[error("wheel lift on axle {axle}: vertical load {load:.1} N")]
    WheelLift { axle: usize, load: f64 },
    #[error("schema: {0}")]
    Schema(String),
    #[error("ill-conditioned fit: {0}")]
    IllConditionedFit(String),
    #[error("covariance: {0}")]
    Covariance(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("infeasible corridor at node {node}: back-off {beta:.3} m exceeds the available width")]
    InfeasibleCorridor { node: usize, beta: f64 },
    #[error("transcription: {0}")]
    Transcription(String),
    #[error("solver did not converge after {iterations} iterations (KKT error {kkt_error:.3e})")]
    NotConverged { iterations: usize, kkt_error: f64 },
    #[error("infeasible problem: {0}")]
    InfeasibleProblem(String),
    #[error("tuning probe: {0}")]
    Probe(String),
    #[error("no complete lap in telemetry")]
    NoCompleteLap,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
