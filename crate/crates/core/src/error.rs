use thiserror::Error;

/// Errors raised by the library layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("integration blow-up at t = {time}: {detail}")]
    Integration { time: f64, detail: String },
    #[error("capability error: {0}")]
    Capability(String),
    #[error("precondition failed: {detail} (worst defect {defect:.3e} at t = {time})")]
    Precondition { detail: String, defect: f64, time: f64 },
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("degenerate sliding at t = {time}: one-sided fields are parallel to the surface")]
    DegenerateSliding { time: f64 },
    #[error("Zeno behaviour: more than {events} events")]
    Zeno { events: usize },
    #[error("jump error: {0}")]
    Jump(String),
    #[error("estimation error: {0}")]
    Estimation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
