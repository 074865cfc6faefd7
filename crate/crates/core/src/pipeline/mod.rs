//! The safety filter as it sits between the velocity controller and the
//! attitude controller: obstacle ingestion, CBF evaluation, QP, smoothing.

mod buffer;
mod filter;
mod lowpass;
mod message;
mod sparsify;

pub use buffer::{BufferDiagnostics, IngestOutcome, ObstacleBuffer};
pub use filter::{FilterOutput, SafetyFilter, SolveMode, SolverPath, Telemetry};
pub use lowpass::LowPassState;
pub use message::{
    chunk, MessageError, ObstacleMessage, ObstacleQueue, HEADER_LEN, MAX_POINTS_PER_MESSAGE,
};
pub use sparsify::Sparsifier;
