//! Command implementations behind the `prefopt` binary: data generation,
//! training, parameter sweeps, the verification suite, and report
//! summarization. Everything is a plain function over paths and parsed
//! options so the integration tests drive the same code as `main`.

pub mod generate;
pub mod pipeline;
pub mod report;
pub mod sweep;
pub mod train_cmd;
pub mod verify;
