//! Batch pipeline around the `gridts` library: configuration, model files
//! and the `train`, `predict`, `compare`, `report` and `synth` commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod model_file;
pub mod pipeline;

pub use config::PipelineConfig;
pub use error::{CliError, ErrorKind, Stage};
pub use model_file::ModelFile;
