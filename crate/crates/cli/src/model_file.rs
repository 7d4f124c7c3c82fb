//! Versioned JSON model documents.

use std::path::Path;

use gridts::TSModel;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Stage};

pub const FORMAT: &str = "gridts-model";
pub const FORMAT_VERSION: u32 = 1;

/// Where a model came from. No wall-clock time is recorded so that equal
/// inputs give byte-identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub initial_rules: usize,
    pub train_rows: usize,
    pub test_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub provenance: Provenance,
    pub model: TSModel,
}

impl ModelFile {
    pub fn new(model: TSModel, provenance: Provenance) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: FORMAT_VERSION,
            provenance,
            model,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let bad = |msg: String| CliError::data(Stage::ModelFile, msg);
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| bad(format!("not a model file: {e}")))?;
        match value.get("format").and_then(|v| v.as_str()) {
            Some(FORMAT) => {}
            other => return Err(bad(format!("not a model file: format is {other:?}, expected {FORMAT:?}"))),
        }
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            Some(v) => return Err(bad(format!("unsupported model format version {v} (this build reads {FORMAT_VERSION})"))),
            None => return Err(bad("model file has no format version".into())),
        }
        let file: ModelFile =
            serde_json::from_value(value).map_err(|e| bad(format!("corrupt model file (version {FORMAT_VERSION}): {e}")))?;
        file.model
            .validate()
            .map_err(|e| bad(format!("corrupt model file (version {FORMAT_VERSION}): {e}")))?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data(Stage::ModelFile, format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
