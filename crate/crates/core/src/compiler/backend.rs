use super::{render_obligations, CompilationResult};
use crate::rebac::{export_model, render_tuple_file, ModelError};

/// One output file of a backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub file_name: String,
    pub bytes: Vec<u8>,
}

/// A target format for compiled policies.
pub trait Backend {
    fn name(&self) -> &'static str;

    fn emit(&self, result: &CompilationResult) -> Result<Vec<Artifact>, ModelError>;
}

/// OpenFGA-compatible model JSON, a tuple file and an obligation file.
#[derive(Debug, Clone, Copy, Default)]
pub struct OpenFgaBackend;

impl OpenFgaBackend {
    pub const MODEL_FILE: &'static str = "model.fga.json";
    pub const TUPLE_FILE: &'static str = "tuples.jsonl";
    pub const OBLIGATION_FILE: &'static str = "obligations.jsonl";
}

impl Backend for OpenFgaBackend {
    fn name(&self) -> &'static str {
        "openfga"
    }

    fn emit(&self, result: &CompilationResult) -> Result<Vec<Artifact>, ModelError> {
        Ok(vec![
            Artifact {
                file_name: Self::MODEL_FILE.into(),
                bytes: export_model(&result.model)?,
            },
            Artifact {
                file_name: Self::TUPLE_FILE.into(),
                bytes: render_tuple_file(&result.tuple_file()).into_bytes(),
            },
            Artifact {
                file_name: Self::OBLIGATION_FILE.into(),
                bytes: render_obligations(&result.obligations).into_bytes(),
            },
        ])
    }
}
