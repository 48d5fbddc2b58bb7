//! Maps failures to exit codes: 1 = configuration, 2 = data, 3 = backend.

use crate::config::ConfigError;
use crate::embedding::EmbedError;
use crate::eval::{DataError, GenerateError, RunError};
use crate::ot::OtError;
use crate::pipeline::PipelineError;
use crate::translate::{LlmError, TranslateError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

/// A configuration problem found by the CLI itself (missing flag, etc.).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn embed_code(e: &EmbedError) -> i32 {
    match e {
        EmbedError::ProviderUnavailable(_) | EmbedError::TokenLimitExceeded { .. } => EXIT_BACKEND,
        EmbedError::AtIndex { source, .. } => embed_code(source),
        _ => EXIT_DATA,
    }
}

fn translate_code(e: &TranslateError) -> i32 {
    match e {
        TranslateError::NotConfigured => EXIT_CONFIG,
        TranslateError::EndpointError(_) | TranslateError::RateLimited | TranslateError::Transport(_) => {
            EXIT_BACKEND
        }
        _ => EXIT_DATA,
    }
}

fn pipeline_code(e: &PipelineError) -> i32 {
    match e {
        PipelineError::InvalidK => EXIT_CONFIG,
        PipelineError::QueryEncoding(e) | PipelineError::Embed(e) => embed_code(e),
        PipelineError::Translate(e) => translate_code(e),
        PipelineError::Ot(OtError::NumericalFailure(_)) => EXIT_BACKEND,
        _ => EXIT_DATA,
    }
}

/// Exit code for an error chain. The first recognized error decides;
/// anything unrecognized (plain I/O included) is a data error.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<ConfigError>() || cause.is::<clap::Error>() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<PipelineError>() {
            return pipeline_code(e);
        }
        if let Some(e) = cause.downcast_ref::<EmbedError>() {
            return embed_code(e);
        }
        if let Some(e) = cause.downcast_ref::<TranslateError>() {
            return translate_code(e);
        }
        if let Some(e) = cause.downcast_ref::<GenerateError>() {
            return match e {
                GenerateError::WrongNegativeCount { .. } => EXIT_DATA,
                GenerateError::EmptyGeneration | GenerateError::Endpoint(_) => EXIT_BACKEND,
            };
        }
        if cause.is::<LlmError>() {
            return EXIT_BACKEND;
        }
        if cause.is::<DataError>() || cause.is::<RunError>() {
            return EXIT_DATA;
        }
    }
    EXIT_DATA
}
