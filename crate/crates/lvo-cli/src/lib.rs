//! Pipeline driver around the `lvo` library: stage commands, TOML
//! configuration, output manifests, and a synthetic-sequence generator used
//! by the tests.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod synth;

pub use config::PipelineConfig;
pub use manifest::Manifest;

/// Process exit code for an error. Parse failures exit 2 (matching clap's
/// own argument errors), shape mismatches 3, I/O failures 4, invalid
/// values 5.
pub fn exit_code(e: &lvo::Error) -> i32 {
    match e {
        lvo::Error::Parse(_) => 2,
        lvo::Error::Shape(_) => 3,
        lvo::Error::Io { .. } => 4,
        lvo::Error::Invalid(_) => 5,
    }
}
