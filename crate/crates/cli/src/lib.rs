//! File formats and subcommands behind the `fgw` binary.
//!
//! - `synth`: write a synthetic pair bundle with ground truth
//! - `match`: run the pipeline, write plan, labels and per-stage diagnostics
//! - `eval`: precision, recall and exact-match accuracy against ground truth
//! - `oracle`: exact GW values and permutation-LP optima
//!
//! Exit codes: 0 on success (warnings included), 1 for I/O and malformed
//! files, 2 for usage and validation errors.

pub mod commands;
pub mod error;
pub mod formats;
pub mod logfmt;

pub use commands::{run, Cli};
pub use error::{CliError, CliResult};
pub use formats::PairBundle;
