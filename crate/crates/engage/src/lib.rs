//! File formats, backends, configuration and the replay harness around
//! `engage-core`. The `engage` binary wraps these in a CLI.

// Range checks are written `!(x > 0.0)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backend;
pub mod config;
pub mod episode_io;
pub mod error;
pub mod features_io;
pub mod mock_dir;
pub mod model_io;
pub mod pipeline;
pub mod suite;

pub use error::FormatError;
