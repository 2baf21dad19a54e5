//! Command-line driver for `ctjmdp-core`: model and policy files, CSV/JSON output and a
//! rayon-backed [`Runner`](ctjmdp_core::runner::Runner).

pub mod cli;
pub mod files;
pub mod pool;

pub use cli::main_with_args;
