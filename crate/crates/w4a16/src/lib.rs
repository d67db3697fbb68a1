//! Host-side companion to `w4a16-core`: binary file formats, the machine
//! config file, a thread-pool [`Executor`](w4a16_core::Executor), the
//! experiment sweep and the command implementations behind the `w4a16`
//! binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod parallel;
pub mod sweep;

pub use error::{Error, Result};
pub use parallel::ThreadPoolExecutor;
