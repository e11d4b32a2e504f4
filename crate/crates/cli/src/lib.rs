//! Command-line surface, report files and sweeps for `qlev`.

pub mod commands;
pub mod io;
pub mod report;
pub mod sweep;

pub use commands::run;
