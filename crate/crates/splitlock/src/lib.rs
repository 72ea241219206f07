//! File formats, the seed-sweep pipeline and the command line around
//! `splitlock-core`.

pub mod formats;
pub mod pipeline;

pub use splitlock_core as core;
