//! Photon-arrival histograms, storage-efficiency analysis and synthetic traces.

pub mod analysis;
pub mod histogram;
pub mod synth;

pub use analysis::*;
pub use histogram::*;
pub use synth::*;
