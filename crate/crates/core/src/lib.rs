//! Speaker diarization from the spatial footprint of sources captured by a
//! handful of unsynchronized two-microphone devices.
//!
//! Each device produces a per-frame distribution over arrival angles
//! (smoothed, normalized SRP-PHAT). Frames are clustered with a mixture
//! whose components are products of per-device Dirichlet densities, and
//! each frame is labelled with its most probable component.

// `!(x > 0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alignment;
pub mod diarization;
pub mod directional;
pub mod dmm;
pub mod error;
pub mod pipeline;
pub mod scalar;
pub mod scoring;
pub mod signal_io;
pub mod simulator;
pub mod special;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Recording = signal_io::DeviceRecording<f64>;
pub type Spectra = signal_io::MultiChannelFrameSpectra<f64>;
pub type Statistic = directional::DirectionalStatistic<f64>;
pub type Features = dmm::FeatureSet<f64>;
pub type Params = dmm::DmmParams<f64>;
pub type Report = dmm::FitReport<f64>;
pub type Output = pipeline::PipelineOutput<f64>;

pub type Recording32 = signal_io::DeviceRecording<f32>;
pub type Features32 = dmm::FeatureSet<f32>;
pub type Params32 = dmm::DmmParams<f32>;
