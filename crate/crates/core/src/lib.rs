// SPDX-License-Identifier: Apache-2.0

//! Downlink OFDM ISAC 4D imaging.
//!
//! The crate simulates a base station that senses its surroundings with the
//! echoes of its own 5G NR downlink frames and turns them into a 4D point
//! cloud (x, y, z, radial velocity):
//!
//! ```text
//! scene ─► resource grid ─► virtual-array echoes ─► per-element RDM
//!       ─► OSCA-CFAR ─► per-cell 2D MUSIC (or 2D spatial FFT) + CA-CFAR
//!       ─► point cloud ─► deviation metrics
//! ```
//!
//! Every stage is a plain function over immutable inputs; [`pipeline`] wires
//! them together and writes run artifacts.

pub mod cfar;
pub mod channel;
pub mod error;
pub mod fft4d;
pub mod geometry;
pub mod metrics;
pub mod music;
pub mod pipeline;
pub mod pointcloud;
pub mod rdm;
pub mod scene;
pub mod waveform;

pub use error::{Error, Result};

pub use num_complex::Complex64;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub use cfar::{CfarConfig, DetectionMask};
pub use channel::{ChannelSimulator, SnrSpec, VirtualArraySnapshot};
pub use geometry::{ArrayRole, PhaseConvention, SteeringAngles, UpaLayout};
pub use metrics::DeviationReport;
pub use music::{CellManifold, DoaEstimate, PseudoSpectrum, SmoothingConfig};
pub use pipeline::{Algorithm, AlgorithmChoice, Profile, RunConfig};
pub use pointcloud::{CloudPoint, PointCloud4D};
pub use rdm::{IntegratedRdm, Rdm, RdmWindow};
pub use scene::{Scatterer, ScattererTruth, Scene};
pub use waveform::{OfdmConfig, SymbolGrid};
