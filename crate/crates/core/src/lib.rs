//! Multi-source direction-of-arrival estimation with steered-response-power
//! spectra and iterative detection-and-localization.
//!
//! The pieces, bottom up:
//! - [`geometry`]: array layouts, microphone pairs, directions and candidate grids.
//! - [`stft`]: framing and the complex spectrogram.
//! - [`srp`]: PHAT features, direct-path vectors and spatial spectra.
//! - [`idl`]: iterative detection with deflation, plus plain peak picking.
//! - [`sim`]: image-method room simulation and ground truth.
//! - [`metrics`]: matching and MAE / MDR / FAR scoring.
//! - [`pipeline`]: file formats and the end-to-end commands.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod geometry;
pub mod idl;
pub mod metrics;
pub mod pipeline;
pub mod sim;
pub mod srp;
pub mod stft;

pub use error::{Error, Result};
pub use geometry::{make_grid, ArrayGeometry, CandidateGrid, Doa, GridSpec, MicPair};
pub use metrics::{match_frame, score, MetricsReport};
pub use idl::{idl, localize_idl, localize_peaks, peak_detect, Detection, IdlConfig, LocalizationResult};
pub use srp::{IpdFeatureSeq, SpatialSpectrum, SteeringTable, COMPRESSION_FACTOR};
pub use stft::{stft, StftConfig, StftTensor};
