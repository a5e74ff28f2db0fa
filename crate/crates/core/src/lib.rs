//! Heart-rate estimation from dual-channel in-ear microphone audio.
//!
//! The crate covers the full pipeline at desk scale:
//!
//! - preprocessing (bandpass filtering, rational resampling, windowing)
//! - log-mel spectrogram generation and Griffin-Lim waveform reconstruction
//! - a CPU U-Net spectrogram denoiser with Adam training, transfer-learning
//!   pretraining and leave-one-subject-out splits
//! - signal-processing alternatives (envelope spectrum, wavelet denoising,
//!   temporally constrained spectrum search)
//! - beat-interval heart-rate extraction and agreement metrics
//! - a deterministic synthetic generator of paired audio/ECG recordings used
//!   as ground-truth oracle throughout the test suite
//!
//! The `cli` crate wires these pieces into subcommands; see the workspace
//! README for usage.

pub mod config;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod hr;
pub mod io;
pub mod pipeline;
pub mod signal;
pub mod spdenoise;
pub mod spectro;
pub mod synth;
pub mod unet;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use signal::{align_streams, segment, TimeSeries, Window, WindowSpec};
