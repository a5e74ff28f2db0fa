//! Log-mel spectrogram generation, normalization, Griffin-Lim inversion and
//! overlap-averaged stitching of reconstructed windows.

pub mod griffin_lim;
pub mod mel;
pub mod stft;
pub mod stitch;

pub use griffin_lim::griffin_lim_invert;
pub use mel::MelFilterbank;
pub use stitch::stitch;

use crate::error::{Error, Result};
use crate::signal::Window;
use ndarray::Array2;

/// STFT / mel parameters for spectrogram windows.
///
/// `frames` and `window_samples` pin the fixed shape of pipeline windows:
/// a nominal 2 s window at 1 kHz produces exactly `frames` x `n_mels`
/// spectrograms (the window is reflect-padded, since 2000 samples at hop 32
/// would naturally yield only 63 centered frames).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub win_length: usize,
    pub hop: usize,
    pub fft_bins: usize,
    pub n_mels: usize,
    pub sample_rate_hz: f64,
    pub mel_fmin_hz: f64,
    pub mel_fmax_hz: f64,
    /// Floor added before the log so silence maps to exactly zero.
    pub log_floor_eps: f64,
    /// Time frames per window (fixed output height).
    pub frames: usize,
    /// Nominal window length in samples (fixed reconstruction length).
    pub window_samples: usize,
    /// Power spectra (|X|^2) feed the mel filterbank; amplitude otherwise.
    pub power_spectrum: bool,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            win_length: 256,
            hop: 32,
            fft_bins: 1024,
            n_mels: 64,
            sample_rate_hz: 1000.0,
            mel_fmin_hz: 0.0,
            mel_fmax_hz: 500.0,
            log_floor_eps: 1e-10,
            frames: 64,
            window_samples: 2000,
            power_spectrum: true,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.win_length > self.fft_bins {
            return Err(Error::Config(format!(
                "win_length {} exceeds fft_bins {}",
                self.win_length, self.fft_bins
            )));
        }
        if self.hop == 0 || self.hop > self.win_length {
            return Err(Error::Config(format!(
                "hop {} must be in 1..=win_length {}",
                self.hop, self.win_length
            )));
        }
        if self.n_mels > self.fft_bins / 2 + 1 {
            return Err(Error::Config(format!(
                "n_mels {} exceeds fft_bins/2+1 = {}",
                self.n_mels,
                self.fft_bins / 2 + 1
            )));
        }
        if self.frames < 2 || self.window_samples < self.win_length {
            return Err(Error::Config(
                "need at least 2 frames and a window no shorter than the STFT window".into(),
            ));
        }
        if !(self.log_floor_eps > 0.0) {
            return Err(Error::Config("log floor must be > 0".into()));
        }
        Ok(())
    }

    pub fn filterbank(&self) -> Result<MelFilterbank> {
        MelFilterbank::new(
            self.n_mels,
            self.fft_bins,
            self.sample_rate_hz,
            self.mel_fmin_hz,
            self.mel_fmax_hz,
        )
    }

    /// Length of the padded analysis buffer covering `frames` frames.
    pub(crate) fn ext_len(&self) -> usize {
        (self.frames - 1) * self.hop + self.win_length
    }
}

/// Log-mel spectrogram of one analysis window; one `frames x n_mels` value
/// matrix per audio channel.
///
/// Values are `ln(power + eps) - ln(eps) >= 0`. After [`normalize`] they lie
/// in `[0, 1]` and the divisor is recorded in `norm_constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpectrogram {
    channels: Vec<Array2<f64>>,
    norm_constant: Option<f64>,
    log_floor_eps: f64,
}

impl LogMelSpectrogram {
    pub fn new(channels: Vec<Array2<f64>>, log_floor_eps: f64) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::EmptyInput("spectrogram needs at least one channel".into()));
        }
        let dim = channels[0].dim();
        for (i, ch) in channels.iter().enumerate() {
            if ch.dim() != dim {
                return Err(Error::Shape(format!(
                    "channel {i} has shape {:?}, expected {:?}",
                    ch.dim(),
                    dim
                )));
            }
        }
        Ok(Self { channels, norm_constant: None, log_floor_eps })
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// (time frames, mel bins).
    pub fn shape(&self) -> (usize, usize) {
        self.channels[0].dim()
    }

    pub fn channel(&self, i: usize) -> &Array2<f64> {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[Array2<f64>] {
        &self.channels
    }

    pub fn log_floor_eps(&self) -> f64 {
        self.log_floor_eps
    }

    pub fn norm_constant(&self) -> Option<f64> {
        self.norm_constant
    }

    pub fn is_normalized(&self) -> bool {
        self.norm_constant.is_some()
    }

    pub fn max_value(&self) -> f64 {
        self.channels
            .iter()
            .flat_map(|c| c.iter())
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
    }

    /// Keep only channel `i`.
    pub fn select_channel(&self, i: usize) -> Result<Self> {
        if i >= self.channels.len() {
            return Err(Error::Shape(format!("channel {i} out of range")));
        }
        Ok(Self {
            channels: vec![self.channels[i].clone()],
            norm_constant: self.norm_constant,
            log_floor_eps: self.log_floor_eps,
        })
    }

    /// Raw (de-normalized) log values of channel `i`.
    pub fn raw_values(&self, i: usize) -> Array2<f64> {
        match self.norm_constant {
            Some(c) => self.channels[i].mapv(|v| v * c),
            None => self.channels[i].clone(),
        }
    }

    /// Assemble a spectrogram from values already on the normalized scale.
    pub(crate) fn from_normalized(
        channels: Vec<Array2<f64>>,
        norm_constant: f64,
        log_floor_eps: f64,
    ) -> Self {
        Self { channels, norm_constant: Some(norm_constant), log_floor_eps }
    }

    /// Repeat a single-channel spectrogram across `n` channels (used to feed
    /// mono corpora into a multi-channel input layer).
    pub fn duplicate_channels(&self, n: usize) -> Self {
        let plane = self.channels[0].clone();
        Self {
            channels: vec![plane; n],
            norm_constant: self.norm_constant,
            log_floor_eps: self.log_floor_eps,
        }
    }
}

/// Compute the per-channel log-mel spectrogram of a window.
///
/// Frames are centered at multiples of the hop with reflected edges; the
/// frame count is padded/cropped to exactly `cfg.frames`, so every valid
/// window yields the same `frames x n_mels x channels` shape.
pub fn logmel(window: &Window, cfg: &StftConfig) -> Result<LogMelSpectrogram> {
    cfg.validate()?;
    let x = &window.data;
    if x.num_channels() > 2 {
        return Err(Error::Shape(format!(
            "expected 1 or 2 channels, got {}",
            x.num_channels()
        )));
    }
    if x.len() < cfg.win_length {
        return Err(Error::Shape(format!(
            "window of {} samples is shorter than the {}-sample STFT window",
            x.len(),
            cfg.win_length
        )));
    }
    let fb = cfg.filterbank()?;
    let win = stft::hann_window(cfg.win_length);
    let channels = x
        .channels()
        .iter()
        .map(|ch| {
            let ext = pad_for_frames(ch, cfg);
            let frames = stft::stft_frames(&ext, &win, cfg.hop, cfg.fft_bins, cfg.frames);
            let mut out = Array2::zeros((cfg.frames, cfg.n_mels));
            for (t, frame) in frames.iter().enumerate() {
                let power: Vec<f64> = frame
                    .iter()
                    .map(|c| if cfg.power_spectrum { c.norm_sqr() } else { c.norm() })
                    .collect();
                let mel = fb.apply(&power);
                for (m, &p) in mel.iter().enumerate() {
                    out[(t, m)] = (p.max(0.0) + cfg.log_floor_eps).ln() - cfg.log_floor_eps.ln();
                }
            }
            out
        })
        .collect();
    LogMelSpectrogram::new(channels, cfg.log_floor_eps)
}

/// Frame `t` of the analysis is centered at `t * hop` in signal coordinates;
/// the buffer therefore carries `win/2` reflected samples on the left and
/// whatever the last frame still needs on the right.
pub(crate) fn pad_for_frames(x: &[f64], cfg: &StftConfig) -> Vec<f64> {
    let left = cfg.win_length / 2;
    let total = cfg.ext_len();
    let n = x.len() as i64;
    let reflect = |i: i64| -> f64 {
        let mut j = i;
        // Repeated reflection handles pads longer than the signal.
        loop {
            if j < 0 {
                j = -j;
            } else if j >= n {
                j = 2 * (n - 1) - j;
            } else {
                return x[j as usize];
            }
        }
    };
    (0..total).map(|i| reflect(i as i64 - left as i64)).collect()
}

/// Divide all values by `c` and clip into `[0, 1]`, recording `c`.
///
/// The same constant is meant to be applied to every channel, window and
/// activity so relative signal amplitude differences survive normalization.
pub fn normalize(s: &LogMelSpectrogram, c: f64) -> Result<LogMelSpectrogram> {
    if !(c > 0.0) {
        return Err(Error::Config(format!("normalization constant must be > 0, got {c}")));
    }
    if s.is_normalized() {
        return Err(Error::Config("spectrogram is already normalized".into()));
    }
    let channels = s
        .channels
        .iter()
        .map(|ch| ch.mapv(|v| (v / c).clamp(0.0, 1.0)))
        .collect();
    Ok(LogMelSpectrogram {
        channels,
        norm_constant: Some(c),
        log_floor_eps: s.log_floor_eps,
    })
}

/// Undo [`normalize`]; exact for values that were inside `[0, c]`.
pub fn denormalize(s: &LogMelSpectrogram) -> LogMelSpectrogram {
    match s.norm_constant {
        None => s.clone(),
        Some(c) => LogMelSpectrogram {
            channels: s.channels.iter().map(|ch| ch.mapv(|v| v * c)).collect(),
            norm_constant: None,
            log_floor_eps: s.log_floor_eps,
        },
    }
}
