//! Flat key=value pipeline configuration with defaults, file parsing and
//! override precedence (command line > file > default).

use crate::dsp::BandpassSpec;
use crate::error::{Error, Result};
use crate::hr::HrEstimatorConfig;
use crate::spdenoise::{DwtSpec, HrBand, Wavelet};
use crate::spectro::StftConfig;
use crate::unet::{AdamConfig, TrainConfig, UNetConfig};

/// Every tunable of the pipeline in one flat document.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub audio_low_hz: f64,
    pub audio_high_hz: f64,
    pub ecg_low_hz: f64,
    pub ecg_high_hz: f64,
    pub filter_order: usize,
    pub process_rate_hz: f64,
    pub window_s: f64,
    pub window_overlap_s: f64,
    pub hr_window_s: f64,
    pub hr_overlap_s: f64,
    pub stft_win: usize,
    pub stft_hop: usize,
    pub stft_fft_bins: usize,
    pub n_mels: usize,
    pub mel_fmin_hz: f64,
    pub mel_fmax_hz: f64,
    pub log_eps: f64,
    pub gl_iters: usize,
    pub unet_depth: usize,
    pub unet_base_filters: usize,
    pub unet_dropout: f64,
    pub train_epochs: usize,
    pub train_batch: usize,
    pub train_lr: f64,
    pub train_seed: u64,
    pub dwt_wavelet: String,
    pub dwt_levels: usize,
    pub dwt_variance_factor: f64,
    pub min_bpm: f64,
    pub max_bpm: f64,
    pub search_halfwidth_bpm: f64,
    pub peak_min_distance_s: f64,
    pub peak_prominence: f64,
    pub smooth_sigma_s: f64,
    pub hr_smooth_len: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            audio_low_hz: 0.5,
            audio_high_hz: 50.0,
            ecg_low_hz: 10.0,
            ecg_high_hz: 50.0,
            filter_order: 4,
            process_rate_hz: 1000.0,
            window_s: 2.0,
            window_overlap_s: 1.5,
            hr_window_s: 10.0,
            hr_overlap_s: 5.0,
            stft_win: 256,
            stft_hop: 32,
            stft_fft_bins: 1024,
            n_mels: 64,
            mel_fmin_hz: 0.0,
            mel_fmax_hz: 500.0,
            log_eps: 1e-10,
            gl_iters: 32,
            unet_depth: 4,
            unet_base_filters: 16,
            unet_dropout: 0.1,
            train_epochs: 100,
            train_batch: 64,
            train_lr: 0.001,
            train_seed: 0,
            dwt_wavelet: "db4".into(),
            dwt_levels: 6,
            dwt_variance_factor: 1.5,
            min_bpm: 40.0,
            max_bpm: 200.0,
            search_halfwidth_bpm: 10.0,
            peak_min_distance_s: 0.25,
            peak_prominence: 0.1,
            smooth_sigma_s: 0.04,
            hr_smooth_len: 5,
        }
    }
}

macro_rules! config_keys {
    ($self:ident, $with:ident) => {
        $with!(audio_low_hz, f64);
        $with!(audio_high_hz, f64);
        $with!(ecg_low_hz, f64);
        $with!(ecg_high_hz, f64);
        $with!(filter_order, usize);
        $with!(process_rate_hz, f64);
        $with!(window_s, f64);
        $with!(window_overlap_s, f64);
        $with!(hr_window_s, f64);
        $with!(hr_overlap_s, f64);
        $with!(stft_win, usize);
        $with!(stft_hop, usize);
        $with!(stft_fft_bins, usize);
        $with!(n_mels, usize);
        $with!(mel_fmin_hz, f64);
        $with!(mel_fmax_hz, f64);
        $with!(log_eps, f64);
        $with!(gl_iters, usize);
        $with!(unet_depth, usize);
        $with!(unet_base_filters, usize);
        $with!(unet_dropout, f64);
        $with!(train_epochs, usize);
        $with!(train_batch, usize);
        $with!(train_lr, f64);
        $with!(train_seed, u64);
        $with!(dwt_wavelet, String);
        $with!(dwt_levels, usize);
        $with!(dwt_variance_factor, f64);
        $with!(min_bpm, f64);
        $with!(max_bpm, f64);
        $with!(search_halfwidth_bpm, f64);
        $with!(peak_min_distance_s, f64);
        $with!(peak_prominence, f64);
        $with!(smooth_sigma_s, f64);
        $with!(hr_smooth_len, usize);
    };
}

impl PipelineConfig {
    /// Set one key from its textual value; unknown keys are configuration
    /// errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        macro_rules! try_set {
            ($field:ident, String) => {
                if key == stringify!($field) {
                    self.$field = value.to_string();
                    return Ok(());
                }
            };
            ($field:ident, $ty:ty) => {
                if key == stringify!($field) {
                    self.$field = value.parse::<$ty>().map_err(|_| {
                        Error::Config(format!("key {key}: cannot parse {value:?}"))
                    })?;
                    return Ok(());
                }
            };
        }
        config_keys!(self, try_set);
        Err(Error::Config(format!("unknown config key {key:?}")))
    }

    /// Parse a `key = value` document (one pair per line, `#` comments).
    pub fn from_str_doc(doc: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_doc(doc)?;
        Ok(cfg)
    }

    pub fn apply_doc(&mut self, doc: &str) -> Result<()> {
        for (line_no, line) in doc.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", line_no + 1))
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let doc = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_str_doc(&doc)
    }

    /// Canonical serialization: every key, current values.
    pub fn to_doc(&self) -> String {
        let mut out = String::new();
        macro_rules! emit {
            ($field:ident, String) => {
                out.push_str(&format!("{} = {}\n", stringify!($field), self.$field));
            };
            ($field:ident, $ty:ty) => {
                out.push_str(&format!("{} = {}\n", stringify!($field), self.$field));
            };
        }
        config_keys!(self, emit);
        out
    }

    pub fn audio_band(&self) -> Result<BandpassSpec> {
        BandpassSpec::new(self.audio_low_hz, self.audio_high_hz, self.filter_order)
    }

    pub fn ecg_band(&self) -> Result<BandpassSpec> {
        BandpassSpec::new(self.ecg_low_hz, self.ecg_high_hz, self.filter_order)
    }

    pub fn stft(&self) -> StftConfig {
        StftConfig {
            win_length: self.stft_win,
            hop: self.stft_hop,
            fft_bins: self.stft_fft_bins,
            n_mels: self.n_mels,
            sample_rate_hz: self.process_rate_hz,
            mel_fmin_hz: self.mel_fmin_hz,
            mel_fmax_hz: self.mel_fmax_hz,
            log_floor_eps: self.log_eps,
            frames: self.n_mels,
            window_samples: (self.window_s * self.process_rate_hz).round() as usize,
            power_spectrum: true,
        }
    }

    pub fn unet(&self) -> UNetConfig {
        UNetConfig {
            depth: self.unet_depth,
            base_filters: self.unet_base_filters,
            in_channels: 2,
            out_channels: 1,
            input_size: (self.n_mels, self.n_mels),
            dropout_rate: self.unet_dropout,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train_epochs,
            batch_size: self.train_batch,
            adam: AdamConfig { lr: self.train_lr, ..Default::default() },
            seed: self.train_seed,
        }
    }

    pub fn dwt(&self) -> Result<DwtSpec> {
        Ok(DwtSpec {
            wavelet: Wavelet::from_name(&self.dwt_wavelet)?,
            levels: self.dwt_levels,
            variance_factor: self.dwt_variance_factor,
        })
    }

    pub fn hr_band(&self) -> HrBand {
        HrBand {
            min_bpm: self.min_bpm,
            max_bpm: self.max_bpm,
            search_halfwidth_bpm: self.search_halfwidth_bpm,
        }
    }

    pub fn hr_estimator(&self) -> HrEstimatorConfig {
        HrEstimatorConfig {
            window_s: self.hr_window_s,
            overlap_s: self.hr_overlap_s,
            smooth_sigma_s: self.smooth_sigma_s,
            peak_min_distance_s: self.peak_min_distance_s,
            peak_prominence: self.peak_prominence,
            smooth_len: self.hr_smooth_len,
            min_bpm: self.min_bpm,
            max_bpm: self.max_bpm,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_doc() {
        let cfg = PipelineConfig::default();
        let doc = cfg.to_doc();
        let parsed = PipelineConfig::from_str_doc(&doc).unwrap();
        assert_eq!(cfg, parsed);
    }

    #[test]
    fn unknown_key_is_config_error() {
        let err = PipelineConfig::from_str_doc("no_such_knob = 5\n");
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn overrides_and_comments() {
        let doc = "# comment\ngl_iters = 8\ntrain_lr = 0.01 # inline\n";
        let cfg = PipelineConfig::from_str_doc(doc).unwrap();
        assert_eq!(cfg.gl_iters, 8);
        assert_eq!(cfg.train_lr, 0.01);
        assert_eq!(cfg.n_mels, 64); // untouched default
    }

    #[test]
    fn bad_value_names_key() {
        let err = PipelineConfig::from_str_doc("gl_iters = banana\n").unwrap_err();
        assert!(err.to_string().contains("gl_iters"));
    }

    #[test]
    fn derived_configs_match_defaults() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.stft(), crate::spectro::StftConfig::default());
        assert_eq!(cfg.unet(), crate::unet::UNetConfig::default());
        assert_eq!(cfg.hr_estimator(), crate::hr::HrEstimatorConfig::default());
        assert_eq!(cfg.dwt().unwrap(), crate::spdenoise::DwtSpec::default());
        assert_eq!(cfg.hr_band(), crate::spdenoise::HrBand::default());
    }
}
