//! Waveform reconstruction from magnitude-only spectrograms.
//!
//! The classic alternating-projection scheme: project onto the set of
//! consistent STFTs (istft followed by stft), then restore the prescribed
//! magnitudes. Phase starts at zero, so reconstruction is deterministic.

use crate::error::{Error, Result};
use crate::signal::TimeSeries;
use crate::spectro::{stft, LogMelSpectrogram, StftConfig};
use rustfft::num_complex::Complex;

/// Invert a (possibly normalized) single-channel log-mel spectrogram back to
/// a waveform of `cfg.window_samples` samples.
///
/// Steps: de-normalize, undo the log floor, map mel energies back to a linear
/// spectrum through the clamped pseudo-inverse, then run `iters` Griffin-Lim
/// iterations.
pub fn griffin_lim_invert(
    s: &LogMelSpectrogram,
    cfg: &StftConfig,
    iters: usize,
) -> Result<TimeSeries> {
    let (waveform, _) = griffin_lim_invert_traced(s, cfg, iters, false)?;
    Ok(waveform)
}

/// As [`griffin_lim_invert`], optionally recording the magnitude residual
/// `|||STFT(x_k)| - M||_F` after every iteration.
pub fn griffin_lim_invert_traced(
    s: &LogMelSpectrogram,
    cfg: &StftConfig,
    iters: usize,
    trace_residuals: bool,
) -> Result<(TimeSeries, Vec<f64>)> {
    cfg.validate()?;
    if s.num_channels() != 1 {
        return Err(Error::Shape(format!(
            "inversion expects a single channel, got {}",
            s.num_channels()
        )));
    }
    if iters == 0 {
        return Err(Error::Config("griffin-lim needs at least one iteration".into()));
    }
    let (frames, n_mels) = s.shape();
    if frames != cfg.frames || n_mels != cfg.n_mels {
        return Err(Error::Shape(format!(
            "spectrogram {frames}x{n_mels} does not match config {}x{}",
            cfg.frames, cfg.n_mels
        )));
    }

    let values = s.raw_values(0);
    let fb = cfg.filterbank()?;
    let eps = s.log_floor_eps();
    let n_bins = cfg.fft_bins / 2 + 1;

    // Target magnitudes per frame.
    let mut target = vec![vec![0.0f64; n_bins]; frames];
    for t in 0..frames {
        let mel_power: Vec<f64> = (0..n_mels)
            .map(|m| (eps * values[(t, m)].exp() - eps).max(0.0))
            .collect();
        let lin = fb.approx_invert(&mel_power);
        for (k, &p) in lin.iter().enumerate() {
            target[t][k] = if cfg.power_spectrum { p.sqrt() } else { p };
        }
    }

    let win = stft::hann_window(cfg.win_length);
    // Zero-phase initialization.
    let mut spec: Vec<Vec<Complex<f64>>> = target
        .iter()
        .map(|row| row.iter().map(|&m| Complex::new(m, 0.0)).collect())
        .collect();
    let mut residuals = Vec::new();

    let mut x = stft::istft_ola(&spec, &win, cfg.hop, cfg.fft_bins);
    for _ in 0..iters {
        spec = stft::stft_frames(&x, &win, cfg.hop, cfg.fft_bins, frames);
        if trace_residuals {
            let mut acc = 0.0;
            for (t, frame) in spec.iter().enumerate() {
                for (k, c) in frame.iter().enumerate() {
                    acc += (c.norm() - target[t][k]).powi(2);
                }
            }
            residuals.push(acc.sqrt());
        }
        // Keep the phase, restore the prescribed magnitude.
        for (t, frame) in spec.iter_mut().enumerate() {
            for (k, c) in frame.iter_mut().enumerate() {
                let norm = c.norm();
                *c = if norm > 1e-300 {
                    *c * (target[t][k] / norm)
                } else {
                    Complex::new(target[t][k], 0.0)
                };
            }
        }
        x = stft::istft_ola(&spec, &win, cfg.hop, cfg.fft_bins);
    }

    // Drop the centering pad; the analysis placed sample 0 at ext[win/2].
    let left = cfg.win_length / 2;
    let out: Vec<f64> = x
        .iter()
        .skip(left)
        .take(cfg.window_samples)
        .copied()
        .collect();
    if out.len() < cfg.window_samples {
        return Err(Error::Shape(format!(
            "reconstruction produced {} of {} samples",
            out.len(),
            cfg.window_samples
        )));
    }
    let ts = TimeSeries::mono(out, cfg.sample_rate_hz, 0)?;
    Ok((ts, residuals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Window;
    use crate::spectro::{logmel, normalize};

    fn tone_window(f: f64) -> Window {
        let data = TimeSeries::mono(
            (0..2000)
                .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / 1000.0).sin())
                .collect(),
            1000.0,
            0,
        )
        .unwrap();
        Window { data, index: 0, start_time_ms: 0 }
    }

    fn dominant_frequency(x: &[f64], fs: f64) -> f64 {
        let ts = TimeSeries::mono(x.to_vec(), fs, 0).unwrap();
        let (freqs, mags) = crate::dsp::magnitude_spectrum(&ts).unwrap();
        let peak = mags.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        freqs[peak]
    }

    #[test]
    fn tone_round_trip_keeps_frequency() {
        let cfg = StftConfig::default();
        let fb = cfg.filterbank().unwrap();
        for f in [3.0, 12.0, 27.0, 50.0] {
            let s = logmel(&tone_window(f), &cfg).unwrap();
            let y = griffin_lim_invert(&s, &cfg, 32).unwrap();
            assert_eq!(y.len(), 2000);
            let f_out = dominant_frequency(y.channel(0), 1000.0);
            let tol = fb.bin_width_hz(fb.bin_containing(f));
            assert!(
                (f_out - f).abs() <= tol,
                "tone {f} Hz came back at {f_out} Hz (tolerance {tol})"
            );
        }
    }

    #[test]
    fn normalized_round_trip_also_works() {
        let cfg = StftConfig::default();
        let s = logmel(&tone_window(8.0), &cfg).unwrap();
        let n = normalize(&s, s.max_value() * 1.5).unwrap();
        let y = griffin_lim_invert(&n, &cfg, 32).unwrap();
        let f_out = dominant_frequency(y.channel(0), 1000.0);
        assert!((f_out - 8.0).abs() <= 8.0, "normalized round trip at {f_out} Hz");
    }

    #[test]
    fn zero_spectrogram_inverts_to_silence() {
        let cfg = StftConfig::default();
        let data = TimeSeries::mono(vec![0.0; 2000], 1000.0, 0).unwrap();
        let w = Window { data, index: 0, start_time_ms: 0 };
        let s = logmel(&w, &cfg).unwrap();
        let y = griffin_lim_invert(&s, &cfg, 8).unwrap();
        let rms =
            (y.channel(0).iter().map(|v| v * v).sum::<f64>() / y.len() as f64).sqrt();
        // Far below any plausible signal RMS.
        assert!(rms < 1e-6, "silence reconstructed with RMS {rms}");
    }

    #[test]
    fn residual_is_non_increasing() {
        let cfg = StftConfig::default();
        // Fixed multi-component fixture.
        let data = TimeSeries::mono(
            (0..2000)
                .map(|i| {
                    let t = i as f64 / 1000.0;
                    (2.0 * std::f64::consts::PI * 11.0 * t).sin()
                        + 0.6 * (2.0 * std::f64::consts::PI * 29.0 * t).sin()
                })
                .collect(),
            1000.0,
            0,
        )
        .unwrap();
        let w = Window { data, index: 0, start_time_ms: 0 };
        let s = logmel(&w, &cfg).unwrap();
        let (_, residuals) = griffin_lim_invert_traced(&s, &cfg, 24, true).unwrap();
        assert_eq!(residuals.len(), 24);
        for pair in residuals.windows(2) {
            assert!(
                pair[1] <= pair[0] * (1.0 + 1e-9) + 1e-12,
                "residual increased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn two_channel_input_rejected() {
        let cfg = StftConfig::default();
        let a: Vec<f64> = (0..2000).map(|i| (i as f64 * 0.01).sin()).collect();
        let data = TimeSeries::new(vec![a.clone(), a], 1000.0, 0).unwrap();
        let w = Window { data, index: 0, start_time_ms: 0 };
        let s = logmel(&w, &cfg).unwrap();
        assert!(matches!(griffin_lim_invert(&s, &cfg, 4), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_iterations_rejected() {
        let cfg = StftConfig::default();
        let s = logmel(&tone_window(5.0), &cfg).unwrap();
        assert!(matches!(griffin_lim_invert(&s, &cfg, 0), Err(Error::Config(_))));
    }
}
