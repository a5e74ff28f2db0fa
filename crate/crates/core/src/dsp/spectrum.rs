//! One-sided FFT magnitude spectra and sub-bin peak refinement.

use crate::dsp::fft;
use crate::error::Result;
use crate::signal::TimeSeries;

/// One-sided magnitude spectrum with bin spacing `rate / len`.
///
/// Magnitudes are scaled by `2/len` so a unit sinusoid at a bin center reads
/// as amplitude 1 (DC and Nyquist read their plain average).
pub fn magnitude_spectrum(x: &TimeSeries) -> Result<(Vec<f64>, Vec<f64>)> {
    let samples = x.single()?;
    let n = samples.len();
    let spec = fft::rfft(samples, n);
    let rate = x.sample_rate_hz();
    let freqs: Vec<f64> = (0..spec.len()).map(|k| k as f64 * rate / n as f64).collect();
    let mags: Vec<f64> = spec
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let scale = if k == 0 || (n % 2 == 0 && k == n / 2) { 1.0 } else { 2.0 };
            scale * c.norm() / n as f64
        })
        .collect();
    Ok((freqs, mags))
}

/// Densely sampled magnitude spectrum of a windowed, de-meaned signal.
///
/// Removes the mean, applies a Hann window and zero-pads by `zero_pad`
/// before the FFT; used by the rate estimators, where sub-BPM frequency
/// resolution matters more than calibrated amplitudes.
pub fn dense_spectrum(samples: &[f64], rate_hz: f64, zero_pad: usize) -> (Vec<f64>, Vec<f64>) {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let windowed: Vec<f64> = samples
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos();
            (v - mean) * w
        })
        .collect();
    let nfft = (n * zero_pad.max(1)).next_power_of_two();
    let spec = fft::rfft(&windowed, nfft);
    let freqs: Vec<f64> = (0..spec.len()).map(|k| k as f64 * rate_hz / nfft as f64).collect();
    let mags: Vec<f64> = spec.iter().map(|c| c.norm()).collect();
    (freqs, mags)
}

/// Refine a spectral peak location by fitting a parabola through the
/// log-magnitudes of the peak bin and its neighbours. Returns the refined
/// frequency.
pub fn parabolic_peak_freq(freqs: &[f64], mags: &[f64], peak_idx: usize) -> f64 {
    if peak_idx == 0 || peak_idx + 1 >= mags.len() {
        return freqs[peak_idx];
    }
    let eps = 1e-300;
    let l = (mags[peak_idx - 1] + eps).ln();
    let c = (mags[peak_idx] + eps).ln();
    let r = (mags[peak_idx + 1] + eps).ln();
    let denom = l - 2.0 * c + r;
    if denom.abs() < 1e-30 {
        return freqs[peak_idx];
    }
    let delta = 0.5 * (l - r) / denom;
    let df = freqs[1] - freqs[0];
    freqs[peak_idx] + delta.clamp(-0.5, 0.5) * df
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_tone_peak_at_frequency() {
        let fs = 1000.0;
        let n = 10_000;
        let x: Vec<f64> =
            (0..n).map(|i| (2.0 * std::f64::consts::PI * 2.0 * i as f64 / fs).sin()).collect();
        let ts = TimeSeries::mono(x, fs, 0).unwrap();
        let (freqs, mags) = magnitude_spectrum(&ts).unwrap();
        let peak = mags.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!((freqs[peak] - 2.0).abs() < 1e-9);
        assert!((mags[peak] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_signal_all_zero() {
        let ts = TimeSeries::mono(vec![0.0; 1000], 1000.0, 0).unwrap();
        let (_, mags) = magnitude_spectrum(&ts).unwrap();
        assert!(mags.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn two_tone_magnitude_ratio() {
        let fs = 100.0;
        let n = 10_000; // 100 s, so 1.2 and 2.4 Hz fall on exact bins
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                (2.0 * std::f64::consts::PI * 1.2 * t).sin()
                    + 0.5 * (2.0 * std::f64::consts::PI * 2.4 * t).sin()
            })
            .collect();
        let ts = TimeSeries::mono(x, fs, 0).unwrap();
        let (freqs, mags) = magnitude_spectrum(&ts).unwrap();
        let at = |f: f64| {
            let idx = freqs.iter().position(|&x| (x - f).abs() < 1e-9).unwrap();
            mags[idx]
        };
        let ratio = at(1.2) / at(2.4);
        assert!((ratio - 2.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn dense_spectrum_refines_off_bin_tone() {
        let fs = 1000.0;
        let n = 10_000;
        let f0 = 1.234; // not on a 0.1 Hz bin
        let x: Vec<f64> =
            (0..n).map(|i| (2.0 * std::f64::consts::PI * f0 * i as f64 / fs).sin()).collect();
        let (freqs, mags) = dense_spectrum(&x, fs, 8);
        let lo = freqs.iter().position(|&f| f >= 0.5).unwrap();
        let hi = freqs.iter().position(|&f| f > 3.0).unwrap();
        let peak = (lo..hi).max_by(|&a, &b| mags[a].total_cmp(&mags[b])).unwrap();
        let refined = parabolic_peak_freq(&freqs, &mags, peak);
        assert!((refined - f0).abs() < 0.01, "refined {refined} vs {f0}");
    }
}
