//! DSP primitives: IIR bandpass filtering, rational resampling, Hilbert
//! envelope, Gaussian smoothing, magnitude spectra, peak detection and a
//! trailing moving average.

pub mod envelope;
pub(crate) mod fft;
pub mod filter;
pub mod peaks;
pub mod resample;
pub mod spectrum;

pub use envelope::{gaussian_smooth, hilbert_envelope};
pub use filter::{butter_bandpass, BandpassSpec, SosFilter};
pub use peaks::{detect_peaks, Peak};
pub use resample::resample;
pub use spectrum::magnitude_spectrum;

/// Trailing moving average: element `i` is the mean of the last
/// `min(k, i + 1)` values. Output length equals input length, so the result
/// is usable in streaming settings without future samples.
pub fn moving_average(xs: &[f64], k: usize) -> Vec<f64> {
    assert!(k >= 1, "moving average window must be >= 1");
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    for i in 0..xs.len() {
        acc += xs[i];
        if i >= k {
            acc -= xs[i - k];
        }
        out.push(acc / (i.min(k - 1) + 1) as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sequence_unchanged() {
        assert_eq!(moving_average(&[60.0; 5], 5), vec![60.0; 5]);
    }

    #[test]
    fn outlier_spread_by_hand() {
        let out = moving_average(&[60.0, 60.0, 120.0, 60.0, 60.0], 5);
        assert_eq!(out, vec![60.0, 60.0, 80.0, 75.0, 72.0]);
    }

    #[test]
    fn window_of_one_is_identity() {
        let xs = vec![3.0, -1.0, 7.5, 0.25];
        assert_eq!(moving_average(&xs, 1), xs);
    }
}
