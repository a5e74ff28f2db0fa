//! Short-time Fourier analysis/synthesis used by the spectrogram pipeline.
//!
//! Frames are windowed with a periodic Hann window, zero-padded to the FFT
//! size and laid out at a fixed hop. Synthesis is weighted overlap-add with
//! squared-window normalization.

use crate::dsp::fft;
use rustfft::num_complex::Complex;

pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Forward STFT over an already padded buffer: frame `f` covers
/// `ext[f*hop .. f*hop + win.len())`. Returns `n_frames` rows of one-sided
/// spectra (`nfft/2 + 1` bins).
pub fn stft_frames(
    ext: &[f64],
    win: &[f64],
    hop: usize,
    nfft: usize,
    n_frames: usize,
) -> Vec<Vec<Complex<f64>>> {
    let wlen = win.len();
    debug_assert!(ext.len() >= (n_frames - 1) * hop + wlen);
    let plan = fft::forward_plan(nfft);
    let mut frames = Vec::with_capacity(n_frames);
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    for f in 0..n_frames {
        let start = f * hop;
        for b in buf.iter_mut() {
            *b = Complex::new(0.0, 0.0);
        }
        for i in 0..wlen {
            buf[i].re = ext[start + i] * win[i];
        }
        plan.process(&mut buf);
        frames.push(buf[..nfft / 2 + 1].to_vec());
    }
    frames
}

/// Weighted overlap-add inverse of [`stft_frames`]. Returns a buffer of
/// length `(n_frames - 1) * hop + win.len()`.
pub fn istft_ola(
    frames: &[Vec<Complex<f64>>],
    win: &[f64],
    hop: usize,
    nfft: usize,
) -> Vec<f64> {
    let wlen = win.len();
    let n_frames = frames.len();
    let out_len = (n_frames - 1) * hop + wlen;
    let mut acc = vec![0.0; out_len];
    let mut norm = vec![0.0; out_len];
    for (f, frame) in frames.iter().enumerate() {
        let time = fft::irfft(frame, nfft);
        let start = f * hop;
        for i in 0..wlen {
            acc[start + i] += win[i] * time[i];
            norm[start + i] += win[i] * win[i];
        }
    }
    for (a, &n) in acc.iter_mut().zip(norm.iter()) {
        if n > 1e-12 {
            *a /= n;
        }
    }
    acc
}
