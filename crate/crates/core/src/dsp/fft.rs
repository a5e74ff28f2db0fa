//! Thin wrappers around rustfft with a per-thread planner cache.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::sync::Arc;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub fn forward_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

pub fn inverse_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Forward FFT of a real signal, zero-padded to `nfft`; returns the one-sided
/// half spectrum (`nfft/2 + 1` bins, unnormalized).
pub fn rfft(x: &[f64], nfft: usize) -> Vec<Complex<f64>> {
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    for (dst, &src) in buf.iter_mut().zip(x.iter()) {
        dst.re = src;
    }
    forward_plan(nfft).process(&mut buf);
    buf.truncate(nfft / 2 + 1);
    buf
}

/// Inverse of [`rfft`]: reconstructs the full Hermitian spectrum, transforms
/// back and returns the real part scaled by `1/nfft`.
pub fn irfft(half: &[Complex<f64>], nfft: usize) -> Vec<f64> {
    debug_assert_eq!(half.len(), nfft / 2 + 1);
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    buf[..half.len()].copy_from_slice(half);
    for k in half.len()..nfft {
        buf[k] = half[nfft - k].conj();
    }
    inverse_plan(nfft).process(&mut buf);
    let scale = 1.0 / nfft as f64;
    buf.iter().map(|c| c.re * scale).collect()
}
