//! Triangular mel filterbank and its pseudo-inverse.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2};

pub fn hz_to_mel(f_hz: f64) -> f64 {
    2595.0 * (1.0 + f_hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Area-normalized triangular filterbank over one-sided FFT bins, plus the
/// Moore-Penrose pseudo-inverse used for approximate mel-to-linear mapping.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    weights: Array2<f64>, // (n_mels, n_bins)
    pinv: Array2<f64>,    // (n_bins, n_mels)
    edges_hz: Vec<f64>,   // n_mels + 2 triangle edges
}

impl MelFilterbank {
    pub fn new(
        n_mels: usize,
        nfft: usize,
        sample_rate_hz: f64,
        fmin_hz: f64,
        fmax_hz: f64,
    ) -> Result<Self> {
        let n_bins = nfft / 2 + 1;
        if n_mels == 0 || n_mels > n_bins {
            return Err(Error::Config(format!(
                "n_mels must be in 1..={n_bins}, got {n_mels}"
            )));
        }
        if !(fmin_hz >= 0.0 && fmax_hz > fmin_hz && fmax_hz <= sample_rate_hz / 2.0 + 1e-9) {
            return Err(Error::Config(format!(
                "mel range {fmin_hz}..{fmax_hz} Hz invalid for rate {sample_rate_hz}"
            )));
        }

        let mel_lo = hz_to_mel(fmin_hz);
        let mel_hi = hz_to_mel(fmax_hz);
        let edges_hz: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
            .collect();

        let mut weights = Array2::zeros((n_mels, n_bins));
        for m in 0..n_mels {
            let (f_l, f_c, f_r) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
            let area_norm = 2.0 / (f_r - f_l);
            for k in 0..n_bins {
                let f = k as f64 * sample_rate_hz / nfft as f64;
                let w = if f >= f_l && f <= f_c && f_c > f_l {
                    (f - f_l) / (f_c - f_l)
                } else if f > f_c && f <= f_r && f_r > f_c {
                    (f_r - f) / (f_r - f_c)
                } else {
                    0.0
                };
                weights[(m, k)] = w * area_norm;
            }
        }

        let pinv = right_pseudo_inverse(&weights)?;
        Ok(Self { weights, pinv, edges_hz })
    }

    pub fn n_mels(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    /// Mel-band energies of one frame of linear power spectrum.
    pub fn apply(&self, power: &[f64]) -> Array1<f64> {
        let x = Array1::from_iter(power.iter().copied());
        self.weights.dot(&x)
    }

    /// Approximate linear power spectrum from mel energies: pseudo-inverse
    /// projection with negative values clamped to zero (power must be
    /// non-negative).
    pub fn approx_invert(&self, mel: &[f64]) -> Array1<f64> {
        let m = Array1::from_iter(mel.iter().copied());
        let mut lin = self.pinv.dot(&m);
        lin.mapv_inplace(|v| v.max(0.0));
        lin
    }

    /// Triangle center frequencies.
    pub fn center_freqs_hz(&self) -> Vec<f64> {
        self.edges_hz[1..=self.n_mels()].to_vec()
    }

    /// Index of the filter whose response at `f_hz` is largest.
    pub fn bin_containing(&self, f_hz: f64) -> usize {
        let mut best = (0usize, f64::MIN);
        for m in 0..self.n_mels() {
            let (f_l, f_c, f_r) = (self.edges_hz[m], self.edges_hz[m + 1], self.edges_hz[m + 2]);
            let w = if f_hz >= f_l && f_hz <= f_c && f_c > f_l {
                (f_hz - f_l) / (f_c - f_l)
            } else if f_hz > f_c && f_hz <= f_r && f_r > f_c {
                (f_r - f_hz) / (f_r - f_c)
            } else {
                0.0
            };
            let w = w * 2.0 / (f_r - f_l);
            if w > best.1 {
                best = (m, w);
            }
        }
        best.0
    }

    /// Width in Hz of the triangle peaked at filter `m` (center-to-center
    /// spacing of its neighbours).
    pub fn bin_width_hz(&self, m: usize) -> f64 {
        (self.edges_hz[m + 2] - self.edges_hz[m]) / 2.0
    }
}

/// `W^T (W W^T)^{-1}` for a full-row-rank matrix, via Gauss-Jordan
/// elimination of the (small) Gram matrix.
fn right_pseudo_inverse(w: &Array2<f64>) -> Result<Array2<f64>> {
    let gram = w.dot(&w.t());
    let n = gram.nrows();
    let mut a = gram.clone();
    let mut inv = Array2::<f64>::eye(n);
    for col in 0..n {
        // Partial pivoting.
        let pivot = (col..n)
            .max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs()))
            .unwrap();
        if a[(pivot, col)].abs() < 1e-12 {
            return Err(Error::Config("mel filterbank is rank-deficient; too many mel bins for this FFT resolution".into()));
        }
        if pivot != col {
            for k in 0..n {
                a.swap((col, k), (pivot, k));
                inv.swap((col, k), (pivot, k));
            }
        }
        let d = a[(col, col)];
        for k in 0..n {
            a[(col, k)] /= d;
            inv[(col, k)] /= d;
        }
        for r in 0..n {
            if r != col {
                let factor = a[(r, col)];
                if factor != 0.0 {
                    for k in 0..n {
                        a[(r, k)] -= factor * a[(col, k)];
                        inv[(r, k)] -= factor * inv[(col, k)];
                    }
                }
            }
        }
    }
    Ok(w.t().dot(&inv))
}
