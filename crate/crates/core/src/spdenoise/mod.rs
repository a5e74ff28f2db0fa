//! Signal-processing heart-rate estimation: the stationary envelope-spectrum
//! baseline, wavelet denoising, and the temporally constrained spectrum
//! search.

pub mod dwt;

pub use dwt::{dwt_denoise, DwtSpec, Wavelet};

use crate::dsp::envelope::{gaussian_smooth_slice, hilbert_envelope_slice};
use crate::dsp::spectrum::{dense_spectrum, parabolic_peak_freq};
use crate::error::{Error, Result};
use crate::hr::{HrEntry, HrSeries};
use crate::signal::{TimeSeries, Window};

/// Physiological search band and the half-width of the per-window search
/// around the previous estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HrBand {
    pub min_bpm: f64,
    pub max_bpm: f64,
    pub search_halfwidth_bpm: f64,
}

impl Default for HrBand {
    fn default() -> Self {
        Self { min_bpm: 40.0, max_bpm: 200.0, search_halfwidth_bpm: 10.0 }
    }
}

impl HrBand {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_bpm > 0.0 && self.max_bpm > self.min_bpm && self.search_halfwidth_bpm > 0.0) {
            return Err(Error::Config(format!("invalid heart-rate band {self:?}")));
        }
        Ok(())
    }
}

/// A rate estimate with a [0, 1] confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HrEstimate {
    pub bpm: f64,
    pub confidence: f64,
}

const SPECTRUM_ZERO_PAD: usize = 8;

/// Width of the envelope smoothing before the FFT. A beat produces two
/// nearby bursts; smoothing merges them into one bump per cycle and rolls
/// off the higher envelope harmonics, so the spectrum argmax lands on the
/// beat fundamental rather than a harmonic.
const ENVELOPE_SMOOTH_SIGMA_S: f64 = 0.1;

/// Envelope power spectrum of a window, densely sampled for sub-BPM peak
/// resolution.
fn envelope_spectrum(x: &TimeSeries) -> Result<(Vec<f64>, Vec<f64>)> {
    let samples = x.single()?;
    let env = hilbert_envelope_slice(samples);
    let smoothed = gaussian_smooth_slice(&env, ENVELOPE_SMOOTH_SIGMA_S * x.sample_rate_hz());
    Ok(dense_spectrum(&smoothed, x.sample_rate_hz(), SPECTRUM_ZERO_PAD))
}

/// Stationary estimator: the dominant envelope-spectrum peak inside the
/// physiological band, converted to BPM.
///
/// Returns an estimation failure when the band holds no local maximum at
/// all; a present but weak peak (for example on wideband noise) comes back
/// with low confidence instead.
pub fn baseline_hr(x: &TimeSeries, band: &HrBand) -> Result<HrEstimate> {
    band.validate()?;
    let (freqs, mags) = envelope_spectrum(x)?;
    let lo_hz = band.min_bpm / 60.0;
    let hi_hz = band.max_bpm / 60.0;
    let lo = freqs.partition_point(|&f| f < lo_hz);
    let hi = freqs.partition_point(|&f| f <= hi_hz);
    if lo + 1 >= hi {
        return Err(Error::Config("frequency band is empty at this resolution".into()));
    }

    // Local maxima strictly inside the band.
    let mut best: Option<usize> = None;
    for k in lo.max(1)..hi.min(mags.len() - 1) {
        if mags[k] >= mags[k - 1] && mags[k] > mags[k + 1] {
            if best.is_none_or(|b| mags[k] > mags[b]) {
                best = Some(k);
            }
        }
    }
    let peak = best.ok_or_else(|| {
        Error::EstimationFailed("no spectral peak inside the heart-rate band".into())
    })?;

    let bpm = 60.0 * parabolic_peak_freq(&freqs, &mags, peak);
    Ok(HrEstimate { bpm, confidence: band_peak_confidence(&mags[lo..hi], mags[peak]) })
}

/// Confidence from how much the peak towers over the band's mean power.
fn band_peak_confidence(band_mags: &[f64], peak_mag: f64) -> f64 {
    let mean_power =
        band_mags.iter().map(|m| m * m).sum::<f64>() / band_mags.len().max(1) as f64;
    if mean_power <= 0.0 {
        return 0.0;
    }
    let ratio = peak_mag * peak_mag / mean_power;
    ((ratio - 8.0) / 12.0).clamp(0.0, 1.0)
}

/// Temporally constrained estimator: the envelope-spectrum argmax within
/// `previous +- halfwidth` BPM, intersected with the physiological band.
///
/// When every prominent peak lies outside the search range the in-range
/// argmax is still returned, flagged with a low confidence (the ratio of
/// the in-range peak to the whole-band peak).
pub fn spectrum_search_hr(x: &TimeSeries, prev_bpm: f64, band: &HrBand) -> Result<HrEstimate> {
    band.validate()?;
    let lo_bpm = (prev_bpm - band.search_halfwidth_bpm).max(band.min_bpm);
    let hi_bpm = (prev_bpm + band.search_halfwidth_bpm).min(band.max_bpm);
    if lo_bpm >= hi_bpm {
        return Err(Error::Config(format!(
            "search range around {prev_bpm} BPM does not intersect the {}..{} band",
            band.min_bpm, band.max_bpm
        )));
    }
    let (freqs, mags) = envelope_spectrum(x)?;
    let range = |lo_hz: f64, hi_hz: f64| {
        (freqs.partition_point(|&f| f < lo_hz), freqs.partition_point(|&f| f <= hi_hz))
    };
    let (slo, shi) = range(lo_bpm / 60.0, hi_bpm / 60.0);
    let (blo, bhi) = range(band.min_bpm / 60.0, band.max_bpm / 60.0);
    if slo >= shi {
        return Err(Error::Config("search range is empty at this resolution".into()));
    }

    let sub_peak = (slo..shi).max_by(|&a, &b| mags[a].total_cmp(&mags[b])).unwrap();
    let band_peak = (blo..bhi).max_by(|&a, &b| mags[a].total_cmp(&mags[b])).unwrap();
    let bpm = (60.0 * parabolic_peak_freq(&freqs, &mags, sub_peak)).clamp(lo_bpm, hi_bpm);
    let confidence = if mags[band_peak] > 0.0 { mags[sub_peak] / mags[band_peak] } else { 0.0 };
    Ok(HrEstimate { bpm, confidence })
}

/// Sequential estimation over consecutive windows: each window is wavelet
/// denoised, then searched around the previous estimate. A failing window
/// carries the previous value with confidence 0.
pub fn track_hr(
    windows: &[Window],
    initial_bpm: f64,
    band: &HrBand,
    dwt_spec: Option<&DwtSpec>,
) -> Result<HrSeries> {
    let mut prev = initial_bpm;
    let mut entries = Vec::with_capacity(windows.len());
    for w in windows {
        let denoised = match dwt_spec {
            Some(spec) => dwt_denoise(&w.data, spec)?,
            None => w.data.clone(),
        };
        match spectrum_search_hr(&denoised, prev, band) {
            Ok(est) => {
                prev = est.bpm;
                entries.push(HrEntry {
                    start_ms: w.start_time_ms,
                    bpm: Some(est.bpm),
                    confidence: est.confidence,
                });
            }
            Err(Error::Config(e)) => return Err(Error::Config(e)),
            Err(_) => {
                entries.push(HrEntry { start_ms: w.start_time_ms, bpm: Some(prev), confidence: 0.0 });
            }
        }
    }
    Ok(HrSeries { entries })
}
