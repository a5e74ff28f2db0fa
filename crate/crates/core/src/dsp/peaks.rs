//! Prominence-thresholded peak picking with a minimum-distance constraint.

use crate::error::Result;
use crate::signal::TimeSeries;

/// A detected local maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub index: usize,
    pub time_s: f64,
    pub height: f64,
}

/// Detect local maxima above a relative height threshold, enforcing a
/// minimum spacing by greedy selection in order of descending height.
///
/// The threshold is `min_prominence_frac` of the window's dynamic range
/// (max - min) above the window minimum, which makes detection invariant to
/// amplitude scaling and offsets.
pub fn detect_peaks(
    x: &TimeSeries,
    min_distance_s: f64,
    min_prominence_frac: f64,
) -> Result<Vec<Peak>> {
    let samples = x.single()?;
    let rate = x.sample_rate_hz();
    let min_dist = (min_distance_s * rate).round().max(1.0) as usize;

    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    // A dynamic range at floating-point noise level (relative to the signal
    // magnitude) is a flat signal, not a peaked one.
    let scale = hi.abs().max(lo.abs());
    if !(range > 0.0) || range <= 64.0 * f64::EPSILON * scale {
        return Ok(Vec::new());
    }
    let threshold = lo + min_prominence_frac * range;

    // Candidate local maxima; plateaus yield their center sample.
    let mut candidates: Vec<usize> = Vec::new();
    let n = samples.len();
    let mut i = 1;
    while i + 1 < n {
        if samples[i] > samples[i - 1] {
            // Scan to the end of a possible plateau.
            let mut j = i;
            while j + 1 < n && samples[j + 1] == samples[i] {
                j += 1;
            }
            if j + 1 < n && samples[j + 1] < samples[i] && samples[i] >= threshold {
                candidates.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }

    // Highest-first greedy selection under the min-distance constraint.
    candidates.sort_by(|&a, &b| samples[b].total_cmp(&samples[a]).then(a.cmp(&b)));
    let mut taken: Vec<usize> = Vec::new();
    for &c in &candidates {
        if taken.iter().all(|&t| t.abs_diff(c) >= min_dist) {
            taken.push(c);
        }
    }
    taken.sort_unstable();

    Ok(taken
        .into_iter()
        .map(|index| Peak { index, time_s: index as f64 / rate, height: samples[index] })
        .collect())
}
