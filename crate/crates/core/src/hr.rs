//! Windowed beat-interval heart-rate extraction from a cleaned heart-signal
//! waveform.

use crate::dsp;
use crate::error::Result;
use crate::signal::{segment, TimeSeries, WindowSpec};

/// One window estimate. `bpm` is `None` only for leading windows where no
/// estimate exists yet (later failures carry the previous value with
/// confidence 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HrEntry {
    pub start_ms: i64,
    pub bpm: Option<f64>,
    pub confidence: f64,
}

/// Timestamped heart-rate sequence at a fixed stride.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HrSeries {
    pub entries: Vec<HrEntry>,
}

impl HrSeries {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries carrying a usable estimate (confidence above `min_confidence`
    /// and a present value).
    pub fn valid(&self, min_confidence: f64) -> impl Iterator<Item = (&HrEntry, f64)> {
        self.entries
            .iter()
            .filter(move |e| e.confidence > min_confidence)
            .filter_map(|e| e.bpm.map(|b| (e, b)))
    }
}

/// Tunables of the windowed estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HrEstimatorConfig {
    pub window_s: f64,
    pub overlap_s: f64,
    pub smooth_sigma_s: f64,
    pub peak_min_distance_s: f64,
    pub peak_prominence: f64,
    /// Trailing moving-average length over the per-window estimates.
    pub smooth_len: usize,
    pub min_bpm: f64,
    pub max_bpm: f64,
}

impl Default for HrEstimatorConfig {
    fn default() -> Self {
        Self {
            window_s: 10.0,
            overlap_s: 5.0,
            smooth_sigma_s: 0.04,
            peak_min_distance_s: 0.25,
            peak_prominence: 0.1,
            smooth_len: 5,
            min_bpm: 40.0,
            max_bpm: 200.0,
        }
    }
}

/// Estimate heart rate per overlapping window.
///
/// Per window: Hilbert envelope, Gaussian smoothing, peak detection, then
/// BPM from the mean inter-peak interval. Windows with fewer than two peaks
/// carry the previous estimate at confidence 0. A trailing moving average
/// over the window sequence removes outliers. Confidence is the fraction of
/// inter-peak intervals within 20% of the window's median interval.
pub fn estimate_hr(clean: &TimeSeries, cfg: &HrEstimatorConfig) -> Result<HrSeries> {
    let spec = WindowSpec::new(cfg.window_s, cfg.overlap_s)?;
    let windows = segment(clean, &spec)?;
    let mut raw: Vec<(i64, Option<f64>, f64)> = Vec::with_capacity(windows.len());
    for w in &windows {
        let est = window_bpm(&w.data, cfg)?;
        raw.push((w.start_time_ms, est.map(|e| e.0), est.map(|e| e.1).unwrap_or(0.0)));
    }

    // Carry failed windows forward.
    let mut carried: Vec<(i64, Option<f64>, f64)> = Vec::with_capacity(raw.len());
    let mut last: Option<f64> = None;
    for (start, bpm, conf) in raw {
        match bpm {
            Some(b) => {
                let flagged = !(cfg.min_bpm..=cfg.max_bpm).contains(&b);
                carried.push((start, Some(b), if flagged { 0.0 } else { conf }));
                last = Some(b);
            }
            None => carried.push((start, last, 0.0)),
        }
    }

    // Trailing moving average over entries with a value.
    let values: Vec<f64> = carried.iter().filter_map(|e| e.1).collect();
    let smoothed = dsp::moving_average(&values, cfg.smooth_len.max(1));
    let mut it = smoothed.into_iter();
    let entries = carried
        .into_iter()
        .map(|(start_ms, bpm, confidence)| HrEntry {
            start_ms,
            bpm: bpm.map(|_| it.next().unwrap()),
            confidence,
        })
        .collect();
    Ok(HrSeries { entries })
}

/// Raw single-window estimate: (bpm, confidence), or None when fewer than
/// two envelope peaks exist.
fn window_bpm(window: &TimeSeries, cfg: &HrEstimatorConfig) -> Result<Option<(f64, f64)>> {
    let env = dsp::hilbert_envelope(window)?;
    let smooth = dsp::gaussian_smooth(&env, cfg.smooth_sigma_s)?;
    let peaks = dsp::detect_peaks(&smooth, cfg.peak_min_distance_s, cfg.peak_prominence)?;
    if peaks.len() < 2 {
        return Ok(None);
    }
    let intervals: Vec<f64> =
        peaks.windows(2).map(|p| p[1].time_s - p[0].time_s).collect();
    let mean = intervals.iter().sum::<f64>() / intervals.len() as f64;
    let mut sorted = intervals.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = sorted[sorted.len() / 2];
    let consistent = intervals
        .iter()
        .filter(|&&iv| (iv - median).abs() <= 0.2 * median)
        .count();
    let confidence = consistent as f64 / intervals.len() as f64;
    Ok(Some((60.0 / mean, confidence)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::synth::{generate, HrProfile, SynthScenario};

    /// One Gaussian bump per beat, like a reconstructed heart signal.
    fn pulse_signal(beat_times: &[f64], duration_s: f64, fs: f64) -> TimeSeries {
        let n = (duration_s * fs) as usize;
        let mut x = vec![0.0; n];
        let sigma = 0.02 * fs;
        for &bt in beat_times {
            let c = bt * fs;
            let lo = ((c - 4.0 * sigma).max(0.0)) as usize;
            let hi = ((c + 4.0 * sigma) as usize).min(n);
            for (i, v) in x.iter_mut().enumerate().take(hi).skip(lo) {
                let d = i as f64 - c;
                *v += (-d * d / (2.0 * sigma * sigma)).exp();
            }
        }
        TimeSeries::mono(x, fs, 0).unwrap()
    }

    fn uniform_beats(period_s: f64, duration_s: f64) -> Vec<f64> {
        let mut t = 0.25;
        let mut out = Vec::new();
        while t < duration_s {
            out.push(t);
            t += period_s;
        }
        out
    }

    #[test]
    fn one_second_pulses_give_60_bpm() {
        let x = pulse_signal(&uniform_beats(1.0, 40.0), 40.0, 1000.0);
        let hr = estimate_hr(&x, &HrEstimatorConfig::default()).unwrap();
        assert_eq!(hr.len(), 7); // floor((40-10)/5)+1
        for e in &hr.entries {
            assert!((e.bpm.unwrap() - 60.0).abs() < 1e-6, "entry {e:?}");
            assert!(e.confidence > 0.9);
        }
    }

    #[test]
    fn half_second_pulses_give_120_bpm() {
        let x = pulse_signal(&uniform_beats(0.5, 30.0), 30.0, 1000.0);
        let hr = estimate_hr(&x, &HrEstimatorConfig::default()).unwrap();
        for e in &hr.entries {
            assert!((e.bpm.unwrap() - 120.0).abs() < 1e-6);
        }
    }

    #[test]
    fn stride_is_five_seconds_and_count_matches() {
        let x = pulse_signal(&uniform_beats(0.8, 62.0), 62.0, 1000.0);
        let hr = estimate_hr(&x, &HrEstimatorConfig::default()).unwrap();
        assert_eq!(hr.len(), (62 - 10) / 5 + 1);
        for pair in hr.entries.windows(2) {
            assert_eq!(pair[1].start_ms - pair[0].start_ms, 5000);
        }
    }

    #[test]
    fn synthetic_heart_signal_at_80_bpm() {
        // The generator's true beat times drive a clean one-bump-per-beat
        // signal; every window must read 80 +- 1 BPM.
        let sc = SynthScenario {
            duration_s: 60.0,
            hr_profile: HrProfile::Constant(80.0),
            snr_db: 30.0,
            ..SynthScenario::stationary(80.0, 17)
        };
        let (_, _, truth) = generate(&sc).unwrap();
        let mut x = pulse_signal(&truth.beat_times_s, 60.0, 1000.0);
        // Mild additive noise.
        let noisy: Vec<f64> = x
            .channel(0)
            .iter()
            .enumerate()
            .map(|(i, &v)| v + 0.02 * ((i * 2654435761) % 1000) as f64 / 1000.0)
            .collect();
        x = TimeSeries::mono(noisy, 1000.0, 0).unwrap();
        let hr = estimate_hr(&x, &HrEstimatorConfig::default()).unwrap();
        for e in &hr.entries {
            let bpm = e.bpm.unwrap();
            assert!((bpm - 80.0).abs() <= 1.0, "window at {} ms read {bpm}", e.start_ms);
        }
    }

    #[test]
    fn ramp_tracks_generator_truth() {
        // 2-minute ramp 60 -> 120 BPM: estimates follow the generator's
        // per-window mean heart rate through the same trailing average.
        let sc = SynthScenario {
            duration_s: 120.0,
            hr_profile: HrProfile::Ramp { start_bpm: 60.0, end_bpm: 120.0 },
            snr_db: f64::INFINITY,
            ..SynthScenario::stationary(60.0, 23)
        };
        let (_, _, truth) = generate(&sc).unwrap();
        let x = pulse_signal(&truth.beat_times_s, 120.0, 1000.0);
        let cfg = HrEstimatorConfig::default();
        let hr = estimate_hr(&x, &cfg).unwrap();

        // Oracle: window means from true beat times, through the same
        // trailing moving average.
        let truth_means: Vec<f64> = (0..hr.len())
            .map(|i| truth.window_mean_bpm(i as f64 * 5.0, 10.0).unwrap())
            .collect();
        let truth_smoothed = crate::dsp::moving_average(&truth_means, cfg.smooth_len);
        for (i, e) in hr.entries.iter().enumerate().skip(cfg.smooth_len) {
            let err = (e.bpm.unwrap() - truth_smoothed[i]).abs();
            assert!(err <= 3.0, "window {i}: {} vs {} ({err} BPM)", e.bpm.unwrap(), truth_smoothed[i]);
        }
    }

    #[test]
    fn flat_signal_yields_no_estimates() {
        let x = TimeSeries::mono(vec![0.5; 20_000], 1000.0, 0).unwrap();
        let hr = estimate_hr(&x, &HrEstimatorConfig::default()).unwrap();
        for e in &hr.entries {
            assert_eq!(e.bpm, None);
            assert_eq!(e.confidence, 0.0);
        }
    }

    #[test]
    fn dropout_window_carries_previous_value() {
        // Pulses for 20 s, then silence: windows past the pulse region carry
        // the last estimate with confidence 0.
        let mut beats = uniform_beats(1.0, 20.0);
        beats.retain(|&t| t < 20.0);
        let x = pulse_signal(&beats, 40.0, 1000.0);
        let hr = estimate_hr(&x, &HrEstimatorConfig::default()).unwrap();
        let last = hr.entries.last().unwrap();
        assert_eq!(last.confidence, 0.0);
        assert!((last.bpm.unwrap() - 60.0).abs() < 1.0);
    }

    #[test]
    fn shift_by_stride_shifts_estimates() {
        let fs = 1000.0;
        let beats = uniform_beats(0.77, 70.0);
        let x = pulse_signal(&beats, 70.0, fs);
        let cfg = HrEstimatorConfig::default();
        let hr = estimate_hr(&x, &cfg).unwrap();
        // Shift by exactly one stride (5 s).
        let shifted_samples: Vec<f64> = x.channel(0)[5000..].to_vec();
        let shifted = TimeSeries::mono(shifted_samples, fs, 0).unwrap();
        let hr_shifted = estimate_hr(&shifted, &cfg).unwrap();
        // Interior raw windows coincide: window i of the shifted signal sees
        // the samples of window i+1 of the original. After the trailing
        // average settles the sequences agree.
        for i in cfg.smooth_len..hr_shifted.len() {
            let a = hr.entries[i + 1].bpm.unwrap();
            let b = hr_shifted.entries[i].bpm.unwrap();
            assert!((a - b).abs() < 1e-9, "window {i}: {a} vs {b}");
        }
    }

    #[test]
    fn amplitude_invariance() {
        let beats = uniform_beats(0.9, 40.0);
        let x = pulse_signal(&beats, 40.0, 1000.0);
        let scaled = TimeSeries::mono(
            x.channel(0).iter().map(|v| v * 7.3).collect(),
            1000.0,
            0,
        )
        .unwrap();
        let cfg = HrEstimatorConfig::default();
        let a = estimate_hr(&x, &cfg).unwrap();
        let b = estimate_hr(&scaled, &cfg).unwrap();
        for (ea, eb) in a.entries.iter().zip(b.entries.iter()) {
            assert_eq!(ea.bpm, eb.bpm);
        }
    }

    #[test]
    fn too_short_input_is_empty_input_error() {
        let x = TimeSeries::mono(vec![0.0; 5000], 1000.0, 0).unwrap();
        assert!(matches!(
            estimate_hr(&x, &HrEstimatorConfig::default()),
            Err(Error::EmptyInput(_))
        ));
    }
}
