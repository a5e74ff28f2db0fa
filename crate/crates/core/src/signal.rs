//! Core signal types: uniformly sampled time series, window specs, windowing
//! and audio/ECG stream alignment.

use crate::error::{Error, Result};

/// Uniformly sampled scalar or multichannel signal.
///
/// Channel layout is planar (one contiguous buffer per channel) so DSP
/// operations can consume a single channel as a slice. Values are immutable
/// after construction; all constructors validate channel lengths and
/// finiteness.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    channels: Vec<Vec<f64>>,
    sample_rate_hz: f64,
    start_time_ms: i64,
}

impl TimeSeries {
    /// Build a multichannel series. All channels must be non-empty, equally
    /// long and finite; the sample rate must be positive.
    pub fn new(channels: Vec<Vec<f64>>, sample_rate_hz: f64, start_time_ms: i64) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::EmptyInput("time series needs at least one channel".into()));
        }
        if !(sample_rate_hz > 0.0) || !sample_rate_hz.is_finite() {
            return Err(Error::Data(format!("sample rate must be > 0, got {sample_rate_hz}")));
        }
        let len = channels[0].len();
        if len == 0 {
            return Err(Error::EmptyInput("time series has no samples".into()));
        }
        for (i, ch) in channels.iter().enumerate() {
            if ch.len() != len {
                return Err(Error::Shape(format!(
                    "channel {i} has {} samples, expected {len}",
                    ch.len()
                )));
            }
            if let Some(j) = ch.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "non-finite sample at channel {i}, index {j}"
                )));
            }
        }
        Ok(Self { channels, sample_rate_hz, start_time_ms })
    }

    /// Single-channel constructor.
    pub fn mono(samples: Vec<f64>, sample_rate_hz: f64, start_time_ms: i64) -> Result<Self> {
        Self::new(vec![samples], sample_rate_hz, start_time_ms)
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn start_time_ms(&self) -> i64 {
        self.start_time_ms
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz
    }

    /// End of the covered time range in epoch milliseconds (exclusive).
    pub fn end_time_ms(&self) -> i64 {
        self.start_time_ms + (self.len() as f64 / self.sample_rate_hz * 1000.0).round() as i64
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    /// The only channel of a single-channel series.
    pub fn single(&self) -> Result<&[f64]> {
        if self.channels.len() != 1 {
            return Err(Error::Shape(format!(
                "expected single channel, got {}",
                self.channels.len()
            )));
        }
        Ok(&self.channels[0])
    }

    /// Replace samples, keeping rate and start time. Lengths may differ.
    pub fn with_channels(&self, channels: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(channels, self.sample_rate_hz, self.start_time_ms)
    }

    /// Sub-range `[start, start+len)` in samples, with the start time moved
    /// accordingly.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() {
            return Err(Error::Shape(format!(
                "slice [{start}, {}) out of bounds for length {}",
                start + len,
                self.len()
            )));
        }
        let channels = self
            .channels
            .iter()
            .map(|ch| ch[start..start + len].to_vec())
            .collect();
        let offset_ms = (start as f64 / self.sample_rate_hz * 1000.0).round() as i64;
        Self::new(channels, self.sample_rate_hz, self.start_time_ms + offset_ms)
    }
}

/// Length/overlap description of an analysis window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    length_s: f64,
    overlap_s: f64,
}

impl WindowSpec {
    pub fn new(length_s: f64, overlap_s: f64) -> Result<Self> {
        if !(length_s > 0.0) {
            return Err(Error::Config(format!("window length must be > 0, got {length_s}")));
        }
        if !(0.0..length_s).contains(&overlap_s) {
            return Err(Error::Config(format!(
                "overlap must satisfy 0 <= overlap < length, got {overlap_s} for length {length_s}"
            )));
        }
        Ok(Self { length_s, overlap_s })
    }

    pub fn length_s(&self) -> f64 {
        self.length_s
    }

    pub fn overlap_s(&self) -> f64 {
        self.overlap_s
    }

    pub fn stride_s(&self) -> f64 {
        self.length_s - self.overlap_s
    }
}

/// One extracted window of a parent series.
#[derive(Debug, Clone)]
pub struct Window {
    pub data: TimeSeries,
    pub index: usize,
    pub start_time_ms: i64,
}

/// Segment `x` into overlapping windows at stride `length - overlap`.
///
/// Window `i` starts at sample `i * stride`; a trailing stretch shorter than
/// one full window is discarded so every window has identical shape.
pub fn segment(x: &TimeSeries, spec: &WindowSpec) -> Result<Vec<Window>> {
    let rate = x.sample_rate_hz();
    let win_len = (spec.length_s() * rate).round() as usize;
    let stride = (spec.stride_s() * rate).round() as usize;
    if win_len == 0 || stride == 0 {
        return Err(Error::Config(format!(
            "window spec {spec:?} collapses to zero samples at {rate} Hz"
        )));
    }
    if x.len() < win_len {
        return Err(Error::EmptyInput(format!(
            "signal of {} samples is shorter than one {win_len}-sample window",
            x.len()
        )));
    }
    let count = (x.len() - win_len) / stride + 1;
    let mut windows = Vec::with_capacity(count);
    for i in 0..count {
        let start = i * stride;
        let data = x.slice(start, win_len)?;
        let start_time_ms = data.start_time_ms();
        windows.push(Window { data, index: i, start_time_ms });
    }
    Ok(windows)
}

/// Trim two streams to their common time interval.
///
/// Start/end are trimmed to whole samples of each stream, so the residual
/// offset between the returned streams is bounded by one sample period of the
/// coarser stream.
pub fn align_streams(a: &TimeSeries, b: &TimeSeries) -> Result<(TimeSeries, TimeSeries)> {
    let t0 = a.start_time_ms().max(b.start_time_ms());
    let t1 = a.end_time_ms().min(b.end_time_ms());
    if t1 <= t0 {
        return Err(Error::Alignment(format!(
            "streams do not overlap: [{}, {}) vs [{}, {})",
            a.start_time_ms(),
            a.end_time_ms(),
            b.start_time_ms(),
            b.end_time_ms()
        )));
    }
    Ok((trim_to(a, t0, t1)?, trim_to(b, t0, t1)?))
}

fn trim_to(x: &TimeSeries, t0_ms: i64, t1_ms: i64) -> Result<TimeSeries> {
    let rate = x.sample_rate_hz();
    // First sample at or after t0; truncation (not rounding) keeps the
    // operation idempotent.
    let start_idx = (((t0_ms - x.start_time_ms()) as f64 / 1000.0 * rate).ceil() as i64).max(0) as usize;
    let end_idx = ((((t1_ms - x.start_time_ms()) as f64 / 1000.0 * rate).floor() as i64) as usize)
        .min(x.len());
    if end_idx <= start_idx {
        return Err(Error::Alignment(format!(
            "trimming to [{t0_ms}, {t1_ms}) ms leaves no samples"
        )));
    }
    x.slice(start_idx, end_idx - start_idx)
}
