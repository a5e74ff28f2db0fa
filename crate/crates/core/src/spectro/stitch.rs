//! Merge overlapping reconstructed windows into one continuous signal.

use crate::error::{Error, Result};
use crate::signal::{TimeSeries, WindowSpec};

/// Average overlapping regions of consecutive windows laid out at the spec's
/// stride. Every output sample is the mean of all window samples covering it;
/// the output ends where the last window ends.
pub fn stitch(windows: &[TimeSeries], spec: &WindowSpec) -> Result<TimeSeries> {
    let first = windows
        .first()
        .ok_or_else(|| Error::EmptyInput("no windows to stitch".into()))?;
    let rate = first.sample_rate_hz();
    let win_len = first.len();
    for (i, w) in windows.iter().enumerate() {
        if w.sample_rate_hz() != rate || w.len() != win_len || w.num_channels() != 1 {
            return Err(Error::Shape(format!(
                "window {i} has incompatible shape (len {}, rate {}, channels {})",
                w.len(),
                w.sample_rate_hz(),
                w.num_channels()
            )));
        }
    }
    let stride = (spec.stride_s() * rate).round() as usize;
    if stride == 0 {
        return Err(Error::Config("stitch stride rounds to zero samples".into()));
    }

    let total = (windows.len() - 1) * stride + win_len;
    let mut acc = vec![0.0f64; total];
    let mut count = vec![0u32; total];
    for (i, w) in windows.iter().enumerate() {
        let offset = i * stride;
        for (j, &v) in w.channel(0).iter().enumerate() {
            acc[offset + j] += v;
            count[offset + j] += 1;
        }
    }
    for (a, &c) in acc.iter_mut().zip(count.iter()) {
        *a /= c as f64;
    }
    TimeSeries::mono(acc, rate, first.start_time_ms())
}
