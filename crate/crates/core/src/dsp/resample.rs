//! Rational resampling with a Kaiser-windowed sinc anti-aliasing filter,
//! evaluated in polyphase form (only the needed output samples are computed).

use crate::error::{Error, Result};
use crate::signal::TimeSeries;

/// Zeroth-order modified Bessel function of the first kind (series expansion).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half_sq = (x / 2.0) * (x / 2.0);
    for k in 1..64 {
        term *= half_sq / ((k * k) as f64);
        sum += term;
        if term < sum * 1e-18 {
            break;
        }
    }
    sum
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Reduce a rate conversion to the smallest integer up/down pair. Rates are
/// interpreted in millihertz so fractional rates stay exact.
fn rational_ratio(from_hz: f64, to_hz: f64) -> Result<(u64, u64)> {
    let from = (from_hz * 1000.0).round() as u64;
    let to = (to_hz * 1000.0).round() as u64;
    if from == 0 || to == 0 {
        return Err(Error::Config(format!("invalid resample rates {from_hz} -> {to_hz}")));
    }
    let g = gcd(from, to);
    Ok((to / g, from / g))
}

/// Symmetric Kaiser-windowed sinc lowpass used as the polyphase prototype.
///
/// Cutoff sits at the tighter of the two Nyquist frequencies; the half length
/// is `taps_per_branch * max(up, down)` samples in the upsampled domain.
struct Prototype {
    taps: Vec<f64>,
    half: usize,
}

impl Prototype {
    fn design(up: u64, down: u64) -> Self {
        let max_rate = up.max(down) as usize;
        let half = 10 * max_rate;
        let cutoff = 1.0 / max_rate as f64; // fraction of upsampled Nyquist
        let beta = 8.6;
        let denom = bessel_i0(beta);
        let mut taps = Vec::with_capacity(2 * half + 1);
        for i in 0..=2 * half {
            let m = i as f64 - half as f64;
            let sinc = if m == 0.0 {
                cutoff
            } else {
                (std::f64::consts::PI * cutoff * m).sin() / (std::f64::consts::PI * m)
            };
            let r = m / half as f64;
            let window = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / denom;
            taps.push(sinc * window);
        }
        // Unity DC gain over the whole filter; per-branch ripple stays at the
        // stopband level.
        let sum: f64 = taps.iter().sum();
        for t in taps.iter_mut() {
            *t /= sum;
        }
        Self { taps, half }
    }
}

/// Resample one channel from `up/down` rational ratio.
fn resample_channel(x: &[f64], up: u64, down: u64, proto: &Prototype) -> Vec<f64> {
    let up_i = up as i64;
    let down_i = down as i64;
    let out_len = ((x.len() as u64 * up).div_ceil(down)) as usize;
    let half = proto.half as i64;
    let gain = up as f64;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len as i64 {
        // Center of the symmetric kernel in the upsampled domain.
        let center = n * down_i;
        let j_min = (center - half).div_euclid(up_i) + i64::from((center - half).rem_euclid(up_i) != 0);
        let j_max = (center + half).div_euclid(up_i);
        let mut acc = 0.0;
        let lo = j_min.max(0);
        let hi = j_max.min(x.len() as i64 - 1);
        for j in lo..=hi {
            let tap = (center - j * up_i + half) as usize;
            acc += x[j as usize] * proto.taps[tap];
        }
        out.push(acc * gain);
    }
    out
}

/// Resample all channels of `x` to `target_hz`.
///
/// The anti-aliasing lowpass is applied before decimation; the symmetric
/// kernel keeps the output delay-free, so events keep their timestamps.
pub fn resample(x: &TimeSeries, target_hz: f64) -> Result<TimeSeries> {
    if !(target_hz > 0.0) || !target_hz.is_finite() {
        return Err(Error::Config(format!("target rate must be > 0, got {target_hz}")));
    }
    if (target_hz - x.sample_rate_hz()).abs() < 1e-9 {
        return Ok(x.clone());
    }
    let (up, down) = rational_ratio(x.sample_rate_hz(), target_hz)?;
    let proto = Prototype::design(up, down);
    let channels: Vec<Vec<f64>> = x
        .channels()
        .iter()
        .map(|ch| resample_channel(ch, up, down, &proto))
        .collect();
    TimeSeries::new(channels, target_hz, x.start_time_ms())
}
