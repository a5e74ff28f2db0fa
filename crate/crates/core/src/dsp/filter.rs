//! Butterworth bandpass design (analog prototype + bilinear transform) and
//! zero-phase forward-backward filtering over second-order sections.

use crate::error::{Error, Result};
use crate::signal::TimeSeries;
use rustfft::num_complex::Complex;

/// Bandpass description. `order` is the order of the resulting bandpass
/// transfer function and must be even; the underlying lowpass prototype has
/// `order / 2` poles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandpassSpec {
    pub low_hz: f64,
    pub high_hz: f64,
    pub order: usize,
}

impl BandpassSpec {
    pub fn new(low_hz: f64, high_hz: f64, order: usize) -> Result<Self> {
        if !(low_hz > 0.0 && high_hz > low_hz) {
            return Err(Error::Config(format!(
                "band edges must satisfy 0 < low < high, got {low_hz}..{high_hz}"
            )));
        }
        if order == 0 || order % 2 != 0 {
            return Err(Error::Config(format!("filter order must be even and > 0, got {order}")));
        }
        Ok(Self { low_hz, high_hz, order })
    }

    fn validate_for_rate(&self, sample_rate_hz: f64) -> Result<()> {
        let nyquist = sample_rate_hz / 2.0;
        if self.high_hz >= nyquist {
            return Err(Error::Config(format!(
                "band edge {} Hz is at or above Nyquist ({nyquist} Hz)",
                self.high_hz
            )));
        }
        Ok(())
    }
}

/// One biquad in direct form II transposed.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2], // a1, a2 with a0 normalized to 1
}

impl Biquad {
    fn apply(&self, x: &mut [f64]) {
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for v in x.iter_mut() {
            let xin = *v;
            let y = self.b[0] * xin + s1;
            s1 = self.b[1] * xin - self.a[0] * y + s2;
            s2 = self.b[2] * xin - self.a[1] * y;
            *v = y;
        }
    }

    fn poles_inside_unit_circle(&self) -> bool {
        // |a2| < 1 and |a1| < 1 + a2 is the biquad stability triangle.
        self.a[1].abs() < 1.0 && self.a[0].abs() < 1.0 + self.a[1]
    }
}

/// Cascaded second-order sections of a designed digital filter.
#[derive(Debug, Clone)]
pub struct SosFilter {
    sections: Vec<Biquad>,
    low_hz: f64,
    sample_rate_hz: f64,
}

impl SosFilter {
    /// Digital Butterworth bandpass via prewarped bilinear transform of the
    /// analog prototype.
    pub fn design_bandpass(spec: &BandpassSpec, sample_rate_hz: f64) -> Result<Self> {
        spec.validate_for_rate(sample_rate_hz)?;
        let n = spec.order / 2; // lowpass prototype order

        // Prototype poles on the unit circle, left half plane.
        let proto: Vec<Complex<f64>> = (1..=n)
            .map(|k| {
                let theta = std::f64::consts::PI * (2 * k + n - 1) as f64 / (2 * n) as f64;
                Complex::from_polar(1.0, theta)
            })
            .collect();

        // Prewarped band edges (rad/s).
        let fs2 = 2.0 * sample_rate_hz;
        let w1 = fs2 * (std::f64::consts::PI * spec.low_hz / sample_rate_hz).tan();
        let w2 = fs2 * (std::f64::consts::PI * spec.high_hz / sample_rate_hz).tan();
        let bw = w2 - w1;
        let w0_sq = w1 * w2;

        // Lowpass -> bandpass: each prototype pole spawns a pair.
        let mut analog_poles = Vec::with_capacity(2 * n);
        for &p in &proto {
            let s = p * (bw / 2.0);
            let disc = (s * s - Complex::new(w0_sq, 0.0)).sqrt();
            analog_poles.push(s + disc);
            analog_poles.push(s - disc);
        }
        let analog_gain = bw.powi(n as i32); // n zeros at s = 0

        // Bilinear transform. Analog zeros at the origin map to z = 1; the
        // remaining n zeros introduced by the degree difference sit at z = -1.
        let map = |s: Complex<f64>| (Complex::new(fs2, 0.0) + s) / (Complex::new(fs2, 0.0) - s);
        let digital_poles: Vec<Complex<f64>> = analog_poles.iter().map(|&s| map(s)).collect();
        let mut num = Complex::new(fs2.powi(n as i32), 0.0); // prod(fs2 - zero), zeros at 0
        for &s in &analog_poles {
            num /= Complex::new(fs2, 0.0) - s;
        }
        let gain = analog_gain * num.re;

        // Pair conjugate poles into biquads; every section carries one zero at
        // +1 and one at -1, i.e. numerator z^2 - 1.
        let mut upper: Vec<Complex<f64>> = digital_poles.iter().copied().filter(|p| p.im > 1e-12).collect();
        let mut real: Vec<f64> = digital_poles
            .iter()
            .filter(|p| p.im.abs() <= 1e-12)
            .map(|p| p.re)
            .collect();
        upper.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
        real.sort_by(|a, b| a.total_cmp(b));
        if upper.len() * 2 + real.len() != 2 * n || real.len() % 2 != 0 {
            return Err(Error::Config(
                "pole pairing failed; band edges too extreme for this sample rate".into(),
            ));
        }

        let n_sections = n;
        let section_gain = gain.abs().powf(1.0 / n_sections as f64);
        let sign = if gain < 0.0 { -1.0 } else { 1.0 };
        let mut sections = Vec::with_capacity(n_sections);
        for p in upper {
            sections.push(Biquad {
                b: [section_gain, 0.0, -section_gain],
                a: [-2.0 * p.re, p.norm_sqr()],
            });
        }
        for pair in real.chunks(2) {
            sections.push(Biquad {
                b: [section_gain, 0.0, -section_gain],
                a: [-(pair[0] + pair[1]), pair[0] * pair[1]],
            });
        }
        if sign < 0.0 {
            for b in sections[0].b.iter_mut() {
                *b = -*b;
            }
        }

        let filter = Self { sections, low_hz: spec.low_hz, sample_rate_hz };
        if !filter.is_stable() {
            return Err(Error::Config(format!(
                "designed filter is unstable for band {}..{} Hz at {sample_rate_hz} Hz",
                spec.low_hz, spec.high_hz
            )));
        }
        Ok(filter)
    }

    /// All poles strictly inside the unit circle.
    pub fn is_stable(&self) -> bool {
        self.sections.iter().all(Biquad::poles_inside_unit_circle)
    }

    /// Single forward pass (introduces phase delay; used by tests and the
    /// backward half of [`Self::filtfilt`]).
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            s.apply(&mut y);
        }
        y
    }

    /// Zero-phase filtering: odd-reflection padding, forward pass, reversed
    /// backward pass. Output has the same length as the input.
    ///
    /// The pad length covers several time constants of the lowest band edge so
    /// start/end transients decay inside the padding.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        if x.is_empty() {
            return Vec::new();
        }
        let pad = ((3.0 * self.sample_rate_hz / self.low_hz).ceil() as usize)
            .max(3 * (2 * self.sections.len() + 1))
            .min(x.len() - 1);

        let n = x.len();
        let mut ext = Vec::with_capacity(n + 2 * pad);
        for i in (1..=pad).rev() {
            ext.push(2.0 * x[0] - x[i]);
        }
        ext.extend_from_slice(x);
        for i in (1..=pad).rev() {
            ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
        }

        let mut y = self.filter(&ext);
        y.reverse();
        let mut y = self.filter(&y);
        y.reverse();
        y[pad..pad + n].to_vec()
    }
}

/// Zero-phase Butterworth bandpass of every channel.
///
/// Same length as the input; DC is fully rejected (a numerator zero sits at
/// z = 1).
pub fn butter_bandpass(x: &TimeSeries, spec: &BandpassSpec) -> Result<TimeSeries> {
    let filter = SosFilter::design_bandpass(spec, x.sample_rate_hz())?;
    let channels = x.channels().iter().map(|ch| filter.filtfilt(ch)).collect();
    x.with_channels(channels)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Analytic amplitude response of the zero-phase (forward-backward)
    /// Butterworth bandpass at frequency `f_hz`, independent of the designed
    /// coefficients: the bilinear transform maps the digital response at `f`
    /// onto the analog prototype response at the prewarped frequency.
    fn zero_phase_response(spec: &BandpassSpec, fs: f64, f_hz: f64) -> f64 {
        let n = (spec.order / 2) as f64;
        let fs2 = 2.0 * fs;
        let warp = |f: f64| fs2 * (std::f64::consts::PI * f / fs).tan();
        let (w1, w2) = (warp(spec.low_hz), warp(spec.high_hz));
        let w = warp(f_hz);
        let lowpass_equiv = (w * w - w1 * w2) / (w * (w2 - w1));
        1.0 / (1.0 + lowpass_equiv.powi(2).powf(n))
    }

    fn sinusoid(f: f64, fs: f64, dur_s: f64) -> Vec<f64> {
        let n = (fs * dur_s) as usize;
        (0..n).map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / fs).sin()).collect()
    }

    /// Projection amplitude of `y` on a sinusoid of frequency `f`, over the
    /// interior `[skip, skip+len)`.
    fn measure_amplitude(y: &[f64], f: f64, fs: f64, skip: usize, len: usize) -> f64 {
        let (mut c, mut s) = (0.0, 0.0);
        for i in 0..len {
            let t = (skip + i) as f64 / fs;
            let ph = 2.0 * std::f64::consts::PI * f * t;
            c += y[skip + i] * ph.cos();
            s += y[skip + i] * ph.sin();
        }
        2.0 * (c * c + s * s).sqrt() / len as f64
    }

    fn audio_band() -> BandpassSpec {
        BandpassSpec::new(0.5, 50.0, 4).unwrap()
    }

    #[test]
    fn constant_input_rejected() {
        let fs = 1000.0;
        let filter = SosFilter::design_bandpass(&audio_band(), fs).unwrap();
        let x = vec![1.0; 20_000];
        let y = filter.filtfilt(&x);
        // Transient of the 0.5 Hz edge decays within a few seconds.
        for &v in &y[8000..12000] {
            assert!(v.abs() < 1e-6, "residual DC {v}");
        }
    }

    #[test]
    fn passband_tone_within_one_db_of_oracle() {
        let fs = 1000.0;
        let spec = audio_band();
        let filter = SosFilter::design_bandpass(&spec, fs).unwrap();
        let x = sinusoid(10.0, fs, 20.0);
        let y = filter.filtfilt(&x);
        let amp = measure_amplitude(&y, 10.0, fs, 8000, 4000);
        let expected = zero_phase_response(&spec, fs, 10.0);
        let db = 20.0 * (amp / 1.0).log10();
        let expected_db = 20.0 * expected.log10();
        assert!((db - expected_db).abs() < 0.1, "got {db} dB, oracle {expected_db} dB");
        assert!(db.abs() < 1.0, "passband deviation {db} dB");
    }

    #[test]
    fn stopband_tone_attenuated_40_db() {
        let fs = 1000.0;
        let spec = audio_band();
        let filter = SosFilter::design_bandpass(&spec, fs).unwrap();
        let x = sinusoid(200.0, fs, 20.0);
        let y = filter.filtfilt(&x);
        let amp = measure_amplitude(&y, 200.0, fs, 8000, 4000);
        let db = 20.0 * amp.log10();
        assert!(db <= -40.0, "only {db} dB attenuation");
        let oracle_db = 20.0 * zero_phase_response(&spec, fs, 200.0).log10();
        assert!(oracle_db <= -40.0, "oracle predicts {oracle_db} dB");
    }

    #[test]
    fn ecg_band_at_130_hz_designs_and_is_stable() {
        let spec = BandpassSpec::new(10.0, 50.0, 4).unwrap();
        let filter = SosFilter::design_bandpass(&spec, 130.0).unwrap();
        assert!(filter.is_stable());
    }

    #[test]
    fn band_edge_at_nyquist_is_config_error() {
        let spec = BandpassSpec::new(0.5, 500.0, 4).unwrap();
        assert!(matches!(
            SosFilter::design_bandpass(&spec, 1000.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn odd_order_rejected() {
        assert!(matches!(BandpassSpec::new(0.5, 50.0, 3), Err(Error::Config(_))));
    }

    #[test]
    fn filtfilt_is_linear() {
        let fs = 1000.0;
        let filter = SosFilter::design_bandpass(&audio_band(), fs).unwrap();
        let x: Vec<f64> = (0..4000).map(|i| ((i * 7919) % 1000) as f64 / 1000.0 - 0.5).collect();
        let y: Vec<f64> = (0..4000).map(|i| ((i * 104729) % 1000) as f64 / 1000.0 - 0.5).collect();
        let (a, b) = (0.7, -1.3);
        let combo: Vec<f64> = x.iter().zip(&y).map(|(xv, yv)| a * xv + b * yv).collect();
        let fx = filter.filtfilt(&x);
        let fy = filter.filtfilt(&y);
        let fc = filter.filtfilt(&combo);
        let scale = fc.iter().map(|v| v.abs()).fold(f64::MIN, f64::max);
        for i in 0..fc.len() {
            assert!((fc[i] - (a * fx[i] + b * fy[i])).abs() <= 1e-9 * scale.max(1.0));
        }
    }

    #[test]
    fn zero_phase_no_lag_on_band_interior_tone() {
        let fs = 1000.0;
        let filter = SosFilter::design_bandpass(&audio_band(), fs).unwrap();
        let x = sinusoid(10.0, fs, 20.0);
        let y = filter.filtfilt(&x);
        // Cross-correlation over the interior, lags -5..5 samples.
        let (skip, len) = (8000usize, 4000usize);
        let mut best = (0i64, f64::MIN);
        for lag in -5i64..=5 {
            let mut acc = 0.0;
            for i in 0..len {
                let j = (skip + i) as i64 + lag;
                acc += x[skip + i] * y[j as usize];
            }
            if acc > best.1 {
                best = (lag, acc);
            }
        }
        assert_eq!(best.0, 0, "peak correlation at lag {}", best.0);
    }

    #[test]
    fn filtfilt_preserves_length() {
        let fs = 1000.0;
        let filter = SosFilter::design_bandpass(&audio_band(), fs).unwrap();
        for n in [50usize, 999, 2000] {
            let x = sinusoid(5.0, fs, n as f64 / fs);
            assert_eq!(filter.filtfilt(&x).len(), n);
        }
    }
}
