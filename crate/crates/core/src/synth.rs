//! Deterministic generator of paired in-ear audio / ECG recordings with
//! known beat times, used as ground-truth oracle for the whole test suite.
//!
//! Heartbeats produce two Gaussian-windowed tone bursts per cycle on both
//! audio channels (the two sounds of a cardiac cycle) and a narrow R-spike
//! in the ECG stream. Motion artefacts are layered on top: periodic
//! high-amplitude foot-strike thumps with harmonics, or non-periodic
//! low-frequency speech-movement bursts.

use crate::error::{Error, Result};
use crate::io::wav;
use crate::signal::TimeSeries;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::io::Write;
use std::path::Path;

pub const AUDIO_RATE_HZ: f64 = 1000.0;
pub const ECG_RATE_HZ: f64 = 130.0;

/// Instantaneous heart-rate trajectory in BPM.
#[derive(Debug, Clone, PartialEq)]
pub enum HrProfile {
    Constant(f64),
    /// Linear ramp across the whole recording.
    Ramp { start_bpm: f64, end_bpm: f64 },
    /// Piecewise-linear (time_s, bpm) breakpoints.
    Piecewise(Vec<(f64, f64)>),
}

impl HrProfile {
    pub fn bpm_at(&self, t: f64, duration_s: f64) -> f64 {
        match self {
            HrProfile::Constant(bpm) => *bpm,
            HrProfile::Ramp { start_bpm, end_bpm } => {
                let a = (t / duration_s).clamp(0.0, 1.0);
                start_bpm + (end_bpm - start_bpm) * a
            }
            HrProfile::Piecewise(points) => {
                if points.is_empty() {
                    return 60.0;
                }
                if t <= points[0].0 {
                    return points[0].1;
                }
                for pair in points.windows(2) {
                    if t <= pair[1].0 {
                        let a = (t - pair[0].0) / (pair[1].0 - pair[0].0);
                        return pair[0].1 + (pair[1].1 - pair[0].1) * a;
                    }
                }
                points.last().unwrap().1
            }
        }
    }

    fn range(&self, duration_s: f64) -> (f64, f64) {
        let samples: Vec<f64> =
            (0..=100).map(|i| self.bpm_at(duration_s * i as f64 / 100.0, duration_s)).collect();
        (
            samples.iter().copied().fold(f64::MAX, f64::min),
            samples.iter().copied().fold(f64::MIN, f64::max),
        )
    }
}

/// Motion artefact added to the audio channels.
#[derive(Debug, Clone, PartialEq)]
pub enum Artefact {
    None,
    /// Periodic foot strikes: unipolar thumps at the cadence, amplitude
    /// relative to the primary heart-sound burst.
    Footsteps { cadence_hz: f64, amplitude_ratio: f64 },
    /// Non-periodic low-frequency bursts from jaw/head movement while
    /// speaking.
    Speech { burst_rate_hz: f64, amplitude_ratio: f64 },
}

/// Everything that defines one synthetic recording.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthScenario {
    pub duration_s: f64,
    pub hr_profile: HrProfile,
    pub s1_freq_hz: f64,
    pub s2_freq_hz: f64,
    pub s1_s2_gap_s: f64,
    pub artefact: Artefact,
    /// Signal-to-noise ratio of the additive white noise; `f64::INFINITY`
    /// disables it.
    pub snr_db: f64,
    pub seed: u64,
}

impl SynthScenario {
    pub fn stationary(bpm: f64, seed: u64) -> Self {
        Self {
            duration_s: 120.0,
            hr_profile: HrProfile::Constant(bpm),
            s1_freq_hz: 25.0,
            s2_freq_hz: 45.0,
            s1_s2_gap_s: 0.3,
            artefact: Artefact::None,
            snr_db: 20.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 1.0) {
            return Err(Error::Config(format!("duration {} s too short", self.duration_s)));
        }
        let (lo, hi) = self.hr_profile.range(self.duration_s);
        if lo < 40.0 || hi > 200.0 {
            return Err(Error::Config(format!(
                "heart-rate profile {lo:.1}..{hi:.1} BPM outside the physiological 40..200 range"
            )));
        }
        if let Artefact::Footsteps { cadence_hz, amplitude_ratio } = self.artefact {
            if !(1.2..=3.0).contains(&cadence_hz) {
                return Err(Error::Config(format!(
                    "cadence {cadence_hz} Hz outside the walking/running 1.2..3.0 range"
                )));
            }
            if amplitude_ratio <= 0.0 {
                return Err(Error::Config("amplitude ratio must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Ground truth attached to a generated recording.
#[derive(Debug, Clone)]
pub struct SynthTruth {
    pub beat_times_s: Vec<f64>,
}

impl SynthTruth {
    /// Mean heart rate per analysis window from the true beat times (the
    /// mean of the inter-beat intervals falling in the window, as BPM).
    pub fn window_mean_bpm(&self, start_s: f64, len_s: f64) -> Option<f64> {
        let end = start_s + len_s;
        let in_window: Vec<f64> = self
            .beat_times_s
            .iter()
            .copied()
            .filter(|&t| t >= start_s && t < end)
            .collect();
        if in_window.len() < 2 {
            return None;
        }
        let mean_interval = (in_window.last().unwrap() - in_window.first().unwrap())
            / (in_window.len() - 1) as f64;
        Some(60.0 / mean_interval)
    }
}

// Heart-sound burst envelopes. The primary burst keeps a 50 ms full width at
// half maximum; the second, higher-frequency burst is stretched and weakened
// so that the clean signal keeps >= 99% of its energy below 50 Hz.
const S1_SIGMA_S: f64 = 0.021;
const S2_SIGMA_S: f64 = 0.045;
const S1_AMP: f64 = 1.0;
const S2_AMP: f64 = 0.45;

fn add_burst(x: &mut [f64], rate: f64, center_s: f64, freq_hz: f64, sigma_s: f64, amp: f64) {
    let lo = ((center_s - 4.0 * sigma_s) * rate).floor().max(0.0) as usize;
    let hi = (((center_s + 4.0 * sigma_s) * rate).ceil() as usize).min(x.len());
    for (i, v) in x.iter_mut().enumerate().take(hi).skip(lo) {
        let t = i as f64 / rate - center_s;
        let env = (-t * t / (2.0 * sigma_s * sigma_s)).exp();
        *v += amp * env * (2.0 * std::f64::consts::PI * freq_hz * t).cos();
    }
}

fn add_thump(x: &mut [f64], rate: f64, center_s: f64, width_s: f64, amp: f64) {
    let half = width_s / 2.0;
    let lo = ((center_s - half) * rate).floor().max(0.0) as usize;
    let hi = (((center_s + half) * rate).ceil() as usize).min(x.len());
    for (i, v) in x.iter_mut().enumerate().take(hi).skip(lo) {
        let t = i as f64 / rate - center_s;
        if t.abs() < half {
            *v += amp * 0.5 * (1.0 + (std::f64::consts::PI * t / half).cos());
        }
    }
}

/// Generate one paired recording: two-channel in-ear audio at 1 kHz, ECG at
/// 130 Hz and the true beat times. Bitwise deterministic per seed.
pub fn generate(sc: &SynthScenario) -> Result<(TimeSeries, TimeSeries, SynthTruth)> {
    sc.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let n_audio = (sc.duration_s * AUDIO_RATE_HZ).round() as usize;
    let n_ecg = (sc.duration_s * ECG_RATE_HZ).round() as usize;

    // Beat times from the instantaneous rate.
    let mut beat_times = Vec::new();
    let mut t = 0.35;
    while t < sc.duration_s - 0.5 {
        beat_times.push(t);
        let bpm = sc.hr_profile.bpm_at(t, sc.duration_s);
        t += 60.0 / bpm;
    }

    // Per-beat gap jitter, drawn in one deterministic pass.
    let gaps: Vec<f64> = beat_times
        .iter()
        .map(|_| sc.s1_s2_gap_s + (rng.random::<f64>() * 2.0 - 1.0) * 0.010)
        .collect();

    // Channel asymmetry: fixed -2 dB gain and 3 ms delay on the second
    // channel, exercising the two-channel stacking downstream.
    let ch2_gain = 10f64.powf(-2.0 / 20.0);
    let ch2_delay_s = 0.003;

    let mut ch = vec![vec![0.0f64; n_audio], vec![0.0f64; n_audio]];
    for (k, &bt) in beat_times.iter().enumerate() {
        for (c, (gain, delay)) in [(1.0, 0.0), (ch2_gain, ch2_delay_s)].iter().enumerate() {
            add_burst(&mut ch[c], AUDIO_RATE_HZ, bt + delay, sc.s1_freq_hz, S1_SIGMA_S, S1_AMP * gain);
            add_burst(
                &mut ch[c],
                AUDIO_RATE_HZ,
                bt + gaps[k] + delay,
                sc.s2_freq_hz,
                S2_SIGMA_S,
                S2_AMP * gain,
            );
        }
    }

    let clean_power: f64 = ch[0].iter().map(|v| v * v).sum::<f64>() / n_audio as f64;

    match sc.artefact {
        Artefact::None => {}
        Artefact::Footsteps { cadence_hz, amplitude_ratio } => {
            let phase = rng.random::<f64>() / cadence_hz;
            let mut step_t = 0.2 + phase;
            while step_t < sc.duration_s - 0.1 {
                let jitter = (rng.random::<f64>() * 2.0 - 1.0) * 0.005;
                for (c, (gain, delay)) in [(1.0, 0.0), (ch2_gain, ch2_delay_s)].iter().enumerate()
                {
                    add_thump(
                        &mut ch[c],
                        AUDIO_RATE_HZ,
                        step_t + jitter + delay,
                        0.08,
                        amplitude_ratio * S1_AMP * gain,
                    );
                }
                step_t += 1.0 / cadence_hz;
            }
        }
        Artefact::Speech { burst_rate_hz, amplitude_ratio } => {
            let mut burst_t = 0.3;
            while burst_t < sc.duration_s - 0.5 {
                let width = 0.1 + rng.random::<f64>() * 0.2;
                let n_comp = 4;
                let comps: Vec<(f64, f64, f64)> = (0..n_comp)
                    .map(|_| {
                        (
                            1.5 + rng.random::<f64>() * 23.5,            // frequency
                            rng.random::<f64>() * std::f64::consts::TAU, // phase
                            0.4 + rng.random::<f64>() * 0.6,             // relative amp
                        )
                    })
                    .collect();
                let lo = (burst_t * AUDIO_RATE_HZ) as usize;
                let hi = (((burst_t + width) * AUDIO_RATE_HZ) as usize).min(n_audio);
                for (c, (gain, delay)) in [(1.0, 0.0), (ch2_gain, ch2_delay_s)].iter().enumerate()
                {
                    for i in lo..hi {
                        let t = i as f64 / AUDIO_RATE_HZ - burst_t - delay;
                        let env = 0.5
                            * (1.0
                                - (std::f64::consts::TAU * (t / width - 0.5)).cos()
                                    * if (0.0..=1.0).contains(&(t / width)) { 1.0 } else { 0.0 });
                        let env = if (0.0..=1.0).contains(&(t / width)) { env } else { 0.0 };
                        let mut s = 0.0;
                        for &(f, p, a) in &comps {
                            s += a * (std::f64::consts::TAU * f * t + p).cos();
                        }
                        ch[c][i] += gain * amplitude_ratio * S1_AMP * 0.3 * env * s;
                    }
                }
                // Pause of random length between bursts.
                burst_t += width + rng.random::<f64>() / burst_rate_hz.max(0.1);
            }
        }
    }

    if sc.snr_db.is_finite() {
        let noise_power = clean_power / 10f64.powf(sc.snr_db / 10.0);
        let normal = Normal::new(0.0, noise_power.sqrt()).unwrap();
        for c in ch.iter_mut() {
            for v in c.iter_mut() {
                *v += normal.sample(&mut rng);
            }
        }
    }

    let audio = TimeSeries::new(ch, AUDIO_RATE_HZ, 0)?;

    // ECG: narrow Gaussian R-spike per beat.
    let mut ecg = vec![0.0f64; n_ecg];
    let r_sigma = 0.008;
    for &bt in &beat_times {
        let lo = ((bt - 4.0 * r_sigma) * ECG_RATE_HZ).floor().max(0.0) as usize;
        let hi = (((bt + 4.0 * r_sigma) * ECG_RATE_HZ).ceil() as usize).min(n_ecg);
        for (i, v) in ecg.iter_mut().enumerate().take(hi).skip(lo) {
            let t = i as f64 / ECG_RATE_HZ - bt;
            *v += (-t * t / (2.0 * r_sigma * r_sigma)).exp();
        }
    }
    let ecg = TimeSeries::mono(ecg, ECG_RATE_HZ, 0)?;

    Ok((audio, ecg, SynthTruth { beat_times_s: beat_times }))
}

/// One activity of the collection protocol, with the published heart-rate
/// distribution of each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activity {
    Stationary,
    Walking,
    Running,
    Speaking,
}

impl Activity {
    pub fn name(&self) -> &'static str {
        match self {
            Activity::Stationary => "stationary",
            Activity::Walking => "walking",
            Activity::Running => "running",
            Activity::Speaking => "speaking",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "stationary" => Ok(Activity::Stationary),
            "walking" => Ok(Activity::Walking),
            "running" => Ok(Activity::Running),
            "speaking" => Ok(Activity::Speaking),
            other => Err(Error::Config(format!("unknown activity {other:?}"))),
        }
    }

    /// (mean BPM, sd BPM, min BPM, max BPM) of the subject baseline draw.
    fn hr_distribution(&self) -> (f64, f64, f64, f64) {
        match self {
            Activity::Stationary => (70.0, 12.0, 45.0, 114.0),
            Activity::Walking => (86.0, 14.0, 51.0, 129.0),
            Activity::Running => (109.0, 23.0, 50.0, 187.0),
            Activity::Speaking => (76.0, 12.0, 51.0, 124.0),
        }
    }

    fn artefact(&self, rng: &mut ChaCha8Rng) -> Artefact {
        match self {
            Activity::Stationary => Artefact::None,
            Activity::Walking => Artefact::Footsteps {
                cadence_hz: 1.5 + rng.random::<f64>() * 0.5,
                amplitude_ratio: 5.0,
            },
            Activity::Running => Artefact::Footsteps {
                cadence_hz: 2.3 + rng.random::<f64>() * 0.5,
                amplitude_ratio: 15.0,
            },
            Activity::Speaking => Artefact::Speech { burst_rate_hz: 1.0, amplitude_ratio: 8.0 },
        }
    }
}

/// Corpus generation settings.
#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub n_subjects: usize,
    pub activities: Vec<Activity>,
    pub duration_s: f64,
    pub seed: u64,
}

/// One generated run on disk.
#[derive(Debug, Clone)]
pub struct RunDescriptor {
    pub subject: String,
    pub activity: Activity,
    pub dir: std::path::PathBuf,
    pub scenario: SynthScenario,
}

/// Write a corpus in the dataset layout:
/// `root/subject_<id>/<activity>/{audio.wav, ecg.csv, truth.csv}`.
///
/// Audio is upsampled to 22.05 kHz for the WAV so ingestion exercises the
/// full decimation path. Subject heart-rate baselines are drawn from the
/// per-activity distributions (clipped to their published ranges).
pub fn generate_corpus(root: &Path, spec: &CorpusSpec) -> Result<Vec<RunDescriptor>> {
    if spec.n_subjects == 0 || spec.activities.is_empty() {
        return Err(Error::Config("corpus needs at least one subject and activity".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut runs = Vec::new();
    for s in 0..spec.n_subjects {
        let subject = format!("subject_{s:02}");
        for &activity in &spec.activities {
            let (mean, sd, min, max) = activity.hr_distribution();
            let normal = Normal::new(mean, sd).unwrap();
            let bpm = normal.sample(&mut rng).clamp(min, max);
            let artefact = activity.artefact(&mut rng);
            let scenario = SynthScenario {
                duration_s: spec.duration_s,
                hr_profile: HrProfile::Constant(bpm),
                artefact,
                seed: rng.random::<u64>(),
                ..SynthScenario::stationary(bpm, 0)
            };
            let dir = root.join(&subject).join(activity.name());
            write_run(&dir, &scenario)?;
            runs.push(RunDescriptor { subject: subject.clone(), activity, dir, scenario });
        }
    }
    Ok(runs)
}

/// Generate one scenario and write it as a dataset run directory.
pub fn write_run(dir: &Path, scenario: &SynthScenario) -> Result<()> {
    let (audio, ecg, truth) = generate(scenario)?;
    std::fs::create_dir_all(dir)?;

    // Store the microphone stream at the acquisition rate.
    let audio_hi = crate::dsp::resample(&audio, 22050.0)?;
    let peak = audio_hi
        .channels()
        .iter()
        .flat_map(|c| c.iter())
        .fold(0.0f64, |a, &b| a.max(b.abs()))
        .max(1e-9);
    let scaled: Vec<Vec<f64>> = audio_hi
        .channels()
        .iter()
        .map(|c| c.iter().map(|v| v / peak * 0.9).collect())
        .collect();
    let audio_hi = TimeSeries::new(scaled, 22050.0, audio_hi.start_time_ms())?;
    wav::write_wav(&dir.join("audio.wav"), &audio_hi)?;

    let mut ecg_csv = std::fs::File::create(dir.join("ecg.csv"))?;
    writeln!(ecg_csv, "timestamp_ms,value")?;
    for (i, &v) in ecg.channel(0).iter().enumerate() {
        let ts = ecg.start_time_ms() + (i as f64 / ECG_RATE_HZ * 1000.0).round() as i64;
        writeln!(ecg_csv, "{ts},{v:.6}")?;
    }

    let mut truth_csv = std::fs::File::create(dir.join("truth.csv"))?;
    writeln!(truth_csv, "beat_time_s")?;
    for t in &truth.beat_times_s {
        writeln!(truth_csv, "{t:.4}")?;
    }
    Ok(())
}
