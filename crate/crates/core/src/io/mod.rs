//! Dataset layout, ingestion and CSV formats.
//!
//! A dataset root contains `subject_<id>/<activity>/` run directories, each
//! with `audio.wav` (two-channel PCM), `ecg.csv` (`timestamp_ms,value`) and
//! optionally `truth.csv` (`beat_time_s`) when the run is synthetic.

pub mod wav;

use crate::error::{Error, Result};
use crate::signal::{align_streams, TimeSeries};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const ECG_NOMINAL_RATE_HZ: f64 = 130.0;

/// Read `ecg.csv`: a `timestamp_ms,value` table at the nominal ECG rate.
/// Timestamps must ascend; the series starts at the first row's timestamp.
pub fn read_ecg_csv(path: &Path) -> Result<TimeSeries> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "timestamp_ms,value" => {}
        _ => {
            return Err(Error::Data(format!(
                "{}: expected header 'timestamp_ms,value'",
                path.display()
            )))
        }
    }
    let mut timestamps: Vec<i64> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (line_no, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (ts, val) = line.split_once(',').ok_or_else(|| {
            Error::Data(format!("{}: row {}: expected two comma-separated fields", path.display(), line_no + 1))
        })?;
        let ts: i64 = ts.trim().parse().map_err(|_| {
            Error::Data(format!("{}: row {}: bad timestamp {ts:?}", path.display(), line_no + 1))
        })?;
        let val: f64 = val.trim().parse().map_err(|_| {
            Error::Data(format!("{}: row {}: bad value {val:?}", path.display(), line_no + 1))
        })?;
        if let Some(&prev) = timestamps.last() {
            if ts <= prev {
                return Err(Error::Data(format!(
                    "{}: row {}: timestamp {ts} not ascending (previous {prev})",
                    path.display(),
                    line_no + 1
                )));
            }
        }
        timestamps.push(ts);
        values.push(val);
    }
    if values.len() < 2 {
        return Err(Error::Data(format!("{}: too few rows", path.display())));
    }
    // Sample-rate sanity: median timestamp step vs the nominal period.
    let mut deltas: Vec<i64> = timestamps.windows(2).map(|w| w[1] - w[0]).collect();
    deltas.sort_unstable();
    let median = deltas[deltas.len() / 2] as f64;
    let nominal = 1000.0 / ECG_NOMINAL_RATE_HZ;
    if (median - nominal).abs() > 0.1 * nominal {
        return Err(Error::Data(format!(
            "{}: median sample period {median} ms does not match the nominal {nominal:.2} ms",
            path.display()
        )));
    }
    TimeSeries::mono(values, ECG_NOMINAL_RATE_HZ, timestamps[0])
}

/// Read `truth.csv`: beat times in seconds, one per row.
pub fn read_truth_csv(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "beat_time_s" => {}
        _ => {
            return Err(Error::Data(format!("{}: expected header 'beat_time_s'", path.display())))
        }
    }
    let mut out = Vec::new();
    for (line_no, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let t: f64 = line.parse().map_err(|_| {
            Error::Data(format!("{}: row {}: bad beat time {line:?}", path.display(), line_no + 1))
        })?;
        out.push(t);
    }
    Ok(out)
}

/// Load and align one run directory: returns (audio, ecg) trimmed to their
/// common time range. The audio must be two-channel.
pub fn ingest(run_dir: &Path) -> Result<(TimeSeries, TimeSeries)> {
    let audio_path = run_dir.join("audio.wav");
    let ecg_path = run_dir.join("ecg.csv");
    if !audio_path.exists() {
        return Err(Error::Data(format!("missing {}", audio_path.display())));
    }
    if !ecg_path.exists() {
        return Err(Error::Data(format!("missing {}", ecg_path.display())));
    }
    let audio = wav::read_wav(&audio_path)?;
    if audio.num_channels() != 2 {
        return Err(Error::Data(format!(
            "{}: expected 2 channels, got {}",
            audio_path.display(),
            audio.num_channels()
        )));
    }
    let ecg = read_ecg_csv(&ecg_path)?;
    align_streams(&audio, &ecg)
}

/// Runs found under a dataset root, sorted by (subject, activity).
pub fn list_runs(root: &Path) -> Result<Vec<(String, String, PathBuf)>> {
    let mut runs = Vec::new();
    let entries = std::fs::read_dir(root)
        .map_err(|e| Error::Data(format!("{}: {e}", root.display())))?;
    for subject_entry in entries {
        let subject_entry = subject_entry?;
        if !subject_entry.file_type()?.is_dir() {
            continue;
        }
        let subject = subject_entry.file_name().to_string_lossy().to_string();
        if !subject.starts_with("subject_") {
            continue;
        }
        for run_entry in std::fs::read_dir(subject_entry.path())? {
            let run_entry = run_entry?;
            if !run_entry.file_type()?.is_dir() {
                continue;
            }
            let activity = run_entry.file_name().to_string_lossy().to_string();
            if run_entry.path().join("audio.wav").exists() {
                runs.push((subject.clone(), activity, run_entry.path()));
            }
        }
    }
    runs.sort();
    if runs.is_empty() {
        return Err(Error::Data(format!("no runs found under {}", root.display())));
    }
    Ok(runs)
}

/// Write a heart-rate series as `start_ms,bpm,confidence` rows; failed
/// windows have an empty bpm field.
pub fn write_hr_csv(path: &Path, entries: &[crate::hr::HrEntry]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "start_ms,bpm,confidence")?;
    for e in entries {
        match e.bpm {
            Some(bpm) => writeln!(f, "{},{:.4},{:.4}", e.start_ms, bpm, e.confidence)?,
            None => writeln!(f, "{},,{:.4}", e.start_ms, e.confidence)?,
        }
    }
    Ok(())
}
