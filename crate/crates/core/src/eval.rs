//! Ground-truth heart rate from ECG, agreement metrics and plot-ready
//! report emission.

use crate::dsp::{butter_bandpass, resample, BandpassSpec};
use crate::error::{Error, Result};
use crate::hr::{estimate_hr, HrEstimatorConfig, HrSeries};
use crate::signal::TimeSeries;
use serde::Serialize;
use std::io::Write;
use std::path::Path;

/// ECG reference processing: bandpass at the native rate (emphasizing the
/// QRS complex, attenuating the slower waves), upsample to the processing
/// rate, then the same windowed interval-mean estimator as the audio path.
pub fn gt_hr_from_ecg(ecg: &TimeSeries, cfg: &GtConfig) -> Result<HrSeries> {
    let filtered = butter_bandpass(ecg, &cfg.band)?;
    let upsampled = resample(&filtered, cfg.process_rate_hz)?;
    estimate_hr(&upsampled, &cfg.estimator)
}

#[derive(Debug, Clone, Copy)]
pub struct GtConfig {
    pub band: BandpassSpec,
    pub process_rate_hz: f64,
    pub estimator: HrEstimatorConfig,
}

impl Default for GtConfig {
    fn default() -> Self {
        Self {
            band: BandpassSpec { low_hz: 10.0, high_hz: 50.0, order: 4 },
            process_rate_hz: 1000.0,
            estimator: HrEstimatorConfig::default(),
        }
    }
}

/// Windows where both series carry a usable estimate, matched on start time.
fn paired(truth: &HrSeries, calc: &HrSeries) -> (Vec<(i64, f64, f64)>, usize) {
    let mut pairs = Vec::new();
    let mut excluded = 0;
    let mut calc_iter = calc.entries.iter().peekable();
    for t in &truth.entries {
        // Advance to the matching start time.
        while calc_iter.peek().is_some_and(|c| c.start_ms < t.start_ms) {
            calc_iter.next();
        }
        let Some(c) = calc_iter.peek() else { break };
        if c.start_ms != t.start_ms {
            continue;
        }
        match (t.bpm, c.bpm, t.confidence > 0.0 && c.confidence > 0.0) {
            (Some(tb), Some(cb), true) => pairs.push((t.start_ms, tb, cb)),
            _ => excluded += 1,
        }
    }
    (pairs, excluded)
}

/// Mean absolute error in BPM over valid overlapping windows.
pub fn mae(truth: &HrSeries, calc: &HrSeries) -> Result<f64> {
    let (pairs, _) = paired(truth, calc);
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no overlapping valid windows".into()));
    }
    Ok(pairs.iter().map(|(_, t, c)| (c - t).abs()).sum::<f64>() / pairs.len() as f64)
}

/// Mean absolute percentage error; windows with non-positive truth are
/// excluded and counted.
pub fn mape(truth: &HrSeries, calc: &HrSeries) -> Result<(f64, usize)> {
    let (pairs, _) = paired(truth, calc);
    let usable: Vec<_> = pairs.iter().filter(|(_, t, _)| *t > 0.0).collect();
    let skipped = pairs.len() - usable.len();
    if usable.is_empty() {
        return Err(Error::EmptyInput("no overlapping valid windows with positive truth".into()));
    }
    let value =
        usable.iter().map(|(_, t, c)| 100.0 * (c - t).abs() / t).sum::<f64>() / usable.len() as f64;
    Ok((value, skipped))
}

/// Modified Bland-Altman statistics: bias, limits of agreement
/// (1.96 x sample standard deviation of the differences) and the
/// (truth, difference) scatter points.
#[derive(Debug, Clone, Serialize)]
pub struct BlandAltman {
    pub bias_bpm: f64,
    pub loa_bpm: f64,
    pub points: Vec<(f64, f64)>,
}

pub fn bland_altman(truth: &HrSeries, calc: &HrSeries) -> Result<BlandAltman> {
    let (pairs, _) = paired(truth, calc);
    if pairs.len() < 2 {
        return Err(Error::Data(format!(
            "Bland-Altman needs at least 2 points, got {}",
            pairs.len()
        )));
    }
    let diffs: Vec<f64> = pairs.iter().map(|(_, t, c)| c - t).collect();
    let n = diffs.len() as f64;
    let bias = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - bias) * (d - bias)).sum::<f64>() / (n - 1.0);
    Ok(BlandAltman {
        bias_bpm: bias,
        loa_bpm: 1.96 * var.sqrt(),
        points: pairs.iter().map(|(_, t, c)| (*t, c - t)).collect(),
    })
}

/// Empirical CDF step points: sorted (value, k/n).
pub fn ecdf(errors: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = errors.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(k, e)| (e, (k + 1) as f64 / n))
        .collect()
}

/// Full agreement report for one run.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub n_windows: usize,
    pub n_excluded: usize,
    pub mae_bpm: f64,
    pub mape_pct: f64,
    pub mape_zero_truth_excluded: usize,
    pub ba_bias_bpm: f64,
    pub ba_loa_bpm: f64,
    /// (start_ms, truth, calc) per valid window.
    pub residuals: Vec<(i64, f64, f64)>,
    /// ECDF of |calc - truth|.
    pub ecdf: Vec<(f64, f64)>,
}

pub fn evaluate(truth: &HrSeries, calc: &HrSeries) -> Result<EvalReport> {
    let (pairs, excluded) = paired(truth, calc);
    let mae_bpm = mae(truth, calc)?;
    let (mape_pct, mape_skipped) = mape(truth, calc)?;
    let ba = bland_altman(truth, calc)?;
    let abs_errors: Vec<f64> = pairs.iter().map(|(_, t, c)| (c - t).abs()).collect();
    Ok(EvalReport {
        n_windows: pairs.len(),
        n_excluded: excluded,
        mae_bpm,
        mape_pct,
        mape_zero_truth_excluded: mape_skipped,
        ba_bias_bpm: ba.bias_bpm,
        ba_loa_bpm: ba.loa_bpm,
        residuals: pairs,
        ecdf: ecdf(&abs_errors),
    })
}

/// Per-(subject, activity) MAPE table; absent cells stay `None`.
#[derive(Debug, Clone, Serialize)]
pub struct AggregateTable {
    pub subjects: Vec<String>,
    pub activities: Vec<String>,
    pub mape_pct: Vec<Vec<Option<f64>>>,
}

pub fn aggregate(reports: &[(String, String, EvalReport)]) -> AggregateTable {
    let mut subjects: Vec<String> = reports.iter().map(|r| r.0.clone()).collect();
    subjects.sort();
    subjects.dedup();
    let mut activities: Vec<String> = reports.iter().map(|r| r.1.clone()).collect();
    activities.sort();
    activities.dedup();
    let mape_pct = subjects
        .iter()
        .map(|s| {
            activities
                .iter()
                .map(|a| {
                    reports
                        .iter()
                        .find(|(rs, ra, _)| rs == s && ra == a)
                        .map(|(_, _, rep)| rep.mape_pct)
                })
                .collect()
        })
        .collect();
    AggregateTable { subjects, activities, mape_pct }
}

/// Write `report.json`, `residuals.csv`, `ba_points.csv` and `ecdf.csv` for
/// one report; `heatmap.csv` comes from [`write_heatmap_csv`].
pub fn write_report_files(dir: &Path, report: &EvalReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Data(format!("report serialization: {e}")))?;
    std::fs::write(dir.join("report.json"), json)?;

    let mut f = std::fs::File::create(dir.join("residuals.csv"))?;
    writeln!(f, "start_ms,truth_bpm,calc_bpm,residual_bpm")?;
    for (start, t, c) in &report.residuals {
        writeln!(f, "{start},{t:.4},{c:.4},{:.4}", c - t)?;
    }

    let mut f = std::fs::File::create(dir.join("ba_points.csv"))?;
    writeln!(f, "truth_bpm,diff_bpm")?;
    for (start, t, c) in &report.residuals {
        let _ = start;
        writeln!(f, "{t:.4},{:.4}", c - t)?;
    }

    let mut f = std::fs::File::create(dir.join("ecdf.csv"))?;
    writeln!(f, "abs_error_bpm,fraction")?;
    for (e, p) in &report.ecdf {
        writeln!(f, "{e:.4},{p:.6}")?;
    }
    Ok(())
}

pub fn write_heatmap_csv(path: &Path, table: &AggregateTable) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    write!(f, "subject")?;
    for a in &table.activities {
        write!(f, ",{a}")?;
    }
    writeln!(f)?;
    for (s, row) in table.subjects.iter().zip(&table.mape_pct) {
        write!(f, "{s}")?;
        for cell in row {
            match cell {
                Some(v) => write!(f, ",{v:.4}")?,
                None => write!(f, ",NaN")?,
            }
        }
        writeln!(f)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hr::HrEntry;
    use crate::synth::{generate, SynthScenario};
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn series(values: &[f64]) -> HrSeries {
        HrSeries {
            entries: values
                .iter()
                .enumerate()
                .map(|(i, &bpm)| HrEntry {
                    start_ms: i as i64 * 5000,
                    bpm: Some(bpm),
                    confidence: 1.0,
                })
                .collect(),
        }
    }

    #[test]
    fn mae_hand_values() {
        assert_eq!(mae(&series(&[70.0, 80.0]), &series(&[70.0, 80.0])).unwrap(), 0.0);
        assert_eq!(mae(&series(&[70.0, 80.0]), &series(&[73.0, 84.0])).unwrap(), 3.5);
        assert_eq!(mae(&series(&[100.0]), &series(&[90.0])).unwrap(), 10.0);
    }

    #[test]
    fn mape_hand_values() {
        assert_eq!(mape(&series(&[100.0]), &series(&[90.0])).unwrap().0, 10.0);
        assert_eq!(mape(&series(&[64.0, 72.0]), &series(&[64.0, 72.0])).unwrap().0, 0.0);
        let (v, skipped) = mape(&series(&[50.0, 100.0]), &series(&[55.0, 90.0])).unwrap();
        assert!((v - 10.0).abs() < 1e-12);
        assert_eq!(skipped, 0);
    }

    #[test]
    fn mape_scaling_ratio_identity() {
        let t = series(&[60.0, 75.0, 90.0]);
        let c = series(&[63.0, 72.0, 95.0]);
        let (v1, _) = mape(&t, &c).unwrap();
        let scale = 1.37;
        let ts = series(&[60.0 * scale, 75.0 * scale, 90.0 * scale]);
        let cs = series(&[63.0 * scale, 72.0 * scale, 95.0 * scale]);
        let (v2, _) = mape(&ts, &cs).unwrap();
        assert!((v1 - v2).abs() < 1e-12);
    }

    #[test]
    fn bland_altman_hand_values() {
        // diffs [1,-1,0,2,-2]: bias 0, loa = 1.96*sqrt(2.5)
        let t = series(&[70.0; 5]);
        let c = series(&[71.0, 69.0, 70.0, 72.0, 68.0]);
        let ba = bland_altman(&t, &c).unwrap();
        assert!(ba.bias_bpm.abs() < 1e-12);
        assert!((ba.loa_bpm - 1.96 * 2.5f64.sqrt()).abs() < 1e-12);

        let same = bland_altman(&t, &t).unwrap();
        assert_eq!(same.bias_bpm, 0.0);
        assert_eq!(same.loa_bpm, 0.0);

        let offset = series(&[75.0; 5]);
        let ba = bland_altman(&t, &offset).unwrap();
        assert!((ba.bias_bpm - 5.0).abs() < 1e-12);
        assert_eq!(ba.loa_bpm, 0.0);
    }

    #[test]
    fn bland_altman_needs_two_points() {
        assert!(matches!(
            bland_altman(&series(&[70.0]), &series(&[71.0])),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn bias_bounded_by_mae() {
        let t = series(&[60.0, 70.0, 80.0, 90.0]);
        let c = series(&[62.0, 67.0, 85.0, 88.0]);
        let ba = bland_altman(&t, &c).unwrap();
        let m = mae(&t, &c).unwrap();
        assert!(ba.bias_bpm.abs() <= m + 1e-12);
        // Bias is the signed counterpart of the error.
        let expected_bias = (2.0 - 3.0 + 5.0 - 2.0) / 4.0;
        assert!((ba.bias_bpm - expected_bias).abs() < 1e-12);
    }

    #[test]
    fn ecdf_hand_values() {
        let pts = ecdf(&[1.0, 2.0, 3.0]);
        assert_eq!(pts, vec![(1.0, 1.0 / 3.0), (2.0, 2.0 / 3.0), (3.0, 1.0)]);
        let pts = ecdf(&[5.0, 5.0, 5.0]);
        assert!(pts.iter().all(|&(e, _)| e == 5.0));
        assert_eq!(pts.last().unwrap().1, 1.0);
        // Non-decreasing from >0 to 1.
        for pair in pts.windows(2) {
            assert!(pair[1].1 >= pair[0].1);
        }
    }

    #[test]
    fn ecdf_percentile_matches_direct_quantile() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let normal = Normal::<f64>::new(5.0, 2.0).unwrap();
        let errors: Vec<f64> = (0..5000).map(|_| normal.sample(&mut rng).abs()).collect();
        let pts = ecdf(&errors);
        let p95_from_ecdf = pts.iter().find(|&&(_, p)| p >= 0.95).unwrap().0;
        let mut sorted = errors.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let direct = sorted[(0.95 * sorted.len() as f64).ceil() as usize - 1];
        assert!((p95_from_ecdf - direct).abs() < 1e-12);
    }

    #[test]
    fn coverage_on_gaussian_residuals() {
        // With n = 10^4 Gaussian differences, 0.95 +- 0.01 of the points lie
        // within bias +- loa.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let normal = Normal::<f64>::new(0.0, 3.0).unwrap();
        let n = 10_000;
        let truth = series(&vec![100.0; n]);
        let calc = series(
            &(0..n).map(|_| 100.0 + normal.sample(&mut rng)).collect::<Vec<f64>>(),
        );
        let ba = bland_altman(&truth, &calc).unwrap();
        let inside = ba
            .points
            .iter()
            .filter(|(_, d)| (d - ba.bias_bpm).abs() <= ba.loa_bpm)
            .count() as f64
            / n as f64;
        assert!((inside - 0.95).abs() <= 0.01, "coverage {inside}");
    }

    #[test]
    fn gt_from_spike_train_reads_60() {
        let fs = 130.0;
        let n = (40.0 * fs) as usize;
        let mut x = vec![0.0f64; n];
        let mut t = 0.4f64;
        while t < 39.5 {
            x[(t * fs).round() as usize] = 1.0;
            t += 1.0;
        }
        let ecg = TimeSeries::mono(x, fs, 0).unwrap();
        let hr = gt_hr_from_ecg(&ecg, &GtConfig::default()).unwrap();
        for e in &hr.entries {
            assert!((e.bpm.unwrap() - 60.0).abs() < 0.5, "entry {e:?}");
        }
    }

    #[test]
    fn gt_from_generator_reads_95() {
        let sc = SynthScenario { duration_s: 60.0, ..SynthScenario::stationary(95.0, 51) };
        let (_, ecg, _) = generate(&sc).unwrap();
        let hr = gt_hr_from_ecg(&ecg, &GtConfig::default()).unwrap();
        for e in &hr.entries {
            let bpm = e.bpm.unwrap();
            assert!((bpm - 95.0).abs() <= 1.0, "window {} read {bpm}", e.start_ms);
        }
    }

    #[test]
    fn flatline_ecg_yields_failed_windows() {
        let ecg = TimeSeries::mono(vec![0.3; (40.0 * 130.0) as usize], 130.0, 0).unwrap();
        let hr = gt_hr_from_ecg(&ecg, &GtConfig::default()).unwrap();
        assert!(hr.entries.iter().all(|e| e.bpm.is_none() && e.confidence == 0.0));
        // Metrics over it: empty-input error.
        assert!(matches!(mae(&hr, &hr), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn aggregate_builds_table_with_absent_cells() {
        let rep = |mape: f64| EvalReport {
            n_windows: 2,
            n_excluded: 0,
            mae_bpm: 1.0,
            mape_pct: mape,
            mape_zero_truth_excluded: 0,
            ba_bias_bpm: 0.0,
            ba_loa_bpm: 1.0,
            residuals: vec![(0, 70.0, 71.0), (5000, 70.0, 69.0)],
            ecdf: vec![(1.0, 1.0)],
        };
        let reports = vec![
            ("subject_00".to_string(), "stationary".to_string(), rep(2.0)),
            ("subject_00".to_string(), "walking".to_string(), rep(5.0)),
            ("subject_01".to_string(), "stationary".to_string(), rep(3.0)),
            // subject_01 walking excluded
        ];
        let table = aggregate(&reports);
        assert_eq!(table.subjects.len(), 2);
        assert_eq!(table.activities.len(), 2);
        assert_eq!(table.mape_pct[0][0], Some(2.0));
        assert_eq!(table.mape_pct[0][1], Some(5.0));
        assert_eq!(table.mape_pct[1][0], Some(3.0));
        assert_eq!(table.mape_pct[1][1], None);
    }

    #[test]
    fn report_files_written() {
        let t = series(&[70.0, 75.0, 80.0]);
        let c = series(&[72.0, 74.0, 82.0]);
        let report = evaluate(&t, &c).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_report_files(dir.path(), &report).unwrap();
        for f in ["report.json", "residuals.csv", "ba_points.csv", "ecdf.csv"] {
            assert!(dir.path().join(f).exists(), "{f} missing");
        }
        let json = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
        assert!(json.contains("mae_bpm"));
    }
}
