//! Run outputs: CSV tables (UTF-8, LF, 10 significant digits) and a flat
//! `key = value` text report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, REPORT_FORMAT_VERSION};
use crate::harness::metrics::{AccuracyMatrix, MetricsReport};
use crate::harness::probe::ProbeRow;
use crate::harness::run::EpochEval;
use crate::tasks::{TaskKind, TaskStream};

pub const ACCURACY_MATRIX_FILE: &str = "accuracy_matrix.csv";
pub const ACCURACY_CURVE_FILE: &str = "accuracy_curve.csv";
pub const EPOCH_ACCURACY_FILE: &str = "epoch_accuracy.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const PROBE_FILE: &str = "loss_asymmetry.csv";

/// Fixed-point rendering with 10 significant digits.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x == 0.0 {
            "0".into()
        } else {
            x.to_string()
        };
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (9 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.starts_with("-0") && s.trim_start_matches(['-', '0', '.']).is_empty() {
        return "0".into();
    }
    s
}

pub fn accuracy_matrix_csv(m: &AccuracyMatrix) -> String {
    let mut out = String::from("after_task,task_id,accuracy\n");
    for (i, row) in m.rows().iter().enumerate() {
        for (j, &a) in row.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", i + 1, j + 1, fmt_sig(a));
        }
    }
    out
}

pub fn parse_accuracy_matrix_csv(text: &str) -> Result<AccuracyMatrix> {
    let mut lines = text.lines();
    match lines.next() {
        Some("after_task,task_id,accuracy") => {}
        other => return Err(Error::Report(format!("unexpected header {other:?}"))),
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = || Error::Report(format!("line {}: '{line}'", n + 2));
        let mut it = line.split(',');
        let (Some(i), Some(j), Some(a), None) = (it.next(), it.next(), it.next(), it.next()) else {
            return Err(bad());
        };
        let i: usize = i.trim().parse().map_err(|_| bad())?;
        let j: usize = j.trim().parse().map_err(|_| bad())?;
        let a: f64 = a.trim().parse().map_err(|_| bad())?;
        if i == 0 || j == 0 || j > i {
            return Err(bad());
        }
        if rows.len() < i {
            rows.resize(i, Vec::new());
        }
        if rows[i - 1].len() != j - 1 {
            return Err(Error::Report(format!(
                "line {}: entries out of order",
                n + 2
            )));
        }
        rows[i - 1].push(a);
    }
    AccuracyMatrix::from_rows(rows)
}

pub fn accuracy_curve_csv(metrics: &MetricsReport) -> String {
    let mut out = String::from("after_task,avg_accuracy,forgetting,std_accuracy");
    if metrics.intransigence.is_some() {
        out.push_str(",intransigence");
    }
    out.push('\n');
    for k in 0..metrics.average.len() {
        let _ = write!(
            out,
            "{},{},{},{}",
            k + 1,
            fmt_sig(metrics.average[k]),
            metrics.forgetting[k].map_or(String::new(), fmt_sig),
            fmt_sig(metrics.std_dev[k])
        );
        if let Some(i) = &metrics.intransigence {
            let _ = write!(out, ",{}", fmt_sig(i[k]));
        }
        out.push('\n');
    }
    out
}

pub fn epoch_accuracy_csv(evals: &[EpochEval]) -> String {
    let mut out = String::from("training_task,epoch,task_id,accuracy\n");
    for e in evals {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            e.training_task,
            e.epoch,
            e.task,
            fmt_sig(e.accuracy)
        );
    }
    out
}

pub fn probe_csv(rows: &[ProbeRow]) -> String {
    let mut out = String::from("param_index,offset,delta_loss\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{}",
            r.index,
            fmt_sig(r.offset),
            fmt_sig(r.delta_loss)
        );
    }
    out
}

/// Flat text report: format version, config echo, metric definitions,
/// per-k metrics and the task layout needed to reproduce the stream.
pub fn report_text(
    matrix: &AccuracyMatrix,
    metrics: &MetricsReport,
    config: &ExperimentConfig,
    stream: Option<&TaskStream>,
) -> String {
    let mut pairs: Vec<(String, String)> =
        vec![("format_version".into(), REPORT_FORMAT_VERSION.to_string())];
    pairs.extend(config.to_pairs());
    pairs.extend([
        (
            "definition.A".into(),
            "A_k = (1/k) sum_{j<=k} a[k][j]".into(),
        ),
        (
            "definition.F".into(),
            "F_k = (1/(k-1)) sum_{j<k} (max_{l in [j,k-1]} a[l][j] - a[k][j]); standard definition, reconstructed".into(),
        ),
        (
            "definition.I".into(),
            "I_k = (1/k) sum_{j<=k} (ref[j] - a[j][j]); ref = upper-bound accuracies; standard definition, reconstructed".into(),
        ),
        ("tasks.trained".into(), matrix.len().to_string()),
    ]);
    for k in 1..=metrics.average.len() {
        pairs.push((format!("metrics.A.{k}"), fmt_sig(metrics.average[k - 1])));
        if let Some(f) = metrics.forgetting[k - 1] {
            pairs.push((format!("metrics.F.{k}"), fmt_sig(f)));
        }
        if let Some(i) = &metrics.intransigence {
            pairs.push((format!("metrics.I.{k}"), fmt_sig(i[k - 1])));
        }
        pairs.push((format!("metrics.std.{k}"), fmt_sig(metrics.std_dev[k - 1])));
    }
    pairs.push((
        "metrics.final_accuracies".into(),
        metrics
            .final_accuracies
            .iter()
            .map(|&a| fmt_sig(a))
            .collect::<Vec<_>>()
            .join(","),
    ));
    pairs.push((
        "metrics.wall_clock_secs".into(),
        format!("{:.3}", metrics.wall_clock_secs),
    ));
    if let Some(stream) = stream {
        pairs.push(("tasks.stream_seed".into(), stream.seed.to_string()));
        for t in &stream.tasks {
            let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
            match &t.kind {
                TaskKind::Permutation(p) => {
                    let identity = p.iter().enumerate().all(|(i, &v)| i == v);
                    pairs.push((format!("task.{}.identity", t.id), identity.to_string()));
                    pairs.push((format!("task.{}.permutation", t.id), join(p)));
                }
                TaskKind::ClassSubset(c) => {
                    pairs.push((format!("task.{}.classes", t.id), join(c)));
                }
            }
            pairs.push((
                format!("task.{}.train_examples", t.id),
                t.train_len().to_string(),
            ));
        }
    }
    let mut out = String::new();
    for (k, v) in pairs {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

pub fn parse_report(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once(" = ")
            .ok_or_else(|| Error::Report(format!("line {}: no ' = ' separator", n + 1)))?;
        map.insert(k.trim().to_string(), v.to_string());
    }
    match map.get("format_version").map(String::as_str) {
        Some(v) if v == REPORT_FORMAT_VERSION.to_string() => Ok(map),
        Some(v) => Err(Error::Report(format!("unsupported format version {v}"))),
        None => Err(Error::Report("missing format_version".into())),
    }
}

pub fn read_report_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_pairs(&parse_report(&text)?)
}

#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub accuracy_matrix: PathBuf,
    pub accuracy_curve: PathBuf,
    pub report: PathBuf,
    pub epoch_accuracy: Option<PathBuf>,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes the accuracy matrix CSV, the per-k curve CSV (average accuracy,
/// forgetting, spread), the optional per-epoch CSV and the text report into
/// `dir`, creating it if needed.
pub fn emit_report(
    matrix: &AccuracyMatrix,
    metrics: &MetricsReport,
    config: &ExperimentConfig,
    stream: Option<&TaskStream>,
    epoch_evals: &[EpochEval],
    dir: impl AsRef<Path>,
) -> Result<ReportFiles> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = ReportFiles {
        accuracy_matrix: dir.join(ACCURACY_MATRIX_FILE),
        accuracy_curve: dir.join(ACCURACY_CURVE_FILE),
        report: dir.join(REPORT_FILE),
        epoch_accuracy: (!epoch_evals.is_empty()).then(|| dir.join(EPOCH_ACCURACY_FILE)),
    };
    write(&files.accuracy_matrix, &accuracy_matrix_csv(matrix))?;
    write(&files.accuracy_curve, &accuracy_curve_csv(metrics))?;
    write(&files.report, &report_text(matrix, metrics, config, stream))?;
    if let Some(p) = &files.epoch_accuracy {
        write(p, &epoch_accuracy_csv(epoch_evals))?;
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::metrics::compute_metrics;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(0.98), "0.9800000000");
        assert_eq!(fmt_sig(1.0), "1.000000000");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(123.456), "123.4560000");
        assert_eq!(fmt_sig(-0.0123), "-0.01230000000");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.3333333333");
    }

    #[test]
    fn two_task_csv_has_three_rows() {
        let m = AccuracyMatrix::from_rows(vec![vec![0.98], vec![0.60, 0.95]]).unwrap();
        let csv = accuracy_matrix_csv(&m);
        assert_eq!(
            csv,
            "after_task,task_id,accuracy\n1,1,0.9800000000\n2,1,0.6000000000\n2,2,0.9500000000\n"
        );
        assert_eq!(parse_accuracy_matrix_csv(&csv).unwrap(), m);
    }

    #[test]
    fn malformed_csv_rejected() {
        assert!(parse_accuracy_matrix_csv("a,b,c\n").is_err());
        assert!(parse_accuracy_matrix_csv("after_task,task_id,accuracy\n1,2,0.5\n").is_err());
        assert!(parse_accuracy_matrix_csv("after_task,task_id,accuracy\n2,1,0.5\n").is_err());
    }

    #[test]
    fn report_round_trips_config() {
        let m = AccuracyMatrix::from_rows(vec![vec![0.98], vec![0.60, 0.95]]).unwrap();
        let metrics = compute_metrics(&m, Some(&[0.99, 0.97])).unwrap();
        let cfg = ExperimentConfig {
            train_subset: Some(100),
            ..ExperimentConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&m, &metrics, &cfg, None, &[], dir.path()).unwrap();
        assert_eq!(read_report_config(&files.report).unwrap(), cfg);
        let map = parse_report(&fs::read_to_string(&files.report).unwrap()).unwrap();
        assert_eq!(map["metrics.A.2"], "0.7750000000");
        assert_eq!(map["metrics.F.2"], "0.3800000000");
        assert!(files.epoch_accuracy.is_none());
        let curve = fs::read_to_string(&files.accuracy_curve).unwrap();
        assert_eq!(
            curve.lines().next().unwrap(),
            "after_task,avg_accuracy,forgetting,std_accuracy,intransigence"
        );
        assert_eq!(
            curve.lines().nth(1).unwrap(),
            "1,0.9800000000,,0,0.01000000000"
        );
    }

    #[test]
    fn report_version_checked() {
        assert!(parse_report("format_version = 99\n").is_err());
        assert!(parse_report("config.a = 1\n").is_err());
        assert!(parse_report("garbage\n").is_err());
    }

    #[test]
    fn unwritable_path_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain");
        fs::write(&file, "x").unwrap();
        let m = AccuracyMatrix::from_rows(vec![vec![0.5]]).unwrap();
        let metrics = compute_metrics(&m, None).unwrap();
        let err = emit_report(
            &m,
            &metrics,
            &ExperimentConfig::default(),
            None,
            &[],
            file.join("sub"),
        );
        assert!(matches!(err, Err(Error::Io { .. })));
    }
}
