//! Command-line front end: presets, argument parsing and dispatch to the
//! training harness.

mod args;
mod error;
pub mod presets;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use alasso::harness::report::{self, fmt_sig, PROBE_FILE};
use alasso::harness::{
    asymmetry_fraction, compute_metrics, emit_report, probe_loss_asymmetry, run_continual,
    run_multi_task, run_single_task_baseline, run_stream, sample_indices, ExperimentConfig,
    IntransigenceReference,
};
use alasso::{load_mnist_dir, BaseDataset, RegularizerKind, TaskStream};
use log::{info, warn};

pub use args::{parse_args, parse_args_with_env, Command, Invocation, DATASET_ENV};
pub use error::CliError;

pub const SWEEP_FILE: &str = "sensitivity.csv";
pub const SINGLE_TASK_FILE: &str = "single_task.csv";

/// Final average accuracy for one value of the overestimation factor.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub a: f64,
    pub avg_accuracy: f64,
    pub per_seed: Vec<f64>,
}

/// Runs `run_continual` for every `(a, seed)` pair and averages the final
/// average accuracy over seeds. `jobs > 1` runs pairs on separate threads;
/// results do not depend on `jobs`.
pub fn sensitivity_sweep(
    config: &ExperimentConfig,
    base: &BaseDataset,
    a_values: &[f64],
    seeds: &[u64],
    jobs: usize,
) -> Result<Vec<SweepRow>, CliError> {
    let pairs: Vec<(f64, u64)> = a_values
        .iter()
        .flat_map(|&a| seeds.iter().map(move |&s| (a, s)))
        .collect();
    let run_one = |&(a, seed): &(f64, u64)| -> Result<f64, CliError> {
        let mut cfg = config.clone();
        cfg.hyper.a = a;
        cfg.seeds = alasso::harness::Seeds::all(seed);
        let run = run_continual(&cfg, base)?;
        info!(
            "[sweep] a = {a}, seed {seed}: A = {:.4}",
            run.metrics.final_average()
        );
        Ok(run.metrics.final_average())
    };
    let jobs = jobs.max(1);
    let mut finals = Vec::with_capacity(pairs.len());
    for group in pairs.chunks(jobs) {
        let results: Vec<Result<f64, CliError>> = if jobs == 1 {
            group.iter().map(run_one).collect()
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = group.iter().map(|p| s.spawn(move || run_one(p))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("sweep worker panicked"))
                    .collect()
            })
        };
        for r in results {
            finals.push(r?);
        }
    }
    Ok(a_values
        .iter()
        .zip(finals.chunks(seeds.len()))
        .map(|(&a, per_seed)| SweepRow {
            a,
            avg_accuracy: per_seed.iter().sum::<f64>() / per_seed.len() as f64,
            per_seed: per_seed.to_vec(),
        })
        .collect())
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("a,avg_accuracy\n");
    for r in rows {
        let _ = writeln!(out, "{},{}", r.a, fmt_sig(r.avg_accuracy));
    }
    out
}

/// `base/<command>-<UTC timestamp>`, or `base` itself when `flat`.
pub fn output_dir(base: &Path, command: &str, flat: bool) -> PathBuf {
    if flat {
        return base.to_path_buf();
    }
    let stamp = humantime::format_rfc3339_seconds(SystemTime::now())
        .to_string()
        .replace(':', "");
    let stem = format!("{command}-{stamp}");
    let mut dir = base.join(&stem);
    let mut n = 1;
    while dir.exists() {
        n += 1;
        dir = base.join(format!("{stem}-{n}"));
    }
    dir
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| {
        CliError::Core(alasso::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| {
        CliError::Core(alasso::Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })
    })
}

fn load_base(config: &ExperimentConfig) -> Result<BaseDataset, CliError> {
    let dir = config
        .dataset_dir
        .as_ref()
        .ok_or_else(|| CliError::Usage(format!("missing dataset directory (set {DATASET_ENV})")))?;
    info!("loading MNIST from {}", dir.display());
    Ok(load_mnist_dir(dir)?)
}

fn reference_accuracies(
    config: &ExperimentConfig,
    base: &BaseDataset,
    which: IntransigenceReference,
) -> Result<Vec<f64>, CliError> {
    Ok(match which {
        IntransigenceReference::SingleTask => run_single_task_baseline(config, base)?,
        // joint model trained on tasks 1..=j, tested on task j
        IntransigenceReference::MultiTask => run_multi_task(config, base)?.diagonal(),
    })
}

/// Runs the parsed command and returns the directory that received output,
/// if any. Human-readable summaries go to stdout.
pub fn execute(inv: &Invocation) -> Result<Option<PathBuf>, CliError> {
    for note in &inv.notes {
        info!("{note}");
    }
    for w in &inv.warnings {
        warn!("{w}");
    }
    let config = &inv.config;
    let out_base = || {
        config
            .out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("out"))
    };
    let out_dir = || output_dir(&out_base(), inv.command.name(), inv.out_flat);

    match &inv.command {
        Command::Metrics { csv, reference } => {
            let text = fs::read_to_string(csv).map_err(|e| {
                CliError::Core(alasso::Error::Io {
                    path: csv.clone(),
                    source: e,
                })
            })?;
            let matrix = report::parse_accuracy_matrix_csv(&text)?;
            let metrics = compute_metrics(&matrix, reference.as_deref())?;
            print!("{}", report::accuracy_curve_csv(&metrics));
            Ok(None)
        }
        Command::Run { reference } => {
            let base = load_base(config)?;
            let mut run = run_continual(config, &base)?;
            if let Some(which) = reference {
                let refs = reference_accuracies(config, &base, *which)?;
                let secs = run.metrics.wall_clock_secs;
                run.metrics = compute_metrics(&run.matrix, Some(&refs))?;
                run.metrics.wall_clock_secs = secs;
            }
            let dir = out_dir();
            emit_report(
                &run.matrix,
                &run.metrics,
                config,
                Some(&run.stream),
                &run.epoch_evals,
                &dir,
            )?;
            let n = run.matrix.len();
            let forgetting = run
                .metrics
                .final_forgetting()
                .map_or(String::new(), |f| format!(", F_{n} = {f:.4}"));
            println!(
                "{}: A_{n} = {:.4}{forgetting}",
                config.regularizer,
                run.metrics.final_average()
            );
            println!("wrote {}", dir.display());
            Ok(Some(dir))
        }
        Command::SingleTask => {
            let base = load_base(config)?;
            let accs = run_single_task_baseline(config, &base)?;
            let dir = out_dir();
            create_dir(&dir)?;
            let mut csv = String::from("task_id,accuracy\n");
            for (j, a) in accs.iter().enumerate() {
                let _ = writeln!(csv, "{},{}", j + 1, fmt_sig(*a));
            }
            write(&dir.join(SINGLE_TASK_FILE), &csv)?;
            print!("{csv}");
            println!("wrote {}", dir.display());
            Ok(Some(dir))
        }
        Command::MultiTask => {
            let base = load_base(config)?;
            let stream = config.build_tasks(&base)?;
            let matrix = run_multi_task(config, &base)?;
            let metrics = compute_metrics(&matrix, None)?;
            let dir = out_dir();
            emit_report(&matrix, &metrics, config, Some(&stream), &[], &dir)?;
            println!(
                "multi-task: A_{} = {:.4}",
                matrix.len(),
                metrics.final_average()
            );
            println!("wrote {}", dir.display());
            Ok(Some(dir))
        }
        Command::ProbeAsymmetry {
            count,
            offsets,
            eval_size,
        } => {
            let base = load_base(config)?;
            let spec = config.network_spec(&base)?;
            let full = config.build_tasks(&base)?;
            let first = TaskStream {
                tasks: vec![full.tasks[0].clone()],
                seed: full.seed,
            };
            // the first task carries no consolidated knowledge to protect
            let run = run_stream(config, &spec, &first, RegularizerKind::None)?;
            let indices = sample_indices(spec.param_count(), *count, config.seeds.init);
            let rows = probe_loss_asymmetry(
                &spec,
                &run.params,
                &first.tasks[0],
                &indices,
                offsets,
                *eval_size,
            )?;
            let dir = out_dir();
            create_dir(&dir)?;
            write(&dir.join(PROBE_FILE), &report::probe_csv(&rows))?;
            let largest = offsets.iter().fold(0.0f64, |m, &d| m.max(d.abs()));
            if largest > 0.0 {
                println!(
                    "asymmetric at ±{largest} (gap > 5% of the larger change): {:.1}% of {} parameters",
                    100.0 * asymmetry_fraction(&rows, largest, 0.05),
                    indices.len()
                );
            }
            println!("wrote {}", dir.display());
            Ok(Some(dir))
        }
        Command::SensitivitySweep {
            a_values,
            seeds,
            jobs,
        } => {
            let base = load_base(config)?;
            let rows = sensitivity_sweep(config, &base, a_values, seeds, *jobs)?;
            let dir = out_dir();
            create_dir(&dir)?;
            let csv = sweep_csv(&rows);
            write(&dir.join(SWEEP_FILE), &csv)?;
            print!("{csv}");
            println!("wrote {}", dir.display());
            Ok(Some(dir))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_csv_layout() {
        let rows = [
            SweepRow {
                a: 0.8,
                avg_accuracy: 0.9,
                per_seed: vec![0.9],
            },
            SweepRow {
                a: 2.0,
                avg_accuracy: 0.95,
                per_seed: vec![0.95],
            },
        ];
        assert_eq!(
            sweep_csv(&rows),
            "a,avg_accuracy\n0.8,0.9000000000\n2,0.9500000000\n"
        );
    }

    #[test]
    fn flat_and_timestamped_output_dirs() {
        let tmp = tempfile::tempdir().unwrap();
        assert_eq!(output_dir(tmp.path(), "run", true), tmp.path());
        let d = output_dir(tmp.path(), "run", false);
        assert_eq!(d.parent().unwrap(), tmp.path());
        let name = d.file_name().unwrap().to_str().unwrap();
        assert!(name.starts_with("run-") && !name.contains(':'), "{name}");
        fs::create_dir(&d).unwrap();
        assert_ne!(output_dir(tmp.path(), "run", false), d);
    }
}
