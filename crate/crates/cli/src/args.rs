use std::ffi::OsString;
use std::path::PathBuf;

use alasso::harness::{ExperimentConfig, IntransigenceReference, Seeds, TaskSchedule};
use alasso::RegularizerKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;
use crate::presets::{self, DEFAULT_PRESET, PRESETS};

pub const DATASET_ENV: &str = "ALASSO_DATASET_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "alasso",
    version,
    about = "Continual learning on permuted / split MNIST with ALASSO, SI or plain training",
    arg_required_else_help = true,
    after_help = presets::help_table()
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Train the task stream sequentially and write the accuracy matrix and report.
    Run {
        #[command(flatten)]
        common: Common,
        /// Also train upper-bound models to report intransigence.
        #[arg(long, value_enum, default_value_t = ReferenceArg::None)]
        reference: ReferenceArg,
    },
    /// One independent model per task (upper bound).
    SingleTask {
        #[command(flatten)]
        common: Common,
    },
    /// Joint training on mixed batches of all tasks seen so far (upper bound).
    MultiTask {
        #[command(flatten)]
        common: Common,
    },
    /// Train the first task, then measure the loss change when single
    /// parameters are moved away from the trained point.
    ProbeAsymmetry {
        #[command(flatten)]
        common: Common,
        /// Number of parameters to probe.
        #[arg(long, default_value_t = 200)]
        count: usize,
        /// Offsets to apply to each probed parameter.
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            default_value = "-0.5,-0.25,-0.1,-0.05,-0.01,0,0.01,0.05,0.1,0.25,0.5"
        )]
        offsets: Vec<f64>,
        /// Training examples in the fixed evaluation batch.
        #[arg(long, default_value_t = 1000)]
        eval_size: usize,
    },
    /// Recompute metrics from an accuracy-matrix CSV.
    Metrics {
        /// CSV with header after_task,task_id,accuracy.
        csv: PathBuf,
        /// Reference accuracies per task for intransigence.
        #[arg(long, value_delimiter = ',')]
        reference: Option<Vec<f64>>,
    },
    /// Final average accuracy for each overestimation factor `a`.
    SensitivitySweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0.8,1.0,2.0,3.0,4.0,5.0")]
        a_values: Vec<f64>,
        /// Seeds averaged per value of `a` (defaults to --seed).
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Runs executed concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReferenceArg {
    None,
    SingleTask,
    MultiTask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RegularizerArg {
    None,
    Si,
    Alasso,
}

#[derive(Debug, Args)]
struct Common {
    /// Directory with the four MNIST IDX files (falls back to $ALASSO_DATASET_DIR).
    #[arg(long)]
    dataset_dir: Option<PathBuf>,
    #[arg(long, value_parser = PRESETS.iter().map(|p| p.name).collect::<Vec<_>>())]
    preset: Option<String>,
    #[arg(long, value_enum)]
    regularizer: Option<RegularizerArg>,
    /// Steepness factor on the unvisited side of each surrogate.
    #[arg(long)]
    a: Option<f64>,
    /// Steepness factor used when re-evaluating earlier surrogates at a boundary.
    #[arg(long)]
    a_prime: Option<f64>,
    /// Weight of the surrogate penalty in the training loss.
    #[arg(long)]
    c: Option<f64>,
    /// Weight of earlier surrogates in the importance update.
    #[arg(long)]
    c_prime: Option<f64>,
    /// Curvature floor added on the unvisited side.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Damping added to the squared shift in the importance update.
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Hidden widths, e.g. 256,256.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Number of permuted tasks.
    #[arg(long)]
    tasks: Option<usize>,
    /// Classes per task for split schedules.
    #[arg(long)]
    classes_per_task: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use only the first N training examples of every task.
    #[arg(long)]
    train_subset: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write directly into --out instead of a timestamped subdirectory.
    #[arg(long)]
    out_flat: bool,
    /// Evaluate every seen task after each epoch.
    #[arg(long)]
    eval_every_epoch: bool,
    /// Keep Adam moments across task boundaries.
    #[arg(long)]
    keep_optimizer_state: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Run {
        reference: Option<IntransigenceReference>,
    },
    SingleTask,
    MultiTask,
    ProbeAsymmetry {
        count: usize,
        offsets: Vec<f64>,
        eval_size: usize,
    },
    Metrics {
        csv: PathBuf,
        reference: Option<Vec<f64>>,
    },
    SensitivitySweep {
        a_values: Vec<f64>,
        seeds: Vec<u64>,
        jobs: usize,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Run { .. } => "run",
            Command::SingleTask => "single-task",
            Command::MultiTask => "multi-task",
            Command::ProbeAsymmetry { .. } => "probe-asymmetry",
            Command::Metrics { .. } => "metrics",
            Command::SensitivitySweep { .. } => "sensitivity-sweep",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: ExperimentConfig,
    pub out_flat: bool,
    /// Overrides that replaced a preset value.
    pub notes: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn parse_args<I, T>(argv: I) -> Result<Invocation, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    parse_args_with_env(argv, std::env::var_os(DATASET_ENV).map(PathBuf::from))
}

/// Like [`parse_args`] with the dataset-directory fallback passed in.
pub fn parse_args_with_env<I, T>(
    argv: I,
    env_dataset_dir: Option<PathBuf>,
) -> Result<Invocation, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    let (command, common) = match cli.command {
        Sub::Run { common, reference } => (
            Command::Run {
                reference: match reference {
                    ReferenceArg::None => None,
                    ReferenceArg::SingleTask => Some(IntransigenceReference::SingleTask),
                    ReferenceArg::MultiTask => Some(IntransigenceReference::MultiTask),
                },
            },
            common,
        ),
        Sub::SingleTask { common } => (Command::SingleTask, common),
        Sub::MultiTask { common } => (Command::MultiTask, common),
        Sub::ProbeAsymmetry {
            common,
            count,
            offsets,
            eval_size,
        } => (
            Command::ProbeAsymmetry {
                count,
                offsets,
                eval_size,
            },
            common,
        ),
        Sub::Metrics { csv, reference } => {
            return Ok(Invocation {
                command: Command::Metrics { csv, reference },
                config: ExperimentConfig::default(),
                out_flat: false,
                notes: Vec::new(),
                warnings: Vec::new(),
            })
        }
        Sub::SensitivitySweep {
            common,
            a_values,
            seeds,
            jobs,
        } => {
            let seeds = seeds.unwrap_or_else(|| vec![common.seed.unwrap_or(1)]);
            if a_values.is_empty() || seeds.is_empty() || jobs == 0 {
                return Err(CliError::Usage(
                    "sweep needs at least one a value, one seed and one job".into(),
                ));
            }
            (
                Command::SensitivitySweep {
                    a_values,
                    seeds,
                    jobs,
                },
                common,
            )
        }
    };
    let out_flat = common.out_flat;
    let (mut config, notes, mut warnings) = build_config(common, env_dataset_dir)?;
    if let Command::Run { reference: Some(r) } = &command {
        config.intransigence_reference = *r;
    }
    if let Command::SensitivitySweep { a_values, .. } = &command {
        if a_values.iter().any(|&a| a <= 1.0) {
            warnings.push("sweep includes a <= 1: overestimation disabled for those runs".into());
        }
    }
    config.validate()?;
    Ok(Invocation {
        command,
        config,
        out_flat,
        notes,
        warnings,
    })
}

fn build_config(
    c: Common,
    env_dataset_dir: Option<PathBuf>,
) -> Result<(ExperimentConfig, Vec<String>, Vec<String>), CliError> {
    let preset_name = c.preset.as_deref().unwrap_or(DEFAULT_PRESET);
    let preset = presets::find(preset_name)
        .ok_or_else(|| CliError::Usage(format!("unknown preset '{preset_name}'")))?;
    let mut cfg = preset.config();
    let mut notes = Vec::new();
    let mut warnings = Vec::new();

    macro_rules! apply {
        ($flag:literal, $value:expr, $target:expr) => {
            if let Some(v) = $value {
                if $target != v {
                    notes.push(format!(
                        "--{} {:?} overrides preset {preset_name} value {:?}",
                        $flag, v, $target
                    ));
                }
                $target = v;
            }
        };
    }

    apply!("hidden", c.hidden, cfg.hidden);
    apply!("epochs", c.epochs, cfg.epochs_per_task);
    apply!("batch-size", c.batch_size, cfg.batch_size);
    apply!("lr", c.lr, cfg.optimizer.lr);
    apply!("a", c.a, cfg.hyper.a);
    apply!("a-prime", c.a_prime, cfg.hyper.a_prime);
    apply!("c", c.c, cfg.hyper.c);
    apply!("c-prime", c.c_prime, cfg.hyper.c_prime);
    apply!("epsilon", c.epsilon, cfg.hyper.epsilon);
    apply!("xi", c.xi, cfg.hyper.xi);
    if let Some(r) = c.regularizer {
        cfg.regularizer = match r {
            RegularizerArg::None => RegularizerKind::None,
            RegularizerArg::Si => RegularizerKind::Si,
            RegularizerArg::Alasso => RegularizerKind::Alasso,
        };
    }
    match &mut cfg.schedule {
        TaskSchedule::Permuted { n_tasks } => {
            apply!("tasks", c.tasks, *n_tasks);
            if c.classes_per_task.is_some() {
                return Err(CliError::Usage(format!(
                    "--classes-per-task does not apply to permuted preset {preset_name}"
                )));
            }
        }
        TaskSchedule::Split {
            classes_per_task, ..
        } => {
            apply!("classes-per-task", c.classes_per_task, *classes_per_task);
            if c.tasks.is_some() {
                return Err(CliError::Usage(format!(
                    "--tasks does not apply to split preset {preset_name}; use --classes-per-task"
                )));
            }
        }
    }
    if let Some(seed) = c.seed {
        cfg.seeds = Seeds::all(seed);
    }
    cfg.train_subset = c.train_subset;
    cfg.eval_every_epoch = c.eval_every_epoch;
    cfg.reset_optimizer = !c.keep_optimizer_state;
    cfg.out_dir = Some(c.out.unwrap_or_else(|| PathBuf::from("out")));
    cfg.dataset_dir = c.dataset_dir.or(env_dataset_dir);
    if cfg.dataset_dir.is_none() {
        return Err(CliError::Usage(format!(
            "missing dataset directory: pass --dataset-dir or set {DATASET_ENV}"
        )));
    }
    if cfg.hyper.a <= 1.0 {
        warnings.push(format!(
            "a = {} <= 1 disables overestimation of the unobserved side (ablation mode)",
            cfg.hyper.a
        ));
    }
    Ok((cfg, notes, warnings))
}
