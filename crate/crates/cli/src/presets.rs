use std::fmt::Write as _;

use alasso::harness::{ExperimentConfig, TaskSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetSchedule {
    Permuted(usize),
    Split(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Preset {
    pub name: &'static str,
    pub schedule: PresetSchedule,
    pub hidden: &'static [usize],
    pub epochs: usize,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "permuted-mnist-10",
        schedule: PresetSchedule::Permuted(10),
        hidden: &[256, 256],
        epochs: 5,
    },
    Preset {
        name: "permuted-mnist-30",
        schedule: PresetSchedule::Permuted(30),
        hidden: &[2000, 2000],
        epochs: 20,
    },
    Preset {
        name: "permuted-mnist-100",
        schedule: PresetSchedule::Permuted(100),
        hidden: &[2000, 2000],
        epochs: 20,
    },
    Preset {
        name: "split-mnist-5",
        schedule: PresetSchedule::Split(2),
        hidden: &[256, 256],
        epochs: 5,
    },
];

pub const DEFAULT_PRESET: &str = "permuted-mnist-10";

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

impl Preset {
    /// Full configuration for this preset. Settings shared by every preset
    /// (optimizer, batch size, regularizer weights) come from
    /// `ExperimentConfig::default()`.
    pub fn config(&self) -> ExperimentConfig {
        ExperimentConfig {
            hidden: self.hidden.to_vec(),
            epochs_per_task: self.epochs,
            schedule: match self.schedule {
                PresetSchedule::Permuted(n_tasks) => TaskSchedule::Permuted { n_tasks },
                PresetSchedule::Split(classes_per_task) => TaskSchedule::Split {
                    classes_per_task,
                    shuffle_classes: false,
                },
            },
            ..ExperimentConfig::default()
        }
    }
}

/// The preset table shown in `--help`, rendered from [`PRESETS`].
pub fn help_table() -> String {
    let base = ExperimentConfig::default();
    let mut out = String::from("Presets:\n");
    let _ = writeln!(
        out,
        "  {:<20} {:<16} {:<12} {:>6}",
        "name", "tasks", "hidden", "epochs"
    );
    for p in PRESETS {
        let tasks = match p.schedule {
            PresetSchedule::Permuted(n) => format!("{n} permuted"),
            PresetSchedule::Split(c) => format!("split by {c}"),
        };
        let hidden = p
            .hidden
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(
            out,
            "  {:<20} {:<16} {:<12} {:>6}",
            p.name, tasks, hidden, p.epochs
        );
    }
    let h = base.hyper;
    let _ = write!(
        out,
        "All presets: lr {}, batch {}, regularizer {}, a {}, a' {}, c {}, c' {}, epsilon {}, xi {}.\n\
         Default preset: {DEFAULT_PRESET}.",
        base.optimizer.lr,
        base.batch_size,
        base.regularizer,
        h.a,
        h.a_prime,
        h.c,
        h.c_prime,
        h.epsilon,
        h.xi
    );
    out
}
