use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::adam::AdamConfig;
use crate::consolidation::{Hyperparams, RegularizerKind};
use crate::error::{Error, Result};
use crate::nn::NetworkSpec;
use crate::tasks::{make_permuted_tasks, make_split_tasks, BaseDataset, TaskStream};

#[derive(Debug, Clone, PartialEq)]
pub enum TaskSchedule {
    Permuted {
        n_tasks: usize,
    },
    Split {
        classes_per_task: usize,
        shuffle_classes: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub init: u64,
    pub task: u64,
    pub shuffle: u64,
}

impl Seeds {
    pub fn all(seed: u64) -> Self {
        Self {
            init: seed,
            task: seed,
            shuffle: seed,
        }
    }
}

/// Which upper-bound run supplies the intransigence reference accuracies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntransigenceReference {
    SingleTask,
    MultiTask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Hidden layer widths; input and output sizes come from the data.
    pub hidden: Vec<usize>,
    pub optimizer: AdamConfig,
    /// Restart the Adam moments at every task boundary.
    pub reset_optimizer: bool,
    pub epochs_per_task: usize,
    pub batch_size: usize,
    pub regularizer: RegularizerKind,
    pub hyper: Hyperparams,
    pub schedule: TaskSchedule,
    pub seeds: Seeds,
    pub train_subset: Option<usize>,
    /// Also evaluate every seen task after each epoch.
    pub eval_every_epoch: bool,
    pub intransigence_reference: IntransigenceReference,
    pub dataset_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 256],
            optimizer: AdamConfig::default(),
            reset_optimizer: true,
            epochs_per_task: 5,
            batch_size: 256,
            regularizer: RegularizerKind::Alasso,
            hyper: Hyperparams::default(),
            schedule: TaskSchedule::Permuted { n_tasks: 10 },
            seeds: Seeds::all(1),
            train_subset: None,
            eval_every_epoch: false,
            intransigence_reference: IntransigenceReference::SingleTask,
            dataset_dir: None,
            out_dir: None,
        }
    }
}

pub const REPORT_FORMAT_VERSION: u32 = 1;

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(format!(
                "hidden layers must be non-empty and positive, got {:?}",
                self.hidden
            )));
        }
        if self.epochs_per_task == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch size must be positive".into(),
            ));
        }
        match self.schedule {
            TaskSchedule::Permuted { n_tasks: 0 } => {
                return Err(Error::Config("need at least one task".into()))
            }
            TaskSchedule::Split {
                classes_per_task: 0,
                ..
            } => return Err(Error::Config("classes per task must be positive".into())),
            _ => {}
        }
        if self.train_subset == Some(0) {
            return Err(Error::Config("train subset must be positive".into()));
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0 && o.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                o.lr
            )));
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || o.eps.is_nan() || o.eps <= 0.0 {
            return Err(Error::Config(
                "adam betas must lie in [0, 1) and eps > 0".into(),
            ));
        }
        self.hyper.validate()
    }

    pub fn network_spec(&self, base: &BaseDataset) -> Result<NetworkSpec> {
        let mut sizes = vec![base.train.dim()];
        sizes.extend(&self.hidden);
        sizes.push(base.class_count());
        NetworkSpec::new(sizes)
    }

    pub fn build_tasks(&self, base: &BaseDataset) -> Result<TaskStream> {
        let stream = match self.schedule {
            TaskSchedule::Permuted { n_tasks } => {
                make_permuted_tasks(base, n_tasks, self.seeds.task)?
            }
            TaskSchedule::Split {
                classes_per_task,
                shuffle_classes,
            } => make_split_tasks(base, classes_per_task, self.seeds.task, shuffle_classes)?,
        };
        Ok(stream.with_train_subset(self.train_subset))
    }

    pub fn n_tasks_hint(&self) -> Option<usize> {
        match self.schedule {
            TaskSchedule::Permuted { n_tasks } => Some(n_tasks),
            TaskSchedule::Split { .. } => None,
        }
    }

    /// Flat `key = value` pairs, stable order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map_or(String::new(), |p| p.display().to_string())
        };
        let mut out = vec![
            ("config.hidden".into(), list(&self.hidden)),
            ("config.lr".into(), self.optimizer.lr.to_string()),
            ("config.beta1".into(), self.optimizer.beta1.to_string()),
            ("config.beta2".into(), self.optimizer.beta2.to_string()),
            ("config.adam_eps".into(), self.optimizer.eps.to_string()),
            (
                "config.reset_optimizer".into(),
                self.reset_optimizer.to_string(),
            ),
            (
                "config.epochs_per_task".into(),
                self.epochs_per_task.to_string(),
            ),
            ("config.batch_size".into(), self.batch_size.to_string()),
            ("config.regularizer".into(), self.regularizer.to_string()),
            ("config.a".into(), self.hyper.a.to_string()),
            ("config.a_prime".into(), self.hyper.a_prime.to_string()),
            ("config.c".into(), self.hyper.c.to_string()),
            ("config.c_prime".into(), self.hyper.c_prime.to_string()),
            ("config.epsilon".into(), self.hyper.epsilon.to_string()),
            ("config.xi".into(), self.hyper.xi.to_string()),
        ];
        match self.schedule {
            TaskSchedule::Permuted { n_tasks } => {
                out.push(("config.schedule".into(), "permuted".into()));
                out.push(("config.n_tasks".into(), n_tasks.to_string()));
            }
            TaskSchedule::Split {
                classes_per_task,
                shuffle_classes,
            } => {
                out.push(("config.schedule".into(), "split".into()));
                out.push((
                    "config.classes_per_task".into(),
                    classes_per_task.to_string(),
                ));
                out.push(("config.shuffle_classes".into(), shuffle_classes.to_string()));
            }
        }
        out.extend([
            ("config.seed_init".into(), self.seeds.init.to_string()),
            ("config.seed_task".into(), self.seeds.task.to_string()),
            ("config.seed_shuffle".into(), self.seeds.shuffle.to_string()),
            (
                "config.train_subset".into(),
                self.train_subset.map_or(String::new(), |n| n.to_string()),
            ),
            (
                "config.eval_every_epoch".into(),
                self.eval_every_epoch.to_string(),
            ),
            (
                "config.intransigence_reference".into(),
                match self.intransigence_reference {
                    IntransigenceReference::SingleTask => "single-task",
                    IntransigenceReference::MultiTask => "multi-task",
                }
                .into(),
            ),
            ("config.dataset_dir".into(), path(&self.dataset_dir)),
            ("config.out_dir".into(), path(&self.out_dir)),
        ]);
        out
    }

    /// Inverse of [`to_pairs`](Self::to_pairs); ignores keys outside `config.`.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| -> Result<&str> {
            pairs
                .get(&format!("config.{k}"))
                .map(String::as_str)
                .ok_or_else(|| Error::Report(format!("missing key config.{k}")))
        };
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Report(format!("config.{k}: cannot parse '{v}'")))
        }
        let f = |k: &str| -> Result<f64> { num(k, get(k)?) };
        let u = |k: &str| -> Result<u64> { num(k, get(k)?) };
        let z = |k: &str| -> Result<usize> { num(k, get(k)?) };
        let b = |k: &str| -> Result<bool> { num(k, get(k)?) };
        let opt_path = |k: &str| -> Result<Option<PathBuf>> {
            let v = get(k)?;
            Ok((!v.is_empty()).then(|| PathBuf::from(v)))
        };

        let hidden = get("hidden")?
            .split(',')
            .map(|s| num::<usize>("hidden", s.trim()))
            .collect::<Result<Vec<_>>>()?;
        let schedule = match get("schedule")? {
            "permuted" => TaskSchedule::Permuted {
                n_tasks: z("n_tasks")?,
            },
            "split" => TaskSchedule::Split {
                classes_per_task: z("classes_per_task")?,
                shuffle_classes: b("shuffle_classes")?,
            },
            other => return Err(Error::Report(format!("unknown schedule '{other}'"))),
        };
        let train_subset = match get("train_subset")? {
            "" => None,
            v => Some(num("train_subset", v)?),
        };
        let intransigence_reference = match get("intransigence_reference")? {
            "single-task" => IntransigenceReference::SingleTask,
            "multi-task" => IntransigenceReference::MultiTask,
            other => return Err(Error::Report(format!("unknown reference '{other}'"))),
        };
        Ok(Self {
            hidden,
            optimizer: AdamConfig {
                lr: f("lr")?,
                beta1: f("beta1")?,
                beta2: f("beta2")?,
                eps: f("adam_eps")?,
            },
            reset_optimizer: b("reset_optimizer")?,
            epochs_per_task: z("epochs_per_task")?,
            batch_size: z("batch_size")?,
            regularizer: get("regularizer")?.parse()?,
            hyper: Hyperparams {
                a: f("a")?,
                a_prime: f("a_prime")?,
                c: f("c")?,
                c_prime: f("c_prime")?,
                epsilon: f("epsilon")?,
                xi: f("xi")?,
            },
            schedule,
            seeds: Seeds {
                init: u("seed_init")?,
                task: u("seed_task")?,
                shuffle: u("seed_shuffle")?,
            },
            train_subset,
            eval_every_epoch: b("eval_every_epoch")?,
            intransigence_reference,
            dataset_dir: opt_path("dataset_dir")?,
            out_dir: opt_path("out_dir")?,
        })
    }
}
