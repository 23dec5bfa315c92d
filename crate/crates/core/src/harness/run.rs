use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;

use crate::adam::{adam_step, AdamState};
use crate::consolidation::{ConsolidationState, RegularizerKind};
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::metrics::{compute_metrics, AccuracyMatrix, MetricsReport};
use crate::matrix::Matrix;
use crate::nn::{self, init_params, NetworkSpec, ParameterVector};
use crate::seed;
use crate::tasks::{batches, BaseDataset, Split, Task, TaskStream};

const EVAL_CHUNK: usize = 1000;
const MULTI_TASK_STREAM: u64 = 0x3a11;

/// Accuracy of a task measured after some epoch of some training task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochEval {
    pub training_task: usize,
    pub epoch: usize,
    pub task: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct ContinualRun {
    pub matrix: AccuracyMatrix,
    pub metrics: MetricsReport,
    pub state: ConsolidationState,
    pub params: ParameterVector,
    pub spec: NetworkSpec,
    pub stream: TaskStream,
    pub epoch_evals: Vec<EpochEval>,
}

/// Test accuracy of `params` on `task`: argmax over the (masked) logits,
/// lowest class index on ties.
pub fn evaluate(spec: &NetworkSpec, params: &ParameterVector, task: &Task) -> Result<f64> {
    if task.test_len() == 0 {
        return Err(Error::InvalidTasks(format!(
            "task {} has no test data",
            task.id
        )));
    }
    let mut correct = 0usize;
    for (x, y) in task.chunks(Split::Test, EVAL_CHUNK) {
        let pred = nn::predict(spec, params, &x, task.head_mask.as_ref())?;
        correct += pred.iter().zip(&y).filter(|(p, l)| p == l).count();
    }
    Ok(correct as f64 / task.test_len() as f64)
}

fn epoch_seed(shuffle: u64, task: usize, epoch: usize) -> u64 {
    shuffle
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add((task as u64) << 32)
        .wrapping_add(epoch as u64)
}

struct Trainer<'a> {
    config: &'a ExperimentConfig,
    spec: &'a NetworkSpec,
    kind: RegularizerKind,
    params: ParameterVector,
    adam: AdamState,
    state: ConsolidationState,
}

impl Trainer<'_> {
    fn step(
        &mut self,
        x: &Matrix,
        y: &[usize],
        task: &Task,
        epoch: usize,
        batch: usize,
    ) -> Result<()> {
        let out = self.state.total_loss_and_grad(
            self.spec,
            &self.params,
            x,
            y,
            task.head_mask.as_ref(),
            self.kind,
        )?;
        if !out.total.is_finite() || out.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                task: task.id,
                epoch,
                batch,
            });
        }
        let delta = adam_step(&mut self.params, &out.grad, &mut self.adam)?;
        self.state.accumulate_importance(&out.task_grad, &delta)
    }

    fn train_task(
        &mut self,
        stream: &TaskStream,
        n: usize,
        evals: &mut Vec<EpochEval>,
    ) -> Result<()> {
        let task = &stream.tasks[n];
        if self.config.reset_optimizer {
            self.adam.reset();
        }
        for epoch in 1..=self.config.epochs_per_task {
            let seed = epoch_seed(self.config.seeds.shuffle, task.id, epoch);
            for (b, (x, y)) in batches(task, self.config.batch_size, seed)?.enumerate() {
                self.step(&x, &y, task, epoch, b + 1)?;
            }
            if self.config.eval_every_epoch {
                for seen in &stream.tasks[..=n] {
                    evals.push(EpochEval {
                        training_task: task.id,
                        epoch,
                        task: seen.id,
                        accuracy: evaluate(self.spec, &self.params, seen)?,
                    });
                }
            }
            debug!("task {} epoch {epoch} done", task.id);
        }
        Ok(())
    }
}

/// Trains the tasks of `stream` in order with the given regularizer,
/// consolidating at every boundary and evaluating all seen tasks after each.
pub fn run_stream(
    config: &ExperimentConfig,
    spec: &NetworkSpec,
    stream: &TaskStream,
    kind: RegularizerKind,
) -> Result<ContinualRun> {
    config.validate()?;
    let started = Instant::now();
    let params = init_params(spec, config.seeds.init)?;
    let mut trainer = Trainer {
        config,
        spec,
        kind,
        adam: AdamState::new(params.len(), config.optimizer),
        state: ConsolidationState::new(&params, config.hyper),
        params,
    };
    let mut matrix = AccuracyMatrix::new();
    let mut epoch_evals = Vec::new();
    for n in 0..stream.len() {
        trainer.train_task(stream, n, &mut epoch_evals)?;
        trainer.state = trainer.state.consolidate(&trainer.params, kind)?;
        let row = stream.tasks[..=n]
            .iter()
            .map(|t| evaluate(spec, &trainer.params, t))
            .collect::<Result<Vec<_>>>()?;
        info!(
            "[{kind}] after task {}: mean accuracy {:.4}",
            n + 1,
            row.iter().sum::<f64>() / row.len() as f64
        );
        matrix.push_row(row)?;
    }
    let mut metrics = compute_metrics(&matrix, None)?;
    metrics.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(ContinualRun {
        matrix,
        metrics,
        state: trainer.state,
        params: trainer.params,
        spec: spec.clone(),
        stream: stream.clone(),
        epoch_evals,
    })
}

pub fn run_continual(config: &ExperimentConfig, base: &BaseDataset) -> Result<ContinualRun> {
    config.validate()?;
    let spec = config.network_spec(base)?;
    let stream = config.build_tasks(base)?;
    run_stream(config, &spec, &stream, config.regularizer)
}

/// One fresh, unregularized model per task, trained and tested on that task
/// alone. Task `j` is initialized with `seeds.init + j − 1`.
pub fn run_single_task_baseline(config: &ExperimentConfig, base: &BaseDataset) -> Result<Vec<f64>> {
    config.validate()?;
    let spec = config.network_spec(base)?;
    let stream = config.build_tasks(base)?;
    stream
        .tasks
        .iter()
        .enumerate()
        .map(|(j, task)| {
            let mut cfg = config.clone();
            cfg.seeds.init = config.seeds.init.wrapping_add(j as u64);
            cfg.eval_every_epoch = false;
            let single = TaskStream {
                tasks: vec![task.clone()],
                seed: stream.seed,
            };
            let run = run_stream(&cfg, &spec, &single, RegularizerKind::None)?;
            info!(
                "[single-task] task {}: accuracy {:.4}",
                task.id,
                run.matrix.row(1)[0]
            );
            Ok(run.matrix.row(1)[0])
        })
        .collect()
}

/// Joint-training upper bound: for every `n` a fresh model is trained on
/// mini-batches mixed from tasks `1..=n`, then tested on each of them.
pub fn run_multi_task(config: &ExperimentConfig, base: &BaseDataset) -> Result<AccuracyMatrix> {
    config.validate()?;
    let spec = config.network_spec(base)?;
    let stream = config.build_tasks(base)?;
    let mut matrix = AccuracyMatrix::new();
    for n in 1..=stream.len() {
        let seen = &stream.tasks[..n];
        let mut params = init_params(&spec, config.seeds.init)?;
        let mut adam = AdamState::new(params.len(), config.optimizer);
        let pool: Vec<(usize, usize)> = seen
            .iter()
            .enumerate()
            .flat_map(|(t, task)| (0..task.train_len()).map(move |p| (t, p)))
            .collect();
        for epoch in 1..=config.epochs_per_task {
            let mut order = pool.clone();
            order.shuffle(&mut seed::rng(
                epoch_seed(config.seeds.shuffle, n, epoch),
                MULTI_TASK_STREAM,
            ));
            for (b, chunk) in order.chunks(config.batch_size).enumerate() {
                let (x, y) = gather_mixed(seen, chunk);
                // joint training competes over every class
                let (loss, grad) = nn::task_loss_and_grad(&spec, &params, &x, &y, None)?;
                if !loss.is_finite() {
                    return Err(Error::Diverged {
                        task: n,
                        epoch,
                        batch: b + 1,
                    });
                }
                adam_step(&mut params, &grad, &mut adam)?;
            }
        }
        let row = seen
            .iter()
            .map(|t| evaluate(&spec, &params, t))
            .collect::<Result<Vec<_>>>()?;
        info!(
            "[multi-task] tasks 1..={n}: mean accuracy {:.4}",
            row.iter().sum::<f64>() / n as f64
        );
        matrix.push_row(row)?;
    }
    Ok(matrix)
}

fn gather_mixed(tasks: &[Task], picks: &[(usize, usize)]) -> (Matrix, Vec<usize>) {
    let dim = tasks[0].dim();
    let mut x = Matrix::zeros(picks.len(), dim);
    let mut y = Vec::with_capacity(picks.len());
    for (r, &(t, p)) in picks.iter().enumerate() {
        let (row, label) = tasks[t].gather(Split::Train, &[p]);
        x.row_mut(r).copy_from_slice(row.row(0));
        y.push(label[0]);
    }
    (x, y)
}
