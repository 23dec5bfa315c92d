//! Loss response to moving one parameter at a time away from a trained
//! point. Shows how lopsided the true per-parameter loss is around an
//! optimum.

use rand::seq::index;

use crate::error::{Error, Result};
use crate::nn::{task_loss, NetworkSpec, ParameterVector};
use crate::seed;
use crate::tasks::{Split, Task};

const PROBE_STREAM: u64 = 0x960b;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRow {
    pub index: usize,
    pub offset: f64,
    pub delta_loss: f64,
}

/// `L(θ with θ_k + δ) − L(θ)` for every `k` in `indices` and every `δ` in
/// `offsets`, on the first `eval_size` training examples of `task`.
pub fn probe_loss_asymmetry(
    spec: &NetworkSpec,
    params: &ParameterVector,
    task: &Task,
    indices: &[usize],
    offsets: &[f64],
    eval_size: usize,
) -> Result<Vec<ProbeRow>> {
    if let Some(&index) = indices.iter().find(|&&k| k >= params.len()) {
        return Err(Error::IndexOutOfRange {
            index,
            len: params.len(),
        });
    }
    let n = eval_size.min(task.train_len());
    let positions: Vec<usize> = (0..n).collect();
    let (x, y) = task.gather(Split::Train, &positions);
    let mask = task.head_mask.as_ref();
    let base = task_loss(spec, params, &x, &y, mask)?;
    let mut probe = params.clone();
    let mut rows = Vec::with_capacity(indices.len() * offsets.len());
    for &k in indices {
        for &offset in offsets {
            let delta_loss = if offset == 0.0 {
                0.0
            } else {
                probe[k] = params[k] + offset;
                let l = task_loss(spec, &probe, &x, &y, mask)?;
                probe[k] = params[k];
                l - base
            };
            rows.push(ProbeRow {
                index: k,
                offset,
                delta_loss,
            });
        }
    }
    Ok(rows)
}

/// `count` distinct parameter indices drawn uniformly, sorted.
pub fn sample_indices(param_count: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed, PROBE_STREAM);
    let mut picked = index::sample(&mut rng, param_count, count.min(param_count)).into_vec();
    picked.sort_unstable();
    picked
}

/// Share of probed parameters whose loss changes at `+offset` and `−offset`
/// differ by more than `rel` times the larger of the two.
pub fn asymmetry_fraction(rows: &[ProbeRow], offset: f64, rel: f64) -> f64 {
    let mut indices: Vec<usize> = rows.iter().map(|r| r.index).collect();
    indices.dedup();
    let lookup = |k: usize, d: f64| {
        rows.iter()
            .find(|r| r.index == k && r.offset == d)
            .map(|r| r.delta_loss)
    };
    let mut asymmetric = 0usize;
    let mut counted = 0usize;
    for &k in &indices {
        let (Some(up), Some(down)) = (lookup(k, offset), lookup(k, -offset)) else {
            continue;
        };
        counted += 1;
        if (up - down).abs() > rel * up.max(down) {
            asymmetric += 1;
        }
    }
    if counted == 0 {
        0.0
    } else {
        asymmetric as f64 / counted as f64
    }
}
