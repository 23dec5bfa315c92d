//! Browser demo. Three operations are exported to JavaScript:
//!
//! * `surrogate_curve`: the per-parameter surrogate over a range of values
//! * `consolidate_one`: a single-parameter task-boundary update
//! * `toy_run`: a 2-D continual problem trained with none / SI / ALASSO
//!
//! The numeric work lives in plain Rust functions so it is tested natively;
//! the `#[wasm_bindgen]` wrappers only convert arguments.

use alasso::consolidation::surrogate_term;
use alasso::{
    adam_step, AdamConfig, AdamState, ConsolidationState, GradientVector, Hyperparams,
    ParameterVector, RegularizerKind,
};
use wasm_bindgen::prelude::*;

/// Surrogate value at `n` evenly spaced points of `[lo, hi]`.
#[allow(clippy::too_many_arguments)]
pub fn curve(
    center: f64,
    side_ref: f64,
    omega: f64,
    a: f64,
    eps: f64,
    lo: f64,
    hi: f64,
    n: usize,
) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|i| {
            let theta = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            surrogate_term(theta, center, side_ref, omega, a, eps)
        })
        .collect()
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn surrogate_curve(
    center: f64,
    side_ref: f64,
    omega: f64,
    a: f64,
    eps: f64,
    lo: f64,
    hi: f64,
    n: usize,
) -> Vec<f64> {
    curve(center, side_ref, omega, a, eps, lo, hi, n)
}

/// Importance after one boundary for a single parameter, or NaN when the
/// inputs are rejected (negative damping, non-finite values).
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn consolidate_one(
    kind: &str,
    omega_old: f64,
    center: f64,
    side_ref: f64,
    theta_new: f64,
    accumulated: f64,
    a_prime: f64,
    c_prime: f64,
    eps: f64,
    xi: f64,
    task_index: usize,
) -> f64 {
    let Ok(kind) = kind.parse::<RegularizerKind>() else {
        return f64::NAN;
    };
    let hyper = Hyperparams {
        a_prime,
        c_prime,
        epsilon: eps,
        xi,
        ..Hyperparams::default()
    };
    if hyper.validate().is_err() {
        return f64::NAN;
    }
    let state = ConsolidationState {
        omega_big: vec![omega_old],
        theta_center: vec![center],
        theta_side_ref: vec![side_ref],
        omega_accum: vec![accumulated],
        hyper,
        task_index: task_index.max(1),
    };
    state
        .consolidate(&[theta_new], kind)
        .map_or(f64::NAN, |s| s.omega_big[0])
}

/// One toy task: per coordinate an asymmetric quadratic around `target`,
/// `steep` times stiffer on the side pointed to by `steep_sign`.
#[derive(Debug, Clone, Copy)]
struct ToyTask {
    target: [f64; 2],
    weight: [f64; 2],
    steep_sign: [f64; 2],
}

const STEEP: f64 = 6.0;

const TOY_TASKS: [ToyTask; 3] = [
    ToyTask {
        target: [1.0, 1.0],
        weight: [3.0, 0.1],
        steep_sign: [-1.0, 1.0],
    },
    ToyTask {
        target: [-0.5, 1.5],
        weight: [0.1, 3.0],
        steep_sign: [1.0, -1.0],
    },
    ToyTask {
        target: [0.2, -1.0],
        weight: [1.0, 1.0],
        steep_sign: [1.0, 1.0],
    },
];

impl ToyTask {
    fn loss_grad(&self, theta: &[f64]) -> (f64, [f64; 2]) {
        let mut loss = 0.0;
        let mut grad = [0.0; 2];
        for k in 0..2 {
            let d = theta[k] - self.target[k];
            let w = if d * self.steep_sign[k] > 0.0 {
                self.weight[k] * STEEP
            } else {
                self.weight[k]
            };
            loss += w * d * d;
            grad[k] = 2.0 * w * d;
        }
        (loss, grad)
    }
}

/// Result of a toy run: the parameter path (x, y pairs, one per step) and
/// the loss of every seen task after every task, row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyOutcome {
    pub path: Vec<f64>,
    pub losses: Vec<Vec<f64>>,
}

pub fn toy(
    kind: RegularizerKind,
    a: f64,
    c: f64,
    steps: usize,
    lr: f64,
) -> alasso::Result<ToyOutcome> {
    let hyper = Hyperparams {
        a,
        c,
        ..Hyperparams::default()
    };
    hyper.validate()?;
    let mut params = ParameterVector::from(vec![0.0, 0.0]);
    let mut state = ConsolidationState::new(&params, hyper);
    let config = AdamConfig {
        lr,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new(2, config);
    let mut path = params.to_vec();
    let mut losses = Vec::new();
    for (n, task) in TOY_TASKS.iter().enumerate() {
        adam.reset();
        for _ in 0..steps {
            let (loss, g) = task.loss_grad(&params);
            let step = state.combine(&params, loss, GradientVector::from(g.to_vec()), kind)?;
            let delta = adam_step(&mut params, &step.grad, &mut adam)?;
            state.accumulate_importance(&step.task_grad, &delta)?;
            path.extend_from_slice(&params);
        }
        state = state.consolidate(&params, kind)?;
        losses.push(
            TOY_TASKS[..=n]
                .iter()
                .map(|t| t.loss_grad(&params).0)
                .collect(),
        );
    }
    Ok(ToyOutcome { path, losses })
}

/// Runs the toy problem; returns `[steps_total, path..., losses...]` with the
/// loss rows flattened (1 + 2 + 3 entries), or an error string.
#[wasm_bindgen]
pub fn toy_run(kind: &str, a: f64, c: f64, steps: usize, lr: f64) -> Result<Vec<f64>, JsError> {
    let kind: RegularizerKind = kind
        .parse()
        .map_err(|e: alasso::Error| JsError::new(&e.to_string()))?;
    let out =
        toy(kind, a, c, steps.clamp(1, 5000), lr).map_err(|e| JsError::new(&e.to_string()))?;
    let mut flat = vec![(out.path.len() / 2) as f64];
    flat.extend(out.path);
    flat.extend(out.losses.into_iter().flatten());
    Ok(flat)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_matches_surrogate_and_is_lopsided() {
        let v = curve(0.0, -1.0, 1.0, 3.0, 0.0, -1.0, 1.0, 3);
        assert_eq!(v, vec![1.0, 0.0, 3.0]);
    }

    #[test]
    fn consolidate_one_values() {
        // accumulated 0.25 over a shift of 0.5 with no damping and no past
        let w = consolidate_one("alasso", 0.0, 0.0, 0.0, 0.5, 0.25, 1.0, 1.0, 0.0, 0.0, 1);
        assert!((w - 1.0).abs() < 1e-15);
        let si = consolidate_one("si", 2.0, 0.0, 0.0, 0.5, 0.25, 1.0, 1.0, 0.0, 0.0, 2);
        assert!((si - 3.0).abs() < 1e-15);
        assert!(consolidate_one("ewc", 0.0, 0.0, 0.0, 0.5, 0.25, 1.0, 1.0, 0.0, 0.0, 1).is_nan());
        assert!(consolidate_one("si", 0.0, 0.0, 0.0, 0.5, 0.25, 1.0, 1.0, 0.0, -1.0, 1).is_nan());
    }

    #[test]
    fn toy_regularization_protects_first_task() {
        let none = toy(RegularizerKind::None, 2.0, 1.0, 400, 0.05).unwrap();
        let alasso = toy(RegularizerKind::Alasso, 2.0, 1.0, 400, 0.05).unwrap();
        assert_eq!(none.path.len(), 2 * (1 + 3 * 400));
        assert_eq!(none.losses.len(), 3);
        assert!(alasso.losses[2][0] < none.losses[2][0]);
        assert_eq!(
            toy(RegularizerKind::Alasso, 2.0, 1.0, 400, 0.05).unwrap(),
            alasso
        );
    }
}
