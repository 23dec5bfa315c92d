//! Per-parameter surrogate losses for previously learned tasks.
//!
//! Each trainable scalar `θ_k` carries a quadratic stand-in for the loss of
//! all earlier tasks, centered at the value it had when the last task ended.
//! The ALASSO surrogate is asymmetric: on the side of the center that the
//! optimizer actually travelled through during the last task (the *observed*
//! side) the curvature is `Ω̂_k`, on the other side it is inflated to
//! `a·Ω̂_k + ε`. SI uses the symmetric quadratic.
//!
//! During training the running importance `ω_k` accumulates the first-order
//! loss decrease `−g_k·Δθ_k` of every optimizer step. At a task boundary
//! [`ConsolidationState::consolidate`] turns it into a new curvature:
//!
//! * SI: `Ω̂ⁿ = ωⁿ / (Δθ² + ξ) + Ω̂ⁿ⁻¹`
//! * ALASSO: `Ω̂ⁿ = (ωⁿ + ω¹ᐟⁿ⁻¹) / (Δθ² + ξ)` where
//!   `ω¹ᐟⁿ⁻¹ = −c′·ℓⁿ⁻¹(θ̂ⁿ; a′)` is the drop of the previous surrogate.
//!
//! Both are clamped at zero.
//!
//! # Snapshot format
//!
//! Little-endian binary:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `ALASSOCS` |
//! | 4     | format version (`u32`, currently 1) |
//! | 8     | task index (`u64`) |
//! | 48    | `a, a′, c, c′, ε, ξ` as `f64` |
//! | 8     | parameter count `K` (`u64`) |
//! | 24·K  | `Ω̂`, then θ̂ center, then θ̂ side reference, `K` `f64` each |
//!
//! The running `ω` is not stored; snapshots are taken at task boundaries
//! where it is zero.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{self, ClassMask, GradientVector, NetworkSpec, ParameterVector};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"ALASSOCS";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    /// Overestimation factor on the unobserved side.
    pub a: f64,
    /// `a` used when measuring the previous surrogate inside consolidation.
    pub a_prime: f64,
    /// Weight of the surrogate in the training objective.
    pub c: f64,
    /// `c` used when measuring the previous surrogate inside consolidation.
    pub c_prime: f64,
    /// Curvature floor on the unobserved side.
    pub epsilon: f64,
    /// Damping added to the squared displacement in the consolidation
    /// denominator.
    pub xi: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            a: 2.0,
            a_prime: 1.0,
            c: 1.0,
            c_prime: 1.0,
            epsilon: 1e-3,
            xi: 1e-3,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("a", self.a),
            ("a_prime", self.a_prime),
            ("c", self.c),
            ("c_prime", self.c_prime),
            ("epsilon", self.epsilon),
            ("xi", self.xi),
        ];
        if let Some((name, v)) = all.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Config(format!("{name} = {v} is not finite")));
        }
        if self.a <= 0.0 || self.a_prime <= 0.0 {
            return Err(Error::Config("a and a_prime must be positive".into()));
        }
        if self.c < 0.0 || self.c_prime < 0.0 || self.epsilon < 0.0 || self.xi < 0.0 {
            return Err(Error::Config(
                "c, c_prime, epsilon and xi must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegularizerKind {
    None,
    Si,
    Alasso,
}

impl RegularizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RegularizerKind::None => "none",
            RegularizerKind::Si => "si",
            RegularizerKind::Alasso => "alasso",
        }
    }
}

impl fmt::Display for RegularizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegularizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "sgd" => Ok(RegularizerKind::None),
            "si" => Ok(RegularizerKind::Si),
            "alasso" => Ok(RegularizerKind::Alasso),
            other => Err(Error::Config(format!("unknown regularizer '{other}'"))),
        }
    }
}

/// `(θ − center)(side_ref − center)`; positive on the observed side.
pub fn alpha(theta: f64, center: f64, side_ref: f64) -> f64 {
    (theta - center) * (side_ref - center)
}

/// Curvature of one parameter's surrogate at `theta`.
fn curvature(theta: f64, center: f64, side_ref: f64, omega: f64, a: f64, eps: f64) -> f64 {
    if alpha(theta, center, side_ref) > 0.0 {
        omega
    } else {
        a * omega + eps
    }
}

/// Asymmetric quadratic for a single parameter.
pub fn surrogate_term(theta: f64, center: f64, side_ref: f64, omega: f64, a: f64, eps: f64) -> f64 {
    let d = theta - center;
    curvature(theta, center, side_ref, omega, a, eps) * d * d
}

/// Derivative of [`surrogate_term`] in `theta`; zero at the kink.
pub fn surrogate_term_grad(
    theta: f64,
    center: f64,
    side_ref: f64,
    omega: f64,
    a: f64,
    eps: f64,
) -> f64 {
    let d = theta - center;
    2.0 * curvature(theta, center, side_ref, omega, a, eps) * d
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsolidationState {
    /// Consolidated curvature `Ω̂_k ≥ 0`.
    pub omega_big: Vec<f64>,
    /// Center of the current surrogate, θ̂ after the last finished task.
    pub theta_center: Vec<f64>,
    /// θ̂ one task earlier; decides which side of the center was observed.
    pub theta_side_ref: Vec<f64>,
    /// Running path integral `ω_k` of the task being trained.
    pub omega_accum: Vec<f64>,
    pub hyper: Hyperparams,
    /// 1-based index of the task currently being trained.
    pub task_index: usize,
}

/// Losses and gradients of one training step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLoss {
    pub total: f64,
    pub grad: GradientVector,
    pub task_loss: f64,
    pub task_grad: GradientVector,
}

impl ConsolidationState {
    /// State before the first task: no surrogate, center at `initial`.
    pub fn new(initial: &ParameterVector, hyper: Hyperparams) -> Self {
        let n = initial.len();
        Self {
            omega_big: vec![0.0; n],
            theta_center: initial.to_vec(),
            theta_side_ref: initial.to_vec(),
            omega_accum: vec![0.0; n],
            hyper,
            task_index: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.omega_big.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega_big.is_empty()
    }

    fn check_len(&self, what: &str, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::Shape(format!(
                "{what} has {len} entries, state tracks {}",
                self.len()
            )));
        }
        Ok(())
    }

    fn factor(&self, use_primed: bool) -> f64 {
        if use_primed {
            self.hyper.a_prime
        } else {
            self.hyper.a
        }
    }

    fn shaped_loss(&self, params: &[f64], a: f64, eps: f64) -> Result<f64> {
        self.check_len("parameter vector", params.len())?;
        if let Some(k) = params.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {k}")));
        }
        if self.task_index <= 1 {
            return Ok(0.0);
        }
        Ok((0..self.len())
            .map(|k| {
                surrogate_term(
                    params[k],
                    self.theta_center[k],
                    self.theta_side_ref[k],
                    self.omega_big[k],
                    a,
                    eps,
                )
            })
            .sum())
    }

    fn shaped_grad(&self, params: &[f64], a: f64, eps: f64) -> Result<GradientVector> {
        self.check_len("parameter vector", params.len())?;
        let mut grad = GradientVector::zeros(self.len());
        if self.task_index <= 1 {
            return Ok(grad);
        }
        for (k, g) in grad.iter_mut().enumerate() {
            *g = surrogate_term_grad(
                params[k],
                self.theta_center[k],
                self.theta_side_ref[k],
                self.omega_big[k],
                a,
                eps,
            );
        }
        Ok(grad)
    }

    /// Asymmetric surrogate summed over all parameters. With `use_primed`
    /// the overestimation factor is `a′` instead of `a`.
    pub fn surrogate_loss(&self, params: &[f64], use_primed: bool) -> Result<f64> {
        self.shaped_loss(params, self.factor(use_primed), self.hyper.epsilon)
    }

    pub fn surrogate_grad(&self, params: &[f64], use_primed: bool) -> Result<GradientVector> {
        self.shaped_grad(params, self.factor(use_primed), self.hyper.epsilon)
    }

    /// Symmetric quadratic `Σ Ω̂_k (θ_k − θ̂_k)²` used by SI.
    pub fn symmetric_loss(&self, params: &[f64]) -> Result<f64> {
        self.shaped_loss(params, 1.0, 0.0)
    }

    pub fn symmetric_grad(&self, params: &[f64]) -> Result<GradientVector> {
        self.shaped_grad(params, 1.0, 0.0)
    }

    /// Regularizer value and gradient for `kind`, before the `c` weighting.
    pub fn penalty(
        &self,
        params: &[f64],
        kind: RegularizerKind,
    ) -> Result<Option<(f64, GradientVector)>> {
        match kind {
            RegularizerKind::None => Ok(None),
            RegularizerKind::Si => Ok(Some((
                self.symmetric_loss(params)?,
                self.symmetric_grad(params)?,
            ))),
            RegularizerKind::Alasso => Ok(Some((
                self.surrogate_loss(params, false)?,
                self.surrogate_grad(params, false)?,
            ))),
        }
    }

    /// Task loss plus `c` times the surrogate of `kind`. The task gradient is
    /// returned separately because importance accumulation uses it alone.
    #[allow(clippy::too_many_arguments)]
    pub fn total_loss_and_grad(
        &self,
        spec: &NetworkSpec,
        params: &ParameterVector,
        batch: &Matrix,
        labels: &[usize],
        head_mask: Option<&ClassMask>,
        kind: RegularizerKind,
    ) -> Result<StepLoss> {
        let (task_loss, task_grad) =
            nn::task_loss_and_grad(spec, params, batch, labels, head_mask)?;
        self.combine(params, task_loss, task_grad, kind)
    }

    /// Adds the weighted surrogate to an already computed task loss.
    pub fn combine(
        &self,
        params: &[f64],
        task_loss: f64,
        task_grad: GradientVector,
        kind: RegularizerKind,
    ) -> Result<StepLoss> {
        self.check_len("task gradient", task_grad.len())?;
        let c = self.hyper.c;
        let penalty = if c == 0.0 {
            None
        } else {
            self.penalty(params, kind)?
        };
        let Some((surrogate, sgrad)) = penalty else {
            return Ok(StepLoss {
                total: task_loss,
                grad: task_grad.clone(),
                task_loss,
                task_grad,
            });
        };
        let mut grad = task_grad.clone();
        for (g, s) in grad.iter_mut().zip(sgrad.iter()) {
            *g += c * s;
        }
        Ok(StepLoss {
            total: task_loss + c * surrogate,
            grad,
            task_loss,
            task_grad,
        })
    }

    /// `ω_k += −g_k·Δθ_k` for one optimizer step.
    pub fn accumulate_importance(&mut self, task_grad: &[f64], delta: &[f64]) -> Result<()> {
        self.check_len("task gradient", task_grad.len())?;
        self.check_len("displacement", delta.len())?;
        for ((w, &g), &d) in self.omega_accum.iter_mut().zip(task_grad).zip(delta) {
            *w -= g * d;
        }
        Ok(())
    }

    /// `ω¹ᐟⁿ⁻¹_k = −c′·ℓ_k(θ_new; a′)` for every parameter: how much the
    /// previous surrogate rose while the current task moved the parameter.
    pub fn past_importance(&self, theta_new: &[f64]) -> Result<Vec<f64>> {
        self.check_len("new parameters", theta_new.len())?;
        if self.task_index <= 1 {
            return Ok(vec![0.0; self.len()]);
        }
        let h = &self.hyper;
        Ok((0..self.len())
            .map(|k| {
                -h.c_prime
                    * surrogate_term(
                        theta_new[k],
                        self.theta_center[k],
                        self.theta_side_ref[k],
                        self.omega_big[k],
                        h.a_prime,
                        h.epsilon,
                    )
            })
            .collect())
    }

    /// Task-boundary update. `theta_new` is the parameter vector at the end
    /// of the task just trained.
    pub fn consolidate(&self, theta_new: &[f64], kind: RegularizerKind) -> Result<Self> {
        self.check_len("new parameters", theta_new.len())?;
        if let Some(k) = theta_new.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("new parameter {k}")));
        }
        if let Some(k) = self.omega_accum.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("accumulated importance {k}")));
        }
        let xi = self.hyper.xi;
        let past = match kind {
            RegularizerKind::Alasso => Some(self.past_importance(theta_new)?),
            _ => None,
        };
        let mut omega_big = self.omega_big.clone();
        for k in 0..self.len() {
            let shift = theta_new[k] - self.theta_center[k];
            let denom = shift * shift + xi;
            if denom == 0.0 {
                // parameter never moved and no damping: keep the old curvature
                continue;
            }
            let w = self.omega_accum[k];
            omega_big[k] = match kind {
                RegularizerKind::None => 0.0,
                RegularizerKind::Si => (w / denom + self.omega_big[k]).max(0.0),
                RegularizerKind::Alasso => {
                    let past = past.as_ref().map_or(0.0, |p| p[k]);
                    ((w + past) / denom).max(0.0)
                }
            };
            if !omega_big[k].is_finite() {
                return Err(Error::NonFinite(format!("consolidated importance {k}")));
            }
        }
        Ok(Self {
            omega_big,
            theta_center: theta_new.to_vec(),
            theta_side_ref: self.theta_center.clone(),
            omega_accum: vec![0.0; self.len()],
            hyper: self.hyper,
            task_index: self.task_index + 1,
        })
    }

    pub fn write_snapshot<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        w.write_all(&(self.task_index as u64).to_le_bytes())?;
        let h = &self.hyper;
        for v in [h.a, h.a_prime, h.c, h.c_prime, h.epsilon, h.xi] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for arr in [&self.omega_big, &self.theta_center, &self.theta_side_ref] {
            for v in arr {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self> {
        fn take<const N: usize>(r: &mut impl Read, what: &str) -> Result<[u8; N]> {
            let mut buf = [0u8; N];
            r.read_exact(&mut buf)
                .map_err(|e| Error::Snapshot(format!("reading {what}: {e}")))?;
            Ok(buf)
        }
        let magic: [u8; 8] = take(&mut r, "magic")?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Snapshot("bad magic".into()));
        }
        let version = u32::from_le_bytes(take(&mut r, "version")?);
        if version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!("unsupported version {version}")));
        }
        let task_index = u64::from_le_bytes(take(&mut r, "task index")?) as usize;
        let mut hv = [0.0; 6];
        for v in &mut hv {
            *v = f64::from_le_bytes(take(&mut r, "hyperparameters")?);
        }
        let hyper = Hyperparams {
            a: hv[0],
            a_prime: hv[1],
            c: hv[2],
            c_prime: hv[3],
            epsilon: hv[4],
            xi: hv[5],
        };
        let len = u64::from_le_bytes(take(&mut r, "length")?) as usize;
        let mut read_arr = |what: &str| -> Result<Vec<f64>> {
            (0..len)
                .map(|_| Ok(f64::from_le_bytes(take(&mut r, what)?)))
                .collect()
        };
        let omega_big = read_arr("importance")?;
        let theta_center = read_arr("center")?;
        let theta_side_ref = read_arr("side reference")?;
        if task_index == 0 {
            return Err(Error::Snapshot("task index 0".into()));
        }
        Ok(Self {
            omega_big,
            theta_center,
            theta_side_ref,
            omega_accum: vec![0.0; len],
            hyper,
            task_index,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_param(omega: f64, center: f64, side_ref: f64, hyper: Hyperparams) -> ConsolidationState {
        ConsolidationState {
            omega_big: vec![omega],
            theta_center: vec![center],
            theta_side_ref: vec![side_ref],
            omega_accum: vec![0.0],
            hyper,
            task_index: 2,
        }
    }

    fn hyper(a: f64, eps: f64) -> Hyperparams {
        Hyperparams {
            a,
            epsilon: eps,
            ..Hyperparams::default()
        }
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(alpha(0.5, 0.5, 0.0), 0.0);
        assert!((alpha(0.2, 0.5, 0.0) - 0.15).abs() < 1e-15);
        assert!((alpha(0.8, 0.5, 0.0) + 0.15).abs() < 1e-15);
    }

    #[test]
    fn surrogate_loss_examples() {
        let s = one_param(4.0, 0.5, 0.0, hyper(2.0, 0.01));
        assert_eq!(s.surrogate_loss(&[0.5], false).unwrap(), 0.0);
        assert!((s.surrogate_loss(&[0.25], false).unwrap() - 0.25).abs() < 1e-15);
        assert!((s.surrogate_loss(&[0.75], false).unwrap() - 0.500625).abs() < 1e-15);
    }

    #[test]
    fn primed_factor_is_used_on_request() {
        let mut h = hyper(2.0, 0.01);
        h.a_prime = 3.0;
        let s = one_param(4.0, 0.5, 0.0, h);
        let want = (3.0 * 4.0 + 0.01) * 0.0625;
        assert!((s.surrogate_loss(&[0.75], true).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn surrogate_vanishes_on_first_task() {
        let p = ParameterVector::from(vec![0.1, -0.3]);
        let mut s = ConsolidationState::new(&p, Hyperparams::default());
        s.omega_big = vec![5.0, 5.0];
        assert_eq!(s.surrogate_loss(&[3.0, 4.0], false).unwrap(), 0.0);
        assert!(s
            .surrogate_grad(&[3.0, 4.0], false)
            .unwrap()
            .iter()
            .all(|&g| g == 0.0));
    }

    #[test]
    fn surrogate_grad_examples() {
        let s = one_param(4.0, 0.5, 0.0, hyper(2.0, 0.01));
        assert_eq!(s.surrogate_grad(&[0.5], false).unwrap()[0], 0.0);
        assert!((s.surrogate_grad(&[0.25], false).unwrap()[0] + 2.0).abs() < 1e-15);
        let unobserved = s.surrogate_grad(&[0.75], false).unwrap()[0];
        assert!((unobserved - 2.0 * 8.01 * 0.25).abs() < 1e-14);
    }

    #[test]
    fn surrogate_rejects_nan_params() {
        let s = one_param(4.0, 0.5, 0.0, hyper(2.0, 0.01));
        assert!(matches!(
            s.surrogate_loss(&[f64::NAN], false),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn composite_with_synthetic_task_loss() {
        // L(θ) = θ², state Ω̂=4, center 0.5, side_ref 0, a=2, ε=0.01, c=1
        let s = one_param(4.0, 0.5, 0.0, hyper(2.0, 0.01));
        for theta in [0.25, 0.75] {
            let task = GradientVector::from(vec![2.0 * theta]);
            let out = s
                .combine(&[theta], theta * theta, task, RegularizerKind::Alasso)
                .unwrap();
            let (curv, total) = if theta < 0.5 {
                (4.0, 0.0625 + 0.25)
            } else {
                (8.01, 0.5625 + 0.500625)
            };
            assert!((out.total - total).abs() < 1e-14);
            let g = 2.0 * theta + 2.0 * curv * (theta - 0.5);
            assert!((out.grad[0] - g).abs() < 1e-14);
            assert_eq!(out.task_grad[0], 2.0 * theta);
        }
    }

    #[test]
    fn zero_weight_and_none_leave_task_terms_alone() {
        let mut s = one_param(4.0, 0.5, 0.0, hyper(2.0, 0.01));
        let task = GradientVector::from(vec![0.7]);
        let none = s
            .combine(&[0.9], 1.5, task.clone(), RegularizerKind::None)
            .unwrap();
        assert_eq!(none.total, 1.5);
        assert_eq!(none.grad, task);
        s.hyper.c = 0.0;
        for kind in [RegularizerKind::Si, RegularizerKind::Alasso] {
            assert_eq!(s.combine(&[0.9], 1.5, task.clone(), kind).unwrap(), none);
        }
    }

    #[test]
    fn importance_accumulation() {
        let p = ParameterVector::zeros(2);
        let mut s = ConsolidationState::new(&p, Hyperparams::default());
        s.accumulate_importance(&[3.0, -1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(s.omega_accum, vec![0.0, 0.0]);
        s.accumulate_importance(&[3.0, -1.0], &[0.0, 0.1]).unwrap();
        assert!((s.omega_accum[1] - 0.1).abs() < 1e-15);
        assert!(s.accumulate_importance(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn quadratic_descent_path_integral() {
        // L(θ) = θ², plain gradient steps from 1 towards 0
        let mut theta = ParameterVector::from(vec![1.0]);
        let mut s = ConsolidationState::new(&theta, Hyperparams::default());
        let lr = 0.01;
        for _ in 0..1000 {
            let g = 2.0 * theta[0];
            let next = theta[0] - lr * g;
            s.accumulate_importance(&[g], &[next - theta[0]]).unwrap();
            theta[0] = next;
        }
        let truth = 1.0 - theta[0] * theta[0];
        assert!((s.omega_accum[0] - truth).abs() / truth < 0.02);
    }

    #[test]
    fn first_task_consolidation_agrees() {
        let h = Hyperparams {
            xi: 0.0,
            ..Hyperparams::default()
        };
        let init = ParameterVector::from(vec![0.0]);
        let mut s = ConsolidationState::new(&init, h);
        s.omega_accum = vec![1.0];
        for kind in [RegularizerKind::Si, RegularizerKind::Alasso] {
            let next = s.consolidate(&[0.5], kind).unwrap();
            assert!((next.omega_big[0] - 4.0).abs() < 1e-15);
            assert_eq!(next.task_index, 2);
            assert_eq!(next.theta_center, vec![0.5]);
            assert_eq!(next.theta_side_ref, vec![0.0]);
            assert_eq!(next.omega_accum, vec![0.0]);
        }
    }

    #[test]
    fn second_task_alasso_consolidation() {
        let h = Hyperparams {
            a: 2.0,
            a_prime: 1.0,
            c: 1.0,
            c_prime: 1.0,
            epsilon: 0.0,
            xi: 0.0,
        };
        let mut s = one_param(4.0, 0.5, 0.0, h);
        s.omega_accum = vec![0.9];
        assert!((s.past_importance(&[0.2]).unwrap()[0] + 0.36).abs() < 1e-15);
        let next = s.consolidate(&[0.2], RegularizerKind::Alasso).unwrap();
        assert!((next.omega_big[0] - 6.0).abs() < 1e-12);
        assert_eq!(next.theta_side_ref, vec![0.5]);
    }

    #[test]
    fn negative_numerator_clamps_to_zero() {
        let mut s = one_param(4.0, 0.5, 0.0, Hyperparams::default());
        s.omega_accum = vec![-50.0];
        for kind in [RegularizerKind::Si, RegularizerKind::Alasso] {
            assert_eq!(s.consolidate(&[0.2], kind).unwrap().omega_big[0], 0.0);
        }
    }

    #[test]
    fn untouched_parameter_without_damping_keeps_curvature() {
        let h = Hyperparams {
            xi: 0.0,
            ..Hyperparams::default()
        };
        let s = one_param(4.0, 0.5, 0.0, h);
        for kind in [RegularizerKind::Si, RegularizerKind::Alasso] {
            assert_eq!(s.consolidate(&[0.5], kind).unwrap().omega_big[0], 4.0);
        }
    }

    #[test]
    fn consolidate_rejects_non_finite() {
        let s = one_param(4.0, 0.5, 0.0, Hyperparams::default());
        assert!(s
            .consolidate(&[f64::INFINITY], RegularizerKind::Si)
            .is_err());
        let mut s = s;
        s.omega_accum = vec![f64::NAN];
        assert!(s.consolidate(&[0.1], RegularizerKind::Alasso).is_err());
    }

    #[test]
    fn snapshot_round_trip_and_bad_magic() {
        let mut s = one_param(4.0, 0.5, 0.0, Hyperparams::default());
        s.omega_big = vec![4.0];
        let mut buf = Vec::new();
        s.write_snapshot(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 4 + 8 + 48 + 8 + 24);
        let back = ConsolidationState::read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(back, s);
        buf[0] = b'X';
        assert!(ConsolidationState::read_snapshot(buf.as_slice()).is_err());
        let mut short = Vec::new();
        s.write_snapshot(&mut short).unwrap();
        short.truncate(40);
        assert!(ConsolidationState::read_snapshot(short.as_slice()).is_err());
    }

    #[test]
    fn regularizer_kind_parses() {
        assert_eq!(
            "ALASSO".parse::<RegularizerKind>().unwrap(),
            RegularizerKind::Alasso
        );
        assert_eq!(
            "si".parse::<RegularizerKind>().unwrap(),
            RegularizerKind::Si
        );
        assert_eq!(
            "none".parse::<RegularizerKind>().unwrap(),
            RegularizerKind::None
        );
        assert!("ewc".parse::<RegularizerKind>().is_err());
    }

    proptest! {
        #[test]
        fn symmetric_degeneration(
            omega in 0.0f64..10.0, center in -2.0f64..2.0,
            side in -2.0f64..2.0, theta in -3.0f64..3.0,
        ) {
            let s = one_param(omega, center, side, hyper(1.0, 0.0));
            let asym = s.surrogate_loss(&[theta], false).unwrap();
            let sym = s.symmetric_loss(&[theta]).unwrap();
            prop_assert!((asym - sym).abs() <= 1e-15 * sym.abs().max(1.0));
        }

        #[test]
        fn overestimation_on_unobserved_side(
            omega in 0.0f64..10.0, a in 1.01f64..5.0, eps in 1e-6f64..0.1,
            center in -2.0f64..2.0, side in -2.0f64..2.0, theta in -3.0f64..3.0,
        ) {
            prop_assume!(theta != center);
            prop_assume!(alpha(theta, center, side) <= 0.0);
            let s = one_param(omega, center, side, hyper(a, eps));
            let d = theta - center;
            prop_assert!(s.surrogate_loss(&[theta], false).unwrap() > omega * d * d);
        }

        #[test]
        fn surrogate_non_negative_and_continuous_at_kink(
            omega in 0.0f64..10.0, a in 0.1f64..5.0, eps in 0.0f64..0.1,
            center in -2.0f64..2.0, side in -2.0f64..2.0, theta in -3.0f64..3.0,
        ) {
            let s = one_param(omega, center, side, hyper(a, eps));
            prop_assert!(s.surrogate_loss(&[theta], false).unwrap() >= 0.0);
            let h = 1e-9;
            let left = s.surrogate_loss(&[center - h], false).unwrap();
            let right = s.surrogate_loss(&[center + h], false).unwrap();
            prop_assert!(left < 1e-15 && right < 1e-15);
        }

        #[test]
        fn consolidated_importance_is_non_negative(
            omega in 0.0f64..10.0, center in -1.0f64..1.0, side in -1.0f64..1.0,
            new in -1.0f64..1.0, w in -5.0f64..5.0, xi in 0.0f64..0.1,
        ) {
            let h = Hyperparams { xi, ..Hyperparams::default() };
            let mut s = one_param(omega, center, side, h);
            s.omega_accum = vec![w];
            for kind in [RegularizerKind::Si, RegularizerKind::Alasso] {
                let next = s.consolidate(&[new], kind).unwrap();
                prop_assert!(next.omega_big[0] >= 0.0 && next.omega_big[0].is_finite());
            }
        }
    }
}
