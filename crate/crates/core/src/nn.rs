//! Dense ReLU network with a softmax cross-entropy head.
//!
//! All trainable scalars live in one flat [`ParameterVector`]. Layer `l`
//! contributes its `fan_in × fan_out` weight block (row-major, row = input
//! unit) followed by its `fan_out` biases, and layers are concatenated in
//! order. Index `k` therefore names the same scalar for the lifetime of a
//! [`NetworkSpec`], which is what per-parameter bookkeeping relies on.

use std::ops::{Deref, DerefMut};

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::{gemm, Matrix, Op};
use crate::seed;

const INIT_STREAM: u64 = 0x1417;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    layer_sizes: Vec<usize>,
}

/// Offsets of one dense layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerShape {
    fn end(&self) -> usize {
        self.bias_offset + self.fan_out
    }
}

/// Structured position of a single scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamLocation {
    Weight {
        layer: usize,
        row: usize,
        col: usize,
    },
    Bias {
        layer: usize,
        unit: usize,
    },
}

impl NetworkSpec {
    /// `layer_sizes` is `[input, hidden.., output]`; at least one hidden layer.
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 3 {
            return Err(Error::InvalidSpec(format!(
                "need input, at least one hidden and an output layer, got {layer_sizes:?}"
            )));
        }
        if let Some(i) = layer_sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidSpec(format!("layer {i} has size 0")));
        }
        Ok(Self { layer_sizes })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().expect("validated non-empty")
    }

    pub fn layers(&self) -> Vec<LayerShape> {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let shape = LayerShape {
                    fan_in: w[0],
                    fan_out: w[1],
                    weight_offset: offset,
                    bias_offset: offset + w[0] * w[1],
                };
                offset = shape.end();
                shape
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers().last().map_or(0, LayerShape::end)
    }

    pub fn location(&self, k: usize) -> Option<ParamLocation> {
        for (layer, s) in self.layers().into_iter().enumerate() {
            if k < s.bias_offset {
                let local = k - s.weight_offset;
                return Some(ParamLocation::Weight {
                    layer,
                    row: local / s.fan_out,
                    col: local % s.fan_out,
                });
            }
            if k < s.end() {
                return Some(ParamLocation::Bias {
                    layer,
                    unit: k - s.bias_offset,
                });
            }
        }
        None
    }

    pub fn index_of(&self, loc: ParamLocation) -> Option<usize> {
        let layers = self.layers();
        match loc {
            ParamLocation::Weight { layer, row, col } => {
                let s = layers.get(layer)?;
                (row < s.fan_in && col < s.fan_out).then(|| s.weight_offset + row * s.fan_out + col)
            }
            ParamLocation::Bias { layer, unit } => {
                let s = layers.get(layer)?;
                (unit < s.fan_out).then(|| s.bias_offset + unit)
            }
        }
    }
}

macro_rules! flat_vector {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(Vec<f64>);

        impl $name {
            pub fn zeros(len: usize) -> Self {
                Self(vec![0.0; len])
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                Self(v)
            }
        }

        impl Deref for $name {
            type Target = [f64];

            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }
    };
}

flat_vector!(ParameterVector);
flat_vector!(GradientVector);

/// Glorot-uniform weights, zero biases.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> Result<ParameterVector> {
    // NetworkSpec can only be built valid, but keep the check for specs
    // deserialized from elsewhere.
    let spec = NetworkSpec::new(spec.layer_sizes.clone())?;
    let mut rng = seed::rng(seed, INIT_STREAM);
    let mut params = ParameterVector::zeros(spec.param_count());
    for s in spec.layers() {
        let limit = (6.0 / (s.fan_in + s.fan_out) as f64).sqrt();
        for w in &mut params[s.weight_offset..s.bias_offset] {
            *w = rng.random_range(-limit..limit);
        }
    }
    Ok(params)
}

/// A set of classes allowed to compete in the softmax.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMask {
    classes: Vec<usize>,
}

impl ClassMask {
    pub fn new(mut classes: Vec<usize>) -> Self {
        classes.sort_unstable();
        classes.dedup();
        Self { classes }
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn contains(&self, class: usize) -> bool {
        self.classes.binary_search(&class).is_ok()
    }

    fn dense(&self, outputs: usize) -> Vec<bool> {
        let mut allowed = vec![false; outputs];
        for &c in &self.classes {
            if c < outputs {
                allowed[c] = true;
            }
        }
        allowed
    }
}

fn check_params(spec: &NetworkSpec, params: &[f64]) -> Result<()> {
    if params.len() != spec.param_count() {
        return Err(Error::Shape(format!(
            "parameter vector has {} entries, spec needs {}",
            params.len(),
            spec.param_count()
        )));
    }
    Ok(())
}

fn check_batch(spec: &NetworkSpec, batch: &Matrix) -> Result<()> {
    if batch.cols() != spec.input_size() {
        return Err(Error::Shape(format!(
            "batch has {} columns, network input is {}",
            batch.cols(),
            spec.input_size()
        )));
    }
    Ok(())
}

/// Runs the network and keeps every post-activation output (the last entry
/// holds the logits).
fn forward_cached(spec: &NetworkSpec, params: &[f64], batch: &Matrix) -> Vec<Matrix> {
    let layers = spec.layers();
    let rows = batch.rows();
    let mut acts: Vec<Matrix> = Vec::with_capacity(layers.len());
    for (l, s) in layers.iter().enumerate() {
        let input = if l == 0 { batch } else { &acts[l - 1] };
        let bias = &params[s.bias_offset..s.bias_offset + s.fan_out];
        let mut out = Matrix::zeros(rows, s.fan_out);
        for r in 0..rows {
            out.row_mut(r).copy_from_slice(bias);
        }
        gemm(
            rows,
            s.fan_in,
            s.fan_out,
            input.as_slice(),
            Op::N,
            &params[s.weight_offset..s.bias_offset],
            Op::N,
            out.as_mut_slice(),
            true,
        );
        if l + 1 < layers.len() {
            for v in out.as_mut_slice() {
                *v = v.max(0.0);
            }
        }
        acts.push(out);
    }
    acts
}

/// Logits for every row of `batch`.
pub fn forward(spec: &NetworkSpec, params: &ParameterVector, batch: &Matrix) -> Result<Matrix> {
    check_params(spec, params)?;
    check_batch(spec, batch)?;
    Ok(forward_cached(spec, params, batch)
        .pop()
        .expect("at least two layers"))
}

/// Softmax over the allowed entries of `logits`; disallowed entries are 0.
/// Uses max subtraction.
pub fn masked_softmax(logits: &[f64], allowed: Option<&[bool]>) -> Vec<f64> {
    let ok = |i: usize| allowed.is_none_or(|a| a[i]);
    let max = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| ok(i))
        .map(|(_, &z)| z)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(i, &z)| if ok(i) { (z - max).exp() } else { 0.0 })
        .collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    probs
}

fn check_labels(spec: &NetworkSpec, labels: &[usize], mask: Option<&ClassMask>) -> Result<()> {
    let classes = spec.output_size();
    for &label in labels {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        if let Some(m) = mask {
            if !m.contains(label) {
                return Err(Error::LabelOutsideMask { label });
            }
        }
    }
    Ok(())
}

fn log_sum_exp(logits: &[f64], allowed: Option<&[bool]>) -> f64 {
    let ok = |i: usize| allowed.is_none_or(|a| a[i]);
    let max = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| ok(i))
        .map(|(_, &z)| z)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| ok(i))
        .map(|(_, &z)| (z - max).exp())
        .sum();
    max + sum.ln()
}

/// Per-row cross-entropy terms and `dL/dlogits` for the batch mean.
fn softmax_xent(logits: &Matrix, labels: &[usize], allowed: Option<&[bool]>) -> (f64, Matrix) {
    let rows = logits.rows();
    let scale = 1.0 / rows as f64;
    let mut dlogits = Matrix::zeros(rows, logits.cols());
    let mut loss = 0.0;
    for (r, &y) in labels.iter().enumerate().take(rows) {
        let z = logits.row(r);
        let probs = masked_softmax(z, allowed);
        loss += log_sum_exp(z, allowed) - z[y];
        let d = dlogits.row_mut(r);
        for (di, &p) in d.iter_mut().zip(&probs) {
            *di = p * scale;
        }
        d[y] -= scale;
    }
    (loss * scale, dlogits)
}

fn validate(
    spec: &NetworkSpec,
    params: &[f64],
    batch: &Matrix,
    labels: &[usize],
    head_mask: Option<&ClassMask>,
) -> Result<()> {
    check_params(spec, params)?;
    check_batch(spec, batch)?;
    if labels.len() != batch.rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} rows",
            labels.len(),
            batch.rows()
        )));
    }
    if batch.rows() == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    check_labels(spec, labels, head_mask)
}

/// Mean softmax cross-entropy without the gradient.
pub fn task_loss(
    spec: &NetworkSpec,
    params: &ParameterVector,
    batch: &Matrix,
    labels: &[usize],
    head_mask: Option<&ClassMask>,
) -> Result<f64> {
    validate(spec, params, batch, labels, head_mask)?;
    let logits = forward_cached(spec, params, batch).pop().expect("layers");
    let allowed = head_mask.map(|m| m.dense(spec.output_size()));
    Ok(softmax_xent(&logits, labels, allowed.as_deref()).0)
}

/// Mean softmax cross-entropy over the batch and its exact gradient with
/// respect to every parameter. Classes outside `head_mask` are excluded from
/// the normalization.
pub fn task_loss_and_grad(
    spec: &NetworkSpec,
    params: &ParameterVector,
    batch: &Matrix,
    labels: &[usize],
    head_mask: Option<&ClassMask>,
) -> Result<(f64, GradientVector)> {
    validate(spec, params, batch, labels, head_mask)?;
    let layers = spec.layers();
    let rows = batch.rows();
    let mut acts = forward_cached(spec, params, batch);
    let logits = acts.pop().expect("layers");
    let allowed = head_mask.map(|m| m.dense(spec.output_size()));
    let (loss, mut delta) = softmax_xent(&logits, labels, allowed.as_deref());

    let mut grad = GradientVector::zeros(params.len());
    for l in (0..layers.len()).rev() {
        let s = layers[l];
        let input = if l == 0 { batch } else { &acts[l - 1] };
        gemm(
            s.fan_in,
            rows,
            s.fan_out,
            input.as_slice(),
            Op::T,
            delta.as_slice(),
            Op::N,
            &mut grad[s.weight_offset..s.bias_offset],
            false,
        );
        let db = &mut grad[s.bias_offset..s.bias_offset + s.fan_out];
        for r in 0..rows {
            for (b, &d) in db.iter_mut().zip(delta.row(r)) {
                *b += d;
            }
        }
        if l == 0 {
            break;
        }
        let mut upstream = Matrix::zeros(rows, s.fan_in);
        gemm(
            rows,
            s.fan_out,
            s.fan_in,
            delta.as_slice(),
            Op::N,
            &params[s.weight_offset..s.bias_offset],
            Op::T,
            upstream.as_mut_slice(),
            false,
        );
        for (u, &a) in upstream.as_mut_slice().iter_mut().zip(input.as_slice()) {
            if a <= 0.0 {
                *u = 0.0;
            }
        }
        delta = upstream;
    }
    Ok((loss, grad))
}

/// Predicted class per row: argmax over allowed logits, lowest index on ties.
pub fn predict(
    spec: &NetworkSpec,
    params: &ParameterVector,
    batch: &Matrix,
    head_mask: Option<&ClassMask>,
) -> Result<Vec<usize>> {
    let logits = forward(spec, params, batch)?;
    let allowed = head_mask.map(|m| m.dense(spec.output_size()));
    Ok((0..logits.rows())
        .map(|r| {
            let mut best: Option<(usize, f64)> = None;
            for (c, &z) in logits.row(r).iter().enumerate() {
                if allowed.as_ref().is_some_and(|a| !a[c]) {
                    continue;
                }
                if best.is_none_or(|(_, bz)| z > bz) {
                    best = Some((c, z));
                }
            }
            best.map_or(0, |(c, _)| c)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(sizes: &[usize]) -> NetworkSpec {
        NetworkSpec::new(sizes.to_vec()).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let s = spec(&[4, 3, 2]);
        let a = init_params(&s, 7).unwrap();
        let b = init_params(&s, 7).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_ne!(a, init_params(&s, 8).unwrap());
    }

    #[test]
    fn param_count_follows_layout_formula() {
        let s = spec(&[784, 256, 256, 10]);
        let want = 784 * 256 + 256 + 256 * 256 + 256 + 256 * 10 + 10;
        assert_eq!(want, 269_322);
        assert_eq!(s.param_count(), want);
        assert_eq!(init_params(&s, 0).unwrap().len(), want);
    }

    #[test]
    fn zero_sized_layer_rejected() {
        assert!(matches!(
            NetworkSpec::new(vec![4, 0, 2]),
            Err(Error::InvalidSpec(_))
        ));
        assert!(NetworkSpec::new(vec![4, 2]).is_err());
    }

    #[test]
    fn biases_start_at_zero_and_weights_within_limit() {
        let s = spec(&[5, 4, 3]);
        let p = init_params(&s, 1).unwrap();
        for layer in s.layers() {
            let limit = (6.0 / (layer.fan_in + layer.fan_out) as f64).sqrt();
            assert!(p[layer.weight_offset..layer.bias_offset]
                .iter()
                .all(|w| w.abs() < limit));
            assert!(p[layer.bias_offset..layer.bias_offset + layer.fan_out]
                .iter()
                .all(|&b| b == 0.0));
        }
    }

    #[test]
    fn layout_round_trips_every_index() {
        let s = spec(&[3, 4, 2, 5]);
        for k in 0..s.param_count() {
            let loc = s.location(k).unwrap();
            assert_eq!(s.index_of(loc), Some(k));
        }
        assert_eq!(s.location(s.param_count()), None);
        assert_eq!(
            s.location(0),
            Some(ParamLocation::Weight {
                layer: 0,
                row: 0,
                col: 0
            })
        );
        assert_eq!(
            s.location(12),
            Some(ParamLocation::Bias { layer: 0, unit: 0 })
        );
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let s = spec(&[3, 4, 2]);
        let p = ParameterVector::zeros(s.param_count());
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 3.0], vec![0.5, 0.5, 0.5]]).unwrap();
        let z = forward(&s, &p, &x).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_computed_forward_pass() {
        // 2 inputs -> 1 hidden unit -> 2 outputs
        let s = spec(&[2, 1, 2]);
        // w1 = [0.5, -1.0], b1 = 0.25, w2 = [2.0, -3.0], b2 = [0.1, 0.2]
        let p = ParameterVector::from(vec![0.5, -1.0, 0.25, 2.0, -3.0, 0.1, 0.2]);
        let x = Matrix::from_rows(&[vec![3.0, 1.0]]).unwrap();
        // h = relu(1.5 - 1.0 + 0.25) = 0.75
        let z = forward(&s, &p, &x).unwrap();
        assert!((z.get(0, 0) - (0.75 * 2.0 + 0.1)).abs() < 1e-15);
        assert!((z.get(0, 1) - (0.75 * -3.0 + 0.2)).abs() < 1e-15);
        // negative pre-activation is clipped
        let x = Matrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
        let z = forward(&s, &p, &x).unwrap();
        assert_eq!(z.row(0), &[0.1, 0.2]);
    }

    #[test]
    fn identical_rows_give_identical_logits() {
        let s = spec(&[3, 5, 4]);
        let p = init_params(&s, 3).unwrap();
        let x = Matrix::from_rows(&[vec![0.1, 0.7, 0.3], vec![0.1, 0.7, 0.3]]).unwrap();
        let z = forward(&s, &p, &x).unwrap();
        assert_eq!(z.row(0), z.row(1));
    }

    #[test]
    fn forward_shape_mismatch() {
        let s = spec(&[3, 5, 4]);
        let p = init_params(&s, 3).unwrap();
        let x = Matrix::zeros(2, 4);
        assert!(matches!(forward(&s, &p, &x), Err(Error::Shape(_))));
        let short = ParameterVector::zeros(3);
        assert!(forward(&s, &short, &Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn uniform_logits_give_ln_c() {
        let s = spec(&[3, 4, 7]);
        let p = ParameterVector::zeros(s.param_count());
        let x = Matrix::from_rows(&[vec![0.2, 0.1, 0.9]]).unwrap();
        let (loss, _) = task_loss_and_grad(&s, &p, &x, &[4], None).unwrap();
        assert!((loss - 7f64.ln()).abs() < 1e-14);
        let mask = ClassMask::new(vec![1, 4]);
        let (loss, _) = task_loss_and_grad(&s, &p, &x, &[4], Some(&mask)).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn full_mask_is_identity() {
        let s = spec(&[3, 4, 3]);
        let p = init_params(&s, 11).unwrap();
        let x = Matrix::from_rows(&[vec![0.2, 0.1, 0.9], vec![1.0, 0.0, 0.5]]).unwrap();
        let full = ClassMask::new(vec![0, 1, 2]);
        let a = task_loss_and_grad(&s, &p, &x, &[0, 2], None).unwrap();
        let b = task_loss_and_grad(&s, &p, &x, &[0, 2], Some(&full)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn label_errors() {
        let s = spec(&[3, 4, 3]);
        let p = init_params(&s, 11).unwrap();
        let x = Matrix::zeros(1, 3);
        assert!(matches!(
            task_loss_and_grad(&s, &p, &x, &[3], None),
            Err(Error::LabelOutOfRange { label: 3, .. })
        ));
        let mask = ClassMask::new(vec![0, 1]);
        assert!(matches!(
            task_loss_and_grad(&s, &p, &x, &[2], Some(&mask)),
            Err(Error::LabelOutsideMask { label: 2 })
        ));
    }

    #[test]
    fn softmax_rows_normalize() {
        let z = [1000.0, -3.0, 2.5, 999.0];
        let p = masked_softmax(&z, None);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let allowed = [false, true, true, false];
        let p = masked_softmax(&z, Some(&allowed));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(p[0], 0.0);
        assert_eq!(p[3], 0.0);
    }

    #[test]
    fn predict_breaks_ties_low() {
        let s = spec(&[2, 2, 4]);
        let p = ParameterVector::zeros(s.param_count());
        let x = Matrix::zeros(3, 2);
        assert_eq!(predict(&s, &p, &x, None).unwrap(), vec![0, 0, 0]);
        let mask = ClassMask::new(vec![2, 3]);
        assert_eq!(predict(&s, &p, &x, Some(&mask)).unwrap(), vec![2, 2, 2]);
    }
}
