//! Minimal from-scratch MLPs: affine layers with ReLU hidden activations,
//! an identity or softmax head, exact batch gradients, and plain SGD.
//!
//! Models evaluate onto a [`SampleGrid`] via [`MlpModel::predict_set`], so
//! a parameterized predictor and a grid function live in the same space.
//! Gradients are of the summed loss over the batch. Cross-entropy against
//! integer labels is the KL criterion for one-hot targets (they differ by
//! the constant target entropy, which is zero there).

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::float;
use crate::funcspace::{FunctionGrid, SampleGrid};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("input width {got} does not match model input {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("batch of {inputs} inputs given {targets} targets")]
    BatchMismatch { inputs: usize, targets: usize },
    #[error("cross-entropy requires a softmax head")]
    UnsupportedLoss,
    #[error("label {label} out of range for {classes} outputs")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("model needs at least an input and an output layer")]
    TooFewLayers,
    #[error("expected {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("dropout rate {0} outside [0, 1)")]
    BadDropout(f64),
}

/// Output head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Identity,
    Softmax,
}

/// Training criterion (summed over the batch).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainLoss {
    /// `Σ ‖f(x) − t‖²`
    SquaredError,
    /// `Σ −log p_label` with a softmax head.
    CrossEntropy,
}

/// Batch targets: raw output vectors or class labels.
#[derive(Debug, Clone, Copy)]
pub enum BatchTargets<'a> {
    Values(&'a [f64]),
    Labels(&'a [usize]),
}

/// Dense feed-forward network, ReLU on hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<usize>,
    /// Per layer, row-major `out × in`.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    head: Head,
    dropout: Option<f64>,
}

/// Parameter gradient with the same shape as the model.
#[derive(Debug, Clone)]
pub struct MlpGradient {
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl MlpGradient {
    fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}

impl MlpModel {
    /// He-scaled Gaussian weights (`σ = √(2/fan_in)`), zero biases.
    pub fn init_he(
        layers: &[usize],
        head: Head,
        dropout: Option<f64>,
        rng: &mut Rng,
    ) -> Result<Self, NnError> {
        if layers.len() < 2 {
            return Err(NnError::TooFewLayers);
        }
        if let Some(p) = dropout {
            if !(0.0..1.0).contains(&p) {
                return Err(NnError::BadDropout(p));
            }
        }
        let mut weights = Vec::with_capacity(layers.len() - 1);
        let mut biases = Vec::with_capacity(layers.len() - 1);
        for l in 0..layers.len() - 1 {
            let (fan_in, fan_out) = (layers[l], layers[l + 1]);
            let sigma = float::sqrt(2.0 / fan_in as f64);
            let w = (0..fan_in * fan_out).map(|_| rng.gaussian() * sigma).collect();
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Self {
            layers: layers.to_vec(),
            weights,
            biases,
            head,
            dropout,
        })
    }

    pub fn zeroed(layers: &[usize], head: Head) -> Result<Self, NnError> {
        if layers.len() < 2 {
            return Err(NnError::TooFewLayers);
        }
        let weights = (0..layers.len() - 1)
            .map(|l| vec![0.0; layers[l] * layers[l + 1]])
            .collect();
        let biases = (0..layers.len() - 1).map(|l| vec![0.0; layers[l + 1]]).collect();
        Ok(Self {
            layers: layers.to_vec(),
            weights,
            biases,
            head,
            dropout: None,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layers
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn dropout_rate(&self) -> Option<f64> {
        self.dropout
    }

    pub fn set_dropout(&mut self, rate: Option<f64>) -> Result<(), NnError> {
        if let Some(p) = rate {
            if !(0.0..1.0).contains(&p) {
                return Err(NnError::BadDropout(p));
            }
        }
        self.dropout = rate;
        Ok(())
    }

    pub fn dim_in(&self) -> usize {
        self.layers[0]
    }

    pub fn dim_out(&self) -> usize {
        *self.layers.last().unwrap()
    }

    /// Total scalar parameter count `n_w`.
    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Parameters in layer order, weights row-major then biases per layer.
    pub fn to_flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn from_flat_params(
        layers: &[usize],
        head: Head,
        params: &[f64],
    ) -> Result<Self, NnError> {
        let mut model = Self::zeroed(layers, head)?;
        model.set_flat_params(params)?;
        Ok(model)
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<(), NnError> {
        if params.len() != self.param_count() {
            return Err(NnError::ParamCount {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let mut at = 0;
        for l in 0..self.weights.len() {
            let wlen = self.weights[l].len();
            self.weights[l].copy_from_slice(&params[at..at + wlen]);
            at += wlen;
            let blen = self.biases[l].len();
            self.biases[l].copy_from_slice(&params[at..at + blen]);
            at += blen;
        }
        Ok(())
    }

    /// `w ← w − rate·grad`, in place.
    pub fn apply_gradient(&mut self, grad: &MlpGradient, rate: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grad.weights) {
            for (x, y) in w.iter_mut().zip(g) {
                *x -= rate * y;
            }
        }
        for (b, g) in self.biases.iter_mut().zip(&grad.biases) {
            for (x, y) in b.iter_mut().zip(g) {
                *x -= rate * y;
            }
        }
    }

    /// Pure SGD step: a new model at `w − rate·grad`.
    pub fn sgd_step(&self, grad: &MlpGradient, rate: f64) -> MlpModel {
        let mut next = self.clone();
        next.apply_gradient(grad, rate);
        next
    }

    fn affine(&self, l: usize, input: &[f64], out: &mut [f64]) {
        let fan_in = self.layers[l];
        let fan_out = self.layers[l + 1];
        let w = &self.weights[l];
        let b = &self.biases[l];
        for o in 0..fan_out {
            let row = &w[o * fan_in..(o + 1) * fan_in];
            let mut acc = b[o];
            for (x, wi) in input.iter().zip(row) {
                acc += x * wi;
            }
            out[o] = acc;
        }
    }

    fn apply_head(&self, z: &mut [f64]) {
        if self.head == Head::Softmax {
            softmax_in_place(z);
        }
    }

    /// Deterministic forward pass (dropout off).
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        if x.len() != self.dim_in() {
            return Err(NnError::WidthMismatch {
                expected: self.dim_in(),
                got: x.len(),
            });
        }
        let mut act = x.to_vec();
        for l in 0..self.weights.len() {
            let mut next = vec![0.0; self.layers[l + 1]];
            self.affine(l, &act, &mut next);
            if l + 1 < self.layers.len() - 1 {
                relu_in_place(&mut next);
            } else {
                self.apply_head(&mut next);
            }
            act = next;
        }
        Ok(act)
    }

    /// Forward pass with fresh inverted-dropout masks on the hidden
    /// activations; the identity to [`MlpModel::forward`] in expectation.
    pub fn forward_dropout(&self, x: &[f64], rng: &mut Rng) -> Result<Vec<f64>, NnError> {
        if x.len() != self.dim_in() {
            return Err(NnError::WidthMismatch {
                expected: self.dim_in(),
                got: x.len(),
            });
        }
        let keep = 1.0 - self.dropout.unwrap_or(0.0);
        let mut act = x.to_vec();
        for l in 0..self.weights.len() {
            let mut next = vec![0.0; self.layers[l + 1]];
            self.affine(l, &act, &mut next);
            if l + 1 < self.layers.len() - 1 {
                relu_in_place(&mut next);
                if keep < 1.0 {
                    for v in next.iter_mut() {
                        *v = if rng.next_f64() < keep { *v / keep } else { 0.0 };
                    }
                }
            } else {
                self.apply_head(&mut next);
            }
            act = next;
        }
        Ok(act)
    }

    /// Forward over a flat batch (`count` rows of `dim_in`), flat output.
    pub fn forward_batch(&self, inputs: &[f64], count: usize) -> Result<Vec<f64>, NnError> {
        if inputs.len() != count * self.dim_in() {
            return Err(NnError::WidthMismatch {
                expected: count * self.dim_in(),
                got: inputs.len(),
            });
        }
        let mut out = Vec::with_capacity(count * self.dim_out());
        for i in 0..count {
            let x = &inputs[i * self.dim_in()..(i + 1) * self.dim_in()];
            out.extend(self.forward(x)?);
        }
        Ok(out)
    }

    /// Evaluates the model on every grid point, yielding a grid function.
    pub fn predict_set(&self, grid: &SampleGrid) -> Result<FunctionGrid, NnError> {
        if grid.dim_in() != self.dim_in() {
            return Err(NnError::WidthMismatch {
                expected: self.dim_in(),
                got: grid.dim_in(),
            });
        }
        let mut out = FunctionGrid::zeros(grid.len(), self.dim_out());
        for s in 0..grid.len() {
            let y = self.forward(grid.point(s))?;
            out.row_mut(s).copy_from_slice(&y);
        }
        Ok(out)
    }

    /// Summed loss over a batch.
    pub fn batch_loss(
        &self,
        inputs: &[f64],
        count: usize,
        targets: BatchTargets,
        loss: TrainLoss,
    ) -> Result<f64, NnError> {
        self.check_batch(inputs, count, &targets, loss)?;
        let n_out = self.dim_out();
        let mut total = 0.0;
        for i in 0..count {
            let x = &inputs[i * self.dim_in()..(i + 1) * self.dim_in()];
            let y = self.forward(x)?;
            match (loss, &targets) {
                (TrainLoss::SquaredError, BatchTargets::Values(t)) => {
                    let tr = &t[i * n_out..(i + 1) * n_out];
                    total += y.iter().zip(tr).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                }
                (TrainLoss::SquaredError, BatchTargets::Labels(labels)) => {
                    for (m, v) in y.iter().enumerate() {
                        let t = if m == labels[i] { 1.0 } else { 0.0 };
                        total += (v - t) * (v - t);
                    }
                }
                (TrainLoss::CrossEntropy, BatchTargets::Labels(labels)) => {
                    total += -float::ln(y[labels[i]].max(1e-300));
                }
                (TrainLoss::CrossEntropy, BatchTargets::Values(_)) => {
                    return Err(NnError::UnsupportedLoss);
                }
            }
        }
        Ok(total)
    }

    /// Exact gradient of the summed batch loss.
    pub fn batch_gradient(
        &self,
        inputs: &[f64],
        count: usize,
        targets: BatchTargets,
        loss: TrainLoss,
    ) -> Result<MlpGradient, NnError> {
        self.batch_gradient_impl(inputs, count, targets, loss, None)
    }

    /// Gradient with fresh inverted-dropout masks per example on hidden
    /// activations, drawn from `rng`.
    pub fn batch_gradient_dropout(
        &self,
        inputs: &[f64],
        count: usize,
        targets: BatchTargets,
        loss: TrainLoss,
        rng: &mut Rng,
    ) -> Result<MlpGradient, NnError> {
        self.batch_gradient_impl(inputs, count, targets, loss, Some(rng))
    }

    fn check_batch(
        &self,
        inputs: &[f64],
        count: usize,
        targets: &BatchTargets,
        loss: TrainLoss,
    ) -> Result<(), NnError> {
        if inputs.len() != count * self.dim_in() {
            return Err(NnError::WidthMismatch {
                expected: count * self.dim_in(),
                got: inputs.len(),
            });
        }
        match targets {
            BatchTargets::Values(t) => {
                if t.len() != count * self.dim_out() {
                    return Err(NnError::BatchMismatch {
                        inputs: count,
                        targets: t.len() / self.dim_out().max(1),
                    });
                }
            }
            BatchTargets::Labels(labels) => {
                if labels.len() != count {
                    return Err(NnError::BatchMismatch {
                        inputs: count,
                        targets: labels.len(),
                    });
                }
                for &l in *labels {
                    if l >= self.dim_out() {
                        return Err(NnError::LabelOutOfRange {
                            label: l,
                            classes: self.dim_out(),
                        });
                    }
                }
            }
        }
        if loss == TrainLoss::CrossEntropy && self.head != Head::Softmax {
            return Err(NnError::UnsupportedLoss);
        }
        Ok(())
    }

    fn batch_gradient_impl(
        &self,
        inputs: &[f64],
        count: usize,
        targets: BatchTargets,
        loss: TrainLoss,
        mut rng: Option<&mut Rng>,
    ) -> Result<MlpGradient, NnError> {
        self.check_batch(inputs, count, &targets, loss)?;
        let n_layers = self.weights.len();
        let n_out = self.dim_out();
        let mut grad = MlpGradient::zeros_like(self);

        for i in 0..count {
            let x = &inputs[i * self.dim_in()..(i + 1) * self.dim_in()];

            // Forward with cached activations; hidden dropout if requested.
            let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
            let mut masks: Vec<Option<Vec<f64>>> = Vec::with_capacity(n_layers);
            acts.push(x.to_vec());
            for l in 0..n_layers {
                let mut next = vec![0.0; self.layers[l + 1]];
                self.affine(l, &acts[l], &mut next);
                if l + 1 < self.layers.len() - 1 {
                    relu_in_place(&mut next);
                    let mask = match (self.dropout, rng.as_deref_mut()) {
                        (Some(p), Some(r)) if p > 0.0 => {
                            let keep = 1.0 - p;
                            let m: Vec<f64> = next
                                .iter()
                                .map(|_| if r.next_f64() < keep { 1.0 / keep } else { 0.0 })
                                .collect();
                            for (v, f) in next.iter_mut().zip(&m) {
                                *v *= f;
                            }
                            Some(m)
                        }
                        _ => None,
                    };
                    masks.push(mask);
                } else {
                    self.apply_head(&mut next);
                    masks.push(None);
                }
                acts.push(next);
            }

            // Output delta dL/dz of the last affine layer.
            let y = &acts[n_layers];
            let mut delta: Vec<f64> = match (loss, &targets) {
                (TrainLoss::SquaredError, t) => {
                    let gap: Vec<f64> = match t {
                        BatchTargets::Values(v) => {
                            let tr = &v[i * n_out..(i + 1) * n_out];
                            y.iter().zip(tr).map(|(a, b)| 2.0 * (a - b)).collect()
                        }
                        BatchTargets::Labels(labels) => (0..n_out)
                            .map(|m| 2.0 * (y[m] - if m == labels[i] { 1.0 } else { 0.0 }))
                            .collect(),
                    };
                    match self.head {
                        Head::Identity => gap,
                        Head::Softmax => {
                            // chain through the softmax Jacobian diag(p) − ppᵀ
                            let dot: f64 = y.iter().zip(&gap).map(|(p, g)| p * g).sum();
                            y.iter().zip(&gap).map(|(p, g)| p * (g - dot)).collect()
                        }
                    }
                }
                (TrainLoss::CrossEntropy, BatchTargets::Labels(labels)) => (0..n_out)
                    .map(|m| y[m] - if m == labels[i] { 1.0 } else { 0.0 })
                    .collect(),
                (TrainLoss::CrossEntropy, BatchTargets::Values(_)) => {
                    return Err(NnError::UnsupportedLoss);
                }
            };

            // Backward through the stack.
            for l in (0..n_layers).rev() {
                let fan_in = self.layers[l];
                let fan_out = self.layers[l + 1];
                let input = &acts[l];
                for o in 0..fan_out {
                    let d = delta[o];
                    if d != 0.0 {
                        let row = &mut grad.weights[l][o * fan_in..(o + 1) * fan_in];
                        for (slot, xv) in row.iter_mut().zip(input) {
                            *slot += d * xv;
                        }
                    }
                    grad.biases[l][o] += d;
                }
                if l > 0 {
                    let w = &self.weights[l];
                    let mut prev = vec![0.0; fan_in];
                    for o in 0..fan_out {
                        let d = delta[o];
                        if d != 0.0 {
                            let row = &w[o * fan_in..(o + 1) * fan_in];
                            for (p, wi) in prev.iter_mut().zip(row) {
                                *p += d * wi;
                            }
                        }
                    }
                    // ReLU gate; with dropout, masked units pass no gradient
                    // and kept ones carry the 1/keep scale.
                    let post = &acts[l];
                    match &masks[l - 1] {
                        Some(mask) => {
                            for ((p, &a), &m) in prev.iter_mut().zip(post).zip(mask) {
                                *p *= if a > 0.0 { m } else { 0.0 };
                            }
                        }
                        None => {
                            for (p, &a) in prev.iter_mut().zip(post) {
                                if a <= 0.0 {
                                    *p = 0.0;
                                }
                            }
                        }
                    }
                    delta = prev;
                }
            }
        }
        Ok(grad)
    }
}

fn relu_in_place(xs: &mut [f64]) {
    for x in xs {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = float::exp(*v - max);
        total += *v;
    }
    for v in z.iter_mut() {
        *v /= total;
    }
}
