//! Feed-forward surrogate for the image -> conductivity mapping.
//!
//! The feature vector of an image is its inclusion volume fraction followed
//! by the leading `h` reduced coefficients of the shifted 2-point snapshot.
//! Features are standardized per entry to zero mean and unit standard
//! deviation, labels are shifted to a zero mean vector; a dense MLP with a
//! linear output layer regresses the standardized Voigt vector, trained by
//! mini-batch Adam. All epochs up to the budget are run and the parameter
//! snapshot with the lowest validation MSE is kept.

use crate::binio::*;
use crate::correlation;
use crate::dataset::{DatasetRecord, SidecarReader};
use crate::error::{Error, Result};
use crate::homogenize::VoigtVector;
use crate::image::MicrostructureImage;
use crate::podrb::ReducedBasis;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// Supported activation functions for hidden layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Softplus,
}

impl Activation {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Self::Relu),
            "tanh" => Ok(Self::Tanh),
            "sigmoid" | "sigm" => Ok(Self::Sigmoid),
            "softplus" => Ok(Self::Softplus),
            other => Err(Error::InvalidSpec(format!("unknown activation {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Relu => "relu",
            Self::Tanh => "tanh",
            Self::Sigmoid => "sigmoid",
            Self::Softplus => "softplus",
        }
    }

    #[inline]
    fn apply(&self, x: f64) -> f64 {
        match self {
            Self::Relu => x.max(0.0),
            Self::Tanh => x.tanh(),
            Self::Sigmoid => sigmoid(x),
            Self::Softplus => softplus(x),
        }
    }

    /// Derivative as a function of the pre-activation.
    #[inline]
    fn derivative(&self, x: f64) -> f64 {
        match self {
            Self::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Self::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Self::Softplus => sigmoid(x),
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Per-feature input scaling and global label shift.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    input_mean: Vec<f64>,
    input_std: Vec<f64>,
    label_shift: [f64; 3],
}

impl Standardizer {
    pub fn input_dim(&self) -> usize {
        self.input_mean.len()
    }

    pub fn label_shift(&self) -> [f64; 3] {
        self.label_shift
    }

    pub fn transform_input(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.input_mean)
            .zip(&self.input_std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn invert_input(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.input_mean)
            .zip(&self.input_std)
            .map(|((v, m), s)| v * s + m)
            .collect()
    }

    pub fn transform_label(&self, y: &[f64; 3]) -> [f64; 3] {
        [
            y[0] - self.label_shift[0],
            y[1] - self.label_shift[1],
            y[2] - self.label_shift[2],
        ]
    }

    pub fn invert_label(&self, y: &[f64; 3]) -> [f64; 3] {
        [
            y[0] + self.label_shift[0],
            y[1] + self.label_shift[1],
            y[2] + self.label_shift[2],
        ]
    }
}

/// Fits per-feature (mean, std) on the inputs and the mean shift vector on
/// the labels. Constant features are rejected.
pub fn fit_standardizer(features: &[Vec<f64>], labels: &[[f64; 3]]) -> Result<Standardizer> {
    if features.len() < 2 {
        return Err(Error::EmptyDataset(
            "standardizer needs at least two samples".into(),
        ));
    }
    if features.len() != labels.len() {
        return Err(Error::InvalidSpec(format!(
            "{} features vs {} labels",
            features.len(),
            labels.len()
        )));
    }
    let dim = features[0].len();
    let n = features.len() as f64;
    let mut mean = vec![0.0; dim];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for f in features {
        for ((v, m), x) in var.iter_mut().zip(&mean).zip(f) {
            let d = x - m;
            *v += d * d;
        }
    }
    let mut std = Vec::with_capacity(dim);
    for (idx, v) in var.iter().enumerate() {
        let s = (v / n).sqrt();
        if s <= 0.0 || !s.is_finite() {
            return Err(Error::ConstantFeature(idx));
        }
        std.push(s);
    }
    let mut shift = [0.0f64; 3];
    for y in labels {
        for (s, v) in shift.iter_mut().zip(y) {
            *s += v;
        }
    }
    for s in &mut shift {
        *s /= n;
    }
    Ok(Standardizer {
        input_mean: mean,
        input_std: std,
        label_shift: shift,
    })
}

/// Feature vector `[f_b, (B^T s)_1..h]` of an image under a basis.
pub fn extract_features(rb: &ReducedBasis, img: &MicrostructureImage, h: usize) -> Result<Vec<f64>> {
    if h > rb.mode_count() {
        return Err(Error::HTooLarge {
            h,
            n_modes: rb.mode_count(),
        });
    }
    if img.len() != rb.dim() {
        return Err(Error::ResolutionMismatch {
            expected: rb.dim(),
            got: img.len(),
        });
    }
    let snapshot = correlation::snapshot(img)?;
    let coeffs = rb.coefficients(snapshot.values())?;
    let mut xi = Vec::with_capacity(h + 1);
    xi.push(img.volume_fraction());
    xi.extend(coeffs.iter().take(h));
    Ok(xi)
}

/// Feature vector from a precomputed shifted snapshot.
pub fn features_from_snapshot(
    rb: &ReducedBasis,
    f_b: f64,
    snapshot: &[f64],
    h: usize,
) -> Result<Vec<f64>> {
    if h > rb.mode_count() {
        return Err(Error::HTooLarge {
            h,
            n_modes: rb.mode_count(),
        });
    }
    let coeffs = rb.coefficients(snapshot)?;
    let mut xi = Vec::with_capacity(h + 1);
    xi.push(f_b);
    xi.extend(coeffs.iter().take(h));
    Ok(xi)
}

/// Streams a dataset's snapshot sidecar into feature/label pairs.
pub fn features_from_records<R: Read>(
    rb: &ReducedBasis,
    h: usize,
    records: &[DatasetRecord],
    sidecar: &mut SidecarReader<R>,
) -> Result<(Vec<Vec<f64>>, Vec<[f64; 3]>)> {
    if sidecar.remaining() != records.len() as u64 {
        return Err(Error::InvalidFormat(format!(
            "sidecar has {} snapshots for {} records",
            sidecar.remaining(),
            records.len()
        )));
    }
    let mut features = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    for rec in records {
        let snapshot = sidecar
            .next_snapshot()?
            .ok_or_else(|| Error::InvalidFormat("sidecar ended early".into()))?;
        features.push(features_from_snapshot(rb, rec.f_b, &snapshot, h)?);
        labels.push(rec.kappa_voigt);
    }
    Ok((features, labels))
}

/// Raw dense network; weights map layer `l-1` activations to layer `l`
/// pre-activations, the output layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Net {
    pub(crate) weights: Vec<DMatrix<f64>>,
    pub(crate) biases: Vec<DVector<f64>>,
    pub(crate) activations: Vec<Activation>,
}

impl Net {
    /// Scaled uniform fan-in initialization: `U(-a, a)` with
    /// `a = sqrt(1 / fan_in)`, biases zero.
    fn init(sizes: &[usize], activations: &[Activation], rng: &mut impl Rng) -> Self {
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for l in 1..sizes.len() {
            let fan_in = sizes[l - 1];
            let a = (1.0 / fan_in as f64).sqrt();
            weights.push(DMatrix::from_fn(sizes[l], fan_in, |_, _| {
                rng.gen_range(-a..a)
            }));
            biases.push(DVector::zeros(sizes[l]));
        }
        Self {
            weights,
            biases,
            activations: activations.to_vec(),
        }
    }

    fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub(crate) fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.weights[0].ncols()];
        sizes.extend(self.weights.iter().map(|w| w.nrows()));
        sizes
    }

    /// Forward pass of a batch (samples as columns).
    fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut a = x.clone();
        for l in 0..self.layer_count() {
            let mut z = &self.weights[l] * &a;
            for mut col in z.column_iter_mut() {
                col += &self.biases[l];
            }
            if l + 1 < self.layer_count() {
                let act = self.activations[l];
                z.apply(|v| *v = act.apply(*v));
            }
            a = z;
        }
        a
    }

    fn predict_one(&self, x: &[f64]) -> [f64; 3] {
        let out = self.forward(&DMatrix::from_column_slice(x.len(), 1, x));
        [out[(0, 0)], out[(1, 0)], out[(2, 0)]]
    }

    /// Mean squared error over batch and components.
    fn mse(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
        let pred = self.forward(x);
        (pred - y).norm_squared() / (y.ncols() * y.nrows()) as f64
    }

    /// Backpropagation of the MSE cost; returns per-layer gradients.
    fn gradients(
        &self,
        x: &DMatrix<f64>,
        y: &DMatrix<f64>,
    ) -> (Vec<DMatrix<f64>>, Vec<DVector<f64>>, f64) {
        let layers = self.layer_count();
        let batch = x.ncols() as f64;
        let mut pre: Vec<DMatrix<f64>> = Vec::with_capacity(layers);
        let mut act: Vec<DMatrix<f64>> = Vec::with_capacity(layers + 1);
        act.push(x.clone());
        for l in 0..layers {
            let mut z = &self.weights[l] * &act[l];
            for mut col in z.column_iter_mut() {
                col += &self.biases[l];
            }
            pre.push(z.clone());
            if l + 1 < layers {
                let a = self.activations[l];
                z.apply(|v| *v = a.apply(*v));
            }
            act.push(z);
        }

        let out = &act[layers];
        let scale = 2.0 / (batch * out.nrows() as f64);
        let cost = (out - y).norm_squared() / (batch * out.nrows() as f64);
        let mut delta = (out - y) * scale;

        let mut grad_w = vec![DMatrix::zeros(0, 0); layers];
        let mut grad_b = vec![DVector::zeros(0); layers];
        for l in (0..layers).rev() {
            grad_w[l] = &delta * act[l].transpose();
            grad_b[l] = DVector::from_fn(delta.nrows(), |i, _| delta.row(i).sum());
            if l > 0 {
                let mut back = self.weights[l].transpose() * &delta;
                let a = self.activations[l - 1];
                for (bv, zv) in back.iter_mut().zip(pre[l - 1].iter()) {
                    *bv *= a.derivative(*zv);
                }
                delta = back;
            }
        }
        (grad_w, grad_b, cost)
    }
}

/// Adam optimizer state (one slot per parameter tensor).
struct Adam {
    m_w: Vec<DMatrix<f64>>,
    v_w: Vec<DMatrix<f64>>,
    m_b: Vec<DVector<f64>>,
    v_b: Vec<DVector<f64>>,
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    fn new(net: &Net, lr: f64) -> Self {
        Self {
            m_w: net.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
            v_w: net.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
            m_b: net.biases.iter().map(|b| DVector::zeros(b.nrows())).collect(),
            v_b: net.biases.iter().map(|b| DVector::zeros(b.nrows())).collect(),
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    fn update(&mut self, net: &mut Net, grad_w: &[DMatrix<f64>], grad_b: &[DVector<f64>]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for l in 0..net.weights.len() {
            adam_tensor(
                net.weights[l].as_mut_slice(),
                grad_w[l].as_slice(),
                self.m_w[l].as_mut_slice(),
                self.v_w[l].as_mut_slice(),
                self.lr,
                self.beta1,
                self.beta2,
                self.eps,
                c1,
                c2,
            );
            adam_tensor(
                net.biases[l].as_mut_slice(),
                grad_b[l].as_slice(),
                self.m_b[l].as_mut_slice(),
                self.v_b[l].as_mut_slice(),
                self.lr,
                self.beta1,
                self.beta2,
                self.eps,
                c1,
                c2,
            );
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_tensor(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    c1: f64,
    c2: f64,
) {
    for i in 0..params.len() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Training hyper-parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_layers: Vec<usize>,
    pub activations: Vec<Activation>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Samples used for gradient updates; the standardizer is fitted here.
    pub n_train: usize,
    /// Samples used only for the early-stopping cost.
    pub n_val: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers.len() != self.activations.len() {
            return Err(Error::InvalidSpec(format!(
                "{} hidden layers but {} activations",
                self.hidden_layers.len(),
                self.activations.len()
            )));
        }
        if self.hidden_layers.iter().any(|&s| s == 0) {
            return Err(Error::InvalidSpec("empty hidden layer".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidSpec("learning rate must be positive".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.restarts == 0 {
            return Err(Error::InvalidSpec(
                "batch size, epochs and restarts must be positive".into(),
            ));
        }
        if self.n_train < 2 || self.n_val == 0 {
            return Err(Error::InvalidSpec(
                "need at least two training and one validation sample".into(),
            ));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![7, 39],
            activations: vec![Activation::Relu, Activation::Softplus],
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 10_000,
            n_train: 1_000,
            n_val: 500,
            restarts: 5,
            seed: 0,
        }
    }
}

/// Training provenance stored with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epochs_run: u64,
    pub best_epoch: u64,
    pub best_restart: u64,
    pub best_val_mse: f64,
    pub final_val_mse: f64,
    pub seed: u64,
}

/// Trained surrogate: network, standardizer and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    net: Net,
    standardizer: Standardizer,
    meta: TrainMeta,
    /// Hash of the reduced basis the features were built with.
    rb_hash: String,
}

impl MlpModel {
    pub fn layer_sizes(&self) -> Vec<usize> {
        self.net.layer_sizes()
    }

    pub fn activations(&self) -> &[Activation] {
        &self.net.activations
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn meta(&self) -> &TrainMeta {
        &self.meta
    }

    pub fn rb_hash(&self) -> &str {
        &self.rb_hash
    }

    /// Expected feature dimension `h + 1`.
    pub fn input_dim(&self) -> usize {
        self.net.weights[0].ncols()
    }

    /// Predicts the Voigt vector from a raw (unstandardized) feature vector.
    pub fn predict_features(&self, xi: &[f64]) -> Result<VoigtVector> {
        if xi.len() != self.input_dim() {
            return Err(Error::ResolutionMismatch {
                expected: self.input_dim(),
                got: xi.len(),
            });
        }
        let x = self.standardizer.transform_input(xi);
        let raw = self.net.predict_one(&x);
        Ok(VoigtVector(self.standardizer.invert_label(&raw)))
    }
}

/// Full-pipeline prediction: 2-point statistics, shift, projection,
/// standardization, network, inverse shift.
pub fn predict(model: &MlpModel, img: &MicrostructureImage, rb: &ReducedBasis) -> Result<VoigtVector> {
    if img.len() != rb.dim() {
        return Err(Error::ResolutionMismatch {
            expected: rb.dim(),
            got: img.len(),
        });
    }
    let h = model.input_dim() - 1;
    let xi = extract_features(rb, img, h)?;
    model.predict_features(&xi)
}

/// Result of a training run: the best model over all restarts plus the loss
/// curves of the winning restart.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub model: MlpModel,
    pub train_curve: Vec<f64>,
    pub val_curve: Vec<f64>,
}

/// Trains the surrogate on raw features/labels. The dataset is shuffled
/// once with the run seed and split into `n_train`/`n_val`; each restart
/// re-initializes the parameters from its own sub-stream and reshuffles the
/// training batches every epoch. The restart with the lowest best
/// validation MSE wins (ties break on the restart index).
pub fn train(
    features: &[Vec<f64>],
    labels: &[[f64; 3]],
    config: &TrainConfig,
    rb_hash: &str,
) -> Result<TrainResult> {
    config.validate()?;
    if features.is_empty() {
        return Err(Error::EmptyDataset("no training samples".into()));
    }
    if features.len() != labels.len() {
        return Err(Error::InvalidSpec(format!(
            "{} features vs {} labels",
            features.len(),
            labels.len()
        )));
    }
    let needed = config.n_train + config.n_val;
    if features.len() < needed {
        return Err(Error::EmptyDataset(format!(
            "{} samples but split needs {needed}",
            features.len()
        )));
    }

    // One shuffle/split for the whole run; restarts only change the
    // parameter initialization and batch order.
    let mut indices: Vec<usize> = (0..features.len()).collect();
    indices.shuffle(&mut crate::rng::stream_rng(config.seed, u64::MAX));
    let train_idx = &indices[..config.n_train];
    let val_idx = &indices[config.n_train..needed];

    let train_features: Vec<Vec<f64>> = train_idx.iter().map(|&i| features[i].clone()).collect();
    let train_labels: Vec<[f64; 3]> = train_idx.iter().map(|&i| labels[i]).collect();
    let standardizer = fit_standardizer(&train_features, &train_labels)?;

    let to_matrix = |idx: &[usize]| -> (DMatrix<f64>, DMatrix<f64>) {
        let dim = features[0].len();
        let x = DMatrix::from_fn(dim, idx.len(), |r, c| {
            (features[idx[c]][r] - standardizer.input_mean[r]) / standardizer.input_std[r]
        });
        let y = DMatrix::from_fn(3, idx.len(), |r, c| {
            labels[idx[c]][r] - standardizer.label_shift[r]
        });
        (x, y)
    };
    let (x_train, y_train) = to_matrix(train_idx);
    let (x_val, y_val) = to_matrix(val_idx);

    let mut sizes = vec![features[0].len()];
    sizes.extend_from_slice(&config.hidden_layers);
    sizes.push(3);

    let runs: Vec<Result<RestartOutcome>> = (0..config.restarts as u64)
        .into_par_iter()
        .map(|restart| {
            train_restart(
                &sizes,
                config,
                restart,
                &x_train,
                &y_train,
                &x_val,
                &y_val,
            )
        })
        .collect();

    let mut best: Option<(u64, RestartOutcome)> = None;
    for (restart, run) in runs.into_iter().enumerate() {
        let run = run?;
        let better = match &best {
            None => true,
            Some((_, incumbent)) => run.best_val_mse < incumbent.best_val_mse,
        };
        if better {
            best = Some((restart as u64, run));
        }
    }
    let (best_restart, outcome) = best.expect("at least one restart");

    let meta = TrainMeta {
        epochs_run: config.max_epochs as u64,
        best_epoch: outcome.best_epoch,
        best_restart,
        best_val_mse: outcome.best_val_mse,
        final_val_mse: *outcome.val_curve.last().expect("at least one epoch"),
        seed: config.seed,
    };
    Ok(TrainResult {
        model: MlpModel {
            net: outcome.net,
            standardizer,
            meta,
            rb_hash: rb_hash.to_string(),
        },
        train_curve: outcome.train_curve,
        val_curve: outcome.val_curve,
    })
}

struct RestartOutcome {
    net: Net,
    best_epoch: u64,
    best_val_mse: f64,
    train_curve: Vec<f64>,
    val_curve: Vec<f64>,
}

fn train_restart(
    sizes: &[usize],
    config: &TrainConfig,
    restart: u64,
    x_train: &DMatrix<f64>,
    y_train: &DMatrix<f64>,
    x_val: &DMatrix<f64>,
    y_val: &DMatrix<f64>,
) -> Result<RestartOutcome> {
    let mut rng = crate::rng::stream_rng(config.seed, restart);
    let mut net = Net::init(sizes, &config.activations, &mut rng);
    let mut adam = Adam::new(&net, config.learning_rate);

    let n_train = x_train.ncols();
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut best_net = net.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0u64;
    let mut train_curve = Vec::with_capacity(config.max_epochs);
    let mut val_curve = Vec::with_capacity(config.max_epochs);

    let dim = x_train.nrows();
    let mut batch_x = DMatrix::zeros(dim, config.batch_size);
    let mut batch_y = DMatrix::zeros(3, config.batch_size);

    for epoch in 1..=config.max_epochs as u64 {
        order.shuffle(&mut rng);
        let mut epoch_cost = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let bs = chunk.len();
            if batch_x.ncols() != bs {
                batch_x = DMatrix::zeros(dim, bs);
                batch_y = DMatrix::zeros(3, bs);
            }
            for (c, &idx) in chunk.iter().enumerate() {
                batch_x.set_column(c, &x_train.column(idx));
                batch_y.set_column(c, &y_train.column(idx));
            }
            let (grad_w, grad_b, cost) = net.gradients(&batch_x, &batch_y);
            if !cost.is_finite() {
                return Err(Error::Diverged {
                    epoch: epoch as usize,
                });
            }
            adam.update(&mut net, &grad_w, &grad_b);
            epoch_cost += cost;
            batches += 1;
        }
        train_curve.push(epoch_cost / batches as f64);

        let val_mse = net.mse(x_val, y_val);
        if !val_mse.is_finite() {
            return Err(Error::Diverged {
                epoch: epoch as usize,
            });
        }
        val_curve.push(val_mse);
        if val_mse < best_val {
            best_val = val_mse;
            best_epoch = epoch;
            best_net = net.clone();
        }
    }

    Ok(RestartOutcome {
        net: best_net,
        best_epoch,
        best_val_mse: best_val,
        train_curve,
        val_curve,
    })
}

/// Per-component error statistics of a model on held-out data. Relative
/// errors are reported for the diagonal entries only; the shear entry
/// fluctuates around zero, so only absolute errors are meaningful there.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub n_samples: usize,
    /// Mean absolute error per Voigt component.
    pub mae: [f64; 3],
    /// Maximum absolute error per Voigt component.
    pub max_ae: [f64; 3],
    /// Mean relative error of k11 and k22.
    pub mean_rel: [f64; 2],
    /// Maximum relative error of k11 and k22.
    pub max_rel: [f64; 2],
    /// Absolute-error histograms per component.
    pub histograms: [Histogram; 3],
}

#[derive(Debug, Clone, Serialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

fn histogram(values: &[f64], bins: usize) -> Histogram {
    let hi = values.iter().fold(0.0f64, |m, &v| m.max(v));
    let hi = if hi > 0.0 { hi } else { 1e-12 };
    let mut counts = vec![0u64; bins];
    for &v in values {
        let idx = ((v / hi) * bins as f64).floor() as usize;
        counts[idx.min(bins - 1)] += 1;
    }
    let bin_edges = (0..=bins).map(|i| hi * i as f64 / bins as f64).collect();
    Histogram { bin_edges, counts }
}

/// Evaluates a model on held-out feature/label pairs.
pub fn evaluate(
    model: &MlpModel,
    features: &[Vec<f64>],
    labels: &[[f64; 3]],
) -> Result<ErrorReport> {
    if features.is_empty() {
        return Err(Error::EmptyDataset("no evaluation samples".into()));
    }
    if features.len() != labels.len() {
        return Err(Error::InvalidSpec(format!(
            "{} features vs {} labels",
            features.len(),
            labels.len()
        )));
    }
    let n = features.len();
    let mut abs_err = [
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    ];
    let mut mean_rel = [0.0f64; 2];
    let mut max_rel = [0.0f64; 2];
    for (xi, y) in features.iter().zip(labels) {
        let pred = model.predict_features(xi)?.0;
        for c in 0..3 {
            abs_err[c].push((pred[c] - y[c]).abs());
        }
        for c in 0..2 {
            let rel = (pred[c] - y[c]).abs() / y[c].abs();
            mean_rel[c] += rel;
            max_rel[c] = max_rel[c].max(rel);
        }
    }
    mean_rel[0] /= n as f64;
    mean_rel[1] /= n as f64;

    let mae = std::array::from_fn(|c| abs_err[c].iter().sum::<f64>() / n as f64);
    let max_ae = std::array::from_fn(|c| abs_err[c].iter().fold(0.0f64, |m, &v| m.max(v)));
    let histograms = std::array::from_fn(|c| histogram(&abs_err[c], 20));

    Ok(ErrorReport {
        n_samples: n,
        mae,
        max_ae,
        mean_rel,
        max_rel,
        histograms,
    })
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

const MODEL_MAGIC: &[u8; 4] = b"MKNN";
const MODEL_VERSION: u32 = 1;

impl MlpModel {
    /// Versioned binary container: layer shapes, activation tags, weights
    /// and biases, the standardizer, the basis reference hash and training
    /// metadata. Round-trips bit-exactly.
    pub fn write<W: Write>(&self, w: &mut W, config_hash: &str) -> Result<()> {
        w.write_all(MODEL_MAGIC)?;
        write_u32(w, MODEL_VERSION)?;
        write_str(w, config_hash)?;
        write_str(w, &self.rb_hash)?;
        let sizes = self.layer_sizes();
        write_u32(w, sizes.len() as u32)?;
        for s in &sizes {
            write_u64(w, *s as u64)?;
        }
        write_u32(w, self.net.activations.len() as u32)?;
        for a in &self.net.activations {
            write_u8(
                w,
                match a {
                    Activation::Relu => 0,
                    Activation::Tanh => 1,
                    Activation::Sigmoid => 2,
                    Activation::Softplus => 3,
                },
            )?;
        }
        for (wm, bv) in self.net.weights.iter().zip(&self.net.biases) {
            write_f64_slice(w, wm.as_slice())?;
            write_f64_slice(w, bv.as_slice())?;
        }
        write_u64(w, self.standardizer.input_mean.len() as u64)?;
        write_f64_slice(w, &self.standardizer.input_mean)?;
        write_f64_slice(w, &self.standardizer.input_std)?;
        write_f64_slice(w, &self.standardizer.label_shift)?;
        write_u64(w, self.meta.epochs_run)?;
        write_u64(w, self.meta.best_epoch)?;
        write_u64(w, self.meta.best_restart)?;
        write_f64(w, self.meta.best_val_mse)?;
        write_f64(w, self.meta.final_val_mse)?;
        write_u64(w, self.meta.seed)?;
        Ok(())
    }

    /// Reads a model written by [`MlpModel::write`]; returns the model and
    /// the recorded config hash.
    pub fn read<R: Read>(r: &mut R) -> Result<(Self, String)> {
        expect_magic(r, MODEL_MAGIC, "model file")?;
        let version = read_u32(r)?;
        if version != MODEL_VERSION {
            return Err(Error::InvalidFormat(format!(
                "unsupported model version {version}"
            )));
        }
        let config_hash = read_str(r)?;
        let rb_hash = read_str(r)?;
        let n_sizes = read_u32(r)? as usize;
        if n_sizes < 2 || n_sizes > 64 {
            return Err(Error::InvalidFormat("implausible layer count".into()));
        }
        let mut sizes = Vec::with_capacity(n_sizes);
        for _ in 0..n_sizes {
            sizes.push(read_u64(r)? as usize);
        }
        let n_act = read_u32(r)? as usize;
        if n_act != n_sizes - 2 {
            return Err(Error::InvalidFormat("activation count mismatch".into()));
        }
        let mut activations = Vec::with_capacity(n_act);
        for _ in 0..n_act {
            activations.push(match read_u8(r)? {
                0 => Activation::Relu,
                1 => Activation::Tanh,
                2 => Activation::Sigmoid,
                3 => Activation::Softplus,
                other => {
                    return Err(Error::InvalidFormat(format!(
                        "unknown activation tag {other}"
                    )))
                }
            });
        }
        let mut weights = Vec::with_capacity(n_sizes - 1);
        let mut biases = Vec::with_capacity(n_sizes - 1);
        for l in 1..n_sizes {
            let data = read_f64_vec(r, sizes[l] * sizes[l - 1])?;
            weights.push(DMatrix::from_column_slice(sizes[l], sizes[l - 1], &data));
            let b = read_f64_vec(r, sizes[l])?;
            biases.push(DVector::from_column_slice(&b));
        }
        let in_dim = read_u64(r)? as usize;
        let input_mean = read_f64_vec(r, in_dim)?;
        let input_std = read_f64_vec(r, in_dim)?;
        let shift = read_f64_vec(r, 3)?;
        let meta = TrainMeta {
            epochs_run: read_u64(r)?,
            best_epoch: read_u64(r)?,
            best_restart: read_u64(r)?,
            best_val_mse: read_f64(r)?,
            final_val_mse: read_f64(r)?,
            seed: read_u64(r)?,
        };
        Ok((
            MlpModel {
                net: Net {
                    weights,
                    biases,
                    activations,
                },
                standardizer: Standardizer {
                    input_mean,
                    input_std,
                    label_shift: [shift[0], shift[1], shift[2]],
                },
                meta,
                rb_hash,
            },
            config_hash,
        ))
    }

    pub fn save(&self, path: &Path, config_hash: &str) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut file, config_hash)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let mut file = std::io::BufReader::new(
            std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
        );
        Self::read(&mut file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_net(arch: &[usize], acts: &[Activation], seed: u64) -> Net {
        let mut rng = crate::rng::master_rng(seed);
        Net::init(arch, acts, &mut rng)
    }

    #[test]
    fn standardizer_two_point_dataset() {
        let features = vec![vec![0.0], vec![2.0]];
        let labels = vec![[1.0, 2.0, 3.0], [3.0, 2.0, 1.0]];
        let st = fit_standardizer(&features, &labels).unwrap();
        assert_eq!(st.transform_input(&[0.0]), vec![-1.0]);
        assert_eq!(st.transform_input(&[2.0]), vec![1.0]);
        assert_eq!(st.label_shift(), [2.0, 2.0, 2.0]);
        // Round trip.
        let x = vec![0.77];
        let back = st.invert_input(&st.transform_input(&x));
        assert!((back[0] - x[0]).abs() < 1e-12);
        let y = [0.4, -0.3, 0.9];
        let back = st.invert_label(&st.transform_label(&y));
        for c in 0..3 {
            assert!((back[c] - y[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn standardizer_normalizes_training_set() {
        let mut rng = crate::rng::master_rng(3);
        use rand::Rng;
        let features: Vec<Vec<f64>> = (0..50)
            .map(|_| vec![rng.gen_range(-3.0..7.0), rng.gen_range(0.0..0.1)])
            .collect();
        let labels: Vec<[f64; 3]> =
            (0..50).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let st = fit_standardizer(&features, &labels).unwrap();
        let transformed: Vec<Vec<f64>> =
            features.iter().map(|f| st.transform_input(f)).collect();
        for d in 0..2 {
            let mean: f64 = transformed.iter().map(|f| f[d]).sum::<f64>() / 50.0;
            let var: f64 = transformed.iter().map(|f| f[d] * f[d]).sum::<f64>() / 50.0
                - mean * mean;
            assert!(mean.abs() <= 1e-10);
            assert!((var.sqrt() - 1.0).abs() <= 1e-10);
        }
        let shifted_mean: [f64; 3] = std::array::from_fn(|c| {
            labels.iter().map(|y| st.transform_label(y)[c]).sum::<f64>() / 50.0
        });
        for c in 0..3 {
            assert!(shifted_mean[c].abs() <= 1e-10);
        }
    }

    #[test]
    fn standardizer_rejects_constant_feature() {
        let features = vec![vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]];
        let labels = vec![[0.0; 3]; 3];
        assert!(matches!(
            fit_standardizer(&features, &labels),
            Err(Error::ConstantFeature(1))
        ));
    }

    #[test]
    fn gradients_match_central_differences() {
        // All four activations over several random architectures.
        let archs: Vec<(Vec<usize>, Vec<Activation>)> = vec![
            (vec![4, 6, 3], vec![Activation::Relu]),
            (vec![4, 6, 3], vec![Activation::Tanh]),
            (vec![4, 6, 3], vec![Activation::Sigmoid]),
            (vec![4, 6, 3], vec![Activation::Softplus]),
            (
                vec![5, 7, 4, 3],
                vec![Activation::Relu, Activation::Softplus],
            ),
            (
                vec![5, 4, 6, 3],
                vec![Activation::Sigmoid, Activation::Tanh],
            ),
            (
                vec![3, 8, 8, 3],
                vec![Activation::Tanh, Activation::Relu],
            ),
            (
                vec![6, 5, 5, 3],
                vec![Activation::Softplus, Activation::Sigmoid],
            ),
            (
                vec![2, 9, 3],
                vec![Activation::Softplus],
            ),
            (
                vec![7, 6, 5, 3],
                vec![Activation::Relu, Activation::Tanh],
            ),
        ];
        for (k, (arch, acts)) in archs.iter().enumerate() {
            let mut net = random_net(arch, acts, 100 + k as u64);
            let mut rng = crate::rng::master_rng(200 + k as u64);
            use rand::Rng;
            let x = DMatrix::from_fn(arch[0], 5, |_, _| rng.gen_range(-1.0..1.0));
            let y = DMatrix::from_fn(3, 5, |_, _| rng.gen_range(-1.0..1.0));
            let (grad_w, grad_b, _) = net.gradients(&x, &y);

            let h = 1e-6;
            for l in 0..net.weights.len() {
                for idx in 0..net.weights[l].len() {
                    let orig = net.weights[l].as_slice()[idx];
                    net.weights[l].as_mut_slice()[idx] = orig + h;
                    let up = net.mse(&x, &y);
                    net.weights[l].as_mut_slice()[idx] = orig - h;
                    let down = net.mse(&x, &y);
                    net.weights[l].as_mut_slice()[idx] = orig;
                    let numeric = (up - down) / (2.0 * h);
                    let analytic = grad_w[l].as_slice()[idx];
                    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
                    assert!(
                        (analytic - numeric).abs() / denom < 1e-5,
                        "arch {k} layer {l} w[{idx}]: {analytic} vs {numeric}"
                    );
                }
                for idx in 0..net.biases[l].len() {
                    let orig = net.biases[l][idx];
                    net.biases[l][idx] = orig + h;
                    let up = net.mse(&x, &y);
                    net.biases[l][idx] = orig - h;
                    let down = net.mse(&x, &y);
                    net.biases[l][idx] = orig;
                    let numeric = (up - down) / (2.0 * h);
                    let analytic = grad_b[l][idx];
                    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
                    assert!(
                        (analytic - numeric).abs() / denom < 1e-5,
                        "arch {k} layer {l} b[{idx}]: {analytic} vs {numeric}"
                    );
                }
            }
        }
    }

    fn linear_synthetic(
        n: usize,
        dim: usize,
        seed: u64,
    ) -> (Vec<Vec<f64>>, Vec<[f64; 3]>) {
        let mut rng = crate::rng::master_rng(seed);
        use rand::Rng;
        let coeff: Vec<[f64; 3]> = (0..dim)
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let mut features = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut y = [0.1, -0.2, 0.3];
            for (xi, c) in x.iter().zip(&coeff) {
                for k in 0..3 {
                    y[k] += xi * c[k];
                }
            }
            features.push(x);
            labels.push(y);
        }
        (features, labels)
    }

    #[test]
    fn learns_noiseless_linear_target() {
        let (features, labels) = linear_synthetic(300, 4, 11);
        let config = TrainConfig {
            hidden_layers: vec![16],
            activations: vec![Activation::Relu],
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 2_000,
            n_train: 200,
            n_val: 100,
            restarts: 2,
            seed: 5,
        };
        let result = train(&features, &labels, &config, "rbhash").unwrap();
        // Validation MSE relative to label variance.
        let label_var: f64 = {
            let all: Vec<f64> = labels.iter().flatten().copied().collect();
            let mean = all.iter().sum::<f64>() / all.len() as f64;
            all.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / all.len() as f64
        };
        let rel = result.model.meta().best_val_mse / label_var;
        assert!(rel <= 1e-3, "relative val MSE {rel}");
        // Early-stop dominance.
        assert!(result.model.meta().best_val_mse <= result.model.meta().final_val_mse);
        let min_val = result.val_curve.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((result.model.meta().best_val_mse - min_val).abs() < 1e-15);
    }

    #[test]
    fn constant_labels_are_learned_exactly() {
        let mut rng = crate::rng::master_rng(13);
        use rand::Rng;
        let features: Vec<Vec<f64>> = (0..60)
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let labels = vec![[0.7, 0.5, -0.1]; 60];
        let config = TrainConfig {
            hidden_layers: vec![6],
            activations: vec![Activation::Tanh],
            learning_rate: 1e-3,
            batch_size: 16,
            max_epochs: 3_000,
            n_train: 40,
            n_val: 20,
            restarts: 1,
            seed: 2,
        };
        let result = train(&features, &labels, &config, "rbhash").unwrap();
        assert!(
            result.model.meta().best_val_mse < 1e-6,
            "val mse {}",
            result.model.meta().best_val_mse
        );
        let pred = result.model.predict_features(&features[0]).unwrap();
        for c in 0..3 {
            assert!((pred.0[c] - labels[0][c]).abs() < 1e-3);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (features, labels) = linear_synthetic(120, 3, 17);
        let config = TrainConfig {
            hidden_layers: vec![8],
            activations: vec![Activation::Softplus],
            learning_rate: 1e-3,
            batch_size: 16,
            max_epochs: 50,
            n_train: 80,
            n_val: 40,
            restarts: 2,
            seed: 9,
        };
        let a = train(&features, &labels, &config, "rb").unwrap();
        let b = train(&features, &labels, &config, "rb").unwrap();
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        a.model.write(&mut buf_a, "cfg").unwrap();
        b.model.write(&mut buf_b, "cfg").unwrap();
        assert_eq!(buf_a, buf_b);
        assert_eq!(a.val_curve, b.val_curve);
    }

    #[test]
    fn model_roundtrip_is_bit_exact() {
        let (features, labels) = linear_synthetic(60, 2, 19);
        let config = TrainConfig {
            hidden_layers: vec![5, 4],
            activations: vec![Activation::Relu, Activation::Sigmoid],
            learning_rate: 1e-3,
            batch_size: 8,
            max_epochs: 20,
            n_train: 40,
            n_val: 20,
            restarts: 1,
            seed: 21,
        };
        let result = train(&features, &labels, &config, "rbhash123").unwrap();
        let mut buf = Vec::new();
        result.model.write(&mut buf, "cfghash").unwrap();
        let (back, hash) = MlpModel::read(&mut buf.as_slice()).unwrap();
        assert_eq!(hash, "cfghash");
        assert_eq!(back, result.model);
        assert_eq!(back.rb_hash(), "rbhash123");
        // Predictions agree bit for bit.
        let p1 = result.model.predict_features(&features[0]).unwrap();
        let p2 = back.predict_features(&features[0]).unwrap();
        assert_eq!(p1.0, p2.0);
    }

    #[test]
    fn diverged_training_is_reported() {
        let (features, labels) = linear_synthetic(60, 2, 23);
        // Absurd learning rate on a steep activation blows the loss up.
        let config = TrainConfig {
            hidden_layers: vec![8],
            activations: vec![Activation::Relu],
            learning_rate: 1e200,
            batch_size: 8,
            max_epochs: 50,
            n_train: 40,
            n_val: 20,
            restarts: 1,
            seed: 3,
        };
        match train(&features, &labels, &config, "rb") {
            Err(Error::Diverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn feature_extraction_matches_pipeline_invariants() {
        use crate::microgen::{generate, ClassSpec, Morphology};
        let class = ClassSpec::new(24, Morphology::Circle);
        let imgs: Vec<_> = (0..12)
            .map(|i| generate(&class.instantiate(401, i)).unwrap())
            .collect();
        let snaps: Vec<Vec<f64>> = imgs
            .iter()
            .map(|im| correlation::snapshot(im).unwrap().into_values())
            .collect();
        let rb = crate::podrb::batch_pod_svd(&crate::podrb::snapshot_matrix(&snaps), 0.0).unwrap();
        let h = rb.mode_count().min(4);

        // Translated image produces identical features.
        let xi = extract_features(&rb, &imgs[0], h).unwrap();
        let xi_shift = extract_features(&rb, &imgs[0].translated(5, -9), h).unwrap();
        assert_eq!(xi, xi_shift);
        assert_eq!(xi[0], imgs[0].volume_fraction());

        // All-matrix image maps to the zero feature vector.
        let blank = MicrostructureImage::from_fn(24, |_, _| false);
        let xi0 = extract_features(&rb, &blank, h).unwrap();
        assert!(xi0.iter().all(|&v| v == 0.0));

        // In-span snapshot: coefficient norm equals snapshot norm when all
        // modes are kept.
        let full = rb.mode_count();
        let xi_full = extract_features(&rb, &imgs[1], full).unwrap();
        let coeff_norm: f64 = xi_full[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
        let snap_norm: f64 = snaps[1].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((coeff_norm - snap_norm).abs() < 1e-8 * snap_norm.max(1.0));

        // Requesting more coefficients than modes fails.
        assert!(matches!(
            extract_features(&rb, &imgs[0], full + 1),
            Err(Error::HTooLarge { .. })
        ));
    }

    #[test]
    fn evaluate_perfect_predictions_are_zero_error() {
        let (features, labels) = linear_synthetic(80, 3, 29);
        let config = TrainConfig {
            hidden_layers: vec![12],
            activations: vec![Activation::Tanh],
            learning_rate: 2e-3,
            batch_size: 16,
            max_epochs: 1500,
            n_train: 60,
            n_val: 20,
            restarts: 1,
            seed: 31,
        };
        let result = train(&features, &labels, &config, "rb").unwrap();
        // Evaluating against the model's own predictions gives zero error.
        let self_labels: Vec<[f64; 3]> = features
            .iter()
            .map(|f| result.model.predict_features(f).unwrap().0)
            .collect();
        let report = evaluate(&result.model, &features, &self_labels).unwrap();
        assert_eq!(report.mae, [0.0, 0.0, 0.0]);
        assert_eq!(report.mean_rel, [0.0, 0.0]);
        assert_eq!(report.n_samples, 80);
        // Histogram counts cover every sample.
        for hist in &report.histograms {
            assert_eq!(hist.counts.iter().sum::<u64>(), 80);
        }
    }
}
