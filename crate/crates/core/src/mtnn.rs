//! Multi-task feedforward network with a masked cross-entropy objective.
//!
//! ReLU hidden layers feed one sigmoid unit per task. Missing labels are
//! masked out of the loss and of the output δ. Training is plain minibatch
//! SGD with L2 weight decay, optional inverted dropout and early stopping on
//! the mean validation AUC.
//!
//! The dense kernels below accumulate every sum in a fixed sequential order
//! (over input units for activations, over samples for weight gradients), so
//! results do not depend on the batch composition or thread count.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{dense_batch, DatasetError, LabelMatrix, SparseFeatureMatrix};
use crate::evaluation::{mean_auc, task_scores};
use crate::Scalar;

pub const SIGMOID_EPS: f64 = 1e-7;
pub const DEFAULT_BATCH: usize = 512;
pub const DEFAULT_MAX_EPOCHS: usize = 200;
pub const DEFAULT_PATIENCE: usize = 10;
/// Rows per chunk when predicting.
pub const PREDICT_CHUNK: usize = 1024;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("layer specification needs an input and an output width, all positive: {0:?}")]
    EmptyLayerSpec(Vec<usize>),
    #[error("input has {found} columns, network expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("activations or gradients do not match the network shape")]
    StaleActivations,
    #[error("no training rows")]
    EmptyTrainingSet,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<F> {
    layer_dims: Vec<usize>,
    /// Layer `l` maps `layer_dims[l]` inputs to `layer_dims[l + 1]` outputs
    /// and is stored as an out × in matrix.
    weights: Vec<Array2<F>>,
    biases: Vec<Array1<F>>,
}

fn check_dims(layer_dims: &[usize]) -> Result<(), TrainError> {
    if layer_dims.len() < 2 || layer_dims.contains(&0) {
        return Err(TrainError::EmptyLayerSpec(layer_dims.to_vec()));
    }
    Ok(())
}

impl<F: Scalar> Network<F> {
    /// All-zero parameters.
    pub fn zeros(layer_dims: &[usize]) -> Result<Self, TrainError> {
        check_dims(layer_dims)?;
        let weights = layer_dims.windows(2).map(|w| Array2::zeros((w[1], w[0]))).collect();
        let biases = layer_dims[1..].iter().map(|&o| Array1::zeros(o)).collect();
        Ok(Network { layer_dims: layer_dims.to_vec(), weights, biases })
    }

    pub fn from_parts(weights: Vec<Array2<F>>, biases: Vec<Array1<F>>) -> Result<Self, TrainError> {
        let Some(first) = weights.first() else {
            return Err(TrainError::EmptyLayerSpec(Vec::new()));
        };
        let mut dims = vec![first.ncols()];
        for (w, b) in weights.iter().zip(&biases) {
            if w.ncols() != *dims.last().unwrap() || b.len() != w.nrows() {
                return Err(TrainError::StaleActivations);
            }
            dims.push(w.nrows());
        }
        if biases.len() != weights.len() {
            return Err(TrainError::StaleActivations);
        }
        check_dims(&dims)?;
        Ok(Network {
            layer_dims: dims,
            weights: weights.into_iter().map(|w| w.as_standard_layout().into_owned()).collect(),
            biases,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn n_inputs(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn n_tasks(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn n_hidden_layers(&self) -> usize {
        self.layer_dims.len() - 2
    }

    pub fn weights(&self) -> &[Array2<F>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<F>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<F>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<F>] {
        &mut self.biases
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Keep only the output units listed in `tasks`, in that order.
    pub fn select_outputs(&self, tasks: &[usize]) -> Self {
        let mut net = self.clone();
        let last = self.weights.len() - 1;
        net.weights[last] = self.weights[last].select(ndarray::Axis(0), tasks);
        net.biases[last] = self.biases[last].select(ndarray::Axis(0), tasks);
        *net.layer_dims.last_mut().unwrap() = tasks.len();
        net
    }
}

/// Uniform fan-based initialization: layer weights in ±√(6 / (fan_in + fan_out)),
/// zero biases. Draws are made in `f64` from ChaCha8 seeded with `seed`,
/// layer by layer in row-major order, so both precisions see the same values.
pub fn init_network<F: Scalar>(layer_dims: &[usize], seed: u64) -> Result<Network<F>, TrainError> {
    let mut net = Network::zeros(layer_dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for w in &mut net.weights {
        let (fan_out, fan_in) = w.dim();
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for v in w.iter_mut() {
            *v = F::of((2.0 * rng.random::<f64>() - 1.0) * limit);
        }
    }
    Ok(net)
}

/// Keep probabilities for inverted dropout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dropout {
    pub input_keep: f64,
    pub hidden_keep: f64,
}

impl Default for Dropout {
    fn default() -> Self {
        Dropout { input_keep: 0.8, hidden_keep: 0.5 }
    }
}

pub enum ForwardMode<'a> {
    Inference,
    /// Training pass; with `dropout` set, kept units are scaled by 1/keep.
    Train { dropout: Option<Dropout>, rng: &'a mut ChaCha8Rng },
}

/// Everything `backward` needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Activations<F> {
    /// `inputs[l]` is what layer `l` consumed (after dropout); `inputs[0]` is
    /// the batch itself or its dropped-out copy.
    pub inputs: Vec<Array2<F>>,
    /// Pre-activations of every layer.
    pub pre: Vec<Array2<F>>,
    /// Dropout scale masks matching `inputs` (entries 0 or 1/keep).
    pub masks: Vec<Option<Array2<F>>>,
    /// Sigmoid outputs, n × T.
    pub output: Array2<F>,
}

impl<F: Scalar> Activations<F> {
    /// Post-ReLU activations of hidden layer `h` (0-based), before dropout.
    pub fn hidden(&self, h: usize) -> Array2<F> {
        self.pre[h].mapv(relu)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub weights: Vec<Array2<F>>,
    pub biases: Vec<Array1<F>>,
}

fn relu<F: Scalar>(x: F) -> F {
    if x > F::zero() {
        x
    } else {
        F::zero()
    }
}

fn sigmoid<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

fn std_slice<F>(a: &Array2<F>) -> &[F] {
    a.as_slice().expect("standard layout")
}

/// z[i][o] = b[o] + Σ_k a[i][k] · w[o][k], summed in ascending k.
fn affine<F: Scalar>(a: &Array2<F>, w: &Array2<F>, b: &Array1<F>) -> Array2<F> {
    let (n, d_in) = a.dim();
    let d_out = w.nrows();
    let (a_s, w_s) = (std_slice(a), std_slice(w));
    let mut z = vec![F::zero(); n * d_out];
    z.par_chunks_mut(d_out.max(1)).enumerate().for_each(|(i, row)| {
        let x = &a_s[i * d_in..(i + 1) * d_in];
        let nz = nonzeros(x);
        for (o, out) in row.iter_mut().enumerate() {
            let wr = &w_s[o * d_in..(o + 1) * d_in];
            let mut acc = b[o];
            for &k in &nz {
                acc = acc + x[k] * wr[k];
            }
            *out = acc;
        }
    });
    Array2::from_shape_vec((n, d_out), z).unwrap()
}

/// Column indices of the nonzero entries; zero terms are skipped in sums.
fn nonzeros<F: Scalar>(x: &[F]) -> Vec<usize> {
    (0..x.len()).filter(|&k| x[k] != F::zero()).collect()
}

/// g[o][k] = Σ_i δ[i][o] · a[i][k], summed in ascending i.
fn weight_grad<F: Scalar>(delta: &Array2<F>, a: &Array2<F>) -> Array2<F> {
    let (n, d_out) = delta.dim();
    let d_in = a.ncols();
    let (d_s, a_s) = (std_slice(delta), std_slice(a));
    let nz: Vec<Vec<usize>> = (0..n).map(|i| nonzeros(&a_s[i * d_in..(i + 1) * d_in])).collect();
    let mut g = vec![F::zero(); d_out * d_in];
    g.par_chunks_mut(d_in.max(1)).enumerate().for_each(|(o, row)| {
        for i in 0..n {
            let d = d_s[i * d_out + o];
            if d == F::zero() {
                continue;
            }
            let x = &a_s[i * d_in..(i + 1) * d_in];
            for &k in &nz[i] {
                row[k] = row[k] + d * x[k];
            }
        }
    });
    Array2::from_shape_vec((d_out, d_in), g).unwrap()
}

/// e[i][k] = Σ_o δ[i][o] · w[o][k], summed in ascending o.
fn back_signal<F: Scalar>(delta: &Array2<F>, w: &Array2<F>) -> Array2<F> {
    let (n, d_out) = delta.dim();
    let d_in = w.ncols();
    let (d_s, w_s) = (std_slice(delta), std_slice(w));
    let mut e = vec![F::zero(); n * d_in];
    e.par_chunks_mut(d_in.max(1)).enumerate().for_each(|(i, row)| {
        for o in 0..d_out {
            let d = d_s[i * d_out + o];
            if d == F::zero() {
                continue;
            }
            let wr = &w_s[o * d_in..(o + 1) * d_in];
            for k in 0..d_in {
                row[k] = row[k] + d * wr[k];
            }
        }
    });
    Array2::from_shape_vec((n, d_in), e).unwrap()
}

fn dropout_mask<F: Scalar>(shape: (usize, usize), keep: f64, rng: &mut ChaCha8Rng) -> Array2<F> {
    let scale = F::of(1.0 / keep);
    Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < keep { scale } else { F::zero() })
}

pub fn forward<F: Scalar>(net: &Network<F>, batch: &Array2<F>, mode: ForwardMode<'_>) -> Result<Activations<F>, TrainError> {
    if batch.ncols() != net.n_inputs() {
        return Err(TrainError::DimensionMismatch { expected: net.n_inputs(), found: batch.ncols() });
    }
    let (dropout, mut rng) = match mode {
        ForwardMode::Inference => (None, None),
        ForwardMode::Train { dropout, rng } => (dropout, Some(rng)),
    };
    let n_layers = net.weights.len();
    let mut inputs = Vec::with_capacity(n_layers);
    let mut pre = Vec::with_capacity(n_layers);
    let mut masks = Vec::with_capacity(n_layers);
    let mut current = batch.as_standard_layout().into_owned();
    for l in 0..n_layers {
        let keep = dropout.map(|d| if l == 0 { d.input_keep } else { d.hidden_keep });
        let mask = match (keep, rng.as_deref_mut()) {
            (Some(p), Some(r)) if p < 1.0 => Some(dropout_mask::<F>(current.dim(), p, r)),
            _ => None,
        };
        if let Some(m) = &mask {
            current = &current * m;
        }
        let z = affine(&current, &net.weights[l], &net.biases[l]);
        let next = if l + 1 == n_layers { z.mapv(sigmoid) } else { z.mapv(relu) };
        inputs.push(current);
        pre.push(z);
        masks.push(mask);
        current = next;
    }
    Ok(Activations { inputs, pre, masks, output: current })
}

/// Mean cross-entropy over labeled entries (accumulated in `f64`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskedLoss {
    pub value: f64,
    pub labeled: usize,
}

impl MaskedLoss {
    /// Set when every mask entry was zero; `value` is then 0.
    pub fn no_labeled_entries(&self) -> bool {
        self.labeled == 0
    }
}

pub fn masked_loss<F: Scalar>(outputs: &Array2<F>, targets: &Array2<F>, mask: &Array2<F>) -> MaskedLoss {
    assert_eq!(outputs.dim(), targets.dim());
    assert_eq!(outputs.dim(), mask.dim());
    let mut total = 0.0f64;
    let mut labeled = 0usize;
    for ((p, y), m) in outputs.iter().zip(targets).zip(mask) {
        if *m == F::zero() {
            continue;
        }
        let p = p.as_f64().clamp(SIGMOID_EPS, 1.0 - SIGMOID_EPS);
        let y = y.as_f64();
        total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        labeled += 1;
    }
    MaskedLoss { value: if labeled == 0 { 0.0 } else { total / labeled as f64 }, labeled }
}

/// Gradients of [`masked_loss`] (without the clamp) with respect to every
/// parameter. Output δ is m·(σ − y) / (labeled entries).
pub fn backward<F: Scalar>(
    net: &Network<F>,
    acts: &Activations<F>,
    targets: &Array2<F>,
    mask: &Array2<F>,
) -> Result<Gradients<F>, TrainError> {
    let n_layers = net.weights.len();
    if acts.inputs.len() != n_layers
        || acts.pre.len() != n_layers
        || acts.masks.len() != n_layers
        || acts.output.dim() != targets.dim()
        || mask.dim() != targets.dim()
        || acts.output.ncols() != net.n_tasks()
        || (0..n_layers).any(|l| acts.inputs[l].ncols() != net.layer_dims[l] || acts.pre[l].ncols() != net.layer_dims[l + 1])
    {
        return Err(TrainError::StaleActivations);
    }
    let labeled = mask.iter().filter(|m| **m != F::zero()).count();
    let mut g_w: Vec<Array2<F>> = net.weights.iter().map(|w| Array2::zeros(w.dim())).collect();
    let mut g_b: Vec<Array1<F>> = net.biases.iter().map(|b| Array1::zeros(b.len())).collect();
    if labeled == 0 {
        return Ok(Gradients { weights: g_w, biases: g_b });
    }
    let scale = F::of(1.0 / labeled as f64);
    let mut delta = Array2::zeros(acts.output.dim());
    ndarray::Zip::from(&mut delta).and(&acts.output).and(targets).and(mask).for_each(|d, &p, &y, &m| {
        *d = if m == F::zero() { F::zero() } else { m * (p - y) * scale };
    });
    for l in (0..n_layers).rev() {
        g_w[l] = weight_grad(&delta, &acts.inputs[l]);
        let mut gb = Array1::zeros(delta.ncols());
        for row in delta.rows() {
            for (acc, &d) in gb.iter_mut().zip(row) {
                *acc = *acc + d;
            }
        }
        g_b[l] = gb;
        if l == 0 {
            break;
        }
        let mut e = back_signal(&delta, &net.weights[l]);
        if let Some(m) = &acts.masks[l] {
            e = &e * m;
        }
        ndarray::Zip::from(&mut e).and(&acts.pre[l - 1]).for_each(|v, &z| {
            if z <= F::zero() {
                *v = F::zero();
            }
        });
        delta = e;
    }
    Ok(Gradients { weights: g_w, biases: g_b })
}

/// w ← w − lr · (g + l2 · w); biases get no decay.
pub fn sgd_step<F: Scalar>(net: &mut Network<F>, grads: &Gradients<F>, learning_rate: f64, l2: f64) {
    let (lr, decay) = (F::of(learning_rate), F::of(l2));
    for (w, g) in net.weights.iter_mut().zip(&grads.weights) {
        ndarray::Zip::from(w).and(g).for_each(|w, &g| *w = *w - lr * (g + decay * *w));
    }
    for (b, g) in net.biases.iter_mut().zip(&grads.biases) {
        ndarray::Zip::from(b).and(g).for_each(|b, &g| *b = *b - lr * g);
    }
}

/// Hidden layer widths; input and output widths come from the data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub hidden: Vec<usize>,
}

impl NetSpec {
    pub fn new(hidden: &[usize]) -> Self {
        NetSpec { hidden: hidden.to_vec() }
    }

    pub fn layer_dims(&self, n_inputs: usize, n_tasks: usize) -> Vec<usize> {
        let mut dims = vec![n_inputs];
        dims.extend(&self.hidden);
        dims.push(n_tasks);
        dims
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2: f64,
    pub dropout: Option<Dropout>,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without improvement of the validation metric before stopping;
    /// `None` trains for `max_epochs`.
    pub patience: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            l2: 0.0,
            dropout: None,
            batch_size: DEFAULT_BATCH,
            max_epochs: DEFAULT_MAX_EPOCHS,
            patience: Some(DEFAULT_PATIENCE),
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if let Some(d) = self.dropout {
            if !(d.input_keep > 0.0 && d.input_keep <= 1.0 && d.hidden_keep > 0.0 && d.hidden_keep <= 1.0) {
                return bad("keep probabilities must lie in (0, 1]");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean masked loss over all labeled entries seen in the epoch.
    pub train_loss: f64,
    /// Mean validation AUC; `None` when no task has both classes.
    pub valid_metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub stopped_epoch: usize,
    /// Epoch of the returned snapshot; 0 means the initial network.
    pub best_epoch: usize,
    pub best_metric: Option<f64>,
}

impl TrainHistory {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.train_loss).collect()
    }
}

/// Train a fresh network on `train_rows`, monitoring mean AUC on `valid_rows`.
///
/// The network is initialized from `config.seed`; row shuffling and dropout
/// use stream 1 of the same ChaCha8 seed. The last short batch of each
/// epoch is kept; batches with no labeled entry are skipped. With early
/// stopping the returned network is the snapshot with the best validation
/// metric (the last epoch when the metric is never defined); without it,
/// the network after the final epoch.
pub fn train<F: Scalar>(
    features: &SparseFeatureMatrix<F>,
    labels: &LabelMatrix,
    train_rows: &[usize],
    valid_rows: &[usize],
    spec: &NetSpec,
    config: &TrainConfig,
) -> Result<(Network<F>, TrainHistory), TrainError> {
    let dims = spec.layer_dims(features.n_cols(), labels.n_tasks());
    let net = init_network(&dims, config.seed)?;
    train_from(net, features, labels, train_rows, valid_rows, config)
}

/// As [`train`], starting from the given network.
pub fn train_from<F: Scalar>(
    mut net: Network<F>,
    features: &SparseFeatureMatrix<F>,
    labels: &LabelMatrix,
    train_rows: &[usize],
    valid_rows: &[usize],
    config: &TrainConfig,
) -> Result<(Network<F>, TrainHistory), TrainError> {
    config.validate()?;
    if train_rows.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    if features.n_cols() != net.n_inputs() {
        return Err(TrainError::DimensionMismatch { expected: net.n_inputs(), found: features.n_cols() });
    }
    if labels.n_tasks() != net.n_tasks() || labels.n_rows() != features.n_rows() {
        return Err(TrainError::StaleActivations);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order = train_rows.to_vec();
    let mut history = TrainHistory::default();
    let mut best = net.clone();
    let mut since_best = 0usize;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut labeled) = (0.0f64, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let x = dense_batch(features, chunk)?;
            let (y, m) = labels.batch::<F>(chunk);
            let acts = forward(&net, &x, ForwardMode::Train { dropout: config.dropout, rng: &mut rng })?;
            let loss = masked_loss(&acts.output, &y, &m);
            if loss.no_labeled_entries() {
                continue;
            }
            loss_sum += loss.value * loss.labeled as f64;
            labeled += loss.labeled;
            let grads = backward(&net, &acts, &y, &m)?;
            sgd_step(&mut net, &grads, config.learning_rate, config.l2);
        }
        let metric = if valid_rows.is_empty() {
            None
        } else {
            let probs = predict_rows(&net, features, valid_rows)?;
            mean_auc(&task_scores(&probs, labels, valid_rows))
        };
        history.records.push(EpochRecord {
            epoch,
            train_loss: if labeled == 0 { 0.0 } else { loss_sum / labeled as f64 },
            valid_metric: metric,
        });
        history.stopped_epoch = epoch;
        match (metric, history.best_metric) {
            (Some(v), Some(b)) if v <= b => since_best += 1,
            (Some(v), _) => {
                history.best_metric = Some(v);
                history.best_epoch = epoch;
                best = net.clone();
                since_best = 0;
            }
            (None, None) => {
                history.best_epoch = epoch;
                best = net.clone();
            }
            (None, Some(_)) => since_best += 1,
        }
        if config.patience.is_some_and(|p| since_best >= p) {
            break;
        }
    }
    if config.patience.is_none() || config.max_epochs == 0 {
        history.best_epoch = history.stopped_epoch;
        history.best_metric = history.records.last().and_then(|r| r.valid_metric);
        best = net;
    }
    Ok((best, history))
}

/// Inference-mode probabilities for every row of `features`.
pub fn predict<F: Scalar>(net: &Network<F>, features: &SparseFeatureMatrix<F>) -> Result<Array2<F>, TrainError> {
    let rows: Vec<usize> = (0..features.n_rows()).collect();
    predict_rows(net, features, &rows)
}

/// Inference-mode probabilities for `rows`, one output row per entry.
pub fn predict_rows<F: Scalar>(
    net: &Network<F>,
    features: &SparseFeatureMatrix<F>,
    rows: &[usize],
) -> Result<Array2<F>, TrainError> {
    if features.n_cols() != net.n_inputs() {
        return Err(TrainError::DimensionMismatch { expected: net.n_inputs(), found: features.n_cols() });
    }
    let mut out = Array2::zeros((rows.len(), net.n_tasks()));
    for (c, chunk) in rows.chunks(PREDICT_CHUNK).enumerate() {
        let x = dense_batch(features, chunk)?;
        let acts = forward(net, &x, ForwardMode::Inference)?;
        out.slice_mut(ndarray::s![c * PREDICT_CHUNK..c * PREDICT_CHUNK + chunk.len(), ..]).assign(&acts.output);
    }
    Ok(out)
}
