//! Fully-connected closure head with native forward and backward passes.
//!
//! The network maps the resolved moments `m_0..m_N` to four raw outputs
//! `(M_1, M_2, M_3, M_4)`. In constrained mode those pass through
//! [`crate::closure::hyperbolic_postprocess`] before entering the gradient
//! ansatz; backpropagation runs exactly through that layer. The
//! unconstrained head uses the raw outputs directly as coefficients and
//! exists only for the blow-up comparison experiments.
//!
//! Training minimizes the relative squared error of the reconstructed
//! top-moment gradient, `mean[(pred - target)^2 / (1e-6 + target^2)]`,
//! with Adam. Everything is deterministic in the seed.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::closure::{
    hyperbolic_postprocess_with_jacobian, Closure, ClosureCoefficients, SigmaFn,
};
use crate::hyperbolicity::constraint_check_h;
use crate::kinetic::Dataset;
use crate::momsolver::MomentField;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset order {found} does not match the model order {expected}")]
    OrderMismatch { expected: usize, found: usize },
    #[error("loss became non-finite at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("constraint layer produced an inadmissible coefficient set at step {step}")]
    ConstraintViolation { step: usize },
}

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("unsupported model format version {0}")]
    Version(u32),
}

/// Weights, biases, and input statistics of the closure head.
///
/// Hidden layers use tanh; the output layer is linear. `input_scale`
/// entries are strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub format_version: u32,
    pub layer_dims: Vec<usize>,
    /// Row-major `out_dim x in_dim` per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub n_order: usize,
    pub k_dof: usize,
    pub sigma_fn: SigmaFn,
    pub seed: u64,
}

impl MlpModel {
    /// Seeded Glorot-uniform initialization; input statistics start at
    /// identity and are filled in by training.
    pub fn new_random(
        n_order: usize,
        hidden_layers: usize,
        width: usize,
        seed: u64,
        sigma_fn: SigmaFn,
        k_dof: usize,
    ) -> Self {
        let mut dims = Vec::with_capacity(hidden_layers + 2);
        dims.push(n_order + 1);
        dims.extend(std::iter::repeat(width).take(hidden_layers));
        dims.push(4);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(
                (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-limit..=limit))
                    .collect(),
            );
            biases.push(vec![0.0; fan_out]);
        }
        Self {
            format_version: MODEL_FORMAT_VERSION,
            layer_dims: dims,
            weights,
            biases,
            input_mean: vec![0.0; n_order + 1],
            input_scale: vec![1.0; n_order + 1],
            n_order,
            k_dof,
            sigma_fn,
            seed,
        }
    }

    pub fn n_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn n_parameters(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    fn normalize_into(&self, raw: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = (raw[j] - self.input_mean[j]) / self.input_scale[j];
        }
    }

    /// Raw head outputs for one moment vector.
    pub fn forward(&self, moments: &[f64]) -> [f64; 4] {
        assert_eq!(moments.len(), self.layer_dims[0]);
        let mut x = vec![0.0; moments.len()];
        self.normalize_into(moments, &mut x);
        for l in 0..self.n_layers() {
            let (din, dout) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let mut y = vec![0.0; dout];
            for o in 0..dout {
                let row = &self.weights[l][o * din..(o + 1) * din];
                let mut acc = self.biases[l][o];
                for i in 0..din {
                    acc += row[i] * x[i];
                }
                y[o] = if l + 1 < self.n_layers() { acc.tanh() } else { acc };
            }
            x = y;
        }
        [x[0], x[1], x[2], x[3]]
    }

    pub fn save_json(&self, path: &std::path::Path) -> Result<(), ModelIoError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: &std::path::Path) -> Result<Self, ModelIoError> {
        let text = std::fs::read_to_string(path)?;
        let model: MlpModel = serde_json::from_str(&text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelIoError::Version(model.format_version));
        }
        Ok(model)
    }
}

/// Per-parameter gradient buffers matching an [`MlpModel`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    fn reset(&mut self) {
        for w in &mut self.weights {
            w.iter_mut().for_each(|x| *x = 0.0);
        }
        for b in &mut self.biases {
            b.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

/// One training batch view: raw moment inputs, the four trailing moment
/// gradients, and the top-moment gradient target.
pub struct Batch<'a> {
    pub inputs: &'a [f64],
    pub grads4: &'a [f64],
    pub targets: &'a [f64],
}

impl<'a> Batch<'a> {
    pub fn rows(&self) -> usize {
        self.targets.len()
    }
}

/// Loss floor keeping the relative normalization finite at vanishing
/// targets.
pub const LOSS_FLOOR: f64 = 1e-6;

fn head_to_coefficients(
    raw: [f64; 4],
    n_order: usize,
    k_dof: usize,
    sigma_fn: SigmaFn,
    constrained: bool,
) -> ClosureCoefficients {
    if constrained {
        match hyperbolic_postprocess_with_jacobian(raw, n_order, k_dof, sigma_fn) {
            Ok((c, _)) => c,
            Err(_) => ClosureCoefficients::new(n_order, k_dof, [f64::NAN; 4]),
        }
    } else {
        // raw outputs used directly, in the same slot layout as the
        // constrained head: (M_1, M_2, M_3, M_4) -> (𝒩_{N-1}, 𝒩_{N-2},
        // 𝒩_{N-3}, 𝒩_N)
        ClosureCoefficients::new(n_order, k_dof, [raw[2], raw[1], raw[0], raw[3]])
    }
}

/// Forward pass over a whole batch with cached activations.
struct ForwardCache {
    /// `acts[0]` is the normalized input; `acts[l+1]` the output of layer l.
    acts: Vec<Vec<f64>>,
}

fn forward_batch(model: &MlpModel, inputs: &[f64], rows: usize) -> ForwardCache {
    let dims = &model.layer_dims;
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(dims.len());
    let mut x0 = vec![0.0; rows * dims[0]];
    for r in 0..rows {
        let raw = &inputs[r * dims[0]..(r + 1) * dims[0]];
        for j in 0..dims[0] {
            x0[r * dims[0] + j] = (raw[j] - model.input_mean[j]) / model.input_scale[j];
        }
    }
    acts.push(x0);
    for l in 0..model.n_layers() {
        let (din, dout) = (dims[l], dims[l + 1]);
        let last = l + 1 == model.n_layers();
        let mut y = vec![0.0; rows * dout];
        let x = &acts[l];
        for r in 0..rows {
            let xr = &x[r * din..(r + 1) * din];
            let yr = &mut y[r * dout..(r + 1) * dout];
            for o in 0..dout {
                let row = &model.weights[l][o * din..(o + 1) * din];
                let mut acc = model.biases[l][o];
                for i in 0..din {
                    acc += row[i] * xr[i];
                }
                yr[o] = if last { acc } else { acc.tanh() };
            }
        }
        acts.push(y);
    }
    ForwardCache { acts }
}

/// Mean relative squared error of the reconstructed top gradient.
pub fn loss(model: &MlpModel, batch: &Batch, constrained: bool) -> f64 {
    let rows = batch.rows();
    if rows == 0 {
        return 0.0;
    }
    let cache = forward_batch(model, batch.inputs, rows);
    let outputs = cache.acts.last().unwrap();
    let mut total = 0.0;
    for r in 0..rows {
        let raw = [
            outputs[r * 4],
            outputs[r * 4 + 1],
            outputs[r * 4 + 2],
            outputs[r * 4 + 3],
        ];
        let c = head_to_coefficients(raw, model.n_order, model.k_dof, model.sigma_fn, constrained);
        let g = &batch.grads4[r * 4..(r + 1) * 4];
        let pred = crate::closure::evaluate_closure_gradient(&c, [g[0], g[1], g[2], g[3]]);
        let t = batch.targets[r];
        let res = pred - t;
        total += res * res / (LOSS_FLOOR + t * t);
    }
    total / rows as f64
}

/// Loss plus exact parameter gradients (reverse mode through the
/// constraint layer and the network). Returns the batch loss.
pub fn loss_and_backward(
    model: &MlpModel,
    batch: &Batch,
    constrained: bool,
    grads: &mut Gradients,
) -> f64 {
    grads.reset();
    let rows = batch.rows();
    if rows == 0 {
        return 0.0;
    }
    let dims = &model.layer_dims;
    let cache = forward_batch(model, batch.inputs, rows);
    let outputs = cache.acts.last().unwrap();

    let mut total = 0.0;
    // dL/d(raw head outputs), batch x 4
    let mut delta = vec![0.0; rows * 4];
    for r in 0..rows {
        let raw = [
            outputs[r * 4],
            outputs[r * 4 + 1],
            outputs[r * 4 + 2],
            outputs[r * 4 + 3],
        ];
        let g = &batch.grads4[r * 4..(r + 1) * 4];
        let t = batch.targets[r];
        let denom = LOSS_FLOOR + t * t;

        if constrained {
            let (c, jac) =
                match hyperbolic_postprocess_with_jacobian(raw, model.n_order, model.k_dof, model.sigma_fn) {
                    Ok(v) => v,
                    Err(_) => {
                        total = f64::NAN;
                        break;
                    }
                };
            let pred =
                crate::closure::evaluate_closure_gradient(&c, [g[0], g[1], g[2], g[3]]);
            let res = pred - t;
            total += res * res / denom;
            let dpred = 2.0 * res / denom / rows as f64;
            // dL/dM_j = dpred * Σ_slot g_slot * d𝒩_slot/dM_j
            for mj in 0..4 {
                let mut acc = 0.0;
                for slot in 0..4 {
                    acc += g[slot] * jac[slot][mj];
                }
                delta[r * 4 + mj] = dpred * acc;
            }
        } else {
            let c = head_to_coefficients(raw, model.n_order, model.k_dof, model.sigma_fn, false);
            let pred =
                crate::closure::evaluate_closure_gradient(&c, [g[0], g[1], g[2], g[3]]);
            let res = pred - t;
            total += res * res / denom;
            let dpred = 2.0 * res / denom / rows as f64;
            // slots (nm3, nm2, nm1, ntop) read raw (M3, M2, M1, M4)
            delta[r * 4] = dpred * g[2];
            delta[r * 4 + 1] = dpred * g[1];
            delta[r * 4 + 2] = dpred * g[0];
            delta[r * 4 + 3] = dpred * g[3];
        }
    }

    // backward through the layers
    let mut delta_cur = delta;
    for l in (0..model.n_layers()).rev() {
        let (din, dout) = (dims[l], dims[l + 1]);
        let last = l + 1 == model.n_layers();
        let x = &cache.acts[l];
        let y = &cache.acts[l + 1];
        if !last {
            for r in 0..rows {
                for o in 0..dout {
                    let a = y[r * dout + o];
                    delta_cur[r * dout + o] *= 1.0 - a * a;
                }
            }
        }
        let dw = &mut grads.weights[l];
        let db = &mut grads.biases[l];
        for r in 0..rows {
            let dr = &delta_cur[r * dout..(r + 1) * dout];
            let xr = &x[r * din..(r + 1) * din];
            for o in 0..dout {
                let d = dr[o];
                if d == 0.0 {
                    continue;
                }
                db[o] += d;
                let row = &mut dw[o * din..(o + 1) * din];
                for i in 0..din {
                    row[i] += d * xr[i];
                }
            }
        }
        if l > 0 {
            let mut next = vec![0.0; rows * din];
            for r in 0..rows {
                let dr = &delta_cur[r * dout..(r + 1) * dout];
                let nr = &mut next[r * din..(r + 1) * din];
                for o in 0..dout {
                    let d = dr[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &model.weights[l][o * din..(o + 1) * din];
                    for i in 0..din {
                        nr[i] += d * row[i];
                    }
                }
            }
            delta_cur = next;
        }
    }
    total / rows as f64
}

/// Per-epoch loss record.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Training hyperparameters (desk-scale defaults).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_layers: usize,
    pub width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub sigma_fn: SigmaFn,
    /// Route head outputs through the constraint layer.
    pub constrained: bool,
    /// Active trailing coefficients (4 = full ansatz).
    pub dof: usize,
    pub val_fraction: f64,
    /// Assert constraint satisfaction on the current batch this often.
    pub constraint_check_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 4,
            width: 64,
            epochs: 200,
            batch_size: 1024,
            learning_rate: 1e-3,
            seed: 0,
            sigma_fn: SigmaFn::Softplus,
            constrained: true,
            dof: 4,
            val_fraction: 0.1,
            constraint_check_every: 100,
        }
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub history: Vec<EpochStats>,
}

struct BatchBuffers {
    inputs: Vec<f64>,
    grads4: Vec<f64>,
    targets: Vec<f64>,
}

fn gather_batch(dataset: &Dataset, idx: &[usize], buf: &mut BatchBuffers) {
    let n = dataset.n_order;
    buf.inputs.clear();
    buf.grads4.clear();
    buf.targets.clear();
    for &r in idx {
        buf.inputs.extend_from_slice(dataset.moment_row(r));
        let g = dataset.gradient_row(r);
        buf.grads4.extend_from_slice(&g[n - 3..=n]);
        buf.targets.push(g[n + 1]);
    }
}

/// Train the head on the dataset; returns the best-validation model and
/// the loss history.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    let rows = dataset.rows();
    if rows == 0 {
        return Err(TrainError::EmptyDataset);
    }
    if dataset.n_order < 3 {
        return Err(TrainError::OrderMismatch {
            expected: 3,
            found: dataset.n_order,
        });
    }
    let n = dataset.n_order;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // train/validation split
    let mut order: Vec<usize> = (0..rows).collect();
    shuffle(&mut order, &mut rng);
    let n_val = ((rows as f64 * config.val_fraction).round() as usize)
        .min(rows - 1)
        .max(1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();

    let mut model = MlpModel::new_random(
        n,
        config.hidden_layers,
        config.width,
        config.seed,
        config.sigma_fn,
        config.dof,
    );
    // standardize inputs from training statistics
    let dim = n + 1;
    let mut mean = vec![0.0; dim];
    for &r in &train_idx {
        for (j, &v) in dataset.moment_row(r).iter().enumerate() {
            mean[j] += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= train_idx.len() as f64);
    let mut var = vec![0.0; dim];
    for &r in &train_idx {
        for (j, &v) in dataset.moment_row(r).iter().enumerate() {
            let d = v - mean[j];
            var[j] += d * d;
        }
    }
    let scale: Vec<f64> = var
        .iter()
        .map(|&v| (v / train_idx.len() as f64).sqrt().max(1e-12))
        .collect();
    model.input_mean = mean;
    model.input_scale = scale;

    let mut adam_m = Gradients::zeros_like(&model);
    let mut adam_v = Gradients::zeros_like(&model);
    let mut adam_t = 0usize;
    let mut grads = Gradients::zeros_like(&model);
    let mut buf = BatchBuffers {
        inputs: Vec::new(),
        grads4: Vec::new(),
        targets: Vec::new(),
    };

    let mut history = Vec::with_capacity(config.epochs);
    let mut best_val = f64::INFINITY;
    let mut best_model = model.clone();
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        shuffle(&mut train_idx, &mut rng);
        let mut train_loss_acc = 0.0;
        let mut n_batches = 0usize;
        for chunk in train_idx.chunks(config.batch_size) {
            gather_batch(dataset, chunk, &mut buf);
            let batch = Batch {
                inputs: &buf.inputs,
                grads4: &buf.grads4,
                targets: &buf.targets,
            };
            let l = loss_and_backward(&model, &batch, config.constrained, &mut grads);
            if !l.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, step });
            }
            adam_step(
                &mut model,
                &grads,
                &mut adam_m,
                &mut adam_v,
                &mut adam_t,
                config.learning_rate,
            );
            train_loss_acc += l;
            n_batches += 1;
            step += 1;

            if config.constrained
                && config.constraint_check_every > 0
                && step % config.constraint_check_every == 0
            {
                verify_constraints_on_batch(&model, &batch, step)?;
            }
        }
        gather_batch(dataset, &val_idx, &mut buf);
        let val_batch = Batch {
            inputs: &buf.inputs,
            grads4: &buf.grads4,
            targets: &buf.targets,
        };
        let val_loss = loss(&model, &val_batch, config.constrained);
        if !val_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch, step });
        }
        if val_loss < best_val {
            best_val = val_loss;
            best_model = model.clone();
        }
        history.push(EpochStats {
            epoch,
            train_loss: train_loss_acc / n_batches.max(1) as f64,
            val_loss,
        });
    }

    Ok(TrainOutcome {
        model: best_model,
        history,
    })
}

fn verify_constraints_on_batch(
    model: &MlpModel,
    batch: &Batch,
    step: usize,
) -> Result<(), TrainError> {
    let rows = batch.rows();
    let cache = forward_batch(model, batch.inputs, rows);
    let outputs = cache.acts.last().unwrap();
    for r in 0..rows {
        let raw = [
            outputs[r * 4],
            outputs[r * 4 + 1],
            outputs[r * 4 + 2],
            outputs[r * 4 + 3],
        ];
        let c = head_to_coefficients(raw, model.n_order, model.k_dof, model.sigma_fn, true);
        let ok = constraint_check_h(c.nm3(), c.nm2(), c.nm1(), c.ntop(), model.n_order)
            .map(|m| m.satisfied())
            .unwrap_or(false);
        if !ok {
            return Err(TrainError::ConstraintViolation { step });
        }
    }
    Ok(())
}

fn shuffle(idx: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..idx.len()).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
}

fn adam_step(
    model: &mut MlpModel,
    grads: &Gradients,
    m: &mut Gradients,
    v: &mut Gradients,
    t: &mut usize,
    lr: f64,
) {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;
    *t += 1;
    let bc1 = 1.0 - BETA1.powi(*t as i32);
    let bc2 = 1.0 - BETA2.powi(*t as i32);
    for l in 0..model.weights.len() {
        for i in 0..model.weights[l].len() {
            let g = grads.weights[l][i];
            let mi = BETA1 * m.weights[l][i] + (1.0 - BETA1) * g;
            let vi = BETA2 * v.weights[l][i] + (1.0 - BETA2) * g * g;
            m.weights[l][i] = mi;
            v.weights[l][i] = vi;
            model.weights[l][i] -= lr * (mi / bc1) / ((vi / bc2).sqrt() + EPS);
        }
        for i in 0..model.biases[l].len() {
            let g = grads.biases[l][i];
            let mi = BETA1 * m.biases[l][i] + (1.0 - BETA1) * g;
            let vi = BETA2 * v.biases[l][i] + (1.0 - BETA2) * g * g;
            m.biases[l][i] = mi;
            v.biases[l][i] = vi;
            model.biases[l][i] -= lr * (mi / bc1) / ((vi / bc2).sqrt() + EPS);
        }
    }
}

/// Closure adapter routing head outputs through the constraint layer.
#[derive(Debug, Clone)]
pub struct HyperbolicMlClosure {
    model: MlpModel,
}

impl HyperbolicMlClosure {
    pub fn new(model: MlpModel) -> Self {
        Self { model }
    }

    pub fn model(&self) -> &MlpModel {
        &self.model
    }
}

impl Closure for HyperbolicMlClosure {
    fn n_order(&self) -> usize {
        self.model.n_order
    }

    fn coefficients(&self, moments: &[f64]) -> ClosureCoefficients {
        let raw = self.model.forward(moments);
        head_to_coefficients(raw, self.model.n_order, self.model.k_dof, self.model.sigma_fn, true)
    }

    fn coefficients_grid(&self, u: &MomentField, out: &mut Vec<ClosureCoefficients>) {
        grid_coefficients(&self.model, u, true, out);
    }

    fn label(&self) -> &str {
        "hyp"
    }
}

/// Closure adapter using head outputs directly (no constraint layer).
#[derive(Debug, Clone)]
pub struct DirectMlClosure {
    model: MlpModel,
}

impl DirectMlClosure {
    pub fn new(model: MlpModel) -> Self {
        Self { model }
    }

    pub fn model(&self) -> &MlpModel {
        &self.model
    }
}

impl Closure for DirectMlClosure {
    fn n_order(&self) -> usize {
        self.model.n_order
    }

    fn coefficients(&self, moments: &[f64]) -> ClosureCoefficients {
        let raw = self.model.forward(moments);
        head_to_coefficients(raw, self.model.n_order, self.model.k_dof, self.model.sigma_fn, false)
    }

    fn coefficients_grid(&self, u: &MomentField, out: &mut Vec<ClosureCoefficients>) {
        grid_coefficients(&self.model, u, false, out);
    }

    fn label(&self) -> &str {
        "nonhyp"
    }
}

fn grid_coefficients(
    model: &MlpModel,
    u: &MomentField,
    constrained: bool,
    out: &mut Vec<ClosureCoefficients>,
) {
    let nx = u.grid().nx();
    let dim = model.layer_dims[0];
    let mut inputs = vec![0.0; nx * dim];
    for i in 0..nx {
        u.node_state(i, &mut inputs[i * dim..(i + 1) * dim]);
    }
    let cache = forward_batch(model, &inputs, nx);
    let outputs = cache.acts.last().unwrap();
    out.clear();
    out.reserve(nx);
    for r in 0..nx {
        let raw = [
            outputs[r * 4],
            outputs[r * 4 + 1],
            outputs[r * 4 + 2],
            outputs[r * 4 + 3],
        ];
        out.push(head_to_coefficients(
            raw,
            model.n_order,
            model.k_dof,
            model.sigma_fn,
            constrained,
        ));
    }
}

/// Reconstructed `∂x m_{N+1}` for one sample.
pub fn predict_gradient(
    model: &MlpModel,
    constrained: bool,
    moments: &[f64],
    grads4: [f64; 4],
) -> f64 {
    let raw = model.forward(moments);
    let c = head_to_coefficients(raw, model.n_order, model.k_dof, model.sigma_fn, constrained);
    crate::closure::evaluate_closure_gradient(&c, grads4)
}
