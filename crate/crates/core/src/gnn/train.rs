use serde::{Deserialize, Serialize};

use super::model::{argmax_rows, dropout_mask, forward_propagated, loss_and_grad, GcnParams, ModelKind, Propagation};
use super::{CsrMatrix, DenseMatrix, GnnError};
use crate::graph::SplitAssignment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub hidden: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub max_epochs: usize,
    /// Training stops once this many consecutive epochs pass without a
    /// strictly better validation accuracy, i.e. on the `patience + 1`-th.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Gcn,
            hidden: 64,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            dropout: 0.5,
            max_epochs: 300,
            patience: 30,
            seed: 0,
        }
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GnnError> {
        let bad = |m: &str| Err(GnnError::InvalidConfig(m.to_owned()));
        if self.hidden == 0 {
            return bad("hidden must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be >= 1");
        }
        if self.patience > self.max_epochs {
            return bad("patience must not exceed max_epochs");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Parameters at the last epoch reaching the best validation accuracy.
    pub params: GcnParams,
    /// Zero-based epoch the returned parameters come from.
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub epochs_run: usize,
    /// Training loss per epoch, computed before that epoch's update.
    pub losses: Vec<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = BETA1 * self.m[k] + (1.0 - BETA1) * grad[k];
            self.v[k] = BETA2 * self.v[k] + (1.0 - BETA2) * grad[k] * grad[k];
            params[k] -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + EPS);
        }
    }
}

fn propagation<'a>(kind: ModelKind, adj: Option<&'a CsrMatrix>) -> Result<Propagation<'a>, GnnError> {
    match kind {
        ModelKind::Mlp => Ok(Propagation(None)),
        ModelKind::Gcn => adj
            .map(|a| Propagation(Some(a)))
            .ok_or_else(|| GnnError::InvalidConfig("the GCN needs an adjacency matrix".into())),
    }
}

fn check_labels(labels: &[usize], n: usize, classes: usize, split: &SplitAssignment) -> Result<(), GnnError> {
    if labels.len() != n {
        return Err(GnnError::ShapeMismatch(format!("{} labels for {n} nodes", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(GnnError::ShapeMismatch(format!("label {bad} but only {classes} classes")));
    }
    if let Some(&bad) = split.train.iter().chain(&split.val).chain(&split.test).find(|&&i| i >= n) {
        return Err(GnnError::ShapeMismatch(format!("split mentions node {bad} of {n}")));
    }
    Ok(())
}

fn accuracy(predictions: &[usize], labels: &[usize], ids: &[usize]) -> f64 {
    let hits = ids.iter().filter(|&&i| predictions[i] == labels[i]).count();
    hits as f64 / ids.len() as f64
}

/// Full-batch Adam on the mean training cross-entropy with L2 weight decay,
/// early-stopped on validation accuracy. Deterministic given `config.seed`.
pub fn train(
    x: &DenseMatrix,
    adj: Option<&CsrMatrix>,
    labels: &[usize],
    num_classes: usize,
    split: &SplitAssignment,
    config: &TrainConfig,
) -> Result<TrainOutcome, GnnError> {
    config.validate()?;
    check_labels(labels, x.rows(), num_classes, split)?;
    if split.train.is_empty() {
        return Err(GnnError::EmptySet("train"));
    }
    let prop = propagation(config.model, adj)?;
    let propagated = match prop.0 {
        Some(a) => a.matmul(x)?,
        None => x.clone(),
    };
    let mut params = GcnParams::init(x.cols(), config.hidden, num_classes, config.seed);
    let mut flat = params.flatten();
    let mut adam = Adam::new(flat.len());
    // Without a validation set, model selection falls back to the last epoch.
    let val: &[usize] = if split.val.is_empty() { &split.train } else { &split.val };

    let mut best = (f64::NEG_INFINITY, 0, params.clone());
    let mut best_seen = f64::NEG_INFINITY;
    let mut stale = 0;
    let mut losses = Vec::new();
    for epoch in 0..config.max_epochs {
        let mask = (config.dropout > 0.0)
            .then(|| dropout_mask(x.rows(), config.hidden, config.dropout, config.seed, epoch as u64));
        let cache = forward_propagated(&propagated, prop, &params, mask)?;
        let (loss, grad) = loss_and_grad(&cache, prop, &params, labels, &split.train, config.weight_decay)?;
        if !loss.is_finite() {
            return Err(GnnError::NonFiniteLoss { epoch, loss });
        }
        losses.push(loss);
        adam.step(&mut flat, &grad.flatten(), config.learning_rate);
        if flat.iter().any(|w| !w.is_finite()) {
            return Err(GnnError::NonFiniteLoss { epoch, loss });
        }
        params.unflatten_from(&flat);

        let logits = forward_propagated(&propagated, prop, &params, None)?.logits;
        let val_acc = accuracy(&argmax_rows(&logits), labels, val);
        // Only a strict gain resets patience, but among epochs tied at the
        // best accuracy the latest one is kept.
        if val_acc >= best.0 {
            best = (val_acc, epoch, params.clone());
        }
        if val_acc > best_seen {
            best_seen = val_acc;
            stale = 0;
        } else {
            stale += 1;
            if stale > config.patience {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        params: best.2,
        best_epoch: best.1,
        best_val_accuracy: best.0,
        epochs_run: losses.len(),
        losses,
    })
}

/// Predicted class per node (argmax, ties to the lowest index).
pub fn predict(
    params: &GcnParams,
    x: &DenseMatrix,
    adj: Option<&CsrMatrix>,
    kind: ModelKind,
) -> Result<Vec<usize>, GnnError> {
    let prop = propagation(kind, adj)?;
    let propagated = match prop.0 {
        Some(a) => a.matmul(x)?,
        None => x.clone(),
    };
    Ok(argmax_rows(&forward_propagated(&propagated, prop, params, None)?.logits))
}

/// Test accuracy of `params`.
pub fn evaluate(
    params: &GcnParams,
    x: &DenseMatrix,
    adj: Option<&CsrMatrix>,
    kind: ModelKind,
    labels: &[usize],
    split: &SplitAssignment,
) -> Result<f64, GnnError> {
    if split.test.is_empty() {
        return Err(GnnError::EmptySet("test"));
    }
    check_labels(labels, x.rows(), params.num_classes(), split)?;
    Ok(accuracy(&predict(params, x, adj, kind)?, labels, &split.test))
}
