use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{CsrMatrix, DenseMatrix, GnnError};
use crate::seed::{self, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Gcn,
    Mlp,
}

/// Two-layer weights: `d → hidden → classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnParams {
    pub w1: DenseMatrix,
    pub b1: Vec<f64>,
    pub w2: DenseMatrix,
    pub b2: Vec<f64>,
}

impl GcnParams {
    /// Glorot-uniform weights and zero biases.
    pub fn init(d: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed, &[stream::INIT]);
        let mut glorot = |rows: usize, cols: usize| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            let data = (0..rows * cols).map(|_| dist.sample(&mut rng)).collect();
            DenseMatrix::from_vec(rows, cols, data).expect("glorot shape")
        };
        let w1 = glorot(d, hidden);
        let w2 = glorot(hidden, classes);
        Self {
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; classes],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.w2.cols()
    }

    fn check(&self) -> Result<(), GnnError> {
        if self.b1.len() != self.w1.cols() || self.w2.rows() != self.w1.cols() || self.b2.len() != self.w2.cols() {
            return Err(GnnError::ShapeMismatch(format!(
                "W1 {}x{}, b1 {}, W2 {}x{}, b2 {}",
                self.w1.rows(),
                self.w1.cols(),
                self.b1.len(),
                self.w2.rows(),
                self.w2.cols(),
                self.b2.len()
            )));
        }
        Ok(())
    }

    /// Flat view of all parameters in the order W1, b1, W2, b2.
    pub fn flatten(&self) -> Vec<f64> {
        [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2].concat()
    }

    pub fn unflatten_from(&mut self, flat: &[f64]) {
        let mut rest = flat;
        for part in [self.w1.as_mut_slice(), &mut self.b1, self.w2.as_mut_slice(), &mut self.b2] {
            let (head, tail) = rest.split_at(part.len());
            part.copy_from_slice(head);
            rest = tail;
        }
    }
}

/// Graph operator the model propagates with. `None` means identity (MLP).
#[derive(Debug, Clone, Copy)]
pub struct Propagation<'a>(pub Option<&'a CsrMatrix>);

impl Propagation<'_> {
    fn apply(&self, m: &DenseMatrix) -> Result<DenseMatrix, GnnError> {
        match self.0 {
            Some(a) => a.matmul(m),
            None => Ok(m.clone()),
        }
    }

    fn n(&self) -> Option<usize> {
        self.0.map(CsrMatrix::n)
    }
}

/// Per-entry dropout scale: `0` for dropped units, `1/(1-p)` for kept ones.
pub fn dropout_mask(rows: usize, cols: usize, p: f64, seed: u64, epoch: u64) -> Vec<f64> {
    if p == 0.0 {
        return vec![1.0; rows * cols];
    }
    let mut rng = seed::rng(seed, &[stream::DROPOUT, epoch]);
    let keep = 1.0 / (1.0 - p);
    (0..rows * cols).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect()
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `Ã X` (or `X` for the MLP).
    pub propagated: DenseMatrix,
    pub pre_activation: DenseMatrix,
    pub hidden: DenseMatrix,
    pub mask: Option<Vec<f64>>,
    pub logits: DenseMatrix,
}

/// Forward pass from precomputed `propagated = Ã X`:
/// `logits = Ã · (drop(ReLU(propagated · W1 + b1)) · W2) + b2`.
pub fn forward_propagated(
    propagated: &DenseMatrix,
    adj: Propagation<'_>,
    params: &GcnParams,
    mask: Option<Vec<f64>>,
) -> Result<ForwardCache, GnnError> {
    params.check()?;
    if propagated.cols() != params.input_dim() {
        return Err(GnnError::ShapeMismatch(format!(
            "features have {} columns but W1 has {} rows",
            propagated.cols(),
            params.input_dim()
        )));
    }
    if adj.n().is_some_and(|n| n != propagated.rows()) {
        return Err(GnnError::ShapeMismatch(format!(
            "adjacency is {0}x{0} but there are {1} feature rows",
            adj.n().unwrap(),
            propagated.rows()
        )));
    }
    let mut pre = propagated.matmul(&params.w1)?;
    pre.add_row_vector(&params.b1);
    let mut hidden = pre.clone();
    hidden.as_mut_slice().iter_mut().for_each(|x| *x = x.max(0.0));
    if let Some(m) = &mask {
        hidden.as_mut_slice().iter_mut().zip(m).for_each(|(x, s)| *x *= s);
    }
    let mut logits = adj.apply(&hidden.matmul(&params.w2)?)?;
    logits.add_row_vector(&params.b2);
    Ok(ForwardCache {
        propagated: propagated.clone(),
        pre_activation: pre,
        hidden,
        mask,
        logits,
    })
}

fn forward(
    x: &DenseMatrix,
    adj: Propagation<'_>,
    params: &GcnParams,
    dropout: Option<(f64, u64)>,
) -> Result<DenseMatrix, GnnError> {
    let propagated = adj.apply(x)?;
    let mask = dropout.map(|(p, seed)| dropout_mask(x.rows(), params.hidden(), p, seed, 0));
    Ok(forward_propagated(&propagated, adj, params, mask)?.logits)
}

/// GCN logits. `dropout` is `Some((p, seed))` to apply a seeded mask.
pub fn gcn_forward(
    x: &DenseMatrix,
    adj: &CsrMatrix,
    params: &GcnParams,
    dropout: Option<(f64, u64)>,
) -> Result<DenseMatrix, GnnError> {
    forward(x, Propagation(Some(adj)), params, dropout)
}

/// Same network with the graph operator replaced by the identity.
pub fn mlp_forward(x: &DenseMatrix, params: &GcnParams, dropout: Option<(f64, u64)>) -> Result<DenseMatrix, GnnError> {
    forward(x, Propagation(None), params, dropout)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &DenseMatrix) -> DenseMatrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        row.iter_mut().for_each(|x| *x /= sum);
    }
    out
}

/// Mean cross-entropy over `ids` (ascending order) plus
/// `weight_decay / 2 · (‖W1‖² + ‖W2‖²)`, and its gradient.
pub fn loss_and_grad(
    cache: &ForwardCache,
    adj: Propagation<'_>,
    params: &GcnParams,
    labels: &[usize],
    ids: &[usize],
    weight_decay: f64,
) -> Result<(f64, GcnParams), GnnError> {
    if ids.is_empty() {
        return Err(GnnError::EmptySet("train"));
    }
    let probs = softmax_rows(&cache.logits);
    let scale = 1.0 / ids.len() as f64;
    let mut ce = 0.0;
    let mut d_logits = DenseMatrix::zeros(probs.rows(), probs.cols());
    for &i in ids {
        let y = labels[i];
        // log-softmax directly from logits for accuracy on confident rows.
        let row = cache.logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        ce += lse - row[y];
        let g = d_logits.row_mut(i);
        g.copy_from_slice(probs.row(i));
        g[y] -= 1.0;
        g.iter_mut().for_each(|x| *x *= scale);
    }
    let loss = ce * scale + 0.5 * weight_decay * (params.w1.squared_norm() + params.w2.squared_norm());

    let b2 = d_logits.column_sums();
    // Ã is symmetric, so Ãᵀ = Ã.
    let d_q = adj.apply(&d_logits)?;
    let mut w2 = cache.hidden.t_matmul(&d_q)?;
    let mut d_hidden = d_q.matmul_t(&params.w2)?;
    if let Some(m) = &cache.mask {
        d_hidden.as_mut_slice().iter_mut().zip(m).for_each(|(g, s)| *g *= s);
    }
    d_hidden
        .as_mut_slice()
        .iter_mut()
        .zip(cache.pre_activation.as_slice())
        .for_each(|(g, &z)| {
            if z <= 0.0 {
                *g = 0.0
            }
        });
    let b1 = d_hidden.column_sums();
    let mut w1 = cache.propagated.t_matmul(&d_hidden)?;
    for (g, w) in w1.as_mut_slice().iter_mut().zip(params.w1.as_slice()) {
        *g += weight_decay * w;
    }
    for (g, w) in w2.as_mut_slice().iter_mut().zip(params.w2.as_slice()) {
        *g += weight_decay * w;
    }
    Ok((loss, GcnParams { w1, b1, w2, b2 }))
}

/// Index of the largest logit in each row; ties go to the lowest index.
pub fn argmax_rows(logits: &DenseMatrix) -> Vec<usize> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}
