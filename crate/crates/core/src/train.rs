//! Loss, metrics and the full-batch training loop.
//!
//! Ratings are regressed on their native 1–10 scale. Message passing always
//! runs over train-split edges; test edges contribute labels only.

use crate::error::{Error, Result};
use crate::gnn::{decoder_forward, encoder_forward, init_model, model_backward, model_forward, ModelConfig, ModelParams};
use crate::graph::{pairs, EdgeSplit, HeteroGraph, LabeledEdge, SplitPart};
use crate::numkit::{AdamState, Matrix, Rng, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// History is recorded when `epoch % log_every == 0` and at the last epoch.
    pub log_every: usize,
    /// Clamp predictions to `[1, 10]` before computing RMSE in evaluation.
    pub clamp_eval: bool,
    /// Start the output bias `dec.b2` at the mean train rating instead of 0.
    pub mean_init: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            lr: 0.01,
            seed: 0,
            log_every: 10,
            clamp_eval: false,
            mean_init: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Argument("epochs must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Argument(format!("learning rate must be finite and non-negative, got {}", self.lr)));
        }
        if self.log_every == 0 {
            return Err(Error::Argument("log_every must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub rmse: f64,
    pub weighted_rmse: f64,
    /// Exact-match accuracy of the rounded, clamped prediction.
    pub accuracy: f64,
    /// Mean squared error of the raw predictions.
    pub loss: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Train MSE before this epoch's update.
    pub loss: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T> {
    pub params: ModelParams<T>,
    pub history: Vec<EpochRecord>,
    /// Train-split metrics of the final parameters.
    pub final_train: Metrics,
}

fn check_lengths(pred: usize, label: usize) -> Result<()> {
    if pred != label {
        return Err(Error::Validation(format!("{pred} predictions for {label} labels")));
    }
    if pred == 0 {
        return Err(Error::Validation("empty prediction list".into()));
    }
    Ok(())
}

/// `loss = mean((p − y)²)`, `grad_i = 2(p_i − y_i)/n`.
pub fn mse_loss<T: Scalar>(pred: &[T], label: &[T]) -> Result<(T, Vec<T>)> {
    check_lengths(pred.len(), label.len())?;
    let n = T::lit(pred.len() as f64);
    let two = T::lit(2.0);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &y) in pred.iter().zip(label) {
        let d = p - y;
        loss += d * d;
        grad.push(two * d / n);
    }
    Ok((loss / n, grad))
}

/// `sqrt(Σ w(p − y)² / Σ w)`; `None` weights mean uniform.
pub fn rmse(pred: &[f64], label: &[f64], weights: Option<&[f64]>) -> Result<f64> {
    check_lengths(pred.len(), label.len())?;
    match weights {
        None => {
            let sse: f64 = pred.iter().zip(label).map(|(p, y)| (p - y) * (p - y)).sum();
            Ok((sse / pred.len() as f64).sqrt())
        }
        Some(w) => {
            check_lengths(w.len(), label.len())?;
            if let Some(i) = w.iter().position(|&x| !(x > 0.0)) {
                return Err(Error::Validation(format!("weight {i} is not positive: {}", w[i])));
            }
            let num: f64 = pred
                .iter()
                .zip(label)
                .zip(w)
                .map(|((p, y), w)| w * (p - y) * (p - y))
                .sum();
            let den: f64 = w.iter().sum();
            Ok((num / den).sqrt())
        }
    }
}

pub fn clamp_rating(p: f64) -> f64 {
    p.clamp(1.0, 10.0)
}

/// Fraction with `round(clamp(p, 1, 10)) == y`, rounding half away from zero.
pub fn accuracy(pred: &[f64], label: &[f64]) -> Result<f64> {
    check_lengths(pred.len(), label.len())?;
    let hits = pred
        .iter()
        .zip(label)
        .filter(|(&p, &y)| clamp_rating(p).round() == y)
        .count();
    Ok(hits as f64 / pred.len() as f64)
}

/// All metrics for one prediction list.
pub fn compute_metrics(pred: &[f64], label: &[f64], weights: &[f64], clamp: bool) -> Result<Metrics> {
    check_lengths(pred.len(), label.len())?;
    let (loss, _) = mse_loss(pred, label)?;
    let scored: Vec<f64> = if clamp {
        pred.iter().map(|&p| clamp_rating(p)).collect()
    } else {
        pred.to_vec()
    };
    Ok(Metrics {
        rmse: rmse(&scored, label, None)?,
        weighted_rmse: rmse(&scored, label, Some(weights))?,
        accuracy: accuracy(pred, label)?,
        loss,
        n: pred.len(),
    })
}

fn labels_and_weights<T: Scalar>(edges: &[LabeledEdge<T>]) -> (Vec<f64>, Vec<f64>) {
    edges.iter().map(|e| (e.rating.as_f64(), e.weight.as_f64())).unzip()
}

pub fn train<T: Scalar>(
    graph: &HeteroGraph<T>,
    split: &EdgeSplit<T>,
    model: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    train_with_observer(graph, split, model, cfg, |_| {})
}

/// Like [`train`], calling `observer` on every recorded epoch as it happens.
pub fn train_with_observer<T: Scalar>(
    graph: &HeteroGraph<T>,
    split: &EdgeSplit<T>,
    model: &ModelConfig,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    model.validate()?;
    model.check_graph(graph)?;
    if split.train.is_empty() {
        return Err(Error::Validation("train split is empty".into()));
    }
    let mut params: ModelParams<T> = init_model(model, &mut Rng::new(cfg.seed))?;
    if cfg.mean_init {
        params.dec_b2 = Matrix::filled(1, 1, T::lit(global_mean(split)?));
    }
    let adj = split.message_adjacency(graph);
    let train_pairs = pairs(&split.train);
    let labels: Vec<T> = split.train.iter().map(|e| e.rating).collect();
    let lr = T::lit(cfg.lr);
    let mut opt: Vec<AdamState<T>> = params
        .tensors()
        .iter()
        .map(|(_, m)| AdamState::new(m.rows(), m.cols(), lr))
        .collect();

    let mut history = Vec::new();
    for epoch in 1..=cfg.epochs {
        let (pred, cache) = model_forward(&params, model, graph, &adj, &train_pairs)?;
        let (loss, grad) = mse_loss(&pred, &labels)?;
        let loss = loss.as_f64();
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        if epoch % cfg.log_every == 0 || epoch == cfg.epochs || epoch == 1 {
            let rec = EpochRecord {
                epoch,
                loss,
                rmse: loss.sqrt(),
            };
            observer(&rec);
            history.push(rec);
        }
        let grads = model_backward(&params, model, graph, &adj, &train_pairs, &grad, &cache)?;
        for ((state, (_, p)), (_, g)) in opt.iter_mut().zip(params.tensors_mut()).zip(grads.tensors()) {
            state.step(p, g)?;
        }
    }
    let final_train = evaluate(&params, model, graph, split, SplitPart::Train, cfg.clamp_eval)?;
    Ok(TrainOutcome {
        params,
        history,
        final_train,
    })
}

/// Raw (unclamped) predictions for the label pairs of `part`.
pub fn predict_split<T: Scalar>(
    params: &ModelParams<T>,
    model: &ModelConfig,
    graph: &HeteroGraph<T>,
    split: &EdgeSplit<T>,
    part: SplitPart,
) -> Result<Vec<f64>> {
    let adj = split.message_adjacency(graph);
    let (uz, az, _) = encoder_forward(params, model, graph, &adj)?;
    let pred = decoder_forward(params, &uz, &az, &pairs(split.part(part)))?;
    Ok(pred.into_iter().map(|p| p.as_f64()).collect())
}

pub fn evaluate<T: Scalar>(
    params: &ModelParams<T>,
    model: &ModelConfig,
    graph: &HeteroGraph<T>,
    split: &EdgeSplit<T>,
    part: SplitPart,
    clamp_eval: bool,
) -> Result<Metrics> {
    let edges = split.part(part);
    if edges.is_empty() {
        return Err(Error::Validation(format!("{} split is empty", part.name())));
    }
    let pred = predict_split(params, model, graph, split, part)?;
    let (labels, weights) = labels_and_weights(edges);
    compute_metrics(&pred, &labels, &weights, clamp_eval)
}

/// Mean train-split rating.
pub fn global_mean<T: Scalar>(split: &EdgeSplit<T>) -> Result<f64> {
    if split.train.is_empty() {
        return Err(Error::Validation("train split is empty".into()));
    }
    let sum: f64 = split.train.iter().map(|e| e.rating.as_f64()).sum();
    Ok(sum / split.train.len() as f64)
}

/// Metrics of predicting the train-split mean for every edge of `part`.
pub fn baseline_global_mean<T: Scalar>(split: &EdgeSplit<T>, part: SplitPart) -> Result<Metrics> {
    let mean = global_mean(split)?;
    let edges = split.part(part);
    if edges.is_empty() {
        return Err(Error::Validation(format!("{} split is empty", part.name())));
    }
    let (labels, weights) = labels_and_weights(edges);
    compute_metrics(&vec![mean; labels.len()], &labels, &weights, false)
}
