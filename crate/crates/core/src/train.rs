//! Minibatch SGD on the regularized loss.
//!
//! Documents are split 90/10 into train/validation with the split stream.
//! Each epoch shuffles the training pairs with the batching stream (index =
//! epoch) and walks them in batches. For every batch a fresh graph is built:
//! parameter leaves, the batch cross-entropy, the latent regularizer of each
//! example, then one gradient w.r.t. every parameter and a plain SGD update.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId};
use crate::corpus::{Dataset, Example};
use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::model::ModelParams;
use crate::regularizer::{grlsm_loss_node, RegConfig};
use crate::rng::{SeededRng, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables early stopping.
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
    /// Batches per epoch; 0 runs a full pass over the training pairs.
    pub steps_per_epoch: usize,
    pub reg: RegConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            batch: 16,
            epochs: 5,
            patience: 0,
            min_delta: 0.0,
            seed: 0,
            steps_per_epoch: 0,
            reg: RegConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.batch == 0 {
            return Err(Error::InvalidConfig("batch must be ≥ 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be ≥ 1".into()));
        }
        if !(self.min_delta >= 0.0) {
            return Err(Error::InvalidConfig("min_delta must be ≥ 0".into()));
        }
        self.reg.validate()
    }
}

/// Per-epoch training record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean base cross-entropy over the epoch's batches.
    pub train_loss: f64,
    /// Mean of `λ · mean_batch R` over the epoch's batches.
    pub reg_mean: f64,
    pub val_loss: f64,
    pub grad_penalty_mean: f64,
    pub frobenius_mean: Option<f64>,
    pub sigma_mean: Option<f64>,
    pub steps: usize,
}

/// CSV with header `epoch,train_loss,reg_mean,val_loss`.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,reg_mean,val_loss\n");
    for r in history {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.epoch,
            fmt_f64(r.train_loss),
            fmt_f64(r.reg_mean),
            fmt_f64(r.val_loss)
        ));
    }
    out
}

/// Patience-based early stopping on a validation curve.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    best: Option<f64>,
    stale: usize,
    evaluations: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            patience,
            min_delta,
            best: None,
            stale: 0,
            evaluations: 0,
        }
    }

    /// Records one validation loss; returns `true` when training should stop.
    pub fn observe(&mut self, val: f64) -> bool {
        self.evaluations += 1;
        match self.best {
            Some(best) if !(val < best - self.min_delta) => self.stale += 1,
            _ => {
                self.best = Some(val);
                self.stale = 0;
            }
        }
        self.patience > 0 && self.stale >= self.patience
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }
}

/// Document indices `(train, validation)`: a seeded 90/10 split, each side in document order.
pub fn split_documents(n_docs: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n_docs).collect();
    SeededRng::new(seed, Stream::Split, 0).shuffle(&mut order);
    let n_val = if n_docs >= 2 { (n_docs / 10).max(1) } else { 0 };
    let mut val = order[..n_val].to_vec();
    let mut train = order[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

/// Outcome of one SGD step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepStats {
    pub base_loss: f64,
    pub reg_weighted: f64,
    pub grad_penalty_mean: f64,
    pub frobenius_mean: Option<f64>,
    pub sigma_mean: Option<f64>,
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Builds the regularized loss of `batch` and returns its value with the
/// gradient w.r.t. every parameter, in weight order.
pub fn loss_and_gradient(
    params: &ModelParams,
    batch: &[Example],
    reg: &RegConfig,
    rng: &mut SeededRng,
) -> Result<(f64, StepStats, Vec<Vec<f64>>)> {
    let mut g = Graph::new();
    let leaves = params.leaves(&mut g);
    let loss = params.nll_loss(&mut g, &leaves, batch)?;
    let items: Vec<(NodeId, Vec<NodeId>)> = loss
        .per_example
        .iter()
        .copied()
        .zip(loss.latents.iter().cloned())
        .collect();
    let (total, terms) = grlsm_loss_node(&mut g, loss.mean, &items, reg, rng)?;
    let base = g.value(loss.mean);
    let value = g.value(total);
    let n = terms.len().max(1) as f64;
    let stats = StepStats {
        base_loss: base,
        reg_weighted: if terms.is_empty() {
            0.0
        } else {
            reg.lambda * terms.iter().map(|t| g.value(t.total)).sum::<f64>() / n
        },
        grad_penalty_mean: if terms.is_empty() {
            0.0
        } else {
            terms.iter().map(|t| t.grad_penalty).sum::<f64>() / n
        },
        frobenius_mean: mean_opt(terms.iter().map(|t| t.frobenius_sq)),
        sigma_mean: mean_opt(terms.iter().map(|t| t.sigma_max)),
    };
    let flat: Vec<NodeId> = leaves.iter().flatten().copied().collect();
    let grads = g.gradient(total, &flat)?;
    let mut out = Vec::with_capacity(leaves.len());
    let mut k = 0;
    for w in &leaves {
        out.push(grads[k..k + w.len()].iter().map(|&n| g.value(n)).collect());
        k += w.len();
    }
    Ok((value, stats, out))
}

/// Trains `params` on the dataset's documents; returns the final parameters and the history.
pub fn train(params: &ModelParams, data: &Dataset, cfg: &TrainConfig) -> Result<(ModelParams, Vec<EpochRecord>)> {
    cfg.validate()?;
    if data.window != params.window {
        return Err(Error::Shape {
            expected: params.window,
            got: data.window,
        });
    }
    let (train_docs, val_docs) = split_documents(data.docs.len(), cfg.seed);
    let train_ex = data.examples_for(&train_docs);
    let val_ex = data.examples_for(&val_docs);
    if train_ex.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut model = params.clone();
    model.config = cfg.clone();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut stopper = EarlyStopping::new(cfg.patience, cfg.min_delta);

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train_ex.len()).collect();
        SeededRng::new(cfg.seed, Stream::Batching, epoch as u64).shuffle(&mut order);
        let mut probes = SeededRng::new(cfg.seed, Stream::Probes, epoch as u64);

        let mut stats = Vec::new();
        for (b, chunk) in order.chunks(cfg.batch).enumerate() {
            if cfg.steps_per_epoch > 0 && b >= cfg.steps_per_epoch {
                break;
            }
            let batch: Vec<Example> = chunk.iter().map(|&i| train_ex[i].clone()).collect();
            let (value, s, grads) = loss_and_gradient(&model, &batch, &cfg.reg, &mut probes)?;
            if !value.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            for (w, gr) in model.weights.iter_mut().zip(&grads) {
                for (x, d) in w.data.iter_mut().zip(gr) {
                    *x -= cfg.lr * d;
                }
            }
            stats.push(s);
        }

        let n = stats.len() as f64;
        let train_loss = stats.iter().map(|s| s.base_loss).sum::<f64>() / n;
        let val_loss = if val_ex.is_empty() {
            train_loss
        } else {
            model.evaluator().mean_nll(&val_ex)?
        };
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: stats.len(),
            });
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            reg_mean: stats.iter().map(|s| s.reg_weighted).sum::<f64>() / n,
            val_loss,
            grad_penalty_mean: stats.iter().map(|s| s.grad_penalty_mean).sum::<f64>() / n,
            frobenius_mean: mean_opt(stats.iter().map(|s| s.frobenius_mean)),
            sigma_mean: mean_opt(stats.iter().map(|s| s.sigma_mean)),
            steps: stats.len(),
        });
        if stopper.observe(val_loss) {
            break;
        }
    }
    Ok((model, history))
}
