use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augmentation::view_seed;
use crate::data::{FoldPlan, TabularDataset};
use crate::error::{LoclError, Result};
use crate::losses::LossReport;
use crate::nn::RmsProp;
use crate::ordering::{order_features, split_features};
use crate::pipeline::config::TrainConfig;
use crate::pipeline::model::TwinModel;
use crate::rng::{self, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean over the epoch's batches, measured before each update.
    pub train: LossReport,
    pub validation: Option<LossReport>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub train_rows: usize,
    pub validation_rows: usize,
}

impl TrainingLog {
    /// One JSON object per epoch.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e).expect("log serializes"));
            out.push('\n');
        }
        out
    }

    pub fn best_validation(&self) -> Option<f64> {
        self.epochs
            .iter()
            .find(|e| e.epoch == self.best_epoch)
            .and_then(|e| e.validation.map(|v| v.l_total))
    }
}

fn mean_report(reports: &[LossReport]) -> LossReport {
    let n = reports.len().max(1) as f64;
    let mut m = LossReport {
        l_total: 0.0,
        l_contrastive: 0.0,
        l_reconstruction: 0.0,
        c_diag_mean: 0.0,
        c_offdiag_mean_sq: 0.0,
    };
    for r in reports {
        m.l_total += r.l_total / n;
        m.l_contrastive += r.l_contrastive / n;
        m.l_reconstruction += r.l_reconstruction / n;
        m.c_diag_mean += r.c_diag_mean / n;
        m.c_offdiag_mean_sq += r.c_offdiag_mean_sq / n;
    }
    m
}

/// Held-out rows for early stopping: `floor(fraction * n)`, at least 2 when
/// the fraction is positive. Drawn from a seeded shuffle.
fn split_validation(rows: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    if fraction <= 0.0 {
        return (rows.to_vec(), Vec::new());
    }
    let n_val = ((fraction * rows.len() as f64).floor() as usize).max(2);
    let mut shuffled = rows.to_vec();
    shuffled.shuffle(&mut rng::stream(seed, &[tag::VALIDATION]));
    let mut val = shuffled.split_off(shuffled.len() - n_val);
    let mut train = shuffled;
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Fit a twin model on `rows` of `dataset` (labels are never read).
///
/// The feature ordering is computed from the same rows. Returns the
/// parameters of the epoch with the lowest validation loss, or the final
/// parameters when no validation rows are held out.
pub fn pretrain(dataset: &TabularDataset, rows: &[usize], cfg: &TrainConfig) -> Result<(TwinModel, TrainingLog)> {
    cfg.validate()?;
    if rows.len() < 2 * cfg.batch_size {
        return Err(LoclError::invalid(format!(
            "pretraining needs at least {} rows (2 x batch_size), got {}",
            2 * cfg.batch_size,
            rows.len()
        )));
    }
    let seed = cfg.seed;
    let (train_rows, val_rows) = split_validation(rows, cfg.validation_fraction, seed);

    let x_pre = dataset.x.select_rows(rows);
    let ordering = order_features(&x_pre, cfg.ordering_variant, rng::derive_seed(seed, &[tag::ORDER]))?;
    let split = split_features(&ordering, cfg.overlap_fraction)?;
    let mut model = TwinModel::new(ordering, split, dataset.feature_names.clone(), cfg.clone())?;
    let mut opt = RmsProp::new(cfg.learning_rate);

    // Fixed masks so validation losses are comparable across epochs.
    let vs = rng::derive_seed(seed, &[tag::VALIDATION, 1]);
    let mut val_batches = Vec::new();
    for (b, chunk) in val_rows.chunks(cfg.batch_size).enumerate() {
        if chunk.len() < 2 {
            continue;
        }
        let x = dataset.x.select_rows(chunk);
        let b = b as u64;
        val_batches.push(model.make_batch(&x, view_seed(vs, 0, b, 1), view_seed(vs, 0, b, 2))?);
    }

    let start = Instant::now();
    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, TwinModel)> = None;
    let mut reference = f64::INFINITY;
    let mut waited = 0;
    let mut stopped_early = false;
    let mut order = train_rows.clone();

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng::stream(seed, &[tag::SHUFFLE, epoch as u64]));
        let mut reports = Vec::with_capacity(order.len() / cfg.batch_size);
        for (b, chunk) in order.chunks_exact(cfg.batch_size).enumerate() {
            let x = dataset.x.select_rows(chunk);
            let (e, bb) = (epoch as u64, b as u64);
            let batch = model.make_batch(&x, view_seed(seed, e, bb, 1), view_seed(seed, e, bb, 2))?;
            let report = model.gradient(&batch)?;
            if !report.l_total.is_finite() {
                return Err(LoclError::NonFiniteLoss { epoch, batch: b });
            }
            opt.step(&mut model.named_params_mut())?;
            reports.push(report);
        }
        let validation = if val_batches.is_empty() {
            None
        } else {
            let rs = val_batches.iter().map(|vb| model.objective(vb)).collect::<Result<Vec<_>>>()?;
            let r = mean_report(&rs);
            if !r.l_total.is_finite() {
                return Err(LoclError::NonFiniteLoss {
                    epoch,
                    batch: usize::MAX,
                });
            }
            Some(r)
        };
        epochs.push(EpochLog {
            epoch,
            train: mean_report(&reports),
            validation,
            wall_time_s: start.elapsed().as_secs_f64(),
        });

        if let Some(v) = validation.map(|r| r.l_total) {
            if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                best = Some((v, epoch, model.clone()));
            }
            if v < reference - cfg.min_delta {
                reference = v;
                waited = 0;
            } else {
                waited += 1;
                if waited >= cfg.patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    let last = epochs.len() - 1;
    let (model, best_epoch) = match best {
        Some((_, epoch, m)) => (m, epoch),
        None => (model, last),
    };
    Ok((
        model,
        TrainingLog {
            epochs,
            best_epoch,
            stopped_early,
            train_rows: train_rows.len(),
            validation_rows: val_rows.len(),
        },
    ))
}

/// Pretrain on the unlabeled rows of one fold.
pub fn pretrain_fold(
    dataset: &TabularDataset,
    plan: &FoldPlan,
    fold: usize,
    cfg: &TrainConfig,
) -> Result<(TwinModel, TrainingLog)> {
    if fold >= plan.k {
        return Err(LoclError::invalid(format!("fold {fold} out of range for k = {}", plan.k)));
    }
    pretrain(dataset, &plan.unlabeled_rows(fold), cfg)
}
