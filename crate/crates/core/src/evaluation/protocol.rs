//! Cross-validated pretrain-then-probe runs, ablation cells and sweeps.

use serde::{Deserialize, Serialize};

use crate::data::{make_folds, FoldPlan, TabularDataset};
use crate::error::{LoclError, Result};
use crate::evaluation::probe::{evaluate, train_probe, ProbeConfig};
use crate::ordering::OrderingVariant;
use crate::pipeline::{pretrain_fold, EncoderKind, TrainConfig};
use crate::rng::{self, tag};

/// Environment variable capping the number of parallel fold workers.
pub const WORKERS_ENV: &str = "LOCL_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOptions {
    pub k: usize,
    pub unlabeled_fraction: f64,
    /// Refit normalization on each fold's training partition.
    pub fold_local_stats: bool,
    pub probe: ProbeConfig,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        ProtocolOptions {
            k: 5,
            unlabeled_fraction: 0.9,
            fold_local_stats: false,
            probe: ProbeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub accuracy: f64,
    pub unlabeled_rows: usize,
    pub labeled_rows: usize,
    pub test_rows: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub probe_reg: f64,
    pub probe_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_fold: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
    pub config_fingerprint: String,
    pub folds: Vec<FoldOutcome>,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl EvalReport {
    pub fn from_folds(folds: Vec<FoldOutcome>, config_fingerprint: String) -> Self {
        let per_fold: Vec<f64> = folds.iter().map(|f| f.accuracy).collect();
        let (mean, std) = mean_std(&per_fold);
        EvalReport {
            per_fold,
            mean,
            std,
            config_fingerprint,
            folds,
        }
    }
}

/// Worker count from `LOCL_WORKERS`, else the available parallelism.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Run `job(i)` for `i in 0..n` on up to `workers` threads; results come
/// back in index order regardless of scheduling.
pub fn parallel_map<T, F>(n: usize, workers: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = workers.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(&job).collect();
    }
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let job = &job;
                s.spawn(move || (w..n).step_by(workers).map(|i| (i, job(i))).collect::<Vec<_>>())
            })
            .collect();
        for h in handles {
            for (i, v) in h.join().expect("fold worker panicked") {
                slots[i] = Some(v);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every index computed")).collect()
}

/// Pretrain seed of one fold, derived from the master seed.
pub fn fold_seed(master: u64, fold: usize) -> u64 {
    rng::derive_seed(master, &[tag::FOLD_SEED, fold as u64])
}

fn run_fold(
    dataset: &TabularDataset,
    cfg: &TrainConfig,
    plan: &FoldPlan,
    fold: usize,
    opts: &ProtocolOptions,
) -> Result<FoldOutcome> {
    let local;
    let data = if opts.fold_local_stats {
        local = dataset.refit_normalization(&plan.train_rows(fold))?;
        &local
    } else {
        dataset
    };
    let cfg = TrainConfig {
        seed: fold_seed(plan.seed, fold),
        ..cfg.clone()
    };
    let (model, log) = pretrain_fold(data, plan, fold, &cfg)?;
    let labels = data.labels()?;
    let labeled = plan.labeled_rows(fold);
    let test = plan.test_rows(fold);
    let z_lab = model.embed(data, Some(&labeled))?.z;
    let z_test = model.embed(data, Some(&test))?.z;
    let y_lab: Vec<usize> = labeled.iter().map(|&i| labels[i]).collect();
    let y_test: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
    let probe = train_probe(&z_lab, &y_lab, &opts.probe)?;
    Ok(FoldOutcome {
        fold,
        accuracy: evaluate(&probe, &z_test, &y_test)?,
        unlabeled_rows: plan.unlabeled_rows(fold).len(),
        labeled_rows: labeled.len(),
        test_rows: test.len(),
        epochs_run: log.epochs.len(),
        best_epoch: log.best_epoch,
        probe_reg: probe.reg,
        probe_iterations: probe.iterations,
    })
}

/// Evaluate `cfg` on a prepared fold plan. Folds run in parallel.
pub fn run_plan(dataset: &TabularDataset, cfg: &TrainConfig, plan: &FoldPlan, opts: &ProtocolOptions) -> Result<EvalReport> {
    cfg.validate()?;
    let results = parallel_map(plan.k, worker_count(), |f| run_fold(dataset, cfg, plan, f, opts));
    let folds = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_folds(folds, cfg.fingerprint()))
}

/// Stratified k-fold protocol: per fold, pretrain on the unlabeled share of
/// the training partition, probe on the labeled rest, test on the held-out
/// fold. `seed` is the master seed; `cfg.seed` is replaced per fold.
pub fn run_protocol(dataset: &TabularDataset, cfg: &TrainConfig, opts: &ProtocolOptions, seed: u64) -> Result<EvalReport> {
    let plan = make_folds(dataset, opts.k, opts.unlabeled_fraction, seed)?;
    run_plan(dataset, cfg, &plan, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub name: String,
    pub config: TrainConfig,
    pub report: EvalReport,
}

/// Variant names and configs of the five ablation cells, base first.
pub fn ablation_cells(base: &TrainConfig) -> Vec<(String, TrainConfig)> {
    let with = |kind: EncoderKind, variant: OrderingVariant| TrainConfig {
        encoder_kind: kind,
        ordering_variant: variant,
        ..base.clone()
    };
    vec![
        ("LoCL".into(), with(EncoderKind::Conv, OrderingVariant::Mst)),
        ("LoCL - Dense layer".into(), with(EncoderKind::Dense, OrderingVariant::Mst)),
        ("LoCL - Random ordering".into(), with(EncoderKind::Conv, OrderingVariant::Random)),
        ("LoCL - Original order".into(), with(EncoderKind::Conv, OrderingVariant::Original)),
        ("LoCL - Interleaved order".into(), with(EncoderKind::Conv, OrderingVariant::Interleaved)),
    ]
}

/// Evaluate named configurations on one shared fold plan.
pub fn run_cells(
    dataset: &TabularDataset,
    cells: Vec<(String, TrainConfig)>,
    opts: &ProtocolOptions,
    seed: u64,
) -> Result<Vec<Cell>> {
    let plan = make_folds(dataset, opts.k, opts.unlabeled_fraction, seed)?;
    cells
        .into_iter()
        .map(|(name, config)| {
            let report = run_plan(dataset, &config, &plan, opts)?;
            Ok(Cell { name, config, report })
        })
        .collect()
}

pub fn run_ablations(dataset: &TabularDataset, base: &TrainConfig, opts: &ProtocolOptions, seed: u64) -> Result<Vec<Cell>> {
    run_cells(dataset, ablation_cells(base), opts, seed)
}

pub const ALPHA_GRID: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 5.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    Alpha,
    KernelSize,
}

impl std::str::FromStr for SweepParam {
    type Err = LoclError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(SweepParam::Alpha),
            "kernel-size" | "kernel_size" => Ok(SweepParam::KernelSize),
            other => Err(LoclError::invalid(format!("cannot sweep {other:?}"))),
        }
    }
}

/// One cell per grid value, all other settings from `base`.
pub fn sweep_cells(base: &TrainConfig, param: SweepParam, grid: &[f64]) -> Result<Vec<(String, TrainConfig)>> {
    grid.iter()
        .map(|&v| {
            let cfg = match param {
                SweepParam::Alpha => TrainConfig { alpha: v, ..base.clone() },
                SweepParam::KernelSize => {
                    if v.fract() != 0.0 || v < 1.0 {
                        return Err(LoclError::invalid(format!("kernel size {v} is not a positive integer")));
                    }
                    TrainConfig {
                        kernel_size: v as usize,
                        ..base.clone()
                    }
                }
            };
            cfg.validate()?;
            let name = match param {
                SweepParam::Alpha => format!("alpha = {v}"),
                SweepParam::KernelSize => format!("kernel_size = {v}"),
            };
            Ok((name, cfg))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[0.5, 0.7]);
        assert!((m - 0.6).abs() < 1e-15);
        assert!((s - 0.1).abs() < 1e-15);
    }

    #[test]
    fn parallel_map_keeps_order() {
        let v = parallel_map(7, 3, |i| i * i);
        assert_eq!(v, vec![0, 1, 4, 9, 16, 25, 36]);
        assert_eq!(parallel_map(0, 3, |i| i), Vec::<usize>::new());
    }

    #[test]
    fn ablation_cells_vary_one_factor() {
        let base = TrainConfig::default();
        let cells = ablation_cells(&base);
        assert_eq!(cells.len(), 5);
        assert_eq!(cells[0].1, base);
        for (_, c) in &cells[1..] {
            let differs = (c.encoder_kind != base.encoder_kind) as u8
                + (c.ordering_variant != base.ordering_variant) as u8;
            assert_eq!(differs, 1);
        }
    }

    #[test]
    fn sweep_grids() {
        let cells = sweep_cells(&TrainConfig::default(), SweepParam::Alpha, &ALPHA_GRID).unwrap();
        assert_eq!(cells.len(), 5);
        assert_eq!(cells[4].1.alpha, 5.0);
        assert!(sweep_cells(&TrainConfig::default(), SweepParam::KernelSize, &[4.0]).is_err());
    }
}
