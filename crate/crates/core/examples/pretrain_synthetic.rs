//! Pretrain the twin autoencoders on a synthetic table with correlated
//! feature blocks and print the per-epoch losses.
//!
//! cargo run --release --example pretrain_synthetic -- [rows] [features] [epochs]

use locl::pipeline::{pretrain, TrainConfig};
use locl::synthetic::{correlated_blocks, BlockSpec};

fn main() -> locl::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let spec = BlockSpec {
        rows: args.first().copied().unwrap_or(600),
        features: args.get(1).copied().unwrap_or(19),
        blocks: 4,
        ..BlockSpec::default()
    };
    let cfg = TrainConfig {
        max_epochs: args.get(2).copied().unwrap_or(20),
        ..TrainConfig::default()
    };
    let d = correlated_blocks(&spec)?;
    let rows: Vec<usize> = (0..d.n_rows()).collect();
    let (model, log) = pretrain(&d, &rows, &cfg)?;

    println!("ordering: {:?}", model.ordering.permutation);
    println!("subset widths: {} / {}", model.split.subset1.len(), model.split.subset2.len());
    println!("{:>5} {:>10} {:>10} {:>10} {:>8}", "epoch", "train", "val", "diag(C)", "time_s");
    for e in &log.epochs {
        println!(
            "{:>5} {:>10.4} {:>10.4} {:>10.4} {:>8.2}",
            e.epoch,
            e.train.l_total,
            e.validation.map_or(f64::NAN, |v| v.l_total),
            e.train.c_diag_mean,
            e.wall_time_s
        );
    }
    println!("best epoch {} (stopped early: {})", log.best_epoch, log.stopped_early);
    Ok(())
}
