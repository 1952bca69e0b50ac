//! Stratified 5-fold pretrain-then-probe protocol on a synthetic table,
//! next to a probe fit directly on the raw features of the same labeled
//! rows.
//!
//! cargo run --release --example linear_probe_protocol -- [rows] [max_epochs]

use locl::data::make_folds;
use locl::evaluation::report::{render_folds, render_table};
use locl::evaluation::{evaluate, run_plan, train_probe, EvalReport, FoldOutcome, ProtocolOptions};
use locl::pipeline::TrainConfig;
use locl::synthetic::{correlated_blocks, BlockSpec};

fn main() -> locl::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let d = correlated_blocks(&BlockSpec {
        rows: args.first().copied().unwrap_or(1200),
        features: 19,
        blocks: 4,
        noise: 1.0,
        separation: 0.6,
        ..BlockSpec::default()
    })?;
    let cfg = TrainConfig {
        max_epochs: args.get(1).copied().unwrap_or(30),
        ..TrainConfig::default()
    };
    let opts = ProtocolOptions::default();
    let seed = 7;
    let plan = make_folds(&d, opts.k, opts.unlabeled_fraction, seed)?;

    let start = std::time::Instant::now();
    let locl = run_plan(&d, &cfg, &plan, &opts)?;
    println!("{}", render_folds(&locl));
    println!("protocol took {:.1}s\n", start.elapsed().as_secs_f64());

    let labels = d.labels()?;
    let mut raw = Vec::new();
    for fold in 0..plan.k {
        let (lab, test) = (plan.labeled_rows(fold), plan.test_rows(fold));
        let pick = |rows: &[usize]| rows.iter().map(|&i| labels[i]).collect::<Vec<_>>();
        let probe = train_probe(&d.x.select_rows(&lab), &pick(&lab), &opts.probe)?;
        raw.push(FoldOutcome {
            fold,
            accuracy: evaluate(&probe, &d.x.select_rows(&test), &pick(&test))?,
            unlabeled_rows: 0,
            labeled_rows: lab.len(),
            test_rows: test.len(),
            epochs_run: 0,
            best_epoch: 0,
            probe_reg: probe.reg,
            probe_iterations: probe.iterations,
        });
    }
    let raw = EvalReport::from_folds(raw, String::new());
    print!(
        "{}",
        render_table(
            ("Representation", "Accuracy"),
            &[("raw features".into(), &raw), ("twin embeddings".into(), &locl)]
        )
    );
    Ok(())
}
