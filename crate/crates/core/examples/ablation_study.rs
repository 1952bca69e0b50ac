//! The five encoder/ordering ablation cells on one shared fold plan, printed
//! as a table. Uses a CSV when given, otherwise a synthetic table.
//!
//! cargo run --release --example ablation_study -- [path.csv] [max-epochs]

use locl::data::{load_csv, preprocess, NormMode};
use locl::evaluation::report::render_cells;
use locl::evaluation::{run_ablations, ProtocolOptions};
use locl::pipeline::TrainConfig;
use locl::synthetic::{correlated_blocks, BlockSpec};

fn main() -> locl::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let d = match args.first().filter(|a| a.ends_with(".csv")) {
        Some(path) => {
            let table = load_csv(path, None)?;
            let label = table.column_names.last().cloned().unwrap_or_default();
            preprocess(&table, &label, NormMode::Zscore)?.0
        }
        None => correlated_blocks(&BlockSpec {
            rows: 800,
            features: 16,
            blocks: 4,
            separation: 0.8,
            ..BlockSpec::default()
        })?,
    };
    let epochs = args.iter().find_map(|a| a.parse().ok()).unwrap_or(15);
    let cfg = TrainConfig { max_epochs: epochs, ..TrainConfig::default() };
    let cells = run_ablations(&d, &cfg, &ProtocolOptions::default(), 0)?;
    print!("{}", render_cells(&cells));
    Ok(())
}
