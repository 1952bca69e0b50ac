//! Long-running benchmark table: the full 5-fold protocol on every
//! benchmark CSV found in `$LOCL_DATA_DIR` (default `./data`), compared with
//! reference accuracies. Not part of the test suite; the large tables
//! take hours.
//!
//! Each file needs a header row with the class label in the last column.
//! MNIST is min-max scaled, the others z-scored.
//!
//! cargo run --release --example reproduce_tables -- [dataset-name ...]

use std::path::PathBuf;
use std::time::Instant;

use locl::data::{load_csv, preprocess, NormMode};
use locl::evaluation::report::format_mean_std;
use locl::evaluation::{run_protocol, ProtocolOptions};
use locl::pipeline::TrainConfig;

struct Bench {
    file: &'static str,
    latent_dim: usize,
    mode: NormMode,
    reference: f64,
    /// Within this distance of `reference` counts as reproduced.
    band: f64,
}

const BENCHES: [Bench; 6] = [
    Bench { file: "mnist", latent_dim: 256, mode: NormMode::Minmax, reference: 0.9540, band: 0.02 },
    Bench { file: "income", latent_dim: 512, mode: NormMode::Zscore, reference: 0.8461, band: 0.02 },
    Bench { file: "blog", latent_dim: 1024, mode: NormMode::Zscore, reference: 0.7783, band: 0.02 },
    Bench { file: "diabetic_retinopathy", latent_dim: 64, mode: NormMode::Zscore, reference: 0.6438, band: 0.02 },
    Bench { file: "wall_following", latent_dim: 64, mode: NormMode::Zscore, reference: 0.7479, band: 0.02 },
    Bench { file: "gas_sensor", latent_dim: 512, mode: NormMode::Zscore, reference: 0.9825, band: 0.02 },
];

fn main() -> locl::Result<()> {
    let dir = std::env::var_os("LOCL_DATA_DIR").map_or_else(|| PathBuf::from("data"), PathBuf::from);
    let only: Vec<String> = std::env::args().skip(1).collect();
    println!("{:<22} {:>18} {:>10} {:>8} {:>9}", "dataset", "accuracy", "reference", "within", "time_s");
    for b in BENCHES.iter().filter(|b| only.is_empty() || only.iter().any(|o| o == b.file)) {
        let path = dir.join(format!("{}.csv", b.file));
        if !path.exists() {
            println!("{:<22} {:>18}", b.file, "(file missing)");
            continue;
        }
        let start = Instant::now();
        let table = load_csv(&path, None)?;
        let label = table.column_names.last().cloned().unwrap_or_default();
        let (d, _) = preprocess(&table, &label, b.mode)?;
        let cfg = TrainConfig { latent_dim: b.latent_dim, ..TrainConfig::default() };
        let report = run_protocol(&d, &cfg, &ProtocolOptions::default(), 0)?;
        println!(
            "{:<22} {:>18} {:>10.4} {:>8} {:>9.0}",
            b.file,
            format_mean_std(&report),
            b.reference,
            if (report.mean - b.reference).abs() <= b.band { "yes" } else { "no" },
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
