//! Bernoulli masking with marginal or zero replacement on a small batch,
//! and the empirical mask rate over a large one.
//!
//! cargo run --example masking_corruption -- [p]

use locl::augmentation::{corrupt, marginal_source, sample_mask, view_seed};
use locl::rng;
use locl::Matrix;

fn print(label: &str, x: &Matrix) {
    println!("{label}");
    for i in 0..x.rows() {
        let row: Vec<String> = x.row(i).iter().map(|v| format!("{v:6.1}")).collect();
        println!("  {}", row.join(" "));
    }
}

fn main() -> locl::Result<()> {
    let p: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0.3);
    let x = Matrix::from_vec(6, 5, (0..30).map(|v| v as f64).collect())?;
    let seed = view_seed(7, 0, 0, 1);
    let mask = sample_mask(6, 5, p, seed)?;
    print("clean batch", &x);
    println!("mask (1 = replaced)");
    for i in 0..6 {
        let row: Vec<&str> = (0..5).map(|j| if mask.get(i, j) { "1" } else { "." }).collect();
        println!("  {}", row.join(" "));
    }
    let source = marginal_source(&x, &mut rng::stream(seed, &[1]));
    print("marginal corruption (values come from the same column)", &corrupt(&x, &mask, &source)?);
    let zeros = Matrix::zeros(6, 5);
    print("zero corruption", &corrupt(&x, &mask, &zeros)?);

    let big = sample_mask(1000, 1000, p, 1)?;
    println!("mask rate over 1e6 cells at p = {p}: {:.5}", big.rate());
    println!("branch seeds differ: {} vs {}", view_seed(7, 0, 0, 1), view_seed(7, 0, 0, 2));
    Ok(())
}
