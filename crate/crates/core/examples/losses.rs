//! Barlow Twins and reconstruction losses on hand-made embeddings: a
//! perfectly decorrelated pair, a redundant pair, and the combined total.
//!
//! cargo run --example losses

use locl::losses::{barlow_twins_loss, combined_loss, correlation_summary, cross_correlation, reconstruction_loss};
use locl::Matrix;

fn show(label: &str, z1: &Matrix, z2: &Matrix, lambda: f64) -> locl::Result<f64> {
    let c = cross_correlation(z1, z2)?.c;
    let loss = barlow_twins_loss(&c, lambda)?;
    let (diag, off) = correlation_summary(&c);
    println!("{label}");
    for i in 0..c.rows() {
        let row: Vec<String> = c.row(i).iter().map(|v| format!("{v:7.4}")).collect();
        println!("  [{}]", row.join(" "));
    }
    println!("  mean diag {diag:.4}, mean off-diag^2 {off:.4}, loss {loss:.6}");
    Ok(loss)
}

fn main() -> locl::Result<()> {
    let lambda = 0.005;
    let orthogonal = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, -1.0], vec![-1.0, 1.0], vec![-1.0, -1.0]])?;
    show("independent dimensions, identical views", &orthogonal, &orthogonal, lambda)?;

    let redundant = Matrix::from_rows(&[vec![1.0, 0.9], vec![2.0, 2.1], vec![3.0, 2.8], vec![4.0, 4.2]])?;
    let lc = show("redundant dimensions", &redundant, &redundant, lambda)?;

    let x = Matrix::from_rows(&[vec![0.5, -1.0, 2.0, 0.0]])?;
    let x_hat = Matrix::from_rows(&[vec![1.5, 0.0, 3.0, 1.0]])?;
    let lr = reconstruction_loss(&x_hat, &x, &x, &x)?;
    println!("reconstruction: all-ones residual on branch 1, branch 2 exact -> {lr}");

    let r = combined_loss(lc, lr, 1.0, None);
    println!("total = {:.6} + 1.0 * {:.6} = {:.6}", r.l_contrastive, r.l_reconstruction, r.l_total);
    Ok(())
}
