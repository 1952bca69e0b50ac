//! Correlation-driven feature ordering: Pearson matrix, maximum spanning
//! tree, DFS order, and the twin split, compared against the alternative
//! orders by how much correlation sits between neighbouring features.
//!
//! cargo run --example feature_ordering -- [features] [blocks] [seed]

use locl::ordering::{adjacency_score, alternative_order, mst_order, pearson_matrix, split_features, OrderingVariant};
use locl::synthetic::{correlated_blocks, BlockSpec};

fn main() -> locl::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let spec = BlockSpec {
        rows: 500,
        features: args.first().copied().unwrap_or(12) as usize,
        blocks: args.get(1).copied().unwrap_or(3) as usize,
        seed: args.get(2).copied().unwrap_or(0),
        ..BlockSpec::default()
    };
    let d = correlated_blocks(&spec)?;
    let c = pearson_matrix(&d.x);
    let m = d.n_features();

    let mst = mst_order(&c)?;
    println!("spanning tree edges (|r|):");
    for e in &mst.mst_edges {
        println!("  {:>8} - {:<8} {:.3}", d.feature_names[e.a], d.feature_names[e.b], e.weight);
    }
    let split = split_features(&mst, 0.0)?;
    let names = |idx: &[usize]| idx.iter().map(|&j| d.feature_names[j].as_str()).collect::<Vec<_>>().join(" ");
    println!("branch 1: {}", names(&split.subset1));
    println!("branch 2: {}", names(&split.subset2));

    println!("\n{:<12} {:>10}  permutation", "order", "adjacency");
    let show = |label: &str, perm: &[usize]| println!("{label:<12} {:>10.3}  {perm:?}", adjacency_score(&c, perm));
    show("mst", &mst.permutation);
    for v in [OrderingVariant::Original, OrderingVariant::Interleaved, OrderingVariant::Random] {
        show(&v.to_string(), &alternative_order(m, v, spec.seed)?.permutation);
    }
    Ok(())
}
