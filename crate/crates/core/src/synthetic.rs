//! Seeded synthetic tables with block-correlated features, used by tests
//! and examples where the real benchmark files are not at hand.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{FeatureNorm, NormMode, TabularDataset};
use crate::error::{LoclError, Result};
use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Clone)]
pub struct BlockSpec {
    pub rows: usize,
    pub features: usize,
    /// Features are grouped into this many latent factors.
    pub blocks: usize,
    pub classes: usize,
    /// Standard deviation of per-feature noise around its factor.
    pub noise: f64,
    /// Distance between class means in latent space.
    pub separation: f64,
    /// Shuffle columns so blocks are not contiguous in the original order.
    pub shuffle_columns: bool,
    pub seed: u64,
}

impl Default for BlockSpec {
    fn default() -> Self {
        BlockSpec {
            rows: 200,
            features: 8,
            blocks: 2,
            classes: 2,
            noise: 0.5,
            separation: 1.5,
            shuffle_columns: true,
            seed: 0,
        }
    }
}

/// Labels cycle through classes; each latent factor's mean depends on the
/// class, and each feature is `factor * loading + noise`. Columns are
/// z-scored.
pub fn correlated_blocks(spec: &BlockSpec) -> Result<TabularDataset> {
    if spec.blocks == 0 || spec.features < spec.blocks || spec.classes < 2 || spec.rows < spec.classes {
        return Err(LoclError::invalid(format!("invalid synthetic spec {spec:?}")));
    }
    let mut rng = rng::stream(spec.seed, &[0x5EED]);
    let class_means: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            (0..spec.blocks)
                .map(|_| spec.separation * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let mut block_of: Vec<usize> = (0..spec.features).map(|j| j % spec.blocks).collect();
    block_of.sort_unstable();
    if spec.shuffle_columns {
        block_of.shuffle(&mut rng);
    }
    let loadings: Vec<f64> = (0..spec.features)
        .map(|_| {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            sign * rng.gen_range(0.7..1.3)
        })
        .collect();

    let mut x = Matrix::zeros(spec.rows, spec.features);
    let mut labels = Vec::with_capacity(spec.rows);
    for i in 0..spec.rows {
        let class = i % spec.classes;
        labels.push(class);
        let factors: Vec<f64> = (0..spec.blocks)
            .map(|b| class_means[class][b] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        for j in 0..spec.features {
            x[(i, j)] = factors[block_of[j]] * loadings[j]
                + spec.noise * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let mut norm_stats = Vec::with_capacity(spec.features);
    for j in 0..spec.features {
        let (mean, std) = crate::data::mean_std(x.column(j).into_iter());
        for i in 0..spec.rows {
            x[(i, j)] = (x[(i, j)] - mean) / std;
        }
        norm_stats.push(FeatureNorm::Zscore { mean, std });
    }
    Ok(TabularDataset {
        x,
        feature_names: (0..spec.features).map(|j| format!("f{j}")).collect(),
        labels: Some(labels),
        class_names: (0..spec.classes).map(|c| format!("class{c}")).collect(),
        norm_stats,
        mode: NormMode::Zscore,
    })
}

/// Render a dataset back to CSV text (raw values, label column `class`).
pub fn to_csv(d: &TabularDataset) -> String {
    let raw = d.denormalized();
    let mut out = d.feature_names.join(",");
    out.push_str(",class\n");
    for i in 0..raw.rows() {
        for v in raw.row(i) {
            out.push_str(&format!("{v},"));
        }
        let label = d.labels.as_ref().map_or(0, |l| l[i]);
        out.push_str(&d.class_names[label]);
        out.push('\n');
    }
    out
}
