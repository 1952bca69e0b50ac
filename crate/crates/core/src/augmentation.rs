//! Bernoulli feature masking.
//!
//! A corrupted view keeps unmasked cells and replaces masked ones:
//! `x~ = x * (1 - mask) + x_bar * mask`. With [`CorruptionMode::Marginal`]
//! the replacement `x_bar[i, j]` is `x[pi_j(i), j]` for a per-column random
//! permutation `pi_j` of the batch rows, i.e. a draw from that feature's
//! empirical marginal within the batch.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LoclError, Result};
use crate::matrix::Matrix;
use crate::rng::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptionMode {
    #[default]
    Marginal,
    Zero,
}

impl std::str::FromStr for CorruptionMode {
    type Err = LoclError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "marginal" => Ok(CorruptionMode::Marginal),
            "zero" => Ok(CorruptionMode::Zero),
            other => Err(LoclError::invalid(format!("unknown corruption mode {other:?}"))),
        }
    }
}

/// Binary mask, `n x width`, 1 = corrupt this cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskBatch {
    pub mask: Vec<u8>,
    pub rows: usize,
    pub width: usize,
    pub p: f64,
    pub seed: u64,
}

impl MaskBatch {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.width + j] == 1
    }

    pub fn rate(&self) -> f64 {
        self.mask.iter().map(|&b| b as f64).sum::<f64>() / self.mask.len().max(1) as f64
    }
}

fn check_rate(p: f64) -> Result<()> {
    if (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(LoclError::invalid(format!("mask rate {p} outside [0, 1)")))
    }
}

/// i.i.d. Bernoulli(p) mask, fully determined by `seed`.
pub fn sample_mask(n: usize, width: usize, p: f64, seed: u64) -> Result<MaskBatch> {
    check_rate(p)?;
    let mut rng = rng::stream(seed, &[tag::MASK]);
    let mask = (0..n * width)
        .map(|_| u8::from(rng.gen::<f64>() < p))
        .collect();
    Ok(MaskBatch {
        mask,
        rows: n,
        width,
        p,
        seed,
    })
}

/// Replacement values drawn per column by permuting the batch rows.
pub fn marginal_source(x: &Matrix, rng: &mut ChaCha8Rng) -> Matrix {
    let (n, w) = x.shape();
    let mut out = Matrix::zeros(n, w);
    let mut perm: Vec<usize> = (0..n).collect();
    for j in 0..w {
        perm.shuffle(rng);
        for (i, &src) in perm.iter().enumerate() {
            out[(i, j)] = x[(src, j)];
        }
    }
    out
}

/// Apply `mask` to `x`, taking masked values from `source`.
pub fn corrupt(x: &Matrix, mask: &MaskBatch, source: &Matrix) -> Result<Matrix> {
    if x.shape() != (mask.rows, mask.width) || x.shape() != source.shape() {
        return Err(LoclError::shape(format!(
            "batch {:?}, mask {:?}, source {:?}",
            x.shape(),
            (mask.rows, mask.width),
            source.shape()
        )));
    }
    let mut out = x.clone();
    for (k, v) in out.as_mut_slice().iter_mut().enumerate() {
        if mask.mask[k] == 1 {
            *v = source.as_slice()[k];
        }
    }
    Ok(out)
}

/// One corrupted view of a batch: mask and replacement source both come
/// from streams keyed by `seed`.
pub fn corrupt_view(x: &Matrix, p: f64, mode: CorruptionMode, seed: u64) -> Result<Matrix> {
    let mask = sample_mask(x.rows(), x.cols(), p, seed)?;
    let source = match mode {
        CorruptionMode::Marginal => marginal_source(x, &mut rng::stream(seed, &[tag::SHUFFLE])),
        CorruptionMode::Zero => Matrix::zeros(x.rows(), x.cols()),
    };
    corrupt(x, &mask, &source)
}

/// Seed of the view for `(epoch, batch, branch)` under a master seed.
pub fn view_seed(master: u64, epoch: u64, batch: u64, branch: u64) -> u64 {
    rng::derive_seed(master, &[tag::MASK, epoch, batch, branch])
}
