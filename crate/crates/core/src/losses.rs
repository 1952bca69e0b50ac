//! Reconstruction loss, redundancy-reduction (Barlow Twins) loss and their
//! weighted sum, each with an exact gradient.

use serde::{Deserialize, Serialize};

use crate::error::{LoclError, Result};
use crate::matrix::Matrix;
use crate::nn::ops::{self, BatchNormCache, BATCHNORM_EPS};
use crate::nn::Tensor;

/// Per-batch loss breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_total: f64,
    pub l_contrastive: f64,
    pub l_reconstruction: f64,
    pub c_diag_mean: f64,
    pub c_offdiag_mean_sq: f64,
}

fn same_shape(a: &Matrix, b: &Matrix, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(LoclError::shape(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn mean_sq_dist(x_hat: &Matrix, x: &Matrix) -> f64 {
    let n = x.rows().max(1) as f64;
    x_hat
        .as_slice()
        .iter()
        .zip(x.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n
}

/// `1/2 * sum over branches of (1/n) * sum_i ||x_hat_i - x_i||^2`.
///
/// Targets are the clean inputs; padded positions must already be cropped.
pub fn reconstruction_loss(x_hat1: &Matrix, x1: &Matrix, x_hat2: &Matrix, x2: &Matrix) -> Result<f64> {
    same_shape(x_hat1, x1, "branch 1 reconstruction")?;
    same_shape(x_hat2, x2, "branch 2 reconstruction")?;
    Ok(0.5 * (mean_sq_dist(x_hat1, x1) + mean_sq_dist(x_hat2, x2)))
}

/// Gradients of [`reconstruction_loss`] w.r.t. both reconstructions.
pub fn reconstruction_grads(
    x_hat1: &Matrix,
    x1: &Matrix,
    x_hat2: &Matrix,
    x2: &Matrix,
) -> Result<(Matrix, Matrix)> {
    same_shape(x_hat1, x1, "branch 1 reconstruction")?;
    same_shape(x_hat2, x2, "branch 2 reconstruction")?;
    let grad = |xh: &Matrix, x: &Matrix| {
        let n = x.rows().max(1) as f64;
        let data = xh
            .as_slice()
            .iter()
            .zip(x.as_slice())
            .map(|(a, b)| (a - b) / n)
            .collect();
        Matrix::from_vec(x.rows(), x.cols(), data).expect("same shape")
    };
    Ok((grad(x_hat1, x1), grad(x_hat2, x2)))
}

/// Batch cross-correlation of two embedding batches, with what its
/// backward pass needs.
pub struct CrossCorrelation {
    pub c: Matrix,
    norm1: BatchNormCache,
    norm2: BatchNormCache,
}

/// Standardize every embedding dimension across the batch, then
/// `C = z1_norm^T z2_norm / n`.
pub fn cross_correlation(z1: &Matrix, z2: &Matrix) -> Result<CrossCorrelation> {
    same_shape(z1, z2, "cross-correlation inputs")?;
    let (n, d) = z1.shape();
    if n < 2 {
        return Err(LoclError::invalid(format!(
            "cross-correlation needs a batch of at least 2, got {n}"
        )));
    }
    let norm1 = ops::batchnorm_forward(&Tensor::from(z1.clone()), BATCHNORM_EPS)?;
    let norm2 = ops::batchnorm_forward(&Tensor::from(z2.clone()), BATCHNORM_EPS)?;
    let (a, b) = (norm1.normalized.data(), norm2.normalized.data());
    let mut c = Matrix::zeros(d, d);
    for s in 0..n {
        let (ra, rb) = (&a[s * d..(s + 1) * d], &b[s * d..(s + 1) * d]);
        for (i, &ai) in ra.iter().enumerate() {
            for (cv, bj) in c.row_mut(i).iter_mut().zip(rb) {
                *cv += ai * bj;
            }
        }
    }
    c.as_mut_slice().iter_mut().for_each(|v| *v /= n as f64);
    Ok(CrossCorrelation { c, norm1, norm2 })
}

impl CrossCorrelation {
    /// Map `dL/dC` to `(dL/dz1, dL/dz2)` through the standardization.
    pub fn backward(&self, grad_c: &Matrix) -> Result<(Matrix, Matrix)> {
        same_shape(grad_c, &self.c, "cross-correlation gradient")?;
        let (n, d) = (self.norm1.normalized.dim(0), self.c.rows());
        let (a, b) = (self.norm1.normalized.data(), self.norm2.normalized.data());
        let mut ga = Tensor::zeros(&[n, d]);
        let mut gb = Tensor::zeros(&[n, d]);
        let inv_n = 1.0 / n as f64;
        for s in 0..n {
            let (ra, rb) = (&a[s * d..(s + 1) * d], &b[s * d..(s + 1) * d]);
            for (i, &ai) in ra.iter().enumerate() {
                let gc = grad_c.row(i);
                ga.data_mut()[s * d + i] =
                    inv_n * gc.iter().zip(rb).map(|(g, v)| g * v).sum::<f64>();
                let gbrow = &mut gb.data_mut()[s * d..(s + 1) * d];
                for (out, g) in gbrow.iter_mut().zip(gc) {
                    *out += inv_n * g * ai;
                }
            }
        }
        let gz1 = ops::batchnorm_backward(&ga, &self.norm1)?;
        let gz2 = ops::batchnorm_backward(&gb, &self.norm2)?;
        Ok((Matrix::try_from(gz1)?, Matrix::try_from(gz2)?))
    }
}

fn check_square(c: &Matrix) -> Result<()> {
    if c.rows() != c.cols() {
        return Err(LoclError::shape(format!(
            "cross-correlation matrix must be square, got {:?}",
            c.shape()
        )));
    }
    Ok(())
}

/// `sum_i (1 - C_ii)^2 + lambda * sum_{i != j} C_ij^2`.
pub fn barlow_twins_loss(c: &Matrix, lambda: f64) -> Result<f64> {
    check_square(c)?;
    let mut on = 0.0;
    let mut off = 0.0;
    for i in 0..c.rows() {
        for j in 0..c.cols() {
            if i == j {
                on += (1.0 - c[(i, i)]).powi(2);
            } else {
                off += c[(i, j)].powi(2);
            }
        }
    }
    Ok(on + lambda * off)
}

pub fn barlow_twins_grad(c: &Matrix, lambda: f64) -> Result<Matrix> {
    check_square(c)?;
    let mut g = Matrix::zeros(c.rows(), c.cols());
    for i in 0..c.rows() {
        for j in 0..c.cols() {
            g[(i, j)] = if i == j {
                -2.0 * (1.0 - c[(i, i)])
            } else {
                2.0 * lambda * c[(i, j)]
            };
        }
    }
    Ok(g)
}

/// Diagonal mean and mean squared off-diagonal entry of `C`.
pub fn correlation_summary(c: &Matrix) -> (f64, f64) {
    let d = c.rows();
    let diag = (0..d).map(|i| c[(i, i)]).sum::<f64>() / d.max(1) as f64;
    let off_count = d * d - d;
    let off = if off_count == 0 {
        0.0
    } else {
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    s += c[(i, j)].powi(2);
                }
            }
        }
        s / off_count as f64
    };
    (diag, off)
}

/// `l_total = l_contrastive + alpha * l_reconstruction`.
pub fn combined_loss(l_contrastive: f64, l_reconstruction: f64, alpha: f64, c: Option<&Matrix>) -> LossReport {
    let (c_diag_mean, c_offdiag_mean_sq) = c.map_or((0.0, 0.0), correlation_summary);
    LossReport {
        l_total: l_contrastive + alpha * l_reconstruction,
        l_contrastive,
        l_reconstruction,
        c_diag_mean,
        c_offdiag_mean_sq,
    }
}

/// Inputs of the joint objective for one batch: embeddings of both branches
/// and their cropped reconstructions with clean targets.
pub struct TwinOutputs<'a> {
    pub z1: &'a Matrix,
    pub z2: &'a Matrix,
    pub x_hat1: &'a Matrix,
    pub x1: &'a Matrix,
    pub x_hat2: &'a Matrix,
    pub x2: &'a Matrix,
}

pub struct TwinGrads {
    pub z1: Matrix,
    pub z2: Matrix,
    pub x_hat1: Matrix,
    pub x_hat2: Matrix,
}

/// Value and gradient of `L_c + alpha * L_r` w.r.t. embeddings and
/// reconstructions.
pub fn joint_objective(out: &TwinOutputs<'_>, alpha: f64, lambda: f64) -> Result<(LossReport, TwinGrads)> {
    let cc = cross_correlation(out.z1, out.z2)?;
    let l_c = barlow_twins_loss(&cc.c, lambda)?;
    let l_r = reconstruction_loss(out.x_hat1, out.x1, out.x_hat2, out.x2)?;
    let report = combined_loss(l_c, l_r, alpha, Some(&cc.c));

    let (gz1, gz2) = cc.backward(&barlow_twins_grad(&cc.c, lambda)?)?;
    let (mut gx1, mut gx2) = reconstruction_grads(out.x_hat1, out.x1, out.x_hat2, out.x2)?;
    for g in [&mut gx1, &mut gx2] {
        g.as_mut_slice().iter_mut().for_each(|v| *v *= alpha);
    }
    Ok((
        report,
        TwinGrads {
            z1: gz1,
            z2: gz2,
            x_hat1: gx1,
            x_hat2: gx2,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn reconstruction_fixtures() {
        let x = m(&[vec![1.0, 2.0, 3.0, 4.0]]);
        assert_eq!(reconstruction_loss(&x, &x, &x, &x).unwrap(), 0.0);
        let shifted = m(&[vec![2.0, 3.0, 4.0, 5.0]]);
        assert_eq!(reconstruction_loss(&shifted, &x, &x, &x).unwrap(), 2.0);
        let doubled = m(&[vec![3.0, 4.0, 5.0, 6.0]]);
        assert_eq!(reconstruction_loss(&doubled, &x, &x, &x).unwrap(), 8.0);
        assert!(reconstruction_loss(&x, &m(&[vec![1.0]]), &x, &x).is_err());
    }

    #[test]
    fn reconstruction_is_branch_symmetric() {
        let a = m(&[vec![0.1, 0.2], vec![0.3, -0.4]]);
        let b = m(&[vec![1.1, -0.2], vec![0.0, 0.4]]);
        let c = m(&[vec![0.5], vec![0.7]]);
        let d = m(&[vec![-0.5], vec![0.2]]);
        assert_eq!(
            reconstruction_loss(&a, &b, &c, &d).unwrap(),
            reconstruction_loss(&c, &d, &a, &b).unwrap()
        );
    }

    #[test]
    fn cross_correlation_of_orthogonal_signs_is_identity() {
        let z = m(&[
            vec![1.0, 1.0],
            vec![1.0, -1.0],
            vec![-1.0, 1.0],
            vec![-1.0, -1.0],
        ]);
        let cc = cross_correlation(&z, &z).unwrap();
        let scale = 1.0 / (1.0 + BATCHNORM_EPS);
        assert!((cc.c[(0, 0)] - scale).abs() < 1e-15);
        assert!((cc.c[(1, 1)] - scale).abs() < 1e-15);
        assert_eq!(cc.c[(0, 1)], 0.0);
        assert_eq!(cc.c[(1, 0)], 0.0);
        assert!(cross_correlation(&m(&[vec![1.0, 2.0]]), &m(&[vec![1.0, 2.0]])).is_err());
    }

    #[test]
    fn barlow_twins_fixtures() {
        assert_eq!(barlow_twins_loss(&Matrix::identity(4), 0.005).unwrap(), 0.0);
        assert_eq!(barlow_twins_loss(&Matrix::zeros(3, 3), 7.0).unwrap(), 3.0);
        let c = m(&[vec![1.0, 0.5], vec![0.5, 1.0]]);
        assert!((barlow_twins_loss(&c, 0.005).unwrap() - 0.0025).abs() < 1e-15);
        assert!(barlow_twins_loss(&Matrix::zeros(2, 3), 0.005).is_err());
    }

    #[test]
    fn combined_fixtures() {
        assert_eq!(combined_loss(0.0, 0.0, 1.0, None).l_total, 0.0);
        assert_eq!(combined_loss(1.0, 2.0, 0.5, None).l_total, 2.0);
        let r = combined_loss(1.5, 2.0, 0.0, None);
        assert_eq!((r.l_total, r.l_reconstruction), (1.5, 2.0));
    }

    #[test]
    fn summary_of_identity() {
        assert_eq!(correlation_summary(&Matrix::identity(3)), (1.0, 0.0));
    }
}
