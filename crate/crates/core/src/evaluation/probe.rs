//! Multinomial logistic regression on frozen embeddings.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::mean_std;
use crate::error::{LoclError, Result};
use crate::matrix::Matrix;
use crate::rng::{self, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// L2 penalty `reg * ||W||^2 / 2` (bias unpenalized).
    pub reg: f64,
    pub max_iter: usize,
    /// Stop once the full gradient norm drops below this.
    pub tol: f64,
    /// When set, `reg` is chosen from this grid by 3-fold CV on the
    /// probe's training rows.
    pub reg_grid: Option<Vec<f64>>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            reg: 1e-3,
            max_iter: 5000,
            tol: 1e-6,
            reg_grid: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    /// `K x p` weights acting on standardized inputs.
    pub w: Matrix,
    pub b: Vec<f64>,
    /// Label id of each output row, ascending.
    pub classes: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub reg: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub objective: f64,
}

/// Standardized design matrix and class-index targets.
#[derive(Debug, Clone)]
pub struct ProbeProblem {
    pub x: Matrix,
    /// Index into `classes` for every row.
    pub y: Vec<usize>,
    pub classes: Vec<usize>,
    pub reg: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

fn standardize(z: &Matrix, mean: &[f64], std: &[f64]) -> Matrix {
    let mut x = z.clone();
    for i in 0..x.rows() {
        for (j, v) in x.row_mut(i).iter_mut().enumerate() {
            *v = (*v - mean[j]) / std[j];
        }
    }
    x
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for e in v.iter_mut() {
        *e = (*e - max).exp();
        sum += *e;
    }
    v.iter_mut().for_each(|e| *e /= sum);
}

impl ProbeProblem {
    pub fn new(z: &Matrix, labels: &[usize], reg: f64) -> Result<Self> {
        if z.rows() != labels.len() {
            return Err(LoclError::shape(format!(
                "{} embedding rows but {} labels",
                z.rows(),
                labels.len()
            )));
        }
        if !(reg.is_finite() && reg >= 0.0) {
            return Err(LoclError::invalid(format!("probe reg must be finite and >= 0, got {reg}")));
        }
        let mut classes = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() < 2 {
            return Err(LoclError::SingleClass("probe labels".into()));
        }
        let (mut mean, mut std) = (Vec::with_capacity(z.cols()), Vec::with_capacity(z.cols()));
        for j in 0..z.cols() {
            let (m, s) = mean_std(z.column(j).into_iter());
            mean.push(m);
            std.push(if s > 1e-12 { s } else { 1.0 });
        }
        let y = labels
            .iter()
            .map(|l| classes.binary_search(l).expect("class present"))
            .collect();
        Ok(ProbeProblem {
            x: standardize(z, &mean, &std),
            y,
            classes,
            reg,
            mean,
            std,
        })
    }

    pub fn n_params(&self) -> usize {
        self.classes.len() * (self.x.cols() + 1)
    }

    /// Objective and gradient at `params` = row-major `W` followed by `b`.
    ///
    /// `(1/n) * sum_i -log softmax(W x_i + b)[y_i] + reg/2 * ||W||^2`
    pub fn value_grad(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let (k, p, n) = (self.classes.len(), self.x.cols(), self.x.rows());
        let (w, b) = params.split_at(k * p);
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        let mut probs = vec![0.0; k];
        for i in 0..n {
            let xi = self.x.row(i);
            for c in 0..k {
                probs[c] = b[c] + w[c * p..(c + 1) * p].iter().zip(xi).map(|(a, v)| a * v).sum::<f64>();
            }
            softmax_in_place(&mut probs);
            loss -= probs[self.y[i]].max(f64::MIN_POSITIVE).ln();
            probs[self.y[i]] -= 1.0;
            for c in 0..k {
                let g = probs[c] / n as f64;
                for (gw, v) in grad[c * p..(c + 1) * p].iter_mut().zip(xi) {
                    *gw += g * v;
                }
                grad[k * p + c] += g;
            }
        }
        loss /= n as f64;
        let mut penalty = 0.0;
        for (g, wv) in grad[..k * p].iter_mut().zip(w) {
            *g += self.reg * wv;
            penalty += wv * wv;
        }
        (loss + 0.5 * self.reg * penalty, grad)
    }

    /// Upper bound on the gradient's Lipschitz constant:
    /// `lambda_max([X 1]^T [X 1] / n) / 2 + reg`, with the eigenvalue found
    /// by power iteration and inflated slightly to stay an upper bound.
    pub fn lipschitz(&self) -> f64 {
        let (n, p) = self.x.shape();
        let mut v = vec![1.0 / ((p + 1) as f64).sqrt(); p + 1];
        let mut lambda = 0.0;
        for _ in 0..200 {
            let mut xv = vec![0.0; n];
            for (i, out) in xv.iter_mut().enumerate() {
                *out = v[p] + self.x.row(i).iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
            }
            let mut next = vec![0.0; p + 1];
            for (i, s) in xv.iter().enumerate() {
                for (nv, a) in next.iter_mut().zip(self.x.row(i)) {
                    *nv += a * s;
                }
                next[p] += s;
            }
            next.iter_mut().for_each(|e| *e /= n as f64);
            let norm = next.iter().map(|e| e * e).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            let converged = (norm - lambda).abs() <= 1e-10 * norm;
            lambda = norm;
            v = next.into_iter().map(|e| e / norm).collect();
            if converged {
                break;
            }
        }
        lambda * 1.05 / 2.0 + self.reg
    }

    /// Full-batch accelerated gradient descent (step `1/L`, Nesterov
    /// momentum with gradient-based restart) from `init`. Stops when the
    /// gradient norm at the current point drops below `tol`.
    pub fn solve(&self, init: Vec<f64>, max_iter: usize, tol: f64) -> ProbeModel {
        let step = 1.0 / self.lipschitz();
        let mut x = init;
        let mut params = x.clone();
        let mut t = 1.0f64;
        let (mut value, mut grad) = self.value_grad(&params);
        let mut gnorm = norm(&grad);
        let mut iterations = 0;
        while iterations < max_iter && gnorm >= tol {
            let x_next: Vec<f64> = params.iter().zip(&grad).map(|(p, g)| p - step * g).collect();
            // Restart momentum when it points uphill.
            let uphill: f64 = grad.iter().zip(x_next.iter().zip(&x)).map(|(g, (a, b))| g * (a - b)).sum();
            if uphill > 0.0 {
                t = 1.0;
            }
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let beta = (t - 1.0) / t_next;
            params = x_next.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
            x = x_next;
            t = t_next;
            (value, grad) = self.value_grad(&params);
            gnorm = norm(&grad);
            iterations += 1;
        }
        let (k, p) = (self.classes.len(), self.x.cols());
        let b = params.split_off(k * p);
        ProbeModel {
            w: Matrix::from_vec(k, p, params).expect("k*p params"),
            b,
            classes: self.classes.clone(),
            mean: self.mean.clone(),
            std: self.std.clone(),
            reg: self.reg,
            iterations,
            grad_norm: gnorm,
            objective: value,
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|e| e * e).sum::<f64>().sqrt()
}

/// Fit a probe from zero initialization.
pub fn train_probe(z: &Matrix, labels: &[usize], cfg: &ProbeConfig) -> Result<ProbeModel> {
    let reg = match &cfg.reg_grid {
        Some(grid) if !grid.is_empty() => select_reg(z, labels, grid, cfg)?,
        _ => cfg.reg,
    };
    let problem = ProbeProblem::new(z, labels, reg)?;
    Ok(problem.solve(vec![0.0; problem.n_params()], cfg.max_iter, cfg.tol))
}

/// Fit a probe from a seeded Gaussian initialization (scale 0.1).
pub fn train_probe_from_random(z: &Matrix, labels: &[usize], cfg: &ProbeConfig, seed: u64) -> Result<ProbeModel> {
    let problem = ProbeProblem::new(z, labels, cfg.reg)?;
    let mut r = rng::stream(seed, &[tag::PROBE]);
    let init = (0..problem.n_params())
        .map(|_| 0.1 * r.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(problem.solve(init, cfg.max_iter, cfg.tol))
}

/// Pick the grid value with the best 3-fold CV accuracy (first on ties).
/// Falls back to `cfg.reg` when some class has fewer than 3 rows.
pub fn select_reg(z: &Matrix, labels: &[usize], grid: &[f64], cfg: &ProbeConfig) -> Result<f64> {
    const FOLDS: usize = 3;
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut fold_of = vec![0; labels.len()];
    for &c in &classes {
        let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if rows.len() < FOLDS {
            return Ok(cfg.reg);
        }
        for (j, &r) in rows.iter().enumerate() {
            fold_of[r] = j % FOLDS;
        }
    }
    let mut best = (f64::NEG_INFINITY, cfg.reg);
    for &reg in grid {
        let mut correct = 0.0;
        for f in 0..FOLDS {
            let train: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] != f).collect();
            let test: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] == f).collect();
            let tl: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
            let problem = ProbeProblem::new(&z.select_rows(&train), &tl, reg)?;
            let m = problem.solve(vec![0.0; problem.n_params()], cfg.max_iter, cfg.tol);
            let el: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
            correct += evaluate(&m, &z.select_rows(&test), &el)? * test.len() as f64;
        }
        let acc = correct / labels.len() as f64;
        if acc > best.0 {
            best = (acc, reg);
        }
    }
    Ok(best.1)
}

impl ProbeModel {
    /// Class scores, one row per input row.
    pub fn logits(&self, z: &Matrix) -> Result<Matrix> {
        if z.cols() != self.w.cols() {
            return Err(LoclError::shape(format!(
                "probe expects {} embedding columns, got {}",
                self.w.cols(),
                z.cols()
            )));
        }
        let x = standardize(z, &self.mean, &self.std);
        let k = self.classes.len();
        let mut out = Matrix::zeros(x.rows(), k);
        for i in 0..x.rows() {
            for c in 0..k {
                out[(i, c)] = self.b[c] + self.w.row(c).iter().zip(x.row(i)).map(|(a, v)| a * v).sum::<f64>();
            }
        }
        Ok(out)
    }

    /// Predicted label ids; ties go to the lowest class id.
    pub fn predict(&self, z: &Matrix) -> Result<Vec<usize>> {
        let s = self.logits(z)?;
        Ok((0..s.rows())
            .map(|i| {
                let row = s.row(i);
                let mut best = 0;
                for c in 1..row.len() {
                    if row[c] > row[best] {
                        best = c;
                    }
                }
                self.classes[best]
            })
            .collect())
    }
}

/// Fraction of rows whose predicted label matches.
pub fn evaluate(probe: &ProbeModel, z: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(LoclError::invalid("cannot evaluate on an empty test set"));
    }
    if z.rows() != labels.len() {
        return Err(LoclError::shape(format!(
            "{} embedding rows but {} labels",
            z.rows(),
            labels.len()
        )));
    }
    let pred = probe.predict(z)?;
    let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> (Matrix, Vec<usize>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..20 {
            let t = i as f64 * 0.1;
            rows.push(vec![-2.0 + t.sin(), -2.0 + t.cos()]);
            labels.push(0);
            rows.push(vec![2.0 + t.cos(), 2.0 - t.sin()]);
            labels.push(1);
        }
        (Matrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn separable_blobs_are_fit_exactly() {
        let (z, y) = blobs();
        let m = train_probe(&z, &y, &ProbeConfig::default()).unwrap();
        assert_eq!(evaluate(&m, &z, &y).unwrap(), 1.0);
    }

    #[test]
    fn single_class_and_empty_inputs_fail() {
        let (z, _) = blobs();
        assert!(matches!(
            train_probe(&z, &vec![3; 40], &ProbeConfig::default()),
            Err(LoclError::SingleClass(_))
        ));
        let (z, y) = blobs();
        let m = train_probe(&z, &y, &ProbeConfig::default()).unwrap();
        assert!(evaluate(&m, &Matrix::zeros(0, 2), &[]).is_err());
    }

    #[test]
    fn ties_go_to_lowest_class() {
        let m = ProbeModel {
            w: Matrix::zeros(3, 1),
            b: vec![0.5, 1.0, 1.0],
            classes: vec![2, 5, 7],
            mean: vec![0.0],
            std: vec![1.0],
            reg: 0.0,
            iterations: 0,
            grad_norm: 0.0,
            objective: 0.0,
        };
        assert_eq!(m.predict(&Matrix::zeros(2, 1)).unwrap(), vec![5, 5]);
    }

    #[test]
    fn lipschitz_bound_exceeds_curvature() {
        let (z, y) = blobs();
        let p = ProbeProblem::new(&z, &y, 0.0).unwrap();
        let l = p.lipschitz();
        // Along any direction the gradient change is bounded by L.
        let a = vec![0.3, -0.2, 0.1, 0.4, 0.0, 0.2];
        let b = vec![-0.5, 0.6, 0.2, -0.1, 0.3, -0.2];
        let (_, ga) = p.value_grad(&a);
        let (_, gb) = p.value_grad(&b);
        let dg = norm(&ga.iter().zip(&gb).map(|(x, y)| x - y).collect::<Vec<_>>());
        let dx = norm(&a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>());
        assert!(dg <= l * dx);
    }
}
