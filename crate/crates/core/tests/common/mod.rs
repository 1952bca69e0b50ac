#![allow(dead_code)]

use locl::matrix::Matrix;
use locl::nn::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub mod suite;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Values in [-1, 1] at least `gap` away from zero (keeps LeakyReLU off
/// its kink under finite-difference steps).
pub fn random_tensor_off_zero(shape: &[usize], gap: f64, r: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = r.gen_range(gap..1.0);
            if r.gen_bool(0.5) { v } else { -v }
        })
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Distinct values spaced at least 0.05 apart, shuffled, so max-pooling
/// winners do not change under small perturbations.
pub fn distinct_tensor(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
    use rand::seq::SliceRandom;
    let n: usize = shape.iter().product();
    let mut data: Vec<f64> = (0..n).map(|i| i as f64 * 0.05 - 0.5 + r.gen_range(0.0..0.01)).collect();
    data.shuffle(r);
    Tensor::from_vec(shape, data).unwrap()
}

pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared on an absolute scale.
pub const REL_FLOOR: f64 = 1e-3;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Central difference of `f` with respect to coordinate `i` of `x`.
pub fn central_diff(x: &mut [f64], i: usize, h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + h;
    let up = f(x);
    x[i] = orig - h;
    let down = f(x);
    x[i] = orig;
    (up - down) / (2.0 * h)
}

/// Max relative error over `coords` (all coordinates when None).
pub fn check_grad(
    x: &[f64],
    analytic: &[f64],
    coords: Option<&[usize]>,
    mut f: impl FnMut(&[f64]) -> f64,
) -> f64 {
    assert_eq!(x.len(), analytic.len());
    let mut x = x.to_vec();
    let all: Vec<usize> = (0..x.len()).collect();
    let coords = coords.unwrap_or(&all);
    coords
        .iter()
        .map(|&i| rel_err(analytic[i], central_diff(&mut x, i, FD_STEP, &mut f)))
        .fold(0.0, f64::max)
}

/// Up to `k` distinct random coordinates in `0..n`.
pub fn sample_coords(n: usize, k: usize, r: &mut ChaCha8Rng) -> Vec<usize> {
    use rand::seq::index::sample;
    sample(r, n, k.min(n)).into_vec()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---- Prüfer enumeration oracle ------------------------------------------

/// Edges of the labeled tree encoded by a Prüfer sequence over `0..m`.
pub fn prufer_decode(seq: &[usize], m: usize) -> Vec<(usize, usize)> {
    let mut degree = vec![1usize; m];
    for &s in seq {
        degree[s] += 1;
    }
    let mut edges = Vec::with_capacity(m - 1);
    for &s in seq {
        let leaf = (0..m).find(|&v| degree[v] == 1).unwrap();
        edges.push((leaf, s));
        degree[leaf] -= 1;
        degree[s] -= 1;
    }
    let rest: Vec<usize> = (0..m).filter(|&v| degree[v] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// Sum in ascending order, so equal edge sets give bit-equal totals.
pub fn tree_total(mut weights: Vec<f64>) -> f64 {
    weights.sort_by(f64::total_cmp);
    weights.iter().sum()
}

/// Maximum total weight over all m^(m-2) labeled spanning trees.
pub fn brute_force_max_tree(w: &Matrix) -> f64 {
    let m = w.rows();
    if m == 2 {
        return w[(0, 1)];
    }
    let len = m - 2;
    let total = m.pow(len as u32);
    let mut best = f64::NEG_INFINITY;
    let mut seq = vec![0usize; len];
    for code in 0..total {
        let mut c = code;
        for s in seq.iter_mut() {
            *s = c % m;
            c /= m;
        }
        let weight = tree_total(prufer_decode(&seq, m).iter().map(|&(a, b)| w[(a, b)]).collect());
        if weight > best {
            best = weight;
        }
    }
    best
}

// ---- naive reference computations ---------------------------------------

/// Direct four-loop "same" convolution with zero padding.
pub fn naive_conv1d(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let (n, cin, len) = (x.dim(0), x.dim(1), x.dim(2));
    let (cout, k) = (w.dim(0), w.dim(2));
    let pad = (k / 2) as isize;
    let mut out = vec![0.0; n * cout * len];
    for s in 0..n {
        for o in 0..cout {
            for t in 0..len {
                let mut acc = b.data()[o];
                for c in 0..cin {
                    for j in 0..k {
                        let src = t as isize + j as isize - pad;
                        if src >= 0 && (src as usize) < len {
                            acc += w.data()[(o * cin + c) * k + j] * x.data()[(s * cin + c) * len + src as usize];
                        }
                    }
                }
                out[(s * cout + o) * len + t] = acc;
            }
        }
    }
    Tensor::from_vec(&[n, cout, len], out).unwrap()
}

/// Pearson correlation by explicit two-pass sums.
pub fn naive_pearson(x: &Matrix) -> Matrix {
    let (n, m) = x.shape();
    let mut means = vec![0.0; m];
    for j in 0..m {
        for i in 0..n {
            means[j] += x[(i, j)];
        }
        means[j] /= n as f64;
    }
    let mut out = Matrix::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
            for i in 0..n {
                let da = x[(i, a)] - means[a];
                let db = x[(i, b)] - means[b];
                sab += da * db;
                saa += da * da;
                sbb += db * db;
            }
            out.as_mut_slice()[a * m + b] = sab / (saa.sqrt() * sbb.sqrt());
        }
    }
    out
}

pub fn random_symmetric(m: usize, r: &mut ChaCha8Rng) -> Matrix {
    let mut w = Matrix::identity(m);
    for i in 0..m {
        for j in i + 1..m {
            let v: f64 = r.gen_range(-1.0..1.0);
            w.as_mut_slice()[i * m + j] = v;
            w.as_mut_slice()[j * m + i] = v;
        }
    }
    w
}

pub fn abs_matrix(w: &Matrix) -> Matrix {
    let mut a = w.clone();
    a.as_mut_slice().iter_mut().for_each(|v| *v = v.abs());
    a
}
