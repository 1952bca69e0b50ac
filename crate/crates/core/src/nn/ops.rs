//! Forward and backward kernels. Batched layouts: `(n, C, L)` for 1-D
//! feature maps, `(n, features)` for dense inputs. Reductions over the batch
//! run in sample-index order.

use crate::error::{LoclError, Result};
use crate::nn::Tensor;

pub struct ParamGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

fn dims3(x: &Tensor, what: &str) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [n, c, l] => Ok((n, c, l)),
        ref s => Err(LoclError::shape(format!("{what}: expected (n, C, L), got {s:?}"))),
    }
}

fn dims2(x: &Tensor, what: &str) -> Result<(usize, usize)> {
    match *x.shape() {
        [n, f] => Ok((n, f)),
        ref s => Err(LoclError::shape(format!("{what}: expected (n, F), got {s:?}"))),
    }
}

/// `[lo, hi)` of output positions whose tap `shift` lands inside `0..len`.
#[inline]
fn tap_range(shift: isize, len: usize) -> (usize, usize) {
    let lo = (-shift).max(0) as usize;
    let hi = (len as isize - shift).clamp(0, len as isize) as usize;
    (lo, hi.max(lo))
}

fn conv_shapes(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(usize, usize, usize, usize, usize)> {
    let (n, cin, len) = dims3(x, "conv1d input")?;
    let (cout, wcin, k) = match *w.shape() {
        [o, i, k] => (o, i, k),
        ref s => return Err(LoclError::shape(format!("conv1d weight shape {s:?}"))),
    };
    if wcin != cin {
        return Err(LoclError::shape(format!(
            "conv1d channel mismatch: input has {cin}, weight expects {wcin}"
        )));
    }
    if k % 2 == 0 {
        return Err(LoclError::invalid(format!("conv1d kernel {k} must be odd")));
    }
    if b.shape() != [cout] {
        return Err(LoclError::shape(format!("conv1d bias shape {:?}", b.shape())));
    }
    Ok((n, cin, len, cout, k))
}

/// Stride-1 cross-correlation with zero "same" padding of `(k-1)/2`.
pub fn conv1d_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, cin, len, cout, k) = conv_shapes(x, w, b)?;
    let pad = (k / 2) as isize;
    let (xs, ws) = (x.data(), w.data());
    let mut out = Tensor::zeros(&[n, cout, len]);
    let od = out.data_mut();
    for s in 0..n {
        for o in 0..cout {
            let orow = &mut od[(s * cout + o) * len..(s * cout + o + 1) * len];
            orow.iter_mut().for_each(|v| *v = b.data()[o]);
            for c in 0..cin {
                let xrow = &xs[(s * cin + c) * len..(s * cin + c + 1) * len];
                for t in 0..k {
                    let wt = ws[(o * cin + c) * k + t];
                    let shift = t as isize - pad;
                    let (lo, hi) = tap_range(shift, len);
                    let src = &xrow[(lo as isize + shift) as usize..(hi as isize + shift) as usize];
                    for (ov, xv) in orow[lo..hi].iter_mut().zip(src) {
                        *ov += wt * xv;
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn conv1d_backward(grad_out: &Tensor, x: &Tensor, w: &Tensor) -> Result<ParamGrads> {
    let bias_shape = [w.dim(0)];
    let (n, cin, len, cout, k) = conv_shapes(x, w, &Tensor::zeros(&bias_shape))?;
    if grad_out.shape() != [n, cout, len] {
        return Err(LoclError::shape(format!(
            "conv1d grad_out {:?}, expected {:?}",
            grad_out.shape(),
            [n, cout, len]
        )));
    }
    let pad = (k / 2) as isize;
    let (xs, ws, gs) = (x.data(), w.data(), grad_out.data());
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(w.shape());
    let mut gb = Tensor::zeros(&bias_shape);
    {
        let (gxd, gwd, gbd) = (gx.data_mut(), gw.data_mut(), gb.data_mut());
        for s in 0..n {
            for o in 0..cout {
                let grow = &gs[(s * cout + o) * len..(s * cout + o + 1) * len];
                gbd[o] += grow.iter().sum::<f64>();
                for c in 0..cin {
                    let base = (s * cin + c) * len;
                    let xrow = &xs[base..base + len];
                    for t in 0..k {
                        let shift = t as isize - pad;
                        let (lo, hi) = tap_range(shift, len);
                        let (a, z) = ((lo as isize + shift) as usize, (hi as isize + shift) as usize);
                        let widx = (o * cin + c) * k + t;
                        gwd[widx] += grow[lo..hi]
                            .iter()
                            .zip(&xrow[a..z])
                            .map(|(g, v)| g * v)
                            .sum::<f64>();
                        let wt = ws[widx];
                        for (gxv, g) in gxd[base + a..base + z].iter_mut().zip(&grow[lo..hi]) {
                            *gxv += wt * g;
                        }
                    }
                }
            }
        }
    }
    Ok(ParamGrads {
        input: gx,
        weight: gw,
        bias: gb,
    })
}

fn dense_shapes(x: &Tensor, w: &Tensor) -> Result<(usize, usize, usize)> {
    let (n, fin) = dims2(x, "dense input")?;
    let (fout, win) = match *w.shape() {
        [o, i] => (o, i),
        ref s => return Err(LoclError::shape(format!("dense weight shape {s:?}"))),
    };
    if win != fin {
        return Err(LoclError::shape(format!(
            "dense input width {fin}, weight expects {win}"
        )));
    }
    Ok((n, fin, fout))
}

/// `y = x W^T + b` with `W` of shape `(out, in)`.
pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, fin, fout) = dense_shapes(x, w)?;
    if b.shape() != [fout] {
        return Err(LoclError::shape(format!("dense bias shape {:?}", b.shape())));
    }
    let mut out = Tensor::zeros(&[n, fout]);
    let od = out.data_mut();
    for s in 0..n {
        let xrow = &x.data()[s * fin..(s + 1) * fin];
        for o in 0..fout {
            let wrow = &w.data()[o * fin..(o + 1) * fin];
            od[s * fout + o] =
                b.data()[o] + wrow.iter().zip(xrow).map(|(a, v)| a * v).sum::<f64>();
        }
    }
    Ok(out)
}

pub fn dense_backward(grad_out: &Tensor, x: &Tensor, w: &Tensor) -> Result<ParamGrads> {
    let (n, fin, fout) = dense_shapes(x, w)?;
    if grad_out.shape() != [n, fout] {
        return Err(LoclError::shape(format!(
            "dense grad_out {:?}, expected {:?}",
            grad_out.shape(),
            [n, fout]
        )));
    }
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(w.shape());
    let mut gb = Tensor::zeros(&[fout]);
    {
        let (gxd, gwd, gbd) = (gx.data_mut(), gw.data_mut(), gb.data_mut());
        for s in 0..n {
            let xrow = &x.data()[s * fin..(s + 1) * fin];
            let gxrow = &mut gxd[s * fin..(s + 1) * fin];
            for o in 0..fout {
                let g = grad_out.data()[s * fout + o];
                gbd[o] += g;
                let wrow = &w.data()[o * fin..(o + 1) * fin];
                for (a, wv) in gxrow.iter_mut().zip(wrow) {
                    *a += g * wv;
                }
                for (a, xv) in gwd[o * fin..(o + 1) * fin].iter_mut().zip(xrow) {
                    *a += g * xv;
                }
            }
        }
    }
    Ok(ParamGrads {
        input: gx,
        weight: gw,
        bias: gb,
    })
}

/// Non-overlapping max pool. Returns the pooled map and, per output cell,
/// the flat input index of the winner (first maximum on ties).
pub fn maxpool1d_forward(x: &Tensor, factor: usize) -> Result<(Tensor, Vec<usize>)> {
    let (n, c, len) = dims3(x, "maxpool1d input")?;
    if factor == 0 || len % factor != 0 {
        return Err(LoclError::shape(format!(
            "maxpool1d: length {len} not divisible by factor {factor}"
        )));
    }
    let olen = len / factor;
    let mut out = Tensor::zeros(&[n, c, olen]);
    let mut argmax = Vec::with_capacity(n * c * olen);
    let xs = x.data();
    for (idx, v) in out.data_mut().iter_mut().enumerate() {
        let row = idx / olen;
        let start = row * len + (idx % olen) * factor;
        let mut best = start;
        for i in start + 1..start + factor {
            if xs[i] > xs[best] {
                best = i;
            }
        }
        *v = xs[best];
        argmax.push(best);
    }
    Ok((out, argmax))
}

pub fn maxpool1d_backward(grad_out: &Tensor, argmax: &[usize], input_shape: &[usize]) -> Result<Tensor> {
    if grad_out.numel() != argmax.len() {
        return Err(LoclError::shape("maxpool1d grad_out does not match recorded argmax"));
    }
    let mut gx = Tensor::zeros(input_shape);
    let gd = gx.data_mut();
    for (&i, g) in argmax.iter().zip(grad_out.data()) {
        gd[i] += g;
    }
    Ok(gx)
}

/// Nearest-neighbour repeat along the length axis.
pub fn upsample1d_forward(x: &Tensor, factor: usize) -> Result<Tensor> {
    let (n, c, len) = dims3(x, "upsample1d input")?;
    let mut out = Tensor::zeros(&[n, c, len * factor]);
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        *v = x.data()[i / factor];
    }
    Ok(out)
}

pub fn upsample1d_backward(grad_out: &Tensor, factor: usize) -> Result<Tensor> {
    let (n, c, len) = dims3(grad_out, "upsample1d grad_out")?;
    if factor == 0 || len % factor != 0 {
        return Err(LoclError::shape("upsample1d grad_out length not a multiple of factor"));
    }
    let mut gx = Tensor::zeros(&[n, c, len / factor]);
    for (i, chunk) in grad_out.data().chunks_exact(factor).enumerate() {
        gx.data_mut()[i] = chunk.iter().sum();
    }
    Ok(gx)
}

pub fn leaky_relu_forward(x: &Tensor, slope: f64) -> Tensor {
    let data = x
        .data()
        .iter()
        .map(|&v| if v > 0.0 { v } else { slope * v })
        .collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

pub fn leaky_relu_backward(grad_out: &Tensor, x: &Tensor, slope: f64) -> Result<Tensor> {
    if grad_out.shape() != x.shape() {
        return Err(LoclError::shape("leaky_relu grad_out/input shape mismatch"));
    }
    let data = grad_out
        .data()
        .iter()
        .zip(x.data())
        .map(|(&g, &v)| if v > 0.0 { g } else { slope * g })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

pub const BATCHNORM_EPS: f64 = 1e-5;

pub struct BatchNormCache {
    /// Normalized output.
    pub normalized: Tensor,
    /// `1 / sqrt(var + eps)` per column.
    pub inv_std: Vec<f64>,
}

/// Standardize each column of an `(n, d)` batch with its batch mean and
/// population variance: `(z - mean) / sqrt(var + eps)`.
pub fn batchnorm_forward(z: &Tensor, eps: f64) -> Result<BatchNormCache> {
    let (n, d) = dims2(z, "batchnorm input")?;
    if n < 2 {
        return Err(LoclError::invalid(format!(
            "batch normalization needs at least 2 rows, got {n}"
        )));
    }
    let zs = z.data();
    let mut out = Tensor::zeros(&[n, d]);
    let mut inv_std = vec![0.0; d];
    for j in 0..d {
        let mean = (0..n).map(|i| zs[i * d + j]).sum::<f64>() / n as f64;
        let var = (0..n)
            .map(|i| (zs[i * d + j] - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        let inv = 1.0 / (var + eps).sqrt();
        inv_std[j] = inv;
        for i in 0..n {
            out.data_mut()[i * d + j] = (zs[i * d + j] - mean) * inv;
        }
    }
    Ok(BatchNormCache {
        normalized: out,
        inv_std,
    })
}

pub fn batchnorm_backward(grad_out: &Tensor, cache: &BatchNormCache) -> Result<Tensor> {
    let (n, d) = dims2(&cache.normalized, "batchnorm cache")?;
    if grad_out.shape() != [n, d] {
        return Err(LoclError::shape("batchnorm grad_out shape mismatch"));
    }
    let (g, xh) = (grad_out.data(), cache.normalized.data());
    let mut gx = Tensor::zeros(&[n, d]);
    for j in 0..d {
        let sum_g: f64 = (0..n).map(|i| g[i * d + j]).sum();
        let sum_gx: f64 = (0..n).map(|i| g[i * d + j] * xh[i * d + j]).sum();
        let scale = cache.inv_std[j] / n as f64;
        for i in 0..n {
            gx.data_mut()[i * d + j] =
                scale * (n as f64 * g[i * d + j] - sum_g - xh[i * d + j] * sum_gx);
        }
    }
    Ok(gx)
}
