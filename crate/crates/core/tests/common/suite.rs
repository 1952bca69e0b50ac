//! Finite-difference checks for every layer and the composed model.
//! Each check returns the max relative error it observed.

use locl::losses::{joint_objective, TwinOutputs};
use locl::matrix::Matrix;
use locl::nn::ops;
use locl::nn::Tensor;
use locl::ordering::{alternative_order, split_features, OrderingVariant};
use locl::pipeline::model::Branch;
use locl::pipeline::{EncoderKind, TrainConfig, TwinModel};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::*;

fn with_data(t: &Tensor, data: &[f64]) -> Tensor {
    Tensor::from_vec(t.shape(), data.to_vec()).unwrap()
}

pub fn conv1d(n: usize, cin: usize, cout: usize, len: usize, k: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let x = random_tensor(&[n, cin, len], &mut r);
    let w = random_tensor(&[cout, cin, k], &mut r);
    let b = random_tensor(&[cout], &mut r);
    let up = random_tensor(&[n, cout, len], &mut r);
    let g = ops::conv1d_backward(&up, &x, &w).unwrap();
    let loss = |x: &Tensor, w: &Tensor, b: &Tensor| dot(ops::conv1d_forward(x, w, b).unwrap().data(), up.data());
    let ex = check_grad(x.data(), g.input.data(), None, |v| loss(&with_data(&x, v), &w, &b));
    let ew = check_grad(w.data(), g.weight.data(), None, |v| loss(&x, &with_data(&w, v), &b));
    let eb = check_grad(b.data(), g.bias.data(), None, |v| loss(&x, &w, &with_data(&b, v)));
    ex.max(ew).max(eb)
}

pub fn dense(n: usize, fin: usize, fout: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let x = random_tensor(&[n, fin], &mut r);
    let w = random_tensor(&[fout, fin], &mut r);
    let b = random_tensor(&[fout], &mut r);
    let up = random_tensor(&[n, fout], &mut r);
    let g = ops::dense_backward(&up, &x, &w).unwrap();
    let loss = |x: &Tensor, w: &Tensor, b: &Tensor| dot(ops::dense_forward(x, w, b).unwrap().data(), up.data());
    let ex = check_grad(x.data(), g.input.data(), None, |v| loss(&with_data(&x, v), &w, &b));
    let ew = check_grad(w.data(), g.weight.data(), None, |v| loss(&x, &with_data(&w, v), &b));
    let eb = check_grad(b.data(), g.bias.data(), None, |v| loss(&x, &w, &with_data(&b, v)));
    ex.max(ew).max(eb)
}

pub fn maxpool(n: usize, c: usize, len: usize, factor: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let x = distinct_tensor(&[n, c, len], &mut r);
    let (y, arg) = ops::maxpool1d_forward(&x, factor).unwrap();
    let up = random_tensor(y.shape(), &mut r);
    let gx = ops::maxpool1d_backward(&up, &arg, x.shape()).unwrap();
    check_grad(x.data(), gx.data(), None, |v| {
        dot(ops::maxpool1d_forward(&with_data(&x, v), factor).unwrap().0.data(), up.data())
    })
}

pub fn upsample(n: usize, c: usize, len: usize, factor: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let x = random_tensor(&[n, c, len], &mut r);
    let up = random_tensor(&[n, c, len * factor], &mut r);
    let gx = ops::upsample1d_backward(&up, factor).unwrap();
    check_grad(x.data(), gx.data(), None, |v| {
        dot(ops::upsample1d_forward(&with_data(&x, v), factor).unwrap().data(), up.data())
    })
}

pub fn leaky_relu(shape: &[usize], slope: f64, seed: u64) -> f64 {
    let mut r = rng(seed);
    let x = random_tensor_off_zero(shape, 0.01, &mut r);
    let up = random_tensor(shape, &mut r);
    let gx = ops::leaky_relu_backward(&up, &x, slope).unwrap();
    check_grad(x.data(), gx.data(), None, |v| {
        dot(ops::leaky_relu_forward(&with_data(&x, v), slope).data(), up.data())
    })
}

pub fn batchnorm(n: usize, d: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let z = random_tensor(&[n, d], &mut r);
    let up = random_tensor(&[n, d], &mut r);
    let cache = ops::batchnorm_forward(&z, ops::BATCHNORM_EPS).unwrap();
    let gz = ops::batchnorm_backward(&up, &cache).unwrap();
    check_grad(z.data(), gz.data(), None, |v| {
        let c = ops::batchnorm_forward(&with_data(&z, v), ops::BATCHNORM_EPS).unwrap();
        dot(c.normalized.data(), up.data())
    })
}

/// Zero biases combined with LeakyReLU's small negative slope leave some
/// pre-activations within the difference step of the kink, so composed
/// checks run at a point with random biases.
fn randomize_biases<'a>(params: impl Iterator<Item = &'a mut Tensor>, r: &mut ChaCha8Rng) {
    for t in params {
        if t.shape().len() == 1 {
            t.data_mut().iter_mut().for_each(|v| *v = r.gen_range(-0.5..0.5));
        }
    }
}

fn tiny_config(kind: EncoderKind) -> TrainConfig {
    TrainConfig {
        batch_size: 4,
        latent_dim: 4,
        channel_plan: vec![2, 3, 3],
        encoder_kind: kind,
        ..TrainConfig::default()
    }
}

/// One branch's encoder-decoder under `dot(rz, z) + dot(rx, x_hat)`,
/// checked at `coords` random parameter coordinates.
pub fn branch(width: usize, coords: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let cfg = tiny_config(EncoderKind::Conv);
    let mut b = Branch::init(EncoderKind::Conv, width, &cfg, seed);
    randomize_biases(b.encoder.params_mut().chain(b.decoder.params_mut()), &mut r);
    let x = Matrix::try_from(random_tensor(&[4, width], &mut r)).unwrap();
    let rz = random_tensor(&[4, cfg.latent_dim], &mut r);
    let rx = random_tensor(&[4, width], &mut r);
    let loss = |b: &Branch| {
        let p = b.forward(&x).unwrap();
        dot(p.z.as_slice(), rz.data()) + dot(p.x_hat.as_slice(), rx.data())
    };
    let pass = b.forward(&x).unwrap();
    b.encoder.zero_grad();
    b.decoder.zero_grad();
    b.backward(
        &pass,
        &Matrix::try_from(rz.clone()).unwrap(),
        &Matrix::try_from(rx.clone()).unwrap(),
    )
    .unwrap();
    let mut worst: f64 = 0.0;
    let n_nets = 2;
    for net in 0..n_nets {
        let n_params = if net == 0 { b.encoder.params().count() } else { b.decoder.params().count() };
        for p in 0..n_params {
            let (values, grads) = {
                let t = if net == 0 { b.encoder.params().nth(p) } else { b.decoder.params().nth(p) }.unwrap();
                (t.data().to_vec(), t.grad().unwrap().to_vec())
            };
            let picks = sample_coords(values.len(), coords, &mut r);
            let mut probe = b.clone();
            worst = worst.max(check_grad(&values, &grads, Some(&picks), |v| {
                let t = if net == 0 {
                    probe.encoder.params_mut().nth(p)
                } else {
                    probe.decoder.params_mut().nth(p)
                }
                .unwrap();
                t.data_mut().copy_from_slice(v);
                loss(&probe)
            }));
        }
    }
    worst
}

/// Gradient of the joint objective with respect to embeddings and
/// reconstructions.
pub fn joint_loss(n: usize, d: usize, w1: usize, w2: usize, alpha: f64, lambda: f64, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut m = |rows, cols| Matrix::try_from(random_tensor(&[rows, cols], &mut r)).unwrap();
    let (z1, z2, xh1, x1, xh2, x2) = (m(n, d), m(n, d), m(n, w1), m(n, w1), m(n, w2), m(n, w2));
    let value = |z1: &Matrix, z2: &Matrix, xh1: &Matrix, xh2: &Matrix| {
        let out = TwinOutputs {
            z1,
            z2,
            x_hat1: xh1,
            x1: &x1,
            x_hat2: xh2,
            x2: &x2,
        };
        joint_objective(&out, alpha, lambda).unwrap().0.l_total
    };
    let out = TwinOutputs {
        z1: &z1,
        z2: &z2,
        x_hat1: &xh1,
        x1: &x1,
        x_hat2: &xh2,
        x2: &x2,
    };
    let (_, g) = joint_objective(&out, alpha, lambda).unwrap();
    let re = |m: &Matrix, v: &[f64]| Matrix::from_vec(m.rows(), m.cols(), v.to_vec()).unwrap();
    [
        check_grad(z1.as_slice(), g.z1.as_slice(), None, |v| value(&re(&z1, v), &z2, &xh1, &xh2)),
        check_grad(z2.as_slice(), g.z2.as_slice(), None, |v| value(&z1, &re(&z2, v), &xh1, &xh2)),
        check_grad(xh1.as_slice(), g.x_hat1.as_slice(), None, |v| value(&z1, &z2, &re(&xh1, v), &xh2)),
        check_grad(xh2.as_slice(), g.x_hat2.as_slice(), None, |v| value(&z1, &z2, &xh1, &re(&xh2, v))),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Full twin model (both branches, corruption fixed, joint loss) against
/// finite differences on every parameter coordinate.
pub fn end_to_end(kind: EncoderKind, n: usize, m: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let cfg = TrainConfig {
        batch_size: n,
        ..tiny_config(kind)
    };
    let o = alternative_order(m, OrderingVariant::Random, seed).unwrap();
    let split = split_features(&o, 0.0).unwrap();
    let names = (0..m).map(|j| format!("f{j}")).collect();
    let mut model = TwinModel::new(o, split, names, TrainConfig { seed, ..cfg }).unwrap();
    randomize_biases(model.named_params_mut().into_iter().map(|(_, t)| t), &mut r);
    let x = Matrix::try_from(random_tensor(&[n, m], &mut r)).unwrap();
    let batch = model.make_batch(&x, 11, 12).unwrap();
    model.gradient(&batch).unwrap();

    let snapshot: Vec<(Vec<f64>, Vec<f64>)> = model
        .named_params_mut()
        .into_iter()
        .map(|(_, t)| (t.data().to_vec(), t.grad().unwrap().to_vec()))
        .collect();
    let mut worst: f64 = 0.0;
    for (p, (values, grads)) in snapshot.iter().enumerate() {
        let mut probe = model.clone();
        worst = worst.max(check_grad(values, grads, None, |v| {
            probe.named_params_mut()[p].1.data_mut().copy_from_slice(v);
            probe.objective(&batch).unwrap().l_total
        }));
    }
    worst
}

/// Every layer check with its shapes; (name, max relative error).
pub fn layer_suite() -> Vec<(&'static str, f64)> {
    vec![
        ("conv1d k=3", conv1d(4, 3, 2, 16, 3, 1)),
        ("conv1d k=5", conv1d(2, 2, 3, 7, 5, 2)),
        ("conv1d k=1", conv1d(3, 1, 2, 5, 1, 3)),
        ("dense", dense(4, 6, 3, 4)),
        ("maxpool1d", maxpool(4, 3, 16, 2, 5)),
        ("upsample1d", upsample(4, 3, 8, 2, 6)),
        ("leakyrelu", leaky_relu(&[4, 3, 16], 0.01, 7)),
        ("batchnorm", batchnorm(4, 3, 8)),
        ("batchnorm n=9", batchnorm(9, 5, 9)),
    ]
}

pub fn composed_suite() -> Vec<(&'static str, f64)> {
    vec![
        ("encoder-decoder width 5", branch(5, 20, 10)),
        ("encoder-decoder width 16", branch(16, 20, 11)),
        ("joint loss", joint_loss(6, 4, 3, 5, 0.7, 0.005, 12)),
        ("end-to-end conv n=4 m=8 d=4", end_to_end(EncoderKind::Conv, 4, 8, 13)),
        ("end-to-end dense n=4 m=8 d=4", end_to_end(EncoderKind::Dense, 4, 8, 14)),
    ]
}
