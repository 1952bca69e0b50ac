//! Finite-difference check of the hand-written backward passes: each layer
//! kind on its own, then one encoder-decoder branch end to end.
//!
//! cargo run --release --example gradient_check

use locl::nn::ops;
use locl::nn::Tensor;
use locl::pipeline::model::Branch;
use locl::pipeline::{EncoderKind, TrainConfig};
use locl::rng;
use locl::Matrix;
use rand::Rng;

const H: f64 = 1e-5;

fn rel(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

/// Worst relative error of `grad` against central differences of `f` at `x`.
fn check(x: &[f64], grad: &[f64], f: impl Fn(&[f64]) -> f64) -> f64 {
    let mut x = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + H;
        let up = f(&x);
        x[i] = orig - H;
        let down = f(&x);
        x[i] = orig;
        worst = worst.max(rel(grad[i], (up - down) / (2.0 * H)));
    }
    worst
}

fn random(shape: &[usize], r: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn main() -> locl::Result<()> {
    let mut r = rng::stream(3, &[]);

    // conv1d: loss = <probe, conv(x)>, so d loss / d x = conv backward of probe.
    let (x, w, b) = (random(&[2, 3, 8], &mut r), random(&[4, 3, 3], &mut r), random(&[4], &mut r));
    let probe = random(&[2, 4, 8], &mut r);
    let dot = |a: &Tensor, b: &Tensor| a.data().iter().zip(b.data()).map(|(p, q)| p * q).sum::<f64>();
    let g = ops::conv1d_backward(&probe, &x, &w)?;
    let loss_x = |v: &[f64]| dot(&probe, &ops::conv1d_forward(&Tensor::from_vec(&[2, 3, 8], v.to_vec()).unwrap(), &w, &b).unwrap());
    let loss_w = |v: &[f64]| dot(&probe, &ops::conv1d_forward(&x, &Tensor::from_vec(&[4, 3, 3], v.to_vec()).unwrap(), &b).unwrap());
    println!("conv1d   input  {:.2e}", check(x.data(), g.input.data(), loss_x));
    println!("conv1d   weight {:.2e}", check(w.data(), g.weight.data(), loss_w));

    let (x, w, b) = (random(&[4, 6], &mut r), random(&[3, 6], &mut r), random(&[3], &mut r));
    let probe = random(&[4, 3], &mut r);
    let g = ops::dense_backward(&probe, &x, &w)?;
    let loss_w = |v: &[f64]| dot(&probe, &ops::dense_forward(&x, &Tensor::from_vec(&[3, 6], v.to_vec()).unwrap(), &b).unwrap());
    println!("dense    weight {:.2e}", check(w.data(), g.weight.data(), loss_w));

    let z = random(&[5, 3], &mut r);
    let probe = random(&[5, 3], &mut r);
    let cache = ops::batchnorm_forward(&z, ops::BATCHNORM_EPS)?;
    let gz = ops::batchnorm_backward(&probe, &cache)?;
    let loss_z = |v: &[f64]| {
        let c = ops::batchnorm_forward(&Tensor::from_vec(&[5, 3], v.to_vec()).unwrap(), ops::BATCHNORM_EPS).unwrap();
        dot(&probe, &c.normalized)
    };
    println!("batchnorm input {:.2e}", check(z.data(), gz.data(), loss_z));

    // One branch end to end with respect to its input.
    let cfg = TrainConfig { latent_dim: 4, channel_plan: vec![2, 3, 3], ..TrainConfig::default() };
    let mut branch = Branch::init(EncoderKind::Conv, 7, &cfg, 5);
    for p in branch.encoder.params_mut().chain(branch.decoder.params_mut()) {
        if p.shape().len() == 1 {
            p.data_mut().iter_mut().for_each(|v| *v = r.gen_range(-0.5..0.5));
        }
    }
    let x = Matrix::from_vec(3, 7, (0..21).map(|_| r.gen_range(-1.0..1.0)).collect())?;
    let rz = Matrix::from_vec(3, 4, (0..12).map(|_| r.gen_range(-1.0..1.0)).collect())?;
    let rx = Matrix::from_vec(3, 7, (0..21).map(|_| r.gen_range(-1.0..1.0)).collect())?;
    let objective = |b: &Branch| {
        let pass = b.forward(&x).unwrap();
        let d = |a: &Matrix, b: &Matrix| a.as_slice().iter().zip(b.as_slice()).map(|(p, q)| p * q).sum::<f64>();
        d(&pass.z, &rz) + d(&pass.x_hat, &rx)
    };
    let pass = branch.forward(&x)?;
    branch.backward(&pass, &rz, &rx)?;
    let mut worst: f64 = 0.0;
    let count = branch.encoder.num_params() + branch.decoder.num_params();
    let mut probe = branch.clone();
    let n_tensors = branch.encoder.params().count() + branch.decoder.params().count();
    for t in 0..n_tensors {
        let grads = branch.encoder.params().chain(branch.decoder.params()).nth(t).unwrap().grad().unwrap().to_vec();
        for (i, &g) in grads.iter().enumerate() {
            let mut eval = |delta: f64| {
                let p = probe.encoder.params_mut().chain(probe.decoder.params_mut()).nth(t).unwrap();
                p.data_mut()[i] += delta;
                let v = objective(&probe);
                let p = probe.encoder.params_mut().chain(probe.decoder.params_mut()).nth(t).unwrap();
                p.data_mut()[i] -= delta;
                v
            };
            worst = worst.max(rel(g, (eval(H) - eval(-H)) / (2.0 * H)));
        }
    }
    println!("branch   all {count} parameters {worst:.2e}");
    Ok(())
}
