use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::augmentation::corrupt_view;
use crate::data::TabularDataset;
use crate::error::{LoclError, Result};
use crate::losses::{joint_objective, LossReport, TwinOutputs};
use crate::matrix::Matrix;
use crate::nn::container::{self, ArrayEntry};
use crate::nn::{Layer, LayerSpec, Network, Tape, Tensor};
use crate::ordering::{FeatureOrdering, SplitPlan};
use crate::pipeline::config::{EncoderKind, TrainConfig};
use crate::rng::{self, tag};

pub const CHECKPOINT_KIND: &str = "twin-model";

/// `width` rounded up to a multiple of `2^stages`.
pub fn padded_width(width: usize, stages: usize) -> usize {
    let unit = 1usize << stages;
    width.div_ceil(unit) * unit
}

/// Layer plans for one branch's encoder and decoder.
pub fn architecture(kind: EncoderKind, width: usize, cfg: &TrainConfig) -> (usize, Vec<LayerSpec>, Vec<LayerSpec>) {
    let slope = cfg.leaky_slope;
    let d = cfg.latent_dim;
    let act = || LayerSpec::Leakyrelu { slope };
    match kind {
        EncoderKind::Conv => {
            let stages = cfg.pool_stages();
            let lp = padded_width(width, stages);
            let l0 = lp >> stages;
            let k = cfg.kernel_size;
            let chans = &cfg.channel_plan;
            let last = *chans.last().expect("validated non-empty");

            let mut enc = vec![LayerSpec::Reshape { shape: vec![1, lp] }];
            let mut prev = 1;
            for &c in chans {
                enc.push(LayerSpec::Conv1d {
                    in_channels: prev,
                    out_channels: c,
                    kernel: k,
                });
                enc.push(act());
                enc.push(LayerSpec::Maxpool1d { factor: 2 });
                prev = c;
            }
            enc.push(LayerSpec::Reshape { shape: vec![last * l0] });
            enc.push(LayerSpec::Dense {
                inputs: last * l0,
                outputs: d,
            });

            let mut dec = vec![
                LayerSpec::Dense {
                    inputs: d,
                    outputs: last * l0,
                },
                act(),
                LayerSpec::Reshape {
                    shape: vec![last, l0],
                },
            ];
            let mut prev = last;
            for s in (0..stages).rev() {
                let out = chans[s.saturating_sub(1)];
                dec.push(LayerSpec::Upsample1d { factor: 2 });
                dec.push(LayerSpec::Conv1d {
                    in_channels: prev,
                    out_channels: out,
                    kernel: k,
                });
                dec.push(act());
                prev = out;
            }
            dec.push(LayerSpec::Conv1d {
                in_channels: prev,
                out_channels: 1,
                kernel: k,
            });
            dec.push(LayerSpec::Reshape { shape: vec![lp] });
            (lp, enc, dec)
        }
        EncoderKind::Dense => {
            let h2 = *cfg.channel_plan.last().expect("validated non-empty");
            let h1 = 2 * h2;
            let dense = |inputs, outputs| LayerSpec::Dense { inputs, outputs };
            let enc = vec![dense(width, h1), act(), dense(h1, h2), act(), dense(h2, d)];
            let dec = vec![dense(d, h2), act(), dense(h2, h1), act(), dense(h1, width)];
            (width, enc, dec)
        }
    }
}

/// One autoencoder over a feature subset.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub encoder: Network,
    pub decoder: Network,
    /// Subset width before padding.
    pub width: usize,
    pub padded_width: usize,
}

/// Forward-pass record of a branch.
pub struct BranchPass {
    pub z: Matrix,
    pub x_hat: Matrix,
    enc_tape: Tape,
    dec_tape: Tape,
}

impl Branch {
    pub fn init(kind: EncoderKind, width: usize, cfg: &TrainConfig, seed: u64) -> Self {
        let (padded_width, enc, dec) = architecture(kind, width, cfg);
        let mut r = rng::stream(seed, &[tag::INIT]);
        Branch {
            encoder: Network::init(enc, &mut r),
            decoder: Network::init(dec, &mut r),
            width,
            padded_width,
        }
    }

    /// Zero-pad columns on the right to the encoder's input width.
    fn pad(&self, x: &Matrix) -> Result<Tensor> {
        if x.cols() != self.width {
            return Err(LoclError::shape(format!(
                "branch expects {} features, got {}",
                self.width,
                x.cols()
            )));
        }
        let n = x.rows();
        let mut t = Tensor::zeros(&[n, self.padded_width]);
        for i in 0..n {
            t.data_mut()[i * self.padded_width..i * self.padded_width + self.width]
                .copy_from_slice(x.row(i));
        }
        Ok(t)
    }

    fn crop(&self, y: &Tensor) -> Matrix {
        let n = y.dim(0);
        let mut m = Matrix::zeros(n, self.width);
        for i in 0..n {
            m.row_mut(i).copy_from_slice(
                &y.data()[i * self.padded_width..i * self.padded_width + self.width],
            );
        }
        m
    }

    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        Matrix::try_from(self.encoder.infer(&self.pad(x)?)?)
    }

    pub fn forward(&self, noisy: &Matrix) -> Result<BranchPass> {
        let (z, enc_tape) = self.encoder.forward(&self.pad(noisy)?)?;
        let (y, dec_tape) = self.decoder.forward(&z)?;
        Ok(BranchPass {
            x_hat: self.crop(&y),
            z: Matrix::try_from(z)?,
            enc_tape,
            dec_tape,
        })
    }

    /// Accumulate parameter gradients given `dL/dz` and `dL/dx_hat`
    /// (padded positions receive zero gradient).
    pub fn backward(&mut self, pass: &BranchPass, grad_z: &Matrix, grad_x_hat: &Matrix) -> Result<()> {
        let g_dec = self.pad(grad_x_hat)?;
        let g_from_dec = self.decoder.backward(&pass.dec_tape, g_dec)?;
        let mut g_z = g_from_dec;
        for (a, b) in g_z.data_mut().iter_mut().zip(grad_z.as_slice()) {
            *a += b;
        }
        self.encoder.backward(&pass.enc_tape, g_z)?;
        Ok(())
    }
}

/// Clean and corrupted inputs of both branches for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinBatch {
    pub clean1: Matrix,
    pub noisy1: Matrix,
    pub clean2: Matrix,
    pub noisy2: Matrix,
}

/// Concatenated branch embeddings, `N x 2d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    pub z: Matrix,
    pub row_ids: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BranchMeta {
    width: usize,
    padded_width: usize,
    encoder: Vec<LayerSpec>,
    decoder: Vec<LayerSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointMeta {
    config: TrainConfig,
    ordering: FeatureOrdering,
    split: SplitPlan,
    feature_names: Vec<String>,
    branches: Vec<BranchMeta>,
}

/// Both autoencoders plus the ordering and split that feed them.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinModel {
    pub branch1: Branch,
    pub branch2: Branch,
    pub ordering: FeatureOrdering,
    pub split: SplitPlan,
    pub config: TrainConfig,
    pub feature_names: Vec<String>,
}

impl TwinModel {
    pub fn new(
        ordering: FeatureOrdering,
        split: SplitPlan,
        feature_names: Vec<String>,
        config: TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        let kind = config.encoder_kind;
        let branch1 = Branch::init(kind, split.subset1.len(), &config, rng::derive_seed(config.seed, &[1]));
        let branch2 = Branch::init(kind, split.subset2.len(), &config, rng::derive_seed(config.seed, &[2]));
        Ok(TwinModel {
            branch1,
            branch2,
            ordering,
            split,
            config,
            feature_names,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    /// Build both branches' views of `x` (rows = samples, all features).
    pub fn make_batch(&self, x: &Matrix, seed1: u64, seed2: u64) -> Result<TwinBatch> {
        let clean1 = x.select_cols(&self.split.subset1);
        let clean2 = x.select_cols(&self.split.subset2);
        let (p, mode) = (self.config.mask_p, self.config.corruption);
        Ok(TwinBatch {
            noisy1: corrupt_view(&clean1, p, mode, seed1)?,
            noisy2: corrupt_view(&clean2, p, mode, seed2)?,
            clean1,
            clean2,
        })
    }

    fn passes(&self, batch: &TwinBatch) -> Result<(BranchPass, BranchPass)> {
        Ok((self.branch1.forward(&batch.noisy1)?, self.branch2.forward(&batch.noisy2)?))
    }

    /// Loss of a batch without touching gradients.
    pub fn objective(&self, batch: &TwinBatch) -> Result<LossReport> {
        let (p1, p2) = self.passes(batch)?;
        let out = TwinOutputs {
            z1: &p1.z,
            z2: &p2.z,
            x_hat1: &p1.x_hat,
            x1: &batch.clean1,
            x_hat2: &p2.x_hat,
            x2: &batch.clean2,
        };
        Ok(joint_objective(&out, self.config.alpha, self.config.lambda)?.0)
    }

    /// Zero all gradients, then fill them with `d(objective)/d(params)`.
    pub fn gradient(&mut self, batch: &TwinBatch) -> Result<LossReport> {
        self.zero_grad();
        let (p1, p2) = self.passes(batch)?;
        let out = TwinOutputs {
            z1: &p1.z,
            z2: &p2.z,
            x_hat1: &p1.x_hat,
            x1: &batch.clean1,
            x_hat2: &p2.x_hat,
            x2: &batch.clean2,
        };
        let (report, grads) = joint_objective(&out, self.config.alpha, self.config.lambda)?;
        self.branch1.backward(&p1, &grads.z1, &grads.x_hat1)?;
        self.branch2.backward(&p2, &grads.z2, &grads.x_hat2)?;
        Ok(report)
    }

    pub fn zero_grad(&mut self) {
        for net in self.networks_mut() {
            net.zero_grad();
        }
    }

    fn networks(&self) -> [(&'static str, &Network); 4] {
        [
            ("enc1.", &self.branch1.encoder),
            ("dec1.", &self.branch1.decoder),
            ("enc2.", &self.branch2.encoder),
            ("dec2.", &self.branch2.decoder),
        ]
    }

    fn networks_mut(&mut self) -> [&mut Network; 4] {
        [
            &mut self.branch1.encoder,
            &mut self.branch1.decoder,
            &mut self.branch2.encoder,
            &mut self.branch2.decoder,
        ]
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let prefixes = ["enc1.", "dec1.", "enc2.", "dec2."];
        self.networks_mut()
            .into_iter()
            .zip(prefixes)
            .flat_map(|(net, p)| net.named_params_mut(p))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.networks().iter().map(|(_, n)| n.num_params()).sum()
    }

    fn check_features(&self, names: &[String]) -> Result<()> {
        if names != self.feature_names.as_slice() {
            return Err(LoclError::shape(format!(
                "dataset features do not match the model ({} vs {} features{})",
                names.len(),
                self.feature_names.len(),
                if names.len() == self.feature_names.len() {
                    ", names differ"
                } else {
                    ""
                }
            )));
        }
        Ok(())
    }

    /// Uncorrupted embeddings of the given rows (all rows when `rows` is None).
    pub fn embed(&self, dataset: &TabularDataset, rows: Option<&[usize]>) -> Result<EmbeddingMatrix> {
        self.check_features(&dataset.feature_names)?;
        let row_ids: Vec<usize> = match rows {
            Some(r) => r.to_vec(),
            None => (0..dataset.n_rows()).collect(),
        };
        let d = self.latent_dim();
        let mut z = Matrix::zeros(row_ids.len(), 2 * d);
        let chunk = self.config.batch_size.max(1);
        for (c, ids) in row_ids.chunks(chunk).enumerate() {
            let x = dataset.x.select_rows(ids);
            let z1 = self.branch1.encode(&x.select_cols(&self.split.subset1))?;
            let z2 = self.branch2.encode(&x.select_cols(&self.split.subset2))?;
            for i in 0..ids.len() {
                let row = z.row_mut(c * chunk + i);
                row[..d].copy_from_slice(z1.row(i));
                row[d..].copy_from_slice(z2.row(i));
            }
        }
        Ok(EmbeddingMatrix { z, row_ids })
    }

    pub fn write_checkpoint<W: Write>(&self, w: W) -> Result<()> {
        let meta = CheckpointMeta {
            config: self.config.clone(),
            ordering: self.ordering.clone(),
            split: self.split.clone(),
            feature_names: self.feature_names.clone(),
            branches: [&self.branch1, &self.branch2]
                .iter()
                .map(|b| BranchMeta {
                    width: b.width,
                    padded_width: b.padded_width,
                    encoder: b.encoder.specs(),
                    decoder: b.decoder.specs(),
                })
                .collect(),
        };
        let mut arrays = Vec::new();
        for (prefix, net) in self.networks() {
            for (i, layer) in net.layers.iter().enumerate() {
                for (j, p) in layer.params.iter().enumerate() {
                    let kind = if j == 0 { "weight" } else { "bias" };
                    arrays.push((
                        ArrayEntry {
                            name: format!("{prefix}layer{i}.{kind}"),
                            shape: p.shape().to_vec(),
                        },
                        p.data(),
                    ));
                }
            }
        }
        container::write_container(w, CHECKPOINT_KIND, &meta, &arrays)
    }

    pub fn read_checkpoint<R: Read>(r: R) -> Result<Self> {
        let c = container::read_container::<_, CheckpointMeta>(r, CHECKPOINT_KIND)?;
        let meta = c.meta;
        meta.config.validate()?;
        if meta.branches.len() != 2 {
            return Err(LoclError::Checkpoint("expected two branches".into()));
        }
        let mut arrays = c.arrays.into_iter();
        let mut build = |prefix: &str, specs: &[LayerSpec]| -> Result<Network> {
            let mut layers = Vec::with_capacity(specs.len());
            for (i, spec) in specs.iter().enumerate() {
                let mut params = Vec::new();
                for (j, shape) in spec.param_shapes().into_iter().enumerate() {
                    let kind = if j == 0 { "weight" } else { "bias" };
                    let name = format!("{prefix}layer{i}.{kind}");
                    let (entry, data) = arrays
                        .next()
                        .ok_or_else(|| LoclError::Checkpoint(format!("missing array {name}")))?;
                    if entry.name != name || entry.shape != shape {
                        return Err(LoclError::Checkpoint(format!(
                            "array {} {:?} does not match manifest layer {name} {shape:?}",
                            entry.name, entry.shape
                        )));
                    }
                    params.push(Tensor::from_vec(&shape, data)?);
                }
                layers.push(Layer::with_params(spec.clone(), params)?);
            }
            Ok(Network { layers })
        };
        let mut branches = Vec::with_capacity(2);
        for (k, b) in meta.branches.iter().enumerate() {
            let encoder = build(&format!("enc{}.", k + 1), &b.encoder)?;
            let decoder = build(&format!("dec{}.", k + 1), &b.decoder)?;
            branches.push(Branch {
                encoder,
                decoder,
                width: b.width,
                padded_width: b.padded_width,
            });
        }
        if arrays.next().is_some() {
            return Err(LoclError::Checkpoint("extra arrays after manifest layers".into()));
        }
        let branch2 = branches.pop().expect("two branches");
        let branch1 = branches.pop().expect("two branches");
        if branch1.width != meta.split.subset1.len() || branch2.width != meta.split.subset2.len() {
            return Err(LoclError::Checkpoint("branch widths disagree with split".into()));
        }
        Ok(TwinModel {
            branch1,
            branch2,
            ordering: meta.ordering,
            split: meta.split,
            config: meta.config,
            feature_names: meta.feature_names,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ordering::{alternative_order, split_features, OrderingVariant};

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 4,
            latent_dim: 4,
            channel_plan: vec![2, 3, 4],
            ..TrainConfig::default()
        }
    }

    fn model(m: usize, cfg: TrainConfig) -> TwinModel {
        let o = alternative_order(m, OrderingVariant::Original, 0).unwrap();
        let s = split_features(&o, 0.0).unwrap();
        TwinModel::new(o, s, (0..m).map(|j| format!("f{j}")).collect(), cfg).unwrap()
    }

    #[test]
    fn padding_to_multiple_of_eight() {
        assert_eq!(padded_width(5, 3), 8);
        assert_eq!(padded_width(8, 3), 8);
        assert_eq!(padded_width(9, 3), 16);
        assert_eq!(padded_width(1, 3), 8);
    }

    #[test]
    fn decoder_output_matches_padded_input_for_every_width() {
        let cfg = small_cfg();
        for width in 1..=20 {
            let b = Branch::init(EncoderKind::Conv, width, &cfg, 1);
            let x = Matrix::zeros(3, width);
            let pass = b.forward(&x).unwrap();
            assert_eq!(pass.z.shape(), (3, cfg.latent_dim));
            assert_eq!(pass.x_hat.shape(), (3, width));
            let y = b.decoder.infer(&Tensor::from(pass.z.clone())).unwrap();
            assert_eq!(y.shape(), &[3, padded_width(width, 3)]);
        }
    }

    #[test]
    fn default_conv_plan_matches_described_layers() {
        let (lp, enc, dec) = architecture(EncoderKind::Conv, 10, &TrainConfig::default());
        assert_eq!(lp, 16);
        let convs = enc.iter().filter(|s| matches!(s, LayerSpec::Conv1d { .. })).count();
        let pools = enc.iter().filter(|s| matches!(s, LayerSpec::Maxpool1d { .. })).count();
        let ups = dec.iter().filter(|s| matches!(s, LayerSpec::Upsample1d { .. })).count();
        assert_eq!((convs, pools, ups), (3, 3, 3));
        assert_eq!(
            enc.last(),
            Some(&LayerSpec::Dense { inputs: 64 * 2, outputs: 64 })
        );
        assert!(matches!(
            dec.last(),
            Some(LayerSpec::Reshape { .. })
        ));
    }

    #[test]
    fn embedding_width_is_twice_latent() {
        let cfg = TrainConfig {
            latent_dim: 64,
            ..small_cfg()
        };
        let m = model(9, cfg);
        let x = Matrix::from_vec(5, 9, (0..45).map(|v| (v as f64).sin()).collect()).unwrap();
        let d = TabularDataset::from_matrix(x, None).unwrap();
        let e = m.embed(&d, None).unwrap();
        assert_eq!(e.z.shape(), (5, 128));
        assert_eq!(e, m.embed(&d, None).unwrap());
    }

    #[test]
    fn embed_rejects_feature_mismatch() {
        let m = model(6, small_cfg());
        let d = TabularDataset::from_matrix(Matrix::zeros(3, 5), None).unwrap();
        assert!(m.embed(&d, None).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = model(7, small_cfg());
        let mut buf = Vec::new();
        m.write_checkpoint(&mut buf).unwrap();
        let back = TwinModel::read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back, m);
        let mut buf2 = Vec::new();
        back.write_checkpoint(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
        assert!(TwinModel::read_checkpoint(&buf[..buf.len() - 8]).is_err());
    }

    #[test]
    fn dense_variant_skips_padding() {
        let cfg = TrainConfig {
            encoder_kind: EncoderKind::Dense,
            ..small_cfg()
        };
        let m = model(7, cfg);
        assert_eq!(m.branch1.padded_width, 4);
        assert_eq!(m.branch2.padded_width, 3);
    }
}
