//! Dataset and embedding files in the shared binary container, plus
//! content fingerprints.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{FeatureNorm, NormMode, TabularDataset};
use crate::error::{LoclError, Result};
use crate::matrix::Matrix;
use crate::nn::container::{read_container, write_container, ArrayEntry};
use crate::pipeline::{EmbeddingMatrix, TwinModel};

pub const DATASET_KIND: &str = "dataset";
pub const EMBEDDINGS_KIND: &str = "embeddings";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_fingerprint(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| LoclError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetMeta {
    feature_names: Vec<String>,
    class_names: Vec<String>,
    norm_stats: Vec<FeatureNorm>,
    mode: NormMode,
    has_labels: bool,
}

pub fn encode_dataset(d: &TabularDataset) -> Result<Vec<u8>> {
    let meta = DatasetMeta {
        feature_names: d.feature_names.clone(),
        class_names: d.class_names.clone(),
        norm_stats: d.norm_stats.clone(),
        mode: d.mode,
        has_labels: d.labels.is_some(),
    };
    let labels: Vec<f64> = d.labels.iter().flatten().map(|&l| l as f64).collect();
    let mut arrays = vec![(
        ArrayEntry {
            name: "x".into(),
            shape: vec![d.n_rows(), d.n_features()],
        },
        d.x.as_slice(),
    )];
    if d.labels.is_some() {
        arrays.push((
            ArrayEntry {
                name: "labels".into(),
                shape: vec![d.n_rows()],
            },
            &labels,
        ));
    }
    let mut buf = Vec::new();
    write_container(&mut buf, DATASET_KIND, &meta, &arrays)?;
    Ok(buf)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<TabularDataset> {
    let c = read_container::<_, DatasetMeta>(bytes, DATASET_KIND)?;
    let mut arrays = c.arrays.into_iter();
    let (xe, xd) = arrays
        .next()
        .ok_or_else(|| LoclError::Checkpoint("dataset has no x array".into()))?;
    let [rows, cols] = xe.shape[..] else {
        return Err(LoclError::Checkpoint(format!("x has shape {:?}", xe.shape)));
    };
    let labels = if c.meta.has_labels {
        let (_, ld) = arrays
            .next()
            .ok_or_else(|| LoclError::Checkpoint("dataset has no labels array".into()))?;
        Some(ld.into_iter().map(|v| v as usize).collect())
    } else {
        None
    };
    Ok(TabularDataset {
        x: Matrix::from_vec(rows, cols, xd)?,
        feature_names: c.meta.feature_names,
        labels,
        class_names: c.meta.class_names,
        norm_stats: c.meta.norm_stats,
        mode: c.meta.mode,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EmbeddingMeta {
    latent_dim: usize,
}

pub fn encode_embeddings(e: &EmbeddingMatrix) -> Result<Vec<u8>> {
    let ids: Vec<f64> = e.row_ids.iter().map(|&i| i as f64).collect();
    let arrays = [
        (
            ArrayEntry {
                name: "z".into(),
                shape: vec![e.z.rows(), e.z.cols()],
            },
            e.z.as_slice(),
        ),
        (
            ArrayEntry {
                name: "row_ids".into(),
                shape: vec![ids.len()],
            },
            &ids[..],
        ),
    ];
    let mut buf = Vec::new();
    write_container(&mut buf, EMBEDDINGS_KIND, &EmbeddingMeta { latent_dim: e.z.cols() / 2 }, &arrays)?;
    Ok(buf)
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    let c = read_container::<_, EmbeddingMeta>(bytes, EMBEDDINGS_KIND)?;
    let mut arrays = c.arrays.into_iter();
    match (arrays.next(), arrays.next()) {
        (Some((ze, zd)), Some((_, ids))) if ze.shape.len() == 2 => Ok(EmbeddingMatrix {
            z: Matrix::from_vec(ze.shape[0], ze.shape[1], zd)?,
            row_ids: ids.into_iter().map(|v| v as usize).collect(),
        }),
        _ => Err(LoclError::Checkpoint("embedding file needs z and row_ids arrays".into())),
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| LoclError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes)
        .and_then(|_| w.flush())
        .map_err(|e| LoclError::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| LoclError::io(path, e))
}

pub fn save_checkpoint(model: &TwinModel, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    model.write_checkpoint(&mut buf)?;
    write_bytes(path, &buf)
}

pub fn load_checkpoint(path: &Path) -> Result<TwinModel> {
    let file = File::open(path).map_err(|e| LoclError::io(path, e))?;
    TwinModel::read_checkpoint(BufReader::new(file))
}
