//! Versioned text checkpoints with bit-exact round trips.
//!
//! One JSON document holds the metadata (dimensions, vocabulary, training
//! configuration, seed) and every complex array as a flat row-major list of
//! [real, imaginary] double pairs. Serialization uses shortest-round-trip
//! float formatting, so save -> load -> save is byte-identical and every
//! stored entry reloads to the same bits.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::data::Vocab;
use crate::error::{Error, Result};
use crate::mps::IsometricMps;
use crate::povm::{Embedding, EmbeddingParams};
use crate::tensor::ComplexTensor;
use crate::training::TrainConfig;

pub const CHECKPOINT_FORMAT: &str = "bornseq-ckpt-1";

/// A complete trained model: chain, embedding, vocabulary, and the resolved
/// configuration and seed that produced it.
#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub embedding: Embedding,
    pub mps: IsometricMps,
    pub vocab: Vocab,
    pub config: TrainConfig,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    n: usize,
    vocab_size: usize,
    phys_dim: usize,
    bond_dims: Vec<usize>,
    embedding: String,
    gamma: Vec<[f64; 2]>,
    tensors: Vec<Vec<[f64; 2]>>,
    vocab: Vocab,
    config: TrainConfig,
    seed: u64,
}

fn pack(t: &ComplexTensor) -> Vec<[f64; 2]> {
    t.data().iter().map(|z| [z.re, z.im]).collect()
}

fn unpack(shape: &[usize], pairs: &[[f64; 2]], field: &str) -> Result<ComplexTensor> {
    let data: Vec<Complex64> = pairs.iter().map(|&[re, im]| Complex64::new(re, im)).collect();
    ComplexTensor::from_vec(shape, data).map_err(|e| Error::Checkpoint {
        field: field.to_string(),
        message: e.to_string(),
    })
}

pub fn checkpoint_to_string(bundle: &ModelBundle) -> Result<String> {
    let (embedding_kind, gamma) = match &bundle.embedding {
        Embedding::Trainable(params) => ("trainable".to_string(), pack(params.gamma())),
        Embedding::OneHot { .. } => ("one-hot".to_string(), Vec::new()),
    };
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.to_string(),
        n: bundle.mps.len(),
        vocab_size: bundle.embedding.vocab_size(),
        phys_dim: bundle.mps.phys_dim(),
        bond_dims: bundle.mps.bond_dims().to_vec(),
        embedding: embedding_kind,
        gamma,
        tensors: bundle.mps.tensors().iter().map(pack).collect(),
        vocab: bundle.vocab.clone(),
        config: bundle.config.clone(),
        seed: bundle.seed,
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Checkpoint {
        field: "document".into(),
        message: e.to_string(),
    })
}

pub fn checkpoint_from_str(text: &str) -> Result<ModelBundle> {
    let file: CheckpointFile = serde_json::from_str(text).map_err(|e| Error::Checkpoint {
        field: "document".into(),
        message: e.to_string(),
    })?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint {
            field: "format".into(),
            message: format!(
                "unsupported version `{}` (expected `{}`)",
                file.format, CHECKPOINT_FORMAT
            ),
        });
    }
    if file.bond_dims.len() != file.n + 1 {
        return Err(Error::Checkpoint {
            field: "bond_dims".into(),
            message: format!(
                "{} bond dimensions for {} sites",
                file.bond_dims.len(),
                file.n
            ),
        });
    }
    if file.tensors.len() != file.n {
        return Err(Error::Checkpoint {
            field: "tensors".into(),
            message: format!("{} site tensors for n = {}", file.tensors.len(), file.n),
        });
    }
    if file.vocab.size() != file.vocab_size {
        return Err(Error::Checkpoint {
            field: "vocab".into(),
            message: format!(
                "vocabulary has {} tokens but vocab_size is {}",
                file.vocab.size(),
                file.vocab_size
            ),
        });
    }

    let mut tensors = Vec::with_capacity(file.n);
    for (i, pairs) in file.tensors.iter().enumerate() {
        let shape = [file.bond_dims[i], file.phys_dim, file.bond_dims[i + 1]];
        tensors.push(unpack(&shape, pairs, &format!("tensors[{}]", i))?);
    }
    let mps = IsometricMps::from_tensors(file.phys_dim, tensors).map_err(|e| Error::Checkpoint {
        field: "tensors".into(),
        message: e.to_string(),
    })?;

    let embedding = match file.embedding.as_str() {
        "trainable" => {
            let gamma = unpack(
                &[file.vocab_size * file.phys_dim, file.phys_dim],
                &file.gamma,
                "gamma",
            )?;
            Embedding::Trainable(
                EmbeddingParams::new(gamma, file.vocab_size, file.phys_dim).map_err(|e| {
                    Error::Checkpoint {
                        field: "gamma".into(),
                        message: e.to_string(),
                    }
                })?,
            )
        }
        "one-hot" => {
            if file.phys_dim != file.vocab_size {
                return Err(Error::Checkpoint {
                    field: "embedding".into(),
                    message: format!(
                        "one-hot requires phys_dim = vocab_size, got {} and {}",
                        file.phys_dim, file.vocab_size
                    ),
                });
            }
            Embedding::OneHot {
                vocab_size: file.vocab_size,
            }
        }
        other => {
            return Err(Error::Checkpoint {
                field: "embedding".into(),
                message: format!("unknown embedding kind `{}`", other),
            })
        }
    };

    Ok(ModelBundle {
        embedding,
        mps,
        vocab: file.vocab,
        config: file.config,
        seed: file.seed,
    })
}

pub fn save_checkpoint(bundle: &ModelBundle, path: &Path) -> Result<()> {
    let text = checkpoint_to_string(bundle)?;
    fs::write(path, text)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelBundle> {
    let text = fs::read_to_string(path)?;
    checkpoint_from_str(&text)
}
