//! Binary checkpoint format.
//!
//! Layout: the magic bytes `UNETCKPT`, a little-endian u32 format version,
//! a little-endian u32 header length, that many bytes of JSON header, then
//! every parameter tensor as little-endian f32 values in manifest order.
//! The header carries the model config, the vocabularies needed to run the
//! model on raw text, and a manifest of (name, shape, offset) entries where
//! offset counts f32 elements from the start of the payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{TagVocab, Vocab};
use crate::model::{ModelConfig, ModelParams};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"UNETCKPT";
pub const VERSION: u32 = 1;

/// Everything needed to run inference: weights plus the vocabularies that
/// map raw tokens to the ids the weights were trained against.
pub struct TrainedModel {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub pos_vocab: TagVocab,
    pub ner_vocab: TagVocab,
    pub params: ModelParams<Tensor<f32>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: Vec<String>,
    pos_tags: Vec<String>,
    ner_tags: Vec<String>,
    manifest: Vec<ManifestEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint: bad magic bytes")]
    BadMagic,
    #[error("unknown checkpoint version {0}")]
    UnknownVersion(u32),
    #[error("malformed header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("manifest mismatch at {name}: expected shape {expected:?}, found {found:?}")]
    ManifestShape { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("manifest mismatch: expected parameter {expected}, found {found}")]
    ManifestName { expected: String, found: String },
    #[error("manifest mismatch: {0}")]
    Manifest(String),
    #[error("checkpoint truncated: wanted {wanted} payload bytes, found {found}")]
    Truncated { wanted: usize, found: usize },
    #[error("checkpoint has {0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("invalid config in checkpoint: {0}")]
    Config(String),
}

pub fn save(model: &TrainedModel, path: &Path) -> Result<(), CheckpointError> {
    let mut manifest = Vec::new();
    let mut offset = 0usize;
    model.params.visit(&mut |name, t: &Tensor<f32>| {
        manifest.push(ManifestEntry { name, shape: t.shape().to_vec(), offset });
        offset += t.data().len();
    });
    let header = Header {
        config: model.config.clone(),
        vocab: model.vocab.tokens().to_vec(),
        pos_tags: model.pos_vocab.tags().to_vec(),
        ner_tags: model.ner_vocab.tags().to_vec(),
        manifest,
    };
    let header_bytes = serde_json::to_vec(&header)?;

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    model.params.visit(&mut |_, t: &Tensor<f32>| {
        for x in t.data() {
            // Errors surface via the flush below; visit closures cannot bail.
            let _ = w.write_all(&x.to_le_bytes());
        }
    });
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<TrainedModel, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| CheckpointError::BadMagic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(CheckpointError::UnknownVersion(version));
    }
    r.read_exact(&mut word)?;
    let header_len = u32::from_le_bytes(word) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)
        .map_err(|_| CheckpointError::Truncated { wanted: header_len, found: 0 })?;
    let header: Header = serde_json::from_slice(&header_bytes)?;
    header.config.validate().map_err(CheckpointError::Config)?;

    let expected = crate::model::census(&header.config);
    if expected.len() != header.manifest.len() {
        return Err(CheckpointError::Manifest(format!(
            "config implies {} parameters, manifest lists {}",
            expected.len(),
            header.manifest.len()
        )));
    }
    let mut offset = 0usize;
    for ((name, shape), entry) in expected.iter().zip(&header.manifest) {
        if name != &entry.name {
            return Err(CheckpointError::ManifestName {
                expected: name.clone(),
                found: entry.name.clone(),
            });
        }
        if shape != &entry.shape {
            return Err(CheckpointError::ManifestShape {
                name: name.clone(),
                expected: shape.clone(),
                found: entry.shape.clone(),
            });
        }
        if entry.offset != offset {
            return Err(CheckpointError::Manifest(format!(
                "parameter {} at offset {}, expected {}",
                entry.name, entry.offset, offset
            )));
        }
        offset += shape.iter().product::<usize>();
    }

    let wanted = offset * 4;
    let mut payload = Vec::with_capacity(wanted);
    r.read_to_end(&mut payload)?;
    if payload.len() < wanted {
        return Err(CheckpointError::Truncated { wanted, found: payload.len() });
    }
    if payload.len() > wanted {
        return Err(CheckpointError::TrailingBytes(payload.len() - wanted));
    }

    let mut values = Vec::with_capacity(offset);
    for chunk in payload.chunks_exact(4) {
        values.push(f32::from_le_bytes(chunk.try_into().unwrap()));
    }

    // Build a skeleton with the right structure, then overwrite every tensor
    // from the payload in visit order.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut params: ModelParams<Tensor<f32>> = ModelParams::init(&header.config, &mut rng);
    let mut cursor = 0usize;
    params.visit_mut(&mut |_, t: &mut Tensor<f32>| {
        let len = t.data().len();
        t.data_mut().copy_from_slice(&values[cursor..cursor + len]);
        cursor += len;
    });
    debug_assert_eq!(cursor, offset);

    Ok(TrainedModel {
        config: header.config,
        vocab: Vocab::from_tokens(header.vocab),
        pos_vocab: TagVocab::from_tags(header.pos_tags),
        ner_vocab: TagVocab::from_tags(header.ner_tags),
        params,
    })
}

use rand::SeedableRng;
