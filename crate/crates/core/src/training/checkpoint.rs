use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Real, Tensor};
use crate::config::TextConfig;
use crate::graph::GraphConfig;
use crate::model::{FusionConfig, FusionModel, InputDims, ModelConfig};
use crate::text::Vocab;

use super::{Normalizer, TrainConfig, TrainingError};

/// Value of the header's `format` field.
pub const CHECKPOINT_FORMAT: &str = "matfuse-checkpoint-v1";

/// Everything needed to rerun inference: parameters, configs, vocabulary and
/// target statistics.
#[derive(Clone, Debug)]
pub struct Checkpoint<T> {
    pub model: FusionModel<T>,
    pub vocab: Vocab,
    pub normalizer: Normalizer,
    pub graph: GraphConfig,
    pub text: TextConfig,
    pub train: TrainConfig,
    pub seed: u64,
    /// Optimizer steps taken when the parameters were captured.
    pub step: usize,
    /// Smallest and largest training target.
    pub target_range: [f64; 2],
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    nbytes: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    dtype: String,
    step: usize,
    seed: u64,
    model: ModelConfig,
    fusion: FusionConfig,
    dims: InputDims,
    graph: GraphConfig,
    text: TextConfig,
    train: TrainConfig,
    normalizer: Normalizer,
    target_range: [f64; 2],
    vocab: Vec<String>,
    tensors: Vec<TensorEntry>,
}

impl<T: Real> Checkpoint<T> {
    pub fn cast<U: Real>(&self) -> Checkpoint<U> {
        Checkpoint {
            model: self.model.cast(),
            vocab: self.vocab.clone(),
            normalizer: self.normalizer,
            graph: self.graph.clone(),
            text: self.text.clone(),
            train: self.train.clone(),
            seed: self.seed,
            step: self.step,
            target_range: self.target_range,
        }
    }

    /// Layout: little-endian u64 header length, JSON header, then the tensor
    /// blobs as little-endian floats at the header's offsets.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut blobs = Vec::new();
        let mut tensors = Vec::new();
        for (_, p) in self.model.params.iter() {
            let offset = blobs.len();
            for &x in p.value.data() {
                x.write_le(&mut blobs);
            }
            tensors.push(TensorEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                offset,
                nbytes: blobs.len() - offset,
            });
        }
        let header = Header {
            format: CHECKPOINT_FORMAT.into(),
            dtype: T::DTYPE.into(),
            step: self.step,
            seed: self.seed,
            model: self.model.config.clone(),
            fusion: self.model.fusion.clone(),
            dims: self.model.dims,
            graph: self.graph.clone(),
            text: self.text.clone(),
            train: self.train.clone(),
            normalizer: self.normalizer,
            target_range: self.target_range,
            vocab: self.vocab.tokens().to_vec(),
            tensors,
        };
        let json = serde_json::to_vec(&header).expect("checkpoint header serializes");
        let mut out = Vec::with_capacity(8 + json.len() + blobs.len());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&blobs);
        out
    }

    /// Parse a checkpoint of either dtype, converting parameters to `T`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrainingError> {
        let bad = |m: String| TrainingError::Checkpoint(m);
        let len_bytes: [u8; 8] = bytes
            .get(..8)
            .ok_or_else(|| bad("truncated header length".into()))?
            .try_into()
            .unwrap();
        let header_len = usize::try_from(u64::from_le_bytes(len_bytes)).map_err(|e| bad(e.to_string()))?;
        let header_end = 8usize.checked_add(header_len).filter(|&e| e <= bytes.len());
        let header_end = header_end.ok_or_else(|| bad("truncated header".into()))?;
        let header: Header = serde_json::from_slice(&bytes[8..header_end]).map_err(|e| bad(e.to_string()))?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(bad(format!("unknown format {:?}", header.format)));
        }
        let width = match header.dtype.as_str() {
            "f32" => 4,
            "f64" => 8,
            other => return Err(bad(format!("unknown dtype {other:?}"))),
        };
        let blobs = &bytes[header_end..];
        let mut model = FusionModel::<T>::new(header.model, header.fusion, header.dims, 0)?;
        if header.tensors.len() != model.params.len() {
            return Err(bad(format!(
                "{} tensors stored, model has {}",
                header.tensors.len(),
                model.params.len()
            )));
        }
        for entry in &header.tensors {
            let id = model
                .params
                .find(&entry.name)
                .ok_or_else(|| bad(format!("unexpected tensor {}", entry.name)))?;
            let param = model.params.get_mut(id);
            let count: usize = entry.shape.iter().product();
            if entry.shape != param.value.shape() || entry.nbytes != count * width {
                return Err(bad(format!("tensor {} has shape {:?}", entry.name, entry.shape)));
            }
            let blob = entry
                .offset
                .checked_add(entry.nbytes)
                .and_then(|end| blobs.get(entry.offset..end))
                .ok_or_else(|| bad(format!("tensor {} out of bounds", entry.name)))?;
            let values: Vec<f64> = if width == 8 {
                blob.chunks_exact(8).map(f64::read_le).collect()
            } else {
                blob.chunks_exact(4).map(|c| f64::from(f32::read_le(c))).collect()
            };
            param.value = Tensor::from_f64(&entry.shape, &values)?;
        }
        let vocab = Vocab::from_token_list(header.vocab)?;
        if vocab.len() != model.dims.vocab_size {
            return Err(bad(format!(
                "vocabulary has {} tokens, model expects {}",
                vocab.len(),
                model.dims.vocab_size
            )));
        }
        Ok(Checkpoint {
            model,
            vocab,
            normalizer: header.normalizer,
            graph: header.graph,
            text: header.text,
            train: header.train,
            seed: header.seed,
            step: header.step,
            target_range: header.target_range,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainingError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| TrainingError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, TrainingError> {
        let bytes = std::fs::read(path).map_err(|e| TrainingError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
