//! Checkpoint files.
//!
//! Layout: the 8-byte magic `PIDCKPT1`, a little-endian `u64` header
//! length, the JSON header, then every parameter in declaration order
//! followed by the batch-norm running statistics (mean then variance per
//! block), all as little-endian `f32`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ConvNet, ModelConfig};
use super::NeuralError;
use crate::features::{FeatureSchema, Normalizer};

const MAGIC: &[u8; 8] = b"PIDCKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ModelConfig,
    pub schema: FeatureSchema,
    /// Class index → pianist label.
    pub classes: Vec<String>,
    pub normalizer: Option<Normalizer>,
    pub seed: u64,
    pub epoch: usize,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
    /// Segment length the model was trained on; `None` for whole pieces.
    #[serde(default)]
    pub segment_length: Option<usize>,
    pub param_shapes: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: ConvNet<f32>,
}

impl Checkpoint {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: ConvNet<f32>,
        schema: FeatureSchema,
        classes: Vec<String>,
        normalizer: Option<Normalizer>,
        seed: u64,
        epoch: usize,
        metrics: BTreeMap<String, f64>,
    ) -> Self {
        let header = CheckpointHeader {
            config: model.config().clone(),
            schema,
            classes,
            normalizer,
            seed,
            epoch,
            metrics,
            segment_length: None,
            param_shapes: model.params().iter().map(|p| p.shape().to_vec()).collect(),
        };
        Checkpoint { header, model }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + header.len() + 4 * self.model.param_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for p in self.model.params() {
            out.extend(p.data().iter().flat_map(|v| v.to_le_bytes()));
        }
        for b in self.model.buffers() {
            out.extend(b.iter().flat_map(|v| v.to_le_bytes()));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NeuralError> {
        let bad = |m: &str| NeuralError::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic"));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let header_end = 16usize.checked_add(header_len).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader =
            serde_json::from_slice(&bytes[16..header_end]).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        let mut model = ConvNet::<f32>::new(header.config.clone(), 0)?;
        let shapes: Vec<Vec<usize>> = model.params().iter().map(|p| p.shape().to_vec()).collect();
        if shapes != header.param_shapes {
            return Err(bad("parameter shapes disagree with config"));
        }
        let mut values = bytes[header_end..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
        let expected = model.param_count() + model.buffers().iter().map(|b| b.len()).sum::<usize>();
        if bytes.len() - header_end != 4 * expected {
            return Err(bad("payload size does not match config"));
        }
        for p in model.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = values.next().expect("size checked"));
        }
        for b in model.buffers_mut() {
            b.iter_mut().for_each(|v| *v = values.next().expect("size checked"));
        }
        Ok(Checkpoint { header, model })
    }

    pub fn save(&self, path: &Path) -> Result<(), NeuralError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NeuralError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
