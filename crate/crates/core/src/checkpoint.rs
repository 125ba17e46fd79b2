//! Versioned JSON checkpoint: config echo, vocabulary, frozen embeddings and
//! every parameter tensor by name.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::gnn::EmbeddingTable;
use crate::model::{Model, ModelParams};
use crate::numeric::Tensor;
use crate::scalar::Scalar;
use crate::stream::Vocabulary;

pub const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub config: RunConfig,
    pub vocabulary_sha256: String,
    pub vocabulary: serde_json::Value,
    pub embeddings: EmbeddingTable,
    pub params: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new<T: Scalar>(model: &Model<T>, config: &RunConfig, vocab: &Vocabulary) -> Self {
        let params = model
            .config
            .layout()
            .into_iter()
            .zip(model.params.to_vec())
            .map(|((name, shape), t)| NamedTensor {
                name,
                shape,
                data: t.to_f64_vec(),
            })
            .collect();
        let mut config = config.clone();
        config.model = model.config.clone();
        Checkpoint {
            format: CHECKPOINT_FORMAT,
            config,
            vocabulary_sha256: vocab.fingerprint(),
            vocabulary: serde_json::from_str(&vocab.to_json()).expect("vocabulary json"),
            embeddings: model.embeddings.clone(),
            params,
        }
    }

    pub fn vocabulary(&self) -> Result<Vocabulary> {
        let vocab = Vocabulary::from_json(&self.vocabulary.to_string())?;
        if vocab.fingerprint() != self.vocabulary_sha256 {
            return Err(Error::Validation("checkpoint vocabulary hash mismatch".into()));
        }
        Ok(vocab)
    }

    pub fn model<T: Scalar>(&self) -> Result<Model<T>> {
        let config = self.config.model.clone();
        let layout = config.layout();
        if layout.len() != self.params.len() {
            return Err(Error::Validation(format!(
                "checkpoint holds {} tensors, configuration needs {}",
                self.params.len(),
                layout.len()
            )));
        }
        let mut tensors = Vec::with_capacity(layout.len());
        for ((name, shape), p) in layout.iter().zip(&self.params) {
            if &p.name != name || &p.shape != shape {
                return Err(Error::Validation(format!(
                    "checkpoint tensor {} {:?} where {name} {shape:?} was expected",
                    p.name, p.shape
                )));
            }
            tensors.push(Tensor::new(
                p.shape.clone(),
                p.data.iter().map(|&v| T::of(v)).collect(),
            )?);
        }
        if self.embeddings.dim() != config.node_dim {
            return Err(Error::Validation(
                "checkpoint embedding width differs from model.node_dim".into(),
            ));
        }
        Ok(Model {
            params: ModelParams::from_vec(config.layers, tensors)?,
            config,
            embeddings: self.embeddings.clone(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: Checkpoint = serde_json::from_str(&text)?;
        if c.format != CHECKPOINT_FORMAT {
            return Err(Error::Validation(format!("unsupported checkpoint format {}", c.format)));
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn round_trip_is_exact() {
        let vocab = Vocabulary::new(vec!["dorm".into()]).unwrap();
        let config = ModelConfig {
            node_dim: 4,
            edge_dim: 3,
            rep_dim: 5,
            attention_dim: 2,
            layers: 2,
            ..ModelConfig::default()
        };
        let model = Model::<f64>::new(config, EmbeddingTable::fallback(&vocab, 4, 1), 3).unwrap();
        let ck = Checkpoint::new(&model, &RunConfig::default(), &vocab);
        let back: Checkpoint = serde_json::from_str(&ck.to_json()).unwrap();
        assert_eq!(back.model::<f64>().unwrap(), model);
        assert_eq!(back.vocabulary().unwrap(), vocab);
    }
}
