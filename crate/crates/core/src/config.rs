//! Run configuration as JSON with flat dotted keys (`"train.lambda": 0.1`).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::training::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Days per sample.
    pub span: usize,
    /// Optional text embedding file; fallback vectors fill the gaps.
    pub embeddings: Option<String>,
    pub embedding_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            span: 3,
            embeddings: None,
            embedding_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub splits: usize,
    /// Neighbours in the grade regression.
    pub knn_k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { splits: 10, knn_k: 3 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
}

fn flatten(prefix: &str, value: &Value, out: &mut BTreeMap<String, Value>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}

fn unflatten(flat: &BTreeMap<String, Value>) -> Value {
    let mut root = Map::new();
    for (key, value) in flat {
        let mut node = &mut root;
        let mut parts = key.split('.').peekable();
        while let Some(part) = parts.next() {
            if parts.peek().is_none() {
                node.insert(part.to_string(), value.clone());
            } else {
                node = node
                    .entry(part.to_string())
                    .or_insert_with(|| Value::Object(Map::new()))
                    .as_object_mut()
                    .expect("keys are leaves or groups, never both");
            }
        }
    }
    Value::Object(root)
}

impl RunConfig {
    pub fn to_flat(&self) -> BTreeMap<String, Value> {
        let mut out = BTreeMap::new();
        flatten("", &serde_json::to_value(self).expect("config serializes"), &mut out);
        out
    }

    pub fn to_flat_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_flat()).expect("config serializes")
    }

    /// Sets one dotted key; unknown keys and ill-typed values are rejected.
    pub fn set(&mut self, key: &str, value: Value) -> Result<()> {
        let mut flat = self.to_flat();
        match flat.get_mut(key) {
            Some(slot) => *slot = value,
            None => return Err(Error::Validation(format!("unknown config key {key:?}"))),
        }
        *self = serde_json::from_value(unflatten(&flat))
            .map_err(|e| Error::Validation(format!("config key {key:?}: {e}")))?;
        Ok(())
    }

    /// Defaults overridden by every key of a flat JSON object.
    pub fn from_flat_json(text: &str) -> Result<Self> {
        let entries: BTreeMap<String, Value> =
            serde_json::from_str(text).map_err(|e| Error::Validation(format!("config file: {e}")))?;
        let mut config = RunConfig::default();
        for (k, v) in entries {
            config.set(&k, v)?;
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.data.span == 0 || self.data.span > self.model.max_span {
            return Err(Error::Validation(format!(
                "data.span {} must lie in 1..={}",
                self.data.span, self.model.max_span
            )));
        }
        if self.eval.splits < 2 {
            return Err(Error::Validation("eval.splits must be at least 2".into()));
        }
        Ok(())
    }
}
