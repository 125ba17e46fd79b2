//! Initial concept embeddings.
//!
//! Vectors come from a whitespace-separated text file (`name v1 ... vd`, one
//! concept per line). Concepts missing from the file can be given a fallback
//! vector: the 64-bit FNV-1a hash of the UTF-8 name, XOR the seed, seeds a
//! ChaCha8 generator whose first `d` standard-normal draws are normalized to
//! unit length.

use std::collections::HashMap;
use std::fs;
use std::io::BufRead;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::Vocabulary;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingSource {
    File,
    DeterministicFallback,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingEntry {
    pub name: String,
    pub vector: Vec<f64>,
    pub source: EmbeddingSource,
}

/// Concept name to initial vector. Names are unique.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "TableRepr", into = "TableRepr")]
pub struct EmbeddingTable {
    dim: usize,
    entries: Vec<EmbeddingEntry>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    dim: usize,
    entries: Vec<EmbeddingEntry>,
}

impl From<TableRepr> for EmbeddingTable {
    fn from(r: TableRepr) -> Self {
        let index = r.entries.iter().enumerate().map(|(i, e)| (e.name.clone(), i)).collect();
        EmbeddingTable {
            dim: r.dim,
            entries: r.entries,
            index,
        }
    }
}

impl From<EmbeddingTable> for TableRepr {
    fn from(t: EmbeddingTable) -> Self {
        TableRepr {
            dim: t.dim,
            entries: t.entries,
        }
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Unit-norm vector determined by `(name, seed)` only.
pub fn fallback_vector(name: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(name.as_bytes()) ^ seed);
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

impl EmbeddingTable {
    /// Fallback vectors for every vocabulary concept.
    pub fn fallback(vocab: &Vocabulary, dim: usize, seed: u64) -> Self {
        Self::build(vocab, dim, &HashMap::new(), Some(seed))
    }

    /// Reads a text embedding file; vocabulary concepts absent from it get
    /// fallback vectors when `fallback_seed` is set and are left out otherwise.
    pub fn from_reader(reader: impl BufRead, vocab: &Vocabulary, fallback_seed: Option<u64>) -> Result<Self> {
        let mut vectors = HashMap::new();
        let mut dim = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Embedding(e.to_string()))?;
            let mut parts = line.split_whitespace();
            let Some(name) = parts.next() else { continue };
            let values = parts
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Embedding(format!("line {}: {e}", i + 1)))?;
            if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Embedding(format!("line {}: bad vector for {name:?}", i + 1)));
            }
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::Embedding(format!(
                        "line {}: dimension {} differs from {d}",
                        i + 1,
                        values.len()
                    )))
                }
                _ => {}
            }
            vectors.insert(name.to_string(), values);
        }
        let dim = dim.ok_or_else(|| Error::Embedding("embedding file has no vectors".into()))?;
        Ok(Self::build(vocab, dim, &vectors, fallback_seed))
    }

    pub fn load(path: &Path, vocab: &Vocabulary, fallback_seed: Option<u64>) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(text.as_bytes(), vocab, fallback_seed)
    }

    fn build(vocab: &Vocabulary, dim: usize, vectors: &HashMap<String, Vec<f64>>, fallback_seed: Option<u64>) -> Self {
        let mut table = EmbeddingTable {
            dim,
            entries: Vec::new(),
            index: HashMap::new(),
        };
        for (_, name) in vocab.iter() {
            if table.index.contains_key(name) {
                continue;
            }
            let entry = match (vectors.get(name), fallback_seed) {
                (Some(v), _) => EmbeddingEntry {
                    name: name.to_string(),
                    vector: v.clone(),
                    source: EmbeddingSource::File,
                },
                (None, Some(seed)) => EmbeddingEntry {
                    name: name.to_string(),
                    vector: fallback_vector(name, dim, seed),
                    source: EmbeddingSource::DeterministicFallback,
                },
                (None, None) => continue,
            };
            table.index.insert(entry.name.clone(), table.entries.len());
            table.entries.push(entry);
        }
        table
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn entry(&self, index: usize) -> &EmbeddingEntry {
        &self.entries[index]
    }

    pub fn vector(&self, index: usize) -> &[f64] {
        &self.entries[index].vector
    }
}
