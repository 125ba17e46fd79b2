//! Full model: shared local graph network, temporal attention and classifier.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::{local_graph_forward, EmbeddingTable, GnnOptions, GnnParams, GraphInput, LayerParams, LocalForward};
use crate::graph::{EdgeKind, GlobalSample, PAM_CLASSES};
use crate::numeric::{Tape, Tensor, Var};
use crate::scalar::Scalar;
use crate::stream::StreamType;
use crate::temporal::{classify, global_self_attention, GlobalForward, TemporalParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Node state width; must equal the embedding dimension.
    pub node_dim: usize,
    pub edge_dim: usize,
    pub rep_dim: usize,
    pub attention_dim: usize,
    pub layers: usize,
    /// Size of the position table.
    pub max_span: usize,
    pub classes: usize,
    pub homogeneous: bool,
    pub heterogeneous: bool,
    /// `tanh` after each message-passing layer.
    pub nonlinear: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            node_dim: 50,
            edge_dim: 32,
            rep_dim: 64,
            attention_dim: 64,
            layers: 3,
            max_span: 16,
            classes: PAM_CLASSES,
            homogeneous: true,
            heterogeneous: true,
            nonlinear: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("node_dim", self.node_dim),
            ("edge_dim", self.edge_dim),
            ("rep_dim", self.rep_dim),
            ("attention_dim", self.attention_dim),
            ("max_span", self.max_span),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Validation(format!("model.{name} must be positive")));
            }
        }
        if self.classes < 2 {
            return Err(Error::Validation("model.classes must be at least 2".into()));
        }
        Ok(())
    }

    pub fn gnn_options(&self) -> GnnOptions {
        GnnOptions {
            homogeneous: self.homogeneous,
            heterogeneous: self.heterogeneous,
            nonlinear: self.nonlinear,
        }
    }

    /// Parameter names and shapes in canonical order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let (d, de, dp, da, c) = (
            self.node_dim,
            self.edge_dim,
            self.rep_dim,
            self.attention_dim,
            self.classes,
        );
        let mut out = Vec::new();
        for i in 0..self.layers {
            for part in ["self", "homo", "hetero"] {
                for s in StreamType::ALL {
                    out.push((format!("gnn.layer{i}.{part}.{s}"), vec![d, d]));
                }
            }
        }
        out.push(("gnn.edge_proj".into(), vec![de, 2 * d]));
        out.push(("gnn.node_query".into(), vec![d]));
        out.push(("gnn.edge_query".into(), vec![de, d]));
        out.push(("gnn.rep_proj".into(), vec![dp, de + d]));
        out.push(("gnn.empty_day".into(), vec![dp]));
        out.push(("temporal.query_proj".into(), vec![da, dp]));
        out.push(("temporal.key_proj".into(), vec![da, dp]));
        out.push(("temporal.value_proj".into(), vec![dp, dp]));
        out.push(("classifier.weight".into(), vec![c, dp]));
        out.push(("classifier.bias".into(), vec![c]));
        out
    }
}

/// Every trainable tensor, generic over storage (`Tensor` or tape `Var`).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<P> {
    pub gnn: GnnParams<P>,
    pub temporal: TemporalParams<P>,
}

impl<P> ModelParams<P> {
    /// Rebuilds from values listed in [`ModelConfig::layout`] order.
    pub fn from_vec(layers: usize, values: Vec<P>) -> Result<Self> {
        let expected = layers * 9 + 10;
        if values.len() != expected {
            return Err(Error::dim(format!(
                "expected {expected} parameter tensors, got {}",
                values.len()
            )));
        }
        let mut it = values.into_iter();
        let mut take = move || it.next().expect("length checked");
        let mut layer_params = Vec::with_capacity(layers);
        for _ in 0..layers {
            let self_proj = [take(), take(), take()];
            let homo_proj = [take(), take(), take()];
            let hetero_proj = [take(), take(), take()];
            layer_params.push(LayerParams {
                self_proj,
                homo_proj,
                hetero_proj,
            });
        }
        Ok(ModelParams {
            gnn: GnnParams {
                layers: layer_params,
                edge_proj: take(),
                node_query: take(),
                edge_query: take(),
                rep_proj: take(),
                empty_day: take(),
            },
            temporal: TemporalParams {
                query_proj: take(),
                key_proj: take(),
                value_proj: take(),
                classifier: take(),
                classifier_bias: take(),
            },
        })
    }

    /// References in [`ModelConfig::layout`] order.
    pub fn to_vec(&self) -> Vec<&P> {
        let mut out = Vec::new();
        for l in &self.gnn.layers {
            out.extend(l.self_proj.iter());
            out.extend(l.homo_proj.iter());
            out.extend(l.hetero_proj.iter());
        }
        let g = &self.gnn;
        out.extend([&g.edge_proj, &g.node_query, &g.edge_query, &g.rep_proj, &g.empty_day]);
        let t = &self.temporal;
        out.extend([
            &t.query_proj,
            &t.key_proj,
            &t.value_proj,
            &t.classifier,
            &t.classifier_bias,
        ]);
        out
    }

    pub fn map<Q>(&self, f: impl FnMut(&P) -> Q) -> ModelParams<Q> {
        let values: Vec<Q> = self.to_vec().into_iter().map(f).collect();
        ModelParams::from_vec(self.gnn.layers.len(), values).expect("same layout")
    }
}

impl<T: Scalar> ModelParams<Tensor<T>> {
    /// Xavier-uniform matrices, small uniform query vectors, zero biases.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::new();
        for (name, shape) in config.layout() {
            let len: usize = shape.iter().product();
            let data: Vec<T> = if name == "classifier.bias" || name == "gnn.empty_day" {
                vec![T::zero(); len]
            } else {
                let (fan_out, fan_in) = match shape.as_slice() {
                    [r, c] => (*r, *c),
                    [n] => (1, *n),
                    _ => unreachable!("parameters are vectors or matrices"),
                };
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..len).map(|_| T::of(rng.random_range(-limit..limit))).collect()
            };
            values.push(Tensor::new(shape, data)?);
        }
        ModelParams::from_vec(config.layers, values)
    }

    /// Checks every tensor against the layout of `config`.
    pub fn check_layout(&self, config: &ModelConfig) -> Result<()> {
        let layout = config.layout();
        let tensors = self.to_vec();
        if layout.len() != tensors.len() {
            return Err(Error::dim("parameter count does not match the configuration"));
        }
        for ((name, shape), t) in layout.iter().zip(tensors) {
            if t.shape() != shape.as_slice() {
                return Err(Error::dim(format!(
                    "{name}: expected shape {shape:?}, got {:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    /// Registers every tensor on the tape as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> ModelParams<Var> {
        self.map(|t| tape.param(t.clone()))
    }

    pub fn parameter_count(&self) -> usize {
        self.to_vec().iter().map(|t| t.len()).sum()
    }
}

/// A global sample with its per-day constant inputs precomputed.
#[derive(Clone, Debug)]
pub struct PreparedSample<T> {
    pub subject: String,
    pub anchor_day: usize,
    pub label: usize,
    pub inputs: Vec<Arc<GraphInput<T>>>,
}

/// Builds graph inputs once per distinct `(subject, day)`.
pub fn prepare_samples<T: Scalar>(
    samples: &[GlobalSample],
    table: &EmbeddingTable,
    options: GnnOptions,
) -> Result<Vec<PreparedSample<T>>> {
    let mut cache: HashMap<(String, usize), Arc<GraphInput<T>>> = HashMap::new();
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        let mut inputs = Vec::with_capacity(s.graphs.len());
        for g in &s.graphs {
            let key = (s.subject.clone(), g.day_index);
            let input = match cache.get(&key) {
                Some(i) => i.clone(),
                None => {
                    let i = Arc::new(GraphInput::new(g, table, options)?);
                    cache.insert(key, i.clone());
                    i
                }
            };
            inputs.push(input);
        }
        out.push(PreparedSample {
            subject: s.subject.clone(),
            anchor_day: s.anchor_day,
            label: s.label,
            inputs,
        });
    }
    Ok(out)
}

/// Tape handles of one sample's forward pass.
#[derive(Clone, Debug)]
pub struct SampleForward {
    pub locals: Vec<LocalForward>,
    pub global: GlobalForward,
    pub probs: Var,
}

pub fn sample_forward<T: Scalar>(
    tape: &mut Tape<T>,
    params: &ModelParams<Var>,
    sample: &PreparedSample<T>,
    config: &ModelConfig,
) -> Result<SampleForward> {
    let options = config.gnn_options();
    let locals = sample
        .inputs
        .iter()
        .map(|input| local_graph_forward(tape, input, &params.gnn, options))
        .collect::<Result<Vec<_>>>()?;
    let reps: Vec<Var> = locals.iter().map(|l| l.rep).collect();
    let global = global_self_attention(tape, &reps, &params.temporal, config.max_span)?;
    let probs = classify(tape, global.global, &params.temporal)?;
    Ok(SampleForward { locals, global, probs })
}

/// Attention weights of one graph, labelled by concept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphAttention {
    pub day: usize,
    pub nodes: Vec<String>,
    pub node_attention: Vec<f64>,
    pub edges: Vec<AttendedEdge>,
    pub edge_attention: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttendedEdge {
    pub src: String,
    pub dst: String,
    pub kind: EdgeKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionExport {
    pub subject: String,
    pub anchor_day: usize,
    pub label: usize,
    pub predicted: usize,
    pub probabilities: Vec<f64>,
    pub graphs: Vec<GraphAttention>,
    pub day_attention: Vec<Vec<f64>>,
}

/// Trained parameters together with the configuration and frozen embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: ModelParams<Tensor<T>>,
    pub embeddings: EmbeddingTable,
}

impl<T: Scalar> Model<T> {
    pub fn new(config: ModelConfig, embeddings: EmbeddingTable, seed: u64) -> Result<Self> {
        if embeddings.dim() != config.node_dim {
            return Err(Error::Validation(format!(
                "embedding dimension {} differs from model.node_dim {}",
                embeddings.dim(),
                config.node_dim
            )));
        }
        let params = ModelParams::init(&config, seed)?;
        Ok(Model {
            config,
            params,
            embeddings,
        })
    }

    pub fn prepare(&self, samples: &[GlobalSample]) -> Result<Vec<PreparedSample<T>>> {
        prepare_samples(samples, &self.embeddings, self.config.gnn_options())
    }

    fn run<R>(&self, sample: &PreparedSample<T>, read: impl FnOnce(&Tape<T>, &SampleForward) -> R) -> Result<R> {
        let mut tape = Tape::new();
        let vars = self.params.map(|t| tape.constant(t.clone()));
        let fwd = sample_forward(&mut tape, &vars, sample, &self.config)?;
        Ok(read(&tape, &fwd))
    }

    pub fn predict_proba(&self, sample: &PreparedSample<T>) -> Result<Vec<f64>> {
        self.run(sample, |tape, f| tape.value(f.probs).to_f64_vec())
    }

    pub fn predict(&self, sample: &PreparedSample<T>) -> Result<usize> {
        Ok(argmax(&self.predict_proba(sample)?))
    }

    /// The global representation `g*`.
    pub fn global_representation(&self, sample: &PreparedSample<T>) -> Result<Vec<f64>> {
        self.run(sample, |tape, f| tape.value(f.global.global).to_f64_vec())
    }

    /// Attention weights for `sample`, which must be the global sample that
    /// `prepared` was built from.
    pub fn attention(&self, sample: &GlobalSample, prepared: &PreparedSample<T>) -> Result<AttentionExport> {
        if sample.graphs.len() != prepared.inputs.len() {
            return Err(Error::dim("prepared sample does not match the global sample"));
        }
        self.run(prepared, |tape, f| {
            let probabilities = tape.value(f.probs).to_f64_vec();
            let graphs = sample
                .graphs
                .iter()
                .zip(&f.locals)
                .zip(&prepared.inputs)
                .map(|((g, local), input)| {
                    let weights = |v: Option<Var>| v.map(|v| tape.value(v).to_f64_vec()).unwrap_or_default();
                    GraphAttention {
                        day: g.day_index,
                        nodes: g.nodes.iter().map(|n| n.concept.clone()).collect(),
                        node_attention: weights(local.node_attention),
                        edges: input
                            .pooled_edges
                            .iter()
                            .map(|&i| {
                                let e = &g.edges[i];
                                AttendedEdge {
                                    src: g.nodes[e.src].concept.clone(),
                                    dst: g.nodes[e.dst].concept.clone(),
                                    kind: e.kind,
                                }
                            })
                            .collect(),
                        edge_attention: weights(local.edge_attention),
                    }
                })
                .collect();
            let gamma = tape.value(f.global.attention);
            let t = gamma.shape()[0];
            let day_attention = (0..t)
                .map(|i| gamma.row(i).iter().map(|v| v.as_f64()).collect())
                .collect();
            AttentionExport {
                subject: sample.subject.clone(),
                anchor_day: sample.anchor_day,
                label: sample.label,
                predicted: argmax(&probabilities),
                probabilities,
                graphs,
                day_attention,
            }
        })
    }
}

/// Index of the largest value; the first one on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
