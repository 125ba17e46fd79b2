//! Heterogeneous message passing and dual attention pooling over one local
//! context graph.
//!
//! Per layer, every node of stream `k` is updated from pre-update states as
//!
//! ```text
//! x_i' = Wself[k]·x_i + Whomo[k]·Σ_j α_ij x_j + Σ_k' Whet[k']·Σ_{j∈k'} α_ij x_j
//! ```
//!
//! where the homogeneous and heterogeneous α are the incoming edge weights
//! normalized separately within each kind. After the last layer, edge
//! vectors `W_e [x_src ⊕ x_dst]` are built, nodes are pooled with a learned
//! query `q`, and edges are pooled with the query `W_β g_s`. The graph vector
//! `[g_e ; g_s]` is projected to the representation width.

mod embedding;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::{EdgeKind, LocalContextGraph};
use crate::numeric::{SparseRows, Tape, Tensor, Var};
use crate::scalar::Scalar;
use crate::stream::StreamType;

pub use embedding::{fallback_vector, fnv1a64, EmbeddingEntry, EmbeddingSource, EmbeddingTable};

const STREAMS: usize = 3;

type Rows<T> = Vec<Vec<(usize, T)>>;

/// Architecture switches shared by every local graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GnnOptions {
    pub homogeneous: bool,
    pub heterogeneous: bool,
    pub nonlinear: bool,
}

impl Default for GnnOptions {
    fn default() -> Self {
        GnnOptions {
            homogeneous: true,
            heterogeneous: true,
            nonlinear: true,
        }
    }
}

/// Per-layer projections, indexed by stream.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<P> {
    /// Self term, by the updated node's stream.
    pub self_proj: [P; STREAMS],
    /// Homogeneous aggregate, by the updated node's stream.
    pub homo_proj: [P; STREAMS],
    /// Heterogeneous aggregate, by the neighbour's stream.
    pub hetero_proj: [P; STREAMS],
}

#[derive(Clone, Debug, PartialEq)]
pub struct GnnParams<P> {
    pub layers: Vec<LayerParams<P>>,
    /// `d_e × 2d`
    pub edge_proj: P,
    /// `d`
    pub node_query: P,
    /// `d_e × d`
    pub edge_query: P,
    /// `d_p × (d_e + d)`
    pub rep_proj: P,
    /// `d_p`, representation of a day without events.
    pub empty_day: P,
}

/// Constant per-graph inputs: attribute-scaled embeddings and normalized
/// adjacency blocks.
#[derive(Clone, Debug)]
pub struct GraphInput<T> {
    /// `n × d` initial states, `None` for an empty graph.
    pub initial: Option<Tensor<T>>,
    pub blocks: [std::ops::Range<usize>; STREAMS],
    /// `homo[k]`: block `k` rows by block `k` columns.
    homo: [Option<Arc<SparseRows<T>>>; STREAMS],
    /// `hetero[k][k']`: block `k` rows by block `k'` columns.
    hetero: [[Option<Arc<SparseRows<T>>>; STREAMS]; STREAMS],
    edge_src: Arc<Vec<usize>>,
    edge_dst: Arc<Vec<usize>>,
    /// Indices into the graph's edge list of the pooled edges.
    pub pooled_edges: Vec<usize>,
}

/// Rows `attribute / 24 · embedding` for each node.
pub fn apply_attributes<T: Scalar>(graph: &LocalContextGraph, table: &EmbeddingTable) -> Result<Option<Tensor<T>>> {
    if graph.nodes.is_empty() {
        return Ok(None);
    }
    let d = table.dim();
    let mut data = Vec::with_capacity(graph.nodes.len() * d);
    for node in &graph.nodes {
        let idx = table
            .lookup(&node.concept)
            .ok_or_else(|| Error::Embedding(format!("no embedding for concept {:?}", node.concept)))?;
        let scale = node.attribute / 24.0;
        data.extend(table.vector(idx).iter().map(|&v| T::of(v * scale)));
    }
    Tensor::matrix(graph.nodes.len(), d, data).map(Some)
}

impl<T: Scalar> GraphInput<T> {
    pub fn new(graph: &LocalContextGraph, table: &EmbeddingTable, options: GnnOptions) -> Result<Self> {
        let initial = apply_attributes(graph, table)?;
        let blocks = StreamType::ALL.map(|s| graph.stream_range(s));
        let stream_of = |node: usize| blocks.iter().position(|b| b.contains(&node)).unwrap();

        // incoming weight totals per node and kind
        let n = graph.nodes.len();
        let mut totals = vec![[0u64; 2]; n];
        for e in &graph.edges {
            totals[e.dst][kind_slot(e.kind)] += u64::from(e.weight);
        }
        let mut homo_rows: [Rows<T>; STREAMS] = blocks.clone().map(|b| vec![Vec::new(); b.len()]);
        let mut hetero_rows: [[Rows<T>; STREAMS]; STREAMS] =
            blocks.clone().map(|b| [0; STREAMS].map(|_| vec![Vec::new(); b.len()]));
        for e in &graph.edges {
            let (k, kn) = (stream_of(e.dst), stream_of(e.src));
            let alpha = T::of(f64::from(e.weight) / totals[e.dst][kind_slot(e.kind)] as f64);
            let row = e.dst - blocks[k].start;
            let col = e.src - blocks[kn].start;
            match e.kind {
                EdgeKind::Homogeneous => homo_rows[k][row].push((col, alpha)),
                EdgeKind::Heterogeneous => hetero_rows[k][kn][row].push((col, alpha)),
            }
        }
        let pack = |rows: Rows<T>, cols: usize| {
            let m = SparseRows::new(cols, rows);
            (!m.is_zero()).then(|| Arc::new(m))
        };
        let mut homo: [Option<Arc<SparseRows<T>>>; STREAMS] = Default::default();
        let mut hetero: [[Option<Arc<SparseRows<T>>>; STREAMS]; STREAMS] = Default::default();
        for (k, rows) in homo_rows.into_iter().enumerate() {
            homo[k] = pack(rows, blocks[k].len());
        }
        for (k, per_source) in hetero_rows.into_iter().enumerate() {
            for (kn, rows) in per_source.into_iter().enumerate() {
                hetero[k][kn] = pack(rows, blocks[kn].len());
            }
        }

        let pooled_edges: Vec<usize> = graph
            .edges
            .iter()
            .enumerate()
            .filter(|(_, e)| match e.kind {
                EdgeKind::Homogeneous => options.homogeneous,
                EdgeKind::Heterogeneous => options.heterogeneous,
            })
            .map(|(i, _)| i)
            .collect();
        let edge_src = Arc::new(pooled_edges.iter().map(|&i| graph.edges[i].src).collect());
        let edge_dst = Arc::new(pooled_edges.iter().map(|&i| graph.edges[i].dst).collect());

        Ok(GraphInput {
            initial,
            blocks,
            homo,
            hetero,
            edge_src,
            edge_dst,
            pooled_edges,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.initial.is_none()
    }

    /// Dense `n × n` α matrix of one edge kind (row = receiving node).
    pub fn dense_alpha(&self, kind: EdgeKind) -> Vec<Vec<f64>> {
        let n = self.initial.as_ref().map_or(0, |t| t.shape()[0]);
        let mut out = vec![vec![0.0; n]; n];
        for k in 0..STREAMS {
            let parts: Vec<(usize, &Arc<SparseRows<T>>)> = match kind {
                EdgeKind::Homogeneous => self.homo[k].iter().map(|m| (k, m)).collect(),
                EdgeKind::Heterogeneous => (0..STREAMS)
                    .filter_map(|kn| self.hetero[k][kn].as_ref().map(|m| (kn, m)))
                    .collect(),
            };
            for (kn, m) in parts {
                for (r, row) in m.rows.iter().enumerate() {
                    for &(c, a) in row {
                        out[self.blocks[k].start + r][self.blocks[kn].start + c] += a.as_f64();
                    }
                }
            }
        }
        out
    }
}

fn kind_slot(kind: EdgeKind) -> usize {
    match kind {
        EdgeKind::Homogeneous => 0,
        EdgeKind::Heterogeneous => 1,
    }
}

/// One fused homogeneous + heterogeneous update of all node states.
pub fn message_passing_layer<T: Scalar>(
    tape: &mut Tape<T>,
    states: Var,
    input: &GraphInput<T>,
    layer: &LayerParams<Var>,
    options: GnnOptions,
) -> Result<Var> {
    let n = tape.shape(states)[0];
    let mut slices: [Option<Var>; STREAMS] = [None; STREAMS];
    for (k, block) in input.blocks.iter().enumerate() {
        if !block.is_empty() {
            slices[k] = Some(if block.len() == n {
                states
            } else {
                tape.slice_rows(states, block.start, block.len())?
            });
        }
    }

    let mut parts = Vec::with_capacity(STREAMS);
    for k in 0..STREAMS {
        let Some(xk) = slices[k] else { continue };
        let mut out = tape.linear(xk, layer.self_proj[k])?;
        if options.homogeneous {
            if let Some(adj) = &input.homo[k] {
                let agg = tape.sparse_matmul(adj.clone(), xk)?;
                let msg = tape.linear(agg, layer.homo_proj[k])?;
                out = tape.add(out, msg)?;
            }
        }
        if options.heterogeneous {
            for kn in 0..STREAMS {
                if let (Some(adj), Some(xn)) = (&input.hetero[k][kn], slices[kn]) {
                    let agg = tape.sparse_matmul(adj.clone(), xn)?;
                    let msg = tape.linear(agg, layer.hetero_proj[kn])?;
                    out = tape.add(out, msg)?;
                }
            }
        }
        parts.push(out);
    }
    let next = if parts.len() == 1 {
        parts[0]
    } else {
        tape.concat_rows(&parts)?
    };
    if options.nonlinear {
        tape.tanh(next)
    } else {
        Ok(next)
    }
}

/// `W_e [x_src ⊕ x_dst]` for every pooled edge, `None` without edges.
pub fn edge_embeddings<T: Scalar>(
    tape: &mut Tape<T>,
    states: Var,
    input: &GraphInput<T>,
    edge_proj: Var,
) -> Result<Option<Var>> {
    if input.edge_src.is_empty() {
        return Ok(None);
    }
    let src = tape.gather_rows(states, input.edge_src.clone())?;
    let dst = tape.gather_rows(states, input.edge_dst.clone())?;
    let pair = tape.concat_last(src, dst)?;
    tape.linear(pair, edge_proj).map(Some)
}

/// Softmax over `q · x_i`; returns `(g_s, β)`.
pub fn semantic_pool<T: Scalar>(tape: &mut Tape<T>, states: Var, query: Var) -> Result<(Var, Var)> {
    let scores = tape.matvec(states, query)?;
    let weights = tape.softmax(scores)?;
    let pooled = tape.vecmat(weights, states)?;
    Ok((pooled, weights))
}

/// Softmax over `(W_β g_s) · e_ij`; returns `(g_e, β_ij)`.
pub fn structural_pool<T: Scalar>(
    tape: &mut Tape<T>,
    edges: Var,
    semantic: Var,
    edge_query: Var,
) -> Result<(Var, Var)> {
    let query = tape.linear(semantic, edge_query)?;
    let scores = tape.matvec(edges, query)?;
    let weights = tape.softmax(scores)?;
    let pooled = tape.vecmat(weights, edges)?;
    Ok((pooled, weights))
}

/// Everything recorded for one local graph.
#[derive(Clone, Copy, Debug)]
pub struct LocalForward {
    /// `d_p` representation fed to the temporal model.
    pub rep: Var,
    /// Final node states; `None` for an empty graph.
    pub states: Option<Var>,
    pub semantic: Option<Var>,
    pub structural: Option<Var>,
    pub node_attention: Option<Var>,
    pub edge_attention: Option<Var>,
}

/// Attribute scaling, `m` message-passing layers, edge embeddings, both
/// poolings and the projection of `[g_e ; g_s]`.
pub fn local_graph_forward<T: Scalar>(
    tape: &mut Tape<T>,
    input: &GraphInput<T>,
    params: &GnnParams<Var>,
    options: GnnOptions,
) -> Result<LocalForward> {
    let Some(initial) = &input.initial else {
        return Ok(LocalForward {
            rep: params.empty_day,
            states: None,
            semantic: None,
            structural: None,
            node_attention: None,
            edge_attention: None,
        });
    };
    let mut states = tape.constant(initial.clone());
    for layer in &params.layers {
        states = message_passing_layer(tape, states, input, layer, options)?;
    }
    let (semantic, node_attention) = semantic_pool(tape, states, params.node_query)?;
    let edge_dim = tape.shape(params.edge_proj)[0];
    let (structural, edge_attention) = match edge_embeddings(tape, states, input, params.edge_proj)? {
        Some(edges) => {
            let (g_e, beta) = structural_pool(tape, edges, semantic, params.edge_query)?;
            (g_e, Some(beta))
        }
        None => (tape.constant(Tensor::zeros(&[edge_dim])), None),
    };
    let joined = tape.concat_last(structural, semantic)?;
    let rep = tape.linear(joined, params.rep_proj)?;
    Ok(LocalForward {
        rep,
        states: Some(states),
        semantic: Some(semantic),
        structural: Some(structural),
        node_attention: Some(node_attention),
        edge_attention,
    })
}
