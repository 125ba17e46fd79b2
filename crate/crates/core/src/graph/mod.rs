//! Local context graphs (one per day) and multi-day global samples.

mod edges;

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::EmbeddingTable;
use crate::stream::{slice_day, DayWindow, EventStreams, StreamType};

pub use edges::{heterogeneous_edges, homogeneous_edges, EdgeCounts};

pub const PAM_CLASSES: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub stream: StreamType,
    pub concept: String,
    /// Hours of the concept within the day; always positive.
    pub attribute: f64,
    #[serde(skip)]
    pub embedding_index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Homogeneous,
    Heterogeneous,
}

/// Directed edge between node indices of a [`LocalContextGraph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightedEdge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeKind,
    pub weight: u32,
}

/// Heterogeneous graph of one day's concepts.
///
/// Nodes are sorted by `(stream, concept)`, so each stream occupies a
/// contiguous block. Edges are sorted by `(src, dst)`; a heterogeneous
/// co-occurrence is stored as two directed edges of equal weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalContextGraph {
    pub day_index: usize,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<WeightedEdge>,
}

impl LocalContextGraph {
    pub fn empty(day_index: usize) -> Self {
        LocalContextGraph {
            day_index,
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_index(&self, stream: StreamType, concept: &str) -> Option<usize> {
        self.nodes
            .binary_search_by(|n| (n.stream, n.concept.as_str()).cmp(&(stream, concept)))
            .ok()
    }

    /// Node index range of one stream.
    pub fn stream_range(&self, stream: StreamType) -> std::ops::Range<usize> {
        let lo = self.nodes.partition_point(|n| n.stream < stream);
        let hi = self.nodes.partition_point(|n| n.stream <= stream);
        lo..hi
    }

    /// Serializes to the canonical JSON dump.
    pub fn to_dump_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }
}

fn add_edges(
    edges: &mut Vec<WeightedEdge>,
    graph: &LocalContextGraph,
    counts: &EdgeCounts,
    (from, to): (StreamType, StreamType),
) {
    let kind = if from == to {
        EdgeKind::Homogeneous
    } else {
        EdgeKind::Heterogeneous
    };
    for ((a, b), &weight) in counts {
        let src = graph.node_index(from, a).expect("edge endpoint is a node");
        let dst = graph.node_index(to, b).expect("edge endpoint is a node");
        edges.push(WeightedEdge { src, dst, kind, weight });
        if kind == EdgeKind::Heterogeneous {
            edges.push(WeightedEdge {
                src: dst,
                dst: src,
                kind,
                weight,
            });
        }
    }
}

/// Builds the local context graph of one day window.
pub fn build_local_graph(window: &DayWindow, table: &EmbeddingTable) -> Result<LocalContextGraph> {
    let mut hours: BTreeMap<(StreamType, &str), i64> = BTreeMap::new();
    for e in window.iter() {
        *hours.entry((e.stream, e.concept.as_str())).or_default() += e.duration();
    }
    let mut graph = LocalContextGraph::empty(window.day_index);
    for ((stream, concept), seconds) in hours {
        let embedding_index = table
            .lookup(concept)
            .ok_or_else(|| Error::Embedding(format!("no embedding for {stream} concept {concept:?}")))?;
        graph.nodes.push(GraphNode {
            stream,
            concept: concept.to_string(),
            attribute: seconds as f64 / 3600.0,
            embedding_index,
        });
    }

    let mut edges = Vec::new();
    for st in StreamType::ALL {
        let counts = homogeneous_edges(window.stream(st));
        add_edges(&mut edges, &graph, &counts, (st, st));
    }
    for (i, &a) in StreamType::ALL.iter().enumerate() {
        for &b in &StreamType::ALL[i + 1..] {
            let counts = heterogeneous_edges(window.stream(a), window.stream(b))?;
            add_edges(&mut edges, &graph, &counts, (a, b));
        }
    }
    edges.sort_by_key(|e| (e.src, e.dst));
    graph.edges = edges;
    Ok(graph)
}

/// Maps a 1-16 PAM score onto its affect quadrant class 0-3.
pub fn quantize_pam(score: u8) -> Result<usize> {
    match score {
        1..=16 => Ok(usize::from((score - 1) / 4)),
        _ => Err(Error::Validation(format!("PAM score {score} outside 1..=16"))),
    }
}

/// `span` consecutive day graphs labelled by the last day.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalSample {
    pub subject: String,
    pub anchor_day: usize,
    pub graphs: Vec<LocalContextGraph>,
    pub label: usize,
}

/// Anchor days with a label and `span - 1` days of history.
pub fn sample_anchor_days(labels: &BTreeMap<usize, usize>, span: usize) -> Vec<usize> {
    labels.keys().copied().filter(|&d| span >= 1 && d + 1 >= span).collect()
}

/// One sample per labelled day `d ≥ span - 1`, covering days `d-span+1..=d`.
pub fn build_samples(
    subject: &str,
    streams: &EventStreams,
    labels: &BTreeMap<usize, usize>,
    span: usize,
    day_origin: i64,
    table: &EmbeddingTable,
) -> Result<Vec<GlobalSample>> {
    if span == 0 {
        return Err(Error::Validation("span must be at least 1".into()));
    }
    let mut cache: HashMap<usize, LocalContextGraph> = HashMap::new();
    let mut samples = Vec::new();
    for anchor in sample_anchor_days(labels, span) {
        let mut graphs = Vec::with_capacity(span);
        for day in anchor + 1 - span..=anchor {
            let graph = match cache.entry(day) {
                Entry::Occupied(e) => e.into_mut(),
                Entry::Vacant(e) => e.insert(build_local_graph(&slice_day(streams, day, day_origin), table)?),
            };
            graphs.push(graph.clone());
        }
        samples.push(GlobalSample {
            subject: subject.to_string(),
            anchor_day: anchor,
            graphs,
            label: labels[&anchor],
        });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{ConceptEvent, Vocabulary, SECONDS_PER_DAY};

    fn vocab() -> Vocabulary {
        Vocabulary::new(vec!["dorm".into(), "library".into()]).unwrap()
    }

    fn table() -> EmbeddingTable {
        EmbeddingTable::fallback(&vocab(), 4, 0)
    }

    #[test]
    fn pam_quadrants() {
        let expected = [(1, 0), (4, 0), (5, 1), (8, 1), (9, 2), (12, 2), (13, 3), (16, 3)];
        for (score, class) in expected {
            assert_eq!(quantize_pam(score).unwrap(), class);
        }
        assert!(quantize_pam(0).is_err());
        assert!(quantize_pam(17).is_err());
    }

    #[test]
    fn empty_window_gives_empty_graph() {
        let g = build_local_graph(&DayWindow::from_events(0, 0, &[]), &table()).unwrap();
        assert!(g.nodes.is_empty() && g.edges.is_empty());
    }

    #[test]
    fn single_event_single_node() {
        let w = DayWindow::from_events(0, 0, &[ConceptEvent::new(StreamType::Activity, "walking", 0, 5400)]);
        let g = build_local_graph(&w, &table()).unwrap();
        assert_eq!(g.nodes.len(), 1);
        assert_eq!(g.nodes[0].attribute, 1.5);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn missing_embedding_is_an_error() {
        let t = EmbeddingTable::from_reader("walking 1 0\n".as_bytes(), &vocab(), None).unwrap();
        let w = DayWindow::from_events(0, 0, &[ConceptEvent::new(StreamType::Activity, "running", 0, 60)]);
        assert!(matches!(build_local_graph(&w, &t), Err(Error::Embedding(_))));
    }

    #[test]
    fn sample_counts() {
        let s = EventStreams::default();
        let labels: BTreeMap<usize, usize> = (0..5).map(|d| (d, d % 4)).collect();
        let samples = build_samples("s", &s, &labels, 3, 0, &table()).unwrap();
        assert_eq!(samples.len(), 3);
        assert_eq!(samples[0].anchor_day, 2);
        assert_eq!(samples[0].label, 2);
        assert_eq!(samples[0].graphs.len(), 3);
        let samples = build_samples("s", &s, &labels, 1, 0, &table()).unwrap();
        assert_eq!(samples.len(), 5);
    }

    #[test]
    fn stream_blocks_are_contiguous() {
        let w = DayWindow::from_events(
            0,
            0,
            &[
                ConceptEvent::new(StreamType::Location, "dorm", 0, 100),
                ConceptEvent::new(StreamType::Activity, "walking", 0, 100),
                ConceptEvent::new(StreamType::Audio, "voice", 50, 150),
                ConceptEvent::new(StreamType::Location, "library", 100, SECONDS_PER_DAY),
            ],
        );
        let g = build_local_graph(&w, &table()).unwrap();
        assert_eq!(g.stream_range(StreamType::Activity), 0..1);
        assert_eq!(g.stream_range(StreamType::Audio), 1..2);
        assert_eq!(g.stream_range(StreamType::Location), 2..4);
        for e in &g.edges {
            let same = g.nodes[e.src].stream == g.nodes[e.dst].stream;
            assert_eq!(same, e.kind == EdgeKind::Homogeneous);
        }
    }
}
