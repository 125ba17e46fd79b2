#![allow(dead_code)]

use std::collections::BTreeMap;

use lgibg::gnn::EmbeddingTable;
use lgibg::graph::{EdgeKind, LocalContextGraph};
use lgibg::stream::{ConceptEvent, EventStreams, StreamType, Vocabulary, ACTIVITY_CONCEPTS, AUDIO_CONCEPTS};
use rand::Rng;

pub type TransitionTally = BTreeMap<(StreamType, String, String), u32>;
pub type OverlapTally = BTreeMap<((StreamType, String), (StreamType, String)), u32>;

pub const ORIGIN: i64 = 1_700_006_400;

pub fn vocab() -> Vocabulary {
    Vocabulary::new(vec!["dorm".into(), "library".into(), "gym".into()]).unwrap()
}

pub fn concepts(stream: StreamType) -> Vec<&'static str> {
    match stream {
        StreamType::Activity => ACTIVITY_CONCEPTS.to_vec(),
        StreamType::Audio => AUDIO_CONCEPTS.to_vec(),
        StreamType::Location => vec!["dorm", "library", "gym"],
    }
}

/// Up to `max_events` events inside day 0. Each stream is a sequence of
/// back-to-back or gapped segments, so events of one stream never overlap.
pub fn random_day(rng: &mut impl Rng, max_events: usize) -> Vec<ConceptEvent> {
    let total = rng.random_range(0..=max_events);
    let mut counts = [0usize; 3];
    for _ in 0..total {
        counts[rng.random_range(0..3)] += 1;
    }
    let mut events = Vec::new();
    for (s, stream) in StreamType::ALL.into_iter().enumerate() {
        let names = concepts(stream);
        let slot = 86_400 / (counts[s].max(1) as i64);
        for i in 0..counts[s] {
            let lo = ORIGIN + i as i64 * slot;
            let start = lo + rng.random_range(0..slot / 3);
            let end = lo + rng.random_range(slot / 2..=slot);
            let concept = names[rng.random_range(0..names.len())];
            events.push(ConceptEvent::new(stream, concept, start, end));
        }
    }
    events
}

pub fn streams(events: Vec<ConceptEvent>) -> EventStreams {
    EventStreams::from_events(events, &vocab()).unwrap()
}

pub fn table(dim: usize) -> EmbeddingTable {
    EmbeddingTable::fallback(&vocab(), dim, 11)
}

/// Adjacent distinct-concept pairs per stream, events taken in start order.
pub fn transition_tally(events: &[ConceptEvent]) -> TransitionTally {
    let mut out = BTreeMap::new();
    for stream in StreamType::ALL {
        let mut list: Vec<&ConceptEvent> = events.iter().filter(|e| e.stream == stream).collect();
        list.sort_by_key(|e| (e.start, e.end));
        for i in 1..list.len() {
            if list[i - 1].concept != list[i].concept {
                *out.entry((stream, list[i - 1].concept.clone(), list[i].concept.clone()))
                    .or_insert(0) += 1;
            }
        }
    }
    out
}

/// Every pair of cross-stream events with a shared open interval, keyed by
/// the two `(stream, concept)` endpoints in stream order.
pub fn overlap_tally(events: &[ConceptEvent]) -> OverlapTally {
    let mut out = BTreeMap::new();
    for a in events {
        for b in events {
            if a.stream < b.stream && a.start < b.end && b.start < a.end {
                let key = ((a.stream, a.concept.clone()), (b.stream, b.concept.clone()));
                *out.entry(key).or_insert(0) += 1;
            }
        }
    }
    out
}

/// Edge weights of a built graph in the same keyed form as the tallies.
pub fn graph_tallies(g: &LocalContextGraph) -> (TransitionTally, OverlapTally) {
    let mut homo = BTreeMap::new();
    let mut hetero = BTreeMap::new();
    for e in &g.edges {
        let (s, d) = (&g.nodes[e.src], &g.nodes[e.dst]);
        match e.kind {
            EdgeKind::Homogeneous => {
                assert_eq!(s.stream, d.stream);
                homo.insert((s.stream, s.concept.clone(), d.concept.clone()), e.weight);
            }
            EdgeKind::Heterogeneous => {
                if s.stream < d.stream {
                    hetero.insert(((s.stream, s.concept.clone()), (d.stream, d.concept.clone())), e.weight);
                }
            }
        }
    }
    (homo, hetero)
}
