//! Edge counting over sorted concept event lists.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::stream::ConceptEvent;

/// Directed transition counts `(from, to) -> count`.
pub type EdgeCounts = BTreeMap<(String, String), u32>;

/// Counts transitions between consecutive events with different concepts.
/// Events must be sorted by start time.
pub fn homogeneous_edges(events: &[ConceptEvent]) -> EdgeCounts {
    let mut counts = EdgeCounts::new();
    for pair in events.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.concept != b.concept {
            *counts.entry((a.concept.clone(), b.concept.clone())).or_default() += 1;
        }
    }
    counts
}

/// Counts pairs of time-overlapping events from two different streams, keyed
/// `(concept in first, concept in second)`. Intervals that only touch do not
/// overlap.
pub fn heterogeneous_edges(first: &[ConceptEvent], second: &[ConceptEvent]) -> Result<EdgeCounts> {
    if let (Some(a), Some(b)) = (first.first(), second.first()) {
        if a.stream == b.stream {
            return Err(Error::Usage(format!(
                "heterogeneous edges need two different streams, got {} twice",
                a.stream
            )));
        }
    }
    let mut order: Vec<(usize, usize)> = (0..first.len())
        .map(|i| (0, i))
        .chain((0..second.len()).map(|j| (1, j)))
        .collect();
    let lists = [first, second];
    order.sort_by_key(|&(side, i)| (lists[side][i].start, side, i));

    // Sweep by start time; each side keeps the events still open.
    let mut active: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    let mut counts = EdgeCounts::new();
    for (side, i) in order {
        let event = &lists[side][i];
        let other = 1 - side;
        active[other].retain(|&j| lists[other][j].end > event.start);
        for &j in &active[other] {
            let (a, b) = if side == 0 {
                (event, &lists[1][j])
            } else {
                (&lists[0][j], event)
            };
            *counts.entry((a.concept.clone(), b.concept.clone())).or_default() += 1;
        }
        active[side].push(i);
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::StreamType;

    fn loc(c: &str, s: i64, e: i64) -> ConceptEvent {
        ConceptEvent::new(StreamType::Location, c, s, e)
    }

    fn audio(c: &str, s: i64, e: i64) -> ConceptEvent {
        ConceptEvent::new(StreamType::Audio, c, s, e)
    }

    fn key(a: &str, b: &str) -> (String, String) {
        (a.to_string(), b.to_string())
    }

    #[test]
    fn transitions_counted_once_each() {
        let events = [loc("dorm", 0, 1), loc("library", 1, 2), loc("dorm", 2, 3)];
        let c = homogeneous_edges(&events);
        assert_eq!(c.len(), 2);
        assert_eq!(c[&key("dorm", "library")], 1);
        assert_eq!(c[&key("library", "dorm")], 1);
    }

    #[test]
    fn repeated_concept_has_no_self_loop() {
        let w = |s| ConceptEvent::new(StreamType::Activity, "walking", s, s + 1);
        assert!(homogeneous_edges(&[w(0), w(1), w(2)]).is_empty());
    }

    #[test]
    fn overlap_connects_silence_and_library() {
        let c = heterogeneous_edges(&[audio("silence", 0, 100)], &[loc("library", 50, 150)]).unwrap();
        assert_eq!(c[&key("silence", "library")], 1);
    }

    #[test]
    fn touching_intervals_do_not_overlap() {
        let c = heterogeneous_edges(&[audio("silence", 0, 100)], &[loc("library", 100, 200)]).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn same_stream_is_a_usage_error() {
        let r = heterogeneous_edges(&[loc("a", 0, 1)], &[loc("b", 0, 1)]);
        assert!(matches!(r, Err(Error::Usage(_))));
    }

    #[test]
    fn identical_starts_still_overlap() {
        let c = heterogeneous_edges(&[audio("voice", 10, 20)], &[loc("dorm", 10, 11)]).unwrap();
        assert_eq!(c[&key("voice", "dorm")], 1);
    }
}
