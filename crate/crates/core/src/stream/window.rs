use super::{sort_events, ConceptEvent, EventStreams, StreamType, Vocabulary};
use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: i64 = 86_400;

/// Events of one calendar day `[start, end)`, clipped to the window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DayWindow {
    pub day_index: usize,
    pub start: i64,
    pub end: i64,
    streams: [Vec<ConceptEvent>; 3],
}

impl DayWindow {
    /// Builds a window directly from events; they are clipped and sorted.
    pub fn from_events(day_index: usize, start: i64, events: &[ConceptEvent]) -> Self {
        let end = start + SECONDS_PER_DAY;
        let mut streams: [Vec<ConceptEvent>; 3] = Default::default();
        for e in events {
            let (s, t) = (e.start.max(start), e.end.min(end));
            if s < t {
                streams[e.stream.index()].push(ConceptEvent::new(e.stream, e.concept.clone(), s, t));
            }
        }
        for list in &mut streams {
            sort_events(list);
        }
        DayWindow {
            day_index,
            start,
            end,
            streams,
        }
    }

    pub fn stream(&self, stream: StreamType) -> &[ConceptEvent] {
        &self.streams[stream.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ConceptEvent> {
        self.streams.iter().flatten()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.iter().all(Vec::is_empty)
    }
}

/// Window `[origin + 86400·day, +86400)`; boundary-straddling events are split.
pub fn slice_day(streams: &EventStreams, day_index: usize, day_origin: i64) -> DayWindow {
    let start = day_origin + SECONDS_PER_DAY * day_index as i64;
    let end = start + SECONDS_PER_DAY;
    let mut picked = Vec::new();
    for st in StreamType::ALL {
        let events = streams.stream(st);
        // events are sorted by start; anything starting at or after `end` is out
        let upto = events.partition_point(|e| e.start < end);
        picked.extend(events[..upto].iter().filter(|e| e.end > start).cloned());
    }
    DayWindow::from_events(day_index, start, &picked)
}

/// Midnight (UTC, timestamps treated as naive) at or before the earliest event.
pub fn default_day_origin(streams: &EventStreams) -> Option<i64> {
    streams
        .iter()
        .map(|e| e.start)
        .min()
        .map(|t| t.div_euclid(SECONDS_PER_DAY) * SECONDS_PER_DAY)
}

/// Inclusive range of day indices touched by events at or after `day_origin`.
pub fn day_range(streams: &EventStreams, day_origin: i64) -> Option<(usize, usize)> {
    let mut range: Option<(usize, usize)> = None;
    for e in streams.iter().filter(|e| e.end > day_origin) {
        let first = (e.start.max(day_origin) - day_origin) / SECONDS_PER_DAY;
        let last = (e.end - 1 - day_origin) / SECONDS_PER_DAY;
        let (lo, hi) = range.unwrap_or((first as usize, last as usize));
        range = Some((lo.min(first as usize), hi.max(last as usize)));
    }
    range
}

/// Total hours of `concept` within the window.
pub fn duration_attribute(window: &DayWindow, vocab: &Vocabulary, stream: StreamType, concept: &str) -> Result<f64> {
    if !vocab.contains(stream, concept) {
        return Err(Error::Vocabulary(format!(
            "concept {concept:?} is not in the {stream} vocabulary"
        )));
    }
    let seconds: i64 = window
        .stream(stream)
        .iter()
        .filter(|e| e.concept == concept)
        .map(ConceptEvent::duration)
        .sum();
    Ok(seconds as f64 / 3600.0)
}
