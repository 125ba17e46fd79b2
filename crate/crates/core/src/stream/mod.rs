//! Concept event logs: vocabulary, parsing, day windows and duration features.

mod feature;
mod window;

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use feature::{behavior_feature, BehaviorFeature, FEATURE_DIM, LOCATION_SLOTS};
pub use window::{day_range, default_day_origin, duration_attribute, slice_day, DayWindow, SECONDS_PER_DAY};

/// Current version of the event log and vocabulary formats.
pub const FORMAT_VERSION: u32 = 1;

/// Reserved location class for names missing from the vocabulary.
pub const OTHER_LOCATION: &str = "other-location";

pub const ACTIVITY_CONCEPTS: [&str; 4] = ["stationary", "walking", "running", "unknown"];
pub const AUDIO_CONCEPTS: [&str; 4] = ["silence", "voice", "noise", "other"];
pub const MAX_LOCATIONS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamType {
    Activity,
    Audio,
    Location,
}

impl StreamType {
    pub const ALL: [StreamType; 3] = [StreamType::Activity, StreamType::Audio, StreamType::Location];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StreamType::Activity => "activity",
            StreamType::Audio => "audio",
            StreamType::Location => "location",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "activity" => Ok(StreamType::Activity),
            "audio" => Ok(StreamType::Audio),
            "location" => Ok(StreamType::Location),
            other => Err(Error::Vocabulary(format!("unknown stream type {other:?}"))),
        }
    }
}

impl fmt::Display for StreamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Concept classes per stream. Activity and audio are fixed; locations come
/// from a vocabulary file and always end with [`OTHER_LOCATION`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    concepts: [Vec<String>; 3],
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    format: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    activity: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    audio: Option<Vec<String>>,
    location: Vec<String>,
}

impl Vocabulary {
    /// Builds a vocabulary from an ordered location list (at most 100 names).
    pub fn new(locations: Vec<String>) -> Result<Self> {
        if locations.len() > MAX_LOCATIONS {
            return Err(Error::Vocabulary(format!(
                "{} location classes, at most {MAX_LOCATIONS} allowed",
                locations.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &locations {
            if name.is_empty() || name == OTHER_LOCATION || !seen.insert(name.as_str()) {
                return Err(Error::Vocabulary(format!(
                    "location name {name:?} is empty, reserved or duplicated"
                )));
            }
        }
        let mut location = locations;
        location.push(OTHER_LOCATION.to_string());
        Ok(Vocabulary {
            concepts: [
                ACTIVITY_CONCEPTS.iter().map(|s| s.to_string()).collect(),
                AUDIO_CONCEPTS.iter().map(|s| s.to_string()).collect(),
                location,
            ],
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: VocabularyFile =
            serde_json::from_str(text).map_err(|e| Error::Vocabulary(format!("vocabulary file: {e}")))?;
        if file.format != FORMAT_VERSION {
            return Err(Error::Vocabulary(format!(
                "unsupported vocabulary format {}",
                file.format
            )));
        }
        check_fixed("activity", file.activity.as_deref(), &ACTIVITY_CONCEPTS)?;
        check_fixed("audio", file.audio.as_deref(), &AUDIO_CONCEPTS)?;
        Self::new(file.location)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let file = VocabularyFile {
            format: FORMAT_VERSION,
            activity: Some(self.concepts[0].clone()),
            audio: Some(self.concepts[1].clone()),
            location: self.listed_locations().to_vec(),
        };
        serde_json::to_string_pretty(&file).expect("vocabulary serializes")
    }

    /// All concepts of a stream in vocabulary order.
    pub fn concepts(&self, stream: StreamType) -> &[String] {
        &self.concepts[stream.index()]
    }

    /// Location names from the vocabulary file, without the reserved class.
    pub fn listed_locations(&self) -> &[String] {
        let loc = &self.concepts[StreamType::Location.index()];
        &loc[..loc.len() - 1]
    }

    pub fn index_of(&self, stream: StreamType, concept: &str) -> Option<usize> {
        self.concepts(stream).iter().position(|c| c == concept)
    }

    pub fn contains(&self, stream: StreamType, concept: &str) -> bool {
        self.index_of(stream, concept).is_some()
    }

    /// Every `(stream, concept)` pair, in stream then vocabulary order.
    pub fn iter(&self) -> impl Iterator<Item = (StreamType, &str)> {
        StreamType::ALL
            .into_iter()
            .flat_map(move |s| self.concepts(s).iter().map(move |c| (s, c.as_str())))
    }

    /// Hex SHA-256 over the canonical vocabulary listing.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for (stream, concept) in self.iter() {
            hasher.update(stream.as_str().as_bytes());
            hasher.update([0]);
            hasher.update(concept.as_bytes());
            hasher.update([0]);
        }
        hex::encode(hasher.finalize())
    }
}

fn check_fixed(name: &str, given: Option<&[String]>, fixed: &[&str]) -> Result<()> {
    match given {
        Some(list) if list.iter().map(String::as_str).ne(fixed.iter().copied()) => Err(Error::Vocabulary(format!(
            "{name} vocabulary must be exactly {fixed:?}, got {list:?}"
        ))),
        _ => Ok(()),
    }
}

/// One detected concept occurrence over `[start, end)` (seconds since epoch).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConceptEvent {
    pub stream: StreamType,
    pub concept: String,
    pub start: i64,
    pub end: i64,
}

impl ConceptEvent {
    pub fn new(stream: StreamType, concept: impl Into<String>, start: i64, end: i64) -> Self {
        ConceptEvent {
            stream,
            concept: concept.into(),
            start,
            end,
        }
    }

    pub fn duration(&self) -> i64 {
        self.end - self.start
    }

    /// Whether the open intersection of the two intervals is non-empty.
    pub fn overlaps(&self, other: &ConceptEvent) -> bool {
        self.start.max(other.start) < self.end.min(other.end)
    }
}

/// Per-stream event lists, each sorted by `(start, end, concept)` and free of
/// exact duplicates.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EventStreams {
    streams: [Vec<ConceptEvent>; 3],
    /// Location events whose name was mapped to [`OTHER_LOCATION`].
    pub unlisted_locations: usize,
}

impl EventStreams {
    /// Validates and normalizes events. Location names outside the vocabulary
    /// are mapped to the reserved class and counted.
    pub fn from_events(events: Vec<ConceptEvent>, vocab: &Vocabulary) -> Result<Self> {
        let mut out = EventStreams::default();
        for mut e in events {
            if e.start >= e.end {
                return Err(Error::Validation(format!(
                    "{} event {:?} has start {} >= end {}",
                    e.stream, e.concept, e.start, e.end
                )));
            }
            if !vocab.contains(e.stream, &e.concept) {
                if e.stream == StreamType::Location {
                    e.concept = OTHER_LOCATION.to_string();
                    out.unlisted_locations += 1;
                } else {
                    return Err(Error::Vocabulary(format!(
                        "concept {:?} is not in the {} vocabulary",
                        e.concept, e.stream
                    )));
                }
            }
            out.streams[e.stream.index()].push(e);
        }
        for list in &mut out.streams {
            sort_events(list);
            list.dedup();
        }
        Ok(out)
    }

    pub fn stream(&self, stream: StreamType) -> &[ConceptEvent] {
        &self.streams[stream.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ConceptEvent> {
        self.streams.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.streams.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub(crate) fn sort_events(list: &mut [ConceptEvent]) {
    list.sort_by(|a, b| (a.start, a.end, &a.concept).cmp(&(b.start, b.end, &b.concept)));
}

#[derive(Deserialize)]
struct RawLine {
    format: Option<u32>,
    stream: Option<String>,
    concept: Option<String>,
    start: Option<i64>,
    end: Option<i64>,
}

#[derive(Serialize)]
struct Header {
    format: u32,
}

/// Parses a JSON-lines event log. An optional `{"format": 1}` header may
/// appear on the first non-blank line.
pub fn parse_events(reader: impl BufRead, vocab: &Vocabulary) -> Result<EventStreams> {
    let mut events = Vec::new();
    let mut seen_record = false;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let raw: RawLine = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if let Some(version) = raw.format {
            if seen_record || raw.stream.is_some() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "format header must be the first line on its own".into(),
                });
            }
            if version != FORMAT_VERSION {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("unsupported format version {version}"),
                });
            }
            seen_record = true;
            continue;
        }
        seen_record = true;
        let missing = |field: &str| Error::Parse {
            line: line_no,
            message: format!("missing field {field:?}"),
        };
        let stream = StreamType::parse(raw.stream.as_deref().ok_or_else(|| missing("stream"))?)?;
        let concept = raw.concept.ok_or_else(|| missing("concept"))?;
        let start = raw.start.ok_or_else(|| missing("start"))?;
        let end = raw.end.ok_or_else(|| missing("end"))?;
        if start >= end {
            return Err(Error::Validation(format!("line {line_no}: start {start} >= end {end}")));
        }
        events.push(ConceptEvent::new(stream, concept, start, end));
    }
    EventStreams::from_events(events, vocab)
}

pub fn parse_event_log(path: &Path, vocab: &Vocabulary) -> Result<EventStreams> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_events(BufReader::new(file), vocab)
}

/// Writes the header line and one record per event, streams in order.
pub fn write_events<'a>(
    mut writer: impl Write,
    events: impl IntoIterator<Item = &'a ConceptEvent>,
) -> std::io::Result<()> {
    serde_json::to_writer(&mut writer, &Header { format: FORMAT_VERSION })?;
    writer.write_all(b"\n")?;
    for e in events {
        serde_json::to_writer(&mut writer, e)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        Vocabulary::new(vec!["dorm".into(), "library".into()]).unwrap()
    }

    fn parse(text: &str) -> Result<EventStreams> {
        parse_events(text.as_bytes(), &vocab())
    }

    #[test]
    fn empty_file_gives_empty_streams() {
        let s = parse("").unwrap();
        for st in StreamType::ALL {
            assert!(s.stream(st).is_empty());
        }
        assert!(parse("{\"format\":1}\n").unwrap().is_empty());
    }

    #[test]
    fn single_record() {
        let s = parse(r#"{"stream":"activity","concept":"walking","start":0,"end":3600}"#).unwrap();
        let a = s.stream(StreamType::Activity);
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].duration(), 3600);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "{\"format\":1}\n{\"stream\":\"audio\",\"concept\":\"voice\",\"start\":0,\"end\":5}\nnot json\n";
        match parse(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match parse("{\"stream\":\"audio\",\"concept\":\"voice\",\"start\":0}") {
            Err(Error::Parse { line: 1, message }) => assert!(message.contains("end")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_stream_and_concept() {
        let e = parse(r#"{"stream":"gps","concept":"x","start":0,"end":1}"#);
        assert!(matches!(e, Err(Error::Vocabulary(_))));
        let e = parse(r#"{"stream":"audio","concept":"music","start":0,"end":1}"#);
        assert!(matches!(e, Err(Error::Vocabulary(_))));
    }

    #[test]
    fn start_not_before_end_is_rejected() {
        let e = parse(r#"{"stream":"audio","concept":"voice","start":5,"end":5}"#);
        assert!(matches!(e, Err(Error::Validation(_))));
    }

    #[test]
    fn unlisted_location_maps_to_reserved_class() {
        let s = parse(r#"{"stream":"location","concept":"gym","start":0,"end":10}"#).unwrap();
        assert_eq!(s.stream(StreamType::Location)[0].concept, OTHER_LOCATION);
        assert_eq!(s.unlisted_locations, 1);
    }

    #[test]
    fn duplicates_removed_and_sorted() {
        let text = "\
{\"stream\":\"location\",\"concept\":\"library\",\"start\":100,\"end\":200}
{\"stream\":\"location\",\"concept\":\"dorm\",\"start\":0,\"end\":100}
{\"stream\":\"location\",\"concept\":\"library\",\"start\":100,\"end\":200}
";
        let s = parse(text).unwrap();
        let loc = s.stream(StreamType::Location);
        assert_eq!(loc.len(), 2);
        assert_eq!(loc[0].concept, "dorm");
    }

    #[test]
    fn header_version_checked() {
        assert!(matches!(parse("{\"format\":2}"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn vocabulary_file_round_trip() {
        let v = vocab();
        let again = Vocabulary::from_json(&v.to_json()).unwrap();
        assert_eq!(v, again);
        assert_eq!(v.concepts(StreamType::Location).last().unwrap(), OTHER_LOCATION);
        assert!(Vocabulary::from_json(r#"{"format":1,"activity":["walking"],"location":[]}"#).is_err());
        assert!(Vocabulary::from_json(r#"{"format":3,"location":[]}"#).is_err());
        let too_many: Vec<String> = (0..101).map(|i| format!("l{i}")).collect();
        assert!(Vocabulary::new(too_many).is_err());
    }
}
