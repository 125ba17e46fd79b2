use super::{DayWindow, StreamType, Vocabulary, ACTIVITY_CONCEPTS, AUDIO_CONCEPTS};

pub const LOCATION_SLOTS: usize = 100;
pub const FEATURE_DIM: usize = ACTIVITY_CONCEPTS.len() + AUDIO_CONCEPTS.len() + LOCATION_SLOTS;

/// Per-day concept durations in hours: 4 activity, 4 audio and 100 location
/// slots in vocabulary order. Unused location slots and the reserved
/// `other-location` class are not represented.
#[derive(Clone, Debug, PartialEq)]
pub struct BehaviorFeature(pub [f64; FEATURE_DIM]);

impl BehaviorFeature {
    pub fn zeros() -> Self {
        BehaviorFeature([0.0; FEATURE_DIM])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Offset of a stream's block inside the vector.
    pub fn offset(stream: StreamType) -> usize {
        match stream {
            StreamType::Activity => 0,
            StreamType::Audio => ACTIVITY_CONCEPTS.len(),
            StreamType::Location => ACTIVITY_CONCEPTS.len() + AUDIO_CONCEPTS.len(),
        }
    }
}

pub fn behavior_feature(window: &DayWindow, vocab: &Vocabulary) -> BehaviorFeature {
    let mut f = BehaviorFeature::zeros();
    let listed = vocab.listed_locations().len();
    for e in window.iter() {
        let Some(i) = vocab.index_of(e.stream, &e.concept) else {
            continue;
        };
        if e.stream == StreamType::Location && i >= listed {
            continue;
        }
        f.0[BehaviorFeature::offset(e.stream) + i] += e.duration() as f64;
    }
    for v in f.0.iter_mut() {
        *v /= 3600.0;
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{ConceptEvent, SECONDS_PER_DAY};

    fn vocab() -> Vocabulary {
        Vocabulary::new(vec!["dorm".into(), "library".into()]).unwrap()
    }

    #[test]
    fn empty_day_is_zero() {
        let w = DayWindow::from_events(0, 0, &[]);
        assert_eq!(behavior_feature(&w, &vocab()), BehaviorFeature::zeros());
    }

    #[test]
    fn full_day_stationary() {
        let w = DayWindow::from_events(
            0,
            0,
            &[ConceptEvent::new(
                StreamType::Activity,
                "stationary",
                0,
                SECONDS_PER_DAY,
            )],
        );
        let f = behavior_feature(&w, &vocab());
        assert_eq!(f.0[0], 24.0);
        assert_eq!(f.0.iter().sum::<f64>(), 24.0);
    }

    #[test]
    fn locations_follow_vocabulary_order() {
        let w = DayWindow::from_events(
            0,
            0,
            &[
                ConceptEvent::new(StreamType::Location, "library", 0, 7200),
                ConceptEvent::new(StreamType::Location, "other-location", 7200, 9000),
            ],
        );
        let f = behavior_feature(&w, &vocab());
        assert_eq!(f.0[BehaviorFeature::offset(StreamType::Location) + 1], 2.0);
        assert_eq!(f.0.iter().sum::<f64>(), 2.0);
    }
}
