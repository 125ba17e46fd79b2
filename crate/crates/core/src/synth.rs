//! Seeded generator of labelled multi-stream concept logs.
//!
//! Each class owns a day template: a cyclic list of slots, each slot a
//! simultaneous (activity, audio, location) episode with a relative length.
//! A day walks the cycle from a random phase until 24 hours are filled.
//! With probability `noise` an episode instead copies a random slot of a
//! random template, so `noise = 1` makes content independent of the label.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Subject};
use crate::error::{Error, Result};
use crate::stream::{
    ConceptEvent, EventStreams, StreamType, Vocabulary, ACTIVITY_CONCEPTS, AUDIO_CONCEPTS, SECONDS_PER_DAY,
};

/// Fixed day zero of generated cohorts (a UTC midnight).
pub const SYNTH_DAY_ORIGIN: i64 = 1_699_920_000;

const LOCATIONS: [&str; 4] = ["dorm", "library", "gym", "cafeteria"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    /// Classes differ by which slot lasts longest.
    Presence,
    /// Classes differ by the cyclic order of slots.
    Transition,
    /// Classes differ by which audio concept accompanies each location.
    Cooccurrence,
    /// All three at once.
    Combined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub activity: String,
    pub audio: String,
    pub location: String,
    /// Relative episode length.
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayTemplate {
    /// Visited cyclically in this order.
    pub slots: Vec<Slot>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpaSpec {
    pub base: f64,
    pub slope: f64,
    pub noise_sd: f64,
}

impl Default for GpaSpec {
    fn default() -> Self {
        GpaSpec {
            base: 2.0,
            slope: 2.0,
            noise_sd: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub mechanism: Mechanism,
    /// One template per class; empty means the preset of `mechanism`.
    pub templates: Vec<DayTemplate>,
    pub subjects: usize,
    pub days: usize,
    pub noise: f64,
    /// Probability that a day carries a PAM label.
    pub label_density: f64,
    /// Probability that a day repeats the previous day's class.
    pub persistence: f64,
    /// Concentration of the per-subject class mix; small values give
    /// subjects dominated by few classes.
    pub propensity_concentration: f64,
    pub episode_minutes: f64,
    pub gpa: GpaSpec,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            mechanism: Mechanism::Combined,
            templates: Vec::new(),
            subjects: 40,
            days: 30,
            noise: 0.0,
            label_density: 1.0,
            persistence: 0.5,
            propensity_concentration: 2.0,
            episode_minutes: 60.0,
            gpa: GpaSpec::default(),
            seed: 7,
        }
    }
}

/// Directed cycles over four slots with pairwise different edge sets.
const ORDERS: [[usize; 4]; 4] = [[0, 1, 2, 3], [0, 1, 3, 2], [0, 2, 1, 3], [0, 2, 3, 1]];

/// The four class templates of a mechanism.
pub fn preset_templates(mechanism: Mechanism) -> Vec<DayTemplate> {
    let (order, shift, heavy) = match mechanism {
        Mechanism::Presence => (false, false, true),
        Mechanism::Transition => (true, false, false),
        Mechanism::Cooccurrence => (false, true, false),
        Mechanism::Combined => (true, true, true),
    };
    (0..4)
        .map(|class| {
            let cycle = if order { ORDERS[class] } else { ORDERS[0] };
            let slots = cycle
                .iter()
                .map(|&i| Slot {
                    activity: ACTIVITY_CONCEPTS[i].to_string(),
                    audio: AUDIO_CONCEPTS[if shift { (i + class) % 4 } else { i }].to_string(),
                    location: LOCATIONS[i].to_string(),
                    weight: if heavy && i == class { 3.0 } else { 1.0 },
                })
                .collect();
            DayTemplate { slots }
        })
        .collect()
}

/// Which statistic tells two templates apart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeparatingStatistic {
    Duration,
    Transition,
    Cooccurrence,
}

impl DayTemplate {
    fn transitions(&self) -> BTreeSet<(&str, &str)> {
        let n = self.slots.len();
        (0..n)
            .map(|i| {
                (
                    self.slots[i].location.as_str(),
                    self.slots[(i + 1) % n].location.as_str(),
                )
            })
            .filter(|(a, b)| a != b)
            .collect()
    }

    fn pairs(&self) -> BTreeSet<(&str, &str)> {
        self.slots
            .iter()
            .map(|s| (s.location.as_str(), s.audio.as_str()))
            .collect()
    }

    /// Expected share of time per location.
    fn location_shares(&self) -> BTreeMap<&str, f64> {
        let total: f64 = self.slots.iter().map(|s| s.weight).sum();
        let mut out = BTreeMap::new();
        for s in &self.slots {
            *out.entry(s.location.as_str()).or_insert(0.0) += s.weight / total;
        }
        out
    }
}

impl ScenarioSpec {
    pub fn preset(mechanism: Mechanism) -> Self {
        ScenarioSpec {
            mechanism,
            ..ScenarioSpec::default()
        }
    }

    /// Templates in use: explicit ones, else the mechanism preset.
    pub fn resolved_templates(&self) -> Vec<DayTemplate> {
        if self.templates.is_empty() {
            preset_templates(self.mechanism)
        } else {
            self.templates.clone()
        }
    }

    pub fn vocabulary(&self) -> Result<Vocabulary> {
        let mut locations: Vec<String> = Vec::new();
        for t in self.resolved_templates() {
            for s in t.slots {
                if !locations.contains(&s.location) {
                    locations.push(s.location);
                }
            }
        }
        Vocabulary::new(locations).map_err(|e| Error::Validation(e.to_string()))
    }

    /// Checks ranges, template vocabulary and pairwise separability.
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Validation(format!("{name} {v} outside [0, 1]")))
            }
        };
        unit("noise", self.noise)?;
        unit("label_density", self.label_density)?;
        unit("persistence", self.persistence)?;
        if !(self.episode_minutes >= 1.0 && self.episode_minutes.is_finite()) {
            return Err(Error::Validation("episode_minutes must be at least 1".into()));
        }
        if !(self.propensity_concentration > 0.0 && self.propensity_concentration.is_finite()) {
            return Err(Error::Validation("propensity_concentration must be positive".into()));
        }
        if self.gpa.noise_sd < 0.0 || !self.gpa.noise_sd.is_finite() {
            return Err(Error::Validation("gpa.noise_sd must be finite and ≥ 0".into()));
        }
        let templates = self.resolved_templates();
        if templates.len() < 2 {
            return Err(Error::Validation("at least two class templates are needed".into()));
        }
        let vocab = self.vocabulary()?;
        for (c, t) in templates.iter().enumerate() {
            if t.slots.is_empty() {
                return Err(Error::Validation(format!("template {c} has no slots")));
            }
            for s in &t.slots {
                if !vocab.contains(StreamType::Activity, &s.activity) || !vocab.contains(StreamType::Audio, &s.audio) {
                    return Err(Error::Validation(format!(
                        "template {c}: unknown concept in slot ({}, {}, {})",
                        s.activity, s.audio, s.location
                    )));
                }
                if !(s.weight > 0.0 && s.weight.is_finite()) {
                    return Err(Error::Validation(format!("template {c}: slot weight must be positive")));
                }
            }
        }
        self.separating_statistics().map(|_| ())
    }

    /// For every template pair, the first statistic that differs.
    pub fn separating_statistics(&self) -> Result<Vec<(usize, usize, SeparatingStatistic)>> {
        let templates = self.resolved_templates();
        let mut out = Vec::new();
        for a in 0..templates.len() {
            for b in a + 1..templates.len() {
                let (ta, tb) = (&templates[a], &templates[b]);
                let stat = if ta.location_shares() != tb.location_shares() {
                    SeparatingStatistic::Duration
                } else if ta.transitions() != tb.transitions() {
                    SeparatingStatistic::Transition
                } else if ta.pairs() != tb.pairs() {
                    SeparatingStatistic::Cooccurrence
                } else {
                    return Err(Error::Validation(format!("templates {a} and {b} cannot be told apart")));
                };
                out.push((a, b, stat));
            }
        }
        Ok(out)
    }
}

fn subject_rng(seed: u64, subject: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (subject as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn dirichlet(rng: &mut ChaCha8Rng, alpha: f64, k: usize) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive concentration");
    let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng).max(1e-12)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|g| g / total).collect()
}

fn pick(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let mut u = rng.random::<f64>();
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Events of one day generated from `templates[class]`.
fn generate_day(
    rng: &mut ChaCha8Rng,
    templates: &[DayTemplate],
    class: usize,
    day: usize,
    spec: &ScenarioSpec,
) -> Vec<ConceptEvent> {
    let template = &templates[class];
    let day_start = SYNTH_DAY_ORIGIN + day as i64 * SECONDS_PER_DAY;
    let day_end = day_start + SECONDS_PER_DAY;
    let mut position = rng.random_range(0..template.slots.len());
    let mut t = day_start;
    let mut events = Vec::new();
    while t < day_end {
        let slot = if spec.noise > 0.0 && rng.random::<f64>() < spec.noise {
            let other = &templates[rng.random_range(0..templates.len())];
            &other.slots[rng.random_range(0..other.slots.len())]
        } else {
            &template.slots[position]
        };
        let minutes = spec.episode_minutes * slot.weight * rng.random_range(0.75..1.25);
        let end = (t + (minutes * 60.0).round().max(60.0) as i64).min(day_end);
        events.push(ConceptEvent::new(StreamType::Activity, slot.activity.clone(), t, end));
        events.push(ConceptEvent::new(StreamType::Audio, slot.audio.clone(), t, end));
        events.push(ConceptEvent::new(StreamType::Location, slot.location.clone(), t, end));
        t = end;
        position = (position + 1) % template.slots.len();
    }
    events
}

/// Generated cohort plus the class that produced every day.
#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub dataset: Dataset,
    /// `day_classes[subject][day]`.
    pub day_classes: Vec<Vec<usize>>,
}

/// Builds the whole cohort. Subjects are generated independently from
/// `(seed, subject index)`.
pub fn generate(spec: &ScenarioSpec) -> Result<Generated> {
    spec.validate()?;
    let templates = spec.resolved_templates();
    let vocab = spec.vocabulary()?;
    let classes = templates.len();
    let mut subjects = Vec::with_capacity(spec.subjects);
    let mut day_classes = Vec::with_capacity(spec.subjects);
    let mut gpa = BTreeMap::new();
    let gpa_noise = Normal::new(0.0, spec.gpa.noise_sd).expect("validated sd");
    for i in 0..spec.subjects {
        let mut rng = subject_rng(spec.seed, i);
        let mix = dirichlet(&mut rng, spec.propensity_concentration, classes);
        let mut classes_of_day = Vec::with_capacity(spec.days);
        let mut events = Vec::new();
        let mut pam = BTreeMap::new();
        for day in 0..spec.days {
            let class = match classes_of_day.last() {
                Some(&prev) if rng.random::<f64>() < spec.persistence => prev,
                _ => pick(&mut rng, &mix),
            };
            classes_of_day.push(class);
            events.extend(generate_day(&mut rng, &templates, class, day, spec));
            if rng.random::<f64>() < spec.label_density {
                // a score inside the class quadrant; classes beyond four wrap
                let score = 4 * (class % 4) as u8 + 1 + rng.random_range(0..4u8);
                pam.insert(day, score);
            }
        }
        let id = format!("s{i:03}");
        let statistic = if spec.days == 0 || classes < 2 {
            0.0
        } else {
            classes_of_day.iter().sum::<usize>() as f64 / (spec.days * (classes - 1)) as f64
        };
        let g = spec.gpa.base + spec.gpa.slope * statistic + gpa_noise.sample(&mut rng);
        gpa.insert(id.clone(), (g.clamp(0.0, 4.0) * 1e4).round() / 1e4);
        subjects.push(Subject {
            id,
            streams: EventStreams::from_events(events, &vocab)?,
            pam,
        });
        day_classes.push(classes_of_day);
    }
    Ok(Generated {
        dataset: Dataset {
            vocab,
            day_origin: SYNTH_DAY_ORIGIN,
            days: spec.days,
            subjects,
            gpa,
        },
        day_classes,
    })
}

/// Per-template match scores of one day's events.
///
/// Each score adds the fraction of location transitions that belong to the
/// template's cycle, the fraction of location/audio overlap time spent in
/// the template's pairs, and one minus half the L1 distance between the
/// observed and expected location time shares.
pub fn template_scores(events: &[ConceptEvent], spec: &ScenarioSpec) -> Vec<f64> {
    let mut locations: Vec<&ConceptEvent> = events.iter().filter(|e| e.stream == StreamType::Location).collect();
    let mut audio: Vec<&ConceptEvent> = events.iter().filter(|e| e.stream == StreamType::Audio).collect();
    let key = |e: &&ConceptEvent| (e.start, e.end, e.concept.clone());
    locations.sort_by_key(key);
    audio.sort_by_key(key);

    let transitions: Vec<(&str, &str)> = locations
        .windows(2)
        .map(|w| (w[0].concept.as_str(), w[1].concept.as_str()))
        .filter(|(a, b)| a != b)
        .collect();
    let mut overlap: BTreeMap<(&str, &str), i64> = BTreeMap::new();
    for l in &locations {
        for a in &audio {
            let o = l.end.min(a.end) - l.start.max(a.start);
            if o > 0 {
                *overlap.entry((l.concept.as_str(), a.concept.as_str())).or_default() += o;
            }
        }
    }
    let overlap_total: i64 = overlap.values().sum();
    let mut shares: BTreeMap<&str, f64> = BTreeMap::new();
    let location_total: i64 = locations.iter().map(|e| e.duration()).sum();
    for l in &locations {
        *shares.entry(l.concept.as_str()).or_default() += l.duration() as f64 / location_total.max(1) as f64;
    }

    spec.resolved_templates()
        .iter()
        .map(|t| {
            let cycle = t.transitions();
            let trans = if transitions.is_empty() {
                0.0
            } else {
                transitions.iter().filter(|p| cycle.contains(p)).count() as f64 / transitions.len() as f64
            };
            let pairs = t.pairs();
            let pair = if overlap_total == 0 {
                0.0
            } else {
                overlap
                    .iter()
                    .filter(|(p, _)| pairs.contains(p))
                    .map(|(_, v)| *v)
                    .sum::<i64>() as f64
                    / overlap_total as f64
            };
            let expected = t.location_shares();
            let names: BTreeSet<&str> = expected.keys().chain(shares.keys()).copied().collect();
            let l1: f64 = names
                .iter()
                .map(|n| (expected.get(n).unwrap_or(&0.0) - shares.get(n).unwrap_or(&0.0)).abs())
                .sum();
            trans + pair + 1.0 - 0.5 * l1
        })
        .collect()
}

/// Class whose template matches the day best; `None` when the day is empty
/// or the two best scores are within `margin`.
pub fn oracle_label(events: &[ConceptEvent], spec: &ScenarioSpec, margin: f64) -> Option<usize> {
    if events.is_empty() {
        return None;
    }
    let scores = template_scores(events, spec);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (best, second) = (order[0], order.get(1).copied());
    match second {
        Some(s) if scores[best] - scores[s] <= margin => None,
        _ => Some(best),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{slice_day, DayWindow};

    fn day_events(w: &DayWindow) -> Vec<ConceptEvent> {
        w.iter().cloned().collect()
    }

    #[test]
    fn presets_are_separable() {
        for m in [
            Mechanism::Presence,
            Mechanism::Transition,
            Mechanism::Cooccurrence,
            Mechanism::Combined,
        ] {
            let stats = ScenarioSpec::preset(m).separating_statistics().unwrap();
            assert_eq!(stats.len(), 6);
            let expected = match m {
                Mechanism::Presence | Mechanism::Combined => SeparatingStatistic::Duration,
                Mechanism::Transition => SeparatingStatistic::Transition,
                Mechanism::Cooccurrence => SeparatingStatistic::Cooccurrence,
            };
            assert!(stats.iter().all(|s| s.2 == expected), "{m:?}");
        }
    }

    #[test]
    fn identical_templates_rejected() {
        let t = preset_templates(Mechanism::Presence).remove(0);
        let spec = ScenarioSpec {
            templates: vec![t.clone(), t],
            ..ScenarioSpec::default()
        };
        assert!(matches!(spec.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn unknown_template_concept_rejected() {
        let mut templates = preset_templates(Mechanism::Presence);
        templates[1].slots[0].audio = "music".into();
        let spec = ScenarioSpec {
            templates,
            ..ScenarioSpec::default()
        };
        assert!(matches!(spec.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn days_tile_the_window() {
        let spec = ScenarioSpec {
            subjects: 1,
            days: 2,
            ..ScenarioSpec::default()
        };
        let g = generate(&spec).unwrap();
        let s = &g.dataset.subjects[0];
        for st in StreamType::ALL {
            let total: i64 = s.streams.stream(st).iter().map(|e| e.duration()).sum();
            assert_eq!(total, 2 * SECONDS_PER_DAY);
        }
    }

    #[test]
    fn oracle_recovers_zero_noise_days() {
        for m in [
            Mechanism::Presence,
            Mechanism::Transition,
            Mechanism::Cooccurrence,
            Mechanism::Combined,
        ] {
            let spec = ScenarioSpec {
                subjects: 3,
                days: 12,
                ..ScenarioSpec::preset(m)
            };
            let g = generate(&spec).unwrap();
            for (s, classes) in g.dataset.subjects.iter().zip(&g.day_classes) {
                for (d, &c) in classes.iter().enumerate() {
                    let w = slice_day(&s.streams, d, g.dataset.day_origin);
                    assert_eq!(oracle_label(&day_events(&w), &spec, 0.05), Some(c), "{m:?} day {d}");
                }
            }
        }
    }

    #[test]
    fn scores_ignore_event_order() {
        let spec = ScenarioSpec {
            subjects: 1,
            days: 1,
            ..ScenarioSpec::default()
        };
        let g = generate(&spec).unwrap();
        let mut events: Vec<ConceptEvent> = g.dataset.subjects[0].streams.iter().cloned().collect();
        let a = template_scores(&events, &spec);
        events.reverse();
        assert_eq!(a, template_scores(&events, &spec));
    }

    #[test]
    fn empty_day_abstains() {
        assert_eq!(oracle_label(&[], &ScenarioSpec::default(), 0.05), None);
    }
}
