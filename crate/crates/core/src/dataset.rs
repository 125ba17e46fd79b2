//! On-disk cohort layout.
//!
//! ```text
//! <dir>/vocab.json           location vocabulary
//! <dir>/meta.json            {"format": 1, "day_origin": <seconds>}
//! <dir>/subjects/<id>.jsonl  event log per subject
//! <dir>/labels.csv           subject,day,pam
//! <dir>/gpa.csv              subject,gpa (optional)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::EmbeddingTable;
use crate::graph::{build_samples, quantize_pam, GlobalSample};
use crate::stream::{
    behavior_feature, default_day_origin, parse_event_log, slice_day, write_events, BehaviorFeature, EventStreams,
    Vocabulary, FORMAT_VERSION,
};

#[derive(Clone, Debug, PartialEq)]
pub struct Subject {
    pub id: String,
    pub streams: EventStreams,
    /// Day index to PAM score.
    pub pam: BTreeMap<usize, u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub day_origin: i64,
    /// Number of days covered, starting at `day_origin`.
    pub days: usize,
    pub subjects: Vec<Subject>,
    pub gpa: BTreeMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    format: u32,
    day_origin: Option<i64>,
    #[serde(default)]
    days: Option<usize>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_rows(path: &Path, columns: usize) -> Result<Vec<Vec<String>>> {
    let text = read(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(|f| f.trim().to_string()).collect();
        if fields.len() != columns {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("{}: expected {columns} fields", path.display()),
            });
        }
        rows.push(fields);
    }
    Ok(rows)
}

fn parse_field<T: std::str::FromStr>(value: &str, line: usize, what: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad {what} {value:?}"),
    })
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let vocab = Vocabulary::load(&dir.join("vocab.json"))?;
        let meta_path = dir.join("meta.json");
        let meta: Option<Meta> = if meta_path.exists() {
            let m: Meta = serde_json::from_str(&read(&meta_path)?)?;
            if m.format != FORMAT_VERSION {
                return Err(Error::Validation(format!("unsupported meta format {}", m.format)));
            }
            Some(m)
        } else {
            None
        };

        let subject_dir = dir.join("subjects");
        let mut paths: Vec<_> = fs::read_dir(&subject_dir)
            .map_err(|e| Error::io(&subject_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        let mut subjects = Vec::with_capacity(paths.len());
        for p in paths {
            let id = p.file_stem().unwrap().to_string_lossy().into_owned();
            let streams = parse_event_log(&p, &vocab)?;
            if streams.unlisted_locations > 0 {
                log::warn!("{id}: {} events mapped to other-location", streams.unlisted_locations);
            }
            subjects.push(Subject {
                id,
                streams,
                pam: BTreeMap::new(),
            });
        }

        let day_origin = match meta.as_ref().and_then(|m| m.day_origin) {
            Some(o) => o,
            None => subjects
                .iter()
                .filter_map(|s| default_day_origin(&s.streams))
                .min()
                .unwrap_or(0),
        };

        let labels_path = dir.join("labels.csv");
        for (i, row) in csv_rows(&labels_path, 3)?.into_iter().enumerate() {
            let line = i + 2;
            let day: usize = parse_field(&row[1], line, "day")?;
            let pam: u8 = parse_field(&row[2], line, "PAM score")?;
            quantize_pam(pam)?;
            let subject = subjects
                .iter_mut()
                .find(|s| s.id == row[0])
                .ok_or_else(|| Error::Validation(format!("labels.csv line {line}: unknown subject {:?}", row[0])))?;
            subject.pam.insert(day, pam);
        }

        let mut gpa = BTreeMap::new();
        let gpa_path = dir.join("gpa.csv");
        if gpa_path.exists() {
            for (i, row) in csv_rows(&gpa_path, 2)?.into_iter().enumerate() {
                let value: f64 = parse_field(&row[1], i + 2, "gpa")?;
                gpa.insert(row[0].clone(), value);
            }
        }

        let days = match meta.as_ref().and_then(|m| m.days) {
            Some(d) => d,
            None => {
                let last_event = subjects
                    .iter()
                    .flat_map(|s| s.streams.iter().map(|e| e.end))
                    .max()
                    .map_or(0, |end| {
                        ((end - 1 - day_origin).max(0) / crate::stream::SECONDS_PER_DAY) as usize + 1
                    });
                let last_label = subjects
                    .iter()
                    .filter_map(|s| s.pam.keys().next_back().map(|d| d + 1))
                    .max()
                    .unwrap_or(0);
                last_event.max(last_label)
            }
        };

        Ok(Dataset {
            vocab,
            day_origin,
            days,
            subjects,
            gpa,
        })
    }

    /// Writes every file of the layout; the directory is created if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let subject_dir = dir.join("subjects");
        fs::create_dir_all(&subject_dir).map_err(|e| Error::io(&subject_dir, e))?;
        write(&dir.join("vocab.json"), &self.vocab.to_json())?;
        let meta = Meta {
            format: FORMAT_VERSION,
            day_origin: Some(self.day_origin),
            days: Some(self.days),
        };
        write(&dir.join("meta.json"), &(serde_json::to_string_pretty(&meta)? + "\n"))?;
        let mut labels = String::from("subject,day,pam\n");
        for s in &self.subjects {
            let mut buf = Vec::new();
            let mut events: Vec<_> = s.streams.iter().collect();
            events.sort_by(|a, b| (a.start, a.stream, a.end, &a.concept).cmp(&(b.start, b.stream, b.end, &b.concept)));
            write_events(&mut buf, events).expect("writing to memory");
            let path = subject_dir.join(format!("{}.jsonl", s.id));
            fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
            for (day, pam) in &s.pam {
                labels.push_str(&format!("{},{day},{pam}\n", s.id));
            }
        }
        write(&dir.join("labels.csv"), &labels)?;
        if !self.gpa.is_empty() {
            let mut text = String::from("subject,gpa\n");
            for (id, g) in &self.gpa {
                text.push_str(&format!("{id},{g:.4}\n"));
            }
            write(&dir.join("gpa.csv"), &text)?;
        }
        Ok(())
    }

    /// Labelled samples of every subject, in subject then day order.
    pub fn samples(&self, span: usize, table: &EmbeddingTable) -> Result<Vec<GlobalSample>> {
        let mut out = Vec::new();
        for s in &self.subjects {
            let labels = s
                .pam
                .iter()
                .map(|(&d, &p)| Ok((d, quantize_pam(p)?)))
                .collect::<Result<BTreeMap<_, _>>>()?;
            out.extend(build_samples(&s.id, &s.streams, &labels, span, self.day_origin, table)?);
        }
        Ok(out)
    }

    /// Every full-span window of one subject, labelled or not (label 0 for
    /// unlabelled anchors).
    pub fn term_samples(&self, subject: &Subject, span: usize, table: &EmbeddingTable) -> Result<Vec<GlobalSample>> {
        let labels: BTreeMap<usize, usize> = (0..self.days)
            .map(|d| Ok((d, s_label(subject, d)?)))
            .collect::<Result<_>>()?;
        build_samples(&subject.id, &subject.streams, &labels, span, self.day_origin, table)
    }

    /// Per-day 108-d duration features of one subject over the whole term.
    pub fn daily_features(&self, subject: &Subject) -> Vec<BehaviorFeature> {
        (0..self.days)
            .map(|d| behavior_feature(&slice_day(&subject.streams, d, self.day_origin), &self.vocab))
            .collect()
    }
}

fn s_label(subject: &Subject, day: usize) -> Result<usize> {
    subject.pam.get(&day).map_or(Ok(0), |&p| quantize_pam(p))
}
