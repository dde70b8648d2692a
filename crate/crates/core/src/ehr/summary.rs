use serde::{Deserialize, Serialize};

use super::{Corpus, HormoneClass, Timestamp};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub diagnoses: usize,
    pub lab_tests: usize,
    pub examinations: usize,
    pub medication_orders: usize,
    pub medical_notes: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HormoneOrderCounts {
    pub short_acting: usize,
    pub medium_acting: usize,
    pub long_acting: usize,
    pub non_hormone: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSpan {
    pub start: Timestamp,
    pub end: Timestamp,
}

/// Corpus overview shown before any cohort is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub schema_version: String,
    pub patient_count: usize,
    pub positive_count: usize,
    pub sequela_prevalence: f64,
    pub admission_count: usize,
    pub event_counts: EventCounts,
    pub time_span: Option<TimeSpan>,
    pub hormone_class_orders: HormoneOrderCounts,
}

pub fn corpus_summary(corpus: &Corpus) -> CorpusSummary {
    let mut events = EventCounts::default();
    let mut classes = HormoneOrderCounts::default();
    let mut positives = 0;
    let mut admissions = 0;
    let mut span: Option<TimeSpan> = None;

    for p in corpus.patients.values() {
        positives += usize::from(p.outcome.has_sequela);
        admissions += p.admissions.len();
        for a in &p.admissions {
            events.diagnoses += a.diagnoses.len();
            events.lab_tests += a.lab_tests.len();
            events.examinations += a.examinations.len();
            events.medication_orders += a.medication_orders.len();
            events.medical_notes += a.medical_notes.len();
            for o in &a.medication_orders {
                match o.hormone_class {
                    HormoneClass::ShortActing => classes.short_acting += 1,
                    HormoneClass::MediumActing => classes.medium_acting += 1,
                    HormoneClass::LongActing => classes.long_acting += 1,
                    HormoneClass::NonHormone => classes.non_hormone += 1,
                }
            }
            span = Some(match span {
                None => TimeSpan { start: a.admit_time, end: a.discharge_time },
                Some(s) => TimeSpan { start: s.start.min(a.admit_time), end: s.end.max(a.discharge_time) },
            });
        }
    }

    let n = corpus.patients.len();
    CorpusSummary {
        schema_version: corpus.schema_version.clone(),
        patient_count: n,
        positive_count: positives,
        sequela_prevalence: if n == 0 { 0.0 } else { positives as f64 / n as f64 },
        admission_count: admissions,
        event_counts: events,
        time_span: span,
        hormone_class_orders: classes,
    }
}
