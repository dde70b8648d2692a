//! Per-patient event lanes for the medical event view.
//!
//! Three lanes share one linear time axis from first admission to last
//! discharge: medication orders (G4), laboratory tests (G2) and checks
//! information, which is the examination stream (G3). Gaps between
//! admissions are kept as-is.

use serde::{Deserialize, Serialize};

use crate::ehr::{Examination, LabTest, MedicalNote, MedicationOrder, PatientRecord, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneKind {
    MedicationOrders,
    LaboratoryTests,
    ChecksInformation,
}

impl LaneKind {
    pub const ORDER: [LaneKind; 3] = [LaneKind::MedicationOrders, LaneKind::LaboratoryTests, LaneKind::ChecksInformation];

    pub fn title(self) -> &'static str {
        match self {
            LaneKind::MedicationOrders => "Medication Order",
            LaneKind::LaboratoryTests => "Laboratory Tests",
            LaneKind::ChecksInformation => "Checks Information",
        }
    }

    pub fn index(self) -> usize {
        match self {
            LaneKind::MedicationOrders => 0,
            LaneKind::LaboratoryTests => 1,
            LaneKind::ChecksInformation => 2,
        }
    }
}

/// Position of an event in the source record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRef {
    pub admission: usize,
    pub item: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneEvent {
    pub time: Timestamp,
    /// Position on the shared axis, 0 at `time_domain[0]`, 1 at `time_domain[1]`.
    pub position: f64,
    /// Layer 2: event name plus its key value.
    pub name: String,
    pub value: Option<f64>,
    pub unit: Option<String>,
    pub flagged: bool,
    /// Layer 3 is fetched through [`expand_event`].
    pub source: SourceRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub kind: LaneKind,
    pub title: String,
    pub events: Vec<LaneEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineDoc {
    pub patient_id: String,
    pub time_domain: [Timestamp; 2],
    pub lanes: Vec<Lane>,
}

impl TimelineDoc {
    pub fn lane(&self, kind: LaneKind) -> &Lane {
        &self.lanes[kind.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "record", rename_all = "snake_case")]
pub enum SourceEvent {
    Order(MedicationOrder),
    Lab(LabTest),
    Exam(Examination),
}

/// Layer-3 payload: the verbatim source event plus notes written the same
/// UTC day within the same admission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventDetail {
    pub lane: LaneKind,
    pub admission_index: usize,
    pub event: SourceEvent,
    pub notes: Vec<MedicalNote>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TimelineError {
    #[error("event index {index} out of range for lane {lane:?} with {len} events")]
    IndexOutOfRange { lane: LaneKind, index: usize, len: usize },
    #[error("timeline belongs to {doc} but record is {record}")]
    PatientMismatch { doc: String, record: String },
    #[error("patient {0} has no admissions")]
    NoAdmissions(String),
}

pub fn build_timeline(record: &PatientRecord) -> Result<TimelineDoc, TimelineError> {
    let (t0, t1) = match (record.first_admit(), record.last_discharge()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(TimelineError::NoAdmissions(record.patient_id.clone())),
    };
    let span = (t1.0 - t0.0).max(1) as f64;
    let position = |t: Timestamp| (t.0 - t0.0) as f64 / span;

    let mut lanes: Vec<Lane> = LaneKind::ORDER
        .iter()
        .map(|&kind| Lane { kind, title: kind.title().into(), events: Vec::new() })
        .collect();

    for (ai, adm) in record.admissions.iter().enumerate() {
        for (k, o) in adm.medication_orders.iter().enumerate() {
            lanes[0].events.push(LaneEvent {
                time: o.order_time,
                position: position(o.order_time),
                name: o.drug_name.clone(),
                value: Some(o.dose),
                unit: Some("mg pred-eq".into()),
                flagged: o.hormone_class.is_hormone(),
                source: SourceRef { admission: ai, item: k },
            });
        }
        for (k, l) in adm.lab_tests.iter().enumerate() {
            lanes[1].events.push(LaneEvent {
                time: l.sample_time,
                position: position(l.sample_time),
                name: l.test_name.clone(),
                value: Some(l.value),
                unit: Some(l.unit.clone()),
                flagged: l.is_abnormal(),
                source: SourceRef { admission: ai, item: k },
            });
        }
        for (k, e) in adm.examinations.iter().enumerate() {
            lanes[2].events.push(LaneEvent {
                time: e.exam_time,
                position: position(e.exam_time),
                name: e.exam_name.clone(),
                value: None,
                unit: None,
                flagged: e.result_flag == crate::ehr::ResultFlag::Abnormal,
                source: SourceRef { admission: ai, item: k },
            });
        }
    }
    for lane in &mut lanes {
        lane.events.sort_by_key(|e| e.time);
    }

    Ok(TimelineDoc { patient_id: record.patient_id.clone(), time_domain: [t0, t1], lanes })
}

pub fn expand_event(doc: &TimelineDoc, record: &PatientRecord, lane: LaneKind, index: usize) -> Result<EventDetail, TimelineError> {
    if doc.patient_id != record.patient_id {
        return Err(TimelineError::PatientMismatch { doc: doc.patient_id.clone(), record: record.patient_id.clone() });
    }
    let events = &doc.lane(lane).events;
    let ev = events
        .get(index)
        .ok_or(TimelineError::IndexOutOfRange { lane, index, len: events.len() })?;
    let adm = &record.admissions[ev.source.admission];
    let (event, time) = match lane {
        LaneKind::MedicationOrders => {
            let o = &adm.medication_orders[ev.source.item];
            (SourceEvent::Order(o.clone()), o.order_time)
        }
        LaneKind::LaboratoryTests => {
            let l = &adm.lab_tests[ev.source.item];
            (SourceEvent::Lab(l.clone()), l.sample_time)
        }
        LaneKind::ChecksInformation => {
            let e = &adm.examinations[ev.source.item];
            (SourceEvent::Exam(e.clone()), e.exam_time)
        }
    };
    let notes = adm.medical_notes.iter().filter(|n| n.time.day_index() == time.day_index()).cloned().collect();
    Ok(EventDetail { lane, admission_index: ev.source.admission, event, notes })
}
