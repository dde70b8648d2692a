use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{DrugDictionary, PatientRecord};

/// One broken rule on one record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub patient_id: String,
    pub field: String,
    pub rule: String,
}

impl Violation {
    pub fn new(patient_id: &str, field: impl Into<String>, rule: impl Into<String>) -> Self {
        Violation { patient_id: patient_id.to_string(), field: field.into(), rule: rule.into() }
    }

    pub(crate) fn corpus(field: &str, rule: &str) -> Self {
        Violation { patient_id: String::new(), field: field.into(), rule: rule.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.patient_id.is_empty() {
            write!(f, "{}: {}", self.field, self.rule)
        } else {
            write!(f, "patient {} {}: {}", self.patient_id, self.field, self.rule)
        }
    }
}

/// Patterns that must not occur in a patient id: national ID numbers, SSNs,
/// phone numbers, e-mail addresses and "Given Family" personal names.
#[derive(Debug, Clone)]
pub struct DenyList {
    patterns: Vec<(String, Regex)>,
}

impl DenyList {
    pub fn new<I, S>(patterns: I) -> Result<Self, regex::Error>
    where
        I: IntoIterator<Item = (S, S)>,
        S: AsRef<str>,
    {
        let patterns = patterns
            .into_iter()
            .map(|(label, re)| Ok((label.as_ref().to_string(), Regex::new(re.as_ref())?)))
            .collect::<Result<_, regex::Error>>()?;
        Ok(DenyList { patterns })
    }

    pub fn matches(&self, id: &str) -> Option<&str> {
        self.patterns.iter().find(|(_, re)| re.is_match(id)).map(|(label, _)| label.as_str())
    }
}

impl Default for DenyList {
    fn default() -> Self {
        DenyList::new([
            ("national id number", r"\d{17}[\dXx]"),
            ("social security number", r"\b\d{3}-\d{2}-\d{4}\b"),
            ("phone number", r"(^|\D)1[3-9]\d{9}($|\D)"),
            ("e-mail address", r"[^@\s]+@[^@\s]+\.[A-Za-z]{2,}"),
            ("personal name", r"^[A-Z][a-z]+[ ,_]+[A-Z][a-z]+$"),
        ])
        .expect("built-in deny patterns compile")
    }
}

/// Checks every record-level invariant. An empty result means the record is
/// acceptable to [`super::parse_corpus`].
pub fn validate_record(record: &PatientRecord, dict: &DrugDictionary) -> Vec<Violation> {
    validate_record_with(record, dict, &DenyList::default())
}

pub(crate) fn validate_record_with(
    record: &PatientRecord,
    dict: &DrugDictionary,
    deny: &DenyList,
) -> Vec<Violation> {
    let id = record.patient_id.as_str();
    let mut out = Vec::new();
    let mut push = |field: String, rule: &str| out.push(Violation::new(id, field, rule));

    if id.trim().is_empty() {
        push("patient_id".into(), "patient_id non-empty");
    }
    if let Some(kind) = deny.matches(id) {
        push("patient_id".into(), &format!("patient_id contains a direct identifier ({kind})"));
    }
    if record.admissions.is_empty() {
        push("admissions".into(), "at least one admission");
    }

    for (ai, adm) in record.admissions.iter().enumerate() {
        let at = |rest: &str| format!("admissions[{ai}]{rest}");
        if adm.admit_time >= adm.discharge_time {
            push(at(".discharge"), "admit_time < discharge_time");
        }
        if ai > 0 {
            let prev = &record.admissions[ai - 1];
            if adm.admit_time < prev.admit_time {
                push(at(".admit"), "admissions sorted by admit_time");
            } else if adm.admit_time < prev.discharge_time {
                push(at(".admit"), "admission intervals non-overlapping");
            }
        }

        const OUTSIDE: &str = "event timestamp within [admit_time, discharge_time]";
        if adm.diagnoses.iter().filter(|d| d.is_primary).count() > 1 {
            push(at(".diagnoses"), "at most one primary diagnosis");
        }
        for (i, lab) in adm.lab_tests.iter().enumerate() {
            if !adm.contains(lab.sample_time) {
                push(at(&format!(".labs[{i}].sample_time")), OUTSIDE);
            }
            if !lab.value.is_finite() {
                push(at(&format!(".labs[{i}].value")), "lab value finite");
            }
            if let (Some(lo), Some(hi)) = (lab.reference_low, lab.reference_high) {
                if lo > hi {
                    push(at(&format!(".labs[{i}].reference_low")), "reference_low <= reference_high");
                }
            }
        }
        for (i, exam) in adm.examinations.iter().enumerate() {
            if !adm.contains(exam.exam_time) {
                push(at(&format!(".exams[{i}].exam_time")), OUTSIDE);
            }
        }
        for (i, order) in adm.medication_orders.iter().enumerate() {
            if !adm.contains(order.order_time) {
                push(at(&format!(".orders[{i}].order_time")), OUTSIDE);
            }
            if !(order.dose.is_finite() && order.dose >= 0.0 && order.ordered_dose >= 0.0) {
                push(at(&format!(".orders[{i}].dose")), "dose >= 0");
            }
            match dict.get(&order.drug_name) {
                None => push(at(&format!(".orders[{i}].drug_name")), "drug not in dictionary"),
                Some(info) if info.class != order.hormone_class => {
                    push(at(&format!(".orders[{i}].hormone_class")), "hormone_class matches dictionary")
                }
                Some(_) => {}
            }
        }
        for (i, note) in adm.medical_notes.iter().enumerate() {
            if !adm.contains(note.time) {
                push(at(&format!(".notes[{i}].time")), OUTSIDE);
            }
        }
    }

    match (record.outcome.has_sequela, record.outcome.onset_time) {
        (true, None) | (false, Some(_)) => {
            push("outcome.onset_time".into(), "onset_time present iff has_sequela")
        }
        (true, Some(onset)) => {
            if record.first_admit().is_some_and(|first| onset < first) {
                push("outcome.onset_time".into(), "onset_time >= first admit_time");
            }
        }
        (false, None) => {}
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ehr::*;

    fn dict() -> DrugDictionary {
        let mut d = DrugDictionary::new();
        d.insert("prednisone".into(), DrugInfo { class: HormoneClass::MediumActing, prednisone_factor: 1.0 });
        d
    }

    fn valid() -> PatientRecord {
        let t0 = Timestamp::parse("2021-02-01T00:00:00Z").unwrap();
        PatientRecord {
            patient_id: "P-17".into(),
            age: 52,
            gender: Gender::Male,
            admissions: vec![AdmissionEpisode {
                admit_time: t0,
                discharge_time: t0.plus_days(6),
                diagnoses: vec![
                    Diagnosis { code: "M05.9".into(), text: "rheumatoid arthritis".into(), is_primary: true },
                    Diagnosis { code: "E11.9".into(), text: "type 2 diabetes".into(), is_primary: false },
                ],
                lab_tests: vec![],
                examinations: vec![],
                medication_orders: vec![MedicationOrder {
                    drug_name: "prednisone".into(),
                    hormone_class: HormoneClass::MediumActing,
                    dose: 40.0,
                    ordered_dose: 40.0,
                    route: "po".into(),
                    order_time: t0.plus_days(1),
                }],
                medical_notes: vec![],
            }],
            outcome: OutcomeLabel { has_sequela: false, onset_time: None },
        }
    }

    #[test]
    fn valid_record_has_no_violations() {
        assert!(validate_record(&valid(), &dict()).is_empty());
    }

    #[test]
    fn two_primary_diagnoses() {
        let mut r = valid();
        r.admissions[0].diagnoses[1].is_primary = true;
        let v = validate_record(&r, &dict());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "at most one primary diagnosis");
    }

    #[test]
    fn unknown_drug() {
        let mut r = valid();
        r.admissions[0].medication_orders[0].drug_name = "hydroxychloroquine".into();
        let v = validate_record(&r, &dict());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "drug not in dictionary");
        assert_eq!(v[0].field, "admissions[0].orders[0].drug_name");
    }

    #[test]
    fn event_outside_window_is_flagged_not_clamped() {
        let mut r = valid();
        let late = r.admissions[0].discharge_time.plus_secs(1);
        r.admissions[0].medication_orders[0].order_time = late;
        let v = validate_record(&r, &dict());
        assert_eq!(v.len(), 1);
        assert!(v[0].rule.contains("within"));
    }

    #[test]
    fn overlapping_and_unsorted_admissions() {
        let mut r = valid();
        let mut second = r.admissions[0].clone();
        second.admit_time = r.admissions[0].admit_time.plus_days(3);
        second.discharge_time = second.admit_time.plus_days(10);
        second.medication_orders.clear();
        second.diagnoses.clear();
        r.admissions.push(second.clone());
        assert!(validate_record(&r, &dict()).iter().any(|v| v.rule.contains("non-overlapping")));

        r.admissions.swap(0, 1);
        assert!(validate_record(&r, &dict()).iter().any(|v| v.rule.contains("sorted")));
    }

    #[test]
    fn outcome_rules() {
        let mut r = valid();
        r.outcome.has_sequela = true;
        assert!(validate_record(&r, &dict()).iter().any(|v| v.rule.contains("iff")));
        r.outcome.onset_time = Some(r.admissions[0].admit_time.plus_days(-1));
        assert!(validate_record(&r, &dict()).iter().any(|v| v.rule.contains(">= first admit")));
        r.outcome.onset_time = Some(r.admissions[0].admit_time.plus_days(100));
        assert!(validate_record(&r, &dict()).is_empty());
    }

    #[test]
    fn inverted_reference_range() {
        let mut r = valid();
        let t = r.admissions[0].admit_time.plus_days(1);
        r.admissions[0].lab_tests.push(LabTest {
            test_name: "alp".into(),
            value: 80.0,
            unit: "U/L".into(),
            reference_low: Some(120.0),
            reference_high: Some(40.0),
            sample_time: t,
        });
        let v = validate_record(&r, &dict());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "reference_low <= reference_high");
    }

    #[test]
    fn deny_list_catches_direct_identifiers() {
        let deny = DenyList::default();
        for bad in ["11010519491231002X", "123-45-6789", "13812345678", "jane@example.org", "John Smith"] {
            assert!(deny.matches(bad).is_some(), "{bad} should be rejected");
        }
        for ok in ["P000123", "pt-8f3a", "SYN-00042", "A12"] {
            assert!(deny.matches(ok).is_none(), "{ok} should pass");
        }
        let mut r = valid();
        r.patient_id = "Mary Jones".into();
        assert!(validate_record(&r, &dict()).iter().any(|v| v.rule.contains("direct identifier")));
    }
}
