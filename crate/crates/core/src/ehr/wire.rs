//! corpus-JSON reader and writer. Field names here are frozen; see
//! `docs/corpus-format.md`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::validate::{validate_record_with, DenyList, Violation};
use super::{
    AdmissionEpisode, Corpus, CorpusError, Diagnosis, DrugDictionary, DrugInfo, Examination,
    Gender, LabTest, MedicalNote, MedicationOrder, OutcomeLabel, PatientRecord, ResultFlag,
    Timestamp,
};

pub const CORPUS_SCHEMA_VERSION: &str = "1.0";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireCorpus {
    schema_version: String,
    drug_dictionary: BTreeMap<String, WireDrug>,
    patients: Vec<WirePatient>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireDrug {
    class: super::HormoneClass,
    prednisone_factor: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WirePatient {
    id: String,
    age: u32,
    gender: Gender,
    outcome: WireOutcome,
    admissions: Vec<WireAdmission>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireOutcome {
    has_sequela: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    onset_time: Option<Timestamp>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireAdmission {
    admit: Timestamp,
    discharge: Timestamp,
    diagnoses: Vec<WireDiagnosis>,
    labs: Vec<WireLab>,
    exams: Vec<WireExam>,
    orders: Vec<WireOrder>,
    notes: Vec<WireNote>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireDiagnosis {
    code: String,
    text: String,
    is_primary: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireLab {
    test_name: String,
    value: f64,
    unit: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reference_low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reference_high: Option<f64>,
    sample_time: Timestamp,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireExam {
    exam_name: String,
    result_flag: ResultFlag,
    report_text: String,
    exam_time: Timestamp,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireOrder {
    drug_name: String,
    dose: f64,
    route: String,
    order_time: Timestamp,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireNote {
    time: Timestamp,
    text: String,
}

/// Parses and validates a corpus-JSON document.
///
/// Order classes are resolved through the drug dictionary and doses are
/// converted to prednisone-equivalent milligrams. Any invariant violation
/// rejects the whole corpus.
pub fn parse_corpus(source: &[u8]) -> Result<Corpus, CorpusError> {
    parse_corpus_with(source, &DenyList::default())
}

pub fn parse_corpus_with(source: &[u8], deny: &DenyList) -> Result<Corpus, CorpusError> {
    let de = &mut serde_json::Deserializer::from_slice(source);
    let wire: WireCorpus = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CorpusError::Schema { path, message: e.into_inner().to_string() }
    })?;

    let mut violations = Vec::new();
    let mut dictionary = DrugDictionary::new();
    for (name, entry) in wire.drug_dictionary {
        if !(entry.prednisone_factor.is_finite() && entry.prednisone_factor >= 0.0) {
            return Err(CorpusError::Schema {
                path: format!("drug_dictionary.{name}.prednisone_factor"),
                message: "must be a finite non-negative number".into(),
            });
        }
        dictionary.insert(name, DrugInfo { class: entry.class, prednisone_factor: entry.prednisone_factor });
    }

    if wire.patients.is_empty() {
        violations.push(Violation::corpus("patients", "patient count > 0"));
    }

    let mut patients = BTreeMap::new();
    for (pi, wp) in wire.patients.into_iter().enumerate() {
        let record = from_wire_patient(wp, &dictionary, &mut violations);
        violations.extend(validate_record_with(&record, &dictionary, deny));
        if patients.contains_key(&record.patient_id) {
            violations.push(Violation::new(
                &record.patient_id,
                format!("patients[{pi}].id"),
                "patient_id unique within a corpus",
            ));
            continue;
        }
        patients.insert(record.patient_id.clone(), record);
    }

    if !violations.is_empty() {
        return Err(CorpusError::Invariant { violations });
    }
    Ok(Corpus { schema_version: wire.schema_version, drug_dictionary: dictionary, patients })
}

fn from_wire_patient(
    wp: WirePatient,
    dictionary: &DrugDictionary,
    violations: &mut Vec<Violation>,
) -> PatientRecord {
    let admissions = wp
        .admissions
        .into_iter()
        .enumerate()
        .map(|(ai, wa)| AdmissionEpisode {
            admit_time: wa.admit,
            discharge_time: wa.discharge,
            diagnoses: wa
                .diagnoses
                .into_iter()
                .map(|d| Diagnosis { code: d.code, text: d.text, is_primary: d.is_primary })
                .collect(),
            lab_tests: wa
                .labs
                .into_iter()
                .map(|l| LabTest {
                    test_name: l.test_name,
                    value: l.value,
                    unit: l.unit,
                    reference_low: l.reference_low,
                    reference_high: l.reference_high,
                    sample_time: l.sample_time,
                })
                .collect(),
            examinations: wa
                .exams
                .into_iter()
                .map(|e| Examination {
                    exam_name: e.exam_name,
                    result_flag: e.result_flag,
                    report_text: e.report_text,
                    exam_time: e.exam_time,
                })
                .collect(),
            medication_orders: wa
                .orders
                .into_iter()
                .enumerate()
                .map(|(oi, o)| {
                    let (class, factor) = match dictionary.get(&o.drug_name) {
                        Some(info) => (info.class, info.prednisone_factor),
                        None => {
                            violations.push(Violation::new(
                                &wp.id,
                                format!("admissions[{ai}].orders[{oi}].drug_name"),
                                "drug not in dictionary",
                            ));
                            (super::HormoneClass::NonHormone, 0.0)
                        }
                    };
                    MedicationOrder {
                        drug_name: o.drug_name,
                        hormone_class: class,
                        dose: o.dose * factor,
                        ordered_dose: o.dose,
                        route: o.route,
                        order_time: o.order_time,
                    }
                })
                .collect(),
            medical_notes: wa
                .notes
                .into_iter()
                .map(|n| MedicalNote { time: n.time, text: n.text })
                .collect(),
        })
        .collect();

    PatientRecord {
        patient_id: wp.id,
        age: wp.age,
        gender: wp.gender,
        admissions,
        outcome: OutcomeLabel { has_sequela: wp.outcome.has_sequela, onset_time: wp.outcome.onset_time },
    }
}

/// Writes a corpus back to corpus-JSON. Patients are emitted in id order and
/// orders carry their as-written dose, so parsing the output reproduces the
/// corpus field for field.
pub fn serialize_corpus(corpus: &Corpus) -> Vec<u8> {
    let wire = WireCorpus {
        schema_version: corpus.schema_version.clone(),
        drug_dictionary: corpus
            .drug_dictionary
            .iter()
            .map(|(k, v)| (k.clone(), WireDrug { class: v.class, prednisone_factor: v.prednisone_factor }))
            .collect(),
        patients: corpus.patients.values().map(to_wire_patient).collect(),
    };
    serde_json::to_vec(&wire).expect("corpus serialization is infallible")
}

fn to_wire_patient(p: &PatientRecord) -> WirePatient {
    WirePatient {
        id: p.patient_id.clone(),
        age: p.age,
        gender: p.gender,
        outcome: WireOutcome { has_sequela: p.outcome.has_sequela, onset_time: p.outcome.onset_time },
        admissions: p
            .admissions
            .iter()
            .map(|a| WireAdmission {
                admit: a.admit_time,
                discharge: a.discharge_time,
                diagnoses: a
                    .diagnoses
                    .iter()
                    .map(|d| WireDiagnosis { code: d.code.clone(), text: d.text.clone(), is_primary: d.is_primary })
                    .collect(),
                labs: a
                    .lab_tests
                    .iter()
                    .map(|l| WireLab {
                        test_name: l.test_name.clone(),
                        value: l.value,
                        unit: l.unit.clone(),
                        reference_low: l.reference_low,
                        reference_high: l.reference_high,
                        sample_time: l.sample_time,
                    })
                    .collect(),
                exams: a
                    .examinations
                    .iter()
                    .map(|e| WireExam {
                        exam_name: e.exam_name.clone(),
                        result_flag: e.result_flag,
                        report_text: e.report_text.clone(),
                        exam_time: e.exam_time,
                    })
                    .collect(),
                orders: a
                    .medication_orders
                    .iter()
                    .map(|o| WireOrder {
                        drug_name: o.drug_name.clone(),
                        dose: o.ordered_dose,
                        route: o.route.clone(),
                        order_time: o.order_time,
                    })
                    .collect(),
                notes: a.medical_notes.iter().map(|n| WireNote { time: n.time, text: n.text.clone() }).collect(),
            })
            .collect(),
    }
}
