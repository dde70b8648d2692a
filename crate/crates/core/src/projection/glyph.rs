use serde::{Deserialize, Serialize};

use crate::ehr::{HormoneClass, PatientRecord};

/// One admission on the left semicircle. Fractions are positions along the
/// patient's first-admit → last-discharge span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlyphArc {
    pub start_fraction: f64,
    pub end_fraction: f64,
    /// Medication order positions on the same scale.
    pub ticks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlyphSector {
    pub class: HormoneClass,
    pub dose_mg: f64,
    pub angle_degrees: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlyphSpec {
    pub patient_id: String,
    pub total_days: f64,
    pub center_text: String,
    pub left_arcs: Vec<GlyphArc>,
    /// Always three sectors, short/medium/long.
    pub right_sectors: Vec<GlyphSector>,
}

pub fn build_glyph(record: &PatientRecord) -> GlyphSpec {
    let total_days = record.total_stay_days();
    let center_text = if total_days.fract() == 0.0 { format!("{total_days:.0}") } else { format!("{total_days:.1}") };

    let left_arcs = match (record.first_admit(), record.last_discharge()) {
        (Some(t0), Some(t1)) if t1 > t0 => {
            let span = (t1.0 - t0.0) as f64;
            let frac = |t: crate::ehr::Timestamp| ((t.0 - t0.0) as f64 / span).clamp(0.0, 1.0);
            record
                .admissions
                .iter()
                .map(|a| GlyphArc {
                    start_fraction: frac(a.admit_time),
                    end_fraction: frac(a.discharge_time),
                    ticks: a.medication_orders.iter().map(|o| frac(o.order_time)).collect(),
                })
                .collect()
        }
        _ => Vec::new(),
    };

    let doses = record.cumulative_dose_by_class();
    let total: f64 = doses.iter().sum();
    let right_sectors = HormoneClass::HORMONES
        .iter()
        .zip(doses)
        .map(|(&class, dose)| GlyphSector {
            class,
            dose_mg: dose,
            angle_degrees: if total > 0.0 { 180.0 * (dose / total) } else { 0.0 },
        })
        .collect();

    GlyphSpec { patient_id: record.patient_id.clone(), total_days, center_text, left_arcs, right_sectors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ehr::*;

    fn record(doses: &[(HormoneClass, f64)], n_adm: usize) -> PatientRecord {
        let t0 = Timestamp::parse("2020-01-01T00:00:00Z").unwrap();
        let admissions = (0..n_adm)
            .map(|k| {
                let admit = t0.plus_days(20 * k as i64);
                AdmissionEpisode {
                    admit_time: admit,
                    discharge_time: admit.plus_days(10),
                    diagnoses: vec![],
                    lab_tests: vec![],
                    examinations: vec![],
                    medication_orders: if k == 0 {
                        doses
                            .iter()
                            .map(|&(c, d)| MedicationOrder {
                                drug_name: "x".into(),
                                hormone_class: c,
                                dose: d,
                                ordered_dose: d,
                                route: "po".into(),
                                order_time: admit.plus_days(5),
                            })
                            .collect()
                    } else {
                        vec![]
                    },
                    medical_notes: vec![],
                }
            })
            .collect();
        PatientRecord {
            patient_id: "g".into(),
            age: 50,
            gender: Gender::Female,
            admissions,
            outcome: OutcomeLabel { has_sequela: false, onset_time: None },
        }
    }

    #[test]
    fn single_admission_short_only() {
        let g = build_glyph(&record(&[(HormoneClass::ShortActing, 25.0)], 1));
        assert_eq!(g.left_arcs.len(), 1);
        assert_eq!((g.left_arcs[0].start_fraction, g.left_arcs[0].end_fraction), (0.0, 1.0));
        assert_eq!(g.left_arcs[0].ticks, vec![0.5]);
        let angles: Vec<f64> = g.right_sectors.iter().map(|s| s.angle_degrees).collect();
        assert_eq!(angles, vec![180.0, 0.0, 0.0]);
        assert_eq!(g.center_text, "10");
    }

    #[test]
    fn proportional_sectors() {
        let g = build_glyph(&record(
            &[(HormoneClass::ShortActing, 10.0), (HormoneClass::MediumActing, 10.0), (HormoneClass::LongActing, 20.0)],
            1,
        ));
        let angles: Vec<f64> = g.right_sectors.iter().map(|s| s.angle_degrees).collect();
        assert_eq!(angles, vec![45.0, 45.0, 90.0]);
    }

    #[test]
    fn no_hormones_means_empty_right_side() {
        let g = build_glyph(&record(&[(HormoneClass::NonHormone, 500.0)], 2));
        assert!(g.right_sectors.iter().all(|s| s.angle_degrees == 0.0));
        assert_eq!(g.left_arcs.len(), 2);
        assert_eq!(g.total_days, 20.0);
        // 0..10 days then 20..30 days over a 30-day span.
        assert!((g.left_arcs[0].end_fraction - 1.0 / 3.0).abs() < 1e-12);
        assert!((g.left_arcs[1].start_fraction - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(g.left_arcs[1].end_fraction, 1.0);
    }
}
