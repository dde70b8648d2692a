use std::collections::BTreeSet;

use cohortloop::cohort::{apply_filter, channel_summary, CohortFilter, CohortSelection};
use cohortloop::synth::{disease_prefixes, generate_corpus, RiskSpec, RISK_FEATURES};
use cohortloop::{corpus_summary, parse_corpus, serialize_corpus, validate_record, Corpus, Gender, HormoneClass, Timestamp};
use proptest::prelude::*;
use proptest::sample::subsequence;
use serde_json::Value;

fn corpus(seed: u64, n: usize) -> Corpus {
    let spec = RiskSpec::null(seed, n, 0.2).with_coefficient("cum_dose_long", 1.0);
    generate_corpus(&spec).unwrap().0
}

fn arb_filter() -> impl Strategy<Value = CohortFilter> {
    let ages = prop::option::of((0u32..100, 0u32..60).prop_map(|(lo, w)| [lo, lo + w]));
    let genders = prop::option::of(subsequence(Gender::ALL.to_vec(), 0..=3).prop_map(BTreeSet::from_iter));
    let classes = prop::option::of(
        subsequence(vec![HormoneClass::ShortActing, HormoneClass::MediumActing, HormoneClass::LongActing, HormoneClass::NonHormone], 0..=4)
            .prop_map(BTreeSet::from_iter),
    );
    let clusters = prop::option::of(
        subsequence(disease_prefixes().into_iter().map(String::from).chain(["Z99".to_string()]).collect::<Vec<_>>(), 0..=4)
            .prop_map(BTreeSet::from_iter),
    );
    let outcome = prop::option::of(any::<bool>());
    (ages, genders, classes, clusters, outcome).prop_map(|(age_range, genders, hormone_classes, primary_disease_clusters, outcome)| {
        CohortFilter { age_range, genders, hormone_classes, primary_disease_clusters, outcome }
    })
}

/// Sub-corpus holding only the selected patients.
fn induced(corpus: &Corpus, selection: &CohortSelection) -> Corpus {
    let mut sub = corpus.clone();
    sub.patients.retain(|id, _| selection.patient_ids.binary_search(id).is_ok());
    sub
}

const T0: Timestamp = Timestamp(0);

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_corpora_validate_and_round_trip(seed in any::<u64>(), n in 1usize..60) {
        let c = corpus(seed, n);
        for record in c.patients.values() {
            prop_assert_eq!(validate_record(record, &c.drug_dictionary), vec![]);
        }
        let bytes = serialize_corpus(&c);
        let parsed = parse_corpus(&bytes).unwrap();
        prop_assert_eq!(&parsed, &c);
        prop_assert_eq!(serialize_corpus(&parsed), bytes);
    }

    #[test]
    fn summary_ignores_patient_order(seed in any::<u64>(), n in 2usize..40, shuffle_seed in any::<u64>()) {
        let c = corpus(seed, n);
        let mut doc: Value = serde_json::from_slice(&serialize_corpus(&c)).unwrap();
        let patients = doc["patients"].as_array_mut().unwrap();
        let mut keyed: Vec<(u64, Value)> = patients
            .drain(..)
            .enumerate()
            .map(|(i, p)| (cohortloop::seed::sub_seed(shuffle_seed, i as u64), p))
            .collect();
        keyed.sort_by_key(|(k, _)| *k);
        patients.extend(keyed.into_iter().map(|(_, p)| p));
        let reordered = parse_corpus(&serde_json::to_vec(&doc).unwrap()).unwrap();
        prop_assert_eq!(corpus_summary(&reordered), corpus_summary(&c));
    }

    #[test]
    fn raising_a_coefficient_never_lowers_prevalence(seed in any::<u64>(), feature in 0usize..RISK_FEATURES.len(), lo in 0.0f64..3.0, step in 0.0f64..3.0) {
        let positives = |coef: f64| {
            let spec = RiskSpec::null(seed, 80, 0.1).with_coefficient(RISK_FEATURES[feature], coef);
            let (c, _) = generate_corpus(&spec).unwrap();
            c.patients.values().filter(|p| p.outcome.has_sequela).count()
        };
        prop_assert!(positives(lo + step) >= positives(lo));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filter_is_idempotent(seed in 0u64..4, filter in arb_filter()) {
        let c = corpus(seed, 150);
        let first = apply_filter(&c, &filter, T0).unwrap();
        let again = apply_filter(&induced(&c, &first), &filter, T0).unwrap();
        prop_assert_eq!(again.patient_ids, first.patient_ids);
    }

    #[test]
    fn adding_a_predicate_never_enlarges(seed in 0u64..4, base in arb_filter(), extra in arb_filter(), which in 0usize..5) {
        let c = corpus(seed, 150);
        let mut narrower = base.clone();
        match which {
            0 if base.age_range.is_none() => narrower.age_range = extra.age_range,
            1 if base.genders.is_none() => narrower.genders = extra.genders,
            2 if base.hormone_classes.is_none() => narrower.hormone_classes = extra.hormone_classes,
            3 if base.primary_disease_clusters.is_none() => narrower.primary_disease_clusters = extra.primary_disease_clusters,
            4 if base.outcome.is_none() => narrower.outcome = extra.outcome,
            _ => {}
        }
        let wide: BTreeSet<String> = apply_filter(&c, &base, T0).unwrap().patient_ids.into_iter().collect();
        let narrow: BTreeSet<String> = apply_filter(&c, &narrower, T0).unwrap().patient_ids.into_iter().collect();
        prop_assert!(narrow.is_subset(&wide));
    }

    #[test]
    fn channels_are_pure(seed in 0u64..4, filter in arb_filter()) {
        let c = corpus(seed, 150);
        let sel = apply_filter(&c, &filter, T0).unwrap();
        let a = serde_json::to_vec(&channel_summary(&c, &sel)).unwrap();
        let b = serde_json::to_vec(&channel_summary(&c, &sel)).unwrap();
        prop_assert_eq!(a, b);
    }
}

/// Applies one of several edits to the first patient, some of which break a
/// record rule.
fn mutate(record: &mut cohortloop::PatientRecord, kind: usize) {
    let adm = &mut record.admissions[0];
    match kind {
        0 => std::mem::swap(&mut adm.admit_time, &mut adm.discharge_time),
        1 => {
            if let Some(order) = adm.medication_orders.first_mut() {
                order.drug_name = "not_a_drug".into();
            }
        }
        2 => {
            if let Some(lab) = adm.lab_tests.first_mut() {
                lab.sample_time = adm.discharge_time.plus_days(1);
            }
        }
        3 => adm.diagnoses.iter_mut().for_each(|d| d.is_primary = true),
        4 => {
            record.outcome.has_sequela = false;
            record.outcome.onset_time = Some(Timestamp(0));
        }
        5 => {
            if let Some(order) = adm.medication_orders.first_mut() {
                order.ordered_dose = -order.ordered_dose - 1.0;
                order.dose = -order.dose - 1.0;
            }
        }
        6 => adm.discharge_time = adm.discharge_time.plus_days(2),
        _ => {}
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn validator_agrees_with_parser(seed in any::<u64>(), kind in 0usize..8) {
        let mut c = corpus(seed, 3);
        let id = c.patients.keys().next().unwrap().clone();
        mutate(c.patients.get_mut(&id).unwrap(), kind);
        let violations = validate_record(&c.patients[&id], &c.drug_dictionary);
        let parsed = parse_corpus(&serialize_corpus(&c));
        prop_assert_eq!(violations.is_empty(), parsed.is_ok(), "kind {} violations {:?} parse {:?}", kind, violations, parsed.err());
    }
}
