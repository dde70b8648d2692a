use std::collections::BTreeSet;

use cohortloop::cohort::CohortSelection;
use cohortloop::sampling::psm::greedy_match;
use cohortloop::sampling::{extract_positives, sample_negatives, SamplingRequest, SamplingStrategy, StrategyParams};
use cohortloop::synth::{generate_corpus, RiskSpec};
use cohortloop::timeline::{build_timeline, expand_event, LaneKind};
use cohortloop::{Corpus, FeatureSchema, Timestamp};
use proptest::prelude::*;

fn corpus(seed: u64, n: usize) -> Corpus {
    let spec = RiskSpec::null(seed, n, 0.1)
        .with_target_prevalence(0.2)
        .with_coefficient("cum_dose_long", 2.0)
        .with_coefficient("age", 1.0);
    generate_corpus(&spec).unwrap().0
}

fn strategy() -> impl Strategy<Value = SamplingStrategy> {
    prop_oneof![Just(SamplingStrategy::Random), Just(SamplingStrategy::HardNegative), Just(SamplingStrategy::Psm)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sampling_is_disjoint_seeded_and_valid(seed in 0u64..1000, rng_seed in any::<u64>(), strategy in strategy(), k in prop::option::of(1usize..40)) {
        let c = corpus(seed, 200);
        let schema = FeatureSchema::standard();
        let sel = CohortSelection::all(&c, Timestamp(0));
        let pos = extract_positives(&c, &sel);
        let request = SamplingRequest { strategy, k, rng_seed, feature_names: schema.names.clone() };
        let Ok(a) = sample_negatives(&c, &schema, &sel, &pos, &request) else {
            return Ok(());
        };
        let b = sample_negatives(&c, &schema, &sel, &pos, &request).unwrap();
        prop_assert_eq!(&a, &b);

        let ss = &a.sample_set;
        let p: BTreeSet<_> = ss.positives.iter().collect();
        prop_assert!(ss.negatives.iter().all(|n| !p.contains(n)));
        prop_assert!(ss.validate(&c, &schema).is_ok());

        if let Some(scores) = &a.negative_scores {
            let (sel, rej): (Vec<_>, Vec<_>) = scores.iter().partition(|s| s.selected);
            if !rej.is_empty() {
                let min_sel = sel.iter().map(|s| s.score).fold(f64::INFINITY, f64::min);
                let max_rej = rej.iter().map(|s| s.score).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(min_sel >= max_rej);
                let mean = |v: &[&cohortloop::sampling::ScoredNegative]| v.iter().map(|s| s.score).sum::<f64>() / v.len() as f64;
                prop_assert!(mean(&sel) >= mean(&rej));
            }
        }
        if let StrategyParams::Psm { caliper, pairs, .. } = &ss.strategy_params {
            prop_assert!(pairs.iter().all(|pair| pair.logit_distance <= *caliper));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn greedy_matching_is_one_to_one_within_caliper(
        pos in prop::collection::vec(-5.0f64..5.0, 0..30),
        neg in prop::collection::vec(-5.0f64..5.0, 0..60),
        caliper in 0.0f64..2.0,
        max_pairs in 0usize..40,
    ) {
        let label = |prefix: &str, v: &[f64]| v.iter().enumerate().map(|(i, &x)| (format!("{prefix}{i:02}"), x)).collect::<Vec<_>>();
        let (p, n) = (label("p", &pos), label("n", &neg));
        let m = greedy_match(&p, &n, caliper, max_pairs);
        prop_assert!(m.pairs.len() <= max_pairs.min(pos.len()).min(neg.len()));
        let used_p: BTreeSet<_> = m.pairs.iter().map(|x| &x.positive).collect();
        let used_n: BTreeSet<_> = m.pairs.iter().map(|x| &x.negative).collect();
        prop_assert_eq!(used_p.len(), m.pairs.len());
        prop_assert_eq!(used_n.len(), m.pairs.len());
        for pair in &m.pairs {
            let a = p.iter().find(|x| x.0 == pair.positive).unwrap().1;
            let b = n.iter().find(|x| x.0 == pair.negative).unwrap().1;
            prop_assert_eq!(pair.logit_distance, (a - b).abs());
            prop_assert!(pair.logit_distance <= caliper);
        }
    }

    #[test]
    fn timeline_keeps_every_event(seed in any::<u64>()) {
        let c = corpus(seed, 4);
        for record in c.patients.values() {
            let doc = build_timeline(record).unwrap();
            prop_assert_eq!(&doc, &build_timeline(record).unwrap());
            let count = |f: fn(&cohortloop::ehr::AdmissionEpisode) -> usize| record.admissions.iter().map(f).sum::<usize>();
            prop_assert_eq!(doc.lane(LaneKind::MedicationOrders).events.len(), count(|a| a.medication_orders.len()));
            prop_assert_eq!(doc.lane(LaneKind::LaboratoryTests).events.len(), count(|a| a.lab_tests.len()));
            prop_assert_eq!(doc.lane(LaneKind::ChecksInformation).events.len(), count(|a| a.examinations.len()));
            let before = doc.clone();
            for kind in LaneKind::ORDER {
                for i in 0..doc.lane(kind).events.len() {
                    expand_event(&doc, record, kind, i).unwrap();
                }
            }
            prop_assert_eq!(doc, before);
        }
    }
}
