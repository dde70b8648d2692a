//! Cohort filters and the three linked channels (demographics, disease,
//! drug) with the Sankey links that join them.
//!
//! Patients whose admissions span several disease clusters or hormone
//! classes are counted once in each, so cluster counts and link weights can
//! exceed the selection size.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ehr::{Corpus, Gender, HormoneClass, PatientRecord, Timestamp};
use crate::stats;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age_range: Option<[u32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genders: Option<BTreeSet<Gender>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hormone_classes: Option<BTreeSet<HormoneClass>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primary_disease_clusters: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<bool>,
}

impl CohortFilter {
    pub fn validate(&self) -> Result<(), FilterError> {
        if let Some([lo, hi]) = self.age_range {
            if lo > hi {
                return Err(FilterError::InvertedAgeRange { lo, hi });
            }
        }
        Ok(())
    }

    /// Conjunction of every present predicate.
    pub fn matches(&self, p: &PatientRecord) -> bool {
        if let Some([lo, hi]) = self.age_range {
            if p.age < lo || p.age > hi {
                return false;
            }
        }
        if let Some(genders) = &self.genders {
            if !genders.contains(&p.gender) {
                return false;
            }
        }
        if let Some(classes) = &self.hormone_classes {
            if !p.orders().any(|o| classes.contains(&o.hormone_class)) {
                return false;
            }
        }
        if let Some(clusters) = &self.primary_disease_clusters {
            if p.primary_clusters().is_disjoint(clusters) {
                return false;
            }
        }
        if let Some(outcome) = self.outcome {
            if p.outcome.has_sequela != outcome {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FilterError {
    #[error("age_range lower bound {lo} exceeds upper bound {hi}")]
    InvertedAgeRange { lo: u32, hi: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSelection {
    pub filter: CohortFilter,
    /// Sorted, distinct.
    pub patient_ids: Vec<String>,
    pub created_at: Timestamp,
}

impl CohortSelection {
    /// Selection of every patient in the corpus.
    pub fn all(corpus: &Corpus, created_at: Timestamp) -> Self {
        CohortSelection {
            filter: CohortFilter::default(),
            patient_ids: corpus.ids().cloned().collect(),
            created_at,
        }
    }

    pub fn len(&self) -> usize {
        self.patient_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patient_ids.is_empty()
    }

    pub fn records<'a>(&'a self, corpus: &'a Corpus) -> impl Iterator<Item = &'a PatientRecord> + 'a {
        self.patient_ids.iter().filter_map(move |id| corpus.get(id))
    }
}

pub fn apply_filter(corpus: &Corpus, filter: &CohortFilter, created_at: Timestamp) -> Result<CohortSelection, FilterError> {
    filter.validate()?;
    // BTreeMap iteration keeps ids sorted.
    let patient_ids = corpus
        .patients
        .values()
        .filter(|p| filter.matches(p))
        .map(|p| p.patient_id.clone())
        .collect();
    Ok(CohortSelection { filter: filter.clone(), patient_ids, created_at })
}

/// One patient's polyline across the parallel-coordinate axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicLine {
    pub patient_id: String,
    pub age: f64,
    pub gender: Gender,
    pub total_stay_days: f64,
    pub cumulative_dose_mg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMedians {
    pub age: Option<f64>,
    pub total_stay_days: Option<f64>,
    pub cumulative_dose_mg: Option<f64>,
    pub gender_counts: BTreeMap<Gender, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicGroup {
    pub has_sequela: bool,
    pub size: usize,
    pub lines: Vec<DemographicLine>,
    pub medians: GroupMedians,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicsChannel {
    pub axes: Vec<String>,
    pub with_sequela: DemographicGroup,
    pub without_sequela: DemographicGroup,
}

pub const DEMOGRAPHIC_AXES: [&str; 4] = ["age", "gender", "total_stay_days", "cumulative_dose_mg"];

pub fn build_demographics_channel(corpus: &Corpus, selection: &CohortSelection) -> DemographicsChannel {
    let (pos, neg): (Vec<&PatientRecord>, Vec<&PatientRecord>) =
        selection.records(corpus).partition(|p| p.outcome.has_sequela);
    DemographicsChannel {
        axes: DEMOGRAPHIC_AXES.iter().map(|s| s.to_string()).collect(),
        with_sequela: demographic_group(true, &pos),
        without_sequela: demographic_group(false, &neg),
    }
}

fn demographic_group(has_sequela: bool, records: &[&PatientRecord]) -> DemographicGroup {
    let lines: Vec<DemographicLine> = records
        .iter()
        .map(|p| DemographicLine {
            patient_id: p.patient_id.clone(),
            age: f64::from(p.age),
            gender: p.gender,
            total_stay_days: p.total_stay_days(),
            cumulative_dose_mg: p.cumulative_hormone_dose(),
        })
        .collect();
    let col = |f: fn(&DemographicLine) -> f64| stats::median(&lines.iter().map(f).collect::<Vec<_>>());
    let mut gender_counts: BTreeMap<Gender, usize> = Gender::ALL.iter().map(|&g| (g, 0)).collect();
    for l in &lines {
        *gender_counts.entry(l.gender).or_default() += 1;
    }
    DemographicGroup {
        has_sequela,
        size: lines.len(),
        medians: GroupMedians {
            age: col(|l| l.age),
            total_stay_days: col(|l| l.total_stay_days),
            cumulative_dose_mg: col(|l| l.cumulative_dose_mg),
            gender_counts,
        },
        lines,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiseaseCluster {
    pub cluster_id: String,
    pub label: String,
    pub patient_count: usize,
    pub top_terms: Vec<String>,
}

/// Primary diagnoses grouped by ICD three-character category, largest
/// cluster first.
pub fn build_disease_channel(corpus: &Corpus, selection: &CohortSelection) -> Vec<DiseaseCluster> {
    let mut patients: BTreeMap<String, BTreeSet<&str>> = BTreeMap::new();
    let mut terms: BTreeMap<String, BTreeMap<&str, usize>> = BTreeMap::new();
    for p in selection.records(corpus) {
        for d in p.admissions.iter().filter_map(|a| a.primary_diagnosis()) {
            let key = d.code_prefix().to_string();
            patients.entry(key.clone()).or_default().insert(&p.patient_id);
            *terms.entry(key).or_default().entry(&d.text).or_default() += 1;
        }
    }
    let mut clusters: Vec<DiseaseCluster> = patients
        .into_iter()
        .map(|(cluster_id, members)| {
            let mut ranked: Vec<(&str, usize)> = terms[&cluster_id].iter().map(|(t, c)| (*t, *c)).collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
            let top_terms: Vec<String> = ranked.iter().take(5).map(|(t, _)| t.to_string()).collect();
            DiseaseCluster {
                label: top_terms.first().cloned().unwrap_or_else(|| cluster_id.clone()),
                cluster_id,
                patient_count: members.len(),
                top_terms,
            }
        })
        .collect();
    clusters.sort_by(|a, b| b.patient_count.cmp(&a.patient_count).then(a.cluster_id.cmp(&b.cluster_id)));
    clusters
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrugBar {
    pub drug_name: String,
    pub patient_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrugClassColumn {
    pub class: HormoneClass,
    /// Distinct patients with at least one order in this class.
    pub patient_count: usize,
    pub drugs: Vec<DrugBar>,
}

/// Always three columns, short/medium/long, even when empty.
pub fn build_drug_channel(corpus: &Corpus, selection: &CohortSelection) -> Vec<DrugClassColumn> {
    let mut by_class: [BTreeMap<&str, BTreeSet<&str>>; 3] = Default::default();
    let mut class_patients: [BTreeSet<&str>; 3] = Default::default();
    for p in selection.records(corpus) {
        for o in p.orders() {
            if let Some(i) = o.hormone_class.hormone_index() {
                by_class[i].entry(&o.drug_name).or_default().insert(&p.patient_id);
                class_patients[i].insert(&p.patient_id);
            }
        }
    }
    HormoneClass::HORMONES
        .iter()
        .enumerate()
        .map(|(i, &class)| DrugClassColumn {
            class,
            patient_count: class_patients[i].len(),
            drugs: by_class[i]
                .iter()
                .map(|(name, ids)| DrugBar { drug_name: name.to_string(), patient_count: ids.len() })
                .collect(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "channel", content = "key", rename_all = "snake_case")]
pub enum SankeyNode {
    /// Outcome group of the demographics channel: `with_sequela` / `without_sequela`.
    Demographic(String),
    Disease(String),
    Drug(HormoneClass),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SankeyLink {
    pub source: SankeyNode,
    pub target: SankeyNode,
    pub patient_count: usize,
}

pub fn demographic_bin(p: &PatientRecord) -> &'static str {
    if p.outcome.has_sequela {
        "with_sequela"
    } else {
        "without_sequela"
    }
}

/// Links demographic bin → disease cluster and disease cluster → hormone
/// class. Each weight counts distinct patients holding both endpoints.
pub fn build_sankey_links(corpus: &Corpus, selection: &CohortSelection) -> Vec<SankeyLink> {
    let mut links: BTreeMap<(SankeyNode, SankeyNode), BTreeSet<&str>> = BTreeMap::new();
    for p in selection.records(corpus) {
        let clusters = p.primary_clusters();
        let classes: BTreeSet<HormoneClass> =
            p.orders().map(|o| o.hormone_class).filter(|c| c.is_hormone()).collect();
        for cluster in &clusters {
            links
                .entry((SankeyNode::Demographic(demographic_bin(p).into()), SankeyNode::Disease(cluster.clone())))
                .or_default()
                .insert(&p.patient_id);
            for &class in &classes {
                links
                    .entry((SankeyNode::Disease(cluster.clone()), SankeyNode::Drug(class)))
                    .or_default()
                    .insert(&p.patient_id);
            }
        }
    }
    links
        .into_iter()
        .map(|((source, target), ids)| SankeyLink { source, target, patient_count: ids.len() })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSummary {
    pub selection_size: usize,
    pub demographics: DemographicsChannel,
    pub disease_clusters: Vec<DiseaseCluster>,
    pub drug_channel: Vec<DrugClassColumn>,
    pub sankey_links: Vec<SankeyLink>,
}

pub fn channel_summary(corpus: &Corpus, selection: &CohortSelection) -> ChannelSummary {
    ChannelSummary {
        selection_size: selection.len(),
        demographics: build_demographics_channel(corpus, selection),
        disease_clusters: build_disease_channel(corpus, selection),
        drug_channel: build_drug_channel(corpus, selection),
        sankey_links: build_sankey_links(corpus, selection),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ehr::*;

    fn patient(id: &str, codes: &[&str], classes: &[HormoneClass], positive: bool) -> PatientRecord {
        let t0 = Timestamp::parse("2020-01-01T00:00:00Z").unwrap();
        let admissions = codes
            .iter()
            .enumerate()
            .map(|(i, code)| {
                let admit = t0.plus_days(100 * i as i64);
                AdmissionEpisode {
                    admit_time: admit,
                    discharge_time: admit.plus_days(5),
                    diagnoses: vec![Diagnosis { code: code.to_string(), text: format!("dx {code}"), is_primary: true }],
                    lab_tests: vec![],
                    examinations: vec![],
                    medication_orders: if i == 0 {
                        classes
                            .iter()
                            .map(|&c| MedicationOrder {
                                drug_name: format!("drug_{}", c.short_tag()),
                                hormone_class: c,
                                dose: 10.0,
                                ordered_dose: 10.0,
                                route: "po".into(),
                                order_time: admit.plus_days(1),
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
            patient_id: id.into(),
            age: 40,
            gender: Gender::Female,
            admissions,
            outcome: OutcomeLabel { has_sequela: positive, onset_time: positive.then(|| t0.plus_days(500)) },
        }
    }

    fn corpus(ps: Vec<PatientRecord>) -> Corpus {
        Corpus {
            schema_version: "1.0".into(),
            drug_dictionary: DrugDictionary::new(),
            patients: ps.into_iter().map(|p| (p.patient_id.clone(), p)).collect(),
        }
    }

    #[test]
    fn inverted_age_range_is_an_error_empty_range_is_not() {
        let c = corpus(vec![patient("a", &["M32.1"], &[], false)]);
        let bad = CohortFilter { age_range: Some([60, 20]), ..Default::default() };
        assert!(apply_filter(&c, &bad, Timestamp(0)).is_err());
        let none = CohortFilter { age_range: Some([200, 300]), ..Default::default() };
        assert!(apply_filter(&c, &none, Timestamp(0)).unwrap().is_empty());
    }

    #[test]
    fn single_patient_single_link() {
        let c = corpus(vec![patient("a", &["M32.1"], &[HormoneClass::ShortActing], true)]);
        let sel = CohortSelection::all(&c, Timestamp(0));
        let links = build_sankey_links(&c, &sel);
        let drug_links: Vec<_> = links.iter().filter(|l| matches!(l.target, SankeyNode::Drug(_))).collect();
        assert_eq!(drug_links.len(), 1);
        assert_eq!(drug_links[0].patient_count, 1);
    }

    #[test]
    fn two_classes_give_two_links() {
        let c = corpus(vec![patient("a", &["M32.1"], &[HormoneClass::ShortActing, HormoneClass::LongActing], false)]);
        let sel = CohortSelection::all(&c, Timestamp(0));
        let from_a: Vec<_> = build_sankey_links(&c, &sel)
            .into_iter()
            .filter(|l| l.source == SankeyNode::Disease("M32".into()))
            .collect();
        assert_eq!(from_a.len(), 2);
        assert!(from_a.iter().all(|l| l.patient_count == 1));
    }

    #[test]
    fn multi_cluster_patient_counted_in_each() {
        let c = corpus(vec![patient("a", &["M32.1", "J45.0"], &[], false), patient("b", &["M32.9"], &[], false)]);
        let sel = CohortSelection::all(&c, Timestamp(0));
        let clusters = build_disease_channel(&c, &sel);
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0].cluster_id, "M32");
        assert_eq!(clusters[0].patient_count, 2);
        assert_eq!(clusters[1].patient_count, 1);
    }

    #[test]
    fn drug_channel_always_has_three_classes() {
        let c = corpus(vec![patient("a", &["M32.1"], &[HormoneClass::ShortActing], false)]);
        let sel = CohortSelection::all(&c, Timestamp(0));
        let ch = build_drug_channel(&c, &sel);
        assert_eq!(ch.iter().map(|c| c.class).collect::<Vec<_>>(), HormoneClass::HORMONES.to_vec());
        assert_eq!(ch[0].patient_count, 1);
        assert!(ch[1].drugs.is_empty() && ch[2].drugs.is_empty());

        let none = corpus(vec![patient("b", &["M32.1"], &[], false)]);
        let sel = CohortSelection::all(&none, Timestamp(0));
        assert!(build_drug_channel(&none, &sel).iter().all(|c| c.patient_count == 0 && c.drugs.is_empty()));
    }

    #[test]
    fn single_positive_demographics() {
        let c = corpus(vec![patient("a", &["M32.1"], &[HormoneClass::MediumActing], true)]);
        let sel = CohortSelection::all(&c, Timestamp(0));
        let d = build_demographics_channel(&c, &sel);
        assert_eq!(d.with_sequela.size, 1);
        assert_eq!(d.without_sequela.size, 0);
        assert_eq!(d.with_sequela.lines[0].total_stay_days, 5.0);
        assert_eq!(d.without_sequela.medians.age, None);
    }
}
