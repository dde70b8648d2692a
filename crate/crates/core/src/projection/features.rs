use serde::{Deserialize, Serialize};

use crate::ehr::{Corpus, Gender, HormoneClass, PatientRecord, ResultFlag};
use crate::stats;

pub const FEATURE_SCHEMA_VERSION: &str = "vec-p/1";

/// Ordered list of `vec(P)` columns.
///
/// Demographics, admission totals, per-class hormone exposure, per-lab mean
/// value / abnormal fraction / missingness indicator, and the abnormal exam
/// fraction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub version: String,
    pub lab_names: Vec<String>,
    pub names: Vec<String>,
}

impl FeatureSchema {
    pub fn new<S: AsRef<str>>(lab_names: &[S]) -> Self {
        let mut names: Vec<String> = ["age", "gender_female", "gender_male", "gender_other", "total_stay_days", "admission_count"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for class in HormoneClass::HORMONES {
            names.push(format!("cum_dose_{}", class.short_tag()));
        }
        for class in HormoneClass::HORMONES {
            names.push(format!("orders_{}", class.short_tag()));
        }
        for lab in lab_names {
            let lab = lab.as_ref();
            names.push(format!("lab_{lab}_mean"));
            names.push(format!("lab_{lab}_abnormal_frac"));
            names.push(format!("lab_{lab}_missing"));
        }
        names.push("exam_abnormal_frac".into());
        FeatureSchema {
            version: FEATURE_SCHEMA_VERSION.into(),
            lab_names: lab_names.iter().map(|s| s.as_ref().to_string()).collect(),
            names,
        }
    }

    /// Schema over the canonical lab panel.
    pub fn standard() -> Self {
        FeatureSchema::new(&crate::synth::CANONICAL_LABS)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index_of(name).is_some()
    }
}

impl Default for FeatureSchema {
    fn default() -> Self {
        FeatureSchema::standard()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub patient_id: String,
    /// Lab mean and abnormal-fraction columns are NaN when the patient has no
    /// result for that lab; [`build_feature_matrix`] imputes them.
    pub values: Vec<f64>,
}

pub fn vectorize_patient(record: &PatientRecord, schema: &FeatureSchema) -> FeatureVector {
    let mut v = Vec::with_capacity(schema.len());
    v.push(f64::from(record.age));
    for g in Gender::ALL {
        v.push(if record.gender == g { 1.0 } else { 0.0 });
    }
    v.push(record.total_stay_days());
    v.push(record.admissions.len() as f64);
    v.extend(record.cumulative_dose_by_class());
    let mut counts = [0.0; 3];
    for o in record.orders() {
        if let Some(i) = o.hormone_class.hormone_index() {
            counts[i] += 1.0;
        }
    }
    v.extend(counts);

    for lab in &schema.lab_names {
        let results: Vec<_> = record
            .admissions
            .iter()
            .flat_map(|a| a.lab_tests.iter())
            .filter(|l| &l.test_name == lab)
            .collect();
        if results.is_empty() {
            v.extend([f64::NAN, f64::NAN, 1.0]);
        } else {
            let n = results.len() as f64;
            v.push(results.iter().map(|l| l.value).sum::<f64>() / n);
            v.push(results.iter().filter(|l| l.is_abnormal()).count() as f64 / n);
            v.push(0.0);
        }
    }

    let (abnormal, known) = record
        .admissions
        .iter()
        .flat_map(|a| a.examinations.iter())
        .fold((0usize, 0usize), |(ab, kn), e| match e.result_flag {
            ResultFlag::Abnormal => (ab + 1, kn + 1),
            ResultFlag::Normal => (ab, kn + 1),
            ResultFlag::Unknown => (ab, kn),
        });
    v.push(if known == 0 { 0.0 } else { abnormal as f64 / known as f64 });

    debug_assert_eq!(v.len(), schema.len());
    FeatureVector { patient_id: record.patient_id.clone(), values: v }
}

/// Row-major patient × feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MatrixError {
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("unknown patient {0:?}")]
    UnknownPatient(String),
    #[error("row width {got} does not match {expected} columns")]
    Shape { expected: usize, got: usize },
}

impl FeatureMatrix {
    pub fn from_rows(ids: Vec<String>, feature_names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self, MatrixError> {
        let p = feature_names.len();
        let mut data = Vec::with_capacity(rows.len() * p);
        for r in rows {
            if r.len() != p {
                return Err(MatrixError::Shape { expected: p, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(FeatureMatrix { ids, feature_names, data })
    }

    pub fn n_rows(&self) -> usize {
        self.ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.feature_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n_cols().max(1)).take(self.n_rows())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.get(i, j)).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn row_index(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn select_columns<S: AsRef<str>>(&self, names: &[S]) -> Result<FeatureMatrix, MatrixError> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.column_index(n.as_ref()).ok_or_else(|| MatrixError::UnknownFeature(n.as_ref().into())))
            .collect::<Result<_, _>>()?;
        let mut data = Vec::with_capacity(self.n_rows() * idx.len());
        for r in self.rows() {
            data.extend(idx.iter().map(|&j| r[j]));
        }
        Ok(FeatureMatrix {
            ids: self.ids.clone(),
            feature_names: names.iter().map(|n| n.as_ref().to_string()).collect(),
            data,
        })
    }

    pub fn select_rows<S: AsRef<str>>(&self, ids: &[S]) -> Result<FeatureMatrix, MatrixError> {
        let mut data = Vec::with_capacity(ids.len() * self.n_cols());
        for id in ids {
            let i = self.row_index(id.as_ref()).ok_or_else(|| MatrixError::UnknownPatient(id.as_ref().into()))?;
            data.extend_from_slice(self.row(i));
        }
        Ok(FeatureMatrix {
            ids: ids.iter().map(|s| s.as_ref().to_string()).collect(),
            feature_names: self.feature_names.clone(),
            data,
        })
    }

    pub fn select_row_indices(&self, rows: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols());
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            data,
        }
    }
}

/// Vectorizes `ids` and imputes missing lab cells with the median over these
/// same patients (0 when nobody has the lab). The `lab_*_missing` columns keep
/// the missingness visible.
pub fn build_feature_matrix<S: AsRef<str>>(corpus: &Corpus, ids: &[S], schema: &FeatureSchema) -> Result<FeatureMatrix, MatrixError> {
    let vectors: Vec<FeatureVector> = ids
        .iter()
        .map(|id| {
            corpus
                .get(id.as_ref())
                .map(|r| vectorize_patient(r, schema))
                .ok_or_else(|| MatrixError::UnknownPatient(id.as_ref().into()))
        })
        .collect::<Result<_, _>>()?;
    let p = schema.len();
    let mut data: Vec<f64> = vectors.iter().flat_map(|v| v.values.iter().copied()).collect();
    for j in 0..p {
        let observed: Vec<f64> = (0..vectors.len()).map(|i| data[i * p + j]).filter(|x| !x.is_nan()).collect();
        if observed.len() == vectors.len() {
            continue;
        }
        let fill = stats::median(&observed).unwrap_or(0.0);
        for i in 0..vectors.len() {
            if data[i * p + j].is_nan() {
                data[i * p + j] = fill;
            }
        }
    }
    Ok(FeatureMatrix {
        ids: vectors.into_iter().map(|v| v.patient_id).collect(),
        feature_names: schema.names.clone(),
        data,
    })
}

/// Column z-scores with population standard deviation; constant columns map
/// to 0.
pub fn standardize(m: &FeatureMatrix) -> Vec<f64> {
    let (n, p) = (m.n_rows(), m.n_cols());
    let mut out = m.data.clone();
    for j in 0..p {
        let col = m.column(j);
        let mu = stats::mean(&col);
        let sd = stats::variance(&col).sqrt();
        for i in 0..n {
            out[i * p + j] = if sd > 0.0 { (col[i] - mu) / sd } else { 0.0 };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ehr::*;

    fn record() -> PatientRecord {
        let t0 = Timestamp::parse("2020-01-01T00:00:00Z").unwrap();
        let adm = |start: i64, days: i64| AdmissionEpisode {
            admit_time: t0.plus_days(start),
            discharge_time: t0.plus_days(start + days),
            diagnoses: vec![],
            lab_tests: vec![],
            examinations: vec![],
            medication_orders: vec![],
            medical_notes: vec![],
        };
        PatientRecord {
            patient_id: "p".into(),
            age: 30,
            gender: Gender::Other,
            admissions: vec![adm(0, 5), adm(40, 7)],
            outcome: OutcomeLabel { has_sequela: false, onset_time: None },
        }
    }

    #[test]
    fn schema_layout() {
        let s = FeatureSchema::standard();
        assert_eq!(s.len(), 22);
        assert_eq!(s.names[0], "age");
        assert_eq!(s.index_of("cum_dose_long"), Some(8));
        assert_eq!(s.names.last().unwrap(), "exam_abnormal_frac");
    }

    #[test]
    fn stay_sums_and_zero_hormones() {
        let s = FeatureSchema::standard();
        let v = vectorize_patient(&record(), &s);
        assert_eq!(v.values[s.index_of("total_stay_days").unwrap()], 12.0);
        assert_eq!(v.values[s.index_of("admission_count").unwrap()], 2.0);
        for name in ["cum_dose_short", "cum_dose_medium", "cum_dose_long", "orders_short", "orders_medium", "orders_long"] {
            assert_eq!(v.values[s.index_of(name).unwrap()], 0.0, "{name}");
        }
        assert_eq!(v.values[s.index_of("gender_other").unwrap()], 1.0);
        assert!(v.values[s.index_of("lab_crp_mean").unwrap()].is_nan());
        assert_eq!(v.values[s.index_of("lab_crp_missing").unwrap()], 1.0);
    }

    #[test]
    fn standardize_constant_column_is_zero() {
        let m = FeatureMatrix::from_rows(
            vec!["a".into(), "b".into()],
            vec!["x".into(), "c".into()],
            &[vec![1.0, 5.0], vec![3.0, 5.0]],
        )
        .unwrap();
        assert_eq!(standardize(&m), vec![-1.0, 0.0, 1.0, 0.0]);
    }
}
