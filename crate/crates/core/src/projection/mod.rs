//! Patient projection: `vec(P)` construction, 2-D layouts (PCA, SMACOF
//! MDS, exact t-SNE) and per-patient glyph descriptors.
//!
//! Every method z-scores the feature columns first, so layouts are invariant
//! to per-column shifts and scales of the input.

mod features;
mod glyph;
mod mds;
mod pca;
mod tsne;

use serde::{Deserialize, Serialize};

pub use features::{
    build_feature_matrix, standardize, vectorize_patient, FeatureMatrix, FeatureSchema, FeatureVector, MatrixError,
    FEATURE_SCHEMA_VERSION,
};
pub use glyph::{build_glyph, GlyphArc, GlyphSector, GlyphSpec};
pub use mds::{smacof, stress, MdsDiagnostics};
pub use pca::{pca, PcaDiagnostics};
pub use tsne::{kl_divergence, tsne, TsneDiagnostics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMethod {
    Pca,
    Mds,
    Tsne,
}

fn default_perplexity() -> f64 {
    30.0
}
fn default_tsne_iters() -> usize {
    500
}
fn default_mds_iters() -> usize {
    300
}
fn default_mds_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub method: ProjectionMethod,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_perplexity")]
    pub tsne_perplexity: f64,
    #[serde(default = "default_tsne_iters")]
    pub tsne_iters: usize,
    #[serde(default = "default_mds_iters")]
    pub mds_max_iters: usize,
    #[serde(default = "default_mds_tol")]
    pub mds_tol: f64,
}

impl ProjectionConfig {
    pub fn new(method: ProjectionMethod, rng_seed: u64) -> Self {
        ProjectionConfig {
            method,
            rng_seed,
            tsne_perplexity: default_perplexity(),
            tsne_iters: default_tsne_iters(),
            mds_max_iters: default_mds_iters(),
            mds_tol: default_mds_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum LayoutDiagnostics {
    Pca(PcaDiagnostics),
    Mds(MdsDiagnostics),
    Tsne(TsneDiagnostics),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub method: ProjectionMethod,
    pub ids: Vec<String>,
    pub coords: Vec<[f64; 2]>,
    pub diagnostics: LayoutDiagnostics,
}

impl Layout {
    pub fn coord_of(&self, id: &str) -> Option<[f64; 2]> {
        self.ids.iter().position(|x| x == id).map(|i| self.coords[i])
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProjectionError {
    #[error("projection needs at least 2 rows, got {0}")]
    DegenerateInput(usize),
    #[error("invalid projection config: {0}")]
    InvalidConfig(String),
    #[error("non-finite value in feature matrix at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
}

pub fn run_projection(matrix: &FeatureMatrix, config: &ProjectionConfig) -> Result<Layout, ProjectionError> {
    let n = matrix.n_rows();
    if n < 2 {
        return Err(ProjectionError::DegenerateInput(n));
    }
    if let Some(k) = matrix.data.iter().position(|x| !x.is_finite()) {
        let p = matrix.n_cols().max(1);
        return Err(ProjectionError::NonFinite { row: k / p, col: k % p });
    }
    if config.tsne_iters == 0 || config.mds_max_iters == 0 {
        return Err(ProjectionError::InvalidConfig("iteration counts must be > 0".into()));
    }
    let z = standardize(matrix);
    let p = matrix.n_cols();
    let (coords, diagnostics) = match config.method {
        ProjectionMethod::Pca => {
            let (c, d) = pca(&z, n, p);
            (c, LayoutDiagnostics::Pca(d))
        }
        ProjectionMethod::Mds => {
            let (c, d) = smacof(&z, n, p, config.mds_max_iters, config.mds_tol, config.rng_seed);
            (c, LayoutDiagnostics::Mds(d))
        }
        ProjectionMethod::Tsne => {
            let (c, d) = tsne(&z, n, p, config.tsne_perplexity, config.tsne_iters, config.rng_seed);
            (c, LayoutDiagnostics::Tsne(d))
        }
    };
    Ok(Layout { method: config.method, ids: matrix.ids.clone(), coords, diagnostics })
}

/// Euclidean distance matrix (n × n) of row-major points.
pub(crate) fn pairwise_distances(x: &[f64], n: usize, dim: usize) -> Vec<f64> {
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let s: f64 = (0..dim).map(|k| (x[i * dim + k] - x[j * dim + k]).powi(2)).sum();
            let v = s.sqrt();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}
