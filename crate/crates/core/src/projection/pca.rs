use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaDiagnostics {
    /// Share of total variance captured by each of the two components.
    pub explained_variance_ratio: Vec<f64>,
    /// All covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Two unit-length loading vectors. Each is signed so its largest
    /// magnitude entry is positive.
    pub components: Vec<Vec<f64>>,
}

/// Projects standardized rows onto the top two covariance eigenvectors.
pub fn pca(z: &[f64], n: usize, p: usize) -> (Vec<[f64; 2]>, PcaDiagnostics) {
    let x = DMatrix::from_row_slice(n, p, z);
    let cov = (x.transpose() * &x) / ((n - 1) as f64);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();

    let mut components = Vec::with_capacity(2);
    let mut ratios = Vec::with_capacity(2);
    for c in 0..2 {
        if c < p {
            let k = order[c];
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            let pivot = v
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .unwrap_or(0);
            if v[pivot] < 0.0 {
                v.iter_mut().for_each(|e| *e = -*e);
            }
            components.push(v);
            ratios.push(if total > 0.0 { eigenvalues[c] / total } else { 0.0 });
        } else {
            components.push(vec![0.0; p]);
            ratios.push(0.0);
        }
    }

    let coords = (0..n)
        .map(|i| {
            let row = &z[i * p..(i + 1) * p];
            let proj = |v: &[f64]| row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
            [proj(&components[0]), proj(&components[1])]
        })
        .collect();
    (coords, PcaDiagnostics { explained_variance_ratio: ratios, eigenvalues, components })
}
