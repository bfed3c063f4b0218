//! Principal components of the element embedding table.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pca {
    /// Projection of each row onto the first two components.
    pub coords: Vec<[f64; 2]>,
    /// Variance along each of the two components.
    pub explained_variance: [f64; 2],
    /// Fraction of the total variance along each component.
    pub explained_ratio: [f64; 2],
    /// Unit loading vectors, largest-magnitude entry positive.
    pub components: [Vec<f64>; 2],
}

/// Mean-centred PCA of `rows` (one embedding vector per element).
pub fn embedding_pca(rows: &[Vec<f64>]) -> Result<Pca> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if d < 2 {
        return Err(Error::Unsupported(format!("PCA needs embeddings of dimension >= 2, got {d}")));
    }
    if n < 3 {
        return Err(Error::InvalidInput(format!("PCA needs at least 3 elements, got {n}")));
    }
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidInput("embedding rows differ in length".into()));
    }
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let mean = x.row_mean();
    let xc = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = xc.transpose() * &xc / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let component = |k: usize| -> Vec<f64> {
        let col = eig.eigenvectors.column(order[k]);
        let big = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        let sign = if big < 0.0 { -1.0 } else { 1.0 };
        col.iter().map(|v| sign * v).collect()
    };
    let components = [component(0), component(1)];
    let coords = (0..n)
        .map(|i| {
            let p = |c: &[f64]| (0..d).map(|j| xc[(i, j)] * c[j]).sum::<f64>();
            [p(&components[0]), p(&components[1])]
        })
        .collect();
    let var = [eig.eigenvalues[order[0]].max(0.0), eig.eigenvalues[order[1]].max(0.0)];
    let ratio = if total > 0.0 { [var[0] / total, var[1] / total] } else { [0.0, 0.0] };
    Ok(Pca { coords, explained_variance: var, explained_ratio: ratio, components })
}
