use nalgebra::{DMatrix, SymmetricEigen};

use crate::matrix::{Configuration, DissimilarityMatrix};

/// Double-centered `-1/2 * delta^2`, missing entries mean-imputed.
fn double_centered(delta: &DissimilarityMatrix) -> DMatrix<f64> {
    let n = delta.len();
    let fill = delta.mean_off_diagonal();
    let mut b = DMatrix::from_fn(n, n, |i, j| {
        let v = delta.get(i, j).unwrap_or(fill);
        -0.5 * v * v
    });
    if n == 0 {
        return b;
    }
    let row_means: Vec<f64> = (0..n).map(|i| b.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] += grand - row_means[i] - row_means[j];
        }
    }
    b
}

/// Eigenpairs sorted by descending eigenvalue; ties keep solver order.
fn sorted_eigen(delta: &DissimilarityMatrix) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(double_centered(delta));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = eig.eigenvectors.select_columns(&order);
    (values, vectors)
}

/// Eigenvalues of the double-centered squared-dissimilarity matrix, descending.
pub fn classical_mds_eigenvalues(delta: &DissimilarityMatrix) -> Vec<f64> {
    sorted_eigen(delta).0
}

/// Torgerson scaling into `d` dimensions. Negative eigenvalues contribute
/// zero columns; each column's sign is fixed so its largest-magnitude entry
/// is positive.
pub fn classical_mds_init(delta: &DissimilarityMatrix, d: usize) -> Configuration {
    let n = delta.len();
    let mut points = DMatrix::zeros(n, d);
    if n == 0 {
        return Configuration::from_trusted(points);
    }
    let (values, vectors) = sorted_eigen(delta);
    for k in 0..d.min(n) {
        let scale = values[k].max(0.0).sqrt();
        if scale == 0.0 {
            continue;
        }
        let v = vectors.column(k);
        let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            points[(i, k)] = sign * scale * v[i];
        }
    }
    Configuration::from_trusted(points)
}
