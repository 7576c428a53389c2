//! Dissimilarity matrices, weight matrices and point configurations.
//!
//! All three types validate on construction and are immutable afterwards, so
//! they can be shared freely between threads.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative tolerance under which `(i, j)` and `(j, i)` are averaged.
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// A square, symmetric, hollow, nonnegative matrix of dissimilarities with an
/// optional mask of unavailable (NA) entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DissimilarityMatrix {
    entries: DMatrix<f64>,
    missing: DMatrix<bool>,
}

impl DissimilarityMatrix {
    /// Validates `entries` (and `missing`, if given) with the default
    /// symmetrization tolerance.
    pub fn new(entries: DMatrix<f64>, missing: Option<DMatrix<bool>>) -> Result<Self> {
        Self::with_tolerance(entries, missing, SYMMETRY_TOLERANCE)
    }

    /// Validates a raw matrix. Available pairs that differ by at most
    /// `tolerance * max(|a|, |b|)` are replaced by their mean.
    pub fn with_tolerance(mut entries: DMatrix<f64>, missing: Option<DMatrix<bool>>, tolerance: f64) -> Result<Self> {
        let (rows, cols) = entries.shape();
        if rows != cols {
            return Err(Error::NonSquare { rows, cols });
        }
        let n = rows;
        let missing = match missing {
            Some(m) => {
                if m.shape() != (n, n) {
                    return Err(Error::SizeMismatch { expected: n, found: m.nrows() });
                }
                m
            }
            None => DMatrix::from_element(n, n, false),
        };

        for i in 0..n {
            if missing[(i, i)] || entries[(i, i)] != 0.0 {
                return Err(Error::NonZeroDiagonal { index: i, value: entries[(i, i)] });
            }
            entries[(i, i)] = 0.0;
            for j in (i + 1)..n {
                if missing[(i, j)] != missing[(j, i)] {
                    return Err(Error::AsymmetryBeyondTolerance {
                        row: i,
                        col: j,
                        a: entries[(i, j)],
                        b: entries[(j, i)],
                    });
                }
                if missing[(i, j)] {
                    entries[(i, j)] = f64::NAN;
                    entries[(j, i)] = f64::NAN;
                    continue;
                }
                let (a, b) = (entries[(i, j)], entries[(j, i)]);
                if !a.is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
                if !b.is_finite() {
                    return Err(Error::NonFinite { row: j, col: i });
                }
                if a < 0.0 {
                    return Err(Error::NegativeEntry { row: i, col: j, value: a });
                }
                if b < 0.0 {
                    return Err(Error::NegativeEntry { row: j, col: i, value: b });
                }
                if a != b {
                    if (a - b).abs() > tolerance * a.max(b) {
                        return Err(Error::AsymmetryBeyondTolerance { row: i, col: j, a, b });
                    }
                    let mean = 0.5 * (a + b);
                    entries[(i, j)] = mean;
                    entries[(j, i)] = mean;
                }
            }
        }
        Ok(Self { entries, missing })
    }

    /// Builds a matrix from row vectors; `None` marks a missing entry.
    pub fn from_rows(rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let n = rows.len();
        let mut entries = DMatrix::zeros(n, n);
        let mut missing = DMatrix::from_element(n, n, false);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::NonSquare { rows: n, cols: row.len() });
            }
            for (j, v) in row.iter().enumerate() {
                match v {
                    Some(x) => entries[(i, j)] = *x,
                    None => missing[(i, j)] = true,
                }
            }
        }
        Self::new(entries, Some(missing))
    }

    /// Pairwise Euclidean distances between the rows of `points`.
    pub fn euclidean(points: &DMatrix<f64>) -> Result<Self> {
        if let Some(k) = points.iter().position(|v| !v.is_finite()) {
            let rows = points.nrows();
            return Err(Error::NonFinite { row: k % rows, col: k / rows });
        }
        let n = points.nrows();
        let mut entries = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let d = (points.row(i) - points.row(j)).norm();
                entries[(i, j)] = d;
                entries[(j, i)] = d;
            }
        }
        Ok(Self { entries, missing: DMatrix::from_element(n, n, false) })
    }

    /// Number of objects.
    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, i: usize, j: usize) -> bool {
        self.missing[(i, j)]
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|&m| m)
    }

    /// Available entry at `(i, j)`, or `None` for NA.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        (!self.missing[(i, j)]).then(|| self.entries[(i, j)])
    }

    /// Raw entry; NaN where missing.
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// Raw storage; missing entries hold NaN.
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn missing_mask(&self) -> &DMatrix<bool> {
        &self.missing
    }

    /// Frobenius norm over available entries.
    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().zip(self.missing.iter()).filter(|(_, &m)| !m).map(|(v, _)| v * v).sum::<f64>().sqrt()
    }

    /// Scales every available entry by `factor` (must be finite and > 0).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::InvalidParameter(format!("scale factor {factor}")));
        }
        Ok(Self { entries: &self.entries * factor, missing: self.missing.clone() })
    }

    /// Divides by the mask-aware Frobenius norm; returns the matrix and the norm.
    pub fn normalize_frobenius(&self) -> Result<(Self, f64)> {
        let norm = self.frobenius_norm();
        if norm == 0.0 {
            return Err(Error::AllZero);
        }
        let entries = self.entries.map(|v| v / norm);
        Ok((Self { entries, missing: self.missing.clone() }, norm))
    }

    /// Principal submatrix on `indices`, in the given order.
    pub fn submatrix(&self, indices: &[usize]) -> Self {
        let k = indices.len();
        let entries = DMatrix::from_fn(k, k, |a, b| self.entries[(indices[a], indices[b])]);
        let missing = DMatrix::from_fn(k, k, |a, b| self.missing[(indices[a], indices[b])]);
        Self { entries, missing }
    }

    /// Row `i` restricted to columns `columns`. Missing entries are NaN.
    pub fn row_restricted(&self, i: usize, columns: &[usize]) -> Vec<f64> {
        columns.iter().map(|&j| self.entries[(i, j)]).collect()
    }

    /// Mean of available off-diagonal entries (0 for fewer than two objects).
    pub fn mean_off_diagonal(&self) -> f64 {
        let n = self.len();
        let (mut sum, mut count) = (0.0, 0usize);
        for i in 0..n {
            for j in (i + 1)..n {
                if let Some(v) = self.get(i, j) {
                    sum += v;
                    count += 1;
                }
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }
}

/// Normalizes to unit Frobenius norm over the available entries.
pub fn normalize_frobenius(delta: &DissimilarityMatrix) -> Result<DissimilarityMatrix> {
    delta.normalize_frobenius().map(|(m, _)| m)
}

/// Euclidean distance matrix of the rows of `points`.
pub fn euclidean_dissimilarity(points: &DMatrix<f64>) -> Result<DissimilarityMatrix> {
    DissimilarityMatrix::euclidean(points)
}

/// Nonnegative, symmetric, hollow weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    entries: DMatrix<f64>,
}

impl WeightMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = entries.shape();
        if rows != cols {
            return Err(Error::NonSquare { rows, cols });
        }
        for i in 0..rows {
            for j in 0..rows {
                let v = entries[(i, j)];
                let bad = !v.is_finite() || v < 0.0 || (i == j && v != 0.0) || v != entries[(j, i)];
                if bad {
                    return Err(Error::InvalidWeight { row: i, col: j, value: v });
                }
            }
        }
        Ok(Self { entries })
    }

    /// Unit weight on every off-diagonal pair.
    pub fn uniform(n: usize) -> Self {
        Self { entries: DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 }) }
    }

    /// Unit weight on every available off-diagonal pair of `delta`.
    pub fn uniform_available(delta: &DissimilarityMatrix) -> Self {
        let n = delta.len();
        Self { entries: DMatrix::from_fn(n, n, |i, j| if i == j || delta.is_missing(i, j) { 0.0 } else { 1.0 }) }
    }

    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Whether the graph of strictly positive weights is connected.
    pub fn is_connected(&self) -> bool {
        let n = self.len();
        if n <= 1 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if !seen[j] && self.entries[(i, j)] > 0.0 {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == n
    }

    /// Checks that every positive weight sits on an available dissimilarity.
    pub fn check_against(&self, delta: &DissimilarityMatrix) -> Result<()> {
        if delta.len() != self.len() {
            return Err(Error::SizeMismatch { expected: self.len(), found: delta.len() });
        }
        let n = self.len();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.entries[(i, j)] > 0.0 && delta.is_missing(i, j) {
                    return Err(Error::PositiveWeightOnMissing { row: i, col: j });
                }
            }
        }
        Ok(())
    }
}

/// Points in the commensurate space, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    points: DMatrix<f64>,
}

impl Configuration {
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        if let Some(k) = points.iter().position(|v| !v.is_finite()) {
            let rows = points.nrows().max(1);
            return Err(Error::NonFinite { row: k % rows, col: k / rows });
        }
        Ok(Self { points })
    }

    /// All points at the origin.
    pub fn zeros(n: usize, d: usize) -> Self {
        Self { points: DMatrix::zeros(n, d) }
    }

    pub(crate) fn from_trusted(points: DMatrix<f64>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Embedding dimension.
    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn into_points(self) -> DMatrix<f64> {
        self.points
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.points.row(i).iter().copied().collect()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        (self.points.row(i) - self.points.row(j)).norm()
    }

    /// Subtracts the column means.
    pub fn centered(&self) -> Self {
        let mut points = self.points.clone();
        let n = points.nrows();
        if n == 0 {
            return Self { points };
        }
        for mut col in points.column_iter_mut() {
            let mean = col.sum() / n as f64;
            col.add_scalar_mut(-mean);
        }
        Self { points }
    }

    /// Rows `indices`, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self { points: self.points.select_rows(indices) }
    }
}
