//! Omnibus matrix assembly for two conditions.
//!
//! Rows `0..n` hold the condition-1 measurements, rows `n..2n` the
//! condition-2 measurements. An out-of-sample augmentation appends one row
//! per condition for the test pair. Every pair of rows falls into one of
//! three classes: commensurability (same object, different conditions),
//! fidelity (different objects, same condition) and separability (different
//! objects, different conditions).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::{Configuration, DissimilarityMatrix, WeightMatrix};
use crate::solver::raw_stress;

/// Number of conditions handled by the block layout.
pub const CONDITIONS: usize = 2;

/// Maps `(object, condition)` pairs to omnibus rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockIndex {
    objects: usize,
    augmented: bool,
}

/// Class of an omnibus entry in the stress decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairClass {
    Commensurability,
    Fidelity,
    Separability,
}

impl BlockIndex {
    pub fn new(objects: usize) -> Self {
        Self { objects, augmented: false }
    }

    /// In-sample object count `n`.
    pub fn objects(&self) -> usize {
        self.objects
    }

    pub fn is_augmented(&self) -> bool {
        self.augmented
    }

    /// Total rows: `2n`, or `2n + 2` when augmented.
    pub fn rows(&self) -> usize {
        CONDITIONS * self.objects + if self.augmented { CONDITIONS } else { 0 }
    }

    /// Row of `object` under `condition` (both 0-based). Object `n` addresses
    /// the out-of-sample rows of an augmented index.
    pub fn row(&self, object: usize, condition: usize) -> usize {
        assert!(condition < CONDITIONS);
        if object < self.objects {
            condition * self.objects + object
        } else {
            assert!(self.augmented && object == self.objects, "object out of range");
            CONDITIONS * self.objects + condition
        }
    }

    /// Inverse of [`BlockIndex::row`].
    pub fn locate(&self, row: usize) -> (usize, usize) {
        let inner = CONDITIONS * self.objects;
        if row < inner {
            (row % self.objects, row / self.objects)
        } else {
            assert!(self.augmented && row < self.rows(), "row out of range");
            (self.objects, row - inner)
        }
    }

    pub fn classify(&self, a: usize, b: usize) -> PairClass {
        let (oa, ca) = self.locate(a);
        let (ob, cb) = self.locate(b);
        match (oa == ob, ca == cb) {
            (true, _) => PairClass::Commensurability,
            (false, true) => PairClass::Fidelity,
            (false, false) => PairClass::Separability,
        }
    }
}

/// How unavailable cross-condition dissimilarities are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ImputationPolicy {
    /// Leave them missing with weight 0.
    #[default]
    Ignore,
    /// Fill with the mean of the two within-condition dissimilarities.
    MeanImpute,
}

/// Options for [`build_omnibus`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmnibusOptions {
    pub policy: ImputationPolicy,
    /// Divide each input by its Frobenius norm before assembly.
    pub normalize: bool,
    /// Weight on mean-imputed separability entries. Experimental; only
    /// meaningful with [`ImputationPolicy::MeanImpute`].
    pub separability_weight: f64,
}

impl Default for OmnibusOptions {
    fn default() -> Self {
        Self { policy: ImputationPolicy::Ignore, normalize: false, separability_weight: 0.0 }
    }
}

/// The omnibus dissimilarity matrix with its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct OmnibusProblem {
    targets: DissimilarityMatrix,
    weights: WeightMatrix,
    index: BlockIndex,
    w: f64,
    policy: ImputationPolicy,
    scales: [f64; CONDITIONS],
}

/// Assembles the omnibus problem for `delta1`, `delta2` under tradeoff `w`.
///
/// Matched cross-condition pairs get target 0 and weight `w`; within-condition
/// pairs get weight `1 - w`. Unmatched cross-condition pairs are masked
/// (`Ignore`) or imputed with `options.separability_weight` (`MeanImpute`).
pub fn build_omnibus(
    delta1: &DissimilarityMatrix,
    delta2: &DissimilarityMatrix,
    w: f64,
    options: OmnibusOptions,
) -> Result<OmnibusProblem> {
    if delta1.len() != delta2.len() {
        return Err(Error::SizeMismatch { expected: delta1.len(), found: delta2.len() });
    }
    if !(w > 0.0 && w < 1.0) {
        return Err(Error::WOutOfRange(w));
    }
    let sep = options.separability_weight;
    if !(sep.is_finite() && sep >= 0.0) {
        return Err(Error::InvalidParameter(format!("separability weight {sep}")));
    }
    let (d1, d2, scales) = if options.normalize {
        let (a, s1) = delta1.normalize_frobenius()?;
        let (b, s2) = delta2.normalize_frobenius()?;
        (a, b, [s1, s2])
    } else {
        (delta1.clone(), delta2.clone(), [1.0, 1.0])
    };

    let n = d1.len();
    let index = BlockIndex::new(n);
    let size = index.rows();
    let mut targets = DMatrix::from_element(size, size, f64::NAN);
    let mut missing = DMatrix::from_element(size, size, true);
    let mut weights = DMatrix::zeros(size, size);
    let within = [&d1, &d2];

    for a in 0..size {
        let (oa, ca) = index.locate(a);
        for b in 0..size {
            let (ob, cb) = index.locate(b);
            let (value, weight) = if a == b {
                (Some(0.0), 0.0)
            } else if ca == cb {
                let v = within[ca].get(oa, ob);
                (v, if v.is_some() { 1.0 - w } else { 0.0 })
            } else if oa == ob {
                (Some(0.0), w)
            } else {
                match options.policy {
                    ImputationPolicy::Ignore => (None, 0.0),
                    ImputationPolicy::MeanImpute => match (d1.get(oa, ob), d2.get(oa, ob)) {
                        (Some(x), Some(y)) => (Some(0.5 * (x + y)), sep),
                        _ => (None, 0.0),
                    },
                }
            };
            if let Some(v) = value {
                targets[(a, b)] = v;
                missing[(a, b)] = false;
            }
            weights[(a, b)] = weight;
        }
    }

    Ok(OmnibusProblem {
        targets: DissimilarityMatrix::new(targets, Some(missing))?,
        weights: WeightMatrix::new(weights)?,
        index,
        w,
        policy: options.policy,
        scales,
    })
}

/// Appends the test pair `(d1, d2)` as two new rows.
///
/// `d1` holds dissimilarities from the new condition-1 measurement to the `n`
/// in-sample condition-1 objects (same for `d2`). Raw vectors are divided by
/// the normalization factors stored in `problem`. The new points get weight
/// `1 - w` to their own condition's in-sample points; every other new entry
/// is NA with weight 0, including the pair under test.
pub fn augment_for_oos(problem: &OmnibusProblem, d1: &[f64], d2: &[f64]) -> Result<OmnibusProblem> {
    if problem.index.augmented {
        return Err(Error::InvalidParameter("problem is already augmented".into()));
    }
    let n = problem.index.objects;
    let rows = oos_border(problem, d1, d2)?;
    let index = BlockIndex { objects: n, augmented: true };
    let size = index.rows();
    let inner = 2 * n;

    let mut targets = problem.targets.entries().clone().resize(size, size, f64::NAN);
    let mut missing = problem.targets.missing_mask().clone().resize(size, size, true);
    let mut weights = problem.weights.entries().clone().resize(size, size, 0.0);
    for (k, border) in rows.iter().enumerate() {
        let r = inner + k;
        for (j, &(target, weight)) in border.iter().enumerate() {
            if let Some(t) = target {
                targets[(r, j)] = t;
                targets[(j, r)] = t;
                missing[(r, j)] = false;
                missing[(j, r)] = false;
            }
            weights[(r, j)] = weight;
            weights[(j, r)] = weight;
        }
        targets[(r, r)] = 0.0;
        missing[(r, r)] = false;
    }

    Ok(OmnibusProblem {
        targets: DissimilarityMatrix::new(targets, Some(missing))?,
        weights: WeightMatrix::new(weights)?,
        index,
        w: problem.w,
        policy: problem.policy,
        scales: problem.scales,
    })
}

/// `(target, weight)` of each new row against the `2n` in-sample rows.
pub(crate) type BorderRow = Vec<(Option<f64>, f64)>;

/// Border rows for a test pair against an unaugmented problem.
pub(crate) fn oos_border(problem: &OmnibusProblem, d1: &[f64], d2: &[f64]) -> Result<[BorderRow; 2]> {
    let n = problem.index.objects;
    let fidelity = 1.0 - problem.w;
    let mut rows: [BorderRow; 2] = [Vec::new(), Vec::new()];
    for (k, d) in [d1, d2].into_iter().enumerate() {
        if d.len() != n {
            return Err(Error::LengthMismatch { expected: n, found: d.len() });
        }
        let mut row = vec![(None, 0.0); 2 * n];
        for (i, &v) in d.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row: 2 * n + k, col: i });
            }
            if v < 0.0 {
                return Err(Error::NegativeEntry { row: 2 * n + k, col: i, value: v });
            }
            row[problem.index.row(i, k)] = (Some(v / problem.scales[k]), fidelity);
        }
        rows[k] = row;
    }
    Ok(rows)
}

impl OmnibusProblem {
    pub fn targets(&self) -> &DissimilarityMatrix {
        &self.targets
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    pub fn index(&self) -> BlockIndex {
        self.index
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn policy(&self) -> ImputationPolicy {
        self.policy
    }

    /// Frobenius factors that were divided out of each condition (1 if the
    /// inputs were not normalized here).
    pub fn scales(&self) -> [f64; CONDITIONS] {
        self.scales
    }

    /// In-sample object count.
    pub fn objects(&self) -> usize {
        self.index.objects
    }

    /// Full target matrix with every missing cross-condition entry replaced
    /// by the mean-imputation rule, for building start configurations.
    pub fn imputed_targets(&self) -> DissimilarityMatrix {
        let size = self.index.rows();
        let n = self.index.objects;
        let fill = self.targets.mean_off_diagonal();
        let entries = DMatrix::from_fn(size, size, |a, b| {
            if let Some(v) = self.targets.get(a, b) {
                return v;
            }
            let (oa, ca) = self.index.locate(a);
            let (ob, cb) = self.index.locate(b);
            if ca != cb && oa < n && ob < n {
                let x = self.targets.get(self.index.row(oa, 0), self.index.row(ob, 0));
                let y = self.targets.get(self.index.row(oa, 1), self.index.row(ob, 1));
                if let (Some(x), Some(y)) = (x, y) {
                    return 0.5 * (x + y);
                }
            }
            fill
        });
        DissimilarityMatrix::new(entries, None).expect("imputed omnibus stays valid")
    }

    /// Writes the target and weight matrices as CSV, for debugging.
    pub fn dump_csv(&self, targets: &std::path::Path, weights: &std::path::Path) -> Result<()> {
        crate::io::write_matrix_csv(&self.targets, targets)?;
        let rows: Vec<Vec<f64>> = self.weights.entries().row_iter().map(|r| r.iter().copied().collect()).collect();
        crate::io::write_vectors_csv(&rows, weights)
    }
}

/// Stress split by pair class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StressComponents {
    pub fidelity: f64,
    pub commensurability: f64,
    pub separability: f64,
}

impl StressComponents {
    pub fn total(&self) -> f64 {
        self.fidelity + self.commensurability + self.separability
    }
}

/// Decomposes weighted raw stress of `x` on `problem` by pair class.
pub fn stress_components(x: &Configuration, problem: &OmnibusProblem) -> Result<StressComponents> {
    let size = problem.index.rows();
    if x.len() != size {
        return Err(Error::SizeMismatch { expected: size, found: x.len() });
    }
    problem.weights.check_against(&problem.targets)?;
    let mut parts = StressComponents { fidelity: 0.0, commensurability: 0.0, separability: 0.0 };
    for a in 0..size {
        for b in (a + 1)..size {
            let weight = problem.weights.get(a, b);
            if weight == 0.0 {
                continue;
            }
            let r = x.distance(a, b) - problem.targets.value(a, b);
            let term = weight * r * r;
            match problem.index.classify(a, b) {
                PairClass::Fidelity => parts.fidelity += term,
                PairClass::Commensurability => parts.commensurability += term,
                PairClass::Separability => parts.separability += term,
            }
        }
    }
    Ok(parts)
}

/// Total weighted raw stress of `x` on `problem`.
pub fn problem_stress(x: &Configuration, problem: &OmnibusProblem) -> Result<f64> {
    raw_stress(x, &problem.targets, &problem.weights)
}

/// Mean squared fidelity residual of condition `k` (0-based) over all
/// `n choose 2` in-sample pairs.
pub fn fidelity_error(x: &Configuration, delta: &DissimilarityMatrix, k: usize) -> Result<f64> {
    let n = delta.len();
    if x.len() < CONDITIONS * n {
        return Err(Error::SizeMismatch { expected: CONDITIONS * n, found: x.len() });
    }
    if k >= CONDITIONS {
        return Err(Error::InvalidParameter(format!("condition {k}")));
    }
    if n < 2 {
        return Err(Error::TooFewValues { needed: 2, found: n });
    }
    let index = BlockIndex::new(n);
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            if let Some(target) = delta.get(i, j) {
                let r = x.distance(index.row(i, k), index.row(j, k)) - target;
                sum += r * r;
                pairs += 1;
            }
        }
    }
    Ok(sum / pairs.max(1) as f64)
}

/// Mean squared distance between matched in-sample embeddings (matched
/// targets are 0).
pub fn commensurability_error(x: &Configuration, objects: usize) -> Result<f64> {
    if x.len() < CONDITIONS * objects {
        return Err(Error::SizeMismatch { expected: CONDITIONS * objects, found: x.len() });
    }
    if objects == 0 {
        return Err(Error::TooFewValues { needed: 1, found: 0 });
    }
    let index = BlockIndex::new(objects);
    let sum: f64 = (0..objects).map(|i| x.distance(index.row(i, 0), index.row(i, 1)).powi(2)).sum();
    Ok(sum / objects as f64)
}
