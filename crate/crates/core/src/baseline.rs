//! Procrustes matching: embed each condition on its own, align the two
//! embeddings with an orthogonal map fitted on the matched training pairs,
//! then compare out-of-sample points across the aligned spaces.

use nalgebra::{DMatrix, RowDVector};

use crate::error::{Error, Result};
use crate::matrix::{Configuration, DissimilarityMatrix, WeightMatrix};
use crate::oos::{embed_point, OosResult};
use crate::solver::{row_distance, smacof, SolverSettings};

/// Map `a -> scale * (a - source_center) R + target_center` on row vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcrustesMap {
    /// Orthogonal `d x d`; reflections are allowed.
    pub rotation: DMatrix<f64>,
    pub source_center: RowDVector<f64>,
    pub target_center: RowDVector<f64>,
    /// 1 unless scaling was requested.
    pub scale: f64,
}

impl ProcrustesMap {
    pub fn dim(&self) -> usize {
        self.rotation.nrows()
    }

    pub fn apply(&self, point: &[f64]) -> Vec<f64> {
        let a = RowDVector::from_row_slice(point);
        let mapped = (a - &self.source_center) * &self.rotation * self.scale + &self.target_center;
        mapped.iter().copied().collect()
    }

    pub fn apply_all(&self, points: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = points.clone();
        for i in 0..points.nrows() {
            let row: Vec<f64> = points.row(i).iter().copied().collect();
            out.set_row(i, &RowDVector::from_vec(self.apply(&row)));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcrustesFit {
    pub map: ProcrustesMap,
    /// `sum_i |map(a_i) - b_i|^2`.
    pub residual: f64,
}

fn center(points: &DMatrix<f64>) -> (DMatrix<f64>, RowDVector<f64>) {
    let mean = points.row_mean();
    let mut centered = points.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    (centered, mean)
}

/// Least-squares orthogonal (optionally scaled) map taking rows of `a` onto
/// rows of `b`.
pub fn fit_procrustes(a: &DMatrix<f64>, b: &DMatrix<f64>, allow_scale: bool) -> Result<ProcrustesFit> {
    if a.shape() != b.shape() {
        return Err(Error::SizeMismatch { expected: a.nrows() * a.ncols(), found: b.nrows() * b.ncols() });
    }
    if a.nrows() < 2 {
        return Err(Error::TooFewValues { needed: 2, found: a.nrows() });
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("non-finite coordinates".into()));
    }
    let (ac, ca) = center(a);
    let (bc, cb) = center(b);
    let norm_a = ac.norm_squared();
    if norm_a == 0.0 {
        return Err(Error::DegenerateInput("all source points coincide".into()));
    }
    let svd = (ac.transpose() * &bc).svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let rotation = u * v_t;
    let scale = if allow_scale {
        let s = svd.singular_values.sum() / norm_a;
        if s <= 0.0 {
            return Err(Error::DegenerateInput("target points coincide; scale would vanish".into()));
        }
        s
    } else {
        1.0
    };
    let map = ProcrustesMap { rotation, source_center: ca, target_center: cb, scale };
    let residual = (map.apply_all(a) - b).norm_squared();
    Ok(ProcrustesFit { map, residual })
}

/// Options for the Procrustes-matching pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PrmSettings {
    pub d: usize,
    /// Divide each input by its Frobenius norm (test vectors alike).
    pub normalize: bool,
    pub allow_scale: bool,
    pub solver: SolverSettings,
}

impl PrmSettings {
    pub fn new(d: usize) -> Self {
        Self { d, normalize: true, allow_scale: false, solver: SolverSettings::default() }
    }
}

/// Two separate embeddings aligned from condition 1 onto condition 2.
#[derive(Debug, Clone)]
pub struct PrmModel {
    embeddings: [Configuration; 2],
    fit: ProcrustesFit,
    scales: [f64; 2],
    settings: PrmSettings,
}

impl PrmModel {
    pub fn fit(delta1: &DissimilarityMatrix, delta2: &DissimilarityMatrix, settings: &PrmSettings) -> Result<Self> {
        if delta1.len() != delta2.len() {
            return Err(Error::SizeMismatch { expected: delta1.len(), found: delta2.len() });
        }
        let prepare = |delta: &DissimilarityMatrix| -> Result<(DissimilarityMatrix, f64)> {
            if settings.normalize {
                delta.normalize_frobenius()
            } else {
                Ok((delta.clone(), 1.0))
            }
        };
        let (d1, s1) = prepare(delta1)?;
        let (d2, s2) = prepare(delta2)?;
        let embed = |delta: &DissimilarityMatrix| -> Result<Configuration> {
            let weights = WeightMatrix::uniform_available(delta);
            Ok(smacof(delta, &weights, settings.d, &settings.solver)?.configuration)
        };
        let x1 = embed(&d1)?;
        let x2 = embed(&d2)?;
        let fit = fit_procrustes(x1.points(), x2.points(), settings.allow_scale)?;
        Ok(Self { embeddings: [x1, x2], fit, scales: [s1, s2], settings: settings.clone() })
    }

    pub fn embedding(&self, condition: usize) -> &Configuration {
        &self.embeddings[condition]
    }

    pub fn procrustes(&self) -> &ProcrustesFit {
        &self.fit
    }

    fn place(&self, condition: usize, d: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let fixed = &self.embeddings[condition];
        if d.len() != fixed.len() {
            return Err(Error::LengthMismatch { expected: fixed.len(), found: d.len() });
        }
        if let Some(k) = d.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NegativeEntry { row: fixed.len(), col: k, value: d[k] });
        }
        let targets: Vec<f64> = d.iter().map(|v| v / self.scales[condition]).collect();
        embed_point(fixed, &targets, &vec![1.0; d.len()], &self.settings.solver)
    }

    /// Embeds `d1` in space 1 and `d2` in space 2; `y1` is reported after
    /// mapping into space 2.
    pub fn tau(&self, d1: &[f64], d2: &[f64]) -> Result<OosResult> {
        let (y1, t1) = self.place(0, d1)?;
        let (y2, t2) = self.place(1, d2)?;
        let y1 = self.fit.map.apply(&y1);
        let len = t1.len().max(t2.len());
        let stress_trace = (0..len).map(|k| t1[k.min(t1.len() - 1)] + t2[k.min(t2.len() - 1)]).collect();
        let tau = row_distance(&y1, &y2);
        Ok(OosResult { y1, y2, tau, stress_trace })
    }
}

/// One-shot Procrustes-matching statistic for a single test pair.
pub fn prm_pipeline(
    delta1: &DissimilarityMatrix,
    delta2: &DissimilarityMatrix,
    d1: &[f64],
    d2: &[f64],
    settings: &PrmSettings,
) -> Result<OosResult> {
    PrmModel::fit(delta1, delta2, settings)?.tau(d1, d2)
}
