//! Gaussian setting: latent objects `a_i ~ N(0, I_p)` measured under two
//! conditions as `x_ik ~ N(a_i, Sigma)` with `lambda_max(Sigma) = 1 / r`.
//!
//! Each trial draws from one ChaCha8 stream in a fixed order:
//! 1. `n` training objects, each as `a`, `x_1`, `x_2`;
//! 2. `m` matched test objects, each as `a`, `x_1`, `x_2`;
//! 3. `m` unmatched pairs, each as `a`, `x_1`, `a'`, `x_2'`.
//!
//! Every vector is `p` standard normals, noise being `L z` with `L` the
//! Cholesky factor of `Sigma`. Replicate `k` uses seed `seed + k`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::io::{read_matrix_csv, read_vectors_csv, write_matrix_csv, write_vectors_csv};
use crate::matrix::DissimilarityMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaForm {
    Isotropic,
    /// Random orthogonal basis and spectrum drawn from this seed.
    RandomPsd {
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSettingParams {
    /// Training objects.
    pub n: usize,
    /// Test pairs per hypothesis.
    pub m: usize,
    pub p: usize,
    pub r: f64,
    pub sigma: SigmaForm,
    pub seed: u64,
}

impl Default for GaussianSettingParams {
    fn default() -> Self {
        Self { n: 150, m: 250, p: 5, r: 10.0, sigma: SigmaForm::Isotropic, seed: 0 }
    }
}

impl GaussianSettingParams {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.p == 0 {
            return Err(Error::InvalidParameter(format!(
                "n, m and p must be positive (n={}, m={}, p={})",
                self.n, self.m, self.p
            )));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::InvalidR(self.r));
        }
        Ok(())
    }

    /// Parameters for Monte Carlo replicate `k`.
    pub fn for_replicate(&self, k: usize) -> Self {
        Self { seed: self.seed.wrapping_add(k as u64), ..self.clone() }
    }
}

/// Measurement covariance with largest eigenvalue `1 / r`.
pub fn make_sigma(p: usize, r: f64, form: SigmaForm) -> Result<DMatrix<f64>> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidR(r));
    }
    match form {
        SigmaForm::Isotropic => Ok(DMatrix::identity(p, p) / r),
        SigmaForm::RandomPsd { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
            let q = g.qr().q();
            // first eigenvalue pinned at 1/r, the rest in (0, 1/r]
            let spectrum = DVector::from_fn(p, |k, _| if k == 0 { 1.0 / r } else { (1.0 - rng.random::<f64>()) / r });
            let s = &q * DMatrix::from_diagonal(&spectrum) * q.transpose();
            Ok((&s + s.transpose()) * 0.5)
        }
    }
}

/// Distances from one test measurement to every training measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct TestPair {
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub delta1: DissimilarityMatrix,
    pub delta2: DissimilarityMatrix,
    pub matched: Vec<TestPair>,
    pub unmatched: Vec<TestPair>,
}

struct Sampler {
    rng: ChaCha8Rng,
    chol: DMatrix<f64>,
    p: usize,
}

impl Sampler {
    fn new(params: &GaussianSettingParams) -> Result<Self> {
        let sigma = make_sigma(params.p, params.r, params.sigma)?;
        let chol = sigma
            .cholesky()
            .ok_or_else(|| Error::DegenerateInput("measurement covariance is not positive definite".into()))?
            .l();
        Ok(Self { rng: ChaCha8Rng::seed_from_u64(params.seed), chol, p: params.p })
    }

    fn normal(&mut self) -> DVector<f64> {
        DVector::from_fn(self.p, |_, _| self.rng.sample(StandardNormal))
    }

    fn measure(&mut self, object: &DVector<f64>) -> DVector<f64> {
        let z = self.normal();
        object + &self.chol * z
    }

    fn matched(&mut self) -> (DVector<f64>, DVector<f64>) {
        let a = self.normal();
        let x1 = self.measure(&a);
        let x2 = self.measure(&a);
        (x1, x2)
    }

    fn unmatched(&mut self) -> (DVector<f64>, DVector<f64>) {
        let a = self.normal();
        let x1 = self.measure(&a);
        let b = self.normal();
        let x2 = self.measure(&b);
        (x1, x2)
    }
}

fn distances_to(x: &DVector<f64>, training: &DMatrix<f64>) -> Vec<f64> {
    training.row_iter().map(|row| (row.transpose() - x).norm()).collect()
}

pub fn sample_trial(params: &GaussianSettingParams) -> Result<Trial> {
    params.validate()?;
    let mut s = Sampler::new(params)?;
    let (n, p) = (params.n, params.p);
    let mut train1 = DMatrix::zeros(n, p);
    let mut train2 = DMatrix::zeros(n, p);
    for i in 0..n {
        let (x1, x2) = s.matched();
        train1.set_row(i, &x1.transpose());
        train2.set_row(i, &x2.transpose());
    }
    let pair = |draw: (DVector<f64>, DVector<f64>)| TestPair {
        d1: distances_to(&draw.0, &train1),
        d2: distances_to(&draw.1, &train2),
    };
    let matched: Vec<TestPair> = (0..params.m).map(|_| pair(s.matched())).collect();
    let unmatched: Vec<TestPair> = (0..params.m).map(|_| pair(s.unmatched())).collect();
    Ok(Trial {
        delta1: DissimilarityMatrix::euclidean(&train1)?,
        delta2: DissimilarityMatrix::euclidean(&train2)?,
        matched,
        unmatched,
    })
}

const TRIAL_FILES: [&str; 6] =
    ["delta1.csv", "delta2.csv", "matched_1.csv", "matched_2.csv", "unmatched_1.csv", "unmatched_2.csv"];

impl Trial {
    pub fn objects(&self) -> usize {
        self.delta1.len()
    }

    /// Writes the trial as CSV files into `dir`, which must exist.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        write_matrix_csv(&self.delta1, dir.join(TRIAL_FILES[0]))?;
        write_matrix_csv(&self.delta2, dir.join(TRIAL_FILES[1]))?;
        let side = |pairs: &[TestPair], k: usize| -> Vec<Vec<f64>> {
            pairs.iter().map(|t| if k == 1 { t.d1.clone() } else { t.d2.clone() }).collect()
        };
        write_vectors_csv(&side(&self.matched, 1), dir.join(TRIAL_FILES[2]))?;
        write_vectors_csv(&side(&self.matched, 2), dir.join(TRIAL_FILES[3]))?;
        write_vectors_csv(&side(&self.unmatched, 1), dir.join(TRIAL_FILES[4]))?;
        write_vectors_csv(&side(&self.unmatched, 2), dir.join(TRIAL_FILES[5]))?;
        Ok(())
    }

    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let delta1 = read_matrix_csv(dir.join(TRIAL_FILES[0]))?;
        let delta2 = read_matrix_csv(dir.join(TRIAL_FILES[1]))?;
        let zip = |a: Vec<Vec<f64>>, b: Vec<Vec<f64>>| -> Result<Vec<TestPair>> {
            if a.len() != b.len() {
                return Err(Error::LengthMismatch { expected: a.len(), found: b.len() });
            }
            Ok(a.into_iter().zip(b).map(|(d1, d2)| TestPair { d1, d2 }).collect())
        };
        let matched = zip(read_vectors_csv(dir.join(TRIAL_FILES[2]))?, read_vectors_csv(dir.join(TRIAL_FILES[3]))?)?;
        let unmatched = zip(read_vectors_csv(dir.join(TRIAL_FILES[4]))?, read_vectors_csv(dir.join(TRIAL_FILES[5]))?)?;
        Ok(Self { delta1, delta2, matched, unmatched })
    }
}
