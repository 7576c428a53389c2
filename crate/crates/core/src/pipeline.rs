//! End-to-end statistics: fit a joint embedding once, then score test pairs.

use crate::baseline::{PrmModel, PrmSettings};
use crate::error::{Error, Result};
use crate::inference::TestStatisticSample;
use crate::matrix::{Configuration, DissimilarityMatrix};
use crate::omnibus::{augment_for_oos, build_omnibus, OmnibusOptions, OmnibusProblem};
use crate::oos::{embed_test_pair, oos_embed_joint, OosResult};
use crate::simgauss::{TestPair, Trial};
use crate::solver::{classical_mds_init, smacof, Init, SolveResult, SolverSettings};

/// How test pairs are placed against the in-sample embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OosMode {
    /// In-sample rows stay fixed.
    #[default]
    Fixed,
    /// Fixed placement followed by a SMACOF pass over all rows.
    Joint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JofcSettings {
    pub d: usize,
    pub omnibus: OmnibusOptions,
    pub solver: SolverSettings,
    pub oos_mode: OosMode,
}

impl JofcSettings {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            omnibus: OmnibusOptions { normalize: true, ..OmnibusOptions::default() },
            solver: SolverSettings::default(),
            oos_mode: OosMode::Fixed,
        }
    }
}

/// In-sample omnibus embedding of both conditions.
#[derive(Debug, Clone)]
pub struct JointEmbedding {
    problem: OmnibusProblem,
    solve: SolveResult,
    settings: JofcSettings,
}

impl JointEmbedding {
    /// With the default classical start, the start is computed from the
    /// omnibus matrix with unavailable entries mean-imputed.
    pub fn fit(
        delta1: &DissimilarityMatrix,
        delta2: &DissimilarityMatrix,
        w: f64,
        settings: &JofcSettings,
    ) -> Result<Self> {
        if settings.d == 0 {
            return Err(Error::InvalidSettings("embedding dimension must be at least 1".into()));
        }
        let problem = build_omnibus(delta1, delta2, w, settings.omnibus)?;
        let mut solver = settings.solver.clone();
        if solver.init == Init::ClassicalMds {
            solver.init = Init::Given(classical_mds_init(&problem.imputed_targets(), settings.d));
        }
        let solve = smacof(problem.targets(), problem.weights(), settings.d, &solver)?;
        Ok(Self { problem, solve, settings: settings.clone() })
    }

    pub fn problem(&self) -> &OmnibusProblem {
        &self.problem
    }

    pub fn configuration(&self) -> &Configuration {
        &self.solve.configuration
    }

    pub fn solve_result(&self) -> &SolveResult {
        &self.solve
    }

    /// Embeds the test pair with raw (unnormalized) dissimilarity vectors.
    pub fn tau(&self, d1: &[f64], d2: &[f64]) -> Result<OosResult> {
        let x = self.configuration();
        match self.settings.oos_mode {
            OosMode::Fixed => embed_test_pair(x, &self.problem, d1, d2, &self.settings.solver),
            OosMode::Joint => {
                let augmented = augment_for_oos(&self.problem, d1, d2)?;
                oos_embed_joint(x, &augmented, &self.settings.solver)
            }
        }
    }

    pub fn taus(&self, pairs: &[TestPair]) -> Result<Vec<f64>> {
        pairs.iter().map(|p| Ok(self.tau(&p.d1, &p.d2)?.tau)).collect()
    }
}

/// Matched and unmatched JOFC statistics for one trial at tradeoff `w`.
pub fn jofc_sample(trial: &Trial, w: f64, settings: &JofcSettings) -> Result<TestStatisticSample> {
    let model = JointEmbedding::fit(&trial.delta1, &trial.delta2, w, settings)?;
    TestStatisticSample::new(model.taus(&trial.matched)?, model.taus(&trial.unmatched)?)
}

/// Matched and unmatched Procrustes-matching statistics for one trial.
pub fn prm_sample(trial: &Trial, settings: &PrmSettings) -> Result<TestStatisticSample> {
    let model = PrmModel::fit(&trial.delta1, &trial.delta2, settings)?;
    let taus =
        |pairs: &[TestPair]| -> Result<Vec<f64>> { pairs.iter().map(|p| Ok(model.tau(&p.d1, &p.d2)?.tau)).collect() };
    TestStatisticSample::new(taus(&trial.matched)?, taus(&trial.unmatched)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::empirical_auc;
    use crate::simgauss::{sample_trial, GaussianSettingParams, SigmaForm};

    fn params(r: f64, seed: u64) -> GaussianSettingParams {
        GaussianSettingParams { n: 30, m: 30, p: 3, r, sigma: SigmaForm::Isotropic, seed }
    }

    #[test]
    fn low_noise_separates_nearly_perfectly() {
        let trial = sample_trial(&params(1e6, 1)).unwrap();
        let s = jofc_sample(&trial, 0.5, &JofcSettings::new(3)).unwrap();
        assert!(empirical_auc(&s).unwrap() >= 0.99);
    }

    #[test]
    fn overwhelming_noise_is_near_chance() {
        let mut aucs = Vec::new();
        for seed in 0..3 {
            let trial = sample_trial(&params(0.01, seed)).unwrap();
            aucs.push(empirical_auc(&jofc_sample(&trial, 0.5, &JofcSettings::new(3)).unwrap()).unwrap());
        }
        let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
        assert!((mean - 0.5).abs() <= 0.1, "{aucs:?}");
    }

    #[test]
    fn fit_is_deterministic() {
        let trial = sample_trial(&params(5.0, 2)).unwrap();
        let s = JofcSettings::new(2);
        let a = jofc_sample(&trial, 0.8, &s).unwrap();
        let b = jofc_sample(&trial, 0.8, &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn joint_mode_runs() {
        let mut trial = sample_trial(&params(5.0, 3)).unwrap();
        trial.matched.truncate(2);
        trial.unmatched.truncate(2);
        let s = JofcSettings { oos_mode: OosMode::Joint, ..JofcSettings::new(2) };
        let sample = jofc_sample(&trial, 0.5, &s).unwrap();
        assert_eq!(sample.matched().len(), 2);
    }

    #[test]
    fn prm_separates_low_noise() {
        let trial = sample_trial(&params(1e4, 4)).unwrap();
        let s = prm_sample(&trial, &PrmSettings::new(3)).unwrap();
        assert!(empirical_auc(&s).unwrap() >= 0.95);
    }

    #[test]
    fn rejects_zero_dimension() {
        let trial = sample_trial(&params(5.0, 5)).unwrap();
        assert!(JointEmbedding::fit(&trial.delta1, &trial.delta2, 0.5, &JofcSettings::new(0)).is_err());
    }
}
