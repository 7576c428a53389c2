//! Weighted raw-stress MDS by SMACOF majorization.
//!
//! Each Guttman transform `X+ = V^+ B(X) X` cannot increase the weighted raw
//! stress. `V` depends only on the weights, so its pseudo-inverse is formed
//! once per solve.

mod classical;
mod dimension;

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::{Configuration, DissimilarityMatrix, WeightMatrix};

pub use classical::{classical_mds_eigenvalues, classical_mds_init};
pub use dimension::{profile_log_likelihood, select_dimension_elbow};

/// Start configuration for [`smacof`].
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Init {
    /// Torgerson scaling of the positively weighted targets.
    #[default]
    ClassicalMds,
    Given(Configuration),
    /// Gaussian coordinates from a seeded stream.
    Random(u64),
}

impl fmt::Display for Init {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Init::ClassicalMds => write!(f, "classical_mds"),
            Init::Given(_) => write!(f, "given"),
            Init::Random(seed) => write!(f, "random({seed})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub max_iterations: usize,
    /// Stop once `(s_prev - s) <= relative_tolerance * s_prev`.
    pub relative_tolerance: f64,
    pub init: Init,
    /// Starts per out-of-sample solve (the first is unperturbed).
    pub oos_starts: usize,
    /// Seed for the out-of-sample jitter.
    pub seed: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { max_iterations: 1000, relative_tolerance: 1e-7, init: Init::ClassicalMds, oos_starts: 5, seed: 0 }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidSettings("max_iterations must be at least 1".into()));
        }
        if !(self.relative_tolerance > 0.0 && self.relative_tolerance.is_finite()) {
            return Err(Error::InvalidSettings(format!(
                "relative_tolerance must be positive, got {}",
                self.relative_tolerance
            )));
        }
        if self.oos_starts == 0 {
            return Err(Error::InvalidSettings("oos_starts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    /// Column-centered final configuration.
    pub configuration: Configuration,
    /// Stress of the start configuration followed by one value per iteration.
    pub stress_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl SolveResult {
    pub fn stress(&self) -> f64 {
        *self.stress_trace.last().expect("trace holds the initial stress")
    }
}

/// Row-major copy of a configuration, for the pair loops.
fn row_major(x: &DMatrix<f64>) -> Vec<f64> {
    let (n, d) = x.shape();
    let mut out = vec![0.0; n * d];
    for i in 0..n {
        for k in 0..d {
            out[i * d + k] = x[(i, k)];
        }
    }
    out
}

#[inline]
pub(crate) fn row_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

fn check_shapes(x: &Configuration, delta: &DissimilarityMatrix, weights: &WeightMatrix) -> Result<()> {
    if delta.len() != weights.len() {
        return Err(Error::SizeMismatch { expected: delta.len(), found: weights.len() });
    }
    if x.len() != delta.len() {
        return Err(Error::SizeMismatch { expected: delta.len(), found: x.len() });
    }
    weights.check_against(delta)
}

fn stress_of(rows: &[f64], d: usize, delta: &DissimilarityMatrix, weights: &WeightMatrix) -> f64 {
    let n = delta.len();
    let mut sum = 0.0;
    for i in 0..n {
        let xi = &rows[i * d..(i + 1) * d];
        for j in (i + 1)..n {
            let w = weights.get(i, j);
            if w == 0.0 {
                continue;
            }
            let r = row_distance(xi, &rows[j * d..(j + 1) * d]) - delta.value(i, j);
            sum += w * r * r;
        }
    }
    sum
}

/// Weighted raw stress `sum_{i<j} w_ij (d_ij(X) - delta_ij)^2`.
pub fn raw_stress(x: &Configuration, delta: &DissimilarityMatrix, weights: &WeightMatrix) -> Result<f64> {
    check_shapes(x, delta, weights)?;
    Ok(stress_of(&row_major(x.points()), x.dim(), delta, weights))
}

/// Majorization operator for a fixed weight matrix.
struct Majorizer<'a> {
    delta: &'a DissimilarityMatrix,
    weights: &'a WeightMatrix,
    v_pinv: DMatrix<f64>,
}

impl<'a> Majorizer<'a> {
    fn new(delta: &'a DissimilarityMatrix, weights: &'a WeightMatrix) -> Result<Self> {
        if delta.len() != weights.len() {
            return Err(Error::SizeMismatch { expected: delta.len(), found: weights.len() });
        }
        weights.check_against(delta)?;
        if !weights.is_connected() {
            return Err(Error::DisconnectedWeights);
        }
        let n = weights.len();
        // V + 11'/n is positive definite on a connected graph and its inverse
        // minus 11'/n is the pseudo-inverse of V.
        let shift = 1.0 / n as f64;
        let mut v = DMatrix::from_element(n, n, shift);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let w = weights.get(i, j);
                    v[(i, j)] -= w;
                    v[(i, i)] += w;
                }
            }
        }
        let chol = v.cholesky().ok_or(Error::DisconnectedWeights)?;
        let mut v_pinv = chol.inverse();
        v_pinv.add_scalar_mut(-shift);
        Ok(Self { delta, weights, v_pinv })
    }

    /// `B(X) X` with the zero-distance convention `b_ij = 0`.
    fn bx(&self, rows: &[f64], d: usize) -> DMatrix<f64> {
        let n = self.delta.len();
        let mut out = DMatrix::zeros(n, d);
        for i in 0..n {
            let xi = &rows[i * d..(i + 1) * d];
            for j in (i + 1)..n {
                let w = self.weights.get(i, j);
                if w == 0.0 {
                    continue;
                }
                let xj = &rows[j * d..(j + 1) * d];
                let dist = row_distance(xi, xj);
                if dist == 0.0 {
                    continue;
                }
                let b = w * self.delta.value(i, j) / dist;
                if b == 0.0 {
                    continue;
                }
                for k in 0..d {
                    let diff = b * (xi[k] - xj[k]);
                    out[(i, k)] += diff;
                    out[(j, k)] -= diff;
                }
            }
        }
        out
    }

    fn step(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let bx = self.bx(&row_major(x), x.ncols());
        &self.v_pinv * bx
    }
}

/// One Guttman transform. The result is column-centered.
pub fn guttman_step(x: &Configuration, delta: &DissimilarityMatrix, weights: &WeightMatrix) -> Result<Configuration> {
    check_shapes(x, delta, weights)?;
    let m = Majorizer::new(delta, weights)?;
    Configuration::new(m.step(x.points()))
}

/// Marks zero-weight pairs missing so they cannot influence the start.
fn weighted_view(delta: &DissimilarityMatrix, weights: &WeightMatrix) -> DissimilarityMatrix {
    let n = delta.len();
    let missing = DMatrix::from_fn(n, n, |i, j| i != j && weights.get(i, j) == 0.0);
    let entries = DMatrix::from_fn(n, n, |i, j| if missing[(i, j)] { f64::NAN } else { delta.value(i, j) });
    DissimilarityMatrix::new(entries, Some(missing)).expect("masking keeps a valid matrix")
}

fn random_start(n: usize, d: usize, seed: u64, scale: f64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    DMatrix::from_fn(n, d, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * scale
    })
}

fn start_configuration(
    delta: &DissimilarityMatrix,
    weights: &WeightMatrix,
    d: usize,
    init: &Init,
) -> Result<DMatrix<f64>> {
    let n = delta.len();
    match init {
        Init::ClassicalMds => Ok(classical_mds_init(&weighted_view(delta, weights), d).into_points()),
        Init::Given(c) => {
            if c.len() != n {
                return Err(Error::SizeMismatch { expected: n, found: c.len() });
            }
            if c.dim() != d {
                return Err(Error::SizeMismatch { expected: d, found: c.dim() });
            }
            Ok(c.points().clone())
        }
        Init::Random(seed) => {
            let scale = weighted_view(delta, weights).mean_off_diagonal() / std::f64::consts::SQRT_2;
            Ok(random_start(n, d, *seed, scale))
        }
    }
}

/// Minimizes weighted raw stress in `d` dimensions.
pub fn smacof(
    delta: &DissimilarityMatrix,
    weights: &WeightMatrix,
    d: usize,
    settings: &SolverSettings,
) -> Result<SolveResult> {
    settings.validate()?;
    if d == 0 {
        return Err(Error::InvalidParameter("embedding dimension must be at least 1".into()));
    }
    let majorizer = Majorizer::new(delta, weights)?;
    let start = start_configuration(delta, weights, d, &settings.init)?;
    if start.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoProgress { iteration: 0 });
    }
    let mut x = Configuration::from_trusted(start).centered().into_points();
    let mut stress = stress_of(&row_major(&x), d, delta, weights);
    let mut trace = vec![stress];
    let mut converged = stress == 0.0;
    let mut iterations = 0;

    while !converged && iterations < settings.max_iterations {
        iterations += 1;
        let next = majorizer.step(&x);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NoProgress { iteration: iterations });
        }
        let next_stress = stress_of(&row_major(&next), d, delta, weights);
        if !next_stress.is_finite() {
            return Err(Error::NoProgress { iteration: iterations });
        }
        trace.push(next_stress);
        x = next;
        converged = next_stress == 0.0 || stress - next_stress <= settings.relative_tolerance * stress;
        stress = next_stress;
    }

    Ok(SolveResult {
        configuration: Configuration::from_trusted(x).centered(),
        stress_trace: trace,
        iterations,
        converged,
    })
}

/// Best of `starts` solves: the first from `settings.init`, the rest from
/// seeded Gaussian starts `Random(settings.seed + k)`. Raw stress has local
/// minima (notably in one dimension), which a single start can land in.
pub fn smacof_multistart(
    delta: &DissimilarityMatrix,
    weights: &WeightMatrix,
    d: usize,
    settings: &SolverSettings,
    starts: usize,
) -> Result<SolveResult> {
    if starts == 0 {
        return Err(Error::InvalidSettings("at least one start is required".into()));
    }
    let mut best = smacof(delta, weights, d, settings)?;
    for k in 1..starts {
        let init = Init::Random(settings.seed.wrapping_add(k as u64));
        let candidate = smacof(delta, weights, d, &SolverSettings { init, ..settings.clone() })?;
        if candidate.stress() < best.stress() {
            best = candidate;
        }
    }
    Ok(best)
}

/// Writes `iteration,stress` rows for a solve trace.
pub fn write_trace_csv(trace: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("iteration,stress\n");
    for (i, s) in trace.iter().enumerate() {
        out.push_str(&format!("{i},{}\n", crate::io::format_sig(*s)));
    }
    std::fs::write(path, out)?;
    Ok(())
}
