//! Out-of-sample embedding of a test pair against a fixed configuration.
//!
//! Only the new rows move. The restricted stress is majorized with the
//! in-sample rows held fixed: for a block `F` of free points,
//! `Z+ = V_FF^-1 [ (B(Y) Y)_F + W_FR X_R ]`. Free points with no positive
//! weight between them are solved independently.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::Configuration;
use crate::omnibus::{oos_border, OmnibusProblem};
use crate::solver::{row_distance, smacof, Init, SolverSettings};

/// Embedded test pair and its statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct OosResult {
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    /// `|y1 - y2|`.
    pub tau: f64,
    /// Restricted stress per iteration, starting with the initial value.
    pub stress_trace: Vec<f64>,
}

/// Euclidean distance between the embedded test points.
pub fn test_statistic(result: &OosResult) -> f64 {
    row_distance(&result.y1, &result.y2)
}

/// Targets and weights for points that move against a fixed configuration.
#[derive(Debug, Clone)]
pub struct RestrictedProblem<'a> {
    fixed: &'a Configuration,
    /// Row-major copy of `fixed`.
    rows: Vec<f64>,
    /// `(target, weight)` of each free point against every fixed row.
    border: Vec<Vec<(f64, f64)>>,
    /// Positively weighted `(row, target, weight)` entries of `border`.
    links: Vec<Vec<(usize, f64, f64)>>,
    /// Targets between free points.
    free_targets: DMatrix<f64>,
    free_weights: DMatrix<f64>,
}

impl<'a> RestrictedProblem<'a> {
    /// `border[f][j]` is `(target, weight)` between free point `f` and fixed
    /// row `j`; free points start uncoupled.
    pub fn new(fixed: &'a Configuration, border: Vec<Vec<(f64, f64)>>) -> Result<Self> {
        let f = border.len();
        for (k, row) in border.iter().enumerate() {
            if row.len() != fixed.len() {
                return Err(Error::LengthMismatch { expected: fixed.len(), found: row.len() });
            }
            for (j, &(t, w)) in row.iter().enumerate() {
                if !(w.is_finite() && w >= 0.0) {
                    return Err(Error::InvalidWeight { row: fixed.len() + k, col: j, value: w });
                }
                if w > 0.0 && !t.is_finite() {
                    return Err(Error::NonFinite { row: fixed.len() + k, col: j });
                }
            }
        }
        let d = fixed.dim();
        let mut rows = vec![0.0; fixed.len() * d];
        for (j, chunk) in rows.chunks_mut(d.max(1)).enumerate().take(fixed.len()) {
            for (k, v) in chunk.iter_mut().enumerate() {
                *v = fixed.points()[(j, k)];
            }
        }
        let links = border
            .iter()
            .map(|row| row.iter().enumerate().filter(|(_, e)| e.1 > 0.0).map(|(j, &(t, w))| (j, t, w)).collect())
            .collect();
        Ok(Self { fixed, rows, border, links, free_targets: DMatrix::zeros(f, f), free_weights: DMatrix::zeros(f, f) })
    }

    /// Couples free points `a` and `b` with a target and weight.
    pub fn couple(&mut self, a: usize, b: usize, target: f64, weight: f64) -> Result<()> {
        if a == b || !(weight.is_finite() && weight >= 0.0) || (weight > 0.0 && !target.is_finite()) {
            return Err(Error::InvalidParameter(format!("coupling ({a}, {b}) = ({target}, {weight})")));
        }
        self.free_targets[(a, b)] = target;
        self.free_targets[(b, a)] = target;
        self.free_weights[(a, b)] = weight;
        self.free_weights[(b, a)] = weight;
        Ok(())
    }

    pub fn free_points(&self) -> usize {
        self.border.len()
    }

    /// Groups of free points linked by positive free-free weights.
    fn components(&self) -> Vec<Vec<usize>> {
        let f = self.free_points();
        let mut label = vec![usize::MAX; f];
        let mut groups = Vec::new();
        for start in 0..f {
            if label[start] != usize::MAX {
                continue;
            }
            let id = groups.len();
            let mut group = vec![start];
            label[start] = id;
            let mut k = 0;
            while k < group.len() {
                let a = group[k];
                for b in 0..f {
                    if label[b] == usize::MAX && self.free_weights[(a, b)] > 0.0 {
                        label[b] = id;
                        group.push(b);
                    }
                }
                k += 1;
            }
            group.sort_unstable();
            groups.push(group);
        }
        groups
    }

    fn fixed_row(&self, j: usize) -> &[f64] {
        let d = self.fixed.dim();
        &self.rows[j * d..(j + 1) * d]
    }

    /// Restricted stress of `z` (rows follow `group`) and the majorization
    /// right-hand side `(B(Y) Y)_F + W_FR X_R` at `z`.
    fn evaluate(&self, group: &[usize], z: &[Vec<f64>]) -> (f64, DMatrix<f64>) {
        let d = self.fixed.dim();
        let mut sum = 0.0;
        let mut rhs = DMatrix::zeros(group.len(), d);
        for (a, &fa) in group.iter().enumerate() {
            for &(j, t, w) in &self.links[fa] {
                let xj = self.fixed_row(j);
                let dist = row_distance(&z[a], xj);
                let r = dist - t;
                sum += w * r * r;
                let ratio = if dist > 0.0 { t / dist } else { 0.0 };
                for k in 0..d {
                    rhs[(a, k)] += w * (xj[k] + ratio * (z[a][k] - xj[k]));
                }
            }
            for (b, &fb) in group.iter().enumerate() {
                let w = self.free_weights[(fa, fb)];
                if a == b || w == 0.0 {
                    continue;
                }
                let t = self.free_targets[(fa, fb)];
                let dist = row_distance(&z[a], &z[b]);
                if b > a {
                    sum += w * (dist - t) * (dist - t);
                }
                if dist > 0.0 {
                    let ratio = t / dist;
                    for k in 0..d {
                        rhs[(a, k)] += w * ratio * (z[a][k] - z[b][k]);
                    }
                }
            }
        }
        (sum, rhs)
    }

    /// Weighted barycenter of the point's positively weighted fixed rows,
    /// weights `1 / (target + median target)`.
    fn barycenter(&self, f: usize) -> Vec<f64> {
        let d = self.fixed.dim();
        let linked: Vec<(usize, f64)> =
            self.border[f].iter().enumerate().filter(|(_, &(_, w))| w > 0.0).map(|(j, &(t, _))| (j, t)).collect();
        let mut targets: Vec<f64> = linked.iter().map(|&(_, t)| t).collect();
        targets.sort_by(f64::total_cmp);
        let m = targets.len();
        let median = if m % 2 == 1 { targets[m / 2] } else { 0.5 * (targets[m / 2 - 1] + targets[m / 2]) };

        let exact: Vec<usize> = linked.iter().filter(|&&(_, t)| t + median == 0.0).map(|&(j, _)| j).collect();
        let mut center = vec![0.0; d];
        if !exact.is_empty() {
            for &j in &exact {
                for (c, v) in center.iter_mut().zip(self.fixed_row(j)) {
                    *c += *v;
                }
            }
            center.iter_mut().for_each(|c| *c /= exact.len() as f64);
            return center;
        }
        let mut total = 0.0;
        for &(j, t) in &linked {
            let v = 1.0 / (t + median);
            total += v;
            for (c, x) in center.iter_mut().zip(self.fixed_row(j)) {
                *c += v * x;
            }
        }
        center.iter_mut().for_each(|c| *c /= total);
        center
    }

    /// Root-mean-square spread of the fixed rows around their centroid.
    fn spread(&self) -> f64 {
        let pts = self.fixed.points();
        let n = pts.nrows();
        if n == 0 {
            return 1.0;
        }
        let mut ss = 0.0;
        for col in pts.column_iter() {
            let mean = col.sum() / n as f64;
            ss += col.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        }
        (ss / n as f64).sqrt()
    }

    /// Majorization iterations for one component from `start`.
    fn descend(
        &self,
        group: &[usize],
        start: Vec<Vec<f64>>,
        settings: &SolverSettings,
    ) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let c = group.len();
        let mut v = DMatrix::zeros(c, c);
        for (a, &fa) in group.iter().enumerate() {
            v[(a, a)] = self.border[fa].iter().map(|&(_, w)| w).sum::<f64>();
            for (b, &fb) in group.iter().enumerate() {
                if a != b {
                    let w = self.free_weights[(fa, fb)];
                    v[(a, a)] += w;
                    v[(a, b)] -= w;
                }
            }
        }
        let chol = v.cholesky().ok_or(Error::DisconnectedFreePoint(group[0]))?;

        let mut z = start;
        let (mut stress, mut rhs) = self.evaluate(group, &z);
        let mut trace = vec![stress];
        let mut iterations = 0;
        let mut converged = stress == 0.0;
        while !converged && iterations < settings.max_iterations {
            iterations += 1;
            let next = chol.solve(&rhs);
            if next.iter().any(|x| !x.is_finite()) {
                return Err(Error::NoProgress { iteration: iterations });
            }
            z = (0..c).map(|a| next.row(a).iter().copied().collect()).collect();
            let (next_stress, next_rhs) = self.evaluate(group, &z);
            trace.push(next_stress);
            converged = next_stress == 0.0 || stress - next_stress <= settings.relative_tolerance * stress;
            stress = next_stress;
            rhs = next_rhs;
        }
        Ok((z, trace))
    }

    /// Best of `settings.oos_starts` deterministic starts for one component.
    fn solve_component(&self, group: &[usize], settings: &SolverSettings) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        for &f in group {
            if !self.border[f].iter().any(|&(_, w)| w > 0.0) && group.len() == 1 {
                return Err(Error::DisconnectedFreePoint(f));
            }
        }
        if !group.iter().any(|&f| self.border[f].iter().any(|&(_, w)| w > 0.0)) {
            return Err(Error::DisconnectedFreePoint(group[0]));
        }
        let centers: Vec<Vec<f64>> = group
            .iter()
            .map(|&f| {
                if self.border[f].iter().any(|&(_, w)| w > 0.0) {
                    self.barycenter(f)
                } else {
                    vec![0.0; self.fixed.dim()]
                }
            })
            .collect();
        let jitter = 0.5 * self.spread();
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        let mut best: Option<(Vec<Vec<f64>>, Vec<f64>)> = None;
        for s in 0..settings.oos_starts {
            let start: Vec<Vec<f64>> = if s == 0 {
                centers.clone()
            } else {
                centers
                    .iter()
                    .map(|c| {
                        c.iter()
                            .map(|&v| {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                v + jitter * z
                            })
                            .collect()
                    })
                    .collect()
            };
            let (z, trace) = self.descend(group, start, settings)?;
            let better = match &best {
                None => true,
                Some((_, t)) => trace.last() < t.last(),
            };
            if better {
                best = Some((z, trace));
            }
        }
        Ok(best.expect("at least one start"))
    }

    /// Minimizes the restricted stress. Returns the free points (in order)
    /// and the summed stress trace.
    pub fn solve(&self, settings: &SolverSettings) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        settings.validate()?;
        let f = self.free_points();
        let mut points = vec![Vec::new(); f];
        let mut traces = Vec::new();
        for group in self.components() {
            let (z, trace) = self.solve_component(&group, settings)?;
            for (a, &fa) in group.iter().enumerate() {
                points[fa] = z[a].clone();
            }
            traces.push(trace);
        }
        let len = traces.iter().map(Vec::len).max().unwrap_or(0);
        let total = (0..len).map(|t| traces.iter().map(|tr| tr[t.min(tr.len() - 1)]).sum()).collect();
        Ok((points, total))
    }
}

/// Embeds one new point from its dissimilarities and weights to `fixed`.
pub fn embed_point(
    fixed: &Configuration,
    targets: &[f64],
    weights: &[f64],
    settings: &SolverSettings,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if targets.len() != weights.len() {
        return Err(Error::LengthMismatch { expected: targets.len(), found: weights.len() });
    }
    let border = vec![targets.iter().copied().zip(weights.iter().copied()).collect()];
    let (mut points, trace) = RestrictedProblem::new(fixed, border)?.solve(settings)?;
    Ok((points.remove(0), trace))
}

fn finish(mut points: Vec<Vec<f64>>, trace: Vec<f64>) -> OosResult {
    let y2 = points.pop().expect("two free points");
    let y1 = points.pop().expect("two free points");
    let tau = row_distance(&y1, &y2);
    OosResult { y1, y2, tau, stress_trace: trace }
}

fn check_finite(insample: &Configuration) -> Result<()> {
    match insample.points().iter().position(|v| !v.is_finite()) {
        Some(k) => {
            let rows = insample.len().max(1);
            Err(Error::NonFinite { row: k % rows, col: k / rows })
        }
        None => Ok(()),
    }
}

/// Embeds the test pair of an augmented problem with the `2n` in-sample rows
/// of `insample` held fixed.
pub fn oos_embed(insample: &Configuration, problem: &OmnibusProblem, settings: &SolverSettings) -> Result<OosResult> {
    let index = problem.index();
    if !index.is_augmented() {
        return Err(Error::InvalidParameter("out-of-sample embedding needs an augmented problem".into()));
    }
    let inner = 2 * index.objects();
    if insample.len() != inner {
        return Err(Error::SizeMismatch { expected: inner, found: insample.len() });
    }
    check_finite(insample)?;
    let targets = problem.targets();
    let weights = problem.weights();
    let border = (0..2)
        .map(|k| {
            let r = inner + k;
            (0..inner)
                .map(|j| {
                    let w = weights.get(r, j);
                    (if w > 0.0 { targets.value(r, j) } else { f64::NAN }, w)
                })
                .collect()
        })
        .collect();
    let mut restricted = RestrictedProblem::new(insample, border)?;
    let w = weights.get(inner, inner + 1);
    if w > 0.0 {
        restricted.couple(0, 1, targets.value(inner, inner + 1), w)?;
    }
    let (points, trace) = restricted.solve(settings)?;
    Ok(finish(points, trace))
}

/// Same as [`oos_embed`] on `augment_for_oos(problem, d1, d2)`, without
/// materializing the augmented matrices.
pub fn embed_test_pair(
    insample: &Configuration,
    problem: &OmnibusProblem,
    d1: &[f64],
    d2: &[f64],
    settings: &SolverSettings,
) -> Result<OosResult> {
    if problem.index().is_augmented() {
        return Err(Error::InvalidParameter("problem is already augmented".into()));
    }
    let inner = 2 * problem.objects();
    if insample.len() != inner {
        return Err(Error::SizeMismatch { expected: inner, found: insample.len() });
    }
    check_finite(insample)?;
    let border = oos_border(problem, d1, d2)?
        .into_iter()
        .map(|row| row.into_iter().map(|(t, w)| (t.unwrap_or(f64::NAN), w)).collect())
        .collect();
    let (points, trace) = RestrictedProblem::new(insample, border)?.solve(settings)?;
    Ok(finish(points, trace))
}

/// Fixed-configuration embedding followed by a joint SMACOF refinement of
/// all `2n + 2` rows. The in-sample rows move too.
pub fn oos_embed_joint(
    insample: &Configuration,
    problem: &OmnibusProblem,
    settings: &SolverSettings,
) -> Result<OosResult> {
    let fixed = oos_embed(insample, problem, settings)?;
    let inner = insample.len();
    let d = insample.dim();
    let mut start = insample.points().clone().resize_vertically(inner + 2, 0.0);
    for k in 0..d {
        start[(inner, k)] = fixed.y1[k];
        start[(inner + 1, k)] = fixed.y2[k];
    }
    let joint = SolverSettings { init: Init::Given(Configuration::new(start)?), ..settings.clone() };
    let solved = smacof(problem.targets(), problem.weights(), d, &joint)?;
    let x = &solved.configuration;
    Ok(finish(vec![x.point(inner), x.point(inner + 1)], solved.stress_trace))
}

/// Restricted stress of placing single point `y` against `fixed`.
pub fn point_stress(fixed: &Configuration, targets: &[f64], weights: &[f64], y: &[f64]) -> f64 {
    let y = DVector::from_column_slice(y);
    (0..fixed.len())
        .filter(|&j| weights[j] > 0.0)
        .map(|j| {
            let dist = (fixed.points().row(j).transpose() - &y).norm();
            weights[j] * (dist - targets[j]).powi(2)
        })
        .sum()
}
