//! Match-detection evaluation: ROC curves, power, AUC and `w` sweeps.
//!
//! Large statistics reject the matched hypothesis. The rejection threshold at
//! level `alpha` is the right-continuous empirical quantile
//! `inf { x : F_n(x) > 1 - alpha }` of the matched sample, i.e. the order
//! statistic `x_(floor(n (1 - alpha)) + 1)`, and rejection means strictly
//! above it.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Test statistics under both hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct TestStatisticSample {
    matched: Vec<f64>,
    unmatched: Vec<f64>,
}

impl TestStatisticSample {
    pub fn new(matched: Vec<f64>, unmatched: Vec<f64>) -> Result<Self> {
        for (k, v) in matched.iter().chain(unmatched.iter()).enumerate() {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "test statistic #{k} = {v} is not a finite nonnegative value"
                )));
            }
        }
        Ok(Self { matched, unmatched })
    }

    pub fn matched(&self) -> &[f64] {
        &self.matched
    }

    pub fn unmatched(&self) -> &[f64] {
        &self.unmatched
    }

    /// The same sample with the hypothesis labels exchanged.
    pub fn swapped(&self) -> Self {
        Self { matched: self.unmatched.clone(), unmatched: self.matched.clone() }
    }

    fn require_both(&self) -> Result<()> {
        if self.matched.is_empty() || self.unmatched.is_empty() {
            Err(Error::EmptySample)
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// Fraction of matched statistics above the threshold.
    pub alpha: f64,
    /// Fraction of unmatched statistics above the threshold.
    pub beta: f64,
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Number of entries of sorted `values` strictly greater than `t`.
fn count_above(values: &[f64], t: f64) -> usize {
    values.len() - values.partition_point(|&v| v <= t)
}

/// Empirical ROC, one point per distinct threshold plus `(1, 1)`, ordered by
/// increasing `alpha` then `beta`.
pub fn roc_curve(sample: &TestStatisticSample) -> Result<Vec<RocPoint>> {
    sample.require_both()?;
    let m = sorted(&sample.matched);
    let u = sorted(&sample.unmatched);
    let (nm, nu) = (m.len() as f64, u.len() as f64);
    let mut thresholds: Vec<f64> = m.iter().chain(u.iter()).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let mut points = vec![RocPoint { alpha: 1.0, beta: 1.0 }];
    for &t in &thresholds {
        points.push(RocPoint { alpha: count_above(&m, t) as f64 / nm, beta: count_above(&u, t) as f64 / nu });
    }
    points.reverse();
    Ok(points)
}

/// Trapezoidal area under an ROC curve ordered as by [`roc_curve`].
pub fn trapezoid_area(curve: &[RocPoint]) -> f64 {
    curve.windows(2).map(|p| (p[1].alpha - p[0].alpha) * 0.5 * (p[0].beta + p[1].beta)).sum()
}

/// Concordance `P[T_unmatched > T_matched]`, ties counting one half.
pub fn empirical_auc(sample: &TestStatisticSample) -> Result<f64> {
    sample.require_both()?;
    let m = sorted(&sample.matched);
    let mut twice_concordant: u64 = 0;
    for &u in &sample.unmatched {
        let below = m.partition_point(|&v| v < u);
        let tied = m.partition_point(|&v| v <= u) - below;
        twice_concordant += 2 * below as u64 + tied as u64;
    }
    Ok(twice_concordant as f64 / (2.0 * m.len() as f64 * sample.unmatched.len() as f64))
}

/// Rejection threshold: right-continuous `(1 - alpha)` empirical quantile of
/// sorted `values`.
fn quantile_threshold(sorted_values: &[f64], alpha: f64) -> f64 {
    let n = sorted_values.len();
    // the small offset keeps n * (1 - alpha) from rounding below an integer
    let k = ((n as f64) * (1.0 - alpha) + 1e-9).floor() as usize + 1;
    sorted_values[k.clamp(1, n) - 1]
}

/// Fraction of unmatched statistics strictly above the matched
/// `(1 - alpha)` quantile.
pub fn power_at_alpha(sample: &TestStatisticSample, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    sample.require_both()?;
    let threshold = quantile_threshold(&sorted(&sample.matched), alpha);
    Ok(count_above(&sorted(&sample.unmatched), threshold) as f64 / sample.unmatched.len() as f64)
}

/// Critical value from a bootstrap null distribution of the statistic.
pub fn bootstrap_critical_value(matched_taus: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    if matched_taus.is_empty() {
        return Err(Error::EmptySample);
    }
    if matched_taus.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite bootstrap statistic".into()));
    }
    Ok(quantile_threshold(&sorted(matched_taus), alpha))
}

/// `points` evenly spaced levels from 0 to 1 inclusive.
pub fn alpha_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points).map(|k| k as f64 / (points - 1) as f64).collect(),
    }
}

/// Outcome of one (replicate, w) cell of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub replicate: usize,
    pub w: f64,
    pub auc: f64,
    /// Power at each level of the sweep's alpha grid.
    pub power: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WSweepResult {
    pub grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    /// `auc[replicate][k]` for grid value `k`.
    pub auc: Vec<Vec<f64>>,
    pub auc_mean: Vec<f64>,
    /// Sample standard deviation over replicates.
    pub auc_sd: Vec<f64>,
    /// Standard error of the mean, `sd / sqrt(replicates)`.
    pub auc_se: Vec<f64>,
    /// `power_mean[k][a]`: mean power at grid value `k`, level `alpha_grid[a]`.
    pub power_mean: Vec<Vec<f64>>,
    pub w_star_estimate: f64,
    /// How often each grid value was a replicate's argmax.
    pub argmax_counts: Vec<usize>,
}

impl WSweepResult {
    pub fn replicates(&self) -> usize {
        self.auc.len()
    }

    /// Per-replicate AUC at grid value `w` (exact match).
    pub fn auc_at(&self, w: f64) -> Option<Vec<f64>> {
        let k = self.grid.iter().position(|&g| g == w)?;
        Some(self.auc.iter().map(|row| row[k]).collect())
    }

    pub fn mean_at(&self, w: f64) -> Option<f64> {
        let k = self.grid.iter().position(|&g| g == w)?;
        Some(self.auc_mean[k])
    }
}

/// First index of the maximum; earlier entries win ties.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = k;
        }
    }
    best
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty w grid".into()));
    }
    if let Some(w) = grid.iter().find(|&&w| !(w > 0.0 && w < 1.0)) {
        return Err(Error::WOutOfRange(*w));
    }
    if grid.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::InvalidParameter("w grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Runs `pipeline(w, replicate)` for every cell. Results come back ordered
/// by (replicate, w) regardless of scheduling.
pub fn run_sweep_cells<F>(grid: &[f64], replicates: usize, alphas: &[f64], pipeline: F) -> Vec<Result<CellResult>>
where
    F: Fn(f64, usize) -> Result<TestStatisticSample> + Sync,
{
    let cells: Vec<(usize, f64)> = (0..replicates).flat_map(|r| grid.iter().map(move |&w| (r, w))).collect();
    cells
        .par_iter()
        .map(|&(replicate, w)| {
            let wrap = |e: Error| Error::Replicate { w, replicate, source: Box::new(e) };
            let sample = pipeline(w, replicate).map_err(wrap)?;
            let auc = empirical_auc(&sample).map_err(wrap)?;
            let power = alphas.iter().map(|&a| power_at_alpha(&sample, a)).collect::<Result<Vec<_>>>().map_err(wrap)?;
            Ok(CellResult { replicate, w, auc, power })
        })
        .collect()
}

/// Aggregates complete cell results (ordered by replicate, then w).
pub fn aggregate_sweep(grid: &[f64], alphas: &[f64], cells: &[CellResult]) -> Result<WSweepResult> {
    let g = grid.len();
    if g == 0 || cells.is_empty() || !cells.len().is_multiple_of(g) {
        return Err(Error::InvalidParameter("incomplete sweep".into()));
    }
    let replicates = cells.len() / g;
    let auc: Vec<Vec<f64>> = cells.chunks(g).map(|row| row.iter().map(|c| c.auc).collect()).collect();
    let r = replicates as f64;
    let auc_mean: Vec<f64> = (0..g).map(|k| auc.iter().map(|row| row[k]).sum::<f64>() / r).collect();
    let auc_sd: Vec<f64> = (0..g)
        .map(|k| {
            if replicates < 2 {
                return 0.0;
            }
            let ss: f64 = auc.iter().map(|row| (row[k] - auc_mean[k]).powi(2)).sum();
            (ss / (r - 1.0)).sqrt()
        })
        .collect();
    let auc_se = auc_sd.iter().map(|sd| sd / r.sqrt()).collect();
    let power_mean = (0..g)
        .map(|k| (0..alphas.len()).map(|a| cells.chunks(g).map(|row| row[k].power[a]).sum::<f64>() / r).collect())
        .collect();
    let mut argmax_counts = vec![0; g];
    for row in &auc {
        argmax_counts[argmax(row)] += 1;
    }
    Ok(WSweepResult {
        grid: grid.to_vec(),
        alpha_grid: alphas.to_vec(),
        w_star_estimate: grid[argmax(&auc_mean)],
        auc,
        auc_mean,
        auc_sd,
        auc_se,
        power_mean,
        argmax_counts,
    })
}

/// Paired sweep of AUC over a `w` grid. The pipeline must derive its data
/// from the replicate index alone so every `w` sees the same draws.
pub fn sweep_w<F>(grid: &[f64], replicates: usize, alphas: &[f64], pipeline: F) -> Result<WSweepResult>
where
    F: Fn(f64, usize) -> Result<TestStatisticSample> + Sync,
{
    validate_grid(grid)?;
    if replicates == 0 {
        return Err(Error::InvalidParameter("at least one replicate is required".into()));
    }
    if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::AlphaOutOfRange(*a));
    }
    let cells = run_sweep_cells(grid, replicates, alphas, pipeline).into_iter().collect::<Result<Vec<_>>>()?;
    aggregate_sweep(grid, alphas, &cells)
}

/// Paired one-sided sign test of `larger > smaller`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignTest {
    pub positive: usize,
    pub negative: usize,
    pub ties: usize,
    /// `P[Binomial(positive + negative, 1/2) >= positive]`.
    pub p_value: f64,
}

pub fn sign_test_greater(larger: &[f64], smaller: &[f64]) -> Result<SignTest> {
    if larger.len() != smaller.len() {
        return Err(Error::LengthMismatch { expected: larger.len(), found: smaller.len() });
    }
    let (mut positive, mut negative, mut ties) = (0, 0, 0);
    for (a, b) in larger.iter().zip(smaller) {
        match a.partial_cmp(b) {
            Some(std::cmp::Ordering::Greater) => positive += 1,
            Some(std::cmp::Ordering::Less) => negative += 1,
            _ => ties += 1,
        }
    }
    let n = positive + negative;
    // log C(n, k) accumulated incrementally
    let mut log_choose = 0.0f64;
    let mut tail = 0.0;
    for k in 0..=n {
        if k > 0 {
            log_choose += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        if k >= positive {
            tail += (log_choose - n as f64 * std::f64::consts::LN_2).exp();
        }
    }
    Ok(SignTest { positive, negative, ties, p_value: tail.min(1.0) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(m: &[f64], u: &[f64]) -> TestStatisticSample {
        TestStatisticSample::new(m.to_vec(), u.to_vec()).unwrap()
    }

    fn has_point(curve: &[RocPoint], alpha: f64, beta: f64) -> bool {
        curve.iter().any(|p| p.alpha == alpha && p.beta == beta)
    }

    #[test]
    fn roc_examples() {
        let curve = roc_curve(&sample(&[1.0, 2.0], &[3.0, 4.0])).unwrap();
        assert!(has_point(&curve, 0.0, 1.0));
        assert!(has_point(&curve, 1.0, 1.0));
        assert!(curve.windows(2).all(|p| p[1].alpha >= p[0].alpha));

        // hand enumeration of thresholds 1, 1.5, 2, 3
        let curve = roc_curve(&sample(&[1.0, 2.0], &[1.5, 3.0])).unwrap();
        let expect = [(0.0, 0.0), (0.0, 0.5), (0.5, 0.5), (0.5, 1.0), (1.0, 1.0)];
        assert_eq!(curve.len(), expect.len());
        for (p, (a, b)) in curve.iter().zip(expect) {
            assert_eq!((p.alpha, p.beta), (a, b));
        }

        let same = [0.3, 0.1, 0.7, 0.2];
        let curve = roc_curve(&sample(&same, &same)).unwrap();
        assert!(curve.iter().all(|p| p.alpha == p.beta));
    }

    #[test]
    fn auc_examples() {
        assert_eq!(empirical_auc(&sample(&[1.0, 2.0], &[3.0, 4.0])).unwrap(), 1.0);
        assert_eq!(empirical_auc(&sample(&[1.0, 2.0], &[1.5, 3.0])).unwrap(), 0.75);
        assert_eq!(empirical_auc(&sample(&[1.0], &[1.0])).unwrap(), 0.5);
        assert!(matches!(empirical_auc(&sample(&[], &[1.0])), Err(Error::EmptySample)));
        assert!(roc_curve(&sample(&[1.0], &[])).is_err());
    }

    #[test]
    fn power_examples() {
        let s = sample(&[1.0, 2.0, 2.0, 5.0], &[1.0, 2.0, 3.0, 6.0]);
        // alpha = 1: threshold is the matched minimum
        assert_eq!(power_at_alpha(&s, 1.0).unwrap(), 0.75);
        assert_eq!(power_at_alpha(&sample(&[1.0, 2.0], &[3.0, 4.0]), 0.05).unwrap(), 1.0);

        let matched: Vec<f64> = (1..=100).map(f64::from).collect();
        let unmatched: Vec<f64> = matched.iter().map(|v| v + 50.0).collect();
        // threshold is the 96th order statistic, 96; unmatched 97..=150 exceed it
        assert_eq!(power_at_alpha(&sample(&matched, &unmatched), 0.05).unwrap(), 0.54);
        assert!(matches!(power_at_alpha(&s, 1.5), Err(Error::AlphaOutOfRange(_))));
    }

    #[test]
    fn bootstrap_examples() {
        let taus: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(bootstrap_critical_value(&taus, 0.05).unwrap(), 96.0);
        assert_eq!(bootstrap_critical_value(&[2.5; 7], 0.3).unwrap(), 2.5);
        assert_eq!(bootstrap_critical_value(&taus, 1e-9).unwrap(), 100.0);
        assert!(bootstrap_critical_value(&[], 0.05).is_err());
        assert!(bootstrap_critical_value(&taus, 0.0).is_err());
    }

    #[test]
    fn sweep_with_identical_samples_is_flat() {
        let grid = [0.2, 0.5, 0.8];
        let r = sweep_w(&grid, 3, &alpha_grid(5), |_, rep| {
            TestStatisticSample::new(vec![1.0, 2.0 + rep as f64], vec![1.5, 3.0])
        })
        .unwrap();
        assert!(r.auc_mean.iter().all(|&m| m == r.auc_mean[0]));
        assert_eq!(r.w_star_estimate, 0.2);
        assert_eq!(r.argmax_counts, vec![3, 0, 0]);
    }

    #[test]
    fn sweep_picks_the_separating_w() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        // shift 2 sigma at w = 0.8 against 0.5 sigma at w = 0.3:
        // AUC = Phi(shift / sqrt 2) = 0.9214 versus 0.6382
        let r = sweep_w(&[0.3, 0.8], 20, &[0.05], |w, rep| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(rep as u64);
            let shift = if w > 0.5 { 2.0 } else { 0.5 };
            let n = Normal::new(10.0, 1.0).unwrap();
            let m: Vec<f64> = (0..200).map(|_| n.sample(&mut rng)).collect();
            let u: Vec<f64> = (0..200).map(|_| n.sample(&mut rng) + shift).collect();
            TestStatisticSample::new(m, u)
        })
        .unwrap();
        assert_eq!(r.w_star_estimate, 0.8);
        assert!((r.auc_mean[1] - 0.9214).abs() < 0.03);
        assert!((r.auc_mean[0] - 0.6382).abs() < 0.04);
    }

    #[test]
    fn sweep_reports_failing_cell() {
        let err = sweep_w(&[0.2, 0.5], 4, &[], |w, rep| {
            if rep == 2 && w == 0.5 {
                Err(Error::EmptySample)
            } else {
                TestStatisticSample::new(vec![1.0], vec![2.0])
            }
        })
        .unwrap_err();
        assert!(matches!(err, Error::Replicate { replicate: 2, w, .. } if w == 0.5));
        assert!(sweep_w(&[0.5, 0.2], 1, &[], |_, _| TestStatisticSample::new(vec![1.0], vec![2.0])).is_err());
        assert!(sweep_w(&[0.0], 1, &[], |_, _| TestStatisticSample::new(vec![1.0], vec![2.0])).is_err());
    }

    #[test]
    fn sign_test_small_cases() {
        let t = sign_test_greater(&[2.0, 3.0, 4.0, 1.0], &[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!((t.positive, t.negative, t.ties), (3, 0, 1));
        assert!((t.p_value - 0.125).abs() < 1e-12);
        let t = sign_test_greater(&[0.0; 5], &[1.0; 5]).unwrap();
        assert!((t.p_value - 1.0).abs() < 1e-12);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        // integer-valued draws make ties likely; the distinct case dedups them
        fn values() -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(0u32..40, 1..30).prop_map(|v| v.into_iter().map(f64::from).collect())
        }

        proptest! {
            #[test]
            fn trapezoid_matches_mann_whitney(m in values(), u in values()) {
                let s = sample(&m, &u);
                let area = trapezoid_area(&roc_curve(&s).unwrap());
                prop_assert!((area - empirical_auc(&s).unwrap()).abs() < 1e-12);
            }

            #[test]
            fn swapping_labels_complements_auc(m in values(), u in values()) {
                let s = sample(&m, &u);
                let a = empirical_auc(&s).unwrap();
                let b = empirical_auc(&s.swapped()).unwrap();
                prop_assert!((a + b - 1.0).abs() < 1e-12);
            }

            #[test]
            fn auc_ignores_monotone_transforms(m in values(), u in values()) {
                let s = sample(&m, &u);
                let f = |v: &[f64]| v.iter().map(|x| (x + 1.0).ln() * 3.0 + 0.5).collect::<Vec<_>>();
                let t = sample(&f(&m), &f(&u));
                prop_assert!((empirical_auc(&s).unwrap() - empirical_auc(&t).unwrap()).abs() < 1e-12);
            }

            #[test]
            fn power_is_monotone_in_alpha(m in values(), u in values(), a in 0.0..1.0f64, b in 0.0..1.0f64) {
                let s = sample(&m, &u);
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(power_at_alpha(&s, lo).unwrap() <= power_at_alpha(&s, hi).unwrap());
            }

            #[test]
            fn size_never_exceeds_alpha(m in values(), a in 0.01..0.99f64) {
                let critical = bootstrap_critical_value(&m, a).unwrap();
                let above = m.iter().filter(|&&x| x > critical).count() as f64;
                prop_assert!(above / m.len() as f64 <= a + 1e-12);
            }
        }
    }
}
