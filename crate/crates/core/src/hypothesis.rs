//! Permutation-calibrated two-sample and independence tests.
//!
//! The null distribution is built from `P` random relabellings. For the
//! two-sample test all `m + n` rows are pooled and split at random into
//! groups of sizes `(m, n)`; for the independence test only the rows of `Y`
//! are permuted. Kernel matrices are computed once and reindexed for every
//! permutation.
//!
//! The threshold is the `⌈(1 − α)·P⌉`-th smallest null value (1-indexed) and
//! the p-value is `(1 + #{null ≥ observed}) / (P + 1)`. Permutation `p` draws
//! from its own substream of the seed, so the null sample is the same
//! whether permutations run sequentially or in parallel.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma};

use crate::error::{Error, Result};
use crate::estimators::StatisticKind;
use crate::kernels::{self, KernelConfig};
use crate::panel::SamplePanel;
use crate::rng::{substream, StreamRng};

/// Smallest permutation count accepted for permutation calibration.
pub const MIN_PERMUTATIONS: usize = 100;
/// Pilot permutations used to estimate null moments for the Gamma fit.
pub const DEFAULT_GAMMA_PILOT: usize = 200;

const PERMUTATION_STREAM: u64 = 0x5045_524d;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NullMethod {
    Permutation,
    GammaApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub alpha: f64,
    pub permutations: usize,
    pub seed: u64,
    pub null_method: NullMethod,
    #[serde(default = "default_pilot")]
    pub gamma_pilot: usize,
}

fn default_pilot() -> usize {
    DEFAULT_GAMMA_PILOT
}

impl TestConfig {
    pub fn new(alpha: f64, permutations: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            alpha,
            permutations,
            seed,
            null_method: NullMethod::Permutation,
            gamma_pilot: DEFAULT_GAMMA_PILOT,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn gamma(alpha: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            alpha,
            permutations: DEFAULT_GAMMA_PILOT,
            seed,
            null_method: NullMethod::GammaApprox,
            gamma_pilot: DEFAULT_GAMMA_PILOT,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        match self.null_method {
            NullMethod::Permutation if self.permutations < MIN_PERMUTATIONS => {
                Err(Error::Config(format!(
                    "at least {MIN_PERMUTATIONS} permutations are required, got {}",
                    self.permutations
                )))
            }
            NullMethod::GammaApprox if self.gamma_pilot < 2 => {
                Err(Error::Config("Gamma pilot needs at least 2 permutations".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub statistic_kind: StatisticKind,
    pub threshold: f64,
    pub p_value: f64,
    pub reject: bool,
    /// Set when the threshold comes from the Gamma approximation.
    pub approximate: bool,
    /// Resolved kernel bandwidths (one for MMD, `σ_X` then `σ_Y` for HSIC).
    pub bandwidths: Vec<f64>,
    pub null_samples: Option<Vec<f64>>,
    pub config: TestConfig,
}

/// 1-indexed rank, in ascending order, of the null value used as threshold.
pub fn threshold_index(alpha: f64, permutations: usize) -> usize {
    let raw = (1.0 - alpha) * permutations as f64;
    // absorb representation error such as 0.95 * 5000 = 4750.000000000001
    let idx = (raw - 1e-9 * raw.max(1.0)).ceil() as usize;
    idx.clamp(1, permutations)
}

/// Threshold `ĉ_α` from a null sample.
pub fn permutation_threshold(null: &[f64], alpha: f64) -> f64 {
    let mut sorted = null.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[threshold_index(alpha, sorted.len()) - 1]
}

/// Add-one permutation p-value; ties count as exceedances.
pub fn permutation_p_value(null: &[f64], observed: f64) -> f64 {
    let exceed = null.iter().filter(|&&v| v >= observed).count();
    (1 + exceed) as f64 / (null.len() + 1) as f64
}

/// Evaluate `stat` on `count` permutation substreams of `seed`.
pub(crate) fn null_sample<F>(seed: u64, count: usize, stat: F) -> Vec<f64>
where
    F: Fn(&mut StreamRng) -> f64 + Sync,
{
    (0..count)
        .into_par_iter()
        .map(|p| stat(&mut substream(seed, &[PERMUTATION_STREAM, p as u64])))
        .collect()
}

pub(crate) fn permutation_result(
    observed: f64,
    kind: StatisticKind,
    null: Vec<f64>,
    bandwidths: Vec<f64>,
    config: TestConfig,
) -> TestResult {
    let threshold = permutation_threshold(&null, config.alpha);
    TestResult {
        statistic: observed,
        statistic_kind: kind,
        threshold,
        p_value: permutation_p_value(&null, observed),
        reject: observed > threshold,
        approximate: false,
        bandwidths,
        null_samples: Some(null),
        config,
    }
}

/// `(1 − α)`-quantile of the Gamma distribution whose mean and variance
/// match the given null moments.
pub fn gamma_null_approx(mean: f64, variance: f64, alpha: f64) -> Result<f64> {
    if !(mean > 0.0 && mean.is_finite() && variance > 0.0 && variance.is_finite()) {
        return Err(Error::DegenerateNull(format!(
            "Gamma fit needs positive finite moments, got mean {mean}, variance {variance}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let dist = gamma_from_moments(mean, variance)?;
    Ok(dist.inverse_cdf(1.0 - alpha))
}

fn gamma_from_moments(mean: f64, variance: f64) -> Result<Gamma> {
    let shape = mean * mean / variance;
    let rate = mean / variance;
    Gamma::new(shape, rate).map_err(|e| Error::DegenerateNull(format!("Gamma fit: {e}")))
}

fn gamma_result(
    observed: f64,
    kind: StatisticKind,
    pilot: Vec<f64>,
    bandwidths: Vec<f64>,
    config: TestConfig,
) -> Result<TestResult> {
    let n = pilot.len() as f64;
    let mean = pilot.iter().sum::<f64>() / n;
    let var = pilot.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let threshold = gamma_null_approx(mean, var, config.alpha)?;
    let p_value = 1.0 - gamma_from_moments(mean, var)?.cdf(observed.max(0.0));
    Ok(TestResult {
        statistic: observed,
        statistic_kind: kind,
        threshold,
        p_value: p_value.clamp(0.0, 1.0),
        reject: observed > threshold,
        approximate: true,
        bandwidths,
        null_samples: Some(pilot),
        config,
    })
}

/// Kernel matrix over the pooled rows of `X ∪ Y`, from which the MMD
/// statistic of any relabelling is read off without new kernel evaluations.
pub struct PooledGram {
    g: Array2<f64>,
    m: usize,
    n: usize,
    total: f64,
    trace: f64,
    col_sums: Vec<f64>,
}

impl PooledGram {
    /// `x` and `y` must share the grid length; the bandwidth is already
    /// resolved.
    pub fn new(x: &SamplePanel, y: &SamplePanel, sigma: f64) -> Result<Self> {
        if x.time_points() != y.time_points() {
            return Err(Error::DimensionMismatch {
                what: "time points",
                left: x.time_points(),
                right: y.time_points(),
            });
        }
        let (m, n) = (x.realisations(), y.realisations());
        let mut pooled = Array2::zeros((m + n, x.time_points()));
        pooled.slice_mut(ndarray::s![..m, ..]).assign(&x.values());
        pooled.slice_mut(ndarray::s![m.., ..]).assign(&y.values());
        let pooled = SamplePanel::new(pooled, x.grid().to_vec())?;
        let g = kernels::gram_with_sigma(&pooled, sigma)?.into_entries();
        Ok(Self::from_gram(g, m, n))
    }

    pub fn from_gram(g: Array2<f64>, m: usize, n: usize) -> Self {
        assert_eq!(g.nrows(), m + n);
        let col_sums: Vec<f64> = (0..m + n).map(|j| g.column(j).sum()).collect();
        let total = col_sums.iter().sum();
        let trace = g.diag().sum();
        Self {
            g,
            m,
            n,
            total,
            trace,
            col_sums,
        }
    }

    pub fn gram(&self) -> ArrayView2<'_, f64> {
        self.g.view()
    }

    /// Sums for the group `a` (sorted pooled indices): within-group sum
    /// including the diagonal, cross sum to the complement, and the group's
    /// diagonal sum.
    fn group_sums(&self, a: &[usize]) -> (f64, f64, f64) {
        let g = self.g.as_slice().expect("standard layout");
        let width = self.m + self.n;
        let mut within = 0.0;
        let mut diag = 0.0;
        for &i in a {
            let row = &g[i * width..(i + 1) * width];
            within += a.iter().map(|&j| row[j]).sum::<f64>();
            diag += row[i];
        }
        let col: f64 = a.iter().map(|&j| self.col_sums[j]).sum();
        (within, col - within, diag)
    }

    /// Unbiased MMD² when the pooled rows `x_idx` form the first sample and
    /// the rest form the second.
    pub fn mmd2_u_for_split(&self, x_idx: &[usize]) -> f64 {
        self.split_stat(x_idx, false)
    }

    /// Biased (V-statistic) MMD² for the same relabelling.
    pub fn mmd2_b_for_split(&self, x_idx: &[usize]) -> f64 {
        self.split_stat(x_idx, true)
    }

    fn split_stat(&self, x_idx: &[usize], biased: bool) -> f64 {
        debug_assert_eq!(x_idx.len(), self.m);
        let mut in_x = vec![false; self.m + self.n];
        for &i in x_idx {
            in_x[i] = true;
        }
        // Gather over the smaller group; MMD² is symmetric in the two samples.
        let (small, a, b): (Vec<usize>, f64, f64) = if self.m <= self.n {
            let v = (0..self.m + self.n).filter(|&i| in_x[i]).collect();
            (v, self.m as f64, self.n as f64)
        } else {
            let v = (0..self.m + self.n).filter(|&i| !in_x[i]).collect();
            (v, self.n as f64, self.m as f64)
        };
        let (saa, sab, da) = self.group_sums(&small);
        let sbb = self.total - saa - 2.0 * sab;
        let db = self.trace - da;
        if biased {
            saa / (a * a) + sbb / (b * b) - 2.0 * sab / (a * b)
        } else {
            (saa - da) / (a * (a - 1.0)) + (sbb - db) / (b * (b - 1.0)) - 2.0 * sab / (a * b)
        }
    }

    pub(crate) fn random_split(&self, rng: &mut StreamRng) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.m + self.n).collect();
        idx.shuffle(rng);
        let mut x = idx[..self.m].to_vec();
        x.sort_unstable();
        x
    }
}

/// Kernel matrices of an independence problem, from which HSIC under any
/// permutation of the `Y` rows is read off by reindexing.
pub struct PairedGrams {
    m: usize,
    k: Array2<f64>,
    l: Array2<f64>,
    row_k: Vec<f64>,
    row_l: Vec<f64>,
    sum_k: f64,
    sum_l: f64,
}

impl PairedGrams {
    pub fn new(k: Array2<f64>, l: Array2<f64>) -> Self {
        let m = k.nrows();
        assert_eq!(l.nrows(), m);
        let mut k = k;
        let mut l = l;
        for i in 0..m {
            k[[i, i]] = 0.0;
            l[[i, i]] = 0.0;
        }
        let row_k: Vec<f64> = k.rows().into_iter().map(|r| r.sum()).collect();
        let row_l: Vec<f64> = l.rows().into_iter().map(|r| r.sum()).collect();
        let sum_k = row_k.iter().sum();
        let sum_l = row_l.iter().sum();
        Self {
            m,
            k,
            l,
            row_k,
            row_l,
            sum_k,
            sum_l,
        }
    }

    /// Unbiased HSIC between `X` and `Y` with its rows reordered so that row
    /// `i` of the permuted panel is row `perm[i]` of `Y`.
    pub fn hsic_u_permuted(&self, perm: &[usize]) -> f64 {
        let m = self.m;
        let k = self.k.as_slice().expect("standard layout");
        let l = self.l.as_slice().expect("standard layout");
        let mut trace = 0.0;
        for i in 0..m {
            let krow = &k[i * m..(i + 1) * m];
            let lrow = &l[perm[i] * m..(perm[i] + 1) * m];
            trace += krow[i + 1..]
                .iter()
                .zip(&perm[i + 1..])
                .map(|(kv, &pj)| kv * lrow[pj])
                .sum::<f64>();
        }
        let trace = 2.0 * trace;
        let ab: f64 = (0..m).map(|i| self.row_k[i] * self.row_l[perm[i]]).sum();
        let mf = m as f64;
        (trace + self.sum_k * self.sum_l / ((mf - 1.0) * (mf - 2.0)) - 2.0 / (mf - 2.0) * ab)
            / (mf * (mf - 3.0))
    }

    pub(crate) fn identity(&self) -> Vec<usize> {
        (0..self.m).collect()
    }
}

/// Biased HSIC `tr(K H L H) / m²` under row permutations of `Y`.
struct BiasedHsic {
    m: usize,
    kc: Array2<f64>,
    l: Array2<f64>,
}

impl BiasedHsic {
    fn new(k: &Array2<f64>, l: Array2<f64>) -> Self {
        let m = k.nrows();
        let row_means: Vec<f64> = k.rows().into_iter().map(|r| r.mean().unwrap()).collect();
        let grand = row_means.iter().sum::<f64>() / m as f64;
        let kc = Array2::from_shape_fn((m, m), |(i, j)| {
            k[[i, j]] - row_means[i] - row_means[j] + grand
        });
        Self { m, kc, l }
    }

    fn value(&self, perm: &[usize]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.m {
            for j in 0..self.m {
                s += self.kc[[i, j]] * self.l[[perm[i], perm[j]]];
            }
        }
        s / (self.m * self.m) as f64
    }
}

/// Two-sample test of `P_X = P_Y` with the unbiased MMD² statistic. A median
/// rule is resolved on the pooled rows.
pub fn mmd_two_sample_test(
    x: &SamplePanel,
    y: &SamplePanel,
    kernel: &KernelConfig,
    config: &TestConfig,
) -> Result<TestResult> {
    config.validate()?;
    if x.time_points() != y.time_points() {
        return Err(Error::DimensionMismatch {
            what: "time points",
            left: x.time_points(),
            right: y.time_points(),
        });
    }
    if x.realisations() < 2 || y.realisations() < 2 {
        return Err(Error::SampleSize(
            "MMD test needs at least two realisations per sample".into(),
        ));
    }
    let sigma = kernel.resolve_pooled(x, y)?;
    let pooled = PooledGram::new(x, y, sigma)?;
    let observed_idx: Vec<usize> = (0..x.realisations()).collect();
    let cfg = *config;
    match config.null_method {
        NullMethod::Permutation => {
            let observed = pooled.mmd2_u_for_split(&observed_idx);
            let null = null_sample(cfg.seed, cfg.permutations, |rng| {
                pooled.mmd2_u_for_split(&pooled.random_split(rng))
            });
            Ok(permutation_result(observed, StatisticKind::Mmd2U, null, vec![sigma], cfg))
        }
        NullMethod::GammaApprox => {
            let observed = pooled.mmd2_b_for_split(&observed_idx);
            let pilot = null_sample(cfg.seed, cfg.gamma_pilot, |rng| {
                pooled.mmd2_b_for_split(&pooled.random_split(rng))
            });
            gamma_result(observed, StatisticKind::Mmd2B, pilot, vec![sigma], cfg)
        }
    }
}

/// Independence test of `P_XY = P_X P_Y` with the unbiased HSIC statistic.
/// Each kernel's median rule is resolved on its own panel.
pub fn hsic_independence_test(
    x: &SamplePanel,
    y: &SamplePanel,
    kernel_x: &KernelConfig,
    kernel_y: &KernelConfig,
    config: &TestConfig,
) -> Result<TestResult> {
    config.validate()?;
    let m = x.realisations();
    if m != y.realisations() {
        return Err(Error::SampleSizeMismatch {
            left: m,
            right: y.realisations(),
        });
    }
    if m < 4 {
        return Err(Error::SampleSize(format!(
            "HSIC test needs at least 4 paired realisations, got {m}"
        )));
    }
    let sx = kernel_x.resolve(x)?;
    let sy = kernel_y.resolve(y)?;
    let k = kernels::gram_with_sigma(x, sx)?.into_entries();
    let l = kernels::gram_with_sigma(y, sy)?.into_entries();
    let cfg = *config;
    let shuffled = |rng: &mut StreamRng| {
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(rng);
        perm
    };
    match config.null_method {
        NullMethod::Permutation => {
            let grams = PairedGrams::new(k, l);
            let observed = grams.hsic_u_permuted(&grams.identity());
            let null = null_sample(cfg.seed, cfg.permutations, |rng| {
                grams.hsic_u_permuted(&shuffled(rng))
            });
            Ok(permutation_result(observed, StatisticKind::HsicU, null, vec![sx, sy], cfg))
        }
        NullMethod::GammaApprox => {
            let b = BiasedHsic::new(&k, l);
            let identity: Vec<usize> = (0..m).collect();
            let observed = b.value(&identity);
            let pilot = null_sample(cfg.seed, cfg.gamma_pilot, |rng| b.value(&shuffled(rng)));
            gamma_result(observed, StatisticKind::HsicB, pilot, vec![sx, sy], cfg)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators;
    use approx::assert_relative_eq;

    #[test]
    fn threshold_index_arithmetic() {
        assert_eq!(threshold_index(0.05, 5000), 4750);
        assert_eq!(threshold_index(0.05, 500), 475);
        assert_eq!(threshold_index(0.05, 100), 95);
        assert_eq!(threshold_index(0.01, 1000), 990);
        assert_eq!(threshold_index(0.999, 100), 1);
        assert_eq!(threshold_index(0.3, 7), 5);
    }

    #[test]
    fn threshold_and_p_value_rules() {
        let null: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(permutation_threshold(&null, 0.05), 95.0);
        assert_eq!(permutation_p_value(&null, 100.5), 1.0 / 101.0);
        // a tie counts as an exceedance
        assert_eq!(permutation_p_value(&null, 100.0), 2.0 / 101.0);
        assert_eq!(permutation_p_value(&null, -1.0), 1.0);
    }

    #[test]
    fn threshold_non_increasing_in_alpha() {
        let null: Vec<f64> = (0..300).map(|i| ((i * 37) % 300) as f64 * 0.1).collect();
        let mut prev = f64::INFINITY;
        for k in 1..100 {
            let t = permutation_threshold(&null, k as f64 / 100.0);
            assert!(t <= prev);
            prev = t;
        }
    }

    #[test]
    fn config_validation() {
        assert!(TestConfig::new(0.05, 99, 0).is_err());
        assert!(TestConfig::new(0.0, 500, 0).is_err());
        assert!(TestConfig::new(1.0, 500, 0).is_err());
        assert!(TestConfig::new(0.05, 100, 0).is_ok());
        assert!(TestConfig::gamma(0.05, 0).is_ok());
    }

    #[test]
    fn gamma_exponential_median() {
        let t = gamma_null_approx(1.0, 1.0, 0.5).unwrap();
        assert_relative_eq!(t, std::f64::consts::LN_2, epsilon = 1e-6);
        assert_relative_eq!(t, std::f64::consts::LN_2, epsilon = 1e-9);
    }

    #[test]
    fn gamma_threshold_shrinks_as_alpha_grows() {
        let mut prev = f64::INFINITY;
        for k in 1..=999 {
            let t = gamma_null_approx(2.0, 1.0, k as f64 / 1000.0).unwrap();
            assert!(t < prev && t > 0.0);
            prev = t;
        }
        assert!(gamma_null_approx(2.0, 1.0, 0.999999).unwrap() < 0.1);
    }

    #[test]
    fn gamma_rejects_degenerate_moments() {
        assert!(matches!(gamma_null_approx(0.0, 1.0, 0.05), Err(Error::DegenerateNull(_))));
        assert!(matches!(gamma_null_approx(1.0, 0.0, 0.05), Err(Error::DegenerateNull(_))));
        assert!(matches!(gamma_null_approx(-1.0, 1.0, 0.05), Err(Error::DegenerateNull(_))));
    }

    fn panel(seed: u64, m: usize, t: usize, shift: f64) -> SamplePanel {
        use rand::Rng;
        let mut rng = substream(seed, &[]);
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..t).map(|_| rng.random::<f64>() + shift).collect())
            .collect();
        SamplePanel::from_rows(&rows).unwrap()
    }

    #[test]
    fn pooled_statistic_matches_estimator() {
        let x = panel(1, 7, 3, 0.0);
        let y = panel(2, 5, 3, 0.3);
        let pooled = PooledGram::new(&x, &y, 0.8).unwrap();
        let direct = estimators::mmd2_u(&x, &y, &KernelConfig::gaussian(0.8)).unwrap();
        let idx: Vec<usize> = (0..7).collect();
        assert_relative_eq!(pooled.mmd2_u_for_split(&idx), direct.value, epsilon = 1e-12);
    }

    #[test]
    fn paired_statistic_matches_estimator() {
        let x = panel(3, 9, 2, 0.0);
        let y = panel(4, 9, 4, 0.0);
        let k = KernelConfig::gaussian(0.6);
        let kx = kernels::gram(&x, &k).unwrap().into_entries();
        let ly = kernels::gram(&y, &k).unwrap().into_entries();
        let grams = PairedGrams::new(kx, ly);
        let direct = estimators::hsic_u(&x, &y, &k, &k).unwrap().value;
        assert_relative_eq!(grams.hsic_u_permuted(&grams.identity()), direct, epsilon = 1e-12);
    }

    #[test]
    fn results_are_deterministic_and_consistent() {
        let x = panel(5, 20, 4, 0.0);
        let y = panel(6, 20, 4, 0.2);
        let cfg = TestConfig::new(0.05, 200, 99).unwrap();
        let k = KernelConfig::median_aggregated();
        let a = mmd_two_sample_test(&x, &y, &k, &cfg).unwrap();
        let b = mmd_two_sample_test(&x, &y, &k, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.reject, a.statistic > a.threshold);
        assert!(a.p_value >= 1.0 / 201.0 && a.p_value <= 1.0);
        if a.reject {
            assert!(a.p_value < cfg.alpha + 1.0 / 201.0);
        }
        let c = mmd_two_sample_test(&x, &y, &k, &cfg.with_seed(100)).unwrap();
        assert_ne!(a.null_samples, c.null_samples);
    }

    #[test]
    fn gamma_path_is_flagged() {
        let x = panel(7, 15, 3, 0.0);
        let y = panel(8, 15, 3, 1.0);
        let cfg = TestConfig::gamma(0.05, 3).unwrap();
        let k = KernelConfig::median_aggregated();
        let r = mmd_two_sample_test(&x, &y, &k, &cfg).unwrap();
        assert!(r.approximate);
        assert_eq!(r.statistic_kind, StatisticKind::Mmd2B);
        assert!(r.reject);
        let r = hsic_independence_test(&x, &x, &k, &k, &cfg).unwrap();
        assert!(r.approximate && r.reject);
        assert_eq!(r.null_samples.as_ref().unwrap().len(), DEFAULT_GAMMA_PILOT);
    }

    #[test]
    fn test_preconditions() {
        let k = KernelConfig::gaussian(1.0);
        let cfg = TestConfig::new(0.05, 100, 0).unwrap();
        let bad = TestConfig {
            permutations: 10,
            ..cfg
        };
        let x = panel(1, 6, 2, 0.0);
        assert!(matches!(mmd_two_sample_test(&x, &x, &k, &bad), Err(Error::Config(_))));
        assert!(matches!(
            hsic_independence_test(&x, &panel(2, 5, 2, 0.0), &k, &k, &cfg),
            Err(Error::SampleSizeMismatch { .. })
        ));
        let flat = SamplePanel::from_rows(&vec![vec![1.0, 1.0]; 6]).unwrap();
        assert!(matches!(
            mmd_two_sample_test(&flat, &flat, &KernelConfig::median_aggregated(), &cfg),
            Err(Error::DegenerateBandwidth)
        ));
    }
}
