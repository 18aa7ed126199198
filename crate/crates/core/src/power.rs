//! Bandwidth selection by maximising an estimate of test power.
//!
//! The criterion is the studentised statistic `stat / √(V̂ + λ)` computed on
//! a training split, evaluated over a grid of candidate bandwidths. The test
//! is then run on the held-out rows only.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    hsic_u_from_grams, hsic_variance_from_grams, mmd2_u_from_grams, mmd_variance_from_grams,
};
use crate::hypothesis::{
    hsic_independence_test, mmd_two_sample_test, null_sample, permutation_threshold,
    PairedGrams, PooledGram, TestConfig, TestResult,
};
use crate::kernels::{kernel_from_sq_distances, median_heuristic, sq_distances, KernelConfig, MedianMode};
use crate::panel::SamplePanel;
use crate::rng::{derive_seed, substream};

/// λ added to the variance estimate before taking the square root.
pub const CRITERION_REGULARISER: f64 = 1e-8;
/// Permutations per grid point in [`CriterionMode::PilotThreshold`].
pub const PILOT_PERMUTATIONS: usize = 200;

const SPLIT_STREAM: u64 = 0x5350_4c54;
const TRUNCATE_STREAM: u64 = 0x5452_4e43;
const PILOT_STREAM: u64 = 0x5049_4c54;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridProvenance {
    PresetMeanShift,
    PresetVarShift,
    PresetRotationStudentExp,
    PresetRotationUniform,
    MedianScaled,
    Custom,
}

/// Strictly increasing list of positive candidate bandwidths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    values: Vec<f64>,
    provenance: GridProvenance,
}

impl SearchGrid {
    pub fn new(values: Vec<f64>, provenance: GridProvenance) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("bandwidth grid is empty".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("bandwidth grid values must be positive and finite".into()));
        }
        if values.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(Ordering::Less)) {
            return Err(Error::Config("bandwidth grid must be strictly increasing".into()));
        }
        Ok(Self { values, provenance })
    }

    /// User-supplied grid; values are sorted and deduplicated first.
    pub fn custom(mut values: Vec<f64>) -> Result<Self> {
        values.sort_by(f64::total_cmp);
        values.dedup();
        Self::new(values, GridProvenance::Custom)
    }

    fn arithmetic(start: f64, step: f64, count: usize, provenance: GridProvenance) -> Self {
        let values = (0..count).map(|k| start + step * k as f64).collect();
        Self { values, provenance }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn provenance(&self) -> GridProvenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Experiment families with preset grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridExperiment {
    MeanShift,
    VarShift,
    RotationStudentT,
    RotationUniform,
    RotationExponential,
}

/// Preset grid for the bucket containing `delta`, or `None` when `delta`
/// lies outside every bucket. Rotation grids do not depend on `delta`.
pub fn preset_grid(experiment: GridExperiment, delta: f64) -> Option<SearchGrid> {
    use GridProvenance::*;
    if !delta.is_finite() {
        return None;
    }
    match experiment {
        GridExperiment::MeanShift => {
            let start = match delta {
                d if (0.0..=2.0).contains(&d) => 1.0,
                d if d > 2.0 && d <= 3.0 => 6.0,
                d if d > 3.0 && d <= 5.0 => 11.0,
                d if d > 5.0 && d <= 8.0 => 16.0,
                _ => return None,
            };
            Some(SearchGrid::arithmetic(start, 2.0, 11, PresetMeanShift))
        }
        GridExperiment::VarShift => {
            let start = match delta {
                d if (0.0..=4.0).contains(&d) => 10.0,
                d if d > 4.0 && d <= 14.0 => 20.0,
                d if d > 14.0 && d <= 32.0 => 30.0,
                _ => return None,
            };
            Some(SearchGrid::arithmetic(start, 2.0, 11, PresetVarShift))
        }
        GridExperiment::RotationStudentT | GridExperiment::RotationExponential => {
            Some(SearchGrid::arithmetic(1.0, 1.0, 20, PresetRotationStudentExp))
        }
        GridExperiment::RotationUniform => {
            Some(SearchGrid::arithmetic(1.0, 1.0, 40, PresetRotationUniform))
        }
    }
}

/// `median · 2^k` for 11 evenly spaced exponents `k ∈ [−2, 2]`.
pub fn median_scaled_grid(median: f64) -> Result<SearchGrid> {
    if !(median.is_finite() && median > 0.0) {
        return Err(Error::DegenerateBandwidth);
    }
    let values = (0..11).map(|j| median * 2f64.powf(-2.0 + 0.4 * j as f64)).collect();
    SearchGrid::new(values, GridProvenance::MedianScaled)
}

/// Preset grid if one covers `delta`, otherwise the median-scaled grid of
/// the pooled rows of `panels`.
pub fn grid_or_median(
    experiment: GridExperiment,
    delta: f64,
    panels: &[&SamplePanel],
) -> Result<SearchGrid> {
    match preset_grid(experiment, delta) {
        Some(g) => Ok(g),
        None => median_scaled_grid(median_heuristic(panels, MedianMode::Aggregated)?),
    }
}

/// Disjoint, sorted row index sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Both sides are disjoint and together cover `0..m`.
    pub fn is_partition_of(&self, m: usize) -> bool {
        let train: BTreeSet<usize> = self.train.iter().copied().collect();
        let test: BTreeSet<usize> = self.test.iter().copied().collect();
        train.len() == self.train.len()
            && test.len() == self.test.len()
            && train.is_disjoint(&test)
            && train.len() + test.len() == m
            && train.union(&test).all(|&i| i < m)
    }
}

/// Uniformly random partition of `0..m` with `round(m · ratio)` training rows.
pub fn split_train_test(m: usize, ratio: f64, seed: u64) -> Result<Split> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let n_train = (m as f64 * ratio).round() as usize;
    let n_test = m.saturating_sub(n_train);
    if n_train < 4 || n_test < 4 {
        return Err(Error::Split(format!(
            "{m} rows at ratio {ratio} give {n_train} training and {n_test} test rows; each side needs 4"
        )));
    }
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(&mut substream(seed, &[SPLIT_STREAM]));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchKind {
    Mmd,
    Hsic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionMode {
    /// `stat / √(V̂ + λ)`.
    #[default]
    Studentised,
    /// `(stat − ĉ_α) / √(V̂ + λ)` with `ĉ_α` from a pilot permutation run
    /// at every grid point.
    PilotThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub mode: CriterionMode,
    /// Level used for the pilot threshold.
    pub alpha: f64,
    pub seed: u64,
}

impl SearchOptions {
    pub fn studentised(seed: u64) -> Self {
        Self {
            mode: CriterionMode::Studentised,
            alpha: 0.05,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSelection {
    pub kind: SearchKind,
    pub grid_x: SearchGrid,
    /// Second grid of the HSIC search (`σ_Y`).
    pub grid_y: Option<SearchGrid>,
    /// One value per grid point; for HSIC row-major with `σ_X` outer.
    pub criterion: Vec<f64>,
    /// `[σ]` for MMD, `[σ_X, σ_Y]` for HSIC.
    pub selected: Vec<f64>,
    pub mode: CriterionMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSearchResult {
    pub selection: BandwidthSelection,
    /// Row split of `X`; for HSIC it is shared by `Y`.
    pub split_x: Split,
    /// Separate row split of `Y` in the two-sample case.
    pub split_y: Option<Split>,
    pub seed: u64,
}

fn studentise(stat: f64, var: f64) -> f64 {
    stat / (var + CRITERION_REGULARISER).sqrt()
}

fn gram_from_d2(d2: &Array2<f64>, sigma: f64) -> Result<Array2<f64>> {
    let mut k = kernel_from_sq_distances(d2, sigma)?;
    for i in 0..k.nrows() {
        k[[i, i]] = 1.0;
    }
    Ok(k)
}

fn pooled(x: &SamplePanel, y: &SamplePanel) -> Result<SamplePanel> {
    let m = x.realisations();
    let mut values = Array2::zeros((m + y.realisations(), x.time_points()));
    values.slice_mut(s![..m, ..]).assign(&x.values());
    values.slice_mut(s![m.., ..]).assign(&y.values());
    SamplePanel::new(values, x.grid().to_vec())
}

fn check_time_points(x: &SamplePanel, y: &SamplePanel) -> Result<()> {
    if x.time_points() != y.time_points() {
        return Err(Error::DimensionMismatch {
            what: "time points",
            left: x.time_points(),
            right: y.time_points(),
        });
    }
    Ok(())
}

fn check_paired(x: &SamplePanel, y: &SamplePanel, min: usize) -> Result<usize> {
    let m = x.realisations();
    if m != y.realisations() {
        return Err(Error::SampleSizeMismatch {
            left: m,
            right: y.realisations(),
        });
    }
    if m < min {
        return Err(Error::SampleSize(format!(
            "power criterion needs at least {min} training rows per panel, got {m}"
        )));
    }
    Ok(m)
}

/// Squared distances over the pooled training rows of a two-sample problem.
struct MmdSearch {
    d2: Array2<f64>,
    m: usize,
}

impl MmdSearch {
    fn new(x: &SamplePanel, y: &SamplePanel) -> Result<Self> {
        check_time_points(x, y)?;
        let m = check_paired(x, y, 4)?;
        Ok(Self {
            d2: sq_distances(&pooled(x, y)?),
            m,
        })
    }

    fn criterion(&self, sigma: f64, options: &SearchOptions) -> Result<f64> {
        let m = self.m;
        let g = gram_from_d2(&self.d2, sigma)?;
        let kxx = g.slice(s![..m, ..m]);
        let kyy = g.slice(s![m.., m..]);
        let kxy = g.slice(s![..m, m..]);
        let stat = mmd2_u_from_grams(kxx, kyy, kxy);
        let var = mmd_variance_from_grams(kxx, kyy, kxy);
        match options.mode {
            CriterionMode::Studentised => Ok(studentise(stat, var)),
            CriterionMode::PilotThreshold => {
                let pg = PooledGram::from_gram(g, m, m);
                let seed = derive_seed(options.seed, &[PILOT_STREAM]);
                let null = null_sample(seed, PILOT_PERMUTATIONS, |rng| {
                    pg.mmd2_u_for_split(&pg.random_split(rng))
                });
                let c = permutation_threshold(&null, options.alpha);
                Ok(studentise(stat - c, var))
            }
        }
    }
}

struct HsicSearch {
    dx: Array2<f64>,
    dy: Array2<f64>,
}

impl HsicSearch {
    fn new(x: &SamplePanel, y: &SamplePanel) -> Result<Self> {
        check_paired(x, y, 5)?;
        Ok(Self {
            dx: sq_distances(x),
            dy: sq_distances(y),
        })
    }

    fn criterion(&self, k: &Array2<f64>, l: &Array2<f64>, options: &SearchOptions) -> f64 {
        let stat = hsic_u_from_grams(k.view(), l.view());
        let var = hsic_variance_from_grams(k.view(), l.view());
        match options.mode {
            CriterionMode::Studentised => studentise(stat, var),
            CriterionMode::PilotThreshold => {
                let grams = PairedGrams::new(k.clone(), l.clone());
                let seed = derive_seed(options.seed, &[PILOT_STREAM]);
                let null = null_sample(seed, PILOT_PERMUTATIONS, |rng| {
                    let mut perm = grams.identity();
                    perm.shuffle(rng);
                    grams.hsic_u_permuted(&perm)
                });
                let c = permutation_threshold(&null, options.alpha);
                studentise(stat - c, var)
            }
        }
    }
}

/// Studentised MMD² criterion on equal-size training panels.
pub fn mmd_power_criterion(train_x: &SamplePanel, train_y: &SamplePanel, sigma: f64) -> Result<f64> {
    MmdSearch::new(train_x, train_y)?.criterion(sigma, &SearchOptions::studentised(0))
}

/// Studentised HSIC criterion on paired training panels.
pub fn hsic_power_criterion(
    train_x: &SamplePanel,
    train_y: &SamplePanel,
    sigma_x: f64,
    sigma_y: f64,
) -> Result<f64> {
    let search = HsicSearch::new(train_x, train_y)?;
    let k = gram_from_d2(&search.dx, sigma_x)?;
    let l = gram_from_d2(&search.dy, sigma_y)?;
    Ok(search.criterion(&k, &l, &SearchOptions::studentised(0)))
}

/// Randomly drop rows of the larger panel so both have the smaller size.
pub fn equalise_sizes(
    x: &SamplePanel,
    y: &SamplePanel,
    seed: u64,
) -> Result<(SamplePanel, SamplePanel)> {
    let (m, n) = (x.realisations(), y.realisations());
    if m == n {
        return Ok((x.clone(), y.clone()));
    }
    let keep = m.min(n);
    let mut idx: Vec<usize> = (0..m.max(n)).collect();
    idx.shuffle(&mut substream(seed, &[TRUNCATE_STREAM]));
    let mut idx = idx[..keep].to_vec();
    idx.sort_unstable();
    if m > n {
        Ok((x.select_rows(&idx)?, y.clone()))
    } else {
        Ok((x.clone(), y.select_rows(&idx)?))
    }
}

/// Index of the largest finite value; ties go to the smallest index.
fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_finite() && best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Evaluate the criterion at every grid point of the training panels and
/// pick the maximiser. Unequal MMD training panels are first truncated at
/// random to a common size.
pub fn select_bandwidth(
    train_x: &SamplePanel,
    train_y: &SamplePanel,
    kind: SearchKind,
    grid_x: &SearchGrid,
    grid_y: Option<&SearchGrid>,
    options: &SearchOptions,
) -> Result<BandwidthSelection> {
    if options.mode == CriterionMode::PilotThreshold && !(options.alpha > 0.0 && options.alpha < 1.0)
    {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", options.alpha)));
    }
    let (criterion, selected, grid_y) = match kind {
        SearchKind::Mmd => {
            if grid_y.is_some() {
                return Err(Error::Config("the MMD search takes a single grid".into()));
            }
            let (x, y) = equalise_sizes(train_x, train_y, options.seed)?;
            let search = MmdSearch::new(&x, &y)?;
            let criterion = grid_x
                .values()
                .par_iter()
                .map(|&sigma| search.criterion(sigma, options))
                .collect::<Result<Vec<f64>>>()?;
            let best = argmax(&criterion).ok_or_else(no_finite_criterion)?;
            (criterion, vec![grid_x.values()[best]], None)
        }
        SearchKind::Hsic => {
            let grid_y = grid_y.unwrap_or(grid_x).clone();
            let search = HsicSearch::new(train_x, train_y)?;
            let ks = grid_x
                .values()
                .iter()
                .map(|&sx| gram_from_d2(&search.dx, sx))
                .collect::<Result<Vec<_>>>()?;
            let ls = grid_y
                .values()
                .iter()
                .map(|&sy| gram_from_d2(&search.dy, sy))
                .collect::<Result<Vec<_>>>()?;
            let ny = ls.len();
            let criterion: Vec<f64> = (0..ks.len() * ny)
                .into_par_iter()
                .map(|p| search.criterion(&ks[p / ny], &ls[p % ny], options))
                .collect();
            let best = argmax(&criterion).ok_or_else(no_finite_criterion)?;
            let selected = vec![grid_x.values()[best / ny], grid_y.values()[best % ny]];
            (criterion, selected, Some(grid_y))
        }
    };
    Ok(BandwidthSelection {
        kind,
        grid_x: grid_x.clone(),
        grid_y,
        criterion,
        selected,
        mode: options.mode,
    })
}

fn no_finite_criterion() -> Error {
    Error::Search("criterion is non-finite at every grid point".into())
}

/// Split the rows and select bandwidths on the training part.
///
/// `options.seed` drives the split, truncation and pilot streams. The
/// two-sample case splits each panel with its own draw; the independence
/// case applies one split to both panels so pairs stay together.
pub fn optimise(
    x: &SamplePanel,
    y: &SamplePanel,
    kind: SearchKind,
    grid_x: &SearchGrid,
    grid_y: Option<&SearchGrid>,
    ratio: f64,
    options: &SearchOptions,
) -> Result<PowerSearchResult> {
    let split_seed = |panel: u64| derive_seed(options.seed, &[SPLIT_STREAM, panel]);
    let (split_x, split_y) = match kind {
        SearchKind::Mmd => (
            split_train_test(x.realisations(), ratio, split_seed(0))?,
            Some(split_train_test(y.realisations(), ratio, split_seed(1))?),
        ),
        SearchKind::Hsic => {
            if x.realisations() != y.realisations() {
                return Err(Error::SampleSizeMismatch {
                    left: x.realisations(),
                    right: y.realisations(),
                });
            }
            (split_train_test(x.realisations(), ratio, split_seed(0))?, None)
        }
    };
    let y_split = split_y.as_ref().unwrap_or(&split_x);
    let train_x = x.select_rows(&split_x.train)?;
    let train_y = y.select_rows(&y_split.train)?;
    let selection = select_bandwidth(&train_x, &train_y, kind, grid_x, grid_y, options)?;
    Ok(PowerSearchResult {
        selection,
        split_x,
        split_y,
        seed: options.seed,
    })
}

/// [`optimise`], then test on the held-out rows with the selected fixed
/// bandwidths. `test_config.seed` drives the final permutation test.
#[allow(clippy::too_many_arguments)]
pub fn optimise_and_test(
    x: &SamplePanel,
    y: &SamplePanel,
    kind: SearchKind,
    grid_x: &SearchGrid,
    grid_y: Option<&SearchGrid>,
    ratio: f64,
    options: &SearchOptions,
    test_config: &TestConfig,
) -> Result<(PowerSearchResult, TestResult)> {
    let search = optimise(x, y, kind, grid_x, grid_y, ratio, options)?;
    let y_split = search.split_y.as_ref().unwrap_or(&search.split_x);
    assert!(search.split_x.is_partition_of(x.realisations()), "X split is not a partition");
    assert!(y_split.is_partition_of(y.realisations()), "Y split is not a partition");

    let test_x = x.select_rows(&search.split_x.test)?;
    let test_y = y.select_rows(&y_split.test)?;
    let selected = &search.selection.selected;
    let result = match kind {
        SearchKind::Mmd => mmd_two_sample_test(
            &test_x,
            &test_y,
            &KernelConfig::gaussian(selected[0]),
            test_config,
        )?,
        SearchKind::Hsic => hsic_independence_test(
            &test_x,
            &test_y,
            &KernelConfig::gaussian(selected[0]),
            &KernelConfig::gaussian(selected[1]),
            test_config,
        )?,
    };
    Ok((search, result))
}
