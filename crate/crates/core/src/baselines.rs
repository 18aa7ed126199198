//! Per-time-point comparison statistics for a scalar `Y`: the mean Pearson
//! correlation (SubCorr) and the mean unbiased HSIC (SubHSIC) between each
//! column of `X` and `Y`, both calibrated by permuting `Y`.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{hsic_u_from_grams, StatisticKind, StatisticValue};
use crate::hypothesis::{null_sample, permutation_result, NullMethod, PairedGrams, TestConfig, TestResult};
use crate::kernels::{gram_with_sigma, KernelConfig};
use crate::panel::SamplePanel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineStatistic {
    SubCorr,
    SubHsic,
}

fn check_inputs(x: &SamplePanel, y: &SamplePanel, min: usize) -> Result<usize> {
    if y.time_points() != 1 {
        return Err(Error::DimensionMismatch {
            what: "Y time points",
            left: y.time_points(),
            right: 1,
        });
    }
    let m = x.realisations();
    if m != y.realisations() {
        return Err(Error::SampleSizeMismatch {
            left: m,
            right: y.realisations(),
        });
    }
    if m < min {
        return Err(Error::SampleSize(format!(
            "need at least {min} paired realisations, got {m}"
        )));
    }
    Ok(m)
}

/// Centred values scaled to unit Euclidean norm.
fn standardised(values: impl Iterator<Item = f64>, what: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = values.collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let centred: Vec<f64> = v.iter().map(|a| a - mean).collect();
    let norm = centred.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm.is_nan() || norm <= 0.0 || norm <= 1e-12 * mean.abs().max(1.0) * (v.len() as f64).sqrt() {
        return Err(Error::DegenerateStatistic(format!("{what} has zero sample variance")));
    }
    Ok(centred.into_iter().map(|a| a / norm).collect())
}

/// Row weights `w_i = (1/T) Σ_t z_{i,t}` of standardised `X` columns, so
/// that SubCorr is `Σ_i w_i z_Y,i`.
fn sub_corr_weights(x: &SamplePanel) -> Result<Vec<f64>> {
    let (m, t) = x.values().dim();
    let mut w = vec![0.0; m];
    for col in 0..t {
        let z = standardised(x.values().column(col).iter().copied(), &format!("X column {col}"))?;
        for (wi, zi) in w.iter_mut().zip(z) {
            *wi += zi;
        }
    }
    w.iter_mut().for_each(|v| *v /= t as f64);
    Ok(w)
}

fn y_standardised(y: &SamplePanel) -> Result<Vec<f64>> {
    standardised(y.values().column(0).iter().copied(), "Y")
}

/// Mean over time points of the Pearson correlation between `X` at that
/// time point and the scalar `Y`.
pub fn sub_corr(x: &SamplePanel, y: &SamplePanel) -> Result<StatisticValue> {
    check_inputs(x, y, 2)?;
    let w = sub_corr_weights(x)?;
    let zy = y_standardised(y)?;
    let value = w.iter().zip(&zy).map(|(a, b)| a * b).sum::<f64>();
    Ok(StatisticValue {
        value: value.clamp(-1.0, 1.0),
        kind: StatisticKind::SubCorr,
    })
}

/// Gram matrices of every single-time-point column of `X`, each with its
/// own resolved bandwidth.
fn column_grams(x: &SamplePanel, kernel_x: &KernelConfig) -> Result<Vec<Array2<f64>>> {
    (0..x.time_points())
        .into_par_iter()
        .map(|t| {
            let col = x.column(t)?;
            let sigma = kernel_x.resolve(&col)?;
            Ok(gram_with_sigma(&col, sigma)?.into_entries())
        })
        .collect()
}

/// Mean over time points of the unbiased HSIC between `X` at that time
/// point and the scalar `Y`. Median bandwidth rules are resolved per column.
pub fn sub_hsic(
    x: &SamplePanel,
    y: &SamplePanel,
    kernel_x: &KernelConfig,
    kernel_y: &KernelConfig,
) -> Result<StatisticValue> {
    check_inputs(x, y, 4)?;
    let l = gram_with_sigma(y, kernel_y.resolve(y)?)?.into_entries();
    let ks = column_grams(x, kernel_x)?;
    let total: f64 = ks.iter().map(|k| hsic_u_from_grams(k.view(), l.view())).sum();
    Ok(StatisticValue {
        value: total / ks.len() as f64,
        kind: StatisticKind::SubHsic,
    })
}

/// Permutation test with a baseline statistic. `Y` rows are permuted; the
/// SubCorr test uses `|SubCorr|` so dependence of either sign is detected.
/// The kernels are ignored for SubCorr.
pub fn baseline_test(
    statistic: BaselineStatistic,
    x: &SamplePanel,
    y: &SamplePanel,
    kernel_x: &KernelConfig,
    kernel_y: &KernelConfig,
    config: &TestConfig,
) -> Result<TestResult> {
    config.validate()?;
    if config.null_method != NullMethod::Permutation {
        return Err(Error::Config("baseline tests are calibrated by permutation only".into()));
    }
    let cfg = *config;
    match statistic {
        BaselineStatistic::SubCorr => {
            let m = check_inputs(x, y, 2)?;
            let w = sub_corr_weights(x)?;
            let zy = y_standardised(y)?;
            let stat = |perm: &[usize]| -> f64 {
                perm.iter().zip(&w).map(|(&p, wi)| wi * zy[p]).sum::<f64>().abs()
            };
            let identity: Vec<usize> = (0..m).collect();
            let observed = stat(&identity);
            let null = null_sample(cfg.seed, cfg.permutations, |rng| {
                let mut perm = identity.clone();
                perm.shuffle(rng);
                stat(&perm)
            });
            Ok(permutation_result(observed, StatisticKind::SubCorr, null, Vec::new(), cfg))
        }
        BaselineStatistic::SubHsic => {
            let m = check_inputs(x, y, 4)?;
            let sy = kernel_y.resolve(y)?;
            let l = gram_with_sigma(y, sy)?.into_entries();
            // HSIC is linear in K, so the mean over columns equals HSIC of
            // the mean Gram matrix.
            let ks = column_grams(x, kernel_x)?;
            let mut k_mean = Array2::<f64>::zeros((m, m));
            for k in &ks {
                k_mean += k;
            }
            k_mean /= ks.len() as f64;
            let grams = PairedGrams::new(k_mean, l);
            let observed = grams.hsic_u_permuted(&grams.identity());
            let null = null_sample(cfg.seed, cfg.permutations, |rng| {
                let mut perm = grams.identity();
                perm.shuffle(rng);
                grams.hsic_u_permuted(&perm)
            });
            Ok(permutation_result(observed, StatisticKind::SubHsic, null, vec![sy], cfg))
        }
    }
}
