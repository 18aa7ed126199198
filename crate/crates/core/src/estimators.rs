//! Unbiased MMD² and HSIC estimators and their jackknife variances.
//!
//! The public entry points take panels and kernel configurations. The
//! `*_from_grams` variants take precomputed kernel matrices so permutation
//! and search loops can reuse them.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{self, KernelConfig};
use crate::panel::SamplePanel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StatisticKind {
    Mmd2U,
    HsicU,
    SubCorr,
    SubHsic,
    /// Biased (V-statistic) MMD², used only by the Gamma null approximation.
    Mmd2B,
    /// Biased HSIC, used only by the Gamma null approximation.
    HsicB,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatisticValue {
    pub value: f64,
    pub kind: StatisticKind,
}

fn check_same_t(x: &SamplePanel, y: &SamplePanel) -> Result<()> {
    if x.time_points() != y.time_points() {
        return Err(Error::DimensionMismatch {
            what: "time points",
            left: x.time_points(),
            right: y.time_points(),
        });
    }
    Ok(())
}

fn check_pairs(x: &SamplePanel, y: &SamplePanel, min: usize) -> Result<usize> {
    let (m, n) = (x.realisations(), y.realisations());
    if m != n {
        return Err(Error::SampleSizeMismatch { left: m, right: n });
    }
    if m < min {
        return Err(Error::SampleSize(format!(
            "need at least {min} paired realisations, got {m}"
        )));
    }
    Ok(m)
}

/// Kernel matrices of the two-sample problem for a resolved bandwidth.
pub(crate) struct TwoSampleGrams {
    pub kxx: Array2<f64>,
    pub kyy: Array2<f64>,
    pub kxy: Array2<f64>,
}

pub(crate) fn two_sample_grams(
    x: &SamplePanel,
    y: &SamplePanel,
    sigma: f64,
) -> Result<TwoSampleGrams> {
    Ok(TwoSampleGrams {
        kxx: kernels::gram_with_sigma(x, sigma)?.into_entries(),
        kyy: kernels::gram_with_sigma(y, sigma)?.into_entries(),
        kxy: kernels::cross_gram_with_sigma(x, y, sigma)?,
    })
}

fn off_diagonal_sum(k: ArrayView2<'_, f64>) -> f64 {
    let n = k.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += k[[i, j]];
            }
        }
    }
    s
}

/// Unbiased MMD² from the within-X, within-Y and cross kernel matrices.
pub fn mmd2_u_from_grams(
    kxx: ArrayView2<'_, f64>,
    kyy: ArrayView2<'_, f64>,
    kxy: ArrayView2<'_, f64>,
) -> f64 {
    let m = kxx.nrows() as f64;
    let n = kyy.nrows() as f64;
    off_diagonal_sum(kxx) / (m * (m - 1.0)) + off_diagonal_sum(kyy) / (n * (n - 1.0))
        - 2.0 * symmetric_sum(kxy) / (m * n)
}

/// Mean of the row-major and column-major sums. Transposing the matrix swaps
/// the two addends, so the result is bitwise invariant under `X ↔ Y`.
fn symmetric_sum(k: ArrayView2<'_, f64>) -> f64 {
    let by_rows: f64 = k.rows().into_iter().map(|r| r.iter().sum::<f64>()).sum();
    let by_cols: f64 = k.columns().into_iter().map(|c| c.iter().sum::<f64>()).sum();
    (by_rows + by_cols) / 2.0
}

/// Unbiased MMD² between two panels sharing a grid length. A median rule is
/// resolved on the pooled rows.
pub fn mmd2_u(x: &SamplePanel, y: &SamplePanel, kernel: &KernelConfig) -> Result<StatisticValue> {
    check_same_t(x, y)?;
    if x.realisations() < 2 || y.realisations() < 2 {
        return Err(Error::SampleSize(
            "MMD² needs at least two realisations per sample".into(),
        ));
    }
    let sigma = kernel.resolve_pooled(x, y)?;
    let g = two_sample_grams(x, y, sigma)?;
    Ok(StatisticValue {
        value: mmd2_u_from_grams(g.kxx.view(), g.kyy.view(), g.kxy.view()),
        kind: StatisticKind::Mmd2U,
    })
}

/// Sufficient sums of the unbiased HSIC estimator for kernel matrices with
/// their diagonals removed.
struct HsicSums {
    m: usize,
    trace_kl: f64,
    sum_k: f64,
    sum_l: f64,
    /// `K̃1`
    row_k: Vec<f64>,
    /// `L̃1`
    row_l: Vec<f64>,
    /// `1ᵀ K̃ L̃ 1`
    ab: f64,
}

fn hsic_from_sums(m: usize, trace_kl: f64, sum_k: f64, sum_l: f64, ab: f64) -> f64 {
    let mf = m as f64;
    (trace_kl + sum_k * sum_l / ((mf - 1.0) * (mf - 2.0)) - 2.0 / (mf - 2.0) * ab)
        / (mf * (mf - 3.0))
}

impl HsicSums {
    fn new(k: ArrayView2<'_, f64>, l: ArrayView2<'_, f64>) -> Self {
        let m = k.nrows();
        let mut trace_kl = 0.0;
        let mut row_k = vec![0.0; m];
        let mut row_l = vec![0.0; m];
        for i in 0..m {
            let (mut rk, mut rl, mut tr) = (0.0, 0.0, 0.0);
            for j in 0..m {
                if i != j {
                    rk += k[[i, j]];
                    rl += l[[i, j]];
                    tr += k[[i, j]] * l[[j, i]];
                }
            }
            row_k[i] = rk;
            row_l[i] = rl;
            trace_kl += tr;
        }
        let sum_k = row_k.iter().sum();
        let sum_l = row_l.iter().sum();
        let ab = row_k.iter().zip(&row_l).map(|(a, b)| a * b).sum();
        Self {
            m,
            trace_kl,
            sum_k,
            sum_l,
            row_k,
            row_l,
            ab,
        }
    }

    fn value(&self) -> f64 {
        hsic_from_sums(self.m, self.trace_kl, self.sum_k, self.sum_l, self.ab)
    }
}

/// Unbiased HSIC from the two kernel matrices (diagonals are ignored).
pub fn hsic_u_from_grams(k: ArrayView2<'_, f64>, l: ArrayView2<'_, f64>) -> f64 {
    HsicSums::new(k, l).value()
}

/// Unbiased HSIC between paired panels. Each kernel's median rule is
/// resolved on its own panel; the grids may differ in length.
pub fn hsic_u(
    x: &SamplePanel,
    y: &SamplePanel,
    kernel_x: &KernelConfig,
    kernel_y: &KernelConfig,
) -> Result<StatisticValue> {
    check_pairs(x, y, 4)?;
    let k = kernels::gram(x, kernel_x)?;
    let l = kernels::gram(y, kernel_y)?;
    Ok(StatisticValue {
        value: hsic_u_from_grams(k.entries().view(), l.entries().view()),
        kind: StatisticKind::HsicU,
    })
}

fn jackknife_variance(loo: &[f64]) -> f64 {
    let n = loo.len() as f64;
    let mean = loo.iter().sum::<f64>() / n;
    let ss: f64 = loo.iter().map(|v| (v - mean) * (v - mean)).sum();
    ((n - 1.0) / n * ss).max(0.0)
}

/// Leave-one-out MMD² values: entry `i` drops `x_i` and `y_i` together.
pub fn mmd2_u_leave_one_out(
    kxx: ArrayView2<'_, f64>,
    kyy: ArrayView2<'_, f64>,
    kxy: ArrayView2<'_, f64>,
) -> Vec<f64> {
    let m = kxx.nrows();
    let off_rows = |k: ArrayView2<'_, f64>| -> Vec<f64> {
        (0..m)
            .map(|i| (0..m).filter(|&j| j != i).map(|j| k[[i, j]]).sum())
            .collect()
    };
    let rx = off_rows(kxx);
    let ry = off_rows(kyy);
    let sxx: f64 = rx.iter().sum();
    let syy: f64 = ry.iter().sum();
    let row_xy: Vec<f64> = (0..m).map(|i| kxy.row(i).sum()).collect();
    let col_xy: Vec<f64> = (0..m).map(|j| kxy.column(j).sum()).collect();
    let sxy: f64 = row_xy.iter().sum();
    let mp = (m - 1) as f64;
    (0..m)
        .map(|i| {
            let sxx_i = sxx - 2.0 * rx[i];
            let syy_i = syy - 2.0 * ry[i];
            let sxy_i = sxy - row_xy[i] - col_xy[i] + kxy[[i, i]];
            (sxx_i + syy_i) / (mp * (mp - 1.0)) - 2.0 * sxy_i / (mp * mp)
        })
        .collect()
}

/// Leave-one-out HSIC values: entry `i` drops the pair `(x_i, y_i)`.
pub fn hsic_u_leave_one_out(k: ArrayView2<'_, f64>, l: ArrayView2<'_, f64>) -> Vec<f64> {
    let s = HsicSums::new(k, l);
    let m = s.m;
    (0..m)
        .map(|i| {
            let (mut kl_row, mut k_b, mut l_a) = (0.0, 0.0, 0.0);
            for j in 0..m {
                if j != i {
                    kl_row += k[[i, j]] * l[[j, i]];
                    k_b += k[[i, j]] * s.row_l[j];
                    l_a += l[[i, j]] * s.row_k[j];
                }
            }
            let trace_kl = s.trace_kl - 2.0 * kl_row;
            let sum_k = s.sum_k - 2.0 * s.row_k[i];
            let sum_l = s.sum_l - 2.0 * s.row_l[i];
            let ab = s.ab - s.row_k[i] * s.row_l[i] - k_b - l_a + kl_row;
            hsic_from_sums(m - 1, trace_kl, sum_k, sum_l, ab)
        })
        .collect()
}

/// Delete-one jackknife variance of MMD² from kernel matrices (`m = n`).
pub fn mmd_variance_from_grams(
    kxx: ArrayView2<'_, f64>,
    kyy: ArrayView2<'_, f64>,
    kxy: ArrayView2<'_, f64>,
) -> f64 {
    jackknife_variance(&mmd2_u_leave_one_out(kxx, kyy, kxy))
}

/// Delete-one jackknife variance of HSIC from kernel matrices.
pub fn hsic_variance_from_grams(k: ArrayView2<'_, f64>, l: ArrayView2<'_, f64>) -> f64 {
    jackknife_variance(&hsic_u_leave_one_out(k, l))
}

/// Jackknife estimate of `Var[MMD̂²_u]` for equal-size panels.
pub fn mmd_variance(x: &SamplePanel, y: &SamplePanel, kernel: &KernelConfig) -> Result<f64> {
    check_same_t(x, y)?;
    check_pairs(x, y, 4)?;
    let sigma = kernel.resolve_pooled(x, y)?;
    let g = two_sample_grams(x, y, sigma)?;
    Ok(mmd_variance_from_grams(g.kxx.view(), g.kyy.view(), g.kxy.view()))
}

/// Jackknife estimate of `Var[HSIĈ_u]`. Leaving one pair out must keep the
/// estimator defined, so at least five pairs are required.
pub fn hsic_variance(
    x: &SamplePanel,
    y: &SamplePanel,
    kernel_x: &KernelConfig,
    kernel_y: &KernelConfig,
) -> Result<f64> {
    check_pairs(x, y, 5)?;
    let k = kernels::gram(x, kernel_x)?;
    let l = kernels::gram(y, kernel_y)?;
    Ok(hsic_variance_from_grams(k.entries().view(), l.entries().view()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::Array2;

    fn rows(v: &[&[f64]]) -> SamplePanel {
        SamplePanel::from_rows(&v.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn repeated(row: &[f64], m: usize) -> SamplePanel {
        SamplePanel::from_rows(&vec![row.to_vec(); m]).unwrap()
    }

    #[test]
    fn mmd_identical_rows_is_zero() {
        let x = repeated(&[1.0, 2.0], 3);
        let y = repeated(&[1.0, 2.0], 4);
        let v = mmd2_u(&x, &y, &KernelConfig::gaussian(1.0)).unwrap();
        assert_eq!(v.value, 0.0);
        assert_eq!(v.kind, StatisticKind::Mmd2U);
    }

    #[test]
    fn mmd_two_point_sets() {
        let (a, b) = ([0.0, 0.0], [1.0, 1.0]);
        let x = rows(&[&a, &a]);
        let y = rows(&[&b, &b]);
        let sigma = 1.7;
        let c = kernels::gaussian_kernel(&a, &b, sigma).unwrap();
        let v = mmd2_u(&x, &y, &KernelConfig::gaussian(sigma)).unwrap().value;
        assert_relative_eq!(v, 2.0 * (1.0 - c), epsilon = 1e-14);
    }

    #[test]
    fn mmd_errors() {
        let k = KernelConfig::gaussian(1.0);
        let x = rows(&[&[0.0], &[1.0]]);
        assert!(matches!(mmd2_u(&x, &rows(&[&[0.0]]), &k), Err(Error::SampleSize(_))));
        assert!(matches!(
            mmd2_u(&x, &rows(&[&[0.0, 1.0], &[1.0, 0.0]]), &k),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn hsic_constant_kernels_is_zero() {
        let ones = Array2::<f64>::ones((4, 4));
        // trace = 12, 144/6 = 24, (2/2)·36 = 36
        assert!(hsic_u_from_grams(ones.view(), ones.view()).abs() <= 1e-12);
        let x = repeated(&[3.0, 1.0], 4);
        let y = repeated(&[-1.0], 4);
        let k = KernelConfig::gaussian(1.0);
        assert!(hsic_u(&x, &y, &k, &k).unwrap().value.abs() <= 1e-12);
    }

    #[test]
    fn hsic_errors() {
        let k = KernelConfig::gaussian(1.0);
        let x = rows(&[&[0.0], &[1.0], &[2.0]]);
        assert!(matches!(hsic_u(&x, &x, &k, &k), Err(Error::SampleSize(_))));
        let y = rows(&[&[0.0], &[1.0], &[2.0], &[3.0]]);
        assert!(matches!(
            hsic_u(&x, &y, &k, &k),
            Err(Error::SampleSizeMismatch { .. })
        ));
        assert!(matches!(
            hsic_variance(&y, &y, &k, &k),
            Err(Error::SampleSize(_))
        ));
    }

    #[test]
    fn constant_panels_have_zero_variance() {
        let x = repeated(&[2.0, 2.0], 6);
        let k = KernelConfig::gaussian(1.0);
        assert!(mmd_variance(&x, &x, &k).unwrap().abs() < 1e-12);
        assert!(hsic_variance(&x, &x, &k, &k).unwrap().abs() < 1e-12);
    }

    #[test]
    fn mmd_variance_needs_equal_sizes() {
        let k = KernelConfig::gaussian(1.0);
        let x = rows(&[&[0.0], &[1.0], &[2.0], &[3.0]]);
        let y = rows(&[&[0.0], &[1.0], &[2.0], &[3.0], &[4.0]]);
        assert!(matches!(
            mmd_variance(&x, &y, &k),
            Err(Error::SampleSizeMismatch { .. })
        ));
    }
}
