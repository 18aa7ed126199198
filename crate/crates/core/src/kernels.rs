//! Gaussian kernel evaluation, Gram matrices and the median heuristic.
//!
//! The kernel is `k(x, y) = exp(-‖x − y‖² / σ²)`; the bandwidth enters as σ²
//! with no factor of two. Each realisation (panel row) is one input vector.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::SamplePanel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelFamily {
    Gaussian,
}

/// How the bandwidth σ is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bandwidth {
    Fixed(f64),
    /// Median pairwise distance over all rows of every panel involved.
    MedianAggregated,
    /// Median pairwise distance within the panel the kernel is applied to.
    MedianPerSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub family: KernelFamily,
    pub bandwidth: Bandwidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MedianMode {
    Aggregated,
    PerSample,
}

impl KernelConfig {
    pub fn gaussian(sigma: f64) -> Self {
        Self {
            family: KernelFamily::Gaussian,
            bandwidth: Bandwidth::Fixed(sigma),
        }
    }

    pub fn median_aggregated() -> Self {
        Self {
            family: KernelFamily::Gaussian,
            bandwidth: Bandwidth::MedianAggregated,
        }
    }

    pub fn median_per_sample() -> Self {
        Self {
            family: KernelFamily::Gaussian,
            bandwidth: Bandwidth::MedianPerSample,
        }
    }

    /// Bandwidth for a kernel applied to a single panel.
    pub fn resolve(&self, panel: &SamplePanel) -> Result<f64> {
        match self.bandwidth {
            Bandwidth::Fixed(sigma) => check_sigma(sigma),
            Bandwidth::MedianAggregated => median_heuristic(&[panel], MedianMode::Aggregated),
            Bandwidth::MedianPerSample => median_heuristic(&[panel], MedianMode::PerSample),
        }
    }

    /// Bandwidth for one kernel shared by two panels (two-sample setting).
    pub fn resolve_pooled(&self, x: &SamplePanel, y: &SamplePanel) -> Result<f64> {
        match self.bandwidth {
            Bandwidth::Fixed(sigma) => check_sigma(sigma),
            Bandwidth::MedianAggregated => median_heuristic(&[x, y], MedianMode::Aggregated),
            Bandwidth::MedianPerSample => Err(Error::Config(
                "per-sample median bandwidth is undefined for a kernel shared by two samples".into(),
            )),
        }
    }
}

fn check_sigma(sigma: f64) -> Result<f64> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(sigma)
    } else {
        Err(Error::InvalidParameter(format!(
            "bandwidth must be positive and finite, got {sigma}"
        )))
    }
}

/// `exp(-‖x − y‖² / σ²)`.
pub fn gaussian_kernel(x: &[f64], y: &[f64], sigma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "kernel arguments",
            left: x.len(),
            right: y.len(),
        });
    }
    let sigma = check_sigma(sigma)?;
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((-d2 / (sigma * sigma)).exp())
}

/// Within-sample kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: Array2<f64>,
}

impl GramMatrix {
    pub(crate) fn from_entries(entries: Array2<f64>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> Array2<f64> {
        self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[[i, j]]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq_norms(panel: &SamplePanel) -> Vec<f64> {
    (0..panel.realisations())
        .map(|i| {
            let r = panel.row_slice(i);
            dot(r, r)
        })
        .collect()
}

/// Pairwise squared distances between the rows of `panel`, via
/// `‖x‖² + ‖y‖² − 2⟨x, y⟩` with negatives clamped to zero. The diagonal is
/// exactly zero.
pub fn sq_distances(panel: &SamplePanel) -> Array2<f64> {
    let m = panel.realisations();
    let norms = sq_norms(panel);
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            (0..m)
                .map(|j| {
                    if i == j {
                        return 0.0;
                    }
                    // evaluate each unordered pair in one fixed orientation so
                    // the result is exactly symmetric
                    let (a, b) = (i.min(j), i.max(j));
                    let ab = dot(panel.row_slice(a), panel.row_slice(b));
                    (norms[a] + norms[b] - 2.0 * ab).max(0.0)
                })
                .collect()
        })
        .collect();
    Array2::from_shape_vec((m, m), rows.into_iter().flatten().collect()).expect("square")
}

/// Squared distances between rows of `x` (rows) and rows of `y` (columns).
pub fn cross_sq_distances(x: &SamplePanel, y: &SamplePanel) -> Result<Array2<f64>> {
    if x.time_points() != y.time_points() {
        return Err(Error::DimensionMismatch {
            what: "time points",
            left: x.time_points(),
            right: y.time_points(),
        });
    }
    let (m, n) = (x.realisations(), y.realisations());
    let nx = sq_norms(x);
    let ny = sq_norms(y);
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let ri = x.row_slice(i);
            (0..n)
                .map(|j| (nx[i] + ny[j] - 2.0 * dot(ri, y.row_slice(j))).max(0.0))
                .collect()
        })
        .collect();
    Ok(Array2::from_shape_vec((m, n), rows.into_iter().flatten().collect()).expect("shape"))
}

/// Gaussian kernel values from squared distances.
pub fn kernel_from_sq_distances(d2: &Array2<f64>, sigma: f64) -> Result<Array2<f64>> {
    let sigma = check_sigma(sigma)?;
    let inv = 1.0 / (sigma * sigma);
    Ok(d2.mapv(|d| (-d * inv).exp()))
}

/// Gram matrix for an already resolved bandwidth.
pub fn gram_with_sigma(panel: &SamplePanel, sigma: f64) -> Result<GramMatrix> {
    let mut k = kernel_from_sq_distances(&sq_distances(panel), sigma)?;
    for i in 0..k.nrows() {
        k[[i, i]] = 1.0;
    }
    Ok(GramMatrix::from_entries(k))
}

/// `m × m` matrix of kernel evaluations between the rows of `panel`.
pub fn gram(panel: &SamplePanel, kernel: &KernelConfig) -> Result<GramMatrix> {
    let sigma = kernel.resolve(panel)?;
    gram_with_sigma(panel, sigma)
}

/// Cross kernel matrix for an already resolved bandwidth.
pub fn cross_gram_with_sigma(x: &SamplePanel, y: &SamplePanel, sigma: f64) -> Result<Array2<f64>> {
    kernel_from_sq_distances(&cross_sq_distances(x, y)?, sigma)
}

/// `m × n` matrix of kernel evaluations between rows of `x` and rows of `y`.
/// A median rule is resolved on the pooled rows.
pub fn cross_gram(x: &SamplePanel, y: &SamplePanel, kernel: &KernelConfig) -> Result<Array2<f64>> {
    if x.time_points() != y.time_points() {
        return Err(Error::DimensionMismatch {
            what: "time points",
            left: x.time_points(),
            right: y.time_points(),
        });
    }
    let sigma = kernel.resolve_pooled(x, y)?;
    cross_gram_with_sigma(x, y, sigma)
}

/// Median of a non-empty list, averaging the two central values for even
/// counts.
pub(crate) fn median_of(mut values: Vec<f64>) -> f64 {
    let n = values.len();
    debug_assert!(n > 0);
    let mid = n / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Median Euclidean distance between all pairs of rows.
///
/// `Aggregated` pools the rows of every given panel; `PerSample` takes
/// exactly one panel. Zero distances from duplicate rows stay in the pool.
pub fn median_heuristic(panels: &[&SamplePanel], mode: MedianMode) -> Result<f64> {
    let first = panels
        .first()
        .ok_or_else(|| Error::Input("median heuristic needs at least one panel".into()))?;
    if mode == MedianMode::PerSample && panels.len() != 1 {
        return Err(Error::InvalidParameter(
            "per-sample median heuristic takes exactly one panel".into(),
        ));
    }
    let t = first.time_points();
    if let Some(p) = panels.iter().find(|p| p.time_points() != t) {
        return Err(Error::DimensionMismatch {
            what: "time points",
            left: t,
            right: p.time_points(),
        });
    }
    let rows: Vec<&[f64]> = panels
        .iter()
        .flat_map(|p| (0..p.realisations()).map(move |i| p.row_slice(i)))
        .collect();
    let n = rows.len();
    if n < 2 {
        return Err(Error::SampleSize(
            "median heuristic needs at least two rows".into(),
        ));
    }
    let dists: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let rows = &rows;
            (i + 1..n).map(move |j| {
                rows[i]
                    .iter()
                    .zip(rows[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
        })
        .collect();
    let med = median_of(dists);
    if med > 0.0 && med.is_finite() {
        Ok(med)
    } else {
        Err(Error::DegenerateBandwidth)
    }
}
