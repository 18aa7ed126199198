//! Monte Carlo power experiments over a parameter sweep.
//!
//! An [`ExperimentSpec`] is read from TOML:
//!
//! ```toml
//! format_version = 1
//! tests = ["mmd-baseline", "mmd-optimised"]
//! trials = 200
//! alpha = 0.05
//! permutations = 500
//! seed = 7
//! output = "results"          # relative to the spec file
//! formats = ["csv", "json", "svg"]
//! grid = "preset"             # "preset", "median", or a list of bandwidths
//!
//! [generator]
//! protocol = "meanshift"
//! m = 100
//! n = 100
//! t = 100
//!
//! [sweep]
//! parameter = "delta_mu"      # delta_mu, delta_sigma, theta, theta_pi4, m, t
//! values = [0.0, 1.0, 2.0, 3.0]
//! ```
//!
//! Trial `k` at sweep point `j` draws its data and permutations from seeds
//! derived from `(seed, j, k)`, so results do not depend on scheduling.

use std::f64::consts::FRAC_PI_4;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{baseline_test, BaselineStatistic};
use crate::error::{Error, Result};
use crate::hypothesis::{hsic_independence_test, mmd_two_sample_test, TestConfig};
use crate::kernels::{median_heuristic, KernelConfig, MedianMode};
use crate::panel::SamplePanel;
use crate::plot::{power_curve_svg, Curve};
use crate::power::{
    grid_or_median, median_scaled_grid, optimise_and_test, CriterionMode, GridExperiment,
    SearchGrid, SearchKind, SearchOptions,
};
use crate::rng::derive_seed;
use crate::synth::{generate, CoeffDist, GeneratorSpec, Protocol};

pub const SPEC_VERSION: u32 = 1;
pub const DEFAULT_PERMUTATIONS: usize = 500;
pub const FULL_SCALE_PERMUTATIONS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestVariant {
    MmdBaseline,
    MmdOptimised,
    HsicBaseline,
    HsicOptimised,
    Subcorr,
    Subhsic,
}

impl TestVariant {
    pub fn name(self) -> &'static str {
        match self {
            TestVariant::MmdBaseline => "mmd-baseline",
            TestVariant::MmdOptimised => "mmd-optimised",
            TestVariant::HsicBaseline => "hsic-baseline",
            TestVariant::HsicOptimised => "hsic-optimised",
            TestVariant::Subcorr => "subcorr",
            TestVariant::Subhsic => "subhsic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    DeltaMu,
    DeltaSigma,
    Theta,
    /// θ in multiples of π/4.
    ThetaPi4,
    M,
    T,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::DeltaMu => "delta_mu",
            SweepParameter::DeltaSigma => "delta_sigma",
            SweepParameter::Theta => "theta",
            SweepParameter::ThetaPi4 => "theta_pi4",
            SweepParameter::M => "m",
            SweepParameter::T => "t",
        }
    }

    /// The generator at this sweep value.
    pub fn apply(self, base: &GeneratorSpec, value: f64) -> Result<GeneratorSpec> {
        let mut g = base.clone();
        let count = || -> Result<usize> {
            if value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!("sweep value {value} is not a positive integer")))
            }
        };
        match self {
            SweepParameter::DeltaMu => g.delta_mu = value,
            SweepParameter::DeltaSigma => g.delta_sigma = value,
            SweepParameter::Theta => g.theta = value,
            SweepParameter::ThetaPi4 => g.theta = value * FRAC_PI_4,
            SweepParameter::M => {
                g.m = count()?;
                g.n = g.m;
            }
            SweepParameter::T => g.t = count()?,
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

/// Bandwidth grid of the optimised variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSetting {
    /// `"preset"` (preset grids, falling back to median-scaled) or `"median"`.
    Named(String),
    Values(Vec<f64>),
}

impl Default for GridSetting {
    fn default() -> Self {
        GridSetting::Named("preset".into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub format_version: u32,
    pub tests: Vec<TestVariant>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    pub seed: u64,
    #[serde(default = "default_split")]
    pub split: f64,
    #[serde(default)]
    pub grid: GridSetting,
    #[serde(default)]
    pub criterion: CriterionMode,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
    #[serde(default)]
    pub parallel_sweep: bool,
    #[serde(default)]
    pub record_decisions: bool,
    pub generator: GeneratorSpec,
    pub sweep: Sweep,
}

fn default_trials() -> usize {
    200
}
fn default_alpha() -> f64 {
    0.05
}
fn default_permutations() -> usize {
    DEFAULT_PERMUTATIONS
}
fn default_split() -> f64 {
    0.5
}
fn default_output() -> PathBuf {
    PathBuf::from("results")
}
fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv, OutputFormat::Json, OutputFormat::Svg]
}

fn two_sample(p: Protocol) -> bool {
    matches!(p, Protocol::MeanShift | Protocol::VarShift)
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.format_version != SPEC_VERSION {
            return bad(format!(
                "unsupported format_version {} (expected {SPEC_VERSION})",
                self.format_version
            ));
        }
        if self.tests.is_empty() {
            return bad("at least one test is required".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.sweep.values.is_empty() {
            return bad("sweep needs at least one value".into());
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return bad(format!("split must lie in (0, 1), got {}", self.split));
        }
        TestConfig::new(self.alpha, self.permutations, 0)?;
        match &self.grid {
            GridSetting::Named(n) if n == "preset" || n == "median" => {}
            GridSetting::Named(n) => return bad(format!("unknown grid {n:?}")),
            GridSetting::Values(v) => {
                SearchGrid::custom(v.clone())?;
            }
        }
        let protocol = self.generator.protocol;
        for &t in &self.tests {
            let ok = match t {
                TestVariant::MmdBaseline | TestVariant::MmdOptimised => two_sample(protocol),
                TestVariant::HsicBaseline | TestVariant::HsicOptimised => !two_sample(protocol),
                TestVariant::Subcorr | TestVariant::Subhsic => protocol == Protocol::LinearDep,
            };
            if !ok {
                return bad(format!("test {} does not apply to protocol {protocol:?}", t.name()));
            }
        }
        for &v in &self.sweep.values {
            self.sweep.parameter.apply(&self.generator, v)?.validate()?;
        }
        Ok(())
    }

    /// Use the permutation count of the original study.
    pub fn full_scale(mut self) -> Self {
        self.permutations = FULL_SCALE_PERMUTATIONS;
        self
    }
}

/// Normal-approximation 95% interval `μ̂ ± 1.96 √(μ̂(1 − μ̂)/trials)`,
/// clipped to `[0, 1]`.
pub fn confidence_interval(mu_hat: f64, trials: usize) -> (f64, f64) {
    let half = 1.96 * (mu_hat * (1.0 - mu_hat) / trials as f64).sqrt();
    ((mu_hat - half).max(0.0), (mu_hat + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub parameter: f64,
    pub mu_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: usize,
    pub rejections: usize,
    /// Seed from which every trial seed of this point is derived.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decisions: Option<Vec<bool>>,
}

impl PointResult {
    fn from_decisions(parameter: f64, seed: u64, decisions: Vec<bool>, keep: bool) -> Self {
        let trials = decisions.len();
        let rejections = decisions.iter().filter(|&&d| d).count();
        let mu_hat = rejections as f64 / trials as f64;
        let (ci_low, ci_high) = confidence_interval(mu_hat, trials);
        Self {
            parameter,
            mu_hat,
            ci_low,
            ci_high,
            trials,
            rejections,
            seed,
            decisions: keep.then_some(decisions),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSeries {
    pub test: TestVariant,
    pub points: Vec<PointResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub series: Vec<VariantSeries>,
}

/// Results plus wall-clock timings, which are kept apart so that result
/// files are reproducible byte for byte.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub result: ExperimentResult,
    pub point_seconds: Vec<f64>,
    pub total_seconds: f64,
}

fn preset_experiment(g: &GeneratorSpec) -> Option<(GridExperiment, f64)> {
    match g.protocol {
        Protocol::MeanShift => Some((GridExperiment::MeanShift, g.delta_mu)),
        Protocol::VarShift => Some((GridExperiment::VarShift, g.delta_sigma)),
        Protocol::Rotation => match g.coeff_dist {
            CoeffDist::StudentT => Some((GridExperiment::RotationStudentT, g.theta)),
            CoeffDist::Uniform => Some((GridExperiment::RotationUniform, g.theta)),
            CoeffDist::Exponential => Some((GridExperiment::RotationExponential, g.theta)),
            CoeffDist::Gaussian => None,
        },
        _ => None,
    }
}

fn median_grid(panels: &[&SamplePanel]) -> Result<SearchGrid> {
    median_scaled_grid(median_heuristic(panels, MedianMode::Aggregated)?)
}

/// Grids of an optimised variant: one for MMD (pooled scale), one per
/// panel for HSIC.
fn search_grids(
    spec: &ExperimentSpec,
    g: &GeneratorSpec,
    kind: SearchKind,
    x: &SamplePanel,
    y: &SamplePanel,
) -> Result<(SearchGrid, Option<SearchGrid>)> {
    if let GridSetting::Values(v) = &spec.grid {
        let grid = SearchGrid::custom(v.clone())?;
        return Ok((grid.clone(), (kind == SearchKind::Hsic).then_some(grid)));
    }
    let preset = matches!(&spec.grid, GridSetting::Named(n) if n == "preset");
    match (kind, preset.then(|| preset_experiment(g)).flatten()) {
        (SearchKind::Mmd, Some((exp, delta))) => Ok((grid_or_median(exp, delta, &[x, y])?, None)),
        (SearchKind::Mmd, None) => Ok((median_grid(&[x, y])?, None)),
        (SearchKind::Hsic, Some((exp, delta))) => {
            let gx = grid_or_median(exp, delta, &[x])?;
            let gy = grid_or_median(exp, delta, &[y])?;
            Ok((gx, Some(gy)))
        }
        (SearchKind::Hsic, None) => Ok((median_grid(&[x])?, Some(median_grid(&[y])?))),
    }
}

/// Run one variant on one generated data set and return its decision.
fn run_variant(
    spec: &ExperimentSpec,
    variant: TestVariant,
    g: &GeneratorSpec,
    x: &SamplePanel,
    y: &SamplePanel,
    seed: u64,
) -> Result<bool> {
    let config = TestConfig::new(spec.alpha, spec.permutations, seed)?;
    let median = KernelConfig::median_aggregated();
    let result = match variant {
        TestVariant::MmdBaseline => mmd_two_sample_test(x, y, &median, &config)?,
        TestVariant::HsicBaseline => hsic_independence_test(x, y, &median, &median, &config)?,
        TestVariant::MmdOptimised | TestVariant::HsicOptimised => {
            let kind = if variant == TestVariant::MmdOptimised {
                SearchKind::Mmd
            } else {
                SearchKind::Hsic
            };
            let (gx, gy) = search_grids(spec, g, kind, x, y)?;
            let options = SearchOptions {
                mode: spec.criterion,
                alpha: spec.alpha,
                seed: derive_seed(seed, &[1]),
            };
            let config = config.with_seed(derive_seed(seed, &[2]));
            optimise_and_test(x, y, kind, &gx, gy.as_ref(), spec.split, &options, &config)?.1
        }
        TestVariant::Subcorr | TestVariant::Subhsic => {
            let stat = if variant == TestVariant::Subcorr {
                BaselineStatistic::SubCorr
            } else {
                BaselineStatistic::SubHsic
            };
            let k = KernelConfig::median_per_sample();
            baseline_test(stat, x, y, &k, &k, &config)?
        }
    };
    Ok(result.reject)
}

/// Seeds of trial `trial` at a sweep point: data generation, then testing.
pub fn trial_seeds(point_seed: u64, trial: usize) -> (u64, u64) {
    (
        derive_seed(point_seed, &[trial as u64, 0]),
        derive_seed(point_seed, &[trial as u64, 1]),
    )
}

fn run_point(spec: &ExperimentSpec, index: usize) -> Result<(Vec<PointResult>, f64)> {
    let start = Instant::now();
    let value = spec.sweep.values[index];
    let base = spec.sweep.parameter.apply(&spec.generator, value)?;
    let point_seed = derive_seed(spec.seed, &[index as u64]);
    let decisions: Vec<Vec<bool>> = (0..spec.trials)
        .into_par_iter()
        .map(|trial| {
            let (gen_seed, test_seed) = trial_seeds(point_seed, trial);
            let g = base.clone().with_seed(gen_seed);
            let wrap = |variant: &str, e: Error| Error::Trial {
                context: format!(
                    "{} = {value}, trial {trial}{variant}",
                    spec.sweep.parameter.name()
                ),
                source: Box::new(e),
            };
            let (x, y) = generate(&g).map_err(|e| wrap("", e))?;
            spec.tests
                .iter()
                .map(|&v| {
                    run_variant(spec, v, &g, &x, &y, test_seed)
                        .map_err(|e| wrap(&format!(", test {}", v.name()), e))
                })
                .collect::<Result<Vec<bool>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let points = (0..spec.tests.len())
        .map(|v| {
            let d: Vec<bool> = decisions.iter().map(|trial| trial[v]).collect();
            PointResult::from_decisions(value, point_seed, d, spec.record_decisions)
        })
        .collect();
    Ok((points, start.elapsed().as_secs_f64()))
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentRun> {
    spec.validate()?;
    let start = Instant::now();
    let indices = 0..spec.sweep.values.len();
    let per_point: Vec<(Vec<PointResult>, f64)> = if spec.parallel_sweep {
        indices.into_par_iter().map(|i| run_point(spec, i)).collect::<Result<_>>()?
    } else {
        indices.map(|i| run_point(spec, i)).collect::<Result<_>>()?
    };
    let series = spec
        .tests
        .iter()
        .enumerate()
        .map(|(v, &test)| VariantSeries {
            test,
            points: per_point.iter().map(|(p, _)| p[v].clone()).collect(),
        })
        .collect();
    Ok(ExperimentRun {
        result: ExperimentResult {
            spec: spec.clone(),
            series,
        },
        point_seconds: per_point.iter().map(|(_, s)| *s).collect(),
        total_seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn results_csv(result: &ExperimentResult) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record([
        "test",
        result.spec.sweep.parameter.name(),
        "mu_hat",
        "ci_low",
        "ci_high",
        "trials",
        "seed",
    ])?;
    for s in &result.series {
        for p in &s.points {
            wtr.write_record([
                s.test.name().to_string(),
                p.parameter.to_string(),
                p.mu_hat.to_string(),
                p.ci_low.to_string(),
                p.ci_high.to_string(),
                p.trials.to_string(),
                p.seed.to_string(),
            ])?;
        }
    }
    let bytes = wtr.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn results_json(result: &ExperimentResult) -> Result<String> {
    Ok(serde_json::to_string_pretty(result)? + "\n")
}

pub fn results_svg(result: &ExperimentResult) -> String {
    let curves: Vec<Curve> = result
        .series
        .iter()
        .map(|s| Curve {
            label: s.test.name().into(),
            points: s.points.iter().map(|p| (p.parameter, p.mu_hat, p.ci_low, p.ci_high)).collect(),
        })
        .collect();
    power_curve_svg(&curves, result.spec.sweep.parameter.name(), "rejection rate")
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    format_version: u32,
    tool_version: &'static str,
    spec_dialect: &'static str,
    files: Vec<String>,
    total_seconds: f64,
    point_seconds: Vec<f64>,
    spec: &'a ExperimentSpec,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Write `results.{csv,json,svg}` for the requested formats and a
/// `manifest.toml` with timings into `dir`. Returns the written paths.
pub fn emit_results(run: &ExperimentRun, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let result = &run.result;
    let mut written = Vec::new();
    for format in &result.spec.formats {
        let (name, contents) = match format {
            OutputFormat::Csv => ("results.csv", results_csv(result)?),
            OutputFormat::Json => ("results.json", results_json(result)?),
            OutputFormat::Svg => ("power.svg", results_svg(result)),
        };
        let path = dir.join(name);
        write(&path, &contents)?;
        written.push(path);
    }
    let manifest = Manifest {
        format_version: SPEC_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        spec_dialect: "toml",
        files: written
            .iter()
            .map(|p| p.file_name().expect("file").to_string_lossy().into_owned())
            .collect(),
        total_seconds: run.total_seconds,
        point_seconds: run.point_seconds.clone(),
        spec: &result.spec,
    };
    let path = dir.join("manifest.toml");
    write(&path, &toml::to_string(&manifest)?)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = r#"
format_version = 1
tests = ["mmd-baseline"]
trials = 4
permutations = 100
seed = 3

[generator]
protocol = "meanshift"
m = 10
n = 10
t = 5

[sweep]
parameter = "delta_mu"
values = [0.0, 2.0]
"#;

    #[test]
    fn ci_examples() {
        assert_eq!(confidence_interval(1.0, 200), (1.0, 1.0));
        assert_eq!(confidence_interval(0.0, 200), (0.0, 0.0));
        let (lo, hi) = confidence_interval(0.5, 200);
        assert!(((hi - lo) / 2.0 - 0.0693).abs() < 1e-4);
    }

    #[test]
    fn spec_parses_with_defaults() {
        let spec = ExperimentSpec::from_toml_str(SPEC).unwrap();
        assert_eq!(spec.alpha, 0.05);
        assert_eq!(spec.split, 0.5);
        assert_eq!(spec.grid, GridSetting::Named("preset".into()));
        assert_eq!(spec.formats.len(), 3);
        assert_eq!(spec.clone().full_scale().permutations, 5000);
        let back = ExperimentSpec::from_toml_str(&spec.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn spec_validation() {
        let with = |from: &str, to: &str| ExperimentSpec::from_toml_str(&SPEC.replace(from, to));
        assert!(with("trials = 4", "trials = 0").is_err());
        assert!(with("permutations = 100", "permutations = 50").is_err());
        assert!(with("mmd-baseline", "hsic-baseline").is_err());
        assert!(with("mmd-baseline", "nonsense").is_err());
        assert!(with("values = [0.0, 2.0]", "values = []").is_err());
        assert!(with("format_version = 1", "format_version = 9").is_err());
        assert!(with("seed = 3", "seed = 3\nunknown = 1").is_err());
    }

    #[test]
    fn sweep_application() {
        let g = GeneratorSpec::rotation(10, 5, 0.0, CoeffDist::Uniform, 0);
        let h = SweepParameter::ThetaPi4.apply(&g, 1.0).unwrap();
        assert!((h.theta - FRAC_PI_4).abs() < 1e-15);
        let h = SweepParameter::M.apply(&g, 30.0).unwrap();
        assert_eq!((h.m, h.n), (30, 30));
        assert!(SweepParameter::M.apply(&g, 2.5).is_err());
    }

    #[test]
    fn small_run_is_reproducible() {
        let spec = ExperimentSpec::from_toml_str(SPEC).unwrap();
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        assert_eq!(a.result, b.result);
        assert_eq!(a.result.series[0].points.len(), 2);
        let csv = results_csv(&a.result).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("test,delta_mu,mu_hat,ci_low,ci_high,trials,seed\n"));
        let json = results_json(&a.result).unwrap();
        let back: ExperimentResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a.result);
    }
}
