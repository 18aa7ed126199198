use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use nskt::experiment::{emit_results, run_experiment, ExperimentSpec};
use nskt::hypothesis::{hsic_independence_test, mmd_two_sample_test, NullMethod, TestConfig};
use nskt::ingest::{aggregate_to_targets, impute, load_csv, series_panel, to_sample_panels, write_csv, ImputationReport, Schema};
use nskt::kernels::{median_heuristic, KernelConfig, MedianMode};
use nskt::panel::SamplePanel;
use nskt::power::{optimise, preset_grid, median_scaled_grid, GridExperiment, SearchGrid, SearchKind, SearchOptions};
use nskt::synth::{generate, CoeffDist, GeneratorSpec, Protocol};
use nskt::{Error, ErrorClass};

const EXIT_INPUT: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;
const EXIT_IO: u8 = 5;

#[derive(Parser)]
#[command(name = "nskt", version, about = "Kernel two-sample and independence tests for time-series panels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MedianArg {
    Aggregated,
}

#[derive(Clone, Copy, ValueEnum)]
enum NullArg {
    Permutation,
    Gamma,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Mmd,
    Hsic,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Meanshift,
    Varshift,
    Lineardep,
    Sharedcoeff,
    Rotation,
}

#[derive(Clone, Copy, ValueEnum)]
enum DistArg {
    Gaussian,
    Student,
    Uniform,
    Exponential,
}

#[derive(clap::Args)]
struct TestArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    perms: usize,
    #[arg(long)]
    seed: u64,
    /// Null calibration; the Gamma fit runs a 200-permutation pilot.
    #[arg(long, value_enum, default_value = "permutation")]
    null: NullArg,
}

#[derive(Subcommand)]
enum Command {
    /// Two-sample MMD test; prints the result as JSON.
    MmdTest {
        #[command(flatten)]
        common: TestArgs,
        #[arg(long, conflicts_with = "median")]
        sigma: Option<f64>,
        /// Median heuristic over the pooled rows (the default).
        #[arg(long, value_enum)]
        median: Option<MedianArg>,
    },
    /// HSIC independence test; prints the result as JSON.
    HsicTest {
        #[command(flatten)]
        common: TestArgs,
        /// Bandwidth for X; median heuristic on X when omitted.
        #[arg(long)]
        sigma_x: Option<f64>,
        /// Bandwidth for Y; median heuristic on Y when omitted.
        #[arg(long)]
        sigma_y: Option<f64>,
    },
    /// Select bandwidths on a training split; prints the search as JSON.
    PowerOpt {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        /// meanshift, varshift (both need --delta), rotation-student,
        /// rotation-exponential, rotation-uniform, median, or a comma list.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value_t = 0.5)]
        split: f64,
        #[arg(long)]
        seed: u64,
    },
    /// Generate a synthetic pair of panels into OUT/x.csv and OUT/y.csv.
    Synth {
        #[arg(long, value_enum)]
        protocol: ProtocolArg,
        #[arg(long)]
        m: usize,
        /// Defaults to m.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        t: usize,
        /// Grid length of Y for the shared-coefficient protocol.
        #[arg(long)]
        t_y: Option<usize>,
        #[arg(long, default_value_t = 0.0)]
        delta_mu: f64,
        #[arg(long, default_value_t = 0.0)]
        delta_sigma: f64,
        #[arg(long, default_value_t = 0.0)]
        theta: f64,
        #[arg(long, value_enum, default_value = "gaussian")]
        dist: DistArg,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a sweep described by a TOML spec file and write its results.
    Experiment {
        #[arg(long)]
        spec: PathBuf,
        /// Use 5000 permutations per test.
        #[arg(long)]
        full_scale: bool,
        /// Output directory; defaults to the spec's `output`, relative to the spec file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Load, optionally impute and aggregate, and write complete panels.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        impute: bool,
        #[arg(long)]
        aggregate: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

fn test_config(args: &TestArgs) -> nskt::Result<TestConfig> {
    let mut config = TestConfig::new(args.alpha, args.perms, args.seed)?;
    if let NullArg::Gamma = args.null {
        config.null_method = NullMethod::GammaApprox;
    }
    Ok(config)
}

fn print_json<T: Serialize>(value: &T) -> nskt::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn fixed_or_median(sigma: Option<f64>) -> KernelConfig {
    sigma.map_or_else(KernelConfig::median_aggregated, KernelConfig::gaussian)
}

fn parse_grid(
    spec: &str,
    delta: Option<f64>,
    panels: &[&SamplePanel],
) -> nskt::Result<SearchGrid> {
    let preset = |exp: GridExperiment| -> nskt::Result<SearchGrid> {
        let needs_delta = matches!(exp, GridExperiment::MeanShift | GridExperiment::VarShift);
        let d = match (needs_delta, delta) {
            (true, None) => return Err(Error::Config(format!("grid {spec:?} needs --delta"))),
            (_, d) => d.unwrap_or(0.0),
        };
        match preset_grid(exp, d) {
            Some(g) => Ok(g),
            None => median_scaled_grid(median_heuristic(panels, MedianMode::Aggregated)?),
        }
    };
    match spec {
        "meanshift" => preset(GridExperiment::MeanShift),
        "varshift" => preset(GridExperiment::VarShift),
        "rotation-student" => preset(GridExperiment::RotationStudentT),
        "rotation-exponential" => preset(GridExperiment::RotationExponential),
        "rotation-uniform" => preset(GridExperiment::RotationUniform),
        "median" => median_scaled_grid(median_heuristic(panels, MedianMode::Aggregated)?),
        list => {
            let values = list
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("grid value {v:?} is not a number")))
                })
                .collect::<nskt::Result<Vec<_>>>()?;
            SearchGrid::custom(values)
        }
    }
}

fn create_dir(dir: &Path) -> nskt::Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Serialize)]
struct IngestManifest<'a> {
    format_version: u32,
    tool_version: &'static str,
    input: String,
    imputed: bool,
    aggregated: bool,
    entities: usize,
    years: Vec<i64>,
    missing_before: usize,
    missing_after: usize,
    files: Vec<String>,
    groups: std::collections::BTreeMap<String, Vec<String>>,
    imputation: Option<ImputationReport>,
    schema: &'a Schema,
}

fn ingest(input: &Path, schema_path: &Path, do_impute: bool, do_aggregate: bool, out: &Path) -> nskt::Result<()> {
    let schema = Schema::read(schema_path)?;
    let raw = load_csv(input, &schema)?;
    let missing_before = raw.missing_cells();
    let (panel, report) = if do_impute {
        let (p, r) = impute(&raw)?;
        (p, Some(r))
    } else {
        (raw, None)
    };
    let panel = if do_aggregate { aggregate_to_targets(&panel)? } else { panel };
    create_dir(out)?;
    let mut files = Vec::new();

    let long = out.join("panel.csv");
    let file = fs::File::create(&long).map_err(|e| Error::io(&long, e))?;
    write_csv(&panel, &schema.columns, file)?;
    files.push("panel.csv".to_string());

    let series_dir = out.join("series");
    create_dir(&series_dir)?;
    let rows: Vec<usize> = (0..panel.entities().len()).collect();
    let names: Vec<String> = panel.indicator_names().map(String::from).collect();
    for name in &names {
        if panel.indicator(name).is_some_and(|m| m.iter().all(Option::is_some)) {
            let file_name = format!("{}.csv", name.replace(['/', '\\'], "_"));
            series_panel(&panel, name, &rows)?.write_csv(series_dir.join(&file_name))?;
            files.push(format!("series/{file_name}"));
        }
    }
    if let Some(output) = &schema.output {
        let (x, y) = to_sample_panels(&panel, output)?;
        x.write_csv(out.join("x.csv"))?;
        y.write_csv(out.join("y.csv"))?;
        files.push("x.csv".into());
        files.push("y.csv".into());
    }
    let manifest = IngestManifest {
        format_version: nskt::ingest::SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        input: input.display().to_string(),
        imputed: do_impute,
        aggregated: do_aggregate,
        entities: panel.entities().len(),
        years: panel.years().to_vec(),
        missing_before,
        missing_after: panel.missing_cells(),
        files,
        groups: panel.group_members(),
        imputation: report,
        schema: &schema,
    };
    let path = out.join("manifest.toml");
    fs::write(&path, toml::to_string(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

fn run(cli: Cli) -> nskt::Result<()> {
    match cli.command {
        Command::MmdTest { common, sigma, median: _ } => {
            let x = SamplePanel::read_csv(&common.x)?;
            let y = SamplePanel::read_csv(&common.y)?;
            let result = mmd_two_sample_test(&x, &y, &fixed_or_median(sigma), &test_config(&common)?)?;
            print_json(&result)
        }
        Command::HsicTest { common, sigma_x, sigma_y } => {
            let x = SamplePanel::read_csv(&common.x)?;
            let y = SamplePanel::read_csv(&common.y)?;
            let result = hsic_independence_test(
                &x,
                &y,
                &fixed_or_median(sigma_x),
                &fixed_or_median(sigma_y),
                &test_config(&common)?,
            )?;
            print_json(&result)
        }
        Command::PowerOpt { kind, x, y, grid, delta, split, seed } => {
            let x = SamplePanel::read_csv(&x)?;
            let y = SamplePanel::read_csv(&y)?;
            let (kind, gx, gy) = match kind {
                KindArg::Mmd => (SearchKind::Mmd, parse_grid(&grid, delta, &[&x, &y])?, None),
                KindArg::Hsic => (
                    SearchKind::Hsic,
                    parse_grid(&grid, delta, &[&x])?,
                    Some(parse_grid(&grid, delta, &[&y])?),
                ),
            };
            let result = optimise(&x, &y, kind, &gx, gy.as_ref(), split, &SearchOptions::studentised(seed))?;
            print_json(&result)
        }
        Command::Synth {
            protocol,
            m,
            n,
            t,
            t_y,
            delta_mu,
            delta_sigma,
            theta,
            dist,
            seed,
            out,
        } => {
            let spec = GeneratorSpec {
                protocol: match protocol {
                    ProtocolArg::Meanshift => Protocol::MeanShift,
                    ProtocolArg::Varshift => Protocol::VarShift,
                    ProtocolArg::Lineardep => Protocol::LinearDep,
                    ProtocolArg::Sharedcoeff => Protocol::SharedCoeff,
                    ProtocolArg::Rotation => Protocol::Rotation,
                },
                m,
                n: n.unwrap_or(m),
                t,
                t_y,
                delta_mu,
                delta_sigma,
                theta,
                coeff_dist: match dist {
                    DistArg::Gaussian => CoeffDist::Gaussian,
                    DistArg::Student => CoeffDist::StudentT,
                    DistArg::Uniform => CoeffDist::Uniform,
                    DistArg::Exponential => CoeffDist::Exponential,
                },
                noise_var_y: 1.0,
                seed,
            };
            let (x, y) = generate(&spec)?;
            create_dir(&out)?;
            x.write_csv(out.join("x.csv"))?;
            y.write_csv(out.join("y.csv"))
        }
        Command::Experiment { spec, full_scale, out } => {
            let mut parsed = ExperimentSpec::read(&spec)?;
            if full_scale {
                parsed = parsed.full_scale();
            }
            let dir = out.unwrap_or_else(|| {
                spec.parent().unwrap_or(Path::new(".")).join(&parsed.output)
            });
            let run = run_experiment(&parsed)?;
            for path in emit_results(&run, &dir)? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Ingest { input, schema, impute, aggregate, out } => {
            ingest(&input, &schema, impute, aggregate, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Input => EXIT_INPUT,
                ErrorClass::Numerical => EXIT_NUMERICAL,
                ErrorClass::Io => EXIT_IO,
            })
        }
    }
}
