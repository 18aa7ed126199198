use nskt::experiment::{
    confidence_interval, emit_results, results_csv, results_json, results_svg, run_experiment, ExperimentResult,
    ExperimentSpec,
};

const SMALL: &str = r#"
format_version = 1
tests = ["mmd-baseline", "mmd-optimised"]
trials = 8
permutations = 100
seed = 42
record_decisions = true
[generator]
protocol = "meanshift"
m = 16
n = 16
t = 8
[sweep]
parameter = "delta_mu"
values = [0.0, 3.0]
"#;

#[test]
fn interval_half_width() {
    let (lo, hi) = confidence_interval(0.5, 200);
    assert!(((hi - lo) / 2.0 - 1.96 * (0.25f64 / 200.0).sqrt()).abs() < 1e-15);
    assert!(((hi - lo) / 2.0 - 0.0693).abs() < 1e-4);
    assert_eq!(confidence_interval(0.0, 50), (0.0, 0.0));
    assert_eq!(confidence_interval(1.0, 50), (1.0, 1.0));
}

#[test]
fn spec_round_trips_through_toml() {
    let spec = ExperimentSpec::from_toml_str(SMALL).unwrap();
    let again = ExperimentSpec::from_toml_str(&spec.to_toml_string().unwrap()).unwrap();
    assert_eq!(spec, again);
}

#[test]
fn incompatible_specs_are_rejected() {
    let hsic_on_two_sample = SMALL.replace(r#"["mmd-baseline", "mmd-optimised"]"#, r#"["hsic-baseline"]"#);
    assert!(ExperimentSpec::from_toml_str(&hsic_on_two_sample).is_err());
    let unknown_key = format!("{SMALL}\n[extra]\nx = 1\n");
    assert!(ExperimentSpec::from_toml_str(&unknown_key).is_err());
    let bad_point = SMALL.replace("m = 16", "m = 0");
    assert!(ExperimentSpec::from_toml_str(&bad_point).is_err());
    let bad_version = SMALL.replace("format_version = 1", "format_version = 9");
    assert!(ExperimentSpec::from_toml_str(&bad_version).is_err());
}

#[test]
fn results_are_reproducible_and_serialisable() {
    let spec = ExperimentSpec::from_toml_str(SMALL).unwrap();
    let a = run_experiment(&spec).unwrap().result;
    let b = run_experiment(&spec).unwrap().result;
    assert_eq!(a, b);
    assert_eq!(results_csv(&a).unwrap(), results_csv(&b).unwrap());

    let json = results_json(&a).unwrap();
    let back: ExperimentResult = serde_json::from_str(&json).unwrap();
    assert_eq!(back, a);

    for series in &a.series {
        for p in &series.points {
            let d = p.decisions.as_ref().unwrap();
            assert_eq!(d.len(), p.trials);
            assert_eq!(d.iter().filter(|&&x| x).count(), p.rejections);
            assert!(p.ci_low <= p.mu_hat && p.mu_hat <= p.ci_high);
        }
    }

    let csv = results_csv(&a).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("test,delta_mu,mu_hat,ci_low,ci_high,trials,seed"));
    assert_eq!(lines.count(), 4);
}

/// Every opened element is closed in order; self-closing tags are skipped.
fn well_formed(svg: &str) -> bool {
    let mut stack: Vec<&str> = Vec::new();
    let mut rest = svg;
    while let Some(start) = rest.find('<') {
        let end = match rest[start..].find('>') {
            Some(e) => start + e,
            None => return false,
        };
        let tag = &rest[start + 1..end];
        rest = &rest[end + 1..];
        if tag.starts_with('?') || tag.ends_with('/') {
            continue;
        }
        let name = tag.trim_start_matches('/').split_whitespace().next().unwrap_or("");
        if tag.starts_with('/') {
            if stack.pop() != Some(name) {
                return false;
            }
        } else {
            stack.push(name);
        }
    }
    stack.is_empty()
}

#[test]
fn svg_is_well_formed_with_one_curve_per_test() {
    let spec = ExperimentSpec::from_toml_str(SMALL).unwrap();
    let result = run_experiment(&spec).unwrap().result;
    let svg = results_svg(&result);
    assert!(well_formed(&svg));
    assert_eq!(svg.matches("<polyline").count(), 2);
}

#[test]
fn emitted_files_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec::from_toml_str(SMALL).unwrap();
    let run = run_experiment(&spec).unwrap();
    let files = emit_results(&run, dir.path()).unwrap();
    let names: Vec<String> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["results.csv", "results.json", "power.svg", "manifest.toml"]);
    let manifest: toml::Value = toml::from_str(&std::fs::read_to_string(dir.path().join("manifest.toml")).unwrap()).unwrap();
    assert_eq!(manifest["spec"]["seed"].as_integer(), Some(42));
    assert!(manifest.get("total_seconds").is_some());
}

#[test]
fn mean_shift_sweep_rises_to_full_power() {
    let spec = ExperimentSpec::from_toml_str(
        r#"
format_version = 1
tests = ["mmd-baseline"]
trials = 100
permutations = 300
seed = 619
[generator]
protocol = "meanshift"
m = 100
n = 100
t = 100
[sweep]
parameter = "delta_mu"
values = [0.0, 1.0, 2.0, 3.0]
"#,
    )
    .unwrap();
    let points = &run_experiment(&spec).unwrap().result.series[0].points;
    let sd = |p: f64| (p * (1.0 - p) / 100.0).sqrt();
    for w in points.windows(2) {
        let (a, b) = (w[0].mu_hat, w[1].mu_hat);
        assert!(b >= a - 2.0 * (sd(a).powi(2) + sd(b).powi(2)).sqrt(), "{a} then {b}");
    }
    assert!(points[0].mu_hat <= 0.08);
    assert!(points[3].mu_hat >= 0.95);
}
