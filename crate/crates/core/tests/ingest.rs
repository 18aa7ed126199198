use std::collections::BTreeMap;
use std::fmt::Write;

use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nskt::ingest::{
    aggregate_to_targets, impute, load_csv_reader, to_sample_panels, write_csv, ColumnNames, OutputSpec,
    RawPanel, Schema,
};
use nskt::Error;

fn synthetic(entities: usize, years: usize, indicators: &[&str], missing: f64, seed: u64) -> RawPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = (0..entities).map(|e| format!("C{e:03}")).collect();
    let mut p = RawPanel::empty(names, (1990..1990 + years as i64).collect()).unwrap();
    for name in indicators {
        let m = Array2::from_shape_fn((entities, years), |_| {
            (rng.random::<f64>() >= missing).then(|| rng.random_range(-50.0..50.0))
        });
        p.insert(*name, m).unwrap();
    }
    p
}

fn to_long_csv(p: &RawPanel) -> String {
    let mut out = Vec::new();
    write_csv(p, &ColumnNames::default(), &mut out).unwrap();
    String::from_utf8(out).unwrap()
}

#[test]
fn long_csv_round_trips() {
    let p = synthetic(6, 5, &["a", "b"], 0.2, 1);
    let text = to_long_csv(&p);
    let back = load_csv_reader(text.as_bytes(), &Schema::long()).unwrap();
    assert_eq!(back.entities(), p.entities());
    assert_eq!(back.years(), p.years());
    for name in ["a", "b"] {
        assert_eq!(back.indicator(name), p.indicator(name));
    }
    assert_eq!(to_long_csv(&back), text);
}

#[test]
fn wide_and_long_layouts_agree() {
    let long = "country,yr,indicator,value\nX,2001,gdp,1\nX,2001,pop,2\nY,2001,gdp,3\nY,2001,pop,NA\nX,2002,gdp,5\n";
    let wide = "country,yr,gdp,pop\nX,2001,1,2\nY,2001,3,\nX,2002,5,NA\n";
    let columns = r#"
[columns]
entity = "country"
year = "yr"
"#;
    let a = load_csv_reader(
        long.as_bytes(),
        &Schema::from_toml_str(&format!("format_version = 1\nlayout = \"long\"\n{columns}")).unwrap(),
    )
    .unwrap();
    let b = load_csv_reader(
        wide.as_bytes(),
        &Schema::from_toml_str(&format!("format_version = 1\nlayout = \"wide\"\n{columns}")).unwrap(),
    )
    .unwrap();
    assert_eq!(a.entities(), b.entities());
    for name in ["gdp", "pop"] {
        assert_eq!(a.indicator(name), b.indicator(name));
    }
    // Y pop 2001, plus every cell of 2002 except X gdp
    assert_eq!(a.missing_cells(), 4);
}

#[test]
fn malformed_input_is_reported() {
    let dup = "entity,year,indicator,value\nA,2000,g,1\nA,2000,g,2\n";
    assert!(matches!(load_csv_reader(dup.as_bytes(), &Schema::long()), Err(Error::Conflict(_))));
    let bad = "entity,year,indicator,value\nA,2000,g,1\nA,twenty,g,2\n";
    match load_csv_reader(bad.as_bytes(), &Schema::long()) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    assert!(Schema::from_toml_str("format_version = 2").is_err());
    assert!(Schema::from_toml_str("format_version = 1\nbogus = 1").is_err());
}

#[test]
fn entity_without_any_shared_observation_cannot_be_imputed() {
    let mut p = RawPanel::empty(vec!["A".into(), "B".into()], vec![2000, 2001]).unwrap();
    p.insert("g", Array2::from_shape_vec((2, 2), vec![Some(1.0), None, None, Some(2.0)]).unwrap())
        .unwrap();
    assert!(matches!(impute(&p), Err(Error::Unimputable { .. })));
}

#[test]
fn imputation_reports_every_filled_cell() {
    let p = synthetic(10, 6, &["a", "b", "c"], 0.2, 2);
    let (filled, report) = impute(&p).unwrap();
    assert_eq!(report.cells_filled, p.missing_cells());
    assert_eq!(report.cells.len(), report.cells_filled);
    assert_eq!(filled.missing_cells(), 0);
    for cell in &report.cells {
        assert!(cell.donors >= 1);
    }
}

/// Panel with `targets` mapping `a1, a2 → A` and `b1 → B`, and two groups.
fn grouped(entities: usize, seed: u64) -> RawPanel {
    let p = synthetic(entities, 20, &["a1", "a2", "b1"], 0.0, seed);
    let targets: BTreeMap<String, String> =
        [("a1", "A"), ("a2", "A"), ("b1", "B")].iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    let groups = p
        .entities()
        .iter()
        .enumerate()
        .map(|(i, e)| (e.clone(), if i < 30 { "low".to_string() } else { "high".to_string() }))
        .collect();
    p.with_metadata(targets, groups)
}

#[test]
fn two_sample_panels_have_group_shapes() {
    let p = aggregate_to_targets(&grouped(85, 3)).unwrap();
    let out = OutputSpec::TwoSample {
        series: "A".into(),
        groups: ["low".into(), "high".into()],
    };
    let (x, y) = to_sample_panels(&p, &out).unwrap();
    assert_eq!((x.realisations(), x.time_points()), (30, 20));
    assert_eq!((y.realisations(), y.time_points()), (55, 20));
}

#[test]
fn independence_panels_are_row_aligned() {
    let p = aggregate_to_targets(&grouped(49, 4)).unwrap();
    let out = OutputSpec::Independence {
        series: ["A".into(), "B".into()],
    };
    let (x, y) = to_sample_panels(&p, &out).unwrap();
    assert_eq!((x.realisations(), x.time_points()), (49, 20));
    assert_eq!((y.realisations(), y.time_points()), (49, 20));
    assert_eq!(x.labels(), y.labels());
    assert_eq!(x.labels().unwrap(), p.entities());
}

#[test]
fn aggregation_commutes_with_grouping() {
    let raw = grouped(40, 5);
    let agg = aggregate_to_targets(&raw).unwrap();
    let out = OutputSpec::TwoSample {
        series: "A".into(),
        groups: ["low".into(), "high".into()],
    };
    let (x, _) = to_sample_panels(&agg, &out).unwrap();
    // group first, then average the two indicators
    let (a1, a2) = (raw.indicator("a1").unwrap(), raw.indicator("a2").unwrap());
    for r in 0..30 {
        for t in 0..20 {
            let want = (a1[[r, t]].unwrap() + a2[[r, t]].unwrap()) / 2.0;
            assert_eq!(x.values()[[r, t]], want);
        }
    }
}

#[test]
fn small_groups_are_rejected() {
    let mut text = String::from("entity,year,indicator,value\n");
    for (e, y) in [("A", 2000), ("A", 2001), ("B", 2000), ("B", 2001), ("C", 2000), ("C", 2001)] {
        writeln!(text, "{e},{y},g,{}", y - 1999).unwrap();
    }
    let schema = Schema::from_toml_str(
        "format_version = 1\n[groups]\nA = \"x\"\nB = \"x\"\nC = \"y\"\n[output]\nmode = \"two-sample\"\nseries = \"g\"\ngroups = [\"x\", \"y\"]\n",
    )
    .unwrap();
    let p = load_csv_reader(text.as_bytes(), &schema).unwrap();
    assert!(matches!(
        to_sample_panels(&p, schema.output.as_ref().unwrap()),
        Err(Error::SampleSize(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn imputation_is_idempotent_and_keeps_observed_cells(seed in 0u64..10_000, missing in 0.0f64..0.3) {
        let p = synthetic(8, 5, &["a", "b"], missing, seed);
        match impute(&p) {
            Ok((once, _)) => {
                let (twice, report) = impute(&once).unwrap();
                prop_assert_eq!(&twice, &once);
                prop_assert_eq!(report.cells_filled, 0);
                for name in ["a", "b"] {
                    let (before, after) = (p.indicator(name).unwrap(), once.indicator(name).unwrap());
                    for (u, v) in before.iter().zip(after) {
                        if u.is_some() {
                            prop_assert_eq!(u, v);
                        }
                    }
                }
            }
            Err(e) => {
                let unimputable = matches!(e, Error::Unimputable { .. });
                prop_assert!(unimputable, "{}", e);
            }
        }
    }
}
