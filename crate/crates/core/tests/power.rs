use std::f64::consts::FRAC_PI_4;

use nskt::hypothesis::{mmd_two_sample_test, hsic_independence_test, TestConfig};
use nskt::kernels::KernelConfig;
use nskt::power::{
    hsic_power_criterion, mmd_power_criterion, optimise_and_test, preset_grid, select_bandwidth,
    split_train_test, GridExperiment, GridProvenance, SearchGrid, SearchKind, SearchOptions,
};
use nskt::panel::SamplePanel;
use nskt::synth::{generate, CoeffDist, GeneratorSpec};

#[test]
fn splits_partition_rows() {
    let s = split_train_test(8, 0.5, 1).unwrap();
    assert_eq!((s.train.len(), s.test.len()), (4, 4));
    assert!(s.is_partition_of(8));
    let s = split_train_test(100, 0.5, 2).unwrap();
    assert_eq!((s.train.len(), s.test.len()), (50, 50));
    assert_eq!(split_train_test(100, 0.5, 2).unwrap(), s);
    assert_ne!(split_train_test(100, 0.5, 3).unwrap(), s);
    assert!(split_train_test(7, 0.5, 0).is_err());
}

#[test]
fn mmd_criterion_grows_with_mean_shift() {
    let wins = (0..100u64)
        .filter(|&s| {
            let (x0, y0) = generate(&GeneratorSpec::mean_shift(25, 25, 20, 0.0, s)).unwrap();
            let (x3, y3) = generate(&GeneratorSpec::mean_shift(25, 25, 20, 3.0, s)).unwrap();
            mmd_power_criterion(&x3, &y3, 10.0).unwrap() > mmd_power_criterion(&x0, &y0, 10.0).unwrap()
        })
        .count();
    assert!(wins >= 95, "{wins} of 100");
}

#[test]
fn hsic_criterion_grows_with_rotation() {
    let wins = (0..100u64)
        .filter(|&s| {
            let spec = GeneratorSpec::rotation(100, 10, FRAC_PI_4, CoeffDist::Uniform, s);
            let (x1, y1) = generate(&spec).unwrap();
            let (x0, y0) = generate(&GeneratorSpec { theta: 0.0, ..spec }).unwrap();
            hsic_power_criterion(&x1, &y1, 20.0, 20.0).unwrap()
                > hsic_power_criterion(&x0, &y0, 20.0, 20.0).unwrap()
        })
        .count();
    assert!(wins >= 95, "{wins} of 100");
}

#[test]
fn criteria_are_scale_and_permutation_invariant() {
    let (x, y) = generate(&GeneratorSpec::mean_shift(12, 12, 8, 1.0, 9)).unwrap();
    let c = 3.5;
    let a = mmd_power_criterion(&x, &y, 4.0).unwrap();
    let b = mmd_power_criterion(&x.scaled(c).unwrap(), &y.scaled(c).unwrap(), 4.0 * c).unwrap();
    assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));

    let (x, y) = generate(&GeneratorSpec::shared_coeff(12, 6, 10)).unwrap();
    let perm: Vec<usize> = (0..12).rev().collect();
    let a = hsic_power_criterion(&x, &y, 5.0, 6.0).unwrap();
    let b = hsic_power_criterion(&x.select_rows(&perm).unwrap(), &y.select_rows(&perm).unwrap(), 5.0, 6.0)
        .unwrap();
    assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
}

#[test]
fn constant_panels_give_zero_criterion() {
    let p = SamplePanel::from_rows(&vec![vec![1.0, -1.0, 2.0]; 8]).unwrap();
    assert_eq!(mmd_power_criterion(&p, &p, 1.0).unwrap(), 0.0);
    // rounding in the HSIC sums is amplified by 1 / √λ
    assert!(hsic_power_criterion(&p, &p, 1.0, 1.0).unwrap().abs() < 1e-9);
}

#[test]
fn selection_is_the_argmax_of_pointwise_criteria() {
    let (x, y) = generate(&GeneratorSpec::mean_shift(20, 20, 10, 2.0, 11)).unwrap();
    let grid = SearchGrid::custom(vec![2.0, 4.0, 8.0, 16.0, 32.0]).unwrap();
    let sel = select_bandwidth(&x, &y, SearchKind::Mmd, &grid, None, &SearchOptions::studentised(0)).unwrap();
    let direct: Vec<f64> = grid.values().iter().map(|&s| mmd_power_criterion(&x, &y, s).unwrap()).collect();
    for (a, b) in sel.criterion.iter().zip(&direct) {
        assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
    }
    let best = direct.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let at = direct.iter().position(|&v| v == best).unwrap();
    assert_eq!(sel.selected, vec![grid.values()[at]]);

    // reversed input order sorts to the same grid and the same choice
    let reversed = SearchGrid::custom(vec![32.0, 16.0, 8.0, 4.0, 2.0]).unwrap();
    let again = select_bandwidth(&x, &y, SearchKind::Mmd, &reversed, None, &SearchOptions::studentised(0)).unwrap();
    assert_eq!(again.selected, sel.selected);

    let single = SearchGrid::custom(vec![7.0]).unwrap();
    let one = select_bandwidth(&x, &y, SearchKind::Hsic, &single, Some(&single), &SearchOptions::studentised(0))
        .unwrap();
    assert_eq!(one.selected, vec![7.0, 7.0]);
}

#[test]
fn hsic_search_covers_the_cartesian_product() {
    let (x, y) = generate(&GeneratorSpec::rotation(20, 5, FRAC_PI_4, CoeffDist::Uniform, 12)).unwrap();
    let gx = SearchGrid::custom(vec![5.0, 10.0, 20.0]).unwrap();
    let gy = SearchGrid::custom(vec![4.0, 8.0]).unwrap();
    let sel = select_bandwidth(&x, &y, SearchKind::Hsic, &gx, Some(&gy), &SearchOptions::studentised(0)).unwrap();
    assert_eq!(sel.criterion.len(), 6);
    let want = hsic_power_criterion(&x, &y, 10.0, 8.0).unwrap();
    assert!((sel.criterion[3] - want).abs() < 1e-12 * (1.0 + want.abs()));
    assert!(gx.values().contains(&sel.selected[0]) && gy.values().contains(&sel.selected[1]));
}

#[test]
fn preset_grids() {
    let g = preset_grid(GridExperiment::MeanShift, 1.5).unwrap();
    assert_eq!(g.values(), (0..11).map(|k| 1.0 + 2.0 * k as f64).collect::<Vec<_>>().as_slice());
    assert_eq!(g.provenance(), GridProvenance::PresetMeanShift);
    let g = preset_grid(GridExperiment::VarShift, 20.0).unwrap();
    assert_eq!(g.values(), (0..11).map(|k| 30.0 + 2.0 * k as f64).collect::<Vec<_>>().as_slice());
    let g = preset_grid(GridExperiment::RotationUniform, 0.3).unwrap();
    assert_eq!(g.len(), 40);
    assert_eq!((g.values()[0], g.values()[39]), (1.0, 40.0));
    let g = preset_grid(GridExperiment::RotationStudentT, 0.3).unwrap();
    assert_eq!(g.values(), (1..=20).map(f64::from).collect::<Vec<_>>().as_slice());
    assert!(preset_grid(GridExperiment::MeanShift, 9.0).is_none());
}

#[test]
fn final_test_uses_only_held_out_rows() {
    let (x, y) = generate(&GeneratorSpec::mean_shift(40, 36, 10, 2.0, 13)).unwrap();
    let grid = preset_grid(GridExperiment::MeanShift, 2.0).unwrap();
    let config = TestConfig::new(0.05, 200, 14).unwrap();
    let (search, result) =
        optimise_and_test(&x, &y, SearchKind::Mmd, &grid, None, 0.5, &SearchOptions::studentised(15), &config)
            .unwrap();
    let sy = search.split_y.clone().unwrap();
    assert!(search.split_x.is_partition_of(40) && sy.is_partition_of(36));
    let held_out = mmd_two_sample_test(
        &x.select_rows(&search.split_x.test).unwrap(),
        &y.select_rows(&sy.test).unwrap(),
        &KernelConfig::gaussian(search.selection.selected[0]),
        &config,
    )
    .unwrap();
    assert_eq!(held_out, result);

    let (x, y) = generate(&GeneratorSpec::shared_coeff(30, 6, 16)).unwrap();
    let grid = SearchGrid::custom(vec![2.0, 5.0, 10.0]).unwrap();
    let (search, result) =
        optimise_and_test(&x, &y, SearchKind::Hsic, &grid, Some(&grid), 0.5, &SearchOptions::studentised(17), &config)
            .unwrap();
    let test = &search.split_x.test;
    let held_out = hsic_independence_test(
        &x.select_rows(test).unwrap(),
        &y.select_rows(test).unwrap(),
        &KernelConfig::gaussian(search.selection.selected[0]),
        &KernelConfig::gaussian(search.selection.selected[1]),
        &config,
    )
    .unwrap();
    assert_eq!(held_out, result);
}
