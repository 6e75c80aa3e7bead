//! Cross-module properties of the particle pipeline, the config format and
//! the series files.

use nalgebra::Vector3;
use proptest::prelude::*;
use vnsim::characteristics::ZeroField;
use vnsim::config::SimConfig;
use vnsim::profiles::{make_bump, InitialData};
use vnsim::runner::{merge_series, read_series, run_scenario, write_series, Row, COLUMNS};
use vnsim::vlasov_pic::{evaluate_f, push_all, sample_particles_with};

fn free_data() -> InitialData {
    let mut d = InitialData::zero(1.0);
    d.f_in = make_bump([0.0, 0.0, 0.0, 0.2, 0.0, 0.0], 0.5, 0.05, 2).unwrap();
    d
}

/// Mass in the box `[lo, hi]^3` at time `t` from `evaluate_f`, midpoint rule.
fn box_mass_semi_lagrangian(d: &InitialData, t: f64, lo: f64, hi: f64, mx: usize, mp: usize) -> f64 {
    let r = d.f_in.radius;
    let c = d.f_momentum_center();
    let (hx, hp) = ((hi - lo) / mx as f64, 2.0 * r / mp as f64);
    let mid = |i: usize, a: f64, step: f64| a + (i as f64 + 0.5) * step;
    let mut total = 0.0;
    for i in 0..mx.pow(3) {
        let x = Vector3::new(mid(i % mx, lo, hx), mid(i / mx % mx, lo, hx), mid(i / (mx * mx), lo, hx));
        for j in 0..mp.pow(3) {
            let p = c + Vector3::new(
                mid(j % mp, -r, hp),
                mid(j / mp % mp, -r, hp),
                mid(j / (mp * mp), -r, hp),
            );
            total += evaluate_f(t, &x, &p, d, &ZeroField, t).unwrap();
        }
    }
    total * hx.powi(3) * hp.powi(3)
}

fn box_mass_ensemble(d: &InitialData, t: f64, lo: f64, hi: f64, n: usize) -> f64 {
    let mut ens = sample_particles_with(d, n, n).unwrap();
    push_all(&mut ens, &ZeroField, 0.0, t).unwrap();
    let inside = |v: &Vector3<f64>| v.iter().all(|c| *c >= lo && *c < hi);
    ens.particles.iter().filter(|q| inside(&q.x)).map(|q| q.w).sum()
}

#[test]
fn ensemble_and_backward_characteristics_agree_on_cell_masses() {
    let d = free_data();
    let t = 2.0;
    let (lo, hi) = (0.0, 0.5);
    let reference = box_mass_semi_lagrangian(&d, t, lo, hi, 8, 16);
    assert!(reference > 0.0);
    let errs: Vec<f64> =
        [4, 8, 16].iter().map(|&n| (box_mass_ensemble(&d, t, lo, hi, n) - reference).abs() / reference).collect();
    assert!(errs[2] < errs[0], "{errs:?}");
    assert!(errs[2] < 0.05, "{errs:?}");
}

fn arb_row() -> impl Strategy<Value = Row> {
    proptest::collection::vec(-1e6f64..1e6, COLUMNS.len()).prop_map(|v| Row::from_values(&v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn config_text_round_trips(
        h in 0.25f64..2.0,
        courant in 0.1f64..0.57,
        t_end in 1.0f64..50.0,
        n_x in 2usize..8,
        n_p in 2usize..8,
        beta in 0.51f64..0.74,
        delta in 0.0f64..3.0,
        coupling in any::<bool>(),
    ) {
        let text = format!(
            "R = 1\nf_radius = 0.5\nh = {h}\ndt = {}\nt_end = {t_end}\nn_x = {n_x}\nn_p = {n_p}\n\
             beta = {beta}\ndelta = {delta}\ncoupling = {coupling}\n",
            courant * h
        );
        let cfg = SimConfig::parse(&text).unwrap();
        let back = SimConfig::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn series_files_round_trip_exactly(rows in proptest::collection::vec(arb_row(), 0..12)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        write_series(&mut f, "abc", &rows).unwrap();
        drop(f);
        let (hash, back) = read_series(&path).unwrap();
        prop_assert_eq!(hash, "abc");
        prop_assert_eq!(back, rows);
    }

    #[test]
    fn merged_series_are_sorted_without_repeats(
        a in proptest::collection::vec(arb_row(), 0..8),
        b in proptest::collection::vec(arb_row(), 0..8),
    ) {
        let merged = merge_series(&[("h".into(), a.clone()), ("h".into(), b.clone())]).unwrap();
        prop_assert!(merged.windows(2).all(|w| w[0].t < w[1].t));
        prop_assert!(merged.iter().all(|r| a.contains(r) || b.contains(r)));
        prop_assert!(merge_series(&[("h".into(), a), ("g".into(), b)]).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn small_runs_stay_inside_the_cone(
        delta in 0.1f64..2.0,
        cx in -0.2f64..0.2,
        px in -0.3f64..0.3,
        coupling in any::<bool>(),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "R = 1\nf_center = {cx}, 0, 0, {px}, 0, 0\nf_radius = 0.5\nf_amplitude = 0.05\n\
             phi1_amplitude = 0.01\ndelta = {delta}\ncoupling = {coupling}\nh = 1\ndt = 0.5\n\
             t_end = 3\nn_x = 3\nn_p = 6\nfit_window = 0.5, 3\nk_fit_window = 0.5, 3\n\
             history_stride = 2\nvalidation_samples = 20\noutput_dir = {}\n",
            dir.path().display()
        );
        let s = run_scenario(&SimConfig::parse(&text).unwrap()).unwrap();
        prop_assert!(s.max_mu_outside_cone < 1e-14);
        let v = s.validation.unwrap();
        prop_assert_eq!(v.f_outside_cone, 0.0);
        prop_assert!(v.f_max <= v.f_bound);
        prop_assert!(s.max_momentum_support <= 2.0);
    }
}
