use proptest::prelude::*;
use scatgeo::core::{ClusterDecomposition, JacobiFrame, MassSpec};
use scatgeo::diagnostics::{
    channel_decomposition, energy_filter, region_project, velocity_comparison, EnergyWindow,
    FilterSettings, RegionParams,
};
use scatgeo::eigen::solve_bound_states;
use scatgeo::grid::gaussian;
use scatgeo::{GridSpec, Hamiltonian, ModelSpec, PotentialPart};
use serde_json::json;

fn model(v: serde_json::Value) -> ModelSpec {
    serde_json::from_value(v).unwrap()
}

fn pt_hamiltonian() -> Hamiltonian {
    let m = model(json!({
        "masses": [2.0, 2.0],
        "pairs": [{"i": 1, "j": 2, "kind": "poschl_teller", "c": -1.0}],
        "grid": {"L": 20.0, "M": 128}
    }));
    Hamiltonian::new(
        &m,
        &ClusterDecomposition::singletons(2),
        PotentialPart::Full,
    )
    .unwrap()
}

fn frame3() -> JacobiFrame {
    let m = MassSpec::with_unit_hbar(vec![2.0, 2.0, 2.0]).unwrap();
    JacobiFrame::build(&m, &ClusterDecomposition::singletons(3), 1).unwrap()
}

fn regions_for(n: usize, sigma: f64, delta: f64) -> Vec<RegionParams> {
    ClusterDecomposition::enumerate(n)
        .unwrap()
        .into_iter()
        .filter(|b| b.len() >= 2)
        .map(|b| RegionParams {
            b,
            r: 1.0,
            sigma,
            delta: Some(delta),
            radius: None,
            sharp: false,
            collar: None,
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn region_projection_is_a_contraction(
        block in 0usize..5,
        sigma in 0.05f64..2.0,
        delta in 0.05f64..2.0,
        t in 0.5f64..20.0,
        sharp in any::<bool>(),
        cx in -5.0f64..5.0,
        cy in -5.0f64..5.0,
    ) {
        let grid = GridSpec::new(2, 16.0, 64).unwrap();
        let psi = gaussian(grid, frame3(), &[cx, cy], &[1.5, 1.0], &[0.3, -0.2]).unwrap();
        let b = ClusterDecomposition::enumerate(3).unwrap().swap_remove(block);
        let p = RegionParams {
            b,
            r: 1.0,
            sigma,
            delta: Some(delta),
            radius: None,
            sharp,
            collar: None,
        };
        let out = region_project(&psi, &p, t).unwrap();
        prop_assert!(out.norm() <= psi.norm() * (1.0 + 1e-12));
    }
}

#[test]
fn vanishing_collar_recovers_sharp_region() {
    let grid = GridSpec::new(2, 16.0, 64).unwrap();
    let psi = gaussian(grid, frame3(), &[3.0, -2.0], &[1.0, 1.0], &[0.0, 0.0]).unwrap();
    for mut p in regions_for(3, 0.4, 0.6) {
        p.sharp = true;
        let sharp = region_project(&psi, &p, 5.0).unwrap().norm_sq();
        p.sharp = false;
        let smooth = region_project(&psi, &p, 5.0).unwrap().norm_sq();
        let mut thin = p.clone();
        thin.collar = Some(1e-6);
        let thin = region_project(&psi, &thin, 5.0).unwrap().norm_sq();
        assert!((thin - sharp).abs() <= 1e-2, "{}: {thin} vs {sharp}", p.b);
        assert!(smooth <= psi.norm_sq() + 1e-12);
    }
}

#[test]
fn filter_keeps_eigenstates_inside_the_window() {
    let h = pt_hamiltonian();
    let ground = solve_bound_states(&h, 1).unwrap().remove(0).state;
    let inside = EnergyWindow {
        lo: -0.6,
        hi: -0.4,
        width: 0.1,
    };
    let out = energy_filter(&ground, &h, &inside, &[], FilterSettings::default()).unwrap();
    assert!(out.state.fidelity(&ground) >= 1.0 - 1e-6);
    assert!((out.state.norm() - 1.0).abs() <= 1e-6);

    let outside = EnergyWindow {
        lo: 0.5,
        hi: 2.0,
        width: 0.2,
    };
    let out = energy_filter(&ground, &h, &outside, &[], FilterSettings::default()).unwrap();
    assert!(out.state.norm() <= 1e-6, "{}", out.state.norm());
}

#[test]
fn filter_fixes_states_inside_its_plateau() {
    let h = pt_hamiltonian();
    let thr = [-0.5, 0.0];
    let psi = gaussian(*h.grid(), h.frame().clone(), &[-4.0], &[1.5], &[1.2]).unwrap();
    // Support of the inner window lies in the plateau of the outer one.
    let inner = EnergyWindow {
        lo: 0.5,
        hi: 0.8,
        width: 0.15,
    };
    let outer = EnergyWindow {
        lo: 0.3,
        hi: 1.0,
        width: 0.2,
    };
    let once = energy_filter(&psi, &h, &inner, &thr, FilterSettings::default()).unwrap();
    assert!(once.state.norm() > 0.1);
    let twice = energy_filter(&once.state, &h, &outer, &thr, FilterSettings::default()).unwrap();
    let d = twice.state.distance(&once.state);
    assert!(d <= 1e-8, "{d:e}");
    let e = h.energy(&once.state).unwrap();
    assert!((0.35..=0.95).contains(&e), "{e}");
}

#[test]
fn filter_squares_in_the_transition_band() {
    // f(H)^2 differs from f(H) by the weight in the smooth bands.
    let h = pt_hamiltonian();
    let psi = gaussian(*h.grid(), h.frame().clone(), &[-4.0], &[1.5], &[1.2]).unwrap();
    let w = EnergyWindow {
        lo: 0.3,
        hi: 1.0,
        width: 0.2,
    };
    let once = energy_filter(&psi, &h, &w, &[0.0], FilterSettings::default()).unwrap();
    let twice = energy_filter(&once.state, &h, &w, &[0.0], FilterSettings::default()).unwrap();
    assert!(twice.state.norm() <= once.state.norm() + 1e-10);
    assert!(twice.state.distance(&once.state) <= 0.1 * psi.norm());
}

#[test]
fn filter_rejects_windows_touching_thresholds() {
    let h = pt_hamiltonian();
    let psi = gaussian(*h.grid(), h.frame().clone(), &[0.0], &[1.0], &[0.0]).unwrap();
    let window = EnergyWindow {
        lo: 0.05,
        hi: 1.0,
        width: 0.1,
    };
    let err = energy_filter(&psi, &h, &window, &[-0.5, 0.0], FilterSettings::default());
    assert!(err.is_err());
    let tight = FilterSettings {
        max_degree: 10,
        tol: 1e-10,
    };
    let clear = EnergyWindow {
        lo: 0.3,
        hi: 1.0,
        width: 0.1,
    };
    assert!(energy_filter(&psi, &h, &clear, &[0.0], tight).is_err());
}

#[test]
fn two_body_mass_stays_in_the_only_channel() {
    let m = model(json!({"masses": [2.0, 2.0], "grid": {"L": 100.0, "M": 512}}));
    let h = Hamiltonian::new(
        &m,
        &ClusterDecomposition::singletons(2),
        PotentialPart::Full,
    )
    .unwrap();
    let psi = gaussian(*h.grid(), h.frame().clone(), &[0.0], &[2.0], &[2.0]).unwrap();
    let report = channel_decomposition(
        &psi,
        &h,
        &regions_for(2, 0.5, 0.5),
        &[5.0, 10.0, 20.0],
        0.02,
    )
    .unwrap();
    let last = report.last();
    assert!(last.boundary <= 1e-12);
    assert!(
        report
            .fraction(&ClusterDecomposition::singletons(2))
            .unwrap()
            >= 0.99
    );
    assert_eq!(last.overlap, 0.0);
    assert!((last.sum + last.residual - last.norm_sq).abs() <= 1e-12);
}

#[test]
fn channel_sums_balance_with_overlap() {
    let m = model(json!({"masses": [2.0, 2.0, 2.0], "grid": {"L": 30.0, "M": 64}}));
    let h = Hamiltonian::new(
        &m,
        &ClusterDecomposition::singletons(3),
        PotentialPart::Full,
    )
    .unwrap();
    let psi = gaussian(
        *h.grid(),
        h.frame().clone(),
        &[0.0, 0.0],
        &[1.5, 1.5],
        &[1.0, 1.0],
    )
    .unwrap();
    let report =
        channel_decomposition(&psi, &h, &regions_for(3, 0.3, 0.3), &[2.0, 4.0], 0.02).unwrap();
    for row in &report.rows {
        assert!((row.sum + row.residual - row.norm_sq).abs() <= 1e-12);
        assert!(row.overlap >= 0.0);
        assert!(row
            .occupations
            .iter()
            .all(|o| *o >= 0.0 && *o <= row.norm_sq + 1e-12));
    }
}

#[test]
fn channel_regions_need_two_clusters() {
    let m = model(json!({"masses": [2.0, 2.0], "grid": {"L": 20.0, "M": 64}}));
    let h = Hamiltonian::new(
        &m,
        &ClusterDecomposition::singletons(2),
        PotentialPart::Full,
    )
    .unwrap();
    let psi = gaussian(*h.grid(), h.frame().clone(), &[0.0], &[1.0], &[0.0]).unwrap();
    let bad = RegionParams {
        b: ClusterDecomposition::one_block(2),
        r: 1.0,
        sigma: 0.5,
        delta: Some(0.5),
        radius: None,
        sharp: false,
        collar: None,
    };
    assert!(channel_decomposition(&psi, &h, &[bad], &[1.0], 0.01).is_err());
}

#[test]
fn positions_over_time_approach_velocities() {
    let m = model(json!({"masses": [2.0, 2.0], "grid": {"L": 200.0, "M": 1024}}));
    let h = Hamiltonian::new(
        &m,
        &ClusterDecomposition::singletons(2),
        PotentialPart::Free,
    )
    .unwrap();
    let start = gaussian(*h.grid(), h.frame().clone(), &[0.0], &[1.0], &[1.0]).unwrap();
    let b = ClusterDecomposition::singletons(2);
    let mut previous = f64::INFINITY;
    for t in [5.0, 20.0, 80.0] {
        let mut psi = start.clone();
        h.free_evolve(&mut psi, t).unwrap();
        let cmp = velocity_comparison(&psi, &b, t, 1.0).unwrap();
        assert!(cmp.discrepancy < previous, "t = {t}: {cmp:?}");
        previous = cmp.discrepancy;
    }
    assert!(previous <= 1e-2, "{previous}");
}
