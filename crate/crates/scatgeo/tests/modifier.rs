use num_complex::Complex64;
use scatgeo::core::eikonal::{LongRangePotential, PhaseFunction, PhaseParams};
use scatgeo::core::{ClusterDecomposition, JacobiFrame, MassSpec};
use scatgeo::grid::gaussian;
use scatgeo::modifier::{apply_modifier, wave_operator_probe, ProbeSettings};
use scatgeo::{GridSpec, GridState};
use serde_json::json;

fn reduced_frame() -> JacobiFrame {
    let m = MassSpec::with_unit_hbar(vec![2.0, 2.0]).unwrap();
    JacobiFrame::build(&m, &ClusterDecomposition::singletons(2), 1).unwrap()
}

fn phase(c: f64, eps: f64) -> PhaseFunction {
    let pot = LongRangePotential::new(c, eps).unwrap();
    PhaseFunction::build(pot, PhaseParams::calibrated(&pot), 1).unwrap()
}

#[test]
fn zero_potential_modifier_is_identity() {
    let pf = phase(0.0, 0.8);
    let grid = GridSpec::new(1, 200.0, 1024).unwrap();
    let psi = gaussian(grid, reduced_frame(), &[120.0], &[5.0], &[1.5]).unwrap();
    let out = apply_modifier(&pf, &psi).unwrap();
    assert!(out.distance(&psi) <= 1e-10);
}

#[test]
fn inner_rows_are_untouched() {
    let pf = phase(1.0, 0.8);
    let edge = pf.params().r0 / 2.0;
    let grid = GridSpec::new(1, 200.0, 1024).unwrap();
    let psi = gaussian(grid, reduced_frame(), &[0.0], &[4.0], &[1.5]).unwrap();
    let out = apply_modifier(&pf, &psi).unwrap();
    for (x, (a, b)) in grid.axis().iter().zip(out.values.iter().zip(&psi.values)) {
        if x.abs() <= edge {
            assert_eq!(a, b, "x = {x}");
        }
    }
}

/// `e^{i (varphi(x, xi0) - x xi0)} psi(x)` on the grid.
fn stationary_phase(pf: &PhaseFunction, psi: &GridState, xi0: f64) -> GridState {
    let mut out = psi.clone();
    for (v, x) in out.values.iter_mut().zip(psi.grid.axis()) {
        let p = pf.value(&[x], &[xi0]).unwrap();
        *v *= Complex64::from_polar(1.0, p - x * xi0);
    }
    out
}

#[test]
fn narrow_momentum_packets_follow_stationary_phase() {
    let pf = phase(1.0, 0.8);
    let grid = GridSpec::new(1, 1024.0, 4096).unwrap();
    let xi0 = 2.0;
    let mut fidelities = Vec::new();
    for width in [8.0, 16.0, 32.0] {
        let psi = gaussian(grid, reduced_frame(), &[400.0], &[width], &[xi0]).unwrap();
        let j = apply_modifier(&pf, &psi).unwrap();
        let approx = stationary_phase(&pf, &psi, xi0);
        let f = j.fidelity(&approx);
        let ratio = j.norm() / psi.norm();
        assert!(
            (ratio - 1.0).abs() <= 0.1,
            "width {width}: norm ratio {ratio}"
        );
        fidelities.push(f);
    }
    assert!(fidelities[2] >= 0.99, "{fidelities:?}");
    assert!(
        fidelities.windows(2).all(|w| w[1] >= w[0] - 1e-9),
        "{fidelities:?}"
    );
}

#[test]
fn modifier_rejects_unresolved_states() {
    let pf = phase(1.0, 0.8);
    let grid = GridSpec::new(1, 64.0, 128).unwrap();
    // Nyquist is pi; a packet at 3 with width 0.5 spills over it.
    let psi = gaussian(grid, reduced_frame(), &[0.0], &[0.5], &[3.0]).unwrap();
    assert!(apply_modifier(&pf, &psi).is_err());
    let m = MassSpec::with_unit_hbar(vec![1.0, 1.0]).unwrap();
    let heavy = JacobiFrame::build(&m, &ClusterDecomposition::singletons(2), 1).unwrap();
    let psi = gaussian(grid, heavy, &[0.0], &[2.0], &[0.5]).unwrap();
    assert!(apply_modifier(&pf, &psi).is_err());
}

#[test]
fn free_probe_is_constant() {
    let s: ProbeSettings = serde_json::from_value(json!({
        "c": 0.0,
        "epsilon": 0.8,
        "grid": {"L": 256.0, "M": 1024},
        "packet": {"center": 0.0, "width": 2.0, "momentum": 2.0},
        "schedule": [10.0, 20.0, 40.0],
        "dt": 0.05
    }))
    .unwrap();
    let report = wave_operator_probe(&s).unwrap();
    for run in [&report.modified, &report.unmodified] {
        assert!(
            run.increments.iter().all(|v| *v <= 1e-10),
            "{:?}",
            run.increments
        );
        assert!(run.localization >= 0.99, "{}", run.localization);
    }
}

#[test]
fn probe_guards_the_boundary() {
    let s: ProbeSettings = serde_json::from_value(json!({
        "c": 1.0,
        "epsilon": 0.8,
        "grid": {"L": 64.0, "M": 256},
        "packet": {"center": 0.0, "width": 2.0, "momentum": 2.0},
        "schedule": [10.0, 40.0],
        "dt": 0.05
    }))
    .unwrap();
    let err = wave_operator_probe(&s).unwrap_err();
    assert_eq!(err.class(), scatgeo::ErrorClass::Numeric);
    assert!(err.to_string().contains("T = 40"), "{err}");
}
