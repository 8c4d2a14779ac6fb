use scatgeo_core::eikonal::{
    phase_estimates, Branch, EstimateSettings, LongRangePotential, PhaseFunction, PhaseParams,
};

fn report(
    eps: f64,
    depth: usize,
    nu: usize,
    branch: Branch,
) -> scatgeo_core::eikonal::EstimateReport {
    let pot = LongRangePotential::new(1.0, eps).unwrap();
    let mut params = PhaseParams::calibrated(&pot);
    params.depth = depth;
    let pf = PhaseFunction::build(pot, params, nu).unwrap();
    let settings = EstimateSettings {
        seed: 7,
        branch,
        ..EstimateSettings::default()
    };
    phase_estimates(&pf, &settings).unwrap()
}

#[test]
fn correction_grows_like_power_one_minus_eps() {
    for eps in [0.6, 0.8] {
        for nu in [1, 2] {
            let r = report(eps, 1, nu, Branch::Outgoing);
            eprintln!(
                "eps {eps} nu {nu} R0 {}: slope u {:.3}, grad {:.3}, residual {:.3} (eikonal {:.3}, transport {:.3})",
                r.params.r0, r.slope_correction, r.slope_correction_grad, r.slope_residual, r.slope_eikonal, r.slope_transport
            );
            assert!(
                (r.slope_correction - (1.0 - eps)).abs() <= 0.15,
                "{}",
                r.slope_correction
            );
            assert!(r.slope_correction_grad <= -eps + 0.15);
        }
    }
}

#[test]
fn residual_decays_faster_than_potential() {
    let r = report(0.8, 2, 1, Branch::Outgoing);
    eprintln!(
        "K=2: residual slope {:.3}, eikonal {:.3}, transport {:.3}",
        r.slope_residual, r.slope_eikonal, r.slope_transport
    );
    assert!(r.slope_residual <= -(0.8 + 0.5));
    let k1 = report(0.8, 1, 1, Branch::Outgoing);
    eprintln!(
        "K=1: residual slope {:.3}, eikonal {:.3}",
        k1.slope_residual, k1.slope_eikonal
    );
    assert!((k1.slope_eikonal + 1.6).abs() <= 0.3);
    let k3 = report(0.8, 3, 1, Branch::Outgoing);
    for (a, b) in k1.shells.iter().zip(&k3.shells) {
        assert!(
            b.sup_residual <= a.sup_residual * (1.0 + 1e-9),
            "{} > {}",
            b.sup_residual,
            a.sup_residual
        );
    }
}

#[test]
fn incoming_branch_estimates() {
    let r = report(0.7, 1, 2, Branch::Incoming);
    assert!((r.slope_correction - 0.3).abs() <= 0.15);
}
