//! The long-range modifier `J_b` on one-dimensional grids and the
//! wave-operator convergence probe.

use num_complex::Complex64;
use scatgeo_core::eikonal::{LongRangePotential, PhaseFunction, PhaseParams};
use scatgeo_core::ClusterDecomposition;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{region_project, RegionParams};
use crate::error::{numeric_err, param_err, Result};
use crate::grid::{gaussian, GridState, Spectral};
use crate::hamiltonian::{Hamiltonian, PotentialPart};
use crate::model::{GridSize, ModelSpec, PairPotential, PotentialKind};

/// Largest admissible spectral weight above 90% of the Nyquist wavenumber.
pub const ALIAS_TOLERANCE: f64 = 1e-10;

/// `psi_hat(xi_k) = h sum_j e^{-i xi_k x_j} psi_j` on the FFT modes.
fn transform(psi: &GridState) -> Vec<Complex64> {
    let g = psi.grid;
    let mut hat = psi.values.clone();
    Spectral::new(g).forward(&mut hat);
    let h = g.spacing();
    for (v, k) in hat.iter_mut().zip(g.wavenumbers()) {
        *v *= Complex64::from_polar(h, k * g.extent);
    }
    hat
}

/// Fraction of `|psi_hat|^2` above 90% of the Nyquist wavenumber.
pub fn alias_fraction(psi: &GridState) -> f64 {
    let hat = transform(psi);
    let cut = 0.9 * std::f64::consts::PI / psi.grid.spacing();
    let total: f64 = hat.iter().map(|v| v.norm_sqr()).sum();
    let high: f64 = hat
        .iter()
        .zip(psi.grid.wavenumbers())
        .filter(|(_, k)| k.abs() > cut)
        .map(|(v, _)| v.norm_sqr())
        .sum();
    if total > 0.0 {
        high / total
    } else {
        0.0
    }
}

fn check_reduced(psi: &GridState) -> Result<()> {
    let f = &psi.frame;
    if psi.grid.dim != 1 || f.dim() != 1 {
        return Err(param_err!("the modifier acts on one-dimensional states"));
    }
    if (f.weights()[0] - 1.0).abs() > 1e-12 || (f.mass().hbar() - 1.0).abs() > 1e-12 {
        return Err(param_err!(
            "the modifier assumes unit reduced mass and hbar = 1, got weight {} and hbar {}",
            f.weights()[0],
            f.mass().hbar()
        ));
    }
    Ok(())
}

/// `J psi(x) = (2 pi)^{-1} int e^{i varphi(x, xi)} psi_hat(xi) d xi`, trapezoidal
/// on the grid's momentum nodes.
///
/// Rows with `|x| <= R_0/2` have phase `x xi` at every node and are left
/// untouched, which is the exact inverse transform.
pub fn apply_modifier(pf: &PhaseFunction, psi: &GridState) -> Result<GridState> {
    check_reduced(psi)?;
    if pf.nu() != 1 {
        return Err(param_err!(
            "the grid modifier needs a one-dimensional phase"
        ));
    }
    let alias = alias_fraction(psi);
    if alias > ALIAS_TOLERANCE {
        return Err(param_err!(
            "state is not band-limited: {alias:.3e} of its momentum weight is near the Nyquist edge"
        ));
    }
    let g = psi.grid;
    let mut out = psi.clone();
    if pf.potential().is_zero() {
        return Ok(out);
    }
    let hat = transform(psi);
    let ks = g.wavenumbers();
    // d xi / (2 pi) = 1 / (M h).
    let inv_m = 1.0 / (g.points as f64 * g.spacing());
    let edge = pf.params().r0 / 2.0;
    for (j, x) in g.axis().into_iter().enumerate() {
        if x.abs() <= edge {
            continue;
        }
        let moments = pf.moments(x)?;
        let mut acc = Complex64::new(0.0, 0.0);
        for (v, &k) in hat.iter().zip(&ks) {
            acc += v * Complex64::from_polar(1.0, pf.value_from_moments(&moments, x, k));
        }
        out.values[j] = acc * inv_m;
    }
    if !out.is_finite() {
        return Err(numeric_err!("modifier produced non-finite values"));
    }
    Ok(out)
}

/// A Gaussian wavepacket in the reduced coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Packet {
    pub center: f64,
    /// Position standard deviation of `|psi|^2`.
    pub width: f64,
    pub momentum: f64,
}

fn default_guard() -> f64 {
    1e-12
}

/// Settings of the wave-operator probe on the reduced two-body model
/// (masses `(2, 2)`, so the relative coordinate has unit mass).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSettings {
    pub c: f64,
    pub epsilon: f64,
    /// Phase parameters; calibrated defaults when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<PhaseParams>,
    pub grid: GridSize,
    pub packet: Packet,
    /// Increasing times `T_k`.
    pub schedule: Vec<f64>,
    pub dt: f64,
    /// Speed threshold of the localization region; half the packet momentum by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Largest probability allowed within 10% of the boundary.
    #[serde(default = "default_guard")]
    pub boundary_guard: f64,
}

impl ProbeSettings {
    pub fn model(&self) -> ModelSpec {
        ModelSpec {
            masses: vec![2.0, 2.0],
            nu: 1,
            pairs: vec![PairPotential {
                i: 1,
                j: 2,
                kind: PotentialKind::LongRangePower,
                c: self.c,
                epsilon: Some(self.epsilon),
            }],
            grid: self.grid,
            hbar: 1.0,
        }
    }

    pub fn phase_function(&self) -> Result<PhaseFunction> {
        let pot = LongRangePotential::new(self.c, self.epsilon)?;
        let params = self.phase.unwrap_or_else(|| PhaseParams::calibrated(&pot));
        Ok(PhaseFunction::build(pot, params, 1)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.model().validate()?;
        if self.schedule.len() < 2
            || !(self.schedule[0] > 0.0)
            || self.schedule.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(param_err!(
                "probe schedule needs at least two positive increasing times"
            ));
        }
        if !(self.dt > 0.0) {
            return Err(param_err!("time step must be positive"));
        }
        if !(self.packet.width > 0.0) {
            return Err(param_err!("packet width must be positive"));
        }
        Ok(())
    }
}

/// One probe run, with or without the modifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRun {
    pub modified: bool,
    /// `||Omega(T_{k+1}) - Omega(T_k)||`.
    pub increments: Vec<f64>,
    /// Successive increment ratios.
    pub ratios: Vec<f64>,
    /// `||J e^{-iTH_b} psi|| / ||psi||` per schedule time.
    pub modifier_norm: Vec<f64>,
    /// Largest boundary mass seen.
    pub boundary: f64,
    /// Occupation of `|x| >= sigma T_max` by `e^{-i T_max H} Omega(T_max)`.
    pub localization: f64,
}

/// The A/B comparison report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub schedule: Vec<f64>,
    pub phase: PhaseParams,
    pub sigma: f64,
    pub modified: ProbeRun,
    pub unmodified: ProbeRun,
}

fn run_probe(
    settings: &ProbeSettings,
    pf: &PhaseFunction,
    h_full: &Hamiltonian,
    h_free: &Hamiltonian,
    psi: &GridState,
    sigma: f64,
    modified: bool,
) -> Result<ProbeRun> {
    let mut omegas: Vec<GridState> = Vec::new();
    let mut modifier_norm = Vec::new();
    let mut boundary: f64 = 0.0;
    let mut localization = 0.0;
    let n0 = psi.norm();
    for (idx, &t) in settings.schedule.iter().enumerate() {
        let mut out = psi.clone();
        h_free.free_evolve(&mut out, t)?;
        let b = out.boundary_mass(0.1);
        boundary = boundary.max(b);
        if b > settings.boundary_guard {
            return Err(numeric_err!(
                "packet reached the boundary guard at T = {t} (mass {b:.3e})"
            ));
        }
        let mut jpsi = if modified {
            apply_modifier(pf, &out)?
        } else {
            out
        };
        modifier_norm.push(jpsi.norm() / n0);
        if idx + 1 == settings.schedule.len() {
            let region = RegionParams {
                b: ClusterDecomposition::singletons(2),
                r: 0.0,
                sigma,
                delta: None,
                radius: Some(1.0),
                sharp: true,
                collar: None,
            };
            localization = region_project(&jpsi, &region, t)?.norm_sq() / jpsi.norm_sq();
        }
        let steps = (t / settings.dt).ceil() as usize;
        h_full.evolve(&mut jpsi, -t, steps)?;
        omegas.push(jpsi);
    }
    let increments: Vec<f64> = omegas.windows(2).map(|w| w[1].distance(&w[0])).collect();
    let ratios = increments.windows(2).map(|w| w[1] / w[0]).collect();
    Ok(ProbeRun {
        modified,
        increments,
        ratios,
        modifier_norm,
        boundary,
        localization,
    })
}

/// `Omega(T) = e^{iTH} J e^{-iTH_b} psi` on the schedule, with and without `J`.
pub fn wave_operator_probe(settings: &ProbeSettings) -> Result<ProbeReport> {
    settings.validate()?;
    let model = settings.model();
    let b = ClusterDecomposition::singletons(2);
    let h_full = Hamiltonian::new(&model, &b, PotentialPart::Full)?;
    let h_free = Hamiltonian::new(&model, &b, PotentialPart::Free)?;
    let pf = settings.phase_function()?;
    let p = settings.packet;
    let psi = gaussian(
        *h_full.grid(),
        h_full.frame().clone(),
        &[p.center],
        &[p.width],
        &[p.momentum],
    )?;
    let sigma = settings.sigma.unwrap_or(p.momentum.abs() / 2.0);
    let modified = run_probe(settings, &pf, &h_full, &h_free, &psi, sigma, true)?;
    let unmodified = run_probe(settings, &pf, &h_full, &h_free, &psi, sigma, false)?;
    Ok(ProbeReport {
        schedule: settings.schedule.clone(),
        phase: *pf.params(),
        sigma,
        modified,
        unmodified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use scatgeo_core::{JacobiFrame, MassSpec};

    fn frame() -> JacobiFrame {
        let m = MassSpec::with_unit_hbar(vec![2.0, 2.0]).unwrap();
        JacobiFrame::build(&m, &ClusterDecomposition::singletons(2), 1).unwrap()
    }

    #[test]
    fn zero_potential_is_identity() {
        let pot = LongRangePotential::new(0.0, 0.8).unwrap();
        let pf = PhaseFunction::build(pot, PhaseParams::calibrated(&pot), 1).unwrap();
        let g = GridSpec::new(1, 100.0, 1024).unwrap();
        let psi = gaussian(g, frame(), &[40.0], &[3.0], &[1.5]).unwrap();
        let out = apply_modifier(&pf, &psi).unwrap();
        assert!(out.distance(&psi) < 1e-10);
    }

    #[test]
    fn direct_sum_matches_fft_for_linear_phase() {
        // With a potential whose correction vanishes on the packet, the direct
        // rows must reproduce the inverse transform.
        let pot = LongRangePotential::new(1.0, 0.8).unwrap();
        let params = PhaseParams {
            theta: 0.5,
            d: 0.5,
            r0: 64.0,
            depth: 2,
        };
        let pf = PhaseFunction::build(pot, params, 1).unwrap();
        let g = GridSpec::new(1, 400.0, 2048).unwrap();
        // Momentum spread far below d/2 keeps the glue at zero.
        let psi = gaussian(g, frame(), &[0.0], &[24.0], &[0.0]).unwrap();
        let out = apply_modifier(&pf, &psi).unwrap();
        assert!(out.distance(&psi) < 1e-10);
    }

    #[test]
    fn aliasing_guard() {
        let pot = LongRangePotential::new(1.0, 0.8).unwrap();
        let pf = PhaseFunction::build(pot, PhaseParams::calibrated(&pot), 1).unwrap();
        let g = GridSpec::new(1, 10.0, 64).unwrap();
        let psi = gaussian(g, frame(), &[0.0], &[0.1], &[9.0]).unwrap();
        assert!(matches!(
            apply_modifier(&pf, &psi),
            Err(crate::Error::Parameter(_))
        ));
    }
}
