//! Finite-time scattering diagnostics: region projections, deficit series,
//! spectral energy filters and channel occupations.

use num_complex::Complex64;
use rustfft::FftPlanner;
use scatgeo_core::cutoffs::{phi_greater, phi_less};
use scatgeo_core::geometry::ClusterGeometry;
use scatgeo_core::{ClusterDecomposition, JacobiFrame};
use serde::{Deserialize, Serialize};

use crate::error::{numeric_err, param_err, Result};
use crate::grid::GridState;
use crate::hamiltonian::Hamiltonian;

/// Default mollifier collar in grid spacings.
pub const DEFAULT_COLLAR_SPACINGS: f64 = 5.0;

/// The region `prod_{alpha not <= b} F(|x_alpha| >= sigma t) F(|x^b| <= delta t^r)`
/// (`R` in place of `delta t^r` when `r = 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionParams {
    pub b: ClusterDecomposition,
    pub r: f64,
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, rename = "R", skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// Sharp indicators instead of mollified cutoffs.
    #[serde(default)]
    pub sharp: bool,
    /// Mollifier width in norm units; defaults to five grid spacings scaled by
    /// the square root of the largest frame weight.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collar: Option<f64>,
}

impl RegionParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.r) {
            return Err(param_err!("r must lie in [0, 1], got {}", self.r));
        }
        if !(self.sigma > 0.0) {
            return Err(param_err!("sigma must be positive, got {}", self.sigma));
        }
        if self.r > 0.0 {
            match self.delta {
                Some(d) if d > 0.0 => {}
                _ => return Err(param_err!("r > 0 requires a positive delta")),
            }
        } else {
            match self.radius {
                Some(rr) if rr > 0.0 => {}
                _ => return Err(param_err!("r = 0 requires a positive R")),
            }
        }
        if let Some(c) = self.collar {
            if !(c > 0.0) {
                return Err(param_err!("collar must be positive, got {c}"));
            }
        }
        Ok(())
    }

    /// Bound on `|x^b|` at time `t`.
    pub fn internal_bound(&self, t: f64) -> f64 {
        if self.r > 0.0 {
            self.delta.unwrap_or(0.0) * t.powf(self.r)
        } else {
            self.radius.unwrap_or(0.0)
        }
    }
}

/// `F(s >= a)` sharp or mollified on `s^2`.
fn at_least(s: f64, a: f64, collar: Option<f64>) -> f64 {
    match collar {
        None => {
            if s >= a {
                1.0
            } else {
                0.0
            }
        }
        Some(w) => {
            let lo = (a - w).max(0.0);
            phi_greater(s * s, a * a, a * a - lo * lo)
        }
    }
}

/// `F(s <= a)` sharp or mollified on `s^2`.
fn at_most(s: f64, a: f64, collar: Option<f64>) -> f64 {
    match collar {
        None => {
            if s <= a {
                1.0
            } else {
                0.0
            }
        }
        Some(w) => phi_less(s * s, a * a, (a + w) * (a + w) - a * a),
    }
}

fn default_collar(psi: &GridState) -> f64 {
    let wmax = psi.frame.weights().iter().cloned().fold(0.0, f64::max);
    DEFAULT_COLLAR_SPACINGS * psi.grid.spacing() * wmax.sqrt()
}

/// Per-node region weights in `[0, 1]` for the state's grid and frame.
pub fn region_weights(psi: &GridState, p: &RegionParams, t: f64) -> Result<Vec<f64>> {
    p.validate()?;
    if !(t > 0.0) {
        return Err(param_err!("region time must be positive, got {t}"));
    }
    let frame = &psi.frame;
    let mass = frame.mass();
    if p.b.n() != mass.n() {
        return Err(param_err!(
            "decomposition over N = {} for an N = {} state",
            p.b.n(),
            mass.n()
        ));
    }
    let geo = ClusterGeometry::new(mass, &p.b)?;
    let pairs: Vec<_> =
        p.b.intercluster_pairs()
            .into_iter()
            .map(|pair| {
                Ok((
                    mass.pair_reduced_mass(pair).sqrt(),
                    frame.pair_coordinate(pair)?,
                ))
            })
            .collect::<Result<_>>()?;
    let collar = if p.sharp {
        None
    } else {
        Some(p.collar.unwrap_or_else(|| default_collar(psi)))
    };
    let far = p.sigma * t;
    let near = p.internal_bound(t);
    let dim = psi.grid.dim;
    psi.grid
        .nodes()
        .chunks(dim)
        .map(|x| {
            let mut w = 1.0;
            for (s, f) in &pairs {
                w *= at_least(s * f.eval_scalar(x).abs(), far, collar);
                if w == 0.0 {
                    return Ok(0.0);
                }
            }
            let cfg = frame.to_configuration(x)?;
            let intra = geo.norms(&cfg).intra.max(0.0).sqrt();
            Ok(w * at_most(intra, near, collar))
        })
        .collect()
}

/// Pointwise product of `psi` with the region weights.
pub fn region_project(psi: &GridState, p: &RegionParams, t: f64) -> Result<GridState> {
    let w = region_weights(psi, p, t)?;
    let mut out = psi.clone();
    for (v, w) in out.values.iter_mut().zip(&w) {
        *v *= *w;
    }
    Ok(out)
}

/// Deficits and occupations of one region along a time schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeficitSeries {
    pub times: Vec<f64>,
    pub deficit: Vec<f64>,
    pub occupation: Vec<f64>,
    pub norm: Vec<f64>,
    /// Probability within 10% of the grid boundary.
    pub boundary: Vec<f64>,
}

fn check_schedule(schedule: &[f64]) -> Result<()> {
    if schedule.is_empty() {
        return Err(param_err!("empty time schedule"));
    }
    if !(schedule[0] > 0.0) || schedule.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(param_err!(
            "schedule must be positive and strictly increasing"
        ));
    }
    Ok(())
}

/// Advances `psi` from `from` to `to` with steps no longer than `dt`.
pub fn advance(h: &Hamiltonian, psi: &mut GridState, from: f64, to: f64, dt: f64) -> Result<()> {
    if !(dt > 0.0) {
        return Err(param_err!("time step must be positive, got {dt}"));
    }
    let span = to - from;
    let steps = (span.abs() / dt).ceil() as usize;
    h.evolve(psi, span, steps)
}

/// Propagates `psi0` under `h` and records the deficit `||psi - prod F psi||`
/// and occupation `||prod F psi||^2` at each scheduled time.
pub fn deficit_series(
    psi0: &GridState,
    h: &Hamiltonian,
    p: &RegionParams,
    schedule: &[f64],
    dt: f64,
) -> Result<DeficitSeries> {
    check_schedule(schedule)?;
    p.validate()?;
    let mut psi = psi0.clone();
    let mut now = 0.0;
    let mut out = DeficitSeries {
        times: Vec::new(),
        deficit: Vec::new(),
        occupation: Vec::new(),
        norm: Vec::new(),
        boundary: Vec::new(),
    };
    for &t in schedule {
        advance(h, &mut psi, now, t, dt)?;
        now = t;
        let proj = region_project(&psi, p, t)?;
        out.times.push(t);
        out.deficit.push(psi.distance(&proj));
        out.occupation.push(proj.norm_sq());
        out.norm.push(psi.norm());
        out.boundary.push(psi.boundary_mass(0.1));
    }
    Ok(out)
}

/// The interval `[lo, hi]` with a smooth transition band of `width` on each side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyWindow {
    pub lo: f64,
    pub hi: f64,
    pub width: f64,
}

impl EnergyWindow {
    pub fn validate(&self) -> Result<()> {
        if !(self.lo < self.hi && self.width > 0.0) {
            return Err(param_err!(
                "energy window needs lo < hi and width > 0, got {self:?}"
            ));
        }
        Ok(())
    }

    /// `phi(E > lo) phi(E < hi)`: 1 on `[lo, hi]`, 0 outside `[lo - w, hi + w]`.
    pub fn profile(&self, e: f64) -> f64 {
        phi_greater(e, self.lo, self.width) * phi_less(e, self.hi, self.width)
    }

    /// Rejects windows whose support meets a threshold.
    pub fn check_clearance(&self, thresholds: &[f64]) -> Result<()> {
        for &t in thresholds {
            if t > self.lo - self.width && t < self.hi + self.width {
                return Err(param_err!(
                    "threshold {t} lies within the support [{}, {}] of the energy window",
                    self.lo - self.width,
                    self.hi + self.width
                ));
            }
        }
        Ok(())
    }
}

/// Chebyshev expansion controls for [`energy_filter`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSettings {
    pub max_degree: usize,
    /// Bound on the sum of discarded coefficient magnitudes.
    pub tol: f64,
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self {
            max_degree: 60_000,
            tol: 1e-10,
        }
    }
}

/// Chebyshev coefficients of `f(c + a x)` on `[-1, 1]` via a DCT of `n` nodes.
fn chebyshev_coefficients(f: impl Fn(f64) -> f64, c: f64, a: f64, n: usize) -> Vec<f64> {
    use std::f64::consts::PI;
    let samples: Vec<f64> = (0..n)
        .map(|k| f(c + a * (PI * (k as f64 + 0.5) / n as f64).cos()))
        .collect();
    // DCT-II through a length-2n FFT of the even extension.
    let mut buf: Vec<Complex64> = samples
        .iter()
        .chain(samples.iter().rev())
        .map(|v| Complex64::new(*v, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(2 * n).process(&mut buf);
    (0..n)
        .map(|m| {
            let tw = Complex64::from_polar(1.0, -PI * m as f64 / (2.0 * n as f64));
            let x = 0.5 * (tw * buf[m]).re;
            let c = 2.0 * x / n as f64;
            if m == 0 {
                c / 2.0
            } else {
                c
            }
        })
        .collect()
}

/// A filtered state and the polynomial degree used.
#[derive(Debug, Clone)]
pub struct Filtered {
    pub state: GridState,
    pub degree: usize,
    pub tail: f64,
}

/// `f(H) psi` for the window profile `f`, by a Chebyshev expansion whose
/// degree is chosen from the decay of the coefficients.
pub fn energy_filter(
    psi: &GridState,
    h: &Hamiltonian,
    window: &EnergyWindow,
    thresholds: &[f64],
    settings: FilterSettings,
) -> Result<Filtered> {
    window.validate()?;
    window.check_clearance(thresholds)?;
    h.check(psi)?;
    let (emin, emax) = h.spectral_bounds();
    let c = (emax + emin) / 2.0;
    let a = (emax - emin) / 2.0 * 1.01 + 1e-12;
    let nodes = (4 * settings.max_degree).next_power_of_two();
    let coeffs = chebyshev_coefficients(|e| window.profile(e), c, a, nodes);
    let mut tail = 0.0;
    let mut degree = coeffs.len() - 1;
    for (n, v) in coeffs.iter().enumerate().rev() {
        tail += v.abs();
        if tail > settings.tol {
            degree = n;
            break;
        }
    }
    let dropped: f64 = coeffs[degree + 1..].iter().map(|v| v.abs()).sum();
    if degree > settings.max_degree {
        return Err(numeric_err!(
            "energy filter needs degree {degree} > max_degree {} for tolerance {}",
            settings.max_degree,
            settings.tol
        ));
    }
    let scaled = |v: &GridState| -> Result<GridState> {
        let mut hv = h.apply(v)?;
        for (o, x) in hv.values.iter_mut().zip(&v.values) {
            *o = (*o - x * c) / a;
        }
        Ok(hv)
    };
    let mut prev = psi.clone();
    let mut out = psi.clone();
    for v in &mut out.values {
        *v *= coeffs[0];
    }
    if degree >= 1 {
        let mut cur = scaled(psi)?;
        for (o, v) in out.values.iter_mut().zip(&cur.values) {
            *o += v * coeffs[1];
        }
        for coef in &coeffs[2..=degree] {
            let mut next = scaled(&cur)?;
            for (nv, pv) in next.values.iter_mut().zip(&prev.values) {
                *nv = 2.0 * *nv - pv;
            }
            for (o, v) in out.values.iter_mut().zip(&next.values) {
                *o += v * coef;
            }
            prev = cur;
            cur = next;
        }
    }
    if !out.is_finite() {
        return Err(numeric_err!("energy filter produced non-finite values"));
    }
    Ok(Filtered {
        state: out,
        degree,
        tail: dropped,
    })
}

/// Removes the components of `psi` along normalized `states`.
pub fn orthogonalize(psi: &mut GridState, states: &[GridState]) {
    for s in states {
        let c = s.inner(psi) / s.norm_sq();
        for (v, b) in psi.values.iter_mut().zip(&s.values) {
            *v -= c * b;
        }
    }
}

/// Channel occupations at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRow {
    pub t: f64,
    pub occupations: Vec<f64>,
    pub sum: f64,
    /// `sum_{b < b'} int F_b F_b' |psi|^2`.
    pub overlap: f64,
    /// `||psi||^2 - sum`.
    pub residual: f64,
    pub norm_sq: f64,
    pub boundary: f64,
}

/// Occupations of each channel region along a schedule; the last row is the
/// finite-time channel decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelReport {
    pub decompositions: Vec<ClusterDecomposition>,
    pub rows: Vec<ChannelRow>,
}

impl ChannelReport {
    pub fn last(&self) -> &ChannelRow {
        self.rows.last().expect("non-empty schedule")
    }

    /// Final occupation of `b` as a fraction of the norm.
    pub fn fraction(&self, b: &ClusterDecomposition) -> Option<f64> {
        let row = self.last();
        self.decompositions
            .iter()
            .position(|d| d == b)
            .map(|i| row.occupations[i] / row.norm_sq)
    }
}

/// Channel occupations of `psi0` under `h` on the schedule.
pub fn channel_decomposition(
    psi0: &GridState,
    h: &Hamiltonian,
    regions: &[RegionParams],
    schedule: &[f64],
    dt: f64,
) -> Result<ChannelReport> {
    check_schedule(schedule)?;
    for p in regions {
        p.validate()?;
        if p.b.len() < 2 {
            return Err(param_err!("channel regions need |b| >= 2, got {}", p.b));
        }
    }
    let mut psi = psi0.clone();
    let mut now = 0.0;
    let mut rows = Vec::new();
    for &t in schedule {
        advance(h, &mut psi, now, t, dt)?;
        now = t;
        let weights: Vec<Vec<f64>> = regions
            .iter()
            .map(|p| region_weights(&psi, p, t))
            .collect::<Result<_>>()?;
        let occupations: Vec<f64> = weights
            .iter()
            .map(|w| {
                let sq: Vec<f64> = w.iter().map(|v| v * v).collect();
                psi.weighted_mass(&sq)
            })
            .collect();
        let mut overlap = 0.0;
        for i in 0..weights.len() {
            for j in i + 1..weights.len() {
                let prod: Vec<f64> = weights[i]
                    .iter()
                    .zip(&weights[j])
                    .map(|(a, b)| a * a * b * b)
                    .collect();
                overlap += psi.weighted_mass(&prod);
            }
        }
        let sum: f64 = occupations.iter().sum();
        let norm_sq = psi.norm_sq();
        rows.push(ChannelRow {
            t,
            occupations,
            sum,
            overlap,
            residual: norm_sq - sum,
            norm_sq,
            boundary: psi.boundary_mass(0.1),
        });
    }
    Ok(ChannelReport {
        decompositions: regions.iter().map(|p| p.b.clone()).collect(),
        rows,
    })
}

/// Position-side and velocity-side averages of one test function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityComparison {
    pub position_side: f64,
    pub velocity_side: f64,
    pub discrepancy: f64,
}

/// Compares `<phi(|x_b| / t)>` with `<phi(|v_b|)>` for
/// `phi(s) = exp(-s^2 / (2 kappa^2))`, both normalized by `||psi||^2`.
///
/// `v = hbar k / w` per frame coordinate; velocities change frames like positions.
pub fn velocity_comparison(
    psi: &GridState,
    b: &ClusterDecomposition,
    t: f64,
    kappa: f64,
) -> Result<VelocityComparison> {
    if !(t > 0.0 && kappa > 0.0) {
        return Err(param_err!("time and kappa must be positive"));
    }
    let frame = &psi.frame;
    let target = JacobiFrame::build(frame.mass(), b, frame.nu())?;
    let change = scatgeo_core::geometry::FrameChange::between(frame, &target)?;
    let inter = target.intercluster_count();
    let tw = target.weights().to_vec();
    let inter_norm = |x: &[f64]| -> f64 {
        let y = change.apply(x);
        (0..inter).map(|c| tw[c] * y[c] * y[c]).sum::<f64>().sqrt()
    };
    let phi = |s: f64| (-s * s / (2.0 * kappa * kappa)).exp();
    let dim = psi.grid.dim;
    let norm_sq = psi.norm_sq();
    let pos_w: Vec<f64> = psi
        .grid
        .nodes()
        .chunks(dim)
        .map(|x| {
            let s: Vec<f64> = x.iter().map(|v| v / t).collect();
            phi(inter_norm(&s))
        })
        .collect();
    let position_side = psi.weighted_mass(&pos_w) / norm_sq;
    let hbar = frame.mass().hbar();
    let fw = frame.weights().to_vec();
    let vel_w = psi.grid.map_modes(|k| {
        let v: Vec<f64> = k.iter().zip(&fw).map(|(k, w)| hbar * k / w).collect();
        phi(inter_norm(&v))
    });
    let mut hat = psi.values.clone();
    crate::grid::Spectral::new(psi.grid).forward(&mut hat);
    let total: f64 = hat.iter().map(|v| v.norm_sqr()).sum();
    let velocity_side = hat
        .iter()
        .zip(&vel_w)
        .map(|(v, w)| w * v.norm_sqr())
        .sum::<f64>()
        / total;
    Ok(VelocityComparison {
        position_side,
        velocity_side,
        discrepancy: (position_side - velocity_side).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{gaussian, GridSpec};
    use scatgeo_core::MassSpec;

    fn frame2() -> JacobiFrame {
        let m = MassSpec::with_unit_hbar(vec![2.0, 2.0]).unwrap();
        JacobiFrame::build(&m, &ClusterDecomposition::singletons(2), 1).unwrap()
    }

    fn region(sharp: bool) -> RegionParams {
        RegionParams {
            b: ClusterDecomposition::singletons(2),
            r: 1.0,
            sigma: 1.0,
            delta: Some(1.0),
            radius: None,
            sharp,
            collar: None,
        }
    }

    #[test]
    fn validation() {
        let mut p = region(true);
        assert!(p.validate().is_ok());
        p.r = 0.0;
        assert!(p.validate().is_err());
        p.radius = Some(2.0);
        assert!(p.validate().is_ok());
        p.sigma = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn sharp_region_keeps_or_kills() {
        let g = GridSpec::new(1, 40.0, 512).unwrap();
        let psi = gaussian(g, frame2(), &[20.0], &[1.0], &[0.0]).unwrap();
        let p = region(true);
        // |x| >= t = 5 holds wherever psi is not negligible.
        let kept = region_project(&psi, &p, 5.0).unwrap();
        assert!(psi.distance(&kept) < 1e-12);
        let killed = region_project(&psi, &p, 35.0).unwrap();
        assert!(killed.norm() < 1e-12);
        assert!(region_project(&psi, &p, 0.0).is_err());
    }

    #[test]
    fn window_profile_and_clearance() {
        let w = EnergyWindow {
            lo: 1.0,
            hi: 2.0,
            width: 0.5,
        };
        assert_eq!(w.profile(1.5), 1.0);
        assert_eq!(w.profile(0.5), 0.0);
        assert_eq!(w.profile(2.5), 0.0);
        assert!(w.check_clearance(&[0.0, 3.0]).is_ok());
        assert!(w.check_clearance(&[0.7]).is_err());
    }

    #[test]
    fn chebyshev_reproduces_polynomials() {
        let c = chebyshev_coefficients(|x| 2.0 * x * x - 1.0, 0.0, 1.0, 64);
        assert!((c[2] - 1.0).abs() < 1e-13);
        assert!(c[0].abs() < 1e-13 && c[1].abs() < 1e-13 && c[3].abs() < 1e-13);
    }
}
