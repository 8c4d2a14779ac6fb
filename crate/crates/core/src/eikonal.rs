//! Long-range phase for a two-cluster decomposition and its residual symbol.
//!
//! The intercluster coordinate `x` lives in `R^nu`, measured so the free
//! kinetic energy is `|xi|^2 / 2` (unit reduced mass, `hbar = 1`). The phase is
//! `x . xi + u(x, xi)` where `u` approximately solves
//!
//! ```text
//! xi . grad u + |grad u|^2 / 2 + I(x) = 0
//! ```
//!
//! by Picard iteration along straight lines:
//!
//! ```text
//! u_{k+1}^±(x, xi) = ± int_0^inf [G_k(x ± s xi) - G_k(± s xi)] ds,   G_k = I + |grad u_k|^2 / 2,   u_0 = 0.
//! ```
//!
//! The subtraction at `± s xi` renormalizes the divergent integral of a
//! potential decaying like `|x|^{-eps}` with `eps < 1`.
//!
//! In one dimension both branches collapse onto the same line and the iterates
//! have the closed form `u_K = -sum_p a_p xi^{1-2p} int_0^x I^p`, where the
//! coefficients come from the polynomial recursion `P_0(t) = t`,
//! `P_k(t) = t + P_{k-1}(t)^2 / 2`. Any depth is then a handful of 1D integrals.
//! In higher dimension only `K = 1` is provided.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cutoffs::{chi0, psi_minus, psi_plus};
use crate::error::{param_err, Error, Result};
use crate::quadrature::{integrate, integrate_half_line, Tolerance};
use crate::sampling::SplitRng;

/// Largest Picard depth accepted in one dimension.
pub const MAX_DEPTH: usize = 6;

/// `I(x) = c (1 + |x|^2)^{-eps/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LongRangePotential {
    pub c: f64,
    pub epsilon: f64,
}

impl LongRangePotential {
    pub fn new(c: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(param_err!(
                "long-range exponent must lie in (0, 1), got {epsilon}"
            ));
        }
        if !c.is_finite() {
            return Err(param_err!("strength must be finite"));
        }
        Ok(Self { c, epsilon })
    }

    pub fn is_zero(&self) -> bool {
        self.c == 0.0
    }

    pub fn at_norm_sq(&self, r2: f64) -> f64 {
        self.c * libm::pow(1.0 + r2, -self.epsilon / 2.0)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.at_norm_sq(dot(x, x))
    }

    /// `grad I(x) = -eps c x (1 + |x|^2)^{-eps/2 - 1}`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let f = -self.epsilon * self.c * libm::pow(1.0 + dot(x, x), -self.epsilon / 2.0 - 1.0);
        x.iter().map(|v| f * v).collect()
    }

    /// Derivative in one dimension.
    pub fn derivative(&self, x: f64) -> f64 {
        -self.epsilon * self.c * x * libm::pow(1.0 + x * x, -self.epsilon / 2.0 - 1.0)
    }

    /// `I(a) - I(b)` without cancellation, given `a - b = h`.
    fn difference(&self, a: &[f64], b: &[f64], h: &[f64]) -> f64 {
        // |a|^2 - |b|^2 = h . (a + b)
        let bb = 1.0 + dot(b, b);
        let delta: f64 = h
            .iter()
            .zip(a.iter().zip(b))
            .map(|(h, (a, b))| h * (a + b))
            .sum();
        self.c
            * libm::pow(bb, -self.epsilon / 2.0)
            * libm::expm1(-self.epsilon / 2.0 * libm::log1p(delta / bb))
    }

    /// `grad I(a) - grad I(b)` without cancellation, given `a - b = h`.
    fn gradient_difference(&self, a: &[f64], b: &[f64], h: &[f64]) -> Vec<f64> {
        let p = -self.epsilon / 2.0 - 1.0;
        let aa = 1.0 + dot(a, a);
        let bb = 1.0 + dot(b, b);
        let delta: f64 = h
            .iter()
            .zip(a.iter().zip(b))
            .map(|(h, (a, b))| h * (a + b))
            .sum();
        let ap = libm::pow(aa, p);
        let dp = libm::pow(bb, p) * libm::expm1(p * libm::log1p(delta / bb));
        let f = -self.epsilon * self.c;
        h.iter()
            .zip(b)
            .map(|(h, b)| f * (h * ap + b * dp))
            .collect()
    }
}

/// Outgoing (`+`) or incoming (`-`) branch of the phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Outgoing,
    Incoming,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Outgoing => 1.0,
            Branch::Incoming => -1.0,
        }
    }
}

/// Cone aperture `theta`, momentum floor `d`, radius `R_0` and Picard depth `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseParams {
    pub theta: f64,
    pub d: f64,
    pub r0: f64,
    pub depth: usize,
}

impl PhaseParams {
    /// `theta = 0.5`, `d = 0.5`, `K = 2`, `R_0` from [`calibrate_r0`].
    pub fn calibrated(pot: &LongRangePotential) -> Self {
        let d = 0.5;
        Self {
            theta: 0.5,
            d,
            r0: calibrate_r0(pot, d),
            depth: 2,
        }
    }
}

/// Bound `|c| <R_0>^{-eps} / d` on the first-order gradient correction at `|x| = R_0`.
pub fn correction_bound(pot: &LongRangePotential, r0: f64, d: f64) -> f64 {
    pot.c.abs() * libm::pow(1.0 + r0 * r0, -pot.epsilon / 2.0) / d
}

/// Smallest power of two `R_0 >= 2` with [`correction_bound`] below `0.1`.
pub fn calibrate_r0(pot: &LongRangePotential, d: f64) -> f64 {
    let mut r0 = 2.0;
    while correction_bound(pot, r0, d) >= 0.1 && r0 < 1e12 {
        r0 *= 2.0;
    }
    r0
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Euclidean cosine of the angle between `x` and `xi`, zero if either vanishes.
pub fn cosine(x: &[f64], xi: &[f64]) -> f64 {
    let n = norm(x) * norm(xi);
    if n == 0.0 {
        0.0
    } else {
        (dot(x, xi) / n).clamp(-1.0, 1.0)
    }
}

/// Coefficients of `P_k(t)`; entry `p` multiplies `t^p`.
fn picard_polynomial(k: usize) -> Vec<f64> {
    let mut p = vec![0.0, 1.0];
    for _ in 0..k {
        let mut sq = vec![0.0; 2 * p.len() - 1];
        for (i, a) in p.iter().enumerate() {
            for (j, b) in p.iter().enumerate() {
                sq[i + j] += a * b;
            }
        }
        let mut next: Vec<f64> = sq.iter().map(|v| v / 2.0).collect();
        next[1] += 1.0;
        while next.len() > 1 && next[next.len() - 1] == 0.0 {
            next.pop();
        }
        p = next;
    }
    p
}

/// The glued phase `varphi_b` of a two-cluster decomposition.
#[derive(Debug, Clone)]
pub struct PhaseFunction {
    pot: LongRangePotential,
    params: PhaseParams,
    nu: usize,
    /// Coefficients of `P_{K-1}` (one-dimensional closed form).
    poly: Vec<f64>,
    tol: Tolerance,
}

impl PhaseFunction {
    pub fn build(pot: LongRangePotential, params: PhaseParams, nu: usize) -> Result<Self> {
        if !(params.theta > 0.0 && params.theta < 1.0) {
            return Err(param_err!("theta must lie in (0, 1), got {}", params.theta));
        }
        if !(params.d > 0.0) {
            return Err(param_err!("d must be positive, got {}", params.d));
        }
        if !(params.r0 > 1.0) {
            return Err(param_err!("R_0 must exceed 1, got {}", params.r0));
        }
        if params.depth == 0 {
            return Err(param_err!("iteration depth must be >= 1"));
        }
        if nu == 0 {
            return Err(param_err!("spatial dimension must be >= 1"));
        }
        if nu == 1 && params.depth > MAX_DEPTH {
            return Err(param_err!("iteration depth is limited to {MAX_DEPTH}"));
        }
        if nu > 1 && params.depth > 1 {
            return Err(param_err!("iteration depth above 1 requires nu = 1"));
        }
        Ok(Self {
            pot,
            params,
            nu,
            poly: picard_polynomial(params.depth - 1),
            tol: Tolerance::default(),
        })
    }

    pub fn potential(&self) -> &LongRangePotential {
        &self.pot
    }

    pub fn params(&self) -> &PhaseParams {
        &self.params
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    /// Moments `int_0^x I^p` for `p = 1 ..= deg P_{K-1}` (one dimension).
    pub fn moments(&self, x: f64) -> Result<Vec<f64>> {
        (1..self.poly.len())
            .map(|p| {
                if self.poly[p] == 0.0 {
                    return Ok(0.0);
                }
                let e = p as i32;
                integrate(
                    |y| libm::pow(self.pot.at_norm_sq(y * y), e as f64),
                    0.0,
                    x,
                    self.tol,
                )
            })
            .collect()
    }

    /// `u_K(x, xi)` from precomputed [`Self::moments`] (one dimension, either branch).
    pub fn correction_from_moments(&self, moments: &[f64], xi: f64) -> f64 {
        -(1..self.poly.len())
            .map(|p| self.poly[p] * libm::pow(xi, 1.0 - 2.0 * p as f64) * moments[p - 1])
            .sum::<f64>()
    }

    fn check_dims(&self, x: &[f64], xi: &[f64]) -> Result<()> {
        if x.len() != self.nu || xi.len() != self.nu {
            return Err(param_err!(
                "expected {}-dimensional x and xi, got {} and {}",
                self.nu,
                x.len(),
                xi.len()
            ));
        }
        Ok(())
    }

    /// The un-glued correction `u^±(x, xi)`.
    pub fn correction(&self, branch: Branch, x: &[f64], xi: &[f64]) -> Result<f64> {
        self.check_dims(x, xi)?;
        if self.pot.is_zero() {
            return Ok(0.0);
        }
        if self.nu == 1 {
            if xi[0] == 0.0 {
                return Err(Error::Domain("correction is singular at xi = 0".into()));
            }
            return Ok(self.correction_from_moments(&self.moments(x[0])?, xi[0]));
        }
        let sg = branch.sign();
        let mut a = vec![0.0; self.nu];
        let mut b = vec![0.0; self.nu];
        let v = integrate_half_line(
            |s| {
                for i in 0..self.nu {
                    b[i] = sg * s * xi[i];
                    a[i] = x[i] + b[i];
                }
                self.pot.difference(&a, &b, x)
            },
            self.tol,
            1e-14,
        )?;
        Ok(sg * v)
    }

    /// `grad_x u^±`.
    pub fn correction_grad_x(&self, branch: Branch, x: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(x, xi)?;
        if self.pot.is_zero() {
            return Ok(vec![0.0; self.nu]);
        }
        if self.nu == 1 {
            let i = self.pot.value(x);
            let g = -(1..self.poly.len())
                .map(|p| {
                    self.poly[p] * libm::pow(xi[0], 1.0 - 2.0 * p as f64) * libm::pow(i, p as f64)
                })
                .sum::<f64>();
            return Ok(vec![g]);
        }
        let sg = branch.sign();
        (0..self.nu)
            .map(|j| {
                let v = integrate_half_line(
                    |s| {
                        let a: Vec<f64> = x.iter().zip(xi).map(|(x, xi)| x + sg * s * xi).collect();
                        self.pot.gradient(&a)[j]
                    },
                    self.tol,
                    1e-14,
                )?;
                Ok(sg * v)
            })
            .collect()
    }

    /// `grad_xi u^±`.
    pub fn correction_grad_xi(&self, branch: Branch, x: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(x, xi)?;
        if self.pot.is_zero() {
            return Ok(vec![0.0; self.nu]);
        }
        if self.nu == 1 {
            let m = self.moments(x[0])?;
            let g = (1..self.poly.len())
                .map(|p| {
                    self.poly[p]
                        * (2.0 * p as f64 - 1.0)
                        * libm::pow(xi[0], -2.0 * p as f64)
                        * m[p - 1]
                })
                .sum::<f64>();
            return Ok(vec![g]);
        }
        let sg = branch.sign();
        (0..self.nu)
            .map(|j| {
                integrate_half_line(
                    |s| {
                        let b: Vec<f64> = xi.iter().map(|xi| sg * s * xi).collect();
                        let a: Vec<f64> = x.iter().zip(&b).map(|(x, b)| x + b).collect();
                        s * self.pot.gradient_difference(&a, &b, x)[j]
                    },
                    self.tol,
                    1e-14,
                )
            })
            .collect()
    }

    /// `chi_±(x, xi) chi_0(2 xi / d) chi_0(2 x / R_0)`.
    pub fn glue(&self, branch: Branch, x: &[f64], xi: &[f64]) -> f64 {
        let p = &self.params;
        let cut = chi0(&scaled(xi, 2.0 / p.d)) * chi0(&scaled(x, 2.0 / p.r0));
        if cut == 0.0 {
            return 0.0;
        }
        let c = cosine(x, xi);
        let angular = match branch {
            Branch::Outgoing => psi_plus(c, p.theta),
            Branch::Incoming => psi_minus(c, p.theta),
        };
        angular * cut
    }

    /// True inside `Gamma_±(R_0, d, theta)`.
    pub fn in_gamma(&self, branch: Branch, x: &[f64], xi: &[f64]) -> bool {
        norm(x) >= self.params.r0
            && norm(xi) >= self.params.d
            && branch.sign() * cosine(x, xi) >= self.params.theta
    }

    /// `varphi_b(x, xi)`; bitwise `x . xi` wherever the glue vanishes.
    pub fn value(&self, x: &[f64], xi: &[f64]) -> Result<f64> {
        self.check_dims(x, xi)?;
        let base = dot(x, xi);
        let mut extra = 0.0;
        let mut touched = false;
        for branch in [Branch::Outgoing, Branch::Incoming] {
            let g = self.glue(branch, x, xi);
            if g != 0.0 {
                extra += g * self.correction(branch, x, xi)?;
                touched = true;
            }
        }
        Ok(if touched { base + extra } else { base })
    }

    /// Glued phase in one dimension from precomputed moments at `x`.
    pub fn value_from_moments(&self, moments: &[f64], x: f64, xi: f64) -> f64 {
        let base = x * xi;
        let g = self.glue(Branch::Outgoing, &[x], &[xi]) + self.glue(Branch::Incoming, &[x], &[xi]);
        if g == 0.0 || self.pot.is_zero() {
            base
        } else {
            base + g * self.correction_from_moments(moments, xi)
        }
    }

    /// Gradient of the glue factor; the glue is closed-form, so central
    /// differences are accurate to roughly `1e-9`.
    fn glue_gradient(&self, branch: Branch, x: &[f64], xi: &[f64], wrt_xi: bool) -> Vec<f64> {
        let mut out = vec![0.0; self.nu];
        for (i, o) in out.iter_mut().enumerate() {
            let base = if wrt_xi { xi[i] } else { x[i] };
            let h = 1e-6 * f64::max(1.0, base.abs());
            let mut p = if wrt_xi { xi.to_vec() } else { x.to_vec() };
            let mut m = p.clone();
            p[i] += h;
            m[i] -= h;
            let (gp, gm) = if wrt_xi {
                (self.glue(branch, x, &p), self.glue(branch, x, &m))
            } else {
                (self.glue(branch, &p, xi), self.glue(branch, &m, xi))
            };
            *o = (gp - gm) / (2.0 * h);
        }
        out
    }

    fn glued_gradient(&self, x: &[f64], xi: &[f64], wrt_xi: bool) -> Result<Vec<f64>> {
        self.check_dims(x, xi)?;
        let mut out = if wrt_xi { x.to_vec() } else { xi.to_vec() };
        for branch in [Branch::Outgoing, Branch::Incoming] {
            let g = self.glue(branch, x, xi);
            let dg = self.glue_gradient(branch, x, xi, wrt_xi);
            if g == 0.0 && dg.iter().all(|v| *v == 0.0) {
                continue;
            }
            let u = self.correction(branch, x, xi)?;
            let du = if wrt_xi {
                self.correction_grad_xi(branch, x, xi)?
            } else {
                self.correction_grad_x(branch, x, xi)?
            };
            for i in 0..self.nu {
                out[i] += g * du[i] + u * dg[i];
            }
        }
        Ok(out)
    }

    /// `grad_x varphi_b`.
    pub fn grad_x(&self, x: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        self.glued_gradient(x, xi, false)
    }

    /// `grad_xi varphi_b`.
    pub fn grad_xi(&self, x: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        self.glued_gradient(x, xi, true)
    }

    /// Residual symbol `a_b = |grad_x varphi|^2/2 + I - |xi|^2/2 + i T varphi`
    /// with `T = -Delta/2`, returned as `(real, imaginary)`.
    ///
    /// The Laplacian is a fourth-order central difference of the gradient with
    /// step `1e-3 <x>` per axis.
    pub fn residual(&self, x: &[f64], xi: &[f64]) -> Result<(f64, f64)> {
        let g = self.grad_x(x, xi)?;
        // |xi + w|^2/2 - |xi|^2/2 = xi . w + |w|^2/2, with w = grad varphi - xi.
        let w: Vec<f64> = g.iter().zip(xi).map(|(g, xi)| g - xi).collect();
        let eikonal = dot(xi, &w) + dot(&w, &w) / 2.0 + self.pot.value(x);
        let h = 1e-3 * libm::sqrt(1.0 + dot(x, x));
        let mut lap = 0.0;
        for i in 0..self.nu {
            let at = |t: f64| -> Result<f64> {
                let mut y = x.to_vec();
                y[i] += t;
                Ok(self.grad_x(&y, xi)?[i] - xi[i])
            };
            lap += (-at(2.0 * h)? + 8.0 * at(h)? - 8.0 * at(-h)? + at(-2.0 * h)?) / (12.0 * h);
        }
        Ok((eikonal, -lap / 2.0))
    }
}

fn scaled(v: &[f64], f: f64) -> Vec<f64> {
    v.iter().map(|a| a * f).collect()
}

/// Sampling plan for [`phase_estimates`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSettings {
    pub samples_per_shell: usize,
    pub seed: u64,
    /// Shells cover `|x|` from `z_min_factor R_0` to `z_max_factor R_0`.
    pub z_min_factor: f64,
    pub z_max_factor: f64,
    /// Momenta are drawn with `d <= |xi| <= xi_max`.
    pub xi_max: f64,
    pub branch: Branch,
}

impl Default for EstimateSettings {
    fn default() -> Self {
        Self {
            samples_per_shell: 64,
            seed: 0,
            z_min_factor: 2.0,
            z_max_factor: 100.0,
            xi_max: 3.0,
            branch: Branch::Outgoing,
        }
    }
}

/// Suprema over one dyadic shell of `|x|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShellStat {
    pub lo: f64,
    pub hi: f64,
    /// Geometric centre, in `<x>` units.
    pub center: f64,
    pub samples: usize,
    pub sup_correction: f64,
    pub sup_correction_grad: f64,
    pub sup_residual: f64,
    pub sup_eikonal: f64,
    pub sup_transport: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub potential: LongRangePotential,
    pub params: PhaseParams,
    pub nu: usize,
    pub settings: EstimateSettings,
    pub shells: Vec<ShellStat>,
    pub slope_correction: f64,
    pub slope_correction_grad: f64,
    pub slope_residual: f64,
    pub slope_eikonal: f64,
    pub slope_transport: f64,
}

/// Least-squares slope of `log y` against `log x`; non-positive `y` are skipped.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (libm::log(*x), libm::log(*y)))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Draws `(x, xi)` in `Gamma_±` on a shell `lo <= |x| <= hi`.
pub fn sample_gamma(
    pf: &PhaseFunction,
    branch: Branch,
    lo: f64,
    hi: f64,
    xi_max: f64,
    rng: &mut SplitRng,
) -> (Vec<f64>, Vec<f64>) {
    let r = libm::exp(rng.uniform_in(libm::log(lo), libm::log(hi)));
    let k = rng.uniform_in(pf.params.d, xi_max.max(pf.params.d));
    let c = rng.uniform_in(pf.params.theta, 1.0);
    gamma_point(pf, branch, r, k, c, rng)
}

/// `(x, xi)` with `|x| = r`, `|xi| = k` and `± cos(x, xi) = c`, random orientation.
pub fn gamma_point(
    pf: &PhaseFunction,
    branch: Branch,
    r: f64,
    k: f64,
    c: f64,
    rng: &mut SplitRng,
) -> (Vec<f64>, Vec<f64>) {
    let nu = pf.nu;
    let unit = |rng: &mut SplitRng| {
        let v: Vec<f64> = (0..nu).map(|_| rng.normal()).collect();
        let n = norm(&v);
        v.into_iter().map(|a| a / n).collect::<Vec<f64>>()
    };
    let u = unit(rng);
    let c = branch.sign() * c;
    let dir = if nu == 1 {
        vec![c.signum() * u[0]]
    } else {
        let w = unit(rng);
        let proj = dot(&u, &w);
        let mut perp: Vec<f64> = w.iter().zip(&u).map(|(w, u)| w - proj * u).collect();
        let pn = norm(&perp);
        perp.iter_mut().for_each(|a| *a /= pn);
        let s = libm::sqrt(1.0 - c * c);
        u.iter().zip(&perp).map(|(u, p)| c * u + s * p).collect()
    };
    (scaled(&u, r), scaled(&dir, k))
}

/// Shell suprema of the correction, its gradient and the residual on `Gamma_±`,
/// with log-log slopes against the shell centre.
pub fn phase_estimates(pf: &PhaseFunction, settings: &EstimateSettings) -> Result<EstimateReport> {
    if settings.samples_per_shell == 0
        || !(settings.z_max_factor > settings.z_min_factor)
        || settings.z_min_factor < 1.0
    {
        return Err(param_err!("invalid estimate settings"));
    }
    let r0 = pf.params.r0;
    let rng = SplitRng::new(settings.seed);
    let mut shells = Vec::new();
    let bottom = settings.z_min_factor * r0;
    let top = settings.z_max_factor * r0;
    // Equal log-width shells, about one octave each.
    let count = libm::ceil(libm::log2(top / bottom) - 1e-9).max(1.0) as usize;
    let ratio = libm::pow(top / bottom, 1.0 / count as f64);
    let d = pf.params.d;
    let theta = pf.params.theta;
    for index in 0..count {
        let lo = bottom * libm::pow(ratio, index as f64);
        let hi = if index + 1 == count { top } else { lo * ratio };
        let mut stat = ShellStat {
            lo,
            hi,
            center: libm::sqrt(libm::sqrt(1.0 + lo * lo) * libm::sqrt(1.0 + hi * hi)),
            samples: settings.samples_per_shell + 4,
            sup_correction: 0.0,
            sup_correction_grad: 0.0,
            sup_residual: 0.0,
            sup_eikonal: 0.0,
            sup_transport: 0.0,
        };
        let mut r = rng.fork(index as u64);
        // Corners of the shell first: suprema of monotone quantities sit there.
        let corners = [(lo, theta), (lo, 1.0), (hi, theta), (hi, 1.0)];
        for i in 0..settings.samples_per_shell + 4 {
            let (x, xi) = match corners.get(i) {
                Some(&(radius, c)) => gamma_point(pf, settings.branch, radius, d, c, &mut r),
                None => sample_gamma(pf, settings.branch, lo, hi, settings.xi_max, &mut r),
            };
            let u = pf.value(&x, &xi)? - dot(&x, &xi);
            let g: Vec<f64> = pf
                .grad_x(&x, &xi)?
                .iter()
                .zip(&xi)
                .map(|(g, xi)| g - xi)
                .collect();
            let (re, im) = pf.residual(&x, &xi)?;
            stat.sup_correction = stat.sup_correction.max(u.abs());
            stat.sup_correction_grad = stat.sup_correction_grad.max(norm(&g));
            stat.sup_eikonal = stat.sup_eikonal.max(re.abs());
            stat.sup_transport = stat.sup_transport.max(im.abs());
            stat.sup_residual = stat.sup_residual.max(libm::hypot(re, im));
        }
        shells.push(stat);
    }
    let centers: Vec<f64> = shells.iter().map(|s| s.center).collect();
    let slope = |f: fn(&ShellStat) -> f64| {
        log_log_slope(&centers, &shells.iter().map(f).collect::<Vec<_>>())
    };
    Ok(EstimateReport {
        potential: pf.pot,
        params: pf.params,
        nu: pf.nu,
        settings: *settings,
        slope_correction: slope(|s| s.sup_correction),
        slope_correction_grad: slope(|s| s.sup_correction_grad),
        slope_residual: slope(|s| s.sup_residual),
        slope_eikonal: slope(|s| s.sup_eikonal),
        slope_transport: slope(|s| s.sup_transport),
        shells,
    })
}
