//! Smooth monotone cutoffs with exact plateaus.
//!
//! All higher-level cutoffs are built from [`rho`], which returns bitwise `1.0`
//! for `lambda <= -1` and bitwise `0.0` for `lambda >= 0`. Partition identities
//! built from these functions therefore hold up to rounding only.

use serde::{Deserialize, Serialize};

/// `exp(-1/t)` for `t > 0`, zero otherwise.
fn g(t: f64) -> f64 {
    if t > 0.0 {
        libm::exp(-1.0 / t)
    } else {
        0.0
    }
}

/// Smooth step: 1 on `(-inf, -1]`, 0 on `[0, inf)`, strictly decreasing between.
///
/// `rho(l) = g(-l) / (g(-l) + g(l + 1))`, symmetric about `-1/2`.
pub fn rho(lambda: f64) -> f64 {
    if lambda <= -1.0 {
        return 1.0;
    }
    if lambda >= 0.0 {
        return 0.0;
    }
    let a = g(-lambda);
    let b = g(lambda + 1.0);
    a / (a + b)
}

/// Threshold `tau` and transition width `sigma > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub sigma: f64,
    pub tau: f64,
}

impl CutoffSpec {
    pub fn new(tau: f64, sigma: f64) -> Self {
        debug_assert!(sigma > 0.0);
        Self { sigma, tau }
    }

    pub fn less(&self, lambda: f64) -> f64 {
        phi_less(lambda, self.tau, self.sigma)
    }

    pub fn greater(&self, lambda: f64) -> f64 {
        phi_greater(lambda, self.tau, self.sigma)
    }
}

/// `phi_sigma(lambda < tau)`: 1 for `lambda <= tau`, 0 for `lambda >= tau + sigma`.
pub fn phi_less(lambda: f64, tau: f64, sigma: f64) -> f64 {
    if lambda <= tau {
        return 1.0;
    }
    if lambda >= tau + sigma {
        return 0.0;
    }
    rho((lambda - (tau + sigma)) / sigma)
}

/// `phi_sigma(lambda > tau) = 1 - phi_sigma(lambda < tau - sigma)`:
/// 0 for `lambda <= tau - sigma`, 1 for `lambda >= tau`.
pub fn phi_greater(lambda: f64, tau: f64, sigma: f64) -> f64 {
    if lambda >= tau {
        return 1.0;
    }
    if lambda <= tau - sigma {
        return 0.0;
    }
    1.0 - rho((lambda - tau) / sigma)
}

/// Radial cutoff: 0 for `|x| <= 1`, 1 for `|x| >= 2` (Euclidean norm).
pub fn chi0(x: &[f64]) -> f64 {
    chi0_radial(libm::sqrt(x.iter().map(|v| v * v).sum()))
}

/// [`chi0`] as a function of the radius.
pub fn chi0_radial(r: f64) -> f64 {
    phi_greater(r, 2.0, 1.0)
}

/// Angular profile `psi_+`: 1 on `[theta, 1]`, 0 on `[-1, theta/2]`.
pub fn psi_plus(tau: f64, theta: f64) -> f64 {
    phi_greater(tau, theta, theta / 2.0)
}

/// Angular profile `psi_-(tau) = psi_+(-tau)`: 1 on `[-1, -theta]`, 0 on `[-theta/2, 1]`.
pub fn psi_minus(tau: f64, theta: f64) -> f64 {
    psi_plus(-tau, theta)
}
