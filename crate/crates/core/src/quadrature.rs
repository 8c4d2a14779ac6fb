//! Adaptive Gauss-Kronrod quadrature (7/15 points).

use alloc::collections::BinaryHeap;
use alloc::format;
use core::cmp::Ordering;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Estimate and error bound on one interval.
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Integration tolerances.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-13,
            rel: 1e-12,
            max_intervals: 4000,
        }
    }
}

/// `int_a^b f` by global adaptive bisection of the worst interval.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Piece {
        a,
        b,
        value: v,
        err: e,
    });
    let mut total = v;
    let mut err = e;
    while err > tol.abs.max(tol.rel * total.abs()) {
        if heap.len() >= tol.max_intervals {
            return Err(Error::Numeric(format!(
                "quadrature on [{a}, {b}] did not converge: estimate {total}, error {err}"
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        let (v1, e1) = gk15(&mut f, worst.a, mid);
        let (v2, e2) = gk15(&mut f, mid, worst.b);
        total += v1 + v2 - worst.value;
        err += e1 + e2 - worst.err;
        heap.push(Piece {
            a: worst.a,
            b: mid,
            value: v1,
            err: e1,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            value: v2,
            err: e2,
        });
    }
    if !total.is_finite() {
        return Err(Error::Numeric(format!("non-finite integral on [{a}, {b}]")));
    }
    // Re-sum for a value free of accumulated update rounding.
    Ok(heap.iter().map(|p| p.value).sum())
}

/// `int_0^inf f` for integrands with algebraic tails: `[0, 1]` directly, then
/// `s = e^u` on `[1, inf)`, truncated once `|f(s) s|` stays below `cutoff`.
pub fn integrate_half_line<F: FnMut(f64) -> f64>(
    mut f: F,
    tol: Tolerance,
    cutoff: f64,
) -> Result<f64> {
    let head = integrate(&mut f, 0.0, 1.0, tol)?;
    // Find a truncation point where the transformed integrand is negligible.
    let mut u_max = 4.0;
    loop {
        let s = libm::exp(u_max);
        let probe = (f(s) * s).abs().max((f(2.0 * s) * 2.0 * s).abs());
        if probe < cutoff {
            break;
        }
        u_max += 4.0;
        if u_max > 700.0 {
            return Err(Error::Numeric("half-line integrand does not decay".into()));
        }
    }
    let tail = integrate(
        |u| {
            let s = libm::exp(u);
            f(s) * s
        },
        0.0,
        u_max,
        tol,
    )?;
    Ok(head + tail)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_and_exponentials() {
        let v = integrate(|x| x * x, 0.0, 3.0, Tolerance::default()).unwrap();
        assert!((v - 9.0).abs() < 1e-13);
        let v = integrate(libm::exp, -1.0, 2.0, Tolerance::default()).unwrap();
        assert!((v - (libm::exp(2.0) - libm::exp(-1.0))).abs() < 1e-12);
        assert_eq!(
            integrate(|x| x, 2.0, 2.0, Tolerance::default()).unwrap(),
            0.0
        );
    }

    #[test]
    fn peaked_integrand() {
        // int_{-1}^{1} 1/(1 + 100 x^2) = 2 atan(10)/10
        let v = integrate(
            |x| 1.0 / (1.0 + 100.0 * x * x),
            -1.0,
            1.0,
            Tolerance::default(),
        )
        .unwrap();
        assert!((v - 0.2 * libm::atan(10.0)).abs() < 1e-12);
    }

    #[test]
    fn half_line_algebraic_tail() {
        // int_0^inf (1+s)^{-1.8} ds = 1/0.8
        let v =
            integrate_half_line(|s| libm::pow(1.0 + s, -1.8), Tolerance::default(), 1e-15).unwrap();
        assert!((v - 1.25).abs() < 1e-9, "{v}");
    }
}
