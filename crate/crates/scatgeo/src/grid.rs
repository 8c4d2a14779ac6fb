//! Periodic grids, FFT plans and wavefunctions on them.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use scatgeo_core::JacobiFrame;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};

/// A square periodic grid `[-L, L)^dim` with `M` points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    #[serde(rename = "L")]
    pub extent: f64,
    #[serde(rename = "M")]
    pub points: usize,
}

impl GridSpec {
    pub fn new(dim: usize, extent: f64, points: usize) -> Result<Self> {
        let g = Self {
            dim,
            extent,
            points,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 2 {
            return Err(param_err!(
                "grid dimension must be 1 or 2, got {}",
                self.dim
            ));
        }
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(param_err!(
                "grid half-width must be positive, got {}",
                self.extent
            ));
        }
        if self.points < 16 || !self.points.is_power_of_two() {
            return Err(param_err!(
                "points per axis must be a power of two >= 16, got {}",
                self.points
            ));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.extent / self.points as f64
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume of one cell, `h^dim`.
    pub fn cell(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Node positions along one axis.
    pub fn axis(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.points)
            .map(|j| -self.extent + j as f64 * h)
            .collect()
    }

    /// Angular wavenumbers along one axis in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let m = self.points as i64;
        let dk = PI / self.extent;
        (0..m)
            .map(|j| if j < m / 2 { j } else { j - m } as f64 * dk)
            .collect()
    }

    /// Axis indices of a flat index (row-major, axis 0 slowest).
    pub fn split(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx / self.points, idx % self.points]
        }
    }

    /// Coordinates of every node, `dim` values per node.
    pub fn nodes(&self) -> Vec<f64> {
        let axis = self.axis();
        let mut out = Vec::with_capacity(self.len() * self.dim);
        for idx in 0..self.len() {
            let s = self.split(idx);
            for a in s.iter().take(self.dim) {
                out.push(axis[*a]);
            }
        }
        out
    }

    /// Per-node values of `f(k)` with `k` the wavevector of each FFT mode.
    pub fn map_modes(&self, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
        let ks = self.wavenumbers();
        let mut k = vec![0.0; self.dim];
        (0..self.len())
            .map(|idx| {
                let s = self.split(idx);
                for d in 0..self.dim {
                    k[d] = ks[s[d]];
                }
                f(&k)
            })
            .collect()
    }
}

/// Forward and inverse FFT plans for one grid.
#[derive(Clone)]
pub struct Spectral {
    grid: GridSpec,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral")
            .field("grid", &self.grid)
            .finish()
    }
}

fn transpose(data: &mut [Complex64], m: usize) {
    for i in 0..m {
        for j in i + 1..m {
            data.swap(i * m + j, j * m + i);
        }
    }
}

impl Spectral {
    pub fn new(grid: GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            grid,
            fwd: planner.plan_fft_forward(grid.points),
            inv: planner.plan_fft_inverse(grid.points),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn run(&self, plan: &Arc<dyn Fft<f64>>, data: &mut [Complex64]) {
        plan.process(data);
        if self.grid.dim == 2 {
            transpose(data, self.grid.points);
            plan.process(data);
            transpose(data, self.grid.points);
        }
    }

    /// Unnormalized forward transform `sum_j e^{-i k x_j} f_j` (origin at index 0).
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(&self.fwd, data);
    }

    /// Inverse of [`Self::forward`], including the `1/M^dim` factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(&self.inv, data);
        let s = 1.0 / self.grid.len() as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }

    /// Multiplies by a diagonal symbol in frequency space.
    pub fn apply_symbol(&self, data: &mut [Complex64], symbol: &[Complex64]) {
        self.forward(data);
        for (v, s) in data.iter_mut().zip(symbol) {
            *v *= s;
        }
        self.inverse(data);
    }
}

/// A wavefunction sampled on a grid in the coordinates of one Jacobi frame.
///
/// Inner products use the Euclidean volume element of the frame coordinates;
/// the frame change to any other clustered frame has constant Jacobian.
#[derive(Debug, Clone)]
pub struct GridState {
    pub grid: GridSpec,
    pub frame: JacobiFrame,
    pub values: Vec<Complex64>,
}

impl GridState {
    pub fn new(grid: GridSpec, frame: JacobiFrame, values: Vec<Complex64>) -> Result<Self> {
        grid.validate()?;
        if frame.dim() != grid.dim {
            return Err(param_err!(
                "frame has {} coordinates but the grid is {}-dimensional",
                frame.dim(),
                grid.dim
            ));
        }
        if values.len() != grid.len() {
            return Err(param_err!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            ));
        }
        Ok(Self {
            grid,
            frame,
            values,
        })
    }

    pub fn zeros(grid: GridSpec, frame: JacobiFrame) -> Result<Self> {
        Self::new(grid, frame, vec![Complex64::new(0.0, 0.0); grid.len()])
    }

    /// Samples `f` at every node.
    pub fn from_fn(
        grid: GridSpec,
        frame: JacobiFrame,
        mut f: impl FnMut(&[f64]) -> Complex64,
    ) -> Result<Self> {
        let nodes = grid.nodes();
        let values = nodes.chunks(grid.dim).map(&mut f).collect();
        Self::new(grid, frame, values)
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `<self, other>`, antilinear in `self`.
    pub fn inner(&self, other: &GridState) -> Complex64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            * self.grid.cell()
    }

    /// `|<self, other>|^2 / (|self|^2 |other|^2)`.
    pub fn fidelity(&self, other: &GridState) -> f64 {
        self.inner(other).norm_sqr() / (self.norm_sq() * other.norm_sq())
    }

    pub fn distance(&self, other: &GridState) -> f64 {
        (self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            * self.grid.cell())
        .sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.scale(1.0 / n);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// `int w |psi|^2` for a per-node weight.
    pub fn weighted_mass(&self, weight: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(weight)
            .map(|(v, w)| w * v.norm_sqr())
            .sum::<f64>()
            * self.grid.cell()
    }

    /// Probability within `fraction` of the half-width from the boundary.
    pub fn boundary_mass(&self, fraction: f64) -> f64 {
        let axis = self.grid.axis();
        let edge = self.grid.extent * (1.0 - fraction);
        let near: Vec<bool> = axis.iter().map(|x| x.abs() >= edge).collect();
        let mut total = 0.0;
        for (idx, v) in self.values.iter().enumerate() {
            let s = self.grid.split(idx);
            if (0..self.grid.dim).any(|d| near[s[d]]) {
                total += v.norm_sqr();
            }
        }
        total * self.grid.cell()
    }

    /// Mean and covariance of the coordinates under `|psi|^2 / |psi|^2`.
    pub fn position_moments(&self) -> (Vec<f64>, Vec<f64>) {
        let dim = self.grid.dim;
        let nodes = self.grid.nodes();
        let mut mass = 0.0;
        let mut mean = vec![0.0; dim];
        let mut second = vec![0.0; dim * dim];
        for (x, v) in nodes.chunks(dim).zip(&self.values) {
            let p = v.norm_sqr();
            mass += p;
            for a in 0..dim {
                mean[a] += p * x[a];
                for b in 0..dim {
                    second[a * dim + b] += p * x[a] * x[b];
                }
            }
        }
        for m in &mut mean {
            *m /= mass;
        }
        let cov = (0..dim * dim)
            .map(|ab| second[ab] / mass - mean[ab / dim] * mean[ab % dim])
            .collect();
        (mean, cov)
    }
}

/// Separable Gaussian packet `prod_d exp(-(x-c)^2/(4 s^2) + i k x)`, normalized.
///
/// `s` is the position standard deviation of `|psi|^2` along each axis.
pub fn gaussian(
    grid: GridSpec,
    frame: JacobiFrame,
    center: &[f64],
    width: &[f64],
    momentum: &[f64],
) -> Result<GridState> {
    let dim = grid.dim;
    if center.len() != dim || width.len() != dim || momentum.len() != dim {
        return Err(param_err!("Gaussian parameters must have {dim} entries"));
    }
    if width.iter().any(|w| !(*w > 0.0)) {
        return Err(param_err!("Gaussian widths must be positive"));
    }
    let mut st = GridState::from_fn(grid, frame, |x| {
        let mut re = 0.0;
        let mut ph = 0.0;
        for d in 0..dim {
            let u = x[d] - center[d];
            re -= u * u / (4.0 * width[d] * width[d]);
            ph += momentum[d] * x[d];
        }
        Complex64::from_polar(re.exp(), ph)
    })?;
    st.normalize();
    Ok(st)
}

#[cfg(test)]
mod tests {
    use super::*;
    use scatgeo_core::{ClusterDecomposition, MassSpec};

    fn frame(n: usize) -> JacobiFrame {
        let m = MassSpec::with_unit_hbar(vec![1.0; n]).unwrap();
        JacobiFrame::build(&m, &ClusterDecomposition::singletons(n), 1).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(1, 10.0, 64).is_ok());
        assert!(GridSpec::new(3, 10.0, 64).is_err());
        assert!(GridSpec::new(1, 10.0, 48).is_err());
        assert!(GridSpec::new(1, 10.0, 8).is_err());
        assert!(GridSpec::new(1, -1.0, 64).is_err());
    }

    #[test]
    fn fft_round_trip_2d() {
        let g = GridSpec::new(2, 5.0, 16).unwrap();
        let sp = Spectral::new(g);
        let orig: Vec<Complex64> = (0..g.len())
            .map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let mut d = orig.clone();
        sp.forward(&mut d);
        sp.inverse(&mut d);
        for (a, b) in d.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn fft_mode_index_matches_wavenumbers() {
        let g = GridSpec::new(1, 3.0, 32).unwrap();
        let sp = Spectral::new(g);
        let ks = g.wavenumbers();
        let h = g.spacing();
        let mut d: Vec<Complex64> = (0..32)
            .map(|j| Complex64::from_polar(1.0, ks[5] * j as f64 * h))
            .collect();
        sp.forward(&mut d);
        assert!((d[5].norm() - 32.0).abs() < 1e-10);
        assert!(d[6].norm() < 1e-10);
    }

    #[test]
    fn gaussian_normalized_with_moments() {
        let g = GridSpec::new(1, 20.0, 512).unwrap();
        let st = gaussian(g, frame(2), &[1.0], &[1.5], &[0.0]).unwrap();
        assert!((st.norm_sq() - 1.0).abs() < 1e-12);
        let (mean, cov) = st.position_moments();
        assert!((mean[0] - 1.0).abs() < 1e-10);
        assert!((cov[0] - 2.25).abs() < 1e-10);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let g = GridSpec::new(2, 5.0, 16).unwrap();
        assert!(GridState::zeros(g, frame(2)).is_err());
        assert!(GridState::zeros(g, frame(3)).is_ok());
    }
}
