//! Clustered Jacobi coordinates and the mass-weighted inner product.
//!
//! Coordinates are stored scalar-major: coordinate `c` (0-based) occupies the
//! `nu` consecutive slots `c*nu .. (c+1)*nu`. The first `|b|-1` coordinates of a
//! frame for decomposition `b` are the intercluster ones (`x_b`), the rest the
//! intra-cluster ones (`x^b`), block by block in canonical order.
//!
//! Every Jacobi-type map acts identically on each spatial component, so frames
//! store an `(N-1) x N` scalar matrix instead of the full `nu(N-1) x nu N` one.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::lattice::{ClusterDecomposition, PairIndex};

/// Particle masses and Planck's constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassSpec {
    masses: Vec<f64>,
    hbar: f64,
}

impl MassSpec {
    pub fn new(masses: Vec<f64>, hbar: f64) -> Result<Self> {
        if masses.len() < 2 {
            return Err(param_err!(
                "need at least two particles, got {}",
                masses.len()
            ));
        }
        if let Some(m) = masses.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(param_err!("mass {m} is not a positive finite number"));
        }
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(param_err!("hbar {hbar} is not a positive finite number"));
        }
        Ok(Self { masses, hbar })
    }

    /// Masses with `hbar = 1`.
    pub fn with_unit_hbar(masses: Vec<f64>) -> Result<Self> {
        Self::new(masses, 1.0)
    }

    pub fn equal(n: usize, m: f64) -> Result<Self> {
        Self::new(vec![m; n], 1.0)
    }

    pub fn n(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Mass of particle `p` (1-based).
    pub fn mass(&self, p: usize) -> f64 {
        self.masses[p - 1]
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// `m_i m_j / (m_i + m_j)`.
    pub fn pair_reduced_mass(&self, pair: PairIndex) -> f64 {
        let (a, b) = (self.mass(pair.i), self.mass(pair.j));
        a * b / (a + b)
    }
}

fn reduced(a: f64, b: f64) -> f64 {
    1.0 / (1.0 / a + 1.0 / b)
}

/// Particle positions `r_1..r_N` in `R^nu`, shifted to zero center of mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    nu: usize,
    positions: Vec<f64>,
}

impl Configuration {
    /// Takes particle-major positions and removes the center-of-mass motion.
    pub fn from_positions(mass: &MassSpec, nu: usize, mut positions: Vec<f64>) -> Result<Self> {
        if nu == 0 || positions.len() != nu * mass.n() {
            return Err(param_err!(
                "expected {} position components for N = {} and nu = {nu}",
                nu * mass.n(),
                mass.n()
            ));
        }
        let total = mass.total();
        for d in 0..nu {
            let cm: f64 = mass
                .masses()
                .iter()
                .enumerate()
                .map(|(p, m)| m * positions[p * nu + d])
                .sum::<f64>()
                / total;
            for p in 0..mass.n() {
                positions[p * nu + d] -= cm;
            }
        }
        Ok(Self { nu, positions })
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn n(&self) -> usize {
        self.positions.len() / self.nu
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    /// Position of particle `p` (1-based).
    pub fn particle(&self, p: usize) -> &[f64] {
        &self.positions[(p - 1) * self.nu..p * self.nu]
    }

    /// `r_i - r_j` for the pair.
    pub fn pair_vector(&self, pair: PairIndex) -> Vec<f64> {
        self.particle(pair.i)
            .iter()
            .zip(self.particle(pair.j))
            .map(|(a, b)| a - b)
            .collect()
    }

    /// `|x|^2 = sum_i m_i |r_i|^2`, the mass norm on the center-of-mass-zero subspace.
    pub fn mass_norm_sq(&self, mass: &MassSpec) -> f64 {
        (1..=self.n())
            .map(|p| mass.mass(p) * sq(self.particle(p)))
            .sum()
    }
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

/// A clustered Jacobi coordinate system for one decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiFrame {
    decomposition: ClusterDecomposition,
    mass: MassSpec,
    nu: usize,
    /// `(N-1) x N`, row-major: coordinates from particle positions.
    to_coords: Vec<f64>,
    /// `N x (N-1)`, row-major: zero-center-of-mass positions from coordinates.
    to_positions: Vec<f64>,
    /// One weight per scalar coordinate (`M_l` then `mu_i^{(C_l)}`).
    weights: Vec<f64>,
}

/// Serializable snapshot of a frame for cross-language checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameExport {
    pub decomposition: ClusterDecomposition,
    pub nu: usize,
    pub masses: Vec<f64>,
    pub weights: Vec<f64>,
    /// Row-major `(N-1) x N` map from particle positions to coordinates,
    /// applied componentwise.
    pub matrix: Vec<f64>,
}

/// Jacobi rows over an ordered list of bodies; each body is a weighted average
/// of particles given as `(particle index 0-based, coefficient)` lists.
fn jacobi_rows(
    bodies: &[Vec<(usize, f64)>],
    body_mass: &[f64],
    n: usize,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rows = Vec::new();
    let mut weights = Vec::new();
    let mut acc = vec![0.0; n];
    let mut acc_mass = 0.0;
    for (idx, body) in bodies.iter().enumerate() {
        let mut pos = vec![0.0; n];
        for &(p, c) in body {
            pos[p] += c;
        }
        if idx > 0 {
            let row: Vec<f64> = pos
                .iter()
                .zip(&acc)
                .map(|(a, b)| a - b / acc_mass)
                .collect();
            rows.push(row);
            weights.push(reduced(body_mass[idx], acc_mass));
        }
        for (a, b) in acc.iter_mut().zip(&pos) {
            *a += body_mass[idx] * b;
        }
        acc_mass += body_mass[idx];
    }
    (rows, weights)
}

/// Inverse of a Jacobi chain: body positions from Jacobi values and the total center.
fn jacobi_inverse(jac: &[f64], body_mass: &[f64], center: f64) -> Vec<f64> {
    let s = body_mass.len();
    let mut partial: Vec<f64> = Vec::with_capacity(s);
    let mut m = 0.0;
    for w in body_mass {
        m += w;
        partial.push(m);
    }
    let mut bodies = vec![0.0; s];
    let mut cm = center;
    for i in (1..s).rev() {
        // cm is the center of the first i+1 bodies here.
        let prev = cm - body_mass[i] / partial[i] * jac[i - 1];
        bodies[i] = jac[i - 1] + prev;
        cm = prev;
    }
    bodies[0] = cm;
    bodies
}

impl JacobiFrame {
    /// Intercluster Jacobi coordinates over blocks in canonical order, then
    /// intra-block Jacobi coordinates in ascending particle order.
    pub fn build(mass: &MassSpec, b: &ClusterDecomposition, nu: usize) -> Result<Self> {
        let n = mass.n();
        if b.n() != n {
            return Err(param_err!(
                "decomposition over N = {} but {} masses",
                b.n(),
                n
            ));
        }
        if nu == 0 {
            return Err(param_err!("spatial dimension must be >= 1"));
        }
        let block_mass: Vec<f64> = b
            .blocks()
            .iter()
            .map(|blk| blk.iter().map(|&p| mass.mass(p)).sum())
            .collect();
        let block_bodies: Vec<Vec<(usize, f64)>> = b
            .blocks()
            .iter()
            .zip(&block_mass)
            .map(|(blk, bm)| blk.iter().map(|&p| (p - 1, mass.mass(p) / bm)).collect())
            .collect();
        let (mut rows, mut weights) = jacobi_rows(&block_bodies, &block_mass, n);
        for blk in b.blocks() {
            let bodies: Vec<Vec<(usize, f64)>> = blk.iter().map(|&p| vec![(p - 1, 1.0)]).collect();
            let masses: Vec<f64> = blk.iter().map(|&p| mass.mass(p)).collect();
            let (r, w) = jacobi_rows(&bodies, &masses, n);
            rows.extend(r);
            weights.extend(w);
        }
        debug_assert_eq!(rows.len(), n - 1);
        let to_coords: Vec<f64> = rows.into_iter().flatten().collect();

        let mut frame = Self {
            decomposition: b.clone(),
            mass: mass.clone(),
            nu,
            to_coords,
            to_positions: vec![0.0; n * (n - 1)],
            weights,
        };
        for c in 0..n - 1 {
            let mut unit = vec![0.0; n - 1];
            unit[c] = 1.0;
            let pos = frame.scalar_positions(&unit, &block_mass);
            for (p, v) in pos.into_iter().enumerate() {
                frame.to_positions[p * (n - 1) + c] = v;
            }
        }
        Ok(frame)
    }

    fn scalar_positions(&self, coords: &[f64], block_mass: &[f64]) -> Vec<f64> {
        let n = self.mass.n();
        let k = self.decomposition.len();
        let centers = jacobi_inverse(&coords[..k - 1], block_mass, 0.0);
        let mut out = vec![0.0; n];
        let mut offset = k - 1;
        for (blk, center) in self.decomposition.blocks().iter().zip(centers) {
            let masses: Vec<f64> = blk.iter().map(|&p| self.mass.mass(p)).collect();
            let s = blk.len();
            let pos = jacobi_inverse(&coords[offset..offset + s - 1], &masses, center);
            for (&p, v) in blk.iter().zip(pos) {
                out[p - 1] = v;
            }
            offset += s - 1;
        }
        out
    }

    pub fn decomposition(&self) -> &ClusterDecomposition {
        &self.decomposition
    }

    pub fn mass(&self) -> &MassSpec {
        &self.mass
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    /// Number of scalar Jacobi coordinates, `N - 1`.
    pub fn coordinate_count(&self) -> usize {
        self.mass.n() - 1
    }

    /// Full coordinate dimension `nu (N - 1)`.
    pub fn dim(&self) -> usize {
        self.nu * self.coordinate_count()
    }

    /// Number of intercluster scalar coordinates, `|b| - 1`.
    pub fn intercluster_count(&self) -> usize {
        self.decomposition.len() - 1
    }

    /// Weight per scalar coordinate.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight of coordinate slot `i` in the flat `nu (N-1)` layout.
    pub fn slot_weight(&self, i: usize) -> f64 {
        self.weights[i / self.nu]
    }

    pub fn inner_product(&self) -> MassInnerProduct {
        MassInnerProduct {
            nu: self.nu,
            weights: self.weights.clone(),
        }
    }

    pub fn to_coords(&self, x: &Configuration) -> Result<Vec<f64>> {
        let n = self.mass.n();
        if x.nu() != self.nu || x.n() != n {
            return Err(param_err!("configuration shape does not match frame"));
        }
        let mut out = vec![0.0; self.dim()];
        for c in 0..n - 1 {
            for p in 0..n {
                let a = self.to_coords[c * n + p];
                if a != 0.0 {
                    for d in 0..self.nu {
                        out[c * self.nu + d] += a * x.positions[p * self.nu + d];
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn to_configuration(&self, coords: &[f64]) -> Result<Configuration> {
        let n = self.mass.n();
        if coords.len() != self.dim() {
            return Err(param_err!(
                "expected {} coordinates, got {}",
                self.dim(),
                coords.len()
            ));
        }
        let mut pos = vec![0.0; n * self.nu];
        for p in 0..n {
            for c in 0..n - 1 {
                let a = self.to_positions[p * (n - 1) + c];
                if a != 0.0 {
                    for d in 0..self.nu {
                        pos[p * self.nu + d] += a * coords[c * self.nu + d];
                    }
                }
            }
        }
        Ok(Configuration {
            nu: self.nu,
            positions: pos,
        })
    }

    /// `<x, y>` with this frame's weights.
    pub fn inner(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.inner_product().inner(x, y)
    }

    /// `(|x_b|^2, |x^b|^2)` from frame coordinates.
    pub fn split_norms(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.dim() {
            return Err(param_err!(
                "expected {} coordinates, got {}",
                self.dim(),
                x.len()
            ));
        }
        let cut = self.intercluster_count() * self.nu;
        let weighted = |range: core::ops::Range<usize>| {
            range
                .map(|i| self.slot_weight(i) * x[i] * x[i])
                .sum::<f64>()
        };
        Ok((weighted(0..cut), weighted(cut..x.len())))
    }

    /// Linear functional giving `x_alpha = r_i - r_j` from frame coordinates.
    pub fn pair_coordinate(&self, pair: PairIndex) -> Result<PairFunctional> {
        let n = self.mass.n();
        if pair.j > n {
            return Err(param_err!("pair {pair} invalid for N = {n}"));
        }
        let coeffs = (0..n - 1)
            .map(|c| {
                self.to_positions[(pair.i - 1) * (n - 1) + c]
                    - self.to_positions[(pair.j - 1) * (n - 1) + c]
            })
            .collect();
        Ok(PairFunctional {
            pair,
            nu: self.nu,
            coeffs,
        })
    }

    pub fn export(&self) -> FrameExport {
        FrameExport {
            decomposition: self.decomposition.clone(),
            nu: self.nu,
            masses: self.mass.masses().to_vec(),
            weights: self.weights.clone(),
            matrix: self.to_coords.clone(),
        }
    }

    /// Row-major `(N-1) x N` scalar map from positions to coordinates.
    pub fn matrix(&self) -> &[f64] {
        &self.to_coords
    }
}

/// Diagonal mass metric `<x,y> = sum_l w_l x_l . y_l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassInnerProduct {
    pub nu: usize,
    pub weights: Vec<f64>,
}

impl MassInnerProduct {
    pub fn inner(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let dim = self.nu * self.weights.len();
        if x.len() != dim || y.len() != dim {
            return Err(param_err!(
                "inner product of lengths {} and {} in dimension {dim}",
                x.len(),
                y.len()
            ));
        }
        Ok(x.iter()
            .zip(y)
            .enumerate()
            .map(|(i, (a, b))| self.weights[i / self.nu] * a * b)
            .sum())
    }

    pub fn norm_sq(&self, x: &[f64]) -> Result<f64> {
        self.inner(x, x)
    }
}

/// `x_alpha` as a combination of scalar frame coordinates, applied componentwise.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFunctional {
    pub pair: PairIndex,
    pub nu: usize,
    pub coeffs: Vec<f64>,
}

impl PairFunctional {
    /// The `nu`-vector `r_i - r_j`.
    pub fn eval(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nu];
        for (c, a) in self.coeffs.iter().enumerate() {
            for (d, o) in out.iter_mut().enumerate() {
                *o += a * coords[c * self.nu + d];
            }
        }
        out
    }

    /// Scalar case (`nu = 1`) without allocation.
    pub fn eval_scalar(&self, coords: &[f64]) -> f64 {
        self.coeffs.iter().zip(coords).map(|(a, x)| a * x).sum()
    }
}

/// Linear map between two frames over the same masses, applied componentwise.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameChange {
    nu: usize,
    size: usize,
    /// `(N-1) x (N-1)` row-major.
    matrix: Vec<f64>,
}

impl FrameChange {
    pub fn between(from: &JacobiFrame, to: &JacobiFrame) -> Result<Self> {
        if from.mass != to.mass || from.nu != to.nu {
            return Err(param_err!(
                "frames built over different masses or dimensions"
            ));
        }
        let n = from.mass.n();
        let size = n - 1;
        let mut matrix = vec![0.0; size * size];
        for r in 0..size {
            for c in 0..size {
                matrix[r * size + c] = (0..n)
                    .map(|p| to.to_coords[r * n + p] * from.to_positions[p * size + c])
                    .sum();
            }
        }
        Ok(Self {
            nu: from.nu,
            size,
            matrix,
        })
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for r in 0..self.size {
            for c in 0..self.size {
                let a = self.matrix[r * self.size + c];
                for d in 0..self.nu {
                    out[r * self.nu + d] += a * x[c * self.nu + d];
                }
            }
        }
        out
    }

    pub fn compose(&self, first: &FrameChange) -> FrameChange {
        let s = self.size;
        let mut matrix = vec![0.0; s * s];
        for r in 0..s {
            for c in 0..s {
                matrix[r * s + c] = (0..s)
                    .map(|k| self.matrix[r * s + k] * first.matrix[k * s + c])
                    .sum();
            }
        }
        FrameChange {
            nu: self.nu,
            size: s,
            matrix,
        }
    }
}

/// Mass-metric norms attached to one decomposition, computed directly from
/// particle positions and independent of any Jacobi ordering.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterNorms {
    /// `|x|^2`.
    pub total: f64,
    /// `|x_b|^2 = sum_l M_l |R_l|^2`.
    pub inter: f64,
    /// `|x^b|^2 = sum_l sum_{i in C_l} m_i |r_i - R_l|^2`.
    pub intra: f64,
    /// `|z_{bk}|^2 = mu_{lm} |R_l - R_m|^2` per link in canonical order.
    pub links: Vec<f64>,
}

/// Precomputed block data for evaluating [`ClusterNorms`] repeatedly.
#[derive(Debug, Clone)]
pub struct ClusterGeometry {
    decomposition: ClusterDecomposition,
    masses: Vec<f64>,
    block_mass: Vec<f64>,
    /// `(from, to, reduced mass)` per link.
    links: Vec<(usize, usize, f64)>,
}

impl ClusterGeometry {
    pub fn new(mass: &MassSpec, b: &ClusterDecomposition) -> Result<Self> {
        if b.n() != mass.n() {
            return Err(param_err!(
                "decomposition over N = {} but {} masses",
                b.n(),
                mass.n()
            ));
        }
        let block_mass: Vec<f64> = b
            .blocks()
            .iter()
            .map(|blk| blk.iter().map(|&p| mass.mass(p)).sum())
            .collect();
        let links = if b.len() >= 2 {
            b.links()?
                .into_iter()
                .map(|l| {
                    (
                        l.from_block,
                        l.to_block,
                        reduced(block_mass[l.from_block], block_mass[l.to_block]),
                    )
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            decomposition: b.clone(),
            masses: mass.masses().to_vec(),
            block_mass,
            links,
        })
    }

    pub fn decomposition(&self) -> &ClusterDecomposition {
        &self.decomposition
    }

    pub fn norms(&self, x: &Configuration) -> ClusterNorms {
        let nu = x.nu();
        let k = self.decomposition.len();
        let mut centers = vec![0.0; k * nu];
        for (l, blk) in self.decomposition.blocks().iter().enumerate() {
            for &p in blk {
                for d in 0..nu {
                    centers[l * nu + d] += self.masses[p - 1] * x.positions[(p - 1) * nu + d];
                }
            }
            for d in 0..nu {
                centers[l * nu + d] /= self.block_mass[l];
            }
        }
        let mut total = 0.0;
        let mut intra = 0.0;
        for (l, blk) in self.decomposition.blocks().iter().enumerate() {
            for &p in blk {
                let m = self.masses[p - 1];
                for d in 0..nu {
                    let r = x.positions[(p - 1) * nu + d];
                    total += m * r * r;
                    let rel = r - centers[l * nu + d];
                    intra += m * rel * rel;
                }
            }
        }
        let inter = (0..k)
            .map(|l| self.block_mass[l] * sq(&centers[l * nu..(l + 1) * nu]))
            .sum();
        let links = self
            .links
            .iter()
            .map(|&(a, b, mu)| {
                mu * (0..nu)
                    .map(|d| {
                        let t = centers[a * nu + d] - centers[b * nu + d];
                        t * t
                    })
                    .sum::<f64>()
            })
            .collect();
        ClusterNorms {
            total,
            inter,
            intra,
            links,
        }
    }
}

/// `|x_alpha|^2 = mu_alpha |r_i - r_j|^2`: the mass norm of the component of
/// `x` along the relative motion of the pair.
pub fn pair_norm_sq(mass: &MassSpec, x: &Configuration, pair: PairIndex) -> f64 {
    mass.pair_reduced_mass(pair) * sq(&x.pair_vector(pair))
}

/// Splits `|x|^2` along an immediate refinement `c < b`, `|c| = |b| + 1`.
///
/// `x` is given in `frame_b` coordinates. Returns `(|x_b|^2, |z_ck|^2, |x^c|^2)`
/// where `z_ck` joins the two blocks of `c` that merge into one block of `b`;
/// each term uses the weights of its own decomposition.
pub fn norm_split(
    x: &[f64],
    frame_b: &JacobiFrame,
    frame_c: &JacobiFrame,
) -> Result<(f64, f64, f64)> {
    if frame_b.mass != frame_c.mass || frame_b.nu != frame_c.nu {
        return Err(param_err!(
            "frames built over different masses or dimensions"
        ));
    }
    let (_, c1, c2) = frame_c.decomposition.split_of(&frame_b.decomposition)?;
    let (inter_b, _) = frame_b.split_norms(x)?;
    let config = frame_b.to_configuration(x)?;
    let xc = frame_c.to_coords(&config)?;
    let (_, intra_c) = frame_c.split_norms(&xc)?;
    let geo = ClusterGeometry::new(&frame_c.mass, &frame_c.decomposition)?;
    let link_idx = frame_c
        .decomposition
        .links()?
        .iter()
        .position(|l| l.from_block == c1.min(c2) && l.to_block == c1.max(c2))
        .ok_or_else(|| crate::Error::Internal("split link missing".into()))?;
    let z = geo.norms(&config).links[link_idx];
    Ok((inter_b, z, intra_c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::SplitRng;

    fn d(blocks: &[&[usize]]) -> ClusterDecomposition {
        ClusterDecomposition::from_blocks(blocks.iter().map(|b| b.to_vec()).collect()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn two_body_frame() {
        let mass = MassSpec::equal(2, 1.0).unwrap();
        let f = JacobiFrame::build(&mass, &ClusterDecomposition::one_block(2), 1).unwrap();
        assert_eq!(f.weights(), &[0.5]);
        assert_eq!(f.matrix(), &[-1.0, 1.0]);
        let pf = f.pair_coordinate(PairIndex::new(1, 2).unwrap()).unwrap();
        // x_alpha = r_1 - r_2 = -x_1
        assert!(close(pf.coeffs[0], -1.0, 1e-15));
    }

    #[test]
    fn three_body_clustered_frame() {
        let mass = MassSpec::equal(3, 1.0).unwrap();
        let b = d(&[&[1, 2], &[3]]);
        let f = JacobiFrame::build(&mass, &b, 1).unwrap();
        assert!(close(f.weights()[0], 2.0 / 3.0, 1e-15));
        assert!(close(f.weights()[1], 0.5, 1e-15));
        // x_b = r3 - (r1+r2)/2, x^b = r2 - r1
        let m = f.matrix();
        for (got, want) in m.iter().zip([-0.5, -0.5, 1.0, -1.0, 1.0, 0.0]) {
            assert!(close(*got, want, 1e-15));
        }
        let pf = f.pair_coordinate(PairIndex::new(1, 2).unwrap()).unwrap();
        assert!(close(pf.coeffs[0], 0.0, 1e-15) && close(pf.coeffs[1], -1.0, 1e-15));
        // r1 - r3 = -x_b - x^b / 2
        let pf13 = f.pair_coordinate(PairIndex::new(1, 3).unwrap()).unwrap();
        assert!(close(pf13.coeffs[0], -1.0, 1e-15) && close(pf13.coeffs[1], -0.5, 1e-15));
    }

    #[test]
    fn coincident_particles_map_to_zero() {
        let mass = MassSpec::new(alloc::vec![1.0, 2.0, 3.5, 0.7], 1.0).unwrap();
        for b in ClusterDecomposition::enumerate(4).unwrap() {
            let f = JacobiFrame::build(&mass, &b, 2).unwrap();
            let x = Configuration::from_positions(
                &mass,
                2,
                alloc::vec![1.5, -2.0, 1.5, -2.0, 1.5, -2.0, 1.5, -2.0],
            )
            .unwrap();
            assert!(f.to_coords(&x).unwrap().iter().all(|v| v.abs() < 1e-14));
        }
    }

    #[test]
    fn inner_examples() {
        let mass = MassSpec::equal(2, 1.0).unwrap();
        let f = JacobiFrame::build(&mass, &ClusterDecomposition::one_block(2), 1).unwrap();
        assert_eq!(f.inner(&[0.0], &[0.0]).unwrap(), 0.0);
        assert!(close(f.inner(&[2.0], &[2.0]).unwrap(), 2.0, 1e-15));
        assert!(f.inner(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn roundtrip_positions() {
        let mut rng = SplitRng::new(7);
        let mass = MassSpec::new(alloc::vec![1.0, 2.0, 0.5, 4.0], 1.0).unwrap();
        for b in ClusterDecomposition::enumerate(4).unwrap() {
            let f = JacobiFrame::build(&mass, &b, 3).unwrap();
            let x: Vec<f64> = (0..f.dim()).map(|_| rng.normal()).collect();
            let back = f.to_coords(&f.to_configuration(&x).unwrap()).unwrap();
            for (a, b) in x.iter().zip(&back) {
                assert!(close(*a, *b, 1e-12));
            }
        }
    }

    #[test]
    fn frame_norms_match_position_norms() {
        let mut rng = SplitRng::new(11);
        let mass = MassSpec::new(alloc::vec![1.0, 2.0, 0.5, 4.0], 1.0).unwrap();
        for b in ClusterDecomposition::enumerate(4).unwrap() {
            let f = JacobiFrame::build(&mass, &b, 2).unwrap();
            let geo = ClusterGeometry::new(&mass, &b).unwrap();
            let x: Vec<f64> = (0..f.dim()).map(|_| rng.normal()).collect();
            let cfg = f.to_configuration(&x).unwrap();
            let (inter, intra) = f.split_norms(&x).unwrap();
            let norms = geo.norms(&cfg);
            assert!(close(inter, norms.inter, 1e-12));
            assert!(close(intra, norms.intra, 1e-12));
            assert!(close(inter + intra, cfg.mass_norm_sq(&mass), 1e-12));
        }
    }

    #[test]
    fn identity_change() {
        let mass = MassSpec::equal(3, 1.0).unwrap();
        let f = JacobiFrame::build(&mass, &d(&[&[1, 3], &[2]]), 1).unwrap();
        let u = FrameChange::between(&f, &f).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                assert!(close(
                    u.matrix()[r * 2 + c],
                    if r == c { 1.0 } else { 0.0 },
                    1e-14
                ));
            }
        }
        let other =
            JacobiFrame::build(&MassSpec::equal(3, 2.0).unwrap(), &d(&[&[1, 3], &[2]]), 1).unwrap();
        assert!(FrameChange::between(&f, &other).is_err());
    }

    #[test]
    fn three_body_frame_change_is_orthogonal() {
        let mut rng = SplitRng::new(3);
        let mass = MassSpec::equal(3, 1.0).unwrap();
        let f1 = JacobiFrame::build(&mass, &d(&[&[1, 2], &[3]]), 1).unwrap();
        let f2 = JacobiFrame::build(&mass, &d(&[&[1, 3], &[2]]), 1).unwrap();
        let u12 = FrameChange::between(&f1, &f2).unwrap();
        let u21 = FrameChange::between(&f2, &f1).unwrap();
        for _ in 0..100 {
            let x: Vec<f64> = (0..2).map(|_| rng.normal()).collect();
            let y: Vec<f64> = (0..2).map(|_| rng.normal()).collect();
            let lhs = f2.inner(&u12.apply(&x), &u12.apply(&y)).unwrap();
            assert!(close(lhs, f1.inner(&x, &y).unwrap(), 1e-12));
            let rt = u21.apply(&u12.apply(&x));
            assert!(close(rt[0], x[0], 1e-12) && close(rt[1], x[1], 1e-12));
        }
    }

    #[test]
    fn norm_split_examples() {
        let mass = MassSpec::equal(3, 1.0).unwrap();
        let fb = JacobiFrame::build(&mass, &d(&[&[1, 2], &[3]]), 1).unwrap();
        let fc = JacobiFrame::build(&mass, &ClusterDecomposition::singletons(3), 1).unwrap();
        assert_eq!(norm_split(&[0.0, 0.0], &fb, &fc).unwrap(), (0.0, 0.0, 0.0));
        let (a, z, c) = norm_split(&[1.3, 0.0], &fb, &fc).unwrap();
        assert!(close(a, fb.inner(&[1.3, 0.0], &[1.3, 0.0]).unwrap(), 1e-14));
        assert!(close(z, 0.0, 1e-14) && close(c, 0.0, 1e-14));
        let mut rng = SplitRng::new(5);
        for _ in 0..50 {
            let x = [rng.normal(), rng.normal()];
            let (a, z, c) = norm_split(&x, &fb, &fc).unwrap();
            let total = fb.inner(&x, &x).unwrap();
            assert!((a + z + c - total).abs() <= 1e-12 * total.max(1.0));
        }
        // Not an immediate refinement.
        let other = JacobiFrame::build(&mass, &d(&[&[1, 3], &[2]]), 1).unwrap();
        assert!(norm_split(&[1.0, 1.0], &fb, &other).is_err());
    }

    #[test]
    fn export_shape() {
        let mass = MassSpec::equal(3, 1.0).unwrap();
        let f = JacobiFrame::build(&mass, &ClusterDecomposition::singletons(3), 2).unwrap();
        let e = f.export();
        assert_eq!(e.weights.len(), 2);
        assert_eq!(e.matrix.len(), 6);
        assert_eq!(e.nu, 2);
    }

    #[test]
    fn mass_spec_validation() {
        assert!(MassSpec::new(alloc::vec![1.0, -1.0], 1.0).is_err());
        assert!(MassSpec::new(alloc::vec![1.0], 1.0).is_err());
        assert!(MassSpec::new(alloc::vec![1.0, 1.0], 0.0).is_err());
    }
}
