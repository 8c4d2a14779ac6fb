//! Dense eigensolves of pair Hamiltonians and threshold sets.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use scatgeo_core::{ClusterDecomposition, PairIndex};
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::grid::{gaussian, GridState};
use crate::hamiltonian::{Hamiltonian, PotentialPart};
use crate::model::ModelSpec;

/// Eigenvalues above this are treated as continuum.
pub const BOUND_CUTOFF: f64 = -1e-10;

/// One eigenpair with its residual under the spectral operator.
#[derive(Debug, Clone)]
pub struct BoundState {
    pub energy: f64,
    pub state: GridState,
    pub residual: f64,
}

/// The Fourier-collocation matrix of a one-dimensional Hamiltonian.
///
/// The kinetic block is the Toeplitz matrix `t(j - l) = M^{-1} sum_k T(k) cos(k (j - l) h)`,
/// so eigenvectors of this matrix are exact eigenvectors of the operator
/// applied by [`Hamiltonian::apply`].
pub fn collocation_matrix(h: &Hamiltonian) -> Result<DMatrix<f64>> {
    let g = h.grid();
    if g.dim != 1 {
        return Err(param_err!(
            "dense solve requires a one-dimensional subsystem"
        ));
    }
    let m = g.points;
    let ks = g.wavenumbers();
    let kin = h.kinetic_symbol();
    let dx = g.spacing();
    let toeplitz: Vec<f64> = (0..m)
        .map(|d| {
            ks.iter()
                .zip(kin)
                .map(|(k, t)| t * (k * d as f64 * dx).cos())
                .sum::<f64>()
                / m as f64
        })
        .collect();
    let pot = h.potential();
    Ok(DMatrix::from_fn(m, m, |j, l| {
        let d = j.abs_diff(l);
        toeplitz[d] + if j == l { pot[j] } else { 0.0 }
    }))
}

/// Lowest `count` eigenpairs with energy below zero, ascending.
pub fn solve_bound_states(h: &Hamiltonian, count: usize) -> Result<Vec<BoundState>> {
    let mat = collocation_matrix(h)?;
    let eig = SymmetricEigen::new(mat);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
    let scale = 1.0 / h.grid().spacing().sqrt();
    let mut out = Vec::new();
    for idx in order.into_iter().take(count) {
        let e = eig.eigenvalues[idx];
        if e >= BOUND_CUTOFF {
            break;
        }
        let col = eig.eigenvectors.column(idx);
        // Fix the sign so the largest component is positive.
        let lead = col
            .iter()
            .cloned()
            .fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
        let sign = if lead < 0.0 { -scale } else { scale };
        let values = col.iter().map(|v| Complex64::new(sign * v, 0.0)).collect();
        let state = GridState::new(*h.grid(), h.frame().clone(), values)?;
        let residual = h.residual(&state, e)?;
        out.push(BoundState {
            energy: e,
            state,
            residual,
        });
    }
    Ok(out)
}

/// Ground-state energy by imaginary-time evolution from a broad Gaussian.
pub fn imaginary_time_ground(h: &Hamiltonian, dtau: f64, tol: f64) -> Result<f64> {
    let g = *h.grid();
    let width = vec![g.extent / 8.0; g.dim];
    let zero = vec![0.0; g.dim];
    let start = gaussian(g, h.frame().clone(), &zero, &width, &zero)?;
    let (e, _, _) = h.imaginary_time(&start, dtau, 2_000_000, tol)?;
    Ok(e)
}

/// Bound-state energies of one pair subsystem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairLevels {
    pub pair: PairIndex,
    pub energies: Vec<f64>,
    pub max_residual: f64,
}

/// The computed threshold set with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    /// Sorted, with values closer than `1e-9` merged.
    pub values: Vec<f64>,
    pub pairs: Vec<PairLevels>,
    /// Ground state of the full internal Hamiltonian when it lies below every
    /// subsystem threshold.
    pub full_ground: Option<f64>,
}

impl ThresholdSet {
    /// Distance from `e` to the nearest threshold.
    pub fn clearance(&self, e: f64) -> f64 {
        self.values
            .iter()
            .map(|t| (t - e).abs())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn lowest(&self) -> f64 {
        self.values[0]
    }
}

/// Bound states of the pair subsystem `H^a` for `a = {pair, rest}`.
pub fn pair_bound_states(
    model: &ModelSpec,
    pair: PairIndex,
    count: usize,
) -> Result<Vec<BoundState>> {
    let sub = model.pair_subsystem(pair)?;
    let h = Hamiltonian::new(
        &sub,
        &ClusterDecomposition::singletons(2),
        PotentialPart::Full,
    )?;
    solve_bound_states(&h, count)
}

/// `{0}` joined with the pair bound-state energies of every two-cluster
/// subsystem; for `N = 2` the pair spectrum is that of the full Hamiltonian.
///
/// With `full_ground`, the full three-body ground state is estimated by
/// imaginary time and added when it lies below every other threshold.
pub fn thresholds(model: &ModelSpec, full_ground: bool) -> Result<ThresholdSet> {
    model.validate()?;
    let mut values = vec![0.0];
    let mut pairs = Vec::new();
    for p in model.interacting() {
        let pair = p.pair()?;
        let states = pair_bound_states(model, pair, usize::MAX)?;
        let energies: Vec<f64> = states.iter().map(|s| s.energy).collect();
        let max_residual = states.iter().map(|s| s.residual).fold(0.0, f64::max);
        values.extend(&energies);
        pairs.push(PairLevels {
            pair,
            energies,
            max_residual,
        });
    }
    values.sort_by(f64::total_cmp);
    values.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let mut ground = None;
    if full_ground && model.n() == 3 && model.interacting().next().is_some() {
        let h = Hamiltonian::new(
            model,
            &ClusterDecomposition::singletons(3),
            PotentialPart::Full,
        )?;
        let e = imaginary_time_ground(&h, 0.01, 1e-10)?;
        if e < values[0] - 1e-6 {
            values.insert(0, e);
            ground = Some(e);
        }
    }
    Ok(ThresholdSet {
        values,
        pairs,
        full_ground: ground,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GridSize, PairPotential, PotentialKind};

    fn pt(points: usize) -> Hamiltonian {
        let m = ModelSpec {
            masses: vec![2.0, 2.0],
            nu: 1,
            pairs: vec![PairPotential {
                i: 1,
                j: 2,
                kind: PotentialKind::PoschlTeller,
                c: -1.0,
                epsilon: None,
            }],
            grid: GridSize {
                extent: 20.0,
                points,
            },
            hbar: 1.0,
        };
        Hamiltonian::new(
            &m,
            &ClusterDecomposition::singletons(2),
            PotentialPart::Full,
        )
        .unwrap()
    }

    #[test]
    fn poschl_teller_single_level() {
        let states = solve_bound_states(&pt(256), 10).unwrap();
        assert_eq!(states.len(), 1);
        assert!((states[0].energy + 0.5).abs() < 1e-8);
        assert!(states[0].residual < 1e-8);
        assert!((states[0].state.norm_sq() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn free_pair_has_no_bound_states() {
        let m = ModelSpec {
            masses: vec![1.0, 1.0],
            nu: 1,
            pairs: vec![],
            grid: GridSize {
                extent: 10.0,
                points: 64,
            },
            hbar: 1.0,
        };
        let h = Hamiltonian::new(
            &m,
            &ClusterDecomposition::singletons(2),
            PotentialPart::Full,
        )
        .unwrap();
        assert!(solve_bound_states(&h, 5).unwrap().is_empty());
        assert_eq!(thresholds(&m, false).unwrap().values, vec![0.0]);
    }
}
