//! Grid Hamiltonians in clustered Jacobi coordinates and split-step evolution.

use num_complex::Complex64;
use scatgeo_core::{ClusterDecomposition, JacobiFrame};
use serde::{Deserialize, Serialize};

use crate::error::{numeric_err, param_err, Result};
use crate::grid::{GridSpec, GridState, Spectral};
use crate::model::ModelSpec;

/// Which pair potentials enter the Hamiltonian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialPart {
    /// `V = sum_alpha V_alpha`.
    Full,
    /// `V = 0`.
    Free,
    /// `V_a`: pairs inside a block of `a`.
    Internal(ClusterDecomposition),
    /// `I_a`: pairs joining different blocks of `a`.
    Intercluster(ClusterDecomposition),
}

/// `H = sum_k hbar^2 p_k^2 / (2 w_k) + V(x)` on a periodic grid.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    grid: GridSpec,
    frame: JacobiFrame,
    hbar: f64,
    kinetic: Vec<f64>,
    potential: Vec<f64>,
    spectral: Spectral,
}

impl Hamiltonian {
    /// Hamiltonian of `model` in the frame of `b`, restricted to `part`.
    pub fn new(model: &ModelSpec, b: &ClusterDecomposition, part: PotentialPart) -> Result<Self> {
        model.validate()?;
        let mass = model.mass_spec()?;
        let frame = JacobiFrame::build(&mass, b, 1)?;
        let grid = model.grid_spec()?;
        let mut terms = Vec::new();
        for p in model.interacting() {
            let pair = p.pair()?;
            let keep = match &part {
                PotentialPart::Full => true,
                PotentialPart::Free => false,
                PotentialPart::Internal(a) => a.contains_pair(pair)?,
                PotentialPart::Intercluster(a) => !a.contains_pair(pair)?,
            };
            if keep {
                terms.push((*p, frame.pair_coordinate(pair)?));
            }
        }
        let potential = grid
            .nodes()
            .chunks(grid.dim)
            .map(|x| {
                terms
                    .iter()
                    .map(|(p, f)| p.eval(f.eval_scalar(x)))
                    .sum::<f64>()
            })
            .collect();
        Self::from_potential(grid, frame, model.hbar, potential)
    }

    /// Hamiltonian with an explicit potential sampled on the grid.
    pub fn from_potential(
        grid: GridSpec,
        frame: JacobiFrame,
        hbar: f64,
        potential: Vec<f64>,
    ) -> Result<Self> {
        grid.validate()?;
        if frame.nu() != 1 || frame.dim() != grid.dim {
            return Err(param_err!(
                "frame with {} coordinates does not match a {}-dimensional grid",
                frame.dim(),
                grid.dim
            ));
        }
        if potential.len() != grid.len() || potential.iter().any(|v| !v.is_finite()) {
            return Err(param_err!(
                "potential must have {} finite values",
                grid.len()
            ));
        }
        if !(hbar > 0.0) {
            return Err(param_err!("hbar must be positive"));
        }
        let weights = frame.weights().to_vec();
        let kinetic = grid.map_modes(|k| {
            k.iter()
                .zip(&weights)
                .map(|(k, w)| hbar * hbar * k * k / (2.0 * w))
                .sum()
        });
        Ok(Self {
            grid,
            frame,
            hbar,
            kinetic,
            potential,
            spectral: Spectral::new(grid),
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn frame(&self) -> &JacobiFrame {
        &self.frame
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// Kinetic symbol per FFT mode.
    pub fn kinetic_symbol(&self) -> &[f64] {
        &self.kinetic
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    /// Lower and upper bounds on the grid spectrum.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let vmin = self.potential.iter().cloned().fold(f64::INFINITY, f64::min);
        let vmax = self
            .potential
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let tmax = self.kinetic.iter().cloned().fold(0.0, f64::max);
        (vmin, tmax + vmax)
    }

    pub fn check(&self, psi: &GridState) -> Result<()> {
        if psi.grid != self.grid || psi.frame != self.frame {
            return Err(param_err!(
                "state grid or frame does not match the Hamiltonian"
            ));
        }
        Ok(())
    }

    pub fn apply_kinetic(&self, psi: &GridState) -> Result<GridState> {
        self.check(psi)?;
        let mut out = psi.clone();
        self.spectral.forward(&mut out.values);
        for (v, t) in out.values.iter_mut().zip(&self.kinetic) {
            *v *= t;
        }
        self.spectral.inverse(&mut out.values);
        Ok(out)
    }

    /// `H psi`.
    pub fn apply(&self, psi: &GridState) -> Result<GridState> {
        let mut out = self.apply_kinetic(psi)?;
        for ((o, v), p) in out.values.iter_mut().zip(&psi.values).zip(&self.potential) {
            *o += v * p;
        }
        Ok(out)
    }

    /// `<psi, H psi>`.
    pub fn expectation(&self, psi: &GridState) -> Result<Complex64> {
        Ok(psi.inner(&self.apply(psi)?))
    }

    /// Rayleigh quotient `<psi, H psi> / <psi, psi>`.
    pub fn energy(&self, psi: &GridState) -> Result<f64> {
        Ok(self.expectation(psi)?.re / psi.norm_sq())
    }

    /// `||H psi - E psi||`.
    pub fn residual(&self, psi: &GridState, energy: f64) -> Result<f64> {
        let mut hp = self.apply(psi)?;
        for (o, v) in hp.values.iter_mut().zip(&psi.values) {
            *o -= v * energy;
        }
        Ok(hp.norm())
    }

    /// Exact free evolution `e^{-i t H_0 / hbar}` for any real `t`.
    pub fn free_evolve(&self, psi: &mut GridState, t: f64) -> Result<()> {
        self.check(psi)?;
        let symbol: Vec<Complex64> = self
            .kinetic
            .iter()
            .map(|k| Complex64::from_polar(1.0, -k * t / self.hbar))
            .collect();
        self.spectral.apply_symbol(&mut psi.values, &symbol);
        Ok(())
    }

    /// `steps` Strang steps `e^{-iV dt/2} e^{-i H_0 dt} e^{-iV dt/2}` with `dt > 0`.
    pub fn propagate(&self, psi: &mut GridState, dt: f64, steps: usize) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(param_err!("time step must be positive, got {dt}"));
        }
        self.strang(psi, dt, steps)
    }

    /// Strang evolution over a signed time `t` in `steps` equal steps.
    pub fn evolve(&self, psi: &mut GridState, t: f64, steps: usize) -> Result<()> {
        if steps == 0 || t == 0.0 {
            return Ok(());
        }
        self.strang(psi, t / steps as f64, steps)
    }

    fn strang(&self, psi: &mut GridState, dt: f64, steps: usize) -> Result<()> {
        self.check(psi)?;
        let half: Vec<Complex64> = self
            .potential
            .iter()
            .map(|v| Complex64::from_polar(1.0, -v * dt / (2.0 * self.hbar)))
            .collect();
        let kin: Vec<Complex64> = self
            .kinetic
            .iter()
            .map(|k| Complex64::from_polar(1.0, -k * dt / self.hbar))
            .collect();
        for step in 0..steps {
            for (v, p) in psi.values.iter_mut().zip(&half) {
                *v *= p;
            }
            self.spectral.apply_symbol(&mut psi.values, &kin);
            for (v, p) in psi.values.iter_mut().zip(&half) {
                *v *= p;
            }
            if !psi.is_finite() {
                return Err(numeric_err!(
                    "non-finite wavefunction after step {}",
                    step + 1
                ));
            }
        }
        Ok(())
    }

    /// Normalized imaginary-time evolution to the ground state.
    ///
    /// Stops when the Rayleigh quotient changes by less than `tol` over a
    /// block of 50 steps; returns `(energy, state, steps taken)`.
    pub fn imaginary_time(
        &self,
        start: &GridState,
        dtau: f64,
        max_steps: usize,
        tol: f64,
    ) -> Result<(f64, GridState, usize)> {
        self.check(start)?;
        if !(dtau > 0.0) {
            return Err(param_err!("imaginary time step must be positive"));
        }
        let half: Vec<f64> = self
            .potential
            .iter()
            .map(|v| (-v * dtau / (2.0 * self.hbar)).exp())
            .collect();
        let kin: Vec<Complex64> = self
            .kinetic
            .iter()
            .map(|k| Complex64::new((-k * dtau / self.hbar).exp(), 0.0))
            .collect();
        let mut psi = start.clone();
        psi.normalize();
        let mut last = self.energy(&psi)?;
        let mut step = 0;
        while step < max_steps {
            for _ in 0..50 {
                for (v, p) in psi.values.iter_mut().zip(&half) {
                    *v *= p;
                }
                self.spectral.apply_symbol(&mut psi.values, &kin);
                for (v, p) in psi.values.iter_mut().zip(&half) {
                    *v *= p;
                }
                psi.normalize();
            }
            step += 50;
            if !psi.is_finite() {
                return Err(numeric_err!("imaginary-time state diverged at step {step}"));
            }
            let e = self.energy(&psi)?;
            if (e - last).abs() < tol {
                return Ok((e, psi, step));
            }
            last = e;
        }
        Err(numeric_err!(
            "imaginary-time evolution did not converge within {max_steps} steps"
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::gaussian;
    use crate::model::{GridSize, PairPotential, PotentialKind};

    fn two_body(kind: PotentialKind, c: f64) -> ModelSpec {
        ModelSpec {
            masses: vec![2.0, 2.0],
            nu: 1,
            pairs: vec![PairPotential {
                i: 1,
                j: 2,
                kind,
                c,
                epsilon: None,
            }],
            grid: GridSize {
                extent: 20.0,
                points: 256,
            },
            hbar: 1.0,
        }
    }

    fn singletons(n: usize) -> ClusterDecomposition {
        ClusterDecomposition::singletons(n)
    }

    #[test]
    fn plane_wave_is_eigenfunction() {
        let m = two_body(PotentialKind::Zero, 0.0);
        let h = Hamiltonian::new(&m, &singletons(2), PotentialPart::Full).unwrap();
        let k = h.grid().wavenumbers()[7];
        let psi = GridState::from_fn(*h.grid(), h.frame().clone(), |x| {
            Complex64::from_polar(1.0, k * x[0])
        })
        .unwrap();
        let e = k * k / 2.0;
        assert!(h.residual(&psi, e).unwrap() < 1e-10);
        let flat =
            GridState::from_fn(*h.grid(), h.frame().clone(), |_| Complex64::new(1.0, 0.0)).unwrap();
        assert!(h.apply(&flat).unwrap().norm() < 1e-12);
    }

    #[test]
    fn expectation_is_real() {
        let m = two_body(PotentialKind::PoschlTeller, -1.0);
        let h = Hamiltonian::new(&m, &singletons(2), PotentialPart::Full).unwrap();
        let mut seed = 1u64;
        let psi = GridState::from_fn(*h.grid(), h.frame().clone(), |_| {
            seed = seed
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let a = (seed >> 11) as f64 / (1u64 << 53) as f64;
            Complex64::new(a - 0.5, (a * 7.0).sin())
        })
        .unwrap();
        let e = h.expectation(&psi).unwrap();
        assert!(e.im.abs() < 1e-12 * e.re.abs().max(1.0));
    }

    #[test]
    fn zero_steps_is_identity() {
        let m = two_body(PotentialKind::PoschlTeller, -1.0);
        let h = Hamiltonian::new(&m, &singletons(2), PotentialPart::Full).unwrap();
        let psi = gaussian(*h.grid(), h.frame().clone(), &[0.0], &[1.0], &[1.0]).unwrap();
        let mut out = psi.clone();
        h.propagate(&mut out, 0.01, 0).unwrap();
        assert_eq!(out.values, psi.values);
        assert!(h.propagate(&mut out, 0.0, 1).is_err());
    }

    #[test]
    fn potential_restrictions_split_the_full_potential() {
        let mut m = two_body(PotentialKind::PoschlTeller, -1.0);
        m.masses.push(1.0);
        m.pairs.push(PairPotential {
            i: 2,
            j: 3,
            kind: PotentialKind::PoschlTeller,
            c: -0.5,
            epsilon: None,
        });
        m.grid.points = 32;
        let a = ClusterDecomposition::from_blocks(vec![vec![1, 2], vec![3]]).unwrap();
        let b = singletons(3);
        let full = Hamiltonian::new(&m, &b, PotentialPart::Full).unwrap();
        let va = Hamiltonian::new(&m, &b, PotentialPart::Internal(a.clone())).unwrap();
        let ia = Hamiltonian::new(&m, &b, PotentialPart::Intercluster(a)).unwrap();
        for ((f, v), i) in full
            .potential()
            .iter()
            .zip(va.potential())
            .zip(ia.potential())
        {
            assert!((f - v - i).abs() < 1e-15);
        }
    }
}
