//! Few-body model descriptions: masses, pair potentials and the grid.

use scatgeo_core::{ClusterDecomposition, MassSpec, PairIndex};
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::grid::GridSpec;

/// Functional form of a pair potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    /// `c (1 + x^2)^{-eps/2}`.
    LongRangePower,
    /// `c sech^2 x`.
    PoschlTeller,
    Zero,
}

/// Potential acting on the relative coordinate `r_i - r_j` (1-based indices).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairPotential {
    pub i: usize,
    pub j: usize,
    pub kind: PotentialKind,
    #[serde(default)]
    pub c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl PairPotential {
    pub fn pair(&self) -> Result<PairIndex> {
        Ok(PairIndex::new(self.i, self.j)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.pair()?;
        if !self.c.is_finite() {
            return Err(param_err!(
                "pair ({}, {}) strength is not finite",
                self.i,
                self.j
            ));
        }
        match self.kind {
            PotentialKind::LongRangePower => match self.epsilon {
                Some(e) if e > 0.0 && e < 1.0 => Ok(()),
                other => Err(param_err!(
                    "long_range_power pair ({}, {}) needs epsilon in (0, 1), got {other:?}",
                    self.i,
                    self.j
                )),
            },
            _ => Ok(()),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.kind == PotentialKind::Zero || self.c == 0.0
    }

    pub fn eval(&self, r: f64) -> f64 {
        match self.kind {
            PotentialKind::LongRangePower => {
                self.c * (1.0 + r * r).powf(-self.epsilon.unwrap_or(0.0) / 2.0)
            }
            PotentialKind::PoschlTeller => {
                let s = 1.0 / r.cosh();
                self.c * s * s
            }
            PotentialKind::Zero => 0.0,
        }
    }
}

fn default_nu() -> usize {
    1
}

fn default_hbar() -> f64 {
    1.0
}

/// A one-dimensional `N`-body model (`N` in `{2, 3}`) on a periodic grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub masses: Vec<f64>,
    #[serde(default = "default_nu")]
    pub nu: usize,
    #[serde(default)]
    pub pairs: Vec<PairPotential>,
    pub grid: GridSize,
    #[serde(default = "default_hbar")]
    pub hbar: f64,
}

/// Half-width and points per axis; the dimension follows from the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSize {
    #[serde(rename = "L")]
    pub extent: f64,
    #[serde(rename = "M")]
    pub points: usize,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.masses.len();
        if !(2..=3).contains(&n) {
            return Err(param_err!(
                "dynamics supports N = 2 or 3 particles, got {n}"
            ));
        }
        if self.nu != 1 {
            return Err(param_err!("dynamics supports nu = 1 only, got {}", self.nu));
        }
        self.mass_spec()?;
        let mut seen = Vec::new();
        for p in &self.pairs {
            p.validate()?;
            let pair = p.pair()?;
            if pair.j > n {
                return Err(param_err!(
                    "pair {pair} refers to a particle beyond N = {n}"
                ));
            }
            if seen.contains(&pair) {
                return Err(param_err!("pair {pair} listed twice"));
            }
            seen.push(pair);
        }
        self.grid_spec()?;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.masses.len()
    }

    pub fn mass_spec(&self) -> Result<MassSpec> {
        Ok(MassSpec::new(self.masses.clone(), self.hbar)?)
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.n() - 1, self.grid.extent, self.grid.points)
    }

    /// Pairs with a nonzero potential.
    pub fn interacting(&self) -> impl Iterator<Item = &PairPotential> {
        self.pairs.iter().filter(|p| !p.is_zero())
    }

    /// The two-body model of a single pair, with the pair relabelled `(1, 2)`.
    pub fn pair_subsystem(&self, pair: PairIndex) -> Result<ModelSpec> {
        let pot = self
            .pairs
            .iter()
            .find(|p| p.i == pair.i && p.j == pair.j)
            .map(|p| PairPotential { i: 1, j: 2, ..*p });
        Ok(ModelSpec {
            masses: vec![self.masses[pair.i - 1], self.masses[pair.j - 1]],
            nu: 1,
            pairs: pot.into_iter().collect(),
            grid: self.grid,
            hbar: self.hbar,
        })
    }

    /// Whether the pair's potential is part of `V_a` (`alpha <= a`).
    pub fn pair_inside(pair: PairIndex, a: &ClusterDecomposition) -> Result<bool> {
        Ok(a.contains_pair(pair)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> ModelSpec {
        serde_json::from_str(
            r#"{"masses":[1,1,1],"pairs":[{"i":1,"j":2,"kind":"poschl_teller","c":-1}],
                "grid":{"L":20,"M":64}}"#,
        )
        .unwrap()
    }

    #[test]
    fn parses_and_validates() {
        let m = model();
        m.validate().unwrap();
        assert_eq!(m.grid_spec().unwrap().dim, 2);
        assert_eq!(m.hbar, 1.0);
    }

    #[test]
    fn rejects_bad_models() {
        let mut m = model();
        m.masses[0] = -1.0;
        assert!(m.validate().is_err());
        let mut m = model();
        m.pairs.push(m.pairs[0]);
        assert!(m.validate().is_err());
        let mut m = model();
        m.pairs[0].kind = PotentialKind::LongRangePower;
        assert!(m.validate().is_err());
        assert!(serde_json::from_str::<ModelSpec>(
            r#"{"masses":[1,1],"grid":{"L":20,"M":64},"extra":1}"#
        )
        .is_err());
    }

    #[test]
    fn potential_forms() {
        let lr = PairPotential {
            i: 1,
            j: 2,
            kind: PotentialKind::LongRangePower,
            c: 2.0,
            epsilon: Some(0.5),
        };
        assert!((lr.eval(0.0) - 2.0).abs() < 1e-15);
        assert!((lr.eval(3.0) - 2.0 * 10f64.powf(-0.25)).abs() < 1e-14);
        let pt = PairPotential {
            kind: PotentialKind::PoschlTeller,
            c: -1.0,
            epsilon: None,
            ..lr
        };
        assert_eq!(pt.eval(0.0), -1.0);
    }
}
