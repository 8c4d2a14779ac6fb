//! A smooth partition of unity on the configuration shell `1 <= |x|^2 <= 1 + theta_{N-1}`,
//! indexed by cluster decompositions with at least two blocks.
//!
//! For a decomposition `b` the cut functions are
//!
//! ```text
//! varphi_b(x) = prod_k phi(|z_bk|^2 > rho_|b|) * phi(|x_b|^2 > 1 - theta_|b|)
//! J_b(x)      = varphi_b(x) * prod_{j = |b|-1 .. 2} (1 - sum_{|b_j| = j} varphi_{b_j}(x))
//! ```
//!
//! For the finest decomposition (`|b| = N`) the coordinate `x^b` is empty, so
//! the `x_b` factor is identically one on the shell and is omitted, as is the
//! corresponding condition in the cone `T_b`.
//!
//! All norms are mass norms; see [`crate::geometry::ClusterGeometry`].

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cutoffs::phi_greater;
use crate::error::{param_err, Error, Result};
use crate::geometry::{
    pair_norm_sq, ClusterGeometry, ClusterNorms, Configuration, JacobiFrame, MassSpec,
};
use crate::lattice::{ClusterDecomposition, PairIndex};
use crate::sampling::SplitRng;

/// Largest particle count accepted by [`PartitionConstants::select`].
pub const MAX_SELECT_N: usize = 6;

/// The tuple `(theta_j, rho_j, gamma, sigma)` fixing the partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConstants {
    pub n: usize,
    /// `theta_1 .. theta_{N-1}`.
    pub theta: Vec<f64>,
    /// `rho_2 .. rho_N`.
    pub rho: Vec<f64>,
    pub gamma: f64,
    pub sigma: f64,
}

/// One inequality of the admissibility conditions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub pass: bool,
    /// Positive when satisfied; the distance to violation.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsReport {
    pub checks: Vec<ConstraintCheck>,
    pub all_pass: bool,
}

impl ConstantsReport {
    pub fn failures(&self) -> impl Iterator<Item = &ConstraintCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Derived quantities recorded alongside the constants in reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedConstants {
    pub gamma1_prime: f64,
    pub gamma2_prime: f64,
    /// `min_j rho_j / theta_j`; absent for `N = 2` where the range is empty.
    pub r0: Option<f64>,
    pub sigma_bound: f64,
}

impl PartitionConstants {
    /// Deterministic admissible constants for `2 <= n <= 6`.
    ///
    /// `gamma = 1.1`; `theta_{N-1} = min(0.01, 0.9 / 51^{N-2})`, then backwards
    /// `rho_j = 50 theta_j`, `theta_{j-1} = theta_j + rho_j`, `theta_1 = 1`,
    /// `rho_N = theta_{N-1} / 2`, and `sigma` at 90% of its upper bound.
    pub fn select(n: usize) -> Result<Self> {
        if !(2..=MAX_SELECT_N).contains(&n) {
            return Err(param_err!(
                "constant selection supports 2 <= N <= {MAX_SELECT_N}, got {n}"
            ));
        }
        const RATIO: f64 = 50.0;
        let gamma = 1.1;
        let (theta, rho) = if n == 2 {
            (vec![1.0], vec![0.5])
        } else {
            let mut theta = vec![0.0; n - 1];
            let mut rho = vec![0.0; n - 1];
            theta[n - 2] = f64::min(0.01, 0.9 / libm::pow(RATIO + 1.0, (n - 2) as f64));
            for j in (2..n).rev() {
                rho[j - 2] = RATIO * theta[j - 1];
                if j >= 3 {
                    theta[j - 2] = theta[j - 1] + rho[j - 2];
                }
            }
            theta[0] = 1.0;
            rho[n - 2] = theta[n - 2] / 2.0;
            (theta, rho)
        };
        let mut c = Self {
            n,
            theta,
            rho,
            gamma,
            sigma: 0.0,
        };
        c.sigma = 0.9 * c.sigma_bound();
        let report = c.verify();
        if !report.all_pass {
            let names: Vec<&str> = report.failures().map(|f| f.name.as_str()).collect();
            return Err(Error::Internal(format!(
                "selected constants violate {names:?}"
            )));
        }
        Ok(c)
    }

    /// `theta_j` for `1 <= j <= N-1`.
    pub fn theta(&self, j: usize) -> f64 {
        self.theta[j - 1]
    }

    /// `rho_j` for `2 <= j <= N`.
    pub fn rho(&self, j: usize) -> f64 {
        self.rho[j - 2]
    }

    /// Shell width `theta_{N-1}`.
    pub fn shell_width(&self) -> f64 {
        self.theta(self.n - 1)
    }

    pub fn gamma1_prime(&self) -> f64 {
        self.gamma * (1.0 + self.shell_width())
    }

    pub fn gamma2_prime(&self) -> f64 {
        (1.0 + self.gamma) / (1.0 + self.shell_width())
    }

    /// `min_{2 <= j <= N-1} rho_j / theta_j`, `None` when `N = 2`.
    pub fn r0(&self) -> Option<f64> {
        (2..self.n)
            .map(|j| self.rho(j) / self.theta(j))
            .reduce(f64::min)
    }

    /// Upper bound on `sigma`: `min{(1 - 1/gamma) rho_N, (1 - 1/gamma) rho_j, (gamma - 1) theta_j}`.
    pub fn sigma_bound(&self) -> f64 {
        let a = 1.0 - 1.0 / self.gamma;
        let mut bound = a * self.rho(self.n);
        for j in 2..self.n {
            bound = bound
                .min(a * self.rho(j))
                .min((self.gamma - 1.0) * self.theta(j));
        }
        bound
    }

    pub fn derived(&self) -> DerivedConstants {
        DerivedConstants {
            gamma1_prime: self.gamma1_prime(),
            gamma2_prime: self.gamma2_prime(),
            r0: self.r0(),
            sigma_bound: self.sigma_bound(),
        }
    }

    /// Keeps the constants relevant to a smaller particle count.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        if n < 2 || n > self.n {
            return Err(param_err!(
                "cannot truncate N = {} constants to N = {n}",
                self.n
            ));
        }
        Ok(Self {
            n,
            theta: self.theta[..n - 1].to_vec(),
            rho: self.rho[..n - 1].to_vec(),
            gamma: self.gamma,
            sigma: self.sigma,
        })
    }

    /// Checks every admissibility inequality and reports its slack.
    pub fn verify(&self) -> ConstantsReport {
        let mut checks = Vec::new();
        let mut push = |name: String, slack: f64, strict: bool| {
            let pass = if strict { slack > 0.0 } else { slack >= 0.0 };
            checks.push(ConstraintCheck {
                name,
                pass: pass && slack.is_finite(),
                slack,
            });
        };
        let n = self.n;
        if self.theta.len() != n - 1 || self.rho.len() != n - 1 {
            push("shape: N-1 thetas and N-1 rhos".into(), -1.0, true);
            return ConstantsReport {
                all_pass: false,
                checks,
            };
        }
        push("theta_1 <= 1".into(), 1.0 - self.theta(1), false);
        for j in 2..=n {
            push(
                format!("theta_1 > rho_{j}"),
                self.theta(1) - self.rho(j),
                true,
            );
        }
        for j in 2..n {
            push(
                format!("rho_{j} > theta_{j}"),
                self.rho(j) - self.theta(j),
                true,
            );
            push(
                format!("theta_{j} > rho_N"),
                self.theta(j) - self.rho(n),
                true,
            );
            push(
                format!("theta_{} >= theta_{j} + rho_{j}", j - 1),
                self.theta(j - 1) - self.theta(j) - self.rho(j),
                false,
            );
        }
        for j in 2..n {
            push(
                format!("theta_{} > theta_{j}", j - 1),
                self.theta(j - 1) - self.theta(j),
                true,
            );
        }
        for j in 3..=n {
            push(
                format!("rho_{} > rho_{j}", j - 1),
                self.rho(j - 1) - self.rho(j),
                true,
            );
        }
        push("rho_N > 0".into(), self.rho(n), true);
        push("gamma > 1".into(), self.gamma - 1.0, true);
        let g1 = self.gamma1_prime();
        let g2 = self.gamma2_prime();
        if let Some(r0) = self.r0() {
            push("gamma'_1 < 2".into(), 2.0 - g1, true);
            push(
                "gamma (1 + gamma) < r_0".into(),
                r0 - self.gamma * (1.0 + self.gamma),
                true,
            );
            push(
                "2 gamma'_1 gamma'_2 / (2 - gamma'_1) < r_0".into(),
                r0 - 2.0 * g1 * g2 / (2.0 - g1),
                true,
            );
        }
        push("sigma > 0".into(), self.sigma, true);
        push(
            "sigma < sigma bound".into(),
            self.sigma_bound() - self.sigma,
            true,
        );
        let all_pass = checks.iter().all(|c| c.pass);
        ConstantsReport { checks, all_pass }
    }
}

/// Regions of configuration space used by the partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Region {
    /// `T_b(rho, theta)`: `|z_bk|^2 > rho |x|^2` for all links and `|x_b|^2 > (1 - theta) |x|^2`.
    Cone { rho: f64, theta: f64 },
    /// `T~_b(rho, theta)`: `|z_bk|^2 > rho` for all links and `|x_b|^2 > 1 - theta`.
    Tube { rho: f64, theta: f64 },
    /// `|x|^2 >= 1`.
    Exterior,
    /// `1 <= |x|^2 <= 1 + theta`.
    Shell { theta: f64 },
}

/// Membership of a point with norms `norms` (for a decomposition with
/// `blocks` blocks out of `n` particles) in `region`.
pub fn in_region(norms: &ClusterNorms, blocks: usize, n: usize, region: Region) -> bool {
    let x2 = norms.total;
    match region {
        Region::Exterior => x2 >= 1.0,
        Region::Shell { theta } => (1.0..=1.0 + theta).contains(&x2),
        Region::Cone { rho, theta } => {
            norms.links.iter().all(|&z| z > rho * x2)
                && (blocks == n || norms.inter > (1.0 - theta) * x2)
        }
        Region::Tube { rho, theta } => {
            norms.links.iter().all(|&z| z > rho) && (blocks == n || norms.inter > 1.0 - theta)
        }
    }
}

/// `|x_alpha|^2` for a pair `alpha` joining blocks `l < m` of `b`, with
/// `x_alpha` embedded as `(z_bk, x^b)`: `|z_bk|^2 + |x^b|^2`, where `z_bk` is
/// the link between `l` and `m`.
pub fn link_embedded_norm_sq(
    b: &ClusterDecomposition,
    norms: &ClusterNorms,
    pair: PairIndex,
) -> f64 {
    let (p, q) = (
        b.block_of(pair.i).unwrap_or(0),
        b.block_of(pair.j).unwrap_or(0),
    );
    let (l, m) = (p.min(q), p.max(q));
    let nb = b.len();
    // Links are ordered lexicographically by (from, to).
    let k = (0..l).map(|a| nb - 1 - a).sum::<usize>() + (m - l - 1);
    norms.links[k] + norms.intra
}

/// Outcome of the support check at one point.
///
/// `violations` uses the embedded pair norm of [`link_embedded_norm_sq`].
/// `physical_violations` uses `mu_alpha |r_i - r_j|^2` instead; for unequal
/// cluster masses this can be smaller than `|z_bk|^2` and is reported only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportCheck {
    pub violations: usize,
    pub physical_violations: usize,
    pub min_margin: f64,
    pub min_physical_margin: f64,
}

/// Evaluated partition at one configuration.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub norms: Vec<ClusterNorms>,
    pub varphi: Vec<f64>,
    pub j: Vec<f64>,
}

impl Evaluation {
    pub fn sum(&self) -> f64 {
        self.j.iter().sum()
    }
}

/// The family `{J_b : 2 <= |b| <= N}` for fixed masses and constants.
#[derive(Debug, Clone)]
pub struct PartitionOfUnity {
    constants: PartitionConstants,
    mass: MassSpec,
    nu: usize,
    decompositions: Vec<ClusterDecomposition>,
    geometry: Vec<ClusterGeometry>,
    /// `strictly_finer[i][k]`: decomposition `i` is strictly finer than `k`.
    strictly_finer: Vec<Vec<bool>>,
}

impl PartitionOfUnity {
    pub fn new(constants: PartitionConstants, mass: MassSpec, nu: usize) -> Result<Self> {
        if constants.n != mass.n() {
            return Err(param_err!(
                "constants for N = {} but {} masses",
                constants.n,
                mass.n()
            ));
        }
        if nu == 0 {
            return Err(param_err!("spatial dimension must be >= 1"));
        }
        let decompositions = ClusterDecomposition::enumerate_nontrivial(mass.n())?;
        let geometry = decompositions
            .iter()
            .map(|b| ClusterGeometry::new(&mass, b))
            .collect::<Result<Vec<_>>>()?;
        let strictly_finer = decompositions
            .iter()
            .map(|b| {
                decompositions
                    .iter()
                    .map(|c| b != c && b.is_refinement_of(c).unwrap_or(false))
                    .collect()
            })
            .collect();
        Ok(Self {
            constants,
            mass,
            nu,
            decompositions,
            geometry,
            strictly_finer,
        })
    }

    pub fn constants(&self) -> &PartitionConstants {
        &self.constants
    }

    pub fn mass(&self) -> &MassSpec {
        &self.mass
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn decompositions(&self) -> &[ClusterDecomposition] {
        &self.decompositions
    }

    pub fn index_of(&self, b: &ClusterDecomposition) -> Option<usize> {
        self.decompositions.iter().position(|d| d == b)
    }

    pub fn geometry(&self, idx: usize) -> &ClusterGeometry {
        &self.geometry[idx]
    }

    fn level(&self, idx: usize) -> usize {
        self.decompositions[idx].len()
    }

    /// `varphi_b` from precomputed norms.
    pub fn varphi_from_norms(&self, idx: usize, norms: &ClusterNorms) -> f64 {
        let k = self.level(idx);
        let c = &self.constants;
        let mut v = 1.0;
        for &z in &norms.links {
            v *= phi_greater(z, c.rho(k), c.sigma);
            if v == 0.0 {
                return 0.0;
            }
        }
        if k < c.n {
            v *= phi_greater(norms.inter, 1.0 - c.theta(k), c.sigma);
        }
        v
    }

    pub fn norms(&self, x: &Configuration) -> Vec<ClusterNorms> {
        self.geometry.iter().map(|g| g.norms(x)).collect()
    }

    /// Evaluates every `varphi_b` and every `J_b` by the unrestricted product.
    pub fn evaluate(&self, x: &Configuration) -> Evaluation {
        let norms = self.norms(x);
        let varphi: Vec<f64> = norms
            .iter()
            .enumerate()
            .map(|(i, nm)| self.varphi_from_norms(i, nm))
            .collect();
        let j = self.j_from_varphi(&varphi);
        Evaluation { norms, varphi, j }
    }

    fn j_from_varphi(&self, varphi: &[f64]) -> Vec<f64> {
        let n = self.constants.n;
        let mut level_sum = vec![0.0; n + 1];
        for (i, v) in varphi.iter().enumerate() {
            level_sum[self.level(i)] += v;
        }
        // prefix[k] = prod_{j=2}^{k-1} (1 - s_j)
        let mut prefix = vec![1.0; n + 1];
        for k in 3..=n {
            prefix[k] = prefix[k - 1] * (1.0 - level_sum[k - 1]);
        }
        varphi
            .iter()
            .enumerate()
            .map(|(i, v)| v * prefix[self.level(i)])
            .collect()
    }

    /// `J_b` with each inner sum restricted to decompositions strictly coarser than `b`.
    /// Agrees with [`Self::evaluate`] on the shell.
    pub fn j_restricted(&self, x: &Configuration) -> Vec<f64> {
        let norms = self.norms(x);
        let varphi: Vec<f64> = norms
            .iter()
            .enumerate()
            .map(|(i, nm)| self.varphi_from_norms(i, nm))
            .collect();
        (0..varphi.len())
            .map(|i| {
                let mut v = varphi[i];
                for lvl in 2..self.level(i) {
                    let s: f64 = (0..varphi.len())
                        .filter(|&k| self.level(k) == lvl && self.strictly_finer[i][k])
                        .map(|k| varphi[k])
                        .sum();
                    v *= 1.0 - s;
                }
                v
            })
            .collect()
    }

    /// `J_b` for one decomposition.
    pub fn j(&self, x: &Configuration, idx: usize) -> f64 {
        self.evaluate(x).j[idx]
    }

    /// Checks `|x_alpha|^2 > rho_|b| |x|^2 / 2` for every pair `alpha` outside
    /// `b`, at every `b` with `J_b > threshold`.
    pub fn support_check(
        &self,
        x: &Configuration,
        eval: &Evaluation,
        threshold: f64,
    ) -> SupportCheck {
        let mut out = SupportCheck {
            violations: 0,
            physical_violations: 0,
            min_margin: f64::INFINITY,
            min_physical_margin: f64::INFINITY,
        };
        for (i, b) in self.decompositions.iter().enumerate() {
            if eval.j[i] <= threshold {
                continue;
            }
            let norms = &eval.norms[i];
            let bound = self.constants.rho(b.len()) * norms.total / 2.0;
            for pair in b.intercluster_pairs() {
                let margin = link_embedded_norm_sq(b, norms, pair) - bound;
                out.min_margin = out.min_margin.min(margin);
                out.violations += usize::from(margin <= 0.0);
                let physical = pair_norm_sq(&self.mass, x, pair) - bound;
                out.min_physical_margin = out.min_physical_margin.min(physical);
                out.physical_violations += usize::from(physical <= 0.0);
            }
        }
        out
    }

    /// True when some cone `T_b(rho_|b|, theta_|b|)` contains `x`.
    pub fn covered(&self, eval: &Evaluation) -> bool {
        let c = &self.constants;
        (0..self.decompositions.len()).any(|i| {
            let k = self.level(i);
            let theta = if k < c.n { c.theta(k) } else { 0.0 };
            in_region(
                &eval.norms[i],
                k,
                c.n,
                Region::Cone {
                    rho: c.rho(k),
                    theta,
                },
            )
        })
    }

    /// Number of pairs `(b, c)` with `b` not finer than `c`, `|b| >= |c|`, whose
    /// scaled cones `T(rho / gamma'_1, gamma'_2 theta)` both contain `x`.
    pub fn disjointness_violations(&self, eval: &Evaluation) -> usize {
        let c = &self.constants;
        let (g1, g2) = (c.gamma1_prime(), c.gamma2_prime());
        let inside: Vec<bool> = (0..self.decompositions.len())
            .map(|i| {
                let k = self.level(i);
                let theta = if k < c.n { g2 * c.theta(k) } else { 0.0 };
                in_region(
                    &eval.norms[i],
                    k,
                    c.n,
                    Region::Cone {
                        rho: c.rho(k) / g1,
                        theta,
                    },
                )
            })
            .collect();
        let mut count = 0;
        for bi in 0..inside.len() {
            for ci in 0..inside.len() {
                if bi == ci || !inside[bi] || !inside[ci] {
                    continue;
                }
                let (lb, lc) = (self.level(bi), self.level(ci));
                if lb >= lc && !self.strictly_finer[bi][ci] {
                    count += 1;
                }
            }
        }
        count
    }
}

/// Which sampler produced a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    Uniform,
    Transition,
}

/// Draws points on the shell: uniform in `|x|^2` and direction (mass metric),
/// plus points placed within a few `sigma` of a cutoff transition.
#[derive(Debug, Clone)]
pub struct ShellSampler<'a> {
    pou: &'a PartitionOfUnity,
    frame: JacobiFrame,
    /// Per decomposition: its own frame, for the `x_b` / `x^b` split.
    frames: Vec<JacobiFrame>,
    /// Per decomposition and link: scalar row of `R_l - R_m` in `frame` coordinates.
    link_rows: Vec<Vec<Vec<f64>>>,
}

impl<'a> ShellSampler<'a> {
    pub fn new(pou: &'a PartitionOfUnity) -> Result<Self> {
        let n = pou.mass.n();
        let frame = JacobiFrame::build(&pou.mass, &ClusterDecomposition::one_block(n), pou.nu)?;
        let frames = pou
            .decompositions
            .iter()
            .map(|b| JacobiFrame::build(&pou.mass, b, pou.nu))
            .collect::<Result<Vec<_>>>()?;
        let mut link_rows = Vec::with_capacity(pou.decompositions.len());
        for b in &pou.decompositions {
            let mut rows = Vec::new();
            for link in b.links()? {
                let (bl, bm) = (&b.blocks()[link.from_block], &b.blocks()[link.to_block]);
                let ml: f64 = bl.iter().map(|&p| pou.mass.mass(p)).sum();
                let mm: f64 = bm.iter().map(|&p| pou.mass.mass(p)).sum();
                // R_l - R_m = sum_{i in l, j in m} m_i m_j / (M_l M_m) (r_i - r_j)
                let mut row = vec![0.0; n - 1];
                for &i in bl {
                    for &j in bm {
                        let w = pou.mass.mass(i) * pou.mass.mass(j) / (ml * mm);
                        let (pair, sign) = if i < j {
                            (PairIndex::new(i, j)?, 1.0)
                        } else {
                            (PairIndex::new(j, i)?, -1.0)
                        };
                        let f = frame.pair_coordinate(pair)?;
                        row.iter_mut()
                            .zip(&f.coeffs)
                            .for_each(|(r, c)| *r += sign * w * c);
                    }
                }
                rows.push(row);
            }
            link_rows.push(rows);
        }
        Ok(Self {
            pou,
            frame,
            frames,
            link_rows,
        })
    }

    /// Isotropic unit vector in the mass metric.
    fn direction(&self, rng: &mut SplitRng) -> Vec<f64> {
        let mut v: Vec<f64> = (0..self.frame.dim())
            .map(|i| rng.normal() / libm::sqrt(self.frame.slot_weight(i)))
            .collect();
        let norm = libm::sqrt(self.frame.inner(&v, &v).unwrap_or(1.0));
        v.iter_mut().for_each(|a| *a /= norm);
        v
    }

    fn at_radius(&self, unit: &[f64], r2: f64) -> Configuration {
        let r = libm::sqrt(r2);
        let coords: Vec<f64> = unit.iter().map(|a| a * r).collect();
        self.frame
            .to_configuration(&coords)
            .expect("dimension matches")
    }

    /// Uniform point with `lo <= |x|^2 <= hi`.
    pub fn uniform(&self, rng: &mut SplitRng, lo: f64, hi: f64) -> Configuration {
        let u = self.direction(rng);
        let r2 = rng.uniform_in(lo, hi);
        self.at_radius(&u, r2)
    }

    pub fn uniform_shell(&self, rng: &mut SplitRng) -> Configuration {
        self.uniform(rng, 1.0, 1.0 + self.pou.constants.shell_width())
    }

    /// A shell point where one cutoff argument of one `varphi_b` (a link
    /// `|z_bk|^2` or `|x_b|^2`) equals a target drawn from
    /// `[tau - 3 sigma, tau + 2 sigma]`.
    ///
    /// The point is built by splitting a uniform point mass-orthogonally into
    /// the component carrying that argument and the rest, then rescaling both.
    pub fn transition(&self, rng: &mut SplitRng) -> Configuration {
        let c = &self.pou.constants;
        let idx = rng.index(self.pou.decompositions.len());
        let k = self.pou.level(idx);
        let nlinks = self.link_rows[idx].len();
        let choices = if k < c.n { nlinks + 1 } else { nlinks };
        let which = rng.index(choices);
        let tau = if which < nlinks {
            c.rho(k)
        } else {
            1.0 - c.theta(k)
        };
        let r2 = rng.uniform_in(1.0, 1.0 + c.shell_width());
        let target = (tau - c.sigma + rng.uniform_in(-2.0 * c.sigma, 3.0 * c.sigma)).clamp(0.0, r2);
        let unit = self.direction(rng);
        let nu = self.pou.nu;
        let (frame, coords, parallel) = if which < nlinks {
            let row = &self.link_rows[idx][which];
            let w = self.frame.weights();
            let s: f64 = row.iter().zip(w).map(|(a, w)| a * a / w).sum();
            let mut par = vec![0.0; unit.len()];
            for d in 0..nu {
                let t: f64 = row
                    .iter()
                    .enumerate()
                    .map(|(i, a)| a * unit[i * nu + d])
                    .sum();
                for (i, a) in row.iter().enumerate() {
                    par[i * nu + d] = t / s * a / w[i];
                }
            }
            (&self.frame, unit.clone(), par)
        } else {
            let frame = &self.frames[idx];
            let coords = frame
                .to_coords(&self.at_radius(&unit, 1.0))
                .expect("dimension matches");
            let cut = frame.intercluster_count() * nu;
            let par = coords
                .iter()
                .enumerate()
                .map(|(i, v)| if i < cut { *v } else { 0.0 })
                .collect();
            (frame, coords, par)
        };
        let perp: Vec<f64> = coords.iter().zip(&parallel).map(|(a, p)| a - p).collect();
        let p2 = frame.inner(&parallel, &parallel).unwrap_or(0.0);
        let q2 = frame.inner(&perp, &perp).unwrap_or(0.0);
        // A vanishing complement means the argument is the whole norm (for
        // instance the single link when N = 2); no rescaling can move it.
        if p2 <= 0.0 || q2 <= 1e-12 * p2 {
            return self.at_radius(&unit, r2);
        }
        let alpha = libm::sqrt(target / p2);
        let beta = libm::sqrt((r2 - target) / q2);
        let moved: Vec<f64> = parallel
            .iter()
            .zip(&perp)
            .map(|(p, q)| alpha * p + beta * q)
            .collect();
        frame.to_configuration(&moved).expect("dimension matches")
    }

    pub fn frame(&self) -> &JacobiFrame {
        &self.frame
    }
}

/// Settings for [`verify_partition`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySettings {
    pub samples: usize,
    pub seed: u64,
    /// Fraction of samples placed near cutoff transitions.
    #[serde(default = "default_transition_fraction")]
    pub transition_fraction: f64,
    /// Finite-difference gradients are taken on every sample with a cutoff in
    /// transition and on every `gradient_stride`-th sample otherwise.
    #[serde(default = "default_gradient_stride")]
    pub gradient_stride: usize,
    /// Number of locality probes (varying `x^b` at fixed `x_b`).
    #[serde(default = "default_locality_probes")]
    pub locality_probes: usize,
    /// Threshold above which `J_b` counts as supported at a point.
    #[serde(default = "default_support_threshold")]
    pub support_threshold: f64,
}

fn default_transition_fraction() -> f64 {
    0.5
}
fn default_gradient_stride() -> usize {
    10
}
fn default_locality_probes() -> usize {
    1000
}
fn default_support_threshold() -> f64 {
    1e-12
}

impl VerifySettings {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self {
            samples,
            seed,
            transition_fraction: default_transition_fraction(),
            gradient_stride: default_gradient_stride(),
            locality_probes: default_locality_probes(),
            support_threshold: default_support_threshold(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Violations {
    pub support: usize,
    pub covering: usize,
    pub disjointness: usize,
}

/// Per-sample diagnostics, for CSV export.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleRecord {
    pub index: usize,
    pub kind: SampleKind,
    pub norm_sq: f64,
    pub identity_deviation: f64,
    pub restricted_deviation: f64,
    pub support_margin: f64,
    pub covered: bool,
    pub disjointness_violations: usize,
    pub max_gradient: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionReport {
    pub constants: PartitionConstants,
    pub derived: DerivedConstants,
    pub n: usize,
    pub nu: usize,
    pub masses: Vec<f64>,
    pub samples: usize,
    pub transition_samples: usize,
    /// Samples where some `varphi_b` lies strictly between 0 and 1.
    pub samples_in_transition: usize,
    pub gradient_samples: usize,
    pub seed: u64,
    pub max_identity_deviation: f64,
    /// Largest difference between the unrestricted and restricted products.
    pub max_restricted_deviation: f64,
    pub violations: Violations,
    /// Smallest `|x_alpha|^2 - rho_|b| |x|^2 / 2` over supported `(b, alpha)`.
    pub min_support_margin: f64,
    /// Support violations when `|x_alpha|^2` is the physical pair norm.
    pub physical_support_violations: usize,
    pub min_physical_support_margin: f64,
    pub max_gradient: f64,
    /// Same maximum with the finite-difference step halved.
    pub max_gradient_half_step: f64,
    pub gradient_step: f64,
    pub locality_probes: usize,
    pub max_locality_deviation: f64,
    #[serde(skip)]
    pub records: Vec<SampleRecord>,
}

impl PartitionReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_identity_deviation <= tol
            && self.violations.support == 0
            && self.violations.covering == 0
            && self.violations.disjointness == 0
    }
}

/// Largest central-difference gradient of `J_b` with respect to `x_b`, over all `b`.
pub fn max_gradient(
    pou: &PartitionOfUnity,
    frames: &[JacobiFrame],
    x: &Configuration,
    step: f64,
) -> Result<f64> {
    let mut best: f64 = 0.0;
    for (idx, frame) in frames.iter().enumerate() {
        let coords = frame.to_coords(x)?;
        let cut = frame.intercluster_count() * frame.nu();
        let mut g2 = 0.0;
        for i in 0..cut {
            let mut plus = coords.clone();
            let mut minus = coords.clone();
            plus[i] += step;
            minus[i] -= step;
            let jp = pou.j(&frame.to_configuration(&plus)?, idx);
            let jm = pou.j(&frame.to_configuration(&minus)?, idx);
            let d = (jp - jm) / (2.0 * step);
            // Dual (mass) norm of the gradient.
            g2 += d * d / frame.slot_weight(i);
        }
        best = best.max(libm::sqrt(g2));
    }
    Ok(best)
}

/// Samples the shell and checks the partition identity, support and gradient
/// properties of `J_b` together with the covering and disjointness of the cones.
pub fn verify_partition(
    pou: &PartitionOfUnity,
    settings: &VerifySettings,
) -> Result<PartitionReport> {
    if settings.samples == 0 {
        return Err(param_err!("need at least one sample"));
    }
    let c = pou.constants();
    let sampler = ShellSampler::new(pou)?;
    let frames = pou
        .decompositions
        .iter()
        .map(|b| JacobiFrame::build(&pou.mass, b, pou.nu))
        .collect::<Result<Vec<_>>>()?;
    let rng = SplitRng::new(settings.seed);
    let transition_every = if settings.transition_fraction <= 0.0 {
        usize::MAX
    } else {
        libm::round(1.0 / settings.transition_fraction).max(1.0) as usize
    };
    let step = c.sigma * 1e-2;

    let mut report = PartitionReport {
        constants: c.clone(),
        derived: c.derived(),
        n: c.n,
        nu: pou.nu,
        masses: pou.mass.masses().to_vec(),
        samples: settings.samples,
        transition_samples: 0,
        samples_in_transition: 0,
        gradient_samples: 0,
        seed: settings.seed,
        max_identity_deviation: 0.0,
        max_restricted_deviation: 0.0,
        violations: Violations {
            support: 0,
            covering: 0,
            disjointness: 0,
        },
        min_support_margin: f64::INFINITY,
        physical_support_violations: 0,
        min_physical_support_margin: f64::INFINITY,
        max_gradient: 0.0,
        max_gradient_half_step: 0.0,
        gradient_step: step,
        locality_probes: 0,
        max_locality_deviation: 0.0,
        records: Vec::with_capacity(settings.samples),
    };
    let mut points = Vec::with_capacity(settings.locality_probes.min(settings.samples));

    for index in 0..settings.samples {
        let mut r = rng.fork(index as u64);
        let kind = if index % transition_every == transition_every - 1 {
            SampleKind::Transition
        } else {
            SampleKind::Uniform
        };
        let x = match kind {
            SampleKind::Uniform => sampler.uniform_shell(&mut r),
            SampleKind::Transition => sampler.transition(&mut r),
        };
        if kind == SampleKind::Transition {
            report.transition_samples += 1;
        }
        let eval = pou.evaluate(&x);
        let dev = (eval.sum() - 1.0).abs();
        let restricted = pou.j_restricted(&x);
        let rdev = eval
            .j
            .iter()
            .zip(&restricted)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let support = pou.support_check(&x, &eval, settings.support_threshold);
        let covered = pou.covered(&eval);
        let disjoint = pou.disjointness_violations(&eval);
        let in_transition = eval.varphi.iter().any(|v| *v > 0.0 && *v < 1.0);
        report.samples_in_transition += usize::from(in_transition);
        let strided = settings.gradient_stride > 0 && index % settings.gradient_stride == 0;
        let grad = if in_transition || strided {
            report.gradient_samples += 1;
            let g = max_gradient(pou, &frames, &x, step)?;
            let gh = max_gradient(pou, &frames, &x, step / 2.0)?;
            report.max_gradient = report.max_gradient.max(g);
            report.max_gradient_half_step = report.max_gradient_half_step.max(gh);
            Some(g)
        } else {
            None
        };
        report.max_identity_deviation = report.max_identity_deviation.max(dev);
        report.max_restricted_deviation = report.max_restricted_deviation.max(rdev);
        report.violations.support += support.violations;
        report.physical_support_violations += support.physical_violations;
        report.min_physical_support_margin = report
            .min_physical_support_margin
            .min(support.min_physical_margin);
        report.violations.covering += usize::from(!covered);
        report.violations.disjointness += disjoint;
        report.min_support_margin = report.min_support_margin.min(support.min_margin);
        report.records.push(SampleRecord {
            index,
            kind,
            norm_sq: eval.norms[0].total,
            identity_deviation: dev,
            restricted_deviation: rdev,
            support_margin: support.min_margin,
            covered,
            disjointness_violations: disjoint,
            max_gradient: grad,
        });
        if points.len() < settings.locality_probes {
            points.push(x);
        }
    }

    // Only decompositions with a non-empty `x^b` can be probed.
    let probed: Vec<usize> = (0..frames.len())
        .filter(|&i| frames[i].intercluster_count() * frames[i].nu() < frames[i].dim())
        .collect();
    if !probed.is_empty() {
        let mut probe_rng = rng.fork(u64::MAX - 1);
        for x in &points {
            let idx = probed[probe_rng.index(probed.len())];
            if let Some(d) = locality_probe(pou, &frames[idx], idx, x, &mut probe_rng)? {
                report.locality_probes += 1;
                report.max_locality_deviation = report.max_locality_deviation.max(d);
            }
        }
    }
    Ok(report)
}

/// Replaces `x^b` by a random vector keeping `x_b` and the shell constraint;
/// returns `|J_b(x') - J_b(x)|`, or `None` when `x^b` is empty.
pub fn locality_probe(
    pou: &PartitionOfUnity,
    frame: &JacobiFrame,
    idx: usize,
    x: &Configuration,
    rng: &mut SplitRng,
) -> Result<Option<f64>> {
    let coords = frame.to_coords(x)?;
    let cut = frame.intercluster_count() * frame.nu();
    if cut == coords.len() {
        return Ok(None);
    }
    let (inter, _) = frame.split_norms(&coords)?;
    let theta = pou.constants.shell_width();
    let lo = (1.0 - inter).max(0.0);
    let hi = 1.0 + theta - inter;
    if hi < lo {
        return Err(Error::Domain("point is not on the shell".into()));
    }
    let target = rng.uniform_in(lo, hi);
    let mut moved = coords.clone();
    for (i, v) in moved.iter_mut().enumerate().skip(cut) {
        *v = rng.normal() / libm::sqrt(frame.slot_weight(i));
    }
    let (_, intra) = frame.split_norms(&moved)?;
    let scale = libm::sqrt(target / intra);
    moved.iter_mut().skip(cut).for_each(|v| *v *= scale);
    let before = pou.j(x, idx);
    let after = pou.j(&frame.to_configuration(&moved)?, idx);
    Ok(Some((after - before).abs()))
}

/// Samples `|x|^2` in `[1, outer]` and counts points outside every cone and
/// points in two cones that the lemma separates.
pub fn sample_cones(
    pou: &PartitionOfUnity,
    samples: usize,
    seed: u64,
    outer: f64,
) -> Result<(usize, usize)> {
    let sampler = ShellSampler::new(pou)?;
    let rng = SplitRng::new(seed);
    let mut uncovered = 0;
    let mut overlaps = 0;
    for i in 0..samples {
        let mut r = rng.fork(i as u64);
        let x = sampler.uniform(&mut r, 1.0, outer);
        let eval = pou.evaluate(&x);
        uncovered += usize::from(!pou.covered(&eval));
        overlaps += pou.disjointness_violations(&eval);
    }
    Ok((uncovered, overlaps))
}

/// Pairs outside `b` used in the support check, exposed for reports.
pub fn intercluster_pairs(b: &ClusterDecomposition) -> Vec<PairIndex> {
    b.intercluster_pairs()
}
