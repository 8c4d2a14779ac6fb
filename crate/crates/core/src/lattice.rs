//! Cluster decompositions of the particle set `{1..N}` and their refinement order.
//!
//! Particles are numbered from 1 as usual for N-body problems. Blocks are kept
//! in canonical form: elements ascending inside each block, blocks ordered by
//! their smallest element. Two decompositions are equal iff their canonical
//! block lists are equal.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};

/// Largest particle count accepted by [`ClusterDecomposition::enumerate`].
pub const MAX_ENUMERATION_N: usize = 8;

/// A set partition of `{1..N}` in canonical form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct ClusterDecomposition {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

/// An unordered pair `{i, j}` of particles with `1 <= i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairIndex {
    pub i: usize,
    pub j: usize,
}

/// The vector `z_{bk}` joining the centers of mass of two blocks of a decomposition.
///
/// `k` counts links from 1 in lexicographic order of `(from_block, to_block)`;
/// block indices are 0-based positions in the canonical block list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InterclusterLink {
    pub k: usize,
    pub from_block: usize,
    pub to_block: usize,
}

impl PairIndex {
    pub fn new(i: usize, j: usize) -> Result<Self> {
        if i == 0 || j == 0 || i == j {
            return Err(param_err!(
                "pair ({i}, {j}) must be two distinct indices >= 1"
            ));
        }
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        Ok(Self { i, j })
    }

    /// All pairs of an `n`-particle system in lexicographic order.
    pub fn all(n: usize) -> Vec<PairIndex> {
        let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 1..=n {
            for j in i + 1..=n {
                out.push(PairIndex { i, j });
            }
        }
        out
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.i == 0 || self.i >= self.j || self.j > n {
            return Err(param_err!(
                "pair {{{}, {}}} invalid for N = {n}",
                self.i,
                self.j
            ));
        }
        Ok(())
    }
}

impl fmt::Display for PairIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{},{}}}", self.i, self.j)
    }
}

impl ClusterDecomposition {
    /// Builds a decomposition of `{1..n}` from arbitrary-order blocks.
    pub fn new(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        if n == 0 {
            return Err(param_err!("particle count must be positive"));
        }
        let mut seen = vec![false; n + 1];
        let mut blocks = blocks;
        for block in &mut blocks {
            if block.is_empty() {
                return Err(param_err!("empty block"));
            }
            block.sort_unstable();
            for &p in block.iter() {
                if p == 0 || p > n {
                    return Err(param_err!("particle index {p} outside 1..={n}"));
                }
                if seen[p] {
                    return Err(param_err!("particle {p} appears twice"));
                }
                seen[p] = true;
            }
        }
        if let Some(p) = (1..=n).find(|&p| !seen[p]) {
            return Err(param_err!("particle {p} missing from every block"));
        }
        blocks.sort_unstable_by_key(|b| b[0]);
        Ok(Self { n, blocks })
    }

    /// Infers `n` as the number of listed particles.
    pub fn from_blocks(blocks: Vec<Vec<usize>>) -> Result<Self> {
        let n = blocks.iter().map(Vec::len).sum();
        Self::new(n, blocks)
    }

    /// The finest decomposition `{{1},{2},...,{n}}`.
    pub fn singletons(n: usize) -> Self {
        Self {
            n,
            blocks: (1..=n).map(|p| vec![p]).collect(),
        }
    }

    /// The coarsest decomposition `{{1,...,n}}`.
    pub fn one_block(n: usize) -> Self {
        Self {
            n,
            blocks: vec![(1..=n).collect()],
        }
    }

    /// `{i,j}` in one block, everything else a singleton.
    pub fn from_pair(pair: PairIndex, n: usize) -> Result<Self> {
        pair.check(n)?;
        let mut blocks = vec![vec![pair.i, pair.j]];
        blocks.extend(
            (1..=n)
                .filter(|&p| p != pair.i && p != pair.j)
                .map(|p| vec![p]),
        );
        Self::new(n, blocks)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of blocks, written `|a|`.
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Index of the block holding particle `p` (1-based particle, 0-based block).
    pub fn block_of(&self, p: usize) -> Option<usize> {
        self.blocks.iter().position(|b| b.binary_search(&p).is_ok())
    }

    /// All set partitions of `{1..n}` in canonical form, ordered by their
    /// restricted growth strings.
    pub fn enumerate(n: usize) -> Result<Vec<Self>> {
        if !(2..=MAX_ENUMERATION_N).contains(&n) {
            return Err(param_err!(
                "enumeration supports 2 <= N <= {MAX_ENUMERATION_N}, got {n}"
            ));
        }
        // Restricted growth strings: a[0] = 0, a[i] <= 1 + max(a[..i]).
        let mut out = Vec::new();
        let mut rgs = vec![0usize; n];
        loop {
            let blocks_count = rgs.iter().max().map_or(0, |m| m + 1);
            let mut blocks = vec![Vec::new(); blocks_count];
            for (p, &label) in rgs.iter().enumerate() {
                blocks[label].push(p + 1);
            }
            out.push(Self { n, blocks });

            // Next string in lexicographic order.
            let mut i = n - 1;
            loop {
                if i == 0 {
                    return Ok(out);
                }
                let prefix_max = rgs[..i].iter().copied().max().unwrap_or(0);
                if rgs[i] <= prefix_max {
                    rgs[i] += 1;
                    for r in rgs.iter_mut().skip(i + 1) {
                        *r = 0;
                    }
                    break;
                }
                i -= 1;
            }
        }
    }

    /// Decompositions with `2 <= |b| <= n`, i.e. all but the one-block one.
    pub fn enumerate_nontrivial(n: usize) -> Result<Vec<Self>> {
        Ok(Self::enumerate(n)?
            .into_iter()
            .filter(|d| d.len() >= 2)
            .collect())
    }

    /// `self <= a`: every block of `self` lies inside some block of `a`.
    pub fn is_refinement_of(&self, a: &Self) -> Result<bool> {
        if self.n != a.n {
            return Err(param_err!(
                "decompositions over N = {} and N = {}",
                self.n,
                a.n
            ));
        }
        Ok(self.blocks.iter().all(|blk| {
            let host = a.block_of(blk[0]);
            host.is_some() && blk.iter().all(|&p| a.block_of(p) == host)
        }))
    }

    /// `alpha <= a`: both particles of the pair lie in the same block of `a`.
    pub fn contains_pair(&self, pair: PairIndex) -> Result<bool> {
        pair.check(self.n)?;
        Ok(self.block_of(pair.i) == self.block_of(pair.j))
    }

    /// Pairs `alpha` with `alpha` not below `self` (particles in different blocks).
    pub fn intercluster_pairs(&self) -> Vec<PairIndex> {
        PairIndex::all(self.n)
            .into_iter()
            .filter(|p| self.block_of(p.i) != self.block_of(p.j))
            .collect()
    }

    /// Pairs inside some block of `self`.
    pub fn intracluster_pairs(&self) -> Vec<PairIndex> {
        PairIndex::all(self.n)
            .into_iter()
            .filter(|p| self.block_of(p.i) == self.block_of(p.j))
            .collect()
    }

    /// One link per unordered block pair, lexicographic in block indices.
    pub fn links(&self) -> Result<Vec<InterclusterLink>> {
        let m = self.len();
        if m < 2 {
            return Err(Error::Domain(
                "a one-block decomposition has no intercluster links".into(),
            ));
        }
        let mut out = Vec::with_capacity(m * (m - 1) / 2);
        for from_block in 0..m {
            for to_block in from_block + 1..m {
                out.push(InterclusterLink {
                    k: out.len() + 1,
                    from_block,
                    to_block,
                });
            }
        }
        Ok(out)
    }

    /// Joins the two blocks connected by `link` into one.
    pub fn merge(&self, link: InterclusterLink) -> Result<Self> {
        let m = self.len();
        if link.from_block == link.to_block || link.from_block >= m || link.to_block >= m {
            return Err(param_err!(
                "link ({}, {}) invalid for a decomposition with {m} blocks",
                link.from_block,
                link.to_block
            ));
        }
        let mut blocks = Vec::with_capacity(m - 1);
        let mut merged = Vec::new();
        for (idx, blk) in self.blocks.iter().enumerate() {
            if idx == link.from_block || idx == link.to_block {
                merged.extend_from_slice(blk);
            } else {
                blocks.push(blk.clone());
            }
        }
        blocks.push(merged);
        Self::new(self.n, blocks)
    }

    /// For `self < b` with `|self| = |b| + 1`, returns `(block of b that was
    /// split, the two blocks of self it splits into)` as indices.
    pub fn split_of(&self, b: &Self) -> Result<(usize, usize, usize)> {
        if self.len() != b.len() + 1 || !self.is_refinement_of(b)? {
            return Err(param_err!("decomposition is not an immediate refinement"));
        }
        for (bi, host) in b.blocks.iter().enumerate() {
            let parts: Vec<usize> = (0..self.len())
                .filter(|&ci| b.block_of(self.blocks[ci][0]) == Some(bi))
                .collect();
            if parts.len() == 2 {
                debug_assert!(
                    host.len() == self.blocks[parts[0]].len() + self.blocks[parts[1]].len()
                );
                return Ok((bi, parts[0], parts[1]));
            }
        }
        Err(Error::Internal("split block not found".into()))
    }
}

impl TryFrom<Vec<Vec<usize>>> for ClusterDecomposition {
    type Error = Error;

    fn try_from(blocks: Vec<Vec<usize>>) -> Result<Self> {
        Self::from_blocks(blocks)
    }
}

impl From<ClusterDecomposition> for Vec<Vec<usize>> {
    fn from(d: ClusterDecomposition) -> Self {
        d.blocks
    }
}

impl fmt::Display for ClusterDecomposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (bi, blk) in self.blocks.iter().enumerate() {
            if bi > 0 {
                f.write_str(",")?;
            }
            f.write_str("{")?;
            for (pi, p) in blk.iter().enumerate() {
                if pi > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{p}")?;
            }
            f.write_str("}")?;
        }
        f.write_str("}")
    }
}
