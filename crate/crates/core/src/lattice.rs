//! Rectangular pixel lattices, partitions of their pixels, and the
//! bond-induced nested clusters used by the Swendsen-Wang style update.
//!
//! Pixels are indexed row-major from 0 internally. Grid coordinates are
//! reported 1-based, so pixel 0 sits at `(1, 1)`. Partition traces use
//! 1-based canonical labels on disk.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A `height x width` grid with 4-connected neighbour pairs `(j, k)`, `j < k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice<T> {
    height: usize,
    width: usize,
    pairs: Vec<(usize, usize)>,
    coupling: Vec<T>,
    // per pixel: (neighbour, pair index)
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl<T: Real> Lattice<T> {
    /// Full first-order lattice with one common coupling on every pair.
    pub fn new(height: usize, width: usize, upsilon: T) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidLattice(format!(
                "dimensions must be positive, got {height}x{width}"
            )));
        }
        if !(upsilon >= T::zero()) || !upsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "coupling must be finite and nonnegative, got {upsilon}"
            )));
        }
        let mut pairs = Vec::with_capacity(2 * height * width - height - width);
        for r in 0..height {
            for c in 0..width {
                let j = r * width + c;
                if c + 1 < width {
                    pairs.push((j, j + 1));
                }
                if r + 1 < height {
                    pairs.push((j, j + width));
                }
            }
        }
        let coupling = vec![upsilon; pairs.len()];
        Ok(Self::assemble(height, width, pairs, coupling))
    }

    /// Replaces the per-pair couplings. Pair order is that of [`Lattice::pairs`].
    pub fn with_couplings(mut self, coupling: Vec<T>) -> Result<Self> {
        if coupling.len() != self.pairs.len() {
            return Err(Error::DimensionMismatch {
                what: "coupling vector",
                expected: self.pairs.len(),
                got: coupling.len(),
            });
        }
        if coupling.iter().any(|&u| !(u >= T::zero()) || !u.is_finite()) {
            return Err(Error::InvalidParameter(
                "couplings must be finite and nonnegative".into(),
            ));
        }
        self.coupling = coupling;
        Ok(self)
    }

    fn assemble(height: usize, width: usize, pairs: Vec<(usize, usize)>, coupling: Vec<T>) -> Self {
        let mut adjacency = vec![Vec::with_capacity(4); height * width];
        for (e, &(j, k)) in pairs.iter().enumerate() {
            adjacency[j].push((k, e));
            adjacency[k].push((j, e));
        }
        Self {
            height,
            width,
            pairs,
            coupling,
            adjacency,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn couplings(&self) -> &[T] {
        &self.coupling
    }

    pub fn coupling(&self, pair: usize) -> T {
        self.coupling[pair]
    }

    /// Neighbours of `j` with the index of the connecting pair.
    pub fn neighbors(&self, j: usize) -> &[(usize, usize)] {
        &self.adjacency[j]
    }

    /// 1-based grid position `(row, column)` of pixel `j`.
    pub fn coords(&self, j: usize) -> (usize, usize) {
        (j / self.width + 1, j % self.width + 1)
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        (row - 1) * self.width + (col - 1)
    }
}

/// Relabels by order of first appearance, starting at 0.
pub fn canonicalize_labels(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<(usize, usize)> = Vec::new();
    labels
        .iter()
        .map(|&l| match map.iter().find(|(raw, _)| *raw == l) {
            Some(&(_, c)) => c,
            None => {
                let c = map.len();
                map.push((l, c));
                c
            }
        })
        .collect()
}

/// A partition of the pixels with canonical labels `0..M`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PartitionState {
    labels: Vec<usize>,
    sizes: Vec<usize>,
}

impl PartitionState {
    /// Builds a partition from arbitrary integer labels; the stored labels
    /// are canonical regardless of the input labelling.
    pub fn from_labels(labels: &[usize]) -> Self {
        let labels = canonicalize_labels(labels);
        let m = labels.iter().copied().max().map_or(0, |x| x + 1);
        let mut sizes = vec![0; m];
        for &l in &labels {
            sizes[l] += 1;
        }
        Self { labels, sizes }
    }

    pub fn one_cluster(p: usize) -> Self {
        Self::from_labels(&vec![0; p])
    }

    pub fn singletons(p: usize) -> Self {
        Self::from_labels(&(0..p).collect::<Vec<_>>())
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, j: usize) -> usize {
        self.labels[j]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of occupied clusters M.
    pub fn num_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn members(&self, m: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&j| self.labels[j] == m).collect()
    }

    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.sizes.len()];
        for (j, &l) in self.labels.iter().enumerate() {
            out[l].push(j);
        }
        out
    }

    /// Labels as written to partition traces: 1-based, comma separated.
    pub fn to_csv_line(&self) -> String {
        let mut s = String::with_capacity(self.labels.len() * 3);
        for (i, l) in self.labels.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push_str(&(l + 1).to_string());
        }
        s
    }

    pub fn parse_csv_line(line: &str) -> Result<Self, String> {
        let labels = line
            .trim()
            .split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|e| format!("bad label {t:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_labels(&labels))
    }
}

/// Sum of couplings over neighbour pairs sharing a label.
pub fn potts_energy<T: Real>(lattice: &Lattice<T>, labels: &[usize]) -> T {
    lattice
        .pairs()
        .iter()
        .zip(lattice.couplings())
        .filter(|(&(j, k), _)| labels[j] == labels[k])
        .map(|(_, &u)| u)
        .sum()
}

/// Binary bond variables, one per neighbour pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BondSet {
    bonds: Vec<bool>,
}

impl BondSet {
    pub fn new(bonds: Vec<bool>) -> Self {
        Self { bonds }
    }

    pub fn none(num_pairs: usize) -> Self {
        Self::new(vec![false; num_pairs])
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bonds
    }

    pub fn len(&self) -> usize {
        self.bonds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bonds.is_empty()
    }

    pub fn count(&self) -> usize {
        self.bonds.iter().filter(|&&b| b).count()
    }

    /// True if no bond joins pixels with different labels.
    pub fn respects<T>(&self, lattice: &Lattice<T>, labels: &[usize]) -> bool {
        lattice
            .pairs
            .iter()
            .zip(&self.bonds)
            .all(|(&(j, k), &b)| !b || labels[j] == labels[k])
    }
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Connected components of the bond graph, the nested clusters `A_o`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NestedClustering {
    labels: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl NestedClustering {
    /// Extracts components; nested clusters are numbered by their smallest pixel.
    pub fn from_bonds<T>(lattice: &Lattice<T>, bonds: &BondSet) -> Result<Self> {
        if bonds.len() != lattice.pairs.len() {
            return Err(Error::DimensionMismatch {
                what: "bond vector",
                expected: lattice.pairs.len(),
                got: bonds.len(),
            });
        }
        let p = lattice.height * lattice.width;
        let mut uf = UnionFind::new(p);
        for (&(j, k), &b) in lattice.pairs.iter().zip(&bonds.bonds) {
            if b {
                uf.union(j, k);
            }
        }
        let mut root_label = vec![usize::MAX; p];
        let mut labels = vec![0; p];
        let mut members: Vec<Vec<usize>> = Vec::new();
        for j in 0..p {
            let r = uf.find(j);
            if root_label[r] == usize::MAX {
                root_label[r] = members.len();
                members.push(Vec::new());
            }
            labels[j] = root_label[r];
            members[root_label[r]].push(j);
        }
        Ok(Self { labels, members })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Number of nested clusters O.
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self, o: usize) -> &[usize] {
        &self.members[o]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.members.iter().map(Vec::as_slice)
    }
}

/// Free-function form of [`NestedClustering::from_bonds`].
pub fn nested_clusters<T>(lattice: &Lattice<T>, bonds: &BondSet) -> Result<NestedClustering> {
    NestedClustering::from_bonds(lattice, bonds)
}
