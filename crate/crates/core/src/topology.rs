//! Communication graph, augmented-state layout and the linear maps derived from them.
//!
//! Players are indexed from 0. A directed edge `(i, j)` means player `i`'s
//! decision enters player `j`'s payoff, so `i` is an in-neighbor of `j` and `j`
//! keeps a local estimate of `i`'s decision.

use std::collections::BTreeSet;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("a network needs at least one player")]
    Empty,
    #[error("player {0} has an edge to itself")]
    SelfLoop(usize),
    #[error("the undirected graph is disconnected; components: {0:?}")]
    Disconnected(Vec<Vec<usize>>),
    #[error("player {0} has a zero decision dimension")]
    BadDimension(usize),
    #[error("edge ({0}, {1}) refers to a player outside 0..{2}")]
    EdgeOutOfRange(usize, usize, usize),
    #[error("{got} decision dimensions given for {expected} players")]
    DimsLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TopologySpec", into = "TopologySpec")]
pub struct NetworkTopology {
    dims: Vec<usize>,
    edges: Vec<(usize, usize)>,
    in_nbrs: Vec<Vec<usize>>,
    out_nbrs: Vec<Vec<usize>>,
}

/// Wire form of a topology.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub players: usize,
    pub dims: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
}

impl TryFrom<TopologySpec> for NetworkTopology {
    type Error = TopologyError;
    fn try_from(s: TopologySpec) -> Result<Self, Self::Error> {
        NetworkTopology::new(s.players, s.dims, &s.edges)
    }
}

impl From<NetworkTopology> for TopologySpec {
    fn from(t: NetworkTopology) -> Self {
        TopologySpec {
            players: t.player_count(),
            dims: t.dims.clone(),
            edges: t.edges.clone(),
        }
    }
}

impl NetworkTopology {
    /// Validates and builds a topology. Duplicate edges are merged.
    pub fn new(
        player_count: usize,
        decision_dims: Vec<usize>,
        edges: &[(usize, usize)],
    ) -> Result<Self, TopologyError> {
        if player_count == 0 {
            return Err(TopologyError::Empty);
        }
        if decision_dims.len() != player_count {
            return Err(TopologyError::DimsLength {
                expected: player_count,
                got: decision_dims.len(),
            });
        }
        if let Some(i) = decision_dims.iter().position(|&d| d == 0) {
            return Err(TopologyError::BadDimension(i));
        }
        let mut set = BTreeSet::new();
        for &(i, j) in edges {
            if i >= player_count || j >= player_count {
                return Err(TopologyError::EdgeOutOfRange(i, j, player_count));
            }
            if i == j {
                return Err(TopologyError::SelfLoop(i));
            }
            set.insert((i, j));
        }
        let edges: Vec<(usize, usize)> = set.into_iter().collect();
        let mut in_nbrs = vec![Vec::new(); player_count];
        let mut out_nbrs = vec![Vec::new(); player_count];
        for &(i, j) in &edges {
            out_nbrs[i].push(j);
            in_nbrs[j].push(i);
        }
        for v in in_nbrs.iter_mut().chain(out_nbrs.iter_mut()) {
            v.sort_unstable();
        }

        let components = undirected_components(player_count, &edges);
        if components.len() > 1 {
            return Err(TopologyError::Disconnected(components));
        }
        Ok(NetworkTopology {
            dims: decision_dims,
            edges,
            in_nbrs,
            out_nbrs,
        })
    }

    pub fn player_count(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self, i: usize) -> usize {
        self.dims[i]
    }

    /// Directed edges, sorted lexicographically.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.in_nbrs[i]
    }

    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out_nbrs[i]
    }

    pub fn in_degree(&self, i: usize) -> usize {
        self.in_nbrs[i].len()
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.out_nbrs[i].len()
    }

    pub fn max_out_degree(&self) -> usize {
        self.out_nbrs.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn min_out_degree(&self) -> usize {
        self.out_nbrs.iter().map(Vec::len).min().unwrap_or(0)
    }

    /// Total own-decision dimension `n`.
    pub fn total_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    /// Stacked dimension of player `i`'s in-neighbors.
    pub fn in_dim(&self, i: usize) -> usize {
        self.in_nbrs[i].iter().map(|&j| self.dims[j]).sum()
    }

    /// Length of the augmented vector.
    pub fn augmented_dim(&self) -> usize {
        (0..self.player_count())
            .map(|i| self.dims[i] + self.in_dim(i))
            .sum()
    }

    /// Undirected circle over `n` players plus `chords` extra random undirected edges.
    /// Every undirected edge is inserted in both directions.
    pub fn circle_with_chords<R: Rng + ?Sized>(
        dims: Vec<usize>,
        chords: usize,
        rng: &mut R,
    ) -> Result<Self, TopologyError> {
        let n = dims.len();
        let mut und = BTreeSet::new();
        if n >= 2 {
            for i in 0..n {
                let j = (i + 1) % n;
                if i != j {
                    und.insert((i.min(j), i.max(j)));
                }
            }
        }
        let mut candidates: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|e| !und.contains(e))
            .collect();
        candidates.shuffle(rng);
        for e in candidates.into_iter().take(chords) {
            und.insert(e);
        }
        let edges: Vec<(usize, usize)> = und.iter().flat_map(|&(i, j)| [(i, j), (j, i)]).collect();
        Self::new(n, dims, &edges)
    }

    /// Random connected graph: a random spanning tree plus `extra` random edges.
    /// Each undirected edge is kept in one random direction with probability
    /// `one_way`, otherwise in both.
    pub fn random_connected<R: Rng + ?Sized>(
        dims: Vec<usize>,
        extra: usize,
        one_way: f64,
        rng: &mut R,
    ) -> Result<Self, TopologyError> {
        let n = dims.len();
        let mut und = BTreeSet::new();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        for k in 1..n {
            let parent = order[rng.random_range(0..k)];
            let child = order[k];
            und.insert((parent.min(child), parent.max(child)));
        }
        let mut candidates: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|e| !und.contains(e))
            .collect();
        candidates.shuffle(rng);
        for e in candidates.into_iter().take(extra) {
            und.insert(e);
        }
        let mut edges = Vec::new();
        for (i, j) in und {
            if rng.random::<f64>() < one_way {
                if rng.random::<bool>() {
                    edges.push((i, j));
                } else {
                    edges.push((j, i));
                }
            } else {
                edges.push((i, j));
                edges.push((j, i));
            }
        }
        Self::new(n, dims, &edges)
    }
}

fn undirected_components(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(i, j) in edges {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for v in 0..n {
        let r = find(&mut parent, v);
        groups.entry(r).or_default().push(v);
    }
    groups.into_values().collect()
}

/// Index layout of the augmented vector `y = [y_0; …; y_{N-1}]` with
/// `y_i = [own decision; estimates of in-neighbors in ascending order]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedLayout {
    own: Vec<usize>,
    // est[i][k] is the offset of player i's estimate of its k-th in-neighbor.
    est: Vec<Vec<usize>>,
    block: Vec<Range<usize>>,
    len: usize,
}

impl AugmentedLayout {
    pub fn new(topo: &NetworkTopology) -> Self {
        let n = topo.player_count();
        let mut own = Vec::with_capacity(n);
        let mut est = Vec::with_capacity(n);
        let mut block = Vec::with_capacity(n);
        let mut off = 0;
        for i in 0..n {
            let start = off;
            own.push(off);
            off += topo.dim(i);
            let mut e = Vec::with_capacity(topo.in_degree(i));
            for &j in topo.in_neighbors(i) {
                e.push(off);
                off += topo.dim(j);
            }
            est.push(e);
            block.push(start..off);
        }
        AugmentedLayout {
            own,
            est,
            block,
            len: off,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Range of player `i`'s whole block `y_i`.
    pub fn block(&self, i: usize) -> Range<usize> {
        self.block[i].clone()
    }

    /// Range of `y_i^i`.
    pub fn own(&self, topo: &NetworkTopology, i: usize) -> Range<usize> {
        self.own[i]..self.own[i] + topo.dim(i)
    }

    /// Range of `y_i^j`, player `i`'s estimate of in-neighbor `j`.
    pub fn estimate(&self, topo: &NetworkTopology, i: usize, j: usize) -> Option<Range<usize>> {
        let k = topo.in_neighbors(i).binary_search(&j).ok()?;
        let s = self.est[i][k];
        Some(s..s + topo.dim(j))
    }

    /// Range of the estimate of the `k`-th in-neighbor of `i`.
    pub fn estimate_at(&self, topo: &NetworkTopology, i: usize, k: usize) -> Range<usize> {
        let j = topo.in_neighbors(i)[k];
        let s = self.est[i][k];
        s..s + topo.dim(j)
    }

    /// Scatter own decisions into a consensual augmented vector: every estimate
    /// slot receives the owner's value.
    pub fn consensual(&self, topo: &NetworkTopology, x: &DVector<f64>) -> DVector<f64> {
        let offs = own_offsets(topo);
        let mut y = DVector::zeros(self.len);
        for i in 0..topo.player_count() {
            let r = self.own(topo, i);
            y.rows_mut(r.start, r.len())
                .copy_from(&x.rows(offs[i], topo.dim(i)));
            for (k, &j) in topo.in_neighbors(i).iter().enumerate() {
                let r = self.estimate_at(topo, i, k);
                y.rows_mut(r.start, r.len())
                    .copy_from(&x.rows(offs[j], topo.dim(j)));
            }
        }
        y
    }

    /// `ℛy`: the stack of own decisions.
    pub fn own_decisions(&self, topo: &NetworkTopology, y: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(topo.total_dim());
        let mut off = 0;
        for i in 0..topo.player_count() {
            let r = self.own(topo, i);
            x.rows_mut(off, r.len()).copy_from(&y.rows(r.start, r.len()));
            off += r.len();
        }
        x
    }

    /// Largest own-vs-estimate disagreement over all dependency edges.
    pub fn consensus_gap(&self, topo: &NetworkTopology, y: &DVector<f64>) -> f64 {
        let mut gap: f64 = 0.0;
        for i in 0..topo.player_count() {
            for (k, &j) in topo.in_neighbors(i).iter().enumerate() {
                let re = self.estimate_at(topo, i, k);
                let ro = self.own(topo, j);
                for t in 0..re.len() {
                    gap = gap.max((y[re.start + t] - y[ro.start + t]).abs());
                }
            }
        }
        gap
    }

    /// `L̃y` computed edge by edge.
    pub fn laplacian_apply(&self, topo: &NetworkTopology, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.len);
        for i in 0..topo.player_count() {
            for (k, &j) in topo.in_neighbors(i).iter().enumerate() {
                let re = self.estimate_at(topo, i, k);
                let ro = self.own(topo, j);
                for t in 0..re.len() {
                    let d = y[re.start + t] - y[ro.start + t];
                    out[re.start + t] += d;
                    out[ro.start + t] -= d;
                }
            }
        }
        out
    }
}

/// Offsets of each player's block in the plain stacked decision vector `x`.
pub fn own_offsets(topo: &NetworkTopology) -> Vec<usize> {
    let mut offs = Vec::with_capacity(topo.player_count());
    let mut o = 0;
    for &d in topo.dims() {
        offs.push(o);
        o += d;
    }
    offs
}

/// Coordinate-list sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Coo {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl Coo {
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.rows);
        for &(r, c, x) in &self.entries {
            out[r] += x * v[c];
        }
        out
    }
}

/// A dependency edge: player `head` keeps an estimate of `owner`'s decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DependencyEdge {
    pub owner: usize,
    pub head: usize,
}

/// Linear maps derived from a topology and its layout.
#[derive(Debug, Clone)]
pub struct StructuralMaps {
    pub layout: AugmentedLayout,
    pub laplacian: Coo,
    pub selection: DMatrix<f64>,
    pub consensus: DMatrix<f64>,
    pub sigma1: f64,
    pub dependency_edges: Vec<DependencyEdge>,
    /// Column offsets of each dependency edge in `dependency_incidence`.
    pub dependency_offsets: Vec<usize>,
    pub dependency_incidence: DMatrix<f64>,
}

impl StructuralMaps {
    pub fn new(topo: &NetworkTopology) -> Self {
        let layout = AugmentedLayout::new(topo);
        let laplacian = extended_laplacian(topo, &layout);
        let sigma1 = smallest_positive_eigenvalue(&laplacian.to_dense());
        let selection = selection_map(topo, &layout);
        let consensus = consensus_projector(topo, &layout);
        let (dependency_edges, dependency_offsets, dependency_incidence) =
            dependency_incidence(topo, &layout);
        StructuralMaps {
            layout,
            laplacian,
            selection,
            consensus,
            sigma1,
            dependency_edges,
            dependency_offsets,
            dependency_incidence,
        }
    }

    pub fn laplacian_dense(&self) -> DMatrix<f64> {
        self.laplacian.to_dense()
    }

    /// Number of rows of all dependency-edge multiplier blocks.
    pub fn dependency_dim(&self) -> usize {
        self.dependency_incidence.ncols()
    }
}

/// Extended Laplacian of the dependency graph, one star per owner.
pub fn extended_laplacian(topo: &NetworkTopology, layout: &AugmentedLayout) -> Coo {
    let mut entries = Vec::new();
    for i in 0..topo.player_count() {
        for (k, &j) in topo.in_neighbors(i).iter().enumerate() {
            let re = layout.estimate_at(topo, i, k);
            let ro = layout.own(topo, j);
            for t in 0..re.len() {
                let (a, b) = (re.start + t, ro.start + t);
                entries.push((a, a, 1.0));
                entries.push((b, b, 1.0));
                entries.push((a, b, -1.0));
                entries.push((b, a, -1.0));
            }
        }
    }
    Coo {
        rows: layout.len(),
        cols: layout.len(),
        entries,
    }
}

/// `ℛ`, the `n × ñ` selector of own decisions.
pub fn selection_map(topo: &NetworkTopology, layout: &AugmentedLayout) -> DMatrix<f64> {
    let mut r = DMatrix::zeros(topo.total_dim(), layout.len());
    let mut row = 0;
    for i in 0..topo.player_count() {
        for c in layout.own(topo, i) {
            r[(row, c)] = 1.0;
            row += 1;
        }
    }
    r
}

/// Orthogonal projector onto the consensus subspace: averages each owner's
/// decision together with all copies held by its out-neighbors.
pub fn consensus_projector(topo: &NetworkTopology, layout: &AugmentedLayout) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(layout.len(), layout.len());
    for j in 0..topo.player_count() {
        let own = layout.own(topo, j);
        let mut slots = vec![own.start];
        for &i in topo.out_neighbors(j) {
            slots.push(layout.estimate(topo, i, j).expect("layout mismatch").start);
        }
        let w = 1.0 / slots.len() as f64;
        for t in 0..topo.dim(j) {
            for &a in &slots {
                for &b in &slots {
                    c[(a + t, b + t)] = w;
                }
            }
        }
    }
    c
}

/// Dependency-graph incidence `B̃`: one column block per edge `(owner, head)` in
/// lexicographic order, `−1` at the owner's decision and `+1` at the copy.
pub fn dependency_incidence(
    topo: &NetworkTopology,
    layout: &AugmentedLayout,
) -> (Vec<DependencyEdge>, Vec<usize>, DMatrix<f64>) {
    let mut edges = Vec::new();
    for j in 0..topo.player_count() {
        for &i in topo.out_neighbors(j) {
            edges.push(DependencyEdge { owner: j, head: i });
        }
    }
    let mut offsets = Vec::with_capacity(edges.len());
    let mut cols = 0;
    for e in &edges {
        offsets.push(cols);
        cols += topo.dim(e.owner);
    }
    let mut b = DMatrix::zeros(layout.len(), cols);
    for (e, &off) in edges.iter().zip(&offsets) {
        let ro = layout.own(topo, e.owner);
        let re = layout.estimate(topo, e.head, e.owner).expect("layout mismatch");
        for t in 0..topo.dim(e.owner) {
            b[(ro.start + t, off + t)] = -1.0;
            b[(re.start + t, off + t)] = 1.0;
        }
    }
    (edges, offsets, b)
}

/// Communication-graph incidence `B ⊗ I_m`: one column block per directed edge
/// `(tail, head)` in the topology's order, `−1` at the tail and `+1` at the head.
pub fn multiplier_incidence(topo: &NetworkTopology, m: usize) -> DMatrix<f64> {
    let n = topo.player_count();
    let mut b = DMatrix::zeros(n * m, topo.edges().len() * m);
    for (e, &(tail, head)) in topo.edges().iter().enumerate() {
        for t in 0..m {
            b[(tail * m + t, e * m + t)] = -1.0;
            b[(head * m + t, e * m + t)] = 1.0;
        }
    }
    b
}

fn smallest_positive_eigenvalue(l: &DMatrix<f64>) -> f64 {
    let ev = linalg::sym_eigenvalues(l);
    let scale = ev.last().copied().unwrap_or(1.0).abs().max(1.0);
    ev.into_iter()
        .find(|&v| v > 1e-8 * scale)
        .unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_node_symmetric_graph() {
        let t = NetworkTopology::new(2, vec![1, 1], &[(0, 1), (1, 0)]).unwrap();
        assert_eq!(t.in_neighbors(1), &[0]);
        assert_eq!(t.out_neighbors(0), &[1]);
        assert_eq!(t.max_out_degree(), 1);
        assert_eq!(t.min_out_degree(), 1);
        assert_eq!(t.augmented_dim(), 4);
    }

    #[test]
    fn rejects_self_loop_and_disconnected() {
        assert_eq!(
            NetworkTopology::new(2, vec![1, 1], &[(0, 0)]),
            Err(TopologyError::SelfLoop(0))
        );
        assert!(NetworkTopology::new(3, vec![1, 1, 1], &[(0, 1), (1, 2)]).is_ok());
        assert_eq!(
            NetworkTopology::new(3, vec![1, 1, 1], &[(0, 1)]),
            Err(TopologyError::Disconnected(vec![vec![0, 1], vec![2]]))
        );
        assert_eq!(
            NetworkTopology::new(2, vec![1, 0], &[(0, 1)]),
            Err(TopologyError::BadDimension(1))
        );
    }

    #[test]
    fn single_edge_laplacian() {
        let t = NetworkTopology::new(2, vec![1, 1], &[(0, 1)]).unwrap();
        let maps = StructuralMaps::new(&t);
        // Layout: y_0^0, y_1^1, y_1^0.
        let l = maps.laplacian_dense();
        let expected = DMatrix::from_row_slice(3, 3, &[1., 0., -1., 0., 0., 0., -1., 0., 1.]);
        assert_eq!(l, expected);
        let ev = linalg::sym_eigenvalues(&l);
        assert!(ev[0].abs() < 1e-12 && ev[1].abs() < 1e-12 && (ev[2] - 2.0).abs() < 1e-12);
        assert!((maps.sigma1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn star_component_spectrum() {
        let t = NetworkTopology::new(4, vec![1; 4], &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let maps = StructuralMaps::new(&t);
        let ev = linalg::sym_eigenvalues(&maps.laplacian_dense());
        let nonzero: Vec<f64> = ev.iter().copied().filter(|v| v.abs() > 1e-9).collect();
        assert_eq!(nonzero.len(), 3);
        assert!((nonzero[0] - 1.0).abs() < 1e-10);
        assert!((nonzero[1] - 1.0).abs() < 1e-10);
        assert!((nonzero[2] - 4.0).abs() < 1e-10);
        assert!((maps.sigma1 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn selection_extracts_own_decisions() {
        let t = NetworkTopology::new(3, vec![1, 2, 1], &[(0, 1), (1, 2), (2, 0)]).unwrap();
        let maps = StructuralMaps::new(&t);
        let rrt = &maps.selection * maps.selection.transpose();
        assert_eq!(rrt, DMatrix::identity(4, 4));
        let mut y = DVector::from_element(maps.layout.len(), -7.0);
        for i in 0..3 {
            for c in maps.layout.own(&t, i) {
                y[c] = (i + 1) as f64;
            }
        }
        let x = &maps.selection * &y;
        assert_eq!(x.as_slice(), &[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(maps.layout.own_decisions(&t, &y), x);
    }

    #[test]
    fn consensus_projector_single_edge_average() {
        let t = NetworkTopology::new(2, vec![1, 1], &[(0, 1)]).unwrap();
        let maps = StructuralMaps::new(&t);
        let y = DVector::from_row_slice(&[0.0, 5.0, 2.0]);
        let p = &maps.consensus * &y;
        assert_eq!(p.as_slice(), &[1.0, 5.0, 1.0]);
    }

    #[test]
    fn incidence_kernel_and_laplacian_factorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = NetworkTopology::random_connected(vec![1, 2, 3, 1, 2], 3, 0.5, &mut rng).unwrap();
        let maps = StructuralMaps::new(&t);
        let bbt = &maps.dependency_incidence * maps.dependency_incidence.transpose();
        assert!((bbt - maps.laplacian_dense()).abs().max() < 1e-14);
        let bm = multiplier_incidence(&t, 2);
        let ones = DVector::from_fn(t.player_count() * 2, |r, _| if r % 2 == 0 { 1.5 } else { -0.25 });
        assert!((bm.transpose() * ones).abs().max() < 1e-15);
    }

    #[test]
    fn circle_with_chords_experiment_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = NetworkTopology::circle_with_chords(vec![1; 10], 10, &mut rng).unwrap();
        assert_eq!(t.edges().len(), 2 * 20);
        assert!((0..10).all(|i| t.out_degree(i) >= 2));
    }
}
