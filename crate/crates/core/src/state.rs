//! Mutable model state: ordering, allocations, degree corrections and the
//! block count matrices `E` (edges) and `M` (degree-weighted dyads).
//!
//! `E[i][j]` sums edge multiplicities from group `i` to group `j`. `M[i][j]`
//! sums `xi_p * xi_q` over every ordered pair of nodes with `p` placed before
//! `q` in the ordering, `p` in group `i` and `q` in group `j`. All updates are
//! incremental and are checked against [`block_counts`] in tests.

use thiserror::Error;

use crate::graph::{is_topological, Dag};

#[derive(Debug, Error, PartialEq)]
pub enum StateError {
    #[error("not a permutation of 0..{0}")]
    NotPermutation(usize),
    #[error("ordering is not topological for the graph")]
    NotTopological,
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("degree correction {value} at node {node} is not strictly positive")]
    NonPositiveXi { node: usize, value: f64 },
    #[error("label {label} out of range (at most {max})")]
    LabelOutOfRange { label: usize, max: usize },
    #[error("node {0} is not detached")]
    NotDetached(usize),
}

/// A permutation `sigma` (node at each position) together with its inverse
/// `phi` (position of each node).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderingState {
    sigma: Vec<usize>,
    phi: Vec<usize>,
}

impl OrderingState {
    pub fn identity(n: usize) -> Self {
        Self { sigma: (0..n).collect(), phi: (0..n).collect() }
    }

    pub fn from_sigma(sigma: Vec<usize>) -> Result<Self, StateError> {
        let n = sigma.len();
        let mut phi = vec![usize::MAX; n];
        for (r, &p) in sigma.iter().enumerate() {
            if p >= n || phi[p] != usize::MAX {
                return Err(StateError::NotPermutation(n));
            }
            phi[p] = r;
        }
        Ok(Self { sigma, phi })
    }

    pub(crate) fn from_sigma_unchecked(sigma: Vec<usize>) -> Self {
        let mut phi = vec![0; sigma.len()];
        for (r, &p) in sigma.iter().enumerate() {
            phi[p] = r;
        }
        Self { sigma, phi }
    }

    pub fn from_phi(phi: Vec<usize>) -> Result<Self, StateError> {
        let inv = Self::from_sigma(phi)?;
        Ok(Self { sigma: inv.phi, phi: inv.sigma })
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn sigma(&self) -> &[usize] {
        &self.sigma
    }

    pub fn phi(&self) -> &[usize] {
        &self.phi
    }

    /// Removes `node` from its position and reinserts it at `to`, shifting the
    /// nodes in between by one place.
    pub fn move_node(&mut self, node: usize, to: usize) {
        let from = self.phi[node];
        if from < to {
            self.sigma.copy_within(from + 1..=to, from);
        } else if to < from {
            self.sigma.copy_within(to..from, to + 1);
        }
        self.sigma[to] = node;
        let (lo, hi) = (from.min(to), from.max(to));
        for r in lo..=hi {
            self.phi[self.sigma[r]] = r;
        }
    }
}

/// Label bookkeeping after a group empties: `moved_from` (the former last
/// label) now lives at `removed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Relabel {
    pub removed: usize,
    pub moved_from: usize,
}

const DETACHED: usize = usize::MAX;

/// Allocation vector with compact labels `0..k` and group sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationState {
    z: Vec<usize>,
    sizes: Vec<usize>,
}

impl AllocationState {
    /// Compacts arbitrary labels into `0..k` by order of first appearance.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let mut sizes = Vec::new();
        let z = labels
            .iter()
            .map(|&l| {
                let next = map.len();
                let c = *map.entry(l).or_insert(next);
                if c == sizes.len() {
                    sizes.push(0);
                }
                sizes[c] += 1;
                c
            })
            .collect();
        Self { z, sizes }
    }

    pub fn single_group(n: usize) -> Self {
        Self { z: vec![0; n], sizes: vec![n] }
    }

    pub fn labels(&self) -> &[usize] {
        &self.z
    }

    pub fn label(&self, node: usize) -> usize {
        self.z[node]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_groups(&self) -> usize {
        self.sizes.len()
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn is_detached(&self, node: usize) -> bool {
        self.z[node] == DETACHED
    }

    /// Takes `node` out of its group. Empty groups are swap-removed.
    fn remove(&mut self, node: usize) -> Option<Relabel> {
        let k = self.z[node];
        self.z[node] = DETACHED;
        self.sizes[k] -= 1;
        if self.sizes[k] > 0 {
            return None;
        }
        let last = self.sizes.len() - 1;
        self.sizes.swap_remove(k);
        if k != last {
            for l in self.z.iter_mut().filter(|l| **l == last) {
                *l = k;
            }
        }
        Some(Relabel { removed: k, moved_from: last })
    }

    fn insert(&mut self, node: usize, label: usize) {
        if label == self.sizes.len() {
            self.sizes.push(0);
        }
        self.sizes[label] += 1;
        self.z[node] = label;
    }
}

/// Per-node positive degree corrections.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeCorrections(Vec<f64>);

impl DegreeCorrections {
    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn new(xi: Vec<f64>) -> Result<Self, StateError> {
        if let Some((node, &value)) = xi.iter().enumerate().find(|(_, &x)| !(x > 0.0 && x.is_finite())) {
            return Err(StateError::NonPositiveXi { node, value });
        }
        Ok(Self(xi))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, node: usize) -> f64 {
        self.0[node]
    }
}

/// Dense `K x K` matrices `E` and `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCounts {
    e: Vec<Vec<u64>>,
    m: Vec<Vec<f64>>,
}

impl BlockCounts {
    pub fn zeros(k: usize) -> Self {
        Self { e: vec![vec![0; k]; k], m: vec![vec![0.0; k]; k] }
    }

    pub fn num_groups(&self) -> usize {
        self.e.len()
    }

    pub fn e(&self, i: usize, j: usize) -> u64 {
        self.e[i][j]
    }

    pub fn m(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    pub fn e_matrix(&self) -> &[Vec<u64>] {
        &self.e
    }

    pub fn m_matrix(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn total_e(&self) -> u64 {
        self.e.iter().flatten().sum()
    }

    pub fn total_m(&self) -> f64 {
        self.m.iter().flatten().sum()
    }

    /// Iterator over `(E_ij, M_ij)` for every cell.
    pub fn cells(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.e.iter().zip(&self.m).flat_map(|(er, mr)| er.iter().copied().zip(mr.iter().copied()))
    }

    /// True when `E` matches exactly and `M` within `tol`.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.e == other.e
            && self.m.len() == other.m.len()
            && self.m.iter().flatten().zip(other.m.iter().flatten()).all(|(a, b)| (a - b).abs() <= tol)
    }

    fn push_label(&mut self) {
        for row in &mut self.e {
            row.push(0);
        }
        for row in &mut self.m {
            row.push(0.0);
        }
        let k = self.e.len() + 1;
        self.e.push(vec![0; k]);
        self.m.push(vec![0.0; k]);
    }

    fn swap_remove_label(&mut self, k: usize) {
        self.e.swap_remove(k);
        self.m.swap_remove(k);
        for row in &mut self.e {
            row.swap_remove(k);
        }
        for row in &mut self.m {
            row.swap_remove(k);
        }
    }

    fn add_profile(&mut self, label: usize, p: &NodeProfile) {
        let k = label;
        for j in 0..self.e.len() {
            self.e[k][j] += p.out_e[j];
            self.m[k][j] += p.xi * p.after[j];
        }
        for i in 0..self.e.len() {
            self.e[i][k] += p.in_e[i];
            self.m[i][k] += p.xi * p.before[i];
        }
    }

    fn sub_profile(&mut self, label: usize, p: &NodeProfile) {
        let k = label;
        for j in 0..self.e.len() {
            self.e[k][j] -= p.out_e[j];
            self.m[k][j] -= p.xi * p.after[j];
        }
        for i in 0..self.e.len() {
            self.e[i][k] -= p.in_e[i];
            self.m[i][k] -= p.xi * p.before[i];
        }
    }

    /// Folds group `drop` into group `keep` and swap-removes `drop`.
    pub(crate) fn merge_labels(&mut self, keep: usize, drop: usize) {
        let k = self.e.len();
        let diag_e = self.e[keep][drop] + self.e[drop][keep] + self.e[drop][drop];
        let diag_m = self.m[keep][drop] + self.m[drop][keep] + self.m[drop][drop];
        for j in 0..k {
            if j != keep && j != drop {
                self.e[keep][j] += self.e[drop][j];
                self.m[keep][j] += self.m[drop][j];
                self.e[j][keep] += self.e[j][drop];
                self.m[j][keep] += self.m[j][drop];
            }
        }
        self.e[keep][keep] += diag_e;
        self.m[keep][keep] += diag_m;
        self.swap_remove_label(drop);
    }
}

/// A node's dyads summarised by the group of the other endpoint.
///
/// `before[i]` / `after[i]` sum `xi_q` over nodes `q` of group `i` placed
/// before / after the node; `in_e` / `out_e` sum edge multiplicities from /
/// to group `i`. The node's own factor `xi` multiplies the `M` contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeProfile {
    pub xi: f64,
    pub before: Vec<f64>,
    pub after: Vec<f64>,
    pub in_e: Vec<u64>,
    pub out_e: Vec<u64>,
}

impl NodeProfile {
    fn zeros(xi: f64, k: usize) -> Self {
        Self { xi, before: vec![0.0; k], after: vec![0.0; k], in_e: vec![0; k], out_e: vec![0; k] }
    }

    pub fn num_groups(&self) -> usize {
        self.before.len()
    }

    fn push_label(&mut self) {
        self.before.push(0.0);
        self.after.push(0.0);
        self.in_e.push(0);
        self.out_e.push(0);
    }

    fn swap_remove(&mut self, k: usize) {
        self.before.swap_remove(k);
        self.after.swap_remove(k);
        self.in_e.swap_remove(k);
        self.out_e.swap_remove(k);
    }
}

/// From-scratch `E` and `M` for a topological ordering.
pub fn block_counts(
    dag: &Dag,
    ordering: &OrderingState,
    alloc: &AllocationState,
    xi: &DegreeCorrections,
) -> Result<BlockCounts, StateError> {
    let n = dag.n();
    for (expected, found) in [(n, ordering.len()), (n, alloc.len()), (n, xi.0.len())] {
        if expected != found {
            return Err(StateError::LengthMismatch { expected, found });
        }
    }
    if !is_topological(dag, ordering) {
        return Err(StateError::NotTopological);
    }
    Ok(counts_unchecked(dag, ordering, alloc, xi))
}

pub(crate) fn counts_unchecked(
    dag: &Dag,
    ordering: &OrderingState,
    alloc: &AllocationState,
    xi: &DegreeCorrections,
) -> BlockCounts {
    let k = alloc.num_groups();
    let mut counts = BlockCounts::zeros(k);
    for (&(p, q), &c) in dag.edges().iter().zip(dag.counts()) {
        counts.e[alloc.z[p]][alloc.z[q]] += c as u64;
    }
    // running per-group xi sums over earlier positions
    let mut before = vec![0.0; k];
    for &q in ordering.sigma() {
        let (j, x) = (alloc.z[q], xi.0[q]);
        for i in 0..k {
            counts.m[i][j] += before[i] * x;
        }
        before[j] += x;
    }
    counts
}

/// Ordering, allocation, degree corrections and the counts they imply.
#[derive(Debug, Clone, PartialEq)]
pub struct SbmState {
    ordering: OrderingState,
    alloc: AllocationState,
    xi: DegreeCorrections,
    counts: BlockCounts,
}

impl SbmState {
    pub fn new(
        dag: &Dag,
        ordering: OrderingState,
        alloc: AllocationState,
        xi: DegreeCorrections,
    ) -> Result<Self, StateError> {
        let counts = block_counts(dag, &ordering, &alloc, &xi)?;
        Ok(Self { ordering, alloc, xi, counts })
    }

    pub fn ordering(&self) -> &OrderingState {
        &self.ordering
    }

    pub fn alloc(&self) -> &AllocationState {
        &self.alloc
    }

    pub fn xi(&self) -> &DegreeCorrections {
        &self.xi
    }

    pub fn counts(&self) -> &BlockCounts {
        &self.counts
    }

    pub fn num_groups(&self) -> usize {
        self.alloc.num_groups()
    }

    pub fn n(&self) -> usize {
        self.alloc.len()
    }

    /// Profile of `node` against every other attached node; O(n).
    pub fn profile(&self, dag: &Dag, node: usize) -> NodeProfile {
        let k = self.alloc.num_groups();
        let mut prof = NodeProfile::zeros(self.xi.0[node], k);
        let w = self.ordering.phi[node];
        for (r, &q) in self.ordering.sigma.iter().enumerate() {
            let j = self.alloc.z[q];
            if q == node || j == DETACHED {
                continue;
            }
            if r < w {
                prof.before[j] += self.xi.0[q];
            } else {
                prof.after[j] += self.xi.0[q];
            }
        }
        self.fill_edges(dag, node, &mut prof);
        prof
    }

    /// Profile built from per-group running sums: `before` covers earlier
    /// positions and `totals` all attached nodes other than `node`.
    pub fn profile_from_sums(&self, dag: &Dag, node: usize, before: &[f64], totals: &[f64]) -> NodeProfile {
        let k = self.alloc.num_groups();
        let mut prof = NodeProfile::zeros(self.xi.0[node], k);
        for j in 0..k {
            prof.before[j] = before[j];
            prof.after[j] = totals[j] - before[j];
        }
        self.fill_edges(dag, node, &mut prof);
        prof
    }

    fn fill_edges(&self, dag: &Dag, node: usize, prof: &mut NodeProfile) {
        for &(q, c) in dag.out_neighbors(node) {
            let j = self.alloc.z[q];
            if j != DETACHED {
                prof.out_e[j] += c as u64;
            }
        }
        for &(p, c) in dag.in_neighbors(node) {
            let i = self.alloc.z[p];
            if i != DETACHED {
                prof.in_e[i] += c as u64;
            }
        }
    }

    /// Removes the node at position `pos` from the counts and from its group.
    ///
    /// Returns the node, its profile (already compacted if a group vanished)
    /// and the relabelling, if any.
    pub fn detach_node(&mut self, dag: &Dag, pos: usize) -> (usize, NodeProfile, Option<Relabel>) {
        let node = self.ordering.sigma[pos];
        let mut prof = self.profile(dag, node);
        let relabel = self.detach_with(node, &mut prof);
        (node, prof, relabel)
    }

    /// Removes `node` using a precomputed profile.
    pub fn detach_with(&mut self, node: usize, prof: &mut NodeProfile) -> Option<Relabel> {
        let k = self.alloc.z[node];
        self.counts.sub_profile(k, prof);
        let relabel = self.alloc.remove(node);
        if let Some(r) = relabel {
            self.counts.swap_remove_label(r.removed);
            prof.swap_remove(r.removed);
        }
        relabel
    }

    /// Puts the node at position `pos` into group `label`; `label` equal to
    /// the current group count opens a new group.
    pub fn attach_node(&mut self, pos: usize, label: usize, prof: &mut NodeProfile) -> Result<(), StateError> {
        let node = self.ordering.sigma[pos];
        self.attach_with(node, label, prof)
    }

    pub fn attach_with(&mut self, node: usize, label: usize, prof: &mut NodeProfile) -> Result<(), StateError> {
        if !self.alloc.is_detached(node) {
            return Err(StateError::NotDetached(node));
        }
        let k = self.alloc.num_groups();
        if label > k {
            return Err(StateError::LabelOutOfRange { label, max: k });
        }
        if label == k {
            self.counts.push_label();
            prof.push_label();
        }
        self.alloc.insert(node, label);
        self.counts.add_profile(label, prof);
        Ok(())
    }

    /// Moves `node` between groups (`label` may open a new group). Returns
    /// the relabelling caused by emptying the old group.
    pub fn reassign(&mut self, dag: &Dag, node: usize, label: usize) -> Result<Option<Relabel>, StateError> {
        let k = self.alloc.num_groups();
        if label > k {
            return Err(StateError::LabelOutOfRange { label, max: k });
        }
        if self.alloc.z[node] == label {
            return Ok(None);
        }
        let mut prof = self.profile(dag, node);
        let relabel = self.detach_with(node, &mut prof);
        let target = match relabel {
            Some(r) if label == r.moved_from => r.removed,
            Some(_) if label == k => k - 1,
            _ => label,
        };
        self.attach_with(node, target, &mut prof)?;
        Ok(relabel)
    }

    /// Merges group `drop` into `keep`; O(n + K).
    pub fn merge_groups(&mut self, keep: usize, drop: usize) -> Relabel {
        assert_ne!(keep, drop);
        let last = self.alloc.sizes.len() - 1;
        for l in self.alloc.z.iter_mut() {
            if *l == drop {
                *l = keep;
            }
        }
        self.alloc.sizes[keep] += self.alloc.sizes[drop];
        self.alloc.sizes[drop] = 0;
        self.counts.merge_labels(keep, drop);
        self.alloc.sizes.swap_remove(drop);
        if drop != last {
            for l in self.alloc.z.iter_mut().filter(|l| **l == last) {
                *l = drop;
            }
        }
        Relabel { removed: drop, moved_from: last }
    }

    /// Per-group xi sums of the passed-over nodes if `node` moved to `to`,
    /// or `None` when the move would break topological order.
    ///
    /// Moving later, the node jumps over positions `phi+1..=to`; moving
    /// earlier, over `to..phi`.
    pub fn move_profile(&self, dag: &Dag, node: usize, to: usize) -> Option<Vec<f64>> {
        let from = self.ordering.phi[node];
        let phi = &self.ordering.phi;
        let (lo, hi) = if to > from { (from + 1, to) } else { (to, from - 1) };
        let blocked = if to > from {
            dag.out_neighbors(node).iter().any(|&(q, _)| phi[q] <= hi)
        } else {
            dag.in_neighbors(node).iter().any(|&(p, _)| phi[p] >= lo)
        };
        if blocked {
            return None;
        }
        let mut sums = vec![0.0; self.alloc.num_groups()];
        for &q in &self.ordering.sigma[lo..=hi] {
            sums[self.alloc.z[q]] += self.xi.0[q];
        }
        Some(sums)
    }

    /// Applies a move checked by [`SbmState::move_profile`].
    pub fn apply_move(&mut self, node: usize, to: usize, passed: &[f64]) {
        let from = self.ordering.phi[node];
        let (k, x) = (self.alloc.z[node], self.xi.0[node]);
        let sign = if to > from { 1.0 } else { -1.0 };
        for (j, &s) in passed.iter().enumerate() {
            // later: dyads (node, q) become (q, node)
            self.counts.m[k][j] -= sign * x * s;
            self.counts.m[j][k] += sign * x * s;
        }
        self.ordering.move_node(node, to);
    }

    /// Replaces `xi[node]`, adjusting `M` through the node's profile.
    pub fn set_xi(&mut self, node: usize, value: f64, prof: &NodeProfile) {
        let k = self.alloc.z[node];
        let delta = value - self.xi.0[node];
        for j in 0..self.counts.num_groups() {
            self.counts.m[k][j] += delta * prof.after[j];
            self.counts.m[j][k] += delta * prof.before[j];
        }
        self.xi.0[node] = value;
    }

    pub fn recompute(&self, dag: &Dag) -> BlockCounts {
        counts_unchecked(dag, &self.ordering, &self.alloc, &self.xi)
    }

    /// Rebuilds the counts from scratch to discard accumulated rounding.
    pub fn refresh(&mut self, dag: &Dag) {
        self.counts = self.recompute(dag);
    }

    pub fn is_consistent(&self, dag: &Dag, tol: f64) -> bool {
        self.counts.approx_eq(&self.recompute(dag), tol)
    }

    pub fn into_parts(self) -> (OrderingState, AllocationState, DegreeCorrections) {
        (self.ordering, self.alloc, self.xi)
    }
}
