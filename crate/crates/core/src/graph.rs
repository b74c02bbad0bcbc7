//! Directed graph ingestion, cleaning and topological sorting.
//!
//! Nodes are dense `0..n` indices everywhere inside the crate. Text input maps
//! arbitrary identifiers onto those indices in order of first appearance and
//! keeps the identifiers so output files can be written back in user terms.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::state::OrderingState;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("line {line}: expected exactly two node identifiers, found {found}")]
    MalformedLine { line: usize, found: usize },
    #[error("line {line}: self-loop on node `{id}`")]
    SelfLoop { line: usize, id: String },
    #[error("edge list contains no edges")]
    Empty,
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    NodeOutOfRange(usize, usize, usize),
    #[error("self-loop on node {0}")]
    SelfLoopIndex(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("edge multiplicity must be at least 1 for edge ({0}, {1})")]
    ZeroCount(usize, usize),
    #[error(transparent)]
    Cyclic(#[from] CyclicError),
    #[error("ordering has length {found}, graph has {expected} nodes")]
    LengthMismatch { expected: usize, found: usize },
    #[error("graph has no nodes")]
    NoNodes,
}

/// Kahn's algorithm stalled; `nodes` are those never released.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("graph contains a directed cycle among {} nodes", nodes.len())]
pub struct CyclicError {
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeListFormat {
    /// Whitespace separated columns.
    TwoColumn,
    /// Comma separated columns.
    Csv,
}

/// A directed graph straight from input: may be cyclic or disconnected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDigraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    ids: Vec<String>,
}

impl RawDigraph {
    /// Builds a graph over `0..n`, dropping duplicate edges. Node identifiers
    /// default to the 1-based index.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, GraphError> {
        let ids = (1..=n).map(|i| i.to_string()).collect();
        Self::with_ids(ids, edges)
    }

    pub fn with_ids(
        ids: Vec<String>,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        let n = ids.len();
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (p, q) in edges {
            if p >= n || q >= n {
                return Err(GraphError::NodeOutOfRange(p, q, n));
            }
            if p == q {
                return Err(GraphError::SelfLoopIndex(p));
            }
            if seen.insert((p, q)) {
                out.push((p, q));
            }
        }
        out.sort_unstable();
        Ok(Self { n, edges: out, ids })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Writes the edge list back out using the original identifiers.
    pub fn to_edge_list(&self, format: EdgeListFormat) -> String {
        write_edges(&self.ids, self.edges.iter().copied(), format)
    }
}

/// Parses an edge list. Blank lines and `#` comments are skipped.
pub fn parse_edge_list(text: &str, format: EdgeListFormat) -> Result<RawDigraph, GraphError> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut ids: Vec<String> = Vec::new();
    let mut edges = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = match format {
            EdgeListFormat::TwoColumn => line.split_whitespace().collect(),
            EdgeListFormat::Csv => line.split(',').map(str::trim).collect(),
        };
        if tokens.len() != 2 || tokens.iter().any(|t| t.is_empty()) {
            return Err(GraphError::MalformedLine {
                line: lineno + 1,
                found: tokens.iter().filter(|t| !t.is_empty()).count(),
            });
        }
        if tokens[0] == tokens[1] {
            return Err(GraphError::SelfLoop {
                line: lineno + 1,
                id: tokens[0].to_string(),
            });
        }
        let mut lookup = |tok: &str| {
            *index.entry(tok.to_string()).or_insert_with(|| {
                ids.push(tok.to_string());
                ids.len() - 1
            })
        };
        let p = lookup(tokens[0]);
        let q = lookup(tokens[1]);
        edges.push((p, q));
    }
    if edges.is_empty() {
        return Err(GraphError::Empty);
    }
    RawDigraph::with_ids(ids, edges)
}

pub(crate) fn write_edges(
    ids: &[String],
    edges: impl Iterator<Item = (usize, usize)>,
    format: EdgeListFormat,
) -> String {
    let sep = match format {
        EdgeListFormat::TwoColumn => " ",
        EdgeListFormat::Csv => ",",
    };
    let mut s = String::new();
    for (p, q) in edges {
        let _ = writeln!(s, "{}{}{}", ids[p], sep, ids[q]);
    }
    s
}

/// Immutable directed acyclic graph.
///
/// Edges are kept sorted, with per-node out/in neighbour lists. Each edge
/// carries a multiplicity (1 for citation data) so that simulated Poisson
/// counts can be represented exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Dag {
    n: usize,
    edges: Vec<(usize, usize)>,
    counts: Vec<u32>,
    out_adj: Vec<Vec<(usize, u32)>>,
    in_adj: Vec<Vec<(usize, u32)>>,
    /// Sum of `ln(y!)` over all edges.
    log_count_factorials: f64,
}

impl Dag {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, GraphError> {
        Self::with_counts(n, edges.into_iter().map(|(p, q)| (p, q, 1)))
    }

    /// Builds a DAG from `(source, target, multiplicity)` triples.
    pub fn with_counts(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize, u32)>,
    ) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::NoNodes);
        }
        let mut list: Vec<(usize, usize, u32)> = edges.into_iter().collect();
        list.sort_unstable();
        for w in list.windows(2) {
            if (w[0].0, w[0].1) == (w[1].0, w[1].1) {
                return Err(GraphError::DuplicateEdge(w[0].0, w[0].1));
            }
        }
        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        let mut log_fact = 0.0;
        for &(p, q, c) in &list {
            if p >= n || q >= n {
                return Err(GraphError::NodeOutOfRange(p, q, n));
            }
            if p == q {
                return Err(GraphError::SelfLoopIndex(p));
            }
            if c == 0 {
                return Err(GraphError::ZeroCount(p, q));
            }
            out_adj[p].push((q, c));
            in_adj[q].push((p, c));
            log_fact += (2..=c).map(|t| (t as f64).ln()).sum::<f64>();
        }
        let edges: Vec<(usize, usize)> = list.iter().map(|&(p, q, _)| (p, q)).collect();
        kahn_order(n, &edges)?;
        Ok(Self {
            n,
            counts: list.iter().map(|e| e.2).collect(),
            edges,
            out_adj,
            in_adj,
            log_count_factorials: log_fact,
        })
    }

    /// Accepts a raw digraph that happens to be acyclic.
    pub fn from_raw(g: &RawDigraph) -> Result<Self, GraphError> {
        Self::new(g.n, g.edges.iter().copied())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Multiplicity of each entry of [`Dag::edges`].
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Sum of all edge multiplicities.
    pub fn total_count(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn out_neighbors(&self, p: usize) -> &[(usize, u32)] {
        &self.out_adj[p]
    }

    pub fn in_neighbors(&self, p: usize) -> &[(usize, u32)] {
        &self.in_adj[p]
    }

    /// Total multiplicity of edges touching `p` in either direction.
    pub fn degree(&self, p: usize) -> u64 {
        self.out_adj[p].iter().chain(&self.in_adj[p]).map(|&(_, c)| c as u64).sum()
    }

    pub(crate) fn log_count_factorials(&self) -> f64 {
        self.log_count_factorials
    }

    pub fn is_binary(&self) -> bool {
        self.counts.iter().all(|&c| c == 1)
    }
}

fn kahn_order(n: usize, edges: &[(usize, usize)]) -> Result<Vec<usize>, CyclicError> {
    let mut indeg = vec![0usize; n];
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(p, q) in edges {
        indeg[q] += 1;
        out[p].push(q);
    }
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..n).filter(|&p| indeg[p] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(p)) = ready.pop() {
        order.push(p);
        for &q in &out[p] {
            indeg[q] -= 1;
            if indeg[q] == 0 {
                ready.push(Reverse(q));
            }
        }
    }
    if order.len() < n {
        let nodes = (0..n).filter(|&p| indeg[p] > 0).collect();
        return Err(CyclicError { nodes });
    }
    Ok(order)
}

/// Kahn's algorithm, releasing the smallest available index first.
pub fn kahn_sort(g: &RawDigraph) -> Result<OrderingState, CyclicError> {
    kahn_order(g.n, &g.edges).map(OrderingState::from_sigma_unchecked)
}

/// Same as [`kahn_sort`] for an already validated DAG; never fails.
pub fn topological_order(g: &Dag) -> OrderingState {
    OrderingState::from_sigma_unchecked(
        kahn_order(g.n, &g.edges).expect("Dag is acyclic by construction"),
    )
}

/// True iff every edge points from an earlier to a later position.
pub fn check_topological(g: &Dag, ordering: &OrderingState) -> Result<bool, GraphError> {
    if ordering.len() != g.n {
        return Err(GraphError::LengthMismatch {
            expected: g.n,
            found: ordering.len(),
        });
    }
    Ok(is_topological(g, ordering))
}

pub(crate) fn is_topological(g: &Dag, ordering: &OrderingState) -> bool {
    let phi = ordering.phi();
    g.edges.iter().all(|&(p, q)| phi[p] < phi[q])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemovalReason {
    /// One half of a reciprocated pair `(p, q)`, `(q, p)`.
    Mutual,
    /// Back edge closing a longer cycle.
    Cycle,
}

impl RemovalReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RemovalReason::Mutual => "mutual",
            RemovalReason::Cycle => "cycle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RemovedEdge {
    pub src: usize,
    pub dst: usize,
    pub reason: RemovalReason,
}

/// Removal log as CSV with a `src,dst,reason` header, using node identifiers.
pub fn removal_log_csv(ids: &[String], log: &[RemovedEdge]) -> String {
    let mut s = String::from("src,dst,reason\n");
    for r in log {
        let _ = writeln!(s, "{},{},{}", ids[r.src], ids[r.dst], r.reason.as_str());
    }
    s
}

/// Makes a raw digraph acyclic.
///
/// Reciprocated pairs lose the edge whose source has the larger index. Any
/// remaining cycles are broken by deleting every back edge of a depth-first
/// search that visits nodes and neighbours in index order.
pub fn break_cycles(g: &RawDigraph) -> (Dag, Vec<RemovedEdge>) {
    let present: HashSet<(usize, usize)> = g.edges.iter().copied().collect();
    let mut log = Vec::new();
    let mut kept = Vec::with_capacity(g.edges.len());
    for &(p, q) in &g.edges {
        if p > q && present.contains(&(q, p)) {
            log.push(RemovedEdge { src: p, dst: q, reason: RemovalReason::Mutual });
        } else {
            kept.push((p, q));
        }
    }

    if kahn_order(g.n, &kept).is_err() {
        let back = dfs_back_edges(g.n, &kept);
        let back_set: HashSet<(usize, usize)> = back.iter().copied().collect();
        kept.retain(|e| !back_set.contains(e));
        log.extend(back.into_iter().map(|(src, dst)| RemovedEdge {
            src,
            dst,
            reason: RemovalReason::Cycle,
        }));
    }

    let dag = Dag::new(g.n, kept).expect("back-edge removal leaves a DAG");
    (dag, log)
}

fn dfs_back_edges(n: usize, edges: &[(usize, usize)]) -> Vec<(usize, usize)> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(p, q) in edges {
        out[p].push(q);
    }
    for adj in &mut out {
        adj.sort_unstable();
    }
    let mut mark = vec![Mark::New; n];
    let mut back = Vec::new();
    for root in 0..n {
        if mark[root] != Mark::New {
            continue;
        }
        mark[root] = Mark::Active;
        let mut stack = vec![(root, 0usize)];
        while let Some(top) = stack.last_mut() {
            let (p, i) = *top;
            if i < out[p].len() {
                top.1 += 1;
                let q = out[p][i];
                match mark[q] {
                    Mark::New => {
                        mark[q] = Mark::Active;
                        stack.push((q, 0));
                    }
                    Mark::Active => back.push((p, q)),
                    Mark::Done => {}
                }
            } else {
                mark[p] = Mark::Done;
                stack.pop();
            }
        }
    }
    back
}

/// Induced subgraph on the largest weakly connected component.
///
/// Ties go to the component containing the smallest node index. Nodes are
/// relabelled `0..n'` preserving relative order; the returned vector maps each
/// new index to its old one.
pub fn largest_weak_component(g: &Dag) -> Result<(Dag, Vec<usize>), GraphError> {
    if g.n == 0 {
        return Err(GraphError::NoNodes);
    }
    let mut dsu = DisjointSets::new(g.n);
    for &(p, q) in &g.edges {
        dsu.union(p, q);
    }
    let mut size = vec![0usize; g.n];
    let mut min_member = vec![usize::MAX; g.n];
    for p in 0..g.n {
        let r = dsu.find(p);
        size[r] += 1;
        min_member[r] = min_member[r].min(p);
    }
    let best = (0..g.n)
        .filter(|&r| size[r] > 0)
        .max_by(|&x, &y| size[x].cmp(&size[y]).then(min_member[y].cmp(&min_member[x])))
        .expect("at least one node");
    let keep: Vec<usize> = (0..g.n).filter(|&p| dsu.find(p) == best).collect();
    let mut new_index = vec![usize::MAX; g.n];
    for (i, &p) in keep.iter().enumerate() {
        new_index[p] = i;
    }
    let edges = g
        .edges
        .iter()
        .zip(&g.counts)
        .filter(|((p, _), _)| new_index[*p] != usize::MAX)
        .map(|(&(p, q), &c)| (new_index[p], new_index[q], c));
    let sub = Dag::with_counts(keep.len(), edges)?;
    Ok((sub, keep))
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(n: usize, edges: &[(usize, usize)]) -> RawDigraph {
        RawDigraph::new(n, edges.iter().copied()).unwrap()
    }

    #[test]
    fn parses_two_column() {
        let g = parse_edge_list("A B\nA C\nB C", EdgeListFormat::TwoColumn).unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (1, 2)]);
        assert_eq!(g.ids(), &["A", "B", "C"]);
    }

    #[test]
    fn parse_rejects_self_loop_and_collapses_duplicates() {
        assert!(matches!(
            parse_edge_list("A A", EdgeListFormat::TwoColumn),
            Err(GraphError::SelfLoop { line: 1, .. })
        ));
        let g = parse_edge_list("A B\nA B", EdgeListFormat::TwoColumn).unwrap();
        assert_eq!(g.n(), 2);
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(
            parse_edge_list("A B C", EdgeListFormat::TwoColumn),
            Err(GraphError::MalformedLine { line: 1, found: 3 })
        );
        assert_eq!(parse_edge_list("# nothing\n\n", EdgeListFormat::TwoColumn), Err(GraphError::Empty));
        let g = parse_edge_list("x, y # c\n# skip\ny,z\n", EdgeListFormat::Csv).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert!(parse_edge_list("x,", EdgeListFormat::Csv).is_err());
    }

    #[test]
    fn kahn_examples() {
        let o = kahn_sort(&raw(3, &[(0, 1), (0, 2), (1, 2)])).unwrap();
        assert_eq!(o.sigma(), &[0, 1, 2]);
        let err = kahn_sort(&raw(2, &[(0, 1), (1, 0)])).unwrap_err();
        assert_eq!(err.nodes, vec![0, 1]);
        let o = kahn_sort(&raw(3, &[])).unwrap();
        assert_eq!(o.sigma(), &[0, 1, 2]);
        // smallest index first among the released nodes
        let o = kahn_sort(&raw(4, &[(3, 0), (2, 1)])).unwrap();
        assert_eq!(o.sigma(), &[2, 1, 3, 0]);
    }

    #[test]
    fn topological_checks() {
        let g = Dag::new(2, [(0, 1)]).unwrap();
        assert!(check_topological(&g, &OrderingState::from_sigma(vec![0, 1]).unwrap()).unwrap());
        assert!(!check_topological(&g, &OrderingState::from_sigma(vec![1, 0]).unwrap()).unwrap());
        let g = Dag::new(3, [(0, 1), (0, 2), (1, 2)]).unwrap();
        assert!(!check_topological(&g, &OrderingState::from_sigma(vec![0, 2, 1]).unwrap()).unwrap());
        assert!(check_topological(&g, &OrderingState::identity(2)).is_err());
    }

    #[test]
    fn dag_rejects_cycles_and_duplicates() {
        assert!(matches!(Dag::new(2, [(0, 1), (1, 0)]), Err(GraphError::Cyclic(_))));
        assert!(matches!(Dag::new(2, [(0, 1), (0, 1)]), Err(GraphError::DuplicateEdge(0, 1))));
        assert!(matches!(Dag::new(2, [(1, 1)]), Err(GraphError::SelfLoopIndex(1))));
    }

    #[test]
    fn break_mutual_pair_keeps_lower_source() {
        let (dag, log) = break_cycles(&raw(2, &[(0, 1), (1, 0)]));
        assert_eq!(dag.edges(), &[(0, 1)]);
        assert_eq!(log, vec![RemovedEdge { src: 1, dst: 0, reason: RemovalReason::Mutual }]);
    }

    #[test]
    fn break_identity_on_dag() {
        let g = raw(4, &[(0, 1), (1, 2), (0, 3)]);
        let (dag, log) = break_cycles(&g);
        assert_eq!(dag.edges(), g.edges());
        assert!(log.is_empty());
    }

    #[test]
    fn break_three_cycle_removes_one_edge() {
        let (dag, log) = break_cycles(&raw(3, &[(0, 1), (1, 2), (2, 0)]));
        assert_eq!(dag.edge_count(), 2);
        assert_eq!(log.len(), 1);
        assert_eq!((log[0].src, log[0].dst), (2, 0));
        assert!(kahn_order(3, dag.edges()).is_ok());
    }

    #[test]
    fn removal_log_format() {
        let ids: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let log = [RemovedEdge { src: 1, dst: 0, reason: RemovalReason::Mutual }];
        assert_eq!(removal_log_csv(&ids, &log), "src,dst,reason\nb,a,mutual\n");
    }

    #[test]
    fn component_examples() {
        let g = Dag::new(3, [(0, 1)]).unwrap();
        let (sub, map) = largest_weak_component(&g).unwrap();
        assert_eq!(sub.n(), 2);
        assert_eq!(sub.edges(), &[(0, 1)]);
        assert_eq!(map, vec![0, 1]);

        let g = Dag::new(3, [(0, 1), (1, 2)]).unwrap();
        assert_eq!(largest_weak_component(&g).unwrap().0, g);

        let g = Dag::new(5, [(0, 3), (1, 4), (4, 2)]).unwrap();
        let (sub, map) = largest_weak_component(&g).unwrap();
        assert_eq!(map, vec![1, 2, 4]);
        assert_eq!(sub.edges(), &[(0, 2), (2, 1)]);

        // equal sizes: the component holding node 0 wins
        let g = Dag::new(4, [(2, 3), (1, 0)]).unwrap();
        assert_eq!(largest_weak_component(&g).unwrap().1, vec![0, 1]);
    }

    #[test]
    fn counts_and_degree() {
        let g = Dag::with_counts(3, [(0, 1, 2), (1, 2, 3)]).unwrap();
        assert_eq!(g.total_count(), 5);
        assert_eq!(g.degree(1), 5);
        assert!(!g.is_binary());
        let expected = 2f64.ln() + 6f64.ln();
        assert!((g.log_count_factorials() - expected).abs() < 1e-12);
    }
}
