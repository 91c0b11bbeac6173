//! Simple undirected graphs, k-regular bipartite expanders and hypergraphs.
//!
//! Adjacency lists are kept sorted so every traversal, and therefore every
//! seeded computation downstream, is deterministic.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRAPH_FORMAT: &str = "hyperexpand-graph-v1";
pub const BIPARTITE_FORMAT: &str = "hyperexpand-bipartite-v1";

/// Undirected simple graph on vertices `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    adjacency: Vec<Vec<usize>>,
    edge_count: usize,
}

/// Exact diameter; `Infinite` for disconnected graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Diameter {
    Finite(usize),
    Infinite,
}

impl Diameter {
    pub fn finite(self) -> Option<usize> {
        match self {
            Diameter::Finite(d) => Some(d),
            Diameter::Infinite => None,
        }
    }
}

impl fmt::Display for Diameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diameter::Finite(d) => write!(f, "{d}"),
            Diameter::Infinite => f.write_str("infinite"),
        }
    }
}

impl Graph {
    /// Builds a graph from an edge list, rejecting out-of-range ids,
    /// self-loops and duplicate edges (in either orientation).
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in edges {
            for id in [u, v] {
                if id >= n {
                    return Err(Error::VertexOutOfRange { u, v, id, n });
                }
            }
            if u == v {
                return Err(Error::SelfLoop(u));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for (u, list) in adjacency.iter_mut().enumerate() {
            list.sort_unstable();
            if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::DuplicateEdge(u.min(w[0]), u.max(w[0])));
            }
        }
        Ok(Graph {
            n,
            adjacency,
            edge_count: edges.len(),
        })
    }

    /// Graph with `n` vertices and no edges.
    pub fn empty(n: usize) -> Self {
        Graph {
            n,
            adjacency: vec![Vec::new(); n],
            edge_count: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn adjacency(&self) -> &[Vec<usize>] {
        &self.adjacency
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Edges `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    /// `Some(k)` if every vertex has degree `k`; `None` for `n = 0`.
    pub fn is_k_regular(&self) -> Option<usize> {
        let k = self.adjacency.first()?.len();
        self.adjacency.iter().all(|l| l.len() == k).then_some(k)
    }

    /// Two-colouring by breadth-first search; the lowest id of every
    /// component gets side 0. `None` iff the graph has an odd cycle.
    pub fn bipartition(&self) -> Option<Vec<u8>> {
        let mut side: Vec<Option<u8>> = vec![None; self.n];
        let mut queue = VecDeque::new();
        for start in 0..self.n {
            if side[start].is_some() {
                continue;
            }
            side[start] = Some(0);
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                let su = side[u].unwrap();
                for &v in &self.adjacency[u] {
                    match side[v] {
                        None => {
                            side[v] = Some(1 - su);
                            queue.push_back(v);
                        }
                        Some(sv) if sv == su => return None,
                        Some(_) => {}
                    }
                }
            }
        }
        Some(side.into_iter().map(|s| s.unwrap()).collect())
    }

    /// Hop distances from `source`; `None` for unreachable vertices.
    pub fn bfs_distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        let mut queue = VecDeque::from([source]);
        dist[source] = Some(0);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &v in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.n == 0 || self.bfs_distances(0).iter().all(Option::is_some)
    }

    /// Number of connected components.
    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.n];
        let mut count = 0;
        for s in 0..self.n {
            if seen[s] {
                continue;
            }
            count += 1;
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(u) = stack.pop() {
                for &v in &self.adjacency[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        count
    }

    /// Exact diameter from all-pairs breadth-first search, O(n (n + m)).
    pub fn bfs_diameter(&self) -> Diameter {
        let mut best = 0;
        for s in 0..self.n {
            for d in self.bfs_distances(s) {
                match d {
                    Some(d) => best = best.max(d),
                    None => return Diameter::Infinite,
                }
            }
        }
        Diameter::Finite(best)
    }

    /// Dense 0/1 adjacency matrix, row-major.
    pub fn adjacency_matrix<T: num_traits::Zero + num_traits::One + Clone>(&self) -> Vec<T> {
        let mut a = vec![T::zero(); self.n * self.n];
        for (u, list) in self.adjacency.iter().enumerate() {
            for &v in list {
                a[u * self.n + v] = T::one();
            }
        }
        a
    }

    /// Relabels vertex `v` as `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::InvalidArgument("permutation length differs from n".into()));
        }
        let edges: Vec<_> = self.edges().map(|(u, v)| (perm[u], perm[v])).collect();
        Graph::new(self.n, &edges)
    }

    /// Vertex-disjoint union; the vertices of `parts[i]` are shifted by the
    /// sizes of the preceding parts.
    pub fn disjoint_union(parts: &[Graph]) -> Self {
        let n = parts.iter().map(Graph::n).sum();
        let mut edges = Vec::new();
        let mut offset = 0;
        for g in parts {
            edges.extend(g.edges().map(|(u, v)| (u + offset, v + offset)));
            offset += g.n;
        }
        Graph::new(n, &edges).expect("union of simple graphs is simple")
    }

    pub fn to_json(&self) -> String {
        crate::json::to_compact(&self.file())
    }

    pub fn file(&self) -> GraphFile {
        GraphFile {
            format: GRAPH_FORMAT.to_string(),
            n: self.n,
            edges: self.edges().map(|(u, v)| [u, v]).collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn from_file(file: GraphFile) -> Result<Self> {
        if file.format != GRAPH_FORMAT {
            return Err(Error::Parse(format!("unexpected format tag {:?}", file.format)));
        }
        let edges: Vec<_> = file.edges.iter().map(|e| (e[0], e[1])).collect();
        Graph::new(file.n, &edges)
    }

    /// One `u v` pair per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# n={}\n", self.n);
        for (u, v) in self.edges() {
            out.push_str(&format!("{u} {v}\n"));
        }
        out
    }

    /// Parses `u v` lines, ignoring blank lines and `#` comments. The vertex
    /// count is `n` if given, else a `# n=<int>` header, else max id + 1.
    pub fn from_edge_list(text: &str, n: Option<usize>) -> Result<Self> {
        let mut edges = Vec::new();
        let mut header_n = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("n=") {
                    header_n = v.trim().parse().ok();
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let mut next = || -> Result<usize> {
                parts
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| Error::Parse(format!("line {}: expected `u v`", lineno + 1)))
            };
            let (u, v) = (next()?, next()?);
            if parts.next().is_some() {
                return Err(Error::Parse(format!("line {}: trailing tokens", lineno + 1)));
            }
            edges.push((u, v));
        }
        let inferred = edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
        Graph::new(n.or(header_n).unwrap_or(inferred), &edges)
    }
}

/// On-disk form of a [`Graph`]. Unknown keys are ignored when reading.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphFile {
    pub format: String,
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
}

/// k-regular bipartite graph stored as `k` pairwise edge-disjoint perfect
/// matchings: matching `i` joins left node `l` to right node `matchings[i][l]`.
///
/// In the derived [`Graph`] left nodes keep ids `0..n` and right node `r`
/// gets id `n + r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteExpander {
    n: usize,
    matchings: Vec<Vec<usize>>,
    graph: Graph,
}

impl BipartiteExpander {
    /// Validates that every matching is a permutation of `0..n` and that the
    /// matchings are pairwise edge-disjoint.
    pub fn new(n: usize, matchings: Vec<Vec<usize>>) -> Result<Self> {
        if matchings.is_empty() {
            return Err(Error::InvalidExpander("at least one matching is required".into()));
        }
        for (i, m) in matchings.iter().enumerate() {
            if m.len() != n {
                return Err(Error::InvalidExpander(format!(
                    "matching {i} has length {} (expected {n})",
                    m.len()
                )));
            }
            let mut hit = vec![false; n];
            for &r in m {
                if r >= n || std::mem::replace(&mut hit[r], true) {
                    return Err(Error::InvalidExpander(format!("matching {i} is not a permutation")));
                }
            }
        }
        for l in 0..n {
            for i in 0..matchings.len() {
                for j in 0..i {
                    if matchings[i][l] == matchings[j][l] {
                        return Err(Error::InvalidExpander(format!(
                            "matchings {j} and {i} share edge ({l}, {})",
                            matchings[i][l]
                        )));
                    }
                }
            }
        }
        let edges: Vec<_> = matchings
            .iter()
            .flat_map(|m| m.iter().enumerate().map(|(l, &r)| (l, n + r)))
            .collect();
        let graph = Graph::new(2 * n, &edges)?;
        Ok(BipartiteExpander { n, matchings, graph })
    }

    pub fn n_left(&self) -> usize {
        self.n
    }

    pub fn n_right(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.matchings.len()
    }

    pub fn matchings(&self) -> &[Vec<usize>] {
        &self.matchings
    }

    /// Derived graph on `2n` vertices.
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    /// Right-node indices (`0..n`) adjacent to left node `l`, sorted.
    pub fn right_neighbors(&self, l: usize) -> Vec<usize> {
        self.graph.neighbors(l).iter().map(|&r| r - self.n).collect()
    }

    /// Left nodes adjacent to right node `r` (`0..n`), sorted.
    pub fn left_neighbors(&self, r: usize) -> &[usize] {
        self.graph.neighbors(self.n + r)
    }

    pub fn to_json(&self) -> String {
        crate::json::to_compact(&self.file())
    }

    pub fn file(&self) -> BipartiteFile {
        BipartiteFile {
            format: BIPARTITE_FORMAT.to_string(),
            n_left: self.n,
            n_right: self.n,
            k: self.k(),
            matchings: self.matchings.clone(),
        }
    }

    pub fn from_file(file: BipartiteFile) -> Result<Self> {
        if file.format != BIPARTITE_FORMAT {
            return Err(Error::Parse(format!("unexpected format tag {:?}", file.format)));
        }
        if file.n_left != file.n_right {
            return Err(Error::InvalidExpander("n_left must equal n_right".into()));
        }
        if file.k != file.matchings.len() {
            return Err(Error::InvalidExpander(format!(
                "k = {} but {} matchings given",
                file.k,
                file.matchings.len()
            )));
        }
        BipartiteExpander::new(file.n_left, file.matchings)
    }

    /// Parses the bipartite format. Extra top-level keys are ignored.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: BipartiteFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_file(file)
    }
}

/// On-disk form of a [`BipartiteExpander`]. Unknown keys are ignored when
/// reading.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BipartiteFile {
    pub format: String,
    pub n_left: usize,
    pub n_right: usize,
    pub k: usize,
    pub matchings: Vec<Vec<usize>>,
}

/// Hypergraph on vertices `0..n`; each hyperedge is a sorted vertex set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypergraph {
    pub n: usize,
    pub hyperedges: Vec<Vec<usize>>,
}

impl Hypergraph {
    pub fn new(n: usize, mut hyperedges: Vec<Vec<usize>>) -> Result<Self> {
        for e in &mut hyperedges {
            e.sort_unstable();
            e.dedup();
            if let Some(&v) = e.iter().find(|&&v| v >= n) {
                return Err(Error::InvalidArgument(format!("hyperedge vertex {v} >= n = {n}")));
            }
        }
        Ok(Hypergraph { n, hyperedges })
    }

    /// One hyperedge per right node, holding its left neighbours.
    pub fn from_bipartite(b: &BipartiteExpander) -> Self {
        Hypergraph {
            n: b.n_left(),
            hyperedges: (0..b.n_right()).map(|r| b.left_neighbors(r).to_vec()).collect(),
        }
    }

    /// `Some(k)` if every hyperedge has cardinality `k`.
    pub fn uniformity(&self) -> Option<usize> {
        let k = self.hyperedges.first()?.len();
        self.hyperedges.iter().all(|e| e.len() == k).then_some(k)
    }

    /// Incidence (bipartite) graph: vertices `0..n`, hyperedge `j` at `n + j`.
    pub fn incidence_graph(&self) -> Graph {
        let edges: Vec<_> = self
            .hyperedges
            .iter()
            .enumerate()
            .flat_map(|(j, e)| e.iter().map(move |&v| (v, self.n + j)))
            .collect();
        Graph::new(self.n + self.hyperedges.len(), &edges).expect("hyperedges are deduplicated")
    }
}

/// Small named graph families used throughout tests and the CLI.
pub mod families {
    use super::Graph;

    /// Cycle C_n (n >= 3).
    pub fn cycle(n: usize) -> Graph {
        assert!(n >= 3, "cycle needs n >= 3");
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Graph::new(n, &edges).unwrap()
    }

    pub fn path(n: usize) -> Graph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::new(n, &edges).unwrap()
    }

    pub fn complete(n: usize) -> Graph {
        let edges: Vec<_> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        Graph::new(n, &edges).unwrap()
    }

    /// K_{a,b}; left side `0..a`, right side `a..a+b`.
    pub fn complete_bipartite(a: usize, b: usize) -> Graph {
        let edges: Vec<_> = (0..a).flat_map(|u| (0..b).map(move |v| (u, a + v))).collect();
        Graph::new(a + b, &edges).unwrap()
    }

    /// Prism over C_m: outer cycle `0..m`, inner cycle `m..2m`, spokes `i -- m+i`.
    pub fn circular_ladder(m: usize) -> Graph {
        assert!(m >= 3, "circular ladder needs m >= 3");
        let mut edges = Vec::with_capacity(3 * m);
        for i in 0..m {
            edges.push((i, (i + 1) % m));
            edges.push((m + i, m + (i + 1) % m));
            edges.push((i, m + i));
        }
        Graph::new(2 * m, &edges).unwrap()
    }

    pub fn petersen() -> Graph {
        let mut edges = Vec::new();
        for i in 0..5 {
            edges.push((i, (i + 1) % 5));
            edges.push((i, i + 5));
            edges.push((5 + i, 5 + (i + 2) % 5));
        }
        Graph::new(10, &edges).unwrap()
    }

    /// d-dimensional hypercube Q_d.
    pub fn hypercube(d: u32) -> Graph {
        let n = 1usize << d;
        let edges: Vec<_> = (0..n)
            .flat_map(|u| (0..d).map(move |b| (u, u ^ (1 << b))).filter(|&(u, v)| u < v))
            .collect();
        Graph::new(n, &edges).unwrap()
    }

    /// Complete binary tree of the given depth in heap order (children of
    /// `i` are `2i+1`, `2i+2`).
    pub fn binary_tree(depth: u32) -> Graph {
        let n = (1usize << (depth + 1)) - 1;
        let edges: Vec<_> = (1..n).map(|v| ((v - 1) / 2, v)).collect();
        Graph::new(n, &edges).unwrap()
    }
}
