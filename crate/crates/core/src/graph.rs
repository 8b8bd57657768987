//! Graph representation, insertion histories, prefix subgraphs, structural
//! metrics and edge-list I/O.
//!
//! Vertices are dense `usize` ids. Edges keep their insertion order, which is
//! part of a multigraph's identity: a [`History`] refers to edges by index.
//! A self-loop contributes two endpoint slots to its vertex, so degrees sum
//! to twice the number of edges and `D^{-1}A` stays row-stochastic.

use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum GraphMode {
    Multigraph,
    Simple,
}

impl std::str::FromStr for GraphMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "multi" | "multigraph" => Ok(GraphMode::Multigraph),
            "simple" => Ok(GraphMode::Simple),
            other => Err(crate::error::invalid(format!("unknown graph mode '{other}'"))),
        }
    }
}

#[inline]
fn pair_key(u: usize, v: usize) -> (usize, usize) {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Undirected multigraph or simple graph with an ordered edge list.
#[derive(Debug, Clone)]
pub struct Graph {
    mode: GraphMode,
    edges: Vec<(usize, usize)>,
    degree: Vec<usize>,
    // one entry per half-edge: the vertex at the other end
    slots: Vec<Vec<usize>>,
    // edge indices per vertex; a self-loop appears twice
    incident: Vec<Vec<usize>>,
    multiplicity: HashMap<(usize, usize), usize>,
}

impl Graph {
    /// Empty graph without vertices.
    pub fn new(mode: GraphMode) -> Self {
        Graph {
            mode,
            edges: Vec::new(),
            degree: Vec::new(),
            slots: Vec::new(),
            incident: Vec::new(),
            multiplicity: HashMap::new(),
        }
    }

    /// Graph on `n` vertices with the given edges; isolated vertices allowed.
    pub fn with_vertices(n: usize, edges: &[(usize, usize)], mode: GraphMode) -> Result<Self> {
        let mut g = Graph::new(mode);
        for _ in 0..n {
            g.add_vertex();
        }
        for &(u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    /// Builds a graph from an edge list; the vertex count is `1 + max id`.
    pub fn from_edges(edges: &[(usize, usize)], mode: GraphMode) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::EmptyEdgeList);
        }
        let n = edges.iter().map(|&(u, v)| u.max(v)).max().unwrap_or(0) + 1;
        Graph::with_vertices(n, edges, mode)
    }

    pub fn add_vertex(&mut self) -> usize {
        self.degree.push(0);
        self.slots.push(Vec::new());
        self.incident.push(Vec::new());
        self.degree.len() - 1
    }

    /// Appends an edge and returns its index.
    pub fn add_edge(&mut self, u: usize, v: usize) -> Result<usize> {
        let n = self.n_vertices();
        for w in [u, v] {
            if w >= n {
                return Err(Error::VertexOutOfRange { vertex: w, n });
            }
        }
        if self.mode == GraphMode::Simple {
            if u == v {
                return Err(Error::SelfLoopInSimple(u));
            }
            if self.multiplicity.contains_key(&pair_key(u, v)) {
                return Err(Error::DuplicateInSimple(u, v));
            }
        }
        let idx = self.edges.len();
        self.edges.push((u, v));
        *self.multiplicity.entry(pair_key(u, v)).or_insert(0) += 1;
        self.degree[u] += 1;
        self.degree[v] += 1;
        self.slots[u].push(v);
        self.slots[v].push(u);
        self.incident[u].push(idx);
        self.incident[v].push(idx);
        Ok(idx)
    }

    pub fn mode(&self) -> GraphMode {
        self.mode
    }

    pub fn n_vertices(&self) -> usize {
        self.degree.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, idx: usize) -> (usize, usize) {
        self.edges[idx]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.degree[v]
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degree
    }

    /// Sum of degrees, `2 |E|`.
    pub fn volume(&self) -> usize {
        2 * self.edges.len()
    }

    /// Neighbor per half-edge at `v`, with multiplicity.
    pub fn slots(&self, v: usize) -> &[usize] {
        &self.slots[v]
    }

    /// Edge indices incident to `v` (self-loops listed twice).
    pub fn incident(&self, v: usize) -> &[usize] {
        &self.incident[v]
    }

    /// Number of parallel copies of edge `{u, v}`.
    pub fn multiplicity(&self, u: usize, v: usize) -> usize {
        self.multiplicity.get(&pair_key(u, v)).copied().unwrap_or(0)
    }

    /// Adjacency matrix entry; a self-loop counts 2 on the diagonal.
    pub fn adjacency_weight(&self, u: usize, v: usize) -> usize {
        let m = self.multiplicity(u, v);
        if u == v {
            2 * m
        } else {
            m
        }
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.multiplicity(u, v) > 0
    }

    /// Distinct neighbors of every vertex, self excluded, sorted.
    pub fn skeleton(&self) -> Vec<Vec<usize>> {
        self.slots
            .iter()
            .enumerate()
            .map(|(v, s)| {
                let mut nb: Vec<usize> = s.iter().copied().filter(|&w| w != v).collect();
                nb.sort_unstable();
                nb.dedup();
                nb
            })
            .collect()
    }

    /// Collapses parallel edges and drops self-loops, keeping first-occurrence order.
    pub fn simplify(&self) -> Graph {
        let mut g = Graph::new(GraphMode::Simple);
        for _ in 0..self.n_vertices() {
            g.add_vertex();
        }
        for &(u, v) in &self.edges {
            if u != v && !g.has_edge(u, v) {
                g.add_edge(u, v).expect("valid simple edge");
            }
        }
        g
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n_vertices();
        if n == 0 {
            return false;
        }
        let dist = bfs(&self.skeleton(), 0);
        dist.iter().all(|d| d.is_some())
    }

    pub fn is_bipartite(&self) -> bool {
        let n = self.n_vertices();
        let mut side = vec![None; n];
        for s in 0..n {
            if side[s].is_some() {
                continue;
            }
            side[s] = Some(false);
            let mut queue = VecDeque::from([s]);
            while let Some(x) = queue.pop_front() {
                let sx = side[x].unwrap();
                for &y in &self.slots[x] {
                    match side[y] {
                        None => {
                            side[y] = Some(!sx);
                            queue.push_back(y);
                        }
                        Some(sy) if sy == sx => return false,
                        _ => {}
                    }
                }
            }
        }
        true
    }

    /// Normalized, sorted edge multiset; equal for graphs with the same edges in any order.
    pub fn canonical_edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<_> = self.edges.iter().map(|&(u, v)| pair_key(u, v)).collect();
        e.sort_unstable();
        e
    }

    /// Edge-multiset equality, ignoring edge order and orientation.
    pub fn same_edge_set(&self, other: &Graph) -> bool {
        self.n_vertices() == other.n_vertices() && self.canonical_edges() == other.canonical_edges()
    }
}

/// Hop distances from `source` in an adjacency-list graph.
pub(crate) fn bfs(adj: &[Vec<usize>], source: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(x) = queue.pop_front() {
        let dx = dist[x].unwrap();
        for &y in &adj[x] {
            if dist[y].is_none() {
                dist[y] = Some(dx + 1);
                queue.push_back(y);
            }
        }
    }
    dist
}

/// Latent per-step variables of a history. Index `s - 2` holds step `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPath {
    /// `B_s`: the step attached a new vertex through the exogenous branch.
    pub new_vertex: Vec<bool>,
    /// `K_s`: walk length (≥ 1) when one was drawn.
    pub walk_length: Vec<Option<u32>>,
}

/// Edge-insertion history of a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    /// Edge indices in insertion order.
    pub order: Vec<usize>,
    /// Vertex ids in order of first appearance.
    pub arrival_vertices: Vec<usize>,
    /// `S_j`: 1-based step at which the `j`-th vertex appears.
    pub arrivals: Vec<usize>,
    pub latent: Option<LatentPath>,
}

impl History {
    /// Validates `order` against `g` and derives arrival times.
    pub fn from_order(g: &Graph, order: Vec<usize>) -> Result<History> {
        check_permutation(&order, g.n_edges())?;
        let mut seen = vec![false; g.n_vertices()];
        let mut arrival_vertices = Vec::new();
        let mut arrivals = Vec::new();
        for (i, &e) in order.iter().enumerate() {
            let step = i + 1;
            let (u, v) = g.edge(e);
            if step == 1 {
                if u == v {
                    return Err(Error::InfeasibleOrder { step, edge: e });
                }
            } else if !seen[u] && !seen[v] {
                return Err(Error::InfeasibleOrder { step, edge: e });
            }
            for w in [u, v] {
                if !seen[w] {
                    seen[w] = true;
                    arrival_vertices.push(w);
                    arrivals.push(step);
                }
            }
        }
        Ok(History {
            order,
            arrival_vertices,
            arrivals,
            latent: None,
        })
    }

    pub fn with_latent(mut self, latent: LatentPath) -> Self {
        self.latent = Some(latent);
        self
    }

    pub fn n_steps(&self) -> usize {
        self.order.len()
    }
}

fn check_permutation(order: &[usize], t: usize) -> Result<()> {
    if order.len() != t {
        return Err(Error::InvalidPermutation(format!(
            "length {} but graph has {} edges",
            order.len(),
            t
        )));
    }
    let mut hit = vec![false; t];
    for &e in order {
        if e >= t || hit[e] {
            return Err(Error::InvalidPermutation(format!("index {e} repeated or out of range")));
        }
        hit[e] = true;
    }
    Ok(())
}

/// `Π_t(G_T)`: the first `t` edges of an order with isolated vertices removed.
#[derive(Debug, Clone)]
pub struct Prefix {
    /// Compact graph; vertices relabeled in ascending original id.
    pub graph: Graph,
    /// Compact id -> original id.
    pub vertex_map: Vec<usize>,
    /// Presence mask over the original vertices.
    pub present: Vec<bool>,
}

pub fn subgraph_prefix(g: &Graph, order: &[usize], t: usize) -> Result<Prefix> {
    if t == 0 || t > g.n_edges() || order.len() < t {
        return Err(crate::error::invalid(format!(
            "prefix length {t} outside 1..={}",
            g.n_edges().min(order.len())
        )));
    }
    let mut present = vec![false; g.n_vertices()];
    let mut used = vec![false; g.n_edges()];
    for (i, &e) in order[..t].iter().enumerate() {
        if e >= g.n_edges() || used[e] {
            return Err(Error::InvalidPermutation(format!("index {e} repeated or out of range")));
        }
        used[e] = true;
        let (u, v) = g.edge(e);
        let ok = if i == 0 { u != v } else { present[u] || present[v] };
        if !ok {
            return Err(Error::InfeasibleOrder { step: i + 1, edge: e });
        }
        present[u] = true;
        present[v] = true;
    }
    let vertex_map: Vec<usize> = (0..g.n_vertices()).filter(|&v| present[v]).collect();
    let mut compact = vec![usize::MAX; g.n_vertices()];
    for (c, &v) in vertex_map.iter().enumerate() {
        compact[v] = c;
    }
    let mut sub = Graph::new(g.mode());
    for _ in 0..vertex_map.len() {
        sub.add_vertex();
    }
    for &e in &order[..t] {
        let (u, v) = g.edge(e);
        sub.add_edge(compact[u], compact[v])?;
    }
    Ok(Prefix {
        graph: sub,
        vertex_map,
        present,
    })
}

/// Uninserted edges with at least one endpoint among the current vertices, ascending.
pub fn feasible_edges(g: &Graph, current_vertices: &[bool], inserted: &[bool]) -> Vec<usize> {
    g.edges()
        .iter()
        .enumerate()
        .filter(|&(e, &(u, v))| !inserted[e] && (current_vertices[u] || current_vertices[v]))
        .map(|(e, _)| e)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphMetrics {
    pub n: usize,
    pub m: usize,
    /// `None` when the graph is disconnected.
    pub diameter: Option<usize>,
    /// Mean hop distance over connected unordered pairs.
    pub mean_shortest_path: f64,
    /// `3 · triangles / connected triples`.
    pub clustering_global: f64,
    /// Mean local clustering over all vertices; degree < 2 contributes 0.
    pub clustering_mean_local: f64,
    pub is_connected: bool,
}

/// Structural metrics on the simple skeleton of `g`.
pub fn graph_metrics(g: &Graph) -> GraphMetrics {
    let n = g.n_vertices();
    let adj = g.skeleton();
    let mut max_d = 0usize;
    let mut total = 0u64;
    let mut pairs = 0u64;
    let mut connected = n > 0;
    for s in 0..n {
        for d in bfs(&adj, s).into_iter().skip(s + 1) {
            match d {
                Some(d) => {
                    max_d = max_d.max(d);
                    total += d as u64;
                    pairs += 1;
                }
                None => connected = false,
            }
        }
    }

    let mut mark = vec![usize::MAX; n];
    let mut tri_sum = 0u64;
    let mut triples = 0u64;
    let mut local_sum = 0.0;
    for v in 0..n {
        let nb = &adj[v];
        let d = nb.len() as u64;
        if d < 2 {
            continue;
        }
        for &w in nb {
            mark[w] = v;
        }
        // each neighbor-neighbor edge seen twice
        let mut links = 0u64;
        for &w in nb {
            links += adj[w].iter().filter(|&&x| mark[x] == v).count() as u64;
        }
        let links = links / 2;
        let c2 = d * (d - 1) / 2;
        tri_sum += links;
        triples += c2;
        local_sum += links as f64 / c2 as f64;
    }

    GraphMetrics {
        n,
        m: g.n_edges(),
        diameter: connected.then_some(max_d),
        mean_shortest_path: if pairs > 0 { total as f64 / pairs as f64 } else { 0.0 },
        clustering_global: if triples > 0 { tri_sum as f64 / triples as f64 } else { 0.0 },
        clustering_mean_local: if n > 0 { local_sum / n as f64 } else { 0.0 },
        is_connected: connected,
    }
}

/// Diameter of the simple skeleton, `None` if disconnected.
pub fn diameter(g: &Graph) -> Option<usize> {
    let adj = g.skeleton();
    let mut best = 0;
    for s in 0..g.n_vertices() {
        for d in bfs(&adj, s) {
            best = best.max(d?);
        }
    }
    Some(best)
}

/// Parsed edge list with the external labels of the dense ids.
#[derive(Debug, Clone)]
pub struct EdgeListFile {
    pub graph: Graph,
    /// `labels[id]` is the label of dense vertex `id`.
    pub labels: Vec<String>,
}

/// Reads whitespace- or comma-separated pairs; `#` lines are comments.
/// Labels are mapped to dense ids in order of first appearance.
pub fn read_edge_list<R: BufRead>(reader: R, mode: GraphMode) -> Result<EdgeListFile> {
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut labels = Vec::new();
    let mut graph = Graph::new(mode);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = trimmed
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if tokens.len() != 2 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected two vertex labels, found {}", tokens.len()),
            });
        }
        let mut endpoint = [0usize; 2];
        for (slot, tok) in endpoint.iter_mut().zip(&tokens) {
            *slot = match ids.get(*tok) {
                Some(&id) => id,
                None => {
                    let id = graph.add_vertex();
                    ids.insert(tok.to_string(), id);
                    labels.push(tok.to_string());
                    id
                }
            };
        }
        graph.add_edge(endpoint[0], endpoint[1]).map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
    }
    if graph.n_edges() == 0 {
        return Err(Error::EmptyEdgeList);
    }
    Ok(EdgeListFile { graph, labels })
}

pub fn read_edge_list_path(path: impl AsRef<Path>, mode: GraphMode) -> Result<EdgeListFile> {
    let f = std::fs::File::open(path)?;
    read_edge_list(std::io::BufReader::new(f), mode)
}

/// Canonical form: one `u v` pair per line, 0-based ids, LF terminated.
pub fn write_edge_list<W: Write>(g: &Graph, mut w: W) -> Result<()> {
    for &(u, v) in g.edges() {
        writeln!(w, "{u} {v}")?;
    }
    Ok(())
}
