//! Forward simulation of the random-walk models and the ACL / Erdős–Rényi
//! baselines, plus the exact one-step edge-event distribution.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::graph::{Graph, GraphMode, History, LatentPath};
use crate::law::WalkLengthLaw;
use crate::spectral::{degree_biased, rw_prob_matrix};
use crate::walk::{series_row, simulate_walk, SERIES_TAIL_EPS};

/// How the anchor vertex of each step is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Selection {
    Uniform,
    SizeBiased,
}

impl std::str::FromStr for Selection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" | "u" => Ok(Selection::Uniform),
            "size-biased" | "sizebiased" | "sb" | "degree-biased" => Ok(Selection::SizeBiased),
            other => Err(invalid(format!("unknown selection '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub alpha: f64,
    pub law: WalkLengthLaw,
    pub selection: Selection,
    pub mode: GraphMode,
    pub seed_graph: Graph,
}

impl ModelConfig {
    /// Model grown from a single edge.
    pub fn new(alpha: f64, law: WalkLengthLaw, selection: Selection, mode: GraphMode) -> Self {
        ModelConfig {
            alpha,
            law,
            selection,
            mode,
            seed_graph: Graph::from_edges(&[(0, 1)], mode).expect("single edge"),
        }
    }

    pub fn with_seed_graph(mut self, g: Graph) -> Self {
        self.seed_graph = g;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        self.law.validate()?;
        if self.seed_graph.n_edges() == 0 || !self.seed_graph.is_connected() {
            return Err(invalid("seed graph must be connected with at least one edge"));
        }
        if self.seed_graph.mode() != self.mode {
            return Err(invalid("seed graph mode differs from model mode"));
        }
        Ok(())
    }
}

/// Selection law `μ` over the vertices of `g`.
pub fn selection_weights(g: &Graph, selection: Selection) -> Vec<f64> {
    match selection {
        Selection::Uniform => vec![1.0 / g.n_vertices() as f64; g.n_vertices()],
        Selection::SizeBiased => degree_biased(g),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum EventKind {
    /// New vertex attached to `v`.
    NewVertexAt(usize),
    /// Edge between existing vertices `v < u`.
    Pair(usize, usize),
    SelfLoop(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeEvent {
    pub kind: EventKind,
    pub probability: f64,
}

/// Exact distribution of the next edge given the current graph.
///
/// With a filter, only accepted events are returned and their probabilities
/// are left unnormalized. Zero-probability events are omitted.
pub fn edge_event_distribution(
    g: &Graph,
    cfg: &ModelConfig,
    filter: Option<&dyn Fn(&EventKind) -> bool>,
) -> Result<Vec<EdgeEvent>> {
    let q = rw_prob_matrix(g, &cfg.law)?;
    let mu = selection_weights(g, cfg.selection);
    let a = cfg.alpha;
    let n = g.n_vertices();
    let mut out = Vec::new();
    let mut push = |kind: EventKind, p: f64| {
        if p > 0.0 && filter.is_none_or(|f| f(&kind)) {
            out.push(EdgeEvent { kind, probability: p });
        }
    };
    match cfg.mode {
        GraphMode::Multigraph => {
            for v in 0..n {
                push(EventKind::NewVertexAt(v), a * mu[v]);
                push(EventKind::SelfLoop(v), (1.0 - a) * mu[v] * q[(v, v)]);
                for u in v + 1..n {
                    push(EventKind::Pair(v, u), (1.0 - a) * (mu[v] * q[(v, u)] + mu[u] * q[(u, v)]));
                }
            }
        }
        GraphMode::Simple => {
            let adj = g.skeleton();
            for v in 0..n {
                let mut closed = q[(v, v)];
                for &w in &adj[v] {
                    closed += q[(v, w)];
                }
                push(EventKind::NewVertexAt(v), mu[v] * (a + (1.0 - a) * closed));
                for u in v + 1..n {
                    if !g.has_edge(v, u) {
                        push(EventKind::Pair(v, u), (1.0 - a) * (mu[v] * q[(v, u)] + mu[u] * q[(u, v)]));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// A generated graph with its full history.
#[derive(Debug, Clone)]
pub struct Generated {
    pub graph: Graph,
    pub history: History,
}

/// Growing graph plus a flat endpoint list for O(1) degree-biased draws.
struct Grower {
    g: Graph,
    ends: Vec<usize>,
}

impl Grower {
    fn new(seed: &Graph) -> Self {
        let ends = seed.edges().iter().flat_map(|&(u, v)| [u, v]).collect();
        Grower { g: seed.clone(), ends }
    }

    fn select<R: Rng + ?Sized>(&self, selection: Selection, rng: &mut R) -> usize {
        match selection {
            Selection::Uniform => rng.random_range(0..self.g.n_vertices()),
            Selection::SizeBiased => self.ends[rng.random_range(0..self.ends.len())],
        }
    }

    fn add(&mut self, u: usize, v: usize) {
        self.g.add_edge(u, v).expect("generator keeps edges valid");
        self.ends.push(u);
        self.ends.push(v);
    }

    fn attach_new(&mut self, v: usize) {
        let w = self.g.add_vertex();
        self.add(v, w);
    }
}

/// Simulates the random-walk model up to `t_total` edges.
///
/// The history records `B` and `K` for every step after the seed. In simple
/// mode a walk that returns to its start or to a neighbor becomes a new-vertex
/// attachment; that step keeps `B = 0` and its drawn `K`. The degenerate law
/// draws the endpoint from the degree-biased law directly.
pub fn rw_generate<R: Rng + ?Sized>(cfg: &ModelConfig, t_total: usize, rng: &mut R) -> Result<Generated> {
    cfg.validate()?;
    let m0 = cfg.seed_graph.n_edges();
    if t_total < m0 {
        return Err(invalid(format!("edge count {t_total} below the seed graph's {m0}")));
    }
    let mut gr = Grower::new(&cfg.seed_graph);
    let steps = t_total - m0;
    let mut new_vertex = Vec::with_capacity(steps);
    let mut walk_length = Vec::with_capacity(steps);
    for _ in 0..steps {
        let v = gr.select(cfg.selection, rng);
        if rng.random::<f64>() < cfg.alpha {
            gr.attach_new(v);
            new_vertex.push(true);
            walk_length.push(None);
            continue;
        }
        let (u, k) = match cfg.law {
            WalkLengthLaw::LimitDegenerate => (gr.select(Selection::SizeBiased, rng), None),
            law => {
                let k = law.sample(rng)?;
                (simulate_walk(&gr.g, v, k, rng)?, Some(k))
            }
        };
        new_vertex.push(false);
        walk_length.push(k);
        match cfg.mode {
            GraphMode::Multigraph => gr.add(v, u),
            GraphMode::Simple => {
                if u == v || gr.g.has_edge(v, u) {
                    gr.attach_new(v);
                } else {
                    gr.add(v, u);
                }
            }
        }
    }
    finish(gr.g, m0, new_vertex, walk_length)
}

fn finish(
    graph: Graph,
    m0: usize,
    mut new_vertex: Vec<bool>,
    mut walk_length: Vec<Option<u32>>,
) -> Result<Generated> {
    // seed edges beyond the first carry no latent draws
    if m0 > 1 {
        let mut nv = vec![false; m0 - 1];
        nv.append(&mut new_vertex);
        new_vertex = nv;
        let mut wl = vec![None; m0 - 1];
        wl.append(&mut walk_length);
        walk_length = wl;
    }
    let order: Vec<usize> = (0..graph.n_edges()).collect();
    let history = History::from_order(&graph, order)?.with_latent(LatentPath {
        new_vertex,
        walk_length,
    });
    Ok(Generated { graph, history })
}

/// ACL(α) multigraph: a new vertex at a degree-biased anchor with probability
/// `α`, otherwise an edge between two independent degree-biased draws.
pub fn acl_generate<R: Rng + ?Sized>(alpha: f64, t_total: usize, rng: &mut R) -> Result<Generated> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if t_total == 0 {
        return Err(invalid("edge count must be at least 1"));
    }
    let seed = Graph::from_edges(&[(0, 1)], GraphMode::Multigraph)?;
    let mut gr = Grower::new(&seed);
    let mut new_vertex = Vec::with_capacity(t_total - 1);
    for _ in 1..t_total {
        let v = gr.select(Selection::SizeBiased, rng);
        if rng.random::<f64>() < alpha {
            gr.attach_new(v);
            new_vertex.push(true);
        } else {
            let u = gr.select(Selection::SizeBiased, rng);
            gr.add(v, u);
            new_vertex.push(false);
        }
    }
    let walk_length = vec![None; new_vertex.len()];
    finish(gr.g, 1, new_vertex, walk_length)
}

/// Uniform simple graph with exactly `n` vertices and `m` edges.
pub fn er_generate<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Graph> {
    let pairs = n * n.saturating_sub(1) / 2;
    if m > pairs {
        return Err(invalid(format!("{m} edges exceed the {pairs} dyads on {n} vertices")));
    }
    let mut chosen = index::sample(rng, pairs, m).into_vec();
    chosen.sort_unstable();
    let mut edges = Vec::with_capacity(m);
    let (mut u, mut start) = (0usize, 0usize);
    for idx in chosen {
        while idx >= start + (n - 1 - u) {
            start += n - 1 - u;
            u += 1;
        }
        edges.push((u, u + 1 + (idx - start)));
    }
    Graph::with_vertices(n, &edges, GraphMode::Simple)
}

/// Mean walk-return probability at a checkpoint, overall and per degree.
#[derive(Debug, Clone, Serialize)]
pub struct ReturnPoint {
    pub t: usize,
    /// `Σ_v μ(v) Q_vv`: chance that a walk step proposes a self-loop.
    pub weighted_return: f64,
    pub by_degree: BTreeMap<usize, f64>,
}

/// Return probabilities `Q_vv` along one simulated multigraph run.
pub fn self_loop_curve<R: Rng + ?Sized>(
    cfg: &ModelConfig,
    checkpoints: &[usize],
    rng: &mut R,
) -> Result<Vec<ReturnPoint>> {
    let t_max = checkpoints.iter().copied().max().unwrap_or(0);
    let run = rw_generate(cfg, t_max, rng)?;
    let mut out = Vec::new();
    for &t in checkpoints {
        let prefix = crate::graph::subgraph_prefix(&run.graph, &run.history.order, t)?;
        let g = &prefix.graph;
        let mu = selection_weights(g, cfg.selection);
        let mut weighted = 0.0;
        let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for v in 0..g.n_vertices() {
            let r = series_row(g, &cfg.law, v, SERIES_TAIL_EPS)?[v];
            weighted += mu[v] * r;
            let e = sums.entry(g.degree(v)).or_insert((0.0, 0));
            e.0 += r;
            e.1 += 1;
        }
        out.push(ReturnPoint {
            t,
            weighted_return: weighted,
            by_degree: sums.into_iter().map(|(d, (s, c))| (d, s / c as f64)).collect(),
        });
    }
    Ok(out)
}
