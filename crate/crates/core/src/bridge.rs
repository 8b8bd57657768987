//! SMC over edge-insertion orders of an observed graph.
//!
//! Particles are partial orders. At each step a particle draws its next edge
//! from the model's one-step law restricted to feasible edges, and its raw
//! weight is the restricted mass `τ`. The product of mean raw weights is an
//! unbiased estimate of `p(G_T | G_1)`.
//!
//! Kernel rows come from a Chebyshev expansion of the walk-length pgf in the
//! transition matrix of the prefix graph. By
//! reversibility `d_a Q_ab = d_b Q_ba`, one row per pair of endpoints is
//! enough, so rows are taken from a small vertex cover of the candidate
//! edges. Particles that share a parent share the computation.

use std::cell::RefCell;
use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::generative::{selection_weights, ModelConfig, Selection};
use crate::graph::{feasible_edges, subgraph_prefix, Graph, GraphMode, History};
use crate::law::WalkLengthLaw;
use crate::rng::stream;
use crate::spectral::rw_prob_matrix;

const LANES: usize = 16;

thread_local! {
    static SCRATCH: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
    static ACTIVE: RefCell<Vec<bool>> = const { RefCell::new(Vec::new()) };
}

/// Parameters of one transition `G_{t-1} → G_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepParams {
    pub alpha: f64,
    pub law: WalkLengthLaw,
}

/// Transition kernel used by the bridge; parameters may vary by step.
#[derive(Debug, Clone)]
pub struct BridgeModel {
    pub selection: Selection,
    pub mode: GraphMode,
    fixed: Option<StepParams>,
    // index t - 2 for step t
    per_step: Vec<StepParams>,
}

impl BridgeModel {
    pub fn fixed(alpha: f64, law: WalkLengthLaw, selection: Selection, mode: GraphMode) -> Self {
        BridgeModel {
            selection,
            mode,
            fixed: Some(StepParams { alpha, law }),
            per_step: Vec::new(),
        }
    }

    pub fn from_config(cfg: &ModelConfig) -> Self {
        Self::fixed(cfg.alpha, cfg.law, cfg.selection, cfg.mode)
    }

    /// `params[t - 2]` drives step `t`, for `t = 2..=T`.
    pub fn per_step(selection: Selection, mode: GraphMode, params: Vec<StepParams>) -> Self {
        BridgeModel {
            selection,
            mode,
            fixed: None,
            per_step: params,
        }
    }

    pub fn params(&self, t: usize) -> StepParams {
        match self.fixed {
            Some(p) => p,
            None => self.per_step[t - 2],
        }
    }

    fn validate(&self, t_total: usize) -> Result<()> {
        let check = |p: &StepParams| -> Result<()> {
            if !(p.alpha >= 0.0 && p.alpha <= 1.0) {
                return Err(invalid(format!("alpha {} outside [0, 1]", p.alpha)));
            }
            p.law.validate()
        };
        match &self.fixed {
            Some(p) => check(p),
            None => {
                if self.per_step.len() + 1 != t_total {
                    return Err(invalid(format!(
                        "{} step parameters for {} edges",
                        self.per_step.len(),
                        t_total
                    )));
                }
                self.per_step.iter().try_for_each(check)
            }
        }
    }
}

/// Prefix graph `G_{t-1}` on the original vertex ids, in compressed rows.
pub(crate) struct PrefixState<'g> {
    g: &'g Graph,
    pub(crate) inserted: Vec<bool>,
    pub(crate) present: Vec<bool>,
    present_list: Vec<usize>,
    deg: Vec<u32>,
    offs: Vec<usize>,
    nbr: Vec<u32>,
    vol: usize,
}

impl<'g> PrefixState<'g> {
    pub(crate) fn new(g: &'g Graph, order: &[usize]) -> Self {
        let n = g.n_vertices();
        let mut inserted = vec![false; g.n_edges()];
        let mut present = vec![false; n];
        let mut deg = vec![0u32; n];
        for &e in order {
            inserted[e] = true;
            let (u, v) = g.edge(e);
            present[u] = true;
            present[v] = true;
            deg[u] += 1;
            deg[v] += 1;
        }
        let mut offs = vec![0usize; n + 1];
        for v in 0..n {
            offs[v + 1] = offs[v] + deg[v] as usize;
        }
        let mut fill = offs.clone();
        let mut nbr = vec![0u32; offs[n]];
        for &e in order {
            let (u, v) = g.edge(e);
            nbr[fill[u]] = v as u32;
            fill[u] += 1;
            nbr[fill[v]] = u as u32;
            fill[v] += 1;
        }
        let present_list = (0..n).filter(|&v| present[v]).collect();
        PrefixState {
            g,
            inserted,
            present,
            present_list,
            deg,
            offs,
            nbr,
            vol: 2 * order.len(),
        }
    }

    fn neighbors(&self, v: usize) -> &[u32] {
        &self.nbr[self.offs[v]..self.offs[v + 1]]
    }

    fn mu(&self, selection: Selection, v: usize) -> f64 {
        match selection {
            Selection::Uniform => 1.0 / self.present_list.len() as f64,
            Selection::SizeBiased => self.deg[v] as f64 / self.vol as f64,
        }
    }

    /// Kernel entries `Q_{sources[j], y}` for each requested `(j, y)`.
    fn kernel_entries(&self, coeffs: Option<&[f64]>, sources: &[usize], requests: &[(usize, usize)]) -> Vec<f64> {
        let Some(coeffs) = coeffs else {
            return requests
                .iter()
                .map(|&(_, y)| self.deg[y] as f64 / self.vol as f64)
                .collect();
        };
        let mut out = vec![0.0; requests.len()];
        let mut by_block: Vec<Vec<usize>> = vec![Vec::new(); sources.len().div_ceil(LANES)];
        for (i, &(j, _)) in requests.iter().enumerate() {
            by_block[j / LANES].push(i);
        }
        for (b, block) in sources.chunks(LANES).enumerate() {
            let reqs: Vec<(usize, usize)> = by_block[b].iter().map(|&i| (requests[i].0 - b * LANES, requests[i].1)).collect();
            let vals = match block.len() {
                1 => self.propagate::<1>(coeffs, block, &reqs),
                2 => self.propagate::<2>(coeffs, block, &reqs),
                3..=4 => self.propagate::<4>(coeffs, block, &reqs),
                5..=8 => self.propagate::<8>(coeffs, block, &reqs),
                _ => self.propagate::<LANES>(coeffs, block, &reqs),
            };
            for (&i, v) in by_block[b].iter().zip(vals) {
                out[i] = v;
            }
        }
        out
    }

    /// `Σ_j c_j T_j(P)` from up to `L` sources at once, one lane per source.
    fn propagate<const L: usize>(&self, coeffs: &[f64], sources: &[usize], requests: &[(usize, usize)]) -> Vec<f64> {
        #[cfg(target_arch = "x86_64")]
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: the required CPU feature was detected above
            return unsafe { self.propagate_avx2::<L>(coeffs, sources, requests) };
        }
        self.propagate_body::<L>(coeffs, sources, requests)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn propagate_avx2<const L: usize>(&self, coeffs: &[f64], sources: &[usize], requests: &[(usize, usize)]) -> Vec<f64> {
        self.propagate_body::<L>(coeffs, sources, requests)
    }

    #[inline(always)]
    fn propagate_body<const L: usize>(&self, coeffs: &[f64], sources: &[usize], requests: &[(usize, usize)]) -> Vec<f64> {
        let n = self.g.n_vertices();
        let inv = |v: usize| 1.0 / self.deg[v] as f64;
        let mut out = vec![0.0; requests.len()];
        // three n × L planes (prev, cur, next) and the active flags, all zero
        // between calls; taken out so a panic leaves an empty buffer behind
        let mut buf = SCRATCH.with(|s| std::mem::take(&mut *s.borrow_mut()));
        if buf.len() < 3 * n * L {
            buf.resize(3 * n * L, 0.0);
        }
        let mut active = ACTIVE.with(|s| std::mem::take(&mut *s.borrow_mut()));
        if active.len() < n {
            active.resize(n, false);
        }
        let mut planes = [0, n * L, 2 * n * L];
        let mut active_list = Vec::with_capacity(self.present_list.len());
        // rows t_j = e_s T_j(P), stored divided by degree
        for (j, &s) in sources.iter().enumerate() {
            buf[planes[1] + s * L + j] = inv(s);
            if !active[s] {
                active[s] = true;
                active_list.push(s);
            }
        }
        for (o, &(j, y)) in out.iter_mut().zip(requests) {
            if sources[j] == y {
                *o += coeffs[0];
            }
        }
        let picks: Vec<(usize, f64)> = requests.iter().map(|&(j, y)| (y * L + j, self.deg[y] as f64)).collect();
        for (step, &c) in coeffs.iter().enumerate().skip(1) {
            if active_list.len() < self.present_list.len() {
                for i in 0..active_list.len() {
                    for &y in self.neighbors(active_list[i]) {
                        let y = y as usize;
                        if !active[y] {
                            active[y] = true;
                            active_list.push(y);
                        }
                    }
                }
            }
            // t_1 = t_0 P, then t_{j+1} = 2 t_j P - t_{j-1}
            let (scale, back) = if step == 1 { (1.0, 0.0) } else { (2.0, 1.0) };
            let [prev, cur, next] = planes;
            let base = buf.as_mut_ptr();
            for &y in &active_list {
                let mut t = [0.0; L];
                for &x in self.neighbors(y) {
                    // SAFETY: neighbor ids are vertex ids below n, so the row
                    // lies inside the cur plane
                    let v = unsafe { &*(base.add(cur + x as usize * L) as *const [f64; L]) };
                    for l in 0..L {
                        t[l] += v[l];
                    }
                }
                let f = scale * inv(y);
                // SAFETY: y < n and the prev and next planes are disjoint
                let (p, nx) = unsafe {
                    (
                        &*(base.add(prev + y * L) as *const [f64; L]),
                        &mut *(base.add(next + y * L) as *mut [f64; L]),
                    )
                };
                let mut r = [0.0; L];
                for l in 0..L {
                    r[l] = t[l] * f - back * p[l];
                }
                *nx = r;
            }
            let plane = &buf[next..next + n * L];
            for (o, &(at, d)) in out.iter_mut().zip(&picks) {
                *o += c * d * plane[at];
            }
            planes = [cur, next, prev];
        }
        // only active rows were ever written
        for &y in &active_list {
            active[y] = false;
            for plane in [0, n * L, 2 * n * L] {
                buf[plane + y * L..plane + (y + 1) * L].fill(0.0);
            }
        }
        SCRATCH.with(|s| *s.borrow_mut() = buf);
        ACTIVE.with(|s| *s.borrow_mut() = active);
        // T_j(1) = 1: rescale so rows sum to one exactly
        let mass: f64 = coeffs.iter().sum();
        out.iter_mut().for_each(|o| *o /= mass);
        out
    }

    /// Feasible next edges with their unnormalized one-step probabilities.
    pub(crate) fn expand(&self, model: &BridgeModel, params: &StepParams, coeffs: Option<&[f64]>) -> Expansion {
        let g = self.g;
        let simple = model.mode == GraphMode::Simple;
        let mut edges = Vec::new();
        let mut need = vec![false; g.n_vertices()];
        let mut pair_count = vec![0u32; g.n_vertices()];
        for (e, &(a, b)) in g.edges().iter().enumerate() {
            if self.inserted[e] || !(self.present[a] || self.present[b]) {
                continue;
            }
            edges.push(e);
            if self.present[a] && self.present[b] {
                if a == b {
                    need[a] = true;
                } else {
                    pair_count[a] += 1;
                    pair_count[b] += 1;
                }
            } else if simple {
                need[if self.present[a] { a } else { b }] = true;
            }
        }
        // greedy cover of the pair edges
        for &e in &edges {
            let (a, b) = g.edge(e);
            if a != b && self.present[a] && self.present[b] && !need[a] && !need[b] {
                let pick = if pair_count[a] >= pair_count[b] { a } else { b };
                need[pick] = true;
            }
        }
        let sources: Vec<usize> = (0..g.n_vertices()).filter(|&v| need[v]).collect();
        let mut col = vec![usize::MAX; g.n_vertices()];
        for (j, &s) in sources.iter().enumerate() {
            col[s] = j;
        }
        // which kernel entries each edge needs, as (source column, target)
        let mut requests = Vec::new();
        let mut spans = Vec::with_capacity(edges.len());
        for &e in &edges {
            let (a, b) = g.edge(e);
            let start = requests.len();
            if self.present[a] && self.present[b] {
                if col[a] != usize::MAX {
                    requests.push((col[a], b));
                } else {
                    requests.push((col[b], a));
                }
            } else if simple {
                let x = if self.present[a] { a } else { b };
                requests.push((col[x], x));
                requests.extend(self.neighbors(x).iter().map(|&w| (col[x], w as usize)));
            }
            spans.push(start..requests.len());
        }
        let vals = self.kernel_entries(coeffs, &sources, &requests);
        let alpha = params.alpha;
        let sel = model.selection;
        let mut q = Vec::with_capacity(edges.len());
        for (&e, span) in edges.iter().zip(spans) {
            let (a, b) = g.edge(e);
            let p = if self.present[a] && self.present[b] {
                let x = vals[span.start];
                if a == b {
                    (1.0 - alpha) * self.mu(sel, a) * x
                } else {
                    let (da, db) = (self.deg[a] as f64, self.deg[b] as f64);
                    // reversibility: d_a Q_ab = d_b Q_ba
                    let (qab, qba) = if col[a] != usize::MAX {
                        (x, x * da / db)
                    } else {
                        (x * db / da, x)
                    };
                    (1.0 - alpha) * (self.mu(sel, a) * qab + self.mu(sel, b) * qba)
                }
            } else {
                let x = if self.present[a] { a } else { b };
                if simple {
                    let closed: f64 = vals[span].iter().sum();
                    self.mu(sel, x) * (alpha + (1.0 - alpha) * closed)
                } else {
                    alpha * self.mu(sel, x)
                }
            };
            q.push(p);
        }
        let tau = q.iter().sum();
        Expansion { edges, q, tau }
    }
}

pub(crate) struct Expansion {
    pub(crate) edges: Vec<usize>,
    pub(crate) q: Vec<f64>,
    pub(crate) tau: f64,
}

/// Chebyshev coefficients of the walk-length pgf on `[-1, 1]`; `None` for the
/// degenerate limit, whose kernel is the degree-biased law.
fn pmf_for(params: &StepParams) -> Option<Vec<f64>> {
    chebyshev_coeffs(&params.law)
}

/// Discarded coefficients sum below this.
const CHEB_TAIL_EPS: f64 = 1e-13;
const CHEB_MAX_NODES: usize = 1 << 14;

pub(crate) fn chebyshev_coeffs(law: &WalkLengthLaw) -> Option<Vec<f64>> {
    if let WalkLengthLaw::LimitDegenerate = law {
        return None;
    }
    let mut m = 64;
    loop {
        let theta: Vec<f64> = (0..m).map(|i| std::f64::consts::PI * (i as f64 + 0.5) / m as f64).collect();
        let h: Vec<f64> = theta.iter().map(|t| law.pgf_unchecked(t.cos())).collect();
        let mut c: Vec<f64> = (0..m)
            .map(|j| 2.0 / m as f64 * h.iter().zip(&theta).map(|(hv, t)| hv * (j as f64 * t).cos()).sum::<f64>())
            .collect();
        c[0] /= 2.0;
        let mut tail = 0.0;
        let mut cut = m;
        while cut > 1 && tail + c[cut - 1].abs() < CHEB_TAIL_EPS {
            cut -= 1;
            tail += c[cut].abs();
        }
        // trust the cut only well inside the node count
        if cut <= m / 2 || m >= CHEB_MAX_NODES {
            c.truncate(cut);
            return Some(c);
        }
        m *= 2;
    }
}

/// Feasible next edges after `prefix` with their unnormalized probabilities.
pub fn step_probabilities(g: &Graph, model: &BridgeModel, prefix: &[usize]) -> Result<Vec<(usize, f64)>> {
    if prefix.is_empty() || prefix.len() >= g.n_edges() {
        return Err(invalid("prefix must hold between 1 and T-1 edges"));
    }
    let params = model.params(prefix.len() + 1);
    let pmf = pmf_for(&params);
    let ex = PrefixState::new(g, prefix).expand(model, &params, pmf.as_deref());
    Ok(ex.edges.into_iter().zip(ex.q).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Resampling {
    Multinomial,
    Stratified,
}

#[derive(Debug, Clone, Copy)]
pub struct BridgeOptions {
    pub n_particles: usize,
    pub resampling: Resampling,
}

impl BridgeOptions {
    pub fn new(n_particles: usize) -> Self {
        BridgeOptions {
            n_particles,
            resampling: Resampling::Multinomial,
        }
    }
}

/// Full record of one SMC sweep.
#[derive(Debug, Clone, Serialize)]
pub struct ParticleSystem {
    pub n_particles: usize,
    /// Complete orders held by the particles before the final draw.
    pub paths: Vec<Vec<usize>>,
    /// `raw_weights[t - 1][i] = w̃^i_t`; `w̃_1 = 1`.
    pub raw_weights: Vec<Vec<f64>>,
    /// Feasibility of each particle's first edge.
    pub first_feasible: Vec<bool>,
    /// `ancestors[t - 2][i]`: parent slot of particle `i` at step `t`.
    pub ancestors: Vec<Vec<usize>>,
    /// Normalized weights of the complete paths.
    pub final_weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BridgeOutput {
    /// `N` complete orders drawn from the final weights, in random order.
    pub histories: Vec<Vec<usize>>,
    /// `log L̂`; `-inf` only when no particle starts from a feasible edge.
    pub loglik: f64,
    pub system: ParticleSystem,
}

/// `log L̂` from a completed system.
pub fn estimate_bridge_likelihood(system: &ParticleSystem) -> f64 {
    let n = system.n_particles as f64;
    let t_total = system.raw_weights.len() + 1;
    let h = |t: usize, i: usize| -> f64 {
        if t == 1 && !system.first_feasible[i] {
            0.0
        } else {
            1.0
        }
    };
    if t_total == 2 {
        // single forced step: w̃_1 holds h_1 · q(G_2 | Π_1)
        let s: f64 = system.raw_weights[0].iter().sum();
        return (s / n).ln();
    }
    let mut ll = 0.0;
    for t in 2..t_total {
        let w = &system.raw_weights[t - 1];
        let prev = &system.raw_weights[t - 2];
        let num: f64 = prev.iter().enumerate().map(|(i, x)| h(t - 1, i) * x).sum();
        let den: f64 = prev.iter().sum();
        ll += (w.iter().sum::<f64>() / n).ln() + (num / den).ln();
    }
    ll
}

fn resample<R: Rng>(weights: &[f64], count: usize, scheme: Resampling, rng: &mut R) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return (0..count).map(|_| rng.random_range(0..weights.len())).collect();
    }
    let mut points: Vec<f64> = match scheme {
        Resampling::Multinomial => (0..count).map(|_| rng.random::<f64>() * total).collect(),
        Resampling::Stratified => (0..count)
            .map(|i| (i as f64 + rng.random::<f64>()) / count as f64 * total)
            .collect(),
    };
    points.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(count);
    let mut acc = 0.0;
    let mut j = 0;
    for p in points {
        while j + 1 < weights.len() && acc + weights[j] <= p {
            acc += weights[j];
            j += 1;
        }
        out.push(j);
    }
    out
}

fn draw_index<R: Rng>(weights: &[f64], total: f64, rng: &mut R) -> usize {
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

const STREAM_INIT: u64 = 0;
const STREAM_RESAMPLE: u64 = 1;
const STREAM_PROPOSE: u64 = 2;
const STREAM_FINAL: u64 = 3;

/// Runs the bridge SMC. With `reference`, runs conditional SMC that keeps the
/// reference order in slot 0 through every resampling step.
pub fn run_bridge<R: Rng + ?Sized>(
    g: &Graph,
    model: &BridgeModel,
    opts: BridgeOptions,
    reference: Option<&[usize]>,
    rng: &mut R,
) -> Result<BridgeOutput> {
    let t_total = g.n_edges();
    let n = opts.n_particles;
    if t_total < 2 {
        return Err(invalid("bridge needs at least two edges"));
    }
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    if g.mode() != model.mode {
        return Err(invalid("graph mode differs from model mode"));
    }
    model.validate(t_total)?;
    if n < 1 {
        return Err(invalid("need at least one particle"));
    }
    if let Some(r) = reference {
        if n < 2 {
            return Err(invalid("conditional SMC needs at least two particles"));
        }
        History::from_order(g, r.to_vec())?;
    }
    let seed: u64 = rng.random();
    let pinned = reference.is_some();

    let mut init = stream(seed, &[STREAM_INIT]);
    let mut paths: Vec<Vec<usize>> = (0..n)
        .map(|i| match reference {
            Some(r) if i == 0 => vec![r[0]],
            _ => vec![init.random_range(0..t_total)],
        })
        .collect();
    let first_feasible: Vec<bool> = paths
        .iter()
        .map(|p| {
            let (u, v) = g.edge(p[0]);
            u != v
        })
        .collect();
    let mut raw_weights = vec![vec![1.0; n]];
    let mut ancestors = Vec::new();

    if t_total == 2 {
        let params = model.params(2);
        let pmf = pmf_for(&params);
        let w: Vec<f64> = paths
            .iter_mut()
            .zip(&first_feasible)
            .map(|(p, &ok)| {
                let last = 1 - p[0];
                p.push(last);
                if !ok {
                    return 0.0;
                }
                let ex = PrefixState::new(g, &p[..1]).expand(model, &params, pmf.as_deref());
                ex.edges.iter().position(|&e| e == last).map_or(0.0, |i| ex.q[i])
            })
            .collect();
        raw_weights[0] = w;
        return finish(paths, raw_weights, first_feasible, ancestors, seed, n);
    }

    for t in 2..t_total {
        let prev = &raw_weights[t - 2];
        let resample_w: Vec<f64> = prev
            .iter()
            .enumerate()
            .map(|(i, &w)| if t == 2 && !first_feasible[i] { 0.0 } else { w })
            .collect();
        let mut rs = stream(seed, &[STREAM_RESAMPLE, t as u64]);
        let anc: Vec<usize> = if pinned {
            let mut a = vec![0];
            a.extend(resample(&resample_w, n - 1, opts.resampling, &mut rs));
            a
        } else {
            resample(&resample_w, n, opts.resampling, &mut rs)
        };

        let params = model.params(t);
        let pmf = pmf_for(&params);
        let mut parents: Vec<usize> = anc.clone();
        parents.sort_unstable();
        parents.dedup();
        let expansions: HashMap<usize, Expansion> = parents
            .par_iter()
            .map(|&a| (a, PrefixState::new(g, &paths[a]).expand(model, &params, pmf.as_deref())))
            .collect();

        let last = t == t_total - 1;
        let final_params = model.params(t_total);
        let final_pmf = if last { pmf_for(&final_params) } else { None };
        let stepped: Vec<(Vec<usize>, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let ex = &expansions[&anc[i]];
                let mut path = paths[anc[i]].clone();
                let next = if pinned && i == 0 {
                    reference.unwrap()[t - 1]
                } else {
                    let mut pr: ChaCha8Rng = stream(seed, &[STREAM_PROPOSE, t as u64, i as u64]);
                    ex.edges[draw_index(&ex.q, ex.tau, &mut pr)]
                };
                path.push(next);
                let mut w = ex.tau;
                if last {
                    let st = PrefixState::new(g, &path);
                    let fx = st.expand(model, &final_params, final_pmf.as_deref());
                    let remaining = (0..t_total).find(|&e| !st.inserted[e]).expect("one edge left");
                    let qf = fx.edges.iter().position(|&e| e == remaining).map_or(0.0, |j| fx.q[j]);
                    path.push(remaining);
                    w *= qf;
                }
                (path, w)
            })
            .collect();
        let (new_paths, w): (Vec<_>, Vec<_>) = stepped.into_iter().unzip();
        paths = new_paths;
        raw_weights.push(w);
        ancestors.push(anc);
    }
    finish(paths, raw_weights, first_feasible, ancestors, seed, n)
}

fn finish(
    paths: Vec<Vec<usize>>,
    raw_weights: Vec<Vec<f64>>,
    first_feasible: Vec<bool>,
    ancestors: Vec<Vec<usize>>,
    seed: u64,
    n: usize,
) -> Result<BridgeOutput> {
    let last = raw_weights.last().unwrap();
    let total: f64 = last.iter().sum();
    let final_weights: Vec<f64> = if total > 0.0 {
        last.iter().map(|w| w / total).collect()
    } else {
        vec![1.0 / n as f64; n]
    };
    let mut fr = stream(seed, &[STREAM_FINAL]);
    let mut picks = resample(&final_weights, n, Resampling::Multinomial, &mut fr);
    // resampled indices come out sorted; each history must be a draw on its own
    picks.shuffle(&mut fr);
    let histories = picks.iter().map(|&i| paths[i].clone()).collect();
    let system = ParticleSystem {
        n_particles: n,
        paths,
        raw_weights,
        first_feasible,
        ancestors,
        final_weights,
    };
    let loglik = estimate_bridge_likelihood(&system);
    Ok(BridgeOutput {
        histories,
        loglik,
        system,
    })
}

/// One feasible order with its joint probability.
#[derive(Debug, Clone, Serialize)]
pub struct WeightedOrder {
    pub order: Vec<usize>,
    /// `(1/T) Π_t q^t(edge_t | prefix)`.
    pub joint: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExactPosterior {
    pub orders: Vec<WeightedOrder>,
    /// Sum of the joints: `p(G_T | G_1)` with the uniform first-edge factor.
    pub marginal: f64,
}

impl ExactPosterior {
    pub fn posterior(&self, idx: usize) -> f64 {
        self.orders[idx].joint / self.marginal
    }

    /// Posterior law of the first inserted edge, indexed by edge.
    pub fn first_edge_marginal(&self, t_total: usize) -> Vec<f64> {
        let mut m = vec![0.0; t_total];
        for o in &self.orders {
            m[o.order[0]] += o.joint / self.marginal;
        }
        m
    }
}

pub const EXACT_MAX_EDGES: usize = 8;

/// Brute-force enumeration of every feasible order, using dense spectral
/// kernels on relabeled prefix graphs.
pub fn exact_posterior(g: &Graph, model: &BridgeModel) -> Result<ExactPosterior> {
    let t_total = g.n_edges();
    if t_total > EXACT_MAX_EDGES {
        return Err(Error::TooLarge {
            edges: t_total,
            limit: EXACT_MAX_EDGES,
        });
    }
    if t_total < 2 {
        return Err(invalid("need at least two edges"));
    }
    model.validate(t_total)?;
    let mut orders = Vec::new();
    for first in 0..t_total {
        let (u, v) = g.edge(first);
        if u == v {
            continue;
        }
        let mut prefix = vec![first];
        enumerate(g, model, &mut prefix, 1.0 / t_total as f64, &mut orders)?;
    }
    let marginal = orders.iter().map(|o| o.joint).sum();
    Ok(ExactPosterior { orders, marginal })
}

fn enumerate(
    g: &Graph,
    model: &BridgeModel,
    prefix: &mut Vec<usize>,
    joint: f64,
    out: &mut Vec<WeightedOrder>,
) -> Result<()> {
    let t_total = g.n_edges();
    if prefix.len() == t_total {
        out.push(WeightedOrder {
            order: prefix.clone(),
            joint,
        });
        return Ok(());
    }
    for (e, q) in dense_step_probabilities(g, model, prefix)? {
        if q > 0.0 {
            prefix.push(e);
            enumerate(g, model, prefix, joint * q, out)?;
            prefix.pop();
        }
    }
    Ok(())
}

/// One-step probabilities of the feasible edges via a dense eigensolve.
pub fn dense_step_probabilities(g: &Graph, model: &BridgeModel, prefix: &[usize]) -> Result<Vec<(usize, f64)>> {
    let t = prefix.len() + 1;
    let p = model.params(t);
    let pre = subgraph_prefix(g, prefix, prefix.len())?;
    let h = &pre.graph;
    let q = rw_prob_matrix(h, &p.law)?;
    let mu = selection_weights(h, model.selection);
    let mut compact = vec![usize::MAX; g.n_vertices()];
    for (c, &v) in pre.vertex_map.iter().enumerate() {
        compact[v] = c;
    }
    let mut inserted = vec![false; g.n_edges()];
    for &e in prefix {
        inserted[e] = true;
    }
    let skel = h.skeleton();
    let mut out = Vec::new();
    for e in feasible_edges(g, &pre.present, &inserted) {
        let (a, b) = g.edge(e);
        let (ca, cb) = (compact[a], compact[b]);
        let prob = match (ca != usize::MAX, cb != usize::MAX) {
            (true, true) if a == b => (1.0 - p.alpha) * mu[ca] * q[(ca, ca)],
            (true, true) => (1.0 - p.alpha) * (mu[ca] * q[(ca, cb)] + mu[cb] * q[(cb, ca)]),
            (ia, _) => {
                let x = if ia { ca } else { cb };
                match model.mode {
                    GraphMode::Multigraph => p.alpha * mu[x],
                    GraphMode::Simple => {
                        let closed: f64 = q[(x, x)] + skel[x].iter().map(|&w| q[(x, w)]).sum::<f64>();
                        mu[x] * (p.alpha + (1.0 - p.alpha) * closed)
                    }
                }
            }
        };
        out.push((e, prob));
    }
    Ok(out)
}
