//! Goodness-of-fit statistics and posterior predictive checks.
//!
//! Three normalized statistics describe a simple graph: the degree
//! distribution (ND), edgewise shared partners (NESP) and pairwise geodesics
//! (NPG). Predictive checks compare them between data and graphs simulated
//! from posterior draws by total variation distance.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::generative::{acl_generate, er_generate, rw_generate, ModelConfig, Selection};
use crate::graph::{Graph, GraphMode};
use crate::law::WalkLengthLaw;
use crate::pmcmc::Chain;
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StatKind {
    #[serde(rename = "ND")]
    Degree,
    #[serde(rename = "NESP")]
    SharedPartners,
    #[serde(rename = "NPG")]
    Geodesic,
}

impl StatKind {
    pub const ALL: [StatKind; 3] = [StatKind::Degree, StatKind::SharedPartners, StatKind::Geodesic];

    pub fn name(self) -> &'static str {
        match self {
            StatKind::Degree => "ND",
            StatKind::SharedPartners => "NESP",
            StatKind::Geodesic => "NPG",
        }
    }
}

/// Statistic bucket; `Infinite` holds disconnected pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StatKey {
    Finite(usize),
    Infinite,
}

impl fmt::Display for StatKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatKey::Finite(k) => write!(f, "{k}"),
            StatKey::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for StatKey {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Integer counts per bucket over a fixed normalizer: vertices for ND, edges
/// for NESP, dyads for NPG.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatVector {
    pub kind: StatKind,
    pub counts: BTreeMap<StatKey, u64>,
    pub normalizer: u64,
}

impl StatVector {
    pub fn value(&self, key: StatKey) -> f64 {
        match self.counts.get(&key) {
            Some(&c) if self.normalizer > 0 => c as f64 / self.normalizer as f64,
            _ => 0.0,
        }
    }

    /// Normalized buckets.
    pub fn values(&self) -> BTreeMap<StatKey, f64> {
        self.counts.keys().map(|&k| (k, self.value(k))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitStatistics {
    pub nd: StatVector,
    pub nesp: StatVector,
    pub npg: StatVector,
}

impl FitStatistics {
    pub fn get(&self, kind: StatKind) -> &StatVector {
        match kind {
            StatKind::Degree => &self.nd,
            StatKind::SharedPartners => &self.nesp,
            StatKind::Geodesic => &self.npg,
        }
    }
}

/// ND, NESP and NPG of a simple graph.
pub fn compute_fit_statistics(g: &Graph) -> Result<FitStatistics> {
    if g.mode() != GraphMode::Simple {
        return Err(Error::UnsupportedMode(
            "fit statistics need a simple graph; simplify the multigraph first".into(),
        ));
    }
    let n = g.n_vertices();
    let adj = g.skeleton();

    let mut nd = BTreeMap::new();
    for v in 0..n {
        *nd.entry(StatKey::Finite(adj[v].len())).or_insert(0) += 1;
    }

    let sets: Vec<BTreeSet<usize>> = adj.iter().map(|a| a.iter().copied().collect()).collect();
    let mut nesp = BTreeMap::new();
    for &(u, v) in g.edges() {
        let (small, large) = if sets[u].len() <= sets[v].len() { (u, v) } else { (v, u) };
        let shared = sets[small].iter().filter(|w| sets[large].contains(w)).count();
        *nesp.entry(StatKey::Finite(shared)).or_insert(0) += 1;
    }

    let mut npg = BTreeMap::new();
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        dist.fill(usize::MAX);
        dist[s] = 0;
        queue.push_back(s);
        while let Some(x) = queue.pop_front() {
            for &y in &adj[x] {
                if dist[y] == usize::MAX {
                    dist[y] = dist[x] + 1;
                    queue.push_back(y);
                }
            }
        }
        for &d in &dist[s + 1..] {
            let key = if d == usize::MAX { StatKey::Infinite } else { StatKey::Finite(d) };
            *npg.entry(key).or_insert(0) += 1;
        }
    }

    let n64 = n as u64;
    Ok(FitStatistics {
        nd: StatVector {
            kind: StatKind::Degree,
            counts: nd,
            normalizer: n64,
        },
        nesp: StatVector {
            kind: StatKind::SharedPartners,
            counts: nesp,
            normalizer: g.n_edges() as u64,
        },
        npg: StatVector {
            kind: StatKind::Geodesic,
            counts: npg,
            normalizer: n64 * n64.saturating_sub(1) / 2,
        },
    })
}

/// `½ Σ_k |p_k − q_k|` over the union of buckets, each side renormalized.
pub fn tv_distance(p: &StatVector, q: &StatVector) -> Result<f64> {
    if p.kind != q.kind {
        return Err(invalid(format!("cannot compare {} with {}", p.kind.name(), q.kind.name())));
    }
    let total = |v: &StatVector| v.counts.values().sum::<u64>() as f64;
    let (tp, tq) = (total(p), total(q));
    if tp == 0.0 || tq == 0.0 {
        return Err(invalid(format!("empty {} statistic", p.kind.name())));
    }
    let keys: BTreeSet<StatKey> = p.counts.keys().chain(q.counts.keys()).copied().collect();
    let get = |v: &StatVector, k: &StatKey| *v.counts.get(k).unwrap_or(&0) as f64;
    Ok(0.5 * keys.iter().map(|k| (get(p, k) / tp - get(q, k) / tq).abs()).sum::<f64>())
}

/// `ρ = 1 + α / (2 − α)`.
pub fn rho_of_alpha(alpha: f64) -> f64 {
    1.0 + alpha / (2.0 - alpha)
}

/// Yule–Simon pmf `ρ Γ(d) Γ(1+ρ) / Γ(d+1+ρ)`.
pub fn yule_simon_pmf(d: usize, rho: f64) -> Result<f64> {
    if d < 1 {
        return Err(invalid("Yule-Simon support starts at 1"));
    }
    if !(rho > 0.0) {
        return Err(invalid(format!("rho must be positive, got {rho}")));
    }
    let d = d as f64;
    Ok(rho * (ln_gamma(d) + ln_gamma(1.0 + rho) - ln_gamma(d + 1.0 + rho)).exp())
}

const HYP_EPS: f64 = 1e-16;
const HYP_MAX_TERMS: usize = 10_000_000;

/// Gauss hypergeometric series `₂F₁(a, b; c; z)` for `|z| < 1`.
pub fn hyp2f1(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    if !(z.abs() < 1.0) {
        return Err(Error::Numerical(format!("hypergeometric series diverges at z = {z}")));
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 0..HYP_MAX_TERMS {
        let nf = n as f64;
        let ratio = (a + nf) * (b + nf) / ((c + nf) * (nf + 1.0)) * z;
        term *= ratio;
        sum += term;
        // remaining terms shrink at least geometrically once the ratio settles
        let r = ratio.abs().max(z.abs());
        if term == 0.0 || (r < 1.0 && (term * r / (1.0 - r)).abs() <= HYP_EPS * sum.abs()) {
            return Ok(sum);
        }
    }
    Err(Error::Numerical("hypergeometric series did not converge".into()))
}

/// `E[ξ_j^k]`, the `k`-th moment of the scaled degree limit of the `j`-th
/// vertex, for `j ≥ 2`.
pub fn theoretical_moment(k: f64, j: usize, alpha: f64) -> Result<f64> {
    if j < 2 {
        return Err(invalid("j must be at least 2; use conditional_moment for the first vertex"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if !(k >= 0.0) {
        return Err(invalid(format!("moment order must be non-negative, got {k}")));
    }
    let kr = k / rho_of_alpha(alpha);
    let jm = (j - 1) as f64;
    let f = hyp2f1(1.0 + kr, kr, jm + kr, 1.0 - alpha)?;
    Ok((ln_gamma(k + 1.0) + ln_gamma(jm) - ln_gamma(jm + kr) + kr * alpha.ln()).exp() * f)
}

/// `E[ξ_j^k | S_j = s] = Γ(s) Γ(k+1) / Γ(s + k/ρ)`.
pub fn conditional_moment(k: f64, arrival: usize, rho: f64) -> Result<f64> {
    if arrival < 1 {
        return Err(invalid("arrival step starts at 1"));
    }
    let s = arrival as f64;
    Ok((ln_gamma(s) + ln_gamma(k + 1.0) - ln_gamma(s + k / rho)).exp())
}

/// Generator behind a predictive check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PpdModel {
    RwUniform,
    RwSizeBiased,
    Acl,
    Er,
}

impl PpdModel {
    pub fn name(self) -> &'static str {
        match self {
            PpdModel::RwUniform => "RW_U",
            PpdModel::RwSizeBiased => "RW_SB",
            PpdModel::Acl => "ACL",
            PpdModel::Er => "ER",
        }
    }
}

impl FromStr for PpdModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "rw_u" | "uniform" => Ok(PpdModel::RwUniform),
            "rw_sb" | "size_biased" => Ok(PpdModel::RwSizeBiased),
            "acl" => Ok(PpdModel::Acl),
            "er" => Ok(PpdModel::Er),
            _ => Err(invalid(format!("unknown model {s:?}; expected rw_u, rw_sb, acl or er"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PpdDraw {
    /// Parameters used; `None` for ER.
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub stats: FitStatistics,
    /// TV to the data, indexed like [`StatKind::ALL`].
    pub tv: [f64; 3],
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TvSummary {
    pub kind: StatKind,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PpdResult {
    pub model: PpdModel,
    pub data: FitStatistics,
    pub draws: Vec<PpdDraw>,
    pub tv_table: Vec<TvSummary>,
}

impl PpdResult {
    pub fn tv_values(&self, kind: StatKind) -> Vec<f64> {
        let i = StatKind::ALL.iter().position(|&k| k == kind).unwrap();
        self.draws.iter().map(|d| d.tv[i]).collect()
    }
}

/// Posterior predictive check: each draw takes `θ` uniformly from `chain`,
/// simulates a graph of the data's size and compares its statistics to the
/// data. RW and ACL graphs match the edge count; ACL output is simplified
/// before comparison. ER matches vertex and edge counts and ignores `chain`.
pub fn ppd_run<R: Rng + ?Sized>(
    g_data: &Graph,
    chain: &Chain,
    model: PpdModel,
    n_samples: usize,
    rng: &mut R,
) -> Result<PpdResult> {
    if model != PpdModel::Er && chain.samples.is_empty() {
        return Err(invalid("posterior chain is empty"));
    }
    let data = compute_fit_statistics(g_data)?;
    let (n, m) = (g_data.n_vertices(), g_data.n_edges());
    let seed: u64 = rng.random();
    let draws: Vec<PpdDraw> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut r = stream(seed, &[i as u64]);
            let pick = |r: &mut rand_chacha::ChaCha8Rng| &chain.samples[r.random_range(0..chain.samples.len())];
            let (alpha, lambda, g) = match model {
                PpdModel::RwUniform | PpdModel::RwSizeBiased => {
                    let s = pick(&mut r);
                    let sel = if model == PpdModel::RwUniform { Selection::Uniform } else { Selection::SizeBiased };
                    let cfg = ModelConfig::new(s.alpha, WalkLengthLaw::poisson(s.lambda), sel, GraphMode::Simple);
                    (Some(s.alpha), Some(s.lambda), rw_generate(&cfg, m, &mut r)?.graph)
                }
                PpdModel::Acl => {
                    let s = pick(&mut r);
                    (Some(s.alpha), None, acl_generate(s.alpha, m, &mut r)?.graph.simplify())
                }
                PpdModel::Er => (None, None, er_generate(n, m, &mut r)?),
            };
            let stats = compute_fit_statistics(&g)?;
            let mut tv = [0.0; 3];
            for (t, kind) in tv.iter_mut().zip(StatKind::ALL) {
                *t = tv_distance(data.get(kind), stats.get(kind))?;
            }
            Ok(PpdDraw { alpha, lambda, stats, tv })
        })
        .collect::<Result<_>>()?;
    let tv_table = StatKind::ALL
        .iter()
        .enumerate()
        .map(|(j, &kind)| {
            let xs: Vec<f64> = draws.iter().map(|d| d.tv[j]).collect();
            let (mean, sd) = mean_sd(&xs);
            TvSummary { kind, mean, sd }
        })
        .collect();
    Ok(PpdResult {
        model,
        data,
        draws,
        tv_table,
    })
}

/// Mean and sample standard deviation; `sd = 0` for fewer than two values.
fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `model,statistic,mean,sd`, one row per model and statistic.
pub fn write_tv_csv<W: Write>(mut w: W, results: &[PpdResult]) -> Result<()> {
    writeln!(w, "model,statistic,mean,sd")?;
    for r in results {
        for s in &r.tv_table {
            writeln!(w, "{},{},{},{}", r.model.name(), s.kind.name(), s.mean, s.sd)?;
        }
    }
    Ok(())
}
