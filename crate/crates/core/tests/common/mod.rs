//! Brute-force oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rwnet::generative::{selection_weights, Selection};
use rwnet::graph::subgraph_prefix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rwnet::pmcmc::{pg_step, LatentState, PgConfig, PgScheme, PgState, Priors};
use rwnet::spectral::transition_matrix;
use rwnet::{Graph, GraphMode};
use statrs::function::gamma::ln_gamma;

/// Every feasible insertion order of `g`, depth first.
pub fn feasible_orders(g: &Graph) -> Vec<Vec<usize>> {
    fn rec(g: &Graph, prefix: &mut Vec<usize>, present: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == g.n_edges() {
            out.push(prefix.clone());
            return;
        }
        for e in 0..g.n_edges() {
            if prefix.contains(&e) {
                continue;
            }
            let (u, v) = g.edge(e);
            let ok = if prefix.is_empty() { u != v } else { present[u] > 0 || present[v] > 0 };
            if !ok {
                continue;
            }
            prefix.push(e);
            present[u] += 1;
            present[v] += 1;
            rec(g, prefix, present, out);
            present[u] -= 1;
            present[v] -= 1;
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(g, &mut Vec::new(), &mut vec![0; g.n_vertices()], &mut out);
    out
}

/// One enumerated state `(order, B, K)` with its posterior probability.
#[derive(Debug, Clone)]
pub struct LatentConfig {
    pub order: Vec<usize>,
    pub b: Vec<bool>,
    pub k: Vec<u32>,
    pub prob: f64,
}

/// `f_t(B, K)`: probability of the step-`t` edge given the prefix, `B` and
/// walk length `K + 1`, for `K = 0..=k_max`. Returned as `[B=0 row, B=1 row]`.
fn step_table(g: &Graph, order: &[usize], t: usize, selection: Selection, k_max: usize) -> [Vec<f64>; 2] {
    let pre = subgraph_prefix(g, order, t - 1).unwrap();
    let h = &pre.graph;
    let mu = selection_weights(h, selection);
    let idx = |v: usize| pre.vertex_map.iter().position(|&w| w == v);
    let (a, b) = g.edge(order[t - 1]);
    let p1 = transition_matrix(h);
    let mut pw: DMatrix<f64> = p1.clone();
    let mut zero = vec![0.0; k_max + 1];
    let mut one = vec![0.0; k_max + 1];
    match (idx(a), idx(b)) {
        (Some(ca), Some(cb)) => {
            for k in 0..=k_max {
                zero[k] = if ca == cb {
                    mu[ca] * pw[(ca, ca)]
                } else {
                    mu[ca] * pw[(ca, cb)] + mu[cb] * pw[(cb, ca)]
                };
                pw = &pw * &p1;
            }
        }
        (ca, cb) => {
            let x = ca.or(cb).unwrap();
            let closed: Vec<usize> = (0..h.n_vertices()).filter(|&u| u == x || h.has_edge(x, u)).collect();
            for k in 0..=k_max {
                one[k] = mu[x];
                if g.mode() == GraphMode::Simple {
                    zero[k] = mu[x] * closed.iter().map(|&u| pw[(x, u)]).sum::<f64>();
                }
                pw = &pw * &p1;
            }
        }
    }
    [zero, one]
}

/// Law of `(α, λ)` behind the latent variables.
#[derive(Debug, Clone, Copy)]
pub enum Theta {
    Integrated(Priors),
    Fixed(f64, f64),
}

/// Exact joint posterior of `(order, B, K)` given `G_T`, each `K_t`
/// truncated at `k_max`.
pub fn latent_posterior(g: &Graph, theta: Theta, selection: Selection, k_max: usize) -> Vec<LatentConfig> {
    let t_total = g.n_edges();
    let n = t_total - 1;
    let ln_beta = |x: f64, y: f64| ln_gamma(x) + ln_gamma(y) - ln_gamma(x + y);
    let mut out = Vec::new();
    for order in feasible_orders(g) {
        let tables: Vec<[Vec<f64>; 2]> = (2..=t_total).map(|t| step_table(g, &order, t, selection, k_max)).collect();
        for bmask in 0..(1u32 << n) {
            let b: Vec<bool> = (0..n).map(|i| bmask >> i & 1 == 1).collect();
            let ones = b.iter().filter(|&&x| x).count() as f64;
            let ln_b = match theta {
                Theta::Integrated(p) => {
                    let (aa, ba) = p.alpha_beta;
                    ln_beta(aa + ones, ba + n as f64 - ones) - ln_beta(aa, ba)
                }
                Theta::Fixed(alpha, _) => ones * alpha.ln() + (n as f64 - ones) * (1.0 - alpha).ln(),
            };
            let mut k = vec![0u32; n];
            loop {
                let mut f = 1.0;
                for i in 0..n {
                    f *= tables[i][b[i] as usize][k[i] as usize];
                }
                if f > 0.0 {
                    let ks: f64 = k.iter().map(|&x| x as f64).sum();
                    let ln_fact = k.iter().map(|&x| ln_gamma(x as f64 + 1.0)).sum::<f64>();
                    let ln_k = match theta {
                        Theta::Integrated(p) => {
                            let (sl, rl) = p.lambda_gamma;
                            sl * rl.ln() - ln_gamma(sl) + ln_gamma(sl + ks) - (sl + ks) * (rl + n as f64).ln() - ln_fact
                        }
                        Theta::Fixed(_, lambda) => -(n as f64) * lambda + ks * lambda.ln() - ln_fact,
                    };
                    out.push(LatentConfig {
                        order: order.clone(),
                        b: b.clone(),
                        k: k.clone(),
                        prob: f * (ln_b + ln_k).exp() / t_total as f64,
                    });
                }
                // odometer over K
                let mut i = 0;
                while i < n {
                    k[i] += 1;
                    if k[i] as usize <= k_max {
                        break;
                    }
                    k[i] = 0;
                    i += 1;
                }
                if i == n {
                    break;
                }
            }
        }
    }
    let total: f64 = out.iter().map(|c| c.prob).sum();
    out.iter_mut().for_each(|c| c.prob /= total);
    out
}

/// Posterior marginal over orders, indexed like `feasible_orders`.
pub fn order_marginal(configs: &[LatentConfig], orders: &[Vec<usize>]) -> Vec<f64> {
    let mut m = vec![0.0; orders.len()];
    for c in configs {
        let i = orders.iter().position(|o| *o == c.order).unwrap();
        m[i] += c.prob;
    }
    m
}

pub fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

pub fn counts_to_freq(counts: &[usize]) -> Vec<f64> {
    let n: usize = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / n as f64).collect()
}

/// Connected graph on `n` vertices: a random spanning tree plus `extra`
/// random edges. Multigraph extras may repeat pairs or close loops.
pub fn random_connected<R: Rng>(n: usize, extra: usize, mode: GraphMode, rng: &mut R) -> Graph {
    let mut g = Graph::new(mode);
    g.add_vertex();
    for v in 1..n {
        g.add_vertex();
        let u = rng.random_range(0..v);
        g.add_edge(u, v).unwrap();
    }
    let mut tries = 0;
    let mut added = 0;
    while added < extra && tries < 50 * (extra + 1) {
        tries += 1;
        let (u, v) = (rng.random_range(0..n), rng.random_range(0..n));
        if g.add_edge(u, v).is_ok() {
            added += 1;
        }
    }
    g
}

/// Shifted walk-length pmf `P(K = k)`, `k ≥ 1`, from closed forms.
pub fn walk_pmf(law: &rwnet::WalkLengthLaw, k: usize) -> f64 {
    use rwnet::WalkLengthLaw::*;
    if k == 0 {
        return 0.0;
    }
    let j = (k - 1) as f64;
    match *law {
        PoissonPlus { lambda } => {
            if lambda == 0.0 {
                return if k == 1 { 1.0 } else { 0.0 };
            }
            (-lambda + j * lambda.ln() - ln_gamma(j + 1.0)).exp()
        }
        NegBinPlus { r, p } => (ln_gamma(r + j) - ln_gamma(r) - ln_gamma(j + 1.0) + r * (1.0 - p).ln() + j * p.ln()).exp(),
        FixedLength(n) => {
            if k == n as usize {
                1.0
            } else {
                0.0
            }
        }
        LimitDegenerate => panic!("no pmf for the limit law"),
    }
}

/// `Σ_k P(K = k) P^k` from dense powers, summed until the remaining mass is
/// below `eps`.
pub fn series_kernel(g: &Graph, law: &rwnet::WalkLengthLaw, eps: f64) -> DMatrix<f64> {
    let n = g.n_vertices();
    let mut p = DMatrix::zeros(n, n);
    for &(u, v) in g.edges() {
        p[(u, v)] += 1.0;
        p[(v, u)] += 1.0;
    }
    for v in 0..n {
        let d: f64 = p.row(v).sum();
        p.row_mut(v).scale_mut(1.0 / d);
    }
    let mut acc = DMatrix::zeros(n, n);
    let mut pw = DMatrix::identity(n, n);
    let mut mass = 0.0;
    for k in 1..100_000 {
        pw = &pw * &p;
        let w = walk_pmf(law, k);
        acc += &pw * w;
        mass += w;
        if 1.0 - mass < eps && k > 1 {
            break;
        }
    }
    acc
}

fn draw(configs: &[LatentConfig], rng: &mut ChaCha8Rng) -> usize {
    let mut u: f64 = rng.random();
    for (i, c) in configs.iter().enumerate() {
        if u < c.prob {
            return i;
        }
        u -= c.prob;
    }
    configs.len() - 1
}

/// Starts each sweep from an exact posterior draw and returns the order TV
/// and the bias in `E[ΣB]` after one PG step.
pub fn single_sweep_tv(g: &Graph, sel: Selection, priors: Priors, scheme: PgScheme, reps: usize, seed: u64) -> (f64, f64) {
    let k_cap = 25;
    let orders = feasible_orders(g);
    let configs = latent_posterior(g, Theta::Integrated(priors), sel, k_cap);
    let exact = order_marginal(&configs, &orders);
    let mut cfg = PgConfig::new(4, 1, sel, g.mode());
    cfg.scheme = scheme;
    cfg.k_cap = Some(k_cap);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0usize; orders.len()];
    let mut b_ones = 0usize;
    for _ in 0..reps {
        let c = &configs[draw(&configs, &mut rng)];
        let (chi, omega) = priors.alpha_posterior(&c.b);
        let (kappa, tau) = priors.lambda_posterior(&c.k);
        let alpha = rand_distr::Distribution::sample(&rand_distr::Beta::new(chi, omega).unwrap(), &mut rng);
        let lambda = rand_distr::Distribution::sample(&rand_distr::Gamma::new(kappa, 1.0 / tau).unwrap(), &mut rng);
        let mut state = PgState {
            order: c.order.clone(),
            latent: LatentState {
                new_vertex: c.b.clone(),
                walk: c.k.clone(),
            },
            alpha,
            lambda,
            loglik: 0.0,
        };
        pg_step(g, &mut state, &priors, &cfg, &mut rng).unwrap();
        counts[orders.iter().position(|o| *o == state.order).unwrap()] += 1;
        b_ones += state.latent.new_vertex.iter().filter(|&&b| b).count();
    }
    let exact_b: f64 = configs.iter().map(|c| c.prob * c.b.iter().filter(|&&b| b).count() as f64).sum();
    (tv(&counts_to_freq(&counts), &exact), b_ones as f64 / reps as f64 - exact_b)
}
