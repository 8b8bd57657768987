//! Maximum likelihood for `(α, λ)` from a fully observed multigraph history
//! under Poisson-shifted walk lengths.
//!
//! `α̂` is the new-vertex fraction. For `λ`, each walk step `s` contributes
//! `log(μ(v) Q_vu + μ(u) Q_uv)` on `G_{s-1}`. Since
//! `Q_vu = Σ_k P(K=k) (P^k)_vu`, the λ-free profile `(P^k)_vu` is computed
//! once per step and every likelihood evaluation is a dot product.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::generative::Selection;
use crate::graph::{diameter, Graph, GraphMode, History};
use crate::law::WalkLengthLaw;
use crate::walk::for_each_power;

/// Truncation mass for the walk-length series.
const PROFILE_TAIL_EPS: f64 = 1e-12;
const GRID_POINTS: usize = 32;
const LAMBDA_TOL: f64 = 1e-4;

fn require_multigraph(g: &Graph) -> Result<()> {
    if g.mode() != GraphMode::Multigraph {
        return Err(Error::UnsupportedMode(
            "walk/new-vertex flags are censored in simple graphs; likelihood needs a multigraph history".into(),
        ));
    }
    Ok(())
}

/// `B_s` for `s = 2..=T` (index `s - 2`): the step-`s` edge touches a new vertex.
pub fn detect_b_flags(g: &Graph, history: &History) -> Result<Vec<bool>> {
    require_multigraph(g)?;
    let mut seen = vec![false; g.n_vertices()];
    let mut flags = Vec::with_capacity(history.order.len().saturating_sub(1));
    for (i, &e) in history.order.iter().enumerate() {
        let (u, v) = g.edge(e);
        if i > 0 {
            flags.push(!seen[u] || !seen[v]);
        }
        seen[u] = true;
        seen[v] = true;
    }
    Ok(flags)
}

/// `(N_T - 2) / (T - 1)`.
pub fn estimate_alpha(n_vertices: usize, t: usize) -> Result<f64> {
    if t < 2 {
        return Err(invalid("need at least two edges to estimate alpha"));
    }
    if n_vertices < 2 {
        return Err(invalid("need at least two vertices"));
    }
    Ok((n_vertices as f64 - 2.0) / (t as f64 - 1.0))
}

#[derive(Debug, Clone, Copy)]
pub struct MleOptions {
    /// Upper end of the λ bracket; defaults to `4 · diameter(G_T)`.
    pub lambda_max: Option<f64>,
    /// Count self-loop insertions among the walk steps.
    pub include_self_loops: bool,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions {
            lambda_max: None,
            include_self_loops: true,
        }
    }
}

/// Per-step walk profiles, reusable across λ.
#[derive(Debug, Clone)]
pub struct LambdaLikelihood {
    /// `w[s][k] = μ(v)(P^k)_vu + μ(u)(P^k)_uv` on `G_{s-1}`, `k = 0..=k_cap`.
    profiles: Vec<Vec<f64>>,
    lambda_max: f64,
    k_cap: usize,
}

impl LambdaLikelihood {
    /// Precomputes profiles long enough for every `λ ≤ lambda_max`.
    pub fn new(
        g: &Graph,
        history: &History,
        selection: Selection,
        lambda_max: f64,
        include_self_loops: bool,
    ) -> Result<Self> {
        require_multigraph(g)?;
        if !(lambda_max >= 0.0 && lambda_max.is_finite()) {
            return Err(invalid("lambda bracket must be finite and non-negative"));
        }
        let k_cap = WalkLengthLaw::poisson(lambda_max)
            .truncation(PROFILE_TAIL_EPS)
            .expect("poisson truncates") as usize;
        let flags = detect_b_flags(g, history)?;
        let mut grow = Graph::with_vertices(g.n_vertices(), &[], GraphMode::Multigraph)?;
        let mut present = 0usize;
        let mut profiles = Vec::new();
        for (i, &e) in history.order.iter().enumerate() {
            let (v, u) = g.edge(e);
            let walk_step = i > 0 && !flags[i - 1] && (include_self_loops || u != v);
            if walk_step {
                let (mv, mu_u) = match selection {
                    Selection::Uniform => (1.0 / present as f64, 1.0 / present as f64),
                    Selection::SizeBiased => {
                        let vol = grow.volume() as f64;
                        (grow.degree(v) as f64 / vol, grow.degree(u) as f64 / vol)
                    }
                };
                let (dv, du) = (grow.degree(v) as f64, grow.degree(u) as f64);
                let mut w = vec![0.0; k_cap + 1];
                for_each_power(&grow, v, k_cap, |k, dist| {
                    let pvu = dist[u];
                    w[k] = if u == v {
                        mv * pvu
                    } else {
                        // reversibility: d_u (P^k)_uv = d_v (P^k)_vu
                        mv * pvu + mu_u * pvu * dv / du
                    };
                });
                profiles.push(w);
            }
            for x in [u, v] {
                if grow.degree(x) == 0 {
                    present += 1;
                }
            }
            grow.add_edge(v, u)?;
        }
        Ok(LambdaLikelihood {
            profiles,
            lambda_max,
            k_cap,
        })
    }

    pub fn n_walk_steps(&self) -> usize {
        self.profiles.len()
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// `ℓ(λ)`; zero when there are no walk steps.
    pub fn loglik(&self, lambda: f64) -> Result<f64> {
        if !(lambda >= 0.0) {
            return Err(invalid(format!("lambda must be >= 0, got {lambda}")));
        }
        if lambda > self.lambda_max * (1.0 + 1e-12) + 1e-12 {
            return Err(invalid(format!(
                "lambda {lambda} beyond the precomputed bracket {}",
                self.lambda_max
            )));
        }
        let law = WalkLengthLaw::poisson(lambda);
        let pmf: Vec<f64> = (0..=self.k_cap as u64).map(|k| law.pmf(k)).collect();
        Ok(self
            .profiles
            .iter()
            .map(|w| w.iter().zip(&pmf).map(|(a, b)| a * b).sum::<f64>().ln())
            .sum())
    }

    /// Grid pre-scan then golden-section search on `[0, lambda_max]`.
    pub fn maximize(&self) -> Result<LambdaFit> {
        if self.profiles.is_empty() {
            return Err(Error::NotIdentifiable(
                "no walk steps in the history; lambda has no information".into(),
            ));
        }
        let hi = self.lambda_max;
        let grid: Vec<f64> = (0..GRID_POINTS)
            .map(|i| hi * i as f64 / (GRID_POINTS - 1) as f64)
            .collect();
        let values: Vec<f64> = grid
            .par_iter()
            .map(|&l| self.loglik(l))
            .collect::<Result<_>>()?;
        let best = values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        let mut a = grid[best.saturating_sub(1)];
        let mut b = grid[(best + 1).min(GRID_POINTS - 1)];
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let mut fc = self.loglik(c)?;
        let mut fd = self.loglik(d)?;
        while b - a > LAMBDA_TOL {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = self.loglik(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = self.loglik(d)?;
            }
        }
        let mut lambda_hat = 0.5 * (a + b);
        let mut loglik = self.loglik(lambda_hat)?;
        // keep the grid optimum if the bracket edge beats the interior search
        if values[best] > loglik {
            lambda_hat = grid[best];
            loglik = values[best];
        }
        Ok(LambdaFit {
            lambda_hat,
            loglik,
            curve: grid.into_iter().zip(values).collect(),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LambdaFit {
    pub lambda_hat: f64,
    pub loglik: f64,
    /// Grid `(λ, ℓ(λ))` pairs from the pre-scan.
    pub curve: Vec<(f64, f64)>,
}

/// `ℓ(λ)` for a single value.
pub fn lambda_loglik(
    g: &Graph,
    history: &History,
    lambda: f64,
    selection: Selection,
    include_self_loops: bool,
) -> Result<f64> {
    LambdaLikelihood::new(g, history, selection, lambda, include_self_loops)?.loglik(lambda)
}

pub fn estimate_lambda(g: &Graph, history: &History, selection: Selection, opts: MleOptions) -> Result<LambdaFit> {
    let lambda_max = match opts.lambda_max {
        Some(l) => l,
        None => 4.0 * diameter(g).ok_or(Error::Disconnected)? as f64,
    };
    LambdaLikelihood::new(g, history, selection, lambda_max, opts.include_self_loops)?.maximize()
}

#[derive(Debug, Clone, Serialize)]
pub struct MleResult {
    pub alpha_hat: f64,
    pub lambda_hat: f64,
    pub loglik: f64,
    pub loglik_curve: Vec<(f64, f64)>,
    pub n_walk_steps: usize,
}

pub fn fit_mle(g: &Graph, history: &History, selection: Selection, opts: MleOptions) -> Result<MleResult> {
    require_multigraph(g)?;
    let alpha_hat = estimate_alpha(g.n_vertices(), g.n_edges())?;
    let fit = estimate_lambda(g, history, selection, opts)?;
    let n_walk_steps = detect_b_flags(g, history)?.iter().filter(|b| !**b).count();
    Ok(MleResult {
        alpha_hat,
        lambda_hat: fit.lambda_hat,
        loglik: fit.loglik,
        loglik_curve: fit.curve,
        n_walk_steps,
    })
}
