//! Parameter inference for `(α, λ)` from one observed graph.
//!
//! PMMH runs Metropolis-Hastings on the transformed scale
//! `(logit α, log λ)` with the bridge likelihood estimate in the ratio.
//!
//! Particle Gibbs comes in three schemes. All start with conditional SMC for
//! the order.
//!
//! * [`PgScheme::Marginal`] (default): SMC at the current `θ`, then slice
//!   sampling of `θ | order` with every `(B_t, K_t)` summed out, then a draw
//!   of `(B, K) | order, θ` for the record.
//! * [`PgScheme::Augmented`]: SMC at the current `θ`, then
//!   `(B, K) | order, θ`, then the conjugate `θ | B, K` draw. Exact, but `λ`
//!   moves slowly because the `K_t` of new-vertex steps carry no information.
//! * [`PgScheme::Collapsed`]: the latent variables are swept one step at a
//!   time from their collapsed predictive conditionals, and the SMC proposes
//!   every step from the kernel collapsed over that step's own `(B_t, K_t)`.
//!   These per-step kernels are not conditionals of a single joint law.
//!
//! Walk lengths are stored as `K ≥ 0`, the walk taking `K + 1` steps, so that
//! `K_t | λ ~ Poisson(λ)` and the Gamma prior on `λ` is conjugate.

use std::io::Write;

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal};
use serde::Serialize;

use crate::bridge::{run_bridge, BridgeModel, BridgeOptions, Resampling, StepParams};
use crate::error::{invalid, Error, Result};
use crate::generative::Selection;
use crate::graph::{diameter, Graph, GraphMode, History, LatentPath};
use crate::law::{poisson_draw, WalkLengthLaw};
use crate::walk::for_each_power;

/// Retained prior-predictive mass below which the `K` support is doubled.
const K_TAIL_TOL: f64 = 1e-6;
const ACF_MAX_LAG: usize = 50;

/// Conjugate priors: `α ~ Beta(a, b)`, `λ ~ Gamma(shape, rate)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Priors {
    pub alpha_beta: (f64, f64),
    pub lambda_gamma: (f64, f64),
}

impl Default for Priors {
    fn default() -> Self {
        Priors {
            alpha_beta: (1.0, 1.0),
            lambda_gamma: (1.0, 0.25),
        }
    }
}

impl Priors {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.alpha_beta;
        let (s, r) = self.lambda_gamma;
        if [a, b, s, r].iter().all(|x| *x > 0.0 && x.is_finite()) {
            Ok(())
        } else {
            Err(invalid(format!("prior hyperparameters must be positive: {self:?}")))
        }
    }

    /// `(χ, ω)` of the Beta posterior of `α`.
    pub fn alpha_posterior(&self, b: &[bool]) -> (f64, f64) {
        let ones = b.iter().filter(|&&x| x).count() as f64;
        (self.alpha_beta.0 + ones, self.alpha_beta.1 + b.len() as f64 - ones)
    }

    /// `(κ, τ)`, shape and rate of the Gamma posterior of `λ`.
    pub fn lambda_posterior(&self, k: &[u32]) -> (f64, f64) {
        let total: f64 = k.iter().map(|&x| x as f64).sum();
        (self.lambda_gamma.0 + total, self.lambda_gamma.1 + k.len() as f64)
    }

    /// Log prior density up to a constant.
    pub fn ln_density(&self, alpha: f64, lambda: f64) -> f64 {
        if !(alpha > 0.0 && alpha < 1.0 && lambda > 0.0) {
            return f64::NEG_INFINITY;
        }
        let (a, b) = self.alpha_beta;
        let (s, r) = self.lambda_gamma;
        (a - 1.0) * alpha.ln() + (b - 1.0) * (1.0 - alpha).ln() + (s - 1.0) * lambda.ln() - r * lambda
    }

    pub fn mean(&self) -> (f64, f64) {
        let (a, b) = self.alpha_beta;
        let (s, r) = self.lambda_gamma;
        (a / (a + b), s / r)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(f64, f64)> {
        let alpha = beta_draw(self.alpha_beta.0, self.alpha_beta.1, rng)?;
        let lambda = gamma_draw(self.lambda_gamma.0, self.lambda_gamma.1, rng)?;
        Ok((alpha, lambda))
    }
}

fn beta_draw<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    let d = Beta::new(a, b).map_err(|e| invalid(e.to_string()))?;
    // keep α strictly inside (0, 1)
    Ok(d.sample(rng).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON))
}

fn gamma_draw<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let d = Gamma::new(shape, 1.0 / rate).map_err(|e| invalid(e.to_string()))?;
    Ok(d.sample(rng).max(f64::MIN_POSITIVE))
}

/// One retained state of a chain.
#[derive(Debug, Clone)]
pub struct ChainSample {
    pub alpha: f64,
    pub lambda: f64,
    /// Bridge log-likelihood estimate attached to the state.
    pub loglik: f64,
    pub accepted: bool,
    pub history: Option<History>,
}

#[derive(Debug, Clone)]
pub struct Chain {
    pub samples: Vec<ChainSample>,
    /// PMMH only.
    pub acceptance_rate: Option<f64>,
}

impl Chain {
    pub fn alphas(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.alpha).collect()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.lambda).collect()
    }

    /// Samples kept after dropping `burn` and keeping every `thin`-th.
    pub fn retained(&self, burn: usize, thin: usize) -> impl Iterator<Item = (usize, &ChainSample)> {
        let thin = thin.max(1);
        self.samples
            .iter()
            .enumerate()
            .skip(burn)
            .filter(move |(i, _)| (i - burn) % thin == 0)
    }

    /// `iteration,alpha,lambda,loglik_estimate,accepted`, 1-based iterations.
    pub fn write_csv<W: Write>(&self, mut w: W, burn: usize, thin: usize) -> Result<()> {
        writeln!(w, "iteration,alpha,lambda,loglik_estimate,accepted")?;
        for (i, s) in self.retained(burn, thin) {
            writeln!(
                w,
                "{},{},{},{},{}",
                i + 1,
                s.alpha,
                s.lambda,
                s.loglik,
                u8::from(s.accepted)
            )?;
        }
        Ok(())
    }

    /// One line per retained history, comma-separated edge indices.
    pub fn write_histories<W: Write>(&self, mut w: W, burn: usize, thin: usize) -> Result<()> {
        for (_, s) in self.retained(burn, thin) {
            if let Some(h) = &s.history {
                write_order(&mut w, &h.order)?;
            }
        }
        Ok(())
    }
}

pub(crate) fn write_order<W: Write>(w: &mut W, order: &[usize]) -> Result<()> {
    let line: Vec<String> = order.iter().map(|e| e.to_string()).collect();
    writeln!(w, "{}", line.join(","))?;
    Ok(())
}

fn check_graph(g: &Graph, mode: GraphMode) -> Result<()> {
    if g.n_edges() < 2 {
        return Err(invalid("inference needs at least two edges"));
    }
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    if g.mode() != mode {
        return Err(invalid("graph mode differs from the requested model mode"));
    }
    Ok(())
}

// ---------------------------------------------------------------- PMMH

#[derive(Debug, Clone, Copy)]
pub struct PmmhConfig {
    pub n_particles: usize,
    pub iters: usize,
    /// Random-walk step on `logit α`.
    pub step_alpha: f64,
    /// Random-walk step on `log λ`.
    pub step_lambda: f64,
    /// Robbins-Monro adaptation of both steps over the first iterations,
    /// targeting acceptance 0.25; 0 disables it.
    pub adapt_iters: usize,
    pub selection: Selection,
    pub mode: GraphMode,
    pub resampling: Resampling,
    pub keep_histories: bool,
}

impl PmmhConfig {
    pub fn new(n_particles: usize, iters: usize, selection: Selection, mode: GraphMode) -> Self {
        PmmhConfig {
            n_particles,
            iters,
            step_alpha: 0.25,
            step_lambda: 0.25,
            adapt_iters: 0,
            selection,
            mode,
            resampling: Resampling::Multinomial,
            keep_histories: false,
        }
    }
}

struct Estimate {
    loglik: f64,
    history: Option<History>,
}

fn estimate<R: Rng + ?Sized>(g: &Graph, cfg: &PmmhConfig, alpha: f64, lambda: f64, rng: &mut R) -> Result<Estimate> {
    let model = BridgeModel::fixed(alpha, WalkLengthLaw::poisson(lambda), cfg.selection, cfg.mode);
    let opts = BridgeOptions {
        n_particles: cfg.n_particles,
        resampling: cfg.resampling,
    };
    let out = run_bridge(g, &model, opts, None, rng)?;
    let history = if cfg.keep_histories {
        Some(History::from_order(g, out.histories[0].clone())?)
    } else {
        None
    };
    Ok(Estimate {
        loglik: out.loglik,
        history,
    })
}

/// Metropolis-Hastings acceptance on log scale; `-inf` proposals never win.
fn accept<R: Rng + ?Sized>(log_ratio: f64, current_finite: bool, rng: &mut R) -> bool {
    if log_ratio.is_nan() {
        return !current_finite;
    }
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

fn pmmh_core<R, P>(
    g: &Graph,
    cfg: &PmmhConfig,
    init: (f64, f64),
    ln_prior: impl Fn(f64, f64) -> f64,
    mut propose: P,
    rng: &mut R,
) -> Result<Chain>
where
    R: Rng + ?Sized,
    P: FnMut(f64, f64, f64, &mut R) -> (f64, f64, f64),
{
    check_graph(g, cfg.mode)?;
    if cfg.iters < 1 || cfg.n_particles < 1 {
        return Err(invalid("PMMH needs iters >= 1 and at least one particle"));
    }
    let (mut alpha, mut lambda) = init;
    let mut cur = estimate(g, cfg, alpha, lambda, rng)?;
    let mut samples = Vec::with_capacity(cfg.iters);
    let mut n_acc = 0usize;
    let mut log_scale = 0.0f64;
    for it in 0..cfg.iters {
        // the proposal returns the log proposal-density ratio q(θ|θ')/q(θ'|θ)
        let (a2, l2, log_q) = propose(alpha, lambda, log_scale.exp(), rng);
        let prop = estimate(g, cfg, a2, l2, rng)?;
        let log_ratio = prop.loglik + ln_prior(a2, l2) - cur.loglik - ln_prior(alpha, lambda) + log_q;
        let ok = prop.loglik.is_finite() && accept(log_ratio, cur.loglik.is_finite(), rng);
        if it < cfg.adapt_iters {
            // Robbins-Monro on the log step scale
            let p = if prop.loglik.is_finite() { log_ratio.min(0.0).exp() } else { 0.0 };
            let p = if p.is_nan() { 1.0 } else { p };
            log_scale += (p - 0.25) / ((it + 1) as f64).sqrt();
        }
        if ok {
            alpha = a2;
            lambda = l2;
            cur = prop;
            n_acc += 1;
        }
        samples.push(ChainSample {
            alpha,
            lambda,
            loglik: cur.loglik,
            accepted: ok,
            history: cur.history.clone(),
        });
    }
    Ok(Chain {
        samples,
        acceptance_rate: Some(n_acc as f64 / cfg.iters as f64),
    })
}

fn logit(x: f64) -> f64 {
    (x / (1.0 - x)).ln()
}

fn expit(y: f64) -> f64 {
    1.0 / (1.0 + (-y).exp())
}

/// PMMH with Gaussian random-walk proposals on `(logit α, log λ)`, started at
/// the prior mean.
pub fn pmmh_run<R: Rng + ?Sized>(g: &Graph, priors: &Priors, cfg: &PmmhConfig, rng: &mut R) -> Result<Chain> {
    priors.validate()?;
    if !(cfg.step_alpha >= 0.0 && cfg.step_lambda >= 0.0) {
        return Err(invalid("proposal steps must be >= 0"));
    }
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let pr = *priors;
    let ln_prior = move |a: f64, l: f64| pr.ln_density(a, l);
    let propose = |alpha: f64, lambda: f64, scale: f64, rng: &mut R| {
        let ya = logit(alpha) + scale * cfg.step_alpha * std.sample(rng);
        let yl = lambda.ln() + scale * cfg.step_lambda * std.sample(rng);
        let (a2, l2) = (expit(ya).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON), yl.exp().max(f64::MIN_POSITIVE));
        // Jacobian of the logit/log transform
        let log_q = (a2 * (1.0 - a2) * l2).ln() - (alpha * (1.0 - alpha) * lambda).ln();
        (a2, l2, log_q)
    };
    pmmh_core(g, cfg, priors.mean(), ln_prior, propose, rng)
}

/// PMMH on a finite parameter grid with prior weights, proposing uniformly
/// over the grid. Used to check exactness against enumerated likelihoods.
pub fn pmmh_run_grid<R: Rng + ?Sized>(
    g: &Graph,
    grid: &[(f64, f64)],
    prior_weights: &[f64],
    cfg: &PmmhConfig,
    rng: &mut R,
) -> Result<Chain> {
    if grid.is_empty() || grid.len() != prior_weights.len() {
        return Err(invalid("grid and prior weights must be nonempty and of equal length"));
    }
    if prior_weights.iter().any(|&w| !(w > 0.0)) {
        return Err(invalid("grid prior weights must be positive"));
    }
    let lookup = |a: f64, l: f64| -> usize {
        grid.iter()
            .position(|&(ga, gl)| ga == a && gl == l)
            .expect("grid point")
    };
    let ln_prior = |a: f64, l: f64| prior_weights[lookup(a, l)].ln();
    let propose = |_: f64, _: f64, _: f64, rng: &mut R| {
        let (a, l) = grid[rng.random_range(0..grid.len())];
        (a, l, 0.0)
    };
    pmmh_core(g, cfg, grid[0], ln_prior, propose, rng)
}

// ------------------------------------------------------ latent variables

/// `(B_t, K_t)` for `t = 2..=T` at index `t - 2`; `K` counts walk steps
/// beyond the first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatentState {
    pub new_vertex: Vec<bool>,
    pub walk: Vec<u32>,
}

impl LatentState {
    /// Draws from `B_t ~ Bernoulli(α)`, `K_t ~ Poisson(λ)`.
    pub fn from_prior_predictive<R: Rng + ?Sized>(t_total: usize, alpha: f64, lambda: f64, rng: &mut R) -> Self {
        let n = t_total.saturating_sub(1);
        LatentState {
            new_vertex: (0..n).map(|_| rng.random::<f64>() < alpha).collect(),
            walk: (0..n).map(|_| poisson_draw(lambda, rng)).collect(),
        }
    }

    /// Latent path with walk lengths `K + 1`.
    pub fn to_path(&self) -> LatentPath {
        LatentPath {
            new_vertex: self.new_vertex.clone(),
            walk_length: self.walk.iter().map(|&k| Some(k + 1)).collect(),
        }
    }
}

/// λ-free evidence for one step's `(B_t, K_t)`.
#[derive(Debug, Clone)]
struct StepProfile {
    /// The step's edge brings in a new vertex.
    new_vertex: bool,
    /// Pair/self-loop step: `μ_a (P^{k+1})_ab + μ_b (P^{k+1})_ba`.
    /// Simple-mode new-vertex step at `x`: `Σ_{u ∈ N[x]} (P^{k+1})_xu`.
    /// Empty for multigraph new-vertex steps.
    w: Vec<f64>,
}

/// Per-step profiles of an order, with `k = 0..=k_cap`.
#[derive(Debug, Clone)]
pub struct Profiles {
    steps: Vec<StepProfile>,
    k_cap: usize,
    doubled: bool,
    simple: bool,
}

impl Profiles {
    pub fn new(g: &Graph, order: &[usize], selection: Selection, k_cap: usize) -> Result<Self> {
        let simple = g.mode() == GraphMode::Simple;
        let mut grow = Graph::with_vertices(g.n_vertices(), &[], g.mode())?;
        let mut present = vec![false; g.n_vertices()];
        let mut n_present = 0usize;
        let mut steps = Vec::with_capacity(order.len().saturating_sub(1));
        for (i, &e) in order.iter().enumerate() {
            let (a, b) = g.edge(e);
            if i > 0 {
                let mu = |v: usize| match selection {
                    Selection::Uniform => 1.0 / n_present as f64,
                    Selection::SizeBiased => grow.degree(v) as f64 / grow.volume() as f64,
                };
                let step = match (present[a], present[b]) {
                    (true, true) => {
                        let (da, db) = (grow.degree(a) as f64, grow.degree(b) as f64);
                        let (ma, mb) = (mu(a), mu(b));
                        let mut w = vec![0.0; k_cap + 1];
                        for_each_power(&grow, a, k_cap + 1, |k, dist| {
                            if k > 0 {
                                let p = dist[b];
                                // reversibility: d_b (P^k)_ba = d_a (P^k)_ab
                                w[k - 1] = if a == b { ma * p } else { ma * p + mb * p * da / db };
                            }
                        });
                        StepProfile { new_vertex: false, w }
                    }
                    (false, false) => return Err(Error::InfeasibleOrder { step: i + 1, edge: e }),
                    (pa, _) => {
                        let x = if pa { a } else { b };
                        let w = if simple {
                            let mut nb: Vec<usize> = grow.slots(x).to_vec();
                            nb.push(x);
                            nb.sort_unstable();
                            nb.dedup();
                            let mut w = vec![0.0; k_cap + 1];
                            for_each_power(&grow, x, k_cap + 1, |k, dist| {
                                if k > 0 {
                                    w[k - 1] = nb.iter().map(|&u| dist[u]).sum();
                                }
                            });
                            w
                        } else {
                            Vec::new()
                        };
                        StepProfile { new_vertex: true, w }
                    }
                };
                steps.push(step);
            } else if a == b {
                return Err(Error::InfeasibleOrder { step: 1, edge: e });
            }
            for v in [a, b] {
                if !present[v] {
                    present[v] = true;
                    n_present += 1;
                }
            }
            grow.add_edge(a, b)?;
        }
        Ok(Profiles {
            steps,
            k_cap,
            doubled: false,
            simple,
        })
    }

    pub fn k_cap(&self) -> usize {
        self.k_cap
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }
}

/// `K` truncation point `4 · diameter(G_T)`, at least 1.
pub fn default_k_cap(g: &Graph) -> usize {
    (4 * diameter(g).unwrap_or(1)).max(1)
}

/// Recomputes the profiles at twice the cap, once, when the walk-length law
/// leaves more than `K_TAIL_TOL` of its mass beyond the cap.
fn ensure_cap(profiles: &mut Profiles, g: &Graph, order: &[usize], selection: Selection, law: &WalkLengthLaw) -> Result<()> {
    // the stored cap bounds K; the shifted law puts walk length K + 1
    let tail = law.tail(profiles.k_cap as u64 + 1);
    if tail > K_TAIL_TOL && !profiles.doubled {
        log::warn!(
            "walk-length support up to {} leaves mass {tail:.3e}; doubling the cap",
            profiles.k_cap
        );
        let cap = profiles.k_cap * 2;
        *profiles = Profiles::new(g, order, selection, cap)?;
        profiles.doubled = true;
    }
    Ok(())
}

/// Joint draw of `(B, K)` for one step given `P(B=1)` and the `K` pmf.
fn draw_step<R: Rng + ?Sized>(step: &StepProfile, simple: bool, p_new: f64, pk: &[f64], rng: &mut R) -> Result<(bool, u32)> {
    let n = pk.len();
    if step.new_vertex && !simple {
        return Ok((true, sample_discrete(pk, rng)? as u32));
    }
    // slots 0..n hold B = 0, slots n..2n hold B = 1
    let mut w = vec![0.0; if step.new_vertex { 2 * n } else { n }];
    for k in 0..n {
        w[k] = (1.0 - p_new) * pk[k] * step.w[k];
        if step.new_vertex {
            w[n + k] = p_new * pk[k];
        }
    }
    let i = sample_discrete(&w, rng)?;
    Ok((i >= n, (i % n) as u32))
}

fn sample_discrete<R: Rng + ?Sized>(w: &[f64], rng: &mut R) -> Result<usize> {
    let total: f64 = w.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Numerical("latent conditional has no mass".into()));
    }
    let mut u = rng.random::<f64>() * total;
    for (i, &x) in w.iter().enumerate() {
        if u < x {
            return Ok(i);
        }
        u -= x;
    }
    Ok(w.iter().rposition(|&x| x > 0.0).unwrap())
}

/// `P(K = k)` for `k = 0..=cap`, from a law on walk lengths `K + 1`.
fn k_pmf(law: &WalkLengthLaw, cap: usize) -> Vec<f64> {
    (0..=cap as u64).map(|k| law.pmf(k + 1)).collect()
}

/// Draws every `(B_t, K_t)` from its conditional given the order and `θ`.
pub fn latent_draw<R: Rng + ?Sized>(
    g: &Graph,
    order: &[usize],
    profiles: &mut Profiles,
    selection: Selection,
    alpha: f64,
    lambda: f64,
    rng: &mut R,
) -> Result<LatentState> {
    let law = WalkLengthLaw::poisson(lambda);
    ensure_cap(profiles, g, order, selection, &law)?;
    let pk = k_pmf(&law, profiles.k_cap);
    let mut state = LatentState {
        new_vertex: Vec::with_capacity(profiles.n_steps()),
        walk: Vec::with_capacity(profiles.n_steps()),
    };
    for step in &profiles.steps {
        let (b, k) = draw_step(step, profiles.simple, alpha, &pk, rng)?;
        state.new_vertex.push(b);
        state.walk.push(k);
    }
    Ok(state)
}

/// Predictive law of `(B_t, K_t)` given the other steps:
/// `B_t ~ Bernoulli(χ₋ₜ/(χ₋ₜ+ω₋ₜ))`, `K_t ~ NB(κ₋ₜ, 1/(1+τ₋ₜ))`.
fn predictive(priors: &Priors, state: &LatentState, t_idx: usize) -> (f64, WalkLengthLaw) {
    let n_other = (state.new_vertex.len() - 1) as f64;
    let ones = state.new_vertex.iter().filter(|&&b| b).count() as f64 - f64::from(u8::from(state.new_vertex[t_idx]));
    let chi = priors.alpha_beta.0 + ones;
    let omega = priors.alpha_beta.1 + n_other - ones;
    let k_sum: f64 = state.walk.iter().map(|&k| k as f64).sum::<f64>() - state.walk[t_idx] as f64;
    let kappa = priors.lambda_gamma.0 + k_sum;
    let tau = priors.lambda_gamma.1 + n_other;
    (
        chi / (chi + omega),
        WalkLengthLaw::NegBinPlus {
            r: kappa,
            p: 1.0 / (1.0 + tau),
        },
    )
}

/// Collapsed sweep over `t = 2..=T`, drawing `(B_t, K_t)` jointly from
/// `P(B_t, K_t | G_{t-1}, G_t, B₋ₜ, K₋ₜ)` with `θ` integrated out.
pub fn latent_sweep<R: Rng + ?Sized>(
    g: &Graph,
    history: &History,
    state: &mut LatentState,
    profiles: &mut Profiles,
    priors: &Priors,
    selection: Selection,
    rng: &mut R,
) -> Result<()> {
    let n = history.n_steps().saturating_sub(1);
    if state.new_vertex.len() != n || state.walk.len() != n || profiles.n_steps() != n {
        return Err(invalid("latent state length differs from the history"));
    }
    // the heaviest predictive tail has every other K in κ
    let k_all: f64 = state.walk.iter().map(|&k| k as f64).sum();
    let worst = WalkLengthLaw::NegBinPlus {
        r: priors.lambda_gamma.0 + k_all,
        p: 1.0 / (1.0 + priors.lambda_gamma.1 + n as f64 - 1.0),
    };
    ensure_cap(profiles, g, &history.order, selection, &worst)?;
    for t_idx in 0..n {
        let (p_new, law) = predictive(priors, state, t_idx);
        let pk = k_pmf(&law, profiles.k_cap);
        let (b, k) = draw_step(&profiles.steps[t_idx], profiles.simple, p_new, &pk, rng)?;
        state.new_vertex[t_idx] = b;
        state.walk[t_idx] = k;
    }
    Ok(())
}

/// Per-step bridge parameters of the collapsed kernel.
pub fn collapsed_step_params(priors: &Priors, state: &LatentState) -> Vec<StepParams> {
    (0..state.new_vertex.len())
        .map(|t_idx| {
            let (alpha, law) = predictive(priors, state, t_idx);
            StepParams { alpha, law }
        })
        .collect()
}

// ------------------------------------------------------- particle Gibbs

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PgScheme {
    Marginal,
    Augmented,
    Collapsed,
}

impl std::str::FromStr for PgScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "marginal" => Ok(PgScheme::Marginal),
            "augmented" => Ok(PgScheme::Augmented),
            "collapsed" => Ok(PgScheme::Collapsed),
            _ => Err(invalid(format!("unknown particle Gibbs scheme '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PgConfig {
    pub n_particles: usize,
    pub iters: usize,
    pub selection: Selection,
    pub mode: GraphMode,
    pub scheme: PgScheme,
    pub resampling: Resampling,
    /// `K` support cap; defaults to `4 · diameter(G_T)`.
    pub k_cap: Option<usize>,
    pub keep_histories: bool,
}

impl PgConfig {
    pub fn new(n_particles: usize, iters: usize, selection: Selection, mode: GraphMode) -> Self {
        PgConfig {
            n_particles,
            iters,
            selection,
            mode,
            scheme: PgScheme::Marginal,
            resampling: Resampling::Multinomial,
            k_cap: None,
            keep_histories: false,
        }
    }
}

/// Full particle Gibbs state.
#[derive(Debug, Clone)]
pub struct PgState {
    pub order: Vec<usize>,
    pub latent: LatentState,
    pub alpha: f64,
    pub lambda: f64,
    /// Log-likelihood estimate of the last conditional SMC sweep.
    pub loglik: f64,
}

impl PgState {
    /// `θ` from the prior, `(B, K)` from the prior predictive and the order
    /// from an unconditional bridge run at that `θ`.
    pub fn initialize<R: Rng + ?Sized>(g: &Graph, priors: &Priors, cfg: &PgConfig, rng: &mut R) -> Result<Self> {
        let (alpha, lambda) = priors.sample(rng)?;
        let latent = LatentState::from_prior_predictive(g.n_edges(), alpha, lambda, rng);
        let model = BridgeModel::fixed(alpha, WalkLengthLaw::poisson(lambda), cfg.selection, cfg.mode);
        let out = run_bridge(g, &model, bridge_opts(cfg), None, rng)?;
        Ok(PgState {
            order: out.histories[0].clone(),
            latent,
            alpha,
            lambda,
            loglik: out.loglik,
        })
    }
}

fn bridge_opts(cfg: &PgConfig) -> BridgeOptions {
    BridgeOptions {
        n_particles: cfg.n_particles,
        resampling: cfg.resampling,
    }
}

/// One particle Gibbs iteration.
pub fn pg_step<R: Rng + ?Sized>(
    g: &Graph,
    state: &mut PgState,
    priors: &Priors,
    cfg: &PgConfig,
    rng: &mut R,
) -> Result<()> {
    let k_cap = cfg.k_cap.unwrap_or_else(|| default_k_cap(g));
    let csmc = |state: &mut PgState, model: &BridgeModel, rng: &mut R| -> Result<()> {
        let out = run_bridge(g, model, bridge_opts(cfg), Some(&state.order), rng)?;
        state.order = out.histories[0].clone();
        state.loglik = out.loglik;
        Ok(())
    };
    let fixed = |state: &PgState| {
        BridgeModel::fixed(state.alpha, WalkLengthLaw::poisson(state.lambda), cfg.selection, cfg.mode)
    };
    match cfg.scheme {
        PgScheme::Marginal => {
            csmc(state, &fixed(state), rng)?;
            let mut profiles = Profiles::new(g, &state.order, cfg.selection, k_cap)?;
            ensure_cap(&mut profiles, g, &state.order, cfg.selection, &WalkLengthLaw::poisson(state.lambda))?;
            let (alpha, lambda) = theta_given_order(&profiles, priors, state.alpha, state.lambda, rng)?;
            state.alpha = alpha;
            state.lambda = lambda;
            state.latent = latent_draw(g, &state.order, &mut profiles, cfg.selection, alpha, lambda, rng)?;
            return Ok(());
        }
        PgScheme::Augmented => {
            csmc(state, &fixed(state), rng)?;
            let mut profiles = Profiles::new(g, &state.order, cfg.selection, k_cap)?;
            state.latent = latent_draw(g, &state.order, &mut profiles, cfg.selection, state.alpha, state.lambda, rng)?;
        }
        PgScheme::Collapsed => {
            let history = History::from_order(g, state.order.clone())?;
            let mut profiles = Profiles::new(g, &state.order, cfg.selection, k_cap)?;
            latent_sweep(g, &history, &mut state.latent, &mut profiles, priors, cfg.selection, rng)?;
            let model = BridgeModel::per_step(cfg.selection, cfg.mode, collapsed_step_params(priors, &state.latent));
            csmc(state, &model, rng)?;
        }
    }
    let (chi, omega) = priors.alpha_posterior(&state.latent.new_vertex);
    let (kappa, tau) = priors.lambda_posterior(&state.latent.walk);
    state.alpha = beta_draw(chi, omega, rng)?;
    state.lambda = gamma_draw(kappa, tau, rng)?;
    Ok(())
}

/// Slice-sampling sweeps of `θ | order` per particle Gibbs iteration.
const THETA_SWEEPS: usize = 3;

/// `log p(order | α, λ)` up to terms free of `θ`, with `K` summed over the
/// profile support.
pub fn order_loglik(profiles: &Profiles, alpha: f64, lambda: f64) -> f64 {
    if !(alpha > 0.0 && alpha < 1.0 && lambda > 0.0) {
        return f64::NEG_INFINITY;
    }
    let law = WalkLengthLaw::poisson(lambda);
    let pk = k_pmf(&law, profiles.k_cap);
    let walk = |w: &[f64]| w.iter().zip(&pk).map(|(a, b)| a * b).sum::<f64>();
    profiles
        .steps
        .iter()
        .map(|s| match (s.new_vertex, profiles.simple) {
            (false, _) => (1.0 - alpha).ln() + walk(&s.w).ln(),
            (true, false) => alpha.ln(),
            (true, true) => (alpha + (1.0 - alpha) * walk(&s.w)).ln(),
        })
        .sum()
}

/// Slice sampling on `(logit α, log λ)`, one coordinate at a time.
fn theta_given_order<R: Rng + ?Sized>(
    profiles: &Profiles,
    priors: &Priors,
    alpha: f64,
    lambda: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let target = |a: f64, l: f64| {
        // Jacobian of the logit/log transform
        order_loglik(profiles, a, l) + priors.ln_density(a, l) + (a * (1.0 - a) * l).ln()
    };
    let (mut ya, mut yl) = (logit(alpha), lambda.ln());
    if !target(alpha, lambda).is_finite() {
        return Err(Error::Numerical("order has zero likelihood at the current parameters".into()));
    }
    for _ in 0..THETA_SWEEPS {
        ya = slice_step(ya, |y| target(expit(y), yl.exp()), rng);
        yl = slice_step(yl, |y| target(expit(ya), y.exp()), rng);
    }
    Ok((expit(ya).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON), yl.exp().max(f64::MIN_POSITIVE)))
}

/// One univariate slice-sampling update with stepping out and shrinkage.
fn slice_step<R: Rng + ?Sized>(x0: f64, f: impl Fn(f64) -> f64, rng: &mut R) -> f64 {
    const WIDTH: f64 = 1.0;
    const MAX_STEPS: usize = 32;
    let level = f(x0) + rng.random::<f64>().ln();
    let mut lo = x0 - WIDTH * rng.random::<f64>();
    let mut hi = lo + WIDTH;
    let mut j = rng.random_range(0..MAX_STEPS);
    let mut k = MAX_STEPS - 1 - j;
    while j > 0 && f(lo) > level {
        lo -= WIDTH;
        j -= 1;
    }
    while k > 0 && f(hi) > level {
        hi += WIDTH;
        k -= 1;
    }
    loop {
        let x = lo + rng.random::<f64>() * (hi - lo);
        if f(x) > level {
            return x;
        }
        if x < x0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo < 1e-12 {
            return x0;
        }
    }
}

/// Particle Gibbs chain of `cfg.iters` iterations.
pub fn pg_run<R: Rng + ?Sized>(g: &Graph, priors: &Priors, cfg: &PgConfig, rng: &mut R) -> Result<Chain> {
    priors.validate()?;
    check_graph(g, cfg.mode)?;
    if cfg.n_particles < 2 {
        return Err(invalid("particle Gibbs needs at least two particles"));
    }
    let mut state = PgState::initialize(g, priors, cfg, rng)?;
    let mut samples = Vec::with_capacity(cfg.iters);
    for _ in 0..cfg.iters {
        pg_step(g, &mut state, priors, cfg, rng)?;
        let history = if cfg.keep_histories {
            Some(History::from_order(g, state.order.clone())?.with_latent(state.latent.to_path()))
        } else {
            None
        };
        samples.push(ChainSample {
            alpha: state.alpha,
            lambda: state.lambda,
            loglik: state.loglik,
            accepted: true,
            history,
        });
    }
    Ok(Chain {
        samples,
        acceptance_rate: None,
    })
}

// ------------------------------------------------------------ summaries

#[derive(Debug, Clone, Serialize)]
pub struct ParamSummary {
    pub mean: f64,
    pub variance: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    /// Autocorrelation at lags `0..=min(50, n-1)`.
    pub acf: Vec<f64>,
    /// `None` for a constant chain.
    pub ess: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainSummary {
    pub n: usize,
    pub alpha: ParamSummary,
    pub lambda: ParamSummary,
    pub acceptance_rate: Option<f64>,
}

pub fn chain_summary(chain: &Chain) -> Result<ChainSummary> {
    Ok(ChainSummary {
        n: chain.samples.len(),
        alpha: summarize(&chain.alphas())?,
        lambda: summarize(&chain.lambdas())?,
        acceptance_rate: chain.acceptance_rate,
    })
}

pub fn summarize(xs: &[f64]) -> Result<ParamSummary> {
    let n = xs.len();
    if n < 2 {
        return Err(invalid("chain summary needs at least two samples"));
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let variance = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let max_lag = ACF_MAX_LAG.min(n - 1);
    let (acf, ess) = if variance > 0.0 {
        let acf = (0..=max_lag).map(|l| autocorr(xs, mean, variance, l)).collect();
        (acf, Some(ess_monotone(xs, mean, variance)))
    } else {
        (vec![1.0; max_lag + 1], None)
    };
    Ok(ParamSummary {
        mean,
        variance,
        q025: quantile(&sorted, 0.025),
        q50: quantile(&sorted, 0.5),
        q975: quantile(&sorted, 0.975),
        acf,
        ess,
    })
}

/// Linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn autocorr(xs: &[f64], mean: f64, variance: f64, lag: usize) -> f64 {
    let n = xs.len();
    let c: f64 = (0..n - lag).map(|i| (xs[i] - mean) * (xs[i + lag] - mean)).sum();
    c / (n as f64 * variance)
}

/// Effective sample size from the initial monotone sequence estimator.
pub fn ess_monotone(xs: &[f64], mean: f64, variance: f64) -> f64 {
    let n = xs.len();
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = autocorr(xs, mean, variance, 2 * m) + autocorr(xs, mean, variance, 2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        m += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    n as f64 / tau
}
