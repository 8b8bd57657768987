//! Normalized-Laplacian spectra and mixed random-walk kernels.
//!
//! For a walk-length law with pgf `H`, the terminal-vertex matrix is
//! `Q = D^{-1/2} (Σ_i H(1-η_i) u_i u_iᵀ) D^{1/2}`, where `(η_i, u_i)` are the
//! eigenpairs of `L = I - D^{-1/2} A D^{-1/2}`.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::law::WalkLengthLaw;

/// Round-off below this magnitude is clipped; anything more negative is an error.
pub const NEGATIVE_CLIP_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Ascending, clipped to `[0, 2]`.
    pub eigenvalues: DVector<f64>,
    /// Column `i` is the unit eigenvector of `eigenvalues[i]`.
    pub eigenvectors: DMatrix<f64>,
    pub degrees: Vec<f64>,
}

fn require_connected(g: &Graph) -> Result<()> {
    if g.n_edges() == 0 || !g.is_connected() {
        return Err(Error::Disconnected);
    }
    Ok(())
}

pub fn adjacency_matrix(g: &Graph) -> DMatrix<f64> {
    let n = g.n_vertices();
    let mut a = DMatrix::zeros(n, n);
    for &(u, v) in g.edges() {
        if u == v {
            a[(u, u)] += 2.0;
        } else {
            a[(u, v)] += 1.0;
            a[(v, u)] += 1.0;
        }
    }
    a
}

pub fn normalized_laplacian(g: &Graph) -> DMatrix<f64> {
    let n = g.n_vertices();
    let isd: Vec<f64> = g
        .degrees()
        .iter()
        .map(|&d| if d > 0 { 1.0 / (d as f64).sqrt() } else { 0.0 })
        .collect();
    let a = adjacency_matrix(g);
    DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j && g.degree(i) > 0 { 1.0 } else { 0.0 };
        id - isd[i] * a[(i, j)] * isd[j]
    })
}

pub fn spectrum(g: &Graph) -> Result<Spectrum> {
    require_connected(g)?;
    let eig = SymmetricEigen::new(normalized_laplacian(g));
    let n = g.n_vertices();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = DVector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i].clamp(0.0, 2.0)));
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, idx[c])]);
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
        degrees: g.degrees().iter().map(|&d| d as f64).collect(),
    })
}

/// `Q` for `law` from a precomputed spectrum.
pub fn kernel_from_spectrum(spec: &Spectrum, law: &WalkLengthLaw) -> Result<DMatrix<f64>> {
    law.validate()?;
    let n = spec.degrees.len();
    let h: Vec<f64> = spec
        .eigenvalues
        .iter()
        .map(|&eta| law.pgf_unchecked(1.0 - eta))
        .collect();
    // K = U diag(h) Uᵀ
    let mut uh = spec.eigenvectors.clone();
    for (c, &hc) in h.iter().enumerate() {
        uh.column_mut(c).scale_mut(hc);
    }
    let k = &uh * spec.eigenvectors.transpose();
    let sq: Vec<f64> = spec.degrees.iter().map(|d| d.sqrt()).collect();
    let mut q = DMatrix::from_fn(n, n, |i, j| k[(i, j)] * sq[j] / sq[i]);
    clip_rows(&mut q)?;
    Ok(q)
}

fn clip_rows(q: &mut DMatrix<f64>) -> Result<()> {
    for i in 0..q.nrows() {
        let mut row = q.row_mut(i);
        let mut s = 0.0;
        for x in row.iter_mut() {
            if *x < 0.0 {
                if *x < -NEGATIVE_CLIP_TOL {
                    return Err(Error::Numerical(format!(
                        "kernel entry {x:e} in row {i} is negative beyond round-off"
                    )));
                }
                *x = 0.0;
            }
            s += *x;
        }
        if s <= 0.0 {
            return Err(Error::Numerical(format!("kernel row {i} has no mass")));
        }
        row /= s;
    }
    Ok(())
}

/// `Q_{uv} = P(walk from u of random length ends at v)`.
pub fn rw_prob_matrix(g: &Graph, law: &WalkLengthLaw) -> Result<DMatrix<f64>> {
    kernel_from_spectrum(&spectrum(g)?, law)
}

/// `D^{-1} A`; an isolated vertex keeps an identity row.
pub fn transition_matrix(g: &Graph) -> DMatrix<f64> {
    let n = g.n_vertices();
    let mut p = DMatrix::zeros(n, n);
    for v in 0..n {
        let d = g.degree(v);
        if d == 0 {
            p[(v, v)] = 1.0;
            continue;
        }
        let w = 1.0 / d as f64;
        for &u in g.slots(v) {
            p[(v, u)] += w;
        }
    }
    p
}

/// `(D^{-1} A)^k` by repeated squaring.
pub fn fixed_step_matrix(g: &Graph, k: u32) -> DMatrix<f64> {
    let n = g.n_vertices();
    let mut result = DMatrix::identity(n, n);
    let mut base = transition_matrix(g);
    let mut e = k;
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result
}

/// `S(v) = deg(v) / vol(g)`.
pub fn degree_biased(g: &Graph) -> Vec<f64> {
    let vol = g.volume() as f64;
    g.degrees().iter().map(|&d| d as f64 / vol).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct MixingTime {
    /// `None` when the threshold is not reached within `t_max` steps.
    pub per_vertex: Vec<Option<usize>>,
    /// Mean over vertices that mixed; `None` if none did.
    pub mean: Option<f64>,
    pub threshold: f64,
    pub t_max: usize,
}

pub const DEFAULT_MIXING_THRESHOLD: f64 = 0.25;

/// First `t ≤ t_max` with `‖e_uᵀ P^t − S‖₂ ≤ threshold`, per start vertex `u`.
pub fn mixing_time_l2(g: &Graph, threshold: f64, t_max: usize) -> Result<MixingTime> {
    require_connected(g)?;
    if !(threshold > 0.0) {
        return Err(crate::error::invalid("mixing threshold must be positive"));
    }
    let n = g.n_vertices();
    let s = degree_biased(g);
    let dist = |p: &[f64]| -> f64 { p.iter().zip(&s).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() };
    let mut per_vertex = Vec::with_capacity(n);
    let mut cur = vec![0.0; n];
    let mut next = vec![0.0; n];
    for u in 0..n {
        cur.iter_mut().for_each(|x| *x = 0.0);
        cur[u] = 1.0;
        let mut hit = (dist(&cur) <= threshold).then_some(0);
        let mut t = 0;
        while hit.is_none() && t < t_max {
            crate::walk::step_distribution(g, &cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
            t += 1;
            if dist(&cur) <= threshold {
                hit = Some(t);
            }
        }
        per_vertex.push(hit);
    }
    let finite: Vec<f64> = per_vertex.iter().flatten().map(|&t| t as f64).collect();
    let mean = (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64);
    Ok(MixingTime {
        per_vertex,
        mean,
        threshold,
        t_max,
    })
}

type CacheKey = (usize, Vec<(usize, usize)>);

/// Spectra keyed by the sorted edge multiset; shared between threads.
#[derive(Debug, Default)]
pub struct SpectralCache {
    map: RwLock<HashMap<CacheKey, Arc<Spectrum>>>,
}

impl SpectralCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_compute(&self, g: &Graph) -> Result<Arc<Spectrum>> {
        let key = (g.n_vertices(), g.canonical_edges());
        if let Some(s) = self.map.read().expect("cache lock").get(&key) {
            return Ok(Arc::clone(s));
        }
        let s = Arc::new(spectrum(g)?);
        self.map.write().expect("cache lock").insert(key, Arc::clone(&s));
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
