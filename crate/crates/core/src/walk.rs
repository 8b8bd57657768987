//! Random-walk stepping and truncated-series rows of the kernel.
//!
//! A row `e_x Q` equals `Σ_k P(K=k) e_x (D^{-1}A)^k`. Propagating a sparse
//! distribution costs `O(|E|)` per step, far cheaper than a dense
//! eigendecomposition when only a few rows are needed.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::law::WalkLengthLaw;
use crate::spectral::degree_biased;

/// Default truncation mass for series rows.
pub const SERIES_TAIL_EPS: f64 = 1e-13;

/// `out = dist · D^{-1}A`.
pub fn step_distribution(g: &Graph, dist: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for (x, &px) in dist.iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        let nb = g.slots(x);
        if nb.is_empty() {
            out[x] += px;
            continue;
        }
        let share = px / nb.len() as f64;
        for &y in nb {
            out[y] += share;
        }
    }
}

/// Terminal vertex of a `k`-step simple random walk from `start`.
pub fn simulate_walk<R: Rng + ?Sized>(g: &Graph, start: usize, k: u32, rng: &mut R) -> Result<usize> {
    if start >= g.n_vertices() {
        return Err(Error::VertexOutOfRange {
            vertex: start,
            n: g.n_vertices(),
        });
    }
    let mut v = start;
    for _ in 0..k {
        let nb = g.slots(v);
        if nb.is_empty() {
            return Err(Error::Disconnected);
        }
        v = nb[rng.random_range(0..nb.len())];
    }
    Ok(v)
}

/// Calls `f(k, e_x P^k)` for `k = 0..=k_max`.
pub fn for_each_power<F: FnMut(usize, &[f64])>(g: &Graph, x: usize, k_max: usize, mut f: F) {
    let n = g.n_vertices();
    let mut cur = vec![0.0; n];
    let mut next = vec![0.0; n];
    cur[x] = 1.0;
    f(0, &cur);
    for k in 1..=k_max {
        step_distribution(g, &cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
        f(k, &cur);
    }
}

/// Row `x` of the kernel by the truncated series; tail mass below `eps`.
/// The discarded tail is added back in proportion to the truncated row.
pub fn series_row(g: &Graph, law: &WalkLengthLaw, x: usize, eps: f64) -> Result<Vec<f64>> {
    law.validate()?;
    if x >= g.n_vertices() {
        return Err(Error::VertexOutOfRange {
            vertex: x,
            n: g.n_vertices(),
        });
    }
    let Some(pmf) = law.pmf_table(eps) else {
        return Ok(degree_biased(g));
    };
    let mut row = vec![0.0; g.n_vertices()];
    for_each_power(g, x, pmf.len() - 1, |k, dist| {
        let w = pmf[k];
        if w > 0.0 {
            for (r, &d) in row.iter_mut().zip(dist) {
                *r += w * d;
            }
        }
    });
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|r| *r /= s);
    Ok(row)
}

/// Whole kernel by the series; a test oracle for the spectral path.
pub fn series_matrix(g: &Graph, law: &WalkLengthLaw, eps: f64) -> Result<DMatrix<f64>> {
    let n = g.n_vertices();
    let mut q = DMatrix::zeros(n, n);
    for x in 0..n {
        let row = series_row(g, law, x, eps)?;
        for (y, v) in row.into_iter().enumerate() {
            q[(x, y)] = v;
        }
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphMode;
    use crate::spectral::{fixed_step_matrix, rw_prob_matrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn walk_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = Graph::from_edges(&[(0, 1)], GraphMode::Simple).unwrap();
        assert_eq!(simulate_walk(&e, 0, 0, &mut rng).unwrap(), 0);
        assert_eq!(simulate_walk(&e, 0, 1, &mut rng).unwrap(), 1);
        assert!(simulate_walk(&e, 5, 1, &mut rng).is_err());

        let p3 = Graph::from_edges(&[(0, 1), (1, 2)], GraphMode::Simple).unwrap();
        let n = 100_000;
        let zeros = (0..n).filter(|_| simulate_walk(&p3, 1, 1, &mut rng).unwrap() == 0).count();
        let want = fixed_step_matrix(&p3, 1)[(1, 0)];
        assert!((zeros as f64 / n as f64 - want).abs() < 0.01);
    }

    #[test]
    fn self_loop_slots_count_twice() {
        // vertex 0: loop (2 slots) + edge to 1 → stays with prob 2/3
        let g = Graph::from_edges(&[(0, 0), (0, 1)], GraphMode::Multigraph).unwrap();
        let mut out = vec![0.0; 2];
        step_distribution(&g, &[1.0, 0.0], &mut out);
        assert!((out[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn series_matches_spectral() {
        let g = Graph::from_edges(
            &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 3), (3, 4), (4, 1), (4, 1), (4, 5)],
            GraphMode::Multigraph,
        )
        .unwrap();
        for law in [
            WalkLengthLaw::poisson(0.0),
            WalkLengthLaw::poisson(4.0),
            WalkLengthLaw::NegBinPlus { r: 1.5, p: 0.6 },
            WalkLengthLaw::FixedLength(5),
            WalkLengthLaw::LimitDegenerate,
        ] {
            let a = series_matrix(&g, &law, SERIES_TAIL_EPS).unwrap();
            let b = rw_prob_matrix(&g, &law).unwrap();
            assert!((a - b).amax() < 1e-9, "{law:?}");
        }
    }
}
