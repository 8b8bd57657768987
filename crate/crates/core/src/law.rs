//! Walk-length laws on the positive integers.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::Serialize;
use statrs::function::beta::beta_reg;
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{invalid, Error, Result};

/// Law of the walk length `K ≥ 1`.
///
/// `PoissonPlus` and `NegBinPlus` are the Poisson and negative binomial laws
/// shifted by one. `NegBinPlus { r, p }` has `P(K = k + 1) ∝ Γ(r+k)/k! · p^k`.
/// `LimitDegenerate` is the infinite-length limit, where the walk ends at the
/// degree-biased stationary law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum WalkLengthLaw {
    PoissonPlus { lambda: f64 },
    NegBinPlus { r: f64, p: f64 },
    FixedLength(u32),
    LimitDegenerate,
}

/// Eigenvalues within this distance of 0 count as the stationary direction.
pub(crate) const ZERO_EIG_TOL: f64 = 1e-9;

impl WalkLengthLaw {
    pub fn poisson(lambda: f64) -> Self {
        WalkLengthLaw::PoissonPlus { lambda }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            WalkLengthLaw::PoissonPlus { lambda } if !(lambda >= 0.0 && lambda.is_finite()) => {
                Err(invalid(format!("Poisson rate must be finite and >= 0, got {lambda}")))
            }
            WalkLengthLaw::NegBinPlus { r, p } if !(r > 0.0 && r.is_finite() && p > 0.0 && p < 1.0) => {
                Err(invalid(format!("negative binomial needs r > 0 and p in (0,1), got r={r}, p={p}")))
            }
            WalkLengthLaw::FixedLength(0) => Err(invalid("fixed walk length must be >= 1")),
            _ => Ok(()),
        }
    }

    /// `H(z) = E[z^K]` for `z ∈ [-1, 1]`.
    pub fn pgf(&self, z: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&z) {
            return Err(invalid(format!("pgf argument {z} outside [-1, 1]")));
        }
        self.validate()?;
        Ok(self.pgf_unchecked(z))
    }

    pub(crate) fn pgf_unchecked(&self, z: f64) -> f64 {
        match *self {
            WalkLengthLaw::PoissonPlus { lambda } => z * (lambda * (z - 1.0)).exp(),
            WalkLengthLaw::NegBinPlus { r, p } => z * ((1.0 - p) / (1.0 - p * z)).powf(r),
            WalkLengthLaw::FixedLength(k) => z.powi(k as i32),
            WalkLengthLaw::LimitDegenerate => {
                if (1.0 - z).abs() < ZERO_EIG_TOL {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `ln P(K = k)`; `-inf` off the support.
    pub fn ln_pmf(&self, k: u64) -> f64 {
        if k == 0 {
            return f64::NEG_INFINITY;
        }
        let j = (k - 1) as f64;
        match *self {
            WalkLengthLaw::PoissonPlus { lambda } => {
                if lambda == 0.0 {
                    if k == 1 {
                        0.0
                    } else {
                        f64::NEG_INFINITY
                    }
                } else {
                    -lambda + j * lambda.ln() - ln_gamma(j + 1.0)
                }
            }
            WalkLengthLaw::NegBinPlus { r, p } => {
                ln_gamma(r + j) - ln_gamma(r) - ln_gamma(j + 1.0) + r * (1.0 - p).ln() + j * p.ln()
            }
            WalkLengthLaw::FixedLength(len) => {
                if k == len as u64 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            WalkLengthLaw::LimitDegenerate => f64::NEG_INFINITY,
        }
    }

    pub fn pmf(&self, k: u64) -> f64 {
        self.ln_pmf(k).exp()
    }

    /// `P(K > k)` from the regularized incomplete gamma/beta functions.
    pub fn tail(&self, k: u64) -> f64 {
        if k == 0 {
            return 1.0;
        }
        match *self {
            WalkLengthLaw::PoissonPlus { lambda } => {
                if lambda == 0.0 {
                    0.0
                } else {
                    gamma_lr(k as f64, lambda)
                }
            }
            WalkLengthLaw::NegBinPlus { r, p } => beta_reg(k as f64, r, p),
            WalkLengthLaw::FixedLength(len) => {
                if k < len as u64 {
                    1.0
                } else {
                    0.0
                }
            }
            WalkLengthLaw::LimitDegenerate => 1.0,
        }
    }

    /// Smallest `k` with `P(K > k) < eps`; `None` for the degenerate limit.
    pub fn truncation(&self, eps: f64) -> Option<u64> {
        match *self {
            WalkLengthLaw::LimitDegenerate => None,
            WalkLengthLaw::FixedLength(len) => Some(len as u64),
            _ => {
                // start the scan near the mean
                let mut k = (self.mean().floor() as u64).max(1);
                while self.tail(k) >= eps {
                    k += 1;
                }
                Some(k)
            }
        }
    }

    /// `[P(K = 0), P(K = 1), ..., P(K = k_max)]` with `k_max = truncation(eps)`.
    pub fn pmf_table(&self, eps: f64) -> Option<Vec<f64>> {
        let k_max = self.truncation(eps)?;
        Some((0..=k_max).map(|k| self.pmf(k)).collect())
    }

    pub fn mean(&self) -> f64 {
        match *self {
            WalkLengthLaw::PoissonPlus { lambda } => 1.0 + lambda,
            WalkLengthLaw::NegBinPlus { r, p } => 1.0 + r * p / (1.0 - p),
            WalkLengthLaw::FixedLength(k) => k as f64,
            WalkLengthLaw::LimitDegenerate => f64::INFINITY,
        }
    }

    /// Draws a walk length; the degenerate limit has no finite sample.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<u32> {
        match *self {
            WalkLengthLaw::PoissonPlus { lambda } => Ok(1 + poisson_draw(lambda, rng)),
            WalkLengthLaw::NegBinPlus { r, p } => {
                let scale = p / (1.0 - p);
                let g = Gamma::new(r, scale).map_err(|e| invalid(e.to_string()))?;
                Ok(1 + poisson_draw(g.sample(rng), rng))
            }
            WalkLengthLaw::FixedLength(k) => Ok(k),
            WalkLengthLaw::LimitDegenerate => Err(Error::UnsupportedMode(
                "the infinite-length limit cannot be sampled by stepping".into(),
            )),
        }
    }
}

/// Poisson draw that accepts a zero rate.
pub(crate) fn poisson_draw<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u32 {
    if rate <= 0.0 {
        return 0;
    }
    let x: f64 = Poisson::new(rate).expect("positive finite rate").sample(rng);
    x as u32
}
