//! Rotationally invariant α-stable vectors and their closed-form moments.
//!
//! A draw is built as a Gaussian scale mixture `ξ = sqrt(2Λ)·G` where `G` is
//! standard normal in `R^d` and `Λ` is a positive (α/2)-stable variable with
//! Laplace transform `E[exp(-sΛ)] = exp(-s^{α/2})`. This gives
//! `E[exp(i uᵀξ)] = exp(-‖u‖^α)`, and at α = 2 reduces to `N(0, 2I)`.
//!
//! `Λ` is generated exactly with Kanter's representation
//! `Λ = (A(U)/E)^{(1-a)/a}`, `a = α/2`, with `U` uniform on `(0, π)` and `E`
//! a unit exponential.

use std::f64::consts::PI;

use rand::distr::Open01;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{domain, Result};
use crate::special::gratio;

/// Tail index, scale and dimension of the injected noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableSpec {
    pub alpha: f64,
    pub sigma: f64,
    pub dim: usize,
}

impl StableSpec {
    pub fn new(alpha: f64, sigma: f64, dim: usize) -> Result<Self> {
        let spec = Self { alpha, sigma, dim };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0 && self.alpha <= 2.0) {
            return domain(format!(
                "tail index alpha must lie in (1, 2], got {}",
                self.alpha
            ));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return domain(format!(
                "noise scale sigma must be positive, got {}",
                self.sigma
            ));
        }
        if self.dim == 0 {
            return domain("dimension must be at least 1");
        }
        Ok(())
    }
}

/// One stable draw together with the mixing variable and Gaussian that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SubordinatedDraw {
    pub lambda: f64,
    pub gauss: Vec<f64>,
    pub xi: Vec<f64>,
}

/// `ln A(u)` for Kanter's representation with stability index `a ∈ (0, 1)`.
///
/// Exposed so that conditional (Rao–Blackwellised) moment estimators can reuse
/// the exact transform the sampler applies.
pub fn kanter_log_factor(a: f64, u: f64) -> f64 {
    let sau = (a * u).sin().ln();
    (sau - u.sin().ln()) / (1.0 - a) + ((1.0 - a) * u).sin().ln() - sau
}

/// Sampler for the positive (α/2)-stable mixing variable.
#[derive(Debug, Clone, Copy)]
pub struct Subordinator {
    a: f64,
    exponent: f64,
}

impl Subordinator {
    /// `alpha` must lie in the open interval (1, 2); α = 2 is the degenerate `Λ ≡ 1`.
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 1.0 && alpha < 2.0) {
            return domain(format!(
                "subordinator sampler needs alpha in (1, 2), got {alpha}; alpha = 2 is handled by the Gaussian path"
            ));
        }
        let a = alpha / 2.0;
        Ok(Self {
            a,
            exponent: (1.0 - a) / a,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let v: f64 = rng.sample(Open01);
        // V + π/2 with V uniform on (-π/2, π/2)
        let u = PI * v;
        let e: f64 = rng.sample(Exp1);
        (self.exponent * (kanter_log_factor(self.a, u) - e.ln())).exp()
    }
}

/// Draw one mixing variable with Laplace transform `exp(-s^{α/2})`.
pub fn sample_subordinator<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    Ok(Subordinator::new(alpha)?.sample(rng))
}

/// Reusable vector sampler; validates once, then draws without allocation.
#[derive(Debug, Clone, Copy)]
pub struct StableSampler {
    dim: usize,
    sub: Option<Subordinator>,
}

impl StableSampler {
    pub fn new(alpha: f64, dim: usize) -> Result<Self> {
        StableSpec::new(alpha, 1.0, dim)?;
        let sub = if alpha < 2.0 {
            Some(Subordinator::new(alpha)?)
        } else {
            None
        };
        Ok(Self { dim, sub })
    }

    pub fn from_spec(spec: &StableSpec) -> Result<Self> {
        spec.validate()?;
        Self::new(spec.alpha, spec.dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes a unit-scale draw into `out` and returns the mixing variable used.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> f64 {
        debug_assert_eq!(out.len(), self.dim);
        let lambda = match &self.sub {
            Some(s) => s.sample(rng),
            None => 1.0,
        };
        let scale = (2.0 * lambda).sqrt();
        for o in out.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *o = scale * g;
        }
        lambda
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> SubordinatedDraw {
        let lambda = match &self.sub {
            Some(s) => s.sample(rng),
            None => 1.0,
        };
        let gauss: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        let scale = (2.0 * lambda).sqrt();
        let xi = gauss.iter().map(|g| scale * g).collect();
        SubordinatedDraw { lambda, gauss, xi }
    }
}

/// One unit-scale draw with characteristic function `exp(-‖u‖^α)`.
pub fn sample_stable_vector<R: Rng + ?Sized>(spec: &StableSpec, rng: &mut R) -> Result<Vec<f64>> {
    let sampler = StableSampler::from_spec(spec)?;
    let mut out = vec![0.0; spec.dim];
    sampler.sample_into(rng, &mut out);
    Ok(out)
}

/// `E‖ξ‖^p = 2^p Γ(1-p/α) Γ((d+p)/2) / (Γ(1-p/2) Γ(d/2))` for `0 < p < α`.
pub fn stable_abs_moment(alpha: f64, p: f64, dim: usize) -> Result<f64> {
    if !(alpha > 1.0 && alpha <= 2.0) {
        return domain(format!("alpha must lie in (1, 2], got {alpha}"));
    }
    if dim == 0 {
        return domain("dimension must be at least 1");
    }
    if !(p > 0.0) {
        return domain(format!("moment order must be positive, got {p}"));
    }
    if p >= alpha {
        return domain(format!(
            "moment of order {p} diverges: stable moments are finite only below alpha = {alpha}"
        ));
    }
    let d = dim as f64;
    // at α = 2 the two Γ(1-p/2) factors cancel; Γ(1-p/2) has a pole at p = 2
    let tail = if alpha == 2.0 {
        1.0
    } else {
        gratio(1.0 - p / alpha, 1.0 - p / 2.0)
    };
    Ok(2f64.powf(p) * tail * gratio((d + p) / 2.0, d / 2.0))
}

/// `E[Λ^{-1/2}] = (2/√π) Γ(1 + 1/α)`.
pub fn subordinator_neg_half_moment(alpha: f64) -> Result<f64> {
    if !(alpha > 1.0 && alpha <= 2.0) {
        return domain(format!("alpha must lie in (1, 2], got {alpha}"));
    }
    Ok(gratio(1.0 + 1.0 / alpha, 1.5))
}

/// `E[Λ^{(p-1)/2}] = Γ((1+α-p)/α) / Γ((3-p)/2)`.
///
/// Orders at or above `min(1/2, α-1)` are outside the small-moment regime the
/// privacy constants use; they are still evaluated (up to `p < 1`) with a warning.
pub fn subordinator_power_moment(alpha: f64, p: f64) -> Result<f64> {
    if !(alpha > 1.0 && alpha <= 2.0) {
        return domain(format!("alpha must lie in (1, 2], got {alpha}"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return domain(format!("order p must lie in (0, 1], got {p}"));
    }
    if p >= 0.5f64.min(alpha - 1.0) {
        log::warn!("subordinator_power_moment: p = {p} is outside (0, min(1/2, alpha - 1))");
    }
    Ok(gratio((1.0 + alpha - p) / alpha, (3.0 - p) / 2.0))
}
