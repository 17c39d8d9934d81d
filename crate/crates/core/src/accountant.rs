//! Closed-form privacy constants: drift pairs `(β, H)` for the Lyapunov
//! functions `V_p(θ) = (1 + ‖θ - c‖²)^{p/2}`, the kernel-distance constant
//! `C_γ` (with or without a universal stable point), and the `(0, δ)` budget.

use std::fmt;

use crate::error::{domain, Error, Result};
use crate::problems::{stable_point_norm_bound, RegularityConstants};
use crate::report::{AuditReport, KeyValues};
use crate::special::gratio;
use crate::stable_noise::{
    stable_abs_moment, subordinator_neg_half_moment, subordinator_power_moment,
};
use crate::vecops::{dist, Samples};

/// `min(m/(2K₁²), 1/m, 1)`; step sizes must lie strictly below it.
pub fn step_size_limit(m: f64, k1: f64) -> Result<f64> {
    if !(m > 0.0 && k1 > 0.0) {
        return domain(format!(
            "step_size_limit needs m, K1 > 0, got m = {m}, K1 = {k1}"
        ));
    }
    Ok((m / (2.0 * k1 * k1)).min(1.0 / m).min(1.0))
}

fn regime<T>(bound: &'static str, detail: impl Into<String>) -> Result<T> {
    Err(Error::Regime {
        bound,
        detail: detail.into(),
    })
}

/// Which drift bound a `(β, H)` pair comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `0 < p ≤ 1`.
    SmallP,
    /// `1 ≤ p < α < 2`.
    LargeP,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::SmallP => "small-p",
            Regime::LargeP => "large-p",
        })
    }
}

/// Exponent of the Lyapunov function; the budget pairs `V_p` with `V_{1+p}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovExponent {
    pub p: f64,
}

impl LyapunovExponent {
    /// Exponent admissible for the kernel-distance constant: `0 < p < min(1/2, α-1)`.
    pub fn small(p: f64, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let hi = 0.5f64.min(alpha - 1.0);
        if !(p > 0.0 && p < hi) {
            return regime(
                "kernel distance constant",
                format!(
                    "p = {p} must lie in (0, min(1/2, alpha - 1)) = (0, {hi}) for alpha = {alpha}"
                ),
            );
        }
        Ok(Self { p })
    }

    /// Exponent admissible for the large-p drift: `1 ≤ p < α`.
    pub fn large(p: f64, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(p >= 1.0 && p < alpha) {
            return regime(
                "large-p drift",
                format!("p = {p} must lie in [1, alpha) = [1, {alpha})"),
            );
        }
        Ok(Self { p })
    }

    /// `min(0.49, (α-1)/2)`.
    pub fn default_for(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Self::small(0.49f64.min((alpha - 1.0) / 2.0), alpha)
    }

    pub fn partner(&self) -> f64 {
        1.0 + self.p
    }

    /// `(1 + ‖θ - c‖²)^{p/2}`.
    pub fn eval(&self, theta: &[f64], center: &[f64]) -> f64 {
        lyapunov(self.p, dist(theta, center))
    }
}

/// `(1 + r²)^{p/2}` evaluated at `r = ‖θ - c‖`.
#[inline]
pub fn lyapunov(p: f64, r: f64) -> f64 {
    (1.0 + r * r).powf(p / 2.0)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 1.0 && alpha <= 2.0) {
        return domain(format!("alpha must lie in (1, 2], got {alpha}"));
    }
    Ok(())
}

fn check_common(sigma: f64, eta: f64, dim: usize) -> Result<()> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return domain(format!("sigma must be nonnegative, got {sigma}"));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return domain(format!("step size must be positive, got {eta}"));
    }
    if dim == 0 {
        return domain("dimension must be at least 1");
    }
    Ok(())
}

/// Large-p intermediate constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LargePTerms {
    /// Fractional-Laplacian constant `α 2^α Γ((d+α)/2) / (Γ(1-α/2) Γ(d/2))`.
    pub sc: f64,
    pub b1: f64,
    pub sc1: f64,
}

/// `(PV_p)(θ) ≤ β V_p(θ) + H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftParams {
    pub p: f64,
    pub beta: f64,
    pub h: f64,
    pub regime: Regime,
    pub large: Option<LargePTerms>,
}

impl DriftParams {
    /// `H / (1 - β)`, the bound on the stationary `V_p` moment.
    pub fn stationary_bound(&self) -> f64 {
        self.h / (1.0 - self.beta)
    }

    /// `β V + H`.
    pub fn rhs(&self, v: f64) -> f64 {
        self.beta * v + self.h
    }
}

/// `β = 1 - ηmp/2` and `H = 1 + (2ηK)^{p/2} + σ^p E‖ξ‖^p`.
pub fn drift_small_p(
    p: f64,
    alpha: f64,
    sigma: f64,
    eta: f64,
    consts: &RegularityConstants,
    dim: usize,
) -> Result<DriftParams> {
    check_alpha(alpha)?;
    check_common(sigma, eta, dim)?;
    consts.validate()?;
    if !(p > 0.0 && p <= 1.0 && p < alpha) {
        return regime(
            "small-p drift",
            format!("p = {p} must satisfy 0 < p <= 1 and p < alpha = {alpha}"),
        );
    }
    let lim = (consts.m / (consts.k1 * consts.k1)).min(1.0 / consts.m);
    if eta >= lim {
        return regime(
            "small-p drift",
            format!("step size {eta} must be below min(m/K1^2, 1/m) = {lim}"),
        );
    }
    let beta = 1.0 - eta * consts.m * p / 2.0;
    let h = 1.0
        + (2.0 * eta * consts.k).powf(p / 2.0)
        + sigma.powf(p) * stable_abs_moment(alpha, p, dim)?;
    Ok(DriftParams {
        p,
        beta,
        h,
        regime: Regime::SmallP,
        large: None,
    })
}

/// `α 2^α Γ((d+α)/2) / (Γ(1-α/2) Γ(d/2))` for `1 < α < 2`.
pub fn fractional_laplacian_constant(alpha: f64, dim: usize) -> Result<f64> {
    if !(alpha > 1.0 && alpha < 2.0) {
        return regime(
            "large-p drift",
            format!("1/(2-alpha) factor diverges at alpha = {alpha}"),
        );
    }
    let d = dim as f64;
    Ok(
        alpha * 2f64.powf(alpha) * gratio((d + alpha) / 2.0, d / 2.0)
            / gratio(1.0 - alpha / 2.0, 1.0),
    )
}

/// `β = 1 - mpη/4` and `H = η(p(m/2 + K) + m(2K)^{p/2}) + sC₁`.
pub fn drift_large_p(
    p: f64,
    alpha: f64,
    sigma: f64,
    eta: f64,
    consts: &RegularityConstants,
    dim: usize,
) -> Result<DriftParams> {
    check_alpha(alpha)?;
    check_common(sigma, eta, dim)?;
    consts.validate()?;
    if alpha >= 2.0 {
        return regime(
            "large-p drift",
            "1/(2-alpha) factor diverges at alpha = 2; no finite Gaussian constant",
        );
    }
    LyapunovExponent::large(p, alpha)?;
    let lim = step_size_limit(consts.m, consts.k1)?;
    if eta >= lim {
        return regime(
            "large-p drift",
            format!("step size {eta} must be below min(m/(2 K1^2), 1/m, 1) = {lim}"),
        );
    }
    let (m, k) = (consts.m, consts.k);
    let d = dim as f64;
    let sc = fractional_laplacian_constant(alpha, dim)?;
    let sa = sigma.powf(alpha);
    let lead = sc * p / (alpha - 1.0);
    let b1 = (sa / eta) * lead * (4.0 / (m * p)).powf(p - 1.0);
    let moment = gratio(1.0 - (p - 1.0) / alpha, 1.0 - (p - 1.0) / 2.0)
        * gratio((d + p - 1.0) / 2.0, d / 2.0);
    let sc1 = eta * b1.powf(p) / p
        + sc * sa
            * (p * (d.sqrt() + 2.0) / (2.0 - alpha)
                + p * (2.0 * eta * k).powf((p - 1.0) / 2.0) / (alpha - 1.0)
                + 1.0 / (alpha - p))
        + lead
            * (2f64.powf(p - 1.0) * alpha * sigma.powf(alpha + p - 1.0) / (alpha + p - 1.0))
            * moment;
    let h = eta * (p * (m / 2.0 + k) + m * (2.0 * k).powf(p / 2.0)) + sc1;
    let beta = 1.0 - m * p * eta / 4.0;
    Ok(DriftParams {
        p,
        beta,
        h,
        regime: Regime::LargeP,
        large: Some(LargePTerms { sc, b1, sc1 }),
    })
}

/// `C(p) = E‖G‖^{2p} = 2^p Γ(p + d/2) / Γ(d/2)`.
pub fn chi_moment_c(p: f64, dim: usize) -> Result<f64> {
    if !(p > 0.0) || dim == 0 {
        return domain(format!(
            "chi_moment_c needs p > 0 and d >= 1, got p = {p}, d = {dim}"
        ));
    }
    let d = dim as f64;
    Ok(2f64.powf(p) * gratio(p + d / 2.0, d / 2.0))
}

/// Which stable-point assumption the kernel-distance constant uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaChain {
    /// One point zeroes every record's gradient; `V` is centred there.
    Universal,
    /// Each dataset has its own stable point; `V` is centred at the neighbour's.
    PerDataset,
}

impl fmt::Display for GammaChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GammaChain::Universal => "universal",
            GammaChain::PerDataset => "per-dataset",
        })
    }
}

/// Every intermediate of the kernel-distance constant.
///
/// For the per-dataset chain `c6`, `c7` hold `Ĉ₆`, `Ĉ₇` and `offset` holds `Ĉ`;
/// for the universal chain `offset` is `‖ϑ⋆‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaIngredients {
    pub chain: GammaChain,
    pub p: f64,
    pub n: usize,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub chi: f64,
    pub c6: f64,
    pub c7: f64,
    pub offset: f64,
    pub c_gamma: f64,
}

impl GammaIngredients {
    /// `(C₆ + C₇)(2 + offset)`: the supremum of the per-step bound over `V̂_p`, per dataset size.
    pub fn sup_ratio(&self) -> f64 {
        (self.c6 + self.c7) * (2.0 + self.offset)
    }

    pub fn key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.text("gamma_chain", self.chain)
            .num("c1", self.c1)
            .num("c2", self.c2)
            .num("c3", self.c3)
            .num("c4", self.c4)
            .num("c5", self.c5)
            .num("chi_moment", self.chi);
        match self.chain {
            GammaChain::Universal => {
                kv.num("c6", self.c6)
                    .num("c7", self.c7)
                    .num("theta_star_norm", self.offset)
                    .num("c_gamma", self.c_gamma);
            }
            GammaChain::PerDataset => {
                kv.num("c6_hat", self.c6)
                    .num("c7_hat", self.c7)
                    .num("c_hat", self.offset)
                    .num("c_gamma_hat", self.c_gamma);
            }
        }
        kv
    }
}

struct GammaCore {
    c1: f64,
    c2: f64,
    c3: f64,
    c4: f64,
    c5: f64,
    chi: f64,
    c6: f64,
    noise: f64,
}

#[allow(clippy::too_many_arguments)]
fn gamma_core(
    p: f64,
    alpha: f64,
    sigma: f64,
    eta: f64,
    consts: &RegularityConstants,
    dim: usize,
    n: usize,
) -> Result<GammaCore> {
    LyapunovExponent::small(p, alpha)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return domain(format!("sigma must be positive, got {sigma}"));
    }
    check_common(sigma, eta, dim)?;
    consts.validate()?;
    if n == 0 {
        return Err(Error::TooFewPoints { needed: 1, got: 0 });
    }
    let contraction = 1.0 - 2.0 * eta * consts.m + eta * eta * consts.k1 * consts.k1;
    if contraction < 0.0 {
        return regime(
            "kernel distance constant",
            format!("1 - 2 eta m + eta^2 K1^2 = {contraction} is negative"),
        );
    }
    let c1 = 2.0 * consts.k2 * consts.diameter * eta / (n as f64 * sigma);
    let c2 = subordinator_neg_half_moment(alpha)?;
    let c3 = subordinator_power_moment(alpha, p)?;
    let c4 = 2.0 * c1 * c2;
    let c5 = 2.0 * c1 * c3;
    let chi = chi_moment_c(p, dim)?;
    let c6 = c4 * contraction.powf(p / 2.0);
    let noise = c5 * std::f64::consts::SQRT_2 * sigma.powf(p) * chi.sqrt();
    Ok(GammaCore {
        c1,
        c2,
        c3,
        c4,
        c5,
        chi,
        c6,
        noise,
    })
}

/// `C_γ = n (C₆ + C₇)(2 + ‖ϑ⋆‖)` using `consts.theta_star_norm` as `‖ϑ⋆‖`.
pub fn c_gamma(
    p: f64,
    alpha: f64,
    sigma: f64,
    eta: f64,
    consts: &RegularityConstants,
    dim: usize,
    n: usize,
) -> Result<GammaIngredients> {
    let g = gamma_core(p, alpha, sigma, eta, consts, dim, n)?;
    let c7 = g.c4 * (std::f64::consts::SQRT_2 + (2.0 * eta * consts.k).powf(p / 2.0)) + g.noise;
    let offset = consts.theta_star_norm;
    let c_gamma = n as f64 * (g.c6 + c7) * (2.0 + offset);
    Ok(GammaIngredients {
        chain: GammaChain::Universal,
        p,
        n,
        c1: g.c1,
        c2: g.c2,
        c3: g.c3,
        c4: g.c4,
        c5: g.c5,
        chi: g.chi,
        c6: g.c6,
        c7,
        offset,
        c_gamma,
    })
}

/// `Ĉ_γ = n (Ĉ₆ + Ĉ₇)(2 + Ĉ)` with `Ĉ = (B + sqrt(B² + 4mK))/(2m)`.
pub fn c_gamma_hat(
    p: f64,
    alpha: f64,
    sigma: f64,
    eta: f64,
    consts: &RegularityConstants,
    dim: usize,
    n: usize,
) -> Result<GammaIngredients> {
    let g = gamma_core(p, alpha, sigma, eta, consts, dim, n)?;
    let c_hat = stable_point_norm_bound(consts.b, consts.m, consts.k);
    let c7 = g.c4
        + g.c4 * (2.0 * eta * consts.k).powf(p / 2.0)
        + g.noise
        + std::f64::consts::SQRT_2 * g.c4 * c_hat.powf(p);
    let c_gamma = n as f64 * (g.c6 + c7) * (2.0 + c_hat);
    Ok(GammaIngredients {
        chain: GammaChain::PerDataset,
        p,
        n,
        c1: g.c1,
        c2: g.c2,
        c3: g.c3,
        c4: g.c4,
        c5: g.c5,
        chi: g.chi,
        c6: g.c6,
        c7,
        offset: c_hat,
        c_gamma,
    })
}

/// `(C₆‖θ - c‖^p + C₇)(1 + ‖θ - c‖ + offset)`: the analytic bound on the
/// `V_p`-distance between the two one-step kernels started at `θ`.
pub fn per_step_vnorm_bound(theta: &[f64], center: &[f64], ing: &GammaIngredients) -> f64 {
    let r = dist(theta, center);
    (ing.c6 * r.powf(ing.p) + ing.c7) * (1.0 + r + ing.offset)
}

/// Conditional covariance used for the Gaussian KL between the two kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KlConvention {
    /// `2Λσ² I`, matching the sampler (`ξ = sqrt(2Λ) G`).
    #[default]
    Calibrated,
    /// `Λσ² I`, as the constant chain is written.
    Literal,
}

/// `η²‖g_a - g_b‖² / (2Λσ²)` (calibrated) or `/ (Λσ²)` (literal).
pub fn kl_conditional(
    grad_a: &[f64],
    grad_b: &[f64],
    eta: f64,
    sigma: f64,
    lambda: f64,
    convention: KlConvention,
) -> Result<f64> {
    if !(lambda > 0.0) {
        return domain(format!("subordinator value must be positive, got {lambda}"));
    }
    if !(sigma > 0.0) {
        return domain(format!("sigma must be positive, got {sigma}"));
    }
    if grad_a.len() != grad_b.len() {
        return Err(Error::DimensionMismatch {
            expected: grad_a.len(),
            got: grad_b.len(),
        });
    }
    let var = match convention {
        KlConvention::Calibrated => 2.0 * lambda * sigma * sigma,
        KlConvention::Literal => lambda * sigma * sigma,
    };
    let d2 = dist(grad_a, grad_b).powi(2);
    Ok(eta * eta * d2 / var)
}

/// The non-explicit ergodicity constants `c > 0`, `ρ ∈ (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErgodicityParams {
    pub c: f64,
    pub rho: f64,
    /// True when `(c, ρ)` is the heuristic default rather than user input.
    pub heuristic: bool,
}

impl ErgodicityParams {
    pub fn new(c: f64, rho: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return domain(format!("ergodicity constant c must be positive, got {c}"));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return domain(format!("ergodicity rate rho must lie in (0, 1), got {rho}"));
        }
        Ok(Self {
            c,
            rho,
            heuristic: false,
        })
    }

    /// `c = 1`, `ρ = β` of the small-p drift. NON-RIGOROUS.
    pub fn heuristic(small_drift: &DriftParams) -> Result<Self> {
        let mut e = Self::new(1.0, small_drift.beta)?;
        e.heuristic = true;
        Ok(e)
    }
}

/// Whether updates use all records (GD) or a random batch (SGD).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Gd,
    Sgd { batch: usize },
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::Gd => f.write_str("gd"),
            Algorithm::Sgd { batch } => write!(f, "sgd(b={batch})"),
        }
    }
}

/// A computed `(0, δ)` budget and what it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyBudget {
    pub delta: f64,
    /// `δ (1 - ρ) / c`, free of the non-explicit ergodicity constants.
    pub delta_normalized: f64,
    /// `k → ∞` limit of δ.
    pub delta_uniform: f64,
    pub erg: ErgodicityParams,
    pub k: u64,
    pub n: usize,
    pub c_gamma: f64,
    pub drift: DriftParams,
    pub gamma: Option<GammaIngredients>,
    pub context: KeyValues,
}

impl PrivacyBudget {
    /// Flat `name = value` record of δ and every ingredient.
    pub fn key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.num("delta", self.delta)
            .num("delta_normalized", self.delta_normalized)
            .num("delta_time_uniform", self.delta_uniform)
            .num("delta_times_n", self.delta * self.n as f64)
            .num("c", self.erg.c)
            .num("rho", self.erg.rho)
            .text(
                "ergodicity_constants",
                if self.erg.heuristic {
                    "NON-RIGOROUS heuristic (c = 1, rho = beta_p)"
                } else {
                    "user-supplied"
                },
            )
            .int("k", self.k)
            .int("n", self.n as u64)
            .num("c_gamma_value", self.c_gamma)
            .num("lyapunov_exponent_hat", self.drift.p)
            .num("beta_hat", self.drift.beta)
            .num("h_hat", self.drift.h);
        if let Some(l) = self.drift.large {
            kv.num("sc", l.sc).num("b1", l.b1).num("sc1", l.sc1);
        }
        if let Some(g) = &self.gamma {
            kv.extend(&g.key_values());
        }
        kv.extend(&self.context);
        kv
    }
}

/// `δ = (1/n) c (1 - ρ^k) C_γ H / (2 (1 - ρ)(1 - β))` with `(β, H)` the large-p drift of `V_{1+p}`.
pub fn delta_bound(
    erg: &ErgodicityParams,
    k: u64,
    n: usize,
    c_gamma_value: f64,
    drift: &DriftParams,
) -> Result<PrivacyBudget> {
    if drift.regime != Regime::LargeP {
        return regime(
            "privacy budget",
            "the budget needs the large-p drift of V_{1+p}",
        );
    }
    if !(erg.rho > 0.0 && erg.rho < 1.0 && erg.c > 0.0) {
        return domain(format!(
            "invalid ergodicity constants c = {}, rho = {}",
            erg.c, erg.rho
        ));
    }
    if n == 0 {
        return Err(Error::TooFewPoints { needed: 1, got: 0 });
    }
    if !(c_gamma_value >= 0.0) {
        return domain(format!("C_gamma must be nonnegative, got {c_gamma_value}"));
    }
    let kk = i32::try_from(k).unwrap_or(i32::MAX);
    let base = c_gamma_value * drift.h / (2.0 * (1.0 - erg.rho) * (1.0 - drift.beta)) / n as f64;
    let delta_uniform = erg.c * base;
    let delta = erg.c * (1.0 - erg.rho.powi(kk)) * base;
    Ok(PrivacyBudget {
        delta,
        delta_normalized: delta * (1.0 - erg.rho) / erg.c,
        delta_uniform,
        erg: *erg,
        k,
        n,
        c_gamma: c_gamma_value,
        drift: *drift,
        gamma: None,
        context: KeyValues::new(),
    })
}

/// Everything the end-to-end budget needs.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetRequest {
    pub alpha: f64,
    pub sigma: f64,
    pub eta: f64,
    /// Lyapunov exponent; `None` picks `min(0.49, (α-1)/2)`.
    pub p: Option<f64>,
    pub dim: usize,
    pub n: usize,
    pub k: u64,
    pub consts: RegularityConstants,
    /// `None` uses the NON-RIGOROUS default `c = 1`, `ρ = β_p`.
    pub erg: Option<ErgodicityParams>,
    /// Use the universal-stable-point chain (`C_γ`) instead of `Ĉ_γ`.
    pub universal_stable_point: bool,
    pub algorithm: Algorithm,
}

/// Computes δ for GD or SGD. Batch size does not enter the bound, so both
/// paths return the same δ for the same inputs.
pub fn privacy_budget(req: &BudgetRequest) -> Result<PrivacyBudget> {
    let lp = match req.p {
        Some(p) => LyapunovExponent::small(p, req.alpha)?,
        None => LyapunovExponent::default_for(req.alpha)?,
    };
    let p = lp.p;
    if let Algorithm::Sgd { batch } = req.algorithm {
        if batch == 0 || batch > req.n {
            return domain(format!("batch size {batch} must lie in [1, n = {}]", req.n));
        }
    }
    let lim = step_size_limit(req.consts.m, req.consts.k1)?;
    if req.eta >= lim {
        return regime(
            "step size",
            format!(
                "eta = {} must be below min(m/(2 K1^2), 1/m, 1) = {lim}",
                req.eta
            ),
        );
    }
    let gamma = if req.universal_stable_point {
        c_gamma(
            p,
            req.alpha,
            req.sigma,
            req.eta,
            &req.consts,
            req.dim,
            req.n,
        )?
    } else {
        c_gamma_hat(
            p,
            req.alpha,
            req.sigma,
            req.eta,
            &req.consts,
            req.dim,
            req.n,
        )?
    };
    let hat = drift_large_p(
        lp.partner(),
        req.alpha,
        req.sigma,
        req.eta,
        &req.consts,
        req.dim,
    )?;
    let small = drift_small_p(p, req.alpha, req.sigma, req.eta, &req.consts, req.dim)?;
    let erg = match req.erg {
        Some(e) => e,
        None => ErgodicityParams::heuristic(&small)?,
    };
    let mut budget = delta_bound(&erg, req.k, req.n, gamma.c_gamma, &hat)?;
    budget.gamma = Some(gamma);
    let mut ctx = KeyValues::new();
    ctx.text("algorithm", req.algorithm)
        .num("alpha", req.alpha)
        .num("sigma", req.sigma)
        .num("eta", req.eta)
        .num("lyapunov_exponent", p)
        .int("d", req.dim as u64)
        .num("beta_p", small.beta)
        .num("h_p", small.h)
        .num("k1", req.consts.k1)
        .num("k2", req.consts.k2)
        .num("b", req.consts.b)
        .num("m", req.consts.m)
        .num("k_offset", req.consts.k)
        .num("diameter", req.consts.diameter)
        .num("step_size_limit", lim);
    budget.context = ctx;
    Ok(budget)
}

/// Fixed inputs of a dimension sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingParams {
    pub sigma: f64,
    pub eta: f64,
    pub consts: RegularityConstants,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub alpha: f64,
    pub p: f64,
    /// `(d, H_{1+p}(d))`.
    pub rows: Vec<(usize, f64)>,
    /// Least-squares slope of `log H` on `log d` over the upper half of `dims`.
    pub slope: f64,
    /// `(α + 1)/2`.
    pub reference_slope: f64,
}

impl ScalingReport {
    pub const CSV_HEADER: &'static str = "d,h_hat";

    pub fn csv_rows(&self) -> impl Iterator<Item = String> + '_ {
        self.rows.iter().map(|(d, h)| format!("{d},{h:.12e}"))
    }
}

/// Least-squares slope of `y` on `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// `H_{1+p}(d)` across `dims` with the fitted growth exponent.
pub fn dimension_scaling_report(
    alpha: f64,
    p: f64,
    dims: &[usize],
    fixed: &ScalingParams,
) -> Result<ScalingReport> {
    if dims.len() < 4 {
        return domain("dimension sweep needs at least four dimensions");
    }
    if dims.windows(2).any(|w| w[0] >= w[1]) {
        return domain("dimensions must be strictly increasing");
    }
    if *dims.last().unwrap() > 10_000 {
        return domain("largest dimension must not exceed 10^4");
    }
    let rows = dims
        .iter()
        .map(|&d| {
            drift_large_p(1.0 + p, alpha, fixed.sigma, fixed.eta, &fixed.consts, d)
                .map(|dp| (d, dp.h))
        })
        .collect::<Result<Vec<_>>>()?;
    let top = &rows[rows.len() / 2..];
    let lx: Vec<f64> = top.iter().map(|(d, _)| (*d as f64).ln()).collect();
    let ly: Vec<f64> = top.iter().map(|(_, h)| h.ln()).collect();
    Ok(ScalingReport {
        alpha,
        p,
        slope: ls_slope(&lx, &ly),
        reference_slope: (alpha + 1.0) / 2.0,
        rows,
    })
}

/// Checks `∫ V_{p'} dp₀ ≤ H / (1 - β)` with `p' = drift.p`, estimating the
/// integral by a sample mean (allowance 3 standard errors).
pub fn initial_condition_check(
    p0: &Samples,
    center: &[f64],
    drift: &DriftParams,
) -> Result<AuditReport> {
    if p0.is_empty() {
        return domain("initial-law sample is empty");
    }
    if p0.dim() != center.len() {
        return Err(Error::DimensionMismatch {
            expected: center.len(),
            got: p0.dim(),
        });
    }
    if p0.as_flat().iter().any(|v| !v.is_finite()) {
        return domain("initial-law sample has non-finite entries");
    }
    let vals: Vec<f64> = p0
        .iter()
        .map(|t| lyapunov(drift.p, dist(t, center)))
        .collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let se = if vals.len() > 1 {
        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    Ok(AuditReport::new(
        "initial_condition",
        vals.len(),
        drift.stationary_bound() - mean,
        3.0 * se,
    ))
}
