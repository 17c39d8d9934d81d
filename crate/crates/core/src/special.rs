//! Gamma-function helpers.
//!
//! Everything goes through `ln Γ` so that ratios like `Γ((d+α)/2)/Γ(d/2)`
//! stay finite for dimensions in the tens of thousands.

use crate::error::{domain, Result};

pub use statrs::function::gamma::ln_gamma;

/// `Γ(a) / Γ(b)` for positive `a`, `b`.
pub fn gamma_ratio(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return domain(format!(
            "gamma_ratio needs positive finite arguments, got ({a}, {b})"
        ));
    }
    Ok((ln_gamma(a) - ln_gamma(b)).exp())
}

/// Unchecked variant for internal callers that have already validated their inputs.
pub(crate) fn gratio(a: f64, b: f64) -> f64 {
    (ln_gamma(a) - ln_gamma(b)).exp()
}
