//! Caputo fractional derivatives of order 0 < alpha < 1 with lower terminal
//! 0: the closed-form power rule and the L1 discretization on uniformly
//! sampled trajectories.
//!
//! The L1 scheme reconstructs the integrand piecewise-linearly, giving
//! weights b_j = (j+1)^{1-alpha} - j^{1-alpha} and accuracy O(h^{2-alpha})
//! for C^2 functions. History is summed directly (O(N^2) per track); the
//! intended horizons are desk-scale.

use thiserror::Error;

use crate::specfun;

#[derive(Debug, Error, PartialEq)]
pub enum FracDerivError {
    #[error("fractional order must lie strictly inside (0, 1), got {alpha}")]
    InvalidOrder { alpha: f64 },
    #[error("step must be positive and finite, got {h}")]
    InvalidStep { h: f64 },
    #[error("a sampled function needs at least two values")]
    TooFewSamples,
    #[error("sample {index} is not finite")]
    NonFiniteSample { index: usize },
    #[error("power-rule exponent must be nonnegative, got {beta}")]
    InvalidBeta { beta: f64 },
    #[error("power rule hits a gamma pole at beta - alpha + 1 = {arg}")]
    GammaPole { arg: f64 },
}

/// Fractional order constrained to the open interval (0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaputoOrder(f64);

impl CaputoOrder {
    pub fn new(alpha: f64) -> Result<Self, FracDerivError> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(CaputoOrder(alpha))
        } else {
            Err(FracDerivError::InvalidOrder { alpha })
        }
    }

    pub fn alpha(self) -> f64 {
        self.0
    }
}

/// Uniformly sampled function f(0), f(h), ..., f(Nh) with N >= 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFn {
    h: f64,
    values: Vec<f64>,
}

impl SampledFn {
    pub fn new(h: f64, values: Vec<f64>) -> Result<Self, FracDerivError> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(FracDerivError::InvalidStep { h });
        }
        if values.len() < 2 {
            return Err(FracDerivError::TooFewSamples);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(FracDerivError::NonFiniteSample { index });
        }
        Ok(SampledFn { h, values })
    }

    /// Samples f at 0, h, ..., n h.
    pub fn sample(h: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self, FracDerivError> {
        SampledFn::new(h, (0..=n).map(|k| f(k as f64 * h)).collect())
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Largest valid sample index N.
    pub fn last_index(&self) -> usize {
        self.values.len() - 1
    }
}

/// Closed-form Caputo derivative of t^beta: returns (coefficient, exponent)
/// with coefficient Gamma(beta+1)/Gamma(beta-alpha+1) and exponent
/// beta - alpha. Constants (beta = 0) are annihilated: coefficient 0, and
/// the exponent slot is meaningless.
pub fn caputo_power_rule(
    order: CaputoOrder,
    beta: f64,
) -> Result<(f64, f64), FracDerivError> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(FracDerivError::InvalidBeta { beta });
    }
    // beta in N_0 below the order's ceiling (here: just beta = 0) maps to the
    // constant branch.
    if beta == 0.0 {
        return Ok((0.0, 0.0));
    }
    let arg = beta - order.alpha() + 1.0;
    let num = specfun::gamma_fn(beta + 1.0)
        .map_err(|_| FracDerivError::GammaPole { arg: beta + 1.0 })?;
    let den = specfun::gamma_fn(arg).map_err(|_| FracDerivError::GammaPole { arg })?;
    Ok((num / den, beta - order.alpha()))
}

/// L1 value at sample index k >= 1:
/// h^{-alpha}/Gamma(2-alpha) * sum_j b_j (f_{k-j} - f_{k-j-1}).
pub fn caputo_l1(f: &SampledFn, order: CaputoOrder, k: usize) -> f64 {
    assert!(k >= 1 && k <= f.last_index(), "L1 index {k} outside 1..={}", f.last_index());
    l1_sum(f.values(), f.h(), order.alpha(), k)
}

/// L1 summation core; callers guarantee 0 < alpha < 1, h > 0, and
/// 1 <= k < values.len(). The sim integrator's cached-weight kernel mirrors
/// this arithmetic term for term.
fn l1_sum(v: &[f64], h: f64, alpha: f64, k: usize) -> f64 {
    let e = 1.0 - alpha;
    let scale =
        h.powf(-alpha) / specfun::gamma_fn(2.0 - alpha).expect("2 - alpha lies in (1, 2)");
    let mut acc = 0.0;
    for j in 0..k {
        let b = ((j + 1) as f64).powf(e) - (j as f64).powf(e);
        acc += b * (v[k - j] - v[k - j - 1]);
    }
    scale * acc
}

/// Whole-track L1: index 0 is 0, index k is `caputo_l1(f, order, k)`.
/// Cost O(N^2).
pub fn caputo_l1_track(f: &SampledFn, order: CaputoOrder) -> SampledFn {
    let mut values = Vec::with_capacity(f.values().len());
    values.push(0.0);
    for k in 1..=f.last_index() {
        values.push(caputo_l1(f, order, k));
    }
    SampledFn { h: f.h(), values }
}

/// Least-squares slope of log err against log h. Pairs must have h strictly
/// decreasing; any exact zero error returns the +infinity sentinel.
pub fn empirical_order(errors_at_h: &[(f64, f64)]) -> f64 {
    assert!(errors_at_h.len() >= 2, "need at least two (h, err) pairs");
    assert!(
        errors_at_h.windows(2).all(|w| w[0].0 > w[1].0),
        "h values must be strictly decreasing"
    );
    if errors_at_h.iter().any(|&(_, err)| err == 0.0) {
        return f64::INFINITY;
    }
    let pts: Vec<(f64, f64)> =
        errors_at_h.iter().map(|&(h, err)| (h.ln(), err.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    num / den
}
