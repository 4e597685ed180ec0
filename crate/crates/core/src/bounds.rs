//! Closed-form sample-complexity calculators and the parameter planner.
//!
//! Logarithms are natural and every log factor is clamped below at 1 before
//! use. Counts are rounded up.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Epoch length, recentering schedule and total matrix-sample budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterPlan {
    pub epoch_length_k: u64,
    pub recenter_sizes: Vec<u64>,
    pub total_samples: u64,
    pub gamma: f64,
    pub delta: f64,
    pub num_pairs: usize,
    pub num_epochs: usize,
    pub base: f64,
    pub c1: f64,
    pub c2: f64,
}

#[inline]
fn log_factor(x: f64) -> f64 {
    x.ln().max(1.0)
}

fn to_count(value: f64) -> Result<u64> {
    // 2^53: beyond this f64 no longer represents every integer.
    if !(0.0..=9_007_199_254_740_992.0).contains(&value) {
        return Err(invalid(format!("sample count {value} is not representable")));
    }
    Ok(value.ceil() as u64)
}

fn check_gamma_delta(gamma: f64, delta: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid(format!("gamma = {gamma} outside (0, 1)")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta = {delta} outside (0, 1)")));
    }
    Ok(())
}

fn check_positive(name: &str, value: f64) -> Result<()> {
    if !(value > 0.0 && value.is_finite()) {
        return Err(invalid(format!("{name} = {value} must be positive")));
    }
    Ok(())
}

/// Epoch length `K` as an unrounded real.
pub fn epoch_length_value(gamma: f64, delta: f64, num_pairs: usize, num_epochs: usize, c1: f64) -> f64 {
    let h = 1.0 - gamma;
    let arg = 8.0 * num_epochs as f64 * num_pairs as f64 / (h * delta);
    c1 * log_factor(arg) / (h * h * h)
}

/// Recentering size `N_m` for epoch `m` (1-based) as an unrounded real.
pub fn recenter_size_value(
    gamma: f64,
    delta: f64,
    num_pairs: usize,
    num_epochs: usize,
    epoch: usize,
    c2: f64,
    base: f64,
) -> f64 {
    let h = 1.0 - gamma;
    let arg = 8.0 * num_epochs as f64 * num_pairs as f64 / delta;
    c2 * (base * base).powi(epoch as i32) * log_factor(arg) / (h * h)
}

/// Plans `K` and `{N_m}` for `num_epochs` epochs over `num_pairs` state-action pairs.
pub fn plan_parameters(
    gamma: f64,
    delta: f64,
    num_pairs: usize,
    num_epochs: usize,
    c1: f64,
    c2: f64,
    base: f64,
) -> Result<ParameterPlan> {
    check_gamma_delta(gamma, delta)?;
    if num_pairs == 0 || num_epochs == 0 {
        return Err(invalid("D and M must be at least 1"));
    }
    check_positive("c1", c1)?;
    check_positive("c2", c2)?;
    if !(base > 1.0 && base.is_finite()) {
        return Err(invalid(format!("base C = {base} must exceed 1")));
    }
    let k = to_count(epoch_length_value(gamma, delta, num_pairs, num_epochs, c1))?;
    let recenter_sizes = (1..=num_epochs)
        .map(|m| to_count(recenter_size_value(gamma, delta, num_pairs, num_epochs, m, c2, base)))
        .collect::<Result<Vec<_>>>()?;
    let total_samples = k
        .checked_mul(num_epochs as u64)
        .and_then(|inner| recenter_sizes.iter().try_fold(inner, |acc, &n| acc.checked_add(n)))
        .ok_or_else(|| invalid("total sample count overflows"))?;
    Ok(ParameterPlan {
        epoch_length_k: k,
        recenter_sizes,
        total_samples,
        gamma,
        delta,
        num_pairs,
        num_epochs,
        base,
        c1,
        c2,
    })
}

/// Smallest `M >= 1` with `b0 / base^M <= epsilon`.
pub fn epochs_needed(epsilon: f64, b0: f64, base: f64) -> usize {
    assert!(epsilon > 0.0 && base > 1.0, "epochs_needed requires epsilon > 0 and base > 1");
    let mut m = 1;
    let mut scale = base;
    while b0 / scale > epsilon {
        m += 1;
        scale *= base;
    }
    m
}

/// Instance-dependent budget of the corollary, before rounding.
#[allow(clippy::too_many_arguments)]
pub fn corollary_budget_value(
    gamma: f64,
    delta: f64,
    num_pairs: usize,
    epsilon: f64,
    b0: f64,
    c: f64,
    c_prime: f64,
) -> Result<f64> {
    check_gamma_delta(gamma, delta)?;
    check_positive("epsilon", epsilon)?;
    check_positive("b0", b0)?;
    if num_pairs == 0 {
        return Err(invalid("D must be at least 1"));
    }
    let h = 1.0 - gamma;
    let m = epochs_needed(epsilon, b0, 2.0) as f64;
    let md = 8.0 * m * num_pairs as f64;
    let ratio = b0 / epsilon;
    let first = c * log_factor(md / (h * delta)) / (h * h * h) * log_factor(ratio);
    let second = c_prime * ratio * ratio * log_factor(md / delta) / (h * h);
    Ok(first + second)
}

pub fn corollary_budget(
    gamma: f64,
    delta: f64,
    num_pairs: usize,
    epsilon: f64,
    b0: f64,
    c: f64,
    c_prime: f64,
) -> Result<u64> {
    to_count(corollary_budget_value(gamma, delta, num_pairs, epsilon, b0, c, c_prime)?)
}

fn uniform_core(gamma: f64, delta: f64, num_pairs: usize, epsilon: f64, r_max: f64, c: f64) -> Result<f64> {
    check_gamma_delta(gamma, delta)?;
    check_positive("epsilon", epsilon)?;
    if !(r_max >= 0.0 && r_max.is_finite()) {
        return Err(invalid("r_max must be finite and nonnegative"));
    }
    if num_pairs == 0 {
        return Err(invalid("D must be at least 1"));
    }
    let h = 1.0 - gamma;
    Ok(c * (r_max * r_max / (epsilon * epsilon))
        * log_factor(num_pairs as f64 / (h * delta))
        * log_factor(1.0 / (h * epsilon)))
}

/// Worst-case budget over all `r_max`-bounded instances, before rounding.
pub fn worst_case_budget_value(
    gamma: f64,
    delta: f64,
    num_pairs: usize,
    epsilon: f64,
    r_max: f64,
    c: f64,
) -> Result<f64> {
    let h = 1.0 - gamma;
    Ok(uniform_core(gamma, delta, num_pairs, epsilon, r_max, c)? / (h * h * h * h))
}

pub fn worst_case_budget(
    gamma: f64,
    delta: f64,
    num_pairs: usize,
    epsilon: f64,
    r_max: f64,
    c: f64,
) -> Result<u64> {
    to_count(worst_case_budget_value(gamma, delta, num_pairs, epsilon, r_max, c)?)
}

/// Two-phase (cubic-horizon) budget, before rounding.
pub fn t_max_value(gamma: f64, delta: f64, num_pairs: usize, epsilon: f64, r_max: f64, c: f64) -> Result<f64> {
    let h = 1.0 - gamma;
    Ok(uniform_core(gamma, delta, num_pairs, epsilon, r_max, c)? / (h * h * h))
}

pub fn t_max(gamma: f64, delta: f64, num_pairs: usize, epsilon: f64, r_max: f64, c: f64) -> Result<u64> {
    to_count(t_max_value(gamma, delta, num_pairs, epsilon, r_max, c)?)
}
