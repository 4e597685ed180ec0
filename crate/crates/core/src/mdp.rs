//! Tabular discounted MDPs and the exact Bellman machinery built on them.
//!
//! Kernels are stored densely in row-major `[s][a][s']` order and rewards in
//! `[s][a]` order. Every operation here is a pure function of its inputs.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sampling::SampleMatrix;

/// Absolute tolerance on kernel row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Solver tolerance used when an exact reference `theta*` is needed.
pub const DEFAULT_SOLVER_TOL: f64 = 1e-10;

/// A finite discounted MDP with deterministic rewards.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpDocument", into = "MdpDocument")]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    kernel: Vec<f64>,
    reward: Vec<f64>,
    discount: f64,
    r_max: f64,
}

/// On-disk JSON layout of a [`TabularMdp`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MdpDocument {
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: f64,
    pub r_max: f64,
    /// Row-major `|S|*|A|` rewards.
    pub reward: Vec<f64>,
    /// Row-major `|S|*|A|*|S|` transition probabilities.
    pub kernel: Vec<f64>,
}

impl TryFrom<MdpDocument> for TabularMdp {
    type Error = Error;

    fn try_from(doc: MdpDocument) -> Result<Self> {
        TabularMdp::new(doc.num_states, doc.num_actions, doc.kernel, doc.reward, doc.gamma, doc.r_max)
    }
}

impl From<TabularMdp> for MdpDocument {
    fn from(mdp: TabularMdp) -> Self {
        MdpDocument {
            num_states: mdp.num_states,
            num_actions: mdp.num_actions,
            gamma: mdp.discount,
            r_max: mdp.r_max,
            reward: mdp.reward,
            kernel: mdp.kernel,
        }
    }
}

impl fmt::Debug for TabularMdp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TabularMdp")
            .field("num_states", &self.num_states)
            .field("num_actions", &self.num_actions)
            .field("discount", &self.discount)
            .field("r_max", &self.r_max)
            .finish_non_exhaustive()
    }
}

impl TabularMdp {
    /// Builds and validates an MDP. `kernel` is `[s][a][s']`, `reward` is `[s][a]`.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        kernel: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
        r_max: f64,
    ) -> Result<Self> {
        let mdp = TabularMdp::new_unchecked(num_states, num_actions, kernel, reward, discount, r_max);
        validate_mdp(&mdp)?;
        Ok(mdp)
    }

    /// Builds an MDP without checking the invariants. Intended for tests of
    /// [`validate_mdp`] and for callers that validate separately.
    pub fn new_unchecked(
        num_states: usize,
        num_actions: usize,
        kernel: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
        r_max: f64,
    ) -> Self {
        TabularMdp { num_states, num_actions, kernel, reward, discount, r_max }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Number of state-action pairs `D = |S|*|A|`.
    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    /// The reward matrix as a [`QFunction`]-shaped value.
    pub fn reward_matrix(&self) -> QFunction {
        QFunction {
            num_states: self.num_states,
            num_actions: self.num_actions,
            values: self.reward.clone(),
        }
    }

    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.reward[state * self.num_actions + action]
    }

    /// Transition probabilities `P(s, a, .)`.
    pub fn transition_row(&self, state: usize, action: usize) -> &[f64] {
        let start = (state * self.num_actions + action) * self.num_states;
        &self.kernel[start..start + self.num_states]
    }

    /// Same MDP with a different discount factor.
    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        let mut mdp = self.clone();
        mdp.discount = discount;
        validate_mdp(&mdp)?;
        Ok(mdp)
    }

    pub fn to_document(&self) -> MdpDocument {
        self.clone().into()
    }
}

/// Checks every [`TabularMdp`] invariant.
pub fn validate_mdp(mdp: &TabularMdp) -> Result<()> {
    if mdp.num_states == 0 || mdp.num_actions == 0 {
        return Err(invalid("num_states and num_actions must be positive"));
    }
    let d = mdp.num_pairs();
    if mdp.reward.len() != d {
        return Err(Error::ShapeMismatch {
            expected: format!("{d} rewards"),
            got: mdp.reward.len().to_string(),
        });
    }
    if mdp.kernel.len() != d * mdp.num_states {
        return Err(Error::ShapeMismatch {
            expected: format!("{} kernel entries", d * mdp.num_states),
            got: mdp.kernel.len().to_string(),
        });
    }
    if !(mdp.discount > 0.0 && mdp.discount < 1.0) {
        return Err(Error::DiscountOutOfRange(mdp.discount));
    }
    if !(mdp.r_max >= 0.0 && mdp.r_max.is_finite()) {
        return Err(invalid(format!("r_max must be finite and nonnegative, got {}", mdp.r_max)));
    }
    for s in 0..mdp.num_states {
        for a in 0..mdp.num_actions {
            let row = mdp.transition_row(s, a);
            let sum: f64 = row.iter().sum();
            let nonneg = row.iter().all(|&p| p >= 0.0 && p.is_finite());
            if !nonneg || (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::NonStochasticRow { state: s, action: a, sum });
            }
            let r = mdp.reward(s, a);
            if !r.is_finite() || r.abs() > mdp.r_max {
                return Err(Error::RewardOutOfBound { state: s, action: a });
            }
        }
    }
    Ok(())
}

/// A real matrix over state-action pairs, stored row-major by state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QFunction {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QFunction {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        QFunction { num_states, num_actions, values: vec![0.0; num_states * num_actions] }
    }

    pub fn constant(num_states: usize, num_actions: usize, value: f64) -> Self {
        QFunction { num_states, num_actions, values: vec![value; num_states * num_actions] }
    }

    pub fn zeros_like(mdp: &TabularMdp) -> Self {
        QFunction::zeros(mdp.num_states, mdp.num_actions)
    }

    pub fn from_values(num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_states * num_actions {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values", num_states * num_actions),
                got: values.len().to_string(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("Q-function entries must be finite"));
        }
        Ok(QFunction { num_states, num_actions, values })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.num_actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.num_actions + action] = value;
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.num_actions..(state + 1) * self.num_actions]
    }

    /// `max_a theta(s, a)` for every state.
    pub fn state_values(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.num_states];
        self.state_values_into(&mut out);
        out
    }

    pub(crate) fn state_values_into(&self, out: &mut [f64]) {
        for (s, v) in out.iter_mut().enumerate() {
            *v = self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, factor: f64) -> QFunction {
        QFunction {
            num_states: self.num_states,
            num_actions: self.num_actions,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn same_shape(&self, other: &QFunction) -> bool {
        self.num_states == other.num_states && self.num_actions == other.num_actions
    }

    pub(crate) fn check_shape(&self, num_states: usize, num_actions: usize) -> Result<()> {
        if self.num_states != num_states || self.num_actions != num_actions {
            return Err(Error::ShapeMismatch {
                expected: format!("{num_states}x{num_actions}"),
                got: format!("{}x{}", self.num_states, self.num_actions),
            });
        }
        Ok(())
    }

    pub(crate) fn check_mdp(&self, mdp: &TabularMdp) -> Result<()> {
        self.check_shape(mdp.num_states, mdp.num_actions)
    }
}

/// Deterministic policy: one action per state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    actions: Vec<usize>,
}

impl Policy {
    pub fn new(actions: Vec<usize>, num_actions: usize) -> Result<Self> {
        if let Some(&bad) = actions.iter().find(|&&a| a >= num_actions) {
            return Err(invalid(format!("action {bad} out of range for {num_actions} actions")));
        }
        Ok(Policy { actions })
    }

    pub fn action(&self, state: usize) -> usize {
        self.actions[state]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }
}

/// Instance-dependent quantities that scale the error guarantees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceComplexity {
    /// Entrywise standard deviation of the empirical Bellman operator at `theta*`.
    pub sigma_star: QFunction,
    pub theta_star_norm: f64,
    /// `||sigma(theta*)||_inf + ||theta*||_inf * (1 - gamma)`.
    pub b0: f64,
}

/// Population Bellman operator `T(theta)`.
pub fn bellman_apply(mdp: &TabularMdp, theta: &QFunction) -> Result<QFunction> {
    theta.check_mdp(mdp)?;
    let v = theta.state_values();
    let mut out = QFunction::zeros_like(mdp);
    bellman_from_values(mdp, &v, &mut out.values);
    Ok(out)
}

pub(crate) fn bellman_from_values(mdp: &TabularMdp, state_values: &[f64], out: &mut [f64]) {
    let gamma = mdp.discount;
    for (idx, o) in out.iter_mut().enumerate() {
        let row = &mdp.kernel[idx * mdp.num_states..(idx + 1) * mdp.num_states];
        let expected: f64 = row.iter().zip(state_values).map(|(p, v)| p * v).sum();
        *o = mdp.reward[idx] + gamma * expected;
    }
}

/// Empirical Bellman operator: `r(s,a) + gamma * max_a' theta(x(s,a), a')`.
pub fn empirical_bellman_apply(
    reward: &QFunction,
    discount: f64,
    sample: &SampleMatrix,
    theta: &QFunction,
) -> Result<QFunction> {
    let (ns, na) = (theta.num_states, theta.num_actions);
    reward.check_shape(ns, na)?;
    if sample.num_states() != ns || sample.num_actions() != na {
        return Err(Error::ShapeMismatch {
            expected: format!("{ns}x{na} sample"),
            got: format!("{}x{}", sample.num_states(), sample.num_actions()),
        });
    }
    if let Some(&bad) = sample.next_states().iter().find(|&&x| x as usize >= ns) {
        return Err(Error::SampleOutOfRange { index: bad as usize, num_states: ns });
    }
    let v = theta.state_values();
    let mut out = QFunction::zeros(ns, na);
    empirical_from_values(&reward.values, discount, sample.next_states(), &v, &mut out.values);
    Ok(out)
}

#[inline]
pub(crate) fn empirical_from_values(
    reward: &[f64],
    discount: f64,
    next: &[u32],
    state_values: &[f64],
    out: &mut [f64],
) {
    for ((o, &r), &x) in out.iter_mut().zip(reward).zip(next) {
        *o = r + discount * state_values[x as usize];
    }
}

/// Value iteration from zero until `||T(theta) - theta||_inf <= tol * (1 - gamma)`,
/// which bounds the distance to `theta*` by `tol`.
pub fn solve_optimal_q(mdp: &TabularMdp, tol: f64) -> Result<QFunction> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(invalid("solver tolerance must be positive"));
    }
    let gamma = mdp.discount;
    let threshold = tol * (1.0 - gamma);
    // Residual shrinks by gamma per sweep; allow generous headroom past the estimate.
    let r_scale = mdp.reward.iter().fold(0.0_f64, |m, r| m.max(r.abs())).max(f64::MIN_POSITIVE);
    let estimate = ((r_scale / threshold).ln().max(0.0) / -gamma.ln()).ceil();
    let cap = (2.0 * estimate) as usize + 1_000;

    let mut theta = QFunction::zeros_like(mdp);
    let mut next = QFunction::zeros_like(mdp);
    let mut v = vec![0.0; mdp.num_states];
    for _ in 0..cap {
        theta.state_values_into(&mut v);
        bellman_from_values(mdp, &v, &mut next.values);
        let residual = linf_slices(&next.values, &theta.values);
        std::mem::swap(&mut theta, &mut next);
        if residual <= threshold {
            // `theta` now holds T(previous); its own residual is at most gamma * residual.
            return Ok(theta);
        }
    }
    Err(Error::NonConvergence { tol, iters: cap })
}

/// Argmax per state, ties broken towards the lowest action index.
pub fn greedy_policy(theta: &QFunction) -> Policy {
    let actions = (0..theta.num_states)
        .map(|s| {
            let row = theta.row(s);
            let mut best = 0;
            for (a, &q) in row.iter().enumerate().skip(1) {
                if q > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect();
    Policy { actions }
}

/// Exact `Q^pi` from the linear system `(I - gamma P^pi) Q = r` over all pairs.
pub fn policy_q_exact(mdp: &TabularMdp, policy: &Policy) -> Result<QFunction> {
    if policy.actions.len() != mdp.num_states {
        return Err(Error::ShapeMismatch {
            expected: format!("policy over {} states", mdp.num_states),
            got: policy.actions.len().to_string(),
        });
    }
    if policy.actions.iter().any(|&a| a >= mdp.num_actions) {
        return Err(invalid("policy action out of range"));
    }
    let d = mdp.num_pairs();
    let na = mdp.num_actions;
    let gamma = mdp.discount;
    let mut system = DMatrix::<f64>::identity(d, d);
    for idx in 0..d {
        let row = &mdp.kernel[idx * mdp.num_states..(idx + 1) * mdp.num_states];
        for (next, &p) in row.iter().enumerate() {
            if p != 0.0 {
                system[(idx, next * na + policy.actions[next])] -= gamma * p;
            }
        }
    }
    let rhs = DVector::from_column_slice(&mdp.reward);
    let solution = system.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    Ok(QFunction {
        num_states: mdp.num_states,
        num_actions: na,
        values: solution.iter().copied().collect(),
    })
}

/// Exact entrywise standard deviation of `T_hat(theta*)` under the kernel.
pub fn sigma_star(mdp: &TabularMdp, theta_star: &QFunction) -> Result<QFunction> {
    theta_star.check_mdp(mdp)?;
    let v = theta_star.state_values();
    let mut out = QFunction::zeros_like(mdp);
    for (idx, o) in out.values.iter_mut().enumerate() {
        let row = &mdp.kernel[idx * mdp.num_states..(idx + 1) * mdp.num_states];
        let mean: f64 = row.iter().zip(&v).map(|(p, x)| p * x).sum();
        let var: f64 = row.iter().zip(&v).map(|(p, x)| p * (x - mean) * (x - mean)).sum();
        *o = mdp.discount * var.max(0.0).sqrt();
    }
    Ok(out)
}

pub fn instance_complexity(mdp: &TabularMdp, theta_star: &QFunction) -> Result<InstanceComplexity> {
    let sigma = sigma_star(mdp, theta_star)?;
    let theta_star_norm = theta_star.linf_norm();
    let b0 = sigma.linf_norm() + theta_star_norm * (1.0 - mdp.discount);
    Ok(InstanceComplexity { sigma_star: sigma, theta_star_norm, b0 })
}

/// `max_{s,a} |a(s,a) - b(s,a)|`.
pub fn linf_distance(a: &QFunction, b: &QFunction) -> Result<f64> {
    b.check_shape(a.num_states, a.num_actions)?;
    Ok(linf_slices(&a.values, &b.values))
}

pub(crate) fn linf_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
