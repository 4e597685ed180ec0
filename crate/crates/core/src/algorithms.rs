//! Synchronous Q-learning and its variance-reduced, epoch-structured variant.
//!
//! All randomness comes from a [`GenerativeSampler`]. Each epoch splits two
//! labelled child streams off the caller's sampler, one for the recentering
//! batch and one for the inner loop, so the two sample sets are disjoint by
//! construction. Recentering draws happen before any inner draw.
//!
//! The recentered increment `T_hat(theta) - T_hat(theta_bar) + T_tilde` is
//! evaluated as `gamma * (V(x) - V_bar(x)) + T_tilde`: the reward cancels
//! between the two empirical terms, so at `theta == theta_bar` the increment
//! is exactly `T_tilde` for every sample.

use serde::{Deserialize, Serialize};

use crate::bounds::{epochs_needed, plan_parameters, ParameterPlan};
use crate::error::{invalid, Error, Result};
use crate::mdp::{
    instance_complexity, linf_slices, solve_optimal_q, QFunction, TabularMdp,
    DEFAULT_SOLVER_TOL,
};
use crate::sampling::{GenerativeSampler, SampleMatrix};

/// Stepsize schedule for the stochastic-approximation updates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepRule {
    /// `1 / (1 + (1 - gamma) k)`.
    #[default]
    RescaledLinear,
    /// `1 / k^omega` with `omega` in `(0, 1]`.
    Polynomial { omega: f64 },
    Constant { alpha: f64 },
}

impl StepRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StepRule::RescaledLinear => Ok(()),
            StepRule::Polynomial { omega } if omega > 0.0 && omega <= 1.0 => Ok(()),
            StepRule::Constant { alpha } if alpha > 0.0 && alpha <= 1.0 => Ok(()),
            other => Err(invalid(format!("invalid step rule {other:?}"))),
        }
    }

    /// Stepsize at iteration `k >= 1`.
    pub fn stepsize(&self, k: u64, gamma: f64) -> f64 {
        match *self {
            StepRule::RescaledLinear => rescaled_linear(k, gamma),
            StepRule::Polynomial { omega } => (k as f64).powf(-omega),
            StepRule::Constant { alpha } => alpha,
        }
    }
}

#[inline]
pub fn rescaled_linear(k: u64, gamma: f64) -> f64 {
    1.0 / (1.0 + (1.0 - gamma) * k as f64)
}

/// Parameters of one variance-reduced Q-learning run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VrqlConfig {
    pub num_epochs: usize,
    pub epoch_length: u64,
    pub recenter_sizes: Vec<u64>,
    pub base: f64,
    pub delta: f64,
    pub c1: f64,
    pub c2: f64,
    pub seed: u64,
    #[serde(default)]
    pub record_inner: bool,
}

impl VrqlConfig {
    /// Config whose `K` and `{N_m}` come from [`plan_parameters`].
    #[allow(clippy::too_many_arguments)]
    pub fn planned(
        mdp: &TabularMdp,
        num_epochs: usize,
        delta: f64,
        c1: f64,
        c2: f64,
        base: f64,
        seed: u64,
    ) -> Result<Self> {
        let plan = plan_parameters(mdp.discount(), delta, mdp.num_pairs(), num_epochs, c1, c2, base)?;
        Ok(VrqlConfig::from_plan(&plan, seed))
    }

    pub fn from_plan(plan: &ParameterPlan, seed: u64) -> Self {
        VrqlConfig {
            num_epochs: plan.num_epochs,
            epoch_length: plan.epoch_length_k,
            recenter_sizes: plan.recenter_sizes.clone(),
            base: plan.base,
            delta: plan.delta,
            c1: plan.c1,
            c2: plan.c2,
            seed,
            record_inner: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_epochs == 0 {
            return Err(invalid("num_epochs must be at least 1"));
        }
        if self.epoch_length == 0 {
            return Err(invalid("epoch_length must be at least 1"));
        }
        if self.recenter_sizes.len() != self.num_epochs {
            return Err(invalid(format!(
                "expected {} recentering sizes, got {}",
                self.num_epochs,
                self.recenter_sizes.len()
            )));
        }
        if self.recenter_sizes.contains(&0) {
            return Err(invalid("recentering sizes must be at least 1"));
        }
        Ok(())
    }

    /// `K * M + sum N_m`.
    pub fn total_samples(&self) -> u64 {
        self.epoch_length * self.num_epochs as u64 + self.recenter_sizes.iter().sum::<u64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Inner,
    EpochEnd,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Inner => "inner",
            Phase::EpochEnd => "epoch_end",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub cumulative_samples: u64,
    pub linf_error: f64,
    pub epoch: usize,
    pub phase: Phase,
}

/// Error-versus-samples series of one run.
///
/// The first record is the starting point (epoch 0, `epoch_end`); epoch `m`
/// closes with an `epoch_end` record carrying the error of `theta_bar_m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub algorithm_tag: String,
    pub gamma: f64,
    pub trial: u64,
}

impl RunTrace {
    pub fn new(algorithm_tag: impl Into<String>, gamma: f64) -> Self {
        RunTrace { records: Vec::new(), algorithm_tag: algorithm_tag.into(), gamma, trial: 0 }
    }

    fn push(&mut self, cumulative_samples: u64, linf_error: f64, epoch: usize, phase: Phase) {
        debug_assert!(self.records.last().is_none_or(|r| r.cumulative_samples < cumulative_samples));
        self.records.push(TraceRecord { cumulative_samples, linf_error, epoch, phase });
    }

    /// Errors at epoch boundaries, including the starting point as epoch 0.
    pub fn epoch_errors(&self) -> Vec<(usize, f64)> {
        self.records
            .iter()
            .filter(|r| r.phase == Phase::EpochEnd)
            .map(|r| (r.epoch, r.linf_error))
            .collect()
    }

    /// First recorded sample count at which the error is at most `epsilon`.
    pub fn samples_to(&self, epsilon: f64) -> Option<u64> {
        self.records.iter().find(|r| r.linf_error <= epsilon).map(|r| r.cumulative_samples)
    }

    pub fn final_record(&self) -> Option<&TraceRecord> {
        self.records.last()
    }
}

struct Recorder<'a> {
    reference: &'a QFunction,
    trace: &'a mut RunTrace,
    record_inner: bool,
}

impl Recorder<'_> {
    fn record(&mut self, sampler: &GenerativeSampler, theta: &[f64], epoch: usize, phase: Phase) {
        let err = linf_slices(theta, self.reference.values());
        self.trace.push(sampler.samples_drawn(), err, epoch, phase);
    }
}

fn reference_or_solve(mdp: &TabularMdp, reference: Option<&QFunction>) -> Result<QFunction> {
    match reference {
        Some(r) => {
            r.check_mdp(mdp)?;
            Ok(r.clone())
        }
        None => solve_optimal_q(mdp, DEFAULT_SOLVER_TOL),
    }
}

/// `(1/n) sum_i T_hat_i(theta_bar)` over `n` fresh draws from `sampler`.
pub fn monte_carlo_bellman(
    mdp: &TabularMdp,
    theta_bar: &QFunction,
    n: u64,
    sampler: &mut GenerativeSampler,
) -> Result<QFunction> {
    theta_bar.check_mdp(mdp)?;
    if n == 0 {
        return Err(invalid("recentering size must be at least 1"));
    }
    check_sampler(mdp, sampler)?;
    let v_bar = theta_bar.state_values();
    Ok(monte_carlo_from_values(mdp, &v_bar, n, sampler))
}

fn monte_carlo_from_values(mdp: &TabularMdp, v_bar: &[f64], n: u64, sampler: &mut GenerativeSampler) -> QFunction {
    let mut sums = vec![0.0; mdp.num_pairs()];
    let mut sample = SampleMatrix::empty(mdp.num_states(), mdp.num_actions());
    for _ in 0..n {
        sampler.draw_into(&mut sample);
        for (acc, &x) in sums.iter_mut().zip(sample.next_states()) {
            *acc += v_bar[x as usize];
        }
    }
    let gamma = mdp.discount();
    let values = mdp
        .rewards()
        .iter()
        .zip(&sums)
        .map(|(r, s)| r + gamma * (s / n as f64))
        .collect();
    QFunction::from_values(mdp.num_states(), mdp.num_actions(), values).expect("finite Monte Carlo average")
}

fn check_sampler(mdp: &TabularMdp, sampler: &GenerativeSampler) -> Result<()> {
    if sampler.num_states() != mdp.num_states() || sampler.num_actions() != mdp.num_actions() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{} sampler", mdp.num_states(), mdp.num_actions()),
            got: format!("{}x{}", sampler.num_states(), sampler.num_actions()),
        });
    }
    Ok(())
}

fn check_sample(mdp: &TabularMdp, sample: &SampleMatrix) -> Result<()> {
    if sample.num_states() != mdp.num_states() || sample.num_actions() != mdp.num_actions() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{} sample", mdp.num_states(), mdp.num_actions()),
            got: format!("{}x{}", sample.num_states(), sample.num_actions()),
        });
    }
    if let Some(&bad) = sample.next_states().iter().find(|&&x| x as usize >= mdp.num_states()) {
        return Err(Error::SampleOutOfRange { index: bad as usize, num_states: mdp.num_states() });
    }
    Ok(())
}

/// In-place recentered step on flat buffers.
#[inline]
fn recentered_step(
    theta: &mut [f64],
    alpha: f64,
    gamma: f64,
    next: &[u32],
    v: &[f64],
    v_anchor: &[f64],
    anchor_target: &[f64],
) {
    for ((th, &x), &target) in theta.iter_mut().zip(next).zip(anchor_target) {
        let x = x as usize;
        let increment = gamma * (v[x] - v_anchor[x]) + target;
        *th = (1.0 - alpha) * *th + alpha * increment;
    }
}

#[inline]
fn plain_step(theta: &mut [f64], alpha: f64, reward: &[f64], gamma: f64, next: &[u32], v: &[f64]) {
    for ((th, &r), &x) in theta.iter_mut().zip(reward).zip(next) {
        let target = r + gamma * v[x as usize];
        *th = (1.0 - alpha) * *th + alpha * target;
    }
}

/// One variance-reduced update
/// `(1 - alpha) theta + alpha (T_hat(theta) - T_hat(theta_bar) + T_tilde(theta_bar))`,
/// with both empirical operators built from the same `sample`.
pub fn vr_update(
    theta: &QFunction,
    alpha: f64,
    theta_bar: &QFunction,
    recentered_bellman: &QFunction,
    mdp: &TabularMdp,
    sample: &SampleMatrix,
) -> Result<QFunction> {
    theta.check_mdp(mdp)?;
    theta_bar.check_mdp(mdp)?;
    recentered_bellman.check_mdp(mdp)?;
    check_sample(mdp, sample)?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid(format!("stepsize {alpha} outside (0, 1]")));
    }
    let mut out = theta.clone();
    recentered_step(
        out.values_mut(),
        alpha,
        mdp.discount(),
        sample.next_states(),
        &theta.state_values(),
        &theta_bar.state_values(),
        recentered_bellman.values(),
    );
    Ok(out)
}

/// Idealized update recentred at the true fixed point.
///
/// Uses `T(theta*) = theta*`, so `theta_star` itself plays the role of the
/// exact Bellman image and is an exact fixed point of the update.
pub fn oracle_vr_update(
    theta: &QFunction,
    alpha: f64,
    theta_star: &QFunction,
    mdp: &TabularMdp,
    sample: &SampleMatrix,
) -> Result<QFunction> {
    vr_update(theta, alpha, theta_star, theta_star, mdp, sample)
}

/// The stream labels used by epoch `label`.
fn epoch_streams(sampler: &GenerativeSampler, label: &str) -> (GenerativeSampler, GenerativeSampler) {
    (sampler.split(&format!("{label}/recenter")), sampler.split(&format!("{label}/inner")))
}

#[allow(clippy::too_many_arguments)]
fn epoch_impl(
    mdp: &TabularMdp,
    theta_bar: &QFunction,
    k: u64,
    n: u64,
    sampler: &GenerativeSampler,
    label: &str,
    epoch: usize,
    mut recorder: Option<&mut Recorder<'_>>,
) -> QFunction {
    let (mut recenter, mut inner) = epoch_streams(sampler, label);
    let v_bar = theta_bar.state_values();
    let anchor_target = monte_carlo_from_values(mdp, &v_bar, n, &mut recenter);

    let gamma = mdp.discount();
    let mut theta = theta_bar.clone();
    let mut v = vec![0.0; mdp.num_states()];
    let mut sample = SampleMatrix::empty(mdp.num_states(), mdp.num_actions());
    for t in 1..=k {
        inner.draw_into(&mut sample);
        theta.state_values_into(&mut v);
        recentered_step(
            theta.values_mut(),
            rescaled_linear(t, gamma),
            gamma,
            sample.next_states(),
            &v,
            &v_bar,
            anchor_target.values(),
        );
        if let Some(rec) = recorder.as_deref_mut() {
            if t == k {
                rec.record(&inner, theta.values(), epoch, Phase::EpochEnd);
            } else if rec.record_inner {
                rec.record(&inner, theta.values(), epoch, Phase::Inner);
            }
        }
    }
    theta
}

/// One epoch: Monte Carlo recentering with `n` draws, then `k` recentered
/// steps from `theta_bar` with the rescaled linear stepsize. Consumes
/// exactly `n + k` matrix samples from streams split off `sampler` under `label`.
pub fn run_epoch(
    mdp: &TabularMdp,
    theta_bar: &QFunction,
    k: u64,
    n: u64,
    sampler: &GenerativeSampler,
    label: &str,
) -> Result<QFunction> {
    theta_bar.check_mdp(mdp)?;
    check_sampler(mdp, sampler)?;
    if k == 0 || n == 0 {
        return Err(invalid("epoch length and recentering size must be at least 1"));
    }
    Ok(epoch_impl(mdp, theta_bar, k, n, sampler, label, 0, None))
}

#[allow(clippy::too_many_arguments)]
fn run_epochs(
    mdp: &TabularMdp,
    start: QFunction,
    k: u64,
    sizes: &[u64],
    sampler: &GenerativeSampler,
    label_prefix: &str,
    epoch_offset: usize,
    recorder: &mut Recorder<'_>,
) -> QFunction {
    let mut theta_bar = start;
    for (i, &n) in sizes.iter().enumerate() {
        let epoch = epoch_offset + i + 1;
        let label = format!("{label_prefix}epoch-{}", i + 1);
        theta_bar = epoch_impl(mdp, &theta_bar, k, n, sampler, &label, epoch, Some(recorder));
    }
    theta_bar
}

/// Variance-reduced Q-learning from `theta_bar_0 = 0` with a sampler seeded by `config.seed`.
///
/// Errors in the trace are measured against `theta_star_ref`, or against a
/// freshly solved `theta*` when none is given.
pub fn vr_q_learning(
    mdp: &TabularMdp,
    config: &VrqlConfig,
    theta_star_ref: Option<&QFunction>,
) -> Result<(QFunction, RunTrace)> {
    let sampler = GenerativeSampler::new(mdp, config.seed)?;
    vr_q_learning_with_sampler(mdp, config, &sampler, theta_star_ref)
}

/// As [`vr_q_learning`], drawing from streams split off `sampler`.
pub fn vr_q_learning_with_sampler(
    mdp: &TabularMdp,
    config: &VrqlConfig,
    sampler: &GenerativeSampler,
    theta_star_ref: Option<&QFunction>,
) -> Result<(QFunction, RunTrace)> {
    config.validate()?;
    check_sampler(mdp, sampler)?;
    let reference = reference_or_solve(mdp, theta_star_ref)?;
    let mut trace = RunTrace::new("vrql", mdp.discount());
    let start = QFunction::zeros_like(mdp);
    let mut recorder = Recorder { reference: &reference, trace: &mut trace, record_inner: config.record_inner };
    recorder.record(sampler, start.values(), 0, Phase::EpochEnd);
    let out = run_epochs(
        mdp,
        start,
        config.epoch_length,
        &config.recenter_sizes,
        sampler,
        "",
        0,
        &mut recorder,
    );
    Ok((out, trace))
}

/// Synchronous Q-learning `theta_{k+1} = (1 - alpha_k) theta_k + alpha_k T_hat_k(theta_k)`
/// from zero. Records every `record_every`-th iterate and always the last one.
pub fn ordinary_q_learning(
    mdp: &TabularMdp,
    num_iters: u64,
    step: StepRule,
    sampler: &mut GenerativeSampler,
    theta_star_ref: Option<&QFunction>,
    record_every: u64,
) -> Result<(QFunction, RunTrace)> {
    if num_iters == 0 {
        return Err(invalid("num_iters must be at least 1"));
    }
    step.validate()?;
    check_sampler(mdp, sampler)?;
    let reference = reference_or_solve(mdp, theta_star_ref)?;
    let record_every = record_every.max(1);
    let gamma = mdp.discount();
    let mut trace = RunTrace::new("ordinary", gamma);
    let mut recorder = Recorder { reference: &reference, trace: &mut trace, record_inner: true };

    let mut theta = QFunction::zeros_like(mdp);
    recorder.record(sampler, theta.values(), 0, Phase::EpochEnd);
    let mut v = vec![0.0; mdp.num_states()];
    let mut sample = SampleMatrix::empty(mdp.num_states(), mdp.num_actions());
    for k in 1..=num_iters {
        sampler.draw_into(&mut sample);
        theta.state_values_into(&mut v);
        plain_step(theta.values_mut(), step.stepsize(k, gamma), mdp.rewards(), gamma, sample.next_states(), &v);
        if k % record_every == 0 || k == num_iters {
            recorder.record(sampler, theta.values(), 0, Phase::Inner);
        }
    }
    Ok((theta, trace))
}

/// Runs oracle-recentred updates from zero for `num_epochs * epoch_length`
/// steps; the stepsize restarts at `k = 1` each epoch.
pub fn oracle_vr_run(
    mdp: &TabularMdp,
    theta_star: &QFunction,
    num_epochs: usize,
    epoch_length: u64,
    step: StepRule,
    sampler: &mut GenerativeSampler,
    record_inner: bool,
) -> Result<(QFunction, RunTrace)> {
    theta_star.check_mdp(mdp)?;
    step.validate()?;
    check_sampler(mdp, sampler)?;
    if num_epochs == 0 || epoch_length == 0 {
        return Err(invalid("num_epochs and epoch_length must be at least 1"));
    }
    let gamma = mdp.discount();
    let mut trace = RunTrace::new("oracle_vr", gamma);
    let mut recorder = Recorder { reference: theta_star, trace: &mut trace, record_inner };
    let mut theta = QFunction::zeros_like(mdp);
    recorder.record(sampler, theta.values(), 0, Phase::EpochEnd);

    let v_star = theta_star.state_values();
    let mut v = vec![0.0; mdp.num_states()];
    let mut sample = SampleMatrix::empty(mdp.num_states(), mdp.num_actions());
    for epoch in 1..=num_epochs {
        for t in 1..=epoch_length {
            sampler.draw_into(&mut sample);
            theta.state_values_into(&mut v);
            recentered_step(
                theta.values_mut(),
                step.stepsize(t, gamma),
                gamma,
                sample.next_states(),
                &v,
                &v_star,
                theta_star.values(),
            );
            if t == epoch_length {
                recorder.record(sampler, theta.values(), epoch, Phase::EpochEnd);
            } else if record_inner {
                recorder.record(sampler, theta.values(), epoch, Phase::Inner);
            }
        }
    }
    Ok((theta, trace))
}

/// Settings for the two-phase schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoPhaseConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub c_epochs: f64,
    pub c1: f64,
    pub c2: f64,
    pub base: f64,
    pub seed: u64,
    #[serde(default)]
    pub record_inner: bool,
}

/// What each phase of [`two_phase_minimax`] did.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoPhaseReport {
    pub phase1_target: f64,
    pub phase1_epochs: usize,
    pub phase1_error: f64,
    pub phase1_samples: u64,
    pub phase2_epochs: usize,
    pub epoch_length: u64,
    pub phase2_recenter_sizes: Vec<u64>,
    pub final_error: f64,
    pub total_samples: u64,
}

/// Number of second-phase epochs, `max(1, ceil(c_epochs ln(r_max / ((1 - gamma) eps))))`.
pub fn second_phase_epochs(gamma: f64, r_max: f64, epsilon: f64, c_epochs: f64) -> usize {
    let raw = (c_epochs * (r_max / ((1.0 - gamma) * epsilon)).ln()).ceil();
    if raw.is_finite() && raw >= 1.0 {
        raw as usize
    } else {
        1
    }
}

/// Phase 1 runs the epoch algorithm from zero down to the `r_max / sqrt(1 - gamma)`
/// level (epoch count from the instance's `b0`); phase 2 restarts the epoch
/// schedule from the phase-1 output with the same `K` and a fresh `{N_m}`.
pub fn two_phase_minimax(
    mdp: &TabularMdp,
    config: &TwoPhaseConfig,
    theta_star_ref: Option<&QFunction>,
) -> Result<(QFunction, RunTrace, TwoPhaseReport)> {
    let gamma = mdp.discount();
    let r_max = mdp.r_max();
    let upper = r_max / (1.0 - gamma);
    if !(config.epsilon > 0.0 && config.epsilon < upper) {
        return Err(invalid(format!("epsilon = {} outside (0, {upper})", config.epsilon)));
    }
    if config.c_epochs.is_nan() || config.c_epochs <= 0.0 {
        return Err(invalid("c_epochs must be positive"));
    }
    let reference = reference_or_solve(mdp, theta_star_ref)?;
    let b0 = instance_complexity(mdp, &reference)?.b0;

    let phase1_target = r_max / (1.0 - gamma).sqrt();
    let phase1_epochs = epochs_needed(phase1_target, b0, config.base);
    let plan1 = plan_parameters(gamma, config.delta, mdp.num_pairs(), phase1_epochs, config.c1, config.c2, config.base)?;
    let phase2_epochs = second_phase_epochs(gamma, r_max, config.epsilon, config.c_epochs);
    let plan2 = plan_parameters(gamma, config.delta, mdp.num_pairs(), phase2_epochs, config.c1, config.c2, config.base)?;
    let k = plan1.epoch_length_k;

    let sampler = GenerativeSampler::new(mdp, config.seed)?;
    let mut trace = RunTrace::new("two_phase", gamma);
    let mut recorder = Recorder { reference: &reference, trace: &mut trace, record_inner: config.record_inner };
    let start = QFunction::zeros_like(mdp);
    recorder.record(&sampler, start.values(), 0, Phase::EpochEnd);

    let phase1 = run_epochs(mdp, start, k, &plan1.recenter_sizes, &sampler, "phase-1/", 0, &mut recorder);
    let phase1_error = linf_slices(phase1.values(), reference.values());
    let phase1_samples = sampler.samples_drawn();
    let out = run_epochs(
        mdp,
        phase1,
        k,
        &plan2.recenter_sizes,
        &sampler,
        "phase-2/",
        phase1_epochs,
        &mut recorder,
    );
    let report = TwoPhaseReport {
        phase1_target,
        phase1_epochs,
        phase1_error,
        phase1_samples,
        phase2_epochs,
        epoch_length: k,
        phase2_recenter_sizes: plan2.recenter_sizes,
        final_error: linf_slices(out.values(), reference.values()),
        total_samples: sampler.samples_drawn(),
    };
    Ok((out, trace, report))
}
