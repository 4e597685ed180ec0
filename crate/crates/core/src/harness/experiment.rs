//! Multi-trial experiments and their CSV traces.
//!
//! Jobs are enumerated in `(gamma, algorithm, trial)` order, executed on a
//! rayon pool, and written in enumeration order, so the CSV does not depend
//! on scheduling.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{
    oracle_vr_run, ordinary_q_learning, two_phase_minimax, vr_q_learning, RunTrace, StepRule, TwoPhaseConfig,
    VrqlConfig,
};
use crate::bounds::{epochs_needed, plan_parameters};
use crate::error::{invalid, Result};
use crate::harness::generators::{generate_mdp, GeneratorParams};
use crate::mdp::{instance_complexity, solve_optimal_q, QFunction, TabularMdp, DEFAULT_SOLVER_TOL};
use crate::sampling::GenerativeSampler;

pub const CSV_HEADER: &str = "algorithm,gamma,trial,epoch,phase,samples,linf_error";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MdpSource {
    File(PathBuf),
    Generator(GeneratorParams),
}

fn default_delta() -> f64 {
    0.1
}
fn default_constant() -> f64 {
    1.0
}
fn default_base() -> f64 {
    2.0
}
fn default_record_every() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AlgorithmSpec {
    /// Epoch algorithm. `num_epochs` defaults to the count needed for the
    /// experiment's `epsilon_target` given the instance's `b0`.
    Vrql {
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        num_epochs: Option<usize>,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default = "default_constant")]
        c1: f64,
        #[serde(default = "default_constant")]
        c2: f64,
        #[serde(default = "default_base")]
        base: f64,
    },
    Ordinary {
        #[serde(default)]
        name: Option<String>,
        num_iters: u64,
        #[serde(default)]
        step: StepRule,
        #[serde(default = "default_record_every")]
        record_every: u64,
    },
    /// Recentring at the exact `theta*`, with the stepsize restarting every epoch.
    OracleVr {
        #[serde(default)]
        name: Option<String>,
        num_epochs: usize,
        epoch_length: u64,
        #[serde(default)]
        step: StepRule,
    },
    TwoPhase {
        #[serde(default)]
        name: Option<String>,
        epsilon: f64,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default = "default_constant")]
        c_epochs: f64,
        #[serde(default = "default_constant")]
        c1: f64,
        #[serde(default = "default_constant")]
        c2: f64,
        #[serde(default = "default_base")]
        base: f64,
    },
}

impl AlgorithmSpec {
    pub fn tag(&self) -> &str {
        match self {
            AlgorithmSpec::Vrql { name, .. } => name.as_deref().unwrap_or("vrql"),
            AlgorithmSpec::Ordinary { name, .. } => name.as_deref().unwrap_or("ordinary"),
            AlgorithmSpec::OracleVr { name, .. } => name.as_deref().unwrap_or("oracle_vr"),
            AlgorithmSpec::TwoPhase { name, .. } => name.as_deref().unwrap_or("two_phase"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub mdp_source: MdpSource,
    pub algorithms: Vec<AlgorithmSpec>,
    pub gammas: Vec<f64>,
    pub trials: u64,
    pub base_seed: u64,
    pub output_path: PathBuf,
    #[serde(default)]
    pub epsilon_target: Option<f64>,
    #[serde(default)]
    pub record_inner: bool,
    /// Worker threads; `None` uses rayon's default.
    #[serde(default)]
    pub workers: Option<usize>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if self.algorithms.is_empty() || self.gammas.is_empty() {
            return Err(invalid("experiment needs at least one algorithm and one gamma"));
        }
        if let Some(&g) = self.gammas.iter().find(|&&g| !(g > 0.0 && g < 1.0)) {
            return Err(invalid(format!("gamma {g} outside (0, 1)")));
        }
        for alg in &self.algorithms {
            if let AlgorithmSpec::Vrql { num_epochs: None, .. } = alg {
                if self.epsilon_target.is_none() {
                    return Err(invalid("vrql without num_epochs needs epsilon_target"));
                }
            }
        }
        Ok(())
    }

    pub fn trial_seed(&self, trial: u64) -> u64 {
        self.base_seed.wrapping_add(trial)
    }
}

struct Instance {
    mdp: TabularMdp,
    theta_star: QFunction,
    b0: f64,
}

fn build_instance(source: &MdpSource, gamma: f64, base_dir: Option<&Path>) -> Result<Instance> {
    let mdp = match source {
        MdpSource::Generator(params) => generate_mdp(&GeneratorParams { gamma, ..params.clone() })?,
        MdpSource::File(path) => {
            let path = match base_dir {
                Some(dir) if path.is_relative() => dir.join(path),
                _ => path.clone(),
            };
            let mdp: TabularMdp = serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?;
            mdp.with_discount(gamma)?
        }
    };
    let theta_star = solve_optimal_q(&mdp, DEFAULT_SOLVER_TOL)?;
    let b0 = instance_complexity(&mdp, &theta_star)?.b0;
    Ok(Instance { mdp, theta_star, b0 })
}

fn run_one(alg: &AlgorithmSpec, inst: &Instance, seed: u64, epsilon_target: Option<f64>, record_inner: bool) -> Result<RunTrace> {
    let mdp = &inst.mdp;
    let mut trace = match alg {
        AlgorithmSpec::Vrql { num_epochs, delta, c1, c2, base, .. } => {
            let m = match (num_epochs, epsilon_target) {
                (Some(m), _) => *m,
                (None, Some(eps)) => epochs_needed(eps, inst.b0, *base),
                (None, None) => return Err(invalid("vrql without num_epochs needs epsilon_target")),
            };
            let plan = plan_parameters(mdp.discount(), *delta, mdp.num_pairs(), m, *c1, *c2, *base)?;
            let config = VrqlConfig { record_inner, ..VrqlConfig::from_plan(&plan, seed) };
            vr_q_learning(mdp, &config, Some(&inst.theta_star))?.1
        }
        AlgorithmSpec::Ordinary { num_iters, step, record_every, .. } => {
            let mut sampler = GenerativeSampler::new(mdp, seed)?;
            ordinary_q_learning(mdp, *num_iters, *step, &mut sampler, Some(&inst.theta_star), *record_every)?.1
        }
        AlgorithmSpec::OracleVr { num_epochs, epoch_length, step, .. } => {
            let mut sampler = GenerativeSampler::new(mdp, seed)?;
            oracle_vr_run(mdp, &inst.theta_star, *num_epochs, *epoch_length, *step, &mut sampler, record_inner)?.1
        }
        AlgorithmSpec::TwoPhase { epsilon, delta, c_epochs, c1, c2, base, .. } => {
            let config = TwoPhaseConfig {
                epsilon: *epsilon,
                delta: *delta,
                c_epochs: *c_epochs,
                c1: *c1,
                c2: *c2,
                base: *base,
                seed,
                record_inner,
            };
            two_phase_minimax(mdp, &config, Some(&inst.theta_star))?.1
        }
    };
    trace.algorithm_tag = alg.tag().to_string();
    Ok(trace)
}

/// Runs every `(gamma, algorithm, trial)` job and returns traces in that order.
///
/// Relative `File` sources resolve against `base_dir` when given.
pub fn run_trials(spec: &ExperimentSpec, base_dir: Option<&Path>) -> Result<Vec<RunTrace>> {
    spec.validate()?;
    let instances = spec
        .gammas
        .iter()
        .map(|&g| build_instance(&spec.mdp_source, g, base_dir))
        .collect::<Result<Vec<_>>>()?;

    let mut jobs = Vec::new();
    for (gi, _) in spec.gammas.iter().enumerate() {
        for (ai, _) in spec.algorithms.iter().enumerate() {
            for trial in 0..spec.trials {
                jobs.push((gi, ai, trial));
            }
        }
    }
    let execute = || {
        jobs.par_iter()
            .map(|&(gi, ai, trial)| {
                let mut trace = run_one(
                    &spec.algorithms[ai],
                    &instances[gi],
                    spec.trial_seed(trial),
                    spec.epsilon_target,
                    spec.record_inner,
                )?;
                trace.gamma = spec.gammas[gi];
                trace.trial = trial;
                Ok(trace)
            })
            .collect::<Result<Vec<_>>>()
    };
    match spec.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| invalid(e.to_string()))?
            .install(execute),
        None => execute(),
    }
}

/// Writes traces with the fixed [`CSV_HEADER`].
pub fn write_csv<W: Write>(traces: &[RunTrace], out: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    writer.write_record(CSV_HEADER.split(','))?;
    for trace in traces {
        let gamma = trace.gamma.to_string();
        let trial = trace.trial.to_string();
        for rec in &trace.records {
            writer.write_record([
                trace.algorithm_tag.as_str(),
                gamma.as_str(),
                trial.as_str(),
                rec.epoch.to_string().as_str(),
                rec.phase.as_str(),
                rec.cumulative_samples.to_string().as_str(),
                rec.linf_error.to_string().as_str(),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Runs the experiment and writes its CSV to `spec.output_path`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<RunTrace>> {
    let traces = run_trials(spec, None)?;
    let file = File::create(&spec.output_path)?;
    write_csv(&traces, BufWriter::new(file))?;
    Ok(traces)
}
