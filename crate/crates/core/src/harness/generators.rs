//! Seeded MDP families used by the experiments.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mdp::TabularMdp;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Dense rows drawn uniformly from the simplex; rewards uniform in `[-r_max, r_max]`.
    RandomDense,
    /// `branching` distinct random successors per pair with simplex weights;
    /// rewards uniform in `[0, r_max]`.
    Garnet { branching: usize },
    /// Birth-death chain over `length` states. Action `a` aims left, right or
    /// stays for `a % 3 == 0, 1, 2` and succeeds with `success_prob`, otherwise
    /// the state is kept. Reward grows linearly along the chain.
    Chain {
        length: usize,
        #[serde(default = "one")]
        success_prob: f64,
    },
    /// Two states, one action: state 0 stays with probability `p` (reward
    /// `r_max`), state 1 is absorbing with reward 0. Without `p` the
    /// discount-dependent choice `(4 gamma - 1) / (3 gamma)` is used.
    HardSingleAction {
        #[serde(default)]
        p: Option<f64>,
    },
}

fn one() -> f64 {
    1.0
}

fn default_gamma() -> f64 {
    0.9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub kind: GeneratorKind,
    #[serde(default)]
    pub num_states: usize,
    #[serde(default)]
    pub num_actions: usize,
    pub r_max: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl GeneratorParams {
    pub fn garnet(num_states: usize, num_actions: usize, branching: usize, r_max: f64, gamma: f64, seed: u64) -> Self {
        GeneratorParams { kind: GeneratorKind::Garnet { branching }, num_states, num_actions, r_max, gamma, seed }
    }
}

/// Fills `out` with a uniform draw from the probability simplex.
fn uniform_simplex<R: Rng>(rng: &mut R, out: &mut [f64]) {
    for w in out.iter_mut() {
        let u: f64 = rng.random();
        *w = -(1.0 - u).ln();
    }
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        out.iter_mut().for_each(|w| *w /= total);
    } else {
        out.iter_mut().for_each(|w| *w = 0.0);
        out[0] = 1.0;
    }
}

fn check_dims(params: &GeneratorParams) -> Result<()> {
    if params.num_states == 0 || params.num_actions == 0 {
        return Err(invalid("generator needs num_states and num_actions >= 1"));
    }
    Ok(())
}

/// Builds an MDP from `params`; every output passes `validate_mdp`.
pub fn generate_mdp(params: &GeneratorParams) -> Result<TabularMdp> {
    if !(params.r_max >= 0.0 && params.r_max.is_finite()) {
        return Err(invalid("r_max must be finite and nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let r_max = params.r_max;
    match params.kind {
        GeneratorKind::RandomDense => {
            check_dims(params)?;
            let (ns, na) = (params.num_states, params.num_actions);
            let mut kernel = vec![0.0; ns * na * ns];
            for row in kernel.chunks_mut(ns) {
                uniform_simplex(&mut rng, row);
            }
            let reward = (0..ns * na).map(|_| rng.random_range(-r_max..=r_max)).collect();
            TabularMdp::new(ns, na, kernel, reward, params.gamma, r_max)
        }
        GeneratorKind::Garnet { branching } => {
            check_dims(params)?;
            let (ns, na) = (params.num_states, params.num_actions);
            if branching == 0 || branching > ns {
                return Err(invalid(format!("garnet branching {branching} must lie in [1, {ns}]")));
            }
            let mut kernel = vec![0.0; ns * na * ns];
            let mut weights = vec![0.0; branching];
            for row in kernel.chunks_mut(ns) {
                let successors = sample_indices(&mut rng, ns, branching);
                uniform_simplex(&mut rng, &mut weights);
                for (next, &w) in successors.iter().zip(&weights) {
                    row[next] = w;
                }
            }
            let reward = (0..ns * na).map(|_| rng.random_range(0.0..=r_max)).collect();
            TabularMdp::new(ns, na, kernel, reward, params.gamma, r_max)
        }
        GeneratorKind::Chain { length, success_prob } => {
            if length == 0 || params.num_actions == 0 {
                return Err(invalid("chain needs length >= 1 and num_actions >= 1"));
            }
            if !(0.0..=1.0).contains(&success_prob) {
                return Err(invalid("chain success_prob must lie in [0, 1]"));
            }
            let (ns, na) = (length, params.num_actions);
            let mut kernel = vec![0.0; ns * na * ns];
            let mut reward = vec![0.0; ns * na];
            for s in 0..ns {
                for a in 0..na {
                    let target = match a % 3 {
                        0 => s.saturating_sub(1),
                        1 => (s + 1).min(ns - 1),
                        _ => s,
                    };
                    let row = &mut kernel[(s * na + a) * ns..(s * na + a + 1) * ns];
                    row[target] += success_prob;
                    row[s] += 1.0 - success_prob;
                    reward[s * na + a] = if ns == 1 { r_max } else { r_max * s as f64 / (ns - 1) as f64 };
                }
            }
            TabularMdp::new(ns, na, kernel, reward, params.gamma, r_max)
        }
        GeneratorKind::HardSingleAction { p } => {
            let gamma = params.gamma;
            let p = p.unwrap_or_else(|| ((4.0 * gamma - 1.0) / (3.0 * gamma)).clamp(0.0, 1.0));
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid("hard_single_action p must lie in [0, 1]"));
            }
            let kernel = vec![p, 1.0 - p, 0.0, 1.0];
            TabularMdp::new(2, 1, kernel, vec![r_max, 0.0], gamma, r_max)
        }
    }
}
