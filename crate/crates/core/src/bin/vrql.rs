use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use vrql_core::bounds::{corollary_budget, epochs_needed, plan_parameters, t_max, worst_case_budget};
use vrql_core::harness::{generate_mdp, run_trials, summarize, write_csv, ExperimentSpec, GeneratorKind, GeneratorParams};
use vrql_core::{greedy_policy, instance_complexity, solve_optimal_q, Error, Result, TabularMdp};

#[derive(Parser)]
#[command(name = "vrql", version, about = "Variance-reduced Q-learning toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an MDP document for theta*, its greedy policy and b0.
    Solve {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment spec and write its CSV trace.
    Run {
        #[arg(long)]
        spec: PathBuf,
        /// Overrides the spec's output_path.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Plan K and {N_m}, plus budgets when epsilon is given.
    Plan {
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// Number of state-action pairs D.
        #[arg(long)]
        pairs: usize,
        /// Number of epochs M; derived from --epsilon and --b0 when omitted.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        c1: f64,
        #[arg(long, default_value_t = 1.0)]
        c2: f64,
        #[arg(long, default_value_t = 2.0)]
        base: f64,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        b0: Option<f64>,
        #[arg(long)]
        r_max: Option<f64>,
        /// Constant for the corollary and worst-case budgets.
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long, default_value_t = 1.0)]
        c_prime: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate an MDP document from a params file or flags.
    Generate {
        #[arg(long, conflicts_with = "kind")]
        params: Option<PathBuf>,
        /// random_dense | garnet | chain | hard_single_action
        #[arg(long)]
        kind: Option<String>,
        #[arg(long, default_value_t = 10)]
        states: usize,
        #[arg(long, default_value_t = 3)]
        actions: usize,
        #[arg(long, default_value_t = 3)]
        branching: usize,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        r_max: f64,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize an experiment CSV at error level epsilon.
    Summarize {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

fn generator_from_flags(
    kind: &str,
    states: usize,
    branching: usize,
    p: Option<f64>,
) -> Result<(GeneratorKind, usize)> {
    Ok(match kind {
        "random_dense" => (GeneratorKind::RandomDense, states),
        "garnet" => (GeneratorKind::Garnet { branching }, states),
        "chain" => (GeneratorKind::Chain { length: states, success_prob: p.unwrap_or(1.0) }, states),
        "hard_single_action" => (GeneratorKind::HardSingleAction { p }, 2),
        other => return Err(Error::InvalidParameter(format!("unknown generator {other:?}"))),
    })
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve { mdp, tol, out } => {
            let mdp: TabularMdp = read_json(&mdp)?;
            let theta = solve_optimal_q(&mdp, tol)?;
            let complexity = instance_complexity(&mdp, &theta)?;
            let doc = json!({
                "num_states": mdp.num_states(),
                "num_actions": mdp.num_actions(),
                "gamma": mdp.discount(),
                "theta_star": theta.values(),
                "policy": greedy_policy(&theta).actions(),
                "sigma_star": complexity.sigma_star.values(),
                "theta_star_norm": complexity.theta_star_norm,
                "b0": complexity.b0,
            });
            emit(&doc, out.as_deref())
        }
        Command::Run { spec, output } => {
            let mut experiment: ExperimentSpec = read_json(&spec)?;
            if let Some(path) = output {
                experiment.output_path = path;
            }
            let base_dir = spec.parent().filter(|p| !p.as_os_str().is_empty());
            let traces = run_trials(&experiment, base_dir)?;
            let file = File::create(&experiment.output_path)?;
            write_csv(&traces, BufWriter::new(file))
        }
        Command::Plan { gamma, delta, pairs, epochs, c1, c2, base, epsilon, b0, r_max, c, c_prime, out } => {
            let m = match (epochs, epsilon, b0) {
                (Some(m), _, _) => m,
                (None, Some(eps), Some(b0)) if eps > 0.0 && base > 1.0 => epochs_needed(eps, b0, base),
                _ => return Err(Error::InvalidParameter("need --epochs or both --epsilon and --b0".into())),
            };
            let plan = plan_parameters(gamma, delta, pairs, m, c1, c2, base)?;
            let mut doc = serde_json::to_value(&plan)?;
            if let (Some(eps), Some(b0)) = (epsilon, b0) {
                doc["corollary_budget"] = json!(corollary_budget(gamma, delta, pairs, eps, b0, c, c_prime)?);
            }
            if let (Some(eps), Some(r)) = (epsilon, r_max) {
                doc["worst_case_budget"] = json!(worst_case_budget(gamma, delta, pairs, eps, r, c)?);
                doc["t_max"] = json!(t_max(gamma, delta, pairs, eps, r, c)?);
            }
            emit(&doc, out.as_deref())
        }
        Command::Generate { params, kind, states, actions, branching, p, r_max, gamma, seed, out } => {
            let params = match (params, kind) {
                (Some(path), _) => read_json::<GeneratorParams>(&path)?,
                (None, Some(kind)) => {
                    let (kind, num_states) = generator_from_flags(&kind, states, branching, p)?;
                    GeneratorParams { kind, num_states, num_actions: actions, r_max, gamma, seed }
                }
                (None, None) => return Err(Error::InvalidParameter("need --params or --kind".into())),
            };
            emit(&generate_mdp(&params)?, out.as_deref())
        }
        Command::Summarize { csv, epsilon, out } => {
            if epsilon.is_nan() || epsilon <= 0.0 {
                return Err(Error::InvalidParameter("epsilon must be positive".into()));
            }
            emit(&summarize(&csv, epsilon)?, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
