use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use gaitpref::experiment::{
    run_experiment, synthesize_mock_fixture, ExperimentConfig, ExperimentResult, Method,
};
use gaitpref::{project_for_deployment, rollout, TaskVector};

/// Simulation study runner for gait preference learning.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the tasks × methods × budgets × seeds sweep.
    Run(RunArgs),
    /// Roll out one command and write the trajectory JSON.
    Rollout(RolloutArgs),
    /// Print the aggregate table of a finished run.
    Report {
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
    },
    /// Write a hash-keyed mock fixture covering every model call of a config.
    MockFixture {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Spread of the synthesized candidates around each target.
        #[arg(long, default_value_t = 0.15)]
        sigma: f64,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON experiment config; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_name = "FIXTURE")]
    mock_llm: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long, value_delimiter = ',')]
    budgets: Option<Vec<usize>>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    /// Name of the environment variable holding the endpoint's API key.
    #[arg(long, value_name = "VAR")]
    api_key_env: Option<String>,
}

#[derive(Debug, Args)]
struct RolloutArgs {
    /// velocity pitch trot pace bound
    #[arg(
        long,
        num_args = 1..=5,
        required = true,
        value_delimiter = ',',
        allow_negative_numbers = true
    )]
    omega: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the rollout noise std.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
}

fn load_config(path: Option<&PathBuf>) -> anyhow::Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn run(args: RunArgs) -> anyhow::Result<ExitCode> {
    let mut config = load_config(args.config.as_ref())?;
    if let Some(m) = args.methods {
        config.methods = m;
    }
    if let Some(b) = args.budgets {
        config.query_budgets = b;
    }
    if let Some(s) = args.seeds {
        config.seeds = s;
    }
    if let Some(s) = args.base_seed {
        config.base_seed = s;
    }
    if let Some(f) = args.mock_llm {
        config.llm.mock_fixture = Some(f);
    }
    if let Some(var) = args.api_key_env {
        config
            .llm
            .endpoint
            .get_or_insert_with(Default::default)
            .api_key_env_var = var;
    }

    let result = run_experiment(&config)?;
    result.write(&args.out)?;
    print!("{}", table(&result));
    let failed = result.failed_cells();
    if failed > 0 {
        for row in result.rows.iter().filter(|r| r.error.is_some()) {
            eprintln!(
                "failed: {} {} n={} rep={}: {}",
                row.task,
                row.method,
                row.budget,
                row.replicate,
                row.error.as_deref().unwrap_or_default()
            );
        }
        eprintln!("{failed} of {} cells failed", result.rows.len());
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn table(result: &ExperimentResult) -> String {
    let mut out = format!(
        "{:<10} {:<15} {:>6} {:>5} {:>6} {:>10} {:>10}\n",
        "task", "method", "budget", "seeds", "failed", "mse_mean", "mse_std"
    );
    for a in &result.aggregates {
        out.push_str(&format!(
            "{:<10} {:<15} {:>6} {:>5} {:>6} {:>10.5} {:>10.5}\n",
            a.task,
            a.method.name(),
            a.budget,
            a.n_seeds,
            a.n_failed,
            a.mse_mean,
            a.mse_std
        ));
    }
    let mut budgets: Vec<usize> = result.aggregates.iter().map(|a| a.budget).collect();
    budgets.sort_unstable();
    budgets.dedup();
    let mut methods: Vec<Method> = result.aggregates.iter().map(|a| a.method).collect();
    methods.sort();
    methods.dedup();
    out.push_str("\nmean over tasks\n");
    for m in methods {
        out.push_str(&format!("{:<15}", m.name()));
        for &b in &budgets {
            match result.method_mean(m, b) {
                Some(x) => out.push_str(&format!(" n={b}: {x:.5}")),
                None => out.push_str(&format!(" n={b}: -")),
            }
        }
        out.push('\n');
    }
    out
}

fn emit_rollout(args: RolloutArgs) -> anyhow::Result<()> {
    let omega: [f64; 5] = args
        .omega
        .as_slice()
        .try_into()
        .context("--omega takes exactly 5 numbers")?;
    let config = ExperimentConfig::default();
    let mut rc = config.learn.rollout;
    if let Some(n) = args.noise {
        rc.noise_sigma = n;
    }
    if let Some(s) = args.steps {
        rc.steps = s;
    }
    let raw = TaskVector::from_array(omega);
    if !raw.is_finite() {
        bail!("--omega must be finite");
    }
    let deployed = project_for_deployment(&raw, &config.learn.ranges);
    if deployed != raw {
        eprintln!("projected {raw} to {deployed} for deployment");
    }
    let traj = rollout(&deployed, &rc, args.seed)?;
    std::fs::write(&args.out, traj.to_json()?)
        .with_context(|| format!("writing {}", args.out.display()))?;
    Ok(())
}

fn main() -> anyhow::Result<ExitCode> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Rollout(args) => emit_rollout(args).map(|_| ExitCode::SUCCESS),
        Command::Report { input } => {
            let result = ExperimentResult::read(&input)
                .with_context(|| format!("reading results from {}", input.display()))?;
            print!("{}", table(&result));
            Ok(ExitCode::SUCCESS)
        }
        Command::MockFixture { config, out, sigma } => {
            let config = load_config(config.as_ref())?;
            let fixture = synthesize_mock_fixture(&config, sigma)?;
            std::fs::write(&out, serde_json::to_string_pretty(&fixture)?)
                .with_context(|| format!("writing {}", out.display()))?;
            eprintln!(
                "{} responses written to {}",
                fixture.by_hash.len(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
