//! Subcommands: `simulate`, `fit`, `recover`, `report` and `serve`.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use trustcal_core::agent::{AgentParams, ResponsePolicy};
use trustcal_core::cohort::{simulate_cohort, simulation_hyper, AgentSource, RatePreset};
use trustcal_core::confidence::Condition;
use trustcal_core::datastore::{read_trials_path, write_simulated_path, write_trials_path, SessionConfig};
use trustcal_core::inference::map::{fit_map, FitOptions, FitResult};
use trustcal_core::inference::model::{Dataset, HyperParams};
use trustcal_core::inference::recovery::{run_recovery, RecoveryConfig};
use trustcal_core::inference::{sample_posterior, PosteriorDraws, SamplerConfig};
use trustcal_core::report::{build_report, write_figures, ReportOptions};

use crate::server::{self, AppState};

/// Diagnostic thresholds applied to MCMC summaries.
pub const RHAT_LIMIT: f64 = 1.01;
pub const ESS_LIMIT: f64 = 400.0;

#[derive(Debug, Parser)]
#[command(name = "trustcal", version, about = "Simulate, fit and analyse trust-calibration experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate learning agents and write their trials as CSV.
    Simulate(SimulateArgs),
    /// Fit the learning model to a trial CSV by MAP or MCMC.
    Fit(FitArgs),
    /// Parameter-recovery study: simulate from the prior, refit, correlate.
    Recover(RecoverArgs),
    /// Behavioural and model-fit report with per-figure CSVs.
    Report(ReportArgs),
    /// Run the HTTP session service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyKind {
    ProbabilityMatch,
    Threshold,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// standard, overconfidence, underconfidence or reverse. Defaults to the
    /// preset's condition when `--preset` is given.
    #[arg(long)]
    pub condition: Option<Condition>,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u32).range(1..))]
    pub agents: u32,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u32).range(1..))]
    pub trials: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Agent parameters as a JSON object or a path to one; all agents share them.
    #[arg(long, conflicts_with = "preset")]
    pub params: Option<String>,
    /// Named learning-rate preset shared by all agents.
    #[arg(long)]
    pub preset: Option<RatePreset>,
    #[arg(long, value_enum, default_value_t = PolicyKind::ProbabilityMatch)]
    pub policy: PolicyKind,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Append raw confidence and the agent's v, b and w to each row.
    #[arg(long)]
    pub latent: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitMethod {
    Map,
    Mcmc,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = FitMethod::Mcmc)]
    pub method: FitMethod,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(2..))]
    pub chains: u32,
    /// Iterations per chain, warmup included.
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1000)]
    pub warmup: usize,
    /// Full sampler sweeps per recorded iteration.
    #[arg(long, default_value_t = SamplerConfig::default().sweeps_per_iteration)]
    pub sweeps: usize,
    /// Optimizer restarts per participant (MAP).
    #[arg(long, default_value_t = 20)]
    pub restarts: usize,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u32).range(3..))]
    pub agents: u32,
    /// Trials per agent; shorter counts refit a prefix of the same sessions.
    #[arg(long, value_delimiter = ',', default_value = "50,200,800")]
    pub trials: Vec<u32>,
    #[arg(long, default_value_t = 20)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "recovery.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Posterior draws CSV from `fit --method mcmc`; adds trajectories.
    #[arg(long)]
    pub draws: Option<PathBuf>,
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
    /// Directory for fig3/fig4/fig6 CSVs.
    #[arg(long)]
    pub figures: Option<PathBuf>,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    pub block_size: u32,
    /// Skip model-fit statistics when no posterior is given.
    #[arg(long)]
    pub no_model_fit: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// SessionConfig JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Fit(a) => fit(&a),
        Command::Recover(a) => recover(&a),
        Command::Report(a) => report(&a),
        Command::Serve(a) => serve(&a),
    }
}

fn parse_params(arg: &str) -> Result<AgentParams> {
    let text = if Path::new(arg).is_file() {
        fs::read_to_string(arg).with_context(|| format!("reading {arg}"))?
    } else {
        arg.to_string()
    };
    let params: AgentParams = serde_json::from_str(&text).context("parsing --params")?;
    params.validate_for_simulation()?;
    Ok(params)
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let condition = match (args.condition, args.preset) {
        (Some(c), _) => c,
        (None, Some(p)) => p.condition(),
        (None, None) => bail!("--condition is required unless --preset is given"),
    };
    let source = if let Some(p) = &args.params {
        AgentSource::Fixed(parse_params(p)?)
    } else if let Some(p) = args.preset {
        AgentSource::Fixed(p.params())
    } else {
        AgentSource::Prior(simulation_hyper())
    };
    let policy = match args.policy {
        PolicyKind::ProbabilityMatch => ResponsePolicy::ProbabilityMatch,
        PolicyKind::Threshold => ResponsePolicy::threshold(args.threshold)?,
    };
    let trials = simulate_cohort(&source, condition, args.agents as usize, args.trials, &policy, args.seed)?;
    if args.latent {
        write_simulated_path(&trials, &args.out)?;
    } else {
        let records: Vec<_> = trials.into_iter().map(|t| t.record).collect();
        write_trials_path(&records, &args.out)?;
    }
    println!("wrote {} trials for {} agents to {}", args.agents as u64 * u64::from(args.trials), args.agents, args.out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct ParticipantFit {
    pub participant_id: String,
    pub condition: Condition,
    #[serde(flatten)]
    pub fit: FitResult,
}

#[derive(Debug, Serialize)]
pub struct Diagnostics {
    pub n_chains: usize,
    pub n_draws_per_chain: usize,
    pub max_rhat: f64,
    pub min_ess: f64,
    pub passed: bool,
    /// Parameters with R-hat >= 1.01 or ESS <= 400.
    pub flagged: Vec<String>,
    pub mean_acceptance: f64,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let records = read_trials_path(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let data = Dataset::from_records(&records)?;
    if data.is_empty() {
        bail!("{} contains no trials", args.input.display());
    }
    fs::create_dir_all(&args.out_dir)?;
    match args.method {
        FitMethod::Map => {
            let hyper = HyperParams::prior_means();
            let fits = data
                .participants
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let options = FitOptions {
                        restarts: args.restarts,
                        seed: args.seed.wrapping_add(i as u64),
                        hyper: hyper.clone(),
                        ..FitOptions::default()
                    };
                    let fit = fit_map(&p.records, &hyper, p.condition, &options)?;
                    Ok(ParticipantFit { participant_id: p.id.clone(), condition: p.condition, fit })
                })
                .collect::<Result<Vec<_>>>()?;
            let path = args.out_dir.join("map_fits.json");
            write_json(&path, &fits)?;
            let converged = fits.iter().filter(|f| f.fit.converged).count();
            println!("MAP fits for {} participants ({converged} converged) written to {}", fits.len(), path.display());
        }
        FitMethod::Mcmc => {
            let config = SamplerConfig {
                n_chains: args.chains as usize,
                n_iterations: args.samples,
                n_warmup: args.warmup,
                seed: args.seed,
                sweeps_per_iteration: args.sweeps,
                ..SamplerConfig::default()
            };
            let draws = sample_posterior(&data, &config)?;
            draws.write_csv_path(args.out_dir.join("draws.csv"))?;
            let summary = draws.summary()?;
            write_json(&args.out_dir.join("summary.json"), &draws.summary_json()?)?;
            let flagged: Vec<String> =
                summary.iter().filter(|(_, s)| !(s.rhat < RHAT_LIMIT && s.ess > ESS_LIMIT)).map(|(n, _)| n.clone()).collect();
            let acceptance: Vec<f64> = draws.acceptance.iter().flatten().copied().collect();
            let diagnostics = Diagnostics {
                n_chains: draws.n_chains,
                n_draws_per_chain: draws.n_iterations,
                max_rhat: summary.iter().map(|(_, s)| s.rhat).fold(f64::NEG_INFINITY, f64::max),
                min_ess: summary.iter().map(|(_, s)| s.ess).fold(f64::INFINITY, f64::min),
                passed: flagged.is_empty(),
                flagged,
                mean_acceptance: acceptance.iter().sum::<f64>() / acceptance.len().max(1) as f64,
            };
            write_json(&args.out_dir.join("diagnostics.json"), &diagnostics)?;
            println!(
                "{} chains x {} draws; max R-hat {:.4}, min ESS {:.0}",
                diagnostics.n_chains, diagnostics.n_draws_per_chain, diagnostics.max_rhat, diagnostics.min_ess
            );
            if !diagnostics.passed {
                eprintln!("warning: {} parameters failed convergence checks: {}", diagnostics.flagged.len(), diagnostics.flagged.join(", "));
            }
        }
    }
    Ok(())
}

pub fn recover(args: &RecoverArgs) -> Result<()> {
    let config = RecoveryConfig {
        n_agents: args.agents as usize,
        trial_counts: args.trials.clone(),
        seed: args.seed,
        restarts: args.restarts,
        ..RecoveryConfig::default()
    };
    let report = run_recovery(&config)?;
    write_json(&args.out, &report)?;
    print!("{:>8}", "trials");
    for name in AgentParams::NAMES {
        print!(" {name:>16}");
    }
    println!();
    for level in &report.levels {
        print!("{:>8}", level.n_trials);
        for p in &level.parameters {
            match p.correlation {
                Some(r) => print!(" {r:>16.3}"),
                None => print!(" {:>16}", "-"),
            }
        }
        println!();
    }
    println!("report written to {}", args.out.display());
    Ok(())
}

pub fn report(args: &ReportArgs) -> Result<()> {
    let records = read_trials_path(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let draws = args
        .draws
        .as_ref()
        .map(|p| PosteriorDraws::read_csv_path(p).with_context(|| format!("reading {}", p.display())))
        .transpose()?;
    let options = ReportOptions {
        block_size: args.block_size,
        model_fit: !args.no_model_fit,
        fit_options: FitOptions { seed: args.seed, ..FitOptions::default() },
    };
    let report = build_report(&records, draws.as_ref(), &options)?;
    write_json(&args.out, &report)?;
    println!("report written to {}", args.out.display());
    if let Some(dir) = &args.figures {
        fs::create_dir_all(dir)?;
        for path in write_figures(&report, dir)? {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

pub fn serve(args: &ServeArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => SessionConfig::read_path(path).with_context(|| format!("reading {}", path.display()))?,
        None => SessionConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let state = Arc::new(AppState::new(config)?);
    let addr: SocketAddr = format!("{}:{}", args.host, args.port).parse().context("invalid --host/--port")?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(server::serve(addr, state))?;
    Ok(())
}
