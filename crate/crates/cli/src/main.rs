use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _, Result};
use clap::{Parser, Subcommand};
use dcrl_core::checkpoint::{load_cmab, load_network, save_cmab, save_network};
use dcrl_core::cmab;
use dcrl_core::config::RunConfig;
use dcrl_core::ddqn::DdqnAgent;
use dcrl_core::fmt::real;
use dcrl_core::orchestrator::{
    compare, run_episode, train_policy, write_slot_log, Agents, Configurator, Offloader, Policy,
};
use dcrl_core::trace::{read_trace, split_trace, write_trace, TracePair};
use dcrl_core::ExecMode;

const CONFIG_ECHO: &str = "config.txt";
const TRACE_FILE: &str = "trace.csv";
const PRETRAINED_CMAB: &str = "cmab_pretrained.ckpt";
const CMAB_CKPT: &str = "cmab.ckpt";
const DDQN_CKPT: &str = "ddqn.ckpt";

#[derive(Parser)]
#[command(
    name = "dcrl",
    version,
    about = "Edge video analytics simulator with DDQN offloading and bandit configuration"
)]
struct Cli {
    /// Flat `key = value` config file; absent keys take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct TraceArgs {
    /// Read the trace from a CSV instead of generating it from the config.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scene + bandwidth trace CSV.
    GenTrace {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        slots: Option<usize>,
    },
    /// Warm up the bandit on the training split.
    PretrainCmab {
        #[command(flatten)]
        trace: TraceArgs,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a learning policy on the training split and write checkpoints.
    Train {
        #[command(flatten)]
        trace: TraceArgs,
        #[arg(long, default_value = "DCRL")]
        policy: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a policy greedily on the test split.
    Eval {
        #[command(flatten)]
        trace: TraceArgs,
        #[arg(long, default_value = "DCRL")]
        policy: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train and evaluate every configured policy for every configured seed.
    Compare {
        #[command(flatten)]
        trace: TraceArgs,
        /// Run cells one after another instead of on the thread pool.
        #[arg(long)]
        sequential: bool,
    },
    /// Print the effective configuration.
    DumpConfig,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("loading config {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn prepare_output(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(CONFIG_ECHO), cfg.to_text())?;
    Ok(dir)
}

fn load_trace(cfg: &RunConfig, args: &TraceArgs) -> Result<(TracePair, TracePair)> {
    let pair = match &args.trace {
        Some(path) => read_trace(path).with_context(|| format!("reading trace {}", path.display()))?,
        None => TracePair::generate(&cfg.scene, &cfg.bandwidth, cfg.trace_seed, cfg.slots)?,
    };
    Ok(split_trace(&pair, cfg.train_fraction)?)
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if !path.is_file() {
        bail!("missing checkpoint {} ({hint})", path.display());
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_checkpoints(dir: &Path, agents: &Agents) -> Result<()> {
    if let Some(agent) = &agents.ddqn {
        save_network(&agent.online, &dir.join(DDQN_CKPT))?;
    }
    if let Some(state) = &agents.cmab {
        save_cmab(state, &dir.join(CMAB_CKPT))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::DumpConfig => print!("{}", cfg.to_text()),
        Command::GenTrace { seed, slots } => {
            cfg.trace_seed = seed.unwrap_or(cfg.trace_seed);
            cfg.slots = slots.unwrap_or(cfg.slots);
            cfg.validate()?;
            let dir = prepare_output(&cfg)?;
            let pair = TracePair::generate(&cfg.scene, &cfg.bandwidth, cfg.trace_seed, cfg.slots)?;
            let path = dir.join(TRACE_FILE);
            write_trace(&pair, &path)?;
            println!("wrote {} ({} slots)", path.display(), pair.len());
        }
        Command::PretrainCmab { trace, seed } => {
            cfg.seed = seed.unwrap_or(cfg.seed);
            let dir = prepare_output(&cfg)?;
            let (train, _) = load_trace(&cfg, &trace)?;
            let state = cmab::pretrain(&train, &cfg.system, &cfg.cmab, cfg.pretrain_slots, cfg.seed)?;
            let path = dir.join(PRETRAINED_CMAB);
            save_cmab(&state, &path)?;
            println!("wrote {}", path.display());
        }
        Command::Train { trace, policy, seed } => {
            cfg.seed = seed.unwrap_or(cfg.seed);
            let policy = Policy::from_name(&policy)?;
            if !policy.trains() {
                bail!("{} has no learning component", policy.name());
            }
            let dir = cfg.output_dir.clone();
            let pretrained = dir.join(PRETRAINED_CMAB);
            if policy.configurator() == Configurator::Cmab {
                require(&pretrained, "run `dcrl pretrain-cmab` first")?;
            }
            prepare_output(&cfg)?;
            let (train, _) = load_trace(&cfg, &trace)?;
            let mut agents = Agents {
                ddqn: match policy.offloader() {
                    Offloader::Ddqn => Some(DdqnAgent::new(
                        cfg.ddqn.clone(),
                        dcrl_core::env::Action::COUNT,
                        cfg.seed,
                    )?),
                    _ => None,
                },
                cmab: match policy.configurator() {
                    Configurator::Cmab => Some(load_cmab(&pretrained)?),
                    _ => None,
                },
            };
            let log = train_policy(policy, &train, &cfg.system, &mut agents, cfg.passes, cfg.seed)?;
            log.write_csv(create(&dir.join("training_log.csv"))?)?;
            write_checkpoints(&dir, &agents)?;
            if let Some(last) = log.passes.last() {
                println!(
                    "{}: {} passes, last pass reward {} processing rate {}",
                    policy.name(),
                    log.passes.len(),
                    real(last.total_reward),
                    real(last.processing_rate)
                );
            }
        }
        Command::Eval { trace, policy, seed } => {
            cfg.seed = seed.unwrap_or(cfg.seed);
            let policy = Policy::from_name(&policy)?;
            let dir = cfg.output_dir.clone();
            let (ddqn_path, cmab_path) = (dir.join(DDQN_CKPT), dir.join(CMAB_CKPT));
            if policy.offloader() == Offloader::Ddqn {
                require(&ddqn_path, "run `dcrl train` first")?;
            }
            if policy.configurator() == Configurator::Cmab {
                require(&cmab_path, "run `dcrl train` first")?;
            }
            prepare_output(&cfg)?;
            let (_, test) = load_trace(&cfg, &trace)?;
            let agents = Agents {
                ddqn: (policy.offloader() == Offloader::Ddqn)
                    .then(|| load_network(&ddqn_path).map(|net| DdqnAgent::from_network(net, cfg.ddqn.clone())))
                    .transpose()?,
                cmab: (policy.configurator() == Configurator::Cmab)
                    .then(|| load_cmab(&cmab_path))
                    .transpose()?,
            };
            let m = run_episode(policy, &test, &cfg.system, &agents, cfg.seed)?;
            let path = dir.join(format!("eval_{}.csv", policy.name()));
            write_slot_log(&m.log, create(&path)?)?;
            println!(
                "{}: cum_reward {} processing_rate {} mean_accuracy {} mean_latency {} utility {}",
                policy.name(),
                real(m.cumulative_reward),
                real(m.processing_rate),
                real(m.mean_accuracy),
                real(m.mean_latency),
                real(m.utility)
            );
            println!("wrote {}", path.display());
        }
        Command::Compare { trace, sequential } => {
            let dir = prepare_output(&cfg)?;
            let (train, test) = load_trace(&cfg, &trace)?;
            let mode = if sequential {
                ExecMode::Sequential
            } else {
                ExecMode::Parallel
            };
            let table = compare(
                &cfg.policies,
                &train,
                &test,
                &cfg.system,
                &cfg.settings(),
                &cfg.seeds,
                mode,
            )?;
            let path = dir.join("comparison.csv");
            table.write_csv(create(&path)?)?;
            for a in &table.aggregates {
                println!(
                    "{:<5} reward {:>10.3}  rate {:.4}  acc {:.4}  latency {:.4}  utility {:.4}",
                    a.policy.name(),
                    a.mean[0],
                    a.mean[1],
                    a.mean[2],
                    a.mean[3],
                    a.mean[4]
                );
            }
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
