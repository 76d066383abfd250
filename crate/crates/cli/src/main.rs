use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mfrl_core::agents::Algo;
use mfrl_core::envs::nas::synth_reward_table;
use mfrl_core::experiment::{
    read_rows, report_text, run_sweep, summarize, synthetic_high, synthetic_low, write_report_csv, EnvConfig,
    ExperimentConfig, SyntheticEnvConfig,
};
use mfrl_core::parallel::configure_threads;
use mfrl_core::theory::{run_verification, VerifyConfig};

#[derive(Parser)]
#[command(name = "mfrl", version, about = "Multifidelity Monte Carlo RL experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random MDP (and its low-fidelity copy) or a synthetic NAS reward table.
    GenerateEnv(GenerateArgs),
    /// Train a single configuration.
    Train(TrainArgs),
    /// Run the full sweep described by a config file.
    Sweep(SweepArgs),
    /// Check the concentration and policy-improvement bounds by simulation.
    Verify(VerifyArgs),
    /// Summarise a merged results CSV.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum EnvKind {
    Synthetic,
    Nas,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "synthetic")]
    kind: EnvKind,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Config file whose `env` table is used as the base.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    states: Option<usize>,
    #[arg(long)]
    actions: Option<usize>,
    #[arg(long)]
    terminal_prob: Option<f64>,
    /// Low-fidelity SNR in dB; `inf` copies the high-fidelity model.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<f64>,
    #[arg(long, default_value_t = 0.99)]
    discount: f64,
    /// Epoch count of a synthetic NAS table.
    #[arg(long, default_value_t = 200)]
    epochs: u32,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core, 1 runs sequentially.
    #[arg(long)]
    jobs: Option<usize>,
    /// Root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Low-fidelity epoch of the NAS reward table.
    #[arg(long)]
    fidelity_epoch: Option<u32>,
    /// Use the restricted NAS low-fidelity space.
    #[arg(long)]
    restricted_low: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "mfmcrl")]
    algo: String,
    /// Seed label of the run.
    #[arg(long, default_value_t = 0)]
    run_seed: u64,
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct VerifyArgs {
    /// Directory for `verify.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Smaller trial counts for a fast smoke check.
    #[arg(long)]
    quick: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Merged results CSV.
    merged: PathBuf,
    /// Checkpoints averaged into each run's final reward.
    #[arg(long, default_value_t = 5)]
    window: usize,
    /// Also write the table as CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(j) = common.jobs {
        cfg.jobs = j;
    }
    if let Some(s) = common.seed {
        cfg.root_seed = s;
    }
    if let EnvConfig::Nas(n) = &mut cfg.env {
        if let Some(e) = common.fidelity_epoch {
            n.low_epoch = e;
        }
        n.restricted_low |= common.restricted_low;
    } else if common.fidelity_epoch.is_some() || common.restricted_low {
        bail!("--fidelity-epoch and --restricted-low need a NAS environment");
    }
    Ok(cfg)
}

fn generate(args: GenerateArgs) -> Result<()> {
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let seed = args.seed.unwrap_or(0);
    match args.kind {
        EnvKind::Nas => {
            let table = synth_reward_table(seed, args.epochs);
            let path = args.out.join("reward_table.csv");
            let f = fs::File::create(&path)?;
            table.write_csv(std::io::BufWriter::new(f))?;
            println!("wrote {}", path.display());
        }
        EnvKind::Synthetic => {
            let mut env = match &args.config {
                Some(p) => match ExperimentConfig::load(p)?.env {
                    EnvConfig::Synthetic(s) => s,
                    EnvConfig::Nas(_) => bail!("config describes a NAS environment"),
                },
                None => SyntheticEnvConfig::default(),
            };
            env.num_states = args.states.unwrap_or(env.num_states);
            env.num_actions = args.actions.unwrap_or(env.num_actions);
            env.terminal_prob = args.terminal_prob.unwrap_or(env.terminal_prob);
            let hi = synthetic_high(&env, args.discount, seed)?;
            write_json(&args.out.join("hi.json"), &hi.to_json()?)?;
            if let Some(snr) = args.snr {
                let lo = synthetic_low(&hi, &env, snr, seed)?;
                write_json(&args.out.join("lo.json"), &lo.to_json()?)?;
            }
        }
    }
    Ok(())
}

fn write_json(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn sweep(cfg: ExperimentConfig) -> Result<bool> {
    configure_threads(cfg.jobs);
    let outcome = run_sweep(&cfg)?;
    for r in outcome.manifest.runs.iter().filter(|r| r.status != "ok") {
        eprintln!("run {} failed: {}", r.run_id, r.error.as_deref().unwrap_or("unknown error"));
    }
    let rows = read_rows(fs::File::open(&outcome.merged)?)?;
    print!("{}", report_text(&summarize(&rows, cfg.final_window)));
    println!(
        "{} runs, {} failed, results in {}",
        outcome.manifest.runs.len(),
        outcome.failed(),
        cfg.out.display()
    );
    Ok(outcome.failed() == 0)
}

fn train(args: TrainArgs) -> Result<bool> {
    let mut cfg = load_config(&args.common)?;
    let algo: Algo = args.algo.parse().map_err(anyhow::Error::msg)?;
    cfg.algos = vec![algo];
    cfg.seeds = vec![args.run_seed];
    if let Some(s) = args.snr {
        cfg.snr_db = vec![s];
    }
    cfg.snr_db.truncate(1);
    if let Some(m) = args.m {
        cfg.m = vec![m];
    }
    cfg.m.truncate(1);
    if let Some(e) = args.episodes {
        cfg.agent.episodes = e;
    }
    sweep(cfg)
}

fn verify(args: VerifyArgs) -> Result<bool> {
    configure_threads(args.jobs.unwrap_or(0));
    let mut cfg = VerifyConfig::default();
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.quick {
        cfg.tail_trials = 2_000;
        cfg.variance_reps = 2_000;
        cfg.coverage_trials = 1_000;
        cfg.greedy.instances = 4;
        cfg.greedy.trials = 500;
        cfg.greedy.pilot = 500;
    }
    let exec = if args.jobs == Some(1) {
        mfrl_core::parallel::Execution::Sequential
    } else {
        mfrl_core::parallel::Execution::Parallel
    };
    let report = run_verification(&cfg, exec)?;
    print!("{}", report.to_text());
    if let Some(dir) = args.out {
        fs::create_dir_all(&dir)?;
        let path = dir.join("verify.csv");
        report.write_csv(fs::File::create(&path)?)?;
        println!("wrote {}", path.display());
    }
    Ok(report.all_passed())
}

fn report(args: ReportArgs) -> Result<bool> {
    let f = fs::File::open(&args.merged).with_context(|| format!("opening {}", args.merged.display()))?;
    let rows = summarize(&read_rows(f)?, args.window);
    if rows.is_empty() {
        bail!("{} has no result rows", args.merged.display());
    }
    print!("{}", report_text(&rows));
    if let Some(path) = args.out {
        write_report_csv(fs::File::create(&path)?, &rows)?;
    }
    Ok(true)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenerateEnv(a) => generate(a).map(|_| true),
        Command::Train(a) => train(a),
        Command::Sweep(a) => sweep(load_config(&a.common)?),
        Command::Verify(a) => verify(a),
        Command::Report(a) => report(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
