//! Command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{Overrides, SimConfig};
use crate::coordination::Mode;
use crate::csvio;
use crate::engine::{run_batch, run_experiment_with, RunResult};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, aggregate_batch, episode_rows, EpisodeRow, Timing};

#[derive(Debug, Parser)]
#[command(name = "fogrelay", version, about = "Mobile fog relay Q-learning simulator")]
pub struct Cli {
    /// TOML configuration file layered over the built-in defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Suppress progress output on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One run of the configured number of episodes.
    Run(RunArgs),
    /// Sweep both modes over relay counts and seeds.
    Batch(BatchArgs),
    /// Recompute the summary from an episodes CSV.
    Aggregate(AggregateArgs),
    /// Train one run and print each relay's Q-table.
    DumpQtable(DumpArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Decentralized,
    Centralized,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Decentralized => Mode::Decentralized,
            ModeArg::Centralized => Mode::Centralized,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TimingArg {
    Wall,
    Off,
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub episodes: Option<u32>,
    #[arg(long)]
    pub max_steps: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub relays: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the trained Q-tables to `qtables.txt`.
    #[arg(long)]
    pub dump_qtable: bool,
    #[arg(long, value_enum, default_value = "wall")]
    pub timing: TimingArg,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long)]
    pub runs: Option<u32>,
    /// Only this mode instead of both.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Only this relay count instead of the configured list.
    #[arg(long)]
    pub relays: Option<usize>,
    /// Worker threads; defaults to all cores.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// 2 runs × 10 episodes × 10 000 steps, timing off unless requested.
    #[arg(long)]
    pub smoke: bool,
    #[arg(long)]
    pub last_k: Option<u32>,
    /// `wall` records episode wall-clock time; `off` writes zeros. Default:
    /// off with --smoke, wall otherwise.
    #[arg(long, value_enum)]
    pub timing: Option<TimingArg>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// Episodes CSV produced by `run` or `batch`.
    pub episodes: PathBuf,
    #[arg(long)]
    pub last_k: Option<u32>,
    /// Summary CSV path; stdout if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub relays: Option<usize>,
    /// Output file; stdout if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn overrides(sim: &SimArgs, mode: Option<ModeArg>, relays: Option<usize>) -> Overrides {
    Overrides {
        seed: sim.seed,
        runs: None,
        mode: mode.map(Mode::from),
        relays,
        episodes: sim.episodes,
        max_steps: sim.max_steps,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn timing(t: TimingArg) -> Timing {
    match t {
        TimingArg::Wall => Timing::Wall,
        TimingArg::Off => Timing::Off,
    }
}

fn write_qtables<W: Write>(mut out: W, sim: &crate::engine::Simulation) -> std::io::Result<()> {
    for (r, q) in sim.agents.iter().enumerate() {
        writeln!(out, "# relay {}", sim.world.relay_labels[r])?;
        q.dump(&mut out)?;
        writeln!(out)?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let quiet = cli.quiet;
    let cfg_path = cli.config.as_deref();
    match cli.command {
        Command::Run(a) => {
            let cfg = SimConfig::load(cfg_path, &overrides(&a.sim, a.mode, a.relays))?;
            let mode = cfg.experiment.mode;
            if !quiet {
                eprintln!(
                    "run: {mode} relays={} seed={} episodes={}",
                    cfg.environment.relays, cfg.experiment.seed, cfg.agent.episodes
                );
            }
            let (result, sim) = run_experiment_with(&cfg, cfg.experiment.seed, mode)?;
            create_dir(&a.out)?;
            let rows: Vec<EpisodeRow> = result
                .episodes
                .iter()
                .map(|e| EpisodeRow::from_record(&result, e, timing(a.timing)))
                .collect();
            csvio::write_episodes_file(&a.out.join("episodes.csv"), &rows)?;
            cfg.write_resolved(&a.out)?;
            if a.dump_qtable {
                let path = a.out.join("qtables.txt");
                let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                write_qtables(std::io::BufWriter::new(f), &sim).map_err(|e| Error::io(&path, e))?;
            }
            if !quiet {
                report_run(&result);
            }
            Ok(())
        }
        Command::Batch(a) => {
            let mut o = overrides(&a.sim, None, None);
            o.runs = a.runs;
            if a.smoke {
                o = o.smoke();
            }
            let mut cfg = SimConfig::load(cfg_path, &o)?;
            if let Some(k) = a.last_k {
                cfg.experiment.last_k = k;
            }
            if let Some(r) = a.relays {
                cfg.experiment.relay_counts = vec![r];
            }
            cfg.validate()?;
            let modes: Vec<Mode> = match a.mode {
                Some(m) => vec![m.into()],
                None => Mode::ALL.to_vec(),
            };
            let t = timing(a.timing.unwrap_or(if a.smoke { TimingArg::Off } else { TimingArg::Wall }));
            let progress = |done: usize, total: usize, r: &RunResult| {
                if !quiet {
                    eprintln!(
                        "[{done}/{total}] {} relays={} run={} ({:.0} ms)",
                        r.mode, r.relay_count, r.run, r.wall_ms
                    );
                }
            };
            let batch = run_batch(
                &cfg,
                cfg.experiment.seed,
                cfg.experiment.runs,
                &modes,
                &cfg.experiment.relay_counts,
                a.workers,
                &progress,
            )?;
            create_dir(&a.out)?;
            csvio::write_episodes_file(&a.out.join("episodes.csv"), &episode_rows(&batch, t))?;
            let summary = aggregate_batch(&batch, cfg.experiment.last_k, t)?;
            csvio::write_summary_file(&a.out.join("summary.csv"), &summary)?;
            cfg.write_resolved(&a.out)?;
            if !quiet {
                eprintln!("wrote {}", a.out.display());
            }
            Ok(())
        }
        Command::Aggregate(a) => {
            let cfg = SimConfig::load(cfg_path, &Overrides::default())?;
            let rows = csvio::read_episodes_file(&a.episodes)?;
            let summary = aggregate(&rows, a.last_k.unwrap_or(cfg.experiment.last_k))?;
            match a.out {
                Some(p) => csvio::write_summary_file(&p, &summary),
                None => csvio::write_summary(std::io::stdout().lock(), &summary),
            }
        }
        Command::DumpQtable(a) => {
            let cfg = SimConfig::load(cfg_path, &overrides(&a.sim, a.mode, a.relays))?;
            let (_, sim) = run_experiment_with(&cfg, cfg.experiment.seed, cfg.experiment.mode)?;
            match a.out {
                Some(p) => {
                    let f = fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
                    write_qtables(std::io::BufWriter::new(f), &sim).map_err(|e| Error::io(&p, e))
                }
                None => write_qtables(std::io::stdout().lock(), &sim)
                    .map_err(|e| Error::io("<stdout>", e)),
            }
        }
    }
}

fn report_run(r: &RunResult) {
    let last = r.episodes.iter().rev().take(10);
    let (n, steps) = last.fold((0, 0u64), |(n, s), e| (n + 1, s + e.steps));
    eprintln!(
        "done in {:.0} ms; mean steps over last {n} episodes: {:.1}",
        r.wall_ms,
        steps as f64 / n.max(1) as f64
    );
}

/// Entry point used by the binary: parses arguments, runs, and maps errors
/// to a single `error[CODE]: ...` line and a nonzero exit status.
pub fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), e.to_string().replace('\n', " "));
            std::process::ExitCode::from(match e {
                Error::Config(_) => 2,
                _ => 1,
            })
        }
    }
}
