use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;

use disc_core::agent::Mode;
use disc_core::data::{self, lastfm::MIN_USER_INTERACTIONS, NmfOptions};
use disc_core::experiment::{compare_modes, run_experiment};
use disc_core::seeds::Rng;
use disc_core::RunConfig;

#[derive(Parser, Debug)]
#[command(
    name = "disc-bandit",
    version,
    about = "Distributed conservative contextual bandit simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run all trials of one configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (defaults to `run.output` from the config).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mode: Option<String>,
    },
    /// Run matched-seed variants of a configuration.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `key=v1,v2,...` with key one of alpha, agents, mode.
        #[arg(long)]
        vary: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a configuration without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Build an outer-product feature table from a ratings file.
    Ingest {
        #[arg(long, value_enum)]
        dataset: Dataset,
        #[arg(long)]
        path: PathBuf,
        #[arg(long, default_value_t = 3)]
        rank: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Random `USERSxITEMS` selection, e.g. `100x50`.
        #[arg(long)]
        subsample: Option<String>,
        /// Comma-separated shared parameter used to bound rewards by 1.
        #[arg(long)]
        theta: Option<String>,
        #[arg(long, default_value_t = MIN_USER_INTERACTIONS)]
        min_interactions: usize,
        #[arg(long, default_value_t = 1000)]
        max_iters: usize,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Dataset {
    Movielens,
    Lastfm,
}

/// Failure tagged with its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn config_err(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 1,
        error: error.into(),
    }
}

fn runtime_err(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: error.into(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run {
            config,
            out,
            trials,
            seed,
            mode,
        } => {
            let mut cfg = load(&config)?;
            if let Some(t) = trials {
                cfg.run.trials = t;
            }
            if let Some(s) = seed {
                cfg.run.seed = s;
            }
            if let Some(m) = mode {
                cfg.algo.mode = m.parse::<Mode>().map_err(|e| config_err(anyhow!(e)))?;
            }
            cfg.validate().map_err(config_err)?;
            let out = out.unwrap_or_else(|| cfg.run.output.clone());
            let (exp, written) = run_experiment(&cfg, &out).map_err(runtime_err)?;
            let last = exp.final_summary();
            println!(
                "mode={} agents={} horizon={} trials={}",
                cfg.algo.mode, cfg.tasks.agents, cfg.run.horizon, cfg.run.trials
            );
            println!(
                "mean cumulative regret {:.4} (per agent {:.4}), violations {}, conservative rounds {:.1}, sync epochs {:.1}",
                last.cum_expected_regret,
                last.per_agent_cum_expected_regret,
                exp.total_violations(),
                last.cum_conservative,
                last.sync_epochs
            );
            println!("wrote {}", written.rounds.display());
            println!("wrote {}", written.summary.display());
            if let Some(f) = written.features {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::Sweep { config, vary, out } => {
            let cfg = load(&config)?;
            let (key, values) = vary
                .split_once('=')
                .ok_or_else(|| config_err(anyhow!("--vary expects key=v1,v2,..., got {vary:?}")))?;
            let configs = values
                .split(',')
                .map(|v| cfg.with_override(key.trim(), v.trim()))
                .collect::<Result<Vec<_>, _>>()
                .map_err(config_err)?;
            let out = out.unwrap_or_else(|| cfg.run.output.clone());
            let exps = compare_modes(&configs, &out).map_err(runtime_err)?;
            for (id, (exp, v)) in exps.iter().zip(values.split(',')).enumerate() {
                let last = exp.final_summary();
                println!(
                    "sweep_id={id} {key}={} regret {:.4} per-agent {:.4} violations {}",
                    v.trim(),
                    last.cum_expected_regret,
                    last.per_agent_cum_expected_regret,
                    exp.total_violations()
                );
            }
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            println!(
                "ok: {} agents, d = {}, mode {}, horizon {}",
                cfg.tasks.agents, cfg.env.dim, cfg.algo.mode, cfg.run.horizon
            );
            Ok(())
        }
        Command::Ingest {
            dataset,
            path,
            rank,
            seed,
            out,
            subsample,
            theta,
            min_interactions,
            max_iters,
        } => ingest(IngestArgs {
            dataset,
            path,
            rank,
            seed,
            out,
            subsample,
            theta,
            min_interactions,
            max_iters,
        }),
    }
}

fn load(path: &Path) -> Result<RunConfig, Failure> {
    RunConfig::from_path(path)
        .with_context(|| format!("loading {}", path.display()))
        .map_err(config_err)
}

struct IngestArgs {
    dataset: Dataset,
    path: PathBuf,
    rank: usize,
    seed: u64,
    out: PathBuf,
    subsample: Option<String>,
    theta: Option<String>,
    min_interactions: usize,
    max_iters: usize,
}

fn parse_subsample(s: &str) -> Result<(usize, usize)> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| anyhow!("--subsample expects USERSxITEMS, got {s:?}"))?;
    Ok((r.trim().parse()?, c.trim().parse()?))
}

fn parse_theta(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .with_context(|| format!("bad theta entry {v:?}"))
        })
        .collect()
}

fn ingest(a: IngestArgs) -> Result<(), Failure> {
    let subsample = a
        .subsample
        .as_deref()
        .map(parse_subsample)
        .transpose()
        .map_err(config_err)?;
    let theta = a
        .theta
        .as_deref()
        .map(parse_theta)
        .transpose()
        .map_err(config_err)?;
    if a.rank == 0 {
        return Err(config_err(anyhow!("--rank must be at least 1")));
    }

    let mut matrix = match a.dataset {
        Dataset::Movielens => data::parse_movielens(&a.path),
        Dataset::Lastfm => data::parse_lastfm(&a.path, a.min_interactions),
    }
    .map_err(runtime_err)?;
    println!("ratings: {} users × {} items", matrix.rows, matrix.cols);
    if let Some((r, c)) = subsample {
        let mut rng = Rng::seed_from_u64(a.seed);
        matrix = matrix.subsample(r, c, &mut rng).map_err(config_err)?;
        println!("subsampled to {} × {}", matrix.rows, matrix.cols);
    }
    let opts = NmfOptions {
        max_iters: a.max_iters,
        ..NmfOptions::new(a.rank, a.seed)
    };
    let factors = data::nmf(&matrix, opts).map_err(|e| match e {
        data::DataError::RankTooLarge { .. } | data::DataError::ZeroRank => config_err(e),
        other => runtime_err(other),
    })?;
    println!(
        "nmf rank {}: relative error {:.4} after {} iterations",
        a.rank,
        factors.rel_error,
        factors.objective.len() - 1
    );
    let table = data::build_features(&factors, theta.as_deref(), None).map_err(|e| match e {
        data::DataError::DimensionMismatch { .. } => config_err(e),
        other => runtime_err(other),
    })?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(runtime_err)?;
    }
    table.write_csv(&a.out).map_err(runtime_err)?;
    println!(
        "wrote {} ({} actions × {} contexts, d = {}, scale {:.6})",
        a.out.display(),
        table.actions,
        table.contexts,
        table.dim,
        table.scale
    );
    if theta.is_none() {
        log::warn!("no --theta given: features are only norm-bounded, rewards are not checked");
    }
    Ok(())
}
