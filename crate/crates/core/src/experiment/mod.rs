//! Trial orchestration, aggregation and CSV output.

pub mod config;
pub mod records;
pub mod runner;

use std::path::{Path, PathBuf};

use config::RunConfig;
use records::{summarize, write_csv, RoundRecord, SummaryRow, ROUND_HEADER, SUMMARY_HEADER};
use runner::{run_trials, Prepared, RunError, TrialOutput};

pub const ROUNDS_FILE: &str = "rounds.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const FEATURES_FILE: &str = "features.csv";

/// Result of a multi-trial run kept in memory.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: RunConfig,
    pub trials: Vec<TrialOutput>,
    pub summary: Vec<SummaryRow>,
}

impl Experiment {
    pub fn run(cfg: &RunConfig) -> Result<Self, RunError> {
        let trials = run_trials(cfg)?;
        let recs: Vec<Vec<RoundRecord>> = trials.iter().map(|t| t.records.clone()).collect();
        let summary = summarize(&recs, cfg.tasks.agents, cfg.constraint.alpha);
        Ok(Self {
            config: cfg.clone(),
            trials,
            summary,
        })
    }

    pub fn final_summary(&self) -> &SummaryRow {
        self.summary.last().expect("horizon is at least 1")
    }

    pub fn total_violations(&self) -> u64 {
        self.trials
            .iter()
            .flat_map(|t| t.records.iter())
            .map(|r| u64::from(r.violation))
            .sum()
    }
}

/// Files written by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct Written {
    pub rounds: PathBuf,
    pub summary: PathBuf,
    pub features: Option<PathBuf>,
}

/// Runs all trials and writes `rounds.csv` and `summary.csv` into `out_dir`.
pub fn run_experiment(cfg: &RunConfig, out_dir: &Path) -> Result<(Experiment, Written), RunError> {
    let exp = Experiment::run(cfg)?;
    let rounds = out_dir.join(ROUNDS_FILE);
    let summary = out_dir.join(SUMMARY_FILE);
    let trial_records = exp.trials.iter().flat_map(|t| t.records.iter());
    write_csv(
        &rounds,
        &ROUND_HEADER,
        trial_records.map(|r| (None, r.fields())),
        false,
    )?;
    write_csv(
        &summary,
        &SUMMARY_HEADER,
        exp.summary.iter().map(|r| (None, r.fields())),
        false,
    )?;
    let features = if cfg.run.dump_features {
        let path = out_dir.join(FEATURES_FILE);
        Prepared::new(cfg)?
            .environment(0)?
            .write_features_csv(&path)?;
        Some(path)
    } else {
        None
    };
    Ok((
        exp,
        Written {
            rounds,
            summary,
            features,
        },
    ))
}

/// Runs matched-seed configurations and writes combined `rounds.csv` and
/// `summary.csv` with a leading `sweep_id` column (the config's position).
///
/// Every config takes the first config's master seed; horizons and trial
/// counts must agree.
pub fn compare_modes(configs: &[RunConfig], out_dir: &Path) -> Result<Vec<Experiment>, RunError> {
    let Some(first) = configs.first() else {
        return Ok(Vec::new());
    };
    for c in &configs[1..] {
        if c.run.horizon != first.run.horizon {
            return Err(RunError::SweepMismatch(format!(
                "horizon ({} vs {})",
                first.run.horizon, c.run.horizon
            )));
        }
        if c.run.trials != first.run.trials {
            return Err(RunError::SweepMismatch(format!(
                "trials ({} vs {})",
                first.run.trials, c.run.trials
            )));
        }
    }
    let exps = configs
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.run.seed = first.run.seed;
            Experiment::run(&c)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let rounds = exps.iter().enumerate().flat_map(|(id, e)| {
        e.trials
            .iter()
            .flat_map(|t| t.records.iter())
            .map(move |r| (Some(id), r.fields()))
    });
    write_csv(&out_dir.join(ROUNDS_FILE), &ROUND_HEADER, rounds, true)?;
    let summary = exps
        .iter()
        .enumerate()
        .flat_map(|(id, e)| e.summary.iter().map(move |r| (Some(id), r.fields())));
    write_csv(&out_dir.join(SUMMARY_FILE), &SUMMARY_HEADER, summary, true)?;
    Ok(exps)
}
