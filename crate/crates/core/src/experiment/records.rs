//! Per-round log rows, per-round summaries across trials, and CSV output.

use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::agent::Mode;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot create {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionType {
    Agent,
    Conservative,
}

impl ActionType {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionType::Agent => "agent",
            ActionType::Conservative => "conservative",
        }
    }
}

/// One agent's outcome in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub trial: usize,
    /// 1-based round index.
    pub round: usize,
    pub agent: usize,
    pub mode: Mode,
    /// Played action, or `None` for a conservative play.
    pub action: Option<usize>,
    pub baseline_action: usize,
    pub action_type: ActionType,
    /// Mean reward of the played expected feature.
    pub expected_reward: f64,
    /// Observed noisy reward.
    pub realized_reward: f64,
    /// Expected reward of the baseline action.
    pub baseline_reward: f64,
    pub instant_regret: f64,
    pub cum_expected_regret: f64,
    pub cum_realized_regret: f64,
    pub violation: bool,
    pub cum_violations: u64,
    pub cum_conservative: u64,
    pub sync_epochs: u64,
    pub comm_scalars: u64,
    pub beta: f64,
    pub lambda_min: f64,
}

pub const ROUND_HEADER: [&str; 20] = [
    "trial",
    "round",
    "agent",
    "mode",
    "action",
    "baseline_action",
    "action_type",
    "expected_reward",
    "realized_reward",
    "baseline_reward",
    "instant_regret",
    "cum_expected_regret",
    "cum_realized_regret",
    "violation",
    "cum_violations",
    "cum_conservative",
    "sync_epochs",
    "comm_scalars",
    "beta",
    "lambda_min",
];

impl RoundRecord {
    pub fn fields(&self) -> Vec<String> {
        vec![
            self.trial.to_string(),
            self.round.to_string(),
            self.agent.to_string(),
            self.mode.to_string(),
            self.action.map_or("-1".into(), |a| a.to_string()),
            self.baseline_action.to_string(),
            self.action_type.as_str().into(),
            fmt_sig9(self.expected_reward),
            fmt_sig9(self.realized_reward),
            fmt_sig9(self.baseline_reward),
            fmt_sig9(self.instant_regret),
            fmt_sig9(self.cum_expected_regret),
            fmt_sig9(self.cum_realized_regret),
            u8::from(self.violation).to_string(),
            self.cum_violations.to_string(),
            self.cum_conservative.to_string(),
            self.sync_epochs.to_string(),
            self.comm_scalars.to_string(),
            fmt_sig9(self.beta),
            fmt_sig9(self.lambda_min),
        ]
    }
}

/// Formats with 9 significant digits, `%g` style: fixed notation for
/// moderate exponents, scientific otherwise, trailing zeros trimmed.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// Per-round means across trials.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub round: usize,
    /// Sum over agents of cumulative expected regret.
    pub cum_expected_regret: f64,
    pub per_agent_cum_expected_regret: f64,
    pub cum_realized_regret: f64,
    pub cum_violations: f64,
    pub cum_conservative: f64,
    /// Mean over agents of the played expected reward.
    pub expected_reward: f64,
    pub baseline_reward: f64,
    /// `(1 − α)` times the mean baseline reward.
    pub reward_floor: f64,
    pub sync_epochs: f64,
    pub comm_scalars: f64,
}

pub const SUMMARY_HEADER: [&str; 11] = [
    "round",
    "cum_expected_regret",
    "per_agent_cum_expected_regret",
    "cum_realized_regret",
    "cum_violations",
    "cum_conservative",
    "expected_reward",
    "baseline_reward",
    "reward_floor",
    "sync_epochs",
    "comm_scalars",
];

impl SummaryRow {
    pub fn fields(&self) -> Vec<String> {
        let mut v = vec![self.round.to_string()];
        v.extend(
            [
                self.cum_expected_regret,
                self.per_agent_cum_expected_regret,
                self.cum_realized_regret,
                self.cum_violations,
                self.cum_conservative,
                self.expected_reward,
                self.baseline_reward,
                self.reward_floor,
                self.sync_epochs,
                self.comm_scalars,
            ]
            .map(fmt_sig9),
        );
        v
    }
}

/// Averages trial records round by round.
///
/// Each trial's records must be ordered by round then agent, as produced by
/// the runner, and every trial must share the horizon and agent count.
pub fn summarize(trials: &[Vec<RoundRecord>], agents: usize, alpha: f64) -> Vec<SummaryRow> {
    let Some(first) = trials.first() else {
        return Vec::new();
    };
    let horizon = first.len() / agents.max(1);
    let n = trials.len() as f64;
    let m = agents as f64;
    (0..horizon)
        .map(|t| {
            let mut row = SummaryRow {
                round: t + 1,
                cum_expected_regret: 0.0,
                per_agent_cum_expected_regret: 0.0,
                cum_realized_regret: 0.0,
                cum_violations: 0.0,
                cum_conservative: 0.0,
                expected_reward: 0.0,
                baseline_reward: 0.0,
                reward_floor: 0.0,
                sync_epochs: 0.0,
                comm_scalars: 0.0,
            };
            for recs in trials {
                let slice = &recs[t * agents..(t + 1) * agents];
                for r in slice {
                    row.cum_expected_regret += r.cum_expected_regret / n;
                    row.cum_realized_regret += r.cum_realized_regret / n;
                    row.cum_violations += r.cum_violations as f64 / n;
                    row.cum_conservative += r.cum_conservative as f64 / n;
                    row.expected_reward += r.expected_reward / (n * m);
                    row.baseline_reward += r.baseline_reward / (n * m);
                }
                row.sync_epochs += slice[0].sync_epochs as f64 / n;
                row.comm_scalars += slice[0].comm_scalars as f64 / n;
            }
            row.per_agent_cum_expected_regret = row.cum_expected_regret / m;
            row.reward_floor = (1.0 - alpha) * row.baseline_reward;
            row
        })
        .collect()
}

fn open_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, OutputError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| OutputError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    csv::Writer::from_path(path).map_err(|source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes rows with an optional leading sweep-id column.
pub fn write_csv<I>(path: &Path, header: &[&str], rows: I, sweep: bool) -> Result<(), OutputError>
where
    I: IntoIterator<Item = (Option<usize>, Vec<String>)>,
{
    let wrap = |source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = open_writer(path)?;
    let mut head: Vec<&str> = Vec::with_capacity(header.len() + 1);
    if sweep {
        head.push("sweep_id");
    }
    head.extend_from_slice(header);
    w.write_record(&head).map_err(wrap)?;
    for (id, mut fields) in rows {
        if let Some(id) = id {
            fields.insert(0, id.to_string());
        }
        w.write_record(&fields).map_err(wrap)?;
    }
    w.flush().map_err(|source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

pub fn write_rounds(path: &Path, trials: &[Vec<RoundRecord>]) -> Result<(), OutputError> {
    write_csv(
        path,
        &ROUND_HEADER,
        trials.iter().flatten().map(|r| (None, r.fields())),
        false,
    )
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), OutputError> {
    write_csv(
        path,
        &SUMMARY_HEADER,
        rows.iter().map(|r| (None, r.fields())),
        false,
    )
}

/// Writes a small key/value text file.
pub fn write_text(path: &Path, text: &str) -> Result<(), OutputError> {
    let io = |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(text.as_bytes()).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_formatting() {
        assert_eq!(fmt_sig9(0.0), "0");
        assert_eq!(fmt_sig9(1.0), "1");
        assert_eq!(fmt_sig9(0.5), "0.5");
        assert_eq!(fmt_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_sig9(-2.0 / 3.0), "-0.666666667");
        assert_eq!(fmt_sig9(123456789.0), "123456789");
        assert_eq!(fmt_sig9(1234567890.0), "1.23456789e9");
        assert_eq!(fmt_sig9(4.4617e-7), "4.4617e-7");
        assert_eq!(fmt_sig9(99999999.95), "100000000");
        assert_eq!(fmt_sig9(f64::INFINITY), "inf");
    }

    fn rec(round: usize, agent: usize, cum: f64) -> RoundRecord {
        RoundRecord {
            trial: 0,
            round,
            agent,
            mode: Mode::KnownBaseline,
            action: None,
            baseline_action: 3,
            action_type: ActionType::Conservative,
            expected_reward: 0.5,
            realized_reward: 0.4,
            baseline_reward: 0.6,
            instant_regret: 0.1,
            cum_expected_regret: cum,
            cum_realized_regret: cum,
            violation: false,
            cum_violations: 0,
            cum_conservative: round as u64,
            sync_epochs: 1,
            comm_scalars: 12,
            beta: 1.0,
            lambda_min: 1.0,
        }
    }

    #[test]
    fn record_fields_match_header() {
        let r = rec(1, 0, 0.1);
        let f = r.fields();
        assert_eq!(f.len(), ROUND_HEADER.len());
        assert_eq!(f[4], "-1");
        assert_eq!(f[6], "conservative");
    }

    #[test]
    fn summary_of_one_trial_is_the_trial() {
        let trial = vec![
            rec(1, 0, 0.1),
            rec(1, 1, 0.2),
            rec(2, 0, 0.3),
            rec(2, 1, 0.5),
        ];
        let s = summarize(&[trial], 2, 0.5);
        assert_eq!(s.len(), 2);
        assert!((s[1].cum_expected_regret - 0.8).abs() < 1e-15);
        assert!((s[1].per_agent_cum_expected_regret - 0.4).abs() < 1e-15);
        assert!((s[0].expected_reward - 0.5).abs() < 1e-15);
        assert!((s[0].reward_floor - 0.3).abs() < 1e-15);
        assert_eq!(s[0].comm_scalars, 12.0);
    }

    #[test]
    fn summary_averages_trials() {
        let a = vec![rec(1, 0, 1.0)];
        let b = vec![rec(1, 0, 3.0)];
        let s = summarize(&[a, b], 1, 0.3);
        assert_eq!(s[0].cum_expected_regret, 2.0);
        assert_eq!(s[0].sync_epochs, 1.0);
    }
}
