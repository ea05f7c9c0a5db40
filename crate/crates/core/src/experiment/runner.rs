//! The round loop: distribution, selection, reward, update, sync.

use std::path::PathBuf;

use rayon::prelude::*;
use thiserror::Error;

use crate::agent::{
    default_rho, sync_threshold, AgentError, AgentState, Decision, DecisionKind, Hyperparams,
};
use crate::coordinator::{CommLedger, Server, SyncError};
use crate::environment::{
    best_action, generate_schedule, kth_best, BaselineInfo, EnvError, Environment, RewardBounds,
    RoundContext, SynthParams,
};
use crate::experiment::config::{ConfigError, EnvKind, RunConfig};
use crate::numerics::combine;
use crate::seeds::{stream_rng, Purpose};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("agent {agent}: {source}")]
    Agent {
        agent: usize,
        #[source]
        source: AgentError,
    },
    #[error(transparent)]
    Sync(#[from] SyncError),
    #[error(transparent)]
    Output(#[from] super::records::OutputError),
    #[error("sweep configurations disagree on {0}")]
    SweepMismatch(String),
}

use super::records::{ActionType, RoundRecord};

/// Everything about one agent-round that a test harness may inspect before
/// the agent's statistics are updated.
pub struct RoundView<'a> {
    pub trial: usize,
    pub round: usize,
    pub agent: usize,
    pub env: &'a Environment,
    pub state: &'a AgentState,
    pub psis: &'a [Vec<f64>],
    pub baseline: BaselineInfo,
    pub optimal: (usize, f64),
    pub decision: &'a Decision,
    /// Feature that generated the reward under the realized context.
    pub realized_feature: &'a [f64],
}

/// Output of one trial.
#[derive(Debug, Clone)]
pub struct TrialOutput {
    pub trial: usize,
    /// Ordered by round, then agent.
    pub records: Vec<RoundRecord>,
    pub ledger: CommLedger,
    pub bounds: Vec<RewardBounds>,
    pub hyperparams: Vec<Hyperparams>,
}

/// Loaded inputs shared across trials.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: RunConfig,
    fixed_env: Option<Environment>,
}

impl Prepared {
    pub fn new(config: &RunConfig) -> Result<Self, RunError> {
        config.validate()?;
        let fixed_env = match config.env.kind {
            EnvKind::Synthetic => None,
            EnvKind::Features => {
                let path: PathBuf = config
                    .env
                    .features_path
                    .clone()
                    .expect("validated: features_path present");
                Some(Environment::from_features_csv(
                    &path,
                    task_spec(config)?,
                    config.env.theta_star.clone(),
                    config.env.noise_sigma,
                    config.constraint.baseline_rank,
                )?)
            }
        };
        Ok(Self {
            config: config.clone(),
            fixed_env,
        })
    }

    /// The environment used in `trial`: regenerated per trial for synthetic
    /// runs, fixed for loaded feature tables.
    pub fn environment(&self, trial: usize) -> Result<Environment, RunError> {
        if let Some(env) = &self.fixed_env {
            return Ok(env.clone());
        }
        let cfg = &self.config;
        let params = SynthParams {
            num_actions: cfg
                .env
                .num_actions
                .expect("validated: synthetic has num_actions"),
            num_contexts: cfg.env.num_contexts,
            theta_star: cfg.env.theta_star.clone(),
            noise_sigma: cfg.env.noise_sigma,
            baseline_rank: cfg.constraint.baseline_rank,
            context_spread: cfg.env.context_spread,
        };
        let seed = cfg.run.seed;
        Ok(Environment::synth_generate(
            &params,
            task_spec(cfg)?,
            |s| stream_rng(seed, trial, Purpose::Env, s),
        )?)
    }

    pub fn schedule(&self, env: &Environment, trial: usize) -> Vec<RoundContext> {
        let cfg = &self.config;
        let mut rng = stream_rng(cfg.run.seed, trial, Purpose::Contexts, 0);
        generate_schedule(
            cfg.context_law(),
            env.num_contexts(),
            cfg.run.horizon,
            env.num_agents(),
            cfg.env.per_agent_contexts,
            &mut rng,
        )
    }
}

fn task_spec(cfg: &RunConfig) -> Result<crate::tasks::TaskSpec, RunError> {
    cfg.task_spec().map_err(|e| RunError::Env(e.into()))
}

/// Runs one trial of a prepared config.
pub fn run_trial(prepared: &Prepared, trial: usize) -> Result<TrialOutput, RunError> {
    let env = prepared.environment(trial)?;
    let schedule = prepared.schedule(&env, trial);
    run_trial_on(&prepared.config, &env, &schedule, trial, &mut |_| {})
}

/// Runs one trial on an explicit environment and schedule, calling
/// `observer` for every agent-round.
pub fn run_trial_on(
    cfg: &RunConfig,
    env: &Environment,
    schedule: &[RoundContext],
    trial: usize,
    observer: &mut dyn FnMut(&RoundView),
) -> Result<TrialOutput, RunError> {
    let m = env.num_agents();
    let d = env.dim();
    let mode = cfg.algo.mode;
    let alpha = cfg.constraint.alpha;
    let theta = env.theta_star();
    let seed = cfg.run.seed;

    let bounds: Vec<RewardBounds> = (0..m).map(|a| env.reward_bounds(a, schedule)).collect();
    let mut states = Vec::with_capacity(m);
    let mut hyperparams = Vec::with_capacity(m);
    for (a, b) in bounds.iter().enumerate() {
        let hp = Hyperparams::new(
            mode,
            cfg.algo.lambda,
            cfg.algo.delta,
            alpha,
            env.noise_sigma(),
            cfg.constraint.rho,
            b.r_l,
            b.r_h,
        )
        .map_err(|source| RunError::Agent { agent: a, source })?;
        hyperparams.push(hp);
        states.push(AgentState::new(a, d, hp));
    }
    let mut noise_rngs: Vec<_> = (0..m)
        .map(|a| stream_rng(seed, trial, Purpose::Noise, env.stream(a)))
        .collect();
    let mut zeta_rngs: Vec<_> = (0..m)
        .map(|a| stream_rng(seed, trial, Purpose::Zeta, env.stream(a)))
        .collect();

    let threshold = cfg
        .algo
        .sync_threshold
        .unwrap_or_else(|| sync_threshold(schedule.len(), m, d));
    let mut server = Server::new(m, d);

    let mut cum_regret = vec![0.0; m];
    let mut cum_realized = vec![0.0; m];
    let mut cum_viol = vec![0u64; m];
    let mut cum_cons = vec![0u64; m];
    let mut records = Vec::with_capacity(schedule.len() * m);

    for (t0, rc) in schedule.iter().enumerate() {
        let t = t0 + 1;
        let round_start = records.len();
        for a in 0..m {
            let psis = env.expected_features(a, &rc.mu);
            let baseline = kth_best(&psis, theta, env.baseline_rank());
            let optimal = best_action(&psis, theta);
            let decision = states[a]
                .select(&psis, baseline, &mut zeta_rngs[a])
                .map_err(|source| RunError::Agent { agent: a, source })?;
            let c = rc.realized[a];
            let realized_feature = match &decision.kind {
                DecisionKind::AgentAction { action, .. } => env.feature(a, *action, c).to_vec(),
                DecisionKind::Conservative { zeta, .. } => {
                    let rho = states[a].hp.rho;
                    combine(1.0 - rho, env.feature(a, baseline.action, c), rho, zeta)
                }
            };
            let y = env.realize_reward(&realized_feature, &mut noise_rngs[a]);
            let expected_reward = env.mean_reward(decision.psi());
            let realized_baseline = env.mean_reward(env.feature(a, baseline.action, c));
            let violation = env.check_violation(&realized_feature, realized_baseline, alpha);
            let instant = optimal.1 - expected_reward;
            let realized_regret =
                env.mean_reward(env.feature(a, optimal.0, c)) - env.mean_reward(&realized_feature);

            observer(&RoundView {
                trial,
                round: t,
                agent: a,
                env,
                state: &states[a],
                psis: &psis,
                baseline,
                optimal,
                decision: &decision,
                realized_feature: &realized_feature,
            });

            states[a]
                .local_update(decision.psi(), y)
                .map_err(|source| RunError::Agent { agent: a, source })?;

            cum_regret[a] += instant;
            cum_realized[a] += realized_regret;
            cum_viol[a] += u64::from(violation);
            let conservative = decision.is_conservative();
            cum_cons[a] += u64::from(conservative);
            records.push(RoundRecord {
                trial,
                round: t,
                agent: a,
                mode,
                action: decision.action(),
                baseline_action: baseline.action,
                action_type: if conservative {
                    ActionType::Conservative
                } else {
                    ActionType::Agent
                },
                expected_reward,
                realized_reward: y,
                baseline_reward: baseline.reward,
                instant_regret: instant,
                cum_expected_regret: cum_regret[a],
                cum_realized_regret: cum_realized[a],
                violation,
                cum_violations: cum_viol[a],
                cum_conservative: cum_cons[a],
                sync_epochs: 0,
                comm_scalars: 0,
                beta: decision.diagnostics.beta,
                lambda_min: decision.diagnostics.lambda_min,
            });
        }

        if mode.syncs() {
            let mut due = false;
            for s in &states {
                if s.sync_due(t, threshold).map_err(|source| RunError::Agent {
                    agent: s.id,
                    source,
                })? {
                    due = true;
                    break;
                }
            }
            if due {
                server.sync_all(&mut states, t)?;
            }
        }
        let ledger = server.ledger();
        for r in &mut records[round_start..] {
            r.sync_epochs = ledger.epochs;
            r.comm_scalars = ledger.total_scalars();
        }
    }

    Ok(TrialOutput {
        trial,
        records,
        ledger: server.ledger(),
        bounds,
        hyperparams,
    })
}

/// Runs every trial in parallel; results come back in trial order.
pub fn run_trials(cfg: &RunConfig) -> Result<Vec<TrialOutput>, RunError> {
    let prepared = Prepared::new(cfg)?;
    (0..cfg.run.trials)
        .into_par_iter()
        .map(|trial| run_trial(&prepared, trial))
        .collect()
}

/// `ρ` an agent would use in `cfg` given its reward bounds.
pub fn effective_rho(cfg: &RunConfig, bounds: &RewardBounds) -> f64 {
    cfg.constraint
        .rho
        .unwrap_or_else(|| default_rho(cfg.algo.mode, cfg.constraint.alpha, bounds.r_l, bounds.r_h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::Mode;
    use crate::experiment::config::tests::FIG1;

    fn cfg() -> RunConfig {
        RunConfig::from_toml_str(FIG1).unwrap()
    }

    #[test]
    fn records_are_consistent() {
        let c = cfg();
        let out = run_trial(&Prepared::new(&c).unwrap(), 0).unwrap();
        assert_eq!(out.records.len(), c.run.horizon);
        let mut prev = 0.0;
        let mut agent_actions = 0;
        for r in &out.records {
            assert!(r.cum_expected_regret >= prev - 1e-12);
            prev = r.cum_expected_regret;
            agent_actions += u64::from(r.action.is_some());
            assert_eq!(r.cum_conservative + agent_actions, r.round as u64);
            assert!(r.instant_regret >= -1e-12);
        }
    }

    #[test]
    fn regret_identity_holds() {
        let c = cfg();
        let out = run_trial(&Prepared::new(&c).unwrap(), 1).unwrap();
        let sum: f64 = out.records.iter().map(|r| r.instant_regret).sum();
        let last = out.records.last().unwrap().cum_expected_regret;
        assert!((sum - last).abs() < 1e-9);
    }

    #[test]
    fn single_action_unconstrained_has_zero_regret() {
        let text = FIG1
            .replace("num_actions = 40", "num_actions = 1")
            .replace("baseline_rank = 10", "baseline_rank = 1")
            .replace("noise_sigma = 0.05", "noise_sigma = 0.0")
            .replace("\"disc-ucb\"", "\"dislinucb\"");
        let c = RunConfig::from_toml_str(&text).unwrap();
        let out = run_trial(&Prepared::new(&c).unwrap(), 0).unwrap();
        assert!(out.records.iter().all(|r| r.cum_expected_regret == 0.0));
    }

    #[test]
    fn deterministic_across_runs() {
        let c = cfg();
        let a = run_trials(&c).unwrap();
        let b = run_trials(&c).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.records, y.records);
        }
        assert_ne!(a[0].records, a[1].records);
    }

    #[test]
    fn agent_actions_come_from_pruned_set() {
        // One dimension makes the Gram matrix grow fast enough to open the gate.
        let text = FIG1
            .replace("dim = 2", "dim = 1")
            .replace("[0.9, 0.4]", "[0.9]")
            .replace("alpha = 0.3", "alpha = 1.0")
            .replace("horizon = 200", "horizon = 1500");
        let c = RunConfig::from_toml_str(&text).unwrap();
        let p = Prepared::new(&c).unwrap();
        let env = p.environment(0).unwrap();
        let sched = p.schedule(&env, 0);
        let mut agent_rounds = 0;
        run_trial_on(&c, &env, &sched, 0, &mut |v| {
            if let Some(x) = v.decision.action() {
                agent_rounds += 1;
                assert!(v.decision.diagnostics.gate_passed);
                assert!(v.decision.diagnostics.pruned.contains(&x));
            }
        })
        .unwrap();
        assert!(agent_rounds > 0);
    }

    #[test]
    fn independent_mode_never_syncs() {
        let text = FIG1
            .replace("agents = 1", "agents = 3")
            .replace("\"disc-ucb\"", "\"independent\"");
        let c = RunConfig::from_toml_str(&text).unwrap();
        let out = run_trial(&Prepared::new(&c).unwrap(), 0).unwrap();
        assert_eq!(out.ledger.epochs, 0);
        assert!(out.records.iter().all(|r| r.comm_scalars == 0));
    }

    #[test]
    fn collaborative_mode_syncs_and_counts() {
        let text = FIG1
            .replace("agents = 1", "agents = 4")
            .replace("\"disc-ucb\"", "\"dislinucb\"");
        let c = RunConfig::from_toml_str(&text).unwrap();
        let out = run_trial(&Prepared::new(&c).unwrap(), 0).unwrap();
        let l = out.ledger;
        assert!(l.epochs > 0);
        assert_eq!(l.scalars_up, l.epochs * 4 * 6);
        assert_eq!(l.total_scalars(), out.records.last().unwrap().comm_scalars);
        assert_eq!(c.algo.mode, Mode::Unconstrained);
    }
}
