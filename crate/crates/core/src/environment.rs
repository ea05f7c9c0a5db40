//! Ground truth for a simulation: contexts, per-agent feature tables, the
//! shared parameter, reward noise and the baseline policy.

use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};
use thiserror::Error;

use crate::numerics::{dot, norm};
use crate::seeds::Rng;
use crate::tasks::{TaskError, TaskSpec};

const PROB_TOL: f64 = 1e-9;
const TABLE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid context distribution: {0}")]
    InvalidDistribution(String),
    #[error("shared parameter restricted to agent {agent} is zero; features cannot be normalized")]
    ZeroParameter { agent: usize },
    #[error("environment invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
}

/// Probability law over a subset of context ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextDistribution {
    support: Vec<usize>,
    probs: Vec<f64>,
}

impl ContextDistribution {
    pub fn new(support: Vec<usize>, probs: Vec<f64>) -> Result<Self, EnvError> {
        if support.is_empty() || support.len() != probs.len() {
            return Err(EnvError::InvalidDistribution(format!(
                "support has {} entries, probs has {}",
                support.len(),
                probs.len()
            )));
        }
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(EnvError::InvalidDistribution(
                "probabilities must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(EnvError::InvalidDistribution(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(Self { support, probs })
    }

    pub fn point_mass(context: usize) -> Self {
        Self {
            support: vec![context],
            probs: vec![1.0],
        }
    }

    pub fn uniform(num_contexts: usize) -> Self {
        let p = 1.0 / num_contexts as f64;
        Self {
            support: (0..num_contexts).collect(),
            probs: vec![p; num_contexts],
        }
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.support.iter().copied().zip(self.probs.iter().copied())
    }

    /// Draws a context id by inverse-CDF sampling.
    pub fn sample(&self, rng: &mut Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (c, p) in self.iter() {
            acc += p;
            if u < acc {
                return c;
            }
        }
        // Round-off can leave `acc` slightly below 1.
        *self
            .support
            .iter()
            .zip(&self.probs)
            .rev()
            .find(|(_, p)| **p > 0.0)
            .map(|(c, _)| c)
            .unwrap_or(&self.support[0])
    }
}

/// How the per-round context distribution is drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContextLaw {
    /// Random support of `size` distinct contexts with flat-Dirichlet weights.
    RandomSupport { size: usize },
    /// Uniform over every context, every round.
    FixedUniform,
}

impl ContextLaw {
    pub fn draw(&self, num_contexts: usize, rng: &mut Rng) -> ContextDistribution {
        match *self {
            ContextLaw::FixedUniform => ContextDistribution::uniform(num_contexts),
            ContextLaw::RandomSupport { size } => {
                let size = size.clamp(1, num_contexts);
                let mut support = rand::seq::index::sample(rng, num_contexts, size).into_vec();
                support.sort_unstable();
                let raw: Vec<f64> = (0..size)
                    .map(|_| {
                        let e: f64 = Exp1.sample(rng);
                        e.max(f64::MIN_POSITIVE)
                    })
                    .collect();
                let total: f64 = raw.iter().sum();
                let probs = raw.iter().map(|e| e / total).collect();
                ContextDistribution { support, probs }
            }
        }
    }
}

/// Context information for one round: the announced distribution and the
/// hidden realized context of each agent.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundContext {
    pub mu: ContextDistribution,
    pub realized: Vec<usize>,
}

/// Pre-draws the distribution and hidden context for every round.
///
/// With `per_agent` false one context is drawn per round and shared by all
/// agents; otherwise each agent draws its own from the same distribution.
pub fn generate_schedule(
    law: ContextLaw,
    num_contexts: usize,
    horizon: usize,
    agents: usize,
    per_agent: bool,
    rng: &mut Rng,
) -> Vec<RoundContext> {
    (0..horizon)
        .map(|_| {
            let mu = law.draw(num_contexts, rng);
            let realized = if per_agent {
                (0..agents).map(|_| mu.sample(rng)).collect()
            } else {
                vec![mu.sample(rng); agents]
            };
            RoundContext { mu, realized }
        })
        .collect()
}

/// Baseline action for one agent and round with its expected reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineInfo {
    pub action: usize,
    pub reward: f64,
}

/// Scanned bounds on baseline rewards and on the gap to the optimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBounds {
    pub r_l: f64,
    pub r_h: f64,
    pub kappa_l: f64,
    pub kappa_h: f64,
}

/// Action ids sorted by reward descending, ties by lowest id.
fn ranked(psis: &[Vec<f64>], theta: &[f64]) -> Vec<(usize, f64)> {
    let mut r: Vec<(usize, f64)> = psis.iter().map(|p| dot(p, theta)).enumerate().collect();
    r.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    r
}

/// Best action by `psiᵀθ`, ties to the lowest id.
pub fn best_action(psis: &[Vec<f64>], theta: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, p) in psis.iter().enumerate() {
        let r = dot(p, theta);
        if r > best.1 {
            best = (i, r);
        }
    }
    best
}

/// The `rank`-th best action (1 = best).
pub fn kth_best(psis: &[Vec<f64>], theta: &[f64], rank: usize) -> BaselineInfo {
    let r = ranked(psis, theta);
    let (action, reward) = r[rank.clamp(1, r.len()) - 1];
    BaselineInfo { action, reward }
}

/// Feature table of one agent, lifted to the shared dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentTable {
    /// Seed stream id; kept when an agent is extracted into its own
    /// environment so its noise and exploration draws are unchanged.
    pub stream: usize,
    /// Row-major `[action][context][coord]`.
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub num_actions: usize,
    pub num_contexts: usize,
    pub theta_star: Vec<f64>,
    pub noise_sigma: f64,
    pub baseline_rank: usize,
    /// Standard deviation of the per-context perturbation around each
    /// action's base feature.
    pub context_spread: f64,
}

#[derive(Debug, Clone)]
pub struct Environment {
    tasks: TaskSpec,
    num_actions: usize,
    num_contexts: usize,
    theta_star: Vec<f64>,
    noise_sigma: f64,
    baseline_rank: usize,
    tables: Vec<AgentTable>,
}

impl Environment {
    /// Assembles an environment and checks every table invariant.
    pub fn new(
        tasks: TaskSpec,
        num_actions: usize,
        num_contexts: usize,
        theta_star: Vec<f64>,
        noise_sigma: f64,
        baseline_rank: usize,
        tables: Vec<AgentTable>,
    ) -> Result<Self, EnvError> {
        let env = Self {
            tasks,
            num_actions,
            num_contexts,
            theta_star,
            noise_sigma,
            baseline_rank,
            tables,
        };
        env.check()?;
        Ok(env)
    }

    fn check(&self) -> Result<(), EnvError> {
        let d = self.dim();
        let bad = |m: String| Err(EnvError::Invariant(m));
        if self.num_actions == 0 || self.num_contexts == 0 {
            return bad("need at least one action and one context".into());
        }
        if self.theta_star.len() != d {
            return bad(format!(
                "theta_star has {} coordinates, expected {d}",
                self.theta_star.len()
            ));
        }
        if norm(&self.theta_star) > 1.0 + TABLE_TOL {
            return bad(format!(
                "‖theta_star‖ = {} exceeds 1",
                norm(&self.theta_star)
            ));
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be nonnegative".into());
        }
        if self.baseline_rank == 0 || self.baseline_rank > self.num_actions {
            return bad(format!(
                "baseline_rank {} outside 1..={}",
                self.baseline_rank, self.num_actions
            ));
        }
        if self.tables.len() != self.tasks.num_agents() {
            return bad(format!(
                "{} feature tables for {} agents",
                self.tables.len(),
                self.tasks.num_agents()
            ));
        }
        for (a, table) in self.tables.iter().enumerate() {
            if table.phi.len() != self.num_actions * self.num_contexts * d {
                return bad(format!("agent {a}: feature table has wrong size"));
            }
            let owned = self.tasks.index_set(a);
            for x in 0..self.num_actions {
                for c in 0..self.num_contexts {
                    let f = self.feature(a, x, c);
                    if f.iter().any(|v| !v.is_finite()) {
                        return bad(format!(
                            "agent {a} action {x} context {c}: non-finite feature"
                        ));
                    }
                    if norm(f) > 1.0 + TABLE_TOL {
                        return bad(format!("agent {a} action {x} context {c}: ‖φ‖ > 1"));
                    }
                    let r = dot(f, &self.theta_star);
                    if !(-TABLE_TOL..=1.0 + TABLE_TOL).contains(&r) {
                        return bad(format!(
                            "agent {a} action {x} context {c}: reward {r} outside [0, 1]"
                        ));
                    }
                    if f.iter()
                        .enumerate()
                        .any(|(k, v)| *v != 0.0 && owned.binary_search(&k).is_err())
                    {
                        return bad(format!(
                            "agent {a} action {x} context {c}: nonzero outside index set"
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.tasks.dim()
    }

    pub fn num_agents(&self) -> usize {
        self.tasks.num_agents()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_contexts(&self) -> usize {
        self.num_contexts
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn baseline_rank(&self) -> usize {
        self.baseline_rank
    }

    pub fn tasks(&self) -> &TaskSpec {
        &self.tasks
    }

    pub fn stream(&self, agent: usize) -> usize {
        self.tables[agent].stream
    }

    pub fn feature(&self, agent: usize, action: usize, context: usize) -> &[f64] {
        let d = self.dim();
        let start = (action * self.num_contexts + context) * d;
        &self.tables[agent].phi[start..start + d]
    }

    /// `ψ(x, μ) = Σ_c μ(c) φ(x, c)` for every action.
    pub fn expected_features(&self, agent: usize, mu: &ContextDistribution) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..self.num_actions)
            .map(|x| {
                let mut psi = vec![0.0; d];
                for (c, p) in mu.iter() {
                    for (acc, v) in psi.iter_mut().zip(self.feature(agent, x, c)) {
                        *acc += p * v;
                    }
                }
                psi
            })
            .collect()
    }

    pub fn mean_reward(&self, feature: &[f64]) -> f64 {
        dot(feature, &self.theta_star)
    }

    /// `featureᵀθ* + η` with Gaussian noise of standard deviation σ.
    pub fn realize_reward(&self, feature: &[f64], rng: &mut Rng) -> f64 {
        let eta: f64 = StandardNormal.sample(rng);
        self.mean_reward(feature) + self.noise_sigma * eta
    }

    pub fn baseline_for_round(&self, agent: usize, mu: &ContextDistribution) -> BaselineInfo {
        kth_best(
            &self.expected_features(agent, mu),
            &self.theta_star,
            self.baseline_rank,
        )
    }

    pub fn optimal_action(&self, agent: usize, mu: &ContextDistribution) -> (usize, f64) {
        best_action(&self.expected_features(agent, mu), &self.theta_star)
    }

    /// True when the played feature's mean reward falls below `(1 − α)·r_b`.
    pub fn check_violation(&self, feature: &[f64], r_b: f64, alpha: f64) -> bool {
        self.mean_reward(feature) < (1.0 - alpha) * r_b - 1e-12
    }

    /// Scans a schedule for one agent's baseline-reward bounds.
    ///
    /// The range covers both the expected baseline reward of each round and
    /// the baseline's reward under every context in that round's support, so
    /// conservative plays stay safe for whichever context is realized.
    pub fn reward_bounds(&self, agent: usize, schedule: &[RoundContext]) -> RewardBounds {
        let mut b = RewardBounds {
            r_l: f64::INFINITY,
            r_h: f64::NEG_INFINITY,
            kappa_l: f64::INFINITY,
            kappa_h: f64::NEG_INFINITY,
        };
        for round in schedule {
            let psis = self.expected_features(agent, &round.mu);
            let base = kth_best(&psis, &self.theta_star, self.baseline_rank);
            let (_, best) = best_action(&psis, &self.theta_star);
            let kappa = best - base.reward;
            b.kappa_l = b.kappa_l.min(kappa);
            b.kappa_h = b.kappa_h.max(kappa);
            b.r_l = b.r_l.min(base.reward);
            b.r_h = b.r_h.max(base.reward);
            for &c in round.mu.support() {
                let r = self.mean_reward(self.feature(agent, base.action, c));
                b.r_l = b.r_l.min(r);
                b.r_h = b.r_h.max(r);
            }
        }
        b
    }

    /// A one-agent environment holding `agent`'s table and stream id.
    pub fn single_agent(&self, agent: usize) -> Result<Self, EnvError> {
        // The lone agent owns every coordinate; its lifted table already
        // holds zeros outside its original index set.
        Self::new(
            TaskSpec::shared(self.dim(), 1),
            self.num_actions,
            self.num_contexts,
            self.theta_star.clone(),
            self.noise_sigma,
            self.baseline_rank,
            vec![self.tables[agent].clone()],
        )
    }

    /// Draws a synthetic environment. `agent_rng(stream)` supplies the
    /// generator for each agent's table.
    ///
    /// Each action gets a unit-norm Gaussian base direction with positive
    /// reward; each context perturbs it by `context_spread`-scaled Gaussian
    /// noise (redrawn while the reward is negative). The table is then
    /// divided by `max(1, max ‖φ‖, max φᵀθ)` so all invariants hold.
    pub fn synth_generate(
        params: &SynthParams,
        tasks: TaskSpec,
        mut agent_rng: impl FnMut(usize) -> Rng,
    ) -> Result<Self, EnvError> {
        let d = tasks.dim();
        if params.theta_star.len() != d {
            return Err(EnvError::Invariant(format!(
                "theta_star has {} coordinates, expected {d}",
                params.theta_star.len()
            )));
        }
        let mut tables = Vec::with_capacity(tasks.num_agents());
        for a in 0..tasks.num_agents() {
            let theta_i = tasks.restrict_parameter(&params.theta_star, a)?;
            if norm(&theta_i) == 0.0 {
                return Err(EnvError::ZeroParameter { agent: a + 1 });
            }
            let mut rng = agent_rng(a);
            let local = synth_local_table(params, &theta_i, &mut rng);
            let di = theta_i.len();
            let mut phi = Vec::with_capacity(params.num_actions * params.num_contexts * d);
            for f in local.chunks(di) {
                phi.extend(tasks.lift_feature(f, a)?);
            }
            tables.push(AgentTable { stream: a, phi });
        }
        Self::new(
            tasks,
            params.num_actions,
            params.num_contexts,
            params.theta_star.clone(),
            params.noise_sigma,
            params.baseline_rank,
            tables,
        )
    }

    /// Writes every feature as `agent,action,context,x1..xd`.
    pub fn write_features_csv(&self, path: &Path) -> Result<(), EnvError> {
        let wrap = |source| EnvError::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(wrap)?;
        let mut header = vec!["agent".to_string(), "action".into(), "context".into()];
        header.extend((1..=self.dim()).map(|k| format!("x{k}")));
        w.write_record(&header).map_err(wrap)?;
        for a in 0..self.num_agents() {
            for x in 0..self.num_actions {
                for c in 0..self.num_contexts {
                    let mut row = vec![a.to_string(), x.to_string(), c.to_string()];
                    row.extend(self.feature(a, x, c).iter().map(|v| v.to_string()));
                    w.write_record(&row).map_err(wrap)?;
                }
            }
        }
        w.flush().map_err(|e| wrap(e.into()))?;
        Ok(())
    }

    /// Loads a feature table written by [`Environment::write_features_csv`]
    /// or by dataset ingestion.
    ///
    /// A file holding only agent 0 is shared: every agent sees it restricted
    /// to its index set. Otherwise the file must cover every agent.
    pub fn from_features_csv(
        path: &Path,
        tasks: TaskSpec,
        theta_star: Vec<f64>,
        noise_sigma: f64,
        baseline_rank: usize,
    ) -> Result<Self, EnvError> {
        let rows = read_feature_rows(path, tasks.dim())?;
        let num_actions = rows.iter().map(|r| r.action + 1).max().unwrap_or(0);
        let num_contexts = rows.iter().map(|r| r.context + 1).max().unwrap_or(0);
        let file_agents = rows.iter().map(|r| r.agent + 1).max().unwrap_or(0);
        let m = tasks.num_agents();
        if rows.is_empty() {
            return Err(EnvError::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: "no feature rows".into(),
            });
        }
        if file_agents != 1 && file_agents != m {
            return Err(EnvError::Invariant(format!(
                "feature file covers {file_agents} agents, config has {m}"
            )));
        }
        let d = tasks.dim();
        let mut raw = vec![vec![f64::NAN; num_actions * num_contexts * d]; file_agents];
        let mut seen = vec![vec![false; num_actions * num_contexts]; file_agents];
        for r in &rows {
            let cell = r.action * num_contexts + r.context;
            if seen[r.agent][cell] {
                return Err(EnvError::Parse {
                    path: path.to_path_buf(),
                    line: r.line,
                    message: format!(
                        "duplicate entry for agent {} action {} context {}",
                        r.agent, r.action, r.context
                    ),
                });
            }
            seen[r.agent][cell] = true;
            raw[r.agent][cell * d..(cell + 1) * d].copy_from_slice(&r.coords);
        }
        if seen.iter().flatten().any(|s| !s) {
            return Err(EnvError::Invariant(
                "feature file is missing some (agent, action, context) entries".into(),
            ));
        }
        let mut tables = Vec::with_capacity(m);
        for a in 0..m {
            let src = &raw[if file_agents == 1 { 0 } else { a }];
            let mut phi = Vec::with_capacity(src.len());
            for f in src.chunks(d) {
                let local = tasks.restrict_parameter(f, a)?;
                phi.extend(tasks.lift_feature(&local, a)?);
            }
            tables.push(AgentTable { stream: a, phi });
        }
        Self::new(
            tasks,
            num_actions,
            num_contexts,
            theta_star,
            noise_sigma,
            baseline_rank,
            tables,
        )
    }
}

fn synth_local_table(params: &SynthParams, theta: &[f64], rng: &mut Rng) -> Vec<f64> {
    let di = theta.len();
    let gauss =
        |rng: &mut Rng| -> Vec<f64> { (0..di).map(|_| StandardNormal.sample(rng)).collect() };
    let mut table = Vec::with_capacity(params.num_actions * params.num_contexts * di);
    for _ in 0..params.num_actions {
        let base = loop {
            let v = gauss(rng);
            let n = norm(&v);
            if n > 1e-12 && dot(&v, theta) > 0.0 {
                break v.iter().map(|x| x / n).collect::<Vec<_>>();
            }
        };
        for _ in 0..params.num_contexts {
            let f = loop {
                let noise = gauss(rng);
                let f: Vec<f64> = base
                    .iter()
                    .zip(&noise)
                    .map(|(b, z)| b + params.context_spread * z)
                    .collect();
                if dot(&f, theta) >= 0.0 {
                    break f;
                }
            };
            table.extend(f);
        }
    }
    let scale = table
        .chunks(di)
        .map(|f| norm(f).max(dot(f, theta)))
        .fold(1.0f64, f64::max);
    table.iter_mut().for_each(|v| *v /= scale);
    table
}

struct FeatureRow {
    line: u64,
    agent: usize,
    action: usize,
    context: usize,
    coords: Vec<f64>,
}

fn read_feature_rows(path: &Path, dim: usize) -> Result<Vec<FeatureRow>, EnvError> {
    let wrap = |source| EnvError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(wrap)?;
    let header = rdr.headers().map_err(wrap)?.clone();
    let expected = 3 + dim;
    if header.len() != expected || &header[0] != "agent" {
        return Err(EnvError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!(
                "expected header agent,action,context,x1..x{dim} ({expected} columns), found {} columns",
                header.len()
            ),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(wrap)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let perr = |message: String| EnvError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let id = |k: usize| -> Result<usize, EnvError> {
            rec[k]
                .trim()
                .parse()
                .map_err(|_| perr(format!("bad id {:?} in column {}", &rec[k], &header[k])))
        };
        let (agent, action, context) = (id(0)?, id(1)?, id(2)?);
        let coords = (3..expected)
            .map(|k| {
                rec[k]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| perr(format!("bad coordinate {:?}", &rec[k])))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(FeatureRow {
            line,
            agent,
            action,
            context,
            coords,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::{stream_rng, Purpose};
    use rand::SeedableRng;

    fn rng(seed: u64) -> Rng {
        Rng::seed_from_u64(seed)
    }

    /// Two contexts, two actions, d = 2, one agent.
    fn tiny_env() -> Environment {
        let phi = vec![
            0.4, 0.0, // x0 c0
            0.0, 0.8, // x0 c1
            1.0, 0.0, // x1 c0
            0.0, 0.0, // x1 c1
        ];
        Environment::new(
            TaskSpec::shared(2, 1),
            2,
            2,
            vec![0.6, 0.8],
            0.0,
            1,
            vec![AgentTable { stream: 0, phi }],
        )
        .unwrap()
    }

    #[test]
    fn distribution_validation() {
        assert!(ContextDistribution::new(vec![0, 1], vec![0.5, 0.5]).is_ok());
        assert!(ContextDistribution::new(vec![0, 1], vec![0.5, 0.6]).is_err());
        assert!(ContextDistribution::new(vec![0], vec![0.5, 0.5]).is_err());
        assert!(ContextDistribution::new(vec![0, 1], vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn expected_features_examples() {
        let env = tiny_env();
        let psis = env.expected_features(0, &ContextDistribution::point_mass(1));
        assert_eq!(psis[0], vec![0.0, 0.8]);

        let uni = env.expected_features(0, &ContextDistribution::uniform(2));
        assert!((uni[0][0] - 0.2).abs() < 1e-15 && (uni[0][1] - 0.4).abs() < 1e-15);

        let mu = ContextDistribution::new(vec![0, 1], vec![0.25, 0.75]).unwrap();
        let psi = &env.expected_features(0, &mu)[0];
        assert!((psi[0] - 0.1).abs() < 1e-15);
        assert!((psi[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn expectation_commutes_with_inner_product() {
        let env = tiny_env();
        let mu = ContextDistribution::new(vec![0, 1], vec![0.3, 0.7]).unwrap();
        for (x, psi) in env.expected_features(0, &mu).iter().enumerate() {
            let direct: f64 = mu
                .iter()
                .map(|(c, p)| p * env.mean_reward(env.feature(0, x, c)))
                .sum();
            assert!((env.mean_reward(psi) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_point_mass_and_frequency() {
        let mut r = rng(1);
        let pm = ContextDistribution::point_mass(5);
        assert!((0..100).all(|_| pm.sample(&mut r) == 5));

        let uni = ContextDistribution::uniform(2);
        let n = 100_000;
        let hits = (0..n).filter(|_| uni.sample(&mut r) == 0).count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.01, "frequency {freq}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let mu = ContextDistribution::new(vec![0, 3, 7], vec![0.2, 0.3, 0.5]).unwrap();
        let a: Vec<usize> = {
            let mut r = rng(9);
            (0..50).map(|_| mu.sample(&mut r)).collect()
        };
        let b: Vec<usize> = {
            let mut r = rng(9);
            (0..50).map(|_| mu.sample(&mut r)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn reward_examples() {
        let env = Environment::new(
            TaskSpec::shared(2, 1),
            1,
            1,
            vec![0.9, 0.4],
            0.0,
            1,
            vec![AgentTable {
                stream: 0,
                phi: vec![1.0, 0.0],
            }],
        )
        .unwrap();
        let mut r = rng(2);
        assert_eq!(env.realize_reward(&[1.0, 0.0], &mut r), 0.9);
        assert!((env.realize_reward(&[0.4, 0.0], &mut r) - 0.36).abs() < 1e-15);
    }

    #[test]
    fn zero_feature_reward_is_pure_noise() {
        let sigma = 0.5;
        let env = Environment::new(
            TaskSpec::shared(2, 1),
            1,
            1,
            vec![0.9, 0.4],
            sigma,
            1,
            vec![AgentTable {
                stream: 0,
                phi: vec![1.0, 0.0],
            }],
        )
        .unwrap();
        let mut r = rng(3);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| env.realize_reward(&[0.0, 0.0], &mut r))
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() <= 4.0 * sigma / (n as f64).sqrt());
    }

    #[test]
    fn ranking_examples() {
        let theta = [1.0];
        let psis = vec![vec![0.9], vec![0.5], vec![0.2]];
        assert_eq!(
            kth_best(&psis, &theta, 1),
            BaselineInfo {
                action: 0,
                reward: 0.9
            }
        );
        assert_eq!(
            kth_best(&psis, &theta, 2),
            BaselineInfo {
                action: 1,
                reward: 0.5
            }
        );

        let tied = vec![vec![0.5], vec![0.5]];
        assert_eq!(kth_best(&tied, &theta, 1).action, 0);

        assert_eq!(best_action(&[vec![0.3]], &theta).0, 0);
        let r = vec![vec![0.2], vec![0.7], vec![0.7]];
        assert_eq!(best_action(&r, &theta).0, 1);
    }

    #[test]
    fn toy_lifting_optimal_action() {
        // Agent 1 of the three-agent lifting example, one context.
        let theta = [1.0, 2.0];
        let psis = vec![vec![1.0 / 3.0, 0.25], vec![1.0, 0.0], vec![1.0, -0.1]];
        assert_eq!(best_action(&psis, &theta).0, 1);
    }

    #[test]
    fn violation_examples() {
        let env = Environment::new(
            TaskSpec::shared(1, 1),
            1,
            1,
            vec![1.0],
            0.0,
            1,
            vec![AgentTable {
                stream: 0,
                phi: vec![0.5],
            }],
        )
        .unwrap();
        assert!(env.check_violation(&[0.39], 0.5, 0.2));
        assert!(!env.check_violation(&[0.41], 0.5, 0.2));
        assert!(!env.check_violation(&[0.0], 0.5, 1.0));
        assert!(!env.check_violation(&[0.5], 0.5, 0.0));
    }

    fn fig1_params() -> SynthParams {
        SynthParams {
            num_actions: 40,
            num_contexts: 20,
            theta_star: vec![0.9, 0.4],
            noise_sigma: 0.05,
            baseline_rank: 10,
            context_spread: 0.1,
        }
    }

    #[test]
    fn synth_satisfies_invariants_and_is_deterministic() {
        let make = || {
            Environment::synth_generate(&fig1_params(), TaskSpec::shared(2, 2), |s| {
                stream_rng(11, 0, Purpose::Env, s)
            })
            .unwrap()
        };
        let a = make();
        let b = make();
        assert_eq!(a.tables, b.tables);
        let mut max_r = f64::NEG_INFINITY;
        for agent in 0..2 {
            for x in 0..40 {
                for c in 0..20 {
                    let f = a.feature(agent, x, c);
                    let r = a.mean_reward(f);
                    max_r = max_r.max(r);
                    assert!(norm(f) <= 1.0 + 1e-12);
                    assert!(r >= 0.0);
                }
            }
        }
        assert!(max_r <= 1.0);
        assert_ne!(a.tables[0].phi, a.tables[1].phi);
    }

    #[test]
    fn synth_respects_index_sets() {
        let tasks = TaskSpec::new(3, vec![vec![0, 1, 2], vec![0, 2]]).unwrap();
        let params = SynthParams {
            theta_star: vec![0.5, 0.5, 0.5],
            ..fig1_params()
        };
        let env = Environment::synth_generate(&params, tasks, |s| rng(s as u64)).unwrap();
        for x in 0..params.num_actions {
            assert_eq!(env.feature(1, x, 0)[1], 0.0);
        }
    }

    #[test]
    fn synth_rejects_zero_parameter() {
        let tasks = TaskSpec::new(2, vec![vec![0, 1], vec![1]]).unwrap();
        let params = SynthParams {
            theta_star: vec![0.9, 0.0],
            ..fig1_params()
        };
        let err = Environment::synth_generate(&params, tasks, |s| rng(s as u64)).unwrap_err();
        assert!(matches!(err, EnvError::ZeroParameter { agent: 2 }));
    }

    #[test]
    fn optimal_dominates_baseline_over_schedule() {
        let env = Environment::synth_generate(&fig1_params(), TaskSpec::shared(2, 1), |s| {
            rng(40 + s as u64)
        })
        .unwrap();
        let mut r = rng(5);
        let sched = generate_schedule(
            ContextLaw::RandomSupport { size: 5 },
            env.num_contexts(),
            200,
            1,
            false,
            &mut r,
        );
        for round in &sched {
            let (_, best) = env.optimal_action(0, &round.mu);
            assert!(best >= env.baseline_for_round(0, &round.mu).reward);
        }
        let b = env.reward_bounds(0, &sched);
        assert!(0.0 < b.r_l && b.r_l <= b.r_h && b.r_h <= 1.0);
        assert!(0.0 <= b.kappa_l && b.kappa_l <= b.kappa_h);
    }

    #[test]
    fn schedule_shared_and_per_agent() {
        let mut r = rng(8);
        let shared = generate_schedule(ContextLaw::FixedUniform, 6, 50, 3, false, &mut r);
        assert!(shared
            .iter()
            .all(|rc| rc.realized.iter().all(|&c| c == rc.realized[0])));
        let per = generate_schedule(ContextLaw::FixedUniform, 6, 50, 3, true, &mut r);
        assert!(per
            .iter()
            .any(|rc| rc.realized.iter().any(|&c| c != rc.realized[0])));
        let rs = generate_schedule(
            ContextLaw::RandomSupport { size: 5 },
            3,
            10,
            1,
            false,
            &mut r,
        );
        assert!(rs.iter().all(|rc| rc.mu.support().len() == 3));
    }

    #[test]
    fn features_csv_round_trip() {
        let env = Environment::synth_generate(&fig1_params(), TaskSpec::shared(2, 2), |s| {
            rng(70 + s as u64)
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        env.write_features_csv(&path).unwrap();
        let back =
            Environment::from_features_csv(&path, TaskSpec::shared(2, 2), vec![0.9, 0.4], 0.05, 10)
                .unwrap();
        assert_eq!(back.tables, env.tables);
    }

    #[test]
    fn invariant_violations_are_reported() {
        let bad_norm = Environment::new(
            TaskSpec::shared(2, 1),
            1,
            1,
            vec![0.6, 0.8],
            0.0,
            1,
            vec![AgentTable {
                stream: 0,
                phi: vec![1.0, 1.0],
            }],
        );
        assert!(matches!(bad_norm, Err(EnvError::Invariant(_))));
        let outside = Environment::new(
            TaskSpec::new(2, vec![vec![0, 1], vec![0]]).unwrap(),
            1,
            1,
            vec![0.6, 0.8],
            0.0,
            1,
            vec![
                AgentTable {
                    stream: 0,
                    phi: vec![0.5, 0.5],
                },
                AgentTable {
                    stream: 1,
                    phi: vec![0.5, 0.5],
                },
            ],
        );
        assert!(matches!(outside, Err(EnvError::Invariant(m)) if m.contains("outside index set")));
    }
}
