//! The per-agent learner: confidence ellipsoid, safe pruning, eigenvalue
//! gate, optimistic selection and conservative fallback.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::BaselineInfo;
use crate::numerics::{self, combine, dot, norm, NumericsError, SymPsdMatrix};
use crate::seeds::Rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("delta must lie in (0, 1), got {0}")]
    BadDelta(f64),
    #[error("lambda must be positive, got {0}")]
    BadLambda(f64),
    #[error("alpha must lie in (0, 1] for constrained modes, got {0}")]
    BadAlpha(f64),
    #[error("rho = {rho} outside the safe range (0, {max}] for {mode}")]
    BadRho { rho: f64, max: f64, mode: Mode },
    #[error("baseline reward bounds must satisfy 0 < r_l <= r_h, got r_l = {r_l}, r_h = {r_h}")]
    BadBounds { r_l: f64, r_h: f64 },
    #[error("no actions to choose from")]
    NoActions,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Algorithm variant run by an agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Baseline reward known each round.
    #[serde(rename = "disc-ucb")]
    KnownBaseline,
    /// Baseline reward unknown; bounded through the confidence set.
    #[serde(rename = "disc-ucb-ub")]
    UnknownBaseline,
    /// No performance constraint: plain optimistic selection.
    #[serde(rename = "dislinucb")]
    Unconstrained,
    /// Known-baseline selection without any synchronization.
    #[serde(rename = "independent")]
    Independent,
}

impl Mode {
    pub const ALL: [Mode; 4] = [
        Mode::KnownBaseline,
        Mode::UnknownBaseline,
        Mode::Unconstrained,
        Mode::Independent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::KnownBaseline => "disc-ucb",
            Mode::UnknownBaseline => "disc-ucb-ub",
            Mode::Unconstrained => "dislinucb",
            Mode::Independent => "independent",
        }
    }

    pub fn is_constrained(self) -> bool {
        self != Mode::Unconstrained
    }

    pub fn syncs(self) -> bool {
        self != Mode::Independent
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                format!(
                    "unknown mode {s:?} (expected disc-ucb, disc-ucb-ub, dislinucb or independent)"
                )
            })
    }
}

/// Largest exploration weight that keeps conservative plays safe.
///
/// Unknown-baseline mode needs a strict inequality, so it backs off by 1%.
pub fn default_rho(mode: Mode, alpha: f64, r_l: f64, r_h: f64) -> f64 {
    match mode {
        Mode::UnknownBaseline => 0.99 * alpha * r_l / 2.0,
        _ => alpha * r_l / (1.0 + r_h),
    }
}

fn rho_limit(mode: Mode, alpha: f64, r_l: f64, r_h: f64) -> f64 {
    match mode {
        Mode::UnknownBaseline => alpha * r_l / 2.0,
        _ => alpha * r_l / (1.0 + r_h),
    }
}

/// Sync threshold `T·ln(M·T) / (d·M)`.
pub fn sync_threshold(horizon: usize, agents: usize, dim: usize) -> f64 {
    let (t, m) = (horizon as f64, agents as f64);
    t * (m * t).ln() / (dim as f64 * m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub mode: Mode,
    pub lambda: f64,
    pub delta: f64,
    pub alpha: f64,
    /// Reward noise standard deviation.
    pub sigma: f64,
    pub rho: f64,
    pub r_l: f64,
    pub r_h: f64,
}

impl Hyperparams {
    /// Builds hyperparameters, filling `rho` with [`default_rho`] when absent.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mode: Mode,
        lambda: f64,
        delta: f64,
        alpha: f64,
        sigma: f64,
        rho: Option<f64>,
        r_l: f64,
        r_h: f64,
    ) -> Result<Self, AgentError> {
        if !(lambda > 0.0) {
            return Err(AgentError::BadLambda(lambda));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(AgentError::BadDelta(delta));
        }
        let hp = Self {
            mode,
            lambda,
            delta,
            alpha,
            sigma,
            rho: rho.unwrap_or_else(|| default_rho(mode, alpha, r_l, r_h)),
            r_l,
            r_h,
        };
        if mode.is_constrained() {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(AgentError::BadAlpha(alpha));
            }
            if !(r_l > 0.0 && r_l <= r_h) {
                return Err(AgentError::BadBounds { r_l, r_h });
            }
            let max = rho_limit(mode, alpha, r_l, r_h);
            let ok = match mode {
                Mode::UnknownBaseline => hp.rho > 0.0 && hp.rho < max,
                _ => hp.rho > 0.0 && hp.rho <= max * (1.0 + 1e-12),
            };
            if !ok {
                return Err(AgentError::BadRho {
                    rho: hp.rho,
                    max,
                    mode,
                });
            }
        }
        Ok(hp)
    }
}

/// Confidence radius with noise inflated to `√(1+σ²)` and failure
/// probability halved:
/// `β = √(1+σ²)·√(2·ln(√(det V̄ / λ^d) / (δ/2))) + √λ`.
pub fn confidence_radius(
    v_bar: &SymPsdMatrix,
    lambda: f64,
    sigma: f64,
    delta: f64,
) -> Result<f64, AgentError> {
    radius_from_logdet(v_bar.logdet()?, v_bar.dim(), lambda, sigma, delta)
}

fn radius_from_logdet(
    logdet: f64,
    dim: usize,
    lambda: f64,
    sigma: f64,
    delta: f64,
) -> Result<f64, AgentError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(AgentError::BadDelta(delta));
    }
    let half_log_ratio = (logdet - dim as f64 * lambda.ln()) / 2.0;
    let log_term = (half_log_ratio - (delta / 2.0).ln()).max(0.0);
    Ok((1.0 + sigma * sigma).sqrt() * (2.0 * log_term).sqrt() + lambda.sqrt())
}

/// Maximum of `ψᵀθ` over the ellipsoid `{θ : ‖θ − θ̂‖_V̄ ≤ β}`.
pub fn ucb_value(
    psi: &[f64],
    theta_hat: &[f64],
    beta: f64,
    v_bar: &SymPsdMatrix,
) -> Result<f64, AgentError> {
    Ok(dot(psi, theta_hat) + beta * v_bar.mahalanobis_inv_norm(psi)?)
}

/// Members of a pruned set and the threshold they cleared.
#[derive(Debug, Clone, PartialEq)]
pub struct Pruned {
    pub members: Vec<usize>,
    pub threshold: f64,
}

fn prune_at(psis: &[Vec<f64>], theta_hat: &[f64], threshold: f64) -> Pruned {
    let members = psis
        .iter()
        .enumerate()
        .filter(|(_, p)| dot(p, theta_hat) >= threshold)
        .map(|(i, _)| i)
        .collect();
    Pruned { members, threshold }
}

/// Known baseline: keep `x` with `ψᵀθ̂ ≥ β/√λ_min + (1−α)·r_b`.
pub fn prune_known(
    psis: &[Vec<f64>],
    theta_hat: &[f64],
    beta: f64,
    lambda_min: f64,
    alpha: f64,
    r_b: f64,
) -> Pruned {
    let threshold = beta / lambda_min.sqrt() + (1.0 - alpha) * r_b;
    prune_at(psis, theta_hat, threshold)
}

/// Unknown baseline: the baseline reward is replaced by its optimistic
/// value over the confidence set.
#[allow(clippy::too_many_arguments)]
pub fn prune_unknown(
    psis: &[Vec<f64>],
    psi_b: &[f64],
    theta_hat: &[f64],
    beta: f64,
    v_bar: &SymPsdMatrix,
    lambda_min: f64,
    alpha: f64,
) -> Result<Pruned, AgentError> {
    let base_ucb = ucb_value(psi_b, theta_hat, beta, v_bar)?;
    let threshold = beta / lambda_min.sqrt() + (1.0 - alpha) * base_ucb;
    Ok(prune_at(psis, theta_hat, threshold))
}

/// Minimum-eigenvalue threshold the gate requires, if any.
pub fn gate_threshold(
    beta: f64,
    alpha: f64,
    reward_bound: f64,
    mode: Mode,
) -> Result<Option<f64>, AgentError> {
    match mode {
        Mode::Unconstrained => Ok(None),
        _ if !(alpha > 0.0) => Err(AgentError::BadAlpha(alpha)),
        Mode::KnownBaseline | Mode::Independent => {
            Ok(Some((2.0 * beta / (alpha * reward_bound)).powi(2)))
        }
        Mode::UnknownBaseline => Ok(Some(
            (2.0 * (2.0 - alpha) * beta / (alpha * reward_bound)).powi(2),
        )),
    }
}

/// `reward_bound` is `r_b` for known-baseline modes and `r_l` otherwise.
pub fn gate(
    beta: f64,
    lambda_min: f64,
    alpha: f64,
    reward_bound: f64,
    mode: Mode,
) -> Result<bool, AgentError> {
    Ok(match gate_threshold(beta, alpha, reward_bound, mode)? {
        None => true,
        Some(th) => lambda_min >= th,
    })
}

/// Uniform draw from the unit sphere.
pub fn unit_sphere(dim: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// `(1−ρ)·ψ_b + ρ·ζ` with `ζ` uniform on the unit sphere.
pub fn conservative_vector(psi_b: &[f64], rho: f64, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
    let zeta = unit_sphere(psi_b.len(), rng);
    (combine(1.0 - rho, psi_b, rho, &zeta), zeta)
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecisionKind {
    AgentAction { action: usize, psi: Vec<f64> },
    Conservative { psi: Vec<f64>, zeta: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub beta: f64,
    pub lambda_min: f64,
    pub theta_hat: Vec<f64>,
    pub gate_passed: bool,
    /// Pruned action ids; every action in unconstrained mode.
    pub pruned: Vec<usize>,
    pub prune_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub kind: DecisionKind,
    pub diagnostics: Diagnostics,
}

impl Decision {
    /// Expected feature the agent plays and learns from.
    pub fn psi(&self) -> &[f64] {
        match &self.kind {
            DecisionKind::AgentAction { psi, .. } | DecisionKind::Conservative { psi, .. } => psi,
        }
    }

    pub fn action(&self) -> Option<usize> {
        match self.kind {
            DecisionKind::AgentAction { action, .. } => Some(action),
            DecisionKind::Conservative { .. } => None,
        }
    }

    pub fn is_conservative(&self) -> bool {
        matches!(self.kind, DecisionKind::Conservative { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: usize,
    pub hp: Hyperparams,
    pub w_loc: SymPsdMatrix,
    pub u_loc: Vec<f64>,
    pub w_syn: SymPsdMatrix,
    pub u_syn: Vec<f64>,
    pub t_last: usize,
    pub logdet_v_last: f64,
}

impl AgentState {
    pub fn new(id: usize, dim: usize, hp: Hyperparams) -> Self {
        Self {
            id,
            hp,
            w_loc: SymPsdMatrix::zeros(dim),
            u_loc: vec![0.0; dim],
            w_syn: SymPsdMatrix::zeros(dim),
            u_syn: vec![0.0; dim],
            t_last: 0,
            logdet_v_last: dim as f64 * hp.lambda.ln(),
        }
    }

    pub fn dim(&self) -> usize {
        self.u_loc.len()
    }

    /// `λI + W_syn + W_loc`.
    pub fn v_bar(&self) -> SymPsdMatrix {
        let mut v = self.w_syn.clone();
        v.add_assign(&self.w_loc)
            .expect("agent statistics share a dimension");
        v.add_identity(self.hp.lambda);
        v
    }

    fn u_total(&self) -> Vec<f64> {
        combine(1.0, &self.u_syn, 1.0, &self.u_loc)
    }

    /// Ridge estimate `V̄⁻¹ (U_syn + U_loc)`.
    pub fn estimate(&self) -> Result<Vec<f64>, AgentError> {
        Ok(self.v_bar().solve_psd(&self.u_total())?)
    }

    pub fn beta(&self) -> Result<f64, AgentError> {
        confidence_radius(&self.v_bar(), self.hp.lambda, self.hp.sigma, self.hp.delta)
    }

    /// Whether `theta` lies in the current confidence ellipsoid of radius `beta`.
    pub fn confidence_contains(&self, theta: &[f64], beta: f64) -> Result<bool, AgentError> {
        let theta_hat = self.estimate()?;
        let diff = combine(1.0, theta, -1.0, &theta_hat);
        Ok(self.v_bar().quad_form(&diff)? <= beta * beta)
    }

    /// Chooses this round's play from the expected features of every action.
    pub fn select(
        &self,
        psis: &[Vec<f64>],
        baseline: BaselineInfo,
        rng: &mut Rng,
    ) -> Result<Decision, AgentError> {
        if psis.is_empty() {
            return Err(AgentError::NoActions);
        }
        let hp = &self.hp;
        let v_bar = self.v_bar();
        let chol = v_bar.cholesky()?;
        let beta = radius_from_logdet(chol.logdet(), v_bar.dim(), hp.lambda, hp.sigma, hp.delta)?;
        let theta_hat = chol.solve(&self.u_total());
        let lambda_min = v_bar.min_eigenvalue();
        let ucb = |p: &[f64]| dot(p, &theta_hat) + beta * chol.inv_norm(p);

        let (pruned, gate_passed) = match hp.mode {
            Mode::Unconstrained => (
                Pruned {
                    members: (0..psis.len()).collect(),
                    threshold: f64::NEG_INFINITY,
                },
                true,
            ),
            Mode::KnownBaseline | Mode::Independent => (
                prune_known(
                    psis,
                    &theta_hat,
                    beta,
                    lambda_min,
                    hp.alpha,
                    baseline.reward,
                ),
                gate(beta, lambda_min, hp.alpha, baseline.reward, hp.mode)?,
            ),
            Mode::UnknownBaseline => {
                let psi_b = &psis[baseline.action];
                let base_ucb = ucb(psi_b);
                let threshold = beta / lambda_min.sqrt() + (1.0 - hp.alpha) * base_ucb;
                (
                    prune_at(psis, &theta_hat, threshold),
                    gate(beta, lambda_min, hp.alpha, hp.r_l, hp.mode)?,
                )
            }
        };

        let chosen = if gate_passed {
            let mut best: Option<(usize, f64)> = None;
            for &x in &pruned.members {
                let v = ucb(&psis[x]);
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((x, v));
                }
            }
            best.map(|(x, _)| x)
        } else {
            None
        };

        let kind = match chosen {
            Some(action) => DecisionKind::AgentAction {
                action,
                psi: psis[action].clone(),
            },
            None => {
                let (psi, zeta) = conservative_vector(&psis[baseline.action], hp.rho, rng);
                DecisionKind::Conservative { psi, zeta }
            }
        };
        Ok(Decision {
            kind,
            diagnostics: Diagnostics {
                beta,
                lambda_min,
                theta_hat,
                gate_passed,
                pruned: pruned.members,
                prune_threshold: pruned.threshold,
            },
        })
    }

    /// `W_loc += ψψᵀ`, `U_loc += ψ·y`.
    pub fn local_update(&mut self, psi: &[f64], y: f64) -> Result<(), AgentError> {
        self.w_loc.rank1_update_mut(psi)?;
        numerics::axpy(y, psi, &mut self.u_loc);
        Ok(())
    }

    /// `(ln det V̄ − ln det V_last)·(t − t_last) ≥ B`.
    pub fn sync_due(&self, t: usize, threshold: f64) -> Result<bool, AgentError> {
        let growth = self.v_bar().logdet()? - self.logdet_v_last;
        Ok(growth * t.saturating_sub(self.t_last) as f64 >= threshold)
    }
}
