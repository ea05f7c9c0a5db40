//! Simulated sync server: aggregates local statistics and broadcasts the
//! shared sums back to every agent.

use thiserror::Error;

use crate::agent::AgentState;
use crate::numerics::{axpy, NumericsError, SymPsdMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyncError {
    #[error("sync round is missing agent {0}")]
    MissingAgent(usize),
    #[error("agent {0} sent more than one upload")]
    DuplicateAgent(usize),
    #[error("upload from unknown agent {0}")]
    UnknownAgent(usize),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Uplink payload: one agent's statistics since its last sync.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncUp {
    pub agent: usize,
    pub w_loc: SymPsdMatrix,
    pub u_loc: Vec<f64>,
}

impl SyncUp {
    pub fn from_state(state: &AgentState) -> Self {
        Self {
            agent: state.id,
            w_loc: state.w_loc.clone(),
            u_loc: state.u_loc.clone(),
        }
    }
}

/// Broadcast payload: the aggregated shared statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncDown {
    pub w_syn: SymPsdMatrix,
    pub u_syn: Vec<f64>,
}

/// Running communication totals. Matrices are sent in full (`d²` scalars)
/// alongside the `d`-vector, in both directions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CommLedger {
    pub epochs: u64,
    pub scalars_up: u64,
    pub scalars_down: u64,
}

impl CommLedger {
    pub fn total_scalars(&self) -> u64 {
        self.scalars_up + self.scalars_down
    }
}

#[derive(Debug, Clone)]
pub struct Server {
    agents: usize,
    w_syn: SymPsdMatrix,
    u_syn: Vec<f64>,
    ledger: CommLedger,
}

impl Server {
    pub fn new(agents: usize, dim: usize) -> Self {
        Self {
            agents,
            w_syn: SymPsdMatrix::zeros(dim),
            u_syn: vec![0.0; dim],
            ledger: CommLedger::default(),
        }
    }

    pub fn ledger(&self) -> CommLedger {
        self.ledger
    }

    pub fn w_syn(&self) -> &SymPsdMatrix {
        &self.w_syn
    }

    pub fn u_syn(&self) -> &[f64] {
        &self.u_syn
    }

    /// Adds every agent's upload to the shared sums. Uploads are summed in
    /// agent-id order regardless of arrival order, so the result is
    /// bit-identical under permutation.
    pub fn aggregate(&mut self, ups: &[SyncUp]) -> Result<SyncDown, SyncError> {
        let mut slots: Vec<Option<&SyncUp>> = vec![None; self.agents];
        for up in ups {
            let slot = slots
                .get_mut(up.agent)
                .ok_or(SyncError::UnknownAgent(up.agent))?;
            if slot.replace(up).is_some() {
                return Err(SyncError::DuplicateAgent(up.agent));
            }
        }
        let ordered = slots
            .iter()
            .enumerate()
            .map(|(i, s)| s.ok_or(SyncError::MissingAgent(i)))
            .collect::<Result<Vec<_>, _>>()?;

        let mut w = self.w_syn.clone();
        let mut u = self.u_syn.clone();
        for up in ordered {
            w.add_assign(&up.w_loc)?;
            if up.u_loc.len() != u.len() {
                return Err(NumericsError::DimensionMismatch {
                    expected: u.len(),
                    found: up.u_loc.len(),
                }
                .into());
            }
            axpy(1.0, &up.u_loc, &mut u);
        }
        self.w_syn = w;
        self.u_syn = u;

        let d = self.u_syn.len() as u64;
        let per_agent = d * d + d;
        self.ledger.epochs += 1;
        self.ledger.scalars_up += self.agents as u64 * per_agent;
        self.ledger.scalars_down += self.agents as u64 * per_agent;
        Ok(SyncDown {
            w_syn: self.w_syn.clone(),
            u_syn: self.u_syn.clone(),
        })
    }

    /// One full round trip: collect from every agent, aggregate, apply.
    pub fn sync_all(&mut self, states: &mut [AgentState], t: usize) -> Result<(), SyncError> {
        let ups: Vec<SyncUp> = states.iter().map(SyncUp::from_state).collect();
        let down = self.aggregate(&ups)?;
        for s in states.iter_mut() {
            apply_sync(s, &down, t)?;
        }
        Ok(())
    }
}

/// Installs the broadcast sums, clears local statistics and resets the
/// sync markers.
pub fn apply_sync(state: &mut AgentState, down: &SyncDown, t: usize) -> Result<(), SyncError> {
    state.w_syn = down.w_syn.clone();
    state.u_syn = down.u_syn.clone();
    state.w_loc.set_zero();
    state.u_loc.iter_mut().for_each(|x| *x = 0.0);
    state.t_last = t;
    let mut v_last = down.w_syn.clone();
    v_last.add_identity(state.hp.lambda);
    state.logdet_v_last = v_last.logdet()?;
    Ok(())
}
