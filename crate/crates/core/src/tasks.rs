//! Index-set lifting of per-agent features into the shared parameter space.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("agent {agent} out of range (M = {agents})")]
    UnknownAgent { agent: usize, agents: usize },
    #[error("agent {agent}: expected {expected} coordinates, found {found}")]
    DimensionMismatch {
        agent: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid task spec: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

/// Per-agent feature index sets over a shared `dim`-dimensional space.
///
/// Indices are stored 0-based. Config files use 1-based indices; convert with
/// [`TaskSpec::from_one_based`].
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    dim: usize,
    index_sets: Vec<Vec<usize>>,
}

impl TaskSpec {
    /// Builds and validates a spec from 0-based index sets.
    pub fn new(dim: usize, index_sets: Vec<Vec<usize>>) -> Result<Self, TaskError> {
        let spec = Self { dim, index_sets };
        let issues = spec.validate();
        if issues.is_empty() {
            Ok(spec)
        } else {
            Err(TaskError::Invalid(issues))
        }
    }

    /// Builds from 1-based index sets, as written in config files.
    pub fn from_one_based(dim: usize, index_sets: &[Vec<usize>]) -> Result<Self, TaskError> {
        let mut issues = Vec::new();
        let converted = index_sets
            .iter()
            .enumerate()
            .map(|(a, set)| {
                set.iter()
                    .map(|&k| {
                        if k == 0 {
                            issues.push(format!("agent {}: index out of range (0)", a + 1));
                            0
                        } else {
                            k - 1
                        }
                    })
                    .collect()
            })
            .collect();
        if !issues.is_empty() {
            return Err(TaskError::Invalid(issues));
        }
        Self::new(dim, converted)
    }

    /// Every agent owns all `dim` features.
    pub fn shared(dim: usize, agents: usize) -> Self {
        Self {
            dim,
            index_sets: vec![(0..dim).collect(); agents],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_agents(&self) -> usize {
        self.index_sets.len()
    }

    pub fn index_set(&self, agent: usize) -> &[usize] {
        &self.index_sets[agent]
    }

    pub fn local_dim(&self, agent: usize) -> usize {
        self.index_sets[agent].len()
    }

    /// Lists every invariant violation; empty means valid.
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.dim == 0 {
            issues.push("shared dimension must be positive".to_string());
        }
        if self.index_sets.is_empty() {
            issues.push("at least one agent is required".to_string());
            return issues;
        }
        for (a, set) in self.index_sets.iter().enumerate() {
            if set.is_empty() {
                issues.push(format!("agent {}: index set is empty", a + 1));
            }
            if let Some(&k) = set.iter().find(|&&k| k >= self.dim) {
                issues.push(format!("agent {}: index out of range ({})", a + 1, k + 1));
            }
            if set.windows(2).any(|w| w[0] >= w[1]) {
                issues.push(format!(
                    "agent {}: indices must be strictly increasing",
                    a + 1
                ));
            }
        }
        let first_full = self.index_sets[0].len() == self.dim
            && self.index_sets[0].iter().enumerate().all(|(p, &k)| p == k);
        if !first_full {
            issues.push("agent 1 must own all features".to_string());
        }
        if self.index_sets.windows(2).any(|w| w[0].len() < w[1].len()) {
            issues.push("local dimensions must be nonincreasing across agents".to_string());
        }
        issues
    }

    fn check_agent(&self, agent: usize) -> Result<(), TaskError> {
        if agent >= self.index_sets.len() {
            return Err(TaskError::UnknownAgent {
                agent,
                agents: self.index_sets.len(),
            });
        }
        Ok(())
    }

    /// Zero-pads a local feature into the shared space.
    pub fn lift_feature(&self, phi_local: &[f64], agent: usize) -> Result<Vec<f64>, TaskError> {
        self.check_agent(agent)?;
        let set = &self.index_sets[agent];
        if phi_local.len() != set.len() {
            return Err(TaskError::DimensionMismatch {
                agent,
                expected: set.len(),
                found: phi_local.len(),
            });
        }
        let mut out = vec![0.0; self.dim];
        for (&k, &v) in set.iter().zip(phi_local) {
            out[k] = v;
        }
        Ok(out)
    }

    /// Restricts a shared vector to an agent's coordinates.
    pub fn restrict_parameter(&self, theta: &[f64], agent: usize) -> Result<Vec<f64>, TaskError> {
        self.check_agent(agent)?;
        if theta.len() != self.dim {
            return Err(TaskError::DimensionMismatch {
                agent,
                expected: self.dim,
                found: theta.len(),
            });
        }
        Ok(self.index_sets[agent].iter().map(|&k| theta[k]).collect())
    }
}
