//! Gradient-based poisoning: attack goals and constraints, the implicit
//! gradient chain through the factorization, projected gradient descent on
//! a relaxed adjacency matrix, and rounding to discrete edge edits.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ordered, Action, Graph, Pair};

pub mod gradient;
pub mod pgd;
pub mod projection;

pub use gradient::{
    adjacency_gradient, grad_loss_wrt_x, grad_loss_wrt_z, grad_z_wrt_a_deepwalk, grad_z_wrt_a_line,
    loss,
};
pub use pgd::{pgd, PgdOutcome, RelaxedAdjacency};
pub use projection::project_discrete;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Goal {
    /// Raise or lower the score of a single pair.
    Integrity { target: Pair, direction: Direction },
    /// Lower link-prediction quality over a labelled pair set.
    Availability {
        positives: Vec<Pair>,
        negatives: Vec<Pair>,
    },
}

impl Goal {
    /// Signed inner-product terms of the descended loss:
    /// `L = sum sign * x_i . x_j`.
    pub fn terms(&self) -> Vec<(usize, usize, f64)> {
        match self {
            Goal::Integrity {
                target: (i, j),
                direction,
            } => {
                let sign = match direction {
                    Direction::Up => -1.0,
                    Direction::Down => 1.0,
                };
                vec![(*i, *j, sign)]
            }
            Goal::Availability {
                positives,
                negatives,
            } => positives
                .iter()
                .map(|&(i, j)| (i, j, 1.0))
                .chain(negatives.iter().map(|&(i, j)| (i, j, -1.0)))
                .collect(),
        }
    }

    /// Pairs the attacker may never edit.
    pub fn protected_pairs(&self) -> HashSet<Pair> {
        match self {
            Goal::Integrity { target, .. } => [ordered(target.0, target.1)].into_iter().collect(),
            Goal::Availability {
                positives,
                negatives,
            } => positives
                .iter()
                .chain(negatives)
                .map(|&(u, v)| ordered(u, v))
                .collect(),
        }
    }

    fn max_index(&self) -> Option<usize> {
        match self {
            Goal::Integrity { target, .. } => Some(target.0.max(target.1)),
            Goal::Availability {
                positives,
                negatives,
            } => positives.iter().chain(negatives).map(|&(u, v)| u.max(v)).max(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Constraint {
    /// Only pairs incident to a target endpoint may change.
    Direct,
    /// Pairs incident to a target endpoint are frozen.
    Indirect,
    None,
}

/// Descent settings shared by every gradient attack in a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PgdParams {
    /// Initial step `s0`; iteration `t` uses `s0 / sqrt(1 + t)`.
    pub step_size: f64,
    pub iterations: usize,
    /// Starting weight of modifiable zero cells under `add`.
    pub epsilon_init: f64,
    pub refactor_every: usize,
    /// ALS sweep cap for warm-started re-factorizations inside PGD.
    pub refactor_sweeps: usize,
    /// Round to discrete edits every `k` iterations instead of once at the end.
    pub project_every: Option<usize>,
}

impl Default for PgdParams {
    fn default() -> Self {
        PgdParams {
            step_size: 1.0,
            iterations: 50,
            epsilon_init: 1e-3,
            refactor_every: 1,
            refactor_sweeps: 20,
            project_every: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub goal: Goal,
    pub constraint: Constraint,
    pub action: Action,
    pub budget: usize,
    #[serde(flatten)]
    pub params: PgdParams,
}

impl AttackSpec {
    pub fn new(goal: Goal, constraint: Constraint, action: Action, budget: usize) -> Self {
        AttackSpec {
            goal,
            constraint,
            action,
            budget,
            params: PgdParams::default(),
        }
    }

    pub fn with_params(mut self, params: PgdParams) -> Self {
        self.params = params;
        self
    }

    pub fn integrity(target: Pair, direction: Direction, constraint: Constraint, action: Action, budget: usize) -> Self {
        Self::new(Goal::Integrity { target, direction }, constraint, action, budget)
    }

    pub fn availability(positives: Vec<Pair>, negatives: Vec<Pair>, action: Action, budget: usize) -> Self {
        Self::new(
            Goal::Availability {
                positives,
                negatives,
            },
            Constraint::None,
            action,
            budget,
        )
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if let Some(m) = self.goal.max_index() {
            if m >= n {
                return Err(Error::invalid(format!("goal references node {m} but n = {n}")));
            }
        }
        match &self.goal {
            Goal::Integrity { target, .. } if target.0 == target.1 => {
                return Err(Error::invalid("integrity target must be two distinct nodes"));
            }
            Goal::Availability { positives, .. } if positives.is_empty() => {
                return Err(Error::invalid("availability goal needs at least one positive pair"));
            }
            Goal::Availability { .. } if self.constraint != Constraint::None => {
                return Err(Error::invalid(
                    "direct/indirect constraints are defined relative to an integrity target",
                ));
            }
            _ => {}
        }
        self.params.validate()
    }

    /// Modifiability under the goal and constraint, ignoring the action.
    pub fn mask(&self, n: usize) -> CellMask {
        let protected = self.goal.protected_pairs();
        let endpoints = match &self.goal {
            Goal::Integrity { target, .. } => Some(*target),
            Goal::Availability { .. } => None,
        };
        let mut cells = vec![false; n * n];
        for u in 0..n {
            for v in u + 1..n {
                let incident = endpoints.is_some_and(|(a, b)| u == a || u == b || v == a || v == b);
                let allowed = match self.constraint {
                    Constraint::Direct => incident,
                    Constraint::Indirect => !incident,
                    Constraint::None => true,
                } && !protected.contains(&(u, v));
                cells[u * n + v] = allowed;
                cells[v * n + u] = allowed;
            }
        }
        CellMask { n, cells }
    }

    /// Pairs eligible for the action (non-edges to add, edges to delete)
    /// that the mask allows, in lexicographic order.
    pub fn candidates(&self, g: &Graph) -> Vec<Pair> {
        let n = g.node_count();
        let mask = self.mask(n);
        let want_edge = self.action == Action::Delete;
        (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|&(u, v)| mask.get(u, v) && g.has_edge(u, v) == want_edge)
            .collect()
    }
}

impl PgdParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) {
            return Err(Error::invalid("step size must be positive"));
        }
        if !(self.epsilon_init > 0.0 && self.epsilon_init < 1.0) {
            return Err(Error::invalid("epsilon_init must lie in (0, 1)"));
        }
        if self.refactor_every == 0 || self.refactor_sweeps == 0 {
            return Err(Error::invalid("refactor_every and refactor_sweeps must be positive"));
        }
        if self.project_every == Some(0) {
            return Err(Error::invalid("project_every must be positive"));
        }
        Ok(())
    }
}

/// Dense symmetric boolean mask over node pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellMask {
    n: usize,
    cells: Vec<bool>,
}

impl CellMask {
    pub fn get(&self, u: usize, v: usize) -> bool {
        self.cells[u * self.n + v]
    }

    pub fn set(&mut self, u: usize, v: usize, value: bool) {
        self.cells[u * self.n + v] = value;
        self.cells[v * self.n + u] = value;
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count() / 2
    }
}

/// Serializable summary of one attack run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackRecord {
    pub attack: String,
    pub spec: AttackSpec,
    pub loss_trace: Vec<f64>,
    pub wall_time: f64,
    pub perturbation: Vec<Pair>,
    pub scores: Vec<f64>,
}

impl AttackRecord {
    pub fn to_perturbation(&self) -> crate::graph::Perturbation {
        crate::graph::Perturbation {
            action: self.spec.action,
            edits: self.perturbation.clone(),
            scores: self.scores.clone(),
        }
    }
}
