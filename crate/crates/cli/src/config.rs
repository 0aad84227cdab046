use std::path::{Path, PathBuf};

use embedpoison::attack::{Constraint, Direction, PgdParams};
use embedpoison::eval::{AttackMethod, ExperimentConfig};
use embedpoison::factorize::AlsConfig;
use embedpoison::{Action, Error, Graph, Method, Pair, ProximitySpec, Result};
use serde::{Deserialize, Serialize};

use crate::{PgdArgs, ProxArgs};

pub fn parse_action(s: &str) -> Result<Action> {
    match s {
        "add" => Ok(Action::Add),
        "delete" => Ok(Action::Delete),
        _ => Err(Error::invalid(format!("action must be add or delete, got {s:?}"))),
    }
}

pub fn parse_direction(s: &str) -> Result<Direction> {
    match s {
        "up" => Ok(Direction::Up),
        "down" => Ok(Direction::Down),
        _ => Err(Error::invalid(format!("direction must be up or down, got {s:?}"))),
    }
}

pub fn parse_constraint(s: &str) -> Result<Constraint> {
    match s {
        "direct" => Ok(Constraint::Direct),
        "indirect" => Ok(Constraint::Indirect),
        "none" => Ok(Constraint::None),
        _ => Err(Error::invalid(format!("constraint must be direct, indirect or none, got {s:?}"))),
    }
}

/// Resolves "u,v" against the edge-list ids of `g`.
pub fn parse_target(s: &str, g: &Graph) -> Result<Pair> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(Error::invalid(format!("target must look like u,v, got {s:?}")));
    }
    let find = |tok: &str| -> Result<usize> {
        match g.labels() {
            Some(labels) => labels
                .iter()
                .position(|l| l == tok)
                .ok_or_else(|| Error::invalid(format!("node {tok:?} is not in the graph"))),
            None => tok
                .parse()
                .map_err(|_| Error::invalid(format!("bad node index {tok:?}"))),
        }
    };
    Ok((find(parts[0])?, find(parts[1])?))
}

impl ProxArgs {
    pub fn apply(&self, prox: &mut ProximitySpec, als: &mut AlsConfig) -> Result<()> {
        if let Some(m) = &self.method {
            prox.method = m.parse::<Method>()?;
        }
        if let Some(t) = self.window {
            prox.window = t;
        }
        if let Some(b) = self.negatives {
            prox.negatives = b;
        }
        if let Some(d) = self.dim {
            prox.dim = d;
        }
        if let Some(r) = self.ridge {
            als.ridge = r;
        }
        if let Some(s) = self.sweeps {
            als.max_sweeps = s;
        }
        Ok(())
    }
}

impl PgdArgs {
    pub fn apply(&self, p: &mut PgdParams) {
        if let Some(i) = self.iters {
            p.iterations = i;
        }
        if let Some(s) = self.step {
            p.step_size = s;
        }
        if let Some(k) = self.refactor_every {
            p.refactor_every = k;
        }
        if self.project_every.is_some() {
            p.project_every = self.project_every;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Integrity,
    Availability,
    Transfer,
}

fn default_attacks() -> Vec<AttackMethod> {
    vec![AttackMethod::Opt, AttackMethod::Random]
}

fn default_action() -> Action {
    Action::Add
}

/// Experiment description read from TOML. Command-line flags override it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub graph: PathBuf,
    pub kind: ExperimentKind,
    #[serde(default = "default_attacks")]
    pub attacks: Vec<AttackMethod>,
    #[serde(default = "default_action")]
    pub action: Action,
    /// Integrity runs only.
    #[serde(default)]
    pub direction: Option<Direction>,
    #[serde(default)]
    pub constraint: Option<Constraint>,
    /// Transfer runs only: method the poisoned graph is scored with.
    #[serde(default)]
    pub target_method: Option<Method>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub experiment: ExperimentConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
    }

    /// Checks everything that does not need the graph.
    pub fn check(&self) -> Result<()> {
        if self.attacks.is_empty() {
            return Err(Error::invalid("at least one attack is required"));
        }
        match self.kind {
            ExperimentKind::Integrity => {
                if self.target_method.is_some() {
                    return Err(Error::invalid("target_method is only valid for transfer runs"));
                }
            }
            ExperimentKind::Availability | ExperimentKind::Transfer => {
                if self.direction.is_some() || self.constraint.is_some() {
                    return Err(Error::invalid("direction and constraint are only valid for integrity runs"));
                }
                if self.kind == ExperimentKind::Transfer && self.target_method.is_none() {
                    return Err(Error::invalid("transfer runs need target_method"));
                }
                if self.kind == ExperimentKind::Availability && self.target_method.is_some() {
                    return Err(Error::invalid("target_method is only valid for transfer runs"));
                }
            }
        }
        Ok(())
    }

    pub fn target_proximity(&self) -> ProximitySpec {
        let mut p = self.experiment.proximity;
        if let Some(m) = self.target_method {
            p.method = m;
        }
        p
    }
}
