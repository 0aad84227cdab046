use nalgebra::DMatrix;

use super::projection::project_discrete;
use super::{adjacency_gradient, loss, AttackSpec, CellMask};
use crate::error::Result;
use crate::factorize::{factorize, factorize_from, AlsConfig, Embedding};
use crate::graph::{Action, Graph};
use crate::proximity::{build_z_weighted, ProximitySpec};

/// Weighted adjacency in `[0, 1]`. Cells outside `free` always equal
/// `origin`.
#[derive(Debug, Clone)]
pub struct RelaxedAdjacency {
    pub w: DMatrix<f64>,
    pub free: CellMask,
    pub origin: DMatrix<f64>,
}

impl RelaxedAdjacency {
    /// Starting point: the clean adjacency, with free zero cells lifted to
    /// `epsilon_init` under `add` so they enter the observed set.
    pub fn initial(g: &Graph, spec: &AttackSpec) -> Self {
        let n = g.node_count();
        let origin = g.adjacency();
        let mut free = spec.mask(n);
        let eligible = match spec.action {
            Action::Add => 0.0,
            Action::Delete => 1.0,
        };
        for u in 0..n {
            for v in u + 1..n {
                if free.get(u, v) && origin[(u, v)] != eligible {
                    free.set(u, v, false);
                }
            }
        }
        let mut w = origin.clone();
        if spec.action == Action::Add {
            for u in 0..n {
                for v in 0..n {
                    if u != v && free.get(u, v) {
                        w[(u, v)] = spec.params.epsilon_init;
                    }
                }
            }
        }
        RelaxedAdjacency { w, free, origin }
    }

    fn restore_frozen(&mut self) {
        let n = self.w.nrows();
        for u in 0..n {
            for v in 0..n {
                if !self.free.get(u, v) {
                    self.w[(u, v)] = self.origin[(u, v)];
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct PgdOutcome {
    pub relaxed: RelaxedAdjacency,
    /// Loss at the start of every iteration.
    pub loss_trace: Vec<f64>,
    /// The last factorization computed during descent, if any.
    pub embedding: Option<Embedding>,
}

/// Projected gradient descent on the relaxed adjacency:
/// `W <- clip(W - s0/sqrt(1+t) * grad, 0, 1)` over free cells.
pub fn pgd(g: &Graph, spec: &AttackSpec, prox: &ProximitySpec, als: &AlsConfig, seed: u64) -> Result<PgdOutcome> {
    let n = g.node_count();
    spec.validate(n)?;
    prox.validate(n)?;
    g.ensure_no_isolated()?;

    let mut relaxed = RelaxedAdjacency::initial(g, spec);
    let warm = AlsConfig {
        max_sweeps: spec.params.refactor_sweeps,
        ..*als
    };
    let mut embedding: Option<Embedding> = None;
    let mut loss_trace = Vec::with_capacity(spec.params.iterations);

    for t in 0..spec.params.iterations {
        let model = build_z_weighted(&relaxed.w, prox)?;
        let emb = match embedding.take() {
            None => factorize(&model, seed, als)?,
            Some(prev) if t % spec.params.refactor_every == 0 => factorize_from(&model, prev.x, prev.y, &warm)?,
            Some(prev) => prev,
        };
        loss_trace.push(loss(&emb, &spec.goal));

        let grad = adjacency_gradient(&model, &emb, &spec.goal, &relaxed.w)?;
        let step = spec.params.step_size / ((1 + t) as f64).sqrt();
        for u in 0..n {
            for v in 0..n {
                if relaxed.free.get(u, v) {
                    let cell = relaxed.w[(u, v)] - step * grad[(u, v)];
                    relaxed.w[(u, v)] = cell.clamp(0.0, 1.0);
                }
            }
        }
        relaxed.restore_frozen();

        if let Some(k) = spec.params.project_every {
            if (t + 1) % k == 0 && t + 1 < spec.params.iterations {
                snap_to_projection(g, spec, &mut relaxed)?;
            }
        }
        embedding = Some(emb);
    }

    Ok(PgdOutcome {
        relaxed,
        loss_trace,
        embedding,
    })
}

/// Intermediate rounding: selected edits take their final value, the other
/// free cells restart from their initial weight.
fn snap_to_projection(g: &Graph, spec: &AttackSpec, relaxed: &mut RelaxedAdjacency) -> Result<()> {
    let chosen = project_discrete(relaxed, spec, g)?;
    let restart = RelaxedAdjacency::initial(g, spec);
    relaxed.w = restart.w;
    let value = match spec.action {
        Action::Add => 1.0,
        Action::Delete => 0.0,
    };
    for &(u, v) in &chosen.edits {
        relaxed.w[(u, v)] = value;
        relaxed.w[(v, u)] = value;
    }
    Ok(())
}
