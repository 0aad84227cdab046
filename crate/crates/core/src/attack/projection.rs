use std::cmp::Ordering;

use super::{AttackSpec, RelaxedAdjacency};
use crate::error::{Error, Result};
use crate::graph::{Action, Graph, Pair, Perturbation};

/// Rounds a relaxed adjacency to `spec.budget` edits: additions are the
/// free non-edges with the largest weight, deletions the free edges with the
/// smallest weight. Ties fall back to lexicographic pair order.
pub fn project_discrete(relaxed: &RelaxedAdjacency, spec: &AttackSpec, g: &Graph) -> Result<Perturbation> {
    let mut scored: Vec<(Pair, f64)> = spec
        .candidates(g)
        .into_iter()
        .map(|(u, v)| ((u, v), relaxed.w[(u, v)]))
        .collect();
    let by_weight = |a: &(Pair, f64), b: &(Pair, f64)| -> Ordering {
        let o = match spec.action {
            Action::Add => b.1.total_cmp(&a.1),
            Action::Delete => a.1.total_cmp(&b.1),
        };
        o.then(a.0.cmp(&b.0))
    };
    scored.sort_by(by_weight);
    select_feasible(g, spec.action, spec.budget, scored)
}

/// Takes ranked candidates in order, skipping deletions that would isolate
/// a node, until `budget` edits are chosen.
pub(crate) fn select_feasible(
    g: &Graph,
    action: Action,
    budget: usize,
    ranked: impl IntoIterator<Item = (Pair, f64)>,
) -> Result<Perturbation> {
    let mut out = Perturbation::empty(action);
    if budget == 0 {
        return Ok(out);
    }
    let mut degree = g.degrees();
    for ((u, v), score) in ranked {
        if action == Action::Delete {
            if degree[u] <= 1 || degree[v] <= 1 {
                continue;
            }
            degree[u] -= 1;
            degree[v] -= 1;
        }
        out.edits.push((u, v));
        out.scores.push(score);
        if out.edits.len() == budget {
            return Ok(out);
        }
    }
    Err(Error::Infeasible {
        requested: budget,
        max_feasible: out.edits.len(),
    })
}
