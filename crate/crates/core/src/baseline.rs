//! Heuristic comparison attacks: random edits, personalized PageRank
//! around an integrity target, degree-sum ranking, and shortest-path edge
//! importance.
//!
//! All of them draw from the same candidate pool as the gradient attack
//! ([`AttackSpec::candidates`]) and share its feasibility rules, so budgets,
//! frozen cells and isolation avoidance behave identically.

use std::collections::{HashMap, VecDeque};

use fixedbitset::FixedBitSet;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::attack::projection::select_feasible;
use crate::attack::{AttackSpec, Goal};
use crate::error::{Error, Result};
use crate::graph::{ordered, Action, Graph, Pair, Perturbation};
use crate::seed::{rng_for, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Random,
    Ppr,
    DegreeSum,
    ShortestPath,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Random => "random",
            BaselineKind::Ppr => "ppr",
            BaselineKind::DegreeSum => "degree_sum",
            BaselineKind::ShortestPath => "shortest_path",
        }
    }

    /// Goal/action combinations each heuristic is defined for.
    pub fn check(self, spec: &AttackSpec) -> Result<()> {
        let integrity = matches!(spec.goal, Goal::Integrity { .. });
        let ok = match self {
            BaselineKind::Random => true,
            BaselineKind::Ppr => integrity,
            BaselineKind::DegreeSum => !integrity,
            BaselineKind::ShortestPath => !integrity && spec.action == Action::Delete,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{} baseline does not support this goal/action combination",
                self.name()
            )))
        }
    }
}

pub const DEFAULT_RESTART: f64 = 0.15;

/// Runs the named baseline.
pub fn run_baseline(kind: BaselineKind, g: &Graph, spec: &AttackSpec, restart: f64, seed: u64) -> Result<Perturbation> {
    kind.check(spec)?;
    spec.validate(g.node_count())?;
    match kind {
        BaselineKind::Random => random_attack(g, spec, seed),
        BaselineKind::Ppr => ppr_attack(g, spec, restart),
        BaselineKind::DegreeSum => degree_sum_attack(g, spec),
        BaselineKind::ShortestPath => shortest_path_attack(g, spec),
    }
}

/// Uniform sample without replacement from the feasible candidates.
pub fn random_attack(g: &Graph, spec: &AttackSpec, seed: u64) -> Result<Perturbation> {
    let mut pool = spec.candidates(g);
    pool.shuffle(&mut rng_for(seed, streams::RANDOM_ATTACK));
    select_feasible(g, spec.action, spec.budget, pool.into_iter().map(|p| (p, 0.0)))
}

/// Personalized PageRank with restart spread uniformly over `sources`,
/// iterated until the L1 change drops below `tol`.
pub fn personalized_pagerank(g: &Graph, sources: &[usize], restart: f64, tol: f64) -> Result<Vec<f64>> {
    if !(restart > 0.0 && restart <= 1.0) {
        return Err(Error::invalid(format!("restart probability {restart} outside (0, 1]")));
    }
    let n = g.node_count();
    if sources.is_empty() || sources.iter().any(|&s| s >= n) {
        return Err(Error::invalid("personalization sources must be valid nodes"));
    }
    let mut teleport = vec![0.0; n];
    for &s in sources {
        teleport[s] += 1.0 / sources.len() as f64;
    }
    let degrees = g.degrees();
    let mut rank = teleport.clone();
    for _ in 0..100_000 {
        let mut next: Vec<f64> = teleport.iter().map(|t| restart * t).collect();
        let mut dangling = 0.0;
        for u in 0..n {
            if degrees[u] == 0 {
                dangling += rank[u];
                continue;
            }
            let share = (1.0 - restart) * rank[u] / degrees[u] as f64;
            for v in g.neighbors(u) {
                next[v] += share;
            }
        }
        if dangling > 0.0 {
            for (x, t) in next.iter_mut().zip(&teleport) {
                *x += (1.0 - restart) * dangling * t;
            }
        }
        let diff: f64 = next.iter().zip(&rank).map(|(a, b)| (a - b).abs()).sum();
        rank = next;
        if diff < tol {
            return Ok(rank);
        }
    }
    Err(Error::Numeric("personalized PageRank did not converge".into()))
}

/// Candidate sequence `(a, x1), (b, x1), (a, x2), ...` over nodes ranked by
/// PageRank personalized on `{a, b}`, with the node's score attached.
pub fn ppr_candidate_order(g: &Graph, a: usize, b: usize, restart: f64) -> Result<Vec<(Pair, f64)>> {
    let rank = personalized_pagerank(g, &[a, b], restart, 1e-10)?;
    let mut nodes: Vec<usize> = (0..g.node_count()).filter(|&x| x != a && x != b).collect();
    nodes.sort_by(|&x, &y| rank[y].total_cmp(&rank[x]).then(x.cmp(&y)));
    Ok(nodes
        .into_iter()
        .flat_map(|x| [(ordered(a, x), rank[x]), (ordered(b, x), rank[x])])
        .collect())
}

pub fn ppr_attack(g: &Graph, spec: &AttackSpec, restart: f64) -> Result<Perturbation> {
    let Goal::Integrity { target: (a, b), .. } = spec.goal else {
        return Err(Error::invalid("personalized PageRank baseline needs an integrity target"));
    };
    let mask = spec.mask(g.node_count());
    let want_edge = spec.action == Action::Delete;
    let ranked = ppr_candidate_order(g, a, b, restart)?
        .into_iter()
        .filter(|&((u, v), _)| mask.get(u, v) && g.has_edge(u, v) == want_edge);
    select_feasible(g, spec.action, spec.budget, ranked)
}

/// Candidates ranked by `deg(u) + deg(v)`, largest first.
pub fn degree_sum_attack(g: &Graph, spec: &AttackSpec) -> Result<Perturbation> {
    let deg = g.degrees();
    let mut ranked: Vec<(Pair, f64)> = spec
        .candidates(g)
        .into_iter()
        .map(|(u, v)| ((u, v), (deg[u] + deg[v]) as f64))
        .collect();
    ranked.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    select_feasible(g, spec.action, spec.budget, ranked)
}

/// For every edge, the number of unordered node pairs `{s, t}` having at
/// least one shortest path through it.
///
/// From each source, edge `u -> v` of the BFS DAG lies on a shortest path to
/// exactly the DAG descendants of `v` (including `v`). Each pair is seen
/// from both endpoints, hence the final halving.
pub fn shortest_path_scores(g: &Graph) -> HashMap<Pair, u64> {
    let n = g.node_count();
    let mut counts: HashMap<Pair, u64> = g.edges().map(|e| (e, 0)).collect();
    let mut dist = vec![usize::MAX; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    let mut desc: Vec<FixedBitSet> = vec![FixedBitSet::with_capacity(n); n];

    for s in 0..n {
        dist.fill(usize::MAX);
        order.clear();
        dist[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for v in g.neighbors(u) {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        for &v in order.iter().rev() {
            let mut set = std::mem::take(&mut desc[v]);
            set.clear();
            set.grow(n);
            set.insert(v);
            for w in g.neighbors(v) {
                if dist[w] == dist[v] + 1 {
                    set.union_with(&desc[w]);
                    *counts.get_mut(&ordered(v, w)).expect("edge") += desc[w].count_ones(..) as u64;
                }
            }
            desc[v] = set;
        }
    }
    for c in counts.values_mut() {
        debug_assert!(*c % 2 == 0);
        *c /= 2;
    }
    counts
}

pub fn shortest_path_attack(g: &Graph, spec: &AttackSpec) -> Result<Perturbation> {
    if spec.action != Action::Delete {
        return Err(Error::invalid("shortest-path baseline only deletes edges"));
    }
    let scores = shortest_path_scores(g);
    let mut ranked: Vec<(Pair, f64)> = spec
        .candidates(g)
        .into_iter()
        .map(|p| (p, scores[&p] as f64))
        .collect();
    ranked.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    select_feasible(g, spec.action, spec.budget, ranked)
}
