//! Link-prediction evaluation and experiment orchestration.
//!
//! Every experiment cell (seed x attack) is a pure function of the input
//! graph, the configuration and the seed, so cells run on a bounded worker
//! pool and are reassembled in a fixed order.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{pgd, project_discrete, AttackSpec, Constraint, Direction, PgdParams};
use crate::baseline::{run_baseline, BaselineKind, DEFAULT_RESTART};
use crate::error::{Error, Result};
use crate::factorize::{factorize, inner_product_scores, score_pairs, AlsConfig, Embedding};
use crate::graph::{apply_perturbation, split_links, Action, Graph, LinkSplit, Pair, Perturbation};
use crate::proximity::{build_z, Method, ProximitySpec};
use crate::seed::{derive_seed, rng_for, streams};

/// Average precision of a ranking by descending score. Tied scores place
/// positives after negatives, so the value is a deterministic lower bound.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    let positives = labels.iter().filter(|&&l| l != 0).count();
    if positives == 0 {
        return Err(Error::invalid("average precision needs at least one positive label"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then((labels[a] != 0).cmp(&(labels[b] != 0)))
    });
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &idx) in order.iter().enumerate() {
        if labels[idx] != 0 {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

/// Gradient attack or one of the baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMethod {
    Opt,
    Random,
    Ppr,
    DegreeSum,
    ShortestPath,
}

impl AttackMethod {
    pub fn name(self) -> &'static str {
        match self {
            AttackMethod::Opt => "opt",
            AttackMethod::Random => "random",
            AttackMethod::Ppr => "ppr",
            AttackMethod::DegreeSum => "degree_sum",
            AttackMethod::ShortestPath => "shortest_path",
        }
    }

    pub fn baseline(self) -> Option<BaselineKind> {
        match self {
            AttackMethod::Opt => None,
            AttackMethod::Random => Some(BaselineKind::Random),
            AttackMethod::Ppr => Some(BaselineKind::Ppr),
            AttackMethod::DegreeSum => Some(BaselineKind::DegreeSum),
            AttackMethod::ShortestPath => Some(BaselineKind::ShortestPath),
        }
    }
}

impl std::str::FromStr for AttackMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "opt" => AttackMethod::Opt,
            "random" => AttackMethod::Random,
            "ppr" => AttackMethod::Ppr,
            "degree_sum" | "degree-sum" => AttackMethod::DegreeSum,
            "shortest_path" | "shortest-path" => AttackMethod::ShortestPath,
            other => return Err(Error::invalid(format!("unknown attack {other:?}"))),
        })
    }
}

/// Produces the perturbation for `spec` with the chosen attack. For the
/// gradient attack, returns the PGD loss trace as well.
pub fn generate_perturbation(
    method: AttackMethod,
    g: &Graph,
    spec: &AttackSpec,
    prox: &ProximitySpec,
    als: &AlsConfig,
    ppr_restart: f64,
    seed: u64,
) -> Result<(Perturbation, Vec<f64>)> {
    match method.baseline() {
        Some(kind) => Ok((run_baseline(kind, g, spec, ppr_restart, seed)?, Vec::new())),
        None => {
            let out = pgd(g, spec, prox, als, seed)?;
            Ok((project_discrete(&out.relaxed, spec, g)?, out.loss_trace))
        }
    }
}

/// Ridge used by experiments. A near-zero ridge leaves the split between X
/// and Y (any invertible d x d transform) to the initialization, and cosine
/// scores on X then vary from seed to seed.
pub const EXPERIMENT_RIDGE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub proximity: ProximitySpec,
    pub als: AlsConfig,
    /// ALS settings for the scoring method of a transfer run; `als` when
    /// unset. Rows of a LINE matrix observe far fewer cells than DeepWalk
    /// rows, so the two usually want different ridges.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_als: Option<AlsConfig>,
    pub pgd: PgdParams,
    pub holdout: f64,
    pub budgets: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Integrity targets per seed.
    pub n_targets: usize,
    pub ppr_restart: f64,
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            proximity: ProximitySpec::default(),
            als: AlsConfig {
                ridge: EXPERIMENT_RIDGE,
                ..AlsConfig::default()
            },
            target_als: None,
            pgd: PgdParams::default(),
            holdout: 0.15,
            budgets: vec![25, 50, 100, 150, 200, 250, 300],
            seeds: vec![0, 1, 2, 3, 4],
            n_targets: 8,
            ppr_restart: DEFAULT_RESTART,
            workers: 1,
        }
    }
}

impl ExperimentConfig {
    /// The 32-target integrity protocol.
    pub fn full_protocol() -> Self {
        ExperimentConfig {
            n_targets: 32,
            ..Self::default()
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        self.proximity.validate(n)?;
        self.pgd.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::invalid("at least one seed is required"));
        }
        if self.budgets.is_empty() {
            return Err(Error::invalid("at least one budget is required"));
        }
        if !(self.holdout > 0.0 && self.holdout < 1.0) {
            return Err(Error::invalid("holdout fraction must lie in (0, 1)"));
        }
        if self.workers == 0 {
            return Err(Error::invalid("workers must be at least 1"));
        }
        Ok(())
    }

    fn max_budget(&self) -> usize {
        self.budgets.iter().copied().max().unwrap_or(0)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::invalid(format!("worker pool: {e}")))
    }
}

/// Per-pair detail of an integrity run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetOutcome {
    pub seed: u64,
    pub target: Pair,
    pub budget: usize,
    pub cosine_delta: f64,
    pub inner_product_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub experiment: String,
    /// Embedding method the metric was measured under.
    pub method: Method,
    /// Embedding method the perturbation was computed against.
    pub source_method: Method,
    pub attack: String,
    pub action: Action,
    pub budgets: Vec<usize>,
    /// `"ap"` or `"cosine_delta"`.
    pub metric: String,
    /// Mean over seeds (and targets), aligned with `budgets`.
    pub metric_curve: Vec<f64>,
    pub metric_std: Vec<f64>,
    /// `per_seed[b][s]`: value for budget `b` under seed `s`.
    pub per_seed: Vec<Vec<f64>>,
    pub seeds: Vec<u64>,
    /// Clean metric (AP, or mean clean cosine score of the targets).
    pub baseline_clean: f64,
    pub failed: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<TargetOutcome>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Builds and factorizes `g` under `prox` with the ALS seed for `root`.
pub fn embed(g: &Graph, prox: &ProximitySpec, als: &AlsConfig, root: u64) -> Result<Embedding> {
    let model = build_z(g, prox)?;
    factorize(&model, derive_seed(root, streams::ALS_INIT, 0), als)
}

/// AP of cosine scores over the split's test pairs.
pub fn test_ap(emb: &Embedding, split: &LinkSplit) -> Result<f64> {
    let (pairs, labels) = split.test_pairs();
    average_precision(&score_pairs(emb, &pairs), &labels)
}

struct SeedContext {
    seed: u64,
    split: LinkSplit,
}

fn seed_contexts(g: &Graph, cfg: &ExperimentConfig) -> Result<Vec<SeedContext>> {
    cfg.seeds
        .iter()
        .map(|&seed| {
            let split = split_links(g, cfg.holdout, derive_seed(seed, streams::SPLIT, 0))?;
            Ok(SeedContext { seed, split })
        })
        .collect()
}

/// AP of each budget prefix of `pert`, evaluated under `prox`.
pub fn ap_curve(
    split: &LinkSplit,
    pert: &Perturbation,
    budgets: &[usize],
    prox: &ProximitySpec,
    als: &AlsConfig,
    root: u64,
) -> Result<Vec<f64>> {
    budgets
        .iter()
        .map(|&b| {
            if b > pert.len() {
                return Err(Error::Infeasible {
                    requested: b,
                    max_feasible: pert.len(),
                });
            }
            let poisoned = apply_perturbation(&split.train_graph, &pert.prefix(b))?;
            test_ap(&embed(&poisoned, prox, als, root)?, split)
        })
        .collect()
}

/// Availability attack: perturb the training graph to lower test AP.
/// Perturbations are computed under `source` and scored under `target`;
/// with `source == target` this is the plain availability protocol.
pub fn run_transfer_experiment(
    g: &Graph,
    source: &ProximitySpec,
    target: &ProximitySpec,
    attacks: &[AttackMethod],
    action: Action,
    cfg: &ExperimentConfig,
) -> Result<Vec<EvaluationReport>> {
    cfg.validate(g.node_count())?;
    source.validate(g.node_count())?;
    target.validate(g.node_count())?;
    let experiment = if source == target { "availability" } else { "transfer" };
    let scoring = cfg.target_als.unwrap_or(cfg.als);
    let contexts = seed_contexts(g, cfg)?;
    let pool = cfg.pool()?;

    let clean: Vec<f64> = pool.install(|| {
        contexts
            .par_iter()
            .map(|c| test_ap(&embed(&c.split.train_graph, target, &scoring, c.seed)?, &c.split))
            .collect::<Result<Vec<_>>>()
    })?;

    let cells: Vec<(usize, usize)> = (0..attacks.len())
        .flat_map(|a| (0..contexts.len()).map(move |s| (a, s)))
        .collect();
    let curves: Vec<Vec<f64>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(a, s)| {
                let c = &contexts[s];
                let spec = AttackSpec::availability(c.split.test_pos.clone(), c.split.test_neg.clone(), action, cfg.max_budget())
                    .with_params(cfg.pgd);
                let attack_seed = derive_seed(c.seed, streams::RANDOM_ATTACK, a as u64);
                let (pert, _) = generate_perturbation(
                    attacks[a],
                    &c.split.train_graph,
                    &spec,
                    source,
                    &cfg.als,
                    cfg.ppr_restart,
                    attack_seed,
                )?;
                ap_curve(&c.split, &pert, &cfg.budgets, target, &scoring, c.seed)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let baseline_clean = mean(&clean);
    Ok(attacks
        .iter()
        .enumerate()
        .map(|(a, method)| {
            let per_seed: Vec<Vec<f64>> = (0..cfg.budgets.len())
                .map(|b| (0..contexts.len()).map(|s| curves[a * contexts.len() + s][b]).collect())
                .collect();
            EvaluationReport {
                experiment: experiment.into(),
                method: target.method,
                source_method: source.method,
                attack: method.name().into(),
                action,
                budgets: cfg.budgets.clone(),
                metric: "ap".into(),
                metric_curve: per_seed.iter().map(|v| mean(v)).collect(),
                metric_std: per_seed.iter().map(|v| std_dev(v)).collect(),
                per_seed,
                seeds: cfg.seeds.clone(),
                baseline_clean,
                failed: 0,
                targets: Vec::new(),
            }
        })
        .collect())
}

pub fn run_availability_experiment(
    g: &Graph,
    prox: &ProximitySpec,
    attacks: &[AttackMethod],
    action: Action,
    cfg: &ExperimentConfig,
) -> Result<Vec<EvaluationReport>> {
    run_transfer_experiment(g, prox, prox, attacks, action, cfg)
}

/// Integrity attack: for sampled target pairs, measure the change in cosine
/// (and inner-product) score after poisoning.
pub fn run_integrity_experiment(
    g: &Graph,
    prox: &ProximitySpec,
    attacks: &[AttackMethod],
    direction: Direction,
    constraint: Constraint,
    action: Action,
    cfg: &ExperimentConfig,
) -> Result<Vec<EvaluationReport>> {
    use rand::seq::SliceRandom;

    cfg.validate(g.node_count())?;
    let contexts = seed_contexts(g, cfg)?;
    let pool = cfg.pool()?;

    struct Clean {
        emb: Embedding,
        targets: Vec<Pair>,
    }
    let cleans: Vec<Clean> = contexts
        .iter()
        .map(|c| {
            let pool = match direction {
                Direction::Up => &c.split.test_neg,
                Direction::Down => &c.split.test_pos,
            };
            if pool.len() < cfg.n_targets {
                return Err(Error::invalid(format!(
                    "only {} eligible targets for {} requested",
                    pool.len(),
                    cfg.n_targets
                )));
            }
            let mut rng = rng_for(c.seed, streams::TARGETS);
            let targets = pool.choose_multiple(&mut rng, cfg.n_targets).copied().collect();
            Ok(Clean {
                emb: embed(&c.split.train_graph, prox, &cfg.als, c.seed)?,
                targets,
            })
        })
        .collect::<Result<_>>()?;

    // cell = (attack, seed, target)
    let cells: Vec<(usize, usize, usize)> = (0..attacks.len())
        .flat_map(|a| (0..contexts.len()).flat_map(move |s| (0..cfg.n_targets).map(move |t| (a, s, t))))
        .collect();
    let outcomes: Vec<Option<Vec<TargetOutcome>>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(a, s, t)| {
                let c = &contexts[s];
                let target = cleans[s].targets[t];
                let spec = AttackSpec::integrity(target, direction, constraint, action, cfg.max_budget()).with_params(cfg.pgd);
                let attack_seed = derive_seed(c.seed, streams::RANDOM_ATTACK, (a * cfg.n_targets + t) as u64);
                let run = || -> Result<Vec<TargetOutcome>> {
                    let (pert, _) = generate_perturbation(
                        attacks[a],
                        &c.split.train_graph,
                        &spec,
                        prox,
                        &cfg.als,
                        cfg.ppr_restart,
                        attack_seed,
                    )?;
                    let before_cos = score_pairs(&cleans[s].emb, &[target])[0];
                    let before_ip = inner_product_scores(&cleans[s].emb, &[target])[0];
                    cfg.budgets
                        .iter()
                        .map(|&b| {
                            let poisoned = apply_perturbation(&c.split.train_graph, &pert.prefix(b))?;
                            let emb = embed(&poisoned, prox, &cfg.als, c.seed)?;
                            Ok(TargetOutcome {
                                seed: c.seed,
                                target,
                                budget: b,
                                cosine_delta: score_pairs(&emb, &[target])[0] - before_cos,
                                inner_product_delta: inner_product_scores(&emb, &[target])[0] - before_ip,
                            })
                        })
                        .collect()
                };
                match run() {
                    Ok(v) => Ok(Some(v)),
                    Err(Error::Infeasible { .. }) | Err(Error::InvalidEdit { .. }) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let clean_scores: Vec<f64> = cleans
        .iter()
        .flat_map(|c| score_pairs(&c.emb, &c.targets))
        .collect();
    let baseline_clean = mean(&clean_scores);
    let per_attack = contexts.len() * cfg.n_targets;
    Ok(attacks
        .iter()
        .enumerate()
        .map(|(a, method)| {
            let mine = &outcomes[a * per_attack..(a + 1) * per_attack];
            let failed = mine.iter().filter(|o| o.is_none()).count();
            let targets: Vec<TargetOutcome> = mine.iter().flatten().flatten().cloned().collect();
            let mut per_seed = Vec::with_capacity(cfg.budgets.len());
            let mut curve = Vec::with_capacity(cfg.budgets.len());
            let mut spread = Vec::with_capacity(cfg.budgets.len());
            for &b in &cfg.budgets {
                let at_b: Vec<&TargetOutcome> = targets.iter().filter(|o| o.budget == b).collect();
                let all: Vec<f64> = at_b.iter().map(|o| o.cosine_delta).collect();
                curve.push(mean(&all));
                spread.push(std_dev(&all));
                per_seed.push(
                    cfg.seeds
                        .iter()
                        .map(|&s| {
                            let v: Vec<f64> = at_b.iter().filter(|o| o.seed == s).map(|o| o.cosine_delta).collect();
                            mean(&v)
                        })
                        .collect(),
                );
            }
            EvaluationReport {
                experiment: "integrity".into(),
                method: prox.method,
                source_method: prox.method,
                attack: method.name().into(),
                action,
                budgets: cfg.budgets.clone(),
                metric: "cosine_delta".into(),
                metric_curve: curve,
                metric_std: spread,
                per_seed,
                seeds: cfg.seeds.clone(),
                baseline_clean,
                failed,
                targets,
            }
        })
        .collect())
}

/// Flat CSV: one row per report x budget x seed.
pub fn reports_to_csv(reports: &[EvaluationReport]) -> String {
    let mut out = String::from("experiment,method,source_method,attack,action,metric,budget,seed,value\n");
    for r in reports {
        for (b, &budget) in r.budgets.iter().enumerate() {
            for (s, &seed) in r.seeds.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    r.experiment, r.method, r.source_method, r.attack, r.action, r.metric, budget, seed, r.per_seed[b][s]
                );
            }
        }
    }
    out
}
