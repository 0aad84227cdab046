use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use embedpoison::attack::{AttackRecord, AttackSpec, Goal, PgdParams};
use embedpoison::eval::{
    ap_curve, embed, generate_perturbation, reports_to_csv, run_availability_experiment, run_integrity_experiment,
    run_transfer_experiment, test_ap, AttackMethod, EvaluationReport, ExperimentConfig,
};
use embedpoison::factorize::{inner_product_scores, score_pairs, AlsConfig};
use embedpoison::generate::stochastic_block_model;
use embedpoison::graph::{apply_perturbation, load_edge_list, split_links, LinkSplitRecord};
use embedpoison::seed::{derive_seed, streams};
use embedpoison::{Error, Graph, LinkSplit, ProximitySpec, Result};
use serde::{Deserialize, Serialize};

use crate::config::{parse_action, parse_constraint, parse_direction, parse_target, ExperimentKind, RunConfig};
use crate::{AttackArgs, EvaluateArgs, ExperimentArgs, SbmArgs, SplitArgs};

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn load_split(path: &Path, g: &Graph) -> Result<LinkSplit> {
    let rec: LinkSplitRecord = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    let split = LinkSplit::from_record(rec)?;
    if split.train_graph.node_count() != g.node_count() {
        return Err(Error::invalid(format!(
            "{} has {} nodes but the graph has {}",
            path.display(),
            split.train_graph.node_count(),
            g.node_count()
        )));
    }
    Ok(split)
}

/// Output directory that may only be reused with `--force`.
fn prepare_out_dir(dir: &Path, force: bool) -> Result<(PathBuf, PathBuf)> {
    let json = dir.join("report.json");
    let csv = dir.join("report.csv");
    if !force && (json.exists() || csv.exists()) {
        return Err(Error::invalid(format!(
            "{} already holds a report; pass --force to overwrite",
            dir.display()
        )));
    }
    fs::create_dir_all(dir)?;
    Ok((json, csv))
}

pub fn split(a: &SplitArgs) -> Result<()> {
    let g = load_edge_list(&a.graph)?;
    let s = split_links(&g, a.holdout, derive_seed(a.seed, streams::SPLIT, 0))?;
    write_json(&a.out, &s.to_record())?;
    println!(
        "nodes {} edges {} train {} test {}+{} val {}+{}",
        g.node_count(),
        g.edge_count(),
        s.train_graph.edge_count(),
        s.test_pos.len(),
        s.test_neg.len(),
        s.val_pos.len(),
        s.val_neg.len()
    );
    Ok(())
}

/// Settings of an attack run, echoed into its output.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct AttackEcho {
    graph: PathBuf,
    split: Option<PathBuf>,
    holdout: f64,
    attack: AttackMethod,
    seed: u64,
    ppr_restart: f64,
    proximity: ProximitySpec,
    als: AlsConfig,
}

#[derive(Debug, Serialize, Deserialize)]
struct AttackFile {
    config: Option<AttackEcho>,
    #[serde(flatten)]
    record: AttackRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    perturbation_labels: Option<Vec<(String, String)>>,
}

pub fn attack(a: &AttackArgs) -> Result<()> {
    let g = load_edge_list(&a.graph)?;
    let mut prox = ProximitySpec::default();
    let mut als = ExperimentConfig::default().als;
    a.prox.apply(&mut prox, &mut als)?;
    let mut params = PgdParams::default();
    a.pgd.apply(&mut params);
    let method: AttackMethod = a.attack.parse()?;
    let action = parse_action(&a.action)?;

    let split = match &a.split {
        Some(p) => Some(load_split(p, &g)?),
        None => None,
    };
    let (attacked, spec) = match a.goal.as_str() {
        "integrity" => {
            let target = a
                .target
                .as_deref()
                .ok_or_else(|| Error::invalid("integrity attacks need --target u,v"))?;
            let target = parse_target(target, &g)?;
            let spec = AttackSpec::integrity(
                target,
                parse_direction(&a.direction)?,
                parse_constraint(&a.constraint)?,
                action,
                a.budget,
            );
            let attacked = split.map(|s| s.train_graph).unwrap_or(g.clone());
            (attacked, spec)
        }
        "availability" => {
            if parse_constraint(&a.constraint)? != embedpoison::attack::Constraint::None {
                return Err(Error::invalid("availability attacks take no --constraint"));
            }
            let split = match split {
                Some(s) => s,
                None => split_links(&g, a.holdout, derive_seed(a.seed, streams::SPLIT, 0))?,
            };
            let spec = AttackSpec::availability(split.test_pos.clone(), split.test_neg.clone(), action, a.budget);
            (split.train_graph, spec)
        }
        other => return Err(Error::invalid(format!("goal must be integrity or availability, got {other:?}"))),
    };
    let spec = spec.with_params(params);
    spec.validate(attacked.node_count())?;
    if let Some(kind) = method.baseline() {
        kind.check(&spec)?;
    } else {
        prox.validate(attacked.node_count())?;
    }

    let start = Instant::now();
    let (pert, loss_trace) = generate_perturbation(
        method,
        &attacked,
        &spec,
        &prox,
        &als,
        a.restart,
        derive_seed(a.seed, streams::RANDOM_ATTACK, 0),
    )?;
    let wall_time = start.elapsed().as_secs_f64();
    log::info!("{} edits in {wall_time:.2}s", pert.len());

    let perturbation_labels = g.labels().map(|l| {
        pert.edits
            .iter()
            .map(|&(u, v)| (l[u].clone(), l[v].clone()))
            .collect()
    });
    let out = AttackFile {
        config: Some(AttackEcho {
            graph: a.graph.clone(),
            split: a.split.clone(),
            holdout: a.holdout,
            attack: method,
            seed: a.seed,
            ppr_restart: a.restart,
            proximity: prox,
            als,
        }),
        record: AttackRecord {
            attack: method.name().into(),
            spec,
            loss_trace,
            wall_time,
            perturbation: pert.edits,
            scores: pert.scores,
        },
        perturbation_labels,
    };
    write_json(&a.out, &out)
}

#[derive(Debug, Serialize)]
struct EvaluateEcho<'a> {
    graph: &'a Path,
    split: &'a Path,
    perturbations: &'a [PathBuf],
    seed: u64,
    proximity: ProximitySpec,
    als: AlsConfig,
}

#[derive(Debug, Serialize)]
struct ReportFile<C: Serialize> {
    config: C,
    reports: Vec<EvaluationReport>,
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let g = load_edge_list(&a.graph)?;
    let split = load_split(&a.split, &g)?;
    let mut prox = ProximitySpec::default();
    let mut als = ExperimentConfig::default().als;
    a.prox.apply(&mut prox, &mut als)?;
    prox.validate(g.node_count())?;
    let files: Vec<AttackFile> = a
        .perturbations
        .iter()
        .map(|p| Ok(serde_json::from_reader(BufReader::new(File::open(p)?))?))
        .collect::<Result<_>>()?;
    let (json_path, csv_path) = prepare_out_dir(&a.out, a.force)?;

    let clean = embed(&split.train_graph, &prox, &als, a.seed)?;
    let clean_ap = test_ap(&clean, &split)?;
    let mut reports = Vec::new();
    if files.is_empty() {
        reports.push(EvaluationReport {
            experiment: "clean".into(),
            method: prox.method,
            source_method: prox.method,
            attack: "none".into(),
            action: embedpoison::Action::Add,
            budgets: vec![0],
            metric: "ap".into(),
            metric_curve: vec![clean_ap],
            metric_std: vec![0.0],
            per_seed: vec![vec![clean_ap]],
            seeds: vec![a.seed],
            baseline_clean: clean_ap,
            failed: 0,
            targets: Vec::new(),
        });
    }
    for f in &files {
        let pert = f.record.to_perturbation();
        let budgets = if a.budgets.is_empty() { vec![pert.len()] } else { a.budgets.clone() };
        let source_method = f.config.as_ref().map_or(prox.method, |c| c.proximity.method);
        let (experiment, metric, curve, baseline_clean, targets) = match &f.record.spec.goal {
            Goal::Availability { .. } => (
                "availability",
                "ap",
                ap_curve(&split, &pert, &budgets, &prox, &als, a.seed)?,
                clean_ap,
                Vec::new(),
            ),
            Goal::Integrity { target, .. } => {
                let before_cos = score_pairs(&clean, &[*target])[0];
                let before_ip = inner_product_scores(&clean, &[*target])[0];
                let mut curve = Vec::new();
                let mut targets = Vec::new();
                for &b in &budgets {
                    if b > pert.len() {
                        return Err(Error::Infeasible {
                            requested: b,
                            max_feasible: pert.len(),
                        });
                    }
                    let poisoned = apply_perturbation(&split.train_graph, &pert.prefix(b))?;
                    let emb = embed(&poisoned, &prox, &als, a.seed)?;
                    let delta = score_pairs(&emb, &[*target])[0] - before_cos;
                    curve.push(delta);
                    targets.push(embedpoison::eval::TargetOutcome {
                        seed: a.seed,
                        target: *target,
                        budget: b,
                        cosine_delta: delta,
                        inner_product_delta: inner_product_scores(&emb, &[*target])[0] - before_ip,
                    });
                }
                ("integrity", "cosine_delta", curve, before_cos, targets)
            }
        };
        reports.push(EvaluationReport {
            experiment: experiment.into(),
            method: prox.method,
            source_method,
            attack: f.record.attack.clone(),
            action: pert.action,
            budgets,
            metric: metric.into(),
            metric_std: vec![0.0; curve.len()],
            per_seed: curve.iter().map(|&v| vec![v]).collect(),
            metric_curve: curve,
            seeds: vec![a.seed],
            baseline_clean,
            failed: 0,
            targets,
        });
    }

    println!("clean ap {clean_ap:.4}");
    for r in &reports {
        println!("{} {}: {:?}", r.attack, r.metric, r.metric_curve);
    }
    let echo = EvaluateEcho {
        graph: &a.graph,
        split: &a.split,
        perturbations: &a.perturbations,
        seed: a.seed,
        proximity: prox,
        als,
    };
    fs::write(&csv_path, reports_to_csv(&reports))?;
    write_json(&json_path, &ReportFile { config: echo, reports })
}

fn check_attacks(cfg: &RunConfig) -> Result<()> {
    let template = match cfg.kind {
        ExperimentKind::Integrity => AttackSpec::integrity(
            (0, 1),
            cfg.direction.unwrap_or(embedpoison::attack::Direction::Up),
            cfg.constraint.unwrap_or(embedpoison::attack::Constraint::None),
            cfg.action,
            1,
        ),
        _ => AttackSpec::availability(vec![(0, 1)], Vec::new(), cfg.action, 1),
    };
    for m in &cfg.attacks {
        if let Some(kind) = m.baseline() {
            kind.check(&template)?;
        }
    }
    Ok(())
}

pub fn experiment(a: &ExperimentArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(g) = &a.graph {
        cfg.graph = g.clone();
    }
    if !a.budgets.is_empty() {
        cfg.experiment.budgets = a.budgets.clone();
    }
    if !a.seeds.is_empty() {
        cfg.experiment.seeds = a.seeds.clone();
    }
    if let Some(w) = a.workers {
        cfg.experiment.workers = w;
    }
    a.prox.apply(&mut cfg.experiment.proximity, &mut cfg.experiment.als)?;
    a.pgd.apply(&mut cfg.experiment.pgd);
    if a.out.is_some() {
        cfg.out = a.out.clone();
    }
    cfg.check()?;
    check_attacks(&cfg)?;
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| Error::invalid("no output directory: set `out` or pass --out"))?;
    let g = load_edge_list(&cfg.graph)?;
    let ex = &cfg.experiment;
    ex.validate(g.node_count())?;
    cfg.target_proximity().validate(g.node_count())?;
    let (json_path, csv_path) = prepare_out_dir(&out, a.force)?;

    let start = Instant::now();
    let reports = match cfg.kind {
        ExperimentKind::Availability => run_availability_experiment(&g, &ex.proximity, &cfg.attacks, cfg.action, ex)?,
        ExperimentKind::Transfer => {
            run_transfer_experiment(&g, &ex.proximity, &cfg.target_proximity(), &cfg.attacks, cfg.action, ex)?
        }
        ExperimentKind::Integrity => run_integrity_experiment(
            &g,
            &ex.proximity,
            &cfg.attacks,
            cfg.direction.unwrap_or(embedpoison::attack::Direction::Up),
            cfg.constraint.unwrap_or(embedpoison::attack::Constraint::Direct),
            cfg.action,
            ex,
        )?,
    };
    log::info!("experiment finished in {:.1}s", start.elapsed().as_secs_f64());
    for r in &reports {
        println!("{} {}: {:?}", r.attack, r.metric, r.metric_curve);
    }
    fs::write(&csv_path, reports_to_csv(&reports))?;
    write_json(&json_path, &ReportFile { config: &cfg, reports })
}

pub fn generate_sbm(a: &SbmArgs) -> Result<()> {
    let g = stochastic_block_model(&vec![a.block_size; a.blocks], a.p_in, a.p_out, a.seed)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(&a.out)?);
    writeln!(w, "# sbm blocks={} size={} p_in={} p_out={} seed={}", a.blocks, a.block_size, a.p_in, a.p_out, a.seed)?;
    for (u, v) in g.edges() {
        writeln!(w, "{u} {v}")?;
    }
    w.flush()?;
    println!("nodes {} edges {}", g.node_count(), g.edge_count());
    Ok(())
}
