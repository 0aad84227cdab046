//! Undirected simple graphs, edge-list I/O, link-prediction splits and
//! application of edge perturbations.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{rng_for, streams};

/// An unordered node pair, stored with the smaller index first.
pub type Pair = (usize, usize);

/// Canonical (min, max) ordering of an unordered pair.
#[inline]
pub fn ordered(u: usize, v: usize) -> Pair {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Undirected simple graph. The edge set is the storage view; the dense
/// adjacency matrix is produced on demand for numerical work.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: BTreeSet<Pair>,
    neighbors: Vec<BTreeSet<usize>>,
    labels: Option<Vec<String>>,
}

impl Graph {
    /// Builds a graph from explicit edges. Reversed duplicates collapse;
    /// self-loops and out-of-range indices are rejected.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = Pair>) -> Result<Self> {
        let mut g = Graph {
            n,
            edges: BTreeSet::new(),
            neighbors: vec![BTreeSet::new(); n],
            labels: None,
        };
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidEdit {
                    pair: (u, v),
                    reason: format!("node index out of range for n = {n}"),
                });
            }
            if u == v {
                return Err(Error::InvalidEdit {
                    pair: (u, v),
                    reason: "self-loop".into(),
                });
            }
            g.insert(u, v);
        }
        Ok(g)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::invalid(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.n
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    fn insert(&mut self, u: usize, v: usize) -> bool {
        let fresh = self.edges.insert(ordered(u, v));
        if fresh {
            self.neighbors[u].insert(v);
            self.neighbors[v].insert(u);
        }
        fresh
    }

    fn remove(&mut self, u: usize, v: usize) -> bool {
        let gone = self.edges.remove(&ordered(u, v));
        if gone {
            self.neighbors[u].remove(&v);
            self.neighbors[v].remove(&u);
        }
        gone
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in lexicographic (min, max) order.
    pub fn edges(&self) -> impl Iterator<Item = Pair> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u != v && self.edges.contains(&ordered(u, v))
    }

    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        self.neighbors[u].iter().copied()
    }

    pub fn degree(&self, u: usize) -> usize {
        self.neighbors[u].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(BTreeSet::len).collect()
    }

    pub fn min_degree(&self) -> usize {
        self.neighbors.iter().map(BTreeSet::len).min().unwrap_or(0)
    }

    /// vol(G) = sum of all adjacency entries = 2 |E|.
    pub fn volume(&self) -> f64 {
        2.0 * self.edges.len() as f64
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Number of unordered non-adjacent node pairs.
    pub fn non_edge_count(&self) -> usize {
        self.n * self.n.saturating_sub(1) / 2 - self.edges.len()
    }

    /// Symmetric 0/1 adjacency matrix with zero diagonal.
    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for &(u, v) in &self.edges {
            a[(u, v)] = 1.0;
            a[(v, u)] = 1.0;
        }
        a
    }

    pub fn ensure_no_isolated(&self) -> Result<()> {
        match self.neighbors.iter().position(BTreeSet::is_empty) {
            Some(u) => Err(Error::IsolatedNode(u)),
            None => Ok(()),
        }
    }
}

/// Result of parsing an edge list, with the counts of input lines that were
/// folded away.
#[derive(Debug, Clone)]
pub struct ParsedEdgeList {
    pub graph: Graph,
    pub self_loops_dropped: usize,
    pub duplicates_collapsed: usize,
}

/// Parses a whitespace-separated edge list. Node tokens are re-indexed
/// densely in order of first appearance; `#` lines and blank lines are
/// skipped.
pub fn read_edge_list<R: BufRead>(reader: R) -> Result<ParsedEdgeList> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut labels: Vec<String> = Vec::new();
    let mut pairs: Vec<Pair> = Vec::new();
    let mut self_loops = 0usize;

    let mut intern = |tok: &str, labels: &mut Vec<String>| -> usize {
        if let Some(&id) = index.get(tok) {
            return id;
        }
        let id = labels.len();
        index.insert(tok.to_owned(), id);
        labels.push(tok.to_owned());
        id
    };

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected two node tokens, found {}", toks.len()),
            });
        }
        let u = intern(toks[0], &mut labels);
        let v = intern(toks[1], &mut labels);
        if u == v {
            self_loops += 1;
            continue;
        }
        pairs.push((u, v));
    }

    if pairs.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let n = labels.len();
    let raw = pairs.len();
    let graph = Graph::from_edges(n, pairs)?.with_labels(labels)?;
    let duplicates_collapsed = raw - graph.edge_count();
    Ok(ParsedEdgeList {
        graph,
        self_loops_dropped: self_loops,
        duplicates_collapsed,
    })
}

/// Loads an edge-list file, logging dropped self-loops.
pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Graph> {
    let file = File::open(path.as_ref())?;
    let parsed = read_edge_list(BufReader::new(file))?;
    if parsed.self_loops_dropped > 0 {
        log::warn!(
            "{}: dropped {} self-loop line(s)",
            path.as_ref().display(),
            parsed.self_loops_dropped
        );
    }
    Ok(parsed.graph)
}

/// A link-prediction holdout: the training graph plus positive/negative
/// pairs for the test and validation sets.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSplit {
    pub train_graph: Graph,
    pub test_pos: Vec<Pair>,
    pub test_neg: Vec<Pair>,
    pub val_pos: Vec<Pair>,
    pub val_neg: Vec<Pair>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LinkSplitRecord {
    pub train_edges: Vec<Pair>,
    pub test_pos: Vec<Pair>,
    pub test_neg: Vec<Pair>,
    pub val_pos: Vec<Pair>,
    pub val_neg: Vec<Pair>,
    pub seed: u64,
}

impl LinkSplit {
    pub fn to_record(&self) -> LinkSplitRecord {
        LinkSplitRecord {
            train_edges: self.train_graph.edges().collect(),
            test_pos: self.test_pos.clone(),
            test_neg: self.test_neg.clone(),
            val_pos: self.val_pos.clone(),
            val_neg: self.val_neg.clone(),
            seed: self.seed,
        }
    }

    /// Rebuilds a split. Node count is recovered from the largest index,
    /// which is sound because training graphs never contain isolated nodes.
    pub fn from_record(rec: LinkSplitRecord) -> Result<Self> {
        let n = rec
            .train_edges
            .iter()
            .chain(&rec.test_pos)
            .chain(&rec.test_neg)
            .chain(&rec.val_pos)
            .chain(&rec.val_neg)
            .map(|&(u, v)| u.max(v) + 1)
            .max()
            .ok_or(Error::EmptyGraph)?;
        let train_graph = Graph::from_edges(n, rec.train_edges)?;
        Ok(LinkSplit {
            train_graph,
            test_pos: rec.test_pos,
            test_neg: rec.test_neg,
            val_pos: rec.val_pos,
            val_neg: rec.val_neg,
            seed: rec.seed,
        })
    }

    /// Test pairs and their 0/1 labels, positives first.
    pub fn test_pairs(&self) -> (Vec<Pair>, Vec<u8>) {
        let mut pairs = self.test_pos.clone();
        pairs.extend_from_slice(&self.test_neg);
        let mut labels = vec![1u8; self.test_pos.len()];
        labels.resize(pairs.len(), 0);
        (pairs, labels)
    }
}

const SPLIT_RETRIES: usize = 16;

/// Removes `round(holdout_frac * |E|)` edges (never isolating a node), samples
/// as many non-edges, and divides both 2:1 between test and validation.
pub fn split_links(g: &Graph, holdout_frac: f64, seed: u64) -> Result<LinkSplit> {
    if !(holdout_frac > 0.0 && holdout_frac < 1.0) {
        return Err(Error::invalid(format!(
            "holdout fraction must lie in (0, 1), got {holdout_frac}"
        )));
    }
    g.ensure_no_isolated()?;
    let k = (holdout_frac * g.edge_count() as f64).round() as usize;
    if k == 0 {
        return Err(Error::Split("holdout rounds to zero edges".into()));
    }
    if g.non_edge_count() < k {
        return Err(Error::Split(format!(
            "need {k} negative pairs but the graph has only {} non-edges",
            g.non_edge_count()
        )));
    }

    let mut rng = rng_for(seed, streams::SPLIT);
    let all_edges: Vec<Pair> = g.edges().collect();
    let mut removed: Option<(Graph, Vec<Pair>)> = None;
    for _ in 0..SPLIT_RETRIES {
        let mut order = all_edges.clone();
        order.shuffle(&mut rng);
        let mut train = g.clone();
        let mut picked = Vec::with_capacity(k);
        for (u, v) in order {
            if picked.len() == k {
                break;
            }
            if train.degree(u) > 1 && train.degree(v) > 1 {
                train.remove(u, v);
                picked.push((u, v));
            }
        }
        if picked.len() == k {
            removed = Some((train, picked));
            break;
        }
    }
    let (train_graph, positives) = removed.ok_or_else(|| {
        Error::Split(format!(
            "could not remove {k} edges without isolating a node after {SPLIT_RETRIES} attempts"
        ))
    })?;

    let negatives = sample_non_edges(g, k, &mut rng);

    let n_test = (2 * k + 1) / 3;
    let (test_pos, val_pos) = positives.split_at(n_test);
    let (test_neg, val_neg) = negatives.split_at(n_test);
    Ok(LinkSplit {
        train_graph,
        test_pos: test_pos.to_vec(),
        test_neg: test_neg.to_vec(),
        val_pos: val_pos.to_vec(),
        val_neg: val_neg.to_vec(),
        seed,
    })
}

/// Uniform sample of `k` distinct non-edges; caller guarantees enough exist.
fn sample_non_edges<R: Rng>(g: &Graph, k: usize, rng: &mut R) -> Vec<Pair> {
    let n = g.node_count();
    let total = g.non_edge_count();
    if total >= 4 * k && total * 4 >= n * (n - 1) / 2 {
        let mut seen = HashSet::with_capacity(k);
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            let u = rng.gen_range(0..n);
            let v = rng.gen_range(0..n);
            if u == v || g.has_edge(u, v) {
                continue;
            }
            let p = ordered(u, v);
            if seen.insert(p) {
                out.push(p);
            }
        }
        out
    } else {
        let mut pool: Vec<Pair> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|&(u, v)| !g.has_edge(u, v))
            .collect();
        let (chosen, _) = pool.partial_shuffle(rng, k);
        chosen.to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Add,
    Delete,
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Action::Add => "add",
            Action::Delete => "delete",
        })
    }
}

/// Ordered edge edits; `scores[k]` is the ranking value that selected
/// `edits[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub action: Action,
    pub edits: Vec<Pair>,
    pub scores: Vec<f64>,
}

impl Perturbation {
    pub fn empty(action: Action) -> Self {
        Perturbation {
            action,
            edits: Vec::new(),
            scores: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.edits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }

    /// The first `budget` edits. Rankings are greedy, so a prefix of a
    /// larger perturbation is the perturbation for the smaller budget.
    pub fn prefix(&self, budget: usize) -> Perturbation {
        let k = budget.min(self.edits.len());
        Perturbation {
            action: self.action,
            edits: self.edits[..k].to_vec(),
            scores: self.scores[..k.min(self.scores.len())].to_vec(),
        }
    }
}

/// Applies edits to a copy of `g`. Additions must be non-edges, deletions
/// existing edges, and no deletion may leave a node with degree 0.
pub fn apply_perturbation(g: &Graph, p: &Perturbation) -> Result<Graph> {
    let mut out = g.clone();
    let mut seen = HashSet::with_capacity(p.edits.len());
    for &(u, v) in &p.edits {
        let bad = |reason: &str| Error::InvalidEdit {
            pair: (u, v),
            reason: reason.to_owned(),
        };
        if u >= g.n || v >= g.n {
            return Err(bad("node index out of range"));
        }
        if u == v {
            return Err(bad("self-loop"));
        }
        if !seen.insert(ordered(u, v)) {
            return Err(bad("duplicate edit"));
        }
        match p.action {
            Action::Add => {
                if !out.insert(u, v) {
                    return Err(bad("edge already present"));
                }
            }
            Action::Delete => {
                if !out.remove(u, v) {
                    return Err(bad("edge not present"));
                }
                if out.degree(u) == 0 || out.degree(v) == 0 {
                    return Err(bad("deletion would isolate a node"));
                }
            }
        }
    }
    Ok(out)
}
