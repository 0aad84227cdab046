use std::collections::{BTreeSet, HashMap, VecDeque};
use std::io::Cursor;

use embedpoison::attack::{pgd, AttackSpec, Constraint, Direction, PgdParams};
use embedpoison::baseline::shortest_path_scores;
use embedpoison::eval::average_precision;
use embedpoison::factorize::{factorize, score_pairs, AlsConfig};
use embedpoison::generate::{erdos_renyi, stochastic_block_model};
use embedpoison::graph::{apply_perturbation, read_edge_list, split_links};
use embedpoison::proximity::build_z;
use embedpoison::{Action, Graph, Pair, Perturbation, ProximitySpec};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn connected_er(n: usize, p: f64, seed: u64) -> Graph {
    erdos_renyi(n, p, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn add_then_delete_round_trips(seed in 0u64..10_000, n in 6usize..14, picks in 1usize..6) {
        let g = connected_er(n, 0.3, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut non_edges: Vec<Pair> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|&(u, v)| !g.has_edge(u, v))
            .collect();
        non_edges.shuffle(&mut rng);
        non_edges.truncate(picks);
        let add = Perturbation { action: Action::Add, edits: non_edges.clone(), scores: vec![0.0; non_edges.len()] };
        let del = Perturbation { action: Action::Delete, edits: non_edges.clone(), scores: vec![0.0; non_edges.len()] };
        let back = apply_perturbation(&apply_perturbation(&g, &add).unwrap(), &del).unwrap();
        prop_assert_eq!(back.edges().collect::<Vec<_>>(), g.edges().collect::<Vec<_>>());
    }

    #[test]
    fn loader_is_invariant_under_line_shuffling(seed in 0u64..10_000) {
        let g = connected_er(15, 0.25, seed);
        let mut lines: Vec<String> = g.edges().map(|(u, v)| format!("n{u} n{v}")).collect();
        let a = read_edge_list(Cursor::new(lines.join("\n"))).unwrap().graph;
        lines.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0xabc));
        let b = read_edge_list(Cursor::new(lines.join("\n"))).unwrap().graph;
        prop_assert_eq!(a.edge_count(), b.edge_count());
        let mut da = a.degrees();
        let mut db = b.degrees();
        da.sort_unstable();
        db.sort_unstable();
        prop_assert_eq!(da, db);
    }

    #[test]
    fn ap_is_invariant_under_monotone_transforms(seed in 0u64..10_000, len in 2usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores: Vec<f64> = (0..len).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mut labels: Vec<u8> = (0..len).map(|_| rng.gen_range(0..2)).collect();
        labels[0] = 1;
        let base = average_precision(&scores, &labels).unwrap();
        let exp: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        let affine: Vec<f64> = scores.iter().map(|s| 3.0 * s + 7.0).collect();
        let cubed: Vec<f64> = scores.iter().map(|s| s.powi(3)).collect();
        prop_assert_eq!(base, average_precision(&exp, &labels).unwrap());
        prop_assert_eq!(base, average_precision(&affine, &labels).unwrap());
        prop_assert_eq!(base, average_precision(&cubed, &labels).unwrap());
    }

    #[test]
    fn shortest_path_pair_counts_match_brute_force(seed in 0u64..10_000, n in 3usize..13, p in 0.15f64..0.6) {
        let g = connected_er(n, p, seed);
        let fast = shortest_path_scores(&g);
        let slow = brute_force_pair_counts(&g);
        for (u, v) in g.edges() {
            prop_assert_eq!(fast.get(&(u, v)).copied().unwrap_or(0), slow[&(u, v)], "edge ({}, {})", u, v);
        }
    }
}

/// Number of unordered node pairs {s, t} with some shortest s-t path
/// through each edge, by checking dist(s,u) + 1 + dist(v,t) == dist(s,t).
fn brute_force_pair_counts(g: &Graph) -> HashMap<Pair, u64> {
    let n = g.node_count();
    let dist: Vec<Vec<Option<usize>>> = (0..n)
        .map(|s| {
            let mut d = vec![None; n];
            d[s] = Some(0);
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for w in g.neighbors(u) {
                    if d[w].is_none() {
                        d[w] = Some(d[u].unwrap() + 1);
                        q.push_back(w);
                    }
                }
            }
            d
        })
        .collect();
    let mut out = HashMap::new();
    for (u, v) in g.edges() {
        let mut count = 0;
        for s in 0..n {
            for t in s + 1..n {
                let Some(st) = dist[s][t] else { continue };
                let on = |a: usize, b: usize| match (dist[s][a], dist[b][t]) {
                    (Some(x), Some(y)) => x + 1 + y == st,
                    _ => false,
                };
                if on(u, v) || on(v, u) {
                    count += 1;
                }
            }
        }
        out.insert((u, v), count);
    }
    out
}

#[test]
fn split_keeps_min_degree_over_many_seeds() {
    let graphs = [
        stochastic_block_model(&[20, 20, 20], 0.3, 0.02, 1).unwrap(),
        erdos_renyi(60, 0.08, 2).unwrap(),
        stochastic_block_model(&[10; 8], 0.5, 0.01, 3).unwrap(),
    ];
    for g in &graphs {
        let expected = (0.15 * g.edge_count() as f64).round() as usize;
        for seed in 0..100 {
            let s = split_links(g, 0.15, seed).unwrap();
            assert!(s.train_graph.min_degree() >= 1, "seed {seed}");
            assert_eq!(s.test_pos.len() + s.val_pos.len(), expected);
            assert_eq!(s.test_neg.len(), s.test_pos.len());
            assert_eq!(s.val_neg.len(), s.val_pos.len());
            let all: BTreeSet<Pair> = s
                .test_pos
                .iter()
                .chain(&s.val_pos)
                .chain(&s.test_neg)
                .chain(&s.val_neg)
                .copied()
                .collect();
            assert_eq!(all.len(), 2 * expected);
            for &(u, v) in s.test_pos.iter().chain(&s.val_pos) {
                assert!(g.has_edge(u, v) && !s.train_graph.has_edge(u, v));
            }
            for &(u, v) in s.test_neg.iter().chain(&s.val_neg) {
                assert!(!g.has_edge(u, v));
            }
        }
    }
}

#[test]
fn split_is_deterministic() {
    let g = stochastic_block_model(&[15, 15], 0.3, 0.05, 9).unwrap();
    assert_eq!(split_links(&g, 0.15, 4).unwrap(), split_links(&g, 0.15, 4).unwrap());
}

#[test]
fn random_scores_give_ap_near_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let labels: Vec<u8> = (0..200).map(|i| (i % 2) as u8).collect();
    let runs: Vec<f64> = (0..1000)
        .map(|_| {
            let scores: Vec<f64> = (0..200).map(|_| rng.gen()).collect();
            average_precision(&scores, &labels).unwrap()
        })
        .collect();
    let mean = runs.iter().sum::<f64>() / runs.len() as f64;
    assert!((mean - 0.5).abs() < 0.05, "mean AP {mean}");
}

#[test]
fn triangle_scores_are_symmetric() {
    let g = Graph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
    let model = build_z(&g, &ProximitySpec::line(1.0, 2)).unwrap();
    let emb = factorize(&model, 1, &AlsConfig::default()).unwrap();
    let s = score_pairs(&emb, &[(0, 1), (1, 0), (1, 2), (2, 1)]);
    assert_eq!(s[0], s[1]);
    assert_eq!(s[2], s[3]);
}

/// Mean loss over the first and last 10 of 30 PGD iterations.
fn loss_windows(seed: u64, step_size: f64) -> (f64, f64) {
    let als = AlsConfig {
        ridge: embedpoison::eval::EXPERIMENT_RIDGE,
        ..AlsConfig::default()
    };
    let g = stochastic_block_model(&[25, 25], 0.25, 0.03, seed).unwrap();
    let target = (0..50)
        .flat_map(|u| (u + 1..50).map(move |v| (u, v)))
        .find(|&(u, v)| u < 25 && v >= 25 && !g.has_edge(u, v))
        .unwrap();
    let spec = AttackSpec::integrity(target, Direction::Up, Constraint::None, Action::Add, 5).with_params(PgdParams {
        iterations: 30,
        step_size,
        ..PgdParams::default()
    });
    let out = pgd(&g, &spec, &ProximitySpec::deepwalk(3, 1.0, 4), &als, 5).unwrap();
    let t = &out.loss_trace;
    (t[..10].iter().sum::<f64>() / 10.0, t[20..].iter().sum::<f64>() / 10.0)
}

#[test]
fn pgd_loss_trends_down_at_default_step() {
    let step = PgdParams::default().step_size;
    let drift: Vec<f64> = [21, 22, 23]
        .iter()
        .map(|&s| {
            let (first, last) = loss_windows(s, step);
            last - first
        })
        .collect();
    assert!(drift.iter().sum::<f64>() <= 0.0, "{drift:?}");
}

#[test]
fn pgd_loss_trends_down_on_every_graph_at_smaller_step() {
    for seed in [21, 22, 23] {
        let (first, last) = loss_windows(seed, 0.3);
        assert!(last <= first, "seed {seed}: {first} -> {last}");
    }
}
