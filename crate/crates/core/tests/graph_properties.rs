//! Graph construction and walk invariants, plus the walk-file contract
//! shared with external walkers.

use std::collections::BTreeMap;
use std::fs;

use proptest::prelude::*;
use stancelab::gnnembed::{
    generate_walks, read_walks, transition_probs, validate_walk_file, validate_walks, write_walks, WalkConfig,
    WalkCorpus, WalkStrategy,
};
use stancelab::netgraph::{
    build_graph, graph_stats, load_edge_list, write_edge_list, InteractionGraph, Relation, RelationRecord,
};

fn records() -> impl Strategy<Value = Vec<RelationRecord>> {
    prop::collection::vec((0u8..12, 0u8..12, 0usize..4), 0..80).prop_map(|v| {
        v.into_iter()
            .map(|(s, d, r)| RelationRecord::new(format!("u{s}"), format!("u{d}"), Relation::ALL[r]))
            .collect()
    })
}

fn edges_of(g: &InteractionGraph) -> Vec<(String, String, f64)> {
    g.edges().map(|(s, d, w)| (g.node_name(s).to_string(), g.node_name(d).to_string(), w)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn weights_degrees_and_order(recs in records(), friendship in any::<bool>(), seed in any::<u64>()) {
        let g = build_graph(&recs, friendship);
        for (_, _, w) in g.edges() {
            prop_assert!((1.0..=4.0).contains(&w));
        }
        let s = graph_stats(&g);
        prop_assert_eq!(s.avg_in_degree, s.avg_out_degree);

        let mut doubled = recs.clone();
        doubled.extend(recs.iter().cloned());
        prop_assert_eq!(edges_of(&build_graph(&doubled, friendship)), edges_of(&g));

        let mut shuffled = recs.clone();
        let mut st = seed;
        for i in (1..shuffled.len()).rev() {
            st = st.wrapping_mul(6364136223846793005).wrapping_add(1);
            shuffled.swap(i, (st >> 33) as usize % (i + 1));
        }
        let h = build_graph(&shuffled, friendship);
        prop_assert_eq!(h.nodes(), g.nodes());
        prop_assert_eq!(edges_of(&h), edges_of(&g));
    }

    #[test]
    fn walks_follow_edges_and_are_seeded(recs in records(), strategy in 0usize..2, p in 0.25f64..4.0, q in 0.25f64..4.0, seed in any::<u64>()) {
        let g = build_graph(&recs, false);
        prop_assume!(!g.is_empty());
        let cfg = WalkConfig {
            strategy: WalkStrategy::ALL[strategy],
            walks_per_node: 2,
            walk_length: 12,
            p,
            q,
            seed,
            ..WalkConfig::default()
        };
        let a = generate_walks(&g, &cfg).unwrap();
        prop_assert_eq!(a.len(), 2 * g.node_count());
        let n = validate_walks(a.walks.iter().map(|w| w.iter().map(String::as_str)), Some(&g), 12, true).unwrap();
        prop_assert_eq!(n, a.len());
        let b = generate_walks(&g, &cfg).unwrap();
        prop_assert_eq!(a, b);
    }
}

/// Five-neighbor fixture with distinct weights.
fn star() -> InteractionGraph {
    let edges: Vec<(String, String, f64)> =
        [("c", "a", 1.0), ("c", "b", 2.0), ("c", "d", 3.0), ("c", "e", 4.0), ("c", "f", 1.0)]
            .iter()
            .map(|&(s, d, w)| (s.to_string(), d.to_string(), w))
            .collect();
    InteractionGraph::from_weighted_edges(std::iter::empty(), &edges).unwrap()
}

/// Upper 1% points of the chi-square distribution, df 1..=4.
const CHI2_CRIT_01: [f64; 4] = [6.635, 9.210, 11.345, 13.277];

#[test]
fn first_steps_pass_chi_square() {
    let g = star();
    let c = g.index_of("c").unwrap();
    let cfg = WalkConfig { walks_per_node: 100_000, walk_length: 2, seed: 11, ..WalkConfig::default() };
    let walks = generate_walks(&g, &cfg).unwrap();
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for w in walks.walks.iter().filter(|w| w[0] == "c") {
        *counts.entry(g.index_of(&w[1]).unwrap()).or_default() += 1.0;
    }
    let exact = transition_probs(&g, None, c, 1.0, 1.0);
    let stat: f64 = exact
        .iter()
        .map(|&(x, p)| {
            let e = p * 100_000.0;
            let o = counts.get(&x).copied().unwrap_or(0.0);
            (o - e).powi(2) / e
        })
        .sum();
    assert!(stat < CHI2_CRIT_01[exact.len() - 2], "chi2 {stat}");
}

#[test]
fn edge_list_and_walk_files_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let g = star();
    let edges = dir.path().join("edges.txt");
    write_edge_list(&g, &edges).unwrap();
    let text = fs::read_to_string(&edges).unwrap();
    assert!(text.lines().all(|l| l.split(' ').count() == 3));
    assert!(text.contains("c e 4\n"));
    let back = load_edge_list(&edges).unwrap();
    assert_eq!(edges_of(&back), edges_of(&g));

    // a walk file as an external walker would write it
    let walks = dir.path().join("walks.txt");
    fs::write(&walks, "c a\nc e\nb\n").unwrap();
    assert_eq!(validate_walk_file(&walks, Some(&back), 80, true).unwrap(), 3);
    let ours = generate_walks(&back, &WalkConfig { walks_per_node: 3, walk_length: 5, ..WalkConfig::default() }).unwrap();
    let ours_path = dir.path().join("ours.txt");
    write_walks(&ours, &ours_path).unwrap();
    assert_eq!(read_walks(&ours_path).unwrap(), ours);
    assert_eq!(validate_walk_file(&ours_path, Some(&back), 5, true).unwrap(), ours.len());

    for (bad, line) in [("c a\na c\n", 2), ("c  a\n", 1), ("c zz\n", 1), ("c a\n\n", 2)] {
        fs::write(&walks, bad).unwrap();
        let e = validate_walk_file(&walks, Some(&back), 80, true).unwrap_err().to_string();
        assert!(e.starts_with(&format!("line {line}:")), "{bad:?}: {e}");
    }
    fs::write(&walks, "c a\n").unwrap();
    assert!(validate_walk_file(&walks, None, 1, false).is_err());
    let wc = WalkCorpus { walks: vec![vec!["x".into(), "y".into()]] };
    assert_eq!(validate_walks(wc.walks.iter().map(|w| w.iter().map(String::as_str)), None, 2, false).unwrap(), 1);
}
