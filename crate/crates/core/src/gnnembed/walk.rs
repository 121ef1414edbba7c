use rand::Rng as _;
use rayon::prelude::*;

use super::{WalkConfig, WalkStrategy};
use crate::netgraph::InteractionGraph;
use crate::rng::{self, Rng};

/// Exact next-step distribution from `cur`, as (neighbor, probability)
/// pairs in neighbor order. Without `prev` (the first step) or with
/// `p = q = 1` this is proportional to edge weight. Otherwise the node2vec
/// bias multiplies the weight by `1/p` when returning to `prev`, by 1 when
/// the candidate is adjacent to `prev` in either direction, and by `1/q`
/// elsewhere. Sinks yield an empty list.
pub fn transition_probs(g: &InteractionGraph, prev: Option<usize>, cur: usize, p: f64, q: f64) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> =
        g.out_neighbors(cur).iter().map(|&(x, w)| (x, w * bias(g, prev, x, p, q))).collect();
    let total: f64 = out.iter().map(|&(_, w)| w).sum();
    for e in &mut out {
        e.1 /= total;
    }
    out
}

fn bias(g: &InteractionGraph, prev: Option<usize>, x: usize, p: f64, q: f64) -> f64 {
    match prev {
        None => 1.0,
        Some(t) if x == t => 1.0 / p,
        Some(t) if g.has_edge(t, x) || g.has_edge(x, t) => 1.0,
        Some(_) => 1.0 / q,
    }
}

/// Index into `cum` (inclusive prefix sums) drawn proportional to mass.
pub(super) fn sample_cdf(cum: &[f64], rng: &mut Rng) -> usize {
    let total = *cum.last().expect("non-empty cdf");
    let u = rng.random::<f64>() * total;
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

pub(super) fn cumulative(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

pub(super) fn first_and_second_order(g: &InteractionGraph, cfg: &WalkConfig) -> Vec<Vec<usize>> {
    let first_order = cfg.strategy == WalkStrategy::DeepWalk || (cfg.p == 1.0 && cfg.q == 1.0);
    let cdfs: Vec<Vec<f64>> =
        (0..g.node_count()).map(|v| cumulative(g.out_neighbors(v).iter().map(|&(_, w)| w))).collect();
    (0..g.node_count())
        .into_par_iter()
        .flat_map_iter(|start| {
            let mut rng = rng::stream(cfg.seed, start as u64);
            (0..cfg.walks_per_node)
                .map(|_| one_walk(g, cfg, &cdfs, first_order, start, &mut rng))
                .collect::<Vec<_>>()
        })
        .collect()
}

fn one_walk(
    g: &InteractionGraph,
    cfg: &WalkConfig,
    cdfs: &[Vec<f64>],
    first_order: bool,
    start: usize,
    rng: &mut Rng,
) -> Vec<usize> {
    let mut walk = Vec::with_capacity(cfg.walk_length);
    walk.push(start);
    let mut buf = Vec::new();
    while walk.len() < cfg.walk_length {
        let cur = *walk.last().unwrap();
        let nbrs = g.out_neighbors(cur);
        if nbrs.is_empty() {
            break;
        }
        let prev = (walk.len() >= 2).then(|| walk[walk.len() - 2]);
        let k = if first_order || prev.is_none() {
            sample_cdf(&cdfs[cur], rng)
        } else {
            buf.clear();
            buf.extend(cumulative(nbrs.iter().map(|&(x, w)| w * bias(g, prev, x, cfg.p, cfg.q))));
            sample_cdf(&buf, rng)
        };
        walk.push(nbrs[k].0);
    }
    walk
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnnembed::generate_walks;

    fn graph(edges: &[(&str, &str, f64)]) -> InteractionGraph {
        let e: Vec<_> = edges.iter().map(|&(s, d, w)| (s.to_string(), d.to_string(), w)).collect();
        InteractionGraph::from_weighted_edges(std::iter::empty(), &e).unwrap()
    }

    #[test]
    fn single_neighbor_is_deterministic() {
        let g = graph(&[("a", "b", 2.0), ("b", "a", 1.0)]);
        let cfg = WalkConfig { walks_per_node: 3, walk_length: 3, ..Default::default() };
        let c = generate_walks(&g, &cfg).unwrap();
        for w in &c.walks[..3] {
            assert_eq!(w, &["a", "b", "a"]);
        }
    }

    #[test]
    fn sinks_and_isolated_nodes_truncate() {
        let g = InteractionGraph::from_weighted_edges(
            ["z".to_string()],
            &[("a".into(), "b".into(), 1.0)],
        )
        .unwrap();
        let cfg = WalkConfig { walks_per_node: 1, walk_length: 5, ..Default::default() };
        let c = generate_walks(&g, &cfg).unwrap();
        assert_eq!(c.walks, vec![vec!["a", "b"], vec!["b"], vec!["z"]]);
    }

    #[test]
    fn weighted_first_step_frequency() {
        let g = graph(&[("s", "x", 3.0), ("s", "y", 1.0)]);
        let cfg = WalkConfig { walks_per_node: 100_000, walk_length: 2, seed: 7, ..Default::default() };
        let c = generate_walks(&g, &cfg).unwrap();
        let from_s: Vec<_> = c.walks.iter().filter(|w| w[0] == "s").collect();
        let x = from_s.iter().filter(|w| w[1] == "x").count() as f64 / from_s.len() as f64;
        assert!((x - 0.75).abs() < 0.01, "{x}");
    }

    #[test]
    fn node2vec_bias_values() {
        // t -> v, v -> {t, x (adjacent to t), y}
        let g = graph(&[("t", "v", 1.0), ("t", "x", 1.0), ("v", "t", 1.0), ("v", "x", 1.0), ("v", "y", 1.0)]);
        let t = g.index_of("t").unwrap();
        let v = g.index_of("v").unwrap();
        let probs = transition_probs(&g, Some(t), v, 2.0, 0.5);
        // raw: t 1/2, x 1, y 2
        let expect = [0.5 / 3.5, 1.0 / 3.5, 2.0 / 3.5];
        for ((_, p), e) in probs.iter().zip(expect) {
            assert!((p - e).abs() < 1e-12);
        }
    }

    #[test]
    fn cdf_sampling_hits_every_outcome() {
        let cum = cumulative([1.0, 0.0, 1.0].into_iter());
        let mut rng = rng::seeded(1);
        let mut seen = [0usize; 3];
        for _ in 0..1000 {
            seen[sample_cdf(&cum, &mut rng)] += 1;
        }
        assert_eq!(seen[1], 0);
        assert!(seen[0] > 400 && seen[2] > 400);
    }
}
