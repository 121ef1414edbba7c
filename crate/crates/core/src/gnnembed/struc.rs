use std::collections::VecDeque;

use ndarray::Array2;
use rand::Rng as _;
use rayon::prelude::*;

use super::walk::{cumulative, sample_cdf};
use super::WalkConfig;
use crate::netgraph::InteractionGraph;
use crate::rng;

/// Dynamic-time-warping distance with cost `|a - b|`. An empty sequence
/// is compared as `[0]`.
pub fn dtw_distance(a: &[f64], b: &[f64]) -> f64 {
    const ZERO: [f64; 1] = [0.0];
    let a = if a.is_empty() { &ZERO[..] } else { a };
    let b = if b.is_empty() { &ZERO[..] } else { b };
    if a == b {
        return 0.0;
    }
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for &x in a {
        cur[0] = f64::INFINITY;
        for j in 1..=m {
            let best = prev[j].min(cur[j - 1]).min(prev[j - 1]);
            cur[j] = (x - b[j - 1]).abs() + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// Sorted degree sequences of the rings at hop distance `0..layers` from
/// each node, on the symmetrized graph.
fn ring_sequences(g: &InteractionGraph, layers: usize) -> Vec<Vec<Vec<f64>>> {
    let nb = g.undirected_neighbors();
    let deg: Vec<f64> = nb.iter().map(|n| n.len() as f64).collect();
    let n = g.node_count();
    (0..n)
        .map(|s| {
            let mut rings = vec![Vec::new(); layers];
            let mut dist = vec![usize::MAX; n];
            dist[s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                let d = dist[u];
                rings[d].push(deg[u]);
                if d + 1 >= layers {
                    continue;
                }
                for &v in &nb[u] {
                    if dist[v] == usize::MAX {
                        dist[v] = d + 1;
                        queue.push_back(v);
                    }
                }
            }
            for r in &mut rings {
                r.sort_by(f64::total_cmp);
            }
            rings
        })
        .collect()
}

/// Cumulative structural distance per layer: entry `[k][(u, v)]` sums the
/// ring DTW distances of hops `0..=k`. Layer 0 is `|deg(u) - deg(v)|`
/// with degrees taken on the symmetrized graph.
pub fn layer_distances(g: &InteractionGraph, layers: usize) -> Vec<Array2<f64>> {
    let n = g.node_count();
    let seqs = ring_sequences(g, layers);
    let mut out: Vec<Array2<f64>> = Vec::with_capacity(layers);
    for k in 0..layers {
        let mut f = match out.last() {
            Some(prev) => prev.clone(),
            None => Array2::zeros((n, n)),
        };
        for u in 0..n {
            for v in (u + 1)..n {
                let d = dtw_distance(&seqs[u][k], &seqs[v][k]);
                f[[u, v]] += d;
                f[[v, u]] += d;
            }
        }
        out.push(f);
    }
    out
}

struct Layer {
    /// Per node, prefix sums of `exp(-f)` over all other nodes.
    cdf: Vec<Vec<f64>>,
    /// Per node, the other nodes in order matching `cdf`.
    targets: Vec<Vec<usize>>,
    /// Probability of moving up a layer on a layer change.
    up: Vec<f64>,
}

fn build_layers(g: &InteractionGraph, layers: usize) -> Vec<Layer> {
    let n = g.node_count();
    layer_distances(g, layers)
        .into_iter()
        .map(|f| {
            let w = f.mapv(|d| (-d).exp());
            let pairs = (n * n.saturating_sub(1)) as f64;
            let mean = if pairs > 0.0 { (w.sum() - w.diag().sum()) / pairs } else { 0.0 };
            let mut cdf = Vec::with_capacity(n);
            let mut targets = Vec::with_capacity(n);
            let mut up = Vec::with_capacity(n);
            for u in 0..n {
                let t: Vec<usize> = (0..n).filter(|&v| v != u).collect();
                let gamma = t.iter().filter(|&&v| w[[u, v]] > mean).count() as f64;
                let a = (gamma + std::f64::consts::E).ln();
                up.push(a / (a + 1.0));
                cdf.push(cumulative(t.iter().map(|&v| w[[u, v]])));
                targets.push(t);
            }
            Layer { cdf, targets, up }
        })
        .collect()
}

pub(super) fn walks(g: &InteractionGraph, cfg: &WalkConfig) -> Vec<Vec<usize>> {
    let n = g.node_count();
    let layers = build_layers(g, cfg.layers);
    let top = cfg.layers - 1;
    (0..n)
        .into_par_iter()
        .flat_map_iter(|start| {
            let mut rng = rng::stream(cfg.seed, start as u64);
            let layers = &layers;
            (0..cfg.walks_per_node)
                .map(move |_| {
                    let mut walk = vec![start];
                    if n < 2 {
                        return walk;
                    }
                    let mut k = 0;
                    while walk.len() < cfg.walk_length {
                        let u = *walk.last().unwrap();
                        if top == 0 || rng.random::<f64>() < cfg.stay_prob {
                            let j = sample_cdf(&layers[k].cdf[u], &mut rng);
                            walk.push(layers[k].targets[u][j]);
                        } else if k == 0 {
                            k = 1;
                        } else if k == top || rng.random::<f64>() >= layers[k].up[u] {
                            k -= 1;
                        } else {
                            k += 1;
                        }
                    }
                    walk
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnnembed::{struc2vec_walks, WalkConfig};

    fn graph(edges: &[(&str, &str)]) -> InteractionGraph {
        let e: Vec<_> = edges.iter().map(|&(s, d)| (s.to_string(), d.to_string(), 1.0)).collect();
        InteractionGraph::from_weighted_edges(std::iter::empty(), &e).unwrap()
    }

    #[test]
    fn dtw_basics() {
        assert_eq!(dtw_distance(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(dtw_distance(&[3.0], &[1.0]), 2.0);
        assert_eq!(dtw_distance(&[1.0, 1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(dtw_distance(&[], &[2.0, 3.0]), 5.0);
        assert_eq!(dtw_distance(&[1.0, 5.0], &[2.0]), 1.0 + 3.0);
    }

    #[test]
    fn star_center_and_leaf_differ_at_layer_zero() {
        let g = graph(&[("c", "l1"), ("c", "l2"), ("c", "l3")]);
        let f = layer_distances(&g, 2);
        let c = g.index_of("c").unwrap();
        let l1 = g.index_of("l1").unwrap();
        let l2 = g.index_of("l2").unwrap();
        assert_eq!(f[0][[c, l1]], 2.0);
        assert_eq!(f[0][[l1, l2]], 0.0);
        assert_eq!(f[1][[l1, l2]], 0.0);
    }

    #[test]
    fn identical_neighborhoods_have_zero_distance() {
        // two disjoint paths a-b-c and x-y-z: a and x are structurally equal
        let g = graph(&[("a", "b"), ("b", "c"), ("x", "y"), ("y", "z")]);
        let f = layer_distances(&g, 3);
        let a = g.index_of("a").unwrap();
        let x = g.index_of("x").unwrap();
        let b = g.index_of("b").unwrap();
        for layer in &f {
            assert_eq!(layer[[a, x]], 0.0);
        }
        assert!(f[1][[a, b]] > 0.0);
    }

    #[test]
    fn walks_are_seeded_and_bounded() {
        let g = graph(&[("a", "b"), ("b", "c"), ("c", "d"), ("d", "a"), ("a", "c")]);
        let cfg = WalkConfig { walks_per_node: 3, walk_length: 7, seed: 3, ..Default::default() };
        let w1 = struc2vec_walks(&g, &cfg).unwrap();
        let w2 = struc2vec_walks(&g, &cfg).unwrap();
        assert_eq!(w1, w2);
        assert_eq!(w1.len(), 12);
        assert!(w1.walks.iter().all(|w| w.len() == 7));
        w1.validate(&g, 7, false).unwrap();
    }

    #[test]
    fn single_node_graph_gives_length_one_walks() {
        let g = InteractionGraph::from_weighted_edges(["solo".to_string()], &[]).unwrap();
        let cfg = WalkConfig { walks_per_node: 2, ..Default::default() };
        let w = struc2vec_walks(&g, &cfg).unwrap();
        assert_eq!(w.walks, vec![vec!["solo"], vec!["solo"]]);
    }
}
