//! Second-order biased random walks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mix_seed;
use crate::error::{Error, Result};
use crate::kg::GraphView;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkParams {
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub p: f64,
    pub q: f64,
}

impl Default for WalkParams {
    fn default() -> Self {
        Self {
            walk_length: 40,
            walks_per_node: 10,
            p: 1.0,
            q: 1.0,
        }
    }
}

impl WalkParams {
    pub fn check(&self) -> Result<()> {
        check_pq(self.p, self.q)?;
        if self.walk_length == 0 || self.walks_per_node == 0 {
            return Err(Error::Config("walk_length and walks_per_node must be >= 1".into()));
        }
        Ok(())
    }
}

fn check_pq(p: f64, q: f64) -> Result<()> {
    if !(p > 0.0 && q > 0.0 && p.is_finite() && q.is_finite()) {
        return Err(Error::Config(format!("p and q must be positive, got p={p} q={q}")));
    }
    Ok(())
}

/// Walks over node indices; `keys[i]` names node `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkCorpus {
    pub walks: Vec<Vec<usize>>,
    pub keys: Vec<String>,
    pub params: WalkParams,
    pub seed: u64,
}

impl WalkCorpus {
    pub fn node_count(&self) -> usize {
        self.keys.len()
    }

    pub fn key_walks(&self) -> Vec<Vec<&str>> {
        self.walks
            .iter()
            .map(|w| w.iter().map(|&i| self.keys[i].as_str()).collect())
            .collect()
    }
}

/// Normalized next-step probabilities from `curr` to each of `neighbors`
/// given the previous node: weight 1/p to return, 1 to stay at distance one
/// from `prev`, 1/q to move outward.
pub fn transition_weights(
    prev: usize,
    neighbors: &[usize],
    p: f64,
    q: f64,
    adjacent: impl Fn(usize, usize) -> bool,
) -> Result<Vec<f64>> {
    check_pq(p, q)?;
    if neighbors.is_empty() {
        return Err(Error::InvalidInput("transition from a node without neighbors".into()));
    }
    let mut w: Vec<f64> = neighbors.iter().map(|&n| alpha(prev, n, p, q, &adjacent)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    Ok(w)
}

fn alpha(prev: usize, next: usize, p: f64, q: f64, adjacent: impl Fn(usize, usize) -> bool) -> f64 {
    if next == prev {
        1.0 / p
    } else if adjacent(prev, next) {
        1.0
    } else {
        1.0 / q
    }
}

/// Simple undirected adjacency (relation and multiplicity ignored), sorted.
pub struct WalkGraph {
    adj: Vec<Vec<usize>>,
}

impl WalkGraph {
    pub fn from_view(view: &GraphView) -> Self {
        let adj = (0..view.node_count())
            .map(|i| {
                let mut n: Vec<usize> = view.neighbors(i).iter().map(|&(j, _, _)| j).filter(|&j| j != i).collect();
                n.sort_unstable();
                n.dedup();
                n
            })
            .collect();
        Self { adj }
    }

    pub fn from_adjacency(adj: Vec<Vec<usize>>) -> Self {
        let adj = adj
            .into_iter()
            .map(|mut n| {
                n.sort_unstable();
                n.dedup();
                n
            })
            .collect();
        Self { adj }
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    /// Samples the step after `prev -> curr`, or from `curr` uniformly when
    /// `prev` is `None`.
    pub fn step<R: Rng>(&self, prev: Option<usize>, curr: usize, p: f64, q: f64, rng: &mut R) -> Option<usize> {
        let nb = &self.adj[curr];
        if nb.is_empty() {
            return None;
        }
        let prev = match prev {
            Some(prev) if p != 1.0 || q != 1.0 => prev,
            _ => return Some(nb[rng.gen_range(0..nb.len())]),
        };
        let weight = |n: usize| alpha(prev, n, p, q, |a, b| self.adjacent(a, b));
        let total: f64 = nb.iter().map(|&n| weight(n)).sum();
        let mut u = rng.gen::<f64>() * total;
        for &n in nb {
            u -= weight(n);
            if u < 0.0 {
                return Some(n);
            }
        }
        nb.last().copied()
    }

    pub fn walk<R: Rng>(&self, start: usize, params: &WalkParams, rng: &mut R) -> Vec<usize> {
        let mut walk = Vec::with_capacity(params.walk_length);
        walk.push(start);
        let mut prev = None;
        while walk.len() < params.walk_length {
            let curr = *walk.last().expect("non-empty walk");
            match self.step(prev, curr, params.p, params.q, rng) {
                Some(next) => {
                    prev = Some(curr);
                    walk.push(next);
                }
                None => break,
            }
        }
        walk
    }
}

/// One walk per (round, anchor) with its own generator seeded from
/// `(seed, anchor, round)`; walks are ordered round-major.
pub fn node2vec_walks(view: &GraphView, params: &WalkParams, seed: u64) -> Result<WalkCorpus> {
    params.check()?;
    let graph = WalkGraph::from_view(view);
    let n = graph.node_count();
    let walks: Vec<Vec<usize>> = (0..params.walks_per_node * n)
        .into_par_iter()
        .map(|job| {
            let (round, anchor) = (job / n, job % n);
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, anchor as u64, round as u64]));
            graph.walk(anchor, params, &mut rng)
        })
        .collect();
    Ok(WalkCorpus {
        walks,
        keys: view.nodes.iter().map(|n| n.key.clone()).collect(),
        params: *params,
        seed,
    })
}

/// Total-variation distance between two distributions on the same support.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_league, LeagueConfig};
    use crate::kg::{season_view, Variant};
    use crate::kg::{build_graph, BuildOptions};

    fn adjacency(edges: &[(usize, usize)]) -> impl Fn(usize, usize) -> bool + '_ {
        move |a, b| edges.iter().any(|&(x, y)| (x, y) == (a, b) || (y, x) == (a, b))
    }

    #[test]
    fn uniform_when_unbiased() {
        let w = transition_weights(0, &[0, 2, 3], 1.0, 1.0, |_, _| false).unwrap();
        assert!(w.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn triangle_fixture() {
        // A=0, B=1, C=2.
        let adj = adjacency(&[(0, 1), (1, 2), (0, 2)]);
        let w = transition_weights(0, &[0, 2], 4.0, 2.0, adj).unwrap();
        assert!((w[0] - 0.2).abs() < 1e-15 && (w[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn path_fixture() {
        let adj = adjacency(&[(0, 1), (1, 2)]);
        let w = transition_weights(0, &[0, 2], 1.0, 4.0, adj).unwrap();
        assert!((w[0] - 0.8).abs() < 1e-15 && (w[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(transition_weights(0, &[1], 0.0, 1.0, |_, _| true).is_err());
        assert!(transition_weights(0, &[1], 1.0, -1.0, |_, _| true).is_err());
        assert!(transition_weights(0, &[], 1.0, 1.0, |_, _| true).is_err());
    }

    #[test]
    fn isolated_node_walk_is_singleton() {
        let g = WalkGraph::from_adjacency(vec![vec![], vec![2], vec![1]]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(g.walk(0, &WalkParams::default(), &mut rng), vec![0]);
        assert_eq!(g.walk(1, &WalkParams::default(), &mut rng).len(), 40);
    }

    fn small_view() -> GraphView {
        let (d, _) = generate_league(&LeagueConfig { n_players: 20, ..LeagueConfig::default() }).unwrap();
        let g = build_graph(&d, BuildOptions::default()).unwrap();
        season_view(&g, Variant::V2PlayerSeason, 2022).unwrap()
    }

    #[test]
    fn corpus_is_valid_and_deterministic() {
        let view = small_view();
        let params = WalkParams { walk_length: 12, walks_per_node: 2, p: 0.5, q: 2.0 };
        let a = node2vec_walks(&view, &params, 3).unwrap();
        assert_eq!(a.walks.len(), 2 * view.node_count());
        for (j, w) in a.walks.iter().enumerate() {
            assert_eq!(w[0], j % view.node_count());
            for pair in w.windows(2) {
                assert!(view.has_edge_between(pair[0], pair[1]));
            }
        }
        assert_eq!(a, node2vec_walks(&view, &params, 3).unwrap());
        assert_ne!(a.walks, node2vec_walks(&view, &params, 4).unwrap().walks);
    }
}
