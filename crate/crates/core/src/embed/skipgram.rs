//! Skip-gram with negative sampling over a walk corpus.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::walk::WalkCorpus;
use super::{mix_seed, EmbeddingTable};
use crate::error::{Error, Result};

pub const MODEL_NAME: &str = "node2vec";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkipGramParams {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for SkipGramParams {
    fn default() -> Self {
        Self {
            dim: 64,
            window: 5,
            negatives: 5,
            epochs: 1,
            lr: 0.025,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SkipGramOutput {
    pub table: EmbeddingTable,
    /// Mean loss on a fixed evaluation sample after each epoch.
    pub epoch_loss: Vec<f64>,
    /// Mean per-pair loss seen during each epoch's updates.
    pub online_loss: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln σ(x)` without overflow.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SgnsGrad {
    pub loss: f64,
    pub d_center: Vec<f64>,
    pub d_context: Vec<f64>,
    pub d_negatives: Vec<Vec<f64>>,
}

/// Loss `-ln σ(u_o·v) - Σ_k ln σ(-u_k·v)` for center input vector `v`,
/// context output vector `u_o` and negative output vectors `u_k`, with its
/// gradients.
pub fn sgns_loss_and_grad(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> SgnsGrad {
    let d = center.len();
    let mut d_center = vec![0.0; d];
    let s = dot(context, center);
    let mut loss = neg_log_sigmoid(s);
    let g = sigmoid(s) - 1.0;
    for i in 0..d {
        d_center[i] += g * context[i];
    }
    let d_context = center.iter().map(|v| g * v).collect();
    let mut d_negatives = Vec::with_capacity(negatives.len());
    for u in negatives {
        let s = dot(u, center);
        loss += neg_log_sigmoid(-s);
        let g = sigmoid(s);
        for i in 0..d {
            d_center[i] += g * u[i];
        }
        d_negatives.push(center.iter().map(|v| g * v).collect());
    }
    SgnsGrad {
        loss,
        d_center,
        d_context,
        d_negatives,
    }
}

/// Input and output embedding matrices, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SgnsParams {
    pub dim: usize,
    pub input: Vec<f64>,
    pub output: Vec<f64>,
}

impl SgnsParams {
    pub fn row(m: &[f64], dim: usize, i: usize) -> &[f64] {
        &m[i * dim..(i + 1) * dim]
    }

    /// Loss of one (center, context, negatives) group at current parameters.
    pub fn loss(&self, center: usize, context: usize, negatives: &[usize]) -> f64 {
        let d = self.dim;
        let negs: Vec<&[f64]> = negatives.iter().map(|&k| Self::row(&self.output, d, k)).collect();
        sgns_loss_and_grad(Self::row(&self.input, d, center), Self::row(&self.output, d, context), &negs).loss
    }

    /// One simultaneous gradient step on a single group; returns the loss
    /// before the step.
    pub fn step(&mut self, center: usize, context: usize, negatives: &[usize], lr: f64, grad_center: &mut [f64]) -> f64 {
        let d = self.dim;
        grad_center.iter_mut().for_each(|g| *g = 0.0);
        let v = center * d;
        let mut loss = 0.0;
        for (k, (target, label)) in std::iter::once((context, 1.0))
            .chain(negatives.iter().map(|&n| (n, 0.0)))
            .enumerate()
        {
            let u = target * d;
            let s = dot(&self.output[u..u + d], &self.input[v..v + d]);
            loss += if k == 0 { neg_log_sigmoid(s) } else { neg_log_sigmoid(-s) };
            let g = sigmoid(s) - label;
            for i in 0..d {
                grad_center[i] += g * self.output[u + i];
                self.output[u + i] -= lr * g * self.input[v + i];
            }
        }
        for i in 0..d {
            self.input[v + i] -= lr * grad_center[i];
        }
        loss
    }
}

/// Cumulative unigram^0.75 distribution over node indices.
fn noise_cdf(corpus: &WalkCorpus) -> Vec<f64> {
    let mut counts = vec![0.0f64; corpus.node_count()];
    for w in &corpus.walks {
        for &i in w {
            counts[i] += 1.0;
        }
    }
    let mut acc = 0.0;
    counts
        .iter()
        .map(|c| {
            acc += c.powf(0.75);
            acc
        })
        .collect()
}

const EVAL_PAIRS: usize = 4096;

/// Deterministic sample of (center, context, negatives) groups.
fn eval_sample(corpus: &WalkCorpus, cdf: &[f64], params: &SkipGramParams, seed: u64) -> Vec<(usize, usize, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 0x4556]));
    let candidates: Vec<usize> = (0..corpus.walks.len()).filter(|&i| corpus.walks[i].len() > 1).collect();
    if candidates.is_empty() {
        return Vec::new();
    }
    (0..EVAL_PAIRS)
        .map(|_| {
            let w = &corpus.walks[candidates[rng.gen_range(0..candidates.len())]];
            let pos = rng.gen_range(0..w.len());
            let lo = pos.saturating_sub(params.window);
            let hi = (pos + params.window).min(w.len() - 1);
            let mut cpos = rng.gen_range(lo..hi);
            if cpos >= pos {
                cpos += 1;
            }
            let negs = (0..params.negatives).map(|_| sample_cdf(cdf, &mut rng)).collect();
            (w[pos], w[cpos], negs)
        })
        .collect()
}

fn sample_cdf<R: Rng>(cdf: &[f64], rng: &mut R) -> usize {
    let u = rng.gen::<f64>() * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

pub fn train_skipgram(corpus: &WalkCorpus, params: &SkipGramParams, seed: u64, view_fingerprint: &str) -> Result<SkipGramOutput> {
    if corpus.walks.is_empty() || corpus.node_count() == 0 {
        return Err(Error::InvalidInput("empty walk corpus".into()));
    }
    if params.dim == 0 || params.lr <= 0.0 || params.window == 0 {
        return Err(Error::Config("skip-gram dim, window and lr must be positive".into()));
    }
    let n = corpus.node_count();
    let d = params.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 0x5347]));
    let bound = 0.5 / d as f64;
    let mut model = SgnsParams {
        dim: d,
        input: (0..n * d).map(|_| rng.gen_range(-bound..bound)).collect(),
        output: vec![0.0; n * d],
    };
    let cdf = noise_cdf(corpus);
    let eval = eval_sample(corpus, &cdf, params, seed);
    let eval_loss = |m: &SgnsParams| {
        if eval.is_empty() {
            0.0
        } else {
            eval.iter().map(|(c, o, k)| m.loss(*c, *o, k)).sum::<f64>() / eval.len() as f64
        }
    };
    let tokens: usize = corpus.walks.iter().map(Vec::len).sum();
    let total_steps = (tokens * params.epochs).max(1) as f64;
    let mut processed = 0usize;
    let mut grad = vec![0.0; d];
    let mut negs = Vec::with_capacity(params.negatives);
    let mut epoch_loss = Vec::with_capacity(params.epochs);
    let mut online_loss = Vec::with_capacity(params.epochs);
    for epoch in 0..params.epochs {
        let (mut sum, mut pairs) = (0.0, 0usize);
        for walk in &corpus.walks {
            for (pos, &center) in walk.iter().enumerate() {
                let lr = params.lr * (1.0 - processed as f64 / total_steps).max(1e-4);
                processed += 1;
                let lo = pos.saturating_sub(params.window);
                let hi = (pos + params.window + 1).min(walk.len());
                for (cpos, &context) in walk.iter().enumerate().take(hi).skip(lo) {
                    if cpos == pos {
                        continue;
                    }
                    negs.clear();
                    while negs.len() < params.negatives {
                        let k = sample_cdf(&cdf, &mut rng);
                        if k != context || n == 1 {
                            negs.push(k);
                        }
                    }
                    sum += model.step(center, context, &negs, lr, &mut grad);
                    pairs += 1;
                }
            }
        }
        let online = if pairs == 0 { 0.0 } else { sum / pairs as f64 };
        let loss = eval_loss(&model);
        if !loss.is_finite() || !online.is_finite() || model.input.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!(
                "skip-gram loss became non-finite at epoch {epoch} ({pairs} pairs, lr {})",
                params.lr
            )));
        }
        epoch_loss.push(loss);
        online_loss.push(online);
    }
    let mut table = EmbeddingTable::new(MODEL_NAME, d, false, seed, view_fingerprint);
    for (i, key) in corpus.keys.iter().enumerate() {
        table.vectors.insert(key.clone(), SgnsParams::row(&model.input, d, i).to_vec());
    }
    Ok(SkipGramOutput {
        table,
        epoch_loss,
        online_loss,
    })
}

/// Trailing moving average with the given window.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    if xs.len() < window {
        return Vec::new();
    }
    xs.windows(window).map(|w| w.iter().sum::<f64>() / window as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::walk::{WalkGraph, WalkParams};

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = 6;
        for _ in 0..20 {
            let theta: Vec<f64> = (0..3 * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let eval = |t: &[f64]| sgns_loss_and_grad(&t[..d], &t[d..2 * d], &[&t[2 * d..]]);
            let g = eval(&theta);
            let analytic: Vec<f64> = [g.d_center, g.d_context, g.d_negatives[0].clone()].concat();
            let eps = 1e-5;
            for i in 0..3 * d {
                let mut t = theta.clone();
                t[i] += eps;
                let plus = eval(&t).loss;
                t[i] -= 2.0 * eps;
                let minus = eval(&t).loss;
                let numeric = (plus - minus) / (2.0 * eps);
                assert!(rel_err(analytic[i], numeric) < 1e-4, "{i}: {} vs {numeric}", analytic[i]);
            }
        }
    }

    #[test]
    fn step_descends_on_frozen_group() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = 8;
        let mut m = SgnsParams {
            dim: d,
            input: (0..4 * d).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            output: (0..4 * d).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        };
        let before = m.loss(0, 1, &[2, 3]);
        let mut g = vec![0.0; d];
        let reported = m.step(0, 1, &[2, 3], 1e-3, &mut g);
        assert!((reported - before).abs() < 1e-12);
        assert!(m.loss(0, 1, &[2, 3]) < before);
    }

    fn corpus_for(adj: Vec<Vec<usize>>, walks_per_node: usize, seed: u64) -> WalkCorpus {
        let g = WalkGraph::from_adjacency(adj);
        let params = WalkParams { walk_length: 20, walks_per_node, p: 1.0, q: 1.0 };
        let mut walks = Vec::new();
        for round in 0..walks_per_node {
            for a in 0..g.node_count() {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, a as u64, round as u64]));
                walks.push(g.walk(a, &params, &mut rng));
            }
        }
        WalkCorpus {
            walks,
            keys: (0..g.node_count()).map(|i| format!("n{i:02}")).collect(),
            params,
            seed,
        }
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
    }

    #[test]
    fn cliques_separate() {
        let clique = |lo: usize| (lo..lo + 5).map(move |i| (lo..lo + 5).filter(|&j| j != i).collect::<Vec<_>>());
        let adj: Vec<Vec<usize>> = clique(0).chain(clique(5)).collect();
        let corpus = corpus_for(adj, 10, 1);
        let params = SkipGramParams { dim: 16, epochs: 10, ..SkipGramParams::default() };
        let out = train_skipgram(&corpus, &params, 3, "fx").unwrap();
        let vecs: Vec<&[f64]> = corpus.keys.iter().map(|k| out.table.get(k).unwrap()).collect();
        let (mut intra, mut inter, mut ni, mut ne) = (0.0, 0.0, 0, 0);
        for i in 0..10 {
            for j in i + 1..10 {
                let c = cosine(vecs[i], vecs[j]);
                if (i < 5) == (j < 5) {
                    intra += c;
                    ni += 1;
                } else {
                    inter += c;
                    ne += 1;
                }
            }
        }
        assert!(intra / ni as f64 > inter / ne as f64);
        let ma = moving_average(&out.epoch_loss, 5);
        assert!(ma.windows(2).all(|w| w[1] <= w[0]), "{:?}", out.epoch_loss);
    }

    #[test]
    fn single_node_is_noop() {
        let corpus = corpus_for(vec![vec![]], 3, 2);
        let params = SkipGramParams { dim: 4, epochs: 3, ..SkipGramParams::default() };
        let a = train_skipgram(&corpus, &params, 8, "fx").unwrap();
        let b = train_skipgram(&corpus, &SkipGramParams { epochs: 0, ..params }, 8, "fx").unwrap();
        assert_eq!(a.table, b.table);
        assert!(a.epoch_loss.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn deterministic_bytes() {
        let adj = vec![vec![1, 2], vec![0, 2], vec![0, 1, 3], vec![2]];
        let corpus = corpus_for(adj, 4, 5);
        let params = SkipGramParams { dim: 8, epochs: 2, ..SkipGramParams::default() };
        let a = train_skipgram(&corpus, &params, 1, "fx").unwrap().table.to_bytes();
        let b = train_skipgram(&corpus, &params, 1, "fx").unwrap().table.to_bytes();
        assert_eq!(a, b);
    }
}
