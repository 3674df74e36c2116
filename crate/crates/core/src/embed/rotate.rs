//! Knowledge-graph embedding with relations as element-wise rotations in
//! complex space, trained with a margin ranking loss.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{mix_seed, EmbeddingTable};
use crate::error::{Error, Result};
use crate::kg::GraphView;

pub const MODEL_NAME: &str = "rotate";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotateParams {
    /// Complex dimension.
    pub dim: usize,
    pub margin: f64,
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for RotateParams {
    fn default() -> Self {
        Self {
            dim: 128,
            margin: 6.0,
            negatives: 8,
            epochs: 60,
            lr: 0.02,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

/// `‖h ∘ r − t‖₁` with `h`, `t` interleaved complex and `r` given as angles.
pub fn rotate_score(head: &[f64], phases: &[f64], tail: &[f64]) -> Result<f64> {
    if head.len() != tail.len() || head.len() != 2 * phases.len() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: head {}, tail {}, phases {}",
            head.len(),
            tail.len(),
            phases.len()
        )));
    }
    let r: Vec<f64> = phases.iter().flat_map(|t| [t.cos(), t.sin()]).collect();
    Ok(distance(head, &r, tail))
}

/// L1 norm of complex moduli of `h ∘ r − t` for interleaved vectors.
fn distance(h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    let mut d = 0.0;
    for i in (0..h.len()).step_by(2) {
        let zr = h[i] * r[i] - h[i + 1] * r[i + 1] - t[i];
        let zi = h[i] * r[i + 1] + h[i + 1] * r[i] - t[i + 1];
        d += zr.hypot(zi);
    }
    d
}

/// Sparse gradient keyed by entity and relation index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RotateGrad {
    pub entities: BTreeMap<usize, Vec<f64>>,
    pub relations: BTreeMap<usize, Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RotateModel {
    pub dim: usize,
    /// `n_entities × 2·dim`, interleaved.
    pub entities: Vec<f64>,
    /// `n_relations × 2·dim`, interleaved unit complex.
    pub relations: Vec<f64>,
}

impl RotateModel {
    fn width(&self) -> usize {
        2 * self.dim
    }

    pub fn entity(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.entities[i * w..(i + 1) * w]
    }

    pub fn relation(&self, r: usize) -> &[f64] {
        let w = self.width();
        &self.relations[r * w..(r + 1) * w]
    }

    pub fn distance(&self, t: Triple) -> f64 {
        distance(self.entity(t.head), self.relation(t.relation), self.entity(t.tail))
    }

    /// Adds `scale · ∂d(t)/∂θ` into `grad`.
    fn add_distance_grad(&self, t: Triple, scale: f64, grad: &mut RotateGrad) {
        let w = self.width();
        let (h, r, tl) = (self.entity(t.head), self.relation(t.relation), self.entity(t.tail));
        let mut gh = vec![0.0; w];
        let mut gr = vec![0.0; w];
        let mut gt = vec![0.0; w];
        for i in (0..w).step_by(2) {
            let zr = h[i] * r[i] - h[i + 1] * r[i + 1] - tl[i];
            let zi = h[i] * r[i + 1] + h[i + 1] * r[i] - tl[i + 1];
            let m = zr.hypot(zi);
            if m < 1e-12 {
                continue;
            }
            let (ur, ui) = (scale * zr / m, scale * zi / m);
            // u·conj(r), u·conj(h), −u.
            gh[i] = ur * r[i] + ui * r[i + 1];
            gh[i + 1] = ui * r[i] - ur * r[i + 1];
            gr[i] = ur * h[i] + ui * h[i + 1];
            gr[i + 1] = ui * h[i] - ur * h[i + 1];
            gt[i] = -ur;
            gt[i + 1] = -ui;
        }
        let add = |map: &mut BTreeMap<usize, Vec<f64>>, k: usize, g: Vec<f64>| {
            let e = map.entry(k).or_insert_with(|| vec![0.0; w]);
            e.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        };
        add(&mut grad.entities, t.head, gh);
        add(&mut grad.entities, t.tail, gt);
        add(&mut grad.relations, t.relation, gr);
    }

    /// Mean hinge `max(0, γ + d(pos) − d(neg))` over negatives, with gradient.
    pub fn group_loss_and_grad(&self, pos: Triple, negatives: &[Triple], margin: f64) -> (f64, RotateGrad) {
        let mut grad = RotateGrad::default();
        if negatives.is_empty() {
            return (0.0, grad);
        }
        let k = negatives.len() as f64;
        let dp = self.distance(pos);
        let mut loss = 0.0;
        let mut active = 0usize;
        for &neg in negatives {
            let h = margin + dp - self.distance(neg);
            if h > 0.0 {
                loss += h;
                active += 1;
                self.add_distance_grad(neg, -1.0 / k, &mut grad);
            }
        }
        if active > 0 {
            self.add_distance_grad(pos, active as f64 / k, &mut grad);
        }
        (loss / k, grad)
    }

    pub fn group_loss(&self, pos: Triple, negatives: &[Triple], margin: f64) -> f64 {
        self.group_loss_and_grad(pos, negatives, margin).0
    }

    /// SGD step followed by projection of touched relations to unit modulus.
    pub fn apply(&mut self, grad: &RotateGrad, lr: f64) {
        let w = self.width();
        for (&e, g) in &grad.entities {
            for (x, gx) in self.entities[e * w..(e + 1) * w].iter_mut().zip(g) {
                *x -= lr * gx;
            }
        }
        for (&r, g) in &grad.relations {
            let row = &mut self.relations[r * w..(r + 1) * w];
            for (x, gx) in row.iter_mut().zip(g) {
                *x -= lr * gx;
            }
            project_unit(row);
        }
    }

    pub fn max_modulus_error(&self) -> f64 {
        self.relations
            .chunks(2)
            .map(|c| (c[0].hypot(c[1]) - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn project_unit(row: &mut [f64]) {
    for c in row.chunks_mut(2) {
        let m = c[0].hypot(c[1]);
        if m < 1e-12 {
            c[0] = 1.0;
            c[1] = 0.0;
        } else {
            c[0] /= m;
            c[1] /= m;
        }
    }
}

#[derive(Clone, Debug)]
pub struct RotateOutput {
    pub table: EmbeddingTable,
    pub model: RotateModel,
    pub epoch_loss: Vec<f64>,
}

/// Corrupts head or tail uniformly; corruptions that reproduce any true
/// triple are discarded and resampled.
pub fn sample_negative<R: Rng>(pos: Triple, n_entities: usize, truth: &HashSet<Triple>, rng: &mut R) -> Option<Triple> {
    for _ in 0..32 {
        let e = rng.gen_range(0..n_entities);
        let cand = if rng.gen::<bool>() {
            Triple { head: e, ..pos }
        } else {
            Triple { tail: e, ..pos }
        };
        if !truth.contains(&cand) {
            return Some(cand);
        }
    }
    None
}

pub fn train_rotate(
    entity_keys: &[String],
    relation_names: &[String],
    triples: &[Triple],
    params: &RotateParams,
    seed: u64,
    view_fingerprint: &str,
) -> Result<RotateOutput> {
    if triples.is_empty() {
        return Err(Error::InvalidInput("rotation model needs at least one triple".into()));
    }
    if params.dim == 0 || params.lr <= 0.0 || params.margin <= 0.0 {
        return Err(Error::Config("rotation dim, lr and margin must be positive".into()));
    }
    let n = entity_keys.len();
    let nr = relation_names.len();
    if let Some(t) = triples.iter().find(|t| t.head >= n || t.tail >= n || t.relation >= nr) {
        return Err(Error::InvalidInput(format!("triple {t:?} out of range")));
    }
    let w = 2 * params.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 0x524f]));
    let bound = (params.margin + 2.0) / params.dim as f64;
    let mut model = RotateModel {
        dim: params.dim,
        entities: (0..n * w).map(|_| rng.gen_range(-bound..bound)).collect(),
        relations: (0..nr * params.dim)
            .flat_map(|_| {
                let th = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                [th.cos(), th.sin()]
            })
            .collect(),
    };
    let truth: HashSet<Triple> = triples.iter().copied().collect();
    let mut order: Vec<usize> = (0..triples.len()).collect();
    let mut negs = Vec::with_capacity(params.negatives);
    let mut epoch_loss = Vec::with_capacity(params.epochs);
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for &i in &order {
            let pos = triples[i];
            negs.clear();
            for _ in 0..params.negatives {
                if let Some(neg) = sample_negative(pos, n, &truth, &mut rng) {
                    negs.push(neg);
                }
            }
            let (loss, grad) = model.group_loss_and_grad(pos, &negs, params.margin);
            sum += loss;
            model.apply(&grad, params.lr);
        }
        let loss = sum / triples.len() as f64;
        if !loss.is_finite() || model.entities.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("rotation loss became non-finite at epoch {epoch}")));
        }
        epoch_loss.push(loss);
    }
    let mut table = EmbeddingTable::new(MODEL_NAME, params.dim, true, seed, view_fingerprint);
    for (i, k) in entity_keys.iter().enumerate() {
        table.vectors.insert(k.clone(), model.entity(i).to_vec());
    }
    for (r, name) in relation_names.iter().enumerate() {
        table.relation_phases.insert(name.clone(), model.relation(r).to_vec());
    }
    Ok(RotateOutput { table, model, epoch_loss })
}

/// Entity keys, relation names and triples of a view, edges taken as
/// directed `src → dst`.
pub fn view_triples(view: &GraphView) -> (Vec<String>, Vec<String>, Vec<Triple>) {
    let relations = view.relations();
    let names = relations.iter().map(|r| r.as_str().to_string()).collect();
    let keys = view.nodes.iter().map(|n| n.key.clone()).collect();
    let mut triples: Vec<Triple> = view
        .edges
        .iter()
        .map(|e| Triple {
            head: e.src,
            relation: relations.binary_search(&e.relation).expect("relation listed"),
            tail: e.dst,
        })
        .collect();
    triples.sort();
    triples.dedup();
    (keys, names, triples)
}

pub fn train_rotate_view(view: &GraphView, params: &RotateParams, seed: u64) -> Result<RotateOutput> {
    let (keys, names, triples) = view_triples(view);
    train_rotate(&keys, &names, &triples, params, seed, &view.fingerprint())
}
