//! Two-layer message-passing encoders pre-trained by supervised log-salary
//! regression; penultimate activations are the structural embeddings.

pub mod layer;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::{mix_seed, EmbeddingTable};
use crate::error::{Error, Result};
use crate::kg::{GraphView, Relation, Variant};
use layer::{layer_backward, layer_forward, operators, LayerCache, LayerWeights, SparseOp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GnnVariant {
    V1,
    V2Trans,
    V2Ind,
    V2FullSg,
    V2FullMg,
}

impl GnnVariant {
    pub const ALL: [GnnVariant; 5] = [Self::V1, Self::V2Trans, Self::V2Ind, Self::V2FullSg, Self::V2FullMg];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::V1 => "v1",
            Self::V2Trans => "v2_trans",
            Self::V2Ind => "v2_ind",
            Self::V2FullSg => "v2full_sg",
            Self::V2FullMg => "v2full_mg",
        }
    }

    pub fn view_variant(self) -> Variant {
        match self {
            Self::V1 => Variant::V1StaticPlayer,
            Self::V2Trans | Self::V2Ind => Variant::V2PlayerSeason,
            Self::V2FullSg => Variant::V2FullSg,
            Self::V2FullMg => Variant::V2FullMg,
        }
    }

    /// Relation-typed layers (one weight matrix per relation).
    pub fn typed(self) -> bool {
        matches!(self, Self::V2FullSg | Self::V2FullMg)
    }
}

impl fmt::Display for GnnVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnnHyper {
    pub hidden: usize,
    pub layers: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for GnnHyper {
    fn default() -> Self {
        Self {
            hidden: 64,
            layers: 2,
            lr: 3e-3,
            weight_decay: 1e-4,
            epochs: 200,
            patience: 30,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl GnnHyper {
    pub fn check(&self) -> Result<()> {
        if self.hidden == 0 || self.layers == 0 || self.lr <= 0.0 || self.epochs > 200 || self.weight_decay < 0.0 {
            return Err(Error::Config(format!("invalid GNN hyperparameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GnnModel {
    pub variant: GnnVariant,
    pub hyper: GnnHyper,
    pub seed: u64,
    /// Relation order of the typed weight matrices; empty for mean layers.
    pub relations: Vec<Relation>,
    pub layers: Vec<LayerWeights>,
    pub head_w: Array1<f64>,
    pub head_b: f64,
}

#[derive(Clone, Debug)]
pub struct Forward {
    pub caches: Vec<LayerCache>,
    pub pred: Array1<f64>,
}

impl Forward {
    pub fn embeddings(&self) -> &Array2<f64> {
        &self.caches.last().expect("at least one layer").out
    }
}

fn glorot<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-limit..limit))
}

impl GnnModel {
    /// Glorot-uniform layers; zero head weights with `head_b` as bias so the
    /// initial prediction is the training mean.
    pub fn new(variant: GnnVariant, in_dim: usize, relations: Vec<Relation>, hyper: GnnHyper, seed: u64, head_b: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 0x474e]));
        let n_ops = if variant.typed() { relations.len() } else { 1 };
        let mut layers = Vec::with_capacity(hyper.layers);
        let mut fan_in = in_dim;
        for _ in 0..hyper.layers {
            layers.push(LayerWeights {
                w_self: glorot(&mut rng, fan_in, hyper.hidden),
                w_ops: (0..n_ops).map(|_| glorot(&mut rng, fan_in, hyper.hidden)).collect(),
            });
            fan_in = hyper.hidden;
        }
        Self {
            variant,
            hyper,
            seed,
            relations: if variant.typed() { relations } else { Vec::new() },
            layers,
            head_w: Array1::zeros(hyper.hidden),
            head_b,
        }
    }

    pub fn operators(&self, view: &GraphView) -> Result<Vec<SparseOp>> {
        operators(view, if self.variant.typed() { Some(&self.relations) } else { None })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerWeights::param_count).sum::<usize>() + self.head_w.len() + 1
    }

    pub fn forward(&self, ops: &[SparseOp], x: &Array2<f64>) -> Result<Forward> {
        let mut caches: Vec<LayerCache> = Vec::with_capacity(self.layers.len());
        for w in &self.layers {
            let input = caches.last().map(|c| &c.out).unwrap_or(x);
            let c = layer_forward(w, ops, input)?;
            caches.push(c);
        }
        let pred = caches.last().expect("at least one layer").out.dot(&self.head_w) + self.head_b;
        Ok(Forward { caches, pred })
    }

    /// Mean squared error over `labels` (node index, target) and its
    /// gradient with respect to every parameter.
    pub fn loss_and_grad(&self, ops: &[SparseOp], x: &Array2<f64>, labels: &[(usize, f64)]) -> Result<(f64, GnnModel)> {
        let fwd = self.forward(ops, x)?;
        let n = labels.len() as f64;
        let mut d_pred = Array1::zeros(fwd.pred.len());
        let mut loss = 0.0;
        for &(i, y) in labels {
            let r = fwd.pred[i] - y;
            loss += r * r / n;
            d_pred[i] += 2.0 * r / n;
        }
        let z = fwd.embeddings();
        let mut grad = self.zeros_like();
        grad.head_w = z.t().dot(&d_pred);
        grad.head_b = d_pred.sum();
        let mut d_out = d_pred
            .view()
            .insert_axis(ndarray::Axis(1))
            .dot(&self.head_w.view().insert_axis(ndarray::Axis(0)));
        for l in (0..self.layers.len()).rev() {
            let (g, d_in) = layer_backward(&self.layers[l], ops, &fwd.caches[l], &d_out);
            grad.layers[l] = g;
            d_out = d_in;
        }
        Ok((loss, grad))
    }

    pub fn mse(&self, ops: &[SparseOp], x: &Array2<f64>, labels: &[(usize, f64)]) -> Result<f64> {
        if labels.is_empty() {
            return Ok(f64::NAN);
        }
        let pred = self.forward(ops, x)?.pred;
        Ok(labels.iter().map(|&(i, y)| (pred[i] - y).powi(2)).sum::<f64>() / labels.len() as f64)
    }

    fn zeros_like(&self) -> GnnModel {
        GnnModel {
            layers: self.layers.iter().map(LayerWeights::zeros_like).collect(),
            head_w: Array1::zeros(self.head_w.len()),
            head_b: 0.0,
            ..self.clone()
        }
    }

    /// Parameters in a fixed order: per layer `w_self` then operator
    /// matrices, then head weights, then head bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            for m in l.matrices() {
                v.extend(m.iter());
            }
        }
        v.extend(self.head_w.iter());
        v.push(self.head_b);
        v
    }

    pub fn assign(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        for l in &mut self.layers {
            for m in l.matrices_mut() {
                m.iter_mut().for_each(|x| *x = *it.next().expect("flat length"));
            }
        }
        self.head_w.iter_mut().for_each(|x| *x = *it.next().expect("flat length"));
        self.head_b = *it.next().expect("flat length");
    }

    /// Embeddings for every node of `view` with the current weights.
    pub fn embed(&self, view: &GraphView) -> Result<Array2<f64>> {
        let ops = self.operators(view)?;
        Ok(self.forward(&ops, &view.features())?.embeddings().clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = CheckpointHeader {
            variant: self.variant,
            hyper: self.hyper,
            seed: self.seed,
            relations: self.relations.iter().map(|r| r.as_str().to_string()).collect(),
            in_dim: self.layers[0].in_dim(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(CKPT_MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for x in self.flatten() {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let mut magic = [0u8; 8];
        bytes.read_exact(&mut magic)?;
        if &magic != CKPT_MAGIC {
            return Err(Error::InvalidInput("not a GNN checkpoint".into()));
        }
        let mut len = [0u8; 8];
        bytes.read_exact(&mut len)?;
        let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
        bytes.read_exact(&mut json)?;
        let h: CheckpointHeader = serde_json::from_slice(&json)?;
        let relations = h.relations.iter().map(|r| r.parse()).collect::<Result<Vec<Relation>>>()?;
        let mut model = GnnModel::new(h.variant, h.in_dim, relations, h.hyper, h.seed, 0.0);
        let n = model.param_count();
        if bytes.len() != 8 * n {
            return Err(Error::InvalidInput(format!("checkpoint holds {} bytes of weights, expected {}", bytes.len(), 8 * n)));
        }
        let flat: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        model.assign(&flat);
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }
}

const CKPT_MAGIC: &[u8; 8] = b"RCGNN01\n";

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    variant: GnnVariant,
    hyper: GnnHyper,
    seed: u64,
    relations: Vec<String>,
    in_dim: usize,
}

/// Adaptive moments with decoupled weight decay on a flat parameter vector;
/// entries where `decay_mask` is false are not decayed.
#[derive(Clone, Debug)]
pub struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    decay_mask: Vec<bool>,
}

impl AdamW {
    pub fn new(n: usize, decay_mask: Vec<bool>) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            decay_mask,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], h: &GnnHyper) {
        self.t += 1;
        let bc1 = 1.0 - h.beta1.powi(self.t);
        let bc2 = 1.0 - h.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = h.beta1 * self.m[i] + (1.0 - h.beta1) * grad[i];
            self.v[i] = h.beta2 * self.v[i] + (1.0 - h.beta2) * grad[i] * grad[i];
            if self.decay_mask[i] {
                params[i] -= h.lr * h.weight_decay * params[i];
            }
            params[i] -= h.lr * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + h.eps);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Epoch whose weights were returned.
    pub best_epoch: usize,
    pub early_stop_epoch: Option<usize>,
    pub param_count: usize,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,grad_norm\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{},{},{}\n", e.epoch, e.train_loss, e.val_loss, e.grad_norm));
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct GnnOutput {
    pub model: GnnModel,
    pub table: EmbeddingTable,
    pub log: TrainLog,
}

fn resolve(view: &GraphView, labels: &[(String, f64)], what: &str) -> Result<Vec<(usize, f64)>> {
    labels
        .iter()
        .map(|(k, y)| {
            view.node_index(k)
                .map(|i| (i, *y))
                .ok_or_else(|| Error::Graph(format!("{what} label node {k} is not in the view")))
        })
        .collect()
}

fn table_from(model: &GnnModel, view: &GraphView, z: &Array2<f64>) -> EmbeddingTable {
    let mut t = EmbeddingTable::new(model.variant.as_str(), model.hyper.hidden, false, model.seed, view.fingerprint());
    for (i, n) in view.nodes.iter().enumerate() {
        t.vectors.insert(n.key.clone(), z.row(i).to_vec());
    }
    t
}

/// Full-batch training with early stopping on validation MSE; returns the
/// weights of the best validation epoch (training MSE when no validation
/// labels are given) and embeddings of every view node under them.
pub fn train_gnn(
    view: &GraphView,
    variant: GnnVariant,
    train_labels: &[(String, f64)],
    val_labels: &[(String, f64)],
    hyper: &GnnHyper,
    seed: u64,
) -> Result<GnnOutput> {
    hyper.check()?;
    let train = resolve(view, train_labels, "train")?;
    let val = resolve(view, val_labels, "val")?;
    if train.is_empty() {
        return Err(Error::Graph("no labeled nodes in the training view".into()));
    }
    let x = view.features();
    let mean = train.iter().map(|t| t.1).sum::<f64>() / train.len() as f64;
    let mut model = GnnModel::new(variant, x.ncols(), view.relations(), *hyper, seed, mean);
    let ops = model.operators(view)?;
    let mut params = model.flatten();
    let n = params.len();
    let mut opt = AdamW::new(n, (0..n).map(|i| i + 1 < n).collect());
    let mut log = TrainLog {
        param_count: n,
        ..TrainLog::default()
    };
    let mut best = (f64::INFINITY, 0usize, params.clone());
    for epoch in 0..hyper.epochs {
        model.assign(&params);
        let (train_loss, grad) = model.loss_and_grad(&ops, &x, &train)?;
        let val_loss = if val.is_empty() { train_loss } else { model.mse(&ops, &x, &val)? };
        let g = grad.flatten();
        let grad_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !train_loss.is_finite() || !val_loss.is_finite() || !grad_norm.is_finite() {
            return Err(Error::Numeric(format!(
                "{variant} training diverged at epoch {epoch}: train {train_loss}, val {val_loss}, grad norm {grad_norm}"
            )));
        }
        log.epochs.push(EpochLog { epoch, train_loss, val_loss, grad_norm });
        if val_loss < best.0 {
            best = (val_loss, epoch, params.clone());
        } else if epoch - best.1 >= hyper.patience {
            log.early_stop_epoch = Some(epoch);
            break;
        }
        opt.step(&mut params, &g, hyper);
    }
    model.assign(&best.2);
    log.best_epoch = best.1;
    let z = model.forward(&ops, &x)?.embeddings().clone();
    let table = table_from(&model, view, &z);
    Ok(GnnOutput { model, table, log })
}

#[derive(Clone, Debug, PartialEq)]
pub struct InductiveEmbeddings {
    pub vectors: BTreeMap<String, Vec<f64>>,
    /// Requested nodes with no admissible edge in the full view.
    pub structurally_isolated: BTreeSet<String>,
}

/// Frozen-weight forward pass over `full_view`, returning embeddings of
/// `keys`.
pub fn infer_inductive(model: &GnnModel, full_view: &GraphView, keys: &[String]) -> Result<InductiveEmbeddings> {
    let idx: Vec<usize> = keys
        .iter()
        .map(|k| full_view.node_index(k).ok_or_else(|| Error::Graph(format!("node {k} is absent from the inference view"))))
        .collect::<Result<_>>()?;
    let z = model.embed(full_view)?;
    let mut out = InductiveEmbeddings {
        vectors: BTreeMap::new(),
        structurally_isolated: BTreeSet::new(),
    };
    for (k, &i) in keys.iter().zip(&idx) {
        out.vectors.insert(k.clone(), z.row(i).to_vec());
        if full_view.neighbors(i).is_empty() {
            out.structurally_isolated.insert(k.clone());
        }
    }
    Ok(out)
}

/// Hub-to-neighbor-mean distance on a star after 0..=max_layers rounds of
/// `x ← 0.7·x + 0.3·mean(N(x))` from seeded nonnegative features.
pub fn oversmoothing_probe(n_leaves: usize, max_layers: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_leaves + 1;
    let dim = 4;
    let rows = (0..n)
        .map(|i| {
            if i == 0 {
                (1..n).map(|j| (j, 1.0 / n_leaves as f64)).collect()
            } else {
                vec![(0, 1.0)]
            }
        })
        .collect();
    let op = SparseOp { rows };
    let w = LayerWeights {
        w_self: Array2::eye(dim) * 0.7,
        w_ops: vec![Array2::eye(dim) * 0.3],
    };
    let mut x = Array2::from_shape_fn((n, dim), |_| rng.gen_range(0.0..1.0));
    let mut out = Vec::with_capacity(max_layers + 1);
    for layer in 0..=max_layers {
        if layer > 0 {
            x = layer_forward(&w, std::slice::from_ref(&op), &x).expect("consistent shapes").out;
        }
        let leaf_mean = layer::column_mean(&x.slice(ndarray::s![1.., ..]).to_owned());
        out.push((&x.row(0) - &leaf_mean).mapv(|v| v * v).sum().sqrt());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::layer::tests::{fixture_view, random_matrix};
    use super::*;
    use crate::datagen::{generate_league, LeagueConfig};
    use crate::kg::{build_graph, inductive_mask, player_season_key, season_view, BuildOptions};

    fn random_model(seed: u64, variant: GnnVariant, in_dim: usize, relations: Vec<Relation>, hidden: usize) -> GnnModel {
        let hyper = GnnHyper { hidden, ..GnnHyper::default() };
        let mut m = GnnModel::new(variant, in_dim, relations, hyper, seed, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        m.head_w = Array1::from_shape_fn(hidden, |_| rng.gen_range(-1.0..1.0));
        m
    }

    pub(crate) fn model_fd_error(seed: u64, variant: GnnVariant) -> f64 {
        let rels = vec![Relation::MemberOfTeam, Relation::RepresentedBy];
        let v = fixture_view(
            5,
            &[
                (0, 1, Relation::MemberOfTeam, 1),
                (1, 2, Relation::RepresentedBy, 2),
                (2, 3, Relation::MemberOfTeam, 1),
                (0, 3, Relation::RepresentedBy, 1),
                (3, 4, Relation::MemberOfTeam, 3),
            ],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_matrix(&mut rng, 5, 3);
        let model = random_model(seed, variant, 3, rels, 4);
        let ops = model.operators(&v).unwrap();
        let labels = [(0, 1.5), (2, -0.5), (4, 0.25)];
        let (_, grad) = model.loss_and_grad(&ops, &x, &labels).unwrap();
        let g = grad.flatten();
        let theta = model.flatten();
        let eps = 1e-5;
        let mut worst = 0.0f64;
        let mut probe = model.clone();
        for i in 0..theta.len() {
            let mut t = theta.clone();
            t[i] += eps;
            probe.assign(&t);
            let plus = probe.mse(&ops, &x, &labels).unwrap();
            t[i] -= 2.0 * eps;
            probe.assign(&t);
            let minus = probe.mse(&ops, &x, &labels).unwrap();
            let num = (plus - minus) / (2.0 * eps);
            worst = worst.max((g[i] - num).abs() / g[i].abs().max(num.abs()).max(1e-7));
        }
        worst
    }

    #[test]
    fn full_model_gradients_match_finite_differences() {
        for seed in 0..20 {
            assert!(model_fd_error(seed, GnnVariant::V2Trans) < 1e-4, "sage {seed}");
            assert!(model_fd_error(seed, GnnVariant::V2FullMg) < 1e-4, "rgcn {seed}");
        }
    }

    fn league_view(variant: Variant, season: i32) -> (GraphView, crate::data::Dataset) {
        let (d, _) = generate_league(&LeagueConfig { n_players: 40, ..LeagueConfig::default() }).unwrap();
        let g = build_graph(&d, BuildOptions::with_events(true)).unwrap();
        (season_view(&g, variant, season).unwrap(), d)
    }

    fn labels_for(d: &crate::data::Dataset, seasons: &[i32], f: impl Fn(f64) -> f64) -> Vec<(String, f64)> {
        d.records
            .iter()
            .filter(|r| seasons.contains(&r.season))
            .map(|r| (player_season_key(&r.player_id, r.season), f(crate::data::make_target(r.salary_usd).unwrap())))
            .collect()
    }

    #[test]
    fn constant_labels_fit_exactly() {
        let (v, d) = league_view(Variant::V2PlayerSeason, 2024);
        let train = labels_for(&d, &[2020, 2021, 2022], |_| 15.0);
        let val = labels_for(&d, &[2023], |_| 15.0);
        let out = train_gnn(&v, GnnVariant::V2Trans, &train, &val, &GnnHyper { epochs: 20, ..GnnHyper::default() }, 1).unwrap();
        assert!(out.log.epochs.iter().all(|e| e.val_loss < 1e-20));
        let pred = out.model.forward(&out.model.operators(&v).unwrap(), &v.features()).unwrap().pred;
        assert!(pred.iter().all(|p| (p - 15.0).abs() < 1e-9));
    }

    #[test]
    fn training_reduces_loss_and_respects_best_epoch() {
        let (v, d) = league_view(Variant::V2FullMg, 2024);
        let train = labels_for(&d, &[2020, 2021, 2022], |y| y);
        let val = labels_for(&d, &[2023], |y| y);
        let hyper = GnnHyper { epochs: 60, patience: 10, ..GnnHyper::default() };
        let out = train_gnn(&v, GnnVariant::V2FullMg, &train, &val, &hyper, 2).unwrap();
        let log = &out.log;
        assert!(log.epochs.len() <= 60);
        let best = log.epochs[log.best_epoch].val_loss;
        assert!(log.epochs.iter().all(|e| e.val_loss >= best));
        assert!(best < log.epochs[0].val_loss);
        if let Some(stop) = log.early_stop_epoch {
            assert!(log.best_epoch < stop);
        }
        let ops = out.model.operators(&v).unwrap();
        let val_idx = resolve(&v, &val, "val").unwrap();
        assert!((out.model.mse(&ops, &v.features(), &val_idx).unwrap() - best).abs() < 1e-12);
        assert_eq!(out.table.len(), v.node_count());
        assert!(log.to_csv().lines().count() == log.epochs.len() + 1);
    }

    #[test]
    fn inductive_masking_and_inference() {
        let (full, d) = league_view(Variant::V2PlayerSeason, 2024);
        let test_keys: Vec<String> = labels_for(&d, &[2024], |y| y).into_iter().map(|l| l.0).collect();
        let masked = inductive_mask(&full, &test_keys).unwrap();
        assert_eq!(full.node_count(), masked.train.node_count() + test_keys.len());
        let train = labels_for(&d, &[2020, 2021, 2022], |y| y);
        let val = labels_for(&d, &[2023], |y| y);
        let hyper = GnnHyper { epochs: 30, ..GnnHyper::default() };
        let out = train_gnn(&masked.train, GnnVariant::V2Ind, &train, &val, &hyper, 3).unwrap();
        // Consistency: re-embedding training nodes on the training view.
        let keys: Vec<String> = train.iter().map(|l| l.0.clone()).collect();
        let again = infer_inductive(&out.model, &masked.train, &keys).unwrap();
        for k in &keys {
            assert_eq!(&again.vectors[k], &out.table.vectors[k]);
        }
        let inferred = infer_inductive(&out.model, &full, &test_keys).unwrap();
        assert_eq!(inferred.vectors.len(), test_keys.len());
        assert!(inferred.vectors.values().all(|v| v.iter().all(|x| x.is_finite())));
        assert!(infer_inductive(&out.model, &full, &["ps:nobody:2024".to_string()]).is_err());
    }

    #[test]
    fn isolated_node_is_flagged_and_twin_nodes_match() {
        // Nodes 0 and 2 are structurally identical; node 4 is isolated.
        let v = fixture_view(5, &[(0, 1, Relation::MemberOfTeam, 1), (2, 3, Relation::MemberOfTeam, 1)]);
        let model = random_model(4, GnnVariant::V2Ind, crate::kg::FEATURE_DIM, vec![], 8);
        let keys: Vec<String> = ["team:00", "team:02", "team:04"].iter().map(|s| s.to_string()).collect();
        let e = infer_inductive(&model, &v, &keys).unwrap();
        assert_eq!(e.vectors["team:00"], e.vectors["team:02"]);
        assert_eq!(e.structurally_isolated, ["team:04".to_string()].into_iter().collect());
        let x = v.features();
        let mut h = x.row(4).to_owned();
        for l in &model.layers {
            h = h.dot(&l.w_self).mapv(|a| a.max(0.0));
        }
        assert!(e.vectors["team:04"].iter().zip(h.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn permutation_equivariance() {
        let edges = [(0, 1, Relation::MemberOfTeam, 1), (1, 2, Relation::RepresentedBy, 2), (2, 3, Relation::MemberOfTeam, 1)];
        let perm = [2usize, 0, 3, 1];
        let permuted: Vec<_> = edges.iter().map(|&(a, b, r, m)| (perm[a], perm[b], r, m)).collect();
        let model = random_model(5, GnnVariant::V2FullSg, 3, vec![Relation::MemberOfTeam, Relation::RepresentedBy], 4);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_matrix(&mut rng, 4, 3);
        let mut xp = Array2::zeros((4, 3));
        for i in 0..4 {
            xp.row_mut(perm[i]).assign(&x.row(i));
        }
        let a = model.forward(&model.operators(&fixture_view(4, &edges)).unwrap(), &x).unwrap();
        let b = model.forward(&model.operators(&fixture_view(4, &permuted)).unwrap(), &xp).unwrap();
        for i in 0..4 {
            let d = (&a.embeddings().row(i) - &b.embeddings().row(perm[i])).mapv(f64::abs).sum();
            assert!(d < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = random_model(6, GnnVariant::V2FullSg, 3, vec![Relation::MemberOfTeam, Relation::RepresentedBy], 4);
        let back = GnnModel::from_bytes(&model.to_bytes()).unwrap();
        assert_eq!(back, model);
        assert!(GnnModel::from_bytes(b"nonsense-bytes!!").is_err());
    }

    #[test]
    fn oversmoothing_probe_decreases_with_depth() {
        let d = oversmoothing_probe(12, 4, 1);
        assert_eq!(d.len(), 5);
        assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
    }

    #[test]
    fn rejects_unlabeled_view() {
        let (v, _) = league_view(Variant::V2PlayerSeason, 2024);
        assert!(train_gnn(&v, GnnVariant::V2Trans, &[], &[], &GnnHyper::default(), 1).is_err());
    }
}
