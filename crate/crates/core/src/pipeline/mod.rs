//! Runs the nine model configurations over seeds and regressors under the
//! matched-information and temporal constraints.

pub mod analysis;
pub mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{hex_digest, make_target, shared_test_intersection, split_by_season, Dataset, InstanceKey, PlayerSeasonRecord, Season, Split, SplitSpec};
use crate::embed::rotate::{train_rotate_view, RotateParams};
use crate::embed::skipgram::{train_skipgram, SkipGramParams};
use crate::embed::walk::{node2vec_walks, WalkParams};
use crate::embed::{mix_seed, EmbeddingTable};
use crate::error::{Error, Result};
use crate::eval::ResidualSample;
use crate::gnn::{infer_inductive, train_gnn, GnnHyper, GnnVariant};
use crate::kg::{build_graph, inductive_mask, player_key, player_season_key, season_view, BuildOptions, GraphView, Variant};
use crate::prediction::{PredictionRow, PredictionSet, RegressorKind};
use crate::regress::{fit_boosted, fit_encoder_imputer, fit_forest, fuse_features, tabular_block, DesignMatrix, EmbeddingBlock, FittedRegressor, ForestParams, FusionSpec, GbtParams, Provenance};

/// Seeds of every suite run.
pub const SEEDS: [u64; 5] = [11, 23, 37, 51, 73];

/// View used by the static (walk and rotation) embeddings.
pub const STATIC_VIEW: Variant = Variant::V2FullSg;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    WeakBaseline,
    StrongBaseline,
    Node2vecStats,
    RotateStats,
    V1Stats,
    V2TransStats,
    V2IndStats,
    V2fullSgStats,
    V2fullMgStats,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Encoder {
    None,
    Node2vec,
    Rotate,
    Gnn(GnnVariant),
}

impl ModelName {
    pub const ALL: [ModelName; 9] = [
        Self::WeakBaseline,
        Self::StrongBaseline,
        Self::Node2vecStats,
        Self::RotateStats,
        Self::V1Stats,
        Self::V2TransStats,
        Self::V2IndStats,
        Self::V2fullSgStats,
        Self::V2fullMgStats,
    ];
    pub const BASELINES: [ModelName; 2] = [Self::WeakBaseline, Self::StrongBaseline];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::WeakBaseline => "weak_baseline",
            Self::StrongBaseline => "strong_baseline",
            Self::Node2vecStats => "node2vec_stats",
            Self::RotateStats => "rotate_stats",
            Self::V1Stats => "v1_stats",
            Self::V2TransStats => "v2_trans_stats",
            Self::V2IndStats => "v2_ind_stats",
            Self::V2fullSgStats => "v2full_sg_stats",
            Self::V2fullMgStats => "v2full_mg_stats",
        }
    }

    pub fn is_baseline(self) -> bool {
        Self::BASELINES.contains(&self)
    }

    pub fn is_static(self) -> bool {
        matches!(self, Self::Node2vecStats | Self::RotateStats)
    }

    pub fn graph_models() -> impl Iterator<Item = ModelName> {
        Self::ALL.into_iter().filter(|m| !m.is_baseline())
    }

    pub fn encoder(self) -> Encoder {
        match self {
            Self::WeakBaseline | Self::StrongBaseline => Encoder::None,
            Self::Node2vecStats => Encoder::Node2vec,
            Self::RotateStats => Encoder::Rotate,
            Self::V1Stats => Encoder::Gnn(GnnVariant::V1),
            Self::V2TransStats => Encoder::Gnn(GnnVariant::V2Trans),
            Self::V2IndStats => Encoder::Gnn(GnnVariant::V2Ind),
            Self::V2fullSgStats => Encoder::Gnn(GnnVariant::V2FullSg),
            Self::V2fullMgStats => Encoder::Gnn(GnnVariant::V2FullMg),
        }
    }

    /// Column provenance tags the design matrix may contain.
    pub fn information_set(self) -> BTreeSet<Provenance> {
        let mut s: BTreeSet<Provenance> = [Provenance::Stat, Provenance::Control].into_iter().collect();
        match self {
            Self::WeakBaseline => {}
            Self::StrongBaseline => {
                s.insert(Provenance::Meta);
            }
            _ => {
                s.insert(Provenance::Embed);
            }
        }
        s
    }

    fn index(self) -> u64 {
        Self::ALL.iter().position(|&m| m == self).expect("listed") as u64
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown model `{s}`")))
    }
}

/// Hyperparameters of every stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub forest: ForestParams,
    pub gbt: GbtParams,
    pub walk: WalkParams,
    pub skipgram: SkipGramParams,
    pub rotate: RotateParams,
    pub gnn: GnnHyper,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            forest: ForestParams::default(),
            gbt: GbtParams::default(),
            walk: WalkParams::default(),
            skipgram: SkipGramParams::default(),
            rotate: RotateParams::default(),
            gnn: GnnHyper::default(),
        }
    }
}

impl PipelineParams {
    /// Small settings for smoke tests.
    pub fn quick() -> Self {
        Self {
            forest: ForestParams { n_trees: 30, ..ForestParams::default() },
            gbt: GbtParams { max_rounds: 150, patience: 20, lr: 0.1, ..GbtParams::default() },
            walk: WalkParams { walk_length: 20, walks_per_node: 4, ..WalkParams::default() },
            skipgram: SkipGramParams { dim: 16, ..SkipGramParams::default() },
            rotate: RotateParams { dim: 16, epochs: 10, ..RotateParams::default() },
            gnn: GnnHyper { hidden: 16, epochs: 40, ..GnnHyper::default() },
        }
    }
}

fn sha_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex_digest(&h.finalize())
}

/// A (model, regressor) pair with the parameters that affect it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: ModelName,
    pub regressor: RegressorKind,
}

impl ModelConfig {
    /// Seed-independent hash of the configuration and the stages it uses.
    pub fn hash(&self, split: &SplitSpec, params: &PipelineParams) -> String {
        let stage = match self.name.encoder() {
            Encoder::None => serde_json::Value::Null,
            Encoder::Node2vec => serde_json::json!({"walk": params.walk, "skipgram": params.skipgram, "view": STATIC_VIEW}),
            Encoder::Rotate => serde_json::json!({"rotate": params.rotate, "view": STATIC_VIEW}),
            Encoder::Gnn(v) => serde_json::json!({"gnn": params.gnn, "variant": v}),
        };
        let reg = match self.regressor {
            RegressorKind::Forest => serde_json::to_value(params.forest),
            RegressorKind::Gbt => serde_json::to_value(params.gbt),
        }
        .expect("params serialize");
        let v = serde_json::json!({
            "name": self.name,
            "regressor": self.regressor,
            "information_set": self.name.information_set(),
            "split": split,
            "encoder": stage,
            "regressor_params": reg,
            "version": env!("CARGO_PKG_VERSION"),
        });
        sha_hex(v.to_string().as_bytes())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Embedding and regressor training.
    Fit,
    /// Early stopping and model selection.
    Tune,
    /// Scoring emitted predictions.
    Score,
}

/// Records every salary read, by phase.
#[derive(Debug, Default)]
pub struct TargetLog {
    reads: Mutex<Vec<(Phase, InstanceKey)>>,
}

impl TargetLog {
    /// Log-space targets of `records`, logged as read in `phase`.
    pub fn targets(&self, records: &[&PlayerSeasonRecord], phase: Phase) -> Result<Vec<f64>> {
        let mut log = self.reads.lock().expect("log lock");
        records
            .iter()
            .map(|r| {
                log.push((phase, r.key()));
                make_target(r.salary_usd)
            })
            .collect()
    }

    pub fn reads(&self) -> Vec<(Phase, InstanceKey)> {
        self.reads.lock().expect("log lock").clone()
    }
}

/// Serialized artifacts that must not depend on test-season salaries.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub embedding: Option<Vec<u8>>,
    pub gnn_model: Option<Vec<u8>>,
    pub encoder: String,
    pub imputer: String,
}

/// Design matrices and targets for one (model, seed).
#[derive(Clone, Debug)]
pub struct Prepared {
    pub name: ModelName,
    pub seed: u64,
    pub x_train: DesignMatrix,
    pub y_train: Vec<f64>,
    pub x_val: DesignMatrix,
    pub y_val: Vec<f64>,
    pub x_test: DesignMatrix,
    pub artifacts: Artifacts,
    /// Records fingerprint of train then val rows.
    pub fit_fingerprint: String,
    pub fit_seasons: BTreeSet<Season>,
    /// Latest season of any record visible to the run.
    pub max_season_read: Season,
    pub embed_seconds: f64,
}

/// Embedding vectors of the instances, keyed by instance.
fn instance_block(table: &EmbeddingTable, keys: &[&InstanceKey], collapse: bool) -> Result<EmbeddingBlock> {
    let mut block = EmbeddingBlock {
        dim: table.width(),
        ..EmbeddingBlock::default()
    };
    for k in keys {
        let node = if collapse { player_key(&k.player_id) } else { player_season_key(&k.player_id, k.season) };
        let v = table.get(&node).ok_or_else(|| Error::Graph(format!("no embedding for node {node}")))?;
        block.vectors.insert((*k).clone(), v.to_vec());
    }
    Ok(block)
}

struct Embedded {
    block: EmbeddingBlock,
    artifacts: (Option<Vec<u8>>, Option<Vec<u8>>),
}

fn ps_labels(records: &[&PlayerSeasonRecord], y: &[f64]) -> Vec<(String, f64)> {
    records.iter().zip(y).map(|(r, &t)| (player_season_key(&r.player_id, r.season), t)).collect()
}

/// Mean target per player node.
fn player_labels(records: &[&PlayerSeasonRecord], y: &[f64]) -> Vec<(String, f64)> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (r, &t) in records.iter().zip(y) {
        let e = acc.entry(player_key(&r.player_id)).or_insert((0.0, 0));
        e.0 += t;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

#[allow(clippy::too_many_arguments)]
fn embed(
    name: ModelName,
    dataset: &Dataset,
    split: &Split,
    test_season: Season,
    all: &[&InstanceKey],
    labels: (&[&PlayerSeasonRecord], &[f64], &[&PlayerSeasonRecord], &[f64]),
    params: &PipelineParams,
    seed: u64,
) -> Result<Option<Embedded>> {
    let enc = name.encoder();
    if enc == Encoder::None {
        return Ok(None);
    }
    let stage_seed = mix_seed(&[seed, name.index(), 0x454d]);
    let graph = build_graph(dataset, BuildOptions::with_events(true))?;
    let out = match enc {
        Encoder::None => unreachable!(),
        Encoder::Node2vec | Encoder::Rotate => {
            let view = season_view(&graph, STATIC_VIEW, test_season)?;
            let table = if enc == Encoder::Node2vec {
                let corpus = node2vec_walks(&view, &params.walk, stage_seed)?;
                train_skipgram(&corpus, &params.skipgram, stage_seed, &view.fingerprint())?.table
            } else {
                train_rotate_view(&view, &params.rotate, stage_seed)?.table
            };
            Embedded {
                block: instance_block(&table, all, false)?,
                artifacts: (Some(table.to_bytes()), None),
            }
        }
        Encoder::Gnn(variant) => {
            let (tr, ytr, va, yva) = labels;
            let view: GraphView = season_view(&graph, variant.view_variant(), test_season)?;
            let (train_l, val_l) = if variant == GnnVariant::V1 {
                (player_labels(tr, ytr), player_labels(va, yva))
            } else {
                (ps_labels(tr, ytr), ps_labels(va, yva))
            };
            if variant == GnnVariant::V2Ind {
                let test_nodes: Vec<String> = split.test.records.iter().map(|r| player_season_key(&r.player_id, r.season)).collect();
                let masked = inductive_mask(&view, &test_nodes)?;
                let out = train_gnn(&masked.train, variant, &train_l, &val_l, &params.gnn, stage_seed)?;
                let inferred = infer_inductive(&out.model, &view, &test_nodes)?;
                let mut block = EmbeddingBlock {
                    dim: out.table.width(),
                    flag_isolation: true,
                    ..EmbeddingBlock::default()
                };
                for k in all {
                    let node = player_season_key(&k.player_id, k.season);
                    if inferred.structurally_isolated.contains(&node) {
                        block.isolated.insert((*k).clone());
                        continue;
                    }
                    let v = out
                        .table
                        .get(&node)
                        .or_else(|| inferred.vectors.get(&node).map(Vec::as_slice))
                        .ok_or_else(|| Error::Graph(format!("no embedding for node {node}")))?;
                    block.vectors.insert((*k).clone(), v.to_vec());
                }
                Embedded {
                    block,
                    artifacts: (Some(out.table.to_bytes()), Some(out.model.to_bytes())),
                }
            } else {
                let out = train_gnn(&view, variant, &train_l, &val_l, &params.gnn, stage_seed)?;
                Embedded {
                    block: instance_block(&out.table, all, variant == GnnVariant::V1)?,
                    artifacts: (Some(out.table.to_bytes()), Some(out.model.to_bytes())),
                }
            }
        }
    };
    Ok(Some(out))
}

fn check_information_set(name: ModelName, x: &DesignMatrix) -> Result<()> {
    let allowed = name.information_set();
    if let Some(c) = x.columns.iter().find(|c| !allowed.contains(&c.provenance)) {
        return Err(Error::InvalidInput(format!("{name} design matrix contains {} column `{}`", c.provenance, c.name)));
    }
    Ok(())
}

/// Builds design matrices for `name`: restricts to seasons up to the test
/// season, trains the embedding (if any) and fits preprocessing on train.
pub fn prepare(dataset: &Dataset, name: ModelName, spec: &SplitSpec, seed: u64, params: &PipelineParams, log: &TargetLog) -> Result<Prepared> {
    spec.check()?;
    let test_season = spec.test_season();
    let visible = dataset.filter_records(|r| r.season <= test_season);
    let mut visible = visible;
    visible.awards.retain(|a| a.season_awarded <= test_season);
    visible.injuries.retain(|i| i.season_of_injury <= test_season);
    let max_season_read = visible.records.iter().map(|r| r.season).max().unwrap_or(test_season);
    let split = split_by_season(&visible, spec)?;
    if split.train.is_empty() || split.val.is_empty() || split.test.is_empty() {
        return Err(Error::InvalidInput("train, validation and test splits must all be nonempty".into()));
    }
    let (enc, imp) = fit_encoder_imputer(&split.train)?;
    let tr: Vec<&PlayerSeasonRecord> = split.train.records.iter().collect();
    let va: Vec<&PlayerSeasonRecord> = split.val.records.iter().collect();
    let te: Vec<&PlayerSeasonRecord> = split.test.records.iter().collect();
    let y_train = log.targets(&tr, Phase::Fit)?;
    let y_val = log.targets(&va, Phase::Tune)?;
    let all_keys: Vec<InstanceKey> = tr.iter().chain(&va).chain(&te).map(|r| r.key()).collect();
    let all: Vec<&InstanceKey> = all_keys.iter().collect();
    let t0 = Instant::now();
    let emb = embed(name, &visible, &split, test_season, &all, (&tr, &y_train, &va, &y_val), params, seed)?;
    let embed_seconds = t0.elapsed().as_secs_f64();
    let spec_f = FusionSpec {
        include_meta: name == ModelName::StrongBaseline,
        temporal_offset: name == ModelName::V1Stats,
    };
    let block = emb.as_ref().map(|e| &e.block);
    let build = |rows: &[&PlayerSeasonRecord]| -> Result<DesignMatrix> {
        let tab = tabular_block(rows, &visible.schema, &enc, &imp)?;
        let x = fuse_features(&tab, block, spec_f)?;
        check_information_set(name, &x)?;
        Ok(x)
    };
    let mut fit_rows = split.train.clone();
    fit_rows.records.extend(split.val.records.iter().cloned());
    let (x_train, x_val, x_test) = (build(&tr)?, build(&va)?, build(&te)?);
    let (embedding, gnn_model) = emb.map(|e| e.artifacts).unwrap_or_default();
    Ok(Prepared {
        name,
        seed,
        x_train,
        y_train,
        x_val,
        y_val,
        x_test,
        artifacts: Artifacts {
            embedding,
            gnn_model,
            encoder: serde_json::to_string(&enc)?,
            imputer: serde_json::to_string(&imp)?,
        },
        fit_fingerprint: fit_rows.records_fingerprint(),
        fit_seasons: spec.train_seasons.union(&spec.val_seasons).copied().collect(),
        max_season_read,
        embed_seconds,
    })
}

/// One fitted regressor's outputs.
#[derive(Clone, Debug)]
pub struct RegressorRun {
    pub config: ModelConfig,
    pub seed: u64,
    pub columns: Vec<String>,
    /// Test-split predictions.
    pub predictions: PredictionSet,
    /// Train+val fitted values, for residual thresholds.
    pub fitted: PredictionSet,
    pub residuals: ResidualSample,
    pub model_bytes: Vec<u8>,
    pub fit_seconds: f64,
}

fn prediction_set(name: &str, kind: RegressorKind, seed: u64, keys: &[InstanceKey], y: &[f64], p: &[f64]) -> Result<PredictionSet> {
    let rows = keys
        .iter()
        .zip(y.iter().zip(p))
        .map(|(k, (&t, &h))| PredictionRow::new(k.clone(), t, h))
        .collect::<Result<Vec<_>>>()?;
    Ok(PredictionSet::new(name, kind, seed, rows))
}

/// Fits `kind` on prepared matrices and scores the test split.
pub fn fit_regressor(dataset: &Dataset, prep: &Prepared, kind: RegressorKind, params: &PipelineParams, log: &TargetLog) -> Result<RegressorRun> {
    let t0 = Instant::now();
    let model: FittedRegressor = match kind {
        RegressorKind::Forest => fit_forest(&prep.x_train, &prep.y_train, &params.forest, mix_seed(&[prep.seed, prep.name.index(), 0x5246]))?,
        RegressorKind::Gbt => fit_boosted(&prep.x_train, &prep.y_train, &prep.x_val, &prep.y_val, &params.gbt)?,
    };
    let fit_seconds = t0.elapsed().as_secs_f64();
    let index = dataset.index();
    let records = |x: &DesignMatrix| -> Vec<&PlayerSeasonRecord> { x.keys.iter().map(|k| &dataset.records[index[k]]).collect() };
    let test_rows = records(&prep.x_test);
    let y_test = log.targets(&test_rows, Phase::Score)?;
    let p_test = model.predict(&prep.x_test)?;
    let name = prep.name.as_str();
    let predictions = prediction_set(name, kind, prep.seed, &prep.x_test.keys, &y_test, &p_test)?;
    let mut fit_keys = prep.x_train.keys.clone();
    fit_keys.extend(prep.x_val.keys.iter().cloned());
    let mut fit_y = prep.y_train.clone();
    fit_y.extend(&prep.y_val);
    let mut fit_p = model.predict(&prep.x_train)?;
    fit_p.extend(model.predict(&prep.x_val)?);
    let fitted = prediction_set(name, kind, prep.seed, &fit_keys, &fit_y, &fit_p)?;
    let residuals = ResidualSample {
        values: fitted.rows.iter().map(|r| (r.y_true_dollars - r.y_pred_dollars).abs()).collect(),
        seasons: fit_keys.iter().map(|k| k.season).collect(),
        fingerprint: prep.fit_fingerprint.clone(),
    };
    Ok(RegressorRun {
        config: ModelConfig { name: prep.name, regressor: kind },
        seed: prep.seed,
        columns: prep.x_train.column_names(),
        predictions,
        fitted,
        residuals,
        model_bytes: model.to_bytes(),
        fit_seconds,
    })
}

/// Runs one configuration end to end.
pub fn run_config(dataset: &Dataset, config: ModelConfig, spec: &SplitSpec, seed: u64, params: &PipelineParams) -> Result<RegressorRun> {
    let log = TargetLog::default();
    let ctx = || format!("{} / {} / seed {seed}", config.name, config.regressor);
    let prep = prepare(dataset, config.name, spec, seed, params, &log).map_err(|e| e.context(ctx()))?;
    fit_regressor(dataset, &prep, config.regressor, params, &log).map_err(|e| e.context(ctx()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub model: ModelName,
    pub seed: u64,
    pub embed_seconds: f64,
    pub fit_seconds: BTreeMap<String, f64>,
    pub test_rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub dataset_fingerprint: String,
    pub split: SplitSpec,
    pub seeds: Vec<u64>,
    pub models: Vec<ModelName>,
    pub regressors: Vec<RegressorKind>,
    pub params: PipelineParams,
    pub config_hashes: BTreeMap<String, String>,
    pub jobs: Vec<JobRecord>,
    pub coverage: BTreeMap<String, usize>,
    pub intersection_size: usize,
    pub intersection: Vec<InstanceKey>,
    pub complete: bool,
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct Suite {
    pub manifest: Manifest,
    pub runs: Vec<RegressorRun>,
    pub intersection: BTreeSet<InstanceKey>,
    pub log: TargetLog,
}

impl Suite {
    pub fn run(&self, name: ModelName, kind: RegressorKind, seed: u64) -> Option<&RegressorRun> {
        self.runs.iter().find(|r| r.config.name == name && r.config.regressor == kind && r.seed == seed)
    }
}

/// Suite failure with the manifest of what completed.
#[derive(Debug)]
pub struct SuiteFailure {
    pub manifest: Manifest,
    pub error: Error,
}

/// Cartesian product of models × seeds × regressors; embeddings are
/// trained once per (model, seed) and shared by both regressors.
pub fn run_suite(dataset: &Dataset, models: &[ModelName], seeds: &[u64], regressors: &[RegressorKind], spec: &SplitSpec, params: &PipelineParams) -> std::result::Result<Suite, Box<SuiteFailure>> {
    let mut manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        dataset_fingerprint: dataset.fingerprint(),
        split: spec.clone(),
        seeds: seeds.to_vec(),
        models: models.to_vec(),
        regressors: regressors.to_vec(),
        params: *params,
        config_hashes: BTreeMap::new(),
        jobs: Vec::new(),
        coverage: BTreeMap::new(),
        intersection_size: 0,
        intersection: Vec::new(),
        complete: false,
        error: None,
    };
    for &name in models {
        for &regressor in regressors {
            let c = ModelConfig { name, regressor };
            manifest.config_hashes.insert(format!("{name}:{regressor}"), c.hash(spec, params));
        }
    }
    let fail = |mut manifest: Manifest, error: Error| {
        manifest.error = Some(error.to_string());
        Box::new(SuiteFailure { manifest, error })
    };
    if models.is_empty() || seeds.is_empty() || regressors.is_empty() {
        return Err(fail(manifest, Error::Config("suite needs at least one model, seed and regressor".into())));
    }
    let log = TargetLog::default();
    let jobs: Vec<(ModelName, u64)> = models.iter().flat_map(|&m| seeds.iter().map(move |&s| (m, s))).collect();
    let results: Vec<Result<(JobRecord, Vec<RegressorRun>)>> = jobs
        .par_iter()
        .map(|&(name, seed)| {
            let ctx = format!("{name} / seed {seed}");
            let prep = prepare(dataset, name, spec, seed, params, &log).map_err(|e| e.context(ctx.clone()))?;
            let mut runs = Vec::new();
            let mut fit_seconds = BTreeMap::new();
            for &kind in regressors {
                let run = fit_regressor(dataset, &prep, kind, params, &log).map_err(|e| e.context(format!("{name} / {kind} / seed {seed}")))?;
                fit_seconds.insert(kind.to_string(), run.fit_seconds);
                runs.push(run);
            }
            let rec = JobRecord {
                model: name,
                seed,
                embed_seconds: prep.embed_seconds,
                fit_seconds,
                test_rows: prep.x_test.n_rows(),
            };
            Ok((rec, runs))
        })
        .collect();
    let mut runs = Vec::new();
    for r in results {
        match r {
            Ok((rec, rs)) => {
                for run in &rs {
                    manifest.coverage.insert(format!("{}:{}:{}", run.config.name, run.config.regressor, run.seed), run.predictions.rows.len());
                }
                manifest.jobs.push(rec);
                runs.extend(rs);
            }
            Err(e) => return Err(fail(manifest, e)),
        }
    }
    let sets: Vec<PredictionSet> = runs.iter().map(|r| r.predictions.clone()).collect();
    let intersection = match shared_test_intersection(&sets) {
        Ok(i) => i,
        Err(e) => return Err(fail(manifest, e)),
    };
    manifest.intersection_size = intersection.len();
    manifest.intersection = intersection.iter().cloned().collect();
    manifest.complete = true;
    Ok(Suite {
        manifest,
        runs,
        intersection,
        log,
    })
}
