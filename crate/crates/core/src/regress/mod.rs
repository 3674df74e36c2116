//! Tree-ensemble regressors and leakage-safe tabular preprocessing.

pub mod ensemble;
pub mod tree;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{invert_target, Dataset, FeatureGroup, FeatureKind, FeatureSchema, InstanceKey, PlayerSeasonRecord};
use crate::error::{Error, Result};
use crate::prediction::RegressorKind;
pub use ensemble::{fit_gbt, fit_random_forest, ForestModel, ForestParams, GbtModel, GbtParams};

/// Unseen or missing category code.
pub const UNSEEN: f64 = -1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Stat,
    Control,
    Meta,
    Embed,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Stat => "stat",
            Self::Control => "control",
            Self::Meta => "meta",
            Self::Embed => "embed",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<FeatureGroup> for Provenance {
    fn from(g: FeatureGroup) -> Self {
        match g {
            FeatureGroup::Stat => Self::Stat,
            FeatureGroup::Control => Self::Control,
            FeatureGroup::Meta => Self::Meta,
        }
    }
}

/// Category → code maps learned from training rows; codes follow sorted
/// category order starting at 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrdinalEncoder {
    pub columns: Vec<String>,
    pub maps: Vec<BTreeMap<String, i64>>,
    pub fit_fingerprint: String,
}

impl OrdinalEncoder {
    pub fn encode(&self, column: usize, value: Option<&str>) -> f64 {
        value
            .and_then(|v| self.maps[column].get(v))
            .map_or(UNSEEN, |&c| c as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MedianImputer {
    pub columns: Vec<String>,
    pub medians: Vec<f64>,
    pub fit_fingerprint: String,
}

impl MedianImputer {
    pub fn fill(&self, column: usize, value: Option<f64>) -> f64 {
        value.unwrap_or(self.medians[column])
    }
}

/// Median of the present values; even counts average the middle two.
pub fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 0 { (v[m - 1] + v[m]) / 2.0 } else { v[m] })
}

fn meta_value<'a>(r: &'a PlayerSeasonRecord, name: &str) -> Option<&'a str> {
    match name {
        "team_id" => r.meta.team_id.as_deref(),
        "agent_id" => r.meta.agent_id.as_deref(),
        _ => None,
    }
}

fn numeric_columns(schema: &FeatureSchema) -> Vec<String> {
    schema
        .columns
        .iter()
        .filter(|c| c.kind == FeatureKind::Numeric)
        .map(|c| c.name.clone())
        .collect()
}

fn categorical_columns(schema: &FeatureSchema) -> Vec<String> {
    schema
        .columns
        .iter()
        .filter(|c| c.kind == FeatureKind::Categorical)
        .map(|c| c.name.clone())
        .collect()
}

/// Fits on `train` only; both outputs record the training-rows fingerprint.
pub fn fit_encoder_imputer(train: &Dataset) -> Result<(OrdinalEncoder, MedianImputer)> {
    if train.is_empty() {
        return Err(Error::InvalidInput("cannot fit preprocessing on an empty training split".into()));
    }
    let fp = train.records_fingerprint();
    let cat = categorical_columns(&train.schema);
    let maps = cat
        .iter()
        .map(|name| {
            let seen: BTreeSet<&str> = train.records.iter().filter_map(|r| meta_value(r, name)).collect();
            seen.into_iter().enumerate().map(|(i, s)| (s.to_string(), i as i64)).collect()
        })
        .collect();
    let num = numeric_columns(&train.schema);
    let mut medians = Vec::with_capacity(num.len());
    for (j, name) in num.iter().enumerate() {
        let m = median(train.records.iter().filter_map(|r| r.numeric_features()[j]))
            .ok_or_else(|| Error::InvalidInput(format!("numeric column `{name}` has no observed value in training rows")))?;
        medians.push(m);
    }
    Ok((
        OrdinalEncoder {
            columns: cat,
            maps,
            fit_fingerprint: fp.clone(),
        },
        MedianImputer {
            columns: num,
            medians,
            fit_fingerprint: fp,
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    pub keys: Vec<InstanceKey>,
    pub columns: Vec<Column>,
    pub values: Array2<f64>,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.keys.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn count(&self, p: Provenance) -> usize {
        self.columns.iter().filter(|c| c.provenance == p).count()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Rows reordered by `order` (indices into the current rows).
    pub fn select_rows(&self, order: &[usize]) -> Self {
        Self {
            keys: order.iter().map(|&i| self.keys[i].clone()).collect(),
            columns: self.columns.clone(),
            values: self.values.select(ndarray::Axis(0), order),
        }
    }
}

/// Stats and controls (imputed) followed by encoded meta labels, for
/// `records` in the given order.
pub fn tabular_block(records: &[&PlayerSeasonRecord], schema: &FeatureSchema, enc: &OrdinalEncoder, imp: &MedianImputer) -> Result<DesignMatrix> {
    let num = numeric_columns(schema);
    let cat = categorical_columns(schema);
    if num != imp.columns || cat != enc.columns {
        return Err(Error::InvalidInput("preprocessing was fitted on a different schema".into()));
    }
    let group = |name: &str| {
        schema
            .columns
            .iter()
            .find(|c| c.name == name)
            .map(|c| Provenance::from(c.group))
            .expect("column in schema")
    };
    let mut columns: Vec<Column> = num.iter().map(|n| Column { name: n.clone(), provenance: group(n) }).collect();
    columns.extend(cat.iter().map(|n| Column {
        name: n.clone(),
        provenance: Provenance::Meta,
    }));
    let width = columns.len();
    let mut values = Array2::zeros((records.len(), width));
    for (i, r) in records.iter().enumerate() {
        let feats = r.numeric_features();
        if feats.len() != num.len() {
            return Err(Error::InvalidInput(format!("record {} has {} numeric values, schema has {}", r.key(), feats.len(), num.len())));
        }
        for (j, v) in feats.into_iter().enumerate() {
            values[[i, j]] = imp.fill(j, v);
        }
        for (j, name) in cat.iter().enumerate() {
            values[[i, num.len() + j]] = enc.encode(j, meta_value(r, name));
        }
    }
    Ok(DesignMatrix {
        keys: records.iter().map(|r| r.key()).collect(),
        columns,
        values,
    })
}

/// Per-instance structural embeddings for fusion.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbeddingBlock {
    pub dim: usize,
    pub vectors: BTreeMap<InstanceKey, Vec<f64>>,
    /// Instances without admissible edges; fused as zeros plus a flag.
    pub isolated: BTreeSet<InstanceKey>,
    /// Emit the isolation flag column.
    pub flag_isolation: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionSpec {
    pub include_meta: bool,
    /// Append `years_since_draft / 10` as a control column.
    pub temporal_offset: bool,
}

pub const ISOLATION_COLUMN: &str = "structurally_isolated";
pub const OFFSET_COLUMN: &str = "temporal_offset";

/// Column order: stats, controls, [meta], [embedding dims], [isolation
/// flag], [temporal offset].
pub fn fuse_features(tab: &DesignMatrix, emb: Option<&EmbeddingBlock>, spec: FusionSpec) -> Result<DesignMatrix> {
    let keep: Vec<usize> = (0..tab.n_cols())
        .filter(|&j| spec.include_meta || tab.columns[j].provenance != Provenance::Meta)
        .collect();
    let mut columns: Vec<Column> = keep.iter().map(|&j| tab.columns[j].clone()).collect();
    let n = tab.n_rows();
    let mut blocks: Vec<Array2<f64>> = vec![tab.values.select(ndarray::Axis(1), &keep)];
    if let Some(e) = emb {
        let mut z = Array2::zeros((n, e.dim));
        let mut flag = Array2::zeros((n, 1));
        for (i, k) in tab.keys.iter().enumerate() {
            match e.vectors.get(k) {
                Some(v) if v.len() == e.dim && !e.isolated.contains(k) => {
                    z.row_mut(i).assign(&ndarray::ArrayView1::from(v.as_slice()));
                }
                Some(v) if v.len() != e.dim => {
                    return Err(Error::InvalidInput(format!("embedding for {k} has width {}, expected {}", v.len(), e.dim)));
                }
                _ if e.isolated.contains(k) => flag[[i, 0]] = 1.0,
                _ => return Err(Error::InvalidInput(format!("no embedding for {k} and it is not flagged isolated"))),
            }
        }
        columns.extend((0..e.dim).map(|d| Column {
            name: format!("z{d:03}"),
            provenance: Provenance::Embed,
        }));
        blocks.push(z);
        if e.flag_isolation {
            columns.push(Column {
                name: ISOLATION_COLUMN.into(),
                provenance: Provenance::Embed,
            });
            blocks.push(flag);
        }
    }
    if spec.temporal_offset {
        let j = tab
            .column_index("years_since_draft")
            .ok_or_else(|| Error::InvalidInput("temporal offset needs years_since_draft".into()))?;
        blocks.push(tab.values.column(j).mapv(|v| v / 10.0).insert_axis(ndarray::Axis(1)));
        columns.push(Column {
            name: OFFSET_COLUMN.into(),
            provenance: Provenance::Control,
        });
    }
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    let values = ndarray::concatenate(ndarray::Axis(1), &views)
        .expect("row counts agree")
        .as_standard_layout()
        .into_owned();
    Ok(DesignMatrix {
        keys: tab.keys.clone(),
        columns,
        values,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Model {
    Forest(ForestModel),
    Gbt(GbtModel),
}

/// A fitted ensemble bound to the column schema it was trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedRegressor {
    pub columns: Vec<Column>,
    pub model: Model,
}

const MODEL_MAGIC: &[u8; 8] = b"RCTREE1\n";

impl FittedRegressor {
    pub fn kind(&self) -> RegressorKind {
        match self.model {
            Model::Forest(_) => RegressorKind::Forest,
            Model::Gbt(_) => RegressorKind::Gbt,
        }
    }

    fn check_schema(&self, x: &DesignMatrix) -> Result<()> {
        if x.columns == self.columns {
            return Ok(());
        }
        let want: BTreeSet<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        let have: BTreeSet<&str> = x.columns.iter().map(|c| c.name.as_str()).collect();
        let missing: Vec<String> = want.difference(&have).map(|s| s.to_string()).collect();
        let extra: Vec<String> = have.difference(&want).map(|s| s.to_string()).collect();
        Err(Error::Schema { missing, extra })
    }

    /// Log-space predictions, in row order.
    pub fn predict(&self, x: &DesignMatrix) -> Result<Vec<f64>> {
        self.check_schema(x)?;
        let rows: Vec<Vec<f64>> = x.values.rows().into_iter().map(|r| r.to_vec()).collect();
        Ok(rows
            .par_iter()
            .map(|r| match &self.model {
                Model::Forest(m) => m.predict_row(r),
                Model::Gbt(m) => m.predict_row(r),
            })
            .collect())
    }

    pub fn predict_dollars(&self, x: &DesignMatrix) -> Result<Vec<f64>> {
        self.predict(x)?.into_iter().map(invert_target).collect()
    }

    /// Magic, `u64` header length, JSON header with the columns and kind,
    /// then the model body as JSON.
    pub fn to_bytes(&self) -> Vec<u8> {
        #[derive(Serialize)]
        struct Header<'a> {
            version: u32,
            kind: &'a str,
            columns: &'a [Column],
        }
        let header = serde_json::to_vec(&Header {
            version: 1,
            kind: self.kind().as_str(),
            columns: &self.columns,
        })
        .expect("header serializes");
        let body = serde_json::to_vec(&self.model).expect("model serializes");
        let mut out = Vec::with_capacity(16 + header.len() + body.len());
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MODEL_MAGIC {
            return Err(Error::InvalidInput("not a serialized regressor".into()));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        #[derive(Deserialize)]
        struct Header {
            columns: Vec<Column>,
        }
        let end = 16usize.checked_add(len).filter(|&e| e <= bytes.len()).ok_or_else(|| Error::InvalidInput("truncated regressor header".into()))?;
        let header: Header = serde_json::from_slice(&bytes[16..end])?;
        let model: Model = serde_json::from_slice(&bytes[end..])?;
        Ok(Self {
            columns: header.columns,
            model,
        })
    }
}

pub fn fit_forest(x: &DesignMatrix, y: &[f64], params: &ForestParams, seed: u64) -> Result<FittedRegressor> {
    Ok(FittedRegressor {
        columns: x.columns.clone(),
        model: Model::Forest(fit_random_forest(&x.values, y, params, seed)?),
    })
}

pub fn fit_boosted(x: &DesignMatrix, y: &[f64], x_val: &DesignMatrix, y_val: &[f64], params: &GbtParams) -> Result<FittedRegressor> {
    if x.columns != x_val.columns {
        return Err(Error::InvalidInput("train and validation columns differ".into()));
    }
    Ok(FittedRegressor {
        columns: x.columns.clone(),
        model: Model::Gbt(fit_gbt(&x.values, y, &x_val.values, y_val, params)?),
    })
}
