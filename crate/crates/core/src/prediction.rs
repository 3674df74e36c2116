use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{invert_target, InstanceKey};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorKind {
    Forest,
    Gbt,
}

impl RegressorKind {
    pub const ALL: [RegressorKind; 2] = [RegressorKind::Forest, RegressorKind::Gbt];

    pub fn as_str(self) -> &'static str {
        match self {
            RegressorKind::Forest => "forest",
            RegressorKind::Gbt => "gbt",
        }
    }
}

impl std::str::FromStr for RegressorKind {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| crate::Error::Config(format!("unknown regressor `{s}`")))
    }
}

impl fmt::Display for RegressorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub key: InstanceKey,
    pub y_true_log: f64,
    pub y_pred_log: f64,
    pub y_true_dollars: f64,
    pub y_pred_dollars: f64,
}

impl PredictionRow {
    pub fn new(key: InstanceKey, y_true_log: f64, y_pred_log: f64) -> Result<Self> {
        Ok(Self {
            key,
            y_true_log,
            y_pred_log,
            y_true_dollars: invert_target(y_true_log)?,
            y_pred_dollars: invert_target(y_pred_log)?,
        })
    }
}

/// Test-split predictions of one (model, regressor, seed) run, sorted by key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub model: String,
    pub regressor: RegressorKind,
    pub seed: u64,
    pub rows: Vec<PredictionRow>,
}

impl PredictionSet {
    pub fn new(model: impl Into<String>, regressor: RegressorKind, seed: u64, mut rows: Vec<PredictionRow>) -> Self {
        rows.sort_by(|a, b| a.key.cmp(&b.key));
        Self {
            model: model.into(),
            regressor,
            seed,
            rows,
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &InstanceKey> {
        self.rows.iter().map(|r| &r.key)
    }

    pub fn by_key(&self) -> BTreeMap<&InstanceKey, &PredictionRow> {
        self.rows.iter().map(|r| (&r.key, r)).collect()
    }

    /// Rows whose key passes `keep`, preserving order.
    pub fn restrict(&self, mut keep: impl FnMut(&InstanceKey) -> bool) -> PredictionSet {
        PredictionSet {
            model: self.model.clone(),
            regressor: self.regressor,
            seed: self.seed,
            rows: self.rows.iter().filter(|r| keep(&r.key)).cloned().collect(),
        }
    }

    /// `player_id,season,y_log,y_dollars,model,seed`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["player_id", "season", "y_log", "y_dollars", "model", "seed"])?;
        for r in &self.rows {
            w.write_record([
                r.key.player_id.clone(),
                r.key.season.to_string(),
                format!("{:.10}", r.y_pred_log),
                format!("{:.2}", r.y_pred_dollars),
                format!("{}:{}", self.model, self.regressor),
                self.seed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
