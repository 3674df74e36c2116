//! Canonical dataset representation shared by every stage: player-season
//! records, the log-salary target transform and forecasting splits.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::prediction::PredictionSet;

pub type Season = i32;

/// Largest log-target accepted by [`invert_target`]; `exp(40)` is far above
/// any plausible salary.
pub const MAX_LOG_TARGET: f64 = 40.0;

/// Names of the career-control columns, in schema order.
pub const CONTROL_NAMES: [&str; 5] = [
    "age_now",
    "draft_year",
    "overall_pick",
    "round_pick",
    "years_since_draft",
];

/// A (player, season) pair, the unit of prediction.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InstanceKey {
    pub player_id: String,
    pub season: Season,
}

impl InstanceKey {
    pub fn new(player_id: impl Into<String>, season: Season) -> Self {
        Self {
            player_id: player_id.into(),
            season,
        }
    }
}

impl fmt::Display for InstanceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.player_id, self.season)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Stat,
    Control,
    Meta,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub kind: FeatureKind,
    pub group: FeatureGroup,
}

/// Ordered column declaration carried with a dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub columns: Vec<FeatureColumn>,
}

impl FeatureSchema {
    /// Stat columns (in order) followed by the fixed controls and the two
    /// categorical meta labels.
    pub fn with_stats<S: AsRef<str>>(stat_names: &[S]) -> Self {
        let mut columns: Vec<FeatureColumn> = stat_names
            .iter()
            .map(|n| FeatureColumn {
                name: n.as_ref().to_string(),
                kind: FeatureKind::Numeric,
                group: FeatureGroup::Stat,
            })
            .collect();
        columns.extend(CONTROL_NAMES.iter().map(|n| FeatureColumn {
            name: n.to_string(),
            kind: FeatureKind::Numeric,
            group: FeatureGroup::Control,
        }));
        columns.extend(["team_id", "agent_id"].iter().map(|n| FeatureColumn {
            name: n.to_string(),
            kind: FeatureKind::Categorical,
            group: FeatureGroup::Meta,
        }));
        Self { columns }
    }

    pub fn names_in(&self, group: FeatureGroup) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|c| c.group == group)
            .map(|c| c.name.as_str())
            .collect()
    }

    pub fn stat_names(&self) -> Vec<&str> {
        self.names_in(FeatureGroup::Stat)
    }

    pub fn n_stats(&self) -> usize {
        self.columns
            .iter()
            .filter(|c| c.group == FeatureGroup::Stat)
            .count()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Controls {
    pub age_now: Option<f64>,
    pub draft_year: Option<i32>,
    pub overall_pick: Option<u32>,
    pub round_pick: Option<u32>,
    pub years_since_draft: Option<i32>,
}

impl Controls {
    /// Values in [`CONTROL_NAMES`] order; `None` marks a missing entry.
    pub fn values(&self) -> [Option<f64>; 5] {
        [
            self.age_now,
            self.draft_year.map(f64::from),
            self.overall_pick.map(f64::from),
            self.round_pick.map(f64::from),
            self.years_since_draft.map(f64::from),
        ]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub team_id: Option<String>,
    pub agent_id: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayerSeasonRecord {
    pub player_id: String,
    pub season: Season,
    /// Aligned with the schema's stat columns; `None` is a missing value.
    pub stats: Vec<Option<f64>>,
    pub controls: Controls,
    pub meta: Meta,
    pub salary_usd: f64,
    pub is_synthetic: bool,
}

impl PlayerSeasonRecord {
    pub fn key(&self) -> InstanceKey {
        InstanceKey::new(self.player_id.clone(), self.season)
    }

    /// Stat values followed by control values.
    pub fn numeric_features(&self) -> Vec<Option<f64>> {
        let mut v = self.stats.clone();
        v.extend(self.controls.values());
        v
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AwardEvent {
    pub player_id: String,
    pub season_awarded: Season,
    pub award_name: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjuryEvent {
    pub player_id: String,
    pub season_of_injury: Season,
    pub injury_type: String,
    pub games_missed: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub records: Vec<PlayerSeasonRecord>,
    pub awards: Vec<AwardEvent>,
    pub injuries: Vec<InjuryEvent>,
    /// Team registry, when one was supplied.
    pub teams: Option<Vec<String>>,
    /// Agent registry, when one was supplied.
    pub agents: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, records: Vec<PlayerSeasonRecord>) -> Self {
        Self {
            schema,
            records,
            awards: Vec::new(),
            injuries: Vec::new(),
            teams: None,
            agents: None,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn seasons(&self) -> BTreeSet<Season> {
        self.records.iter().map(|r| r.season).collect()
    }

    pub fn keys(&self) -> BTreeSet<InstanceKey> {
        self.records.iter().map(PlayerSeasonRecord::key).collect()
    }

    pub fn player_ids(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.player_id.as_str()).collect()
    }

    pub fn index(&self) -> BTreeMap<InstanceKey, usize> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.key(), i))
            .collect()
    }

    /// Same schema and event tables, records filtered by `keep`.
    pub fn filter_records(&self, mut keep: impl FnMut(&PlayerSeasonRecord) -> bool) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            awards: self.awards.clone(),
            injuries: self.injuries.clone(),
            teams: self.teams.clone(),
            agents: self.agents.clone(),
        }
    }

    /// SHA-256 over the canonical JSON encoding of the dataset.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("dataset serializes");
        hex_digest(&bytes)
    }

    /// Fingerprint of the record rows only (salaries included), used to tie
    /// fitted preprocessing back to the rows it saw.
    pub fn records_fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(&self.records).expect("records serialize");
        hex_digest(&bytes)
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// `ln(1 + salary)`.
pub fn make_target(salary_usd: f64) -> Result<f64> {
    if !salary_usd.is_finite() || salary_usd < 0.0 {
        return Err(Error::InvalidInput(format!(
            "salary must be a nonnegative finite number, got {salary_usd}"
        )));
    }
    Ok(salary_usd.ln_1p())
}

/// `exp(y) - 1`, the inverse of [`make_target`].
pub fn invert_target(log_target: f64) -> Result<f64> {
    if !log_target.is_finite() {
        return Err(Error::InvalidInput(format!(
            "log target must be finite, got {log_target}"
        )));
    }
    if log_target > MAX_LOG_TARGET {
        return Err(Error::InvalidInput(format!(
            "log target {log_target} exceeds {MAX_LOG_TARGET}"
        )));
    }
    Ok(log_target.exp_m1())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_seasons: BTreeSet<Season>,
    pub val_seasons: BTreeSet<Season>,
    pub test_seasons: BTreeSet<Season>,
}

impl Default for SplitSpec {
    /// Train 2020-2022, validate 2023, test 2024.
    fn default() -> Self {
        Self {
            train_seasons: (2020..=2022).collect(),
            val_seasons: [2023].into_iter().collect(),
            test_seasons: [2024].into_iter().collect(),
        }
    }
}

impl SplitSpec {
    pub fn new(
        train: impl IntoIterator<Item = Season>,
        val: impl IntoIterator<Item = Season>,
        test: impl IntoIterator<Item = Season>,
    ) -> Result<Self> {
        let spec = Self {
            train_seasons: train.into_iter().collect(),
            val_seasons: val.into_iter().collect(),
            test_seasons: test.into_iter().collect(),
        };
        spec.check()?;
        Ok(spec)
    }

    /// Non-empty, pairwise disjoint and in strict forecasting order.
    pub fn check(&self) -> Result<()> {
        let parts = [
            ("train", &self.train_seasons),
            ("val", &self.val_seasons),
            ("test", &self.test_seasons),
        ];
        for (name, set) in parts {
            if set.is_empty() {
                return Err(Error::Config(format!("{name} season set is empty")));
            }
        }
        let (tr_max, va_min, va_max, te_min) = (
            *self.train_seasons.last().unwrap(),
            *self.val_seasons.first().unwrap(),
            *self.val_seasons.last().unwrap(),
            *self.test_seasons.first().unwrap(),
        );
        if tr_max >= va_min || va_max >= te_min {
            return Err(Error::Config(format!(
                "seasons must satisfy max(train) < min(val) <= max(val) < min(test); got train<= {tr_max}, val {va_min}..={va_max}, test>= {te_min}"
            )));
        }
        Ok(())
    }

    pub fn test_season(&self) -> Season {
        *self.test_seasons.last().expect("checked non-empty")
    }

    pub fn is_train(&self, s: Season) -> bool {
        self.train_seasons.contains(&s)
    }

    pub fn is_val(&self, s: Season) -> bool {
        self.val_seasons.contains(&s)
    }

    pub fn is_test(&self, s: Season) -> bool {
        self.test_seasons.contains(&s)
    }
}

#[derive(Clone, Debug)]
pub struct Split {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    /// Records whose season falls in none of the three sets.
    pub dropped: usize,
}

pub fn split_by_season(dataset: &Dataset, spec: &SplitSpec) -> Result<Split> {
    spec.check()?;
    let present = dataset.seasons();
    let declared = spec
        .train_seasons
        .iter()
        .chain(&spec.val_seasons)
        .chain(&spec.test_seasons);
    for s in declared {
        if !present.contains(s) {
            return Err(Error::Config(format!("season {s} has no records")));
        }
    }
    let train = dataset.filter_records(|r| spec.is_train(r.season));
    let val = dataset.filter_records(|r| spec.is_val(r.season));
    let test = dataset.filter_records(|r| spec.is_test(r.season));
    let dropped = dataset.len() - train.len() - val.len() - test.len();
    Ok(Split {
        train,
        val,
        test,
        dropped,
    })
}

/// Keys present in every prediction set.
pub fn shared_test_intersection(sets: &[PredictionSet]) -> Result<BTreeSet<InstanceKey>> {
    let Some(first) = sets.first() else {
        return Err(Error::Eval("no prediction sets to intersect".into()));
    };
    let mut shared: BTreeSet<InstanceKey> = first.keys().cloned().collect();
    for set in &sets[1..] {
        let keys: BTreeSet<&InstanceKey> = set.keys().collect();
        shared.retain(|k| keys.contains(k));
    }
    if shared.is_empty() {
        let coverage: Vec<String> = sets
            .iter()
            .map(|s| format!("{}/{}/{}={}", s.model, s.regressor, s.seed, s.rows.len()))
            .collect();
        return Err(Error::Eval(format!(
            "empty shared test intersection; coverage: {}",
            coverage.join(", ")
        )));
    }
    Ok(shared)
}
