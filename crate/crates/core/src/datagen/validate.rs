use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, InstanceKey};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    NegativeSalary,
    InconsistentYearsSinceDraft,
    OrphanTeam,
    OrphanAgent,
    OrphanEventPlayer,
    DuplicateKey,
    StatArity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub key: Option<InstanceKey>,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

/// Reports invariant violations; never mutates the dataset.
pub fn validate(dataset: &Dataset) -> ValidationReport {
    let mut out = Vec::new();
    let mut push = |kind, key: Option<InstanceKey>, message: String| out.push(Violation { kind, key, message });
    let teams: Option<HashSet<&str>> = dataset.teams.as_ref().map(|t| t.iter().map(String::as_str).collect());
    let agents: Option<HashSet<&str>> = dataset.agents.as_ref().map(|a| a.iter().map(String::as_str).collect());
    let n_stats = dataset.schema.n_stats();
    let mut keys = BTreeSet::new();

    for r in &dataset.records {
        let key = r.key();
        if !keys.insert(key.clone()) {
            push(ViolationKind::DuplicateKey, Some(key.clone()), format!("duplicate record {key}"));
        }
        if !(r.salary_usd >= 0.0) {
            push(ViolationKind::NegativeSalary, Some(key.clone()), format!("salary {}", r.salary_usd));
        }
        if r.stats.len() != n_stats {
            push(
                ViolationKind::StatArity,
                Some(key.clone()),
                format!("{} stats, schema declares {n_stats}", r.stats.len()),
            );
        }
        if let (Some(dy), Some(ysd)) = (r.controls.draft_year, r.controls.years_since_draft) {
            if ysd != r.season - dy {
                push(
                    ViolationKind::InconsistentYearsSinceDraft,
                    Some(key.clone()),
                    format!("years_since_draft {ysd} but season - draft_year = {}", r.season - dy),
                );
            }
        }
        if let (Some(reg), Some(t)) = (&teams, &r.meta.team_id) {
            if !reg.contains(t.as_str()) {
                push(ViolationKind::OrphanTeam, Some(key.clone()), format!("team {t} not in registry"));
            }
        }
        if let (Some(reg), Some(a)) = (&agents, &r.meta.agent_id) {
            if !reg.contains(a.as_str()) {
                push(ViolationKind::OrphanAgent, Some(key.clone()), format!("agent {a} not in registry"));
            }
        }
    }

    let players: HashSet<&str> = dataset.records.iter().map(|r| r.player_id.as_str()).collect();
    let events = dataset
        .awards
        .iter()
        .map(|a| (&a.player_id, a.season_awarded, "award"))
        .chain(dataset.injuries.iter().map(|i| (&i.player_id, i.season_of_injury, "injury")));
    for (p, s, what) in events {
        if !players.contains(p.as_str()) {
            push(
                ViolationKind::OrphanEventPlayer,
                Some(InstanceKey::new(p.clone(), s)),
                format!("{what} for unknown player {p}"),
            );
        }
    }
    ValidationReport { violations: out }
}
