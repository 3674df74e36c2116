//! Typed knowledge graph over player-seasons with a temporal admissibility
//! mask, and the per-variant views consumed by embedding trainers.

mod tsv;
mod view;

pub use tsv::{read_tsv, write_tsv};
pub use view::{inductive_mask, season_view, GraphView, MaskedView, Variant, ViewEdge, ViewNode, FEATURE_DIM};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Season};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeType {
    Player,
    PlayerSeason,
    Team,
    Agent,
    Award,
    Injury,
}

impl NodeType {
    pub const ALL: [NodeType; 6] = [
        NodeType::Player,
        NodeType::PlayerSeason,
        NodeType::Team,
        NodeType::Agent,
        NodeType::Award,
        NodeType::Injury,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeType::Player => "Player",
            NodeType::PlayerSeason => "PlayerSeason",
            NodeType::Team => "Team",
            NodeType::Agent => "Agent",
            NodeType::Award => "Award",
            NodeType::Injury => "Injury",
        }
    }
}

impl FromStr for NodeType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        NodeType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Graph(format!("unknown node type `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    PlaysSeason,
    MemberOfTeam,
    RepresentedBy,
    WonPreviously,
    HasInjuryHistory,
    TeammateInSeason,
}

impl Relation {
    pub const ALL: [Relation; 6] = [
        Relation::PlaysSeason,
        Relation::MemberOfTeam,
        Relation::RepresentedBy,
        Relation::WonPreviously,
        Relation::HasInjuryHistory,
        Relation::TeammateInSeason,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::PlaysSeason => "PLAYS_SEASON",
            Relation::MemberOfTeam => "MEMBER_OF_TEAM",
            Relation::RepresentedBy => "REPRESENTED_BY",
            Relation::WonPreviously => "WON_PREVIOUSLY",
            Relation::HasInjuryHistory => "HAS_INJURY_HISTORY",
            Relation::TeammateInSeason => "TEAMMATE_IN_SEASON",
        }
    }

    /// Relations whose visibility is governed by an event season.
    pub fn is_event(self) -> bool {
        matches!(self, Relation::WonPreviously | Relation::HasInjuryHistory)
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Relation::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::Graph(format!("unknown relation `{s}`")))
    }
}

pub fn player_key(player_id: &str) -> String {
    format!("player:{player_id}")
}

pub fn player_season_key(player_id: &str, season: Season) -> String {
    format!("ps:{player_id}:{season}")
}

pub fn team_key(team_id: &str) -> String {
    format!("team:{team_id}")
}

pub fn agent_key(agent_id: &str) -> String {
    format!("agent:{agent_id}")
}

pub fn award_key(name: &str) -> String {
    format!("award:{name}")
}

pub fn injury_key(kind: &str) -> String {
    format!("injury:{kind}")
}

/// Season label carried by a node key; only player-season nodes have one.
pub fn season_label(key: &str) -> Option<Season> {
    let rest = key.strip_prefix("ps:")?;
    rest.rsplit_once(':')?.1.parse().ok()
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub src: String,
    pub relation: Relation,
    pub dst: String,
    pub event_season: Option<Season>,
    pub multiplicity: u32,
}

/// The admissibility function: may `edge` be visible when predicting `season`?
///
/// Every endpoint season label must be `<= season`; event relations further
/// require an event season strictly before `season`.
pub fn admissible(edge: &Edge, season: Season) -> bool {
    let endpoints_ok = [&edge.src, &edge.dst]
        .iter()
        .all(|k| season_label(k).is_none_or(|s| s <= season));
    if !endpoints_ok {
        return false;
    }
    match edge.event_season {
        Some(e) => e < season,
        None => !edge.relation.is_event(),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeGraph {
    pub nodes: BTreeMap<String, NodeType>,
    pub edges: Vec<Edge>,
    pub has_events: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BuildOptions {
    pub include_events: bool,
    /// Materialize TEAMMATE_IN_SEASON edges (otherwise reachable in 2 hops).
    pub teammate_edges: bool,
}

impl BuildOptions {
    pub fn with_events(include_events: bool) -> Self {
        Self {
            include_events,
            teammate_edges: false,
        }
    }
}

impl KnowledgeGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn count_relation(&self, r: Relation) -> usize {
        self.edges.iter().filter(|e| e.relation == r).count()
    }
}

/// Builds the graph from record affiliations and, optionally, award and
/// injury events. No edge carries salary information.
pub fn build_graph(dataset: &Dataset, options: BuildOptions) -> Result<KnowledgeGraph> {
    let mut g = KnowledgeGraph {
        has_events: options.include_events,
        ..KnowledgeGraph::default()
    };
    let edge = |g: &mut KnowledgeGraph, src: String, relation, dst: String, event_season| {
        g.edges.push(Edge {
            src,
            relation,
            dst,
            event_season,
            multiplicity: 1,
        })
    };
    let mut seen = BTreeSet::new();
    for r in &dataset.records {
        let ps = player_season_key(&r.player_id, r.season);
        if !seen.insert(ps.clone()) {
            return Err(Error::Graph(format!("duplicate player-season {ps}")));
        }
        let player = player_key(&r.player_id);
        g.nodes.insert(ps.clone(), NodeType::PlayerSeason);
        g.nodes.insert(player.clone(), NodeType::Player);
        edge(&mut g, ps.clone(), Relation::PlaysSeason, player, None);
        if let Some(t) = &r.meta.team_id {
            let k = team_key(t);
            g.nodes.insert(k.clone(), NodeType::Team);
            edge(&mut g, ps.clone(), Relation::MemberOfTeam, k, None);
        }
        if let Some(a) = &r.meta.agent_id {
            let k = agent_key(a);
            g.nodes.insert(k.clone(), NodeType::Agent);
            edge(&mut g, ps, Relation::RepresentedBy, k, None);
        }
    }

    if options.teammate_edges {
        let mut by_team: BTreeMap<(Season, &str), Vec<String>> = BTreeMap::new();
        for r in &dataset.records {
            if let Some(t) = &r.meta.team_id {
                by_team
                    .entry((r.season, t.as_str()))
                    .or_default()
                    .push(player_season_key(&r.player_id, r.season));
            }
        }
        for members in by_team.values() {
            for (i, a) in members.iter().enumerate() {
                for b in &members[i + 1..] {
                    edge(&mut g, a.clone(), Relation::TeammateInSeason, b.clone(), None);
                }
            }
        }
    }

    if options.include_events {
        for a in &dataset.awards {
            let player = player_key(&a.player_id);
            if !g.nodes.contains_key(&player) {
                return Err(Error::Graph(format!("award references unknown player {}", a.player_id)));
            }
            let k = award_key(&a.award_name);
            g.nodes.insert(k.clone(), NodeType::Award);
            edge(&mut g, player, Relation::WonPreviously, k, Some(a.season_awarded));
        }
        for i in &dataset.injuries {
            let player = player_key(&i.player_id);
            if !g.nodes.contains_key(&player) {
                return Err(Error::Graph(format!("injury references unknown player {}", i.player_id)));
            }
            let k = injury_key(&i.injury_type);
            g.nodes.insert(k.clone(), NodeType::Injury);
            edge(&mut g, player, Relation::HasInjuryHistory, k, Some(i.season_of_injury));
        }
    }
    Ok(g)
}
