use std::collections::{BTreeMap, BTreeSet, HashMap};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{admissible, season_label, Edge, KnowledgeGraph, NodeType, Relation};
use crate::data::{hex_digest, Season};
use crate::error::{Error, Result};

/// Width of the initial node features: node-type one-hot, `ln(1 + degree)`
/// and a season offset.
pub const FEATURE_DIM: usize = NodeType::ALL.len() + 2;

/// Seasons per unit of the season-offset feature.
const SEASON_SCALE: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Career-level player nodes; player-seasons collapsed.
    V1StaticPlayer,
    /// Player-season anchors with affiliation edges only.
    V2PlayerSeason,
    /// Affiliations plus event edges, parallel edges deduplicated.
    V2FullSg,
    /// Affiliations plus event edges with multiplicities kept.
    V2FullMg,
}

impl Variant {
    pub fn uses_events(self) -> bool {
        matches!(self, Variant::V2FullSg | Variant::V2FullMg)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewNode {
    pub key: String,
    pub node_type: NodeType,
    pub season: Option<Season>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ViewEdge {
    pub src: usize,
    pub dst: usize,
    pub relation: Relation,
    pub multiplicity: u32,
    pub event_season: Option<Season>,
}

/// Immutable, index-based view of the graph as seen from one prediction season.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphView {
    pub variant: Variant,
    pub season: Season,
    pub nodes: Vec<ViewNode>,
    pub edges: Vec<ViewEdge>,
    index: HashMap<String, usize>,
    adjacency: Vec<Vec<(usize, Relation, u32)>>,
}

impl GraphView {
    pub fn from_parts(variant: Variant, season: Season, nodes: Vec<ViewNode>, edges: Vec<ViewEdge>) -> Self {
        let index = nodes.iter().enumerate().map(|(i, n)| (n.key.clone(), i)).collect();
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for e in &edges {
            adjacency[e.src].push((e.dst, e.relation, e.multiplicity));
            adjacency[e.dst].push((e.src, e.relation, e.multiplicity));
        }
        Self {
            variant,
            season,
            nodes,
            edges,
            index,
            adjacency,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_index(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn key(&self, i: usize) -> &str {
        &self.nodes[i].key
    }

    /// Undirected neighbors as (node, relation, multiplicity).
    pub fn neighbors(&self, i: usize) -> &[(usize, Relation, u32)] {
        &self.adjacency[i]
    }

    pub fn has_edge_between(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].iter().any(|&(n, _, _)| n == b)
    }

    /// Multiplicity-weighted degree.
    pub fn degree(&self, i: usize) -> u32 {
        self.adjacency[i].iter().map(|&(_, _, m)| m).sum()
    }

    pub fn relations(&self) -> Vec<Relation> {
        let set: BTreeSet<Relation> = self.edges.iter().map(|e| e.relation).collect();
        set.into_iter().collect()
    }

    /// Initial features `[type one-hot | ln(1+degree) | season offset]`; no
    /// entity identifiers.
    pub fn features(&self) -> Array2<f64> {
        let mut x = Array2::zeros((self.node_count(), FEATURE_DIM));
        for (i, n) in self.nodes.iter().enumerate() {
            x[[i, n.node_type.index()]] = 1.0;
            x[[i, NodeType::ALL.len()]] = f64::from(self.degree(i)).ln_1p();
            if let Some(s) = n.season {
                x[[i, NodeType::ALL.len() + 1]] = f64::from(s - self.season) / SEASON_SCALE;
            }
        }
        x
    }

    /// Edges re-expressed with node keys.
    pub fn to_edges(&self) -> Vec<Edge> {
        self.edges
            .iter()
            .map(|e| Edge {
                src: self.nodes[e.src].key.clone(),
                relation: e.relation,
                dst: self.nodes[e.dst].key.clone(),
                event_season: e.event_season,
                multiplicity: e.multiplicity,
            })
            .collect()
    }

    /// SHA-256 of the view's nodes and edges.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(&(&self.variant, self.season, &self.nodes, &self.edges)).expect("view serializes");
        hex_digest(&bytes)
    }

    pub fn keys_of_type(&self, t: NodeType) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|n| n.node_type == t)
            .map(|n| n.key.as_str())
            .collect()
    }
}

fn relation_allowed(variant: Variant, r: Relation) -> bool {
    match variant {
        Variant::V1StaticPlayer => matches!(r, Relation::MemberOfTeam | Relation::RepresentedBy),
        Variant::V2PlayerSeason => !r.is_event(),
        Variant::V2FullSg | Variant::V2FullMg => true,
    }
}

/// Materializes the view of `graph` admissible at prediction season `season`.
pub fn season_view(graph: &KnowledgeGraph, variant: Variant, season: Season) -> Result<GraphView> {
    if variant.uses_events() && !graph.has_events {
        return Err(Error::Graph(format!("{variant:?} needs a graph built with events")));
    }
    let collapse = variant == Variant::V1StaticPlayer;
    // V1 maps each player-season onto its career-level player node
    let map_key = |k: &str| -> String {
        if collapse {
            if let Some(rest) = k.strip_prefix("ps:") {
                if let Some((p, _)) = rest.rsplit_once(':') {
                    return super::player_key(p);
                }
            }
        }
        k.to_string()
    };

    let mut merged: BTreeMap<(String, Relation, String), (u32, Option<Season>)> = BTreeMap::new();
    for e in &graph.edges {
        if !relation_allowed(variant, e.relation) || !admissible(e, season) {
            continue;
        }
        let (src, dst) = (map_key(&e.src), map_key(&e.dst));
        if src == dst {
            continue;
        }
        let entry = merged.entry((src, e.relation, dst)).or_insert((0, None));
        entry.0 += e.multiplicity;
        entry.1 = entry.1.max(e.event_season);
    }

    let mut keys: BTreeSet<String> = BTreeSet::new();
    if !collapse {
        for (k, t) in &graph.nodes {
            if *t == NodeType::PlayerSeason && season_label(k).is_some_and(|s| s <= season) {
                keys.insert(k.clone());
            }
        }
    } else {
        for (k, t) in &graph.nodes {
            if *t == NodeType::PlayerSeason && season_label(k).is_some_and(|s| s <= season) {
                keys.insert(map_key(k));
            }
        }
    }
    for (src, _, dst) in merged.keys() {
        keys.insert(src.clone());
        keys.insert(dst.clone());
    }

    let nodes: Vec<ViewNode> = keys
        .into_iter()
        .map(|k| {
            let node_type = graph.nodes.get(&k).copied().ok_or_else(|| Error::Graph(format!("dangling node {k}")))?;
            Ok(ViewNode {
                season: season_label(&k),
                key: k,
                node_type,
            })
        })
        .collect::<Result<_>>()?;
    let index: HashMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (n.key.as_str(), i)).collect();
    let dedupe = matches!(variant, Variant::V2FullSg | Variant::V1StaticPlayer | Variant::V2PlayerSeason);
    let edges = merged
        .into_iter()
        .map(|((src, relation, dst), (m, ev))| ViewEdge {
            src: index[src.as_str()],
            dst: index[dst.as_str()],
            relation,
            multiplicity: if dedupe { 1 } else { m },
            event_season: ev,
        })
        .collect();
    Ok(GraphView::from_parts(variant, season, nodes, edges))
}

/// Training view with test nodes removed, plus the removed keys needed at
/// inference.
#[derive(Clone, Debug)]
pub struct MaskedView {
    pub train: GraphView,
    pub masked: Vec<String>,
}

pub fn inductive_mask(view: &GraphView, test_keys: &[String]) -> Result<MaskedView> {
    let mut drop = BTreeSet::new();
    for k in test_keys {
        let i = view
            .node_index(k)
            .ok_or_else(|| Error::Graph(format!("test node {k} not in view")))?;
        drop.insert(i);
    }
    let mut remap = vec![usize::MAX; view.node_count()];
    let mut nodes = Vec::with_capacity(view.node_count() - drop.len());
    for (i, n) in view.nodes.iter().enumerate() {
        if !drop.contains(&i) {
            remap[i] = nodes.len();
            nodes.push(n.clone());
        }
    }
    let edges: Vec<ViewEdge> = view
        .edges
        .iter()
        .filter(|e| !drop.contains(&e.src) && !drop.contains(&e.dst))
        .map(|e| ViewEdge {
            src: remap[e.src],
            dst: remap[e.dst],
            ..e.clone()
        })
        .collect();
    if nodes.is_empty() || edges.is_empty() {
        return Err(Error::Graph("inductive mask leaves an empty training graph".into()));
    }
    let masked = drop.iter().map(|&i| view.nodes[i].key.clone()).collect();
    Ok(MaskedView {
        train: GraphView::from_parts(view.variant, view.season, nodes, edges),
        masked,
    })
}
