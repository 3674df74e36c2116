//! Debug / fixture export: `edges.tsv` with
//! `src_key, relation, dst_key, event_season, multiplicity` and `nodes.tsv`
//! with `node_key, node_type`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Edge, KnowledgeGraph, NodeType, Relation};
use crate::error::{Error, Result};

pub const EDGES_TSV: &str = "edges.tsv";
pub const NODES_TSV: &str = "nodes.tsv";

pub fn write_tsv(graph: &KnowledgeGraph, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join(NODES_TSV))?);
    writeln!(w, "node_key\tnode_type")?;
    for (k, t) in &graph.nodes {
        writeln!(w, "{k}\t{}", t.as_str())?;
    }
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join(EDGES_TSV))?);
    writeln!(w, "src_key\trelation\tdst_key\tevent_season\tmultiplicity")?;
    for e in &graph.edges {
        let ev = e.event_season.map(|s| s.to_string()).unwrap_or_default();
        writeln!(w, "{}\t{}\t{}\t{ev}\t{}", e.src, e.relation, e.dst, e.multiplicity)?;
    }
    w.flush()?;
    Ok(())
}

fn lines(dir: &Path, name: &str) -> Result<Vec<(u64, String)>> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate().skip(1) {
        let line = line?;
        if !line.is_empty() {
            out.push((i as u64 + 1, line));
        }
    }
    Ok(out)
}

pub fn read_tsv(dir: &Path) -> Result<KnowledgeGraph> {
    let bad = |file: &str, line: u64, message: String| Error::Load {
        file: file.to_string(),
        line,
        message,
    };
    let mut graph = KnowledgeGraph::default();
    for (line, text) in lines(dir, NODES_TSV)? {
        let (k, t) = text
            .split_once('\t')
            .ok_or_else(|| bad(NODES_TSV, line, "expected 2 fields".into()))?;
        let t: NodeType = t.parse().map_err(|e: Error| bad(NODES_TSV, line, e.to_string()))?;
        graph.nodes.insert(k.to_string(), t);
    }
    for (line, text) in lines(dir, EDGES_TSV)? {
        let f: Vec<&str> = text.split('\t').collect();
        if f.len() != 5 {
            return Err(bad(EDGES_TSV, line, format!("expected 5 fields, got {}", f.len())));
        }
        let relation: Relation = f[1].parse().map_err(|e: Error| bad(EDGES_TSV, line, e.to_string()))?;
        let event_season = if f[3].is_empty() {
            None
        } else {
            Some(f[3].parse().map_err(|_| bad(EDGES_TSV, line, format!("bad event season `{}`", f[3])))?)
        };
        let multiplicity = f[4]
            .parse()
            .ok()
            .filter(|m: &u32| *m > 0)
            .ok_or_else(|| bad(EDGES_TSV, line, format!("bad multiplicity `{}`", f[4])))?;
        for k in [f[0], f[2]] {
            if !graph.nodes.contains_key(k) {
                return Err(bad(EDGES_TSV, line, format!("unknown node {k}")));
            }
        }
        graph.has_events |= relation.is_event();
        graph.edges.push(Edge {
            src: f[0].to_string(),
            relation,
            dst: f[2].to_string(),
            event_season,
            multiplicity,
        });
    }
    Ok(graph)
}
