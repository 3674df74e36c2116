//! Rescue vs misguidance cohort profiling: Cliff's δ, Mann-Whitney U and
//! dual-threshold trait ranking.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{Dataset, InstanceKey};
use crate::error::{Error, Result};

/// Largest pooled size for which the exact U distribution is used.
pub const EXACT_MAX_N: usize = 20;
pub const P_MAX: f64 = 0.10;
pub const DELTA_MIN: f64 = 0.25;
pub const TOP_K: usize = 8;

fn nonempty(r: &[f64], m: &[f64]) -> Result<()> {
    if r.is_empty() || m.is_empty() {
        return Err(Error::InvalidInput("both cohorts must be nonempty".into()));
    }
    Ok(())
}

/// `(1 / n_R n_M) ΣΣ sgn(r_i − m_j)`.
pub fn cliffs_delta(r: &[f64], m: &[f64]) -> Result<f64> {
    nonempty(r, m)?;
    let mut s: i64 = 0;
    for &a in r {
        for &b in m {
            s += (a > b) as i64 - (a < b) as i64;
        }
    }
    Ok(s as f64 / (r.len() * m.len()) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    Exact,
    Normal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UTest {
    /// U of the first cohort.
    pub u: f64,
    pub p: f64,
    pub method: PMethod,
}

/// Midranks (1-based) of the pooled sample, plus `Σ (t³ − t)` over tie groups.
fn midranks(pooled: &[f64]) -> (Vec<f64>, f64) {
    let mut idx: Vec<usize> = (0..pooled.len()).collect();
    idx.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && pooled[idx[j]] == pooled[idx[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = rank;
        }
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    (ranks, ties)
}

/// Number of size-`m` subsets of `{1..n}` by `U = rank sum − m(m+1)/2`.
fn u_counts(m: usize, n: usize) -> Vec<f64> {
    let k = n - m;
    // f[a][u]: subsets of size a out of the first `len` ranks with statistic u.
    let max_u = m * k;
    let mut f = vec![vec![0.0f64; max_u + 1]; m + 1];
    f[0][0] = 1.0;
    for len in 1..=n {
        for a in (1..=m.min(len)).rev() {
            // Choosing rank `len` as the a-th smallest adds len − a to U.
            let add = len - a;
            for u in (add..=max_u).rev() {
                f[a][u] += f[a - 1][u - add];
            }
        }
    }
    f.swap_remove(m)
}

/// Two-sided normal-approximation p-value for `U` with tie correction
/// `Σ (t³ − t)` and continuity correction.
pub fn normal_p(u: f64, nr: usize, nm: usize, ties: f64) -> f64 {
    let (a, b, nf) = (nr as f64, nm as f64, (nr + nm) as f64);
    let mean = a * b / 2.0;
    let var = a * b / 12.0 * ((nf + 1.0) - ties / (nf * (nf - 1.0)));
    if !(var > 0.0) {
        return 1.0;
    }
    let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * std.sf(z)).min(1.0)
}

/// Two-sided Mann-Whitney test of `r` vs `m` with midrank ties. Exact when
/// the pooled size is at most [`EXACT_MAX_N`] and there are no ties;
/// otherwise the tie-corrected normal approximation with continuity
/// correction.
pub fn mann_whitney_u(r: &[f64], m: &[f64]) -> Result<UTest> {
    nonempty(r, m)?;
    if r.iter().chain(m).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("cohort values must be finite".into()));
    }
    let (nr, nm) = (r.len(), m.len());
    let n = nr + nm;
    let pooled: Vec<f64> = r.iter().chain(m).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let rank_sum: f64 = ranks[..nr].iter().sum();
    let u = rank_sum - (nr * (nr + 1)) as f64 / 2.0;
    if n <= EXACT_MAX_N && ties == 0.0 {
        let counts = u_counts(nr, n);
        let total: f64 = counts.iter().sum();
        let ui = u.round() as usize;
        let lower: f64 = counts[..=ui].iter().sum::<f64>() / total;
        let upper: f64 = counts[ui..].iter().sum::<f64>() / total;
        return Ok(UTest {
            u,
            p: (2.0 * lower.min(upper)).min(1.0),
            method: PMethod::Exact,
        });
    }
    let p = normal_p(u, nr, nm, ties);
    Ok(UTest { u, p, method: PMethod::Normal })
}

/// Ex-post profiling features per instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub rows: BTreeMap<InstanceKey, Vec<Option<f64>>>,
}

impl FeatureTable {
    /// Raw (unimputed) stats and controls of every record.
    pub fn from_dataset(d: &Dataset) -> Self {
        let names = d
            .schema
            .columns
            .iter()
            .filter(|c| c.kind == crate::data::FeatureKind::Numeric)
            .map(|c| c.name.clone())
            .collect();
        let rows = d.records.iter().map(|r| (r.key(), r.numeric_features())).collect();
        Self { names, rows }
    }

    fn column(&self, j: usize, keys: &[&InstanceKey]) -> Vec<f64> {
        keys.iter().filter_map(|k| self.rows.get(*k).and_then(|r| r[j])).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraitRow {
    pub feature: String,
    pub n_r: usize,
    pub n_m: usize,
    /// `None` when a cohort has no observed value for this feature.
    pub delta: Option<f64>,
    pub u: Option<f64>,
    pub p: Option<f64>,
    pub passes: bool,
    /// 1-based rank among passing features.
    pub rank: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraitProfile {
    pub graph: String,
    pub baseline: String,
    pub n_r: usize,
    pub n_m: usize,
    /// Set when either cohort is empty; `rows` is then empty.
    pub empty: bool,
    pub rows: Vec<TraitRow>,
}

impl TraitProfile {
    /// Passing rows in rank order, at most K.
    pub fn top(&self) -> Vec<&TraitRow> {
        let mut t: Vec<&TraitRow> = self.rows.iter().filter(|r| r.rank.is_some()).collect();
        t.sort_by_key(|r| r.rank);
        t
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraitFilter {
    pub p_max: f64,
    pub delta_min: f64,
    pub k: usize,
}

impl Default for TraitFilter {
    fn default() -> Self {
        Self {
            p_max: P_MAX,
            delta_min: DELTA_MIN,
            k: TOP_K,
        }
    }
}

/// Per-feature δ and U over the rescue and misguidance cohorts, missing
/// values dropped per feature; passing rows ranked by |δ| descending with
/// the feature name as tiebreak.
pub fn top_traits(graph: &str, baseline: &str, table: &FeatureTable, rescue: &[&InstanceKey], misguide: &[&InstanceKey], filter: TraitFilter) -> Result<TraitProfile> {
    let mut profile = TraitProfile {
        graph: graph.into(),
        baseline: baseline.into(),
        n_r: rescue.len(),
        n_m: misguide.len(),
        empty: rescue.is_empty() || misguide.is_empty(),
        rows: Vec::new(),
    };
    if profile.empty {
        return Ok(profile);
    }
    for (j, name) in table.names.iter().enumerate() {
        let r = table.column(j, rescue);
        let m = table.column(j, misguide);
        let mut row = TraitRow {
            feature: name.clone(),
            n_r: r.len(),
            n_m: m.len(),
            delta: None,
            u: None,
            p: None,
            passes: false,
            rank: None,
        };
        if !r.is_empty() && !m.is_empty() {
            let d = cliffs_delta(&r, &m)?;
            let t = mann_whitney_u(&r, &m)?;
            row.delta = Some(d);
            row.u = Some(t.u);
            row.p = Some(t.p);
            row.passes = t.p <= filter.p_max && d.abs() >= filter.delta_min;
        }
        profile.rows.push(row);
    }
    let mut passing: Vec<usize> = (0..profile.rows.len()).filter(|&i| profile.rows[i].passes).collect();
    passing.sort_by(|&a, &b| {
        let (ra, rb) = (&profile.rows[a], &profile.rows[b]);
        rb.delta.unwrap().abs().total_cmp(&ra.delta.unwrap().abs()).then_with(|| ra.feature.cmp(&rb.feature))
    });
    for (rank, &i) in passing.iter().take(filter.k).enumerate() {
        profile.rows[i].rank = Some(rank + 1);
    }
    Ok(profile)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.10}"))
}

/// `model,baseline,feature,n_R,n_M,delta,U,p,passes_filter,rank` plus the
/// regressor and seed of each profile.
pub fn write_traits_csv<W: Write>(profiles: &[(String, u64, &TraitProfile)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "baseline", "regressor", "seed", "feature", "n_R", "n_M", "delta", "U", "p", "passes_filter", "rank"])?;
    for (regressor, seed, p) in profiles {
        for r in &p.rows {
            w.write_record([
                p.graph.clone(),
                p.baseline.clone(),
                regressor.clone(),
                seed.to_string(),
                r.feature.clone(),
                r.n_r.to_string(),
                r.n_m.to_string(),
                opt(r.delta),
                opt(r.u),
                opt(r.p),
                r.passes.to_string(),
                r.rank.map_or_else(String::new, |k| k.to_string()),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
