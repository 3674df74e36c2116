//! Global metrics, cold-start subsetting, the tri-state rescue/misguidance
//! protocol and deterministic case selection.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{InstanceKey, Season};
use crate::error::{Error, Result};
use crate::prediction::PredictionSet;

/// Default tri-state margin in dollars.
pub const STATE_MARGIN: f64 = 500_000.0;
/// Default residual percentile for the eligibility threshold.
pub const TAU_QUANTILE: f64 = 0.75;

fn check_pair(y: &[f64], p: &[f64]) -> Result<()> {
    if y.len() != p.len() {
        return Err(Error::Eval(format!("length mismatch: {} truths, {} predictions", y.len(), p.len())));
    }
    if y.is_empty() {
        return Err(Error::Eval("metrics need at least one instance".into()));
    }
    Ok(())
}

pub fn rmse(y: &[f64], p: &[f64]) -> Result<f64> {
    check_pair(y, p)?;
    Ok((y.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64).sqrt())
}

/// `1 - SSE/SST`; unbounded below.
pub fn r2(y: &[f64], p: &[f64]) -> Result<f64> {
    check_pair(y, p)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|a| (a - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::Eval("R² is undefined for constant truth".into()));
    }
    let sse: f64 = y.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - sse / sst)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub rmse: f64,
    /// `None` when the subset's truth is constant or fewer than two rows.
    pub r2: Option<f64>,
}

/// Log-space metrics of `set` restricted to `keys` (all rows when `None`).
pub fn metrics(set: &PredictionSet, keys: Option<&BTreeSet<InstanceKey>>) -> Result<Metrics> {
    let rows: Vec<_> = set.rows.iter().filter(|r| keys.is_none_or(|k| k.contains(&r.key))).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.y_true_log).collect();
    let p: Vec<f64> = rows.iter().map(|r| r.y_pred_log).collect();
    Ok(Metrics {
        n: rows.len(),
        rmse: rmse(&y, &p)?,
        r2: r2(&y, &p).ok(),
    })
}

/// Test instances whose player has no training-season record.
pub fn cold_start_subset<'a>(test: impl IntoIterator<Item = &'a InstanceKey>, train: impl IntoIterator<Item = &'a InstanceKey>) -> BTreeSet<InstanceKey> {
    let seen: BTreeSet<&str> = train.into_iter().map(|k| k.player_id.as_str()).collect();
    test.into_iter().filter(|k| !seen.contains(k.player_id.as_str())).cloned().collect()
}

/// Linear-interpolation percentile (`q` in [0, 1]).
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Eval("percentile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Eval(format!("percentile level must be in [0, 1], got {q}")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

/// Baseline absolute dollar residuals with the provenance of the rows that
/// produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualSample {
    pub values: Vec<f64>,
    pub seasons: BTreeSet<Season>,
    /// Records fingerprint of the combined source rows.
    pub fingerprint: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tau {
    pub dollars: f64,
    pub quantile: f64,
    pub n: usize,
    pub source_seasons: BTreeSet<Season>,
    pub source_fingerprint: String,
}

/// Eligibility threshold from train+val residuals; rejects any residual
/// drawn from a season outside `allowed`.
pub fn compute_tau(sample: &ResidualSample, q: f64, allowed: &BTreeSet<Season>) -> Result<Tau> {
    if let Some(s) = sample.seasons.iter().find(|s| !allowed.contains(s)) {
        return Err(Error::Eval(format!("τ residuals include season {s}, outside training and validation")));
    }
    if sample.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Eval("τ residuals must be finite absolute errors".into()));
    }
    let dollars = percentile(&sample.values, q)?;
    if !(dollars > 0.0) {
        return Err(Error::Eval(format!("τ must be positive, got {dollars}")));
    }
    Ok(Tau {
        dollars,
        quantile: q,
        n: sample.values.len(),
        source_seasons: sample.seasons.clone(),
        source_fingerprint: sample.fingerprint.clone(),
    })
}

/// `|Y − Ŷ_base| − |Y − Ŷ_graph|`; positive when the graph model is closer.
pub fn delta_e(y: f64, base: f64, graph: f64) -> f64 {
    (y - base).abs() - (y - graph).abs()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriState {
    Rescue,
    Neutral,
    Misguidance,
}

impl TriState {
    pub const ALL: [TriState; 3] = [TriState::Rescue, TriState::Neutral, TriState::Misguidance];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Rescue => "rescue",
            Self::Neutral => "neutral",
            Self::Misguidance => "misguidance",
        }
    }
}

impl fmt::Display for TriState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Strict at `±margin`; the boundary is Neutral.
pub fn tri_state(delta: f64, margin: f64) -> TriState {
    if delta > margin {
        TriState::Rescue
    } else if delta < -margin {
        TriState::Misguidance
    } else {
        TriState::Neutral
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub key: InstanceKey,
    pub y: f64,
    pub base: f64,
    pub graph: f64,
    pub delta_e: f64,
    pub state: TriState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriStateReport {
    pub baseline: String,
    pub graph: String,
    pub seed: u64,
    pub tau: f64,
    pub margin: f64,
    pub eligible: usize,
    pub counts: BTreeMap<TriState, usize>,
    /// `None` when no instance is eligible.
    pub rates: Option<BTreeMap<TriState, f64>>,
    pub ledger: Vec<LedgerRow>,
}

impl TriStateReport {
    pub fn count(&self, s: TriState) -> usize {
        self.counts[&s]
    }

    pub fn rate(&self, s: TriState) -> Option<f64> {
        self.rates.as_ref().map(|r| r[&s])
    }

    pub fn undefined(&self) -> bool {
        self.rates.is_none()
    }

    /// Keys in state `s`, ascending.
    pub fn keys_in(&self, s: TriState) -> Vec<&InstanceKey> {
        self.ledger.iter().filter(|r| r.state == s).map(|r| &r.key).collect()
    }
}

/// Classifies eligible outliers (`|Y − Ŷ_base| > τ`) on `keys`, or on the
/// shared keys of both sets when `None`.
pub fn tri_state_report(base: &PredictionSet, graph: &PredictionSet, tau: f64, margin: f64, keys: Option<&BTreeSet<InstanceKey>>) -> Result<TriStateReport> {
    if !(tau > 0.0) {
        return Err(Error::Eval(format!("τ must be positive, got {tau}")));
    }
    let g = graph.by_key();
    let mut ledger = Vec::new();
    for b in &base.rows {
        if keys.is_some_and(|k| !k.contains(&b.key)) {
            continue;
        }
        let Some(gr) = g.get(&b.key) else {
            if keys.is_some() {
                return Err(Error::Eval(format!("{} has no prediction for {}", graph.model, b.key)));
            }
            continue;
        };
        if (b.y_true_dollars - gr.y_true_dollars).abs() > 0.0 {
            return Err(Error::Eval(format!("truth differs between sets at {}", b.key)));
        }
        let y = b.y_true_dollars;
        if (y - b.y_pred_dollars).abs() <= tau {
            continue;
        }
        let d = delta_e(y, b.y_pred_dollars, gr.y_pred_dollars);
        ledger.push(LedgerRow {
            key: b.key.clone(),
            y,
            base: b.y_pred_dollars,
            graph: gr.y_pred_dollars,
            delta_e: d,
            state: tri_state(d, margin),
        });
    }
    let mut counts: BTreeMap<TriState, usize> = TriState::ALL.iter().map(|&s| (s, 0)).collect();
    for r in &ledger {
        *counts.get_mut(&r.state).expect("all states present") += 1;
    }
    let eligible = ledger.len();
    let rates = (eligible > 0).then(|| counts.iter().map(|(&s, &c)| (s, c as f64 / eligible as f64)).collect());
    Ok(TriStateReport {
        baseline: base.model.clone(),
        graph: graph.model.clone(),
        seed: graph.seed,
        tau,
        margin,
        eligible,
        counts,
        rates,
        ledger,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Valuation {
    Underrated,
    Overrated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    Precision,
    Overshoot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Quadrant {
    pub valuation: Valuation,
    pub correction: Correction,
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = match self.valuation {
            Valuation::Underrated => "underrated",
            Valuation::Overrated => "overrated",
        };
        let c = match self.correction {
            Correction::Precision => "precision",
            Correction::Overshoot => "overshoot",
        };
        write!(f, "{v}_{c}")
    }
}

/// Underrated iff `Ŷ_base < Y`; Overshoot iff the graph prediction lies
/// strictly across the truth from the baseline.
pub fn quadrant(y: f64, base: f64, graph: f64) -> Quadrant {
    let valuation = if base < y { Valuation::Underrated } else { Valuation::Overrated };
    let (b, g) = (base - y, graph - y);
    let crossed = g != 0.0 && b.signum() != g.signum();
    Quadrant {
        valuation,
        correction: if crossed { Correction::Overshoot } else { Correction::Precision },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseStudy {
    pub baseline: String,
    pub graph: String,
    pub key: InstanceKey,
    pub quadrant: Quadrant,
    pub state: TriState,
    pub y: f64,
    pub base: f64,
    pub graph_pred: f64,
    pub delta_e: f64,
    /// Chosen by the fill rule rather than as a quadrant maximum.
    pub fill: bool,
}

/// One max-|ΔE| rescue-or-misguidance case per populated quadrant, then
/// fill by descending |ΔE| up to `min_cases`; ties go to the lower key.
pub fn select_cases(report: &TriStateReport, min_cases: usize) -> Vec<CaseStudy> {
    let mut pool: Vec<&LedgerRow> = report.ledger.iter().filter(|r| r.state != TriState::Neutral).collect();
    pool.sort_by(|a, b| b.delta_e.abs().total_cmp(&a.delta_e.abs()).then_with(|| a.key.cmp(&b.key)));
    let case = |r: &LedgerRow, fill: bool| CaseStudy {
        baseline: report.baseline.clone(),
        graph: report.graph.clone(),
        key: r.key.clone(),
        quadrant: quadrant(r.y, r.base, r.graph),
        state: r.state,
        y: r.y,
        base: r.base,
        graph_pred: r.graph,
        delta_e: r.delta_e,
        fill,
    };
    let mut seen = BTreeSet::new();
    let mut picked = BTreeSet::new();
    let mut out = Vec::new();
    for r in &pool {
        if seen.insert(quadrant(r.y, r.base, r.graph)) {
            picked.insert(&r.key);
            out.push(case(r, false));
        }
    }
    for r in &pool {
        if out.len() >= min_cases {
            break;
        }
        if picked.insert(&r.key) {
            out.push(case(r, true));
        }
    }
    out.sort_by(|a, b| a.quadrant.cmp(&b.quadrant).then(a.fill.cmp(&b.fill)).then_with(|| b.delta_e.abs().total_cmp(&a.delta_e.abs())));
    out
}

/// Mean with min/max over seeds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Spread {
    /// `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        Some(Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            n: values.len(),
        })
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.10}"))
}

/// One row per `(model, regressor, subset)` of seed-aggregated metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: String,
    pub regressor: String,
    pub subset: String,
    pub n: usize,
    pub rmse: Spread,
    pub r2: Option<Spread>,
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "regressor", "subset", "n", "rmse_mean", "rmse_min", "rmse_max", "r2_mean", "r2_min", "r2_max", "seeds"])?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.regressor.clone(),
            r.subset.clone(),
            r.n.to_string(),
            format!("{:.10}", r.rmse.mean),
            format!("{:.10}", r.rmse.min),
            format!("{:.10}", r.rmse.max),
            opt(r.r2.map(|s| s.mean)),
            opt(r.r2.map(|s| s.min)),
            opt(r.r2.map(|s| s.max)),
            r.rmse.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per report: model, baseline, regressor, seed, counts and rates.
pub fn write_tri_state_csv<W: Write>(reports: &[(String, &TriStateReport)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["graph", "baseline", "regressor", "seed", "tau", "eligible", "rescue", "neutral", "misguidance", "rescue_rate", "neutral_rate", "misguidance_rate"])?;
    for (regressor, r) in reports {
        let mut rec = vec![
            r.graph.clone(),
            r.baseline.clone(),
            regressor.clone(),
            r.seed.to_string(),
            format!("{:.2}", r.tau),
            r.eligible.to_string(),
        ];
        rec.extend(TriState::ALL.iter().map(|&s| r.count(s).to_string()));
        rec.extend(TriState::ALL.iter().map(|&s| opt(r.rate(s))));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cases_csv<W: Write>(cases: &[(String, u64, CaseStudy)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["graph", "baseline", "regressor", "seed", "player_id", "season", "quadrant", "state", "y", "base", "graph_pred", "delta_e", "fill"])?;
    for (regressor, seed, c) in cases {
        w.write_record([
            c.graph.clone(),
            c.baseline.clone(),
            regressor.clone(),
            seed.to_string(),
            c.key.player_id.clone(),
            c.key.season.to_string(),
            c.quadrant.to_string(),
            c.state.to_string(),
            format!("{:.2}", c.y),
            format!("{:.2}", c.base),
            format!("{:.2}", c.graph_pred),
            format!("{:.2}", c.delta_e),
            c.fill.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
