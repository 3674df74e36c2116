//! Suite evaluation: metrics, thresholds, tri-state reports, cases and
//! trait profiles, plus their file outputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelName, Suite};
use crate::data::{Dataset, InstanceKey, SplitSpec};
use crate::error::{Error, Result};
use crate::eval::{
    cold_start_subset, compute_tau, metrics, select_cases, tri_state_report, write_cases_csv, write_metrics_csv, write_tri_state_csv, CaseStudy, Metrics, MetricsRow, Spread, TriState, TriStateReport, STATE_MARGIN, TAU_QUANTILE,
};
use crate::prediction::RegressorKind;
use crate::profile::{top_traits, write_traits_csv, FeatureTable, TraitFilter, TraitProfile};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub margin: f64,
    pub tau_quantile: f64,
    pub min_cases: usize,
    pub traits: TraitFilter,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            margin: STATE_MARGIN,
            tau_quantile: TAU_QUANTILE,
            min_cases: 3,
            traits: TraitFilter::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub model: ModelName,
    pub regressor: RegressorKind,
    pub seed: u64,
    pub global: Metrics,
    /// `None` when no cold-start instance exists.
    pub cold_start: Option<Metrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauRecord {
    pub baseline: ModelName,
    pub regressor: RegressorKind,
    pub seed: u64,
    pub tau: crate::eval::Tau,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub graph: String,
    pub baseline: String,
    pub regressor: RegressorKind,
    pub rescue: Option<Spread>,
    pub neutral: Option<Spread>,
    pub misguidance: Option<Spread>,
    /// Seeds whose eligible pool was empty.
    pub undefined_seeds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub cold_start: BTreeSet<InstanceKey>,
    pub per_seed: Vec<SeedMetrics>,
    pub metrics: Vec<MetricsRow>,
    pub taus: Vec<TauRecord>,
    pub reports: Vec<(RegressorKind, TriStateReport)>,
    pub rates: Vec<RateSummary>,
    pub cases: Vec<(RegressorKind, u64, CaseStudy)>,
    pub profiles: Vec<(RegressorKind, u64, TraitProfile)>,
    /// [`SCATTER_FEATURE`] per test instance, for the ΔE ledger.
    pub scatter: BTreeMap<InstanceKey, Option<f64>>,
}

impl Analysis {
    pub fn seed_metrics(&self, model: ModelName, kind: RegressorKind) -> Vec<&SeedMetrics> {
        self.per_seed.iter().filter(|m| m.model == model && m.regressor == kind).collect()
    }

    pub fn metrics_row(&self, model: ModelName, kind: RegressorKind, subset: &str) -> Option<&MetricsRow> {
        self.metrics.iter().find(|r| r.model == model.as_str() && r.regressor == kind.as_str() && r.subset == subset)
    }

    pub fn report(&self, graph: ModelName, baseline: ModelName, kind: RegressorKind, seed: u64) -> Option<&TriStateReport> {
        self.reports
            .iter()
            .find(|(k, r)| *k == kind && r.graph == graph.as_str() && r.baseline == baseline.as_str() && r.seed == seed)
            .map(|(_, r)| r)
    }
}

fn spread_row(model: ModelName, kind: RegressorKind, subset: &str, ms: &[Metrics]) -> Option<MetricsRow> {
    let rmse = Spread::of(&ms.iter().map(|m| m.rmse).collect::<Vec<_>>())?;
    let r2s: Vec<f64> = ms.iter().filter_map(|m| m.r2).collect();
    Some(MetricsRow {
        model: model.as_str().into(),
        regressor: kind.as_str().into(),
        subset: subset.into(),
        n: ms[0].n,
        rmse,
        r2: if r2s.len() == ms.len() { Spread::of(&r2s) } else { None },
    })
}

/// Evaluates every run on the shared test intersection.
pub fn analyze(suite: &Suite, dataset: &Dataset, spec: &SplitSpec, cfg: &AnalysisConfig) -> Result<Analysis> {
    let keys = &suite.intersection;
    let train_keys: Vec<InstanceKey> = dataset.records.iter().filter(|r| spec.is_train(r.season)).map(|r| r.key()).collect();
    let cold_start = cold_start_subset(keys.iter(), train_keys.iter());
    let mut per_seed = Vec::new();
    for run in &suite.runs {
        per_seed.push(SeedMetrics {
            model: run.config.name,
            regressor: run.config.regressor,
            seed: run.seed,
            global: metrics(&run.predictions, Some(keys))?,
            cold_start: if cold_start.is_empty() { None } else { Some(metrics(&run.predictions, Some(&cold_start))?) },
        });
    }
    let models = &suite.manifest.models;
    let regressors = &suite.manifest.regressors;
    let seeds = &suite.manifest.seeds;
    let mut rows = Vec::new();
    for &m in models {
        for &k in regressors {
            let ms: Vec<&SeedMetrics> = per_seed.iter().filter(|s| s.model == m && s.regressor == k).collect();
            rows.extend(spread_row(m, k, "global", &ms.iter().map(|s| s.global).collect::<Vec<_>>()));
            let cs: Vec<Metrics> = ms.iter().filter_map(|s| s.cold_start).collect();
            if cs.len() == ms.len() {
                rows.extend(spread_row(m, k, "cold_start", &cs));
            }
        }
    }
    let allowed: BTreeSet<_> = spec.train_seasons.union(&spec.val_seasons).copied().collect();
    let table = FeatureTable::from_dataset(dataset);
    let mut taus = Vec::new();
    let mut reports = Vec::new();
    let mut cases = Vec::new();
    let mut profiles = Vec::new();
    for &base in models.iter().filter(|m| m.is_baseline()) {
        for &kind in regressors {
            for &seed in seeds {
                let b = suite.run(base, kind, seed).ok_or_else(|| Error::Eval(format!("missing run {base}/{kind}/{seed}")))?;
                let tau = compute_tau(&b.residuals, cfg.tau_quantile, &allowed).map_err(|e| e.context(format!("τ for {base}/{kind}/{seed}")))?;
                for &graph in models.iter().filter(|m| !m.is_baseline()) {
                    let g = suite.run(graph, kind, seed).ok_or_else(|| Error::Eval(format!("missing run {graph}/{kind}/{seed}")))?;
                    let report = tri_state_report(&b.predictions, &g.predictions, tau.dollars, cfg.margin, Some(keys))?;
                    cases.extend(select_cases(&report, cfg.min_cases).into_iter().map(|c| (kind, seed, c)));
                    let profile = top_traits(graph.as_str(), base.as_str(), &table, &report.keys_in(TriState::Rescue), &report.keys_in(TriState::Misguidance), cfg.traits)?;
                    profiles.push((kind, seed, profile));
                    reports.push((kind, report));
                }
                taus.push(TauRecord { baseline: base, regressor: kind, seed, tau });
            }
        }
    }
    let mut rates = Vec::new();
    let mut groups: BTreeMap<(String, String, RegressorKind), Vec<&TriStateReport>> = BTreeMap::new();
    for (k, r) in &reports {
        groups.entry((r.graph.clone(), r.baseline.clone(), *k)).or_default().push(r);
    }
    for ((graph, baseline, regressor), rs) in groups {
        let of = |s: TriState| Spread::of(&rs.iter().filter_map(|r| r.rate(s)).collect::<Vec<_>>());
        rates.push(RateSummary {
            graph,
            baseline,
            regressor,
            rescue: of(TriState::Rescue),
            neutral: of(TriState::Neutral),
            misguidance: of(TriState::Misguidance),
            undefined_seeds: rs.iter().filter(|r| r.undefined()).count(),
        });
    }
    let scatter = dataset
        .records
        .iter()
        .filter(|r| keys.contains(&r.key()))
        .map(|r| (r.key(), r.controls.age_now))
        .collect();
    Ok(Analysis {
        cold_start,
        per_seed,
        metrics: rows,
        taus,
        reports,
        rates,
        cases,
        profiles,
        scatter,
    })
}

/// Hash over all configuration hashes of a suite.
pub fn suite_hash(suite: &Suite) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for (k, v) in &suite.manifest.config_hashes {
        h.update(k.as_bytes());
        h.update(v.as_bytes());
    }
    crate::data::hex_digest(&h.finalize())
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const TRI_STATE_FILE: &str = "tri_state.csv";
pub const CASES_FILE: &str = "cases.csv";
pub const TRAITS_FILE: &str = "traits.csv";
pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LEDGER_FILE: &str = "ledger.csv";
pub const PREDICTIONS_DIR: &str = "predictions";
/// Feature carried next to ΔE in the ledger.
pub const SCATTER_FEATURE: &str = "age_now";

/// Leading `#` line carried by every CSV output.
pub fn provenance_line(dataset_fp: &str, config_hash: &str) -> String {
    format!("# relcap {} dataset={dataset_fp} config={config_hash}\n", env!("CARGO_PKG_VERSION"))
}

fn csv_file(dir: &Path, name: &str, header: &str, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = header.as_bytes().to_vec();
    write(&mut buf)?;
    fs::write(dir.join(name), buf)?;
    Ok(())
}

/// Contents of [`REPORT_FILE`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool_version: String,
    pub dataset_fingerprint: String,
    pub config_hash: String,
    pub intersection_size: usize,
    pub cold_start_size: usize,
    pub metrics: Vec<MetricsRow>,
    pub taus: Vec<TauRecord>,
    pub tri_state: Vec<TriStateSummary>,
    pub rates: Vec<RateSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriStateSummary {
    pub graph: String,
    pub baseline: String,
    pub regressor: RegressorKind,
    pub seed: u64,
    pub tau: f64,
    pub eligible: usize,
    pub counts: BTreeMap<TriState, usize>,
    pub rates: Option<BTreeMap<TriState, f64>>,
}

fn write_ledger_csv(analysis: &Analysis, out: &mut Vec<u8>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["graph", "baseline", "regressor", "seed", "player_id", "season", SCATTER_FEATURE, "y", "base", "graph_pred", "delta_e", "state"])?;
    for (kind, r) in &analysis.reports {
        for row in &r.ledger {
            let feature = analysis.scatter.get(&row.key).copied().flatten().map(|v| v.to_string()).unwrap_or_default();
            w.write_record([
                r.graph.clone(),
                r.baseline.clone(),
                kind.to_string(),
                r.seed.to_string(),
                row.key.player_id.clone(),
                row.key.season.to_string(),
                feature,
                format!("{:.2}", row.y),
                format!("{:.2}", row.base),
                format!("{:.2}", row.graph),
                format!("{:.2}", row.delta_e),
                row.state.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Output families of a run. The manifest is always written.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Emit {
    /// Metrics, tri-state, cases, traits, ledger and prediction CSVs.
    pub csv: bool,
    /// [`REPORT_FILE`].
    pub json: bool,
}

impl Default for Emit {
    fn default() -> Self {
        Self { csv: true, json: true }
    }
}

/// Writes the selected output families and the manifest into `dir`.
pub fn write_outputs(dir: &Path, suite: &Suite, analysis: &Analysis, emit: Emit) -> Result<()> {
    fs::create_dir_all(dir)?;
    let fp = &suite.manifest.dataset_fingerprint;
    let hash = suite_hash(suite);
    let head = provenance_line(fp, &hash);
    if emit.csv {
        fs::create_dir_all(dir.join(PREDICTIONS_DIR))?;
        csv_file(dir, METRICS_FILE, &head, |b| write_metrics_csv(&analysis.metrics, b))?;
        let reps: Vec<(String, &TriStateReport)> = analysis.reports.iter().map(|(k, r)| (k.to_string(), r)).collect();
        csv_file(dir, TRI_STATE_FILE, &head, |b| write_tri_state_csv(&reps, b))?;
        let cases: Vec<(String, u64, CaseStudy)> = analysis.cases.iter().map(|(k, s, c)| (k.to_string(), *s, c.clone())).collect();
        csv_file(dir, CASES_FILE, &head, |b| write_cases_csv(&cases, b))?;
        let profs: Vec<(String, u64, &TraitProfile)> = analysis.profiles.iter().map(|(k, s, p)| (k.to_string(), *s, p)).collect();
        csv_file(dir, TRAITS_FILE, &head, |b| write_traits_csv(&profs, b))?;
        for run in &suite.runs {
            let name = format!("{}__{}__{}.csv", run.config.name, run.config.regressor, run.seed);
            csv_file(&dir.join(PREDICTIONS_DIR), &name, &head, |b| run.predictions.write_csv(b))?;
        }
        csv_file(dir, LEDGER_FILE, &head, |b| write_ledger_csv(analysis, b))?;
    }
    if !emit.json {
        return write_manifest(dir, &suite.manifest);
    }
    let json = RunReport {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        dataset_fingerprint: fp.clone(),
        config_hash: hash,
        intersection_size: suite.intersection.len(),
        cold_start_size: analysis.cold_start.len(),
        metrics: analysis.metrics.clone(),
        taus: analysis.taus.clone(),
        tri_state: analysis
            .reports
            .iter()
            .map(|(k, r)| TriStateSummary {
                graph: r.graph.clone(),
                baseline: r.baseline.clone(),
                regressor: *k,
                seed: r.seed,
                tau: r.tau,
                eligible: r.eligible,
                counts: r.counts.clone(),
                rates: r.rates.clone(),
            })
            .collect(),
        rates: analysis.rates.clone(),
    };
    fs::write(dir.join(REPORT_FILE), serde_json::to_vec_pretty(&json)?)?;
    write_manifest(dir, &suite.manifest)
}

pub fn write_manifest(dir: &Path, manifest: &super::Manifest) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(manifest)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_league, LeagueConfig};
    use crate::pipeline::{run_suite, PipelineParams};

    #[test]
    fn analysis_shapes() {
        let d = generate_league(&LeagueConfig::default()).unwrap().0;
        let models = [ModelName::WeakBaseline, ModelName::StrongBaseline, ModelName::Node2vecStats];
        let spec = SplitSpec::default();
        let s = run_suite(&d, &models, &[11, 23], &[RegressorKind::Forest], &spec, &PipelineParams::quick()).unwrap();
        let a = analyze(&s, &d, &spec, &AnalysisConfig::default()).unwrap();
        assert_eq!(a.reports.len(), 2 * 2);
        assert_eq!(a.profiles.len(), 4);
        assert_eq!(a.rates.len(), 2);
        assert!(a.metrics_row(ModelName::WeakBaseline, RegressorKind::Forest, "global").is_some());
        assert!(!a.cold_start.is_empty());
        for (_, r) in &a.reports {
            assert_eq!(TriState::ALL.iter().map(|&t| r.count(t)).sum::<usize>(), r.eligible);
        }
        let dir = tempfile::tempdir().unwrap();
        write_outputs(dir.path(), &s, &a, Emit::default()).unwrap();
        for f in [METRICS_FILE, TRI_STATE_FILE, CASES_FILE, TRAITS_FILE, REPORT_FILE, MANIFEST_FILE] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let m = fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
        assert!(m.starts_with("# relcap "));
    }
}
