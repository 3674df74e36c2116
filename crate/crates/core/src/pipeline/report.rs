//! Re-formats a completed run directory into a text summary and plot data.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::analysis::{
    provenance_line, RateSummary, RunReport, CASES_FILE, LEDGER_FILE, MANIFEST_FILE, METRICS_FILE, REPORT_FILE, SCATTER_FEATURE, TRAITS_FILE, TRI_STATE_FILE,
};
use super::Manifest;
use crate::error::{Error, Result};
use crate::eval::{Spread, TriState};
use crate::prediction::RegressorKind;

pub const REPORT_DIR: &str = "report";
pub const SUMMARY_FILE: &str = "summary.txt";

/// Files a run must contain before it can be reported.
pub const REQUIRED: [&str; 7] = [MANIFEST_FILE, REPORT_FILE, METRICS_FILE, TRI_STATE_FILE, CASES_FILE, TRAITS_FILE, LEDGER_FILE];

#[derive(Clone, Debug, PartialEq)]
pub struct ReportOutput {
    pub summary: String,
    pub files: Vec<PathBuf>,
}

pub fn tri_state_plot_file(kind: RegressorKind) -> String {
    format!("plot_tri_state_{kind}.csv")
}

pub fn delta_e_plot_file(kind: RegressorKind) -> String {
    format!("plot_delta_e_{kind}.csv")
}

fn rate_of(r: &RateSummary, s: TriState) -> Option<Spread> {
    match s {
        TriState::Rescue => r.rescue,
        TriState::Neutral => r.neutral,
        TriState::Misguidance => r.misguidance,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn summary_text(manifest: &Manifest, report: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "relcap {} run summary", report.tool_version);
    let _ = writeln!(s, "dataset {}", report.dataset_fingerprint);
    let _ = writeln!(s, "config {}", report.config_hash);
    let _ = writeln!(s, "seeds {:?}", manifest.seeds);
    let _ = writeln!(s, "shared test instances {}, cold-start {}", report.intersection_size, report.cold_start_size);
    let _ = writeln!(s, "\nmetrics (seed mean)");
    let _ = writeln!(s, "{:<22} {:<7} {:<11} {:>5} {:>9} {:>9}", "model", "reg", "subset", "n", "rmse", "r2");
    for m in &report.metrics {
        let r2 = m.r2.map(|r| format!("{:.4}", r.mean)).unwrap_or_else(|| "n/a".into());
        let _ = writeln!(s, "{:<22} {:<7} {:<11} {:>5} {:>9.4} {:>9}", m.model, m.regressor, m.subset, m.n, m.rmse.mean, r2);
    }
    let _ = writeln!(s, "\ntri-state rates (seed mean)");
    let _ = writeln!(s, "{:<22} {:<16} {:<7} {:>8} {:>8} {:>8}", "graph", "baseline", "reg", "rescue", "neutral", "misguide");
    let n_seeds = manifest.seeds.len();
    for r in &report.rates {
        let cell = |st| rate_of(r, st).map(|x| format!("{:.3}", x.mean)).unwrap_or_else(|| "-".into());
        let _ = write!(
            s,
            "{:<22} {:<16} {:<7} {:>8} {:>8} {:>8}",
            r.graph,
            r.baseline,
            r.regressor.as_str(),
            cell(TriState::Rescue),
            cell(TriState::Neutral),
            cell(TriState::Misguidance)
        );
        if r.undefined_seeds == n_seeds {
            s.push_str("  tri-state undefined (no eligible outliers)");
        } else if r.undefined_seeds > 0 {
            let _ = write!(s, "  tri-state undefined for {} of {n_seeds} seeds", r.undefined_seeds);
        }
        s.push('\n');
    }
    s
}

fn tri_state_plot(report: &RunReport, kind: RegressorKind) -> Result<Vec<u8>> {
    let mut buf = provenance_line(&report.dataset_fingerprint, &report.config_hash).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["graph", "baseline", "state", "rate_mean", "rate_min", "rate_max", "undefined_seeds"])?;
        for r in report.rates.iter().filter(|r| r.regressor == kind) {
            for st in TriState::ALL {
                let sp = rate_of(r, st);
                w.write_record([
                    r.graph.clone(),
                    r.baseline.clone(),
                    st.to_string(),
                    opt(sp.map(|x| x.mean)),
                    opt(sp.map(|x| x.min)),
                    opt(sp.map(|x| x.max)),
                    r.undefined_seeds.to_string(),
                ])?;
            }
        }
        w.flush()?;
    }
    Ok(buf)
}

fn delta_e_plot(dir: &Path, report: &RunReport, kind: RegressorKind) -> Result<Vec<u8>> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(dir.join(LEDGER_FILE))?;
    let header = rd.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Load { file: LEDGER_FILE.into(), line: 1, message: format!("missing column {name}") })
    };
    let cols = ["graph", "baseline", "seed", "player_id", "season", SCATTER_FEATURE, "delta_e", "state"].map(col);
    let cols: Vec<usize> = cols.into_iter().collect::<Result<_>>()?;
    let reg = col("regressor")?;
    let mut buf = provenance_line(&report.dataset_fingerprint, &report.config_hash).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["graph", "baseline", "seed", "player_id", "season", SCATTER_FEATURE, "delta_e", "state"])?;
        for rec in rd.records() {
            let rec = rec?;
            if rec.get(reg) != Some(kind.as_str()) {
                continue;
            }
            w.write_record(cols.iter().map(|&i| rec.get(i).unwrap_or("")))?;
        }
        w.flush()?;
    }
    Ok(buf)
}

/// Writes [`SUMMARY_FILE`] and the plot CSVs under `run_dir/report/`.
/// Reads only files of the run, so repeated calls produce identical output.
pub fn write_report(run_dir: &Path) -> Result<ReportOutput> {
    let missing: Vec<String> = REQUIRED.iter().filter(|f| !run_dir.join(f).is_file()).map(|f| f.to_string()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingArtifacts(missing));
    }
    let manifest: Manifest = serde_json::from_slice(&fs::read(run_dir.join(MANIFEST_FILE))?)?;
    let report: RunReport = serde_json::from_slice(&fs::read(run_dir.join(REPORT_FILE))?)?;
    let out = run_dir.join(REPORT_DIR);
    fs::create_dir_all(&out)?;
    let summary = summary_text(&manifest, &report);
    let mut files = vec![out.join(SUMMARY_FILE)];
    fs::write(&files[0], &summary)?;
    for &kind in &manifest.regressors {
        let p = out.join(tri_state_plot_file(kind));
        fs::write(&p, tri_state_plot(&report, kind)?)?;
        files.push(p);
        let p = out.join(delta_e_plot_file(kind));
        fs::write(&p, delta_e_plot(run_dir, &report, kind)?)?;
        files.push(p);
    }
    Ok(ReportOutput { summary, files })
}
