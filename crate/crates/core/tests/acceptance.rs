//! Acceptance criteria 1-10. Each test writes one PASS/FAIL line to stderr
//! (bypassing output capture) and then asserts.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relcap::data::{make_target, split_by_season, Dataset, InstanceKey, SplitSpec};
use relcap::datagen::{generate_league, LatentTruth, LeagueConfig, Trajectory};
use relcap::embed::rotate::{RotateModel, Triple};
use relcap::embed::skipgram::sgns_loss_and_grad;
use relcap::embed::walk::{transition_weights, total_variation, WalkGraph, WalkParams};
use relcap::eval::{compute_tau, rmse, tri_state, tri_state_report, TriState, TriStateReport, STATE_MARGIN, TAU_QUANTILE};
use relcap::gnn::layer::{layer_backward, layer_forward, LayerWeights, SparseOp};
use relcap::gnn::{GnnHyper, GnnModel, GnnVariant};
use relcap::kg::{build_graph, inductive_mask, player_key, season_view, BuildOptions, Relation, Variant};
use relcap::pipeline::analysis::{analyze, Analysis, AnalysisConfig};
use relcap::pipeline::{fit_regressor, prepare, run_suite, ModelName, Phase, PipelineParams, Suite, TargetLog, SEEDS};
use relcap::prediction::{PredictionRow, PredictionSet, RegressorKind};
use relcap::profile::{cliffs_delta, mann_whitney_u, top_traits, FeatureTable, PMethod, TraitFilter};
use relcap::regress::{fit_forest, FittedRegressor, ForestParams, Model};

fn verdict(n: u32, ok: bool, detail: &str) {
    let line = format!("[criterion {n}] {}: {detail}\n", if ok { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

struct Shared {
    dataset: Dataset,
    truth: LatentTruth,
    spec: SplitSpec,
    suite: Suite,
    analysis: Analysis,
}

fn shared() -> &'static Shared {
    static S: OnceLock<Shared> = OnceLock::new();
    S.get_or_init(|| {
        let (dataset, truth) = generate_league(&LeagueConfig::default()).unwrap();
        let spec = SplitSpec::default();
        let suite = run_suite(&dataset, &ModelName::ALL, &SEEDS, &RegressorKind::ALL, &spec, &PipelineParams::default()).unwrap();
        let analysis = analyze(&suite, &dataset, &spec, &AnalysisConfig::default()).unwrap();
        Shared { dataset, truth, spec, suite, analysis }
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

// ---------------------------------------------------------------- 1

fn brute_delta(r: &[f64], m: &[f64]) -> f64 {
    let mut gt = 0i64;
    let mut lt = 0i64;
    for a in r {
        for b in m {
            if a > b {
                gt += 1;
            } else if a < b {
                lt += 1;
            }
        }
    }
    (gt - lt) as f64 / (r.len() * m.len()) as f64
}

fn u_of(r: &[f64], m: &[f64]) -> f64 {
    let mut u = 0.0;
    for a in r {
        for b in m {
            if a > b {
                u += 1.0;
            } else if a == b {
                u += 0.5;
            }
        }
    }
    u
}

/// Two-sided exact p by enumerating every assignment of the pooled values to
/// a cohort of size `nr`.
fn permutation_p(r: &[f64], m: &[f64]) -> f64 {
    let pooled: Vec<f64> = r.iter().chain(m).copied().collect();
    let n = pooled.len();
    let nr = r.len();
    let observed = u_of(r, m);
    let (mut total, mut le, mut ge) = (0u64, 0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != nr {
            continue;
        }
        let (a, b): (Vec<(usize, f64)>, Vec<(usize, f64)>) = pooled.iter().copied().enumerate().partition(|(i, _)| mask >> i & 1 == 1);
        let a: Vec<f64> = a.into_iter().map(|x| x.1).collect();
        let b: Vec<f64> = b.into_iter().map(|x| x.1).collect();
        let u = u_of(&a, &b);
        total += 1;
        if u <= observed {
            le += 1;
        }
        if u >= observed {
            ge += 1;
        }
    }
    (2.0 * (le as f64 / total as f64).min(ge as f64 / total as f64)).min(1.0)
}

#[test]
fn criterion_01_statistical_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut delta_mismatch = 0;
    for _ in 0..1000 {
        let nr = rng.gen_range(1..=50);
        let nm = rng.gen_range(1..=50);
        let r: Vec<f64> = (0..nr).map(|_| rng.gen_range(0..20) as f64).collect();
        let m: Vec<f64> = (0..nm).map(|_| rng.gen_range(0..20) as f64).collect();
        if cliffs_delta(&r, &m).unwrap() != brute_delta(&r, &m) {
            delta_mismatch += 1;
        }
    }
    let mut p_mismatch = 0;
    let mut cases = 0;
    let mut identity_err: f64 = 0.0;
    for n in 2..=10usize {
        for nr in 1..n {
            for _ in 0..3 {
                let mut vals: Vec<f64> = (0..n).map(|i| i as f64 + rng.gen::<f64>() * 0.5).collect();
                vals.shuffle(&mut rng);
                let (r, m) = vals.split_at(nr);
                let t = mann_whitney_u(r, m).unwrap();
                cases += 1;
                if t.method != PMethod::Exact || t.p != permutation_p(r, m) || t.u != u_of(r, m) {
                    p_mismatch += 1;
                }
            }
        }
    }
    for _ in 0..200 {
        let nr = rng.gen_range(1..=40);
        let nm = rng.gen_range(1..=40);
        let vals: Vec<f64> = (0..nr + nm).map(|_| rng.gen::<f64>()).collect();
        let (r, m) = vals.split_at(nr);
        let t = mann_whitney_u(r, m).unwrap();
        let d = cliffs_delta(r, m).unwrap();
        identity_err = identity_err.max((2.0 * t.u / (nr * nm) as f64 - 1.0 - d).abs());
    }
    let ok = delta_mismatch == 0 && p_mismatch == 0 && identity_err <= 1e-12;
    verdict(1, ok, &format!("delta mismatches {delta_mismatch}/1000, exact-p mismatches {p_mismatch}/{cases}, max |2U/(nR nM)-1-delta| {identity_err:.2e}"));
    assert!(ok);
}

// ---------------------------------------------------------------- 2

/// Floor keeps near-zero entries from dividing by rounding noise.
const REL_FLOOR: f64 = 1e-6;
const EPS: f64 = 1e-5;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Central difference of `f` in every coordinate of `x`, against `grad`.
fn fd_check(x: &mut [f64], grad: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + EPS;
        let up = f(x);
        x[i] = orig - EPS;
        let down = f(x);
        x[i] = orig;
        worst = worst.max(rel_err(grad[i], (up - down) / (2.0 * EPS)));
    }
    worst
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn sgns_worst(rng: &mut ChaCha8Rng) -> f64 {
    let d = 6;
    let k = 3;
    let mut flat = random_vec(rng, d * (2 + k), 1.0);
    let loss = |f: &[f64]| {
        let negs: Vec<&[f64]> = (0..k).map(|j| &f[(2 + j) * d..(3 + j) * d]).collect();
        sgns_loss_and_grad(&f[..d], &f[d..2 * d], &negs).loss
    };
    let g = {
        let negs: Vec<&[f64]> = (0..k).map(|j| &flat[(2 + j) * d..(3 + j) * d]).collect();
        sgns_loss_and_grad(&flat[..d], &flat[d..2 * d], &negs)
    };
    let mut grad = g.d_center.clone();
    grad.extend(&g.d_context);
    for n in &g.d_negatives {
        grad.extend(n);
    }
    fd_check(&mut flat, &grad, loss)
}

fn rotate_worst(rng: &mut ChaCha8Rng) -> f64 {
    let dim = 4;
    let (ne, nr) = (5, 2);
    loop {
        let entities = random_vec(rng, ne * 2 * dim, 1.0);
        let relations: Vec<f64> = (0..nr * dim)
            .flat_map(|_| {
                let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                [a.cos(), a.sin()]
            })
            .collect();
        let model = RotateModel { dim, entities, relations };
        let pos = Triple { head: 0, relation: 0, tail: 1 };
        let negs = [Triple { head: 0, relation: 0, tail: 2 }, Triple { head: 3, relation: 0, tail: 1 }, Triple { head: 4, relation: 0, tail: 1 }];
        let margin = 2.0;
        // Stay away from hinge and modulus kinks.
        let dp = model.distance(pos);
        if negs.iter().any(|&n| (margin + dp - model.distance(n)).abs() < 1e-3) {
            continue;
        }
        let (_, grad) = model.group_loss_and_grad(pos, &negs, margin);
        let w = 2 * dim;
        let mut flat = model.entities.clone();
        flat.extend(&model.relations);
        let mut g = vec![0.0; flat.len()];
        for (&e, v) in &grad.entities {
            g[e * w..(e + 1) * w].copy_from_slice(v);
        }
        for (&r, v) in &grad.relations {
            let o = ne * w + r * w;
            g[o..o + w].copy_from_slice(v);
        }
        let split = ne * w;
        return fd_check(&mut flat, &g, |f| {
            let m = RotateModel { dim, entities: f[..split].to_vec(), relations: f[split..].to_vec() };
            m.group_loss(pos, &negs, margin)
        });
    }
}

fn random_op(rng: &mut ChaCha8Rng, n: usize, density: f64) -> SparseOp {
    let rows = (0..n)
        .map(|i| {
            let nb: Vec<usize> = (0..n).filter(|&j| j != i && rng.gen_bool(density)).collect();
            let m: Vec<f64> = nb.iter().map(|_| rng.gen_range(1..=3) as f64).collect();
            let total: f64 = m.iter().sum();
            nb.into_iter().zip(m).map(|(j, w)| (j, w / total)).collect()
        })
        .collect();
    SparseOp { rows }
}

fn matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.gen_range(-1.0..1.0))
}

fn flatten_layer(w: &LayerWeights, x: &Array2<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = w.matrices().flat_map(|m| m.iter().copied().collect::<Vec<_>>()).collect();
    v.extend(x.iter());
    v
}

fn unflatten_layer(f: &[f64], like: &LayerWeights, x_shape: (usize, usize)) -> (LayerWeights, Array2<f64>) {
    let mut w = like.clone();
    let mut it = f.iter();
    for m in w.matrices_mut() {
        m.iter_mut().for_each(|v| *v = *it.next().unwrap());
    }
    let x = Array2::from_shape_fn(x_shape, |_| *it.next().unwrap());
    (w, x)
}

/// Layer gradient (weights and input) plus a two-layer model with head.
fn gnn_worst(rng: &mut ChaCha8Rng, n_ops: usize) -> f64 {
    let (n, din, dout) = (6, 3, 4);
    loop {
        let ops: Vec<SparseOp> = (0..n_ops).map(|_| random_op(rng, n, 0.5)).collect();
        let w = LayerWeights { w_self: matrix(rng, din, dout), w_ops: (0..n_ops).map(|_| matrix(rng, din, dout)).collect() };
        let x = matrix(rng, n, din);
        let cache = layer_forward(&w, &ops, &x).unwrap();
        if cache.pre.iter().any(|v| v.abs() < 1e-3) {
            continue;
        }
        let c = matrix(rng, n, dout);
        let (gw, gx) = layer_backward(&w, &ops, &cache, &c);
        let mut flat = flatten_layer(&w, &x);
        let grad = flatten_layer(&gw, &gx);
        let layer = fd_check(&mut flat, &grad, |f| {
            let (w2, x2) = unflatten_layer(f, &w, (n, din));
            (&layer_forward(&w2, &ops, &x2).unwrap().out * &c).sum()
        });

        let (variant, relations) = if n_ops == 1 {
            (GnnVariant::V1, vec![])
        } else {
            (GnnVariant::V2FullMg, Relation::ALL[..n_ops].to_vec())
        };
        let hyper = GnnHyper { hidden: dout, layers: 2, ..GnnHyper::default() };
        let mut model = GnnModel::new(variant, din, relations, hyper, rng.gen(), 0.0);
        let mut params = random_vec(rng, model.param_count(), 1.0);
        model.assign(&params);
        let fwd = model.forward(&ops, &x).unwrap();
        if fwd.caches.iter().any(|c| c.pre.iter().any(|v| v.abs() < 1e-3)) {
            continue;
        }
        let labels: Vec<(usize, f64)> = (0..n).step_by(2).map(|i| (i, rng.gen_range(-1.0..1.0))).collect();
        let (_, g) = model.loss_and_grad(&ops, &x, &labels).unwrap();
        let mut probe = model.clone();
        let full = fd_check(&mut params, &g.flatten(), |f| {
            probe.assign(f);
            probe.mse(&ops, &x, &labels).unwrap()
        });
        return layer.max(full);
    }
}

#[test]
fn criterion_02_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sgns = (0..20).map(|_| sgns_worst(&mut rng)).fold(0.0, f64::max);
    let rot = (0..20).map(|_| rotate_worst(&mut rng)).fold(0.0, f64::max);
    let mean_agg = (0..20).map(|_| gnn_worst(&mut rng, 1)).fold(0.0, f64::max);
    let typed = (0..20).map(|_| gnn_worst(&mut rng, 3)).fold(0.0, f64::max);
    let ok = [sgns, rot, mean_agg, typed].iter().all(|&e| e < 1e-4);
    verdict(2, ok, &format!("max rel err: sgns {sgns:.2e}, rotation-margin {rot:.2e}, mean aggregator {mean_agg:.2e}, relation-typed {typed:.2e}"));
    assert!(ok);
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_03_walk_law() {
    // Pendant 0 on a triangle 1-2-3.
    let g = WalkGraph::from_adjacency(vec![vec![1], vec![0, 2, 3], vec![1, 3], vec![1, 2]]);
    let mut worst: f64 = 0.0;
    for (p, q) in [(1.0, 1.0), (0.25, 4.0), (4.0, 0.25)] {
        let params = WalkParams { walk_length: 101, walks_per_node: 1, p, q };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts: BTreeMap<(usize, usize), BTreeMap<usize, usize>> = BTreeMap::new();
        let mut steps = 0;
        let mut start = 0;
        while steps < 100_000 {
            let w = g.walk(start % 4, &params, &mut rng);
            start += 1;
            for t in 2..w.len() {
                if steps == 100_000 {
                    break;
                }
                *counts.entry((w[t - 2], w[t - 1])).or_default().entry(w[t]).or_default() += 1;
                steps += 1;
            }
        }
        for ((prev, curr), next) in &counts {
            let nb = g.neighbors(*curr);
            let expected = transition_weights(*prev, nb, p, q, |a, b| g.adjacent(a, b)).unwrap();
            let total: usize = next.values().sum();
            let observed: Vec<f64> = nb.iter().map(|n| *next.get(n).unwrap_or(&0) as f64 / total as f64).collect();
            worst = worst.max(total_variation(&observed, &expected));
        }
    }
    let ok = worst <= 0.02;
    verdict(3, ok, &format!("max total variation {worst:.4} over (p,q) in {{(1,1),(0.25,4),(4,0.25)}}"));
    assert!(ok);
}

// ---------------------------------------------------------------- 4

fn label(key: &str) -> Option<i32> {
    let rest = key.strip_prefix("ps:")?;
    rest.rsplit_once(':')?.1.parse().ok()
}

fn player_of(key: &str) -> String {
    match key.strip_prefix("ps:").and_then(|r| r.rsplit_once(':')) {
        Some((p, _)) => player_key(p),
        None => key.to_string(),
    }
}

fn independent_admissible(src: &str, rel: Relation, dst: &str, event: Option<i32>, s: i32) -> bool {
    let endpoints = [src, dst].iter().all(|k| label(k).is_none_or(|l| l <= s));
    let event_ok = match (rel.is_event(), event) {
        (true, Some(e)) => e < s,
        (true, None) => false,
        (false, _) => true,
    };
    endpoints && event_ok
}

fn scan_views(d: &Dataset, test_season: i32) -> (usize, usize) {
    let mut checked = 0;
    let mut bad = 0;
    for teammates in [false, true] {
        let graph = build_graph(d, BuildOptions { include_events: true, teammate_edges: teammates }).unwrap();
        let source: HashSet<(String, Relation, String, Option<i32>)> = graph.edges.iter().map(|e| (e.src.clone(), e.relation, e.dst.clone(), e.event_season)).collect();
        for s in d.seasons() {
            let admissible_src: Vec<_> = graph.edges.iter().filter(|e| independent_admissible(&e.src, e.relation, &e.dst, e.event_season, s)).collect();
            let collapsed: HashSet<(String, Relation, String)> = admissible_src
                .iter()
                .flat_map(|e| {
                    let (a, b) = (player_of(&e.src), player_of(&e.dst));
                    [(a.clone(), e.relation, b.clone()), (b, e.relation, a)]
                })
                .collect();
            for v in [Variant::V1StaticPlayer, Variant::V2PlayerSeason, Variant::V2FullSg, Variant::V2FullMg] {
                let view = season_view(&graph, v, s).unwrap();
                let mut views = vec![view.clone()];
                let test_keys: Vec<String> = view.keys_of_type(relcap::kg::NodeType::PlayerSeason).into_iter().filter(|k| label(k) == Some(s)).map(String::from).collect();
                if v != Variant::V1StaticPlayer && s == test_season && !test_keys.is_empty() {
                    views.push(inductive_mask(&view, &test_keys).unwrap().train);
                }
                for view in views {
                    for e in view.to_edges() {
                        checked += 1;
                        let ok = if v == Variant::V1StaticPlayer {
                            collapsed.contains(&(e.src.clone(), e.relation, e.dst.clone()))
                        } else {
                            independent_admissible(&e.src, e.relation, &e.dst, e.event_season, s) && source.contains(&(e.src.clone(), e.relation, e.dst.clone(), e.event_season))
                        };
                        if !ok {
                            bad += 1;
                        }
                    }
                    for i in 0..view.node_count() {
                        if label(view.key(i)).is_some_and(|l| l > s) {
                            bad += 1;
                        }
                    }
                }
            }
        }
    }
    (checked, bad)
}

#[test]
fn criterion_04_anti_leakage() {
    let (d, _) = generate_league(&LeagueConfig::default()).unwrap();
    let spec = SplitSpec::default();
    let (checked, bad) = scan_views(&d, spec.test_season());

    let mut perturbed = d.clone();
    for r in perturbed.records.iter_mut().filter(|r| spec.is_test(r.season)) {
        r.salary_usd = r.salary_usd * 3.7 + 1.0e6;
    }
    let split = split_by_season(&d, &spec).unwrap();
    let mut fit_rows = split.train.clone();
    fit_rows.records.extend(split.val.records.iter().cloned());
    let expected_fp = fit_rows.records_fingerprint();
    let allowed: BTreeSet<i32> = spec.train_seasons.union(&spec.val_seasons).copied().collect();

    let params = PipelineParams::default();
    let seed = SEEDS[0];
    let mut diffs = Vec::new();
    let mut tau_violations = Vec::new();
    for name in ModelName::ALL {
        let (la, lb) = (TargetLog::default(), TargetLog::default());
        let a = prepare(&d, name, &spec, seed, &params, &la).unwrap();
        let b = prepare(&perturbed, name, &spec, seed, &params, &lb).unwrap();
        if a.artifacts != b.artifacts {
            diffs.push(format!("{name} preprocessing/embedding artifacts"));
        }
        if a.x_train.values != b.x_train.values || a.x_val.values != b.x_val.values || a.x_test.values != b.x_test.values {
            diffs.push(format!("{name} design matrices"));
        }
        for kind in RegressorKind::ALL {
            let ra = fit_regressor(&d, &a, kind, &params, &la).unwrap();
            let rb = fit_regressor(&perturbed, &b, kind, &params, &lb).unwrap();
            if ra.model_bytes != rb.model_bytes {
                diffs.push(format!("{name}/{kind} model bytes"));
            }
            if ra.residuals != rb.residuals {
                diffs.push(format!("{name}/{kind} residual sample"));
            }
            let tau = compute_tau(&ra.residuals, TAU_QUANTILE, &allowed).unwrap();
            if tau.source_fingerprint != expected_fp || tau.source_seasons.iter().any(|s| !allowed.contains(s)) {
                tau_violations.push(format!("{name}/{kind}"));
            }
        }
        for (phase, key) in la.reads().into_iter().chain(lb.reads()) {
            if phase != Phase::Score && !allowed.contains(&key.season) {
                diffs.push(format!("{name} read {phase:?} target of {key}"));
            }
        }
    }
    let ok = bad == 0 && checked > 0 && diffs.is_empty() && tau_violations.is_empty();
    verdict(
        4,
        ok,
        &format!(
            "{checked} view edges scanned, {bad} inadmissible; artifact differences after test-salary perturbation: {diffs:?}; tau fingerprint violations: {tau_violations:?}"
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 5

fn row(key: &InstanceKey, y: f64, p: f64) -> PredictionRow {
    PredictionRow {
        key: key.clone(),
        y_true_log: make_target(y).unwrap(),
        y_pred_log: make_target(p).unwrap(),
        y_true_dollars: y,
        y_pred_dollars: p,
    }
}

fn swapped(s: TriState) -> TriState {
    match s {
        TriState::Rescue => TriState::Misguidance,
        TriState::Misguidance => TriState::Rescue,
        TriState::Neutral => TriState::Neutral,
    }
}

#[test]
fn criterion_05_tri_state_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut failures = Vec::new();
    for trial in 0..300 {
        let n = rng.gen_range(1..80);
        let keys: Vec<InstanceKey> = (0..n).map(|i| InstanceKey::new(format!("p{i:03}"), 2024)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0e6..40.0e6)).collect();
        let noisy = |rng: &mut ChaCha8Rng, v: f64| (v + rng.gen_range(-6.0e6..6.0e6)).max(0.0);
        let b: Vec<f64> = y.iter().map(|&v| noisy(&mut rng, v)).collect();
        let g: Vec<f64> = y.iter().map(|&v| noisy(&mut rng, v)).collect();
        let base = PredictionSet::new("base", RegressorKind::Forest, 1, keys.iter().zip(&y).zip(&b).map(|((k, &y), &p)| row(k, y, p)).collect());
        let graph = PredictionSet::new("graph", RegressorKind::Forest, 1, keys.iter().zip(&y).zip(&g).map(|((k, &y), &p)| row(k, y, p)).collect());
        let tau = if trial % 2 == 0 { rng.gen_range(1.0e5..3.0e6) } else { 1e-3 };
        let ab = tri_state_report(&base, &graph, tau, STATE_MARGIN, None).unwrap();
        let ba = tri_state_report(&graph, &base, tau, STATE_MARGIN, None).unwrap();
        // Partition of the eligible pool.
        let expected_pool: BTreeSet<&InstanceKey> = base.rows.iter().filter(|r| (r.y_true_dollars - r.y_pred_dollars).abs() > tau).map(|r| &r.key).collect();
        let pool: BTreeSet<&InstanceKey> = ab.ledger.iter().map(|r| &r.key).collect();
        let by_state: usize = TriState::ALL.iter().map(|&s| ab.keys_in(s).len()).sum();
        let disjoint = TriState::ALL.iter().flat_map(|&s| ab.keys_in(s)).collect::<BTreeSet<_>>().len() == by_state;
        if pool != expected_pool || by_state != ab.eligible || !disjoint || TriState::ALL.iter().map(|&s| ab.count(s)).sum::<usize>() != ab.eligible {
            failures.push(format!("trial {trial}: not a partition"));
        }
        // Swap on instances eligible under both baselines.
        let ba_state: BTreeMap<&InstanceKey, TriState> = ba.ledger.iter().map(|r| (&r.key, r.state)).collect();
        for r in &ab.ledger {
            if let Some(&s) = ba_state.get(&r.key) {
                if s != swapped(r.state) {
                    failures.push(format!("trial {trial}: {} did not swap", r.key));
                }
            }
        }
        if tau < 1.0 {
            let full = |r: &TriStateReport| r.eligible == n;
            if full(&ab) && full(&ba) && (ab.count(TriState::Rescue) != ba.count(TriState::Misguidance) || ab.count(TriState::Misguidance) != ba.count(TriState::Rescue)) {
                failures.push(format!("trial {trial}: counts did not swap"));
            }
        }
    }
    // Boundary ΔE = ±$0.5M is Neutral, in the classifier and in a report.
    let k = |i: &str| InstanceKey::new(i, 2024);
    let y = 10.0e6;
    let base = PredictionSet::new("b", RegressorKind::Forest, 1, vec![row(&k("up"), y, 11.0e6), row(&k("down"), y, 11.0e6), row(&k("in"), y, 11.0e6)]);
    let graph = PredictionSet::new("g", RegressorKind::Forest, 1, vec![row(&k("up"), y, 10.5e6), row(&k("down"), y, 8.5e6), row(&k("in"), y, 10.4e6)]);
    let rep = tri_state_report(&base, &graph, 0.5e6, STATE_MARGIN, None).unwrap();
    let state = |id: &str| rep.ledger.iter().find(|r| r.key.player_id == id).map(|r| r.state);
    if tri_state(500_000.0, STATE_MARGIN) != TriState::Neutral || tri_state(-500_000.0, STATE_MARGIN) != TriState::Neutral {
        failures.push("classifier boundary".into());
    }
    if state("up") != Some(TriState::Neutral) || state("down") != Some(TriState::Neutral) || state("in") != Some(TriState::Rescue) {
        failures.push(format!("report boundary: {:?}", rep.ledger));
    }
    let ok = failures.is_empty();
    verdict(5, ok, &format!("300 randomized trials plus boundary fixtures, failures: {failures:?}"));
    assert!(ok);
}

// ---------------------------------------------------------------- 6

fn cli_run(out: &Path) -> i32 {
    relcap::cli::main_with_args([
        "relcap",
        "run",
        "--generate-seed",
        "7",
        "--seeds",
        "11",
        "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn criterion_06_end_to_end_determinism() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    let codes = (cli_run(&a), cli_run(&b));
    let mut files: Vec<String> = ["metrics.csv", "tri_state.csv", "cases.csv", "traits.csv", "ledger.csv", "report.json"].map(String::from).to_vec();
    for e in fs::read_dir(a.join("predictions")).unwrap() {
        files.push(format!("predictions/{}", e.unwrap().file_name().to_string_lossy()));
    }
    let differing: Vec<&String> = files.iter().filter(|f| fs::read(a.join(f)).ok() != fs::read(b.join(f)).ok() || !a.join(f).is_file()).collect();
    let ok = codes == (0, 0) && differing.is_empty();
    verdict(6, ok, &format!("exit codes {codes:?}, {} files compared, differing: {differing:?}", files.len()));
    assert!(ok);
}

// ---------------------------------------------------------------- 7

#[test]
fn criterion_07_directional_reproduction() {
    let s = shared();
    let f = RegressorKind::Forest;
    let rmse_of = |m| s.analysis.metrics_row(m, f, "global").unwrap().rmse.mean;
    let cold_r2 = |m| s.analysis.metrics_row(m, f, "cold_start").and_then(|r| r.r2).map(|r| r.mean);
    let weak = rmse_of(ModelName::WeakBaseline);
    let strong = rmse_of(ModelName::StrongBaseline);
    let n2v = rmse_of(ModelName::Node2vecStats);
    let rot = rmse_of(ModelName::RotateStats);
    let a = strong < weak;
    let b = n2v < weak || rot < weak;
    let strong_cold = cold_r2(ModelName::StrongBaseline);
    let mut not_lower = Vec::new();
    for m in ModelName::ALL.into_iter().filter(|m| !m.is_baseline()) {
        match (cold_r2(m), strong_cold) {
            (Some(g), Some(sb)) if g < sb => {}
            (g, _) => not_lower.push(format!("{m} {g:?}")),
        }
    }
    let c = strong_cold.is_some_and(|v| v > 0.0) && not_lower.is_empty();
    let ok = a && b && c;
    verdict(
        7,
        ok,
        &format!(
            "(a) strong {strong:.4} < weak {weak:.4}: {a}; (b) node2vec {n2v:.4} / rotate {rot:.4} < weak: {b}; (c) strong cold-start R2 {strong_cold:?}, graph configs not below it: {not_lower:?}: {c}"
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 8

fn class_keys(truth: &LatentTruth, class: Trajectory) -> BTreeSet<InstanceKey> {
    truth.trajectories.iter().filter(|t| t.class == class).map(|t| InstanceKey::new(t.player_id.clone(), t.season)).collect()
}

#[test]
fn criterion_08_mechanisms() {
    let s = shared();
    let f = RegressorKind::Forest;
    let legacy = class_keys(&s.truth, Trajectory::DecliningLegacy);
    let rookies = class_keys(&s.truth, Trajectory::RookieScale);
    let best_static = [ModelName::Node2vecStats, ModelName::RotateStats]
        .into_iter()
        .min_by(|a, b| {
            let r = |m| s.analysis.metrics_row(m, f, "global").unwrap().rmse.mean;
            r(*a).total_cmp(&r(*b))
        })
        .unwrap();
    let (mut rescue, mut misguide) = (Vec::new(), Vec::new());
    for seed in SEEDS {
        let rep = s.analysis.report(best_static, ModelName::WeakBaseline, f, seed).unwrap();
        let rows: Vec<_> = rep.ledger.iter().filter(|r| legacy.contains(&r.key)).collect();
        if rows.is_empty() {
            continue;
        }
        let n = rows.len() as f64;
        rescue.push(rows.iter().filter(|r| r.state == TriState::Rescue).count() as f64 / n);
        misguide.push(rows.iter().filter(|r| r.state == TriState::Misguidance).count() as f64 / n);
    }
    let legacy_ok = !rescue.is_empty() && mean(&rescue) > mean(&misguide);

    let rookie_rmse = |m: ModelName| {
        let per: Vec<f64> = SEEDS
            .iter()
            .map(|&seed| {
                let run = s.suite.run(m, f, seed).unwrap();
                let rows: Vec<_> = run.predictions.rows.iter().filter(|r| rookies.contains(&r.key) && s.suite.intersection.contains(&r.key)).collect();
                rmse(&rows.iter().map(|r| r.y_true_log).collect::<Vec<_>>(), &rows.iter().map(|r| r.y_pred_log).collect::<Vec<_>>()).unwrap()
            })
            .collect();
        mean(&per)
    };
    let weak_rookie = rookie_rmse(ModelName::WeakBaseline);
    let mut beating = Vec::new();
    let mut all = Vec::new();
    for m in ModelName::ALL.into_iter().filter(|m| !m.is_baseline()) {
        let r = rookie_rmse(m);
        all.push(format!("{m} {r:.4}"));
        if !(r > weak_rookie) {
            beating.push(m.as_str());
        }
    }
    let rookie_ok = beating.is_empty();
    let ok = legacy_ok && rookie_ok;
    verdict(
        8,
        ok,
        &format!(
            "legacy outliers under {best_static}: rescue {:.3} vs misguidance {:.3}: {legacy_ok}; rookie RMSE weak {weak_rookie:.4}, graph [{}], configs beating weak: {beating:?}: {rookie_ok}",
            mean(&rescue),
            mean(&misguide),
            all.join(", ")
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 9

#[test]
fn criterion_09_planted_profile() {
    let s = shared();
    let f = RegressorKind::Forest;
    let table = FeatureTable::from_dataset(&s.dataset);
    let age_col = table.names.iter().position(|n| n == "age_now").unwrap();
    let mut ages: Vec<f64> = s.suite.intersection.iter().filter_map(|k| table.rows[k][age_col]).collect();
    ages.sort_by(f64::total_cmp);
    let cut = ages[(0.9 * (ages.len() - 1) as f64).floor() as usize];
    let oldest: BTreeSet<&InstanceKey> = s.suite.intersection.iter().filter(|k| table.rows[*k][age_col].is_some_and(|a| a >= cut)).collect();
    let mut hits = 0;
    let mut detail = Vec::new();
    for seed in SEEDS {
        let base = s.suite.run(ModelName::WeakBaseline, f, seed).unwrap();
        let graph = s.suite.run(ModelName::RotateStats, f, seed).unwrap();
        let tau = s.analysis.taus.iter().find(|t| t.baseline == ModelName::WeakBaseline && t.regressor == f && t.seed == seed).unwrap().tau.dollars;
        let original = tri_state_report(&base.predictions, &graph.predictions, tau, STATE_MARGIN, Some(&s.suite.intersection)).unwrap();
        let state: BTreeMap<&InstanceKey, TriState> = original.ledger.iter().map(|r| (&r.key, r.state)).collect();
        let b = base.predictions.by_key();
        let rows = graph
            .predictions
            .rows
            .iter()
            .map(|r| {
                let mut r = r.clone();
                match state.get(&r.key) {
                    Some(_) if oldest.contains(&r.key) => {
                        r.y_pred_log = r.y_true_log;
                        r.y_pred_dollars = r.y_true_dollars;
                    }
                    Some(TriState::Rescue) => {
                        let br = b[&r.key];
                        r.y_pred_log = br.y_pred_log;
                        r.y_pred_dollars = br.y_pred_dollars;
                    }
                    _ => {}
                }
                r
            })
            .collect();
        let planted = PredictionSet::new("planted", f, seed, rows);
        let rep = tri_state_report(&base.predictions, &planted, tau, STATE_MARGIN, Some(&s.suite.intersection)).unwrap();
        let profile = top_traits("planted", "weak_baseline", &table, &rep.keys_in(TriState::Rescue), &rep.keys_in(TriState::Misguidance), TraitFilter::default()).unwrap();
        let top = profile.top();
        let first = top.first();
        let hit = first.is_some_and(|t| t.feature == "age_now" && t.delta.unwrap() > 0.25 && t.p.unwrap() <= 0.10);
        hits += hit as usize;
        detail.push(match first {
            Some(t) => format!("seed {seed}: n_R {} n_M {} first {} delta {:.3} p {:.4}", profile.n_r, profile.n_m, t.feature, t.delta.unwrap(), t.p.unwrap()),
            None => format!("seed {seed}: n_R {} n_M {} no passing trait", profile.n_r, profile.n_m),
        });
    }
    let ok = hits >= 4;
    verdict(9, ok, &format!("age_now ranked first in {hits}/5 seeds; {}", detail.join("; ")));
    assert!(ok);
}

// ---------------------------------------------------------------- 10

#[test]
fn criterion_10_regressor_sanity() {
    let s = shared();
    let params = PipelineParams::default();
    let log = TargetLog::default();
    let prep = prepare(&s.dataset, ModelName::WeakBaseline, &s.spec, SEEDS[0], &params, &log).unwrap();
    let mut forest_fail = Vec::new();
    let mut detail = Vec::new();
    for seed in SEEDS {
        let val_rmse = |p: &ForestParams| {
            let m = fit_forest(&prep.x_train, &prep.y_train, p, seed).unwrap();
            rmse(&prep.y_val, &m.predict(&prep.x_val).unwrap()).unwrap()
        };
        let many = val_rmse(&ForestParams { n_trees: 500, ..params.forest });
        let one = val_rmse(&ForestParams { n_trees: 1, ..params.forest });
        detail.push(format!("seed {seed}: 500 trees {many:.4} vs 1 tree {one:.4}"));
        if !(many <= one) {
            forest_fail.push(seed);
        }
    }
    let mut gbt_fail = Vec::new();
    let mut gbt_runs = 0;
    for run in s.suite.runs.iter().filter(|r| r.config.regressor == RegressorKind::Gbt) {
        let fitted = FittedRegressor::from_bytes(&run.model_bytes).unwrap();
        let Model::Gbt(g) = fitted.model else { panic!("gbt run holds a forest") };
        gbt_runs += 1;
        let best = g.val_rmse[g.best_iteration];
        if g.val_rmse[..g.best_iteration].iter().any(|&v| v < best) {
            gbt_fail.push(format!("{}/{}", run.config.name, run.seed));
        }
    }
    let ok = forest_fail.is_empty() && gbt_fail.is_empty() && gbt_runs == ModelName::ALL.len() * SEEDS.len();
    verdict(10, ok, &format!("{}; forest failures {forest_fail:?}; GBT early-stopping violations {gbt_fail:?} over {gbt_runs} runs", detail.join(", ")));
    assert!(ok);
}
