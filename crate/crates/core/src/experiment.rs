//! Experiment orchestration: sweeps, CSV output and consistency checks.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::baselines::{baseline_difference, lower_bound, round_robin_longrun_cost, uniform_longrun_cost};
use crate::cluster::Cluster;
use crate::config::{config_hash, hash_hex, ExperimentKind, LoadedConfig, PolicyKind};
use crate::error::{Error, Result};
use crate::greedy::{dual_threshold_action, greedy_thresholds, GreedyThresholds};
use crate::index::{build_cluster_tables, IndexOptions, IndexTable};
use crate::joint_mdp::{rvia_solve_with, RviaOptions, SolvedMdp};
use crate::model::{ArrivalMixture, ClusterConfig};
use crate::report::{fmt_num, write_csv_atomic};
use crate::sim::{
    delta_metric, run_lockstep, run_policy_observed, AlwaysOff, AlwaysOn, GreedyPolicy, IndexPolicy, OptimalPolicy,
    Policy, RoundRobinPolicy, SimOptions, SimResult, UniformPolicy,
};

/// Relative agreement demanded between closed forms and simulation.
pub const CLOSED_FORM_TOL: f64 = 0.01;

/// Settings shared by every sweep point.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub out_dir: PathBuf,
    /// Where joint solutions are cached by config hash; `None` disables caching.
    pub cache_dir: Option<PathBuf>,
    pub rvia: RviaOptions,
    pub index: IndexOptions,
}

impl RunContext {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunContext {
            out_dir: out_dir.into(),
            cache_dir: None,
            rvia: RviaOptions::default(),
            index: IndexOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PolicyOutcome {
    pub policy: PolicyKind,
    /// `None` when the policy could not run at this point.
    pub result: Option<SimResult>,
    /// Percent gap to the lower bound, NaN when unavailable.
    pub delta: f64,
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub label: String,
    /// Value of the swept parameter.
    pub value: f64,
    pub k: usize,
    pub lower_bound: f64,
    pub outcomes: Vec<PolicyOutcome>,
    pub runtime: Duration,
}

impl SweepPoint {
    pub fn outcome(&self, p: PolicyKind) -> Option<&PolicyOutcome> {
        self.outcomes.iter().find(|o| o.policy == p)
    }

    pub fn avg_cost(&self, p: PolicyKind) -> Option<f64> {
        self.outcome(p)?.result.as_ref().map(|r| r.avg_cost)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub points: Vec<SweepPoint>,
    pub files: Vec<PathBuf>,
    pub checks: Vec<Check>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Error carrying the failed check names, for the exit code.
    pub fn consistency(&self) -> Result<()> {
        let failed: Vec<&str> = self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(Error::Consistency(failed.join(", ")))
        }
    }
}

/// Solve the joint MDP, reusing a cached dump when one matches the config hash.
pub fn solve_optimal(cluster: &Cluster, ctx: &RunContext) -> Result<SolvedMdp> {
    let hash = config_hash(cluster.config());
    let path = ctx.cache_dir.as_ref().map(|d| d.join(format!("{}.gnbsolve", hash_hex(&hash))));
    if let Some(p) = &path {
        if p.exists() {
            if let Ok(s) = SolvedMdp::load(p, cluster, &hash) {
                return Ok(s);
            }
        }
    }
    let solved = rvia_solve_with(cluster, &ctx.rvia)?;
    if let Some(p) = &path {
        std::fs::create_dir_all(p.parent().expect("file in a directory"))?;
        solved.dump(p, &hash)?;
    }
    Ok(solved)
}

fn make_policy(
    kind: PolicyKind,
    cluster: &Cluster,
    tables: Option<&[IndexTable]>,
    ctx: &RunContext,
) -> Result<Box<dyn Policy>> {
    let (m, k) = (cluster.m(), cluster.k());
    Ok(match kind {
        PolicyKind::Optimal => Box::new(OptimalPolicy::new(solve_optimal(cluster, ctx)?)),
        PolicyKind::Index => {
            let t = match tables {
                Some(t) => t.to_vec(),
                None => build_cluster_tables(cluster, &ctx.index)?,
            };
            Box::new(IndexPolicy::new(t, k))
        }
        PolicyKind::Greedy => Box::new(GreedyPolicy::new(cluster)),
        PolicyKind::Uniform => Box::new(UniformPolicy::new(m, k)),
        PolicyKind::RoundRobin => Box::new(RoundRobinPolicy::new(m, k)),
        PolicyKind::AlwaysOn => Box::new(AlwaysOn::new(m)),
        PolicyKind::AlwaysOff => {
            if k < m {
                return Err(Error::Unsupported(format!("always-off needs K = M (K = {k}, M = {m})")));
            }
            Box::new(AlwaysOff::new(m))
        }
    })
}

/// Simulate `policies` on shared arrival streams and compare against the lower bound.
///
/// A policy that cannot be built (solver over budget, always-off with `K < M`) gets an
/// empty outcome with a note instead of failing the point.
pub fn evaluate_point(
    label: &str,
    value: f64,
    cluster: &Cluster,
    policies: &[PolicyKind],
    tables: Option<&[IndexTable]>,
    segments: u64,
    seed: u64,
    ctx: &RunContext,
) -> Result<SweepPoint> {
    let start = Instant::now();
    let bound = lower_bound(cluster)?.value;
    let mut built: Vec<(PolicyKind, Box<dyn Policy>)> = Vec::new();
    let mut notes: Vec<(PolicyKind, String)> = Vec::new();
    for &p in policies {
        match make_policy(p, cluster, tables, ctx) {
            Ok(b) => built.push((p, b)),
            Err(e @ (Error::Capacity { .. } | Error::Unsupported(_))) => notes.push((p, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    let mut refs: Vec<&mut dyn Policy> = built.iter_mut().map(|(_, b)| b.as_mut() as &mut dyn Policy).collect();
    let results = if refs.is_empty() {
        Vec::new()
    } else {
        run_lockstep(cluster, &mut refs, &SimOptions::new(segments, seed), |_, _| {})?.results
    };
    let mut outcomes = Vec::with_capacity(policies.len());
    for &p in policies {
        if let Some(i) = built.iter().position(|(q, _)| *q == p) {
            let r = results[i].clone();
            outcomes.push(PolicyOutcome {
                policy: p,
                delta: delta_metric(r.avg_cost, bound)?,
                result: Some(r),
                note: None,
            });
        } else {
            let note = notes.iter().find(|(q, _)| *q == p).map(|(_, n)| n.clone());
            outcomes.push(PolicyOutcome {
                policy: p,
                result: None,
                delta: f64::NAN,
                note,
            });
        }
    }
    Ok(SweepPoint {
        label: label.to_string(),
        value,
        k: cluster.k(),
        lower_bound: bound,
        outcomes,
        runtime: start.elapsed(),
    })
}

fn column_name(p: PolicyKind) -> String {
    format!("delta_{}", p.name().replace('-', ""))
}

fn lower_bound_check(points: &[SweepPoint]) -> Check {
    let mut worst = f64::INFINITY;
    let mut detail = String::from("all policies at or above the bound");
    for pt in points {
        for o in &pt.outcomes {
            if let Some(r) = &o.result {
                let slack = r.avg_cost + r.ci_halfwidth - pt.lower_bound;
                let tol = 1e-9 * pt.lower_bound.abs();
                if slack + tol < worst {
                    worst = slack + tol;
                    if slack + tol < 0.0 {
                        detail = format!("{} at {} is {:.6} below the bound", o.policy.name(), pt.label, -slack);
                    }
                }
            }
        }
    }
    Check {
        name: "lower-bound".into(),
        passed: worst >= 0.0,
        detail,
    }
}

/// Main table: one row per point, one gap column per policy. Detail table: long format.
fn write_sweep_csvs(dir: &Path, stem: &str, key: &str, points: &[SweepPoint], policies: &[PolicyKind]) -> Result<Vec<PathBuf>> {
    let main = dir.join(format!("{stem}.csv"));
    let mut header = vec![key.to_string()];
    header.extend(policies.iter().map(|&p| column_name(p)));
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|pt| {
            let mut r = vec![pt.label.clone()];
            r.extend(policies.iter().map(|&p| fmt_num(pt.outcome(p).map_or(f64::NAN, |o| o.delta))));
            r
        })
        .collect();
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv_atomic(&main, &h, &rows)?;

    let detail = dir.join(format!("{stem}_detail.csv"));
    let mut rows = Vec::new();
    for pt in points {
        for o in &pt.outcomes {
            let (avg, ci, segs) = match &o.result {
                Some(r) => (r.avg_cost, r.ci_halfwidth, r.segments.to_string()),
                None => (f64::NAN, f64::NAN, "NA".into()),
            };
            rows.push(vec![
                pt.label.clone(),
                pt.k.to_string(),
                o.policy.name().to_string(),
                fmt_num(avg),
                fmt_num(ci),
                fmt_num(pt.lower_bound),
                fmt_num(o.delta),
                segs,
            ]);
        }
    }
    write_csv_atomic(
        &detail,
        &[key, "K", "policy", "avg_cost", "ci_halfwidth", "lower_bound", "delta", "segments"],
        &rows,
    )?;
    Ok(vec![main, detail])
}

/// Cluster config with every cell switched to a standard arrival set.
fn with_arrival_set(base: &ClusterConfig, set: usize, n_th_auto: bool) -> Result<ClusterConfig> {
    let mut c = base.clone();
    let mix = ArrivalMixture::table_set(set)?;
    for cell in &mut c.cells {
        cell.arrivals = mix.clone();
    }
    if n_th_auto {
        c.n_th = crate::arrivals::default_n_th_cluster(&c.cells, c.segment_duration)?;
    }
    c.validate()?;
    Ok(c)
}

fn with_p_switch(base: &ClusterConfig, p_switch: f64) -> Result<ClusterConfig> {
    let mut c = base.clone();
    c.power.p_switch = p_switch;
    c.validate()?;
    Ok(c)
}

pub fn run_experiment(cfg: &LoadedConfig, ctx: &RunContext) -> Result<ExperimentReport> {
    std::fs::create_dir_all(&ctx.out_dir)?;
    let spec = &cfg.experiment;
    match spec.kind {
        ExperimentKind::KSweep => k_sweep(cfg, ctx),
        ExperimentKind::ArrivalSets => {
            let variants = spec
                .arrival_sets
                .iter()
                .map(|&s| Ok((s.to_string(), s as f64, with_arrival_set(&cfg.cluster, s, cfg.n_th_auto)?)))
                .collect::<Result<Vec<_>>>()?;
            variant_sweep(cfg, ctx, "arrival_sets", "set", variants)
        }
        ExperimentKind::SwitchSweep => {
            let variants = spec
                .p_switch_values
                .iter()
                .map(|&p| Ok((format!("{p}"), p, with_p_switch(&cfg.cluster, p)?)))
                .collect::<Result<Vec<_>>>()?;
            variant_sweep(cfg, ctx, "switch_sweep", "p_switch", variants)
        }
        ExperimentKind::Composition => composition(cfg, ctx),
        ExperimentKind::GreedyTrace => greedy_trace(cfg, ctx),
        ExperimentKind::BaselineCompare => baseline_compare(cfg, ctx),
    }
}

fn k_sweep(cfg: &LoadedConfig, ctx: &RunContext) -> Result<ExperimentReport> {
    let spec = &cfg.experiment;
    let base = Cluster::new(cfg.cluster.clone())?;
    // index tables do not depend on K
    let tables = if spec.policies.contains(&PolicyKind::Index) {
        Some(build_cluster_tables(&base, &ctx.index)?)
    } else {
        None
    };
    let points = spec
        .k_values
        .par_iter()
        .map(|&k| {
            let c = base.with_k(k)?;
            evaluate_point(&k.to_string(), k as f64, &c, &spec.policies, tables.as_deref(), spec.segments, spec.seed, ctx)
        })
        .collect::<Result<Vec<_>>>()?;
    let files = write_sweep_csvs(&ctx.out_dir, "k_sweep", "K", &points, &spec.policies)?;
    let checks = vec![lower_bound_check(&points)];
    Ok(ExperimentReport {
        kind: spec.kind,
        points,
        files,
        checks,
    })
}

fn variant_sweep(
    cfg: &LoadedConfig,
    ctx: &RunContext,
    stem: &str,
    key: &str,
    variants: Vec<(String, f64, ClusterConfig)>,
) -> Result<ExperimentReport> {
    let spec = &cfg.experiment;
    let points = variants
        .into_par_iter()
        .map(|(label, value, c)| {
            let cl = Cluster::new(c)?;
            evaluate_point(&label, value, &cl, &spec.policies, None, spec.segments, spec.seed, ctx)
        })
        .collect::<Result<Vec<_>>>()?;
    let files = write_sweep_csvs(&ctx.out_dir, stem, key, &points, &spec.policies)?;
    let checks = vec![lower_bound_check(&points)];
    Ok(ExperimentReport {
        kind: spec.kind,
        points,
        files,
        checks,
    })
}

fn composition(cfg: &LoadedConfig, ctx: &RunContext) -> Result<ExperimentReport> {
    let spec = &cfg.experiment;
    let cl = Cluster::new(cfg.cluster.clone())?;
    let pt = evaluate_point(
        &cl.k().to_string(),
        cl.k() as f64,
        &cl,
        &spec.policies,
        None,
        spec.segments,
        spec.seed,
        ctx,
    )?;
    let rows: Vec<Vec<String>> = pt
        .outcomes
        .iter()
        .map(|o| {
            let c = o.result.as_ref().map(|r| r.composition);
            let part = |f: fn(&crate::cost::PowerBreakdown) -> f64| fmt_num(c.as_ref().map_or(f64::NAN, f));
            vec![
                o.policy.name().to_string(),
                part(|b| b.static_w),
                part(|b| b.dynamic_w),
                part(|b| b.switch_w),
                part(|b| b.extra_w),
            ]
        })
        .collect();
    let path = ctx.out_dir.join("composition.csv");
    write_csv_atomic(&path, &["policy", "static_W", "dynamic_W", "switch_W", "extra_W"], &rows)?;
    let checks = vec![lower_bound_check(std::slice::from_ref(&pt))];
    Ok(ExperimentReport {
        kind: spec.kind,
        points: vec![pt],
        files: vec![path],
        checks,
    })
}

fn greedy_trace(cfg: &LoadedConfig, ctx: &RunContext) -> Result<ExperimentReport> {
    let spec = &cfg.experiment;
    let cl = Cluster::new(cfg.cluster.clone())?;
    let c = cl.config();
    let th: Vec<GreedyThresholds> = c
        .cells
        .iter()
        .map(|cell| greedy_thresholds(cell, &c.power, c.segment_duration))
        .collect::<Result<_>>()?;
    let start = Instant::now();
    let mut rows = Vec::with_capacity(spec.segments as usize * cl.m());
    let mut violations = 0u64;
    let check_rule = cl.k() == cl.m();
    let mut policy = GreedyPolicy::new(&cl);
    let opts = SimOptions::new(spec.segments, spec.seed);
    let result = run_policy_observed(&cl, &mut policy, &opts, |rec| {
        if check_rule && dual_threshold_action(rec.state, &th) != *rec.action {
            violations += 1;
        }
        for (i, s) in rec.state.iter().enumerate() {
            rows.push(vec![
                rec.t.to_string(),
                i.to_string(),
                s.residual_users.to_string(),
                if rec.action.is_on(i) { "1" } else { "0" }.to_string(),
                fmt_num(th[i].gamma_l),
                fmt_num(th[i].gamma_u),
            ]);
        }
    })?;
    let path = ctx.out_dir.join("greedy_trace.csv");
    write_csv_atomic(&path, &["t", "cell", "residual_users", "action", "gamma_l", "gamma_u"], &rows)?;
    let bound = lower_bound(&cl)?.value;
    let pt = SweepPoint {
        label: cl.k().to_string(),
        value: cl.k() as f64,
        k: cl.k(),
        lower_bound: bound,
        outcomes: vec![PolicyOutcome {
            policy: PolicyKind::Greedy,
            delta: delta_metric(result.avg_cost, bound)?,
            result: Some(result),
            note: None,
        }],
        runtime: start.elapsed(),
    };
    let mut checks = vec![lower_bound_check(std::slice::from_ref(&pt))];
    if check_rule {
        checks.push(Check {
            name: "dual-threshold".into(),
            passed: violations == 0,
            detail: format!("{violations} segments differ from the threshold rule"),
        });
    }
    Ok(ExperimentReport {
        kind: spec.kind,
        points: vec![pt],
        files: vec![path],
        checks,
    })
}

fn baseline_compare(cfg: &LoadedConfig, ctx: &RunContext) -> Result<ExperimentReport> {
    let spec = &cfg.experiment;
    let base = Cluster::new(cfg.cluster.clone())?;
    let costs = base.anticipated_costs();
    let m = base.m();
    let pols = [PolicyKind::Uniform, PolicyKind::RoundRobin];
    let points = spec
        .k_values
        .par_iter()
        .map(|&k| {
            let c = base.with_k(k)?;
            evaluate_point(&k.to_string(), k as f64, &c, &pols, None, spec.segments, spec.seed, ctx)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    for pt in &points {
        let k = pt.k;
        let closed = [uniform_longrun_cost(m, k, &costs), round_robin_longrun_cost(m, k, &costs)];
        let mut row = vec![k.to_string()];
        for (p, cf) in pols.iter().zip(closed) {
            let r = pt.outcome(*p).and_then(|o| o.result.as_ref()).expect("baselines always run");
            let rel = (r.avg_cost - cf).abs() / cf;
            if rel > worst {
                worst = rel;
                worst_at = format!("{} at K = {k}", p.name());
            }
            row.extend([
                fmt_num(cf),
                fmt_num(r.avg_cost),
                fmt_num(r.ci_halfwidth),
                ((r.avg_cost - cf).abs() <= r.ci_halfwidth).to_string(),
            ]);
        }
        match baseline_difference(m, k, &costs) {
            Ok(d) => row.extend([fmt_num(d.diff), d.uniform_strictly_better.to_string()]),
            Err(_) => row.extend(["NA".to_string(), "NA".to_string()]),
        }
        rows.push(row);
    }
    let path = ctx.out_dir.join("baseline_compare.csv");
    write_csv_atomic(
        &path,
        &[
            "K",
            "uniform_closed",
            "uniform_sim",
            "uniform_ci",
            "uniform_covered",
            "roundrobin_closed",
            "roundrobin_sim",
            "roundrobin_ci",
            "roundrobin_covered",
            "diff_closed",
            "uniform_strictly_better",
        ],
        &rows,
    )?;
    let checks = vec![
        lower_bound_check(&points),
        Check {
            name: "closed-form".into(),
            passed: worst <= CLOSED_FORM_TOL,
            detail: format!("largest relative error {:.4}% ({worst_at})", worst * 100.0),
        },
    ];
    Ok(ExperimentReport {
        kind: spec.kind,
        points,
        files: vec![path],
        checks,
    })
}
