//! Segment-level Monte-Carlo evaluation of policies.
//!
//! Each segment draws every cell's residual count from its residual
//! distribution, asks the policy for an action and charges the immediate
//! cost. Arrival draws come from one ChaCha stream per cell, so policies run
//! with the same seed see identical counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::baselines::{round_robin_action, uniform_action};
use crate::cluster::Cluster;
use crate::cost::PowerBreakdown;
use crate::error::{Error, Result};
use crate::greedy::greedy_action;
use crate::index::{index_action, IndexTable};
use crate::joint_mdp::SolvedMdp;
use crate::model::{ActionVector, CellState};

/// Stream offset for policy-internal randomness, far from the per-cell arrival streams.
const POLICY_STREAM: u64 = 1 << 40;

/// Generator for `stream` under a master seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed of replication `rep`, derived from the master seed.
pub fn replication_seed(seed: u64, rep: u64) -> u64 {
    stream_rng(seed, u64::MAX - rep).random()
}

/// A decision rule mapping the cluster state to an action.
pub trait Policy: Send {
    fn name(&self) -> String;
    fn decide(&mut self, t: u64, state: &[CellState]) -> ActionVector;
    /// Called before a run; randomized policies reseed here.
    fn reset(&mut self, _seed: u64) {}
}

pub struct AlwaysOn {
    m: usize,
}

impl AlwaysOn {
    pub fn new(m: usize) -> Self {
        AlwaysOn { m }
    }
}

impl Policy for AlwaysOn {
    fn name(&self) -> String {
        "always-on".into()
    }
    fn decide(&mut self, _t: u64, _state: &[CellState]) -> ActionVector {
        ActionVector::all_on(self.m)
    }
}

/// Every cell off; only feasible when `K = M`.
pub struct AlwaysOff {
    m: usize,
}

impl AlwaysOff {
    pub fn new(m: usize) -> Self {
        AlwaysOff { m }
    }
}

impl Policy for AlwaysOff {
    fn name(&self) -> String {
        "always-off".into()
    }
    fn decide(&mut self, _t: u64, _state: &[CellState]) -> ActionVector {
        ActionVector::from_code(0, self.m)
    }
}

pub struct GreedyPolicy {
    cluster: Cluster,
}

impl GreedyPolicy {
    pub fn new(cluster: &Cluster) -> Self {
        GreedyPolicy {
            cluster: cluster.clone(),
        }
    }
}

impl Policy for GreedyPolicy {
    fn name(&self) -> String {
        "greedy".into()
    }
    fn decide(&mut self, _t: u64, state: &[CellState]) -> ActionVector {
        greedy_action(state, &self.cluster)
    }
}

pub struct IndexPolicy {
    tables: Vec<IndexTable>,
    k: usize,
}

impl IndexPolicy {
    pub fn new(tables: Vec<IndexTable>, k: usize) -> Self {
        IndexPolicy { tables, k }
    }
}

impl Policy for IndexPolicy {
    fn name(&self) -> String {
        "index".into()
    }
    fn decide(&mut self, _t: u64, state: &[CellState]) -> ActionVector {
        index_action(state, &self.tables, self.k)
    }
}

pub struct OptimalPolicy {
    solved: SolvedMdp,
}

impl OptimalPolicy {
    pub fn new(solved: SolvedMdp) -> Self {
        OptimalPolicy { solved }
    }
}

impl Policy for OptimalPolicy {
    fn name(&self) -> String {
        "optimal".into()
    }
    fn decide(&mut self, _t: u64, state: &[CellState]) -> ActionVector {
        self.solved.action(state)
    }
}

pub struct UniformPolicy {
    m: usize,
    k: usize,
    rng: ChaCha8Rng,
}

impl UniformPolicy {
    pub fn new(m: usize, k: usize) -> Self {
        UniformPolicy {
            m,
            k,
            rng: stream_rng(0, POLICY_STREAM),
        }
    }
}

impl Policy for UniformPolicy {
    fn name(&self) -> String {
        "uniform".into()
    }
    fn decide(&mut self, _t: u64, _state: &[CellState]) -> ActionVector {
        uniform_action(self.m, self.k, &mut self.rng)
    }
    fn reset(&mut self, seed: u64) {
        self.rng = stream_rng(seed, POLICY_STREAM);
    }
}

pub struct RoundRobinPolicy {
    m: usize,
    k: usize,
}

impl RoundRobinPolicy {
    pub fn new(m: usize, k: usize) -> Self {
        RoundRobinPolicy { m, k }
    }
}

impl Policy for RoundRobinPolicy {
    fn name(&self) -> String {
        "round-robin".into()
    }
    fn decide(&mut self, t: u64, _state: &[CellState]) -> ActionVector {
        round_robin_action(t, self.m, self.k)
    }
}

/// Wrap a closure as a policy.
pub struct FnPolicy<F> {
    name: String,
    f: F,
}

impl<F: FnMut(u64, &[CellState]) -> ActionVector + Send> FnPolicy<F> {
    pub fn new(name: &str, f: F) -> Self {
        FnPolicy {
            name: name.to_string(),
            f,
        }
    }
}

impl<F: FnMut(u64, &[CellState]) -> ActionVector + Send> Policy for FnPolicy<F> {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn decide(&mut self, t: u64, state: &[CellState]) -> ActionVector {
        (self.f)(t, state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub segments: u64,
    pub seed: u64,
    /// Fraction of leading segments excluded from the statistics.
    pub burn_in_frac: f64,
    pub batches: usize,
}

impl SimOptions {
    pub fn new(segments: u64, seed: u64) -> Self {
        SimOptions {
            segments,
            seed,
            burn_in_frac: 0.01,
            batches: 100,
        }
    }

    fn burn_in(&self) -> u64 {
        (self.segments as f64 * self.burn_in_frac).floor() as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub policy: String,
    pub avg_cost: f64,
    /// 95% half-width from batch means; infinite with fewer than two batches.
    pub ci_halfwidth: f64,
    pub segments: u64,
    /// Segments counted after burn-in.
    pub measured_segments: u64,
    /// Average power per segment, summed over cells.
    pub composition: PowerBreakdown,
    pub on_fraction: Vec<f64>,
}

/// One segment as seen by an observer.
#[derive(Debug, Clone, Copy)]
pub struct SegmentRecord<'a> {
    pub t: u64,
    pub state: &'a [CellState],
    pub action: &'a ActionVector,
    pub cost: f64,
}

/// Per-policy results of a common-random-numbers run.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedRun {
    pub results: Vec<SimResult>,
    /// Post burn-in per-segment costs, one vector per policy.
    pub costs: Vec<Vec<f64>>,
    batches: usize,
}

impl PairedRun {
    /// Mean and 95% half-width of `cost[i] - cost[j]` from batch means.
    pub fn difference(&self, i: usize, j: usize) -> (f64, f64) {
        let d: Vec<f64> = self.costs[i].iter().zip(&self.costs[j]).map(|(a, b)| a - b).collect();
        let mean = d.iter().sum::<f64>() / d.len().max(1) as f64;
        (mean, batch_means_halfwidth(&d, self.batches))
    }
}

/// Two-sided 95% Student-t quantile.
pub fn t_quantile_975(dof: usize) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160, 2.145,
        2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048,
        2.045, 2.042,
    ];
    if dof == 0 {
        return f64::INFINITY;
    }
    if dof <= 30 {
        return TABLE[dof - 1];
    }
    // Cornish-Fisher expansion around the normal quantile
    let z: f64 = 1.959_963_984_540_054;
    let v = dof as f64;
    let z3 = z.powi(3);
    let z5 = z.powi(5);
    let z7 = z.powi(7);
    z + (z3 + z) / (4.0 * v)
        + (5.0 * z5 + 16.0 * z3 + 3.0 * z) / (96.0 * v * v)
        + (3.0 * z7 + 19.0 * z5 + 17.0 * z3 - 15.0 * z) / (384.0 * v * v * v)
}

/// Half-width from `batches` equal batches; leftover values at the end are dropped.
pub fn batch_means_halfwidth(values: &[f64], batches: usize) -> f64 {
    let nb = batches.min(values.len());
    if nb < 2 {
        return f64::INFINITY;
    }
    let size = values.len() / nb;
    let means: Vec<f64> = values
        .chunks_exact(size)
        .take(nb)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let mean = means.iter().sum::<f64>() / nb as f64;
    let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (nb - 1) as f64;
    t_quantile_975(nb - 1) * (var / nb as f64).sqrt()
}

/// Simulate one policy.
pub fn run_policy(cluster: &Cluster, policy: &mut dyn Policy, segments: u64, seed: u64) -> Result<SimResult> {
    let mut policies: [&mut dyn Policy; 1] = [policy];
    let mut run = run_lockstep(cluster, &mut policies, &SimOptions::new(segments, seed), |_, _| {})?;
    Ok(run.results.remove(0))
}

/// Simulate one policy and report every segment to `observer`.
pub fn run_policy_observed(
    cluster: &Cluster,
    policy: &mut dyn Policy,
    opts: &SimOptions,
    mut observer: impl FnMut(&SegmentRecord),
) -> Result<SimResult> {
    let mut policies: [&mut dyn Policy; 1] = [policy];
    let mut run = run_lockstep(cluster, &mut policies, opts, |_, recs| observer(&recs[0]))?;
    Ok(run.results.remove(0))
}

/// Run several policies on the same arrival streams.
pub fn paired_run(cluster: &Cluster, policies: &mut [&mut dyn Policy], segments: u64, seed: u64) -> Result<PairedRun> {
    if policies.len() < 2 {
        return Err(Error::Domain("a paired run needs at least two policies".into()));
    }
    run_lockstep(cluster, policies, &SimOptions::new(segments, seed), |_, _| {})
}

/// Core runner: all policies advance together and the observer sees each segment's records.
pub fn run_lockstep(
    cluster: &Cluster,
    policies: &mut [&mut dyn Policy],
    opts: &SimOptions,
    mut observer: impl FnMut(u64, &[SegmentRecord]),
) -> Result<PairedRun> {
    if opts.segments == 0 {
        return Err(Error::Domain("at least one segment is required".into()));
    }
    if !(0.0..1.0).contains(&opts.burn_in_frac) {
        return Err(Error::param("burn_in_frac", "must lie in [0, 1)"));
    }
    let (m, k) = (cluster.m(), cluster.k());
    let p = policies.len();
    for pol in policies.iter_mut() {
        pol.reset(opts.seed);
    }
    let mut rngs: Vec<ChaCha8Rng> = (0..m as u64).map(|i| stream_rng(opts.seed, i)).collect();
    let mut states = vec![vec![CellState::new(true, 0); m]; p];
    let burn = opts.burn_in();
    let measured = opts.segments - burn;
    let mut costs = vec![Vec::with_capacity(measured as usize); p];
    let mut comp = vec![PowerBreakdown::default(); p];
    let mut on_counts = vec![vec![0u64; m]; p];
    let mut actions = Vec::with_capacity(p);
    let mut seg_costs = vec![0.0; p];

    for t in 0..opts.segments {
        for (i, rng) in rngs.iter_mut().enumerate() {
            let n = cluster.pmf(i).sample(rng);
            for st in states.iter_mut() {
                st[i].residual_users = n;
            }
        }
        actions.clear();
        for (j, pol) in policies.iter_mut().enumerate() {
            let a = pol.decide(t, &states[j]);
            a.check(m, k).map_err(|e| {
                Error::InfeasibleAction(format!("policy {} at segment {t}: {e}", pol.name()))
            })?;
            let mut cost = 0.0;
            for (i, s) in states[j].iter().enumerate() {
                let model = cluster.model(i);
                cost += model.cost_state(*s, a.is_on(i));
                if t >= burn {
                    comp[j].add(&model.breakdown(s.prev_on, s.residual_users as f64, a.is_on(i)));
                    on_counts[j][i] += a.is_on(i) as u64;
                }
            }
            seg_costs[j] = cost;
            if t >= burn {
                costs[j].push(cost);
            }
            actions.push(a);
        }
        let records: Vec<SegmentRecord> = (0..p)
            .map(|j| SegmentRecord {
                t,
                state: &states[j],
                action: &actions[j],
                cost: seg_costs[j],
            })
            .collect();
        observer(t, &records);
        for (st, a) in states.iter_mut().zip(&actions) {
            for (i, s) in st.iter_mut().enumerate() {
                s.prev_on = a.is_on(i);
            }
        }
    }

    let results = policies
        .iter()
        .enumerate()
        .map(|(j, pol)| {
            let c = &costs[j];
            SimResult {
                policy: pol.name(),
                avg_cost: c.iter().sum::<f64>() / measured as f64,
                ci_halfwidth: batch_means_halfwidth(c, opts.batches),
                segments: opts.segments,
                measured_segments: measured,
                composition: comp[j].scaled(1.0 / measured as f64),
                on_fraction: on_counts[j].iter().map(|&n| n as f64 / measured as f64).collect(),
            }
        })
        .collect();
    Ok(PairedRun {
        results,
        costs,
        batches: opts.batches,
    })
}

/// Independent replications in parallel, each seeded by [`replication_seed`].
pub fn run_replications<F>(cluster: &Cluster, make: F, segments: u64, seed: u64, reps: u64) -> Result<Vec<SimResult>>
where
    F: Fn() -> Box<dyn Policy> + Sync,
{
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut pol = make();
            run_policy(cluster, pol.as_mut(), segments, replication_seed(seed, r))
        })
        .collect()
}

/// Gap to the lower bound in percent.
pub fn delta_metric(avg_cost: f64, lower_bound: f64) -> Result<f64> {
    if !(lower_bound > 0.0) || !lower_bound.is_finite() {
        return Err(Error::Domain(format!("lower bound must be positive, got {lower_bound}")));
    }
    Ok((avg_cost - lower_bound) / lower_bound * 100.0)
}
