//! Index policy.
//!
//! A single cell is solved in isolation with an extra cost `eps` charged for
//! every OFF segment. Its optimal policy is dual-threshold with thresholds
//! that shrink as `eps` grows. The index of a state is the `eps` at which the
//! cell is indifferent between ON and OFF there, found by a safeguarded
//! descent on the squared threshold error. The cluster policy switches off
//! the cells with the largest non-negative indexes.

use std::path::Path;

use crate::arrivals::{residual_pmf, ResidualPmf};
use crate::cluster::Cluster;
use crate::cost::CellCostModel;
use crate::error::{Error, Result};
use crate::model::{ActionVector, CellParams, CellState, CostFunction, PowerParams};

/// One cell with its residual distribution and tabulated costs.
#[derive(Debug, Clone)]
pub struct DecoupledModel {
    cost: CellCostModel,
    pmf: ResidualPmf,
}

impl DecoupledModel {
    pub fn new(cell: &CellParams, power: &PowerParams, f: &CostFunction, seg: f64, n_th: usize) -> Result<Self> {
        Ok(DecoupledModel {
            cost: CellCostModel::new(cell, power, f, seg, n_th),
            pmf: residual_pmf(cell, seg, n_th)?,
        })
    }

    pub fn from_cluster(cluster: &Cluster, cell: usize) -> Self {
        DecoupledModel {
            cost: cluster.model(cell).clone(),
            pmf: cluster.pmf(cell).clone(),
        }
    }

    pub fn cost_model(&self) -> &CellCostModel {
        &self.cost
    }

    pub fn pmf(&self) -> &ResidualPmf {
        &self.pmf
    }

    pub fn n_th(&self) -> usize {
        self.pmf.n_th()
    }

    /// `E = sum_n P(n) * delta1(n)`, the lower bound on `Sigma1 - Sigma0`.
    pub fn h_gap_floor(&self) -> f64 {
        self.pmf.expect(|n| self.cost.delta1(n as f64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoupledOptions {
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for DecoupledOptions {
    fn default() -> Self {
        DecoupledOptions {
            tolerance: 1e-8,
            max_sweeps: 100_000,
        }
    }
}

/// Converged single-cell solution at a fixed OFF cost.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoupledSolution {
    pub eps: f64,
    pub gain: f64,
    /// Relative values, OFF rows first: `h[prev_on as usize * (n_th + 1) + n]`.
    pub h: Vec<f64>,
    pub sigma1: f64,
    pub sigma0: f64,
    pub gamma_l: f64,
    pub gamma_u: f64,
    /// `Q(ON) - Q(OFF)` per state, same layout as `h`; OFF is optimal where this is `>= 0`.
    pub q_gap: Vec<f64>,
    pub sweeps: usize,
}

impl DecoupledSolution {
    pub fn n_th(&self) -> usize {
        self.h.len() / 2 - 1
    }

    pub fn value(&self, prev_on: bool, n: usize) -> f64 {
        self.h[prev_on as usize * (self.n_th() + 1) + n]
    }

    /// Whether OFF is optimal in this state (ties count as OFF).
    pub fn passive(&self, prev_on: bool, n: usize) -> bool {
        self.q_gap[prev_on as usize * (self.n_th() + 1) + n] >= 0.0
    }

    /// `Sigma1 - Sigma0`.
    pub fn h_gap(&self) -> f64 {
        self.sigma1 - self.sigma0
    }

    pub fn gamma(&self, prev_on: bool) -> f64 {
        if prev_on {
            self.gamma_l
        } else {
            self.gamma_u
        }
    }

    /// States whose optimal action disagrees with the threshold rule, skipping
    /// states within `margin` of a threshold.
    pub fn threshold_mismatches(&self, margin: f64) -> Vec<CellState> {
        let mut out = Vec::new();
        for prev in [false, true] {
            let g = self.gamma(prev);
            for n in 0..=self.n_th() {
                if (n as f64 - g).abs() < margin {
                    continue;
                }
                if self.passive(prev, n) != (n as f64 <= g) {
                    out.push(CellState::new(prev, n as u32));
                }
            }
        }
        out
    }
}

/// RVIA for the single-cell problem with OFF cost `eps`, optionally warm-started from `h`.
pub fn decoupled_rvia(
    model: &DecoupledModel,
    eps: f64,
    warm: Option<&[f64]>,
    opts: &DecoupledOptions,
) -> Result<DecoupledSolution> {
    if !eps.is_finite() {
        return Err(Error::Domain(format!("OFF cost must be finite, got {eps}")));
    }
    let n1 = model.n_th() + 1;
    let pmf = model.pmf.probs();
    let on_from = [model.cost.cost_row(false, true), model.cost.cost_row(true, true)];
    let off = model.cost.cost_row(true, false);
    let reference = n1;
    let mut h = match warm {
        Some(w) if w.len() == 2 * n1 => w.to_vec(),
        _ => vec![0.0; 2 * n1],
    };
    let mut next = vec![0.0; 2 * n1];
    let sigmas = |h: &[f64]| -> (f64, f64) {
        let s0: f64 = pmf.iter().zip(&h[..n1]).map(|(p, v)| p * v).sum();
        let s1: f64 = pmf.iter().zip(&h[n1..]).map(|(p, v)| p * v).sum();
        (s1, s0)
    };
    let mut residual = f64::INFINITY;
    for sweep in 1..=opts.max_sweeps {
        let (s1, s0) = sigmas(&h);
        for prev in 0..2 {
            for n in 0..n1 {
                let q_on = on_from[prev][n] + s1;
                let q_off = off[n] + eps + s0;
                next[prev * n1 + n] = q_on.min(q_off);
            }
        }
        let g = next[reference];
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (v, old) in next.iter_mut().zip(h.iter()) {
            *v -= g;
            let d = *v - old;
            lo = lo.min(d);
            hi = hi.max(d);
        }
        std::mem::swap(&mut h, &mut next);
        residual = hi - lo;
        if !residual.is_finite() {
            break;
        }
        if residual < opts.tolerance {
            let (sigma1, sigma0) = sigmas(&h);
            let mut q_gap = vec![0.0; 2 * n1];
            for prev in 0..2 {
                for n in 0..n1 {
                    q_gap[prev * n1 + n] = (on_from[prev][n] + sigma1) - (off[n] + eps + sigma0);
                }
            }
            let target = -eps + sigma1 - sigma0;
            return Ok(DecoupledSolution {
                eps,
                gain: g,
                h,
                sigma1,
                sigma0,
                gamma_l: model.cost.threshold_lower(target),
                gamma_u: model.cost.threshold_upper(target),
                q_gap,
                sweeps: sweep,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_sweeps,
        residual,
    })
}

/// `h(1, n) - h(0, n)` for every `n`.
pub fn h_difference_profile(sol: &DecoupledSolution) -> Vec<f64> {
    (0..=sol.n_th())
        .map(|n| sol.value(true, n) - sol.value(false, n))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexOptions {
    pub eps0: f64,
    /// Initial step size; `None` picks the inverse slope of the threshold map.
    pub beta: Option<f64>,
    /// Stop once `0.5 * (gamma - n)^2 <= xi`.
    pub xi: f64,
    pub max_iter: usize,
    pub rvia: DecoupledOptions,
}

impl Default for IndexOptions {
    fn default() -> Self {
        IndexOptions {
            eps0: 0.0,
            beta: None,
            xi: 1e-4,
            max_iter: 500,
            rvia: DecoupledOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexResult {
    pub eps: f64,
    /// Threshold at `eps` for the state's previous action.
    pub gamma: f64,
    pub iterations: usize,
}

/// `d eps / d gamma` is roughly the slope of `g^L` or `g^U` at `n`.
fn default_step(model: &DecoupledModel, prev_on: bool, n: f64) -> f64 {
    let g = |x: f64| {
        if prev_on {
            model.cost.g_lower(x)
        } else {
            model.cost.g_upper(x)
        }
    };
    let lo = (n - 0.5).max(0.0);
    let slope = (g(lo + 1.0) - g(lo)) / 1.0;
    if slope.is_finite() && slope > 1e-12 {
        slope
    } else {
        1.0
    }
}

/// Index of one state: the OFF cost at which the state's threshold equals its count.
///
/// Steps follow `eps <- eps - beta * (n - gamma(eps))`. The step size is
/// refreshed by a secant estimate, and once the root is bracketed any step
/// that leaves the bracket is replaced by its midpoint with `beta` halved.
/// Exact indifference at the state also ends the search.
pub fn compute_index(model: &DecoupledModel, state: CellState, opts: &IndexOptions) -> Result<IndexResult> {
    let n = state.residual_users as usize;
    if n > model.n_th() {
        return Err(Error::Domain(format!("residual count {n} exceeds n_th = {}", model.n_th())));
    }
    let prev = state.prev_on;
    let target = n as f64;
    let mut eps = opts.eps0;
    let mut sol = decoupled_rvia(model, eps, None, &opts.rvia)?;
    let mut beta = opts.beta.unwrap_or_else(|| default_step(model, prev, target));
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for it in 0..=opts.max_iter {
        let gamma = sol.gamma(prev);
        let r = gamma - target;
        let indifferent = {
            let gap = sol.q_gap[prev as usize * (model.n_th() + 1) + n];
            gap.abs() <= 1e-9 * (1.0 + sol.value(prev, n).abs() + eps.abs())
        };
        if 0.5 * r * r <= opts.xi || indifferent {
            return Ok(IndexResult {
                eps,
                gamma,
                iterations: it,
            });
        }
        if it == opts.max_iter {
            return Err(Error::NonConvergence {
                iterations: it,
                residual: r.abs(),
            });
        }
        // thresholds fall as eps rises
        if r > 0.0 {
            lo = lo.max(eps);
        } else {
            hi = hi.min(eps);
        }
        let mut next = eps + beta * r;
        if lo.is_finite() && hi.is_finite() && !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
            beta *= 0.5;
        }
        let new_sol = decoupled_rvia(model, next, Some(&sol.h), &opts.rvia)?;
        let new_gamma = new_sol.gamma(prev);
        if new_gamma != gamma {
            let secant = -(next - eps) / (new_gamma - gamma);
            if secant.is_finite() && secant > 0.0 {
                beta = secant;
            }
        } else if !(lo.is_finite() && hi.is_finite()) {
            beta *= 2.0;
        }
        eps = next;
        sol = new_sol;
    }
    unreachable!("loop returns by its last iteration")
}

/// Index for every `(prev_on, n)` state of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexTable {
    n_th: usize,
    /// OFF rows first: `eps[prev_on as usize * (n_th + 1) + n]`.
    eps: Vec<f64>,
}

impl IndexTable {
    pub fn from_values(n_th: usize, eps: Vec<f64>) -> Result<Self> {
        if eps.len() != 2 * (n_th + 1) {
            return Err(Error::param("eps", format!("expected {} values", 2 * (n_th + 1))));
        }
        Ok(IndexTable { n_th, eps })
    }

    pub fn n_th(&self) -> usize {
        self.n_th
    }

    pub fn get(&self, prev_on: bool, n: usize) -> f64 {
        self.eps[prev_on as usize * (self.n_th + 1) + n.min(self.n_th)]
    }

    pub fn values(&self) -> &[f64] {
        &self.eps
    }

    /// CSV with columns `prev_on,n,eps_star`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut rows = Vec::with_capacity(self.eps.len());
        for prev in [false, true] {
            for n in 0..=self.n_th {
                rows.push(vec![
                    (prev as u8).to_string(),
                    n.to_string(),
                    crate::report::fmt_num(self.get(prev, n)),
                ]);
            }
        }
        crate::report::write_csv_atomic(path, &["prev_on", "n", "eps_star"], &rows)
    }
}

pub fn build_index_table(model: &DecoupledModel, opts: &IndexOptions) -> Result<IndexTable> {
    let n1 = model.n_th() + 1;
    let mut eps = vec![0.0; 2 * n1];
    for prev in [false, true] {
        for n in 0..n1 {
            eps[prev as usize * n1 + n] = compute_index(model, CellState::new(prev, n as u32), opts)?.eps;
        }
    }
    IndexTable::from_values(model.n_th(), eps)
}

/// One table per cell; identical cells share the computation.
pub fn build_cluster_tables(cluster: &Cluster, opts: &IndexOptions) -> Result<Vec<IndexTable>> {
    let cfg = cluster.config();
    let mut out: Vec<IndexTable> = Vec::with_capacity(cluster.m());
    for i in 0..cluster.m() {
        if let Some(j) = (0..i).find(|&j| cfg.cells[j] == cfg.cells[i]) {
            let t = out[j].clone();
            out.push(t);
        } else {
            out.push(build_index_table(&DecoupledModel::from_cluster(cluster, i), opts)?);
        }
    }
    Ok(out)
}

/// Switch off the cells with the `k` largest indexes, counting only non-negative ones.
/// Ties go to the lower cell index.
pub fn index_action(state: &[CellState], tables: &[IndexTable], k: usize) -> ActionVector {
    let idx: Vec<f64> = state
        .iter()
        .zip(tables)
        .map(|(s, t)| t.get(s.prev_on, s.residual_users as usize))
        .collect();
    crate::greedy::select_off_cells(&idx, k)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub eps: f64,
    pub gamma_l: f64,
    pub gamma_u: f64,
    /// `Sigma1 - Sigma0`.
    pub h_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexabilityReport {
    pub points: Vec<ScanPoint>,
    /// Lower bound `E` on every `h_gap`.
    pub h_gap_floor: f64,
    pub violations: Vec<String>,
}

impl IndexabilityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Tolerance for threshold monotonicity in the scan.
pub const SCAN_TOL: f64 = 1e-6;

/// Solve the single-cell problem along a sorted grid of OFF costs and check that
/// both thresholds are non-increasing, that `gamma_l < gamma_u` when switching
/// costs power, and that `E <= Sigma1 - Sigma0 <= 0`.
///
/// When both thresholds sit at the same clamp value the strict ordering is
/// not checked, since neither threshold then has an interior root.
pub fn indexability_scan(model: &DecoupledModel, grid: &[f64], opts: &DecoupledOptions) -> Result<IndexabilityReport> {
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Domain("scan grid must be strictly increasing".into()));
    }
    let floor = model.h_gap_floor();
    let switch = model.cost.power().p_switch;
    let n_max = model.n_th() as f64;
    let mut points = Vec::with_capacity(grid.len());
    let mut violations = Vec::new();
    let mut warm: Option<Vec<f64>> = None;
    for &eps in grid {
        let sol = decoupled_rvia(model, eps, warm.as_deref(), opts)?;
        let p = ScanPoint {
            eps,
            gamma_l: sol.gamma_l,
            gamma_u: sol.gamma_u,
            h_gap: sol.h_gap(),
        };
        if let Some(prev) = points.last() {
            let prev: &ScanPoint = prev;
            if p.gamma_l > prev.gamma_l + SCAN_TOL {
                violations.push(format!("gamma_l rises from {} to {} at eps = {eps}", prev.gamma_l, p.gamma_l));
            }
            if p.gamma_u > prev.gamma_u + SCAN_TOL {
                violations.push(format!("gamma_u rises from {} to {} at eps = {eps}", prev.gamma_u, p.gamma_u));
            }
        }
        let both_clamped = p.gamma_l == p.gamma_u && (p.gamma_l == -1.0 || p.gamma_l == n_max);
        if switch > 0.0 && !(p.gamma_l < p.gamma_u) && !both_clamped {
            violations.push(format!("gamma_l = {} is not below gamma_u = {} at eps = {eps}", p.gamma_l, p.gamma_u));
        }
        let tol = 1e-6 * (1.0 + floor.abs());
        if p.h_gap > tol || p.h_gap < floor - tol {
            violations.push(format!("h_gap = {} outside [{floor}, 0] at eps = {eps}", p.h_gap));
        }
        warm = Some(sol.h);
        points.push(p);
    }
    Ok(IndexabilityReport {
        points,
        h_gap_floor: floor,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PiecewiseLinear;
    use proptest::prelude::*;

    fn model(f: CostFunction) -> DecoupledModel {
        DecoupledModel::new(&CellParams::standard(3).unwrap(), &PowerParams::standard(), &f, 1800.0, 68).unwrap()
    }

    /// Cheaper switching so the thresholds are interior at zero OFF cost.
    fn model_cheap_switch(f: CostFunction) -> DecoupledModel {
        let p = PowerParams::new(85.0, 10.0, 1.0, 5.0).unwrap();
        DecoupledModel::new(&CellParams::standard(3).unwrap(), &p, &f, 1800.0, 68).unwrap()
    }

    fn fns() -> Vec<CostFunction> {
        vec![
            CostFunction::Linear,
            CostFunction::Quadratic,
            CostFunction::PiecewiseLinear(PiecewiseLinear::standard()),
        ]
    }

    #[test]
    fn symmetric_model_is_indifferent() {
        let p = PowerParams::new(0.0, 0.0, 2.0, 2.0).unwrap();
        let m = DecoupledModel::new(&CellParams::standard(3).unwrap(), &p, &CostFunction::Linear, 1800.0, 30).unwrap();
        let sol = decoupled_rvia(&m, 0.0, None, &Default::default()).unwrap();
        assert!((sol.sigma1 - sol.sigma0).abs() < 1e-9);
        for n in 0..=30 {
            assert!((sol.value(true, n) - sol.value(false, n)).abs() < 1e-9);
        }
        // g is identically zero, so every count sits at the indifference boundary
        assert_eq!(sol.gamma_l, 30.0);
        assert_eq!(sol.gamma_u, 30.0);
        for prev in [false, true] {
            for n in [0u32, 7, 30] {
                let r = compute_index(&m, CellState::new(prev, n), &Default::default()).unwrap();
                assert_eq!(r.eps, 0.0);
            }
        }
    }

    #[test]
    fn huge_off_cost_keeps_cell_on() {
        for f in fns() {
            let m = model(f);
            let sol = decoupled_rvia(&m, 1e9, None, &Default::default()).unwrap();
            assert_eq!(sol.gamma_l, -1.0);
            assert_eq!(sol.gamma_u, -1.0);
            assert!((0..=68).all(|n| !sol.passive(true, n) && !sol.passive(false, n)));
        }
    }

    #[test]
    fn zero_cost_thresholds_ordered() {
        let m = model(CostFunction::Linear);
        let sol = decoupled_rvia(&m, 0.0, None, &Default::default()).unwrap();
        assert!(sol.gamma_l < sol.gamma_u);
        // standard switching power keeps an ON cell on at any count
        assert_eq!(sol.gamma_l, -1.0);
        assert!(sol.gamma_u > 0.0 && sol.gamma_u < 68.0);
        assert!(sol.threshold_mismatches(1e-6).is_empty());

        let m = model_cheap_switch(CostFunction::Linear);
        let sol = decoupled_rvia(&m, 0.0, None, &Default::default()).unwrap();
        assert!(sol.gamma_l > 0.0 && sol.gamma_l < sol.gamma_u);
        assert!(sol.value(true, 0).abs() < 1e-12);
        assert!(sol.threshold_mismatches(1e-6).is_empty());
    }

    /// Average cost of a fixed dual-threshold rule, from its two-state chain.
    fn dual_threshold_cost(m: &DecoupledModel, tl: i64, tu: i64) -> f64 {
        let pmf = m.pmf();
        let c = m.cost_model();
        let p_l: f64 = (0..=m.n_th()).filter(|&n| n as i64 <= tl).map(|n| pmf.prob(n)).sum();
        let p_u: f64 = (0..=m.n_th()).filter(|&n| n as i64 > tu).map(|n| pmf.prob(n)).sum();
        if p_l + p_u == 0.0 {
            return pmf.expect(|n| c.cost(true, n, true));
        }
        let on = p_u / (p_l + p_u);
        let from_on = pmf.expect(|n| if n as i64 > tl { c.cost(true, n, true) } else { c.cost(true, n, false) });
        let from_off = pmf.expect(|n| if n as i64 > tu { c.cost(false, n, true) } else { c.cost(false, n, false) });
        on * from_on + (1.0 - on) * from_off
    }

    #[test]
    fn rvia_gain_matches_best_threshold_pair() {
        let m = model_cheap_switch(CostFunction::Linear);
        let sol = decoupled_rvia(&m, 0.0, None, &Default::default()).unwrap();
        let mut best = f64::INFINITY;
        for tl in -1..=30 {
            for tu in tl..=40 {
                best = best.min(dual_threshold_cost(&m, tl, tu));
            }
        }
        assert!((sol.gain - best).abs() < 1e-7 * best, "{} vs {best}", sol.gain);
    }

    #[test]
    fn h_profile_shape() {
        for f in fns() {
            let m = model(f.clone());
            for eps in [-50.0, 0.0, 25.0] {
                let sol = decoupled_rvia(&m, eps, None, &Default::default()).unwrap();
                let prof = h_difference_profile(&sol);
                let scale = 1e-7 * (1.0 + sol.gain.abs());
                for (n, &v) in prof.iter().enumerate() {
                    assert!(v <= scale, "{f:?} eps {eps} n {n}: {v}");
                    if (n as f64) <= sol.gamma_l {
                        assert!(v.abs() <= scale);
                    }
                    if (n as f64) > sol.gamma_u {
                        assert!((v - m.cost_model().delta1(n as f64)).abs() <= scale);
                    }
                }
                assert!(prof.windows(2).all(|w| w[1] <= w[0] + scale));
            }
        }
    }

    #[test]
    fn index_action_examples() {
        let t = |v: f64| IndexTable::from_values(1, vec![v; 4]).unwrap();
        let tables = vec![t(0.5), t(-0.1), t(0.9)];
        let s = vec![CellState::new(true, 0); 3];
        assert_eq!(index_action(&s, &tables, 2).as_slice(), &[false, true, false]);
        assert_eq!(index_action(&s, &tables, 0), ActionVector::all_on(3));
        let neg = vec![t(-1.0), t(-0.1), t(-3.0)];
        assert_eq!(index_action(&s, &neg, 3), ActionVector::all_on(3));
        let zero = vec![t(0.0), t(0.0)];
        assert_eq!(index_action(&s[..2], &zero, 1).as_slice(), &[false, true]);
    }

    #[test]
    fn index_table_invariants() {
        for f in [CostFunction::Linear, CostFunction::Quadratic] {
            let m = model_cheap_switch(f.clone());
            let table = build_index_table(&m, &Default::default()).unwrap();
            for n in 0..=68 {
                let tol = 1e-6 * (1.0 + table.get(true, n).abs());
                assert!(table.get(false, n) >= table.get(true, n) - tol, "{f:?} n {n}");
                if n > 0 {
                    for prev in [false, true] {
                        let t2 = 1e-6 * (1.0 + table.get(prev, n).abs());
                        assert!(table.get(prev, n) <= table.get(prev, n - 1) + t2, "{f:?} prev {prev} n {n}");
                    }
                }
            }
            assert_eq!(table, build_index_table(&m, &Default::default()).unwrap());
        }
    }

    #[test]
    fn index_changes_sign_at_zero_cost_threshold() {
        let m = model_cheap_switch(CostFunction::Linear);
        let sol = decoupled_rvia(&m, 0.0, None, &Default::default()).unwrap();
        let table = build_index_table(&m, &Default::default()).unwrap();
        for n in 0..=68usize {
            let e = table.get(true, n);
            if (n as f64) < sol.gamma_l - 0.5 {
                assert!(e > 0.0, "n {n}: {e}");
            } else if (n as f64) > sol.gamma_l + 0.5 {
                assert!(e < 0.0, "n {n}: {e}");
            }
        }
    }

    #[test]
    fn csv_dump() {
        let m = model(CostFunction::Linear);
        let table = build_index_table(&m, &Default::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        table.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("prev_on,n,eps_star"));
        let rows: Vec<_> = lines.collect();
        assert_eq!(rows.len(), 138);
        let last: Vec<&str> = rows[137].split(',').collect();
        assert_eq!(last[0], "1");
        assert_eq!(last[1], "68");
        assert_eq!(last[2].parse::<f64>().unwrap(), table.get(true, 68));
    }

    #[test]
    fn scan_clamps_above_dominance_bound() {
        let m = model(CostFunction::Linear);
        let r = indexability_scan(&m, &[1e6, 2e6], &Default::default()).unwrap();
        assert!(r.points.iter().all(|p| p.gamma_l == -1.0 && p.gamma_u == -1.0));
        assert!(r.passed());
        assert!(indexability_scan(&m, &[1.0, 0.0], &Default::default()).is_err());
    }

    #[test]
    fn profiles_rise_with_thresholds() {
        // larger OFF cost means lower thresholds and a pointwise lower h-profile
        let m = model(CostFunction::Quadratic);
        let opts = DecoupledOptions::default();
        let mut prev: Option<Vec<f64>> = None;
        for eps in (-3000..=3000).step_by(500) {
            let sol = decoupled_rvia(&m, eps as f64, None, &opts).unwrap();
            let prof = h_difference_profile(&sol);
            if let Some(p) = &prev {
                for (a, b) in prof.iter().zip(p) {
                    assert!(*a <= *b + 1e-6 * (1.0 + b.abs()));
                }
            }
            prev = Some(prof);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn decoupled_policy_is_dual_threshold(eps in -3000.0f64..3000.0, which in 0usize..3) {
            let m = model(fns()[which].clone());
            let sol = decoupled_rvia(&m, eps, None, &Default::default()).unwrap();
            prop_assert!(sol.threshold_mismatches(1e-6).is_empty());
            let prof = h_difference_profile(&sol);
            prop_assert!(prof.iter().all(|&v| v <= 1e-7 * (1.0 + sol.gain.abs())));
        }
    }
}
