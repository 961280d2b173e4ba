//! Myopic policy: minimize the immediate cluster cost each segment.
//!
//! Without the off-count limit it reduces to a per-cell dual-threshold rule,
//! which gives a closed-form long-run cost through a two-state ON/OFF chain.

use crate::cluster::Cluster;
use crate::error::{Error, Result};
use crate::joint_mdp::{JointStateIndex, SolvedMdp};
use crate::model::{ActionVector, CellParams, CellState, PowerParams};

/// Residual-count thresholds of the greedy rule for one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreedyThresholds {
    /// Sleep threshold when the cell was on.
    pub gamma_l: f64,
    /// Sleep threshold when the cell was off.
    pub gamma_u: f64,
}

pub fn greedy_thresholds(cell: &CellParams, power: &PowerParams, seg: f64) -> Result<GreedyThresholds> {
    power.require_offload_gap()?;
    let gap = power.p_e - power.p_d;
    let load = cell.arrivals.mean_rate() * seg;
    Ok(GreedyThresholds {
        gamma_l: power.p_static / gap - load,
        gamma_u: (power.p_static + power.p_switch) / gap - load,
    })
}

/// Sleep iff `n <= gamma`, using `gamma_u` after an OFF segment and `gamma_l` after an ON one.
pub fn dual_threshold_action(state: &[CellState], thresholds: &[GreedyThresholds]) -> ActionVector {
    ActionVector::from_code(
        state.iter().zip(thresholds).fold(0, |acc, (s, t)| {
            let gamma = if s.prev_on { t.gamma_l } else { t.gamma_u };
            (acc << 1) | (s.residual_users as f64 > gamma) as usize
        }),
        state.len(),
    )
}

/// Turn off the cells with the largest non-negative savings, at most `k` of them.
/// Ties go to the lower cell index.
pub fn select_off_cells(savings: &[f64], k: usize) -> ActionVector {
    let mut order: Vec<usize> = (0..savings.len()).filter(|&i| savings[i] >= 0.0).collect();
    order.sort_by(|&a, &b| savings[b].total_cmp(&savings[a]).then(a.cmp(&b)));
    let mut on = vec![true; savings.len()];
    for &i in order.iter().take(k) {
        on[i] = false;
    }
    ActionVector::new(on, k).expect("at most k cells selected")
}

/// Exact minimizer of the immediate cost under the off-count limit.
pub fn greedy_action(state: &[CellState], cluster: &Cluster) -> ActionVector {
    let savings: Vec<f64> = state
        .iter()
        .zip(cluster.models())
        .map(|(s, m)| m.cost_state(*s, true) - m.cost_state(*s, false))
        .collect();
    select_off_cells(&savings, cluster.k())
}

/// Stationary behaviour of one cell under the dual-threshold rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellGreedyStats {
    pub thresholds: GreedyThresholds,
    /// `P(n <= gamma_l)`: probability an ON cell goes to sleep.
    pub p_l: f64,
    /// `P(n > gamma_u)`: probability a sleeping cell wakes up.
    pub p_u: f64,
    /// Long-run fraction of ON segments.
    pub on_fraction: f64,
    /// Set when `p_l = p_u = 0`, so the chain never leaves its initial ON state.
    pub absorbing: bool,
    /// Long-run cost of this cell.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyLongRun {
    pub cost: f64,
    pub cells: Vec<CellGreedyStats>,
}

/// Long-run average cost of greedy when no limit binds (`K = M`).
///
/// The cost accrued in each chain state is taken conditional on the
/// transition that led there: a cell that stays on only has counts above
/// `gamma_l`, one that wakes only has counts above `gamma_u`.
pub fn greedy_longrun_cost(cluster: &Cluster) -> Result<GreedyLongRun> {
    longrun(cluster, true)
}

/// Variant that charges every chain state its unconditional expected cost,
/// treating the residual count as independent of the action taken on it.
pub fn greedy_longrun_cost_independent(cluster: &Cluster) -> Result<GreedyLongRun> {
    longrun(cluster, false)
}

fn longrun(cluster: &Cluster, conditional: bool) -> Result<GreedyLongRun> {
    if cluster.k() != cluster.m() {
        return Err(Error::Unsupported(format!(
            "closed-form greedy cost needs K = M (got K = {}, M = {})",
            cluster.k(),
            cluster.m()
        )));
    }
    let cfg = cluster.config();
    let mut cells = Vec::with_capacity(cluster.m());
    for i in 0..cluster.m() {
        let th = greedy_thresholds(&cfg.cells[i], &cfg.power, cfg.segment_duration)?;
        let pmf = cluster.pmf(i);
        let model = cluster.model(i);
        let p_l = pmf.cdf_at(th.gamma_l);
        let p_u = 1.0 - pmf.cdf_at(th.gamma_u);
        let absorbing = p_l + p_u == 0.0;
        let on_fraction = if absorbing { 1.0 } else { p_u / (p_l + p_u) };
        let cost = if conditional {
            // from ON: stay on above gamma_l, else sleep
            let from_on = pmf.expect(|n| {
                if n as f64 > th.gamma_l {
                    model.cost(true, n, true)
                } else {
                    model.cost(true, n, false)
                }
            });
            let from_off = pmf.expect(|n| {
                if n as f64 > th.gamma_u {
                    model.cost(false, n, true)
                } else {
                    model.cost(false, n, false)
                }
            });
            on_fraction * from_on + (1.0 - on_fraction) * from_off
        } else {
            let ac = model.anticipated_costs(pmf);
            // chain-state probabilities: stay on, wake, sleep
            let stay = on_fraction * (1.0 - p_l);
            let wake = (1.0 - on_fraction) * p_u;
            stay * ac.c11 + wake * ac.c01 + (1.0 - stay - wake) * ac.c0
        };
        cells.push(CellGreedyStats {
            thresholds: th,
            p_l,
            p_u,
            on_fraction,
            absorbing,
            cost,
        });
    }
    Ok(GreedyLongRun {
        cost: cells.iter().map(|c| c.cost).sum(),
        cells,
    })
}

/// A state where the optimal and greedy decisions for one cell break the dominance relation.
#[derive(Debug, Clone, PartialEq)]
pub struct DominanceViolation {
    pub state: Vec<CellState>,
    pub cell: usize,
    pub optimal_on: bool,
    pub greedy_on: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceReport {
    pub states_checked: usize,
    pub violations: Vec<DominanceViolation>,
}

/// Over every state: optimal OFF implies greedy OFF (equivalently greedy ON implies optimal ON).
pub fn check_greedy_optimal_dominance(cluster: &Cluster, solved: &SolvedMdp) -> Result<DominanceReport> {
    if cluster.k() != cluster.m() {
        return Err(Error::Unsupported("dominance check needs K = M".into()));
    }
    let idx = JointStateIndex::new(cluster.m(), cluster.n_th());
    let n = usize::try_from(idx.size()).map_err(|_| Error::Capacity {
        size: idx.size(),
        budget: usize::MAX as u128,
    })?;
    let mut violations = Vec::new();
    for i in 0..n {
        let s = idx.decode(i);
        let opt = solved.action(&s);
        let gr = greedy_action(&s, cluster);
        for c in 0..cluster.m() {
            if !opt.is_on(c) && gr.is_on(c) {
                violations.push(DominanceViolation {
                    state: s.clone(),
                    cell: c,
                    optimal_on: false,
                    greedy_on: true,
                });
            }
        }
    }
    Ok(DominanceReport {
        states_checked: n,
        violations,
    })
}
