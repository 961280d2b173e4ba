//! State-independent policies (uniform random and round-robin), their
//! closed-form costs, and the relaxation lower bound on any policy's cost.

use rand::seq::index::sample;
use rand::Rng;

use crate::cluster::Cluster;
use crate::cost::AnticipatedCosts;
use crate::error::{Error, Result};
use crate::greedy::greedy_thresholds;
use crate::model::ActionVector;

/// Exactly `k` of `m` cells off, uniformly over all subsets.
pub fn uniform_action<R: Rng + ?Sized>(m: usize, k: usize, rng: &mut R) -> ActionVector {
    let mut on = vec![true; m];
    for i in sample(rng, m, k.min(m)) {
        on[i] = false;
    }
    ActionVector::new(on, k).expect("exactly k off")
}

pub fn uniform_longrun_cost(m: usize, k: usize, costs: &[AnticipatedCosts]) -> f64 {
    let q = k as f64 / m as f64;
    costs
        .iter()
        .map(|c| c.c01 * (1.0 - q) * q + c.c11 * (1.0 - q) * (1.0 - q) + c.c0 * q)
        .sum()
}

/// Cell `i` is off iff `(t - i) mod m < k`.
pub fn round_robin_action(t: u64, m: usize, k: usize) -> ActionVector {
    let mm = m as u64;
    let on = (0..m)
        .map(|i| (t % mm + mm - i as u64 % mm) % mm >= k as u64)
        .collect();
    ActionVector::new(on, k).expect("exactly k off")
}

pub fn round_robin_longrun_cost(m: usize, k: usize, costs: &[AnticipatedCosts]) -> f64 {
    if k == 0 {
        return costs.iter().map(|c| c.c11).sum();
    }
    if k == m {
        return costs.iter().map(|c| c.c0).sum();
    }
    let (mf, kf) = (m as f64, k as f64);
    costs
        .iter()
        .map(|c| c.c0 * kf + c.c01 + c.c11 * (mf - kf - 1.0))
        .sum::<f64>()
        / mf
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineDifference {
    /// Round-robin cost minus uniform cost.
    pub diff: f64,
    /// `sum_m (c01 - c11)`.
    pub c_diff: f64,
    /// `K = 1`, `K = M - 1` or `M < 4`, with a positive switching cost.
    pub uniform_strictly_better: bool,
}

/// Closed-form gap between the two baselines for `0 < K < M`.
pub fn baseline_difference(m: usize, k: usize, costs: &[AnticipatedCosts]) -> Result<BaselineDifference> {
    if !(0 < k && k < m) {
        return Err(Error::Unsupported(format!("baseline difference needs 0 < K < M (K = {k}, M = {m})")));
    }
    let c_diff: f64 = costs.iter().map(|c| c.c01 - c.c11).sum();
    let (mf, kf) = (m as f64, k as f64);
    let diff = (kf * kf - mf * kf + mf) / (mf * mf) * c_diff;
    Ok(BaselineDifference {
        diff,
        c_diff,
        uniform_strictly_better: c_diff > 0.0 && (k == 1 || k == m - 1 || m < 4),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBound {
    pub value: f64,
    pub per_cell: Vec<f64>,
    /// Largest residual mass lumped into the truncation bin over all cells.
    pub tail_mass: f64,
}

/// Relaxation bound: each cell pays its OFF cost plus the gain of being on whenever
/// the count exceeds `gamma_l`, with no switching charged.
pub fn lower_bound(cluster: &Cluster) -> Result<LowerBound> {
    let cfg = cluster.config();
    cfg.power.require_offload_gap()?;
    let mut per_cell = Vec::with_capacity(cluster.m());
    for i in 0..cluster.m() {
        let th = greedy_thresholds(&cfg.cells[i], &cfg.power, cfg.segment_duration)?;
        let model = cluster.model(i);
        let pmf = cluster.pmf(i);
        let c0 = pmf.expect(|n| model.cost(true, n, false));
        let gain = pmf.expect(|n| {
            if n as f64 > th.gamma_l {
                model.delta2(n as f64)
            } else {
                0.0
            }
        });
        per_cell.push(c0 + gain);
    }
    Ok(LowerBound {
        value: per_cell.iter().sum(),
        per_cell,
        tail_mass: cluster.pmfs().iter().map(|p| p.tail_mass()).fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greedy::greedy_longrun_cost;
    use crate::model::{ClusterConfig, CostFunction, PowerParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn costs(m: usize) -> Vec<AnticipatedCosts> {
        let c = Cluster::new(ClusterConfig::standard(m, m, 3, CostFunction::Quadratic).unwrap()).unwrap();
        c.anticipated_costs()
    }

    #[test]
    fn uniform_action_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(uniform_action(4, 0, &mut rng), ActionVector::all_on(4));
        assert_eq!(uniform_action(4, 4, &mut rng).off_count(), 4);
        // 4e6 draws put the 0.001 band at about four standard errors
        let draws = 4_000_000;
        let mut off = [0usize; 5];
        for _ in 0..draws {
            let a = uniform_action(5, 2, &mut rng);
            assert_eq!(a.off_count(), 2);
            for (i, o) in off.iter_mut().enumerate() {
                *o += !a.is_on(i) as usize;
            }
        }
        for o in off {
            assert!((o as f64 / draws as f64 - 0.4).abs() < 0.001);
        }
    }

    #[test]
    fn round_robin_pattern() {
        // each cell: OFF, OFF, OFF, ON, ON, shifted by its index
        for i in 0..5 {
            let sched: Vec<bool> = (0..5u64).map(|t| round_robin_action(t + i as u64, 5, 3).is_on(i)).collect();
            assert_eq!(sched, vec![false, false, false, true, true]);
        }
        for t in 0..40 {
            assert_eq!(round_robin_action(t, 5, 3).off_count(), 3);
            assert_eq!(round_robin_action(t, 5, 0), ActionVector::all_on(5));
        }
    }

    #[test]
    fn closed_form_limits() {
        let c = costs(4);
        let c11: f64 = c.iter().map(|x| x.c11).sum();
        let c0: f64 = c.iter().map(|x| x.c0).sum();
        assert!((uniform_longrun_cost(4, 0, &c) - c11).abs() < 1e-9);
        assert!((uniform_longrun_cost(4, 4, &c) - c0).abs() < 1e-9);
        assert_eq!(round_robin_longrun_cost(4, 0, &c), c11);
        assert_eq!(round_robin_longrun_cost(4, 4, &c), c0);
    }

    #[test]
    fn round_robin_affine_in_k() {
        let c = costs(8);
        let v: Vec<f64> = (1..8).map(|k| round_robin_longrun_cost(8, k, &c)).collect();
        for w in v.windows(3) {
            assert!((w[2] - 2.0 * w[1] + w[0]).abs() < 1e-9 * w[1].abs());
        }
    }

    #[test]
    fn difference_examples() {
        let c = costs(6);
        let cd: f64 = c.iter().map(|x| x.c01 - x.c11).sum();
        let d1 = baseline_difference(6, 1, &c).unwrap();
        assert!((d1.diff - cd / 36.0).abs() < 1e-9 * cd);
        assert!(d1.uniform_strictly_better);
        let d3 = baseline_difference(6, 3, &c).unwrap();
        assert!((d3.diff + cd / 12.0).abs() < 1e-9 * cd);
        assert!(!d3.uniform_strictly_better);
        assert!(baseline_difference(6, 0, &c).is_err());
        assert!(baseline_difference(6, 6, &c).is_err());
        // matches the two closed forms directly
        for k in 1..6 {
            let d = baseline_difference(6, k, &c).unwrap().diff;
            let direct = round_robin_longrun_cost(6, k, &c) - uniform_longrun_cost(6, k, &c);
            assert!((d - direct).abs() < 1e-9 * direct.abs().max(1.0));
        }

        let mut cfg = ClusterConfig::standard(6, 6, 3, CostFunction::Quadratic).unwrap();
        cfg.power.p_switch = 0.0;
        let free = Cluster::new(cfg).unwrap().anticipated_costs();
        for k in 1..6 {
            let d = baseline_difference(6, k, &free).unwrap();
            assert_eq!(d.diff, 0.0);
            assert!(!d.uniform_strictly_better);
        }
    }

    #[test]
    fn bound_without_static_power_is_always_on_cost() {
        let mut cfg = ClusterConfig::standard(2, 2, 3, CostFunction::Quadratic).unwrap();
        cfg.power = PowerParams::new(0.0, 40.0, 1.0, 5.0).unwrap();
        let c = Cluster::new(cfg).unwrap();
        let lb = lower_bound(&c).unwrap();
        let c11: f64 = c.anticipated_costs().iter().map(|a| a.c11).sum();
        assert!((lb.value - c11).abs() < 1e-9 * c11);
        assert!(lb.tail_mass < 1e-9);
    }

    #[test]
    fn bound_is_tight_for_free_switching() {
        for f in [CostFunction::Linear, CostFunction::Quadratic] {
            let mut cfg = ClusterConfig::standard(3, 3, 3, f).unwrap();
            cfg.power.p_switch = 0.0;
            let c = Cluster::new(cfg).unwrap();
            let lb = lower_bound(&c).unwrap().value;
            let greedy = greedy_longrun_cost(&c).unwrap().cost;
            assert!((lb - greedy).abs() < 1e-9 * lb);
        }
    }

    #[test]
    fn bound_frozen_value() {
        // single standard cell, linear cost: independent evaluation in double precision
        let c = Cluster::new(ClusterConfig::standard(1, 1, 3, CostFunction::Linear).unwrap()).unwrap();
        let lb = lower_bound(&c).unwrap();
        assert!((lb.value - 104.803).abs() < 5e-3, "{}", lb.value);
        let q = Cluster::new(ClusterConfig::standard(1, 1, 3, CostFunction::Quadratic).unwrap()).unwrap();
        assert!((lower_bound(&q).unwrap().value - 11039.82).abs() < 0.05);
    }

    #[test]
    fn bound_needs_offload_gap() {
        let mut cfg = ClusterConfig::standard(1, 1, 3, CostFunction::Linear).unwrap();
        cfg.power.p_e = 1.0;
        assert!(lower_bound(&Cluster::new(cfg).unwrap()).is_err());
    }
}
