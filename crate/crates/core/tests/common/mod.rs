//! Shared helpers for the integration suites.
#![allow(dead_code)]

use gnb_sleep::index::{decoupled_rvia, DecoupledModel, DecoupledOptions, DecoupledSolution};
use gnb_sleep::{Cluster, ClusterConfig, CostFunction, PowerParams};

pub fn cluster(m: usize, k: usize, set: usize, f: CostFunction) -> Cluster {
    Cluster::new(ClusterConfig::standard(m, k, set, f).unwrap()).unwrap()
}

pub fn cluster_with_power(m: usize, k: usize, f: CostFunction, power: PowerParams) -> Cluster {
    let mut cfg = ClusterConfig::standard(m, k, 3, f).unwrap();
    cfg.power = power;
    Cluster::new(cfg).unwrap()
}

pub fn all_costs() -> [CostFunction; 3] {
    [
        CostFunction::Linear,
        CostFunction::Quadratic,
        CostFunction::PiecewiseLinear(gnb_sleep::PiecewiseLinear::standard()),
    ]
}

/// Independent index oracle: bisection on the OFF cost for the point where the
/// decoupled optimal action at `(prev_on, n)` flips from OFF to ON.
///
/// Raising the OFF cost can only move a state from passive to active, so the
/// flip point is unique. Returns the flip point and the solution just below it.
pub struct Bisection {
    pub eps: f64,
    pub below: DecoupledSolution,
    pub above: DecoupledSolution,
}

pub fn bisect_index(model: &DecoupledModel, prev_on: bool, n: usize, tol: f64) -> Bisection {
    let opts = DecoupledOptions::default();
    let solve = |e: f64| decoupled_rvia(model, e, None, &opts).unwrap();
    let (mut lo, mut hi) = (-1.0, 1.0);
    let mut s_lo = solve(lo);
    while !s_lo.passive(prev_on, n) {
        hi = lo;
        lo *= 2.0;
        s_lo = solve(lo);
        assert!(lo > -1e9, "no passive OFF cost found");
    }
    let mut s_hi = solve(hi);
    while s_hi.passive(prev_on, n) {
        lo = hi;
        s_lo = s_hi;
        hi *= 2.0;
        s_hi = solve(hi);
        assert!(hi < 1e9, "no active OFF cost found");
    }
    while hi - lo > tol * (1.0 + lo.abs().max(hi.abs())) {
        let mid = 0.5 * (lo + hi);
        let s = solve(mid);
        if s.passive(prev_on, n) {
            lo = mid;
            s_lo = s;
        } else {
            hi = mid;
            s_hi = s;
        }
    }
    Bisection {
        eps: 0.5 * (lo + hi),
        below: s_lo,
        above: s_hi,
    }
}
