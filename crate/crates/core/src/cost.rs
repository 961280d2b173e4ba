//! Anticipated power and cost of one segment, their expectations over the
//! residual distribution, and the ON/OFF cost differences used by the
//! threshold policies.

use crate::arrivals::ResidualPmf;
use crate::model::{CellParams, CellState, CostFunction, PowerParams};

/// Bisection tolerance for threshold inversion.
pub const INVERSION_TOL: f64 = 1e-9;

/// Expected arrivals `mean_rate * T_s` during a segment.
pub fn expected_arrivals(cell: &CellParams, seg: f64) -> f64 {
    cell.arrivals.mean_rate() * seg
}

/// Power split into the components reported by the simulator.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PowerBreakdown {
    pub static_w: f64,
    pub dynamic_w: f64,
    pub switch_w: f64,
    /// Power spent on the ng-eNB for users of a sleeping cell.
    pub extra_w: f64,
}

impl PowerBreakdown {
    pub fn total(&self) -> f64 {
        self.static_w + self.dynamic_w + self.switch_w + self.extra_w
    }

    pub fn add(&mut self, other: &PowerBreakdown) {
        self.static_w += other.static_w;
        self.dynamic_w += other.dynamic_w;
        self.switch_w += other.switch_w;
        self.extra_w += other.extra_w;
    }

    pub fn scaled(&self, s: f64) -> PowerBreakdown {
        PowerBreakdown {
            static_w: self.static_w * s,
            dynamic_w: self.dynamic_w * s,
            switch_w: self.switch_w * s,
            extra_w: self.extra_w * s,
        }
    }
}

fn breakdown(power: &PowerParams, load: f64, prev_on: bool, on: bool) -> PowerBreakdown {
    if on {
        PowerBreakdown {
            static_w: power.p_static,
            dynamic_w: load * power.p_d,
            switch_w: if prev_on { 0.0 } else { power.p_switch },
            extra_w: 0.0,
        }
    } else {
        PowerBreakdown {
            extra_w: load * power.p_e,
            ..Default::default()
        }
    }
}

/// Anticipated segment power of one cell given its state and action.
pub fn anticipated_power(
    state: CellState,
    on: bool,
    cell: &CellParams,
    power: &PowerParams,
    seg: f64,
) -> f64 {
    let load = state.residual_users as f64 + expected_arrivals(cell, seg);
    breakdown(power, load, state.prev_on, on).total()
}

/// `f` applied to the anticipated power.
pub fn immediate_cost(
    state: CellState,
    on: bool,
    cell: &CellParams,
    power: &PowerParams,
    f: &CostFunction,
    seg: f64,
) -> f64 {
    f.apply(anticipated_power(state, on, cell, power, seg))
}

/// Expected segment cost for the three action patterns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnticipatedCosts {
    /// Turned on after sleeping.
    pub c01: f64,
    /// Stayed on.
    pub c11: f64,
    /// Sleeping.
    pub c0: f64,
}

pub fn anticipated_costs(
    cell: &CellParams,
    power: &PowerParams,
    f: &CostFunction,
    seg: f64,
    pmf: &ResidualPmf,
) -> AnticipatedCosts {
    CellCostModel::new(cell, power, f, seg, pmf.n_th()).anticipated_costs(pmf)
}

pub fn g_lower(n: f64, cell: &CellParams, power: &PowerParams, f: &CostFunction, seg: f64) -> f64 {
    CellCostModel::new(cell, power, f, seg, 1).g_lower(n)
}

pub fn g_upper(n: f64, cell: &CellParams, power: &PowerParams, f: &CostFunction, seg: f64) -> f64 {
    CellCostModel::new(cell, power, f, seg, 1).g_upper(n)
}

/// Largest `n` in `[0, n_max]` with `g(n) <= target` for non-decreasing `g`,
/// or `-1` if there is none.
pub fn invert_nondecreasing(g: impl Fn(f64) -> f64, target: f64, n_max: f64) -> f64 {
    if g(0.0) > target {
        return -1.0;
    }
    if g(n_max) <= target {
        return n_max;
    }
    let (mut lo, mut hi) = (0.0, n_max);
    while hi - lo > INVERSION_TOL {
        let mid = 0.5 * (lo + hi);
        if g(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Per-cell cost model with the state costs tabulated over `0..=n_th`.
#[derive(Debug, Clone)]
pub struct CellCostModel {
    power: PowerParams,
    cost_fn: CostFunction,
    expected_arrivals: f64,
    n_th: usize,
    on_from_on: Vec<f64>,
    on_from_off: Vec<f64>,
    off: Vec<f64>,
}

impl CellCostModel {
    pub fn new(cell: &CellParams, power: &PowerParams, f: &CostFunction, seg: f64, n_th: usize) -> Self {
        let mut m = CellCostModel {
            power: *power,
            cost_fn: f.clone(),
            expected_arrivals: expected_arrivals(cell, seg),
            n_th,
            on_from_on: Vec::new(),
            on_from_off: Vec::new(),
            off: Vec::new(),
        };
        m.on_from_on = (0..=n_th).map(|n| m.cost_real(true, n as f64, true)).collect();
        m.on_from_off = (0..=n_th).map(|n| m.cost_real(false, n as f64, true)).collect();
        m.off = (0..=n_th).map(|n| m.cost_real(false, n as f64, false)).collect();
        m
    }

    pub fn n_th(&self) -> usize {
        self.n_th
    }

    pub fn power(&self) -> &PowerParams {
        &self.power
    }

    pub fn cost_fn(&self) -> &CostFunction {
        &self.cost_fn
    }

    pub fn expected_arrivals(&self) -> f64 {
        self.expected_arrivals
    }

    pub fn breakdown(&self, prev_on: bool, n: f64, on: bool) -> PowerBreakdown {
        breakdown(&self.power, n + self.expected_arrivals, prev_on, on)
    }

    /// Cost at a real-valued residual count.
    pub fn cost_real(&self, prev_on: bool, n: f64, on: bool) -> f64 {
        self.cost_fn.apply(self.breakdown(prev_on, n, on).total())
    }

    #[inline]
    pub fn cost(&self, prev_on: bool, n: usize, on: bool) -> f64 {
        match (on, prev_on) {
            (false, _) => self.off[n],
            (true, true) => self.on_from_on[n],
            (true, false) => self.on_from_off[n],
        }
    }

    #[inline]
    pub fn cost_state(&self, s: CellState, on: bool) -> f64 {
        self.cost(s.prev_on, s.residual_users as usize, on)
    }

    /// Tabulated costs for `(prev_on, on)` over all counts.
    pub fn cost_row(&self, prev_on: bool, on: bool) -> &[f64] {
        match (on, prev_on) {
            (false, _) => &self.off,
            (true, true) => &self.on_from_on,
            (true, false) => &self.on_from_off,
        }
    }

    pub fn anticipated_costs(&self, pmf: &ResidualPmf) -> AnticipatedCosts {
        AnticipatedCosts {
            c01: pmf.expect(|n| self.on_from_off[n]),
            c11: pmf.expect(|n| self.on_from_on[n]),
            c0: pmf.expect(|n| self.off[n]),
        }
    }

    /// OFF cost minus the cost of staying on.
    pub fn g_lower(&self, n: f64) -> f64 {
        self.cost_real(true, n, false) - self.cost_real(true, n, true)
    }

    /// OFF cost minus the cost of switching on.
    pub fn g_upper(&self, n: f64) -> f64 {
        self.cost_real(false, n, false) - self.cost_real(false, n, true)
    }

    /// Staying on minus switching on; never positive.
    pub fn delta1(&self, n: f64) -> f64 {
        self.cost_real(true, n, true) - self.cost_real(false, n, true)
    }

    /// Staying on minus sleeping.
    pub fn delta2(&self, n: f64) -> f64 {
        self.cost_real(true, n, true) - self.cost_real(true, n, false)
    }

    /// Largest real `n` in `[0, n_th]` with `g_lower(n) <= target`; `-1` if none.
    pub fn threshold_lower(&self, target: f64) -> f64 {
        self.threshold(target, 0.0)
    }

    /// As [`Self::threshold_lower`] for `g_upper`.
    pub fn threshold_upper(&self, target: f64) -> f64 {
        self.threshold(target, self.power.p_switch)
    }

    fn threshold(&self, target: f64, switch: f64) -> f64 {
        let n_max = self.n_th as f64;
        let gap = self.power.p_e - self.power.p_d;
        if matches!(self.cost_fn, CostFunction::Linear) && gap > 0.0 {
            let root = (target + self.power.p_static + switch) / gap - self.expected_arrivals;
            return if root < 0.0 {
                -1.0
            } else if root > n_max {
                n_max
            } else {
                root
            };
        }
        if switch == 0.0 {
            invert_nondecreasing(|n| self.g_lower(n), target, n_max)
        } else {
            invert_nondecreasing(|n| self.g_upper(n), target, n_max)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrivals::residual_pmf;
    use crate::model::{ArrivalMixture, PiecewiseLinear};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cell3() -> CellParams {
        CellParams::standard(3).unwrap()
    }

    fn all_fns() -> Vec<CostFunction> {
        vec![
            CostFunction::Linear,
            CostFunction::Quadratic,
            CostFunction::PiecewiseLinear(PiecewiseLinear::standard()),
        ]
    }

    #[test]
    fn power_cases() {
        let p = PowerParams::standard();
        let c = cell3();
        let on = anticipated_power(CellState::new(true, 10), true, &c, &p, 1800.0);
        assert!((on - 113.0).abs() < 1e-12);
        let wake = anticipated_power(CellState::new(false, 10), true, &c, &p, 1800.0);
        assert!((wake - 153.0).abs() < 1e-12);
        for prev in [true, false] {
            let off = anticipated_power(CellState::new(prev, 10), false, &c, &p, 1800.0);
            assert!((off - 140.0).abs() < 1e-12);
        }
    }

    #[test]
    fn immediate_cost_cases() {
        let p = PowerParams::standard();
        let c = cell3();
        let lin = immediate_cost(CellState::new(true, 10), true, &c, &p, &CostFunction::Linear, 1800.0);
        assert!((lin - 113.0).abs() < 1e-12);
        let quad = immediate_cost(CellState::new(true, 10), false, &c, &p, &CostFunction::Quadratic, 1800.0);
        assert!((quad - 19600.0).abs() < 1e-9);

        let sym = PowerParams::new(0.0, 0.0, 2.0, 2.0).unwrap();
        for f in all_fns() {
            for n in 0..20 {
                for prev in [true, false] {
                    let s = CellState::new(prev, n);
                    let a = immediate_cost(s, true, &c, &sym, &f, 1800.0);
                    let b = immediate_cost(s, false, &c, &sym, &f, 1800.0);
                    assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn linear_expectations() {
        let p = PowerParams::standard();
        let c = cell3();
        let pmf = residual_pmf(&c, 1800.0, 64).unwrap();
        let ac = anticipated_costs(&c, &p, &CostFunction::Linear, 1800.0, &pmf);
        let want_c11 = 85.0 + (pmf.mean() + 18.0) * 1.0;
        assert!((ac.c11 - want_c11).abs() < 1e-9);
        assert!((ac.c01 - ac.c11 - 40.0).abs() < 1e-9);
        assert!((ac.c0 - (pmf.mean() + 18.0) * 5.0).abs() < 1e-9);

        let zero = CellParams::new(ArrivalMixture::single(0.0).unwrap(), 500.0).unwrap();
        let pz = residual_pmf(&zero, 1800.0, 4).unwrap();
        let az = anticipated_costs(&zero, &p, &CostFunction::Linear, 1800.0, &pz);
        assert_eq!(az.c0, 0.0);
        assert_eq!(az.c11, 85.0);
    }

    #[test]
    fn anticipated_costs_match_monte_carlo() {
        let p = PowerParams::standard();
        let c = cell3();
        let pmf = residual_pmf(&c, 1800.0, 64).unwrap();
        let f = CostFunction::Quadratic;
        let ac = anticipated_costs(&c, &p, &f, 1800.0, &pmf);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = 200_000;
        let (mut s01, mut s11, mut s0) = (0.0, 0.0, 0.0);
        for _ in 0..draws {
            let n = pmf.sample(&mut rng);
            s01 += immediate_cost(CellState::new(false, n), true, &c, &p, &f, 1800.0);
            s11 += immediate_cost(CellState::new(true, n), true, &c, &p, &f, 1800.0);
            s0 += immediate_cost(CellState::new(true, n), false, &c, &p, &f, 1800.0);
        }
        let d = draws as f64;
        assert!((s01 / d / ac.c01 - 1.0).abs() < 0.005);
        assert!((s11 / d / ac.c11 - 1.0).abs() < 0.005);
        assert!((s0 / d / ac.c0 - 1.0).abs() < 0.01);
        assert!(ac.c01 >= ac.c11);
    }

    #[test]
    fn g_functions_linear() {
        let p = PowerParams::standard();
        let c = cell3();
        for n in [0.0, 3.25, 7.5, 20.0] {
            let gl = g_lower(n, &c, &p, &CostFunction::Linear, 1800.0);
            assert!((gl - (4.0 * (n + 18.0) - 85.0)).abs() < 1e-12);
            let gu = g_upper(n, &c, &p, &CostFunction::Linear, 1800.0);
            assert!((gu - (4.0 * (n + 18.0) - 125.0)).abs() < 1e-12);
        }
        assert!(g_lower(3.25, &c, &p, &CostFunction::Linear, 1800.0).abs() < 1e-12);
    }

    #[test]
    fn g_lower_dominates_g_upper() {
        let c = cell3();
        for f in all_fns() {
            for sw in [0.0, 40.0] {
                let p = PowerParams::new(85.0, sw, 1.0, 5.0).unwrap();
                for i in 0..200 {
                    let n = i as f64 * 0.37;
                    let gl = g_lower(n, &c, &p, &f, 1800.0);
                    let gu = g_upper(n, &c, &p, &f, 1800.0);
                    if sw == 0.0 {
                        assert_eq!(gl, gu);
                    } else {
                        assert!(gl > gu);
                    }
                }
            }
        }
    }

    #[test]
    fn g_lower_strictly_increasing() {
        let c = cell3();
        let p = PowerParams::standard();
        for f in [CostFunction::Linear, CostFunction::Quadratic] {
            let mut prev = f64::NEG_INFINITY;
            for i in 0..500 {
                let g = g_lower(i as f64 * 0.13, &c, &p, &f, 1800.0);
                assert!(g > prev);
                prev = g;
            }
        }
    }

    #[test]
    fn closed_form_and_bisection_agree() {
        let c = cell3();
        let p = PowerParams::standard();
        let m = CellCostModel::new(&c, &p, &CostFunction::Linear, 1800.0, 64);
        for target in [-100.0, -13.0, 0.0, 5.5, 17.0, 170.0, 1000.0] {
            let closed = m.threshold_lower(target);
            let bis = invert_nondecreasing(|n| m.g_lower(n), target, 64.0);
            assert!((closed - bis).abs() < 1e-8, "target {target}: {closed} vs {bis}");
            let closed_u = m.threshold_upper(target);
            let bis_u = invert_nondecreasing(|n| m.g_upper(n), target, 64.0);
            assert!((closed_u - bis_u).abs() < 1e-8);
        }
        assert!((m.threshold_lower(0.0) - 3.25).abs() < 1e-12);
        assert!((m.threshold_upper(0.0) - 13.25).abs() < 1e-12);
        assert_eq!(m.threshold_lower(-1e6), -1.0);
        assert_eq!(m.threshold_lower(1e6), 64.0);
    }

    fn any_cost_fn() -> impl Strategy<Value = CostFunction> {
        prop_oneof![
            Just(CostFunction::Linear),
            Just(CostFunction::Quadratic),
            Just(CostFunction::PiecewiseLinear(PiecewiseLinear::standard())),
        ]
    }

    proptest! {
        #[test]
        fn delta_signs_and_monotonicity(
            f in any_cost_fn(),
            sw in 0.0f64..100.0,
            stat in 0.0f64..200.0,
            a in 0.0f64..60.0,
            b in 0.0f64..60.0,
        ) {
            let p = PowerParams::new(stat, sw, 1.0, 5.0).unwrap();
            let m = CellCostModel::new(&cell3(), &p, &f, 1800.0, 64);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let tol = 1e-9 * (1.0 + m.cost_real(false, hi, true).abs());
            prop_assert!(m.delta1(lo) <= tol);
            prop_assert!(m.delta1(hi) <= m.delta1(lo) + tol);
            prop_assert!(m.delta2(hi) <= m.delta2(lo) + tol);
        }

        #[test]
        fn threshold_is_a_root(f in any_cost_fn(), target in -500.0f64..5000.0) {
            let m = CellCostModel::new(&cell3(), &PowerParams::standard(), &f, 1800.0, 64);
            let t = m.threshold_lower(target);
            if (0.0..64.0).contains(&t) {
                prop_assert!(m.g_lower(t) <= target + 1e-6);
                prop_assert!(m.g_lower(t + 1e-6) >= target - 1e-6);
            }
        }
    }
}
