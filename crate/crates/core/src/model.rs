//! Shared domain types: power parameters, cost functions, arrival mixtures,
//! cell and cluster configuration, states and actions.

use crate::error::{Error, Result};

/// Arrival rates (users per second) of the standard four-rate mixture.
pub const STANDARD_RATES: [f64; 4] = [0.005, 0.01, 0.015, 0.02];

/// Sampling probabilities of the five standard arrival sets, in set order.
pub const STANDARD_SETS: [[f64; 4]; 5] = [
    [0.0, 1.0, 0.0, 0.0],
    [0.5, 0.0, 0.5, 0.0],
    [2.0 / 3.0, 0.0, 0.0, 1.0 / 3.0],
    [0.3, 0.4, 0.3, 0.0],
    [0.6, 0.0, 0.2, 0.2],
];

pub const DEFAULT_SEGMENT_DURATION: f64 = 1800.0;
pub const DEFAULT_MEAN_SERVICE_TIME: f64 = 500.0;

/// Cluster-wide power parameters in watts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerParams {
    pub p_static: f64,
    pub p_switch: f64,
    /// Per-user power on the gNB.
    pub p_d: f64,
    /// Per-user power on the ng-eNB.
    pub p_e: f64,
}

impl PowerParams {
    pub fn new(p_static: f64, p_switch: f64, p_d: f64, p_e: f64) -> Result<Self> {
        let p = PowerParams {
            p_static,
            p_switch,
            p_d,
            p_e,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn standard() -> Self {
        PowerParams {
            p_static: 85.0,
            p_switch: 40.0,
            p_d: 1.0,
            p_e: 5.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("p_static", self.p_static),
            ("p_switch", self.p_switch),
            ("p_d", self.p_d),
            ("p_e", self.p_e),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Threshold formulas divide by `p_e - p_d`.
    pub fn require_offload_gap(&self) -> Result<()> {
        if self.p_e > self.p_d {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "p_e ({}) must exceed p_d ({})",
                self.p_e, self.p_d
            )))
        }
    }
}

impl Default for PowerParams {
    fn default() -> Self {
        Self::standard()
    }
}

/// One linear piece `slope * x + intercept`, valid up to and including `upper`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiecewiseSegment {
    pub upper: f64,
    pub slope: f64,
    pub intercept: f64,
}

/// Continuous non-decreasing piecewise-linear function on `[0, inf)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    segments: Vec<PiecewiseSegment>,
}

impl PiecewiseLinear {
    /// Segments must have increasing upper ends, the last one infinite.
    pub fn new(segments: Vec<PiecewiseSegment>) -> Result<Self> {
        let Some(last) = segments.last() else {
            return Err(Error::param("segments", "at least one segment is required"));
        };
        if last.upper != f64::INFINITY {
            return Err(Error::param("segments", "last segment must extend to infinity"));
        }
        for (i, s) in segments.iter().enumerate() {
            if !(s.slope.is_finite() && s.slope >= 0.0) {
                return Err(Error::param(
                    "segments",
                    format!("segment {i} has slope {} (must be finite and >= 0)", s.slope),
                ));
            }
            if !s.intercept.is_finite() {
                return Err(Error::param("segments", format!("segment {i} intercept is not finite")));
            }
        }
        for (i, w) in segments.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            if !(a.upper.is_finite() && a.upper > 0.0 && a.upper < b.upper) {
                return Err(Error::param(
                    "segments",
                    format!("breakpoint {i} ({}) is not positive and increasing", a.upper),
                ));
            }
            let left = a.slope * a.upper + a.intercept;
            let right = b.slope * a.upper + b.intercept;
            if (left - right).abs() > 1e-9 * (1.0 + left.abs()) {
                return Err(Error::param(
                    "segments",
                    format!("discontinuity at x = {}: {left} vs {right}", a.upper),
                ));
            }
        }
        Ok(PiecewiseLinear { segments })
    }

    /// 0.5x up to 100 W, x - 50 up to 150 W, 1.5x - 125 beyond.
    pub fn standard() -> Self {
        PiecewiseLinear::new(vec![
            PiecewiseSegment { upper: 100.0, slope: 0.5, intercept: 0.0 },
            PiecewiseSegment { upper: 150.0, slope: 1.0, intercept: -50.0 },
            PiecewiseSegment { upper: f64::INFINITY, slope: 1.5, intercept: -125.0 },
        ])
        .expect("standard piecewise cost is valid")
    }

    pub fn segments(&self) -> &[PiecewiseSegment] {
        &self.segments
    }

    fn piece(&self, x: f64) -> &PiecewiseSegment {
        self.segments
            .iter()
            .find(|s| x <= s.upper)
            .unwrap_or_else(|| self.segments.last().expect("non-empty"))
    }

    fn eval(&self, x: f64) -> f64 {
        let s = self.piece(x);
        s.slope * x + s.intercept
    }
}

/// Non-decreasing map from watts to cost.
#[derive(Debug, Clone, PartialEq)]
pub enum CostFunction {
    Linear,
    Quadratic,
    PiecewiseLinear(PiecewiseLinear),
}

impl CostFunction {
    pub fn eval(&self, watts: f64) -> Result<f64> {
        if !(watts >= 0.0) {
            return Err(Error::Domain(format!("cost argument must be >= 0, got {watts}")));
        }
        Ok(self.apply(watts))
    }

    /// Evaluation without the domain check, for arguments already known to be valid.
    #[inline]
    pub(crate) fn apply(&self, x: f64) -> f64 {
        match self {
            CostFunction::Linear => x,
            CostFunction::Quadratic => x * x,
            CostFunction::PiecewiseLinear(p) => p.eval(x),
        }
    }

    /// Right derivative at `x`.
    pub fn slope(&self, x: f64) -> f64 {
        match self {
            CostFunction::Linear => 1.0,
            CostFunction::Quadratic => 2.0 * x,
            CostFunction::PiecewiseLinear(p) => {
                let s = p.piece(x);
                if x == s.upper {
                    p.piece(x + x.abs() * 1e-12 + 1e-12).slope
                } else {
                    s.slope
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CostFunction::Linear => "linear",
            CostFunction::Quadratic => "quadratic",
            CostFunction::PiecewiseLinear(_) => "piecewise",
        }
    }
}

/// `f(watts)`, rejecting negative input.
pub fn eval_cost(f: &CostFunction, watts: f64) -> Result<f64> {
    f.eval(watts)
}

/// Mixed Poisson arrival law: a segment draws rate `rates[j]` with probability `probs[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalMixture {
    rates: Vec<f64>,
    probs: Vec<f64>,
}

impl ArrivalMixture {
    pub fn new(rates: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::param("rates", "at least one rate is required"));
        }
        if rates.len() != probs.len() {
            return Err(Error::param(
                "probs",
                format!("{} probabilities for {} rates", probs.len(), rates.len()),
            ));
        }
        if let Some(r) = rates.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(Error::param("rates", format!("rate {r} must be finite and >= 0")));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::param("probs", format!("probability {p} must be finite and >= 0")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::param("probs", format!("probabilities sum to {total}, not 1")));
        }
        Ok(ArrivalMixture { rates, probs })
    }

    /// A single deterministic rate.
    pub fn single(rate: f64) -> Result<Self> {
        Self::new(vec![rate], vec![1.0])
    }

    /// One of the five standard sets (1-based).
    pub fn table_set(set: usize) -> Result<Self> {
        let probs = STANDARD_SETS
            .get(set.wrapping_sub(1))
            .ok_or_else(|| Error::param("set", format!("arrival set {set} is not in 1..=5")))?;
        Self::new(STANDARD_RATES.to_vec(), probs.to_vec())
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Mean rate `sum_j p_j * lambda_j`.
    pub fn mean_rate(&self) -> f64 {
        self.rates.iter().zip(&self.probs).map(|(r, p)| r * p).sum()
    }
}

/// Generative model of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    pub arrivals: ArrivalMixture,
    /// Mean user staying time `1/mu` in seconds.
    pub mean_service_time: f64,
}

impl CellParams {
    pub fn new(arrivals: ArrivalMixture, mean_service_time: f64) -> Result<Self> {
        let c = CellParams {
            arrivals,
            mean_service_time,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn standard(set: usize) -> Result<Self> {
        Self::new(ArrivalMixture::table_set(set)?, DEFAULT_MEAN_SERVICE_TIME)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean_service_time.is_finite() && self.mean_service_time > 0.0) {
            return Err(Error::param(
                "mean_service_time",
                format!("must be finite and > 0, got {}", self.mean_service_time),
            ));
        }
        Ok(())
    }

    pub fn service_rate(&self) -> f64 {
        1.0 / self.mean_service_time
    }
}

/// `sum_j p_j * lambda_j` for a cell.
pub fn mean_arrival_rate(cell: &CellParams) -> f64 {
    cell.arrivals.mean_rate()
}

/// Full description of a cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    pub m_cells: usize,
    /// Maximum number of cells that may sleep in one segment.
    pub k_max_off: usize,
    /// Segment length `T_s` in seconds.
    pub segment_duration: f64,
    pub cells: Vec<CellParams>,
    pub power: PowerParams,
    pub cost_fn: CostFunction,
    /// Residual counts above this value are lumped into it.
    pub n_th: usize,
}

impl ClusterConfig {
    pub fn new(
        cells: Vec<CellParams>,
        k_max_off: usize,
        segment_duration: f64,
        power: PowerParams,
        cost_fn: CostFunction,
        n_th: usize,
    ) -> Result<Self> {
        let c = ClusterConfig {
            m_cells: cells.len(),
            k_max_off,
            segment_duration,
            cells,
            power,
            cost_fn,
            n_th,
        };
        c.validate()?;
        Ok(c)
    }

    /// `m` identical cells drawing from arrival set `set`, standard power and timing,
    /// truncation chosen by the default tail rule.
    pub fn standard(m: usize, k: usize, set: usize, cost_fn: CostFunction) -> Result<Self> {
        let cell = CellParams::standard(set)?;
        let cells = vec![cell; m];
        let n_th = crate::arrivals::default_n_th_cluster(&cells, DEFAULT_SEGMENT_DURATION)?;
        Self::new(cells, k, DEFAULT_SEGMENT_DURATION, PowerParams::standard(), cost_fn, n_th)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_cells == 0 {
            return Err(Error::param("cells", "at least one cell is required"));
        }
        if self.cells.len() != self.m_cells {
            return Err(Error::param(
                "cells",
                format!("{} cell descriptions for M = {}", self.cells.len(), self.m_cells),
            ));
        }
        if self.k_max_off > self.m_cells {
            return Err(Error::param(
                "max_off",
                format!("K = {} exceeds M = {}", self.k_max_off, self.m_cells),
            ));
        }
        if !(self.segment_duration.is_finite() && self.segment_duration > 0.0) {
            return Err(Error::param(
                "segment_duration",
                format!("must be finite and > 0, got {}", self.segment_duration),
            ));
        }
        if self.n_th < 1 {
            return Err(Error::param("n_th", "must be >= 1"));
        }
        self.power.validate()?;
        for cell in &self.cells {
            cell.validate()?;
        }
        Ok(())
    }

    pub fn with_k(&self, k: usize) -> Result<Self> {
        let mut c = self.clone();
        c.k_max_off = k;
        c.validate()?;
        Ok(c)
    }
}

/// State of one cell at a segment boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellState {
    /// Whether the gNB was on during the previous segment.
    pub prev_on: bool,
    pub residual_users: u32,
}

impl CellState {
    pub fn new(prev_on: bool, residual_users: u32) -> Self {
        CellState {
            prev_on,
            residual_users,
        }
    }
}

pub type ClusterState = Vec<CellState>;

/// Joint ON/OFF decision; `true` means the gNB is on.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActionVector {
    on: Vec<bool>,
}

impl ActionVector {
    /// Rejects vectors with more than `k_max_off` cells off.
    pub fn new(on: Vec<bool>, k_max_off: usize) -> Result<Self> {
        let off = on.iter().filter(|b| !**b).count();
        if off > k_max_off {
            return Err(Error::InfeasibleAction(format!(
                "{off} cells off but at most {k_max_off} allowed"
            )));
        }
        Ok(ActionVector { on })
    }

    pub fn all_on(m: usize) -> Self {
        ActionVector { on: vec![true; m] }
    }

    /// Decode the bit pattern used by the joint solver: cell 0 is the most significant bit.
    pub fn from_code(code: usize, m: usize) -> Self {
        ActionVector {
            on: (0..m).map(|i| (code >> (m - 1 - i)) & 1 == 1).collect(),
        }
    }

    pub fn code(&self) -> usize {
        self.on.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
    }

    pub fn len(&self) -> usize {
        self.on.len()
    }

    pub fn is_empty(&self) -> bool {
        self.on.is_empty()
    }

    pub fn is_on(&self, cell: usize) -> bool {
        self.on[cell]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.on
    }

    pub fn off_count(&self) -> usize {
        self.on.iter().filter(|b| !**b).count()
    }

    pub fn on_count(&self) -> usize {
        self.on.len() - self.off_count()
    }

    /// Check length and off-count against a cluster.
    pub fn check(&self, m: usize, k_max_off: usize) -> Result<()> {
        if self.on.len() != m {
            return Err(Error::InfeasibleAction(format!(
                "action has {} entries for {m} cells",
                self.on.len()
            )));
        }
        if self.off_count() > k_max_off {
            return Err(Error::InfeasibleAction(format!(
                "{} cells off but at most {k_max_off} allowed",
                self.off_count()
            )));
        }
        Ok(())
    }
}
