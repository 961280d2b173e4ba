//! Residual-user distribution at segment boundaries, arrival sampling, and an
//! event-driven oracle that tracks every user, including those that stay for
//! several segments.

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};

use crate::error::{Error, Result};
use crate::model::CellParams;

/// Tail mass allowed beyond the truncation point before doubling.
pub const TAIL_TOLERANCE: f64 = 1e-9;

/// Mean number of users that arrived during a segment of length `seg` and are
/// still present at its end: `(rate / mu) * (1 - exp(-mu * seg))`.
pub fn tilde_lambda(rate: f64, service_rate: f64, seg: f64) -> Result<f64> {
    if !(service_rate > 0.0 && service_rate.is_finite()) {
        return Err(Error::Domain(format!("service rate must be > 0, got {service_rate}")));
    }
    if !(seg > 0.0) {
        return Err(Error::Domain(format!("segment duration must be > 0, got {seg}")));
    }
    Ok(rate / service_rate * -(-service_rate * seg).exp_m1())
}

fn tilde_lambdas(cell: &CellParams, seg: f64) -> Result<Vec<f64>> {
    cell.arrivals
        .rates()
        .iter()
        .map(|&r| tilde_lambda(r, cell.service_rate(), seg))
        .collect()
}

/// Table of `ln(k!)` for `k = 0..=n`.
fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

fn ln_poisson(l: usize, lambda: f64, ln_fact: f64) -> f64 {
    if lambda == 0.0 {
        return if l == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    l as f64 * lambda.ln() - lambda - ln_fact
}

/// `P(X > n)` for `X ~ Poisson(lambda)`, summed directly so tiny tails keep their precision.
pub fn poisson_upper_tail(lambda: f64, n: usize) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    if (n as f64) < lambda {
        let lf = ln_factorials(n);
        let below: f64 = (0..=n).map(|l| ln_poisson(l, lambda, lf[l]).exp()).sum();
        return (1.0 - below).max(0.0);
    }
    let mut ln_fact: f64 = (1..=n + 1).map(|k| (k as f64).ln()).sum();
    let mut l = n + 1;
    let mut total = 0.0;
    loop {
        let term = ln_poisson(l, lambda, ln_fact).exp();
        total += term;
        if term <= total * 1e-17 || term == 0.0 {
            break;
        }
        l += 1;
        ln_fact += (l as f64).ln();
    }
    total
}

/// Distribution of the residual count at a segment boundary, truncated at `n_th`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPmf {
    probs: Vec<f64>,
    tail_mass: f64,
    cdf: Vec<f64>,
}

impl ResidualPmf {
    /// Build from explicit probabilities. The last bin is the lumped tail.
    pub fn from_probs(probs: Vec<f64>, tail_mass: f64) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::param("probs", "need at least two bins"));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::param("probs", "entries must be finite and >= 0"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::param("probs", format!("sum is {total}, not 1")));
        }
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cdf.push(acc);
        }
        *cdf.last_mut().expect("non-empty") = f64::INFINITY;
        Ok(ResidualPmf {
            probs,
            tail_mass,
            cdf,
        })
    }

    pub fn n_th(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, l: usize) -> f64 {
        self.probs.get(l).copied().unwrap_or(0.0)
    }

    /// Mass that lay strictly beyond `n_th` before it was lumped into the last bin.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(l, p)| l as f64 * p).sum()
    }

    /// `P(n <= x)` for real `x`.
    pub fn cdf_at(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let top = (x.floor() as usize).min(self.n_th());
        self.probs[..=top].iter().sum()
    }

    /// Inverse-CDF draw from a uniform `u` in `[0, 1)`.
    #[inline]
    pub fn quantile(&self, u: f64) -> u32 {
        self.cdf.partition_point(|&c| c <= u) as u32
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.quantile(rng.random::<f64>())
    }

    pub fn expect(&self, mut g: impl FnMut(usize) -> f64) -> f64 {
        self.probs.iter().enumerate().map(|(l, p)| p * g(l)).sum()
    }
}

/// Mixture-of-Poisson residual distribution with the tail lumped into `n_th`.
pub fn residual_pmf(cell: &CellParams, seg: f64, n_th: usize) -> Result<ResidualPmf> {
    if n_th < 1 {
        return Err(Error::param("n_th", "must be >= 1"));
    }
    let lambdas = tilde_lambdas(cell, seg)?;
    let weights = cell.arrivals.probs();
    let lf = ln_factorials(n_th);
    let mut probs = vec![0.0; n_th + 1];
    for (l, slot) in probs.iter_mut().enumerate().take(n_th) {
        *slot = lambdas
            .iter()
            .zip(weights)
            .map(|(&lam, &w)| w * ln_poisson(l, lam, lf[l]).exp())
            .sum();
    }
    let mut beyond = 0.0;
    let mut at_last = 0.0;
    for (&lam, &w) in lambdas.iter().zip(weights) {
        beyond += w * poisson_upper_tail(lam, n_th);
        at_last += w * ln_poisson(n_th, lam, lf[n_th]).exp();
    }
    probs[n_th] = at_last + beyond;
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    ResidualPmf::from_probs(probs, beyond)
}

/// Mean residual count without truncation.
pub fn untruncated_mean(cell: &CellParams, seg: f64) -> Result<f64> {
    Ok(tilde_lambdas(cell, seg)?
        .iter()
        .zip(cell.arrivals.probs())
        .map(|(l, p)| l * p)
        .sum())
}

/// Smallest `N` whose Poisson tails beyond `N` all fall below [`TAIL_TOLERANCE`], doubled.
/// Mixture components with zero weight are ignored.
pub fn default_n_th(cell: &CellParams, seg: f64) -> Result<usize> {
    let lambdas: Vec<f64> = tilde_lambdas(cell, seg)?
        .into_iter()
        .zip(cell.arrivals.probs())
        .filter(|(_, &p)| p > 0.0)
        .map(|(l, _)| l)
        .collect();
    let mut n = 0usize;
    while lambdas
        .iter()
        .any(|&l| poisson_upper_tail(l, n) >= TAIL_TOLERANCE)
    {
        n += 1;
    }
    Ok((2 * n).max(1))
}

/// Largest per-cell default so one truncation fits the whole cluster.
pub fn default_n_th_cluster(cells: &[CellParams], seg: f64) -> Result<usize> {
    cells
        .iter()
        .map(|c| default_n_th(c, seg))
        .try_fold(1, |acc, n| Ok(acc.max(n?)))
}

/// Arrivals of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentArrivals {
    /// Rate drawn from the mixture for this segment.
    pub rate: f64,
    pub count: usize,
    /// Arrival times relative to the segment start.
    pub epochs: Vec<f64>,
    pub stay_times: Vec<f64>,
}

/// Draw a rate from the mixture, a Poisson count, uniform epochs and exponential stays.
pub fn sample_segment<R: Rng + ?Sized>(cell: &CellParams, seg: f64, rng: &mut R) -> SegmentArrivals {
    let probs = cell.arrivals.probs();
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut j = probs.len() - 1;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            j = i;
            break;
        }
    }
    let rate = cell.arrivals.rates()[j];
    let mean = rate * seg;
    let count = if mean > 0.0 {
        Poisson::new(mean).expect("positive mean").sample(rng) as usize
    } else {
        0
    };
    let stay = Exp::new(cell.service_rate()).expect("positive service rate");
    let epochs = (0..count).map(|_| rng.random::<f64>() * seg).collect();
    let stay_times = (0..count).map(|_| stay.sample(rng)).collect();
    SegmentArrivals {
        rate,
        count,
        epochs,
        stay_times,
    }
}

/// Empirical distribution of boundary counts.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPmf {
    pub probs: Vec<f64>,
    pub segments: usize,
}

impl EmpiricalPmf {
    /// Lump counts above `n_th` into the last bin.
    pub fn folded(&self, n_th: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_th + 1];
        for (l, p) in self.probs.iter().enumerate() {
            out[l.min(n_th)] += p;
        }
        out
    }

    pub fn total_variation(&self, pmf: &ResidualPmf) -> f64 {
        total_variation(&self.folded(pmf.n_th()), pmf.probs())
    }
}

/// Half the L1 distance, padding the shorter vector with zeros.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    0.5 * (0..n)
        .map(|i| (a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// Segments simulated before counting starts, so the empty initial system does not bias the result.
const ORACLE_WARMUP: usize = 50;

/// Track every user through its stay and record how many remain at each
/// segment boundary, carryover from earlier segments included.
pub fn residual_oracle<R: Rng + ?Sized>(
    cell: &CellParams,
    seg: f64,
    segments: usize,
    rng: &mut R,
) -> Result<EmpiricalPmf> {
    if segments < 10_000 {
        return Err(Error::Domain(format!(
            "the oracle needs at least 10^4 segments, got {segments}"
        )));
    }
    let mut departures: Vec<f64> = Vec::new();
    let mut counts: Vec<u64> = Vec::new();
    for t in 0..segments + ORACLE_WARMUP {
        let start = t as f64 * seg;
        let end = start + seg;
        let arr = sample_segment(cell, seg, rng);
        departures.extend(
            arr.epochs
                .iter()
                .zip(&arr.stay_times)
                .map(|(e, s)| start + e + s),
        );
        departures.retain(|&d| d > end);
        if t >= ORACLE_WARMUP {
            let n = departures.len();
            if counts.len() <= n {
                counts.resize(n + 1, 0);
            }
            counts[n] += 1;
        }
    }
    Ok(EmpiricalPmf {
        probs: counts.iter().map(|&c| c as f64 / segments as f64).collect(),
        segments,
    })
}
