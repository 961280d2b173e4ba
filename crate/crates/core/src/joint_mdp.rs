//! Exact average-cost solution of the joint M-cell problem by relative value
//! iteration.
//!
//! Next-segment residual counts are drawn independently of the current state,
//! so the expected relative value after taking action `a` depends only on the
//! ON/OFF pattern of `a`. The solver iterates on that vector of `2^M`
//! continuation values instead of on the full state table. Starting from a
//! zero table, each sweep reproduces a synchronous full-state sweep exactly;
//! `h` and the policy for any state are recovered on demand.
//! [`naive_rvia`] is the direct full-state version used for cross-checks.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::arrivals::ResidualPmf;
use crate::cluster::Cluster;
use crate::cost::CellCostModel;
use crate::error::{Error, Result};
use crate::model::{ActionVector, CellState, ClusterState};

/// All ON/OFF vectors with at most `k` zeros, in lexicographic order (OFF before ON).
pub fn enumerate_actions(m: usize, k: usize) -> Vec<ActionVector> {
    (0..1usize << m)
        .map(|code| ActionVector::from_code(code, m))
        .filter(|a| a.off_count() <= k)
        .collect()
}

/// Dense index over joint states; cell 0 is the most significant digit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointStateIndex {
    m: usize,
    n_th: usize,
}

impl JointStateIndex {
    pub fn new(m: usize, n_th: usize) -> Self {
        JointStateIndex { m, n_th }
    }

    fn base(&self) -> usize {
        2 * (self.n_th + 1)
    }

    /// `(2 (n_th + 1))^M`, saturating.
    pub fn size(&self) -> u128 {
        (self.base() as u128).saturating_pow(self.m as u32)
    }

    pub fn encode(&self, state: &[CellState]) -> usize {
        state.iter().fold(0, |acc, s| {
            acc * self.base() + s.prev_on as usize * (self.n_th + 1) + s.residual_users as usize
        })
    }

    pub fn decode(&self, mut index: usize) -> ClusterState {
        let mut out = vec![CellState::new(false, 0); self.m];
        for slot in out.iter_mut().rev() {
            let d = index % self.base();
            index /= self.base();
            *slot = CellState::new(d > self.n_th, (d % (self.n_th + 1)) as u32);
        }
        out
    }
}

/// Probability of moving from `cur` to `next` under `act`.
pub fn transition_prob(
    next: &[CellState],
    _cur: &[CellState],
    act: &ActionVector,
    pmfs: &[ResidualPmf],
) -> f64 {
    let mut p = 1.0;
    for (i, s) in next.iter().enumerate() {
        if s.prev_on != act.is_on(i) {
            return 0.0;
        }
        p *= pmfs[i].prob(s.residual_users as usize);
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RviaOptions {
    /// Stop when the span of successive value differences drops below this.
    pub tolerance: f64,
    pub max_sweeps: usize,
    /// Largest problem the solver accepts, see [`solver_size`].
    pub budget: u128,
}

impl Default for RviaOptions {
    fn default() -> Self {
        RviaOptions {
            tolerance: 1e-8,
            max_sweeps: 100_000,
            budget: 10_000_000,
        }
    }
}

/// Work per sweep of the pattern solver: feasible patterns times `(n_th + 1)^(M-1)`.
pub fn solver_size(m: usize, k: usize, n_th: usize) -> u128 {
    let patterns = enumerate_actions(m, k).len() as u128;
    patterns.saturating_mul(((n_th + 1) as u128).saturating_pow(m.saturating_sub(1) as u32))
}

/// Converged joint solution.
#[derive(Debug, Clone)]
pub struct SolvedMdp {
    gain: f64,
    /// Expected relative value after each action pattern, indexed by pattern code.
    continuation: Vec<f64>,
    /// Feasible actions in tie-break preference order.
    preference: Vec<ActionVector>,
    models: Vec<CellCostModel>,
    k: usize,
    sweeps: usize,
    residual: f64,
}

fn preference_order(m: usize, k: usize) -> Vec<ActionVector> {
    let mut acts = enumerate_actions(m, k);
    acts.sort_by(|a, b| b.off_count().cmp(&a.off_count()).then(a.code().cmp(&b.code())));
    acts
}

impl SolvedMdp {
    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn m(&self) -> usize {
        self.models.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_th(&self) -> usize {
        self.models[0].n_th()
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    /// Span of the last value update.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Expected relative value of the next state after pattern `code`; infinite if infeasible.
    pub fn continuation(&self, code: usize) -> f64 {
        self.continuation[code]
    }

    pub fn q_value(&self, state: &[CellState], action: &ActionVector) -> f64 {
        let c: f64 = state
            .iter()
            .zip(&self.models)
            .enumerate()
            .map(|(i, (s, m))| m.cost_state(*s, action.is_on(i)))
            .sum();
        c + self.continuation[action.code()]
    }

    /// Minimizing action: more OFF cells first, then lexicographically smallest.
    pub fn action(&self, state: &[CellState]) -> ActionVector {
        let q: Vec<f64> = self.preference.iter().map(|a| self.q_value(state, a)).collect();
        let best = q.iter().copied().fold(f64::INFINITY, f64::min);
        let tol = 1e-9 * best.abs().max(1.0);
        let i = q.iter().position(|&v| v <= best + tol).expect("at least one action");
        self.preference[i].clone()
    }

    /// Relative value of a state; zero at all cells `(ON, 0)`.
    pub fn h(&self, state: &[CellState]) -> f64 {
        let best = self
            .preference
            .iter()
            .map(|a| self.q_value(state, a))
            .fold(f64::INFINITY, f64::min);
        best - self.gain - self.reference_offset()
    }

    fn reference_offset(&self) -> f64 {
        let r = vec![CellState::new(true, 0); self.m()];
        let best = self
            .preference
            .iter()
            .map(|a| self.q_value(&r, a))
            .fold(f64::INFINITY, f64::min);
        best - self.gain
    }

    /// Dense `h` and policy-code tables over [`JointStateIndex`], for small instances.
    pub fn tables(&self, budget: u128) -> Result<(Vec<f64>, Vec<usize>)> {
        let idx = JointStateIndex::new(self.m(), self.n_th());
        if idx.size() > budget {
            return Err(Error::Capacity {
                size: idx.size(),
                budget,
            });
        }
        let n = idx.size() as usize;
        let mut h = Vec::with_capacity(n);
        let mut policy = Vec::with_capacity(n);
        let offset = self.reference_offset();
        for i in 0..n {
            let s = idx.decode(i);
            let q: Vec<f64> = self.preference.iter().map(|a| self.q_value(&s, a)).collect();
            let best = q.iter().copied().fold(f64::INFINITY, f64::min);
            h.push(best - self.gain - offset);
            policy.push(self.action(&s).code());
        }
        Ok((h, policy))
    }
}

const DUMP_MAGIC: &[u8; 8] = b"GNBSOLVE";
const DUMP_VERSION: u32 = 1;

impl SolvedMdp {
    /// Write the gain and continuation vector, keyed by the cluster's config hash.
    pub fn dump(&self, path: &Path, config_hash: &[u8; 32]) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(DUMP_MAGIC);
        buf.extend_from_slice(&DUMP_VERSION.to_le_bytes());
        for v in [self.m(), self.k, self.n_th()] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
        buf.extend_from_slice(config_hash);
        buf.extend_from_slice(&self.gain.to_le_bytes());
        buf.extend_from_slice(&(self.sweeps as u64).to_le_bytes());
        buf.extend_from_slice(&self.residual.to_le_bytes());
        buf.extend_from_slice(&(self.continuation.len() as u32).to_le_bytes());
        for w in &self.continuation {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        let tmp = path.with_extension("tmp");
        fs::File::create(&tmp)?.write_all(&buf)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    /// Read a dump written for the same cluster; the hash must match.
    pub fn load(path: &Path, cluster: &Cluster, config_hash: &[u8; 32]) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut r = Reader { bytes: &bytes, pos: 0 };
        if r.take(8)? != DUMP_MAGIC {
            return Err(Error::Dump("bad magic".into()));
        }
        let version = r.u32()?;
        if version != DUMP_VERSION {
            return Err(Error::Dump(format!("unsupported version {version}")));
        }
        let (m, k, n_th) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        if (m, k, n_th) != (cluster.m(), cluster.k(), cluster.n_th()) {
            return Err(Error::Dump("dimensions do not match the cluster".into()));
        }
        if r.take(32)? != config_hash {
            return Err(Error::Dump("config hash mismatch".into()));
        }
        let gain = r.f64()?;
        let sweeps = r.u64()? as usize;
        let residual = r.f64()?;
        let len = r.u32()? as usize;
        if len != 1 << m {
            return Err(Error::Dump(format!("expected {} values, found {len}", 1 << m)));
        }
        let continuation = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        if r.pos != bytes.len() {
            return Err(Error::Dump("trailing bytes".into()));
        }
        Ok(SolvedMdp {
            gain,
            continuation,
            preference: preference_order(m, k),
            models: cluster.models().to_vec(),
            k,
            sweeps,
            residual,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Dump("truncated file".into()))?;
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Per-cell data for one sweep: cost of ON minus cost of OFF, by previous state.
struct CellSweepData<'a> {
    pmf: &'a [f64],
    /// `diff[prev_on][n]`
    diff: [Vec<f64>; 2],
    /// `diff` sorted ascending with cumulative probability and cumulative `p * diff`.
    sorted: [SortedDiff; 2],
}

struct SortedDiff {
    values: Vec<f64>,
    cum_p: Vec<f64>,
    cum_pd: Vec<f64>,
}

impl SortedDiff {
    fn new(diff: &[f64], pmf: &[f64]) -> Self {
        let mut pairs: Vec<(f64, f64)> = diff.iter().copied().zip(pmf.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut cum_p = vec![0.0];
        let mut cum_pd = vec![0.0];
        for (d, p) in &pairs {
            cum_p.push(cum_p.last().unwrap() + p);
            cum_pd.push(cum_pd.last().unwrap() + p * d);
        }
        SortedDiff {
            values: pairs.iter().map(|x| x.0).collect(),
            cum_p,
            cum_pd,
        }
    }

    /// `E[min(0, delta + D)]`.
    #[inline]
    fn expected_neg_part(&self, delta: f64) -> f64 {
        let k = self.values.partition_point(|&d| d < -delta);
        delta * self.cum_p[k] + self.cum_pd[k]
    }

    fn mean(&self) -> f64 {
        *self.cum_pd.last().unwrap()
    }
}

struct PatternSweeper<'a> {
    m: usize,
    k: usize,
    cells: Vec<CellSweepData<'a>>,
    actions: Vec<usize>,
    /// `on[level][j]`: whether action `j` has cell `level` on.
    on: Vec<Vec<bool>>,
    off_mean: f64,
}

impl<'a> PatternSweeper<'a> {
    fn new(cluster: &'a Cluster) -> Self {
        let m = cluster.m();
        let k = cluster.k();
        let actions: Vec<usize> = enumerate_actions(m, k).iter().map(|a| a.code()).collect();
        let on = (0..m)
            .map(|i| actions.iter().map(|&c| (c >> (m - 1 - i)) & 1 == 1).collect())
            .collect();
        let mut off_mean = 0.0;
        let cells = (0..m)
            .map(|i| {
                let model = cluster.model(i);
                let pmf = cluster.pmf(i).probs();
                off_mean += pmf
                    .iter()
                    .zip(model.cost_row(true, false))
                    .map(|(p, c)| p * c)
                    .sum::<f64>();
                let diff = [false, true].map(|prev| {
                    model
                        .cost_row(prev, true)
                        .iter()
                        .zip(model.cost_row(prev, false))
                        .map(|(a, b)| a - b)
                        .collect::<Vec<f64>>()
                });
                let sorted = [SortedDiff::new(&diff[0], pmf), SortedDiff::new(&diff[1], pmf)];
                CellSweepData { pmf, diff, sorted }
            })
            .collect();
        PatternSweeper {
            m,
            k,
            cells,
            actions,
            on,
            off_mean,
        }
    }

    /// `T(b) = E[min_a (C((b, n), a) + W(a))]` for every feasible pattern `b`.
    fn sweep(&self, w: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let base: Vec<f64> = self.actions.iter().map(|&c| w[c]).collect();
        let mut bufs = vec![vec![0.0; self.actions.len()]; self.m];
        bufs[0].copy_from_slice(&base);
        self.descend(0, 0, 0, 1.0, &mut bufs, out);
        for &c in &self.actions {
            out[c] += self.off_mean;
        }
    }

    fn descend(
        &self,
        level: usize,
        prefix: usize,
        zeros: usize,
        weight: f64,
        bufs: &mut [Vec<f64>],
        out: &mut [f64],
    ) {
        let last = self.m - 1;
        if level == last {
            let partial = &bufs[level];
            let mut a0 = f64::INFINITY;
            let mut a1 = f64::INFINITY;
            for (j, &v) in partial.iter().enumerate() {
                if self.on[last][j] {
                    a1 = a1.min(v);
                } else {
                    a0 = a0.min(v);
                }
            }
            for bit in 0..2 {
                if bit == 0 && zeros + 1 > self.k {
                    continue;
                }
                let sd = &self.cells[last].sorted[bit];
                let v = if a0.is_finite() {
                    a0 + sd.expected_neg_part(a1 - a0)
                } else {
                    a1 + sd.mean()
                };
                out[(prefix << 1) | bit] += weight * v;
            }
            return;
        }
        let cell = &self.cells[level];
        for bit in 0..2 {
            let z = zeros + (bit == 0) as usize;
            if z > self.k {
                continue;
            }
            for (n, &p) in cell.pmf.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let d = cell.diff[bit][n];
                {
                    let (head, tail) = bufs.split_at_mut(level + 1);
                    let cur = &head[level];
                    for (j, slot) in tail[0].iter_mut().enumerate() {
                        *slot = if self.on[level][j] { cur[j] + d } else { cur[j] };
                    }
                }
                self.descend(level + 1, (prefix << 1) | bit, z, weight * p, bufs, out);
            }
        }
    }
}

/// Solve with default options.
pub fn rvia_solve(cluster: &Cluster) -> Result<SolvedMdp> {
    rvia_solve_with(cluster, &RviaOptions::default())
}

pub fn rvia_solve_with(cluster: &Cluster, opts: &RviaOptions) -> Result<SolvedMdp> {
    let (m, k) = (cluster.m(), cluster.k());
    let size = solver_size(m, k, cluster.n_th());
    if size > opts.budget {
        return Err(Error::Capacity {
            size,
            budget: opts.budget,
        });
    }
    let sweeper = PatternSweeper::new(cluster);
    let codes = sweeper.actions.clone();
    let reference = vec![CellState::new(true, 0); m];
    let ref_costs: Vec<f64> = codes
        .iter()
        .map(|&c| cluster.cost(&reference, &ActionVector::from_code(c, m)))
        .collect();

    let mut w = vec![f64::INFINITY; 1 << m];
    for &c in &codes {
        w[c] = 0.0;
    }
    let mut t = vec![0.0; 1 << m];
    let mut residual = f64::INFINITY;
    for sweep in 1..=opts.max_sweeps {
        let g = codes
            .iter()
            .zip(&ref_costs)
            .map(|(&c, rc)| rc + w[c])
            .fold(f64::INFINITY, f64::min);
        sweeper.sweep(&w, &mut t);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &c in &codes {
            let next = t[c] - g;
            let d = next - w[c];
            lo = lo.min(d);
            hi = hi.max(d);
            w[c] = next;
        }
        residual = hi - lo;
        if !residual.is_finite() {
            return Err(Error::NonConvergence {
                iterations: sweep,
                residual,
            });
        }
        if residual < opts.tolerance {
            let gain = codes
                .iter()
                .zip(&ref_costs)
                .map(|(&c, rc)| rc + w[c])
                .fold(f64::INFINITY, f64::min);
            return Ok(SolvedMdp {
                gain,
                continuation: w,
                preference: preference_order(m, k),
                models: cluster.models().to_vec(),
                k,
                sweeps: sweep,
                residual,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_sweeps,
        residual,
    })
}

/// Full-state RVIA result.
#[derive(Debug, Clone)]
pub struct NaiveSolution {
    pub gain: f64,
    /// Relative values in [`JointStateIndex`] order.
    pub h: Vec<f64>,
    /// Chosen action code per state.
    pub policy: Vec<usize>,
    pub sweeps: usize,
}

/// Textbook RVIA over every state, action and successor. Only for tiny instances.
pub fn naive_rvia(cluster: &Cluster, opts: &RviaOptions) -> Result<NaiveSolution> {
    let (m, k) = (cluster.m(), cluster.k());
    let idx = JointStateIndex::new(m, cluster.n_th());
    if idx.size() > opts.budget {
        return Err(Error::Capacity {
            size: idx.size(),
            budget: opts.budget,
        });
    }
    let n = idx.size() as usize;
    let states: Vec<ClusterState> = (0..n).map(|i| idx.decode(i)).collect();
    let actions = preference_order(m, k);
    let ref_index = idx.encode(&vec![CellState::new(true, 0); m]);
    let mut h = vec![0.0; n];
    let mut next_h = vec![0.0; n];
    let mut policy = vec![0usize; n];
    let mut residual = f64::INFINITY;
    for sweep in 1..=opts.max_sweeps {
        for (si, s) in states.iter().enumerate() {
            let mut best = f64::INFINITY;
            let mut best_code = 0;
            for a in &actions {
                let mut cont = 0.0;
                for (ti, t) in states.iter().enumerate() {
                    let p = transition_prob(t, s, a, cluster.pmfs());
                    if p > 0.0 {
                        cont += p * h[ti];
                    }
                }
                let q = cluster.cost(s, a) + cont;
                if best.is_infinite() || q < best - 1e-9 * best.abs().max(1.0) {
                    best = q;
                    best_code = a.code();
                }
            }
            next_h[si] = best;
            policy[si] = best_code;
        }
        let g = next_h[ref_index];
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            let v = next_h[i] - g;
            let d = v - h[i];
            lo = lo.min(d);
            hi = hi.max(d);
            h[i] = v;
        }
        residual = hi - lo;
        if residual < opts.tolerance {
            return Ok(NaiveSolution {
                gain: g,
                h,
                policy,
                sweeps: sweep,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_sweeps,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ClusterConfig, CostFunction, PowerParams};
    use proptest::prelude::*;

    fn small(m: usize, k: usize, f: CostFunction, n_th: usize, p_switch: f64) -> Cluster {
        let mut cfg = ClusterConfig::standard(m, k, 3, f).unwrap();
        cfg.n_th = n_th;
        cfg.power = PowerParams::new(85.0, p_switch, 1.0, 5.0).unwrap();
        Cluster::new(cfg).unwrap()
    }

    #[test]
    fn action_counts() {
        assert_eq!(enumerate_actions(4, 0).len(), 1);
        assert_eq!(enumerate_actions(4, 4).len(), 16);
        assert_eq!(enumerate_actions(4, 2).len(), 11);
        assert_eq!(enumerate_actions(4, 0)[0], ActionVector::all_on(4));
        let acts = enumerate_actions(3, 3);
        assert_eq!(acts[0].as_slice(), &[false, false, false]);
        assert_eq!(acts[1].as_slice(), &[false, false, true]);
        assert!(acts.windows(2).all(|w| w[0].as_slice() < w[1].as_slice()));
    }

    #[test]
    fn state_index_round_trip() {
        let idx = JointStateIndex::new(3, 4);
        assert_eq!(idx.size(), 1000);
        for i in 0..1000 {
            assert_eq!(idx.encode(&idx.decode(i)), i);
        }
    }

    #[test]
    fn transition_examples() {
        let c = Cluster::new({
            let mut cfg = ClusterConfig::standard(1, 1, 1, CostFunction::Linear).unwrap();
            cfg.n_th = 64;
            cfg
        })
        .unwrap();
        let cur = vec![CellState::new(true, 3)];
        let on = ActionVector::all_on(1);
        let p = transition_prob(&[CellState::new(true, 0)], &cur, &on, c.pmfs());
        assert!((p - 0.00772).abs() < 1e-5);
        assert_eq!(transition_prob(&[CellState::new(false, 0)], &cur, &on, c.pmfs()), 0.0);

        let c2 = small(2, 2, CostFunction::Linear, 6, 40.0);
        let idx = JointStateIndex::new(2, 6);
        let cur = vec![CellState::new(true, 1), CellState::new(false, 5)];
        for a in enumerate_actions(2, 2) {
            let total: f64 = (0..idx.size() as usize)
                .map(|i| transition_prob(&idx.decode(i), &cur, &a, c2.pmfs()))
                .sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_action_gain_is_c11() {
        let c = small(1, 0, CostFunction::Quadratic, 64, 40.0);
        let s = rvia_solve(&c).unwrap();
        let c11 = c.anticipated_costs()[0].c11;
        assert!((s.gain() - c11).abs() < 1e-9 * c11);
        assert!(s.action(&[CellState::new(false, 0)]).is_on(0));
    }

    #[test]
    fn free_switching_gives_threshold_policy() {
        let c = small(1, 1, CostFunction::Linear, 64, 0.0);
        let s = rvia_solve(&c).unwrap();
        for prev in [true, false] {
            for n in 0..=64u32 {
                let off = !s.action(&[CellState::new(prev, n)]).is_on(0);
                assert_eq!(off, n as f64 <= 3.25, "prev {prev} n {n}");
            }
        }
    }

    #[test]
    fn uncoupled_gain_is_additive() {
        for f in [CostFunction::Linear, CostFunction::Quadratic] {
            let one = rvia_solve(&small(1, 1, f.clone(), 40, 40.0)).unwrap();
            let two = rvia_solve(&small(2, 2, f.clone(), 40, 40.0)).unwrap();
            let rel = (two.gain() - 2.0 * one.gain()).abs() / two.gain();
            assert!(rel < 1e-9, "{} vs {}", two.gain(), one.gain());
        }
    }

    #[test]
    fn pattern_solver_matches_naive() {
        let opts = RviaOptions {
            tolerance: 1e-10,
            ..Default::default()
        };
        for (m, k) in [(1, 0), (1, 1), (2, 0), (2, 1), (2, 2)] {
            for f in [CostFunction::Linear, CostFunction::Quadratic] {
                let c = small(m, k, f.clone(), 10, 40.0);
                let fast = rvia_solve_with(&c, &opts).unwrap();
                let slow = naive_rvia(&c, &opts).unwrap();
                let tol = 1e-9 * slow.gain.abs().max(1.0);
                assert!((fast.gain() - slow.gain).abs() < tol, "m {m} k {k} {f:?}");
                let (h, policy) = fast.tables(1 << 20).unwrap();
                for i in 0..h.len() {
                    assert!((h[i] - slow.h[i]).abs() < 1e-6 * slow.gain.abs().max(1.0));
                    let _ = policy[i];
                }
            }
        }
    }

    #[test]
    fn reference_state_has_zero_value() {
        let c = small(2, 1, CostFunction::Quadratic, 20, 40.0);
        let s = rvia_solve(&c).unwrap();
        let r = vec![CellState::new(true, 0); 2];
        assert!(s.h(&r).abs() < 1e-9);
        let (_, policy) = s.tables(1 << 20).unwrap();
        assert!(policy.iter().all(|&code| ActionVector::from_code(code, 2).off_count() <= 1));
    }

    #[test]
    fn gain_non_increasing_in_k() {
        for m in 2..=3 {
            let mut prev = f64::INFINITY;
            for k in 0..=m {
                let g = rvia_solve(&small(m, k, CostFunction::Quadratic, 24, 40.0))
                    .unwrap()
                    .gain();
                assert!(g <= prev + 1e-9 * g, "m {m} k {k}");
                prev = g;
            }
        }
    }

    #[test]
    fn capacity_is_enforced() {
        let c = small(4, 4, CostFunction::Linear, 64, 40.0);
        let opts = RviaOptions {
            budget: 1000,
            ..Default::default()
        };
        assert!(matches!(rvia_solve_with(&c, &opts), Err(Error::Capacity { .. })));
        assert!(solver_size(5, 5, 64) > 10_000_000);
        assert!(solver_size(4, 4, 64) <= 10_000_000);
    }

    #[test]
    fn dump_round_trip() {
        let c = small(2, 1, CostFunction::Linear, 12, 40.0);
        let s = rvia_solve(&c).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sol.bin");
        let hash = [7u8; 32];
        s.dump(&path, &hash).unwrap();
        let back = SolvedMdp::load(&path, &c, &hash).unwrap();
        assert_eq!(back.gain(), s.gain());
        for code in 0..4 {
            assert_eq!(back.continuation(code).to_bits(), s.continuation(code).to_bits());
        }
        assert!(SolvedMdp::load(&path, &c, &[0u8; 32]).is_err());
        let other = small(2, 2, CostFunction::Linear, 12, 40.0);
        assert!(SolvedMdp::load(&path, &other, &hash).is_err());
        std::fs::write(&path, b"garbage").unwrap();
        assert!(SolvedMdp::load(&path, &c, &hash).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn pattern_and_naive_gains_agree(
            k in 0usize..=2,
            sw in 0.0f64..80.0,
            stat in 20.0f64..150.0,
            quad in any::<bool>(),
        ) {
            let f = if quad { CostFunction::Quadratic } else { CostFunction::Linear };
            let mut cfg = ClusterConfig::standard(2, k, 5, f).unwrap();
            cfg.n_th = 6;
            cfg.power = PowerParams::new(stat, sw, 1.0, 5.0).unwrap();
            let c = Cluster::new(cfg).unwrap();
            let opts = RviaOptions { tolerance: 1e-10, ..Default::default() };
            let fast = rvia_solve_with(&c, &opts).unwrap();
            let slow = naive_rvia(&c, &opts).unwrap();
            prop_assert!((fast.gain() - slow.gain).abs() < 1e-9 * slow.gain.abs().max(1.0));
        }
    }
}
