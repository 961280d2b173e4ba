//! Text configuration files.
//!
//! The format is line-oriented `key = value` pairs grouped under `[section]`
//! headers, with `#` comments and comma-separated lists:
//!
//! ```text
//! [cluster]
//! cells = 4
//! max_off = 2
//! n_th = auto
//!
//! [cost]
//! function = quadratic
//!
//! [arrivals]
//! set = 3
//!
//! [cell.0]
//! rates = 0.01
//! probs = 1
//! ```
//!
//! Anything left out takes the standard parameter values. Unknown sections
//! and keys are rejected with their line number.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::arrivals::default_n_th_cluster;
use crate::error::{Error, Result};
use crate::model::{
    ArrivalMixture, CellParams, ClusterConfig, CostFunction, PiecewiseLinear, PiecewiseSegment, PowerParams,
    DEFAULT_MEAN_SERVICE_TIME, DEFAULT_SEGMENT_DURATION,
};
use crate::report::fmt_num;

pub const DEFAULT_SEGMENTS: u64 = 100_000;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    Optimal,
    Index,
    Greedy,
    Uniform,
    RoundRobin,
    AlwaysOn,
    AlwaysOff,
}

impl PolicyKind {
    /// The five policies compared in the sweeps.
    pub const STANDARD: [PolicyKind; 5] = [
        PolicyKind::Optimal,
        PolicyKind::Index,
        PolicyKind::Greedy,
        PolicyKind::Uniform,
        PolicyKind::RoundRobin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Optimal => "optimal",
            PolicyKind::Index => "index",
            PolicyKind::Greedy => "greedy",
            PolicyKind::Uniform => "uniform",
            PolicyKind::RoundRobin => "round-robin",
            PolicyKind::AlwaysOn => "always-on",
            PolicyKind::AlwaysOff => "always-off",
        }
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "optimal" => PolicyKind::Optimal,
            "index" => PolicyKind::Index,
            "greedy" => PolicyKind::Greedy,
            "uniform" => PolicyKind::Uniform,
            "round-robin" | "roundrobin" => PolicyKind::RoundRobin,
            "always-on" => PolicyKind::AlwaysOn,
            "always-off" => PolicyKind::AlwaysOff,
            _ => return Err(format!("unknown policy `{s}`")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Gap to the lower bound for every policy as K varies.
    KSweep,
    /// Per-segment greedy decisions with the thresholds.
    GreedyTrace,
    /// Policy gaps under each standard arrival set.
    ArrivalSets,
    /// Policy gaps as the switching power varies.
    SwitchSweep,
    /// Average power split into its parts, per policy.
    Composition,
    /// Closed-form uniform and round-robin costs against simulation.
    BaselineCompare,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::KSweep => "k-sweep",
            ExperimentKind::GreedyTrace => "greedy-trace",
            ExperimentKind::ArrivalSets => "arrival-sets",
            ExperimentKind::SwitchSweep => "switch-sweep",
            ExperimentKind::Composition => "composition",
            ExperimentKind::BaselineCompare => "baseline-compare",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "k-sweep" => ExperimentKind::KSweep,
            "greedy-trace" => ExperimentKind::GreedyTrace,
            "arrival-sets" => ExperimentKind::ArrivalSets,
            "switch-sweep" => ExperimentKind::SwitchSweep,
            "composition" => ExperimentKind::Composition,
            "baseline-compare" => ExperimentKind::BaselineCompare,
            _ => return Err(format!("unknown experiment kind `{s}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// Defaults to `0..=M`.
    pub k_values: Vec<usize>,
    pub policies: Vec<PolicyKind>,
    pub segments: u64,
    pub seed: u64,
    pub p_switch_values: Vec<f64>,
    pub arrival_sets: Vec<usize>,
}

impl ExperimentSpec {
    pub fn default_for(m: usize) -> Self {
        ExperimentSpec {
            kind: ExperimentKind::KSweep,
            k_values: (0..=m).collect(),
            policies: PolicyKind::STANDARD.to_vec(),
            segments: DEFAULT_SEGMENTS,
            seed: DEFAULT_SEED,
            p_switch_values: vec![40.0, 20.0, 10.0, 0.0],
            arrival_sets: (1..=5).collect(),
        }
    }
}

/// A parsed and validated configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub cluster: ClusterConfig,
    /// True when `n_th` was left to the tail rule; sweeps that change arrivals recompute it.
    pub n_th_auto: bool,
    pub experiment: ExperimentSpec,
}

impl LoadedConfig {
    /// Standard parameters for `m` cells on arrival set 3.
    pub fn standard(m: usize, k: usize, f: CostFunction) -> Result<Self> {
        Ok(LoadedConfig {
            cluster: ClusterConfig::standard(m, k, 3, f)?,
            n_th_auto: true,
            experiment: ExperimentSpec::default_for(m),
        })
    }
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

struct Section {
    line: usize,
    entries: BTreeMap<String, Entry>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            (e.value.clone(), e.line)
        })
    }

    fn get<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v.parse::<T>().map(Some).map_err(|_| Error::Config {
                line,
                message: format!("cannot parse `{key}` value `{v}`"),
            }),
        }
    }

    fn get_num(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => parse_number(&v)
                .map(Some)
                .ok_or_else(|| Error::Config { line, message: format!("`{key}`: `{v}` is not a number") }),
        }
    }

    fn get_list<T>(&mut self, key: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Option<Vec<T>>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(',')
                .map(|item| {
                    let item = item.trim();
                    parse(item).ok_or_else(|| Error::Config {
                        line,
                        message: format!("`{key}`: cannot parse list item `{item}`"),
                    })
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    fn reject_unused(&self, name: &str) -> Result<()> {
        match self.entries.iter().filter(|(_, e)| !e.used).min_by_key(|(_, e)| e.line) {
            Some((k, e)) => Err(Error::Config {
                line: e.line,
                message: format!("unknown key `{k}` in [{name}]"),
            }),
            None => Ok(()),
        }
    }
}

/// Decimal number, `inf`, or a fraction `a/b`.
fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let (a, b) = (a.trim().parse::<f64>().ok()?, b.trim().parse::<f64>().ok()?);
        return (b != 0.0).then(|| a / b);
    }
    s.parse::<f64>().ok()
}

fn tokenize(text: &str) -> Result<BTreeMap<String, Section>> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        if let Some(rest) = s.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::Config { line, message: "unterminated section header".into() })?
                .trim()
                .to_string();
            if sections.contains_key(&name) {
                return Err(Error::Config { line, message: format!("duplicate section [{name}]") });
            }
            sections.insert(name.clone(), Section { line, entries: BTreeMap::new() });
            current = Some(name);
            continue;
        }
        let Some((k, v)) = s.split_once('=') else {
            return Err(Error::Config { line, message: format!("expected `key = value`, got `{s}`") });
        };
        let Some(sec) = current.as_ref() else {
            return Err(Error::Config { line, message: "key outside of any section".into() });
        };
        let key = k.trim().to_string();
        let entries = &mut sections.get_mut(sec).expect("section exists").entries;
        if entries.contains_key(&key) {
            return Err(Error::Config { line, message: format!("duplicate key `{key}`") });
        }
        entries.insert(
            key,
            Entry {
                value: v.trim().to_string(),
                line,
                used: false,
            },
        );
    }
    Ok(sections)
}

/// Arrival description from a `[arrivals]` or `[cell.N]` section, layered over `base`.
fn read_cell(sec: &mut Section, base: &CellParams) -> Result<CellParams> {
    let set: Option<usize> = sec.get("set")?;
    let rates = sec.get_list("rates", parse_number)?;
    let probs = sec.get_list("probs", parse_number)?;
    let service = sec.get_num("mean_service_time")?.unwrap_or(base.mean_service_time);
    let arrivals = match (set, rates, probs) {
        (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
            return Err(Error::Config {
                line: sec.line,
                message: "give either `set` or `rates`/`probs`, not both".into(),
            })
        }
        (Some(s), None, None) => ArrivalMixture::table_set(s)?,
        (None, Some(r), Some(p)) => ArrivalMixture::new(r, p)?,
        (None, Some(r), None) if r.len() == 1 => ArrivalMixture::single(r[0])?,
        (None, Some(_), None) | (None, None, Some(_)) => {
            return Err(Error::Config {
                line: sec.line,
                message: "`rates` and `probs` must be given together".into(),
            })
        }
        (None, None, None) => base.arrivals.clone(),
    };
    CellParams::new(arrivals, service)
}

fn parse_segment(s: &str) -> Option<PiecewiseSegment> {
    let mut it = s.split(':');
    let upper = parse_number(it.next()?)?;
    let slope = parse_number(it.next()?)?;
    let intercept = parse_number(it.next()?)?;
    it.next().is_none().then_some(PiecewiseSegment { upper, slope, intercept })
}

pub fn parse_config(text: &str) -> Result<LoadedConfig> {
    let mut sections = tokenize(text)?;
    for (name, sec) in &sections {
        let known = matches!(name.as_str(), "cluster" | "power" | "cost" | "arrivals" | "experiment")
            || name.strip_prefix("cell.").is_some_and(|i| i.parse::<usize>().is_ok());
        if !known {
            return Err(Error::Config { line: sec.line, message: format!("unknown section [{name}]") });
        }
    }
    let mut empty = || Section { line: 0, entries: BTreeMap::new() };

    let mut cl = sections.remove("cluster").unwrap_or_else(&mut empty);
    let m: usize = cl.get("cells")?.unwrap_or(4);
    let k: usize = cl.get("max_off")?.unwrap_or(m.min(2));
    let seg = cl.get_num("segment_duration")?.unwrap_or(DEFAULT_SEGMENT_DURATION);
    let n_th_fixed = match cl.take("n_th") {
        None => None,
        Some((v, _)) if v == "auto" => None,
        Some((v, line)) => Some(v.parse::<usize>().map_err(|_| Error::Config {
            line,
            message: format!("`n_th` must be `auto` or a positive integer, got `{v}`"),
        })?),
    };
    cl.reject_unused("cluster")?;

    let mut pw = sections.remove("power").unwrap_or_else(&mut empty);
    let d = PowerParams::standard();
    let power = PowerParams::new(
        pw.get_num("static")?.unwrap_or(d.p_static),
        pw.get_num("switch")?.unwrap_or(d.p_switch),
        pw.get_num("dynamic")?.unwrap_or(d.p_d),
        pw.get_num("extra")?.unwrap_or(d.p_e),
    )?;
    pw.reject_unused("power")?;

    let mut cs = sections.remove("cost").unwrap_or_else(&mut empty);
    let fname = cs.take("function");
    let pieces = cs.get_list("segments", parse_segment)?;
    let cost_fn = match fname.as_ref().map(|(v, l)| (v.as_str(), *l)) {
        None | Some(("quadratic", _)) => CostFunction::Quadratic,
        Some(("linear", _)) => CostFunction::Linear,
        Some(("piecewise", _)) => CostFunction::PiecewiseLinear(match pieces.clone() {
            Some(p) => PiecewiseLinear::new(p)?,
            None => PiecewiseLinear::standard(),
        }),
        Some((other, line)) => {
            return Err(Error::Config { line, message: format!("unknown cost function `{other}`") })
        }
    };
    if pieces.is_some() && !matches!(cost_fn, CostFunction::PiecewiseLinear(_)) {
        let line = cs.entries["segments"].line;
        return Err(Error::Config { line, message: "`segments` requires `function = piecewise`".into() });
    }
    cs.reject_unused("cost")?;

    let default_cell = CellParams::new(ArrivalMixture::table_set(3)?, DEFAULT_MEAN_SERVICE_TIME)?;
    let mut ar = sections.remove("arrivals").unwrap_or_else(&mut empty);
    let base = read_cell(&mut ar, &default_cell)?;
    ar.reject_unused("arrivals")?;

    let mut cells = vec![base.clone(); m];
    let cell_keys: Vec<String> = sections.keys().filter(|n| n.starts_with("cell.")).cloned().collect();
    for name in cell_keys {
        let mut sec = sections.remove(&name).expect("listed");
        let i: usize = name["cell.".len()..].parse().expect("checked above");
        if i >= m {
            return Err(Error::Config {
                line: sec.line,
                message: format!("[{name}] refers to a cell beyond the {m} configured"),
            });
        }
        cells[i] = read_cell(&mut sec, &base)?;
        sec.reject_unused(&name)?;
    }

    let n_th = match n_th_fixed {
        Some(n) => n,
        None => default_n_th_cluster(&cells, seg)?,
    };
    let cluster = ClusterConfig::new(cells, k, seg, power, cost_fn, n_th)?;

    let mut ex = sections.remove("experiment").unwrap_or_else(&mut empty);
    let mut spec = ExperimentSpec::default_for(m);
    if let Some((v, line)) = ex.take("kind") {
        spec.kind = v.parse().map_err(|message| Error::Config { line, message })?;
    }
    if let Some(v) = ex.get_list("k_values", |s| s.parse::<usize>().ok())? {
        if let Some(&bad) = v.iter().find(|&&k| k > m) {
            return Err(Error::param("k_values", format!("K = {bad} exceeds M = {m}")));
        }
        spec.k_values = v;
    }
    if let Some(v) = ex.get_list("policies", |s| s.parse::<PolicyKind>().ok())? {
        spec.policies = v;
    }
    if let Some(v) = ex.get("segments")? {
        spec.segments = v;
    }
    if let Some(v) = ex.get("seed")? {
        spec.seed = v;
    }
    if let Some(v) = ex.get_list("p_switch_values", parse_number)? {
        spec.p_switch_values = v;
    }
    if let Some(v) = ex.get_list("arrival_sets", |s| s.parse::<usize>().ok())? {
        spec.arrival_sets = v;
    }
    ex.reject_unused("experiment")?;
    if spec.segments == 0 {
        return Err(Error::param("segments", "must be >= 1"));
    }

    Ok(LoadedConfig {
        cluster,
        n_th_auto: n_th_fixed.is_none(),
        experiment: spec,
    })
}

/// Canonical text of a cluster configuration; two configs hash alike iff this matches.
pub fn canonical_cluster(c: &ClusterConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "cells={}\nmax_off={}\nsegment_duration={}", c.m_cells, c.k_max_off, fmt_num(c.segment_duration));
    let _ = writeln!(s, "n_th={}", c.n_th);
    let p = &c.power;
    let _ = writeln!(
        s,
        "power={},{},{},{}",
        fmt_num(p.p_static),
        fmt_num(p.p_switch),
        fmt_num(p.p_d),
        fmt_num(p.p_e)
    );
    let _ = write!(s, "cost={}", c.cost_fn.name());
    if let CostFunction::PiecewiseLinear(pl) = &c.cost_fn {
        for seg in pl.segments() {
            let _ = write!(s, ",{}:{}:{}", fmt_num(seg.upper), fmt_num(seg.slope), fmt_num(seg.intercept));
        }
    }
    s.push('\n');
    for (i, cell) in c.cells.iter().enumerate() {
        let join = |v: &[f64]| v.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(",");
        let _ = writeln!(
            s,
            "cell{i}={}|{}|{}",
            join(cell.arrivals.rates()),
            join(cell.arrivals.probs()),
            fmt_num(cell.mean_service_time)
        );
    }
    s
}

/// SHA-256 of [`canonical_cluster`].
pub fn config_hash(c: &ClusterConfig) -> [u8; 32] {
    Sha256::digest(canonical_cluster(c).as_bytes()).into()
}

pub fn hash_hex(h: &[u8; 32]) -> String {
    h.iter().map(|b| format!("{b:02x}")).collect()
}
