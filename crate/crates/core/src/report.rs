//! Number formatting, atomic CSV output and the summary table.

use std::fs;
use std::path::Path;

use crate::config::PolicyKind;
use crate::error::Result;
use crate::experiment::ExperimentReport;

/// 17 significant digits, so every value re-parses to the same `f64`. NaN prints as `NA`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "NA".to_string()
    } else {
        format!("{x:.16e}")
    }
}

/// Write a CSV to a temporary sibling and rename it into place.
pub fn write_csv_atomic(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(&tmp)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Relative tolerance for flagging the index policy as matching the optimal one.
pub const INDEX_MATCH_TOL: f64 = 0.01;

/// Aligned text table of every point and policy, followed by the check results.
pub fn report_summary(rep: &ExperimentReport) -> String {
    let mut rows: Vec<[String; 7]> = vec![[
        "point".into(),
        "policy".into(),
        "avg_cost".into(),
        "ci95".into(),
        "delta_%".into(),
        "runtime_s".into(),
        "note".into(),
    ]];
    let mut flags = Vec::new();
    for pt in &rep.points {
        for o in &pt.outcomes {
            let (avg, ci) = o.result.as_ref().map_or(("NA".into(), "NA".into()), |r| {
                (format!("{:.4}", r.avg_cost), format!("{:.4}", r.ci_halfwidth))
            });
            let delta = if o.delta.is_nan() { "NA".into() } else { format!("{:.3}", o.delta) };
            rows.push([
                pt.label.clone(),
                o.policy.name().into(),
                avg,
                ci,
                delta,
                format!("{:.2}", pt.runtime.as_secs_f64()),
                o.note.clone().unwrap_or_default(),
            ]);
        }
        if let (Some(opt), Some(idx)) = (pt.avg_cost(PolicyKind::Optimal), pt.avg_cost(PolicyKind::Index)) {
            let rel = (idx - opt).abs() / opt;
            let verdict = if rel <= INDEX_MATCH_TOL { "index within tolerance of optimal" } else { "index NOT within tolerance of optimal" };
            flags.push(format!("point {}: {verdict} ({:.4}%)", pt.label, rel * 100.0));
        }
    }
    let mut widths = [0usize; 7];
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = format!("experiment: {}\n", rep.kind.name());
    for r in &rows {
        let line: Vec<String> = r
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| if i < 2 || i == 6 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    for f in flags {
        out.push_str(&f);
        out.push('\n');
    }
    for c in &rep.checks {
        out.push_str(&format!("check {}: {} ({})\n", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail));
    }
    for f in &rep.files {
        out.push_str(&format!("wrote {}\n", f.display()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentKind;
    use crate::experiment::{PolicyOutcome, SweepPoint};
    use crate::sim::SimResult;
    use crate::cost::PowerBreakdown;
    use std::time::Duration;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 12345.678901234567, -2.5e-300, f64::MAX] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_num(f64::NAN), "NA");
        assert_eq!(fmt_num(f64::INFINITY).parse::<f64>().unwrap(), f64::INFINITY);
    }

    #[test]
    fn csv_is_lf_terminated_and_replaces_atomically() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_csv_atomic(&p, &["a", "b"], &[vec!["1".into(), "x,y".into()]]).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "a,b\n1,\"x,y\"\n");
        write_csv_atomic(&p, &["a"], &[]).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "a\n");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    fn outcome(p: PolicyKind, avg: f64) -> PolicyOutcome {
        PolicyOutcome {
            policy: p,
            result: Some(SimResult {
                policy: p.name().into(),
                avg_cost: avg,
                ci_halfwidth: 0.5,
                segments: 10,
                measured_segments: 10,
                composition: PowerBreakdown::default(),
                on_fraction: vec![1.0],
            }),
            delta: 1.0,
            note: None,
        }
    }

    #[test]
    fn summary_shape_and_flag() {
        let rep = ExperimentReport {
            kind: ExperimentKind::KSweep,
            points: vec![SweepPoint {
                label: "2".into(),
                value: 2.0,
                k: 2,
                lower_bound: 90.0,
                outcomes: vec![outcome(PolicyKind::Optimal, 100.0), outcome(PolicyKind::Index, 100.5)],
                runtime: Duration::from_millis(10),
            }],
            files: vec![],
            checks: vec![],
        };
        let s = report_summary(&rep);
        assert_eq!(s.lines().count(), 1 + 1 + 2 + 1);
        assert!(s.contains("index within tolerance of optimal"));
        let header = s.lines().nth(1).unwrap();
        let first = s.lines().nth(2).unwrap();
        assert_eq!(header.find("avg_cost").map(|i| i + 8), first.find("100.0000").map(|i| i + 8));
    }
}
