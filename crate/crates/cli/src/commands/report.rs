use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use anyhow::Context;
use evocache::engine::{miss_rate_reduction, SimResult};
use serde::Deserialize;

use super::{emit, fmt_f64};
use crate::args::{Metric, MrrArgs, ReportArgs};
use crate::table::Table;

/// The columns of a `simulate` results file that reports use.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct ResultRow {
    pub trace: String,
    pub policy: String,
    pub capacity: String,
    pub mode: String,
    pub requests: u64,
    pub hits: u64,
    pub misses: u64,
    pub object_hit_rate: f64,
    pub byte_hit_rate: f64,
}

impl ResultRow {
    /// Trace, capacity and mode identify one instance.
    fn instance(&self) -> (String, String, String) {
        (self.trace.clone(), self.capacity.clone(), self.mode.clone())
    }

    fn metric(&self, m: Metric) -> f64 {
        match m {
            Metric::ObjectHitRate => self.object_hit_rate,
            Metric::ByteHitRate => self.byte_hit_rate,
        }
    }
}

pub fn read_results(path: &Path) -> anyhow::Result<Vec<ResultRow>> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .collect::<Result<_, _>>()
        .with_context(|| format!("reading {}", path.display()))
}

type Instance = (String, String, String);

/// Per-instance rows keyed by policy; a duplicate row is an error.
fn by_instance(
    rows: &[ResultRow],
) -> anyhow::Result<BTreeMap<Instance, BTreeMap<&str, &ResultRow>>> {
    let mut out: BTreeMap<Instance, BTreeMap<&str, &ResultRow>> = BTreeMap::new();
    for r in rows {
        let (t, c, m) = r.instance();
        if out
            .entry(r.instance())
            .or_default()
            .insert(&r.policy, r)
            .is_some()
        {
            anyhow::bail!("duplicate row for policy {} on {t} at {c} ({m})", r.policy);
        }
    }
    Ok(out)
}

/// For each capacity (and mode) group, the number of traces on which each
/// policy attains the best value of `metric`. Only traces on which every
/// policy of the group has a row count, and a tie credits every tied policy.
/// Rows: capacity, mode, policy, best_count, traces.
pub fn best_counts(
    rows: &[ResultRow],
    metric: Metric,
    tie_tolerance: f64,
) -> anyhow::Result<Table> {
    let grouped = by_instance(rows)?;
    let mut groups: BTreeMap<(&str, &str), Vec<&BTreeMap<&str, &ResultRow>>> = BTreeMap::new();
    for ((_, cap, mode), inst) in &grouped {
        groups
            .entry((cap.as_str(), mode.as_str()))
            .or_default()
            .push(inst);
    }
    let mut t = Table::new(["capacity", "mode", "policy", "best_count", "traces"]);
    for ((cap, mode), insts) in groups {
        let policies: BTreeSet<&str> = insts.iter().flat_map(|m| m.keys().copied()).collect();
        if policies.len() < 2 {
            anyhow::bail!("capacity {cap} ({mode}) has results for fewer than two policies");
        }
        let common: Vec<_> = insts.iter().filter(|m| m.len() == policies.len()).collect();
        if common.is_empty() {
            anyhow::bail!(
                "at capacity {cap} ({mode}) no trace has results for all {} policies",
                policies.len()
            );
        }
        let mut counts: BTreeMap<&str, usize> = policies.iter().map(|p| (*p, 0)).collect();
        for inst in &common {
            let best = inst
                .values()
                .map(|r| r.metric(metric))
                .fold(f64::NEG_INFINITY, f64::max);
            for (p, r) in inst.iter() {
                if best - r.metric(metric) <= tie_tolerance {
                    *counts.get_mut(p).expect("policy is known") += 1;
                }
            }
        }
        let mut ordered: Vec<(&str, usize)> = counts.into_iter().collect();
        ordered.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        for (p, n) in ordered {
            t.push(vec![
                cap.to_string(),
                mode.to_string(),
                p.to_string(),
                n.to_string(),
                common.len().to_string(),
            ]);
        }
    }
    Ok(t)
}

fn as_result(r: &ResultRow) -> SimResult {
    SimResult {
        requests: r.requests,
        hits: r.hits,
        misses: r.misses,
        ..SimResult::default()
    }
}

/// Miss-rate reduction of every non-baseline row relative to the baseline
/// row of its instance. With `per_instance`, one row per instance and
/// policy; otherwise mean, min and max per policy.
pub fn mrr_table(rows: &[ResultRow], baseline: &str, per_instance: bool) -> anyhow::Result<Table> {
    let grouped = by_instance(rows)?;
    let mut values: Vec<(Instance, &str, f64)> = Vec::new();
    for (inst, policies) in &grouped {
        let Some(base) = policies.get(baseline) else {
            continue;
        };
        for (p, r) in policies {
            if *p != baseline {
                values.push((
                    inst.clone(),
                    p,
                    miss_rate_reduction(&as_result(r), &as_result(base)),
                ));
            }
        }
    }
    if values.is_empty() {
        anyhow::bail!("no instance has both a {baseline:?} row and another policy");
    }
    if per_instance {
        let mut t = Table::new(["trace", "capacity", "mode", "policy", "mrr"]);
        for ((trace, cap, mode), p, v) in values {
            t.push(vec![trace, cap, mode, p.to_string(), fmt_f64(v)]);
        }
        return Ok(t);
    }
    let mut per_policy: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (_, p, v) in &values {
        per_policy.entry(p).or_default().push(*v);
    }
    let mut t = Table::new(["policy", "instances", "mean_mrr", "min_mrr", "max_mrr"]);
    for (p, vs) in per_policy {
        let mean = vs.iter().sum::<f64>() / vs.len() as f64;
        let min = vs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = vs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        t.push(vec![
            p.to_string(),
            vs.len().to_string(),
            fmt_f64(mean),
            fmt_f64(min),
            fmt_f64(max),
        ]);
    }
    Ok(t)
}

pub fn run_best_counts(a: &ReportArgs) -> anyhow::Result<()> {
    let rows = read_results(&a.results)?;
    emit(&best_counts(&rows, a.metric, a.tie_tolerance)?, a.format)
}

pub fn run_mrr(a: &MrrArgs) -> anyhow::Result<()> {
    let rows = read_results(&a.results)?;
    emit(&mrr_table(&rows, &a.baseline, a.per_instance)?, a.format)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(trace: &str, policy: &str, hits: u64) -> ResultRow {
        ResultRow {
            trace: trace.into(),
            policy: policy.into(),
            capacity: "small".into(),
            mode: "slots".into(),
            requests: 100,
            hits,
            misses: 100 - hits,
            object_hit_rate: hits as f64 / 100.0,
            byte_hit_rate: 0.0,
        }
    }

    #[test]
    fn ties_credit_every_tied_policy() {
        let rows = vec![
            row("a", "lru", 50),
            row("a", "lfu", 50),
            row("a", "fifo", 40),
            row("b", "lru", 10),
            row("b", "lfu", 30),
            row("b", "fifo", 20),
        ];
        let t = best_counts(&rows, Metric::ObjectHitRate, 1e-12).unwrap();
        let got: Vec<_> = t
            .rows
            .iter()
            .map(|r| (r[2].as_str(), r[3].as_str(), r[4].as_str()))
            .collect();
        assert_eq!(
            got,
            [("lfu", "2", "2"), ("lru", "1", "2"), ("fifo", "0", "2")]
        );
    }

    #[test]
    fn domination_gives_n_and_zero() {
        let rows: Vec<_> = ["a", "b", "c"]
            .iter()
            .flat_map(|t| [row(t, "x", 60), row(t, "y", 10)])
            .collect();
        let t = best_counts(&rows, Metric::ObjectHitRate, 0.0).unwrap();
        assert_eq!(
            t.rows,
            vec![
                vec!["small", "slots", "x", "3", "3"],
                vec!["small", "slots", "y", "0", "3"]
            ]
        );
    }

    #[test]
    fn capacities_are_counted_separately() {
        let mut big = row("a", "y", 90);
        big.capacity = "large".into();
        let mut big_x = row("a", "x", 10);
        big_x.capacity = "large".into();
        let rows = vec![row("a", "x", 60), row("a", "y", 10), big, big_x];
        let t = best_counts(&rows, Metric::ObjectHitRate, 0.0).unwrap();
        let firsts: Vec<_> = t
            .rows
            .iter()
            .filter(|r| r[3] == "1")
            .map(|r| (r[0].as_str(), r[2].as_str()))
            .collect();
        assert_eq!(firsts, [("large", "y"), ("small", "x")]);
    }

    #[test]
    fn incomplete_instances_are_skipped() {
        let rows = vec![
            row("a", "lru", 50),
            row("a", "lfu", 40),
            row("b", "lru", 10),
        ];
        let t = best_counts(&rows, Metric::ObjectHitRate, 1e-12).unwrap();
        assert_eq!(t.rows[0], vec!["small", "slots", "lru", "1", "1"]);
        assert!(best_counts(
            &[row("a", "lru", 1), row("b", "lfu", 2)],
            Metric::ObjectHitRate,
            0.0
        )
        .is_err());
        assert!(best_counts(
            &[row("a", "lru", 1), row("a", "lru", 2)],
            Metric::ObjectHitRate,
            0.0
        )
        .is_err());
    }

    #[test]
    fn mrr_against_fifo() {
        let rows = vec![
            row("a", "fifo", 20),
            row("a", "lru", 60),
            row("b", "fifo", 50),
            row("b", "lru", 50),
        ];
        let t = mrr_table(&rows, "fifo", true).unwrap();
        // FIFO misses 80, LRU 40: half the misses are removed.
        assert_eq!(t.rows[0][4], "0.5");
        let s = mrr_table(&rows, "fifo", false).unwrap();
        assert_eq!(s.rows, vec![vec!["lru", "2", "0.25", "0", "0.5"]]);
        assert!(mrr_table(&rows, "arc", false).is_err());
    }
}
