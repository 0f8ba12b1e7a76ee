use anyhow::Context;
use evocache::engine::{run_simulation, run_simulation_timed, CacheConfig, CapacitySpec, SizeMode};
use evocache::policy::PolicySpec;
use evocache::trace::{summarize, Request};
use rayon::prelude::*;

use super::{emit, fmt_f64, load_traces};
use crate::args::{ModeArg, SimulateArgs};
use crate::policy_ref::PolicyRef;
use crate::table::Table;

pub const COLUMNS: [&str; 11] = [
    "trace",
    "policy",
    "capacity",
    "capacity_value",
    "mode",
    "requests",
    "hits",
    "misses",
    "object_hit_rate",
    "byte_hit_rate",
    "evictions",
];

/// Options for [`simulate_table`] beyond the traces and policies.
#[derive(Clone, Debug)]
pub struct SimulateOptions {
    pub capacities: Vec<CapacitySpec>,
    pub mode: ModeArg,
    pub seed: u64,
    pub eval_budget: Option<u64>,
    pub timed: bool,
}

/// Runs every trace × policy × capacity combination in parallel. Rows are
/// sorted by trace name, policy label, resolved capacity and capacity text,
/// so output does not depend on flag order or scheduling.
pub fn simulate_table(
    traces: &[(String, Vec<Request>)],
    policies: &[PolicySpec],
    opts: &SimulateOptions,
) -> anyhow::Result<Table> {
    let mode: SizeMode = opts.mode.into();
    let summaries: Vec<_> = traces.iter().map(|(_, t)| summarize(t)).collect();
    let jobs: Vec<(usize, usize, usize)> = (0..traces.len())
        .flat_map(|t| {
            (0..policies.len())
                .flat_map(move |p| (0..opts.capacities.len()).map(move |c| (t, p, c)))
        })
        .collect();
    let mut rows: Vec<Vec<String>> = jobs
        .par_iter()
        .map(|&(t, p, c)| {
            let (name, trace) = &traces[t];
            let capacity = opts.capacities[c];
            let value = capacity.resolve(&summaries[t], mode);
            let mut config = CacheConfig::new(value, mode).with_seed(opts.seed);
            if let Some(b) = opts.eval_budget {
                config = config.with_eval_budget(b);
            }
            let policy = &policies[p];
            let result = if opts.timed {
                run_simulation_timed(trace, policy, &config)
            } else {
                run_simulation(trace, policy, &config)
            }
            .with_context(|| format!("simulating {} on {name} at {capacity}", policy.label()))?;
            let mut row = vec![
                name.clone(),
                policy.label(),
                capacity.to_string(),
                value.to_string(),
                mode_name(opts.mode).to_string(),
                result.requests.to_string(),
                result.hits.to_string(),
                result.misses.to_string(),
                fmt_f64(result.object_hit_rate),
                fmt_f64(result.byte_hit_rate),
                result.evictions.to_string(),
            ];
            if let Some(secs) = result.wall_time_secs {
                row.push(format!("{secs:.6}"));
            }
            Ok(row)
        })
        .collect::<anyhow::Result<_>>()?;
    rows.sort_by(|a, b| {
        let cap = |r: &Vec<String>| r[3].parse::<u64>().expect("capacity_value is an integer");
        (&a[0], &a[1])
            .cmp(&(&b[0], &b[1]))
            .then(cap(a).cmp(&cap(b)))
            .then(a[2].cmp(&b[2]))
    });
    let mut table = Table::new(COLUMNS);
    if opts.timed {
        table.headers.push("wall_time_secs".into());
    }
    for r in rows {
        table.push(r);
    }
    Ok(table)
}

pub fn mode_name(m: ModeArg) -> &'static str {
    match m {
        ModeArg::Slots => "slots",
        ModeArg::Bytes => "bytes",
    }
}

pub fn run(a: &SimulateArgs) -> anyhow::Result<()> {
    let refs = a.inputs.refs();
    if refs.is_empty() {
        return Err(crate::usage(
            "simulate needs at least one --trace or --bundled input",
        ));
    }
    let topology = a
        .policies
        .iter()
        .any(|p| matches!(p, PolicyRef::Topology { .. }));
    if a.mode == ModeArg::Bytes && topology {
        return Err(crate::usage("topo: policies run in --mode slots only"));
    }
    let policies: Vec<PolicySpec> = a
        .policies
        .iter()
        .map(|p| p.resolve())
        .collect::<anyhow::Result<_>>()?;
    let traces = load_traces(&refs)?;
    let opts = SimulateOptions {
        capacities: a.capacities.clone(),
        mode: a.mode,
        seed: a.seed,
        eval_budget: a.eval_budget,
        timed: a.timed,
    };
    let table = simulate_table(&traces, &policies, &opts)?;
    if let Some(path) = &a.out {
        table
            .save(path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    emit(&table, a.format)
}

#[cfg(test)]
mod tests {
    use super::*;
    use evocache::trace::{ObjectId, Request};

    fn trace() -> Vec<Request> {
        [1u64, 2, 1, 3, 1, 2, 4, 1]
            .iter()
            .enumerate()
            .map(|(i, &o)| Request {
                vtime: i as u64,
                object_id: ObjectId(o),
                size: 10,
            })
            .collect()
    }

    #[test]
    fn rows_are_sorted_canonically() {
        let traces = vec![("b".to_string(), trace()), ("a".to_string(), trace())];
        let policies = vec![
            PolicySpec::builtin("lru").unwrap(),
            PolicySpec::builtin("fifo").unwrap(),
        ];
        let opts = SimulateOptions {
            capacities: vec![CapacitySpec::Absolute(2), CapacitySpec::Absolute(1)],
            mode: ModeArg::Slots,
            seed: 0,
            eval_budget: None,
            timed: false,
        };
        let t = simulate_table(&traces, &policies, &opts).unwrap();
        assert_eq!(t.rows.len(), 8);
        let keys: Vec<String> = t
            .rows
            .iter()
            .map(|r| format!("{}/{}/{}", r[0], r[1], r[2]))
            .collect();
        assert_eq!(
            keys[..4],
            ["a/fifo/abs:1", "a/fifo/abs:2", "a/lru/abs:1", "a/lru/abs:2"]
        );
        assert_eq!(keys[4], "b/fifo/abs:1");
        // LRU with two slots on 1 2 1 3 1 2 4 1 hits the 2nd and 3rd requests for 1.
        assert_eq!(t.rows[3][6], "2");
        assert_eq!(t.rows[3][8], "0.25");
    }
}
