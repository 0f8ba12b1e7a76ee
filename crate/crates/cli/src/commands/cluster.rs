use std::collections::BTreeMap;

use anyhow::Context;
use evocache::instances::{
    adjusted_rand_index, extract_many, kmeans_features, purity, write_assignments, ClusterModel,
    KMeansConfig,
};
use evocache::search::TraceRef;
use evocache::workloads::{by_name, family_workloads};

use super::{emit, fmt_f64, load_traces, trace_refs};
use crate::args::{ClassifyArgs, ClusterArgs};
use crate::table::Table;

/// Family label of a trace, when it is a bundled family member.
fn family_of(r: &TraceRef) -> Option<String> {
    match r {
        TraceRef::Bundled(name) => by_name(name).and_then(|w| w.family),
        TraceRef::Path(_) => None,
    }
}

pub fn run_cluster(a: &ClusterArgs) -> anyhow::Result<()> {
    let mut refs = trace_refs(&a.traces, &a.bundled);
    if let Some(n) = a.families {
        refs.extend(
            family_workloads(n)
                .into_iter()
                .map(|w| TraceRef::Bundled(w.name)),
        );
    }
    if refs.is_empty() {
        return Err(crate::usage(
            "cluster needs trace files, --bundled names or --families",
        ));
    }
    if a.k == 0 || a.k > refs.len() {
        return Err(crate::usage(format!(
            "--k must be between 1 and the number of traces ({})",
            refs.len()
        )));
    }
    let traces = load_traces(&refs)?;
    let vectors = extract_many(
        &traces.iter().map(|(_, t)| t.clone()).collect::<Vec<_>>(),
        a.prefix,
    );
    let mut config = KMeansConfig::new(a.k, a.seed);
    config.restarts = a.restarts.max(1);
    if let Some(f) = a.novelty_factor {
        config.novelty_factor = f;
    }
    let fit = kmeans_features(&vectors, &config)?;

    if let Some(path) = &a.model {
        fit.model
            .save(path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &a.assignments {
        let rows: Vec<(String, usize)> = traces
            .iter()
            .map(|(n, _)| n.clone())
            .zip(fit.assignments.iter().copied())
            .collect();
        let file =
            std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_assignments(file, &rows)?;
    }

    let mut sizes = vec![0usize; a.k];
    for &c in &fit.assignments {
        sizes[c] += 1;
    }
    let mut table = Table::new(["cluster", "size", "radius"]);
    for (c, n) in sizes.iter().enumerate() {
        table.push(vec![
            c.to_string(),
            n.to_string(),
            fmt_f64(fit.model.radii[c]),
        ]);
    }
    emit(&table, a.format)?;

    let families: Option<Vec<String>> = refs.iter().map(family_of).collect();
    if let Some(families) = families {
        let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
        let labels: Vec<usize> = families
            .iter()
            .map(|f| {
                let n = ids.len();
                *ids.entry(f).or_insert(n)
            })
            .collect();
        eprintln!(
            "family purity {:.4}, adjusted Rand index {:.4}",
            purity(&fit.assignments, &labels),
            adjusted_rand_index(&fit.assignments, &labels)
        );
    }
    Ok(())
}

pub fn run_classify(a: &ClassifyArgs) -> anyhow::Result<()> {
    let model =
        ClusterModel::load(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let refs = trace_refs(&a.traces, &a.bundled);
    if refs.is_empty() {
        return Err(crate::usage(
            "classify needs trace files or --bundled names",
        ));
    }
    let traces = load_traces(&refs)?;
    let vectors = extract_many(
        &traces.iter().map(|(_, t)| t.clone()).collect::<Vec<_>>(),
        a.prefix,
    );
    let mut table = Table::new(["trace", "class", "nearest", "distance"]);
    for ((name, _), v) in traces.iter().zip(&vectors) {
        let class = model.classify(v.as_slice());
        let distances = model.distances(v.as_slice());
        let (nearest, d) =
            distances
                .iter()
                .copied()
                .enumerate()
                .fold(
                    (0, f64::INFINITY),
                    |best, (i, d)| if d < best.1 { (i, d) } else { best },
                );
        table.push(vec![
            name.clone(),
            class.to_string(),
            nearest.to_string(),
            fmt_f64(d),
        ]);
    }
    emit(&table, a.format)
}
