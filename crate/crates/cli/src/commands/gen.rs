use anyhow::Context;
use evocache::trace::write_csv_trace;
use evocache::workloads::{
    by_name, family_workloads, suite, zipf_scan_instance, Workload, FAMILY_SIZE,
};
use rayon::prelude::*;

use crate::args::GenArgs;

/// Every bundled workload: the suite, the search instance, then the families.
pub fn all_workloads() -> Vec<Workload> {
    let mut all = suite();
    all.push(zipf_scan_instance());
    all.extend(family_workloads(FAMILY_SIZE));
    all
}

pub fn run(a: &GenArgs) -> anyhow::Result<()> {
    if a.list {
        for w in all_workloads() {
            println!("{}\t{}", w.name, w.family.as_deref().unwrap_or("-"));
        }
        return Ok(());
    }
    let chosen: Vec<Workload> = if a.all {
        all_workloads()
    } else if a.bundled.is_empty() {
        return Err(crate::usage(
            "gen needs --list, --all or at least one --bundled name",
        ));
    } else {
        a.bundled
            .iter()
            .map(|n| {
                by_name(n).ok_or_else(|| {
                    crate::usage(format!("no bundled workload named {n:?}; see gen --list"))
                })
            })
            .collect::<anyhow::Result<_>>()?
    };
    std::fs::create_dir_all(&a.out_dir)
        .with_context(|| format!("creating {}", a.out_dir.display()))?;
    let written: Vec<String> = chosen
        .par_iter()
        .map(|w| {
            let trace = w.generate()?;
            let path = a.out_dir.join(format!("{}.csv", w.name));
            write_csv_trace(&path, &trace)
                .with_context(|| format!("writing {}", path.display()))?;
            Ok(format!("{}\t{}", path.display(), trace.len()))
        })
        .collect::<anyhow::Result<_>>()?;
    for line in written {
        println!("{line}");
    }
    Ok(())
}
