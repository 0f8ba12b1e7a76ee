//! Subcommand implementations.

mod cluster;
mod gen;
mod report;
mod search;
mod simulate;

use std::io::{self, Write};
use std::path::PathBuf;

use anyhow::Context;
use evocache::search::TraceRef;
use evocache::trace::Request;
use rayon::prelude::*;

use crate::args::{Cli, Command, Format, ReportCommand, TraceInputs};
use crate::table::Table;

pub use report::{best_counts, mrr_table, ResultRow};
pub use simulate::simulate_table;

pub fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate::run(&a),
        Command::Report(ReportCommand::BestCounts(a)) => report::run_best_counts(&a),
        Command::Report(ReportCommand::Mrr(a)) => report::run_mrr(&a),
        Command::Search(a) => search::run(&a),
        Command::Cluster(a) => cluster::run_cluster(&a),
        Command::Classify(a) => cluster::run_classify(&a),
        Command::Gen(a) => gen::run(&a),
    }
}

/// Files first, then bundled names, each in command-line order.
pub fn trace_refs(paths: &[PathBuf], bundled: &[String]) -> Vec<TraceRef> {
    paths
        .iter()
        .cloned()
        .map(TraceRef::Path)
        .chain(bundled.iter().cloned().map(TraceRef::Bundled))
        .collect()
}

impl TraceInputs {
    pub fn refs(&self) -> Vec<TraceRef> {
        trace_refs(&self.traces, &self.bundled)
    }
}

/// Loads traces in parallel, keeping input order.
pub fn load_traces(refs: &[TraceRef]) -> anyhow::Result<Vec<(String, Vec<Request>)>> {
    refs.par_iter()
        .map(|r| {
            let trace = r
                .load()
                .map_err(anyhow::Error::msg)
                .with_context(|| format!("loading {}", r.label()))?;
            Ok((r.label(), trace))
        })
        .collect()
}

/// Prints `table` to stdout in `format`.
pub fn emit(table: &Table, format: Format) -> anyhow::Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match format {
        Format::Text => table.write_text(&mut out)?,
        Format::Csv => table.write_csv(&mut out)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &table.to_json())?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Shortest round-trip float text, so CSV output can be read back exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}
