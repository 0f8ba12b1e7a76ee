use anyhow::Context;
use evocache::search::llm::{DEFAULT_ENDPOINT, DEFAULT_MODEL};
use evocache::search::{
    run_search, CandidateDb, EvalSpec, Evaluator, Generator, HttpTransport, LlmGenerator,
    MutationGenerator, Plateau, RecordingTransport, ReplayTransport, SearchConfig, SearchTarget,
    Template, TraceRef, Transport,
};
use evocache::topology::Topology;
use evocache::workloads::ZIPF_SCAN_NAME;

use crate::args::{GeneratorKind, SearchArgs};

fn recorded<T: Transport + 'static>(
    inner: T,
    a: &SearchArgs,
) -> anyhow::Result<Box<dyn Transport>> {
    Ok(match &a.record {
        Some(path) => Box::new(
            RecordingTransport::create(inner, path)
                .with_context(|| format!("creating {}", path.display()))?,
        ),
        None => Box::new(inner),
    })
}

fn transport(a: &SearchArgs) -> anyhow::Result<Box<dyn Transport>> {
    match &a.replay {
        Some(path) => recorded(ReplayTransport::load(path)?, a),
        None => {
            let endpoint = a.endpoint.as_deref().unwrap_or(DEFAULT_ENDPOINT);
            let model = a.model.as_deref().unwrap_or(DEFAULT_MODEL);
            recorded(
                HttpTransport::from_env(endpoint, model)?.with_temperature(a.temperature),
                a,
            )
        }
    }
}

pub fn run(a: &SearchArgs) -> anyhow::Result<()> {
    let mut traces = a.inputs.refs();
    if traces.is_empty() {
        traces.push(TraceRef::Bundled(ZIPF_SCAN_NAME.into()));
    }
    let target = match &a.topology {
        Some(path) => SearchTarget::Topology {
            skeleton: Topology::load(path)
                .with_context(|| format!("loading {}", path.display()))?
                .spec()
                .clone(),
        },
        None => SearchTarget::Rank {
            mechanism: a.mechanism,
        },
    };
    let mut template = Template::for_target(&target);
    if !a.seed_programs.is_empty() {
        template.seeds = a
            .seed_programs
            .iter()
            .map(|p| std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())))
            .collect::<anyhow::Result<_>>()?;
    }
    let spec = EvalSpec {
        traces,
        capacity: a.capacity,
        mode: a.mode.into(),
        target,
        objective: a.objective.0,
        eval_budget: a.eval_budget,
    };
    let evaluator = Evaluator::new(spec).map_err(crate::usage)?;
    let config = SearchConfig {
        candidates_per_round: a.per_round,
        exemplar_count: a.exemplars,
        max_rounds: a.rounds,
        plateau: a.plateau_window.map(|window| Plateau {
            window,
            epsilon: a.plateau_epsilon,
        }),
        seed: a.seed,
    };
    let mut generator: Box<dyn Generator> = match a.generator {
        GeneratorKind::Mutation => Box::new(MutationGenerator::new(a.seed)),
        GeneratorKind::Llm => Box::new(LlmGenerator::new(transport(a)?)),
    };
    let mut db =
        CandidateDb::create(&a.db).with_context(|| format!("creating {}", a.db.display()))?;
    let outcome = run_search(
        &evaluator,
        generator.as_mut(),
        &template,
        &config,
        Some(&mut db),
    )?;

    let ok = outcome
        .candidates
        .iter()
        .filter(|c| c.status == evocache::search::Status::Ok)
        .count();
    println!("candidates: {} ({ok} ok)", outcome.candidates.len());
    println!("rounds: {}", outcome.best_history.len().saturating_sub(1));
    println!("stopped: {}", outcome.stop);
    println!("database: {}", a.db.display());
    match outcome.best() {
        Some(best) => {
            println!(
                "best objective: {}",
                best.objective.expect("ok candidates have an objective")
            );
            println!("best candidate: {} (round {})", best.id, best.round);
            println!("{}", best.source.trim_end());
            Ok(())
        }
        None => anyhow::bail!("no candidate evaluated successfully"),
    }
}
