//! A recorded 25-reply session driven through one search round.

use evocache::engine::{CapacitySpec, SizeMode};
use evocache::rank::Mechanism;
use evocache::search::{
    run_search, CandidateDb, EvalSpec, Evaluator, Lineage, LlmGenerator, Objective,
    ReplayTransport, SearchConfig, SearchTarget, Status, StopReason, Template, TraceRef,
};

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/llm_replay.jsonl");

fn evaluator() -> Evaluator {
    Evaluator::new(EvalSpec {
        traces: vec![TraceRef::Bundled("s1_zipf08".into())],
        capacity: CapacitySpec::Fraction(0.05),
        mode: SizeMode::SizeAgnostic,
        target: SearchTarget::Rank {
            mechanism: Mechanism::PriorityQueue,
        },
        objective: Objective::MrrVsFifo,
        eval_budget: None,
    })
    .unwrap()
}

#[test]
fn replayed_round_yields_twenty_five_rows() {
    let dir = tempfile::tempdir().unwrap();
    let db_path = dir.path().join("candidates.jsonl");
    let mut db = CandidateDb::create(&db_path).unwrap();
    let mut generator = LlmGenerator::new(Box::new(ReplayTransport::load(FIXTURE).unwrap()));
    let config = SearchConfig {
        candidates_per_round: 25,
        exemplar_count: 2,
        max_rounds: 1,
        plateau: None,
        seed: 0,
    };
    let out = run_search(
        &evaluator(),
        &mut generator,
        &Template::rank_default(),
        &config,
        Some(&mut db),
    )
    .unwrap();
    drop(db);

    assert_eq!(out.stop, StopReason::MaxRounds);
    let rows = CandidateDb::load(&db_path).unwrap();
    assert_eq!(rows, out.candidates);
    let round1: Vec<_> = rows.iter().filter(|c| c.round == 1).collect();
    assert_eq!(round1.len(), 25);
    assert!(round1
        .iter()
        .all(|c| c.lineage == Lineage::Llm && c.parents == vec![0]));
    assert_eq!(
        round1.iter().map(|c| c.index).collect::<Vec<_>>(),
        (0..25).collect::<Vec<_>>()
    );

    let status = |i: usize| round1[i].status;
    assert_eq!(status(7), Status::ParseFail);
    assert!(round1[7].error.as_deref().unwrap().contains("code block"));
    assert_eq!(status(9), Status::ParseFail);
    assert_eq!(status(12), Status::ValidateFail);
    assert!(round1[12]
        .error
        .as_deref()
        .unwrap()
        .contains("unknown_identifier"));
    assert_eq!(round1.iter().filter(|c| c.status == Status::Ok).count(), 22);
    // Frequency-aware replies beat the LRU seed on a skewed trace.
    assert!(out.best_history[1].unwrap() > out.best_history[0].unwrap());
}

#[test]
fn a_second_round_exhausts_the_replay() {
    let mut generator = LlmGenerator::new(Box::new(ReplayTransport::load(FIXTURE).unwrap()));
    let config = SearchConfig {
        candidates_per_round: 25,
        exemplar_count: 2,
        max_rounds: 3,
        plateau: None,
        seed: 0,
    };
    let out = run_search(
        &evaluator(),
        &mut generator,
        &Template::rank_default(),
        &config,
        None,
    )
    .unwrap();
    assert_eq!(
        out.stop,
        StopReason::GeneratorError("replay exhausted".into())
    );
    assert_eq!(out.candidates.len(), 26);
}
