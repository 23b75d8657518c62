mod common;

use common::{fixture_path, indexed};
use stepnav_core::nav::{replay, Classification, Command};
use stepnav_core::sim::batch::{parse_batch, run_batch};
use stepnav_core::sim::{
    classify_jumps, compute_metrics, simulate, ConfusionMatrix, JumpLabel, Metrics, SimConfig,
    SimError, SimStatus, StrategyKind, StrategyProfile,
};

/// Independent single-pass recount used as the metrics oracle.
fn recount(log: &[stepnav_core::nav::SessionLogEntry]) -> (u32, u32, u32, u32, u32, u32) {
    let (mut next, mut prev, mut jumps, mut back, mut over, mut noop) = (0, 0, 0, 0, 0, 0);
    for e in log {
        let moved = e.from_step != e.to_step;
        match &e.command {
            Command::Next if moved => next += 1,
            Command::Previous if moved => prev += 1,
            Command::TagDetected { .. } if moved => jumps += 1,
            Command::GoingBack if moved => back += 1,
            Command::Overview => over += 1,
            _ => {}
        }
        if e.classification == Classification::Noop {
            noop += 1;
        }
    }
    (next, prev, jumps, back, over, noop)
}

fn check_recount(m: &Metrics, log: &[stepnav_core::nav::SessionLogEntry]) {
    let (next, prev, jumps, back, over, noop) = recount(log);
    assert_eq!(
        (m.next_count, m.previous_count, m.this_one_count, m.going_back_count, m.overview_count, m.noop_count),
        (next, prev, jumps, back, over, noop)
    );
    assert_eq!(m.total_linear, next + prev);
    assert_eq!(m.total_nonlinear, jumps + back);
}

#[test]
fn linear_baseline_on_model_28() {
    let doc = indexed("model-28.json");
    let out = simulate(doc, &StrategyProfile::new(StrategyKind::LinearBaseline, 1), &SimConfig::default()).unwrap();
    assert_eq!(out.status, SimStatus::Completed);
    assert!(out.metrics.completed);
    assert_eq!(out.metrics.next_count, 27);
    assert_eq!(out.log.len(), 28);
    assert!(out.log[1..].iter().all(|e| e.command == Command::Next));
    check_recount(&out.metrics, &out.log);
}

#[test]
fn debugging_jumps_then_goes_back() {
    let doc = indexed("model-28.json");
    // find a seed with exactly one injected mistake
    let (out, seed) = (0..500)
        .map(|seed| {
            let profile = StrategyProfile { error_rate: 0.05, ..StrategyProfile::new(StrategyKind::Debugging, seed) };
            (simulate(doc.clone(), &profile, &SimConfig::default()).unwrap(), seed)
        })
        .find(|(o, _)| o.injected_errors.len() == 1)
        .expect("some seed injects exactly one error");
    let jump = out.log.iter().position(|e| e.is_jump()).unwrap_or_else(|| panic!("seed {seed}"));
    assert!(out.log[jump + 1..].iter().any(|e| e.is_successful_going_back()));
    assert_eq!(out.log[jump].to_step, out.injected_errors[0]);
    assert!(out.metrics.completed);
}

#[test]
fn block_scanning_is_reproducible() {
    let doc = indexed("model-28.json");
    let profile = StrategyProfile::new(StrategyKind::BlockScanning, 42);
    let a = simulate(doc.clone(), &profile, &SimConfig::default()).unwrap();
    let b = simulate(doc.clone(), &profile, &SimConfig::default()).unwrap();
    assert_eq!(a.log, b.log);
    assert!(a.metrics.completed);
    assert!(a.metrics.this_one_count > 0);
    check_recount(&a.metrics, &a.log);
    let other = simulate(doc, &StrategyProfile::new(StrategyKind::BlockScanning, 43), &SimConfig::default()).unwrap();
    assert_ne!(a.log, other.log);
}

#[test]
fn pure_profiles_replay_and_classify() {
    let doc = indexed("model-28.json");
    for kind in StrategyKind::PURE {
        for seed in 0..25 {
            let out = simulate(doc.clone(), &StrategyProfile::new(kind, seed), &SimConfig::default()).unwrap();
            assert!(out.metrics.completed, "{kind} seed {seed}");
            let r = replay(doc.clone(), &out.log).unwrap();
            assert_eq!(
                (r.current_step(), r.return_anchor(), r.visited()),
                (out.final_step, out.final_anchor, &out.final_visited)
            );
            check_recount(&out.metrics, &out.log);
            assert_eq!(compute_metrics(&out.log, Some(doc.doc())).unwrap(), out.metrics);
            let labels = classify_jumps(&out.log, doc.doc()).unwrap();
            assert_eq!(labels, out.ground_truth, "{kind} seed {seed}");
            let expected = match kind {
                StrategyKind::SelectiveSkipping => Some(JumpLabel::SelectiveSkipping),
                StrategyKind::Debugging => Some(JumpLabel::Debugging),
                StrategyKind::BlockScanning => Some(JumpLabel::BlockScanning),
                _ => None,
            };
            assert!(labels.iter().all(|l| Some(l.label) == expected));
        }
    }
}

#[test]
fn skipping_profile_actually_skips() {
    let doc = indexed("model-28.json");
    let out = simulate(
        doc,
        &StrategyProfile { skip_probability: 1.0, ..StrategyProfile::new(StrategyKind::SelectiveSkipping, 3) },
        &SimConfig::default(),
    )
    .unwrap();
    assert_eq!(out.ground_truth.len(), 1);
    assert_eq!((out.ground_truth[0].from_step, out.ground_truth[0].to_step), (1, 5));
}

#[test]
fn mixed_profile_reports_confusion_matrix() {
    let doc = indexed("model-28.json");
    let mut total = ConfusionMatrix::default();
    for seed in 0..20 {
        let out = match simulate(doc.clone(), &StrategyProfile::new(StrategyKind::Mixed, seed), &SimConfig::default()) {
            Ok(o) => o,
            Err(SimError::BudgetExhausted { partial, .. }) => *partial,
            Err(e) => panic!("{e}"),
        };
        let labels = classify_jumps(&out.log, doc.doc()).unwrap();
        total.merge(&ConfusionMatrix::build(&out.ground_truth, &labels));
    }
    assert!(total.total() > 0);
    assert!(total.to_table().starts_with("truth\\predicted,"));
}

#[test]
fn budget_exhaustion_returns_partial_metrics() {
    let doc = indexed("model-28.json");
    let config = SimConfig { budget: Some(5), ..SimConfig::default() };
    match simulate(doc, &StrategyProfile::new(StrategyKind::LinearBaseline, 0), &config) {
        Err(SimError::BudgetExhausted { budget, partial }) => {
            assert_eq!(budget, 5);
            assert_eq!(partial.status, SimStatus::BudgetExhausted);
            assert_eq!(partial.metrics.next_count, 5);
            assert!(!partial.metrics.completed);
        }
        other => panic!("expected exhaustion, got {other:?}"),
    }
}

#[test]
fn invalid_profiles() {
    let doc = indexed("model-28.json");
    let bad = StrategyProfile { error_rate: 1.5, ..StrategyProfile::new(StrategyKind::Debugging, 0) };
    assert!(matches!(simulate(doc.clone(), &bad, &SimConfig::default()), Err(SimError::InvalidProfile(_))));
    let mut mixed = StrategyProfile::new(StrategyKind::Mixed, 0);
    mixed.weights.as_mut().unwrap().debugging = 0.9;
    assert!(matches!(simulate(doc, &mixed, &SimConfig::default()), Err(SimError::InvalidProfile(_))));
}

#[test]
fn batch_file_runs() {
    let text = std::fs::read_to_string(fixture_path("batch.toml")).unwrap();
    let batch = parse_batch(&text).unwrap();
    let results = run_batch(&batch, &fixture_path(""), &SimConfig::default()).unwrap();
    assert_eq!(results.len(), 8);
    assert_eq!(results[0].metrics().next_count, 27);
    assert_eq!(results[2].profile.seed, 43);
}
