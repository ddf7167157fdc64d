//! Batch behaviour of the closed loop.

use intentfix_core::classifier::synthetic;
use intentfix_core::rng;
use intentfix_core::sim::*;

fn seeded_batch(task: Task, mode: AssistMode, seeds: std::ops::RangeInclusive<u64>) -> Vec<TrialRecord> {
    let model = synthetic::default_model(1);
    seeds
        .map(|s| {
            let scene = scenario::for_task(task, &mut rng::seeded(s));
            let cfg = SimConfig {
                task,
                mode,
                ..SimConfig::default()
            };
            let op = OperatorConfig {
                seed: s,
                ..OperatorConfig::default()
            };
            run_trial(cfg, scene, op, &model).unwrap()
        })
        .collect()
}

fn successes(recs: &[TrialRecord]) -> usize {
    recs.iter().filter(|r| r.outcome.is_success()).count()
}

// Frozen from the first verified run: grasping 20/20, cutting 17/20.
#[test]
fn boundary_batch_within_regression_band() {
    let mode = AssistMode::new(Assistance::SafetyBoundary, true);
    let grasp = successes(&seeded_batch(Task::Grasping, mode, 1..=20));
    assert!((18..=20).contains(&grasp), "grasping {grasp}/20");
    let cut = successes(&seeded_batch(Task::Cutting, mode, 1..=20));
    assert!((15..=19).contains(&cut), "cutting {cut}/20");
}

#[test]
fn rows_keep_cadence_and_single_outcome() {
    let recs = seeded_batch(Task::Cutting, AssistMode::new(Assistance::GuidanceForce, true), 1..=5);
    for r in &recs {
        for (i, row) in r.rows.iter().enumerate() {
            assert_eq!(row.t, i as f64 * TICK);
        }
        let first = r.rows.iter().position(|row| row.outcome.is_some()).unwrap();
        assert_eq!(first, r.rows.len() - 1);
        assert_eq!(r.rows[first].outcome, Some(r.outcome));
        assert_eq!(r.completion_time, r.rows[first].t);
    }
}

#[test]
fn scanner_gets_less_confidence_than_reacher() {
    let model = synthetic::default_model(1);
    let scene = scenario::grasping(&mut rng::seeded(4));
    let cfg = SimConfig {
        mode: AssistMode::new(Assistance::GuidanceForce, true),
        ..SimConfig::default()
    };
    let mean_ci = |kind| {
        let op = OperatorConfig {
            kind,
            seed: 4,
            ..OperatorConfig::default()
        };
        let r = run_trial(cfg, scene.clone(), op, &model).unwrap();
        r.rows.iter().map(|row| row.ci).sum::<f64>() / r.rows.len() as f64
    };
    assert!(mean_ci(OperatorKind::DistractedScanner) < mean_ci(OperatorKind::DirectReacher));
}

#[test]
fn replay_reproduces_a_trial() {
    let model = synthetic::default_model(1);
    let scene = scenario::grasping(&mut rng::seeded(8));
    let cfg = SimConfig {
        mode: AssistMode::new(Assistance::SafetyBoundary, true),
        ..SimConfig::default()
    };
    let mut sim = Simulator::new(cfg, scene.clone(), model.clone()).unwrap();
    let mut op = Operator::new(
        OperatorConfig {
            seed: 8,
            ..OperatorConfig::default()
        },
        &scene,
        cfg.start,
    )
    .unwrap();
    let mut inputs = Vec::new();
    let mut rows = Vec::new();
    while sim.outcome().is_none() {
        let input = op.act(sim.time(), &sim.observation());
        inputs.push(input);
        rows.push(sim.step(&input));
    }
    let mut replay_sim = Simulator::new(cfg, scene, model).unwrap();
    let mut replay = Operator::replay(inputs);
    let (replayed, _, _) = run_loop(&mut replay_sim, &mut replay);
    assert_eq!(rows, replayed);
}
