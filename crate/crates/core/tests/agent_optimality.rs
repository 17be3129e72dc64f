mod common;

use common::{check_optimality, instance, optimality_instances, optimality_params, shiftable};
use gridtwin::agent::{self, greedy_rollout, realtime_optimize, AgentParams, NullSink, QTable};
use gridtwin::pipeline::RunConfig;
use gridtwin::twin::Twin;

#[test]
fn greedy_policy_matches_brute_force_on_every_instance() {
    for (name, cfg, params) in optimality_instances() {
        let o = check_optimality(&cfg, &params, 42);
        assert!(o.schedules <= 12, "{name}: {} schedules", o.schedules);
        assert!(
            o.optimal(),
            "{name}: agent objective {} cost {}, brute force {} cost {}",
            o.agent_objective,
            o.agent_cost,
            o.brute_objective,
            o.brute_cost
        );
    }
}

#[test]
fn cheap_hour_is_chosen() {
    let cfg = instance(vec![shiftable("w", 1.0, 0, 2, 1)], vec![], &[0.5, 0.1, 0.5], 3);
    let trained = agent::train(&cfg, &optimality_params(3, 2.0), 7).unwrap();
    let ep = greedy_rollout(&trained.table, &cfg, 0).unwrap();
    assert!(!ep.commanded(0, 0) && ep.commanded(0, 1) && !ep.commanded(0, 2));
    assert!((ep.total_cost() - 0.1).abs() < 1e-15);
}

#[test]
fn training_is_deterministic_under_seed() {
    let mut cfg = RunConfig::demo().twin;
    cfg.horizon = 24;
    let params = AgentParams {
        episodes: 200,
        ..RunConfig::demo().agent
    };
    let a = agent::train(&cfg, &params, 9).unwrap();
    let b = agent::train(&cfg, &params, 9).unwrap();
    assert_eq!(a.table, b.table);
    assert_eq!(a.returns, b.returns);
    let c = agent::train(&cfg, &params, 10).unwrap();
    assert_ne!(a.returns, c.returns);
}

#[test]
fn realtime_loop_reproduces_greedy_rollout() {
    let demo = RunConfig::demo();
    let params = AgentParams {
        episodes: 300,
        ..demo.agent.clone()
    };
    let trained = agent::train(&demo.twin, &params, 1).unwrap();
    let mut twin = Twin::new(demo.twin.clone(), 77).unwrap();
    let log = realtime_optimize(&trained.table, &mut twin, &mut NullSink).unwrap();
    let offline = greedy_rollout(&trained.table, &demo.twin, 77).unwrap();
    assert_eq!(log.episode(), offline);
    assert_eq!(log.fallbacks(), 0);
    assert!(log.decisions.iter().all(|d| d.latency_s > 0.0));
}

#[test]
fn rejected_action_falls_back_to_idle() {
    // Table built for a wider window than the live twin allows.
    let wide = instance(vec![shiftable("w", 1.0, 0, 2, 1)], vec![], &[0.1, 0.5, 0.5], 3);
    let narrow = instance(vec![shiftable("w", 1.0, 1, 2, 1)], vec![], &[0.1, 0.5, 0.5], 3);
    let trained = agent::train(&wide, &optimality_params(3, 2.0), 3).unwrap();
    let mut twin = Twin::new(narrow.clone(), 0).unwrap();
    let log = realtime_optimize(&trained.table, &mut twin, &mut NullSink).unwrap();
    let first = &log.decisions[0];
    assert!(first.fallback);
    assert_eq!(first.action_index, None);
    assert_eq!(first.step.action.appliance_commands, vec![false]);
    assert_eq!(log.decisions.len(), 3);
}

#[test]
fn qtable_file_round_trip_keeps_policy() {
    let cfg = instance(vec![shiftable("w", 1.0, 0, 2, 2)], vec![], &[0.3, 0.1, 0.2], 3);
    let trained = agent::train(&cfg, &optimality_params(3, 2.0), 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.json");
    trained.table.save_json(&path).unwrap();
    let loaded = QTable::load_json(&path).unwrap();
    assert_eq!(loaded, trained.table);
    assert_eq!(
        greedy_rollout(&loaded, &cfg, 0).unwrap(),
        greedy_rollout(&trained.table, &cfg, 0).unwrap()
    );
}
