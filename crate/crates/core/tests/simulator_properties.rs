mod common;

use common::strategies;
use proptest::prelude::*;
use tokenpath::simulator::{check_against_oracle, incidence_consistent, RowDelta};
use tokenpath::{run, run_dynamic, ChoiceModel, Mode, Modification, Network, NodeId, Policy, Scenario, Schedule, SimConfig, Stop};

/// The same network with every non-sink node below `upto` made a source.
fn more_sources(net: &Network, upto: u32) -> Network {
    let sources: Vec<NodeId> = net.ids().iter().copied().filter(|&id| id.0 <= upto && !net.sinks().contains(&id)).collect();
    Network::new(net.ids().to_vec(), net.arc_specs(), sources, net.sinks()).unwrap()
}

fn drains(net: &Network) -> bool {
    common::brute::dist_to_sinks(net).iter().all(Option::is_some)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, ..ProptestConfig::default() })]

    #[test]
    fn identical_configs_give_identical_logs(
        net in strategies::valid_network(6, -2..=6, 2),
        seed in any::<u64>(),
        c_max in proptest::option::of(0usize..4),
    ) {
        let cfg = SimConfig {
            mode: c_max.map_or(Mode::Unconstrained, |c_max| Mode::Constrained { c_max }),
            choice: ChoiceModel::Stochastic { seed },
            schedule: Schedule::UniformRandom,
            schedule_seed: seed,
            stop: Stop::MaxSteps(200),
            trace: true,
            ..SimConfig::default()
        };
        let net = more_sources(&net, 2);
        let a = run(&net, &cfg);
        let b = run(&net, &cfg);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap()),
            (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
            _ => prop_assert!(false, "one run failed, the other did not"),
        }
    }

    #[test]
    fn round_robin_reaches_rest_on_the_oracle(
        net in strategies::valid_network(7, -2..=6, 0),
        upto in 1u32..4,
        stochastic in proptest::option::of(any::<u64>()),
    ) {
        let net = more_sources(&net, upto);
        prop_assume!(tokenpath::validate_assumptions(&net, None).passes());
        let cfg = SimConfig {
            choice: stochastic.map_or(ChoiceModel::Deterministic, |seed| ChoiceModel::Stochastic { seed }),
            stop: Stop::RestThenExtra(5),
            trace: true,
            ..SimConfig::default()
        };
        let log = run(&net, &cfg).unwrap();
        prop_assert!(log.reached_rest);
        prop_assert!(log.post_rest_stationary);
        let seg = log.final_segment();
        prop_assert_eq!(log.injections, seg.t_ss.unwrap() + 5 * net.sources().len() as u64);
        prop_assert_eq!(seg.post_rest.len(), net.sources().len());
        prop_assert!(check_against_oracle(&log).unwrap().is_empty());
        for t in &log.trace {
            prop_assert!(incidence_consistent(&net, t.source, &t.outcome, &t.state_before, &t.state_after));
        }
        for w in log.v_series.windows(2) {
            prop_assert!(w[1].v >= w[0].v);
        }
    }

    #[test]
    fn enhanced_runs_lose_nothing_when_every_node_drains(net in strategies::valid_network(7, 1..=6, 0)) {
        prop_assume!(drains(&net));
        let log = run(&net, &SimConfig { policy: Policy::Enhanced, ..SimConfig::default() }).unwrap();
        prop_assert!(log.reached_rest);
        prop_assert!(check_against_oracle(&log).unwrap().is_empty());
    }

    #[test]
    fn value_drops_only_when_the_network_changes(net in strategies::valid_network(7, -2..=6, 0), victim in 2u32..7) {
        prop_assume!(net.contains(NodeId(victim)) && !net.sinks().contains(&NodeId(victim)));
        let removal = Modification::RemoveNodes { nodes: vec![NodeId(victim)] };
        let modified = tokenpath::modify::modify_network(&net, &removal).unwrap();
        prop_assume!(tokenpath::validate_assumptions(&modified, None).passes());
        let scenario = Scenario::from_json(&format!(
            r#"{{"events":[{{"at_step":1,"kind":"remove_nodes","payload":{{"nodes":[{victim}]}}}}]}}"#
        )).unwrap();
        let log = run_dynamic(&net, &SimConfig { scenario, ..SimConfig::default() }).unwrap();
        prop_assert_eq!(log.segments.len(), 2);
        for w in log.v_series.windows(2) {
            prop_assert!(w[1].v >= w[0].v || w[1].delta == RowDelta::Settle);
        }
        prop_assert!(check_against_oracle(&log).unwrap().is_empty());
    }
}
