mod common;

use common::{brute, strategies};
use proptest::prelude::*;
use tokenpath::oracle::{
    all_shortest_paths, constrained_shortest, detect_nonpositive_circuit, shortest_to_sinks, sink_pair_paths_nonnegative,
    CircuitThreshold, CostSelector,
};
use tokenpath::{ArcSpec, Network, NodeId};

fn detectors_agree(net: &Network) -> Result<(), TestCaseError> {
    let circuits = brute::circuits(net);
    let gamma_le0 = circuits.iter().any(|c| brute::circuit_cost(net, c).0 <= 0);
    let sigma_lt0 = circuits.iter().any(|c| brute::circuit_cost(net, c).1 < 0);
    let found = detect_nonpositive_circuit(net, CostSelector::Gamma, CircuitThreshold::NonPositive);
    prop_assert_eq!(found.is_some(), gamma_le0);
    if let Some(c) = found {
        prop_assert_eq!(c.first(), c.last());
        prop_assert!(net.walk_cost(&c).unwrap().0 <= 0);
    }
    let found = detect_nonpositive_circuit(net, CostSelector::Sigma, CircuitThreshold::Negative);
    prop_assert_eq!(found.is_some(), sigma_lt0);
    if let Some(c) = found {
        prop_assert!(net.walk_cost(&c).unwrap().1 < 0);
    }
    Ok(())
}

/// Every network on two or three nodes with each arc absent or of cost
/// -2..=2 (primary and secondary equal).
#[test]
fn circuit_detectors_full_sweep() {
    for n in 2..=3u32 {
        let pairs: Vec<(u32, u32)> = (1..=n).flat_map(|t| (1..=n).filter(move |&h| h != t).map(move |h| (t, h))).collect();
        for code in 0..6u64.pow(pairs.len() as u32) {
            let mut c = code;
            let mut arcs = Vec::new();
            for &(t, h) in &pairs {
                if c % 6 > 0 {
                    let w = (c % 6) as i64 - 3;
                    arcs.push(ArcSpec::new(t, h, w, w));
                }
                c /= 6;
            }
            let net = Network::new((1..=n).map(NodeId), arcs, [NodeId(1)], [NodeId(n)]).unwrap();
            detectors_agree(&net).unwrap();
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 300, ..ProptestConfig::default() })]

    #[test]
    fn circuit_detectors_match_enumeration(net in strategies::network(5, -2..=2, 0), flip in any::<bool>()) {
        // reuse the primary costs as secondary costs, negated half the time
        let specs = net.arc_specs().into_iter().map(|a| ArcSpec { sigma: if flip { -a.gamma } else { a.gamma }, ..a });
        let net = Network::new(net.ids().to_vec(), specs, net.sources(), net.sinks()).unwrap();
        detectors_agree(&net)?;
    }

    #[test]
    fn distances_match_enumeration(net in strategies::valid_network(6, -2..=6, 0)) {
        let dist = shortest_to_sinks(&net).unwrap();
        let brute = brute::dist_to_sinks(&net);
        for (k, &id) in net.ids().iter().enumerate() {
            prop_assert_eq!(dist.get(id), brute[k]);
            if let Some(d) = brute[k] {
                let p = dist.path(id).unwrap();
                prop_assert_eq!(net.walk_cost(&p).unwrap().0, d);
                for q in all_shortest_paths(&net, &dist, id, 50) {
                    prop_assert_eq!(net.walk_cost(&q).unwrap().0, d);
                }
            }
        }
    }

    #[test]
    fn constrained_distances_match_enumeration(net in strategies::valid_network(6, -2..=6, 3), c_max in 0usize..8) {
        prop_assume!(detect_nonpositive_circuit(&net, CostSelector::Sigma, CircuitThreshold::Negative).is_none());
        let found = constrained_shortest(&net, NodeId(1), c_max).unwrap();
        let expected = brute::constrained_dist(&net, 0, c_max as i64);
        prop_assert_eq!(found.as_ref().map(|p| p.length), expected);
        if let Some(p) = found {
            prop_assert_eq!(net.walk_cost(&p.nodes).unwrap(), (p.length, p.secondary_cost));
            prop_assert!(p.secondary_cost <= c_max as i64);
        }
    }

    #[test]
    fn generous_budget_is_unconstrained(net in strategies::valid_network(6, -2..=6, 3)) {
        let c_max = net.len() * net.sigma_bound().max(0) as usize;
        let found = constrained_shortest(&net, NodeId(1), c_max).unwrap().map(|p| p.length);
        prop_assert_eq!(found, shortest_to_sinks(&net).unwrap().get(NodeId(1)));
    }

    #[test]
    fn sink_pair_check_matches_enumeration(net in strategies::network(5, -2..=3, 0)) {
        prop_assume!(detect_nonpositive_circuit(&net, CostSelector::Gamma, CircuitThreshold::NonPositive).is_none());
        let mut negative = false;
        for t in (0..net.len()).filter(|&i| net.is_sink(i)) {
            brute::for_each_path(&net, t, true, |p| {
                let end = *p.last().unwrap();
                negative |= end != t && net.is_sink(end) && brute::cost(&net, p).0 < 0;
            });
        }
        let (ok, witness) = sink_pair_paths_nonnegative(&net);
        prop_assert_eq!(ok, !negative);
        prop_assert_eq!(witness.is_some(), negative);
    }
}
