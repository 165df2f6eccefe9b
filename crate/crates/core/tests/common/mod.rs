#![allow(dead_code)]

use tokenpath::generators::{small_world, SmallWorld};
use tokenpath::oracle::shortest_to_sinks;
use tokenpath::{ArcSpec, Network, NodeId};

/// Instance with the comparison-table parameters: mean out-degree 4,
/// rewiring 0.15, costs up to 50 and 10.
pub fn table_instance(n: usize, seed: u64) -> SmallWorld {
    small_world(n, 4, 0.15, 50, 10, seed).expect("valid small-world parameters")
}

/// Cheapest secondary cost of any path from `from` to a sink, found by
/// running the unconstrained oracle with the secondary costs as lengths.
pub fn min_secondary(net: &Network, from: NodeId) -> Option<i64> {
    let swapped = Network::new(
        net.ids().to_vec(),
        net.arc_specs().into_iter().map(|a| ArcSpec { gamma: a.sigma, ..a }),
        net.sources(),
        net.sinks(),
    )
    .ok()?;
    shortest_to_sinks(&swapped).ok()?.get(from)
}

pub fn ids(v: &[u32]) -> Vec<NodeId> {
    v.iter().map(|&i| NodeId(i)).collect()
}

pub mod brute {
    //! Exhaustive enumeration over simple paths and circuits; exponential,
    //! for networks of a handful of nodes only.

    use tokenpath::Network;

    fn extend(net: &Network, path: &mut Vec<usize>, on: &mut Vec<bool>, visit: &mut dyn FnMut(&[usize]), through_sinks: bool) {
        visit(path);
        let tail = *path.last().unwrap();
        if !through_sinks && path.len() > 1 && net.is_sink(tail) {
            return;
        }
        for a in net.out_arcs(tail) {
            if !on[a.head] {
                on[a.head] = true;
                path.push(a.head);
                extend(net, path, on, visit, through_sinks);
                path.pop();
                on[a.head] = false;
            }
        }
    }

    /// Calls `visit` on every simple path starting at `from` (including the
    /// trivial one). Unless `through_sinks`, paths end at the first sink.
    pub fn for_each_path(net: &Network, from: usize, through_sinks: bool, mut visit: impl FnMut(&[usize])) {
        let mut on = vec![false; net.len()];
        on[from] = true;
        extend(net, &mut vec![from], &mut on, &mut visit, through_sinks);
    }

    pub fn cost(net: &Network, path: &[usize]) -> (i64, i64) {
        path.windows(2).fold((0, 0), |(g, s), w| {
            let a = net.out_arcs(w[0]).iter().find(|a| a.head == w[1]).expect("path arc exists");
            (g + a.gamma, s + a.sigma)
        })
    }

    /// Shortest length from every node to the first sink reached.
    pub fn dist_to_sinks(net: &Network) -> Vec<Option<i64>> {
        (0..net.len())
            .map(|i| {
                if net.is_sink(i) {
                    return Some(0);
                }
                let mut best: Option<i64> = None;
                for_each_path(net, i, false, |p| {
                    if net.is_sink(*p.last().unwrap()) {
                        let l = cost(net, p).0;
                        best = Some(best.map_or(l, |b| b.min(l)));
                    }
                });
                best
            })
            .collect()
    }

    /// Shortest length from `from` to a sink with secondary cost at most `budget`.
    pub fn constrained_dist(net: &Network, from: usize, budget: i64) -> Option<i64> {
        let mut best: Option<i64> = None;
        for_each_path(net, from, false, |p| {
            if p.len() > 1 && net.is_sink(*p.last().unwrap()) {
                let (l, c) = cost(net, p);
                if c <= budget {
                    best = Some(best.map_or(l, |b| b.min(l)));
                }
            }
        });
        best
    }

    /// All-pairs shortest simple-path lengths; sinks only as endpoints.
    pub fn all_pairs(net: &Network) -> Vec<Vec<Option<i64>>> {
        (0..net.len())
            .map(|i| {
                let mut row = vec![None; net.len()];
                for_each_path(net, i, false, |p| {
                    let l = cost(net, p).0;
                    let j = *p.last().unwrap();
                    row[j] = Some(row[j].map_or(l, |b: i64| b.min(l)));
                });
                row
            })
            .collect()
    }

    /// Every simple circuit, as node sequences starting at their smallest
    /// index (without the closing repeat).
    pub fn circuits(net: &Network) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for s in 0..net.len() {
            for_each_path(net, s, true, |p| {
                let last = *p.last().unwrap();
                if p.iter().all(|&v| v >= s) && net.out_arcs(last).iter().any(|a| a.head == s) && (p.len() > 1) {
                    out.push(p.to_vec());
                }
            });
        }
        out
    }

    pub fn circuit_cost(net: &Network, c: &[usize]) -> (i64, i64) {
        let mut closed = c.to_vec();
        closed.push(c[0]);
        cost(net, &closed)
    }
}

pub mod strategies {
    use proptest::prelude::*;
    use tokenpath::{validate_assumptions, ArcSpec, Network, NodeId};

    /// Networks on `1..=n` with source 1, sink `n` and optionally sink
    /// `n - 1`; each ordered pair carries an arc with probability about 1/2.
    pub fn network(max_n: u32, gamma: std::ops::RangeInclusive<i64>, sigma_max: i64) -> impl Strategy<Value = Network> {
        (3..=max_n).prop_flat_map(move |n| {
            let pairs: Vec<(u32, u32)> =
                (1..=n).flat_map(|t| (1..=n).filter(move |&h| h != t).map(move |h| (t, h))).collect();
            let k = pairs.len();
            (
                proptest::collection::vec(proptest::option::weighted(0.5, (gamma.clone(), 0..=sigma_max)), k),
                any::<bool>(),
            )
                .prop_map(move |(costs, two_sinks)| {
                    let arcs = pairs
                        .iter()
                        .zip(costs)
                        .filter_map(|(&(t, h), c)| c.map(|(g, s)| ArcSpec::new(t, h, g, s)));
                    let sinks = if two_sinks && n >= 4 { vec![NodeId(n - 1), NodeId(n)] } else { vec![NodeId(n)] };
                    Network::new((1..=n).map(NodeId), arcs, [NodeId(1)], sinks).expect("well-formed")
                })
        })
    }

    /// As [`network`], restricted to networks meeting every assumption.
    pub fn valid_network(max_n: u32, gamma: std::ops::RangeInclusive<i64>, sigma_max: i64) -> impl Strategy<Value = Network> {
        network(max_n, gamma, sigma_max).prop_filter("assumptions", |net| validate_assumptions(net, None).passes())
    }
}
