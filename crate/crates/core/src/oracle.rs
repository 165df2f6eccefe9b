//! Exact shortest-path ground truth.
//!
//! Everything here is computed by label-correcting relaxation over the arc
//! list. None of it shares code with the token engines; the simulator's
//! optimality checks compare the two.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::network::{Network, NodeId};

/// Shortest distance from every node to its closest sink, with the
/// canonical first hop of a shortest outgoing path. `None` means no sink is
/// reachable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DistanceMap {
    pub nodes: Vec<NodeId>,
    pub dist: Vec<Option<i64>>,
    /// Successor on the canonical (lexicographically smallest) shortest
    /// path; chains end at a sink.
    pub next_hop: Vec<Option<NodeId>>,
}

impl DistanceMap {
    pub fn get(&self, id: NodeId) -> Option<i64> {
        let i = self.nodes.binary_search(&id).ok()?;
        self.dist[i]
    }

    /// The canonical shortest outgoing path from `from`, ending at a sink.
    pub fn path(&self, from: NodeId) -> Option<Vec<NodeId>> {
        let mut i = self.nodes.binary_search(&from).ok()?;
        self.dist[i]?;
        let mut out = vec![from];
        while let Some(next) = self.next_hop[i] {
            out.push(next);
            if out.len() > self.nodes.len() {
                return None;
            }
            i = self.nodes.binary_search(&next).ok()?;
        }
        Some(out)
    }
}

struct Reversed {
    /// For each node, `(tail, gamma, sigma)` of its in-arcs.
    incoming: Vec<Vec<(usize, i64, i64)>>,
}

impl Reversed {
    fn new(net: &Network) -> Self {
        let mut incoming = vec![Vec::new(); net.len()];
        for a in net.arcs() {
            incoming[a.head].push((a.tail, a.gamma, a.sigma));
        }
        Reversed { incoming }
    }
}

/// Distances to the closest sink (the maximal rest state), by FIFO
/// label-correcting relaxation on the reversed graph started from all sinks.
pub fn shortest_to_sinks(net: &Network) -> Result<DistanceMap> {
    let n = net.len();
    let rev = Reversed::new(net);
    let mut dist: Vec<Option<i64>> = (0..n).map(|i| net.is_sink(i).then_some(0)).collect();
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| net.is_sink(i)).collect();
    let mut queued: Vec<bool> = (0..n).map(|i| net.is_sink(i)).collect();
    let bound = n.saturating_mul(net.arc_count()).max(1) + n;
    let mut relaxations = 0usize;

    while let Some(j) = queue.pop_front() {
        queued[j] = false;
        let dj = dist[j].expect("queued nodes have labels");
        for &(i, gamma, _) in &rev.incoming[j] {
            if net.is_sink(i) {
                continue;
            }
            let cand = gamma + dj;
            if dist[i].is_none_or(|d| cand < d) {
                relaxations += 1;
                if relaxations > bound {
                    return Err(Error::RelaxationDiverged(bound));
                }
                dist[i] = Some(cand);
                if !queued[i] {
                    queued[i] = true;
                    queue.push_back(i);
                }
            }
        }
    }

    let next_hop = (0..n)
        .map(|i| {
            if net.is_sink(i) {
                return None;
            }
            let di = dist[i]?;
            net.out_arcs(i)
                .iter()
                .find(|a| dist[a.head].is_some_and(|dj| a.gamma + dj == di))
                .map(|a| net.id(a.head))
        })
        .collect();

    Ok(DistanceMap {
        nodes: net.ids().to_vec(),
        dist,
        next_hop,
    })
}

/// Every shortest outgoing path from `from`, up to `limit` of them, in
/// lexicographic order. Meant for small networks.
pub fn all_shortest_paths(net: &Network, dist: &DistanceMap, from: NodeId, limit: usize) -> Vec<Vec<NodeId>> {
    let mut out = Vec::new();
    let Some(start) = net.index_of(from) else {
        return out;
    };
    if dist.dist[start].is_none() {
        return out;
    }
    let mut stack = vec![start];
    fn dfs(net: &Network, dist: &DistanceMap, stack: &mut Vec<usize>, out: &mut Vec<Vec<NodeId>>, limit: usize) {
        if out.len() >= limit {
            return;
        }
        let i = *stack.last().unwrap();
        if net.is_sink(i) {
            out.push(stack.iter().map(|&k| net.id(k)).collect());
            return;
        }
        let di = dist.dist[i].unwrap();
        for a in net.out_arcs(i) {
            if dist.dist[a.head].is_some_and(|dj| a.gamma + dj == di) && !stack.contains(&a.head) {
                stack.push(a.head);
                dfs(net, dist, stack, out, limit);
                stack.pop();
            }
        }
    }
    dfs(net, dist, &mut stack, &mut out, limit);
    out
}

/// Distances over (node, spent budget) pairs: `get(i, c)` is the shortest
/// length from node `i`, having already spent `c`, to any sink without the
/// total secondary cost exceeding `c_max`.
#[derive(Debug, Clone)]
pub struct BudgetDistances {
    nodes: Vec<NodeId>,
    c_max: usize,
    dist: Vec<Option<i64>>,
}

impl BudgetDistances {
    pub fn c_max(&self) -> usize {
        self.c_max
    }

    pub fn get(&self, id: NodeId, spent: usize) -> Option<i64> {
        let i = self.nodes.binary_search(&id).ok()?;
        if spent > self.c_max {
            return None;
        }
        self.dist[i * (self.c_max + 1) + spent]
    }
}

pub fn budget_distances(net: &Network, c_max: usize) -> Result<BudgetDistances> {
    if let Some(a) = net.arcs().iter().find(|a| a.sigma < 0) {
        return Err(invalid(format!(
            "negative secondary cost on arc ({}, {})",
            net.id(a.tail),
            net.id(a.head)
        )));
    }
    let n = net.len();
    let w = c_max + 1;
    let rev = Reversed::new(net);
    let mut dist: Vec<Option<i64>> = vec![None; n * w];
    let mut queued = vec![false; n * w];
    let mut queue = VecDeque::new();
    for t in (0..n).filter(|&i| net.is_sink(i)) {
        for c in 0..w {
            dist[t * w + c] = Some(0);
            queued[t * w + c] = true;
            queue.push_back((t, c));
        }
    }
    let bound = (n * w).saturating_mul(net.arc_count() * w).max(1) + n * w;
    let mut relaxations = 0usize;

    while let Some((j, cj)) = queue.pop_front() {
        queued[j * w + cj] = false;
        let dj = dist[j * w + cj].unwrap();
        for &(i, gamma, sigma) in &rev.incoming[j] {
            if net.is_sink(i) || (sigma as usize) > cj {
                continue;
            }
            let ci = cj - sigma as usize;
            let slot = i * w + ci;
            let cand = gamma + dj;
            if dist[slot].is_none_or(|d| cand < d) {
                relaxations += 1;
                if relaxations > bound {
                    return Err(Error::RelaxationDiverged(bound));
                }
                dist[slot] = Some(cand);
                if !queued[slot] {
                    queued[slot] = true;
                    queue.push_back((i, ci));
                }
            }
        }
    }

    Ok(BudgetDistances {
        nodes: net.ids().to_vec(),
        c_max,
        dist,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConstrainedPath {
    pub length: i64,
    pub secondary_cost: i64,
    pub nodes: Vec<NodeId>,
}

/// Shortest outgoing path from `from` whose secondary cost stays within
/// `c_max`, or `None` when no such path exists.
pub fn constrained_shortest(net: &Network, from: NodeId, c_max: usize) -> Result<Option<ConstrainedPath>> {
    let start = net.require(from)?;
    let bd = budget_distances(net, c_max)?;
    Ok(budget_path(net, &bd, start))
}

pub(crate) fn budget_path(net: &Network, bd: &BudgetDistances, start: usize) -> Option<ConstrainedPath> {
    let w = bd.c_max + 1;
    let length = bd.dist[start * w]?;
    let mut nodes = vec![net.id(start)];
    let (mut i, mut c) = (start, 0usize);
    let mut guard = 0usize;
    while !net.is_sink(i) {
        let di = bd.dist[i * w + c]?;
        let arc = net.out_arcs(i).iter().find(|a| {
            let cj = c + a.sigma as usize;
            cj <= bd.c_max && bd.dist[a.head * w + cj].is_some_and(|dj| a.gamma + dj == di)
        })?;
        c += arc.sigma as usize;
        i = arc.head;
        nodes.push(net.id(i));
        guard += 1;
        if guard > net.len() * w {
            return None;
        }
    }
    Some(ConstrainedPath {
        length,
        secondary_cost: c as i64,
        nodes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostSelector {
    Gamma,
    Sigma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CircuitThreshold {
    /// Circuits with cost sum `<= 0`.
    NonPositive,
    /// Circuits with cost sum `< 0`.
    Negative,
}

/// Finds a circuit whose selected cost sum is non-positive (or negative),
/// returned as a closed node sequence (first node repeated at the end).
///
/// The non-positive variant maps every cost `w` to `(n + 1) * w - 1`: a
/// circuit of `k <= n` arcs with sum `W` becomes `(n + 1) * W - k`, which is
/// negative exactly when `W <= 0`.
pub fn detect_nonpositive_circuit(
    net: &Network,
    selector: CostSelector,
    threshold: CircuitThreshold,
) -> Option<Vec<NodeId>> {
    let n = net.len();
    if n == 0 {
        return None;
    }
    let scale = (n as i128) + 1;
    let weight = |g: i64, s: i64| -> i128 {
        let w = match selector {
            CostSelector::Gamma => g,
            CostSelector::Sigma => s,
        } as i128;
        match threshold {
            CircuitThreshold::NonPositive => scale * w - 1,
            CircuitThreshold::Negative => w,
        }
    };

    // Bellman-Ford from a virtual root joined to every node at cost 0.
    let mut dist = vec![0i128; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    let mut last = None;
    for _ in 0..n {
        last = None;
        for a in net.arcs() {
            let cand = dist[a.tail] + weight(a.gamma, a.sigma);
            if cand < dist[a.head] {
                dist[a.head] = cand;
                pred[a.head] = Some(a.tail);
                last = Some(a.head);
            }
        }
        if last.is_none() {
            return None;
        }
    }
    let mut v = last?;
    for _ in 0..n {
        v = pred[v].expect("relaxed nodes have predecessors");
    }
    let mut cycle = vec![v];
    let mut u = pred[v].expect("cycle node has predecessor");
    while u != v {
        cycle.push(u);
        u = pred[u].expect("cycle node has predecessor");
    }
    cycle.push(v);
    cycle.reverse();
    Some(cycle.into_iter().map(|i| net.id(i)).collect())
}

/// Checks that no path between two distinct sinks has negative primary
/// length; on failure returns one offending path.
pub fn sink_pair_paths_nonnegative(net: &Network) -> (bool, Option<Vec<NodeId>>) {
    let n = net.len();
    for t in (0..n).filter(|&i| net.is_sink(i)) {
        let mut dist: Vec<Option<i64>> = vec![None; n];
        let mut pred: Vec<Option<usize>> = vec![None; n];
        dist[t] = Some(0);
        for _ in 1..n.max(2) {
            let mut changed = false;
            for a in net.arcs() {
                if let Some(dt) = dist[a.tail] {
                    let cand = dt + a.gamma;
                    if dist[a.head].is_none_or(|d| cand < d) && a.head != t {
                        dist[a.head] = Some(cand);
                        pred[a.head] = Some(a.tail);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        for u in (0..n).filter(|&u| u != t && net.is_sink(u)) {
            if dist[u].is_some_and(|d| d < 0) {
                let mut path = vec![u];
                let mut v = u;
                while let Some(p) = pred[v] {
                    path.push(p);
                    v = p;
                    if v == t || path.len() > n {
                        break;
                    }
                }
                path.reverse();
                return (false, Some(path.into_iter().map(|i| net.id(i)).collect()));
            }
        }
    }
    (true, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::fig2_network;
    use crate::network::ArcSpec;

    fn ids(v: &[u32]) -> Vec<NodeId> {
        v.iter().map(|&i| NodeId(i)).collect()
    }

    #[test]
    fn fig2_distances() {
        let net = fig2_network();
        let d = shortest_to_sinks(&net).unwrap();
        assert_eq!(d.dist, vec![Some(3), Some(2), Some(1), Some(0), Some(0)]);
        assert_eq!(d.path(NodeId(1)).unwrap(), ids(&[1, 2, 3, 4, 5]));
        assert_eq!(d.get(NodeId(5)), Some(0));
    }

    #[test]
    fn fig2_constrained() {
        let net = fig2_network();
        let p = constrained_shortest(&net, NodeId(1), 2).unwrap().unwrap();
        assert_eq!((p.length, p.secondary_cost, p.nodes), (4, 2, ids(&[1, 2, 4, 5])));
        let p = constrained_shortest(&net, NodeId(1), 3).unwrap().unwrap();
        assert_eq!((p.length, p.secondary_cost, p.nodes), (3, 3, ids(&[1, 2, 3, 4, 5])));
        assert_eq!(constrained_shortest(&net, NodeId(1), 1).unwrap(), None);
        let slack = constrained_shortest(&net, NodeId(1), 50).unwrap().unwrap();
        assert_eq!(slack.length, 3);
    }

    #[test]
    fn zero_sum_circuit_is_nonpositive() {
        let pos = Network::new(
            ids(&[1, 2]),
            [ArcSpec::new(1, 2, 1, 0), ArcSpec::new(2, 1, 1, 0)],
            [],
            [],
        )
        .unwrap();
        assert_eq!(detect_nonpositive_circuit(&pos, CostSelector::Gamma, CircuitThreshold::NonPositive), None);
        let zero = Network::new(
            ids(&[1, 2]),
            [ArcSpec::new(1, 2, 1, 0), ArcSpec::new(2, 1, -1, 0)],
            [],
            [],
        )
        .unwrap();
        let c = detect_nonpositive_circuit(&zero, CostSelector::Gamma, CircuitThreshold::NonPositive).unwrap();
        assert_eq!(c.first(), c.last());
        assert_eq!(net_len(&zero, &c), 0);
        assert_eq!(detect_nonpositive_circuit(&zero, CostSelector::Gamma, CircuitThreshold::Negative), None);
        // sigma is 0 on both arcs
        assert!(detect_nonpositive_circuit(&zero, CostSelector::Sigma, CircuitThreshold::NonPositive).is_some());
    }

    fn net_len(net: &Network, c: &[NodeId]) -> i64 {
        net.walk_cost(c).unwrap().0
    }

    #[test]
    fn acyclic_has_no_circuit() {
        let net = fig2_network();
        assert_eq!(detect_nonpositive_circuit(&net, CostSelector::Gamma, CircuitThreshold::NonPositive), None);
    }

    #[test]
    fn sink_pairs() {
        assert!(sink_pair_paths_nonnegative(&fig2_network()).0);
        let net = Network::new(
            ids(&[1, 2, 3]),
            [ArcSpec::new(1, 2, 1, 0), ArcSpec::new(2, 3, -1, 0)],
            ids(&[1]),
            ids(&[2, 3]),
        )
        .unwrap();
        let (ok, w) = sink_pair_paths_nonnegative(&net);
        assert!(!ok);
        assert_eq!(w.unwrap(), ids(&[2, 3]));
    }

    #[test]
    fn nonpositive_circuit_makes_relaxation_diverge() {
        let net = Network::new(
            ids(&[1, 2, 3]),
            [
                ArcSpec::new(1, 2, -1, 0),
                ArcSpec::new(2, 1, 0, 0),
                ArcSpec::new(2, 3, 1, 0),
            ],
            ids(&[1]),
            ids(&[3]),
        )
        .unwrap();
        assert!(matches!(shortest_to_sinks(&net), Err(Error::RelaxationDiverged(_))));
    }

    #[test]
    fn enumerates_tied_paths() {
        let net = Network::new(
            ids(&[1, 2, 3, 4]),
            [
                ArcSpec::new(1, 2, 1, 0),
                ArcSpec::new(1, 3, 1, 0),
                ArcSpec::new(2, 4, 1, 0),
                ArcSpec::new(3, 4, 1, 0),
            ],
            ids(&[1]),
            ids(&[4]),
        )
        .unwrap();
        let d = shortest_to_sinks(&net).unwrap();
        let all = all_shortest_paths(&net, &d, NodeId(1), 10);
        assert_eq!(all, vec![ids(&[1, 2, 4]), ids(&[1, 3, 4])]);
        assert_eq!(d.path(NodeId(1)).unwrap(), ids(&[1, 2, 4]));
    }
}
