//! Checks that a network meets the standing assumptions of the policy:
//! connectivity, a (budget-)feasible path from every source, no
//! non-positive primary circuits, no negative secondary circuits, and no
//! negative path between two sinks.

use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;

use crate::network::{Network, NodeId};
use crate::oracle::{detect_nonpositive_circuit, sink_pair_paths_nonnegative, CircuitThreshold, CostSelector};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub weakly_connected: bool,
    pub feasible_path_per_source: BTreeMap<NodeId, bool>,
    pub nonpositive_gamma_circuit: Option<Vec<NodeId>>,
    pub negative_sigma_circuit: Option<Vec<NodeId>>,
    /// Arcs with `sigma < 0`; the budget engine does not support them.
    pub negative_sigma_arcs: Vec<(NodeId, NodeId)>,
    pub negative_sink_pair_path: Option<Vec<NodeId>>,
    pub gamma_bound: i64,
    pub sigma_bound: i64,
    /// Worst-case token counts fit comfortably in 64 bits.
    pub magnitude_ok: bool,
    pub messages: Vec<String>,
}

impl ValidationReport {
    pub fn passes(&self) -> bool {
        self.messages.is_empty()
    }
}

/// Evaluates every assumption and collects the failures. With `c_max`, the
/// path condition requires a path whose secondary cost stays within the
/// budget, and negative secondary costs are reported as unsupported.
pub fn validate_assumptions(net: &Network, c_max: Option<usize>) -> ValidationReport {
    let mut messages = Vec::new();
    if net.sources().is_empty() {
        messages.push("network has no source".to_owned());
    }
    if net.sinks().is_empty() {
        messages.push("network has no sink".to_owned());
    }

    let weakly_connected = weakly_connected(net);
    if !weakly_connected {
        messages.push("network is not weakly connected".to_owned());
    }

    let negative_sigma_arcs: Vec<_> = net
        .arcs()
        .iter()
        .filter(|a| a.sigma < 0)
        .map(|a| (net.id(a.tail), net.id(a.head)))
        .collect();
    if c_max.is_some() && !negative_sigma_arcs.is_empty() {
        messages.push(format!(
            "negative secondary costs are not supported with a budget ({} arcs)",
            negative_sigma_arcs.len()
        ));
    }

    let feasible_path_per_source: BTreeMap<NodeId, bool> = match c_max {
        Some(c) if negative_sigma_arcs.is_empty() => budget_reachable(net, c),
        _ => sink_reachable(net),
    };
    for (s, ok) in &feasible_path_per_source {
        if !ok {
            messages.push(match c_max {
                Some(c) => format!("source {s} has no path to a sink within budget {c}"),
                None => format!("source {s} has no path to a sink"),
            });
        }
    }

    let nonpositive_gamma_circuit =
        detect_nonpositive_circuit(net, CostSelector::Gamma, CircuitThreshold::NonPositive);
    if let Some(c) = &nonpositive_gamma_circuit {
        messages.push(format!("circuit with non-positive primary length: {}", join(c)));
    }
    let negative_sigma_circuit = detect_nonpositive_circuit(net, CostSelector::Sigma, CircuitThreshold::Negative);
    if let Some(c) = &negative_sigma_circuit {
        messages.push(format!("circuit with negative secondary cost: {}", join(c)));
    }
    // distances between sinks are only meaningful without non-positive circuits
    let negative_sink_pair_path = if nonpositive_gamma_circuit.is_none() {
        sink_pair_paths_nonnegative(net).1
    } else {
        None
    };
    if let Some(p) = &negative_sink_pair_path {
        messages.push(format!("negative path between sinks: {}", join(p)));
    }

    let gamma_bound = net.gamma_bound();
    let sigma_bound = net.sigma_bound();
    let magnitude_ok = magnitude_ok(net, c_max);
    if !magnitude_ok {
        messages.push("cost magnitudes could overflow 64-bit token counts".to_owned());
    }

    ValidationReport {
        weakly_connected,
        feasible_path_per_source,
        nonpositive_gamma_circuit,
        negative_sigma_circuit,
        negative_sigma_arcs,
        negative_sink_pair_path,
        gamma_bound,
        sigma_bound,
        magnitude_ok,
        messages,
    }
}

fn join(ids: &[NodeId]) -> String {
    ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("-")
}

fn weakly_connected(net: &Network) -> bool {
    let n = net.len();
    if n == 0 {
        return false;
    }
    let mut adj = vec![Vec::new(); n];
    for a in net.arcs() {
        adj[a.tail].push(a.head);
        adj[a.head].push(a.tail);
    }
    let mut seen = vec![false; n];
    seen[0] = true;
    let mut queue = VecDeque::from([0]);
    let mut count = 1;
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                count += 1;
                queue.push_back(j);
            }
        }
    }
    count == n
}

fn sink_reachable(net: &Network) -> BTreeMap<NodeId, bool> {
    let n = net.len();
    let mut incoming = vec![Vec::new(); n];
    for a in net.arcs() {
        incoming[a.head].push(a.tail);
    }
    let mut seen: Vec<bool> = (0..n).map(|i| net.is_sink(i)).collect();
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| net.is_sink(i)).collect();
    while let Some(j) = queue.pop_front() {
        for &i in &incoming[j] {
            if !seen[i] {
                seen[i] = true;
                queue.push_back(i);
            }
        }
    }
    (0..n).filter(|&i| net.is_source(i)).map(|i| (net.id(i), seen[i])).collect()
}

fn budget_reachable(net: &Network, c_max: usize) -> BTreeMap<NodeId, bool> {
    let w = c_max + 1;
    let mut out = BTreeMap::new();
    for s in (0..net.len()).filter(|&i| net.is_source(i)) {
        let mut seen = vec![false; net.len() * w];
        seen[s * w] = true;
        let mut queue = VecDeque::from([(s, 0usize)]);
        let mut found = false;
        while let Some((i, c)) = queue.pop_front() {
            if net.is_sink(i) {
                found = true;
                break;
            }
            for a in net.out_arcs(i) {
                let cj = c + a.sigma as usize;
                if cj <= c_max && !seen[a.head * w + cj] {
                    seen[a.head * w + cj] = true;
                    queue.push_back((a.head, cj));
                }
            }
        }
        out.insert(net.id(s), found);
    }
    out
}

/// Admissible states hold at most `gamma_bar * n^2` tokens in magnitude per
/// node and bucket; require that bound with a wide safety margin.
fn magnitude_ok(net: &Network, c_max: Option<usize>) -> bool {
    let n = net.len() as i128 * (c_max.unwrap_or(0) as i128 + 1);
    let g = net.arcs().iter().map(|a| a.gamma.unsigned_abs()).max().unwrap_or(0) as i128;
    let s = net.arcs().iter().map(|a| a.sigma.unsigned_abs()).max().unwrap_or(0) as i128;
    let worst = (g.max(s) + 1) * n * n * n;
    worst < (i64::MAX as i128) / 16
}
