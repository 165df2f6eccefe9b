//! The threshold policy with a secondary-cost budget.
//!
//! Each node buffers tokens in buckets indexed by the secondary cost `c`
//! they accumulated on the way in, `0..=c_max`. A token carrying `c` may
//! take arc `(i, j)` only if `c + sigma_ij <= c_max` and
//! `x_i^c + 1 - x_j^{c + sigma_ij} > gamma_ij`. With no budget-feasible
//! out-arc at all it falls asleep in its bucket.
//!
//! The same dynamics are also available as an ordinary unconstrained network
//! over `(node, c)` pairs ([`expand`]), whose trajectories match the bucketed
//! engine under [`lift_state`] / [`project_state`].

use std::collections::VecDeque;

use serde::Serialize;

use crate::choice::Chooser;
use crate::error::{invalid, Error, Result};
use crate::network::{ArcSpec, Network, NetworkState, NodeId};
use crate::policy::{Policy, StateDelta, StepResult, Terminal, TokenOutcome};

/// Per-node bucket vectors, stored in the network's dense order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BucketedState {
    c_max: usize,
    values: Vec<i64>,
}

impl BucketedState {
    pub fn zeros(net: &Network, c_max: usize) -> Self {
        BucketedState {
            c_max,
            values: vec![0; net.len() * (c_max + 1)],
        }
    }

    pub fn from_entries(
        net: &Network,
        c_max: usize,
        entries: impl IntoIterator<Item = (NodeId, usize, i64)>,
    ) -> Result<Self> {
        let mut st = BucketedState::zeros(net, c_max);
        for (id, c, v) in entries {
            let i = net.require(id)?;
            if c > c_max {
                return Err(invalid(format!("bucket {c} above c_max {c_max}")));
            }
            if net.is_sink(i) && v != 0 {
                return Err(invalid(format!("sink {id} must hold 0 tokens")));
            }
            st.values[i * (c_max + 1) + c] = v;
        }
        Ok(st)
    }

    pub fn c_max(&self) -> usize {
        self.c_max
    }

    pub fn width(&self) -> usize {
        self.c_max + 1
    }

    pub fn node_count(&self) -> usize {
        self.values.len() / self.width()
    }

    pub fn get(&self, net: &Network, id: NodeId, c: usize) -> Result<i64> {
        let i = net.require(id)?;
        if c > self.c_max {
            return Err(invalid(format!("bucket {c} above c_max {}", self.c_max)));
        }
        Ok(self.values[i * self.width() + c])
    }

    /// Bucket vector of the node at dense index `i`.
    pub fn row(&self, i: usize) -> &[i64] {
        &self.values[i * self.width()..(i + 1) * self.width()]
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [i64] {
        &mut self.values
    }

    pub(crate) fn from_raw(c_max: usize, values: Vec<i64>) -> Self {
        BucketedState { c_max, values }
    }

    pub fn total(&self) -> i64 {
        self.values.iter().sum()
    }

    /// Non-zero components as `(node, c, value)`.
    pub fn nonzero(&self, net: &Network) -> Vec<(NodeId, usize, i64)> {
        let w = self.width();
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(k, &v)| (net.id(k / w), k % w, v))
            .collect()
    }

    fn check_shape(&self, net: &Network, c_max: usize) -> Result<()> {
        if self.c_max != c_max || self.values.len() != net.len() * (c_max + 1) {
            return Err(invalid(format!(
                "bucketed state shape ({} values, c_max {}) does not match network ({} nodes, c_max {})",
                self.values.len(),
                self.c_max,
                net.len(),
                c_max
            )));
        }
        Ok(())
    }
}

/// A network paired with a budget, plus the set of `(node, c)` buckets a
/// token injected at a source can ever occupy.
#[derive(Debug, Clone)]
pub struct ConstrainedNetwork {
    net: Network,
    c_max: usize,
    reachable: Vec<bool>,
}

impl ConstrainedNetwork {
    pub fn new(net: Network, c_max: usize) -> Result<Self> {
        if let Some(a) = net.arcs().iter().find(|a| a.sigma < 0) {
            return Err(invalid(format!(
                "negative secondary cost on arc ({}, {}) is not supported",
                net.id(a.tail),
                net.id(a.head)
            )));
        }
        let reachable = reachable_buckets(&net, c_max);
        Ok(ConstrainedNetwork { net, c_max, reachable })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn into_network(self) -> Network {
        self.net
    }

    pub fn c_max(&self) -> usize {
        self.c_max
    }

    pub fn is_reachable(&self, i: usize, c: usize) -> bool {
        self.reachable[i * (self.c_max + 1) + c]
    }

    pub fn reachable_mask(&self) -> &[bool] {
        &self.reachable
    }
}

/// Buckets reachable from `(s, 0)` for every source, never continuing past a
/// sink.
fn reachable_buckets(net: &Network, c_max: usize) -> Vec<bool> {
    let w = c_max + 1;
    let mut seen = vec![false; net.len() * w];
    let mut queue = VecDeque::new();
    for s in (0..net.len()).filter(|&i| net.is_source(i)) {
        seen[s * w] = true;
        queue.push_back((s, 0usize));
    }
    while let Some((i, c)) = queue.pop_front() {
        if net.is_sink(i) {
            continue;
        }
        for a in net.out_arcs(i) {
            let cj = c + a.sigma as usize;
            if cj <= c_max && !seen[a.head * w + cj] {
                seen[a.head * w + cj] = true;
                queue.push_back((a.head, cj));
            }
        }
    }
    seen
}

/// Admissibility over reachable buckets: `x_i^c - x_j^{c + sigma} <= gamma`
/// for every budget-feasible arc out of a non-sink whose endpoints are both
/// reachable.
/// Violations are reported as `(tail, head, c)`.
pub fn is_admissible_constrained(
    cn: &ConstrainedNetwork,
    state: &BucketedState,
) -> Result<(bool, Vec<(NodeId, NodeId, usize)>)> {
    state.check_shape(&cn.net, cn.c_max)?;
    let w = cn.c_max + 1;
    let x = state.values();
    let mut violations = Vec::new();
    for a in cn.net.arcs() {
        for c in 0..w {
            let cj = c + a.sigma as usize;
            if cj > cn.c_max || cn.net.is_sink(a.tail) || !cn.is_reachable(a.tail, c) || !cn.is_reachable(a.head, cj) {
                continue;
            }
            if x[a.tail * w + c] - x[a.head * w + cj] > a.gamma {
                violations.push((cn.net.id(a.tail), cn.net.id(a.head), c));
            }
        }
    }
    Ok((violations.is_empty(), violations))
}

/// Outcome of a constrained step; the walk's final budget is its
/// `secondary_cost`.
pub type ConstrainedStep = StepResult;

fn walk_bucketed(
    cn: &ConstrainedNetwork,
    x: &mut [i64],
    start: usize,
    start_c: usize,
    chooser: &mut Chooser,
    resident: bool,
    policy: Policy,
) -> Result<TokenOutcome> {
    let net = &cn.net;
    let c_max = cn.c_max;
    let w = c_max + 1;
    let cap = match policy {
        Policy::Original => net.len() * w,
        Policy::Enhanced => {
            let gbar = net.arcs().iter().map(|a| a.gamma.unsigned_abs()).max().unwrap_or(0).max(1) as usize;
            let n = net.len() * w;
            n.saturating_mul(1usize.saturating_add(gbar.saturating_mul(n)))
        }
    };
    let (mut i, mut c) = (start, start_c);
    if resident {
        x[i * w + c] -= 1;
    }
    let mut walk = vec![net.id(i)];
    let mut transitions = 0usize;
    let mut virtual_tokens = 0i64;

    let finish = |walk, terminal, transitions, virtual_tokens, c: usize, asleep| TokenOutcome {
        walk,
        terminal,
        elementary_transitions: transitions,
        virtual_tokens_generated: virtual_tokens,
        secondary_cost: c as i64,
        asleep,
    };

    loop {
        if net.is_sink(i) {
            return Ok(finish(walk, Terminal::Exited(net.id(i)), transitions, virtual_tokens, c, false));
        }
        let occupancy = x[i * w + c] + 1;
        let feasible = || net.out_arcs(i).iter().filter(|a| c + a.sigma as usize <= c_max);
        let permitted = |a: &&crate::network::Arc| occupancy - x[a.head * w + c + a.sigma as usize] > a.gamma;

        if feasible().next().is_none() {
            x[i * w + c] += 1;
            return Ok(finish(walk, Terminal::Stopped(net.id(i)), transitions, virtual_tokens, c, true));
        }
        let count = feasible().filter(permitted).count();
        let arc = if count > 0 {
            let k = chooser.pick(count);
            *feasible().filter(permitted).nth(k).expect("pick is within count")
        } else if policy == Policy::Enhanced {
            let best = *feasible()
                .min_by_key(|a| a.gamma + x[a.head * w + c + a.sigma as usize])
                .expect("feasible arcs exist");
            let block = best.gamma + x[best.head * w + c + best.sigma as usize] - x[i * w + c];
            x[i * w + c] += block;
            virtual_tokens += block;
            best
        } else {
            x[i * w + c] += 1;
            return Ok(finish(walk, Terminal::Stopped(net.id(i)), transitions, virtual_tokens, c, false));
        };
        transitions += 1;
        if transitions > cap {
            return Err(Error::WalkDiverged {
                start: net.id(start),
                cap,
            });
        }
        c += arc.sigma as usize;
        i = arc.head;
        walk.push(net.id(i));
    }
}

fn step_from(outcome: TokenOutcome) -> ConstrainedStep {
    let delta = match outcome.terminal {
        Terminal::Stopped(n) => StateDelta::Incremented(n),
        Terminal::Exited(_) => StateDelta::Unchanged,
    };
    StepResult { outcome, delta }
}

fn check_source(cn: &ConstrainedNetwork, state: &BucketedState, source: NodeId) -> Result<usize> {
    state.check_shape(&cn.net, cn.c_max)?;
    let s = cn.net.require(source)?;
    if cn.net.is_sink(s) {
        return Err(invalid(format!("cannot inject at sink {source}")));
    }
    if !cn.net.is_source(s) {
        return Err(invalid(format!("node {source} is not a source")));
    }
    Ok(s)
}

/// Injects a token with budget 0 at `source` under the original policy.
pub fn constrained_inject(
    cn: &ConstrainedNetwork,
    state: &mut BucketedState,
    source: NodeId,
    chooser: &mut Chooser,
) -> Result<ConstrainedStep> {
    constrained_inject_with(cn, state, source, Policy::Original, chooser)
}

/// Enhanced variant: the asleep test comes first, so a token with no
/// budget-feasible out-arc never generates virtual tokens.
pub fn constrained_inject_enhanced(
    cn: &ConstrainedNetwork,
    state: &mut BucketedState,
    source: NodeId,
    chooser: &mut Chooser,
) -> Result<ConstrainedStep> {
    constrained_inject_with(cn, state, source, Policy::Enhanced, chooser)
}

pub fn constrained_inject_with(
    cn: &ConstrainedNetwork,
    state: &mut BucketedState,
    source: NodeId,
    policy: Policy,
    chooser: &mut Chooser,
) -> Result<ConstrainedStep> {
    let s = check_source(cn, state, source)?;
    let out = walk_bucketed(cn, state.values_mut(), s, 0, chooser, false, policy)?;
    Ok(step_from(out))
}

/// Settles resident above-threshold tokens bucket by bucket, scanning
/// `(node id, c)` ascending over reachable buckets.
pub fn constrained_settle(cn: &ConstrainedNetwork, state: &mut BucketedState) -> Result<Vec<TokenOutcome>> {
    state.check_shape(&cn.net, cn.c_max)?;
    let net = &cn.net;
    let w = cn.c_max + 1;
    let nw = net.len() * w;
    let gbar = net.arcs().iter().map(|a| a.gamma.unsigned_abs()).max().unwrap_or(0).max(1);
    let violation: u64 = {
        let x = state.values();
        let mut v = 0u64;
        for a in net.arcs() {
            for c in 0..w {
                let cj = c + a.sigma as usize;
                if cj < w && cn.is_reachable(a.tail, c) && cn.is_reachable(a.head, cj) {
                    v += (x[a.tail * w + c] - x[a.head * w + cj] - a.gamma).max(0) as u64;
                }
            }
        }
        v
    };
    let bound = (nw as u64)
        .saturating_mul(violation.saturating_add((nw as u64).saturating_mul(gbar)))
        .max(1) as usize;

    let unsettled = |x: &[i64]| -> Option<(usize, usize)> {
        for i in (0..net.len()).filter(|&i| !net.is_sink(i)) {
            for c in 0..w {
                if !cn.is_reachable(i, c) {
                    continue;
                }
                let xi = x[i * w + c];
                let above = net.out_arcs(i).iter().any(|a| {
                    let cj = c + a.sigma as usize;
                    cj < w && xi - x[a.head * w + cj] > a.gamma
                });
                if above {
                    return Some((i, c));
                }
            }
        }
        None
    };

    let mut chooser = Chooser::deterministic();
    let mut walks = Vec::new();
    while let Some((i, c)) = unsettled(state.values()) {
        if walks.len() >= bound {
            return Err(Error::SettleDiverged(bound));
        }
        walks.push(walk_bucketed(cn, state.values_mut(), i, c, &mut chooser, true, Policy::Original)?);
    }
    Ok(walks)
}

/// Bucketed counterpart of [`crate::policy::all_walks_exit`].
pub fn all_walks_exit_constrained(
    cn: &ConstrainedNetwork,
    state: &BucketedState,
    source: NodeId,
    deterministic: bool,
) -> Result<bool> {
    state.check_shape(&cn.net, cn.c_max)?;
    let net = &cn.net;
    let s = net.require(source)?;
    let w = cn.c_max + 1;
    let x = state.values();
    let permitted = |i: usize, c: usize| {
        let occ = x[i * w + c] + 1;
        net.out_arcs(i).iter().filter_map(move |a| {
            let cj = c + a.sigma as usize;
            (cj < w && occ - x[a.head * w + cj] > a.gamma).then_some((a.head, cj))
        })
    };
    if deterministic {
        let (mut i, mut c) = (s, 0usize);
        for _ in 0..=net.len() * w {
            if net.is_sink(i) {
                return Ok(true);
            }
            match permitted(i, c).next() {
                Some((j, cj)) => (i, c) = (j, cj),
                None => return Ok(false),
            }
        }
        return Err(Error::WalkDiverged {
            start: source,
            cap: net.len() * w,
        });
    }
    let mut seen = vec![false; net.len() * w];
    let mut stack = vec![(s, 0usize)];
    seen[s * w] = true;
    while let Some((i, c)) = stack.pop() {
        if net.is_sink(i) {
            continue;
        }
        let mut any = false;
        for (j, cj) in permitted(i, c) {
            any = true;
            if !seen[j * w + cj] {
                seen[j * w + cj] = true;
                stack.push((j, cj));
            }
        }
        if !any {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The base network replicated once per budget step, as a plain network.
/// Node `i^c` gets id `dense(i) * (c_max + 1) + c`, so expanded ids sort by
/// `(base id, c)` and the out-arcs of `i^c` scan in the same order as the
/// base out-arcs of `i`. Expanded arcs carry `sigma = 0`.
#[derive(Debug, Clone)]
pub struct ExpandedNetwork {
    pub network: Network,
    c_max: usize,
    base_ids: Vec<NodeId>,
}

impl ExpandedNetwork {
    pub fn c_max(&self) -> usize {
        self.c_max
    }

    /// Base node and budget step of an expanded node.
    pub fn provenance(&self, id: NodeId) -> (NodeId, usize) {
        let w = self.c_max + 1;
        let k = id.0 as usize;
        (self.base_ids[k / w], k % w)
    }

    /// Expanded id of `base^c`, whether or not it survived pruning.
    pub fn node_of(&self, base_index: usize, c: usize) -> NodeId {
        NodeId((base_index * (self.c_max + 1) + c) as u32)
    }

    /// Network JSON with node ids rendered as `"i@c"`.
    pub fn to_labeled_json(&self) -> String {
        let label = |id: NodeId| {
            let (b, c) = self.provenance(id);
            format!("{b}@{c}")
        };
        let net = &self.network;
        let doc = serde_json::json!({
            "nodes": net.ids().iter().map(|&i| label(i)).collect::<Vec<_>>(),
            "arcs": net.arc_specs().iter().map(|a| serde_json::json!({
                "tail": label(a.tail),
                "head": label(a.head),
                "gamma": a.gamma,
                "sigma": a.sigma,
            })).collect::<Vec<_>>(),
            "sources": net.sources().into_iter().map(label).collect::<Vec<_>>(),
            "sinks": net.sinks().into_iter().map(label).collect::<Vec<_>>(),
        });
        serde_json::to_string_pretty(&doc).expect("expanded document serializes")
    }
}

fn build_expanded(net: &Network, c_max: usize, keep: impl Fn(usize, usize) -> bool) -> Result<ExpandedNetwork> {
    if let Some(a) = net.arcs().iter().find(|a| a.sigma < 0) {
        return Err(invalid(format!(
            "negative secondary cost on arc ({}, {}) is not supported",
            net.id(a.tail),
            net.id(a.head)
        )));
    }
    let w = c_max + 1;
    if net.len().checked_mul(w).is_none_or(|t| t > u32::MAX as usize) {
        return Err(Error::Overflow("expanded network node count".into()));
    }
    let id = |i: usize, c: usize| NodeId((i * w + c) as u32);
    let mut nodes = Vec::new();
    let mut sources = Vec::new();
    let mut sinks = Vec::new();
    for i in 0..net.len() {
        for c in 0..w {
            if !keep(i, c) {
                continue;
            }
            nodes.push(id(i, c));
            if net.is_sink(i) {
                sinks.push(id(i, c));
            } else if c == 0 && net.is_source(i) {
                sources.push(id(i, c));
            }
        }
    }
    let mut arcs = Vec::new();
    for a in net.arcs() {
        for c in 0..w {
            let cj = c + a.sigma as usize;
            if cj < w && keep(a.tail, c) && keep(a.head, cj) {
                arcs.push(ArcSpec {
                    tail: id(a.tail, c),
                    head: id(a.head, cj),
                    gamma: a.gamma,
                    sigma: 0,
                });
            }
        }
    }
    Ok(ExpandedNetwork {
        network: Network::new(nodes, arcs, sources, sinks)?,
        c_max,
        base_ids: net.ids().to_vec(),
    })
}

/// Expanded network restricted to the buckets reachable from the sources.
pub fn expand(net: &Network, c_max: usize) -> Result<ExpandedNetwork> {
    let w = c_max + 1;
    let reach = reachable_buckets(net, c_max);
    build_expanded(net, c_max, |i, c| reach[i * w + c])
}

/// Expanded network over every `(node, c)` pair, without pruning.
pub fn expand_full(net: &Network, c_max: usize) -> Result<ExpandedNetwork> {
    build_expanded(net, c_max, |_, _| true)
}

/// Whether a network has no directed cycle (Kahn's algorithm).
pub fn is_acyclic(net: &Network) -> bool {
    let mut indeg = vec![0usize; net.len()];
    for a in net.arcs() {
        indeg[a.head] += 1;
    }
    let mut queue: Vec<usize> = (0..net.len()).filter(|&i| indeg[i] == 0).collect();
    let mut done = 0;
    while let Some(i) = queue.pop() {
        done += 1;
        for a in net.out_arcs(i) {
            indeg[a.head] -= 1;
            if indeg[a.head] == 0 {
                queue.push(a.head);
            }
        }
    }
    done == net.len()
}

/// Bucketed state as a state of the expanded network. Components of pruned
/// buckets are dropped.
pub fn lift_state(en: &ExpandedNetwork, state: &BucketedState) -> Result<NetworkState> {
    if state.c_max != en.c_max || state.node_count() != en.base_ids.len() {
        return Err(invalid("bucketed state does not match the expanded network"));
    }
    let values = en
        .network
        .ids()
        .iter()
        .map(|&id| state.values[id.0 as usize])
        .collect();
    NetworkState::from_values(&en.network, values)
}

/// Expanded-network state as a bucketed state; pruned buckets hold 0.
pub fn project_state(en: &ExpandedNetwork, state: &NetworkState) -> Result<BucketedState> {
    if state.len() != en.network.len() {
        return Err(invalid("state does not match the expanded network"));
    }
    let mut values = vec![0i64; en.base_ids.len() * (en.c_max + 1)];
    for (k, &id) in en.network.ids().iter().enumerate() {
        values[id.0 as usize] = state.values()[k];
    }
    Ok(BucketedState::from_raw(en.c_max, values))
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpansionStats {
    pub nodes: usize,
    pub arcs: usize,
}
