//! Network model: nodes, integer-cost arcs, source and sink sets, and the
//! per-node token state.
//!
//! Nodes carry caller-chosen integer identifiers but are stored densely in
//! ascending id order. Arcs are kept sorted by `(tail id, head id)`, so the
//! out-arcs of a node form a contiguous slice sorted by head id. That slice
//! order is the scan order used by the deterministic choice model.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_integer::Integer;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u32> for NodeId {
    fn from(v: u32) -> Self {
        NodeId(v)
    }
}

/// An arc as it appears in documents and modification payloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArcSpec {
    pub tail: NodeId,
    pub head: NodeId,
    pub gamma: i64,
    #[serde(default)]
    pub sigma: i64,
}

impl ArcSpec {
    pub fn new(tail: u32, head: u32, gamma: i64, sigma: i64) -> Self {
        ArcSpec {
            tail: NodeId(tail),
            head: NodeId(head),
            gamma,
            sigma,
        }
    }
}

/// An arc in dense-index form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arc {
    pub tail: usize,
    pub head: usize,
    pub gamma: i64,
    pub sigma: i64,
}

/// The JSON document form of a [`Network`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDoc {
    pub nodes: Vec<NodeId>,
    pub arcs: Vec<ArcSpec>,
    pub sources: Vec<NodeId>,
    pub sinks: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    ids: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    arcs: Vec<Arc>,
    /// `offsets[i]..offsets[i + 1]` is the out-arc range of node `i`.
    offsets: Vec<usize>,
    source: Vec<bool>,
    sink: Vec<bool>,
    metadata: Option<serde_json::Value>,
}

impl Network {
    pub fn new(
        nodes: impl IntoIterator<Item = NodeId>,
        arcs: impl IntoIterator<Item = ArcSpec>,
        sources: impl IntoIterator<Item = NodeId>,
        sinks: impl IntoIterator<Item = NodeId>,
    ) -> Result<Self> {
        let node_set: BTreeSet<NodeId> = nodes.into_iter().collect();
        let ids: Vec<NodeId> = node_set.into_iter().collect();
        let index: HashMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let lookup = |id: NodeId| index.get(&id).copied().ok_or(Error::UnknownNode(id));

        let mut dense = Vec::new();
        for a in arcs {
            if a.tail == a.head {
                return Err(invalid(format!("self-loop arc at node {}", a.tail)));
            }
            dense.push(Arc {
                tail: lookup(a.tail)?,
                head: lookup(a.head)?,
                gamma: a.gamma,
                sigma: a.sigma,
            });
        }
        dense.sort_by_key(|a| (a.tail, a.head));
        if let Some(w) = dense.windows(2).find(|w| (w[0].tail, w[0].head) == (w[1].tail, w[1].head)) {
            return Err(invalid(format!(
                "duplicate arc ({}, {})",
                ids[w[0].tail], ids[w[0].head]
            )));
        }

        let mut offsets = vec![0usize; ids.len() + 1];
        for a in &dense {
            offsets[a.tail + 1] += 1;
        }
        for i in 0..ids.len() {
            offsets[i + 1] += offsets[i];
        }

        let mut source = vec![false; ids.len()];
        let mut sink = vec![false; ids.len()];
        for s in sources {
            source[lookup(s)?] = true;
        }
        for t in sinks {
            sink[lookup(t)?] = true;
        }
        if let Some(i) = (0..ids.len()).find(|&i| source[i] && sink[i]) {
            return Err(invalid(format!("node {} is both a source and a sink", ids[i])));
        }

        Ok(Network {
            ids,
            index,
            arcs: dense,
            offsets,
            source,
            sink,
            metadata: None,
        })
    }

    pub fn from_doc(doc: NetworkDoc) -> Result<Self> {
        let mut net = Network::new(doc.nodes, doc.arcs, doc.sources, doc.sinks)?;
        net.metadata = doc.metadata;
        Ok(net)
    }

    pub fn to_doc(&self) -> NetworkDoc {
        NetworkDoc {
            nodes: self.ids.clone(),
            arcs: self.arc_specs(),
            sources: self.sources(),
            sinks: self.sinks(),
            metadata: self.metadata.clone(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Network::from_doc(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("network document serializes")
    }

    pub fn with_metadata(mut self, metadata: serde_json::Value) -> Self {
        self.metadata = Some(metadata);
        self
    }

    pub fn metadata(&self) -> Option<&serde_json::Value> {
        self.metadata.as_ref()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn id(&self, idx: usize) -> NodeId {
        self.ids[idx]
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn require(&self, id: NodeId) -> Result<usize> {
        self.index_of(id).ok_or(Error::UnknownNode(id))
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }

    /// All arcs in canonical `(tail, head)` order.
    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn out_arcs(&self, idx: usize) -> &[Arc] {
        &self.arcs[self.offsets[idx]..self.offsets[idx + 1]]
    }

    /// Position of the arc `(tail, head)` in [`Network::arcs`].
    pub fn arc_position(&self, tail: usize, head: usize) -> Option<usize> {
        let lo = self.offsets[tail];
        self.out_arcs(tail)
            .binary_search_by_key(&head, |a| a.head)
            .ok()
            .map(|p| lo + p)
    }

    pub fn arc(&self, tail: NodeId, head: NodeId) -> Option<&Arc> {
        let (t, h) = (self.index_of(tail)?, self.index_of(head)?);
        self.arc_position(t, h).map(|p| &self.arcs[p])
    }

    pub fn is_sink(&self, idx: usize) -> bool {
        self.sink[idx]
    }

    pub fn is_source(&self, idx: usize) -> bool {
        self.source[idx]
    }

    pub fn sources(&self) -> Vec<NodeId> {
        self.indices_where(&self.source)
    }

    pub fn sinks(&self) -> Vec<NodeId> {
        self.indices_where(&self.sink)
    }

    fn indices_where(&self, mask: &[bool]) -> Vec<NodeId> {
        (0..self.len()).filter(|&i| mask[i]).map(|i| self.ids[i]).collect()
    }

    pub fn arc_specs(&self) -> Vec<ArcSpec> {
        self.arcs
            .iter()
            .map(|a| ArcSpec {
                tail: self.ids[a.tail],
                head: self.ids[a.head],
                gamma: a.gamma,
                sigma: a.sigma,
            })
            .collect()
    }

    /// Largest primary arc cost; 0 for an arcless network.
    pub fn gamma_bound(&self) -> i64 {
        self.arcs.iter().map(|a| a.gamma).max().unwrap_or(0)
    }

    pub fn sigma_bound(&self) -> i64 {
        self.arcs.iter().map(|a| a.sigma).max().unwrap_or(0)
    }

    /// Primary length and secondary cost of a node sequence, checking that
    /// consecutive nodes are joined by arcs.
    pub fn walk_cost(&self, nodes: &[NodeId]) -> Result<(i64, i64)> {
        let mut length = 0i64;
        let mut cost = 0i64;
        for w in nodes.windows(2) {
            let arc = self
                .arc(w[0], w[1])
                .ok_or_else(|| invalid(format!("({}, {}) is not an arc", w[0], w[1])))?;
            length += arc.gamma;
            cost += arc.sigma;
        }
        Ok((length, cost))
    }
}

/// A node sequence along arcs together with its primary length and
/// secondary cost. Nodes may repeat.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Walk {
    pub nodes: Vec<NodeId>,
    pub length: i64,
    pub secondary_cost: i64,
}

impl Walk {
    pub fn new(net: &Network, nodes: Vec<NodeId>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(invalid("empty walk"));
        }
        let (length, secondary_cost) = net.walk_cost(&nodes)?;
        Ok(Walk {
            nodes,
            length,
            secondary_cost,
        })
    }

    pub fn is_simple(&self) -> bool {
        let set: BTreeSet<_> = self.nodes.iter().collect();
        set.len() == self.nodes.len()
    }

    pub fn arc_count(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }
}

/// A walk without repeated nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Path(Walk);

impl Path {
    pub fn new(net: &Network, nodes: Vec<NodeId>) -> Result<Self> {
        let walk = Walk::new(net, nodes)?;
        if !walk.is_simple() {
            return Err(invalid("path repeats a node"));
        }
        Ok(Path(walk))
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.0.nodes
    }

    pub fn length(&self) -> i64 {
        self.0.length
    }

    pub fn secondary_cost(&self) -> i64 {
        self.0.secondary_cost
    }

    pub fn into_walk(self) -> Walk {
        self.0
    }
}

/// Token count per node, stored in the network's dense order. Values may be
/// negative (virtual tokens); sink entries are always zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NetworkState {
    values: Vec<i64>,
}

impl NetworkState {
    pub fn zeros(net: &Network) -> Self {
        NetworkState {
            values: vec![0; net.len()],
        }
    }

    /// Builds a state from `(node, count)` pairs; unlisted nodes hold 0.
    pub fn from_pairs(net: &Network, pairs: impl IntoIterator<Item = (NodeId, i64)>) -> Result<Self> {
        let mut st = NetworkState::zeros(net);
        for (id, v) in pairs {
            let i = net.require(id)?;
            if net.is_sink(i) && v != 0 {
                return Err(invalid(format!("sink {id} must hold 0 tokens")));
            }
            st.values[i] = v;
        }
        Ok(st)
    }

    /// Builds a state from values listed in ascending node-id order.
    pub fn from_values(net: &Network, values: Vec<i64>) -> Result<Self> {
        if values.len() != net.len() {
            return Err(invalid(format!(
                "state has {} entries, network has {} nodes",
                values.len(),
                net.len()
            )));
        }
        NetworkState::from_pairs(net, net.ids().iter().copied().zip(values))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [i64] {
        &mut self.values
    }

    pub fn get(&self, net: &Network, id: NodeId) -> Result<i64> {
        Ok(self.values[net.require(id)?])
    }

    pub fn to_map(&self, net: &Network) -> BTreeMap<NodeId, i64> {
        net.ids().iter().copied().zip(self.values.iter().copied()).collect()
    }

    pub(crate) fn check_shape(&self, net: &Network) -> Result<()> {
        if self.values.len() != net.len() {
            return Err(invalid(format!(
                "state has {} entries, network has {} nodes",
                self.values.len(),
                net.len()
            )));
        }
        Ok(())
    }
}

/// Sum of all node states (negative entries count negatively).
pub fn total_tokens(state: &NetworkState) -> i64 {
    state.values.iter().sum()
}

/// Checks `x_i - x_j <= gamma_ij` on every arc leaving a non-sink node and
/// lists the arcs that violate it. Arcs out of sinks carry no tokens (a
/// token reaching a sink leaves the network), so they impose nothing.
pub fn is_admissible(net: &Network, state: &NetworkState) -> Result<(bool, Vec<(NodeId, NodeId)>)> {
    state.check_shape(net)?;
    let x = state.values();
    let violations: Vec<_> = net
        .arcs()
        .iter()
        .filter(|a| !net.is_sink(a.tail) && x[a.tail] - x[a.head] > a.gamma)
        .map(|a| (net.id(a.tail), net.id(a.head)))
        .collect();
    Ok((violations.is_empty(), violations))
}

/// Node-arc incidence matrix with the sink rows removed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidenceMatrix {
    pub rows: Vec<NodeId>,
    pub columns: Vec<(NodeId, NodeId)>,
    pub entries: Vec<Vec<i64>>,
}

impl IncidenceMatrix {
    /// `B * u` for an arc-indexed control vector.
    pub fn apply(&self, u: &[i64]) -> Vec<i64> {
        self.entries
            .iter()
            .map(|row| row.iter().zip(u).map(|(b, u)| b * u).sum())
            .collect()
    }
}

pub fn incidence_matrix(net: &Network) -> IncidenceMatrix {
    let rows: Vec<usize> = (0..net.len()).filter(|&i| !net.is_sink(i)).collect();
    let row_of: HashMap<usize, usize> = rows.iter().enumerate().map(|(r, &i)| (i, r)).collect();
    let mut entries = vec![vec![0i64; net.arc_count()]; rows.len()];
    for (col, a) in net.arcs().iter().enumerate() {
        if let Some(&r) = row_of.get(&a.tail) {
            entries[r][col] = -1;
        }
        if let Some(&r) = row_of.get(&a.head) {
            entries[r][col] = 1;
        }
    }
    IncidenceMatrix {
        rows: rows.iter().map(|&i| net.id(i)).collect(),
        columns: net.arcs().iter().map(|a| (net.id(a.tail), net.id(a.head))).collect(),
        entries,
    }
}

/// An arc whose primary cost is a rational number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RationalArc {
    pub tail: NodeId,
    pub head: NodeId,
    pub gamma: Ratio<i64>,
    pub sigma: i64,
}

/// Rescales rational costs by the least common multiple `mu` of their
/// denominators, giving an integer-cost network with the same shortest-path
/// structure. Returns the network and `mu`.
pub fn scale_rational_costs(
    nodes: impl IntoIterator<Item = NodeId>,
    arcs: &[RationalArc],
    sources: impl IntoIterator<Item = NodeId>,
    sinks: impl IntoIterator<Item = NodeId>,
) -> Result<(Network, i64)> {
    let mut mu: i64 = 1;
    for a in arcs {
        let d = a.gamma.denom().abs();
        let g = mu.gcd(&d);
        mu = (mu / g)
            .checked_mul(d)
            .ok_or_else(|| Error::Overflow("lcm of cost denominators".into()))?;
    }
    let mut scaled = Vec::with_capacity(arcs.len());
    for a in arcs {
        let factor = mu / a.gamma.denom();
        let gamma = a
            .gamma
            .numer()
            .checked_mul(factor)
            .ok_or_else(|| Error::Overflow(format!("scaled cost of arc ({}, {})", a.tail, a.head)))?;
        scaled.push(ArcSpec {
            tail: a.tail,
            head: a.head,
            gamma,
            sigma: a.sigma,
        });
    }
    Ok((Network::new(nodes, scaled, sources, sinks)?, mu))
}
