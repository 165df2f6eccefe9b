//! Structural changes to a network while tokens are buffered in it.
//!
//! Tokens held by a removed node, or by a node that becomes a sink, are
//! discarded; nodes that (re)appear start empty. The resulting state is in
//! general not admissible and must be settled before the next injection.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::constrained::{BucketedState, ConstrainedNetwork};
use crate::error::{invalid, Result};
use crate::network::{ArcSpec, Network, NetworkState, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArcRef {
    pub tail: NodeId,
    pub head: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Modification {
    RemoveNodes {
        nodes: Vec<NodeId>,
    },
    AddNodes {
        nodes: Vec<NodeId>,
        #[serde(default)]
        arcs: Vec<ArcSpec>,
    },
    RemoveArcs {
        arcs: Vec<ArcRef>,
    },
    AddArcs {
        arcs: Vec<ArcSpec>,
    },
    SetSources {
        nodes: Vec<NodeId>,
    },
    SetSinks {
        nodes: Vec<NodeId>,
    },
}

/// A modification applied once `at_step` injections have happened.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledModification {
    pub at_step: u64,
    #[serde(flatten)]
    pub modification: Modification,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub events: Vec<ScheduledModification>,
}

impl Scenario {
    pub fn from_json(s: &str) -> Result<Self> {
        let mut sc: Scenario = serde_json::from_str(s)?;
        sc.events.sort_by_key(|e| e.at_step);
        Ok(sc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

/// The modified network, its carried-over state and the net number of
/// tokens discarded on the way.
#[derive(Debug, Clone)]
pub struct Modified<N, S> {
    pub network: N,
    pub state: S,
    pub discarded: i64,
}

/// Applies `m` to the network alone.
pub fn modify_network(net: &Network, m: &Modification) -> Result<Network> {
    let mut nodes: BTreeSet<NodeId> = net.ids().iter().copied().collect();
    let mut arcs = net.arc_specs();
    let mut sources = net.sources();
    let mut sinks = net.sinks();
    let require_all = |ids: &[NodeId]| ids.iter().try_for_each(|&id| net.require(id).map(drop));

    match m {
        Modification::RemoveNodes { nodes: gone } => {
            require_all(gone)?;
            let gone: BTreeSet<_> = gone.iter().copied().collect();
            nodes.retain(|n| !gone.contains(n));
            arcs.retain(|a| !gone.contains(&a.tail) && !gone.contains(&a.head));
            sources.retain(|n| !gone.contains(n));
            sinks.retain(|n| !gone.contains(n));
        }
        Modification::AddNodes { nodes: new, arcs: new_arcs } => {
            for &id in new {
                if !nodes.insert(id) {
                    return Err(invalid(format!("node {id} already exists")));
                }
            }
            arcs.extend(new_arcs.iter().copied());
        }
        Modification::RemoveArcs { arcs: gone } => {
            for r in gone {
                if net.arc(r.tail, r.head).is_none() {
                    return Err(invalid(format!("no arc ({}, {}) to remove", r.tail, r.head)));
                }
            }
            arcs.retain(|a| !gone.iter().any(|r| (r.tail, r.head) == (a.tail, a.head)));
        }
        Modification::AddArcs { arcs: new_arcs } => arcs.extend(new_arcs.iter().copied()),
        Modification::SetSources { nodes: s } => {
            require_all(s)?;
            sources = s.clone();
        }
        Modification::SetSinks { nodes: t } => {
            require_all(t)?;
            sinks = t.clone();
        }
    }
    let out = Network::new(nodes, arcs, sources, sinks)?;
    Ok(match net.metadata() {
        Some(meta) => out.with_metadata(meta.clone()),
        None => out,
    })
}

/// Applies `m` to an unconstrained network and carries the state over by
/// node id.
pub fn apply_modification(
    net: &Network,
    state: &NetworkState,
    m: &Modification,
) -> Result<Modified<Network, NetworkState>> {
    if state.len() != net.len() {
        return Err(invalid("state does not match the network"));
    }
    let new = modify_network(net, m)?;
    let mut values = vec![0i64; new.len()];
    let mut discarded = 0i64;
    for (k, &id) in net.ids().iter().enumerate() {
        let v = state.values()[k];
        match new.index_of(id) {
            Some(i) if !new.is_sink(i) => values[i] = v,
            _ => discarded += v,
        }
    }
    let state = NetworkState::from_values(&new, values)?;
    Ok(Modified {
        network: new,
        state,
        discarded,
    })
}

/// Bucketed counterpart of [`apply_modification`]. Buckets that are no
/// longer reachable from any source are emptied as well.
pub fn apply_modification_constrained(
    cn: &ConstrainedNetwork,
    state: &BucketedState,
    m: &Modification,
) -> Result<Modified<ConstrainedNetwork, BucketedState>> {
    let net = cn.network();
    let w = cn.c_max() + 1;
    if state.c_max() != cn.c_max() || state.values().len() != net.len() * w {
        return Err(invalid("bucketed state does not match the network"));
    }
    let new = ConstrainedNetwork::new(modify_network(net, m)?, cn.c_max())?;
    let mut values = vec![0i64; new.network().len() * w];
    let mut discarded = 0i64;
    for (k, &id) in net.ids().iter().enumerate() {
        for c in 0..w {
            let v = state.values()[k * w + c];
            match new.network().index_of(id) {
                Some(i) if !new.network().is_sink(i) && new.is_reachable(i, c) => values[i * w + c] = v,
                _ => discarded += v,
            }
        }
    }
    let state = BucketedState::from_raw(cn.c_max(), values);
    Ok(Modified {
        network: new,
        state,
        discarded,
    })
}
