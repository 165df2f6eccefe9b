//! The threshold policy on an unconstrained network.
//!
//! Tokens are anonymous, so node buffers are plain counters. A moving token
//! is never counted in the state while it walks: at node `i` its occupancy
//! is `x_i + 1`, and it may take arc `(i, j)` only if `x_i + 1 - x_j` is
//! strictly above `gamma_ij`. When it stops, `x_i` is incremented; when it
//! enters a sink it leaves and the state is untouched. A resident token set
//! in motion while settling is first taken out of its buffer, which makes
//! its first-hop occupancy `x_i`.

use serde::Serialize;

use crate::choice::Chooser;
use crate::error::{invalid, Error, Result};
use crate::network::{Network, NetworkState, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "node", rename_all = "snake_case")]
pub enum Terminal {
    Stopped(NodeId),
    Exited(NodeId),
}

impl Terminal {
    pub fn node(self) -> NodeId {
        match self {
            Terminal::Stopped(n) | Terminal::Exited(n) => n,
        }
    }

    pub fn exited(self) -> bool {
        matches!(self, Terminal::Exited(_))
    }
}

/// Record of one token's walk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TokenOutcome {
    pub walk: Vec<NodeId>,
    pub terminal: Terminal,
    pub elementary_transitions: usize,
    /// Virtual tokens created by the enhanced policy during this walk.
    pub virtual_tokens_generated: i64,
    /// Sum of secondary costs along the walk.
    pub secondary_cost: i64,
    /// Constrained walks only: the token stopped because every out-arc would
    /// exceed the budget.
    pub asleep: bool,
}

impl TokenOutcome {
    /// Whether the walk changed the network state.
    pub fn changed_state(&self) -> bool {
        !self.terminal.exited() || self.virtual_tokens_generated != 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "node", rename_all = "snake_case")]
pub enum StateDelta {
    Unchanged,
    Incremented(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepResult {
    pub outcome: TokenOutcome,
    pub delta: StateDelta,
}

impl StepResult {
    fn from_outcome(outcome: TokenOutcome) -> Self {
        let delta = match outcome.terminal {
            Terminal::Stopped(n) => StateDelta::Incremented(n),
            Terminal::Exited(_) => StateDelta::Unchanged,
        };
        StepResult { outcome, delta }
    }

    pub fn lost(&self) -> bool {
        !self.outcome.terminal.exited()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    #[default]
    Original,
    /// Instead of stopping, raise the node with virtual tokens until the
    /// cheapest out-arc becomes permitted, then take it.
    Enhanced,
}

/// Arcs a token at `node` may take when the node holds `occupancy` tokens
/// counting the token itself, in scan order.
pub fn permitted_moves(
    net: &Network,
    state: &NetworkState,
    node: NodeId,
    occupancy: i64,
) -> Result<Vec<(NodeId, NodeId)>> {
    state.check_shape(net)?;
    let i = net.require(node)?;
    let x = state.values();
    Ok(net
        .out_arcs(i)
        .iter()
        .filter(|a| occupancy - x[a.head] > a.gamma)
        .map(|a| (node, net.id(a.head)))
        .collect())
}

fn enhanced_cap(net: &Network) -> usize {
    let n = net.len();
    let gbar = net.arcs().iter().map(|a| a.gamma.unsigned_abs()).max().unwrap_or(0).max(1) as usize;
    n.saturating_mul(1usize.saturating_add(gbar.saturating_mul(n)))
}

pub(crate) fn walk_token(
    net: &Network,
    x: &mut [i64],
    start: usize,
    chooser: &mut Chooser,
    resident: bool,
    policy: Policy,
) -> Result<TokenOutcome> {
    let cap = match policy {
        Policy::Original => net.len(),
        Policy::Enhanced => enhanced_cap(net),
    };
    let mut cur = start;
    if resident {
        x[cur] -= 1;
    }
    let mut walk = vec![net.id(start)];
    let mut transitions = 0usize;
    let mut virtual_tokens = 0i64;
    let mut secondary = 0i64;

    loop {
        if net.is_sink(cur) {
            return Ok(TokenOutcome {
                walk,
                terminal: Terminal::Exited(net.id(cur)),
                elementary_transitions: transitions,
                virtual_tokens_generated: virtual_tokens,
                secondary_cost: secondary,
                asleep: false,
            });
        }
        let occupancy = x[cur] + 1;
        let arcs = net.out_arcs(cur);
        let count = arcs.iter().filter(|a| occupancy - x[a.head] > a.gamma).count();
        let arc = if count > 0 {
            let k = chooser.pick(count);
            arcs.iter()
                .filter(|a| occupancy - x[a.head] > a.gamma)
                .nth(k)
                .expect("pick is within count")
        } else if policy == Policy::Enhanced && !arcs.is_empty() {
            let best = arcs
                .iter()
                .min_by_key(|a| a.gamma + x[a.head])
                .expect("non-empty arcs");
            let block = best.gamma + x[best.head] - x[cur];
            x[cur] += block;
            virtual_tokens += block;
            best
        } else {
            x[cur] += 1;
            return Ok(TokenOutcome {
                walk,
                terminal: Terminal::Stopped(net.id(cur)),
                elementary_transitions: transitions,
                virtual_tokens_generated: virtual_tokens,
                secondary_cost: secondary,
                asleep: false,
            });
        };
        transitions += 1;
        if transitions > cap {
            return Err(Error::WalkDiverged {
                start: net.id(start),
                cap,
            });
        }
        secondary += arc.sigma;
        cur = arc.head;
        walk.push(net.id(cur));
    }
}

/// Moves one token from `start` until it stops or exits, mutating `state`.
/// `arriving` tokens come from outside (injection); otherwise the token is
/// one of the tokens already buffered at `start`.
pub fn run_token(
    net: &Network,
    state: &mut NetworkState,
    start: NodeId,
    chooser: &mut Chooser,
    arriving: bool,
) -> Result<TokenOutcome> {
    state.check_shape(net)?;
    let i = net.require(start)?;
    if net.is_sink(i) {
        return Err(invalid(format!("token cannot start at sink {start}")));
    }
    walk_token(net, state.values_mut(), i, chooser, !arriving, Policy::Original)
}

/// Enhanced-policy walk of an arriving token.
pub fn run_token_enhanced(
    net: &Network,
    state: &mut NetworkState,
    start: NodeId,
    chooser: &mut Chooser,
) -> Result<TokenOutcome> {
    state.check_shape(net)?;
    let i = net.require(start)?;
    if net.is_sink(i) {
        return Err(invalid(format!("token cannot start at sink {start}")));
    }
    walk_token(net, state.values_mut(), i, chooser, false, Policy::Enhanced)
}

fn source_index(net: &Network, source: NodeId) -> Result<usize> {
    let i = net.require(source)?;
    if net.is_sink(i) {
        return Err(invalid(format!("cannot inject at sink {source}")));
    }
    if !net.is_source(i) {
        return Err(invalid(format!("node {source} is not a source")));
    }
    Ok(i)
}

/// Injects one token at `source` under the original policy.
pub fn inject(net: &Network, state: &mut NetworkState, source: NodeId, chooser: &mut Chooser) -> Result<StepResult> {
    inject_with(net, state, source, Policy::Original, chooser)
}

pub fn inject_with(
    net: &Network,
    state: &mut NetworkState,
    source: NodeId,
    policy: Policy,
    chooser: &mut Chooser,
) -> Result<StepResult> {
    state.check_shape(net)?;
    let i = source_index(net, source)?;
    let outcome = walk_token(net, state.values_mut(), i, chooser, false, policy)?;
    Ok(StepResult::from_outcome(outcome))
}

/// First non-sink node (ascending id) holding a resident token that is
/// above threshold on some out-arc.
fn first_unsettled(net: &Network, x: &[i64]) -> Option<usize> {
    (0..net.len())
        .filter(|&i| !net.is_sink(i))
        .find(|&i| net.out_arcs(i).iter().any(|a| x[i] - x[a.head] > a.gamma))
}

/// Moves resident above-threshold tokens, lowest node id first and each walk
/// to completion, until the state is admissible. Returns the walks taken.
pub fn settle(net: &Network, state: &mut NetworkState) -> Result<Vec<TokenOutcome>> {
    state.check_shape(net)?;
    let n = net.len();
    let gbar = net.arcs().iter().map(|a| a.gamma.unsigned_abs()).max().unwrap_or(0).max(1);
    let violation: u64 = {
        let x = state.values();
        net.arcs()
            .iter()
            .map(|a| (x[a.tail] - x[a.head] - a.gamma).max(0) as u64)
            .sum()
    };
    let bound = (n as u64)
        .saturating_mul(violation.saturating_add((n as u64).saturating_mul(gbar)))
        .max(1) as usize;

    let mut chooser = Chooser::deterministic();
    let mut walks = Vec::new();
    while let Some(i) = first_unsettled(net, state.values()) {
        if walks.len() >= bound {
            return Err(Error::SettleDiverged(bound));
        }
        walks.push(walk_token(net, state.values_mut(), i, &mut chooser, true, Policy::Original)?);
    }
    Ok(walks)
}

/// Probes every source in ascending order. Exiting probes leave the state
/// untouched; the first probe that stops is kept as a real injection and the
/// answer is `false`.
pub fn is_global_rest(net: &Network, state: &mut NetworkState, chooser: &mut Chooser) -> Result<bool> {
    for s in net.sources() {
        let step = inject(net, state, s, chooser)?;
        if step.lost() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Whether a token injected at `source` is certain to exit without changing
/// the state. Deterministic choice follows the single scan-order walk;
/// stochastic choice requires every permitted walk to exit. Holds for both
/// policies, since the enhanced policy only differs where a walk would stop.
pub fn all_walks_exit(net: &Network, state: &NetworkState, source: NodeId, deterministic: bool) -> Result<bool> {
    state.check_shape(net)?;
    let s = net.require(source)?;
    let x = state.values();
    let permitted = |i: usize| {
        let occ = x[i] + 1;
        net.out_arcs(i).iter().filter(move |a| occ - x[a.head] > a.gamma)
    };
    if deterministic {
        let mut cur = s;
        for _ in 0..=net.len() {
            if net.is_sink(cur) {
                return Ok(true);
            }
            match permitted(cur).next() {
                Some(a) => cur = a.head,
                None => return Ok(false),
            }
        }
        return Err(Error::WalkDiverged { start: source, cap: net.len() });
    }
    let mut seen = vec![false; net.len()];
    let mut stack = vec![s];
    seen[s] = true;
    while let Some(i) = stack.pop() {
        if net.is_sink(i) {
            continue;
        }
        let mut any = false;
        for a in permitted(i) {
            any = true;
            if !seen[a.head] {
                seen[a.head] = true;
                stack.push(a.head);
            }
        }
        if !any {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choice::ChoiceModel;
    use crate::generators::fig2_network;
    use crate::network::{is_admissible, total_tokens, ArcSpec};

    fn ids(v: &[u32]) -> Vec<NodeId> {
        v.iter().map(|&i| NodeId(i)).collect()
    }

    fn state(net: &Network, v: &[i64]) -> NetworkState {
        NetworkState::from_values(net, v.to_vec()).unwrap()
    }

    #[test]
    fn permitted_moves_examples() {
        let net = fig2_network();
        let rest = state(&net, &[3, 2, 1, 0, 0]);
        assert_eq!(
            permitted_moves(&net, &rest, NodeId(1), 4).unwrap(),
            vec![(NodeId(1), NodeId(2))]
        );
        // 3 - 2 == gamma_12: not strictly above
        assert!(permitted_moves(&net, &rest, NodeId(1), 3).unwrap().is_empty());
        let zero = NetworkState::zeros(&net);
        assert!(permitted_moves(&net, &zero, NodeId(1), 1).unwrap().is_empty());
        assert!(permitted_moves(&net, &zero, NodeId(2), 1).unwrap().is_empty());
        assert!(permitted_moves(&net, &zero, NodeId(9), 1).is_err());
    }

    #[test]
    fn example1_six_tokens_then_shortest_path() {
        let net = fig2_network();
        let mut x = NetworkState::zeros(&net);
        let mut ch = Chooser::deterministic();
        for _ in 0..6 {
            let step = inject(&net, &mut x, NodeId(1), &mut ch).unwrap();
            assert!(step.lost());
        }
        assert_eq!(x.values(), &[3, 2, 1, 0, 0]);
        let step = inject(&net, &mut x, NodeId(1), &mut ch).unwrap();
        assert_eq!(step.delta, StateDelta::Unchanged);
        assert_eq!(step.outcome.walk, ids(&[1, 2, 3, 4, 5]));
        assert_eq!(step.outcome.elementary_transitions, 4);
        assert_eq!(step.outcome.secondary_cost, 3);
        assert_eq!(x.values(), &[3, 2, 1, 0, 0]);
    }

    #[test]
    fn first_token_stops_at_source() {
        let net = fig2_network();
        let mut x = NetworkState::zeros(&net);
        let step = inject(&net, &mut x, NodeId(1), &mut Chooser::deterministic()).unwrap();
        assert_eq!(step.delta, StateDelta::Incremented(NodeId(1)));
        assert_eq!(x.values(), &[1, 0, 0, 0, 0]);
    }

    #[test]
    fn negative_arc_thresholds() {
        let net = Network::new(ids(&[1, 2]), [ArcSpec::new(1, 2, -1, 0)], ids(&[1]), ids(&[2])).unwrap();
        let mut x = NetworkState::zeros(&net);
        let out = run_token(&net, &mut x, NodeId(1), &mut Chooser::deterministic(), true).unwrap();
        assert_eq!(out.terminal, Terminal::Exited(NodeId(2)));

        // a resident move along a negative arc happens at equal states
        let net = Network::new(
            ids(&[1, 2, 3]),
            [ArcSpec::new(1, 2, -1, 0), ArcSpec::new(2, 3, 5, 0)],
            ids(&[1]),
            ids(&[3]),
        )
        .unwrap();
        let x = NetworkState::zeros(&net);
        assert_eq!(permitted_moves(&net, &x, NodeId(1), 0).unwrap().len(), 1);
        let mut x = x;
        settle(&net, &mut x).unwrap();
        assert_eq!(x.values(), &[-1, 1, 0]);
        assert!(is_admissible(&net, &x).unwrap().0);
    }

    #[test]
    fn direct_sink_exit() {
        let net = Network::new(ids(&[1, 2]), [ArcSpec::new(1, 2, 0, 0)], ids(&[1]), ids(&[2])).unwrap();
        let mut x = NetworkState::zeros(&net);
        let step = inject(&net, &mut x, NodeId(1), &mut Chooser::deterministic()).unwrap();
        assert_eq!(step.delta, StateDelta::Unchanged);
    }

    #[test]
    fn inject_rejects_sinks_and_non_sources() {
        let net = fig2_network();
        let mut x = NetworkState::zeros(&net);
        let mut ch = Chooser::deterministic();
        assert!(inject(&net, &mut x, NodeId(5), &mut ch).is_err());
        assert!(inject(&net, &mut x, NodeId(2), &mut ch).is_err());
        assert!(run_token(&net, &mut x, NodeId(5), &mut ch, true).is_err());
    }

    #[test]
    fn settle_is_noop_on_admissible() {
        let net = fig2_network();
        let mut x = state(&net, &[3, 2, 1, 0, 0]);
        assert!(settle(&net, &mut x).unwrap().is_empty());
        assert_eq!(x.values(), &[3, 2, 1, 0, 0]);
    }

    #[test]
    fn settle_cascades_to_admissible() {
        let net = fig2_network();
        let mut x = state(&net, &[5, 0, 0, 0, 0]);
        let before = total_tokens(&x);
        let walks = settle(&net, &mut x).unwrap();
        assert!(!walks.is_empty());
        assert!(is_admissible(&net, &x).unwrap().0);
        assert!(total_tokens(&x) <= before);
        // every resident move out of node 1 stops one hop later or beyond
        assert!(walks.iter().all(|w| w.walk[0] == NodeId(1) || w.walk[0] == NodeId(2)));
    }

    #[test]
    fn rest_probes() {
        let net = fig2_network();
        let mut ch = Chooser::deterministic();
        let mut rest = state(&net, &[3, 2, 1, 0, 0]);
        assert!(is_global_rest(&net, &mut rest, &mut ch).unwrap());
        assert_eq!(rest.values(), &[3, 2, 1, 0, 0]);
        let mut zero = NetworkState::zeros(&net);
        assert!(!is_global_rest(&net, &mut zero, &mut ch).unwrap());
        // the stopping probe is committed
        assert_eq!(zero.values(), &[1, 0, 0, 0, 0]);
    }

    #[test]
    fn enhanced_exits_every_time() {
        let net = fig2_network();
        let mut x = NetworkState::zeros(&net);
        let mut ch = Chooser::deterministic();
        let out = run_token_enhanced(&net, &mut x, NodeId(1), &mut ch).unwrap();
        assert!(out.terminal.exited());
        assert_eq!(out.walk, ids(&[1, 2, 3, 4, 5]));
        // each raised node sits exactly at threshold with its successor as
        // it was when the token passed
        assert_eq!(x.values(), &[1, 1, 1, 0, 0]);
        assert_eq!(out.virtual_tokens_generated, 3);
        assert!(is_admissible(&net, &x).unwrap().0);

        let out = run_token_enhanced(&net, &mut x, NodeId(1), &mut ch).unwrap();
        assert!(out.terminal.exited());
        assert_eq!(x.values(), &[2, 2, 1, 0, 0]);
        let out = run_token_enhanced(&net, &mut x, NodeId(1), &mut ch).unwrap();
        assert!(out.terminal.exited());
        assert_eq!(x.values(), &[3, 2, 1, 0, 0]);

        // once a move is permitted all the way nothing virtual happens
        let out = run_token_enhanced(&net, &mut x, NodeId(1), &mut ch).unwrap();
        assert_eq!(out.virtual_tokens_generated, 0);
        assert_eq!(out.walk, ids(&[1, 2, 3, 4, 5]));
        assert_eq!(x.values(), &[3, 2, 1, 0, 0]);
    }

    #[test]
    fn structural_rest_check() {
        let net = fig2_network();
        let rest = state(&net, &[3, 2, 1, 0, 0]);
        assert!(all_walks_exit(&net, &rest, NodeId(1), true).unwrap());
        assert!(all_walks_exit(&net, &rest, NodeId(1), false).unwrap());
        let partial = state(&net, &[3, 2, 0, 0, 0]);
        assert!(!all_walks_exit(&net, &partial, NodeId(1), true).unwrap());
    }

    #[test]
    fn stochastic_choice_reproducible() {
        let net = crate::generators::small_world(30, 4, 0.2, 9, 3, 11).unwrap().network;
        let src = net.sources()[0];
        let run = |seed| {
            let mut x = NetworkState::zeros(&net);
            let mut ch = Chooser::new(ChoiceModel::Stochastic { seed });
            for _ in 0..300 {
                inject(&net, &mut x, src, &mut ch).unwrap();
            }
            x
        };
        assert_eq!(run(5), run(5));
    }
}
