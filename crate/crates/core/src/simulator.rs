//! Injection-driven experiments: schedules, rest certification, dynamic
//! scenarios and summary metrics.
//!
//! Time is the injection counter `k`. A run certifies global rest
//! structurally: the state is at rest when every walk a token injected at a
//! scheduled source could take ends in a sink. The check is repeated only
//! after the state changes. Once a segment is at rest, `n_post` probe tokens
//! per source measure the resting paths without advancing `k`; they exit by
//! construction and leave the state untouched.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::choice::{schedule_rng, ChoiceModel, Chooser, STREAM_ALGORITHM};
use crate::constrained::{
    all_walks_exit_constrained, constrained_inject_with, constrained_settle, BucketedState, ConstrainedNetwork,
};
use crate::error::{invalid, Result};
use crate::modify::{apply_modification, apply_modification_constrained, Modification, Scenario};
use crate::network::{incidence_matrix, Network, NetworkState, NodeId};
use crate::oracle::{constrained_shortest, shortest_to_sinks};
use crate::policy::{all_walks_exit, inject_with, settle, Policy, StateDelta, StepResult, TokenOutcome};
use crate::validate::validate_assumptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Unconstrained,
    Constrained {
        c_max: usize,
    },
}

impl Mode {
    pub fn c_max(self) -> Option<usize> {
        match self {
            Mode::Unconstrained => None,
            Mode::Constrained { c_max } => Some(c_max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", content = "source", rename_all = "snake_case")]
pub enum Schedule {
    /// Sources in ascending id order, cyclically.
    #[default]
    RoundRobin,
    /// Only this source receives tokens; rest is certified for it alone.
    SingleSource(NodeId),
    /// A uniformly drawn source per injection.
    UniformRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", content = "n", rename_all = "snake_case")]
pub enum Stop {
    #[default]
    AtRest,
    /// Exactly this many injections.
    MaxSteps(u64),
    /// Rest, then this many further rounds of one injection per source.
    RestThenExtra(u64),
}

/// Initial token counts as `(node, bucket, value)`; the bucket must be 0 in
/// unconstrained mode.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitialState {
    pub entries: Vec<(NodeId, usize, i64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub mode: Mode,
    pub policy: Policy,
    pub choice: ChoiceModel,
    pub schedule: Schedule,
    /// Seed of the source-selection stream for [`Schedule::UniformRandom`].
    pub schedule_seed: u64,
    pub stop: Stop,
    pub scenario: Scenario,
    pub trace: bool,
    pub initial: Option<InitialState>,
    /// Settle the initial state before the first injection.
    pub settle_initial: bool,
    /// Injection budget after which a run gives up on reaching rest.
    pub step_limit: u64,
    /// Probe tokens per source at rest; defaults to 1 under deterministic
    /// choice and 100 under stochastic choice.
    pub post_rest_probes: Option<usize>,
    /// Refuse networks (initial or modified) that fail the assumptions.
    pub validate: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            mode: Mode::Unconstrained,
            policy: Policy::Original,
            choice: ChoiceModel::Deterministic,
            schedule: Schedule::RoundRobin,
            schedule_seed: 0,
            stop: Stop::AtRest,
            scenario: Scenario::default(),
            trace: false,
            initial: None,
            settle_initial: true,
            step_limit: 50_000_000,
            post_rest_probes: None,
            validate: true,
        }
    }
}

/// What happened at one row of the V series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "node", rename_all = "snake_case")]
pub enum RowDelta {
    Initial,
    Exit,
    Stopped(NodeId),
    /// A scenario event and the settling after it.
    Settle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VRow {
    pub k: u64,
    pub v: i64,
    pub source: Option<NodeId>,
    pub delta: RowDelta,
}

/// Resting paths observed from one source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PostRest {
    pub source: NodeId,
    pub walks: usize,
    pub all_exited: bool,
    /// Distinct `(length, secondary cost, arcs)` triples, ascending.
    pub observed: Vec<(i64, i64, usize)>,
    /// Token count at the source (bucket 0 in constrained mode).
    pub source_value: i64,
}

impl PostRest {
    pub fn length(&self) -> Option<i64> {
        self.observed.first().map(|o| o.0)
    }
}

/// One network configuration between scenario events.
#[derive(Debug, Clone, Serialize)]
pub struct Segment {
    pub index: usize,
    pub start_step: u64,
    pub events: Vec<Modification>,
    /// Net tokens discarded by the events that opened this segment.
    pub discarded: i64,
    pub v_start: i64,
    pub t_ss: Option<u64>,
    pub v_ss: Option<i64>,
    pub l_ss: u64,
    pub post_rest: Vec<PostRest>,
    #[serde(skip)]
    pub network: Network,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceEvent {
    pub k: u64,
    pub source: NodeId,
    pub events: Vec<Modification>,
    pub outcome: TokenOutcome,
    pub delta: StateDelta,
    pub state_before: Vec<i64>,
    pub state_after: Vec<i64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsLog {
    pub mode: Mode,
    pub policy: Policy,
    pub choice: ChoiceModel,
    pub stream: &'static str,
    pub v_initial: i64,
    pub injections: u64,
    pub reached_rest: bool,
    /// Every real injection after certified rest left the state unchanged.
    pub post_rest_stationary: bool,
    pub lost_total: u64,
    pub v_series: Vec<VRow>,
    pub segments: Vec<Segment>,
    /// Arc traversal counts of post-rest walks.
    #[serde(skip)]
    pub histogram: BTreeMap<(NodeId, NodeId), u64>,
    /// Per-node token totals at the end (bucket sums in constrained mode).
    pub final_state: Vec<(NodeId, i64)>,
    /// Non-zero buckets at the end, constrained mode only.
    pub final_buckets: Vec<(NodeId, usize, i64)>,
    pub network_metadata: Option<serde_json::Value>,
    pub trace: Vec<TraceEvent>,
}

impl MetricsLog {
    pub fn final_segment(&self) -> &Segment {
        self.segments.last().expect("a run has at least one segment")
    }
}

enum System {
    Plain { net: Network, x: NetworkState },
    Budget { cn: ConstrainedNetwork, x: BucketedState },
}

impl System {
    fn new(net: &Network, mode: Mode, initial: Option<&InitialState>) -> Result<Self> {
        let entries = initial.map(|s| s.entries.clone()).unwrap_or_default();
        Ok(match mode {
            Mode::Unconstrained => {
                if let Some(e) = entries.iter().find(|e| e.1 != 0) {
                    return Err(invalid(format!("bucket {} given for node {} in unconstrained mode", e.1, e.0)));
                }
                let x = NetworkState::from_pairs(net, entries.into_iter().map(|(n, _, v)| (n, v)))?;
                System::Plain { net: net.clone(), x }
            }
            Mode::Constrained { c_max } => {
                let cn = ConstrainedNetwork::new(net.clone(), c_max)?;
                let x = BucketedState::from_entries(net, c_max, entries)?;
                System::Budget { cn, x }
            }
        })
    }

    fn network(&self) -> &Network {
        match self {
            System::Plain { net, .. } => net,
            System::Budget { cn, .. } => cn.network(),
        }
    }

    fn total(&self) -> i64 {
        match self {
            System::Plain { x, .. } => x.values().iter().sum(),
            System::Budget { x, .. } => x.total(),
        }
    }

    fn raw(&self) -> Vec<i64> {
        match self {
            System::Plain { x, .. } => x.values().to_vec(),
            System::Budget { x, .. } => x.values().to_vec(),
        }
    }

    fn source_value(&self, s: NodeId) -> Result<i64> {
        match self {
            System::Plain { net, x } => x.get(net, s),
            System::Budget { cn, x } => x.get(cn.network(), s, 0),
        }
    }

    fn inject(&mut self, s: NodeId, policy: Policy, chooser: &mut Chooser) -> Result<StepResult> {
        match self {
            System::Plain { net, x } => inject_with(net, x, s, policy, chooser),
            System::Budget { cn, x } => constrained_inject_with(cn, x, s, policy, chooser),
        }
    }

    fn settle(&mut self) -> Result<usize> {
        Ok(match self {
            System::Plain { net, x } => settle(net, x)?.len(),
            System::Budget { cn, x } => constrained_settle(cn, x)?.len(),
        })
    }

    fn all_exit(&self, s: NodeId, deterministic: bool) -> Result<bool> {
        match self {
            System::Plain { net, x } => all_walks_exit(net, x, s, deterministic),
            System::Budget { cn, x } => all_walks_exit_constrained(cn, x, s, deterministic),
        }
    }

    fn modify(&mut self, m: &Modification) -> Result<i64> {
        let (next, discarded) = match self {
            System::Plain { net, x } => {
                let out = apply_modification(net, x, m)?;
                (System::Plain { net: out.network, x: out.state }, out.discarded)
            }
            System::Budget { cn, x } => {
                let out = apply_modification_constrained(cn, x, m)?;
                (System::Budget { cn: out.network, x: out.state }, out.discarded)
            }
        };
        *self = next;
        Ok(discarded)
    }

    fn final_state(&self) -> (Vec<(NodeId, i64)>, Vec<(NodeId, usize, i64)>) {
        match self {
            System::Plain { net, x } => (x.to_map(net).into_iter().collect(), Vec::new()),
            System::Budget { cn, x } => {
                let net = cn.network();
                let totals = (0..net.len()).map(|i| (net.id(i), x.row(i).iter().sum())).collect();
                (totals, x.nonzero(net))
            }
        }
    }
}

fn check_network(net: &Network, mode: Mode) -> Result<()> {
    let report = validate_assumptions(net, mode.c_max());
    if report.passes() {
        Ok(())
    } else {
        Err(invalid(format!(
            "network fails the standing assumptions: {}",
            report.messages.join("; ")
        )))
    }
}

/// Runs injections per `config`; scenario events fire exactly at their step.
pub fn run(net: &Network, config: &SimConfig) -> Result<MetricsLog> {
    drive(net, config, false)
}

/// Like [`run`], but each scenario event waits until the current network
/// configuration has reached rest, so every segment ends at rest with its
/// resting paths recorded.
pub fn run_dynamic(net: &Network, config: &SimConfig) -> Result<MetricsLog> {
    drive(net, config, true)
}

fn rest_sources(net: &Network, schedule: Schedule) -> Vec<NodeId> {
    match schedule {
        Schedule::SingleSource(s) => vec![s],
        _ => net.sources(),
    }
}

fn new_segment(index: usize, start_step: u64, sys: &System, events: Vec<Modification>, discarded: i64) -> Segment {
    Segment {
        index,
        start_step,
        events,
        discarded,
        v_start: sys.total(),
        t_ss: None,
        v_ss: None,
        l_ss: 0,
        post_rest: Vec::new(),
        network: sys.network().clone(),
    }
}

fn drive(net: &Network, cfg: &SimConfig, defer_events: bool) -> Result<MetricsLog> {
    if cfg.validate {
        check_network(net, cfg.mode)?;
    }
    let mut sys = System::new(net, cfg.mode, cfg.initial.as_ref())?;
    let mut chooser = Chooser::new(cfg.choice);
    let deterministic = chooser.is_deterministic();
    let n_post = cfg.post_rest_probes.unwrap_or(if deterministic { 1 } else { 100 });
    let mut sched = schedule_rng(cfg.schedule_seed);
    if cfg.settle_initial {
        sys.settle()?;
    }

    let mut events = cfg.scenario.events.clone();
    events.sort_by_key(|e| e.at_step);
    let mut next_event = 0usize;

    let v_initial = sys.total();
    let mut v_series = vec![VRow {
        k: 0,
        v: v_initial,
        source: None,
        delta: RowDelta::Initial,
    }];
    let mut segments = Vec::new();
    let mut seg = new_segment(0, 0, &sys, Vec::new(), 0);
    let mut histogram: BTreeMap<(NodeId, NodeId), u64> = BTreeMap::new();
    let mut trace = Vec::new();
    let mut pending_trace_events: Vec<Modification> = Vec::new();
    let mut k = 0u64;
    let mut rr = 0usize;
    let mut dirty = true;
    let mut extra_left: Option<u64> = None;
    let mut stationary = true;
    let mut lost_total = 0u64;

    let record_walk = |hist: &mut BTreeMap<(NodeId, NodeId), u64>, walk: &[NodeId]| {
        for w in walk.windows(2) {
            *hist.entry((w[0], w[1])).or_default() += 1;
        }
    };

    loop {
        if dirty && seg.t_ss.is_none() {
            let mut rest = true;
            for s in rest_sources(sys.network(), cfg.schedule) {
                if !sys.all_exit(s, deterministic)? {
                    rest = false;
                    break;
                }
            }
            if rest {
                seg.t_ss = Some(k);
                seg.v_ss = Some(sys.total());
                for s in rest_sources(sys.network(), cfg.schedule) {
                    let before = sys.raw();
                    let mut observed = BTreeSet::new();
                    let mut all_exited = true;
                    for _ in 0..n_post {
                        let step = sys.inject(s, cfg.policy, &mut chooser)?;
                        all_exited &= step.outcome.terminal.exited() && !step.outcome.changed_state();
                        let (length, cost) = sys.network().walk_cost(&step.outcome.walk)?;
                        observed.insert((length, cost, step.outcome.elementary_transitions));
                        record_walk(&mut histogram, &step.outcome.walk);
                    }
                    debug_assert_eq!(before, sys.raw(), "probes at rest must not change the state");
                    seg.post_rest.push(PostRest {
                        source: s,
                        walks: n_post,
                        all_exited,
                        observed: observed.into_iter().collect(),
                        source_value: sys.source_value(s)?,
                    });
                }
            }
        }
        dirty = false;

        if next_event < events.len() && events[next_event].at_step <= k && (!defer_events || seg.t_ss.is_some()) {
            let due = events[next_event].at_step;
            let mut applied = Vec::new();
            let mut discarded = 0;
            while next_event < events.len() && events[next_event].at_step == due {
                let m = &events[next_event].modification;
                discarded += sys.modify(m)?;
                applied.push(m.clone());
                next_event += 1;
            }
            if cfg.validate {
                check_network(sys.network(), cfg.mode)?;
            }
            sys.settle()?;
            v_series.push(VRow {
                k,
                v: sys.total(),
                source: None,
                delta: RowDelta::Settle,
            });
            let index = segments.len() + 1;
            segments.push(std::mem::replace(
                &mut seg,
                new_segment(index, k, &sys, applied.clone(), discarded),
            ));
            pending_trace_events.extend(applied);
            extra_left = None;
            rr = 0;
            dirty = true;
            continue;
        }

        let events_pending = next_event < events.len();
        match cfg.stop {
            Stop::AtRest if seg.t_ss.is_some() && !events_pending => break,
            Stop::RestThenExtra(n) if seg.t_ss.is_some() && !events_pending => {
                let left = extra_left.get_or_insert(n * sys.network().sources().len() as u64);
                if *left == 0 {
                    break;
                }
            }
            Stop::MaxSteps(m) if k >= m => break,
            _ => {}
        }
        if k >= cfg.step_limit {
            break;
        }

        let sources = sys.network().sources();
        let source = match cfg.schedule {
            Schedule::RoundRobin => {
                if sources.is_empty() {
                    return Err(invalid("network has no source to inject at"));
                }
                let s = sources[rr % sources.len()];
                rr += 1;
                s
            }
            Schedule::SingleSource(s) => s,
            Schedule::UniformRandom => {
                if sources.is_empty() {
                    return Err(invalid("network has no source to inject at"));
                }
                sources[sched.gen_range(0..sources.len())]
            }
        };
        let before = if cfg.trace { sys.raw() } else { Vec::new() };
        let step = sys.inject(source, cfg.policy, &mut chooser)?;
        k += 1;
        if step.lost() {
            lost_total += 1;
            if seg.t_ss.is_none() {
                seg.l_ss += 1;
            }
        }
        if seg.t_ss.is_some() {
            if step.outcome.changed_state() {
                stationary = false;
            }
            record_walk(&mut histogram, &step.outcome.walk);
        }
        if step.outcome.changed_state() {
            dirty = true;
        }
        if let Some(left) = extra_left.as_mut() {
            *left = left.saturating_sub(1);
        }
        v_series.push(VRow {
            k,
            v: sys.total(),
            source: Some(source),
            delta: match step.delta {
                StateDelta::Unchanged => RowDelta::Exit,
                StateDelta::Incremented(n) => RowDelta::Stopped(n),
            },
        });
        if cfg.trace {
            trace.push(TraceEvent {
                k,
                source,
                events: std::mem::take(&mut pending_trace_events),
                outcome: step.outcome,
                delta: step.delta,
                state_before: before,
                state_after: sys.raw(),
            });
        }
    }

    let reached_rest = seg.t_ss.is_some();
    segments.push(seg);
    let (final_state, final_buckets) = sys.final_state();
    Ok(MetricsLog {
        mode: cfg.mode,
        policy: cfg.policy,
        choice: cfg.choice,
        stream: STREAM_ALGORITHM,
        v_initial,
        injections: k,
        reached_rest,
        post_rest_stationary: stationary,
        lost_total,
        v_series,
        segments,
        histogram,
        final_state,
        final_buckets,
        network_metadata: sys.network().metadata().cloned(),
        trace,
    })
}

/// One row of the comparison table: resting path metrics and convergence
/// figures of the final network configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Summary {
    #[serde(rename = "L_ss")]
    pub l_ss_length: Option<i64>,
    #[serde(rename = "C_ss")]
    pub c_ss: Option<i64>,
    #[serde(rename = "E_ss")]
    pub e_ss: Option<usize>,
    #[serde(rename = "T_ss")]
    pub t_ss: Option<u64>,
    #[serde(rename = "V_ss")]
    pub v_ss: Option<i64>,
    pub l_ss: u64,
    /// Rest was not reached; the row is incomplete.
    pub partial: bool,
}

impl Summary {
    /// `(L_ss, C_ss, E_ss, T_ss, V_ss, l_ss)` for a complete row.
    pub fn tuple(&self) -> Option<(i64, i64, usize, u64, i64, u64)> {
        Some((self.l_ss_length?, self.c_ss?, self.e_ss?, self.t_ss?, self.v_ss?, self.l_ss))
    }
}

/// Summary of the final segment, taking the resting path of its first
/// source.
pub fn summarize(log: &MetricsLog) -> Summary {
    let seg = log.final_segment();
    let first = seg.post_rest.first().and_then(|p| p.observed.first());
    Summary {
        l_ss_length: first.map(|o| o.0),
        c_ss: first.map(|o| o.1),
        e_ss: first.map(|o| o.2),
        t_ss: seg.t_ss,
        v_ss: seg.v_ss,
        l_ss: seg.l_ss,
        partial: seg.t_ss.is_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Mismatch {
    pub segment: usize,
    pub source: NodeId,
    pub what: String,
    pub expected: Option<i64>,
    pub observed: Option<i64>,
}

/// Compares the resting paths and source values of every segment that
/// reached rest against the exact distances of that segment's network.
pub fn check_against_oracle(log: &MetricsLog) -> Result<Vec<Mismatch>> {
    let mut out = Vec::new();
    for seg in log.segments.iter().filter(|s| s.t_ss.is_some()) {
        let distances = match log.mode {
            Mode::Unconstrained => Some(shortest_to_sinks(&seg.network)?),
            Mode::Constrained { .. } => None,
        };
        for pr in &seg.post_rest {
            let expected = match (log.mode, &distances) {
                (Mode::Unconstrained, Some(d)) => d.get(pr.source),
                (Mode::Constrained { c_max }, _) => {
                    constrained_shortest(&seg.network, pr.source, c_max)?.map(|p| p.length)
                }
                _ => unreachable!(),
            };
            let mut push = |what: &str, observed: Option<i64>| {
                out.push(Mismatch {
                    segment: seg.index,
                    source: pr.source,
                    what: what.to_owned(),
                    expected,
                    observed,
                })
            };
            if !pr.all_exited {
                push("resting token did not exit", None);
            }
            for &(length, cost, _) in &pr.observed {
                if Some(length) != expected {
                    push("walk length", Some(length));
                }
                if let Some(c_max) = log.mode.c_max() {
                    if cost > c_max as i64 {
                        push("walk exceeds budget", Some(cost));
                    }
                }
            }
            if Some(pr.source_value) != expected {
                push("source value", Some(pr.source_value));
            }
        }
    }
    Ok(out)
}

/// Checks `x(k+1) - x(k) = B u(k) + v(k)` on the non-sink rows for one
/// original-policy injection, where `u` counts arc traversals of the walk
/// and `v` is the injected token.
pub fn incidence_consistent(net: &Network, source: NodeId, outcome: &TokenOutcome, before: &[i64], after: &[i64]) -> bool {
    let b = incidence_matrix(net);
    let mut u = vec![0i64; net.arc_count()];
    for w in outcome.walk.windows(2) {
        let (Some(t), Some(h)) = (net.index_of(w[0]), net.index_of(w[1])) else {
            return false;
        };
        match net.arc_position(t, h) {
            Some(p) => u[p] += 1,
            None => return false,
        }
    }
    let bu = b.apply(&u);
    b.rows.iter().enumerate().all(|(r, &id)| {
        let i = net.index_of(id).expect("row node exists");
        let v = i64::from(id == source);
        after[i] - before[i] == bu[r] + v
    })
}

/// `k,V,injected_source,delta` rows; `delta` is the stopping node, `exit`,
/// or `settle` for scenario events.
pub fn metrics_csv(log: &MetricsLog) -> String {
    let mut out = String::from("k,V,injected_source,delta\n");
    for row in &log.v_series {
        let source = row.source.map(|s| s.to_string()).unwrap_or_default();
        let delta = match row.delta {
            RowDelta::Initial => String::new(),
            RowDelta::Exit => "exit".to_owned(),
            RowDelta::Stopped(n) => n.to_string(),
            RowDelta::Settle => "settle".to_owned(),
        };
        let _ = writeln!(out, "{},{},{},{}", row.k, row.v, source, delta);
    }
    out
}

/// `tail,head,count` rows of post-rest arc traversals.
pub fn histogram_csv(log: &MetricsLog) -> String {
    let mut out = String::from("tail,head,count\n");
    for ((t, h), c) in &log.histogram {
        let _ = writeln!(out, "{t},{h},{c}");
    }
    out
}

/// JSON summary: the comparison row, segments, final state and run
/// settings. The V series lives in the CSV.
pub fn summary_json(log: &MetricsLog) -> serde_json::Value {
    serde_json::json!({
        "summary": summarize(log),
        "mode": log.mode,
        "policy": log.policy,
        "choice": log.choice,
        "stream": log.stream,
        "v_initial": log.v_initial,
        "injections": log.injections,
        "reached_rest": log.reached_rest,
        "post_rest_stationary": log.post_rest_stationary,
        "lost_total": log.lost_total,
        "segments": log.segments,
        "final_state": log.final_state,
        "final_buckets": log.final_buckets,
        "network_metadata": log.network_metadata,
    })
}
