//! Abstract semantics over send/receive blocks.
//!
//! A [`KExchange`] is a block of up to `k` sends followed by receives of
//! those same sends. Schedules made of such blocks are what the whole
//! toolkit decides about: a system is k-synchronizable when every execution
//! is equivalent to a block schedule.
//!
//! Between blocks the concrete buffers are forgotten; what survives is
//! [`CausalBookkeeping`]: for every process `p`, which processes sent or
//! received a message causally after some still-undelivered message
//! addressed to `p`. That finite memory is enough to detect when a block
//! would have to violate mailbox FIFO order, and it makes the reachable
//! state space finite, so reachability and synchronizability questions
//! become searches over a finite labelled transition system ([`explore`]).

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict::{ConflictGraph, EdgeLabel, VertexKind};
use crate::model::{
    step, Action, ActionKind, Buffers, Configuration, MessageId, ProcessId, StateId, System,
};
use crate::msc::Msc;

pub type GlobalState = BTreeMap<ProcessId, StateId>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExchangeError {
    #[error("a block must list all sends before all receives")]
    SendAfterReceive,
    #[error("receive {index} of the block has no in-block send to pair with")]
    UnmatchedBlockReceive { index: usize },
    #[error("block enumeration exceeded the cap of {cap}")]
    EnumerationCap { cap: usize },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StepKError {
    #[error("block has {width} sends, more than the bound {k}")]
    WidthExceeded { width: usize, k: usize },
    #[error("block is not executable here: {0}")]
    NotExecutable(String),
    #[error("block replay is ambiguous, several transitions fire the same action")]
    AmbiguousReplay,
    #[error("delivering this block would break the mailbox order towards {0}")]
    CausalDeliveryViolation(ProcessId),
}

/// A block: sends first, then receives, with an explicit in-block pairing.
/// Within a block the n-th receive of a sender/receiver/message triple pairs
/// with the n-th send of that triple.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KExchange {
    pub sends: Vec<Action>,
    pub recvs: Vec<Action>,
    /// Pairs `(receive position, send position)` into the two vectors.
    pub matching: Vec<(usize, usize)>,
}

impl KExchange {
    /// Splits an action sequence into a block, validating the shape and
    /// computing the in-block pairing.
    pub fn from_actions(actions: &[Action]) -> Result<KExchange, ExchangeError> {
        let mut sends = Vec::new();
        let mut recvs = Vec::new();
        for a in actions {
            match a.kind {
                ActionKind::Send => {
                    if !recvs.is_empty() {
                        return Err(ExchangeError::SendAfterReceive);
                    }
                    sends.push(a.clone());
                }
                ActionKind::Recv => recvs.push(a.clone()),
            }
        }
        let mut used: BTreeMap<(&ProcessId, &ProcessId, &MessageId), usize> = BTreeMap::new();
        let mut matching = Vec::new();
        for (rj, r) in recvs.iter().enumerate() {
            let key = r.triple();
            let next = used.entry(key).or_insert(0);
            let mut found = None;
            let mut seen = 0usize;
            for (si, s) in sends.iter().enumerate() {
                if s.triple() == key {
                    if seen == *next {
                        found = Some(si);
                        break;
                    }
                    seen += 1;
                }
            }
            match found {
                Some(si) => {
                    matching.push((rj, si));
                    *next += 1;
                }
                None => return Err(ExchangeError::UnmatchedBlockReceive { index: rj }),
            }
        }
        Ok(KExchange {
            sends,
            recvs,
            matching,
        })
    }

    /// Number of sends, the width the bound `k` constrains.
    pub fn width(&self) -> usize {
        self.sends.len()
    }

    pub fn actions(&self) -> Vec<Action> {
        self.sends.iter().chain(self.recvs.iter()).cloned().collect()
    }

    /// Send position of the pair a receive position belongs to.
    pub fn send_of_recv(&self, rj: usize) -> Option<usize> {
        self.matching.iter().find(|(r, _)| *r == rj).map(|(_, s)| *s)
    }

    /// Receive position paired with a send position, if any.
    pub fn recv_of_send(&self, si: usize) -> Option<usize> {
        self.matching.iter().find(|(_, s)| *s == si).map(|(r, _)| *r)
    }

    /// The block as a chart. Message vertices come out in send order, so the
    /// conflict graph of this chart indexes vertices by send position.
    pub fn to_msc(&self) -> Msc {
        let n = self.sends.len();
        let mut events: Vec<(Action, Option<usize>)> = self
            .sends
            .iter()
            .map(|s| (s.clone(), None))
            .collect();
        for (rj, r) in self.recvs.iter().enumerate() {
            let si = self
                .send_of_recv(rj)
                .expect("block receives are paired at construction");
            events[si].1 = Some(n + rj);
            events.push((r.clone(), Some(si)));
        }
        Msc::from_events(events).expect("a valid block always charts")
    }
}

/// Enumerates every block executable from `global` with empty buffers: up to
/// `k` sends in any order the automata allow, then any legal receives of
/// those sends. Yields `(block, successor global state)` pairs in canonical
/// order; nondeterministic automata can produce several successors for one
/// block. Fails once more than `cap` pairs are produced.
pub fn enumerate_k_exchanges(
    sys: &System,
    global: &GlobalState,
    k: usize,
    cap: usize,
) -> Result<Vec<(KExchange, GlobalState)>, ExchangeError> {
    let mut out: BTreeSet<(Vec<Action>, GlobalState)> = BTreeSet::new();
    let cfg = Configuration {
        global: global.clone(),
        buffers: Buffers::empty(sys.comm),
    };
    let mut trace: Vec<Action> = Vec::new();
    walk(sys, &cfg, k, 0, false, &mut trace, &mut out, cap)?;

    out.into_iter()
        .map(|(actions, g)| Ok((KExchange::from_actions(&actions).expect("shape by construction"), g)))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn walk(
    sys: &System,
    cfg: &Configuration,
    k: usize,
    sends: usize,
    receiving: bool,
    trace: &mut Vec<Action>,
    out: &mut BTreeSet<(Vec<Action>, GlobalState)>,
    cap: usize,
) -> Result<(), ExchangeError> {
    if !trace.is_empty() {
        out.insert((trace.clone(), cfg.global.clone()));
        if out.len() > cap {
            return Err(ExchangeError::EnumerationCap { cap });
        }
    }
    for p in sys.proc_ids() {
        let state = &cfg.global[&p];
        for t in sys.enabled_from(&p, state) {
            let ok = match t.action.kind {
                ActionKind::Send => !receiving && sends < k,
                // Queues hold bare message ids, so a pop alone cannot tell
                // same-payload sends from different senders apart. Pair the
                // receive with the in-block sends of its own triple instead,
                // like the run matcher does.
                ActionKind::Recv => {
                    let same_triple = |a: &Action| {
                        a.sender == t.action.sender
                            && a.receiver == t.action.receiver
                            && a.msg == t.action.msg
                    };
                    let sent = trace.iter().filter(|a| a.is_send() && same_triple(a)).count();
                    let recd = trace.iter().filter(|a| !a.is_send() && same_triple(a)).count();
                    recd < sent
                }
            };
            if !ok {
                continue;
            }
            let Ok(next) = step(sys, cfg, &t.action) else {
                continue;
            };
            trace.push(t.action.clone());
            let now_receiving = receiving || t.action.is_recv();
            let now_sends = sends + usize::from(t.action.is_send());
            walk(sys, &next, k, now_sends, now_receiving, trace, out, cap)?;
            trace.pop();
        }
    }
    Ok(())
}

/// Finite memory carried between blocks.
///
/// For each process `p` the first set holds processes that *sent* a message
/// causally after some still-undelivered message addressed to `p`, the
/// second set processes that *received* one. `p` itself appearing in its own
/// second set is the contradiction the abstract step rejects: `p` would have
/// taken a later message while an earlier one for it was still queued.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CausalBookkeeping {
    map: BTreeMap<ProcessId, (BTreeSet<ProcessId>, BTreeSet<ProcessId>)>,
}

impl CausalBookkeeping {
    pub fn empty(procs: &[ProcessId]) -> CausalBookkeeping {
        CausalBookkeeping {
            map: procs
                .iter()
                .map(|p| (p.clone(), (BTreeSet::new(), BTreeSet::new())))
                .collect(),
        }
    }

    pub fn procs(&self) -> impl Iterator<Item = &ProcessId> {
        self.map.keys()
    }

    pub fn sent_after(&self, p: &str) -> &BTreeSet<ProcessId> {
        static EMPTY: BTreeSet<ProcessId> = BTreeSet::new();
        self.map.get(p).map_or(&EMPTY, |(s, _)| s)
    }

    pub fn received_after(&self, p: &str) -> &BTreeSet<ProcessId> {
        static EMPTY: BTreeSet<ProcessId> = BTreeSet::new();
        self.map.get(p).map_or(&EMPTY, |(_, r)| r)
    }

    pub fn insert_sent(&mut self, p: &str, q: ProcessId) {
        self.map.entry(p.to_owned()).or_default().0.insert(q);
    }

    pub fn insert_received(&mut self, p: &str, q: ProcessId) {
        self.map.entry(p.to_owned()).or_default().1.insert(q);
    }

    pub fn is_empty(&self) -> bool {
        self.map.values().all(|(s, r)| s.is_empty() && r.is_empty())
    }

    /// Containment on both set families, the monotonicity order of the
    /// abstract step.
    pub fn subsumes(&self, other: &CausalBookkeeping) -> bool {
        other.map.iter().all(|(p, (s, r))| {
            s.is_subset(self.sent_after(p)) && r.is_subset(self.received_after(p))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AbstractConfig {
    pub global: GlobalState,
    pub book: CausalBookkeeping,
}

/// Conflict graph of one block extended with one pending-summary vertex per
/// process, wired up according to the bookkeeping, plus the index of each
/// summary vertex. [`local_graph_raw`] leaves the closure to the caller so
/// that the monitor machinery can insert its own vertex first;
/// [`local_graph`] closes immediately.
pub struct LocalGraph {
    pub graph: ConflictGraph,
    pub pending: BTreeMap<ProcessId, usize>,
}

pub fn local_graph_raw(
    ex: &KExchange,
    book: &CausalBookkeeping,
    procs: &[ProcessId],
) -> LocalGraph {
    let mut graph = ConflictGraph::build(&ex.to_msc());
    let mut pending = BTreeMap::new();
    for p in procs {
        pending.insert(p.clone(), graph.verts.len());
        graph.verts.push(VertexKind::Pending(p.clone()));
    }
    let real: Vec<usize> = (0..graph.verts.len())
        .filter(|&v| graph.verts[v].is_real())
        .collect();

    let mut edges: Vec<(usize, EdgeLabel, usize)> = Vec::new();
    for p in procs {
        let lp = pending[p];
        let sent = book.sent_after(p);
        let recvd = book.received_after(p);
        for &v in &real {
            let kind = &graph.verts[v];
            let sender = kind.sender().expect("real vertex has a sender");
            let dest = kind.receiver().expect("real vertex has a destination");
            // The pending message precedes anything sent or received by a
            // process already recorded as acting after it.
            if sent.contains(sender) {
                edges.push((lp, EdgeLabel::SS, v));
            }
            if kind.matched() && sent.contains(dest) {
                edges.push((lp, EdgeLabel::SR, v));
            }
            if kind.matched() && (recvd.contains(sender) || recvd.contains(dest)) {
                edges.push((lp, EdgeLabel::SS, v));
            }
            if !kind.matched() && recvd.contains(dest) {
                edges.push((lp, EdgeLabel::SS, v));
            }
            // A delivery towards p keeps the mailbox order behind the
            // pending message.
            if kind.matched() && dest == p {
                edges.push((v, EdgeLabel::SS, lp));
            }
        }
        for q in procs {
            if book.received_after(q).contains(p) {
                edges.push((pending[q], EdgeLabel::SS, lp));
            }
        }
    }
    graph.base.extend(edges);
    LocalGraph { graph, pending }
}

pub fn local_graph(ex: &KExchange, book: &CausalBookkeeping, procs: &[ProcessId]) -> LocalGraph {
    let mut lg = local_graph_raw(ex, book, procs);
    lg.graph.extend();
    lg
}

/// Advances the bookkeeping across one block. Returns the violating process
/// (first in canonical order) when the block cannot belong to any mailbox
/// schedule compatible with the pending messages.
pub fn advance_book(
    ex: &KExchange,
    book: &CausalBookkeeping,
    procs: &[ProcessId],
) -> Result<CausalBookkeeping, ProcessId> {
    let (next, violation) = advance_book_traced(ex, book, procs);
    match violation {
        Some(p) => Err(p),
        None => Ok(next),
    }
}

/// Like [`advance_book`] but keeps the updated sets even when the step is
/// rejected, so a caller can inspect what the block added.
pub fn advance_book_traced(
    ex: &KExchange,
    book: &CausalBookkeeping,
    procs: &[ProcessId],
) -> (CausalBookkeeping, Option<ProcessId>) {
    let lg = local_graph(ex, book, procs);
    let g = &lg.graph;
    let real: Vec<usize> = (0..g.verts.len()).filter(|&v| g.verts[v].is_real()).collect();

    let mut next = book.clone();
    for p in procs {
        let lp = lg.pending[p];
        // Messages of this block left undelivered towards p.
        let unmatched_here: Vec<usize> = real
            .iter()
            .copied()
            .filter(|&v| !g.verts[v].matched() && g.verts[v].receiver().map(String::as_str) == Some(p.as_str()))
            .collect();
        for &v in &unmatched_here {
            let sender = g.verts[v].sender().unwrap().clone();
            next.insert_sent(p, sender);
        }
        let mut sources = unmatched_here.clone();
        sources.push(lp);
        for &src in &sources {
            for &vd in &real {
                if g.ext.contains(&(src, EdgeLabel::SS, vd)) {
                    let sender = g.verts[vd].sender().unwrap().clone();
                    next.insert_sent(p, sender);
                    if let Some(r) = g.verts[vd].recv_actor() {
                        let r = r.clone();
                        next.insert_received(p, r);
                    }
                }
            }
        }
        // Inherited self entry: p already recorded after some other pending
        // message whose summary this block reaches from p's own vicinity.
        for x in [ActionKind::Send, ActionKind::Recv] {
            let inherited = procs.iter().any(|q| {
                let in_cq = match x {
                    ActionKind::Send => book.sent_after(q).contains(p),
                    ActionKind::Recv => book.received_after(q).contains(p),
                };
                if !in_cq {
                    return false;
                }
                let lq = lg.pending[q];
                (0..g.verts.len()).any(|v| {
                    let hits = v == lg.pending[p]
                        || (g.verts[v].is_real()
                            && g.verts[v].receiver().map(String::as_str) == Some(p.as_str()));
                    hits && g.ext.contains(&(v, EdgeLabel::SS, lq))
                })
            });
            if inherited {
                match x {
                    ActionKind::Send => next.insert_sent(p, p.clone()),
                    ActionKind::Recv => next.insert_received(p, p.clone()),
                }
            }
        }
    }

    let violation = procs
        .iter()
        .find(|p| next.received_after(p).contains(p.as_str()))
        .cloned();
    (next, violation)
}

/// One abstract step: checks the width bound, replays the block concretely
/// from `cfg.global` with empty buffers, and advances the bookkeeping.
pub fn step_k(
    sys: &System,
    cfg: &AbstractConfig,
    ex: &KExchange,
    k: usize,
) -> Result<AbstractConfig, StepKError> {
    if ex.width() > k {
        return Err(StepKError::WidthExceeded {
            width: ex.width(),
            k,
        });
    }
    let mut conc = Configuration {
        global: cfg.global.clone(),
        buffers: Buffers::empty(sys.comm),
    };
    for a in ex.actions() {
        // A block replay must be deterministic to have one successor.
        let actor = a.actor();
        let state = conc.global.get(actor).cloned().unwrap_or_default();
        let choices: BTreeSet<&StateId> = sys
            .enabled_from(actor, &state)
            .into_iter()
            .filter(|t| t.action == a)
            .map(|t| &t.to)
            .collect();
        if choices.len() > 1 {
            return Err(StepKError::AmbiguousReplay);
        }
        conc = step(sys, &conc, &a).map_err(|e| StepKError::NotExecutable(e.to_string()))?;
    }
    let procs = sys.proc_ids();
    let book = advance_book(ex, &cfg.book, &procs).map_err(StepKError::CausalDeliveryViolation)?;
    Ok(AbstractConfig {
        global: conc.global,
        book,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct ExploreParams {
    /// Hard bound on distinct abstract states.
    pub limit_states: usize,
    /// Hard bound on blocks enumerated from one state.
    pub exchange_cap: usize,
}

impl Default for ExploreParams {
    fn default() -> Self {
        ExploreParams {
            limit_states: 1_000_000,
            exchange_cap: 100_000,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExploreError {
    #[error("abstract state limit of {0} exceeded")]
    StateLimit(usize),
    #[error(transparent)]
    Exchange(#[from] ExchangeError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LtsTransition {
    pub from: usize,
    pub to: usize,
    pub exchange: KExchange,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LtsViolation {
    pub from: usize,
    pub exchange: KExchange,
    pub process: ProcessId,
}

/// The reachable abstract transition system. State 0 is initial; states are
/// numbered in breadth-first discovery order. Blocks whose bookkeeping step
/// fails are recorded as violations and not taken.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lts {
    pub states: Vec<AbstractConfig>,
    pub transitions: Vec<LtsTransition>,
    pub violations: Vec<LtsViolation>,
}

pub fn explore(sys: &System, k: usize, params: &ExploreParams) -> Result<Lts, ExploreError> {
    let procs = sys.proc_ids();
    let init = AbstractConfig {
        global: sys.initial_global(),
        book: CausalBookkeeping::empty(&procs),
    };
    let mut ids: BTreeMap<AbstractConfig, usize> = BTreeMap::from([(init.clone(), 0)]);
    let mut states = vec![init];
    let mut transitions = Vec::new();
    let mut violations = Vec::new();
    let mut queue: VecDeque<usize> = VecDeque::from([0]);

    while let Some(id) = queue.pop_front() {
        let cfg = states[id].clone();
        for (ex, global) in enumerate_k_exchanges(sys, &cfg.global, k, params.exchange_cap)? {
            match advance_book(&ex, &cfg.book, &procs) {
                Ok(book) => {
                    let succ = AbstractConfig { global, book };
                    let next_id = match ids.get(&succ) {
                        Some(&i) => i,
                        None => {
                            let i = states.len();
                            if i >= params.limit_states {
                                return Err(ExploreError::StateLimit(params.limit_states));
                            }
                            ids.insert(succ.clone(), i);
                            states.push(succ);
                            queue.push_back(i);
                            i
                        }
                    };
                    transitions.push(LtsTransition {
                        from: id,
                        to: next_id,
                        exchange: ex,
                    });
                }
                Err(p) => violations.push(LtsViolation {
                    from: id,
                    exchange: ex,
                    process: p,
                }),
            }
        }
    }
    Ok(Lts {
        states,
        transitions,
        violations,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReachReport {
    pub reachable: bool,
    /// A minimal block schedule reaching the goal, when reachable.
    pub witness: Option<Vec<KExchange>>,
    pub states_explored: usize,
}

/// Breadth-first reachability of a (possibly partial) global control state
/// under block schedules. Processes absent from `goal` are unconstrained.
pub fn decide_reachability(
    sys: &System,
    k: usize,
    goal: &GlobalState,
    params: &ExploreParams,
) -> Result<ReachReport, ExploreError> {
    let procs = sys.proc_ids();
    let matches = |g: &GlobalState| goal.iter().all(|(p, s)| g.get(p) == Some(s));
    let init = AbstractConfig {
        global: sys.initial_global(),
        book: CausalBookkeeping::empty(&procs),
    };
    if matches(&init.global) {
        return Ok(ReachReport {
            reachable: true,
            witness: Some(Vec::new()),
            states_explored: 1,
        });
    }
    let mut ids: BTreeMap<AbstractConfig, usize> = BTreeMap::from([(init.clone(), 0)]);
    let mut states = vec![init];
    let mut parents: Vec<Option<(usize, KExchange)>> = vec![None];
    let mut queue: VecDeque<usize> = VecDeque::from([0]);

    while let Some(id) = queue.pop_front() {
        let cfg = states[id].clone();
        for (ex, global) in enumerate_k_exchanges(sys, &cfg.global, k, params.exchange_cap)? {
            let Ok(book) = advance_book(&ex, &cfg.book, &procs) else {
                continue;
            };
            let succ = AbstractConfig { global, book };
            if ids.contains_key(&succ) {
                continue;
            }
            let i = states.len();
            if i >= params.limit_states {
                return Err(ExploreError::StateLimit(params.limit_states));
            }
            ids.insert(succ.clone(), i);
            parents.push(Some((id, ex)));
            let hit = matches(&succ.global);
            states.push(succ);
            if hit {
                let mut path = Vec::new();
                let mut at = i;
                while let Some((prev, ex)) = &parents[at] {
                    path.push(ex.clone());
                    at = *prev;
                }
                path.reverse();
                return Ok(ReachReport {
                    reachable: true,
                    witness: Some(path),
                    states_explored: states.len(),
                });
            }
            queue.push_back(i);
        }
    }
    Ok(ReachReport {
        reachable: false,
        witness: None,
        states_explored: states.len(),
    })
}

/// Chart of a block schedule: blocks concatenated, pairing taken per block.
pub fn msc_of_exchanges(blocks: &[KExchange]) -> Msc {
    let mut events: Vec<(Action, Option<usize>)> = Vec::new();
    for ex in blocks {
        let offset = events.len();
        let n = ex.sends.len();
        for s in &ex.sends {
            events.push((s.clone(), None));
        }
        for (rj, r) in ex.recvs.iter().enumerate() {
            let si = ex.send_of_recv(rj).expect("block receives are paired");
            events.push((r.clone(), Some(offset + si)));
            events[offset + si].1 = Some(offset + n + rj);
        }
    }
    Msc::from_events(events).expect("block schedules always chart")
}

// Serde mirrors for the on-disk transition system shape.

#[derive(Serialize, Deserialize)]
struct RawEndpointAction {
    from: String,
    to: String,
    msg: MessageId,
}

#[derive(Serialize, Deserialize)]
struct RawExchange {
    sends: Vec<RawEndpointAction>,
    recvs: Vec<RawEndpointAction>,
}

#[derive(Serialize, Deserialize)]
struct RawBookEntry {
    #[serde(rename = "sentAfter")]
    sent_after: Vec<String>,
    #[serde(rename = "receivedAfter")]
    received_after: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RawState {
    id: usize,
    global: BTreeMap<String, String>,
    book: BTreeMap<String, RawBookEntry>,
}

#[derive(Serialize, Deserialize)]
struct RawTransition {
    from: usize,
    to: usize,
    exchange: RawExchange,
}

#[derive(Serialize, Deserialize)]
struct RawViolation {
    from: usize,
    exchange: RawExchange,
    process: String,
}

#[derive(Serialize, Deserialize)]
struct RawLts {
    states: Vec<RawState>,
    transitions: Vec<RawTransition>,
    violations: Vec<RawViolation>,
}

fn exchange_to_raw(ex: &KExchange) -> RawExchange {
    let conv = |a: &Action| RawEndpointAction {
        from: a.sender.clone(),
        to: a.receiver.clone(),
        msg: a.msg.clone(),
    };
    RawExchange {
        sends: ex.sends.iter().map(conv).collect(),
        recvs: ex.recvs.iter().map(conv).collect(),
    }
}

fn exchange_from_raw(raw: &RawExchange) -> Result<KExchange, ExchangeError> {
    let actions: Vec<Action> = raw
        .sends
        .iter()
        .map(|a| Action::send(&a.from, &a.to, a.msg.clone()))
        .chain(
            raw.recvs
                .iter()
                .map(|a| Action::recv(&a.from, &a.to, a.msg.clone())),
        )
        .collect();
    KExchange::from_actions(&actions)
}

impl Lts {
    pub fn to_json(&self) -> String {
        let book_raw = |b: &CausalBookkeeping| {
            b.procs()
                .map(|p| {
                    (
                        p.clone(),
                        RawBookEntry {
                            sent_after: b.sent_after(p).iter().cloned().collect(),
                            received_after: b.received_after(p).iter().cloned().collect(),
                        },
                    )
                })
                .collect()
        };
        let raw = RawLts {
            states: self
                .states
                .iter()
                .enumerate()
                .map(|(id, st)| RawState {
                    id,
                    global: st.global.clone(),
                    book: book_raw(&st.book),
                })
                .collect(),
            transitions: self
                .transitions
                .iter()
                .map(|t| RawTransition {
                    from: t.from,
                    to: t.to,
                    exchange: exchange_to_raw(&t.exchange),
                })
                .collect(),
            violations: self
                .violations
                .iter()
                .map(|v| RawViolation {
                    from: v.from,
                    exchange: exchange_to_raw(&v.exchange),
                    process: v.process.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("transition system serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Lts, String> {
        let raw: RawLts = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let mut states = Vec::new();
        for st in &raw.states {
            if st.id != states.len() {
                return Err(format!("state ids must be dense, got {}", st.id));
            }
            let mut book = CausalBookkeeping::empty(&[]);
            for (p, entry) in &st.book {
                for q in &entry.sent_after {
                    book.insert_sent(p, q.clone());
                }
                for q in &entry.received_after {
                    book.insert_received(p, q.clone());
                }
                book.map.entry(p.clone()).or_default();
            }
            states.push(AbstractConfig {
                global: st.global.clone(),
                book,
            });
        }
        let transitions = raw
            .transitions
            .iter()
            .map(|t| {
                Ok(LtsTransition {
                    from: t.from,
                    to: t.to,
                    exchange: exchange_from_raw(&t.exchange).map_err(|e| e.to_string())?,
                })
            })
            .collect::<Result<_, String>>()?;
        let violations = raw
            .violations
            .iter()
            .map(|v| {
                Ok(LtsViolation {
                    from: v.from,
                    exchange: exchange_from_raw(&v.exchange).map_err(|e| e.to_string())?,
                    process: v.process.clone(),
                })
            })
            .collect::<Result<_, String>>()?;
        Ok(Lts {
            states,
            transitions,
            violations,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(x: &str) -> MessageId {
        MessageId::plain(x)
    }

    fn sys(text: &str) -> System {
        System::from_json(text).unwrap()
    }

    fn chain_system() -> System {
        // q sends m1 to r and m2 to s; s receives m2 then m3; p sends m3 to
        // s and m4 to r; r receives m4. The m1 send can stay undelivered.
        sys(r#"{
          "comm": "mailbox",
          "processes": {
            "p": {"initial": "0", "transitions": [
              {"from": "0", "to": "1", "action": {"kind": "send", "peer": "s", "msg": "m3"}},
              {"from": "1", "to": "2", "action": {"kind": "send", "peer": "r", "msg": "m4"}}
            ]},
            "q": {"initial": "0", "transitions": [
              {"from": "0", "to": "1", "action": {"kind": "send", "peer": "r", "msg": "m1"}},
              {"from": "1", "to": "2", "action": {"kind": "send", "peer": "s", "msg": "m2"}}
            ]},
            "r": {"initial": "0", "transitions": [
              {"from": "0", "to": "1", "action": {"kind": "recv", "peer": "p", "msg": "m4"}}
            ]},
            "s": {"initial": "0", "transitions": [
              {"from": "0", "to": "1", "action": {"kind": "recv", "peer": "q", "msg": "m2"}},
              {"from": "1", "to": "2", "action": {"kind": "recv", "peer": "p", "msg": "m3"}}
            ]}
          }
        }"#)
    }

    #[test]
    fn block_pairing_follows_triple_order() {
        let ex = KExchange::from_actions(&[
            Action::send("p", "q", m("m")),
            Action::send("p", "q", m("m")),
            Action::recv("p", "q", m("m")),
        ])
        .unwrap();
        assert_eq!(ex.matching, vec![(0, 0)]);
        assert_eq!(ex.width(), 2);
        let err = KExchange::from_actions(&[
            Action::recv("p", "q", m("m")),
        ])
        .unwrap_err();
        assert!(matches!(err, ExchangeError::UnmatchedBlockReceive { index: 0 }));
    }

    #[test]
    fn forced_delivery_after_pending_is_rejected() {
        // Same sender towards the same mailbox: once m1 stays undelivered,
        // delivering q's m2 to r later is impossible in FIFO order.
        let s = sys(r#"{
          "comm": "mailbox",
          "processes": {
            "q": {"initial": "0", "transitions": [
              {"from": "0", "to": "1", "action": {"kind": "send", "peer": "r", "msg": "m1"}},
              {"from": "1", "to": "2", "action": {"kind": "send", "peer": "r", "msg": "m2"}}
            ]},
            "r": {"initial": "0", "transitions": [
              {"from": "0", "to": "1", "action": {"kind": "recv", "peer": "q", "msg": "m2"}}
            ]}
          }
        }"#);
        let procs = s.proc_ids();
        let e1 = KExchange::from_actions(&[Action::send("q", "r", m("m1"))]).unwrap();
        let e2 = KExchange::from_actions(&[
            Action::send("q", "r", m("m2")),
            Action::recv("q", "r", m("m2")),
        ])
        .unwrap();
        let b0 = CausalBookkeeping::empty(&procs);
        let b1 = advance_book(&e1, &b0, &procs).unwrap();
        assert!(b1.sent_after("r").contains("q"));
        assert_eq!(advance_book(&e2, &b1, &procs), Err("r".to_owned()));
    }

    #[test]
    fn independent_sender_is_not_blocked() {
        // A pending message from q does not constrain deliveries from p,
        // because the two sends are causally unordered.
        let s = sys(r#"{
          "comm": "mailbox",
          "processes": {
            "p": {"initial": "0", "transitions": [
              {"from": "0", "to": "1", "action": {"kind": "send", "peer": "r", "msg": "m2"}}
            ]},
            "q": {"initial": "0", "transitions": [
              {"from": "0", "to": "1", "action": {"kind": "send", "peer": "r", "msg": "m1"}}
            ]},
            "r": {"initial": "0", "transitions": [
              {"from": "0", "to": "1", "action": {"kind": "recv", "peer": "p", "msg": "m2"}}
            ]}
          }
        }"#);
        let procs = s.proc_ids();
        let e1 = KExchange::from_actions(&[Action::send("q", "r", m("m1"))]).unwrap();
        let e2 = KExchange::from_actions(&[
            Action::send("p", "r", m("m2")),
            Action::recv("p", "r", m("m2")),
        ])
        .unwrap();
        let b1 = advance_book(&e1, &CausalBookkeeping::empty(&procs), &procs).unwrap();
        let b2 = advance_book(&e2, &b1, &procs).unwrap();
        assert!(!b2.received_after("r").contains("r"));
    }

    #[test]
    fn chain_reaches_violation_edge() {
        // The undelivered m1 towards r propagates through m2 and m3 into the
        // bookkeeping, so the final delivery to r is flagged.
        let s = chain_system();
        let lts = explore(&s, 2, &ExploreParams::default()).unwrap();
        assert!(lts
            .violations
            .iter()
            .any(|v| v.process == "r" && v.exchange.sends.iter().any(|a| a.msg == m("m4"))));
        // Each goal is reachable on its own: s by letting q go first, r by
        // delivering m4 before q ever sends m1.
        let goal_s = GlobalState::from([("s".to_owned(), "2".to_owned())]);
        let ok = decide_reachability(&s, 2, &goal_s, &ExploreParams::default()).unwrap();
        assert!(ok.reachable);
        assert!(ok.witness.is_some());
        let goal_r = GlobalState::from([("r".to_owned(), "1".to_owned())]);
        let ok_r = decide_reachability(&s, 2, &goal_r, &ExploreParams::default()).unwrap();
        assert!(ok_r.reachable);
        // Jointly they are not: s finishing forces m2 into its queue before
        // m3, which puts m1 into r's queue before m4.
        let both = GlobalState::from([
            ("r".to_owned(), "1".to_owned()),
            ("s".to_owned(), "2".to_owned()),
        ]);
        let blocked = decide_reachability(&s, 2, &both, &ExploreParams::default()).unwrap();
        assert!(!blocked.reachable);
        let lts_json = Lts::from_json(&lts.to_json()).unwrap();
        assert_eq!(lts_json, lts);
    }

    #[test]
    fn replay_respects_width_and_mode() {
        let s = chain_system();
        let cfg = AbstractConfig {
            global: s.initial_global(),
            book: CausalBookkeeping::empty(&s.proc_ids()),
        };
        let wide = KExchange::from_actions(&[
            Action::send("q", "r", m("m1")),
            Action::send("q", "s", m("m2")),
        ])
        .unwrap();
        assert!(matches!(
            step_k(&s, &cfg, &wide, 1),
            Err(StepKError::WidthExceeded { width: 2, k: 1 })
        ));
        let ok = step_k(&s, &cfg, &wide, 2).unwrap();
        assert_eq!(ok.global["q"], "2");
        assert!(ok.book.sent_after("r").contains("q"));
        assert!(ok.book.sent_after("s").contains("q"));
    }
}
