//! Deciding whether a whole system is k-synchronizable.
//!
//! The decision runs on an instrumented copy of the system (see
//! [`System::instrument`]) in which any one message can take a detour
//! through the monitor process. A counterexample to k-synchronizability
//! exists exactly when some detoured block schedule is *feasible*, meaning
//! the detoured message could equally have been delivered directly, and
//! *bad*, meaning that putting the direct delivery back yields a chart that
//! no decomposition into blocks of at most `k` messages covers.
//!
//! Both aspects are tracked with finite state on top of the abstract block
//! semantics: [`feas_step`] extends the causal bookkeeping with two sets
//! recording who acted after the detoured send, and [`bad_step`] tracks
//! which processes are reachable from the detour and co-reachable from the
//! final direct delivery, counting how many messages lie in between. The
//! product search [`decide_k_synchronizability`] therefore terminates, and
//! a breadth-first order makes the reported counterexample minimal in its
//! number of blocks.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict::{ConflictGraph, EdgeLabel, VertexKind};
use crate::exchange::{
    advance_book, enumerate_k_exchanges, local_graph_raw, AbstractConfig, CausalBookkeeping,
    ExchangeError, GlobalState, KExchange,
};
use crate::model::{step, Action, Buffers, Configuration, MessageId, ModelError, ProcessId, System, PI};
use crate::msc::{Msc, MscError};

/// What the monitor has observed so far: who sent or received causally
/// after the detoured send, and whom that send was originally addressed to.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MonitorSets {
    pub sent_after: BTreeSet<ProcessId>,
    pub received_after: BTreeSet<ProcessId>,
    pub dest: Option<ProcessId>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FeasState {
    pub base: AbstractConfig,
    pub monitor: MonitorSets,
}

impl FeasState {
    pub fn initial(sys: &System) -> FeasState {
        FeasState {
            base: AbstractConfig {
                global: sys.initial_global(),
                book: CausalBookkeeping::empty(&sys.proc_ids()),
            },
            monitor: MonitorSets::default(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FeasError {
    #[error("the monitor may only send in the final direct delivery")]
    PiSendsEarly,
    #[error("a second message was detoured to the monitor")]
    SecondDeviation,
    #[error("a message to the monitor must carry a destination and payload")]
    MalformedDeviation,
    #[error("the detoured message can no longer be delivered directly")]
    FeasibilityViolation,
    #[error("delivering this block would break the mailbox order towards {0}")]
    CausalDeliveryViolation(ProcessId),
}

/// Extends the abstract block step across the monitor bookkeeping. The
/// successor control states are not derivable from the block alone, so the
/// caller passes them in (block enumeration already provides them).
pub fn feas_step(
    fs: &FeasState,
    ex: &KExchange,
    succ_global: GlobalState,
) -> Result<FeasState, FeasError> {
    let procs: Vec<ProcessId> = fs.base.book.procs().cloned().collect();

    if ex.sends.iter().any(|a| a.sender == PI) {
        return Err(FeasError::PiSendsEarly);
    }
    let routed: Vec<&Action> = ex.sends.iter().filter(|a| a.receiver == PI).collect();
    if routed.len() > 1 || (!routed.is_empty() && fs.monitor.dest.is_some()) {
        return Err(FeasError::SecondDeviation);
    }
    let dest = match routed.first() {
        Some(a) => match &a.msg {
            MessageId::Routed { dest, .. } => Some(dest.clone()),
            MessageId::Plain(_) => return Err(FeasError::MalformedDeviation),
        },
        None => fs.monitor.dest.clone(),
    };

    let book = advance_book(ex, &fs.base.book, &procs)
        .map_err(FeasError::CausalDeliveryViolation)?;

    // Local graph with one extra summary vertex for the pre-detour history
    // of the monitor, wired from the monitor sets like the pending
    // summaries are wired from the bookkeeping. No edge points into it.
    let mut lg = local_graph_raw(ex, &fs.base.book, &procs);
    let hat = lg.graph.verts.len();
    lg.graph.verts.push(VertexKind::MonitorHistory);
    let real: Vec<usize> = (0..hat).filter(|&v| lg.graph.verts[v].is_real()).collect();
    let mut edges = Vec::new();
    for &v in &real {
        let kind = &lg.graph.verts[v];
        let sender = kind.sender().expect("real vertex has a sender");
        let dst = kind.receiver().expect("real vertex has a destination");
        if fs.monitor.sent_after.contains(sender) {
            edges.push((hat, EdgeLabel::SS, v));
        }
        if kind.matched() && fs.monitor.sent_after.contains(dst) {
            edges.push((hat, EdgeLabel::SR, v));
        }
        if kind.matched()
            && (fs.monitor.received_after.contains(sender)
                || fs.monitor.received_after.contains(dst))
        {
            edges.push((hat, EdgeLabel::SS, v));
        }
        if !kind.matched() && fs.monitor.received_after.contains(dst) {
            edges.push((hat, EdgeLabel::SS, v));
        }
    }
    for p in &procs {
        if fs.monitor.received_after.contains(p) {
            edges.push((hat, EdgeLabel::SS, lg.pending[p]));
        }
    }
    lg.graph.base.extend(edges);
    lg.graph.extend();
    let g = &lg.graph;

    // Sources tied to the detour: the summary vertex and any message of
    // this block addressed to the monitor.
    let mut sources = vec![hat];
    for &v in &real {
        if g.verts[v].receiver().map(String::as_str) == Some(PI) {
            sources.push(v);
        }
    }

    let mut monitor = fs.monitor.clone();
    monitor.dest = dest;
    for &v in &real {
        if g.verts[v].receiver().map(String::as_str) == Some(PI) {
            monitor
                .sent_after
                .insert(g.verts[v].sender().unwrap().clone());
        }
    }
    for &src in &sources {
        for &v in &real {
            if g.ext.contains(&(src, EdgeLabel::SS, v)) {
                monitor.sent_after.insert(g.verts[v].sender().unwrap().clone());
                if let Some(r) = g.verts[v].recv_actor() {
                    monitor.received_after.insert(r.clone());
                }
            }
        }
        for p in &procs {
            if g.ext.contains(&(src, EdgeLabel::SS, lg.pending[p])) {
                // Everything already recorded after a pending message to p
                // is also after the detour.
                monitor.sent_after.extend(fs.base.book.sent_after(p).iter().cloned());
                monitor
                    .received_after
                    .extend(fs.base.book.received_after(p).iter().cloned());
            }
        }
    }

    if let Some(q) = &monitor.dest {
        if monitor.received_after.contains(q) {
            return Err(FeasError::FeasibilityViolation);
        }
    }
    Ok(FeasState {
        base: AbstractConfig {
            global: succ_global,
            book,
        },
        monitor,
    })
}

/// Whether the chain may close with the direct delivery: a destination has
/// been recorded and no receive of that destination is stuck behind the
/// detoured message in its mailbox.
pub fn feas_accept(fs: &FeasState) -> bool {
    match &fs.monitor.dest {
        Some(q) => !fs.base.book.received_after(q).contains(PI),
        None => false,
    }
}

/// Reachability tracking for the badness check. `q_set` is a guess of the
/// co-reachable processes, validated backwards block by block.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BadState {
    pub p_set: BTreeSet<ProcessId>,
    pub q_set: BTreeSet<ProcessId>,
    pub cont: usize,
    pub saw_rs: bool,
    pub last_is_rec: BTreeMap<ProcessId, bool>,
}

impl BadState {
    pub fn initial(procs: &[ProcessId], q_guess: BTreeSet<ProcessId>) -> BadState {
        BadState {
            p_set: BTreeSet::from([PI.to_owned()]),
            q_set: q_guess,
            cont: 0,
            saw_rs: false,
            last_is_rec: procs.iter().map(|p| (p.clone(), false)).collect(),
        }
    }

    pub fn is_bad(&self, k: usize) -> bool {
        self.saw_rs || self.cont == k + 2
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BadError {
    #[error("the guessed co-reachable set does not match this block")]
    InconsistentGuess,
}

fn procs_of(g: &ConflictGraph, verts: &BTreeSet<usize>) -> BTreeSet<ProcessId> {
    verts.iter().flat_map(|&v| g.verts[v].procs()).collect()
}

fn seeds(g: &ConflictGraph, procs: &BTreeSet<ProcessId>) -> BTreeSet<usize> {
    (0..g.verts.len())
        .filter(|&v| !g.verts[v].procs().is_disjoint(procs))
        .collect()
}

/// One step of the badness automaton across a block. `q_next` is the
/// guessed co-reachable set after the block; the step checks that the
/// current `q_set` is exactly what that guess propagates backwards, so a
/// run of steps validates a whole guessed chain.
pub fn bad_step(
    bs: &BadState,
    ex: &KExchange,
    q_next: &BTreeSet<ProcessId>,
    k: usize,
) -> Result<BadState, BadError> {
    let g = ConflictGraph::build(&ex.to_msc());
    let reach = g.post_star(&seeds(&g, &bs.p_set));
    let coreach = g.pre_star(&seeds(&g, q_next));

    let mut q_expected: BTreeSet<ProcessId> = q_next.clone();
    q_expected.extend(procs_of(&g, &coreach));
    if q_expected != bs.q_set {
        return Err(BadError::InconsistentGuess);
    }

    let zone: BTreeSet<usize> = reach.intersection(&coreach).copied().collect();
    let mut p_set = bs.p_set.clone();
    p_set.extend(procs_of(&g, &reach));

    let on_path: BTreeSet<&ProcessId> = bs.p_set.intersection(&bs.q_set).collect();
    let saw_rs = bs.saw_rs
        || zone.iter().any(|&v| {
            let p = g.verts[v].sender().expect("real vertex has a sender");
            p != PI && *bs.last_is_rec.get(p).unwrap_or(&false) && on_path.contains(p)
        });

    let last_is_rec = bs
        .last_is_rec
        .iter()
        .map(|(q, &old)| {
            let received_in_zone = zone
                .iter()
                .any(|&v| g.verts[v].recv_actor().map(String::as_str) == Some(q.as_str()));
            let sent_here = (0..g.verts.len())
                .any(|v| g.verts[v].sender().map(String::as_str) == Some(q.as_str()));
            (q.clone(), received_in_zone || (old && !sent_here))
        })
        .collect();

    Ok(BadState {
        p_set,
        q_set: q_next.clone(),
        cont: (k + 2).min(bs.cont + zone.len()),
        saw_rs,
        last_is_rec,
    })
}

/// Deterministic verdict for one complete detoured block schedule, the last
/// block being the direct delivery by the monitor. The maximal consistent
/// chain of co-reachable guesses is computed backwards first; every other
/// guess is dominated by it, so this decides badness of the single run.
pub fn bad_by_chain(blocks: &[KExchange], procs: &[ProcessId], k: usize) -> bool {
    let n = blocks.len();
    let mut q_sets: Vec<BTreeSet<ProcessId>> = vec![BTreeSet::from([PI.to_owned()]); n + 1];
    for i in (0..n).rev() {
        let g = ConflictGraph::build(&blocks[i].to_msc());
        let coreach = g.pre_star(&seeds(&g, &q_sets[i + 1]));
        let mut q = q_sets[i + 1].clone();
        q.extend(procs_of(&g, &coreach));
        q_sets[i] = q;
    }
    let mut bs = BadState::initial(procs, q_sets[0].clone());
    for (i, ex) in blocks.iter().enumerate() {
        bs = bad_step(&bs, ex, &q_sets[i + 1], k)
            .expect("backward-computed guesses are consistent by construction");
    }
    bs.is_bad(k)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecideError {
    #[error("product state limit of {0} exceeded")]
    ExplosionLimit(usize),
    #[error(transparent)]
    Exchange(#[from] ExchangeError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub k: usize,
    pub synchronizable: bool,
    pub counterexample: Option<Msc>,
    pub states_explored: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct DecideParams {
    pub limit_states: usize,
    pub exchange_cap: usize,
}

impl Default for DecideParams {
    fn default() -> Self {
        DecideParams {
            limit_states: 1_000_000,
            exchange_cap: 100_000,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum UndeviateError {
    #[error("the schedule contains no detoured send")]
    NoDeviation,
    #[error(transparent)]
    Chart(#[from] MscError),
}

/// Rebuilds the chart of the original run from a detoured block schedule:
/// the detoured send goes back to its real destination, the monitor events
/// disappear, and the direct delivery becomes the final receive. The block
/// pairing is kept as is, so the result charts exactly the run the monitor
/// deviated from.
pub fn un_deviate(blocks: &[KExchange]) -> Result<Msc, UndeviateError> {
    let mut events: Vec<(Action, Option<usize>)> = Vec::new();
    let mut detoured: Option<(usize, ProcessId, ProcessId, String)> = None;
    for ex in blocks {
        let mut send_pos: Vec<Option<usize>> = Vec::with_capacity(ex.sends.len());
        for s in &ex.sends {
            if s.receiver == PI {
                if let MessageId::Routed { dest, msg } = &s.msg {
                    detoured = Some((events.len(), s.sender.clone(), dest.clone(), msg.clone()));
                    send_pos.push(None);
                    events.push((Action::send(&s.sender, dest, MessageId::plain(msg)), None));
                    continue;
                }
            }
            if s.sender == PI {
                send_pos.push(None);
                continue;
            }
            send_pos.push(Some(events.len()));
            events.push((s.clone(), None));
        }
        for (rj, r) in ex.recvs.iter().enumerate() {
            if r.receiver == PI || r.sender == PI {
                continue;
            }
            let si = ex.send_of_recv(rj).expect("block receives are paired");
            let at = send_pos[si].expect("a kept receive pairs with a kept send");
            let here = events.len();
            events.push((r.clone(), Some(at)));
            events[at].1 = Some(here);
        }
    }
    let (dpos, dsender, ddest, dmsg) = detoured.ok_or(UndeviateError::NoDeviation)?;
    let fin = events.len();
    events.push((Action::recv(&dsender, &ddest, MessageId::plain(&dmsg)), Some(dpos)));
    events[dpos].1 = Some(fin);
    Ok(Msc::from_events(events)?)
}

struct ProductState {
    feas: FeasState,
    bad: BadState,
}

/// Decides k-synchronizability of a system by searching the instrumented
/// abstract semantics for a feasible bad detour. Returns a minimal
/// counterexample chart when the system is not k-synchronizable.
pub fn decide_k_synchronizability(
    sys: &System,
    k: usize,
    params: &DecideParams,
) -> Result<Verdict, DecideError> {
    sys.validate()?;
    let instr = sys.instrument()?;
    let procs = instr.proc_ids();

    let mut keys: BTreeMap<(FeasState, BadState), usize> = BTreeMap::new();
    let mut states: Vec<ProductState> = Vec::new();
    let mut parents: Vec<Option<(usize, KExchange)>> = Vec::new();
    let mut queue: VecDeque<usize> = VecDeque::new();

    let feas0 = FeasState::initial(&instr);
    for q_guess in subsets_with_pi(&procs) {
        let bad0 = BadState::initial(&procs, q_guess);
        let key = (feas0.clone(), bad0.clone());
        if keys.contains_key(&key) {
            continue;
        }
        let id = states.len();
        keys.insert(key, id);
        states.push(ProductState {
            feas: feas0.clone(),
            bad: bad0,
        });
        parents.push(None);
        queue.push_back(id);
    }

    while let Some(id) = queue.pop_front() {
        let (feas, bad) = (states[id].feas.clone(), states[id].bad.clone());

        // Try to close the chain here with the direct delivery.
        if let Some(ce) = try_accept(&instr, &feas, &bad, k) {
            let mut path = Vec::new();
            let mut at = id;
            while let Some((prev, ex)) = &parents[at] {
                path.push(ex.clone());
                at = *prev;
            }
            path.reverse();
            path.push(ce);
            let counterexample = un_deviate(&path).expect("accepted chains always chart");
            return Ok(Verdict {
                k,
                synchronizable: false,
                counterexample: Some(counterexample),
                states_explored: states.len(),
            });
        }

        for (ex, global) in enumerate_k_exchanges(&instr, &feas.base.global, k, params.exchange_cap)?
        {
            // A detoured send left undelivered can never be completed by
            // the direct delivery, so such branches are dead.
            let undelivered_detour = ex
                .sends
                .iter()
                .enumerate()
                .any(|(si, a)| a.receiver == PI && ex.recv_of_send(si).is_none());
            if undelivered_detour {
                continue;
            }
            let Ok(feas2) = feas_step(&feas, &ex, global) else {
                continue;
            };
            for q_next in subsets_with_pi(&bad.q_set) {
                let Ok(bad2) = bad_step(&bad, &ex, &q_next, k) else {
                    continue;
                };
                let key = (feas2.clone(), bad2.clone());
                if keys.contains_key(&key) {
                    continue;
                }
                let nid = states.len();
                if nid >= params.limit_states {
                    return Err(DecideError::ExplosionLimit(params.limit_states));
                }
                keys.insert(key, nid);
                states.push(ProductState {
                    feas: feas2.clone(),
                    bad: bad2,
                });
                parents.push(Some((id, ex.clone())));
                queue.push_back(nid);
            }
        }
    }

    Ok(Verdict {
        k,
        synchronizable: true,
        counterexample: None,
        states_explored: states.len(),
    })
}

/// The closing block, when it exists and certifies badness: the monitor
/// delivers the held message directly, which must be concretely executable,
/// allowed by the bookkeeping, and complete a bad chain.
fn try_accept(instr: &System, feas: &FeasState, bad: &BadState, k: usize) -> Option<KExchange> {
    let q = feas.monitor.dest.clone()?;
    if !feas_accept(feas) {
        return None;
    }
    let pi_state = feas.base.global.get(PI)?;
    let forward = instr
        .enabled_from(PI, pi_state)
        .into_iter()
        .find(|t| t.action.is_send() && t.action.receiver == q)?
        .action
        .clone();
    let cfg = Configuration {
        global: feas.base.global.clone(),
        buffers: Buffers::empty(instr.comm),
    };
    let cfg = step(instr, &cfg, &forward).ok()?;
    let reply = Action::recv(PI, &q, forward.msg.clone());
    step(instr, &cfg, &reply).ok()?;
    let ex = KExchange::from_actions(&[forward, reply]).expect("a send and its receive");
    let final_q = BTreeSet::from([PI.to_owned()]);
    let done = bad_step(bad, &ex, &final_q, k).ok()?;
    done.is_bad(k).then_some(ex)
}

/// All subsets of the given processes that contain the monitor. The
/// co-reachable sets of a valid chain always do, so guessing stays here.
pub(crate) fn subsets_with_pi<'a>(
    procs: impl IntoIterator<Item = &'a ProcessId>,
) -> Vec<BTreeSet<ProcessId>> {
    let rest: Vec<&ProcessId> = procs.into_iter().filter(|p| p.as_str() != PI).collect();
    let mut out = Vec::new();
    for mask in 0..(1usize << rest.len()) {
        let mut s = BTreeSet::from([PI.to_owned()]);
        for (i, p) in rest.iter().enumerate() {
            if mask & (1 << i) != 0 {
                s.insert((*p).clone());
            }
        }
        out.push(s);
    }
    out
}

// Serde mirror for the verdict report.

#[derive(Serialize, Deserialize)]
struct RawVerdict {
    k: usize,
    synchronizable: bool,
    counterexample: Option<serde_json::Value>,
    #[serde(rename = "statesExplored")]
    states_explored: usize,
}

impl Verdict {
    pub fn to_json(&self) -> String {
        let raw = RawVerdict {
            k: self.k,
            synchronizable: self.synchronizable,
            counterexample: self
                .counterexample
                .as_ref()
                .map(|m| serde_json::from_str(&m.to_json()).expect("chart JSON is valid")),
            states_explored: self.states_explored,
        };
        serde_json::to_string_pretty(&raw).expect("verdict serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Verdict, String> {
        let raw: RawVerdict = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let counterexample = match raw.counterexample {
            Some(v) => Some(
                Msc::from_json(&serde_json::to_string(&v).expect("value reserializes"))
                    .map_err(|e| e.to_string())?,
            ),
            None => None,
        };
        Ok(Verdict {
            k: raw.k,
            synchronizable: raw.synchronizable,
            counterexample,
            states_explored: raw.states_explored,
        })
    }
}
