//! Peer-to-peer variants of the abstract block semantics and the
//! synchronizability decision.
//!
//! With one FIFO buffer per ordered pair of processes, delivery order is a
//! per-channel matter: two sends on the same channel are always ordered by
//! their sender, so no causal information has to be propagated through
//! third parties. The finite memory between blocks collapses to a map of
//! forbidden channels ([`P2pBook`]): once a message from `p` to `q` stays
//! undelivered, every later delivery on that channel is impossible. The
//! same simplification applies to the detour machinery: instead of the
//! monitor bookkeeping it suffices to remember the endpoints of the
//! detoured message and to refuse later deliveries on that channel.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exchange::{
    enumerate_k_exchanges, ExchangeError, ExploreError, ExploreParams, GlobalState, KExchange,
    ReachReport,
};
use crate::membership::{
    bad_step, subsets_with_pi, BadState, DecideError, DecideParams, Verdict, un_deviate,
};
use crate::model::{
    step, Action, Buffers, Configuration, MessageId, ProcessId, StateId, System, PI,
};

/// Channels that can no longer deliver: `forbidden[q]` holds every sender
/// with an undelivered earlier message towards `q`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct P2pBook {
    forbidden: BTreeMap<ProcessId, BTreeSet<ProcessId>>,
}

impl P2pBook {
    pub fn empty() -> P2pBook {
        P2pBook::default()
    }

    pub fn is_forbidden(&self, sender: &str, receiver: &str) -> bool {
        self.forbidden
            .get(receiver)
            .is_some_and(|s| s.contains(sender))
    }

    pub fn forbid(&mut self, sender: &str, receiver: &str) {
        self.forbidden
            .entry(receiver.to_owned())
            .or_default()
            .insert(sender.to_owned());
    }

    pub fn forbidden_senders(&self, receiver: &str) -> BTreeSet<ProcessId> {
        self.forbidden.get(receiver).cloned().unwrap_or_default()
    }

    pub fn subsumes(&self, other: &P2pBook) -> bool {
        other.forbidden.iter().all(|(q, senders)| {
            senders.iter().all(|p| self.is_forbidden(p, q))
        })
    }
}

/// Advances the forbidden-channel map across one block, scanning the sends
/// in order so that an undelivered send blocks later deliveries of the
/// same channel even inside its own block.
pub fn p2p_advance(ex: &KExchange, book: &P2pBook) -> Result<P2pBook, (ProcessId, ProcessId)> {
    let mut next = book.clone();
    for (si, s) in ex.sends.iter().enumerate() {
        if ex.recv_of_send(si).is_some() {
            if next.is_forbidden(&s.sender, &s.receiver) {
                return Err((s.sender.clone(), s.receiver.clone()));
            }
        } else {
            next.forbid(&s.sender, &s.receiver);
        }
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct P2pConfig {
    pub global: GlobalState,
    pub book: P2pBook,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum P2pStepError {
    #[error("block has {width} sends, more than the bound {k}")]
    WidthExceeded { width: usize, k: usize },
    #[error("block is not executable here: {0}")]
    NotExecutable(String),
    #[error("block replay is ambiguous, several transitions fire the same action")]
    AmbiguousReplay,
    #[error("channel {sender} to {receiver} already has an undelivered message")]
    P2pCausalDeliveryViolation { sender: ProcessId, receiver: ProcessId },
}

/// One abstract peer-to-peer step: width check, concrete replay from empty
/// buffers, and the forbidden-channel update.
pub fn p2p_step(
    sys: &System,
    cfg: &P2pConfig,
    ex: &KExchange,
    k: usize,
) -> Result<P2pConfig, P2pStepError> {
    if ex.width() > k {
        return Err(P2pStepError::WidthExceeded {
            width: ex.width(),
            k,
        });
    }
    let mut conc = Configuration {
        global: cfg.global.clone(),
        buffers: Buffers::empty(sys.comm),
    };
    for a in ex.actions() {
        let actor = a.actor();
        let state = conc.global.get(actor).cloned().unwrap_or_default();
        let choices: BTreeSet<&StateId> = sys
            .enabled_from(actor, &state)
            .into_iter()
            .filter(|t| t.action == a)
            .map(|t| &t.to)
            .collect();
        if choices.len() > 1 {
            return Err(P2pStepError::AmbiguousReplay);
        }
        conc = step(sys, &conc, &a).map_err(|e| P2pStepError::NotExecutable(e.to_string()))?;
    }
    let book = p2p_advance(ex, &cfg.book)
        .map_err(|(sender, receiver)| P2pStepError::P2pCausalDeliveryViolation { sender, receiver })?;
    Ok(P2pConfig {
        global: conc.global,
        book,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct P2pLtsTransition {
    pub from: usize,
    pub to: usize,
    pub exchange: KExchange,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct P2pLtsViolation {
    pub from: usize,
    pub exchange: KExchange,
    pub sender: ProcessId,
    pub receiver: ProcessId,
}

/// Reachable abstract transition system under peer-to-peer buffers. Same
/// conventions as the mailbox variant: state 0 initial, breadth-first ids,
/// violating blocks recorded but not taken.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct P2pLts {
    pub states: Vec<P2pConfig>,
    pub transitions: Vec<P2pLtsTransition>,
    pub violations: Vec<P2pLtsViolation>,
}

pub fn p2p_explore(sys: &System, k: usize, params: &ExploreParams) -> Result<P2pLts, ExploreError> {
    let init = P2pConfig {
        global: sys.initial_global(),
        book: P2pBook::empty(),
    };
    let mut ids: BTreeMap<P2pConfig, usize> = BTreeMap::from([(init.clone(), 0)]);
    let mut states = vec![init];
    let mut transitions = Vec::new();
    let mut violations = Vec::new();
    let mut queue: VecDeque<usize> = VecDeque::from([0]);

    while let Some(id) = queue.pop_front() {
        let cfg = states[id].clone();
        for (ex, global) in enumerate_k_exchanges(sys, &cfg.global, k, params.exchange_cap)? {
            match p2p_advance(&ex, &cfg.book) {
                Ok(book) => {
                    let succ = P2pConfig { global, book };
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
                    transitions.push(P2pLtsTransition {
                        from: id,
                        to: next_id,
                        exchange: ex,
                    });
                }
                Err((sender, receiver)) => violations.push(P2pLtsViolation {
                    from: id,
                    exchange: ex,
                    sender,
                    receiver,
                }),
            }
        }
    }
    Ok(P2pLts {
        states,
        transitions,
        violations,
    })
}

/// Breadth-first reachability of a (possibly partial) global control state
/// under peer-to-peer block schedules.
pub fn p2p_decide_reachability(
    sys: &System,
    k: usize,
    goal: &GlobalState,
    params: &ExploreParams,
) -> Result<ReachReport, ExploreError> {
    let matches = |g: &GlobalState| goal.iter().all(|(p, s)| g.get(p) == Some(s));
    let init = P2pConfig {
        global: sys.initial_global(),
        book: P2pBook::empty(),
    };
    if matches(&init.global) {
        return Ok(ReachReport {
            reachable: true,
            witness: Some(Vec::new()),
            states_explored: 1,
        });
    }
    let mut ids: BTreeMap<P2pConfig, usize> = BTreeMap::from([(init.clone(), 0)]);
    let mut states = vec![init];
    let mut parents: Vec<Option<(usize, KExchange)>> = vec![None];
    let mut queue: VecDeque<usize> = VecDeque::from([0]);

    while let Some(id) = queue.pop_front() {
        let cfg = states[id].clone();
        for (ex, global) in enumerate_k_exchanges(sys, &cfg.global, k, params.exchange_cap)? {
            let Ok(book) = p2p_advance(&ex, &cfg.book) else {
                continue;
            };
            let succ = P2pConfig { global, book };
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

/// Detour tracking under peer-to-peer buffers: the endpoints of the
/// detoured message, and at which send position of the current block the
/// detour happened (relevant only during that block).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct P2pFeasState {
    pub global: GlobalState,
    pub book: P2pBook,
    /// Original sender and destination of the detoured message.
    pub detour: Option<(ProcessId, ProcessId)>,
}

impl P2pFeasState {
    pub fn initial(sys: &System) -> P2pFeasState {
        P2pFeasState {
            global: sys.initial_global(),
            book: P2pBook::empty(),
            detour: None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum P2pFeasError {
    #[error("the monitor may only send in the final direct delivery")]
    PiSendsEarly,
    #[error("a second message was detoured to the monitor")]
    SecondDeviation,
    #[error("a message to the monitor must carry a destination and payload")]
    MalformedDeviation,
    #[error("a later message was delivered on the detoured channel")]
    P2pFeasibilityViolation,
    #[error("channel {sender} to {receiver} already has an undelivered message")]
    P2pCausalDeliveryViolation { sender: ProcessId, receiver: ProcessId },
}

/// Extends the peer-to-peer block step across the detour. Feasibility means
/// the detoured message could still be the last delivery of its channel, so
/// two things refute it: an already stuck original channel at the moment of
/// the detour (the orphan would overtake the detoured message in the put
/// back), and any later delivery on that channel (it would be overtaken).
/// Orphans on the channel after the detour are harmless.
pub fn p2p_feas_step(
    fs: &P2pFeasState,
    ex: &KExchange,
    succ_global: GlobalState,
) -> Result<P2pFeasState, P2pFeasError> {
    if ex.sends.iter().any(|a| a.sender == PI) {
        return Err(P2pFeasError::PiSendsEarly);
    }

    let mut book = fs.book.clone();
    let mut detour = fs.detour.clone();
    for (si, s) in ex.sends.iter().enumerate() {
        if s.receiver == PI {
            if detour.is_some() {
                return Err(P2pFeasError::SecondDeviation);
            }
            let MessageId::Routed { dest, .. } = &s.msg else {
                return Err(P2pFeasError::MalformedDeviation);
            };
            if book.is_forbidden(&s.sender, dest) {
                return Err(P2pFeasError::P2pFeasibilityViolation);
            }
            detour = Some((s.sender.clone(), dest.clone()));
            continue;
        }
        let matched = ex.recv_of_send(si).is_some();
        if matched {
            if book.is_forbidden(&s.sender, &s.receiver) {
                return Err(P2pFeasError::P2pCausalDeliveryViolation {
                    sender: s.sender.clone(),
                    receiver: s.receiver.clone(),
                });
            }
            if let Some((p, q)) = &detour {
                if s.sender == *p && s.receiver == *q {
                    return Err(P2pFeasError::P2pFeasibilityViolation);
                }
            }
        } else {
            book.forbid(&s.sender, &s.receiver);
        }
    }

    Ok(P2pFeasState {
        global: succ_global,
        book,
        detour,
    })
}

/// The closing block under peer-to-peer buffers, when one exists and
/// certifies badness. No bookkeeping condition remains to check: reaching
/// this point with the detour recorded means feasibility was never refuted.
fn p2p_try_accept(instr: &System, fs: &P2pFeasState, bad: &BadState, k: usize) -> Option<KExchange> {
    let (_, q) = fs.detour.clone()?;
    let pi_state = fs.global.get(PI)?;
    let forward = instr
        .enabled_from(PI, pi_state)
        .into_iter()
        .find(|t| t.action.is_send() && t.action.receiver == q)?
        .action
        .clone();
    let cfg = Configuration {
        global: fs.global.clone(),
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

/// Decides k-synchronizability of a peer-to-peer system. The badness side
/// is shared with the mailbox decision; only the feasibility side differs.
pub fn decide_k_synchronizability_p2p(
    sys: &System,
    k: usize,
    params: &DecideParams,
) -> Result<Verdict, DecideError> {
    sys.validate()?;
    let instr = sys.instrument()?;
    let procs = instr.proc_ids();

    let mut keys: BTreeMap<(P2pFeasState, BadState), usize> = BTreeMap::new();
    let mut states: Vec<(P2pFeasState, BadState)> = Vec::new();
    let mut parents: Vec<Option<(usize, KExchange)>> = Vec::new();
    let mut queue: VecDeque<usize> = VecDeque::new();

    let feas0 = P2pFeasState::initial(&instr);
    for q_guess in subsets_with_pi(&procs) {
        let bad0 = BadState::initial(&procs, q_guess);
        let key = (feas0.clone(), bad0.clone());
        if keys.contains_key(&key) {
            continue;
        }
        let id = states.len();
        keys.insert(key.clone(), id);
        states.push(key);
        parents.push(None);
        queue.push_back(id);
    }

    while let Some(id) = queue.pop_front() {
        let (feas, bad) = states[id].clone();

        if let Some(ce) = p2p_try_accept(&instr, &feas, &bad, k) {
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

        for (ex, global) in enumerate_k_exchanges(&instr, &feas.global, k, params.exchange_cap)? {
            let undelivered_detour = ex
                .sends
                .iter()
                .enumerate()
                .any(|(si, a)| a.receiver == PI && ex.recv_of_send(si).is_none());
            if undelivered_detour {
                continue;
            }
            let Ok(feas2) = p2p_feas_step(&feas, &ex, global) else {
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
                keys.insert(key.clone(), nid);
                states.push(key);
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

// Serde mirrors for the on-disk peer-to-peer transition system shape.

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
struct RawState {
    id: usize,
    global: BTreeMap<String, String>,
    book: BTreeMap<String, Vec<String>>,
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
    sender: String,
    receiver: String,
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

impl P2pLts {
    pub fn to_json(&self) -> String {
        let raw = RawLts {
            states: self
                .states
                .iter()
                .enumerate()
                .map(|(id, st)| RawState {
                    id,
                    global: st.global.clone(),
                    book: st
                        .book
                        .forbidden
                        .iter()
                        .map(|(q, senders)| (q.clone(), senders.iter().cloned().collect()))
                        .collect(),
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
                    sender: v.sender.clone(),
                    receiver: v.receiver.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("transition system serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<P2pLts, String> {
        let raw: RawLts = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let mut states = Vec::new();
        for st in &raw.states {
            if st.id != states.len() {
                return Err(format!("state ids must be dense, got {}", st.id));
            }
            let mut book = P2pBook::empty();
            for (q, senders) in &st.book {
                for p in senders {
                    book.forbid(p, q);
                }
            }
            states.push(P2pConfig {
                global: st.global.clone(),
                book,
            });
        }
        let transitions = raw
            .transitions
            .iter()
            .map(|t| {
                Ok(P2pLtsTransition {
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
                Ok(P2pLtsViolation {
                    from: v.from,
                    exchange: exchange_from_raw(&v.exchange).map_err(|e| e.to_string())?,
                    sender: v.sender.clone(),
                    receiver: v.receiver.clone(),
                })
            })
            .collect::<Result<_, String>>()?;
        Ok(P2pLts {
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

    fn ex(actions: &[Action]) -> KExchange {
        KExchange::from_actions(actions).unwrap()
    }

    #[test]
    fn stuck_channel_blocks_only_itself() {
        let mut book = P2pBook::empty();
        let e1 = ex(&[Action::send("q", "r", m("m1"))]);
        book = p2p_advance(&e1, &book).unwrap();
        assert!(book.is_forbidden("q", "r"));
        // Another sender's delivery to r is fine under peer-to-peer.
        let e2 = ex(&[Action::send("p", "r", m("m2")), Action::recv("p", "r", m("m2"))]);
        assert!(p2p_advance(&e2, &book).is_ok());
        // A delivery on the stuck channel is not.
        let e3 = ex(&[Action::send("q", "r", m("m3")), Action::recv("q", "r", m("m3"))]);
        assert_eq!(p2p_advance(&e3, &book), Err(("q".to_owned(), "r".to_owned())));
    }

    #[test]
    fn same_block_orphan_blocks_later_delivery() {
        // The scan is positional: an orphan at position 0 poisons the
        // matched send at position 1 of the same block.
        let e = KExchange {
            sends: vec![
                Action::send("q", "r", m("m1")),
                Action::send("q", "r", m("m2")),
            ],
            recvs: vec![Action::recv("q", "r", m("m2"))],
            matching: vec![(0, 1)],
        };
        assert_eq!(
            p2p_advance(&e, &P2pBook::empty()),
            Err(("q".to_owned(), "r".to_owned()))
        );
    }

    #[test]
    fn detoured_channel_refuses_later_delivery() {
        let fs = P2pFeasState {
            global: GlobalState::new(),
            book: P2pBook::empty(),
            detour: Some(("p".to_owned(), "q".to_owned())),
        };
        let e = ex(&[Action::send("p", "q", m("m2")), Action::recv("p", "q", m("m2"))]);
        assert_eq!(
            p2p_feas_step(&fs, &e, GlobalState::new()).unwrap_err(),
            P2pFeasError::P2pFeasibilityViolation
        );
        // Before the detour position, the same delivery is harmless.
        let fs0 = P2pFeasState {
            global: GlobalState::new(),
            book: P2pBook::empty(),
            detour: None,
        };
        let e2 = ex(&[
            Action::send("p", "q", m("m2")),
            Action::send("p", PI, MessageId::routed("q", "m1")),
            Action::recv("p", "q", m("m2")),
            Action::recv("p", PI, MessageId::routed("q", "m1")),
        ]);
        let fs1 = p2p_feas_step(&fs0, &e2, GlobalState::new()).unwrap();
        assert_eq!(fs1.detour, Some(("p".to_owned(), "q".to_owned())));
        // An orphan on the original channel before the detour means the
        // detoured message could never be its channel's last delivery.
        let e3 = ex(&[
            Action::send("p", "q", m("m0")),
            Action::send("p", PI, MessageId::routed("q", "m1")),
            Action::recv("p", PI, MessageId::routed("q", "m1")),
        ]);
        assert_eq!(
            p2p_feas_step(&fs0, &e3, GlobalState::new()).unwrap_err(),
            P2pFeasError::P2pFeasibilityViolation
        );
    }
}
