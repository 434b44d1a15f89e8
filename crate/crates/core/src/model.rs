//! Communicating finite-state machines and their concrete FIFO semantics.
//!
//! A [`System`] is a finite set of named processes, each a finite automaton
//! whose transitions are labelled with send or receive actions. Processes
//! communicate through unbounded FIFO buffers. Two buffer disciplines are
//! supported: [`Comm::Mailbox`] merges everything addressed to a process into
//! a single queue, [`Comm::P2p`] keeps one queue per ordered sender/receiver
//! pair.
//!
//! Buffers store bare message identifiers. Under the mailbox discipline the
//! sender recorded in a receive action is bookkeeping only, so a runnable
//! sequence can pair a receive with a message that a *different* process put
//! at the head of the queue. [`run`] rejects such sequences: every analysis
//! downstream needs the sender/receiver/message triples to pair up, with each
//! send strictly before its receive.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type ProcessId = String;
pub type StateId = String;

/// Name reserved for the monitoring process introduced by [`System::instrument`].
pub const PI: &str = "pi";

/// Message identifier carried by an action and stored in buffers.
///
/// `Routed` payloads bundle a final destination with the message; they are
/// produced by [`System::instrument`], which redirects one send towards the
/// monitor while remembering where it was originally going.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MessageId {
    Plain(String),
    Routed { dest: ProcessId, msg: String },
}

impl MessageId {
    pub fn plain(m: &str) -> Self {
        MessageId::Plain(m.to_owned())
    }

    pub fn routed(dest: &str, msg: &str) -> Self {
        MessageId::Routed {
            dest: dest.to_owned(),
            msg: msg.to_owned(),
        }
    }
}

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MessageId::Plain(m) => write!(f, "{m}"),
            MessageId::Routed { dest, msg } => write!(f, "({dest},{msg})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Send,
    Recv,
}

/// A communication action. `sender` and `receiver` are always the endpoints
/// of the message itself; the process performing the action is the sender for
/// sends and the receiver for receives.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Action {
    pub kind: ActionKind,
    pub sender: ProcessId,
    pub receiver: ProcessId,
    pub msg: MessageId,
}

impl Action {
    pub fn send(sender: &str, receiver: &str, msg: MessageId) -> Self {
        Action {
            kind: ActionKind::Send,
            sender: sender.to_owned(),
            receiver: receiver.to_owned(),
            msg,
        }
    }

    pub fn recv(sender: &str, receiver: &str, msg: MessageId) -> Self {
        Action {
            kind: ActionKind::Recv,
            sender: sender.to_owned(),
            receiver: receiver.to_owned(),
            msg,
        }
    }

    /// The process that performs this action.
    pub fn actor(&self) -> &ProcessId {
        match self.kind {
            ActionKind::Send => &self.sender,
            ActionKind::Recv => &self.receiver,
        }
    }

    pub fn is_send(&self) -> bool {
        self.kind == ActionKind::Send
    }

    pub fn is_recv(&self) -> bool {
        self.kind == ActionKind::Recv
    }

    /// Sender, receiver and message, the part that matching is computed on.
    pub fn triple(&self) -> (&ProcessId, &ProcessId, &MessageId) {
        (&self.sender, &self.receiver, &self.msg)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ActionKind::Send => write!(f, "send({},{},{})", self.sender, self.receiver, self.msg),
            ActionKind::Recv => write!(f, "rec({},{},{})", self.sender, self.receiver, self.msg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comm {
    Mailbox,
    P2p,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub from: StateId,
    pub to: StateId,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessDef {
    pub initial: StateId,
    /// Kept in listing order so serialization round-trips exactly.
    pub transitions: Vec<Transition>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct System {
    pub comm: Comm,
    pub processes: BTreeMap<ProcessId, ProcessDef>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("malformed system JSON: {0}")]
    Json(String),
    #[error("process {owner}: transition action {action} does not involve its own process")]
    ForeignAction { owner: ProcessId, action: String },
    #[error("process {owner}: peer {peer} is not declared")]
    UnknownPeer { owner: ProcessId, peer: ProcessId },
    #[error("process name must be non-empty")]
    EmptyName,
    #[error("name {name} is reserved for instrumentation")]
    ReservedName { name: String },
    #[error("routed message payloads are reserved for instrumentation")]
    ReservedPayload,
    #[error("the sequence does not end with a receive action")]
    LastActionNotReceive,
    #[error("the final receive has no matching send")]
    UnmatchedFinalReceive,
}

// Serde mirror of the on-disk shape. Actions are stored peer-relative (the
// owning process plus a peer) and expanded to endpoint form on load.
#[derive(Serialize, Deserialize)]
struct RawSystem {
    comm: Comm,
    processes: BTreeMap<String, RawProcess>,
}

#[derive(Serialize, Deserialize)]
struct RawProcess {
    initial: String,
    transitions: Vec<RawTransition>,
}

#[derive(Serialize, Deserialize)]
struct RawTransition {
    from: String,
    to: String,
    action: RawAction,
}

#[derive(Serialize, Deserialize)]
struct RawAction {
    kind: ActionKind,
    peer: String,
    msg: MessageId,
}

impl System {
    pub fn from_json(text: &str) -> Result<System, ModelError> {
        let raw: RawSystem =
            serde_json::from_str(text).map_err(|e| ModelError::Json(e.to_string()))?;
        let mut processes = BTreeMap::new();
        for (name, rp) in raw.processes {
            let transitions = rp
                .transitions
                .into_iter()
                .map(|rt| {
                    let action = match rt.action.kind {
                        ActionKind::Send => Action::send(&name, &rt.action.peer, rt.action.msg),
                        ActionKind::Recv => Action::recv(&rt.action.peer, &name, rt.action.msg),
                    };
                    Transition {
                        from: rt.from,
                        to: rt.to,
                        action,
                    }
                })
                .collect();
            processes.insert(
                name,
                ProcessDef {
                    initial: rp.initial,
                    transitions,
                },
            );
        }
        let sys = System {
            comm: raw.comm,
            processes,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn to_json(&self) -> String {
        let processes = self
            .processes
            .iter()
            .map(|(name, pd)| {
                let transitions = pd
                    .transitions
                    .iter()
                    .map(|t| {
                        let peer = match t.action.kind {
                            ActionKind::Send => t.action.receiver.clone(),
                            ActionKind::Recv => t.action.sender.clone(),
                        };
                        RawTransition {
                            from: t.from.clone(),
                            to: t.to.clone(),
                            action: RawAction {
                                kind: t.action.kind,
                                peer,
                                msg: t.action.msg.clone(),
                            },
                        }
                    })
                    .collect();
                (
                    name.clone(),
                    RawProcess {
                        initial: pd.initial.clone(),
                        transitions,
                    },
                )
            })
            .collect();
        let raw = RawSystem {
            comm: self.comm,
            processes,
        };
        serde_json::to_string_pretty(&raw).expect("system serialization cannot fail")
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, pd) in &self.processes {
            if name.is_empty() {
                return Err(ModelError::EmptyName);
            }
            for t in &pd.transitions {
                if t.action.actor() != name {
                    return Err(ModelError::ForeignAction {
                        owner: name.clone(),
                        action: t.action.to_string(),
                    });
                }
                let peer = match t.action.kind {
                    ActionKind::Send => &t.action.receiver,
                    ActionKind::Recv => &t.action.sender,
                };
                if !self.processes.contains_key(peer) {
                    return Err(ModelError::UnknownPeer {
                        owner: name.clone(),
                        peer: peer.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Process names in canonical (lexicographic) order.
    pub fn proc_ids(&self) -> Vec<ProcessId> {
        self.processes.keys().cloned().collect()
    }

    pub fn initial_config(&self) -> Configuration {
        Configuration {
            global: self
                .processes
                .iter()
                .map(|(p, pd)| (p.clone(), pd.initial.clone()))
                .collect(),
            buffers: Buffers::empty(self.comm),
        }
    }

    pub fn initial_global(&self) -> BTreeMap<ProcessId, StateId> {
        self.processes
            .iter()
            .map(|(p, pd)| (p.clone(), pd.initial.clone()))
            .collect()
    }

    /// Transitions of `proc` leaving `state`, in canonical action order.
    pub fn enabled_from(&self, proc: &str, state: &str) -> Vec<&Transition> {
        let mut out: Vec<&Transition> = match self.processes.get(proc) {
            Some(pd) => pd.transitions.iter().filter(|t| t.from == state).collect(),
            None => Vec::new(),
        };
        out.sort_by(|a, b| (&a.action, &a.to).cmp(&(&b.action, &b.to)));
        out
    }

    /// Builds the deviation monitor variant of this system.
    ///
    /// Every send `p -> q` gains a sibling that routes the message to the
    /// monitor process [`PI`] tagged with its intended destination, every
    /// receive gains a sibling accepting the same message from the monitor,
    /// and the monitor itself can pick up one routed message and forward it.
    /// The input must not already use the reserved name or routed payloads.
    pub fn instrument(&self) -> Result<System, ModelError> {
        if self.processes.contains_key(PI) {
            return Err(ModelError::ReservedName {
                name: PI.to_owned(),
            });
        }
        for pd in self.processes.values() {
            if pd
                .transitions
                .iter()
                .any(|t| matches!(t.action.msg, MessageId::Routed { .. }))
            {
                return Err(ModelError::ReservedPayload);
            }
        }

        let mut out = BTreeMap::new();
        for (name, pd) in &self.processes {
            let mut transitions = pd.transitions.clone();
            for t in &pd.transitions {
                match t.action.kind {
                    ActionKind::Send => {
                        let MessageId::Plain(m) = &t.action.msg else {
                            unreachable!("routed payloads rejected above")
                        };
                        transitions.push(Transition {
                            from: t.from.clone(),
                            to: t.to.clone(),
                            action: Action::send(
                                name,
                                PI,
                                MessageId::routed(&t.action.receiver, m),
                            ),
                        });
                    }
                    ActionKind::Recv => {
                        transitions.push(Transition {
                            from: t.from.clone(),
                            to: t.to.clone(),
                            action: Action::recv(PI, name, t.action.msg.clone()),
                        });
                    }
                }
            }
            out.insert(
                name.clone(),
                ProcessDef {
                    initial: pd.initial.clone(),
                    transitions,
                },
            );
        }

        // The monitor: one holding state per destination/message pair that
        // some process can send, with a forwarding transition whenever some
        // process could receive that pair.
        let mut send_pairs = BTreeMap::new();
        let mut recv_pairs = std::collections::BTreeSet::new();
        for pd in self.processes.values() {
            for t in &pd.transitions {
                let MessageId::Plain(m) = &t.action.msg else {
                    unreachable!()
                };
                match t.action.kind {
                    ActionKind::Send => {
                        send_pairs
                            .entry((t.action.receiver.clone(), m.clone()))
                            .or_insert_with(Vec::new)
                            .push(t.action.sender.clone());
                    }
                    ActionKind::Recv => {
                        recv_pairs.insert((t.action.receiver.clone(), m.clone()));
                    }
                }
            }
        }
        let mut pi_transitions = Vec::new();
        for (idx, ((dest, m), senders)) in send_pairs.iter().enumerate() {
            let hold = format!("pi@{idx}:{dest}:{m}");
            let mut senders = senders.clone();
            senders.sort();
            senders.dedup();
            for s in senders {
                pi_transitions.push(Transition {
                    from: "pi@start".to_owned(),
                    to: hold.clone(),
                    action: Action::recv(&s, PI, MessageId::routed(dest, m)),
                });
            }
            if recv_pairs.contains(&(dest.clone(), m.clone())) {
                pi_transitions.push(Transition {
                    from: hold.clone(),
                    to: "pi@done".to_owned(),
                    action: Action::send(PI, dest, MessageId::plain(m)),
                });
            }
        }
        out.insert(
            PI.to_owned(),
            ProcessDef {
                initial: "pi@start".to_owned(),
                transitions: pi_transitions,
            },
        );

        Ok(System {
            comm: self.comm,
            processes: out,
        })
    }
}

/// FIFO buffer contents of a configuration.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Buffers {
    /// One queue per receiving process.
    Mailbox(BTreeMap<ProcessId, VecDeque<MessageId>>),
    /// One queue per ordered (sender, receiver) pair.
    P2p(BTreeMap<(ProcessId, ProcessId), VecDeque<MessageId>>),
}

impl Buffers {
    pub fn empty(comm: Comm) -> Buffers {
        match comm {
            Comm::Mailbox => Buffers::Mailbox(BTreeMap::new()),
            Comm::P2p => Buffers::P2p(BTreeMap::new()),
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Buffers::Mailbox(m) => m.values().all(VecDeque::is_empty),
            Buffers::P2p(m) => m.values().all(VecDeque::is_empty),
        }
    }

    fn push(&mut self, action: &Action) {
        match self {
            Buffers::Mailbox(m) => m
                .entry(action.receiver.clone())
                .or_default()
                .push_back(action.msg.clone()),
            Buffers::P2p(m) => m
                .entry((action.sender.clone(), action.receiver.clone()))
                .or_default()
                .push_back(action.msg.clone()),
        }
    }

    fn pop(&mut self, action: &Action) -> Result<(), Option<MessageId>> {
        let queue = match self {
            Buffers::Mailbox(m) => m.get_mut(&action.receiver),
            Buffers::P2p(m) => m.get_mut(&(action.sender.clone(), action.receiver.clone())),
        };
        let queue = queue.ok_or(None)?;
        match queue.front() {
            Some(head) if *head == action.msg => {
                queue.pop_front();
                Ok(())
            }
            Some(head) => Err(Some(head.clone())),
            None => Err(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Configuration {
    pub global: BTreeMap<ProcessId, StateId>,
    pub buffers: Buffers,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StepError {
    #[error("process {process} cannot take {action} at state {state}")]
    NotEnabled {
        process: ProcessId,
        state: StateId,
        action: String,
    },
    #[error("receive {action} does not match the buffer head ({head})")]
    BufferHeadMismatch {
        action: String,
        /// Display form of the head, or "empty" when the queue has none.
        head: String,
    },
}

/// Fires one action from `cfg`, returning the successor configuration.
///
/// Sends append the message to the proper queue. Receives require an enabled
/// transition *and* the message at the head of the queue the discipline
/// assigns to the action.
pub fn step(sys: &System, cfg: &Configuration, action: &Action) -> Result<Configuration, StepError> {
    let actor = action.actor();
    let state = cfg.global.get(actor).ok_or_else(|| StepError::NotEnabled {
        process: actor.clone(),
        state: "<missing>".to_owned(),
        action: action.to_string(),
    })?;
    let target = sys
        .enabled_from(actor, state)
        .into_iter()
        .find(|t| t.action == *action)
        .map(|t| t.to.clone())
        .ok_or_else(|| StepError::NotEnabled {
            process: actor.clone(),
            state: state.clone(),
            action: action.to_string(),
        })?;

    let mut next = cfg.clone();
    match action.kind {
        ActionKind::Send => next.buffers.push(action),
        ActionKind::Recv => {
            next.buffers.pop(action).map_err(|head| StepError::BufferHeadMismatch {
                action: action.to_string(),
                head: head.map_or_else(|| "empty".to_owned(), |m| m.to_string()),
            })?;
        }
    }
    next.global.insert(actor.clone(), target);
    Ok(next)
}

/// A validated execution: the action sequence, the send/receive pairing and
/// the configuration it ends in. Every receive is matched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Execution {
    pub actions: Vec<Action>,
    /// Send index to receive index. Strictly increasing on both sides within
    /// each sender/receiver/message triple.
    pub matching: BTreeMap<usize, usize>,
    pub final_config: Configuration,
}

impl Execution {
    /// Receive index back to its send index.
    pub fn send_of(&self) -> BTreeMap<usize, usize> {
        self.matching.iter().map(|(s, r)| (*r, *s)).collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RunError {
    #[error("action {index}: {source}")]
    Step { index: usize, source: StepError },
    #[error("receive at {index} has no matching send with the same endpoints and message")]
    UnmatchedReceive { index: usize },
    #[error("receive at {recv} pairs with the send at {send}, which comes later")]
    MatchOutOfOrder { send: usize, recv: usize },
}

/// Replays a sequence from the initial configuration and computes matching.
///
/// Matching pairs the n-th send of each sender/receiver/message triple with
/// the n-th receive of the same triple, counted over the whole sequence. The
/// sequence is rejected if some receive has no such send or the send comes
/// after it; the mailbox discipline can make such sequences runnable (another
/// process's identical message satisfies the queue head) but no analysis here
/// can interpret them.
pub fn run(sys: &System, actions: &[Action]) -> Result<Execution, RunError> {
    let mut cfg = sys.initial_config();
    for (index, a) in actions.iter().enumerate() {
        cfg = step(sys, &cfg, a).map_err(|source| RunError::Step { index, source })?;
    }

    let mut sends: BTreeMap<_, Vec<usize>> = BTreeMap::new();
    let mut recvs: BTreeMap<_, Vec<usize>> = BTreeMap::new();
    for (i, a) in actions.iter().enumerate() {
        let key = (a.sender.clone(), a.receiver.clone(), a.msg.clone());
        match a.kind {
            ActionKind::Send => sends.entry(key).or_default().push(i),
            ActionKind::Recv => recvs.entry(key).or_default().push(i),
        }
    }
    let mut matching = BTreeMap::new();
    // Report the earliest offending receive across all triples.
    let mut first: Option<(usize, RunError)> = None;
    let note = |pos: usize, err: RunError, first: &mut Option<(usize, RunError)>| {
        if first.as_ref().map_or(true, |(p, _)| pos < *p) {
            *first = Some((pos, err));
        }
    };
    for (key, rs) in &recvs {
        let ss = sends.get(key).map(Vec::as_slice).unwrap_or(&[]);
        for (nth, &r) in rs.iter().enumerate() {
            match ss.get(nth) {
                None => note(r, RunError::UnmatchedReceive { index: r }, &mut first),
                Some(&s) if s > r => {
                    note(r, RunError::MatchOutOfOrder { send: s, recv: r }, &mut first)
                }
                Some(&s) => {
                    matching.insert(s, r);
                }
            }
        }
    }
    if let Some((_, err)) = first {
        return Err(err);
    }

    Ok(Execution {
        actions: actions.to_vec(),
        matching,
        final_config: cfg,
    })
}

/// Rewrites an execution ending in a matched receive into its deviation: the
/// triggering send is redirected through the monitor, which forwards the
/// message at the very end. The result is a raw sequence meant to be replayed
/// on [`System::instrument`]'s output.
pub fn deviate(exec: &Execution) -> Result<Vec<Action>, ModelError> {
    let last = exec.actions.len().checked_sub(1).ok_or(ModelError::LastActionNotReceive)?;
    let final_recv = &exec.actions[last];
    if !final_recv.is_recv() {
        return Err(ModelError::LastActionNotReceive);
    }
    let send_idx = *exec
        .send_of()
        .get(&last)
        .ok_or(ModelError::UnmatchedFinalReceive)?;

    let MessageId::Plain(m) = &final_recv.msg else {
        return Err(ModelError::ReservedPayload);
    };
    let p = &final_recv.sender;
    let q = &final_recv.receiver;
    let routed = MessageId::routed(q, m);

    let mut out = Vec::with_capacity(exec.actions.len() + 3);
    out.extend_from_slice(&exec.actions[..send_idx]);
    out.push(Action::send(p, PI, routed.clone()));
    out.push(Action::recv(p, PI, routed));
    out.extend_from_slice(&exec.actions[send_idx + 1..last]);
    out.push(Action::send(PI, q, MessageId::plain(m)));
    out.push(Action::recv(PI, q, MessageId::plain(m)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ping_pong() -> System {
        System::from_json(
            r#"{
              "comm": "mailbox",
              "processes": {
                "p": {
                  "initial": "0",
                  "transitions": [
                    {"from": "0", "to": "1", "action": {"kind": "send", "peer": "q", "msg": "m1"}},
                    {"from": "1", "to": "2", "action": {"kind": "recv", "peer": "q", "msg": "m2"}}
                  ]
                },
                "q": {
                  "initial": "0",
                  "transitions": [
                    {"from": "0", "to": "1", "action": {"kind": "recv", "peer": "p", "msg": "m1"}},
                    {"from": "1", "to": "2", "action": {"kind": "send", "peer": "p", "msg": "m2"}}
                  ]
                }
              }
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn json_round_trip() {
        let sys = ping_pong();
        let again = System::from_json(&sys.to_json()).unwrap();
        assert_eq!(sys, again);
    }

    #[test]
    fn run_matches_by_triple_order() {
        let sys = ping_pong();
        let acts = vec![
            Action::send("p", "q", MessageId::plain("m1")),
            Action::recv("p", "q", MessageId::plain("m1")),
            Action::send("q", "p", MessageId::plain("m2")),
            Action::recv("q", "p", MessageId::plain("m2")),
        ];
        let exec = run(&sys, &acts).unwrap();
        assert_eq!(exec.matching, BTreeMap::from([(0, 1), (2, 3)]));
        assert!(exec.final_config.buffers.is_empty());
    }

    #[test]
    fn receive_requires_queue_head() {
        let sys = ping_pong();
        let acts = vec![Action::recv("p", "q", MessageId::plain("m1"))];
        let err = run(&sys, &acts).unwrap_err();
        assert!(matches!(
            err,
            RunError::Step {
                index: 0,
                source: StepError::BufferHeadMismatch { .. }
            }
        ));
    }

    #[test]
    fn instrument_adds_monitor_and_siblings() {
        let sys = ping_pong().instrument().unwrap();
        assert!(sys.processes.contains_key(PI));
        let p = &sys.processes["p"];
        assert!(p.transitions.iter().any(|t| t.action
            == Action::send("p", PI, MessageId::routed("q", "m1"))));
        assert!(p
            .transitions
            .iter()
            .any(|t| t.action == Action::recv(PI, "p", MessageId::plain("m2"))));
        // Double instrumentation is rejected.
        assert!(matches!(
            sys.instrument(),
            Err(ModelError::ReservedName { .. })
        ));
    }

    #[test]
    fn deviate_reroutes_final_receive() {
        let sys = ping_pong();
        let acts = vec![
            Action::send("p", "q", MessageId::plain("m1")),
            Action::recv("p", "q", MessageId::plain("m1")),
            Action::send("q", "p", MessageId::plain("m2")),
            Action::recv("q", "p", MessageId::plain("m2")),
        ];
        let exec = run(&sys, &acts).unwrap();
        let dev = deviate(&exec).unwrap();
        let inst = sys.instrument().unwrap();
        let replay = run(&inst, &dev).unwrap();
        assert_eq!(dev.len(), 6);
        assert_eq!(replay.actions[2], Action::send("q", PI, MessageId::routed("p", "m2")));
        assert_eq!(*replay.actions.last().unwrap(), Action::recv(PI, "p", MessageId::plain("m2")));
    }
}
