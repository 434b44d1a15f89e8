//! Shared test support: a corpus of canned charts and systems with known
//! classifications, seeded generators for randomized cross-validation, and
//! brute-force counterparts for every fast decision procedure.
//!
//! Everything here is deterministic for a fixed seed, so a failing case can
//! be reported as a seed plus a JSON reproducer and replayed exactly.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::conflict::{ConflictGraph, EdgeLabel, RuleMask};
use crate::exchange::{
    enumerate_k_exchanges, msc_of_exchanges, step_k, AbstractConfig, CausalBookkeeping,
    GlobalState, KExchange, StepKError,
};
use crate::membership::{bad_by_chain, feas_accept, feas_step, FeasError, FeasState};
use crate::model::{
    deviate, run, step, Action, ActionKind, Buffers, Comm, Configuration, Execution, MessageId,
    ProcessDef, ProcessId, RunError, System, Transition,
};
use crate::msc::{causal_delivery_oracle, k_synchronous_oracle, Msc};
use crate::p2p::{p2p_step, P2pBook, P2pConfig, P2pStepError};

fn chart(text: &str) -> Msc {
    Msc::from_json(text).expect("fixture charts parse")
}

fn machine(text: &str) -> System {
    System::from_json(text).expect("fixture systems parse")
}

/// An undelivered message overtaken by a later one on the same queue. The
/// delivery order is broken no matter how the events interleave.
pub fn same_channel_block() -> Msc {
    chart(include_str!("../fixtures/same_channel_block.json"))
}

/// An undelivered message overtaken through a relay: the blocked queue is
/// reached via a second process, so spotting it needs the derived edges.
pub fn relayed_block() -> Msc {
    chart(include_str!("../fixtures/relayed_block.json"))
}

/// Three messages between three processes whose listings cross; a small
/// exercise for the base edge construction.
pub fn crossing_trio() -> Msc {
    chart(include_str!("../fixtures/crossing_trio.json"))
}

/// Five matched messages forming a cycle that contains a receive-then-send
/// edge, so no block schedule of any width exists.
pub fn rs_ring_chart() -> Msc {
    chart(include_str!("../fixtures/rs_ring.json"))
}

/// The machines that produce [`rs_ring_chart`] when run to completion.
pub fn rs_ring_system() -> System {
    machine(include_str!("../fixtures/rs_ring_system.json"))
}

/// An undelivered message whose sender keeps exchanging afterwards; the
/// chart stays schedulable one message at a time.
pub fn pending_chain_chart() -> Msc {
    chart(include_str!("../fixtures/pending_chain.json"))
}

/// The machines that produce [`pending_chain_chart`].
pub fn pending_chain_system() -> System {
    machine(include_str!("../fixtures/pending_chain_system.json"))
}

/// Five matched messages whose conflicts form one component of size five
/// without any receive-then-send edge inside it.
pub fn wide_component_chart() -> Msc {
    chart(include_str!("../fixtures/wide_component.json"))
}

/// A system where one control state is reachable over per-pair queues but
/// not over per-receiver queues.
pub fn blocked_receiver_system() -> System {
    machine(include_str!("../fixtures/blocked_receiver_system.json"))
}

/// Two handshakes that cross each other; schedulable with two messages per
/// block but not one.
pub fn crossed_handshake_chart() -> Msc {
    chart(include_str!("../fixtures/crossed_handshake.json"))
}

/// [`crossed_handshake_chart`] with one message routed through the monitor,
/// which makes the chart schedulable one message at a time.
pub fn crossed_handshake_detour_chart() -> Msc {
    chart(include_str!("../fixtures/crossed_handshake_detour.json"))
}

/// A detoured chart whose final delivery cannot happen in any real run:
/// the destination receives another message causally after the detour.
pub fn undeliverable_detour_chart() -> Msc {
    chart(include_str!("../fixtures/undeliverable_detour.json"))
}

/// A detoured ring used to pin the reachable and co-reachable vertex sets
/// of the block-wise conflict analysis.
pub fn monitor_ring_chart() -> Msc {
    chart(include_str!("../fixtures/monitor_ring.json"))
}

/// [`monitor_ring_chart`] cut into its six single-message blocks, in order.
pub fn monitor_ring_blocks() -> Vec<KExchange> {
    let m = monitor_ring_chart();
    m.events()
        .chunks(2)
        .map(|pair| {
            let actions: Vec<Action> = pair.iter().map(|e| e.action.clone()).collect();
            KExchange::from_actions(&actions).expect("fixture blocks are send/receive pairs")
        })
        .collect()
}

/// A detour that a message on the same queue slips past; infeasible.
pub fn overtaken_detour_chart() -> Msc {
    chart(include_str!("../fixtures/overtaken_detour.json"))
}

/// A feasible detour whose surrounding traffic is wide but free of
/// receive-then-send conflicts; harmless at width three.
pub fn benign_detour_chart() -> Msc {
    chart(include_str!("../fixtures/benign_detour.json"))
}

/// A feasible detour with a receive-then-send conflict on the path between
/// the two halves of the detour; bad at every width.
pub fn orphan_rs_detour_chart() -> Msc {
    chart(include_str!("../fixtures/orphan_rs_detour.json"))
}

/// A cyclic listing with no linearization at all.
pub fn deadlock_ring_chart() -> Msc {
    chart(include_str!("../fixtures/deadlock_ring.json"))
}

/// An acyclic listing none of whose linearizations respects queue order.
pub fn no_fifo_schedule_chart() -> Msc {
    chart(include_str!("../fixtures/no_fifo_schedule.json"))
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn pname(i: usize) -> String {
    format!("p{i}")
}

fn sname(i: usize) -> String {
    format!("s{i}")
}

/// A random chart, stable for a fixed seed. Message endpoints, payloads and
/// the matched/unmatched split are drawn independently, then all events are
/// shuffled freely, so listings with no linearization do occur on purpose.
pub fn gen_msc(seed: u64, max_msgs: usize, max_procs: usize) -> Msc {
    let mut rng = rng_for(seed);
    let n_procs = rng.gen_range(2..=max_procs.max(2));
    let n_msgs = rng.gen_range(1..=max_msgs.max(1));

    struct Spec {
        sender: String,
        receiver: String,
        msg: String,
        matched: bool,
    }
    let mut specs = Vec::new();
    let mut tokens: Vec<(usize, ActionKind)> = Vec::new();
    for i in 0..n_msgs {
        let spec = Spec {
            sender: pname(rng.gen_range(0..n_procs)),
            receiver: pname(rng.gen_range(0..n_procs)),
            msg: format!("m{}", rng.gen_range(0..3)),
            matched: rng.gen_bool(0.7),
        };
        tokens.push((i, ActionKind::Send));
        if spec.matched {
            tokens.push((i, ActionKind::Recv));
        }
        specs.push(spec);
    }
    tokens.shuffle(&mut rng);

    let mut send_pos = BTreeMap::new();
    let mut recv_pos = BTreeMap::new();
    for (pos, &(i, kind)) in tokens.iter().enumerate() {
        match kind {
            ActionKind::Send => send_pos.insert(i, pos),
            ActionKind::Recv => recv_pos.insert(i, pos),
        };
    }
    let events = tokens
        .iter()
        .map(|&(i, kind)| {
            let s = &specs[i];
            let msg = MessageId::plain(&s.msg);
            match kind {
                ActionKind::Send => (
                    Action::send(&s.sender, &s.receiver, msg),
                    recv_pos.get(&i).copied(),
                ),
                ActionKind::Recv => (
                    Action::recv(&s.sender, &s.receiver, msg),
                    Some(send_pos[&i]),
                ),
            }
        })
        .collect();
    Msc::from_events(events).expect("generated pairings are mutual")
}

/// Rejection-samples [`gen_msc`] until the delivery-order oracle accepts.
pub fn gen_causal_msc(seed: u64, max_msgs: usize, max_procs: usize, comm: Comm) -> Msc {
    let mut rng = rng_for(seed ^ 0xc5a1_ab1e_0000_0001);
    for _ in 0..10_000 {
        let m = gen_msc(rng.gen(), max_msgs, max_procs);
        if causal_delivery_oracle(&m, comm) {
            return m;
        }
    }
    unreachable!("one-message charts always satisfy delivery order");
}

/// A random deterministic system, stable for a fixed seed. Processes are
/// `p0..`, states `s0..` with `s0` initial. Duplicate `(state, action)`
/// transitions are dropped so block replay never becomes ambiguous.
pub fn gen_system(seed: u64, max_procs: usize, max_states: usize) -> System {
    let mut rng = rng_for(seed);
    let n_procs = rng.gen_range(2..=max_procs.max(2));
    let mut processes = BTreeMap::new();
    for i in 0..n_procs {
        let n_states = rng.gen_range(1..=max_states.max(1));
        let n_draws = rng.gen_range(1..=2 * n_states);
        let mut transitions: Vec<Transition> = Vec::new();
        for _ in 0..n_draws {
            let from = sname(rng.gen_range(0..n_states));
            let to = sname(rng.gen_range(0..n_states));
            let peer = pname(rng.gen_range(0..n_procs));
            let msg = MessageId::plain(&format!("m{}", rng.gen_range(0..2)));
            let action = if rng.gen_bool(0.5) {
                Action::send(&pname(i), &peer, msg)
            } else {
                Action::recv(&peer, &pname(i), msg)
            };
            if transitions
                .iter()
                .any(|t| t.from == from && t.action == action)
            {
                continue;
            }
            transitions.push(Transition { from, to, action });
        }
        processes.insert(
            pname(i),
            ProcessDef {
                initial: sname(0),
                transitions,
            },
        );
    }
    System {
        comm: Comm::Mailbox,
        processes,
    }
}

/// Like [`gen_system`] but each process only sends to its clockwise
/// neighbour and only receives from its counter-clockwise one, so every
/// receiver has a single sender and the two queue disciplines coincide.
pub fn gen_ring_system(seed: u64, max_procs: usize, max_states: usize) -> System {
    let mut rng = rng_for(seed);
    let n_procs = rng.gen_range(2..=max_procs.max(2));
    let mut processes = BTreeMap::new();
    for i in 0..n_procs {
        let next = pname((i + 1) % n_procs);
        let prev = pname((i + n_procs - 1) % n_procs);
        let n_states = rng.gen_range(1..=max_states.max(1));
        let n_draws = rng.gen_range(1..=2 * n_states);
        let mut transitions: Vec<Transition> = Vec::new();
        for _ in 0..n_draws {
            let from = sname(rng.gen_range(0..n_states));
            let to = sname(rng.gen_range(0..n_states));
            let msg = MessageId::plain(&format!("m{}", rng.gen_range(0..2)));
            let action = if rng.gen_bool(0.5) {
                Action::send(&pname(i), &next, msg)
            } else {
                Action::recv(&prev, &pname(i), msg)
            };
            if transitions
                .iter()
                .any(|t| t.from == from && t.action == action)
            {
                continue;
            }
            transitions.push(Transition { from, to, action });
        }
        processes.insert(
            pname(i),
            ProcessDef {
                initial: sname(0),
                transitions,
            },
        );
    }
    System {
        comm: Comm::Mailbox,
        processes,
    }
}

/// The same machines under the other queue discipline.
pub fn with_comm(sys: &System, comm: Comm) -> System {
    System {
        comm,
        processes: sys.processes.clone(),
    }
}

/// Every action enabled in `cfg` together with its successor. A receive that
/// would pop a message sent by someone other than the named peer is kept
/// here; [`run`] rejects it later, which is what the validity filters check.
fn concrete_moves(sys: &System, cfg: &Configuration) -> Vec<(Action, Configuration)> {
    let mut out = Vec::new();
    for (p, state) in &cfg.global {
        for t in sys.enabled_from(p, state) {
            if let Ok(next) = step(sys, cfg, &t.action) {
                out.push((t.action.clone(), next));
            }
        }
    }
    out
}

/// A random run of at most `max_len` actions, stable for a fixed seed. Each
/// step picks uniformly among the enabled actions that keep the prefix a
/// valid run, so the sender named by every receive really is the sender of
/// the popped message.
pub fn random_execution(seed: u64, sys: &System, max_len: usize) -> Execution {
    let mut rng = rng_for(seed);
    let mut cfg = sys.initial_config();
    let mut actions: Vec<Action> = Vec::new();
    for _ in 0..max_len {
        let mut moves = concrete_moves(sys, &cfg);
        moves.shuffle(&mut rng);
        let mut advanced = false;
        for (a, next) in moves {
            actions.push(a);
            if run(sys, &actions).is_ok() {
                cfg = next;
                advanced = true;
                break;
            }
            actions.pop();
        }
        if !advanced {
            break;
        }
    }
    run(sys, &actions).expect("each extension was checked")
}

/// Whether a block replays from empty queues: pushing all its sends and then
/// popping in its receive order must always find the right message at the
/// head of the queue the pairing says it comes from.
pub fn block_replays(ex: &KExchange, comm: Comm) -> bool {
    let key = |a: &Action| match comm {
        Comm::Mailbox => vec![a.receiver.clone()],
        Comm::P2p => vec![a.sender.clone(), a.receiver.clone()],
    };
    let mut queues: BTreeMap<Vec<ProcessId>, VecDeque<usize>> = BTreeMap::new();
    for (si, a) in ex.sends.iter().enumerate() {
        queues.entry(key(a)).or_default().push_back(si);
    }
    for (ri, a) in ex.recvs.iter().enumerate() {
        let Some(expect_send) = ex.send_of_recv(ri) else {
            return false;
        };
        match queues.entry(key(a)).or_default().pop_front() {
            Some(si) if si == expect_send => {}
            _ => return false,
        }
    }
    true
}

/// One way to split a chart into at most `max_blocks` blocks of at most `k`
/// messages each, such that matched pairs stay inside one block, each block
/// takes exactly the next events of every process it touches with sends
/// ahead of receives, and each block replays from empty queues. Returns the
/// blocks in schedule order, or `None` when no such split exists.
pub fn decompose_into_blocks(
    msc: &Msc,
    k: usize,
    max_blocks: usize,
    comm: Comm,
) -> Option<Vec<KExchange>> {
    let procs = msc.procs();
    let listing: Vec<Vec<usize>> = procs.iter().map(|p| msc.proc_events(p)).collect();
    let proc_idx: BTreeMap<&ProcessId, usize> =
        procs.iter().enumerate().map(|(i, p)| (p, i)).collect();
    // Per message: send event, optional receive event, touched positions.
    struct Message {
        send: usize,
        recv: Option<usize>,
    }
    let messages: Vec<Message> = msc
        .events()
        .iter()
        .enumerate()
        .filter(|(_, e)| e.action.is_send())
        .map(|(i, e)| Message {
            send: i,
            recv: e.partner,
        })
        .collect();
    let msg_of_send: BTreeMap<usize, usize> = messages
        .iter()
        .enumerate()
        .map(|(m, msg)| (msg.send, m))
        .collect();
    // Position of each event inside its process listing.
    let mut pos_in_proc = vec![0usize; msc.len()];
    for row in &listing {
        for (pos, &ev) in row.iter().enumerate() {
            pos_in_proc[ev] = pos;
        }
    }
    let owner = |ev: usize| proc_idx[&msc.events()[ev].action.actor().clone()];

    fn try_block(
        msc: &Msc,
        messages: &[Message],
        chosen: &[usize],
        progress: &[usize],
        pos_in_proc: &[usize],
        owner: &dyn Fn(usize) -> usize,
        n_procs: usize,
        comm: Comm,
    ) -> Option<(KExchange, Vec<usize>)> {
        // Gather the window per process and check contiguity from the cursor
        // with sends ahead of receives.
        let mut windows: Vec<Vec<(usize, bool)>> = vec![Vec::new(); n_procs];
        for &m in chosen {
            let msg = &messages[m];
            windows[owner(msg.send)].push((pos_in_proc[msg.send], true));
            if let Some(r) = msg.recv {
                windows[owner(r)].push((pos_in_proc[r], false));
            }
        }
        let mut next = progress.to_vec();
        for (pi, w) in windows.iter_mut().enumerate() {
            if w.is_empty() {
                continue;
            }
            w.sort_unstable();
            if w[0].0 != progress[pi] || w[w.len() - 1].0 != progress[pi] + w.len() - 1 {
                return None;
            }
            let first_recv = w.iter().position(|&(_, is_send)| !is_send);
            if let Some(fr) = first_recv {
                if w[fr..].iter().any(|&(_, is_send)| is_send) {
                    return None;
                }
            }
            next[pi] = progress[pi] + w.len();
        }
        // Receives keep listing order, which is each receiver's program
        // order, so per queue they fix the order the sends must arrive in.
        let mut recv_events: Vec<usize> =
            chosen.iter().filter_map(|&m| messages[m].recv).collect();
        recv_events.sort_unstable();
        // Schedule the sends: each sender emits in program order, each queue
        // wants its matched messages pushed in pop order and its undelivered
        // ones pushed after all of them. Scheduling fails exactly when a
        // sender's program contradicts a queue, which on a chart with a
        // valid delivery order never happens.
        let queue_key = |ev: usize| -> Vec<ProcessId> {
            let a = &msc.events()[ev].action;
            match comm {
                Comm::Mailbox => vec![a.receiver.clone()],
                Comm::P2p => vec![a.sender.clone(), a.receiver.clone()],
            }
        };
        let mut pending: BTreeMap<ProcessId, VecDeque<usize>> = BTreeMap::new();
        for &m in chosen {
            let s = messages[m].send;
            pending
                .entry(msc.events()[s].action.sender.clone())
                .or_default()
                .push_back(s);
        }
        for q in pending.values_mut() {
            q.make_contiguous().sort_unstable();
        }
        let mut pop_order: BTreeMap<Vec<ProcessId>, VecDeque<usize>> = BTreeMap::new();
        let mut matched_left: BTreeMap<Vec<ProcessId>, usize> = BTreeMap::new();
        for &rev in &recv_events {
            let sev = msc.events()[rev].partner.expect("receives are matched");
            let key = queue_key(sev);
            pop_order.entry(key.clone()).or_default().push_back(sev);
            *matched_left.entry(key).or_default() += 1;
        }
        let mut send_order: Vec<usize> = Vec::new();
        loop {
            let mut emitted = false;
            for queue in pending.values_mut() {
                let Some(&s) = queue.front() else { continue };
                let key = queue_key(s);
                let ready = if msc.events()[s].partner.is_some() {
                    pop_order.get(&key).and_then(VecDeque::front) == Some(&s)
                } else {
                    matched_left.get(&key).copied().unwrap_or(0) == 0
                };
                if ready {
                    queue.pop_front();
                    if msc.events()[s].partner.is_some() {
                        pop_order.get_mut(&key).expect("send was queued").pop_front();
                        *matched_left.get_mut(&key).expect("send was counted") -= 1;
                    }
                    send_order.push(s);
                    emitted = true;
                }
            }
            if !emitted {
                break;
            }
        }
        if send_order.len() != chosen.len() {
            return None;
        }
        let actions: Vec<Action> = send_order
            .iter()
            .chain(recv_events.iter())
            .map(|&ev| msc.events()[ev].action.clone())
            .collect();
        let ex = KExchange::from_actions(&actions).ok()?;
        // The block pairing must agree with the chart pairing.
        for (ri, &rev) in recv_events.iter().enumerate() {
            let sev = msc.events()[rev].partner.expect("receives are matched");
            let si = send_order.iter().position(|&s| s == sev).expect("send is in the block");
            if ex.send_of_recv(ri) != Some(si) {
                return None;
            }
        }
        if !block_replays(&ex, comm) {
            return None;
        }
        Some((ex, next))
    }

    fn explore(
        msc: &Msc,
        messages: &[Message],
        msg_of_send: &BTreeMap<usize, usize>,
        listing: &[Vec<usize>],
        progress: Vec<usize>,
        blocks_left: usize,
        k: usize,
        comm: Comm,
        pos_in_proc: &[usize],
        owner: &dyn Fn(usize) -> usize,
        failed: &mut BTreeSet<(Vec<usize>, usize)>,
    ) -> Option<Vec<KExchange>> {
        if listing
            .iter()
            .zip(progress.iter())
            .all(|(row, &cur)| cur == row.len())
        {
            return Some(Vec::new());
        }
        if blocks_left == 0 || failed.contains(&(progress.clone(), blocks_left)) {
            return None;
        }
        // Messages whose events all still lie beyond the cursors.
        let available: Vec<usize> = messages
            .iter()
            .enumerate()
            .filter(|(_, m)| {
                let send_ok = pos_in_proc[m.send] >= progress[owner(m.send)];
                let recv_ok = m
                    .recv
                    .map_or(true, |r| pos_in_proc[r] >= progress[owner(r)]);
                send_ok && recv_ok
            })
            .map(|(i, _)| i)
            .collect();
        let n = available.len();
        for mask in 1u32..(1 << n) {
            if (mask.count_ones() as usize) > k {
                continue;
            }
            let chosen: Vec<usize> = (0..n)
                .filter(|&b| mask & (1 << b) != 0)
                .map(|b| available[b])
                .collect();
            let Some((ex, next)) = try_block(
                msc,
                messages,
                &chosen,
                &progress,
                pos_in_proc,
                owner,
                listing.len(),
                comm,
            ) else {
                continue;
            };
            if let Some(mut rest) = explore(
                msc,
                messages,
                msg_of_send,
                listing,
                next,
                blocks_left - 1,
                k,
                comm,
                pos_in_proc,
                owner,
                failed,
            ) {
                rest.insert(0, ex);
                return Some(rest);
            }
        }
        failed.insert((progress, blocks_left));
        None
    }

    if msc.len() == 0 {
        return Some(Vec::new());
    }
    let mut failed = BTreeSet::new();
    explore(
        msc,
        &messages,
        &msg_of_send,
        &listing,
        vec![0; procs.len()],
        max_blocks,
        k,
        comm,
        &pos_in_proc,
        &|ev| owner(ev),
        &mut failed,
    )
}

/// Control states after running one block from `global` with empty queues.
pub fn block_successor_global(sys: &System, global: &GlobalState, ex: &KExchange) -> GlobalState {
    let mut cfg = Configuration {
        global: global.clone(),
        buffers: Buffers::empty(sys.comm),
    };
    for a in ex.actions() {
        cfg = step(sys, &cfg, &a).expect("block replays from its source states");
    }
    cfg.global
}

/// Global states reachable through complete blocks of width at most `k`,
/// within a total budget of `max_actions` block actions.
pub fn reachable_globals_abstract(
    sys: &System,
    k: usize,
    max_actions: usize,
) -> BTreeSet<GlobalState> {
    let init = AbstractConfig {
        global: sys.initial_global(),
        book: CausalBookkeeping::empty(&sys.proc_ids()),
    };
    let mut out = BTreeSet::from([init.global.clone()]);
    let mut seen = BTreeSet::from([(init.clone(), 0usize)]);
    let mut queue = VecDeque::from([(init, 0usize)]);
    while let Some((cfg, used)) = queue.pop_front() {
        let options = enumerate_k_exchanges(sys, &cfg.global, k, 100_000)
            .expect("small systems stay under the enumeration cap");
        for (ex, _) in options {
            let cost = ex.sends.len() + ex.recvs.len();
            if used + cost > max_actions {
                continue;
            }
            match step_k(sys, &cfg, &ex, k) {
                Ok(next) => {
                    out.insert(next.global.clone());
                    if seen.insert((next.clone(), used + cost)) {
                        queue.push_back((next, used + cost));
                    }
                }
                Err(StepKError::CausalDeliveryViolation(_)) => {}
                Err(e) => panic!("enumerated blocks replay deterministically: {e}"),
            }
        }
    }
    out
}

/// Global states reachable by brute force: every valid run of at most
/// `max_len` actions whose chart the block-schedulability oracle accepts at
/// `k`, with queues capped at `buf_cap` messages to bound the search.
pub fn reachable_globals_oracle(
    sys: &System,
    k: usize,
    max_len: usize,
    buf_cap: usize,
) -> BTreeSet<GlobalState> {
    type Key = BTreeMap<ProcessId, Vec<(Action, Option<(ProcessId, usize)>)>>;
    let mut out = BTreeSet::new();
    let mut verdicts: BTreeMap<Key, bool> = BTreeMap::new();
    let mut visited: BTreeSet<(Configuration, Key)> = BTreeSet::new();

    let buffered = |cfg: &Configuration| match &cfg.buffers {
        Buffers::Mailbox(m) => m.values().map(VecDeque::len).max().unwrap_or(0),
        Buffers::P2p(m) => m.values().map(VecDeque::len).max().unwrap_or(0),
    };

    struct Ctx<'a> {
        sys: &'a System,
        k: usize,
        buf_cap: usize,
    }
    fn go(
        ctx: &Ctx,
        cfg: &Configuration,
        actions: &mut Vec<Action>,
        remaining: usize,
        out: &mut BTreeSet<GlobalState>,
        verdicts: &mut BTreeMap<
            BTreeMap<ProcessId, Vec<(Action, Option<(ProcessId, usize)>)>>,
            bool,
        >,
        visited: &mut BTreeSet<(
            Configuration,
            BTreeMap<ProcessId, Vec<(Action, Option<(ProcessId, usize)>)>>,
        )>,
        buffered: &dyn Fn(&Configuration) -> usize,
    ) {
        let exec = run(ctx.sys, actions).expect("only valid extensions recurse");
        let m = Msc::of_execution(&exec);
        let key = m.canonical_key();
        if !visited.insert((cfg.clone(), key.clone())) {
            return;
        }
        let ok = *verdicts
            .entry(key)
            .or_insert_with(|| k_synchronous_oracle(&m, ctx.k, ctx.sys.comm));
        if ok {
            out.insert(cfg.global.clone());
        }
        if remaining == 0 {
            return;
        }
        for (a, next) in concrete_moves(ctx.sys, cfg) {
            if buffered(&next) > ctx.buf_cap {
                continue;
            }
            actions.push(a);
            if run(ctx.sys, actions).is_ok() {
                go(ctx, &next, actions, remaining - 1, out, verdicts, visited, buffered);
            }
            actions.pop();
        }
    }

    let ctx = Ctx { sys, k, buf_cap };
    let mut actions = Vec::new();
    go(
        &ctx,
        &sys.initial_config(),
        &mut actions,
        max_len,
        &mut out,
        &mut verdicts,
        &mut visited,
        &buffered,
    );
    out
}

/// Whether every valid run of at most `max_len` actions has a chart the
/// block-schedulability oracle accepts at `k`.
pub fn all_runs_synchronous(sys: &System, k: usize, max_len: usize) -> bool {
    type Key = BTreeMap<ProcessId, Vec<(Action, Option<(ProcessId, usize)>)>>;
    let mut verdicts: BTreeMap<Key, bool> = BTreeMap::new();
    let mut visited: BTreeSet<(Configuration, Key)> = BTreeSet::new();
    let mut stack = vec![(sys.initial_config(), Vec::<Action>::new())];
    while let Some((cfg, actions)) = stack.pop() {
        let exec = run(sys, &actions).expect("only valid extensions are pushed");
        let m = Msc::of_execution(&exec);
        let key = m.canonical_key();
        if !visited.insert((cfg.clone(), key.clone())) {
            continue;
        }
        let ok = *verdicts
            .entry(key)
            .or_insert_with(|| k_synchronous_oracle(&m, k, sys.comm));
        if !ok {
            return false;
        }
        if actions.len() == max_len {
            continue;
        }
        for (a, next) in concrete_moves(sys, &cfg) {
            let mut longer = actions.clone();
            longer.push(a);
            if run(sys, &longer).is_ok() {
                stack.push((next, longer));
            }
        }
    }
    true
}

/// Keeps the events `keep` accepts, remapping partner indices. Returns
/// `None` when a kept event points at a dropped partner.
fn filter_events(msc: &Msc, keep: &dyn Fn(usize) -> bool) -> Option<Msc> {
    let kept: Vec<usize> = (0..msc.len()).filter(|&i| keep(i)).collect();
    let new_idx: BTreeMap<usize, usize> = kept.iter().enumerate().map(|(n, &o)| (o, n)).collect();
    let events = kept
        .iter()
        .map(|&o| {
            let ev = &msc.events()[o];
            let partner = match ev.partner {
                None => Some(None),
                Some(p) => new_idx.get(&p).map(|&n| Some(n)),
            };
            partner.map(|p| (ev.action.clone(), p))
        })
        .collect::<Option<Vec<_>>>()?;
    Msc::from_events(events).ok()
}

/// The chart with one message removed: the send at `send_event` and its
/// matching receive, if any.
pub fn drop_message(msc: &Msc, send_event: usize) -> Option<Msc> {
    let ev = msc.events().get(send_event)?;
    if !ev.action.is_send() {
        return None;
    }
    let partner = ev.partner;
    filter_events(msc, &|i| i != send_event && Some(i) != partner)
}

/// Greedy minimization: repeatedly removes any single message as long as
/// `fails` keeps returning true, and returns the local minimum.
pub fn shrink_chart(msc: &Msc, fails: &dyn Fn(&Msc) -> bool) -> Msc {
    let mut cur = msc.clone();
    loop {
        let sends: Vec<usize> = cur
            .events()
            .iter()
            .enumerate()
            .filter(|(_, e)| e.action.is_send())
            .map(|(i, _)| i)
            .collect();
        let step = sends
            .into_iter()
            .filter_map(|s| drop_message(&cur, s))
            .find(|smaller| fails(smaller));
        match step {
            Some(smaller) => cur = smaller,
            None => return cur,
        }
    }
}

/// A deviated run of an instrumented system: the machines, the block split
/// of everything before the final direct delivery, that delivery as its own
/// block, and the full chart.
#[derive(Debug, Clone)]
pub struct DeviatedRun {
    pub system: System,
    pub instrumented: System,
    pub k: usize,
    pub blocks: Vec<KExchange>,
    pub forward: KExchange,
    pub chart: Msc,
}

/// Builds a random deviated run: take a random run ending in a receive,
/// reroute that one message through the monitor, replay on the instrumented
/// system and split the result into blocks. Returns `None` when the seed
/// yields no run that replays and splits within the attempt budget.
pub fn gen_deviated_run(seed: u64) -> Option<DeviatedRun> {
    let mut rng = rng_for(seed ^ 0xdee7_0000_0000_0001);
    for _ in 0..64 {
        let k = rng.gen_range(1..=3);
        let sys = gen_system(rng.gen(), 3, 3);
        let walk = random_execution(rng.gen(), &sys, 2 * k + 2);
        let recv_positions: Vec<usize> = walk
            .actions
            .iter()
            .enumerate()
            .filter(|(_, a)| !a.is_send())
            .map(|(i, _)| i)
            .collect();
        let Some(&t) = recv_positions.choose(&mut rng) else {
            continue;
        };
        let prefix: Vec<Action> = walk.actions[..=t].to_vec();
        let exec = run(&sys, &prefix).expect("prefixes of valid runs replay");
        let deviated = deviate(&exec).expect("the run ends in a matched plain receive");
        let instr = sys.instrument().expect("generated names avoid the reserved ones");
        let dexec = match run(&instr, &deviated) {
            Ok(d) => d,
            // An undelivered message already sitting in the destination queue
            // blocks the direct delivery, so this rerouting is not a run.
            Err(RunError::Step { .. }) => continue,
            Err(e) => panic!("rerouting preserves the pairing: {e}"),
        };
        let chart = Msc::of_execution(&dexec);
        // The queue head check matches payloads only, so a pop can consume an
        // identical message from another sender and let a sequence through
        // whose pairing breaks delivery order. No analysis here is defined on
        // such charts; draw again.
        if !causal_delivery_oracle(&chart, Comm::Mailbox) {
            continue;
        }
        let n = chart.len();
        let body = filter_events(&chart, &|i| i < n - 2)
            .expect("the final delivery pair only points at itself");
        let Some(blocks) = decompose_into_blocks(&body, k, 3, Comm::Mailbox) else {
            continue;
        };
        let forward = KExchange::from_actions(&deviated[deviated.len() - 2..])
            .expect("the final delivery is a one-message block");
        return Some(DeviatedRun {
            system: sys,
            instrumented: instr,
            k,
            blocks,
            forward,
            chart,
        });
    }
    None
}

/// Replays the blocks before the final delivery through the detour
/// bookkeeping, then applies the acceptance predicate.
pub fn feas_verdict(dr: &DeviatedRun) -> bool {
    let mut fs = FeasState::initial(&dr.instrumented);
    for ex in &dr.blocks {
        let succ = block_successor_global(&dr.instrumented, &fs.base.global, ex);
        match feas_step(&fs, ex, succ) {
            Ok(next) => fs = next,
            Err(FeasError::FeasibilityViolation) => return false,
            Err(e) => panic!("generated runs stay causal with one detour: {e}"),
        }
    }
    feas_accept(&fs)
}

/// Runs the incremental badness check over all blocks including the final
/// delivery.
pub fn bad_verdict(dr: &DeviatedRun) -> bool {
    let mut all = dr.blocks.clone();
    all.push(dr.forward.clone());
    bad_by_chain(&all, &dr.instrumented.proc_ids(), dr.k)
}

/// A random executable block sequence of the system, at most `max_blocks`
/// blocks of width at most `k`, ignoring delivery-order bookkeeping.
pub fn random_chain(seed: u64, sys: &System, k: usize, max_blocks: usize) -> Vec<KExchange> {
    let mut rng = rng_for(seed);
    let mut global = sys.initial_global();
    let mut out = Vec::new();
    let len = rng.gen_range(1..=max_blocks.max(1));
    for _ in 0..len {
        let options = enumerate_k_exchanges(sys, &global, k, 100_000)
            .expect("small systems stay under the enumeration cap");
        if options.is_empty() {
            break;
        }
        let (ex, succ) = &options[rng.gen_range(0..options.len())];
        out.push(ex.clone());
        global = succ.clone();
    }
    out
}

/// Folds the per-pair-queue block step over a chain; true when every block
/// passes the forbidden-channel bookkeeping.
pub fn p2p_chain_accepted(sys: &System, blocks: &[KExchange], k: usize) -> bool {
    let mut cfg = P2pConfig {
        global: sys.initial_global(),
        book: P2pBook::empty(),
    };
    for ex in blocks {
        match p2p_step(sys, &cfg, ex, k) {
            Ok(next) => cfg = next,
            Err(P2pStepError::P2pCausalDeliveryViolation { .. }) => return false,
            Err(e) => panic!("chains are built from executable blocks: {e}"),
        }
    }
    true
}

/// How many random cases each cross-validation loop runs. All counts default
/// to zero so an empty config passes vacuously; the canned fixture checks
/// always run.
#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Block schedulability: component analysis against the oracle.
    pub sync_charts: usize,
    /// Delivery order: derived self-loops against the oracle.
    pub causal_charts: usize,
    pub max_msgs: usize,
    pub max_procs: usize,
    pub ks: Vec<usize>,
    /// Block-wise reachable states against brute-force runs.
    pub reach_systems: usize,
    pub reach_ks: Vec<usize>,
    /// Detour acceptance against the derived-edge characterization.
    pub feas_runs: usize,
    /// Incremental badness against the zone characterization.
    pub bad_runs: usize,
    /// Per-pair-queue block steps against the delivery oracle.
    pub p2p_chains: usize,
    /// Closure rules used on the graph side of the delivery comparisons.
    /// Cross-checking a deliberately crippled mask must fail.
    pub graph_rules: RuleMask,
}

impl Default for SuiteConfig {
    fn default() -> SuiteConfig {
        SuiteConfig {
            seed: 0,
            sync_charts: 0,
            causal_charts: 0,
            max_msgs: 6,
            max_procs: 4,
            ks: vec![1, 2, 3],
            reach_systems: 0,
            reach_ks: vec![1, 2],
            feas_runs: 0,
            bad_runs: 0,
            p2p_chains: 0,
            graph_rules: RuleMask::all(),
        }
    }
}

impl SuiteConfig {
    /// The full scale used by the heavyweight validation run.
    pub fn full() -> SuiteConfig {
        SuiteConfig {
            sync_charts: 1000,
            causal_charts: 1000,
            reach_systems: 30,
            feas_runs: 500,
            bad_runs: 500,
            p2p_chains: 500,
            ..SuiteConfig::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteFailure {
    pub property: String,
    pub seed: u64,
    pub detail: String,
    /// JSON of a minimized chart or of the offending system.
    pub reproducer: String,
}

#[derive(Debug, Clone, Default)]
pub struct SuiteReport {
    pub cases: usize,
    pub failures: Vec<SuiteFailure>,
}

impl SuiteReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }

    fn check(&mut self, property: &str, seed: u64, pass: bool, detail: &str, reproducer: &str) {
        self.cases += 1;
        if !pass {
            self.failures.push(SuiteFailure {
                property: property.to_owned(),
                seed,
                detail: detail.to_owned(),
                reproducer: reproducer.to_owned(),
            });
        }
    }
}

/// The graph route for delivery analysis with a chosen rule set.
pub fn causal_by_graph_with(msc: &Msc, rules: RuleMask) -> bool {
    let mut g = ConflictGraph::build(msc);
    g.extend_with(rules);
    !(0..g.verts.len()).any(|v| g.ext.contains(&(v, EdgeLabel::SS, v)))
}

/// The graph route for the width bound, `None` when delivery already fails.
pub fn sync_by_graph_with(msc: &Msc, k: usize, rules: RuleMask) -> Option<bool> {
    if !causal_by_graph_with(msc, rules) {
        return None;
    }
    let report = ConflictGraph::build(msc).scc_report();
    Some(report.max_size <= k && !report.rs_on_cycle)
}

fn fixture_checks(report: &mut SuiteReport, rules: RuleMask) {
    let causal_cases: Vec<(&str, Msc, bool)> = vec![
        ("same_channel_block", same_channel_block(), false),
        ("relayed_block", relayed_block(), false),
        ("deadlock_ring", deadlock_ring_chart(), false),
        ("no_fifo_schedule", no_fifo_schedule_chart(), false),
        ("rs_ring", rs_ring_chart(), true),
        ("pending_chain", pending_chain_chart(), true),
        ("wide_component", wide_component_chart(), true),
        ("crossed_handshake", crossed_handshake_chart(), true),
    ];
    for (name, m, want) in &causal_cases {
        report.check(
            "fixture-delivery-oracle",
            0,
            causal_delivery_oracle(m, Comm::Mailbox) == *want,
            name,
            &m.to_json(),
        );
        report.check(
            "fixture-delivery-graph",
            0,
            causal_by_graph_with(m, rules) == *want,
            name,
            &m.to_json(),
        );
    }
    let sync_cases: Vec<(&str, Msc, usize, bool)> = vec![
        ("rs_ring@5", rs_ring_chart(), 5, false),
        ("pending_chain@1", pending_chain_chart(), 1, true),
        ("wide_component@4", wide_component_chart(), 4, false),
        ("wide_component@5", wide_component_chart(), 5, true),
        ("crossed_handshake@1", crossed_handshake_chart(), 1, false),
        ("crossed_handshake@2", crossed_handshake_chart(), 2, true),
    ];
    for (name, m, k, want) in &sync_cases {
        report.check(
            "fixture-schedule-oracle",
            0,
            k_synchronous_oracle(m, *k, Comm::Mailbox) == *want,
            name,
            &m.to_json(),
        );
        report.check(
            "fixture-schedule-graph",
            0,
            sync_by_graph_with(m, *k, rules) == Some(*want),
            name,
            &m.to_json(),
        );
    }
    let feas_cases: Vec<(&str, Msc, bool)> = vec![
        ("crossed_handshake_detour", crossed_handshake_detour_chart(), true),
        ("undeliverable_detour", undeliverable_detour_chart(), false),
        ("overtaken_detour", overtaken_detour_chart(), false),
        ("benign_detour", benign_detour_chart(), true),
        ("orphan_rs_detour", orphan_rs_detour_chart(), true),
    ];
    for (name, m, want) in &feas_cases {
        let got = crate::conflict::feasibility_by_graph(m);
        report.check(
            "fixture-detour-feasible",
            0,
            got == Ok(*want),
            name,
            &m.to_json(),
        );
    }
    let bad_cases: Vec<(&str, Msc, usize, bool)> = vec![
        ("benign_detour@3", benign_detour_chart(), 3, false),
        ("benign_detour@2", benign_detour_chart(), 2, true),
        ("orphan_rs_detour@1", orphan_rs_detour_chart(), 1, true),
        ("monitor_ring@1", monitor_ring_chart(), 1, true),
    ];
    for (name, m, k, want) in &bad_cases {
        let got = crate::conflict::badness_by_graph(m, *k);
        report.check(
            "fixture-detour-bad",
            0,
            got == Ok(*want),
            name,
            &m.to_json(),
        );
    }
}

/// Cross-validates every fast decision procedure against its brute-force
/// counterpart: canned fixtures always, then as many random cases per loop
/// as the config asks for. Failing random charts are minimized before being
/// reported.
pub fn oracle_suite(cfg: &SuiteConfig) -> SuiteReport {
    let mut report = SuiteReport::default();
    fixture_checks(&mut report, cfg.graph_rules);

    let mut causal_rng = rng_for(cfg.seed ^ 0x0001);
    for _ in 0..cfg.causal_charts {
        let case_seed: u64 = causal_rng.gen();
        let m = gen_msc(case_seed, cfg.max_msgs, cfg.max_procs);
        let rules = cfg.graph_rules;
        let agree =
            |m: &Msc| causal_delivery_oracle(m, Comm::Mailbox) == causal_by_graph_with(m, rules);
        let pass = agree(&m);
        let repro = if pass {
            String::new()
        } else {
            shrink_chart(&m, &|s| !agree(s)).to_json()
        };
        report.check("delivery-graph-vs-oracle", case_seed, pass, "", &repro);
    }

    let mut sync_rng = rng_for(cfg.seed ^ 0x0002);
    for _ in 0..cfg.sync_charts {
        let case_seed: u64 = sync_rng.gen();
        let m = gen_causal_msc(case_seed, cfg.max_msgs, cfg.max_procs, Comm::Mailbox);
        for &k in &cfg.ks {
            let rules = cfg.graph_rules;
            let agree = |m: &Msc| {
                sync_by_graph_with(m, k, rules)
                    .map(|g| g == k_synchronous_oracle(m, k, Comm::Mailbox))
                    .unwrap_or(true)
            };
            let pass = agree(&m);
            let repro = if pass {
                String::new()
            } else {
                shrink_chart(&m, &|s| !agree(s)).to_json()
            };
            report.check(
                "schedule-graph-vs-oracle",
                case_seed,
                pass,
                &format!("k={k}"),
                &repro,
            );
        }
    }

    let mut reach_rng = rng_for(cfg.seed ^ 0x0003);
    for _ in 0..cfg.reach_systems {
        let case_seed: u64 = reach_rng.gen();
        let sys = gen_system(case_seed, 3, 4);
        for &k in &cfg.reach_ks {
            let fast = reachable_globals_abstract(&sys, k, 8);
            let slow = reachable_globals_oracle(&sys, k, 8, 2 * k + 2);
            let detail = format!(
                "k={k}, fast-only={:?}, slow-only={:?}",
                fast.difference(&slow).collect::<Vec<_>>(),
                slow.difference(&fast).collect::<Vec<_>>()
            );
            report.check(
                "block-reachability-vs-bruteforce",
                case_seed,
                fast == slow,
                &detail,
                &sys.to_json(),
            );
        }
    }

    let mut feas_rng = rng_for(cfg.seed ^ 0x0004);
    let mut produced = 0;
    let mut draws = 0;
    while produced < cfg.feas_runs && draws < 50 * cfg.feas_runs.max(1) {
        draws += 1;
        let case_seed: u64 = feas_rng.gen();
        let Some(dr) = gen_deviated_run(case_seed) else {
            continue;
        };
        produced += 1;
        let fast = feas_verdict(&dr);
        let slow = crate::conflict::feasibility_by_graph(&dr.chart);
        report.check(
            "detour-acceptance-vs-graph",
            case_seed,
            slow == Ok(fast),
            &format!("book={fast}, graph={slow:?}"),
            &dr.chart.to_json(),
        );
    }
    if produced < cfg.feas_runs {
        report.check(
            "detour-acceptance-vs-graph",
            cfg.seed,
            false,
            "generator starved before reaching the requested case count",
            "",
        );
    }

    let mut bad_rng = rng_for(cfg.seed ^ 0x0005);
    let mut produced = 0;
    let mut draws = 0;
    while produced < cfg.bad_runs && draws < 50 * cfg.bad_runs.max(1) {
        draws += 1;
        let case_seed: u64 = bad_rng.gen();
        let Some(dr) = gen_deviated_run(case_seed) else {
            continue;
        };
        produced += 1;
        let fast = bad_verdict(&dr);
        let slow = crate::conflict::badness_by_graph(&dr.chart, dr.k);
        report.check(
            "detour-badness-vs-graph",
            case_seed,
            slow == Ok(fast),
            &format!("k={}, chain={fast}, graph={slow:?}", dr.k),
            &dr.chart.to_json(),
        );
    }
    if produced < cfg.bad_runs {
        report.check(
            "detour-badness-vs-graph",
            cfg.seed,
            false,
            "generator starved before reaching the requested case count",
            "",
        );
    }

    let mut p2p_rng = rng_for(cfg.seed ^ 0x0006);
    for _ in 0..cfg.p2p_chains {
        let case_seed: u64 = p2p_rng.gen();
        let sys = with_comm(&gen_system(case_seed, 3, 3), Comm::P2p);
        let blocks = random_chain(case_seed ^ 0x10, &sys, 3, 3);
        let fast = p2p_chain_accepted(&sys, &blocks, 3);
        let slow = causal_delivery_oracle(&msc_of_exchanges(&blocks), Comm::P2p);
        report.check(
            "p2p-step-vs-oracle",
            case_seed,
            fast == slow,
            &format!("book={fast}, oracle={slow}"),
            &sys.to_json(),
        );
    }

    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PI;

    #[test]
    fn charts_are_seed_stable() {
        let a = gen_msc(7, 6, 4);
        let b = gen_msc(7, 6, 4);
        assert_eq!(a.to_json(), b.to_json());
        let c = gen_system(7, 3, 4);
        let d = gen_system(7, 3, 4);
        assert_eq!(c.to_json(), d.to_json());
    }

    #[test]
    fn charts_mix_matched_and_unmatched() {
        let mut matched = 0usize;
        let mut unmatched = 0usize;
        for seed in 0..1000 {
            for ev in gen_msc(seed, 6, 4).events() {
                if ev.action.is_send() {
                    match ev.partner {
                        Some(_) => matched += 1,
                        None => unmatched += 1,
                    }
                }
            }
        }
        let total = matched + unmatched;
        assert!(matched * 5 >= total, "matched {matched} of {total}");
        assert!(unmatched * 5 >= total, "unmatched {unmatched} of {total}");
    }

    #[test]
    fn random_runs_replay() {
        for seed in 0..50 {
            let sys = gen_system(seed, 3, 4);
            let exec = random_execution(seed ^ 0xa5, &sys, 8);
            assert!(run(&sys, &exec.actions).is_ok());
        }
    }

    #[test]
    fn decomposition_matches_the_oracle_on_random_charts() {
        for seed in 0..200 {
            let m = gen_causal_msc(seed, 4, 3, Comm::Mailbox);
            for k in [1, 2] {
                let split = decompose_into_blocks(&m, k, m.len().max(1), Comm::Mailbox);
                if let Some(blocks) = &split {
                    assert!(blocks.iter().all(|b| b.width() <= k));
                    let rebuilt = msc_of_exchanges(blocks);
                    assert_eq!(rebuilt.canonical_key(), m.canonical_key(), "seed {seed}");
                }
                let oracle = k_synchronous_oracle(&m, k, Comm::Mailbox);
                if oracle {
                    assert!(split.is_some(), "seed {seed} k={k}: oracle accepts");
                }
            }
        }
    }

    #[test]
    fn detour_fixture_splits_into_unit_blocks() {
        let m = crossed_handshake_detour_chart();
        let n = m.len();
        let body = filter_events(&m, &|i| {
            let fwd = m
                .events()
                .iter()
                .position(|e| e.action.is_send() && e.action.sender == PI)
                .expect("the chart has a forward send");
            let fr = m.events()[fwd].partner.expect("the forward send is matched");
            i != fwd && i != fr
        })
        .expect("the delivery pair only points at itself");
        assert_eq!(body.len(), n - 2);
        let blocks = decompose_into_blocks(&body, 1, 4, Comm::Mailbox)
            .expect("the detoured handshake schedules one message at a time");
        assert_eq!(blocks.len(), 2);
    }

    #[test]
    fn interleaved_orphan_blocks_replay() {
        // Queue order forces the orphan behind both matched messages.
        let good = KExchange::from_actions(&[
            Action::send("a", "q", MessageId::plain("m1")),
            Action::send("b", "q", MessageId::plain("m2")),
            Action::send("c", "q", MessageId::plain("m3")),
            Action::recv("a", "q", MessageId::plain("m1")),
            Action::recv("b", "q", MessageId::plain("m2")),
        ]);
        // Same shape, but the orphan is pushed between the matched pair.
        let bad = KExchange::from_actions(&[
            Action::send("a", "q", MessageId::plain("m1")),
            Action::send("c", "q", MessageId::plain("m3")),
            Action::send("b", "q", MessageId::plain("m2")),
            Action::recv("a", "q", MessageId::plain("m1")),
            Action::recv("b", "q", MessageId::plain("m2")),
        ]);
        assert!(block_replays(&good.unwrap(), Comm::Mailbox));
        let bad = bad.unwrap();
        assert!(!block_replays(&bad, Comm::Mailbox));
        assert!(block_replays(&bad, Comm::P2p));
    }

    #[test]
    fn deviated_runs_are_buildable() {
        let mut produced = 0;
        for seed in 0..200 {
            if let Some(dr) = gen_deviated_run(seed) {
                produced += 1;
                assert!(causal_delivery_oracle(&dr.chart, Comm::Mailbox));
                assert!(dr.blocks.iter().all(|b| b.width() <= dr.k));
                assert_eq!(dr.forward.width(), 1);
                let last = dr.forward.sends.first().expect("one forward send");
                assert_eq!(last.sender, PI);
            }
            if produced >= 20 {
                return;
            }
        }
        panic!("only {produced} deviated runs in 200 seeds");
    }

    #[test]
    fn empty_suite_passes_on_fixtures() {
        let report = oracle_suite(&SuiteConfig::default());
        assert!(report.ok(), "failures: {:?}", report.failures);
        assert!(report.cases > 0);
    }

    #[test]
    fn crippled_closure_rule_is_caught() {
        let cfg = SuiteConfig {
            graph_rules: RuleMask {
                unmatched_blocking: false,
                ..RuleMask::all()
            },
            ..SuiteConfig::default()
        };
        let report = oracle_suite(&cfg);
        assert!(!report.ok());
        assert!(report
            .failures
            .iter()
            .any(|f| f.detail.contains("same_channel_block")));
    }

    #[test]
    fn shrinking_reaches_a_small_chart() {
        // Any chart with at least one unmatched send keeps that property
        // under shrinking, so the minimum has a single event.
        let m = gen_msc(42, 8, 4);
        let has_orphan =
            |m: &Msc| m.events().iter().any(|e| e.action.is_send() && e.partner.is_none());
        if has_orphan(&m) {
            let small = shrink_chart(&m, &has_orphan);
            assert_eq!(small.len(), 1);
        }
    }
}
