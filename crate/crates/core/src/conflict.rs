//! Conflict graphs over message exchanges.
//!
//! Each message of a chart (a matched send/receive pair, or a lone unmatched
//! send) becomes one vertex. Whenever two events of the same process belong
//! to different messages, the earlier one induces an edge labelled with the
//! roles the shared process plays in the two messages: `SR` for instance
//! means "its send precedes its receive". The base graph is independent of
//! the linearization chosen, which is what makes it usable as a decision
//! structure.
//!
//! On top of the base graph a closure adds derived orderings that any FIFO
//! mailbox schedule must respect. Cycles of the closed graph characterize
//! causal delivery violations; strongly connected components of the base
//! graph bound the exchange width a schedule needs.
//!
//! Graphs may also carry summary vertices: one per process standing for all
//! undelivered messages towards it from earlier history, and one for the
//! pre-deviation history of the monitor process. They join the closure but
//! never the component statistics.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::model::{MessageId, ProcessId, PI};
use crate::msc::Msc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    S,
    R,
}

/// Edge label: the role the shared process plays in the source message,
/// then its role in the target message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeLabel {
    SS,
    SR,
    RS,
    RR,
}

impl EdgeLabel {
    pub fn of(a: Role, b: Role) -> EdgeLabel {
        match (a, b) {
            (Role::S, Role::S) => EdgeLabel::SS,
            (Role::S, Role::R) => EdgeLabel::SR,
            (Role::R, Role::S) => EdgeLabel::RS,
            (Role::R, Role::R) => EdgeLabel::RR,
        }
    }

    pub fn first(self) -> Role {
        match self {
            EdgeLabel::SS | EdgeLabel::SR => Role::S,
            EdgeLabel::RS | EdgeLabel::RR => Role::R,
        }
    }

    pub fn second(self) -> Role {
        match self {
            EdgeLabel::SS | EdgeLabel::RS => Role::S,
            EdgeLabel::SR | EdgeLabel::RR => Role::R,
        }
    }

    /// Label of the composed edge, defined when the middle roles agree.
    pub fn compose(self, other: EdgeLabel) -> Option<EdgeLabel> {
        if self.second() == other.first() {
            Some(EdgeLabel::of(self.first(), other.second()))
        } else {
            None
        }
    }
}

impl std::fmt::Display for EdgeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EdgeLabel::SS => "SS",
            EdgeLabel::SR => "SR",
            EdgeLabel::RS => "RS",
            EdgeLabel::RR => "RR",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum VertexKind {
    /// One message: its sender, destination and payload. `matched` records
    /// whether the receive happened; the destination is meaningful either
    /// way.
    Exchange {
        sender: ProcessId,
        receiver: ProcessId,
        msg: MessageId,
        matched: bool,
    },
    /// Summary vertex for undelivered earlier messages towards one process.
    Pending(ProcessId),
    /// Summary vertex for the pre-deviation history of the monitor.
    MonitorHistory,
}

impl VertexKind {
    pub fn is_real(&self) -> bool {
        matches!(self, VertexKind::Exchange { .. })
    }

    pub fn matched(&self) -> bool {
        matches!(self, VertexKind::Exchange { matched: true, .. })
    }

    pub fn sender(&self) -> Option<&ProcessId> {
        match self {
            VertexKind::Exchange { sender, .. } => Some(sender),
            _ => None,
        }
    }

    /// Destination process, defined for unmatched messages as well.
    pub fn receiver(&self) -> Option<&ProcessId> {
        match self {
            VertexKind::Exchange { receiver, .. } => Some(receiver),
            _ => None,
        }
    }

    /// The process that performed the receive, when one happened.
    pub fn recv_actor(&self) -> Option<&ProcessId> {
        match self {
            VertexKind::Exchange {
                receiver,
                matched: true,
                ..
            } => Some(receiver),
            _ => None,
        }
    }

    /// Processes with an event in this message.
    pub fn procs(&self) -> BTreeSet<ProcessId> {
        match self {
            VertexKind::Exchange {
                sender,
                receiver,
                matched,
                ..
            } => {
                let mut s = BTreeSet::from([sender.clone()]);
                if *matched {
                    s.insert(receiver.clone());
                }
                s
            }
            _ => BTreeSet::new(),
        }
    }
}

pub type Edge = (usize, EdgeLabel, usize);

/// Which derivation rules the closure applies. Only tests disable rules, to
/// confirm the reference oracles catch the resulting divergence.
#[derive(Debug, Clone, Copy)]
pub struct RuleMask {
    /// Base edges hold in the closed graph.
    pub lift: bool,
    /// A matched message orders its own send before its own receive.
    pub matched_pair: bool,
    /// FIFO: receives in queue order force the sends into the same order.
    pub fifo_order: bool,
    /// A mailbox holding an undelivered message blocks later deliveries, so
    /// a matched message towards the same destination must be sent first.
    pub unmatched_blocking: bool,
    /// Transitive composition of compatible labels.
    pub compose: bool,
}

impl RuleMask {
    pub fn all() -> RuleMask {
        RuleMask {
            lift: true,
            matched_pair: true,
            fifo_order: true,
            unmatched_blocking: true,
            compose: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictGraph {
    pub verts: Vec<VertexKind>,
    pub base: BTreeSet<Edge>,
    /// Closed ("derived") edges. Empty until [`ConflictGraph::extend`] runs.
    pub ext: BTreeSet<Edge>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("the chart does not satisfy causal delivery")]
    NotCausalDelivery,
    #[error("expected exactly one message into and one out of the monitor")]
    MissingDeviationVertices,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SccReport {
    /// Vertex indices per strongly connected component, each sorted, the
    /// list sorted by first member.
    pub components: Vec<Vec<usize>>,
    pub max_size: usize,
    /// True when some base RS edge connects two vertices of one component.
    pub rs_on_cycle: bool,
}

impl ConflictGraph {
    /// Builds the base graph of a chart: one vertex per message, and an edge
    /// for every ordered pair of same-process events in different messages.
    pub fn build(msc: &Msc) -> ConflictGraph {
        let mut verts = Vec::new();
        let mut vertex_of_event: BTreeMap<usize, usize> = BTreeMap::new();
        for (i, ev) in msc.events().iter().enumerate() {
            if ev.action.is_send() {
                let v = verts.len();
                verts.push(VertexKind::Exchange {
                    sender: ev.action.sender.clone(),
                    receiver: ev.action.receiver.clone(),
                    msg: ev.action.msg.clone(),
                    matched: ev.partner.is_some(),
                });
                vertex_of_event.insert(i, v);
                if let Some(r) = ev.partner {
                    vertex_of_event.insert(r, v);
                }
            }
        }

        let mut base = BTreeSet::new();
        for p in msc.procs() {
            let events = msc.proc_events(&p);
            for (a_pos, &a) in events.iter().enumerate() {
                for &b in &events[a_pos + 1..] {
                    let va = vertex_of_event[&a];
                    let vb = vertex_of_event[&b];
                    // va == vb happens for self-addressed messages; the pair is
                    // kept so that a listing that inverts send and receive
                    // still shows up as a cycle.
                    let ra = if msc.events()[a].action.is_send() { Role::S } else { Role::R };
                    let rb = if msc.events()[b].action.is_send() { Role::S } else { Role::R };
                    base.insert((va, EdgeLabel::of(ra, rb), vb));
                }
            }
        }

        ConflictGraph {
            verts,
            base,
            ext: BTreeSet::new(),
        }
    }

    pub fn extend(&mut self) {
        self.extend_with(RuleMask::all());
    }

    /// Computes the closed edge set. Summary vertices participate through
    /// whatever base edges were attached to them beforehand; the derivation
    /// rules themselves only fire on real vertices.
    pub fn extend_with(&mut self, rules: RuleMask) {
        let mut ext: BTreeSet<Edge> = BTreeSet::new();
        if rules.lift {
            ext.extend(self.base.iter().cloned());
        }
        if rules.matched_pair {
            for (v, kind) in self.verts.iter().enumerate() {
                if kind.matched() {
                    ext.insert((v, EdgeLabel::SR, v));
                }
            }
        }
        if rules.fifo_order {
            for &(a, l, b) in &self.base {
                if l == EdgeLabel::RR {
                    ext.insert((a, EdgeLabel::SS, b));
                }
            }
        }
        if rules.unmatched_blocking {
            for (v1, k1) in self.verts.iter().enumerate() {
                if !k1.matched() {
                    continue;
                }
                for (v2, k2) in self.verts.iter().enumerate() {
                    if k2.is_real() && !k2.matched() && k1.receiver() == k2.receiver() {
                        ext.insert((v1, EdgeLabel::SS, v2));
                    }
                }
            }
        }

        if rules.compose {
            let n = self.verts.len();
            let mut out_adj: Vec<BTreeSet<(EdgeLabel, usize)>> = vec![BTreeSet::new(); n];
            let mut in_adj: Vec<BTreeSet<(usize, EdgeLabel)>> = vec![BTreeSet::new(); n];
            let mut queue: VecDeque<Edge> = VecDeque::new();
            for &(a, l, b) in &ext {
                out_adj[a].insert((l, b));
                in_adj[b].insert((a, l));
                queue.push_back((a, l, b));
            }
            while let Some((a, l1, b)) = queue.pop_front() {
                let mut derived: Vec<Edge> = Vec::new();
                for &(l2, c) in &out_adj[b] {
                    if let Some(l) = l1.compose(l2) {
                        derived.push((a, l, c));
                    }
                }
                for &(z, l0) in &in_adj[a] {
                    if let Some(l) = l0.compose(l1) {
                        derived.push((z, l, b));
                    }
                }
                for (x, l, y) in derived {
                    if ext.insert((x, l, y)) {
                        out_adj[x].insert((l, y));
                        in_adj[y].insert((x, l));
                        queue.push_back((x, l, y));
                    }
                }
            }
        }

        self.ext = ext;
    }

    /// Forward reachability over base edges, labels ignored, seeds included.
    pub fn post_star(&self, seeds: &BTreeSet<usize>) -> BTreeSet<usize> {
        let mut seen = seeds.clone();
        let mut queue: VecDeque<usize> = seeds.iter().copied().collect();
        while let Some(v) = queue.pop_front() {
            for &(a, _, b) in &self.base {
                if a == v && seen.insert(b) {
                    queue.push_back(b);
                }
            }
        }
        seen
    }

    /// Backward reachability over base edges, labels ignored, seeds included.
    pub fn pre_star(&self, seeds: &BTreeSet<usize>) -> BTreeSet<usize> {
        let mut seen = seeds.clone();
        let mut queue: VecDeque<usize> = seeds.iter().copied().collect();
        while let Some(v) = queue.pop_front() {
            for &(a, _, b) in &self.base {
                if b == v && seen.insert(a) {
                    queue.push_back(a);
                }
            }
        }
        seen
    }

    /// Strongly connected components of the base graph.
    pub fn scc_report(&self) -> SccReport {
        let n = self.verts.len();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(a, _, b) in &self.base {
            adj[a].push(b);
        }
        let comp = tarjan(n, &adj);
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (v, &c) in comp.iter().enumerate() {
            groups.entry(c).or_default().push(v);
        }
        let mut components: Vec<Vec<usize>> = groups.into_values().collect();
        for c in &mut components {
            c.sort_unstable();
        }
        components.sort();
        let max_size = components.iter().map(Vec::len).max().unwrap_or(0);
        let rs_on_cycle = self
            .base
            .iter()
            .any(|&(a, l, b)| l == EdgeLabel::RS && comp[a] == comp[b]);
        SccReport {
            components,
            max_size,
            rs_on_cycle,
        }
    }

    /// The two distinguished vertices of a deviated run: the message routed
    /// into the monitor and the message the monitor forwards.
    pub fn deviation_vertices(&self) -> Result<(usize, usize), GraphError> {
        let mut start = None;
        let mut stop = None;
        for (v, k) in self.verts.iter().enumerate() {
            if !k.is_real() {
                continue;
            }
            if k.receiver().map(String::as_str) == Some(PI) && k.matched() {
                if start.replace(v).is_some() {
                    return Err(GraphError::MissingDeviationVertices);
                }
            }
            if k.sender().map(String::as_str) == Some(PI) {
                if stop.replace(v).is_some() {
                    return Err(GraphError::MissingDeviationVertices);
                }
            }
        }
        match (start, stop) {
            (Some(s), Some(t)) => Ok((s, t)),
            _ => Err(GraphError::MissingDeviationVertices),
        }
    }

    /// GraphViz rendering. Base edges are solid, purely derived edges are
    /// dashed.
    pub fn to_dot(&self, name: &str) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        let _ = writeln!(s, "digraph \"{name}\" {{");
        let _ = writeln!(s, "  rankdir=LR;");
        for (v, k) in self.verts.iter().enumerate() {
            let (label, shape) = match k {
                VertexKind::Exchange {
                    sender,
                    receiver,
                    msg,
                    matched,
                } => {
                    let tag = if *matched { "" } else { " ?" };
                    (format!("v{v}: {sender}>{receiver}:{msg}{tag}"), "ellipse")
                }
                VertexKind::Pending(p) => (format!("pending({p})"), "box"),
                VertexKind::MonitorHistory => ("history(pi)".to_owned(), "box"),
            };
            let _ = writeln!(s, "  n{v} [label=\"{label}\", shape={shape}];");
        }
        for &(a, l, b) in &self.base {
            let _ = writeln!(s, "  n{a} -> n{b} [label=\"{l}\"];");
        }
        for &(a, l, b) in &self.ext {
            if !self.base.contains(&(a, l, b)) {
                let _ = writeln!(s, "  n{a} -> n{b} [label=\"{l}\", style=dashed];");
            }
        }
        let _ = writeln!(s, "}}");
        s
    }
}

/// Iterative Tarjan; returns a component id per vertex.
fn tarjan(n: usize, adj: &[Vec<usize>]) -> Vec<usize> {
    #[derive(Clone)]
    struct NodeState {
        index: usize,
        lowlink: usize,
        on_stack: bool,
        visited: bool,
    }
    let mut st = vec![
        NodeState {
            index: 0,
            lowlink: 0,
            on_stack: false,
            visited: false,
        };
        n
    ];
    let mut comp = vec![usize::MAX; n];
    let mut counter = 0usize;
    let mut comp_count = 0usize;
    let mut stack: Vec<usize> = Vec::new();

    for root in 0..n {
        if st[root].visited {
            continue;
        }
        // Work items: (vertex, next child position).
        let mut work: Vec<(usize, usize)> = vec![(root, 0)];
        while let Some(&mut (v, ref mut ci)) = work.last_mut() {
            if *ci == 0 {
                st[v].visited = true;
                st[v].index = counter;
                st[v].lowlink = counter;
                counter += 1;
                st[v].on_stack = true;
                stack.push(v);
            }
            if let Some(&w) = adj[v].get(*ci) {
                *ci += 1;
                if !st[w].visited {
                    work.push((w, 0));
                } else if st[w].on_stack {
                    st[v].lowlink = st[v].lowlink.min(st[w].index);
                }
            } else {
                work.pop();
                if let Some(&(parent, _)) = work.last() {
                    let low = st[v].lowlink;
                    st[parent].lowlink = st[parent].lowlink.min(low);
                }
                if st[v].lowlink == st[v].index {
                    loop {
                        let w = stack.pop().expect("scc stack underflow");
                        st[w].on_stack = false;
                        comp[w] = comp_count;
                        if w == v {
                            break;
                        }
                    }
                    comp_count += 1;
                }
            }
        }
    }
    comp
}

/// Whether the chart satisfies causal delivery, decided on the closed graph:
/// a violation shows up as a vertex that must precede its own send.
pub fn causal_delivery_by_graph(msc: &Msc) -> bool {
    let mut g = ConflictGraph::build(msc);
    g.extend();
    !(0..g.verts.len()).any(|v| g.ext.contains(&(v, EdgeLabel::SS, v)))
}

/// Whether the chart is schedulable in blocks of at most `k` messages,
/// decided on the base graph. Requires causal delivery.
pub fn k_synchronous_by_graph(msc: &Msc, k: usize) -> Result<(bool, SccReport), GraphError> {
    if !causal_delivery_by_graph(msc) {
        return Err(GraphError::NotCausalDelivery);
    }
    let g = ConflictGraph::build(msc);
    let report = g.scc_report();
    let ok = report.max_size <= k && !report.rs_on_cycle;
    Ok((ok, report))
}

/// Whether a deviated run is feasible, i.e. the pre-deviation prefix stays
/// schedulable when the original message is restored: infeasible exactly
/// when some message must both follow the rerouted send and be received
/// before the forwarded copy arrives.
pub fn feasibility_by_graph(msc: &Msc) -> Result<bool, GraphError> {
    let mut g = ConflictGraph::build(msc);
    g.extend();
    let (vstart, vstop) = g.deviation_vertices()?;
    let blocked = (0..g.verts.len()).any(|v| {
        g.ext.contains(&(vstart, EdgeLabel::SS, v)) && g.base.contains(&(v, EdgeLabel::RR, vstop))
    });
    Ok(!blocked)
}

/// Whether a deviated run shows that the original execution needs more than
/// `k`-block schedules: either a receive-then-send chain from the rerouted
/// message to the forwarded copy through some other process, or a blocking
/// zone between the two that exceeds `k + 2` messages.
pub fn badness_by_graph(msc: &Msc, k: usize) -> Result<bool, GraphError> {
    let g = ConflictGraph::build(msc);
    let (vstart, vstop) = g.deviation_vertices()?;
    let fwd = g.post_star(&BTreeSet::from([vstart]));
    let bwd = g.pre_star(&BTreeSet::from([vstop]));
    let rs_path = g.base.iter().any(|&(a, l, b)| {
        l == EdgeLabel::RS
            && fwd.contains(&a)
            && bwd.contains(&b)
            && g.verts[a].recv_actor().map(String::as_str) != Some(PI)
    });
    let zone = fwd.intersection(&bwd).count();
    Ok(rs_path || zone >= k + 2)
}
