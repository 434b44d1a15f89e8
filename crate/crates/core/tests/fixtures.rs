//! Pinned verdicts for the fixture corpus: every chart and system under
//! `fixtures/` has its classification asserted here, through both the
//! brute-force oracles and the graph route where both exist.

use std::collections::BTreeSet;

use ksc_core::conflict::{
    badness_by_graph, causal_delivery_by_graph, feasibility_by_graph, k_synchronous_by_graph,
    ConflictGraph, EdgeLabel, GraphError,
};
use ksc_core::exchange::{
    advance_book, advance_book_traced, decide_reachability, CausalBookkeeping, ExploreParams,
    GlobalState, KExchange,
};
use ksc_core::membership::bad_by_chain;
use ksc_core::model::{run, Action, Comm, MessageId, PI};
use ksc_core::msc::{causal_delivery_oracle, k_synchronous_oracle};
use ksc_core::testkit::{
    benign_detour_chart, blocked_receiver_system, crossed_handshake_chart,
    crossed_handshake_detour_chart, crossing_trio, deadlock_ring_chart, monitor_ring_blocks,
    monitor_ring_chart, no_fifo_schedule_chart, orphan_rs_detour_chart, overtaken_detour_chart,
    pending_chain_chart, pending_chain_system, relayed_block, rs_ring_chart, rs_ring_system,
    same_channel_block, undeliverable_detour_chart, wide_component_chart, with_comm,
};

fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

#[test]
fn delivery_violations_are_caught_by_both_routes() {
    for (name, chart) in [
        ("same_channel_block", same_channel_block()),
        ("relayed_block", relayed_block()),
        ("deadlock_ring", deadlock_ring_chart()),
        ("no_fifo_schedule", no_fifo_schedule_chart()),
    ] {
        assert!(!causal_delivery_oracle(&chart, Comm::Mailbox), "{name}: oracle");
        assert!(!causal_delivery_by_graph(&chart), "{name}: graph");
    }
    for (name, chart) in [
        ("rs_ring", rs_ring_chart()),
        ("pending_chain", pending_chain_chart()),
        ("wide_component", wide_component_chart()),
        ("crossed_handshake", crossed_handshake_chart()),
    ] {
        assert!(causal_delivery_oracle(&chart, Comm::Mailbox), "{name}: oracle");
        assert!(causal_delivery_by_graph(&chart), "{name}: graph");
    }
}

#[test]
fn ring_chart_blocks_every_width() {
    // The five-message ring has a cycle through a receive-then-send pair, so
    // no width bound ever admits it.
    let chart = rs_ring_chart();
    let mut g = ConflictGraph::build(&chart);
    g.extend();
    let report = g.scc_report();
    assert_eq!(report.max_size, 5);
    assert!(report.rs_on_cycle);
    for k in 1..=5 {
        assert!(!k_synchronous_oracle(&chart, k, Comm::Mailbox), "oracle at {k}");
        assert_eq!(k_synchronous_by_graph(&chart, k), Ok((false, report.clone())), "graph at {k}");
    }
}

#[test]
fn wide_component_needs_width_five() {
    let chart = wide_component_chart();
    let (ok4, report) = k_synchronous_by_graph(&chart, 4).unwrap();
    assert!(!ok4);
    assert_eq!(report.max_size, 5);
    assert!(!report.rs_on_cycle);
    assert_eq!(k_synchronous_by_graph(&chart, 5).map(|(ok, _)| ok), Ok(true));
    assert!(!k_synchronous_oracle(&chart, 4, Comm::Mailbox));
    assert!(k_synchronous_oracle(&chart, 5, Comm::Mailbox));
}

#[test]
fn pending_chain_fits_in_unit_blocks() {
    let chart = pending_chain_chart();
    assert!(k_synchronous_oracle(&chart, 1, Comm::Mailbox));
    assert_eq!(k_synchronous_by_graph(&chart, 1).map(|(ok, _)| ok), Ok(true));
}

#[test]
fn crossed_handshake_needs_width_two() {
    let chart = crossed_handshake_chart();
    assert!(!k_synchronous_oracle(&chart, 1, Comm::Mailbox));
    assert!(k_synchronous_oracle(&chart, 2, Comm::Mailbox));
    assert_eq!(k_synchronous_by_graph(&chart, 1).map(|(ok, _)| ok), Ok(false));
    assert_eq!(k_synchronous_by_graph(&chart, 2).map(|(ok, _)| ok), Ok(true));
}

#[test]
fn graph_route_rejects_non_causal_charts() {
    assert_eq!(
        k_synchronous_by_graph(&same_channel_block(), 3),
        Err(GraphError::NotCausalDelivery)
    );
}

#[test]
fn crossing_trio_base_edges_are_exact() {
    // Vertices in send listing order: m1 (q to p), m3 (q to r), m2 (p to q).
    let g = ConflictGraph::build(&crossing_trio());
    assert_eq!(g.verts.len(), 3);
    let want: BTreeSet<(usize, EdgeLabel, usize)> = [
        (0, EdgeLabel::SS, 1),
        (0, EdgeLabel::SR, 2),
        (1, EdgeLabel::SR, 2),
        (0, EdgeLabel::RS, 2),
    ]
    .into_iter()
    .collect();
    assert_eq!(g.base, want);
}

#[test]
fn chained_sends_flag_the_blocked_receiver() {
    // First block: q leaves m1 undelivered towards r, then hands m2 to s.
    // Second block: p talks to s and then to r, closing the cycle.
    let procs: Vec<String> = ["p", "q", "r", "s"].iter().map(|s| s.to_string()).collect();
    let e1 = KExchange::from_actions(&[
        Action::send("q", "r", MessageId::plain("m1")),
        Action::send("q", "s", MessageId::plain("m2")),
        Action::recv("q", "s", MessageId::plain("m2")),
    ])
    .unwrap();
    let e2 = KExchange::from_actions(&[
        Action::send("p", "s", MessageId::plain("m3")),
        Action::send("p", "r", MessageId::plain("m4")),
        Action::recv("p", "s", MessageId::plain("m3")),
        Action::recv("p", "r", MessageId::plain("m4")),
    ])
    .unwrap();

    let book1 = advance_book(&e1, &CausalBookkeeping::empty(&procs), &procs).unwrap();
    assert_eq!(*book1.sent_after("r"), set(&["q"]));
    assert_eq!(*book1.received_after("r"), set(&["s"]));
    for p in ["p", "q", "s"] {
        assert!(book1.sent_after(p).is_empty(), "sent towards {p}");
        assert!(book1.received_after(p).is_empty(), "received towards {p}");
    }

    let (book2, violation) = advance_book_traced(&e2, &book1, &procs);
    assert_eq!(violation.as_deref(), Some("r"));
    assert_eq!(*book2.sent_after("r"), set(&["p", "q"]));
    assert_eq!(*book2.received_after("r"), set(&["r", "s"]));
    // The inheritance clause also marks s: s already received after the
    // message pending towards r, and this block delivers to s again behind
    // that same pending summary.
    assert_eq!(*book2.received_after("s"), set(&["s"]));
    assert!(book2.sent_after("s").is_empty());
    for p in ["p", "q"] {
        assert!(book2.sent_after(p).is_empty(), "sent towards {p}");
        assert!(book2.received_after(p).is_empty(), "received towards {p}");
    }
}

#[test]
fn blocked_receiver_goals_depend_on_the_buffer_layout() {
    let sys = blocked_receiver_system();
    let params = ExploreParams::default();
    let goal = |pairs: &[(&str, &str)]| -> GlobalState {
        pairs.iter().map(|(p, s)| (p.to_string(), s.to_string())).collect()
    };

    // Each half of the goal is reachable on its own: r hears m4 if p runs
    // before q claims the mailbox, and s drains both its messages if p waits.
    let r_only = decide_reachability(&sys, 1, &goal(&[("r", "l1")]), &params).unwrap();
    assert!(r_only.reachable);
    let s_only = decide_reachability(&sys, 1, &goal(&[("s", "l2")]), &params).unwrap();
    assert!(s_only.reachable);

    // Together they force m1 into r's mailbox ahead of m4, which no receive
    // ever drains, so the joint goal is out of reach with one shared mailbox.
    let joint = goal(&[("r", "l1"), ("s", "l2")]);
    let both = decide_reachability(&sys, 1, &joint, &params).unwrap();
    assert!(!both.reachable);
    assert_eq!(both.witness, None);

    // With a queue per sender/receiver pair the stray m1 sits in its own
    // buffer and the same schedule goes through.
    let p2p = with_comm(&sys, Comm::P2p);
    let schedule = [
        Action::send("q", "r", MessageId::plain("m1")),
        Action::send("q", "s", MessageId::plain("m2")),
        Action::recv("q", "s", MessageId::plain("m2")),
        Action::send("p", "s", MessageId::plain("m3")),
        Action::recv("p", "s", MessageId::plain("m3")),
        Action::send("p", "r", MessageId::plain("m4")),
        Action::recv("p", "r", MessageId::plain("m4")),
    ];
    let exec = run(&p2p, &schedule).unwrap();
    for (p, s) in &joint {
        assert_eq!(exec.final_config.global.get(p), Some(s));
    }
    assert!(run(&sys, &schedule).is_err(), "the mailbox discipline must refuse this order");
}

#[test]
fn monitor_ring_reach_and_coreach_sets() {
    // Vertices in send order: the routed hop into the monitor, m1, m2, m3,
    // m4, and the forwarded m0 out of the monitor.
    let chart = monitor_ring_chart();
    let g = ConflictGraph::build(&chart);
    assert_eq!(g.verts.len(), 6);

    let seeds: BTreeSet<usize> = (0..g.verts.len())
        .filter(|&v| g.verts[v].procs().contains(PI))
        .collect();
    assert_eq!(seeds, BTreeSet::from([0, 5]));

    assert_eq!(g.post_star(&seeds), BTreeSet::from([0, 2, 3, 4, 5]));
    assert_eq!(g.pre_star(&seeds), BTreeSet::from([0, 1, 2, 5]));
}

#[test]
fn monitor_ring_is_bad_at_width_one() {
    let chart = monitor_ring_chart();
    let blocks = monitor_ring_blocks();
    let procs = chart.procs();
    assert!(bad_by_chain(&blocks, &procs, 1));
    assert_eq!(badness_by_graph(&chart, 1), Ok(true));
}

#[test]
fn detour_chart_classifications() {
    for (name, chart, feasible) in [
        ("crossed_handshake_detour", crossed_handshake_detour_chart(), true),
        ("undeliverable_detour", undeliverable_detour_chart(), false),
        ("overtaken_detour", overtaken_detour_chart(), false),
        ("benign_detour", benign_detour_chart(), true),
        ("orphan_rs_detour", orphan_rs_detour_chart(), true),
    ] {
        assert_eq!(feasibility_by_graph(&chart), Ok(feasible), "{name}");
    }
    for (name, chart, k, bad) in [
        ("benign_detour", benign_detour_chart(), 3, false),
        ("benign_detour", benign_detour_chart(), 2, true),
        ("orphan_rs_detour", orphan_rs_detour_chart(), 1, true),
        ("monitor_ring", monitor_ring_chart(), 1, true),
    ] {
        assert_eq!(badness_by_graph(&chart, k), Ok(bad), "{name} at {k}");
    }
}

#[test]
fn fixture_systems_have_the_expected_sync_class() {
    use ksc_core::membership::{decide_k_synchronizability, DecideParams};
    let params = DecideParams::default();
    let ring = decide_k_synchronizability(&rs_ring_system(), 1, &params).unwrap();
    assert!(!ring.synchronizable);
    assert!(ring.counterexample.is_some());
    let chain = decide_k_synchronizability(&pending_chain_system(), 1, &params).unwrap();
    assert!(chain.synchronizable);
    assert_eq!(chain.counterexample, None);
}
