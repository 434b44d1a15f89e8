//! End-to-end acceptance checks. Each test prints one `criterion N: pass`
//! or `criterion N: fail` line; run with `--nocapture` to see them all.

use std::collections::BTreeSet;
use std::time::Instant;

use ksc_core::conflict::{
    badness_by_graph, causal_delivery_by_graph, feasibility_by_graph, k_synchronous_by_graph,
    ConflictGraph,
};
use ksc_core::exchange::{
    advance_book, advance_book_traced, msc_of_exchanges, CausalBookkeeping, KExchange,
};
use ksc_core::membership::{bad_by_chain, decide_k_synchronizability, DecideParams};
use ksc_core::model::{Action, Comm, MessageId, PI};
use ksc_core::msc::{causal_delivery_oracle, k_synchronous_oracle, Msc};
use ksc_core::p2p::decide_k_synchronizability_p2p;
use ksc_core::testkit::{
    all_runs_synchronous, bad_verdict, feas_verdict, gen_causal_msc, gen_deviated_run, gen_msc,
    gen_ring_system, gen_system, monitor_ring_chart, pending_chain_chart, pending_chain_system,
    random_chain, reachable_globals_abstract, reachable_globals_oracle, relayed_block,
    rs_ring_chart, rs_ring_system, same_channel_block, wide_component_chart, with_comm,
    p2p_chain_accepted,
};

fn report(n: usize, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "pass" } else { "fail" };
    if detail.is_empty() {
        println!("criterion {n} ({name}): {verdict}");
    } else {
        println!("criterion {n} ({name}): {verdict} [{detail}]");
    }
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

fn block(actions: &[Action]) -> KExchange {
    KExchange::from_actions(actions).expect("fixture block shape")
}

#[test]
fn criterion_01_schedulability_graph_vs_oracle() {
    let start = Instant::now();
    let mut disagreements = Vec::new();
    for seed in 0..1000u64 {
        let m = gen_causal_msc(seed, 6, 4, Comm::Mailbox);
        for k in [1usize, 2, 3] {
            let graph = k_synchronous_by_graph(&m, k).map(|(ok, _)| ok);
            let oracle = k_synchronous_oracle(&m, k, Comm::Mailbox);
            if graph != Ok(oracle) {
                disagreements.push((seed, k));
            }
        }
    }
    let elapsed = start.elapsed();
    report(
        1,
        "width bound, graph vs oracle",
        disagreements.is_empty() && elapsed.as_secs() < 60,
        &format!("1000 charts, k in 1..=3, {} disagreements, {elapsed:.2?}", disagreements.len()),
    );
}

#[test]
fn criterion_02_delivery_graph_vs_oracle() {
    let mut disagreements = Vec::new();
    for seed in 0..1000u64 {
        let m = gen_msc(seed, 6, 4);
        if causal_delivery_by_graph(&m) != causal_delivery_oracle(&m, Comm::Mailbox) {
            disagreements.push(seed);
        }
    }
    report(
        2,
        "delivery analysis, graph vs oracle",
        disagreements.is_empty(),
        &format!("1000 charts, {} disagreements", disagreements.len()),
    );
}

#[test]
fn criterion_03_fixture_classifications() {
    let mut ok = true;
    let mut notes = Vec::new();

    let ring = rs_ring_chart();
    let mut g = ConflictGraph::build(&ring);
    g.extend();
    let rep = g.scc_report();
    if !rep.rs_on_cycle {
        ok = false;
        notes.push("ring cycle misses the receive-send step");
    }
    for k in 1..=5 {
        if k_synchronous_oracle(&ring, k, Comm::Mailbox)
            || k_synchronous_by_graph(&ring, k) != Ok((false, rep.clone()))
        {
            ok = false;
            notes.push("ring chart accepted at some width");
        }
    }

    let wide = wide_component_chart();
    let wide_rep = ConflictGraph::build(&wide).scc_report();
    if wide_rep.max_size != 5
        || k_synchronous_by_graph(&wide, 4).map(|(o, _)| o) != Ok(false)
        || k_synchronous_by_graph(&wide, 5).map(|(o, _)| o) != Ok(true)
        || k_synchronous_oracle(&wide, 4, Comm::Mailbox)
        || !k_synchronous_oracle(&wide, 5, Comm::Mailbox)
    {
        ok = false;
        notes.push("wide component is not exactly five wide");
    }

    for m in [same_channel_block(), relayed_block()] {
        if causal_delivery_oracle(&m, Comm::Mailbox) || causal_delivery_by_graph(&m) {
            ok = false;
            notes.push("blocking chart passed delivery");
        }
    }

    let chain = pending_chain_chart();
    if !causal_delivery_oracle(&chain, Comm::Mailbox)
        || !k_synchronous_oracle(&chain, 1, Comm::Mailbox)
        || k_synchronous_by_graph(&chain, 1).map(|(o, _)| o) != Ok(true)
    {
        ok = false;
        notes.push("pending chain is not unit-width");
    }

    report(3, "pinned chart classifications", ok, &notes.join("; "));
}

#[test]
fn criterion_04_bookkeeping_trace() {
    let procs: Vec<String> = ["p", "q", "r", "s"].iter().map(|s| s.to_string()).collect();
    let set = |items: &[&str]| -> BTreeSet<String> { items.iter().map(|s| s.to_string()).collect() };
    let e1 = block(&[
        Action::send("q", "r", MessageId::plain("m1")),
        Action::send("q", "s", MessageId::plain("m2")),
        Action::recv("q", "s", MessageId::plain("m2")),
    ]);
    let e2 = block(&[
        Action::send("p", "s", MessageId::plain("m3")),
        Action::send("p", "r", MessageId::plain("m4")),
        Action::recv("p", "s", MessageId::plain("m3")),
        Action::recv("p", "r", MessageId::plain("m4")),
    ]);

    let book1 = advance_book(&e1, &CausalBookkeeping::empty(&procs), &procs)
        .expect("the first block does not close a cycle");
    let (book2, violation) = advance_book_traced(&e2, &book1, &procs);

    let pass = *book1.sent_after("r") == set(&["q"])
        && *book1.received_after("r") == set(&["s"])
        && *book2.sent_after("r") == set(&["p", "q"])
        && *book2.received_after("r") == set(&["r", "s"])
        && violation.as_deref() == Some("r");
    report(
        4,
        "two-block bookkeeping trace",
        pass,
        &format!(
            "after e1 {:?}/{:?}, after e2 {:?}/{:?}, violation {:?}",
            book1.sent_after("r"),
            book1.received_after("r"),
            book2.sent_after("r"),
            book2.received_after("r"),
            violation
        ),
    );
}

#[test]
fn criterion_05_block_reachability_vs_bruteforce() {
    let mut disagreements = Vec::new();
    for seed in 0..30u64 {
        let sys = gen_system(seed, 3, 4);
        for k in [1usize, 2] {
            let fast = reachable_globals_abstract(&sys, k, 8);
            let slow = reachable_globals_oracle(&sys, k, 8, 2 * k + 2);
            if fast != slow {
                disagreements.push((seed, k, fast.len(), slow.len()));
            }
        }
    }
    report(
        5,
        "abstract reachability vs brute force",
        disagreements.is_empty(),
        &format!("30 systems, k in 1..=2, disagreements {disagreements:?}"),
    );
}

#[test]
fn criterion_06_detour_acceptance_vs_graph() {
    let mut produced = 0usize;
    let mut disagreements = Vec::new();
    let mut seed = 0u64;
    while produced < 500 && seed < 25_000 {
        seed += 1;
        let Some(dr) = gen_deviated_run(seed) else { continue };
        produced += 1;
        let fast = feas_verdict(&dr);
        let slow = feasibility_by_graph(&dr.chart);
        if slow != Ok(fast) {
            disagreements.push(seed);
        }
    }
    report(
        6,
        "detour acceptance vs graph",
        produced == 500 && disagreements.is_empty(),
        &format!("{produced} runs, {} disagreements", disagreements.len()),
    );
}

/// The two bad-route fixture charts as abstract chains ending in the
/// forwarding exchange, mirroring the listing orders of the fixtures.
fn benign_chain() -> (Vec<KExchange>, Msc) {
    let blocks = vec![
        block(&[
            Action::send("p", PI, MessageId::routed("r", "m1")),
            Action::recv("p", PI, MessageId::routed("r", "m1")),
        ]),
        block(&[
            Action::send("p", "q", MessageId::plain("m2")),
            Action::recv("p", "q", MessageId::plain("m2")),
        ]),
        block(&[
            Action::send("r", "q", MessageId::plain("m3")),
            Action::recv("r", "q", MessageId::plain("m3")),
        ]),
        block(&[
            Action::send(PI, "r", MessageId::plain("m1")),
            Action::recv(PI, "r", MessageId::plain("m1")),
        ]),
    ];
    let chart = ksc_core::testkit::benign_detour_chart();
    (blocks, chart)
}

fn orphan_rs_chain() -> (Vec<KExchange>, Msc) {
    let blocks = vec![
        block(&[
            Action::send("p", PI, MessageId::routed("r", "m1")),
            Action::recv("p", PI, MessageId::routed("r", "m1")),
        ]),
        block(&[
            Action::send("p", "q", MessageId::plain("m2")),
            Action::recv("p", "q", MessageId::plain("m2")),
        ]),
        block(&[Action::send("q", "p", MessageId::plain("m3"))]),
        block(&[
            Action::send("r", "q", MessageId::plain("m4")),
            Action::recv("r", "q", MessageId::plain("m4")),
        ]),
        block(&[
            Action::send(PI, "r", MessageId::plain("m1")),
            Action::recv(PI, "r", MessageId::plain("m1")),
        ]),
    ];
    let chart = ksc_core::testkit::orphan_rs_detour_chart();
    (blocks, chart)
}

#[test]
fn criterion_07_detour_badness_vs_graph() {
    let mut produced = 0usize;
    let mut disagreements = Vec::new();
    let mut seed = 100_000u64;
    while produced < 500 && seed < 125_000 {
        seed += 1;
        let Some(dr) = gen_deviated_run(seed) else { continue };
        produced += 1;
        let fast = bad_verdict(&dr);
        let slow = badness_by_graph(&dr.chart, dr.k);
        if slow != Ok(fast) {
            disagreements.push(seed);
        }
    }

    let mut fixture_ok = true;
    for (name, (blocks, chart), k, want) in [
        ("benign", benign_chain(), 3usize, false),
        ("orphan-rs", orphan_rs_chain(), 1usize, true),
    ] {
        let same = msc_of_exchanges(&blocks).canonical_key() == chart.canonical_key();
        let chain = bad_by_chain(&blocks, &chart.procs(), k);
        let graph = badness_by_graph(&chart, k);
        if !same || chain != want || graph != Ok(want) {
            fixture_ok = false;
            disagreements.push(u64::MAX);
            println!("  {name}: chain={chain}, graph={graph:?}, chart matches blocks: {same}");
        }
    }

    report(
        7,
        "incremental badness vs graph",
        produced == 500 && disagreements.is_empty() && fixture_ok,
        &format!("{produced} runs, {} disagreements", disagreements.len()),
    );
}

#[test]
fn criterion_08_membership_end_to_end() {
    let params = DecideParams::default();
    let mut ok = true;
    let mut notes = Vec::new();

    for k in [1usize, 2] {
        let start = Instant::now();
        let v = decide_k_synchronizability(&rs_ring_system(), k, &params).unwrap();
        let exhaustive = all_runs_synchronous(&rs_ring_system(), k, 12);
        let elapsed = start.elapsed();
        let ce_confirmed = v
            .counterexample
            .as_ref()
            .map(|m| !k_synchronous_oracle(m, k, Comm::Mailbox))
            .unwrap_or(false);
        if v.synchronizable || !ce_confirmed || exhaustive || elapsed.as_secs() >= 300 {
            ok = false;
            notes.push(format!("ring at k={k}: verdict {}, witness confirmed {ce_confirmed}, exhaustive {exhaustive}, {elapsed:.2?}", v.synchronizable));
        } else {
            notes.push(format!("ring at k={k}: refuted in {elapsed:.2?}"));
        }
    }

    let start = Instant::now();
    let v = decide_k_synchronizability(&pending_chain_system(), 1, &params).unwrap();
    let exhaustive = all_runs_synchronous(&pending_chain_system(), 1, 12);
    let elapsed = start.elapsed();
    if !v.synchronizable || !exhaustive || elapsed.as_secs() >= 300 {
        ok = false;
        notes.push(format!("chain at k=1: verdict {}, exhaustive {exhaustive}, {elapsed:.2?}", v.synchronizable));
    } else {
        notes.push(format!("chain at k=1: confirmed in {elapsed:.2?}"));
    }

    report(8, "membership decision end to end", ok, &notes.join("; "));
}

#[test]
fn criterion_09_p2p_agreement() {
    let mut chain_disagreements = Vec::new();
    for seed in 0..500u64 {
        let sys = with_comm(&gen_system(seed, 3, 3), Comm::P2p);
        let blocks = random_chain(seed ^ 0x10, &sys, 3, 3);
        let fast = p2p_chain_accepted(&sys, &blocks, 3);
        let slow = causal_delivery_oracle(&msc_of_exchanges(&blocks), Comm::P2p);
        if fast != slow {
            chain_disagreements.push(seed);
        }
    }

    let params = DecideParams::default();
    let mut verdict_disagreements = Vec::new();
    for seed in 0..30u64 {
        let ring = gen_ring_system(seed, 3, 3);
        let mb = decide_k_synchronizability(&ring, 1, &params).unwrap();
        let pp = decide_k_synchronizability_p2p(&with_comm(&ring, Comm::P2p), 1, &params).unwrap();
        if mb.synchronizable != pp.synchronizable {
            verdict_disagreements.push(seed);
        }
    }

    let ring_p2p =
        decide_k_synchronizability_p2p(&with_comm(&rs_ring_system(), Comm::P2p), 1, &params)
            .unwrap();

    report(
        9,
        "p2p step and verdicts",
        chain_disagreements.is_empty()
            && verdict_disagreements.is_empty()
            && !ring_p2p.synchronizable,
        &format!(
            "500 chains ({} off), 30 ring systems ({} off), ring chart p2p verdict {}",
            chain_disagreements.len(),
            verdict_disagreements.len(),
            ring_p2p.synchronizable
        ),
    );
}

#[test]
fn criterion_10_reach_and_coreach_sets() {
    let g = ConflictGraph::build(&monitor_ring_chart());
    let seeds: BTreeSet<usize> =
        (0..g.verts.len()).filter(|&v| g.verts[v].procs().contains(PI)).collect();
    let post = g.post_star(&seeds);
    let pre = g.pre_star(&seeds);
    let pass = post == BTreeSet::from([0, 2, 3, 4, 5]) && pre == BTreeSet::from([0, 1, 2, 5]);
    report(
        10,
        "monitor reach and co-reach sets",
        pass,
        &format!("post {post:?}, pre {pre:?}"),
    );
}
