//! Structural invariants of the analyses, checked over seeded random charts,
//! systems and block chains.

use proptest::prelude::*;

use ksc_core::conflict::{causal_delivery_by_graph, ConflictGraph, RuleMask};
use ksc_core::exchange::{advance_book_traced, explore, CausalBookkeeping, ExploreParams, Lts};
use ksc_core::membership::{decide_k_synchronizability, DecideParams, Verdict};
use ksc_core::model::{run, Comm, System};
use ksc_core::msc::{causal_delivery_oracle, k_synchronous_oracle, Msc};
use ksc_core::testkit::{
    causal_by_graph_with, gen_causal_msc, gen_msc, gen_system, pending_chain_system, random_chain,
    random_execution, shrink_chart,
};

/// Rebuilds a chart listed in the given event order, remapping partners.
fn relist(msc: &Msc, order: &[usize]) -> Msc {
    let pos: std::collections::BTreeMap<usize, usize> =
        order.iter().enumerate().map(|(new, &old)| (old, new)).collect();
    let events = order
        .iter()
        .map(|&old| {
            let ev = &msc.events()[old];
            (ev.action.clone(), ev.partner.map(|p| pos[&p]))
        })
        .collect();
    Msc::from_events(events).expect("a linearization keeps the pairing intact")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closure_is_idempotent(seed in any::<u64>()) {
        let chart = gen_msc(seed, 6, 4);
        let mut g = ConflictGraph::build(&chart);
        g.extend();
        let once = g.ext.clone();
        g.extend();
        prop_assert_eq!(&g.ext, &once);
        let mut h = ConflictGraph::build(&chart);
        h.extend_with(RuleMask::all());
        prop_assert_eq!(&h.ext, &once);
    }

    #[test]
    fn relisting_preserves_analyses(seed in any::<u64>()) {
        let chart = gen_msc(seed, 5, 4);
        let lins: Vec<Vec<usize>> = match chart.linearizations() {
            Ok(iter) => iter.take(6).collect(),
            Err(_) => return Ok(()),
        };
        let causal = causal_delivery_oracle(&chart, Comm::Mailbox);
        let sync1 = k_synchronous_oracle(&chart, 1, Comm::Mailbox);
        for order in &lins {
            let other = relist(&chart, order);
            prop_assert_eq!(other.canonical_key(), chart.canonical_key());
            prop_assert_eq!(causal_delivery_oracle(&other, Comm::Mailbox), causal);
            prop_assert_eq!(k_synchronous_oracle(&other, 1, Comm::Mailbox), sync1);
            prop_assert_eq!(causal_delivery_by_graph(&other), causal_delivery_by_graph(&chart));
        }
    }

    #[test]
    fn bookkeeping_only_grows(seed in any::<u64>(), k in 1usize..=3) {
        let sys = gen_system(seed, 3, 3);
        let procs = sys.proc_ids();
        let mut book = CausalBookkeeping::empty(&procs);
        for ex in random_chain(seed ^ 0x517e, &sys, k, 4) {
            let (next, _) = advance_book_traced(&ex, &book, &procs);
            prop_assert!(next.subsumes(&book));
            book = next;
        }
    }

    #[test]
    fn instrumentation_preserves_runs(seed in any::<u64>()) {
        let sys = gen_system(seed, 3, 4);
        let exec = random_execution(seed ^ 0xace, &sys, 8);
        let instr = sys.instrument().unwrap();
        prop_assert!(run(&instr, &exec.actions).is_ok());
    }

    #[test]
    fn chart_json_round_trip(seed in any::<u64>()) {
        let chart = gen_msc(seed, 6, 4);
        let back = Msc::from_json(&chart.to_json()).unwrap();
        prop_assert_eq!(back.events(), chart.events());
    }

    #[test]
    fn system_json_round_trip(seed in any::<u64>()) {
        let sys = gen_system(seed, 4, 4);
        let back = System::from_json(&sys.to_json()).unwrap();
        prop_assert_eq!(back, sys);
    }

    #[test]
    fn wider_blocks_stay_schedulable(seed in any::<u64>(), k in 1usize..=2) {
        let chart = gen_causal_msc(seed, 6, 4, Comm::Mailbox);
        if k_synchronous_oracle(&chart, k, Comm::Mailbox) {
            prop_assert!(k_synchronous_oracle(&chart, k + 1, Comm::Mailbox));
        }
    }
}

#[test]
fn lts_and_verdict_json_round_trip() {
    let sys = pending_chain_system();
    let lts = explore(&sys, 1, &ExploreParams::default()).unwrap();
    assert_eq!(Lts::from_json(&lts.to_json()).unwrap(), lts);

    let verdict = decide_k_synchronizability(&sys, 1, &DecideParams::default()).unwrap();
    assert_eq!(Verdict::from_json(&verdict.to_json()).unwrap(), verdict);
}

#[test]
fn shrunk_rule_disagreements_stay_small() {
    // With the unmatched-send blocking rule disabled the graph route misses
    // some delivery violations. Any such disagreement must shrink to a core
    // of at most six events before it would be reported.
    let crippled = RuleMask {
        unmatched_blocking: false,
        ..RuleMask::all()
    };
    let disagrees =
        |m: &Msc| causal_by_graph_with(m, crippled) != causal_delivery_oracle(m, Comm::Mailbox);
    let mut found = 0usize;
    for seed in 0..400u64 {
        let chart = gen_msc(seed, 6, 4);
        if !disagrees(&chart) {
            continue;
        }
        found += 1;
        let small = shrink_chart(&chart, &disagrees);
        assert!(disagrees(&small));
        assert!(small.events().len() <= 6, "seed {seed} shrank to {}", small.events().len());
    }
    assert!(found >= 3, "expected several disagreeing charts, found {found}");
}
