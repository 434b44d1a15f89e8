//! Analyses for systems of communicating finite-state machines.
//!
//! The library models processes that exchange messages through FIFO buffers,
//! either one mailbox per receiver or one queue per directed process pair.
//! On top of the concrete semantics it provides:
//!
//! * message sequence charts with linearization enumeration and brute-force
//!   reference oracles ([`msc`]),
//! * an action conflict graph whose closure characterizes both causal
//!   delivery and bounded-exchange schedulability ([`conflict`]),
//! * an abstract transition relation over send/receive exchange blocks with
//!   finite bookkeeping, giving decidable reachability ([`exchange`]),
//! * a decision procedure that searches for executions witnessing that a
//!   system is not k-synchronizable ([`membership`]),
//! * the peer-to-peer variants of the above ([`p2p`]),
//! * seeded random generators and the fixture corpus used by the test suite
//!   ([`testkit`]).

pub mod conflict;
pub mod exchange;
pub mod membership;
pub mod model;
pub mod msc;
pub mod p2p;
pub mod testkit;
