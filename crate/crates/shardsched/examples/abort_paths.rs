//! Atomic abort handling: when any destination votes abort, every
//! destination drops the transaction — nothing is committed anywhere.
//!
//! ```bash
//! cargo run -p shardsched --example abort_paths
//! ```

use shardsched::config::{execute, RunConfig, SchedulerKind, TopologySpec};
use shardsched::model::TxnStatus;
use shardsched::rate::Rate;

fn main() {
    for (label, scheduler, topology) in [
        ("bds / uniform", SchedulerKind::Bds, TopologySpec::Uniform),
        ("fds / line", SchedulerKind::Fds, TopologySpec::Line),
    ] {
        let mut config = RunConfig::default();
        config.scheduler = scheduler;
        config.topology = topology;
        config.s = 8;
        config.k = 3;
        config.b = 5;
        config.rho = Rate::new(1, 8);
        config.rounds = 1200;
        config.fail_prob = 0.25;
        let out = execute(&config).unwrap();
        let committed = out.metrics.committed();
        let aborted = out.metrics.aborted();
        println!(
            "{label}: {} injected, {committed} committed, {aborted} aborted",
            out.txns.len()
        );
        assert!(aborted > 0, "fail probability must produce aborts");
        // All-or-nothing: an aborted transaction appears in no ledger,
        // a committed one in every destination ledger at one round.
        for (id, txn) in &out.txns {
            match txn.status {
                TxnStatus::Committed => {
                    let round = txn.commit_round.unwrap();
                    for dest in txn.destinations() {
                        assert_eq!(out.ledger(dest).commit_round_of(*id), Some(round));
                    }
                }
                TxnStatus::Aborted => {
                    for dest in txn.destinations() {
                        assert_eq!(out.ledger(dest).commit_round_of(*id), None);
                    }
                }
                _ => {}
            }
        }
        println!("  atomicity verified over every ledger");
    }
}
