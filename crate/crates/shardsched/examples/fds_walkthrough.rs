//! The clustered walkthrough on an 8-shard line.
//!
//! Three transactions live inside layer-2 clusters (diameter 3) and one
//! spans the whole line (layer 3, diameter 7). Each reaches its
//! destination queues exactly `2d` rounds after the common epoch
//! boundary and commits exactly `5d` rounds after it; the long
//! transaction queues behind the local ones at the shared destinations.
//!
//! ```bash
//! cargo run -p shardsched --example fds_walkthrough
//! ```

use shardsched::model::TxnId;
use shardsched::scenarios::fds_walkthrough;

fn main() {
    let (report, out) = fds_walkthrough();
    println!("shards: 8 on a line, one account per shard");
    println!("T1 = {{a1,a2}} from S2   T2 = {{a1,a7}} from S5");
    println!("T3 = {{a4,a5}} from S5   T4 = {{a6,a7}} from S7");
    println!();
    for id in 1..=4u64 {
        let record = &out.metrics.txns[&TxnId(id)];
        let height = record.height.unwrap();
        println!(
            "T{id}: level ({}, {})  queued at {}  committed at {}  height (t_end {}, color {})",
            height.layer,
            height.sublayer,
            record.queued_round.unwrap(),
            out.txns[&TxnId(id)].commit_round.unwrap(),
            height.t_end,
            height.color,
        );
    }
    println!();
    for check in &report.checks {
        println!("{} {}", if check.pass { "ok " } else { "FAIL" }, check.name);
    }
    assert!(report.passed());
}
