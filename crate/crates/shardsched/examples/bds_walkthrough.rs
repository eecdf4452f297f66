//! The four-transaction walkthrough under the leader-based scheduler.
//!
//! Four shards hold one account each; T1..T4 access overlapping pairs of
//! accounts, so {T1,T4} and {T2,T3} form the two color classes. With all
//! four injected at round t = 0, the first class commits at t+6 and the
//! second at t+10.
//!
//! ```bash
//! cargo run -p shardsched --example bds_walkthrough
//! ```

use shardsched::model::TxnId;
use shardsched::scenarios::bds_walkthrough;

fn main() {
    let (report, out) = bds_walkthrough();
    println!("shards: 4 (uniform), accounts a..d on S1..S4");
    println!("T1 = {{a,b}} from S1   T2 = {{a,d}} from S3");
    println!("T3 = {{b,c}} from S3   T4 = {{c,d}} from S4");
    println!();
    for id in 1..=4u64 {
        let txn = &out.txns[&TxnId(id)];
        let record = &out.metrics.txns[&TxnId(id)];
        println!(
            "T{id}: color {}  committed at round {}  latency {}",
            record.color.unwrap(),
            txn.commit_round.unwrap(),
            record.latency().unwrap()
        );
    }
    println!();
    for shard in out.ledgers.iter() {
        println!(
            "ledger {}: {:?}",
            shard.shard,
            shard.entries().iter().map(|&(t, r)| (t.0, r)).collect::<Vec<_>>()
        );
    }
    println!();
    for check in &report.checks {
        println!("{} {}", if check.pass { "ok " } else { "FAIL" }, check.name);
    }
    assert!(report.passed());
}
