//! Generates admissible injection traces and audits them against the
//! per-shard window budget `⌊rho*t⌋ + b`.
//!
//! ```bash
//! cargo run -p shardsched --example adversary_traces
//! ```

use shardsched::adversary::{
    check_admissible, token_bucket_generator, AdversaryParams, InjectionStrategy,
};
use shardsched::model::AccountBook;
use shardsched::rate::Rate;

fn main() {
    let s = 16;
    let book = AccountBook::one_per_shard(s);
    let params = AdversaryParams {
        rho: Rate::new(15, 100),
        b: 12,
        k: 4,
        seed: 42,
    };
    for (label, strategy) in [
        ("steady uniform-random", InjectionStrategy::UniformRandom),
        (
            "single-round burst at round 25",
            InjectionStrategy::SingleEpochBurst {
                burst_round: 25,
                burst_txns: 12,
            },
        ),
    ] {
        let trace = token_bucket_generator(&params, &book, s, 1000, strategy);
        let report = check_admissible(&trace, &book, s, params.rho, params.b);
        println!(
            "{label}: {} transactions over 1000 rounds, admissible: {}",
            trace.txn_count(),
            report.admissible
        );
        let burst_round_txns = trace.at(25).len();
        println!("  injected at round 25: {burst_round_txns}");
        assert!(report.admissible);
    }

    // The line-oriented trace format round-trips.
    let trace = token_bucket_generator(&params, &book, s, 12, InjectionStrategy::UniformRandom);
    println!("\ntrace format (round txn_id home_shard accounts):");
    print!("{}", trace.to_text());
    let parsed = shardsched::adversary::InjectionTrace::from_text(&trace.to_text()).unwrap();
    assert_eq!(parsed, trace);

    // An over-budget trace is pinpointed.
    let mut bad = shardsched::adversary::InjectionTrace::default();
    for id in 1..=4 {
        bad.push(
            9,
            shardsched::adversary::TxnSpec {
                id,
                home: 3,
                accounts: vec![3],
            },
        );
    }
    let report = check_admissible(&bad, &book, s, Rate::new(1, 100), 3);
    let v = report.violation.unwrap();
    println!(
        "\nover-budget demo: shard {} holds {} arrivals in [{}, {}] against budget {}",
        v.shard, v.congestion, v.from_round, v.to_round, v.budget
    );
}
