//! The rate ceiling in action: batches of mutually conflicting
//! transactions, every pair sharing a dedicated shard, injected above
//! `2/(k+1)`. No scheduler can keep up; the pending queue grows without
//! bound and the growth detector flags it.
//!
//! ```bash
//! cargo run -p shardsched --example overload_instability
//! ```

use shardsched::adversary::{overload_width, overload_adversary};
use shardsched::config::{execute_with_trace, RunConfig};
use shardsched::metrics::detect_growth;
use shardsched::rate::Rate;

fn main() {
    let (k, s) = (3u32, 8u32);
    let width = overload_width(k, s);
    println!(
        "k = {k}, s = {s}: batches of {width} mutually conflicting transactions over {} shards",
        width * (width - 1) / 2
    );
    println!("stability ceiling 2/(k+1) = 0.5; injecting at 0.6\n");
    let rho = Rate::new(6, 10);
    let trace = overload_adversary(k, s, rho, 2, 4000, 1).unwrap();

    let mut config = RunConfig::default();
    config.s = s;
    config.k = k;
    config.b = 2;
    config.rho = rho;
    config.rounds = 4000;
    let out = execute_with_trace(&config, &trace).unwrap();
    for sample in out.metrics.rounds.iter().step_by(500) {
        println!(
            "round {:>5}: pending {:>5}  committed {:>5}",
            sample.round, sample.pending_total, sample.committed_cum
        );
    }
    let verdict = detect_growth(&out.metrics);
    println!("\ngrowth detector: {verdict:?}");
    assert!(verdict.is_growing());
}
