//! Determinism guarantees: a configuration plus seed fully determines
//! the trace and the run, and an exported trace replays byte-for-byte.
//!
//! ```bash
//! cargo run -p shardsched --example deterministic_replay
//! ```

use shardsched::cli::per_round_csv;
use shardsched::config::{execute_with_trace, RunConfig, SchedulerKind, TopologySpec};
use shardsched::rate::Rate;

fn main() {
    let mut config = RunConfig::default();
    config.scheduler = SchedulerKind::Fds;
    config.topology = TopologySpec::Line;
    config.s = 16;
    config.k = 4;
    config.b = 10;
    config.rho = Rate::new(1, 10);
    config.rounds = 1500;
    config.seed = 2024;

    let trace = config.generate_trace();
    println!("generated {} transactions (seed {})", trace.txn_count(), config.seed);

    let first = per_round_csv(&execute_with_trace(&config, &trace).unwrap().metrics);
    let second = per_round_csv(&execute_with_trace(&config, &trace).unwrap().metrics);
    println!("same trace twice: byte-identical = {}", first == second);
    assert_eq!(first, second);

    // Export, re-import, replay: still identical.
    let text = trace.to_text();
    let imported = shardsched::adversary::InjectionTrace::from_text(&text).unwrap();
    let replayed = per_round_csv(&execute_with_trace(&config, &imported).unwrap().metrics);
    println!("exported + replayed:  byte-identical = {}", replayed == first);
    assert_eq!(replayed, first);

    // A different seed produces a different trace.
    let mut other = config.clone();
    other.seed = 2025;
    let other_trace = other.generate_trace();
    println!(
        "seed {} differs from seed {}: {}",
        other.seed,
        config.seed,
        other_trace.to_text() != text
    );
    assert_ne!(other_trace.to_text(), text);
}
