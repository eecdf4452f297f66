//! Runs both schedulers at their guaranteed-stable rates and checks the
//! queue, latency, and epoch-length bounds on the finished runs.
//!
//! ```bash
//! cargo run -p shardsched --example stability_bounds
//! ```

use shardsched::bds::bds_check_stability_invariants;
use shardsched::config::{execute, RunConfig, SchedulerKind, TopologySpec};
use shardsched::fds::fds_check_stability_invariants;
use shardsched::rate::Rate;

fn main() {
    // Leader-based scheduler: rho <= max(1/(18k), 1/(18*ceil(sqrt(s)))).
    let mut config = RunConfig::default();
    config.s = 16;
    config.k = 4;
    config.b = 2;
    config.rho = Rate::new(1, 72);
    config.rounds = 10000;
    let out = execute(&config).unwrap();
    let report = bds_check_stability_invariants(&out.metrics, config.rho, config.b, config.k, config.s);
    println!("bds at rho = {} (bound {}):", config.rho, report.rate_bound);
    println!("  pending   {:>4} / {}", report.max_pending, report.pending_bound);
    println!("  latency   {:>4} / {}", report.max_latency, report.latency_bound);
    println!("  epochs    {:>4} / {}", report.max_epoch_length, report.epoch_bound);
    assert!(report.precondition_holds && report.ok());

    // Distributed scheduler on a line, below 1/(60*d*H2*k).
    let mut config = RunConfig::default();
    config.scheduler = SchedulerKind::Fds;
    config.topology = TopologySpec::Line;
    config.s = 16;
    config.k = 4;
    config.b = 2;
    config.rho = Rate::new(1, 7200);
    config.rounds = 10000;
    let out = execute(&config).unwrap();
    let report = fds_check_stability_invariants(
        &out.metrics,
        config.rho,
        config.b,
        config.k,
        config.s,
        15,
        2,
        config.c1,
    );
    println!("\nfds at rho = {} (bound {}):", config.rho, report.rate_bound);
    println!("  pending   {:>4} / {}", report.max_pending, report.pending_bound);
    println!("  latency   {:>4} / {}", report.max_latency, report.latency_bound);
    println!(
        "  arrivals  {:>4} / {} per {}-round rescheduling period",
        report.max_window_arrivals,
        report.pending_bound / 2,
        report.period
    );
    assert!(report.precondition_holds && report.ok());
    println!("\nall bounds hold");
}
