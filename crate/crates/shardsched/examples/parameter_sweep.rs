//! Sweeps the injection rate against two burstiness levels and writes
//! the aggregate CSV plus self-contained SVG plots.
//!
//! The full-size configuration (64 shards, 25000 rounds) takes a few
//! seconds in release mode; this example uses a reduced grid by default.
//!
//! ```bash
//! cargo run --release -p shardsched --example parameter_sweep
//! ```

use shardsched::cli::{plot_latency_svg, plot_pending_svg, sweep_csv};
use shardsched::config::{sweep, RunConfig};
use shardsched::rate::Rate;

fn main() {
    let mut base = RunConfig::default();
    base.s = 32;
    base.k = 6;
    base.rounds = 6000;
    let rhos: Vec<Rate> = (1..=5).map(|i| Rate::new(5 * i, 100)).collect();
    let bs = [200u64, 600];
    let rows = sweep(&base, &rhos, &bs, 4).expect("sweep");
    print!("{}", sweep_csv(&rows));

    let dir = std::env::temp_dir().join("shardsched-sweep");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("pending_vs_rho.svg"), plot_pending_svg(&rows)).unwrap();
    std::fs::write(dir.join("latency_vs_rho.svg"), plot_latency_svg(&rows)).unwrap();
    println!("\nplots written to {}", dir.display());

    // Queues and latency rise with the injection rate, and the larger
    // burst dominates throughout.
    for b in bs {
        let series: Vec<f64> = rows
            .iter()
            .filter(|r| r.b == b)
            .map(|r| r.summary.avg_pending)
            .collect();
        assert!(series.windows(2).all(|w| w[1] >= w[0]), "b={b}: {series:?}");
    }
}
