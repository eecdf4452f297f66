//! Prints the layer/sublayer cluster decomposition of a line of shards:
//! block boundaries, leaders, diameters, and a few home-cluster lookups.
//!
//! ```bash
//! cargo run -p shardsched --example cluster_layout -- 16
//! ```

use shardsched::cluster::ClusterHierarchy;
use shardsched::model::ShardId;
use shardsched::topology::Topology;

fn main() {
    let s: u32 = std::env::args()
        .nth(1)
        .and_then(|v| v.parse().ok())
        .unwrap_or(16);
    let topology = Topology::line(s).expect("line topology");
    let hierarchy = ClusterHierarchy::build(&topology).expect("line decomposition");
    println!(
        "line of {s} shards: diameter {}, {} layers, {} sublayers",
        topology.diameter(),
        hierarchy.layer_count(),
        hierarchy.sublayer_count()
    );
    for layer in 0..hierarchy.layer_count() {
        for sublayer in 0..hierarchy.sublayer_count() {
            let clusters: Vec<String> = hierarchy
                .clusters_at(layer, sublayer)
                .map(|c| {
                    let lo = c.members.first().unwrap().0;
                    let hi = c.members.last().unwrap().0;
                    match c.leader {
                        Some(leader) => format!("[{lo}..{hi} ldr {leader} d{}]", c.diameter),
                        None => format!("[{lo}..{hi} –]"),
                    }
                })
                .collect();
            if !clusters.is_empty() {
                println!("layer {layer} sublayer {sublayer}: {}", clusters.join(" "));
            }
        }
    }
    println!();
    println!("home clusters (leaderless blocks are skipped):");
    for (home, reach) in [(1u32, 0u32), (2, 1), (s / 2, 1), (s / 2, s / 4), (1, s - 1)] {
        let id = hierarchy.home_cluster(ShardId(home), reach);
        let c = hierarchy.cluster(id);
        println!(
            "  home S{home}, reach {reach}: layer {} sublayer {} [{}..{}] leader {}",
            c.layer,
            c.sublayer,
            c.members.first().unwrap().0,
            c.members.last().unwrap().0,
            c.leader.unwrap()
        );
    }
}
