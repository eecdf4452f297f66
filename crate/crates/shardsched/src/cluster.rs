//! Hierarchical cluster decomposition of the shard graph.
//!
//! Layer `i` partitions the line into consecutive blocks of `2^i` shards;
//! each layer carries two sublayers, the aligned blocks and the same
//! blocks shifted right by half a block (truncated at the line ends).
//! Layer 0 is the singleton partition. Full-width blocks designate their
//! most central member as leader; truncated blocks stay leaderless and
//! are never chosen as home clusters. The top layer always exposes one
//! leadered cluster spanning every shard, so a home cluster exists for
//! any reach.
//!
//! Construction is provided for the line and uniform models; arbitrary
//! topologies can supply a prebuilt hierarchy through [`ClusterHierarchy::from_clusters`].

use crate::model::{ShardId, Transaction};
use crate::topology::{Topology, TopologyKind};
use thiserror::Error;

/// Index into [`ClusterHierarchy::clusters`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClusterId(pub usize);

#[derive(Debug, Clone)]
pub struct Cluster {
    pub layer: u32,
    pub sublayer: u32,
    /// Member shards, ascending.
    pub members: Vec<ShardId>,
    pub leader: Option<ShardId>,
    /// Strong diameter in rounds (max pairwise distance within the cluster).
    pub diameter: u32,
}

impl Cluster {
    pub fn contains(&self, shard: ShardId) -> bool {
        self.members.binary_search(&shard).is_ok()
    }
}

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("no built-in decomposition for this topology; supply clusters explicitly")]
    UnsupportedTopology,
    #[error("invalid cluster set: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone)]
pub struct ClusterHierarchy {
    shards: u32,
    layers: u32,
    sublayers: u32,
    clusters: Vec<Cluster>,
    /// `home_table[(shard-1) * (D+1) + x]` = minimal leadered cluster
    /// covering the x-neighborhood of the shard.
    home_table: Vec<ClusterId>,
    diameter: u32,
}

fn central_member(members: &[ShardId], topology: &Topology) -> ShardId {
    // Member minimizing the maximum distance to the rest; ties go to the
    // lowest shard index. Members are sorted, so the first minimum wins.
    let mut best = members[0];
    let mut best_ecc = u32::MAX;
    for &m in members {
        let ecc = members
            .iter()
            .map(|&o| topology.distance(m, o))
            .max()
            .unwrap_or(0);
        if ecc < best_ecc {
            best_ecc = ecc;
            best = m;
        }
    }
    best
}

fn cluster_diameter(members: &[ShardId], topology: &Topology) -> u32 {
    let mut d = 0;
    for &a in members {
        for &b in members {
            d = d.max(topology.distance(a, b));
        }
    }
    d
}

fn line_blocks(s: u32, width: u32, offset: u32) -> Vec<(u32, u32)> {
    // Contiguous [lo, hi] blocks of `width`, first block truncated to
    // `offset` shards when shifted.
    let mut blocks = Vec::new();
    let mut lo = 1u32;
    if offset > 0 {
        blocks.push((1, offset.min(s)));
        lo = offset + 1;
    }
    while lo <= s {
        let hi = (lo + width - 1).min(s);
        blocks.push((lo, hi));
        lo = hi + 1;
    }
    blocks
}

impl ClusterHierarchy {
    /// Builds the decomposition for line or uniform topologies.
    pub fn build(topology: &Topology) -> Result<ClusterHierarchy, ClusterError> {
        match topology.kind() {
            TopologyKind::Line => Ok(Self::build_line(topology)),
            TopologyKind::Uniform => Ok(Self::build_uniform(topology)),
            TopologyKind::Explicit => Err(ClusterError::UnsupportedTopology),
        }
    }

    fn build_uniform(topology: &Topology) -> ClusterHierarchy {
        let s = topology.shards();
        let mut clusters: Vec<Cluster> = topology
            .shard_ids()
            .map(|shard| Cluster {
                layer: 0,
                sublayer: 0,
                members: vec![shard],
                leader: Some(shard),
                diameter: 0,
            })
            .collect();
        if s > 1 {
            let members: Vec<ShardId> = topology.shard_ids().collect();
            clusters.push(Cluster {
                layer: 1,
                sublayer: 0,
                leader: Some(central_member(&members, topology)),
                diameter: cluster_diameter(&members, topology),
                members,
            });
        }
        Self::assemble(topology, clusters)
    }

    fn build_line(topology: &Topology) -> ClusterHierarchy {
        let s = topology.shards();
        let diameter = topology.diameter();
        let mut clusters: Vec<Cluster> = Vec::new();
        // Layer 0: singletons.
        for shard in topology.shard_ids() {
            clusters.push(Cluster {
                layer: 0,
                sublayer: 0,
                members: vec![shard],
                leader: Some(shard),
                diameter: 0,
            });
        }
        let top_layer = if diameter == 0 {
            0
        } else {
            // Enough layers that blocks of 2^top can span the line.
            let mut top = 32 - diameter.leading_zeros(); // ceil(log2 D) for D >= 1
            if (1u64 << top) < diameter as u64 {
                top += 1;
            }
            top.max(1)
        };
        for layer in 1..=top_layer {
            let width = 1u32 << layer.min(31);
            for (sublayer, offset) in [(0u32, 0u32), (1u32, width / 2)] {
                for (lo, hi) in line_blocks(s, width, offset) {
                    let members: Vec<ShardId> = (lo..=hi).map(ShardId).collect();
                    let full = hi - lo + 1 == width;
                    let leader = full.then(|| central_member(&members, topology));
                    clusters.push(Cluster {
                        layer,
                        sublayer,
                        leader,
                        diameter: cluster_diameter(&members, topology),
                        members,
                    });
                }
            }
        }
        // The top layer must expose one leadered cluster spanning the whole
        // line; non-power-of-two shard counts leave only truncated blocks
        // there, so replace that sublayer with the forced cluster.
        let has_full_top = clusters.iter().any(|c| {
            c.layer == top_layer && c.leader.is_some() && c.members.len() as u32 == s
        });
        if s > 1 && !has_full_top {
            clusters.retain(|c| !(c.layer == top_layer && c.sublayer == 0));
            let members: Vec<ShardId> = topology.shard_ids().collect();
            clusters.push(Cluster {
                layer: top_layer,
                sublayer: 0,
                leader: Some(central_member(&members, topology)),
                diameter: cluster_diameter(&members, topology),
                members,
            });
        }
        Self::assemble(topology, clusters)
    }

    /// Wraps an externally supplied decomposition, validating leader
    /// membership and the per-(layer, sublayer) partition property.
    pub fn from_clusters(
        topology: &Topology,
        clusters: Vec<Cluster>,
    ) -> Result<ClusterHierarchy, ClusterError> {
        use std::collections::BTreeMap;
        let mut by_level: BTreeMap<(u32, u32), Vec<&Cluster>> = BTreeMap::new();
        for c in &clusters {
            if let Some(leader) = c.leader {
                if !c.contains(leader) {
                    return Err(ClusterError::Invalid(format!(
                        "leader {leader} is not a member of its cluster"
                    )));
                }
            }
            by_level.entry((c.layer, c.sublayer)).or_default().push(c);
        }
        for ((layer, sublayer), level) in &by_level {
            let mut seen = vec![false; topology.shards() as usize];
            for c in level {
                for m in &c.members {
                    let idx = (m.0 - 1) as usize;
                    if seen[idx] {
                        return Err(ClusterError::Invalid(format!(
                            "shard {m} appears twice at layer {layer} sublayer {sublayer}"
                        )));
                    }
                    seen[idx] = true;
                }
            }
            if !seen.iter().all(|&v| v) {
                return Err(ClusterError::Invalid(format!(
                    "layer {layer} sublayer {sublayer} does not cover all shards"
                )));
            }
        }
        let covers_all = clusters
            .iter()
            .any(|c| c.leader.is_some() && c.members.len() as u32 == topology.shards());
        if !covers_all {
            return Err(ClusterError::Invalid(
                "no leadered cluster spans all shards".into(),
            ));
        }
        Ok(Self::assemble(topology, clusters))
    }

    fn assemble(topology: &Topology, mut clusters: Vec<Cluster>) -> ClusterHierarchy {
        clusters.sort_by_key(|c| (c.layer, c.sublayer, c.members.first().copied()));
        let layers = clusters.iter().map(|c| c.layer).max().unwrap_or(0) + 1;
        let sublayers = clusters.iter().map(|c| c.sublayer).max().unwrap_or(0) + 1;
        let s = topology.shards();
        let diameter = topology.diameter();
        let mut home_table = Vec::with_capacity((s as usize) * (diameter as usize + 1));
        for shard in topology.shard_ids() {
            for reach in 0..=diameter {
                let neighborhood: Vec<ShardId> = topology
                    .shard_ids()
                    .filter(|&q| topology.distance(shard, q) <= reach)
                    .collect();
                let id = clusters
                    .iter()
                    .position(|c| {
                        c.leader.is_some()
                            && neighborhood.iter().all(|&q| c.contains(q))
                    })
                    .expect("top cluster covers every neighborhood");
                home_table.push(ClusterId(id));
            }
        }
        ClusterHierarchy {
            shards: s,
            layers,
            sublayers,
            clusters,
            home_table,
            diameter,
        }
    }

    pub fn shards(&self) -> u32 {
        self.shards
    }

    /// Number of layers (`H1`).
    pub fn layer_count(&self) -> u32 {
        self.layers
    }

    /// Maximum number of sublayers in any layer (`H2`).
    pub fn sublayer_count(&self) -> u32 {
        self.sublayers
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn cluster(&self, id: ClusterId) -> &Cluster {
        &self.clusters[id.0]
    }

    pub fn leadered(&self) -> impl Iterator<Item = (ClusterId, &Cluster)> {
        self.clusters
            .iter()
            .enumerate()
            .filter(|(_, c)| c.leader.is_some())
            .map(|(i, c)| (ClusterId(i), c))
    }

    pub fn clusters_at(&self, layer: u32, sublayer: u32) -> impl Iterator<Item = &Cluster> {
        self.clusters
            .iter()
            .filter(move |c| c.layer == layer && c.sublayer == sublayer)
    }

    /// Largest diameter among leadered clusters (`d` at the top level).
    pub fn max_leader_diameter(&self) -> u32 {
        self.leadered().map(|(_, c)| c.diameter).max().unwrap_or(0)
    }

    /// Minimal leadered cluster, in (layer, sublayer, position) order,
    /// containing the whole `reach`-neighborhood of `shard`.
    pub fn home_cluster(&self, shard: ShardId, reach: u32) -> ClusterId {
        let reach = reach.min(self.diameter);
        self.home_table[(shard.0 as usize - 1) * (self.diameter as usize + 1) + reach as usize]
    }

    /// Home cluster of a transaction: reach is the largest distance from
    /// its home shard to any destination.
    pub fn home_cluster_of(&self, txn: &Transaction, topology: &Topology) -> ClusterId {
        let reach = txn
            .destinations()
            .iter()
            .map(|&d| topology.distance(txn.home, d))
            .max()
            .unwrap_or(0);
        self.home_cluster(txn.home, reach)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn line(s: u32) -> (Topology, ClusterHierarchy) {
        let t = Topology::line(s).unwrap();
        let h = ClusterHierarchy::build(&t).unwrap();
        (t, h)
    }

    fn members_at(h: &ClusterHierarchy, layer: u32, sublayer: u32) -> Vec<Vec<u32>> {
        h.clusters_at(layer, sublayer)
            .map(|c| c.members.iter().map(|m| m.0).collect())
            .collect()
    }

    #[test]
    fn line8_layer1_blocks_of_two() {
        let (_, h) = line(8);
        assert_eq!(
            members_at(&h, 1, 0),
            vec![vec![1, 2], vec![3, 4], vec![5, 6], vec![7, 8]]
        );
    }

    #[test]
    fn line8_top_layer_is_single_cluster() {
        let (_, h) = line(8);
        assert_eq!(h.layer_count(), 4);
        let top = members_at(&h, 3, 0);
        assert_eq!(top, vec![vec![1, 2, 3, 4, 5, 6, 7, 8]]);
        let c = h.clusters_at(3, 0).next().unwrap();
        assert_eq!(c.leader, Some(ShardId(4)));
        assert_eq!(c.diameter, 7);
    }

    #[test]
    fn line8_shifted_sublayer_truncates_and_drops_leaders() {
        let (_, h) = line(8);
        assert_eq!(
            members_at(&h, 2, 1),
            vec![vec![1, 2], vec![3, 4, 5, 6], vec![7, 8]]
        );
        let clusters: Vec<&Cluster> = h.clusters_at(2, 1).collect();
        assert_eq!(clusters[0].leader, None, "truncated end block");
        assert_eq!(clusters[1].leader, Some(ShardId(4)));
        assert_eq!(clusters[2].leader, None, "truncated end block");
        assert_eq!(clusters[1].diameter, 3);
    }

    #[test]
    fn every_level_partitions_the_shards() {
        for s in [1u32, 2, 3, 5, 8, 16, 21, 32] {
            let (t, h) = line(s);
            for layer in 0..h.layer_count() {
                for sublayer in 0..h.sublayer_count() {
                    let clusters: Vec<&Cluster> = h.clusters_at(layer, sublayer).collect();
                    if clusters.is_empty() {
                        continue;
                    }
                    let mut seen = BTreeSet::new();
                    for c in &clusters {
                        for m in &c.members {
                            assert!(seen.insert(*m), "overlap at ({layer},{sublayer}) in s={s}");
                        }
                    }
                    assert_eq!(seen.len() as u32, t.shards(), "cover at ({layer},{sublayer}) s={s}");
                }
            }
        }
    }

    #[test]
    fn leaders_are_central_members_of_full_blocks() {
        for s in [2u32, 5, 8, 16, 21] {
            let (t, h) = line(s);
            for (_, c) in h.leadered() {
                let leader = c.leader.unwrap();
                assert!(c.contains(leader));
                // Leader minimizes the max distance to members (ties -> lowest).
                let ecc = |m: ShardId| c.members.iter().map(|&o| t.distance(m, o)).max().unwrap();
                let best = c.members.iter().map(|&m| ecc(m)).min().unwrap();
                assert_eq!(ecc(leader), best);
                let first_best = c.members.iter().copied().find(|&m| ecc(m) == best).unwrap();
                assert_eq!(leader, first_best);
            }
        }
    }

    #[test]
    fn home_cluster_matches_exhaustive_scan() {
        for s in [2u32, 5, 8, 16, 32] {
            let (t, h) = line(s);
            for shard in t.shard_ids() {
                for reach in 0..=t.diameter() {
                    let neighborhood: Vec<ShardId> = t
                        .shard_ids()
                        .filter(|&q| t.distance(shard, q) <= reach)
                        .collect();
                    // Oracle: scan every cluster in (layer, sublayer, start) order.
                    let mut expect = None;
                    let mut ordered: Vec<(usize, &Cluster)> =
                        h.clusters().iter().enumerate().collect();
                    ordered.sort_by_key(|(_, c)| {
                        (c.layer, c.sublayer, c.members.first().copied())
                    });
                    for (i, c) in ordered {
                        if c.leader.is_some() && neighborhood.iter().all(|&q| c.contains(q)) {
                            expect = Some(ClusterId(i));
                            break;
                        }
                    }
                    assert_eq!(h.home_cluster(shard, reach), expect.unwrap());
                }
            }
        }
    }

    #[test]
    fn zero_reach_lands_on_singleton() {
        let (_, h) = line(8);
        for shard in 1..=8u32 {
            let id = h.home_cluster(ShardId(shard), 0);
            let c = h.cluster(id);
            assert_eq!(c.layer, 0);
            assert_eq!(c.members, vec![ShardId(shard)]);
            assert_eq!(c.leader, Some(ShardId(shard)));
        }
    }

    #[test]
    fn forced_top_for_non_power_of_two() {
        let (_, h) = line(6);
        let top = h.layer_count() - 1;
        let tops = members_at(&h, top, 0);
        assert_eq!(tops, vec![vec![1, 2, 3, 4, 5, 6]]);
        let c = h.clusters_at(top, 0).next().unwrap();
        assert_eq!(c.leader, Some(ShardId(3)));
    }

    #[test]
    fn uniform_hierarchy_is_two_layers() {
        let t = Topology::uniform(5).unwrap();
        let h = ClusterHierarchy::build(&t).unwrap();
        assert_eq!(h.layer_count(), 2);
        let top = h.clusters_at(1, 0).next().unwrap();
        assert_eq!(top.members.len(), 5);
        assert_eq!(top.leader, Some(ShardId(1)));
        assert_eq!(top.diameter, 1);
    }

    #[test]
    fn single_shard_hierarchy() {
        let (_, h) = line(1);
        assert_eq!(h.layer_count(), 1);
        assert_eq!(h.home_cluster(ShardId(1), 0), ClusterId(0));
    }

    #[test]
    fn external_clusters_are_validated() {
        let t = Topology::line(2).unwrap();
        let bad = vec![Cluster {
            layer: 0,
            sublayer: 0,
            members: vec![ShardId(1)],
            leader: Some(ShardId(2)),
            diameter: 0,
        }];
        assert!(ClusterHierarchy::from_clusters(&t, bad).is_err());
    }
}
