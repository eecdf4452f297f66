//! Fully distributed scheduler for the non-uniform model.
//!
//! Each transaction is handled by the leader of its home cluster. Layer
//! `i` runs fixed epochs of `E_i = E0 * 2^i` rounds, aligned so every
//! layer-i boundary is also a layer-(i-1) boundary. Within an epoch of a
//! cluster with diameter `d`, phase gates sit at offsets 0, `d`, and
//! `2d`: homes hand off at the boundary, the leader colors at `d` and
//! dispatches subtransactions, and destinations integrate their schedule
//! queues at `2d`, ordering entries by height `(t_end, layer, sublayer,
//! color)`. Every other epoch ends on a rescheduling-period boundary, at
//! which the leader recolors everything still in its queue.
//!
//! Committing runs in parallel, gated on the same per-level grid: a
//! destination votes for its queue head at the level's next gate, the
//! leader confirms once all (version-current) votes arrive, and commits
//! apply at a designated round `gate + d` so all destinations finalize a
//! transaction in the same round.

use std::collections::BTreeMap;

use crate::cluster::{ClusterHierarchy, ClusterId};
use crate::coloring::greedy_color_by_id;
use crate::engine::{EngineError, Message, Payload, Scheduler, World};
use crate::metrics::{MetricsTrace, TxnRecord};
use crate::model::{build_conflict_graph, ShardId, TxnId};
use crate::rate::Rate;

/// Commit priority of a scheduled transaction; lexicographic order,
/// lowest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Height {
    pub t_end: u64,
    pub layer: u32,
    pub sublayer: u32,
    pub color: u32,
}

/// Base epoch length `E0 = c * ceil(log2 s)` (at least 2).
pub fn epoch_base(c: u64, s: u32) -> u64 {
    (c * ceil_log2(s).max(1)).max(2)
}

pub(crate) fn ceil_log2(n: u32) -> u64 {
    match n {
        0 | 1 => 0,
        _ => (u32::BITS - (n - 1).leading_zeros()) as u64,
    }
}

struct ClusterSched {
    leader: ShardId,
    layer: u32,
    sublayer: u32,
    diameter: u64,
    epoch_len: u64,
    sch_ldr: BTreeMap<TxnId, Height>,
    inbox_new: Vec<TxnId>,
    /// voter -> (commit, height version) per transaction.
    votes: BTreeMap<TxnId, BTreeMap<ShardId, (bool, u64)>>,
}

impl ClusterSched {
    fn is_gate(&self, round: u64) -> bool {
        self.diameter == 0 || (round % self.epoch_len).is_multiple_of(self.diameter)
    }
}

#[derive(Default)]
struct DestState {
    /// Schedule queue ordered by (height, txn); value = voted flag.
    queue: BTreeMap<(Height, TxnId), bool>,
    index: BTreeMap<TxnId, Height>,
    /// The one subtransaction this destination has a live vote out for.
    /// Strict head-of-line: no other entry may vote until it finalizes
    /// (or its vote is voided by a height rewrite).
    outstanding: Option<TxnId>,
    /// Subtransaction arrivals held until their integration gate.
    staged: BTreeMap<u64, Vec<(TxnId, Height, bool)>>,
    /// Confirmations held until their designated apply round.
    confirms: BTreeMap<u64, Vec<(TxnId, bool)>>,
}

pub struct FdsScheduler {
    s: u32,
    epoch_base: u64,
    retry_aborts: bool,
    hierarchy: ClusterHierarchy,
    /// Per home shard: transactions awaiting pickup, bucketed by cluster.
    home_pending: Vec<BTreeMap<ClusterId, Vec<TxnId>>>,
    assignment: BTreeMap<TxnId, ClusterId>,
    clusters: BTreeMap<ClusterId, ClusterSched>,
    dests: Vec<DestState>,
    final_heights: BTreeMap<TxnId, (Height, u64)>,
    queued_rounds: BTreeMap<TxnId, u64>,
}

impl FdsScheduler {
    pub fn new(
        hierarchy: ClusterHierarchy,
        epoch_base: u64,
        retry_aborts: bool,
    ) -> Result<FdsScheduler, EngineError> {
        let s = hierarchy.shards();
        for (_, c) in hierarchy.leadered() {
            let epoch_len = epoch_base << c.layer.min(62);
            if epoch_len < 2 * c.diameter as u64 + 2 {
                return Err(EngineError::EpochTooShort {
                    layer: c.layer,
                    epoch: epoch_len,
                    needed: 2 * c.diameter as u64 + 2,
                });
            }
        }
        Ok(FdsScheduler {
            s,
            epoch_base,
            retry_aborts,
            hierarchy,
            home_pending: vec![BTreeMap::new(); s as usize],
            assignment: BTreeMap::new(),
            clusters: BTreeMap::new(),
            dests: (0..s).map(|_| DestState::default()).collect(),
            final_heights: BTreeMap::new(),
            queued_rounds: BTreeMap::new(),
        })
    }

    fn cluster_state(&mut self, id: ClusterId) -> &mut ClusterSched {
        let hierarchy = &self.hierarchy;
        let epoch_base = self.epoch_base;
        self.clusters.entry(id).or_insert_with(|| {
            let c = hierarchy.cluster(id);
            ClusterSched {
                leader: c.leader.expect("home clusters always have a leader"),
                layer: c.layer,
                sublayer: c.sublayer,
                diameter: c.diameter as u64,
                epoch_len: epoch_base << c.layer.min(62),
                sch_ldr: BTreeMap::new(),
                inbox_new: Vec::new(),
                votes: BTreeMap::new(),
            }
        })
    }

    fn route(&mut self, inbox: Vec<Message>) {
        for msg in inbox {
            match msg.payload {
                Payload::ClusterTxns { cluster, txns } => {
                    self.cluster_state(ClusterId(cluster)).inbox_new.extend(txns);
                }
                Payload::ClusterSubs { gate, subs, .. } => {
                    let dest = &mut self.dests[(msg.dst.0 - 1) as usize];
                    dest.staged.entry(gate).or_default().extend(subs);
                }
                Payload::ClusterVotes { cluster, votes } => {
                    let state = self.cluster_state(ClusterId(cluster));
                    for (txn, commit, version) in votes {
                        // Stragglers for already-confirmed work are void.
                        if state.sch_ldr.contains_key(&txn) {
                            state
                                .votes
                                .entry(txn)
                                .or_default()
                                .insert(msg.src, (commit, version));
                        }
                    }
                }
                Payload::ClusterConfirms {
                    apply_round,
                    confirms,
                } => {
                    let dest = &mut self.dests[(msg.dst.0 - 1) as usize];
                    dest.confirms.entry(apply_round).or_default().extend(confirms);
                }
                other => unreachable!("unexpected payload for this scheduler: {:?}", other.kind()),
            }
        }
    }

    /// Step 1: each destination votes for an idle queue head at the
    /// head's level gate.
    fn vote_heads(&mut self, round: u64, world: &mut World) {
        for shard in 1..=self.s {
            let dest = ShardId(shard);
            let Some((&(height, txn), &voted)) = self.dests[(shard - 1) as usize].queue.first_key_value()
            else {
                continue;
            };
            if voted {
                continue;
            }
            let outstanding = self.dests[(shard - 1) as usize].outstanding;
            if outstanding.is_some_and(|o| o != txn) {
                continue;
            }
            let cid = self.assignment[&txn];
            let state = self.clusters.get(&cid).expect("cluster state exists");
            if !state.is_gate(round) {
                continue;
            }
            let commit = world.txn(txn).outcome_at(dest).votes_commit();
            let leader = state.leader;
            let dest_state = &mut self.dests[(shard - 1) as usize];
            *dest_state.queue.get_mut(&(height, txn)).unwrap() = true;
            dest_state.outstanding = Some(txn);
            if leader == dest {
                self.cluster_state(cid)
                    .votes
                    .entry(txn)
                    .or_default()
                    .insert(dest, (commit, height.t_end));
            } else {
                world.send(
                    dest,
                    leader,
                    round,
                    Payload::ClusterVotes {
                        cluster: cid.0,
                        votes: vec![(txn, commit, height.t_end)],
                    },
                );
            }
        }
    }

    /// Step 2: leaders with complete (or abort-bearing) vote sets send
    /// confirmations stamped with a common apply round.
    fn confirm_ready(&mut self, round: u64, world: &mut World) {
        let cids: Vec<ClusterId> = self.clusters.keys().copied().collect();
        for cid in cids {
            let state = self.clusters.get_mut(&cid).expect("cluster state");
            if !state.is_gate(round) {
                continue;
            }
            let mut decided: Vec<(TxnId, bool)> = Vec::new();
            for (&txn, height) in &state.sch_ldr {
                let version = height.t_end;
                let Some(votes) = state.votes.get(&txn) else {
                    continue;
                };
                let current: Vec<bool> = votes
                    .values()
                    .filter(|&&(_, v)| v == version)
                    .map(|&(commit, _)| commit)
                    .collect();
                if current.iter().any(|&c| !c) {
                    decided.push((txn, false));
                } else if current.len() == world.txn(txn).destination_count() {
                    decided.push((txn, true));
                }
            }
            if decided.is_empty() {
                continue;
            }
            let leader = state.leader;
            let apply_round = round + state.diameter;
            for &(txn, _) in &decided {
                state.sch_ldr.remove(&txn);
                state.votes.remove(&txn);
            }
            let mut per_dest: BTreeMap<ShardId, Vec<(TxnId, bool)>> = BTreeMap::new();
            for &(txn, commit) in &decided {
                for dest in world.txn(txn).destinations() {
                    per_dest.entry(dest).or_default().push((txn, commit));
                }
            }
            for (dest, confirms) in per_dest {
                if dest == leader {
                    self.dests[(dest.0 - 1) as usize]
                        .confirms
                        .entry(apply_round)
                        .or_default()
                        .extend(confirms);
                } else {
                    world.send(
                        leader,
                        dest,
                        round,
                        Payload::ClusterConfirms {
                            apply_round,
                            confirms,
                        },
                    );
                }
            }
        }
    }

    /// Step 3: apply confirmations due this round; all destinations of a
    /// transaction share the same apply round.
    fn apply_confirms(&mut self, round: u64, world: &mut World) {
        for shard in 1..=self.s {
            let Some(confirms) = self.dests[(shard - 1) as usize].confirms.remove(&round) else {
                continue;
            };
            for (txn, commit) in confirms {
                let dest_state = &mut self.dests[(shard - 1) as usize];
                if let Some(height) = dest_state.index.remove(&txn) {
                    dest_state.queue.remove(&(height, txn));
                }
                if dest_state.outstanding == Some(txn) {
                    dest_state.outstanding = None;
                }
                if let Some(committed) = world.finalize_sub(txn, ShardId(shard), commit, round) {
                    if !committed && self.retry_aborts {
                        world.set_pending_again(txn);
                        let home = world.txn(txn).home;
                        let cid = self.assignment[&txn];
                        self.home_pending[(home.0 - 1) as usize]
                            .entry(cid)
                            .or_default()
                            .push(txn);
                    }
                }
            }
        }
    }

    /// Phase 1: at a layer boundary, homes hand pending transactions of
    /// that level to their cluster leader.
    fn boundary_sends(&mut self, round: u64, world: &mut World) {
        for shard in 1..=self.s {
            let due: Vec<ClusterId> = self.home_pending[(shard - 1) as usize]
                .keys()
                .copied()
                .filter(|cid| {
                    let c = self.hierarchy.cluster(*cid);
                    round.is_multiple_of(self.epoch_base << c.layer.min(62))
                })
                .collect();
            for cid in due {
                let txns = self.home_pending[(shard - 1) as usize]
                    .remove(&cid)
                    .unwrap_or_default();
                if txns.is_empty() {
                    continue;
                }
                let leader = self.hierarchy.cluster(cid).leader.expect("leadered");
                if leader.0 == shard {
                    self.cluster_state(cid).inbox_new.extend(txns);
                } else {
                    world.send(
                        ShardId(shard),
                        leader,
                        round,
                        Payload::ClusterTxns {
                            cluster: cid.0,
                            txns,
                        },
                    );
                }
            }
        }
    }

    /// Phase 2: at offset `d` into an epoch the leader colors new
    /// arrivals (all uncommitted work on rescheduling boundaries), then
    /// dispatches schedule entries toward the destinations.
    fn color_and_dispatch(&mut self, round: u64, world: &mut World) {
        let cids: Vec<ClusterId> = self.clusters.keys().copied().collect();
        for cid in cids {
            let state = self.clusters.get_mut(&cid).expect("cluster state");
            let offset = round % state.epoch_len;
            if offset != state.diameter {
                continue;
            }
            let epoch_start = round - offset;
            let t_end = epoch_start + state.epoch_len;
            // Every other epoch ends on a rescheduling-period boundary
            // (P_k with k > layer divides t_end).
            let rescheduling = (epoch_start / state.epoch_len) % 2 == 1;
            let mut batch: Vec<TxnId> = std::mem::take(&mut state.inbox_new);
            if rescheduling {
                // Recolor everything scheduled but not yet confirmed.
                // Outstanding votes for rewritten heights become stale
                // (version-filtered) and the destinations re-vote, so a
                // recolor can never race an in-flight confirmation.
                batch.extend(state.sch_ldr.keys().copied());
            }
            if batch.is_empty() {
                continue;
            }
            batch.sort();
            let graph = build_conflict_graph(batch.iter().map(|&id| world.txn(id)));
            let coloring = greedy_color_by_id(&graph);
            let layer = state.layer;
            let sublayer = state.sublayer;
            let leader = state.leader;
            let gate = epoch_start + 2 * state.diameter;
            let mut per_dest: BTreeMap<ShardId, Vec<(TxnId, Height, bool)>> = BTreeMap::new();
            for &txn in &batch {
                let height = Height {
                    t_end,
                    layer,
                    sublayer,
                    color: coloring.color_of(txn).expect("colored"),
                };
                let update = state.sch_ldr.insert(txn, height).is_some();
                if update {
                    // Any outstanding votes refer to the superseded height.
                    state.votes.remove(&txn);
                }
                for dest in world.txn(txn).destinations() {
                    per_dest.entry(dest).or_default().push((txn, height, update));
                }
            }
            for &txn in &batch {
                world.set_scheduled(txn);
            }
            for (dest, subs) in per_dest {
                if dest == leader {
                    self.dests[(dest.0 - 1) as usize]
                        .staged
                        .entry(gate)
                        .or_default()
                        .extend(subs);
                } else {
                    world.send(
                        leader,
                        dest,
                        round,
                        Payload::ClusterSubs {
                            cluster: cid.0,
                            gate,
                            subs,
                        },
                    );
                }
            }
        }
    }

    /// Phase 3: destinations fold staged entries into their schedule
    /// queues at the integration gate and keep them height-sorted.
    fn integrate_schedules(&mut self, round: u64) {
        for shard in 1..=self.s {
            let dest = &mut self.dests[(shard - 1) as usize];
            let Some(subs) = dest.staged.remove(&round) else {
                continue;
            };
            for (txn, height, update) in subs {
                if update {
                    let old = dest.index.remove(&txn).expect("updated entry exists");
                    dest.queue.remove(&(old, txn));
                    // A rewritten height voids any live vote for the entry.
                    if dest.outstanding == Some(txn) {
                        dest.outstanding = None;
                    }
                }
                dest.queue.insert((height, txn), false);
                dest.index.insert(txn, height);
                self.final_heights.insert(txn, (height, round));
                self.queued_rounds.entry(txn).or_insert(round);
            }
        }
    }
}

impl Scheduler for FdsScheduler {
    fn step(&mut self, round: u64, inbox: Vec<Message>, world: &mut World) {
        self.route(inbox);
        // Committing (2b) before scheduling (2a) within each round.
        self.vote_heads(round, world);
        self.confirm_ready(round, world);
        self.apply_confirms(round, world);
        self.boundary_sends(round, world);
        self.color_and_dispatch(round, world);
        self.integrate_schedules(round);
    }

    fn on_inject(&mut self, _round: u64, ids: &[TxnId], world: &mut World) {
        for &id in ids {
            let txn = world.txn(id);
            let cid = self.hierarchy.home_cluster_of(txn, &world.topology);
            let home = txn.home;
            self.assignment.insert(id, cid);
            self.cluster_state(cid);
            self.home_pending[(home.0 - 1) as usize]
                .entry(cid)
                .or_default()
                .push(id);
        }
    }

    fn home_queues(&self) -> Vec<u32> {
        self.home_pending
            .iter()
            .map(|m| m.values().map(|v| v.len() as u32).sum())
            .collect()
    }

    fn leader_queues(&self) -> Vec<u32> {
        let mut out = vec![0u32; self.s as usize];
        for state in self.clusters.values() {
            out[(state.leader.0 - 1) as usize] += state.sch_ldr.len() as u32;
        }
        out
    }

    fn fill_record(&self, id: TxnId, record: &mut TxnRecord) {
        if let Some(&(height, round)) = self.final_heights.get(&id) {
            record.height = Some(height);
            record.height_round = Some(round);
        }
        record.queued_round = self.queued_rounds.get(&id).copied();
    }
}

/// Outcome of auditing one run against the distributed-scheduler bounds.
#[derive(Debug, Clone)]
pub struct FdsStabilityReport {
    pub precondition_holds: bool,
    pub rate_bound: Rate,
    pub pending_bound: u64,
    pub latency_bound: u64,
    /// Rescheduling-period window used for the arrivals check, in rounds.
    pub period: u64,
    pub max_pending: u64,
    pub max_latency: u64,
    pub max_window_arrivals: u64,
    pub violation: Option<String>,
}

impl FdsStabilityReport {
    pub fn ok(&self) -> bool {
        self.violation.is_none()
    }
}

/// Rate threshold `1/(60 * d * H2 * min(k, ceil(sqrt(s))))` under which
/// all levels stay within their scheduling windows.
pub fn fds_stable_rate(d: u64, sublayers: u32, k: u32, s: u32) -> Rate {
    let min_ks = (k as u64).min(crate::bds::ceil_sqrt(s) as u64);
    Rate::recip_of(60 * d.max(1) * sublayers as u64 * min_ks)
}

/// Checks the queue bound, the per-period arrival bound (at most `2bs`
/// new transactions per rescheduling period), and — via `c1` — the
/// latency bound `2 * c1 * b * d * log^2(s) * min(k, ceil(sqrt(s)))`.
#[allow(clippy::too_many_arguments)]
pub fn fds_check_stability_invariants(
    metrics: &MetricsTrace,
    rho: Rate,
    b: u64,
    k: u32,
    s: u32,
    d: u64,
    sublayers: u32,
    c1: u64,
) -> FdsStabilityReport {
    let rate_bound = fds_stable_rate(d, sublayers, k, s);
    let precondition_holds = rho <= rate_bound;
    let pending_bound = 4 * b * s as u64;
    let log_s = ceil_log2(s).max(1);
    let latency_bound =
        2 * c1 * b * d.max(1) * log_s * log_s * (k as u64).min(crate::bds::ceil_sqrt(s) as u64);
    // Rescheduling-period window: smallest P_k at least as long as the
    // top-level scheduling interval tau = 30*b*d*H2*min(k, ceil_sqrt(s)).
    let tau = 30 * b * d.max(1) * sublayers as u64 * (k as u64).min(crate::bds::ceil_sqrt(s) as u64);
    let e0 = epoch_base(4, s);
    let mut period = e0;
    while period < tau {
        period *= 2;
    }
    let mut window_arrivals: BTreeMap<u64, u64> = BTreeMap::new();
    for record in metrics.txns.values() {
        *window_arrivals.entry(record.injection_round / period).or_default() += 1;
    }
    let max_window_arrivals = window_arrivals.values().copied().max().unwrap_or(0);
    let max_pending = metrics.max_pending();
    let max_latency = metrics.latencies().max().unwrap_or(0);
    let mut violation = None;
    if precondition_holds {
        if max_window_arrivals > 2 * b * s as u64 {
            violation = Some(format!(
                "{} arrivals in one rescheduling period exceed {}",
                max_window_arrivals,
                2 * b * s as u64
            ));
        } else if max_pending > pending_bound {
            violation = Some(format!("pending {max_pending} exceeds {pending_bound}"));
        } else if max_latency > latency_bound {
            violation = Some(format!("latency {max_latency} exceeds {latency_bound}"));
        }
    }
    FdsStabilityReport {
        precondition_holds,
        rate_bound,
        pending_bound,
        latency_bound,
        period,
        max_pending,
        max_latency,
        max_window_arrivals,
        violation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{InjectionTrace, TxnSpec};
    use crate::engine::{run_simulation, RunOutput, SimParams};
    use crate::model::{AccountBook, TxnStatus};
    use crate::topology::Topology;

    pub(crate) fn line_sim(s: u32, rounds: u64, trace: &InjectionTrace) -> RunOutput {
        let topology = Topology::line(s).unwrap();
        let hierarchy = ClusterHierarchy::build(&topology).unwrap();
        let sched = FdsScheduler::new(hierarchy, epoch_base(4, s), false).unwrap();
        let params = SimParams {
            topology,
            book: AccountBook::one_per_shard(s),
            rounds,
            seed: 7,
            fail_prob: 0.0,
        };
        run_simulation(params, trace, Box::new(sched)).unwrap()
    }

    fn spec(id: u64, home: u32, accounts: &[u64]) -> TxnSpec {
        TxnSpec {
            id,
            home,
            accounts: accounts.to_vec(),
        }
    }

    #[test]
    fn epoch_base_values() {
        assert_eq!(epoch_base(4, 8), 12);
        assert_eq!(epoch_base(4, 64), 24);
        assert_eq!(epoch_base(4, 1), 4);
        assert_eq!(ceil_log2(16), 4);
        assert_eq!(ceil_log2(17), 5);
    }

    #[test]
    fn height_order_is_lexicographic() {
        let h = |t, i, j, c| Height {
            t_end: t,
            layer: i,
            sublayer: j,
            color: c,
        };
        assert!(h(10, 3, 1, 9) < h(11, 0, 0, 0));
        assert!(h(10, 1, 0, 0) < h(10, 2, 0, 0));
        assert!(h(10, 1, 0, 3) < h(10, 1, 1, 0));
        assert!(h(10, 1, 1, 0) < h(10, 1, 1, 2));
    }

    /// Single transaction on its own shard: layer-0 cluster, committed one
    /// round after it reaches the schedule queue.
    #[test]
    fn singleton_commits_one_round_after_queueing() {
        let mut trace = InjectionTrace::default();
        trace.push(3, spec(1, 2, &[2]));
        let out = line_sim(8, 40, &trace);
        // E0 = 12; injected at 3, picked up at boundary 12, queued at the
        // same gate (d = 0), committed at 13.
        assert_eq!(out.txns[&TxnId(1)].commit_round, Some(13));
        assert_eq!(out.metrics.txns[&TxnId(1)].height.unwrap().layer, 0);
    }

    /// Two conflicting transactions in one cluster get distinct colors and
    /// commit in color order at every shared destination.
    #[test]
    fn conflicting_txns_serialize_in_color_order() {
        let mut trace = InjectionTrace::default();
        trace.push(1, spec(1, 1, &[1, 2]));
        trace.push(1, spec(2, 1, &[1, 2]));
        let out = line_sim(8, 80, &trace);
        let h1 = out.metrics.txns[&TxnId(1)].height.unwrap();
        let h2 = out.metrics.txns[&TxnId(2)].height.unwrap();
        assert_eq!((h1.layer, h1.sublayer), (1, 0));
        assert_ne!(h1.color, h2.color);
        let c1 = out.txns[&TxnId(1)].commit_round.unwrap();
        let c2 = out.txns[&TxnId(2)].commit_round.unwrap();
        assert!((h1 < h2) == (c1 < c2));
        for shard in [1u32, 2] {
            let l = out.ledger(ShardId(shard));
            assert_eq!(l.entries().len(), 2);
            assert_eq!(l.position_of(TxnId(1)).unwrap() < l.position_of(TxnId(2)).unwrap(), c1 < c2);
        }
        assert_eq!(out.capacity_violations, 0);
    }

    /// Destination queues are re-sorted on arrival: entries stay in
    /// height order even when higher layers were queued earlier.
    #[test]
    fn mixed_levels_commit_without_deadlock() {
        let mut trace = InjectionTrace::default();
        // Spans the whole line: top layer.
        trace.push(1, spec(1, 4, &[1, 8]));
        // Local pairs: layer 2.
        trace.push(1, spec(2, 2, &[1, 2]));
        trace.push(1, spec(3, 7, &[7, 8]));
        let out = line_sim(8, 500, &trace);
        for id in 1..=3u64 {
            assert_eq!(
                out.txns[&TxnId(id)].status,
                TxnStatus::Committed,
                "txn {id} must commit"
            );
        }
        // The long transaction conflicts with both locals through the
        // shared accounts; the pair orders must match in every ledger.
        let c1 = out.txns[&TxnId(1)].commit_round.unwrap();
        let c2 = out.txns[&TxnId(2)].commit_round.unwrap();
        let l1 = out.ledger(ShardId(1));
        assert_eq!(
            l1.position_of(TxnId(2)).unwrap() < l1.position_of(TxnId(1)).unwrap(),
            c2 < c1
        );
        assert_eq!(out.capacity_violations, 0);
    }

    #[test]
    fn abort_vote_aborts_everywhere_atomically() {
        let mut trace = InjectionTrace::default();
        trace.push(1, spec(1, 2, &[1, 2]));
        let topology = Topology::line(8).unwrap();
        let hierarchy = ClusterHierarchy::build(&topology).unwrap();
        let sched = FdsScheduler::new(hierarchy, epoch_base(4, 8), false).unwrap();
        let params = SimParams {
            topology,
            book: AccountBook::one_per_shard(8),
            rounds: 120,
            seed: 7,
            fail_prob: 0.999999,
        };
        let out = run_simulation(params, &trace, Box::new(sched)).unwrap();
        assert_eq!(out.txns[&TxnId(1)].status, TxnStatus::Aborted);
        assert!(out.ledger(ShardId(1)).entries().is_empty());
        assert!(out.ledger(ShardId(2)).entries().is_empty());
    }

    /// Rescheduling epochs rewrite heights of still-queued transactions.
    #[test]
    fn rescheduling_rewrites_heights_and_all_commit() {
        let mut trace = InjectionTrace::default();
        // A pile of mutually conflicting top-layer transactions: only one
        // commits per protocol cycle, so later ones sit in the queue long
        // enough to cross rescheduling boundaries.
        for id in 1..=15u64 {
            trace.push(1, spec(id, 4, &[1, 8]));
        }
        let out = line_sim(8, 3000, &trace);
        for id in 1..=15u64 {
            assert_eq!(out.txns[&TxnId(id)].status, TxnStatus::Committed, "txn {id}");
        }
        // Later commits carry later (rewritten) epoch tags.
        let heights: Vec<Height> = (1..=15)
            .map(|id| out.metrics.txns[&TxnId(id)].height.unwrap())
            .collect();
        let mut commits: Vec<(u64, Height)> = (1..=15)
            .map(|id| {
                (
                    out.txns[&TxnId(id)].commit_round.unwrap(),
                    out.metrics.txns[&TxnId(id)].height.unwrap(),
                )
            })
            .collect();
        commits.sort();
        assert!(heights.iter().any(|h| h.t_end > heights[0].t_end) || heights.len() == 1);
        // Commit order respects final heights.
        for pair in commits.windows(2) {
            assert!(pair[0].1 < pair[1].1);
        }
    }

    /// Sustained mixed-level load keeps draining: cross-layer arrivals
    /// can park a destination's outstanding vote behind a demoted entry,
    /// and only the rescheduling recolor (which voids stale votes and
    /// frees the slot) unblocks it. Committed counts must keep growing
    /// through the whole run.
    #[test]
    fn overloaded_queues_never_wedge() {
        use crate::adversary::{token_bucket_generator, AdversaryParams, InjectionStrategy};
        let s = 16;
        let book = AccountBook::one_per_shard(s);
        let params = AdversaryParams {
            rho: Rate::new(1, 20),
            b: 50,
            k: 4,
            seed: 1,
        };
        let trace = token_bucket_generator(
            &params,
            &book,
            s,
            8000,
            InjectionStrategy::SingleEpochBurst {
                burst_round: 17,
                burst_txns: 50,
            },
        );
        let out = line_sim(s, 8000, &trace);
        let committed_at = |round: usize| out.metrics.rounds[round - 1].committed_cum;
        for window in [(2000, 4000), (4000, 6000), (6000, 8000)] {
            assert!(
                committed_at(window.1) > committed_at(window.0),
                "no commits in rounds {:?}",
                window
            );
        }
        assert_eq!(out.capacity_violations, 0);
    }

    /// The uniform model is the distance-1 special case: a two-layer
    /// hierarchy (singletons plus one all-shard cluster) drives commits.
    #[test]
    fn runs_on_uniform_topology() {
        let topology = Topology::uniform(6).unwrap();
        let hierarchy = ClusterHierarchy::build(&topology).unwrap();
        let sched = FdsScheduler::new(hierarchy, epoch_base(4, 6), false).unwrap();
        let mut trace = InjectionTrace::default();
        trace.push(1, spec(1, 2, &[3, 5]));
        trace.push(1, spec(2, 4, &[4]));
        let params = SimParams {
            topology,
            book: AccountBook::one_per_shard(6),
            rounds: 120,
            seed: 3,
            fail_prob: 0.0,
        };
        let out = run_simulation(params, &trace, Box::new(sched)).unwrap();
        assert_eq!(out.txns[&TxnId(1)].status, TxnStatus::Committed);
        assert_eq!(out.txns[&TxnId(2)].status, TxnStatus::Committed);
        assert_eq!(out.metrics.txns[&TxnId(1)].height.unwrap().layer, 1);
        assert_eq!(out.metrics.txns[&TxnId(2)].height.unwrap().layer, 0);
    }

    /// Multi-account shards: distinct accounts on one shard still
    /// serialize through its queue without capacity violations.
    #[test]
    fn multi_account_shards_serialize() {
        let topology = Topology::line(4).unwrap();
        let hierarchy = ClusterHierarchy::build(&topology).unwrap();
        let sched = FdsScheduler::new(hierarchy, epoch_base(4, 4), false).unwrap();
        let book = AccountBook::uniform(4, 2); // accounts 2i-1, 2i on shard i
        let mut trace = InjectionTrace::default();
        // Non-conflicting transactions sharing destination shard 2.
        trace.push(1, spec(1, 2, &[3]));
        trace.push(1, spec(2, 2, &[4]));
        // A conflicting pair on account 5 (shard 3).
        trace.push(1, spec(3, 3, &[5, 1]));
        trace.push(1, spec(4, 3, &[5, 7]));
        let params = SimParams {
            topology,
            book,
            rounds: 400,
            seed: 4,
            fail_prob: 0.0,
        };
        let out = run_simulation(params, &trace, Box::new(sched)).unwrap();
        for id in 1..=4u64 {
            assert_eq!(out.txns[&TxnId(id)].status, TxnStatus::Committed, "txn {id}");
        }
        assert_eq!(out.capacity_violations, 0);
        // The same-shard pair committed at different rounds.
        assert_ne!(
            out.txns[&TxnId(1)].commit_round,
            out.txns[&TxnId(2)].commit_round
        );
    }

    #[test]
    fn fds_stability_checker_reports() {
        let metrics = MetricsTrace::default();
        let report = fds_check_stability_invariants(&metrics, Rate::new(1, 7200), 2, 4, 16, 15, 2, 1);
        assert!(report.precondition_holds);
        assert!(report.ok());
        assert_eq!(report.rate_bound, Rate::new(1, 7200));
    }
}
