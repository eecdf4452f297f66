//! Synchronous round engine: message transport with per-edge delays,
//! scheduler stepping, injection delivery, and metrics capture.
//!
//! Every round executes in a fixed sub-order: deliver due messages, step
//! the scheduler (commit actions before scheduling actions), then apply
//! this round's injections. All state transitions are deterministic
//! functions of the configuration and seed.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::adversary::InjectionTrace;
use crate::fds::Height;
use crate::metrics::{MetricsTrace, RoundSample, TxnRecord};
use crate::model::{
    AccountBook, Ledger, ShardId, SubOutcome, Transaction, TxnId, TxnStatus,
};
use crate::topology::Topology;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("this scheduler requires a uniform topology")]
    NonUniformTopology,
    #[error("trace refers to unknown account {0}")]
    UnknownAccount(u64),
    #[error("trace refers to shard {0} outside 1..={1}")]
    ShardOutOfRange(u32, u32),
    #[error("duplicate transaction id {0} in trace")]
    DuplicateTxn(u64),
    #[error("transaction id 0 is reserved")]
    ZeroTxnId,
    #[error("fail probability must lie in [0, 1), got {0}")]
    BadFailProbability(f64),
    #[error("layer {layer} epoch of {epoch} rounds cannot fit a schedule round-trip ({needed})")]
    EpochTooShort { layer: u32, epoch: u64, needed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MessageKind {
    TxnToLeader,
    ColoredTxn,
    SubTxn,
    Vote,
    Confirm,
}

#[derive(Debug, Clone)]
pub enum Payload {
    /// Home shard ships its pending batch to the epoch leader.
    Txns(Vec<TxnId>),
    /// Leader returns color assignments to a home shard.
    Colors(Vec<(TxnId, u32)>),
    /// Home shard dispatches subtransactions for one commit slot.
    Subs(Vec<TxnId>),
    /// Destination's vote per subtransaction.
    Votes(Vec<(TxnId, bool)>),
    /// Commit/abort confirmation; destinations finalize on receipt.
    Confirms(Vec<(TxnId, bool)>),
    /// Cluster-scoped transaction hand-off (distributed scheduler).
    ClusterTxns { cluster: usize, txns: Vec<TxnId> },
    /// Cluster-scoped subtransaction schedule entries, integrated at `gate`.
    ClusterSubs {
        cluster: usize,
        gate: u64,
        subs: Vec<(TxnId, Height, bool)>,
    },
    /// Cluster-scoped votes carrying the height version they refer to.
    ClusterVotes {
        cluster: usize,
        votes: Vec<(TxnId, bool, u64)>,
    },
    /// Confirmations with a designated apply round for atomic commits.
    ClusterConfirms {
        apply_round: u64,
        confirms: Vec<(TxnId, bool)>,
    },
}

impl Payload {
    pub fn kind(&self) -> MessageKind {
        match self {
            Payload::Txns(_) | Payload::ClusterTxns { .. } => MessageKind::TxnToLeader,
            Payload::Colors(_) => MessageKind::ColoredTxn,
            Payload::Subs(_) | Payload::ClusterSubs { .. } => MessageKind::SubTxn,
            Payload::Votes(_) | Payload::ClusterVotes { .. } => MessageKind::Vote,
            Payload::Confirms(_) | Payload::ClusterConfirms { .. } => MessageKind::Confirm,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Message {
    pub src: ShardId,
    pub dst: ShardId,
    pub send_round: u64,
    pub deliver_round: u64,
    pub payload: Payload,
}

/// In-flight messages keyed by delivery round. Insertion order is
/// deterministic, which keeps delivery order deterministic.
#[derive(Debug, Default)]
struct Transport {
    queue: BTreeMap<u64, Vec<Message>>,
}

impl Transport {
    fn send(&mut self, msg: Message) {
        debug_assert!(msg.deliver_round > msg.send_round);
        self.queue.entry(msg.deliver_round).or_default().push(msg);
    }

    fn take(&mut self, round: u64) -> Vec<Message> {
        self.queue.remove(&round).unwrap_or_default()
    }
}

/// Shared simulation state the schedulers act on.
pub struct World {
    pub topology: Topology,
    pub book: AccountBook,
    txns: BTreeMap<TxnId, Transaction>,
    ledgers: Vec<Ledger>,
    transport: Transport,
    outcome_rng: ChaCha8Rng,
    fail_prob: f64,
    // Finalization accounting.
    remaining: BTreeMap<TxnId, (u64, bool, usize)>, // (round, committed, left)
    finalized_this_round: Vec<u32>,
    capacity_violations: u64,
    // Status counters for conservation checks and metrics.
    count_pending: u64,
    count_scheduled: u64,
    count_committed: u64,
    count_aborted: u64,
}

impl World {
    fn new(topology: Topology, book: AccountBook, seed: u64, fail_prob: f64) -> World {
        let s = topology.shards();
        World {
            ledgers: topology.shard_ids().map(Ledger::new).collect(),
            topology,
            book,
            txns: BTreeMap::new(),
            transport: Transport::default(),
            outcome_rng: ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15),
            fail_prob,
            remaining: BTreeMap::new(),
            finalized_this_round: vec![0; s as usize],
            capacity_violations: 0,
            count_pending: 0,
            count_scheduled: 0,
            count_committed: 0,
            count_aborted: 0,
        }
    }

    pub fn txn(&self, id: TxnId) -> &Transaction {
        &self.txns[&id]
    }

    pub fn txn_ids(&self) -> impl Iterator<Item = TxnId> + '_ {
        self.txns.keys().copied()
    }

    pub fn ledger(&self, shard: ShardId) -> &Ledger {
        &self.ledgers[(shard.0 - 1) as usize]
    }

    pub fn distance(&self, a: ShardId, b: ShardId) -> u32 {
        self.topology.distance(a, b)
    }

    /// Ships a message; `src != dst` (local hand-offs never hit the wire).
    pub fn send(&mut self, src: ShardId, dst: ShardId, round: u64, payload: Payload) {
        let dist = self.topology.distance(src, dst) as u64;
        assert!(dist > 0, "self-sends are handled locally");
        self.transport.send(Message {
            src,
            dst,
            send_round: round,
            deliver_round: round + dist,
            payload,
        });
    }

    pub fn set_scheduled(&mut self, id: TxnId) {
        let txn = self.txns.get_mut(&id).expect("unknown txn scheduled");
        if txn.status == TxnStatus::Pending {
            txn.status = TxnStatus::Scheduled;
            self.count_pending -= 1;
            self.count_scheduled += 1;
        }
    }

    /// Returns a just-aborted txn to the pending state (abort-retry path).
    pub fn set_pending_again(&mut self, id: TxnId) {
        let txn = self.txns.get_mut(&id).expect("unknown txn");
        debug_assert_eq!(txn.status, TxnStatus::Aborted);
        txn.status = TxnStatus::Pending;
        txn.commit_round = None;
        self.count_aborted -= 1;
        self.count_pending += 1;
    }

    /// Applies one subtransaction finalization at `shard`. Returns the
    /// transaction outcome once every destination has finalized.
    pub fn finalize_sub(
        &mut self,
        id: TxnId,
        shard: ShardId,
        commit: bool,
        round: u64,
    ) -> Option<bool> {
        if commit {
            // Per-shard capacity: at most one subtransaction commits per
            // shard per round. Abort drops do not occupy the slot.
            let slot = &mut self.finalized_this_round[(shard.0 - 1) as usize];
            *slot += 1;
            if *slot > 1 {
                self.capacity_violations += 1;
            }
            self.ledgers[(shard.0 - 1) as usize]
                .append(id, round)
                .expect("ledger append out of order");
        }
        let dest_count = self.txns[&id].destination_count();
        let entry = self.remaining.entry(id).or_insert((round, commit, dest_count));
        assert_eq!(entry.0, round, "subtransactions of {id} finalize at different rounds");
        assert_eq!(entry.1, commit, "subtransactions of {id} disagree on the outcome");
        entry.2 -= 1;
        if entry.2 == 0 {
            self.remaining.remove(&id);
            let txn = self.txns.get_mut(&id).expect("unknown txn finalized");
            debug_assert_eq!(txn.status, TxnStatus::Scheduled);
            self.count_scheduled -= 1;
            if commit {
                txn.status = TxnStatus::Committed;
                txn.commit_round = Some(round);
                self.count_committed += 1;
            } else {
                txn.status = TxnStatus::Aborted;
                txn.commit_round = Some(round);
                self.count_aborted += 1;
            }
            Some(commit)
        } else {
            None
        }
    }

    fn begin_round(&mut self) {
        self.finalized_this_round.iter_mut().for_each(|c| *c = 0);
    }

    fn materialize(&mut self, spec: &crate::adversary::TxnSpec, round: u64) -> Result<TxnId, EngineError> {
        if spec.id == 0 {
            return Err(EngineError::ZeroTxnId);
        }
        let id = TxnId(spec.id);
        if self.txns.contains_key(&id) {
            return Err(EngineError::DuplicateTxn(spec.id));
        }
        if spec.home < 1 || spec.home > self.topology.shards() {
            return Err(EngineError::ShardOutOfRange(spec.home, self.topology.shards()));
        }
        let accounts: Result<Vec<_>, _> = spec
            .accounts
            .iter()
            .map(|&a| self.book.account(a).ok_or(EngineError::UnknownAccount(a)))
            .collect();
        let mut txn = Transaction::new(id, ShardId(spec.home), accounts?, round);
        if self.fail_prob > 0.0 {
            for dest in txn.destinations() {
                if self.outcome_rng.gen::<f64>() < self.fail_prob {
                    let outcome = if self.outcome_rng.gen::<bool>() {
                        SubOutcome::ConditionFailed
                    } else {
                        SubOutcome::Invalid
                    };
                    txn.failing.insert(dest, outcome);
                }
            }
        }
        self.txns.insert(id, txn);
        self.count_pending += 1;
        Ok(id)
    }
}

/// A round-driven scheduler.
pub trait Scheduler {
    /// Process one round: `inbox` holds the messages delivered this round.
    fn step(&mut self, round: u64, inbox: Vec<Message>, world: &mut World);
    /// Accept transactions injected at the end of `round`.
    fn on_inject(&mut self, round: u64, ids: &[TxnId], world: &mut World);
    /// Home-shard pending queue lengths, indexed by shard - 1.
    fn home_queues(&self) -> Vec<u32>;
    /// Leader scheduled-queue lengths, indexed by shard - 1.
    fn leader_queues(&self) -> Vec<u32>;
    /// Per-transaction color/height records to fold into metrics.
    fn fill_record(&self, id: TxnId, record: &mut TxnRecord);
    /// Completed-epoch log (leader-based scheduler only).
    fn epochs(&self) -> Vec<crate::metrics::EpochRecord> {
        Vec::new()
    }
}

pub struct SimParams {
    pub topology: Topology,
    pub book: AccountBook,
    pub rounds: u64,
    pub seed: u64,
    pub fail_prob: f64,
}

pub struct RunOutput {
    pub metrics: MetricsTrace,
    pub ledgers: Vec<Ledger>,
    pub txns: BTreeMap<TxnId, Transaction>,
    pub capacity_violations: u64,
}

impl RunOutput {
    pub fn ledger(&self, shard: ShardId) -> &Ledger {
        &self.ledgers[(shard.0 - 1) as usize]
    }
}

/// Drives `scheduler` over `trace` for the configured number of rounds.
pub fn run_simulation(
    params: SimParams,
    trace: &InjectionTrace,
    mut scheduler: Box<dyn Scheduler>,
) -> Result<RunOutput, EngineError> {
    if !(0.0..1.0).contains(&params.fail_prob) {
        return Err(EngineError::BadFailProbability(params.fail_prob));
    }
    let mut world = World::new(params.topology, params.book, params.seed, params.fail_prob);
    let mut metrics = MetricsTrace::default();
    // Round-0 injections form the initial pending queues.
    let mut ids = Vec::new();
    for spec in trace.at(0) {
        ids.push(world.materialize(spec, 0)?);
    }
    if !ids.is_empty() {
        scheduler.on_inject(0, &ids, &mut world);
    }
    for round in 1..=params.rounds {
        world.begin_round();
        let inbox = world.transport.take(round);
        scheduler.step(round, inbox, &mut world);
        ids.clear();
        for spec in trace.at(round) {
            ids.push(world.materialize(spec, round)?);
        }
        if !ids.is_empty() {
            scheduler.on_inject(round, &ids, &mut world);
        }
        debug_assert_eq!(
            world.count_pending
                + world.count_scheduled
                + world.count_committed
                + world.count_aborted,
            world.txns.len() as u64,
            "status conservation at round {round}"
        );
        metrics.rounds.push(RoundSample {
            round,
            pending_total: world.count_pending + world.count_scheduled,
            in_flight: world.count_scheduled,
            committed_cum: world.count_committed,
            aborted_cum: world.count_aborted,
            home_queues: scheduler.home_queues(),
            leader_queues: scheduler.leader_queues(),
        });
    }
    for (&id, txn) in &world.txns {
        let mut record = TxnRecord {
            injection_round: txn.injection_round,
            status: txn.status,
            commit_round: txn.commit_round,
            color: None,
            height: None,
            queued_round: None,
            height_round: None,
        };
        scheduler.fill_record(id, &mut record);
        metrics.txns.insert(id, record);
    }
    metrics.epochs = scheduler.epochs();
    Ok(RunOutput {
        metrics,
        ledgers: world.ledgers,
        txns: world.txns,
        capacity_violations: world.capacity_violations,
    })
}
