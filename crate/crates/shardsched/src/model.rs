//! Core domain types: shards, accounts, transactions, subtransactions,
//! per-shard ledgers, and the conflict graph.
//!
//! A shard is modeled as a single reliable actor; one account lives on
//! exactly one shard. Every account access is treated as a write, so two
//! transactions conflict exactly when they touch a common account.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

/// 1-based shard index (`S_1 .. S_s`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ShardId(pub u32);

impl ShardId {
    pub fn index(&self) -> u32 {
        self.0
    }
}

impl std::fmt::Display for ShardId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "S{}", self.0)
    }
}

/// Opaque account identifier plus the shard that owns it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AccountId {
    pub id: u64,
    pub owner: ShardId,
}

/// Registry of accounts and their owning shards.
///
/// The default layout is one account per shard with `account i` owned by
/// `S_i`; multi-account shards are supported but not the default.
#[derive(Debug, Clone)]
pub struct AccountBook {
    owners: BTreeMap<u64, ShardId>,
    per_shard: BTreeMap<ShardId, Vec<u64>>,
}

impl AccountBook {
    /// One account per shard, `account i` on shard `S_i`.
    pub fn one_per_shard(shards: u32) -> AccountBook {
        let mut book = AccountBook {
            owners: BTreeMap::new(),
            per_shard: BTreeMap::new(),
        };
        for i in 1..=shards {
            book.insert(i as u64, ShardId(i));
        }
        book
    }

    /// `accounts_per_shard` accounts on each shard, ids assigned
    /// shard-major: shard `S_i` owns `(i-1)*m+1 ..= i*m`.
    pub fn uniform(shards: u32, accounts_per_shard: u32) -> AccountBook {
        let mut book = AccountBook {
            owners: BTreeMap::new(),
            per_shard: BTreeMap::new(),
        };
        let m = accounts_per_shard.max(1) as u64;
        for i in 1..=shards {
            for j in 0..m {
                book.insert((i as u64 - 1) * m + j + 1, ShardId(i));
            }
        }
        book
    }

    fn insert(&mut self, id: u64, owner: ShardId) {
        self.owners.insert(id, owner);
        self.per_shard.entry(owner).or_default().push(id);
    }

    pub fn owner(&self, id: u64) -> Option<ShardId> {
        self.owners.get(&id).copied()
    }

    pub fn account(&self, id: u64) -> Option<AccountId> {
        self.owner(id).map(|owner| AccountId { id, owner })
    }

    pub fn accounts_of(&self, shard: ShardId) -> &[u64] {
        self.per_shard.get(&shard).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.owners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owners.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.owners.keys().copied()
    }
}

/// Globally unique, monotonically assigned transaction id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TxnId(pub u64);

impl std::fmt::Display for TxnId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "T{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxnStatus {
    Pending,
    Scheduled,
    Committed,
    Aborted,
}

/// Per-destination outcome of the simulated condition check / validity test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubOutcome {
    Ok,
    ConditionFailed,
    Invalid,
}

impl SubOutcome {
    pub fn votes_commit(&self) -> bool {
        matches!(self, SubOutcome::Ok)
    }
}

/// A multi-shard operation: a set of accessed accounts plus bookkeeping
/// filled in by the simulation as the transaction moves through a scheduler.
#[derive(Debug, Clone)]
pub struct Transaction {
    pub id: TxnId,
    pub home: ShardId,
    /// Accessed accounts, sorted and deduplicated.
    pub accounts: Vec<AccountId>,
    pub injection_round: u64,
    pub status: TxnStatus,
    pub commit_round: Option<u64>,
    /// Destinations that will vote abort (simulation input; empty = all ok).
    pub failing: BTreeMap<ShardId, SubOutcome>,
}

impl Transaction {
    pub fn new(id: TxnId, home: ShardId, mut accounts: Vec<AccountId>, injection_round: u64) -> Transaction {
        accounts.sort();
        accounts.dedup();
        Transaction {
            id,
            home,
            accounts,
            injection_round,
            status: TxnStatus::Pending,
            commit_round: None,
            failing: BTreeMap::new(),
        }
    }

    /// Distinct destination shards, ascending.
    pub fn destinations(&self) -> BTreeSet<ShardId> {
        self.accounts.iter().map(|a| a.owner).collect()
    }

    pub fn destination_count(&self) -> usize {
        self.destinations().len()
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.status, TxnStatus::Committed | TxnStatus::Aborted)
    }

    pub fn outcome_at(&self, shard: ShardId) -> SubOutcome {
        self.failing.get(&shard).copied().unwrap_or(SubOutcome::Ok)
    }
}

/// One per-destination piece of a transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubTransaction {
    pub parent: TxnId,
    pub destination: ShardId,
    pub condition_ok: bool,
    pub valid: bool,
}

impl SubTransaction {
    pub fn votes_commit(&self) -> bool {
        self.condition_ok && self.valid
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("transaction {0} accesses no accounts")]
    EmptyAccountSet(TxnId),
    #[error("ledger for {shard} rejects round {round}: last committed round is {last}")]
    OutOfOrderAppend { shard: ShardId, round: u64, last: u64 },
}

/// Split a transaction into one subtransaction per distinct destination shard.
pub fn split(txn: &Transaction) -> Result<Vec<SubTransaction>, ModelError> {
    if txn.accounts.is_empty() {
        return Err(ModelError::EmptyAccountSet(txn.id));
    }
    Ok(txn
        .destinations()
        .into_iter()
        .map(|destination| {
            let outcome = txn.outcome_at(destination);
            SubTransaction {
                parent: txn.id,
                destination,
                condition_ok: !matches!(outcome, SubOutcome::ConditionFailed),
                valid: !matches!(outcome, SubOutcome::Invalid),
            }
        })
        .collect())
}

/// Append-only per-shard log of committed subtransactions.
#[derive(Debug, Clone)]
pub struct Ledger {
    pub shard: ShardId,
    entries: Vec<(TxnId, u64)>,
}

impl Ledger {
    pub fn new(shard: ShardId) -> Ledger {
        Ledger {
            shard,
            entries: Vec::new(),
        }
    }

    /// Appends `(txn, round)`; rounds must be nondecreasing.
    pub fn append(&mut self, txn: TxnId, round: u64) -> Result<(), ModelError> {
        if let Some(&(_, last)) = self.entries.last() {
            if round < last {
                return Err(ModelError::OutOfOrderAppend {
                    shard: self.shard,
                    round,
                    last,
                });
            }
        }
        self.entries.push((txn, round));
        Ok(())
    }

    pub fn entries(&self) -> &[(TxnId, u64)] {
        &self.entries
    }

    pub fn commit_round_of(&self, txn: TxnId) -> Option<u64> {
        self.entries.iter().find(|(t, _)| *t == txn).map(|&(_, r)| r)
    }

    pub fn position_of(&self, txn: TxnId) -> Option<usize> {
        self.entries.iter().position(|(t, _)| *t == txn)
    }
}

/// Undirected conflict graph over a set of transactions.
///
/// Stored as per-account membership groups rather than an explicit edge
/// set: two transactions are adjacent iff they share at least one account
/// group, which keeps construction linear in total account references.
#[derive(Debug, Clone, Default)]
pub struct ConflictGraph {
    vertices: Vec<TxnId>,
    accounts_of: BTreeMap<TxnId, Vec<u64>>,
    members_of: BTreeMap<u64, Vec<TxnId>>,
    dest_counts: BTreeMap<TxnId, usize>,
}

impl ConflictGraph {
    pub fn vertices(&self) -> &[TxnId] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn accounts_of(&self, txn: TxnId) -> &[u64] {
        self.accounts_of.get(&txn).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Transactions sharing a given account, in id order.
    pub fn account_group(&self, account: u64) -> &[TxnId] {
        self.members_of.get(&account).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn account_groups(&self) -> impl Iterator<Item = (&u64, &Vec<TxnId>)> {
        self.members_of.iter()
    }

    /// Number of distinct destination shards of a vertex (heavy/light split input).
    pub fn destination_count(&self, txn: TxnId) -> usize {
        self.dest_counts.get(&txn).copied().unwrap_or(0)
    }

    pub fn has_edge(&self, a: TxnId, b: TxnId) -> bool {
        if a == b {
            return false;
        }
        let (fst, snd) = (self.accounts_of(a), self.accounts_of(b));
        // Both lists are sorted; walk them in step.
        let (mut i, mut j) = (0, 0);
        while i < fst.len() && j < snd.len() {
            match fst[i].cmp(&snd[j]) {
                std::cmp::Ordering::Equal => return true,
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
            }
        }
        false
    }

    /// Distinct neighbors of a vertex.
    pub fn neighbors(&self, txn: TxnId) -> BTreeSet<TxnId> {
        let mut out = BTreeSet::new();
        for account in self.accounts_of(txn) {
            for &other in self.account_group(*account) {
                if other != txn {
                    out.insert(other);
                }
            }
        }
        out
    }

    pub fn degree(&self, txn: TxnId) -> usize {
        self.neighbors(txn).len()
    }

    /// Maximum degree; 0 for the empty or edgeless graph.
    pub fn max_degree(&self) -> usize {
        self.vertices.iter().map(|&v| self.degree(v)).max().unwrap_or(0)
    }

    /// Materialized edge set, ordered pairs `(lo, hi)`. Intended for tests
    /// and small graphs; the schedulers never expand this.
    pub fn edges(&self) -> BTreeSet<(TxnId, TxnId)> {
        let mut out = BTreeSet::new();
        for members in self.members_of.values() {
            for (i, &a) in members.iter().enumerate() {
                for &b in &members[i + 1..] {
                    out.insert((a.min(b), a.max(b)));
                }
            }
        }
        out
    }
}

/// Build the conflict graph of a transaction set: an edge joins two
/// transactions iff they access at least one common account.
pub fn build_conflict_graph<'a, I>(txns: I) -> ConflictGraph
where
    I: IntoIterator<Item = &'a Transaction>,
{
    let mut graph = ConflictGraph::default();
    for txn in txns {
        debug_assert!(
            !graph.accounts_of.contains_key(&txn.id),
            "duplicate txn id {} in conflict graph input",
            txn.id
        );
        graph.vertices.push(txn.id);
        let accounts: Vec<u64> = txn.accounts.iter().map(|a| a.id).collect();
        for &account in &accounts {
            graph.members_of.entry(account).or_default().push(txn.id);
        }
        graph.dest_counts.insert(txn.id, txn.destination_count());
        graph.accounts_of.insert(txn.id, accounts);
    }
    graph.vertices.sort();
    for members in graph.members_of.values_mut() {
        members.sort();
    }
    graph
}
