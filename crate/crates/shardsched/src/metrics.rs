//! Per-round and per-transaction measurements of a simulation run, plus
//! queue-growth detection over the recorded series.

use std::collections::BTreeMap;

use crate::fds::Height;
use crate::model::{TxnId, TxnStatus};

/// State sampled at the end of one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundSample {
    pub round: u64,
    /// All injected, non-terminal transactions.
    pub pending_total: u64,
    /// Subset currently inside a commit protocol window.
    pub in_flight: u64,
    pub committed_cum: u64,
    pub aborted_cum: u64,
    /// Home-shard pending queue lengths, indexed by shard - 1.
    pub home_queues: Vec<u32>,
    /// Leader scheduled-but-uncommitted queue lengths (FDS), by shard - 1.
    pub leader_queues: Vec<u32>,
}

/// Final record of one transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxnRecord {
    pub injection_round: u64,
    pub status: TxnStatus,
    pub commit_round: Option<u64>,
    /// Color assigned by the epoch leader (BDS).
    pub color: Option<u32>,
    /// Final height (FDS).
    pub height: Option<Height>,
    /// Round the subtransactions first entered their destination
    /// schedule queues (FDS).
    pub queued_round: Option<u64>,
    /// Round the final height took effect in the queues (FDS).
    pub height_round: Option<u64>,
}

impl TxnRecord {
    pub fn latency(&self) -> Option<u64> {
        self.commit_round.map(|c| c - self.injection_round)
    }
}

/// One scheduling epoch as realized by the BDS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochRecord {
    pub index: u64,
    pub start_round: u64,
    pub length: u64,
    pub txns: u64,
    pub colors: u32,
}

#[derive(Debug, Clone, Default)]
pub struct MetricsTrace {
    pub rounds: Vec<RoundSample>,
    pub txns: BTreeMap<TxnId, TxnRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl MetricsTrace {
    pub fn pending_series(&self) -> Vec<u64> {
        self.rounds.iter().map(|r| r.pending_total).collect()
    }

    pub fn max_pending(&self) -> u64 {
        self.rounds.iter().map(|r| r.pending_total).max().unwrap_or(0)
    }

    pub fn committed(&self) -> u64 {
        self.rounds.last().map(|r| r.committed_cum).unwrap_or(0)
    }

    pub fn aborted(&self) -> u64 {
        self.rounds.last().map(|r| r.aborted_cum).unwrap_or(0)
    }

    pub fn latencies(&self) -> impl Iterator<Item = u64> + '_ {
        self.txns.values().filter_map(TxnRecord::latency)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GrowthVerdict {
    Stable { slope: f64 },
    Growing { slope: f64 },
}

impl GrowthVerdict {
    pub fn is_growing(&self) -> bool {
        matches!(self, GrowthVerdict::Growing { .. })
    }

    pub fn slope(&self) -> f64 {
        match self {
            GrowthVerdict::Stable { slope } | GrowthVerdict::Growing { slope } => *slope,
        }
    }
}

pub const DEFAULT_GROWTH_SLOPE: f64 = 0.01;
pub const DEFAULT_GROWTH_R2: f64 = 0.9;

/// Least-squares regression of the pending-count series over the second
/// half of the run. The queue is reported as growing when the fitted
/// slope exceeds `slope_threshold` with `R^2 > r2_threshold`.
pub fn detect_growth_with(
    pending: &[u64],
    slope_threshold: f64,
    r2_threshold: f64,
) -> GrowthVerdict {
    let tail = &pending[pending.len() / 2..];
    if tail.len() < 2 {
        return GrowthVerdict::Stable { slope: 0.0 };
    }
    let n = tail.len() as f64;
    let mean_x = (tail.len() - 1) as f64 / 2.0;
    let mean_y = tail.iter().map(|&y| y as f64).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (i, &y) in tail.iter().enumerate() {
        let dx = i as f64 - mean_x;
        let dy = y as f64 - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    // A flat series has no variance to explain; treat it as stable.
    if syy == 0.0 {
        return GrowthVerdict::Stable { slope: 0.0 };
    }
    let r2 = (sxy * sxy) / (sxx * syy);
    if slope > slope_threshold && r2 > r2_threshold {
        GrowthVerdict::Growing { slope }
    } else {
        GrowthVerdict::Stable { slope }
    }
}

pub fn detect_growth(trace: &MetricsTrace) -> GrowthVerdict {
    detect_growth_with(
        &trace.pending_series(),
        DEFAULT_GROWTH_SLOPE,
        DEFAULT_GROWTH_R2,
    )
}

/// Aggregate figures for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rounds: u64,
    pub injected: u64,
    pub committed: u64,
    pub aborted: u64,
    pub avg_pending: f64,
    pub max_pending: u64,
    pub avg_latency: f64,
    pub max_latency: u64,
    pub growth: GrowthVerdict,
}

pub fn summarize(trace: &MetricsTrace) -> Summary {
    let rounds = trace.rounds.len() as u64;
    let avg_pending = if trace.rounds.is_empty() {
        0.0
    } else {
        trace.rounds.iter().map(|r| r.pending_total as f64).sum::<f64>() / rounds as f64
    };
    let latencies: Vec<u64> = trace.latencies().collect();
    let avg_latency = if latencies.is_empty() {
        0.0
    } else {
        latencies.iter().map(|&l| l as f64).sum::<f64>() / latencies.len() as f64
    };
    Summary {
        rounds,
        injected: trace.txns.len() as u64,
        committed: trace.committed(),
        aborted: trace.aborted(),
        avg_pending,
        max_pending: trace.max_pending(),
        avg_latency,
        max_latency: latencies.iter().copied().max().unwrap_or(0),
        growth: detect_growth(trace),
    }
}
