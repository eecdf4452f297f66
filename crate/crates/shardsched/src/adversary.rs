//! Adversarial transaction generation under a (rho, b) budget.
//!
//! Per-shard congestion over any window of `t` rounds is limited to
//! `⌊rho*t⌋ + b`. Generators enforce the budget constructively with
//! per-shard token buckets (capacity `b`, refill `rho` per round, one
//! token consumed per accessed shard), so every emitted trace is
//! admissible by construction; `check_admissible` verifies the window
//! bound independently and exactly.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::AccountBook;
use crate::rate::Rate;

#[derive(Debug, Clone)]
pub struct AdversaryParams {
    pub rho: Rate,
    pub b: u64,
    /// Maximum shards accessed by one transaction.
    pub k: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InjectionStrategy {
    /// Steady injection near rate rho with uniform shard choices.
    UniformRandom,
    /// Steady rate plus one release of extra transactions, all within a
    /// single round so the whole burst lands inside one epoch.
    SingleEpochBurst { burst_round: u64, burst_txns: u64 },
}

/// One injected transaction, as raw trace data (owners are resolved
/// against an [`AccountBook`] when the trace is replayed).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxnSpec {
    pub id: u64,
    pub home: u32,
    pub accounts: Vec<u64>,
}

impl TxnSpec {
    /// Distinct destination shards under the given account layout.
    pub fn shards(&self, book: &AccountBook) -> Vec<u32> {
        let mut out: Vec<u32> = self
            .accounts
            .iter()
            .filter_map(|&a| book.owner(a).map(|s| s.0))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Per-round injection schedule.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InjectionTrace {
    rounds: BTreeMap<u64, Vec<TxnSpec>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("line {0}: malformed trace record `{1}`")]
    Malformed(usize, String),
    #[error("line {0}: duplicate transaction id {1}")]
    DuplicateId(usize, u64),
    #[error("shard count must be at least 1")]
    NoShards,
}

impl InjectionTrace {
    pub fn push(&mut self, round: u64, spec: TxnSpec) {
        self.rounds.entry(round).or_default().push(spec);
    }

    pub fn at(&self, round: u64) -> &[TxnSpec] {
        self.rounds.get(&round).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &TxnSpec)> {
        self.rounds
            .iter()
            .flat_map(|(&r, specs)| specs.iter().map(move |s| (r, s)))
    }

    pub fn txn_count(&self) -> usize {
        self.rounds.values().map(Vec::len).sum()
    }

    pub fn max_round(&self) -> u64 {
        self.rounds.keys().next_back().copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// Line format: `round txn_id home_shard acct_1,…,acct_m`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (round, spec) in self.iter() {
            let accounts: Vec<String> = spec.accounts.iter().map(u64::to_string).collect();
            out.push_str(&format!(
                "{} {} {} {}\n",
                round,
                spec.id,
                spec.home,
                accounts.join(",")
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<InjectionTrace, TraceError> {
        let mut trace = InjectionTrace::default();
        let mut seen = std::collections::BTreeSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let parse = |f: Option<&str>| -> Result<u64, TraceError> {
                f.and_then(|v| v.parse().ok())
                    .ok_or_else(|| TraceError::Malformed(lineno + 1, line.to_string()))
            };
            let round = parse(fields.next())?;
            let id = parse(fields.next())?;
            let home = parse(fields.next())? as u32;
            let accounts: Result<Vec<u64>, _> = fields
                .next()
                .ok_or_else(|| TraceError::Malformed(lineno + 1, line.to_string()))?
                .split(',')
                .map(|a| {
                    a.parse::<u64>()
                        .map_err(|_| TraceError::Malformed(lineno + 1, line.to_string()))
                })
                .collect();
            let accounts = accounts?;
            if accounts.is_empty() || fields.next().is_some() {
                return Err(TraceError::Malformed(lineno + 1, line.to_string()));
            }
            if !seen.insert(id) {
                return Err(TraceError::DuplicateId(lineno + 1, id));
            }
            trace.push(round, TxnSpec { id, home, accounts });
        }
        Ok(trace)
    }
}

/// Per-shard token buckets in exact rational arithmetic: levels are kept
/// in units of `1/den`, refilled by `num` per round and capped at `b*den`.
struct TokenBuckets {
    levels: Vec<u128>,
    refill: u128,
    unit: u128,
    cap: u128,
}

impl TokenBuckets {
    fn full(s: u32, rho: Rate, b: u64) -> TokenBuckets {
        let unit = rho.denominator() as u128;
        let cap = b as u128 * unit;
        TokenBuckets {
            levels: vec![cap; s as usize],
            refill: rho.numerator() as u128,
            unit,
            cap,
        }
    }

    fn tick(&mut self) {
        for level in &mut self.levels {
            *level = (*level + self.refill).min(self.cap);
        }
    }

    fn try_consume(&mut self, shards: &[u32]) -> bool {
        if shards
            .iter()
            .any(|&s| self.levels[(s - 1) as usize] < self.unit)
        {
            return false;
        }
        for &s in shards {
            self.levels[(s - 1) as usize] -= self.unit;
        }
        true
    }
}

fn random_spec(
    rng: &mut ChaCha8Rng,
    id: u64,
    s: u32,
    k: u32,
    book: &AccountBook,
) -> (TxnSpec, Vec<u32>) {
    let home = rng.gen_range(1..=s);
    let m = rng.gen_range(1..=k.min(s)) as usize;
    let mut shards: Vec<u32> = sample(rng, s as usize, m)
        .into_iter()
        .map(|i| i as u32 + 1)
        .collect();
    shards.sort_unstable();
    let accounts: Vec<u64> = shards
        .iter()
        .map(|&shard| {
            let of = book.accounts_of(crate::model::ShardId(shard));
            of[rng.gen_range(0..of.len())]
        })
        .collect();
    (
        TxnSpec {
            id,
            home,
            accounts,
        },
        shards,
    )
}

/// Generates an admissible trace over `rounds` rounds.
///
/// Steady injection is paced so that expected per-shard congestion per
/// round matches rho; the burst strategy additionally spends the
/// accumulated bucket capacity in one round.
pub fn token_bucket_generator(
    params: &AdversaryParams,
    book: &AccountBook,
    s: u32,
    rounds: u64,
    strategy: InjectionStrategy,
) -> InjectionTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut buckets = TokenBuckets::full(s, params.rho, params.b);
    let mut trace = InjectionTrace::default();
    let mut next_id = 1u64;
    // Candidate pacing: target txns/round = rho * s / E[m], E[m] = (k+1)/2,
    // accumulated exactly as a fraction.
    let k = params.k.min(s).max(1);
    let step = params.rho.numerator() as u128 * s as u128 * 2;
    let per_attempt = params.rho.denominator() as u128 * (k as u128 + 1);
    let mut acc: u128 = 0;
    for round in 1..=rounds {
        buckets.tick();
        if let InjectionStrategy::SingleEpochBurst {
            burst_round,
            burst_txns,
        } = strategy
        {
            if round == burst_round {
                let mut accepted = 0u64;
                for _ in 0..burst_txns.saturating_mul(4) {
                    if accepted == burst_txns {
                        break;
                    }
                    let (spec, shards) = random_spec(&mut rng, next_id, s, k, book);
                    if buckets.try_consume(&shards) {
                        next_id += 1;
                        accepted += 1;
                        trace.push(round, spec);
                    }
                }
            }
        }
        acc += step;
        while acc >= per_attempt {
            acc -= per_attempt;
            let (spec, shards) = random_spec(&mut rng, next_id, s, k, book);
            if buckets.try_consume(&shards) {
                next_id += 1;
                trace.push(round, spec);
            }
        }
    }
    trace
}

/// Width of the mutual-conflict construction: `k+1` when `k(k+1)/2 <= s`,
/// otherwise `p+1` for the greatest `p` with `p(p+1)/2 <= s`.
pub fn overload_width(k: u32, s: u32) -> u32 {
    let fits = |w: u64| w * (w + 1) / 2 <= s as u64;
    if fits(k as u64) {
        k + 1
    } else {
        let mut p = 1u32;
        while fits(p as u64 + 1) {
            p += 1;
        }
        p + 1
    }
}

/// Rotating batches of `width` mutually conflicting transactions: every
/// pair within a batch shares a dedicated shard, so each batch is a clique
/// and contributes congestion 2 to each of the `width*(width-1)/2` shards
/// it uses. Emission is token-bucket gated, which realizes the maximum
/// admissible cadence for the given (rho, b).
pub fn overload_adversary(
    k: u32,
    s: u32,
    rho: Rate,
    b: u64,
    rounds: u64,
    seed: u64,
) -> Result<InjectionTrace, TraceError> {
    if s < 1 {
        return Err(TraceError::NoShards);
    }
    let width = overload_width(k.max(1), s);
    let pair_shards = (width * (width - 1) / 2).max(1);
    // pair_index[(i, j)] for i < j, in lexicographic order.
    let mut pair_index = BTreeMap::new();
    let mut idx = 0u32;
    for i in 0..width {
        for j in (i + 1)..width {
            pair_index.insert((i, j), idx);
            idx += 1;
        }
    }
    let mut buckets = TokenBuckets::full(s, rho, b);
    let mut trace = InjectionTrace::default();
    let mut next_id = 1u64;
    let mut batch: Vec<Vec<u32>> = Vec::new();
    let mut batch_no = 0u64;
    let mut cursor = 0usize;
    for round in 1..=rounds {
        buckets.tick();
        loop {
            if cursor == batch.len() {
                // Build the next batch, rotating the pair -> shard map.
                let offset = (batch_no.wrapping_add(seed) % pair_shards as u64) as u32;
                batch = (0..width)
                    .map(|i| {
                        let mut shards: Vec<u32> = (0..width)
                            .filter(|&j| j != i)
                            .map(|j| {
                                let p = pair_index[&(i.min(j), i.max(j))];
                                (p + offset) % pair_shards + 1
                            })
                            .collect();
                        shards.sort_unstable();
                        shards
                    })
                    .collect();
                batch_no += 1;
                cursor = 0;
            }
            if !buckets.try_consume(&batch[cursor]) {
                break;
            }
            let shards = &batch[cursor];
            trace.push(
                round,
                TxnSpec {
                    id: next_id,
                    home: shards[0],
                    accounts: shards.iter().map(|&x| x as u64).collect(),
                },
            );
            next_id += 1;
            cursor += 1;
        }
    }
    Ok(trace)
}

/// Result of an admissibility audit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    pub violation: Option<Violation>,
}

/// Earliest window exceeding the budget on some shard.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub shard: u32,
    pub from_round: u64,
    pub to_round: u64,
    pub congestion: u64,
    pub budget: u64,
}

/// Exhaustive window check: for every shard and every interval `[t1, t2]`,
/// congestion must not exceed `⌊rho*(t2-t1+1)⌋ + b`.
///
/// Since congestion is integral, the check reduces to the linear test
/// `den*S - num*L > den*b` on prefix sums, so a single pass with a running
/// minimum covers all interval starts exactly; the earliest violating
/// window (smallest end round, then smallest shard) is reported.
pub fn check_admissible(
    trace: &InjectionTrace,
    book: &AccountBook,
    s: u32,
    rho: Rate,
    b: u64,
) -> AdmissibilityReport {
    let num = rho.numerator() as i128;
    let den = rho.denominator() as i128;
    let budget = den * b as i128;
    let mut prefix = vec![0i128; s as usize];
    let mut h_min = vec![0i128; s as usize];
    let mut h_argmin = vec![-1i64; s as usize];
    let max_round = trace.max_round();
    let mut congestion = vec![0u64; s as usize];
    for t in 0..=max_round {
        congestion.iter_mut().for_each(|c| *c = 0);
        for spec in trace.at(t) {
            for shard in spec.shards(book) {
                congestion[(shard - 1) as usize] += 1;
            }
        }
        for shard in 0..s as usize {
            prefix[shard] += congestion[shard] as i128;
            let h = den * prefix[shard] - num * (t as i128 + 1);
            if h - h_min[shard] > budget {
                let from = (h_argmin[shard] + 1) as u64;
                let length = t - from + 1;
                let window: u64 = (from..=t)
                    .map(|r| {
                        trace
                            .at(r)
                            .iter()
                            .flat_map(|sp| sp.shards(book))
                            .filter(|&x| x as usize == shard + 1)
                            .count() as u64
                    })
                    .sum();
                return AdmissibilityReport {
                    admissible: false,
                    violation: Some(Violation {
                        shard: shard as u32 + 1,
                        from_round: from,
                        to_round: t,
                        congestion: window,
                        budget: rho.mul_floor(length) + b,
                    }),
                };
            }
            if h < h_min[shard] {
                h_min[shard] = h;
                h_argmin[shard] = t as i64;
            }
        }
    }
    AdmissibilityReport {
        admissible: true,
        violation: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ShardId;

    fn book(s: u32) -> AccountBook {
        AccountBook::one_per_shard(s)
    }

    /// Brute-force oracle: every interval, both endpoints explicit.
    fn naive_admissible(trace: &InjectionTrace, book: &AccountBook, s: u32, rho: Rate, b: u64) -> bool {
        let t_max = trace.max_round();
        for shard in 1..=s {
            let per_round: Vec<u64> = (0..=t_max)
                .map(|r| {
                    trace
                        .at(r)
                        .iter()
                        .filter(|sp| sp.shards(book).contains(&shard))
                        .count() as u64
                })
                .collect();
            for t1 in 0..=t_max as usize {
                let mut sum = 0;
                for t2 in t1..=t_max as usize {
                    sum += per_round[t2];
                    let len = (t2 - t1 + 1) as u64;
                    if sum > rho.mul_floor(len) + b {
                        return false;
                    }
                }
            }
        }
        true
    }

    #[test]
    fn empty_trace_is_admissible() {
        let trace = InjectionTrace::default();
        let report = check_admissible(&trace, &book(4), 4, Rate::new(1, 2), 1);
        assert!(report.admissible);
    }

    #[test]
    fn bucket_overflow_detected_at_first_round() {
        // b+1 same-shard transactions at round 0 with a negligible rate.
        let mut trace = InjectionTrace::default();
        for id in 1..=4u64 {
            trace.push(
                0,
                TxnSpec {
                    id,
                    home: 1,
                    accounts: vec![1],
                },
            );
        }
        let report = check_admissible(&trace, &book(2), 2, Rate::new(1, 1000), 3);
        assert!(!report.admissible);
        let v = report.violation.unwrap();
        assert_eq!((v.shard, v.from_round, v.to_round), (1, 0, 0));
        assert_eq!(v.congestion, 4);
        assert_eq!(v.budget, 3);
    }

    #[test]
    fn generator_output_is_admissible() {
        for (seed, rho, b) in [
            (1u64, Rate::new(15, 100), 5u64),
            (2, Rate::new(1, 72), 2),
            (3, Rate::new(3, 10), 20),
        ] {
            let params = AdversaryParams { rho, b, k: 4, seed };
            let trace = token_bucket_generator(
                &params,
                &book(16),
                16,
                2000,
                InjectionStrategy::SingleEpochBurst {
                    burst_round: 40,
                    burst_txns: b,
                },
            );
            assert!(
                check_admissible(&trace, &book(16), 16, rho, b).admissible,
                "seed {seed}"
            );
            assert!(naive_admissible(&trace, &book(16), 16, rho, b), "seed {seed}");
        }
    }

    #[test]
    fn fast_checker_agrees_with_naive_on_near_limit_traces() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for case in 0..30 {
            let rho = Rate::new(rng.gen_range(1..=6), rng.gen_range(4..=12));
            let b = rng.gen_range(1..=3u64);
            let mut trace = InjectionTrace::default();
            let mut id = 1;
            for round in 0..60u64 {
                for _ in 0..rng.gen_range(0..=2) {
                    trace.push(
                        round,
                        TxnSpec {
                            id,
                            home: rng.gen_range(1..=3),
                            accounts: vec![rng.gen_range(1..=3u64)],
                        },
                    );
                    id += 1;
                }
            }
            let fast = check_admissible(&trace, &book(3), 3, rho, b).admissible;
            let slow = naive_admissible(&trace, &book(3), 3, rho, b);
            assert_eq!(fast, slow, "case {case} rho={rho} b={b}");
        }
    }

    #[test]
    fn zero_rate_burst_stays_within_budget() {
        let params = AdversaryParams {
            rho: Rate::ZERO,
            b: 3,
            k: 2,
            seed: 5,
        };
        let trace = token_bucket_generator(
            &params,
            &book(4),
            4,
            100,
            InjectionStrategy::SingleEpochBurst {
                burst_round: 10,
                burst_txns: 3,
            },
        );
        assert_eq!(trace.txn_count(), 3);
        assert!(trace.iter().all(|(r, _)| r == 10));
        for shard in 1..=4u32 {
            let touching = trace
                .iter()
                .filter(|(_, sp)| sp.shards(&book(4)).contains(&shard))
                .count();
            assert!(touching <= 3);
        }
        assert!(check_admissible(&trace, &book(4), 4, Rate::ZERO, 3).admissible);
    }

    #[test]
    fn deterministic_traces_per_seed() {
        let params = AdversaryParams {
            rho: Rate::new(1, 5),
            b: 4,
            k: 3,
            seed: 42,
        };
        let gen = || {
            token_bucket_generator(
                &params,
                &book(8),
                8,
                500,
                InjectionStrategy::UniformRandom,
            )
        };
        assert_eq!(gen().to_text(), gen().to_text());
        let other = token_bucket_generator(
            &AdversaryParams { seed: 43, ..params.clone() },
            &book(8),
            8,
            500,
            InjectionStrategy::UniformRandom,
        );
        assert_ne!(gen().to_text(), other.to_text());
    }

    #[test]
    fn overload_width_cases() {
        assert_eq!(overload_width(2, 3), 3);
        // k(k+1)/2 > s: p is the greatest integer with p(p+1)/2 <= s.
        assert_eq!(overload_width(5, 9), 4); // p = 3: 6 <= 9 < 10
        assert_eq!(overload_width(5, 10), 5); // p = 4: 10 <= 10
        assert_eq!(overload_width(1, 1), 2);
        assert_eq!(overload_width(8, 64), 9);
    }

    #[test]
    fn overload_smallest_case_pairs_to_unique_shards() {
        let trace = overload_adversary(2, 3, Rate::new(1, 2), 2, 12, 0).unwrap();
        let first: Vec<&TxnSpec> = trace.at(1).iter().collect();
        assert_eq!(first.len(), 3);
        let sets: Vec<Vec<u64>> = first.iter().map(|s| s.accounts.clone()).collect();
        assert_eq!(sets, vec![vec![1, 2], vec![1, 3], vec![2, 3]]);
    }

    #[test]
    fn overload_batches_are_cliques() {
        use crate::model::{build_conflict_graph, AccountId, Transaction, TxnId};
        let trace = overload_adversary(3, 10, Rate::new(6, 10), 2, 4, 7).unwrap();
        let width = overload_width(3, 10) as usize;
        let batch: Vec<Transaction> = trace
            .iter()
            .take(width)
            .map(|(r, sp)| {
                Transaction::new(
                    TxnId(sp.id),
                    ShardId(sp.home),
                    sp.accounts
                        .iter()
                        .map(|&a| AccountId {
                            id: a,
                            owner: ShardId(a as u32),
                        })
                        .collect(),
                    r,
                )
            })
            .collect();
        assert_eq!(batch.len(), width);
        let g = build_conflict_graph(&batch);
        assert_eq!(g.edges().len(), width * (width - 1) / 2, "clique");
    }

    #[test]
    fn overload_trace_is_admissible() {
        for (rho, b) in [(Rate::new(6, 10), 2u64), (Rate::new(1, 4), 3)] {
            let trace = overload_adversary(3, 8, rho, b, 400, 1).unwrap();
            assert!(check_admissible(&trace, &book(8), 8, rho, b).admissible);
            assert!(trace.txn_count() > 0);
        }
    }

    #[test]
    fn trace_text_round_trip() {
        let params = AdversaryParams {
            rho: Rate::new(1, 7),
            b: 2,
            k: 3,
            seed: 9,
        };
        let trace = token_bucket_generator(
            &params,
            &book(6),
            6,
            300,
            InjectionStrategy::SingleEpochBurst {
                burst_round: 12,
                burst_txns: 2,
            },
        );
        let text = trace.to_text();
        let parsed = InjectionTrace::from_text(&text).unwrap();
        assert_eq!(parsed, trace);
        assert_eq!(parsed.to_text(), text);
    }

    #[test]
    fn trace_parse_rejects_garbage() {
        assert!(InjectionTrace::from_text("1 2\n").is_err());
        assert!(InjectionTrace::from_text("1 2 3 x\n").is_err());
        assert!(InjectionTrace::from_text("1 2 3 4\n1 2 3 4\n").is_err());
        assert!(InjectionTrace::from_text("# comment\n\n3 1 2 4,5\n").is_ok());
    }
}
