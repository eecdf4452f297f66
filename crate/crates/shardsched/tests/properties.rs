//! Property tests for the structural invariants: conflict-graph
//! construction against a brute-force oracle, coloring properness and
//! the degree bound, trace round-trips, and generator admissibility.

use std::collections::BTreeSet;

use proptest::prelude::*;

use shardsched::adversary::{
    check_admissible, token_bucket_generator, AdversaryParams, InjectionStrategy, InjectionTrace,
    TxnSpec,
};
use shardsched::coloring::{greedy_color_by_id, is_proper};
use shardsched::model::{build_conflict_graph, AccountBook, AccountId, ShardId, Transaction, TxnId};
use shardsched::model::split;
use shardsched::rate::Rate;

fn arb_txns(max_txns: u64, shards: u32) -> impl Strategy<Value = Vec<Transaction>> {
    prop::collection::vec(
        prop::collection::btree_set(1..=shards as u64, 1..=4usize),
        1..=max_txns as usize,
    )
    .prop_map(move |sets| {
        sets.into_iter()
            .enumerate()
            .map(|(i, accounts)| {
                let accounts: Vec<AccountId> = accounts
                    .into_iter()
                    .map(|a| AccountId {
                        id: a,
                        owner: ShardId(a as u32),
                    })
                    .collect();
                let home = accounts[0].owner;
                Transaction::new(TxnId(i as u64 + 1), home, accounts, 0)
            })
            .collect()
    })
}

proptest! {
    /// Edges are exactly the pairs with intersecting account sets;
    /// the graph is symmetric and irreflexive.
    #[test]
    fn conflict_graph_matches_brute_force(txns in arb_txns(50, 10)) {
        let graph = build_conflict_graph(&txns);
        let mut expect = BTreeSet::new();
        for i in 0..txns.len() {
            for j in i + 1..txns.len() {
                let a: BTreeSet<u64> = txns[i].accounts.iter().map(|x| x.id).collect();
                if txns[j].accounts.iter().any(|x| a.contains(&x.id)) {
                    expect.insert((txns[i].id, txns[j].id));
                }
            }
        }
        prop_assert_eq!(graph.edges(), expect);
        for &v in graph.vertices() {
            prop_assert!(!graph.has_edge(v, v));
            for n in graph.neighbors(v) {
                prop_assert!(graph.has_edge(n, v));
            }
        }
    }

    /// Greedy coloring is proper and uses at most max-degree + 1 colors.
    #[test]
    fn greedy_coloring_proper_and_bounded(txns in arb_txns(40, 8)) {
        let graph = build_conflict_graph(&txns);
        let coloring = greedy_color_by_id(&graph);
        prop_assert!(is_proper(&graph, &coloring));
        prop_assert!(coloring.num_colors() as usize <= graph.max_degree() + 1);
    }

    /// Splitting yields one subtransaction per destination shard and
    /// covers exactly the owner set.
    #[test]
    fn split_covers_destinations(txns in arb_txns(20, 8)) {
        for txn in &txns {
            let subs = split(txn).unwrap();
            let dests: BTreeSet<ShardId> = subs.iter().map(|s| s.destination).collect();
            prop_assert_eq!(subs.len(), dests.len());
            prop_assert_eq!(dests, txn.destinations());
        }
    }

    /// The line trace format round-trips arbitrary traces.
    #[test]
    fn trace_text_round_trips(
        entries in prop::collection::vec(
            (0u64..200, 1u32..=8, prop::collection::btree_set(1u64..=8, 1..=3usize)),
            0..40,
        )
    ) {
        let mut trace = InjectionTrace::default();
        for (i, (round, home, accounts)) in entries.into_iter().enumerate() {
            trace.push(round, TxnSpec {
                id: i as u64 + 1,
                home,
                accounts: accounts.into_iter().collect(),
            });
        }
        let text = trace.to_text();
        let parsed = InjectionTrace::from_text(&text).unwrap();
        prop_assert_eq!(&parsed, &trace);
        prop_assert_eq!(parsed.to_text(), text);
    }

    /// Every generated trace satisfies its own admissibility budget.
    #[test]
    fn generator_is_admissible(
        num in 1u64..=40,
        den_extra in 0u64..=160,
        b in 1u64..=8,
        k in 1u32..=5,
        seed in 0u64..1000,
        burst in proptest::bool::ANY,
    ) {
        let rho = Rate::new(num, num + den_extra);
        let s = 10;
        let params = AdversaryParams { rho, b, k, seed };
        let book = AccountBook::one_per_shard(s);
        let strategy = if burst {
            InjectionStrategy::SingleEpochBurst { burst_round: 13, burst_txns: b }
        } else {
            InjectionStrategy::UniformRandom
        };
        let trace = token_bucket_generator(&params, &book, s, 400, strategy);
        let report = check_admissible(&trace, &book, s, rho, b);
        prop_assert!(report.admissible, "violation: {:?}", report.violation);
    }

    /// Rate literals round-trip through display and parse.
    #[test]
    fn rate_display_round_trips(num in 0u64..10_000, den in 1u64..10_000) {
        let rate = Rate::new(num, den);
        let parsed: Rate = rate.to_string().parse().unwrap();
        prop_assert_eq!(parsed, rate);
    }
}
