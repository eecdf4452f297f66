//! Greedy vertex coloring of conflict graphs.
//!
//! Transactions with equal colors are pairwise conflict-free and can be
//! committed in the same protocol slot. The default is plain greedy in
//! ascending id order; `heavy_light` reserves dedicated colors for
//! transactions spanning many shards before coloring the rest.

use std::collections::BTreeMap;

use crate::model::{ConflictGraph, TxnId};

/// A proper vertex coloring: colors are dense in `0..num_colors`.
#[derive(Debug, Clone, Default)]
pub struct Coloring {
    assignments: BTreeMap<TxnId, u32>,
    num_colors: u32,
}

impl Coloring {
    pub fn color_of(&self, txn: TxnId) -> Option<u32> {
        self.assignments.get(&txn).copied()
    }

    pub fn num_colors(&self) -> u32 {
        self.num_colors
    }

    pub fn assignments(&self) -> &BTreeMap<TxnId, u32> {
        &self.assignments
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// Ids of each color class, ascending within a class.
    pub fn class(&self, color: u32) -> Vec<TxnId> {
        self.assignments
            .iter()
            .filter(|&(_, &c)| c == color)
            .map(|(&t, _)| t)
            .collect()
    }
}

/// Per-account bitsets of colors already used by colored members. The union
/// over a vertex's accounts is exactly the set of colors taken by its
/// already-colored neighbors, without materializing adjacency.
struct UsedColors {
    per_account: BTreeMap<u64, Vec<u64>>,
}

impl UsedColors {
    fn new() -> UsedColors {
        UsedColors {
            per_account: BTreeMap::new(),
        }
    }

    fn mark(&mut self, account: u64, color: u32) {
        let words = self.per_account.entry(account).or_default();
        let (w, b) = ((color / 64) as usize, color % 64);
        if words.len() <= w {
            words.resize(w + 1, 0);
        }
        words[w] |= 1u64 << b;
    }

    fn forbidden(&self, accounts: &[u64], scratch: &mut Vec<u64>) {
        scratch.clear();
        for account in accounts {
            if let Some(words) = self.per_account.get(account) {
                if scratch.len() < words.len() {
                    scratch.resize(words.len(), 0);
                }
                for (dst, src) in scratch.iter_mut().zip(words) {
                    *dst |= *src;
                }
            }
        }
    }
}

fn smallest_free(forbidden: &[u64], floor: u32) -> u32 {
    let start_word = (floor / 64) as usize;
    for (w, &bits) in forbidden.iter().enumerate().skip(start_word) {
        let mut word = !bits;
        if w == start_word {
            word &= !0u64 << (floor % 64);
        }
        if word != 0 {
            return (w as u32) * 64 + word.trailing_zeros();
        }
    }
    (forbidden.len() as u32 * 64).max(floor)
}

/// Greedy coloring: each vertex, in the given order, takes the smallest
/// color unused among its already-colored neighbors.
///
/// `order` must enumerate exactly the graph's vertices. The result is
/// proper and uses at most `max_degree + 1` colors.
pub fn greedy_color(graph: &ConflictGraph, order: &[TxnId]) -> Coloring {
    greedy_with_floor(graph, order, |_| 0)
}

/// Greedy coloring in ascending id order, the schedulers' default.
pub fn greedy_color_by_id(graph: &ConflictGraph) -> Coloring {
    greedy_color(graph, graph.vertices())
}

fn greedy_with_floor(
    graph: &ConflictGraph,
    order: &[TxnId],
    floor_of: impl Fn(TxnId) -> u32,
) -> Coloring {
    debug_assert_eq!(order.len(), graph.len(), "order must cover the graph");
    let mut used = UsedColors::new();
    let mut coloring = Coloring::default();
    let mut scratch = Vec::new();
    for &txn in order {
        let accounts = graph.accounts_of(txn);
        used.forbidden(accounts, &mut scratch);
        let color = smallest_free(&scratch, floor_of(txn));
        for &account in accounts {
            used.mark(account, color);
        }
        coloring.assignments.insert(txn, color);
        coloring.num_colors = coloring.num_colors.max(color + 1);
    }
    debug_assert!(is_proper(graph, &coloring), "greedy produced an improper coloring");
    coloring
}

/// Heavy/light strategy: transactions accessing more than `threshold`
/// shards each receive a unique color up front; the remaining (light)
/// vertices are colored greedily from the next free color on.
pub fn heavy_light_color(graph: &ConflictGraph, order: &[TxnId], threshold: usize) -> Coloring {
    let heavy: Vec<TxnId> = order
        .iter()
        .copied()
        .filter(|&t| graph.destination_count(t) > threshold)
        .collect();
    let mut coloring = Coloring::default();
    let mut used = UsedColors::new();
    for (i, &txn) in heavy.iter().enumerate() {
        let color = i as u32;
        for &account in graph.accounts_of(txn) {
            used.mark(account, color);
        }
        coloring.assignments.insert(txn, color);
        coloring.num_colors = color + 1;
    }
    let light_floor = heavy.len() as u32;
    let mut scratch = Vec::new();
    for &txn in order {
        if coloring.assignments.contains_key(&txn) {
            continue;
        }
        used.forbidden(graph.accounts_of(txn), &mut scratch);
        let color = smallest_free(&scratch, light_floor);
        for &account in graph.accounts_of(txn) {
            used.mark(account, color);
        }
        coloring.assignments.insert(txn, color);
        coloring.num_colors = coloring.num_colors.max(color + 1);
    }
    debug_assert!(is_proper(graph, &coloring), "heavy/light produced an improper coloring");
    coloring
}

/// A coloring is proper iff within every account group all colors differ.
pub fn is_proper(graph: &ConflictGraph, coloring: &Coloring) -> bool {
    for (_, members) in graph.account_groups() {
        let mut seen = std::collections::BTreeSet::new();
        for &txn in members {
            match coloring.color_of(txn) {
                Some(c) => {
                    if !seen.insert(c) {
                        return false;
                    }
                }
                None => return false,
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_conflict_graph, AccountId, ShardId, Transaction};
    use rand::{Rng, SeedableRng};

    fn txn(id: u64, accounts: &[u64]) -> Transaction {
        Transaction::new(
            TxnId(id),
            ShardId(1),
            accounts
                .iter()
                .map(|&a| AccountId {
                    id: a,
                    owner: ShardId(a as u32),
                })
                .collect(),
            0,
        )
    }

    #[test]
    fn walkthrough_instance_uses_two_colors() {
        // a,b / a,d / b,c / c,d with one account per shard.
        let txns = vec![
            txn(1, &[1, 2]),
            txn(2, &[1, 4]),
            txn(3, &[2, 3]),
            txn(4, &[3, 4]),
        ];
        let g = build_conflict_graph(&txns);
        let c = greedy_color_by_id(&g);
        assert_eq!(c.color_of(TxnId(1)), Some(0));
        assert_eq!(c.color_of(TxnId(2)), Some(1));
        assert_eq!(c.color_of(TxnId(3)), Some(1));
        assert_eq!(c.color_of(TxnId(4)), Some(0));
        assert_eq!(c.num_colors(), 2);
    }

    #[test]
    fn edgeless_graph_is_monochrome() {
        let txns: Vec<Transaction> = (1..=5).map(|i| txn(i, &[i * 10])).collect();
        let g = build_conflict_graph(&txns);
        let c = greedy_color_by_id(&g);
        assert!(txns.iter().all(|t| c.color_of(t.id) == Some(0)));
        assert_eq!(c.num_colors(), 1);
    }

    #[test]
    fn clique_needs_exactly_clique_size_colors() {
        // All transactions share account 1: a clique.
        for n in 1..=12u64 {
            let txns: Vec<Transaction> = (1..=n).map(|i| txn(i, &[1, i + 1])).collect();
            let g = build_conflict_graph(&txns);
            let c = greedy_color_by_id(&g);
            assert_eq!(c.num_colors() as u64, n);
        }
    }

    #[test]
    fn random_graphs_proper_and_bounded() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..60 {
            let n = rng.gen_range(1..=40u64);
            let txns: Vec<Transaction> = (1..=n)
                .map(|i| {
                    let m = rng.gen_range(1..=4);
                    let accounts: Vec<u64> = (0..m).map(|_| rng.gen_range(1..=12u64)).collect();
                    txn(i, &accounts)
                })
                .collect();
            let g = build_conflict_graph(&txns);
            let c = greedy_color_by_id(&g);
            assert!(is_proper(&g, &c));
            assert!(c.num_colors() as usize <= g.max_degree() + 1);
        }
    }

    #[test]
    fn determinism_under_fixed_order() {
        let txns: Vec<Transaction> = (1..=20).map(|i| txn(i, &[i % 5 + 1, i % 7 + 1])).collect();
        let g = build_conflict_graph(&txns);
        let a = greedy_color_by_id(&g);
        let b = greedy_color_by_id(&g);
        assert_eq!(a.assignments(), b.assignments());
    }

    #[test]
    fn heavy_light_reserves_unique_colors() {
        // Heavy = more than 2 destinations.
        let txns = vec![
            txn(1, &[1, 2, 3, 4]),
            txn(2, &[1, 5, 6, 7]),
            txn(3, &[2]),
            txn(4, &[8]),
        ];
        let g = build_conflict_graph(&txns);
        let c = heavy_light_color(&g, g.vertices(), 2);
        assert!(is_proper(&g, &c));
        // Heavies occupy colors 0 and 1; lights start above them.
        assert_eq!(c.color_of(TxnId(1)), Some(0));
        assert_eq!(c.color_of(TxnId(2)), Some(1));
        assert!(c.color_of(TxnId(3)).unwrap() >= 2);
        assert!(c.color_of(TxnId(4)).unwrap() >= 2);
    }
}
