//! Choosing which subtrees to map from the reverse entrance.

use std::collections::BTreeSet;

use crate::tree::NodeId;

use super::{ceil_div, Forest, InversionHeuristic, PartitionSet, SubtreeId};

/// Shape figures of one subtree used by the inversion heuristics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubtreeMetrics {
    pub nodes: usize,
    pub leaves: usize,
    pub height: usize,
    /// Sum of leaf depths relative to the subtree root.
    pub leaf_depth_sum: usize,
    /// Leaves placeable the moment the subtree is inverted: members of
    /// all-terminal sibling blocks (plus a terminal root). Leaves sharing
    /// a block with an internal sibling wait for that sibling's subtree.
    pub ready_leaves: usize,
}

impl SubtreeMetrics {
    pub fn leaf_per_height(&self) -> f64 {
        self.leaves as f64 / self.height.max(1) as f64
    }

    pub fn avg_depth_per_leaf(&self) -> f64 {
        self.leaf_depth_sum as f64 / self.leaves as f64
    }
}

pub fn subtree_metrics(forest: &Forest, root: NodeId) -> SubtreeMetrics {
    let mut nodes = 0;
    let mut leaves = 0;
    let mut leaf_depth_sum = 0;
    let mut ready_leaves = 0;
    let base = forest.node(root).depth;
    for id in forest.subtree_nodes(root) {
        nodes += 1;
        let n = forest.node(id);
        if n.is_terminal() {
            leaves += 1;
            leaf_depth_sum += n.depth - base;
        } else if n
            .child_ids()
            .all(|c| forest.node(c).is_terminal())
        {
            ready_leaves += n.child_ids().count();
        }
    }
    if forest.node(root).is_terminal() {
        ready_leaves += 1;
    }
    SubtreeMetrics {
        nodes,
        leaves,
        height: forest.node(root).height,
        leaf_depth_sum,
        ready_leaves,
    }
}

/// Ranking order for inversion candidates (`Less` = picked earlier).
/// Exact integer comparisons throughout; ties fall through to the caller.
fn prefer(h: InversionHeuristic, a: &SubtreeMetrics, b: &SubtreeMetrics) -> std::cmp::Ordering {
    match h {
        InversionHeuristic::LargestLeaf => b.leaves.cmp(&a.leaves),
        InversionHeuristic::LeastHeight => a.height.cmp(&b.height),
        InversionHeuristic::LargestLeafPerHeight => {
            let lhs = b.leaves as u128 * a.height.max(1) as u128;
            let rhs = a.leaves as u128 * b.height.max(1) as u128;
            lhs.cmp(&rhs)
        }
        InversionHeuristic::LeastAvgDepthPerLeaf => {
            let lhs = a.leaf_depth_sum as u128 * b.leaves as u128;
            let rhs = b.leaf_depth_sum as u128 * a.leaves as u128;
            lhs.cmp(&rhs)
        }
    }
}

/// Greedy subtree inversion: starting from a working estimate of the
/// entry-stage supply equal to the number of subtrees (their roots),
/// repeatedly invert the heuristic's best remaining subtree, trading its
/// root for its immediately placeable leaf nodes, until every subtree is
/// inverted or the estimate reaches
/// `inversion_factor * ceil(total_nodes / stage_count)`.
///
/// The supply estimate counts [`SubtreeMetrics::ready_leaves`] rather
/// than all leaves: with sibling-block placement, a leaf sharing a block
/// with an internal sibling cannot enter the first stage, and counting it
/// would leave the entry stages under-provisioned.
///
/// `inversion_factor == 0` inverts nothing; a factor at or beyond the
/// stage count inverts everything. Because the greedy order is a fixed
/// ranking, a smaller factor always yields a subset of a larger one's
/// choice.
pub fn select_inversions(
    partition: &PartitionSet,
    heuristic: InversionHeuristic,
    inversion_factor: usize,
    stage_count: usize,
) -> BTreeSet<SubtreeId> {
    let forest = &partition.forest;
    let k = forest.roots.len();
    let metrics: Vec<SubtreeMetrics> = forest
        .roots
        .iter()
        .map(|&r| subtree_metrics(forest, r))
        .collect();
    let mut order: Vec<SubtreeId> = (0..k).collect();
    order.sort_by(|&a, &b| {
        prefer(heuristic, &metrics[a], &metrics[b])
            // larger subtree first, then lower id
            .then(metrics[b].nodes.cmp(&metrics[a].nodes))
            .then(a.cmp(&b))
    });

    let limit = inversion_factor * ceil_div(forest.len(), stage_count.max(1));
    let mut picked = BTreeSet::new();
    let mut working = k;
    for s in order {
        if picked.len() >= k || working >= limit {
            break;
        }
        picked.insert(s);
        working = working - 1 + metrics[s].ready_leaves;
    }
    picked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::partition_trie;
    use crate::trie::{build_unibit_trie, leaf_push, parse_prefix, Prefix};

    fn pushed_partition(lines: &[&str], bits: u8) -> PartitionSet {
        let set: Vec<Prefix> = lines.iter().map(|l| parse_prefix(l, 0).unwrap()).collect();
        let t = leaf_push(&build_unibit_trie(&set, 32).unwrap());
        partition_trie(&t, bits).unwrap()
    }

    #[test]
    fn metrics_single_leaf() {
        let p = pushed_partition(&["0* 7"], 1);
        let m = subtree_metrics(&p.forest, p.forest.roots[0]);
        assert_eq!(m.leaves, 1);
        assert_eq!(m.height, 0);
        assert_eq!(m.leaf_depth_sum, 0);
        assert_eq!(m.avg_depth_per_leaf(), 0.0);
    }

    #[test]
    fn metrics_complete_depth2() {
        let p = pushed_partition(&["00* 1", "01* 2", "10* 3", "11* 4"], 0);
        let m = subtree_metrics(&p.forest, p.forest.roots[0]);
        assert_eq!(m.leaves, 4);
        assert_eq!(m.height, 2);
        assert_eq!(m.avg_depth_per_leaf(), 2.0);
        assert_eq!(m.nodes, 7);
    }

    #[test]
    fn metrics_path() {
        // a chain of length 3: one payload leaf at the bottom, null
        // leaves hanging off each level
        let p = pushed_partition(&["000* 1"], 0);
        let m = subtree_metrics(&p.forest, p.forest.roots[0]);
        assert_eq!(m.height, 3);
        assert_eq!(m.nodes, 7);
        assert_eq!(m.leaves, 4);
    }

    #[test]
    fn zero_factor_inverts_nothing() {
        let p = pushed_partition(&["00* 1", "01* 2", "10* 3", "11* 4"], 1);
        for h in InversionHeuristic::ALL {
            assert!(select_inversions(&p, h, 0, 8).is_empty());
        }
    }

    #[test]
    fn factor_at_stage_count_inverts_everything() {
        let p = pushed_partition(
            &["000* 1", "001* 2", "010* 3", "011* 4", "10* 5", "11* 6"],
            2,
        );
        let h = 8;
        let all = select_inversions(&p, InversionHeuristic::LargestLeaf, h, h);
        assert_eq!(all.len(), p.subtree_count());
    }

    #[test]
    fn largest_leaf_picks_biggest_first() {
        // three subtrees with 5, 3 and 1 leaves under 2 initial bits
        let p = pushed_partition(
            &[
                // cell 00: depth-3 comb with 5 leaves
                "0000* 1", "00010* 2", "00011* 3",
                // cell 01: 3 leaves
                "0100* 4", "0101* 5",
                // cell 10: single replicated leaf via shallow prefix
                "10* 6",
            ],
            2,
        );
        let metrics: Vec<usize> = p
            .forest
            .roots
            .iter()
            .map(|&r| subtree_metrics(&p.forest, r).leaves)
            .collect();
        let ready: Vec<usize> = p
            .forest
            .roots
            .iter()
            .map(|&r| subtree_metrics(&p.forest, r).ready_leaves)
            .collect();
        let best = (0..metrics.len()).max_by_key(|&i| metrics[i]).unwrap();
        // pick a budget that admits exactly one inversion: above the
        // subtree count, below the count after the first pick
        let k = p.subtree_count();
        let after_first = k - 1 + ready[best];
        let stage_count = (0..p.node_count())
            .map(|h| h + 1)
            .find(|&h| {
                let limit = ceil_div(p.node_count(), h);
                limit > k && limit <= after_first
            })
            .expect("some stage count gives a one-pick budget");
        let picked = select_inversions(&p, InversionHeuristic::LargestLeaf, 1, stage_count);
        assert_eq!(picked.len(), 1);
        assert!(picked.contains(&best));
    }

    #[test]
    fn inverted_sets_grow_monotonically_with_factor() {
        let p = pushed_partition(
            &[
                "0000* 1", "0001* 2", "001* 3", "0100* 4", "0110* 5", "10* 6", "1100* 7",
                "1111* 8", "11101* 9",
            ],
            2,
        );
        for h in InversionHeuristic::ALL {
            let mut prev = BTreeSet::new();
            for factor in 0..=12 {
                let cur = select_inversions(&p, h, factor, 6);
                assert!(
                    prev.is_subset(&cur),
                    "factor {factor} shrank the set for {}",
                    h.name()
                );
                prev = cur;
            }
        }
    }
}
