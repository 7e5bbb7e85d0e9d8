use pipetree_core::mapping::{
    balance_report, map_bidirectional, partition_trie, select_inversions, subtree_metrics,
    InversionHeuristic,
};
use pipetree_core::trie::{build_unibit_trie, leaf_push};
use pipetree_core::workload::{gen_routing_table, TableGenParams};

fn main() {
    let entries = 120_000;
    let set = gen_routing_table(&TableGenParams::new(entries, 42));
    let tree = leaf_push(&build_unibit_trie(&set, 32).unwrap());
    let partition = partition_trie(&tree, 12).unwrap();
    let n = partition.node_count();
    let k = partition.subtree_count();
    println!("N={n} K={k} even={}", (n + 24) / 25);
    let singles = partition
        .forest
        .roots
        .iter()
        .filter(|&&r| partition.forest.node(r).is_terminal())
        .count();
    println!("single-node subtrees: {singles}");
    for h in InversionHeuristic::ALL {
        let inv = select_inversions(&partition, h, 1, 25);
        let total_leaves: usize = inv
            .iter()
            .map(|&s| subtree_metrics(&partition.forest, partition.forest.roots[s]).leaves)
            .sum();
        let inv_nodes: usize = inv
            .iter()
            .map(|&s| subtree_metrics(&partition.forest, partition.forest.roots[s]).nodes)
            .sum();
        let m = map_bidirectional(&partition, &inv, 25).unwrap();
        let r = balance_report(&m);
        let sizes: Vec<usize> = r.per_stage.clone();
        println!(
            "{:<26} V={:<5} leaves={:<6} inv_nodes={:<7} max/even={:.4}",
            h.name(),
            inv.len(),
            total_leaves,
            inv_nodes,
            r.max_over_even
        );
        println!("  stages: {sizes:?}");
    }
}
