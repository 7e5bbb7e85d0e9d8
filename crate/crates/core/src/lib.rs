//! Search-tree pipelining toolkit: builds routing tries and
//! packet-classification decision trees, partitions them into disjoint
//! subtrees, maps the nodes onto a fixed number of linear pipeline stages
//! in both directions for balanced stage memories, and simulates the
//! resulting dual-entrance dual-port pipeline cycle by cycle, including
//! result caching and non-blocking in-flight memory updates.

pub mod dtree;
pub mod mapping;
pub mod pipeline;
pub mod tree;
pub mod trie;
pub mod workload;

pub use dtree::{build_hypercuts, classify, classify_oracle, DecisionTree, Header, Rule};
pub use mapping::{
    balance_report, map_bidirectional, map_level_by_level, partition_dtree, partition_trie,
    select_inversions, Direction, InversionHeuristic, LevelMode, MappingResult, PartitionSet,
};
pub use pipeline::{
    build_pipeline, lookup_static, memory_footprint, simulate, simulate_with_updates,
    EntryBitsMode, Key, PipelineImage, SimConfig, SimMetrics,
};
pub use tree::{NodeId, NodeKind, Payload, SearchTree, TreeStats};
pub use trie::{build_unibit_trie, leaf_push, lpm_oracle, trie_lookup, Prefix};
