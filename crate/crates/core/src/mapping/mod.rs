//! Mapping search-tree nodes onto linear pipeline stages.
//!
//! A [`PartitionSet`] splits a tree into disjoint subtrees plus an index
//! that routes a key to its subtree. [`select_inversions`] picks subtrees
//! to traverse from the opposite pipeline entrance, and
//! [`map_bidirectional`] assigns every node a stage and a stage-local
//! address, filling each stage up to an even share of the remaining nodes.
//! Level-by-level mappings are provided as baselines.
//!
//! The one ordering rule every mapping obeys: an ancestor must sit on an
//! earlier stage than its descendants along the subtree's traversal
//! direction.

mod bidir;
mod invert;
mod level;
mod partition;

pub use bidir::map_bidirectional;
pub use invert::{select_inversions, subtree_metrics, SubtreeMetrics};
pub use level::{map_level_by_level, LevelMode};
pub use partition::{partition_dtree, partition_trie};

use thiserror::Error;

use crate::dtree::CutSpec;
use crate::tree::{Node, NodeId, SearchTree};

pub type SubtreeId = usize;

/// Traversal direction of a subtree through the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Enters at stage 1, root first.
    Forward,
    /// Enters at the last stage, root stored near it, leaves first in
    /// stage order.
    Reverse,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Reverse => "reverse",
        }
    }
}

/// Heuristic used to rank subtrees for inversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InversionHeuristic {
    LargestLeaf,
    LeastHeight,
    LargestLeafPerHeight,
    LeastAvgDepthPerLeaf,
}

impl InversionHeuristic {
    pub const ALL: [InversionHeuristic; 4] = [
        InversionHeuristic::LargestLeaf,
        InversionHeuristic::LeastHeight,
        InversionHeuristic::LargestLeafPerHeight,
        InversionHeuristic::LeastAvgDepthPerLeaf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InversionHeuristic::LargestLeaf => "largest_leaf",
            InversionHeuristic::LeastHeight => "least_height",
            InversionHeuristic::LargestLeafPerHeight => "largest_leaf_per_height",
            InversionHeuristic::LeastAvgDepthPerLeaf => "least_avg_depth_per_leaf",
        }
    }
}

/// Node pool holding the disjoint subtrees of a partition. Depths are
/// relative to each subtree's root; heights are unaffected by the split.
#[derive(Debug, Clone)]
pub struct Forest {
    pub nodes: Vec<Node>,
    /// `roots[s]` is the root of subtree `s`.
    pub roots: Vec<NodeId>,
}

impl Forest {
    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Preorder node ids of one subtree.
    pub fn subtree_nodes(&self, root: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            out.push(id);
            for c in self.nodes[id].children.iter().rev().filter_map(|c| *c) {
                stack.push(c);
            }
        }
        out
    }

    /// Subtree id of every node.
    pub fn subtree_of(&self) -> Vec<SubtreeId> {
        let mut owner = vec![usize::MAX; self.nodes.len()];
        for (s, &root) in self.roots.iter().enumerate() {
            for id in self.subtree_nodes(root) {
                owner[id] = s;
            }
        }
        owner
    }
}

/// Routes a lookup key to the subtree holding its region.
#[derive(Debug, Clone)]
pub enum PartitionIndex {
    /// Trie partitioning: the first `bits` key bits select a cell.
    /// `bits == 0` routes every key to cell 0.
    InitialBits {
        bits: u8,
        cells: Vec<Option<SubtreeId>>,
    },
    /// Decision-tree partitioning by the root's cut function. An empty
    /// cut routes every header to cell 0.
    FirstCut {
        cut: CutSpec,
        cells: Vec<Option<SubtreeId>>,
    },
}

impl PartitionIndex {
    pub fn cells(&self) -> &[Option<SubtreeId>] {
        match self {
            PartitionIndex::InitialBits { cells, .. } => cells,
            PartitionIndex::FirstCut { cells, .. } => cells,
        }
    }

    /// Key bits consumed before a packet enters its subtree.
    pub fn initial_bits(&self) -> u8 {
        match self {
            PartitionIndex::InitialBits { bits, .. } => *bits,
            PartitionIndex::FirstCut { .. } => 0,
        }
    }
}

/// Disjoint subtrees plus the index routing keys to them.
#[derive(Debug, Clone)]
pub struct PartitionSet {
    pub forest: Forest,
    pub index: PartitionIndex,
}

impl PartitionSet {
    /// Trivial partition: the whole tree as a single forward-eligible
    /// subtree. Used by the level-by-level baselines.
    pub fn whole(tree: &SearchTree) -> Self {
        let mut forest = Forest {
            nodes: Vec::with_capacity(tree.len()),
            roots: Vec::new(),
        };
        let root = partition::copy_subtree(&mut forest, tree, tree.root());
        forest.roots.push(root);
        PartitionSet {
            forest,
            index: PartitionIndex::InitialBits {
                bits: 0,
                cells: vec![Some(0)],
            },
        }
    }

    pub fn subtree_count(&self) -> usize {
        self.forest.roots.len()
    }

    pub fn node_count(&self) -> usize {
        self.forest.len()
    }
}

/// Stage and stage-local address of one node. Stages are numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub stage: usize,
    pub addr: usize,
}

/// Direction Index Table entry for one subtree: traversal direction, the
/// distance from that direction's entrance to the stage holding the
/// subtree root (0 = the entrance stage itself), and the root's address.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DitEntry {
    pub direction: Direction,
    pub distance: usize,
    pub addr: usize,
}

/// A complete stage assignment for one partition.
#[derive(Debug, Clone)]
pub struct MappingResult {
    pub stage_count: usize,
    /// `stages[i]` lists the nodes of stage `i + 1` in address order.
    pub stages: Vec<Vec<NodeId>>,
    /// Placement per node id.
    pub placements: Vec<Placement>,
    /// Traversal direction per subtree.
    pub directions: Vec<Direction>,
    /// DIT entry per subtree.
    pub dit: Vec<DitEntry>,
}

impl MappingResult {
    pub fn max_stage_nodes(&self) -> usize {
        self.stages.iter().map(|s| s.len()).max().unwrap_or(0)
    }

    pub fn node_count(&self) -> usize {
        self.placements.len()
    }

    /// `node_id,stage,addr,direction` lines, one per node, for golden
    /// files; requires the owning partition for node-to-subtree mapping.
    pub fn dump(&self, partition: &PartitionSet) -> String {
        let owner = partition.forest.subtree_of();
        let mut out = String::from("node_id,stage,addr,direction\n");
        for (id, p) in self.placements.iter().enumerate() {
            let dir = self.directions[owner[id]];
            out.push_str(&format!("{},{},{},{}\n", id, p.stage, p.addr, dir.name()));
        }
        out
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MappingError {
    #[error("initial bits {bits} outside supported range 0..=16")]
    InitialBits { bits: u8 },
    #[error("trie is not leaf-pushed at node {node}")]
    NotLeafPushed { node: NodeId },
    #[error("stage count must be at least 1")]
    NoStages,
    #[error("tree depth {depth} does not fit in {stages} stages")]
    DepthExceedsStages { depth: usize, stages: usize },
    #[error(
        "node {node} cannot be placed: needs {priority} further stages but only {remaining} remain"
    )]
    Infeasible {
        node: NodeId,
        priority: usize,
        remaining: usize,
    },
    #[error("{count} nodes unmapped after the last stage (first: node {node})")]
    Unmapped { count: usize, node: NodeId },
    #[error("inverted set names unknown subtree {subtree}")]
    UnknownSubtree { subtree: SubtreeId },
}

/// A single failed mapping check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MappingViolation {
    /// Parent/child pair mapped against the subtree's direction.
    OrderViolation {
        parent: NodeId,
        child: NodeId,
        parent_stage: usize,
        child_stage: usize,
        direction: Direction,
    },
    /// Stage outside `1..=stage_count`.
    StageOutOfRange { node: NodeId, stage: usize },
    /// Placement disagrees with the stage listing or reuses an address.
    AddressClash { node: NodeId, stage: usize, addr: usize },
    /// Node and stage-list totals differ.
    CountMismatch { mapped: usize, expected: usize },
}

impl std::fmt::Display for MappingViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MappingViolation::OrderViolation {
                parent,
                child,
                parent_stage,
                child_stage,
                direction,
            } => write!(
                f,
                "{} subtree: parent {parent}@{parent_stage} vs child {child}@{child_stage}",
                direction.name()
            ),
            MappingViolation::StageOutOfRange { node, stage } => {
                write!(f, "node {node} on stage {stage} out of range")
            }
            MappingViolation::AddressClash { node, stage, addr } => {
                write!(f, "node {node} address clash at stage {stage} addr {addr}")
            }
            MappingViolation::CountMismatch { mapped, expected } => {
                write!(f, "{mapped} nodes in stage lists, {expected} in forest")
            }
        }
    }
}

/// Checks a mapping against its partition: every node placed exactly
/// once, addresses unique within a stage, and ancestor ordering respected
/// per subtree direction. Returns all violations found (empty = valid).
pub fn validate_mapping(partition: &PartitionSet, mapping: &MappingResult) -> Vec<MappingViolation> {
    let forest = &partition.forest;
    let mut violations = Vec::new();

    let mapped: usize = mapping.stages.iter().map(|s| s.len()).sum();
    if mapped != forest.len() || mapping.placements.len() != forest.len() {
        violations.push(MappingViolation::CountMismatch {
            mapped,
            expected: forest.len(),
        });
    }

    for (id, p) in mapping.placements.iter().enumerate() {
        if p.stage == 0 || p.stage > mapping.stage_count {
            violations.push(MappingViolation::StageOutOfRange {
                node: id,
                stage: p.stage,
            });
        }
    }
    for (i, stage) in mapping.stages.iter().enumerate() {
        for (addr, &node) in stage.iter().enumerate() {
            let p = mapping.placements.get(node).copied();
            if p != Some(Placement { stage: i + 1, addr }) {
                violations.push(MappingViolation::AddressClash {
                    node,
                    stage: i + 1,
                    addr,
                });
            }
        }
    }

    let owner = forest.subtree_of();
    for id in 0..forest.len() {
        let parent = match forest.node(id).parent {
            Some(p) => p,
            None => continue,
        };
        let dir = mapping.directions[owner[id]];
        let ps = mapping.placements[parent].stage;
        let cs = mapping.placements[id].stage;
        let ok = match dir {
            Direction::Forward => ps < cs,
            Direction::Reverse => ps > cs,
        };
        if !ok {
            violations.push(MappingViolation::OrderViolation {
                parent,
                child: id,
                parent_stage: ps,
                child_stage: cs,
                direction: dir,
            });
        }
    }
    violations
}

/// Per-stage node counts and the balance figures derived from them.
#[derive(Debug, Clone)]
pub struct BalanceReport {
    pub per_stage: Vec<usize>,
    pub total: usize,
    pub max: usize,
    pub mean: f64,
    pub max_over_mean: f64,
    /// Max stage size over the perfectly even share `ceil(total / stages)`.
    pub max_over_even: f64,
}

impl BalanceReport {
    /// `stage,count` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,count\n");
        for (i, c) in self.per_stage.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, c));
        }
        out
    }
}

pub fn balance_report(mapping: &MappingResult) -> BalanceReport {
    let per_stage: Vec<usize> = mapping.stages.iter().map(|s| s.len()).collect();
    let total: usize = per_stage.iter().sum();
    let max = per_stage.iter().copied().max().unwrap_or(0);
    let stages = per_stage.len().max(1);
    let mean = total as f64 / stages as f64;
    let even = (total + stages - 1) / stages;
    BalanceReport {
        per_stage,
        total,
        max,
        mean,
        max_over_mean: if total == 0 { 0.0 } else { max as f64 / mean },
        max_over_even: if total == 0 {
            0.0
        } else {
            max as f64 / even as f64
        },
    }
}

pub(crate) fn ceil_div(a: usize, b: usize) -> usize {
    if b == 0 {
        0
    } else {
        (a + b - 1) / b
    }
}
