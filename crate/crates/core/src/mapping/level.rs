//! Level-by-level baseline mappings: one tree level per stage.

use crate::tree::{NodeId, SearchTree};

use super::{bidir, Direction, MappingError, MappingResult, PartitionSet};

/// Which level definition drives the assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelMode {
    /// Nodes of equal depth share a stage; the root sits on stage 1 and
    /// packets traverse forward.
    Depth,
    /// Nodes of equal height share a stage; leaves sit on stage 1, the
    /// root near the end, and packets traverse in reverse.
    Height,
}

impl LevelMode {
    pub fn name(self) -> &'static str {
        match self {
            LevelMode::Depth => "depth",
            LevelMode::Height => "height",
        }
    }
}

/// Maps a whole tree level by level onto `stage_count` stages. Returns
/// the trivial one-subtree partition alongside the mapping so callers can
/// validate or materialize it like any other mapping.
pub fn map_level_by_level(
    tree: &SearchTree,
    stage_count: usize,
    mode: LevelMode,
) -> Result<(PartitionSet, MappingResult), MappingError> {
    if stage_count == 0 {
        return Err(MappingError::NoStages);
    }
    let depth = tree.node(tree.root()).height;
    if depth + 1 > stage_count {
        return Err(MappingError::DepthExceedsStages {
            depth,
            stages: stage_count,
        });
    }
    let partition = PartitionSet::whole(tree);
    let forest = &partition.forest;
    let direction = match mode {
        LevelMode::Depth => Direction::Forward,
        LevelMode::Height => Direction::Reverse,
    };
    let stage_of = |id: NodeId| match mode {
        LevelMode::Depth => forest.node(id).depth + 1,
        LevelMode::Height => forest.node(id).height + 1,
    };

    let mut stages: Vec<Vec<NodeId>> = vec![Vec::new(); stage_count];
    // Parents push their whole child block at once, which keeps sibling
    // blocks at consecutive addresses in depth mode.
    let root = forest.roots[0];
    stages[stage_of(root) - 1].push(root);
    for id in forest.subtree_nodes(root) {
        let node = forest.node(id);
        if node.is_terminal() {
            continue;
        }
        for c in node.children.iter().filter_map(|c| *c) {
            stages[stage_of(c) - 1].push(c);
        }
    }

    let mapping = bidir::finish(&partition, vec![direction], stages, stage_count);
    Ok((partition, mapping))
}
