//! Bidirectional fine-grained stage assignment.
//!
//! Nodes are placed in sibling blocks (all children of one node), so a
//! block occupies consecutive addresses in a single stage and one base
//! address plus a branch cell reaches any child. Subtree roots form
//! one-node blocks.
//!
//! Stages are filled from a ready list ordered by node priority — height
//! for forward subtrees, depth for reverse ones — and each stage accepts
//! blocks until it holds an even share of the remaining nodes. A block
//! whose priority equals the remaining stage budget is placed immediately
//! regardless of the share; one whose priority exceeds the budget makes
//! the mapping infeasible. Forward blocks release their children's blocks
//! for the following stage; a reverse block is released once every child
//! block below it has been placed.

use std::collections::BTreeSet;

use crate::tree::NodeId;

use super::{
    ceil_div, Direction, DitEntry, MappingError, MappingResult, PartitionSet, Placement,
    SubtreeId,
};

/// One placement unit. Member node ids live in a shared flat pool to
/// keep unit construction allocation-free at forest scale.
struct Unit {
    members_at: u32,
    members_len: u32,
    subtree: SubtreeId,
    direction: Direction,
    priority: usize,
    /// Reverse blocks: child blocks not yet fully placed.
    pending: usize,
    /// Reverse blocks: the block holding these members' parent.
    parent_unit: Option<usize>,
}

impl Unit {
    fn members<'a>(&self, pool: &'a [NodeId]) -> &'a [NodeId] {
        &pool[self.members_at as usize..(self.members_at + self.members_len) as usize]
    }
}

pub fn map_bidirectional(
    partition: &PartitionSet,
    inverted: &BTreeSet<SubtreeId>,
    stage_count: usize,
) -> Result<MappingResult, MappingError> {
    if stage_count == 0 {
        return Err(MappingError::NoStages);
    }
    let forest = &partition.forest;
    let subtree_count = forest.roots.len();
    if let Some(&bad) = inverted.iter().find(|&&s| s >= subtree_count) {
        return Err(MappingError::UnknownSubtree { subtree: bad });
    }
    let directions: Vec<Direction> = (0..subtree_count)
        .map(|s| {
            if inverted.contains(&s) {
                Direction::Reverse
            } else {
                Direction::Forward
            }
        })
        .collect();

    let mut units: Vec<Unit> = Vec::new();
    let mut pool: Vec<NodeId> = Vec::with_capacity(forest.len() + subtree_count);
    let mut unit_of_node: Vec<usize> = vec![usize::MAX; forest.len()];
    // unit formed by a node's children, keyed by the parent node
    let mut block_under: Vec<usize> = vec![usize::MAX; forest.len()];
    let mut subtree_size = vec![0usize; subtree_count];

    for s in 0..subtree_count {
        let dir = directions[s];
        let nodes = forest.subtree_nodes(forest.roots[s]);
        subtree_size[s] = nodes.len();
        let mut push_unit = |units: &mut Vec<Unit>,
                             unit_of_node: &mut Vec<usize>,
                             pool: &mut Vec<NodeId>,
                             members_at: usize,
                             parent: Option<NodeId>| {
            let id = units.len();
            let members = &pool[members_at..];
            let priority = members
                .iter()
                .map(|&m| match dir {
                    Direction::Forward => forest.node(m).height,
                    Direction::Reverse => forest.node(m).depth,
                })
                .max()
                .expect("blocks are non-empty");
            let pending = members
                .iter()
                .filter(|&&m| !forest.node(m).is_terminal())
                .count();
            for &m in members {
                unit_of_node[m] = id;
            }
            units.push(Unit {
                members_at: members_at as u32,
                members_len: (pool.len() - members_at) as u32,
                subtree: s,
                direction: dir,
                priority,
                pending,
                parent_unit: parent.map(|p| unit_of_node[p]),
            });
            id
        };
        let at = pool.len();
        pool.push(forest.roots[s]);
        push_unit(&mut units, &mut unit_of_node, &mut pool, at, None);
        for &m in &nodes {
            let node = forest.node(m);
            if node.is_terminal() {
                continue;
            }
            let at = pool.len();
            for c in &node.children {
                pool.push(c.expect("mapped trees have dense child blocks"));
            }
            let id = push_unit(&mut units, &mut unit_of_node, &mut pool, at, Some(m));
            block_under[m] = id;
        }
    }

    // fixed pop order: priority first, then larger subtree, then lower
    // node id, packed into one sortable key
    let max_priority = units.iter().map(|u| u.priority).max().unwrap_or(0) as u64;
    let max_size = subtree_size.iter().copied().max().unwrap_or(0) as u64;
    let mut by_rank: Vec<(u128, usize)> = units
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let key = ((max_priority - u.priority as u64) as u128) << 96
                | ((max_size - subtree_size[u.subtree] as u64) as u128) << 48
                | u.members(&pool)[0] as u128;
            (key, i)
        })
        .collect();
    by_rank.sort_unstable();
    let mut rank = vec![0usize; units.len()];
    for (i, &(_, u)) in by_rank.iter().enumerate() {
        rank[u] = i;
    }

    // forward subtrees start at their roots, reverse ones at their leaves
    let mut ready: Vec<usize> = (0..units.len())
        .filter(|&u| match units[u].direction {
            Direction::Forward => units[u].parent_unit.is_none(),
            Direction::Reverse => units[u].pending == 0,
        })
        .collect();
    ready.sort_by_key(|&u| rank[u]);

    let mut popped = vec![false; units.len()];
    let mut next_ready: Vec<usize> = Vec::new();
    let mut stages: Vec<Vec<NodeId>> = vec![Vec::new(); stage_count];
    let mut remaining_nodes = forest.len();

    for stage_idx in 0..stage_count {
        let remaining_stages = stage_count - stage_idx;
        let share = ceil_div(remaining_nodes, remaining_stages);
        let mut filled = 0usize;
        let mut head = 0usize;
        loop {
            while head < ready.len() && popped[ready[head]] {
                head += 1;
            }
            if head >= ready.len() {
                break;
            }
            let head_unit = ready[head];
            let priority = units[head_unit].priority;
            if priority + 1 > remaining_stages {
                return Err(MappingError::Infeasible {
                    node: units[head_unit].members(&pool)[0],
                    priority,
                    remaining: remaining_stages,
                });
            }
            let pick = if priority + 1 == remaining_stages {
                // critical: must go into this stage
                Some(head)
            } else if filled >= share {
                None
            } else {
                let budget = share - filled;
                ready[head..]
                    .iter()
                    .position(|&u| !popped[u] && units[u].members_len as usize <= budget)
                    .map(|off| head + off)
            };
            let at = match pick {
                Some(at) => at,
                None => break,
            };
            let u = ready[at];
            popped[u] = true;
            filled += units[u].members_len as usize;
            stages[stage_idx].extend_from_slice(units[u].members(&pool));
            match units[u].direction {
                Direction::Forward => {
                    for &m in units[u].members(&pool) {
                        let b = block_under[m];
                        if b != usize::MAX {
                            next_ready.push(b);
                        }
                    }
                }
                Direction::Reverse => {
                    if let Some(pu) = units[u].parent_unit {
                        units[pu].pending -= 1;
                        if units[pu].pending == 0 {
                            next_ready.push(pu);
                        }
                    }
                }
            }
        }
        remaining_nodes -= filled;
        ready.retain(|&u| !popped[u]);
        next_ready.sort_by_key(|&u| rank[u]);
        ready = merge_by_rank(&ready, &next_ready, &rank);
        next_ready.clear();
    }

    if remaining_nodes > 0 {
        let node = units
            .iter()
            .enumerate()
            .find(|(i, _)| !popped[*i])
            .map(|(_, u)| u.members(&pool)[0])
            .unwrap_or(0);
        return Err(MappingError::Unmapped {
            count: remaining_nodes,
            node,
        });
    }

    Ok(finish(partition, directions, stages, stage_count))
}

fn merge_by_rank(a: &[usize], b: &[usize], rank: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if rank[a[i]] <= rank[b[j]] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Assigns stage-local addresses in placement order and derives the DIT.
pub(crate) fn finish(
    partition: &PartitionSet,
    directions: Vec<Direction>,
    stages: Vec<Vec<NodeId>>,
    stage_count: usize,
) -> MappingResult {
    let forest = &partition.forest;
    let mut placements = vec![Placement { stage: 0, addr: 0 }; forest.len()];
    for (i, stage) in stages.iter().enumerate() {
        for (addr, &node) in stage.iter().enumerate() {
            placements[node] = Placement { stage: i + 1, addr };
        }
    }
    let dit = forest
        .roots
        .iter()
        .enumerate()
        .map(|(s, &root)| {
            let p = placements[root];
            let distance = match directions[s] {
                Direction::Forward => p.stage - 1,
                Direction::Reverse => stage_count - p.stage,
            };
            DitEntry {
                direction: directions[s],
                distance,
                addr: p.addr,
            }
        })
        .collect();
    MappingResult {
        stage_count,
        stages,
        placements,
        directions,
        dit,
    }
}
