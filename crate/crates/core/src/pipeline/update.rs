//! Offline planning of non-blocking route updates.
//!
//! An update is compiled into write bubbles: tokens that enter the
//! pipeline in the updated subtree's direction, occupy one packet slot,
//! and carry at most one write per stage. Searches ahead of a bubble see
//! the old memory, searches behind it see the new memory, and the
//! opposite direction is untouched because subtrees of the two directions
//! are disjoint.
//!
//! The planner keeps private copies of the forest, mapping and image with
//! every planned change already applied, so consecutive updates compose
//! and the final image can serve as the post-update oracle.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::mapping::{Direction, MappingResult, PartitionIndex, PartitionSet, Placement, SubtreeId};
use crate::tree::{Node, NodeId, NodeKind, Payload};
use crate::trie::{key_bit, mask_to_len, Prefix};

use super::{Branch, BubbleRow, Entry, LeafValue, PipelineImage};

/// One route-table change expressible without re-mapping.
#[derive(Debug, Clone)]
pub enum RouteChange {
    /// Insert a prefix, or change the next hop of an existing one.
    InsertPrefix(Prefix),
    /// Remove a prefix.
    DeletePrefix { bits: u32, len: u8 },
    /// Replace the rule bucket of a decision-tree leaf.
    SetBucket { node: NodeId, bucket: Vec<u32> },
}

/// An update token: per-stage rows applied as the bubble traverses its
/// subtree's direction.
#[derive(Debug, Clone)]
pub struct WriteBubble {
    pub id: u32,
    pub direction: Direction,
    pub subtree: SubtreeId,
    /// Target stage (1-based) to the row written there.
    pub rows: BTreeMap<usize, BubbleRow>,
}

#[derive(Debug, Error)]
pub enum UpdateError {
    #[error("change requires re-mapping: {reason}")]
    NeedsRemap { reason: String },
    #[error("prefix {bits:#010x}/{len} is not in the table")]
    UnknownPrefix { bits: u32, len: u8 },
    #[error("node {node} is not a bucket leaf")]
    NotABucketLeaf { node: NodeId },
    #[error("bucket names unknown rule {rule}")]
    UnknownRule { rule: u32 },
}

/// Plans updates against an image, mutating only its private copies.
pub struct UpdatePlanner {
    partition: PartitionSet,
    mapping: MappingResult,
    image: PipelineImage,
    prefixes: BTreeMap<(u32, u8), u32>,
    next_id: u32,
}

impl UpdatePlanner {
    /// `prefixes` must be the set the trie was built from (empty for
    /// decision-tree images).
    pub fn new(
        partition: &PartitionSet,
        mapping: &MappingResult,
        image: &PipelineImage,
        prefixes: &[Prefix],
    ) -> Self {
        UpdatePlanner {
            partition: partition.clone(),
            mapping: mapping.clone(),
            image: image.clone(),
            prefixes: prefixes
                .iter()
                .map(|p| ((p.bits, p.len), p.next_hop))
                .collect(),
            next_id: 0,
        }
    }

    /// Image with every planned change applied; the post-update oracle.
    pub fn image(&self) -> &PipelineImage {
        &self.image
    }

    pub fn mapping(&self) -> &MappingResult {
        &self.mapping
    }

    /// Compiles one change into bubbles and applies it to the planner's
    /// shadow state. Changes the pipeline cannot absorb in place come
    /// back as [`UpdateError::NeedsRemap`].
    pub fn plan(&mut self, change: &RouteChange) -> Result<Vec<WriteBubble>, UpdateError> {
        match change {
            RouteChange::InsertPrefix(p) => self.plan_insert(*p),
            RouteChange::DeletePrefix { bits, len } => self.plan_delete(*bits, *len),
            RouteChange::SetBucket { node, bucket } => self.plan_set_bucket(*node, bucket.clone()),
        }
    }

    fn subtree_for(&self, bits: u32, len: u8) -> Result<(SubtreeId, u8), UpdateError> {
        let (index_bits, cells) = match &self.partition.index {
            PartitionIndex::InitialBits { bits, cells } => (*bits, cells),
            PartitionIndex::FirstCut { .. } => {
                return Err(UpdateError::NeedsRemap {
                    reason: "prefix changes apply to trie images only".into(),
                })
            }
        };
        if len < index_bits {
            return Err(UpdateError::NeedsRemap {
                reason: format!("prefix length {len} is shorter than the {index_bits}-bit index"),
            });
        }
        let cell = if index_bits == 0 {
            0
        } else {
            (bits >> (32 - index_bits as u32)) as usize
        };
        match cells[cell] {
            Some(s) => Ok((s, index_bits)),
            None => Err(UpdateError::NeedsRemap {
                reason: format!("index cell {cell} is empty; the index itself must change"),
            }),
        }
    }

    /// Next stage along `direction` after `from` with room for `need`
    /// appended entries, counting `reserved` slots already promised to
    /// the change being planned.
    fn stage_with_room(
        &self,
        direction: Direction,
        from: usize,
        need: usize,
        reserved: &BTreeMap<usize, usize>,
    ) -> Option<usize> {
        let capacity = self.image.stage_capacity();
        let candidates: Vec<usize> = match direction {
            Direction::Forward => (from + 1..=self.image.stage_count).collect(),
            Direction::Reverse => (1..from).rev().collect(),
        };
        candidates.into_iter().find(|&s| {
            let used = self.image.stages[s - 1].entries.len() + reserved.get(&s).copied().unwrap_or(0);
            used + need <= capacity
        })
    }

    fn fresh_bubble(&mut self, subtree: SubtreeId) -> WriteBubble {
        let id = self.next_id;
        self.next_id += 1;
        WriteBubble {
            id,
            direction: self.mapping.directions[subtree],
            subtree,
            rows: BTreeMap::new(),
        }
    }

    /// Applies a row to the shadow image and registers it in the bubble.
    fn push_row(&mut self, bubble: &mut WriteBubble, stage: usize, row: BubbleRow) {
        debug_assert!(!bubble.rows.contains_key(&stage), "one row per stage per bubble");
        let mem = &mut self.image.stages[stage - 1].entries;
        for (i, e) in row.entries.iter().enumerate() {
            let at = row.addr + i;
            if at >= mem.len() {
                mem.resize(at + 1, Entry::Null);
            }
            mem[at] = e.clone();
        }
        bubble.rows.insert(stage, row);
    }

    /// Appends a node to the shadow forest/mapping at `stage`, returning
    /// its id and address.
    fn append_node(&mut self, stage: usize, node: Node) -> (NodeId, usize) {
        let id = self.partition.forest.nodes.len();
        self.partition.forest.nodes.push(node);
        let addr = self.mapping.stages[stage - 1].len();
        self.mapping.stages[stage - 1].push(id);
        self.mapping.placements.push(Placement { stage, addr });
        (id, addr)
    }

    fn leaf_entry(payload: &Payload) -> Entry {
        match payload {
            Payload::NextHop(h) => Entry::Leaf(LeafValue::NextHop(*h)),
            Payload::Rules(ids) => Entry::Leaf(LeafValue::Bucket(ids.clone())),
            Payload::None => Entry::Null,
        }
    }

    fn lpm(&self, key: u32) -> Option<u32> {
        self.prefixes
            .iter()
            .filter(|(&(bits, len), _)| len == 0 || (key ^ bits) >> (32 - len as u32) == 0)
            .max_by_key(|(&(_, len), _)| len)
            .map(|(_, &hop)| hop)
    }

    fn plan_insert(&mut self, p: Prefix) -> Result<Vec<WriteBubble>, UpdateError> {
        let (subtree, index_bits) = self.subtree_for(p.bits, p.len)?;
        let direction = self.mapping.directions[subtree];
        let root = self.partition.forest.roots[subtree];

        // walk the prefix path inside the subtree
        let mut at = root;
        let mut depth = index_bits as usize; // absolute bits consumed
        while depth < p.len as usize && !self.partition.forest.node(at).is_terminal() {
            let bit = key_bit(p.bits, depth);
            at = self.partition.forest.node(at).children[bit].expect("dense trie block");
            depth += 1;
        }

        let target_depth = p.len as usize;
        let node = self.partition.forest.node(at);
        let mut bubbles = Vec::new();
        if depth == target_depth && node.is_terminal() {
            // exact leaf: payload swap, one write
            let mut bubble = self.fresh_bubble(subtree);
            let stage = self.mapping.placements[at].stage;
            let payload = Payload::NextHop(p.next_hop);
            let row = BubbleRow {
                addr: self.mapping.placements[at].addr,
                entries: vec![Self::leaf_entry(&payload)],
                write_enable: true,
            };
            self.push_row(&mut bubble, stage, row);
            let n = &mut self.partition.forest.nodes[at];
            n.kind = NodeKind::Leaf;
            n.payload = payload;
            bubbles.push(bubble);
        } else if node.is_terminal() {
            // leaf above the target: grow a chain of child pairs below
            // it. The leaf's region holds no deeper prefix (merges never
            // collapse one away), so its payload is uniform off-path.
            let leaf_path = mask_to_len(p.bits, depth as u8);
            let hidden = self.prefixes.iter().any(|(&(qb, ql), _)| {
                ql as usize > depth
                    && (depth == 0 || (qb ^ leaf_path) >> (32 - depth as u32) == 0)
            });
            if hidden {
                return Err(UpdateError::NeedsRemap {
                    reason: "leaf region hides a deeper prefix; structure is stale".into(),
                });
            }
            let old_payload = node.payload.clone();
            // reserve a stage for every pair up front so a failed
            // allocation leaves no partial mutation behind
            let mut planned = Vec::with_capacity(target_depth - depth);
            let mut reserved: BTreeMap<usize, usize> = BTreeMap::new();
            let mut probe_stage = self.mapping.placements[at].stage;
            for _ in depth..target_depth {
                let stage = self
                    .stage_with_room(direction, probe_stage, 2, &reserved)
                    .ok_or_else(|| UpdateError::NeedsRemap {
                        reason: format!(
                            "no stage after {probe_stage} has room for a new child pair"
                        ),
                    })?;
                *reserved.entry(stage).or_insert(0) += 2;
                planned.push(stage);
                probe_stage = stage;
            }
            let mut bubble = self.fresh_bubble(subtree);
            let mut chain_stage = self.mapping.placements[at].stage;
            let mut parent = at;
            let mut parent_entry_fixup: Vec<(usize, usize, usize)> = Vec::new(); // (node, stage, base)
            for (d, &stage) in (depth..target_depth).zip(&planned) {
                let on_bit = key_bit(p.bits, d);
                let last = d + 1 == target_depth;
                let mut pair_ids = [0usize; 2];
                let mut entries = Vec::with_capacity(2);
                let mut base = usize::MAX;
                for cell in 0..2 {
                    let payload = if cell == on_bit && last {
                        Payload::NextHop(p.next_hop)
                    } else if cell == on_bit {
                        // chain continues; placeholder rewritten below
                        Payload::None
                    } else {
                        old_payload.clone()
                    };
                    let kind = match (&payload, cell == on_bit && !last) {
                        (_, true) => NodeKind::Internal,
                        (Payload::None, _) => NodeKind::Null,
                        _ => NodeKind::Leaf,
                    };
                    let (id, addr) = self.append_node(
                        stage,
                        Node {
                            kind,
                            parent: Some(parent),
                            children: Vec::new(),
                            payload: payload.clone(),
                            cut: None,
                            depth: self.partition.forest.node(parent).depth + 1,
                            height: 0,
                        },
                    );
                    if cell == 0 {
                        base = addr;
                    }
                    pair_ids[cell] = id;
                    entries.push(Self::leaf_entry(&payload));
                }
                self.push_row(
                    &mut bubble,
                    stage,
                    BubbleRow {
                        addr: base,
                        entries,
                        write_enable: true,
                    },
                );
                parent_entry_fixup.push((parent, chain_stage, base));
                {
                    let pn = &mut self.partition.forest.nodes[parent];
                    pn.kind = NodeKind::Internal;
                    pn.payload = Payload::None;
                    pn.children = vec![Some(pair_ids[0]), Some(pair_ids[1])];
                }
                parent = pair_ids[on_bit];
                chain_stage = stage;
            }
            // rewrite each chain node as an internal entry pointing at its
            // freshly written pair; rewriting in place keeps one row per
            // stage because every pair went to a distinct stage
            for (i, (node_id, stage, base)) in parent_entry_fixup.iter().enumerate() {
                let child_stage = self.mapping.placements
                    [self.partition.forest.node(*node_id).children[0].unwrap()]
                .stage;
                let skip = match direction {
                    Direction::Forward => child_stage - stage - 1,
                    Direction::Reverse => stage - child_stage - 1,
                };
                let entry = Entry::Internal {
                    child_base: *base,
                    child_skip: skip,
                    branch: Branch::Bit,
                };
                if i == 0 {
                    // the original leaf's entry: its own row in its stage
                    let row = BubbleRow {
                        addr: self.mapping.placements[*node_id].addr,
                        entries: vec![entry],
                        write_enable: true,
                    };
                    self.push_row(&mut bubble, *stage, row);
                } else {
                    // chain nodes were appended this plan; patch their
                    // pair row in place
                    let row = bubble.rows.get_mut(stage).expect("pair row exists");
                    let addr = self.mapping.placements[*node_id].addr;
                    let off = addr - row.addr;
                    row.entries[off] = entry.clone();
                    self.image.stages[stage - 1].entries[addr] = entry;
                }
            }
            bubbles.push(bubble);
        } else {
            // internal node at the exact depth: leaf payloads beneath it
            // inherit the new prefix unless a longer one covers them
            self.prefixes.insert((p.bits, p.len), p.next_hop);
            let rewrites = self.recompute_leaves(at, path_bits(p.bits, target_depth));
            bubbles = self.pack_rows(subtree, rewrites);
            return Ok(bubbles);
        }
        self.prefixes.insert((p.bits, p.len), p.next_hop);
        Ok(bubbles)
    }

    fn plan_delete(&mut self, bits: u32, len: u8) -> Result<Vec<WriteBubble>, UpdateError> {
        let bits = mask_to_len(bits, len);
        if !self.prefixes.contains_key(&(bits, len)) {
            return Err(UpdateError::UnknownPrefix { bits, len });
        }
        let (subtree, index_bits) = self.subtree_for(bits, len)?;
        let hop = self.prefixes.remove(&(bits, len)).expect("checked above");

        let root = self.partition.forest.roots[subtree];
        let mut at = root;
        let mut depth = index_bits as usize;
        while depth < len as usize && !self.partition.forest.node(at).is_terminal() {
            let bit = key_bit(bits, depth);
            at = self.partition.forest.node(at).children[bit].expect("dense trie block");
            depth += 1;
        }

        if depth < len as usize {
            // the prefix's structure was merged into a wider leaf; the
            // region stays uniform only if the fallback value matches
            let inside = self.lpm(bits);
            let outside_probe = bits ^ (1 << (31 - depth));
            let outside = self.lpm(outside_probe);
            if inside != outside {
                self.prefixes.insert((bits, len), hop);
                return Err(UpdateError::NeedsRemap {
                    reason: "delete would re-split a merged leaf".into(),
                });
            }
        }

        let rewrites = self.recompute_leaves(at, path_bits(bits, depth));

        // single-level merge: if the affected node's sibling pair became
        // uniform, rewrite the parent to a leaf and strand the children.
        // Only pure scaffolding may collapse: a prefix living strictly
        // below the parent still needs its path-end node, even when its
        // payload currently equals the surroundings.
        let node = self.partition.forest.node(at);
        if node.is_terminal() && depth > 0 {
            let parent_depth = depth - 1;
            let parent_path = mask_to_len(bits, parent_depth as u8);
            let deeper_prefix_below = self.prefixes.iter().any(|(&(qb, ql), _)| {
                ql as usize > parent_depth
                    && (parent_depth == 0
                        || (qb ^ parent_path) >> (32 - parent_depth as u32) == 0)
            });
            if let (Some(parent), false) = (node.parent, deeper_prefix_below) {
                let kids: Vec<NodeId> = self.partition.forest.node(parent).child_ids().collect();
                let all_leaves = kids
                    .iter()
                    .all(|&k| self.partition.forest.node(k).is_terminal());
                let payloads: Vec<Payload> = kids
                    .iter()
                    .map(|&k| self.partition.forest.node(k).payload.clone())
                    .collect();
                if all_leaves && kids.len() == 2 && payloads[0] == payloads[1] {
                    let payload = payloads[0].clone();
                    let mut bubble = self.fresh_bubble(subtree);
                    let place = self.mapping.placements[parent];
                    self.push_row(
                        &mut bubble,
                        place.stage,
                        BubbleRow {
                            addr: place.addr,
                            entries: vec![Self::leaf_entry(&payload)],
                            write_enable: true,
                        },
                    );
                    let pn = &mut self.partition.forest.nodes[parent];
                    pn.kind = match payload {
                        Payload::None => NodeKind::Null,
                        _ => NodeKind::Leaf,
                    };
                    pn.payload = payload;
                    pn.children = Vec::new();
                    // stale children stay in memory, unreferenced
                    return Ok(vec![bubble]);
                }
            }
        }

        let bubbles = self.pack_rows(subtree, rewrites);
        Ok(bubbles)
    }

    fn plan_set_bucket(
        &mut self,
        node: NodeId,
        bucket: Vec<u32>,
    ) -> Result<Vec<WriteBubble>, UpdateError> {
        if node >= self.partition.forest.len()
            || !matches!(self.partition.forest.node(node).payload, Payload::Rules(_))
        {
            return Err(UpdateError::NotABucketLeaf { node });
        }
        if let Some(&bad) = bucket
            .iter()
            .find(|&&r| r as usize >= self.image.rules.len())
        {
            return Err(UpdateError::UnknownRule { rule: bad });
        }
        let owner = self.partition.forest.subtree_of();
        let subtree = owner[node];
        let payload = Payload::Rules(bucket);
        let mut bubble = self.fresh_bubble(subtree);
        let place = self.mapping.placements[node];
        self.push_row(
            &mut bubble,
            place.stage,
            BubbleRow {
                addr: place.addr,
                entries: vec![Self::leaf_entry(&payload)],
                write_enable: true,
            },
        );
        self.partition.forest.nodes[node].payload = payload;
        Ok(vec![bubble])
    }

    /// Recomputes the stored payload of every leaf under `at` against the
    /// current prefix set; returns the rows for leaves whose value
    /// changed. `path` holds the key bits leading to `at`.
    fn recompute_leaves(&mut self, at: NodeId, path: u32) -> Vec<(usize, BubbleRow)> {
        let mut rewrites = Vec::new();
        // (node, key bits so far, relative depth); a node at relative
        // depth d branches on absolute bit index `initial_bits + d`
        let mut stack = vec![(at, path, self.partition.forest.node(at).depth)];
        while let Some((id, bits, depth)) = stack.pop() {
            let node = self.partition.forest.node(id);
            if !node.is_terminal() {
                let branch_bit = 31 - (self.image.initial_bits as usize + depth);
                for (cell, c) in node.children.iter().enumerate() {
                    if let Some(c) = *c {
                        let child_bits = if cell == 1 { bits | 1 << branch_bit } else { bits };
                        stack.push((c, child_bits, depth + 1));
                    }
                }
                continue;
            }
            let new_payload = match self.lpm(bits) {
                Some(h) => Payload::NextHop(h),
                None => Payload::None,
            };
            if node.payload != new_payload {
                let place = self.mapping.placements[id];
                rewrites.push((
                    place.stage,
                    BubbleRow {
                        addr: place.addr,
                        entries: vec![Self::leaf_entry(&new_payload)],
                        write_enable: true,
                    },
                ));
                let n = &mut self.partition.forest.nodes[id];
                n.payload = new_payload;
                n.kind = match n.payload {
                    Payload::None => NodeKind::Null,
                    _ => NodeKind::Leaf,
                };
            }
        }
        rewrites
    }

    /// Splits rows into bubbles holding at most one row per stage.
    fn pack_rows(
        &mut self,
        subtree: SubtreeId,
        rows: Vec<(usize, BubbleRow)>,
    ) -> Vec<WriteBubble> {
        let mut by_stage: BTreeMap<usize, Vec<BubbleRow>> = BTreeMap::new();
        for (stage, row) in rows {
            by_stage.entry(stage).or_default().push(row);
        }
        let mut bubbles: Vec<WriteBubble> = Vec::new();
        let depth = by_stage.values().map(|v| v.len()).max().unwrap_or(0);
        for k in 0..depth {
            let mut bubble = self.fresh_bubble(subtree);
            for (&stage, rows) in &by_stage {
                if let Some(row) = rows.get(k) {
                    let mem = &mut self.image.stages[stage - 1].entries;
                    for (i, e) in row.entries.iter().enumerate() {
                        mem[row.addr + i] = e.clone();
                    }
                    bubble.rows.insert(stage, row.clone());
                }
            }
            bubbles.push(bubble);
        }
        bubbles
    }
}

/// Zero-pads the top `len` bits of `bits` into a probe key.
fn path_bits(bits: u32, len: usize) -> u32 {
    mask_to_len(bits, len as u8)
}

/// Plans one change, mutating the planner's shadow state.
pub fn plan_update(
    planner: &mut UpdatePlanner,
    change: &RouteChange,
) -> Result<Vec<WriteBubble>, UpdateError> {
    planner.plan(change)
}
