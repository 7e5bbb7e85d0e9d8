//! Materialized pipeline images and their static lookup semantics.
//!
//! A [`PipelineImage`] holds one memory per stage. Each entry is either a
//! terminal (payload or null) or an internal entry carrying the base
//! address of its child block plus the number of stages to skip before
//! that block's stage. A Direction Index Table routes a key to its
//! subtree's entrance, entry stage distance and root address. Forward
//! traffic walks stage 1 towards the last stage; reverse traffic walks
//! the other way, and both can touch the same stage in the same cycle
//! thanks to the per-stage dual-port memory modeled in [`sim`].

mod cache;
pub mod sim;
pub mod update;

pub use sim::{simulate, simulate_with_updates, PacketOutcome, QueuePolicy, SimConfig, SimMetrics};
pub use update::{plan_update, RouteChange, UpdateError, UpdatePlanner, WriteBubble};

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dtree::{CutSpec, Header, Rule};
use crate::mapping::{Direction, DitEntry, MappingResult, PartitionIndex, PartitionSet, SubtreeId};
use crate::tree::{NodeKind, Payload};
use crate::trie::key_bit;

/// A lookup key: a destination address for tries, a 5-tuple for decision
/// trees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Key {
    Ip(u32),
    FiveTuple(Header),
}

/// Branching function stored in an internal entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Branch {
    /// Consume the next key bit; the child block has two cells.
    Bit,
    /// Evaluate a multi-field cut; one cell per partition product.
    Cut(CutSpec),
}

/// Terminal payload of a leaf entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LeafValue {
    NextHop(u32),
    /// Rule ids in priority order; matched against the header on arrival.
    Bucket(Vec<u32>),
}

/// One stage-memory word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Entry {
    Null,
    Leaf(LeafValue),
    Internal {
        /// Address of cell 0 of the child block in the child stage.
        child_base: usize,
        /// Stages to pass through before the child stage (0 = adjacent).
        child_skip: usize,
        branch: Branch,
    },
}

#[derive(Debug, Clone, Default)]
pub struct StageMemory {
    pub entries: Vec<Entry>,
}

/// One write carried by a bubble into a single stage: `entries` land at
/// consecutive addresses starting at `addr`. Multi-entry writes model the
/// block-wide write line used when a child block is created whole.
#[derive(Debug, Clone)]
pub struct BubbleRow {
    pub addr: usize,
    pub entries: Vec<Entry>,
    pub write_enable: bool,
}

#[derive(Debug, Clone)]
pub struct PipelineImage {
    pub stage_count: usize,
    pub stages: Vec<StageMemory>,
    /// Routes a key to a subtree (copied from the partition).
    pub index: PartitionIndex,
    /// Entrance, distance and root address per subtree.
    pub dit: Vec<DitEntry>,
    /// Address width each stage is provisioned for.
    pub addr_bits: u8,
    /// Key bits already consumed by the index before entering a subtree.
    pub initial_bits: u8,
    /// Rules referenced by bucket leaves; empty for trie images.
    pub rules: Vec<Rule>,
    /// Per-stage write-bubble tables, keyed by bubble id; the row at
    /// index `s` targets stage `s + 1`. A hardware table would sit in the
    /// preceding stage along the bubble's direction; applying the row as
    /// the bubble enters the target stage is timing-equivalent.
    pub bubble_tables: Vec<BTreeMap<u32, BubbleRow>>,
}

impl PipelineImage {
    pub fn stage_capacity(&self) -> usize {
        1usize << self.addr_bits
    }

    /// Entries currently materialized per stage.
    pub fn stage_sizes(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.entries.len()).collect()
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("address width {bits} outside supported range 1..=24")]
    BadAddrBits { bits: u8 },
    #[error(
        "stage {stage} needs {entries} entries, over the 2^{addr_bits} address space; {required_bits} address bits required"
    )]
    AddrOverflow {
        stage: usize,
        entries: usize,
        addr_bits: u8,
        required_bits: u8,
    },
    #[error("children of node {parent} are not co-located; block addressing impossible")]
    BlockSplit { parent: usize },
    #[error("invalid simulation config: {reason}")]
    BadConfig { reason: String },
    #[error("simulation stopped making progress at cycle {cycle}")]
    Stuck { cycle: u64 },
}

/// Index cell for a key, when the key type fits the index.
pub fn route_cell(index: &PartitionIndex, key: &Key) -> Option<usize> {
    match (index, key) {
        (PartitionIndex::InitialBits { bits: 0, .. }, _) => Some(0),
        (PartitionIndex::InitialBits { bits, .. }, Key::Ip(k)) => {
            Some((k >> (32 - *bits as u32)) as usize)
        }
        (PartitionIndex::FirstCut { cut, .. }, _) if cut.dims.is_empty() => Some(0),
        (PartitionIndex::FirstCut { cut, .. }, Key::FiveTuple(h)) => Some(cut.cell_index(h)),
        _ => None,
    }
}

/// DIT consultation: the subtree a key belongs to, or `None` for keys in
/// empty regions.
pub fn route(image: &PipelineImage, key: &Key) -> Option<(SubtreeId, DitEntry)> {
    let cell = route_cell(&image.index, key)?;
    let subtree = image.index.cells().get(cell).copied().flatten()?;
    Some((subtree, image.dit[subtree]))
}

/// Entry stage for a DIT entry, 1-based.
pub fn entry_stage(stage_count: usize, dit: &DitEntry) -> usize {
    match dit.direction {
        Direction::Forward => 1 + dit.distance,
        Direction::Reverse => stage_count - dit.distance,
    }
}

/// Materializes a validated mapping into stage memories. Trie child pairs
/// and decision-tree child blocks must sit at consecutive addresses of a
/// single stage; `rules` backs bucket leaves and may be empty for tries.
pub fn build_pipeline(
    partition: &PartitionSet,
    mapping: &MappingResult,
    addr_bits: u8,
    rules: &[Rule],
) -> Result<PipelineImage, PipelineError> {
    if addr_bits == 0 || addr_bits > 24 {
        return Err(PipelineError::BadAddrBits { bits: addr_bits });
    }
    let capacity = 1usize << addr_bits;
    for (i, stage) in mapping.stages.iter().enumerate() {
        if stage.len() > capacity {
            let mut required = addr_bits;
            while (1usize << required) < stage.len() {
                required += 1;
            }
            return Err(PipelineError::AddrOverflow {
                stage: i + 1,
                entries: stage.len(),
                addr_bits,
                required_bits: required,
            });
        }
    }

    let forest = &partition.forest;
    let owner = forest.subtree_of();
    let mut stages: Vec<StageMemory> = mapping
        .stages
        .iter()
        .map(|s| StageMemory {
            entries: vec![Entry::Null; s.len()],
        })
        .collect();

    for id in 0..forest.len() {
        let node = forest.node(id);
        let place = mapping.placements[id];
        let entry = match node.kind {
            NodeKind::Null => Entry::Null,
            NodeKind::Leaf => match &node.payload {
                Payload::NextHop(h) => Entry::Leaf(LeafValue::NextHop(*h)),
                Payload::Rules(ids) => Entry::Leaf(LeafValue::Bucket(ids.clone())),
                Payload::None => Entry::Null,
            },
            NodeKind::Internal => {
                let kids: Vec<usize> = node
                    .children
                    .iter()
                    .map(|c| c.expect("mapped trees have dense child blocks"))
                    .collect();
                let first = mapping.placements[kids[0]];
                for (cell, &k) in kids.iter().enumerate() {
                    let p = mapping.placements[k];
                    if p.stage != first.stage || p.addr != first.addr + cell {
                        return Err(PipelineError::BlockSplit { parent: id });
                    }
                }
                let direction = mapping.directions[owner[id]];
                let gap = match direction {
                    Direction::Forward => first.stage.checked_sub(place.stage),
                    Direction::Reverse => place.stage.checked_sub(first.stage),
                };
                let gap = match gap {
                    Some(g) if g >= 1 => g,
                    _ => return Err(PipelineError::BlockSplit { parent: id }),
                };
                let branch = match &node.cut {
                    Some(cut) => Branch::Cut(cut.clone()),
                    None => Branch::Bit,
                };
                Entry::Internal {
                    child_base: first.addr,
                    child_skip: gap - 1,
                    branch,
                }
            }
        };
        stages[place.stage - 1].entries[place.addr] = entry;
    }

    Ok(PipelineImage {
        stage_count: mapping.stage_count,
        stages,
        index: partition.index.clone(),
        dit: mapping.dit.clone(),
        addr_bits,
        initial_bits: partition.index.initial_bits(),
        rules: rules.to_vec(),
        bubble_tables: vec![BTreeMap::new(); mapping.stage_count],
    })
}

/// Resolves one entry against a key: either a final result or the next
/// (stage, address) hop. Shared by the static walk and the simulator.
pub(crate) fn step_entry(
    image: &PipelineImage,
    entry: &Entry,
    key: &Key,
    stage: usize,
    consumed: &mut usize,
    direction: Direction,
) -> Result<Option<u32>, (usize, usize)> {
    match entry {
        Entry::Null => Ok(None),
        Entry::Leaf(LeafValue::NextHop(h)) => Ok(Some(*h)),
        Entry::Leaf(LeafValue::Bucket(ids)) => {
            let header = match key {
                Key::FiveTuple(h) => h,
                Key::Ip(_) => return Ok(None),
            };
            Ok(ids
                .iter()
                .copied()
                .find(|&id| image.rules[id as usize].matches(header)))
        }
        Entry::Internal {
            child_base,
            child_skip,
            branch,
        } => {
            let cell = match (branch, key) {
                (Branch::Bit, Key::Ip(k)) => {
                    let bit = key_bit(*k, *consumed);
                    *consumed += 1;
                    bit
                }
                (Branch::Cut(cut), Key::FiveTuple(h)) => cut.cell_index(h),
                _ => return Ok(None),
            };
            let next_stage = match direction {
                Direction::Forward => stage + 1 + child_skip,
                Direction::Reverse => stage - 1 - child_skip,
            };
            Err((next_stage, child_base + cell))
        }
    }
}

/// Functional lookup through the image: DIT consultation followed by the
/// skip-and-read walk, with no timing model. Returns the same result the
/// simulator delivers for the key.
pub fn lookup_static(image: &PipelineImage, key: &Key) -> Option<u32> {
    let (_, dit) = route(image, key)?;
    let mut stage = entry_stage(image.stage_count, &dit);
    let mut addr = dit.addr;
    let mut consumed = image.initial_bits as usize;
    for _ in 0..=image.stage_count {
        let entry = &image.stages[stage - 1].entries[addr];
        match step_entry(image, entry, key, stage, &mut consumed, dit.direction) {
            Ok(result) => return result,
            Err((next_stage, next_addr)) => {
                stage = next_stage;
                addr = next_addr;
            }
        }
    }
    unreachable!("walk exceeded the stage count; image is corrupt")
}

/// Entry-width accounting mode for [`memory_footprint`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryBitsMode {
    /// Address-plus-distance accounting: an entry is a child pointer of
    /// `max(15, log2(largest stage))` bits plus a `max(5, log2(stages))`
    /// bit distance. Payload storage is deliberately not counted.
    Paper20,
    /// Width of this implementation's entries, including the kind tag and
    /// the widest payload present in the image.
    Actual,
}

#[derive(Debug, Clone)]
pub struct MemoryFootprint {
    pub mode: EntryBitsMode,
    pub entry_bits: u64,
    pub per_stage_bits: Vec<u64>,
    pub per_stage_bytes: Vec<u64>,
    pub total_bits: u64,
    pub total_bytes: u64,
}

fn ceil_log2(n: usize) -> u8 {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as u8
    }
}

/// Per-stage and total memory of an image under the chosen entry-width
/// accounting. Totals are always `entry_bits` times the entry count.
pub fn memory_footprint(image: &PipelineImage, mode: EntryBitsMode) -> MemoryFootprint {
    let sizes = image.stage_sizes();
    let max_entries = sizes.iter().copied().max().unwrap_or(0);
    let entry_bits: u64 = match mode {
        EntryBitsMode::Paper20 => {
            let addr = ceil_log2(max_entries).max(15) as u64;
            let dist = ceil_log2(image.stage_count).max(5) as u64;
            addr + dist
        }
        EntryBitsMode::Actual => {
            let payload_bits = image
                .stages
                .iter()
                .flat_map(|s| s.entries.iter())
                .map(|e| match e {
                    Entry::Null => 0u64,
                    Entry::Leaf(LeafValue::NextHop(_)) => 32,
                    Entry::Leaf(LeafValue::Bucket(ids)) => 32 * ids.len() as u64,
                    Entry::Internal { branch, .. } => match branch {
                        Branch::Bit => 0,
                        // field tag, partition count, lo, span per dim
                        Branch::Cut(c) => 73 * c.dims.len() as u64,
                    },
                })
                .max()
                .unwrap_or(0);
            let dist = ceil_log2(image.stage_count).max(1) as u64;
            2 + image.addr_bits as u64 + dist + payload_bits
        }
    };
    let per_stage_bits: Vec<u64> = sizes.iter().map(|&n| entry_bits * n as u64).collect();
    let per_stage_bytes: Vec<u64> = per_stage_bits.iter().map(|b| (b + 7) / 8).collect();
    let total_bits: u64 = per_stage_bits.iter().sum();
    MemoryFootprint {
        mode,
        entry_bits,
        per_stage_bits,
        per_stage_bytes,
        total_bits,
        total_bytes: (total_bits + 7) / 8,
    }
}
